//! Finite-volume discretization of the forward Kolmogorov equation
//!
//! ```text
//! d_t rho = eps d_v^2 rho - d_x (v rho) - d_v ((u + w) rho)
//! ```
//!
//! on cell averages. Both transport directions use Rusanov fluxes, the speed
//! diffusion a centered two-point flux. Faces in `x` wrap around the ring;
//! the two outer faces in `v` carry no flux at all, which is the discrete
//! form of the homogeneous Neumann condition and makes conservation exact.

use rayon::prelude::*;

use crate::basis::{GridBasis, WeightMatrices};
use crate::config::{GridSpec, ModelParams};
use crate::error::SimError;
use crate::policy::{smooth_control, smooth_disturbance};

/// Cell-averaged field on the grid, flat index `i * nv + j`.
///
/// Used both for the density itself and for its time tendency.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityField {
    pub nx: usize,
    pub nv: usize,
    pub values: Vec<f64>,
}

pub type DensityTendency = DensityField;

impl DensityField {
    pub fn zeros(grid: &GridSpec) -> Self {
        Self {
            nx: grid.nx,
            nv: grid.nv,
            values: vec![0.0; grid.n_cells()],
        }
    }

    /// Constant density with unit mass.
    pub fn uniform(grid: &GridSpec) -> Self {
        let level = 1.0 / (grid.road_length * grid.s_max);
        Self {
            nx: grid.nx,
            nv: grid.nv,
            values: vec![level; grid.n_cells()],
        }
    }

    pub fn from_fn(grid: &GridSpec, mut f: impl FnMut(f64, f64) -> f64) -> Self {
        let mut values = Vec::with_capacity(grid.n_cells());
        for i in 0..grid.nx {
            for j in 0..grid.nv {
                values.push(f(grid.x(i), grid.v(j)));
            }
        }
        Self {
            nx: grid.nx,
            nv: grid.nv,
            values,
        }
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.nv + j]
    }

    pub fn check_shape(&self, grid: &GridSpec) -> Result<(), SimError> {
        if self.nx != grid.nx || self.nv != grid.nv || self.values.len() != grid.n_cells() {
            return Err(SimError::ShapeMismatch {
                expected_nx: grid.nx,
                expected_nv: grid.nv,
                nx: self.nx,
                nv: self.nv,
            });
        }
        Ok(())
    }

    pub fn check_finite(&self, what: &'static str) -> Result<(), SimError> {
        match self.values.iter().position(|x| !x.is_finite()) {
            Some(pos) => Err(SimError::NonFinite {
                what,
                i: pos / self.nv,
                j: pos % self.nv,
            }),
            None => Ok(()),
        }
    }

    /// `self + scale * other`.
    pub fn add_scaled(&self, other: &DensityField, scale: f64) -> Self {
        Self {
            nx: self.nx,
            nv: self.nv,
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(a, b)| a + scale * b)
                .collect(),
        }
    }

    /// Scales so the discrete mass equals one.
    pub fn normalize(&mut self, grid: &GridSpec) {
        let m = mass(self, grid);
        for v in &mut self.values {
            *v /= m;
        }
    }
}

/// Discrete mass `sum rho dx dv`.
pub fn mass(rho: &DensityField, grid: &GridSpec) -> f64 {
    rho.values.iter().sum::<f64>() * grid.cell_area()
}

pub fn min_value(rho: &DensityField) -> f64 {
    rho.values.iter().copied().fold(f64::INFINITY, f64::min)
}

/// Speed-direction transport `a = u~(dV/dy2) + w~(dV/dy2)` at cell centers.
#[derive(Debug, Clone, PartialEq)]
pub struct VelocityField {
    pub nx: usize,
    pub nv: usize,
    pub values: Vec<f64>,
}

impl VelocityField {
    pub fn zeros(grid: &GridSpec) -> Self {
        Self {
            nx: grid.nx,
            nv: grid.nv,
            values: vec![0.0; grid.n_cells()],
        }
    }

    pub fn from_fn(grid: &GridSpec, f: impl Fn(f64, f64) -> f64) -> Self {
        let DensityField { nx, nv, values } = DensityField::from_fn(grid, f);
        Self { nx, nv, values }
    }

    /// Feedback acceleration of the smooth control and disturbance.
    pub fn from_weights(w: &WeightMatrices, grid: &GridSpec, params: &ModelParams) -> Self {
        Self::from_basis(w, &GridBasis::new(grid, params), grid, params)
    }

    /// As [`VelocityField::from_weights`] with precomputed basis tables.
    pub fn from_basis(
        w: &WeightMatrices,
        basis: &GridBasis,
        grid: &GridSpec,
        params: &ModelParams,
    ) -> Self {
        let mut values = vec![0.0; grid.n_cells()];
        values
            .par_chunks_mut(grid.nv)
            .enumerate()
            .for_each(|(i, row)| {
                for (j, a) in row.iter_mut().enumerate() {
                    let p2 = basis.evaluate(w, i, j).dy2;
                    *a = smooth_control(p2, params) + smooth_disturbance(p2, params);
                }
            });
        Self {
            nx: grid.nx,
            nv: grid.nv,
            values,
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, a| m.max(a.abs()))
    }
}

/// Initial congestion profile: a jam centered at `L/2` in position times a
/// smooth compactly supported bump around `0.3 s_max` in speed, normalized
/// to unit discrete mass.
pub fn init_density(grid: &GridSpec, params: &ModelParams) -> Result<DensityField, SimError> {
    let l = params.road_length;
    let center = 0.3 * params.s_max;
    let mut rho = DensityField::from_fn(grid, |x, v| {
        let z = 11.0 * (v - center);
        if z.abs() >= 1.0 {
            return 0.0;
        }
        let bump = (1.0 / (z * z - 1.0)).exp();
        let jam = (10.0 * (std::f64::consts::TAU * (x - l / 2.0) / l).cos()).exp();
        jam * bump
    });
    if rho.values.iter().all(|&r| r == 0.0) {
        return Err(SimError::EmptyInitialDensity);
    }
    rho.normalize(grid);
    Ok(rho)
}

/// Rusanov (local Lax-Friedrichs) flux `(fL + fR)/2 - s (qR - qL)/2`.
#[inline]
pub fn rusanov_flux(
    q_left: f64,
    q_right: f64,
    speed_bound: f64,
    f_left: f64,
    f_right: f64,
) -> Result<f64, SimError> {
    if speed_bound < 0.0 {
        return Err(SimError::NegativeSpeedBound(speed_bound));
    }
    Ok(rusanov(q_left, q_right, speed_bound, f_left, f_right))
}

#[inline(always)]
fn rusanov(q_left: f64, q_right: f64, s: f64, f_left: f64, f_right: f64) -> f64 {
    0.5 * (f_left + f_right) - 0.5 * s * (q_right - q_left)
}

/// Semi-discrete right-hand side `-A rho`.
pub fn fk_rhs(
    rho: &DensityField,
    vel: &VelocityField,
    grid: &GridSpec,
    params: &ModelParams,
) -> Result<DensityTendency, SimError> {
    let mut out = DensityField::zeros(grid);
    fk_rhs_into(rho, vel, grid, params, &mut out)?;
    Ok(out)
}

/// As [`fk_rhs`], writing into a caller-owned buffer.
pub fn fk_rhs_into(
    rho: &DensityField,
    vel: &VelocityField,
    grid: &GridSpec,
    params: &ModelParams,
    out: &mut DensityTendency,
) -> Result<(), SimError> {
    rho.check_shape(grid)?;
    out.check_shape(grid)?;
    if vel.nx != grid.nx || vel.nv != grid.nv {
        return Err(SimError::ShapeMismatch {
            expected_nx: grid.nx,
            expected_nv: grid.nv,
            nx: vel.nx,
            nv: vel.nv,
        });
    }
    let (nx, nv) = (grid.nx, grid.nv);
    let inv_dx = 1.0 / grid.dx;
    let inv_dv = 1.0 / grid.dv;
    let diff = params.epsilon * inv_dv;
    let q = &rho.values;
    let a = &vel.values;
    let x_flux = |ql: f64, qr: f64, v: f64| rusanov(ql, qr, v.abs(), v * ql, v * qr) * inv_dx;
    // Interior speed faces only; the boundary faces carry zero flux.
    let v_flux = |row: usize, j: usize| {
        let (ql, qr) = (q[row + j], q[row + j + 1]);
        let (al, ar) = (a[row + j], a[row + j + 1]);
        let face = 0.5 * (al + ar);
        let s = al.abs().max(ar.abs());
        (rusanov(ql, qr, s, face * ql, face * qr) - diff * (qr - ql)) * inv_dv
    };

    // Each face flux is evaluated identically by both neighbours, so the
    // per-cell gather conserves mass like a scatter over faces.
    out.values
        .par_chunks_mut(nv)
        .enumerate()
        .for_each(|(i, t)| {
            let row = i * nv;
            let left = if i == 0 { nx - 1 } else { i - 1 } * nv;
            let right = if i + 1 == nx { 0 } else { i + 1 } * nv;
            for (j, tj) in t.iter_mut().enumerate() {
                let v = grid.v(j);
                let qc = q[row + j];
                let mut d = x_flux(q[left + j], qc, v) - x_flux(qc, q[right + j], v);
                if j > 0 {
                    d += v_flux(row, j - 1);
                }
                if j + 1 < nv {
                    d -= v_flux(row, j);
                }
                *tj = d;
            }
        });

    out.check_finite("density tendency")
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn default_grid() -> (GridSpec, ModelParams) {
        let p = ModelParams::default();
        (GridSpec::new(81, 81, p.road_length, p.s_max), p)
    }

    #[test]
    fn initial_density_has_unit_mass_and_bump_support() {
        let (g, p) = default_grid();
        let rho = init_density(&g, &p).unwrap();
        assert!((mass(&rho, &g) - 1.0).abs() <= 1e-12);
        assert!(min_value(&rho) >= 0.0);
        let center = 0.3 * p.s_max;
        for i in 0..g.nx {
            for j in 0..g.nv {
                if (g.v(j) - center).abs() >= 1.0 / 11.0 {
                    assert_eq!(rho.at(i, j), 0.0);
                }
            }
        }
        let r1: Vec<f64> = (0..g.nx)
            .map(|i| (0..g.nv).map(|j| rho.at(i, j)).sum())
            .collect();
        let peak = r1
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .unwrap()
            .0;
        assert!((g.x(peak) - p.road_length / 2.0).abs() < 1e-12);
    }

    #[test]
    fn coarse_grid_misses_the_bump() {
        let p = ModelParams {
            s_max: 10.0,
            ..ModelParams::default()
        };
        // Speed cell centers 2.5 and 7.5 lie outside the support
        // |v - 3| < 1/11.
        let g = GridSpec::new(8, 2, p.road_length, p.s_max);
        assert_eq!(init_density(&g, &p), Err(SimError::EmptyInitialDensity));
    }

    #[test]
    fn rusanov_basics() {
        let v = 0.7;
        assert_eq!(
            rusanov_flux(2.0, 2.0, 1.3, v * 2.0, v * 2.0).unwrap(),
            v * 2.0
        );
        let f = rusanov_flux(3.0, 5.0, v, v * 3.0, v * 5.0).unwrap();
        assert!((f - v * 3.0).abs() < 1e-15);
        assert_eq!(rusanov_flux(1.0, 0.0, 1.0, 0.0, 0.0).unwrap(), 0.5);
        assert!(rusanov_flux(1.0, 0.0, -1.0, 0.0, 0.0).is_err());
    }

    #[test]
    fn uniform_state_is_steady() {
        let (g, p) = default_grid();
        let rho = DensityField::uniform(&g);
        let t = fk_rhs(&rho, &VelocityField::zeros(&g), &g, &p).unwrap();
        assert!(
            t.values.iter().all(|&x| x.abs() < 1e-12),
            "{:?}",
            min_value(&t)
        );
    }

    #[test]
    fn tendency_conserves_mass() {
        let (g, p) = default_grid();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..5 {
            let mut rho = DensityField::from_fn(&g, |_, _| rng.random_range(0.0..1.0));
            rho.normalize(&g);
            let bound = p.u_max + p.w_max;
            let vel = VelocityField {
                nx: g.nx,
                nv: g.nv,
                values: (0..g.n_cells())
                    .map(|_| rng.random_range(-bound..bound))
                    .collect(),
            };
            let t = fk_rhs(&rho, &vel, &g, &p).unwrap();
            assert!(mass(&t, &g).abs() <= 1e-13, "{}", mass(&t, &g));
        }
    }

    #[test]
    fn rejects_shape_mismatch_and_nan() {
        let (g, p) = default_grid();
        let small = GridSpec::new(9, 9, p.road_length, p.s_max);
        let rho = DensityField::uniform(&small);
        assert!(matches!(
            fk_rhs(&rho, &VelocityField::zeros(&g), &g, &p),
            Err(SimError::ShapeMismatch { .. })
        ));
        let mut rho = DensityField::uniform(&g);
        rho.values[g.idx(3, 4)] = f64::NAN;
        assert!(matches!(
            fk_rhs(&rho, &VelocityField::zeros(&g), &g, &p),
            Err(SimError::NonFinite { .. })
        ));
    }

    #[test]
    fn zero_weights_give_zero_speed_transport() {
        let (g, p) = default_grid();
        let vel = VelocityField::from_weights(&WeightMatrices::zeros(2), &g, &p);
        assert_eq!(vel.max_abs(), 0.0);
        let vel = VelocityField::from_weights(&WeightMatrices::filled(2, 0.1), &g, &p);
        assert!(vel.max_abs() <= p.u_max + p.w_max);
        assert!(vel.max_abs() > 0.0);
    }
}
