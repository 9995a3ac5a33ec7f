//! Running cost, pre-Hamiltonian and the control/disturbance policies.
//!
//! The pre-Hamiltonian is
//!
//! ```text
//! H(y, u, w, p) = u^2/2 - w^2/(2 gamma^2) + (Phi(y1) - 1/beta) y2 + p1 y2 + p2 (u + w)
//! ```
//!
//! It is convex in `u`, concave in `w` and has no `u w` cross term, so the
//! inner maximizer over `w` does not depend on `u` and both optimizers are
//! functions of `p2` alone.

use std::f64::consts::TAU;

use crate::config::{GridSpec, ModelParams};
use crate::error::SimError;
use crate::fk::DensityField;

/// Surrogate for `grad_y V`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Costate {
    pub p1: f64,
    pub p2: f64,
}

impl Costate {
    pub fn new(p1: f64, p2: f64) -> Self {
        Self { p1, p2 }
    }
}

/// Exact minimizer over `|u| <= u_max`: `-p2` clipped to the bounds.
pub fn ramp_control(p2: f64, params: &ModelParams) -> f64 {
    (-p2).clamp(-params.u_max, params.u_max)
}

/// Exact maximizer over `|w| <= w_max`: `gamma^2 p2` clipped.
pub fn ramp_disturbance(p2: f64, params: &ModelParams) -> f64 {
    (params.gamma_sq() * p2).clamp(-params.w_max, params.w_max)
}

/// Smooth feasible control `-u_max tanh(p2)`.
pub fn smooth_control(p2: f64, params: &ModelParams) -> f64 {
    -params.u_max * p2.tanh()
}

/// Smooth feasible disturbance `w_max tanh(gamma^2 p2)`.
pub fn smooth_disturbance(p2: f64, params: &ModelParams) -> f64 {
    params.w_max * (params.gamma_sq() * p2).tanh()
}

#[inline]
fn sech_sq(x: f64) -> f64 {
    // 1 - tanh^2 loses everything past |x| ~ 19; the cosh form decays to 0.
    let c = x.cosh();
    1.0 / (c * c)
}

/// `(d u~/d p2, d w~/d p2)`.
pub fn smooth_derivatives(p2: f64, params: &ModelParams) -> (f64, f64) {
    let g2 = params.gamma_sq();
    (
        -params.u_max * sech_sq(p2),
        g2 * params.w_max * sech_sq(g2 * p2),
    )
}

/// `Phi[rho](x_i) = sum phi(x_i, eta) rho dx dv` per road cell, with the
/// sinusoidal kernel `phi(y1, eta1) = sin(2 pi (y1 - eta1) / L)`.
#[derive(Debug, Clone, PartialEq)]
pub struct InteractionField {
    pub values: Vec<f64>,
    /// Time stamp of the density the field was computed from.
    pub t: f64,
}

impl InteractionField {
    pub fn at(&self, i: usize) -> f64 {
        self.values[i]
    }
}

/// Midpoint quadrature of the interaction term, evaluated through
/// `sin(a - b) = sin a cos b - cos a sin b`: two global moments of the density,
/// then one combination per road cell.
pub fn interaction_field(
    rho: &DensityField,
    grid: &GridSpec,
    params: &ModelParams,
) -> Result<InteractionField, SimError> {
    rho.check_shape(grid)?;
    let l = params.road_length;
    let area = grid.cell_area();
    let mut c = 0.0;
    let mut s = 0.0;
    let mut phase = Vec::with_capacity(grid.nx);
    for i in 0..grid.nx {
        let (sx, cx) = (TAU * grid.x(i) / l).sin_cos();
        phase.push((sx, cx));
        let column: f64 = rho.values[i * grid.nv..(i + 1) * grid.nv].iter().sum();
        c += cx * column;
        s += sx * column;
    }
    c *= area;
    s *= area;
    Ok(InteractionField {
        values: phase.iter().map(|&(sx, cx)| sx * c - cx * s).collect(),
        t: 0.0,
    })
}

/// `u^2/2 - w^2/(2 gamma^2) + (Phi - 1/beta) y2`.
pub fn running_cost(y: (f64, f64), u: f64, w: f64, phi: f64, params: &ModelParams) -> f64 {
    0.5 * u * u - w * w / (2.0 * params.gamma_sq()) + (phi - 1.0 / params.beta) * y.1
}

/// Running cost plus `p . (y2, u + w)`.
pub fn pre_hamiltonian(
    y: (f64, f64),
    u: f64,
    w: f64,
    phi: f64,
    costate: Costate,
    params: &ModelParams,
) -> f64 {
    running_cost(y, u, w, phi, params) + costate.p1 * y.1 + costate.p2 * (u + w)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn p() -> ModelParams {
        ModelParams::default()
    }

    #[test]
    fn ramp_control_branches() {
        let p = p();
        assert_eq!(ramp_control(0.0, &p), 0.0);
        assert_eq!(ramp_control(2.0 * p.u_max, &p), -p.u_max);
        assert_eq!(ramp_control(-2.0 * p.u_max, &p), p.u_max);
        assert_eq!(ramp_control(p.u_max / 2.0, &p), -p.u_max / 2.0);
    }

    #[test]
    fn ramp_disturbance_branches() {
        let p = p();
        assert_eq!(ramp_disturbance(0.0, &p), 0.0);
        let half = ramp_disturbance(p.w_max / (2.0 * p.gamma_sq()), &p);
        assert!((half - p.w_max / 2.0).abs() < 1e-18);
        assert_eq!(ramp_disturbance(p.w_max, &p), p.w_max);
        assert_eq!(ramp_disturbance(-p.w_max, &p), -p.w_max);
    }

    #[test]
    fn smooth_policies() {
        let p = p();
        assert_eq!(smooth_control(0.0, &p), 0.0);
        assert_eq!(smooth_disturbance(0.0, &p), 0.0);
        // -u_max tanh(1) with u_max = pi/60.
        let u = smooth_control(1.0, &p);
        assert!((u - (-0.039_876)).abs() < 1e-5, "{u}");
        for p2 in [-1e3, 1e3] {
            assert!(smooth_control(p2, &p).abs() <= p.u_max);
            assert!(smooth_disturbance(p2, &p).abs() <= p.w_max);
        }
        // tanh(1000) rounds to 1 in f64; strictness holds wherever tanh < 1.
        assert!(smooth_control(10.0, &p).abs() < p.u_max);
    }

    #[test]
    fn smooth_derivative_values() {
        let p = p();
        let (du, dw) = smooth_derivatives(0.0, &p);
        assert_eq!(du, -p.u_max);
        assert_eq!(dw, p.gamma_sq() * p.w_max);
        for p2 in [-50.0, 50.0] {
            let (du, dw) = smooth_derivatives(p2, &p);
            assert!(du.abs() <= 1e-20 && dw.abs() <= 1e-20, "{du} {dw}");
        }
    }

    #[test]
    fn smooth_derivatives_match_finite_differences() {
        let p = p();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let h = 1e-7;
        for _ in 0..200 {
            // keep gamma^2 p2 in the range where sech^2 is not vanishingly small
            let p2: f64 = rng.random_range(-0.05..0.05);
            let (du, dw) = smooth_derivatives(p2, &p);
            let fu = (smooth_control(p2 + h, &p) - smooth_control(p2 - h, &p)) / (2.0 * h);
            let fw = (smooth_disturbance(p2 + h, &p) - smooth_disturbance(p2 - h, &p)) / (2.0 * h);
            assert!((du - fu).abs() <= 1e-6 * du.abs(), "{du} {fu}");
            assert!((dw - fw).abs() <= 1e-6 * dw.abs(), "{p2}: {dw} {fw}");
        }
    }

    #[test]
    fn monotone_and_bounded() {
        let p = p();
        let mut prev = (
            f64::INFINITY,
            f64::INFINITY,
            f64::NEG_INFINITY,
            f64::NEG_INFINITY,
        );
        for n in -400..=400 {
            let p2 = n as f64 * 0.005;
            let cur = (
                ramp_control(p2, &p),
                smooth_control(p2, &p),
                ramp_disturbance(p2, &p),
                smooth_disturbance(p2, &p),
            );
            assert!(cur.0 <= prev.0 && cur.1 <= prev.1);
            assert!(cur.2 >= prev.2 && cur.3 >= prev.3);
            assert!(cur.0.abs() <= p.u_max && cur.1.abs() <= p.u_max);
            assert!(cur.2.abs() <= p.w_max && cur.3.abs() <= p.w_max);
            prev = cur;
        }
    }

    fn brute_interaction(rho: &DensityField, g: &GridSpec, p: &ModelParams) -> Vec<f64> {
        (0..g.nx)
            .map(|i| {
                let mut acc = 0.0;
                for k in 0..g.nx {
                    for j in 0..g.nv {
                        let phi = (TAU * (g.x(i) - g.x(k)) / p.road_length).sin();
                        acc += phi * rho.at(k, j) * g.dx * g.dv;
                    }
                }
                acc
            })
            .collect()
    }

    #[test]
    fn interaction_matches_double_sum() {
        let p = p();
        let g = GridSpec::new(16, 16, p.road_length, p.s_max);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut rho = DensityField::from_fn(&g, |_, _| rng.random_range(0.0..1.0));
        rho.normalize(&g);
        let fast = interaction_field(&rho, &g, &p).unwrap();
        for (a, b) in fast.values.iter().zip(brute_interaction(&rho, &g, &p)) {
            assert!((a - b).abs() <= 1e-12, "{a} vs {b}");
        }
        assert!(fast.values.iter().all(|v| v.abs() <= 1.0));
    }

    #[test]
    fn uniform_density_has_no_interaction() {
        let p = p();
        let g = GridSpec::new(81, 81, p.road_length, p.s_max);
        let f = interaction_field(&DensityField::uniform(&g), &g, &p).unwrap();
        assert!(f.values.iter().all(|v| v.abs() < 1e-14));
    }

    #[test]
    fn single_cell_density() {
        let p = p();
        let g = GridSpec::new(16, 8, p.road_length, p.s_max);
        let mut rho = DensityField::zeros(&g);
        // mass at x_2; evaluate a quarter period downstream at x_6
        rho.values[g.idx(2, 3)] = 1.0 / g.cell_area();
        let f = interaction_field(&rho, &g, &p).unwrap();
        assert!((f.at(6) - 1.0).abs() < 1e-14);
    }

    #[test]
    fn interaction_is_linear() {
        let p = p();
        let g = GridSpec::new(12, 10, p.road_length, p.s_max);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let r1 = DensityField::from_fn(&g, |_, _| rng.random_range(0.0..1.0));
        let r2 = DensityField::from_fn(&g, |_, _| rng.random_range(0.0..1.0));
        let sum = r1.add_scaled(&r2, 2.5);
        let f1 = interaction_field(&r1, &g, &p).unwrap();
        let f2 = interaction_field(&r2, &g, &p).unwrap();
        let fs = interaction_field(&sum, &g, &p).unwrap();
        for i in 0..g.nx {
            assert!((fs.at(i) - f1.at(i) - 2.5 * f2.at(i)).abs() < 1e-12);
        }
    }

    #[test]
    fn interaction_rejects_wrong_shape() {
        let p = p();
        let g = GridSpec::new(12, 10, p.road_length, p.s_max);
        let other = GridSpec::new(10, 10, p.road_length, p.s_max);
        assert!(interaction_field(&DensityField::uniform(&other), &g, &p).is_err());
    }

    #[test]
    fn running_cost_values() {
        let p = p();
        assert_eq!(running_cost((1.0, 0.2), 0.0, 0.0, 1.0 / p.beta, &p), 0.0);
        let c = running_cost((0.0, p.s_max), p.u_max, 0.0, 0.0, &p);
        assert!((c - (-0.155_709)).abs() < 1e-5, "{c}");
        let mut last = f64::INFINITY;
        for n in 0..10 {
            let c = running_cost((0.0, 0.1), 0.0, n as f64 * 0.003, 0.2, &p);
            assert!(c <= last);
            last = c;
        }
    }

    #[test]
    fn pre_hamiltonian_values() {
        let p = p();
        let y = (0.4, 0.2);
        let zero = Costate::new(0.0, 0.0);
        assert_eq!(
            pre_hamiltonian(y, 0.01, 0.002, 0.3, zero, &p),
            running_cost(y, 0.01, 0.002, 0.3, &p)
        );
        let h = pre_hamiltonian(
            (0.0, p.s_max),
            0.0,
            0.0,
            1.0 / p.beta,
            Costate::new(1.0, 0.0),
            &p,
        );
        assert_eq!(h, p.s_max);
    }

    #[test]
    fn smooth_pair_is_suboptimal_against_the_exact_opponent() {
        let p = p();
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..500 {
            let y = (
                rng.random_range(0.0..p.road_length),
                rng.random_range(0.0..p.s_max),
            );
            let phi = rng.random_range(-1.0..1.0);
            let c = Costate::new(rng.random_range(-1.0..1.0), rng.random_range(-0.2..0.2));
            let h = |u, w| pre_hamiltonian(y, u, w, phi, c, &p);
            let us = ramp_control(c.p2, &p);
            let ws = ramp_disturbance(c.p2, &p);
            let ut = smooth_control(c.p2, &p);
            let wt = smooth_disturbance(c.p2, &p);
            let value = h(us, ws);
            // The smooth control concedes at least the game value to the
            // worst case; the smooth disturbance extracts at most it.
            assert!(h(ut, ws) >= value - 1e-15);
            assert!(h(us, wt) <= value + 1e-15);
        }
    }
}
