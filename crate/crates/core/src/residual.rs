//! HJB-Isaacs residual of the surrogate value function and its weight gradient.
//!
//! Per cell center the residual is
//!
//! ```text
//! f = alpha V + H(y, u~(d2V), w~(d2V), Phi[rho](y1), grad V) + eps d22V
//! ```
//!
//! and the error is its squared L2 norm by midpoint quadrature. The gradient
//! is assembled from closed-form partials: differentiating `f` with respect
//! to a weight `c` gives
//!
//! ```text
//! df/dc = alpha dV/dc
//!       + (H_u du~/dp2 + H_w dw~/dp2 + u~ + w~) d(d2V)/dc
//!       + y2 d(d1V)/dc
//!       + eps d(d22V)/dc
//! ```
//!
//! with `H_u = u~ + d2V` and `H_w = -w~/gamma^2 + d2V`. The `u~ + w~` and
//! `y2` factors are `grad_p H = (y2, u + w)`.

use rayon::prelude::*;

use crate::basis::{BasisIndex, Branch, GridBasis, WeightMatrices};
use crate::config::{GridSpec, ModelParams};
use crate::error::SimError;
use crate::fk::DensityField;
use crate::policy::{
    interaction_field, pre_hamiltonian, smooth_control, smooth_derivatives, smooth_disturbance,
    Costate, InteractionField,
};

/// Residual `f` at every cell center, flat index `i * nv + j`.
#[derive(Debug, Clone, PartialEq)]
pub struct ResidualField {
    pub nx: usize,
    pub nv: usize,
    pub values: Vec<f64>,
}

impl ResidualField {
    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.nv + j]
    }

    /// `sum f^2 dx dv`.
    pub fn l2_sq(&self, grid: &GridSpec) -> f64 {
        self.values.iter().map(|f| f * f).sum::<f64>() * grid.cell_area()
    }
}

/// `(grad_A E, grad_B E)`, row-major `K x K`.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightGradient {
    pub k: usize,
    pub ga: Vec<f64>,
    pub gb: Vec<f64>,
}

impl WeightGradient {
    pub fn get(&self, branch: Branch, idx: BasisIndex) -> f64 {
        let slot = idx.i * self.k + idx.j;
        match branch {
            Branch::Sine => self.ga[slot],
            Branch::Cosine => self.gb[slot],
        }
    }
}

/// Per-cell quantities shared by the residual and every gradient entry.
#[derive(Debug, Clone, Copy)]
struct CellTerms {
    f: f64,
    y2: f64,
    /// Coefficient of `d(d2V)/dc` in `df/dc`.
    speed_slope: f64,
}

struct RowSums {
    err: f64,
    ga: Vec<f64>,
    gb: Vec<f64>,
}

/// Cached geometry for repeated residual and gradient evaluations on one grid.
#[derive(Debug, Clone)]
pub struct ResidualEvaluator {
    grid: GridSpec,
    params: ModelParams,
    basis: GridBasis,
}

impl ResidualEvaluator {
    pub fn new(grid: &GridSpec, params: &ModelParams) -> Self {
        Self {
            grid: grid.clone(),
            params: params.clone(),
            basis: GridBasis::new(grid, params),
        }
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn basis(&self) -> &GridBasis {
        &self.basis
    }

    fn check_inputs(&self, w: &WeightMatrices, rho: &DensityField) -> Result<(), SimError> {
        w.check_order(&self.params)?;
        w.check_finite()?;
        rho.check_shape(&self.grid)?;
        rho.check_finite("density")
    }

    #[inline]
    fn cell(&self, w: &WeightMatrices, phi: &InteractionField, i: usize, j: usize) -> CellTerms {
        let p = &self.params;
        let y = (self.grid.x(i), self.grid.v(j));
        let d = self.basis.evaluate(w, i, j);
        let p2 = d.dy2;
        let u = smooth_control(p2, p);
        let wd = smooth_disturbance(p2, p);
        let h = pre_hamiltonian(y, u, wd, phi.at(i), Costate::new(d.dy1, p2), p);
        let f = p.alpha * d.value + h + p.epsilon * d.d2y2;
        let (du, dw) = smooth_derivatives(p2, p);
        let h_u = u + p2;
        let h_w = -wd / p.gamma_sq() + p2;
        CellTerms {
            f,
            y2: y.1,
            speed_slope: h_u * du + h_w * dw + (u + wd),
        }
    }

    pub fn residual_field(
        &self,
        w: &WeightMatrices,
        rho: &DensityField,
    ) -> Result<ResidualField, SimError> {
        self.check_inputs(w, rho)?;
        let phi = interaction_field(rho, &self.grid, &self.params)?;
        let (nx, nv) = (self.grid.nx, self.grid.nv);
        let mut values = vec![0.0; nx * nv];
        values.par_chunks_mut(nv).enumerate().for_each(|(i, row)| {
            for (j, f) in row.iter_mut().enumerate() {
                *f = self.cell(w, &phi, i, j).f;
            }
        });
        let out = ResidualField { nx, nv, values };
        if let Some(pos) = out.values.iter().position(|f| !f.is_finite()) {
            return Err(SimError::NonFinite {
                what: "residual",
                i: pos / nv,
                j: pos % nv,
            });
        }
        Ok(out)
    }

    pub fn hjb_error(&self, w: &WeightMatrices, rho: &DensityField) -> Result<f64, SimError> {
        Ok(self.residual_field(w, rho)?.l2_sq(&self.grid))
    }

    /// Error and gradient in one pass over the cells.
    pub fn error_and_gradient(
        &self,
        w: &WeightMatrices,
        rho: &DensityField,
    ) -> Result<(f64, WeightGradient), SimError> {
        self.check_inputs(w, rho)?;
        let p = &self.params;
        let k = w.k();
        let phi = interaction_field(rho, &self.grid, p)?;
        // Rows are reduced in parallel and then summed in row order, so the
        // result does not depend on the thread count.
        let rows: Vec<RowSums> = (0..self.grid.nx)
            .into_par_iter()
            .map(|i| self.row_sums(w, &phi, i))
            .collect::<Result<_, _>>()?;
        let mut ga = vec![0.0; k * k];
        let mut gb = vec![0.0; k * k];
        let mut err = 0.0;
        for r in &rows {
            err += r.err;
            for (g, x) in ga.iter_mut().zip(&r.ga) {
                *g += x;
            }
            for (g, x) in gb.iter_mut().zip(&r.gb) {
                *g += x;
            }
        }
        let area = self.grid.cell_area();
        for g in ga.iter_mut().chain(gb.iter_mut()) {
            *g *= 2.0 * area;
        }
        Ok((err * area, WeightGradient { k, ga, gb }))
    }

    fn row_sums(
        &self,
        w: &WeightMatrices,
        phi: &InteractionField,
        i: usize,
    ) -> Result<RowSums, SimError> {
        let p = &self.params;
        let k = w.k();
        let mut out = RowSums {
            err: 0.0,
            ga: vec![0.0; k * k],
            gb: vec![0.0; k * k],
        };
        for j in 0..self.grid.nv {
            let c = self.cell(w, phi, i, j);
            if !c.f.is_finite() {
                return Err(SimError::NonFinite {
                    what: "residual",
                    i,
                    j,
                });
            }
            out.err += c.f * c.f;
            if c.f == 0.0 {
                continue;
            }
            for idx in BasisIndex::all(k) {
                let slot = idx.i * k + idx.j;
                for (branch, g) in [(Branch::Sine, &mut out.ga), (Branch::Cosine, &mut out.gb)] {
                    let d = self.basis.partials(i, j, idx, branch);
                    let df = p.alpha * d.value
                        + c.speed_slope * d.dy2
                        + c.y2 * d.grad_y.0
                        + p.epsilon * d.d2y2;
                    g[slot] += c.f * df;
                }
            }
        }
        Ok(out)
    }

    pub fn weight_gradients(
        &self,
        w: &WeightMatrices,
        rho: &DensityField,
    ) -> Result<WeightGradient, SimError> {
        Ok(self.error_and_gradient(w, rho)?.1)
    }
}

pub fn residual_field(
    w: &WeightMatrices,
    rho: &DensityField,
    grid: &GridSpec,
    params: &ModelParams,
) -> Result<ResidualField, SimError> {
    ResidualEvaluator::new(grid, params).residual_field(w, rho)
}

pub fn hjb_error(
    w: &WeightMatrices,
    rho: &DensityField,
    grid: &GridSpec,
    params: &ModelParams,
) -> Result<f64, SimError> {
    ResidualEvaluator::new(grid, params).hjb_error(w, rho)
}

pub fn weight_gradients(
    w: &WeightMatrices,
    rho: &DensityField,
    grid: &GridSpec,
    params: &ModelParams,
) -> Result<WeightGradient, SimError> {
    ResidualEvaluator::new(grid, params).weight_gradients(w, rho)
}
