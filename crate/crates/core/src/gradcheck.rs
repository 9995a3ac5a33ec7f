//! Central finite-difference audit of the analytic weight gradient.

use std::fmt;

use rand::Rng;

use crate::basis::{BasisIndex, Branch, WeightMatrices};
use crate::config::GridSpec;
use crate::error::SimError;
use crate::fk::DensityField;
use crate::residual::ResidualEvaluator;

pub const DEFAULT_STEP: f64 = 1e-6;
pub const DEFAULT_REL_TOL: f64 = 1e-4;
/// Bound on both sides for the sine entries with `i = 0`, which are zero.
pub const DEFAULT_ZERO_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckEntry {
    pub branch: Branch,
    pub idx: BasisIndex,
    pub analytic: f64,
    pub finite_difference: f64,
    pub rel_err: f64,
    pub passed: bool,
}

impl fmt::Display for GradCheckEntry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let m = match self.branch {
            Branch::Sine => 'a',
            Branch::Cosine => 'b',
        };
        write!(
            f,
            "{m}_{}{} analytic={:e} fd={:e} rel_err={:e} {}",
            self.idx.i,
            self.idx.j,
            self.analytic,
            self.finite_difference,
            self.rel_err,
            if self.passed { "ok" } else { "FAIL" }
        )
    }
}

/// Compares every gradient entry at one state against
/// `(E(c + h) - E(c - h)) / 2h`.
pub fn check_state(
    ev: &ResidualEvaluator,
    w: &WeightMatrices,
    rho: &DensityField,
    h: f64,
    rel_tol: f64,
    zero_tol: f64,
) -> Result<Vec<GradCheckEntry>, SimError> {
    let grad = ev.weight_gradients(w, rho)?;
    let mut out = Vec::with_capacity(2 * w.k() * w.k());
    for branch in [Branch::Sine, Branch::Cosine] {
        for idx in BasisIndex::all(w.k()) {
            let c = w.get(branch, idx);
            let mut up = w.clone();
            up.set(branch, idx, c + h);
            let mut dn = w.clone();
            dn.set(branch, idx, c - h);
            let fd = (ev.hjb_error(&up, rho)? - ev.hjb_error(&dn, rho)?) / (2.0 * h);
            let an = grad.get(branch, idx);
            let scale = an.abs().max(fd.abs());
            let rel_err = if scale == 0.0 {
                0.0
            } else {
                (an - fd).abs() / scale
            };
            let passed = if branch == Branch::Sine && idx.i == 0 {
                an.abs() <= zero_tol && fd.abs() <= zero_tol
            } else {
                rel_err <= rel_tol
            };
            out.push(GradCheckEntry {
                branch,
                idx,
                analytic: an,
                finite_difference: fd,
                rel_err,
                passed,
            });
        }
    }
    Ok(out)
}

/// Weights uniform in `[-scale, scale]` and a positive, unit-mass density
/// with independent uniform cell values.
pub fn random_state(
    rng: &mut impl Rng,
    k: usize,
    grid: &GridSpec,
    scale: f64,
) -> (WeightMatrices, DensityField) {
    let a: Vec<f64> = (0..k * k)
        .map(|_| rng.random_range(-scale..=scale))
        .collect();
    let b: Vec<f64> = (0..k * k)
        .map(|_| rng.random_range(-scale..=scale))
        .collect();
    let mut rho = DensityField::from_fn(grid, |_, _| rng.random_range(0.05..1.0));
    rho.normalize(grid);
    (WeightMatrices::from_rows(k, &a, &b), rho)
}

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub states: usize,
    pub entries: Vec<GradCheckEntry>,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.entries.iter().all(|e| e.passed)
    }

    /// Largest relative error over the entries checked relatively.
    pub fn max_rel_err(&self) -> f64 {
        self.entries
            .iter()
            .filter(|e| !(e.branch == Branch::Sine && e.idx.i == 0))
            .map(|e| e.rel_err)
            .fold(0.0, f64::max)
    }
}

pub fn run_suite(
    ev: &ResidualEvaluator,
    k: usize,
    states: usize,
    weight_scale: f64,
    rng: &mut impl Rng,
) -> Result<GradCheckReport, SimError> {
    let mut entries = Vec::new();
    for _ in 0..states {
        let (w, rho) = random_state(rng, k, ev.grid(), weight_scale);
        entries.extend(check_state(
            ev,
            &w,
            &rho,
            DEFAULT_STEP,
            DEFAULT_REL_TOL,
            DEFAULT_ZERO_TOL,
        )?);
    }
    Ok(GradCheckReport { states, entries })
}
