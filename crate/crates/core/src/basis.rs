//! Truncated Fourier value function
//!
//! ```text
//! V(y) = sum_{i,j < K} (a_ij sin(2 pi i y1 / L) + b_ij cos(2 pi i y1 / L)) cos(2 pi j y2 / s_max)
//! ```
//!
//! Every term is periodic in `y1` and has zero slope at `y2 = 0` and
//! `y2 = s_max`, so the surrogate satisfies the boundary conditions of the
//! value function by construction.

use std::f64::consts::TAU;

use crate::config::{GridSpec, ModelParams};
use crate::error::SimError;

/// Sine (`A`) and cosine (`B`) coefficient matrices, row-major `K x K`.
///
/// Row `i` is the road harmonic, column `j` the speed harmonic. The sine
/// row `i = 0` multiplies `sin(0)` and never influences anything; it is kept
/// so both matrices share one shape.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightMatrices {
    k: usize,
    a: Vec<f64>,
    b: Vec<f64>,
}

impl WeightMatrices {
    pub fn zeros(k: usize) -> Self {
        Self::filled(k, 0.0)
    }

    pub fn filled(k: usize, value: f64) -> Self {
        Self {
            k,
            a: vec![value; k * k],
            b: vec![value; k * k],
        }
    }

    /// Builds from row-major slices of length `k * k`.
    pub fn from_rows(k: usize, a: &[f64], b: &[f64]) -> Self {
        assert_eq!(a.len(), k * k, "A must have k*k entries");
        assert_eq!(b.len(), k * k, "B must have k*k entries");
        Self {
            k,
            a: a.to_vec(),
            b: b.to_vec(),
        }
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn a(&self, i: usize, j: usize) -> f64 {
        self.a[i * self.k + j]
    }

    pub fn b(&self, i: usize, j: usize) -> f64 {
        self.b[i * self.k + j]
    }

    pub fn get(&self, branch: Branch, idx: BasisIndex) -> f64 {
        match branch {
            Branch::Sine => self.a(idx.i, idx.j),
            Branch::Cosine => self.b(idx.i, idx.j),
        }
    }

    pub fn set(&mut self, branch: Branch, idx: BasisIndex, value: f64) {
        let slot = idx.i * self.k + idx.j;
        match branch {
            Branch::Sine => self.a[slot] = value,
            Branch::Cosine => self.b[slot] = value,
        }
    }

    pub fn a_slice(&self) -> &[f64] {
        &self.a
    }

    pub fn b_slice(&self) -> &[f64] {
        &self.b
    }

    pub fn a_mut(&mut self) -> &mut [f64] {
        &mut self.a
    }

    pub fn b_mut(&mut self) -> &mut [f64] {
        &mut self.b
    }

    /// `self + scale * (da, db)`.
    pub fn add_scaled(&self, da: &[f64], db: &[f64], scale: f64) -> Self {
        let step = |w: &[f64], d: &[f64]| w.iter().zip(d).map(|(w, d)| w + scale * d).collect();
        Self {
            k: self.k,
            a: step(&self.a, da),
            b: step(&self.b, db),
        }
    }

    pub fn check_finite(&self) -> Result<(), SimError> {
        for (what, m) in [("A", &self.a), ("B", &self.b)] {
            if let Some(pos) = m.iter().position(|x| !x.is_finite()) {
                return Err(SimError::NonFiniteWeight {
                    what,
                    i: pos / self.k,
                    j: pos % self.k,
                });
            }
        }
        Ok(())
    }

    pub fn check_order(&self, params: &ModelParams) -> Result<(), SimError> {
        if self.k != params.k {
            return Err(SimError::BasisOrder {
                expected: params.k,
                got: self.k,
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct BasisIndex {
    pub i: usize,
    pub j: usize,
}

impl BasisIndex {
    pub fn new(i: usize, j: usize) -> Self {
        Self { i, j }
    }

    /// All `K^2` indices in row-major order.
    pub fn all(k: usize) -> impl Iterator<Item = BasisIndex> {
        (0..k).flat_map(move |i| (0..k).map(move |j| BasisIndex { i, j }))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Branch {
    /// Coefficients `a_ij` of `sin(2 pi i y1 / L)`.
    Sine,
    /// Coefficients `b_ij` of `cos(2 pi i y1 / L)`.
    Cosine,
}

/// `sin(2 pi * frac)` and `cos(2 pi * frac)` of a phase reduced to `[0, 1)`.
#[inline]
fn unit_phase(turns: f64) -> (f64, f64) {
    let frac = turns.rem_euclid(1.0);
    if frac == 0.0 {
        (0.0, 1.0)
    } else {
        (TAU * frac).sin_cos()
    }
}

/// `sin`, `cos` and angular frequency of every harmonic along one axis,
/// at one coordinate.
#[derive(Debug, Clone)]
pub struct AxisFactors {
    sin: Vec<f64>,
    cos: Vec<f64>,
    freq: Vec<f64>,
}

impl AxisFactors {
    /// Factors of `coord` on an axis of the given period.
    pub fn new(coord: f64, period: f64, k: usize) -> Self {
        let mut f = Self {
            sin: Vec::with_capacity(k),
            cos: Vec::with_capacity(k),
            freq: Vec::with_capacity(k),
        };
        for n in 0..k {
            let nf = n as f64;
            let (s, c) = unit_phase(nf * coord / period);
            f.sin.push(s);
            f.cos.push(c);
            f.freq.push(TAU * nf / period);
        }
        f
    }

    /// The road factor of the selected branch and its derivative.
    #[inline]
    fn road(&self, branch: Branch, i: usize) -> (f64, f64) {
        match branch {
            Branch::Sine => (self.sin[i], self.cos[i] * self.freq[i]),
            Branch::Cosine => (self.cos[i], -self.sin[i] * self.freq[i]),
        }
    }
}

fn evaluate_factors(
    road: &AxisFactors,
    speed: &AxisFactors,
    w: &WeightMatrices,
) -> ValueDerivatives {
    let k = w.k();
    let mut out = ValueDerivatives::default();
    for i in 0..k {
        let sx = road.sin[i];
        let cx = road.cos[i];
        let fx = road.freq[i];
        for j in 0..k {
            let (a, b) = (w.a(i, j), w.b(i, j));
            let r = a * sx + b * cx;
            let r_dx = (a * cx - b * sx) * fx;
            let cv = speed.cos[j];
            let fv = speed.freq[j];
            out.value += r * cv;
            out.dy1 += r_dx * cv;
            out.dy2 -= r * speed.sin[j] * fv;
            out.d2y2 -= r * cv * fv * fv;
        }
    }
    out
}

fn partials_factors(
    road: &AxisFactors,
    speed: &AxisFactors,
    idx: BasisIndex,
    branch: Branch,
) -> PartialSet {
    let (r, r_dx) = road.road(branch, idx.i);
    let cv = speed.cos[idx.j];
    let fv = speed.freq[idx.j];
    let dy2 = -r * speed.sin[idx.j] * fv;
    PartialSet {
        value: r * cv,
        dy2,
        grad_y: (r_dx * cv, dy2),
        d2y2: -r * cv * fv * fv,
    }
}

/// Basis factors at one point of `Y`. The road coordinate is wrapped onto
/// `[0, L)` and every phase is reduced before the trig call, so periodicity
/// and the zero edge slope hold to rounding.
#[derive(Debug, Clone)]
pub struct BasisPoint {
    pub y1: f64,
    pub y2: f64,
    road: AxisFactors,
    speed: AxisFactors,
}

impl BasisPoint {
    pub fn new(y1: f64, y2: f64, params: &ModelParams) -> Self {
        let y1 = y1.rem_euclid(params.road_length);
        Self {
            y1,
            y2,
            road: AxisFactors::new(y1, params.road_length, params.k),
            speed: AxisFactors::new(y2, params.s_max, params.k),
        }
    }

    /// Value and all derivatives of the surrogate.
    pub fn evaluate(&self, w: &WeightMatrices) -> ValueDerivatives {
        evaluate_factors(&self.road, &self.speed, w)
    }

    /// Partials of `V`, `dV/dy2`, `grad V` and `d2V/dy2^2` with respect to
    /// one weight. The surrogate is linear in the weights, so these are the
    /// basis function and its derivatives.
    pub fn partials(&self, idx: BasisIndex, branch: Branch) -> PartialSet {
        partials_factors(&self.road, &self.speed, idx, branch)
    }
}

/// Basis factors at every cell center of a grid. The basis is a product of
/// a road factor and a speed factor, so one table per axis suffices.
#[derive(Debug, Clone)]
pub struct GridBasis {
    road: Vec<AxisFactors>,
    speed: Vec<AxisFactors>,
}

impl GridBasis {
    pub fn new(grid: &GridSpec, params: &ModelParams) -> Self {
        Self {
            road: (0..grid.nx)
                .map(|i| AxisFactors::new(grid.x(i), params.road_length, params.k))
                .collect(),
            speed: (0..grid.nv)
                .map(|j| AxisFactors::new(grid.v(j), params.s_max, params.k))
                .collect(),
        }
    }

    #[inline]
    pub fn evaluate(&self, w: &WeightMatrices, i: usize, j: usize) -> ValueDerivatives {
        evaluate_factors(&self.road[i], &self.speed[j], w)
    }

    #[inline]
    pub fn partials(&self, i: usize, j: usize, idx: BasisIndex, branch: Branch) -> PartialSet {
        partials_factors(&self.road[i], &self.speed[j], idx, branch)
    }
}

/// `V` and its spatial derivatives at one point.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct ValueDerivatives {
    pub value: f64,
    pub dy1: f64,
    pub dy2: f64,
    pub d2y2: f64,
}

/// Derivatives of each value-basis quantity with respect to a single weight.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PartialSet {
    pub value: f64,
    pub dy2: f64,
    pub grad_y: (f64, f64),
    pub d2y2: f64,
}

pub fn eval_value(w: &WeightMatrices, y: (f64, f64), params: &ModelParams) -> f64 {
    BasisPoint::new(y.0, y.1, params).evaluate(w).value
}

/// `dV/dy2`; vanishes identically on `y2 = 0` and `y2 = s_max`.
pub fn eval_dv_dy2(w: &WeightMatrices, y: (f64, f64), params: &ModelParams) -> f64 {
    // Allocation-free; this sits in the particle inner loop.
    let y1 = y.0.rem_euclid(params.road_length);
    let mut out = 0.0;
    for j in 1..w.k() {
        let (sv, _) = unit_phase(j as f64 * y.1 / params.s_max);
        if sv == 0.0 {
            continue;
        }
        let mut road = 0.0;
        for i in 0..w.k() {
            let (sx, cx) = unit_phase(i as f64 * y1 / params.road_length);
            road += w.a(i, j) * sx + w.b(i, j) * cx;
        }
        out -= road * sv * TAU * j as f64 / params.s_max;
    }
    out
}

pub fn eval_d2v_dy2(w: &WeightMatrices, y: (f64, f64), params: &ModelParams) -> f64 {
    BasisPoint::new(y.0, y.1, params).evaluate(w).d2y2
}

pub fn eval_grad_y(w: &WeightMatrices, y: (f64, f64), params: &ModelParams) -> (f64, f64) {
    let d = BasisPoint::new(y.0, y.1, params).evaluate(w);
    (d.dy1, d.dy2)
}

pub fn basis_partials(
    idx: BasisIndex,
    branch: Branch,
    y: (f64, f64),
    params: &ModelParams,
) -> PartialSet {
    BasisPoint::new(y.0, y.1, params).partials(idx, branch)
}
