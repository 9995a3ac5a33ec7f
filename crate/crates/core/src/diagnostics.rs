//! Macroscopic observables by Riemann sums over the density.

use crate::config::{GridSpec, ModelParams};
use crate::error::SimError;
use crate::fk::DensityField;

/// Spatial density, momentum density and bulk velocity along the road, and
/// the speed marginal, at one time.
#[derive(Debug, Clone, PartialEq)]
pub struct MacroProfile {
    pub t: f64,
    pub dx: f64,
    pub dv: f64,
    pub x: Vec<f64>,
    pub r1: Vec<f64>,
    pub j: Vec<f64>,
    /// `j / r1`, `None` in vacuum cells where `r1` is below the floor.
    pub vbulk: Vec<Option<f64>>,
    pub v: Vec<f64>,
    pub r2: Vec<f64>,
}

impl MacroProfile {
    /// Mean of the speed marginal, `sum v r2 dv`.
    pub fn mean_speed(&self) -> f64 {
        self.v.iter().zip(&self.r2).map(|(v, r)| v * r).sum::<f64>() * self.dv
    }

    /// `max r1 / min r1`; infinite if some road cell is empty.
    pub fn congestion_ratio(&self) -> f64 {
        let max = self.r1.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let min = self.r1.iter().copied().fold(f64::INFINITY, f64::min);
        max / min
    }
}

pub fn macro_profile(
    rho: &DensityField,
    grid: &GridSpec,
    params: &ModelParams,
    t: f64,
) -> Result<MacroProfile, SimError> {
    rho.check_shape(grid)?;
    let floor = 1e-12 / params.s_max;
    let v: Vec<f64> = (0..grid.nv).map(|j| grid.v(j)).collect();
    let mut r1 = Vec::with_capacity(grid.nx);
    let mut mom = Vec::with_capacity(grid.nx);
    let mut r2 = vec![0.0; grid.nv];
    for i in 0..grid.nx {
        let col = &rho.values[i * grid.nv..(i + 1) * grid.nv];
        r1.push(col.iter().sum::<f64>() * grid.dv);
        mom.push(col.iter().zip(&v).map(|(r, v)| r * v).sum::<f64>() * grid.dv);
        for (acc, r) in r2.iter_mut().zip(col) {
            *acc += r;
        }
    }
    for r in &mut r2 {
        *r *= grid.dx;
    }
    let vbulk = r1
        .iter()
        .zip(&mom)
        .map(|(&r, &m)| (r >= floor).then(|| m / r))
        .collect();
    Ok(MacroProfile {
        t,
        dx: grid.dx,
        dv: grid.dv,
        x: (0..grid.nx).map(|i| grid.x(i)).collect(),
        r1,
        j: mom,
        vbulk,
        v,
        r2,
    })
}

/// Largest residual of the road continuity law `d_t r1 + d_x j = 0`, both
/// derivatives by central differences, over every interior profile.
pub fn continuity_check(profiles: &[MacroProfile], dt: f64) -> Result<f64, SimError> {
    if profiles.len() < 3 {
        return Err(SimError::TooFewProfiles(profiles.len()));
    }
    for (index, pair) in profiles.windows(2).enumerate() {
        let gap = pair[1].t - pair[0].t;
        if (gap - dt).abs() > 1e-9 * dt.max(1.0) || pair[1].r1.len() != pair[0].r1.len() {
            return Err(SimError::MismatchedTimes { dt, gap, index });
        }
    }
    let mut worst: f64 = 0.0;
    for w in profiles.windows(3) {
        let (prev, cur, next) = (&w[0], &w[1], &w[2]);
        let n = cur.r1.len();
        for i in 0..n {
            let dr = (next.r1[i] - prev.r1[i]) / (2.0 * dt);
            let dj = (cur.j[(i + 1) % n] - cur.j[(i + n - 1) % n]) / (2.0 * cur.dx);
            worst = worst.max((dr + dj).abs());
        }
    }
    Ok(worst)
}
