//! Microscopic cross-check: independent vehicles following the reflected SDE
//!
//! ```text
//! dx = v dt
//! dv = (u~ + w~)(x, v) dt + sqrt(2 eps) dW + reflection at v = 0, s_max
//! ```
//!
//! under the smooth feedback of a fixed weight set, integrated by
//! Euler-Maruyama with mirror folding at the speed limits. The histogram of
//! the ensemble is compared against the finite-volume density.

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::basis::{eval_dv_dy2, WeightMatrices};
use crate::config::{GridSpec, ModelParams};
use crate::error::SimError;
use crate::fk::DensityField;
use crate::policy::{smooth_control, smooth_disturbance};
use crate::stepper::{AdpSystem, CoupledState};

/// Most folds a single step may need before it is treated as a failure.
const MAX_FOLDS: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AgentState {
    pub x: f64,
    pub v: f64,
}

/// Agents and their private random streams. Stream `n` belongs to agent `n`
/// for the whole run, so results do not depend on how agents are scheduled
/// across threads.
#[derive(Debug, Clone)]
pub struct EnsembleState {
    pub agents: Vec<AgentState>,
    pub t: f64,
    rngs: Vec<ChaCha8Rng>,
}

impl EnsembleState {
    pub fn len(&self) -> usize {
        self.agents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.agents.is_empty()
    }
}

fn agent_rng(seed: u64, agent: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(agent as u64);
    rng
}

/// Draws `n` i.i.d. agents: a cell with probability proportional to its
/// mass, then a uniform point inside it.
pub fn sample_initial(
    n: usize,
    rho0: &DensityField,
    grid: &GridSpec,
    seed: u64,
) -> Result<EnsembleState, SimError> {
    if n == 0 {
        return Err(SimError::EmptyEnsemble);
    }
    rho0.check_shape(grid)?;
    let mut cdf = Vec::with_capacity(rho0.values.len());
    let mut acc = 0.0;
    for &r in &rho0.values {
        acc += r.max(0.0);
        cdf.push(acc);
    }
    let total = acc;
    let last_nonzero = rho0.values.iter().rposition(|&r| r > 0.0).unwrap_or(0);
    let mut rngs: Vec<ChaCha8Rng> = (0..n).map(|a| agent_rng(seed, a)).collect();
    let agents = rngs
        .par_iter_mut()
        .map(|rng| {
            let u: f64 = rng.random::<f64>() * total;
            let cell = cdf.partition_point(|&c| c <= u).min(last_nonzero);
            let (i, j) = (cell / grid.nv, cell % grid.nv);
            let x = (i as f64 + rng.random::<f64>()) * grid.dx;
            let v = (j as f64 + rng.random::<f64>()) * grid.dv;
            AgentState { x, v }
        })
        .collect();
    Ok(EnsembleState {
        agents,
        t: 0.0,
        rngs,
    })
}

/// Mirror-folds a speed back into `[0, s_max]`. Each fold preserves the
/// distance travelled.
pub fn reflect_speed(mut v: f64, s_max: f64) -> Option<f64> {
    for _ in 0..=MAX_FOLDS {
        if v < 0.0 {
            v = -v;
        } else if v > s_max {
            v = 2.0 * s_max - v;
        } else {
            return Some(v);
        }
    }
    None
}

fn wrap(x: f64, l: f64) -> f64 {
    let y = x.rem_euclid(l);
    // rem_euclid of a tiny negative number rounds up to l
    if y >= l {
        0.0
    } else {
        y
    }
}

/// One Euler-Maruyama step for every agent.
pub fn em_step(
    e: &mut EnsembleState,
    w: &WeightMatrices,
    dt: f64,
    params: &ModelParams,
) -> Result<(), SimError> {
    let noise = (2.0 * params.epsilon * dt).sqrt();
    let l = params.road_length;
    let s_max = params.s_max;
    e.agents
        .par_iter_mut()
        .zip(e.rngs.par_iter_mut())
        .enumerate()
        .try_for_each(|(n, (agent, rng))| {
            let p2 = eval_dv_dy2(w, (agent.x, agent.v), params);
            let drift = smooth_control(p2, params) + smooth_disturbance(p2, params);
            let xi: f64 = rng.sample(StandardNormal);
            let v = agent.v + drift * dt + noise * xi;
            agent.x = wrap(agent.x + agent.v * dt, l);
            agent.v =
                reflect_speed(v, s_max).ok_or(SimError::ReflectionDiverged { agent: n, v })?;
            Ok(())
        })?;
    e.t += dt;
    Ok(())
}

/// Cell-count histogram normalized to unit mass.
pub fn empirical_density(e: &EnsembleState, grid: &GridSpec) -> Result<DensityField, SimError> {
    if e.is_empty() {
        return Err(SimError::EmptyEnsemble);
    }
    let mut rho = DensityField::zeros(grid);
    for a in &e.agents {
        let (i, j) = grid.locate(a.x, a.v);
        rho.values[grid.idx(i, j)] += 1.0;
    }
    let scale = 1.0 / (e.len() as f64 * grid.cell_area());
    for r in &mut rho.values {
        *r *= scale;
    }
    Ok(rho)
}

/// Merges `factor x factor` blocks of cells (their masses add); the result
/// is a density on the coarser grid with the same total mass.
pub fn coarsen(
    rho: &DensityField,
    grid: &GridSpec,
    factor: usize,
) -> Result<(DensityField, GridSpec), SimError> {
    rho.check_shape(grid)?;
    assert!(factor >= 1, "coarsening factor must be positive");
    assert!(
        grid.nx.is_multiple_of(factor) && grid.nv.is_multiple_of(factor),
        "grid {}x{} is not divisible by {factor}",
        grid.nx,
        grid.nv
    );
    let coarse = GridSpec::new(
        grid.nx / factor,
        grid.nv / factor,
        grid.road_length,
        grid.s_max,
    );
    let mut out = DensityField::zeros(&coarse);
    let share = 1.0 / (factor * factor) as f64;
    for i in 0..grid.nx {
        for j in 0..grid.nv {
            out.values[coarse.idx(i / factor, j / factor)] += rho.at(i, j) * share;
        }
    }
    Ok((out, coarse))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Discrepancy {
    /// `sum |a - b| dx dv`
    pub l1: f64,
    /// `max |a - b|`, in density units.
    pub max_dev: f64,
}

pub fn discrepancy(a: &DensityField, b: &DensityField, grid: &GridSpec) -> Discrepancy {
    let mut l1 = 0.0;
    let mut max_dev: f64 = 0.0;
    for (x, y) in a.values.iter().zip(&b.values) {
        let d = (x - y).abs();
        l1 += d;
        max_dev = max_dev.max(d);
    }
    Discrepancy {
        l1: l1 * grid.cell_area(),
        max_dev,
    }
}

/// Outcome of a particle-versus-density comparison.
#[derive(Debug, Clone, PartialEq)]
pub struct McReport {
    pub agents: usize,
    pub steps: usize,
    pub dt: f64,
    /// On the simulation grid.
    pub fine: Discrepancy,
    /// After summing `bin_factor x bin_factor` blocks of cells.
    pub binned: Discrepancy,
    pub bin_factor: usize,
}

impl fmt::Display for McReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "agents={}", self.agents)?;
        writeln!(f, "steps={}", self.steps)?;
        writeln!(f, "dt={}", self.dt)?;
        writeln!(f, "l1={:e}", self.fine.l1)?;
        writeln!(f, "max_dev={:e}", self.fine.max_dev)?;
        writeln!(f, "bin_factor={}", self.bin_factor)?;
        writeln!(f, "l1_binned={:e}", self.binned.l1)?;
        writeln!(f, "max_dev_binned={:e}", self.binned.max_dev)
    }
}

/// Evolves the finite-volume density and an `agents`-strong ensemble side by
/// side under the same frozen weights, then compares them.
#[allow(clippy::too_many_arguments)]
pub fn compare_with_density(
    params: &ModelParams,
    grid: &GridSpec,
    weights: &WeightMatrices,
    rho0: &DensityField,
    agents: usize,
    steps: usize,
    dt: f64,
    seed: u64,
    bin_factor: usize,
) -> Result<McReport, SimError> {
    let system = AdpSystem::frozen(grid, params);
    let mut state = CoupledState {
        weights: weights.clone(),
        rho: rho0.clone(),
        t: 0.0,
    };
    let mut ensemble = sample_initial(agents, rho0, grid, seed)?;
    for _ in 0..steps {
        state = system.ssp_rk2_step(&state, dt)?;
        em_step(&mut ensemble, weights, dt, params)?;
    }
    let hist = empirical_density(&ensemble, grid)?;
    let fine = discrepancy(&hist, &state.rho, grid);
    let (hc, coarse) = coarsen(&hist, grid, bin_factor)?;
    let (fc, _) = coarsen(&state.rho, grid, bin_factor)?;
    Ok(McReport {
        agents,
        steps,
        dt,
        fine,
        binned: discrepancy(&hc, &fc, &coarse),
        bin_factor,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fk::init_density;

    fn setup() -> (GridSpec, ModelParams) {
        let p = ModelParams::default();
        (GridSpec::new(81, 81, p.road_length, p.s_max), p)
    }

    #[test]
    fn point_mass_samples_stay_in_cell() {
        let (g, _) = setup();
        let mut rho = DensityField::zeros(&g);
        rho.values[g.idx(7, 30)] = 1.0 / g.cell_area();
        let e = sample_initial(1000, &rho, &g, 3).unwrap();
        assert!(e.agents.iter().all(|a| g.locate(a.x, a.v) == (7, 30)));
    }

    #[test]
    fn sampling_is_reproducible() {
        let (g, p) = setup();
        let rho = init_density(&g, &p).unwrap();
        let a = sample_initial(500, &rho, &g, 42).unwrap();
        let b = sample_initial(500, &rho, &g, 42).unwrap();
        let c = sample_initial(500, &rho, &g, 43).unwrap();
        assert_eq!(a.agents, b.agents);
        assert_ne!(a.agents, c.agents);
    }

    #[test]
    fn empty_requests_are_rejected() {
        let (g, p) = setup();
        let rho = init_density(&g, &p).unwrap();
        assert_eq!(
            sample_initial(0, &rho, &g, 1).unwrap_err(),
            SimError::EmptyEnsemble
        );
        let e = EnsembleState {
            agents: vec![],
            t: 0.0,
            rngs: vec![],
        };
        assert_eq!(
            empirical_density(&e, &g).unwrap_err(),
            SimError::EmptyEnsemble
        );
    }

    #[test]
    fn reflection_mirrors_at_both_limits() {
        let s = 0.3;
        assert!((reflect_speed(-0.1 * s, s).unwrap() - 0.1 * s).abs() < 1e-16);
        assert!((reflect_speed(1.05 * s, s).unwrap() - 0.95 * s).abs() < 1e-15);
        assert_eq!(reflect_speed(0.2, s), Some(0.2));
        // below zero, then above s_max after one fold
        assert!((reflect_speed(-1.2 * s, s).unwrap() - 0.8 * s).abs() < 1e-15);
        assert_eq!(reflect_speed(10.0 * s, s), None);
    }

    #[test]
    fn noiseless_zero_control_transports_exactly() {
        let (g, mut p) = setup();
        p.epsilon = 0.0;
        let rho = init_density(&g, &p).unwrap();
        let mut e = sample_initial(200, &rho, &g, 9).unwrap();
        let before = e.agents.clone();
        em_step(&mut e, &WeightMatrices::zeros(2), 0.01, &p).unwrap();
        for (a, b) in before.iter().zip(&e.agents) {
            assert_eq!(a.v, b.v);
            assert_eq!(b.x, wrap(a.x + a.v * 0.01, p.road_length));
        }
    }

    #[test]
    fn state_constraints_hold() {
        let (g, p) = setup();
        let rho = init_density(&g, &p).unwrap();
        let mut e = sample_initial(2000, &rho, &g, 5).unwrap();
        let w = WeightMatrices::filled(2, 0.1);
        for _ in 0..200 {
            em_step(&mut e, &w, 0.0025, &p).unwrap();
            for a in &e.agents {
                assert!((0.0..p.road_length).contains(&a.x));
                assert!((0.0..=p.s_max).contains(&a.v));
            }
        }
    }

    #[test]
    fn histogram_has_unit_mass() {
        let (g, p) = setup();
        let rho = init_density(&g, &p).unwrap();
        let e = sample_initial(1, &rho, &g, 1).unwrap();
        let h = empirical_density(&e, &g).unwrap();
        assert_eq!(h.values.iter().filter(|&&x| x > 0.0).count(), 1);
        let e = sample_initial(5000, &rho, &g, 1).unwrap();
        let h = empirical_density(&e, &g).unwrap();
        assert!((crate::fk::mass(&h, &g) - 1.0).abs() < 1e-14);
    }

    #[test]
    fn coarsening_keeps_mass() {
        let (g, p) = setup();
        let rho = init_density(&g, &p).unwrap();
        let (c, cg) = coarsen(&rho, &g, 3).unwrap();
        assert_eq!((cg.nx, cg.nv), (27, 27));
        assert!((crate::fk::mass(&c, &cg) - 1.0).abs() < 1e-12);
    }
}
