//! Joint time integration of the weight gradient flow and the density.
//!
//! ```text
//! dA/dt   = -theta_inv grad_A E(A, B, rho)
//! dB/dt   = -theta_inv grad_B E(A, B, rho)
//! drho/dt = -A(u~, w~) rho
//! ```
//!
//! All three share one two-stage SSP Runge-Kutta clock, and the feedback
//! controls are rebuilt from the stage weights inside every stage.

use std::time::{Duration, Instant};

use thiserror::Error;

use crate::basis::WeightMatrices;
use crate::config::{GridSpec, ModelParams, RunConfig};
use crate::diagnostics::{macro_profile, MacroProfile};
use crate::error::{OutputError, SimError};
use crate::fk::{fk_rhs_into, mass, min_value, DensityField, VelocityField};
use crate::residual::ResidualEvaluator;

/// A state advanced by [`ssp_rk2`].
pub trait RkState: Sized {
    type Tendency;

    /// `self + dt * k`
    fn euler(&self, k: &Self::Tendency, dt: f64) -> Self;

    /// `(self + other) / 2`
    fn average(&self, other: &Self) -> Self;
}

impl RkState for f64 {
    type Tendency = f64;

    fn euler(&self, k: &f64, dt: f64) -> f64 {
        self + dt * k
    }

    fn average(&self, other: &f64) -> f64 {
        0.5 * self + 0.5 * other
    }
}

impl RkState for DensityField {
    type Tendency = DensityField;

    fn euler(&self, k: &DensityField, dt: f64) -> Self {
        self.add_scaled(k, dt)
    }

    fn average(&self, other: &Self) -> Self {
        Self {
            nx: self.nx,
            nv: self.nv,
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(a, b)| 0.5 * a + 0.5 * b)
                .collect(),
        }
    }
}

/// Shu-Osher SSP-RK2: `s1 = s + dt R(s)`, `s' = s/2 + (s1 + dt R(s1))/2`.
/// Both stages are forward-Euler steps, so any convex invariant of Euler
/// (positivity under the step restriction) carries over.
pub fn ssp_rk2<S, E>(
    s: &S,
    dt: f64,
    mut rhs: impl FnMut(&S) -> Result<S::Tendency, E>,
) -> Result<S, E>
where
    S: RkState,
{
    let k1 = rhs(s)?;
    let s1 = s.euler(&k1, dt);
    let k2 = rhs(&s1)?;
    let s2 = s1.euler(&k2, dt);
    Ok(s.average(&s2))
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoupledState {
    pub weights: WeightMatrices,
    pub rho: DensityField,
    pub t: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoupledTendency {
    pub da: Vec<f64>,
    pub db: Vec<f64>,
    pub drho: DensityField,
}

impl RkState for CoupledState {
    type Tendency = CoupledTendency;

    fn euler(&self, k: &CoupledTendency, dt: f64) -> Self {
        Self {
            weights: self.weights.add_scaled(&k.da, &k.db, dt),
            rho: self.rho.euler(&k.drho, dt),
            t: self.t + dt,
        }
    }

    fn average(&self, other: &Self) -> Self {
        let half = |a: &[f64], b: &[f64]| -> Vec<f64> {
            a.iter().zip(b).map(|(a, b)| 0.5 * a + 0.5 * b).collect()
        };
        let k = self.weights.k();
        let a = half(self.weights.a_slice(), other.weights.a_slice());
        let b = half(self.weights.b_slice(), other.weights.b_slice());
        Self {
            weights: WeightMatrices::from_rows(k, &a, &b),
            rho: self.rho.average(&other.rho),
            t: 0.5 * (self.t + other.t),
        }
    }
}

/// The discretized ODE-PDE system on one grid.
#[derive(Debug, Clone)]
pub struct AdpSystem {
    grid: GridSpec,
    params: ModelParams,
    evaluator: ResidualEvaluator,
    learning: bool,
}

impl AdpSystem {
    pub fn new(grid: &GridSpec, params: &ModelParams) -> Self {
        Self {
            grid: grid.clone(),
            params: params.clone(),
            evaluator: ResidualEvaluator::new(grid, params),
            learning: true,
        }
    }

    /// Weights held fixed; only the density evolves.
    pub fn frozen(grid: &GridSpec, params: &ModelParams) -> Self {
        Self {
            learning: false,
            ..Self::new(grid, params)
        }
    }

    pub fn learning(&self) -> bool {
        self.learning
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn evaluator(&self) -> &ResidualEvaluator {
        &self.evaluator
    }

    pub fn initial_state(&self, weight_init: f64) -> Result<CoupledState, SimError> {
        Ok(CoupledState {
            weights: WeightMatrices::filled(self.params.k, weight_init),
            rho: crate::fk::init_density(&self.grid, &self.params)?,
            t: 0.0,
        })
    }

    pub fn hjb_error(&self, s: &CoupledState) -> Result<f64, SimError> {
        self.evaluator.hjb_error(&s.weights, &s.rho)
    }

    pub fn coupled_rhs(&self, s: &CoupledState) -> Result<CoupledTendency, SimError> {
        let kk = self.params.k * self.params.k;
        let (da, db) = if self.learning {
            let g = self.evaluator.weight_gradients(&s.weights, &s.rho)?;
            let scale = -self.params.theta_inv;
            (
                g.ga.iter().map(|x| scale * x).collect(),
                g.gb.iter().map(|x| scale * x).collect(),
            )
        } else {
            s.weights.check_finite()?;
            (vec![0.0; kk], vec![0.0; kk])
        };
        let vel =
            VelocityField::from_basis(&s.weights, self.evaluator.basis(), &self.grid, &self.params);
        let mut drho = DensityField::zeros(&self.grid);
        fk_rhs_into(&s.rho, &vel, &self.grid, &self.params, &mut drho)?;
        Ok(CoupledTendency { da, db, drho })
    }

    pub fn ssp_rk2_step(&self, s: &CoupledState, dt: f64) -> Result<CoupledState, SimError> {
        let mut next = ssp_rk2(s, dt, |st| self.coupled_rhs(st))?;
        next.t = s.t + dt;
        Ok(next)
    }
}

/// Receives outputs from [`run`]. All arguments are read-only views of the
/// current state.
pub trait OutputSink {
    fn series(&mut self, t: f64, error: f64, weights: &WeightMatrices) -> Result<(), OutputError>;

    fn snapshot(
        &mut self,
        t: f64,
        rho: &DensityField,
        profile: &MacroProfile,
    ) -> Result<(), OutputError>;

    fn finish(&mut self) -> Result<(), OutputError> {
        Ok(())
    }
}

/// Keeps every output in memory.
#[derive(Debug, Default, Clone)]
pub struct MemorySink {
    pub series: Vec<(f64, f64, WeightMatrices)>,
    pub snapshots: Vec<(f64, DensityField, MacroProfile)>,
}

impl OutputSink for MemorySink {
    fn series(&mut self, t: f64, error: f64, weights: &WeightMatrices) -> Result<(), OutputError> {
        self.series.push((t, error, weights.clone()));
        Ok(())
    }

    fn snapshot(
        &mut self,
        t: f64,
        rho: &DensityField,
        profile: &MacroProfile,
    ) -> Result<(), OutputError> {
        self.snapshots.push((t, rho.clone(), profile.clone()));
        Ok(())
    }
}

pub const DEFAULT_OUTPUT_STRIDE: usize = 100;

#[derive(Debug, Clone)]
pub struct RunOptions {
    /// Steps between time-series rows.
    pub output_stride: usize,
    /// Steps between progress lines on stdout, if any.
    pub progress: Option<usize>,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            output_stride: DEFAULT_OUTPUT_STRIDE,
            progress: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunSummary {
    pub final_state: CoupledState,
    pub steps: usize,
    pub initial_error: f64,
    pub final_error: f64,
    pub initial_mass: f64,
    /// Extremes of `mass(t) - mass(0)` over all steps.
    pub min_mass_drift: f64,
    pub max_mass_drift: f64,
    /// Smallest density value seen at any step.
    pub min_density: f64,
    pub wall_time: Duration,
}

impl RunSummary {
    /// Largest `|mass(t) - 1|` over all steps.
    pub fn max_mass_error(&self) -> f64 {
        (self.initial_mass + self.min_mass_drift - 1.0)
            .abs()
            .max((self.initial_mass + self.max_mass_drift - 1.0).abs())
    }

    /// `key=value` lines.
    pub fn render(&self) -> String {
        let w = &self.final_state.weights;
        let fmt = |v: &[f64]| {
            v.iter()
                .map(|x| format!("{x:e}"))
                .collect::<Vec<_>>()
                .join(",")
        };
        format!(
            "steps={}\nt_final={}\nerror_initial={:e}\nerror_final={:e}\nmass_initial={:e}\nmass_drift_min={:e}\nmass_drift_max={:e}\nmin_density={:e}\nweights_a={}\nweights_b={}\nwall_time_s={:.3}\n",
            self.steps,
            self.final_state.t,
            self.initial_error,
            self.final_error,
            self.initial_mass,
            self.min_mass_drift,
            self.max_mass_drift,
            self.min_density,
            fmt(w.a_slice()),
            fmt(w.b_slice()),
            self.wall_time.as_secs_f64(),
        )
    }
}

#[derive(Debug, Error)]
pub enum RunError {
    #[error("step {step} (t = {t}): {source}")]
    Aborted {
        step: usize,
        t: f64,
        #[source]
        source: SimError,
        /// Last state that passed all checks.
        last_valid: Box<CoupledState>,
    },
    #[error(transparent)]
    Output(#[from] OutputError),
}

/// Integrates from `s0` to `run.t_final`, emitting the error and weights
/// every `output_stride` steps and density snapshots at step 0, at the
/// configured snapshot times and at the final step.
pub fn run(
    system: &AdpSystem,
    s0: CoupledState,
    run: &RunConfig,
    sink: &mut dyn OutputSink,
    opts: &RunOptions,
) -> Result<RunSummary, RunError> {
    let started = Instant::now();
    let grid = system.grid();
    let params = system.params();
    let steps = run.n_steps();
    let stride = opts.output_stride.max(1);
    let snapshot_steps: Vec<usize> = run
        .snapshot_times
        .iter()
        .map(|t| (t / run.dt).round() as usize)
        .collect();

    let abort = |step: usize, state: &CoupledState, source: SimError| RunError::Aborted {
        step,
        t: state.t,
        source,
        last_valid: Box::new(state.clone()),
    };

    let mass0 = mass(&s0.rho, grid);
    let mut state = s0;
    let mut drift = (0.0f64, 0.0f64);
    let mut min_density = min_value(&state.rho);
    let initial_error = system.hjb_error(&state).map_err(|e| abort(0, &state, e))?;
    let mut last_error = initial_error;

    let emit_series =
        |sink: &mut dyn OutputSink, s: &CoupledState, e: f64| sink.series(s.t, e, &s.weights);
    let emit_snapshot = |sink: &mut dyn OutputSink, s: &CoupledState| -> Result<(), RunError> {
        let profile = macro_profile(&s.rho, grid, params, s.t).map_err(|e| abort(0, s, e))?;
        sink.snapshot(s.t, &s.rho, &profile)?;
        Ok(())
    };

    emit_series(sink, &state, initial_error)?;
    emit_snapshot(sink, &state)?;

    for step in 1..=steps {
        let mut next = system
            .ssp_rk2_step(&state, run.dt)
            .map_err(|e| abort(step, &state, e))?;
        next.t = step as f64 * run.dt;
        if let Err(e) = next.rho.check_finite("density") {
            return Err(abort(step, &state, e));
        }
        if let Err(e) = next.weights.check_finite() {
            return Err(abort(step, &state, e));
        }
        state = next;

        let m = mass(&state.rho, grid) - mass0;
        drift = (drift.0.min(m), drift.1.max(m));
        min_density = min_density.min(min_value(&state.rho));

        let last = step == steps;
        if step % stride == 0 || last {
            last_error = system
                .hjb_error(&state)
                .map_err(|e| abort(step, &state, e))?;
            emit_series(sink, &state, last_error)?;
        }
        if last || snapshot_steps.contains(&step) {
            emit_snapshot(sink, &state)?;
        }
        if let Some(p) = opts.progress {
            if p > 0 && step % p == 0 {
                println!(
                    "progress step={step} t={:.4} E={last_error:e} mass_drift={m:e}",
                    state.t
                );
            }
        }
    }
    sink.finish()?;

    Ok(RunSummary {
        final_state: state,
        steps,
        initial_error,
        final_error: last_error,
        initial_mass: mass0,
        min_mass_drift: drift.0,
        max_mass_drift: drift.1,
        min_density,
        wall_time: started.elapsed(),
    })
}
