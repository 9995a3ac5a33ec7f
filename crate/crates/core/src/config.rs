//! Model constants, run settings, grid geometry and their validation.
//!
//! The configuration file is plain `key=value` text, one pair per line, with
//! `#` starting a comment. Missing keys fall back to the reference parameter
//! set; `s_max`, `u_max` and `w_max` are derived from `road_length` unless
//! they are set explicitly.

use std::cmp::Ordering;
use std::collections::HashMap;
use std::f64::consts::PI;
use std::fmt;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::error::ConfigError;

/// Safety factor applied to the most restrictive stability bound.
pub const CFL_SAFETY: f64 = 0.9;

/// Physical and game constants.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    /// Length of the ring road.
    pub road_length: f64,
    pub s_max: f64,
    /// Acceleration (control) bound.
    pub u_max: f64,
    /// Disturbance bound.
    pub w_max: f64,
    /// Disturbance attenuation.
    pub gamma: f64,
    /// Speed-preference weight; the running cost rewards speed by `1/beta`.
    pub beta: f64,
    /// Discount rate.
    pub alpha: f64,
    /// Speed diffusion strength.
    pub epsilon: f64,
    /// Learning rate of the weight gradient flow.
    pub theta_inv: f64,
    /// Number of Fourier harmonics per axis.
    pub k: usize,
}

impl ModelParams {
    /// Reference parameters rescaled to a different road length, keeping the
    /// ratios `s_max = L/20`, `u_max = s_max/6`, `w_max = u_max/10`.
    pub fn with_road_length(road_length: f64) -> Self {
        let s_max = road_length / 20.0;
        let u_max = s_max / 6.0;
        Self {
            road_length,
            s_max,
            u_max,
            w_max: u_max / 10.0,
            gamma: 10.0,
            beta: 2.0,
            alpha: 1.0,
            epsilon: 0.0005,
            theta_inv: 1e-2,
            k: 2,
        }
    }

    pub fn gamma_sq(&self) -> f64 {
        self.gamma * self.gamma
    }
}

impl Default for ModelParams {
    fn default() -> Self {
        Self::with_road_length(2.0 * PI)
    }
}

/// Time stepping, discretization and output settings.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub t_final: f64,
    pub dt: f64,
    pub nx: usize,
    pub nv: usize,
    pub snapshot_times: Vec<f64>,
    /// Agent count for Monte-Carlo comparisons, 0 disables them.
    pub mc_agents: usize,
    pub rng_seed: u64,
    pub out_dir: PathBuf,
    /// Initial value broadcast to every entry of both weight matrices.
    pub weight_init: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            t_final: 600.0,
            dt: 0.0025,
            nx: 81,
            nv: 81,
            snapshot_times: Vec::new(),
            mc_agents: 0,
            rng_seed: 0,
            out_dir: PathBuf::from("out"),
            weight_init: 0.1,
        }
    }
}

impl RunConfig {
    /// Number of whole steps covering `[0, t_final]`.
    pub fn n_steps(&self) -> usize {
        (self.t_final / self.dt).round() as usize
    }
}

/// Uniform cell-centered grid on the torus `[0, L)` times `[0, s_max]`.
#[derive(Debug, Clone, PartialEq)]
pub struct GridSpec {
    pub nx: usize,
    pub nv: usize,
    pub dx: f64,
    pub dv: f64,
    pub road_length: f64,
    pub s_max: f64,
}

impl GridSpec {
    pub fn new(nx: usize, nv: usize, road_length: f64, s_max: f64) -> Self {
        Self {
            nx,
            nv,
            dx: road_length / nx as f64,
            dv: s_max / nv as f64,
            road_length,
            s_max,
        }
    }

    pub fn from_config(params: &ModelParams, run: &RunConfig) -> Self {
        Self::new(run.nx, run.nv, params.road_length, params.s_max)
    }

    pub fn x(&self, i: usize) -> f64 {
        (i as f64 + 0.5) * self.dx
    }

    pub fn v(&self, j: usize) -> f64 {
        (j as f64 + 0.5) * self.dv
    }

    pub fn n_cells(&self) -> usize {
        self.nx * self.nv
    }

    pub fn cell_area(&self) -> f64 {
        self.dx * self.dv
    }

    /// Flat index of cell `(i, j)`; speed varies fastest.
    #[inline]
    pub fn idx(&self, i: usize, j: usize) -> usize {
        i * self.nv + j
    }

    /// Cell containing a point, with the point's position wrapped onto the torus.
    pub fn locate(&self, x: f64, v: f64) -> (usize, usize) {
        let x = x.rem_euclid(self.road_length);
        let i = ((x / self.dx) as usize).min(self.nx - 1);
        let j = ((v / self.dv).max(0.0) as usize).min(self.nv - 1);
        (i, j)
    }
}

/// Stability bounds on the time step, all in time units.
#[derive(Debug, Clone, PartialEq)]
pub struct CflReport {
    pub dt: f64,
    /// `dx / s_max`, transport along the road.
    pub advection_x: f64,
    /// `dv / (u_max + w_max)`, transport in speed.
    pub advection_v: f64,
    /// `dv^2 / (2 eps)`, explicit diffusion.
    pub diffusion: f64,
    /// Forward-Euler positivity bound of the unsplit scheme:
    /// `1 / (s_max/dx + 2(u_max+w_max)/dv + 2 eps/dv^2)`.
    pub combined: f64,
}

impl CflReport {
    pub fn limit(&self) -> f64 {
        CFL_SAFETY * self.advection_x.min(self.advection_v).min(self.diffusion)
    }

    pub fn admissible(&self) -> bool {
        self.dt <= self.limit() && self.dt <= self.combined
    }
}

impl fmt::Display for CflReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let line = |f: &mut fmt::Formatter<'_>, name: &str, bound: f64| {
            writeln!(f, "cfl_{name}={bound:.6e} margin={:.6e}", bound - self.dt)
        };
        writeln!(f, "dt={:.6e}", self.dt)?;
        line(f, "advection_x", self.advection_x)?;
        line(f, "advection_v", self.advection_v)?;
        line(f, "diffusion", self.diffusion)?;
        line(f, "limit", self.limit())?;
        line(f, "combined", self.combined)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    NonPositive { field: &'static str, value: f64 },
    BoundOrdering { w_max: f64, u_max: f64 },
    BasisOrder(usize),
    GridTooSmall { axis: &'static str, cells: usize },
    HorizonShorterThanStep { t_final: f64, dt: f64 },
    SnapshotOutOfRange(f64),
    NonFiniteWeightInit(f64),
    Cfl { dt: f64, limit: f64 },
    CflCombined { dt: f64, limit: f64 },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::NonPositive { field, value } => {
                write!(f, "{field} must be strictly positive (got {value})")
            }
            Violation::BoundOrdering { w_max, u_max } => {
                write!(
                    f,
                    "need 0 < w_max < u_max (w_max = {w_max}, u_max = {u_max})"
                )
            }
            Violation::BasisOrder(k) => write!(f, "K must be at least 1 (got {k})"),
            Violation::GridTooSmall { axis, cells } => {
                write!(f, "{axis} needs at least 4 cells (got {cells})")
            }
            Violation::HorizonShorterThanStep { t_final, dt } => {
                write!(f, "T = {t_final} is shorter than dt = {dt}")
            }
            Violation::SnapshotOutOfRange(t) => write!(f, "snapshot time {t} outside [0, T]"),
            Violation::NonFiniteWeightInit(w) => write!(f, "weight_init must be finite (got {w})"),
            Violation::Cfl { dt, limit } => {
                write!(f, "dt = {dt} exceeds the CFL limit {limit:.6e}")
            }
            Violation::CflCombined { dt, limit } => {
                write!(
                    f,
                    "dt = {dt} exceeds the unsplit positivity bound {limit:.6e}"
                )
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
    /// Present whenever the grid is non-degenerate.
    pub cfl: Option<CflReport>,
}

impl ValidationReport {
    pub fn is_admissible(&self) -> bool {
        self.violations.is_empty()
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if let Some(cfl) = &self.cfl {
            write!(f, "{cfl}")?;
        }
        writeln!(f, "admissible={}", self.is_admissible())?;
        for v in &self.violations {
            writeln!(f, "violation: {v}")?;
        }
        Ok(())
    }
}

pub fn cfl_report(params: &ModelParams, run: &RunConfig) -> CflReport {
    let dx = params.road_length / run.nx as f64;
    let dv = params.s_max / run.nv as f64;
    let accel = params.u_max + params.w_max;
    let rate = params.s_max / dx + 2.0 * accel / dv + 2.0 * params.epsilon / (dv * dv);
    CflReport {
        dt: run.dt,
        advection_x: dx / params.s_max,
        advection_v: dv / accel,
        diffusion: dv * dv / (2.0 * params.epsilon),
        combined: 1.0 / rate,
    }
}

/// Checks every admissibility condition and collects the failures.
/// `dt > limit`, or either is NaN.
fn exceeds(dt: f64, limit: f64) -> bool {
    !matches!(
        dt.partial_cmp(&limit),
        Some(Ordering::Less | Ordering::Equal)
    )
}

pub fn validate(params: &ModelParams, run: &RunConfig) -> ValidationReport {
    let mut violations = Vec::new();
    let positive = [
        ("road_length", params.road_length),
        ("s_max", params.s_max),
        ("gamma", params.gamma),
        ("beta", params.beta),
        ("alpha", params.alpha),
        ("epsilon", params.epsilon),
        ("theta_inv", params.theta_inv),
        ("dt", run.dt),
    ];
    for (field, value) in positive {
        if !value.is_finite() || value <= 0.0 {
            violations.push(Violation::NonPositive { field, value });
        }
    }
    if !(params.w_max > 0.0 && params.w_max < params.u_max && params.u_max.is_finite()) {
        violations.push(Violation::BoundOrdering {
            w_max: params.w_max,
            u_max: params.u_max,
        });
    }
    if params.k < 1 {
        violations.push(Violation::BasisOrder(params.k));
    }
    for (axis, cells) in [("nx", run.nx), ("nv", run.nv)] {
        if cells < 4 {
            violations.push(Violation::GridTooSmall { axis, cells });
        }
    }
    if run.dt > 0.0
        && run.t_final != 0.0
        && !matches!(
            run.t_final.partial_cmp(&run.dt),
            Some(Ordering::Greater | Ordering::Equal)
        )
    {
        violations.push(Violation::HorizonShorterThanStep {
            t_final: run.t_final,
            dt: run.dt,
        });
    }
    for &t in &run.snapshot_times {
        if !(0.0..=run.t_final).contains(&t) {
            violations.push(Violation::SnapshotOutOfRange(t));
        }
    }
    if !run.weight_init.is_finite() {
        violations.push(Violation::NonFiniteWeightInit(run.weight_init));
    }

    let cfl = (run.nx > 0 && run.nv > 0).then(|| cfl_report(params, run));
    if let Some(c) = &cfl {
        if exceeds(run.dt, c.limit()) {
            violations.push(Violation::Cfl {
                dt: run.dt,
                limit: c.limit(),
            });
        }
        if exceeds(run.dt, c.combined) {
            violations.push(Violation::CflCombined {
                dt: run.dt,
                limit: c.combined,
            });
        }
    }
    ValidationReport { violations, cfl }
}

const KEYS: [&str; 19] = [
    "road_length",
    "s_max",
    "u_max",
    "w_max",
    "gamma",
    "beta",
    "alpha",
    "epsilon",
    "theta_inv",
    "K",
    "T",
    "dt",
    "nx",
    "nv",
    "snapshot_times",
    "mc_agents",
    "rng_seed",
    "out_dir",
    "weight_init",
];

struct Entry {
    line: usize,
    value: String,
}

fn parse_value<T: std::str::FromStr>(key: &str, entry: &Entry) -> Result<T, ConfigError>
where
    T::Err: fmt::Display,
{
    entry.value.parse::<T>().map_err(|e| ConfigError::Parse {
        line: entry.line,
        message: format!("invalid value `{}` for {key}: {e}", entry.value),
    })
}

/// Parses configuration text. Unset keys take the reference defaults.
pub fn parse_config(text: &str) -> Result<(ModelParams, RunConfig), ConfigError> {
    let mut entries: HashMap<&str, Entry> = HashMap::new();
    for (n, raw) in text.lines().enumerate() {
        let line = n + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let (key, value) = content.split_once('=').ok_or_else(|| ConfigError::Parse {
            line,
            message: format!("expected key=value, found `{content}`"),
        })?;
        let key = key.trim();
        let Some(&known) = KEYS.iter().find(|k| **k == key) else {
            return Err(ConfigError::UnknownKey {
                line,
                key: key.to_string(),
            });
        };
        let entry = Entry {
            line,
            value: value.trim().to_string(),
        };
        if entries.insert(known, entry).is_some() {
            return Err(ConfigError::DuplicateKey {
                line,
                key: key.to_string(),
            });
        }
    }

    let f64_key = |key: &str| -> Result<Option<f64>, ConfigError> {
        entries
            .get(key)
            .map(|e| parse_value::<f64>(key, e))
            .transpose()
    };
    let usize_key = |key: &str| -> Result<Option<usize>, ConfigError> {
        entries
            .get(key)
            .map(|e| parse_value::<usize>(key, e))
            .transpose()
    };

    let road_length = f64_key("road_length")?.unwrap_or(2.0 * PI);
    let mut params = ModelParams::with_road_length(road_length);
    if let Some(s) = f64_key("s_max")? {
        params.s_max = s;
        params.u_max = s / 6.0;
        params.w_max = params.u_max / 10.0;
    }
    if let Some(u) = f64_key("u_max")? {
        params.u_max = u;
        params.w_max = u / 10.0;
    }
    if let Some(w) = f64_key("w_max")? {
        params.w_max = w;
    }
    if let Some(v) = f64_key("gamma")? {
        params.gamma = v;
    }
    if let Some(v) = f64_key("beta")? {
        params.beta = v;
    }
    if let Some(v) = f64_key("alpha")? {
        params.alpha = v;
    }
    if let Some(v) = f64_key("epsilon")? {
        params.epsilon = v;
    }
    if let Some(v) = f64_key("theta_inv")? {
        params.theta_inv = v;
    }
    if let Some(v) = usize_key("K")? {
        params.k = v;
    }

    let mut run = RunConfig::default();
    if let Some(v) = f64_key("T")? {
        run.t_final = v;
    }
    if let Some(v) = f64_key("dt")? {
        run.dt = v;
    }
    if let Some(v) = usize_key("nx")? {
        run.nx = v;
    }
    if let Some(v) = usize_key("nv")? {
        run.nv = v;
    }
    if let Some(e) = entries.get("snapshot_times") {
        run.snapshot_times = e
            .value
            .split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(|s| {
                s.parse::<f64>().map_err(|err| ConfigError::Parse {
                    line: e.line,
                    message: format!("invalid snapshot time `{s}`: {err}"),
                })
            })
            .collect::<Result<_, _>>()?;
    }
    if let Some(v) = usize_key("mc_agents")? {
        run.mc_agents = v;
    }
    if let Some(e) = entries.get("rng_seed") {
        run.rng_seed = parse_value("rng_seed", e)?;
    }
    if let Some(e) = entries.get("out_dir") {
        run.out_dir = PathBuf::from(&e.value);
    }
    if let Some(v) = f64_key("weight_init")? {
        run.weight_init = v;
    }
    Ok((params, run))
}

pub fn load_config(path: &Path) -> Result<(ModelParams, RunConfig), ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_config(&text)
}

/// Renders every key explicitly. `{:?}` on `f64` prints the shortest string
/// that parses back to the same value.
pub fn render_config(params: &ModelParams, run: &RunConfig) -> String {
    let mut s = String::new();
    let mut kv = |k: &str, v: String| {
        let _ = writeln!(s, "{k}={v}");
    };
    kv("road_length", format!("{:?}", params.road_length));
    kv("s_max", format!("{:?}", params.s_max));
    kv("u_max", format!("{:?}", params.u_max));
    kv("w_max", format!("{:?}", params.w_max));
    kv("gamma", format!("{:?}", params.gamma));
    kv("beta", format!("{:?}", params.beta));
    kv("alpha", format!("{:?}", params.alpha));
    kv("epsilon", format!("{:?}", params.epsilon));
    kv("theta_inv", format!("{:?}", params.theta_inv));
    kv("K", params.k.to_string());
    kv("T", format!("{:?}", run.t_final));
    kv("dt", format!("{:?}", run.dt));
    kv("nx", run.nx.to_string());
    kv("nv", run.nv.to_string());
    kv(
        "snapshot_times",
        run.snapshot_times
            .iter()
            .map(|t| format!("{t:?}"))
            .collect::<Vec<_>>()
            .join(","),
    );
    kv("mc_agents", run.mc_agents.to_string());
    kv("rng_seed", run.rng_seed.to_string());
    kv("out_dir", run.out_dir.display().to_string());
    kv("weight_init", format!("{:?}", run.weight_init));
    s
}

pub fn save_config(path: &Path, params: &ModelParams, run: &RunConfig) -> Result<(), ConfigError> {
    std::fs::write(path, render_config(params, run)).map_err(|source| ConfigError::Io {
        path: path.to_path_buf(),
        source,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_match_reference_parameters() {
        let p = ModelParams::default();
        assert_eq!(p.road_length, 2.0 * PI);
        assert_eq!(p.s_max, 2.0 * PI / 20.0);
        assert_eq!(p.u_max, p.s_max / 6.0);
        assert_eq!(p.w_max, p.u_max / 10.0);
        assert_eq!((p.gamma, p.beta, p.alpha), (10.0, 2.0, 1.0));
        assert_eq!((p.epsilon, p.theta_inv, p.k), (0.0005, 1e-2, 2));
        let r = RunConfig::default();
        assert_eq!((r.t_final, r.dt, r.nx, r.nv), (600.0, 0.0025, 81, 81));
        assert_eq!(r.n_steps(), 240_000);
    }

    #[test]
    fn reference_parameters_are_admissible() {
        let report = validate(&ModelParams::default(), &RunConfig::default());
        assert!(report.is_admissible(), "{report}");
        let cfl = report.cfl.unwrap();
        // dv = pi/810, dv^2/(2 eps) = 1.504e-2; dv/(u_max + w_max) = 6.73e-2.
        assert!((cfl.diffusion - 1.504e-2).abs() < 1e-5, "{}", cfl.diffusion);
        assert!(
            (cfl.advection_v - 6.73e-2).abs() < 1e-4,
            "{}",
            cfl.advection_v
        );
        assert!(
            (cfl.advection_x - 0.24691).abs() < 1e-4,
            "{}",
            cfl.advection_x
        );
        assert!(cfl.diffusion > 0.0025 && cfl.advection_v > 0.0025);
    }

    #[test]
    fn large_step_is_reported() {
        let run = RunConfig {
            dt: 1.0,
            ..RunConfig::default()
        };
        let report = validate(&ModelParams::default(), &run);
        assert!(report
            .violations
            .iter()
            .any(|v| matches!(v, Violation::Cfl { .. })));
    }

    #[test]
    fn disturbance_bound_must_stay_below_control_bound() {
        let mut p = ModelParams::default();
        p.w_max = 2.0 * p.u_max;
        let report = validate(&p, &RunConfig::default());
        assert!(report
            .violations
            .iter()
            .any(|v| matches!(v, Violation::BoundOrdering { .. })));
    }

    #[test]
    fn validate_is_pure() {
        let p = ModelParams {
            gamma: -1.0,
            ..ModelParams::default()
        };
        let run = RunConfig {
            nx: 2,
            snapshot_times: vec![-1.0, 700.0],
            ..RunConfig::default()
        };
        assert_eq!(validate(&p, &run), validate(&p, &run));
        assert_eq!(validate(&p, &run).violations.len(), 4);
    }

    #[test]
    fn empty_file_gives_defaults() {
        let (p, r) = parse_config("").unwrap();
        assert_eq!(p, ModelParams::default());
        assert_eq!(r, RunConfig::default());
    }

    #[test]
    fn single_override() {
        let (p, r) = parse_config("# comment\nbeta = 4  # trailing\n").unwrap();
        assert_eq!(p.beta, 4.0);
        assert_eq!(
            p,
            ModelParams {
                beta: 4.0,
                ..ModelParams::default()
            }
        );
        assert_eq!(r, RunConfig::default());
    }

    #[test]
    fn unknown_key_is_named() {
        let err = parse_config("gamma=10\nbetaa=4\n").unwrap_err();
        match err {
            ConfigError::UnknownKey { line, key } => assert_eq!((line, key.as_str()), (2, "betaa")),
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn parse_error_carries_line() {
        let err = parse_config("\n\nnx=eighty\n").unwrap_err();
        assert!(matches!(err, ConfigError::Parse { line: 3, .. }), "{err}");
        let err = parse_config("just words\n").unwrap_err();
        assert!(matches!(err, ConfigError::Parse { line: 1, .. }), "{err}");
    }

    #[test]
    fn derived_bounds_follow_road_length() {
        let (p, _) = parse_config("road_length=20\n").unwrap();
        assert_eq!(p.s_max, 1.0);
        assert_eq!(p.u_max, 1.0 / 6.0);
        assert_eq!(p.w_max, 1.0 / 60.0);
        let (p, _) = parse_config("road_length=20\nu_max=0.5\n").unwrap();
        assert_eq!((p.s_max, p.u_max, p.w_max), (1.0, 0.5, 0.05));
    }

    #[test]
    fn snapshot_list() {
        let (_, r) = parse_config("T=60\nsnapshot_times=0, 15,30 ,60\n").unwrap();
        assert_eq!(r.snapshot_times, vec![0.0, 15.0, 30.0, 60.0]);
    }

    #[test]
    fn grid_geometry() {
        let p = ModelParams::default();
        let g = GridSpec::new(81, 81, p.road_length, p.s_max);
        assert!((g.dx * 81.0 - p.road_length).abs() < 1e-14);
        assert!((g.dv * 81.0 - p.s_max).abs() < 1e-15);
        assert!(g.x(0) > 0.0 && g.x(80) < p.road_length);
        assert!(g.v(0) > 0.0 && g.v(80) < p.s_max);
        assert_eq!(g.locate(p.road_length + 1e-3, p.s_max), (0, 80));
        assert_eq!(g.locate(-1e-3, 0.0), (80, 0));
    }
}
