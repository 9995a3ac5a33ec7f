//! Command-line driver.
//!
//! Exit codes: 0 success, 1 invalid configuration or failed check,
//! 2 runtime abort (non-finite state or I/O failure).

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Parser, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::config::{load_config, render_config, validate, GridSpec, ModelParams, RunConfig};
use crate::gradcheck;
use crate::mc;
use crate::output::{emit_manifest, CsvSink};
use crate::residual::ResidualEvaluator;
use crate::stepper::{run, AdpSystem, RunError, RunOptions};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INVALID: i32 = 1;
pub const EXIT_ABORT: i32 = 2;

/// Coarsening applied to both densities for the binned MC discrepancy.
pub const MC_BIN_FACTOR: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum RunMode {
    /// Learn the weights while evolving the density.
    Adp,
    /// Evolve the density under the initial weights, held fixed.
    FkOnly,
    /// Compare the density against a particle simulation.
    McCompare,
    /// Check the analytic weight gradient against finite differences.
    GradCheck,
    /// Print the stability margins and stop.
    ValidateOnly,
}

#[derive(Debug, Parser)]
#[command(
    name = "traffic-adp",
    version,
    about = "Online ADP control of mean-field traffic"
)]
pub struct Args {
    #[arg(long, value_enum, default_value = "adp")]
    pub mode: RunMode,
    /// Configuration file, or `defaults` for the built-in parameters.
    #[arg(long, default_value = "defaults")]
    pub config: String,
    /// Overrides `out_dir` from the configuration.
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
    /// Overrides `rng_seed` from the configuration.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Print a progress line every N steps.
    #[arg(long)]
    pub progress: Option<usize>,
}

/// Number of random states checked by `grad-check`.
const GRAD_CHECK_STATES: usize = 5;
const GRAD_CHECK_WEIGHT_SCALE: f64 = 0.3;

fn load(args: &Args) -> Result<(ModelParams, RunConfig), String> {
    let (params, mut run_cfg) = if args.config == "defaults" {
        (ModelParams::default(), RunConfig::default())
    } else {
        load_config(Path::new(&args.config)).map_err(|e| e.to_string())?
    };
    if let Some(dir) = &args.out_dir {
        run_cfg.out_dir = dir.clone();
    }
    if let Some(seed) = args.seed {
        run_cfg.rng_seed = seed;
    }
    Ok((params, run_cfg))
}

pub fn main_with<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let args = match Args::try_parse_from(argv) {
        Ok(a) => a,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                EXIT_INVALID
            } else {
                EXIT_OK
            };
        }
    };
    execute(&args)
}

pub fn execute(args: &Args) -> i32 {
    let (params, run_cfg) = match load(args) {
        Ok(v) => v,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_INVALID;
        }
    };
    let report = validate(&params, &run_cfg);
    if args.mode == RunMode::ValidateOnly {
        print!("{report}");
        return if report.is_admissible() {
            EXIT_OK
        } else {
            EXIT_INVALID
        };
    }
    if !report.is_admissible() {
        eprint!("{report}");
        eprintln!("error: configuration rejected; nothing was run");
        return EXIT_INVALID;
    }
    let grid = GridSpec::from_config(&params, &run_cfg);
    match args.mode {
        RunMode::Adp | RunMode::FkOnly => simulate(args, &params, &run_cfg, &grid),
        RunMode::McCompare => mc_compare(&params, &run_cfg, &grid),
        RunMode::GradCheck => grad_check(&params, &run_cfg, &grid),
        RunMode::ValidateOnly => unreachable!(),
    }
}

fn simulate(args: &Args, params: &ModelParams, run_cfg: &RunConfig, grid: &GridSpec) -> i32 {
    let system = if args.mode == RunMode::Adp {
        AdpSystem::new(grid, params)
    } else {
        AdpSystem::frozen(grid, params)
    };
    let s0 = match system.initial_state(run_cfg.weight_init) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_INVALID;
        }
    };
    let out_dir = &run_cfg.out_dir;
    let rendered = render_config(params, run_cfg);
    let result = (|| -> Result<_, RunError> {
        let mut sink = CsvSink::create(out_dir, grid, params.k)?;
        let config_copy = out_dir.join("config.txt");
        std::fs::write(&config_copy, &rendered)
            .map_err(|e| crate::error::OutputError::new(&config_copy, e))?;
        let opts = RunOptions {
            progress: args.progress,
            ..RunOptions::default()
        };
        let summary = run(&system, s0, run_cfg, &mut sink, &opts)?;
        drop(sink);
        emit_manifest(out_dir, &rendered)?;
        Ok(summary)
    })();
    match result {
        Ok(summary) => {
            print!("{}", summary.render());
            EXIT_OK
        }
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_ABORT
        }
    }
}

fn mc_compare(params: &ModelParams, run_cfg: &RunConfig, grid: &GridSpec) -> i32 {
    if run_cfg.mc_agents == 0 {
        eprintln!("error: mc-compare needs mc_agents > 0");
        return EXIT_INVALID;
    }
    let system = AdpSystem::frozen(grid, params);
    let s0 = match system.initial_state(run_cfg.weight_init) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_INVALID;
        }
    };
    let bin = if grid.nx.is_multiple_of(MC_BIN_FACTOR) && grid.nv.is_multiple_of(MC_BIN_FACTOR) {
        MC_BIN_FACTOR
    } else {
        1
    };
    let report = match mc::compare_with_density(
        params,
        grid,
        &s0.weights,
        &s0.rho,
        run_cfg.mc_agents,
        run_cfg.n_steps(),
        run_cfg.dt,
        run_cfg.rng_seed,
        bin,
    ) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_ABORT;
        }
    };
    print!("{report}");
    let path = run_cfg.out_dir.join("mc_report.txt");
    let written = std::fs::create_dir_all(&run_cfg.out_dir)
        .and_then(|_| std::fs::write(&path, report.to_string()));
    if let Err(e) = written {
        eprintln!("error: failed to write {}: {e}", path.display());
        return EXIT_ABORT;
    }
    EXIT_OK
}

fn grad_check(params: &ModelParams, run_cfg: &RunConfig, grid: &GridSpec) -> i32 {
    let ev = ResidualEvaluator::new(grid, params);
    let mut rng = ChaCha8Rng::seed_from_u64(run_cfg.rng_seed);
    match gradcheck::run_suite(
        &ev,
        params.k,
        GRAD_CHECK_STATES,
        GRAD_CHECK_WEIGHT_SCALE,
        &mut rng,
    ) {
        Ok(report) => {
            for e in &report.entries {
                println!("{e}");
            }
            println!("states={}", report.states);
            println!("max_rel_err={:e}", report.max_rel_err());
            println!("passed={}", report.passed());
            if report.passed() {
                EXIT_OK
            } else {
                EXIT_INVALID
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_ABORT
        }
    }
}
