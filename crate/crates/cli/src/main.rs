//! Batch experiment runner.
//!
//! Exit codes: 0 success, 1 a check failed, an estimate was unstable or a
//! replay did not reproduce, 2 invalid configuration or input files.

mod config;
mod pipeline;

use clap::{Args, Parser, Subcommand};
use config::ExperimentConfig;
use mvpoincare::distance::replay_witness;
use mvpoincare::{GaussianTarget, Mat, TestFunction};
use pipeline::{read_samples, Pipeline, RunError, RunResult, WitnessFile};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "mvpoincare", version, about = "Normal approximation experiments for Poisson functionals")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Worker threads (1 gives the canonical run; outputs do not depend on it).
    #[arg(long, global = true)]
    workers: Option<usize>,
}

#[derive(Args, Clone)]
struct Common {
    /// Experiment configuration (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Root seed; overrides `seed` in the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory; overrides `out` in the config (default "results").
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate the functional at every scale and write the samples.
    Simulate(Common),
    /// Estimate the gamma ingredients and the covariance.
    Gammas(Common),
    /// Assemble the configured bounds from the gamma estimates.
    Bounds(Common),
    /// Estimate distances to the Gaussian target and write witnesses.
    Distances(Common),
    /// Run the smoothing, second-moment and inverse-distance checks.
    SteinChecks(Common),
    /// Fit rate slopes of distances and bounds across the scales.
    Rates(Common),
    /// Every stage above, with a summary.
    Run(Common),
    /// Recompute a recorded distance from its witness file.
    Replay {
        #[arg(long)]
        witness: PathBuf,
        /// Samples to evaluate on (default: the samples the witness was found on).
        #[arg(long)]
        samples: Option<PathBuf>,
    },
}

fn load(c: &Common) -> RunResult<Pipeline> {
    let mut cfg = ExperimentConfig::load(&c.config).map_err(RunError::Input)?;
    if let Some(s) = c.seed {
        cfg.seed = s;
    }
    let out = c.out.clone().or_else(|| cfg.out.clone()).unwrap_or_else(|| PathBuf::from("results"));
    Pipeline::new(cfg, out)
}

fn finish(p: &Pipeline) -> RunResult<ExitCode> {
    p.write_summary()?;
    let unstable = p.gamma_instabilities();
    let failed = p.failed_checks();
    for u in &unstable {
        eprintln!("unstable estimate: {u}");
    }
    for f in &failed {
        eprintln!("check failed: {f}");
    }
    println!("wrote results to {}", p.out.display());
    Ok(if unstable.is_empty() && failed.is_empty() { ExitCode::SUCCESS } else { ExitCode::from(1) })
}

fn replay(witness: &Path, samples: Option<&Path>) -> RunResult<ExitCode> {
    let text = std::fs::read_to_string(witness).map_err(|e| RunError::Input(format!("{}: {e}", witness.display())))?;
    let wf: WitnessFile = toml::from_str(&text).map_err(|e| RunError::Input(format!("{}: {e}", witness.display())))?;
    let h = TestFunction::from_witness(&wf.witness).map_err(|e| RunError::Input(e.to_string()))?;
    let seed: u64 = wf.gauss_seed.parse().map_err(|_| RunError::Input("gauss_seed is not an integer".into()))?;
    let target = GaussianTarget::new(Mat::from_rows(&wf.sigma).map_err(|e| RunError::Input(e.to_string()))?)
        .map_err(|e| RunError::Input(e.to_string()))?;
    let recorded = samples.is_none();
    let path = match samples {
        Some(p) => p.to_path_buf(),
        None => witness.parent().unwrap_or(Path::new(".")).join(&wf.samples),
    };
    let s = read_samples(&path)?;
    if s.m != target.dim() || h.dim() != s.m {
        return Err(RunError::Input(format!("samples have dimension {}, witness {}", s.m, h.dim())));
    }
    let v = replay_witness(&s, &target, &h, wf.n_gauss, seed);
    println!("metric,recorded,replayed,n_samples");
    println!("{},{:?},{:?},{}", wf.metric, wf.value, v, s.n);
    if recorded && v != wf.value {
        eprintln!("replay mismatch: recorded {:?}, replayed {v:?}", wf.value);
        return Ok(ExitCode::from(1));
    }
    Ok(ExitCode::SUCCESS)
}

fn dispatch(cmd: Command) -> RunResult<ExitCode> {
    match cmd {
        Command::Replay { witness, samples } => replay(&witness, samples.as_deref()),
        Command::Simulate(c) => {
            let mut p = load(&c)?;
            for k in 0..p.n_scales() {
                p.samples(k)?;
            }
            finish(&p)
        }
        Command::Gammas(c) => {
            let mut p = load(&c)?;
            for k in 0..p.n_scales() {
                p.gammas(k)?;
            }
            finish(&p)
        }
        Command::Bounds(c) => {
            let mut p = load(&c)?;
            for k in 0..p.n_scales() {
                p.bounds(k)?;
            }
            finish(&p)
        }
        Command::Distances(c) => {
            let mut p = load(&c)?;
            for k in 0..p.n_scales() {
                p.distances(k)?;
            }
            finish(&p)
        }
        Command::SteinChecks(c) => {
            let mut p = load(&c)?;
            for k in 0..p.n_scales() {
                p.stein(k)?;
            }
            finish(&p)
        }
        Command::Rates(c) => {
            let mut p = load(&c)?;
            p.rates(false)?;
            finish(&p)
        }
        Command::Run(c) => {
            let mut p = load(&c)?;
            for k in 0..p.n_scales() {
                p.samples(k)?;
                p.bounds(k)?;
                p.distances(k)?;
                p.stein(k)?;
            }
            p.rates(true)?;
            finish(&p)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.workers {
        if n == 0 {
            eprintln!("error: --workers must be >= 1");
            return ExitCode::from(2);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    }
    match dispatch(cli.command) {
        Ok(code) => code,
        Err(RunError::Input(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
        Err(RunError::Runtime(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
