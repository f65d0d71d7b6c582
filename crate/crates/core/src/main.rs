use clap::Parser;
use langevin_msa::harness::{self, config::{ExperimentConfig, Mode, RawConfig}};
use langevin_msa::Error;
use std::path::PathBuf;
use std::process::ExitCode;

/// Langevin sampling experiments: convergence sweeps, order and
/// contraction verification, and mixing-time bound reports.
///
/// Exit codes: 0 all checks passed, 1 a check failed, 2 error.
#[derive(Parser)]
#[command(name = "langevin-msa", version)]
struct Cli {
    /// One of: sweep-dim, sweep-step, verify-orders, verify-contraction,
    /// bounds-report, lower-bound-check, sample
    mode: String,
    /// Flat key=value config file; `# key = value` header lines from a
    /// previous output parse directly
    #[arg(long)]
    config: Option<PathBuf>,
    /// Potential template: f1(d), f2(d), quadratic, quadratic(l1,l2,...),
    /// or quadratic(m=..,L=..,d=..) with d coordinates per block
    #[arg(long)]
    potential: Option<String>,
    /// Comma-separated dimensions (block sizes for lower-bound-check)
    #[arg(long, value_name = "LIST")]
    d: Option<String>,
    /// Comma-separated step sizes
    #[arg(long, value_name = "LIST")]
    h: Option<String>,
    /// Chains run per experiment
    #[arg(long)]
    replicas: Option<usize>,
    /// Iteration count for step-driven modes
    #[arg(long)]
    steps: Option<u64>,
    /// Time horizon for the step sweep
    #[arg(long)]
    time: Option<f64>,
    /// Base seed; all randomness derives from it
    #[arg(long)]
    seed: Option<u64>,
    /// Also write the report to this path
    #[arg(long)]
    out: Option<PathBuf>,
    /// Comma-separated target accuracies for bound reports
    #[arg(long, value_name = "LIST")]
    eps: Option<String>,
}

fn execute(cli: Cli) -> langevin_msa::Result<bool> {
    let mode = Mode::parse(&cli.mode)?;
    let mut raw = match &cli.config {
        Some(path) => RawConfig::from_file(path)?,
        None => RawConfig::new(),
    };
    for w in &raw.warnings {
        eprintln!("warning: {w}");
    }
    if let Some(v) = cli.potential {
        raw.set("potential", v);
    }
    if let Some(v) = cli.d {
        raw.set("d_list", v);
    }
    if let Some(v) = cli.h {
        raw.set("h_list", v);
    }
    if let Some(v) = cli.replicas {
        raw.set("replicas", v.to_string());
    }
    if let Some(v) = cli.steps {
        raw.set("steps", v.to_string());
    }
    if let Some(v) = cli.time {
        raw.set("time", v.to_string());
    }
    if let Some(v) = cli.seed {
        raw.set("seed", v.to_string());
    }
    if let Some(v) = cli.out {
        raw.set("out", v.display().to_string());
    }
    if let Some(v) = cli.eps {
        raw.set("eps_list", v);
    }

    let cfg = ExperimentConfig::resolve(mode, &raw)?;
    if cfg.workers > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.workers)
            .build_global()
            .map_err(|e| Error::Config(format!("worker pool: {e}")))?;
    }

    let report = harness::run(&cfg)?;
    if let Some(path) = &cfg.out {
        std::fs::write(path, &report.content)?;
    }
    print!("{}", report.content);
    Ok(report.passed)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
