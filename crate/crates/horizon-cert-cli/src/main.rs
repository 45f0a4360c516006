use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand};
use horizon_cert_cli::{
    emit_gamma, emit_reports, run_bounds, run_certification, run_constants, run_simulations,
    CertificationReport, CliError, CliResult, RunOptions, ScenarioConfig,
};

/// Stabilizing-horizon and suboptimality certificates for receding-horizon
/// controllers.
#[derive(Debug, Parser)]
#[command(name = "horizon-cert", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Scenario configuration (JSON).
    #[arg(long, global = true, env = "HCERT_CONFIG")]
    config: Option<PathBuf>,
    /// Output directory; overrides output.dir from the config.
    #[arg(long, global = true, env = "HCERT_OUT")]
    out: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long, global = true, env = "HCERT_SEED")]
    seed: Option<u64>,
    /// Worker threads; defaults to one per core.
    #[arg(long, global = true, env = "HCERT_THREADS")]
    threads: Option<usize>,
    /// Also write each certificate LP in CPLEX LP format under <out>/lp.
    #[arg(long, global = true, env = "HCERT_LP_DUMP")]
    lp_dump: bool,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Estimate γ_k and storage constants at the base point.
    Constants,
    /// Bounds from the constants given in the bounds section.
    Bounds,
    /// Certify the base point and run the configured closed loops.
    Certify,
    /// Closed-loop simulation of the configured designs.
    Simulate,
    /// Certify every point of the sweep grid.
    Sweep,
}

fn run(cli: &Cli) -> CliResult<bool> {
    let path = cli
        .config
        .as_ref()
        .ok_or_else(|| CliError::Config("--config is required".into()))?;
    let mut cfg = ScenarioConfig::load(path)?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &cli.out {
        cfg.output.dir = out.clone();
    }
    let opts = RunOptions {
        lp_dump: cli.lp_dump,
    };
    let dir = cfg.output.dir.clone();
    let started = Instant::now();
    let (report, written) = match cli.command {
        Command::Constants => {
            let report = run_constants(&cfg)?;
            let written = emit_gamma(&report, &dir)?;
            (report, written)
        }
        Command::Bounds => {
            let report = run_bounds(&cfg, opts)?;
            let written = emit_reports(&report, &dir)?;
            (report, written)
        }
        Command::Certify => {
            cfg.sweep = Default::default();
            let mut report = run_certification(&cfg, opts)?;
            if cfg.simulation.is_some() {
                report.simulations = run_simulations(&cfg)?;
            }
            let written = emit_reports(&report, &dir)?;
            (report, written)
        }
        Command::Simulate => {
            let mut report = CertificationReport::empty(cfg.clone());
            report.simulations = run_simulations(&cfg)?;
            let written = emit_reports(&report, &dir)?;
            (report, written)
        }
        Command::Sweep => {
            let report = run_certification(&cfg, opts)?;
            let written = emit_reports(&report, &dir)?;
            (report, written)
        }
    };
    for p in &written {
        eprintln!("wrote {}", p.display());
    }
    for s in report.snapshots.iter().filter(|s| s.error.is_some()) {
        eprintln!(
            "constants failed at {} ({} / {}): {}",
            s.param,
            s.sigma.label(),
            s.terminal,
            s.error.as_deref().unwrap_or_default()
        );
    }
    for s in report.simulations.iter().filter(|s| s.error.is_some()) {
        eprintln!(
            "simulation {} failed: {}",
            s.name,
            s.error.as_deref().unwrap_or_default()
        );
    }
    eprintln!("elapsed {:.3} s", started.elapsed().as_secs_f64());
    Ok(!report.has_failures())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cli.threads.unwrap_or(0))
        .build();
    let pool = match pool {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: thread pool: {e}");
            return ExitCode::from(2);
        }
    };
    match pool.install(|| run(&cli)) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
