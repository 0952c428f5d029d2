use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use chilasso_cli::config::{ExperimentConfig, Mode};
use clap::Parser;

/// Grouped sparse coding experiments: dictionary learning, audio source
/// identification, texture separation and synthetic benchmarks.
#[derive(Debug, Parser)]
#[command(name = "chilasso", version)]
struct Cli {
    /// JSON configuration file; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_enum)]
    mode: Option<Mode>,
    #[arg(long)]
    seed: Option<u64>,
    /// Also run the Lasso and C-GLasso baselines.
    #[arg(long)]
    baselines: bool,
    /// Replace an existing output directory.
    #[arg(long)]
    force: bool,
    /// Worker threads.
    #[arg(long)]
    jobs: Option<usize>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Print the resolved configuration and exit.
    #[arg(long)]
    print_config: bool,
}

fn build_config(cli: &Cli) -> Result<ExperimentConfig> {
    let mut cfg = match &cli.config {
        Some(p) => ExperimentConfig::from_file(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(m) = cli.mode {
        cfg.mode = m;
    }
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(j) = cli.jobs {
        cfg.jobs = Some(j);
    }
    if let Some(o) = &cli.out {
        cfg.out = o.clone();
    }
    cfg.baselines |= cli.baselines;
    cfg.force |= cli.force;
    cfg.resolve()
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let cfg = match build_config(&cli) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e:#}");
            return ExitCode::from(2);
        }
    };
    if cli.print_config {
        println!(
            "{}",
            serde_json::to_string_pretty(&cfg).expect("config serializes")
        );
        return ExitCode::SUCCESS;
    }
    if let Some(j) = cfg.jobs {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(j)
            .build_global()
        {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    }
    match chilasso_cli::run(&cfg) {
        Ok(summary) => {
            for s in &summary.scores {
                println!(
                    "{:<10} mean hamming {:.3}  exact {:.3}{}",
                    s.method.name(),
                    s.mean_hamming,
                    s.exact_rate,
                    s.mean_psnr
                        .map(|p| format!("  APSNR {p:.2} dB"))
                        .unwrap_or_default()
                );
            }
            for c in summary.checks.iter().filter(|c| !c.passed) {
                eprintln!("self-check failed: {} {}", c.name, c.detail);
            }
            println!("results written to {}", summary.out_dir.display());
            if summary.all_passed() {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            }
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
