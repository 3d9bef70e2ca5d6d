use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use converge_core::harness::{
    eigen_convergence_experiment_with, fit_trial_csv, run_convergence_experiment_with, ExperimentConfig, RunOptions,
};
use converge_core::Error;

#[derive(Parser)]
#[command(name = "converge", version, about = "Discrete vs continuum manifold network convergence experiments")]
struct Cli {
    /// Worker threads (defaults to all cores).
    #[arg(long, global = true, env = "CONVERGE_THREADS")]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the network convergence experiment described by a config.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// 10 log-spaced sizes from 2^10 to 2^14 with 100 trials each.
        #[arg(long)]
        full: bool,
        #[arg(long, default_value = ".")]
        out_dir: PathBuf,
        /// Memory cap for concurrently running trials, in MiB.
        #[arg(long, default_value_t = 2048)]
        memory_mb: usize,
        #[arg(long, short)]
        quiet: bool,
    },
    /// Run the eigenpair convergence experiment described by a config.
    Eigen {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value = ".")]
        out_dir: PathBuf,
        #[arg(long, default_value_t = 2048)]
        memory_mb: usize,
        #[arg(long, short)]
        quiet: bool,
    },
    /// Recompute per-n means and the log-log fit from a trial CSV.
    Fit {
        #[arg(long)]
        csv: PathBuf,
    },
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) => 2,
        Error::TooManyFailures { .. } => 3,
        _ => 1,
    }
}

fn load(path: &Path, full: bool) -> converge_core::Result<ExperimentConfig> {
    let cfg = ExperimentConfig::load(path)?;
    Ok(if full { cfg.into_full_scale() } else { cfg })
}

fn run(cli: Cli) -> converge_core::Result<()> {
    if let Some(threads) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    }
    match cli.command {
        Command::Run {
            config,
            full,
            out_dir,
            memory_mb,
            quiet,
        } => {
            let cfg = load(&config, full)?;
            let opts = RunOptions {
                memory_budget_bytes: memory_mb << 20,
                progress: !quiet,
            };
            let res = run_convergence_experiment_with(&cfg, &opts)?;
            let paths = res.write_outputs(&out_dir, &cfg.output)?;
            for s in &res.per_n {
                println!("{:>6}  {:.6e}  ± {:.2e}  ({} trials)", s.n, s.mean, s.std, s.trials_ok);
            }
            match res.fit {
                Some(fit) => println!("slope {:.4}  intercept {:.4}  r2 {:.4}", fit.slope, fit.intercept, fit.r2),
                None => println!("no fit (errors at roundoff level or too few sizes)"),
            }
            if let Some(r) = res.quadrature_residual.filter(|r| *r > 0.05) {
                eprintln!("warning: hidden-layer re-expansion residual {r:.3e}");
            }
            eprintln!(
                "calibration {} ({:.6}); {} failed trials; {:.1}s; wrote {}",
                res.calibration.path,
                res.calibration.constant,
                res.failed_trials,
                res.wall_clock.as_secs_f64(),
                paths.csv.display()
            );
        }
        Command::Eigen {
            config,
            out_dir,
            memory_mb,
            quiet,
        } => {
            let cfg = load(&config, false)?;
            let opts = RunOptions {
                memory_budget_bytes: memory_mb << 20,
                progress: !quiet,
            };
            let res = eigen_convergence_experiment_with(&cfg, &opts)?;
            let paths = res.write_outputs(&out_dir, &cfg.output)?;
            for s in &res.indices {
                let slope = |f: Option<converge_core::harness::LogLogFit>| {
                    f.map_or("-".to_string(), |f| format!("{:.4}", f.slope))
                };
                println!(
                    "index {:>3} (λ = {}): eigenvalue slope {}, eigenvector slope {}",
                    s.index,
                    s.eigenvalue,
                    slope(s.eigenvalue_fit),
                    slope(s.eigenvector_fit)
                );
            }
            eprintln!("{:.1}s; wrote {}", res.wall_clock.as_secs_f64(), paths.summary.display());
        }
        Command::Fit { csv } => {
            let (per_n, fit) = fit_trial_csv(&csv)?;
            for s in &per_n {
                println!("{:>6}  {:.6e}  ± {:.2e}  ({} trials)", s.n, s.mean, s.std, s.trials_ok);
            }
            match fit {
                Some(fit) => println!("slope {:.4}  intercept {:.4}  r2 {:.4}", fit.slope, fit.intercept, fit.r2),
                None => println!("no fit"),
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
