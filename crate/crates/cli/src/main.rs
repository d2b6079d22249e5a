use aclab_cli::check::{run_check, CheckOptions};
use aclab_cli::config::{RunConfig, EXAMPLE_CONFIG};
use aclab_cli::run::{cmd_diagnose, cmd_solve};
use clap::{Parser, Subcommand};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "aclab",
    version,
    about = "Allen-Cahn epsilon sweeps, diagnostics and acceptance checks"
)]
struct Cli {
    /// Log progress (repeat for more detail).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the configured epsilon sweep and write solutions plus summary.csv.
    Solve {
        #[arg(long)]
        config: PathBuf,
        /// Output directory (overrides [output] dir).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Solve every epsilon independently and in parallel.
        #[arg(long)]
        parallel_cold: bool,
    },
    /// Run the configured diagnostics on solution files.
    Diagnose {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Solution files; defaults to the solution_*.txt files in the output directory.
        solutions: Vec<PathBuf>,
    },
    /// Run the built-in acceptance suite.
    Check {
        /// Stop after the first failing criterion.
        #[arg(long)]
        fail_fast: bool,
        #[arg(long, hide = true)]
        tamper_potential: bool,
        #[arg(long, hide = true)]
        perturb_heteroclinic: bool,
    },
    /// Print a documented default configuration.
    ExampleConfig,
}

fn init_threads() {
    if let Some(n) = std::env::var("AC_LAB_THREADS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
    {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global() {
            log::warn!("AC_LAB_THREADS ignored: {e}");
        }
    }
}

fn load(config: &Path) -> Result<RunConfig, ExitCode> {
    RunConfig::from_path(config).map_err(|e| {
        eprintln!("config error: {e}");
        ExitCode::from(2)
    })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    init_threads();

    match cli.command {
        Command::ExampleConfig => {
            print!("{EXAMPLE_CONFIG}");
            ExitCode::SUCCESS
        }
        Command::Solve {
            config,
            out,
            parallel_cold,
        } => {
            let cfg = match load(&config) {
                Ok(c) => c,
                Err(code) => return code,
            };
            let out = out.unwrap_or_else(|| cfg.output.dir.clone());
            match cmd_solve(&cfg, &out, parallel_cold) {
                Ok(report) => {
                    for s in &report.summaries {
                        match &s.error {
                            None => println!(
                                "eps {}: energy {:.10} lambda {:.6e} residual {:.3e} max|u| {:.6}",
                                s.epsilon, s.energy, s.lambda, s.residual, s.max_abs
                            ),
                            Some(e) => println!("eps {}: FAILED {e}", s.epsilon),
                        }
                    }
                    if report.summaries.iter().any(|s| s.error.is_some()) {
                        ExitCode::from(3)
                    } else {
                        ExitCode::SUCCESS
                    }
                }
                Err(e) => {
                    eprintln!("error: {e}");
                    ExitCode::from(e.exit_code() as u8)
                }
            }
        }
        Command::Diagnose { config, out, solutions } => {
            let cfg = match load(&config) {
                Ok(c) => c,
                Err(code) => return code,
            };
            let out = out.unwrap_or_else(|| cfg.output.dir.clone());
            match cmd_diagnose(&cfg, &solutions, &out) {
                Ok(report) => {
                    println!("{} tables written to {}", report.tables.len(), out.display());
                    for (n, v) in &report.fitted {
                        println!("fitted {n} = {v:.6e}");
                    }
                    for c in &report.checks {
                        println!("{}", c.line());
                    }
                    ExitCode::SUCCESS
                }
                Err(e) => {
                    eprintln!("error: {e}");
                    ExitCode::from(e.exit_code() as u8)
                }
            }
        }
        Command::Check {
            fail_fast,
            tamper_potential,
            perturb_heteroclinic,
        } => {
            let mut opts = CheckOptions::default();
            if tamper_potential {
                opts.potential = CheckOptions::tampered_potential().potential;
            }
            if perturb_heteroclinic {
                opts.heteroclinic_scale = CheckOptions::perturbed_heteroclinic().heteroclinic_scale;
            }
            let report = run_check(opts, fail_fast);
            for l in report.lines() {
                println!("{l}");
            }
            if let Some(f) = report.first_failure() {
                eprintln!("first failure: {}", f.line());
            }
            if report.passed() {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            }
        }
    }
}
