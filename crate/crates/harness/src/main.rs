use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use fedbbo::bench::{rows_csv, rows_table, run_suite, BenchSuite};
use fedbbo::plot::{render_svg, Series};
use fedbbo::replay::{load_run, replay};
use fedbbo::{ConfigError, ExperimentConfig, HarnessError, RunRecord};

#[derive(Parser)]
#[command(name = "fedbbo", version, about = "Federated black-box optimization simulator")]
struct Cli {
    /// Worker threads for per-agent work.
    #[arg(long, global = true, env = "FEDBBO_THREADS")]
    threads: Option<usize>,
    /// Suppress progress output.
    #[arg(long, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment.
    Run {
        config_path: Option<PathBuf>,
        #[arg(long = "config")]
        config: Option<PathBuf>,
        /// Override the master seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory (default: `output` from the config, else `runs/<hash>`).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check a config without running it.
    Validate {
        config_path: Option<PathBuf>,
        #[arg(long = "config")]
        config: Option<PathBuf>,
    },
    /// Recompute regret from a run's logged designs.
    Replay {
        run: PathBuf,
        /// Also rerun the experiment and compare the event logs byte for byte.
        #[arg(long)]
        rerun: bool,
    },
    /// Draw regret and bytes-per-round curves for one or more runs.
    Plot {
        #[arg(required = true)]
        runs: Vec<PathBuf>,
        #[arg(long, default_value = "regret.svg")]
        out: PathBuf,
    },
    /// Run a seed-replicated comparison grid.
    Bench {
        suite: PathBuf,
        #[arg(long, default_value = "bench")]
        out: PathBuf,
    },
}

fn config_arg(positional: Option<PathBuf>, flag: Option<PathBuf>) -> Result<PathBuf, HarnessError> {
    positional
        .or(flag)
        .ok_or_else(|| ConfigError::Invalid { path: "config".into(), message: "no config file given".into() }.into())
}

fn execute(cli: Cli) -> Result<(), HarnessError> {
    let quiet = cli.quiet;
    match cli.command {
        Command::Run { config_path, config, seed, out } => {
            let path = config_arg(config_path, config)?;
            let mut cfg = ExperimentConfig::load(&path)?;
            if let Some(s) = seed {
                cfg.seed = s;
            }
            let dir = out
                .or_else(|| cfg.output.clone())
                .unwrap_or_else(|| PathBuf::from("runs").join(&cfg.hash()[..12]));
            let rec: RunRecord = match cli.threads {
                Some(n) => fedbbo::run_with_threads(&cfg, n)?,
                None => fedbbo::run_experiment(&cfg)?,
            };
            rec.write_to(&dir)?;
            if !quiet {
                eprintln!(
                    "{}: {} agents, {} rounds, mean final simple regret {:.4e} ({:.2}s) -> {}",
                    cfg.framework.name(),
                    cfg.agents,
                    cfg.rounds,
                    rec.mean_final_regret(),
                    rec.wall_clock_secs,
                    dir.display()
                );
            }
        }
        Command::Validate { config_path, config } => {
            let path = config_arg(config_path, config)?;
            let cfg = ExperimentConfig::load(&path)?;
            if !quiet {
                println!("ok: {} ({}), hash {}", path.display(), cfg.framework.name(), cfg.hash());
            }
        }
        Command::Replay { run, rerun } => {
            let report = replay(&run, rerun)?;
            if !quiet {
                println!(
                    "{} trials, max regret diff {:.3e}, max value diff {:.3e}{}",
                    report.trials,
                    report.max_regret_diff,
                    report.max_value_diff,
                    match report.rerun_identical {
                        Some(true) => ", rerun identical",
                        Some(false) => ", rerun DIFFERS",
                        None => "",
                    }
                );
            }
            if !report.ok() {
                return Err(HarnessError::Replay("replay does not match the stored run".into()));
            }
        }
        Command::Plot { runs, out } => {
            let mut series = Vec::new();
            for r in &runs {
                let (cfg, events, _) = load_run(r)?;
                series.push(Series::from_events(format!("{} ({})", cfg.framework.name(), r.display()), &events));
            }
            std::fs::write(&out, render_svg(&series))?;
            if !quiet {
                eprintln!("wrote {}", out.display());
            }
        }
        Command::Bench { suite, out } => {
            let suite = BenchSuite::load(&suite)?;
            let run = || run_suite(&suite);
            let rows = match cli.threads {
                Some(n) => rayon::ThreadPoolBuilder::new()
                    .num_threads(n.max(1))
                    .build()
                    .map_err(|e| HarnessError::Io(std::io::Error::other(e.to_string())))?
                    .install(run)?,
                None => run()?,
            };
            std::fs::create_dir_all(&out)?;
            std::fs::write(out.join("summary.csv"), rows_csv(&rows))?;
            let table = rows_table(&rows);
            std::fs::write(out.join("summary.md"), &table)?;
            if !quiet {
                print!("{table}");
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
