//! `cvqkd` command-line front end.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use cvqkd::experiments::{self, RunConfig, SweepSpec};
use cvqkd::optimizer;
use cvqkd::Error;

const EXIT_CONFIG: u8 = 2;
const EXIT_BUDGET: u8 = 3;
const EXIT_RUNTIME: u8 = 4;

#[derive(Parser)]
#[command(name = "cvqkd", version, about = "CV-QKD transceiver simulation and REINFORCE filter optimization")]
struct Cli {
    /// Worker threads (overrides the config; 0 = one per core).
    #[arg(long, global = true)]
    workers: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the chain once with truncated-RRC filters; prints budget and SKR.
    Simulate {
        /// Run configuration (JSON); defaults when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Optimize filters and photon number; writes trace.csv and result.json.
    Optimize {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run a sweep specification; writes records.json, CSVs and a manifest.
    Sweep {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// SKR versus mean photon number with fixed truncated-RRC filters.
    PhotonScan {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print every default as JSON.
    Defaults,
    /// Regenerate CSVs and manifest from a records file.
    Report {
        #[arg(long)]
        records: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

struct Failure {
    code: u8,
    message: String,
}

fn config_failure(e: impl std::fmt::Display) -> Failure {
    Failure {
        code: EXIT_CONFIG,
        message: e.to_string(),
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::Budget { .. } => EXIT_BUDGET,
            Error::Config(_) => EXIT_CONFIG,
            _ => EXIT_RUNTIME,
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

fn read_text(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| config_failure(format!("{}: {e}", path.display())))
}

fn load_run_config(path: Option<&Path>, workers: Option<usize>) -> Result<RunConfig, Failure> {
    let mut cfg = match path {
        Some(p) => RunConfig::from_json(&read_text(p)?).map_err(config_failure)?,
        None => RunConfig::default(),
    };
    if let Some(w) = workers {
        cfg.optimizer.workers = w;
    }
    Ok(cfg)
}

fn print_json(value: &impl serde::Serialize) -> Result<(), Failure> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Failure::from(Error::from(e)))?;
    let mut out = std::io::stdout().lock();
    match writeln!(out, "{text}") {
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(Failure::from(Error::from(e))),
        _ => Ok(()),
    }
}

fn create_dir(path: &Path) -> Result<(), Failure> {
    fs::create_dir_all(path).map_err(|e| Failure::from(Error::from(e)))
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Simulate { config } => {
            let cfg = load_run_config(config.as_deref(), cli.workers)?;
            let trx = cfg.unoptimized()?;
            let out = experiments::evaluate_point(&cfg.link, &trx, cfg.beta, cfg.score, cfg.symbol_rate)?;
            print_json(&out)
        }
        Command::Optimize { config, out } => {
            let cfg = load_run_config(config.as_deref(), cli.workers)?;
            let link = cvqkd::link::Link::new(cfg.link.clone())?;
            let init = cfg.initial_policy()?;
            let outcome = optimizer::optimize(&link, &init, &cfg.optimizer, &mut |r| {
                eprintln!("iteration {} mean {:.6e} best {:.6e}", r.iteration, r.mean_reward, r.best_reward)
            })?;
            let best = outcome.best_transceiver()?;
            let evaluation = experiments::evaluate_point(&cfg.link, &best, cfg.beta, cfg.score, cfg.symbol_rate)?;
            create_dir(&out)?;
            experiments::write_trace_csv(&out.join("trace.csv"), &outcome.trace)?;
            let result = serde_json::json!({
                "artifact_version": cvqkd::ARTIFACT_VERSION,
                "config": cfg,
                "initial_reward": outcome.initial_reward,
                "best_reward": outcome.best_reward,
                "best": best,
                "evaluation": evaluation,
            });
            let text = serde_json::to_string_pretty(&result).map_err(|e| Failure::from(Error::from(e)))?;
            fs::write(out.join("result.json"), text + "\n").map_err(|e| Failure::from(Error::from(e)))?;
            print_json(&evaluation)
        }
        Command::Sweep { spec, out } => {
            let mut spec = SweepSpec::from_json(&read_text(&spec)?).map_err(config_failure)?;
            if let Some(w) = cli.workers {
                spec.workers = w;
            }
            let records = experiments::run_sweep_with(&spec, &mut |r| {
                eprintln!(
                    "{:?} {:?} L={} km b={} taps={}/{} skr={:.6e}",
                    r.kind,
                    r.mode,
                    r.link.distance_km,
                    r.link.dac.bits,
                    r.link.tx_len,
                    r.link.rx_len,
                    r.outputs.skr_bits_per_symbol
                )
            })?;
            create_dir(&out)?;
            experiments::write_records(&out.join("records.json"), &records)?;
            experiments::report(&records, &out)?;
            Ok(())
        }
        Command::PhotonScan { config, out } => {
            let cfg = load_run_config(config.as_deref(), cli.workers)?;
            let trx = cfg.unoptimized()?;
            let pool = rayon_pool(cfg.optimizer.workers)?;
            let scan = pool.install(|| experiments::photon_scan(&cfg.link, &trx, &cfg.photon_grid, cfg.beta, cfg.score))?;
            create_dir(&out)?;
            experiments::write_photon_scan_csv(&out.join("photon_scan.csv"), &scan)?;
            print_json(&serde_json::json!({ "argmax": scan.argmax, "max_skr_bits_per_symbol": scan.max_skr }))
        }
        Command::Defaults => print_json(&experiments::defaults_document()),
        Command::Report { records, out } => {
            let records = experiments::parse_records(&read_text(&records)?).map_err(config_failure)?;
            experiments::report(&records, &out)?;
            Ok(())
        }
    }
}

fn rayon_pool(workers: usize) -> Result<rayon::ThreadPool, Failure> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Failure {
            code: EXIT_RUNTIME,
            message: e.to_string(),
        })
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
