use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use aoi2d::scenario::{preset, preset_names, run_scenario, RunOptions, ScenarioConfig};

/// Workbench for the 2D age of information of distributed sensors observing
/// a correlated spatio-temporal process.
#[derive(Parser)]
#[command(name = "aoi2d", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario from a config file or a built-in preset.
    Run {
        /// Path to a TOML scenario config.
        config: Option<PathBuf>,
        /// Use a built-in preset instead of a config file.
        #[arg(long, conflicts_with = "config")]
        preset: Option<String>,
        /// Output directory for results.csv, manifest.json and plot data.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Master seed override.
        #[arg(long)]
        seed: Option<u64>,
        /// Worker threads; the AOI2D_WORKERS environment variable overrides
        /// this flag.
        #[arg(long)]
        workers: Option<usize>,
        /// Refine the per-curve mean minimum by golden-section search.
        #[arg(long)]
        refine_min: bool,
    },
    /// Check a scenario config without running it.
    Validate { config: PathBuf },
    /// List the built-in presets.
    Presets {
        /// Print the full TOML of one preset instead of the list.
        #[arg(long)]
        show: Option<String>,
    },
}

fn load(config: Option<&PathBuf>, preset_name: Option<&String>) -> Result<ScenarioConfig, String> {
    match (config, preset_name) {
        (Some(path), None) => ScenarioConfig::from_path(path).map_err(|e| e.to_string()),
        (None, Some(name)) => preset(name).map_err(|e| e.to_string()),
        (None, None) => Err("either a config path or --preset is required".into()),
        (Some(_), Some(_)) => unreachable!("clap enforces the conflict"),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Run { config, preset, out, seed, workers, refine_min } => {
            let cfg = match load(config.as_ref(), preset.as_ref()) {
                Ok(cfg) => cfg,
                Err(e) => {
                    eprintln!("error: {e}");
                    return ExitCode::from(2);
                }
            };
            let workers = std::env::var("AOI2D_WORKERS")
                .ok()
                .and_then(|v| v.parse().ok())
                .or(workers);
            let opts = RunOptions { out_dir: out, seed, workers, refine_min };
            match run_scenario(&cfg, &opts) {
                Ok(table) => {
                    let failures: Vec<_> =
                        table.rows.iter().filter(|r| !r.note.is_empty()).collect();
                    println!(
                        "{}: {} rows, {} failed",
                        cfg.name,
                        table.rows.len(),
                        failures.len()
                    );
                    if let Some(dir) = &opts.out_dir {
                        println!("results written to {}", dir.display());
                    } else {
                        let _ = table.write_csv(std::io::stdout().lock());
                    }
                    if failures.is_empty() {
                        ExitCode::SUCCESS
                    } else {
                        let summary = serde_json::json!({
                            "failed_points": failures
                                .iter()
                                .map(|r| serde_json::json!({
                                    "curve": r.curve,
                                    "sweep": r.sweep,
                                    "metric": r.metric,
                                    "reason": r.note,
                                }))
                                .collect::<Vec<_>>(),
                        });
                        eprintln!("{summary}");
                        ExitCode::FAILURE
                    }
                }
                Err(e) => {
                    eprintln!("error: {e}");
                    ExitCode::from(2)
                }
            }
        }
        Command::Validate { config } => match ScenarioConfig::from_path(&config) {
            Ok(cfg) => {
                println!("ok: {}", cfg.name);
                ExitCode::SUCCESS
            }
            Err(e) => {
                eprintln!("invalid: {e}");
                ExitCode::FAILURE
            }
        },
        Command::Presets { show } => match show {
            None => {
                for name in preset_names() {
                    println!("{name}");
                }
                ExitCode::SUCCESS
            }
            Some(name) => match preset(&name) {
                Ok(cfg) => {
                    print!("{}", cfg.to_toml_string());
                    ExitCode::SUCCESS
                }
                Err(e) => {
                    eprintln!("error: {e}");
                    ExitCode::FAILURE
                }
            },
        },
    }
}
