use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;
use thyreg::config::{Config, ConfigFile, DEFAULT_TOML};
use thyreg::record::read_csv;
use thyreg::report::{run_modes, stem, write_run, MetricsReport, OutputSpec};
use thyreg_core::scenario::{build_models, healthy_setpoint, Mode, ScenarioKind};
use thyreg_core::sim::RunStatus;
use thyreg_core::steady::{solve_steady_state, SteadyState};
use thyreg_core::IodideRegime;

const EXIT_FAILURE: u8 = 1;
const EXIT_DEGRADED: u8 = 2;
const EXIT_ABORTED: u8 = 3;

/// Closed-loop methimazole dosing on a pituitary-thyroid model.
#[derive(Parser)]
#[command(name = "thyreg", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum ScenarioArg {
    Ordinary,
    HighIodide,
    Thyrotoxicosis,
}

impl From<ScenarioArg> for ScenarioKind {
    fn from(s: ScenarioArg) -> Self {
        match s {
            ScenarioArg::Ordinary => ScenarioKind::Ordinary,
            ScenarioArg::HighIodide => ScenarioKind::HighIodide,
            ScenarioArg::Thyrotoxicosis => ScenarioKind::Thyrotoxicosis,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Nominal,
    Realistic,
    /// Nominal and realistic, run concurrently.
    Both,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a treatment scenario and write CSV, metrics and manifest.
    Run {
        #[arg(long, value_enum)]
        scenario: ScenarioArg,
        #[arg(long, value_enum)]
        mode: ModeArg,
        /// TOML configuration; the shipped defaults when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        /// Override a configuration value, e.g. `--set thyroid.g_t=3e-11`.
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
    },
    /// Print the healthy setpoint and each scenario's untreated state.
    SteadyState {
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Recompute metrics from a CSV record.
    Metrics {
        record: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Relative band half-width; the configured value when omitted.
        #[arg(long)]
        band: Option<f64>,
    },
    /// Print the shipped configuration.
    DefaultConfig,
}

fn load_config(path: Option<&Path>, overrides: &[String]) -> Result<(Config, String), String> {
    let (text, source) = match path {
        Some(p) => (std::fs::read_to_string(p).map_err(|e| format!("{}: {e}", p.display()))?, p.display().to_string()),
        None => (DEFAULT_TOML.to_string(), "shipped default".to_string()),
    };
    let mut file = ConfigFile::parse(&text).map_err(|e| e.to_string())?;
    for o in overrides {
        file.apply_override(o).map_err(|e| e.to_string())?;
    }
    let cfg = file.resolve().map_err(|e| e.to_string())?;
    Ok((cfg, source))
}

fn print_json<T: Serialize>(v: &T) -> Result<(), String> {
    println!("{}", serde_json::to_string_pretty(v).map_err(|e| e.to_string())?);
    Ok(())
}

fn cmd_run(
    scenario: ScenarioArg,
    mode: ModeArg,
    config: Option<&Path>,
    seed: u64,
    out: &Path,
    overrides: &[String],
) -> Result<u8, String> {
    let (cfg, source) = load_config(config, overrides)?;
    let kind = ScenarioKind::from(scenario);
    let modes: &[Mode] = match mode {
        ModeArg::Nominal => &[Mode::Nominal],
        ModeArg::Realistic => &[Mode::Realistic],
        ModeArg::Both => &[Mode::Nominal, Mode::Realistic],
    };
    let spec = OutputSpec { dir: out, config: &cfg, config_source: &source, overrides };
    let mut code = 0;
    for (mode, res) in modes.iter().zip(run_modes(&cfg.params, &cfg.settings, &cfg, kind, modes, seed)) {
        let run = match res {
            Ok(run) => run,
            Err(e) => {
                eprintln!("{}: {e}", stem(kind, *mode));
                code = code.max(EXIT_ABORTED);
                continue;
            }
        };
        let manifest = write_run(&run, &spec).map_err(|e| e.to_string())?;
        let m = &run.metrics;
        let days = |d: Option<u32>| d.map_or("not reached".to_string(), |d| d.to_string());
        println!(
            "{}: time to band {} (T4 {}, T3 {}, TSH {}), initial {:.3} mg, maintenance {:.3} mg, total {:.1} mg",
            stem(kind, *mode),
            days(m.time_to_band),
            days(m.time_to_band_t4),
            days(m.time_to_band_t3),
            days(m.time_to_band_tsh),
            m.initial_dose_mg,
            m.maintenance_dose_mg,
            m.total_drug_mg,
        );
        if let RunStatus::Aborted(why) = &run.record.status {
            eprintln!("{}: aborted: {why}", stem(kind, *mode));
            code = code.max(EXIT_ABORTED);
        } else if manifest.degraded_solves > 0 {
            eprintln!("{}: {} controller solves did not converge", stem(kind, *mode), manifest.degraded_solves);
            code = code.max(EXIT_DEGRADED);
        }
    }
    Ok(code)
}

#[derive(Serialize)]
struct UntreatedState {
    scenario: &'static str,
    state: SteadyState,
}

#[derive(Serialize)]
struct SteadyReport {
    healthy: SteadyState,
    untreated: Vec<UntreatedState>,
}

fn cmd_steady_state(config: Option<&Path>) -> Result<u8, String> {
    let (cfg, _) = load_config(config, &[])?;
    let healthy = solve_steady_state(&cfg.params.model(IodideRegime::Normal), 0.0).map_err(|e| e.to_string())?;
    let mut untreated = Vec::new();
    for kind in ScenarioKind::ALL {
        let sc = cfg.scenario(kind, Mode::Nominal, 0);
        let models = build_models(&cfg.params, &sc).map_err(|e| e.to_string())?;
        let state = solve_steady_state(&models.plant, 0.0).map_err(|e| e.to_string())?;
        untreated.push(UntreatedState { scenario: kind.name(), state });
    }
    print_json(&SteadyReport { healthy, untreated })?;
    Ok(0)
}

fn cmd_metrics(record: &Path, config: Option<&Path>, band: Option<f64>) -> Result<u8, String> {
    let (cfg, _) = load_config(config, &[])?;
    let file = std::fs::File::open(record).map_err(|e| format!("{}: {e}", record.display()))?;
    let rec = read_csv(std::io::BufReader::new(file)).map_err(|e| e.to_string())?;
    let setpoint = healthy_setpoint(&cfg.params).map_err(|e| e.to_string())?;
    let metrics = rec.metrics(&setpoint, band.unwrap_or(cfg.settings.band));
    let name = record.file_stem().and_then(|s| s.to_str()).unwrap_or("");
    let (scenario, mode) = name.rsplit_once('_').unwrap_or((name, ""));
    print_json(&MetricsReport {
        scenario: scenario.to_string(),
        mode: mode.to_string(),
        seed: 0,
        status: RunStatus::Completed,
        setpoint,
        metrics,
    })?;
    Ok(0)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(EXIT_FAILURE) } else { ExitCode::SUCCESS };
        }
    };
    let res = match &cli.command {
        Command::Run { scenario, mode, config, seed, out, overrides } => {
            cmd_run(*scenario, *mode, config.as_deref(), *seed, out, overrides)
        }
        Command::SteadyState { config } => cmd_steady_state(config.as_deref()),
        Command::Metrics { record, config, band } => cmd_metrics(record, config.as_deref(), *band),
        Command::DefaultConfig => {
            print!("{DEFAULT_TOML}");
            Ok(0)
        }
    };
    match res {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(EXIT_FAILURE)
        }
    }
}
