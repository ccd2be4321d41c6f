use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use tensegrity_state::calibration::{CalibrationConfig, PriorsFile};
use tensegrity_state::harness::{
    calibrate_log, export_run, run_scenario, write_calibration_log, HarnessError, Scenario, ScenarioConfig,
    ScenarioKind, Setting,
};
use tensegrity_state::ranging::{read_log, write_log, LogRecord, OffsetTable};

#[derive(Parser)]
#[command(name = "tensegrity", version, about = "Tensegrity robot state estimation simulator")]
struct Cli {
    #[command(flatten)]
    model: ModelArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ModelArgs {
    /// Robot model file (TOML) used instead of the built-in six-strut robot.
    #[arg(long, global = true, conflicts_with = "superball")]
    model: Option<PathBuf>,
    /// Use the built-in six-strut robot.
    #[arg(long, global = true)]
    superball: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario and export trajectory, metrics, ranging log and config.
    Simulate {
        #[arg(long, default_value = "local")]
        scenario: ScenarioKind,
        #[arg(long, default_value = "full")]
        setting: Setting,
        /// Scenario config (TOML); unspecified fields take the scenario's defaults.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Solve anchor positions and offsets from a ranging log.
    Calibrate {
        #[arg(long)]
        log: PathBuf,
        #[arg(long)]
        priors: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Write raw ranging logs only: a calibration session, the run's
    /// ranging and the matching priors.
    Rangelog {
        #[arg(long, default_value = "local")]
        scenario: ScenarioKind,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
}

fn scenario_config(
    kind: ScenarioKind,
    path: Option<&Path>,
    seed: Option<u64>,
    model: &ModelArgs,
) -> Result<ScenarioConfig, HarnessError> {
    let mut config = match path {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| HarnessError::io(p, e))?;
            let mut table: toml::Table =
                toml::from_str(&text).map_err(|e| HarnessError::Config(format!("{}: {e}", p.display())))?;
            table.insert("scenario".into(), toml::Value::String(kind.name().into()));
            let mut base = toml::Table::try_from(ScenarioConfig::for_kind(kind))
                .map_err(|e| HarnessError::Config(e.to_string()))?;
            merge(&mut base, table);
            base.try_into().map_err(|e| HarnessError::Config(format!("{}: {e}", p.display())))?
        }
        None => ScenarioConfig::for_kind(kind),
    };
    if let Some(s) = seed {
        config.seed = s;
    }
    if let Some(m) = &model.model {
        config.model_file = Some(m.clone());
    } else if model.superball {
        config.model_file = None;
    }
    Ok(config)
}

fn merge(base: &mut toml::Table, over: toml::Table) {
    for (k, v) in over {
        match (base.get_mut(&k), v) {
            (Some(toml::Value::Table(b)), toml::Value::Table(o)) => merge(b, o),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}

fn run(cli: Cli) -> Result<(), HarnessError> {
    match cli.command {
        Command::Simulate { scenario, setting, config, seed, out } => {
            let mut c = scenario_config(scenario, config.as_deref(), seed, &cli.model)?;
            c.setting = setting;
            let run = run_scenario(c)?;
            let paths = export_run(&run, &out)?;
            let m = &run.metrics;
            println!("rms {:.4} m, max end-cap rms {:.4} m, mean covariance trace {:.3}", m.rms, m.max_endcap_rms, m.mean_cov_trace);
            println!("wrote {}", paths.metrics_json.display());
        }
        Command::Calibrate { log, priors, out, seed } => {
            let records = read_log(&log)?;
            let priors = PriorsFile::load(&priors)?;
            let file = calibrate_log(&records, &priors, &CalibrationConfig { seed, ..CalibrationConfig::default() })?;
            file.save(&out)?;
            let d = &file.diagnostics;
            println!("converged {}, loss {:.6e}, {} iterations", d.converged, d.loss, d.iterations);
        }
        Command::Rangelog { scenario, config, seed, out } => {
            let c = scenario_config(scenario, config.as_deref(), seed, &cli.model)?;
            let world = Scenario::new(c)?;
            std::fs::create_dir_all(&out).map_err(|e| HarnessError::io(&out, e))?;
            let session = world.calibration_session()?;
            write_calibration_log(&out.join("calibration_log.jsonl"), &session.log)?;
            world.priors().save(&out.join("priors.toml"))?;
            let truth = world.simulate_truth()?;
            let active = world.config.anchors.active(world.config.setting);
            let ranging = world.record_run(&truth, &active, &OffsetTable::default())?;
            let records: Vec<LogRecord> = ranging.iter().map(LogRecord::from).collect();
            write_log(&out.join("ranging.jsonl"), &records)?;
            println!("wrote {} calibration and {} run records to {}", session.log.len(), records.len(), out.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
