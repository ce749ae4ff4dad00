use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use qhack::harness::{
    audit, presets, resolve_document, run_detailed, sweep, ConfigError, RunError, ScenarioConfig,
};

/// BB84 link simulator with detector attacks and countermeasures.
///
/// CONFIG is a TOML file, or the name of a built-in preset.
#[derive(Parser)]
#[command(name = "qhack", version)]
struct Cli {
    /// Override the root seed of the scenario.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario and print its report as a JSON line.
    Run {
        config: String,
        /// Write the final key as hex to this file.
        #[arg(long)]
        key_out: Option<PathBuf>,
    },
    /// Rerun a scenario for each value of one dotted parameter.
    Sweep {
        config: String,
        #[arg(long)]
        param: String,
        #[arg(long, num_args = 1.., required = true, allow_hyphen_values = true)]
        values: Vec<String>,
    },
    /// Run the attack-versus-countermeasure matrix of the `[audit]` table.
    Audit {
        config: String,
        #[arg(long)]
        runs: Option<u32>,
        /// Also write the matrix as CSV.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// List or print the built-in presets.
    Presets {
        #[command(subcommand)]
        action: PresetAction,
    },
}

#[derive(Subcommand)]
enum PresetAction {
    List,
    Show { name: String },
}

enum Failure {
    Config(String),
    Run(String),
    /// Already reported on stderr.
    Reported(u8),
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Self::Config(e.to_string())
    }
}

impl From<RunError> for Failure {
    fn from(e: RunError) -> Self {
        if e.is_config() {
            Self::Config(e.to_string())
        } else {
            Self::Run(e.to_string())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Run(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(3)
        }
        Err(Failure::Reported(code)) => ExitCode::from(code),
    }
}

fn config_text(arg: &str) -> Result<String, Failure> {
    let path = Path::new(arg);
    if !path.exists() && presets::scenario_toml(arg).is_some() {
        return Ok(format!("preset = \"{arg}\"\n"));
    }
    std::fs::read_to_string(path).map_err(|e| Failure::Config(format!("cannot read {arg}: {e}")))
}

fn load(arg: &str, seed: Option<u64>) -> Result<ScenarioConfig, Failure> {
    let mut cfg = ScenarioConfig::from_toml_str(&config_text(arg)?)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

fn dispatch(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Run { config, key_out } => {
            let cfg = load(&config, cli.seed)?;
            let (report, _, key) = run_detailed(&cfg)?;
            println!("{}", report.to_json_line());
            if let Some(path) = key_out {
                std::fs::write(&path, key.to_hex() + "\n")
                    .map_err(|e| Failure::Run(format!("cannot write {}: {e}", path.display())))?;
            }
        }
        Command::Sweep { config, param, values } => {
            let doc = resolve_document(&config_text(&config)?)?;
            let mut first_err = None;
            for point in sweep(&doc, &param, &values, cli.seed) {
                match point {
                    Ok(p) => println!("{}", serde_json::to_string(&p).expect("serializable")),
                    Err(e) => {
                        eprintln!("error: {e}");
                        first_err.get_or_insert(if e.is_config() { 2 } else { 3 });
                    }
                }
            }
            if let Some(code) = first_err {
                return Err(Failure::Reported(code));
            }
        }
        Command::Audit { config, runs, csv } => {
            let cfg = load(&config, cli.seed)?;
            let spec =
                cfg.audit.clone().ok_or_else(|| Failure::Config(format!("{config} has no [audit] table")))?;
            let matrix = audit(&cfg, &spec.attacks, &spec.stacks, runs.unwrap_or(spec.runs_per_cell));
            for cell in &matrix.cells {
                println!("{}", serde_json::to_string(cell).expect("serializable"));
            }
            if let Some(path) = csv {
                std::fs::write(&path, matrix.to_csv())
                    .map_err(|e| Failure::Run(format!("cannot write {}: {e}", path.display())))?;
            }
            if let Some(cell) = matrix.cells.iter().find(|c| c.error.is_some()) {
                return Err(Failure::Run(format!(
                    "{} vs {}: {}",
                    cell.attack,
                    cell.stack,
                    cell.error.as_deref().unwrap_or_default()
                )));
            }
        }
        Command::Presets { action } => match action {
            PresetAction::List => {
                for name in presets::scenario_names() {
                    println!("{name}");
                }
            }
            PresetAction::Show { name } => {
                let text = presets::scenario_toml(&name).ok_or(ConfigError::UnknownPreset(name))?;
                println!("{}", text.trim());
            }
        },
    }
    Ok(())
}
