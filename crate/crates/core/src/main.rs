use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use comfno::experiment::{
    self, ExperimentConfig, ExperimentId, ModelKind, Preset, RunPaths, Stage,
};
use comfno::metrics::format_table;

#[derive(Parser)]
#[command(version, about = "Ground-truth generation and FNO / ComFNO training for singularly perturbed problems")]
struct Cli {
    /// Overrides the data and training seeds of every config.
    #[arg(long, global = true, env = "COMFNO_SEED")]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Draw inputs, solve on the fine mesh, write train and test sets.
    Generate {
        #[arg(long)]
        config: PathBuf,
        /// Run directory (defaults to the config's output_dir).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train one model on a generated training set.
    Train {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_enum)]
        model: ModelArg,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Evaluate both trained models on the test set.
    Evaluate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run every stage of a bundled preset.
    Reproduce {
        #[arg(long, value_enum)]
        preset: PresetArg,
        #[arg(long, default_value = "runs")]
        out: PathBuf,
        /// Restrict to these experiments (comma separated).
        #[arg(long, value_delimiter = ',')]
        only: Vec<String>,
    },
    /// Write residual-curve CSVs from an evaluated run directory.
    ExportCurves {
        #[arg(long)]
        run: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum ModelArg {
    Fno,
    Comfno,
}

#[derive(Clone, Copy, ValueEnum)]
enum PresetArg {
    Desk,
    Paper,
}

fn load(path: &PathBuf, seed: Option<u64>, out: Option<PathBuf>) -> comfno::Result<(ExperimentConfig, RunPaths)> {
    let mut cfg = ExperimentConfig::load(path)?;
    if let Some(s) = seed {
        cfg = cfg.with_seed(s);
    }
    let dir = out.unwrap_or_else(|| cfg.output_dir.clone());
    Ok((cfg, RunPaths::new(dir)))
}

fn run(cli: Cli) -> comfno::Result<()> {
    match cli.command {
        Command::Generate { config, out } => {
            let (cfg, run) = load(&config, cli.seed, out)?;
            experiment::run_experiment(&cfg, &run, Stage::Generate)?;
        }
        Command::Train { config, model, out } => {
            let (cfg, run) = load(&config, cli.seed, out)?;
            let kind = match model {
                ModelArg::Fno => ModelKind::Fno,
                ModelArg::Comfno => ModelKind::Comfno,
            };
            let ck = experiment::train(&cfg, &run, kind)?;
            if let Some(last) = ck.history.last() {
                println!("final training loss {last:.4e}");
            }
        }
        Command::Evaluate { config, out } => {
            let (cfg, run) = load(&config, cli.seed, out)?;
            let reports = experiment::run_experiment(&cfg, &run, Stage::Evaluate)?;
            print!("{}", format_table(&reports));
        }
        Command::Reproduce { preset, out, only } => {
            let preset = match preset {
                PresetArg::Desk => Preset::Desk,
                PresetArg::Paper => Preset::Paper,
            };
            let only = only.iter().map(|s| ExperimentId::parse(s)).collect::<comfno::Result<Vec<_>>>()?;
            let reports = experiment::reproduce(preset, &out, &only, cli.seed)?;
            print!("{}", format_table(&reports));
        }
        Command::ExportCurves { run, out } => {
            let path = experiment::export_curves(&RunPaths::new(run), out.as_deref())?;
            println!("wrote {}", path.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info,comfno::solvers=error")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
