use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use omniforest_cli::config::ExperimentConfig;
use omniforest_cli::{commands, CliError};

#[derive(Parser)]
#[command(
    name = "omniforest",
    version,
    about = "Lifelong learning experiments with omnidirectional forests"
)]
struct Cli {
    /// Worker threads (defaults to all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Experiment configuration (TOML).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Root seed; overrides the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Output path; overrides the config.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Repetitions; overrides the config.
    #[arg(long)]
    reps: Option<usize>,
}

impl Common {
    fn load(&self) -> Result<ExperimentConfig, CliError> {
        let mut config = match &self.config {
            Some(path) => ExperimentConfig::load(path)?,
            None => ExperimentConfig::default(),
        };
        if let Some(seed) = self.seed {
            config.seed = seed;
        }
        if let Some(out) = &self.out {
            config.output = out.clone();
        }
        if let Some(reps) = self.reps {
            config.repetitions = reps;
        }
        config.validate()?;
        Ok(config)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Write synthetic tasks as CSV.
    Generate {
        /// Environment per task: xor, xnor, rxor:<degrees>, spirals3, spirals5.
        #[arg(long = "env", required = true)]
        envs: Vec<String>,
        /// Samples per task.
        #[arg(long, default_value_t = 750)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the configured experiment.
    Run(Common),
    /// Run the scaling benchmark.
    Scaling(Common),
    /// Train on a task CSV and save the model.
    Save {
        #[command(flatten)]
        common: Common,
        /// Training tasks (f0..,label,task).
        #[arg(long)]
        data: PathBuf,
    },
    /// Load a model, optionally scoring it on a task CSV.
    Load {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: Option<PathBuf>,
    },
    /// Validate a task CSV and show its train/test split.
    Ingest {
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value_t = 0.3)]
        test_fraction: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn execute(cli: Cli) -> Result<(), CliError> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Config(format!("--threads: {e}")))?;
    }
    match cli.command {
        Command::Generate { envs, n, seed, out } => {
            commands::generate(&envs, n, seed, &out)?;
            println!("wrote {}", out.display());
        }
        Command::Run(common) => {
            let config = common.load()?;
            let (_, text) = commands::run(&config)?;
            print!("{text}");
            println!("wrote {}", config.output.display());
        }
        Command::Scaling(common) => {
            let config = common.load()?;
            let (_, text) = commands::scaling(&config)?;
            print!("{text}");
            println!("wrote {}", config.output.display());
        }
        Command::Save { common, data } => {
            let config = common.load()?;
            let out = common
                .out
                .clone()
                .unwrap_or_else(|| PathBuf::from("model.ofm"));
            println!("{}", commands::save(&data, &config, &out)?);
        }
        Command::Load { model, data } => print!("{}", commands::load(&model, data.as_deref())?),
        Command::Ingest {
            data,
            test_fraction,
            seed,
        } => print!("{}", commands::ingest(&data, test_fraction, seed)?),
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
