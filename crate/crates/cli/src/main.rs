use std::io::{BufRead, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use toxcl::commands;
use toxcl::{CliError, PipelineConfig};
use toxcl_core::corpus::SplitName;

#[derive(Parser)]
#[command(name = "toxcl", version, about = "Implicit toxic speech detection with explanations")]
struct Cli {
    /// JSON pipeline configuration; defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Dotted-key override such as `tg.iterations=500`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    overrides: Vec<String>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Drop unexplained toxic rows and write train/valid splits.
    Preprocess,
    /// Train the target-group generator.
    TrainTg,
    /// Train the teacher classifier.
    TrainTeacher,
    /// Train the student with distillation from the latest teacher.
    Train {
        /// Loss weights, e.g. `gamma=0,alpha=0.5`.
        #[arg(long)]
        weights: Option<String>,
    },
    /// Score the latest models on a split, or rescore a predictions file.
    Evaluate {
        #[arg(long, default_value = "valid")]
        split: SplitName,
        #[arg(long)]
        predictions: Option<PathBuf>,
    },
    /// Predict posts given as arguments, or one per stdin line.
    Predict { posts: Vec<String> },
    /// Run the HTTP moderation service.
    Serve,
    /// Print the resolved configuration.
    ShowConfig,
}

fn run(cli: Cli) -> Result<(), CliError> {
    let base = match &cli.config {
        Some(path) => PipelineConfig::load(path)?,
        None => PipelineConfig::default(),
    };
    let mut config = base.with_overrides(&cli.overrides)?;
    match cli.command {
        Command::Preprocess => {
            let stats = commands::cmd_preprocess(&config)?;
            println!("{}", serde_json::to_string_pretty(&stats).map_err(toxcl_core::Error::from)?);
        }
        Command::TrainTg => println!("{}", commands::cmd_train_tg(&config)?.display()),
        Command::TrainTeacher => println!("{}", commands::cmd_train_teacher(&config)?.display()),
        Command::Train { weights } => {
            if let Some(w) = weights {
                config = config.with_weights(&w)?;
            }
            println!("{}", commands::cmd_train(&config)?.display());
        }
        Command::Evaluate { split, predictions } => {
            let eval = commands::cmd_evaluate(&config, split, predictions.as_deref())?;
            print!("{}", eval.report.to_tsv());
            println!("{}", eval.dir.display());
        }
        Command::Predict { mut posts } => {
            if posts.is_empty() {
                posts = std::io::stdin()
                    .lock()
                    .lines()
                    .collect::<Result<_, _>>()
                    .map_err(|e| toxcl_core::Error::io("<stdin>", e))?;
                posts.retain(|p| !p.trim().is_empty());
            }
            let mut out = std::io::stdout().lock();
            for p in commands::cmd_predict(&config, &posts)? {
                let line = serde_json::to_string(&p).map_err(toxcl_core::Error::from)?;
                writeln!(out, "{line}").map_err(|e| toxcl_core::Error::io("<stdout>", e))?;
            }
        }
        Command::Serve => {
            let rt = tokio::runtime::Runtime::new().map_err(|e| toxcl_core::Error::io("<runtime>", e))?;
            rt.block_on(toxcl::service::serve(config))?;
        }
        Command::ShowConfig => {
            println!("{}", serde_json::to_string_pretty(&config).map_err(toxcl_core::Error::from)?);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
