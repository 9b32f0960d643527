use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use dlbp::cli::{self, Overrides};

#[derive(Parser)]
#[command(name = "dlbp", version, about = "Mixture-distribution remaining-useful-life prediction")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// TOML run configuration; built-in defaults when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    #[arg(long, global = true)]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Select sensors, normalize and window the training file.
    Preprocess,
    /// Train a model and write it with its loss and scale history.
    Train,
    /// Predict RUL for a raw trace file or a windowed-dataset file.
    Predict {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        input: PathBuf,
        /// True remaining lives for the traces in `--input`, one per line.
        #[arg(long)]
        rul: Option<PathBuf>,
    },
    /// Score a model on the configured test fleet.
    Evaluate {
        #[arg(long)]
        model: PathBuf,
    },
    /// Block-wise hyperparameter search.
    Tune,
}

fn run(cli: Cli) -> dlbp::Result<()> {
    let overrides = Overrides {
        seed: cli.common.seed,
        out_dir: cli.common.out_dir,
        threads: cli.common.threads,
    };
    let cfg = cli::load_config(cli.common.config.as_deref(), &overrides)?;
    if let Some(n) = cfg.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            log::warn!("thread pool already configured: {e}");
        }
    }
    match cli.command {
        Command::Preprocess => {
            let s = cli::cmd_preprocess(&cfg)?;
            println!(
                "engines={} windows={} channels={} removed_sensors={:?} -> {}",
                s.engines,
                s.windows,
                s.channels,
                s.removed_sensors,
                s.output.display()
            );
        }
        Command::Train => {
            let s = cli::cmd_train(&cfg)?;
            let last = s.outcome.history.last().map(|r| r.loss).unwrap_or(f64::NAN);
            println!("final loss {last:.6}; model {} sha256 {}", s.model_path.display(), s.model_sha256);
            if s.outcome.converged == Some(false) {
                println!("scale iteration stopped at the outer-iteration limit without converging");
            }
        }
        Command::Predict { model, input, rul } => {
            let preds = cli::cmd_predict(&cfg, &model, &input, rul.as_deref())?;
            println!("{} predictions -> {}", preds.len(), cfg.out_dir.join(cli::PREDICTIONS_FILE).display());
        }
        Command::Evaluate { model } => {
            let r = cli::cmd_evaluate(&cfg, &model)?;
            println!(
                "n={} rmse={:.4} score_total={:.4} score_mean={:.4}",
                r.n_t, r.rmse, r.score_total, r.score_mean
            );
        }
        Command::Tune => {
            let t = cli::cmd_tune(&cfg)?;
            for b in &t.blocks {
                println!("{:<10} mean_rmse={:.4} winner={:?}", b.block.name(), b.mean_rmse, b.winner);
            }
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
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
