//! End-to-end run through the command functions: preprocess, train, evaluate
//! and predict. Uses the C-MAPSS files under `CMAPSS_DIR` when present, and a
//! synthetic fleet written in the same layout otherwise.
//!
//! `CMAPSS_DIR=data/CMAPSS cargo run --release --example cmapss_pipeline`

use std::path::PathBuf;

use dlbp::cli::{cmd_evaluate, cmd_predict, cmd_preprocess, cmd_train, MODEL_FILE};
use dlbp::config::RunConfig;
use dlbp::synthetic::{generate_fleet, write_cmapss, FleetSpec};

fn main() -> dlbp::Result<()> {
    let mut cfg = RunConfig::default();
    let out = std::env::temp_dir().join("dlbp-pipeline");
    match std::env::var_os("CMAPSS_DIR").map(PathBuf::from) {
        Some(dir) if dir.join("train_FD003.txt").exists() => {
            cfg.data.dir = dir;
            cfg.training.epochs = 5;
        }
        _ => {
            println!("CMAPSS_DIR not set or missing train_FD003.txt; using a synthetic fleet");
            let dir = out.join("data");
            write_cmapss(&generate_fleet(&FleetSpec::default())?, &dir, "FD003")?;
            cfg.data.dir = dir;
            cfg.training.epochs = 20;
        }
    }
    cfg.model.lstm_units = vec![16];
    cfg.model.fc_units = vec![16];
    cfg.training.batch_size = 256;
    cfg.training.learning_rate = 5e-3;
    cfg.out_dir = out.join("run");

    let pre = cmd_preprocess(&cfg)?;
    println!(
        "preprocess: {} engines, {} windows, {} channels, removed sensors {:?}",
        pre.engines, pre.windows, pre.channels, pre.removed_sensors
    );
    let trained = cmd_train(&cfg)?;
    println!("train: final NLL {:.4}, model sha256 {}", trained.outcome.history.last().unwrap().loss, trained.model_sha256);
    let model = cfg.out_dir.join(MODEL_FILE);
    let report = cmd_evaluate(&cfg, &model)?;
    println!("evaluate: n={} RMSE {:.2} score {:.2}", report.n_t, report.rmse, report.score_total);
    let (_, test, rul) = dlbp::dataset::cmapss_paths(&cfg.data.dir, &cfg.data.dataset);
    let preds = cmd_predict(&cfg, &model, &test, Some(&rul))?;
    println!("predict: {} predictions written to {}", preds.len(), cfg.out_dir.display());
    Ok(())
}
