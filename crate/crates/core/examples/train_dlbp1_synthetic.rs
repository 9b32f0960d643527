//! Trains a per-sample mixture model on a synthetic degrading fleet and
//! scores it on held-out engines cut before failure.
//!
//! `cargo run --release --example train_dlbp1_synthetic`

use dlbp::dataset::Preprocessing;
use dlbp::distribution::{Family, MixtureSpec};
use dlbp::evaluation::{evaluate_fleet, EvalOptions};
use dlbp::network::ModelKind;
use dlbp::synthetic::{generate_fleet, FleetSpec};
use dlbp::training::{train, TrainConfig};

fn main() -> dlbp::Result<()> {
    let fleet = generate_fleet(&FleetSpec::default())?;
    let window = 20;
    let (pre, train_norm) = Preprocessing::fit(&fleet.train, window, 125.0)?;
    let samples = pre.training_samples(&train_norm);
    println!("{} engines, {} windows, {} channels", fleet.train.len(), samples.len(), pre.channels());

    let mut cfg = TrainConfig::new(ModelKind::Dlbp1, MixtureSpec::uniform(Family::LogLogistic, 2)?, window);
    cfg.lstm_units = vec![16];
    cfg.fc_units = vec![16];
    cfg.batch_size = 128;
    cfg.epochs = 40;
    cfg.learning_rate = 5e-3;
    cfg.seed = 1;
    let out = train(&samples, &cfg)?;
    for row in out.history.iter().step_by(5) {
        println!("epoch {:>3}  NLL {:.4}", row.step, row.loss);
    }

    let test_norm = pre.apply(&fleet.test)?;
    let (report, preds) = evaluate_fleet(&test_norm, &out.params, &EvalOptions::default())?;
    println!(
        "test engines {}: RMSE {:.2}, score {:.2} (mean {:.3})",
        report.n_t, report.rmse, report.score_total, report.score_mean
    );
    for p in preds.iter().take(5) {
        println!("  engine {:>2}: predicted {:>6.1}, true {:>5.0}", p.asset_id, p.predicted_rul, p.true_rul.unwrap());
    }
    Ok(())
}
