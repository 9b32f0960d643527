//! Block-wise hyperparameter search on a small synthetic fleet with a reduced grid.
//!
//! `cargo run --release --example tuning`

use dlbp::config::RunConfig;
use dlbp::synthetic::{generate_fleet, FleetSpec};
use dlbp::tune::{tune, write_trace_csv};

fn main() -> dlbp::Result<()> {
    let fleet = generate_fleet(&FleetSpec { train_engines: 20, ..FleetSpec::default() })?;
    let mut cfg = RunConfig::default();
    cfg.seed = 5;
    cfg.training.learning_rate = 5e-3;
    let g = &mut cfg.tuning;
    g.windows = vec![10, 20];
    g.layer_counts = vec![[1, 1], [1, 2]];
    g.lstm_units = vec![8, 16];
    g.fc_units = vec![8];
    g.batch_sizes = vec![128, 256];
    g.epochs = vec![5, 10];
    g.repeats = 2;
    g.initial.lstm_units = 8;
    g.initial.fc_units = 8;
    g.initial.batch_size = 256;
    g.initial.epochs = 5;

    let outcome = tune(&fleet.train, &cfg)?;
    for b in &outcome.blocks {
        println!("{:<10} winner #{} mean RMSE {:.3}", b.block.name(), b.winner_index, b.mean_rmse);
    }
    println!("best: {:?}\n", outcome.best);
    let mut csv = Vec::new();
    write_trace_csv(&outcome.trace, &mut csv).expect("in-memory write");
    print!("{}", String::from_utf8_lossy(&csv));
    Ok(())
}
