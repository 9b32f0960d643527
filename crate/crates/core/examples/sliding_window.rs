//! Windowing, RUL capping and min-max normalization on a toy fleet.
//!
//! `cargo run --example sliding_window`

use dlbp::dataset::{cap_targets, inference_window, sliding_window, EngineTrace, Preprocessing};
use ndarray::Array2;

fn main() -> dlbp::Result<()> {
    let trace = |id: u32, n: usize| {
        let signals = Array2::from_shape_fn((n, 21), |(t, s)| if s == 4 { 7.0 } else { (t * (s + 1)) as f64 });
        EngineTrace::new(id, signals, Some(n as f64))
    };
    let fleet = vec![trace(1, 8), trace(2, 5)];

    let windows = sliding_window(&fleet[0], 4, 1);
    println!("engine 1: {} cycles, window 4 -> {} windows", fleet[0].len(), windows.len());
    for w in &windows {
        println!("  window {} target {:?} first channel {:?}", w.window_index, w.target, w.window.column(0).to_vec());
    }

    let mut capped = windows.clone();
    cap_targets(&mut capped, 3.0);
    println!("targets capped at 3: {:?}", capped.iter().map(|w| w.target.unwrap()).collect::<Vec<_>>());

    let short = inference_window(&fleet[1], 8);
    println!("engine 2 has 5 cycles; its window of 8 is left-padded:\n{}", short.window.column(0));

    let (pre, normalized) = Preprocessing::fit(&fleet, 4, 125.0)?;
    println!(
        "kept sensors {:?} (sensor 5 is constant and dropped), {} channels",
        pre.kept_sensors,
        pre.channels()
    );
    let samples = pre.training_samples(&normalized);
    println!("{} training windows; normalized values of the last window:\n{:.3}", samples.len(), samples.last().unwrap().window);
    Ok(())
}
