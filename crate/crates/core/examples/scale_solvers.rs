//! Maximum-likelihood updates of a shared scale given per-sample locations.
//!
//! `cargo run --example scale_solvers`

use dlbp::training::{mle_sigma_lognormal, solve_sigma_loglogistic, solve_sigma_weibull};

fn main() -> dlbp::Result<()> {
    let targets = [12.0, 30.0, 55.0, 80.0, 140.0, 95.0, 61.0];

    let locations: Vec<f64> = targets.iter().map(|y: &f64| y.ln() + 0.1).collect();
    println!("log-normal sigma (closed form): {:.6}", mle_sigma_lognormal(&targets, &locations)?);

    let ones = vec![1.0; targets.len()];
    let r = solve_sigma_weibull(&targets, &ones, 1.0)?;
    let mean = targets.iter().sum::<f64>() / targets.len() as f64;
    println!(
        "weibull scale, all shapes 1: {:.10} (sample mean {mean:.10}) via {:?} in {} iterations",
        r.root, r.method, r.iterations
    );
    let twos = vec![2.0; targets.len()];
    let r = solve_sigma_weibull(&targets, &twos, 1.0)?;
    let power = (targets.iter().map(|y| y * y).sum::<f64>() / targets.len() as f64).sqrt();
    println!("weibull scale, all shapes 2: {:.10} (quadratic mean {power:.10})", r.root);

    let scales: Vec<f64> = targets.iter().map(|y| y * 0.9).collect();
    let r = solve_sigma_loglogistic(&targets, &scales, 1.5)?;
    println!(
        "log-logistic shape: {:.8}, residual {:.2e}, {:?}, projected {}",
        r.root, r.residual, r.method, r.projected
    );

    // Locations that fit poorly push the log-logistic root below 1; it is projected.
    let off: Vec<f64> = targets.iter().map(|y| y * 6.0).collect();
    let r = solve_sigma_loglogistic(&targets, &off, 1.5)?;
    println!("badly located log-logistic: shape {:.3}, projected {}", r.root, r.projected);
    Ok(())
}
