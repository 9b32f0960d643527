//! Densities, means and mixture likelihoods for the three supported families.
//!
//! `cargo run --example distributions`

use dlbp::distribution::{mixture_log_pdf, mixture_mean, nll, Component, Mixture, WeibullMeanVariant};

fn main() -> dlbp::Result<()> {
    let standard = WeibullMeanVariant::Standard;
    let components = [
        ("log-normal  mu=0 sigma=sqrt(2)", Component::lognormal(0.0, 2f64.sqrt())),
        ("weibull     shape=1 scale=2   ", Component::weibull(1.0, 2.0)),
        ("log-logistic alpha=1 beta=2   ", Component::loglogistic(1.0, 2.0)),
    ];
    println!("{:<32} {:>10} {:>10} {:>10}", "component", "pdf(1)", "pdf(3)", "mean");
    for (name, c) in &components {
        println!("{name:<32} {:>10.6} {:>10.6} {:>10.6}", c.pdf(1.0)?, c.pdf(3.0)?, c.mean(standard)?);
    }

    let w = Component::weibull(2.0, 3.0);
    println!(
        "\nweibull(2, 3) mean: standard {:.6}, squared-scale {:.6}",
        w.mean(WeibullMeanVariant::Standard)?,
        w.mean(WeibullMeanVariant::SquaredScale)?
    );

    let mix = Mixture::new(
        vec![Component::lognormal(4.0, 0.2), Component::weibull(3.0, 80.0)],
        vec![0.3, 0.7],
    );
    println!("\nmixture mean {:.4}", mixture_mean(&mix, standard)?);
    for y in [20.0, 60.0, 100.0] {
        println!("  ln f({y}) = {:.6}", mixture_log_pdf(y, &mix)?);
    }
    let targets = [45.0, 70.0, 90.0];
    let params = vec![mix.clone(); targets.len()];
    println!("mean NLL over {targets:?}: {:.6}", nll(&targets, &params)?);

    // A log-logistic shape at or below 1 has no finite mean.
    match Component::loglogistic(10.0, 0.9).mean(standard) {
        Ok(m) => println!("unexpected mean {m}"),
        Err(e) => println!("\nexpected failure: {e}"),
    }
    Ok(())
}
