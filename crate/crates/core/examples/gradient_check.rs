//! Backpropagation versus central finite differences on a tiny network.
//!
//! `cargo run --release --example gradient_check`

use dlbp::distribution::{Family, MixtureSpec};
use dlbp::network::{ModelKind, ModelParams};
use dlbp::synthetic::{lognormal_regime_samples, LogNormalRegime};
use dlbp::training::{batch_loss, loss_and_grad, TrainConfig};

fn main() -> dlbp::Result<()> {
    let regime = LogNormalRegime { intercept: 3.0, slope: 1.0, scale: 0.3 };
    let samples = lognormal_regime_samples(&[regime], 6, 4, 1);
    let batch: Vec<_> = samples.iter().collect();

    for (kind, families) in [
        (ModelKind::Dlbp1, vec![Family::LogNormal, Family::Weibull]),
        (ModelKind::Dlbp2, vec![Family::LogLogistic, Family::Weibull]),
    ] {
        let mut cfg = TrainConfig::new(kind, MixtureSpec::new(families)?, 4);
        cfg.lstm_units = vec![3];
        cfg.fc_units = vec![4];
        let mut model = ModelParams::init(cfg.architecture(2)?, 5)?;
        if kind == ModelKind::Dlbp2 {
            model.shared_sigma = Some(vec![1.7, 2.5]);
        }
        let (_, grad) = loss_and_grad(&model, &batch)?;
        let names = model.weights.tensor_names();
        let analytic: Vec<Vec<f64>> = grad.tensors().iter().map(|t| t.to_vec()).collect();
        let h = 1e-6;
        let mut worst = 0.0f64;
        for (ti, name) in names.iter().enumerate() {
            let mut tensor_worst = 0.0f64;
            for i in 0..analytic[ti].len() {
                let mut plus = model.clone();
                plus.weights.tensors_mut()[ti][i] += h;
                let mut minus = model.clone();
                minus.weights.tensors_mut()[ti][i] -= h;
                let numeric = (batch_loss(&plus, &batch)? - batch_loss(&minus, &batch)?) / (2.0 * h);
                let a = analytic[ti][i];
                let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-6);
                tensor_worst = tensor_worst.max(rel);
            }
            println!("{kind:?} {name:<12} {:>4} params, max relative error {tensor_worst:.2e}", analytic[ti].len());
            worst = worst.max(tensor_worst);
        }
        println!("{kind:?}: worst {worst:.2e}\n");
    }
    Ok(())
}
