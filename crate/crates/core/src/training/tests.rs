use approx::assert_relative_eq;
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::network::Weights;

fn toy_samples(p: usize, window: usize, n: usize, seed: u64) -> Vec<WindowedSample> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| WindowedSample {
            asset_id: 1 + (i % 2) as u32,
            window_index: i as u32 + 1,
            window: Array2::from_shape_fn((window, p), |_| rng.random_range(0.0..1.0)),
            target: Some(rng.random_range(5.0..60.0)),
        })
        .collect()
}

fn model(kind: ModelKind, mixture: MixtureSpec, lstm: Vec<usize>, fc: Vec<usize>, seed: u64) -> ModelParams {
    let arch = Architecture::new(kind, mixture, 3, 4, lstm, fc).unwrap();
    let mut m = ModelParams::init(arch, seed).unwrap();
    // Push locations into a plausible range for targets of a few tens of cycles.
    let k = m.arch.k();
    for c in 0..k {
        m.weights.head.b[c] = match m.arch.mixture.family(c) {
            Family::LogNormal => 3.0,
            Family::Weibull => 1.5,
            Family::LogLogistic => 25.0,
        };
    }
    if m.arch.kind == ModelKind::Dlbp1 {
        for c in 0..k {
            m.weights.head.b[k + c] = match m.arch.mixture.family(c) {
                Family::LogNormal => 0.5,
                Family::Weibull => 30.0,
                Family::LogLogistic => 2.0,
            };
        }
    } else {
        m.shared_sigma = Some(
            m.arch
                .mixture
                .families()
                .iter()
                .map(|f| match f {
                    Family::LogNormal => 0.8,
                    Family::Weibull => 30.0,
                    Family::LogLogistic => 2.5,
                })
                .collect(),
        );
    }
    m
}

fn loss_of(m: &ModelParams, samples: &[WindowedSample]) -> f64 {
    let refs: Vec<&WindowedSample> = samples.iter().collect();
    batch_loss(m, &refs).unwrap()
}

/// Largest relative disagreement between analytic and central-difference gradients.
fn max_gradient_error(m: &ModelParams, samples: &[WindowedSample]) -> (f64, String) {
    let refs: Vec<&WindowedSample> = samples.iter().collect();
    let (_, grad) = loss_and_grad(m, &refs).unwrap();
    let names = m.weights.tensor_names();
    let analytic: Vec<Vec<f64>> = grad.tensors().iter().map(|t| t.to_vec()).collect();
    let mut worst = (0.0, String::new());
    let step = 1e-5;
    for (ti, tensor) in analytic.iter().enumerate() {
        for (j, &a) in tensor.iter().enumerate() {
            let mut plus = m.clone();
            plus.weights.tensors_mut()[ti][j] += step;
            let mut minus = m.clone();
            minus.weights.tensors_mut()[ti][j] -= step;
            let num = (loss_of(&plus, samples) - loss_of(&minus, samples)) / (2.0 * step);
            let err = (a - num).abs() / a.abs().max(num.abs()).max(1e-6);
            if err > worst.0 {
                worst = (err, format!("{}[{j}]: analytic {a:e}, numeric {num:e}", names[ti]));
            }
        }
    }
    worst
}

#[test]
fn gradients_match_finite_differences_for_every_family() {
    let samples = toy_samples(3, 4, 6, 11);
    let specs = [
        MixtureSpec::uniform(Family::LogNormal, 2).unwrap(),
        MixtureSpec::uniform(Family::Weibull, 2).unwrap(),
        MixtureSpec::uniform(Family::LogLogistic, 2).unwrap(),
        MixtureSpec::lognormal_weibull(1, 1).unwrap(),
    ];
    for kind in [ModelKind::Dlbp1, ModelKind::Dlbp2] {
        for spec in &specs {
            let m = model(kind, spec.clone(), vec![4, 3], vec![4], 5);
            let (err, at) = max_gradient_error(&m, &samples);
            assert!(err < 1e-4, "{kind} {:?}: {at} (rel err {err:e})", spec.families());
        }
    }
}

#[test]
fn gradients_with_tanh_output_gate() {
    let samples = toy_samples(3, 4, 4, 3);
    let mut m = model(ModelKind::Dlbp1, MixtureSpec::uniform(Family::LogNormal, 1).unwrap(), vec![4], vec![], 2);
    m.arch.output_gate = GateActivation::Tanh;
    let (err, at) = max_gradient_error(&m, &samples);
    assert!(err < 1e-4, "{at}");
}

#[test]
fn location_gradient_vanishes_at_closed_form_optimum() {
    let samples = toy_samples(3, 4, 8, 21);
    let arch = Architecture::new(
        ModelKind::Dlbp1,
        MixtureSpec::uniform(Family::LogNormal, 1).unwrap(),
        3,
        4,
        vec![2],
        vec![],
    )
    .unwrap();
    let mut m = ModelParams {
        weights: Weights::zeros(&arch),
        arch,
        shared_sigma: None,
    };
    let mean_log = samples.iter().map(|s| s.target.unwrap().ln()).sum::<f64>() / samples.len() as f64;
    m.weights.head.b[0] = mean_log;
    m.weights.head.b[1] = 0.3;
    m.weights.head.b[2] = 1.0;
    let refs: Vec<&WindowedSample> = samples.iter().collect();
    let (_, g) = loss_and_grad(&m, &refs).unwrap();
    assert!(g.head.b[0].abs() < 1e-8, "location gradient {}", g.head.b[0]);
}

#[test]
fn duplicated_batch_gives_same_gradient() {
    let samples = toy_samples(3, 4, 5, 8);
    let m = model(ModelKind::Dlbp1, MixtureSpec::uniform(Family::Weibull, 2).unwrap(), vec![3], vec![2], 1);
    let once: Vec<&WindowedSample> = samples.iter().collect();
    let twice: Vec<&WindowedSample> = samples.iter().chain(samples.iter()).collect();
    let (l1, g1) = loss_and_grad(&m, &once).unwrap();
    let (l2, g2) = loss_and_grad(&m, &twice).unwrap();
    assert_relative_eq!(l1, l2, max_relative = 1e-13);
    for (a, b) in g1.tensors().iter().zip(g2.tensors()) {
        for (x, y) in a.iter().zip(b) {
            assert_relative_eq!(*x, *y, max_relative = 1e-10, epsilon = 1e-15);
        }
    }
}

#[test]
fn large_batches_split_into_chunks_consistently() {
    let samples = toy_samples(3, 4, 150, 4);
    let m = model(ModelKind::Dlbp1, MixtureSpec::uniform(Family::LogNormal, 2).unwrap(), vec![3], vec![], 1);
    let refs: Vec<&WindowedSample> = samples.iter().collect();
    let (loss, _) = loss_and_grad(&m, &refs).unwrap();
    let views: Vec<_> = samples.iter().map(|s| s.window.view()).collect();
    let mixtures = m.forward_batch(&views).unwrap();
    let targets: Vec<f64> = samples.iter().map(|s| s.target.unwrap()).collect();
    assert_relative_eq!(loss, crate::distribution::nll(&targets, &mixtures).unwrap(), max_relative = 1e-12);
}

#[test]
fn non_finite_loss_names_the_sample() {
    let mut samples = toy_samples(3, 4, 3, 8);
    samples[1].target = Some(1e308);
    samples[1].asset_id = 42;
    let m = model(ModelKind::Dlbp1, MixtureSpec::uniform(Family::Weibull, 1).unwrap(), vec![3], vec![], 1);
    let refs: Vec<&WindowedSample> = samples.iter().collect();
    match loss_and_grad(&m, &refs) {
        Err(Error::Numeric(msg)) => assert!(msg.contains("asset 42"), "{msg}"),
        other => panic!("expected numeric error, got {other:?}"),
    }
}

fn small_config(kind: ModelKind, mixture: MixtureSpec) -> TrainConfig {
    let mut c = TrainConfig::new(kind, mixture, 4);
    c.lstm_units = vec![3];
    c.fc_units = vec![3];
    c.batch_size = 4;
    c.epochs = 3;
    c.seed = 17;
    c
}

#[test]
fn zero_learning_rate_keeps_initialization() {
    let samples = toy_samples(3, 4, 10, 2);
    let mut c = small_config(ModelKind::Dlbp1, MixtureSpec::uniform(Family::LogNormal, 2).unwrap());
    c.epochs = 1;
    c.learning_rate = 0.0;
    let out = train_dlbp1(&samples, &c).unwrap();
    let init = ModelParams::init(c.architecture(3).unwrap(), c.seed).unwrap();
    assert_eq!(out.params, init);
    assert_eq!(out.history.len(), 1);
}

#[test]
fn training_is_deterministic_and_reduces_loss() {
    let samples = toy_samples(3, 4, 40, 2);
    let mut c = small_config(ModelKind::Dlbp1, MixtureSpec::uniform(Family::LogNormal, 1).unwrap());
    c.epochs = 30;
    c.learning_rate = 0.02;
    let a = train_dlbp1(&samples, &c).unwrap();
    let b = train_dlbp1(&samples, &c).unwrap();
    assert_eq!(a.epoch_losses, b.epoch_losses);
    assert_eq!(a.params, b.params);
    assert!(a.epoch_losses.last().unwrap() < a.epoch_losses.first().unwrap());
}

#[test]
fn frozen_lognormal_network_fixes_sigma_after_one_update() {
    let samples = toy_samples(3, 4, 12, 9);
    let mut c = small_config(ModelKind::Dlbp2, MixtureSpec::uniform(Family::LogNormal, 1).unwrap());
    c.learning_rate = 0.0;
    c.inner_epochs = Some(1);
    let out = train_dlbp2(&samples, &c).unwrap();
    assert_eq!(out.converged, Some(true));
    assert_eq!(out.history.len(), 2);
    assert_eq!(out.history[1].sigma_change, Some(0.0));
    let views: Vec<_> = samples.iter().map(|s| s.window.view()).collect();
    let mu: Vec<f64> = out
        .params
        .forward_batch(&views)
        .unwrap()
        .iter()
        .map(|m| m.components[0].location)
        .collect();
    let y: Vec<f64> = samples.iter().map(|s| s.target.unwrap()).collect();
    let expected = mle_sigma_lognormal(&y, &mu).unwrap();
    assert_relative_eq!(out.params.shared_sigma.unwrap()[0], expected, max_relative = 1e-12);
}

#[test]
fn mixed_update_matches_single_family_solvers() {
    let samples = toy_samples(3, 4, 12, 9);
    let m = model(ModelKind::Dlbp2, MixtureSpec::lognormal_weibull(1, 1).unwrap(), vec![3], vec![], 3);
    let views: Vec<_> = samples.iter().map(|s| s.window.view()).collect();
    let mixtures = m.forward_batch(&views).unwrap();
    let y: Vec<f64> = samples.iter().map(|s| s.target.unwrap()).collect();
    let current = m.shared_sigma.clone().unwrap();
    let updated = update_scales(&y, &mixtures, &current, ScaleWeighting::Uniform).unwrap();
    let mu0: Vec<f64> = mixtures.iter().map(|m| m.components[0].location).collect();
    let mu1: Vec<f64> = mixtures.iter().map(|m| m.components[1].location).collect();
    assert_eq!(updated[0], mle_sigma_lognormal(&y, &mu0).unwrap());
    assert_eq!(updated[1], solve_sigma_weibull(&y, &mu1, current[1]).unwrap().root);

    for (spec, family) in [
        (MixtureSpec::lognormal_weibull(1, 0).unwrap(), Family::LogNormal),
        (MixtureSpec::lognormal_weibull(0, 1).unwrap(), Family::Weibull),
    ] {
        assert_eq!(spec.families(), &[family]);
    }
}

#[test]
fn dlbp2_history_is_well_formed() {
    let samples = toy_samples(3, 4, 16, 5);
    let mut c = small_config(ModelKind::Dlbp2, MixtureSpec::uniform(Family::Weibull, 2).unwrap());
    c.max_outer = 3;
    c.learning_rate = 0.01;
    let out = train_dlbp2(&samples, &c).unwrap();
    assert!(!out.history.is_empty() && out.history.len() <= 3);
    for row in &out.history {
        assert_eq!(row.sigma.len(), 2);
        let change = row.sigma_change.unwrap();
        assert!(change.is_finite() && change >= 0.0);
    }
    assert_eq!(out.epoch_losses.len(), out.history.len() * c.inner_epochs());
}

#[test]
fn sigma_change_is_zero_only_when_unchanged() {
    assert_eq!(sigma_change(&[1.0, 2.0], &[1.0, 2.0]), 0.0);
    assert!(sigma_change(&[1.0, 2.0], &[1.0, 2.0 + 1e-9]) > 0.0);
    assert_relative_eq!(sigma_change(&[1.0, 3.0], &[0.0, 1.0]), 2.5);
}

#[test]
fn initial_sigma_ranges() {
    let spec = MixtureSpec::new(vec![Family::LogNormal, Family::LogLogistic]).unwrap();
    let s = initial_sigma(&spec, SigmaInit::Shifted, 4);
    assert!(s[0] > 0.0 && s[0] < 1.0);
    assert!(s[1] > 1.0 && s[1] < 2.0);
    let lit = initial_sigma(&spec, SigmaInit::Literal, 4);
    assert!(lit[1] > 0.0 && lit[1] < 1.0);
    assert_eq!(initial_sigma(&spec, SigmaInit::Shifted, 4), s);
}

#[test]
fn history_csv_layout() {
    let rows = vec![HistoryRow {
        step: 1,
        loss: 2.5,
        sigma: vec![0.5, 1.5],
        sigma_change: Some(0.1),
    }];
    let mut buf = Vec::new();
    write_history_csv(&rows, 2, &mut buf).unwrap();
    assert_eq!(String::from_utf8(buf).unwrap(), "epoch_or_iter,loss,sigma_1,sigma_2\n1,2.5,0.5,1.5\n");
}

#[test]
fn config_rejects_bad_values() {
    let mut c = small_config(ModelKind::Dlbp2, MixtureSpec::uniform(Family::LogNormal, 1).unwrap());
    c.batch_size = 0;
    assert!(c.validate().is_err());
    c.batch_size = 1;
    c.tolerance = 0.0;
    assert!(c.validate().is_err());
    c.tolerance = 1e-4;
    c.max_outer = 0;
    assert!(c.validate().is_err());
    c.max_outer = 20;
    c.epochs = 200;
    assert_eq!(c.inner_epochs(), 10);
    c.epochs = 201;
    assert_eq!(c.inner_epochs(), 11);
}
