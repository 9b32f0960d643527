//! Acceptance checks, one PASS/FAIL line per criterion.
//!
//! Criteria that need the C-MAPSS FD003 files read them from `CMAPSS_DIR`
//! (default `<workspace>/data/CMAPSS`) and report FAIL when the files are
//! absent. The full-budget FD003 trainings (hours on a CPU) run only when
//! `DLBP_FULL_REPRO=1`. The process exits non-zero when a criterion that
//! could be evaluated fails.

mod common;

use std::path::{Path, PathBuf};
use std::time::Instant;

use dlbp::cli::{cmd_evaluate, cmd_preprocess, cmd_train, cmd_tune, MODEL_FILE, REPORT_FILE, TUNE_TRACE_FILE, WINDOWS_FILE};
use dlbp::config::RunConfig;
use dlbp::dataset::{cmapss_paths, sliding_window, EngineTrace, WindowedSample};
use dlbp::distribution::{mixture_mean, Component, Family, Mixture, MixtureSpec, WeibullMeanVariant};
use dlbp::evaluation::{rmse, score_one, Prediction};
use dlbp::network::{Architecture, ModelKind, ModelParams};
use dlbp::synthetic::{generate_fleet, lognormal_regime_samples, write_cmapss, FleetSpec, LogNormalRegime};
use dlbp::training::{
    batch_loss, loss_and_grad, loglogistic_scale_residual, mle_sigma_lognormal, solve_sigma_loglogistic,
    solve_sigma_weibull, train_dlbp2, ScaleWeighting, TrainConfig,
};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

enum Outcome {
    Pass(String),
    Fail(String),
    /// Could not be evaluated in this environment.
    Unavailable(String),
}

use Outcome::*;

type Criterion = (&'static str, fn() -> Outcome);

fn main() {
    let criteria: Vec<Criterion> = vec![
        ("1  distribution normalization and means", c1_distributions),
        ("2  analytic anchors", c2_anchors),
        ("3  gradient fidelity", c3_gradients),
        ("4  scale solvers", c4_scale_solvers),
        ("5  alternating scale recovery", c5_dlbp2_recovery),
        ("6a sliding-window equivalence", c6a_windows),
        ("6b FD003 sensor selection", c6b_fd003_sensors),
        ("7a FD003 DLBP1-MLL, 50 epochs", c7a_fd003_ci),
        ("7b FD003 DLBP1-MLL, full budget", c7b_fd003_full),
        ("8  FD003 DLBP2-MW, full budget", c8_fd003_dlbp2),
        ("9  determinism", c9_determinism),
    ];
    let mut failed = 0;
    for (name, check) in criteria {
        let start = Instant::now();
        let outcome = check();
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Pass(msg) => println!("PASS  {name}: {msg} [{secs:.1}s]"),
            Fail(msg) => {
                failed += 1;
                println!("FAIL  {name}: {msg} [{secs:.1}s]");
            }
            Unavailable(msg) => println!("FAIL  {name}: not evaluated, {msg}"),
        }
    }
    if failed > 0 {
        std::process::exit(1);
    }
}

fn verdict(ok: bool, msg: String) -> Outcome {
    if ok {
        Pass(msg)
    } else {
        Fail(msg)
    }
}

// ---------------------------------------------------------------- criterion 1

/// Integration range in `t = ln y` that holds all but a negligible share of
/// both the density and the mean integrand of `c`.
fn log_range(c: &Component) -> (f64, f64) {
    match c.family {
        Family::LogNormal => (c.location - 40.0 * c.scale, c.location + c.scale * c.scale + 40.0 * c.scale),
        Family::Weibull => {
            let (k, lam) = (c.location, c.scale);
            (lam.ln() - 70.0 / k, lam.ln() + 6.0 / k)
        }
        Family::LogLogistic => {
            let (alpha, beta) = (c.location, c.scale);
            (alpha.ln() - 70.0 / beta, alpha.ln() + 70.0 / (beta - 1.0))
        }
    }
}

fn random_component(family: Family, rng: &mut ChaCha8Rng) -> Component {
    match family {
        Family::LogNormal => Component::lognormal(rng.random_range(-2.0..5.0), rng.random_range(0.05..2.5)),
        Family::Weibull => Component::weibull(rng.random_range(0.3..8.0), rng.random_range(0.1..300.0)),
        Family::LogLogistic => Component::loglogistic(rng.random_range(0.1..300.0), rng.random_range(1.5..12.0)),
    }
}

fn c1_distributions() -> Outcome {
    let mut worst_mass = 0.0f64;
    let mut worst_mean = 0.0f64;
    let mut detail = String::new();
    for family in [Family::LogNormal, Family::Weibull, Family::LogLogistic] {
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + family as u64);
        for i in 0..200 {
            let k = 1 + i % 3;
            let comps: Vec<Component> = (0..k).map(|_| random_component(family, &mut rng)).collect();
            let raw: Vec<f64> = (0..k).map(|_| rng.random_range(0.05..1.0)).collect();
            let mix = Mixture::from_raw_weights(comps, &raw).unwrap();
            let (lo, hi) = mix
                .components
                .iter()
                .map(log_range)
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), (c, d)| (a.min(c), b.max(d)));
            let density = |t: f64| {
                let y = t.exp();
                let f: f64 = mix
                    .components
                    .iter()
                    .zip(&mix.weights)
                    .map(|(c, w)| w * c.pdf(y).unwrap_or(0.0))
                    .sum();
                f * y
            };
            let mass = common::integrate(density, lo, hi, 1e-11);
            let expected = mixture_mean(&mix, WeibullMeanVariant::Standard).unwrap();
            let first_moment = common::integrate(|t| density(t) * t.exp(), lo, hi, 1e-11 * expected);
            let mass_err = (mass - 1.0).abs();
            let mean_err = (first_moment - expected).abs() / expected;
            if mass_err > worst_mass || mean_err > worst_mean {
                detail = format!("{family:?} {:?}", mix.components);
            }
            worst_mass = worst_mass.max(mass_err);
            worst_mean = worst_mean.max(mean_err);
        }
    }
    verdict(
        worst_mass <= 1e-6 && worst_mean <= 1e-6,
        format!(
            "600 mixtures, max |mass−1| {worst_mass:.1e} (≤1e-6), max mean rel. error {worst_mean:.1e} (≤1e-6); worst case {detail}"
        ),
    )
}

// ---------------------------------------------------------------- criterion 2

fn c2_anchors() -> Outcome {
    let v = WeibullMeanVariant::Standard;
    let e = std::f64::consts::E;
    let delta_pred = |d: f64| Prediction {
        asset_id: 1,
        window_index: 1,
        predicted_rul: 50.0 + d,
        true_rul: Some(50.0),
        components: vec![Component::lognormal(0.0, 1.0)],
        weights: vec![1.0],
    };
    let checks = [
        ("log-normal(0, σ²=2) mean", Component::lognormal(0.0, 2f64.sqrt()).mean(v).unwrap(), e),
        ("weibull(1, 2) mean", Component::weibull(1.0, 2.0).mean(v).unwrap(), 2.0),
        ("log-logistic(1, 2) mean", Component::loglogistic(1.0, 2.0).mean(v).unwrap(), std::f64::consts::FRAC_PI_2),
        ("score(10)", score_one(10.0), e - 1.0),
        ("score(−13)", score_one(-13.0), e - 1.0),
        ("rmse(3, −4)", rmse(&[delta_pred(3.0), delta_pred(-4.0)]).unwrap(), 12.5f64.sqrt()),
    ];
    let worst = checks
        .iter()
        .map(|(n, got, want)| ((got - want).abs(), *n))
        .fold((0.0, ""), |a, b| if b.0 > a.0 { b } else { a });
    verdict(worst.0 <= 1e-12, format!("6 anchors, largest error {:.1e} ({})", worst.0, worst.1))
}

// ---------------------------------------------------------------- criterion 3

fn toy_samples(p: usize, window: usize, n: usize, seed: u64) -> Vec<WindowedSample> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| WindowedSample {
            asset_id: i as u32 + 1,
            window_index: 1,
            window: Array2::from_shape_fn((window, p), |_| rng.random_range(0.0..1.0)),
            target: Some(rng.random_range(5.0..60.0)),
        })
        .collect()
}

fn toy_model(kind: ModelKind, family: Family, k: usize, window: usize, seed: u64) -> ModelParams {
    let mixture = MixtureSpec::uniform(family, k).unwrap();
    let arch = Architecture::new(kind, mixture, 3, window, vec![4, 3], vec![4, 2]).unwrap();
    let mut m = ModelParams::init(arch, seed).unwrap();
    // Start locations and scales in a range that suits targets of a few tens of cycles.
    let (loc, scale) = match family {
        Family::LogNormal => (3.0, 0.6),
        Family::Weibull => (1.5, 30.0),
        Family::LogLogistic => (25.0, 2.5),
    };
    for c in 0..k {
        m.weights.head.b[c] = loc + 0.3 * c as f64;
    }
    match kind {
        ModelKind::Dlbp1 => {
            let scale_bias = match family {
                Family::LogNormal => 0.5,
                Family::Weibull => 30.0,
                Family::LogLogistic => 2.0,
            };
            for c in 0..k {
                m.weights.head.b[k + c] = scale_bias;
            }
        }
        ModelKind::Dlbp2 => m.shared_sigma = Some((0..k).map(|c| scale * (1.0 + 0.2 * c as f64)).collect()),
    }
    m
}

fn c3_gradients() -> Outcome {
    let mut cases = Vec::new();
    for kind in [ModelKind::Dlbp1, ModelKind::Dlbp2] {
        for family in [Family::LogNormal, Family::Weibull, Family::LogLogistic] {
            for k in [1, 2] {
                cases.push((kind, family, k));
            }
        }
    }
    let results: Vec<(f64, String, usize)> = cases
        .par_iter()
        .enumerate()
        .map(|(i, &(kind, family, k))| {
            let window = 3 + i % 3;
            let m = toy_model(kind, family, k, window, 10 + i as u64);
            let samples = toy_samples(3, window, 6, 20 + i as u64);
            let refs: Vec<&WindowedSample> = samples.iter().collect();
            let (_, grad) = loss_and_grad(&m, &refs).unwrap();
            let names = m.weights.tensor_names();
            let analytic: Vec<Vec<f64>> = grad.tensors().iter().map(|t| t.to_vec()).collect();
            let step = 1e-4;
            let mut worst = (0.0f64, String::new());
            let mut count = 0;
            for (ti, tensor) in analytic.iter().enumerate() {
                for (j, &a) in tensor.iter().enumerate() {
                    let shifted = |d: f64| {
                        let mut p = m.clone();
                        p.weights.tensors_mut()[ti][j] += d;
                        batch_loss(&p, &refs).unwrap()
                    };
                    // Fourth-order central difference.
                    let num = (8.0 * (shifted(step) - shifted(-step)) - (shifted(2.0 * step) - shifted(-2.0 * step)))
                        / (12.0 * step);
                    let err = (a - num).abs() / a.abs().max(num.abs()).max(1e-6);
                    count += 1;
                    if err > worst.0 {
                        worst = (err, format!("{kind:?} {family:?} K={k} {}[{j}] ({a:.3e} vs {num:.3e})", names[ti]));
                    }
                }
            }
            (worst.0, worst.1, count)
        })
        .collect();
    let total: usize = results.iter().map(|r| r.2).sum();
    let worst = results.iter().fold((0.0, String::new()), |a, r| if r.0 > a.0 { (r.0, r.1.clone()) } else { a });
    verdict(
        worst.0 <= 1e-4,
        format!("12 networks, {total} parameters, worst relative error {:.1e} at {} (≤1e-4)", worst.0, worst.1),
    )
}

// ---------------------------------------------------------------- criterion 4

fn loglogistic_loglik(targets: &[f64], alphas: &[f64], beta: f64) -> f64 {
    targets
        .iter()
        .zip(alphas)
        .map(|(&y, &a)| Component::loglogistic(a, beta).log_pdf(y).unwrap())
        .sum::<f64>()
}

fn c4_scale_solvers() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(44);
    let n = 200;
    let targets: Vec<f64> = (0..n).map(|_| rng.random_range(5.0..300.0)).collect();

    // Log-normal: closed form against a grid search of the likelihood.
    let locs: Vec<f64> = targets.iter().map(|y| y.ln() + rng.random_range(-0.5..0.5)).collect();
    let closed = mle_sigma_lognormal(&targets, &locs).unwrap();
    let step = 1e-4;
    let grid_best = (1..30000)
        .map(|i| i as f64 * step)
        .map(|s| {
            let ll: f64 = targets
                .iter()
                .zip(&locs)
                .map(|(&y, &m)| Component::lognormal(m, s).log_pdf(y).unwrap())
                .sum();
            (ll, s)
        })
        .fold((f64::NEG_INFINITY, 0.0), |a, b| if b.0 > a.0 { b } else { a })
        .1;
    let ln_ok = (closed - grid_best).abs() <= step;

    // Weibull: unit shapes give the sample mean, shape two the quadratic mean.
    let mean = targets.iter().sum::<f64>() / n as f64;
    let w1 = solve_sigma_weibull(&targets, &vec![1.0; n], 1.0).unwrap().root;
    let quad = (targets.iter().map(|y| y * y).sum::<f64>() / n as f64).sqrt();
    let w2 = solve_sigma_weibull(&targets, &vec![2.0; n], 1.0).unwrap().root;
    let w1_err = (w1 - mean).abs() / mean;
    let w2_err = (w2 - quad).abs() / quad;

    // Log-logistic: residual at the root and stationarity of the likelihood.
    let alphas: Vec<f64> = targets.iter().map(|y| y * rng.random_range(0.8..1.25)).collect();
    let report = solve_sigma_loglogistic(&targets, &alphas, 1.5).unwrap();
    let (resid, _) = loglogistic_scale_residual(report.root, &targets, &alphas, None);
    let h = 1e-6 * report.root;
    let dll = (loglogistic_loglik(&targets, &alphas, report.root + h) - loglogistic_loglik(&targets, &alphas, report.root - h))
        / (2.0 * h)
        / n as f64;

    verdict(
        ln_ok && w1_err <= 1e-10 && w2_err <= 1e-10 && resid.abs() < 1e-10 && dll.abs() <= 1e-6 && !report.projected,
        format!(
            "log-normal closed {closed:.5} vs grid {grid_best:.4} (step 1e-4); weibull shape-1 rel. error {w1_err:.1e}, shape-2 {w2_err:.1e}; \
             log-logistic root {:.6}, |s| {:.1e}, mean d loglik {:.1e}",
            report.root,
            resid.abs(),
            dll.abs()
        ),
    )
}

// ---------------------------------------------------------------- criterion 5

const REGIMES: [LogNormalRegime; 2] = [
    LogNormalRegime { intercept: 3.0, slope: 1.0, scale: 0.15 },
    LogNormalRegime { intercept: 4.5, slope: -0.5, scale: 0.30 },
];

fn recovery_config(seed: u64, weighting: ScaleWeighting) -> TrainConfig {
    let mut cfg = TrainConfig::new(ModelKind::Dlbp2, MixtureSpec::uniform(Family::LogNormal, 2).unwrap(), 5);
    cfg.lstm_units = vec![4];
    cfg.fc_units = vec![8];
    cfg.batch_size = 128;
    cfg.learning_rate = 1e-2;
    cfg.inner_epochs = Some(60);
    cfg.max_outer = 20;
    cfg.tolerance = 1e-4;
    cfg.scale_weighting = weighting;
    cfg.seed = seed;
    cfg
}

/// Largest relative scale error after matching components to regimes by size,
/// the outer iteration at which the stopping rule fired, and the final statistic.
fn recovery(samples: &[WindowedSample], seed: u64, weighting: ScaleWeighting) -> (f64, Option<usize>, f64) {
    let out = train_dlbp2(samples, &recovery_config(seed, weighting)).unwrap();
    let mut sigma = out.params.shared_sigma.clone().unwrap();
    sigma.sort_by(f64::total_cmp);
    let err = sigma
        .iter()
        .zip([0.15, 0.30])
        .map(|(s, t)| (s - t).abs() / t)
        .fold(0.0, f64::max);
    let last = out.history.last().unwrap();
    let stop = (out.converged == Some(true)).then_some(last.step);
    (err, stop, last.sigma_change.unwrap())
}

fn c5_dlbp2_recovery() -> Outcome {
    let samples = lognormal_regime_samples(&REGIMES, 2000, 5, 11);
    let seeds: Vec<u64> = (1..=8).collect();
    let runs: Vec<(f64, Option<usize>, f64)> = seeds
        .par_iter()
        .map(|&s| recovery(&samples, s, ScaleWeighting::Responsibility))
        .collect();
    let uniform = recovery(&samples, 3, ScaleWeighting::Uniform);
    let mut errs: Vec<f64> = runs.iter().map(|r| r.0).collect();
    errs.sort_by(f64::total_cmp);
    let median = 0.5 * (errs[3] + errs[4]);
    let within = errs.iter().filter(|&&e| e <= 0.10).count();
    let all_stopped = runs.iter().all(|r| r.1.is_some_and(|j| j <= 20) && r.2 < 1e-4);
    let per_seed: Vec<String> = runs
        .iter()
        .zip(&seeds)
        .map(|(r, s)| format!("s{s}:{:.0}%@{}", 100.0 * r.0, r.1.map_or("-".into(), |j| j.to_string())))
        .collect();
    verdict(
        median <= 0.10 && all_stopped,
        format!(
            "responsibility-weighted scales (σ = 0.15, 0.30), median worst error {:.1}% over 8 seeds, {within}/8 within 10%, \
             all stopped below 1e-4 within 20: {all_stopped} [{}]; uniform weighting (seed 3): worst error {:.0}%",
            100.0 * median,
            per_seed.join(" "),
            100.0 * uniform.0
        ),
    )
}

// ---------------------------------------------------------------- criterion 6

fn c6a_windows() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(66);
    let mut mismatches = 0;
    let mut windows = 0;
    for i in 0..1000 {
        let n = rng.random_range(1..=80usize);
        let y = n + rng.random_range(0..=40usize);
        let w = rng.random_range(1..=40usize);
        let signals = Array2::from_shape_fn((n, 2), |(t, c)| (t * 2 + c) as f64 + 1.0);
        let trace = EngineTrace::new(i, signals, Some(y as f64));
        let fast = common::windows_as_tuples(&sliding_window(&trace, w, 1));
        let slow = common::brute_force_windows(&trace, w);
        windows += slow.len();
        let count_ok = n != y || fast.len() == y.saturating_sub(w);
        if fast != slow || !count_ok {
            mismatches += 1;
        }
    }
    verdict(mismatches == 0, format!("1000 random (n, y, T_w) triples, {windows} windows, {mismatches} mismatches"))
}

fn cmapss_dir() -> PathBuf {
    std::env::var_os("CMAPSS_DIR")
        .map(PathBuf::from)
        .unwrap_or_else(|| Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/CMAPSS"))
}

fn fd003_missing() -> Option<String> {
    let dir = cmapss_dir();
    let (train, test, rul) = cmapss_paths(&dir, "FD003");
    let missing: Vec<String> = [train, test, rul]
        .iter()
        .filter(|p| !p.exists())
        .map(|p| p.display().to_string())
        .collect();
    (!missing.is_empty()).then(|| format!("C-MAPSS FD003 files not found ({}); set CMAPSS_DIR", missing.join(", ")))
}

fn scratch() -> tempfile::TempDir {
    tempfile::tempdir().expect("temporary directory")
}

fn c6b_fd003_sensors() -> Outcome {
    if let Some(m) = fd003_missing() {
        return Unavailable(m);
    }
    let tmp = scratch();
    let mut cfg = RunConfig::default();
    cfg.data.dir = cmapss_dir();
    cfg.out_dir = tmp.path().to_path_buf();
    match cmd_preprocess(&cfg) {
        Ok(s) => verdict(
            s.channels == 16 && s.removed_sensors == vec![1, 5, 16, 18, 19],
            format!("P = {}, removed sensors {:?}", s.channels, s.removed_sensors),
        ),
        Err(e) => Fail(e.to_string()),
    }
}

// ---------------------------------------------------------------- criteria 7, 8

struct Fd003Run {
    rmse: f64,
    score: f64,
    n: usize,
    smooth_fraction: f64,
    minutes: f64,
    stopped: Option<(usize, f64)>,
}

/// Share of transitions over which the 5-epoch moving average of the loss does not increase.
fn smoothed_nonincreasing(losses: &[f64]) -> f64 {
    let avg: Vec<f64> = losses.windows(5).map(|w| w.iter().sum::<f64>() / 5.0).collect();
    if avg.len() < 2 {
        return 1.0;
    }
    let ok = avg.windows(2).filter(|p| p[1] <= p[0]).count();
    ok as f64 / (avg.len() - 1) as f64
}

fn fd003_run(config: &str, epochs: Option<usize>) -> Result<Fd003Run, String> {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("configs").join(config);
    let mut cfg = RunConfig::load(&path).map_err(|e| e.to_string())?;
    let tmp = scratch();
    cfg.data.dir = cmapss_dir();
    cfg.out_dir = tmp.path().to_path_buf();
    if let Some(e) = epochs {
        cfg.training.epochs = e;
    }
    let start = Instant::now();
    let trained = cmd_train(&cfg).map_err(|e| e.to_string())?;
    let report = cmd_evaluate(&cfg, &tmp.path().join(MODEL_FILE)).map_err(|e| e.to_string())?;
    let stopped = trained
        .outcome
        .converged
        .map(|_| trained.outcome.history.last().map(|r| (r.step, r.sigma_change.unwrap_or(f64::NAN))).unwrap());
    Ok(Fd003Run {
        rmse: report.rmse,
        score: report.score_total,
        n: report.n_t,
        smooth_fraction: smoothed_nonincreasing(&trained.outcome.epoch_losses),
        minutes: start.elapsed().as_secs_f64() / 60.0,
        stopped,
    })
}

fn full_runs_enabled() -> Option<String> {
    (std::env::var("DLBP_FULL_REPRO").as_deref() != Ok("1"))
        .then(|| "full-budget FD003 training is opt-in (DLBP_FULL_REPRO=1)".to_string())
}

fn c7a_fd003_ci() -> Outcome {
    if let Some(m) = fd003_missing() {
        return Unavailable(m);
    }
    match fd003_run("dlbp1_mll.toml", Some(50)) {
        Ok(r) => verdict(
            r.rmse <= 20.0 && r.minutes <= 30.0,
            format!("n = {}, RMSE {:.2} (≤20), score {:.1}, {:.1} min (≤30)", r.n, r.rmse, r.score, r.minutes),
        ),
        Err(e) => Fail(e),
    }
}

fn c7b_fd003_full() -> Outcome {
    if let Some(m) = fd003_missing().or_else(full_runs_enabled) {
        return Unavailable(m);
    }
    match fd003_run("dlbp1_mll.toml", None) {
        Ok(r) => {
            let full = r.rmse <= 12.5 && r.score <= 300.0;
            verdict(
                r.rmse <= 16.0 && r.score <= 500.0 && r.smooth_fraction >= 0.95,
                format!(
                    "n = {}, RMSE {:.2} (≤16), score {:.1} (≤500), smoothed loss non-increasing on {:.1}% of transitions (≥95%), \
                     {:.0} min; full reproduction band (RMSE ≤12.5, score ≤300): {full}",
                    r.n,
                    r.rmse,
                    r.score,
                    100.0 * r.smooth_fraction,
                    r.minutes
                ),
            )
        }
        Err(e) => Fail(e),
    }
}

fn c8_fd003_dlbp2() -> Outcome {
    if let Some(m) = fd003_missing().or_else(full_runs_enabled) {
        return Unavailable(m);
    }
    match fd003_run("dlbp2_mw.toml", None) {
        Ok(r) => verdict(
            r.rmse <= 16.0 && r.score <= 500.0,
            format!(
                "n = {}, RMSE {:.2} (≤16), score {:.1} (≤500), scale iteration stopped at {:?}, {:.0} min",
                r.n, r.rmse, r.score, r.stopped, r.minutes
            ),
        ),
        Err(e) => Fail(e),
    }
}

// ---------------------------------------------------------------- criterion 9

fn c9_determinism() -> Outcome {
    let data = scratch();
    let spec = FleetSpec {
        train_engines: 10,
        test_engines: 5,
        min_life: 50,
        max_life: 90,
        ..FleetSpec::default()
    };
    write_cmapss(&generate_fleet(&spec).unwrap(), data.path(), "FD003").unwrap();
    let base = |kind: ModelKind, families: Vec<Family>| {
        let mut cfg = RunConfig {
            seed: 9,
            ..RunConfig::default()
        };
        cfg.data.dir = data.path().to_path_buf();
        cfg.data.window = 10;
        cfg.model.kind = kind;
        cfg.model.families = families;
        cfg.model.lstm_units = vec![6];
        cfg.model.fc_units = vec![6];
        cfg.model.head_activations = None;
        cfg.training.batch_size = 64;
        cfg.training.epochs = 4;
        cfg.training.max_outer = 2;
        cfg.training.learning_rate = 5e-3;
        cfg.tuning.windows = vec![8, 10];
        cfg.tuning.layer_counts = vec![[1, 1]];
        cfg.tuning.lstm_units = vec![4];
        cfg.tuning.fc_units = vec![4];
        cfg.tuning.batch_sizes = vec![64];
        cfg.tuning.epochs = vec![2];
        cfg.tuning.repeats = 2;
        cfg.tuning.initial.epochs = 2;
        cfg
    };
    let run = |cfg: &RunConfig, threads: usize| -> Vec<Vec<u8>> {
        let out = scratch();
        let mut c = cfg.clone();
        c.out_dir = out.path().to_path_buf();
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        pool.install(|| {
            cmd_preprocess(&c).unwrap();
            cmd_train(&c).unwrap();
            cmd_evaluate(&c, &out.path().join(MODEL_FILE)).unwrap();
            cmd_tune(&c).unwrap();
        });
        [WINDOWS_FILE, MODEL_FILE, REPORT_FILE, "history.csv", "predictions.csv", TUNE_TRACE_FILE]
            .iter()
            .map(|f| std::fs::read(out.path().join(f)).unwrap())
            .collect()
    };
    let mut identical = true;
    let mut compared = 0;
    for cfg in [
        base(ModelKind::Dlbp1, vec![Family::LogLogistic, Family::LogLogistic]),
        base(ModelKind::Dlbp2, vec![Family::Weibull, Family::Weibull]),
    ] {
        let a = run(&cfg, 4);
        let b = run(&cfg, 4);
        let c = run(&cfg, 1);
        identical &= a == b && a == c;
        compared += 2 * a.len();
    }
    verdict(
        identical,
        format!("DLBP1 and DLBP2 runs repeated with 4 and 1 worker threads, {compared} file pairs byte-identical: {identical}"),
    )
}
