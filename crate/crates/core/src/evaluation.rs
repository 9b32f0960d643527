//! Point predictions from mixture parameters and fleet-level error metrics.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::dataset::{cap_rul, inference_window, sliding_window, EngineTrace, WindowedSample};
use crate::distribution::{mixture_mean, Component, Mixture, WeibullMeanVariant};
use crate::error::{Error, Result};
use crate::network::ModelParams;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub asset_id: u32,
    pub window_index: u32,
    pub predicted_rul: f64,
    pub true_rul: Option<f64>,
    pub components: Vec<Component>,
    pub weights: Vec<f64>,
}

impl Prediction {
    pub fn mixture(&self) -> Mixture {
        Mixture::new(self.components.clone(), self.weights.clone())
    }

    /// `predicted − true`.
    pub fn delta(&self) -> Option<f64> {
        self.true_rul.map(|t| self.predicted_rul - t)
    }
}

fn prediction_from(sample: &WindowedSample, mixture: Mixture, variant: WeibullMeanVariant) -> Result<Prediction> {
    let predicted_rul = mixture_mean(&mixture, variant).map_err(|e| {
        Error::Domain(format!(
            "asset {} window {}: {e} (components {:?}, weights {:?})",
            sample.asset_id, sample.window_index, mixture.components, mixture.weights
        ))
    })?;
    Ok(Prediction {
        asset_id: sample.asset_id,
        window_index: sample.window_index,
        predicted_rul,
        true_rul: sample.target,
        components: mixture.components,
        weights: mixture.weights,
    })
}

/// Mixture mean of the model's output for one preprocessed window.
pub fn predict(model: &ModelParams, sample: &WindowedSample, variant: WeibullMeanVariant) -> Result<Prediction> {
    if sample.window.nrows() != model.arch.window {
        return Err(Error::Incompatible(format!(
            "window has {} rows, model was trained on {}",
            sample.window.nrows(),
            model.arch.window
        )));
    }
    let mixture = model.forward(sample.window.view())?;
    prediction_from(sample, mixture, variant)
}

pub fn predict_batch(
    model: &ModelParams,
    samples: &[WindowedSample],
    variant: WeibullMeanVariant,
) -> Result<Vec<Prediction>> {
    if let Some(s) = samples.iter().find(|s| s.window.nrows() != model.arch.window) {
        return Err(Error::Incompatible(format!(
            "asset {} window has {} rows, model was trained on {}",
            s.asset_id,
            s.window.nrows(),
            model.arch.window
        )));
    }
    if samples.is_empty() {
        return Ok(Vec::new());
    }
    let views: Vec<_> = samples.iter().map(|s| s.window.view()).collect();
    let mixtures = model.forward_batch(&views)?;
    samples
        .iter()
        .zip(mixtures)
        .map(|(s, m)| prediction_from(s, m, variant))
        .collect()
}

fn deltas(predictions: &[Prediction]) -> Result<Vec<f64>> {
    if predictions.is_empty() {
        return Err(Error::Domain("no predictions to score".into()));
    }
    predictions
        .iter()
        .map(|p| {
            p.delta()
                .ok_or_else(|| Error::Domain(format!("asset {} has no true RUL", p.asset_id)))
        })
        .collect()
}

/// `√(Σ δᵢ² / n)`.
pub fn rmse(predictions: &[Prediction]) -> Result<f64> {
    let d = deltas(predictions)?;
    Ok((d.iter().map(|v| v * v).sum::<f64>() / d.len() as f64).sqrt())
}

/// Asymmetric penalty: `e^(−δ/13) − 1` for early predictions, `e^(δ/10) − 1` for late ones.
pub fn score_one(delta: f64) -> f64 {
    if delta < 0.0 {
        (-delta / 13.0).exp_m1()
    } else {
        (delta / 10.0).exp_m1()
    }
}

/// Summed score and its per-prediction terms.
pub fn score(predictions: &[Prediction]) -> Result<(f64, Vec<f64>)> {
    let per: Vec<f64> = deltas(predictions)?.into_iter().map(score_one).collect();
    Ok((per.iter().sum(), per))
}

/// `|δᵢ| / |trueᵢ|`; predictions with a zero true RUL are left out.
pub fn rae(predictions: &[Prediction]) -> Result<Vec<(u32, f64)>> {
    let d = deltas(predictions)?;
    let mut out = Vec::with_capacity(d.len());
    for (p, delta) in predictions.iter().zip(d) {
        let truth = p.true_rul.expect("checked by deltas");
        if truth == 0.0 {
            log::warn!("asset {}: true RUL is 0, relative error skipped", p.asset_id);
            continue;
        }
        out.push((p.asset_id, delta.abs() / truth.abs()));
    }
    Ok(out)
}

/// Linear-interpolation quantile of sorted data (the usual "type 7" definition).
pub fn quantile(sorted: &[f64], prob: f64) -> f64 {
    assert!(!sorted.is_empty(), "quantile of empty data");
    let h = (sorted.len() - 1) as f64 * prob.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoxStats {
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
    pub iqr: f64,
}

pub fn box_stats(values: &[f64]) -> Option<BoxStats> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let q1 = quantile(&v, 0.25);
    let q3 = quantile(&v, 0.75);
    Some(BoxStats {
        min: v[0],
        q1,
        median: quantile(&v, 0.5),
        q3,
        max: v[v.len() - 1],
        iqr: q3 - q1,
    })
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EvalMode {
    /// One prediction per asset from its latest window.
    #[default]
    FinalWindow,
    /// Every window with a positive true RUL.
    AllWindows,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalOptions {
    pub mode: EvalMode,
    /// Compare against `min(true RUL, rul_cap)` instead of the raw value.
    pub cap_truth: bool,
    pub rul_cap: f64,
    pub weibull_mean: WeibullMeanVariant,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self {
            mode: EvalMode::FinalWindow,
            cap_truth: true,
            rul_cap: crate::dataset::DEFAULT_RUL_CAP,
            weibull_mean: WeibullMeanVariant::Standard,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub mode: EvalMode,
    pub n_t: usize,
    pub rmse: f64,
    pub score_total: f64,
    pub score_mean: f64,
    pub score_per_asset: Vec<f64>,
    pub rae_per_asset: Vec<f64>,
    pub rae_box: Option<BoxStats>,
    pub truth_capped: bool,
    pub rul_cap: f64,
    pub weibull_mean: WeibullMeanVariant,
    #[serde(default)]
    pub model_sha256: Option<String>,
    #[serde(default)]
    pub config_sha256: Option<String>,
}

/// Aggregates predictions that carry true RULs.
pub fn report(predictions: &[Prediction], options: &EvalOptions) -> Result<EvalReport> {
    let rmse = rmse(predictions)?;
    let (score_total, per) = score(predictions)?;
    let rae: Vec<f64> = rae(predictions)?.into_iter().map(|(_, v)| v).collect();
    Ok(EvalReport {
        mode: options.mode,
        n_t: predictions.len(),
        rmse,
        score_total,
        score_mean: score_total / predictions.len() as f64,
        score_per_asset: per,
        rae_box: box_stats(&rae),
        rae_per_asset: rae,
        truth_capped: options.cap_truth,
        rul_cap: options.rul_cap,
        weibull_mean: options.weibull_mean,
        model_sha256: None,
        config_sha256: None,
    })
}

/// Evaluation samples from normalized test traces with known failure times.
pub fn evaluation_samples(traces: &[EngineTrace], window: usize, options: &EvalOptions) -> Result<Vec<WindowedSample>> {
    let mut out = Vec::new();
    for t in traces {
        if t.failure_time.is_none() {
            return Err(Error::Domain(format!("asset {} has no known failure time", t.asset_id)));
        }
        match options.mode {
            EvalMode::FinalWindow => out.push(inference_window(t, window)),
            EvalMode::AllWindows => out.extend(sliding_window(t, window, 1)),
        }
    }
    if options.cap_truth {
        for s in &mut out {
            s.target = s.target.map(|y| cap_rul(y, options.rul_cap));
        }
    }
    Ok(out)
}

/// Predicts every evaluation sample of a normalized test fleet and aggregates the metrics.
pub fn evaluate_fleet(
    traces: &[EngineTrace],
    model: &ModelParams,
    options: &EvalOptions,
) -> Result<(EvalReport, Vec<Prediction>)> {
    if let Some(t) = traces.iter().find(|t| !t.normalized) {
        return Err(Error::Domain(format!("asset {} is not normalized", t.asset_id)));
    }
    let samples = evaluation_samples(traces, model.arch.window, options)?;
    let predictions = predict_batch(model, &samples, options.weibull_mean)?;
    Ok((report(&predictions, options)?, predictions))
}

/// `asset_id,window_index,predicted_rul,true_rul,delta,score,rae` followed by
/// `mu_k,sigma_k,lambda_k` for each component.
pub fn write_predictions_csv(predictions: &[Prediction], out: &mut impl Write) -> std::io::Result<()> {
    let k = predictions.first().map_or(0, |p| p.components.len());
    write!(out, "asset_id,window_index,predicted_rul,true_rul,delta,score,rae")?;
    for j in 1..=k {
        write!(out, ",mu_{j},sigma_{j},lambda_{j}")?;
    }
    writeln!(out)?;
    for p in predictions {
        write!(out, "{},{},{}", p.asset_id, p.window_index, p.predicted_rul)?;
        match p.true_rul {
            Some(t) => {
                let d = p.predicted_rul - t;
                let rae = if t != 0.0 { format!("{}", d.abs() / t.abs()) } else { String::new() };
                write!(out, ",{t},{d},{},{rae}", score_one(d))?;
            }
            None => write!(out, ",,,,")?,
        }
        for (c, w) in p.components.iter().zip(&p.weights) {
            write!(out, ",{},{},{w}", c.location, c.scale)?;
        }
        writeln!(out)?;
    }
    Ok(())
}
