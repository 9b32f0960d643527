//! Weight estimation for both model kinds.
//!
//! [`train_dlbp1`] minimizes the mixture NLL with Adam over shuffled
//! mini-batches. [`train_dlbp2`] alternates Adam epochs on the network with
//! the fleet-wide scale held fixed and maximum-likelihood updates of that
//! scale given the network's locations.

mod adam;
mod backward;
pub mod scale;

use std::io::Write;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use adam::{adam_step, AdamConfig, AdamState};
pub use backward::{batch_loss, loss_and_grad, GradientTape};
pub use scale::{
    find_root, loglogistic_scale_residual, mle_sigma_lognormal, mle_sigma_lognormal_weighted, solve_sigma_loglogistic,
    solve_sigma_loglogistic_weighted, solve_sigma_weibull, solve_sigma_weibull_weighted, weibull_scale_residual, RootMethod,
    RootReport,
};

use crate::dataset::WindowedSample;
use crate::distribution::{Family, Mixture, MixtureSpec, SIGMA_FLOOR};
use crate::error::{Error, Result};
use crate::network::{Activation, Architecture, GateActivation, ModelKind, ModelParams};

/// How samples are weighted when a component's scale is re-estimated.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScaleWeighting {
    /// Every sample counts once for every component.
    #[default]
    Uniform,
    /// Samples are weighted by their posterior component membership.
    Responsibility,
}

/// Initial draw for the DLBP2 scales.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SigmaInit {
    /// Uniform(0,1), except log-logistic shapes which start in Uniform(1,2).
    #[default]
    Shifted,
    /// Uniform(0,1) for every family.
    Literal,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub kind: ModelKind,
    pub mixture: MixtureSpec,
    pub window: usize,
    pub lstm_units: Vec<usize>,
    pub fc_units: Vec<usize>,
    #[serde(default = "default_fc_activation")]
    pub fc_activation: Activation,
    #[serde(default)]
    pub output_gate: GateActivation,
    /// Overrides the per-family default head activations.
    #[serde(default)]
    pub head_activations: Option<Vec<Activation>>,
    pub batch_size: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    #[serde(default)]
    pub adam: AdamConfig,
    pub seed: u64,
    /// DLBP2 maximum number of outer iterations.
    #[serde(default = "default_max_outer")]
    pub max_outer: usize,
    /// DLBP2 stopping threshold on the mean squared scale change.
    #[serde(default = "default_tolerance")]
    pub tolerance: f64,
    /// DLBP2 Adam epochs per outer iteration; `ceil(epochs / max_outer)` when absent.
    #[serde(default)]
    pub inner_epochs: Option<usize>,
    #[serde(default)]
    pub scale_weighting: ScaleWeighting,
    #[serde(default)]
    pub sigma_init: SigmaInit,
}

fn default_fc_activation() -> Activation {
    Activation::Elu
}

fn default_max_outer() -> usize {
    20
}

fn default_tolerance() -> f64 {
    1e-4
}

impl TrainConfig {
    /// A configuration with defaults for everything but the model shape.
    pub fn new(kind: ModelKind, mixture: MixtureSpec, window: usize) -> Self {
        Self {
            kind,
            mixture,
            window,
            lstm_units: vec![128],
            fc_units: vec![64, 64],
            fc_activation: Activation::Elu,
            output_gate: GateActivation::Sigmoid,
            head_activations: None,
            batch_size: 512,
            epochs: 200,
            learning_rate: 1e-3,
            adam: AdamConfig::default(),
            seed: 0,
            max_outer: default_max_outer(),
            tolerance: default_tolerance(),
            inner_epochs: None,
            scale_weighting: ScaleWeighting::Uniform,
            sigma_init: SigmaInit::Shifted,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 || self.epochs == 0 {
            return Err(Error::Config("batch size and epochs must be at least 1".into()));
        }
        if !(self.learning_rate >= 0.0) || !self.learning_rate.is_finite() {
            return Err(Error::Config(format!("learning rate must be non-negative, got {}", self.learning_rate)));
        }
        if self.kind == ModelKind::Dlbp2 {
            if self.max_outer == 0 {
                return Err(Error::Config("at least one outer iteration is required".into()));
            }
            if !(self.tolerance > 0.0) {
                return Err(Error::Config(format!("tolerance must be positive, got {}", self.tolerance)));
            }
            if self.inner_epochs == Some(0) {
                return Err(Error::Config("inner epochs must be at least 1".into()));
            }
        }
        self.adam.validate()
    }

    pub fn inner_epochs(&self) -> usize {
        self.inner_epochs.unwrap_or_else(|| self.epochs.div_ceil(self.max_outer))
    }

    pub fn architecture(&self, input_size: usize) -> Result<Architecture> {
        let mut arch = Architecture::new(
            self.kind,
            self.mixture.clone(),
            input_size,
            self.window,
            self.lstm_units.clone(),
            self.fc_units.clone(),
        )?;
        arch.fc_activation = self.fc_activation;
        arch.output_gate = self.output_gate;
        if let Some(acts) = &self.head_activations {
            arch.head_activations = acts.clone();
        }
        arch.validate()?;
        Ok(arch)
    }
}

/// One row of a training history: an epoch for DLBP1, an outer iteration for DLBP2.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HistoryRow {
    pub step: usize,
    /// Mean training NLL over the epoch (DLBP2: over the last inner epoch).
    pub loss: f64,
    /// Current scales: empty for DLBP1, the updated shared scales for DLBP2.
    pub sigma: Vec<f64>,
    /// DLBP2 stopping statistic `(1/K) Σ (σ_new − σ_old)²`.
    pub sigma_change: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainOutcome {
    pub params: ModelParams,
    pub history: Vec<HistoryRow>,
    /// Per-epoch losses, also for the inner epochs of DLBP2.
    pub epoch_losses: Vec<f64>,
    /// DLBP2: whether the scale-change criterion was met within the iteration budget.
    pub converged: Option<bool>,
}

/// Writes `epoch_or_iter,loss,sigma_1..sigma_K` rows.
pub fn write_history_csv(history: &[HistoryRow], k: usize, out: &mut impl Write) -> std::io::Result<()> {
    write!(out, "epoch_or_iter,loss")?;
    for j in 1..=k {
        write!(out, ",sigma_{j}")?;
    }
    writeln!(out)?;
    for row in history {
        write!(out, "{},{}", row.step, row.loss)?;
        for j in 0..k {
            match row.sigma.get(j) {
                Some(s) => write!(out, ",{s}")?,
                None => write!(out, ",")?,
            }
        }
        writeln!(out)?;
    }
    Ok(())
}

fn channels(samples: &[WindowedSample], window: usize) -> Result<usize> {
    let first = samples
        .first()
        .ok_or_else(|| Error::Domain("no training samples".into()))?;
    let p = first.window.ncols();
    for s in samples {
        if s.window.dim() != (window, p) {
            return Err(Error::Shape(format!(
                "asset {} window {} is {:?}, expected {:?}",
                s.asset_id,
                s.window_index,
                s.window.dim(),
                (window, p)
            )));
        }
    }
    Ok(p)
}

fn shuffle_rng(seed: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(1);
    rng
}

fn sigma_rng(seed: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(2);
    rng
}

/// Runs `epochs` shuffled passes of Adam and returns the mean loss of each.
fn run_epochs(
    params: &mut ModelParams,
    state: &mut AdamState,
    samples: &[WindowedSample],
    config: &TrainConfig,
    rng: &mut ChaCha8Rng,
    epochs: usize,
    first_epoch: usize,
) -> Result<Vec<f64>> {
    let mut order: Vec<usize> = (0..samples.len()).collect();
    let mut losses = Vec::with_capacity(epochs);
    for e in 0..epochs {
        order.shuffle(rng);
        let mut total = 0.0;
        for chunk in order.chunks(config.batch_size) {
            let batch: Vec<&WindowedSample> = chunk.iter().map(|&i| &samples[i]).collect();
            let (loss, grad) = loss_and_grad(params, &batch).map_err(|err| match err {
                Error::Numeric(m) => Error::Numeric(format!("epoch {}: {m}", first_epoch + e)),
                other => other,
            })?;
            state.step(&mut params.weights, &grad, config.learning_rate, &config.adam);
            if !params.weights.is_finite() {
                return Err(Error::Numeric(format!("epoch {}: weights diverged", first_epoch + e)));
            }
            total += loss * batch.len() as f64;
        }
        let mean = total / samples.len() as f64;
        log::debug!("epoch {}: loss {mean:.6}", first_epoch + e);
        losses.push(mean);
    }
    Ok(losses)
}

/// Trains a DLBP1 model from Xavier initialization.
pub fn train_dlbp1(samples: &[WindowedSample], config: &TrainConfig) -> Result<TrainOutcome> {
    config.validate()?;
    if config.kind != ModelKind::Dlbp1 {
        return Err(Error::Config("train_dlbp1 needs kind = dlbp1".into()));
    }
    let p = channels(samples, config.window)?;
    let params = ModelParams::init(config.architecture(p)?, config.seed)?;
    train_dlbp1_from(params, samples, config)
}

/// Continues DLBP1 training from the given parameters.
pub fn train_dlbp1_from(mut params: ModelParams, samples: &[WindowedSample], config: &TrainConfig) -> Result<TrainOutcome> {
    config.validate()?;
    params.validate()?;
    channels(samples, config.window)?;
    let mut state = AdamState::new(&params.arch);
    let mut rng = shuffle_rng(config.seed);
    let losses = run_epochs(&mut params, &mut state, samples, config, &mut rng, config.epochs, 1)?;
    let history = losses
        .iter()
        .enumerate()
        .map(|(e, &loss)| HistoryRow {
            step: e + 1,
            loss,
            sigma: Vec::new(),
            sigma_change: None,
        })
        .collect();
    Ok(TrainOutcome {
        params,
        history,
        epoch_losses: losses,
        converged: None,
    })
}

/// Initial shared scales drawn from the seeded stream.
pub fn initial_sigma(mixture: &MixtureSpec, init: SigmaInit, seed: u64) -> Vec<f64> {
    let mut rng = sigma_rng(seed);
    mixture
        .families()
        .iter()
        .map(|&f| {
            let u: f64 = rng.random::<f64>();
            let u = u.max(SIGMA_FLOOR);
            match (f, init) {
                (Family::LogLogistic, SigmaInit::Shifted) => 1.0 + u,
                _ => u,
            }
        })
        .collect()
}

/// Posterior membership of each sample in each component.
pub fn responsibilities(targets: &[f64], mixtures: &[Mixture]) -> Result<Vec<Vec<f64>>> {
    targets
        .iter()
        .zip(mixtures)
        .map(|(&y, m)| {
            let terms: Vec<f64> = m
                .components
                .iter()
                .zip(&m.weights)
                .map(|(c, w)| w.ln() + c.log_pdf(y).unwrap_or(f64::NEG_INFINITY))
                .collect();
            let lse = crate::distribution::log_sum_exp(terms.iter().copied());
            if !lse.is_finite() {
                return Err(Error::Numeric(format!("zero mixture density at target {y}")));
            }
            Ok(terms.iter().map(|t| (t - lse).exp()).collect())
        })
        .collect()
}

/// One maximum-likelihood update of every shared scale.
///
/// `mixtures` hold the network's per-sample locations and weights with the
/// current scales; each component's scale is re-estimated independently by
/// its family's estimator.
pub fn update_scales(
    targets: &[f64],
    mixtures: &[Mixture],
    current: &[f64],
    weighting: ScaleWeighting,
) -> Result<Vec<f64>> {
    let k = current.len();
    let resp = match weighting {
        ScaleWeighting::Uniform => None,
        ScaleWeighting::Responsibility => Some(responsibilities(targets, mixtures)?),
    };
    let mut out = Vec::with_capacity(k);
    for c in 0..k {
        let family = mixtures
            .first()
            .ok_or_else(|| Error::Domain("scale update without samples".into()))?
            .components[c]
            .family;
        let locations: Vec<f64> = mixtures.iter().map(|m| m.components[c].location).collect();
        let weights: Option<Vec<f64>> = resp.as_ref().map(|r| r.iter().map(|row| row[c]).collect());
        if let Some(ws) = &weights {
            if !(ws.iter().sum::<f64>() > 0.0) {
                log::warn!("component {} has no posterior mass; keeping its scale at {}", c + 1, current[c]);
                out.push(current[c]);
                continue;
            }
        }
        let w = weights.as_deref();
        let sigma = match family {
            Family::LogNormal => mle_sigma_lognormal_weighted(targets, &locations, w)?,
            Family::Weibull => solve_sigma_weibull_weighted(targets, &locations, w, current[c])
                .map_err(|e| Error::Solver(format!("component {}: {e}", c + 1)))?
                .root,
            Family::LogLogistic => solve_sigma_loglogistic_weighted(targets, &locations, w, current[c])
                .map_err(|e| Error::Solver(format!("component {}: {e}", c + 1)))?
                .root,
        };
        out.push(sigma.max(SIGMA_FLOOR));
    }
    Ok(out)
}

/// Mean squared change between two scale vectors.
pub fn sigma_change(new: &[f64], old: &[f64]) -> f64 {
    new.iter().zip(old).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / new.len() as f64
}

/// Trains a DLBP2 model from Xavier initialization and seeded initial scales.
pub fn train_dlbp2(samples: &[WindowedSample], config: &TrainConfig) -> Result<TrainOutcome> {
    config.validate()?;
    if config.kind != ModelKind::Dlbp2 {
        return Err(Error::Config("train_dlbp2 needs kind = dlbp2".into()));
    }
    let p = channels(samples, config.window)?;
    let mut params = ModelParams::init(config.architecture(p)?, config.seed)?;
    params.shared_sigma = Some(initial_sigma(&config.mixture, config.sigma_init, config.seed));
    train_dlbp2_from(params, samples, config)
}

/// Alternating weight and scale estimation starting from `params`, whose
/// shared scales are taken as the initial values.
pub fn train_dlbp2_from(mut params: ModelParams, samples: &[WindowedSample], config: &TrainConfig) -> Result<TrainOutcome> {
    config.validate()?;
    params.validate()?;
    channels(samples, config.window)?;
    let targets: Vec<f64> = samples
        .iter()
        .map(|s| {
            s.target.ok_or_else(|| {
                Error::Domain(format!("asset {} window {} has no target", s.asset_id, s.window_index))
            })
        })
        .collect::<Result<_>>()?;
    let inner = config.inner_epochs();
    let mut state = AdamState::new(&params.arch);
    let mut rng = shuffle_rng(config.seed);
    let mut history = Vec::new();
    let mut epoch_losses = Vec::new();
    let mut converged = false;
    for j in 1..=config.max_outer {
        let losses = run_epochs(&mut params, &mut state, samples, config, &mut rng, inner, epoch_losses.len() + 1)?;
        let loss = *losses.last().expect("inner epochs ≥ 1");
        epoch_losses.extend(losses);
        let views: Vec<_> = samples.iter().map(|s| s.window.view()).collect();
        let mixtures = params.forward_batch(&views)?;
        let old = params.shared_sigma.clone().expect("validated DLBP2 model");
        let new = update_scales(&targets, &mixtures, &old, config.scale_weighting)
            .map_err(|e| match e {
                Error::Solver(m) => Error::Solver(format!("outer iteration {j}: {m}")),
                other => other,
            })?;
        let change = sigma_change(&new, &old);
        log::info!("outer iteration {j}: loss {loss:.6}, sigma {new:?}, change {change:.3e}");
        history.push(HistoryRow {
            step: j,
            loss,
            sigma: new.clone(),
            sigma_change: Some(change),
        });
        params.shared_sigma = Some(new);
        if change < config.tolerance {
            converged = true;
            break;
        }
    }
    Ok(TrainOutcome {
        params,
        history,
        epoch_losses,
        converged: Some(converged),
    })
}

/// Dispatches on the configured model kind.
pub fn train(samples: &[WindowedSample], config: &TrainConfig) -> Result<TrainOutcome> {
    match config.kind {
        ModelKind::Dlbp1 => train_dlbp1(samples, config),
        ModelKind::Dlbp2 => train_dlbp2(samples, config),
    }
}

#[cfg(test)]
mod tests;
