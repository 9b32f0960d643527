//! Declarative run configuration read from TOML.
//!
//! ```toml
//! seed = 42
//! out_dir = "runs/fd003-dlbp1"
//!
//! [data]
//! dir = "data/CMAPSS"
//! dataset = "FD003"
//! window = 30
//!
//! [model]
//! kind = "dlbp1"
//! families = ["loglogistic", "loglogistic"]
//! lstm_units = [64]
//! fc_units = [128]
//!
//! [training]
//! batch_size = 512
//! epochs = 250
//! ```
//!
//! Unknown keys are rejected. Every command writes the fully resolved
//! configuration next to its outputs.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::dataset::DEFAULT_RUL_CAP;
use crate::distribution::{Family, MixtureSpec, WeibullMeanVariant};
use crate::error::{Error, Result};
use crate::evaluation::{EvalMode, EvalOptions};
use crate::network::{Activation, GateActivation, ModelKind};
use crate::training::{AdamConfig, ScaleWeighting, SigmaInit, TrainConfig};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_out_dir")]
    pub out_dir: PathBuf,
    /// Worker threads; all available cores when absent.
    #[serde(default)]
    pub threads: Option<usize>,
    #[serde(default)]
    pub data: DataConfig,
    #[serde(default)]
    pub model: ModelConfig,
    #[serde(default)]
    pub training: TrainingConfig,
    #[serde(default)]
    pub evaluation: EvaluationConfig,
    #[serde(default)]
    pub tuning: TuningConfig,
}

fn default_out_dir() -> PathBuf {
    PathBuf::from("runs/default")
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataConfig {
    /// Directory holding `train_<id>.txt`, `test_<id>.txt` and `RUL_<id>.txt`.
    pub dir: PathBuf,
    pub dataset: String,
    pub window: usize,
    pub rul_cap: f64,
    /// Windowed-dataset file to train from instead of the raw training file.
    pub windows: Option<PathBuf>,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            dir: PathBuf::from("data/CMAPSS"),
            dataset: "FD003".into(),
            window: 30,
            rul_cap: DEFAULT_RUL_CAP,
            windows: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    pub kind: ModelKind,
    pub families: Vec<Family>,
    pub lstm_units: Vec<usize>,
    pub fc_units: Vec<usize>,
    pub fc_activation: Activation,
    pub output_gate: GateActivation,
    pub head_activations: Option<Vec<Activation>>,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            kind: ModelKind::Dlbp1,
            families: vec![Family::LogNormal, Family::LogNormal],
            lstm_units: vec![128],
            fc_units: vec![64, 64],
            fc_activation: Activation::Elu,
            output_gate: GateActivation::Sigmoid,
            head_activations: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainingConfig {
    pub batch_size: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub adam: AdamConfig,
    pub max_outer: usize,
    pub tolerance: f64,
    pub inner_epochs: Option<usize>,
    pub scale_weighting: ScaleWeighting,
    pub sigma_init: SigmaInit,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self {
            batch_size: 512,
            epochs: 200,
            learning_rate: 1e-3,
            adam: AdamConfig::default(),
            max_outer: 20,
            tolerance: 1e-4,
            inner_epochs: None,
            scale_weighting: ScaleWeighting::Uniform,
            sigma_init: SigmaInit::Shifted,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvaluationConfig {
    pub mode: EvalMode,
    pub cap_truth: bool,
    pub weibull_mean: WeibullMeanVariant,
}

impl Default for EvaluationConfig {
    fn default() -> Self {
        Self {
            mode: EvalMode::FinalWindow,
            cap_truth: true,
            weibull_mean: WeibullMeanVariant::Standard,
        }
    }
}

/// Candidate values per tuning block, searched in the order listed here.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TuningConfig {
    pub windows: Vec<usize>,
    /// `[lstm_layers, fc_layers]` pairs.
    pub layer_counts: Vec<[usize; 2]>,
    pub lstm_units: Vec<usize>,
    pub fc_units: Vec<usize>,
    pub batch_sizes: Vec<usize>,
    pub epochs: Vec<usize>,
    pub repeats: usize,
    /// Share of training engines used for fitting in each repeat.
    pub train_fraction: f64,
    /// Values used for blocks not yet optimized.
    pub initial: TuningDefaults,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TuningDefaults {
    pub window: Option<usize>,
    pub lstm_layers: usize,
    pub fc_layers: usize,
    pub lstm_units: usize,
    pub fc_units: usize,
    pub batch_size: usize,
    pub epochs: usize,
}

impl Default for TuningDefaults {
    fn default() -> Self {
        Self {
            window: None,
            lstm_layers: 1,
            fc_layers: 2,
            lstm_units: 128,
            fc_units: 64,
            batch_size: 512,
            epochs: 200,
        }
    }
}

impl Default for TuningConfig {
    fn default() -> Self {
        Self {
            windows: vec![15, 20, 25, 30, 35],
            layer_counts: vec![[1, 1], [1, 2], [2, 1], [2, 2]],
            lstm_units: vec![64, 128, 256],
            fc_units: vec![32, 64, 128],
            batch_sizes: vec![128, 256, 512],
            epochs: vec![120, 150, 200, 250],
            repeats: 5,
            train_fraction: 0.9,
            initial: TuningDefaults::default(),
        }
    }
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            out_dir: default_out_dir(),
            threads: None,
            data: DataConfig::default(),
            model: ModelConfig::default(),
            training: TrainingConfig::default(),
            evaluation: EvaluationConfig::default(),
            tuning: TuningConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str, path: &Path) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| {
            let line = e
                .span()
                .map(|s| text[..s.start.min(text.len())].matches('\n').count() + 1)
                .unwrap_or(0);
            Error::parse(path, line, e.message().to_string())
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text, path)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("configuration serializes")
    }

    pub fn mixture(&self) -> Result<MixtureSpec> {
        MixtureSpec::new(self.model.families.clone())
    }

    pub fn train_config(&self) -> Result<TrainConfig> {
        let t = &self.training;
        let cfg = TrainConfig {
            kind: self.model.kind,
            mixture: self.mixture()?,
            window: self.data.window,
            lstm_units: self.model.lstm_units.clone(),
            fc_units: self.model.fc_units.clone(),
            fc_activation: self.model.fc_activation,
            output_gate: self.model.output_gate,
            head_activations: self.model.head_activations.clone(),
            batch_size: t.batch_size,
            epochs: t.epochs,
            learning_rate: t.learning_rate,
            adam: t.adam,
            seed: self.seed,
            max_outer: t.max_outer,
            tolerance: t.tolerance,
            inner_epochs: t.inner_epochs,
            scale_weighting: t.scale_weighting,
            sigma_init: t.sigma_init,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn eval_options(&self) -> EvalOptions {
        EvalOptions {
            mode: self.evaluation.mode,
            cap_truth: self.evaluation.cap_truth,
            rul_cap: self.data.rul_cap,
            weibull_mean: self.evaluation.weibull_mean,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.data.window == 0 {
            return Err(Error::Config("data.window must be positive".into()));
        }
        if !(self.data.rul_cap > 0.0) {
            return Err(Error::Config(format!("data.rul_cap must be positive, got {}", self.data.rul_cap)));
        }
        if self.threads == Some(0) {
            return Err(Error::Config("threads must be at least 1".into()));
        }
        let tc = self.train_config()?;
        tc.architecture(1)?;
        let tu = &self.tuning;
        if tu.repeats == 0 || !(tu.train_fraction > 0.0 && tu.train_fraction < 1.0) {
            return Err(Error::Config("tuning needs repeats ≥ 1 and train_fraction in (0, 1)".into()));
        }
        Ok(())
    }
}
