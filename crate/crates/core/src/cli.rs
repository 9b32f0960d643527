//! Commands behind the `dlbp` binary: preprocess, train, predict, evaluate, tune.
//!
//! Each command reads a [`RunConfig`], writes its outputs plus the resolved
//! configuration and a provenance record into `out_dir`, and returns a
//! summary. Nothing here depends on wall-clock time, so identical inputs
//! give byte-identical outputs.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::codec;
use crate::config::RunConfig;
use crate::dataset::{
    cmapss_paths, inference_window, load_cmapss, load_rul_file, parse_cmapss, DatasetHeader, Preprocessing, Split,
    WindowedDataset, WindowedSample,
};
use crate::error::{Error, Result};
use crate::evaluation::{evaluate_fleet, predict_batch, write_predictions_csv, EvalReport, Prediction};
use crate::network::io::SavedModel;
use crate::training::{train, write_history_csv, TrainOutcome};
use crate::tune::{tune, write_trace_csv, TuneOutcome};

pub const RESOLVED_CONFIG: &str = "config.resolved.toml";
pub const PROVENANCE: &str = "provenance.json";
pub const MODEL_FILE: &str = "model.bin";
pub const WINDOWS_FILE: &str = "windows.bin";
pub const HISTORY_FILE: &str = "history.csv";
pub const PREDICTIONS_FILE: &str = "predictions.csv";
pub const REPORT_FILE: &str = "report.json";
pub const TUNE_TRACE_FILE: &str = "tune_trace.csv";
pub const TUNE_BEST_FILE: &str = "tune_best.toml";

/// Command-line values that take precedence over the configuration file.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub out_dir: Option<PathBuf>,
    pub threads: Option<usize>,
}

/// Reads the configuration (defaults when no file is given) and applies overrides.
pub fn load_config(path: Option<&Path>, overrides: &Overrides) -> Result<RunConfig> {
    let mut cfg = match path {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = overrides.seed {
        cfg.seed = s;
    }
    if let Some(d) = &overrides.out_dir {
        cfg.out_dir = d.clone();
    }
    if let Some(t) = overrides.threads {
        cfg.threads = Some(t);
    }
    cfg.validate()?;
    Ok(cfg)
}

#[derive(Serialize)]
struct Provenance<'a> {
    command: &'a str,
    version: &'a str,
    seed: u64,
    config_sha256: String,
    inputs: BTreeMap<String, String>,
    outputs: BTreeMap<String, String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    notes: Option<serde_json::Value>,
}

struct Run<'a> {
    cfg: &'a RunConfig,
    command: &'a str,
    inputs: BTreeMap<String, String>,
    outputs: BTreeMap<String, String>,
}

impl<'a> Run<'a> {
    fn start(cfg: &'a RunConfig, command: &'a str) -> Result<Self> {
        std::fs::create_dir_all(&cfg.out_dir).map_err(|e| Error::io(&cfg.out_dir, e))?;
        Ok(Self {
            cfg,
            command,
            inputs: BTreeMap::new(),
            outputs: BTreeMap::new(),
        })
    }

    fn read_input(&mut self, path: &Path) -> Result<Vec<u8>> {
        let bytes = codec::read_file(path)?;
        self.inputs.insert(path.display().to_string(), codec::sha256_hex(&bytes));
        Ok(bytes)
    }

    fn record_input(&mut self, path: &Path) -> Result<()> {
        self.read_input(path).map(|_| ())
    }

    fn write(&mut self, name: &str, bytes: &[u8]) -> Result<PathBuf> {
        let path = self.cfg.out_dir.join(name);
        codec::write_file(&path, bytes)?;
        self.outputs.insert(name.to_string(), codec::sha256_hex(bytes));
        Ok(path)
    }

    fn finish(mut self, notes: Option<serde_json::Value>) -> Result<()> {
        let resolved = self.cfg.to_toml();
        self.write(RESOLVED_CONFIG, resolved.as_bytes())?;
        let prov = Provenance {
            command: self.command,
            version: env!("CARGO_PKG_VERSION"),
            seed: self.cfg.seed,
            config_sha256: config_hash(self.cfg),
            inputs: self.inputs.clone(),
            outputs: self.outputs.clone(),
            notes,
        };
        let json = serde_json::to_vec_pretty(&prov).expect("provenance serializes");
        codec::write_file(&self.cfg.out_dir.join(PROVENANCE), &json)
    }
}

/// Hash of the resolved configuration without its output directory, which
/// does not influence any result.
pub fn config_hash(cfg: &RunConfig) -> String {
    let mut c = cfg.clone();
    c.out_dir = PathBuf::new();
    codec::sha256_hex(c.to_toml().as_bytes())
}

fn load_raw_train(run: &mut Run<'_>) -> Result<Vec<crate::dataset::EngineTrace>> {
    let (train, _, _) = cmapss_paths(&run.cfg.data.dir, &run.cfg.data.dataset);
    let bytes = run.read_input(&train)?;
    let text = String::from_utf8(bytes).map_err(|_| Error::parse(&train, 0, "not valid UTF-8"))?;
    parse_cmapss(&text, &train, Split::Train, None)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PreprocessSummary {
    pub engines: usize,
    pub windows: usize,
    pub channels: usize,
    pub kept_sensors: Vec<usize>,
    pub removed_sensors: Vec<usize>,
    pub output: PathBuf,
}

/// Fits sensor selection and normalization on the training file and writes capped training windows.
pub fn cmd_preprocess(cfg: &RunConfig) -> Result<PreprocessSummary> {
    let mut run = Run::start(cfg, "preprocess")?;
    let raw = load_raw_train(&mut run)?;
    let (pre, normalized) = Preprocessing::fit(&raw, cfg.data.window, cfg.data.rul_cap)?;
    let samples = pre.training_samples(&normalized);
    let ds = WindowedDataset {
        header: DatasetHeader {
            window: pre.window,
            channels: pre.channels(),
            stride: 1,
            rul_cap: pre.rul_cap,
            seed: cfg.seed,
            kept_sensors: pre.kept_sensors.clone(),
            stats: pre.stats.clone(),
        },
        samples,
    };
    let output = run.write(WINDOWS_FILE, &ds.to_bytes()?)?;
    let removed = (1..=crate::dataset::SENSOR_COUNT)
        .filter(|s| !pre.kept_sensors.contains(s))
        .collect();
    let summary = PreprocessSummary {
        engines: raw.len(),
        windows: ds.samples.len(),
        channels: pre.channels(),
        kept_sensors: pre.kept_sensors.clone(),
        removed_sensors: removed,
        output,
    };
    run.write(
        "preprocessing.json",
        &serde_json::to_vec_pretty(&pre).expect("preprocessing serializes"),
    )?;
    run.finish(Some(serde_json::to_value(&summary).expect("summary serializes")))?;
    Ok(summary)
}

#[derive(Clone, Debug)]
pub struct TrainSummary {
    pub outcome: TrainOutcome,
    pub model_path: PathBuf,
    pub model_sha256: String,
}

/// Trains from the raw training file (or a windowed-dataset file) and writes the model and history.
pub fn cmd_train(cfg: &RunConfig) -> Result<TrainSummary> {
    let mut run = Run::start(cfg, "train")?;
    let tc = cfg.train_config()?;
    let (pre, samples) = match &cfg.data.windows {
        Some(path) => {
            let bytes = run.read_input(path)?;
            let ds = WindowedDataset::from_bytes(&bytes, path)?;
            let h = ds.header;
            if h.window != cfg.data.window {
                return Err(Error::Incompatible(format!(
                    "{} holds windows of width {}, configuration asks for {}",
                    path.display(),
                    h.window,
                    cfg.data.window
                )));
            }
            let pre = Preprocessing {
                kept_sensors: h.kept_sensors,
                stats: h.stats,
                window: h.window,
                rul_cap: h.rul_cap,
            };
            (pre, ds.samples)
        }
        None => {
            let raw = load_raw_train(&mut run)?;
            let (pre, normalized) = Preprocessing::fit(&raw, cfg.data.window, cfg.data.rul_cap)?;
            let samples = pre.training_samples(&normalized);
            (pre, samples)
        }
    };
    log::info!(
        "training {} on {} windows ({} channels)",
        tc.kind,
        samples.len(),
        pre.channels()
    );
    let outcome = train(&samples, &tc)?;
    let model = SavedModel {
        weibull_mean: cfg.evaluation.weibull_mean,
        ..SavedModel::new(outcome.params.clone(), Some(pre), cfg.seed)
    };
    let bytes = model.to_bytes()?;
    let model_path = run.write(MODEL_FILE, &bytes)?;
    let mut hist = Vec::new();
    write_history_csv(&outcome.history, tc.mixture.k(), &mut hist).expect("in-memory write");
    run.write(HISTORY_FILE, &hist)?;
    let notes = serde_json::json!({
        "windows": samples.len(),
        "converged": outcome.converged,
        "final_loss": outcome.history.last().map(|r| r.loss),
    });
    run.finish(Some(notes))?;
    Ok(TrainSummary {
        outcome,
        model_path,
        model_sha256: codec::sha256_hex(&bytes),
    })
}

fn load_model(run: &mut Run<'_>, path: &Path) -> Result<(SavedModel, String)> {
    let bytes = run.read_input(path)?;
    let model = SavedModel::from_bytes(&bytes, path)?;
    Ok((model, codec::sha256_hex(&bytes)))
}

fn model_preprocessing(model: &SavedModel) -> Result<&Preprocessing> {
    model
        .preprocessing
        .as_ref()
        .ok_or_else(|| Error::Incompatible("model file carries no preprocessing; cannot process raw traces".into()))
}

/// Predicts the final window of each trace in a raw C-MAPSS-format file, or
/// every sample of a windowed-dataset file produced with matching preprocessing.
pub fn cmd_predict(cfg: &RunConfig, model_path: &Path, input: &Path, rul: Option<&Path>) -> Result<Vec<Prediction>> {
    let mut run = Run::start(cfg, "predict")?;
    let (model, _) = load_model(&mut run, model_path)?;
    let window = model.params.arch.window;
    let bytes = run.read_input(input)?;
    let samples: Vec<WindowedSample> = if WindowedDataset::is_dataset_file(&bytes) {
        let ds = WindowedDataset::from_bytes(&bytes, input)?;
        let pre = model_preprocessing(&model)?;
        if ds.header.window != window {
            return Err(Error::Incompatible(format!(
                "input windows have width {}, model expects {window}",
                ds.header.window
            )));
        }
        if ds.header.kept_sensors != pre.kept_sensors || ds.header.stats != pre.stats {
            return Err(Error::Incompatible(
                "input was normalized with different sensors or statistics than the model".into(),
            ));
        }
        ds.samples
    } else {
        let text = String::from_utf8(bytes).map_err(|_| Error::parse(input, 0, "not valid UTF-8"))?;
        let (split, ruls) = match rul {
            Some(p) => {
                run.record_input(p)?;
                (Split::Test, Some(load_rul_file(p)?))
            }
            None => (Split::Test, None),
        };
        let traces = parse_cmapss(&text, input, split, rul.zip(ruls.as_deref()))?;
        let normalized = model_preprocessing(&model)?.apply(&traces)?;
        normalized.iter().map(|t| inference_window(t, window)).collect()
    };
    let predictions = predict_batch(&model.params, &samples, model.weibull_mean)?;
    let mut csv = Vec::new();
    write_predictions_csv(&predictions, &mut csv).expect("in-memory write");
    run.write(PREDICTIONS_FILE, &csv)?;
    run.finish(None)?;
    Ok(predictions)
}

/// Scores a model on the configured test fleet and writes `predictions.csv` and `report.json`.
pub fn cmd_evaluate(cfg: &RunConfig, model_path: &Path) -> Result<EvalReport> {
    let mut run = Run::start(cfg, "evaluate")?;
    let (model, model_hash) = load_model(&mut run, model_path)?;
    let pre = model_preprocessing(&model)?;
    if pre.window != cfg.data.window {
        return Err(Error::Incompatible(format!(
            "model was trained with window {}, configuration says {}",
            pre.window, cfg.data.window
        )));
    }
    let (_, test, rul) = cmapss_paths(&cfg.data.dir, &cfg.data.dataset);
    run.record_input(&test)?;
    run.record_input(&rul)?;
    let traces = load_cmapss(&test, Split::Test, Some(&rul))?;
    let normalized = pre.apply(&traces)?;
    let mut options = cfg.eval_options();
    options.rul_cap = pre.rul_cap;
    let (mut report, predictions) = evaluate_fleet(&normalized, &model.params, &options)?;
    report.model_sha256 = Some(model_hash);
    report.config_sha256 = Some(config_hash(cfg));
    let mut csv = Vec::new();
    write_predictions_csv(&predictions, &mut csv).expect("in-memory write");
    run.write(PREDICTIONS_FILE, &csv)?;
    run.write(REPORT_FILE, &serde_json::to_vec_pretty(&report).expect("report serializes"))?;
    run.finish(None)?;
    Ok(report)
}

/// Block-coordinate search over the configured grid; writes the trace and the winning configuration.
pub fn cmd_tune(cfg: &RunConfig) -> Result<TuneOutcome> {
    let mut run = Run::start(cfg, "tune")?;
    let raw = load_raw_train(&mut run)?;
    let outcome = tune(&raw, cfg)?;
    let mut csv = Vec::new();
    write_trace_csv(&outcome.trace, &mut csv).expect("in-memory write");
    run.write(TUNE_TRACE_FILE, &csv)?;
    let b = &outcome.best;
    let mut best = cfg.clone();
    best.data.window = b.window;
    best.model.lstm_units = vec![b.lstm_units; b.lstm_layers];
    best.model.fc_units = vec![b.fc_units; b.fc_layers];
    best.training.batch_size = b.batch_size;
    best.training.epochs = b.epochs;
    run.write(TUNE_BEST_FILE, best.to_toml().as_bytes())?;
    run.finish(Some(serde_json::to_value(&outcome.blocks).expect("blocks serialize")))?;
    Ok(outcome)
}
