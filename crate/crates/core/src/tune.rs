//! Block-by-block hyperparameter search.
//!
//! Blocks are searched in a fixed order: window width, layer counts, layer
//! sizes, batch size, epochs. Every candidate of a block is trained on
//! several seeded engine-level splits and scored by mean validation RMSE; the
//! winner is frozen before the next block starts.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::dataset::{cap_targets, drop_constant_sensors, split_assets, EngineTrace, Preprocessing};
use crate::error::{Error, Result};
use crate::evaluation::{predict_batch, rmse};
use crate::network::Weights;
use crate::training::{train, TrainConfig};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Block {
    Window,
    Layers,
    Units,
    BatchSize,
    Epochs,
}

impl Block {
    pub const ORDER: [Block; 5] = [Block::Window, Block::Layers, Block::Units, Block::BatchSize, Block::Epochs];

    pub fn name(self) -> &'static str {
        match self {
            Block::Window => "window",
            Block::Layers => "layers",
            Block::Units => "units",
            Block::BatchSize => "batch-size",
            Block::Epochs => "epochs",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Candidate {
    pub window: usize,
    pub lstm_layers: usize,
    pub fc_layers: usize,
    pub lstm_units: usize,
    pub fc_units: usize,
    pub batch_size: usize,
    pub epochs: usize,
}

impl Candidate {
    pub fn initial(cfg: &RunConfig) -> Self {
        let d = &cfg.tuning.initial;
        Self {
            window: d.window.unwrap_or(cfg.data.window),
            lstm_layers: d.lstm_layers,
            fc_layers: d.fc_layers,
            lstm_units: d.lstm_units,
            fc_units: d.fc_units,
            batch_size: d.batch_size,
            epochs: d.epochs,
        }
    }

    /// The base training configuration with this candidate's hyperparameters.
    pub fn train_config(&self, base: &TrainConfig, seed: u64) -> TrainConfig {
        TrainConfig {
            window: self.window,
            lstm_units: vec![self.lstm_units; self.lstm_layers],
            fc_units: vec![self.fc_units; self.fc_layers],
            batch_size: self.batch_size,
            epochs: self.epochs,
            seed,
            ..base.clone()
        }
    }

    pub fn num_params(&self, base: &TrainConfig, channels: usize) -> Result<usize> {
        let arch = self.train_config(base, 0).architecture(channels)?;
        Ok(Weights::zeros(&arch).num_params())
    }
}

/// Candidates of one block, varying only that block's hyperparameters around `current`.
pub fn block_candidates(block: Block, current: &Candidate, cfg: &RunConfig) -> Vec<Candidate> {
    let g = &cfg.tuning;
    match block {
        Block::Window => g.windows.iter().map(|&window| Candidate { window, ..*current }).collect(),
        Block::Layers => g
            .layer_counts
            .iter()
            .map(|&[lstm_layers, fc_layers]| Candidate {
                lstm_layers,
                fc_layers,
                ..*current
            })
            .collect(),
        Block::Units => g
            .lstm_units
            .iter()
            .flat_map(|&lstm_units| {
                g.fc_units.iter().map(move |&fc_units| Candidate {
                    lstm_units,
                    fc_units,
                    ..*current
                })
            })
            .collect(),
        Block::BatchSize => g
            .batch_sizes
            .iter()
            .map(|&batch_size| Candidate { batch_size, ..*current })
            .collect(),
        Block::Epochs => g.epochs.iter().map(|&epochs| Candidate { epochs, ..*current }).collect(),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub block: Block,
    /// Position of the candidate within its block.
    pub candidate: usize,
    pub params: Candidate,
    pub num_params: usize,
    pub repeat: usize,
    pub seed: u64,
    pub val_rmse: Option<f64>,
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlockResult {
    pub block: Block,
    pub winner: Candidate,
    pub winner_index: usize,
    pub mean_rmse: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TuneOutcome {
    pub best: Candidate,
    pub blocks: Vec<BlockResult>,
    pub trace: Vec<TraceRow>,
}

/// Validation RMSE of one candidate on one engine-level split.
///
/// Preprocessing is fitted on the fitting engines only; validation engines
/// are scored on every positive-RUL window against capped targets.
pub fn evaluate_split(
    raw_train: &[EngineTrace],
    candidate: &Candidate,
    base: &TrainConfig,
    rul_cap: f64,
    train_fraction: f64,
    seed: u64,
) -> Result<f64> {
    let ids: Vec<u32> = raw_train.iter().map(|t| t.asset_id).collect();
    let (fit_ids, _) = split_assets(&ids, train_fraction, seed)?;
    let (fit, val): (Vec<EngineTrace>, Vec<EngineTrace>) = raw_train
        .iter()
        .cloned()
        .partition(|t| fit_ids.binary_search(&t.asset_id).is_ok());
    let (pre, fit_norm) = Preprocessing::fit(&fit, candidate.window, rul_cap)?;
    let val_norm = pre.apply(&val)?;
    let samples = pre.training_samples(&fit_norm);
    let mut val_samples: Vec<_> = val_norm
        .iter()
        .flat_map(|t| crate::dataset::sliding_window(t, candidate.window, 1))
        .collect();
    cap_targets(&mut val_samples, rul_cap);
    if val_samples.is_empty() {
        return Err(Error::Domain("validation split has no windows".into()));
    }
    let cfg = candidate.train_config(base, seed);
    let outcome = train(&samples, &cfg)?;
    let preds = predict_batch(&outcome.params, &val_samples, Default::default())?;
    rmse(&preds)
}

fn pick_winner(rows: &[TraceRow], candidates: &[Candidate]) -> Option<(usize, f64)> {
    let mut best: Option<(usize, f64, usize)> = None;
    for (i, _) in candidates.iter().enumerate() {
        let mine: Vec<&TraceRow> = rows.iter().filter(|r| r.candidate == i).collect();
        if mine.is_empty() || mine.iter().any(|r| r.val_rmse.is_none()) {
            continue;
        }
        let mean = mine.iter().map(|r| r.val_rmse.expect("checked")).sum::<f64>() / mine.len() as f64;
        let size = mine[0].num_params;
        let better = match best {
            None => true,
            Some((_, m, s)) => mean < m || (mean == m && size < s),
        };
        if better {
            best = Some((i, mean, size));
        }
    }
    best.map(|(i, m, _)| (i, m))
}

/// Runs every block in order on raw (unnormalized) training traces.
pub fn tune(raw_train: &[EngineTrace], cfg: &RunConfig) -> Result<TuneOutcome> {
    let base = cfg.train_config()?;
    let (_, kept) = drop_constant_sensors(raw_train)?;
    let channels = kept.len();
    let mut current = Candidate::initial(cfg);
    let mut trace = Vec::new();
    let mut blocks = Vec::new();
    for block in Block::ORDER {
        let candidates = block_candidates(block, &current, cfg);
        if candidates.is_empty() {
            continue;
        }
        let sizes: Vec<usize> = candidates
            .iter()
            .map(|c| c.num_params(&base, channels))
            .collect::<Result<_>>()?;
        let jobs: Vec<(usize, usize)> = (0..candidates.len())
            .flat_map(|c| (0..cfg.tuning.repeats).map(move |r| (c, r)))
            .collect();
        let rows: Vec<TraceRow> = jobs
            .par_iter()
            .map(|&(c, r)| {
                let seed = cfg.seed.wrapping_add(r as u64);
                let result = evaluate_split(
                    raw_train,
                    &candidates[c],
                    &base,
                    cfg.data.rul_cap,
                    cfg.tuning.train_fraction,
                    seed,
                );
                if let Err(e) = &result {
                    log::warn!("{} candidate {c} repeat {r} failed: {e}", block.name());
                }
                TraceRow {
                    block,
                    candidate: c,
                    params: candidates[c],
                    num_params: sizes[c],
                    repeat: r,
                    seed,
                    val_rmse: result.as_ref().ok().copied(),
                    error: result.err().map(|e| e.to_string()),
                }
            })
            .collect();
        let (winner_index, mean_rmse) = pick_winner(&rows, &candidates)
            .ok_or_else(|| Error::Numeric(format!("every candidate of block {} failed", block.name())))?;
        current = candidates[winner_index];
        log::info!("block {}: winner {current:?} (mean RMSE {mean_rmse:.4})", block.name());
        blocks.push(BlockResult {
            block,
            winner: current,
            winner_index,
            mean_rmse,
        });
        trace.extend(rows);
    }
    Ok(TuneOutcome {
        best: current,
        blocks,
        trace,
    })
}

pub fn write_trace_csv(trace: &[TraceRow], out: &mut impl Write) -> std::io::Result<()> {
    writeln!(
        out,
        "block,candidate,window,lstm_layers,fc_layers,lstm_units,fc_units,batch_size,epochs,num_params,repeat,seed,val_rmse,status"
    )?;
    for r in trace {
        let p = &r.params;
        let status = match &r.error {
            None => "ok".to_string(),
            Some(e) => format!("\"failed: {}\"", e.replace('"', "\"\"")),
        };
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            r.block.name(),
            r.candidate,
            p.window,
            p.lstm_layers,
            p.fc_layers,
            p.lstm_units,
            p.fc_units,
            p.batch_size,
            p.epochs,
            r.num_params,
            r.repeat,
            r.seed,
            r.val_rmse.map(|v| v.to_string()).unwrap_or_default(),
            status
        )?;
    }
    Ok(())
}
