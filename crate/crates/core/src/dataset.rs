//! C-MAPSS ingestion and windowed sample generation.
//!
//! Pipeline: [`load_cmapss`] → [`drop_constant_sensors`] →
//! [`fit_normalization`] / [`apply_normalization`] → [`sliding_window`] →
//! [`cap_targets`]. [`Preprocessing`] bundles the fitted pieces so the same
//! transformation can be replayed on test or in-field traces.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use ndarray::{s, Array2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::codec::{self, Reader, Writer};
use crate::error::{Error, Result};

pub const OP_SETTING_COUNT: usize = 3;
pub const SENSOR_COUNT: usize = 21;
pub const CMAPSS_COLUMNS: usize = 2 + OP_SETTING_COUNT + SENSOR_COUNT;
pub const DEFAULT_RUL_CAP: f64 = 125.0;
/// Fleet-wide value range below which a sensor counts as constant.
pub const CONSTANT_SENSOR_TOLERANCE: f64 = 1e-12;

const DATASET_MAGIC: &[u8; 8] = b"DLBPWIN\0";
const DATASET_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

/// One asset's multi-sensor history.
#[derive(Clone, Debug, PartialEq)]
pub struct EngineTrace {
    pub asset_id: u32,
    /// 1-based contiguous cycle numbers.
    pub cycles: Vec<u32>,
    /// `n × 3` operating settings.
    pub op_settings: Array2<f64>,
    /// `n × S` sensor readings; `S` is 21 before sensor filtering.
    pub signals: Array2<f64>,
    /// Failure time in cycles, when known. Run-to-failure traces have `n`;
    /// truncated test traces have `n + RUL`.
    pub failure_time: Option<f64>,
    pub normalized: bool,
}

impl EngineTrace {
    pub fn new(asset_id: u32, signals: Array2<f64>, failure_time: Option<f64>) -> Self {
        let n = signals.nrows();
        Self {
            asset_id,
            cycles: (1..=n as u32).collect(),
            op_settings: Array2::zeros((n, OP_SETTING_COUNT)),
            signals,
            failure_time,
            normalized: false,
        }
    }

    pub fn len(&self) -> usize {
        self.signals.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.signals.nrows() == 0
    }

    /// RUL at the last observed cycle.
    pub fn final_rul(&self) -> Option<f64> {
        self.failure_time.map(|y| y - self.len() as f64)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct WindowedSample {
    pub asset_id: u32,
    /// 1-based position of the window within its trace.
    pub window_index: u32,
    /// `T_w × P`.
    pub window: Array2<f64>,
    pub target: Option<f64>,
}

pub fn load_rul_file(path: &Path) -> Result<Vec<f64>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let t = line.trim();
        if t.is_empty() {
            continue;
        }
        let v: f64 = t
            .parse()
            .map_err(|_| Error::parse(path, i + 1, format!("expected an integer RUL, got {t:?}")))?;
        if v < 0.0 || v.fract() != 0.0 {
            return Err(Error::parse(path, i + 1, format!("RUL must be a non-negative integer, got {t}")));
        }
        out.push(v);
    }
    Ok(out)
}

/// Parses a C-MAPSS run file. Test traces need `rul_path`; their failure time is `n + RUL`.
pub fn load_cmapss(path: &Path, split: Split, rul_path: Option<&Path>) -> Result<Vec<EngineTrace>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let rul = match (split, rul_path) {
        (Split::Test, Some(p)) => Some((p.to_path_buf(), load_rul_file(p)?)),
        (Split::Test, None) => {
            return Err(Error::Config(format!(
                "test file {} needs a RUL file for failure times",
                path.display()
            )))
        }
        (Split::Train, _) => None,
    };
    parse_cmapss(&text, path, split, rul.as_ref().map(|(p, v)| (p.as_path(), v.as_slice())))
}

/// Parses C-MAPSS text; traces without a RUL source get no failure time unless `split` is `Train`.
pub fn parse_cmapss(
    text: &str,
    path: &Path,
    split: Split,
    rul: Option<(&Path, &[f64])>,
) -> Result<Vec<EngineTrace>> {
    struct Rows {
        first_line: usize,
        cycles: Vec<u32>,
        values: Vec<f64>,
    }
    let mut units: BTreeMap<u32, Rows> = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        let lineno = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != CMAPSS_COLUMNS {
            return Err(Error::parse(
                path,
                lineno,
                format!("expected {CMAPSS_COLUMNS} columns, found {}", fields.len()),
            ));
        }
        let int = |s: &str, what: &str| -> Result<u32> {
            s.parse::<f64>()
                .ok()
                .filter(|v| *v >= 1.0 && v.fract() == 0.0 && *v <= u32::MAX as f64)
                .map(|v| v as u32)
                .ok_or_else(|| Error::parse(path, lineno, format!("invalid {what} {s:?}")))
        };
        let unit = int(fields[0], "unit id")?;
        let cycle = int(fields[1], "cycle")?;
        let rows = units.entry(unit).or_insert_with(|| Rows {
            first_line: lineno,
            cycles: Vec::new(),
            values: Vec::new(),
        });
        let expected = rows.cycles.len() as u32 + 1;
        if cycle != expected {
            return Err(Error::parse(
                path,
                lineno,
                format!("unit {unit}: cycle {cycle} breaks the contiguous sequence (expected {expected})"),
            ));
        }
        rows.cycles.push(cycle);
        for f in &fields[2..] {
            let v: f64 = f
                .parse()
                .map_err(|_| Error::parse(path, lineno, format!("invalid number {f:?}")))?;
            if !v.is_finite() {
                return Err(Error::parse(path, lineno, format!("non-finite value {f:?}")));
            }
            rows.values.push(v);
        }
    }
    if units.is_empty() {
        return Err(Error::parse(path, 1, "no data rows"));
    }
    if let Some((rul_path, values)) = rul {
        if values.len() < units.len() {
            return Err(Error::parse(
                rul_path,
                values.len() + 1,
                format!("missing RUL entry: {} units but {} RUL values", units.len(), values.len()),
            ));
        }
        if values.len() > units.len() {
            return Err(Error::parse(
                rul_path,
                units.len() + 1,
                format!("{} RUL values for {} units", values.len(), units.len()),
            ));
        }
    }
    let width = CMAPSS_COLUMNS - 2;
    let mut traces = Vec::with_capacity(units.len());
    for (idx, (unit, rows)) in units.into_iter().enumerate() {
        let n = rows.cycles.len();
        let all = Array2::from_shape_vec((n, width), rows.values).map_err(|e| {
            Error::parse(path, rows.first_line, format!("unit {unit}: {e}"))
        })?;
        let failure_time = match (split, rul) {
            (Split::Train, _) => Some(n as f64),
            (Split::Test, Some((_, values))) => Some(n as f64 + values[idx]),
            (Split::Test, None) => None,
        };
        traces.push(EngineTrace {
            asset_id: unit,
            cycles: rows.cycles,
            op_settings: all.slice(s![.., ..OP_SETTING_COUNT]).to_owned(),
            signals: all.slice(s![.., OP_SETTING_COUNT..]).to_owned(),
            failure_time,
            normalized: false,
        });
    }
    Ok(traces)
}

/// Removes sensors whose fleet-wide range is below [`CONSTANT_SENSOR_TOLERANCE`].
///
/// Returns the filtered traces and the kept 1-based sensor numbers.
pub fn drop_constant_sensors(traces: &[EngineTrace]) -> Result<(Vec<EngineTrace>, Vec<usize>)> {
    let first = traces
        .first()
        .ok_or_else(|| Error::Domain("sensor filtering needs at least one trace".into()))?;
    let s_count = first.signals.ncols();
    let mut lo = vec![f64::INFINITY; s_count];
    let mut hi = vec![f64::NEG_INFINITY; s_count];
    for t in traces {
        if t.signals.ncols() != s_count {
            return Err(Error::Shape(format!("asset {} has {} sensors, expected {s_count}", t.asset_id, t.signals.ncols())));
        }
        for row in t.signals.rows() {
            for (j, &v) in row.iter().enumerate() {
                lo[j] = lo[j].min(v);
                hi[j] = hi[j].max(v);
            }
        }
    }
    let kept: Vec<usize> = (0..s_count)
        .filter(|&j| hi[j] - lo[j] >= CONSTANT_SENSOR_TOLERANCE)
        .map(|j| j + 1)
        .collect();
    if kept.is_empty() {
        return Err(Error::Domain("every sensor is constant across the fleet".into()));
    }
    Ok((select_sensors(traces, &kept)?, kept))
}

/// Keeps the given 1-based sensor columns.
pub fn select_sensors(traces: &[EngineTrace], kept: &[usize]) -> Result<Vec<EngineTrace>> {
    traces
        .iter()
        .map(|t| {
            if let Some(&bad) = kept.iter().find(|&&s| s == 0 || s > t.signals.ncols()) {
                return Err(Error::Shape(format!("sensor {bad} not present in asset {}", t.asset_id)));
            }
            let cols: Vec<usize> = kept.iter().map(|s| s - 1).collect();
            Ok(EngineTrace {
                signals: t.signals.select(Axis(1), &cols),
                ..t.clone()
            })
        })
        .collect()
}

/// Per-sensor training-fleet extrema.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormalizationStats {
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

impl NormalizationStats {
    pub fn channels(&self) -> usize {
        self.min.len()
    }
}

pub fn fit_normalization(traces: &[EngineTrace]) -> Result<NormalizationStats> {
    let first = traces
        .first()
        .ok_or_else(|| Error::Domain("normalization needs at least one trace".into()))?;
    let p = first.signals.ncols();
    let mut stats = NormalizationStats {
        min: vec![f64::INFINITY; p],
        max: vec![f64::NEG_INFINITY; p],
    };
    for t in traces {
        if t.normalized {
            return Err(Error::Domain(format!("asset {} is already normalized", t.asset_id)));
        }
        if t.signals.ncols() != p {
            return Err(Error::Shape(format!("asset {} has {} channels, expected {p}", t.asset_id, t.signals.ncols())));
        }
        for row in t.signals.rows() {
            for (j, &v) in row.iter().enumerate() {
                stats.min[j] = stats.min[j].min(v);
                stats.max[j] = stats.max[j].max(v);
            }
        }
    }
    for j in 0..p {
        if !(stats.max[j] > stats.min[j]) {
            return Err(Error::Domain(format!("channel {j} is constant; drop it before normalizing")));
        }
    }
    Ok(stats)
}

/// Min-max scaling with training-fleet stats. Values outside the training range are not clipped.
pub fn apply_normalization(traces: &[EngineTrace], stats: &NormalizationStats) -> Result<Vec<EngineTrace>> {
    for j in 0..stats.channels() {
        if !(stats.max[j] > stats.min[j]) {
            return Err(Error::Domain(format!("channel {j} has max = min")));
        }
    }
    traces
        .iter()
        .map(|t| {
            if t.normalized {
                return Err(Error::Domain(format!("asset {} is already normalized", t.asset_id)));
            }
            if t.signals.ncols() != stats.channels() {
                return Err(Error::Shape(format!(
                    "asset {} has {} channels, stats cover {}",
                    t.asset_id,
                    t.signals.ncols(),
                    stats.channels()
                )));
            }
            let mut signals = t.signals.clone();
            for mut row in signals.rows_mut() {
                for (j, v) in row.iter_mut().enumerate() {
                    *v = (*v - stats.min[j]) / (stats.max[j] - stats.min[j]);
                }
            }
            Ok(EngineTrace {
                signals,
                normalized: true,
                ..t.clone()
            })
        })
        .collect()
}

pub fn cap_rul(target: f64, cap: f64) -> f64 {
    target.min(cap)
}

pub fn cap_targets(samples: &mut [WindowedSample], cap: f64) {
    for s in samples {
        if let Some(t) = s.target.as_mut() {
            *t = cap_rul(*t, cap);
        }
    }
}

fn padded_signals(trace: &EngineTrace, window: usize) -> Array2<f64> {
    let n = trace.len();
    let mut out = Array2::zeros((window, trace.signals.ncols()));
    out.slice_mut(s![window - n.., ..]).assign(&trace.signals);
    out
}

/// Training windows of width `window` with their RUL targets.
///
/// Window `j` covers rows `[(j−1)·stride + 1, (j−1)·stride + window]` and its
/// target is the RUL at its last row; only windows with a positive target are
/// kept. Traces shorter than `window` are left-padded with zero rows and yield
/// at most one window. Traces without a failure time yield nothing.
pub fn sliding_window(trace: &EngineTrace, window: usize, stride: usize) -> Vec<WindowedSample> {
    assert!(window >= 1 && stride >= 1, "window and stride must be positive");
    let Some(y) = trace.failure_time else {
        return Vec::new();
    };
    let n = trace.len();
    if n == 0 {
        return Vec::new();
    }
    if n < window {
        let target = y - n as f64;
        if target > 0.0 {
            return vec![WindowedSample {
                asset_id: trace.asset_id,
                window_index: 1,
                window: padded_signals(trace, window),
                target: Some(target),
            }];
        }
        return Vec::new();
    }
    let mut out = Vec::new();
    let mut start = 0;
    let mut j = 1;
    while start + window <= n {
        let end = start + window;
        let target = y - end as f64;
        if target <= 0.0 {
            break;
        }
        out.push(WindowedSample {
            asset_id: trace.asset_id,
            window_index: j,
            window: trace.signals.slice(s![start..end, ..]).to_owned(),
            target: Some(target),
        });
        start += stride;
        j += 1;
    }
    out
}

/// The latest `window` rows of a trace (left zero-padded when short), targeted
/// at the final RUL when the failure time is known.
pub fn inference_window(trace: &EngineTrace, window: usize) -> WindowedSample {
    assert!(window >= 1, "window must be positive");
    let n = trace.len();
    let (values, index) = if n >= window {
        (trace.signals.slice(s![n - window.., ..]).to_owned(), (n - window + 1) as u32)
    } else {
        (padded_signals(trace, window), 1)
    };
    WindowedSample {
        asset_id: trace.asset_id,
        window_index: index,
        window: values,
        target: trace.final_rul(),
    }
}

/// Splits assets (not windows) into training and validation sets.
pub fn split_assets(asset_ids: &[u32], fraction: f64, seed: u64) -> Result<(Vec<u32>, Vec<u32>)> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::Config(format!("split fraction must be in (0, 1), got {fraction}")));
    }
    let mut ids: Vec<u32> = asset_ids.to_vec();
    ids.sort_unstable();
    ids.dedup();
    if ids.len() < 2 {
        return Err(Error::Domain(format!("need at least 2 assets to split, got {}", ids.len())));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    ids.shuffle(&mut rng);
    let n_train = ((fraction * ids.len() as f64).round() as usize).clamp(1, ids.len() - 1);
    let mut train = ids[..n_train].to_vec();
    let mut val = ids[n_train..].to_vec();
    train.sort_unstable();
    val.sort_unstable();
    Ok((train, val))
}

/// Asset-level split of windowed samples; all windows of one asset land on one side.
pub fn split_train_val(
    samples: &[WindowedSample],
    fraction: f64,
    seed: u64,
) -> Result<(Vec<WindowedSample>, Vec<WindowedSample>)> {
    let ids: Vec<u32> = samples.iter().map(|s| s.asset_id).collect();
    let (train_ids, _) = split_assets(&ids, fraction, seed)?;
    let (train, val): (Vec<_>, Vec<_>) = samples
        .iter()
        .cloned()
        .partition(|s| train_ids.binary_search(&s.asset_id).is_ok());
    Ok((train, val))
}

/// Fitted preprocessing replayed on any trace from the same source.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Preprocessing {
    /// 1-based sensor numbers kept after constant-sensor removal.
    pub kept_sensors: Vec<usize>,
    pub stats: NormalizationStats,
    pub window: usize,
    pub rul_cap: f64,
}

impl Preprocessing {
    /// Fits sensor selection and normalization on a training fleet, returning normalized traces.
    pub fn fit(train: &[EngineTrace], window: usize, rul_cap: f64) -> Result<(Self, Vec<EngineTrace>)> {
        if window == 0 {
            return Err(Error::Config("window must be positive".into()));
        }
        let (filtered, kept_sensors) = drop_constant_sensors(train)?;
        let stats = fit_normalization(&filtered)?;
        let normalized = apply_normalization(&filtered, &stats)?;
        Ok((
            Self {
                kept_sensors,
                stats,
                window,
                rul_cap,
            },
            normalized,
        ))
    }

    /// Selects the kept sensors and normalizes raw traces.
    pub fn apply(&self, raw: &[EngineTrace]) -> Result<Vec<EngineTrace>> {
        apply_normalization(&select_sensors(raw, &self.kept_sensors)?, &self.stats)
    }

    pub fn channels(&self) -> usize {
        self.kept_sensors.len()
    }

    /// Capped training windows from normalized traces.
    pub fn training_samples(&self, traces: &[EngineTrace]) -> Vec<WindowedSample> {
        let mut out: Vec<WindowedSample> = traces.iter().flat_map(|t| sliding_window(t, self.window, 1)).collect();
        cap_targets(&mut out, self.rul_cap);
        out
    }
}

/// Header of a windowed-dataset file.
#[derive(Clone, Debug, PartialEq)]
pub struct DatasetHeader {
    pub window: usize,
    pub channels: usize,
    pub stride: usize,
    pub rul_cap: f64,
    pub seed: u64,
    pub kept_sensors: Vec<usize>,
    pub stats: NormalizationStats,
}

#[derive(Clone, Debug, PartialEq)]
pub struct WindowedDataset {
    pub header: DatasetHeader,
    pub samples: Vec<WindowedSample>,
}

impl WindowedDataset {
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let h = &self.header;
        if h.stats.channels() != h.channels || h.kept_sensors.len() != h.channels {
            return Err(Error::Shape("dataset header channel counts disagree".into()));
        }
        let mut w = Writer::new();
        w.bytes(DATASET_MAGIC);
        w.u32(DATASET_VERSION);
        w.u32(h.window as u32);
        w.u32(h.channels as u32);
        w.u32(h.stride as u32);
        w.f64(h.rul_cap);
        w.u64(h.seed);
        w.u32(h.kept_sensors.len() as u32);
        for &s in &h.kept_sensors {
            w.u32(s as u32);
        }
        w.f64s(&h.stats.min);
        w.f64s(&h.stats.max);
        w.u64(self.samples.len() as u64);
        for s in &self.samples {
            if s.window.dim() != (h.window, h.channels) {
                return Err(Error::Shape(format!(
                    "sample of asset {} is {:?}, header says {:?}",
                    s.asset_id,
                    s.window.dim(),
                    (h.window, h.channels)
                )));
            }
            w.u32(s.asset_id);
            w.u32(s.window_index);
            w.u8(u8::from(s.target.is_some()));
            w.f64(s.target.unwrap_or(0.0));
            for row in s.window.rows() {
                for &v in row {
                    w.f64(v);
                }
            }
        }
        Ok(w.finish())
    }

    pub fn from_bytes(bytes: &[u8], path: &Path) -> Result<Self> {
        let mut r = Reader::new(bytes, path);
        if r.take(8)? != DATASET_MAGIC {
            return Err(r.error("not a windowed-dataset file"));
        }
        let version = r.u32()?;
        if version != DATASET_VERSION {
            return Err(r.error(format!("unsupported dataset version {version}")));
        }
        let window = r.u32()? as usize;
        let channels = r.u32()? as usize;
        let stride = r.u32()? as usize;
        let rul_cap = r.f64()?;
        let seed = r.u64()?;
        let n_kept = r.u32()? as usize;
        let kept_sensors = (0..n_kept).map(|_| r.u32().map(|v| v as usize)).collect::<Result<Vec<_>>>()?;
        let min = r.f64s(channels)?;
        let max = r.f64s(channels)?;
        let n = r.u64()? as usize;
        let mut samples = Vec::with_capacity(n.min(1 << 20));
        for _ in 0..n {
            let asset_id = r.u32()?;
            let window_index = r.u32()?;
            let has_target = r.u8()?;
            let target = r.f64()?;
            let values = r.f64s(window * channels)?;
            samples.push(WindowedSample {
                asset_id,
                window_index,
                window: Array2::from_shape_vec((window, channels), values).expect("sized by header"),
                target: (has_target != 0).then_some(target),
            });
        }
        r.finish()?;
        Ok(Self {
            header: DatasetHeader {
                window,
                channels,
                stride,
                rul_cap,
                seed,
                kept_sensors,
                stats: NormalizationStats { min, max },
            },
            samples,
        })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        codec::write_file(path, &self.to_bytes()?)
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::from_bytes(&codec::read_file(path)?, path)
    }

    pub fn is_dataset_file(bytes: &[u8]) -> bool {
        bytes.starts_with(DATASET_MAGIC)
    }
}

/// The three C-MAPSS files of one sub-dataset inside `dir`.
pub fn cmapss_paths(dir: &Path, dataset: &str) -> (PathBuf, PathBuf, PathBuf) {
    (
        dir.join(format!("train_{dataset}.txt")),
        dir.join(format!("test_{dataset}.txt")),
        dir.join(format!("RUL_{dataset}.txt")),
    )
}
