//! Seeded synthetic fleets for examples and tests.
//!
//! Sensor readings drift exponentially as an asset approaches failure, so the
//! remaining life is recoverable from a window of signals. The layout mirrors
//! the C-MAPSS text files and can be written with [`write_cmapss`].

use std::fmt::Write as _;
use std::path::Path;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::dataset::{EngineTrace, WindowedSample, OP_SETTING_COUNT, SENSOR_COUNT};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct FleetSpec {
    pub train_engines: usize,
    pub test_engines: usize,
    pub min_life: u32,
    pub max_life: u32,
    /// 1-based sensor numbers held at a fixed value.
    pub constant_sensors: Vec<usize>,
    /// Standard deviation of the additive reading noise.
    pub noise: f64,
    pub seed: u64,
}

impl Default for FleetSpec {
    fn default() -> Self {
        Self {
            train_engines: 40,
            test_engines: 20,
            min_life: 120,
            max_life: 260,
            constant_sensors: vec![1, 5, 16, 18, 19],
            noise: 0.02,
            seed: 7,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticFleet {
    /// Run-to-failure traces.
    pub train: Vec<EngineTrace>,
    /// Traces cut before failure; `failure_time` holds the true end of life.
    pub test: Vec<EngineTrace>,
}

struct SensorModel {
    base: f64,
    amplitude: f64,
    horizon: f64,
}

fn engine(id: u32, life: u32, length: u32, sensors: &[Option<SensorModel>], spec: &FleetSpec, rng: &mut ChaCha8Rng) -> EngineTrace {
    let noise = Normal::new(0.0, spec.noise.max(0.0)).expect("finite noise");
    let n = length as usize;
    let offset: f64 = rng.random_range(-0.05..0.05);
    let mut signals = Array2::zeros((n, SENSOR_COUNT));
    let mut ops = Array2::zeros((n, OP_SETTING_COUNT));
    for t in 0..n {
        let rul = (life as usize - (t + 1)) as f64;
        for (j, model) in sensors.iter().enumerate() {
            signals[[t, j]] = match model {
                None => 100.0 + j as f64,
                Some(m) => m.base + offset + m.amplitude * (-rul / m.horizon).exp() + noise.sample(rng),
            };
        }
        for o in 0..OP_SETTING_COUNT {
            ops[[t, o]] = 0.001 * noise.sample(rng);
        }
    }
    let mut trace = EngineTrace::new(id, signals, Some(life as f64));
    trace.op_settings = ops;
    trace
}

pub fn generate_fleet(spec: &FleetSpec) -> Result<SyntheticFleet> {
    if spec.min_life < 2 || spec.max_life < spec.min_life {
        return Err(Error::Config(format!("invalid life range {}..={}", spec.min_life, spec.max_life)));
    }
    if spec.constant_sensors.iter().any(|&s| s == 0 || s > SENSOR_COUNT) {
        return Err(Error::Config("constant sensor numbers must be in 1..=21".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let sensors: Vec<Option<SensorModel>> = (1..=SENSOR_COUNT)
        .map(|s| {
            if spec.constant_sensors.contains(&s) {
                None
            } else {
                let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
                Some(SensorModel {
                    base: rng.random_range(0.0..1.0),
                    amplitude: sign * rng.random_range(0.5..1.5),
                    horizon: rng.random_range(25.0..80.0),
                })
            }
        })
        .collect();
    let mut train = Vec::with_capacity(spec.train_engines);
    for i in 0..spec.train_engines {
        let life = rng.random_range(spec.min_life..=spec.max_life);
        train.push(engine(i as u32 + 1, life, life, &sensors, spec, &mut rng));
    }
    let mut test = Vec::with_capacity(spec.test_engines);
    for i in 0..spec.test_engines {
        let life = rng.random_range(spec.min_life..=spec.max_life);
        let length = rng.random_range((life / 4).max(1)..life);
        test.push(engine(i as u32 + 1, life, length, &sensors, spec, &mut rng));
    }
    Ok(SyntheticFleet { train, test })
}

fn format_traces(traces: &[EngineTrace]) -> String {
    let mut out = String::new();
    for t in traces {
        for r in 0..t.len() {
            write!(out, "{} {}", t.asset_id, t.cycles[r]).expect("string write");
            for v in t.op_settings.row(r) {
                write!(out, " {v:.6}").expect("string write");
            }
            for v in t.signals.row(r) {
                write!(out, " {v:.6}").expect("string write");
            }
            out.push('\n');
        }
    }
    out
}

/// Writes `train_<id>.txt`, `test_<id>.txt` and `RUL_<id>.txt` in C-MAPSS layout.
pub fn write_cmapss(fleet: &SyntheticFleet, dir: &Path, id: &str) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let (train, test, rul) = crate::dataset::cmapss_paths(dir, id);
    std::fs::write(&train, format_traces(&fleet.train)).map_err(|e| Error::io(&train, e))?;
    std::fs::write(&test, format_traces(&fleet.test)).map_err(|e| Error::io(&test, e))?;
    let ruls: String = fleet
        .test
        .iter()
        .map(|t| format!("{}\n", t.final_rul().expect("synthetic test traces know their life")))
        .collect();
    std::fs::write(&rul, ruls).map_err(|e| Error::io(&rul, e))?;
    Ok(())
}

/// One component of a log-normal regression mixture: `ln y = intercept + slope·x + scale·ε`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LogNormalRegime {
    pub intercept: f64,
    pub slope: f64,
    pub scale: f64,
}

/// Windows whose targets come from a known mixture of log-normal regimes.
///
/// Each sample belongs to one regime, drawn uniformly. Channel 0 holds a
/// monotone ramp ending at the covariate `x ∈ [0, 1]`, channel 1 encodes the
/// regime. Both are visible to the network.
pub fn lognormal_regime_samples(
    regimes: &[LogNormalRegime],
    n: usize,
    window: usize,
    seed: u64,
) -> Vec<WindowedSample> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let std_normal = Normal::new(0.0, 1.0).expect("unit normal");
    (0..n)
        .map(|i| {
            let regime = rng.random_range(0..regimes.len());
            let x: f64 = rng.random_range(0.0..1.0);
            let r = regimes[regime];
            let ln_y = r.intercept + r.slope * x + r.scale * std_normal.sample(&mut rng);
            let code = if regimes.len() > 1 {
                regime as f64 / (regimes.len() - 1) as f64
            } else {
                0.0
            };
            let w = Array2::from_shape_fn((window, 2), |(t, c)| {
                if c == 0 {
                    x * (t + 1) as f64 / window as f64
                } else {
                    code
                }
            });
            WindowedSample {
                asset_id: i as u32 + 1,
                window_index: 1,
                window: w,
                target: Some(ln_y.exp()),
            }
        })
        .collect()
}
