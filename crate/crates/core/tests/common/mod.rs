#![allow(dead_code)]

use dlbp::dataset::{EngineTrace, WindowedSample};
use ndarray::{s, Array2};

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

fn gk15(f: &impl Fn(f64) -> f64, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut kronrod = WGK[7] * fc;
    let mut gauss = WG[3] * fc;
    for i in 0..7 {
        let x = h * XGK[i];
        let pair = f(c - x) + f(c + x);
        kronrod += WGK[i] * pair;
        if i % 2 == 1 {
            gauss += WG[i / 2] * pair;
        }
    }
    (kronrod * h, ((kronrod - gauss) * h).abs())
}

/// Adaptive Gauss–Kronrod (7, 15) integration of `f` over `[a, b]` to an absolute tolerance.
pub fn integrate(f: impl Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    let mut stack = vec![(a, b, tol, 0u32)];
    let mut total = 0.0;
    while let Some((lo, hi, t, depth)) = stack.pop() {
        let (v, err) = gk15(&f, lo, hi);
        if err <= t || depth >= 50 {
            total += v;
        } else {
            let mid = 0.5 * (lo + hi);
            stack.push((lo, mid, 0.5 * t, depth + 1));
            stack.push((mid, hi, 0.5 * t, depth + 1));
        }
    }
    total
}

/// Enumerates every window of a trace directly from the definition.
pub fn brute_force_windows(trace: &EngineTrace, window: usize) -> Vec<(usize, f64, Array2<f64>)> {
    let y = trace.failure_time.expect("run-to-failure trace");
    let n = trace.len();
    let mut out = Vec::new();
    if n < window {
        let target = y - n as f64;
        if target > 0.0 {
            let mut w = Array2::zeros((window, trace.signals.ncols()));
            w.slice_mut(s![window - n.., ..]).assign(&trace.signals);
            out.push((1, target, w));
        }
        return out;
    }
    for j in 1..=n {
        let first = j - 1;
        let last = first + window;
        if last > n {
            break;
        }
        // RUL at the window's last row.
        let target = y - window as f64 - (j - 1) as f64;
        if target > 0.0 {
            out.push((j, target, trace.signals.slice(s![first..last, ..]).to_owned()));
        }
    }
    out
}

pub fn windows_as_tuples(samples: &[WindowedSample]) -> Vec<(usize, f64, Array2<f64>)> {
    samples
        .iter()
        .map(|s| (s.window_index as usize, s.target.unwrap(), s.window.clone()))
        .collect()
}
