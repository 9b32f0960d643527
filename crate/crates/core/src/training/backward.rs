use ndarray::linalg::general_mat_mul;
use ndarray::{Array2, ArrayView2, ArrayView3, Axis};
use rayon::prelude::*;

use crate::dataset::WindowedSample;
use crate::distribution::{log_sum_exp, SIGMA_FLOOR};
use crate::error::{Error, Result};
use crate::network::{
    mixture_from_head, stack_windows, Architecture, DenseCache, ForwardCache, GateActivation, HeadRole,
    LstmLayer, ModelParams, Weights,
};

/// Per-parameter gradient accumulators, shaped like [`Weights`].
pub type GradientTape = Weights;

/// Samples per independently processed slice of a batch. Fixed so that the
/// summation order, and therefore the result, does not depend on the thread count.
const GRAD_CHUNK: usize = 64;

/// Mean NLL of a batch and its exact gradient with respect to every weight.
///
/// DLBP2 shared scales are treated as constants.
pub fn loss_and_grad(model: &ModelParams, batch: &[&WindowedSample]) -> Result<(f64, GradientTape)> {
    if batch.is_empty() {
        return Err(Error::Domain("gradient of an empty batch".into()));
    }
    let n = batch.len() as f64;
    let parts: Vec<Result<(f64, GradientTape)>> = batch
        .par_chunks(GRAD_CHUNK)
        .map(|chunk| chunk_loss_and_grad(model, chunk))
        .collect();
    let mut total = 0.0;
    let mut grad = Weights::zeros(&model.arch);
    for part in parts {
        let (loss_sum, g) = part?;
        total += loss_sum;
        add_assign(&mut grad, &g);
    }
    scale(&mut grad, 1.0 / n);
    Ok((total / n, grad))
}

/// Mean NLL only, in the same chunking as [`loss_and_grad`].
pub fn batch_loss(model: &ModelParams, batch: &[&WindowedSample]) -> Result<f64> {
    if batch.is_empty() {
        return Err(Error::Domain("loss of an empty batch".into()));
    }
    let parts: Vec<Result<f64>> = batch
        .par_chunks(GRAD_CHUNK)
        .map(|chunk| {
            let (x, targets) = inputs(chunk)?;
            let cache = model.forward_cached(x.view())?;
            let mut sum = 0.0;
            for (b, &y) in targets.iter().enumerate() {
                sum += sample_terms(model, &cache, b, y, chunk[b])?.0;
            }
            Ok(sum)
        })
        .collect();
    let mut total = 0.0;
    for p in parts {
        total += p?;
    }
    Ok(total / batch.len() as f64)
}

pub(crate) fn add_assign(acc: &mut Weights, g: &Weights) {
    for (a, b) in acc.tensors_mut().into_iter().zip(g.tensors()) {
        for (x, y) in a.iter_mut().zip(b) {
            *x += y;
        }
    }
}

fn scale(acc: &mut Weights, factor: f64) {
    for t in acc.tensors_mut() {
        for x in t.iter_mut() {
            *x *= factor;
        }
    }
}

fn inputs(chunk: &[&WindowedSample]) -> Result<(ndarray::Array3<f64>, Vec<f64>)> {
    let mut targets = Vec::with_capacity(chunk.len());
    for s in chunk {
        match s.target {
            Some(y) if y > 0.0 && y.is_finite() => targets.push(y),
            other => {
                return Err(Error::Domain(format!(
                    "asset {} window {}: training target must be positive, got {other:?}",
                    s.asset_id, s.window_index
                )))
            }
        }
    }
    let views: Vec<ArrayView2<'_, f64>> = chunk.iter().map(|s| s.window.view()).collect();
    Ok((stack_windows(&views)?, targets))
}

/// Loss of one sample and `∂loss/∂(activated head output)` for it.
fn sample_terms(
    model: &ModelParams,
    cache: &ForwardCache,
    b: usize,
    y: f64,
    sample: &WindowedSample,
) -> Result<(f64, Vec<f64>)> {
    let arch = &model.arch;
    let out = cache.head_out.row(b);
    let out = out.as_slice().expect("standard layout");
    let mixture = mixture_from_head(arch, model.shared_sigma.as_deref(), out).map_err(|e| {
        Error::Numeric(format!("asset {} window {}: {e}", sample.asset_id, sample.window_index))
    })?;
    let terms: Vec<(f64, f64, f64)> = mixture.components.iter().map(|c| c.log_pdf_grad(y)).collect();
    let weighted: Vec<f64> = terms.iter().zip(&mixture.weights).map(|(t, w)| w.ln() + t.0).collect();
    let ln_g = log_sum_exp(weighted.iter().copied());
    let loss = -ln_g;
    if !loss.is_finite() {
        return Err(Error::Numeric(format!(
            "non-finite loss {loss} at asset {} window {} (target {y})",
            sample.asset_id, sample.window_index
        )));
    }
    let raw_sum: f64 = (0..out.len())
        .filter(|&q| matches!(arch.head_role(q), HeadRole::Weight(_)))
        .map(|q| out[q])
        .sum();
    let mut d = vec![0.0; out.len()];
    for (q, dq) in d.iter_mut().enumerate() {
        let v = out[q];
        *dq = match arch.head_role(q) {
            HeadRole::Location(c) => {
                let passes = arch.mixture.family(c).location_is_real() || v > SIGMA_FLOOR;
                if passes {
                    -(weighted[c] - ln_g).exp() * terms[c].1
                } else {
                    0.0
                }
            }
            HeadRole::Scale(c) => {
                if v > SIGMA_FLOOR {
                    -(weighted[c] - ln_g).exp() * terms[c].2
                } else {
                    0.0
                }
            }
            HeadRole::Weight(c) => (1.0 - (terms[c].0 - ln_g).exp()) / raw_sum,
        };
    }
    Ok((loss, d))
}

fn chunk_loss_and_grad(model: &ModelParams, chunk: &[&WindowedSample]) -> Result<(f64, GradientTape)> {
    let arch = &model.arch;
    let (x, targets) = inputs(chunk)?;
    let cache = model.forward_cached(x.view())?;
    let batch = chunk.len();
    let mut loss_sum = 0.0;
    let mut d_out = Array2::zeros((batch, arch.head_size()));
    for (b, &y) in targets.iter().enumerate() {
        let (loss, d) = sample_terms(model, &cache, b, y, chunk[b])?;
        loss_sum += loss;
        for (q, v) in d.into_iter().enumerate() {
            d_out[[b, q]] = v;
        }
    }
    let mut grad = Weights::zeros(arch);
    let mut d_pre = d_out;
    for (mut row, pre) in d_pre.rows_mut().into_iter().zip(cache.head.pre.rows()) {
        for ((v, &p), act) in row.iter_mut().zip(pre).zip(&arch.head_activations) {
            *v *= act.derivative(p);
        }
    }
    let mut d_feat = dense_backward(&model.weights.head, &cache.head, &d_pre, &mut grad.head);
    for l in (0..model.weights.fc.len()).rev() {
        let c = &cache.fc[l];
        d_feat.zip_mut_with(&c.pre, |d, &p| *d *= arch.fc_activation.derivative(p));
        d_feat = dense_backward(&model.weights.fc[l], c, &d_feat, &mut grad.fc[l]);
    }
    lstm_backward(model, arch, &cache, x.view(), d_feat, &mut grad);
    Ok((loss_sum, grad))
}

/// Accumulates weight gradients and returns `∂/∂input`.
fn dense_backward(
    layer: &crate::network::Dense,
    cache: &DenseCache,
    d_pre: &Array2<f64>,
    g: &mut crate::network::Dense,
) -> Array2<f64> {
    general_mat_mul(1.0, &d_pre.t(), &cache.input, 1.0, &mut g.w);
    g.b += &d_pre.sum_axis(Axis(0));
    d_pre.dot(&layer.w)
}

fn lstm_backward(
    model: &ModelParams,
    arch: &Architecture,
    cache: &ForwardCache,
    x: ArrayView3<'_, f64>,
    d_top: Array2<f64>,
    grad: &mut GradientTape,
) {
    let steps = x.dim().0;
    let layers = model.weights.lstm.len();
    // Gradient flowing into each step's hidden output from the layer above.
    let mut from_above: Vec<Array2<f64>> = Vec::new();
    for l in (0..layers).rev() {
        let layer = &model.weights.lstm[l];
        let lc = &cache.lstm[l];
        let h = layer.hidden_size();
        let batch = d_top.nrows();
        let need_dx = l > 0;
        let mut dx_steps = if need_dx {
            vec![Array2::zeros((batch, layer.input_size())); steps]
        } else {
            Vec::new()
        };
        let mut dh_next = Array2::<f64>::zeros((batch, h));
        let mut dc_next = Array2::<f64>::zeros((batch, h));
        let mut dz = Array2::<f64>::zeros((batch, 4 * h));
        for t in (0..steps).rev() {
            let mut dh = dh_next.clone();
            if l == layers - 1 {
                if t == steps - 1 {
                    dh += &d_top;
                }
            } else {
                dh += &from_above[t];
            }
            let gates = &lc.gates[t];
            let tc = &lc.tanh_c[t];
            let c_prev = &lc.cs[t];
            for r in 0..batch {
                for j in 0..h {
                    let f = gates[[r, j]];
                    let i = gates[[r, h + j]];
                    let g = gates[[r, 2 * h + j]];
                    let o = gates[[r, 3 * h + j]];
                    let tcv = tc[[r, j]];
                    let dhv = dh[[r, j]];
                    let d_o = dhv * tcv;
                    let dc = dc_next[[r, j]] + dhv * o * (1.0 - tcv * tcv);
                    dz[[r, j]] = dc * c_prev[[r, j]] * f * (1.0 - f);
                    dz[[r, h + j]] = dc * g * i * (1.0 - i);
                    dz[[r, 2 * h + j]] = dc * i * (1.0 - g * g);
                    dz[[r, 3 * h + j]] = d_o
                        * match arch.output_gate {
                            GateActivation::Sigmoid => o * (1.0 - o),
                            GateActivation::Tanh => 1.0 - o * o,
                        };
                    dc_next[[r, j]] = dc * f;
                }
            }
            let input = if l == 0 {
                x.index_axis(Axis(0), t)
            } else {
                cache.lstm[l - 1].hs[t + 1].view()
            };
            accumulate_lstm(&mut grad.lstm[l], &dz, input, lc.hs[t].view());
            if need_dx {
                general_mat_mul(1.0, &dz, &layer.w, 0.0, &mut dx_steps[t]);
            }
            general_mat_mul(1.0, &dz, &layer.u, 0.0, &mut dh_next);
        }
        from_above = dx_steps;
    }
}

fn accumulate_lstm(g: &mut LstmLayer, dz: &Array2<f64>, input: ArrayView2<'_, f64>, h_prev: ArrayView2<'_, f64>) {
    general_mat_mul(1.0, &dz.t(), &input, 1.0, &mut g.w);
    general_mat_mul(1.0, &dz.t(), &h_prev, 1.0, &mut g.u);
    g.b += &dz.sum_axis(Axis(0));
}
