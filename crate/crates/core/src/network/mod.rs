//! Recurrent feature extractor and mixture-parameter head.
//!
//! A model is `LSTM layers → dense layers → head`. The head has `3K`
//! neurons for [`ModelKind::Dlbp1`] (locations, scales, raw weights) and
//! `2K` for [`ModelKind::Dlbp2`] (locations, raw weights), where the scales
//! come from a fleet-wide vector stored alongside the weights.

mod activation;
mod forward;
pub mod io;

use std::fmt;

use ndarray::{s, Array1, Array2, ArrayView2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use activation::{elu, sigmoid, softplus, softplus_plus_one, Activation, GateActivation};
pub use forward::{
    fc_forward, head_forward_dlbp1, head_forward_dlbp2, lstm_cell, stack_windows, DenseCache, ForwardCache, LstmCache,
};
pub(crate) use forward::mixture_from_head;

use crate::distribution::{Family, MixtureSpec};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    /// Per-sample locations, scales and weights.
    Dlbp1,
    /// Per-sample locations and weights with fleet-wide scales.
    Dlbp2,
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ModelKind::Dlbp1 => f.write_str("dlbp1"),
            ModelKind::Dlbp2 => f.write_str("dlbp2"),
        }
    }
}

/// What a head neuron emits.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum HeadRole {
    Location(usize),
    Scale(usize),
    Weight(usize),
}

/// Default head activations for one mixture component: (location, scale, weight).
pub fn default_component_activations(family: Family) -> (Activation, Activation, Activation) {
    match family {
        Family::LogNormal => (Activation::Elu, Activation::Softplus, Activation::Sigmoid),
        Family::Weibull => (Activation::Softplus, Activation::Softplus, Activation::Sigmoid),
        Family::LogLogistic => (Activation::Softplus, Activation::SoftplusPlusOne, Activation::Sigmoid),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Architecture {
    pub kind: ModelKind,
    pub mixture: MixtureSpec,
    /// Number of sensor channels `P`.
    pub input_size: usize,
    /// Window width the model was trained on.
    pub window: usize,
    pub lstm_units: Vec<usize>,
    pub fc_units: Vec<usize>,
    pub fc_activation: Activation,
    pub output_gate: GateActivation,
    /// One tag per head neuron, in head order.
    pub head_activations: Vec<Activation>,
}

impl Architecture {
    pub fn new(
        kind: ModelKind,
        mixture: MixtureSpec,
        input_size: usize,
        window: usize,
        lstm_units: Vec<usize>,
        fc_units: Vec<usize>,
    ) -> Result<Self> {
        let head_activations = Self::default_head_activations(kind, &mixture);
        let arch = Self {
            kind,
            mixture,
            input_size,
            window,
            lstm_units,
            fc_units,
            fc_activation: Activation::Elu,
            output_gate: GateActivation::Sigmoid,
            head_activations,
        };
        arch.validate()?;
        Ok(arch)
    }

    pub fn default_head_activations(kind: ModelKind, mixture: &MixtureSpec) -> Vec<Activation> {
        let per: Vec<_> = mixture
            .families()
            .iter()
            .map(|&f| default_component_activations(f))
            .collect();
        let mut out: Vec<Activation> = per.iter().map(|a| a.0).collect();
        if kind == ModelKind::Dlbp1 {
            out.extend(per.iter().map(|a| a.1));
        }
        out.extend(per.iter().map(|a| a.2));
        out
    }

    pub fn k(&self) -> usize {
        self.mixture.k()
    }

    pub fn head_size(&self) -> usize {
        match self.kind {
            ModelKind::Dlbp1 => 3 * self.k(),
            ModelKind::Dlbp2 => 2 * self.k(),
        }
    }

    pub fn head_role(&self, q: usize) -> HeadRole {
        let k = self.k();
        match (self.kind, q / k) {
            (_, 0) => HeadRole::Location(q % k),
            (ModelKind::Dlbp1, 1) => HeadRole::Scale(q % k),
            _ => HeadRole::Weight(q % k),
        }
    }

    /// Width of the vector entering the head.
    pub fn feature_size(&self) -> usize {
        self.fc_units
            .last()
            .or(self.lstm_units.last())
            .copied()
            .unwrap_or(self.input_size)
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_size == 0 || self.window == 0 {
            return Err(Error::Config("input size and window must be positive".into()));
        }
        if self.mixture.k() == 0 {
            return Err(Error::Config("mixture needs at least one component".into()));
        }
        if self.lstm_units.is_empty() {
            return Err(Error::Config("at least one LSTM layer is required".into()));
        }
        if self.lstm_units.iter().chain(&self.fc_units).any(|&u| u == 0) {
            return Err(Error::Config("layer sizes must be positive".into()));
        }
        if self.head_activations.len() != self.head_size() {
            return Err(Error::Config(format!(
                "{} head activations for {} head neurons",
                self.head_activations.len(),
                self.head_size()
            )));
        }
        for (q, &act) in self.head_activations.iter().enumerate() {
            let (needs_positive, what) = match self.head_role(q) {
                HeadRole::Location(k) => (!self.mixture.family(k).location_is_real(), "location"),
                HeadRole::Scale(_) => (true, "scale"),
                HeadRole::Weight(_) => (true, "weight"),
            };
            if needs_positive && act.lower_bound() < 0.0 {
                return Err(Error::Config(format!(
                    "head neuron {q} ({what}) needs a positive activation, got {act}"
                )));
            }
        }
        Ok(())
    }
}

/// Stacked gate parameters of one LSTM layer.
///
/// `w` is `4h × in` and `u` is `4h × h`, with row blocks in gate order
/// forget, input, cell candidate, output. `b` has length `4h`.
#[derive(Clone, Debug, PartialEq)]
pub struct LstmLayer {
    pub w: Array2<f64>,
    pub u: Array2<f64>,
    pub b: Array1<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Gate {
    Forget = 0,
    Input = 1,
    Cell = 2,
    Output = 3,
}

impl LstmLayer {
    pub fn zeros(input_size: usize, hidden: usize) -> Self {
        Self {
            w: Array2::zeros((4 * hidden, input_size)),
            u: Array2::zeros((4 * hidden, hidden)),
            b: Array1::zeros(4 * hidden),
        }
    }

    pub fn hidden_size(&self) -> usize {
        self.u.ncols()
    }

    pub fn input_size(&self) -> usize {
        self.w.ncols()
    }

    pub fn gate_w(&self, gate: Gate) -> ArrayView2<'_, f64> {
        let h = self.hidden_size();
        let g = gate as usize;
        self.w.slice(s![g * h..(g + 1) * h, ..])
    }

    pub fn gate_u(&self, gate: Gate) -> ArrayView2<'_, f64> {
        let h = self.hidden_size();
        let g = gate as usize;
        self.u.slice(s![g * h..(g + 1) * h, ..])
    }
}

/// Fully connected layer, `w` is `out × in`.
#[derive(Clone, Debug, PartialEq)]
pub struct Dense {
    pub w: Array2<f64>,
    pub b: Array1<f64>,
}

impl Dense {
    pub fn zeros(input_size: usize, output_size: usize) -> Self {
        Self {
            w: Array2::zeros((output_size, input_size)),
            b: Array1::zeros(output_size),
        }
    }
}

/// All trainable tensors. Gradients use the same type.
#[derive(Clone, Debug, PartialEq)]
pub struct Weights {
    pub lstm: Vec<LstmLayer>,
    pub fc: Vec<Dense>,
    pub head: Dense,
}

impl Weights {
    pub fn zeros(arch: &Architecture) -> Self {
        let mut input = arch.input_size;
        let mut lstm = Vec::with_capacity(arch.lstm_units.len());
        for &h in &arch.lstm_units {
            lstm.push(LstmLayer::zeros(input, h));
            input = h;
        }
        let mut fc = Vec::with_capacity(arch.fc_units.len());
        for &o in &arch.fc_units {
            fc.push(Dense::zeros(input, o));
            input = o;
        }
        Self {
            lstm,
            fc,
            head: Dense::zeros(input, arch.head_size()),
        }
    }

    /// Xavier-uniform weights and zero biases, drawn in declaration order from one seeded stream.
    pub fn xavier(arch: &Architecture, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut weights = Self::zeros(arch);
        for layer in &mut weights.lstm {
            let (h, input) = (layer.hidden_size(), layer.input_size());
            for g in 0..4 {
                fill_xavier(&mut rng, &mut layer.w.slice_mut(s![g * h..(g + 1) * h, ..]), input, h);
            }
            for g in 0..4 {
                fill_xavier(&mut rng, &mut layer.u.slice_mut(s![g * h..(g + 1) * h, ..]), h, h);
            }
        }
        for layer in weights.fc.iter_mut().chain(std::iter::once(&mut weights.head)) {
            let (out, input) = layer.w.dim();
            fill_xavier(&mut rng, &mut layer.w.view_mut(), input, out);
        }
        weights
    }

    /// Flat views of every tensor in serialization order.
    pub fn tensors(&self) -> Vec<&[f64]> {
        let mut out = Vec::new();
        for l in &self.lstm {
            out.push(l.w.as_slice().expect("standard layout"));
            out.push(l.u.as_slice().expect("standard layout"));
            out.push(l.b.as_slice().expect("standard layout"));
        }
        for d in self.fc.iter().chain(std::iter::once(&self.head)) {
            out.push(d.w.as_slice().expect("standard layout"));
            out.push(d.b.as_slice().expect("standard layout"));
        }
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = Vec::new();
        for l in &mut self.lstm {
            out.push(l.w.as_slice_mut().expect("standard layout"));
            out.push(l.u.as_slice_mut().expect("standard layout"));
            out.push(l.b.as_slice_mut().expect("standard layout"));
        }
        for d in self.fc.iter_mut().chain(std::iter::once(&mut self.head)) {
            out.push(d.w.as_slice_mut().expect("standard layout"));
            out.push(d.b.as_slice_mut().expect("standard layout"));
        }
        out
    }

    pub fn tensor_names(&self) -> Vec<String> {
        let mut out = Vec::new();
        for i in 0..self.lstm.len() {
            out.extend(["w", "u", "b"].map(|n| format!("lstm{i}.{n}")));
        }
        for i in 0..self.fc.len() {
            out.extend(["w", "b"].map(|n| format!("fc{i}.{n}")));
        }
        out.extend(["head.w".to_string(), "head.b".to_string()]);
        out
    }

    pub fn num_params(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.iter().all(|v| v.is_finite()))
    }
}

fn fill_xavier(rng: &mut ChaCha8Rng, m: &mut ndarray::ArrayViewMut2<'_, f64>, fan_in: usize, fan_out: usize) {
    let bound = xavier_bound(fan_in, fan_out);
    for v in m.iter_mut() {
        *v = rng.random_range(-bound..bound);
    }
}

pub fn xavier_bound(fan_in: usize, fan_out: usize) -> f64 {
    (6.0 / (fan_in + fan_out) as f64).sqrt()
}

/// A `fan_out × fan_in` matrix with entries uniform on `±√(6/(fan_in+fan_out))`.
pub fn xavier_init(fan_in: usize, fan_out: usize, seed: u64) -> Array2<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut m = Array2::zeros((fan_out, fan_in));
    fill_xavier(&mut rng, &mut m.view_mut(), fan_in, fan_out);
    m
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams {
    pub arch: Architecture,
    pub weights: Weights,
    /// Fleet-wide scales, present only for [`ModelKind::Dlbp2`].
    pub shared_sigma: Option<Vec<f64>>,
}

impl ModelParams {
    /// Xavier-initialized model. DLBP2 models start with unit shared scales;
    /// the trainer overwrites them with its own initialization.
    pub fn init(arch: Architecture, seed: u64) -> Result<Self> {
        arch.validate()?;
        let weights = Weights::xavier(&arch, seed);
        let shared_sigma = match arch.kind {
            ModelKind::Dlbp1 => None,
            ModelKind::Dlbp2 => Some(vec![1.0; arch.k()]),
        };
        Ok(Self {
            arch,
            weights,
            shared_sigma,
        })
    }

    pub fn validate(&self) -> Result<()> {
        self.arch.validate()?;
        let expected = Weights::zeros(&self.arch);
        let same_shapes = expected.lstm.len() == self.weights.lstm.len()
            && expected.fc.len() == self.weights.fc.len()
            && expected
                .lstm
                .iter()
                .zip(&self.weights.lstm)
                .all(|(a, b)| a.w.dim() == b.w.dim() && a.u.dim() == b.u.dim() && a.b.dim() == b.b.dim())
            && expected
                .fc
                .iter()
                .chain(std::iter::once(&expected.head))
                .zip(self.weights.fc.iter().chain(std::iter::once(&self.weights.head)))
                .all(|(a, b)| a.w.dim() == b.w.dim() && a.b.dim() == b.b.dim());
        if !same_shapes {
            return Err(Error::Shape("weights do not match architecture".into()));
        }
        match (self.arch.kind, &self.shared_sigma) {
            (ModelKind::Dlbp1, None) => Ok(()),
            (ModelKind::Dlbp1, Some(_)) => Err(Error::Config("DLBP1 model carries shared scales".into())),
            (ModelKind::Dlbp2, None) => Err(Error::Config("DLBP2 model is missing shared scales".into())),
            (ModelKind::Dlbp2, Some(sig)) => {
                if sig.len() != self.arch.k() {
                    return Err(Error::Shape(format!("{} shared scales for K = {}", sig.len(), self.arch.k())));
                }
                if sig.iter().any(|s| !(*s > 0.0) || !s.is_finite()) {
                    return Err(Error::Domain(format!("shared scales must be positive, got {sig:?}")));
                }
                Ok(())
            }
        }
    }
}
