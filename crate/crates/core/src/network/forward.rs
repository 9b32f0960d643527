use ndarray::linalg::general_mat_mul;
use ndarray::{s, Array1, Array2, Array3, ArrayView1, ArrayView2, ArrayView3, Axis};

use super::{Activation, Architecture, Dense, GateActivation, HeadRole, LstmLayer, ModelKind, ModelParams};
use crate::distribution::{Component, Mixture, SIGMA_FLOOR};
use crate::error::{Error, Result};

/// Rows of inference work done per forward chunk.
const FORWARD_CHUNK: usize = 512;

/// Per-layer recurrent state kept for backpropagation through time.
#[derive(Clone, Debug)]
pub struct LstmCache {
    /// `T + 1` hidden states, `hs[0]` is the zero initial state.
    pub hs: Vec<Array2<f64>>,
    /// `T + 1` cell states, `cs[0]` is zero.
    pub cs: Vec<Array2<f64>>,
    /// Post-activation gates per step, `B × 4h` in forget/input/cell/output blocks.
    pub gates: Vec<Array2<f64>>,
    pub tanh_c: Vec<Array2<f64>>,
}

#[derive(Clone, Debug)]
pub struct DenseCache {
    pub input: Array2<f64>,
    pub pre: Array2<f64>,
}

#[derive(Clone, Debug)]
pub struct ForwardCache {
    pub lstm: Vec<LstmCache>,
    pub fc: Vec<DenseCache>,
    pub head: DenseCache,
    /// Activated head outputs before floors and weight normalization.
    pub head_out: Array2<f64>,
}

/// Stacks `T × P` windows into a `(T, B, P)` tensor.
pub fn stack_windows(windows: &[ArrayView2<'_, f64>]) -> Result<Array3<f64>> {
    let first = windows
        .first()
        .ok_or_else(|| Error::Shape("cannot stack an empty set of windows".into()))?;
    let (t, p) = first.dim();
    let mut out = Array3::zeros((t, windows.len(), p));
    for (b, w) in windows.iter().enumerate() {
        if w.dim() != (t, p) {
            return Err(Error::Shape(format!("window {b} is {:?}, expected {:?}", w.dim(), (t, p))));
        }
        out.slice_mut(s![.., b, ..]).assign(w);
    }
    Ok(out)
}

/// One LSTM step for a single sample.
pub fn lstm_cell(
    x: ArrayView1<'_, f64>,
    h_prev: ArrayView1<'_, f64>,
    c_prev: ArrayView1<'_, f64>,
    layer: &LstmLayer,
    output_gate: GateActivation,
) -> Result<(Array1<f64>, Array1<f64>)> {
    let h = layer.hidden_size();
    if x.len() != layer.input_size() || h_prev.len() != h || c_prev.len() != h {
        return Err(Error::Shape(format!(
            "lstm cell expects input {} and state {h}, got {}, {}, {}",
            layer.input_size(),
            x.len(),
            h_prev.len(),
            c_prev.len()
        )));
    }
    let z = layer.w.dot(&x) + layer.u.dot(&h_prev) + &layer.b;
    let out_act = output_gate.as_activation();
    let mut h_new = Array1::zeros(h);
    let mut c_new = Array1::zeros(h);
    for j in 0..h {
        let f = super::sigmoid(z[j]);
        let i = super::sigmoid(z[h + j]);
        let g = z[2 * h + j].tanh();
        let o = out_act.apply(z[3 * h + j]);
        c_new[j] = f * c_prev[j] + i * g;
        h_new[j] = o * c_new[j].tanh();
    }
    Ok((h_new, c_new))
}

fn lstm_layer_forward<'a>(
    layer: &LstmLayer,
    steps: usize,
    batch: usize,
    input_at: impl Fn(usize) -> ArrayView2<'a, f64>,
    output_gate: GateActivation,
) -> LstmCache {
    let h = layer.hidden_size();
    let out_act = output_gate.as_activation();
    let mut cache = LstmCache {
        hs: Vec::with_capacity(steps + 1),
        cs: Vec::with_capacity(steps + 1),
        gates: Vec::with_capacity(steps),
        tanh_c: Vec::with_capacity(steps),
    };
    cache.hs.push(Array2::zeros((batch, h)));
    cache.cs.push(Array2::zeros((batch, h)));
    for t in 0..steps {
        let mut z = Array2::zeros((batch, 4 * h));
        general_mat_mul(1.0, &input_at(t), &layer.w.t(), 0.0, &mut z);
        general_mat_mul(1.0, &cache.hs[t], &layer.u.t(), 1.0, &mut z);
        let mut c = Array2::zeros((batch, h));
        let mut tc = Array2::zeros((batch, h));
        let mut hn = Array2::zeros((batch, h));
        let bias = layer.b.as_slice().expect("standard layout");
        for r in 0..batch {
            let zr = z.row_mut(r).into_slice().expect("standard layout");
            for (v, b) in zr.iter_mut().zip(bias) {
                *v += b;
            }
            let cp = cache.cs[t].row(r);
            for j in 0..h {
                let f = super::sigmoid(zr[j]);
                let i = super::sigmoid(zr[h + j]);
                let g = zr[2 * h + j].tanh();
                let o = out_act.apply(zr[3 * h + j]);
                zr[j] = f;
                zr[h + j] = i;
                zr[2 * h + j] = g;
                zr[3 * h + j] = o;
                let cv = f * cp[j] + i * g;
                let tcv = cv.tanh();
                c[[r, j]] = cv;
                tc[[r, j]] = tcv;
                hn[[r, j]] = o * tcv;
            }
        }
        cache.gates.push(z);
        cache.cs.push(c);
        cache.tanh_c.push(tc);
        cache.hs.push(hn);
    }
    cache
}

fn dense_forward(layer: &Dense, input: Array2<f64>, act: Activation) -> (DenseCache, Array2<f64>) {
    let mut pre = Array2::zeros((input.nrows(), layer.w.nrows()));
    general_mat_mul(1.0, &input, &layer.w.t(), 0.0, &mut pre);
    pre += &layer.b;
    let out = pre.mapv(|v| act.apply(v));
    (DenseCache { input, pre }, out)
}

/// Dense stack applied to a single feature vector.
pub fn fc_forward(v: ArrayView1<'_, f64>, layers: &[Dense], act: Activation) -> Result<Array1<f64>> {
    let mut cur = v.to_owned();
    for (i, l) in layers.iter().enumerate() {
        if l.w.ncols() != cur.len() {
            return Err(Error::Shape(format!("fc layer {i} expects {} inputs, got {}", l.w.ncols(), cur.len())));
        }
        cur = (l.w.dot(&cur) + &l.b).mapv(|x| act.apply(x));
    }
    Ok(cur)
}

/// Turns one row of activated head outputs into mixture parameters.
pub(crate) fn mixture_from_head(arch: &Architecture, shared_sigma: Option<&[f64]>, out: &[f64]) -> Result<Mixture> {
    let k = arch.k();
    let mut locations = vec![0.0; k];
    let mut scales = vec![0.0; k];
    let mut raw = vec![0.0; k];
    for (q, &v) in out.iter().enumerate() {
        match arch.head_role(q) {
            HeadRole::Location(c) => {
                locations[c] = if arch.mixture.family(c).location_is_real() {
                    v
                } else {
                    v.max(SIGMA_FLOOR)
                }
            }
            HeadRole::Scale(c) => scales[c] = v.max(SIGMA_FLOOR),
            HeadRole::Weight(c) => raw[c] = v,
        }
    }
    if arch.kind == ModelKind::Dlbp2 {
        let sig = shared_sigma.ok_or_else(|| Error::Config("DLBP2 forward without shared scales".into()))?;
        for (s, &v) in scales.iter_mut().zip(sig) {
            *s = v.max(SIGMA_FLOOR);
        }
    }
    let components = arch
        .mixture
        .families()
        .iter()
        .zip(locations.into_iter().zip(scales))
        .map(|(&f, (m, s))| Component::new(f, m, s))
        .collect();
    Mixture::from_raw_weights(components, &raw)
}

fn apply_head_activations(arch: &Architecture, pre: &Array2<f64>) -> Array2<f64> {
    let mut out = pre.clone();
    for mut row in out.rows_mut() {
        for (v, act) in row.iter_mut().zip(&arch.head_activations) {
            *v = act.apply(*v);
        }
    }
    out
}

/// Head applied to a feature vector, DLBP1 layout (`3K` neurons).
pub fn head_forward_dlbp1(v: ArrayView1<'_, f64>, head: &Dense, arch: &Architecture) -> Result<Mixture> {
    if arch.kind != ModelKind::Dlbp1 || head.w.nrows() != 3 * arch.k() {
        return Err(Error::Shape(format!("DLBP1 head needs {} neurons", 3 * arch.k())));
    }
    head_forward(v, head, arch, None)
}

/// Head applied to a feature vector, DLBP2 layout (`2K` neurons plus shared scales).
pub fn head_forward_dlbp2(
    v: ArrayView1<'_, f64>,
    head: &Dense,
    arch: &Architecture,
    shared_sigma: &[f64],
) -> Result<Mixture> {
    if arch.kind != ModelKind::Dlbp2 || head.w.nrows() != 2 * arch.k() || shared_sigma.len() != arch.k() {
        return Err(Error::Shape(format!("DLBP2 head needs {} neurons and {} scales", 2 * arch.k(), arch.k())));
    }
    head_forward(v, head, arch, Some(shared_sigma))
}

fn head_forward(v: ArrayView1<'_, f64>, head: &Dense, arch: &Architecture, sigma: Option<&[f64]>) -> Result<Mixture> {
    if head.w.ncols() != v.len() {
        return Err(Error::Shape(format!("head expects {} inputs, got {}", head.w.ncols(), v.len())));
    }
    let pre = head.w.dot(&v) + &head.b;
    let out: Vec<f64> = pre.iter().zip(&arch.head_activations).map(|(&x, a)| a.apply(x)).collect();
    mixture_from_head(arch, sigma, &out)
}

impl ModelParams {
    fn check_input(&self, x: &ArrayView3<'_, f64>) -> Result<()> {
        let (t, b, p) = x.dim();
        if t == 0 || b == 0 {
            return Err(Error::Shape("empty input tensor".into()));
        }
        if p != self.arch.input_size {
            return Err(Error::Shape(format!("model expects {} channels, got {p}", self.arch.input_size)));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain("input window contains non-finite values".into()));
        }
        Ok(())
    }

    /// Full forward pass over a `(T, B, P)` tensor, keeping every intermediate.
    pub fn forward_cached(&self, x: ArrayView3<'_, f64>) -> Result<ForwardCache> {
        self.check_input(&x)?;
        let (steps, batch, _) = x.dim();
        let mut lstm: Vec<LstmCache> = Vec::with_capacity(self.weights.lstm.len());
        for (l, layer) in self.weights.lstm.iter().enumerate() {
            let cache = if l == 0 {
                lstm_layer_forward(layer, steps, batch, |t| x.index_axis(Axis(0), t), self.arch.output_gate)
            } else {
                let below = &lstm[l - 1];
                lstm_layer_forward(layer, steps, batch, |t| below.hs[t + 1].view(), self.arch.output_gate)
            };
            lstm.push(cache);
        }
        let mut cur = lstm.last().expect("at least one LSTM layer").hs[steps].clone();
        let mut fc = Vec::with_capacity(self.weights.fc.len());
        for layer in &self.weights.fc {
            let (cache, out) = dense_forward(layer, cur, self.arch.fc_activation);
            fc.push(cache);
            cur = out;
        }
        let (head, _) = dense_forward(&self.weights.head, cur, Activation::Identity);
        let head_out = apply_head_activations(&self.arch, &head.pre);
        Ok(ForwardCache {
            lstm,
            fc,
            head,
            head_out,
        })
    }

    pub(crate) fn mixtures_from_cache(&self, cache: &ForwardCache) -> Result<Vec<Mixture>> {
        cache
            .head_out
            .rows()
            .into_iter()
            .map(|row| mixture_from_head(&self.arch, self.shared_sigma.as_deref(), &row.to_vec()))
            .collect()
    }

    /// Batched forward over a `(T, B, P)` tensor.
    pub fn forward_tensor(&self, x: ArrayView3<'_, f64>) -> Result<Vec<Mixture>> {
        let batch = x.dim().1;
        let mut out = Vec::with_capacity(batch);
        let mut start = 0;
        while start < batch {
            let end = (start + FORWARD_CHUNK).min(batch);
            let cache = self.forward_cached(x.slice(s![.., start..end, ..]))?;
            out.extend(self.mixtures_from_cache(&cache)?);
            start = end;
        }
        Ok(out)
    }

    /// Mixture parameters for one `T × P` window.
    pub fn forward(&self, window: ArrayView2<'_, f64>) -> Result<Mixture> {
        let x = window.insert_axis(Axis(1));
        Ok(self.forward_tensor(x)?.remove(0))
    }

    pub fn forward_batch(&self, windows: &[ArrayView2<'_, f64>]) -> Result<Vec<Mixture>> {
        let x = stack_windows(windows)?;
        self.forward_tensor(x.view())
    }

    /// Final hidden state of the top LSTM layer for one window.
    pub fn lstm_forward(&self, window: ArrayView2<'_, f64>) -> Result<Array1<f64>> {
        let x = window.insert_axis(Axis(1));
        self.check_input(&x)?;
        let cache = self.forward_cached(x)?;
        let top = cache.lstm.last().expect("at least one LSTM layer");
        Ok(top.hs[window.nrows()].row(0).to_owned())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distribution::{mixture_pdf, validate, Family, MixtureSpec};
    use approx::assert_relative_eq;
    use ndarray::{array, Array2};

    fn arch(kind: ModelKind, k: usize, family: Family) -> Architecture {
        Architecture::new(kind, MixtureSpec::uniform(family, k).unwrap(), 3, 4, vec![5], vec![4]).unwrap()
    }

    #[test]
    fn zero_params_give_zero_state() {
        let a = arch(ModelKind::Dlbp1, 2, Family::LogNormal);
        let mut m = ModelParams::init(a, 1).unwrap();
        m.weights = crate::network::Weights::zeros(&m.arch);
        let w = Array2::from_shape_fn((4, 3), |(i, j)| (i + j) as f64 * 0.3);
        let h = m.lstm_forward(w.view()).unwrap();
        assert!(h.iter().all(|&v| v == 0.0));
        // zero head: μ = elu(0) = 0, σ = softplus(0) = ln 2, λ uniform
        let mix = m.forward(w.view()).unwrap();
        for c in &mix.components {
            assert_eq!(c.location, 0.0);
            assert_relative_eq!(c.scale, std::f64::consts::LN_2, max_relative = 1e-15);
        }
        assert_eq!(mix.weights, vec![0.5, 0.5]);
    }

    #[test]
    fn hand_computed_cell() {
        // P = 2, h = 2 with gate blocks chosen so each gate is easy to evaluate
        let mut layer = LstmLayer::zeros(2, 2);
        layer.w = array![
            [0.5, 0.0],
            [0.0, 0.5],
            [1.0, 0.0],
            [0.0, 1.0],
            [0.2, 0.1],
            [-0.3, 0.4],
            [0.0, 0.0],
            [1.0, 1.0]
        ];
        layer.u = Array2::from_elem((8, 2), 0.1);
        layer.b = array![0.0, 0.1, 0.0, 0.0, 0.0, 0.0, 0.3, 0.0];
        let x = array![1.0, -1.0];
        let hp = array![0.2, -0.4];
        let cp = array![0.5, 0.25];
        let (h, c) = lstm_cell(x.view(), hp.view(), cp.view(), &layer, GateActivation::Sigmoid).unwrap();
        let rec = 0.1 * (0.2 - 0.4);
        let sig = |v: f64| 1.0 / (1.0 + (-v).exp());
        let f = [sig(0.5 + rec), sig(-0.5 + rec + 0.1)];
        let i = [sig(1.0 + rec), sig(-1.0 + rec)];
        let g = [(0.2 - 0.1 + rec).tanh(), (-0.3 - 0.4 + rec).tanh()];
        let o = [sig(rec + 0.3), sig(0.0 + rec)];
        for j in 0..2 {
            let cj = f[j] * cp[j] + i[j] * g[j];
            assert_relative_eq!(c[j], cj, max_relative = 1e-14);
            assert_relative_eq!(h[j], o[j] * cj.tanh(), max_relative = 1e-14);
        }
    }

    #[test]
    fn saturated_forget_gate_carries_state() {
        let mut layer = LstmLayer::zeros(1, 1);
        layer.b = array![50.0, -50.0, 0.0, 0.0];
        let (_, c) = lstm_cell(array![0.7].view(), array![0.0].view(), array![0.42].view(), &layer, GateActivation::Sigmoid)
            .unwrap();
        assert_relative_eq!(c[0], 0.42, max_relative = 1e-12);
    }

    #[test]
    fn single_step_matches_cell() {
        let a = Architecture::new(
            ModelKind::Dlbp1,
            MixtureSpec::uniform(Family::Weibull, 1).unwrap(),
            3,
            1,
            vec![4],
            vec![],
        )
        .unwrap();
        let m = ModelParams::init(a, 9).unwrap();
        let x = array![[0.3, -0.2, 0.9]];
        let h = m.lstm_forward(x.view()).unwrap();
        let z = Array1::zeros(4);
        let (hc, _) = lstm_cell(x.row(0), z.view(), z.view(), &m.weights.lstm[0], GateActivation::Sigmoid).unwrap();
        for (a, b) in h.iter().zip(&hc) {
            assert_relative_eq!(*a, *b, max_relative = 1e-14);
        }
    }

    #[test]
    fn fc_identity_and_hand_case() {
        let mut d = Dense::zeros(3, 3);
        d.w = Array2::eye(3);
        let v = array![0.0, 1.5, 2.0];
        assert_eq!(fc_forward(v.view(), &[d], Activation::Elu).unwrap(), v);

        let mut d = Dense::zeros(3, 3);
        d.w = array![[0.1, -0.2, 0.3], [1.0, 0.0, -1.0], [-0.5, -0.5, 0.25]];
        d.b = array![0.05, -0.1, 0.0];
        let v = array![1.0, 2.0, -1.0];
        let out = fc_forward(v.view(), &[d], Activation::Elu).unwrap();
        let pre = [0.1 - 0.4 - 0.3 + 0.05, 1.0 + 1.0 - 0.1, -0.5 - 1.0 - 0.25];
        for j in 0..3 {
            let e = if pre[j] >= 0.0 { pre[j] } else { f64::exp(pre[j]) - 1.0 };
            assert_relative_eq!(out[j], e, max_relative = 1e-14);
        }
    }

    #[test]
    fn dlbp2_head_uses_shared_scales() {
        let a = arch(ModelKind::Dlbp2, 2, Family::LogNormal);
        let head = Dense::zeros(4, 4);
        let v = array![0.1, 0.2, 0.3, 0.4];
        let m = head_forward_dlbp2(v.view(), &head, &a, &[1.0, 1.0]).unwrap();
        assert_eq!(m.weights, vec![0.5, 0.5]);
        assert!(m.components.iter().all(|c| c.scale == 1.0));
        let m2 = head_forward_dlbp2(v.view(), &head, &a, &[2.0, 0.5]).unwrap();
        assert_eq!(m2.components[0].scale, 2.0);
        assert_eq!(m2.components[1].scale, 0.5);
        assert_eq!(m.weights, m2.weights);
        assert_eq!(m.components[0].location, m2.components[0].location);

        let a1 = arch(ModelKind::Dlbp2, 1, Family::LogNormal);
        let mut head = Dense::zeros(4, 2);
        head.b = array![0.0, -3.0];
        let m = head_forward_dlbp2(v.view(), &head, &a1, &[1.0]).unwrap();
        assert_eq!(m.weights, vec![1.0]);
    }

    #[test]
    fn batched_forward_matches_single() {
        let a = arch(ModelKind::Dlbp1, 2, Family::LogLogistic);
        let m = ModelParams::init(a, 3).unwrap();
        let ws: Vec<Array2<f64>> = (0..7)
            .map(|b| Array2::from_shape_fn((4, 3), |(i, j)| ((b * 7 + i * 3 + j) as f64 * 0.37).sin()))
            .collect();
        let views: Vec<_> = ws.iter().map(|w| w.view()).collect();
        let batched = m.forward_batch(&views).unwrap();
        for (w, mb) in ws.iter().zip(&batched) {
            let single = m.forward(w.view()).unwrap();
            for (a, b) in single.components.iter().zip(&mb.components) {
                assert_relative_eq!(a.location, b.location, max_relative = 1e-12);
                assert_relative_eq!(a.scale, b.scale, max_relative = 1e-12);
            }
            assert!(validate(mb).is_ok());
        }
    }

    #[test]
    fn head_permutation_symmetry() {
        let a = Architecture::new(
            ModelKind::Dlbp1,
            MixtureSpec::new(vec![Family::LogNormal, Family::Weibull]).unwrap(),
            3,
            4,
            vec![5],
            vec![4],
        )
        .unwrap();
        let m = ModelParams::init(a.clone(), 11).unwrap();
        let mut swapped = m.clone();
        swapped.arch.mixture = MixtureSpec::new(vec![Family::Weibull, Family::LogNormal]).unwrap();
        swapped.arch.head_activations = vec![
            a.head_activations[1],
            a.head_activations[0],
            a.head_activations[3],
            a.head_activations[2],
            a.head_activations[5],
            a.head_activations[4],
        ];
        let perm = [1, 0, 3, 2, 5, 4];
        for (q, &p) in perm.iter().enumerate() {
            swapped.weights.head.w.row_mut(q).assign(&m.weights.head.w.row(p));
            swapped.weights.head.b[q] = m.weights.head.b[p];
        }
        let w = Array2::from_shape_fn((4, 3), |(i, j)| (i as f64 - j as f64) * 0.2);
        let p1 = m.forward(w.view()).unwrap();
        let p2 = swapped.forward(w.view()).unwrap();
        for y in [0.5, 1.0, 3.0] {
            assert_relative_eq!(mixture_pdf(y, &p1).unwrap(), mixture_pdf(y, &p2).unwrap(), max_relative = 1e-12);
        }
    }

    #[test]
    fn left_padding_is_neutral_with_zero_biases() {
        let a = arch(ModelKind::Dlbp1, 1, Family::LogNormal);
        let m = ModelParams::init(a, 5).unwrap();
        // Xavier init leaves biases at zero, so a zero prefix keeps (h, c) at zero.
        let short = array![[0.3, 0.1, 0.9], [0.4, 0.2, 0.8]];
        let mut padded = Array2::zeros((4, 3));
        padded.slice_mut(s![2.., ..]).assign(&short);
        let h_short = m.lstm_forward(short.view()).unwrap();
        let h_pad = m.lstm_forward(padded.view()).unwrap();
        assert_eq!(h_short, h_pad);
        let mut right = Array2::zeros((4, 3));
        right.slice_mut(s![..2, ..]).assign(&short);
        assert_ne!(m.lstm_forward(right.view()).unwrap(), h_short);
    }

    #[test]
    fn rejects_wrong_channel_count() {
        let a = arch(ModelKind::Dlbp1, 1, Family::LogNormal);
        let m = ModelParams::init(a, 5).unwrap();
        assert!(matches!(m.forward(Array2::zeros((4, 2)).view()), Err(Error::Shape(_))));
    }
}
