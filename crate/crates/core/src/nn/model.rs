use std::ops::Range;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, ArrayViewMut1, ArrayViewMut2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{GraphBatch, ModelConfig};
use crate::error::{Error, Result};

pub const BN_EPS: f64 = 1e-5;
const BN_MOMENTUM: f64 = 0.1;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerSlots {
    pub w_dst: Range<usize>,
    pub b_dst: Range<usize>,
    pub w_src: Range<usize>,
    pub b_src: Range<usize>,
    pub att: Range<usize>,
    pub gamma: Range<usize>,
    pub beta: Range<usize>,
}

/// Offsets of every trainable tensor inside the flat parameter vector.
/// Weight matrices are stored row-major as `in x out`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamLayout {
    pub encoder_w: Range<usize>,
    pub encoder_b: Range<usize>,
    pub layers: Vec<LayerSlots>,
    pub head_w: Range<usize>,
    pub head_b: Range<usize>,
    pub len: usize,
}

impl ParamLayout {
    pub fn new(cfg: &ModelConfig) -> Self {
        let mut at = 0;
        let mut take = |n: usize| {
            let r = at..at + n;
            at += n;
            r
        };
        let h = cfg.hidden;
        let encoder_w = take(cfg.in_dim * h);
        let encoder_b = take(h);
        let layers = (0..cfg.layers)
            .map(|_| LayerSlots {
                w_dst: take(h * h),
                b_dst: take(h),
                w_src: take(h * h),
                b_src: take(h),
                att: take(h),
                gamma: take(h),
                beta: take(h),
            })
            .collect();
        let head_w = take(h * cfg.out_dim);
        let head_b = take(cfg.out_dim);
        ParamLayout { encoder_w, encoder_b, layers, head_w, head_b, len: at }
    }

    /// Tensors in storage order.
    pub fn named(&self) -> Vec<(String, Range<usize>)> {
        let mut out = vec![("encoder.w".to_string(), self.encoder_w.clone()), ("encoder.b".into(), self.encoder_b.clone())];
        for (l, s) in self.layers.iter().enumerate() {
            for (name, r) in [
                ("w_dst", &s.w_dst),
                ("b_dst", &s.b_dst),
                ("w_src", &s.w_src),
                ("b_src", &s.b_src),
                ("att", &s.att),
                ("bn.gamma", &s.gamma),
                ("bn.beta", &s.beta),
            ] {
                out.push((format!("gat{l}.{name}"), r.clone()));
            }
        }
        out.push(("head.w".into(), self.head_w.clone()));
        out.push(("head.b".into(), self.head_b.clone()));
        out
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    /// Running batch-norm statistics, no dropout.
    Eval,
    /// Batch statistics; dropout only when `dropout` is set.
    Train { dropout: bool },
}

#[derive(Clone, Debug, PartialEq)]
pub struct Model {
    pub config: ModelConfig,
    pub layout: ParamLayout,
    pub params: Vec<f64>,
    /// Per layer: running mean then running variance, `hidden` each.
    pub running: Vec<f64>,
}

struct LayerCache {
    h_in: Array2<f64>,
    xs: Array2<f64>,
    /// Pre-activation attention inputs, `edges x hidden`.
    s: Vec<f64>,
    alpha: Vec<f64>,
    xhat: Array2<f64>,
    inv_std: Array1<f64>,
    y: Array2<f64>,
    mask: Option<Array2<f64>>,
}

/// Intermediate values of one forward pass, needed for backward.
pub struct ForwardCache {
    mode: Mode,
    z0: Array2<f64>,
    mask0: Option<Array2<f64>>,
    layers: Vec<LayerCache>,
    h_last: Array2<f64>,
    /// Batch mean and variance per layer (train mode only).
    pub batch_stats: Vec<(Array1<f64>, Array1<f64>)>,
}

impl ForwardCache {
    /// Signs of every ReLU and LeakyReLU input, for detecting kinks.
    pub fn activation_pattern(&self) -> Vec<bool> {
        let mut out: Vec<bool> = self.z0.iter().map(|&v| v > 0.0).collect();
        for l in &self.layers {
            out.extend(l.s.iter().map(|&v| v > 0.0));
            out.extend(l.y.iter().map(|&v| v > 0.0));
        }
        out
    }

    pub fn attention(&self, layer: usize) -> &[f64] {
        &self.layers[layer].alpha
    }
}

fn view2<'a>(p: &'a [f64], r: &Range<usize>, rows: usize, cols: usize) -> ArrayView2<'a, f64> {
    ArrayView2::from_shape((rows, cols), &p[r.clone()]).unwrap()
}

fn view1<'a>(p: &'a [f64], r: &Range<usize>) -> ArrayView1<'a, f64> {
    ArrayView1::from(&p[r.clone()])
}

fn view2_mut<'a>(p: &'a mut [f64], r: &Range<usize>, rows: usize, cols: usize) -> ArrayViewMut2<'a, f64> {
    ArrayViewMut2::from_shape((rows, cols), &mut p[r.clone()]).unwrap()
}

fn view1_mut<'a>(p: &'a mut [f64], r: &Range<usize>) -> ArrayViewMut1<'a, f64> {
    ArrayViewMut1::from(&mut p[r.clone()])
}

fn leaky(v: f64, slope: f64) -> f64 {
    if v > 0.0 {
        v
    } else {
        slope * v
    }
}

/// GATv2 attention for all heads. Returns the aggregated output, the
/// per-edge pre-activation sums and the attention coefficients
/// (`edges x heads`).
pub fn attention_forward(
    xd: &Array2<f64>,
    xs: &Array2<f64>,
    att: ArrayView1<f64>,
    batch: &GraphBatch,
    heads: usize,
    slope: f64,
) -> (Array2<f64>, Vec<f64>, Vec<f64>) {
    let n = xd.nrows();
    let hidden = xd.ncols();
    let hd = hidden / heads;
    let e = batch.edge_count();
    let xd_s = xd.as_standard_layout();
    let xs_s = xs.as_standard_layout();
    let (xd_s, xs_s) = (xd_s.as_slice().unwrap(), xs_s.as_slice().unwrap());
    let att = att.to_vec();
    let mut s = vec![0.0; e * hidden];
    let mut alpha = vec![0.0; e * heads];
    let mut out = vec![0.0; n * hidden];
    let mut scores = Vec::new();
    for i in 0..n {
        let range = batch.in_range(i);
        for h in 0..heads {
            let cols = h * hd..(h + 1) * hd;
            scores.clear();
            let mut max = f64::NEG_INFINITY;
            for k in range.clone() {
                let j = batch.source(k);
                let mut score = 0.0;
                for c in cols.clone() {
                    let v = xd_s[i * hidden + c] + xs_s[j * hidden + c];
                    s[k * hidden + c] = v;
                    score += att[c] * leaky(v, slope);
                }
                max = max.max(score);
                scores.push(score);
            }
            let mut total = 0.0;
            for sc in scores.iter_mut() {
                *sc = (*sc - max).exp();
                total += *sc;
            }
            for (t, k) in range.clone().enumerate() {
                let a = scores[t] / total;
                alpha[k * heads + h] = a;
                let j = batch.source(k);
                for c in cols.clone() {
                    out[i * hidden + c] += a * xs_s[j * hidden + c];
                }
            }
        }
    }
    (Array2::from_shape_vec((n, hidden), out).unwrap(), s, alpha)
}

fn dropout_mask(rng: &mut ChaCha8Rng, shape: (usize, usize), p: f64) -> Array2<f64> {
    let keep = 1.0 / (1.0 - p);
    Array2::from_shape_simple_fn(shape, || if rng.random::<f64>() < p { 0.0 } else { keep })
}

fn glorot(rng: &mut ChaCha8Rng, out: &mut [f64], fan_in: usize, fan_out: usize) {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    for v in out {
        *v = rng.random_range(-limit..limit);
    }
}

/// Mean squared error over all entries, and its gradient.
pub fn mse_loss(pred: &Array2<f64>, target: &Array2<f64>) -> (f64, Array2<f64>) {
    let count = pred.len() as f64;
    let diff = pred - target;
    let loss = diff.iter().map(|d| d * d).sum::<f64>() / count;
    (loss, diff * (2.0 / count))
}

impl Model {
    pub fn new(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        let layout = ParamLayout::new(&config);
        let mut params = vec![0.0; layout.len];
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let (h, hd) = (config.hidden, config.head_dim);
        glorot(&mut rng, &mut params[layout.encoder_w.clone()], config.in_dim, h);
        for s in &layout.layers {
            glorot(&mut rng, &mut params[s.w_dst.clone()], h, h);
            glorot(&mut rng, &mut params[s.w_src.clone()], h, h);
            glorot(&mut rng, &mut params[s.att.clone()], hd, 1);
            params[s.gamma.clone()].fill(1.0);
        }
        glorot(&mut rng, &mut params[layout.head_w.clone()], h, config.out_dim);
        let mut running = vec![0.0; config.layers * 2 * h];
        for l in 0..config.layers {
            running[(2 * l + 1) * h..(2 * l + 2) * h].fill(1.0);
        }
        Ok(Model { config, layout, params, running })
    }

    pub fn param_count(&self) -> usize {
        self.layout.len
    }

    fn running_stats(&self, l: usize) -> (ArrayView1<'_, f64>, ArrayView1<'_, f64>) {
        let h = self.config.hidden;
        (
            ArrayView1::from(&self.running[2 * l * h..(2 * l + 1) * h]),
            ArrayView1::from(&self.running[(2 * l + 1) * h..(2 * l + 2) * h]),
        )
    }

    pub fn check_input(&self, batch: &GraphBatch) -> Result<()> {
        if batch.x.ncols() != self.config.in_dim {
            return Err(Error::Structural(format!(
                "feature width {} does not match model input {}",
                batch.x.ncols(),
                self.config.in_dim
            )));
        }
        Ok(())
    }

    /// Attention output of layer `l` (before normalization) for input `h`.
    pub fn gatv2_layer(&self, l: usize, h: &Array2<f64>, batch: &GraphBatch) -> Result<(Array2<f64>, Vec<f64>)> {
        let hid = self.config.hidden;
        if l >= self.config.layers || h.ncols() != hid || h.nrows() != batch.node_count() {
            return Err(Error::Structural(format!("layer {l} input shape {:?} does not match", h.dim())));
        }
        let p = &self.params;
        let s = &self.layout.layers[l];
        let xd = h.dot(&view2(p, &s.w_dst, hid, hid)) + view1(p, &s.b_dst);
        let xs = h.dot(&view2(p, &s.w_src, hid, hid)) + view1(p, &s.b_src);
        let (o, _, alpha) = attention_forward(&xd, &xs, view1(p, &s.att), batch, self.config.heads, self.config.leaky_slope);
        Ok((o, alpha))
    }

    /// Normalized predictions, one row per node.
    pub fn forward(&self, batch: &GraphBatch, mode: Mode, rng: Option<&mut ChaCha8Rng>) -> Result<(Array2<f64>, ForwardCache)> {
        self.check_input(batch)?;
        let cfg = &self.config;
        let (hid, p) = (cfg.hidden, &self.params);
        let lay = &self.layout;
        let n = batch.node_count();
        let dropout = matches!(mode, Mode::Train { dropout: true }) && cfg.dropout_p > 0.0;
        let mut rng = rng;
        if dropout && rng.is_none() {
            return Err(Error::Structural("dropout requires a random source".into()));
        }
        let take_mask = |rng: &mut Option<&mut ChaCha8Rng>| -> Option<Array2<f64>> {
            if dropout {
                Some(dropout_mask(rng.as_deref_mut().unwrap(), (n, hid), cfg.dropout_p))
            } else {
                None
            }
        };

        let z0 = batch.x.dot(&view2(p, &lay.encoder_w, cfg.in_dim, hid)) + view1(p, &lay.encoder_b);
        let mask0 = take_mask(&mut rng);
        let mut h = z0.mapv(|v| v.max(0.0));
        if let Some(m) = &mask0 {
            h *= m;
        }
        let mut layers = Vec::with_capacity(cfg.layers);
        let mut batch_stats = Vec::new();
        for (l, s) in lay.layers.iter().enumerate() {
            let xd = h.dot(&view2(p, &s.w_dst, hid, hid)) + view1(p, &s.b_dst);
            let xs = h.dot(&view2(p, &s.w_src, hid, hid)) + view1(p, &s.b_src);
            let (o, sv, alpha) = attention_forward(&xd, &xs, view1(p, &s.att), batch, cfg.heads, cfg.leaky_slope);
            let (mean, var) = match mode {
                Mode::Train { .. } => {
                    let mean = o.mean_axis(Axis(0)).unwrap();
                    let var = o.var_axis(Axis(0), 0.0);
                    batch_stats.push((mean.clone(), var.clone()));
                    (mean, var)
                }
                Mode::Eval => {
                    let (m, v) = self.running_stats(l);
                    (m.to_owned(), v.to_owned())
                }
            };
            let inv_std = var.mapv(|v| 1.0 / (v + BN_EPS).sqrt());
            let xhat = (&o - &mean) * &inv_std;
            let y = &xhat * &view1(p, &s.gamma) + view1(p, &s.beta);
            let mask = take_mask(&mut rng);
            let mut next = y.mapv(|v| v.max(0.0));
            if let Some(m) = &mask {
                next *= m;
            }
            layers.push(LayerCache { h_in: h, xs, s: sv, alpha, xhat, inv_std, y, mask });
            h = next;
        }
        let out = h.dot(&view2(p, &lay.head_w, hid, cfg.out_dim)) + view1(p, &lay.head_b);
        Ok((out, ForwardCache { mode, z0, mask0, layers, h_last: h, batch_stats }))
    }

    /// Eval-mode predictions.
    pub fn predict(&self, batch: &GraphBatch) -> Result<Array2<f64>> {
        Ok(self.forward(batch, Mode::Eval, None)?.0)
    }

    /// Gradient of the loss with respect to every parameter, given the
    /// gradient with respect to the predictions.
    pub fn backward(&self, batch: &GraphBatch, cache: &ForwardCache, dout: &Array2<f64>) -> Vec<f64> {
        let cfg = &self.config;
        let (hid, p) = (cfg.hidden, &self.params);
        let lay = &self.layout;
        let mut grad = vec![0.0; lay.len];

        view2_mut(&mut grad, &lay.head_w, hid, cfg.out_dim).assign(&cache.h_last.t().dot(dout));
        view1_mut(&mut grad, &lay.head_b).assign(&dout.sum_axis(Axis(0)));
        let mut dh = dout.dot(&view2(p, &lay.head_w, hid, cfg.out_dim).t());

        for (l, s) in lay.layers.iter().enumerate().rev() {
            let c = &cache.layers[l];
            if let Some(m) = &c.mask {
                dh *= m;
            }
            let mut dy = dh;
            dy.zip_mut_with(&c.y, |d, &y| {
                if y <= 0.0 {
                    *d = 0.0
                }
            });
            view1_mut(&mut grad, &s.gamma).assign(&(&dy * &c.xhat).sum_axis(Axis(0)));
            view1_mut(&mut grad, &s.beta).assign(&dy.sum_axis(Axis(0)));
            let dxhat = dy * view1(p, &s.gamma);
            let d_o = match cache.mode {
                Mode::Eval => dxhat * &c.inv_std,
                Mode::Train { .. } => {
                    let m1 = dxhat.mean_axis(Axis(0)).unwrap();
                    let m2 = (&dxhat * &c.xhat).mean_axis(Axis(0)).unwrap();
                    (dxhat - &m1 - &c.xhat * &m2) * &c.inv_std
                }
            };
            let (dxd, dxs, datt) = self.attention_backward(l, batch, c, &d_o);
            view1_mut(&mut grad, &s.att).assign(&datt);
            view2_mut(&mut grad, &s.w_dst, hid, hid).assign(&c.h_in.t().dot(&dxd));
            view1_mut(&mut grad, &s.b_dst).assign(&dxd.sum_axis(Axis(0)));
            view2_mut(&mut grad, &s.w_src, hid, hid).assign(&c.h_in.t().dot(&dxs));
            view1_mut(&mut grad, &s.b_src).assign(&dxs.sum_axis(Axis(0)));
            dh = dxd.dot(&view2(p, &s.w_dst, hid, hid).t()) + dxs.dot(&view2(p, &s.w_src, hid, hid).t());
        }

        if let Some(m) = &cache.mask0 {
            dh *= m;
        }
        dh.zip_mut_with(&cache.z0, |d, &z| {
            if z <= 0.0 {
                *d = 0.0
            }
        });
        view2_mut(&mut grad, &lay.encoder_w, cfg.in_dim, hid).assign(&batch.x.t().dot(&dh));
        view1_mut(&mut grad, &lay.encoder_b).assign(&dh.sum_axis(Axis(0)));
        grad
    }

    fn attention_backward(
        &self,
        l: usize,
        batch: &GraphBatch,
        c: &LayerCache,
        d_o: &Array2<f64>,
    ) -> (Array2<f64>, Array2<f64>, Array1<f64>) {
        let cfg = &self.config;
        let (hid, heads, slope) = (cfg.hidden, cfg.heads, cfg.leaky_slope);
        let hd = hid / heads;
        let n = batch.node_count();
        let att = &self.params[self.layout.layers[l].att.clone()];
        let xs = c.xs.as_standard_layout();
        let xs = xs.as_slice().unwrap();
        let d_o = d_o.as_standard_layout();
        let d_o = d_o.as_slice().unwrap();
        let mut dxd = vec![0.0; n * hid];
        let mut dxs = vec![0.0; n * hid];
        let mut datt = vec![0.0; hid];
        let mut dalpha = Vec::new();
        for i in 0..n {
            let range = batch.in_range(i);
            for h in 0..heads {
                let cols = h * hd..(h + 1) * hd;
                dalpha.clear();
                let mut weighted = 0.0;
                for k in range.clone() {
                    let j = batch.source(k);
                    let da: f64 = cols.clone().map(|q| d_o[i * hid + q] * xs[j * hid + q]).sum();
                    weighted += c.alpha[k * heads + h] * da;
                    dalpha.push(da);
                }
                for (t, k) in range.clone().enumerate() {
                    let j = batch.source(k);
                    let a = c.alpha[k * heads + h];
                    let de = a * (dalpha[t] - weighted);
                    for q in cols.clone() {
                        dxs[j * hid + q] += a * d_o[i * hid + q];
                        let sv = c.s[k * hid + q];
                        datt[q] += de * leaky(sv, slope);
                        let ds = de * att[q] * if sv > 0.0 { 1.0 } else { slope };
                        dxd[i * hid + q] += ds;
                        dxs[j * hid + q] += ds;
                    }
                }
            }
        }
        (
            Array2::from_shape_vec((n, hid), dxd).unwrap(),
            Array2::from_shape_vec((n, hid), dxs).unwrap(),
            Array1::from(datt),
        )
    }

    /// Folds the batch statistics of a training pass into the running ones.
    pub fn update_running(&mut self, cache: &ForwardCache) {
        let h = self.config.hidden;
        for (l, (mean, var)) in cache.batch_stats.iter().enumerate() {
            for c in 0..h {
                let m = &mut self.running[2 * l * h + c];
                *m = (1.0 - BN_MOMENTUM) * *m + BN_MOMENTUM * mean[c];
                let v = &mut self.running[(2 * l + 1) * h + c];
                *v = (1.0 - BN_MOMENTUM) * *v + BN_MOMENTUM * var[c];
            }
        }
    }

    /// Loss and parameter gradient of one pass.
    pub fn loss_and_grad(
        &self,
        batch: &GraphBatch,
        target: &Array2<f64>,
        mode: Mode,
        rng: Option<&mut ChaCha8Rng>,
    ) -> Result<(f64, Vec<f64>, ForwardCache)> {
        if target.dim() != (batch.node_count(), self.config.out_dim) {
            return Err(Error::Structural(format!("label shape {:?} does not match batch", target.dim())));
        }
        let (pred, cache) = self.forward(batch, mode, rng)?;
        let (loss, dout) = mse_loss(&pred, target);
        let grad = self.backward(batch, &cache, &dout);
        Ok((loss, grad, cache))
    }
}
