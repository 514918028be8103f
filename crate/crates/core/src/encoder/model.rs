//! Forward pass, masked-LM loss and exact reverse-mode gradients.

use super::attention::attend_row;
use super::params::{GlobalProjections, LayerParams};
use super::{AttentionPattern, EncoderError, Parameters, SparseWeights};
use crate::corpus::{MlmExample, IGNORE_LABEL};
use ndarray::{s, Array1, Array2, Axis, Zip};
use rayon::prelude::*;
use std::sync::Arc;

const LN_EPS: f64 = 1e-5;
const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2 / pi)

/// Attention weights of every layer and head for one input.
#[derive(Debug, Clone, PartialEq)]
pub struct ActivationTrace {
    pub pattern: AttentionPattern,
    layers: Vec<Vec<SparseWeights>>,
}

impl ActivationTrace {
    pub fn layer_count(&self) -> usize {
        self.layers.len()
    }

    pub fn head_count(&self) -> usize {
        self.layers.first().map_or(0, Vec::len)
    }

    pub fn head(&self, layer: usize, head: usize) -> &SparseWeights {
        &self.layers[layer][head]
    }

    /// Arithmetic mean over the heads of one layer.
    pub fn head_mean(&self, layer: usize) -> SparseWeights {
        SparseWeights::mean(&self.layers[layer])
    }
}

struct LnCache {
    xhat: Array2<f64>,
    rstd: Array1<f64>,
}

fn layer_norm(x: &Array2<f64>, gain: &Array1<f64>, bias: &Array1<f64>) -> (Array2<f64>, LnCache) {
    let (n, d) = x.dim();
    let mut xhat = Array2::zeros((n, d));
    let mut rstd = Array1::zeros(n);
    for i in 0..n {
        let row = x.row(i);
        let mean = row.sum() / d as f64;
        let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d as f64;
        let r = 1.0 / (var + LN_EPS).sqrt();
        rstd[i] = r;
        xhat.row_mut(i).assign(&row.mapv(|v| (v - mean) * r));
    }
    let y = &xhat * gain + bias;
    (y, LnCache { xhat, rstd })
}

fn layer_norm_backward(
    dy: &Array2<f64>,
    cache: &LnCache,
    gain: &Array1<f64>,
    dgain: &mut Array1<f64>,
    dbias: &mut Array1<f64>,
) -> Array2<f64> {
    *dgain += &(dy * &cache.xhat).sum_axis(Axis(0));
    *dbias += &dy.sum_axis(Axis(0));
    let dxhat = dy * gain;
    let d = dy.ncols() as f64;
    let mut dx = Array2::zeros(dy.dim());
    for i in 0..dy.nrows() {
        let g = dxhat.row(i);
        let xh = cache.xhat.row(i);
        let mean_g = g.sum() / d;
        let mean_gx = g.dot(&xh) / d;
        let r = cache.rstd[i];
        Zip::from(dx.row_mut(i))
            .and(&g)
            .and(&xh)
            .for_each(|o, &gi, &xi| *o = r * (gi - mean_g - xi * mean_gx));
    }
    dx
}

fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + (GELU_C * (x + 0.044715 * x * x * x)).tanh())
}

fn gelu_grad(x: f64) -> f64 {
    let t = (GELU_C * (x + 0.044715 * x * x * x)).tanh();
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * GELU_C * (1.0 + 3.0 * 0.044715 * x * x)
}

/// Projected queries/keys/values for local and (optionally) global rows.
struct Projections {
    q: Array2<f64>,
    k: Array2<f64>,
    v: Array2<f64>,
    global: Option<[Array2<f64>; 3]>,
}

impl Projections {
    /// `(q, k, v)` used by query row `i`.
    fn for_row(&self, global_row: bool) -> (&Array2<f64>, &Array2<f64>, &Array2<f64>) {
        match (&self.global, global_row) {
            (Some([q, k, v]), true) => (q, k, v),
            _ => (&self.q, &self.k, &self.v),
        }
    }
}

struct LayerCache {
    ln1: LnCache,
    h1: Array2<f64>,
    proj: Projections,
    /// `[head][row]` weights over the row's allowed columns.
    probs: Vec<Vec<Vec<f64>>>,
    attended: Array2<f64>,
    ln2: LnCache,
    h2: Array2<f64>,
    ff_pre: Array2<f64>,
    ff_act: Array2<f64>,
}

struct ForwardPass {
    cols: Arc<Vec<Vec<usize>>>,
    pattern: AttentionPattern,
    layers: Vec<LayerCache>,
    final_ln: LnCache,
    hidden: Array2<f64>,
    logits: Array2<f64>,
}

fn check_input(params: &Parameters, ids: &[u32], global_mask: &[bool]) -> Result<(), EncoderError> {
    let config = &params.config;
    if ids.len() > config.max_len {
        return Err(EncoderError::SequenceTooLong { len: ids.len(), max: config.max_len });
    }
    if global_mask.len() != ids.len() {
        return Err(EncoderError::MaskLength { mask: global_mask.len(), len: ids.len() });
    }
    if let Some(&id) = ids.iter().find(|&&id| id as usize >= config.vocab_size) {
        return Err(EncoderError::TokenOutOfRange { id, vocab: config.vocab_size });
    }
    Ok(())
}

fn attention_forward(
    proj: &Projections,
    cols: &[Vec<usize>],
    pattern: &AttentionPattern,
    heads: usize,
) -> (Array2<f64>, Vec<Vec<Vec<f64>>>) {
    let (n, d) = proj.q.dim();
    let hd = d / heads;
    let scale = 1.0 / (hd as f64).sqrt();
    let mut out = Array2::zeros((n, d));
    let mut probs = vec![Vec::with_capacity(n); heads];
    let out_data = out.as_slice_mut().expect("standard layout");
    for i in 0..n {
        let (q, k, v) = proj.for_row(pattern.is_global(i));
        let (qs, ks, vs) = (
            q.as_slice().expect("standard layout"),
            k.as_slice().expect("standard layout"),
            v.as_slice().expect("standard layout"),
        );
        for (h, head_probs) in probs.iter_mut().enumerate() {
            let off = h * hd;
            let query = &qs[i * d + off..i * d + off + hd];
            let row_out = &mut out_data[i * d + off..i * d + off + hd];
            head_probs.push(attend_row(query, ks, vs, d, off, &cols[i], scale, row_out));
        }
    }
    (out, probs)
}

fn layer_forward(
    layer: &LayerParams,
    x: &Array2<f64>,
    cols: &[Vec<usize>],
    pattern: &AttentionPattern,
    heads: usize,
) -> (Array2<f64>, LayerCache) {
    let (h1, ln1) = layer_norm(x, &layer.ln1_gain, &layer.ln1_bias);
    let proj = Projections {
        q: h1.dot(&layer.wq),
        k: h1.dot(&layer.wk),
        v: h1.dot(&layer.wv),
        global: layer
            .global
            .as_ref()
            .map(|g| [h1.dot(&g.wq), h1.dot(&g.wk), h1.dot(&g.wv)]),
    };
    let (attended, probs) = attention_forward(&proj, cols, pattern, heads);
    let mid = x + &attended.dot(&layer.wo);
    let (h2, ln2) = layer_norm(&mid, &layer.ln2_gain, &layer.ln2_bias);
    let ff_pre = h2.dot(&layer.ff_in) + &layer.ff_in_bias;
    let ff_act = ff_pre.mapv(gelu);
    let out = &mid + &(ff_act.dot(&layer.ff_out) + &layer.ff_out_bias);
    let cache = LayerCache { ln1, h1, proj, probs, attended, ln2, h2, ff_pre, ff_act };
    (out, cache)
}

fn run_forward(params: &Parameters, ids: &[u32], global_mask: &[bool]) -> Result<ForwardPass, EncoderError> {
    check_input(params, ids, global_mask)?;
    let config = &params.config;
    let n = ids.len();
    let pattern = AttentionPattern::new(config.window, global_mask);
    let cols = pattern.rows();
    let mut x = params.position_embedding.slice(s![..n, ..]).to_owned();
    for (i, &id) in ids.iter().enumerate() {
        let mut row = x.row_mut(i);
        row += &params.token_embedding.row(id as usize);
    }
    let mut layers = Vec::with_capacity(config.layers);
    for layer in &params.layers {
        let (next, cache) = layer_forward(layer, &x, &cols, &pattern, config.heads);
        layers.push(cache);
        x = next;
    }
    let (hidden, final_ln) = layer_norm(&x, &params.final_gain, &params.final_bias);
    let logits = match &params.head {
        Some(head) => hidden.dot(head),
        None => hidden.dot(&params.token_embedding.t()),
    } + &params.head_bias;
    Ok(ForwardPass { cols, pattern, layers, final_ln, hidden, logits })
}

/// Runs the encoder; returns `n x vocab` logits and every attention weight.
pub fn forward(
    params: &Parameters,
    ids: &[u32],
    global_mask: &[bool],
) -> Result<(Array2<f64>, ActivationTrace), EncoderError> {
    let pass = run_forward(params, ids, global_mask)?;
    let layers = pass
        .layers
        .into_iter()
        .map(|cache| {
            cache
                .probs
                .into_iter()
                .map(|values| SparseWeights { cols: Arc::clone(&pass.cols), values })
                .collect()
        })
        .collect();
    Ok((pass.logits, ActivationTrace { pattern: pass.pattern, layers }))
}

fn log_softmax_row(row: ndarray::ArrayView1<f64>) -> (f64, f64) {
    let max = row.fold(f64::NEG_INFINITY, |m, &x| m.max(x));
    let sum = row.iter().map(|x| (x - max).exp()).sum::<f64>();
    (max, sum.ln())
}

/// Mean natural-log cross-entropy over positions whose label is not -1.
pub fn mlm_loss(logits: &Array2<f64>, labels: &[i64]) -> Result<f64, EncoderError> {
    let (total, count) = cross_entropy_sum(logits, labels);
    if count == 0 {
        return Err(EncoderError::NoMaskedPositions);
    }
    Ok(total / count as f64)
}

pub(crate) fn cross_entropy_sum(logits: &Array2<f64>, labels: &[i64]) -> (f64, usize) {
    let mut total = 0.0;
    let mut count = 0;
    for (i, &label) in labels.iter().enumerate() {
        if label == IGNORE_LABEL {
            continue;
        }
        let row = logits.row(i);
        let (max, log_sum) = log_softmax_row(row);
        total += max + log_sum - row[label as usize];
        count += 1;
    }
    (total, count)
}

/// Gradient of `scale * sum(CE) / denom` with respect to the logits.
fn cross_entropy_grad(logits: &Array2<f64>, labels: &[i64], factor: f64) -> Array2<f64> {
    let mut grad = Array2::zeros(logits.dim());
    for (i, &label) in labels.iter().enumerate() {
        if label == IGNORE_LABEL {
            continue;
        }
        let row = logits.row(i);
        let (max, log_sum) = log_softmax_row(row);
        let mut g = grad.row_mut(i);
        Zip::from(&mut g).and(&row).for_each(|gv, &x| *gv = factor * (x - max - log_sum).exp());
        g[label as usize] -= factor;
    }
    grad
}

fn attention_backward(
    cache: &LayerCache,
    cols: &[Vec<usize>],
    pattern: &AttentionPattern,
    d_attended: &Array2<f64>,
    heads: usize,
) -> (Projections, bool) {
    let proj = &cache.proj;
    let (n, d) = proj.q.dim();
    let hd = d / heads;
    let scale = 1.0 / (hd as f64).sqrt();
    let mut local = [Array2::zeros((n, d)), Array2::zeros((n, d)), Array2::zeros((n, d))];
    let mut global = proj
        .global
        .as_ref()
        .map(|_| [Array2::zeros((n, d)), Array2::zeros((n, d)), Array2::zeros((n, d))]);
    let dout = d_attended.as_slice().expect("standard layout");
    for (i, row_cols) in cols.iter().enumerate().take(n) {
        let is_global = pattern.is_global(i);
        let (q, k, v) = proj.for_row(is_global);
        let (qs, ks, vs) = (
            q.as_slice().expect("standard layout"),
            k.as_slice().expect("standard layout"),
            v.as_slice().expect("standard layout"),
        );
        let [dq, dk, dv] = match (&mut global, is_global) {
            (Some(g), true) => g,
            _ => &mut local,
        };
        let dq = dq.as_slice_mut().expect("standard layout");
        let dk = dk.as_slice_mut().expect("standard layout");
        let dv = dv.as_slice_mut().expect("standard layout");
        for h in 0..heads {
            let off = h * hd;
            let p = &cache.probs[h][i];
            let row = i * d + off..i * d + off + hd;
            let do_i = &dout[row.clone()];
            // dp_j = do_i . v_j
            let dp: Vec<f64> = row_cols
                .iter()
                .map(|&j| do_i.iter().zip(&vs[j * d + off..j * d + off + hd]).map(|(a, b)| a * b).sum())
                .collect();
            let centered: f64 = p.iter().zip(&dp).map(|(a, b)| a * b).sum();
            for (idx, &j) in row_cols.iter().enumerate() {
                let ds = p[idx] * (dp[idx] - centered) * scale;
                let jr = j * d + off..j * d + off + hd;
                for c in 0..hd {
                    dq[row.start + c] += ds * ks[jr.start + c];
                    dk[jr.start + c] += ds * qs[row.start + c];
                    dv[jr.start + c] += p[idx] * do_i[c];
                }
            }
        }
    }
    let has_global = global.is_some();
    let [q, k, v] = local;
    (Projections { q, k, v, global }, has_global)
}

fn layer_backward(
    layer: &LayerParams,
    grad: &mut LayerParams,
    cache: &LayerCache,
    cols: &[Vec<usize>],
    pattern: &AttentionPattern,
    d_out: Array2<f64>,
    heads: usize,
) -> Array2<f64> {
    // feed-forward block
    grad.ff_out += &cache.ff_act.t().dot(&d_out);
    grad.ff_out_bias += &d_out.sum_axis(Axis(0));
    let mut d_pre = d_out.dot(&layer.ff_out.t());
    Zip::from(&mut d_pre).and(&cache.ff_pre).for_each(|g, &x| *g *= gelu_grad(x));
    grad.ff_in += &cache.h2.t().dot(&d_pre);
    grad.ff_in_bias += &d_pre.sum_axis(Axis(0));
    let d_h2 = d_pre.dot(&layer.ff_in.t());
    let d_mid = d_out
        + layer_norm_backward(&d_h2, &cache.ln2, &layer.ln2_gain, &mut grad.ln2_gain, &mut grad.ln2_bias);

    // attention block
    grad.wo += &cache.attended.t().dot(&d_mid);
    let d_attended = d_mid.dot(&layer.wo.t());
    let (d_proj, _) = attention_backward(cache, cols, pattern, &d_attended, heads);
    let h1t = cache.h1.t();
    grad.wq += &h1t.dot(&d_proj.q);
    grad.wk += &h1t.dot(&d_proj.k);
    grad.wv += &h1t.dot(&d_proj.v);
    let mut d_h1 = d_proj.q.dot(&layer.wq.t()) + d_proj.k.dot(&layer.wk.t()) + d_proj.v.dot(&layer.wv.t());
    if let (Some([dq, dk, dv]), Some(g), Some(gg)) = (&d_proj.global, &layer.global, grad.global.as_mut()) {
        let GlobalProjections { wq, wk, wv } = g;
        gg.wq += &h1t.dot(dq);
        gg.wk += &h1t.dot(dk);
        gg.wv += &h1t.dot(dv);
        d_h1 = d_h1 + dq.dot(&wq.t()) + dk.dot(&wk.t()) + dv.dot(&wv.t());
    }
    d_mid + layer_norm_backward(&d_h1, &cache.ln1, &layer.ln1_gain, &mut grad.ln1_gain, &mut grad.ln1_bias)
}

/// Backpropagates `d_logits` through one forward pass.
fn backward(params: &Parameters, ids: &[u32], pass: &ForwardPass, d_logits: &Array2<f64>) -> Parameters {
    let mut grad = params.zeros_like();
    grad.head_bias += &d_logits.sum_axis(Axis(0));
    let d_hidden = match &params.head {
        Some(head) => {
            *grad.head.as_mut().expect("same shape") += &pass.hidden.t().dot(d_logits);
            d_logits.dot(&head.t())
        }
        None => {
            grad.token_embedding += &d_logits.t().dot(&pass.hidden);
            d_logits.dot(&params.token_embedding)
        }
    };
    let mut dx = layer_norm_backward(
        &d_hidden,
        &pass.final_ln,
        &params.final_gain,
        &mut grad.final_gain,
        &mut grad.final_bias,
    );
    for (l, cache) in pass.layers.iter().enumerate().rev() {
        dx = layer_backward(
            &params.layers[l],
            &mut grad.layers[l],
            cache,
            &pass.cols,
            &pass.pattern,
            dx,
            params.config.heads,
        );
    }
    let n = ids.len();
    let mut pos = grad.position_embedding.slice_mut(s![..n, ..]);
    pos += &dx;
    for (i, &id) in ids.iter().enumerate() {
        let mut row = grad.token_embedding.row_mut(id as usize);
        row += &dx.row(i);
    }
    grad
}

#[derive(Debug, Clone)]
pub struct LossAndGradients {
    /// Mean masked cross-entropy (nats) over the batch, times the scale.
    pub loss: f64,
    pub masked: usize,
    pub gradients: Parameters,
}

pub fn loss_and_gradients(params: &Parameters, rows: &[MlmExample]) -> Result<LossAndGradients, EncoderError> {
    loss_and_gradients_scaled(params, rows, 1.0)
}

/// Loss `scale * mean CE` over all masked positions of the batch and its
/// exact gradient. Rows are processed in parallel and their gradients summed
/// in row order, so the result does not depend on the thread count.
pub fn loss_and_gradients_scaled(
    params: &Parameters,
    rows: &[MlmExample],
    scale: f64,
) -> Result<LossAndGradients, EncoderError> {
    let masked: usize = rows.iter().map(MlmExample::masked_count).sum();
    if masked == 0 {
        return Err(EncoderError::NoMaskedPositions);
    }
    let factor = scale / masked as f64;
    let per_row: Vec<Result<(f64, Parameters), EncoderError>> = rows
        .par_iter()
        .map(|row| {
            let pass = run_forward(params, &row.input_ids, &row.global_mask)?;
            let (ce, _) = cross_entropy_sum(&pass.logits, &row.labels);
            let d_logits = cross_entropy_grad(&pass.logits, &row.labels, factor);
            Ok((ce, backward(params, &row.input_ids, &pass, &d_logits)))
        })
        .collect();
    let mut total = 0.0;
    let mut gradients: Option<Parameters> = None;
    for result in per_row {
        let (ce, grad) = result?;
        total += ce;
        match gradients.as_mut() {
            Some(acc) => acc.add_assign(&grad),
            None => gradients = Some(grad),
        }
    }
    Ok(LossAndGradients {
        loss: scale * total / masked as f64,
        masked,
        gradients: gradients.expect("at least one row"),
    })
}
