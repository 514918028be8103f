use super::AttentionPattern;
use ndarray::{Array2, ArrayView2};
use std::sync::Arc;

/// Attention weights stored only over each row's allowed columns.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseWeights {
    pub(crate) cols: Arc<Vec<Vec<usize>>>,
    pub(crate) values: Vec<Vec<f64>>,
}

impl SparseWeights {
    pub fn len(&self) -> usize {
        self.cols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cols.is_empty()
    }

    pub fn row_cols(&self, i: usize) -> &[usize] {
        &self.cols[i]
    }

    pub fn row_values(&self, i: usize) -> &[f64] {
        &self.values[i]
    }

    /// Weight of `(i, j)`; exactly zero when the pair is not allowed.
    pub fn get(&self, i: usize, j: usize) -> f64 {
        match self.cols[i].binary_search(&j) {
            Ok(k) => self.values[i][k],
            Err(_) => 0.0,
        }
    }

    pub fn to_dense(&self) -> Array2<f64> {
        let n = self.len();
        let mut out = Array2::zeros((n, n));
        for i in 0..n {
            for (&j, &v) in self.cols[i].iter().zip(&self.values[i]) {
                out[[i, j]] = v;
            }
        }
        out
    }

    /// Element-wise mean of several weight sets over the same pattern.
    pub fn mean(parts: &[SparseWeights]) -> SparseWeights {
        let first = &parts[0];
        let scale = 1.0 / parts.len() as f64;
        let values = (0..first.len())
            .map(|i| {
                (0..first.values[i].len())
                    .map(|k| parts.iter().map(|p| p.values[i][k]).sum::<f64>() * scale)
                    .collect()
            })
            .collect();
        SparseWeights {
            cols: Arc::clone(&first.cols),
            values,
        }
    }
}

/// Softmax over scaled dot products of one query against the listed keys.
/// Returns the weights and writes the weighted sum of values into `out`.
#[allow(clippy::too_many_arguments)]
pub(crate) fn attend_row(
    query: &[f64],
    keys: &[f64],
    values: &[f64],
    stride: usize,
    offset: usize,
    cols: &[usize],
    scale: f64,
    out: &mut [f64],
) -> Vec<f64> {
    let dim = query.len();
    let mut weights: Vec<f64> = cols
        .iter()
        .map(|&j| {
            let key = &keys[j * stride + offset..j * stride + offset + dim];
            scale * query.iter().zip(key).map(|(a, b)| a * b).sum::<f64>()
        })
        .collect();
    let max = weights.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for w in weights.iter_mut() {
        *w = (*w - max).exp();
        total += *w;
    }
    for w in weights.iter_mut() {
        *w /= total;
    }
    out.iter_mut().for_each(|o| *o = 0.0);
    for (&j, &w) in cols.iter().zip(&weights) {
        let value = &values[j * stride + offset..j * stride + offset + dim];
        for (o, v) in out.iter_mut().zip(value) {
            *o += w * v;
        }
    }
    weights
}

/// Single-head scaled dot-product attention restricted to `pattern`.
pub fn sparse_attention(
    q: ArrayView2<f64>,
    k: ArrayView2<f64>,
    v: ArrayView2<f64>,
    pattern: &AttentionPattern,
) -> (Array2<f64>, SparseWeights) {
    let (n, dim) = q.dim();
    assert_eq!(pattern.len(), n, "pattern length must match the sequence");
    let (q, k, v) = (q.as_standard_layout(), k.as_standard_layout(), v.as_standard_layout());
    let (qs, ks, vs) = (
        q.as_slice().expect("standard layout"),
        k.as_slice().expect("standard layout"),
        v.as_slice().expect("standard layout"),
    );
    let cols = pattern.rows();
    let scale = 1.0 / (dim as f64).sqrt();
    let mut out = Array2::zeros((n, dim));
    let mut values = Vec::with_capacity(n);
    for i in 0..n {
        let mut row = out.row_mut(i);
        let row = row.as_slice_mut().expect("standard layout");
        values.push(attend_row(&qs[i * dim..(i + 1) * dim], ks, vs, dim, 0, &cols[i], scale, row));
    }
    (out, SparseWeights { cols, values })
}

/// Textbook full attention, materializing the `n x n` weight matrix.
pub fn dense_reference_attention(
    q: ArrayView2<f64>,
    k: ArrayView2<f64>,
    v: ArrayView2<f64>,
) -> (Array2<f64>, Array2<f64>) {
    let scale = 1.0 / (q.ncols() as f64).sqrt();
    let mut weights = q.dot(&k.t()) * scale;
    for mut row in weights.rows_mut() {
        let max = row.fold(f64::NEG_INFINITY, |m, &x| m.max(x));
        row.mapv_inplace(|x| (x - max).exp());
        let total = row.sum();
        row.mapv_inplace(|x| x / total);
    }
    let out = weights.dot(&v);
    (out, weights)
}
