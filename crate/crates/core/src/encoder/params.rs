use super::{EncoderError, ModelConfig};
use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, PartialEq)]
pub struct GlobalProjections {
    pub wq: Array2<f64>,
    pub wk: Array2<f64>,
    pub wv: Array2<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerParams {
    pub ln1_gain: Array1<f64>,
    pub ln1_bias: Array1<f64>,
    pub wq: Array2<f64>,
    pub wk: Array2<f64>,
    pub wv: Array2<f64>,
    pub wo: Array2<f64>,
    /// Separate projections for global rows, absent when shared.
    pub global: Option<GlobalProjections>,
    pub ln2_gain: Array1<f64>,
    pub ln2_bias: Array1<f64>,
    pub ff_in: Array2<f64>,
    pub ff_in_bias: Array1<f64>,
    pub ff_out: Array2<f64>,
    pub ff_out_bias: Array1<f64>,
}

/// All trainable tensors. Gradients and optimizer moments reuse this type.
#[derive(Debug, Clone, PartialEq)]
pub struct Parameters {
    pub config: ModelConfig,
    pub token_embedding: Array2<f64>,
    pub position_embedding: Array2<f64>,
    pub layers: Vec<LayerParams>,
    pub final_gain: Array1<f64>,
    pub final_bias: Array1<f64>,
    /// `d_model x vocab`; `None` when tied to the token embedding.
    pub head: Option<Array2<f64>>,
    pub head_bias: Array1<f64>,
}

fn xavier(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Array2<f64> {
    let bound = (6.0 / (rows + cols) as f64).sqrt();
    Array2::from_shape_simple_fn((rows, cols), || rng.gen_range(-bound..bound))
}

impl Parameters {
    /// Xavier-uniform matrices, unit layer-norm gains, zero biases.
    pub fn init(config: &ModelConfig, seed: u64) -> Result<Self, EncoderError> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (d, ff, vocab) = (config.d_model, config.d_ff, config.vocab_size);
        let token_embedding = xavier(&mut rng, vocab, d);
        let position_embedding = xavier(&mut rng, config.max_len, d);
        let layers = (0..config.layers)
            .map(|_| {
                let wq = xavier(&mut rng, d, d);
                let wk = xavier(&mut rng, d, d);
                let wv = xavier(&mut rng, d, d);
                let wo = xavier(&mut rng, d, d);
                let global = (!config.share_global_projections).then(|| GlobalProjections {
                    wq: xavier(&mut rng, d, d),
                    wk: xavier(&mut rng, d, d),
                    wv: xavier(&mut rng, d, d),
                });
                LayerParams {
                    ln1_gain: Array1::ones(d),
                    ln1_bias: Array1::zeros(d),
                    wq,
                    wk,
                    wv,
                    wo,
                    global,
                    ln2_gain: Array1::ones(d),
                    ln2_bias: Array1::zeros(d),
                    ff_in: xavier(&mut rng, d, ff),
                    ff_in_bias: Array1::zeros(ff),
                    ff_out: xavier(&mut rng, ff, d),
                    ff_out_bias: Array1::zeros(d),
                }
            })
            .collect();
        let head = (!config.tie_embeddings).then(|| xavier(&mut rng, d, vocab));
        Ok(Self {
            config: config.clone(),
            token_embedding,
            position_embedding,
            layers,
            final_gain: Array1::ones(d),
            final_bias: Array1::zeros(d),
            head,
            head_bias: Array1::zeros(vocab),
        })
    }

    /// Same shapes, every entry zero.
    pub fn zeros_like(&self) -> Self {
        let mut out = self.clone();
        out.for_each_mut(|_, data| data.iter_mut().for_each(|x| *x = 0.0));
        out
    }

    /// Visits `(name, shape, data)` of every tensor in a fixed order.
    pub fn for_each(&self, mut f: impl FnMut(&str, &[usize], &[f64])) {
        macro_rules! visit {
            ($name:expr, $t:expr) => {
                f(&$name, $t.shape(), $t.as_slice().expect("standard layout"))
            };
        }
        visit!("token_embedding", self.token_embedding);
        visit!("position_embedding", self.position_embedding);
        for (l, layer) in self.layers.iter().enumerate() {
            visit!(format!("layers.{l}.ln1_gain"), layer.ln1_gain);
            visit!(format!("layers.{l}.ln1_bias"), layer.ln1_bias);
            visit!(format!("layers.{l}.wq"), layer.wq);
            visit!(format!("layers.{l}.wk"), layer.wk);
            visit!(format!("layers.{l}.wv"), layer.wv);
            visit!(format!("layers.{l}.wo"), layer.wo);
            if let Some(g) = &layer.global {
                visit!(format!("layers.{l}.global_wq"), g.wq);
                visit!(format!("layers.{l}.global_wk"), g.wk);
                visit!(format!("layers.{l}.global_wv"), g.wv);
            }
            visit!(format!("layers.{l}.ln2_gain"), layer.ln2_gain);
            visit!(format!("layers.{l}.ln2_bias"), layer.ln2_bias);
            visit!(format!("layers.{l}.ff_in"), layer.ff_in);
            visit!(format!("layers.{l}.ff_in_bias"), layer.ff_in_bias);
            visit!(format!("layers.{l}.ff_out"), layer.ff_out);
            visit!(format!("layers.{l}.ff_out_bias"), layer.ff_out_bias);
        }
        visit!("final_gain", self.final_gain);
        visit!("final_bias", self.final_bias);
        if let Some(head) = &self.head {
            visit!("head", head);
        }
        visit!("head_bias", self.head_bias);
    }

    /// Mutable counterpart of [`Parameters::for_each`], same order.
    pub fn for_each_mut(&mut self, mut f: impl FnMut(&str, &mut [f64])) {
        macro_rules! visit {
            ($name:expr, $t:expr) => {
                f(&$name, $t.as_slice_mut().expect("standard layout"))
            };
        }
        visit!("token_embedding", self.token_embedding);
        visit!("position_embedding", self.position_embedding);
        for (l, layer) in self.layers.iter_mut().enumerate() {
            visit!(format!("layers.{l}.ln1_gain"), layer.ln1_gain);
            visit!(format!("layers.{l}.ln1_bias"), layer.ln1_bias);
            visit!(format!("layers.{l}.wq"), layer.wq);
            visit!(format!("layers.{l}.wk"), layer.wk);
            visit!(format!("layers.{l}.wv"), layer.wv);
            visit!(format!("layers.{l}.wo"), layer.wo);
            if let Some(g) = &mut layer.global {
                visit!(format!("layers.{l}.global_wq"), g.wq);
                visit!(format!("layers.{l}.global_wk"), g.wk);
                visit!(format!("layers.{l}.global_wv"), g.wv);
            }
            visit!(format!("layers.{l}.ln2_gain"), layer.ln2_gain);
            visit!(format!("layers.{l}.ln2_bias"), layer.ln2_bias);
            visit!(format!("layers.{l}.ff_in"), layer.ff_in);
            visit!(format!("layers.{l}.ff_in_bias"), layer.ff_in_bias);
            visit!(format!("layers.{l}.ff_out"), layer.ff_out);
            visit!(format!("layers.{l}.ff_out_bias"), layer.ff_out_bias);
        }
        visit!("final_gain", self.final_gain);
        visit!("final_bias", self.final_bias);
        if let Some(head) = &mut self.head {
            visit!("head", head);
        }
        visit!("head_bias", self.head_bias);
    }

    /// Flat views of every tensor, in visiting order.
    pub fn slices_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out: Vec<&mut [f64]> = vec![
            self.token_embedding.as_slice_mut().expect("standard layout"),
            self.position_embedding.as_slice_mut().expect("standard layout"),
        ];
        for layer in &mut self.layers {
            out.push(layer.ln1_gain.as_slice_mut().expect("standard layout"));
            out.push(layer.ln1_bias.as_slice_mut().expect("standard layout"));
            out.push(layer.wq.as_slice_mut().expect("standard layout"));
            out.push(layer.wk.as_slice_mut().expect("standard layout"));
            out.push(layer.wv.as_slice_mut().expect("standard layout"));
            out.push(layer.wo.as_slice_mut().expect("standard layout"));
            if let Some(g) = &mut layer.global {
                out.push(g.wq.as_slice_mut().expect("standard layout"));
                out.push(g.wk.as_slice_mut().expect("standard layout"));
                out.push(g.wv.as_slice_mut().expect("standard layout"));
            }
            out.push(layer.ln2_gain.as_slice_mut().expect("standard layout"));
            out.push(layer.ln2_bias.as_slice_mut().expect("standard layout"));
            out.push(layer.ff_in.as_slice_mut().expect("standard layout"));
            out.push(layer.ff_in_bias.as_slice_mut().expect("standard layout"));
            out.push(layer.ff_out.as_slice_mut().expect("standard layout"));
            out.push(layer.ff_out_bias.as_slice_mut().expect("standard layout"));
        }
        out.push(self.final_gain.as_slice_mut().expect("standard layout"));
        out.push(self.final_bias.as_slice_mut().expect("standard layout"));
        if let Some(head) = &mut self.head {
            out.push(head.as_slice_mut().expect("standard layout"));
        }
        out.push(self.head_bias.as_slice_mut().expect("standard layout"));
        out
    }

    pub fn tensor_count(&self) -> usize {
        let mut n = 0;
        self.for_each(|_, _, _| n += 1);
        n
    }

    pub fn parameter_count(&self) -> usize {
        let mut n = 0;
        self.for_each(|_, _, data| n += data.len());
        n
    }

    /// `self += other`, tensor by tensor.
    pub fn add_assign(&mut self, other: &Parameters) {
        let mut sources = Vec::new();
        other.for_each(|_, _, data| sources.push(data.to_vec()));
        for (dst, src) in self.slices_mut().into_iter().zip(sources) {
            dst.iter_mut().zip(src).for_each(|(a, b)| *a += b);
        }
    }

    pub fn scale(&mut self, factor: f64) {
        self.for_each_mut(|_, data| data.iter_mut().for_each(|x| *x *= factor));
    }

    pub fn all_finite(&self) -> bool {
        let mut ok = true;
        self.for_each(|_, _, data| ok &= data.iter().all(|x| x.is_finite()));
        ok
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn init_is_deterministic_and_shaped() {
        let config = ModelConfig { vocab_size: 30, max_len: 12, d_model: 8, d_ff: 16, ..Default::default() };
        let a = Parameters::init(&config, 3).unwrap();
        assert_eq!(a, Parameters::init(&config, 3).unwrap());
        assert_ne!(a, Parameters::init(&config, 4).unwrap());
        assert_eq!(a.token_embedding.dim(), (30, 8));
        assert_eq!(a.layers[0].ff_in.dim(), (8, 16));
        assert_eq!(a.tensor_count(), 2 + 2 * 12 + 2 + 2);
        assert!(a.all_finite());
    }

    #[test]
    fn optional_tensors_follow_config() {
        let config = ModelConfig {
            vocab_size: 10,
            max_len: 4,
            d_model: 4,
            d_ff: 4,
            share_global_projections: false,
            tie_embeddings: true,
            ..Default::default()
        };
        let p = Parameters::init(&config, 0).unwrap();
        assert!(p.head.is_none());
        assert!(p.layers.iter().all(|l| l.global.is_some()));
        let mut names = Vec::new();
        p.for_each(|name, _, _| names.push(name.to_string()));
        assert!(names.contains(&"layers.1.global_wv".to_string()));
        assert!(!names.contains(&"head".to_string()));
        let mut q = p.zeros_like();
        assert_eq!(q.slices_mut().len(), names.len());
    }
}
