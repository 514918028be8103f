//! Deterministic masked-LM pre-training and held-out evaluation.

mod adam;
mod checkpoint;

pub use adam::Adam;
pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, CHECKPOINT_VERSION};

use crate::corpus::{chunk_document, mask_for_mlm, MlmExample, TokenizedDoc, IGNORE_LABEL, MASK};
use crate::encoder::{forward, loss_and_gradients, EncoderError, ModelConfig, Parameters};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum TrainError {
    #[error("invalid training config: {0}")]
    InvalidConfig(String),
    #[error("training corpus is empty")]
    EmptyCorpus,
    #[error("held-out corpus has nothing to score")]
    EmptyHeldout,
    #[error("loss became non-finite at step {step}")]
    Diverged { step: u64 },
    #[error("checkpoint version {found} is not supported (expected {expected})")]
    VersionMismatch { found: u32, expected: u32 },
    #[error("corrupt checkpoint: {0}")]
    CorruptFile(String),
    #[error("i/o: {0}")]
    Io(String),
    #[error(transparent)]
    Encoder(#[from] EncoderError),
}

impl From<std::io::Error> for TrainError {
    fn from(e: std::io::Error) -> Self {
        TrainError::Io(e.to_string())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub steps: u64,
    pub batch_size: usize,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub mask_rate: f64,
    pub seed: u64,
    /// HEADER tokens are global when true; the pattern has no globals otherwise.
    pub global_attention_enabled: bool,
    /// Held-out evaluation period in steps; 0 disables it.
    pub eval_every: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            steps: 200,
            batch_size: 8,
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            mask_rate: crate::corpus::MASK_RATE,
            seed: 0,
            global_attention_enabled: true,
            eval_every: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: &str| Err(TrainError::InvalidConfig(m.to_string()));
        if self.batch_size == 0 {
            return bad("batch_size must be positive");
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return bad("lr must be positive");
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return bad("betas must lie in [0, 1)");
        }
        if self.eps.is_nan() || self.eps <= 0.0 {
            return bad("eps must be positive");
        }
        if !(0.0..=1.0).contains(&self.mask_rate) || self.mask_rate == 0.0 {
            return bad("mask_rate must lie in (0, 1]");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub masked_ce_nats: f64,
    pub bpc: f64,
    pub n_masked: usize,
    pub n_chars: u64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub checkpoint: Checkpoint,
    /// Batch loss before each update, one entry per step.
    pub loss_curve: Vec<(u64, f64)>,
    /// `(step, report)` for periodic held-out evaluations.
    pub eval_curve: Vec<(u64, EvalReport)>,
}

/// Global mask under a policy: HEADER roles when enabled, empty otherwise.
pub fn policy_mask(example: &MlmExample, global_attention: bool) -> Vec<bool> {
    if global_attention {
        example.global_mask.clone()
    } else {
        vec![false; example.len()]
    }
}

/// splitmix64 finalizer, used to derive independent stream seeds.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn chunk_corpus(docs: &[TokenizedDoc], max_len: usize) -> Vec<TokenizedDoc> {
    docs.iter()
        .flat_map(|d| chunk_document(d, max_len))
        .map(|(_, c)| c)
        .filter(|c| !c.is_empty())
        .collect()
}

/// Pre-trains from the seeded initialization.
pub fn train(
    corpus: &[TokenizedDoc],
    config: &TrainConfig,
    model_config: &ModelConfig,
    heldout: Option<&[TokenizedDoc]>,
) -> Result<TrainOutcome, TrainError> {
    config.validate()?;
    let params = Parameters::init(model_config, config.seed)?;
    train_from(params, corpus, config, heldout)
}

/// Runs `config.steps` Adam updates over seeded-shuffled chunk batches.
pub fn train_from(
    mut params: Parameters,
    corpus: &[TokenizedDoc],
    config: &TrainConfig,
    heldout: Option<&[TokenizedDoc]>,
) -> Result<TrainOutcome, TrainError> {
    config.validate()?;
    let chunks = chunk_corpus(corpus, params.config.max_len);
    if chunks.is_empty() {
        return Err(TrainError::EmptyCorpus);
    }
    let vocab = params.config.vocab_size;
    let mut adam = Adam::new(&params, config.lr, config.beta1, config.beta2, config.eps);
    let mut order_rng = ChaCha8Rng::seed_from_u64(mix(config.seed ^ 0x5348_5546));
    let mut order: Vec<usize> = (0..chunks.len()).collect();
    let mut cursor = order.len();
    let mut loss_curve = Vec::with_capacity(config.steps as usize);
    let mut eval_curve = Vec::new();
    let eval = |params: &Parameters| -> Result<Option<EvalReport>, TrainError> {
        match heldout {
            Some(docs) => {
                let ckpt = Checkpoint {
                    params: params.clone(),
                    seed: config.seed,
                    step: 0,
                    global_attention: config.global_attention_enabled,
                };
                evaluate(&ckpt, docs, config.seed).map(Some)
            }
            None => Ok(None),
        }
    };

    for step in 0..config.steps {
        if config.eval_every > 0 && step % config.eval_every == 0 {
            if let Some(report) = eval(&params)? {
                eval_curve.push((step, report));
            }
        }
        let mut rows = Vec::with_capacity(config.batch_size);
        for slot in 0..config.batch_size {
            if cursor == order.len() {
                order.shuffle(&mut order_rng);
                cursor = 0;
            }
            let chunk = &chunks[order[cursor]];
            cursor += 1;
            let seed = mix(config.seed ^ mix(step.wrapping_mul(1_000_003).wrapping_add(slot as u64)));
            let mut row = mask_for_mlm(chunk, config.mask_rate, seed, vocab);
            row.global_mask = policy_mask(&row, config.global_attention_enabled);
            rows.push(row);
        }
        if rows.iter().all(|r| r.masked_count() == 0) {
            // Keep every step well defined: predict the first token.
            let first = &mut rows[0];
            first.labels[0] = i64::from(first.input_ids[0]);
            first.input_ids[0] = MASK;
        }
        let mut result = loss_and_gradients(&params, &rows)?;
        if !result.loss.is_finite() {
            return Err(TrainError::Diverged { step });
        }
        loss_curve.push((step, result.loss));
        adam.step(&mut params, &mut result.gradients);
        if !params.all_finite() {
            return Err(TrainError::Diverged { step });
        }
    }
    if config.eval_every > 0 {
        if let Some(report) = eval(&params)? {
            eval_curve.push((config.steps, report));
        }
    }
    Ok(TrainOutcome {
        checkpoint: Checkpoint {
            params,
            seed: config.seed,
            step: config.steps,
            global_attention: config.global_attention_enabled,
        },
        loss_curve,
        eval_curve,
    })
}

/// Masked cross-entropy and bits-per-character on held-out documents.
///
/// Masked positions depend only on the documents and `seed`, so two models
/// evaluated with the same seed are scored on identical positions. BPC is
/// the summed `-log2 p(true token)` over the summed character lengths of the
/// masked tokens.
pub fn evaluate(checkpoint: &Checkpoint, heldout: &[TokenizedDoc], seed: u64) -> Result<EvalReport, TrainError> {
    let config = checkpoint.config();
    let chunks = chunk_corpus(heldout, config.max_len);
    let per_chunk: Vec<Result<(f64, usize, u64), TrainError>> = chunks
        .par_iter()
        .enumerate()
        .map(|(c, chunk)| {
            let mut row = mask_for_mlm(chunk, crate::corpus::MASK_RATE, seed.wrapping_add(c as u64), config.vocab_size);
            row.global_mask = policy_mask(&row, checkpoint.global_attention);
            let (logits, _) = forward(&checkpoint.params, &row.input_ids, &row.global_mask)?;
            let mut nats = 0.0;
            let mut count = 0;
            let mut chars = 0u64;
            for (i, &label) in row.labels.iter().enumerate() {
                if label == IGNORE_LABEL {
                    continue;
                }
                let logit_row = logits.row(i);
                let max = logit_row.fold(f64::NEG_INFINITY, |m, &x| m.max(x));
                let log_sum = logit_row.iter().map(|x| (x - max).exp()).sum::<f64>().ln();
                nats += max + log_sum - logit_row[label as usize];
                count += 1;
                chars += u64::from(row.char_lens[i]);
            }
            Ok((nats, count, chars))
        })
        .collect();
    let mut nats = 0.0;
    let mut n_masked = 0;
    let mut n_chars = 0;
    for part in per_chunk {
        let (a, b, c) = part?;
        nats += a;
        n_masked += b;
        n_chars += c;
    }
    if n_masked == 0 || n_chars == 0 {
        return Err(TrainError::EmptyHeldout);
    }
    Ok(EvalReport {
        masked_ce_nats: nats / n_masked as f64,
        bpc: nats / std::f64::consts::LN_2 / n_chars as f64,
        n_masked,
        n_chars,
    })
}
