use super::{Role, TokenizedDoc, MASK, RESERVED};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Label at positions that were not selected for prediction.
pub const IGNORE_LABEL: i64 = -1;
pub const MASK_RATE: f64 = 0.15;

const MASK_SHARE: f64 = 0.8;
const RANDOM_SHARE: f64 = 0.1;

/// One masked sequence.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MlmExample {
    pub input_ids: Vec<u32>,
    pub labels: Vec<i64>,
    pub global_mask: Vec<bool>,
    pub char_lens: Vec<u32>,
    pub rng_seed: u64,
}

impl MlmExample {
    pub fn len(&self) -> usize {
        self.input_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.input_ids.is_empty()
    }

    pub fn masked_count(&self) -> usize {
        self.labels.iter().filter(|&&l| l != IGNORE_LABEL).count()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct MlmBatch {
    pub rows: Vec<MlmExample>,
}

/// Selects each position with probability `mask_rate`; selected tokens become
/// MASK (80%), a uniform random non-reserved id (10%) or stay unchanged (10%).
///
/// The global mask mirrors the HEADER roles. Deterministic in `(doc, seed)`.
pub fn mask_for_mlm(doc: &TokenizedDoc, mask_rate: f64, seed: u64, vocab_size: usize) -> MlmExample {
    assert!((0.0..=1.0).contains(&mask_rate), "mask rate must lie in [0, 1]");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut input_ids = doc.ids.clone();
    let mut labels = vec![IGNORE_LABEL; doc.len()];
    let first_free = RESERVED.len() as u32;
    for (i, &id) in doc.ids.iter().enumerate() {
        if rng.gen::<f64>() >= mask_rate {
            continue;
        }
        labels[i] = i64::from(id);
        let branch = rng.gen::<f64>();
        input_ids[i] = if branch < MASK_SHARE {
            MASK
        } else if branch < MASK_SHARE + RANDOM_SHARE {
            if vocab_size as u32 > first_free {
                rng.gen_range(first_free..vocab_size as u32)
            } else {
                MASK
            }
        } else {
            id
        };
    }
    MlmExample {
        input_ids,
        labels,
        global_mask: doc.roles.iter().map(|&r| r == Role::Header).collect(),
        char_lens: doc.char_lens.clone(),
        rng_seed: seed,
    }
}
