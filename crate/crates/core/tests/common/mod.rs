//! Helpers shared by integration test targets.
#![allow(dead_code)]

use rand::Rng;
use std::path::PathBuf;
use structmask::corpus::{mask_for_mlm, MlmExample, Role, TokenizedDoc};
use structmask::encoder::{loss_and_gradients, ModelConfig, Parameters};
use structmask::latex::{DocNode, DocumentTree, NodeKind, StyledWord};

pub fn data_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/data")
}

const ALPHABET: &[char] = &['a', 'b', 'Z', '9', '.', ',', '%', '$', '{', '}', '"', 'é', 'ß', '字', '-', '\''];

fn random_word(rng: &mut impl Rng) -> StyledWord {
    let len = rng.gen_range(1..8);
    let text: String = (0..len).map(|_| ALPHABET[rng.gen_range(0..ALPHABET.len())]).collect();
    StyledWord {
        text,
        bold: rng.gen(),
        italic: rng.gen(),
        underline: rng.gen(),
    }
}

fn random_words(rng: &mut impl Rng, max: usize) -> Vec<StyledWord> {
    let n = rng.gen_range(0..=max);
    (0..n).map(|_| random_word(rng)).collect()
}

fn random_node(rng: &mut impl Rng, kind: NodeKind, depth: usize) -> DocNode {
    let mut node = DocNode::new(kind);
    node.heading = random_words(rng, 4);
    node.body = random_words(rng, 6);
    if depth < 4 {
        let deeper: Vec<NodeKind> = [
            NodeKind::Abstract,
            NodeKind::Section,
            NodeKind::Subsection,
            NodeKind::Subsubsection,
            NodeKind::Paragraph,
        ]
        .into_iter()
        .filter(|k| k.rank() > kind.rank())
        .collect();
        if !deeper.is_empty() {
            for _ in 0..rng.gen_range(0..3) {
                let k = deeper[rng.gen_range(0..deeper.len())];
                node.children.push(random_node(rng, k, depth + 1));
            }
        }
    }
    node
}

/// A random tree satisfying every structural invariant.
pub fn random_tree(rng: &mut impl Rng, index: usize) -> DocumentTree {
    let tree = DocumentTree {
        doc_id: format!("r{index}"),
        root: random_node(rng, NodeKind::Title, 0),
    };
    tree.validate().expect("generator produces valid trees");
    tree
}

pub const FD_STEP: f64 = 1e-5;

pub fn fd_config(share: bool, tie: bool) -> ModelConfig {
    ModelConfig {
        layers: 2,
        heads: 2,
        d_model: 16,
        d_ff: 32,
        window: 4,
        vocab_size: 30,
        max_len: 24,
        share_global_projections: share,
        tie_embeddings: tie,
    }
}

/// Two masked rows of length 24 with a few HEADER positions.
pub fn fd_batch(vocab: usize) -> Vec<MlmExample> {
    (0..2u64)
        .map(|r| {
            let n = 24;
            let doc = TokenizedDoc {
                doc_id: format!("g{r}"),
                ids: (0..n).map(|i| 5 + ((i * 7 + r as usize * 3) % (vocab - 6)) as u32).collect(),
                roles: (0..n).map(|i| if i % 9 == 2 { Role::Header } else { Role::Body }).collect(),
                char_lens: vec![4; n],
            };
            mask_for_mlm(&doc, 0.3, 100 + r, vocab)
        })
        .collect()
}

fn relative_error(a: &[f64], b: &[f64]) -> f64 {
    let diff = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na.max(nb) == 0.0 {
        0.0
    } else {
        diff / na.max(nb)
    }
}

/// Per-tensor relative error between analytic gradients and central
/// differences of the loss.
pub fn gradient_errors(config: &ModelConfig, seed: u64) -> Vec<(String, f64)> {
    let params = Parameters::init(config, seed).unwrap();
    let rows = fd_batch(config.vocab_size);
    assert!(rows.iter().any(|r| r.global_mask.iter().any(|&g| g)));
    let analytic = loss_and_gradients(&params, &rows).unwrap().gradients;
    let mut exact = Vec::new();
    analytic.for_each(|name, _, data| exact.push((name.to_string(), data.to_vec())));
    let loss = |p: &Parameters| loss_and_gradients(p, &rows).unwrap().loss;
    exact
        .iter()
        .enumerate()
        .map(|(t, (name, grad))| {
            let numeric: Vec<f64> = (0..grad.len())
                .map(|k| {
                    let mut plus = params.clone();
                    plus.slices_mut()[t][k] += FD_STEP;
                    let mut minus = params.clone();
                    minus.slices_mut()[t][k] -= FD_STEP;
                    (loss(&plus) - loss(&minus)) / (2.0 * FD_STEP)
                })
                .collect();
            (name.clone(), relative_error(grad, &numeric))
        })
        .collect()
}
