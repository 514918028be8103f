//! Synthetic corpus whose body text is correlated with section headings.
//!
//! Every section heading is a single topic word. Each body word is drawn from
//! that topic's keyword pool with probability `correlation`, otherwise from a
//! shared background pool. Keyword positions are kept as ground truth.

use super::{CorpusError, KeywordAnnotation};
use crate::latex::{DocNode, DocumentTree, NodeKind, StyledWord};
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticConfig {
    pub n_docs: usize,
    pub n_topics: usize,
    /// Body words per document, spread evenly over its sections.
    pub words_per_doc: usize,
    pub correlation: f64,
    pub seed: u64,
    pub sections_per_doc: usize,
    pub keywords_per_topic: usize,
    pub background_size: usize,
}

impl SyntheticConfig {
    pub fn new(n_docs: usize, n_topics: usize, words_per_doc: usize, correlation: f64, seed: u64) -> Self {
        Self {
            n_docs,
            n_topics,
            words_per_doc,
            correlation,
            seed,
            sections_per_doc: 2,
            keywords_per_topic: 5,
            background_size: 15,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticCorpus {
    pub trees: Vec<DocumentTree>,
    /// One record per section, positions in flattened token order.
    pub annotations: Vec<KeywordAnnotation>,
    pub topic_names: Vec<String>,
    pub keyword_pools: Vec<Vec<String>>,
    pub background: Vec<String>,
}

const CONSONANTS: &[u8] = b"bdfgklmnprstvz";
const VOWELS: &[u8] = b"aeiou";

/// A pronounceable word unique to `index`, at least `syllables` syllables.
fn pseudo_word(mut index: usize, syllables: usize) -> String {
    let base = CONSONANTS.len() * VOWELS.len();
    let mut out = String::new();
    for _ in 0..syllables {
        let s = index % base;
        index /= base;
        out.push(CONSONANTS[s / VOWELS.len()] as char);
        out.push(VOWELS[s % VOWELS.len()] as char);
    }
    while index > 0 {
        let s = index % base;
        index /= base;
        out.push(CONSONANTS[s / VOWELS.len()] as char);
        out.push(VOWELS[s % VOWELS.len()] as char);
    }
    out
}

pub fn generate_synthetic_corpus(config: &SyntheticConfig) -> Result<SyntheticCorpus, CorpusError> {
    if !(0.0..=1.0).contains(&config.correlation) {
        return Err(CorpusError::InvalidCorrelation(config.correlation));
    }
    if config.n_topics < 2 {
        return Err(CorpusError::TooFewTopics(config.n_topics));
    }
    let mut next = 0usize;
    let mut fresh = |syllables| {
        next += 1;
        pseudo_word(next - 1, syllables)
    };
    // Topic names use three syllables so they never collide with pool words.
    let topic_names: Vec<String> = (0..config.n_topics).map(|_| fresh(3)).collect();
    let keyword_pools: Vec<Vec<String>> = (0..config.n_topics)
        .map(|_| (0..config.keywords_per_topic).map(|_| fresh(2)).collect())
        .collect();
    let background: Vec<String> = (0..config.background_size).map(|_| fresh(2)).collect();

    let mut trees = Vec::with_capacity(config.n_docs);
    let mut annotations = Vec::new();
    for k in 0..config.n_docs {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(k as u64));
        let doc_id = format!("synth-{k:06}");
        let n_sections = config.sections_per_doc.max(1);
        let topics: Vec<usize> = if n_sections <= config.n_topics {
            sample(&mut rng, config.n_topics, n_sections).into_vec()
        } else {
            (0..n_sections).map(|_| rng.gen_range(0..config.n_topics)).collect()
        };
        let mut root = DocNode::new(NodeKind::Title);
        let mut position = 0usize;
        for (s, &topic) in topics.iter().enumerate() {
            let n_words = config.words_per_doc / n_sections
                + usize::from(s < config.words_per_doc % n_sections);
            let mut section = DocNode::new(NodeKind::Section);
            section.heading.push(StyledWord::plain(topic_names[topic].clone()));
            let header_positions = vec![position];
            position += 1;
            let mut keyword_positions = Vec::new();
            let mut para = DocNode::new(NodeKind::Paragraph);
            for _ in 0..n_words {
                let word = if rng.gen::<f64>() < config.correlation {
                    keyword_positions.push(position);
                    let pool = &keyword_pools[topic];
                    &pool[rng.gen_range(0..pool.len())]
                } else {
                    &background[rng.gen_range(0..background.len())]
                };
                para.body.push(StyledWord::plain(word.clone()));
                position += 1;
            }
            if !para.body.is_empty() {
                section.children.push(para);
            }
            root.children.push(section);
            annotations.push(KeywordAnnotation {
                doc_id: doc_id.clone(),
                header_positions,
                keyword_positions,
            });
        }
        trees.push(DocumentTree { doc_id, root });
    }
    Ok(SyntheticCorpus {
        trees,
        annotations,
        topic_names,
        keyword_pools,
        background,
    })
}
