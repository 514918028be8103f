use super::CorpusError;
use crate::latex::DocumentTree;
use std::collections::HashMap;

pub const PAD: u32 = 0;
pub const UNK: u32 = 1;
pub const MASK: u32 = 2;
pub const CLS: u32 = 3;
pub const SEP: u32 = 4;
pub const RESERVED: [&str; 5] = ["[PAD]", "[UNK]", "[MASK]", "[CLS]", "[SEP]"];

/// Maps a source word to token ids, each paired with the number of source
/// characters it covers.
pub trait Tokenizer {
    fn encode_word(&self, word: &str) -> Vec<(u32, u32)>;
    fn vocab_size(&self) -> usize;
    fn token(&self, id: u32) -> Option<&str>;
}

/// Word-level vocabulary over lowercased words.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, u32>,
}

impl Vocabulary {
    pub fn from_words<I, S>(words: I) -> Result<Self, CorpusError>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut tokens: Vec<String> = RESERVED.iter().map(|s| s.to_string()).collect();
        let mut index: HashMap<String, u32> =
            tokens.iter().enumerate().map(|(i, t)| (t.clone(), i as u32)).collect();
        for word in words {
            let word = word.into();
            if word.is_empty() || word.contains(char::is_whitespace) || index.contains_key(&word) {
                return Err(CorpusError::BadVocabFile(format!("bad or duplicate token {word:?}")));
            }
            index.insert(word.clone(), tokens.len() as u32);
            tokens.push(word);
        }
        Ok(Self { tokens, index })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn id(&self, word: &str) -> u32 {
        self.index.get(&word.to_lowercase()).copied().unwrap_or(UNK)
    }

    /// Non-reserved tokens in id order.
    pub fn words(&self) -> &[String] {
        &self.tokens[RESERVED.len()..]
    }

    /// Vocabulary file: the reserved tokens on the first five lines, then one
    /// token per line so that line `k` (0-based, after the header) is id `k + 5`.
    pub fn to_file_string(&self) -> String {
        let mut out = String::new();
        for token in &self.tokens {
            out.push_str(token);
            out.push('\n');
        }
        out
    }

    pub fn from_file_str(text: &str) -> Result<Self, CorpusError> {
        let mut lines = text.lines();
        for expected in RESERVED {
            match lines.next() {
                Some(line) if line == expected => {}
                other => {
                    return Err(CorpusError::BadVocabFile(format!(
                        "expected reserved token {expected}, found {other:?}"
                    )))
                }
            }
        }
        Self::from_words(lines.map(str::to_string))
    }
}

impl Tokenizer for Vocabulary {
    fn encode_word(&self, word: &str) -> Vec<(u32, u32)> {
        vec![(self.id(word), word.chars().count() as u32)]
    }

    fn vocab_size(&self) -> usize {
        self.len()
    }

    fn token(&self, id: u32) -> Option<&str> {
        self.tokens.get(id as usize).map(String::as_str)
    }
}

/// Keeps the `max_size - 5` most frequent lowercased words, ties broken
/// lexicographically.
pub fn build_vocab(corpus: &[DocumentTree], max_size: usize) -> Result<Vocabulary, CorpusError> {
    if max_size <= RESERVED.len() {
        return Err(CorpusError::VocabTooSmall(max_size));
    }
    let mut counts: HashMap<String, u64> = HashMap::new();
    for tree in corpus {
        tree.root.walk(0, &mut |node, _| {
            for word in node.heading.iter().chain(&node.body) {
                *counts.entry(word.text.to_lowercase()).or_default() += 1;
            }
        });
    }
    if counts.is_empty() {
        return Err(CorpusError::EmptyCorpus);
    }
    let mut ranked: Vec<(String, u64)> = counts
        .into_iter()
        .filter(|(w, _)| !RESERVED.contains(&w.as_str()))
        .collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    ranked.truncate(max_size - RESERVED.len());
    Vocabulary::from_words(ranked.into_iter().map(|(w, _)| w))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::latex::{DocNode, NodeKind, StyledWord};

    fn corpus(text: &str) -> Vec<DocumentTree> {
        let mut root = DocNode::new(NodeKind::Title);
        let mut para = DocNode::new(NodeKind::Paragraph);
        para.body = text.split_whitespace().map(StyledWord::plain).collect();
        root.children.push(para);
        vec![DocumentTree { doc_id: "d".into(), root }]
    }

    #[test]
    fn frequency_order() {
        let vocab = build_vocab(&corpus("a a b"), 7).unwrap();
        assert_eq!(vocab.words(), ["a", "b"]);
        assert_eq!(vocab.id("a"), 5);
        assert_eq!(vocab.id("B"), 6);
    }

    #[test]
    fn ties_break_lexicographically() {
        let vocab = build_vocab(&corpus("b a"), 10).unwrap();
        assert_eq!(vocab.words(), ["a", "b"]);
    }

    #[test]
    fn cutoff_maps_rest_to_unk() {
        let vocab = build_vocab(&corpus("a a b"), 6).unwrap();
        assert_eq!(vocab.words(), ["a"]);
        assert_eq!(vocab.id("b"), UNK);
    }

    #[test]
    fn lowercasing_merges_counts() {
        let vocab = build_vocab(&corpus("Zed zed a"), 6).unwrap();
        assert_eq!(vocab.words(), ["zed"]);
    }

    #[test]
    fn errors() {
        assert_eq!(build_vocab(&corpus("a"), 5), Err(CorpusError::VocabTooSmall(5)));
        assert_eq!(build_vocab(&[], 10), Err(CorpusError::EmptyCorpus));
    }

    #[test]
    fn file_round_trip() {
        let vocab = build_vocab(&corpus("x y y z"), 20).unwrap();
        let text = vocab.to_file_string();
        assert!(text.starts_with("[PAD]\n[UNK]\n[MASK]\n[CLS]\n[SEP]\ny\n"));
        assert_eq!(Vocabulary::from_file_str(&text).unwrap(), vocab);
        assert!(Vocabulary::from_file_str("[PAD]\n").is_err());
        assert!(Vocabulary::from_file_str(&format!("{text}y\n")).is_err());
    }
}
