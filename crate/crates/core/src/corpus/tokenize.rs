use super::Tokenizer;
use crate::latex::DocumentTree;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Role {
    Header,
    Body,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenizedDoc {
    pub doc_id: String,
    pub ids: Vec<u32>,
    pub roles: Vec<Role>,
    pub char_lens: Vec<u32>,
}

impl TokenizedDoc {
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    /// 1 for header tokens, 0 otherwise.
    pub fn header_mask(&self) -> Vec<bool> {
        self.roles.iter().map(|&r| r == Role::Header).collect()
    }

    pub fn slice(&self, start: usize, end: usize, doc_id: String) -> TokenizedDoc {
        TokenizedDoc {
            doc_id,
            ids: self.ids[start..end].to_vec(),
            roles: self.roles[start..end].to_vec(),
            char_lens: self.char_lens[start..end].to_vec(),
        }
    }
}

/// Depth-first flattening: each node's heading words (HEADER), then its body
/// words (BODY), then its children.
pub fn tokenize_tree(tree: &DocumentTree, tokenizer: &impl Tokenizer) -> TokenizedDoc {
    let mut doc = TokenizedDoc {
        doc_id: tree.doc_id.clone(),
        ids: Vec::new(),
        roles: Vec::new(),
        char_lens: Vec::new(),
    };
    tree.root.walk(0, &mut |node, _| {
        let words = node
            .heading
            .iter()
            .map(|w| (w, Role::Header))
            .chain(node.body.iter().map(|w| (w, Role::Body)));
        for (word, role) in words {
            for (id, chars) in tokenizer.encode_word(&word.text) {
                doc.ids.push(id);
                doc.roles.push(role);
                doc.char_lens.push(chars);
            }
        }
    });
    doc
}

/// Keeps documents with `min_tokens <= len <= max_tokens`, in order.
pub fn filter_by_length(
    docs: Vec<TokenizedDoc>,
    min_tokens: usize,
    max_tokens: usize,
) -> Vec<TokenizedDoc> {
    docs.into_iter()
        .filter(|d| (min_tokens..=max_tokens).contains(&d.len()))
        .collect()
}

/// Positions where a heading run begins; these mark node boundaries.
pub fn section_starts(roles: &[Role]) -> Vec<usize> {
    (0..roles.len())
        .filter(|&i| roles[i] == Role::Header && (i == 0 || roles[i - 1] == Role::Body))
        .collect()
}

/// Splits a document into contiguous chunks of at most `max_len` tokens,
/// cutting at the last heading boundary that fits when there is one.
///
/// Returns `(start offset, chunk)` pairs; chunk ids are `<doc_id>#<k>`, or the
/// original id when the document fits in one chunk.
pub fn chunk_document(doc: &TokenizedDoc, max_len: usize) -> Vec<(usize, TokenizedDoc)> {
    assert!(max_len > 0, "chunk length must be positive");
    if doc.len() <= max_len {
        return vec![(0, doc.clone())];
    }
    let boundaries = section_starts(&doc.roles);
    let mut chunks = Vec::new();
    let mut start = 0;
    while start < doc.len() {
        let hard = (start + max_len).min(doc.len());
        let end = if hard == doc.len() {
            hard
        } else {
            boundaries
                .iter()
                .rev()
                .copied()
                .find(|&b| b > start && b <= hard)
                .unwrap_or(hard)
        };
        let id = format!("{}#{}", doc.doc_id, chunks.len());
        chunks.push((start, doc.slice(start, end, id)));
        start = end;
    }
    chunks
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{Vocabulary, UNK};
    use crate::latex::{DocNode, NodeKind, StyledWord};

    fn words(ws: &[&str]) -> Vec<StyledWord> {
        ws.iter().map(|w| StyledWord::plain(*w)).collect()
    }

    fn vocab() -> Vocabulary {
        Vocabulary::from_words(["s", "x", "y", "t", "z"]).unwrap()
    }

    #[test]
    fn heading_then_body() {
        let mut root = DocNode::new(NodeKind::Title);
        root.heading = words(&["S"]);
        root.body = words(&["x", "y"]);
        let tree = DocumentTree { doc_id: "d".into(), root };
        let doc = tokenize_tree(&tree, &vocab());
        assert_eq!(doc.ids, vec![5, 6, 7]);
        assert_eq!(doc.roles, vec![Role::Header, Role::Body, Role::Body]);
        assert_eq!(doc.char_lens, vec![1, 1, 1]);
    }

    #[test]
    fn nested_section_order() {
        let mut root = DocNode::new(NodeKind::Title);
        root.heading = words(&["S"]);
        let mut section = DocNode::new(NodeKind::Section);
        section.heading = words(&["T"]);
        let mut para = DocNode::new(NodeKind::Paragraph);
        para.body = words(&["z"]);
        section.children.push(para);
        root.children.push(section);
        let doc = tokenize_tree(&DocumentTree { doc_id: "d".into(), root }, &vocab());
        assert_eq!(doc.ids, vec![5, 8, 9]);
        assert_eq!(doc.roles, vec![Role::Header, Role::Header, Role::Body]);
    }

    #[test]
    fn oov_keeps_char_len() {
        let mut root = DocNode::new(NodeKind::Title);
        root.body = words(&["unknown"]);
        let doc = tokenize_tree(&DocumentTree { doc_id: "d".into(), root }, &vocab());
        assert_eq!(doc.ids, vec![UNK]);
        assert_eq!(doc.char_lens, vec![7]);
    }

    fn doc_of_len(n: usize) -> TokenizedDoc {
        TokenizedDoc {
            doc_id: format!("d{n}"),
            ids: vec![5; n],
            roles: vec![Role::Body; n],
            char_lens: vec![1; n],
        }
    }

    #[test]
    fn length_filter() {
        let docs = vec![doc_of_len(5), doc_of_len(50), doc_of_len(500)];
        let kept = filter_by_length(docs.clone(), 10, 100);
        assert_eq!(kept, vec![doc_of_len(50)]);
        assert_eq!(filter_by_length(docs.clone(), 0, usize::MAX), docs);
    }

    #[test]
    fn chunks_cut_at_headings() {
        use Role::{Body as B, Header as H};
        let roles = vec![H, B, B, B, H, B, B, H, B, B, B, B];
        let doc = TokenizedDoc {
            doc_id: "d".into(),
            ids: (0..12).collect(),
            roles,
            char_lens: vec![1; 12],
        };
        let chunks = chunk_document(&doc, 6);
        let spans: Vec<(usize, usize)> = chunks.iter().map(|(s, c)| (*s, c.len())).collect();
        assert_eq!(spans, vec![(0, 4), (4, 3), (7, 5)]);
        assert_eq!(chunks[1].1.doc_id, "d#1");
        assert_eq!(chunks[1].1.roles[0], H);

        let plain = doc_of_len(10);
        let spans: Vec<usize> = chunk_document(&plain, 4).iter().map(|c| c.0).collect();
        assert_eq!(spans, vec![0, 4, 8]);
        assert_eq!(chunk_document(&plain, 10)[0].1.doc_id, "d10");
    }
}
