//! TEXT and TREE serializations of [`DocumentTree`].
//!
//! TEXT is line oriented, one document framed by `DOC <id>` / `END`:
//!
//! ```text
//! DOC d1
//! NODE 0 0 1 0
//! W A 0 0 0
//! END
//! ```
//!
//! Each `NODE <depth> <kind-code> <n-heading> <n-body>` line is followed by its
//! heading words then its body words, one `W <text> <b> <i> <u>` line each,
//! nodes in depth-first pre-order.
//!
//! TREE is one JSON object per line:
//! `{"doc_id":..,"kinds":[..],"tree":{"title":[..],"content":[..],"sub-levels":[..]}}`.
//! Every node record has exactly the keys `title`, `content` and `sub-levels`;
//! words are `[text, b, i, u]` with 0/1 flags. `kinds` lists the kind code of
//! every node in pre-order so that the node records stay three-keyed.

use super::{DocNode, DocumentTree, NodeKind, StyledWord};
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Text,
    Tree,
}

impl Format {
    pub fn extension(self) -> &'static str {
        match self {
            Format::Text => "txt",
            Format::Tree => "json",
        }
    }
}

impl std::str::FromStr for Format {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "text" => Ok(Format::Text),
            "tree" => Ok(Format::Tree),
            other => Err(format!("unknown format `{other}` (expected text or tree)")),
        }
    }
}

/// Grammar violation, located by 1-based line and byte offset into the input.
#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("format error at line {line} (byte {offset}): {message}")]
pub struct FormatError {
    pub line: usize,
    pub offset: usize,
    pub message: String,
}

pub fn encode_document(tree: &DocumentTree, format: Format) -> Vec<u8> {
    match format {
        Format::Text => encode_text(tree).into_bytes(),
        Format::Tree => {
            let mut kinds = Vec::new();
            tree.root.walk(0, &mut |node, _| kinds.push(node.kind.code()));
            let record = DocRecord {
                doc_id: tree.doc_id.clone(),
                kinds,
                tree: NodeRecord::from_node(&tree.root),
            };
            let mut out = serde_json::to_vec(&record).expect("plain data serializes");
            out.push(b'\n');
            out
        }
    }
}

/// Decodes exactly one document.
pub fn decode_document(data: &[u8], format: Format) -> Result<DocumentTree, FormatError> {
    let mut docs = decode_documents(data, format)?;
    match docs.len() {
        1 => Ok(docs.pop().expect("one")),
        n => Err(FormatError {
            line: 1,
            offset: 0,
            message: format!("expected exactly one document, found {n}"),
        }),
    }
}

/// Decodes a stream of concatenated documents (a shard).
pub fn decode_documents(data: &[u8], format: Format) -> Result<Vec<DocumentTree>, FormatError> {
    let text = std::str::from_utf8(data).map_err(|e| FormatError {
        line: 1 + data[..e.valid_up_to()].iter().filter(|&&b| b == b'\n').count(),
        offset: e.valid_up_to(),
        message: "invalid UTF-8".into(),
    })?;
    match format {
        Format::Text => TextDecoder::new(text).decode_all(),
        Format::Tree => decode_tree_lines(text),
    }
}

fn encode_text(tree: &DocumentTree) -> String {
    let mut out = String::new();
    writeln!(out, "DOC {}", tree.doc_id).unwrap();
    tree.root.walk(0, &mut |node, depth| {
        writeln!(
            out,
            "NODE {} {} {} {}",
            depth,
            node.kind.code(),
            node.heading.len(),
            node.body.len()
        )
        .unwrap();
        for word in node.heading.iter().chain(&node.body) {
            writeln!(
                out,
                "W {} {} {} {}",
                word.text,
                u8::from(word.bold),
                u8::from(word.italic),
                u8::from(word.underline)
            )
            .unwrap();
        }
    });
    out.push_str("END\n");
    out
}

struct TextDecoder<'a> {
    lines: Vec<(usize, &'a str)>,
    next: usize,
    total: usize,
}

impl<'a> TextDecoder<'a> {
    fn new(text: &'a str) -> Self {
        let mut lines = Vec::new();
        let mut offset = 0;
        for line in text.split_inclusive('\n') {
            lines.push((offset, line.strip_suffix('\n').unwrap_or(line)));
            offset += line.len();
        }
        Self {
            lines,
            next: 0,
            total: text.len(),
        }
    }

    fn error(&self, index: usize, message: impl Into<String>) -> FormatError {
        FormatError {
            line: index + 1,
            offset: self.lines.get(index).map_or(self.total, |l| l.0),
            message: message.into(),
        }
    }

    fn take(&mut self, what: &str) -> Result<(usize, &'a str), FormatError> {
        let index = self.next;
        let line = self
            .lines
            .get(index)
            .ok_or_else(|| self.error(index, format!("unexpected end of input, expected {what}")))?;
        self.next += 1;
        Ok((index, line.1))
    }

    fn decode_all(mut self) -> Result<Vec<DocumentTree>, FormatError> {
        let mut docs = Vec::new();
        while self.next < self.lines.len() {
            docs.push(self.decode_one()?);
        }
        Ok(docs)
    }

    fn decode_one(&mut self) -> Result<DocumentTree, FormatError> {
        let (index, line) = self.take("DOC line")?;
        let doc_id = line
            .strip_prefix("DOC ")
            .filter(|id| !id.is_empty() && !id.contains(char::is_whitespace))
            .ok_or_else(|| self.error(index, "expected `DOC <id>`"))?
            .to_string();

        // Open ancestors; stack[d] is the open node at depth d.
        let mut stack: Vec<DocNode> = Vec::new();
        let mut seen_root = false;
        loop {
            let (index, line) = self.take("NODE or END")?;
            if line == "END" {
                break;
            }
            let fields: Vec<&str> = line.split(' ').collect();
            if fields.len() != 5 || fields[0] != "NODE" {
                return Err(self.error(index, "expected `NODE <depth> <kind> <n-heading> <n-body>`"));
            }
            let nums: Vec<usize> = fields[1..]
                .iter()
                .map(|f| parse_decimal(f))
                .collect::<Option<_>>()
                .ok_or_else(|| self.error(index, "non-numeric NODE field"))?;
            let (depth, code, n_heading, n_body) = (nums[0], nums[1], nums[2], nums[3]);
            let kind = u8::try_from(code)
                .ok()
                .and_then(NodeKind::from_code)
                .ok_or_else(|| self.error(index, format!("unknown kind-code {code}")))?;
            if depth == 0 && seen_root {
                return Err(self.error(index, "second root node"));
            }
            if depth > stack.len() || (!seen_root && depth != 0) {
                return Err(self.error(index, format!("depth {depth} does not follow the previous node")));
            }
            if depth == 0 && kind != NodeKind::Title {
                return Err(self.error(index, "root node must be TITLE"));
            }
            while stack.len() > depth {
                let done = stack.pop().expect("non-empty");
                stack.last_mut().expect("depth >= 1").children.push(done);
            }
            if depth > 0 {
                let parent = stack.last().expect("depth >= 1").kind;
                if kind.rank() <= parent.rank() {
                    return Err(self.error(index, format!("{kind:?} cannot nest inside {parent:?}")));
                }
            }
            seen_root = true;
            let mut node = DocNode::new(kind);
            node.heading = self.words(n_heading)?;
            node.body = self.words(n_body)?;
            stack.push(node);
        }
        if stack.is_empty() {
            return Err(self.error(self.next - 1, "document has no root node"));
        }
        while stack.len() > 1 {
            let done = stack.pop().expect("non-empty");
            stack.last_mut().expect("root").children.push(done);
        }
        Ok(DocumentTree {
            doc_id,
            root: stack.pop().expect("root"),
        })
    }

    fn words(&mut self, n: usize) -> Result<Vec<StyledWord>, FormatError> {
        (0..n)
            .map(|_| {
                let (index, line) = self.take("word line")?;
                let fields: Vec<&str> = line.split(' ').collect();
                if fields.len() != 5 || fields[0] != "W" {
                    return Err(self.error(index, "expected `W <text> <b> <i> <u>`"));
                }
                let flag = |f: &str| match f {
                    "0" => Some(false),
                    "1" => Some(true),
                    _ => None,
                };
                let (Some(bold), Some(italic), Some(underline)) =
                    (flag(fields[2]), flag(fields[3]), flag(fields[4]))
                else {
                    return Err(self.error(index, "word flags must be 0 or 1"));
                };
                let word = StyledWord {
                    text: fields[1].to_string(),
                    bold,
                    italic,
                    underline,
                };
                if !word.is_valid() {
                    return Err(self.error(index, "invalid word text"));
                }
                Ok(word)
            })
            .collect()
    }
}

/// Strict unsigned decimal: no sign, no leading zeros except `0` itself.
fn parse_decimal(field: &str) -> Option<usize> {
    if field.is_empty() || !field.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    if field.len() > 1 && field.starts_with('0') {
        return None;
    }
    field.parse().ok()
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DocRecord {
    doc_id: String,
    kinds: Vec<u8>,
    tree: NodeRecord,
}

type WordRecord = (String, u8, u8, u8);

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct NodeRecord {
    title: Vec<WordRecord>,
    content: Vec<WordRecord>,
    #[serde(rename = "sub-levels")]
    sub_levels: Vec<NodeRecord>,
}

impl NodeRecord {
    fn from_node(node: &DocNode) -> Self {
        let words = |ws: &[StyledWord]| {
            ws.iter()
                .map(|w| {
                    (
                        w.text.clone(),
                        u8::from(w.bold),
                        u8::from(w.italic),
                        u8::from(w.underline),
                    )
                })
                .collect()
        };
        Self {
            title: words(&node.heading),
            content: words(&node.body),
            sub_levels: node.children.iter().map(Self::from_node).collect(),
        }
    }

    fn into_node(self, kinds: &mut std::slice::Iter<'_, u8>) -> Result<DocNode, String> {
        let code = *kinds.next().ok_or("fewer kinds than nodes")?;
        let kind = NodeKind::from_code(code).ok_or(format!("unknown kind-code {code}"))?;
        let words = |ws: Vec<WordRecord>| {
            ws.into_iter()
                .map(|(text, b, i, u)| {
                    if b > 1 || i > 1 || u > 1 {
                        return Err(format!("word {text:?} has a flag outside 0/1"));
                    }
                    Ok(StyledWord {
                        text,
                        bold: b == 1,
                        italic: i == 1,
                        underline: u == 1,
                    })
                })
                .collect::<Result<Vec<_>, String>>()
        };
        let mut node = DocNode::new(kind);
        node.heading = words(self.title)?;
        node.body = words(self.content)?;
        for child in self.sub_levels {
            node.children.push(child.into_node(kinds)?);
        }
        Ok(node)
    }
}

fn decode_tree_lines(text: &str) -> Result<Vec<DocumentTree>, FormatError> {
    let mut docs = Vec::new();
    let mut offset = 0;
    for (index, raw) in text.split_inclusive('\n').enumerate() {
        let line_offset = offset;
        offset += raw.len();
        let line = raw.trim_end_matches(['\n', '\r']);
        if line.trim().is_empty() {
            continue;
        }
        let err = |message: String| FormatError {
            line: index + 1,
            offset: line_offset,
            message,
        };
        let record: DocRecord = serde_json::from_str(line).map_err(|e| FormatError {
            line: index + 1,
            offset: line_offset + e.column().saturating_sub(1),
            message: e.to_string(),
        })?;
        let mut kinds = record.kinds.iter();
        let root = record.tree.into_node(&mut kinds).map_err(err)?;
        if kinds.next().is_some() {
            return Err(err("more kinds than nodes".into()));
        }
        let tree = DocumentTree {
            doc_id: record.doc_id,
            root,
        };
        tree.validate().map_err(err)?;
        docs.push(tree);
    }
    Ok(docs)
}
