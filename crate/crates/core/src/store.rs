//! On-disk layouts for trees, tokenized shards, annotations and vocabularies.
//!
//! Tree directories hold `*.json`/`*.jsonl` files in the TREE format (one
//! document per line) and `*.txt` files in the TEXT format. Tokenized shards
//! are JSON lines whose first line is a version header:
//!
//! ```text
//! {"format":"structmask-tokens","version":1}
//! {"doc_id":"a","ids":[7,9],"roles":"HB","char_lens":[4,3]}
//! ```

use crate::corpus::{KeywordAnnotation, Role, TokenizedDoc, Vocabulary};
use crate::latex::{decode_documents, encode_document, DocumentTree, Format, FormatError};
use serde::{Deserialize, Serialize};
use std::collections::HashSet;
use std::io::Write;
use std::path::{Path, PathBuf};
use thiserror::Error;

pub const TOKENS_FORMAT: &str = "structmask-tokens";
pub const TOKENS_VERSION: u32 = 1;
pub const DEFAULT_DOCS_PER_SHARD: usize = 10;

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {source}")]
    Format { path: PathBuf, source: FormatError },
    #[error("{path}:{line}: {message}")]
    Malformed { path: PathBuf, line: usize, message: String },
    #[error("duplicate document id {0:?}")]
    DuplicateDocument(String),
    #[error("{0}: no documents found")]
    Empty(PathBuf),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> StoreError + '_ {
    move |source| StoreError::Io { path: path.to_path_buf(), source }
}

/// Writes through a temporary file in the destination directory, so readers
/// never observe a partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    std::fs::create_dir_all(dir)?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| e.error)?;
    Ok(())
}

fn write(path: &Path, bytes: &[u8]) -> Result<(), StoreError> {
    write_atomic(path, bytes).map_err(io_err(path))
}

fn read(path: &Path) -> Result<Vec<u8>, StoreError> {
    std::fs::read(path).map_err(io_err(path))
}

fn listing(dir: &Path) -> Result<Vec<PathBuf>, StoreError> {
    let mut paths = Vec::new();
    for entry in std::fs::read_dir(dir).map_err(io_err(dir))? {
        let entry = entry.map_err(io_err(dir))?;
        if entry.file_type().map_err(io_err(dir))?.is_file() {
            paths.push(entry.path());
        }
    }
    paths.sort();
    Ok(paths)
}

fn tree_format(path: &Path) -> Option<Format> {
    match path.extension()?.to_str()? {
        "json" | "jsonl" => Some(Format::Tree),
        "txt" => Some(Format::Text),
        _ => None,
    }
}

/// Reads every tree file in `path` (or the single file `path`), sorted by
/// document id.
pub fn read_trees(path: &Path) -> Result<Vec<DocumentTree>, StoreError> {
    let files = if path.is_dir() { listing(path)? } else { vec![path.to_path_buf()] };
    let mut trees = Vec::new();
    for file in files {
        let Some(format) = tree_format(&file) else { continue };
        let data = read(&file)?;
        let docs = decode_documents(&data, format).map_err(|source| StoreError::Format { path: file.clone(), source })?;
        trees.extend(docs);
    }
    if trees.is_empty() {
        return Err(StoreError::Empty(path.to_path_buf()));
    }
    trees.sort_by(|a, b| a.doc_id.cmp(&b.doc_id));
    let mut seen = HashSet::new();
    for t in &trees {
        if !seen.insert(t.doc_id.as_str()) {
            return Err(StoreError::DuplicateDocument(t.doc_id.clone()));
        }
    }
    Ok(trees)
}

/// Writes `shard-00000.<ext>`, `shard-00001.<ext>`, ... with `per_shard`
/// documents each. Returns the written paths.
pub fn write_tree_shards(
    dir: &Path,
    trees: &[DocumentTree],
    format: Format,
    per_shard: usize,
) -> Result<Vec<PathBuf>, StoreError> {
    std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    let ext = match format {
        Format::Tree => "jsonl",
        Format::Text => "txt",
    };
    let mut paths = Vec::new();
    for (k, group) in trees.chunks(per_shard.max(1)).enumerate() {
        let path = dir.join(format!("shard-{k:05}.{ext}"));
        let mut bytes = Vec::new();
        for tree in group {
            bytes.extend(encode_document(tree, format));
        }
        write(&path, &bytes)?;
        paths.push(path);
    }
    Ok(paths)
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TokensHeader {
    format: String,
    version: u32,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TokensRecord {
    doc_id: String,
    ids: Vec<u32>,
    roles: String,
    char_lens: Vec<u32>,
}

pub fn encode_tokenized(docs: &[TokenizedDoc]) -> String {
    let header = TokensHeader { format: TOKENS_FORMAT.into(), version: TOKENS_VERSION };
    let mut out = serde_json::to_string(&header).expect("header serializes");
    out.push('\n');
    for doc in docs {
        let roles = doc
            .roles
            .iter()
            .map(|r| match r {
                Role::Header => 'H',
                Role::Body => 'B',
            })
            .collect();
        let record = TokensRecord {
            doc_id: doc.doc_id.clone(),
            ids: doc.ids.clone(),
            roles,
            char_lens: doc.char_lens.clone(),
        };
        out.push_str(&serde_json::to_string(&record).expect("record serializes"));
        out.push('\n');
    }
    out
}

pub fn decode_tokenized(text: &str, path: &Path) -> Result<Vec<TokenizedDoc>, StoreError> {
    let bad = |line: usize, message: String| StoreError::Malformed { path: path.to_path_buf(), line, message };
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (_, first) = lines.next().ok_or_else(|| bad(1, "missing version header".into()))?;
    let header: TokensHeader = serde_json::from_str(first).map_err(|e| bad(1, format!("bad header: {e}")))?;
    if header.format != TOKENS_FORMAT {
        return Err(bad(1, format!("unknown format {:?}", header.format)));
    }
    if header.version != TOKENS_VERSION {
        return Err(bad(1, format!("unsupported version {} (expected {TOKENS_VERSION})", header.version)));
    }
    let mut docs = Vec::new();
    for (i, line) in lines {
        let r: TokensRecord = serde_json::from_str(line).map_err(|e| bad(i + 1, e.to_string()))?;
        let roles = r
            .roles
            .chars()
            .map(|c| match c {
                'H' => Ok(Role::Header),
                'B' => Ok(Role::Body),
                other => Err(bad(i + 1, format!("bad role {other:?}"))),
            })
            .collect::<Result<Vec<_>, _>>()?;
        if roles.len() != r.ids.len() || r.char_lens.len() != r.ids.len() {
            return Err(bad(i + 1, "ids, roles and char_lens differ in length".into()));
        }
        docs.push(TokenizedDoc { doc_id: r.doc_id, ids: r.ids, roles, char_lens: r.char_lens });
    }
    Ok(docs)
}

pub fn write_tokenized(path: &Path, docs: &[TokenizedDoc]) -> Result<(), StoreError> {
    write(path, encode_tokenized(docs).as_bytes())
}

/// Reads one token shard, or every `*.jsonl` shard of a directory in name order.
pub fn read_tokenized(path: &Path) -> Result<Vec<TokenizedDoc>, StoreError> {
    let files = if path.is_dir() {
        listing(path)?
            .into_iter()
            .filter(|p| p.extension().is_some_and(|e| e == "jsonl"))
            .collect()
    } else {
        vec![path.to_path_buf()]
    };
    let mut docs = Vec::new();
    for file in files {
        let bytes = read(&file)?;
        let text = String::from_utf8(bytes).map_err(|e| StoreError::Malformed {
            path: file.clone(),
            line: 0,
            message: e.to_string(),
        })?;
        docs.extend(decode_tokenized(&text, &file)?);
    }
    if docs.is_empty() {
        return Err(StoreError::Empty(path.to_path_buf()));
    }
    Ok(docs)
}

pub fn write_annotations(path: &Path, annotations: &[KeywordAnnotation]) -> Result<(), StoreError> {
    let mut out = String::new();
    for a in annotations {
        out.push_str(&serde_json::to_string(a).expect("annotation serializes"));
        out.push('\n');
    }
    write(path, out.as_bytes())
}

pub fn read_annotations(path: &Path) -> Result<Vec<KeywordAnnotation>, StoreError> {
    let bytes = read(path)?;
    let text = String::from_utf8_lossy(&bytes);
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| StoreError::Malformed {
                path: path.to_path_buf(),
                line: i + 1,
                message: e.to_string(),
            })
        })
        .collect()
}

pub fn write_vocab(path: &Path, vocab: &Vocabulary) -> Result<(), StoreError> {
    write(path, vocab.to_file_string().as_bytes())
}

pub fn read_vocab(path: &Path) -> Result<Vocabulary, StoreError> {
    let bytes = read(path)?;
    Vocabulary::from_file_str(&String::from_utf8_lossy(&bytes)).map_err(|e| StoreError::Malformed {
        path: path.to_path_buf(),
        line: 0,
        message: e.to_string(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::latex::{DocNode, NodeKind, StyledWord};

    fn tree(id: &str) -> DocumentTree {
        let mut root = DocNode::new(NodeKind::Title);
        root.heading.push(StyledWord::plain("t"));
        let mut p = DocNode::new(NodeKind::Paragraph);
        p.body.push(StyledWord::plain("w"));
        root.children.push(p);
        DocumentTree { doc_id: id.into(), root }
    }

    #[test]
    fn tokenized_round_trip() {
        let docs = vec![TokenizedDoc {
            doc_id: "x".into(),
            ids: vec![5, 6, 7],
            roles: vec![Role::Header, Role::Body, Role::Body],
            char_lens: vec![1, 2, 3],
        }];
        let text = encode_tokenized(&docs);
        assert!(text.starts_with("{\"format\":\"structmask-tokens\",\"version\":1}\n"));
        assert_eq!(decode_tokenized(&text, Path::new("t")).unwrap(), docs);
    }

    #[test]
    fn tokenized_rejects_wrong_version() {
        let text = "{\"format\":\"structmask-tokens\",\"version\":2}\n";
        assert!(matches!(decode_tokenized(text, Path::new("t")), Err(StoreError::Malformed { line: 1, .. })));
    }

    #[test]
    fn shards_read_back_sorted() {
        let dir = tempfile::tempdir().unwrap();
        let trees = vec![tree("c"), tree("a"), tree("b")];
        let paths = write_tree_shards(dir.path(), &trees, Format::Tree, 2).unwrap();
        assert_eq!(paths.len(), 2);
        let back = read_trees(dir.path()).unwrap();
        let ids: Vec<_> = back.iter().map(|t| t.doc_id.as_str()).collect();
        assert_eq!(ids, ["a", "b", "c"]);
    }

    #[test]
    fn duplicate_ids_rejected() {
        let dir = tempfile::tempdir().unwrap();
        write_tree_shards(dir.path(), &[tree("a")], Format::Text, 1).unwrap();
        write_tree_shards(&dir.path().join("x"), &[tree("a")], Format::Tree, 1).unwrap();
        std::fs::copy(dir.path().join("x/shard-00000.jsonl"), dir.path().join("dup.jsonl")).unwrap();
        assert!(matches!(read_trees(dir.path()), Err(StoreError::DuplicateDocument(_))));
    }

    #[test]
    fn atomic_write_replaces() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("f");
        write_atomic(&p, b"one").unwrap();
        write_atomic(&p, b"two").unwrap();
        assert_eq!(std::fs::read(&p).unwrap(), b"two");
        assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 1);
    }
}
