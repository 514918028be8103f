//! LaTeX structure extraction.
//!
//! Sources are first cleaned with [`strip_noise`] (comments, floats, display
//! and inline math), then parsed by [`extract_tree`] into a [`DocumentTree`]
//! whose nodes follow the sectioning hierarchy. Trees serialize to a
//! line-oriented TEXT format and a nested-record TREE format.

mod extract;
mod format;
mod stats;
mod strip;

pub use extract::{extract_document, extract_tree, ExtractError};
pub use format::{decode_document, decode_documents, encode_document, Format, FormatError};
pub use stats::{corpus_stats, CorpusStats, MetricStats, StatsError};
pub use strip::{strip_noise, strip_noise_with_warnings, StripWarning};

use serde::{Deserialize, Serialize};

/// A single word of running text with its style flags.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct StyledWord {
    pub text: String,
    pub bold: bool,
    pub italic: bool,
    pub underline: bool,
}

impl StyledWord {
    pub fn plain(text: impl Into<String>) -> Self {
        Self::styled(text, Style::default())
    }

    pub fn styled(text: impl Into<String>, style: Style) -> Self {
        Self {
            text: text.into(),
            bold: style.bold,
            italic: style.italic,
            underline: style.underline,
        }
    }

    /// True when the text is non-empty, whitespace-free and backslash-free.
    pub fn is_valid(&self) -> bool {
        !self.text.is_empty() && !self.text.chars().any(|c| c.is_whitespace() || c == '\\')
    }
}

/// Composable text style; nesting `\textbf{\emph{..}}` ORs the flags.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash)]
pub struct Style {
    pub bold: bool,
    pub italic: bool,
    pub underline: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum NodeKind {
    Title,
    Abstract,
    Section,
    Subsection,
    Subsubsection,
    Paragraph,
}

impl NodeKind {
    pub const ALL: [NodeKind; 6] = [
        NodeKind::Title,
        NodeKind::Abstract,
        NodeKind::Section,
        NodeKind::Subsection,
        NodeKind::Subsubsection,
        NodeKind::Paragraph,
    ];

    /// Numeric code used by the TEXT format.
    pub fn code(self) -> u8 {
        match self {
            NodeKind::Title => 0,
            NodeKind::Abstract => 1,
            NodeKind::Section => 2,
            NodeKind::Subsection => 3,
            NodeKind::Subsubsection => 4,
            NodeKind::Paragraph => 5,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        Self::ALL.get(code as usize).copied()
    }

    /// Nesting rank; a child must have a strictly larger rank than its parent.
    pub fn rank(self) -> u8 {
        match self {
            NodeKind::Title => 0,
            NodeKind::Abstract | NodeKind::Section => 1,
            NodeKind::Subsection => 2,
            NodeKind::Subsubsection => 3,
            NodeKind::Paragraph => 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DocNode {
    pub kind: NodeKind,
    pub heading: Vec<StyledWord>,
    pub body: Vec<StyledWord>,
    pub children: Vec<DocNode>,
}

impl DocNode {
    pub fn new(kind: NodeKind) -> Self {
        Self {
            kind,
            heading: Vec::new(),
            body: Vec::new(),
            children: Vec::new(),
        }
    }

    /// Depth-first pre-order walk, passing each node with its depth.
    pub fn walk<'a>(&'a self, depth: usize, f: &mut impl FnMut(&'a DocNode, usize)) {
        f(self, depth);
        for child in &self.children {
            child.walk(depth + 1, f);
        }
    }

    pub fn word_count(&self) -> usize {
        let mut n = 0;
        self.walk(0, &mut |node, _| n += node.heading.len() + node.body.len());
        n
    }

    pub fn header_count(&self) -> usize {
        let mut n = 0;
        self.walk(0, &mut |node, _| n += usize::from(!node.heading.is_empty()));
        n
    }

    /// Checks the nesting and word invariants for this subtree.
    pub fn validate(&self) -> Result<(), String> {
        for word in self.heading.iter().chain(&self.body) {
            if !word.is_valid() {
                return Err(format!("invalid word {:?}", word.text));
            }
        }
        for child in &self.children {
            if child.kind.rank() <= self.kind.rank() {
                return Err(format!("{:?} cannot nest inside {:?}", child.kind, self.kind));
            }
            child.validate()?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DocumentTree {
    pub doc_id: String,
    pub root: DocNode,
}

impl DocumentTree {
    pub fn validate(&self) -> Result<(), String> {
        if self.doc_id.is_empty() || self.doc_id.chars().any(char::is_whitespace) {
            return Err(format!("invalid doc_id {:?}", self.doc_id));
        }
        if self.root.kind != NodeKind::Title {
            return Err("root must be a TITLE node".into());
        }
        self.root.validate()
    }
}
