//! Single-pass recursive-descent extraction of the sectioning hierarchy.

use super::{strip_noise, DocNode, DocumentTree, NodeKind, Style, StyledWord};
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ExtractError {
    #[error("document `{0}` contains no words after extraction")]
    EmptyDocument(String),
}

/// Strips noise from raw LaTeX and extracts its tree.
pub fn extract_document(raw: &str, doc_id: &str) -> Result<DocumentTree, ExtractError> {
    extract_tree(&strip_noise(raw), doc_id)
}

/// Extracts a [`DocumentTree`] from LaTeX that has already been through
/// [`strip_noise`].
///
/// When the source has a `\begin{document}`, preamble text is ignored except
/// for `\title`.
pub fn extract_tree(source: &str, doc_id: &str) -> Result<DocumentTree, ExtractError> {
    let mut parser = Parser {
        chars: source.chars().collect(),
        pos: 0,
    };
    let mut events = Vec::new();
    parser.parse_until(Style::default(), false, &mut events);

    let mut builder = TreeBuilder::new(source.contains("\\begin{document}"));
    for event in events {
        builder.handle(event);
    }
    let root = builder.finish();
    if root.word_count() == 0 {
        return Err(ExtractError::EmptyDocument(doc_id.to_string()));
    }
    Ok(DocumentTree {
        doc_id: doc_id.to_string(),
        root,
    })
}

#[derive(Debug, Clone, PartialEq)]
enum Event {
    Char(char, Style),
    Space,
    ParBreak,
    Title(Vec<StyledWord>),
    Heading(NodeKind, Vec<StyledWord>),
    AbstractBegin,
    AbstractEnd,
    DocumentBegin,
    DocumentEnd,
}

struct Parser {
    chars: Vec<char>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> Option<char> {
        self.chars.get(self.pos).copied()
    }

    fn parse_until(&mut self, style: Style, in_group: bool, out: &mut Vec<Event>) {
        while let Some(c) = self.peek() {
            match c {
                '{' => {
                    self.pos += 1;
                    self.parse_until(style, true, out);
                }
                '}' => {
                    self.pos += 1;
                    if in_group {
                        return;
                    }
                }
                '\\' => {
                    self.pos += 1;
                    self.control_sequence(style, out);
                }
                '~' => {
                    self.pos += 1;
                    out.push(Event::Space);
                }
                '\n' => {
                    self.pos += 1;
                    out.push(self.newline());
                }
                c if c.is_whitespace() => {
                    self.pos += 1;
                    out.push(Event::Space);
                }
                c => {
                    self.pos += 1;
                    out.push(Event::Char(c, style));
                }
            }
        }
    }

    /// A newline followed by an (otherwise blank) newline ends a paragraph.
    fn newline(&mut self) -> Event {
        let mut look = self.pos;
        while let Some(&c) = self.chars.get(look) {
            if c == '\n' {
                while self.chars.get(look).is_some_and(|c| c.is_whitespace()) {
                    look += 1;
                }
                self.pos = look;
                return Event::ParBreak;
            }
            if !c.is_whitespace() {
                break;
            }
            look += 1;
        }
        Event::Space
    }

    fn control_sequence(&mut self, style: Style, out: &mut Vec<Event>) {
        let Some(c) = self.peek() else { return };
        if !c.is_ascii_alphabetic() {
            self.pos += 1;
            match c {
                '%' | '$' | '&' | '#' | '_' | '{' | '}' => out.push(Event::Char(c, style)),
                '\\' | ',' | ';' | ':' | '!' | ' ' | '\n' | '\t' => out.push(Event::Space),
                // accents and other control symbols
                _ => {}
            }
            return;
        }
        let start = self.pos;
        while self.peek().is_some_and(|c| c.is_ascii_alphabetic()) {
            self.pos += 1;
        }
        let name: String = self.chars[start..self.pos].iter().collect();
        if self.peek() == Some('*') {
            self.pos += 1;
        }
        match name.as_str() {
            "title" => {
                self.skip_optional_arg();
                let arg = self.parse_arg(Style::default());
                out.push(Event::Title(words_from_events(&arg)));
            }
            "section" | "subsection" | "subsubsection" | "paragraph" => {
                let kind = match name.as_str() {
                    "section" => NodeKind::Section,
                    "subsection" => NodeKind::Subsection,
                    "subsubsection" => NodeKind::Subsubsection,
                    _ => NodeKind::Paragraph,
                };
                self.skip_optional_arg();
                let arg = self.parse_arg(Style::default());
                out.push(Event::Heading(kind, words_from_events(&arg)));
            }
            "textbf" | "textit" | "emph" | "underline" => {
                let mut inner = style;
                match name.as_str() {
                    "textbf" => inner.bold = true,
                    "underline" => inner.underline = true,
                    _ => inner.italic = true,
                }
                let arg = self.parse_arg(inner);
                out.extend(arg);
            }
            "begin" | "end" => {
                let env = self.read_braced_raw();
                let event = match (name.as_str(), env.as_deref()) {
                    ("begin", Some("abstract")) => Some(Event::AbstractBegin),
                    ("end", Some("abstract")) => Some(Event::AbstractEnd),
                    ("begin", Some("document")) => Some(Event::DocumentBegin),
                    ("end", Some("document")) => Some(Event::DocumentEnd),
                    _ => None,
                };
                out.extend(event);
            }
            "par" => out.push(Event::ParBreak),
            _ => {
                if self.peek() == Some('[') {
                    self.skip_optional_arg();
                }
            }
        }
    }

    fn skip_whitespace(&mut self) {
        while self.peek().is_some_and(char::is_whitespace) {
            self.pos += 1;
        }
    }

    /// Skips a `[...]` argument (brace-aware) if one follows.
    fn skip_optional_arg(&mut self) {
        let save = self.pos;
        self.skip_whitespace();
        if self.peek() != Some('[') {
            self.pos = save;
            return;
        }
        let mut depth = 0usize;
        while let Some(c) = self.peek() {
            self.pos += 1;
            match c {
                '\\' => self.pos += 1,
                '{' => depth += 1,
                '}' => depth = depth.saturating_sub(1),
                ']' if depth == 0 => return,
                _ => {}
            }
        }
    }

    /// A required argument: a braced group or a single character.
    fn parse_arg(&mut self, style: Style) -> Vec<Event> {
        let mut events = Vec::new();
        self.skip_whitespace();
        match self.peek() {
            Some('{') => {
                self.pos += 1;
                self.parse_until(style, true, &mut events);
            }
            Some('\\') => {
                self.pos += 1;
                self.control_sequence(style, &mut events);
            }
            Some('}') | None => {}
            Some(c) => {
                self.pos += 1;
                events.push(Event::Char(c, style));
            }
        }
        events
    }

    /// Reads `{name}` verbatim, as used by `\begin`/`\end`.
    fn read_braced_raw(&mut self) -> Option<String> {
        self.skip_whitespace();
        if self.peek() != Some('{') {
            return None;
        }
        let start = self.pos + 1;
        let end = start + self.chars[start..].iter().position(|&c| c == '}')?;
        self.pos = end + 1;
        Some(self.chars[start..end].iter().collect())
    }
}

/// Accumulates characters into words; a style change or whitespace ends a word.
#[derive(Default)]
struct WordBuilder {
    text: String,
    style: Style,
}

impl WordBuilder {
    fn push(&mut self, c: char, style: Style) -> Option<StyledWord> {
        let done = if !self.text.is_empty() && style != self.style {
            self.flush()
        } else {
            None
        };
        self.style = style;
        self.text.push(c);
        done
    }

    fn flush(&mut self) -> Option<StyledWord> {
        if self.text.is_empty() {
            return None;
        }
        Some(StyledWord::styled(std::mem::take(&mut self.text), self.style))
    }
}

fn words_from_events(events: &[Event]) -> Vec<StyledWord> {
    let mut builder = WordBuilder::default();
    let mut words = Vec::new();
    for event in events {
        match event {
            Event::Char(c, style) => words.extend(builder.push(*c, *style)),
            _ => words.extend(builder.flush()),
        }
    }
    words.extend(builder.flush());
    words
}

struct TreeBuilder {
    /// Open nodes; index 0 is the root.
    stack: Vec<DocNode>,
    word: WordBuilder,
    /// Words of a plain paragraph not yet attached to the tree.
    pending: Vec<StyledWord>,
    in_abstract: bool,
    in_preamble: bool,
    finished: bool,
}

impl TreeBuilder {
    fn new(has_document_env: bool) -> Self {
        Self {
            stack: vec![DocNode::new(NodeKind::Title)],
            word: WordBuilder::default(),
            pending: Vec::new(),
            in_abstract: false,
            in_preamble: has_document_env,
            finished: false,
        }
    }

    fn handle(&mut self, event: Event) {
        if self.finished {
            return;
        }
        if self.in_preamble {
            match event {
                Event::Title(words) => self.stack[0].heading = words,
                Event::DocumentBegin => self.in_preamble = false,
                _ => {}
            }
            return;
        }
        match event {
            Event::Char(c, style) => {
                if let Some(word) = self.word.push(c, style) {
                    self.place(word);
                }
            }
            Event::Space => self.flush_word(),
            Event::ParBreak => {
                self.flush_word();
                if !self.in_abstract {
                    self.close_paragraph();
                    if self.top().kind == NodeKind::Paragraph {
                        self.pop();
                    }
                }
            }
            Event::Title(words) => {
                self.flush_word();
                self.stack[0].heading = words;
            }
            Event::Heading(kind, words) => {
                self.close_paragraph();
                self.in_abstract = false;
                self.pop_to_rank(kind.rank());
                let mut node = DocNode::new(kind);
                node.heading = words;
                self.stack.push(node);
            }
            Event::AbstractBegin => {
                self.close_paragraph();
                self.pop_to_rank(NodeKind::Abstract.rank());
                self.stack.push(DocNode::new(NodeKind::Abstract));
                self.in_abstract = true;
            }
            Event::AbstractEnd => {
                self.flush_word();
                if self.in_abstract {
                    self.in_abstract = false;
                    self.pop();
                }
            }
            Event::DocumentBegin => {}
            Event::DocumentEnd => {
                self.close_paragraph();
                self.finished = true;
            }
        }
    }

    fn top(&self) -> &DocNode {
        self.stack.last().expect("root never popped")
    }

    fn place(&mut self, word: StyledWord) {
        let top_kind = self.top().kind;
        if self.in_abstract || top_kind == NodeKind::Paragraph {
            self.stack.last_mut().expect("root").body.push(word);
        } else {
            self.pending.push(word);
        }
    }

    fn flush_word(&mut self) {
        if let Some(word) = self.word.flush() {
            self.place(word);
        }
    }

    fn close_paragraph(&mut self) {
        self.flush_word();
        if !self.pending.is_empty() {
            let mut para = DocNode::new(NodeKind::Paragraph);
            para.body = std::mem::take(&mut self.pending);
            self.stack.last_mut().expect("root").children.push(para);
        }
    }

    fn pop(&mut self) {
        if self.stack.len() > 1 {
            let node = self.stack.pop().expect("checked length");
            self.stack.last_mut().expect("root").children.push(node);
        }
    }

    fn pop_to_rank(&mut self, rank: u8) {
        while self.stack.len() > 1 && self.top().kind.rank() >= rank {
            self.pop();
        }
    }

    fn finish(mut self) -> DocNode {
        self.close_paragraph();
        while self.stack.len() > 1 {
            self.pop();
        }
        self.stack.pop().expect("root")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn w(text: &str) -> StyledWord {
        StyledWord::plain(text)
    }

    fn node(kind: NodeKind, heading: &[&str], body: Vec<StyledWord>, children: Vec<DocNode>) -> DocNode {
        DocNode {
            kind,
            heading: heading.iter().map(|t| w(t)).collect(),
            body,
            children,
        }
    }

    #[test]
    fn title_and_abstract() {
        let tree = extract_tree("\\title{A B}\\begin{abstract}c\\end{abstract}", "d").unwrap();
        let expected = node(
            NodeKind::Title,
            &["A", "B"],
            vec![],
            vec![node(NodeKind::Abstract, &[], vec![w("c")], vec![])],
        );
        assert_eq!(tree.root, expected);
    }

    #[test]
    fn section_with_bold_word() {
        let tree = extract_tree("\\section{S}\\textbf{x} y", "d").unwrap();
        let bold_x = StyledWord { bold: true, ..w("x") };
        let expected = node(
            NodeKind::Title,
            &[],
            vec![],
            vec![node(
                NodeKind::Section,
                &["S"],
                vec![],
                vec![node(NodeKind::Paragraph, &[], vec![bold_x, w("y")], vec![])],
            )],
        );
        assert_eq!(tree.root, expected);
    }

    #[test]
    fn empty_source_is_an_error() {
        assert_eq!(
            extract_tree("", "e"),
            Err(ExtractError::EmptyDocument("e".into()))
        );
        assert!(extract_tree("\\maketitle {} \\\\", "e").is_err());
    }

    #[test]
    fn blank_lines_split_paragraphs() {
        let tree = extract_tree("\\section{S}one two\n\n  \nthree\nfour", "d").unwrap();
        let section = &tree.root.children[0];
        assert_eq!(section.children.len(), 2);
        assert_eq!(section.children[0].body, vec![w("one"), w("two")]);
        assert_eq!(section.children[1].body, vec![w("three"), w("four")]);
    }

    #[test]
    fn nesting_follows_sectioning_levels() {
        let src = "\\section{A}a\\subsection{B}b\\subsubsection{C}c\\section*{D}d\\subsubsection{E}e";
        let tree = extract_tree(src, "d").unwrap();
        let root = &tree.root;
        assert_eq!(root.children.len(), 2);
        let a = &root.children[0];
        assert_eq!(a.heading, vec![w("A")]);
        assert_eq!(a.children[1].kind, NodeKind::Subsection);
        assert_eq!(a.children[1].children[1].kind, NodeKind::Subsubsection);
        let d = &root.children[1];
        assert_eq!(d.heading, vec![w("D")]);
        assert_eq!(d.children[1].kind, NodeKind::Subsubsection);
        tree.validate().unwrap();
    }

    #[test]
    fn styles_compose_and_split_words() {
        let tree = extract_tree("\\section{S}\\textbf{b \\emph{bi}} \\underline{u}x", "d").unwrap();
        let body = &tree.root.children[0].children[0].body;
        let texts: Vec<(&str, bool, bool, bool)> = body
            .iter()
            .map(|w| (w.text.as_str(), w.bold, w.italic, w.underline))
            .collect();
        assert_eq!(
            texts,
            vec![
                ("b", true, false, false),
                ("bi", true, true, false),
                ("u", false, false, true),
                ("x", false, false, false),
            ]
        );
    }

    #[test]
    fn unknown_commands_keep_argument_text() {
        let tree = extract_tree("\\section{S}see \\cite[p.~3]{smith} and \\LaTeX{} \\% done", "d")
            .unwrap();
        let body: Vec<&str> = tree.root.children[0].children[0]
            .body
            .iter()
            .map(|w| w.text.as_str())
            .collect();
        assert_eq!(body, vec!["see", "smith", "and", "%", "done"]);
    }

    #[test]
    fn preamble_ignored_except_title() {
        let src = "\\documentclass[11pt]{article}\n\\usepackage{amsmath}\n\\title{T}\n\\begin{document}\n\\maketitle\nHello\n\\end{document}\ntrailing";
        let tree = extract_tree(src, "d").unwrap();
        assert_eq!(tree.root.heading, vec![w("T")]);
        assert_eq!(tree.root.children.len(), 1);
        assert_eq!(tree.root.children[0].body, vec![w("Hello")]);
    }

    #[test]
    fn paragraph_heading_owns_following_text() {
        let src = "\\section{S}\\paragraph{P} inside\n\nafter";
        let tree = extract_tree(src, "d").unwrap();
        let s = &tree.root.children[0];
        assert_eq!(s.children[0].kind, NodeKind::Paragraph);
        assert_eq!(s.children[0].heading, vec![w("P")]);
        assert_eq!(s.children[0].body, vec![w("inside")]);
        assert_eq!(s.children[1].heading, vec![]);
        assert_eq!(s.children[1].body, vec![w("after")]);
    }

    #[test]
    fn text_after_abstract_goes_to_root_paragraph() {
        let src = "\\begin{abstract}x\n\ny\\end{abstract}z";
        let tree = extract_tree(src, "d").unwrap();
        assert_eq!(tree.root.children[0].body, vec![w("x"), w("y")]);
        assert_eq!(tree.root.children[1].kind, NodeKind::Paragraph);
        assert_eq!(tree.root.children[1].body, vec![w("z")]);
    }
}
