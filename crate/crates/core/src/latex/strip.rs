//! Removal of comments, floats and math from raw LaTeX.

use std::fmt;

const STRIPPED_ENVS: &[&str] = &[
    "figure",
    "figure*",
    "table",
    "table*",
    "equation",
    "equation*",
    "align",
    "align*",
    "displaymath",
];

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum StripWarning {
    /// `\begin{env}` without a matching `\end{env}`; stripped to end of input.
    UnclosedEnvironment { name: String, offset: usize },
    /// Math span opened at `offset` never closed; stripped to end of input.
    UnclosedMath { offset: usize },
}

impl fmt::Display for StripWarning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            StripWarning::UnclosedEnvironment { name, offset } => {
                write!(f, "unclosed environment `{name}` at byte {offset}")
            }
            StripWarning::UnclosedMath { offset } => write!(f, "unclosed math at byte {offset}"),
        }
    }
}

/// Removes comments, figure/table/equation environments and math spans.
///
/// Escaped `\%` and `\$` are kept. Everything else is copied through
/// byte-for-byte in order.
pub fn strip_noise(source: &str) -> String {
    strip_noise_with_warnings(source).0
}

/// Like [`strip_noise`] but also reports unbalanced constructs.
///
/// Removal can splice text into a new construct (`\beg$x$in{figure}`), so the
/// pass is repeated until the output is stable. Warnings come from the first
/// pass, with offsets into the original source.
pub fn strip_noise_with_warnings(source: &str) -> (String, Vec<StripWarning>) {
    let (mut out, warnings) = strip_pass(source);
    loop {
        let (next, _) = strip_pass(&out);
        if next.len() == out.len() {
            return (out, warnings);
        }
        out = next;
    }
}

fn utf8_len(lead: u8) -> usize {
    match lead {
        0x00..=0x7f => 1,
        0xc0..=0xdf => 2,
        0xe0..=0xef => 3,
        _ => 4,
    }
}

/// Length of the escape unit starting at a backslash at `i`.
fn escape_len(bytes: &[u8], i: usize) -> usize {
    match bytes.get(i + 1) {
        Some(&b) => 1 + utf8_len(b),
        None => 1,
    }
    .min(bytes.len() - i)
}

fn skip_comment(bytes: &[u8], mut i: usize) -> usize {
    while i < bytes.len() && bytes[i] != b'\n' {
        i += 1;
    }
    i
}

fn env_begin_at(bytes: &[u8], i: usize) -> Option<&'static str> {
    let rest = &bytes[i..];
    if !rest.starts_with(b"\\begin{") {
        return None;
    }
    let rest = &rest[7..];
    STRIPPED_ENVS.iter().copied().find(|name| {
        rest.starts_with(name.as_bytes()) && rest.get(name.len()) == Some(&b'}')
    })
}

fn tag_at(bytes: &[u8], i: usize, kind: &str, name: &str) -> bool {
    let tag = format!("\\{kind}{{{name}}}");
    bytes[i..].starts_with(tag.as_bytes())
}

/// Returns the index just past the matching `\end{name}`.
fn find_env_end(bytes: &[u8], mut i: usize, name: &str) -> Option<usize> {
    let mut depth = 1usize;
    while i < bytes.len() {
        match bytes[i] {
            b'\\' => {
                if tag_at(bytes, i, "begin", name) {
                    depth += 1;
                    i += 8 + name.len();
                } else if tag_at(bytes, i, "end", name) {
                    depth -= 1;
                    i += 6 + name.len();
                    if depth == 0 {
                        return Some(i);
                    }
                } else {
                    i += escape_len(bytes, i);
                }
            }
            b'%' => i = skip_comment(bytes, i),
            _ => i += 1,
        }
    }
    None
}

/// Returns the index just past the closing delimiter.
fn find_math_end(bytes: &[u8], mut i: usize, close: &[u8]) -> Option<usize> {
    while i < bytes.len() {
        if bytes[i..].starts_with(close) {
            return Some(i + close.len());
        }
        match bytes[i] {
            b'\\' => i += escape_len(bytes, i),
            b'%' => i = skip_comment(bytes, i),
            _ => i += 1,
        }
    }
    None
}

fn strip_pass(source: &str) -> (String, Vec<StripWarning>) {
    let bytes = source.as_bytes();
    let mut out = Vec::with_capacity(bytes.len());
    let mut warnings = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        match bytes[i] {
            b'\\' => {
                if let Some(name) = env_begin_at(bytes, i) {
                    let body = i + 8 + name.len();
                    match find_env_end(bytes, body, name) {
                        Some(end) => i = end,
                        None => {
                            warnings.push(StripWarning::UnclosedEnvironment {
                                name: name.to_string(),
                                offset: i,
                            });
                            i = bytes.len();
                        }
                    }
                } else if bytes.get(i + 1) == Some(&b'[') {
                    match find_math_end(bytes, i + 2, b"\\]") {
                        Some(end) => i = end,
                        None => {
                            warnings.push(StripWarning::UnclosedMath { offset: i });
                            i = bytes.len();
                        }
                    }
                } else {
                    let len = escape_len(bytes, i);
                    out.extend_from_slice(&bytes[i..i + len]);
                    i += len;
                }
            }
            b'%' => i = skip_comment(bytes, i),
            b'$' => {
                let (open, close): (usize, &[u8]) = if bytes.get(i + 1) == Some(&b'$') {
                    (2, b"$$")
                } else {
                    (1, b"$")
                };
                match find_math_end(bytes, i + open, close) {
                    Some(end) => i = end,
                    None => {
                        warnings.push(StripWarning::UnclosedMath { offset: i });
                        i = bytes.len();
                    }
                }
            }
            b => {
                out.push(b);
                i += 1;
            }
        }
    }
    // Cuts only happen at ASCII delimiters, so the output stays valid UTF-8.
    let text = String::from_utf8(out).expect("cuts at ASCII boundaries");
    (text, warnings)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn removes_comments_keeping_newline() {
        assert_eq!(strip_noise("a % note\nb"), "a \nb");
    }

    #[test]
    fn removes_figure_environment() {
        assert_eq!(strip_noise("x \\begin{figure}F\\end{figure} y"), "x  y");
    }

    #[test]
    fn escaped_percent_and_dollar_survive() {
        assert_eq!(
            strip_noise("cost is \\$5 % cheap\n$e=mc^2$ done"),
            "cost is \\$5 \n done"
        );
        assert_eq!(strip_noise("50\\% off"), "50\\% off");
    }

    #[test]
    fn line_break_before_comment() {
        assert_eq!(strip_noise("a\\\\% gone\nb"), "a\\\\\nb");
    }

    #[test]
    fn starred_and_nested_environments() {
        let src = "a\\begin{table*}x\\begin{table*}y\\end{table*}z\\end{table*}b";
        assert_eq!(strip_noise(src), "ab");
        assert_eq!(strip_noise("p\\begin{align*}x&=1\\end{align*}q"), "pq");
        assert_eq!(strip_noise("p\\begin{itemize}q\\end{itemize}"), "p\\begin{itemize}q\\end{itemize}");
    }

    #[test]
    fn display_math_forms() {
        assert_eq!(strip_noise("a $$x$$ b \\[y\\] c"), "a  b  c");
    }

    #[test]
    fn commented_end_does_not_close() {
        let src = "a\\begin{figure}% \\end{figure}\n\\end{figure}b";
        assert_eq!(strip_noise(src), "ab");
    }

    #[test]
    fn unbalanced_environment_stripped_to_end_with_warning() {
        let (out, warnings) = strip_noise_with_warnings("keep \\begin{equation} x = 1");
        assert_eq!(out, "keep ");
        assert_eq!(
            warnings,
            vec![StripWarning::UnclosedEnvironment { name: "equation".into(), offset: 5 }]
        );
        let (out, warnings) = strip_noise_with_warnings("a $b");
        assert_eq!(out, "a ");
        assert_eq!(warnings, vec![StripWarning::UnclosedMath { offset: 2 }]);
    }

    #[test]
    fn spliced_construct_is_removed_again() {
        let src = "\\beg$x$in{figure}F\\end{figure}z";
        let once = strip_noise(src);
        assert_eq!(once, "z");
        assert_eq!(strip_noise(&once), once);
    }

    #[test]
    fn unicode_is_preserved() {
        assert_eq!(strip_noise("naïve \\'é $π$ ok"), "naïve \\'é  ok");
    }
}
