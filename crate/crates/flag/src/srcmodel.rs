//! Source-file model: language comment syntax, string-aware line splitting,
//! and blank-line preprocessing.
//!
//! Lines are split into a code part and a comment part without parsing the
//! language proper, so files that do not compile are still usable. Blank
//! lines are dropped up front; everything downstream works on the resulting
//! list of checkable lines while keeping the original line numbers.

use std::collections::HashSet;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Languages with a built-in comment-syntax profile.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LanguageId {
    C,
    Python,
    Verilog,
}

impl LanguageId {
    /// Infer the language from the file extension (`.c`/`.h`, `.py`, `.v`/`.sv`).
    pub fn from_path(path: &Path) -> Option<LanguageId> {
        match path.extension().and_then(|e| e.to_str())? {
            "c" | "h" => Some(LanguageId::C),
            "py" => Some(LanguageId::Python),
            "v" | "sv" => Some(LanguageId::Verilog),
            _ => None,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            LanguageId::C => "c",
            LanguageId::Python => "python",
            LanguageId::Verilog => "verilog",
        }
    }
}

impl FromStr for LanguageId {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "c" => Ok(LanguageId::C),
            "python" | "py" => Ok(LanguageId::Python),
            "verilog" | "v" | "sv" => Ok(LanguageId::Verilog),
            other => Err(format!("unknown language `{other}` (expected c, python, or verilog)")),
        }
    }
}

const C_KEYWORDS: &[&str] = &[
    "auto", "break", "case", "char", "const", "continue", "default", "do", "double", "else",
    "enum", "extern", "float", "for", "goto", "if", "inline", "int", "long", "register",
    "restrict", "return", "short", "signed", "sizeof", "static", "struct", "switch", "typedef",
    "union", "unsigned", "void", "volatile", "while",
];

const PYTHON_KEYWORDS: &[&str] = &[
    "False", "None", "True", "and", "as", "assert", "async", "await", "break", "class",
    "continue", "def", "del", "elif", "else", "except", "finally", "for", "from", "global",
    "if", "import", "in", "is", "lambda", "nonlocal", "not", "or", "pass", "raise", "return",
    "try", "while", "with", "yield",
];

const VERILOG_KEYWORDS: &[&str] = &[
    "always", "and", "assign", "begin", "buf", "case", "casex", "casez", "default", "defparam",
    "else", "end", "endcase", "endfunction", "endgenerate", "endmodule", "endtask", "for",
    "forever", "fork", "function", "generate", "genvar", "if", "initial", "inout", "input",
    "integer", "join", "localparam", "module", "negedge", "or", "output", "parameter",
    "posedge", "reg", "repeat", "task", "tri", "wait", "while", "wire",
];

/// Comment and keyword syntax for one language.
#[derive(Debug, Clone)]
pub struct LanguageProfile {
    pub id: LanguageId,
    /// Markers that start a comment running to the end of the line.
    pub line_markers: &'static [&'static str],
    /// Delimiter pairs for comments that may span lines.
    pub block_delimiters: &'static [(&'static str, &'static str)],
    /// Quote characters that open a string literal (comment markers inside are ignored).
    string_quotes: &'static [char],
    /// When set, block delimiters open a comment only at statement level
    /// (Python docstrings); elsewhere they are ordinary string literals.
    statement_level_blocks: bool,
    keywords: HashSet<&'static str>,
}

impl LanguageProfile {
    pub fn new(id: LanguageId) -> LanguageProfile {
        match id {
            LanguageId::C => LanguageProfile {
                id,
                line_markers: &["//"],
                block_delimiters: &[("/*", "*/")],
                string_quotes: &['"', '\''],
                statement_level_blocks: false,
                keywords: C_KEYWORDS.iter().copied().collect(),
            },
            LanguageId::Python => LanguageProfile {
                id,
                line_markers: &["#"],
                block_delimiters: &[("\"\"\"", "\"\"\""), ("'''", "'''")],
                string_quotes: &['"', '\''],
                statement_level_blocks: true,
                keywords: PYTHON_KEYWORDS.iter().copied().collect(),
            },
            LanguageId::Verilog => LanguageProfile {
                id,
                line_markers: &["//"],
                block_delimiters: &[("/*", "*/")],
                // `'` is not a string quote in Verilog (it appears in sized
                // literals like 4'b0010), so only `"` opens a string.
                string_quotes: &['"'],
                statement_level_blocks: false,
                keywords: VERILOG_KEYWORDS.iter().copied().collect(),
            },
        }
    }

    pub fn is_keyword(&self, word: &str) -> bool {
        self.keywords.contains(word)
    }
}

/// Block-construct state carried across lines: the close delimiter we are
/// waiting for, if the previous line left a block comment (or docstring) open.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct BlockState(Option<&'static str>);

impl BlockState {
    pub fn in_block(&self) -> bool {
        self.0.is_some()
    }
}

/// Split one line into `(code_part, comment_part, state_after)`.
///
/// The scanner tracks string literals (with backslash escapes), so comment
/// markers inside strings do not start a comment. Both parts have trailing
/// whitespace trimmed; leading whitespace stays in the code part. The split
/// is best-effort and never fails.
pub fn split_line_with_state(
    raw: &str,
    profile: &LanguageProfile,
    state: BlockState,
) -> (String, String, BlockState) {
    let mut code = String::new();
    let mut comment = String::new();
    let mut i = 0;

    if let Some(close) = state.0 {
        match raw.find(close) {
            Some(pos) => {
                comment.push_str(&raw[..pos + close.len()]);
                i = pos + close.len();
            }
            None => return (code, raw.trim_end().to_string(), state),
        }
    }

    while i < raw.len() {
        let rest = &raw[i..];

        if profile.line_markers.iter().any(|m| rest.starts_with(m)) {
            comment.push_str(rest);
            break;
        }

        if let Some((open, close)) = profile
            .block_delimiters
            .iter()
            .find(|(open, _)| rest.starts_with(open))
        {
            // Triple quotes in expression position are ordinary strings, not
            // docstrings: consume to the close on this line, else best-effort
            // treat the remainder as code.
            if profile.statement_level_blocks && !code.trim().is_empty() {
                match rest[open.len()..].find(close) {
                    Some(p) => {
                        let end = open.len() + p + close.len();
                        code.push_str(&rest[..end]);
                        i += end;
                        continue;
                    }
                    None => {
                        code.push_str(rest);
                        break;
                    }
                }
            }
            match rest[open.len()..].find(close) {
                Some(p) => {
                    let end = open.len() + p + close.len();
                    comment.push_str(&rest[..end]);
                    i += end;
                    continue;
                }
                None => {
                    comment.push_str(rest);
                    return (
                        finish_part(code),
                        finish_part(comment),
                        BlockState(Some(close)),
                    );
                }
            }
        }

        let ch = rest.chars().next().expect("non-empty remainder");
        if profile.string_quotes.contains(&ch) {
            let consumed = consume_string(rest, ch);
            code.push_str(&rest[..consumed]);
            i += consumed;
            continue;
        }

        code.push(ch);
        i += ch.len_utf8();
    }

    (finish_part(code), finish_part(comment), BlockState(None))
}

/// [`split_line_with_state`] with the cross-line state reduced to a plain
/// "inside a block comment" flag (resolved against the profile's first
/// block-delimiter pair).
pub fn split_line(raw: &str, profile: &LanguageProfile, in_block: bool) -> (String, String, bool) {
    let state = if in_block {
        BlockState(profile.block_delimiters.first().map(|(_, close)| *close))
    } else {
        BlockState::default()
    };
    let (code, comment, after) = split_line_with_state(raw, profile, state);
    (code, comment, after.in_block())
}

fn finish_part(part: String) -> String {
    let trimmed = part.trim_end();
    if trimmed.len() == part.len() {
        part
    } else {
        trimmed.to_string()
    }
}

/// Byte length of the string literal starting at `s` (which begins with
/// `quote`), including both quotes. Unterminated literals run to end of line.
fn consume_string(s: &str, quote: char) -> usize {
    let mut chars = s.char_indices().skip(1);
    while let Some((i, ch)) = chars.next() {
        if ch == '\\' {
            chars.next();
        } else if ch == quote {
            return i + ch.len_utf8();
        }
    }
    s.len()
}

/// True when the code part is nothing but a single keyword (optionally with
/// one trailing terminator or brace) or a lone structural brace — lines a
/// completion model reproduces so reliably that a mismatch carries no signal.
pub fn is_keyword_only(code_part: &str, profile: &LanguageProfile) -> bool {
    let t = code_part.trim();
    if t.is_empty() {
        return false;
    }
    if matches!(t, "{" | "}" | "};") {
        return true;
    }
    let stripped = t
        .strip_suffix(['{', '}', ';', ':'])
        .map(str::trim_end)
        .unwrap_or(t);
    profile.is_keyword(stripped)
}

/// One checkable (non-blank) source line.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SourceLine {
    /// 1-based physical line number in the original file.
    pub original_line_no: u32,
    /// Line text with trailing whitespace trimmed; leading whitespace kept.
    pub raw: String,
    /// Code with comment spans removed; empty on comment-only lines.
    pub code_part: String,
    /// Concatenated comment spans, markers included.
    pub comment_part: String,
    pub is_comment_only: bool,
    pub has_trailing_comment: bool,
}

impl SourceLine {
    pub fn has_comment(&self) -> bool {
        !self.comment_part.is_empty()
    }

    pub fn is_code(&self) -> bool {
        !self.code_part.trim().is_empty()
    }
}

/// A source file reduced to its checkable lines.
#[derive(Debug, Clone)]
pub struct PreprocessedFile {
    pub path: String,
    pub language: LanguageId,
    pub lines: Vec<SourceLine>,
    /// Index of the first line to check (lines before it still feed prompts
    /// and comment tracking).
    pub start_index: usize,
    /// For each line index, the most recent comment-bearing line index at or
    /// before it.
    pub prior_comment_index: Vec<Option<usize>>,
}

impl PreprocessedFile {
    pub fn profile(&self) -> LanguageProfile {
        LanguageProfile::new(self.language)
    }

    /// Indices of the lines actually checked.
    pub fn checked_indices(&self) -> std::ops::Range<usize> {
        self.start_index..self.lines.len()
    }
}

#[derive(Debug, Error)]
pub enum SrcError {
    #[error("failed to read {path}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("cannot infer a language for {0}; pass one explicitly")]
    UnknownLanguage(String),
    #[error("{path} has no checkable lines at or after line {start_line}")]
    NoCheckableLines { path: String, start_line: u32 },
    #[error("start line {start_line} is past the end of {path} ({last_line} lines)")]
    StartLineBeyondEof {
        path: String,
        start_line: u32,
        last_line: u32,
    },
}

/// Read and preprocess a source file. `language` falls back to extension
/// inference; `start_line` is the 1-based first line to check.
pub fn load_source(
    path: &Path,
    language: Option<LanguageId>,
    start_line: u32,
) -> Result<PreprocessedFile, SrcError> {
    let language = match language.or_else(|| LanguageId::from_path(path)) {
        Some(l) => l,
        None => return Err(SrcError::UnknownLanguage(path.display().to_string())),
    };
    let bytes = std::fs::read(path).map_err(|source| SrcError::Io {
        path: path.display().to_string(),
        source,
    })?;
    preprocess(
        &String::from_utf8_lossy(&bytes),
        &path.display().to_string(),
        language,
        start_line,
    )
}

/// Preprocess already-loaded text: drop blank lines, split each survivor into
/// code and comment parts, and index the most recent comment per line.
pub fn preprocess(
    text: &str,
    path_label: &str,
    language: LanguageId,
    start_line: u32,
) -> Result<PreprocessedFile, SrcError> {
    let profile = LanguageProfile::new(language);
    let mut lines = Vec::new();
    let mut state = BlockState::default();
    let mut physical_lines = 0u32;

    for (idx, raw) in text.lines().enumerate() {
        physical_lines = idx as u32 + 1;
        let raw = raw.trim_end();
        if raw.is_empty() {
            continue;
        }
        let (code_part, comment_part, next) = split_line_with_state(raw, &profile, state);
        state = next;
        let has_code = !code_part.trim().is_empty();
        let has_comment = !comment_part.is_empty();
        let is_comment_only = !has_code && has_comment;
        lines.push(SourceLine {
            original_line_no: idx as u32 + 1,
            raw: raw.to_string(),
            // A comment-only line's indentation belongs to the comment, not
            // to an (empty) piece of code.
            code_part: if is_comment_only { String::new() } else { code_part },
            comment_part,
            is_comment_only,
            has_trailing_comment: has_code && has_comment,
        });
    }

    if lines.is_empty() {
        return Err(SrcError::NoCheckableLines {
            path: path_label.to_string(),
            start_line,
        });
    }
    if start_line > physical_lines {
        return Err(SrcError::StartLineBeyondEof {
            path: path_label.to_string(),
            start_line,
            last_line: physical_lines,
        });
    }
    let start_index = match lines.iter().position(|l| l.original_line_no >= start_line) {
        Some(i) => i,
        None => {
            return Err(SrcError::NoCheckableLines {
                path: path_label.to_string(),
                start_line,
            })
        }
    };

    let mut prior_comment_index = Vec::with_capacity(lines.len());
    let mut last_comment = None;
    for (i, line) in lines.iter().enumerate() {
        if line.has_comment() {
            last_comment = Some(i);
        }
        prior_comment_index.push(last_comment);
    }

    Ok(PreprocessedFile {
        path: path_label.to_string(),
        language,
        lines,
        start_index,
        prior_comment_index,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn profile(id: LanguageId) -> LanguageProfile {
        LanguageProfile::new(id)
    }

    #[test]
    fn splits_trailing_line_comment() {
        let (code, comment, in_block) = split_line("int x = 1; // init", &profile(LanguageId::C), false);
        assert_eq!(code, "int x = 1;");
        assert_eq!(comment, "// init");
        assert!(!in_block);
    }

    #[test]
    fn marker_inside_string_is_not_a_comment() {
        let (code, comment, _) = split_line("s = \"http://x\"", &profile(LanguageId::Python), false);
        assert_eq!(code, "s = \"http://x\"");
        assert_eq!(comment, "");

        let (code, comment, _) = split_line("url = \"a // b\"; // real", &profile(LanguageId::C), false);
        assert_eq!(code, "url = \"a // b\";");
        assert_eq!(comment, "// real");
    }

    #[test]
    fn hash_inside_single_quotes_is_code() {
        let (code, comment, _) = split_line("c = '#'  # marker", &profile(LanguageId::Python), false);
        assert_eq!(code, "c = '#'");
        assert_eq!(comment, "# marker");
    }

    #[test]
    fn escaped_quote_does_not_close_string() {
        let (code, comment, _) =
            split_line(r#"s = "a \" // b"; // tail"#, &profile(LanguageId::C), false);
        assert_eq!(code, r#"s = "a \" // b";"#);
        assert_eq!(comment, "// tail");
    }

    #[test]
    fn block_comment_within_one_line() {
        let (code, comment, in_block) = split_line("x = 1; /* note */ y = 2;", &profile(LanguageId::C), false);
        assert_eq!(code, "x = 1;  y = 2;");
        assert_eq!(comment, "/* note */");
        assert!(!in_block);
    }

    #[test]
    fn block_comment_spans_lines() {
        let p = profile(LanguageId::C);
        let (code, comment, in_block) = split_line("start /* begins here", &p, false);
        assert_eq!(code, "start");
        assert_eq!(comment, "/* begins here");
        assert!(in_block);

        let (code, comment, in_block) = split_line("still inside */ x = 1;", &p, true);
        assert_eq!(code, " x = 1;");
        assert_eq!(comment, "still inside */");
        assert!(!in_block);
    }

    #[test]
    fn python_docstring_at_statement_level_is_comment() {
        let p = profile(LanguageId::Python);
        let (code, comment, _) = split_line("    \"\"\"Return the sum.\"\"\"", &p, false);
        assert_eq!(code, "");
        assert_eq!(comment, "\"\"\"Return the sum.\"\"\"");
    }

    #[test]
    fn python_triple_quote_in_expression_is_string() {
        let p = profile(LanguageId::Python);
        let (code, comment, in_block) = split_line("x = \"\"\"s\"\"\"", &p, false);
        assert_eq!(code, "x = \"\"\"s\"\"\"");
        assert_eq!(comment, "");
        assert!(!in_block);
    }

    #[test]
    fn python_docstring_spans_lines() {
        let p = profile(LanguageId::Python);
        let (_, _, state) = split_line_with_state("\"\"\"Opens here", &p, BlockState::default());
        assert!(state.in_block());
        let (code, comment, state) = split_line_with_state("closes here\"\"\"", &p, state);
        assert_eq!(code, "");
        assert_eq!(comment, "closes here\"\"\"");
        assert!(!state.in_block());
    }

    #[test]
    fn verilog_sized_literal_does_not_open_string() {
        let p = profile(LanguageId::Verilog);
        let (code, comment, _) = split_line("assign x = 4'b0010; // two", &p, false);
        assert_eq!(code, "assign x = 4'b0010;");
        assert_eq!(comment, "// two");
    }

    #[test]
    fn verilog_trailing_comment() {
        let (code, comment, _) = split_line(
            "always @(posedge clk) begin // sample",
            &profile(LanguageId::Verilog),
            false,
        );
        assert_eq!(code, "always @(posedge clk) begin");
        assert_eq!(comment, "// sample");
    }

    #[test]
    fn keyword_only_lines() {
        let c = profile(LanguageId::C);
        assert!(is_keyword_only("return;", &c));
        assert!(is_keyword_only("else", &c));
        assert!(is_keyword_only("    do {", &c));
        assert!(is_keyword_only("}", &c));
        assert!(is_keyword_only("};", &c));
        assert!(!is_keyword_only("} else {", &c));
        assert!(!is_keyword_only("int x;", &c));
        assert!(!is_keyword_only("return 0;", &c));
        assert!(!is_keyword_only("", &c));

        let v = profile(LanguageId::Verilog);
        assert!(is_keyword_only("end", &v));
        assert!(is_keyword_only("begin", &v));

        let py = profile(LanguageId::Python);
        assert!(is_keyword_only("else:", &py));
        assert!(is_keyword_only("try:", &py));
        assert!(!is_keyword_only("del x", &py));
    }

    #[test]
    fn blank_lines_are_skipped_and_numbers_kept() {
        let text = "int a;\n\n  \nint b;\n\nint c;\n";
        let f = preprocess(text, "t.c", LanguageId::C, 1).unwrap();
        assert_eq!(f.lines.len(), 3);
        let numbers: Vec<u32> = f.lines.iter().map(|l| l.original_line_no).collect();
        assert_eq!(numbers, vec![1, 4, 6]);
    }

    #[test]
    fn trailing_whitespace_trimmed_leading_kept() {
        let f = preprocess("    int x;   \n", "t.c", LanguageId::C, 1).unwrap();
        assert_eq!(f.lines[0].raw, "    int x;");
        assert_eq!(f.lines[0].code_part, "    int x;");
    }

    #[test]
    fn comment_only_line_has_empty_code_part() {
        let f = preprocess("  // note\nint x;\n", "t.c", LanguageId::C, 1).unwrap();
        assert!(f.lines[0].is_comment_only);
        assert_eq!(f.lines[0].code_part, "");
        assert_eq!(f.lines[0].comment_part, "// note");
        assert!(!f.lines[1].is_comment_only);
    }

    #[test]
    fn prior_comment_index_tracks_most_recent_comment() {
        let text = "// top\nint a;\nint b;\nint c; // mid\nint d;\n";
        let f = preprocess(text, "t.c", LanguageId::C, 1).unwrap();
        assert_eq!(f.prior_comment_index, vec![Some(0), Some(0), Some(0), Some(3), Some(3)]);
    }

    #[test]
    fn no_comment_means_no_prior_index() {
        let f = preprocess("int a;\nint b;\n", "t.c", LanguageId::C, 1).unwrap();
        assert_eq!(f.prior_comment_index, vec![None, None]);
    }

    #[test]
    fn start_line_lands_on_first_checkable_at_or_after() {
        let text = "int a;\nint b;\n\nint c;\n";
        let f = preprocess(text, "t.c", LanguageId::C, 3).unwrap();
        assert_eq!(f.start_index, 2);
        assert_eq!(f.lines[f.start_index].original_line_no, 4);
    }

    #[test]
    fn start_line_past_eof_errors() {
        let err = preprocess("int a;\n", "t.c", LanguageId::C, 9).unwrap_err();
        assert!(matches!(err, SrcError::StartLineBeyondEof { start_line: 9, .. }));
    }

    #[test]
    fn empty_file_errors() {
        let err = preprocess("\n  \n", "t.c", LanguageId::C, 1).unwrap_err();
        assert!(matches!(err, SrcError::NoCheckableLines { .. }));
    }

    #[test]
    fn language_inference_from_extension() {
        assert_eq!(LanguageId::from_path(Path::new("a.c")), Some(LanguageId::C));
        assert_eq!(LanguageId::from_path(Path::new("a.h")), Some(LanguageId::C));
        assert_eq!(LanguageId::from_path(Path::new("a.py")), Some(LanguageId::Python));
        assert_eq!(LanguageId::from_path(Path::new("a.v")), Some(LanguageId::Verilog));
        assert_eq!(LanguageId::from_path(Path::new("a.sv")), Some(LanguageId::Verilog));
        assert_eq!(LanguageId::from_path(Path::new("a.rs")), None);
    }
}
