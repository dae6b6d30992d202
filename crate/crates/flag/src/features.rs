//! Per-line comparison features: edit distance between code parts, BLEU over
//! comment tokens, distance from the nearest earlier comment, and the mean
//! token logprob of the generated text.

use serde::{Deserialize, Serialize};

use crate::srcmodel::{split_line, LanguageProfile, PreprocessedFile, SourceLine};

/// Unit-cost Levenshtein distance over Unicode scalar values.
pub fn levenshtein(a: &str, b: &str) -> usize {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    if a.is_empty() {
        return b.len();
    }
    if b.is_empty() {
        return a.len();
    }
    let mut row: Vec<usize> = (0..=b.len()).collect();
    for (i, &ca) in a.iter().enumerate() {
        let mut prev = row[0];
        row[0] = i + 1;
        for (j, &cb) in b.iter().enumerate() {
            let substitute = prev + usize::from(ca != cb);
            prev = row[j + 1];
            row[j + 1] = substitute.min(prev + 1).min(row[j] + 1);
        }
    }
    row[b.len()]
}

/// Levenshtein distance after deleting every whitespace character from both
/// sides; 0 means the lines differ only in spacing.
pub fn levenshtein_ignoring_whitespace(a: &str, b: &str) -> usize {
    let strip = |s: &str| s.chars().filter(|c| !c.is_whitespace()).collect::<String>();
    levenshtein(&strip(a), &strip(b))
}

/// Cumulative BLEU scores for n = 1..=max_n: modified (clipped) n-gram
/// precision, geometric mean, brevity penalty, no smoothing. An empty
/// candidate or reference scores 0 everywhere, as does any order whose
/// precision hits 0.
pub fn bleu(candidate: &[String], reference: &[String], max_n: usize) -> Vec<f64> {
    assert!(max_n >= 1, "bleu needs at least one n-gram order");
    if candidate.is_empty() || reference.is_empty() {
        return vec![0.0; max_n];
    }
    let c = candidate.len() as f64;
    let r = reference.len() as f64;
    let brevity = if c > r { 1.0 } else { (1.0 - r / c).exp() };

    let mut precisions = Vec::with_capacity(max_n);
    for n in 1..=max_n {
        if candidate.len() < n {
            precisions.push(0.0);
            continue;
        }
        let mut ref_counts = std::collections::HashMap::new();
        for gram in reference.windows(n) {
            *ref_counts.entry(gram).or_insert(0usize) += 1;
        }
        let mut cand_counts = std::collections::HashMap::new();
        for gram in candidate.windows(n) {
            *cand_counts.entry(gram).or_insert(0usize) += 1;
        }
        let clipped: usize = cand_counts
            .iter()
            .map(|(gram, count)| (*count).min(ref_counts.get(gram).copied().unwrap_or(0)))
            .sum();
        let total = candidate.len() + 1 - n;
        precisions.push(clipped as f64 / total as f64);
    }

    (1..=max_n)
        .map(|k| {
            if precisions[..k].iter().any(|&p| p == 0.0) {
                0.0
            } else {
                let mean_log = precisions[..k].iter().map(|p| p.ln()).sum::<f64>() / k as f64;
                brevity * mean_log.exp()
            }
        })
        .collect()
}

/// Comment text reduced to BLEU tokens: markers stripped, lowercased, split
/// on whitespace.
pub fn comment_tokens(comment: &str, profile: &LanguageProfile) -> Vec<String> {
    let mut s = comment.to_string();
    for (open, close) in profile.block_delimiters {
        s = s.replace(open, " ");
        s = s.replace(close, " ");
    }
    for marker in profile.line_markers {
        s = s.replace(marker, " ");
    }
    s.to_lowercase().split_whitespace().map(str::to_string).collect()
}

/// How far `loc` sits from the most recent comment at or before it, counted
/// in checkable lines: 0 on comment-bearing lines, absent when no comment
/// precedes the line at all.
pub fn distance_from_comment(file: &PreprocessedFile, loc: usize) -> Option<usize> {
    let ci = file.prior_comment_index[loc]?;
    Some(loc - ci)
}

/// Everything the classifier needs to know about one (original, generated)
/// line pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LineFeatures {
    /// Edit distance between the code parts.
    pub ld: usize,
    /// Edit distance between the code parts with all whitespace removed.
    pub ld_no_ws: usize,
    /// BLEU-1 between the comment token lists, when both lines carry one.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bleu1: Option<f64>,
    /// Cumulative BLEU-1..4, same availability as `bleu1`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bleu_cumulative: Option<Vec<f64>>,
    /// Distance from the most recent comment, in checkable lines.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dfc: Option<usize>,
    /// Mean logprob of the generated tokens, when the backend reports them.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mean_logprob: Option<f64>,
    /// BLEU-1 of the generation at the most recent prior comment line against
    /// that original comment (filled in by the run driver).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prev_comment_bleu1: Option<f64>,
}

/// Compute the features for one line pair. `generated_text` is the final
/// compared text (assist included); trailing whitespace is stripped from both
/// sides before comparison. `prev_comment_bleu1` is left unset — it depends
/// on the generation at another line, so the run driver fills it afterwards.
pub fn extract_features(
    original: &SourceLine,
    generated_text: &str,
    token_logprobs: Option<&[f64]>,
    file: &PreprocessedFile,
    loc: usize,
    profile: &LanguageProfile,
) -> LineFeatures {
    let generated = generated_text.trim_end();
    let (gen_code_raw, gen_comment, _) = split_line(generated, profile, false);
    let gen_is_comment_only = gen_code_raw.trim().is_empty() && !gen_comment.is_empty();
    let gen_code = if gen_is_comment_only { "" } else { gen_code_raw.as_str() };

    let ld = levenshtein(&original.code_part, gen_code);
    let ld_no_ws = levenshtein_ignoring_whitespace(&original.code_part, gen_code);

    let (bleu1, bleu_cumulative) = if original.has_comment() && !gen_comment.is_empty() {
        let cand = comment_tokens(&gen_comment, profile);
        let reference = comment_tokens(&original.comment_part, profile);
        let scores = bleu(&cand, &reference, 4);
        (Some(scores[0]), Some(scores))
    } else {
        (None, None)
    };

    let mean_logprob = token_logprobs
        .filter(|lps| !lps.is_empty())
        .map(|lps| lps.iter().sum::<f64>() / lps.len() as f64);

    LineFeatures {
        ld,
        ld_no_ws,
        bleu1,
        bleu_cumulative,
        dfc: distance_from_comment(file, loc),
        mean_logprob,
        prev_comment_bleu1: None,
    }
}
