//! Flagging criteria over per-line features, plus the false-positive filters
//! applied by the strictest criterion.
//!
//! - `C0`: flag when `0 < ld <= ld_limit`.
//! - `C1`: additionally flag high-`ld` lines sitting close after a comment
//!   (`0 < dfc < dfc_limit`; both bounds strict, absent `dfc` never counts).
//! - `C2`: `C1`, then drop candidates that differ only in whitespace, consist
//!   of nothing but a keyword, or were generated with low confidence.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::features::LineFeatures;

pub const DEFAULT_LD_LIMIT: usize = 20;
pub const DEFAULT_DFC_LIMIT: usize = 10;
pub const DEFAULT_LOGPROB_THRESHOLD: f64 = -0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CriterionKind {
    C0,
    C1,
    C2,
}

impl FromStr for CriterionKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_uppercase().as_str() {
            "C0" => Ok(CriterionKind::C0),
            "C1" => Ok(CriterionKind::C1),
            "C2" => Ok(CriterionKind::C2),
            other => Err(format!("unknown criterion `{other}` (expected C0, C1, or C2)")),
        }
    }
}

/// A fully parameterized flagging rule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Criterion {
    pub kind: CriterionKind,
    pub ld_limit: usize,
    /// Required by C1/C2; ignored by C0.
    pub dfc_limit: Option<usize>,
    /// Candidates whose mean logprob falls strictly below this are dropped by
    /// C2 when the backend reports logprobs at all.
    pub logprob_threshold: f64,
}

impl Criterion {
    pub fn c0(ld_limit: usize) -> Criterion {
        Criterion {
            kind: CriterionKind::C0,
            ld_limit,
            dfc_limit: None,
            logprob_threshold: DEFAULT_LOGPROB_THRESHOLD,
        }
    }

    pub fn c1(ld_limit: usize, dfc_limit: usize) -> Criterion {
        Criterion {
            kind: CriterionKind::C1,
            ld_limit,
            dfc_limit: Some(dfc_limit),
            logprob_threshold: DEFAULT_LOGPROB_THRESHOLD,
        }
    }

    pub fn c2(ld_limit: usize, dfc_limit: usize) -> Criterion {
        Criterion {
            kind: CriterionKind::C2,
            ld_limit,
            dfc_limit: Some(dfc_limit),
            logprob_threshold: DEFAULT_LOGPROB_THRESHOLD,
        }
    }

    pub fn with_logprob_threshold(mut self, threshold: f64) -> Criterion {
        self.logprob_threshold = threshold;
        self
    }
}

impl fmt::Display for Criterion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.kind {
            CriterionKind::C0 => write!(f, "C0({})", self.ld_limit),
            CriterionKind::C1 => write!(f, "C1({},{})", self.ld_limit, self.dfc_limit.unwrap_or(0)),
            CriterionKind::C2 => write!(f, "C2({},{})", self.ld_limit, self.dfc_limit.unwrap_or(0)),
        }
    }
}

/// Why a line was flagged.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FlagReason {
    /// `0 < ld <= ld_limit`.
    WithinLd,
    /// `0 < dfc < dfc_limit` (C1/C2 only).
    NearComment,
}

/// Which filter removed a candidate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RemovalReason {
    /// The lines match once all whitespace is removed.
    WsRecompute,
    /// The original is a bare keyword or structural brace.
    KeywordOnly,
    /// Mean logprob below the threshold.
    LowLogprob,
}

/// One candidate line in a report. `line_index` is the position within the
/// scored lines; entries with `removed_by` set are kept for audit but are not
/// part of the flagged set.
#[derive(Debug, Clone, Serialize)]
pub struct ReportedLine {
    pub line_index: usize,
    pub features: LineFeatures,
    pub reasons: Vec<FlagReason>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub removed_by: Option<RemovalReason>,
}

/// All candidates produced by one classification pass.
#[derive(Debug, Clone, Default)]
pub struct ReportedLines {
    pub lines: Vec<ReportedLine>,
}

impl ReportedLines {
    /// Candidates still flagged after any filtering.
    pub fn flagged(&self) -> impl Iterator<Item = &ReportedLine> {
        self.lines.iter().filter(|l| l.removed_by.is_none())
    }

    /// Candidates dropped by a filter, kept for audit.
    pub fn removed(&self) -> impl Iterator<Item = &ReportedLine> {
        self.lines.iter().filter(|l| l.removed_by.is_some())
    }

    pub fn flagged_indices(&self) -> Vec<usize> {
        self.flagged().map(|l| l.line_index).collect()
    }
}

/// Everything the classifier consumes for one line.
#[derive(Debug, Clone)]
pub struct ClassifyInput<'a> {
    pub line_index: usize,
    pub features: &'a LineFeatures,
    /// Whether the *original* line is keyword-only (see `srcmodel`).
    pub keyword_only: bool,
}

fn near_comment(features: &LineFeatures, criterion: &Criterion) -> bool {
    match (features.dfc, criterion.dfc_limit) {
        (Some(dfc), Some(limit)) => dfc > 0 && dfc < limit,
        _ => false,
    }
}

/// Does this line's feature set satisfy the criterion? Lines the model
/// reproduced exactly (`ld == 0`) are never flagged.
pub fn classify_line(features: &LineFeatures, criterion: &Criterion) -> bool {
    if features.ld == 0 {
        return false;
    }
    match criterion.kind {
        CriterionKind::C0 => features.ld <= criterion.ld_limit,
        CriterionKind::C1 | CriterionKind::C2 => {
            features.ld <= criterion.ld_limit || near_comment(features, criterion)
        }
    }
}

/// Apply the C2 removal filters in fixed priority order and return the first
/// that fires: whitespace-only difference, keyword-only original, then low
/// mean logprob (skipped silently when the backend reports no logprobs).
pub fn removal_reason(
    features: &LineFeatures,
    keyword_only: bool,
    criterion: &Criterion,
) -> Option<RemovalReason> {
    if features.ld_no_ws == 0 {
        return Some(RemovalReason::WsRecompute);
    }
    if keyword_only {
        return Some(RemovalReason::KeywordOnly);
    }
    if let Some(logprob) = features.mean_logprob {
        if logprob < criterion.logprob_threshold {
            return Some(RemovalReason::LowLogprob);
        }
    }
    None
}

/// Mark C2 candidates removed by the filters. Entries already carrying a
/// removal reason are left alone.
pub fn reduce_fp(
    candidates: &mut ReportedLines,
    keyword_only: &dyn Fn(usize) -> bool,
    criterion: &Criterion,
) {
    for line in &mut candidates.lines {
        if line.removed_by.is_none() {
            line.removed_by =
                removal_reason(&line.features, keyword_only(line.line_index), criterion);
        }
    }
}

/// Classify a whole scored span. Deterministic: same inputs, same report.
pub fn classify_lines(inputs: &[ClassifyInput], criterion: &Criterion) -> ReportedLines {
    let mut out = ReportedLines::default();
    for input in inputs {
        if !classify_line(input.features, criterion) {
            continue;
        }
        let mut reasons = Vec::new();
        if input.features.ld > 0 && input.features.ld <= criterion.ld_limit {
            reasons.push(FlagReason::WithinLd);
        }
        if criterion.kind != CriterionKind::C0 && near_comment(input.features, criterion) {
            reasons.push(FlagReason::NearComment);
        }
        out.lines.push(ReportedLine {
            line_index: input.line_index,
            features: input.features.clone(),
            reasons,
            removed_by: None,
        });
    }
    if criterion.kind == CriterionKind::C2 {
        let keyword_flags: std::collections::HashMap<usize, bool> = inputs
            .iter()
            .map(|i| (i.line_index, i.keyword_only))
            .collect();
        reduce_fp(
            &mut out,
            &|idx| keyword_flags.get(&idx).copied().unwrap_or(false),
            criterion,
        );
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn feats(ld: usize, dfc: Option<usize>) -> LineFeatures {
        LineFeatures {
            ld,
            ld_no_ws: ld,
            bleu1: None,
            bleu_cumulative: None,
            dfc,
            mean_logprob: None,
            prev_comment_bleu1: None,
        }
    }

    #[test]
    fn c2_flags_small_edit_near_comment() {
        assert!(classify_line(&feats(15, Some(1)), &Criterion::c2(20, 10)));
    }

    #[test]
    fn zero_edit_distance_is_never_flagged() {
        for c in [Criterion::c0(20), Criterion::c1(20, 10), Criterion::c2(20, 10)] {
            assert!(!classify_line(&feats(0, Some(1)), &c));
        }
    }

    #[test]
    fn dfc_clause_rescues_large_edits() {
        let c = Criterion::c1(20, 10);
        assert!(classify_line(&feats(25, Some(5)), &c));
        assert!(!classify_line(&feats(25, None), &c));
    }

    #[test]
    fn dfc_bounds_are_strict() {
        let c = Criterion::c1(20, 10);
        assert!(!classify_line(&feats(25, Some(0)), &c));
        assert!(!classify_line(&feats(25, Some(10)), &c));
        assert!(classify_line(&feats(25, Some(9)), &c));
        assert!(classify_line(&feats(25, Some(1)), &c));
    }

    #[test]
    fn ld_limit_is_inclusive() {
        let c = Criterion::c0(20);
        assert!(classify_line(&feats(20, None), &c));
        assert!(!classify_line(&feats(21, None), &c));
        assert!(classify_line(&feats(1, None), &c));
    }

    #[test]
    fn c0_ignores_dfc() {
        assert!(!classify_line(&feats(25, Some(5)), &Criterion::c0(20)));
    }

    #[test]
    fn removal_priority_order() {
        let c = Criterion::c2(20, 10);
        // Whitespace recompute wins even when the line is also keyword-only
        // and low-confidence.
        let mut f = feats(1, Some(1));
        f.ld_no_ws = 0;
        f.mean_logprob = Some(-3.0);
        assert_eq!(removal_reason(&f, true, &c), Some(RemovalReason::WsRecompute));

        let mut f = feats(7, Some(3));
        f.mean_logprob = Some(-3.0);
        assert_eq!(removal_reason(&f, true, &c), Some(RemovalReason::KeywordOnly));

        let mut f = feats(18, Some(3));
        f.mean_logprob = Some(-0.6);
        assert_eq!(removal_reason(&f, false, &c), Some(RemovalReason::LowLogprob));
    }

    #[test]
    fn logprob_threshold_is_strict_and_optional() {
        let c = Criterion::c2(20, 10);
        let mut f = feats(18, Some(3));
        f.mean_logprob = Some(-0.33);
        assert_eq!(removal_reason(&f, false, &c), None);
        f.mean_logprob = Some(-0.5);
        assert_eq!(removal_reason(&f, false, &c), None);
        // Backends without logprobs silently disable the rule.
        f.mean_logprob = None;
        assert_eq!(removal_reason(&f, false, &c), None);
    }

    #[test]
    fn classify_lines_applies_filters_only_for_c2() {
        let ws = {
            let mut f = feats(1, Some(1));
            f.ld_no_ws = 0;
            f
        };
        let real = feats(15, Some(1));
        let inputs = vec![
            ClassifyInput { line_index: 0, features: &ws, keyword_only: false },
            ClassifyInput { line_index: 1, features: &real, keyword_only: false },
        ];

        let c1 = classify_lines(&inputs, &Criterion::c1(20, 10));
        assert_eq!(c1.flagged_indices(), vec![0, 1]);

        let c2 = classify_lines(&inputs, &Criterion::c2(20, 10));
        assert_eq!(c2.flagged_indices(), vec![1]);
        let audit: Vec<_> = c2.removed().collect();
        assert_eq!(audit.len(), 1);
        assert_eq!(audit[0].line_index, 0);
        assert_eq!(audit[0].removed_by, Some(RemovalReason::WsRecompute));
    }

    #[test]
    fn reasons_track_which_clause_fired() {
        let c = Criterion::c2(20, 10);
        let within = classify_lines(
            &[ClassifyInput { line_index: 0, features: &feats(15, Some(20)), keyword_only: false }],
            &c,
        );
        assert_eq!(within.lines[0].reasons, vec![FlagReason::WithinLd]);

        let near = classify_lines(
            &[ClassifyInput { line_index: 0, features: &feats(25, Some(5)), keyword_only: false }],
            &c,
        );
        assert_eq!(near.lines[0].reasons, vec![FlagReason::NearComment]);

        let both = classify_lines(
            &[ClassifyInput { line_index: 0, features: &feats(15, Some(5)), keyword_only: false }],
            &c,
        );
        assert_eq!(
            both.lines[0].reasons,
            vec![FlagReason::WithinLd, FlagReason::NearComment]
        );
    }

    #[test]
    fn criterion_labels() {
        assert_eq!(Criterion::c0(10).to_string(), "C0(10)");
        assert_eq!(Criterion::c1(20, 10).to_string(), "C1(20,10)");
        assert_eq!(Criterion::c2(20, 10).to_string(), "C2(20,10)");
    }
}
