//! Report emitters: per-file flag reports (text and JSON), the per-source
//! metrics table (text and CSV), and the sweep/ROC/metadata CSVs. Everything
//! here is pure formatting over already-computed results, with stable field
//! order and fixed float precision so outputs diff cleanly between runs.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::classifier::{Criterion, FlagReason, RemovalReason, ReportedLines};
use crate::evalharness::{EvalMetrics, MetadataRecord, RocPoint, SweepCell};
use crate::features::LineFeatures;
use crate::pipeline::LineRun;

/// One line in a flag report, flagged or removed-for-audit.
#[derive(Debug, Clone, Serialize)]
pub struct ReportEntry {
    pub line_no: u32,
    pub original: String,
    pub generated: String,
    pub reasons: Vec<FlagReason>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub removed_by: Option<RemovalReason>,
    pub features: LineFeatures,
}

/// A finished check of one file under one criterion.
#[derive(Debug, Clone, Serialize)]
pub struct FlagReport {
    pub file: String,
    /// Fingerprint of the backend + mode + params that produced the run.
    pub config: String,
    /// Criterion label, e.g. "C2(20,10)".
    pub criterion: String,
    pub flagged: Vec<ReportEntry>,
    /// Candidates dropped by the false-positive filter, kept for audit.
    pub removed: Vec<ReportEntry>,
}

impl FlagReport {
    /// Join classified candidates back to their runs.
    pub fn assemble(
        file: &str,
        fingerprint: &str,
        criterion: &Criterion,
        runs: &[LineRun],
        reported: &ReportedLines,
    ) -> FlagReport {
        let entry = |idx: usize, reasons: &[FlagReason], removed_by: Option<RemovalReason>| {
            let run = &runs[idx];
            ReportEntry {
                line_no: run.original_line_no,
                original: run.original.clone(),
                generated: run.generated.text.clone(),
                reasons: reasons.to_vec(),
                removed_by,
                features: run.features.clone(),
            }
        };
        FlagReport {
            file: file.to_string(),
            config: fingerprint.to_string(),
            criterion: criterion.to_string(),
            flagged: reported
                .flagged()
                .map(|l| entry(l.line_index, &l.reasons, None))
                .collect(),
            removed: reported
                .removed()
                .map(|l| entry(l.line_index, &l.reasons, l.removed_by))
                .collect(),
        }
    }

    pub fn to_json(&self) -> String {
        let mut out = serde_json::to_string_pretty(self).expect("report is serializable");
        out.push('\n');
        out
    }

    /// Human-oriented rendering: one block per flagged line, then a short
    /// audit trail of removed candidates.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("{} — {} under {}\n", self.file, self.config, self.criterion));
        if self.flagged.is_empty() {
            out.push_str("no lines flagged\n");
        }
        for e in &self.flagged {
            out.push_str(&format!(
                "line {:>4}  {}\n",
                e.line_no,
                summarize_features(&e.features)
            ));
            out.push_str(&format!("  original : {}\n", e.original));
            out.push_str(&format!("  generated: {}\n", e.generated));
        }
        if !self.removed.is_empty() {
            out.push_str("removed as likely false positives:\n");
            for e in &self.removed {
                let why = e
                    .removed_by
                    .map(removal_label)
                    .unwrap_or("unknown");
                out.push_str(&format!("  line {:>4}  {} ({})\n", e.line_no, e.original, why));
            }
        }
        out
    }
}

fn summarize_features(f: &LineFeatures) -> String {
    let mut parts = vec![format!("ld {}", f.ld)];
    if let Some(dfc) = f.dfc {
        parts.push(format!("dfc {dfc}"));
    }
    if let Some(b) = f.bleu1 {
        parts.push(format!("bleu1 {b:.3}"));
    }
    if let Some(lp) = f.mean_logprob {
        parts.push(format!("logprob {lp:.3}"));
    }
    parts.join(", ")
}

fn removal_label(r: RemovalReason) -> &'static str {
    match r {
        RemovalReason::WsRecompute => "whitespace-only difference",
        RemovalReason::KeywordOnly => "keyword-only line",
        RemovalReason::LowLogprob => "low model confidence",
    }
}

/// Metrics for one row of the summary table: a source group or the pooled
/// total, evaluated under every requested criterion.
pub struct MetricsRow<'a> {
    pub source: String,
    /// Criterion label → pooled metrics, insertion order preserved by caller.
    pub by_criterion: Vec<(&'a str, EvalMetrics)>,
}

/// CSV of the summary table: one record per (source, criterion).
pub fn metrics_csv(rows: &[MetricsRow]) -> String {
    let mut out = String::from("source,criterion,defects,dd,fpr,tpr\n");
    for row in rows {
        for (label, m) in &row.by_criterion {
            out.push_str(&format!(
                "{},{},{},{},{:.6},{:.6}\n",
                csv_field(&row.source),
                csv_field(label),
                m.total_defects,
                m.dd,
                m.fpr,
                m.tpr
            ));
        }
    }
    out
}

/// Aligned-text rendering of the summary table, criteria as column groups.
pub fn metrics_table(rows: &[MetricsRow]) -> String {
    let labels: Vec<&str> = rows
        .first()
        .map(|r| r.by_criterion.iter().map(|(l, _)| *l).collect())
        .unwrap_or_default();
    let mut out = String::new();
    out.push_str(&format!("{:<10}", "source"));
    for label in &labels {
        out.push_str(&format!("  {:>22}", format!("{label} dd/fpr/tpr")));
    }
    out.push('\n');
    for row in rows {
        out.push_str(&format!("{:<10}", row.source));
        for (_, m) in &row.by_criterion {
            out.push_str(&format!(
                "  {:>22}",
                format!("{:>3}  {:.3}  {:.3}", m.dd, m.fpr, m.tpr)
            ));
        }
        out.push('\n');
    }
    out
}

/// Group per-case metrics into table rows: one per source group in sorted
/// order plus an "all" row, each evaluated under each labeled criterion.
pub fn metrics_rows<'a>(
    labels: &[&'a str],
    per_case: &BTreeMap<String, Vec<Vec<EvalMetrics>>>,
) -> Result<Vec<MetricsRow<'a>>, crate::evalharness::HarnessError> {
    use crate::evalharness::aggregate;
    let mut rows = Vec::new();
    let mut all: Vec<Vec<EvalMetrics>> = labels.iter().map(|_| Vec::new()).collect();
    for (source, cases) in per_case {
        let mut by_criterion = Vec::new();
        for (ci, label) in labels.iter().enumerate() {
            let group: Vec<EvalMetrics> =
                cases.iter().map(|metrics| metrics[ci].clone()).collect();
            all[ci].extend(group.iter().cloned());
            by_criterion.push((*label, aggregate(&group)?));
        }
        rows.push(MetricsRow { source: source.clone(), by_criterion });
    }
    let mut by_criterion = Vec::new();
    for (ci, label) in labels.iter().enumerate() {
        by_criterion.push((*label, aggregate(&all[ci])?));
    }
    rows.push(MetricsRow { source: "all".into(), by_criterion });
    Ok(rows)
}

/// JSON rendering of the summary table, one object per source row.
pub fn metrics_json(rows: &[MetricsRow]) -> String {
    #[derive(Serialize)]
    struct JsonCell<'a> {
        label: &'a str,
        dd: u32,
        total_defects: u32,
        total_lines: u64,
        true_positive_count: usize,
        false_positive_count: usize,
        fpr: f64,
        tpr: f64,
    }
    #[derive(Serialize)]
    struct JsonRow<'a> {
        source: &'a str,
        criteria: Vec<JsonCell<'a>>,
    }
    let rows: Vec<JsonRow> = rows
        .iter()
        .map(|row| JsonRow {
            source: &row.source,
            criteria: row
                .by_criterion
                .iter()
                .map(|(label, m)| JsonCell {
                    label,
                    dd: m.dd,
                    total_defects: m.total_defects,
                    total_lines: m.total_lines,
                    true_positive_count: m.true_positive_lines.len(),
                    false_positive_count: m.false_positive_lines.len(),
                    fpr: m.fpr,
                    tpr: m.tpr,
                })
                .collect(),
        })
        .collect();
    let mut out = serde_json::to_string_pretty(&rows).expect("rows are serializable");
    out.push('\n');
    out
}

/// Sweep grid CSV: one row per (ld_limit, dfc_limit) cell.
pub fn sweep_csv(cells: &[SweepCell]) -> String {
    let mut out = String::from("ld_limit,dfc_limit,dd,fpr,tpr\n");
    for c in cells {
        out.push_str(&format!(
            "{},{},{},{:.6},{:.6}\n",
            c.ld_limit, c.dfc_limit, c.dd, c.fpr, c.tpr
        ));
    }
    out
}

/// ROC CSV: one row per threshold; the flag-everything sentinel row is
/// labeled "all".
pub fn roc_csv(points: &[RocPoint]) -> String {
    let mut out = String::from("threshold,fpr,tpr\n");
    for p in points {
        let threshold =
            p.threshold.map_or_else(|| "all".to_string(), |t| t.to_string());
        out.push_str(&format!("{},{:.6},{:.6}\n", threshold, p.fpr, p.tpr));
    }
    out
}

/// Per-benchmark metadata CSV, one row per case; absent averages stay empty.
pub fn metadata_csv(records: &[MetadataRecord]) -> String {
    let mut out = String::from(
        "case_id,detected,avg_ld,avg_dfc,avg_bleu,avg_logprob,comment_count,line_count\n",
    );
    for r in records {
        out.push_str(&format!(
            "{},{},{:.6},{},{},{},{},{}\n",
            csv_field(&r.case_id),
            r.detected,
            r.avg_ld,
            opt(r.avg_dfc),
            opt(r.avg_bleu),
            opt(r.avg_logprob),
            r.comment_count,
            r.line_count
        ));
    }
    out
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |v| format!("{v:.6}"))
}

/// Quote a CSV field only when it needs it.
fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}
