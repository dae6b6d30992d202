//! Benchmark harness: load case manifests, persist per-line run records,
//! score them as detection metrics, and rescore stored records under swept
//! limits or ROC thresholds. Scoring is a pure function of a stored run, a
//! case, and a criterion — nothing here ever calls a backend.

use std::collections::BTreeSet;
use std::fs;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::classifier::{classify_lines, ClassifyInput, Criterion, CriterionKind};
use crate::pipeline::LineRun;
use crate::srcmodel::LanguageId;

/// Defect class a benchmark belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Category {
    Security,
    Functional,
}

/// One benchmark: a source file with known defect line(s).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BenchmarkCase {
    pub id: String,
    /// Source file path; relative paths are resolved against the manifest.
    pub path: String,
    pub language_id: LanguageId,
    /// 1-based line numbers of the defect. A multi-line defect counts once.
    pub defect_lines: BTreeSet<u32>,
    pub category: Category,
    /// Benchmark family the case is reported under (e.g. C1, P2, V1).
    pub source_group: String,
    /// First line to check; earlier lines only feed prompts.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub start_line: Option<u32>,
}

/// Load a manifest: a JSON array of benchmark cases. Relative case paths are
/// resolved against the manifest's directory so manifests can ship next to
/// their files.
pub fn load_manifest(path: &Path) -> Result<Vec<BenchmarkCase>, HarnessError> {
    let text = fs::read_to_string(path).map_err(|e| HarnessError::Io {
        path: path.display().to_string(),
        source: e,
    })?;
    let mut cases: Vec<BenchmarkCase> =
        serde_json::from_str(&text).map_err(|e| HarnessError::Parse {
            path: path.display().to_string(),
            source: e,
        })?;
    if cases.is_empty() {
        return Err(HarnessError::EmptyManifest { path: path.display().to_string() });
    }
    let base = path.parent().unwrap_or_else(|| Path::new("."));
    for case in &mut cases {
        if case.defect_lines.is_empty() {
            return Err(HarnessError::NoDefectLines { case: case.id.clone() });
        }
        let p = Path::new(&case.path);
        if p.is_relative() {
            case.path = base.join(p).display().to_string();
        }
    }
    Ok(cases)
}

/// A persisted generation pass over one case: every checked line with its
/// regeneration and features. Stored as line-delimited JSON so huge files
/// stream; each row repeats the case id and config fingerprint, making rows
/// self-describing.
#[derive(Debug, Clone)]
pub struct RunRecord {
    pub case_id: String,
    /// Backend + mode + generation-params fingerprint.
    pub fingerprint: String,
    pub lines: Vec<LineRun>,
}

/// One JSONL row of a stored run.
#[derive(Debug, Serialize, Deserialize)]
struct RunRow {
    case_id: String,
    fingerprint: String,
    created_at: u64,
    #[serde(flatten)]
    line: LineRun,
}

/// Write a run as `<case_id>.jsonl` under `dir`, one row per checked line.
pub fn write_run(dir: &Path, run: &RunRecord, created_at: u64) -> Result<PathBuf, HarnessError> {
    fs::create_dir_all(dir).map_err(|e| HarnessError::Io {
        path: dir.display().to_string(),
        source: e,
    })?;
    let path = dir.join(format!("{}.jsonl", run.case_id));
    let mut out = Vec::new();
    for line in &run.lines {
        let row = RunRow {
            case_id: run.case_id.clone(),
            fingerprint: run.fingerprint.clone(),
            created_at,
            line: line.clone(),
        };
        serde_json::to_writer(&mut out, &row).expect("run rows are serializable");
        out.push(b'\n');
    }
    fs::write(&path, out).map_err(|e| HarnessError::Io {
        path: path.display().to_string(),
        source: e,
    })?;
    Ok(path)
}

/// Read a stored run back. Every row must agree on case id and fingerprint.
pub fn read_run(path: &Path) -> Result<RunRecord, HarnessError> {
    let file = fs::File::open(path).map_err(|e| HarnessError::Io {
        path: path.display().to_string(),
        source: e,
    })?;
    let mut case_id: Option<String> = None;
    let mut fingerprint: Option<String> = None;
    let mut lines = Vec::new();
    for raw in BufReader::new(file).lines() {
        let raw = raw.map_err(|e| HarnessError::Io {
            path: path.display().to_string(),
            source: e,
        })?;
        if raw.trim().is_empty() {
            continue;
        }
        let row: RunRow = serde_json::from_str(&raw).map_err(|e| HarnessError::Parse {
            path: path.display().to_string(),
            source: e,
        })?;
        match (&case_id, &fingerprint) {
            (None, _) => {
                case_id = Some(row.case_id);
                fingerprint = Some(row.fingerprint);
            }
            (Some(id), Some(fp)) if *id != row.case_id || *fp != row.fingerprint => {
                return Err(HarnessError::InconsistentRun { path: path.display().to_string() })
            }
            _ => {}
        }
        lines.push(row.line);
    }
    match (case_id, fingerprint) {
        (Some(case_id), Some(fingerprint)) => Ok(RunRecord { case_id, fingerprint, lines }),
        _ => Err(HarnessError::EmptyRun { path: path.display().to_string() }),
    }
}

/// Detection metrics for one case or a pooled group.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalMetrics {
    /// Defects detected: a defect counts once however many of its lines hit.
    pub dd: u32,
    pub total_defects: u32,
    /// Checkable lines scored (the FPR denominator).
    pub total_lines: u64,
    pub tpr: f64,
    pub fpr: f64,
    pub true_positive_lines: BTreeSet<(String, u32)>,
    pub false_positive_lines: BTreeSet<(String, u32)>,
}

/// Score one stored run against its case under a criterion. A defect is
/// detected iff any of its defect lines is flagged; every other flagged line
/// is a false positive; the denominator is the number of lines scored.
pub fn score_run(
    run: &RunRecord,
    case: &BenchmarkCase,
    criterion: &Criterion,
) -> Result<EvalMetrics, HarnessError> {
    if run.case_id != case.id {
        return Err(HarnessError::CaseMismatch {
            run: run.case_id.clone(),
            case: case.id.clone(),
        });
    }
    let inputs: Vec<ClassifyInput> = run
        .lines
        .iter()
        .enumerate()
        .map(|(k, line)| ClassifyInput {
            line_index: k,
            features: &line.features,
            keyword_only: line.keyword_only,
        })
        .collect();
    let reported = classify_lines(&inputs, criterion);
    let flagged: BTreeSet<u32> = reported
        .flagged_indices()
        .into_iter()
        .map(|k| run.lines[k].original_line_no)
        .collect();

    let mut true_positive_lines = BTreeSet::new();
    let mut false_positive_lines = BTreeSet::new();
    for &line_no in &flagged {
        if case.defect_lines.contains(&line_no) {
            true_positive_lines.insert((case.id.clone(), line_no));
        } else {
            false_positive_lines.insert((case.id.clone(), line_no));
        }
    }
    let dd = u32::from(!true_positive_lines.is_empty());
    let total_lines = run.lines.len() as u64;
    Ok(EvalMetrics {
        dd,
        total_defects: 1,
        total_lines,
        tpr: f64::from(dd),
        fpr: ratio(false_positive_lines.len() as u64, total_lines),
        true_positive_lines,
        false_positive_lines,
    })
}

/// Pool a group of per-case metrics: counts and line sets add up, rates are
/// recomputed from the pooled counts (never averaged).
pub fn aggregate(metrics: &[EvalMetrics]) -> Result<EvalMetrics, HarnessError> {
    if metrics.is_empty() {
        return Err(HarnessError::EmptyGroup);
    }
    let mut dd = 0u32;
    let mut total_defects = 0u32;
    let mut total_lines = 0u64;
    let mut true_positive_lines = BTreeSet::new();
    let mut false_positive_lines = BTreeSet::new();
    for m in metrics {
        dd += m.dd;
        total_defects += m.total_defects;
        total_lines += m.total_lines;
        true_positive_lines.extend(m.true_positive_lines.iter().cloned());
        false_positive_lines.extend(m.false_positive_lines.iter().cloned());
    }
    Ok(EvalMetrics {
        dd,
        total_defects,
        total_lines,
        tpr: ratio(u64::from(dd), u64::from(total_defects)),
        fpr: ratio(false_positive_lines.len() as u64, total_lines),
        true_positive_lines,
        false_positive_lines,
    })
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// One cell of a limit sweep: pooled metrics at (ld_limit, dfc_limit).
#[derive(Debug, Clone, Serialize)]
pub struct SweepCell {
    pub ld_limit: usize,
    pub dfc_limit: usize,
    pub dd: u32,
    pub total_defects: u32,
    pub fpr: f64,
    pub tpr: f64,
}

/// Rescore stored runs over a grid of limits, without touching any backend.
pub fn sweep(
    pairs: &[(RunRecord, BenchmarkCase)],
    ld_limits: impl IntoIterator<Item = usize> + Clone,
    dfc_limits: impl IntoIterator<Item = usize> + Clone,
    kind: CriterionKind,
    logprob_threshold: f64,
) -> Result<Vec<SweepCell>, HarnessError> {
    let mut cells = Vec::new();
    for ld_limit in ld_limits {
        for dfc_limit in dfc_limits.clone() {
            let criterion = Criterion {
                kind,
                ld_limit,
                dfc_limit: Some(dfc_limit),
                logprob_threshold,
            };
            let per_case = pairs
                .iter()
                .map(|(run, case)| score_run(run, case, &criterion))
                .collect::<Result<Vec<_>, _>>()?;
            let pooled = aggregate(&per_case)?;
            cells.push(SweepCell {
                ld_limit,
                dfc_limit,
                dd: pooled.dd,
                total_defects: pooled.total_defects,
                fpr: pooled.fpr,
                tpr: pooled.tpr,
            });
        }
    }
    Ok(cells)
}

/// One ROC point. `threshold` is None for the flag-everything sentinel.
#[derive(Debug, Clone, Serialize)]
pub struct RocPoint {
    pub threshold: Option<usize>,
    pub fpr: f64,
    pub tpr: f64,
}

/// Pooled (fpr, tpr) per ld threshold, ascending. Because flagging requires
/// ld > 0, even huge thresholds leave exact regenerations unflagged and the
/// curve can top out below (1,1); with `sentinel` a final flag-everything
/// point is appended, scored against the lines a flag-everything oracle can
/// get wrong (the non-defect lines), pinning the endpoint at (1,1).
pub fn roc_points(
    pairs: &[(RunRecord, BenchmarkCase)],
    thresholds: &[usize],
    sentinel: bool,
) -> Result<Vec<RocPoint>, HarnessError> {
    let mut sorted = thresholds.to_vec();
    sorted.sort_unstable();
    sorted.dedup();

    let mut points = Vec::with_capacity(sorted.len() + usize::from(sentinel));
    for t in sorted {
        let criterion = Criterion::c0(t);
        let per_case = pairs
            .iter()
            .map(|(run, case)| score_run(run, case, &criterion))
            .collect::<Result<Vec<_>, _>>()?;
        let pooled = aggregate(&per_case)?;
        points.push(RocPoint { threshold: Some(t), fpr: pooled.fpr, tpr: pooled.tpr });
    }

    if sentinel {
        let mut dd = 0u64;
        let mut defects = 0u64;
        let mut fp = 0u64;
        let mut non_defect_lines = 0u64;
        for (run, case) in pairs {
            let scored: BTreeSet<u32> =
                run.lines.iter().map(|l| l.original_line_no).collect();
            let hit = case.defect_lines.iter().any(|d| scored.contains(d));
            dd += u64::from(hit);
            defects += 1;
            let defect_scored =
                case.defect_lines.iter().filter(|d| scored.contains(d)).count() as u64;
            fp += scored.len() as u64 - defect_scored;
            non_defect_lines += scored.len() as u64 - defect_scored;
        }
        points.push(RocPoint {
            threshold: None,
            fpr: ratio(fp, non_defect_lines),
            tpr: ratio(dd, defects),
        });
    }
    Ok(points)
}

/// Per-benchmark feature statistics, partitioned downstream by `detected`.
#[derive(Debug, Clone, Serialize)]
pub struct MetadataRecord {
    pub case_id: String,
    /// Whether the case's defect was detected under the given criterion.
    pub detected: bool,
    pub line_count: u64,
    /// Lines carrying a comment (their distance-from-comment is zero).
    pub comment_count: u64,
    pub avg_ld: f64,
    pub avg_dfc: Option<f64>,
    pub avg_bleu: Option<f64>,
    pub avg_logprob: Option<f64>,
}

/// Summarize one stored run's features.
pub fn benchmark_metadata(
    run: &RunRecord,
    case: &BenchmarkCase,
    criterion: &Criterion,
) -> Result<MetadataRecord, HarnessError> {
    let metrics = score_run(run, case, criterion)?;
    let line_count = run.lines.len() as u64;
    let comment_count =
        run.lines.iter().filter(|l| l.features.dfc == Some(0)).count() as u64;
    let avg_ld = mean(run.lines.iter().map(|l| l.features.ld as f64)).unwrap_or(0.0);
    Ok(MetadataRecord {
        case_id: case.id.clone(),
        detected: metrics.dd > 0,
        line_count,
        comment_count,
        avg_ld,
        avg_dfc: mean(run.lines.iter().filter_map(|l| l.features.dfc.map(|d| d as f64))),
        avg_bleu: mean(run.lines.iter().filter_map(|l| l.features.bleu1)),
        avg_logprob: mean(run.lines.iter().filter_map(|l| l.features.mean_logprob)),
    })
}

fn mean(values: impl IntoIterator<Item = f64>) -> Option<f64> {
    let mut sum = 0.0;
    let mut n = 0u64;
    for v in values {
        sum += v;
        n += 1;
    }
    (n > 0).then(|| sum / n as f64)
}

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("failed to read {path}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("failed to parse {path}")]
    Parse {
        path: String,
        #[source]
        source: serde_json::Error,
    },
    #[error("manifest {path} contains no cases")]
    EmptyManifest { path: String },
    #[error("case {case} has no defect lines")]
    NoDefectLines { case: String },
    #[error("run is for case {run}, not {case}")]
    CaseMismatch { run: String, case: String },
    #[error("run {path} mixes case ids or fingerprints")]
    InconsistentRun { path: String },
    #[error("run {path} contains no lines")]
    EmptyRun { path: String },
    #[error("cannot aggregate an empty group")]
    EmptyGroup,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::GeneratedLine;
    use crate::features::LineFeatures;

    fn feat(ld: usize) -> LineFeatures {
        LineFeatures {
            ld,
            ld_no_ws: ld,
            bleu1: None,
            bleu_cumulative: None,
            dfc: None,
            mean_logprob: None,
            prev_comment_bleu1: None,
        }
    }

    fn line(no: u32, ld: usize) -> LineRun {
        LineRun {
            loc: no as usize - 1,
            original_line_no: no,
            original: format!("line {no}"),
            generated: GeneratedLine::new(format!("gen {no}"), None),
            features: feat(ld),
            keyword_only: false,
        }
    }

    fn case(id: &str, defects: &[u32]) -> BenchmarkCase {
        BenchmarkCase {
            id: id.into(),
            path: format!("{id}.c"),
            language_id: LanguageId::C,
            defect_lines: defects.iter().copied().collect(),
            category: Category::Functional,
            source_group: "C1".into(),
            start_line: None,
        }
    }

    fn run(id: &str, lines: Vec<LineRun>) -> RunRecord {
        RunRecord { case_id: id.into(), fingerprint: "abcdef012345".into(), lines }
    }

    #[test]
    fn detection_needs_only_one_defect_line() {
        let r = run("A", vec![line(1, 5), line(2, 0), line(3, 5), line(4, 0)]);
        let c = case("A", &[3, 4]);
        let m = score_run(&r, &c, &Criterion::c0(10)).unwrap();
        // Line 3 hits the defect, line 1 is a false positive, line 4's exact
        // regeneration never flags.
        assert_eq!(m.dd, 1);
        assert_eq!(m.total_defects, 1);
        assert_eq!(m.total_lines, 4);
        assert_eq!(m.tpr, 1.0);
        assert_eq!(m.fpr, 0.25);
        assert_eq!(m.true_positive_lines.len(), 1);
        assert!(m.false_positive_lines.contains(&("A".to_string(), 1)));
    }

    #[test]
    fn nothing_flagged_scores_zero() {
        let r = run("A", vec![line(1, 0), line(2, 0)]);
        let m = score_run(&r, &case("A", &[2]), &Criterion::c0(10)).unwrap();
        assert_eq!((m.dd, m.fpr, m.tpr), (0, 0.0, 0.0));
    }

    #[test]
    fn everything_flagged_single_defect() {
        let n = 10;
        let r = run("A", (1..=n).map(|i| line(i, 1)).collect());
        let m = score_run(&r, &case("A", &[7]), &Criterion::c0(10)).unwrap();
        assert_eq!(m.dd, 1);
        assert!((m.fpr - (n as f64 - 1.0) / n as f64).abs() < 1e-15);
    }

    #[test]
    fn case_mismatch_is_an_error() {
        let r = run("A", vec![line(1, 0)]);
        let err = score_run(&r, &case("B", &[1]), &Criterion::c0(10)).unwrap_err();
        assert!(matches!(err, HarnessError::CaseMismatch { .. }));
    }

    #[test]
    fn aggregate_pools_counts_not_rates() {
        let a = score_run(
            &run("A", vec![line(1, 5), line(2, 5), line(3, 0), line(4, 0), line(5, 0),
                           line(6, 0), line(7, 0), line(8, 0), line(9, 0), line(10, 5)]),
            &case("A", &[10]),
            &Criterion::c0(10),
        )
        .unwrap();
        let b = score_run(
            &run("B", (1..=20).map(|i| line(i, if i == 1 { 3 } else { 0 })).collect()),
            &case("B", &[15]),
            &Criterion::c0(10),
        )
        .unwrap();
        // A: detected, 2 FP / 10 lines. B: missed, 1 FP / 20 lines.
        let pooled = aggregate(&[a, b]).unwrap();
        assert_eq!(pooled.dd, 1);
        assert_eq!(pooled.total_defects, 2);
        assert!((pooled.fpr - 0.1).abs() < 1e-15);
        assert!((pooled.tpr - 0.5).abs() < 1e-15);
    }

    #[test]
    fn aggregate_of_one_is_identity() {
        let m = score_run(&run("A", vec![line(1, 5)]), &case("A", &[1]), &Criterion::c0(10))
            .unwrap();
        let pooled = aggregate(std::slice::from_ref(&m)).unwrap();
        assert_eq!(pooled, m);
        assert!(matches!(aggregate(&[]), Err(HarnessError::EmptyGroup)));
    }

    #[test]
    fn sweep_degenerate_range_matches_direct_score() {
        let pairs = vec![(
            run("A", vec![line(1, 25), line(2, 5), line(3, 0)]),
            case("A", &[2]),
        )];
        let cells = sweep(&pairs, [20], [10], CriterionKind::C1, -0.5).unwrap();
        assert_eq!(cells.len(), 1);
        let direct = score_run(&pairs[0].0, &pairs[0].1, &Criterion::c1(20, 10)).unwrap();
        assert_eq!(cells[0].dd, direct.dd);
        assert_eq!(cells[0].fpr, direct.fpr);
        assert_eq!(cells[0].tpr, direct.tpr);
    }

    #[test]
    fn roc_threshold_zero_is_origin_and_sentinel_is_one_one() {
        let pairs = vec![
            (run("A", vec![line(1, 5), line(2, 0), line(3, 12)]), case("A", &[1])),
            (run("B", vec![line(1, 2), line(2, 40)]), case("B", &[2])),
        ];
        let points = roc_points(&pairs, &[0, 10, 100], true).unwrap();
        assert_eq!(points.len(), 4);
        assert_eq!((points[0].fpr, points[0].tpr), (0.0, 0.0));
        let last = points.last().unwrap();
        assert_eq!(last.threshold, None);
        assert_eq!((last.fpr, last.tpr), (1.0, 1.0));
        // Nondecreasing in both coordinates.
        for w in points.windows(2) {
            assert!(w[1].fpr >= w[0].fpr && w[1].tpr >= w[0].tpr);
        }
    }

    #[test]
    fn metadata_averages_skip_absent_features() {
        let mut l1 = line(1, 4);
        l1.features.dfc = Some(0);
        l1.features.bleu1 = Some(0.5);
        let mut l2 = line(2, 6);
        l2.features.dfc = Some(1);
        let r = run("A", vec![l1, l2]);
        let md = benchmark_metadata(&r, &case("A", &[2]), &Criterion::c0(10)).unwrap();
        assert!(md.detected);
        assert_eq!(md.line_count, 2);
        assert_eq!(md.comment_count, 1);
        assert_eq!(md.avg_ld, 5.0);
        assert_eq!(md.avg_dfc, Some(0.5));
        assert_eq!(md.avg_bleu, Some(0.5));
        assert_eq!(md.avg_logprob, None);
    }

    #[test]
    fn run_rows_round_trip_through_jsonl() {
        let dir = tempfile::tempdir().unwrap();
        let r = run("A-1", vec![line(1, 3), line(2, 0)]);
        let path = write_run(dir.path(), &r, 1_700_000_000).unwrap();
        assert!(path.ends_with("A-1.jsonl"));
        let back = read_run(&path).unwrap();
        assert_eq!(back.case_id, "A-1");
        assert_eq!(back.fingerprint, r.fingerprint);
        assert_eq!(back.lines.len(), 2);
        assert_eq!(back.lines[0].original, "line 1");
        assert_eq!(back.lines[0].features.ld, 3);
    }

    #[test]
    fn manifest_resolves_relative_paths_and_rejects_empty() {
        let dir = tempfile::tempdir().unwrap();
        let manifest = dir.path().join("cases.json");
        std::fs::write(
            &manifest,
            r#"[{"id":"X","path":"sub/x.c","language_id":"c","defect_lines":[3],"category":"security","source_group":"C1"}]"#,
        )
        .unwrap();
        let cases = load_manifest(&manifest).unwrap();
        assert_eq!(cases.len(), 1);
        assert_eq!(Path::new(&cases[0].path), dir.path().join("sub/x.c"));
        assert_eq!(cases[0].start_line, None);

        std::fs::write(&manifest, "[]").unwrap();
        assert!(matches!(load_manifest(&manifest), Err(HarnessError::EmptyManifest { .. })));

        std::fs::write(
            &manifest,
            r#"[{"id":"X","path":"x.c","language_id":"c","defect_lines":[],"category":"security","source_group":"C1"}]"#,
        )
        .unwrap();
        assert!(matches!(load_manifest(&manifest), Err(HarnessError::NoDefectLines { .. })));
    }
}
