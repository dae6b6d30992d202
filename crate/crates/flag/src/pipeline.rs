//! Per-file driving loop: for every checked line, build the prompt, ask the
//! backend for a regeneration, and extract comparison features. Generation is
//! the only side-effectful stage, so it is parallelized here; the feature
//! pass afterwards is sequential and deterministic.

use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use crate::backend::{generate_line, BackendError, CompletionBackend, GeneratedLine};
use crate::features::{extract_features, LineFeatures};
use crate::prompting::{GenerationParams, PromptMode};
use crate::srcmodel::{is_keyword_only, PreprocessedFile};

/// Everything recorded about one checked line: what the model produced and
/// how it compares to the original. Carries the original text and the
/// keyword-only marker so stored runs can be rescored without the source
/// file.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LineRun {
    /// Index into the preprocessed line list.
    pub loc: usize,
    /// 1-based line number in the original file.
    pub original_line_no: u32,
    /// Original line text (trailing whitespace already trimmed).
    pub original: String,
    pub generated: GeneratedLine,
    pub features: LineFeatures,
    /// True when the original's code part is a bare language keyword.
    pub keyword_only: bool,
}

/// Regenerate and featurize every checked line of `file`.
///
/// Workers pull line indices from a shared counter, so an expensive line
/// does not stall the others. The first backend error cancels remaining
/// work and is returned; already-finished lines are discarded rather than
/// reported partially.
pub fn run_file(
    file: &PreprocessedFile,
    mode: PromptMode,
    params: &GenerationParams,
    backend: &dyn CompletionBackend,
    parallelism: usize,
) -> Result<Vec<LineRun>, BackendError> {
    let indices: Vec<usize> = file.checked_indices().collect();
    let workers = parallelism.max(1).min(indices.len().max(1));

    let next = AtomicUsize::new(0);
    let failed = AtomicBool::new(false);
    let slots: Vec<Mutex<Option<Result<GeneratedLine, BackendError>>>> =
        indices.iter().map(|_| Mutex::new(None)).collect();

    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let k = next.fetch_add(1, Ordering::SeqCst);
                if k >= indices.len() || failed.load(Ordering::SeqCst) {
                    return;
                }
                let result = generate_line(file, indices[k], mode, params, backend);
                if result.is_err() {
                    failed.store(true, Ordering::SeqCst);
                }
                *slots[k].lock().expect("slot lock") = Some(result);
            });
        }
    });

    let mut generated = Vec::with_capacity(indices.len());
    for slot in slots {
        match slot.into_inner().expect("slot lock") {
            Some(Ok(g)) => generated.push(Some(g)),
            Some(Err(e)) => return Err(e),
            None => generated.push(None),
        }
    }
    // A worker bailing early (after another failed) leaves holes; the error
    // return above means we only get here when every slot is filled.
    let generated: Vec<GeneratedLine> =
        generated.into_iter().map(|g| g.expect("all lines generated")).collect();

    let profile = file.profile();
    let mut runs: Vec<LineRun> = indices
        .iter()
        .zip(generated)
        .map(|(&loc, generated)| {
            let line = &file.lines[loc];
            let features = extract_features(
                line,
                &generated.text,
                generated.token_logprobs.as_deref(),
                file,
                loc,
                &profile,
            );
            LineRun {
                loc,
                original_line_no: line.original_line_no,
                original: line.raw.clone(),
                generated,
                features,
                keyword_only: is_keyword_only(&line.code_part, &profile),
            }
        })
        .collect();

    // Second pass: each line inherits the comment-similarity of the closest
    // preceding comment line, when that line was part of this run and the
    // model produced a comparable comment there.
    let first = indices.first().copied().unwrap_or(0);
    let prev: Vec<Option<f64>> = runs
        .iter()
        .map(|run| {
            file.prior_comment_index[run.loc]
                .filter(|&ci| ci >= first)
                .and_then(|ci| runs[ci - first].features.bleu1)
        })
        .collect();
    for (run, prev) in runs.iter_mut().zip(prev) {
        run.features.prev_comment_bleu1 = prev;
    }

    Ok(runs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::{MockScript, ScriptedMock};
    use crate::srcmodel::{preprocess, LanguageId};

    fn file(text: &str) -> PreprocessedFile {
        preprocess(text, "t.c", LanguageId::C, 1).unwrap()
    }

    #[test]
    fn echo_run_produces_zero_distances() {
        let f = file("int a = 1;\nint b = 2;\n// sum them\nint c = a + b;\n");
        let mock = ScriptedMock::echo(&f);
        let runs = run_file(&f, PromptMode::AutoComplete, &GenerationParams::default(), &mock, 2)
            .unwrap();
        assert_eq!(runs.len(), 4);
        assert!(runs.iter().all(|r| r.features.ld == 0));
        assert_eq!(runs[3].features.dfc, Some(1));
        assert_eq!(runs[0].original_line_no, 1);
        assert_eq!(runs[3].original, "int c = a + b;");
    }

    #[test]
    fn prev_comment_similarity_propagates_forward() {
        let f = file("// add the numbers\nint c = a + b;\nint d = c;\n");
        // Echo regenerates the comment exactly, so its own BLEU-1 is 1.
        let mock = ScriptedMock::echo(&f);
        let runs =
            run_file(&f, PromptMode::AutoComplete, &GenerationParams::default(), &mock, 1).unwrap();
        assert_eq!(runs[0].features.prev_comment_bleu1, Some(1.0));
        assert_eq!(runs[1].features.prev_comment_bleu1, Some(1.0));
        assert_eq!(runs[2].features.prev_comment_bleu1, Some(1.0));
    }

    #[test]
    fn prev_comment_before_start_line_is_not_available() {
        let text = "// header comment\nint a = 1;\nint b = 2;\n";
        let f = preprocess(text, "t.c", LanguageId::C, 2).unwrap();
        let mock = ScriptedMock::echo(&f);
        let runs =
            run_file(&f, PromptMode::AutoComplete, &GenerationParams::default(), &mock, 1).unwrap();
        assert_eq!(runs.len(), 2);
        // dfc still counts back to the header, but no generation exists there.
        assert_eq!(runs[0].features.dfc, Some(1));
        assert_eq!(runs[0].features.prev_comment_bleu1, None);
    }

    #[test]
    fn keyword_only_marker_follows_original_text() {
        let f = file("int main() {\nreturn 0;\n}\n");
        let mock = ScriptedMock::echo(&f);
        let runs =
            run_file(&f, PromptMode::AutoComplete, &GenerationParams::default(), &mock, 4).unwrap();
        assert!(!runs[0].keyword_only);
        assert!(!runs[1].keyword_only);
        assert!(runs[2].keyword_only);
    }

    #[test]
    fn backend_failure_aborts_the_run() {
        let f = file("int a = 1;\nint b = 2;\n");
        // A scripted mock for a different file rejects these prompts.
        let other = file("float x;\nfloat y;\n");
        let mock = ScriptedMock::for_file(&other, MockScript::echo());
        let err = run_file(&f, PromptMode::AutoComplete, &GenerationParams::default(), &mock, 2)
            .unwrap_err();
        assert!(matches!(err, BackendError::Transport(_)));
    }
}
