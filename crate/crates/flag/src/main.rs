//! Command-line front end. `check` runs the full pipeline on one file;
//! `eval` runs a benchmark manifest and persists run records; `sweep`, `roc`,
//! and `metadata` rescore stored records offline without touching a backend.
//!
//! Exit codes: 0 the command ran (flagged lines are results, not failures),
//! 1 usage or I/O problem, 2 backend failure.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand};

use flag::backend::{
    run_fingerprint, ApiFamily, BackendError, CachingBackend, CompletionBackend, HttpBackend,
    MockScript, RetryPolicy, ScriptedMock,
};
use flag::classifier::{classify_lines, ClassifyInput, Criterion, CriterionKind};
use flag::config::{api_key_from_env, load_config, FileConfig};
use flag::evalharness::{
    benchmark_metadata, load_manifest, read_run, roc_points, score_run, sweep, write_run,
    BenchmarkCase, EvalMetrics, RunRecord,
};
use flag::pipeline::{run_file, LineRun};
use flag::prompting::{GenerationParams, PromptMode};
use flag::report::{
    metadata_csv, metrics_csv, metrics_json, metrics_rows, metrics_table, roc_csv, sweep_csv,
    FlagReport,
};
use flag::srcmodel::{load_source, LanguageId, PreprocessedFile};

const EXIT_USAGE: i32 = 1;
const EXIT_BACKEND: i32 = 2;

#[derive(Parser)]
#[command(
    name = "flag",
    version,
    about = "Flag anomalous source lines by regenerating them with a completion model"
)]
struct Cli {
    /// TOML config file; CLI flags override its values.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check one source file and report suspicious lines.
    Check(CheckArgs),
    /// Run every case in a benchmark manifest; write run records and metrics.
    Eval(EvalArgs),
    /// Rescore stored runs over a (ld_limit, dfc_limit) grid; emit CSV.
    Sweep(SweepArgs),
    /// Rescore stored runs per ld threshold into ROC points; emit CSV.
    Roc(RocArgs),
    /// Summarize stored runs' feature statistics per benchmark; emit CSV.
    Metadata(MetadataArgs),
}

#[derive(Args)]
struct BackendFlags {
    /// Backend: mock, replay, or http.
    #[arg(long)]
    backend: Option<String>,
    /// Model name sent to the backend and stamped into cache keys.
    #[arg(long)]
    model: Option<String>,
    /// Base URL of an OpenAI-compatible server (http backend).
    #[arg(long)]
    endpoint: Option<String>,
    /// API shape of the endpoint: completions or chat.
    #[arg(long)]
    api: Option<String>,
    /// Record/replay cache directory (records when backed by http).
    #[arg(long, value_name = "DIR")]
    cache_dir: Option<PathBuf>,
    /// Scripted-mock behavior file (JSON).
    #[arg(long, value_name = "PATH")]
    mock_script: Option<PathBuf>,
}

#[derive(Args)]
struct GenerationFlags {
    /// Prompt mode: auto, insert, or instruct.
    #[arg(long)]
    mode: Option<String>,
    /// Retry budget per line.
    #[arg(long)]
    max_attempts: Option<u32>,
    /// Characters of the original line used as a retry assist.
    #[arg(long)]
    assist_chars: Option<usize>,
    /// Worker threads for line generation.
    #[arg(long)]
    parallelism: Option<usize>,
}

#[derive(Args)]
struct CriterionFlags {
    /// Classification criterion: c0, c1, or c2.
    #[arg(long)]
    criterion: Option<String>,
    #[arg(long)]
    ld_limit: Option<usize>,
    #[arg(long)]
    dfc_limit: Option<usize>,
    /// Candidates below this mean logprob are dropped by c2.
    #[arg(long, allow_hyphen_values = true)]
    logprob_threshold: Option<f64>,
}

#[derive(Args)]
struct CheckArgs {
    /// Source file to check.
    file: PathBuf,
    /// Language: c, python, or verilog (default: from the file extension).
    #[arg(long)]
    language: Option<String>,
    /// First line to check; earlier lines only provide context.
    #[arg(long)]
    start_line: Option<u32>,
    /// Report format: text or json.
    #[arg(long)]
    output: Option<String>,
    #[command(flatten)]
    backend: BackendFlags,
    #[command(flatten)]
    generation: GenerationFlags,
    #[command(flatten)]
    criterion: CriterionFlags,
}

#[derive(Args)]
struct EvalArgs {
    /// Benchmark manifest (JSON array of cases).
    manifest: PathBuf,
    /// Directory for run records and metric tables.
    #[arg(long, default_value = "runs", value_name = "DIR")]
    run_dir: PathBuf,
    #[command(flatten)]
    backend: BackendFlags,
    #[command(flatten)]
    generation: GenerationFlags,
    /// Logprob threshold applied in the C2 column.
    #[arg(long, allow_hyphen_values = true)]
    logprob_threshold: Option<f64>,
}

#[derive(Args)]
struct OfflineArgs {
    /// Directory holding `<case-id>.jsonl` run records.
    #[arg(long, value_name = "DIR")]
    runs: PathBuf,
    /// Manifest the runs were produced from.
    #[arg(long, value_name = "PATH")]
    manifest: PathBuf,
    /// Write the CSV here instead of stdout.
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    offline: OfflineArgs,
    /// Sweep ld_limit over 0..=this.
    #[arg(long, default_value_t = 30)]
    ld_max: usize,
    /// Sweep dfc_limit over 0..=this.
    #[arg(long, default_value_t = 50)]
    dfc_max: usize,
    /// Criterion kind to sweep: c1 or c2.
    #[arg(long, default_value = "c2")]
    criterion: String,
    #[arg(long, allow_hyphen_values = true)]
    logprob_threshold: Option<f64>,
}

#[derive(Args)]
struct RocArgs {
    #[command(flatten)]
    offline: OfflineArgs,
    /// Evaluate thresholds 0..=this.
    #[arg(long, default_value_t = 30)]
    ld_max: usize,
    /// Append a flag-everything point pinned at (1,1).
    #[arg(long)]
    sentinel: bool,
}

#[derive(Args)]
struct MetadataArgs {
    #[command(flatten)]
    offline: OfflineArgs,
    #[command(flatten)]
    criterion: CriterionFlags,
}

/// A failure with the exit code it should produce.
struct Failure {
    code: i32,
    error: anyhow::Error,
}

fn usage(error: anyhow::Error) -> Failure {
    Failure { code: EXIT_USAGE, error }
}

fn backend_failure(error: BackendError) -> Failure {
    Failure { code: EXIT_BACKEND, error: anyhow!(error) }
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => EXIT_USAGE,
            };
            let _ = e.print();
            std::process::exit(code);
        }
    };
    match run(cli) {
        Ok(()) => {}
        Err(f) => {
            eprintln!("error: {:#}", f.error);
            std::process::exit(f.code);
        }
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    let file_config = load_config(cli.config.as_deref()).map_err(|e| usage(anyhow!(e)))?;
    match cli.command {
        Command::Check(args) => cmd_check(args, &file_config),
        Command::Eval(args) => cmd_eval(args, &file_config),
        Command::Sweep(args) => cmd_sweep(args),
        Command::Roc(args) => cmd_roc(args),
        Command::Metadata(args) => cmd_metadata(args, &file_config),
    }
}

// ---- setting resolution -------------------------------------------------

fn parse_setting<T: FromStr>(what: &str, value: &str) -> Result<T, Failure>
where
    T::Err: std::fmt::Display,
{
    value
        .parse()
        .map_err(|e| usage(anyhow!("invalid {what} `{value}`: {e}")))
}

fn resolve_mode(
    flags: &GenerationFlags,
    config: &FileConfig,
) -> Result<PromptMode, Failure> {
    match flags.mode.as_deref().or(config.generation.mode.as_deref()) {
        Some(s) => parse_setting("mode", s),
        None => Ok(PromptMode::AutoComplete),
    }
}

fn resolve_params(
    flags: &GenerationFlags,
    config: &FileConfig,
) -> Result<GenerationParams, Failure> {
    let g = &config.generation;
    let mut params = GenerationParams::default();
    if let Some(v) = g.temperature {
        params.temperature = v;
    }
    if let Some(v) = g.max_tokens {
        params.max_tokens = v;
    }
    if let Some(v) = g.top_p {
        params.top_p = v;
    }
    if let Some(v) = &g.stop {
        params.stop = v.clone();
    }
    if let Some(v) = g.max_pre_len {
        params.max_pre_len = v;
    }
    if let Some(v) = g.max_suf_len {
        params.max_suf_len = v;
    }
    if let Some(v) = flags.max_attempts.or(g.max_attempts) {
        params.max_attempts = v;
    }
    if let Some(v) = flags.assist_chars.or(g.assist_chars) {
        params.assist_chars = v;
    }
    Ok(params)
}

fn resolve_parallelism(
    flags: &GenerationFlags,
    config: &FileConfig,
) -> Result<usize, Failure> {
    let parallelism = flags
        .parallelism
        .or(config.run.parallelism)
        .unwrap_or(4);
    if parallelism == 0 {
        return Err(usage(anyhow!("parallelism must be at least 1")));
    }
    Ok(parallelism)
}

fn resolve_criterion(
    flags: &CriterionFlags,
    config: &FileConfig,
) -> Result<Criterion, Failure> {
    let c = &config.criterion;
    let kind: CriterionKind = match flags.criterion.as_deref().or(c.kind.as_deref()) {
        Some(s) => parse_setting("criterion", s)?,
        None => CriterionKind::C2,
    };
    let ld_limit = flags.ld_limit.or(c.ld_limit).unwrap_or(match kind {
        CriterionKind::C0 => 10,
        _ => 20,
    });
    if ld_limit == 0 {
        return Err(usage(anyhow!("ld_limit must be at least 1 (flagging requires ld > 0)")));
    }
    let dfc_limit = match kind {
        CriterionKind::C0 => None,
        _ => Some(flags.dfc_limit.or(c.dfc_limit).unwrap_or(10)),
    };
    let logprob_threshold = flags
        .logprob_threshold
        .or(c.logprob_threshold)
        .unwrap_or(flag::classifier::DEFAULT_LOGPROB_THRESHOLD);
    Ok(Criterion { kind, ld_limit, dfc_limit, logprob_threshold })
}

#[derive(Clone, Copy, PartialEq)]
enum OutputFormat {
    Text,
    Json,
}

impl FromStr for OutputFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "text" => Ok(OutputFormat::Text),
            "json" => Ok(OutputFormat::Json),
            other => Err(format!("unknown output format `{other}` (expected text or json)")),
        }
    }
}

// ---- backend construction ------------------------------------------------

enum BackendChoice {
    Mock,
    Replay,
    Http,
}

impl FromStr for BackendChoice {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "mock" => Ok(BackendChoice::Mock),
            "replay" => Ok(BackendChoice::Replay),
            "http" => Ok(BackendChoice::Http),
            other => Err(format!("unknown backend `{other}` (expected mock, replay, or http)")),
        }
    }
}

struct BackendSettings {
    choice: BackendChoice,
    model: String,
    endpoint: Option<String>,
    api: ApiFamily,
    cache_dir: Option<PathBuf>,
    mock_script: Option<PathBuf>,
}

fn resolve_backend_settings(
    flags: &BackendFlags,
    config: &FileConfig,
) -> Result<BackendSettings, Failure> {
    let b = &config.backend;
    let choice: BackendChoice = match flags.backend.as_deref().or(b.kind.as_deref()) {
        Some(s) => parse_setting("backend", s)?,
        None => BackendChoice::Mock,
    };
    let api: ApiFamily = match flags.api.as_deref().or(b.api.as_deref()) {
        Some(s) => parse_setting("api", s)?,
        None => ApiFamily::Completions,
    };
    Ok(BackendSettings {
        choice,
        model: flags
            .model
            .clone()
            .or_else(|| b.model.clone())
            .unwrap_or_else(|| "gpt-3.5-turbo".to_string()),
        endpoint: flags.endpoint.clone().or_else(|| b.endpoint.clone()),
        api,
        cache_dir: flags.cache_dir.clone().or_else(|| b.cache_dir.clone()),
        mock_script: flags.mock_script.clone().or_else(|| b.mock_script.clone()),
    })
}

/// Build the backend for one file. The mock is file-specific; http is
/// wrapped in a recording cache when a cache directory is configured.
fn build_backend(
    settings: &BackendSettings,
    file: &PreprocessedFile,
    script: Option<&MockScript>,
) -> Result<Box<dyn CompletionBackend>, Failure> {
    match settings.choice {
        BackendChoice::Mock => {
            let script = script.cloned().unwrap_or_else(MockScript::echo);
            Ok(Box::new(ScriptedMock::for_file(file, script)))
        }
        BackendChoice::Replay => {
            let dir = settings.cache_dir.as_deref().ok_or_else(|| {
                usage(anyhow!("the replay backend needs --cache-dir"))
            })?;
            let backend =
                CachingBackend::replay(dir, &settings.model).map_err(backend_failure)?;
            Ok(Box::new(backend))
        }
        BackendChoice::Http => {
            let endpoint = settings.endpoint.as_deref().ok_or_else(|| {
                usage(anyhow!("the http backend needs --endpoint"))
            })?;
            let http = HttpBackend::new(
                &settings.model,
                endpoint,
                settings.api,
                api_key_from_env(),
                RetryPolicy::default(),
            );
            match &settings.cache_dir {
                Some(dir) => {
                    let cached =
                        CachingBackend::over(Box::new(http), dir).map_err(backend_failure)?;
                    Ok(Box::new(cached))
                }
                None => Ok(Box::new(http)),
            }
        }
    }
}

/// Reject mode/backend pairings before any line is generated, so the user
/// gets a usage error rather than a per-line failure.
fn check_capabilities(
    mode: PromptMode,
    backend: &dyn CompletionBackend,
) -> Result<(), Failure> {
    let d = backend.descriptor();
    match mode {
        PromptMode::Insertion if !d.supports_suffix => Err(usage(anyhow!(
            "insertion mode needs suffix support, which the {} backend lacks",
            d.model_name
        ))),
        PromptMode::InstructedComplete if !d.supports_system_prompt => Err(usage(anyhow!(
            "instructed mode needs system-prompt support, which the {} backend lacks",
            d.model_name
        ))),
        _ => Ok(()),
    }
}

fn load_single_mock_script(path: &Path) -> Result<MockScript, Failure> {
    let text = fs::read_to_string(path)
        .with_context(|| format!("failed to read mock script {}", path.display()))
        .map_err(usage)?;
    serde_json::from_str(&text)
        .with_context(|| format!("failed to parse mock script {}", path.display()))
        .map_err(usage)
}

/// For `eval`, the script file maps case id → script, so each case can have
/// its own behaviors.
fn load_mock_script_map(path: &Path) -> Result<BTreeMap<String, MockScript>, Failure> {
    let text = fs::read_to_string(path)
        .with_context(|| format!("failed to read mock script {}", path.display()))
        .map_err(usage)?;
    serde_json::from_str(&text)
        .with_context(|| format!("failed to parse mock script map {}", path.display()))
        .map_err(usage)
}

fn now_unix() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0)
}

// ---- check ----------------------------------------------------------------

fn cmd_check(args: CheckArgs, config: &FileConfig) -> Result<(), Failure> {
    let language = match args.language.as_deref().or(config.run.language.as_deref()) {
        Some(s) => Some(parse_setting::<LanguageId>("language", s)?),
        None => None,
    };
    let start_line = args.start_line.or(config.run.start_line).unwrap_or(1);
    let output: OutputFormat = match args.output.as_deref().or(config.run.output.as_deref()) {
        Some(s) => parse_setting("output", s)?,
        None => OutputFormat::Text,
    };
    let mode = resolve_mode(&args.generation, config)?;
    let params = resolve_params(&args.generation, config)?;
    let parallelism = resolve_parallelism(&args.generation, config)?;
    let criterion = resolve_criterion(&args.criterion, config)?;
    let settings = resolve_backend_settings(&args.backend, config)?;

    let file = load_source(&args.file, language, start_line).map_err(|e| usage(anyhow!(e)))?;
    let script = match &settings.mock_script {
        Some(path) => Some(load_single_mock_script(path)?),
        None => None,
    };
    let backend = build_backend(&settings, &file, script.as_ref())?;
    check_capabilities(mode, backend.as_ref())?;

    let runs = run_file(&file, mode, &params, backend.as_ref(), parallelism)
        .map_err(backend_failure)?;
    let reported = classify_runs(&runs, &criterion);
    let fingerprint = run_fingerprint(backend.descriptor(), mode, &params);
    let report =
        FlagReport::assemble(&file.path, &fingerprint, &criterion, &runs, &reported);
    match output {
        OutputFormat::Text => print!("{}", report.to_text()),
        OutputFormat::Json => print!("{}", report.to_json()),
    }
    Ok(())
}

fn classify_runs(runs: &[LineRun], criterion: &Criterion) -> flag::classifier::ReportedLines {
    let inputs: Vec<ClassifyInput> = runs
        .iter()
        .enumerate()
        .map(|(k, r)| ClassifyInput {
            line_index: k,
            features: &r.features,
            keyword_only: r.keyword_only,
        })
        .collect();
    classify_lines(&inputs, criterion)
}

// ---- eval -------------------------------------------------------------------

fn cmd_eval(args: EvalArgs, config: &FileConfig) -> Result<(), Failure> {
    let mode = resolve_mode(&args.generation, config)?;
    let params = resolve_params(&args.generation, config)?;
    let parallelism = resolve_parallelism(&args.generation, config)?;
    let settings = resolve_backend_settings(&args.backend, config)?;
    let cases = load_manifest(&args.manifest).map_err(|e| usage(anyhow!(e)))?;
    let scripts = match &settings.mock_script {
        Some(path) => load_mock_script_map(path)?,
        None => BTreeMap::new(),
    };

    let logprob_threshold = args
        .logprob_threshold
        .or(config.criterion.logprob_threshold)
        .unwrap_or(flag::classifier::DEFAULT_LOGPROB_THRESHOLD);
    let criteria = [
        ("C0(10)", Criterion::c0(10)),
        ("C1(20,10)", Criterion::c1(20, 10)),
        ("C2(20,10)", Criterion::c2(20, 10).with_logprob_threshold(logprob_threshold)),
    ];
    let labels: Vec<&str> = criteria.iter().map(|(l, _)| *l).collect();

    // source_group → per-case metrics, one inner vec per criterion column.
    let mut per_source: BTreeMap<String, Vec<Vec<EvalMetrics>>> = BTreeMap::new();
    let mut failures: Vec<(String, Failure)> = Vec::new();
    let created_at = now_unix();

    for case in &cases {
        match eval_case(case, &settings, &scripts, mode, &params, parallelism, &args.run_dir, created_at)
        {
            Ok(record) => {
                let metrics = criteria
                    .iter()
                    .map(|(_, c)| score_run(&record, case, c))
                    .collect::<Result<Vec<_>, _>>()
                    .map_err(|e| usage(anyhow!(e)))?;
                per_source.entry(case.source_group.clone()).or_default().push(metrics);
            }
            Err(f) => {
                eprintln!("case {}: {:#}", case.id, f.error);
                failures.push((case.id.clone(), f));
            }
        }
    }

    if per_source.is_empty() {
        let code =
            if failures.iter().any(|(_, f)| f.code == EXIT_BACKEND) { EXIT_BACKEND } else { EXIT_USAGE };
        return Err(Failure { code, error: anyhow!("every case failed") });
    }

    let rows = metrics_rows(&labels, &per_source).map_err(|e| usage(anyhow!(e)))?;
    let table = metrics_table(&rows);
    write_output(&args.run_dir.join("metrics.csv"), &metrics_csv(&rows))?;
    write_output(&args.run_dir.join("metrics.txt"), &table)?;
    write_output(&args.run_dir.join("metrics.json"), &metrics_json(&rows))?;
    print!("{table}");

    if let Some((id, f)) = failures.into_iter().next() {
        return Err(Failure {
            code: f.code,
            error: f.error.context(format!("case {id} failed (run records for the others were written)")),
        });
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn eval_case(
    case: &BenchmarkCase,
    settings: &BackendSettings,
    scripts: &BTreeMap<String, MockScript>,
    mode: PromptMode,
    params: &GenerationParams,
    parallelism: usize,
    run_dir: &Path,
    created_at: u64,
) -> Result<RunRecord, Failure> {
    let file = load_source(
        Path::new(&case.path),
        Some(case.language_id),
        case.start_line.unwrap_or(1),
    )
    .map_err(|e| usage(anyhow!(e)))?;
    let backend = build_backend(settings, &file, scripts.get(&case.id))?;
    check_capabilities(mode, backend.as_ref())?;
    let lines =
        run_file(&file, mode, params, backend.as_ref(), parallelism).map_err(backend_failure)?;
    let record = RunRecord {
        case_id: case.id.clone(),
        fingerprint: run_fingerprint(backend.descriptor(), mode, params),
        lines,
    };
    write_run(run_dir, &record, created_at).map_err(|e| usage(anyhow!(e)))?;
    Ok(record)
}

fn write_output(path: &Path, content: &str) -> Result<(), Failure> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent)
                .with_context(|| format!("failed to create {}", parent.display()))
                .map_err(usage)?;
        }
    }
    fs::write(path, content)
        .with_context(|| format!("failed to write {}", path.display()))
        .map_err(usage)
}

// ---- offline rescoring ------------------------------------------------------

/// Pair each manifest case with its stored run record.
fn load_pairs(offline: &OfflineArgs) -> Result<Vec<(RunRecord, BenchmarkCase)>, Failure> {
    let cases = load_manifest(&offline.manifest).map_err(|e| usage(anyhow!(e)))?;
    let mut pairs = Vec::with_capacity(cases.len());
    for case in cases {
        let path = offline.runs.join(format!("{}.jsonl", case.id));
        let run = read_run(&path).map_err(|e| usage(anyhow!(e)))?;
        if run.case_id != case.id {
            return Err(usage(anyhow!(
                "run {} is for case {}, not {}",
                path.display(),
                run.case_id,
                case.id
            )));
        }
        pairs.push((run, case));
    }
    Ok(pairs)
}

fn emit(offline: &OfflineArgs, csv: String) -> Result<(), Failure> {
    match &offline.out {
        Some(path) => write_output(path, &csv),
        None => {
            print!("{csv}");
            Ok(())
        }
    }
}

fn cmd_sweep(args: SweepArgs) -> Result<(), Failure> {
    let kind: CriterionKind = parse_setting("criterion", &args.criterion)?;
    if kind == CriterionKind::C0 {
        return Err(usage(anyhow!("sweep needs a criterion with a dfc clause: c1 or c2")));
    }
    let threshold = args
        .logprob_threshold
        .unwrap_or(flag::classifier::DEFAULT_LOGPROB_THRESHOLD);
    let pairs = load_pairs(&args.offline)?;
    let cells = sweep(&pairs, 0..=args.ld_max, 0..=args.dfc_max, kind, threshold)
        .map_err(|e| usage(anyhow!(e)))?;
    emit(&args.offline, sweep_csv(&cells))
}

fn cmd_roc(args: RocArgs) -> Result<(), Failure> {
    let pairs = load_pairs(&args.offline)?;
    let thresholds: Vec<usize> = (0..=args.ld_max).collect();
    let points =
        roc_points(&pairs, &thresholds, args.sentinel).map_err(|e| usage(anyhow!(e)))?;
    emit(&args.offline, roc_csv(&points))
}

fn cmd_metadata(args: MetadataArgs, config: &FileConfig) -> Result<(), Failure> {
    let criterion = resolve_criterion(&args.criterion, config)?;
    let pairs = load_pairs(&args.offline)?;
    let records = pairs
        .iter()
        .map(|(run, case)| benchmark_metadata(run, case, &criterion))
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| usage(anyhow!(e)))?;
    emit(&args.offline, metadata_csv(&records))
}
