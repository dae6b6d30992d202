//! Record/replay cache: one JSON document per completion, keyed by request
//! digest. A primed directory answers later runs without touching any
//! upstream; an unprimed key either falls through to a wrapped backend (and
//! records the answer) or fails loudly.

use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use super::{cache_key, BackendDescriptor, BackendError, BackendKind, CompletionBackend, GeneratedLine};
use crate::prompting::{GenerationParams, Prompt};

/// The request fields that shaped a cached response, stored for debugging.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CacheRequest {
    pub mode: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub system_instruction: Option<String>,
    pub prefix: String,
    pub assist: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub suffix: Option<String>,
    pub model: String,
    pub temperature: f64,
    pub max_tokens: u32,
    pub top_p: f64,
    pub stop: String,
}

impl CacheRequest {
    fn of(prompt: &Prompt, params: &GenerationParams, descriptor: &BackendDescriptor) -> CacheRequest {
        CacheRequest {
            mode: prompt.mode.name().to_string(),
            system_instruction: prompt.system_instruction.clone(),
            prefix: prompt.prefix.clone(),
            assist: prompt.assist.clone(),
            suffix: prompt.suffix.clone(),
            model: descriptor.model_name.clone(),
            temperature: params.temperature,
            max_tokens: params.max_tokens,
            top_p: params.top_p,
            stop: params.stop.clone(),
        }
    }
}

/// One cached completion.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CacheRecord {
    pub key: String,
    pub request: CacheRequest,
    pub response_text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub token_logprobs: Option<Vec<f64>>,
    /// Unix seconds at record time.
    pub created_at: u64,
}

/// A backend that consults a cache directory first. With an upstream it is a
/// recording proxy; without one it is a pure replay that errors on a miss.
pub struct CachingBackend {
    descriptor: BackendDescriptor,
    dir: PathBuf,
    upstream: Option<Box<dyn CompletionBackend>>,
    write_lock: Mutex<()>,
}

impl CachingBackend {
    /// Wrap an upstream backend: hits replay, misses go through and are
    /// recorded. The directory is created if needed.
    pub fn over(upstream: Box<dyn CompletionBackend>, dir: &Path) -> Result<CachingBackend, BackendError> {
        std::fs::create_dir_all(dir)
            .map_err(|e| BackendError::Cache(format!("create {}: {e}", dir.display())))?;
        Ok(CachingBackend {
            descriptor: upstream.descriptor().clone(),
            dir: dir.to_path_buf(),
            upstream: Some(upstream),
            write_lock: Mutex::new(()),
        })
    }

    /// Pure replay over an already-primed directory. The descriptor must
    /// match the priming run (model name participates in the cache key).
    pub fn replay(dir: &Path, model_name: &str) -> Result<CachingBackend, BackendError> {
        if !dir.is_dir() {
            return Err(BackendError::Cache(format!(
                "replay cache {} does not exist",
                dir.display()
            )));
        }
        Ok(CachingBackend {
            descriptor: BackendDescriptor {
                kind: BackendKind::ReplayCache,
                model_name: model_name.to_string(),
                endpoint: None,
                supports_suffix: true,
                supports_logprobs: true,
                supports_system_prompt: true,
            },
            dir: dir.to_path_buf(),
            upstream: None,
            write_lock: Mutex::new(()),
        })
    }

    fn record_path(&self, key: &str) -> PathBuf {
        self.dir.join(format!("{key}.json"))
    }

    /// Fetch the record for a key, if one was ever written.
    pub fn lookup(&self, key: &str) -> Result<Option<CacheRecord>, BackendError> {
        let path = self.record_path(key);
        let raw = match std::fs::read_to_string(&path) {
            Ok(raw) => raw,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(None),
            Err(e) => return Err(BackendError::Cache(format!("read {}: {e}", path.display()))),
        };
        let record = serde_json::from_str(&raw)
            .map_err(|e| BackendError::Cache(format!("parse {}: {e}", path.display())))?;
        Ok(Some(record))
    }

    /// Persist a record. Append-only: an existing record for the key wins.
    pub fn store(&self, record: &CacheRecord) -> Result<(), BackendError> {
        let _guard = self.write_lock.lock().expect("cache write lock");
        let path = self.record_path(&record.key);
        if path.exists() {
            return Ok(());
        }
        let tmp = path.with_extension("json.tmp");
        let body = serde_json::to_string_pretty(record)
            .map_err(|e| BackendError::Cache(format!("encode record: {e}")))?;
        std::fs::write(&tmp, body)
            .map_err(|e| BackendError::Cache(format!("write {}: {e}", tmp.display())))?;
        std::fs::rename(&tmp, &path)
            .map_err(|e| BackendError::Cache(format!("commit {}: {e}", path.display())))?;
        Ok(())
    }
}

impl CompletionBackend for CachingBackend {
    fn descriptor(&self) -> &BackendDescriptor {
        &self.descriptor
    }

    fn complete(
        &self,
        prompt: &Prompt,
        params: &GenerationParams,
    ) -> Result<GeneratedLine, BackendError> {
        let key = cache_key(prompt, params, &self.descriptor);
        if let Some(record) = self.lookup(&key)? {
            let mut g = GeneratedLine::new(record.response_text, record.token_logprobs);
            g.from_cache = true;
            return Ok(g);
        }
        let upstream = match &self.upstream {
            Some(u) => u,
            None => return Err(BackendError::CacheMiss(key)),
        };
        let g = upstream.complete(prompt, params)?;
        self.store(&CacheRecord {
            key,
            request: CacheRequest::of(prompt, params, &self.descriptor),
            response_text: g.text.clone(),
            token_logprobs: g.token_logprobs.clone(),
            created_at: SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0),
        })?;
        Ok(g)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::{BackendKind, ScriptedMock};
    use crate::prompting::{build_prompt, PromptMode};
    use crate::srcmodel::{preprocess, LanguageId, PreprocessedFile};
    use std::sync::atomic::{AtomicU32, Ordering};
    use std::sync::Arc;

    fn small_file() -> PreprocessedFile {
        preprocess("int a;\nint b;\nint c;\n", "t.c", LanguageId::C, 1).unwrap()
    }

    /// Counts how often the upstream is actually consulted.
    struct Counting {
        inner: ScriptedMock,
        calls: Arc<AtomicU32>,
    }

    impl CompletionBackend for Counting {
        fn descriptor(&self) -> &BackendDescriptor {
            self.inner.descriptor()
        }

        fn complete(
            &self,
            prompt: &Prompt,
            params: &GenerationParams,
        ) -> Result<GeneratedLine, BackendError> {
            self.calls.fetch_add(1, Ordering::SeqCst);
            self.inner.complete(prompt, params)
        }
    }

    #[test]
    fn records_then_replays_without_upstream_calls() {
        let f = small_file();
        let dir = tempfile::tempdir().unwrap();
        let calls = Arc::new(AtomicU32::new(0));
        let upstream = Counting { inner: ScriptedMock::echo(&f), calls: Arc::clone(&calls) };
        let cached = CachingBackend::over(Box::new(upstream), dir.path()).unwrap();
        let params = GenerationParams::default();

        let p = build_prompt(&f, 1, PromptMode::AutoComplete, &params).unwrap();
        let first = cached.complete(&p, &params).unwrap();
        assert_eq!(first.text, "int b;");
        assert!(!first.from_cache);
        assert_eq!(calls.load(Ordering::SeqCst), 1);

        let second = cached.complete(&p, &params).unwrap();
        assert_eq!(second.text, "int b;");
        assert!(second.from_cache);
        assert_eq!(calls.load(Ordering::SeqCst), 1, "hit must not consult upstream");
    }

    #[test]
    fn pure_replay_answers_from_primed_directory() {
        let f = small_file();
        let dir = tempfile::tempdir().unwrap();
        let params = GenerationParams::default();
        let p = build_prompt(&f, 2, PromptMode::AutoComplete, &params).unwrap();

        {
            let recording =
                CachingBackend::over(Box::new(ScriptedMock::echo(&f)), dir.path()).unwrap();
            recording.complete(&p, &params).unwrap();
        }

        let replay = CachingBackend::replay(dir.path(), "scripted-mock").unwrap();
        let g = replay.complete(&p, &params).unwrap();
        assert_eq!(g.text, "int c;");
        assert!(g.from_cache);
        assert_eq!(replay.descriptor().kind, BackendKind::ReplayCache);
    }

    #[test]
    fn replay_miss_is_an_error() {
        let f = small_file();
        let dir = tempfile::tempdir().unwrap();
        let replay = CachingBackend::replay(dir.path(), "scripted-mock").unwrap();
        let params = GenerationParams::default();
        let p = build_prompt(&f, 0, PromptMode::AutoComplete, &params).unwrap();
        assert!(matches!(
            replay.complete(&p, &params).unwrap_err(),
            BackendError::CacheMiss(_)
        ));
    }

    #[test]
    fn replay_with_wrong_model_name_misses() {
        let f = small_file();
        let dir = tempfile::tempdir().unwrap();
        let params = GenerationParams::default();
        let p = build_prompt(&f, 1, PromptMode::AutoComplete, &params).unwrap();
        {
            let recording =
                CachingBackend::over(Box::new(ScriptedMock::echo(&f)), dir.path()).unwrap();
            recording.complete(&p, &params).unwrap();
        }
        let replay = CachingBackend::replay(dir.path(), "another-model").unwrap();
        assert!(replay.complete(&p, &params).is_err());
    }

    #[test]
    fn store_is_append_only() {
        let f = small_file();
        let dir = tempfile::tempdir().unwrap();
        let cached = CachingBackend::over(Box::new(ScriptedMock::echo(&f)), dir.path()).unwrap();
        let record = CacheRecord {
            key: "k".repeat(64),
            request: CacheRequest {
                mode: "auto_complete".into(),
                system_instruction: None,
                prefix: String::new(),
                assist: String::new(),
                suffix: None,
                model: "m".into(),
                temperature: 0.0,
                max_tokens: 150,
                top_p: 1.0,
                stop: "\n".into(),
            },
            response_text: "first".into(),
            token_logprobs: None,
            created_at: 1,
        };
        cached.store(&record).unwrap();
        let mut clobber = record.clone();
        clobber.response_text = "second".into();
        cached.store(&clobber).unwrap();
        assert_eq!(cached.lookup(&record.key).unwrap().unwrap().response_text, "first");
    }

    #[test]
    fn missing_replay_directory_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let missing = dir.path().join("nope");
        assert!(CachingBackend::replay(&missing, "m").is_err());
    }
}
