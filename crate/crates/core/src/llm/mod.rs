//! Chat-completion access with retry/backoff and a record/replay cache.
//!
//! * `live` always calls the backend.
//! * `record` answers from the cache when the key is present, otherwise
//!   calls the backend and appends the response to the cache.
//! * `replay` never touches the network; a missing key is an error.

mod backend;
mod cache;

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Condvar, Mutex};
use std::time::Duration;

use chrono::Utc;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;
use tracing::warn;

pub use backend::{BackendError, ChatBackend, ChatMessage, ChatRequest, OpenAiBackend};
pub use cache::{cache_key, CacheEntry, ResponseCache};

#[derive(Debug, Error)]
pub enum LlmError {
    #[error("no cached response for key {key}")]
    CacheMiss { key: String },
    #[error("gave up after {attempts} attempts: {last}")]
    RetriesExhausted { attempts: u32, last: BackendError },
    #[error(transparent)]
    Api(BackendError),
    #[error("environment variable {var} holding the API key is not set")]
    MissingApiKey { var: String },
    #[error("{mode:?} mode needs a configured backend")]
    NoBackend { mode: Mode },
    #[error("replay mode needs a response cache")]
    NoCache,
    #[error("cache file {path}: {reason}")]
    Cache { path: String, reason: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Live,
    Record,
    #[default]
    Replay,
}

impl std::str::FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "live" => Ok(Mode::Live),
            "record" => Ok(Mode::Record),
            "replay" => Ok(Mode::Replay),
            other => Err(format!(
                "unknown mode {other:?} (expected live, record or replay)"
            )),
        }
    }
}

/// How the rendered prompt is laid out as chat messages.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RoleLayout {
    /// The whole prompt as one user message.
    #[default]
    SingleUser,
    /// Everything before the first `Input:` line as a system message, the
    /// examples and query as the user message.
    SystemPreamble,
}

impl RoleLayout {
    pub fn messages(self, prompt: &str) -> Vec<ChatMessage> {
        if self == RoleLayout::SystemPreamble {
            let split = prompt.match_indices("\nInput: ").next().map(|(i, _)| i);
            if let Some(i) = split {
                return vec![
                    ChatMessage::new("system", &prompt[..i]),
                    ChatMessage::new("user", &prompt[i + 1..]),
                ];
            }
        }
        vec![ChatMessage::new("user", prompt)]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CompletionConfig {
    pub model: String,
    pub temperature: f64,
    pub max_retries: u32,
    pub backoff_base_ms: u64,
    pub backoff_max_ms: u64,
    pub request_timeout_secs: u64,
    pub endpoint: String,
    /// Name of the environment variable holding the API key.
    pub api_key_env: String,
    pub roles: RoleLayout,
    pub max_in_flight: usize,
}

impl Default for CompletionConfig {
    fn default() -> Self {
        Self {
            model: "gpt-3.5-turbo".to_string(),
            temperature: 0.0,
            max_retries: 5,
            backoff_base_ms: 1000,
            backoff_max_ms: 60_000,
            request_timeout_secs: 120,
            endpoint: "https://api.openai.com/v1/chat/completions".to_string(),
            api_key_env: "OPENAI_API_KEY".to_string(),
            roles: RoleLayout::SingleUser,
            max_in_flight: 1,
        }
    }
}

impl CompletionConfig {
    pub fn cache_key(&self, prompt: &str) -> String {
        cache_key(&self.model, self.temperature, prompt)
    }

    /// Delay before retry number `attempt` (0-based), without jitter:
    /// `base * 2^attempt`, capped at `backoff_max_ms`.
    pub fn backoff(&self, attempt: u32) -> Duration {
        let factor = 1u64.checked_shl(attempt.min(32)).unwrap_or(u64::MAX);
        let ms = self
            .backoff_base_ms
            .saturating_mul(factor)
            .min(self.backoff_max_ms);
        Duration::from_millis(ms)
    }

    /// Builds the HTTP backend, reading the key from the configured variable.
    pub fn http_backend(&self) -> Result<OpenAiBackend, LlmError> {
        let key = std::env::var(&self.api_key_env).map_err(|_| LlmError::MissingApiKey {
            var: self.api_key_env.clone(),
        })?;
        Ok(OpenAiBackend::new(
            self.endpoint.clone(),
            key,
            Duration::from_secs(self.request_timeout_secs),
        ))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Completion {
    pub text: String,
    pub key: String,
    pub cached: bool,
}

struct Semaphore {
    permits: Mutex<usize>,
    freed: Condvar,
}

impl Semaphore {
    fn new(n: usize) -> Self {
        Self {
            permits: Mutex::new(n.max(1)),
            freed: Condvar::new(),
        }
    }

    fn acquire(&self) -> Permit<'_> {
        let mut permits = self.permits.lock().expect("semaphore poisoned");
        while *permits == 0 {
            permits = self.freed.wait(permits).expect("semaphore poisoned");
        }
        *permits -= 1;
        Permit(self)
    }
}

struct Permit<'a>(&'a Semaphore);

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        *self.0.permits.lock().expect("semaphore poisoned") += 1;
        self.0.freed.notify_one();
    }
}

type Sleeper = Box<dyn Fn(Duration) + Send + Sync>;

pub struct LlmClient {
    config: CompletionConfig,
    mode: Mode,
    backend: Option<Arc<dyn ChatBackend>>,
    cache: Option<Arc<ResponseCache>>,
    sleep: Sleeper,
    in_flight: Semaphore,
    backend_calls: AtomicUsize,
}

impl LlmClient {
    pub fn new(config: CompletionConfig, mode: Mode) -> Self {
        let in_flight = Semaphore::new(config.max_in_flight);
        Self {
            config,
            mode,
            backend: None,
            cache: None,
            sleep: Box::new(std::thread::sleep),
            in_flight,
            backend_calls: AtomicUsize::new(0),
        }
    }

    pub fn with_backend(mut self, backend: Arc<dyn ChatBackend>) -> Self {
        self.backend = Some(backend);
        self
    }

    pub fn with_cache(mut self, cache: Arc<ResponseCache>) -> Self {
        self.cache = Some(cache);
        self
    }

    /// Replaces `thread::sleep` between retries (tests record delays instead).
    pub fn with_sleeper(mut self, sleep: impl Fn(Duration) + Send + Sync + 'static) -> Self {
        self.sleep = Box::new(sleep);
        self
    }

    pub fn config(&self) -> &CompletionConfig {
        &self.config
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    /// Number of requests sent to the backend, retries included.
    pub fn backend_calls(&self) -> usize {
        self.backend_calls.load(Ordering::SeqCst)
    }

    pub fn complete(&self, prompt: &str) -> Result<Completion, LlmError> {
        let key = self.config.cache_key(prompt);
        match self.mode {
            Mode::Replay => {
                let cache = self.cache.as_ref().ok_or(LlmError::NoCache)?;
                let text = cache
                    .get(&key)
                    .ok_or_else(|| LlmError::CacheMiss { key: key.clone() })?;
                Ok(Completion {
                    text,
                    key,
                    cached: true,
                })
            }
            Mode::Record => {
                if let Some(text) = self.cache.as_ref().and_then(|c| c.get(&key)) {
                    return Ok(Completion {
                        text,
                        key,
                        cached: true,
                    });
                }
                let text = self.call_with_retry(prompt)?;
                if let Some(cache) = &self.cache {
                    cache.insert(CacheEntry {
                        key: key.clone(),
                        model: self.config.model.clone(),
                        temperature: self.config.temperature,
                        response: text.clone(),
                        recorded_at: Utc::now(),
                    })?;
                }
                Ok(Completion {
                    text,
                    key,
                    cached: false,
                })
            }
            Mode::Live => {
                let text = self.call_with_retry(prompt)?;
                Ok(Completion {
                    text,
                    key,
                    cached: false,
                })
            }
        }
    }

    fn call_with_retry(&self, prompt: &str) -> Result<String, LlmError> {
        let backend = self
            .backend
            .as_ref()
            .ok_or(LlmError::NoBackend { mode: self.mode })?;
        let request = ChatRequest {
            model: self.config.model.clone(),
            temperature: self.config.temperature,
            messages: self.config.roles.messages(prompt),
        };
        let mut attempt = 0u32;
        loop {
            let result = {
                let _permit = self.in_flight.acquire();
                self.backend_calls.fetch_add(1, Ordering::SeqCst);
                backend.send(&request)
            };
            match result {
                Ok(text) => return Ok(text),
                Err(e) if !e.is_retryable() => return Err(LlmError::Api(e)),
                Err(e) if attempt >= self.config.max_retries => {
                    return Err(LlmError::RetriesExhausted {
                        attempts: attempt + 1,
                        last: e,
                    })
                }
                Err(e) => {
                    let base = self.config.backoff(attempt);
                    let jitter_ms = match base.as_millis() as u64 / 2 {
                        0 => 0,
                        half => rand::rng().random_range(0..=half),
                    };
                    let delay = base + Duration::from_millis(jitter_ms);
                    warn!(attempt = attempt + 1, error = %e, delay_ms = delay.as_millis() as u64, "retrying completion");
                    (self.sleep)(delay);
                    attempt += 1;
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Returns scripted results in order, then repeats the last one.
    struct Scripted {
        results: Mutex<Vec<Result<String, BackendError>>>,
    }

    impl Scripted {
        fn new(mut results: Vec<Result<String, BackendError>>) -> Arc<Self> {
            results.reverse();
            Arc::new(Self {
                results: Mutex::new(results),
            })
        }
    }

    impl ChatBackend for Scripted {
        fn send(&self, _: &ChatRequest) -> Result<String, BackendError> {
            let mut r = self.results.lock().unwrap();
            if r.len() > 1 {
                r.pop().unwrap()
            } else {
                r[0].clone()
            }
        }
    }

    fn fast_config(max_retries: u32) -> CompletionConfig {
        CompletionConfig {
            max_retries,
            backoff_base_ms: 10,
            ..CompletionConfig::default()
        }
    }

    fn recording_sleeper() -> (Arc<Mutex<Vec<Duration>>>, impl Fn(Duration) + Send + Sync) {
        let delays = Arc::new(Mutex::new(Vec::new()));
        let sink = delays.clone();
        (delays, move |d| sink.lock().unwrap().push(d))
    }

    #[test]
    fn replay_hit_and_miss() {
        let cfg = CompletionConfig::default();
        let cache = Arc::new(ResponseCache::in_memory());
        cache
            .insert(CacheEntry {
                key: cfg.cache_key("p"),
                model: cfg.model.clone(),
                temperature: 0.0,
                response: "[]".into(),
                recorded_at: Utc::now(),
            })
            .unwrap();
        let backend = Scripted::new(vec![Ok("network".into())]);
        let client = LlmClient::new(cfg.clone(), Mode::Replay)
            .with_cache(cache)
            .with_backend(backend);
        let hit = client.complete("p").unwrap();
        assert_eq!(hit.text, "[]");
        assert!(hit.cached);
        assert_eq!(client.backend_calls(), 0);
        match client.complete("q") {
            Err(LlmError::CacheMiss { key }) => assert_eq!(key, cfg.cache_key("q")),
            other => panic!("expected miss, got {other:?}"),
        }
        assert!(matches!(
            LlmClient::new(cfg, Mode::Replay).complete("p"),
            Err(LlmError::NoCache)
        ));
    }

    #[test]
    fn record_then_replay() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cache.jsonl");
        let backend = Scripted::new(vec![Ok("[(a, b, c, positive)]".into())]);
        let recorder = LlmClient::new(fast_config(0), Mode::Record)
            .with_cache(Arc::new(ResponseCache::open(&path).unwrap()))
            .with_backend(backend);
        let first = recorder.complete("prompt").unwrap();
        let again = recorder.complete("prompt").unwrap();
        assert_eq!(recorder.backend_calls(), 1);
        assert!(again.cached);

        let replayer = LlmClient::new(fast_config(0), Mode::Replay)
            .with_cache(Arc::new(ResponseCache::open(&path).unwrap()));
        assert_eq!(replayer.complete("prompt").unwrap().text, first.text);
    }

    #[test]
    fn retries_transient_errors_with_growing_delays() {
        let backend = Scripted::new(vec![
            Err(BackendError::RateLimited("slow down".into())),
            Err(BackendError::Server {
                status: 502,
                detail: "bad gateway".into(),
            }),
            Err(BackendError::Timeout("t".into())),
            Ok("done".into()),
        ]);
        let (delays, sleeper) = recording_sleeper();
        let client = LlmClient::new(fast_config(5), Mode::Live)
            .with_backend(backend)
            .with_sleeper(sleeper);
        assert_eq!(client.complete("p").unwrap().text, "done");
        assert_eq!(client.backend_calls(), 4);
        let delays = delays.lock().unwrap();
        assert_eq!(delays.len(), 3);
        let cfg = fast_config(5);
        for (i, d) in delays.iter().enumerate() {
            let base = cfg.backoff(i as u32);
            assert!(*d >= base && *d <= base + base / 2, "delay {i}: {d:?}");
        }
        assert!((0..6).all(|a| cfg.backoff(a) <= cfg.backoff(a + 1)));
    }

    #[test]
    fn retry_budget_is_respected() {
        let backend = Scripted::new(vec![Err(BackendError::Server {
            status: 500,
            detail: "x".into(),
        })]);
        let (_, sleeper) = recording_sleeper();
        let client = LlmClient::new(fast_config(2), Mode::Live)
            .with_backend(backend)
            .with_sleeper(sleeper);
        match client.complete("p") {
            Err(LlmError::RetriesExhausted { attempts, .. }) => assert_eq!(attempts, 3),
            other => panic!("expected exhaustion, got {other:?}"),
        }
        assert_eq!(client.backend_calls(), 3);
    }

    #[test]
    fn auth_errors_are_not_retried() {
        let backend = Scripted::new(vec![Err(BackendError::Auth {
            status: 401,
            detail: "bad key".into(),
        })]);
        let client = LlmClient::new(fast_config(5), Mode::Live).with_backend(backend);
        assert!(matches!(
            client.complete("p"),
            Err(LlmError::Api(BackendError::Auth { status: 401, .. }))
        ));
        assert_eq!(client.backend_calls(), 1);
    }

    #[test]
    fn backoff_is_capped() {
        let cfg = CompletionConfig {
            backoff_base_ms: 1000,
            backoff_max_ms: 5000,
            ..CompletionConfig::default()
        };
        assert_eq!(cfg.backoff(0), Duration::from_millis(1000));
        assert_eq!(cfg.backoff(2), Duration::from_millis(4000));
        assert_eq!(cfg.backoff(3), Duration::from_millis(5000));
        assert_eq!(cfg.backoff(60), Duration::from_millis(5000));
    }

    #[test]
    fn role_layouts() {
        let prompt = "Instruction: x\nOutput format: y\nInput: a\nOutput: []\nInput: q\nOutput:";
        assert_eq!(
            RoleLayout::SingleUser.messages(prompt),
            vec![ChatMessage::new("user", prompt)]
        );
        let split = RoleLayout::SystemPreamble.messages(prompt);
        assert_eq!(
            split[0],
            ChatMessage::new("system", "Instruction: x\nOutput format: y")
        );
        assert_eq!(
            split[1],
            ChatMessage::new("user", "Input: a\nOutput: []\nInput: q\nOutput:")
        );
    }

    #[test]
    fn missing_api_key_names_variable_only() {
        let cfg = CompletionConfig {
            api_key_env: "ACOS_TEST_KEY_THAT_IS_NOT_SET".into(),
            ..CompletionConfig::default()
        };
        let err = cfg.http_backend().unwrap_err();
        assert!(err.to_string().contains("ACOS_TEST_KEY_THAT_IS_NOT_SET"));
    }
}
