//! Chat-completion transport with retries and an on-disk response cache.

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, AtomicUsize, Ordering};
use std::thread;
use std::time::{Duration, SystemTime, UNIX_EPOCH};

use rand::Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use super::prompt::SYSTEM_PROMPT;
use super::ReasonerConfig;
use crate::error::{FetaError, Result};

/// One cached reply, stored as `<prompt_hash>.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CacheRecord {
    pub prompt_hash: String,
    pub model: String,
    pub response: String,
    pub timestamp: u64,
}

/// Directory of cached replies keyed by a hash of (model, prompt).
/// Entries are written to a temporary file and renamed into place.
#[derive(Debug)]
pub struct ResponseCache {
    dir: PathBuf,
    seq: AtomicU64,
}

impl ResponseCache {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        Self {
            dir: dir.into(),
            seq: AtomicU64::new(0),
        }
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn key(model: &str, prompt: &str) -> String {
        let mut h = Sha256::new();
        h.update(model.as_bytes());
        h.update([0u8]);
        h.update(SYSTEM_PROMPT.as_bytes());
        h.update([0u8]);
        h.update(prompt.as_bytes());
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }

    fn path(&self, key: &str) -> PathBuf {
        self.dir.join(format!("{key}.json"))
    }

    pub fn get(&self, key: &str) -> Option<CacheRecord> {
        let text = fs::read_to_string(self.path(key)).ok()?;
        serde_json::from_str(&text).ok()
    }

    pub fn put(&self, record: &CacheRecord) -> Result<()> {
        fs::create_dir_all(&self.dir).map_err(|e| FetaError::io(&self.dir, e))?;
        let tmp = self.dir.join(format!(
            ".{}.{}.{}.tmp",
            record.prompt_hash,
            std::process::id(),
            self.seq.fetch_add(1, Ordering::Relaxed)
        ));
        let body = serde_json::to_vec_pretty(record).map_err(|e| FetaError::Cache(e.to_string()))?;
        let mut f = fs::File::create(&tmp).map_err(|e| FetaError::io(&tmp, e))?;
        f.write_all(&body).map_err(|e| FetaError::io(&tmp, e))?;
        f.sync_all().map_err(|e| FetaError::io(&tmp, e))?;
        drop(f);
        let dest = self.path(&record.prompt_hash);
        fs::rename(&tmp, &dest).map_err(|e| FetaError::io(dest, e))
    }
}

/// Blocking chat-completion client.
pub struct LlmClient {
    cfg: ReasonerConfig,
    cache: ResponseCache,
    agent: ureq::Agent,
    requests: AtomicUsize,
}

enum Attempt {
    Retry(FetaError, Option<Duration>),
    Fatal(FetaError),
}

fn now_secs() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map_or(0, |d| d.as_secs())
}

impl LlmClient {
    pub fn new(cfg: ReasonerConfig, cache_dir: impl Into<PathBuf>) -> Self {
        let agent = ureq::AgentBuilder::new()
            .timeout(Duration::from_secs_f64(cfg.timeout_secs))
            .build();
        Self {
            cfg,
            cache: ResponseCache::new(cache_dir),
            agent,
            requests: AtomicUsize::new(0),
        }
    }

    pub fn config(&self) -> &ReasonerConfig {
        &self.cfg
    }

    pub fn cache(&self) -> &ResponseCache {
        &self.cache
    }

    /// HTTP requests issued so far (cache hits are not counted).
    pub fn network_calls(&self) -> usize {
        self.requests.load(Ordering::Relaxed)
    }

    /// Return the assistant reply for `prompt`, from cache when possible.
    pub fn complete(&self, prompt: &str) -> Result<String> {
        let key = ResponseCache::key(&self.cfg.model, prompt);
        if let Some(hit) = self.cache.get(&key) {
            return Ok(hit.response);
        }
        let api_key = std::env::var(&self.cfg.api_key_env)
            .ok()
            .filter(|k| !k.is_empty())
            .ok_or_else(|| {
                FetaError::AuthFailure(format!("environment variable {} is not set", self.cfg.api_key_env))
            })?;

        let body = json!({
            "model": self.cfg.model,
            "messages": [
                {"role": "system", "content": SYSTEM_PROMPT},
                {"role": "user", "content": prompt},
            ],
            "temperature": self.cfg.temperature,
            "top_p": self.cfg.top_p,
            "stream": false,
        });

        let mut attempt = 0u32;
        let text = loop {
            match self.send(&api_key, &body) {
                Ok(text) => break text,
                Err(Attempt::Fatal(e)) => return Err(e),
                Err(Attempt::Retry(e, retry_after)) => {
                    if attempt >= self.cfg.max_retries {
                        return Err(match e {
                            FetaError::RateLimited { .. } => FetaError::RateLimited { attempts: attempt + 1 },
                            other => other,
                        });
                    }
                    let delay = self.backoff(attempt, retry_after);
                    tracing::warn!(attempt, ?delay, error = %e, "retrying chat completion");
                    thread::sleep(delay);
                    attempt += 1;
                }
            }
        };

        self.cache.put(&CacheRecord {
            prompt_hash: key,
            model: self.cfg.model.clone(),
            response: text.clone(),
            timestamp: now_secs(),
        })?;
        Ok(text)
    }

    fn backoff(&self, attempt: u32, retry_after: Option<Duration>) -> Duration {
        let base = self.cfg.backoff_base_ms as f64 * 2f64.powi(attempt as i32);
        let capped = base.min(self.cfg.backoff_max_ms as f64);
        let jitter = if capped > 0.0 {
            rand::thread_rng().gen_range(0.0..capped / 2.0)
        } else {
            0.0
        };
        let delay = Duration::from_secs_f64((capped + jitter) / 1000.0);
        match retry_after {
            Some(ra) => delay.max(ra.min(Duration::from_millis(self.cfg.backoff_max_ms))),
            None => delay,
        }
    }

    fn send(&self, api_key: &str, body: &Value) -> std::result::Result<String, Attempt> {
        self.requests.fetch_add(1, Ordering::Relaxed);
        let result = self
            .agent
            .post(&self.cfg.endpoint)
            .set("Authorization", &format!("Bearer {api_key}"))
            .set("Content-Type", "application/json")
            .send_json(body.clone());

        let response = match result {
            Ok(r) => r,
            Err(ureq::Error::Status(code, resp)) => {
                let retry_after = resp
                    .header("retry-after")
                    .and_then(|v| v.trim().parse::<f64>().ok())
                    .filter(|s| s.is_finite() && *s >= 0.0)
                    .map(Duration::from_secs_f64);
                let text = resp.into_string().unwrap_or_default();
                return Err(match code {
                    401 | 403 => Attempt::Fatal(FetaError::AuthFailure(format!("http {code}: {text}"))),
                    429 => Attempt::Retry(FetaError::RateLimited { attempts: 0 }, retry_after),
                    500..=599 => Attempt::Retry(FetaError::HttpStatus { status: code, body: text }, retry_after),
                    _ => Attempt::Fatal(FetaError::HttpStatus { status: code, body: text }),
                });
            }
            Err(ureq::Error::Transport(t)) => {
                let msg = t.to_string();
                let err = if msg.contains("timed out") || msg.contains("Timeout") {
                    FetaError::Timeout(msg)
                } else {
                    FetaError::Transport(msg)
                };
                return Err(Attempt::Retry(err, None));
            }
        };

        let payload: Value = response
            .into_json()
            .map_err(|e| Attempt::Fatal(FetaError::MalformedApiResponse(e.to_string())))?;
        payload
            .pointer("/choices/0/message/content")
            .and_then(Value::as_str)
            .map(str::to_string)
            .ok_or_else(|| {
                Attempt::Fatal(FetaError::MalformedApiResponse(
                    "missing choices[0].message.content".into(),
                ))
            })
    }
}
