//! Entailment sources: JSONL fixture files, an HTTP client for an NLI
//! service, and a deterministic hash-based mock.
//!
//! Providers receive raw texts plus a shared context and are responsible for
//! forming the `context ⊕ text` premise and hypothesis strings.

use std::collections::HashMap;
use std::fs;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};
use std::sync::{Condvar, Mutex};
use std::thread;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::semantic_graph::{is_simplex, EntailmentMatrix, SemanticGraphError, SIMPLEX_TOL};

/// Environment variable that overrides the configured service endpoint.
pub const NLI_URL_ENV: &str = "SESE_NLI_URL";
pub const DEFAULT_MAX_IN_FLIGHT: usize = 8;
pub const DEFAULT_BATCH_SIZE: usize = 32;
const BACKOFF_BASE_MS: u64 = 100;
const EXCERPT_CHARS: usize = 200;

#[derive(Debug, Error)]
pub enum ProviderError {
    #[error("invalid request: {0}")]
    Request(String),
    #[error("invalid provider config: {0}")]
    Config(String),
    #[error("transport failure after {attempts} attempts: {message}")]
    Transport { attempts: u32, message: String },
    #[error("service returned status {status}: {message}")]
    Status { status: u16, message: String },
    #[error("malformed reply: {reason}; payload starts with {excerpt:?}")]
    Malformed { reason: String, excerpt: String },
    #[error("{path}:{line}: {message}")]
    Schema { path: String, line: usize, message: String },
    #[error("no entailment record for id {0:?}")]
    NotFound(String),
    #[error("cache error: {0}")]
    Cache(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Matrix(#[from] SemanticGraphError),
}

/// Ordered premise/hypothesis index pairs over `texts`, all sharing `context`.
#[derive(Debug, Clone, PartialEq)]
pub struct EntailmentRequest {
    context: String,
    texts: Vec<String>,
    pairs: Vec<(usize, usize)>,
}

impl EntailmentRequest {
    pub fn new(context: impl Into<String>, texts: Vec<String>, pairs: Vec<(usize, usize)>) -> Result<Self, ProviderError> {
        let n = texts.len();
        for &(p, h) in &pairs {
            if p >= n || h >= n {
                return Err(ProviderError::Request(format!("pair ({p}, {h}) out of range for {n} texts")));
            }
            if p == h {
                return Err(ProviderError::Request(format!("pair ({p}, {h}) compares a text with itself")));
            }
        }
        Ok(EntailmentRequest {
            context: context.into(),
            texts,
            pairs,
        })
    }

    /// Every ordered pair `i ≠ j` in row-major order.
    pub fn all_pairs(context: impl Into<String>, texts: Vec<String>) -> Self {
        let n = texts.len();
        let pairs = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .collect();
        EntailmentRequest {
            context: context.into(),
            texts,
            pairs,
        }
    }

    pub fn context(&self) -> &str {
        &self.context
    }

    pub fn texts(&self) -> &[String] {
        &self.texts
    }

    pub fn pairs(&self) -> &[(usize, usize)] {
        &self.pairs
    }

    pub fn premise(&self, pair: usize) -> &str {
        &self.texts[self.pairs[pair].0]
    }

    pub fn hypothesis(&self, pair: usize) -> &str {
        &self.texts[self.pairs[pair].1]
    }
}

/// `x ⊕ r`: the context and the text joined by a single space.
pub fn concatenate(context: &str, text: &str) -> String {
    if context.is_empty() {
        text.to_string()
    } else {
        format!("{context} {text}")
    }
}

pub trait EntailmentProvider: Send + Sync {
    /// One `(p_e, p_n, p_c)` triple per requested pair, in request order.
    fn fetch(&self, req: &EntailmentRequest) -> Result<Vec<[f64; 3]>, ProviderError>;

    /// Identifier folded into cache keys.
    fn model_id(&self) -> &str;
}

fn check_triples(triples: &[[f64; 3]], expected: usize) -> Result<(), ProviderError> {
    if triples.len() != expected {
        return Err(ProviderError::Malformed {
            reason: format!("expected {expected} triples, got {}", triples.len()),
            excerpt: String::new(),
        });
    }
    if let Some(t) = triples.iter().find(|t| !is_simplex(**t)) {
        return Err(ProviderError::Malformed {
            reason: format!("triple {t:?} is not on the simplex (tolerance {SIMPLEX_TOL})"),
            excerpt: String::new(),
        });
    }
    Ok(())
}

/// Queries every ordered pair and assembles the matrix.
pub fn build_entailment_matrix(
    provider: &dyn EntailmentProvider,
    context: &str,
    texts: &[String],
) -> Result<EntailmentMatrix, ProviderError> {
    let n = texts.len();
    let req = EntailmentRequest::all_pairs(context, texts.to_vec());
    let triples = provider.fetch(&req)?;
    check_triples(&triples, req.pairs().len())?;
    let mut rows = vec![vec![[1.0, 0.0, 0.0]; n]; n];
    for (&(i, j), t) in req.pairs().iter().zip(triples) {
        rows[i][j] = t;
    }
    Ok(EntailmentMatrix::new(rows)?)
}

/// Hash-derived pseudo-entailment. Identical strings give `(1, 0, 0)`.
///
/// The triple comes from SHA-256 over the little-endian seed followed by the
/// length-prefixed UTF-8 context, premise and hypothesis. Three big-endian
/// `u64` words of the digest are mapped to `(w >> 11) + 1` and normalized.
#[derive(Debug, Clone)]
pub struct MockProvider {
    seed: u64,
    model_id: String,
}

impl MockProvider {
    pub fn new(seed: u64) -> Self {
        MockProvider {
            seed,
            model_id: format!("mock-sha256-{seed}"),
        }
    }

    pub fn triple(&self, context: &str, premise: &str, hypothesis: &str) -> [f64; 3] {
        if premise == hypothesis {
            return [1.0, 0.0, 0.0];
        }
        let mut h = Sha256::new();
        h.update(self.seed.to_le_bytes());
        for part in [context, premise, hypothesis] {
            h.update((part.len() as u64).to_le_bytes());
            h.update(part.as_bytes());
        }
        let digest = h.finalize();
        let mut w = [0.0; 3];
        for (k, chunk) in digest.chunks_exact(8).take(3).enumerate() {
            let word = u64::from_be_bytes(chunk.try_into().expect("8-byte chunk"));
            w[k] = ((word >> 11) + 1) as f64;
        }
        let total = w[0] + w[1] + w[2];
        [w[0] / total, w[1] / total, w[2] / total]
    }
}

impl EntailmentProvider for MockProvider {
    fn fetch(&self, req: &EntailmentRequest) -> Result<Vec<[f64; 3]>, ProviderError> {
        Ok((0..req.pairs().len())
            .map(|p| self.triple(req.context(), req.premise(p), req.hypothesis(p)))
            .collect())
    }

    fn model_id(&self) -> &str {
        &self.model_id
    }
}

/// One line of an entailment fixture file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntailmentFileRecord {
    pub id: String,
    #[serde(default)]
    pub context: String,
    pub texts: Vec<String>,
    pub probs: Vec<Vec<[f64; 3]>>,
}

#[derive(Debug, Clone)]
pub struct LoadedEntailment {
    pub id: String,
    pub context: String,
    pub texts: Vec<String>,
    pub matrix: EntailmentMatrix,
}

/// Reads and validates a JSONL entailment file. Errors name the line.
pub fn load_entailment_file(path: impl AsRef<Path>) -> Result<Vec<LoadedEntailment>, ProviderError> {
    let path = path.as_ref();
    let shown = path.display().to_string();
    let reader = BufReader::new(fs::File::open(path)?);
    let mut out = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let schema = |message: String| ProviderError::Schema {
            path: shown.clone(),
            line: idx + 1,
            message,
        };
        let rec: EntailmentFileRecord = serde_json::from_str(&line).map_err(|e| schema(e.to_string()))?;
        if rec.probs.len() != rec.texts.len() {
            return Err(schema(format!(
                "{} probability rows for {} texts",
                rec.probs.len(),
                rec.texts.len()
            )));
        }
        let matrix = EntailmentMatrix::new(rec.probs).map_err(|e| schema(e.to_string()))?;
        out.push(LoadedEntailment {
            id: rec.id,
            context: rec.context,
            texts: rec.texts,
            matrix,
        });
    }
    Ok(out)
}

/// Serves pairs from a loaded entailment file, matching requests on
/// `(context, texts)`.
#[derive(Debug, Clone)]
pub struct FileProvider {
    records: Vec<LoadedEntailment>,
    by_id: HashMap<String, usize>,
    by_content: HashMap<(String, Vec<String>), usize>,
    model_id: String,
}

impl FileProvider {
    pub fn open(path: impl AsRef<Path>) -> Result<Self, ProviderError> {
        let model_id = format!("file:{}", path.as_ref().display());
        Ok(Self::from_records(load_entailment_file(path)?, model_id))
    }

    pub fn from_records(records: Vec<LoadedEntailment>, model_id: String) -> Self {
        let by_id = records.iter().enumerate().map(|(i, r)| (r.id.clone(), i)).collect();
        let by_content = records
            .iter()
            .enumerate()
            .map(|(i, r)| ((r.context.clone(), r.texts.clone()), i))
            .collect();
        FileProvider {
            records,
            by_id,
            by_content,
            model_id,
        }
    }

    pub fn records(&self) -> &[LoadedEntailment] {
        &self.records
    }

    pub fn get(&self, id: &str) -> Option<&LoadedEntailment> {
        self.by_id.get(id).map(|&i| &self.records[i])
    }
}

impl EntailmentProvider for FileProvider {
    fn fetch(&self, req: &EntailmentRequest) -> Result<Vec<[f64; 3]>, ProviderError> {
        let key = (req.context().to_string(), req.texts().to_vec());
        let rec = self
            .by_content
            .get(&key)
            .map(|&i| &self.records[i])
            .ok_or_else(|| ProviderError::NotFound(format!("context {:?}", req.context())))?;
        Ok(req.pairs().iter().map(|&(i, j)| rec.matrix.get(i, j)).collect())
    }

    fn model_id(&self) -> &str {
        &self.model_id
    }
}

/// Counting semaphore bounding concurrent requests.
#[derive(Debug)]
struct Slots {
    free: Mutex<usize>,
    cv: Condvar,
}

impl Slots {
    fn new(n: usize) -> Self {
        Slots {
            free: Mutex::new(n),
            cv: Condvar::new(),
        }
    }

    fn run<T>(&self, f: impl FnOnce() -> T) -> T {
        {
            let mut free = self.free.lock().unwrap_or_else(|e| e.into_inner());
            while *free == 0 {
                free = self.cv.wait(free).unwrap_or_else(|e| e.into_inner());
            }
            *free -= 1;
        }
        let out = f();
        *self.free.lock().unwrap_or_else(|e| e.into_inner()) += 1;
        self.cv.notify_one();
        out
    }
}

#[derive(Serialize)]
struct WirePair<'a> {
    premise: &'a str,
    hypothesis: &'a str,
}

#[derive(Serialize)]
struct WireRequest<'a> {
    pairs: Vec<WirePair<'a>>,
}

#[derive(Deserialize)]
struct WireReply {
    probs: Vec<[f64; 3]>,
}

#[derive(Deserialize)]
struct WireErrorReply {
    error: String,
}

fn excerpt(body: &str) -> String {
    body.chars().take(EXCERPT_CHARS).collect()
}

/// HTTP client for `POST {endpoint}/nli`.
#[derive(Debug)]
pub struct WireProvider {
    url: String,
    agent: ureq::Agent,
    max_retries: u32,
    batch_size: usize,
    slots: Slots,
    model_id: String,
}

impl WireProvider {
    /// `endpoint` is the service base URL; `SESE_NLI_URL` takes precedence.
    pub fn new(endpoint: &str, timeout: Duration, max_retries: u32, max_in_flight: usize) -> Result<Self, ProviderError> {
        let base = std::env::var(NLI_URL_ENV).unwrap_or_else(|_| endpoint.to_string());
        Self::with_base_url(&base, timeout, max_retries, max_in_flight)
    }

    /// Like [`WireProvider::new`] but ignores the environment.
    pub fn with_base_url(base: &str, timeout: Duration, max_retries: u32, max_in_flight: usize) -> Result<Self, ProviderError> {
        if base.is_empty() {
            return Err(ProviderError::Config("empty NLI endpoint".into()));
        }
        if timeout.is_zero() {
            return Err(ProviderError::Config("timeout must be positive".into()));
        }
        let config = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .http_status_as_error(false)
            .build();
        let base = base.trim_end_matches('/');
        let url = if base.ends_with("/nli") {
            base.to_string()
        } else {
            format!("{base}/nli")
        };
        Ok(WireProvider {
            model_id: format!("wire:{url}"),
            url,
            agent: config.into(),
            max_retries,
            batch_size: DEFAULT_BATCH_SIZE,
            slots: Slots::new(max_in_flight.max(1)),
        })
    }

    pub fn with_batch_size(mut self, batch_size: usize) -> Self {
        self.batch_size = batch_size.max(1);
        self
    }

    pub fn with_model_id(mut self, model_id: impl Into<String>) -> Self {
        self.model_id = model_id.into();
        self
    }

    pub fn url(&self) -> &str {
        &self.url
    }

    fn post_once(&self, body: &WireRequest<'_>) -> Result<Result<Vec<[f64; 3]>, ProviderError>, String> {
        let mut resp = self.agent.post(&self.url).send_json(body).map_err(|e| e.to_string())?;
        let status = resp.status().as_u16();
        let text = resp.body_mut().read_to_string().map_err(|e| e.to_string())?;
        if status >= 500 {
            return Err(format!("status {status}: {}", excerpt(&text)));
        }
        if status != 200 {
            let message = serde_json::from_str::<WireErrorReply>(&text)
                .map(|e| e.error)
                .unwrap_or_else(|_| excerpt(&text));
            return Ok(Err(ProviderError::Status { status, message }));
        }
        Ok(serde_json::from_str::<WireReply>(&text)
            .map(|r| r.probs)
            .map_err(|e| ProviderError::Malformed {
                reason: e.to_string(),
                excerpt: excerpt(&text),
            }))
    }

    /// Sends one batch, retrying transport failures and 5xx replies with
    /// exponential backoff.
    fn post_batch(&self, pairs: &[(String, String)]) -> Result<Vec<[f64; 3]>, ProviderError> {
        let body = WireRequest {
            pairs: pairs
                .iter()
                .map(|(p, h)| WirePair {
                    premise: p,
                    hypothesis: h,
                })
                .collect(),
        };
        let mut last = String::new();
        for attempt in 0..=self.max_retries {
            if attempt > 0 {
                thread::sleep(Duration::from_millis(BACKOFF_BASE_MS << (attempt - 1).min(10)));
            }
            match self.slots.run(|| self.post_once(&body)) {
                Ok(result) => {
                    let probs = result?;
                    check_triples(&probs, pairs.len())?;
                    return Ok(probs);
                }
                Err(message) => last = message,
            }
        }
        Err(ProviderError::Transport {
            attempts: self.max_retries + 1,
            message: last,
        })
    }
}

impl EntailmentProvider for WireProvider {
    fn fetch(&self, req: &EntailmentRequest) -> Result<Vec<[f64; 3]>, ProviderError> {
        let pairs: Vec<(String, String)> = (0..req.pairs().len())
            .map(|p| {
                (
                    concatenate(req.context(), req.premise(p)),
                    concatenate(req.context(), req.hypothesis(p)),
                )
            })
            .collect();
        let batches: Vec<&[(String, String)]> = pairs.chunks(self.batch_size).collect();
        let results: Vec<Result<Vec<[f64; 3]>, ProviderError>> = thread::scope(|s| {
            let handles: Vec<_> = batches
                .iter()
                .map(|batch| s.spawn(move || self.post_batch(batch)))
                .collect();
            handles
                .into_iter()
                .map(|h| h.join().expect("request thread panicked"))
                .collect()
        });
        let mut out = Vec::with_capacity(pairs.len());
        for r in results {
            out.extend(r?);
        }
        Ok(out)
    }

    fn model_id(&self) -> &str {
        &self.model_id
    }
}

/// Content-addressed on-disk cache in front of another provider.
pub struct CachedProvider<P> {
    inner: P,
    dir: PathBuf,
}

impl<P: EntailmentProvider> CachedProvider<P> {
    pub fn new(inner: P, dir: impl Into<PathBuf>) -> Result<Self, ProviderError> {
        let dir = dir.into();
        fs::create_dir_all(&dir)?;
        Ok(CachedProvider { inner, dir })
    }

    pub fn inner(&self) -> &P {
        &self.inner
    }

    fn path_for(&self, key: &str) -> PathBuf {
        self.dir.join(&key[..2]).join(format!("{key}.json"))
    }

    fn read(&self, key: &str) -> Result<Option<[f64; 3]>, ProviderError> {
        match fs::read_to_string(self.path_for(key)) {
            Ok(text) => serde_json::from_str(&text)
                .map(Some)
                .map_err(|e| ProviderError::Cache(format!("entry {key}: {e}"))),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
            Err(e) => Err(e.into()),
        }
    }

    fn write(&self, key: &str, triple: [f64; 3]) -> Result<(), ProviderError> {
        let path = self.path_for(key);
        let parent = path.parent().expect("cache entries live in a shard directory");
        fs::create_dir_all(parent)?;
        let tmp = parent.join(format!("{key}.{}.{:?}.tmp", std::process::id(), thread::current().id()));
        let text = serde_json::to_string(&triple).map_err(|e| ProviderError::Cache(e.to_string()))?;
        fs::write(&tmp, text)?;
        fs::rename(&tmp, &path)?;
        Ok(())
    }
}

/// Hex SHA-256 over the length-prefixed context, premise, hypothesis and
/// model id.
pub fn cache_key(context: &str, premise: &str, hypothesis: &str, model_id: &str) -> String {
    let mut h = Sha256::new();
    for part in [context, premise, hypothesis, model_id] {
        h.update((part.len() as u64).to_le_bytes());
        h.update(part.as_bytes());
    }
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

impl<P: EntailmentProvider> EntailmentProvider for CachedProvider<P> {
    fn fetch(&self, req: &EntailmentRequest) -> Result<Vec<[f64; 3]>, ProviderError> {
        let model = self.inner.model_id();
        let keys: Vec<String> = (0..req.pairs().len())
            .map(|p| cache_key(req.context(), req.premise(p), req.hypothesis(p), model))
            .collect();
        let mut out = Vec::with_capacity(keys.len());
        let mut missing = Vec::new();
        for (p, key) in keys.iter().enumerate() {
            let hit = self.read(key)?;
            if hit.is_none() {
                missing.push(req.pairs()[p]);
            }
            out.push(hit);
        }
        if !missing.is_empty() {
            let sub = EntailmentRequest::new(req.context(), req.texts().to_vec(), missing)?;
            let fetched = self.inner.fetch(&sub)?;
            check_triples(&fetched, sub.pairs().len())?;
            let mut fetched = fetched.into_iter();
            for (slot, key) in out.iter_mut().zip(&keys) {
                if slot.is_none() {
                    let t = fetched.next().expect("one triple per missing pair");
                    self.write(key, t)?;
                    *slot = Some(t);
                }
            }
        }
        Ok(out.into_iter().map(|t| t.expect("filled above")).collect())
    }

    fn model_id(&self) -> &str {
        self.inner.model_id()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProviderKind {
    File,
    Wire,
    Mock,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProviderConfig {
    pub kind: ProviderKind,
    /// Service base URL for `wire`.
    #[serde(default)]
    pub endpoint: Option<String>,
    /// Entailment file for `file`.
    #[serde(default)]
    pub path: Option<PathBuf>,
    pub timeout_secs: f64,
    pub max_retries: u32,
    #[serde(default)]
    pub cache_dir: Option<PathBuf>,
    pub max_in_flight: usize,
    pub seed: u64,
}

impl ProviderConfig {
    pub fn mock(seed: u64) -> Self {
        ProviderConfig {
            kind: ProviderKind::Mock,
            endpoint: None,
            path: None,
            timeout_secs: 30.0,
            max_retries: 3,
            cache_dir: None,
            max_in_flight: DEFAULT_MAX_IN_FLIGHT,
            seed,
        }
    }

    pub fn validate(&self) -> Result<(), ProviderError> {
        if !(self.timeout_secs > 0.0 && self.timeout_secs.is_finite()) {
            return Err(ProviderError::Config(format!("timeout must be positive, got {}", self.timeout_secs)));
        }
        if self.max_in_flight == 0 {
            return Err(ProviderError::Config("max_in_flight must be at least 1".into()));
        }
        Ok(())
    }

    /// Instantiates the configured provider, wrapped in a cache when
    /// `cache_dir` is set.
    pub fn build(&self) -> Result<Box<dyn EntailmentProvider>, ProviderError> {
        self.validate()?;
        let base: Box<dyn EntailmentProvider> = match self.kind {
            ProviderKind::Mock => Box::new(MockProvider::new(self.seed)),
            ProviderKind::File => {
                let path = self
                    .path
                    .as_ref()
                    .ok_or_else(|| ProviderError::Config("file provider needs a path".into()))?;
                Box::new(FileProvider::open(path)?)
            }
            ProviderKind::Wire => {
                let endpoint = self.endpoint.clone().unwrap_or_default();
                Box::new(WireProvider::new(
                    &endpoint,
                    Duration::from_secs_f64(self.timeout_secs),
                    self.max_retries,
                    self.max_in_flight,
                )?)
            }
        };
        match &self.cache_dir {
            Some(dir) => Ok(Box::new(CachedProvider::new(base, dir)?)),
            None => Ok(base),
        }
    }
}

impl EntailmentProvider for Box<dyn EntailmentProvider> {
    fn fetch(&self, req: &EntailmentRequest) -> Result<Vec<[f64; 3]>, ProviderError> {
        (**self).fetch(req)
    }

    fn model_id(&self) -> &str {
        (**self).model_id()
    }
}
