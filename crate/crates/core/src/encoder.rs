//! Fixed-dimension text embeddings behind a provider abstraction.

use std::collections::{BTreeMap, HashMap};
use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::util::{content_hash, fnv1a, Limiter};

pub const DEFAULT_DIM: usize = 384;

#[derive(Debug, Clone, PartialEq)]
pub struct Embedding {
    values: Vec<f64>,
    norm: f64,
}

impl Embedding {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("embedding entry"));
        }
        let norm = values.iter().map(|v| v * v).sum::<f64>().sqrt();
        Ok(Self { values, norm })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn norm(&self) -> f64 {
        self.norm
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }
}

/// Cosine similarity. Symmetric by construction: the dot product and the
/// norm product are both commutative in floating point.
pub fn cosine(a: &Embedding, b: &Embedding) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch {
            expected: a.dim(),
            actual: b.dim(),
        });
    }
    if a.norm == 0.0 || b.norm == 0.0 {
        return Err(Error::ZeroVector);
    }
    let dot: f64 = a.values.iter().zip(&b.values).map(|(x, y)| x * y).sum();
    Ok((dot / (a.norm * b.norm)).clamp(-1.0, 1.0))
}

pub trait TextEncoder: Send + Sync {
    /// Stable identifier; part of the embedding cache key.
    fn provider_id(&self) -> String;

    fn dim(&self) -> usize;

    fn encode(&self, text: &str) -> Result<Embedding>;
}

impl<T: TextEncoder + ?Sized> TextEncoder for Box<T> {
    fn provider_id(&self) -> String {
        (**self).provider_id()
    }
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn encode(&self, text: &str) -> Result<Embedding> {
        (**self).encode(text)
    }
}

/// Offline encoder: signed feature hashing of lowercase word tokens with
/// sublinear term frequency, L2-normalized.
#[derive(Debug, Clone)]
pub struct HashingEncoder {
    dim: usize,
}

impl HashingEncoder {
    pub fn new(dim: usize) -> Self {
        assert!(dim > 0, "embedding dimension must be positive");
        Self { dim }
    }
}

impl Default for HashingEncoder {
    fn default() -> Self {
        Self::new(DEFAULT_DIM)
    }
}

impl TextEncoder for HashingEncoder {
    fn provider_id(&self) -> String {
        format!("hashing-{}", self.dim)
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn encode(&self, text: &str) -> Result<Embedding> {
        if text.trim().is_empty() {
            return Err(Error::EmptyText);
        }
        // Keyed by token hash; the ordered map fixes the summation order.
        let mut counts: BTreeMap<u64, u32> = BTreeMap::new();
        let mut buf = String::new();
        for tok in text
            .split(|c: char| !c.is_alphanumeric())
            .filter(|t| !t.is_empty())
        {
            buf.clear();
            buf.extend(tok.chars().flat_map(char::to_lowercase));
            *counts.entry(fnv1a(buf.as_bytes())).or_default() += 1;
        }
        if counts.is_empty() {
            counts.insert(fnv1a(text.trim().as_bytes()), 1);
        }
        let mut values = vec![0.0; self.dim];
        for (h, n) in counts {
            let bucket = (h % self.dim as u64) as usize;
            let sign = if h >> 63 == 1 { -1.0 } else { 1.0 };
            values[bucket] += sign * (1.0 + f64::from(n).ln());
        }
        let norm = values.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > 0.0 {
            values.iter_mut().for_each(|v| *v /= norm);
        }
        Embedding::new(values)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HttpEncoderConfig {
    pub base_url: String,
    #[serde(default = "default_key_env")]
    pub api_key_env: String,
    #[serde(default)]
    pub model: String,
    pub dim: usize,
    #[serde(default = "default_in_flight")]
    pub max_in_flight: usize,
    #[serde(default = "default_timeout")]
    pub timeout_secs: u64,
}

fn default_key_env() -> String {
    "MIRAGE_ENCODER_API_KEY".into()
}
fn default_in_flight() -> usize {
    4
}
fn default_timeout() -> u64 {
    60
}

#[derive(Serialize)]
struct EncodeRequest<'a> {
    texts: &'a [&'a str],
    #[serde(skip_serializing_if = "str::is_empty")]
    model: &'a str,
}

#[derive(Deserialize)]
struct EncodeResponse {
    vectors: Vec<Vec<f64>>,
}

/// Remote encoder speaking `{texts: [..]} -> {vectors: [[..]]}`.
pub struct HttpEncoder {
    config: HttpEncoderConfig,
    agent: ureq::Agent,
    limiter: Limiter,
}

impl HttpEncoder {
    pub fn new(config: HttpEncoderConfig) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(config.timeout_secs)))
            .build()
            .into();
        let limiter = Limiter::new(config.max_in_flight);
        Self {
            config,
            agent,
            limiter,
        }
    }
}

/// Maps an HTTP failure to a retryable or permanent error.
pub(crate) fn classify_http_error(err: ureq::Error) -> Error {
    match err {
        ureq::Error::StatusCode(code) if code == 429 || code >= 500 => {
            Error::Transport(format!("http status {code}"))
        }
        ureq::Error::StatusCode(code) => Error::Provider(format!("http status {code}")),
        ureq::Error::Io(e) => Error::Transport(e.to_string()),
        ureq::Error::Timeout(t) => Error::Transport(format!("timeout: {t}")),
        ureq::Error::ConnectionFailed | ureq::Error::HostNotFound => {
            Error::Transport(err.to_string())
        }
        other => Error::Provider(other.to_string()),
    }
}

impl TextEncoder for HttpEncoder {
    fn provider_id(&self) -> String {
        format!("http:{}:{}", self.config.base_url, self.config.model)
    }

    fn dim(&self) -> usize {
        self.config.dim
    }

    fn encode(&self, text: &str) -> Result<Embedding> {
        if text.trim().is_empty() {
            return Err(Error::EmptyText);
        }
        let key = std::env::var(&self.config.api_key_env).unwrap_or_default();
        let texts = [text];
        let body = EncodeRequest {
            texts: &texts,
            model: &self.config.model,
        };
        let _permit = self.limiter.acquire();
        let mut resp = self
            .agent
            .post(&self.config.base_url)
            .header("Authorization", &format!("Bearer {key}"))
            .send_json(&body)
            .map_err(classify_http_error)?;
        let parsed: EncodeResponse = resp
            .body_mut()
            .read_json()
            .map_err(|e| Error::Provider(format!("bad encoder response: {e}")))?;
        let v = parsed
            .vectors
            .into_iter()
            .next()
            .ok_or_else(|| Error::Provider("encoder returned no vectors".into()))?;
        if v.len() != self.config.dim {
            return Err(Error::DimensionMismatch {
                expected: self.config.dim,
                actual: v.len(),
            });
        }
        Embedding::new(v)
    }
}

#[derive(Serialize, Deserialize)]
struct CacheLine {
    key: String,
    vector: Vec<f64>,
}

/// Thread-safe memoizing wrapper keyed by (provider id, content hash),
/// optionally persisted as JSONL.
pub struct CachedEncoder<E> {
    inner: E,
    cache: Mutex<HashMap<String, Embedding>>,
    path: Option<PathBuf>,
}

impl<E: TextEncoder> CachedEncoder<E> {
    pub fn new(inner: E) -> Self {
        Self {
            inner,
            cache: Mutex::new(HashMap::new()),
            path: None,
        }
    }

    /// Loads an existing cache file if present; `flush` writes back to it.
    pub fn with_file(inner: E, path: &Path) -> Result<Self> {
        let mut cache = HashMap::new();
        if path.exists() {
            let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            for line in text.lines().filter(|l| !l.trim().is_empty()) {
                let l: CacheLine = serde_json::from_str(line)?;
                cache.insert(l.key, Embedding::new(l.vector)?);
            }
        }
        Ok(Self {
            inner,
            cache: Mutex::new(cache),
            path: Some(path.to_path_buf()),
        })
    }

    fn key(&self, text: &str) -> String {
        content_hash(&format!("{}\u{0}{}", self.inner.provider_id(), text))
    }

    pub fn len(&self) -> usize {
        self.cache.lock().unwrap().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn flush(&self) -> Result<()> {
        self.write_file()
    }
}

impl<E> CachedEncoder<E> {
    fn write_file(&self) -> Result<()> {
        let Some(path) = &self.path else {
            return Ok(());
        };
        let cache = self.cache.lock().unwrap_or_else(|p| p.into_inner());
        let mut keys: Vec<&String> = cache.keys().collect();
        keys.sort();
        let mut out = String::new();
        for k in keys {
            let line = CacheLine {
                key: k.clone(),
                vector: cache[k].values().to_vec(),
            };
            out.push_str(&serde_json::to_string(&line)?);
            out.push('\n');
        }
        std::fs::write(path, out).map_err(|e| Error::io(path, e))
    }
}

impl<E: TextEncoder> TextEncoder for CachedEncoder<E> {
    fn provider_id(&self) -> String {
        self.inner.provider_id()
    }

    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn encode(&self, text: &str) -> Result<Embedding> {
        let key = self.key(text);
        if let Some(e) = self.cache.lock().unwrap().get(&key) {
            return Ok(e.clone());
        }
        let e = self.inner.encode(text)?;
        if e.dim() != self.inner.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.inner.dim(),
                actual: e.dim(),
            });
        }
        self.cache.lock().unwrap().insert(key, e.clone());
        Ok(e)
    }
}

impl<E> Drop for CachedEncoder<E> {
    fn drop(&mut self) {
        if let Err(e) = self.write_file() {
            log::warn!("embedding cache not saved: {e}");
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn emb(v: &[f64]) -> Embedding {
        Embedding::new(v.to_vec()).unwrap()
    }

    #[test]
    fn encode_is_deterministic_with_configured_dim() {
        let enc = HashingEncoder::new(64);
        let a = enc.encode("fintech payments for small merchants").unwrap();
        let b = enc.encode("fintech payments for small merchants").unwrap();
        assert_eq!(a, b);
        assert_eq!(a.dim(), 64);
        assert!((a.norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn empty_text_is_an_error() {
        assert!(matches!(
            HashingEncoder::default().encode("   "),
            Err(Error::EmptyText)
        ));
    }

    #[test]
    fn punctuation_only_text_still_encodes() {
        let e = HashingEncoder::default().encode("!!!").unwrap();
        assert!(e.norm() > 0.0);
    }

    #[test]
    fn cosine_examples() {
        let a = emb(&[1.0, 1.0, 0.0]);
        let b = emb(&[1.0, 0.0, 0.0]);
        assert!((cosine(&a, &a).unwrap() - 1.0).abs() < 1e-9);
        assert!(cosine(&b, &emb(&[0.0, 1.0, 0.0])).unwrap().abs() < 1e-9);
        assert!((cosine(&a, &b).unwrap() - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-5);
    }

    #[test]
    fn cosine_rejects_zero_and_mismatch() {
        assert!(matches!(
            cosine(&emb(&[0.0, 0.0]), &emb(&[1.0, 0.0])),
            Err(Error::ZeroVector)
        ));
        assert!(matches!(
            cosine(&emb(&[1.0]), &emb(&[1.0, 0.0])),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn non_finite_embedding_rejected() {
        assert!(Embedding::new(vec![f64::NAN]).is_err());
    }

    #[test]
    fn distinct_strings_are_not_parallel() {
        // 100 strings with pairwise distinct token bags.
        let enc = HashingEncoder::default();
        let words = [
            "robotics",
            "payments",
            "health",
            "logistics",
            "retail",
            "energy",
            "biotech",
            "security",
            "gaming",
            "education",
        ];
        let corpus: Vec<String> = (0..100)
            .map(|i| format!("{} {} platform{}", words[i % 10], words[(i / 10) % 10], i))
            .collect();
        let embs: Vec<_> = corpus.iter().map(|s| enc.encode(s).unwrap()).collect();
        for i in 0..embs.len() {
            for j in (i + 1)..embs.len() {
                assert!(cosine(&embs[i], &embs[j]).unwrap() < 1.0 - 1e-12, "{i} {j}");
            }
        }
    }

    #[test]
    fn token_overlap_raises_similarity() {
        let enc = HashingEncoder::default();
        let a = enc
            .encode("autonomous delivery robots for warehouses")
            .unwrap();
        let b = enc
            .encode("delivery robots for hospital warehouses")
            .unwrap();
        let c = enc.encode("mobile banking app for students").unwrap();
        assert!(cosine(&a, &b).unwrap() > cosine(&a, &c).unwrap());
    }

    #[test]
    fn cache_round_trips_through_disk() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cache.jsonl");
        let enc = CachedEncoder::with_file(HashingEncoder::new(16), &path).unwrap();
        let a = enc.encode("hello world").unwrap();
        enc.flush().unwrap();
        let again = CachedEncoder::with_file(HashingEncoder::new(16), &path).unwrap();
        assert_eq!(again.len(), 1);
        assert_eq!(again.encode("hello world").unwrap(), a);
    }

    proptest! {
        #[test]
        fn cosine_symmetric_and_scale_invariant(
            a in proptest::collection::vec(-10.0f64..10.0, 8),
            b in proptest::collection::vec(-10.0f64..10.0, 8),
            k in 0.01f64..100.0,
        ) {
            let ea = emb(&a);
            let eb = emb(&b);
            prop_assume!(ea.norm() > 1e-6 && eb.norm() > 1e-6);
            let ab = cosine(&ea, &eb).unwrap();
            prop_assert_eq!(ab, cosine(&eb, &ea).unwrap());
            prop_assert!((-1.0..=1.0).contains(&ab));
            let scaled = emb(&a.iter().map(|x| x * k).collect::<Vec<_>>());
            prop_assert!((cosine(&scaled, &eb).unwrap() - ab).abs() < 1e-9);
        }
    }
}
