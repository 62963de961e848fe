//! Frozen language-model access: free-form generation and binary label
//! probabilities from label log-likelihoods.

use std::fs::{File, OpenOptions};
use std::io::Write;
use std::path::Path;
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::encoder::classify_http_error;
use crate::error::{Error, Result};
use crate::util::{content_hash, fnv1a, sigmoid, Limiter};

/// Log-likelihoods of the strings "True" and "False" given a prompt.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LabelLogLik {
    pub l_true: f64,
    pub l_false: f64,
}

impl LabelLogLik {
    /// Normalized pair whose difference is `logit`.
    pub fn from_logit(logit: f64) -> Self {
        Self {
            l_true: -softplus(-logit),
            l_false: -softplus(logit),
        }
    }

    pub fn margin(&self) -> f64 {
        self.l_true - self.l_false
    }
}

fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// Two-way normalization `exp(L_T) / (exp(L_T) + exp(L_F)) = sigmoid(L_T - L_F)`.
pub fn binary_probability(ll: &LabelLogLik) -> Result<f64> {
    if !ll.l_true.is_finite() || !ll.l_false.is_finite() {
        return Err(Error::NonFinite("label log-likelihood"));
    }
    Ok(sigmoid(ll.l_true - ll.l_false))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationResult {
    pub text: String,
    pub model: String,
    pub latency_ms: u64,
}

pub trait LanguageModel: Send + Sync {
    fn model_id(&self) -> String;

    fn score_labels(&self, prompt: &str) -> Result<LabelLogLik>;

    fn generate(&self, prompt: &str) -> Result<GenerationResult>;
}

impl<T: LanguageModel + ?Sized> LanguageModel for Arc<T> {
    fn model_id(&self) -> String {
        (**self).model_id()
    }
    fn score_labels(&self, prompt: &str) -> Result<LabelLogLik> {
        (**self).score_labels(prompt)
    }
    fn generate(&self, prompt: &str) -> Result<GenerationResult> {
        (**self).generate(prompt)
    }
}

/// Rough token count: four characters per token.
pub fn estimate_tokens(text: &str) -> usize {
    text.chars().count().div_ceil(4)
}

// ---------------------------------------------------------------------------
// Deterministic mock
// ---------------------------------------------------------------------------

/// Substring whose every occurrence shifts the True-vs-False logit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MockRule {
    pub pattern: String,
    pub shift: f64,
}

impl MockRule {
    pub fn new(pattern: impl Into<String>, shift: f64) -> Self {
        Self {
            pattern: pattern.into(),
            shift,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MockConfig {
    #[serde(default)]
    pub rules: Vec<MockRule>,
    /// Logit of a prompt with no matches.
    #[serde(default)]
    pub bias: f64,
    /// Standard deviation of per-prompt logit noise, derived from (seed, prompt).
    #[serde(default)]
    pub noise: f64,
    #[serde(default)]
    pub seed: u64,
}

impl Default for MockConfig {
    fn default() -> Self {
        Self {
            rules: vec![MockRule::new("ALPHA", 2.0)],
            bias: 0.0,
            noise: 0.0,
            seed: 0,
        }
    }
}

/// Marker that identifies a manager prompt to the mock.
pub const MANAGER_MARKER: &str = "Aggregate-weight advice";

/// Pure function of (prompt, seed): the logit is `bias + sum of rule shifts
/// over matches + noise`; generation reports `Prediction: True` iff the logit
/// is positive. Manager prompts get a weighted vote over the specialist
/// predictions they contain.
#[derive(Debug, Clone, Default)]
pub struct MockLm {
    config: MockConfig,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MockEvidence {
    pub logit: f64,
    pub matches: Vec<(String, usize, f64)>,
}

impl MockLm {
    pub fn new(config: MockConfig) -> Self {
        Self { config }
    }

    pub fn config(&self) -> &MockConfig {
        &self.config
    }

    fn noise(&self, prompt: &str) -> f64 {
        if self.config.noise == 0.0 {
            return 0.0;
        }
        let mut key = self.config.seed.to_le_bytes().to_vec();
        key.extend_from_slice(prompt.as_bytes());
        let h1 = fnv1a(&key);
        key.push(0x5a);
        let h2 = fnv1a(&key);
        let u1 = ((h1 >> 11) as f64 + 0.5) / (1u64 << 53) as f64;
        let u2 = (h2 >> 11) as f64 / (1u64 << 53) as f64;
        let z = (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos();
        self.config.noise * z
    }

    pub fn evidence(&self, prompt: &str) -> MockEvidence {
        let mut logit = self.config.bias;
        let mut matches = Vec::new();
        for rule in &self.config.rules {
            if rule.pattern.is_empty() {
                continue;
            }
            let n = prompt.matches(rule.pattern.as_str()).count();
            if n > 0 {
                logit += rule.shift * n as f64;
                matches.push((rule.pattern.clone(), n, rule.shift));
            }
        }
        MockEvidence {
            logit: logit + self.noise(prompt),
            matches,
        }
    }

    fn specialist_text(&self, prompt: &str) -> String {
        let ev = self.evidence(prompt);
        let verdict = ev.logit > 0.0;
        let strength = match ev.logit {
            l if l >= 2.0 => "strongly favourable",
            l if l > 0.0 => "favourable",
            l if l > -2.0 => "unfavourable",
            _ => "strongly unfavourable",
        };
        let mut analysis = String::new();
        if ev.matches.is_empty() {
            analysis.push_str("no decisive signals in the supplied evidence");
        } else {
            let parts: Vec<String> = ev
                .matches
                .iter()
                .map(|(p, n, s)| {
                    let dir = if *s >= 0.0 {
                        "supports"
                    } else {
                        "weighs against"
                    };
                    format!("{p} seen {n} time(s) and {dir} success")
                })
                .collect();
            analysis.push_str(&parts.join("; "));
        }
        format!(
            "Prediction: {}\nAnalysis: The evidence is {strength}: {analysis}. Outlook {}.",
            if verdict { "True" } else { "False" },
            if verdict { "positive" } else { "negative" },
        )
    }

    fn manager_text(&self, prompt: &str) -> String {
        let preds = parse_manager_predictions(prompt);
        let weights = parse_weight_vector(prompt).unwrap_or_else(|| vec![1.0 / 3.0; 3]);
        let mut support = 0.0;
        let mut total = 0.0;
        for (i, p) in preds.iter().enumerate() {
            let w = weights.get(i).copied().unwrap_or(0.0);
            if let Some(b) = p {
                total += w;
                if *b {
                    support += w;
                }
            }
        }
        let share = if total > 0.0 { support / total } else { 0.0 };
        let verdict = share > 0.5;
        format!(
            "Prediction: {}\nAnalysis: Weighted synthesis of the specialist verdicts gives {:.3} of the advised weight to success; the final call follows the weighted majority.",
            if verdict { "True" } else { "False" },
            share
        )
    }
}

/// Specialist predictions listed in a manager prompt, in block order;
/// `None` for an unavailable view.
fn parse_manager_predictions(prompt: &str) -> Vec<Option<bool>> {
    prompt
        .lines()
        .map(str::trim_start)
        .filter_map(|l| l.strip_prefix("• Prediction:"))
        .map(|rest| match rest.trim() {
            "True" => Some(true),
            "False" => Some(false),
            _ => None,
        })
        .collect()
}

fn parse_weight_vector(prompt: &str) -> Option<Vec<f64>> {
    let start = prompt.find("perspectives is")?;
    let rest = &prompt[start..];
    let open = rest.find('(')?;
    let close = rest[open..].find(')')? + open;
    rest[open + 1..close]
        .split(',')
        .map(|s| s.trim().parse::<f64>().ok())
        .collect()
}

impl LanguageModel for MockLm {
    fn model_id(&self) -> String {
        format!("mock-{}", self.config.seed)
    }

    fn score_labels(&self, prompt: &str) -> Result<LabelLogLik> {
        Ok(LabelLogLik::from_logit(self.evidence(prompt).logit))
    }

    fn generate(&self, prompt: &str) -> Result<GenerationResult> {
        let text = if prompt.contains(MANAGER_MARKER) {
            self.manager_text(prompt)
        } else {
            self.specialist_text(prompt)
        };
        Ok(GenerationResult {
            text,
            model: self.model_id(),
            latency_ms: 0,
        })
    }
}

/// Replays queued generations in order; for exercising parsers and fallbacks.
#[derive(Debug, Default)]
pub struct ScriptedLm {
    generations: Mutex<std::collections::VecDeque<Result<String, String>>>,
    logit: f64,
}

impl ScriptedLm {
    pub fn new<I, S>(outputs: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Self {
            generations: Mutex::new(outputs.into_iter().map(|s| Ok(s.into())).collect()),
            logit: 0.0,
        }
    }

    /// Queues a permanent provider error.
    pub fn push_error(&self, message: &str) {
        self.generations
            .lock()
            .unwrap()
            .push_back(Err(message.to_string()));
    }
}

impl LanguageModel for ScriptedLm {
    fn model_id(&self) -> String {
        "scripted".into()
    }

    fn score_labels(&self, _prompt: &str) -> Result<LabelLogLik> {
        Ok(LabelLogLik::from_logit(self.logit))
    }

    fn generate(&self, _prompt: &str) -> Result<GenerationResult> {
        match self.generations.lock().unwrap().pop_front() {
            Some(Ok(text)) => Ok(GenerationResult {
                text,
                model: "scripted".into(),
                latency_ms: 0,
            }),
            Some(Err(m)) => Err(Error::Provider(m)),
            None => Err(Error::Provider("script exhausted".into())),
        }
    }
}

// ---------------------------------------------------------------------------
// HTTP provider
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum LabelScoring {
    /// One-token chat completion with `top_logprobs`; reads "True"/"False".
    #[default]
    ChatTopLogprobs,
    /// POST `{prompt, labels}` to `label_url`, receive `{logprobs: [..]}`
    /// holding summed string log-likelihoods.
    LabelEndpoint,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HttpLmConfig {
    pub base_url: String,
    pub model: String,
    #[serde(default = "default_lm_key_env")]
    pub api_key_env: String,
    #[serde(default)]
    pub label_scoring: LabelScoring,
    #[serde(default)]
    pub label_url: Option<String>,
    #[serde(default = "default_lm_timeout")]
    pub timeout_secs: u64,
}

fn default_lm_key_env() -> String {
    "MIRAGE_LLM_API_KEY".into()
}
fn default_lm_timeout() -> u64 {
    120
}

/// Log-probability assigned to a label missing from `top_logprobs`.
const MISSING_LABEL_LOGPROB: f64 = -30.0;

pub struct HttpLm {
    config: HttpLmConfig,
    agent: ureq::Agent,
}

impl HttpLm {
    pub fn new(config: HttpLmConfig) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(config.timeout_secs)))
            .build()
            .into();
        Self { config, agent }
    }

    fn post(&self, url: &str, body: &serde_json::Value) -> Result<serde_json::Value> {
        let key = std::env::var(&self.config.api_key_env).unwrap_or_default();
        let mut resp = self
            .agent
            .post(url)
            .header("Authorization", &format!("Bearer {key}"))
            .send_json(body)
            .map_err(classify_http_error)?;
        resp.body_mut()
            .read_json()
            .map_err(|e| Error::Provider(format!("bad response body: {e}")))
    }

    fn chat_url(&self) -> String {
        format!(
            "{}/chat/completions",
            self.config.base_url.trim_end_matches('/')
        )
    }
}

impl LanguageModel for HttpLm {
    fn model_id(&self) -> String {
        self.config.model.clone()
    }

    fn score_labels(&self, prompt: &str) -> Result<LabelLogLik> {
        match self.config.label_scoring {
            LabelScoring::LabelEndpoint => {
                let url =
                    self.config.label_url.as_deref().ok_or_else(|| {
                        Error::Config("label_url required for label_endpoint".into())
                    })?;
                let v = self.post(
                    url,
                    &serde_json::json!({"model": self.config.model, "prompt": prompt, "labels": ["True", "False"]}),
                )?;
                let lp = v["logprobs"]
                    .as_array()
                    .filter(|a| a.len() == 2)
                    .ok_or_else(|| Error::Provider("expected two logprobs".into()))?;
                let get = |i: usize| {
                    lp[i]
                        .as_f64()
                        .ok_or_else(|| Error::Provider("non-numeric logprob".into()))
                };
                Ok(LabelLogLik {
                    l_true: get(0)?,
                    l_false: get(1)?,
                })
            }
            LabelScoring::ChatTopLogprobs => {
                let v = self.post(
                    &self.chat_url(),
                    &serde_json::json!({
                        "model": self.config.model,
                        "messages": [{"role": "user", "content": prompt}],
                        "max_tokens": 1,
                        "temperature": 0,
                        "logprobs": true,
                        "top_logprobs": 20,
                    }),
                )?;
                let top = v["choices"][0]["logprobs"]["content"][0]["top_logprobs"]
                    .as_array()
                    .ok_or_else(|| Error::Provider("response lacks top_logprobs".into()))?;
                let find = |label: &str| {
                    top.iter()
                        .filter(|t| t["token"].as_str().map(str::trim) == Some(label))
                        .filter_map(|t| t["logprob"].as_f64())
                        .fold(None, |acc: Option<f64>, x| {
                            Some(acc.map_or(x, |a| a.max(x)))
                        })
                        .unwrap_or(MISSING_LABEL_LOGPROB)
                };
                Ok(LabelLogLik {
                    l_true: find("True"),
                    l_false: find("False"),
                })
            }
        }
    }

    fn generate(&self, prompt: &str) -> Result<GenerationResult> {
        let start = Instant::now();
        let v = self.post(
            &self.chat_url(),
            &serde_json::json!({
                "model": self.config.model,
                "messages": [{"role": "user", "content": prompt}],
                "temperature": 0,
            }),
        )?;
        let text = v["choices"][0]["message"]["content"]
            .as_str()
            .filter(|s| !s.is_empty())
            .ok_or_else(|| Error::Provider("empty completion".into()))?
            .to_string();
        Ok(GenerationResult {
            text,
            model: self.config.model.clone(),
            latency_ms: start.elapsed().as_millis() as u64,
        })
    }
}

// ---------------------------------------------------------------------------
// Gateway: retries, concurrency bound, token budget, audit log
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    pub base_delay_ms: u64,
    pub max_delay_ms: u64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            max_attempts: 5,
            base_delay_ms: 250,
            max_delay_ms: 8_000,
        }
    }
}

impl RetryPolicy {
    /// Exponential backoff with up to 50% additive jitter.
    pub fn delay(&self, attempt: u32) -> Duration {
        let exp = self
            .base_delay_ms
            .saturating_mul(1u64 << attempt.min(20))
            .min(self.max_delay_ms);
        let jitter = rand::thread_rng().gen_range(0.0..=0.5);
        Duration::from_millis(exp + (exp as f64 * jitter) as u64)
    }
}

#[derive(Serialize)]
struct AuditLine<'a> {
    kind: &'a str,
    model: String,
    prompt_hash: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    prompt: Option<&'a str>,
    attempts: u32,
    ok: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    error: Option<String>,
    latency_ms: u64,
}

pub struct Gateway {
    inner: Arc<dyn LanguageModel>,
    retry: RetryPolicy,
    limiter: Limiter,
    token_budget: usize,
    audit: Option<Mutex<File>>,
    verbose: bool,
}

impl Gateway {
    pub fn new(inner: Arc<dyn LanguageModel>) -> Self {
        Self {
            inner,
            retry: RetryPolicy::default(),
            limiter: Limiter::new(4),
            token_budget: 12_000,
            audit: None,
            verbose: false,
        }
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    pub fn with_max_in_flight(mut self, n: usize) -> Self {
        self.limiter = Limiter::new(n);
        self
    }

    pub fn with_token_budget(mut self, tokens: usize) -> Self {
        self.token_budget = tokens;
        self
    }

    /// Appends one JSON line per call; full prompts only when `verbose`.
    pub fn with_audit_log(mut self, path: &Path, verbose: bool) -> Result<Self> {
        let f = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(|e| Error::io(path, e))?;
        self.audit = Some(Mutex::new(f));
        self.verbose = verbose;
        Ok(self)
    }

    pub fn token_budget(&self) -> usize {
        self.token_budget
    }

    fn call<T>(&self, kind: &str, prompt: &str, f: impl Fn(&str) -> Result<T>) -> Result<T> {
        let estimated = estimate_tokens(prompt);
        if estimated > self.token_budget {
            return Err(Error::ContextOverflow {
                estimated,
                limit: self.token_budget,
            });
        }
        let start = Instant::now();
        let mut attempt = 0;
        let result = loop {
            attempt += 1;
            let r = {
                let _permit = self.limiter.acquire();
                f(prompt)
            };
            match r {
                Err(e) if e.is_retryable() && attempt < self.retry.max_attempts => {
                    log::warn!("{kind} attempt {attempt} failed: {e}; retrying");
                    std::thread::sleep(self.retry.delay(attempt - 1));
                }
                other => break other,
            }
        };
        if let Some(audit) = &self.audit {
            let line = AuditLine {
                kind,
                model: self.inner.model_id(),
                prompt_hash: content_hash(prompt),
                prompt: self.verbose.then_some(prompt),
                attempts: attempt,
                ok: result.is_ok(),
                error: result.as_ref().err().map(|e| e.to_string()),
                latency_ms: start.elapsed().as_millis() as u64,
            };
            if let Ok(s) = serde_json::to_string(&line) {
                let mut f = audit.lock().unwrap();
                let _ = writeln!(f, "{s}");
            }
        }
        result
    }
}

impl LanguageModel for Gateway {
    fn model_id(&self) -> String {
        self.inner.model_id()
    }

    fn score_labels(&self, prompt: &str) -> Result<LabelLogLik> {
        self.call("score_labels", prompt, |p| self.inner.score_labels(p))
    }

    fn generate(&self, prompt: &str) -> Result<GenerationResult> {
        self.call("generate", prompt, |p| self.inner.generate(p))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::sync::atomic::{AtomicU32, Ordering};

    #[test]
    fn planted_token_shifts_margin_by_two() {
        let m = MockLm::default();
        let ll = m.score_labels("profile mentions ALPHA partners").unwrap();
        assert!((ll.margin() - 2.0).abs() < 1e-12);
        assert!(ll.l_true <= 0.0 && ll.l_false <= 0.0);
    }

    #[test]
    fn neutral_prompt_is_symmetric() {
        let ll = MockLm::default().score_labels("nothing to see").unwrap();
        assert_eq!(ll.l_true, ll.l_false);
        assert_eq!(binary_probability(&ll).unwrap(), 0.5);
    }

    #[test]
    fn binary_probability_examples() {
        let p = binary_probability(&LabelLogLik {
            l_true: 3f64.ln(),
            l_false: 0.0,
        })
        .unwrap();
        assert!((p - 0.75).abs() < 1e-15);
        let p = binary_probability(&LabelLogLik {
            l_true: -5.0,
            l_false: 0.0,
        })
        .unwrap();
        assert!((p - 0.006693).abs() < 1e-6);
        assert!(binary_probability(&LabelLogLik {
            l_true: f64::NAN,
            l_false: 0.0
        })
        .is_err());
    }

    #[test]
    fn mock_generation_follows_rule_table() {
        let m = MockLm::default();
        let g = m.generate("profile with ALPHA").unwrap();
        assert!(g.text.starts_with("Prediction: True"), "{}", g.text);
        let g = m.generate("neutral profile").unwrap();
        assert!(g.text.starts_with("Prediction: False"), "{}", g.text);
        assert_eq!(m.generate("same").unwrap(), m.generate("same").unwrap());
    }

    #[test]
    fn mock_noise_is_seeded() {
        let cfg = |seed| MockConfig {
            rules: vec![],
            bias: 0.0,
            noise: 1.0,
            seed,
        };
        let a = MockLm::new(cfg(1)).score_labels("x").unwrap();
        let b = MockLm::new(cfg(1)).score_labels("x").unwrap();
        let c = MockLm::new(cfg(2)).score_labels("x").unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn manager_mock_weighted_vote() {
        let prompt = format!(
            "(1) x\n    • Prediction: True\n(2) y\n    • Prediction: False\n(3) z\n    • Prediction: True\n(4) {MANAGER_MARKER}\n    The historical importance of the three perspectives is (0.200, 0.600, 0.200)\n"
        );
        let g = MockLm::default().generate(&prompt).unwrap();
        assert!(g.text.starts_with("Prediction: False"), "{}", g.text);
        let equal = prompt.replace("(0.200, 0.600, 0.200)", "(0.333, 0.333, 0.333)");
        let g = MockLm::default().generate(&equal).unwrap();
        assert!(g.text.starts_with("Prediction: True"), "{}", g.text);
    }

    struct Flaky {
        failures: AtomicU32,
        calls: AtomicU32,
    }

    impl LanguageModel for Flaky {
        fn model_id(&self) -> String {
            "flaky".into()
        }
        fn score_labels(&self, _p: &str) -> Result<LabelLogLik> {
            self.calls.fetch_add(1, Ordering::SeqCst);
            if self.failures.load(Ordering::SeqCst) > 0 {
                self.failures.fetch_sub(1, Ordering::SeqCst);
                return Err(Error::Transport("reset".into()));
            }
            Ok(LabelLogLik::from_logit(1.0))
        }
        fn generate(&self, _p: &str) -> Result<GenerationResult> {
            self.calls.fetch_add(1, Ordering::SeqCst);
            Err(Error::Provider("bad request".into()))
        }
    }

    fn fast_retry() -> RetryPolicy {
        RetryPolicy {
            max_attempts: 5,
            base_delay_ms: 1,
            max_delay_ms: 2,
        }
    }

    #[test]
    fn gateway_retries_transport_failures() {
        let inner = Arc::new(Flaky {
            failures: AtomicU32::new(3),
            calls: AtomicU32::new(0),
        });
        let gw = Gateway::new(inner.clone()).with_retry(fast_retry());
        assert!(gw.score_labels("p").is_ok());
        assert_eq!(inner.calls.load(Ordering::SeqCst), 4);
    }

    #[test]
    fn gateway_gives_up_after_max_attempts() {
        let inner = Arc::new(Flaky {
            failures: AtomicU32::new(100),
            calls: AtomicU32::new(0),
        });
        let gw = Gateway::new(inner.clone()).with_retry(fast_retry());
        assert!(gw.score_labels("p").unwrap_err().is_retryable());
        assert_eq!(inner.calls.load(Ordering::SeqCst), 5);
    }

    #[test]
    fn gateway_does_not_retry_permanent_errors() {
        let inner = Arc::new(Flaky {
            failures: AtomicU32::new(0),
            calls: AtomicU32::new(0),
        });
        let gw = Gateway::new(inner.clone()).with_retry(fast_retry());
        assert!(gw.generate("p").is_err());
        assert_eq!(inner.calls.load(Ordering::SeqCst), 1);
    }

    #[test]
    fn gateway_enforces_token_budget() {
        let gw = Gateway::new(Arc::new(MockLm::default())).with_token_budget(10);
        let err = gw.generate(&"x".repeat(100)).unwrap_err();
        assert!(matches!(
            err,
            Error::ContextOverflow {
                estimated: 25,
                limit: 10
            }
        ));
        assert!(gw.generate("short").is_ok());
    }

    #[test]
    fn audit_log_stores_hash_not_prompt() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("audit.jsonl");
        let gw = Gateway::new(Arc::new(MockLm::default()))
            .with_audit_log(&path, false)
            .unwrap();
        gw.generate("secret prompt ALPHA").unwrap();
        let log = std::fs::read_to_string(&path).unwrap();
        assert!(!log.contains("secret"));
        assert!(log.contains(&content_hash("secret prompt ALPHA")));
    }

    proptest! {
        #[test]
        fn probability_monotone_in_margin(a in -50.0f64..50.0, b in -50.0f64..50.0, base in -20.0f64..20.0) {
            prop_assume!(a < b);
            let pa = binary_probability(&LabelLogLik { l_true: base + a, l_false: base }).unwrap();
            let pb = binary_probability(&LabelLogLik { l_true: base + b, l_false: base }).unwrap();
            prop_assert!(pa <= pb);
            if b - a > 1e-6 && b.abs() < 30.0 && a.abs() < 30.0 {
                prop_assert!(pa < pb);
            }
        }

        #[test]
        fn equal_loglik_gives_half(l in -1e6f64..1e6) {
            prop_assert_eq!(binary_probability(&LabelLogLik { l_true: l, l_false: l }).unwrap(), 0.5);
        }
    }
}
