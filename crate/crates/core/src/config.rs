//! Pipeline configuration, read from TOML. Every field has a default, so an
//! empty file is a valid configuration.

use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::encoder::{HttpEncoderConfig, DEFAULT_DIM};
use crate::error::{Error, Result};
use crate::gain::DEFAULT_LAMBDA_CONF;
use crate::gate::{GateConfig, DEFAULT_ATTR_DIM};
use crate::lm::{HttpLmConfig, MockConfig};
use crate::retrieval::{DEFAULT_HISTORY, DEFAULT_PEERS};
use crate::selector::{ExtractConfig, TrainConfig};
use crate::synth::GeneratorConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum PathMode {
    /// Every path up to the depth cap, truncated to the token budget.
    All,
    Random,
    #[default]
    Selector,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Fusion {
    /// One agent sees all evidence.
    Single,
    /// Manager with equal view weights.
    Fixed,
    #[default]
    Gate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default)]
pub struct Ablation {
    pub no_graph: bool,
    pub paths: PathMode,
    pub no_peers: bool,
    pub no_investor: bool,
    pub fusion: Fusion,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum LmProvider {
    #[default]
    Mock,
    Http,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct GatewayConfig {
    pub provider: LmProvider,
    pub http: Option<HttpLmConfig>,
    /// Overrides the rule table derived from the generator settings.
    pub mock: Option<MockConfig>,
    pub max_in_flight: usize,
    pub token_budget: usize,
    pub max_attempts: u32,
    pub audit_log: bool,
    pub audit_prompts: bool,
}

impl Default for GatewayConfig {
    fn default() -> Self {
        Self {
            provider: LmProvider::Mock,
            http: None,
            mock: None,
            max_in_flight: 4,
            token_budget: 12_000,
            max_attempts: 5,
            audit_log: true,
            audit_prompts: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum EncoderProvider {
    #[default]
    Hashing,
    Http,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct EncoderSettings {
    pub provider: EncoderProvider,
    pub dim: usize,
    pub http: Option<HttpEncoderConfig>,
}

impl Default for EncoderSettings {
    fn default() -> Self {
        Self {
            provider: EncoderProvider::Hashing,
            dim: DEFAULT_DIM,
            http: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SplitConfig {
    pub train: f64,
    pub val: f64,
    /// Only companies whose first round is on or after this date are
    /// prediction targets. Defaults to the generator's prediction window
    /// for generated data and to every labeled company otherwise.
    pub targets_from: Option<NaiveDate>,
}

impl Default for SplitConfig {
    fn default() -> Self {
        Self {
            train: 0.70,
            val: 0.15,
            targets_from: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RetrievalConfig {
    pub peers: usize,
    pub history: usize,
    pub path_token_budget: usize,
}

impl Default for RetrievalConfig {
    fn default() -> Self {
        Self {
            peers: DEFAULT_PEERS,
            history: DEFAULT_HISTORY,
            path_token_budget: crate::agents::DEFAULT_PATH_TOKEN_BUDGET,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SelectorSettings {
    pub train: TrainConfig,
    pub extract: ExtractConfig,
    /// Paths kept per target in `--paths=all` mode before token truncation.
    pub all_paths_cap: usize,
}

impl Default for SelectorSettings {
    fn default() -> Self {
        Self {
            train: TrainConfig::default(),
            extract: ExtractConfig::default(),
            all_paths_cap: 64,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GateSettings {
    pub train: GateConfig,
    pub attr_dim: usize,
}

impl Default for GateSettings {
    fn default() -> Self {
        Self {
            train: GateConfig::default(),
            attr_dim: DEFAULT_ATTR_DIM,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    /// Drives every seeded component.
    pub seed: u64,
    pub out: PathBuf,
    /// Existing dataset directory; generated data lives in `<out>/data` otherwise.
    pub data_dir: Option<PathBuf>,
    pub generator: GeneratorConfig,
    pub gateway: GatewayConfig,
    pub encoder: EncoderSettings,
    pub lambda_conf: f64,
    pub split: SplitConfig,
    pub retrieval: RetrievalConfig,
    pub selector: SelectorSettings,
    pub gate: GateSettings,
    pub ablation: Ablation,
    /// Named `metrics.csv` files compared against in the report.
    pub baselines: Vec<(String, PathBuf)>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            seed: 7,
            out: PathBuf::from("out"),
            data_dir: None,
            generator: GeneratorConfig::default(),
            gateway: GatewayConfig::default(),
            encoder: EncoderSettings::default(),
            lambda_conf: DEFAULT_LAMBDA_CONF,
            split: SplitConfig::default(),
            retrieval: RetrievalConfig::default(),
            selector: SelectorSettings::default(),
            gate: GateSettings::default(),
            ablation: Ablation::default(),
            baselines: Vec::new(),
        }
    }
}

impl PipelineConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// Propagates the top-level seed into every seeded component.
    pub fn resolve(mut self) -> Result<Self> {
        self.generator.seed = self.seed;
        self.selector.train.seed = self.seed;
        self.gate.train.seed = self.seed;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        let s = &self.split;
        if !(s.train > 0.0 && s.val >= 0.0 && s.train + s.val < 1.0) {
            return Err(Error::Config(
                "split fractions must leave a test share".into(),
            ));
        }
        if !(self.lambda_conf >= 0.0) {
            return Err(Error::Config("lambda_conf must be non-negative".into()));
        }
        if self.encoder.provider == EncoderProvider::Http && self.encoder.http.is_none() {
            return Err(Error::Config(
                "encoder.provider = \"http\" needs [encoder.http]".into(),
            ));
        }
        if self.gateway.provider == LmProvider::Http && self.gateway.http.is_none() {
            return Err(Error::Config(
                "gateway.provider = \"http\" needs [gateway.http]".into(),
            ));
        }
        self.selector.train.validate()?;
        if self.data_dir.is_none() {
            self.generator.validate()?;
        }
        Ok(())
    }

    pub fn data_path(&self) -> PathBuf {
        self.data_dir
            .clone()
            .unwrap_or_else(|| self.out.join("data"))
    }

    pub fn targets_from(&self) -> Option<NaiveDate> {
        match (self.split.targets_from, &self.data_dir) {
            (Some(d), _) => Some(d),
            (None, None) => Some(self.generator.target_start()),
            (None, Some(_)) => None,
        }
    }
}
