//! Stage driver. Each stage reads the artifacts of earlier stages from the
//! output directory and writes its own; stages are idempotent for a fixed
//! configuration.

use std::collections::BTreeMap;
use std::fmt;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::agents::{
    self, render_prompts, render_single_prompt, run_agent, run_manager, run_specialists, Agent,
    AgentVerdict, Evidence, VIEWS,
};
use crate::config::{EncoderProvider, Fusion, LmProvider, PathMode, PipelineConfig};
use crate::encoder::{CachedEncoder, HashingEncoder, HttpEncoder, TextEncoder};
use crate::error::{Error, Result};
use crate::gain::{
    build_expansion_tree, label_groups, read_gain_tuples, score_cache_from_tuples, RankingGroup,
};
use crate::gate::{attribute_vector, train_gate, GateInput, GateModel, GateSample};
use crate::graph::{write_jsonl, InvestmentGraph, Target};
use crate::lm::{Gateway, HttpLm, LanguageModel, MockLm, RetryPolicy};
use crate::metrics::{self, ConfidenceSource, PredictionRecord, ViewRecord};
use crate::retrieval::{build_investor_profile, retrieve_peers, select_lead_investor};
use crate::selector::{
    self, all_paths, extract_paths, featurize_groups, random_paths, SelectorModel,
};
use crate::synth;
use crate::verbalize::company_profile;

pub const SPLITS: &str = "splits.json";
pub const GROUPS: &str = "groups.jsonl";
pub const GAIN_TUPLES: &str = "gain_tuples.jsonl";
pub const SELECTOR: &str = "selector.json";
pub const SELECTOR_LOG: &str = "selector_log.csv";
pub const SELECTOR_EVAL: &str = "selector_eval.json";
pub const VERDICTS: &str = "verdicts.jsonl";
pub const EVIDENCE: &str = "evidence.jsonl";
pub const GATE: &str = "gate.json";
pub const GATE_LOG: &str = "gate_log.csv";
pub const PREDICTIONS: &str = "predictions.jsonl";
pub const METRICS: &str = "metrics.csv";
pub const MONTHLY: &str = "monthly.csv";
pub const RESOLVED_CONFIG: &str = "config.resolved.toml";
pub const AUDIT_LOG: &str = "gateway_audit.jsonl";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    GenData,
    LabelGains,
    TrainSelector,
    EvalSelector,
    RunAgents,
    TrainGate,
    Predict,
    Evaluate,
}

impl Stage {
    pub const ALL: [Stage; 8] = [
        Stage::GenData,
        Stage::LabelGains,
        Stage::TrainSelector,
        Stage::EvalSelector,
        Stage::RunAgents,
        Stage::TrainGate,
        Stage::Predict,
        Stage::Evaluate,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Stage::GenData => "gen-data",
            Stage::LabelGains => "label-gains",
            Stage::TrainSelector => "train-selector",
            Stage::EvalSelector => "eval-selector",
            Stage::RunAgents => "run-agents",
            Stage::TrainGate => "train-gate",
            Stage::Predict => "predict",
            Stage::Evaluate => "evaluate",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Splits {
    pub train: Vec<String>,
    pub val: Vec<String>,
    pub test: Vec<String>,
}

/// Per-class shuffle, then `train`/`val`/rest cut within each class.
pub fn stratified_split(targets: &[Target], train: f64, val: f64, seed: u64) -> Splits {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5bd1_e995);
    let mut out = Splits::default();
    for class in [true, false] {
        let mut ids: Vec<String> = targets
            .iter()
            .filter(|t| t.y == class)
            .map(|t| t.company.clone())
            .collect();
        ids.sort();
        ids.shuffle(&mut rng);
        let n = ids.len();
        let n_train = (n as f64 * train).round() as usize;
        let n_val = ((n as f64 * val).round() as usize).min(n - n_train);
        out.train.extend_from_slice(&ids[..n_train]);
        out.val.extend_from_slice(&ids[n_train..n_train + n_val]);
        out.test.extend_from_slice(&ids[n_train + n_val..]);
    }
    out.train.sort();
    out.val.sort();
    out.test.sort();
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvidenceRecord {
    pub target_id: String,
    pub paths: Vec<Vec<String>>,
    pub peers: Vec<String>,
    pub lead_investor: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectorEvalReport {
    pub groups: usize,
    pub skipped: usize,
    pub selector: selector::SelectorEval,
    pub random: selector::SelectorEval,
}

/// Summary lines printed after a stage.
#[derive(Debug, Clone, Default)]
pub struct StageReport {
    pub lines: Vec<(String, String)>,
}

impl StageReport {
    fn add(&mut self, k: &str, v: impl fmt::Display) {
        self.lines.push((k.to_string(), v.to_string()));
    }
}

impl fmt::Display for StageReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (k, v) in &self.lines {
            writeln!(f, "{k}: {v}")?;
        }
        Ok(())
    }
}

pub struct Pipeline {
    config: PipelineConfig,
}

fn read_jsonl<T: serde::de::DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| Error::MalformedLine {
                file: path.display().to_string(),
                line: i + 1,
                message: e.to_string(),
            })
        })
        .collect()
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    write_text(path, &serde_json::to_string_pretty(value)?)
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| format!("{x:.6}"))
}

impl Pipeline {
    pub fn new(config: PipelineConfig) -> Result<Self> {
        Ok(Self {
            config: config.resolve()?,
        })
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.config
    }

    pub fn out(&self) -> &Path {
        &self.config.out
    }

    pub fn artifact(&self, name: &str) -> PathBuf {
        self.config.out.join(name)
    }

    fn require(&self, name: &str, stage: Stage) -> Result<PathBuf> {
        let p = self.artifact(name);
        if p.exists() {
            Ok(p)
        } else {
            Err(Error::MissingArtifact {
                path: p.clone(),
                stage: stage.name(),
            })
        }
    }

    fn prepare_out(&self) -> Result<()> {
        let out = &self.config.out;
        std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
        write_text(&out.join(RESOLVED_CONFIG), &self.config.to_toml()?)
    }

    pub fn load_graph(&self) -> Result<InvestmentGraph> {
        let dir = self.config.data_path();
        let companies = dir.join(crate::graph::COMPANIES_FILE);
        if !companies.exists() {
            return Err(Error::MissingArtifact {
                path: companies.clone(),
                stage: Stage::GenData.name(),
            });
        }
        let (g, report) = InvestmentGraph::load_dir(&dir)?;
        for w in &report.warnings {
            log::warn!("{w}");
        }
        Ok(g)
    }

    pub fn language_model(&self) -> Result<Gateway> {
        let gw = &self.config.gateway;
        let inner: Arc<dyn LanguageModel> = match gw.provider {
            LmProvider::Mock => {
                let mock = gw.mock.clone().unwrap_or_else(|| {
                    synth::mock_config(&self.config.generator, self.config.seed)
                });
                Arc::new(MockLm::new(mock))
            }
            LmProvider::Http => {
                let http = gw
                    .http
                    .clone()
                    .ok_or_else(|| Error::Config("missing [gateway.http]".into()))?;
                Arc::new(HttpLm::new(http))
            }
        };
        let mut g = Gateway::new(inner)
            .with_max_in_flight(gw.max_in_flight)
            .with_token_budget(gw.token_budget)
            .with_retry(RetryPolicy {
                max_attempts: gw.max_attempts,
                ..RetryPolicy::default()
            });
        if gw.audit_log {
            g = g.with_audit_log(&self.artifact(AUDIT_LOG), gw.audit_prompts)?;
        }
        Ok(g)
    }

    pub fn encoder(&self) -> Result<Box<dyn TextEncoder>> {
        let e = &self.config.encoder;
        Ok(match e.provider {
            EncoderProvider::Hashing => Box::new(HashingEncoder::new(e.dim)),
            EncoderProvider::Http => {
                let http = e
                    .http
                    .clone()
                    .ok_or_else(|| Error::Config("missing [encoder.http]".into()))?;
                let path = self.artifact("embeddings.jsonl");
                Box::new(CachedEncoder::with_file(HttpEncoder::new(http), &path)?)
            }
        })
    }

    /// Labeled companies eligible as prediction targets, in id order.
    pub fn targets(&self, graph: &InvestmentGraph) -> Vec<Target> {
        let from = self.config.targets_from();
        graph
            .targets()
            .into_iter()
            .filter(|t| from.is_none_or(|d| t.t0 >= d))
            .collect()
    }

    pub fn splits(&self) -> Result<Splits> {
        let p = self.require(SPLITS, Stage::LabelGains)?;
        let text = std::fs::read_to_string(&p).map_err(|e| Error::io(&p, e))?;
        Ok(serde_json::from_str(&text)?)
    }

    /// What a stage would read and write, without touching anything.
    pub fn plan(&self, stage: Stage) -> String {
        let c = &self.config;
        let mut s = String::new();
        let _ = writeln!(s, "stage: {stage}");
        let _ = writeln!(s, "out: {}", c.out.display());
        let _ = writeln!(s, "data: {}", c.data_path().display());
        let _ = writeln!(s, "seed: {}", c.seed);
        let (reads, writes): (Vec<&str>, Vec<&str>) = match stage {
            Stage::GenData => (
                vec![],
                vec![
                    "data/companies.jsonl",
                    "data/investors.jsonl",
                    "data/investments.jsonl",
                ],
            ),
            Stage::LabelGains => (vec!["data"], vec![SPLITS, GROUPS, GAIN_TUPLES]),
            Stage::TrainSelector => (vec![SPLITS, GROUPS], vec![SELECTOR, SELECTOR_LOG]),
            Stage::EvalSelector => (vec![SPLITS, GROUPS, SELECTOR], vec![SELECTOR_EVAL]),
            Stage::RunAgents => (vec![SPLITS, SELECTOR], vec![VERDICTS, EVIDENCE]),
            Stage::TrainGate => (vec![SPLITS, VERDICTS], vec![GATE, GATE_LOG]),
            Stage::Predict => (vec![SPLITS, VERDICTS, GATE], vec![PREDICTIONS]),
            Stage::Evaluate => (vec![PREDICTIONS], vec![METRICS, MONTHLY]),
        };
        let _ = writeln!(s, "reads: {}", reads.join(", "));
        let _ = writeln!(s, "writes: {}", writes.join(", "));
        let _ = writeln!(
            s,
            "gateway: {:?}, encoder: {:?} (dim {})",
            c.gateway.provider, c.encoder.provider, c.encoder.dim
        );
        let a = &c.ablation;
        let _ = writeln!(
            s,
            "ablation: paths={:?} fusion={:?} no_graph={} no_peers={} no_investor={}",
            a.paths, a.fusion, a.no_graph, a.no_peers, a.no_investor
        );
        s
    }

    pub fn run(&self, stage: Stage) -> Result<StageReport> {
        match stage {
            Stage::GenData => self.gen_data(),
            Stage::LabelGains => self.label_gains(),
            Stage::TrainSelector => self.train_selector(),
            Stage::EvalSelector => self.eval_selector(),
            Stage::RunAgents => self.run_agents(),
            Stage::TrainGate => self.train_gate(),
            Stage::Predict => self.predict(),
            Stage::Evaluate => self.evaluate(),
        }
    }

    pub fn run_all(&self) -> Result<()> {
        for stage in Stage::ALL {
            if stage == Stage::GenData && self.config.data_dir.is_some() {
                continue;
            }
            let r = self.run(stage)?;
            log::info!("{stage} done\n{r}");
        }
        Ok(())
    }

    pub fn gen_data(&self) -> Result<StageReport> {
        self.prepare_out()?;
        let data = synth::generate(&self.config.generator)?;
        let dir = self.config.data_path();
        data.write(&dir)?;
        let g = data.graph()?;
        let targets = g.targets();
        let mut r = StageReport::default();
        r.add("companies", data.companies.len());
        r.add("investors", data.investors.len());
        r.add("edges", data.edges.len());
        r.add("labeled", targets.len());
        r.add("positives", targets.iter().filter(|t| t.y).count());
        Ok(r)
    }

    pub fn label_gains(&self) -> Result<StageReport> {
        let graph = self.load_graph()?;
        self.prepare_out()?;
        let targets = self.targets(&graph);
        if targets.is_empty() {
            return Err(Error::EmptyInput("prediction targets"));
        }
        let s = &self.config.split;
        let splits = stratified_split(&targets, s.train, s.val, self.config.seed);
        write_json(&self.artifact(SPLITS), &splits)?;

        let groups: Vec<RankingGroup> = targets
            .iter()
            .flat_map(|t| build_expansion_tree(t, &graph.target_view(t)))
            .collect();
        let tuples_path = self.artifact(GAIN_TUPLES);
        let cache = score_cache_from_tuples(&read_gain_tuples(&tuples_path)?);
        let lm = self.language_model()?;
        let (labeled, tuples, stats) =
            label_groups(groups, &graph, &lm, self.config.lambda_conf, &cache);
        write_jsonl(&self.artifact(GROUPS), &labeled)?;
        write_jsonl(&tuples_path, &tuples)?;
        let mut r = StageReport::default();
        r.add("targets", targets.len());
        r.add(
            "train/val/test",
            format!(
                "{}/{}/{}",
                splits.train.len(),
                splits.val.len(),
                splits.test.len()
            ),
        );
        r.add("groups", stats.groups_labeled);
        r.add("dropped", stats.groups_dropped);
        r.add("scoring calls", stats.calls);
        r.add("reused scores", stats.reused);
        Ok(r)
    }

    fn split_groups(&self, splits: &Splits) -> Result<[Vec<RankingGroup>; 3]> {
        let p = self.require(GROUPS, Stage::LabelGains)?;
        let groups: Vec<RankingGroup> = read_jsonl(&p)?;
        let which = |ids: &[String]| -> Vec<RankingGroup> {
            groups
                .iter()
                .filter(|g| ids.binary_search(&g.target.company).is_ok())
                .cloned()
                .collect()
        };
        Ok([
            which(&splits.train),
            which(&splits.val),
            which(&splits.test),
        ])
    }

    pub fn train_selector(&self) -> Result<StageReport> {
        let splits = self.splits()?;
        let [train, val, _] = self.split_groups(&splits)?;
        let graph = self.load_graph()?;
        let enc = self.encoder()?;
        let train_f = featurize_groups(&train, &graph, &enc)?;
        let val_f = featurize_groups(&val, &graph, &enc)?;
        let (model, log) = selector::train(&train_f, &val_f, &self.config.selector.train)?;
        model.save(&self.artifact(SELECTOR))?;
        let mut csv = String::from("epoch,loss,val_ndcg_at_1\n");
        for e in &log {
            let _ = writeln!(
                csv,
                "{},{:.6},{}",
                e.epoch,
                e.loss,
                fmt_opt(e.val_ndcg_at_1)
            );
        }
        write_text(&self.artifact(SELECTOR_LOG), &csv)?;
        let mut r = StageReport::default();
        r.add("train groups", train_f.len());
        r.add("val groups", val_f.len());
        if let Some(last) = log.last() {
            r.add("final loss", format!("{:.6}", last.loss));
        }
        let best = log
            .iter()
            .filter_map(|e| e.val_ndcg_at_1)
            .fold(f64::NAN, f64::max);
        r.add("best val NDCG@1", format!("{best:.4}"));
        Ok(r)
    }

    pub fn eval_selector(&self) -> Result<StageReport> {
        let model = SelectorModel::load(&self.require(SELECTOR, Stage::TrainSelector)?)?;
        let splits = self.splits()?;
        let [_, _, test] = self.split_groups(&splits)?;
        let graph = self.load_graph()?;
        let enc = self.encoder()?;
        let feats = featurize_groups(&test, &graph, &enc)?;
        let sel = selector::evaluate(&model, &feats);
        let rnd = selector::random_baseline(&feats, 200, self.config.seed);
        let report = SelectorEvalReport {
            groups: feats.len(),
            skipped: feats.len() - sel.groups,
            selector: sel,
            random: rnd,
        };
        write_json(&self.artifact(SELECTOR_EVAL), &report)?;
        let mut r = StageReport::default();
        r.add("test groups", report.groups);
        r.add("skipped", report.skipped);
        r.add(
            "selector Hit@1 / NDCG@1",
            format!("{:.4} / {:.4}", sel.hit_at_1, sel.ndcg_at_1),
        );
        r.add(
            "random Hit@1 / NDCG@1",
            format!("{:.4} / {:.4}", rnd.hit_at_1, rnd.ndcg_at_1),
        );
        Ok(r)
    }

    pub fn run_agents(&self) -> Result<StageReport> {
        let c = &self.config;
        let splits = self.splits()?;
        let graph = self.load_graph()?;
        let model = match (c.ablation.no_graph, c.ablation.paths) {
            (false, PathMode::Selector) => Some(SelectorModel::load(
                &self.require(SELECTOR, Stage::TrainSelector)?,
            )?),
            _ => None,
        };
        let enc = self.encoder()?;
        let lm = self.language_model()?;
        let mut ids: Vec<&String> = splits
            .train
            .iter()
            .chain(&splits.val)
            .chain(&splits.test)
            .collect();
        ids.sort();
        let targets: Vec<Target> = ids
            .into_iter()
            .map(|id| {
                graph
                    .compute_label(id)
                    .ok_or(Error::EmptyInput("unlabeled target in splits"))
            })
            .collect::<Result<_>>()?;

        let results: Vec<Result<(EvidenceRecord, Vec<AgentVerdict>)>> = targets
            .par_iter()
            .map(|t| {
                let view = graph.target_view(t);
                let extract = &c.selector.extract;
                let paths = if c.ablation.no_graph {
                    None
                } else {
                    Some(match (c.ablation.paths, &model) {
                        (PathMode::Selector, Some(m)) => extract_paths(t, &view, m, &enc, extract)?,
                        (PathMode::Random, _) | (PathMode::Selector, None) => {
                            random_paths(t, &view, extract, c.seed)?
                        }
                        (PathMode::All, _) => {
                            all_paths(t, &view, extract.max_depth, c.selector.all_paths_cap)
                        }
                    })
                };
                let peers = if c.ablation.no_peers {
                    None
                } else {
                    Some(retrieve_peers(t, &graph, &enc, c.retrieval.peers)?)
                };
                let lead = select_lead_investor(t, &graph);
                let profile = lead
                    .as_deref()
                    .and_then(|v| build_investor_profile(v, t.t0, &graph, c.retrieval.history));
                let evidence = Evidence {
                    paths: paths.as_deref(),
                    peers: peers.as_ref(),
                    investor: (!c.ablation.no_investor).then_some(profile.as_ref()),
                    path_token_budget: c.retrieval.path_token_budget,
                };
                let bundle = render_prompts(t, &view, &evidence);
                let mut verdicts = run_specialists(&bundle, &lm);
                if c.ablation.fusion == Fusion::Single {
                    let prompt = render_single_prompt(t, &view, &evidence);
                    verdicts.push(run_agent(&t.company, Agent::Single, &prompt, &lm));
                }
                let record = EvidenceRecord {
                    target_id: t.company.clone(),
                    paths: paths
                        .unwrap_or_default()
                        .iter()
                        .map(|p| p.node_ids())
                        .collect(),
                    peers: peers
                        .map(|p| p.peers.into_iter().map(|x| x.company).collect())
                        .unwrap_or_default(),
                    lead_investor: lead,
                };
                Ok((record, verdicts))
            })
            .collect();
        let mut evidence = Vec::with_capacity(results.len());
        let mut verdicts = Vec::new();
        for r in results {
            let (e, v) = r?;
            evidence.push(e);
            verdicts.extend(v);
        }
        write_jsonl(&self.artifact(VERDICTS), &verdicts)?;
        write_jsonl(&self.artifact(EVIDENCE), &evidence)?;
        let mut r = StageReport::default();
        r.add("targets", evidence.len());
        let count = |s| verdicts.iter().filter(|v| v.status == s).count();
        r.add("unparsed", count(agents::VerdictStatus::Unparsed));
        r.add("failed", count(agents::VerdictStatus::Failed));
        Ok(r)
    }

    fn verdicts_by_target(&self) -> Result<BTreeMap<String, Vec<AgentVerdict>>> {
        let p = self.require(VERDICTS, Stage::RunAgents)?;
        let mut map: BTreeMap<String, Vec<AgentVerdict>> = BTreeMap::new();
        for v in read_jsonl::<AgentVerdict>(&p)? {
            map.entry(v.target_id.clone()).or_default().push(v);
        }
        Ok(map)
    }

    fn specialist_views(verdicts: &[AgentVerdict]) -> Vec<AgentVerdict> {
        VIEWS
            .iter()
            .map(|&a| {
                verdicts
                    .iter()
                    .find(|v| v.agent == a)
                    .cloned()
                    .unwrap_or_else(|| {
                        AgentVerdict::unavailable(
                            verdicts.first().map_or("", |v| v.target_id.as_str()),
                            a,
                            agents::VerdictStatus::Disabled,
                        )
                    })
            })
            .collect()
    }

    fn gate_input<E: TextEncoder + ?Sized>(
        &self,
        graph: &InvestmentGraph,
        enc: &E,
        target: &str,
        views: &[AgentVerdict],
    ) -> Result<GateInput> {
        let rationales = views
            .iter()
            .map(|v| Ok(enc.encode(v.rationale_text())?.into_values()))
            .collect::<Result<Vec<_>>>()?;
        let attrs = graph
            .company(target)
            .map(|c| c.attributes.clone())
            .unwrap_or_default();
        Ok(GateInput {
            rationales,
            attributes: attribute_vector(&attrs, self.config.gate.attr_dim),
        })
    }

    fn gate_samples<E: TextEncoder + ?Sized>(
        &self,
        graph: &InvestmentGraph,
        enc: &E,
        ids: &[String],
        verdicts: &BTreeMap<String, Vec<AgentVerdict>>,
    ) -> Result<Vec<GateSample>> {
        ids.par_iter()
            .map(|id| {
                let v = verdicts.get(id).ok_or_else(|| Error::MissingArtifact {
                    path: format!("verdicts for {id}").into(),
                    stage: Stage::RunAgents.name(),
                })?;
                let y = graph
                    .compute_label(id)
                    .ok_or(Error::EmptyInput("unlabeled target"))?
                    .y;
                Ok(GateSample {
                    input: self.gate_input(graph, enc, id, &Self::specialist_views(v))?,
                    y,
                })
            })
            .collect()
    }

    pub fn train_gate(&self) -> Result<StageReport> {
        let splits = self.splits()?;
        let verdicts = self.verdicts_by_target()?;
        let graph = self.load_graph()?;
        let enc = self.encoder()?;
        let train = self.gate_samples(&graph, &enc, &splits.train, &verdicts)?;
        let val = self.gate_samples(&graph, &enc, &splits.val, &verdicts)?;
        let (model, log) = train_gate(&train, &val, &self.config.gate.train)?;
        model.save(&self.artifact(GATE))?;
        let mut csv = String::from("epoch,loss,val_precision,val_f1\n");
        for e in &log {
            let _ = writeln!(
                csv,
                "{},{:.6},{},{}",
                e.epoch,
                e.loss,
                fmt_opt(e.val_precision),
                fmt_opt(e.val_f1)
            );
        }
        write_text(&self.artifact(GATE_LOG), &csv)?;
        let mut mean_w = [0.0; 3];
        for s in &val {
            let w = model.weights_for_manager(&s.input)?;
            for (m, x) in mean_w.iter_mut().zip(w) {
                *m += x / val.len().max(1) as f64;
            }
        }
        let mut r = StageReport::default();
        r.add("train samples", train.len());
        r.add("val samples", val.len());
        r.add(
            "mean val weights (IC, PC, IP)",
            agents::format_weights(&mean_w),
        );
        Ok(r)
    }

    pub fn predict(&self) -> Result<StageReport> {
        let c = &self.config;
        if c.ablation.paths == PathMode::Selector && !c.ablation.no_graph {
            self.require(SELECTOR, Stage::TrainSelector)?;
        }
        let splits = self.splits()?;
        let verdicts = self.verdicts_by_target()?;
        let gate = match c.ablation.fusion {
            Fusion::Gate => Some(GateModel::load(&self.require(GATE, Stage::TrainGate)?)?),
            _ => None,
        };
        let graph = self.load_graph()?;
        let enc = self.encoder()?;
        let lm = self.language_model()?;
        let records: Vec<Result<PredictionRecord>> = splits
            .test
            .par_iter()
            .map(|id| {
                let all = verdicts.get(id).ok_or_else(|| Error::MissingArtifact {
                    path: format!("verdicts for {id}").into(),
                    stage: Stage::RunAgents.name(),
                })?;
                let target = graph
                    .compute_label(id)
                    .ok_or(Error::EmptyInput("unlabeled target"))?;
                let views = Self::specialist_views(all);
                let view_records = views
                    .iter()
                    .map(|v| ViewRecord {
                        agent: v.agent,
                        prediction: v.prediction,
                        status: v.status,
                    })
                    .collect();
                let mask: Vec<f64> = views
                    .iter()
                    .map(|v| f64::from(u8::from(v.available())))
                    .collect();
                let (verdict, weights, confidence, source) = match c.ablation.fusion {
                    Fusion::Single => {
                        let v = all
                            .iter()
                            .find(|v| v.agent == Agent::Single)
                            .ok_or_else(|| Error::MissingArtifact {
                                path: format!("single-agent verdict for {id}").into(),
                                stage: Stage::RunAgents.name(),
                            })?;
                        (v.clone(), Vec::new(), None, ConfidenceSource::Verdict)
                    }
                    Fusion::Fixed | Fusion::Gate => {
                        let (raw, p) = match &gate {
                            Some(m) => {
                                let out = m.forward(&self.gate_input(&graph, &enc, id, &views)?)?;
                                (out.weights, Some(out.p))
                            }
                            None => (vec![1.0 / 3.0; 3], None),
                        };
                        let weights = masked(&raw, &mask);
                        let view = graph.target_view(&target);
                        let profile = company_profile(&view, id, false);
                        let v = run_manager(id, &views, &weights, &profile, &lm);
                        let source = if p.is_some() {
                            ConfidenceSource::Gate
                        } else {
                            ConfidenceSource::Verdict
                        };
                        (v, weights, p, source)
                    }
                };
                let confidence = confidence.unwrap_or(if verdict.prediction { 1.0 } else { 0.0 });
                Ok(PredictionRecord {
                    target_id: id.clone(),
                    t0: target.t0,
                    y_true: target.y,
                    y_pred: verdict.prediction,
                    confidence,
                    confidence_source: source,
                    weights,
                    views: view_records,
                    rationale: verdict.rationale,
                })
            })
            .collect();
        let records = records.into_iter().collect::<Result<Vec<_>>>()?;
        write_jsonl(&self.artifact(PREDICTIONS), &records)?;
        let m = metrics::classification_metrics(&records);
        let mut r = StageReport::default();
        r.add("test targets", records.len());
        r.add(
            "predicted positive",
            records.iter().filter(|x| x.y_pred).count(),
        );
        r.add("f1", format!("{:.4}", m.f1));
        Ok(r)
    }

    pub fn load_predictions(&self) -> Result<Vec<PredictionRecord>> {
        read_jsonl(&self.require(PREDICTIONS, Stage::Predict)?)
    }

    pub fn evaluate(&self) -> Result<StageReport> {
        let records = self.load_predictions()?;
        let mut baselines = Vec::new();
        for (name, path) in &self.config.baselines {
            baselines.push((name.clone(), metrics::read_metrics_csv(path)?));
        }
        metrics::write_report(self.out(), &records, &baselines)?;
        let mut r = StageReport::default();
        for (k, v) in metrics::summary(&records)? {
            r.add(&k, v.map_or("NA".to_string(), |x| format!("{x:.4}")));
        }
        Ok(r)
    }
}

/// Zeroes unavailable views and renormalizes; uniform if nothing is left.
fn masked(weights: &[f64], mask: &[f64]) -> Vec<f64> {
    let w: Vec<f64> = weights.iter().zip(mask).map(|(w, m)| w * m).collect();
    let s: f64 = w.iter().sum();
    if s > 0.0 {
        w.iter().map(|x| x / s).collect()
    } else {
        vec![1.0 / weights.len() as f64; weights.len()]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::NaiveDate;

    fn target(id: &str, y: bool) -> Target {
        Target {
            company: id.into(),
            t0: NaiveDate::from_ymd_opt(2020, 1, 1).unwrap(),
            y,
        }
    }

    #[test]
    fn split_is_stratified_and_disjoint() {
        let targets: Vec<_> = (0..200)
            .map(|i| target(&format!("c{i:03}"), i % 5 == 0))
            .collect();
        let s = stratified_split(&targets, 0.7, 0.15, 1);
        assert_eq!(s.train.len() + s.val.len() + s.test.len(), 200);
        let pos = |ids: &[String]| {
            ids.iter()
                .filter(|id| id[1..].parse::<usize>().unwrap() % 5 == 0)
                .count()
        };
        assert_eq!(pos(&s.train), 28);
        assert_eq!(pos(&s.val), 6);
        assert_eq!(pos(&s.test), 6);
        for id in &s.test {
            assert!(!s.train.contains(id) && !s.val.contains(id));
        }
        assert_eq!(s, stratified_split(&targets, 0.7, 0.15, 1));
    }

    #[test]
    fn masking_renormalizes() {
        assert_eq!(
            masked(&[0.5, 0.3, 0.2], &[1.0, 0.0, 1.0]),
            vec![0.5 / 0.7, 0.0, 0.2 / 0.7]
        );
        assert_eq!(masked(&[0.5, 0.3, 0.2], &[0.0; 3]), vec![1.0 / 3.0; 3]);
    }
}
