//! Specialist and manager prompts, generation, and verdict parsing.

use std::collections::BTreeSet;
use std::fmt::Write;

use serde::{Deserialize, Serialize};

use crate::gain::PathState;
use crate::graph::{NodeId, NodeKind, Target, TemporalView};
use crate::lm::{estimate_tokens, LanguageModel};
use crate::retrieval::{render_investor_profile, render_peers, LeadInvestorProfile, PeerSet};
use crate::util::content_hash;
use crate::verbalize::{chain_line, company_profile, display_name, investor_profile};

pub const NO_PATH: &str = "no investment path retrieved";
pub const NO_PEERS: &str = "no comparable companies";
pub const NO_INVESTOR: &str = "no lead investor on record";
pub const VIEW_UNAVAILABLE: &str = "view unavailable";
pub const UNPARSEABLE: &str = "unparseable output";
pub const DEFAULT_PATH_TOKEN_BUDGET: usize = 6000;

const FORMAT_BLOCK: &str = "  • Output exactly in the format:

      Prediction: True/False
      Analysis: <your step-by-step reasoning>

  • If evidence is insufficient, reason cautiously but still decide.
";

const STRICT_SUFFIX: &str = "

Answer only in the format below, with nothing before it:
Prediction: True/False
Analysis: <your step-by-step reasoning>
";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Agent {
    Path,
    Peer,
    Investor,
    Manager,
    Single,
}

/// The three specialist views, in the order used for weights everywhere.
pub const VIEWS: [Agent; 3] = [Agent::Path, Agent::Peer, Agent::Investor];

impl Agent {
    pub fn code(self) -> &'static str {
        match self {
            Agent::Path => "IC",
            Agent::Peer => "PC",
            Agent::Investor => "IP",
            Agent::Manager => "MG",
            Agent::Single => "SG",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VerdictStatus {
    Ok,
    /// Two unparseable generations; the prediction is the False default.
    Unparsed,
    /// The gateway gave up.
    Failed,
    /// Switched off for this run.
    Disabled,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentVerdict {
    pub target_id: String,
    pub agent: Agent,
    pub prediction: bool,
    pub rationale: String,
    pub status: VerdictStatus,
    pub prompt_hash: String,
}

impl AgentVerdict {
    pub fn available(&self) -> bool {
        matches!(self.status, VerdictStatus::Ok | VerdictStatus::Unparsed)
    }

    pub fn unavailable(target_id: &str, agent: Agent, status: VerdictStatus) -> Self {
        Self {
            target_id: target_id.to_string(),
            agent,
            prediction: false,
            rationale: VIEW_UNAVAILABLE.to_string(),
            status,
            prompt_hash: String::new(),
        }
    }

    /// Text fed to the encoder for the gate.
    pub fn rationale_text(&self) -> &str {
        if self.available() {
            &self.rationale
        } else {
            VIEW_UNAVAILABLE
        }
    }
}

/// Finds `prediction <ws> : <ws> (true|false)` case-insensitively on the
/// first line that has it; the rationale is whatever follows the first
/// `Analysis:` (one leading space dropped), or the whole text without one.
pub fn parse_verdict(text: &str) -> Option<(bool, String)> {
    let prediction = text.lines().find_map(parse_prediction_line)?;
    let rationale = match text.find("Analysis:") {
        Some(i) => {
            let rest = &text[i + "Analysis:".len()..];
            rest.strip_prefix(' ').unwrap_or(rest).to_string()
        }
        None => text.to_string(),
    };
    let rationale = if rationale.trim().is_empty() {
        text.to_string()
    } else {
        rationale
    };
    Some((prediction, rationale))
}

fn parse_prediction_line(line: &str) -> Option<bool> {
    let lower = line.to_ascii_lowercase();
    let mut from = 0;
    while let Some(i) = lower[from..].find("prediction") {
        let rest = lower[from + i + "prediction".len()..].trim_start();
        if let Some(rest) = rest.strip_prefix(':') {
            let rest = rest.trim_start();
            if rest.starts_with("true") {
                return Some(true);
            }
            if rest.starts_with("false") {
                return Some(false);
            }
        }
        from += i + 1;
    }
    None
}

/// Rendered specialist prompts; `None` marks a view switched off.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptBundle {
    pub target_id: String,
    pub company_name: String,
    pub target_profile: String,
    pub path: Option<String>,
    pub peer: Option<String>,
    pub investor: Option<String>,
}

impl PromptBundle {
    pub fn prompt(&self, agent: Agent) -> Option<&str> {
        match agent {
            Agent::Path => self.path.as_deref(),
            Agent::Peer => self.peer.as_deref(),
            Agent::Investor => self.investor.as_deref(),
            _ => None,
        }
    }
}

/// Evidence for one target. A `None` field disables that view.
pub struct Evidence<'a> {
    pub paths: Option<&'a [PathState]>,
    pub peers: Option<&'a PeerSet>,
    pub investor: Option<Option<&'a LeadInvestorProfile>>,
    pub path_token_budget: usize,
}

/// Chains, then distinct company and investor profiles in order of first
/// appearance. Paths are added in order while the section stays within
/// `token_budget`.
pub fn render_path_evidence(
    view: &TemporalView<'_>,
    paths: &[PathState],
    token_budget: usize,
) -> (String, String, String) {
    let mut kept = 0;
    let mut rendered = (String::new(), String::new(), String::new());
    for n in 1..=paths.len() {
        let r = path_sections(view, &paths[..n]);
        if estimate_tokens(&r.0) + estimate_tokens(&r.1) + estimate_tokens(&r.2) > token_budget {
            break;
        }
        rendered = r;
        kept = n;
    }
    if kept == 0 {
        return (NO_PATH.to_string(), "none".to_string(), "none".to_string());
    }
    rendered
}

fn path_sections(view: &TemporalView<'_>, paths: &[PathState]) -> (String, String, String) {
    let mut chains = String::new();
    let mut seen: BTreeSet<&NodeId> = BTreeSet::new();
    let mut companies = String::new();
    let mut investors = String::new();
    for (i, p) in paths.iter().enumerate() {
        let _ = writeln!(chains, "Path {}: {}", i + 1, chain_line(view, &p.nodes));
        for n in p.nodes.iter().skip(1) {
            if !seen.insert(n) {
                continue;
            }
            let (buf, block) = match n.kind {
                NodeKind::Company => (&mut companies, company_profile(view, &n.id, true)),
                NodeKind::Investor => (&mut investors, investor_profile(view, &n.id)),
            };
            if !buf.is_empty() {
                buf.push('\n');
            }
            buf.push_str(&block);
        }
    }
    if companies.is_empty() {
        companies.push_str("none\n");
    }
    if investors.is_empty() {
        investors.push_str("none\n");
    }
    (chains, companies, investors)
}

fn path_prompt(name: &str, target_profile: &str, sections: &(String, String, String)) -> String {
    format!(
        "Role: You are a venture-capital analyst who reasons step by step over investment paths to judge whether a seed/angel-stage start-up will raise a Series-A round within the next 12 months.

You are given four blocks of information:

(1) Investment paths retrieved for {name}:
{}
(2) Company profiles on the paths (Outcome Success = raised Series A within 12 months of its seed/angel round, Failure = did not):
{}
(3) Investor profiles on the paths:
{}
(4) Target company profile:
{target_profile}
Task:
  • Analyse the evidence and predict whether {name} will raise a Series-A round within 12 months.
{FORMAT_BLOCK}",
        sections.0.trim_end(),
        sections.1.trim_end(),
        sections.2.trim_end(),
    )
}

fn peer_prompt(name: &str, target_profile: &str, peers: &str) -> String {
    format!(
        "Role: You are a venture-capital analyst who uses comparable companies to judge whether a seed/angel-stage target will raise a Series-A round within the next 12 months.

You are given:

(1) Target company profile:
{target_profile}
(2) Comparable companies (Outcome Success = raised Series A within 12 months of its seed/angel round, Failure = did not):
{}

Task:
  • Analyse the evidence and predict whether {name} will raise a Series-A round within 12 months.
{FORMAT_BLOCK}",
        peers.trim_end()
    )
}

fn investor_prompt(target_profile: &str, resume: &str) -> String {
    format!(
        "Role: You are a venture-capital analyst who evaluates the record of a start-up's lead seed/angel investor to judge whether the target will raise a Series-A round within the next 12 months.

You are given:

(1) Target company profile:
{target_profile}
(2) Lead-investor résumé (prior roles and portfolio companies, each marked success if it raised Series A within 12 months of its seed/angel round, failure otherwise):
{}

Task:
  • Relate the investor's past successes and failures to the target's sector, stage, and needs.
  • Predict whether the target will raise a Series-A round within 12 months.
{FORMAT_BLOCK}",
        resume.trim_end()
    )
}

fn peer_text(view: &TemporalView<'_>, peers: &PeerSet) -> String {
    if peers.peers.is_empty() {
        NO_PEERS.to_string()
    } else {
        render_peers(peers, view)
    }
}

fn investor_text(view: &TemporalView<'_>, profile: Option<&LeadInvestorProfile>) -> String {
    profile
        .map(|p| render_investor_profile(p, view))
        .unwrap_or_else(|| NO_INVESTOR.to_string())
}

/// Fills the specialist templates. Deterministic in its inputs.
pub fn render_prompts(
    target: &Target,
    view: &TemporalView<'_>,
    evidence: &Evidence<'_>,
) -> PromptBundle {
    let node = NodeId::company(&target.company);
    let name = display_name(view, &node);
    let target_profile = company_profile(view, &target.company, false);
    let path = evidence.paths.map(|paths| {
        let sections = render_path_evidence(view, paths, evidence.path_token_budget);
        path_prompt(&name, &target_profile, &sections)
    });
    let peer = evidence
        .peers
        .map(|p| peer_prompt(&name, &target_profile, &peer_text(view, p)));
    let investor = evidence
        .investor
        .map(|p| investor_prompt(&target_profile, &investor_text(view, p)));
    PromptBundle {
        target_id: target.company.clone(),
        company_name: name,
        target_profile,
        path,
        peer,
        investor,
    }
}

/// One prompt carrying every enabled view, for the single-agent variant.
pub fn render_single_prompt(
    target: &Target,
    view: &TemporalView<'_>,
    evidence: &Evidence<'_>,
) -> String {
    let node = NodeId::company(&target.company);
    let name = display_name(view, &node);
    let target_profile = company_profile(view, &target.company, false);
    let mut blocks = String::new();
    let mut k = 1;
    let _ = writeln!(blocks, "({k}) Target company profile:\n{target_profile}");
    if let Some(paths) = evidence.paths {
        let s = render_path_evidence(view, paths, evidence.path_token_budget);
        k += 1;
        let _ = writeln!(
            blocks,
            "({k}) Investment paths retrieved for {name}:\n{}\nCompany profiles on the paths:\n{}\nInvestor profiles on the paths:\n{}",
            s.0.trim_end(),
            s.1.trim_end(),
            s.2.trim_end()
        );
    }
    if let Some(p) = evidence.peers {
        k += 1;
        let _ = writeln!(
            blocks,
            "({k}) Comparable companies:\n{}",
            peer_text(view, p).trim_end()
        );
    }
    if let Some(p) = evidence.investor {
        k += 1;
        let _ = writeln!(
            blocks,
            "({k}) Lead-investor résumé:\n{}",
            investor_text(view, p).trim_end()
        );
    }
    format!(
        "Role: You are a venture-capital analyst who judges whether a seed/angel-stage start-up will raise a Series-A round within the next 12 months.

You are given (Outcome Success = raised Series A within 12 months of its seed/angel round, Failure = did not):

{blocks}
Task:
  • Analyse the evidence and predict whether {name} will raise a Series-A round within 12 months.
{FORMAT_BLOCK}"
    )
}

/// Generates, parses, and retries once with a stricter suffix.
pub fn run_agent<L: LanguageModel + ?Sized>(
    target_id: &str,
    agent: Agent,
    prompt: &str,
    lm: &L,
) -> AgentVerdict {
    let prompt_hash = content_hash(prompt);
    let verdict = |prediction, rationale: String, status| AgentVerdict {
        target_id: target_id.to_string(),
        agent,
        prediction,
        rationale,
        status,
        prompt_hash: prompt_hash.clone(),
    };
    let strict = format!("{prompt}{STRICT_SUFFIX}");
    for p in [prompt, strict.as_str()] {
        match lm.generate(p) {
            Ok(g) => {
                if let Some((b, r)) = parse_verdict(&g.text) {
                    return verdict(b, r, VerdictStatus::Ok);
                }
            }
            Err(e) => {
                log::warn!("{target_id}/{}: generation failed: {e}", agent.code());
                return verdict(false, VIEW_UNAVAILABLE.to_string(), VerdictStatus::Failed);
            }
        }
    }
    log::warn!("{target_id}/{}: {UNPARSEABLE}", agent.code());
    verdict(false, UNPARSEABLE.to_string(), VerdictStatus::Unparsed)
}

/// One verdict per view, in [`VIEWS`] order.
pub fn run_specialists<L: LanguageModel + ?Sized>(
    bundle: &PromptBundle,
    lm: &L,
) -> Vec<AgentVerdict> {
    VIEWS
        .iter()
        .map(|&agent| match bundle.prompt(agent) {
            Some(p) => run_agent(&bundle.target_id, agent, p, lm),
            None => AgentVerdict::unavailable(&bundle.target_id, agent, VerdictStatus::Disabled),
        })
        .collect()
}

pub fn format_weights(w: &[f64]) -> String {
    let parts: Vec<String> = w.iter().map(|x| format!("{x:.3}")).collect();
    format!("({})", parts.join(", "))
}

fn one_line(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

pub fn manager_prompt(verdicts: &[AgentVerdict], weights: &[f64], target_profile: &str) -> String {
    let titles = [
        "Path-analyst verdict",
        "Comparable-company analyst verdict",
        "Lead-investor analyst verdict",
    ];
    let mut blocks = String::new();
    for (i, title) in titles.iter().enumerate() {
        let (pred, analysis) = match verdicts.get(i) {
            Some(v) if v.available() => (
                if v.prediction { "True" } else { "False" }.to_string(),
                one_line(&v.rationale),
            ),
            _ => ("unavailable".to_string(), VIEW_UNAVAILABLE.to_string()),
        };
        let _ = write!(
            blocks,
            "({}) {title}\n    • Prediction: {pred}\n    • Analysis  : {analysis}\n\n",
            i + 1
        );
    }
    format!(
        "Role: You are a venture-capital analyst who synthesizes other experts' verdicts into a final call on whether a seed/angel-stage start-up will raise a Series-A round within the next 12 months.

You are given:

{blocks}(4) Aggregate-weight advice
    Relative importance of the three perspectives is {}

(5) Target company profile
{target_profile}
Task:
  • Produce one final prediction on whether the target will raise a Series-A round within 12 months.
{FORMAT_BLOCK}",
        format_weights(weights)
    )
}

pub fn run_manager<L: LanguageModel + ?Sized>(
    target_id: &str,
    verdicts: &[AgentVerdict],
    weights: &[f64],
    target_profile: &str,
    lm: &L,
) -> AgentVerdict {
    let prompt = manager_prompt(verdicts, weights, target_profile);
    run_agent(target_id, Agent::Manager, &prompt, lm)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lm::{MockConfig, MockLm, ScriptedLm};
    use proptest::prelude::*;

    #[test]
    fn parses_canonical_and_loose_forms() {
        assert_eq!(
            parse_verdict("Prediction: True\nAnalysis: strong syndicate"),
            Some((true, "strong syndicate".to_string()))
        );
        let (b, r) = parse_verdict("prediction : FALSE ; Analysis: weak").unwrap();
        assert!(!b);
        assert_eq!(r, "weak");
        assert_eq!(parse_verdict("I think it will do well."), None);
        let (b, r) = parse_verdict("Some preamble\nPREDICTION:true").unwrap();
        assert!(b);
        assert_eq!(r, "Some preamble\nPREDICTION:true");
    }

    #[test]
    fn first_prediction_line_wins() {
        let (b, _) = parse_verdict("Prediction: False\nPrediction: True\nAnalysis: x").unwrap();
        assert!(!b);
    }

    #[test]
    fn retry_then_default() {
        let lm = ScriptedLm::new(["no verdict here", "still none"]);
        let v = run_agent("t", Agent::Peer, "prompt", &lm);
        assert_eq!(v.status, VerdictStatus::Unparsed);
        assert!(!v.prediction);
        assert_eq!(v.rationale, UNPARSEABLE);

        let lm = ScriptedLm::new(["rambling", "Prediction: True\nAnalysis: ok"]);
        let v = run_agent("t", Agent::Peer, "prompt", &lm);
        assert_eq!(v.status, VerdictStatus::Ok);
        assert!(v.prediction);
    }

    #[test]
    fn gateway_failure_marks_verdict() {
        let lm = ScriptedLm::new(Vec::<String>::new());
        lm.push_error("down");
        let v = run_agent("t", Agent::Path, "prompt", &lm);
        assert_eq!(v.status, VerdictStatus::Failed);
        assert!(!v.available());
    }

    #[test]
    fn weights_formatted_to_three_decimals() {
        assert_eq!(format_weights(&[0.5, 0.3, 0.2]), "(0.500, 0.300, 0.200)");
        let v: Vec<_> = VIEWS
            .iter()
            .map(|&a| AgentVerdict::unavailable("t", a, VerdictStatus::Failed))
            .collect();
        let p = manager_prompt(&v, &[0.5, 0.3, 0.2], "profile");
        assert!(p.contains("0.500, 0.300, 0.200"));
        assert_eq!(p.matches(VIEW_UNAVAILABLE).count(), 3);
        let m = run_manager("t", &v, &[0.5, 0.3, 0.2], "profile", &MockLm::default());
        assert_eq!(m.status, VerdictStatus::Ok);
        assert!(!m.prediction);
    }

    #[test]
    fn mock_manager_follows_majority() {
        let mk = |a, b| AgentVerdict {
            target_id: "t".into(),
            agent: a,
            prediction: b,
            rationale: "because".into(),
            status: VerdictStatus::Ok,
            prompt_hash: String::new(),
        };
        let lm = MockLm::new(MockConfig::default());
        let third = 1.0 / 3.0;
        for preds in [
            [true, true, false],
            [false, true, false],
            [true, true, true],
        ] {
            let v: Vec<_> = VIEWS.iter().zip(preds).map(|(&a, b)| mk(a, b)).collect();
            let m = run_manager("t", &v, &[third; 3], "profile", &lm);
            let majority = preds.iter().filter(|&&b| b).count() >= 2;
            assert_eq!(m.prediction, majority, "{preds:?}");
        }
    }

    proptest! {
        #[test]
        fn parser_round_trip(b in any::<bool>(), s in "[a-zA-Z0-9][a-zA-Z0-9 ,.;()-]{0,60}") {
            let text = format!("Prediction: {}\nAnalysis: {s}", if b { "True" } else { "False" });
            prop_assert_eq!(parse_verdict(&text), Some((b, s)));
        }
    }
}
