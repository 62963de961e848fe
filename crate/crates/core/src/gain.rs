//! Breadth-first expansion trees around targets and oracle information-gain
//! labels for every candidate expansion.

use std::collections::{BTreeSet, HashMap, VecDeque};
use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{InvestmentEdge, InvestmentGraph, NodeId, Target, TemporalView};
use crate::lm::{binary_probability, LanguageModel};
use crate::util::content_hash;
use crate::verbalize::{display_name, scoring_prompt, verbalize_path};

/// Probabilities are clamped to `[EPS, 1 - EPS]` before cross-entropy.
pub const PROB_EPS: f64 = 1e-6;
pub const DEFAULT_LAMBDA_CONF: f64 = 0.2;
/// Neighbors kept per expanded node.
pub const TREE_BRANCHING: usize = 3;
/// Hops labeled per tree (h = 0, 1, 2).
pub const TREE_DEPTH: usize = 3;

/// A path `<c*, ..., u>` of distinct, alternating company/investor nodes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathState {
    pub target: String,
    pub nodes: Vec<NodeId>,
    pub edges: Vec<InvestmentEdge>,
}

impl PathState {
    pub fn root(target: &str) -> Self {
        Self {
            target: target.to_string(),
            nodes: vec![NodeId::company(target)],
            edges: Vec::new(),
        }
    }

    pub fn hop(&self) -> usize {
        self.nodes.len() - 1
    }

    pub fn last(&self) -> &NodeId {
        self.nodes.last().expect("path is never empty")
    }

    pub fn contains(&self, node: &NodeId) -> bool {
        self.nodes.contains(node)
    }

    pub fn extend(&self, node: NodeId, edge: InvestmentEdge) -> Self {
        debug_assert!(!self.contains(&node));
        debug_assert_ne!(node.kind, self.last().kind);
        let mut next = self.clone();
        next.nodes.push(node);
        next.edges.push(edge);
        next
    }

    pub fn node_ids(&self) -> Vec<String> {
        self.nodes.iter().map(|n| n.id.clone()).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub node: NodeId,
    pub path: PathState,
    pub gain: Option<f64>,
}

/// Candidate expansions of one path at one hop.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankingGroup {
    pub target: Target,
    pub base: PathState,
    pub candidates: Vec<Candidate>,
}

impl RankingGroup {
    pub fn hop(&self) -> usize {
        self.base.hop()
    }

    /// Gains in candidate order; `None` if any candidate is unlabeled.
    pub fn gains(&self) -> Option<Vec<f64>> {
        self.candidates.iter().map(|c| c.gain).collect()
    }
}

/// One scored (baseline, candidate) pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GainTuple {
    pub target_id: String,
    pub hop: usize,
    pub base_path: Vec<String>,
    pub candidate_id: String,
    pub p_base: f64,
    pub p_v: f64,
    pub y: bool,
    pub lambda_conf: f64,
    pub delta: f64,
    pub base_prompt_hash: String,
    pub candidate_prompt_hash: String,
}

/// BFS tree of depth at most [`TREE_DEPTH`], keeping up to
/// [`TREE_BRANCHING`] unseen neighbors per node. Nodes already placed
/// anywhere in the tree are not offered again.
pub fn build_expansion_tree(target: &Target, view: &TemporalView<'_>) -> Vec<RankingGroup> {
    let root = PathState::root(&target.company);
    let mut visited: BTreeSet<NodeId> = BTreeSet::new();
    visited.insert(root.last().clone());
    let mut queue = VecDeque::from([root]);
    let mut groups = Vec::new();
    while let Some(base) = queue.pop_front() {
        if base.hop() >= TREE_DEPTH {
            continue;
        }
        let fresh: Vec<_> = view
            .neighbors(base.last())
            .into_iter()
            .filter(|(n, _)| !visited.contains(n))
            .take(TREE_BRANCHING)
            .collect();
        if fresh.is_empty() {
            continue;
        }
        let mut candidates = Vec::with_capacity(fresh.len());
        for (node, edge) in fresh {
            visited.insert(node.clone());
            let path = base.extend(node.clone(), edge.clone());
            queue.push_back(path.clone());
            candidates.push(Candidate {
                node,
                path,
                gain: None,
            });
        }
        groups.push(RankingGroup {
            target: target.clone(),
            base,
            candidates,
        });
    }
    groups
}

/// Binary cross-entropy with clamping.
pub fn cross_entropy(y: bool, p: f64) -> f64 {
    let p = p.clamp(PROB_EPS, 1.0 - PROB_EPS);
    if y {
        -p.ln()
    } else {
        -(1.0 - p).ln()
    }
}

/// Cross-entropy reduction plus a confidence-shift bonus weighted by `lambda_conf`.
pub fn compute_gain(y: bool, p_base: f64, p_v: f64, lambda_conf: f64) -> f64 {
    let pb = p_base.clamp(PROB_EPS, 1.0 - PROB_EPS);
    let pv = p_v.clamp(PROB_EPS, 1.0 - PROB_EPS);
    (cross_entropy(y, pb) - cross_entropy(y, pv))
        + lambda_conf * ((pv - 0.5).abs() - (pb - 0.5).abs())
}

/// The prompt scored for a path.
pub fn path_prompt(path: &PathState, view: &TemporalView<'_>) -> String {
    let name = display_name(view, &path.nodes[0]);
    scoring_prompt(&verbalize_path(path, view), &name)
}

#[derive(Debug, Default, Clone, PartialEq)]
pub struct LabelStats {
    pub groups_in: usize,
    pub groups_labeled: usize,
    pub groups_dropped: usize,
    pub calls: usize,
    pub reused: usize,
}

/// Previously scored prompts, keyed by prompt hash.
pub type ScoreCache = HashMap<String, f64>;

pub fn score_cache_from_tuples(tuples: &[GainTuple]) -> ScoreCache {
    let mut cache = ScoreCache::new();
    for t in tuples {
        cache.insert(t.base_prompt_hash.clone(), t.p_base);
        cache.insert(t.candidate_prompt_hash.clone(), t.p_v);
    }
    cache
}

struct Labeled {
    group: RankingGroup,
    tuples: Vec<GainTuple>,
    calls: usize,
    reused: usize,
}

fn label_group<L: LanguageModel + ?Sized>(
    mut group: RankingGroup,
    graph: &InvestmentGraph,
    lm: &L,
    lambda_conf: f64,
    cache: &ScoreCache,
) -> Result<Labeled> {
    let view = graph.target_view(&group.target);
    let mut calls = 0;
    let mut reused = 0;
    let mut score = |prompt: &str| -> Result<(f64, String)> {
        let h = content_hash(prompt);
        if let Some(&p) = cache.get(&h) {
            reused += 1;
            return Ok((p, h));
        }
        calls += 1;
        let p = binary_probability(&lm.score_labels(prompt)?)?;
        Ok((p, h))
    };
    let (p_base, base_hash) = score(&path_prompt(&group.base, &view))?;
    let y = group.target.y;
    let mut tuples = Vec::with_capacity(group.candidates.len());
    for c in &mut group.candidates {
        let (p_v, cand_hash) = score(&path_prompt(&c.path, &view))?;
        let delta = compute_gain(y, p_base, p_v, lambda_conf);
        c.gain = Some(delta);
        tuples.push(GainTuple {
            target_id: group.target.company.clone(),
            hop: group.base.hop(),
            base_path: group.base.node_ids(),
            candidate_id: c.node.id.clone(),
            p_base,
            p_v,
            y,
            lambda_conf,
            delta,
            base_prompt_hash: base_hash.clone(),
            candidate_prompt_hash: cand_hash,
        });
    }
    Ok(Labeled {
        group,
        tuples,
        calls,
        reused,
    })
}

/// Scores baseline and candidate prompts and fills every gain. Groups whose
/// scoring fails (after the gateway's retries) are dropped and counted.
/// Output order follows input order regardless of parallelism.
pub fn label_groups<L: LanguageModel + ?Sized>(
    groups: Vec<RankingGroup>,
    graph: &InvestmentGraph,
    lm: &L,
    lambda_conf: f64,
    cache: &ScoreCache,
) -> (Vec<RankingGroup>, Vec<GainTuple>, LabelStats) {
    let mut stats = LabelStats {
        groups_in: groups.len(),
        ..Default::default()
    };
    let results: Vec<Result<Labeled>> = groups
        .into_par_iter()
        .map(|g| label_group(g, graph, lm, lambda_conf, cache))
        .collect();
    let mut labeled = Vec::new();
    let mut tuples = Vec::new();
    for r in results {
        match r {
            Ok(l) => {
                stats.calls += l.calls;
                stats.reused += l.reused;
                stats.groups_labeled += 1;
                labeled.push(l.group);
                tuples.extend(l.tuples);
            }
            Err(e) => {
                log::warn!("dropping group: {e}");
                stats.groups_dropped += 1;
            }
        }
    }
    (labeled, tuples, stats)
}

/// Appends tuples to a JSONL log through one writer.
pub fn append_gain_tuples(path: &Path, tuples: &[GainTuple]) -> Result<()> {
    let mut f = std::fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(|e| Error::io(path, e))?;
    let mut buf = String::new();
    for t in tuples {
        buf.push_str(&serde_json::to_string(t)?);
        buf.push('\n');
    }
    f.write_all(buf.as_bytes()).map_err(|e| Error::io(path, e))
}

pub fn read_gain_tuples(path: &Path) -> Result<Vec<GainTuple>> {
    if !path.exists() {
        return Ok(Vec::new());
    }
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).map_err(Error::from))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{CompanyAttributes, CompanyRecord, Demographics, InvestorRecord, Round};
    use crate::lm::{MockConfig, MockLm, MockRule};
    use proptest::prelude::*;

    fn d(s: &str) -> chrono::NaiveDate {
        s.parse().unwrap()
    }

    fn company(id: &str, desc: &str) -> CompanyRecord {
        CompanyRecord {
            id: id.into(),
            name: format!("Co{id}"),
            founded: d("2015-01-01"),
            description: desc.into(),
            attributes: CompanyAttributes::default(),
            first_round: None,
        }
    }

    fn investor(id: &str, role: &str) -> InvestorRecord {
        InvestorRecord {
            id: id.into(),
            name: format!("Inv{id}"),
            demographics: Demographics::default(),
            employment: vec![crate::graph::EmploymentEntry {
                role: role.into(),
                date: d("2010-01-01"),
            }],
        }
    }

    fn edge(inv: &str, c: &str, date: &str, round: Round) -> InvestmentEdge {
        InvestmentEdge {
            investor: inv.into(),
            company: c.into(),
            date: d(date),
            round,
            amount: None,
        }
    }

    /// target t; investor x backs t (t0) and companies a, b earlier.
    fn small_graph() -> InvestmentGraph {
        let companies = vec![
            company("t", "target"),
            company("a", "peer a"),
            company("b", "peer b"),
        ];
        let investors = vec![investor("x", "Partner")];
        let edges = vec![
            edge("x", "t", "2021-01-01", Round::Seed),
            edge("x", "a", "2018-01-01", Round::Seed),
            edge("x", "b", "2018-02-01", Round::Seed),
        ];
        InvestmentGraph::from_records(companies, investors, edges)
            .unwrap()
            .0
    }

    #[test]
    fn tree_structure_for_small_graph() {
        let g = small_graph();
        let t = g.compute_label("t").unwrap();
        let groups = build_expansion_tree(&t, &g.target_view(&t));
        assert_eq!(groups.len(), 2);
        assert_eq!(groups[0].hop(), 0);
        assert_eq!(groups[0].candidates.len(), 1);
        assert_eq!(groups[0].candidates[0].node, NodeId::investor("x"));
        assert_eq!(groups[1].hop(), 1);
        let ids: Vec<_> = groups[1]
            .candidates
            .iter()
            .map(|c| c.node.id.as_str())
            .collect();
        assert_eq!(ids, ["b", "a"]);
    }

    #[test]
    fn first_hop_truncated_to_three() {
        let companies = vec![company("t", "target")];
        let investors: Vec<_> = (0..5).map(|i| investor(&format!("i{i}"), "VC")).collect();
        let edges = (0..5)
            .map(|i| edge(&format!("i{i}"), "t", "2021-01-01", Round::Seed))
            .collect();
        let (g, _) = InvestmentGraph::from_records(companies, investors, edges).unwrap();
        let t = g.compute_label("t").unwrap();
        let groups = build_expansion_tree(&t, &g.target_view(&t));
        assert_eq!(groups.len(), 1);
        let ids: Vec<_> = groups[0]
            .candidates
            .iter()
            .map(|c| c.node.id.as_str())
            .collect();
        assert_eq!(ids, ["i0", "i1", "i2"]);
    }

    #[test]
    fn isolated_target_has_no_groups() {
        let (g, _) = InvestmentGraph::from_records(
            vec![company("t", "x"), company("u", "y")],
            vec![investor("x", "VC")],
            vec![edge("x", "u", "2020-01-01", Round::Seed)],
        )
        .unwrap();
        let t = Target {
            company: "t".into(),
            t0: d("2021-01-01"),
            y: false,
        };
        assert!(build_expansion_tree(&t, &g.target_view(&t)).is_empty());
    }

    #[test]
    fn tree_never_repeats_nodes() {
        let g = small_graph();
        let t = g.compute_label("t").unwrap();
        let groups = build_expansion_tree(&t, &g.target_view(&t));
        let mut seen = BTreeSet::new();
        for grp in &groups {
            for c in &grp.candidates {
                assert!(seen.insert(c.node.clone()));
                assert_eq!(c.path.nodes.len(), grp.base.nodes.len() + 1);
            }
        }
    }

    #[test]
    fn gain_examples() {
        assert_eq!(compute_gain(true, 0.7, 0.7, 0.2), 0.0);
        assert!((compute_gain(true, 0.5, 0.8, 0.2) - 0.53001).abs() < 1e-4);
        assert!((compute_gain(false, 0.4, 0.6, 0.2) - (-0.40546)).abs() < 1e-4);
        // Clamped at the boundaries.
        assert!(compute_gain(true, 0.0, 1.0, 0.2).is_finite());
    }

    #[test]
    fn verbalized_path_shapes() {
        let g = small_graph();
        let t = g.compute_label("t").unwrap();
        let view = g.target_view(&t);
        let root = PathState::root("t");
        let one = verbalize_path(&root, &view);
        assert!(!one.contains("Investment path"));
        assert_eq!(one.matches("### Company Profile ###").count(), 1);
        let groups = build_expansion_tree(&t, &view);
        let three = &groups[1].candidates[0].path;
        let text = verbalize_path(three, &view);
        let chain = text.lines().next().unwrap();
        assert_eq!(chain.matches('←').count() + chain.matches('→').count(), 2);
        assert_eq!(text, verbalize_path(three, &view));
        // Later edges never appear; the target's own block has no outcome.
        assert!(!one.contains("Outcome:"));
    }

    #[test]
    fn label_groups_fills_gains_from_mock() {
        let g = small_graph();
        let t = g.compute_label("t").unwrap();
        let groups = build_expansion_tree(&t, &g.target_view(&t));
        let lm = MockLm::new(MockConfig {
            rules: vec![MockRule::new("Cob", -1.0)],
            ..MockConfig::default()
        });
        let (labeled, tuples, stats) = label_groups(groups, &g, &lm, 0.2, &ScoreCache::new());
        assert_eq!(stats.groups_labeled, 2);
        assert_eq!(tuples.len(), 3);
        for tup in &tuples {
            let again = compute_gain(tup.y, tup.p_base, tup.p_v, tup.lambda_conf);
            assert!((again - tup.delta).abs() < 1e-9);
        }
        assert!(labeled.iter().all(|g| g.gains().is_some()));
        // Resuming with the tuple log issues no new calls.
        let cache = score_cache_from_tuples(&tuples);
        let groups = build_expansion_tree(&t, &g.target_view(&t));
        let (_, again, stats) = label_groups(groups, &g, &lm, 0.2, &cache);
        assert_eq!(stats.calls, 0);
        assert_eq!(again, tuples);
    }

    #[test]
    fn gains_for_spec_probability_triple() {
        let d: Vec<f64> = [0.8, 0.5, 0.3]
            .iter()
            .map(|&pv| compute_gain(true, 0.5, pv, 0.2))
            .collect();
        assert!((d[0] - 0.53001).abs() < 1e-4);
        assert_eq!(d[1], 0.0);
        // -ln(0.3) - ln 2 ... : (0.69315 - 1.20397) + 0.2 * 0.2
        assert!((d[2] - (-0.47083)).abs() < 1e-4);
    }

    proptest! {
        #[test]
        fn gain_sign_property(a in 0.5f64..1.0, b in 0.5f64..1.0, lambda in 0.0f64..1.0) {
            prop_assume!((a - b).abs() > 1e-9);
            let (lo, hi) = if a < b { (a, b) } else { (b, a) };
            prop_assert!(compute_gain(true, lo, hi, lambda) > 0.0);
            // Mirrored for failures.
            prop_assert!(compute_gain(false, 1.0 - lo, 1.0 - hi, lambda) > 0.0);
        }

        #[test]
        fn gain_antisymmetric(y: bool, a in 0.0f64..1.0, b in 0.0f64..1.0, lambda in 0.0f64..1.0) {
            let fwd = compute_gain(y, a, b, lambda);
            let back = compute_gain(y, b, a, lambda);
            prop_assert!((fwd + back).abs() < 1e-9);
        }
    }
}
