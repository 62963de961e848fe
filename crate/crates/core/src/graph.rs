//! Time-stamped investor/company network.
//!
//! The graph is immutable after loading. Every read that feeds a prediction
//! goes through a [`TemporalView`], which hides edges and history dated at or
//! after the view's cutoff.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::io::{BufRead, BufReader};
use std::path::Path;

use chrono::{Months, NaiveDate};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const COMPANIES_FILE: &str = "companies.jsonl";
pub const INVESTORS_FILE: &str = "investors.jsonl";
pub const INVESTMENTS_FILE: &str = "investments.jsonl";

/// Length of the success window after the first seed/angel round.
pub const OUTCOME_WINDOW_MONTHS: u32 = 12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NodeKind {
    Company,
    Investor,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct NodeId {
    pub kind: NodeKind,
    pub id: String,
}

impl NodeId {
    pub fn company(id: impl Into<String>) -> Self {
        Self {
            kind: NodeKind::Company,
            id: id.into(),
        }
    }

    pub fn investor(id: impl Into<String>) -> Self {
        Self {
            kind: NodeKind::Investor,
            id: id.into(),
        }
    }

    pub fn is_company(&self) -> bool {
        self.kind == NodeKind::Company
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.kind {
            NodeKind::Company => write!(f, "company:{}", self.id),
            NodeKind::Investor => write!(f, "investor:{}", self.id),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Round {
    Angel,
    Seed,
    #[serde(alias = "seriesa", alias = "series a")]
    SeriesA,
    Later,
}

impl Round {
    /// Seed and angel rounds open the prediction window.
    pub fn is_first_round(self) -> bool {
        matches!(self, Round::Angel | Round::Seed)
    }

    pub fn label(self) -> &'static str {
        match self {
            Round::Angel => "Angel round",
            Round::Seed => "Seed round",
            Round::SeriesA => "Series A",
            Round::Later => "Later-stage round",
        }
    }
}

/// One investment event, always directed investor -> company.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InvestmentEdge {
    pub investor: String,
    pub company: String,
    pub date: NaiveDate,
    pub round: Round,
    /// Committed amount in currency units; `None` when undisclosed.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub amount: Option<f64>,
}

impl InvestmentEdge {
    pub fn investor_node(&self) -> NodeId {
        NodeId::investor(self.investor.clone())
    }

    pub fn company_node(&self) -> NodeId {
        NodeId::company(self.company.clone())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CompanyAttributes {
    #[serde(default)]
    pub industry: String,
    #[serde(default)]
    pub region: String,
    #[serde(default)]
    pub stage: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompanyRecord {
    pub id: String,
    pub name: String,
    pub founded: NaiveDate,
    #[serde(default)]
    pub description: String,
    #[serde(default)]
    pub attributes: CompanyAttributes,
    /// Earliest seed/angel round; derived from the edges at load time.
    #[serde(default, skip_serializing)]
    pub first_round: Option<NaiveDate>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Demographics {
    #[serde(default)]
    pub education: String,
    #[serde(default)]
    pub age_bracket: String,
    #[serde(default)]
    pub gender: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EmploymentEntry {
    pub role: String,
    pub date: NaiveDate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InvestorRecord {
    pub id: String,
    pub name: String,
    #[serde(default)]
    pub demographics: Demographics,
    #[serde(default)]
    pub employment: Vec<EmploymentEntry>,
}

/// A labeled prediction target with its company id attached.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Target {
    pub company: String,
    pub t0: NaiveDate,
    pub y: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct LoadReport {
    pub companies: usize,
    pub investors: usize,
    pub edges: usize,
    pub warnings: Vec<String>,
}

/// Calendar-month arithmetic; the day of month clamps to the month's end.
pub fn add_months(date: NaiveDate, months: u32) -> NaiveDate {
    date.checked_add_months(Months::new(months))
        .expect("date overflow")
}

/// Last day of the success window opened at `t0`.
pub fn outcome_window_end(t0: NaiveDate) -> NaiveDate {
    add_months(t0, OUTCOME_WINDOW_MONTHS)
}

#[derive(Debug, Clone, Default)]
pub struct InvestmentGraph {
    companies: Vec<CompanyRecord>,
    investors: Vec<InvestorRecord>,
    company_index: HashMap<String, usize>,
    investor_index: HashMap<String, usize>,
    edges: Vec<InvestmentEdge>,
    // Edge indices per node, ordered by date descending then counterpart id.
    company_edges: Vec<Vec<usize>>,
    investor_edges: Vec<Vec<usize>>,
}

impl InvestmentGraph {
    /// Builds a graph from in-memory records, checking referential integrity.
    pub fn from_records(
        companies: Vec<CompanyRecord>,
        investors: Vec<InvestorRecord>,
        edges: Vec<InvestmentEdge>,
    ) -> Result<(Self, LoadReport)> {
        let mut company_index = HashMap::with_capacity(companies.len());
        for (i, c) in companies.iter().enumerate() {
            if company_index.insert(c.id.clone(), i).is_some() {
                return Err(Error::DuplicateNode {
                    kind: "company",
                    id: c.id.clone(),
                });
            }
        }
        let mut investor_index = HashMap::with_capacity(investors.len());
        for (i, v) in investors.iter().enumerate() {
            if investor_index.insert(v.id.clone(), i).is_some() {
                return Err(Error::DuplicateNode {
                    kind: "investor",
                    id: v.id.clone(),
                });
            }
        }
        for e in &edges {
            if !company_index.contains_key(&e.company) {
                return Err(Error::DanglingEndpoint {
                    kind: "company",
                    id: e.company.clone(),
                });
            }
            if !investor_index.contains_key(&e.investor) {
                return Err(Error::DanglingEndpoint {
                    kind: "investor",
                    id: e.investor.clone(),
                });
            }
        }

        let mut graph = InvestmentGraph {
            company_edges: vec![Vec::new(); companies.len()],
            investor_edges: vec![Vec::new(); investors.len()],
            companies,
            investors,
            company_index,
            investor_index,
            edges,
        };
        let mut warnings = Vec::new();
        for (ei, e) in graph.edges.iter().enumerate() {
            if let Some(a) = e.amount {
                if !(a.is_finite() && a >= 0.0) {
                    warnings.push(format!("edge {ei}: invalid amount {a}, treated as unknown"));
                }
            }
            graph.company_edges[graph.company_index[&e.company]].push(ei);
            graph.investor_edges[graph.investor_index[&e.investor]].push(ei);
        }
        for e in &mut graph.edges {
            if matches!(e.amount, Some(a) if !(a.is_finite() && a >= 0.0)) {
                e.amount = None;
            }
        }
        let edges = &graph.edges;
        for list in &mut graph.company_edges {
            list.sort_by(|&a, &b| {
                edges[b]
                    .date
                    .cmp(&edges[a].date)
                    .then_with(|| edges[a].investor.cmp(&edges[b].investor))
                    .then(a.cmp(&b))
            });
        }
        for list in &mut graph.investor_edges {
            list.sort_by(|&a, &b| {
                edges[b]
                    .date
                    .cmp(&edges[a].date)
                    .then_with(|| edges[a].company.cmp(&edges[b].company))
                    .then(a.cmp(&b))
            });
        }

        for ci in 0..graph.companies.len() {
            let first = graph.company_edges[ci]
                .iter()
                .map(|&ei| &graph.edges[ei])
                .filter(|e| e.round.is_first_round())
                .map(|e| e.date)
                .min();
            let c = &mut graph.companies[ci];
            c.first_round = first;
            if let Some(t0) = first {
                if c.founded > t0 {
                    warnings.push(format!(
                        "company {}: founded {} after first round {}",
                        c.id, c.founded, t0
                    ));
                }
            }
        }
        for v in &graph.investors {
            if v.employment.windows(2).any(|w| w[0].date > w[1].date) {
                // Order is not required, only noted.
                log::debug!("investor {}: employment history not chronological", v.id);
            }
        }

        let report = LoadReport {
            companies: graph.companies.len(),
            investors: graph.investors.len(),
            edges: graph.edges.len(),
            warnings,
        };
        Ok((graph, report))
    }

    /// Parses the three JSONL streams. Unknown fields are ignored.
    pub fn from_jsonl<C: BufRead, I: BufRead, E: BufRead>(
        companies: C,
        investors: I,
        investments: E,
    ) -> Result<(Self, LoadReport)> {
        let companies = read_jsonl(companies, COMPANIES_FILE)?;
        let investors = read_jsonl(investors, INVESTORS_FILE)?;
        let edges = read_jsonl(investments, INVESTMENTS_FILE)?;
        Self::from_records(companies, investors, edges)
    }

    /// Loads `companies.jsonl`, `investors.jsonl` and `investments.jsonl` from a directory.
    pub fn load_dir(dir: &Path) -> Result<(Self, LoadReport)> {
        let open = |name: &str| {
            let path = dir.join(name);
            std::fs::File::open(&path)
                .map(BufReader::new)
                .map_err(|e| Error::io(path, e))
        };
        Self::from_jsonl(
            open(COMPANIES_FILE)?,
            open(INVESTORS_FILE)?,
            open(INVESTMENTS_FILE)?,
        )
    }

    pub fn node_count(&self) -> usize {
        self.companies.len() + self.investors.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn companies(&self) -> &[CompanyRecord] {
        &self.companies
    }

    pub fn investors(&self) -> &[InvestorRecord] {
        &self.investors
    }

    pub fn edges(&self) -> &[InvestmentEdge] {
        &self.edges
    }

    pub fn company(&self, id: &str) -> Option<&CompanyRecord> {
        self.company_index.get(id).map(|&i| &self.companies[i])
    }

    pub fn investor(&self, id: &str) -> Option<&InvestorRecord> {
        self.investor_index.get(id).map(|&i| &self.investors[i])
    }

    pub fn contains(&self, node: &NodeId) -> bool {
        match node.kind {
            NodeKind::Company => self.company_index.contains_key(&node.id),
            NodeKind::Investor => self.investor_index.contains_key(&node.id),
        }
    }

    /// Edges incident to a node, most recent first.
    pub fn incident_edges(&self, node: &NodeId) -> impl Iterator<Item = &InvestmentEdge> + '_ {
        let list: &[usize] = match node.kind {
            NodeKind::Company => self
                .company_index
                .get(&node.id)
                .map(|&i| self.company_edges[i].as_slice())
                .unwrap_or(&[]),
            NodeKind::Investor => self
                .investor_index
                .get(&node.id)
                .map(|&i| self.investor_edges[i].as_slice())
                .unwrap_or(&[]),
        };
        list.iter().map(move |&ei| &self.edges[ei])
    }

    /// Success label of a company: `None` without a seed/angel round.
    pub fn compute_label(&self, company: &str) -> Option<Target> {
        let c = self.company(company)?;
        let t0 = c.first_round?;
        let end = outcome_window_end(t0);
        let y = self
            .incident_edges(&NodeId::company(company))
            .any(|e| e.round == Round::SeriesA && e.date > t0 && e.date <= end);
        Some(Target {
            company: company.to_string(),
            t0,
            y,
        })
    }

    /// All labeled companies, in id order.
    pub fn targets(&self) -> Vec<Target> {
        let mut ids: Vec<&str> = self.companies.iter().map(|c| c.id.as_str()).collect();
        ids.sort_unstable();
        ids.into_iter()
            .filter_map(|id| self.compute_label(id))
            .collect()
    }

    /// Outcome of `company` if its success window closed strictly before `cutoff`.
    pub fn outcome_known_before(&self, company: &str, cutoff: NaiveDate) -> Option<bool> {
        let label = self.compute_label(company)?;
        (outcome_window_end(label.t0) < cutoff).then_some(label.y)
    }

    /// Strict view: only events dated before `cutoff`.
    pub fn view(&self, cutoff: NaiveDate) -> TemporalView<'_> {
        TemporalView {
            graph: self,
            cutoff,
            anchor: None,
        }
    }

    /// View for predicting `target`: strictly before its first round, plus
    /// the target's own first-round edges, which define the prediction moment.
    pub fn target_view(&self, target: &Target) -> TemporalView<'_> {
        TemporalView {
            graph: self,
            cutoff: target.t0,
            anchor: Some(target.company.clone()),
        }
    }
}

fn read_jsonl<T: serde::de::DeserializeOwned, R: BufRead>(reader: R, file: &str) -> Result<Vec<T>> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io(file, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec = serde_json::from_str(&line).map_err(|e| Error::MalformedLine {
            file: file.to_string(),
            line: i + 1,
            message: e.to_string(),
        })?;
        out.push(rec);
    }
    Ok(out)
}

/// Writes records as one JSON object per line.
pub fn write_jsonl<T: Serialize>(path: &Path, records: &[T]) -> Result<()> {
    let mut buf = String::new();
    for r in records {
        buf.push_str(&serde_json::to_string(r)?);
        buf.push('\n');
    }
    std::fs::write(path, buf).map_err(|e| Error::io(path, e))
}

/// Read-only window on the graph at a cutoff date.
#[derive(Debug, Clone)]
pub struct TemporalView<'g> {
    graph: &'g InvestmentGraph,
    cutoff: NaiveDate,
    anchor: Option<String>,
}

impl<'g> TemporalView<'g> {
    pub fn graph(&self) -> &'g InvestmentGraph {
        self.graph
    }

    pub fn cutoff(&self) -> NaiveDate {
        self.cutoff
    }

    pub fn anchor(&self) -> Option<&str> {
        self.anchor.as_deref()
    }

    pub fn edge_visible(&self, e: &InvestmentEdge) -> bool {
        if e.date < self.cutoff {
            return true;
        }
        match &self.anchor {
            Some(a) => e.date == self.cutoff && e.round.is_first_round() && &e.company == a,
            None => false,
        }
    }

    pub fn visible_edges(&self) -> impl Iterator<Item = &'g InvestmentEdge> + '_ {
        self.graph
            .edges
            .iter()
            .filter(move |e| self.edge_visible(e))
    }

    pub fn edge_count(&self) -> usize {
        self.visible_edges().count()
    }

    /// Company record, if founded before the cutoff (the anchor is always visible).
    pub fn company(&self, id: &str) -> Option<&'g CompanyRecord> {
        let c = self.graph.company(id)?;
        (c.founded < self.cutoff || self.anchor.as_deref() == Some(id)).then_some(c)
    }

    pub fn investor(&self, id: &str) -> Option<&'g InvestorRecord> {
        self.graph.investor(id)
    }

    /// Employment entries dated before the cutoff, most recent first.
    pub fn employment(&self, investor: &str) -> Vec<&'g EmploymentEntry> {
        let mut out: Vec<_> = self
            .graph
            .investor(investor)
            .map(|v| {
                v.employment
                    .iter()
                    .filter(|e| e.date < self.cutoff)
                    .collect()
            })
            .unwrap_or_default();
        out.sort_by(|a, b| b.date.cmp(&a.date).then_with(|| a.role.cmp(&b.role)));
        out
    }

    /// Visible edges incident to `node`, most recent first.
    pub fn incident_edges(&self, node: &NodeId) -> Vec<&'g InvestmentEdge> {
        self.graph
            .incident_edges(node)
            .filter(|e| self.edge_visible(e))
            .collect()
    }

    /// Distinct neighbors through visible edges, each with its most recent
    /// connecting edge; ordered by that edge's date descending, then id.
    pub fn neighbors(&self, node: &NodeId) -> Vec<(NodeId, &'g InvestmentEdge)> {
        let mut best: BTreeMap<&str, &'g InvestmentEdge> = BTreeMap::new();
        for e in self.incident_edges(node) {
            let other = match node.kind {
                NodeKind::Company => e.investor.as_str(),
                NodeKind::Investor => e.company.as_str(),
            };
            best.entry(other)
                .and_modify(|cur| {
                    if e.date > cur.date {
                        *cur = e;
                    }
                })
                .or_insert(e);
        }
        let mut out: Vec<(NodeId, &'g InvestmentEdge)> = best
            .into_iter()
            .map(|(id, e)| {
                let n = match node.kind {
                    NodeKind::Company => NodeId::investor(id),
                    NodeKind::Investor => NodeId::company(id),
                };
                (n, e)
            })
            .collect();
        out.sort_by(|a, b| b.1.date.cmp(&a.1.date).then_with(|| a.0.id.cmp(&b.0.id)));
        out
    }

    /// Outcome of a company whose success window closed before the cutoff.
    pub fn known_outcome(&self, company: &str) -> Option<bool> {
        self.graph.outcome_known_before(company, self.cutoff)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn d(s: &str) -> NaiveDate {
        s.parse().unwrap()
    }

    fn company(id: &str, founded: &str) -> CompanyRecord {
        CompanyRecord {
            id: id.into(),
            name: id.to_uppercase(),
            founded: d(founded),
            description: format!("{id} builds things"),
            attributes: CompanyAttributes::default(),
            first_round: None,
        }
    }

    fn investor(id: &str) -> InvestorRecord {
        InvestorRecord {
            id: id.into(),
            name: id.to_uppercase(),
            demographics: Demographics::default(),
            employment: vec![],
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

    fn graph(edges: Vec<InvestmentEdge>) -> InvestmentGraph {
        let companies = vec![company("a", "2019-01-01"), company("b", "2019-01-01")];
        let investors = vec![investor("x"), investor("y")];
        InvestmentGraph::from_records(companies, investors, edges)
            .unwrap()
            .0
    }

    #[test]
    fn counts_nodes_and_edges() {
        let g = graph(vec![
            edge("x", "a", "2020-01-01", Round::Seed),
            edge("x", "b", "2020-02-01", Round::Seed),
        ]);
        let companies = vec![company("a", "2019-01-01"), company("b", "2019-01-01")];
        let (g2, report) =
            InvestmentGraph::from_records(companies, vec![investor("x")], g.edges().to_vec())
                .unwrap();
        assert_eq!(g2.node_count(), 3);
        assert_eq!(g2.edge_count(), 2);
        assert!(report.warnings.is_empty());
    }

    #[test]
    fn dangling_endpoint_names_id() {
        let err = InvestmentGraph::from_records(
            vec![company("a", "2019-01-01")],
            vec![investor("x")],
            vec![edge("x", "ghost", "2020-01-01", Round::Seed)],
        )
        .unwrap_err();
        assert!(err.to_string().contains("ghost"), "{err}");
    }

    #[test]
    fn malformed_line_reports_line_number() {
        let companies = "{\"id\":\"a\",\"name\":\"A\",\"founded\":\"2019-01-01\"}\nnot json\n";
        let err = InvestmentGraph::from_jsonl(companies.as_bytes(), "".as_bytes(), "".as_bytes())
            .unwrap_err();
        assert!(err.to_string().contains(":2:"), "{err}");
    }

    #[test]
    fn empty_stream_is_empty_graph() {
        let (g, _) =
            InvestmentGraph::from_jsonl("".as_bytes(), "".as_bytes(), "".as_bytes()).unwrap();
        assert_eq!(g.node_count(), 0);
        assert!(g.targets().is_empty());
    }

    #[test]
    fn unknown_fields_are_ignored() {
        let companies = r#"{"id":"a","name":"A","founded":"2019-01-01","extra":42}"#;
        let investors = r#"{"id":"x","name":"X","hobby":"golf"}"#;
        let edges = r#"{"investor":"x","company":"a","date":"2020-01-01","round":"seed","amount":5.0,"note":"n"}"#;
        let (g, _) = InvestmentGraph::from_jsonl(
            companies.as_bytes(),
            investors.as_bytes(),
            edges.as_bytes(),
        )
        .unwrap();
        assert_eq!(g.edge_count(), 1);
        assert_eq!(g.edges()[0].amount, Some(5.0));
    }

    #[test]
    fn label_inside_window() {
        let g = graph(vec![
            edge("x", "a", "2020-01-01", Round::Seed),
            edge("y", "a", "2020-12-01", Round::SeriesA),
        ]);
        let t = g.compute_label("a").unwrap();
        assert_eq!(t.t0, d("2020-01-01"));
        assert!(t.y);
    }

    #[test]
    fn label_outside_window() {
        let g = graph(vec![
            edge("x", "a", "2020-01-01", Round::Seed),
            edge("y", "a", "2021-03-01", Round::SeriesA),
        ]);
        assert!(!g.compute_label("a").unwrap().y);
    }

    #[test]
    fn label_without_series_a() {
        let g = graph(vec![edge("x", "a", "2020-01-01", Round::Seed)]);
        assert!(!g.compute_label("a").unwrap().y);
        assert!(g.compute_label("b").is_none());
    }

    #[test]
    fn window_end_is_inclusive_and_calendar_clamped() {
        assert_eq!(outcome_window_end(d("2020-02-29")), d("2021-02-28"));
        let g = graph(vec![
            edge("x", "a", "2020-01-31", Round::Angel),
            edge("y", "a", "2021-01-31", Round::SeriesA),
        ]);
        assert!(g.compute_label("a").unwrap().y);
    }

    #[test]
    fn earliest_first_round_defines_t0() {
        let g = graph(vec![
            edge("x", "a", "2020-05-01", Round::Seed),
            edge("y", "a", "2020-01-01", Round::Angel),
        ]);
        assert_eq!(g.compute_label("a").unwrap().t0, d("2020-01-01"));
    }

    #[test]
    fn view_cutoff_is_strict() {
        let g = graph(vec![
            edge("x", "a", "2019-12-31", Round::Seed),
            edge("y", "a", "2020-01-02", Round::Later),
            edge("y", "b", "2020-01-01", Round::Seed),
        ]);
        assert_eq!(g.view(d("2019-01-01")).edge_count(), 0);
        assert_eq!(g.view(d("2020-01-01")).edge_count(), 1);
        // At b's t0 its own first round is hidden in a plain view.
        let v = g.view(d("2020-01-01"));
        assert!(v.neighbors(&NodeId::company("b")).is_empty());
    }

    #[test]
    fn target_view_admits_only_own_first_round() {
        let g = graph(vec![
            edge("x", "a", "2020-01-01", Round::Seed),
            edge("y", "b", "2020-01-01", Round::Seed),
            edge("y", "a", "2020-01-05", Round::Later),
        ]);
        let t = g.compute_label("a").unwrap();
        let v = g.target_view(&t);
        let n = v.neighbors(&NodeId::company("a"));
        assert_eq!(n.len(), 1);
        assert_eq!(n[0].0, NodeId::investor("x"));
        assert!(v.neighbors(&NodeId::company("b")).is_empty());
    }

    #[test]
    fn neighbors_filter_and_order() {
        let companies = (0..5)
            .map(|i| company(&format!("c{i}"), "2015-01-01"))
            .collect();
        let edges = vec![
            edge("x", "c0", "2018-01-01", Round::Seed),
            edge("x", "c1", "2018-06-01", Round::Seed),
            edge("x", "c2", "2018-06-01", Round::Seed),
            edge("x", "c3", "2021-01-01", Round::Seed),
            edge("x", "c4", "2022-01-01", Round::Seed),
        ];
        let (g, _) = InvestmentGraph::from_records(companies, vec![investor("x")], edges).unwrap();
        let v = g.view(d("2020-01-01"));
        let ids: Vec<_> = v
            .neighbors(&NodeId::investor("x"))
            .into_iter()
            .map(|(n, _)| n.id)
            .collect();
        assert_eq!(ids, ["c1", "c2", "c0"]);
        assert_eq!(
            v.neighbors(&NodeId::investor("x")),
            v.neighbors(&NodeId::investor("x"))
        );
    }

    #[test]
    fn isolated_node_has_no_neighbors() {
        let g = graph(vec![]);
        assert!(g
            .view(d("2030-01-01"))
            .neighbors(&NodeId::company("a"))
            .is_empty());
    }

    #[test]
    fn founded_after_first_round_warns() {
        let (_, report) = InvestmentGraph::from_records(
            vec![company("a", "2021-01-01")],
            vec![investor("x")],
            vec![edge("x", "a", "2020-01-01", Round::Seed)],
        )
        .unwrap();
        assert_eq!(report.warnings.len(), 1);
    }
}
