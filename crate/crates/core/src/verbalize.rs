//! Text renderings of entities and paths. Everything here reads through a
//! [`TemporalView`], so nothing dated at or after the cutoff is rendered.

use std::fmt::Write;

use chrono::{Datelike, NaiveDate};

use crate::gain::PathState;
use crate::graph::{NodeId, NodeKind, TemporalView};

pub const UNKNOWN_ENTITY: &str = "[unknown entity]";

pub fn month_year(d: NaiveDate) -> String {
    d.format("%b-%Y").to_string()
}

pub fn outcome_word(y: bool) -> &'static str {
    if y {
        "Success"
    } else {
        "Failure"
    }
}

pub fn display_name(view: &TemporalView<'_>, node: &NodeId) -> String {
    match node.kind {
        NodeKind::Company => view.company(&node.id).map(|c| c.name.clone()),
        NodeKind::Investor => view.investor(&node.id).map(|v| v.name.clone()),
    }
    .unwrap_or_else(|| UNKNOWN_ENTITY.to_string())
}

/// Company block. With `with_outcome`, appends the outcome when the
/// company's success window closed before the cutoff.
pub fn company_profile(view: &TemporalView<'_>, id: &str, with_outcome: bool) -> String {
    let Some(c) = view.company(id) else {
        log::warn!("company {id} not resolvable in view at {}", view.cutoff());
        return format!("### Company Profile ###\n{UNKNOWN_ENTITY}\n");
    };
    let node = NodeId::company(id);
    let edges = view.incident_edges(&node);
    let mut out = String::from("### Company Profile ###\n");
    let _ = writeln!(out, "Company name    : {}", c.name);
    let _ = writeln!(out, "Founded year    : {}", c.founded.year());
    let _ = writeln!(out, "Headquarters    : {}", or_na(&c.attributes.region));
    let _ = writeln!(out, "Industry        : {}", or_na(&c.attributes.industry));
    let _ = writeln!(out, "Stage           : {}", or_na(&c.attributes.stage));

    // Rounds, oldest first, one entry per (round, date).
    let mut rounds: Vec<(NaiveDate, &'static str)> =
        edges.iter().map(|e| (e.date, e.round.label())).collect();
    rounds.sort();
    rounds.dedup();
    let funding = if rounds.is_empty() {
        "none disclosed".to_string()
    } else {
        rounds
            .iter()
            .map(|(d, r)| format!("{r}, {}", month_year(*d)))
            .collect::<Vec<_>>()
            .join("; ")
    };
    let _ = writeln!(out, "Funding to date : {funding}");

    if let Some(first) = rounds.first().map(|r| r.0) {
        let mut leads: Vec<&str> = edges
            .iter()
            .filter(|e| e.date == first)
            .filter_map(|e| view.investor(&e.investor).map(|v| v.name.as_str()))
            .collect();
        leads.sort_unstable();
        leads.dedup();
        let _ = writeln!(out, "Lead investors  : {}", leads.join(", "));
    }
    let _ = writeln!(out, "Company overview: {}", or_na(&c.description));
    if with_outcome {
        let outcome = match view.known_outcome(id) {
            Some(y) => outcome_word(y),
            None => "Unknown",
        };
        let _ = writeln!(out, "Outcome: {outcome}");
    }
    out
}

/// Investor block: demographics and positions held before the cutoff.
pub fn investor_profile(view: &TemporalView<'_>, id: &str) -> String {
    let Some(v) = view.investor(id) else {
        log::warn!("investor {id} not resolvable");
        return format!("### Investor Profile ###\n{UNKNOWN_ENTITY}\n");
    };
    let mut out = String::from("### Investor Profile ###\n");
    let _ = writeln!(out, "Investor name: {}", v.name);
    let _ = writeln!(out, "Education    : {}", or_na(&v.demographics.education));
    let _ = writeln!(out, "Age bracket  : {}", or_na(&v.demographics.age_bracket));
    let _ = writeln!(out, "Gender       : {}", or_na(&v.demographics.gender));
    let positions = view.employment(id);
    if !positions.is_empty() {
        out.push_str("Previous positions\n");
        for p in positions {
            let _ = writeln!(out, "• {} ({})", p.role, p.date.year());
        }
    }
    out
}

/// Chain notation: `A ← Investor X → B ← ...`.
pub fn chain_line(view: &TemporalView<'_>, nodes: &[NodeId]) -> String {
    let mut out = String::new();
    for (i, n) in nodes.iter().enumerate() {
        if i > 0 {
            out.push_str(if n.kind == NodeKind::Investor {
                " ← "
            } else {
                " → "
            });
        }
        out.push_str(&display_name(view, n));
    }
    out
}

/// Chain line (for paths with more than one node) followed by one profile
/// block per node. The target's own block never carries an outcome.
pub fn verbalize_path(path: &PathState, view: &TemporalView<'_>) -> String {
    let mut out = String::new();
    if path.nodes.len() > 1 {
        let _ = writeln!(out, "Investment path: {}\n", chain_line(view, &path.nodes));
    }
    for (i, n) in path.nodes.iter().enumerate() {
        if i > 0 {
            out.push('\n');
        }
        match n.kind {
            NodeKind::Company => out.push_str(&company_profile(view, &n.id, i > 0)),
            NodeKind::Investor => out.push_str(&investor_profile(view, &n.id)),
        }
    }
    out
}

/// Classification prompt used for label scoring.
pub fn scoring_prompt(evidence: &str, company_name: &str) -> String {
    format!(
        "{evidence}\nQuestion: Will {company_name} raise a Series-A round within 12 months of its seed/angel round?\nAnswer with True or False.\nAnswer:"
    )
}

pub fn or_na(s: &str) -> &str {
    if s.trim().is_empty() {
        "n/a"
    } else {
        s
    }
}
