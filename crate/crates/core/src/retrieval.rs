//! Textual evidence outside the path view: comparable companies and the
//! lead investor's résumé, both restricted to information available before
//! the target's first round.

use std::fmt::Write;

use chrono::{Datelike, NaiveDate};
use serde::{Deserialize, Serialize};

use crate::encoder::{cosine, TextEncoder};
use crate::error::Result;
use crate::graph::{Demographics, EmploymentEntry, InvestmentGraph, NodeId, Target, TemporalView};
use crate::verbalize::{company_profile, month_year, or_na};

pub const DEFAULT_PEERS: usize = 4;
pub const DEFAULT_HISTORY: usize = 5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Peer {
    pub company: String,
    pub similarity: f64,
    pub success: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeerSet {
    pub target: String,
    pub peers: Vec<Peer>,
}

/// Up to `k` companies founded before the target whose own outcome was
/// settled before `t0`, ranked by description cosine similarity (ties by id).
pub fn retrieve_peers<E: TextEncoder + ?Sized>(
    target: &Target,
    graph: &InvestmentGraph,
    encoder: &E,
    k: usize,
) -> Result<PeerSet> {
    let mut set = PeerSet {
        target: target.company.clone(),
        peers: Vec::new(),
    };
    let Some(rec) = graph.company(&target.company) else {
        return Ok(set);
    };
    if rec.description.trim().is_empty() || k == 0 {
        return Ok(set);
    }
    let anchor = encoder.encode(&rec.description)?;
    let mut scored = Vec::new();
    for c in graph.companies() {
        if c.id == rec.id || c.founded >= rec.founded || c.description.trim().is_empty() {
            continue;
        }
        let Some(success) = graph.outcome_known_before(&c.id, target.t0) else {
            continue;
        };
        let sim = cosine(&anchor, &encoder.encode(&c.description)?)?;
        scored.push(Peer {
            company: c.id.clone(),
            similarity: sim,
            success,
        });
    }
    scored.sort_by(|a, b| {
        b.similarity
            .total_cmp(&a.similarity)
            .then_with(|| a.company.cmp(&b.company))
    });
    scored.truncate(k);
    set.peers = scored;
    Ok(set)
}

/// Investor committing the largest amount in the target's first round.
/// Unknown amounts rank last; ties go to the lowest investor id.
pub fn select_lead_investor(target: &Target, graph: &InvestmentGraph) -> Option<String> {
    graph
        .incident_edges(&NodeId::company(&target.company))
        .filter(|e| e.round.is_first_round() && e.date == target.t0)
        .min_by(|a, b| {
            let amt = |x: Option<f64>| x.unwrap_or(f64::NEG_INFINITY);
            amt(b.amount)
                .total_cmp(&amt(a.amount))
                .then_with(|| a.date.cmp(&b.date))
                .then_with(|| a.investor.cmp(&b.investor))
        })
        .map(|e| e.investor.clone())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PortfolioEntry {
    pub company: String,
    pub date: NaiveDate,
    pub success: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeadInvestorProfile {
    pub investor: String,
    pub name: String,
    pub demographics: Demographics,
    pub employment: Vec<EmploymentEntry>,
    pub investments: Vec<PortfolioEntry>,
}

/// Résumé of `investor` as of `t0`: at most `n` positions and `n` portfolio
/// companies, most recent first. Portfolio companies whose outcome was still
/// open at `t0` are left out.
pub fn build_investor_profile(
    investor: &str,
    t0: NaiveDate,
    graph: &InvestmentGraph,
    n: usize,
) -> Option<LeadInvestorProfile> {
    let rec = graph.investor(investor)?;
    let view = graph.view(t0);
    let employment = view
        .employment(investor)
        .into_iter()
        .take(n)
        .cloned()
        .collect();
    let investments = view
        .neighbors(&NodeId::investor(investor))
        .into_iter()
        .filter_map(|(node, edge)| {
            view.company(&node.id)?;
            let success = view.known_outcome(&node.id)?;
            Some(PortfolioEntry {
                company: node.id,
                date: edge.date,
                success,
            })
        })
        .take(n)
        .collect();
    Some(LeadInvestorProfile {
        investor: investor.to_string(),
        name: rec.name.clone(),
        demographics: rec.demographics.clone(),
        employment,
        investments,
    })
}

pub fn render_investor_profile(profile: &LeadInvestorProfile, view: &TemporalView<'_>) -> String {
    let mut out = String::from("### Lead-Investor Profile ###\n");
    let _ = writeln!(out, "Investor name: {}", profile.name);
    let _ = writeln!(
        out,
        "Education    : {}",
        or_na(&profile.demographics.education)
    );
    let _ = writeln!(
        out,
        "Age bracket  : {}",
        or_na(&profile.demographics.age_bracket)
    );
    let _ = writeln!(
        out,
        "Gender       : {}",
        or_na(&profile.demographics.gender)
    );
    if !profile.employment.is_empty() {
        out.push_str("\nPrevious positions\n");
        for e in &profile.employment {
            let _ = writeln!(out, "• {} ({})", e.role, e.date.year());
        }
    }
    if !profile.investments.is_empty() {
        out.push_str("\nInvestment record\n");
        for p in &profile.investments {
            let snippet = view
                .company(&p.company)
                .map(|c| {
                    format!(
                        "{}, {}: {}",
                        c.name,
                        or_na(&c.attributes.industry),
                        or_na(&c.description)
                    )
                })
                .unwrap_or_else(|| p.company.clone());
            let tag = if p.success { "success" } else { "failure" };
            let _ = writeln!(out, "• {snippet} (backed {}) ({tag})", month_year(p.date));
        }
    }
    out
}

/// Peer blocks for the comparable-company prompt, each with its outcome.
pub fn render_peers(peers: &PeerSet, view: &TemporalView<'_>) -> String {
    let mut out = String::new();
    for (i, p) in peers.peers.iter().enumerate() {
        if i > 0 {
            out.push('\n');
        }
        let _ = writeln!(out, "Similarity: {:.3}", p.similarity);
        out.push_str(&company_profile(view, &p.company, true));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoder::HashingEncoder;
    use crate::graph::{CompanyAttributes, CompanyRecord, InvestmentEdge, InvestorRecord, Round};

    fn d(s: &str) -> NaiveDate {
        s.parse().unwrap()
    }

    fn company(id: &str, founded: &str, desc: &str) -> CompanyRecord {
        CompanyRecord {
            id: id.into(),
            name: id.to_uppercase(),
            founded: d(founded),
            description: desc.into(),
            attributes: CompanyAttributes::default(),
            first_round: None,
        }
    }

    fn investor(id: &str) -> InvestorRecord {
        InvestorRecord {
            id: id.into(),
            name: format!("Investor {id}"),
            demographics: Demographics::default(),
            employment: vec![
                EmploymentEntry {
                    role: "Analyst".into(),
                    date: d("2010-01-01"),
                },
                EmploymentEntry {
                    role: "Partner".into(),
                    date: d("2025-01-01"),
                },
            ],
        }
    }

    fn edge(inv: &str, c: &str, date: &str, round: Round, amount: Option<f64>) -> InvestmentEdge {
        InvestmentEdge {
            investor: inv.into(),
            company: c.into(),
            date: d(date),
            round,
            amount,
        }
    }

    fn fixture() -> InvestmentGraph {
        let companies = vec![
            company("t", "2020-01-01", "robotics warehouse automation"),
            company("p1", "2015-01-01", "robotics warehouse automation"),
            company("p2", "2016-01-01", "consumer food delivery"),
            company("late", "2021-01-01", "robotics warehouse automation"),
            company("open", "2017-01-01", "robotics arms"),
        ];
        let investors = vec![investor("a"), investor("b"), investor("c")];
        let edges = vec![
            edge("a", "t", "2022-06-01", Round::Seed, Some(2.0)),
            edge("b", "t", "2022-06-01", Round::Seed, Some(5.0)),
            edge("a", "p1", "2016-01-01", Round::Seed, None),
            edge("a", "p1", "2016-06-01", Round::SeriesA, None),
            edge("a", "p2", "2017-01-01", Round::Angel, None),
            edge("a", "open", "2022-01-01", Round::Seed, None),
            edge("c", "late", "2021-06-01", Round::Seed, None),
        ];
        InvestmentGraph::from_records(companies, investors, edges)
            .unwrap()
            .0
    }

    #[test]
    fn peers_respect_founding_and_outcome_window() {
        let g = fixture();
        let t = g.compute_label("t").unwrap();
        let enc = HashingEncoder::default();
        let peers = retrieve_peers(&t, &g, &enc, 4).unwrap();
        let ids: Vec<_> = peers.peers.iter().map(|p| p.company.as_str()).collect();
        assert_eq!(ids, vec!["p1", "p2"]);
        assert!((peers.peers[0].similarity - 1.0).abs() < 1e-12);
        assert!(peers.peers[0].success);
        assert!(!peers.peers[1].success);
        let one = retrieve_peers(&t, &g, &enc, 1).unwrap();
        assert_eq!(one.peers.len(), 1);
    }

    #[test]
    fn lead_investor_rules() {
        let g = fixture();
        let t = g.compute_label("t").unwrap();
        assert_eq!(select_lead_investor(&t, &g).as_deref(), Some("b"));
        let companies = vec![company("x", "2020-01-01", "x")];
        let investors = vec![investor("a"), investor("b")];
        let edges = vec![
            edge("a", "x", "2021-01-01", Round::Seed, None),
            edge("b", "x", "2021-01-01", Round::Seed, Some(1.0)),
        ];
        let g = InvestmentGraph::from_records(companies, investors, edges)
            .unwrap()
            .0;
        let t = g.compute_label("x").unwrap();
        assert_eq!(select_lead_investor(&t, &g).as_deref(), Some("b"));
    }

    #[test]
    fn lead_investor_all_unknown_takes_lowest_id() {
        let companies = vec![company("x", "2020-01-01", "x")];
        let investors = vec![investor("b"), investor("a")];
        let edges = vec![
            edge("b", "x", "2021-01-01", Round::Seed, None),
            edge("a", "x", "2021-01-01", Round::Seed, None),
        ];
        let g = InvestmentGraph::from_records(companies, investors, edges)
            .unwrap()
            .0;
        let t = g.compute_label("x").unwrap();
        assert_eq!(select_lead_investor(&t, &g).as_deref(), Some("a"));
    }

    #[test]
    fn investor_profile_filters_history() {
        let g = fixture();
        let t = g.compute_label("t").unwrap();
        let p = build_investor_profile("a", t.t0, &g, 5).unwrap();
        assert_eq!(p.employment.len(), 1);
        assert_eq!(p.employment[0].role, "Analyst");
        let ids: Vec<_> = p.investments.iter().map(|e| e.company.as_str()).collect();
        // "open" raised six months before t0, so its window is still open.
        assert_eq!(ids, vec!["p2", "p1"]);
        let short = build_investor_profile("a", t.t0, &g, 1).unwrap();
        assert_eq!(short.investments.len(), 1);
        assert_eq!(short.investments[0].company, "p2");
        let text = render_investor_profile(&p, &g.view(t.t0));
        assert!(text.contains("(success)") && text.contains("(failure)"));
        assert!(!text.contains("Partner"));
    }

    #[test]
    fn investor_without_history_keeps_demographics() {
        let g = fixture();
        let p = build_investor_profile("b", d("2022-06-01"), &g, 5).unwrap();
        assert!(p.investments.is_empty());
        let text = render_investor_profile(&p, &g.view(d("2022-06-01")));
        assert!(text.contains("Investor name: Investor b"));
    }
}
