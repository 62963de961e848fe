//! Seeded synthetic investment networks with a planted, recoverable signal.
//!
//! Success is network-mediated: companies whose first round includes a
//! tier-1 investor raise a Series A inside the window far more often.
//! Tier-1 investors carry [`GeneratorConfig::signal_token`] in a past role
//! and weak investors carry [`GeneratorConfig::weak_token`]; the matching
//! mock rule table is produced by [`mock_config`].

use chrono::{Days, NaiveDate};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::gate::{GateInput, GateSample};
use crate::graph::{
    add_months, CompanyAttributes, CompanyRecord, Demographics, EmploymentEntry, InvestmentEdge,
    InvestmentGraph, InvestorRecord, Round, COMPANIES_FILE, INVESTMENTS_FILE, INVESTORS_FILE,
};
use crate::lm::{MockConfig, MockRule};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GeneratorConfig {
    pub seed: u64,
    pub companies: usize,
    pub investors: usize,
    pub base_rate: f64,
    pub tier1_fraction: f64,
    pub weak_fraction: f64,
    /// Added success probability with a tier-1 investor in the first round.
    pub tier1_uplift: f64,
    /// Subtracted success probability with a weak (and no tier-1) investor.
    pub weak_penalty: f64,
    pub max_first_round_investors: usize,
    /// Chance that each co-investor in a first round shares the tier of the
    /// first backer rather than being drawn from all investors.
    pub syndicate_affinity: f64,
    /// Share of companies whose first round falls in the history era.
    pub history_fraction: f64,
    pub start: NaiveDate,
    pub history_months: u32,
    /// Months between the end of the history era and the prediction window.
    pub gap_months: u32,
    pub target_months: u32,
    pub signal_token: String,
    pub weak_token: String,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        Self {
            seed: 7,
            companies: 500,
            investors: 60,
            base_rate: 0.2,
            tier1_fraction: 0.15,
            weak_fraction: 0.15,
            tier1_uplift: 0.6,
            weak_penalty: 0.05,
            max_first_round_investors: 3,
            syndicate_affinity: 0.5,
            history_fraction: 0.5,
            start: NaiveDate::from_ymd_opt(2015, 1, 1).expect("valid date"),
            history_months: 36,
            gap_months: 13,
            target_months: 2,
            signal_token: "ALPHA".into(),
            weak_token: "OMEGA".into(),
        }
    }
}

impl GeneratorConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(crate::Error::Config(m.to_string()));
        if self.companies == 0 || self.investors == 0 {
            return bad("company and investor counts must be positive");
        }
        if !(self.base_rate > 0.0 && self.base_rate < 1.0) {
            return bad("base rate must lie in (0, 1)");
        }
        if self.max_first_round_investors == 0
            || self.history_months == 0
            || self.target_months == 0
        {
            return bad("round size and era lengths must be positive");
        }
        if !(0.0..=1.0).contains(&self.syndicate_affinity) {
            return bad("syndicate affinity must lie in [0, 1]");
        }
        if self.tier1_fraction + self.weak_fraction > 1.0 {
            return bad("tier fractions exceed 1");
        }
        Ok(())
    }

    /// First day of the prediction window.
    pub fn target_start(&self) -> NaiveDate {
        add_months(self.start, self.history_months + self.gap_months)
    }

    /// Success probability without tier-1 or weak investors, chosen so the
    /// marginal success rate matches `base_rate`.
    pub fn neutral_rate(&self) -> f64 {
        let m = self.max_first_round_investors as i32;
        let (t, w, a) = (
            self.tier1_fraction,
            self.weak_fraction,
            self.syndicate_affinity,
        );
        let n = 1.0 - t - w;
        let (mut p_t, mut p_w) = (0.0, 0.0);
        for k in 1..=m {
            // Co-investors: same tier as the first backer with chance `a`,
            // otherwise a draw from the whole population.
            let no_top = (1.0 - (1.0 - a) * t).powi(k - 1);
            let plain = (a + (1.0 - a) * n).powi(k - 1);
            p_t += (t + (1.0 - t) * (1.0 - no_top)) / m as f64;
            p_w += (w * no_top + n * (no_top - plain)) / m as f64;
        }
        (self.base_rate - self.tier1_uplift * p_t + self.weak_penalty * p_w).clamp(0.01, 0.99)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Tier {
    Top,
    Neutral,
    Weak,
}

#[derive(Debug, Clone)]
pub struct SyntheticData {
    pub companies: Vec<CompanyRecord>,
    pub investors: Vec<InvestorRecord>,
    pub edges: Vec<InvestmentEdge>,
    pub tiers: Vec<(String, Tier)>,
}

impl SyntheticData {
    pub fn graph(&self) -> Result<InvestmentGraph> {
        let (g, _) = InvestmentGraph::from_records(
            self.companies.clone(),
            self.investors.clone(),
            self.edges.clone(),
        )?;
        Ok(g)
    }

    pub fn tier(&self, investor: &str) -> Option<Tier> {
        self.tiers
            .iter()
            .find(|(id, _)| id == investor)
            .map(|(_, t)| *t)
    }

    pub fn write(&self, dir: &std::path::Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| crate::Error::io(dir, e))?;
        crate::graph::write_jsonl(&dir.join(COMPANIES_FILE), &self.companies)?;
        crate::graph::write_jsonl(&dir.join(INVESTORS_FILE), &self.investors)?;
        crate::graph::write_jsonl(&dir.join(INVESTMENTS_FILE), &self.edges)
    }
}

const INDUSTRIES: [(&str, [&str; 6]); 7] = [
    (
        "Fintech",
        [
            "payments",
            "lending",
            "ledger",
            "banking",
            "invoicing",
            "treasury",
        ],
    ),
    (
        "Healthtech",
        [
            "diagnostics",
            "clinical",
            "patient",
            "telehealth",
            "imaging",
            "genomics",
        ],
    ),
    (
        "Robotics",
        [
            "warehouse",
            "autonomous",
            "manipulation",
            "drones",
            "sensors",
            "actuators",
        ],
    ),
    (
        "Climate",
        [
            "carbon",
            "battery",
            "solar",
            "grid",
            "recycling",
            "hydrogen",
        ],
    ),
    (
        "Edtech",
        [
            "tutoring",
            "curriculum",
            "classroom",
            "assessment",
            "language",
            "campus",
        ],
    ),
    (
        "Logistics",
        [
            "freight",
            "routing",
            "fleet",
            "customs",
            "lastmile",
            "inventory",
        ],
    ),
    (
        "Security",
        [
            "identity",
            "endpoint",
            "threat",
            "encryption",
            "compliance",
            "fraud",
        ],
    ),
];

const REGIONS: [&str; 7] = [
    "North America",
    "Western Europe",
    "Nordics",
    "Israel",
    "India",
    "Southeast Asia",
    "Latin America",
];

const CUSTOMERS: [&str; 6] = [
    "small businesses",
    "enterprises",
    "hospitals",
    "public agencies",
    "consumers",
    "manufacturers",
];

const NAME_HEADS: [&str; 10] = [
    "Nova", "Quant", "Blue", "Terra", "Lumen", "Vector", "Kite", "Arbor", "Helio", "Orbit",
];
const NAME_TAILS: [&str; 8] = ["ly", "io", "works", "labs", "stack", "flow", "grid", "mind"];
const FIRMS: [&str; 8] = [
    "Harbor Capital",
    "Northgate Partners",
    "Cedar Ventures",
    "Meridian Fund",
    "Summit Angels",
    "Bluefield Capital",
    "Granite Partners",
    "Oakline Ventures",
];
const EDUCATION: [&str; 5] = ["MBA", "PhD", "MSc Engineering", "BA Economics", "JD"];
const AGES: [&str; 4] = ["30-39", "40-49", "50-59", "60+"];
const GENDERS: [&str; 3] = ["female", "male", "undisclosed"];

fn pick<'a, R: Rng>(rng: &mut R, xs: &[&'a str]) -> &'a str {
    xs[rng.gen_range(0..xs.len())]
}

fn plus_days(d: NaiveDate, days: u64) -> NaiveDate {
    d.checked_add_days(Days::new(days)).expect("date overflow")
}

fn minus_months(d: NaiveDate, months: u32) -> NaiveDate {
    d.checked_sub_months(chrono::Months::new(months))
        .expect("date underflow")
}

/// Deterministic in the config.
pub fn generate(config: &GeneratorConfig) -> Result<SyntheticData> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);

    // Investors and their tiers.
    let n_top = ((config.investors as f64 * config.tier1_fraction).round() as usize).max(1);
    let n_weak = (config.investors as f64 * config.weak_fraction).round() as usize;
    let mut tier_list: Vec<Tier> = (0..config.investors)
        .map(|i| {
            if i < n_top {
                Tier::Top
            } else if i < n_top + n_weak {
                Tier::Weak
            } else {
                Tier::Neutral
            }
        })
        .collect();
    tier_list.shuffle(&mut rng);
    let span_end = add_months(config.target_start(), config.target_months + 24);
    let mut investors = Vec::with_capacity(config.investors);
    let mut tiers = Vec::with_capacity(config.investors);
    for (i, &tier) in tier_list.iter().enumerate() {
        let id = format!("i{i:03}");
        let early = minus_months(config.start, rng.gen_range(24..120));
        let role = match tier {
            Tier::Top => format!("Partner, {} Capital", config.signal_token),
            Tier::Weak => format!("Associate, {} Partners", config.weak_token),
            Tier::Neutral => format!("Partner, {}", pick(&mut rng, &FIRMS)),
        };
        let mut employment = vec![
            EmploymentEntry {
                role: format!("Operator, {}", pick(&mut rng, &FIRMS)),
                date: minus_months(early, rng.gen_range(12..60)),
            },
            EmploymentEntry { role, date: early },
        ];
        // A later role that falls anywhere in the simulated span.
        let days = (span_end - config.start).num_days().max(1) as u64;
        employment.push(EmploymentEntry {
            role: format!("Managing Partner, {}", pick(&mut rng, &FIRMS)),
            date: plus_days(config.start, rng.gen_range(0..days)),
        });
        investors.push(InvestorRecord {
            id: id.clone(),
            name: format!(
                "{} {}",
                pick(
                    &mut rng,
                    &["Avery", "Jordan", "Morgan", "Riley", "Casey", "Quinn", "Reese", "Taylor"]
                ),
                pick(
                    &mut rng,
                    &["Hart", "Lind", "Okafor", "Sato", "Varga", "Moreau", "Iyer", "Costa"]
                )
            ),
            demographics: Demographics {
                education: pick(&mut rng, &EDUCATION).into(),
                age_bracket: pick(&mut rng, &AGES).into(),
                gender: pick(&mut rng, &GENDERS).into(),
            },
            employment,
        });
        tiers.push((id, tier));
    }

    let n_hist = ((config.companies as f64 * config.history_fraction).round() as usize)
        .min(config.companies);
    let target_start = config.target_start();
    let hist_days =
        (add_months(config.start, config.history_months) - config.start).num_days() as u64;
    let target_days =
        (add_months(target_start, config.target_months) - target_start).num_days() as u64;
    let neutral = config.neutral_rate();

    let mut companies = Vec::with_capacity(config.companies);
    let mut edges = Vec::new();
    for c in 0..config.companies {
        let id = format!("c{c:04}");
        let t0 = if c < n_hist {
            plus_days(config.start, rng.gen_range(0..hist_days))
        } else {
            plus_days(target_start, rng.gen_range(0..target_days))
        };
        let founded = minus_months(t0, rng.gen_range(3..19));
        let (industry, words) = INDUSTRIES[rng.gen_range(0..INDUSTRIES.len())];
        let mut w: Vec<&str> = words.to_vec();
        w.shuffle(&mut rng);
        let description = format!(
            "{} startup building {} {} software for {}",
            industry.to_lowercase(),
            w[0],
            w[1],
            pick(&mut rng, &CUSTOMERS)
        );
        companies.push(CompanyRecord {
            id: id.clone(),
            name: format!(
                "{}{} {c}",
                pick(&mut rng, &NAME_HEADS),
                pick(&mut rng, &NAME_TAILS)
            ),
            founded,
            description,
            attributes: CompanyAttributes {
                industry: industry.into(),
                region: pick(&mut rng, &REGIONS).into(),
                stage: "seed".into(),
            },
            first_round: None,
        });

        let k = rng.gen_range(1..=config.max_first_round_investors.min(config.investors));
        let mut backers: Vec<usize> = vec![rng.gen_range(0..config.investors)];
        while backers.len() < k {
            let lead_tier = tiers[backers[0]].1;
            let pool: Vec<usize> = (0..config.investors)
                .filter(|b| !backers.contains(b))
                .collect();
            let same: Vec<usize> = pool
                .iter()
                .copied()
                .filter(|&b| tiers[b].1 == lead_tier)
                .collect();
            let from = if !same.is_empty() && rng.gen_bool(config.syndicate_affinity) {
                &same
            } else {
                &pool
            };
            backers.push(from[rng.gen_range(0..from.len())]);
        }
        let round = if rng.gen_bool(0.3) {
            Round::Angel
        } else {
            Round::Seed
        };
        for &b in &backers {
            let amount =
                (!rng.gen_bool(0.1)).then(|| (rng.gen_range(0.2..3.0f64) * 100.0).round() / 100.0);
            edges.push(InvestmentEdge {
                investor: tiers[b].0.clone(),
                company: id.clone(),
                date: t0,
                round,
                amount,
            });
        }
        let has_top = backers.iter().any(|&b| tiers[b].1 == Tier::Top);
        let has_weak = backers.iter().any(|&b| tiers[b].1 == Tier::Weak);
        let p = if has_top {
            neutral + config.tier1_uplift
        } else if has_weak {
            neutral - config.weak_penalty
        } else {
            neutral
        }
        .clamp(0.0, 1.0);
        let success = rng.gen_bool(p);
        let follow_on = |rng: &mut ChaCha8Rng,
                         date: NaiveDate,
                         round: Round,
                         edges: &mut Vec<InvestmentEdge>| {
            let n = rng.gen_range(1..=2);
            for b in rand::seq::index::sample(rng, config.investors, n).into_iter() {
                edges.push(InvestmentEdge {
                    investor: tiers[b].0.clone(),
                    company: id.clone(),
                    date,
                    round,
                    amount: Some((rng.gen_range(3.0..15.0f64) * 100.0).round() / 100.0),
                });
            }
        };
        if success {
            let date = plus_days(add_months(t0, rng.gen_range(2..11)), rng.gen_range(0..28));
            follow_on(&mut rng, date, Round::SeriesA, &mut edges);
        } else if rng.gen_bool(0.4) {
            let date = add_months(t0, rng.gen_range(13..30));
            let round = if rng.gen_bool(0.5) {
                Round::SeriesA
            } else {
                Round::Later
            };
            follow_on(&mut rng, date, round, &mut edges);
        }
    }
    Ok(SyntheticData {
        companies,
        investors,
        edges,
        tiers,
    })
}

pub fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

/// Mock rule table matching the planted mechanism: the bias sits at the
/// base-rate logit, tier tokens move it strongly, and every rendered
/// outcome label nudges it.
pub fn mock_config(config: &GeneratorConfig, seed: u64) -> MockConfig {
    MockConfig {
        rules: vec![
            MockRule::new(config.signal_token.clone(), 2.0),
            MockRule::new(config.weak_token.clone(), -2.0),
            MockRule::new("Outcome: Success", 0.5),
            MockRule::new("Outcome: Failure", -0.25),
            MockRule::new("(success)", 0.5),
            MockRule::new("(failure)", -0.25),
        ],
        bias: logit(config.base_rate),
        noise: 0.0,
        seed,
    }
}

#[derive(Debug, Clone)]
pub struct PlantedGateSample {
    pub sample: GateSample,
    /// Per-view verdicts that go with the embeddings.
    pub predictions: [bool; 3],
}

/// Gate training data where only view `informative` carries the label: its
/// verdict matches `y` with probability `accuracy`, the other views vote at
/// random. Every embedding is a view-specific style plus its own verdict
/// along a shared direction, plus noise.
pub fn planted_gate_dataset(
    n: usize,
    rationale_dim: usize,
    attr_dim: usize,
    informative: usize,
    accuracy: f64,
    positive_rate: f64,
    seed: u64,
) -> Vec<PlantedGateSample> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let unit = |rng: &mut ChaCha8Rng| -> Vec<f64> {
        let v: Vec<f64> = (0..rationale_dim)
            .map(|_| rng.gen_range(-1.0..1.0))
            .collect();
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        v.into_iter().map(|x| x / n).collect()
    };
    let direction = unit(&mut rng);
    let styles: Vec<Vec<f64>> = (0..3).map(|_| unit(&mut rng)).collect();
    (0..n)
        .map(|_| {
            let y = rng.gen_bool(positive_rate);
            let mut predictions = [false; 3];
            let rationales = (0..3)
                .map(|v| {
                    let pred = if v == informative {
                        if rng.gen_bool(accuracy) {
                            y
                        } else {
                            !y
                        }
                    } else {
                        rng.gen_bool(0.5)
                    };
                    predictions[v] = pred;
                    let sign = if pred { 1.0 } else { -1.0 };
                    (0..rationale_dim)
                        .map(|c| {
                            styles[v][c] + sign * direction[c] + 0.05 * rng.gen_range(-1.0..1.0)
                        })
                        .collect()
                })
                .collect();
            let mut attributes = vec![0.0; attr_dim];
            if attr_dim > 0 {
                attributes[rng.gen_range(0..attr_dim)] = 1.0;
            }
            PlantedGateSample {
                sample: GateSample {
                    input: GateInput {
                        rationales,
                        attributes,
                    },
                    y,
                },
                predictions,
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn generation_is_deterministic() {
        let cfg = GeneratorConfig {
            companies: 120,
            ..GeneratorConfig::default()
        };
        let a = generate(&cfg).unwrap();
        let b = generate(&cfg).unwrap();
        assert_eq!(a.companies, b.companies);
        assert_eq!(a.edges, b.edges);
        assert_eq!(a.investors, b.investors);
    }

    #[test]
    fn edges_follow_founding() {
        let d = generate(&GeneratorConfig::default()).unwrap();
        for e in &d.edges {
            let c = d.companies.iter().find(|c| c.id == e.company).unwrap();
            assert!(c.founded <= e.date);
        }
        let (_, report) = InvestmentGraph::from_records(d.companies, d.investors, d.edges).unwrap();
        assert!(report.warnings.is_empty(), "{:?}", report.warnings);
    }

    #[test]
    fn neutral_rate_reproduces_base_rate() {
        let cfg = GeneratorConfig::default();
        let n = cfg.neutral_rate();
        assert!(n > 0.0 && n < cfg.base_rate);
    }

    #[test]
    fn marginal_success_rate_matches_base_rate() {
        for affinity in [0.0, 0.5, 0.9] {
            let cfg = GeneratorConfig {
                companies: 6000,
                investors: 200,
                syndicate_affinity: affinity,
                ..GeneratorConfig::default()
            };
            let g = generate(&cfg).unwrap().graph().unwrap();
            let t = g.targets();
            let rate = t.iter().filter(|t| t.y).count() as f64 / t.len() as f64;
            assert!(
                (rate - cfg.base_rate).abs() < 0.025,
                "affinity {affinity}: rate {rate}"
            );
        }
    }
}
