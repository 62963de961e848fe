//! Classification and ranking metrics over prediction records, plus CSV reports.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use chrono::{Datelike, NaiveDate};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::agents::{Agent, VerdictStatus};
use crate::error::{Error, Result};

pub const RANK_KS: [usize; 3] = [5, 10, 20];

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
    pub tn: usize,
}

impl Confusion {
    pub fn from_pairs(pred: &[bool], truth: &[bool]) -> Self {
        let mut c = Self::default();
        for (&p, &t) in pred.iter().zip(truth) {
            c.add(p, t);
        }
        c
    }

    pub fn add(&mut self, pred: bool, truth: bool) {
        match (pred, truth) {
            (true, true) => self.tp += 1,
            (true, false) => self.fp += 1,
            (false, true) => self.fn_ += 1,
            (false, false) => self.tn += 1,
        }
    }

    /// Zero when nothing was predicted positive.
    pub fn precision(&self) -> f64 {
        ratio(self.tp, self.tp + self.fp)
    }

    pub fn recall(&self) -> f64 {
        ratio(self.tp, self.tp + self.fn_)
    }

    pub fn f1(&self) -> f64 {
        ratio(2 * self.tp, 2 * self.tp + self.fp + self.fn_)
    }
}

fn ratio(a: usize, b: usize) -> f64 {
    if b == 0 {
        0.0
    } else {
        a as f64 / b as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConfidenceSource {
    Gate,
    Verdict,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ViewRecord {
    pub agent: Agent,
    pub prediction: bool,
    pub status: VerdictStatus,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub target_id: String,
    pub t0: NaiveDate,
    pub y_true: bool,
    pub y_pred: bool,
    pub confidence: f64,
    pub confidence_source: ConfidenceSource,
    #[serde(default)]
    pub weights: Vec<f64>,
    #[serde(default)]
    pub views: Vec<ViewRecord>,
    #[serde(default)]
    pub rationale: String,
}

/// Indices sorted by confidence descending, ties by target id ascending.
pub fn ranking(records: &[PredictionRecord]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..records.len()).collect();
    idx.sort_by(|&a, &b| {
        records[b]
            .confidence
            .total_cmp(&records[a].confidence)
            .then_with(|| records[a].target_id.cmp(&records[b].target_id))
    });
    idx
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrecisionAtK {
    pub value: f64,
    pub hits: usize,
    /// Records actually ranked: `min(k, n)`.
    pub used: usize,
    /// Fewer than `k` records were available.
    pub short: bool,
}

pub fn precision_at_k(records: &[PredictionRecord], k: usize) -> Result<PrecisionAtK> {
    if records.is_empty() {
        return Err(Error::EmptyInput("prediction records"));
    }
    if k == 0 {
        return Err(Error::Config("K must be positive".into()));
    }
    let used = k.min(records.len());
    let hits = ranking(records)
        .into_iter()
        .take(used)
        .filter(|&i| records[i].y_true)
        .count();
    Ok(PrecisionAtK {
        value: hits as f64 / used as f64,
        hits,
        used,
        short: used < k,
    })
}

pub fn month_key(d: NaiveDate) -> String {
    format!("{:04}-{:02}", d.year(), d.month())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CohortMetrics {
    pub month: String,
    pub count: usize,
    pub positives: usize,
    /// P@K per K, with the short-cohort flag.
    pub precision_at: BTreeMap<usize, PrecisionAtK>,
}

pub fn cohorts(records: &[PredictionRecord], ks: &[usize]) -> Result<Vec<CohortMetrics>> {
    let mut by_month: BTreeMap<String, Vec<PredictionRecord>> = BTreeMap::new();
    for r in records {
        by_month.entry(month_key(r.t0)).or_default().push(r.clone());
    }
    by_month
        .into_iter()
        .map(|(month, recs)| {
            let mut precision_at = BTreeMap::new();
            for &k in ks {
                precision_at.insert(k, precision_at_k(&recs, k)?);
            }
            Ok(CohortMetrics {
                month,
                count: recs.len(),
                positives: recs.iter().filter(|r| r.y_true).count(),
                precision_at,
            })
        })
        .collect()
}

/// Mean monthly P@K; 0 without records. The mean is formed as one exact
/// fraction, so e.g. monthly values 0.4 and 0.2 give exactly 0.3.
pub fn average_precision_at_k(records: &[PredictionRecord], k: usize) -> Result<f64> {
    let c = cohorts(records, &[k])?;
    if c.is_empty() {
        return Ok(0.0);
    }
    let parts: Vec<(u128, u128)> = c
        .iter()
        .map(|m| {
            let p = &m.precision_at[&k];
            (p.hits as u128, p.used as u128)
        })
        .collect();
    let l = parts.iter().fold(1u128, |acc, &(_, d)| lcm(acc, d));
    let num: u128 = parts.iter().map(|&(h, d)| h * (l / d)).sum();
    Ok(num as f64 / (l * parts.len() as u128) as f64)
}

fn gcd(a: u128, b: u128) -> u128 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

fn lcm(a: u128, b: u128) -> u128 {
    a / gcd(a, b) * b
}

/// Expected AP@K after randomly permuting the labels across records,
/// estimated over `draws` seeded permutations.
pub fn label_shuffled_ap(
    records: &[PredictionRecord],
    k: usize,
    draws: usize,
    seed: u64,
) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut labels: Vec<bool> = records.iter().map(|r| r.y_true).collect();
    let mut recs = records.to_vec();
    let mut total = 0.0;
    for _ in 0..draws {
        labels.shuffle(&mut rng);
        for (r, &y) in recs.iter_mut().zip(&labels) {
            r.y_true = y;
        }
        total += average_precision_at_k(&recs, k)?;
    }
    Ok(total / draws.max(1) as f64)
}

/// Area under the ROC curve via average ranks (ties count one half).
/// `None` unless both classes are present.
pub fn auc_roc(scores: &[f64], labels: &[bool]) -> Option<f64> {
    let n_pos = labels.iter().filter(|&&y| y).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return None;
    }
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && scores[idx[j + 1]] == scores[idx[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        rank_sum += idx[i..=j].iter().filter(|&&t| labels[t]).count() as f64 * avg;
        i = j + 1;
    }
    let np = n_pos as f64;
    Some((rank_sum - np * (np + 1.0) / 2.0) / (np * n_neg as f64))
}

/// Area under the precision-recall curve with step interpolation:
/// `Σ (R_t − R_{t−1}) · P_t` over distinct score thresholds, descending.
pub fn auc_pr(scores: &[f64], labels: &[bool]) -> Option<f64> {
    let n_pos = labels.iter().filter(|&&y| y).count();
    if n_pos == 0 || n_pos == labels.len() {
        return None;
    }
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let (mut tp, mut seen, mut prev_recall, mut area) = (0usize, 0usize, 0.0, 0.0);
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && scores[idx[j + 1]] == scores[idx[i]] {
            j += 1;
        }
        tp += idx[i..=j].iter().filter(|&&t| labels[t]).count();
        seen += j - i + 1;
        let recall = tp as f64 / n_pos as f64;
        area += (recall - prev_recall) * (tp as f64 / seen as f64);
        prev_recall = recall;
        i = j + 1;
    }
    Some(area)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassificationMetrics {
    pub n: usize,
    pub positives: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub auc_roc: Option<f64>,
    pub auc_pr: Option<f64>,
}

pub fn classification_metrics(records: &[PredictionRecord]) -> ClassificationMetrics {
    let pred: Vec<bool> = records.iter().map(|r| r.y_pred).collect();
    let truth: Vec<bool> = records.iter().map(|r| r.y_true).collect();
    let scores: Vec<f64> = records.iter().map(|r| r.confidence).collect();
    let c = Confusion::from_pairs(&pred, &truth);
    ClassificationMetrics {
        n: records.len(),
        positives: truth.iter().filter(|&&y| y).count(),
        precision: c.precision(),
        recall: c.recall(),
        f1: c.f1(),
        auc_roc: auc_roc(&scores, &truth),
        auc_pr: auc_pr(&scores, &truth),
    }
}

/// Every reported metric by name, in report order; `None` when undefined.
pub fn summary(records: &[PredictionRecord]) -> Result<Vec<(String, Option<f64>)>> {
    let m = classification_metrics(records);
    let mut rows = vec![
        ("n".to_string(), Some(m.n as f64)),
        ("positives".to_string(), Some(m.positives as f64)),
        ("precision".to_string(), Some(m.precision)),
        ("recall".to_string(), Some(m.recall)),
        ("f1".to_string(), Some(m.f1)),
        ("auc_roc".to_string(), m.auc_roc),
        ("auc_pr".to_string(), m.auc_pr),
    ];
    for k in RANK_KS {
        let v = if records.is_empty() {
            None
        } else {
            Some(precision_at_k(records, k)?.value)
        };
        rows.push((format!("p_at_{k}"), v));
    }
    for k in RANK_KS {
        rows.push((
            format!("ap_at_{k}"),
            Some(average_precision_at_k(records, k)?),
        ));
    }
    Ok(rows)
}

fn cell(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".to_string(), |x| format!("{x:.6}"))
}

/// Renders `metrics.csv`; each named baseline adds a value and a delta column.
pub fn metrics_csv(
    rows: &[(String, Option<f64>)],
    baselines: &[(String, BTreeMap<String, f64>)],
) -> String {
    let mut out = String::from("metric,value");
    for (name, _) in baselines {
        let _ = write!(out, ",{name},delta_{name}");
    }
    out.push('\n');
    for (metric, value) in rows {
        let _ = write!(out, "{metric},{}", cell(*value));
        for (_, b) in baselines {
            let base = b.get(metric).copied();
            let delta = value.zip(base).map(|(v, b)| v - b);
            let _ = write!(out, ",{},{}", cell(base), cell(delta));
        }
        out.push('\n');
    }
    out
}

pub fn monthly_csv(cohorts: &[CohortMetrics]) -> String {
    let mut out = String::from("month,count,positives");
    for k in RANK_KS {
        let _ = write!(out, ",p_at_{k},short_{k}");
    }
    out.push('\n');
    for c in cohorts {
        let _ = write!(out, "{},{},{}", c.month, c.count, c.positives);
        for k in RANK_KS {
            match c.precision_at.get(&k) {
                Some(p) => {
                    let _ = write!(out, ",{:.6},{}", p.value, p.short);
                }
                None => out.push_str(",NA,NA"),
            }
        }
        out.push('\n');
    }
    out
}

/// Reads a `metrics.csv` written by [`metrics_csv`] into name → value.
pub fn read_metrics_csv(path: &Path) -> Result<BTreeMap<String, f64>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut out = BTreeMap::new();
    for (i, line) in text.lines().enumerate().skip(1) {
        let mut parts = line.split(',');
        let (Some(name), Some(value)) = (parts.next(), parts.next()) else {
            return Err(Error::MalformedLine {
                file: path.display().to_string(),
                line: i + 1,
                message: "expected metric,value".into(),
            });
        };
        if let Ok(v) = value.parse::<f64>() {
            out.insert(name.to_string(), v);
        }
    }
    Ok(out)
}

/// Writes `metrics.csv` and `monthly.csv` into `dir`.
pub fn write_report(
    dir: &Path,
    records: &[PredictionRecord],
    baselines: &[(String, BTreeMap<String, f64>)],
) -> Result<()> {
    let rows = summary(records)?;
    let months = cohorts(records, &RANK_KS)?;
    let m = dir.join("metrics.csv");
    std::fs::write(&m, metrics_csv(&rows, baselines)).map_err(|e| Error::io(&m, e))?;
    let p = dir.join("monthly.csv");
    std::fs::write(&p, monthly_csv(&months)).map_err(|e| Error::io(&p, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(id: &str, month: u32, y: bool, conf: f64) -> PredictionRecord {
        PredictionRecord {
            target_id: id.into(),
            t0: NaiveDate::from_ymd_opt(2024, month, 3).unwrap(),
            y_true: y,
            y_pred: conf >= 0.5,
            confidence: conf,
            confidence_source: ConfidenceSource::Gate,
            weights: vec![],
            views: vec![],
            rationale: String::new(),
        }
    }

    #[test]
    fn precision_at_five() {
        let labels = [true, true, false, false, true, false, true];
        let recs: Vec<_> = labels
            .iter()
            .enumerate()
            .map(|(i, &y)| rec(&format!("c{i}"), 1, y, 1.0 - i as f64 * 0.1))
            .collect();
        assert_eq!(precision_at_k(&recs, 5).unwrap().value, 0.6);
        assert!(precision_at_k(&[], 5).is_err());
    }

    #[test]
    fn ties_break_by_id() {
        let recs = vec![rec("b", 1, false, 0.5), rec("a", 1, true, 0.5)];
        assert_eq!(precision_at_k(&recs, 1).unwrap().value, 1.0);
    }

    #[test]
    fn two_month_average() {
        let mut recs = Vec::new();
        for (m, pos) in [(1u32, 2usize), (2, 1)] {
            for i in 0..5 {
                recs.push(rec(&format!("m{m}-{i}"), m, i < pos, 0.9 - i as f64 * 0.1));
            }
        }
        assert_eq!(average_precision_at_k(&recs, 5).unwrap(), 0.3);
    }

    #[test]
    fn short_month_is_flagged() {
        let recs = vec![
            rec("a", 1, true, 0.9),
            rec("b", 1, false, 0.8),
            rec("c", 1, true, 0.1),
        ];
        let p = precision_at_k(&recs, 5).unwrap();
        assert!(p.short);
        assert_eq!(p.used, 3);
        assert!((p.value - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn confusion_example() {
        let pred = [true, true, true, false, false, false];
        let truth = [true, true, false, true, false, false];
        let c = Confusion::from_pairs(&pred, &truth);
        assert_eq!((c.tp, c.fp, c.fn_, c.tn), (2, 1, 1, 2));
        for v in [c.precision(), c.recall(), c.f1()] {
            assert!((v - 2.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn auc_edge_cases() {
        assert_eq!(auc_roc(&[0.9, 0.8, 0.1], &[true, true, false]), Some(1.0));
        assert_eq!(auc_roc(&[0.5; 4], &[true, false, true, false]), Some(0.5));
        assert_eq!(auc_roc(&[0.5, 0.2], &[true, true]), None);
        assert_eq!(auc_pr(&[0.9, 0.8, 0.1], &[true, true, false]), Some(1.0));
        let v = auc_pr(&[0.9, 0.8, 0.7], &[false, true, false]).unwrap();
        assert!((v - 0.5).abs() < 1e-15);
    }

    #[test]
    fn report_is_deterministic_and_complete() {
        let recs = vec![
            rec("a", 1, true, 0.9),
            rec("b", 2, false, 0.2),
            rec("c", 2, true, 0.6),
        ];
        let rows = summary(&recs).unwrap();
        let a = metrics_csv(&rows, &[]);
        assert_eq!(a, metrics_csv(&summary(&recs).unwrap(), &[]));
        assert!(!a.contains("NA"));
        let mut base = BTreeMap::new();
        base.insert("f1".to_string(), 0.5);
        let with = metrics_csv(&rows, &[("random".to_string(), base)]);
        assert!(with.starts_with("metric,value,random,delta_random\n"));
        assert!(with.contains("\nf1,1.000000,0.500000,0.500000\n"));
    }
}
