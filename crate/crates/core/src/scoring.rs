//! Exact and IOU-relaxed quadruple scoring with micro-averaged P/R/F1.
//!
//! True positives per example are the size of a maximum bipartite matching
//! between predictions and gold quads, so the score does not depend on the
//! order in which either side is listed.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::ops::{Add, AddAssign};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{Quadruple, Term};
use crate::parser::{normalize_text, NormalizedTerm};

/// Slack for threshold comparisons such as `0.1 * 3` vs `0.3`.
const IOU_EPSILON: f64 = 1e-9;

#[derive(Debug, Error, PartialEq)]
pub enum ScoringError {
    #[error("IOU threshold {0} is outside (0, 1]")]
    InvalidThreshold(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "lowercase")]
pub enum MatchPolicy {
    Exact,
    Relaxed { iou_threshold: f64 },
}

impl MatchPolicy {
    pub fn relaxed(iou_threshold: f64) -> Result<Self, ScoringError> {
        check_threshold(iou_threshold)?;
        Ok(MatchPolicy::Relaxed { iou_threshold })
    }

    pub fn label(&self) -> String {
        match self {
            MatchPolicy::Exact => "exact".to_string(),
            MatchPolicy::Relaxed { iou_threshold } => format!("iou>={iou_threshold}"),
        }
    }
}

fn check_threshold(t: f64) -> Result<(), ScoringError> {
    if t > 0.0 && t <= 1.0 {
        Ok(())
    } else {
        Err(ScoringError::InvalidThreshold(t))
    }
}

fn word_set(term: &str) -> BTreeSet<&str> {
    term.split(' ').filter(|w| !w.is_empty()).collect()
}

/// Word-set intersection over union of two terms after normalization.
/// Two implicit terms score 1; implicit against explicit scores 0.
pub fn iou(a: &Term, b: &Term) -> f64 {
    match (NormalizedTerm::from(a), NormalizedTerm::from(b)) {
        (NormalizedTerm::Implicit, NormalizedTerm::Implicit) => 1.0,
        (NormalizedTerm::Text(x), NormalizedTerm::Text(y)) => {
            let (wx, wy) = (word_set(&x), word_set(&y));
            let union = wx.union(&wy).count();
            if union == 0 {
                return 1.0;
            }
            wx.intersection(&wy).count() as f64 / union as f64
        }
        _ => 0.0,
    }
}

pub fn quad_matches(pred: &Quadruple, gold: &Quadruple, policy: MatchPolicy) -> bool {
    if pred.sentiment != gold.sentiment || normalize_text(&pred.category) != normalize_text(&gold.category) {
        return false;
    }
    match policy {
        MatchPolicy::Exact => {
            NormalizedTerm::from(&pred.aspect) == NormalizedTerm::from(&gold.aspect)
                && NormalizedTerm::from(&pred.opinion) == NormalizedTerm::from(&gold.opinion)
        }
        MatchPolicy::Relaxed { iou_threshold } => {
            iou(&pred.aspect, &gold.aspect) + IOU_EPSILON >= iou_threshold
                && iou(&pred.opinion, &gold.opinion) + IOU_EPSILON >= iou_threshold
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counts {
    pub true_positives: usize,
    pub predicted: usize,
    pub gold: usize,
}

impl Counts {
    pub fn new(true_positives: usize, predicted: usize, gold: usize) -> Self {
        Self {
            true_positives,
            predicted,
            gold,
        }
    }
}

impl Add for Counts {
    type Output = Counts;

    fn add(self, rhs: Counts) -> Counts {
        Counts {
            true_positives: self.true_positives + rhs.true_positives,
            predicted: self.predicted + rhs.predicted,
            gold: self.gold + rhs.gold,
        }
    }
}

impl AddAssign for Counts {
    fn add_assign(&mut self, rhs: Counts) {
        *self = *self + rhs;
    }
}

impl std::iter::Sum for Counts {
    fn sum<I: Iterator<Item = Counts>>(iter: I) -> Counts {
        iter.fold(Counts::default(), Add::add)
    }
}

/// Maximum bipartite matching size for an adjacency matrix
/// (`edges[p][g]` = prediction `p` may pair with gold `g`).
pub fn max_matching(edges: &[Vec<bool>], num_gold: usize) -> usize {
    fn augment(p: usize, edges: &[Vec<bool>], seen: &mut [bool], owner: &mut [Option<usize>]) -> bool {
        for g in 0..owner.len() {
            if edges[p][g] && !seen[g] {
                seen[g] = true;
                if owner[g].is_none_or(|q| augment(q, edges, seen, owner)) {
                    owner[g] = Some(p);
                    return true;
                }
            }
        }
        false
    }

    let mut owner: Vec<Option<usize>> = vec![None; num_gold];
    let mut matched = 0;
    for p in 0..edges.len() {
        let mut seen = vec![false; num_gold];
        if augment(p, edges, &mut seen, &mut owner) {
            matched += 1;
        }
    }
    matched
}

pub fn score_example(preds: &[Quadruple], golds: &[Quadruple], policy: MatchPolicy) -> Counts {
    let edges: Vec<Vec<bool>> = preds
        .iter()
        .map(|p| golds.iter().map(|g| quad_matches(p, g, policy)).collect())
        .collect();
    Counts::new(max_matching(&edges, golds.len()), preds.len(), golds.len())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoreReport {
    pub true_positives: usize,
    pub num_predicted: usize,
    pub num_gold: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl ScoreReport {
    /// Precision is 1 with no predictions and recall is 1 with no gold quads;
    /// F1 is 0 when both are 0.
    pub fn from_counts(c: Counts) -> Self {
        let ratio = |num: usize, den: usize| if den == 0 { 1.0 } else { num as f64 / den as f64 };
        let precision = ratio(c.true_positives, c.predicted);
        let recall = ratio(c.true_positives, c.gold);
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        Self {
            true_positives: c.true_positives,
            num_predicted: c.predicted,
            num_gold: c.gold,
            precision,
            recall,
            f1,
        }
    }
}

/// Micro-average over per-example counts.
pub fn score_dataset(counts: impl IntoIterator<Item = Counts>) -> ScoreReport {
    ScoreReport::from_counts(counts.into_iter().sum())
}

/// Scores `(predictions, gold)` pairs under one policy.
pub fn score_pairs<'a>(
    pairs: impl IntoIterator<Item = (&'a [Quadruple], &'a [Quadruple])>,
    policy: MatchPolicy,
) -> ScoreReport {
    score_dataset(pairs.into_iter().map(|(p, g)| score_example(p, g, policy)))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub threshold: f64,
    pub report: ScoreReport,
}

/// One relaxed-mode report per threshold over the same predictions.
pub fn threshold_sweep(
    pairs: &[(Vec<Quadruple>, Vec<Quadruple>)],
    thresholds: &[f64],
) -> Result<Vec<SweepPoint>, ScoringError> {
    thresholds
        .iter()
        .map(|&t| {
            let policy = MatchPolicy::relaxed(t)?;
            let report = score_pairs(pairs.iter().map(|(p, g)| (p.as_slice(), g.as_slice())), policy);
            Ok(SweepPoint { threshold: t, report })
        })
        .collect()
}

/// CSV with columns `threshold,precision,recall,f1`.
pub fn sweep_csv(points: &[SweepPoint]) -> String {
    let rows: Vec<(String, ScoreReport)> = points
        .iter()
        .map(|p| (p.threshold.to_string(), p.report))
        .collect();
    report_csv("threshold", &rows)
}

/// CSV with a leading key column followed by `precision,recall,f1`.
pub fn report_csv(key: &str, rows: &[(String, ScoreReport)]) -> String {
    let mut out = format!("{key},precision,recall,f1\n");
    for (label, r) in rows {
        let _ = writeln!(out, "{label},{:.6},{:.6},{:.6}", r.precision, r.recall, r.f1);
    }
    out
}

/// Aligned text table for humans.
pub fn report_table(rows: &[(String, ScoreReport)]) -> String {
    let width = rows
        .iter()
        .map(|(l, _)| l.len())
        .max()
        .unwrap_or(0)
        .max("policy".len());
    let mut out = format!(
        "{:<width$}  {:>6}  {:>6}  {:>6}  {:>9}  {:>6}  {:>6}\n",
        "policy", "TP", "pred", "gold", "precision", "recall", "f1"
    );
    for (label, r) in rows {
        let _ = writeln!(
            out,
            "{:<width$}  {:>6}  {:>6}  {:>6}  {:>9.4}  {:>6.4}  {:>6.4}",
            label, r.true_positives, r.num_predicted, r.num_gold, r.precision, r.recall, r.f1
        );
    }
    out
}
