//! Classification metrics and cross-method rank statistics.

mod nemenyi;
mod report;

use std::collections::BTreeSet;

use log::warn;
use ndarray::Array2;
use serde::{Deserialize, Serialize};

pub use nemenyi::{critical_value, SUPPORTED_ALPHAS};
pub use report::{cd_diagram_svg, line_chart_svg, MetricsTable, Series};

use crate::error::{Error, Result};

fn check_lengths(y_true: &[usize], y_pred: &[usize]) -> Result<()> {
    if y_true.len() != y_pred.len() {
        return Err(Error::Shape(format!("{} labels vs {} predictions", y_true.len(), y_pred.len())));
    }
    if y_true.is_empty() {
        return Err(Error::InvalidInput("no samples to score".into()));
    }
    Ok(())
}

struct OneVsRest {
    tp: usize,
    fp: usize,
    fn_: usize,
    tn: usize,
}

fn one_vs_rest(y_true: &[usize], y_pred: &[usize], c: usize) -> OneVsRest {
    let mut m = OneVsRest { tp: 0, fp: 0, fn_: 0, tn: 0 };
    for (&t, &p) in y_true.iter().zip(y_pred) {
        match (t == c, p == c) {
            (true, true) => m.tp += 1,
            (true, false) => m.fn_ += 1,
            (false, true) => m.fp += 1,
            (false, false) => m.tn += 1,
        }
    }
    m
}

/// Classes of `classes` that occur in `y_true`; the rest are skipped with a warning.
fn scored_classes(y_true: &[usize], classes: &[usize]) -> Result<Vec<usize>> {
    let present: BTreeSet<usize> = y_true.iter().copied().collect();
    let mut out = Vec::new();
    for &c in classes.iter().collect::<BTreeSet<_>>() {
        if present.contains(&c) {
            out.push(c);
        } else {
            warn!("class {c} absent from ground truth; skipped");
        }
    }
    if out.is_empty() {
        return Err(Error::InvalidInput("none of the requested classes occur in the ground truth".into()));
    }
    Ok(out)
}

/// Macro one-vs-rest mean of sensitivity and specificity.
///
/// A class whose complement is empty contributes its sensitivity alone.
pub fn balanced_accuracy(y_true: &[usize], y_pred: &[usize], classes: &[usize]) -> Result<f64> {
    check_lengths(y_true, y_pred)?;
    let scored = scored_classes(y_true, classes)?;
    let total: f64 = scored
        .iter()
        .map(|&c| {
            let m = one_vs_rest(y_true, y_pred, c);
            let sens = m.tp as f64 / (m.tp + m.fn_) as f64;
            if m.tn + m.fp == 0 {
                sens
            } else {
                (sens + m.tn as f64 / (m.tn + m.fp) as f64) / 2.0
            }
        })
        .sum();
    Ok(total / scored.len() as f64)
}

/// Macro-averaged F1; a class with no true or predicted positives scores 0.
pub fn macro_f1(y_true: &[usize], y_pred: &[usize], classes: &[usize]) -> Result<f64> {
    check_lengths(y_true, y_pred)?;
    let scored = scored_classes(y_true, classes)?;
    let total: f64 = scored
        .iter()
        .map(|&c| {
            let m = one_vs_rest(y_true, y_pred, c);
            let denom = 2 * m.tp + m.fp + m.fn_;
            if denom == 0 {
                0.0
            } else {
                (2 * m.tp) as f64 / denom as f64
            }
        })
        .sum();
    Ok(total / scored.len() as f64)
}

/// Scores of several methods over several tasks; higher is better.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreMatrix {
    pub methods: Vec<String>,
    pub tasks: Vec<String>,
    /// `scores[[task, method]]`.
    pub scores: Array2<f64>,
}

impl ScoreMatrix {
    pub fn new(methods: Vec<String>, tasks: Vec<String>, scores: Array2<f64>) -> Result<Self> {
        if scores.dim() != (tasks.len(), methods.len()) {
            return Err(Error::Shape(format!(
                "score matrix is {:?} but there are {} tasks and {} methods",
                scores.dim(),
                tasks.len(),
                methods.len()
            )));
        }
        if scores.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("score matrix has missing or non-finite entries".into()));
        }
        Ok(Self { methods, tasks, scores })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankSummary {
    pub avg_ranks: Vec<f64>,
    pub critical_difference: f64,
    pub alpha: f64,
    /// Friedman chi-square statistic of the rank matrix.
    pub friedman_chi2: f64,
}

/// Ranks within one task: 1 for the best score, ties share their mean rank.
pub fn rank_row(scores: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let mut ranks = vec![0.0; scores.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let shared = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = shared;
        }
        i = j + 1;
    }
    ranks
}

/// Critical difference for `methods` compared over `tasks`.
pub fn critical_difference(methods: usize, tasks: usize, alpha: f64) -> Result<f64> {
    let cv = critical_value(methods, alpha)?;
    let (k, n) = (methods as f64, tasks as f64);
    Ok(cv * (k * (k + 1.0) / (6.0 * n)).sqrt())
}

/// Average Friedman ranks and the Nemenyi critical difference.
pub fn friedman_nemenyi(sm: &ScoreMatrix, alpha: f64) -> Result<RankSummary> {
    let (n_tasks, k) = sm.scores.dim();
    if k < 3 {
        return Err(Error::UnsupportedMethods { methods: k, alpha });
    }
    if n_tasks < 2 {
        return Err(Error::InvalidInput(format!("need at least 2 tasks, got {n_tasks}")));
    }
    let mut sums = vec![0.0; k];
    for row in sm.scores.rows() {
        let ranks = rank_row(&row.to_vec());
        for (s, r) in sums.iter_mut().zip(&ranks) {
            *s += r;
        }
    }
    let avg_ranks: Vec<f64> = sums.iter().map(|s| s / n_tasks as f64).collect();
    let (kf, nf) = (k as f64, n_tasks as f64);
    let friedman_chi2 =
        12.0 * nf / (kf * (kf + 1.0)) * (avg_ranks.iter().map(|r| r * r).sum::<f64>() - kf * (kf + 1.0).powi(2) / 4.0);
    Ok(RankSummary { critical_difference: critical_difference(k, n_tasks, alpha)?, avg_ranks, alpha, friedman_chi2 })
}
