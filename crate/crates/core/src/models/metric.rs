use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Classification threshold applied to scores.
pub const THRESHOLD: f64 = 0.5;

/// Performance metric, always reported as a lower-is-better risk in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    /// Error rate.
    Error,
    /// One minus the area under the ROC curve.
    Auc,
}

impl Metric {
    pub fn name(self) -> &'static str {
        match self {
            Metric::Error => "error",
            Metric::Auc => "auc",
        }
    }

    /// Risk of `scores` against `labels`.
    pub fn risk(self, scores: &[f64], labels: &[u8]) -> Result<f64> {
        if scores.is_empty() {
            return Err(Error::UndefinedMetric("empty sample".into()));
        }
        match self {
            Metric::Error => Ok(error_rate(scores, labels)),
            Metric::Auc => Ok(1.0 - auc(scores, labels)?),
        }
    }

    /// Risk over a subset of rows, or `None` when undefined there.
    pub fn risk_on(self, scores: &[f64], labels: &[u8], rows: &[usize]) -> Option<f64> {
        if rows.is_empty() {
            return None;
        }
        match self {
            Metric::Error => {
                let wrong = rows
                    .iter()
                    .filter(|&&i| predict_label(scores[i]) != labels[i])
                    .count();
                Some(wrong as f64 / rows.len() as f64)
            }
            Metric::Auc => {
                let s: Vec<f64> = rows.iter().map(|&i| scores[i]).collect();
                let y: Vec<u8> = rows.iter().map(|&i| labels[i]).collect();
                auc(&s, &y).ok().map(|a| 1.0 - a)
            }
        }
    }
}

impl std::str::FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "error" => Ok(Metric::Error),
            "auc" => Ok(Metric::Auc),
            other => Err(Error::InvalidArgument(format!("unknown metric `{other}`"))),
        }
    }
}

pub fn predict_label(score: f64) -> u8 {
    u8::from(score >= THRESHOLD)
}

fn error_rate(scores: &[f64], labels: &[u8]) -> f64 {
    let wrong = scores
        .iter()
        .zip(labels)
        .filter(|(&s, &y)| predict_label(s) != y)
        .count();
    wrong as f64 / scores.len() as f64
}

/// Mann-Whitney AUC with ties counted as one half, computed from midranks.
pub fn auc(scores: &[f64], labels: &[u8]) -> Result<f64> {
    let n_pos = labels.iter().filter(|&&y| y == 1).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::UndefinedMetric("AUC needs both classes".into()));
    }
    let ranks = midranks(scores);
    let rank_sum: f64 = ranks
        .iter()
        .zip(labels)
        .filter(|(_, &y)| y == 1)
        .map(|(r, _)| r)
        .sum();
    let u = rank_sum - (n_pos * (n_pos + 1)) as f64 / 2.0;
    Ok(u / (n_pos * n_neg) as f64)
}

/// 1-based midranks; tied values share the mean of their ranks.
pub(crate) fn midranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let mid = (i + j) as f64 / 2.0 + 1.0;
        for &idx in &order[i..=j] {
            ranks[idx] = mid;
        }
        i = j + 1;
    }
    ranks
}
