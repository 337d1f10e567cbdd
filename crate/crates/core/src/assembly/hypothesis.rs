//! One-sided tests of `H0: R(leaf) ≥ R(parent)` against `H1: R(leaf) < R(parent)`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::models::{auc, midranks, predict_label, Metric};

/// Discordant pairs at or above this total use the chi-square approximation.
pub const MCNEMAR_EXACT_BELOW: u64 = 25;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TestMethod {
    /// McNemar for error, DeLong for AUC.
    Auto,
    Mcnemar,
    Delong,
    Bootstrap,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TestConfig {
    pub method: TestMethod,
    pub resamples: usize,
    pub seed: u64,
}

impl Default for TestConfig {
    fn default() -> Self {
        Self {
            method: TestMethod::Auto,
            resamples: 100,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TestOutcome {
    pub statistic: f64,
    pub p_value: f64,
}

/// McNemar's test on discordant counts: `b` pairs where only the leaf is
/// right, `c` where only the parent is right.
///
/// The statistic is always the continuity-corrected `(|b−c|−1)²/(b+c)`. Below
/// [`MCNEMAR_EXACT_BELOW`] discordant pairs the p-value is the exact tail
/// `P(X ≥ b)` for `X ~ Bin(b+c, ½)`; otherwise it is the chi-square(1) tail,
/// halved toward the observed direction.
pub fn mcnemar_test(b: u64, c: u64) -> TestOutcome {
    let n = b + c;
    if n == 0 {
        return TestOutcome {
            statistic: 0.0,
            p_value: 1.0,
        };
    }
    let diff = b.abs_diff(c) as f64;
    let statistic = (diff - 1.0).max(0.0).powi(2) / n as f64;
    let p_value = if n < MCNEMAR_EXACT_BELOW {
        binomial_upper_tail(n, b)
    } else {
        let two_sided = ChiSquared::new(1.0).expect("valid dof").sf(statistic);
        if b > c {
            two_sided / 2.0
        } else {
            1.0 - two_sided / 2.0
        }
    };
    TestOutcome { statistic, p_value }
}

/// `P(X ≥ k)` for `X ~ Bin(n, ½)`, exact for `n < 64`.
fn binomial_upper_tail(n: u64, k: u64) -> f64 {
    let mut coefficient: u128 = 1;
    let mut total: u128 = 0;
    for i in 0..=n {
        if i >= k {
            total += coefficient;
        }
        coefficient = coefficient * u128::from(n - i) / u128::from(i + 1);
    }
    total as f64 / 2f64.powi(n as i32)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DelongOutcome {
    pub statistic: f64,
    pub p_value: f64,
    pub auc_leaf: f64,
    pub auc_parent: f64,
    /// Estimated variance of `auc_leaf − auc_parent`.
    pub variance: f64,
}

/// Structural components of one score vector: `V10` for positives, `V01` for negatives.
pub(crate) fn structural_components(scores: &[f64], labels: &[u8]) -> (Vec<f64>, Vec<f64>) {
    let pos: Vec<f64> = scores.iter().zip(labels).filter(|(_, &y)| y == 1).map(|(s, _)| *s).collect();
    let neg: Vec<f64> = scores.iter().zip(labels).filter(|(_, &y)| y == 0).map(|(s, _)| *s).collect();
    let (m, n) = (pos.len() as f64, neg.len() as f64);
    let all: Vec<f64> = pos.iter().chain(&neg).copied().collect();
    let ranks = midranks(&all);
    let (pos_ranks, neg_ranks) = (midranks(&pos), midranks(&neg));
    let v10 = (0..pos.len()).map(|i| (ranks[i] - pos_ranks[i]) / n).collect();
    let v01 = (0..neg.len())
        .map(|j| 1.0 - (ranks[pos.len() + j] - neg_ranks[j]) / m)
        .collect();
    (v10, v01)
}

fn covariance(a: &[f64], b: &[f64]) -> f64 {
    if a.len() < 2 {
        return 0.0;
    }
    let ma = a.iter().sum::<f64>() / a.len() as f64;
    let mb = b.iter().sum::<f64>() / b.len() as f64;
    a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum::<f64>() / (a.len() - 1) as f64
}

/// DeLong's test for correlated AUCs on the same labels.
pub fn delong_test(scores_leaf: &[f64], scores_parent: &[f64], labels: &[u8]) -> Result<DelongOutcome> {
    let auc_leaf = auc(scores_leaf, labels)?;
    let auc_parent = auc(scores_parent, labels)?;
    if scores_leaf.len() != scores_parent.len() {
        return Err(Error::InvalidArgument("score vectors differ in length".into()));
    }
    let (l10, l01) = structural_components(scores_leaf, labels);
    let (p10, p01) = structural_components(scores_parent, labels);
    let (m, n) = (l10.len() as f64, l01.len() as f64);
    let variance = (covariance(&l10, &l10) + covariance(&p10, &p10) - 2.0 * covariance(&l10, &p10)) / m
        + (covariance(&l01, &l01) + covariance(&p01, &p01) - 2.0 * covariance(&l01, &p01)) / n;
    let diff = auc_leaf - auc_parent;
    let (statistic, p_value) = if scores_leaf == scores_parent {
        (0.0, 1.0)
    } else if variance <= 0.0 {
        if diff > 0.0 {
            (f64::INFINITY, f64::MIN_POSITIVE)
        } else {
            (0.0, 1.0)
        }
    } else {
        let z = diff / variance.sqrt();
        let normal = Normal::standard();
        (z, normal.sf(z).max(f64::MIN_POSITIVE))
    };
    Ok(DelongOutcome {
        statistic,
        p_value,
        auc_leaf,
        auc_parent,
        variance,
    })
}

/// Paired bootstrap: the p-value is the fraction of resamples on which the
/// leaf is not strictly better (undefined resamples count for `H0`). The
/// statistic is the observed gain, or NaN when undefined.
pub fn bootstrap_test(
    metric: Metric,
    scores_leaf: &[f64],
    scores_parent: &[f64],
    labels: &[u8],
    resamples: usize,
    seed: u64,
) -> TestOutcome {
    let n = labels.len();
    let statistic = match (metric.risk(scores_parent, labels), metric.risk(scores_leaf, labels)) {
        (Ok(p), Ok(l)) => p - l,
        _ => f64::NAN,
    };
    if n == 0 || resamples == 0 {
        return TestOutcome {
            statistic,
            p_value: 1.0,
        };
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows = vec![0usize; n];
    let mut null_wins = 0usize;
    for _ in 0..resamples {
        for r in &mut rows {
            *r = rng.random_range(0..n);
        }
        let leaf = metric.risk_on(scores_leaf, labels, &rows);
        let parent = metric.risk_on(scores_parent, labels, &rows);
        match (leaf, parent) {
            (Some(l), Some(p)) if l < p => {}
            _ => null_wins += 1,
        }
    }
    TestOutcome {
        statistic,
        p_value: null_wins as f64 / resamples as f64,
    }
}

/// Discordant counts `(b, c)` between leaf and parent predictions.
pub fn discordant_counts(scores_leaf: &[f64], scores_parent: &[f64], labels: &[u8]) -> (u64, u64) {
    let mut b = 0;
    let mut c = 0;
    for ((&l, &p), &y) in scores_leaf.iter().zip(scores_parent).zip(labels) {
        match (predict_label(l) == y, predict_label(p) == y) {
            (true, false) => b += 1,
            (false, true) => c += 1,
            _ => {}
        }
    }
    (b, c)
}
