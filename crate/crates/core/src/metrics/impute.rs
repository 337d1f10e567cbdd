use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ImputeMethod {
    /// The most frequent full group in the reference data.
    Mode,
    /// Majority full group among the `k` nearest reference rows.
    Knn,
}

/// Impute full memberships for the rows of `hidden` from `reference`.
///
/// Both methods are deterministic. Mode ties go to the lexicographically
/// smallest group. KNN uses Euclidean distance on features z-scored with the
/// reference statistics; vote ties go to the group of the nearest tied
/// neighbour, and distance ties to the earlier reference row.
pub fn impute_groups(hidden: &Dataset, reference: &Dataset, method: ImputeMethod, k: usize) -> Result<Vec<Vec<usize>>> {
    if reference.n() == 0 {
        return Err(Error::EmptySplit("reference"));
    }
    if hidden.d() != reference.d() {
        return Err(Error::ShapeMismatch {
            expected: reference.d(),
            found: hidden.d(),
        });
    }
    match method {
        ImputeMethod::Mode => {
            let mut counts: BTreeMap<&[usize], usize> = BTreeMap::new();
            for g in reference.groups() {
                *counts.entry(g.as_slice()).or_default() += 1;
            }
            let top = counts.values().copied().max().unwrap_or(0);
            let mode = counts.into_iter().find(|&(_, c)| c == top).map(|(g, _)| g.to_vec()).expect("nonempty");
            Ok(vec![mode; hidden.n()])
        }
        ImputeMethod::Knn => {
            if k == 0 {
                return Err(Error::InvalidArgument("k_neighbors must be at least 1".into()));
            }
            let (mean, scale) = standardization(reference);
            let z = |x: &[f64]| -> Vec<f64> { x.iter().zip(&mean).zip(&scale).map(|((v, m), s)| (v - m) / s).collect() };
            let reference_z: Vec<Vec<f64>> = reference.features().iter().map(|x| z(x)).collect();
            Ok(hidden
                .features()
                .iter()
                .map(|x| {
                    let q = z(x);
                    let mut order: Vec<(f64, usize)> = reference_z
                        .iter()
                        .enumerate()
                        .map(|(i, r)| (r.iter().zip(&q).map(|(a, b)| (a - b).powi(2)).sum::<f64>(), i))
                        .collect();
                    order.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
                    let nearest = &order[..k.min(order.len())];
                    let mut votes: BTreeMap<&[usize], usize> = BTreeMap::new();
                    for &(_, i) in nearest {
                        *votes.entry(reference.groups()[i].as_slice()).or_default() += 1;
                    }
                    let top = votes.values().copied().max().expect("k ≥ 1");
                    // First neighbour (by distance) whose group has the top vote count.
                    nearest
                        .iter()
                        .map(|&(_, i)| &reference.groups()[i])
                        .find(|g| votes[g.as_slice()] == top)
                        .expect("some neighbour carries the top vote")
                        .clone()
                })
                .collect())
        }
    }
}

/// Per-feature mean and standard deviation (1 when constant).
fn standardization(d: &Dataset) -> (Vec<f64>, Vec<f64>) {
    let n = d.n() as f64;
    let mut mean = vec![0.0; d.d()];
    for x in d.features() {
        for (m, v) in mean.iter_mut().zip(x) {
            *m += v / n;
        }
    }
    let mut var = vec![0.0; d.d()];
    for x in d.features() {
        for ((s, v), m) in var.iter_mut().zip(x).zip(&mean) {
            *s += (v - m).powi(2) / n;
        }
    }
    let scale = var.into_iter().map(|v| if v > 0.0 { v.sqrt() } else { 1.0 }).collect();
    (mean, scale)
}
