//! Evaluation of participatory systems and static models on a test split.
//!
//! Risks and gains are fractions; a gain is the generic model's risk minus
//! the evaluated risk, so positive gains are improvements.

mod impute;

pub use impute::{impute_groups, ImputeMethod};

use log::warn;
use serde::{Deserialize, Serialize};

use crate::assembly::hypothesis::bootstrap_test;
use crate::assembly::ParticipatorySystem;
use crate::dataset::{Dataset, ReportingGroup};
use crate::error::{Error, Result};
use crate::models::{Metric, TrainedModel};
use crate::simulate::{best_report_node, AgentProfile, RiskTable};

/// How people report to a participatory system during evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Policy {
    /// Everyone reports their full membership.
    FullTruthful,
    /// Everyone takes the option with the best displayed risk for their
    /// group, reporting nothing unless that strictly improves on fewer
    /// attributes.
    PositiveGain,
}

/// What is being evaluated.
#[derive(Debug, Clone, Copy)]
pub enum Evaluand<'a> {
    System {
        system: &'a ParticipatorySystem,
        policy: Policy,
    },
    /// A model that needs its required attributes from everyone.
    Static {
        model: &'a TrainedModel,
        generic: &'a TrainedModel,
    },
    /// A static model fed imputed memberships instead of the true ones.
    Imputed {
        model: &'a TrainedModel,
        generic: &'a TrainedModel,
        groups: &'a [Vec<usize>],
    },
}

impl Evaluand<'_> {
    pub fn name(&self) -> String {
        match self {
            Evaluand::System { system, .. } => system.kind.name().to_string(),
            Evaluand::Static { model, .. } => model.spec.id.clone(),
            Evaluand::Imputed { model, .. } => format!("{}+imputed", model.spec.id),
        }
    }

    fn generic(&self) -> &TrainedModel {
        match self {
            Evaluand::System { system, .. } => system.root_model(),
            Evaluand::Static { generic, .. } | Evaluand::Imputed { generic, .. } => generic,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    /// Metric for static models; systems use their own.
    pub metric: Metric,
    pub alpha: f64,
    pub resamples: usize,
    pub seed: u64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            metric: Metric::Error,
            alpha: 0.10,
            resamples: 100,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupDetail {
    pub group: String,
    pub levels: Vec<usize>,
    pub n: usize,
    pub risk: Option<f64>,
    pub generic_risk: Option<f64>,
    pub gain: Option<f64>,
    pub violation: bool,
    pub violation_p_value: Option<f64>,
    /// Attributes the group discloses under the evaluation policy.
    pub reported: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub name: String,
    pub metric: Metric,
    pub policy: Option<Policy>,
    pub n_test: usize,
    pub overall_performance: f64,
    pub generic_performance: f64,
    pub overall_gain: f64,
    pub group_gain_min: f64,
    pub group_gain_max: f64,
    pub rationality_violations: usize,
    pub imputation_risk: Option<f64>,
    pub options_pruned: Option<f64>,
    pub data_use: f64,
    pub groups: Vec<GroupDetail>,
}

/// Group-size-weighted risk over full groups, skipping groups where the risk
/// is undefined. `None` if no group has a defined risk.
pub fn group_weighted_risk(d: &Dataset, scores: &[f64], metric: Metric) -> Option<f64> {
    let (total, weight) = group_rows(d)
        .iter()
        .filter_map(|(_, rows)| metric.risk_on(scores, d.labels(), rows).map(|r| (r * rows.len() as f64, rows.len())))
        .fold((0.0, 0), |(t, w), (r, n)| (t + r, w + n));
    (weight > 0).then(|| total / weight as f64)
}

/// Nonempty full groups with their row indices, in group order.
fn group_rows(d: &Dataset) -> Vec<(Vec<usize>, Vec<usize>)> {
    let schema = d.schema();
    let mut rows = vec![Vec::new(); schema.n_groups()];
    for (i, g) in d.groups().iter().enumerate() {
        rows[schema.group_index(g)].push(i);
    }
    rows.into_iter()
        .enumerate()
        .filter(|(_, r)| !r.is_empty())
        .map(|(gi, r)| (schema.group_from_index(gi), r))
        .collect()
}

/// Serving nodes for each row of `d` under a policy.
pub fn policy_nodes(system: &ParticipatorySystem, d: &Dataset, policy: Policy) -> Result<Vec<usize>> {
    match policy {
        Policy::FullTruthful => Ok(system.full_report_nodes(d)),
        Policy::PositiveGain => {
            let table = RiskTable::displayed(system);
            let zero = vec![0.0; system.schema.k()];
            let schema = d.schema();
            let mut per_group: Vec<Option<usize>> = vec![None; schema.n_groups()];
            d.groups()
                .iter()
                .map(|g| {
                    let gi = schema.group_index(g);
                    if per_group[gi].is_none() {
                        let agent = AgentProfile {
                            costs: zero.clone(),
                            benefit_scale: 1.0,
                            membership: g.clone(),
                        };
                        per_group[gi] = Some(best_report_node(&agent, system, &table)?);
                    }
                    Ok(per_group[gi].expect("filled"))
                })
                .collect()
        }
    }
}

/// Scores served to each test row, the generic scores, and attributes disclosed per row.
fn served(evaluand: &Evaluand, d: &Dataset) -> Result<(Vec<f64>, Vec<f64>, Vec<usize>)> {
    let generic = evaluand.generic().predict_scores(d)?;
    match evaluand {
        Evaluand::System { system, policy } => {
            let nodes = policy_nodes(system, d, *policy)?;
            let scores = system.scores_at(d, &nodes)?;
            let reported = nodes.iter().map(|&v| system.tree.nodes[v].report.n_reported()).collect();
            Ok((scores, generic, reported))
        }
        Evaluand::Static { model, .. } => {
            let n = model.spec.required_attributes.len();
            Ok((model.predict_scores(d)?, generic, vec![n; d.n()]))
        }
        Evaluand::Imputed { model, groups, .. } => {
            if groups.len() != d.n() {
                return Err(Error::ShapeMismatch {
                    expected: d.n(),
                    found: groups.len(),
                });
            }
            let scores = d
                .features()
                .iter()
                .zip(groups.iter())
                .map(|(x, g)| model.predict_row(d.schema(), x, ReportingGroup::full(g).entries()))
                .collect::<Result<Vec<_>>>()?;
            let n = model.spec.required_attributes.len();
            Ok((scores, generic, vec![n; d.n()]))
        }
    }
}

/// Worst extra risk any group incurs when the model is fed a wrong group:
/// `min over g, g' ≠ g of R_g(h(·, g)) − R_g(h(·, g'))`. Zero when no pair is defined.
pub fn imputation_risk(model: &TrainedModel, d: &Dataset, metric: Metric) -> Result<f64> {
    let schema = d.schema();
    let all_groups = schema.full_groups();
    let mut worst: Option<f64> = None;
    for (g, rows) in group_rows(d) {
        let sub = d.subset(&rows);
        let truth = model.predict_scores(&sub)?;
        let Ok(true_risk) = metric.risk(&truth, sub.labels()) else { continue };
        for other in all_groups.iter().filter(|o| **o != g) {
            let report = ReportingGroup::full(other);
            let swapped = sub
                .features()
                .iter()
                .map(|x| model.predict_row(schema, x, report.entries()))
                .collect::<Result<Vec<_>>>()?;
            if let Ok(r) = metric.risk(&swapped, sub.labels()) {
                let term = true_risk - r;
                worst = Some(worst.map_or(term, |w: f64| w.min(term)));
            }
        }
    }
    Ok(worst.unwrap_or(0.0))
}

/// Fraction of non-root options removed by pruning.
pub fn options_pruned(system: &ParticipatorySystem) -> f64 {
    let total = system.tree.len() - 1;
    if total == 0 {
        return 0.0;
    }
    system.tree.nodes[1..].iter().filter(|n| n.pruned).count() as f64 / total as f64
}

/// Size-weighted fraction of attributes solicited under full truthful reporting.
pub fn data_use(system: &ParticipatorySystem, d: &Dataset) -> f64 {
    if d.n() == 0 {
        return 0.0;
    }
    let k = system.schema.k() as f64;
    system
        .full_report_nodes(d)
        .iter()
        .map(|&v| system.tree.nodes[v].report.n_reported() as f64 / k)
        .sum::<f64>()
        / d.n() as f64
}

/// Every metric for one evaluand on the test data.
pub fn evaluate(evaluand: &Evaluand, test: &Dataset, config: &EvalConfig) -> Result<EvaluationReport> {
    if test.n() == 0 {
        return Err(Error::EmptySplit("test"));
    }
    let metric = match evaluand {
        Evaluand::System { system, .. } => system.metric,
        _ => config.metric,
    };
    let (scores, generic, reported) = served(evaluand, test)?;
    let labels = test.labels();
    let schema = test.schema();

    let mut groups = Vec::new();
    let (mut risk_sum, mut generic_sum, mut weight) = (0.0, 0.0, 0usize);
    for (g, rows) in group_rows(test) {
        let risk = metric.risk_on(&scores, labels, &rows);
        let generic_risk = metric.risk_on(&generic, labels, &rows);
        let gain = match (risk, generic_risk) {
            (Some(r), Some(gr)) => {
                risk_sum += r * rows.len() as f64;
                generic_sum += gr * rows.len() as f64;
                weight += rows.len();
                Some(gr - r)
            }
            _ => {
                warn!("{} risk undefined for group {}", metric.name(), schema.describe_full(&g));
                None
            }
        };
        let (violation, violation_p_value) = if gain.is_some() {
            let s: Vec<f64> = rows.iter().map(|&i| scores[i]).collect();
            let gs: Vec<f64> = rows.iter().map(|&i| generic[i]).collect();
            let y: Vec<u8> = rows.iter().map(|&i| labels[i]).collect();
            let seed = crate::derive_seed(config.seed, &format!("violation:{}", schema.group_index(&g)));
            // Roles swap: H0 is "personalization is no worse than generic".
            let outcome = bootstrap_test(metric, &gs, &s, &y, config.resamples, seed);
            (outcome.p_value < config.alpha, Some(outcome.p_value))
        } else {
            (false, None)
        };
        groups.push(GroupDetail {
            group: schema.describe_full(&g),
            reported: reported[rows[0]],
            levels: g,
            n: rows.len(),
            risk,
            generic_risk,
            gain,
            violation,
            violation_p_value,
        });
    }
    if weight == 0 {
        return Err(Error::UndefinedMetric("no group has a defined risk".into()));
    }
    let overall_performance = risk_sum / weight as f64;
    let generic_performance = generic_sum / weight as f64;
    let gains: Vec<f64> = groups.iter().filter_map(|g| g.gain).collect();
    let group_gain_min = gains.iter().copied().fold(f64::INFINITY, f64::min);
    let group_gain_max = gains.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let k = schema.k() as f64;

    let (policy, imputation, pruned, use_fraction) = match evaluand {
        Evaluand::System { system, policy } => (Some(*policy), None, Some(options_pruned(system)), data_use(system, test)),
        Evaluand::Static { model, .. } => (
            None,
            Some(imputation_risk(model, test, metric)?),
            None,
            model.spec.required_attributes.len() as f64 / k,
        ),
        Evaluand::Imputed { model, .. } => (None, None, None, model.spec.required_attributes.len() as f64 / k),
    };
    Ok(EvaluationReport {
        name: evaluand.name(),
        metric,
        policy,
        n_test: test.n(),
        overall_performance,
        generic_performance,
        overall_gain: generic_performance - overall_performance,
        group_gain_min,
        group_gain_max,
        rationality_violations: groups.iter().filter(|g| g.violation).count(),
        imputation_risk: imputation,
        options_pruned: pruned,
        data_use: use_fraction,
        groups,
    })
}

/// One row of the flat results table.
#[derive(Debug, Serialize)]
struct ResultRow<'a> {
    name: &'a str,
    metric: &'a str,
    policy: &'a str,
    n_test: usize,
    overall_performance: f64,
    overall_gain: f64,
    group_gain_min: f64,
    group_gain_max: f64,
    rationality_violations: usize,
    imputation_risk: Option<f64>,
    options_pruned: Option<f64>,
    data_use: f64,
}

#[derive(Debug, Serialize)]
struct GroupRow<'a> {
    name: &'a str,
    group: &'a str,
    n: usize,
    risk: Option<f64>,
    generic_risk: Option<f64>,
    gain: Option<f64>,
    violation: bool,
    violation_p_value: Option<f64>,
    reported: usize,
}

impl EvaluationReport {
    pub fn to_json(&self) -> Result<String> {
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        Ok(text)
    }

    /// Results table with one row per report.
    pub fn write_results_csv<W: std::io::Write>(reports: &[EvaluationReport], sink: W) -> Result<()> {
        let mut writer = csv::Writer::from_writer(sink);
        for r in reports {
            writer.serialize(ResultRow {
                name: &r.name,
                metric: r.metric.name(),
                policy: match r.policy {
                    Some(Policy::FullTruthful) => "full_truthful",
                    Some(Policy::PositiveGain) => "positive_gain",
                    None => "static",
                },
                n_test: r.n_test,
                overall_performance: r.overall_performance,
                overall_gain: r.overall_gain,
                group_gain_min: r.group_gain_min,
                group_gain_max: r.group_gain_max,
                rationality_violations: r.rationality_violations,
                imputation_risk: r.imputation_risk,
                options_pruned: r.options_pruned,
                data_use: r.data_use,
            })?;
        }
        writer.flush()?;
        Ok(())
    }

    pub fn write_groups_csv<W: std::io::Write>(reports: &[EvaluationReport], sink: W) -> Result<()> {
        let mut writer = csv::Writer::from_writer(sink);
        for r in reports {
            for g in &r.groups {
                writer.serialize(GroupRow {
                    name: &r.name,
                    group: &g.group,
                    n: g.n,
                    risk: g.risk,
                    generic_risk: g.generic_risk,
                    gain: g.gain,
                    violation: g.violation,
                    violation_p_value: g.violation_p_value,
                    reported: g.reported,
                })?;
            }
        }
        writer.flush()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assembly::{learn_systems, LearnConfig, SystemKind};
    use crate::dataset::SplitBundle;
    use crate::pool::ModelPool;
    use crate::synth;

    #[test]
    fn illustration_static_model_metrics() {
        let d = synth::illustration_dataset();
        let (h, h0) = synth::illustration_models();
        let report = evaluate(&Evaluand::Static { model: &h, generic: &h0 }, &d, &EvalConfig::default()).unwrap();
        assert_eq!(report.overall_performance, 24.0 / 101.0);
        assert!((report.overall_gain - 26.0 / 101.0).abs() < 1e-15);
        assert_eq!((report.group_gain_min, report.group_gain_max), (-1.0, 1.0));
        assert_eq!(report.rationality_violations, 1);
        assert_eq!(report.imputation_risk, Some(-1.0));
        assert_eq!(imputation_risk(&h0, &d, Metric::Error).unwrap(), 0.0);
    }

    #[test]
    fn illustration_minimal_system_metrics() {
        let d = synth::illustration_dataset();
        let bundle = SplitBundle::from_parts(d.clone(), d.clone(), d.clone(), 0);
        let (h, h0) = synth::illustration_models();
        let pool = ModelPool::new(d.schema().clone(), vec![h, h0]).unwrap();
        let config = LearnConfig {
            kinds: vec![SystemKind::Minimal],
            ..Default::default()
        };
        let system = &learn_systems(&bundle, &pool, &config).unwrap()[0];
        for policy in [Policy::FullTruthful, Policy::PositiveGain] {
            let report = evaluate(&Evaluand::System { system, policy }, &d, &EvalConfig::default()).unwrap();
            assert_eq!(report.overall_performance, 0.0);
            assert!((report.overall_gain - 50.0 / 101.0).abs() < 1e-15);
            assert_eq!((report.group_gain_min, report.group_gain_max), (0.0, 1.0));
            assert_eq!(report.rationality_violations, 0);
            assert_eq!(report.options_pruned, Some(0.5));
            assert!((report.data_use - 50.0 / 101.0).abs() < 1e-15);
        }
    }
}
