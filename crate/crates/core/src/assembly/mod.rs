//! The learning pipeline: build interfaces, assign models, prune uncertified options.

pub mod hypothesis;
mod system;

pub use hypothesis::{TestConfig, TestMethod};
pub use system::{DisplayedRisks, Prediction, Provenance, ParticipatorySystem, SystemKind, ARTIFACT_FORMAT_VERSION};

use log::{info, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, SplitBundle};
use crate::error::{Error, Result};
use crate::interface::{build_flat, build_minimal, enumerate_sequential, greedy_tree, ReportingTree, TreeConstraints};
use crate::models::Metric;
use crate::pool::{best_viable, ModelPool, ScoreTable};
use hypothesis::{bootstrap_test, delong_test, discordant_counts, mcnemar_test, TestOutcome};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Decision {
    Kept,
    Pruned,
    AutoPrunedNoData,
}

/// What the leaf side of a certificate is.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CertificateBasis {
    /// The node's own model.
    Node,
    /// Dispatch through the node's surviving subtree.
    Subtree,
}

/// Held-out evidence that a reporting option improves on its parent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GainCertificate {
    pub metric: Metric,
    pub basis: CertificateBasis,
    pub leaf_model: String,
    pub parent_model: String,
    pub leaf_risk: Option<f64>,
    pub parent_risk: Option<f64>,
    /// `parent_risk − leaf_risk`.
    pub gain: Option<f64>,
    pub test: String,
    pub statistic: Option<f64>,
    pub p_value: f64,
    pub n_validation: usize,
    pub decision: Decision,
}

impl GainCertificate {
    pub fn is_kept_at(&self, alpha: f64) -> bool {
        self.decision == Decision::Kept && self.p_value < alpha
    }
}

/// Test whether `leaf` beats `parent` on held-out rows.
///
/// An option is kept only when the one-sided test rejects at `alpha` and the
/// observed gain is positive. Empty samples and undefined risks are
/// auto-pruned.
#[allow(clippy::too_many_arguments)]
pub fn test_gain(
    leaf_model: &str,
    parent_model: &str,
    scores_leaf: &[f64],
    scores_parent: &[f64],
    labels: &[u8],
    metric: Metric,
    alpha: f64,
    config: &TestConfig,
) -> GainCertificate {
    let leaf_risk = metric.risk(scores_leaf, labels).ok();
    let parent_risk = metric.risk(scores_parent, labels).ok();
    let mut cert = GainCertificate {
        metric,
        basis: CertificateBasis::Node,
        leaf_model: leaf_model.to_string(),
        parent_model: parent_model.to_string(),
        leaf_risk,
        parent_risk,
        gain: None,
        test: "none".into(),
        statistic: None,
        p_value: 1.0,
        n_validation: labels.len(),
        decision: Decision::AutoPrunedNoData,
    };
    let (Some(l), Some(p)) = (leaf_risk, parent_risk) else {
        return cert;
    };
    cert.gain = Some(p - l);
    let method = match (config.method, metric) {
        (hypothesis::TestMethod::Auto, Metric::Error) => hypothesis::TestMethod::Mcnemar,
        (hypothesis::TestMethod::Auto, Metric::Auc) => hypothesis::TestMethod::Delong,
        (m, _) => m,
    };
    let outcome = match method {
        hypothesis::TestMethod::Mcnemar => {
            let (b, c) = discordant_counts(scores_leaf, scores_parent, labels);
            cert.test = "mcnemar".into();
            mcnemar_test(b, c)
        }
        hypothesis::TestMethod::Delong => {
            cert.test = "delong".into();
            match delong_test(scores_leaf, scores_parent, labels) {
                Ok(d) => TestOutcome {
                    statistic: d.statistic,
                    p_value: d.p_value,
                },
                Err(_) => return cert,
            }
        }
        _ => {
            cert.test = "bootstrap".into();
            bootstrap_test(metric, scores_leaf, scores_parent, labels, config.resamples, config.seed)
        }
    };
    cert.statistic = outcome.statistic.is_finite().then_some(outcome.statistic);
    cert.p_value = outcome.p_value.clamp(0.0, 1.0);
    cert.decision = if cert.p_value < alpha && p - l > 0.0 {
        Decision::Kept
    } else {
        Decision::Pruned
    };
    cert
}

/// Assign each node the viable model with the lowest risk on its rows of `d`.
///
/// Nodes are visited breadth-first. Ties go to fewer required attributes,
/// then generic models, then id. Nodes whose rows are empty, or where no
/// viable model has a defined risk, inherit their parent's model.
pub fn assign_models(tree: &mut ReportingTree, pool: &ModelPool, d: &Dataset, metric: Metric) -> Result<()> {
    let table = ScoreTable::new(pool, d)?;
    assign_with_table(tree, pool, &table, d, metric)
}

fn assign_with_table(
    tree: &mut ReportingTree,
    pool: &ModelPool,
    table: &ScoreTable,
    d: &Dataset,
    metric: Metric,
) -> Result<()> {
    for v in tree.breadth_first() {
        let report = tree.nodes[v].report.clone();
        let rows = d.rows_matching(&report);
        let chosen = match best_viable(pool, table, d.labels(), &report, &rows, metric) {
            Some((m, _)) => m.spec.id.clone(),
            None => match tree.nodes[v].parent {
                Some(p) => tree.nodes[p].model_id.clone().expect("parents are assigned first"),
                None => {
                    // Root without a defined risk: fall back to the preferred generic model.
                    let mut generic: Vec<_> = crate::pool::viable_models(pool, &report);
                    generic.sort_by(|a, b| crate::pool::preference_key(a).cmp(&crate::pool::preference_key(b)));
                    generic
                        .first()
                        .ok_or_else(|| Error::InvalidArgument("no model is viable at the root".into()))?
                        .spec
                        .id
                        .clone()
                }
            },
        };
        tree.nodes[v].model_id = Some(chosen);
    }
    Ok(())
}

/// Scores of dispatch through the surviving subtree below `node`, for `rows`.
fn subtree_scores(tree: &ReportingTree, table: &ScoreTable, d: &Dataset, node: usize, rows: &[usize]) -> Vec<f64> {
    rows.iter()
        .map(|&i| {
            let report = crate::dataset::ReportingGroup::full(&d.groups()[i]);
            let serving = tree.dispatch_from(node, &report);
            let id = tree.nodes[serving].model_id.as_deref().expect("assigned");
            table.scores(id)[i]
        })
        .collect()
}

/// Bottom-up pruning on held-out data.
///
/// Surviving non-root nodes are processed deepest first. A leaf is tested
/// against its parent's model and removed unless kept. A node that still has
/// surviving children is tested as a whole: dispatch through its surviving
/// subtree against the parent's model. If that fails, the subtree is
/// collapsed and the node is tested as a leaf. Every surviving non-root node
/// therefore ends with a kept certificate against its surviving parent.
pub fn prune_leaves(
    tree: &mut ReportingTree,
    pool: &ModelPool,
    d: &Dataset,
    metric: Metric,
    alpha: f64,
    config: &TestConfig,
) -> Result<()> {
    let table = ScoreTable::new(pool, d)?;
    prune_with_table(tree, &table, d, metric, alpha, config);
    Ok(())
}

fn prune_with_table(
    tree: &mut ReportingTree,
    table: &ScoreTable,
    d: &Dataset,
    metric: Metric,
    alpha: f64,
    config: &TestConfig,
) {
    let mut order: Vec<usize> = (1..tree.len()).collect();
    order.sort_by_key(|&v| (std::cmp::Reverse(tree.depth(v)), v));
    let labels_all = d.labels();
    for v in order {
        if tree.nodes[v].pruned {
            continue;
        }
        let parent = tree.nodes[v].parent.expect("non-root");
        let parent_model = tree.nodes[parent].model_id.clone().expect("assigned");
        let rows = d.rows_matching(&tree.nodes[v].report);
        let labels: Vec<u8> = rows.iter().map(|&i| labels_all[i]).collect();
        let parent_scores: Vec<f64> = rows.iter().map(|&i| table.scores(&parent_model)[i]).collect();
        let node_config = TestConfig {
            seed: crate::derive_seed(config.seed, &format!("node:{v}")),
            ..*config
        };

        if tree.surviving_children(v).next().is_some() {
            let scores = subtree_scores(tree, table, d, v, &rows);
            let mut cert = test_gain("subtree", &parent_model, &scores, &parent_scores, &labels, metric, alpha, &node_config);
            cert.basis = CertificateBasis::Subtree;
            if cert.decision == Decision::Kept {
                tree.nodes[v].certificate = Some(cert);
                continue;
            }
            info!("collapsing the subtree below {}", tree.nodes[v].report);
            for c in tree.descendants(v) {
                tree.nodes[c].pruned = true;
            }
        }
        let model = tree.nodes[v].model_id.clone().expect("assigned");
        let scores: Vec<f64> = rows.iter().map(|&i| table.scores(&model)[i]).collect();
        let cert = test_gain(&model, &parent_model, &scores, &parent_scores, &labels, metric, alpha, &node_config);
        tree.nodes[v].pruned = cert.decision != Decision::Kept;
        tree.nodes[v].certificate = Some(cert);
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LearnConfig {
    pub kinds: Vec<SystemKind>,
    /// Metric used for pruning and reported in certificates.
    pub metric: Metric,
    /// Metric used for assignment; defaults to `metric`.
    pub assign_metric: Option<Metric>,
    pub alpha: f64,
    pub constraints: TreeConstraints,
    pub test: TestConfig,
    pub seed: u64,
}

impl Default for LearnConfig {
    fn default() -> Self {
        Self {
            kinds: vec![SystemKind::Minimal, SystemKind::Flat, SystemKind::Sequential],
            metric: Metric::Error,
            assign_metric: None,
            alpha: 0.10,
            constraints: TreeConstraints::default(),
            test: TestConfig::default(),
            seed: 0,
        }
    }
}

/// Learn participatory systems of each requested kind.
///
/// Sequential learning returns one system per enumerated tree and marks the
/// one with the lowest group-weighted pruning-split risk as selected. When no
/// sequential tree satisfies the constraints, the flat interface is used
/// instead and the system is flagged as a fallback.
pub fn learn_systems(bundle: &SplitBundle, pool: &ModelPool, config: &LearnConfig) -> Result<Vec<ParticipatorySystem>> {
    if !(config.alpha > 0.0 && config.alpha < 1.0) {
        return Err(Error::InvalidArgument("alpha must lie in (0, 1)".into()));
    }
    let schema = bundle.assign.schema();
    let assign_table = ScoreTable::new(pool, &bundle.assign)?;
    let prune_table = ScoreTable::new(pool, &bundle.prune)?;
    let assign_metric = config.assign_metric.unwrap_or(config.metric);
    let test = TestConfig {
        seed: crate::derive_seed(config.seed, "prune"),
        ..config.test
    };

    let fit = |tree: ReportingTree, kind: SystemKind, fallback: bool| -> Result<ParticipatorySystem> {
        let mut tree = tree;
        assign_with_table(&mut tree, pool, &assign_table, &bundle.assign, assign_metric)?;
        prune_with_table(&mut tree, &prune_table, &bundle.prune, config.metric, config.alpha, &test);
        ParticipatorySystem::package(kind, tree, pool, bundle, config, fallback)
    };

    let mut systems = Vec::new();
    for &kind in &config.kinds {
        match kind {
            SystemKind::Minimal => systems.push(fit(build_minimal(schema), kind, false)?),
            SystemKind::Flat => systems.push(fit(build_flat(schema), kind, false)?),
            SystemKind::Greedy => {
                let tree = greedy_tree(bundle, pool, assign_metric)?;
                systems.push(fit(tree, kind, false)?);
            }
            SystemKind::Sequential => {
                let trees = enumerate_sequential(schema, &bundle.assign, &config.constraints)?;
                if trees.is_empty() {
                    warn!("no sequential tree satisfies the constraints; falling back to the flat interface");
                    let mut system = fit(build_flat(schema), kind, true)?;
                    system.selected = true;
                    systems.push(system);
                    continue;
                }
                let mut candidates: Vec<ParticipatorySystem> = trees
                    .into_par_iter()
                    .map(|t| fit(t, kind, false))
                    .collect::<Result<_>>()?;
                let risks: Vec<f64> = candidates
                    .iter()
                    .map(|s| s.weighted_risk(&bundle.prune).unwrap_or(f64::INFINITY))
                    .collect();
                let best = (0..candidates.len())
                    .min_by(|&a, &b| risks[a].total_cmp(&risks[b]).then(a.cmp(&b)))
                    .expect("nonempty");
                candidates[best].selected = true;
                systems.extend(candidates);
            }
        }
    }
    Ok(systems)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::ReportingGroup;
    use crate::synth;

    fn illustration_setup() -> (SplitBundle, ModelPool) {
        let d = synth::illustration_dataset();
        let bundle = SplitBundle::from_parts(d.clone(), d.clone(), d, 0);
        let (h, h0) = synth::illustration_models();
        let pool = ModelPool::new(bundle.assign.schema().clone(), vec![h, h0]).unwrap();
        (bundle, pool)
    }

    #[test]
    fn illustration_minimal_assignment_and_pruning() {
        let (bundle, pool) = illustration_setup();
        let mut tree = build_minimal(bundle.assign.schema());
        assign_models(&mut tree, &pool, &bundle.assign, Metric::Error).unwrap();
        let models: Vec<&str> = tree.nodes.iter().map(|n| n.model_id.as_deref().unwrap()).collect();
        assert_eq!(models, vec!["h0", "h0", "h", "h", "h0"]);
        prune_leaves(&mut tree, &pool, &bundle.prune, Metric::Error, 0.1, &TestConfig::default()).unwrap();
        let pruned: Vec<bool> = tree.nodes.iter().map(|n| n.pruned).collect();
        assert_eq!(pruned, vec![false, true, false, false, true]);
        let cert = tree.nodes[2].certificate.as_ref().unwrap();
        assert_eq!(cert.statistic, Some(23.04));
        assert_eq!(cert.gain, Some(1.0));
    }

    #[test]
    fn generic_everywhere_prunes_everything() {
        let (bundle, _) = illustration_setup();
        let (_, h0) = synth::illustration_models();
        let pool = ModelPool::new(bundle.assign.schema().clone(), vec![h0]).unwrap();
        let config = LearnConfig {
            kinds: vec![SystemKind::Flat],
            ..Default::default()
        };
        let systems = learn_systems(&bundle, &pool, &config).unwrap();
        assert!(systems[0].tree.nodes[1..].iter().all(|n| n.pruned));
    }

    /// Chain a → (a, b): only the deepest node improves, by a wide margin.
    #[test]
    fn chain_keeps_ancestor_of_a_surviving_leaf() {
        let schema = crate::dataset::GroupSchema::from_pairs(&[("a", &["0", "1"]), ("b", &["0", "1"])]).unwrap();
        let mut groups = Vec::new();
        let mut labels = Vec::new();
        for (g, n, rate_pos) in [([0, 0], 60, 0), ([0, 1], 60, 60), ([1, 0], 60, 0), ([1, 1], 60, 0)] {
            for i in 0..n {
                groups.push(g.to_vec());
                labels.push(u8::from(i < rate_pos));
            }
        }
        let features = (0..labels.len()).map(|i| vec![i as f64]).collect();
        let d = Dataset::new(schema.clone(), vec!["x".into()], features, labels, groups).unwrap();
        let zero = |id: &str, required: Vec<usize>, table: Vec<(Vec<usize>, f64)>| {
            crate::models::TrainedModel::fixed(
                crate::models::ModelSpec::fixed(id, required, ReportingGroup::root(2)),
                crate::models::FixedRule::new(0.0, table).unwrap(),
                &schema,
                1,
            )
            .unwrap()
        };
        let generic = zero("generic", vec![], vec![]);
        let deep = zero("deep", vec![0, 1], vec![(vec![0, 1], 1.0)]);
        let pool = ModelPool::new(schema.clone(), vec![generic, deep]).unwrap();

        let mut tree = ReportingTree::new(crate::interface::TreeKind::Sequential, 2);
        let a = tree.add_child(0, ReportingGroup(vec![Some(0), None]));
        tree.add_child(0, ReportingGroup(vec![Some(1), None]));
        tree.add_child(a, ReportingGroup(vec![Some(0), Some(0)]));
        let leaf = tree.add_child(a, ReportingGroup(vec![Some(0), Some(1)]));
        assign_models(&mut tree, &pool, &d, Metric::Error).unwrap();
        assert_eq!(tree.nodes[a].model_id.as_deref(), Some("generic"));
        prune_leaves(&mut tree, &pool, &d, Metric::Error, 0.1, &TestConfig::default()).unwrap();
        assert!(!tree.nodes[leaf].pruned);
        assert!(!tree.nodes[a].pruned);
        assert_eq!(tree.nodes[a].certificate.as_ref().unwrap().basis, CertificateBasis::Subtree);
    }
}
