use serde::{Deserialize, Serialize};

use super::LearnConfig;
use crate::dataset::{Dataset, GroupSchema, ReportingGroup, SplitBundle};
use crate::error::{Error, Result};
use crate::models::{predict_label, Metric, TrainedModel};
use crate::pool::ModelPool;
use crate::interface::ReportingTree;

pub const ARTIFACT_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SystemKind {
    Minimal,
    Flat,
    Sequential,
    Greedy,
}

impl SystemKind {
    pub fn name(self) -> &'static str {
        match self {
            SystemKind::Minimal => "minimal",
            SystemKind::Flat => "flat",
            SystemKind::Sequential => "sequential",
            SystemKind::Greedy => "greedy",
        }
    }
}

impl std::str::FromStr for SystemKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "minimal" => Ok(SystemKind::Minimal),
            "flat" => Ok(SystemKind::Flat),
            "sequential" => Ok(SystemKind::Sequential),
            "greedy" => Ok(SystemKind::Greedy),
            other => Err(Error::InvalidArgument(format!("unknown system kind `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub dataset_hash: String,
    pub schema_hash: String,
    pub seed: u64,
    pub toolkit_version: String,
}

/// Pruning-split risk of each node's model for each full group, indexed
/// `[group][node]`; `None` where the node does not apply to the group or the
/// risk is undefined. Group-level risks fall back to the node's own risk when
/// the group has no pruning rows.
pub type DisplayedRisks = Vec<Vec<Option<f64>>>;

/// A learned reporting tree with the models it serves.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParticipatorySystem {
    pub format_version: u32,
    pub kind: SystemKind,
    pub schema: GroupSchema,
    pub feature_names: Vec<String>,
    pub metric: Metric,
    pub alpha: f64,
    pub tree: ReportingTree,
    /// Models referenced by the tree, sorted by id.
    pub models: Vec<TrainedModel>,
    pub displayed_risks: DisplayedRisks,
    pub provenance: Provenance,
    /// Chosen among the candidates of one kind.
    pub selected: bool,
    /// Sequential learning found no viable tree and used the flat interface.
    pub fallback: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub score: f64,
    pub label: u8,
    pub node: usize,
    pub model_id: String,
}

impl ParticipatorySystem {
    pub(crate) fn package(
        kind: SystemKind,
        tree: ReportingTree,
        pool: &ModelPool,
        bundle: &SplitBundle,
        config: &LearnConfig,
        fallback: bool,
    ) -> Result<Self> {
        let mut ids: Vec<&str> = tree.nodes.iter().filter_map(|n| n.model_id.as_deref()).collect();
        ids.sort_unstable();
        ids.dedup();
        let models = ids
            .iter()
            .map(|id| pool.get(id).cloned().ok_or_else(|| Error::UnknownModel(id.to_string())))
            .collect::<Result<Vec<_>>>()?;
        let schema = bundle.assign.schema().clone();
        let mut system = Self {
            format_version: ARTIFACT_FORMAT_VERSION,
            kind,
            feature_names: bundle.assign.feature_names().to_vec(),
            metric: config.metric,
            alpha: config.alpha,
            tree,
            models,
            displayed_risks: Vec::new(),
            provenance: Provenance {
                dataset_hash: bundle.content_hash(),
                schema_hash: schema.content_hash(),
                seed: config.seed,
                toolkit_version: crate::VERSION.to_string(),
            },
            schema,
            selected: kind != SystemKind::Sequential,
            fallback,
        };
        system.displayed_risks = system.group_node_risks(&bundle.prune)?;
        system.validate()?;
        Ok(system)
    }

    /// Risk of every node's model for every full group on `d`, as in [`DisplayedRisks`].
    pub fn group_node_risks(&self, d: &Dataset) -> Result<DisplayedRisks> {
        let scores: Vec<Vec<f64>> = self.models.iter().map(|m| m.predict_scores(d)).collect::<Result<_>>()?;
        let model_scores = |node: usize| {
            let id = self.tree.nodes[node].model_id.as_deref().unwrap_or_default();
            let i = self.models.binary_search_by(|m| m.spec.id.as_str().cmp(id)).expect("referenced");
            &scores[i]
        };
        let node_rows: Vec<Vec<usize>> = self.tree.nodes.iter().map(|n| d.rows_matching(&n.report)).collect();
        Ok(self
            .schema
            .full_groups()
            .iter()
            .map(|g| {
                let rows = d.rows_matching(&ReportingGroup::full(g));
                self.tree
                    .nodes
                    .iter()
                    .enumerate()
                    .map(|(v, node)| {
                        if !node.report.matches(g) {
                            return None;
                        }
                        let s = model_scores(v);
                        self.metric
                            .risk_on(s, d.labels(), &rows)
                            .or_else(|| self.metric.risk_on(s, d.labels(), &node_rows[v]))
                    })
                    .collect()
            })
            .collect())
    }

    pub fn displayed_risk(&self, group: &[usize], node: usize) -> Option<f64> {
        self.displayed_risks[self.schema.group_index(group)][node]
    }

    pub fn model(&self, id: &str) -> Option<&TrainedModel> {
        self.models
            .binary_search_by(|m| m.spec.id.as_str().cmp(id))
            .ok()
            .map(|i| &self.models[i])
    }

    pub fn node_model(&self, node: usize) -> &TrainedModel {
        let id = self.tree.nodes[node].model_id.as_deref().expect("validated system");
        self.model(id).expect("validated system")
    }

    pub fn root_model(&self) -> &TrainedModel {
        self.node_model(0)
    }

    /// Serving node for a report: its deepest surviving ancestor-or-self.
    pub fn dispatch(&self, report: &ReportingGroup) -> usize {
        self.tree.dispatch(report)
    }

    /// Surviving child options of `node`.
    pub fn options(&self, node: usize) -> Vec<usize> {
        self.tree.surviving_children(node).collect()
    }

    pub fn surviving_nodes(&self) -> Vec<usize> {
        (0..self.tree.len()).filter(|&v| !self.tree.nodes[v].pruned).collect()
    }

    /// Predict at `node`; the model only sees the attributes reported there.
    pub fn predict_at(&self, x: &[f64], node: usize) -> Result<Prediction> {
        let model = self.node_model(node);
        let score = model.predict_row(&self.schema, x, self.tree.nodes[node].report.entries())?;
        Ok(Prediction {
            score,
            label: predict_label(score),
            node,
            model_id: model.spec.id.clone(),
        })
    }

    pub fn predict(&self, x: &[f64], report: &ReportingGroup) -> Result<Prediction> {
        self.schema.check_report(report)?;
        self.predict_at(x, self.dispatch(report))
    }

    /// Serving node per row when every row reports its full membership.
    pub fn full_report_nodes(&self, d: &Dataset) -> Vec<usize> {
        d.groups().iter().map(|g| self.dispatch(&ReportingGroup::full(g))).collect()
    }

    /// Score of each row of `d` served at the given node.
    pub fn scores_at(&self, d: &Dataset, nodes: &[usize]) -> Result<Vec<f64>> {
        d.features()
            .iter()
            .zip(nodes)
            .map(|(x, &v)| Ok(self.predict_at(x, v)?.score))
            .collect()
    }

    /// Group-weighted risk on `d` under full truthful reporting.
    pub fn weighted_risk(&self, d: &Dataset) -> Option<f64> {
        let scores = self.scores_at(d, &self.full_report_nodes(d)).ok()?;
        crate::metrics::group_weighted_risk(d, &scores, self.metric)
    }

    /// Structural and certification invariants of a participatory system.
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidArtifact(msg));
        if self.format_version != ARTIFACT_FORMAT_VERSION {
            return bad(format!("unsupported format_version {}", self.format_version));
        }
        if self.schema.content_hash() != self.provenance.schema_hash {
            return bad("schema hash does not match provenance".into());
        }
        self.tree.validate_structure(&self.schema)?;
        if self.models.windows(2).any(|w| w[0].spec.id >= w[1].spec.id) {
            return bad("model registry must be sorted by unique id".into());
        }
        for m in &self.models {
            m.spec.validate(&self.schema)?;
            if m.n_features != self.feature_names.len() {
                return bad(format!("model `{}` expects {} features", m.spec.id, m.n_features));
            }
        }
        for (v, node) in self.tree.nodes.iter().enumerate() {
            let Some(id) = node.model_id.as_deref() else {
                return bad(format!("node {v} has no model"));
            };
            let Some(model) = self.model(id) else {
                return Err(Error::UnknownModel(id.to_string()));
            };
            if !model.spec.is_viable_for(&node.report) {
                return bad(format!("model `{id}` is not viable at node {v}"));
            }
            let Some(p) = node.parent else {
                if !model.spec.required_attributes.is_empty() {
                    return bad("the root model must not require group attributes".into());
                }
                if node.pruned {
                    return bad("the root cannot be pruned".into());
                }
                continue;
            };
            if node.pruned {
                continue;
            }
            if self.tree.nodes[p].pruned {
                return bad(format!("node {v} survives below a pruned parent"));
            }
            match &node.certificate {
                Some(c) if c.is_kept_at(self.alpha) => {}
                _ => return bad(format!("surviving node {v} lacks a kept certificate")),
            }
        }
        if self.displayed_risks.len() != self.schema.n_groups()
            || self.displayed_risks.iter().any(|row| row.len() != self.tree.len())
        {
            return bad("displayed risk table has the wrong shape".into());
        }
        Ok(())
    }

    /// Pretty JSON with a trailing newline; byte-identical for identical systems.
    pub fn to_json(&self) -> Result<String> {
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        Ok(text)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let value: serde_json::Value = serde_json::from_str(text)?;
        match value.get("format_version").and_then(serde_json::Value::as_u64) {
            Some(v) if v == u64::from(ARTIFACT_FORMAT_VERSION) => {}
            other => return Err(Error::InvalidArtifact(format!("unsupported format_version {other:?}"))),
        }
        let system: Self = serde_json::from_value(value)?;
        system.validate()?;
        Ok(system)
    }
}
