//! The candidate model pool and viability filtering.

use std::collections::{BTreeMap, BTreeSet};

use log::info;
use rayon::prelude::*;

use crate::dataset::{Dataset, GroupSchema, ReportingGroup, SplitBundle};
use crate::error::{Error, Result};
use crate::models::{train_model, Metric, ModelClass, ModelKind, ModelSpec, TrainedModel};

/// Candidate models `ℳ`, kept sorted by id.
#[derive(Debug, Clone)]
pub struct ModelPool {
    schema: GroupSchema,
    models: Vec<TrainedModel>,
}

impl ModelPool {
    /// Requires unique ids and at least one model that needs no group attributes.
    pub fn new(schema: GroupSchema, mut models: Vec<TrainedModel>) -> Result<Self> {
        for m in &models {
            m.spec.validate(&schema)?;
        }
        models.sort_by(|a, b| a.spec.id.cmp(&b.spec.id));
        if let Some(w) = models.windows(2).find(|w| w[0].spec.id == w[1].spec.id) {
            return Err(Error::InvalidArgument(format!("duplicate model id `{}`", w[0].spec.id)));
        }
        if !models
            .iter()
            .any(|m| m.spec.required_attributes.is_empty() && m.spec.training_scope.is_root())
        {
            return Err(Error::InvalidArgument(
                "the pool needs a model that requires no group attributes".into(),
            ));
        }
        Ok(Self { schema, models })
    }

    pub fn schema(&self) -> &GroupSchema {
        &self.schema
    }

    pub fn models(&self) -> &[TrainedModel] {
        &self.models
    }

    pub fn len(&self) -> usize {
        self.models.len()
    }

    pub fn is_empty(&self) -> bool {
        self.models.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&TrainedModel> {
        self.models
            .binary_search_by(|m| m.spec.id.as_str().cmp(id))
            .ok()
            .map(|i| &self.models[i])
    }
}

#[derive(Debug, Clone)]
pub struct PoolConfig {
    /// Train subgroup models for partially reported groups as well as full ones.
    pub include_partial_groups: bool,
    /// Externally specified models joining the pool as-is.
    pub fixed_models: Vec<TrainedModel>,
}

impl Default for PoolConfig {
    fn default() -> Self {
        Self {
            include_partial_groups: true,
            fixed_models: Vec::new(),
        }
    }
}

/// Specs the pool tries to train for one model class.
pub fn pool_specs(schema: &GroupSchema, class: ModelClass, include_partial_groups: bool) -> Vec<ModelSpec> {
    let k = schema.k();
    let mut specs = vec![
        ModelSpec::generic(class, k),
        ModelSpec::onehot(class, k),
        ModelSpec::intersectional(class, k),
    ];
    for r in schema.all_reports() {
        if r.is_root() || (!include_partial_groups && !r.is_full()) {
            continue;
        }
        specs.push(ModelSpec::subgroup(class, r));
    }
    specs
}

/// Train the pool on the assignment split.
///
/// Specs whose training preconditions fail are skipped and logged; only a
/// failing generic model is an error.
pub fn build_pool(bundle: &SplitBundle, classes: &[ModelClass], config: &PoolConfig, seed: u64) -> Result<ModelPool> {
    let data = &bundle.assign;
    let schema = data.schema();
    let classes: BTreeSet<ModelClass> = classes.iter().copied().collect();
    let specs: Vec<ModelSpec> = classes
        .iter()
        .filter(|&&c| c != ModelClass::FixedRule)
        .flat_map(|&c| pool_specs(schema, c, config.include_partial_groups))
        .collect();

    let trained: Vec<(ModelSpec, Result<TrainedModel>)> = specs
        .into_par_iter()
        .map(|spec| {
            let result = train_model(&spec, data, crate::derive_seed(seed, &spec.id));
            (spec, result)
        })
        .collect();

    let mut models = Vec::new();
    for (spec, result) in trained {
        match result {
            Ok(m) => models.push(m),
            Err(e @ Error::InsufficientData { .. }) if spec.kind == ModelKind::Generic => return Err(e),
            Err(e) => info!("skipping `{}`: {e}", spec.id),
        }
    }
    if classes.contains(&ModelClass::FixedRule) {
        for m in &config.fixed_models {
            if m.n_features != data.d() {
                return Err(Error::ShapeMismatch {
                    expected: data.d(),
                    found: m.n_features,
                });
            }
        }
        models.extend(config.fixed_models.iter().cloned());
    }
    ModelPool::new(schema.clone(), models)
}

/// Models that may serve report `r`: every required attribute is reported and
/// the training scope agrees with `r`.
pub fn viable_models<'a>(pool: &'a ModelPool, r: &ReportingGroup) -> Vec<&'a TrainedModel> {
    pool.models().iter().filter(|m| m.spec.is_viable_for(r)).collect()
}

/// Every pool model's scores on one dataset, computed once.
#[derive(Debug, Clone)]
pub struct ScoreTable {
    scores: BTreeMap<String, Vec<f64>>,
}

impl ScoreTable {
    pub fn new(pool: &ModelPool, d: &Dataset) -> Result<Self> {
        let scores = pool
            .models()
            .par_iter()
            .map(|m| Ok((m.spec.id.clone(), m.predict_scores(d)?)))
            .collect::<Result<_>>()?;
        Ok(Self { scores })
    }

    pub fn scores(&self, id: &str) -> &[f64] {
        &self.scores[id]
    }

    /// Risk of model `id` on a subset of rows; `None` when empty or undefined.
    pub fn risk(&self, id: &str, labels: &[u8], rows: &[usize], metric: Metric) -> Option<f64> {
        metric.risk_on(self.scores(id), labels, rows)
    }
}

/// Ordering used to pick among equally good models: fewer required
/// attributes, then generic kinds, then id.
pub(crate) fn preference_key(m: &TrainedModel) -> (usize, bool, &str) {
    (m.spec.required_attributes.len(), m.spec.kind != ModelKind::Generic, m.spec.id.as_str())
}

/// The viable model with the lowest risk on `rows`, with its risk.
/// `None` when every viable model's risk is undefined there.
pub fn best_viable<'a>(
    pool: &'a ModelPool,
    table: &ScoreTable,
    labels: &[u8],
    r: &ReportingGroup,
    rows: &[usize],
    metric: Metric,
) -> Option<(&'a TrainedModel, f64)> {
    viable_models(pool, r)
        .into_iter()
        .filter_map(|m| table.risk(&m.spec.id, labels, rows, metric).map(|risk| (m, risk)))
        .min_by(|(a, ra), (b, rb)| ra.total_cmp(rb).then_with(|| preference_key(a).cmp(&preference_key(b))))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{split_dataset, SplitOptions};
    use crate::synth;

    fn two_binary_task() -> SplitBundle {
        let options = synth::TaskOptions {
            n: 800,
            max_attributes: 2,
            max_levels: 2,
            group_effect: 0.5,
            ..Default::default()
        };
        let task = (0..)
            .map(|s| synth::random_task(s, &options))
            .find(|t| t.data.schema().k() == 2)
            .unwrap();
        split_dataset(&task.data, SplitOptions::default()).unwrap()
    }

    #[test]
    fn pool_has_eleven_models_on_two_binary_attributes() {
        let bundle = two_binary_task();
        let pool = build_pool(&bundle, &[ModelClass::Logistic], &PoolConfig::default(), 0).unwrap();
        let kinds: Vec<ModelKind> = pool.models().iter().map(|m| m.spec.kind).collect();
        assert_eq!(pool.len(), 11);
        assert_eq!(kinds.iter().filter(|&&k| k == ModelKind::Subgroup).count(), 8);
        let full_only = PoolConfig {
            include_partial_groups: false,
            ..Default::default()
        };
        assert_eq!(build_pool(&bundle, &[ModelClass::Logistic], &full_only, 0).unwrap().len(), 7);
    }

    #[test]
    fn viability_on_a_partial_report() {
        let bundle = two_binary_task();
        let pool = build_pool(&bundle, &[ModelClass::Logistic], &PoolConfig::default(), 0).unwrap();
        let root: Vec<&str> = viable_models(&pool, &ReportingGroup::root(2)).iter().map(|m| m.id()).collect();
        assert_eq!(root, vec!["logistic:generic"]);
        let female: Vec<&str> = viable_models(&pool, &ReportingGroup(vec![Some(0), None]))
            .iter()
            .map(|m| m.id())
            .collect();
        assert_eq!(female, vec!["logistic:generic", "logistic:subgroup:0.*"]);
        let full = viable_models(&pool, &ReportingGroup(vec![Some(0), Some(1)]));
        // generic, onehot, intersectional, [0,*], [*,1], [0,1]
        assert_eq!(full.len(), 6);
    }

    #[test]
    fn fixed_models_pass_through_and_pure_groups_are_skipped() {
        let d = synth::illustration_dataset();
        let bundle = SplitBundle::from_parts(d.clone(), d.clone(), d, 0);
        let (h, h0) = synth::illustration_models();
        let config = PoolConfig {
            fixed_models: vec![h, h0],
            ..Default::default()
        };
        let pool = build_pool(&bundle, &[ModelClass::FixedRule], &config, 0).unwrap();
        let ids: Vec<&str> = pool.models().iter().map(|m| m.id()).collect();
        assert_eq!(ids, vec!["h", "h0"]);

        let trained = build_pool(&bundle, &[ModelClass::Logistic], &PoolConfig::default(), 0).unwrap();
        assert!(trained.get("logistic:subgroup:1.0").is_none());
        assert!(trained.get("logistic:subgroup:0.*").is_some());
    }
}
