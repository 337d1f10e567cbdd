//! Base classifiers that populate a model pool.

pub mod forest;
pub mod logistic;
mod metric;

pub use metric::{auc, predict_label, Metric, THRESHOLD};
pub(crate) use metric::midranks;

use log::warn;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dataset::{hex_digest, Dataset, Encoding, GroupSchema, ReportingGroup};
use crate::error::{Error, Result};
use forest::{DecisionTree, ForestParams};
use logistic::LogisticParams;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Generic,
    Onehot,
    Intersectional,
    Subgroup,
    Fixed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelClass {
    Logistic,
    Forest,
    FixedRule,
}

impl ModelClass {
    pub fn name(self) -> &'static str {
        match self {
            ModelClass::Logistic => "logistic",
            ModelClass::Forest => "forest",
            ModelClass::FixedRule => "fixed_rule",
        }
    }
}

impl std::str::FromStr for ModelClass {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "logistic" => Ok(ModelClass::Logistic),
            "forest" => Ok(ModelClass::Forest),
            "fixed_rule" | "fixed" => Ok(ModelClass::FixedRule),
            other => Err(Error::InvalidArgument(format!("unknown model class `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Hyperparameters {
    pub logistic: LogisticParams,
    pub forest: ForestParams,
}

/// What to train, on which rows, and which group attributes the model reads.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub id: String,
    pub kind: ModelKind,
    /// Sorted attribute indices the model needs at prediction time.
    pub required_attributes: Vec<usize>,
    /// Rows the model is trained on; all-∅ means everyone.
    pub training_scope: ReportingGroup,
    pub encoding: Encoding,
    pub model_class: ModelClass,
    pub hyperparameters: Hyperparameters,
}

impl ModelSpec {
    pub fn generic(class: ModelClass, k: usize) -> Self {
        Self {
            id: format!("{}:generic", class.name()),
            kind: ModelKind::Generic,
            required_attributes: Vec::new(),
            training_scope: ReportingGroup::root(k),
            encoding: Encoding::None,
            model_class: class,
            hyperparameters: Hyperparameters::default(),
        }
    }

    pub fn onehot(class: ModelClass, k: usize) -> Self {
        Self {
            id: format!("{}:onehot", class.name()),
            kind: ModelKind::Onehot,
            required_attributes: (0..k).collect(),
            training_scope: ReportingGroup::root(k),
            encoding: Encoding::Onehot,
            model_class: class,
            hyperparameters: Hyperparameters::default(),
        }
    }

    pub fn intersectional(class: ModelClass, k: usize) -> Self {
        Self {
            id: format!("{}:intersectional", class.name()),
            kind: ModelKind::Intersectional,
            required_attributes: (0..k).collect(),
            training_scope: ReportingGroup::root(k),
            encoding: Encoding::Intersectional,
            model_class: class,
            hyperparameters: Hyperparameters::default(),
        }
    }

    /// A model trained only on rows matching `scope`.
    pub fn subgroup(class: ModelClass, scope: ReportingGroup) -> Self {
        let tag: Vec<String> = scope
            .entries()
            .iter()
            .map(|e| e.map_or_else(|| "*".to_string(), |l| l.to_string()))
            .collect();
        Self {
            id: format!("{}:subgroup:{}", class.name(), tag.join(".")),
            kind: ModelKind::Subgroup,
            required_attributes: scope.reported(),
            training_scope: scope,
            encoding: Encoding::None,
            model_class: class,
            hyperparameters: Hyperparameters::default(),
        }
    }

    pub fn fixed(id: &str, mut required: Vec<usize>, scope: ReportingGroup) -> Self {
        required.sort_unstable();
        required.dedup();
        Self {
            id: id.to_string(),
            kind: ModelKind::Fixed,
            required_attributes: required,
            training_scope: scope,
            encoding: Encoding::None,
            model_class: ModelClass::FixedRule,
            hyperparameters: Hyperparameters::default(),
        }
    }

    pub fn validate(&self, schema: &GroupSchema) -> Result<()> {
        schema.check_report(&self.training_scope)?;
        let bad = |msg: &str| Err(Error::InvalidArgument(format!("model `{}`: {msg}", self.id)));
        if self.required_attributes.iter().any(|&a| a >= schema.k()) {
            return bad("required attribute out of range");
        }
        if self.kind == ModelKind::Generic && (!self.required_attributes.is_empty() || self.encoding != Encoding::None) {
            return bad("generic models use no group attributes");
        }
        if self.kind == ModelKind::Subgroup && self.training_scope.is_root() {
            return bad("subgroup models need a reported training scope");
        }
        if self.encoding != Encoding::None && self.required_attributes.len() != schema.k() {
            return bad("group encodings require every attribute");
        }
        if (self.model_class == ModelClass::FixedRule) != (self.kind == ModelKind::Fixed) {
            return bad("fixed kind and fixed_rule class go together");
        }
        Ok(())
    }

    /// Every reported attribute of the scope must be required too.
    pub fn is_viable_for(&self, report: &ReportingGroup) -> bool {
        self.required_attributes.iter().all(|&a| report.0[a].is_some()) && self.training_scope.is_subset_of(report)
    }
}

/// Lookup table from the levels of the required attributes to a score.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixedRule {
    pub default_score: f64,
    pub table: Vec<FixedRuleEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixedRuleEntry {
    pub levels: Vec<usize>,
    pub score: f64,
}

impl FixedRule {
    pub fn new(default_score: f64, table: Vec<(Vec<usize>, f64)>) -> Result<Self> {
        let in_range = |s: f64| (0.0..=1.0).contains(&s);
        if !in_range(default_score) || table.iter().any(|(_, s)| !in_range(*s)) {
            return Err(Error::InvalidArgument("fixed-rule scores must lie in [0, 1]".into()));
        }
        Ok(Self {
            default_score,
            table: table
                .into_iter()
                .map(|(levels, score)| FixedRuleEntry { levels, score })
                .collect(),
        })
    }

    fn score(&self, key: &[usize]) -> f64 {
        self.table
            .iter()
            .find(|e| e.levels == key)
            .map_or(self.default_score, |e| e.score)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ModelParams {
    Logistic { intercept: f64, coefficients: Vec<f64> },
    Forest { trees: Vec<DecisionTree> },
    FixedRule(FixedRule),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fingerprint {
    pub data_hash: String,
    pub seed: u64,
    pub n_rows: usize,
}

/// A fitted classifier `h(x, g)` with its spec and parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedModel {
    pub spec: ModelSpec,
    pub params: ModelParams,
    pub fingerprint: Fingerprint,
    /// Raw feature width (before group encoding).
    pub n_features: usize,
    /// False when training stopped at the iteration cap.
    pub converged: bool,
}

impl TrainedModel {
    pub fn fixed(spec: ModelSpec, rule: FixedRule, schema: &GroupSchema, n_features: usize) -> Result<Self> {
        spec.validate(schema)?;
        if rule.table.iter().any(|e| e.levels.len() != spec.required_attributes.len()) {
            return Err(Error::InvalidArgument(format!(
                "model `{}`: rule keys must list one level per required attribute",
                spec.id
            )));
        }
        Ok(Self {
            spec,
            params: ModelParams::FixedRule(rule),
            fingerprint: Fingerprint {
                data_hash: String::new(),
                seed: 0,
                n_rows: 0,
            },
            n_features,
            converged: true,
        })
    }

    pub fn id(&self) -> &str {
        &self.spec.id
    }

    /// Score one row. `group` must report every required attribute.
    pub fn predict_row(&self, schema: &GroupSchema, x: &[f64], group: &[Option<usize>]) -> Result<f64> {
        if x.len() != self.n_features {
            return Err(Error::ShapeMismatch {
                expected: self.n_features,
                found: x.len(),
            });
        }
        let required: Option<Vec<usize>> = self.spec.required_attributes.iter().map(|&a| group[a]).collect();
        let Some(key) = required else {
            return Err(Error::PartialInput);
        };
        let score = match &self.params {
            ModelParams::FixedRule(rule) => rule.score(&key),
            ModelParams::Logistic { intercept, coefficients } => {
                let z = self.encoded(schema, x, group)?;
                logistic::sigmoid(intercept + z.iter().zip(coefficients).map(|(a, b)| a * b).sum::<f64>())
            }
            ModelParams::Forest { trees } => forest::predict(trees, &self.encoded(schema, x, group)?),
        };
        Ok(score)
    }

    fn encoded(&self, schema: &GroupSchema, x: &[f64], group: &[Option<usize>]) -> Result<Vec<f64>> {
        match self.spec.encoding {
            Encoding::None => Ok(x.to_vec()),
            enc => {
                let full: Vec<usize> = group.iter().copied().collect::<Option<_>>().ok_or(Error::PartialInput)?;
                Ok(enc.encode_row(schema, x, &full))
            }
        }
    }

    /// Scores for every row of `d` using each row's full membership.
    pub fn predict_scores(&self, d: &Dataset) -> Result<Vec<f64>> {
        if d.d() != self.n_features {
            return Err(Error::ShapeMismatch {
                expected: self.n_features,
                found: d.d(),
            });
        }
        d.features()
            .iter()
            .zip(d.groups())
            .map(|(x, g)| {
                let report: Vec<Option<usize>> = g.iter().copied().map(Some).collect();
                self.predict_row(d.schema(), x, &report)
            })
            .collect()
    }
}

/// Check the training preconditions of `spec` on `d`.
pub fn check_trainable(spec: &ModelSpec, d: &Dataset) -> Result<()> {
    let scoped = d.restrict_to(&spec.training_scope);
    let width = spec.encoding.width(d.schema(), d.d());
    let insufficient = |reason: String| {
        Err(Error::InsufficientData {
            model: spec.id.clone(),
            reason,
        })
    };
    if scoped.n_positive() == 0 || scoped.n_negative() == 0 {
        return insufficient(format!(
            "{} positives and {} negatives in scope",
            scoped.n_positive(),
            scoped.n_negative()
        ));
    }
    if scoped.n() < width + 1 {
        return insufficient(format!("{} rows for width {width}", scoped.n()));
    }
    Ok(())
}

/// Train `spec` on the rows of `d` inside its training scope.
pub fn train_model(spec: &ModelSpec, d: &Dataset, seed: u64) -> Result<TrainedModel> {
    spec.validate(d.schema())?;
    if spec.model_class == ModelClass::FixedRule {
        return Err(Error::InvalidArgument(format!(
            "fixed-rule model `{}` is supplied, not trained",
            spec.id
        )));
    }
    check_trainable(spec, d)?;
    let scoped = d.restrict_to(&spec.training_scope);
    let x = crate::dataset::encode_features(&scoped, spec.encoding);
    let y = scoped.labels();
    let mut hasher = Sha256::new();
    hasher.update(scoped.content_hash().as_bytes());
    hasher.update(spec.id.as_bytes());
    let fingerprint = Fingerprint {
        data_hash: hex_digest(hasher),
        seed,
        n_rows: scoped.n(),
    };
    let (params, converged) = match spec.model_class {
        ModelClass::Logistic => {
            let fit = logistic::fit(&x, y, &spec.hyperparameters.logistic);
            if !fit.converged {
                warn!("logistic model `{}` stopped at the iteration cap", spec.id);
            }
            (
                ModelParams::Logistic {
                    intercept: fit.intercept,
                    coefficients: fit.coefficients,
                },
                fit.converged,
            )
        }
        ModelClass::Forest => (
            ModelParams::Forest {
                trees: forest::fit(&x, y, &spec.hyperparameters.forest, seed),
            },
            true,
        ),
        ModelClass::FixedRule => unreachable!("rejected above"),
    };
    Ok(TrainedModel {
        spec: spec.clone(),
        params,
        fingerprint,
        n_features: d.d(),
        converged,
    })
}

/// Empirical risk of `m` on `d`.
pub fn empirical_risk(m: &TrainedModel, d: &Dataset, metric: Metric) -> Result<f64> {
    metric.risk(&m.predict_scores(d)?, d.labels())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::GroupSchema;
    use crate::synth;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn illustration_fixed_models_reproduce_group_errors() {
        let d = synth::illustration_dataset();
        let (h, h0) = synth::illustration_models();
        let female_old = d.restrict_to(&ReportingGroup(vec![Some(0), Some(0)]));
        assert_eq!(empirical_risk(&h, &female_old, Metric::Error).unwrap(), 1.0);
        assert_eq!(empirical_risk(&h0, &d, Metric::Error).unwrap(), 50.0 / 101.0);
        assert_eq!(empirical_risk(&h, &d, Metric::Error).unwrap(), 24.0 / 101.0);
    }

    #[test]
    fn fixed_rule_and_zero_logistic_scores() {
        let d = synth::illustration_dataset();
        let schema = d.schema().clone();
        let zero = TrainedModel::fixed(
            ModelSpec::fixed("zero", vec![0, 1], ReportingGroup::root(2)),
            FixedRule::new(0.0, vec![]).unwrap(),
            &schema,
            1,
        )
        .unwrap();
        assert!(zero.predict_scores(&d).unwrap().iter().all(|&s| s == 0.0));

        let mut flat = train_model(&ModelSpec::generic(ModelClass::Logistic, 2), &d, 0).unwrap();
        flat.params = ModelParams::Logistic {
            intercept: 0.0,
            coefficients: vec![0.0],
        };
        assert!(flat.predict_scores(&d).unwrap().iter().all(|&s| s == 0.5));
    }

    #[test]
    fn insufficient_data_is_reported() {
        let d = synth::illustration_dataset();
        let all_positive = ModelSpec::subgroup(ModelClass::Logistic, ReportingGroup(vec![Some(1), Some(0)]));
        assert!(matches!(train_model(&all_positive, &d, 0), Err(Error::InsufficientData { .. })));
    }

    #[test]
    fn separable_pair_trains_to_full_accuracy() {
        let schema = GroupSchema::from_pairs(&[("a", &["x", "y"])]).unwrap();
        let d = Dataset::new(
            schema,
            vec!["f".into()],
            vec![vec![-1.0], vec![1.0]],
            vec![0, 1],
            vec![vec![0], vec![1]],
        )
        .unwrap();
        let m = train_model(&ModelSpec::generic(ModelClass::Logistic, 1), &d, 0).unwrap();
        assert_eq!(empirical_risk(&m, &d, Metric::Error).unwrap(), 0.0);
    }

    #[test]
    fn logistic_recovers_coefficient_signs() {
        let schema = GroupSchema::from_pairs(&[("a", &["x", "y"])]).unwrap();
        let truth = [2.0, -1.5, 0.8];
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let mut features = Vec::new();
        let mut labels = Vec::new();
        let mut groups = Vec::new();
        for _ in 0..200 {
            let x: Vec<f64> = (0..3).map(|_| rng.random_range(-2.0..2.0)).collect();
            let z: f64 = 0.3 + x.iter().zip(&truth).map(|(a, b)| a * b).sum::<f64>();
            labels.push(u8::from(rng.random::<f64>() < logistic::sigmoid(z)));
            features.push(x);
            groups.push(vec![rng.random_range(0..2)]);
        }
        let d = Dataset::new(schema, vec!["a".into(), "b".into(), "c".into()], features, labels, groups).unwrap();
        let m = train_model(&ModelSpec::generic(ModelClass::Logistic, 1), &d, 0).unwrap();
        let ModelParams::Logistic { coefficients, .. } = &m.params else {
            panic!("expected logistic parameters");
        };
        for (c, t) in coefficients.iter().zip(&truth) {
            assert_eq!(c.signum(), t.signum());
        }
    }

    #[test]
    fn training_is_deterministic_and_serialization_preserves_scores() {
        let d = synth::random_task(5, &synth::TaskOptions::default()).data;
        for class in [ModelClass::Logistic, ModelClass::Forest] {
            let spec = ModelSpec::onehot(class, d.schema().k());
            let a = train_model(&spec, &d, 9).unwrap();
            let b = train_model(&spec, &d, 9).unwrap();
            assert_eq!(a, b);
            let text = serde_json::to_string(&a).unwrap();
            let back: TrainedModel = serde_json::from_str(&text).unwrap();
            let sa = a.predict_scores(&d).unwrap();
            let sb = back.predict_scores(&d).unwrap();
            assert!(sa.iter().zip(&sb).all(|(x, y)| x.to_bits() == y.to_bits()));
            assert!(sa.iter().all(|s| (0.0..=1.0).contains(s)));
        }
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let (h, _) = synth::illustration_models();
        let schema = synth::illustration_dataset().schema().clone();
        assert!(matches!(
            h.predict_row(&schema, &[1.0, 2.0], &[Some(0), Some(0)]),
            Err(Error::ShapeMismatch { .. })
        ));
        assert!(matches!(h.predict_row(&schema, &[1.0], &[Some(0), None]), Err(Error::PartialInput)));
    }
}
