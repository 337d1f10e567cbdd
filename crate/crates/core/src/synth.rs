//! Synthetic datasets: the two-attribute illustration fixture and seeded random tasks.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::config::{FixedModelConfig, FixedRuleConfig, SchemaConfig};
use crate::dataset::{Dataset, GroupAttribute, GroupSchema};
use crate::models::{logistic::sigmoid, TrainedModel};

/// `(sex, age, positives, negatives)` for the four groups of the fixture.
pub const ILLUSTRATION_COUNTS: [(usize, usize, usize, usize); 4] = [(0, 0, 0, 24), (0, 1, 25, 0), (1, 0, 25, 0), (1, 1, 0, 27)];

pub fn illustration_schema() -> GroupSchema {
    GroupSchema::from_pairs(&[("sex", &["female", "male"]), ("age", &["old", "young"])]).expect("valid schema")
}

/// Schema config for the fixture, including the fixed models `h` and `h0`.
///
/// `h` predicts positive everywhere except for young males; `h0` ignores group
/// attributes and always predicts negative.
pub fn illustration_config() -> SchemaConfig {
    let mut config = SchemaConfig::from_schema(&illustration_schema(), "y", &["x"]);
    config.fixed_models = vec![
        FixedModelConfig {
            id: "h".into(),
            required: vec!["sex".into(), "age".into()],
            scope: Vec::new(),
            default_score: 1.0,
            rules: vec![FixedRuleConfig {
                levels: vec!["male".into(), "young".into()],
                score: 0.0,
            }],
        },
        FixedModelConfig {
            id: "h0".into(),
            required: Vec::new(),
            scope: Vec::new(),
            default_score: 0.0,
            rules: Vec::new(),
        },
    ];
    config
}

/// The 101-row fixture, rows in group order, one uninformative feature.
pub fn illustration_dataset() -> Dataset {
    let mut groups = Vec::new();
    let mut labels = Vec::new();
    for &(sex, age, pos, neg) in &ILLUSTRATION_COUNTS {
        for y in std::iter::repeat_n(1u8, pos).chain(std::iter::repeat_n(0u8, neg)) {
            groups.push(vec![sex, age]);
            labels.push(y);
        }
    }
    let features = (0..labels.len()).map(|i| vec![i as f64 / 100.0]).collect();
    Dataset::new(illustration_schema(), vec!["x".into()], features, labels, groups).expect("valid fixture")
}

/// `(h, h0)` for the fixture.
pub fn illustration_models() -> (TrainedModel, TrainedModel) {
    let mut models = illustration_config().fixed_models(1).expect("valid fixed models");
    let h0 = models.pop().expect("two models");
    let h = models.pop().expect("two models");
    (h, h0)
}

#[derive(Debug, Clone)]
pub struct TaskOptions {
    pub n: usize,
    pub max_attributes: usize,
    pub max_levels: usize,
    pub n_features: usize,
    /// Standard deviation of the per-group logit shift.
    pub group_effect: f64,
}

impl Default for TaskOptions {
    fn default() -> Self {
        Self {
            n: 1000,
            max_attributes: 3,
            max_levels: 3,
            n_features: 3,
            group_effect: 1.5,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Task {
    pub data: Dataset,
    pub config: SchemaConfig,
}

/// A random task: `1..=max_attributes` attributes with `2..=max_levels`
/// levels, Gaussian features, and labels drawn from a logit that adds a
/// per-group shift and a group-specific slope to a shared linear term.
pub fn random_task(seed: u64, options: &TaskOptions) -> Task {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let k = rng.random_range(1..=options.max_attributes.max(1));
    let attributes: Vec<GroupAttribute> = (0..k)
        .map(|a| {
            let levels = rng.random_range(2..=options.max_levels.max(2));
            GroupAttribute {
                name: format!("g{a}"),
                levels: (0..levels).map(|l| format!("v{l}")).collect(),
            }
        })
        .collect();
    let schema = GroupSchema::new(attributes).expect("valid schema");
    let n_groups = schema.n_groups();
    let weights: Vec<f64> = (0..n_groups).map(|_| rng.random_range(0.5..1.5)).collect();
    let total: f64 = weights.iter().sum();
    let shift: Vec<f64> = (0..n_groups).map(|_| gaussian(&mut rng) * options.group_effect).collect();
    let beta: Vec<f64> = (0..options.n_features).map(|_| gaussian(&mut rng)).collect();
    let slope: Vec<f64> = (0..n_groups).map(|_| 1.0 + 0.5 * gaussian(&mut rng)).collect();

    let mut features = Vec::with_capacity(options.n);
    let mut labels = Vec::with_capacity(options.n);
    let mut groups = Vec::with_capacity(options.n);
    for _ in 0..options.n {
        let mut u = rng.random::<f64>() * total;
        let mut g = 0;
        while g + 1 < n_groups && u >= weights[g] {
            u -= weights[g];
            g += 1;
        }
        let x: Vec<f64> = (0..options.n_features).map(|_| gaussian(&mut rng)).collect();
        let z = shift[g] + slope[g] * x.iter().zip(&beta).map(|(a, b)| a * b).sum::<f64>();
        labels.push(u8::from(rng.random::<f64>() < sigmoid(z)));
        features.push(x);
        groups.push(schema.group_from_index(g));
    }
    let names: Vec<String> = (0..options.n_features).map(|j| format!("x{j}")).collect();
    let refs: Vec<&str> = names.iter().map(String::as_str).collect();
    let config = SchemaConfig::from_schema(&schema, "y", &refs);
    let data = Dataset::new(schema, names, features, labels, groups).expect("valid task");
    Task { data, config }
}

/// A two-attribute task on which an additive one-hot model misclassifies the
/// majority of a small interaction group.
///
/// | group | rows | positive rate |
/// |---|---|---|
/// | (female, old) | 600 | 0.90 |
/// | (female, young) | 400 | 0.10 |
/// | (male, old) | 400 | 0.60 |
/// | (male, young) | 100 | 0.85 |
///
/// The additive logit fitted to these cells puts young males near 0.22, so the
/// one-hot model predicts negative for a group that is mostly positive; the
/// generic model predicts the overall majority (about 0.60), positive.
pub fn worsenalization_task(seed: u64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cells = [((0, 0), 600, 0.90), ((0, 1), 400, 0.10), ((1, 0), 400, 0.60), ((1, 1), 100, 0.85)];
    let mut features = Vec::new();
    let mut labels = Vec::new();
    let mut groups = Vec::new();
    for ((sex, age), n, rate) in cells {
        for _ in 0..n {
            features.push(vec![gaussian(&mut rng), gaussian(&mut rng)]);
            labels.push(u8::from(rng.random::<f64>() < rate));
            groups.push(vec![sex, age]);
        }
    }
    Dataset::new(illustration_schema(), vec!["x0".into(), "x1".into()], features, labels, groups).expect("valid task")
}

fn gaussian(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}
