//! The schema configuration document.
//!
//! ```json
//! {
//!   "format_version": 1,
//!   "label": "y",
//!   "features": ["x1", "x2"],
//!   "groups": [{"name": "sex", "levels": ["female", "male"]}],
//!   "ordering": [{"before": "age", "after": "hiv", "when": {"attribute": "sex", "level": "male"}}],
//!   "fixed_models": []
//! }
//! ```

use serde::{Deserialize, Serialize};

use crate::dataset::{GroupAttribute, GroupSchema, ReportingGroup};
use crate::error::{Error, Result};
use crate::interface::OrderingRule;
use crate::models::{FixedRule, ModelSpec, TrainedModel};

pub const SCHEMA_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SchemaConfig {
    pub format_version: u32,
    pub label: String,
    pub features: Vec<String>,
    pub groups: Vec<GroupAttribute>,
    #[serde(default)]
    pub ordering: Vec<OrderingConfig>,
    #[serde(default)]
    pub fixed_models: Vec<FixedModelConfig>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OrderingConfig {
    pub before: String,
    pub after: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub when: Option<LevelRef>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LevelRef {
    pub attribute: String,
    pub level: String,
}

/// An externally specified classifier keyed on the levels of its required attributes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixedModelConfig {
    pub id: String,
    #[serde(default)]
    pub required: Vec<String>,
    /// Rows the rule is meant for; attributes not listed are unreported.
    #[serde(default)]
    pub scope: Vec<LevelRef>,
    #[serde(default)]
    pub default_score: f64,
    #[serde(default)]
    pub rules: Vec<FixedRuleConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixedRuleConfig {
    /// Levels of the required attributes, in the order they are listed.
    pub levels: Vec<String>,
    pub score: f64,
}

impl SchemaConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let config: SchemaConfig = serde_json::from_str(text)?;
        if config.format_version != SCHEMA_FORMAT_VERSION {
            return Err(Error::InvalidSchema(format!(
                "unsupported format_version {}",
                config.format_version
            )));
        }
        config.group_schema()?;
        if config.features.is_empty() {
            return Err(Error::InvalidSchema("at least one feature column is required".into()));
        }
        Ok(config)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_schema(schema: &GroupSchema, label: &str, features: &[&str]) -> Self {
        Self {
            format_version: SCHEMA_FORMAT_VERSION,
            label: label.to_string(),
            features: features.iter().map(|f| f.to_string()).collect(),
            groups: schema.attributes().to_vec(),
            ordering: Vec::new(),
            fixed_models: Vec::new(),
        }
    }

    pub fn group_schema(&self) -> Result<GroupSchema> {
        GroupSchema::new(self.groups.clone())
    }

    pub fn ordering_rules(&self) -> Result<Vec<OrderingRule>> {
        let schema = self.group_schema()?;
        let attr = |name: &str| {
            schema
                .attribute_index(name)
                .ok_or_else(|| Error::InvalidSchema(format!("unknown attribute `{name}` in ordering")))
        };
        self.ordering
            .iter()
            .map(|rule| {
                let when = match &rule.when {
                    Some(r) => Some(resolve_level(&schema, r)?),
                    None => None,
                };
                Ok(OrderingRule {
                    before: attr(&rule.before)?,
                    after: attr(&rule.after)?,
                    when,
                })
            })
            .collect()
    }

    /// Build the configured fixed-rule models for a feature width of `d`.
    pub fn fixed_models(&self, d: usize) -> Result<Vec<TrainedModel>> {
        let schema = self.group_schema()?;
        self.fixed_models
            .iter()
            .map(|cfg| {
                let required = cfg
                    .required
                    .iter()
                    .map(|name| {
                        schema.attribute_index(name).ok_or_else(|| {
                            Error::InvalidSchema(format!("unknown attribute `{name}` in model `{}`", cfg.id))
                        })
                    })
                    .collect::<Result<Vec<_>>>()?;
                let mut scope = ReportingGroup::root(schema.k());
                for level in &cfg.scope {
                    let (a, l) = resolve_level(&schema, level)?;
                    scope.0[a] = Some(l);
                }
                let mut table = Vec::new();
                for rule in &cfg.rules {
                    if rule.levels.len() != required.len() {
                        return Err(Error::InvalidSchema(format!(
                            "rule in model `{}` lists {} levels for {} required attributes",
                            cfg.id,
                            rule.levels.len(),
                            required.len()
                        )));
                    }
                    let levels = rule
                        .levels
                        .iter()
                        .zip(&required)
                        .map(|(value, &a)| {
                            schema.level_index(a, value).ok_or_else(|| {
                                Error::InvalidSchema(format!("unknown level `{value}` in model `{}`", cfg.id))
                            })
                        })
                        .collect::<Result<Vec<_>>>()?;
                    table.push((levels, rule.score));
                }
                let rule = FixedRule::new(cfg.default_score, table)?;
                let spec = ModelSpec::fixed(&cfg.id, required, scope);
                TrainedModel::fixed(spec, rule, &schema, d)
            })
            .collect()
    }
}

fn resolve_level(schema: &GroupSchema, r: &LevelRef) -> Result<(usize, usize)> {
    let a = schema
        .attribute_index(&r.attribute)
        .ok_or_else(|| Error::InvalidSchema(format!("unknown attribute `{}`", r.attribute)))?;
    let l = schema
        .level_index(a, &r.level)
        .ok_or_else(|| Error::InvalidSchema(format!("unknown level `{}`", r.level)))?;
    Ok((a, l))
}

#[cfg(test)]
mod tests {
    use super::*;

    const DOC: &str = r#"{
        "format_version": 1,
        "label": "y",
        "features": ["x"],
        "groups": [
            {"name": "sex", "levels": ["female", "male"]},
            {"name": "age", "levels": ["old", "young"]},
            {"name": "hiv", "levels": ["neg", "pos"]}
        ],
        "ordering": [{"before": "age", "after": "hiv", "when": {"attribute": "sex", "level": "male"}}],
        "fixed_models": [{"id": "h0", "default_score": 0.0}]
    }"#;

    #[test]
    fn parses_ordering_and_fixed_models() {
        let config = SchemaConfig::from_json(DOC).unwrap();
        let rules = config.ordering_rules().unwrap();
        assert_eq!(
            rules,
            vec![OrderingRule {
                before: 1,
                after: 2,
                when: Some((0, 1))
            }]
        );
        let models = config.fixed_models(1).unwrap();
        assert_eq!(models.len(), 1);
        assert!(models[0].spec.required_attributes.is_empty());
    }

    #[test]
    fn rejects_wrong_version_and_unknown_names() {
        assert!(SchemaConfig::from_json(&DOC.replace("\"format_version\": 1", "\"format_version\": 9")).is_err());
        let config = SchemaConfig::from_json(&DOC.replace("\"before\": \"age\"", "\"before\": \"height\"")).unwrap();
        assert!(config.ordering_rules().is_err());
    }
}
