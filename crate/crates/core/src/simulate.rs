//! Individual disclosure decisions and participation profiles.
//!
//! An agent with full membership `g` picks, among the surviving options that
//! are truthful for `g`, the report maximizing
//! `β·(1 − risk(g, node)) − Σ costs of reported attributes`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::assembly::{DisplayedRisks, ParticipatorySystem};
use crate::dataset::{Dataset, ReportingGroup};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentProfile {
    /// Cost of disclosing each attribute; a report costs the sum over its reported attributes.
    pub costs: Vec<f64>,
    pub benefit_scale: f64,
    pub membership: Vec<usize>,
}

impl AgentProfile {
    pub fn cost(&self, r: &ReportingGroup) -> f64 {
        r.reported().iter().map(|&a| self.costs[a]).sum()
    }

    fn check(&self, system: &ParticipatorySystem) -> Result<()> {
        let k = system.schema.k();
        if self.costs.len() != k || self.membership.len() != k {
            return Err(Error::InvalidArgument(format!("agent needs {k} costs and levels")));
        }
        if self.costs.iter().any(|c| c.is_nan() || *c < 0.0) || self.benefit_scale.is_nan() || self.benefit_scale <= 0.0 {
            return Err(Error::InvalidArgument("costs must be ≥ 0 and the benefit scale > 0".into()));
        }
        system.schema.check_report(&ReportingGroup::full(&self.membership))
    }
}

/// Group-conditional risk of each node, the basis of the benefit term.
#[derive(Debug, Clone, PartialEq)]
pub struct RiskTable {
    risks: DisplayedRisks,
}

impl RiskTable {
    /// The pruning-split estimates stored in the system (what people are shown).
    pub fn displayed(system: &ParticipatorySystem) -> Self {
        Self {
            risks: system.displayed_risks.clone(),
        }
    }

    /// Risks measured on other data, e.g. the test split.
    pub fn oracle(system: &ParticipatorySystem, d: &Dataset) -> Result<Self> {
        Ok(Self {
            risks: system.group_node_risks(d)?,
        })
    }

    pub fn risk(&self, system: &ParticipatorySystem, group: &[usize], node: usize) -> Option<f64> {
        self.risks[system.schema.group_index(group)][node]
    }
}

/// Surviving nodes whose report is truthful for `g`, root first.
pub fn available_options(system: &ParticipatorySystem, g: &[usize]) -> Vec<usize> {
    system
        .surviving_nodes()
        .into_iter()
        .filter(|&v| system.tree.nodes[v].report.matches(g))
        .collect()
}

pub fn agent_utility(agent: &AgentProfile, r: &ReportingGroup, system: &ParticipatorySystem, table: &RiskTable) -> Result<f64> {
    agent.check(system)?;
    if !r.matches(&agent.membership) || r.0.len() != agent.membership.len() {
        return Err(Error::NonTruthfulReport);
    }
    let node = system
        .tree
        .find(r)
        .filter(|&v| !system.tree.nodes[v].pruned)
        .ok_or(Error::UnavailableOption)?;
    let risk = table
        .risk(system, &agent.membership, node)
        .ok_or_else(|| Error::UndefinedMetric(format!("no risk estimate for option {r}")))?;
    Ok(utility(agent, r, risk))
}

fn utility(agent: &AgentProfile, r: &ReportingGroup, risk: f64) -> f64 {
    let cost = if r.is_root() { 0.0 } else { agent.cost(r) };
    agent.benefit_scale * (1.0 - risk) - cost
}

/// Utility-maximizing option and its utility, or `None` when no option has a risk estimate.
fn best_option(agent: &AgentProfile, system: &ParticipatorySystem, table: &RiskTable) -> Option<(usize, f64)> {
    available_options(system, &agent.membership)
        .into_iter()
        .filter_map(|v| {
            let risk = table.risk(system, &agent.membership, v)?;
            Some((v, utility(agent, &system.tree.nodes[v].report, risk)))
        })
        .min_by(|(a, ua), (b, ub)| {
            ub.total_cmp(ua)
                .then_with(|| system.tree.nodes[*a].report.n_reported().cmp(&system.tree.nodes[*b].report.n_reported()))
                .then(a.cmp(b))
        })
}

/// Node of the best report; ties go to fewer reported attributes. Falls back
/// to the root when no option has a risk estimate.
pub fn best_report_node(agent: &AgentProfile, system: &ParticipatorySystem, table: &RiskTable) -> Result<usize> {
    agent.check(system)?;
    Ok(best_option(agent, system, table).map_or(0, |(v, _)| v))
}

pub fn best_report(agent: &AgentProfile, system: &ParticipatorySystem, table: &RiskTable) -> Result<ReportingGroup> {
    let v = best_report_node(agent, system, table)?;
    Ok(system.tree.nodes[v].report.clone())
}

/// Highest utility the agent can reach, if any option has a risk estimate.
pub fn max_utility(agent: &AgentProfile, system: &ParticipatorySystem, table: &RiskTable) -> Result<Option<f64>> {
    agent.check(system)?;
    Ok(best_option(agent, system, table).map(|(_, u)| u))
}

/// Agents drawn from data rows: features, true membership and labels, with
/// per-attribute cost multipliers.
#[derive(Debug, Clone)]
pub struct Population {
    pub data: Dataset,
    /// `cost_weights[i][a]` scales the grid cost of attribute `a` for agent `i`.
    pub cost_weights: Vec<Vec<f64>>,
    pub benefit_scale: f64,
}

impl Population {
    /// Every agent pays the grid cost for each attribute.
    pub fn uniform(data: Dataset, benefit_scale: f64) -> Self {
        let cost_weights = vec![vec![1.0; data.schema().k()]; data.n()];
        Self {
            data,
            cost_weights,
            benefit_scale,
        }
    }

    /// Cost multipliers drawn from `U(0.5, 1.5)`.
    pub fn random(data: Dataset, benefit_scale: f64, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let k = data.schema().k();
        let cost_weights = (0..data.n())
            .map(|_| (0..k).map(|_| rng.random_range(0.5..1.5)).collect())
            .collect();
        Self {
            data,
            cost_weights,
            benefit_scale,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileRow {
    /// Full group label, or `all` for the population.
    pub group: String,
    pub cost: f64,
    pub n: usize,
    /// Share of agents disclosing at least one attribute.
    pub opt_in_rate: f64,
    /// Realized risk of the served predictions; group-weighted for `all`.
    pub risk: Option<f64>,
}

/// Serving node per agent at one cost level.
pub fn choices_at_cost(system: &ParticipatorySystem, population: &Population, cost: f64, table: &RiskTable) -> Result<Vec<usize>> {
    let d = &population.data;
    (0..d.n())
        .into_par_iter()
        .map(|i| {
            let costs = population.cost_weights[i].iter().map(|w| if cost == 0.0 { 0.0 } else { w * cost }).collect();
            let agent = AgentProfile {
                costs,
                benefit_scale: population.benefit_scale,
                membership: d.groups()[i].clone(),
            };
            best_report_node(&agent, system, table)
        })
        .collect()
}

/// Opt-in rates and realized risks per group at each cost level.
pub fn participation_profile(
    system: &ParticipatorySystem,
    population: &Population,
    cost_grid: &[f64],
    table: &RiskTable,
) -> Result<Vec<ProfileRow>> {
    let d = &population.data;
    if d.n() == 0 {
        return Err(Error::EmptySplit("population"));
    }
    if cost_grid.iter().any(|c| c.is_nan() || *c < 0.0) {
        return Err(Error::InvalidArgument("costs must be ≥ 0".into()));
    }
    let schema = d.schema();
    let metric = system.metric;
    let mut rows = Vec::new();
    for &cost in cost_grid {
        let nodes = choices_at_cost(system, population, cost, table)?;
        let scores = system.scores_at(d, &nodes)?;
        let opted = |i: &usize| system.tree.nodes[nodes[*i]].report.n_reported() > 0;
        for g in schema.full_groups() {
            let members = d.rows_matching(&ReportingGroup::full(&g));
            if members.is_empty() {
                continue;
            }
            rows.push(ProfileRow {
                group: schema.describe_full(&g),
                cost,
                n: members.len(),
                opt_in_rate: members.iter().filter(|i| opted(i)).count() as f64 / members.len() as f64,
                risk: metric.risk_on(&scores, d.labels(), &members),
            });
        }
        let everyone: Vec<usize> = (0..d.n()).collect();
        rows.push(ProfileRow {
            group: "all".into(),
            cost,
            n: d.n(),
            opt_in_rate: everyone.iter().filter(|i| opted(i)).count() as f64 / d.n() as f64,
            risk: crate::metrics::group_weighted_risk(d, &scores, metric),
        });
    }
    Ok(rows)
}

pub fn write_profile_csv<W: std::io::Write>(rows: &[ProfileRow], sink: W) -> Result<()> {
    let mut writer = csv::Writer::from_writer(sink);
    for row in rows {
        writer.serialize(row)?;
    }
    writer.flush()?;
    Ok(())
}
