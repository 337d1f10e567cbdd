//! Reporting interfaces: trees over reporting groups rooted at the all-∅ report.
//!
//! Each edge is one disclosure decision. Minimal trees offer all-or-nothing
//! disclosure, flat trees offer every subset in one step, and sequential trees
//! ask for one attribute at a time, possibly in a different order on each
//! branch.

use std::collections::VecDeque;
use std::rc::Rc;

use serde::{Deserialize, Serialize};

use crate::assembly::GainCertificate;
use crate::dataset::{Dataset, GroupSchema, ReportingGroup, SplitBundle};
use crate::error::{Error, Result};
use crate::models::Metric;
use crate::pool::{best_viable, ModelPool, ScoreTable};

/// Enumeration is refused beyond this many attributes unless bounded.
pub const MAX_UNBOUNDED_ATTRIBUTES: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TreeKind {
    Minimal,
    Flat,
    Sequential,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeNode {
    pub report: ReportingGroup,
    pub parent: Option<usize>,
    pub children: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub certificate: Option<GainCertificate>,
    /// Removed reporting option; kept in the arena so it can be shown as pruned.
    #[serde(default)]
    pub pruned: bool,
}

/// Node arena; node 0 is the root.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportingTree {
    pub kind: TreeKind,
    pub nodes: Vec<TreeNode>,
}

impl ReportingTree {
    pub fn new(kind: TreeKind, k: usize) -> Self {
        Self {
            kind,
            nodes: vec![TreeNode {
                report: ReportingGroup::root(k),
                parent: None,
                children: Vec::new(),
                model_id: None,
                certificate: None,
                pruned: false,
            }],
        }
    }

    pub fn add_child(&mut self, parent: usize, report: ReportingGroup) -> usize {
        let id = self.nodes.len();
        self.nodes.push(TreeNode {
            report,
            parent: Some(parent),
            children: Vec::new(),
            model_id: None,
            certificate: None,
            pruned: false,
        });
        self.nodes[parent].children.push(id);
        id
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn depth(&self, mut node: usize) -> usize {
        let mut depth = 0;
        while let Some(p) = self.nodes[node].parent {
            node = p;
            depth += 1;
        }
        depth
    }

    /// Node indices in breadth-first order from the root.
    pub fn breadth_first(&self) -> Vec<usize> {
        let mut order = Vec::with_capacity(self.nodes.len());
        let mut queue = VecDeque::from([0]);
        while let Some(v) = queue.pop_front() {
            order.push(v);
            queue.extend(self.nodes[v].children.iter().copied());
        }
        order
    }

    pub fn surviving_children(&self, node: usize) -> impl Iterator<Item = usize> + '_ {
        self.nodes[node].children.iter().copied().filter(|&c| !self.nodes[c].pruned)
    }

    pub fn descendants(&self, node: usize) -> Vec<usize> {
        let mut out = Vec::new();
        let mut stack: Vec<usize> = self.nodes[node].children.clone();
        while let Some(v) = stack.pop() {
            out.push(v);
            stack.extend(self.nodes[v].children.iter().copied());
        }
        out
    }

    pub fn find(&self, report: &ReportingGroup) -> Option<usize> {
        self.nodes.iter().position(|n| &n.report == report)
    }

    /// Serving node for `report` below `start`.
    ///
    /// Descends through surviving children whose report is contained in
    /// `report`, preferring an exact match; stops when no child or more than
    /// one child qualifies. Reports that reach a pruned or missing option are
    /// thus served by their deepest surviving ancestor.
    pub fn dispatch_from(&self, start: usize, report: &ReportingGroup) -> usize {
        let mut at = start;
        loop {
            let candidates: Vec<usize> = self
                .surviving_children(at)
                .filter(|&c| self.nodes[c].report.is_subset_of(report))
                .collect();
            let next = candidates
                .iter()
                .copied()
                .find(|&c| &self.nodes[c].report == report)
                .or(if candidates.len() == 1 { Some(candidates[0]) } else { None });
            match next {
                Some(c) => at = c,
                None => return at,
            }
        }
    }

    pub fn dispatch(&self, report: &ReportingGroup) -> usize {
        self.dispatch_from(0, report)
    }

    /// Structural checks: the root is all-∅, parent links are consistent,
    /// every node is reachable, and no path reports an attribute twice.
    /// Sequential edges add exactly one attribute; flat and minimal children
    /// hang off the root.
    pub fn validate_structure(&self, schema: &GroupSchema) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidArtifact(msg));
        let Some(root) = self.nodes.first() else {
            return bad("tree has no root".into());
        };
        if !root.report.is_root() || root.parent.is_some() {
            return bad("root must be the all-∅ report".into());
        }
        for (i, node) in self.nodes.iter().enumerate() {
            for &c in &node.children {
                if self.nodes.get(c).and_then(|n| n.parent) != Some(i) {
                    return bad(format!("node {c} does not point back to parent {i}"));
                }
            }
        }
        // Consistent parent links make the child graph a forest, so this terminates.
        if self.breadth_first().len() != self.nodes.len() {
            return bad("tree has unreachable or shared nodes".into());
        }
        for (i, node) in self.nodes.iter().enumerate() {
            schema.check_report(&node.report)?;
            let Some(p) = node.parent else {
                if i != 0 {
                    return bad(format!("node {i} has no parent"));
                }
                continue;
            };
            let parent = &self.nodes[p].report;
            if !parent.is_subset_of(&node.report) || parent.n_reported() >= node.report.n_reported() {
                return bad(format!("node {i} does not extend its parent"));
            }
            let step_ok = match self.kind {
                TreeKind::Sequential => node.report.n_reported() == parent.n_reported() + 1,
                TreeKind::Flat => p == 0,
                TreeKind::Minimal => p == 0 && node.report.is_full(),
            };
            if !step_ok {
                return bad(format!("node {i} is not a valid {:?} edge", self.kind));
            }
        }
        Ok(())
    }
}

/// All `2^k` reports a person with full membership `g` can make truthfully.
pub fn truthful_options(g: &ReportingGroup) -> Result<Vec<ReportingGroup>> {
    let levels = g.as_full().ok_or(Error::PartialInput)?;
    let k = levels.len();
    Ok((0..1usize << k)
        .map(|mask| ReportingGroup((0..k).map(|a| (mask >> a & 1 == 1).then_some(levels[a])).collect()))
        .collect())
}

pub fn build_minimal(schema: &GroupSchema) -> ReportingTree {
    let mut tree = ReportingTree::new(TreeKind::Minimal, schema.k());
    for g in schema.full_groups() {
        tree.add_child(0, ReportingGroup::full(&g));
    }
    tree
}

pub fn build_flat(schema: &GroupSchema) -> ReportingTree {
    let mut tree = ReportingTree::new(TreeKind::Flat, schema.k());
    for r in schema.all_reports().into_iter().filter(|r| !r.is_root()) {
        tree.add_child(0, r);
    }
    tree
}

/// "Report `before` ahead of `after`", optionally only for people whose
/// attribute `when.0` has level `when.1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct OrderingRule {
    pub before: usize,
    pub after: usize,
    pub when: Option<(usize, usize)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeConstraints {
    /// Minimum rows per node; `None` means `d + 1`.
    pub min_samples: Option<usize>,
    pub require_both_classes: bool,
    pub ordering: Vec<OrderingRule>,
    pub max_trees: Option<usize>,
}

impl Default for TreeConstraints {
    fn default() -> Self {
        Self {
            min_samples: None,
            require_both_classes: true,
            ordering: Vec::new(),
            max_trees: None,
        }
    }
}

/// Branching structure of one sequential subtree.
#[derive(Debug)]
enum Plan {
    Leaf,
    Split { attribute: usize, children: Vec<Rc<Plan>> },
}

struct Enumerator<'a> {
    schema: &'a GroupSchema,
    /// `(rows, positives)` per full group.
    counts: Vec<(usize, usize)>,
    min_samples: usize,
    require_both_classes: bool,
    ordering: &'a [OrderingRule],
    cap: usize,
}

impl Enumerator<'_> {
    fn admissible(&self, r: &ReportingGroup) -> bool {
        let (n, pos) = self
            .schema
            .full_groups()
            .iter()
            .zip(&self.counts)
            .filter(|(g, _)| r.matches(g))
            .fold((0, 0), |(n, p), (_, &(gn, gp))| (n + gn, p + gp));
        n >= self.min_samples && (!self.require_both_classes || (pos > 0 && pos < n))
    }

    fn violates_ordering(&self, full: &ReportingGroup, order: &[usize]) -> bool {
        let position = |a: usize| order.iter().position(|&x| x == a);
        self.ordering.iter().any(|rule| {
            let guarded = rule.when.is_none_or(|(a, l)| full.0[a] == Some(l));
            guarded && position(rule.after) < position(rule.before)
        })
    }

    /// Every admissible subtree below `r`, in lexicographic order of branching choices.
    fn plans(&self, r: &ReportingGroup, order: &mut Vec<usize>) -> Vec<Rc<Plan>> {
        let remaining: Vec<usize> = (0..self.schema.k()).filter(|&a| r.0[a].is_none()).collect();
        if remaining.is_empty() {
            return if self.violates_ordering(r, order) {
                Vec::new()
            } else {
                vec![Rc::new(Plan::Leaf)]
            };
        }
        let mut out = Vec::new();
        for attribute in remaining {
            if out.len() >= self.cap {
                break;
            }
            let children: Vec<ReportingGroup> =
                (0..self.schema.n_levels(attribute)).map(|l| r.with(attribute, l)).collect();
            if !children.iter().all(|c| self.admissible(c)) {
                continue;
            }
            order.push(attribute);
            let options: Vec<Vec<Rc<Plan>>> = children.iter().map(|c| self.plans(c, order)).collect();
            order.pop();
            if options.iter().any(Vec::is_empty) {
                continue;
            }
            // Cartesian product over children, first child varying slowest.
            let mut index = vec![0usize; options.len()];
            'product: loop {
                out.push(Rc::new(Plan::Split {
                    attribute,
                    children: index.iter().zip(&options).map(|(&i, o)| Rc::clone(&o[i])).collect(),
                }));
                if out.len() >= self.cap {
                    break;
                }
                for pos in (0..index.len()).rev() {
                    index[pos] += 1;
                    if index[pos] < options[pos].len() {
                        continue 'product;
                    }
                    index[pos] = 0;
                }
                break;
            }
        }
        out
    }
}

fn materialize(tree: &mut ReportingTree, node: usize, plan: &Plan) {
    if let Plan::Split { attribute, children } = plan {
        for (level, child) in children.iter().enumerate() {
            let report = tree.nodes[node].report.with(*attribute, level);
            let id = tree.add_child(node, report);
            materialize(tree, id, child);
        }
    }
}

/// Every full-depth sequential tree whose nodes satisfy `c` on `d`.
///
/// Subtrees are chosen independently per branch, so different branches may
/// ask for attributes in different orders. Output order is lexicographic in
/// the branching choices, which makes `max_trees` truncation reproducible.
/// An empty result means no tree is viable under the constraints.
pub fn enumerate_sequential(schema: &GroupSchema, d: &Dataset, c: &TreeConstraints) -> Result<Vec<ReportingTree>> {
    let k = schema.k();
    if k > MAX_UNBOUNDED_ATTRIBUTES && c.max_trees.is_none() && c.ordering.is_empty() {
        return Err(Error::TooManyAttributes(k));
    }
    if c.min_samples == Some(0) {
        return Err(Error::InvalidArgument("min_samples must be at least 1".into()));
    }
    for rule in &c.ordering {
        if rule.before >= k || rule.after >= k || rule.when.is_some_and(|(a, l)| a >= k || l >= schema.n_levels(a)) {
            return Err(Error::InvalidArgument("ordering rule out of range".into()));
        }
    }
    let mut counts = vec![(0, 0); schema.n_groups()];
    for (g, &y) in d.groups().iter().zip(d.labels()) {
        let cell = &mut counts[schema.group_index(g)];
        cell.0 += 1;
        cell.1 += usize::from(y);
    }
    let enumerator = Enumerator {
        schema,
        counts,
        min_samples: c.min_samples.unwrap_or(d.d() + 1),
        require_both_classes: c.require_both_classes,
        ordering: &c.ordering,
        cap: c.max_trees.unwrap_or(usize::MAX),
    };
    let root = ReportingGroup::root(k);
    if !enumerator.admissible(&root) {
        return Ok(Vec::new());
    }
    let plans = enumerator.plans(&root, &mut Vec::new());
    Ok(plans
        .iter()
        .map(|plan| {
            let mut tree = ReportingTree::new(TreeKind::Sequential, k);
            materialize(&mut tree, 0, plan);
            tree
        })
        .collect())
}

/// Greedy sequential induction on the assignment split.
///
/// Each leaf is split on the unused attribute whose worst child gains most
/// from switching to that child's best viable model, and only if that
/// worst-case gain is strictly positive. A child with no rows or an
/// undefined risk counts as zero gain.
pub fn greedy_tree(bundle: &SplitBundle, pool: &ModelPool, metric: Metric) -> Result<ReportingTree> {
    let d = &bundle.assign;
    let schema = d.schema();
    let table = ScoreTable::new(pool, d)?;
    let labels = d.labels();
    let mut tree = ReportingTree::new(TreeKind::Sequential, schema.k());
    let root = ReportingGroup::root(schema.k());
    let all: Vec<usize> = (0..d.n()).collect();
    let root_model = best_viable(pool, &table, labels, &root, &all, metric).map(|(m, _)| m.spec.id.clone());

    let mut frontier: VecDeque<(usize, Option<String>)> = VecDeque::from([(0, root_model)]);
    while let Some((node, current)) = frontier.pop_front() {
        let report = tree.nodes[node].report.clone();
        let Some(current) = current else { continue };
        let mut best: Option<(f64, usize, Vec<Option<String>>)> = None;
        for attribute in (0..schema.k()).filter(|&a| report.0[a].is_none()) {
            let mut worst = f64::INFINITY;
            let mut models = Vec::new();
            for level in 0..schema.n_levels(attribute) {
                let child = report.with(attribute, level);
                let rows = d.rows_matching(&child);
                let parent_risk = table.risk(&current, labels, &rows, metric);
                let choice = best_viable(pool, &table, labels, &child, &rows, metric);
                let gain = match (parent_risk, &choice) {
                    (Some(p), Some((_, r))) => p - r,
                    _ => 0.0,
                };
                worst = worst.min(gain);
                models.push(choice.map(|(m, _)| m.spec.id.clone()));
            }
            if best.as_ref().is_none_or(|(g, _, _)| worst > *g) {
                best = Some((worst, attribute, models));
            }
        }
        if let Some((gain, attribute, models)) = best {
            if gain > 0.0 {
                for (level, model) in models.into_iter().enumerate() {
                    let id = tree.add_child(node, report.with(attribute, level));
                    frontier.push_back((id, model));
                }
            }
        }
    }
    Ok(tree)
}
