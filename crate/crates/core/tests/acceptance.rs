//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Oracles here are computed directly from predictions and labels, without
//! going through the library's risk, dispatch or test helpers, except where a
//! criterion is about those helpers' agreement with an independent result.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::Instant;

use partsys::assembly::hypothesis::{bootstrap_test, delong_test, discordant_counts, mcnemar_test};
use partsys::assembly::{assign_models, test_gain, CertificateBasis, Decision, LearnConfig, SystemKind, TestConfig, TestMethod};
use partsys::dataset::{split_dataset, SplitOptions};
use partsys::interface::{build_flat, build_minimal, enumerate_sequential, OrderingRule, TreeConstraints};
use partsys::metrics::{data_use, evaluate, group_weighted_risk, options_pruned, EvalConfig, Evaluand, Policy};
use partsys::models::{predict_label, Metric, ModelClass};
use partsys::pool::{build_pool, ModelPool, PoolConfig};
use partsys::simulate::{max_utility, participation_profile, AgentProfile, Population, RiskTable};
use partsys::synth::{self, TaskOptions};
use partsys::{learn_systems, Dataset, GroupSchema, ParticipatorySystem, ReportingGroup, SplitBundle, TrainedModel};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Check = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

// ---------------------------------------------------------------------------
// Independent oracles

/// Misclassified rows among `rows`.
fn error_count(scores: &[f64], labels: &[u8], rows: &[usize]) -> usize {
    rows.iter().filter(|&&i| u8::from(scores[i] >= 0.5) != labels[i]).count()
}

fn error_rate(scores: &[f64], labels: &[u8]) -> f64 {
    let all: Vec<usize> = (0..labels.len()).collect();
    error_count(scores, labels, &all) as f64 / labels.len() as f64
}

fn matches(report: &ReportingGroup, g: &[usize]) -> bool {
    report.0.iter().zip(g).all(|(r, l)| r.is_none_or(|r| r == *l))
}

fn rows_matching(d: &Dataset, report: &ReportingGroup) -> Vec<usize> {
    (0..d.n()).filter(|&i| matches(report, &d.groups()[i])).collect()
}

/// A model may serve a report when the report discloses everything it needs
/// and agrees with every level it was trained on.
fn viable(m: &TrainedModel, report: &ReportingGroup) -> bool {
    m.spec.required_attributes.iter().all(|&a| report.0[a].is_some())
        && m.spec.training_scope.0.iter().zip(&report.0).all(|(s, r)| s.is_none() || s == r)
}

/// Number of sequential trees when every node is admissible:
/// `N(∅) = 1`, `N(S) = Σ_{a∈S} N(S∖a)^{L_a}`.
fn tree_count(levels: &[usize]) -> u64 {
    if levels.is_empty() {
        return 1;
    }
    (0..levels.len())
        .map(|a| {
            let rest: Vec<usize> = levels.iter().enumerate().filter(|&(b, _)| b != a).map(|(_, &l)| l).collect();
            tree_count(&rest).pow(levels[a] as u32)
        })
        .sum()
}

fn pascal(n: usize) -> Vec<Vec<f64>> {
    let mut rows = vec![vec![1.0]];
    for i in 1..=n {
        let prev = &rows[i - 1];
        let mut row = vec![1.0; i + 1];
        for j in 1..i {
            row[j] = prev[j - 1] + prev[j];
        }
        rows.push(row);
    }
    rows
}

/// Variance of `AUC_a − AUC_b` from structural components, by direct pair comparison.
fn delong_variance_direct(a: &[f64], b: &[f64], labels: &[u8]) -> (f64, f64, f64) {
    let pos: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == 1).collect();
    let neg: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == 0).collect();
    let psi = |x: f64, y: f64| if x > y { 1.0 } else if x == y { 0.5 } else { 0.0 };
    let v10 = |s: &[f64]| -> Vec<f64> { pos.iter().map(|&i| neg.iter().map(|&j| psi(s[i], s[j])).sum::<f64>() / neg.len() as f64).collect() };
    let v01 = |s: &[f64]| -> Vec<f64> { neg.iter().map(|&j| pos.iter().map(|&i| psi(s[i], s[j])).sum::<f64>() / pos.len() as f64).collect() };
    let cov = |x: &[f64], y: &[f64]| {
        let mx = x.iter().sum::<f64>() / x.len() as f64;
        let my = y.iter().sum::<f64>() / y.len() as f64;
        x.iter().zip(y).map(|(p, q)| (p - mx) * (q - my)).sum::<f64>() / (x.len() - 1) as f64
    };
    let (a10, b10, a01, b01) = (v10(a), v10(b), v01(a), v01(b));
    let auc = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let var = (cov(&a10, &a10) + cov(&b10, &b10) - 2.0 * cov(&a10, &b10)) / pos.len() as f64
        + (cov(&a01, &a01) + cov(&b01, &b01) - 2.0 * cov(&a01, &b01)) / neg.len() as f64;
    (var, auc(&a10), auc(&b10))
}

// ---------------------------------------------------------------------------
// Shared randomized suite

struct Run {
    bundle: SplitBundle,
    systems: Vec<ParticipatorySystem>,
}

fn task_options(seed: u64) -> TaskOptions {
    TaskOptions {
        n: 1000 + 20 * seed as usize,
        ..TaskOptions::default()
    }
}

fn learn_task(seed: u64, options: &TaskOptions, classes: &[ModelClass], kinds: &[SystemKind], alpha: f64) -> Result<(SplitBundle, ModelPool, Vec<ParticipatorySystem>), String> {
    let task = synth::random_task(seed, options);
    let bundle = split_dataset(
        &task.data,
        SplitOptions {
            seed,
            ..SplitOptions::default()
        },
    )
    .map_err(|e| format!("task {seed}: {e}"))?;
    let pool = build_pool(&bundle, classes, &PoolConfig::default(), seed).map_err(|e| format!("task {seed}: {e}"))?;
    let config = LearnConfig {
        kinds: kinds.to_vec(),
        alpha,
        seed,
        ..LearnConfig::default()
    };
    let systems = learn_systems(&bundle, &pool, &config).map_err(|e| format!("task {seed}: {e}"))?;
    Ok((bundle, pool, systems))
}

const KINDS: [SystemKind; 3] = [SystemKind::Minimal, SystemKind::Flat, SystemKind::Sequential];

fn suite() -> Result<Vec<Run>, String> {
    (0..50)
        .map(|seed| {
            let (bundle, _, systems) = learn_task(seed, &task_options(seed), &[ModelClass::Logistic], &KINDS, 0.10)?;
            Ok(Run { bundle, systems })
        })
        .collect()
}

/// Error rate of the system on `d` when every row reports its full group.
fn full_report_error(system: &ParticipatorySystem, d: &Dataset) -> f64 {
    let wrong = (0..d.n())
        .filter(|&i| {
            let p = system.predict(&d.features()[i], &ReportingGroup::full(&d.groups()[i])).expect("prediction");
            predict_label(p.score) != d.labels()[i]
        })
        .count();
    wrong as f64 / d.n() as f64
}

fn generic_error(system: &ParticipatorySystem, d: &Dataset) -> f64 {
    error_rate(&system.root_model().predict_scores(d).expect("scores"), d.labels())
}

// ---------------------------------------------------------------------------
// Criteria

fn illustration_reproduction() -> Check {
    let start = Instant::now();
    let d = synth::illustration_dataset();
    let (h, h0) = synth::illustration_models();
    let all: Vec<usize> = (0..d.n()).collect();
    let sh = h.predict_scores(&d).map_err(|e| e.to_string())?;
    let s0 = h0.predict_scores(&d).map_err(|e| e.to_string())?;
    let labels = d.labels();

    let traditional = error_count(&sh, labels, &all);
    ensure(traditional == 24, || format!("traditional errors {traditional}"))?;
    let group_gains: Vec<i64> = d
        .schema()
        .full_groups()
        .iter()
        .map(|g| {
            let rows = rows_matching(&d, &ReportingGroup::full(g));
            error_count(&s0, labels, &rows) as i64 - error_count(&sh, labels, &rows) as i64
        })
        .collect();
    ensure(group_gains == vec![-24, 25, 25, 0], || format!("traditional group gains {group_gains:?}"))?;
    let generic = error_count(&s0, labels, &all);
    ensure(generic as i64 - traditional as i64 == 26, || "traditional total gain".into())?;

    let bundle = SplitBundle::from_parts(d.clone(), d.clone(), d.clone(), 0);
    let pool = ModelPool::new(d.schema().clone(), vec![h, h0]).map_err(|e| e.to_string())?;
    let config = LearnConfig {
        kinds: vec![SystemKind::Minimal],
        ..LearnConfig::default()
    };
    let system = learn_systems(&bundle, &pool, &config).map_err(|e| e.to_string())?.remove(0);
    let kept: Vec<String> = system
        .surviving_nodes()
        .into_iter()
        .skip(1)
        .map(|v| system.schema.describe(&system.tree.nodes[v].report))
        .collect();
    ensure(kept == ["female,young", "male,old"], || format!("kept {kept:?}"))?;
    let served: Vec<f64> = (0..d.n())
        .map(|i| system.predict(&d.features()[i], &ReportingGroup::full(&d.groups()[i])).map(|p| p.score))
        .collect::<Result<_, _>>()
        .map_err(|e| e.to_string())?;
    let errors = error_count(&served, labels, &all);
    ensure(errors == 0, || format!("minimal errors {errors}"))?;
    ensure(generic - errors == 50, || "minimal total gain".into())?;
    let pruned = options_pruned(&system);
    ensure(pruned == 0.5, || format!("options_pruned {pruned}"))?;
    let used = data_use(&system, &d);
    // Each opted-in row discloses both of the two attributes.
    ensure(used == 50.0 / 101.0 * (2.0 / d.schema().k() as f64), || format!("data_use {used}"))?;
    let elapsed = start.elapsed();
    ensure(elapsed.as_secs_f64() < 1.0, || format!("took {elapsed:?}"))?;
    Ok(format!("24 → 0 errors, gains (−24, +25, +25, 0) / 26 / 50, pruned 0.5, data use 50/101, {elapsed:.0?}"))
}

fn structural_invariants(runs: &[Run]) -> Check {
    let mut violations = Vec::new();
    let mut checked = 0usize;
    for (t, run) in runs.iter().enumerate() {
        let prune = &run.bundle.prune;
        for system in &run.systems {
            if let Err(e) = system.validate() {
                violations.push(format!("task {t} {}: {e}", system.kind.name()));
            }
            if !system.root_model().spec.required_attributes.is_empty() {
                violations.push(format!("task {t}: root model needs attributes"));
            }
            for (v, node) in system.tree.nodes.iter().enumerate().skip(1) {
                if node.pruned {
                    continue;
                }
                checked += 1;
                let parent = node.parent.expect("non-root");
                let parent_model = system.tree.nodes[parent].model_id.as_deref().unwrap_or_default();
                let ok = match &node.certificate {
                    Some(c) => {
                        let mut ok = !system.tree.nodes[parent].pruned
                            && c.decision == Decision::Kept
                            && c.p_value < system.alpha
                            && c.gain.is_some_and(|g| g > 0.0)
                            && c.parent_model == parent_model;
                        // Recompute node-level certificates from raw predictions.
                        if ok && c.basis == CertificateBasis::Node {
                            let rows = rows_matching(prune, &node.report);
                            let leaf = system.node_model(v).predict_scores(prune).expect("scores");
                            let par = system.model(parent_model).expect("model").predict_scores(prune).expect("scores");
                            let (mut b, mut cc) = (0u64, 0u64);
                            for &i in &rows {
                                let y = prune.labels()[i];
                                match (u8::from(leaf[i] >= 0.5) == y, u8::from(par[i] >= 0.5) == y) {
                                    (true, false) => b += 1,
                                    (false, true) => cc += 1,
                                    _ => {}
                                }
                            }
                            let n = rows.len() as f64;
                            let gain = (error_count(&par, prune.labels(), &rows) as f64 - error_count(&leaf, prune.labels(), &rows) as f64) / n;
                            ok = c.n_validation == rows.len()
                                && mcnemar_test(b, cc).p_value == c.p_value
                                && (c.gain.unwrap() - gain).abs() < 1e-12;
                        }
                        ok
                    }
                    None => false,
                };
                if !ok {
                    violations.push(format!("task {t} {} node {v}", system.kind.name()));
                }
            }
        }
    }
    let n_systems: usize = runs.iter().map(|r| r.systems.len()).sum();
    ensure(violations.is_empty(), || format!("{} violations: {:?}", violations.len(), &violations[..violations.len().min(5)]))?;
    Ok(format!("{n_systems} systems over {} tasks, {checked} surviving options certified, 0 violations", runs.len()))
}

fn baseline_performance(runs: &[Run]) -> Check {
    let mut passing = 0;
    let mut worst = f64::NEG_INFINITY;
    for run in runs {
        let test = &run.bundle.test;
        let ok = run.systems.iter().filter(|s| s.selected).all(|s| {
            let excess = full_report_error(s, test) - generic_error(s, test);
            worst = worst.max(excess);
            excess <= 0.02
        });
        passing += usize::from(ok);
    }
    ensure(passing >= 48, || format!("{passing}/50 tasks within tolerance"))?;
    Ok(format!("{passing}/50 tasks within generic + 2pp (worst excess {:+.2}pp)", worst * 100.0))
}

fn assignment_oracle() -> Check {
    let mut nodes_checked = 0;
    let mut max_pool = 0;
    for seed in 0..20 {
        let options = TaskOptions {
            n: 800,
            max_attributes: 2,
            ..TaskOptions::default()
        };
        let task = synth::random_task(1000 + seed, &options);
        let bundle = split_dataset(&task.data, SplitOptions { seed, ..Default::default() }).map_err(|e| e.to_string())?;
        let pool = build_pool(&bundle, &[ModelClass::Logistic], &PoolConfig::default(), seed).map_err(|e| e.to_string())?;
        ensure(pool.len() <= 20, || format!("pool of {}", pool.len()))?;
        max_pool = max_pool.max(pool.len());
        let d = &bundle.assign;
        let schema = d.schema();
        let scores: Vec<Vec<f64>> = pool.models().iter().map(|m| m.predict_scores(d).expect("scores")).collect();
        let mut trees = vec![build_minimal(schema), build_flat(schema)];
        trees.extend(enumerate_sequential(schema, d, &TreeConstraints::default()).map_err(|e| e.to_string())?);
        for mut tree in trees {
            assign_models(&mut tree, &pool, d, Metric::Error).map_err(|e| e.to_string())?;
            for node in &tree.nodes {
                let rows = rows_matching(d, &node.report);
                if rows.is_empty() {
                    continue;
                }
                let best = pool
                    .models()
                    .iter()
                    .zip(&scores)
                    .filter(|(m, _)| viable(m, &node.report))
                    .map(|(_, s)| error_count(s, d.labels(), &rows))
                    .min()
                    .expect("the generic model is always viable");
                let id = node.model_id.as_deref().unwrap_or_default();
                let i = pool.models().iter().position(|m| m.id() == id).ok_or("unknown model")?;
                ensure(viable(&pool.models()[i], &node.report), || format!("non-viable `{id}` at {}", node.report))?;
                let got = error_count(&scores[i], d.labels(), &rows);
                ensure(got == best, || format!("task {seed} node {}: `{id}` has {got} errors, best {best}", node.report))?;
                nodes_checked += 1;
            }
        }
    }
    Ok(format!("{nodes_checked} nodes over 20 tasks (pools ≤ {max_pool}) match the brute-force minimum"))
}

fn balanced(levels: &[usize], per_cell: usize) -> Dataset {
    let names: Vec<String> = (0..levels.len()).map(|a| format!("a{a}")).collect();
    let level_names: Vec<Vec<String>> = levels.iter().map(|&l| (0..l).map(|i| format!("l{i}")).collect()).collect();
    let pairs: Vec<(&str, Vec<&str>)> = names.iter().zip(&level_names).map(|(n, ls)| (n.as_str(), ls.iter().map(String::as_str).collect())).collect();
    let pairs: Vec<(&str, &[&str])> = pairs.iter().map(|(n, ls)| (*n, ls.as_slice())).collect();
    let schema = GroupSchema::from_pairs(&pairs).expect("schema");
    let mut features = Vec::new();
    let mut labels = Vec::new();
    let mut groups = Vec::new();
    for g in schema.full_groups() {
        for i in 0..per_cell {
            features.push(vec![i as f64]);
            labels.push((i % 2) as u8);
            groups.push(g.clone());
        }
    }
    Dataset::new(schema, vec!["x".into()], features, labels, groups).expect("dataset")
}

fn enumeration_oracle() -> Check {
    let mut counts = Vec::new();
    for levels in [vec![2], vec![2, 2], vec![2, 2, 2], vec![3, 2], vec![3, 2, 2]] {
        let d = balanced(&levels, 10);
        let got = enumerate_sequential(d.schema(), &d, &TreeConstraints::default()).map_err(|e| e.to_string())?.len() as u64;
        let want = tree_count(&levels);
        ensure(got == want, || format!("levels {levels:?}: {got} trees, recursion gives {want}"))?;
        counts.push(got);
    }
    ensure(counts[..3] == [1, 2, 12], || format!("unconstrained counts {counts:?}"))?;

    // Every fixture cell carries a single label.
    let illustration = synth::illustration_dataset();
    let single_class = enumerate_sequential(illustration.schema(), &illustration, &TreeConstraints::default()).map_err(|e| e.to_string())?.len();
    let d = balanced(&[2, 2], 10);
    let contradictory = TreeConstraints {
        ordering: vec![
            OrderingRule { before: 0, after: 1, when: None },
            OrderingRule { before: 1, after: 0, when: None },
        ],
        ..TreeConstraints::default()
    };
    let ordered = enumerate_sequential(d.schema(), &d, &contradictory).map_err(|e| e.to_string())?.len();
    let too_small = TreeConstraints {
        min_samples: Some(41),
        ..TreeConstraints::default()
    };
    let small = enumerate_sequential(d.schema(), &d, &too_small).map_err(|e| e.to_string())?.len();
    ensure((single_class, ordered, small) == (0, 0, 0), || format!("constraint fixtures gave {single_class}, {ordered}, {small}"))?;
    Ok(format!("counts {counts:?} match the recursion; 3 constraint fixtures give 0"))
}

fn statistical_oracles() -> Check {
    let s = mcnemar_test(25, 0).statistic;
    ensure(s == 23.04, || format!("McNemar statistic {s}"))?;

    let triangle = pascal(24);
    let mut worst: f64 = 0.0;
    for (n, row) in triangle.iter().enumerate().skip(1) {
        let total = 2f64.powi(n as i32);
        for b in 0..=n {
            let tail = row[b..].iter().sum::<f64>() / total;
            let p = mcnemar_test(b as u64, (n - b) as u64).p_value;
            worst = worst.max((p - tail).abs());
        }
    }
    ensure(worst <= 1e-12, || format!("binomial tail deviation {worst:e}"))?;

    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst_var: f64 = 0.0;
    for _ in 0..500 {
        let mut labels: Vec<u8> = (0..10).map(|i| u8::from(i < rng.random_range(2..=8))).collect();
        labels.rotate_left(rng.random_range(0..10));
        let a: Vec<f64> = (0..10).map(|_| (rng.random::<f64>() * 10.0).round() / 10.0).collect();
        let b: Vec<f64> = (0..10).map(|_| (rng.random::<f64>() * 10.0).round() / 10.0).collect();
        let (var, auc_a, auc_b) = delong_variance_direct(&a, &b, &labels);
        let out = delong_test(&a, &b, &labels).map_err(|e| e.to_string())?;
        worst_var = worst_var.max((out.variance - var).abs()).max((out.auc_leaf - auc_a).abs()).max((out.auc_parent - auc_b).abs());
    }
    ensure(worst_var <= 1e-10, || format!("DeLong deviation {worst_var:e}"))?;

    let labels: Vec<u8> = (0..40).map(|i| (i % 3 == 0) as u8).collect();
    let scores: Vec<f64> = (0..40).map(|i| ((i * 37) % 11) as f64 / 10.0).collect();
    ensure(discordant_counts(&scores, &scores, &labels) == (0, 0), || "identical discordants".into())?;
    let (b, c) = discordant_counts(&scores, &scores, &labels);
    let mut ps = vec![
        mcnemar_test(b, c).p_value,
        delong_test(&scores, &scores, &labels).map_err(|e| e.to_string())?.p_value,
        bootstrap_test(Metric::Error, &scores, &scores, &labels, 200, 3).p_value,
        bootstrap_test(Metric::Auc, &scores, &scores, &labels, 200, 3).p_value,
    ];
    for (method, metric) in [
        (TestMethod::Mcnemar, Metric::Error),
        (TestMethod::Delong, Metric::Auc),
        (TestMethod::Bootstrap, Metric::Error),
        (TestMethod::Bootstrap, Metric::Auc),
    ] {
        let config = TestConfig { method, ..TestConfig::default() };
        ps.push(test_gain("a", "b", &scores, &scores, &labels, metric, 0.1, &config).p_value);
    }
    ensure(ps.iter().all(|&p| p == 1.0), || format!("identical predictions gave p = {ps:?}"))?;
    Ok(format!(
        "statistic 23.04; exact tails within {worst:.0e}; DeLong within {worst_var:.0e} on 500 instances; identical → p = 1 (8 cases)"
    ))
}

fn unpruned(system: &ParticipatorySystem) -> ParticipatorySystem {
    let mut copy = system.clone();
    for node in &mut copy.tree.nodes {
        node.pruned = false;
    }
    copy
}

fn metric_identities(runs: &[Run]) -> Check {
    let mut checked = 0;
    for (t, run) in runs.iter().enumerate() {
        let test = &run.bundle.test;
        for system in run.systems.iter().filter(|s| s.selected) {
            let config = EvalConfig {
                metric: Metric::Error,
                seed: t as u64,
                ..EvalConfig::default()
            };
            let report = evaluate(&Evaluand::System { system, policy: Policy::FullTruthful }, test, &config).map_err(|e| e.to_string())?;
            let direct = generic_error(system, test) - full_report_error(system, test);
            ensure((report.overall_gain - direct).abs() <= 1e-12, || {
                format!("task {t} {}: gain {} vs direct {direct}", system.kind.name(), report.overall_gain)
            })?;
            ensure((report.overall_gain - (report.generic_performance - report.overall_performance)).abs() <= 1e-12, || {
                format!("task {t}: reported gain is not the difference of reported risks")
            })?;
            let full = unpruned(system);
            ensure(data_use(system, test) <= data_use(&full, test), || format!("task {t} {}: data use grew under pruning", system.kind.name()))?;
            ensure(options_pruned(system) >= options_pruned(&full), || format!("task {t}: options_pruned shrank under pruning"))?;
            checked += 1;
        }
        // Lowering alpha never restores an option.
        let strict = learn_task(t as u64, &task_options(t as u64), &[ModelClass::Logistic], &[SystemKind::Minimal, SystemKind::Flat], 0.05)?.2;
        for s in &strict {
            let loose = run.systems.iter().find(|l| l.kind == s.kind).expect("same kinds");
            ensure(options_pruned(s) >= options_pruned(loose), || format!("task {t} {}: α = 0.05 prunes less than α = 0.10", s.kind.name()))?;
        }
    }
    Ok(format!("{checked} systems: gain identity within 1e-12; data use and options pruned monotone under pruning and α"))
}

fn simulation_properties(runs: &[Run]) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut comparisons = 0;
    for (t, run) in runs.iter().take(10).enumerate() {
        let flat = run.systems.iter().find(|s| s.kind == SystemKind::Flat).expect("flat system");
        // Same system offering only the all-or-nothing options.
        let mut restricted = flat.clone();
        for node in restricted.tree.nodes.iter_mut().skip(1) {
            if !node.report.is_full() {
                node.pruned = true;
            }
        }
        let table = RiskTable::displayed(flat);
        let schema = &flat.schema;
        for _ in 0..100 {
            let membership: Vec<usize> = (0..schema.k()).map(|a| rng.random_range(0..schema.n_levels(a))).collect();
            let agent = AgentProfile {
                costs: (0..schema.k()).map(|_| rng.random_range(0.0..0.3)).collect(),
                benefit_scale: rng.random_range(0.5..2.0),
                membership,
            };
            let more = max_utility(&agent, flat, &table).map_err(|e| e.to_string())?;
            let fewer = max_utility(&agent, &restricted, &table).map_err(|e| e.to_string())?;
            ensure(more >= fewer, || format!("task {t}: max utility {more:?} < {fewer:?} with fewer options"))?;
            comparisons += 1;
        }
    }

    let mut profiles = 0;
    for (t, run) in runs.iter().enumerate() {
        let test = &run.bundle.test;
        for system in run.systems.iter().filter(|s| s.selected) {
            let population = Population::uniform(test.clone(), 1.0);
            let rows = participation_profile(system, &population, &[0.0, f64::INFINITY], &RiskTable::displayed(system)).map_err(|e| e.to_string())?;
            let all: Vec<_> = rows.iter().filter(|r| r.group == "all").collect();
            let generic = group_weighted_risk(test, &system.root_model().predict_scores(test).expect("scores"), system.metric);
            ensure(all[1].risk == generic && all[1].opt_in_rate == 0.0, || format!("task {t} {}: infinite-cost profile {:?} vs generic {generic:?}", system.kind.name(), all[1]))?;
            if system.kind == SystemKind::Minimal {
                let full = system.weighted_risk(test);
                ensure(all[0].risk == full, || format!("task {t}: zero-cost profile {:?} vs full report {full:?}", all[0].risk))?;
            }
            profiles += 1;
        }
    }
    Ok(format!(
        "{comparisons} agent comparisons (flat ⊇ all-or-nothing) non-decreasing; zero- and infinite-cost profiles exact on {profiles} systems"
    ))
}

fn determinism_and_round_trip() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let mut predictions = 0;
    let tasks: [(u64, TaskOptions, Vec<ModelClass>); 3] = [
        (200, task_options(5), vec![ModelClass::Logistic]),
        (201, task_options(30), vec![ModelClass::Logistic]),
        (
            202,
            TaskOptions {
                n: 600,
                max_attributes: 2,
                max_levels: 2,
                ..TaskOptions::default()
            },
            vec![ModelClass::Logistic, ModelClass::Forest],
        ),
    ];
    for (seed, options, classes) in &tasks {
        let kinds = [SystemKind::Minimal, SystemKind::Flat, SystemKind::Sequential, SystemKind::Greedy];
        let (_, _, first) = learn_task(*seed, options, classes, &kinds, 0.10)?;
        let (_, _, second) = learn_task(*seed, options, classes, &kinds, 0.10)?;
        ensure(first.len() == second.len(), || "different number of systems".into())?;
        for (a, b) in first.iter().zip(&second) {
            let (ja, jb) = (a.to_json().map_err(|e| e.to_string())?, b.to_json().map_err(|e| e.to_string())?);
            ensure(ja == jb, || format!("task {seed} {}: artifacts differ", a.kind.name()))?;
        }
        for system in first.iter().filter(|s| s.selected) {
            let restored = ParticipatorySystem::from_json(&system.to_json().map_err(|e| e.to_string())?).map_err(|e| e.to_string())?;
            let schema = &system.schema;
            for _ in 0..1000 {
                let x: Vec<f64> = (0..system.feature_names.len()).map(|_| rng.random_range(-4.0..4.0)).collect();
                let report = ReportingGroup(
                    (0..schema.k())
                        .map(|a| rng.random_bool(0.6).then(|| rng.random_range(0..schema.n_levels(a))))
                        .collect(),
                );
                let p = system.predict(&x, &report).map_err(|e| e.to_string())?;
                let q = restored.predict(&x, &report).map_err(|e| e.to_string())?;
                ensure(p.score.to_bits() == q.score.to_bits() && p.node == q.node && p.model_id == q.model_id, || {
                    format!("task {seed} {}: prediction changed after round trip", system.kind.name())
                })?;
                predictions += 1;
            }
        }
    }
    Ok(format!("byte-identical artifacts on 3 tasks × 4 kinds; {predictions} bit-identical predictions after round trip"))
}

fn worsenalization_detection() -> Check {
    let mut details = Vec::new();
    for seed in 0..10u64 {
        let d = synth::worsenalization_task(seed);
        let bundle = split_dataset(&d, SplitOptions { seed, ..Default::default() }).map_err(|e| e.to_string())?;
        let pool = build_pool(&bundle, &[ModelClass::Logistic], &PoolConfig::default(), seed).map_err(|e| e.to_string())?;
        let config = LearnConfig {
            kinds: vec![SystemKind::Minimal],
            alpha: 0.10,
            seed,
            ..LearnConfig::default()
        };
        let system = learn_systems(&bundle, &pool, &config).map_err(|e| e.to_string())?.remove(0);
        let onehot = pool.get("logistic:onehot").ok_or("no onehot model")?;
        let generic = pool.get("logistic:generic").ok_or("no generic model")?;
        let eval = EvalConfig {
            metric: Metric::Error,
            alpha: 0.10,
            seed,
            ..EvalConfig::default()
        };
        let static_report = evaluate(&Evaluand::Static { model: onehot, generic }, &bundle.test, &eval).map_err(|e| e.to_string())?;
        let system_report = evaluate(&Evaluand::System { system: &system, policy: Policy::FullTruthful }, &bundle.test, &eval).map_err(|e| e.to_string())?;
        details.push((static_report.rationality_violations, system_report.rationality_violations));
    }
    ensure(details.iter().all(|&(s, m)| s >= 1 && m == 0), || format!("(static, minimal) violations per seed: {details:?}"))?;
    Ok(format!("static onehot violations {:?}; minimal system 0 on all 10 seeds", details.iter().map(|d| d.0).collect::<Vec<_>>()))
}

fn main() {
    let mut results: Vec<(&str, Check)> = Vec::new();
    let mut run = |name: &'static str, f: &mut dyn FnMut() -> Check| {
        let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|e| {
            Err(e.downcast_ref::<String>().cloned().or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string())).unwrap_or_else(|| "panicked".into()))
        });
        match &outcome {
            Ok(detail) => println!("PASS  {name}: {detail}"),
            Err(why) => println!("FAIL  {name}: {why}"),
        }
        results.push((name, outcome));
    };

    run("illustration_reproduction", &mut illustration_reproduction);
    let started = Instant::now();
    let runs = suite();
    eprintln!("randomized suite learned in {:.1?}", started.elapsed());
    match &runs {
        Ok(runs) => {
            run("structural_invariants_50_tasks", &mut || structural_invariants(runs));
            run("baseline_performance_50_tasks", &mut || baseline_performance(runs));
        }
        Err(e) => {
            run("structural_invariants_50_tasks", &mut || Err(e.clone()));
            run("baseline_performance_50_tasks", &mut || Err(e.clone()));
        }
    }
    run("assignment_oracle", &mut assignment_oracle);
    run("enumeration_oracle", &mut enumeration_oracle);
    run("statistical_test_oracles", &mut statistical_oracles);
    match &runs {
        Ok(runs) => {
            run("metric_identities", &mut || metric_identities(runs));
            run("simulation_properties", &mut || simulation_properties(runs));
        }
        Err(e) => {
            run("metric_identities", &mut || Err(e.clone()));
            run("simulation_properties", &mut || Err(e.clone()));
        }
    }
    run("determinism_and_round_trip", &mut determinism_and_round_trip);
    run("worsenalization_detection", &mut worsenalization_detection);

    let failed = results.iter().filter(|(_, r)| r.is_err()).count();
    println!("acceptance: {} passed, {failed} failed", results.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
