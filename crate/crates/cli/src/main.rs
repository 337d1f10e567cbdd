//! `partsys`: learn, evaluate, simulate and serve participatory systems.
//!
//! Exit codes: 0 success, 2 configuration error, 3 data or artifact error,
//! 4 training error, 5 bind failure.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::{info, warn};
use partsys::assembly::{LearnConfig, SystemKind, TestConfig};
use partsys::config::SchemaConfig;
use partsys::dataset::{load_dataset, split_dataset, write_dataset, SplitOptions};
use partsys::interface::{enumerate_sequential, ReportingTree, TreeConstraints};
use partsys::metrics::{data_use, evaluate, options_pruned, EvalConfig, Evaluand, EvaluationReport, Policy};
use partsys::models::{Metric, ModelClass};
use partsys::pool::{build_pool, PoolConfig};
use partsys::simulate::{participation_profile, write_profile_csv, Population, RiskTable};
use partsys::{learn_systems, synth, Dataset, ParticipatorySystem, SplitBundle};

#[derive(Parser)]
#[command(name = "partsys", version, about = "Participatory systems: personalization people opt into")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Learn systems from a dataset and write one artifact per kind.
    Train(TrainArgs),
    /// Evaluate a system artifact on test data.
    Evaluate(EvaluateArgs),
    /// Count or list the sequential reporting trees a dataset admits.
    Enumerate(EnumerateArgs),
    /// Participation profile of a system across disclosure costs.
    Simulate(SimulateArgs),
    /// Serve interactive reporting sessions over HTTP.
    Serve(ServeArgs),
    /// Write a synthetic dataset and its schema config.
    Fixture(FixtureArgs),
}

#[derive(Args)]
struct DataArgs {
    /// CSV with a header row.
    #[arg(long)]
    data: PathBuf,
    /// Schema config (JSON).
    #[arg(long)]
    schema: PathBuf,
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    input: DataArgs,
    /// System kinds to learn (repeatable).
    #[arg(long = "kind", value_enum, default_values_t = [KindArg::Minimal, KindArg::Flat, KindArg::Sequential])]
    kinds: Vec<KindArg>,
    #[arg(long, value_enum, default_value_t = MetricArg::Error)]
    metric: MetricArg,
    /// Model classes in the pool (repeatable); `fixed-rule` uses the schema's fixed models.
    #[arg(long = "model-class", value_enum, default_values_t = [ClassArg::Logistic])]
    model_classes: Vec<ClassArg>,
    #[arg(long, default_value_t = 0.10)]
    alpha: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 0.2)]
    test_frac: f64,
    #[arg(long, default_value_t = 0.2)]
    prune_frac: f64,
    /// Assign and prune on the same rows.
    #[arg(long)]
    shared_assign_prune: bool,
    /// Held-out test CSV; when given, `--data` is not split for testing.
    #[arg(long)]
    test_data: Option<PathBuf>,
    /// Cap on enumerated sequential trees.
    #[arg(long)]
    max_trees: Option<usize>,
    /// Minimum rows per node of a sequential tree (default: features + 1).
    #[arg(long)]
    min_samples: Option<usize>,
    /// Skip subgroup models for partially reported groups.
    #[arg(long)]
    full_groups_only: bool,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvaluateArgs {
    /// System artifact.
    #[arg(long)]
    system: PathBuf,
    #[command(flatten)]
    input: DataArgs,
    /// Defaults to the system's metric.
    #[arg(long, value_enum)]
    metric: Option<MetricArg>,
    #[arg(long, value_enum, default_value_t = PolicyArg::FullTruthful)]
    policy: PolicyArg,
    /// Also evaluate a model of the system's registry as a static model (repeatable).
    #[arg(long = "static-model")]
    static_models: Vec<String>,
    /// Bootstrap resamples for the violation test.
    #[arg(long, default_value_t = 100)]
    resamples: usize,
    /// Defaults to the system's alpha.
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EnumerateArgs {
    #[command(flatten)]
    input: DataArgs,
    #[arg(long)]
    max_trees: Option<usize>,
    #[arg(long)]
    min_samples: Option<usize>,
    /// Allow nodes whose rows carry a single label.
    #[arg(long)]
    allow_single_class: bool,
    /// Print only the number of trees.
    #[arg(long)]
    count_only: bool,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long)]
    system: PathBuf,
    #[command(flatten)]
    input: DataArgs,
    /// Per-attribute disclosure costs to profile.
    #[arg(long, value_delimiter = ',', default_values_t = [0.0, 0.01, 0.02, 0.05, 0.1, 0.2, 0.5, 1.0])]
    costs: Vec<f64>,
    #[arg(long, default_value_t = 1.0)]
    benefit_scale: f64,
    /// Draw per-agent cost multipliers from U(0.5, 1.5).
    #[arg(long)]
    random_costs: bool,
    /// Agents see risks measured on `--data` instead of the displayed ones.
    #[arg(long)]
    oracle: bool,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Profile CSV.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ServeArgs {
    #[arg(long)]
    system: PathBuf,
    #[arg(long, default_value = "127.0.0.1")]
    host: String,
    #[arg(long, default_value_t = 8080)]
    port: u16,
    #[arg(long, default_value_t = 15)]
    idle_minutes: u64,
}

#[derive(Args)]
struct FixtureArgs {
    #[arg(long, value_enum, default_value_t = FixtureName::Illustration)]
    name: FixtureName,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Rows for the random task.
    #[arg(long, default_value_t = 1000)]
    n: usize,
    /// Writes `data.csv` and `schema.json` here.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum KindArg {
    Minimal,
    Flat,
    Sequential,
    Greedy,
}

impl From<KindArg> for SystemKind {
    fn from(k: KindArg) -> Self {
        match k {
            KindArg::Minimal => SystemKind::Minimal,
            KindArg::Flat => SystemKind::Flat,
            KindArg::Sequential => SystemKind::Sequential,
            KindArg::Greedy => SystemKind::Greedy,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum MetricArg {
    Error,
    Auc,
}

impl From<MetricArg> for Metric {
    fn from(m: MetricArg) -> Self {
        match m {
            MetricArg::Error => Metric::Error,
            MetricArg::Auc => Metric::Auc,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum ClassArg {
    Logistic,
    Forest,
    FixedRule,
}

impl From<ClassArg> for ModelClass {
    fn from(c: ClassArg) -> Self {
        match c {
            ClassArg::Logistic => ModelClass::Logistic,
            ClassArg::Forest => ModelClass::Forest,
            ClassArg::FixedRule => ModelClass::FixedRule,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum PolicyArg {
    FullTruthful,
    PositiveGain,
}

#[derive(Clone, Copy, ValueEnum)]
enum FixtureName {
    Illustration,
    Random,
    Worsenalization,
}

struct Failure {
    code: u8,
    message: String,
}

fn config_err(e: impl std::fmt::Display) -> Failure {
    Failure { code: 2, message: e.to_string() }
}

fn data_err(e: impl std::fmt::Display) -> Failure {
    Failure { code: 3, message: e.to_string() }
}

fn training_err(e: partsys::Error) -> Failure {
    match e {
        partsys::Error::InvalidArgument(_) | partsys::Error::TooManyAttributes(_) | partsys::Error::InvalidSchema(_) => {
            config_err(e)
        }
        e => Failure { code: 4, message: e.to_string() },
    }
}

type CliResult<T = ()> = Result<T, Failure>;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Train(a) => train(a),
        Command::Evaluate(a) => evaluate_cmd(a),
        Command::Enumerate(a) => enumerate(a),
        Command::Simulate(a) => simulate(a),
        Command::Serve(a) => serve(a),
        Command::Fixture(a) => fixture(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

fn read_schema(path: &Path) -> CliResult<SchemaConfig> {
    let text = fs::read_to_string(path).map_err(|e| config_err(format!("cannot read {}: {e}", path.display())))?;
    SchemaConfig::from_json(&text).map_err(|e| config_err(format!("{}: {e}", path.display())))
}

fn read_data(path: &Path, config: &SchemaConfig) -> CliResult<Dataset> {
    let file = fs::File::open(path).map_err(|e| data_err(format!("cannot read {}: {e}", path.display())))?;
    load_dataset(file, config).map_err(|e| data_err(format!("{}: {e}", path.display())))
}

fn read_system(path: &Path) -> CliResult<ParticipatorySystem> {
    let text = fs::read_to_string(path).map_err(|e| data_err(format!("cannot read {}: {e}", path.display())))?;
    ParticipatorySystem::from_json(&text).map_err(|e| data_err(format!("{}: {e}", path.display())))
}

fn write_file(path: &Path, contents: &str) -> CliResult {
    fs::write(path, contents).map_err(|e| data_err(format!("cannot write {}: {e}", path.display())))
}

fn create_dir(path: &Path) -> CliResult {
    fs::create_dir_all(path).map_err(|e| data_err(format!("cannot create {}: {e}", path.display())))
}

/// The data must carry the schema and features the system was built with.
fn check_compatible(system: &ParticipatorySystem, d: &Dataset) -> CliResult {
    if d.schema().content_hash() != system.provenance.schema_hash {
        return Err(data_err("data schema does not match the system's schema"));
    }
    if d.feature_names() != system.feature_names.as_slice() {
        return Err(data_err(format!(
            "data features {:?} do not match the system's {:?}",
            d.feature_names(),
            system.feature_names
        )));
    }
    Ok(())
}

fn validate_fraction(name: &str, f: f64) -> CliResult {
    if f > 0.0 && f < 1.0 {
        Ok(())
    } else {
        Err(config_err(format!("{name} must lie in (0, 1), got {f}")))
    }
}

fn train(a: TrainArgs) -> CliResult {
    validate_fraction("--alpha", a.alpha)?;
    if a.test_data.is_none() {
        validate_fraction("--test-frac", a.test_frac)?;
    }
    if !a.shared_assign_prune {
        validate_fraction("--prune-frac", a.prune_frac)?;
    }
    if a.min_samples == Some(0) || a.max_trees == Some(0) {
        return Err(config_err("--min-samples and --max-trees must be at least 1"));
    }
    let config = read_schema(&a.input.schema)?;
    let ordering = config.ordering_rules().map_err(config_err)?;
    let d = read_data(&a.input.data, &config)?;
    let classes: Vec<ModelClass> = a.model_classes.iter().map(|&c| c.into()).collect();
    let fixed_models = if classes.contains(&ModelClass::FixedRule) {
        let models = config.fixed_models(d.d()).map_err(config_err)?;
        if models.is_empty() {
            return Err(config_err("--model-class fixed-rule needs fixed_models in the schema config"));
        }
        models
    } else {
        Vec::new()
    };

    let bundle = match &a.test_data {
        Some(path) => {
            let test = read_data(path, &config)?;
            if a.shared_assign_prune {
                SplitBundle::from_parts(d.clone(), d, test, a.seed)
            } else {
                let options = SplitOptions {
                    test_fraction: a.prune_frac,
                    prune_fraction: a.prune_frac,
                    seed: a.seed,
                    shared_assign_prune: true,
                };
                let parts = split_dataset(&d, options).map_err(data_err)?;
                SplitBundle::from_parts(parts.assign, parts.test, test, a.seed)
            }
        }
        None => split_dataset(
            &d,
            SplitOptions {
                test_fraction: a.test_frac,
                prune_fraction: a.prune_frac,
                seed: a.seed,
                shared_assign_prune: a.shared_assign_prune,
            },
        )
        .map_err(data_err)?,
    };
    info!(
        "split: {} assign, {} prune, {} test rows",
        bundle.assign.n(),
        bundle.prune.n(),
        bundle.test.n()
    );

    let pool_config = PoolConfig {
        include_partial_groups: !a.full_groups_only,
        fixed_models,
    };
    let pool = build_pool(&bundle, &classes, &pool_config, partsys::derive_seed(a.seed, "pool")).map_err(training_err)?;
    info!("model pool: {} models", pool.len());

    let learn = LearnConfig {
        kinds: a.kinds.iter().map(|&k| k.into()).collect(),
        metric: a.metric.into(),
        assign_metric: None,
        alpha: a.alpha,
        constraints: TreeConstraints {
            min_samples: a.min_samples,
            ordering,
            max_trees: a.max_trees,
            ..TreeConstraints::default()
        },
        test: TestConfig {
            seed: a.seed,
            ..TestConfig::default()
        },
        seed: a.seed,
    };
    let systems = learn_systems(&bundle, &pool, &learn).map_err(training_err)?;

    create_dir(&a.out)?;
    let mut test_csv = Vec::new();
    write_dataset(&bundle.test, &config.label, &mut test_csv).map_err(data_err)?;
    write_file(&a.out.join("test.csv"), &String::from_utf8_lossy(&test_csv))?;

    println!("kind\tnodes\tsurviving\ttest_risk\tgeneric_risk\toptions_pruned\tdata_use\tartifact");
    let mut summary = Vec::new();
    let mut written = std::collections::BTreeSet::new();
    for system in systems.iter().filter(|s| s.selected) {
        let kind = system.kind.name();
        if !written.insert(kind) {
            continue;
        }
        let path = a.out.join(format!("{kind}.json"));
        write_file(&path, &system.to_json().map_err(data_err)?)?;
        let risk = system.weighted_risk(&bundle.test);
        let generic = system
            .root_model()
            .predict_scores(&bundle.test)
            .ok()
            .and_then(|s| partsys::metrics::group_weighted_risk(&bundle.test, &s, system.metric));
        let pruned = options_pruned(system);
        let used = data_use(system, &bundle.test);
        println!(
            "{kind}\t{}\t{}\t{}\t{}\t{pruned:.4}\t{used:.4}\t{}",
            system.tree.len(),
            system.surviving_nodes().len(),
            fmt_opt(risk),
            fmt_opt(generic),
            path.display()
        );
        summary.push(serde_json::json!({
            "kind": kind,
            "artifact": format!("{kind}.json"),
            "nodes": system.tree.len(),
            "surviving_nodes": system.surviving_nodes().len(),
            "fallback": system.fallback,
            "test_risk": risk,
            "generic_test_risk": generic,
            "options_pruned": pruned,
            "data_use": used,
        }));
    }
    let candidates = systems.iter().filter(|s| s.kind == SystemKind::Sequential).count();
    let log = serde_json::json!({
        "data": a.input.data.display().to_string(),
        "schema": a.input.schema.display().to_string(),
        "seed": a.seed,
        "alpha": a.alpha,
        "metric": Metric::from(a.metric),
        "dataset_hash": bundle.content_hash(),
        "rows": {"assign": bundle.assign.n(), "prune": bundle.prune.n(), "test": bundle.test.n()},
        "pool": pool.models().iter().map(|m| m.id()).collect::<Vec<_>>(),
        "sequential_candidates": candidates,
        "systems": summary,
    });
    let mut text = serde_json::to_string_pretty(&log).map_err(data_err)?;
    text.push('\n');
    write_file(&a.out.join("build_log.json"), &text)
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".into(), |v| format!("{v:.4}"))
}

fn evaluate_cmd(a: EvaluateArgs) -> CliResult {
    let system = read_system(&a.system)?;
    let config = read_schema(&a.input.schema)?;
    let test = read_data(&a.input.data, &config)?;
    check_compatible(&system, &test)?;
    let alpha = a.alpha.unwrap_or(system.alpha);
    validate_fraction("--alpha", alpha)?;
    let eval = EvalConfig {
        metric: a.metric.map_or(system.metric, Metric::from),
        alpha,
        resamples: a.resamples,
        seed: a.seed,
    };
    let policy = match a.policy {
        PolicyArg::FullTruthful => Policy::FullTruthful,
        PolicyArg::PositiveGain => Policy::PositiveGain,
    };
    let mut evaluands = vec![Evaluand::System { system: &system, policy }];
    let generic = system.root_model();
    for id in &a.static_models {
        let model = system.model(id).ok_or_else(|| config_err(format!("model `{id}` is not in the system")))?;
        evaluands.push(Evaluand::Static { model, generic });
    }
    let reports = evaluands
        .iter()
        .map(|e| evaluate(e, &test, &eval))
        .collect::<Result<Vec<_>, _>>()
        .map_err(training_err)?;

    create_dir(&a.out)?;
    for report in &reports {
        for g in report.groups.iter().filter(|g| g.n == 0) {
            warn!("{}: no test rows for group {}", report.name, g.group);
        }
        write_file(&a.out.join(format!("{}.json", file_stem(&report.name))), &report.to_json().map_err(data_err)?)?;
        println!(
            "{}\tperformance {:.4}\tgain {:.4}\tgroup gains [{:.4}, {:.4}]\tviolations {}\tdata_use {:.4}",
            report.name,
            report.overall_performance,
            report.overall_gain,
            report.group_gain_min,
            report.group_gain_max,
            report.rationality_violations,
            report.data_use
        );
    }
    let mut results = Vec::new();
    EvaluationReport::write_results_csv(&reports, &mut results).map_err(data_err)?;
    write_file(&a.out.join("results.csv"), &String::from_utf8_lossy(&results))?;
    let mut groups = Vec::new();
    EvaluationReport::write_groups_csv(&reports, &mut groups).map_err(data_err)?;
    write_file(&a.out.join("groups.csv"), &String::from_utf8_lossy(&groups))
}

fn file_stem(name: &str) -> String {
    name.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
        .collect()
}

fn enumerate(a: EnumerateArgs) -> CliResult {
    if a.min_samples == Some(0) || a.max_trees == Some(0) {
        return Err(config_err("--min-samples and --max-trees must be at least 1"));
    }
    let config = read_schema(&a.input.schema)?;
    let ordering = config.ordering_rules().map_err(config_err)?;
    let d = read_data(&a.input.data, &config)?;
    let constraints = TreeConstraints {
        min_samples: a.min_samples,
        require_both_classes: !a.allow_single_class,
        ordering,
        max_trees: a.max_trees,
    };
    let trees = enumerate_sequential(d.schema(), &d, &constraints).map_err(config_err)?;
    if a.count_only {
        println!("{}", trees.len());
        return Ok(());
    }
    println!("{} trees", trees.len());
    for (i, tree) in trees.iter().enumerate() {
        println!("tree {i}");
        print_tree(tree, &d, 0, 1);
    }
    Ok(())
}

fn print_tree(tree: &ReportingTree, d: &Dataset, node: usize, depth: usize) {
    let n = &tree.nodes[node];
    println!("{}{}", "  ".repeat(depth), d.schema().describe(&n.report));
    for &c in &n.children {
        print_tree(tree, d, c, depth + 1);
    }
}

fn simulate(a: SimulateArgs) -> CliResult {
    if a.costs.iter().any(|c| c.is_nan() || *c < 0.0) {
        return Err(config_err("--costs must be ≥ 0"));
    }
    if !(a.benefit_scale > 0.0 && a.benefit_scale.is_finite()) {
        return Err(config_err("--benefit-scale must be positive"));
    }
    let system = read_system(&a.system)?;
    let config = read_schema(&a.input.schema)?;
    let d = read_data(&a.input.data, &config)?;
    check_compatible(&system, &d)?;
    let table = if a.oracle {
        RiskTable::oracle(&system, &d).map_err(training_err)?
    } else {
        RiskTable::displayed(&system)
    };
    let population = if a.random_costs {
        Population::random(d, a.benefit_scale, a.seed)
    } else {
        Population::uniform(d, a.benefit_scale)
    };
    let rows = participation_profile(&system, &population, &a.costs, &table).map_err(training_err)?;
    let mut csv = Vec::new();
    write_profile_csv(&rows, &mut csv).map_err(data_err)?;
    write_file(&a.out, &String::from_utf8_lossy(&csv))?;
    for row in rows.iter().filter(|r| r.group == "all") {
        println!("cost {}\topt-in {:.4}\trisk {}", row.cost, row.opt_in_rate, fmt_opt(row.risk));
    }
    Ok(())
}

fn serve(a: ServeArgs) -> CliResult {
    let system = read_system(&a.system)?;
    let runtime = tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .map_err(|e| Failure { code: 5, message: e.to_string() })?;
    runtime.block_on(async {
        let addr = format!("{}:{}", a.host, a.port);
        let listener = tokio::net::TcpListener::bind(&addr)
            .await
            .map_err(|e| Failure { code: 5, message: format!("cannot bind {addr}: {e}") })?;
        info!("serving {} system on http://{addr}", system.kind.name());
        let config = partsys_service::ServiceConfig {
            idle_expiry: std::time::Duration::from_secs(a.idle_minutes * 60),
        };
        partsys_service::serve(listener, system, config)
            .await
            .map_err(|e| Failure { code: 5, message: e.to_string() })
    })
}

fn fixture(a: FixtureArgs) -> CliResult {
    let (data, config) = match a.name {
        FixtureName::Illustration => (synth::illustration_dataset(), synth::illustration_config()),
        FixtureName::Random => {
            let task = synth::random_task(
                a.seed,
                &synth::TaskOptions {
                    n: a.n,
                    ..Default::default()
                },
            );
            (task.data, task.config)
        }
        FixtureName::Worsenalization => {
            let data = synth::worsenalization_task(a.seed);
            let names: Vec<&str> = data.feature_names().iter().map(String::as_str).collect();
            let config = SchemaConfig::from_schema(data.schema(), "y", &names);
            (data, config)
        }
    };
    create_dir(&a.out)?;
    let mut csv = Vec::new();
    write_dataset(&data, &config.label, &mut csv).map_err(data_err)?;
    write_file(&a.out.join("data.csv"), &String::from_utf8_lossy(&csv))?;
    write_file(&a.out.join("schema.json"), &config.to_json().map_err(data_err)?)?;
    println!("{} rows written to {}", data.n(), a.out.display());
    Ok(())
}
