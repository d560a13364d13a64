use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs;
use std::path::Path;

use anyhow::{Context, Result};
use hwrec::domain::{FeatureDims, MetricGroup, Phase};
use hwrec::fusion::features::refinement_features;
use hwrec::fusion::train::{ground_truth_from_records, TrainExample};
use hwrec::fusion::{recommend_fusion, train_scorer, RefinementSource, ScorerConfig, ScorerParams, TokenSource};
use hwrec::harness::host::HostSensors;
use hwrec::harness::scripted::{ScriptedSensors, ScriptedWorkload};
use hwrec::harness::{
    BenchPair, Harness, HarnessConfig, Readings, SensorKind, SensorProvider, StabilizePolicy, Workload,
};
use hwrec::ranking::{
    aggregate_records, copeland_from_aggregates, kendall_tau, objective_from_aggregates, Scope, Statistic,
};
use hwrec::shadow::{recommend_shadow, SelectorKind};
use hwrec::store::{RecordFilter, RegistryKind, Store};
use hwrec::synthgen::{generate_world, idle_sensors, world_workload, PlantedWorld, WorldSpec};
use hwrec::{Error, MetricKind, RankingTable, WeightConfig};
use serde::{Deserialize, Serialize};

use super::{
    BenchArgs, Cli, Command, KindArg, RankArgs, RankMethodArg, RecommendArgs, RecommendMode, SensorArg,
    StatisticArg, TrainArgs, TrainMode,
};
use crate::config::{read_json, FileConfig, TrainSpec};
use crate::output::{export, print_json, ranking_text, Format};

/// A mistake in how the command was invoked.
#[derive(Debug)]
struct Usage(String);

impl fmt::Display for Usage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}

/// A run that completed but reported failures.
#[derive(Debug)]
struct RuntimeFailure(String);

impl fmt::Display for RuntimeFailure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for RuntimeFailure {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    Usage(msg.into()).into()
}

pub fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.is::<Usage>() {
            return 1;
        }
        if cause.is::<RuntimeFailure>() {
            return 3;
        }
        if let Some(e) = cause.downcast_ref::<Error>() {
            return match e {
                Error::Sensor { .. } | Error::Workload { .. } | Error::Diverged { .. } | Error::Locked(_) => 3,
                Error::Io(io) if io.kind() != std::io::ErrorKind::NotFound => 3,
                _ => 2,
            };
        }
        if cause.is::<serde_json::Error>() {
            return 2;
        }
        if let Some(io) = cause.downcast_ref::<std::io::Error>() {
            return if io.kind() == std::io::ErrorKind::NotFound { 2 } else { 3 };
        }
    }
    3
}

pub fn run(cli: Cli) -> Result<()> {
    let config = FileConfig::load(cli.config.as_deref())?;
    let open_store = || -> Result<Store> {
        Ok(match &cli.home {
            Some(h) => Store::open(h)?,
            None => Store::from_env()?,
        })
    };
    match cli.command {
        Command::Synthgen { spec, out } => synthgen(&spec, &out),
        Command::Ingest { kind, file } => ingest(&open_store()?, kind, &file, cli.format),
        Command::Bench(args) => bench(&open_store()?, &config, args, cli.format),
        Command::Rank(args) => rank(&open_store()?, &config, args, cli.format),
        Command::Train(args) => {
            let store = match &args.data {
                Some(d) => Store::open(d)?,
                None => open_store()?,
            };
            train(&store, &config, args, cli.format)
        }
        Command::Recommend(args) => recommend(&open_store()?, args, cli.format),
        Command::Eval { pred, truth } => eval(&pred, &truth, cli.format),
    }
}

fn synthgen(spec: &str, out: &Path) -> Result<()> {
    let spec: WorldSpec = read_json(spec)?;
    let world = generate_world(&spec)?;
    fs::create_dir_all(out)?;
    let write = |name: &str, text: String| fs::write(out.join(name), text).with_context(|| format!("writing {name}"));
    write("models.json", serde_json::to_string_pretty(&world.models)?)?;
    write("hardware.json", serde_json::to_string_pretty(&world.hardware)?)?;
    write("tasks.json", serde_json::to_string_pretty(&world.tasks)?)?;
    write("world.json", world.to_json()?)?;
    println!(
        "wrote {} models, {} devices, {} tasks to {}",
        world.models.len(),
        world.hardware.len(),
        world.tasks.len(),
        out.display()
    );
    Ok(())
}

fn ingest(store: &Store, kind: KindArg, file: &Path, format: Format) -> Result<()> {
    let kind = match kind {
        KindArg::Models => RegistryKind::Models,
        KindArg::Hardware => RegistryKind::Hardware,
        KindArg::Tasks => RegistryKind::Tasks,
    };
    let report = store.ingest_registry(file, kind)?;
    match format {
        Format::Json => print_json(&report)?,
        Format::Text => println!("ingested {} {:?} entries from {}", report.count, kind, file.display()),
    }
    Ok(())
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct PairSpec {
    model_id: String,
    task_id: String,
    #[serde(default)]
    dataset_size: Option<u64>,
    #[serde(default)]
    base_ms: Option<f64>,
    #[serde(default)]
    per_sample_ms: Option<f64>,
    #[serde(default)]
    accuracy: Option<f64>,
}

fn load_world(path: &Path) -> Result<PlantedWorld> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    PlantedWorld::from_json(&text).with_context(|| format!("loading world {}", path.display()))
}

fn nominal_readings() -> Readings {
    Readings { cpu_util: 0.05, ram_util: 0.3, temp_c: 40.0 }
}

fn bench(store: &Store, config: &FileConfig, args: BenchArgs, format: Format) -> Result<()> {
    let sensor = match args.sensor {
        Some(SensorArg::Host) => SensorKind::Host,
        Some(SensorArg::Scripted) => SensorKind::Scripted,
        Some(SensorArg::Synthetic) => SensorKind::Synthetic,
        None => SensorKind::from_env().map_err(|e| usage(e.to_string()))?,
    };
    let world = args.world.as_deref().map(load_world).transpose()?;
    if sensor == SensorKind::Synthetic && world.is_none() {
        return Err(usage("synthetic sensors need --world"));
    }
    let policy: StabilizePolicy = match &args.policy {
        Some(p) => read_json(p)?,
        None => config.policy.clone().unwrap_or_default(),
    };
    let harness_config = HarnessConfig {
        policy,
        composite: config.composite.clone().unwrap_or_default(),
        sweep_repeats: args.sweep_repeats,
    };

    let hardware = store.hardware_profile(&args.hardware)?;
    let specs: Vec<PairSpec> = read_json(&args.pairs.to_string_lossy())?;
    let mut pairs = Vec::with_capacity(specs.len());
    for spec in specs {
        store.model(&spec.model_id)?;
        let task = store.task(&spec.task_id)?;
        let (workload, sensors): (Box<dyn Workload>, Option<Box<dyn SensorProvider>>) = match &world {
            Some(w) => {
                let (wl, s) = world_workload(w, &spec.model_id, &spec.task_id, &hardware.id)?;
                let sensors = (sensor == SensorKind::Synthetic).then(|| Box::new(s) as Box<dyn SensorProvider>);
                (Box::new(wl), sensors)
            }
            None => {
                let wl = ScriptedWorkload::linear(spec.base_ms.unwrap_or(1.0), spec.per_sample_ms.unwrap_or(0.1))
                    .with_accuracy(spec.accuracy.unwrap_or(0.5));
                (Box::new(wl), None)
            }
        };
        pairs.push(BenchPair {
            model_id: spec.model_id,
            task,
            workload,
            sensors,
            dataset_size: spec.dataset_size,
        });
    }

    let harness_sensors: Box<dyn SensorProvider> = match sensor {
        SensorKind::Host => Box::new(HostSensors::new().assume_temperature(nominal_readings().temp_c)),
        SensorKind::Scripted => {
            Box::new(ScriptedSensors::constant(nominal_readings()).with_power(5.0).with_peak_memory(64.0))
        }
        SensorKind::Synthetic => Box::new(idle_sensors(world.as_ref().expect("checked above"), &hardware.id)?),
    };
    let mut harness = Harness::new(harness_sensors, harness_config)?;
    let mut writer = store.writer()?;
    let report = harness.benchmark_pairs(pairs, &hardware, &mut writer)?;
    match format {
        Format::Json => print_json(&report)?,
        Format::Text => print!("{report}"),
    }
    let failed = report.failed().count();
    if failed > 0 {
        return Err(RuntimeFailure(format!("{failed} of {} pairs failed", report.pairs.len())).into());
    }
    Ok(())
}

fn require_weights(config: &FileConfig, weights: Option<&str>, preset: Option<crate::config::Preset>) -> Result<WeightConfig> {
    config
        .resolve_weights(weights, preset)?
        .ok_or_else(|| usage("no weights: pass --weights or --preset, or set them in --config"))
}

fn scope_aggregates(store: &Store, task: &str, hardware: &str, statistic: Statistic) -> Result<BTreeMap<String, hwrec::ranking::MetricMap>> {
    let records = store.query_records(&RecordFilter {
        task_id: Some(task.to_string()),
        hardware_id: Some(hardware.to_string()),
        ..Default::default()
    })?;
    if records.is_empty() {
        return Err(Error::InvalidInput(format!("no benchmark records for task {task} on {hardware}")).into());
    }
    let aggs = aggregate_records(&records, &Scope::new(task, hardware), statistic)?;
    for w in &aggs.warnings {
        eprintln!("warning: {w}");
    }
    Ok(aggs.values)
}

fn rank(store: &Store, config: &FileConfig, args: RankArgs, format: Format) -> Result<()> {
    let weights = require_weights(config, args.weights.weights.as_deref(), args.weights.preset)?;
    store.task(&args.task)?;
    store.hardware_profile(&args.hardware)?;
    let statistic = match args.statistic {
        StatisticArg::Mean => Statistic::Mean,
        StatisticArg::Median => Statistic::Median,
    };
    let aggs = scope_aggregates(store, &args.task, &args.hardware, statistic)?;
    let table = match args.method {
        RankMethodArg::Copeland => copeland_from_aggregates(&aggs, &weights)?,
        RankMethodArg::Objective => {
            let kind = MetricKind::parse(&args.performance)
                .ok_or_else(|| usage(format!("unknown metric `{}`", args.performance)))?;
            objective_from_aggregates(&aggs, kind, &weights)?
        }
    };
    emit_table(&table, format)?;
    if let Some(out) = &args.out {
        export::<()>(out, &table, None)?;
    }
    Ok(())
}

fn emit_table(table: &RankingTable, format: Format) -> Result<()> {
    match format {
        Format::Json => print_json(table),
        Format::Text => {
            print!("{}", ranking_text(table));
            Ok(())
        }
    }
}

fn train(store: &Store, config: &FileConfig, args: TrainArgs, format: Format) -> Result<()> {
    let spec: TrainSpec = match &args.hyper {
        Some(h) => read_json(h)?,
        None => config.hyper.clone().unwrap_or_default(),
    };
    let weights = require_weights(config, args.weights.weights.as_deref(), args.weights.preset)?;
    let (source, weights) = match args.mode {
        TrainMode::Fusion => (TokenSource::TaskAndHardware, weights),
        TrainMode::Task => (TokenSource::TaskOnly, restrict(&weights, MetricGroup::Model)?),
        TrainMode::Hardware => (TokenSource::HardwareOnly, restrict(&weights, MetricGroup::Hardware)?),
    };

    let models = store.models()?;
    let hardware = store.hardware()?;
    let tasks = store.tasks()?;
    let (Some(m0), Some(h0), Some(t0)) = (models.first(), hardware.first(), tasks.first()) else {
        return Err(Error::InvalidInput("train needs models, hardware and tasks in the registry".into()).into());
    };
    let dims = FeatureDims {
        model: m0.model_features.len(),
        hardware: h0.hw_features.len(),
        task: t0.task_features.len(),
    };

    let records = store.query_records(&RecordFilter { phase: Some(Phase::FixedBatch), ..Default::default() })?;
    let scopes: BTreeSet<(String, String)> =
        records.iter().map(|r| (r.task_id.clone(), r.hardware_id.clone())).collect();
    let mut examples = Vec::new();
    for (task_id, hw_id) in &scopes {
        let scope = Scope::new(task_id, hw_id);
        let truth = ground_truth_from_records(&records, &scope, &weights)?;
        if truth.table.len() < 2 {
            continue;
        }
        let candidates = truth
            .table
            .candidate_ids
            .iter()
            .map(|id| {
                models.iter().find(|m| &m.id == id).cloned().ok_or_else(|| Error::UnknownId { kind: "model", id: id.clone() })
            })
            .collect::<Result<Vec<_>, _>>()?;
        let refinement = if spec.refine {
            let aggs = aggregate_records(
                &records.iter().filter(|r| &r.task_id == task_id && &r.hardware_id == hw_id).cloned().collect::<Vec<_>>(),
                &scope,
                Statistic::Mean,
            )?;
            Some(RefinementSource {
                features: aggs.values.iter().map(|(id, m)| (id.clone(), refinement_features(m))).collect(),
            })
        } else {
            None
        };
        examples.push(TrainExample {
            task: (source != TokenSource::HardwareOnly).then(|| store.task(task_id)).transpose()?,
            hardware: (source != TokenSource::TaskOnly).then(|| store.hardware_profile(hw_id)).transpose()?,
            candidates,
            truth,
            refinement,
        });
    }
    if examples.is_empty() {
        return Err(Error::InvalidInput("no (task, hardware) scope has fixed-batch records for two or more models".into()).into());
    }

    let scorer_config = ScorerConfig::new(dims, spec.token_dim, spec.heads)
        .with_source(source)
        .with_fusion_mode(spec.fusion_mode)
        .with_refine_dim(spec.refine_dim());
    let (params, log) = train_scorer(scorer_config, &examples, &spec.hyper())?;
    params.save(&args.out).with_context(|| format!("writing {}", args.out.display()))?;
    if let Some(path) = &args.log {
        fs::write(path, log.to_csv()).with_context(|| format!("writing {}", path.display()))?;
    }
    let last = log.epochs.last();
    #[derive(Serialize)]
    struct Summary {
        examples: usize,
        epochs: usize,
        final_loss: Option<f64>,
        train_tau: Option<f64>,
        out: String,
    }
    let summary = Summary {
        examples: examples.len(),
        epochs: log.epochs.len(),
        final_loss: last.map(|e| e.loss),
        train_tau: last.map(|e| e.train_tau),
        out: args.out.display().to_string(),
    };
    match format {
        Format::Json => print_json(&summary)?,
        Format::Text => println!(
            "trained on {} scopes for {} epochs; loss {:.6}, train tau {:.4}; wrote {}",
            summary.examples,
            summary.epochs,
            summary.final_loss.unwrap_or(f64::NAN),
            summary.train_tau.unwrap_or(f64::NAN),
            summary.out
        ),
    }
    Ok(())
}

fn restrict(weights: &WeightConfig, group: MetricGroup) -> Result<WeightConfig> {
    let keep: Vec<MetricKind> = weights.metric_kinds().into_iter().filter(|k| k.group() == group).collect();
    weights
        .restricted_to(&keep)
        .with_context(|| format!("weights have no {group:?}-group metric to train on"))
}

fn load_scorer(path: &Path) -> Result<ScorerParams> {
    ScorerParams::load(path).with_context(|| format!("loading scorer {}", path.display()))
}

fn recommend(store: &Store, args: RecommendArgs, format: Format) -> Result<()> {
    let task = store.task(&args.task)?;
    let hardware = store.hardware_profile(&args.hardware)?;
    let candidates = store.models()?;
    let params = load_scorer(&args.scorer)?;
    match args.mode {
        RecommendMode::Fusion => {
            let refine = match args.top_k {
                Some(_) if params.config.refine_dim > 0 => {
                    let aggs = scope_aggregates(store, &task.id, &hardware.id, Statistic::Mean).unwrap_or_default();
                    Some(RefinementSource {
                        features: aggs.iter().map(|(id, m)| (id.clone(), refinement_features(m))).collect(),
                    })
                }
                Some(_) => {
                    eprintln!("warning: scorer has no refinement projection; --top-k ignored");
                    None
                }
                None => None,
            };
            let rec = recommend_fusion(&task, Some(&hardware), &candidates, &params, args.top_k, refine.as_ref())?;
            for w in &rec.warnings {
                eprintln!("warning: {w}");
            }
            emit_table(&rec.table, format)?;
            if let Some(out) = &args.out {
                export::<()>(out, &rec.table, None)?;
            }
        }
        RecommendMode::Shadow => {
            let hw_path = args.hw_scorer.as_deref().ok_or_else(|| usage("shadow mode needs --hw-scorer"))?;
            let hw_params = load_scorer(hw_path)?;
            let weights: Option<BTreeMap<SelectorKind, f64>> =
                args.selector_weights.as_deref().map(read_json).transpose()?;
            let result = recommend_shadow(&task, &hardware, &candidates, &params, &hw_params, weights.as_ref())?;
            match format {
                Format::Json => print_json(&result)?,
                Format::Text => {
                    print!("{}", ranking_text(&result.table));
                    for s in &result.selectors {
                        println!("\n{} selector:", s.selector);
                        print!("{}", ranking_text(&s.table));
                    }
                }
            }
            if let Some(out) = &args.out {
                export(out, &result.table, Some(&result))?;
            }
        }
    }
    Ok(())
}

#[derive(Deserialize)]
#[serde(untagged)]
enum RankingFile {
    Bare(RankingTable),
    Wrapped { table: RankingTable },
}

fn load_ranking(path: &Path) -> Result<RankingTable> {
    let file: RankingFile = read_json(&path.to_string_lossy())?;
    let table = match file {
        RankingFile::Bare(t) | RankingFile::Wrapped { table: t } => t,
    };
    let problems = table.violations();
    if !problems.is_empty() {
        return Err(Error::InvalidInput(format!("{}: {}", path.display(), problems.join("; "))).into());
    }
    Ok(table)
}

fn eval(pred: &Path, truth: &Path, format: Format) -> Result<()> {
    let tau = kendall_tau(&load_ranking(pred)?, &load_ranking(truth)?)?;
    match format {
        Format::Json => print_json(&serde_json::json!({ "kendall_tau": tau })),
        Format::Text => {
            println!("{tau:.6}");
            Ok(())
        }
    }
}
