//! Multi-seed experiment runner.
//!
//! A run expands the config into jobs, one per (attack point, seed). Jobs run
//! in parallel on a rayon pool and share nothing; their results are gathered
//! and sorted into a fixed order before anything is written, so the output is
//! independent of scheduling.

use std::borrow::Cow;
use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::time::Instant;

use hosl_core::attacks::{attack, AttackKind, AttackSpec};
use hosl_core::datasets::{
    generate_sbm, largest_connected_component, load_dataset, load_graph, make_split, save_graph,
    SbmConfig,
};
use hosl_core::gcn::{train_gcn, TrainConfig};
use hosl_core::graph::{feature_smoothness, normalize_adjacency, Graph};
use hosl_core::learner::{learn_structure, IterationRecord, LearnedStructure};
use hosl_core::numerics::DenseMatrix;
use log::{info, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{DatasetSpec, ExperimentConfig, Method};
use crate::error::{CliError, CliResult};

pub const RECORDS_FILE: &str = "records.csv";
pub const AGGREGATE_CSV: &str = "aggregate.csv";
pub const AGGREGATE_JSON: &str = "aggregate.json";
pub const CURVES_FILE: &str = "curves.csv";
pub const FAILURES_FILE: &str = "failures.json";
pub const TRACES_DIR: &str = "loss_traces";
pub const STRUCTURES_DIR: &str = "structures";

/// One (attack point, seed, method) outcome.
///
/// `smoothness_before` is the feature smoothness of the graph handed to the
/// method (the poisoned graph); `smoothness_after` is that of the structure
/// the classifier actually propagated over. Both are empty for featureless
/// graphs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRecord {
    pub dataset: String,
    pub attack: String,
    pub rate: f64,
    pub budget: Option<usize>,
    pub method: Method,
    pub seed: u64,
    pub test_accuracy: f64,
    pub val_accuracy: f64,
    pub smoothness_before: Option<f64>,
    pub smoothness_after: Option<f64>,
    /// Attack operations that could not be applied.
    pub shortfall: usize,
    pub attack_seconds: f64,
    pub train_seconds: f64,
    pub wall_time: f64,
}

/// A stage that failed for one seed; the remaining seeds still run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedFailure {
    pub seed: u64,
    pub rate: f64,
    pub budget: Option<usize>,
    pub method: Option<Method>,
    pub stage: String,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub dataset: String,
    pub attack: String,
    pub rate: f64,
    pub budget: Option<usize>,
    pub method: Method,
    pub runs: usize,
    pub accuracy_mean: f64,
    /// Sample standard deviation; zero for a single run.
    pub accuracy_std: f64,
    pub smoothness_before_mean: Option<f64>,
    pub smoothness_after_mean: Option<f64>,
    pub wall_time_mean: f64,
    /// Accuracy in percent as `mean ± std`.
    pub summary: String,
}

/// Feasibility of learned structures: entries in `[0, 1]`, symmetric to
/// within `1e-12`, zero diagonal.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeasibilityTally {
    pub checked: usize,
    pub violations: usize,
}

#[derive(Debug, Clone)]
pub struct LearnedRun {
    pub key: String,
    pub trace: Vec<IterationRecord>,
    /// Kept only when the config asks for structures to be saved.
    pub structure: Option<Graph>,
}

#[derive(Debug, Clone)]
pub struct ExperimentSummary {
    pub records: Vec<ResultRecord>,
    pub aggregates: Vec<AggregateRow>,
    pub failures: Vec<SeedFailure>,
    pub feasibility: FeasibilityTally,
    pub learned: Vec<LearnedRun>,
}

impl ExperimentSummary {
    pub fn succeeded(&self) -> bool {
        self.failures.is_empty()
    }

    /// Mean accuracy of `method` at the attack point `rate`, if any run
    /// completed there.
    pub fn mean_accuracy(&self, method: Method, rate: f64) -> Option<f64> {
        self.aggregates
            .iter()
            .find(|a| a.method == method && a.rate == rate)
            .map(|a| a.accuracy_mean)
    }
}

pub const FEASIBILITY_SYMMETRY_TOL: f64 = 1e-12;

pub fn is_feasible(s: &DenseMatrix) -> bool {
    s.data().iter().all(|&v| (0.0..=1.0).contains(&v))
        && s.asymmetry() <= FEASIBILITY_SYMMETRY_TOL
        && s.diagonal().iter().all(|&d| d == 0.0)
}

/// Loads a dataset described by a config section. Generated graphs use
/// `seed`; loaded graphs ignore it.
pub fn build_dataset(spec: &DatasetSpec, seed: u64) -> CliResult<Graph> {
    if let Some(sbm) = &spec.sbm {
        return Ok(generate_sbm(&SbmConfig {
            seed,
            ..sbm.clone()
        })?);
    }
    let g = if let Some(dir) = &spec.path {
        load_graph(dir)?
    } else if let Some(edges) = &spec.edges {
        let (g, stats) = load_dataset(edges, spec.features.as_deref(), spec.labels.as_deref())?;
        if stats.self_loops_dropped + stats.duplicate_edges > 0 {
            info!(
                "{}: dropped {} self-loops and {} duplicate edges",
                edges.display(),
                stats.self_loops_dropped,
                stats.duplicate_edges
            );
        }
        g
    } else {
        return Err(CliError::usage("dataset has no source"));
    };
    if spec.lcc {
        Ok(largest_connected_component(&g)?.0)
    } else {
        Ok(g)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Point {
    rate: f64,
    budget: Option<usize>,
}

fn attack_points(cfg: &ExperimentConfig) -> Vec<Point> {
    match &cfg.attack {
        None => vec![Point {
            rate: 0.0,
            budget: None,
        }],
        Some(a) if a.kind == AttackKind::TargetedHeterophily => a
            .budgets
            .iter()
            .map(|&b| Point {
                rate: b as f64,
                budget: Some(b),
            })
            .collect(),
        Some(a) => a
            .rates
            .iter()
            .map(|&rate| Point { rate, budget: None })
            .collect(),
    }
}

fn attack_spec(cfg: &ExperimentConfig, point: Point, seed: u64) -> Option<AttackSpec> {
    let plan = cfg.attack.as_ref()?;
    Some(match point.budget {
        Some(b) => AttackSpec::per_target(b, seed, plan.targets.clone()),
        None => AttackSpec::rate(plan.kind, point.rate, seed),
    })
}

struct JobOutput {
    records: Vec<ResultRecord>,
    failures: Vec<SeedFailure>,
    feasibility: FeasibilityTally,
    learned: Vec<LearnedRun>,
}

fn smoothness(g: &Graph, a: Option<&DenseMatrix>) -> Option<f64> {
    g.features()?;
    feature_smoothness(g, a).ok()
}

fn run_key(dataset: &str, attack: &str, point: Point, seed: u64) -> String {
    match point.budget {
        Some(b) => format!("{dataset}_{attack}_b{b}_seed{seed}"),
        None => format!("{dataset}_{attack}_r{}_seed{seed}", point.rate),
    }
}

fn run_job(cfg: &ExperimentConfig, shared: Option<&Graph>, point: Point, seed: u64) -> JobOutput {
    let mut out = JobOutput {
        records: Vec::new(),
        failures: Vec::new(),
        feasibility: FeasibilityTally::default(),
        learned: Vec::new(),
    };
    let fail =
        |out: &mut JobOutput, method: Option<Method>, stage: &str, e: &dyn std::fmt::Display| {
            warn!("seed {seed}, point {}: {stage} failed: {e}", point.rate);
            out.failures.push(SeedFailure {
                seed,
                rate: point.rate,
                budget: point.budget,
                method,
                stage: stage.into(),
                error: e.to_string(),
            });
        };

    let clean = match shared {
        Some(g) => Cow::Borrowed(g),
        None => match build_dataset(&cfg.dataset, seed) {
            Ok(g) => Cow::Owned(g),
            Err(e) => {
                fail(&mut out, None, "dataset", &e);
                return out;
            }
        },
    };
    let Some(labels) = clean.labels() else {
        fail(
            &mut out,
            None,
            "dataset",
            &"node labels are required for training",
        );
        return out;
    };
    let split = match make_split(clean.n(), cfg.split, seed) {
        Ok(s) => s,
        Err(e) => {
            fail(&mut out, None, "split", &e);
            return out;
        }
    };

    let started = Instant::now();
    let (poisoned, shortfall) = match attack_spec(cfg, point, seed) {
        None => (clean.clone().into_owned(), 0),
        Some(spec) => match attack(&clean, &spec) {
            Ok((g, p)) => (g, p.shortfall),
            Err(e) => {
                fail(&mut out, None, "attack", &e);
                return out;
            }
        },
    };
    let attack_seconds = started.elapsed().as_secs_f64();

    let dataset = cfg.dataset.label();
    let attack_name = cfg
        .attack
        .as_ref()
        .map_or("none", |a| a.kind.name())
        .to_string();
    let train_cfg = TrainConfig {
        seed,
        ..cfg.train.clone()
    };
    let before = smoothness(&poisoned, None);

    for &method in &cfg.methods {
        let started = Instant::now();
        let outcome: CliResult<(f64, f64, Option<f64>)> = match method {
            Method::Gcn => (|| {
                let s_hat = normalize_adjacency(poisoned.adjacency())?.matrix;
                let x = poisoned.features_or_identity();
                let r = train_gcn(&s_hat, &x, labels, clean.class_count(), &split, &train_cfg)?;
                Ok((r.test_accuracy, r.best_val_accuracy, before))
            })(),
            Method::Hosl => (|| {
                let learned: LearnedStructure =
                    learn_structure(&poisoned, &split, &cfg.learner, &train_cfg)?;
                out.feasibility.checked += 1;
                if !is_feasible(&learned.s) {
                    out.feasibility.violations += 1;
                    return Err(CliError::failed(
                        "learned structure violates the feasibility constraints",
                    ));
                }
                let after = smoothness(&poisoned, Some(&learned.s));
                out.learned.push(LearnedRun {
                    key: run_key(&dataset, &attack_name, point, seed),
                    trace: learned.loss_trace.clone(),
                    structure: if cfg.save_structures {
                        Some(learned.graph(&poisoned)?)
                    } else {
                        None
                    },
                });
                Ok((learned.test_accuracy, learned.best_val_accuracy, after))
            })(),
        };
        let train_seconds = started.elapsed().as_secs_f64();
        match outcome {
            Ok((test_accuracy, val_accuracy, after)) => out.records.push(ResultRecord {
                dataset: dataset.clone(),
                attack: attack_name.clone(),
                rate: point.rate,
                budget: point.budget,
                method,
                seed,
                test_accuracy,
                val_accuracy,
                smoothness_before: before,
                smoothness_after: after,
                shortfall,
                attack_seconds,
                train_seconds,
                wall_time: attack_seconds + train_seconds,
            }),
            Err(e) => fail(&mut out, Some(method), method.name(), &e),
        }
    }
    out
}

/// Runs every (attack point, seed, method) combination. `threads` caps the
/// number of seeds processed concurrently; `None` uses every core.
///
/// Per-seed failures are collected rather than aborting the run. Only
/// configuration problems and a dataset that cannot be loaded at all are
/// returned as errors.
pub fn run_experiment(
    cfg: &ExperimentConfig,
    threads: Option<usize>,
) -> CliResult<ExperimentSummary> {
    cfg.validate()?;
    let shared = if cfg.dataset.sbm.is_none() {
        Some(build_dataset(&cfg.dataset, 0)?)
    } else {
        None
    };
    if let Some(g) = &shared {
        if g.labels().is_none() {
            return Err(CliError::usage(
                "dataset has no labels; training needs them",
            ));
        }
    }
    let points = attack_points(cfg);
    let jobs: Vec<(usize, usize)> = (0..points.len())
        .flat_map(|p| (0..cfg.seeds.len()).map(move |s| (p, s)))
        .collect();
    info!(
        "{} attack points x {} seeds x {} methods",
        points.len(),
        cfg.seeds.len(),
        cfg.methods.len()
    );

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads.unwrap_or(0))
        .build()
        .map_err(|e| CliError::failed(format!("thread pool: {e}")))?;
    let outputs: Vec<JobOutput> = pool.install(|| {
        jobs.par_iter()
            .map(|&(p, s)| run_job(cfg, shared.as_ref(), points[p], cfg.seeds[s]))
            .collect()
    });

    let mut summary = ExperimentSummary {
        records: Vec::new(),
        aggregates: Vec::new(),
        failures: Vec::new(),
        feasibility: FeasibilityTally::default(),
        learned: Vec::new(),
    };
    // `jobs` is point-major, so records come out grouped by point and then
    // seed; a stable sort on the method position finishes the ordering
    for out in outputs {
        summary.records.extend(out.records);
        summary.failures.extend(out.failures);
        summary.feasibility.checked += out.feasibility.checked;
        summary.feasibility.violations += out.feasibility.violations;
        summary.learned.extend(out.learned);
    }
    let position = |m: Method| {
        cfg.methods
            .iter()
            .position(|&x| x == m)
            .unwrap_or(usize::MAX)
    };
    let point_of = |r: &ResultRecord| {
        points
            .iter()
            .position(|p| p.rate == r.rate && p.budget == r.budget)
            .unwrap_or(usize::MAX)
    };
    summary
        .records
        .sort_by_key(|r| (point_of(r), position(r.method)));
    summary.aggregates = aggregate(&summary.records);
    Ok(summary)
}

fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Sample standard deviation (`n − 1` denominator); zero below two values.
pub fn sample_std(values: &[f64]) -> f64 {
    if values.len() < 2 {
        return 0.0;
    }
    let m = mean(values);
    let ss: f64 = values.iter().map(|v| (v - m) * (v - m)).sum();
    (ss / (values.len() - 1) as f64).sqrt()
}

fn optional_mean(values: impl Iterator<Item = Option<f64>>) -> Option<f64> {
    let v: Option<Vec<f64>> = values.collect();
    v.filter(|v| !v.is_empty()).map(|v| mean(&v))
}

/// Groups records by dataset, attack, point and method, in order of first
/// appearance.
pub fn aggregate(records: &[ResultRecord]) -> Vec<AggregateRow> {
    let mut order: Vec<(String, String, u64, Option<usize>, Method)> = Vec::new();
    let mut groups: BTreeMap<usize, Vec<&ResultRecord>> = BTreeMap::new();
    for r in records {
        let key = (
            r.dataset.clone(),
            r.attack.clone(),
            r.rate.to_bits(),
            r.budget,
            r.method,
        );
        let idx = order.iter().position(|k| *k == key).unwrap_or_else(|| {
            order.push(key);
            order.len() - 1
        });
        groups.entry(idx).or_default().push(r);
    }
    groups
        .into_values()
        .map(|rs| {
            let acc: Vec<f64> = rs.iter().map(|r| r.test_accuracy).collect();
            let wall: Vec<f64> = rs.iter().map(|r| r.wall_time).collect();
            let (m, s) = (mean(&acc), sample_std(&acc));
            let first = rs[0];
            AggregateRow {
                dataset: first.dataset.clone(),
                attack: first.attack.clone(),
                rate: first.rate,
                budget: first.budget,
                method: first.method,
                runs: rs.len(),
                accuracy_mean: m,
                accuracy_std: s,
                smoothness_before_mean: optional_mean(rs.iter().map(|r| r.smoothness_before)),
                smoothness_after_mean: optional_mean(rs.iter().map(|r| r.smoothness_after)),
                wall_time_mean: mean(&wall),
                summary: format!("{:.1} ± {:.1}", 100.0 * m, 100.0 * s),
            }
        })
        .collect()
}

/// One row of the long-format curve table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub dataset: String,
    pub attack: String,
    pub method: Method,
    pub x: f64,
    pub metric: String,
    pub mean: f64,
    pub std: f64,
    pub runs: usize,
}

/// Accuracy and smoothness against the attack point, one row per metric.
pub fn curves(records: &[ResultRecord]) -> Vec<CurvePoint> {
    type Metric = fn(&ResultRecord) -> Option<f64>;
    let metrics: [(&str, Metric); 3] = [
        ("accuracy", |r| Some(r.test_accuracy)),
        ("smoothness_before", |r| r.smoothness_before),
        ("smoothness_after", |r| r.smoothness_after),
    ];
    let mut out = Vec::new();
    for row in aggregate(records) {
        let group: Vec<&ResultRecord> = records
            .iter()
            .filter(|r| {
                r.dataset == row.dataset
                    && r.attack == row.attack
                    && r.rate == row.rate
                    && r.budget == row.budget
                    && r.method == row.method
            })
            .collect();
        for (name, f) in metrics {
            let Some(values) = group.iter().map(|r| f(r)).collect::<Option<Vec<f64>>>() else {
                continue;
            };
            out.push(CurvePoint {
                dataset: row.dataset.clone(),
                attack: row.attack.clone(),
                method: row.method,
                x: row.rate,
                metric: name.into(),
                mean: mean(&values),
                std: sample_std(&values),
                runs: values.len(),
            });
        }
    }
    out
}

fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> CliResult<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| CliError::io(path, e))?;
    for r in rows {
        w.serialize(r).map_err(|e| CliError::io(path, e))?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> CliResult<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| CliError::io(path, e))?;
    fs::write(path, text + "\n").map_err(|e| CliError::io(path, e))
}

/// Writes records, aggregates, curves, failures and loss traces (plus the
/// learned structures when kept) under `dir`.
pub fn write_outputs(summary: &ExperimentSummary, dir: &Path) -> CliResult<()> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    write_csv(&dir.join(RECORDS_FILE), &summary.records)?;
    write_csv(&dir.join(AGGREGATE_CSV), &summary.aggregates)?;
    write_json(&dir.join(AGGREGATE_JSON), &summary.aggregates)?;
    write_csv(&dir.join(CURVES_FILE), &curves(&summary.records))?;
    write_json(&dir.join(FAILURES_FILE), &summary.failures)?;
    if !summary.learned.is_empty() {
        let traces = dir.join(TRACES_DIR);
        fs::create_dir_all(&traces).map_err(|e| CliError::io(&traces, e))?;
        for run in &summary.learned {
            write_json(&traces.join(format!("{}.json", run.key)), &run.trace)?;
            if let Some(g) = &run.structure {
                save_graph(g, &dir.join(STRUCTURES_DIR).join(&run.key))?;
            }
        }
    }
    Ok(())
}

/// Reads a records CSV back, e.g. to recompute aggregates.
pub fn read_records(path: &Path) -> CliResult<Vec<ResultRecord>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| CliError::io(path, e))?;
    r.deserialize()
        .collect::<Result<_, _>>()
        .map_err(|e| CliError::io(path, e))
}
