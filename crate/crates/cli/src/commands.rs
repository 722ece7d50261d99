//! Subcommand definitions and their implementations.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use hosl_core::attacks::{attack, AttackKind, AttackSpec, Perturbation};
use hosl_core::datasets::{
    generate_sbm, largest_connected_component, load_dataset, load_graph, make_split, save_graph,
    GraphMeta, SbmConfig, SplitMask, SplitRatios,
};
use hosl_core::gcn::{save_params, train_gcn, CheckpointFormat, Optimizer, TrainConfig};
use hosl_core::graph::{
    normalize_adjacency, normalized_power, smoothness_report, spectral_check, trace_gap, Graph,
    SmoothnessReport, SpectralReport, TraceGapReport,
};
use hosl_core::learner::{learn_structure, LearnerConfig};
use hosl_core::numerics::sym_eigen;
use log::info;
use serde::{Deserialize, Serialize};

use crate::config::{default_output_dir, ExperimentConfig};
use crate::error::{CliError, CliResult};
use crate::harness::{is_feasible, run_experiment, write_json, write_outputs};

#[derive(Debug, Parser)]
#[command(
    name = "hosl",
    version,
    about = "High-order graph structure learning toolkit"
)]
pub struct Cli {
    /// Increase log verbosity (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    pub verbose: u8,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Prepare a graph in the canonical on-disk layout.
    #[command(subcommand)]
    Dataset(DatasetCommand),
    /// Poison a graph and record the perturbation.
    Attack(AttackArgs),
    /// Smoothness, spectrum and trace-gap diagnostics.
    Analyze(AnalyzeArgs),
    /// Train a vanilla two-layer GCN.
    TrainGcn(TrainGcnArgs),
    /// Learn a structure jointly with the GCN.
    Defend(DefendArgs),
    /// Run a multi-seed experiment from a TOML config.
    Run(RunArgs),
}

#[derive(Debug, Subcommand)]
pub enum DatasetCommand {
    /// Read an edge list with optional feature and label files.
    Load(LoadArgs),
    /// Sample a stochastic block model.
    GenSbm(GenSbmArgs),
}

#[derive(Debug, Args)]
pub struct LoadArgs {
    #[arg(long)]
    pub edges: PathBuf,
    #[arg(long)]
    pub features: Option<PathBuf>,
    #[arg(long)]
    pub labels: Option<PathBuf>,
    /// Keep only the largest connected component.
    #[arg(long)]
    pub lcc: bool,
    /// Output directory [default: $HOSL_OUTPUT_DIR/dataset].
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct GenSbmArgs {
    #[arg(long)]
    pub n: usize,
    #[arg(long)]
    pub classes: usize,
    #[arg(long)]
    pub p_in: f64,
    #[arg(long)]
    pub p_out: f64,
    #[arg(long)]
    pub noise_p: f64,
    #[arg(long)]
    pub self_loop_homophily: bool,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output directory [default: $HOSL_OUTPUT_DIR/dataset].
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum KindArg {
    Random,
    Heterophily,
    Targeted,
}

impl From<KindArg> for AttackKind {
    fn from(k: KindArg) -> Self {
        match k {
            KindArg::Random => AttackKind::Random,
            KindArg::Heterophily => AttackKind::Heterophily,
            KindArg::Targeted => AttackKind::TargetedHeterophily,
        }
    }
}

#[derive(Debug, Args)]
pub struct AttackArgs {
    /// Clean graph directory.
    #[arg(long)]
    pub graph: PathBuf,
    #[arg(long, value_enum)]
    pub kind: KindArg,
    /// Fraction of the clean edge count to perturb (random, heterophily).
    #[arg(long, conflicts_with = "budget")]
    pub rate: Option<f64>,
    /// Insertions per target node (targeted).
    #[arg(long)]
    pub budget: Option<usize>,
    /// Comma-separated target nodes [default: nodes with degree above 10].
    #[arg(long, value_delimiter = ',')]
    pub targets: Option<Vec<usize>>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output directory [default: $HOSL_OUTPUT_DIR/attacked].
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    #[arg(long)]
    pub graph: PathBuf,
    /// Perturbation rate to tag the smoothness report with.
    #[arg(long, default_value_t = 0.0)]
    pub rate: f64,
    /// Skip the eigendecompositions (they dominate on large graphs).
    #[arg(long)]
    pub no_spectrum: bool,
    /// Also write the full report as JSON.
    #[arg(long)]
    pub json: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SplitArgs {
    #[arg(long, default_value_t = 0.1)]
    pub train_ratio: f64,
    #[arg(long, default_value_t = 0.1)]
    pub val_ratio: f64,
    #[arg(long, default_value_t = 0.8)]
    pub test_ratio: f64,
}

impl SplitArgs {
    fn split(&self, n: usize, seed: u64) -> CliResult<SplitMask> {
        let ratios = SplitRatios {
            train: self.train_ratio,
            val: self.val_ratio,
            test: self.test_ratio,
        };
        Ok(make_split(n, ratios, seed)?)
    }
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub hidden: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub weight_decay: Option<f64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub dropout: Option<f64>,
    #[arg(long, value_enum)]
    pub optimizer: Option<OptimizerArg>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum OptimizerArg {
    Adam,
    Sgd,
}

impl TrainArgs {
    fn config(&self, seed: u64) -> CliResult<TrainConfig> {
        let d = TrainConfig::default();
        let cfg = TrainConfig {
            hidden: self.hidden.unwrap_or(d.hidden),
            lr: self.lr.unwrap_or(d.lr),
            weight_decay: self.weight_decay.unwrap_or(d.weight_decay),
            epochs: self.epochs.unwrap_or(d.epochs),
            dropout: self.dropout.unwrap_or(d.dropout),
            optimizer: match self.optimizer {
                Some(OptimizerArg::Sgd) => Optimizer::Sgd,
                Some(OptimizerArg::Adam) => Optimizer::Adam,
                None => d.optimizer,
            },
            seed,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum FormatArg {
    Binary,
    Csv,
}

impl From<FormatArg> for CheckpointFormat {
    fn from(f: FormatArg) -> Self {
        match f {
            FormatArg::Binary => CheckpointFormat::Binary,
            FormatArg::Csv => CheckpointFormat::Csv,
        }
    }
}

#[derive(Debug, Args)]
pub struct TrainGcnArgs {
    #[arg(long)]
    pub graph: PathBuf,
    /// Propagate over this graph's adjacency instead (e.g. a learned one).
    #[arg(long)]
    pub structure: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub split: SplitArgs,
    #[command(flatten)]
    pub train: TrainArgs,
    #[arg(long, value_enum, default_value = "binary")]
    pub checkpoint_format: FormatArg,
    /// Output directory [default: $HOSL_OUTPUT_DIR/train-gcn].
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct DefendArgs {
    /// Poisoned graph directory.
    #[arg(long)]
    pub graph: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// TOML file with learner settings; flags below override it.
    #[arg(long)]
    pub learner: Option<PathBuf>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub beta: Option<f64>,
    #[arg(long)]
    pub lambda: Option<f64>,
    /// Comma-separated fidelity weights; the count sets the order.
    #[arg(long, value_delimiter = ',')]
    pub eta: Option<Vec<f64>>,
    #[arg(long)]
    pub lr_s: Option<f64>,
    #[arg(long)]
    pub outer_iters: Option<usize>,
    #[arg(long)]
    pub patience: Option<usize>,
    /// Record every loss component in the trace.
    #[arg(long)]
    pub trace_loss: bool,
    #[command(flatten)]
    pub split: SplitArgs,
    #[command(flatten)]
    pub train: TrainArgs,
    #[arg(long, value_enum, default_value = "binary")]
    pub checkpoint_format: FormatArg,
    /// Output directory [default: $HOSL_OUTPUT_DIR/defend].
    #[arg(long)]
    pub out: Option<PathBuf>,
}

impl DefendArgs {
    fn learner_config(&self) -> CliResult<LearnerConfig> {
        let mut cfg = match &self.learner {
            Some(path) => {
                let text = fs::read_to_string(path)
                    .map_err(|e| CliError::usage(format!("{}: {e}", path.display())))?;
                toml::from_str(&text)
                    .map_err(|e| CliError::usage(format!("{}: {e}", path.display())))?
            }
            None => LearnerConfig::default(),
        };
        macro_rules! set {
            ($($f:ident),*) => {$( if let Some(v) = &self.$f { cfg.$f = v.clone(); } )*};
        }
        set!(alpha, beta, lambda, eta, lr_s, outer_iters, patience);
        cfg.trace_loss |= self.trace_loss;
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Args)]
pub struct RunArgs {
    pub config: PathBuf,
    /// Maximum number of seeds processed concurrently [default: all cores].
    #[arg(long)]
    pub threads: Option<usize>,
    /// Overrides the config's `output_dir`.
    #[arg(long)]
    pub output_dir: Option<PathBuf>,
}

fn out_dir(explicit: &Option<PathBuf>, default_leaf: &str) -> PathBuf {
    explicit
        .clone()
        .unwrap_or_else(|| default_output_dir().join(default_leaf))
}

fn load(dir: &Path) -> CliResult<Graph> {
    if !dir.is_dir() {
        return Err(CliError::usage(format!(
            "{}: not a graph directory",
            dir.display()
        )));
    }
    Ok(load_graph(dir)?)
}

fn require_labels(g: &Graph, what: &str) -> CliResult<Vec<usize>> {
    g.labels()
        .map(<[usize]>::to_vec)
        .ok_or_else(|| CliError::usage(format!("{what} needs node labels")))
}

fn describe(meta: &GraphMeta) -> String {
    let features = meta
        .features
        .map_or_else(|| "none".to_string(), |f| f.to_string());
    format!(
        "nodes {}  edges {}  features {}  classes {}",
        meta.nodes, meta.edges, features, meta.classes
    )
}

/// Runs one parsed command. Returns the process exit status for runs that
/// completed with per-seed failures.
pub fn execute(cli: Cli) -> CliResult<u8> {
    match cli.command {
        Command::Dataset(DatasetCommand::Load(a)) => cmd_load(&a),
        Command::Dataset(DatasetCommand::GenSbm(a)) => cmd_gen_sbm(&a),
        Command::Attack(a) => cmd_attack(&a),
        Command::Analyze(a) => cmd_analyze(&a),
        Command::TrainGcn(a) => cmd_train_gcn(&a),
        Command::Defend(a) => cmd_defend(&a),
        Command::Run(a) => cmd_run(&a),
    }
}

fn cmd_load(a: &LoadArgs) -> CliResult<u8> {
    let (mut g, stats) = load_dataset(&a.edges, a.features.as_deref(), a.labels.as_deref())?;
    if stats.self_loops_dropped + stats.duplicate_edges > 0 {
        info!(
            "dropped {} self-loops and {} duplicate edges",
            stats.self_loops_dropped, stats.duplicate_edges
        );
    }
    if a.lcc {
        let (sub, kept) = largest_connected_component(&g)?;
        info!("largest component keeps {} of {} nodes", kept.len(), g.n());
        g = sub;
    }
    let out = out_dir(&a.out, "dataset");
    save_graph(&g, &out)?;
    println!("{}", describe(&GraphMeta::of(&g)));
    println!("wrote {}", out.display());
    Ok(0)
}

fn cmd_gen_sbm(a: &GenSbmArgs) -> CliResult<u8> {
    let cfg = SbmConfig {
        n: a.n,
        classes: a.classes,
        p_in: a.p_in,
        p_out: a.p_out,
        noise_p: a.noise_p,
        self_loop_homophily: a.self_loop_homophily,
        seed: a.seed,
    };
    let g = generate_sbm(&cfg)?;
    let out = out_dir(&a.out, "dataset");
    save_graph(&g, &out)?;
    write_json(&out.join("sbm.json"), &cfg)?;
    println!("{}", describe(&GraphMeta::of(&g)));
    println!("wrote {}", out.display());
    Ok(0)
}

fn edge_list(edges: &[(usize, usize)]) -> String {
    let mut s = String::new();
    for (u, v) in edges {
        writeln!(s, "{u} {v}").unwrap();
    }
    s
}

fn cmd_attack(a: &AttackArgs) -> CliResult<u8> {
    let g = load(&a.graph)?;
    let kind = AttackKind::from(a.kind);
    let spec = match (kind, a.rate, a.budget) {
        (AttackKind::TargetedHeterophily, None, Some(b)) => {
            AttackSpec::per_target(b, a.seed, a.targets.clone())
        }
        (AttackKind::TargetedHeterophily, _, _) => {
            return Err(CliError::usage(
                "--kind targeted needs --budget and no --rate",
            ))
        }
        (_, Some(r), None) if a.targets.is_none() => AttackSpec::rate(kind, r, a.seed),
        _ => {
            return Err(CliError::usage(format!(
                "--kind {} needs --rate and no --budget or --targets",
                kind.name()
            )))
        }
    };
    let (poisoned, p) = attack(&g, &spec)?;
    let out = out_dir(&a.out, "attacked");
    save_graph(&poisoned, &out)?;
    write_perturbation(&out, &spec, &p)?;
    println!(
        "{} attack: {} added, {} removed, {} not applied",
        kind.name(),
        p.added.len(),
        p.removed.len(),
        p.shortfall
    );
    println!("wrote {}", out.display());
    Ok(0)
}

#[derive(Serialize)]
struct PerturbationRecord<'a> {
    spec: &'a AttackSpec,
    #[serde(flatten)]
    perturbation: &'a Perturbation,
}

fn write_perturbation(out: &Path, spec: &AttackSpec, p: &Perturbation) -> CliResult<()> {
    write_json(
        &out.join("perturbation.json"),
        &PerturbationRecord {
            spec,
            perturbation: p,
        },
    )?;
    for (name, edges) in [("added.txt", &p.added), ("removed.txt", &p.removed)] {
        let path = out.join(name);
        fs::write(&path, edge_list(edges)).map_err(|e| CliError::io(&path, e))?;
    }
    Ok(())
}

/// Eigenvalue summary of `Âᵏ`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PowerSpectrum {
    pub order: usize,
    pub min: f64,
    pub max: f64,
    pub max_abs: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AnalyzeReport {
    pub meta: GraphMeta,
    pub edge_homophily: Option<f64>,
    pub smoothness: Option<SmoothnessReport>,
    pub spectrum: Option<SpectralReport>,
    pub powers: Vec<PowerSpectrum>,
    pub trace_gap: TraceGapReport,
}

pub fn analyze(g: &Graph, rate: f64, spectrum: bool) -> CliResult<AnalyzeReport> {
    let smoothness = g
        .features()
        .map(|_| smoothness_report(g, rate))
        .transpose()?;
    let (spectrum, powers) = if spectrum && g.n() > 0 {
        let na = g.normalized();
        let report = spectral_check(&na)?;
        let mut powers = Vec::new();
        for k in 2..=3 {
            let e = sym_eigen(&normalized_power(&na, k)?)?.eigenvalues;
            let min = e.iter().copied().fold(f64::INFINITY, f64::min);
            let max = e.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            powers.push(PowerSpectrum {
                order: k,
                min,
                max,
                max_abs: min.abs().max(max.abs()),
            });
        }
        (Some(report), powers)
    } else {
        (None, Vec::new())
    };
    Ok(AnalyzeReport {
        meta: GraphMeta::of(g),
        edge_homophily: g.edge_homophily(),
        smoothness,
        spectrum,
        powers,
        trace_gap: trace_gap(g)?,
    })
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "n/a".to_string(), |v| format!("{v:.6}"))
}

pub fn render_table(r: &AnalyzeReport) -> String {
    let mut s = String::new();
    let mut row = |k: &str, v: String| writeln!(s, "{k:<32} {v}").unwrap();
    row("graph", describe(&r.meta));
    row("edge homophily", fmt_opt(r.edge_homophily));
    match &r.smoothness {
        Some(sm) => {
            row("global smoothness", format!("{:.6}", sm.global));
            let mean = sm.per_node.iter().sum::<f64>() / sm.per_node.len().max(1) as f64;
            row("mean local smoothness", format!("{mean:.6}"));
        }
        None => row("global smoothness", "n/a (no features)".into()),
    }
    if let Some(sp) = &r.spectrum {
        row(
            "eigenvalue range of A_hat",
            format!(
                "[{:.6}, {:.6}]",
                sp.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min),
                sp.max_eigenvalue
            ),
        );
        row("spectrum in [-1, 1]", sp.bounded().to_string());
        row("largest eigenvalue is 1", sp.attains_one().to_string());
        row("powers contract", sp.power_contraction.to_string());
        for p in &r.powers {
            row(
                &format!("eigenvalue range of A_hat^{}", p.order),
                format!("[{:.6}, {:.6}]", p.min, p.max),
            );
        }
    }
    let tg = &r.trace_gap;
    row("trace gap (raw degrees)", fmt_opt(tg.direct));
    row("trace gap closed form", fmt_opt(tg.closed_form));
    row(
        "trace gap (self-loop degrees)",
        format!("{:.6}", tg.direct_self_loop),
    );
    row("isolated nodes", tg.isolated_nodes.to_string());
    s
}

fn cmd_analyze(a: &AnalyzeArgs) -> CliResult<u8> {
    let g = load(&a.graph)?;
    let report = analyze(&g, a.rate, !a.no_spectrum)?;
    print!("{}", render_table(&report));
    if let Some(path) = &a.json {
        if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            fs::create_dir_all(parent).map_err(|e| CliError::io(parent, e))?;
        }
        write_json(path, &report)?;
    }
    Ok(0)
}

#[derive(Debug, Serialize)]
struct TrainSummary {
    seed: u64,
    test_accuracy: f64,
    best_val_accuracy: f64,
    best_epoch: usize,
    seconds: f64,
}

fn create(dir: &Path) -> CliResult<()> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

fn checkpoint_name(f: FormatArg) -> &'static str {
    match f {
        FormatArg::Binary => "params.bin",
        FormatArg::Csv => "params.csv",
    }
}

fn cmd_train_gcn(a: &TrainGcnArgs) -> CliResult<u8> {
    let g = load(&a.graph)?;
    let labels = require_labels(&g, "train-gcn")?;
    let structure = match &a.structure {
        Some(dir) => {
            let s = load(dir)?;
            if s.n() != g.n() {
                return Err(CliError::usage(format!(
                    "structure has {} nodes, graph has {}",
                    s.n(),
                    g.n()
                )));
            }
            s.adjacency().clone()
        }
        None => g.adjacency().clone(),
    };
    let cfg = a.train.config(a.seed)?;
    let split = a.split.split(g.n(), a.seed)?;
    let started = Instant::now();
    let s_hat = normalize_adjacency(&structure)?.matrix;
    let r = train_gcn(
        &s_hat,
        &g.features_or_identity(),
        &labels,
        g.class_count(),
        &split,
        &cfg,
    )?;
    let summary = TrainSummary {
        seed: a.seed,
        test_accuracy: r.test_accuracy,
        best_val_accuracy: r.best_val_accuracy,
        best_epoch: r.best_epoch,
        seconds: started.elapsed().as_secs_f64(),
    };
    let out = out_dir(&a.out, "train-gcn");
    create(&out)?;
    write_json(&out.join("result.json"), &summary)?;
    write_json(&out.join("history.json"), &r.history)?;
    save_params(
        &r.params,
        &out.join(checkpoint_name(a.checkpoint_format)),
        a.checkpoint_format.into(),
    )?;
    println!(
        "test accuracy {:.2}%  (best validation {:.2}% at epoch {})",
        100.0 * r.test_accuracy,
        100.0 * r.best_val_accuracy,
        r.best_epoch
    );
    println!("wrote {}", out.display());
    Ok(0)
}

#[derive(Debug, Serialize)]
struct DefendSummary<'a> {
    seed: u64,
    test_accuracy: f64,
    best_val_accuracy: f64,
    best_iteration: usize,
    feasible: bool,
    seconds: f64,
    learner: &'a LearnerConfig,
    train: &'a TrainConfig,
}

fn cmd_defend(a: &DefendArgs) -> CliResult<u8> {
    let g = load(&a.graph)?;
    require_labels(&g, "defend")?;
    let learner = a.learner_config()?;
    let train = a.train.config(a.seed)?;
    let split = a.split.split(g.n(), a.seed)?;
    let started = Instant::now();
    let r = learn_structure(&g, &split, &learner, &train)?;
    let feasible = is_feasible(&r.s);
    let out = out_dir(&a.out, "defend");
    create(&out)?;
    save_graph(&r.graph(&g)?, &out.join("learned"))?;
    write_json(&out.join("loss_trace.json"), &r.loss_trace)?;
    save_params(
        &r.params,
        &out.join(checkpoint_name(a.checkpoint_format)),
        a.checkpoint_format.into(),
    )?;
    write_json(
        &out.join("result.json"),
        &DefendSummary {
            seed: a.seed,
            test_accuracy: r.test_accuracy,
            best_val_accuracy: r.best_val_accuracy,
            best_iteration: r.best_iteration,
            feasible,
            seconds: started.elapsed().as_secs_f64(),
            learner: &learner,
            train: &train,
        },
    )?;
    println!(
        "test accuracy {:.2}%  (best validation {:.2}% at iteration {})",
        100.0 * r.test_accuracy,
        100.0 * r.best_val_accuracy,
        r.best_iteration
    );
    println!("wrote {}", out.display());
    if !feasible {
        return Err(CliError::failed(
            "learned structure violates the feasibility constraints",
        ));
    }
    Ok(0)
}

fn cmd_run(a: &RunArgs) -> CliResult<u8> {
    let cfg = ExperimentConfig::load(&a.config)?;
    if a.threads == Some(0) {
        return Err(CliError::usage("--threads must be at least 1"));
    }
    let out = a
        .output_dir
        .clone()
        .unwrap_or_else(|| cfg.resolved_output_dir());
    let summary = run_experiment(&cfg, a.threads)?;
    write_outputs(&summary, &out)?;
    for row in &summary.aggregates {
        let point = row
            .budget
            .map_or_else(|| format!("{:.2}", row.rate), |b| format!("budget {b}"));
        println!(
            "{:<10} {:<14} {:<10} {:<5} {}",
            row.dataset,
            row.attack,
            point,
            row.method.name(),
            row.summary
        );
    }
    println!("wrote {}", out.display());
    if summary.succeeded() {
        Ok(0)
    } else {
        eprintln!(
            "{} stage(s) failed; see failures.json",
            summary.failures.len()
        );
        Ok(1)
    }
}
