//! Experiment configuration files.
//!
//! A config is TOML with `schema_version = 1`. Unknown keys anywhere are
//! rejected so that a typo cannot silently fall back to a default.
//!
//! ```toml
//! schema_version = 1
//! seeds = [0, 1, 2]
//! methods = ["gcn", "hosl"]
//! output_dir = "results/sbm"          # optional
//! save_structures = false             # write each learned S as a graph
//!
//! [dataset]
//! name = "sbm"                        # optional label used in records
//! sbm = { n = 200, classes = 2, p_in = 0.05, p_out = 0.01, noise_p = 0.9 }
//! # or: path = "data/cora"            (a directory written by `hosl dataset`)
//! # or: edges = "cora.edges", features = "cora.x", labels = "cora.y"
//!
//! [attack]                            # optional; omitted means clean only
//! kind = "heterophily"                # random | heterophily | targeted_heterophily
//! rates = [0.0, 0.05, 0.25]           # for random / heterophily
//! # budgets = [1, 2, 3]               # for targeted_heterophily
//!
//! [split]                             # optional, defaults to 0.1 / 0.1 / 0.8
//! [train]                             # GCN hyperparameters
//! [learner]                           # structure learner hyperparameters
//! ```
//!
//! Every random choice of a run is keyed by its seed: SBM generation, the
//! split, the attack and weight initialisation.

use std::fs;
use std::path::{Path, PathBuf};

use hosl_core::attacks::{AttackKind, MAX_BUDGET_PER_TARGET};
use hosl_core::datasets::{SbmConfig, SplitRatios};
use hosl_core::gcn::TrainConfig;
use hosl_core::learner::LearnerConfig;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

pub const SCHEMA_VERSION: u32 = 1;
pub const OUTPUT_DIR_ENV: &str = "HOSL_OUTPUT_DIR";
pub const DEFAULT_OUTPUT_DIR: &str = "hosl-output";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Gcn,
    Hosl,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Gcn => "gcn",
            Method::Hosl => "hosl",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    pub seeds: Vec<u64>,
    #[serde(default = "default_methods")]
    pub methods: Vec<Method>,
    /// Falls back to `$HOSL_OUTPUT_DIR`, then `hosl-output`.
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    /// Also write every learned structure in the graph format.
    #[serde(default)]
    pub save_structures: bool,
    pub dataset: DatasetSpec,
    #[serde(default)]
    pub attack: Option<AttackPlan>,
    #[serde(default)]
    pub split: SplitRatios,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub learner: LearnerConfig,
}

fn default_methods() -> Vec<Method> {
    vec![Method::Gcn, Method::Hosl]
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetSpec {
    #[serde(default)]
    pub name: Option<String>,
    /// Directory in the canonical graph layout.
    #[serde(default)]
    pub path: Option<PathBuf>,
    #[serde(default)]
    pub edges: Option<PathBuf>,
    #[serde(default)]
    pub features: Option<PathBuf>,
    #[serde(default)]
    pub labels: Option<PathBuf>,
    /// Restrict a loaded graph to its largest connected component.
    #[serde(default)]
    pub lcc: bool,
    /// Regenerated for every seed; the `seed` field inside is ignored.
    #[serde(default)]
    pub sbm: Option<SbmConfig>,
}

impl DatasetSpec {
    pub fn label(&self) -> String {
        if let Some(name) = &self.name {
            return name.clone();
        }
        let stem = |p: &Path| {
            p.file_stem().or_else(|| p.file_name()).map_or_else(
                || p.display().to_string(),
                |s| s.to_string_lossy().into_owned(),
            )
        };
        match (&self.sbm, &self.path, &self.edges) {
            (Some(_), _, _) => "sbm".into(),
            (_, Some(p), _) => stem(p),
            (_, _, Some(p)) => stem(p),
            _ => "unnamed".into(),
        }
    }

    fn validate(&self) -> CliResult<()> {
        let sources = [
            self.sbm.is_some(),
            self.path.is_some(),
            self.edges.is_some(),
        ]
        .iter()
        .filter(|&&b| b)
        .count();
        if sources != 1 {
            return Err(CliError::usage(
                "dataset needs exactly one of `sbm`, `path` or `edges`",
            ));
        }
        if self.edges.is_none() && (self.features.is_some() || self.labels.is_some()) {
            return Err(CliError::usage(
                "dataset `features` and `labels` only apply together with `edges`",
            ));
        }
        if let Some(sbm) = &self.sbm {
            sbm.validate()?;
            if self.lcc {
                return Err(CliError::usage("`lcc` does not apply to generated graphs"));
            }
        }
        for p in [&self.path, &self.edges, &self.features, &self.labels]
            .into_iter()
            .flatten()
        {
            if !p.exists() {
                return Err(CliError::usage(format!(
                    "{}: no such file or directory",
                    p.display()
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AttackPlan {
    pub kind: AttackKind,
    /// Perturbation rates for the global attacks.
    #[serde(default)]
    pub rates: Vec<f64>,
    /// Edge insertions per target for the targeted attack.
    #[serde(default)]
    pub budgets: Vec<usize>,
    /// Targeted attack only; defaults to nodes with degree above 10.
    #[serde(default)]
    pub targets: Option<Vec<usize>>,
}

impl AttackPlan {
    fn validate(&self) -> CliResult<()> {
        match self.kind {
            AttackKind::Random | AttackKind::Heterophily => {
                if self.rates.is_empty() || !self.budgets.is_empty() || self.targets.is_some() {
                    return Err(CliError::usage(format!(
                        "a {} attack takes a non-empty `rates` list and no `budgets` or `targets`",
                        self.kind.name()
                    )));
                }
                if let Some(r) = self.rates.iter().find(|r| !(0.0..=1.0).contains(*r)) {
                    return Err(CliError::usage(format!("attack rate {r} outside [0, 1]")));
                }
            }
            AttackKind::TargetedHeterophily => {
                if self.budgets.is_empty() || !self.rates.is_empty() {
                    return Err(CliError::usage(
                        "a targeted attack takes a non-empty `budgets` list and no `rates`",
                    ));
                }
                if let Some(b) = self.budgets.iter().find(|&&b| b > MAX_BUDGET_PER_TARGET) {
                    return Err(CliError::usage(format!(
                        "per-target budget {b} exceeds {MAX_BUDGET_PER_TARGET}"
                    )));
                }
            }
        }
        Ok(())
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> CliResult<Self> {
        let cfg: Self =
            toml::from_str(text).map_err(|e| CliError::usage(format!("config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::usage(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text).map_err(|e| match e {
            CliError::Usage(m) => CliError::Usage(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn validate(&self) -> CliResult<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(CliError::usage(format!(
                "unsupported schema_version {} (expected {SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        if self.seeds.is_empty() {
            return Err(CliError::usage("`seeds` must not be empty"));
        }
        if self.methods.is_empty() {
            return Err(CliError::usage("`methods` must not be empty"));
        }
        self.dataset.validate()?;
        if let Some(a) = &self.attack {
            a.validate()?;
        }
        self.train.validate()?;
        self.learner.validate()?;
        Ok(())
    }

    /// Explicit setting, then the environment, then the built-in default.
    pub fn resolved_output_dir(&self) -> PathBuf {
        self.output_dir.clone().unwrap_or_else(default_output_dir)
    }
}

pub fn default_output_dir() -> PathBuf {
    std::env::var_os(OUTPUT_DIR_ENV)
        .filter(|v| !v.is_empty())
        .map_or_else(|| PathBuf::from(DEFAULT_OUTPUT_DIR), PathBuf::from)
}
