//! Structure poisoning under an edge budget.
//!
//! Every generator toggles each node pair at most once: additions are drawn
//! from pairs absent in the clean graph and removals from its edges. Runs are
//! sequential in a single seeded stream, so a smaller budget with the same
//! seed always yields a prefix of a larger one.

use std::collections::HashSet;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::numerics::DenseMatrix;
use crate::rng::{seeded, streams, Rng};

/// Degree threshold above which nodes become default targets.
pub const TARGET_MIN_DEGREE: f64 = 10.0;
/// Largest per-target budget accepted.
pub const MAX_BUDGET_PER_TARGET: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttackKind {
    Random,
    Heterophily,
    TargetedHeterophily,
}

impl AttackKind {
    pub fn name(self) -> &'static str {
        match self {
            AttackKind::Random => "random",
            AttackKind::Heterophily => "heterophily",
            AttackKind::TargetedHeterophily => "targeted_heterophily",
        }
    }
}

impl std::str::FromStr for AttackKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "random" => Ok(AttackKind::Random),
            "heterophily" => Ok(AttackKind::Heterophily),
            "targeted" | "targeted_heterophily" => Ok(AttackKind::TargetedHeterophily),
            other => Err(Error::invalid(format!("unknown attack kind {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Budget {
    /// Fraction of the clean graph's edges to perturb.
    Rate(f64),
    /// Edge insertions per target node.
    PerTarget(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackSpec {
    pub kind: AttackKind,
    pub budget: Budget,
    pub seed: u64,
    #[serde(default)]
    pub targets: Option<Vec<usize>>,
}

impl AttackSpec {
    pub fn rate(kind: AttackKind, rate: f64, seed: u64) -> Self {
        Self {
            kind,
            budget: Budget::Rate(rate),
            seed,
            targets: None,
        }
    }

    pub fn per_target(budget: usize, seed: u64, targets: Option<Vec<usize>>) -> Self {
        Self {
            kind: AttackKind::TargetedHeterophily,
            budget: Budget::PerTarget(budget),
            seed,
            targets,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match (self.kind, self.budget) {
            (AttackKind::Random | AttackKind::Heterophily, Budget::Rate(r)) => {
                if !(0.0..=1.0).contains(&r) {
                    return Err(Error::invalid(format!(
                        "perturbation rate {r} outside [0, 1]"
                    )));
                }
            }
            (AttackKind::TargetedHeterophily, Budget::PerTarget(b)) => {
                if b > MAX_BUDGET_PER_TARGET {
                    return Err(Error::invalid(format!(
                        "per-target budget {b} exceeds {MAX_BUDGET_PER_TARGET}"
                    )));
                }
            }
            (kind, budget) => {
                return Err(Error::invalid(format!(
                    "{} attack cannot use budget {budget:?}",
                    kind.name()
                )))
            }
        }
        Ok(())
    }
}

/// Edges toggled by an attack, each stored as `(i, j)` with `i < j` in the
/// order they were applied.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Perturbation {
    pub added: Vec<(usize, usize)>,
    pub removed: Vec<(usize, usize)>,
    /// Requested operations that could not be applied because the
    /// candidate pool ran dry.
    #[serde(default)]
    pub shortfall: usize,
}

impl Perturbation {
    pub fn len(&self) -> usize {
        self.added.len() + self.removed.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Runs the attack described by `spec`.
pub fn attack(g: &Graph, spec: &AttackSpec) -> Result<(Graph, Perturbation)> {
    match spec.kind {
        AttackKind::Random => attack_random(g, spec),
        AttackKind::Heterophily => attack_heterophily(g, spec),
        AttackKind::TargetedHeterophily => attack_targeted(g, spec),
    }
}

fn rate_budget(g: &Graph, spec: &AttackSpec, expected: AttackKind) -> Result<usize> {
    spec.validate()?;
    if spec.kind != expected {
        return Err(Error::invalid(format!(
            "expected a {} attack spec, got {}",
            expected.name(),
            spec.kind.name()
        )));
    }
    match spec.budget {
        Budget::Rate(r) => Ok((r * g.edge_count() as f64).floor() as usize),
        Budget::PerTarget(_) => unreachable!("validated"),
    }
}

fn ordered(u: usize, v: usize) -> (usize, usize) {
    (u.min(v), u.max(v))
}

/// Mutable working copy shared by the generators.
struct Editor<'a> {
    clean: &'a Graph,
    adjacency: DenseMatrix,
    added: HashSet<(usize, usize)>,
    perturbation: Perturbation,
    rng: Rng,
}

impl<'a> Editor<'a> {
    fn new(clean: &'a Graph, seed: u64) -> Self {
        Self {
            clean,
            adjacency: clean.adjacency().clone(),
            added: HashSet::new(),
            perturbation: Perturbation::default(),
            rng: seeded(seed, streams::ATTACK),
        }
    }

    fn add(&mut self, u: usize, v: usize) {
        let e = ordered(u, v);
        self.adjacency.set(u, v, 1.0);
        self.adjacency.set(v, u, 1.0);
        self.added.insert(e);
        self.perturbation.added.push(e);
    }

    fn remove(&mut self, u: usize, v: usize) {
        self.adjacency.set(u, v, 0.0);
        self.adjacency.set(v, u, 0.0);
        self.perturbation.removed.push(ordered(u, v));
    }

    /// Uniformly random pair that is absent from the clean graph, not yet
    /// added and accepted by `admissible`. The caller guarantees one exists.
    fn sample_absent(&mut self, admissible: impl Fn(usize, usize) -> bool) -> (usize, usize) {
        let n = self.clean.n();
        loop {
            let u = self.rng.gen_range(0..n);
            let v = self.rng.gen_range(0..n);
            if u == v || !admissible(u, v) {
                continue;
            }
            if self.clean.adjacency().get(u, v) == 0.0 && !self.added.contains(&ordered(u, v)) {
                return (u, v);
            }
        }
    }

    /// Removes and returns a uniformly random element of `pool`.
    fn take(&mut self, pool: &mut Vec<(usize, usize)>) -> Option<(usize, usize)> {
        if pool.is_empty() {
            return None;
        }
        let i = self.rng.gen_range(0..pool.len());
        Some(pool.swap_remove(i))
    }

    fn finish(self) -> Result<(Graph, Perturbation)> {
        let g = self.clean.with_adjacency(self.adjacency)?;
        Ok((g, self.perturbation))
    }
}

/// `⌊rate · |E|⌋` operations, each a fair coin between inserting a uniformly
/// random non-edge and deleting a uniformly random edge.
pub fn attack_random(g: &Graph, spec: &AttackSpec) -> Result<(Graph, Perturbation)> {
    let budget = rate_budget(g, spec, AttackKind::Random)?;
    random_ops(g, budget, spec.seed)
}

pub fn random_ops(g: &Graph, budget: usize, seed: u64) -> Result<(Graph, Perturbation)> {
    let n = g.n();
    let mut edges = g.edges();
    let total_pairs = n * n.saturating_sub(1) / 2;
    let mut absent = total_pairs - edges.len();
    if budget > total_pairs {
        return Err(Error::invalid(format!(
            "budget {budget} exceeds the {total_pairs} available node pairs"
        )));
    }

    let mut ed = Editor::new(g, seed);
    for _ in 0..budget {
        let want_add = ed.rng.gen_bool(0.5);
        let add = if want_add {
            absent > 0
        } else {
            edges.is_empty()
        };
        if add {
            let (u, v) = ed.sample_absent(|_, _| true);
            ed.add(u, v);
            absent -= 1;
        } else {
            let (u, v) = ed.take(&mut edges).expect("pool checked");
            ed.remove(u, v);
        }
    }
    ed.finish()
}

fn labels(g: &Graph) -> Result<&[usize]> {
    g.labels()
        .ok_or_else(|| Error::invalid("heterophily attacks need node labels"))
}

/// `⌊rate · |E|⌋` operations, each a fair coin between inserting a random
/// absent edge across classes and deleting a random edge within a class.
pub fn attack_heterophily(g: &Graph, spec: &AttackSpec) -> Result<(Graph, Perturbation)> {
    let budget = rate_budget(g, spec, AttackKind::Heterophily)?;
    heterophily_ops(g, budget, spec.seed)
}

pub fn heterophily_ops(g: &Graph, budget: usize, seed: u64) -> Result<(Graph, Perturbation)> {
    let y = labels(g)?;
    let n = g.n();
    let all_edges = g.edges();
    let mut homophilous: Vec<(usize, usize)> = all_edges
        .iter()
        .copied()
        .filter(|&(u, v)| y[u] == y[v])
        .collect();
    let hetero_edges = all_edges.len() - homophilous.len();
    let mut class_sizes = vec![0usize; g.class_count()];
    for &c in y {
        class_sizes[c] += 1;
    }
    let same_pairs: usize = class_sizes
        .iter()
        .map(|&m| m * m.saturating_sub(1) / 2)
        .sum();
    let cross_pairs = n * n.saturating_sub(1) / 2 - same_pairs;
    let mut cross_absent = cross_pairs - hetero_edges;

    let mut ed = Editor::new(g, seed);
    for done in 0..budget {
        let want_add = ed.rng.gen_bool(0.5);
        let add = if want_add {
            cross_absent > 0
        } else {
            homophilous.is_empty() && cross_absent > 0
        };
        if add {
            let (u, v) = ed.sample_absent(|u, v| y[u] != y[v]);
            ed.add(u, v);
            cross_absent -= 1;
        } else if let Some((u, v)) = ed.take(&mut homophilous) {
            ed.remove(u, v);
        } else {
            ed.perturbation.shortfall = budget - done;
            log::warn!(
                "heterophily attack exhausted its candidate pools after {done} of {budget} operations"
            );
            break;
        }
    }
    ed.finish()
}

/// For each target, `budget` insertions of cross-class edges incident to it.
/// Targets default to every node whose clean degree exceeds
/// [`TARGET_MIN_DEGREE`].
pub fn attack_targeted(g: &Graph, spec: &AttackSpec) -> Result<(Graph, Perturbation)> {
    spec.validate()?;
    let Budget::PerTarget(budget) = spec.budget else {
        return Err(Error::invalid("targeted attack needs a per-target budget"));
    };
    let y = labels(g)?;
    let n = g.n();
    let targets = match &spec.targets {
        Some(t) => {
            if let Some(&bad) = t.iter().find(|&&i| i >= n) {
                return Err(Error::invalid(format!(
                    "target {bad} out of range for {n} nodes"
                )));
            }
            t.clone()
        }
        None => default_targets(g),
    };
    if targets.is_empty() {
        log::warn!("targeted attack found no targets; graph left unchanged");
    }

    let mut ed = Editor::new(g, spec.seed);
    for &t in &targets {
        for _ in 0..budget {
            let candidates: Vec<usize> = (0..n)
                .filter(|&v| {
                    v != t
                        && y[v] != y[t]
                        && ed.adjacency.get(t, v) == 0.0
                        && g.adjacency().get(t, v) == 0.0
                })
                .collect();
            if candidates.is_empty() {
                ed.perturbation.shortfall += 1;
                continue;
            }
            let v = candidates[ed.rng.gen_range(0..candidates.len())];
            ed.add(t, v);
        }
    }
    if ed.perturbation.shortfall > 0 {
        log::warn!(
            "targeted attack skipped {} insertion(s) for lack of candidates",
            ed.perturbation.shortfall
        );
    }
    ed.finish()
}

pub fn default_targets(g: &Graph) -> Vec<usize> {
    (0..g.n())
        .filter(|&i| g.degree(i) > TARGET_MIN_DEGREE)
        .collect()
}
