//! Seeded simulation study: synthetic ground truth, budgeted sampling under
//! each policy, HodgeRank estimates and their quality curves.
//!
//! Every `(replication, scheme)` pair is an independent work unit driven by
//! its own random stream (see [`crate::glm::replication_rng`]), so results do
//! not depend on the thread count or on which schemes are requested.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use nalgebra::DVector;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::glm::{
    generate_ground_truth, ground_truth_stream, replication_rng, sample_label, scheme_stream,
    GroundTruth, LinkFunction,
};
use crate::graph::{ComparisonGraph, ComparisonRecord, ValueMode, VoterId};
use crate::hodge::{global_score, RidgeConfig};
use crate::sampling::{
    fiedler, fiedler_update, offline, offline_posterior, pair_count, posterior_update,
    random_select, supervised_select, unsupervised_select, FiedlerState, Pair, Policy,
    PosteriorState,
};
use crate::topology::{PersistenceTracker, Simplex, TopologyTimeline};

/// Estimator used by the random and unsupervised schemes at checkpoints.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Estimator {
    /// `(L + γI)^{-1} D0^T y`, the same estimator as the supervised posterior mean.
    #[default]
    Ridge,
    /// `L^+ D0^T y`.
    MinNorm,
}

/// How the supervised scheme maintains its posterior.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SupervisedUpdate {
    /// Rank-one Sherman-Morrison updates.
    #[default]
    Online,
    /// Dense recomputation for every candidate pair; slow reference.
    Offline,
}

fn default_schemes() -> Vec<Policy> {
    Policy::ALL.to_vec()
}

fn default_gamma() -> f64 {
    RidgeConfig::default().gamma
}

fn default_sigma_eps() -> f64 {
    RidgeConfig::default().sigma_eps
}

fn default_voters() -> u32 {
    50
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub n: usize,
    /// Total comparisons per trajectory.
    pub budget: u64,
    #[serde(default = "default_schemes")]
    pub schemes: Vec<Policy>,
    #[serde(default)]
    pub link: LinkFunction,
    #[serde(default = "default_gamma")]
    pub gamma: f64,
    #[serde(default = "default_sigma_eps")]
    pub sigma_eps: f64,
    pub replications: u64,
    pub seed: u64,
    /// Checkpoints; see [`ExperimentConfig::checkpoints`] for the default.
    #[serde(default)]
    pub eval_grid: Option<Vec<u64>>,
    #[serde(default)]
    pub estimator: Estimator,
    /// Labels are the sign of the true score difference.
    #[serde(default)]
    pub noise_free: bool,
    /// Size of the simulated voter pool.
    #[serde(default = "default_voters")]
    pub voters: u32,
    #[serde(default)]
    pub supervised_update: SupervisedUpdate,
    /// Emit `wallclock` rows; these are excluded from determinism.
    #[serde(default)]
    pub record_wallclock: bool,
}

impl ExperimentConfig {
    /// A config with every optional field at its default.
    pub fn new(n: usize, budget: u64, replications: u64, seed: u64) -> Self {
        Self {
            n,
            budget,
            schemes: default_schemes(),
            link: LinkFunction::default(),
            gamma: default_gamma(),
            sigma_eps: default_sigma_eps(),
            replications,
            seed,
            eval_grid: None,
            estimator: Estimator::default(),
            noise_free: false,
            voters: default_voters(),
            supervised_update: SupervisedUpdate::default(),
            record_wallclock: false,
        }
    }

    pub fn ridge(&self) -> RidgeConfig {
        RidgeConfig {
            gamma: self.gamma,
            sigma_eps: self.sigma_eps,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |field, reason: &str| {
            Err(Error::InvalidConfig {
                field,
                reason: reason.to_string(),
            })
        };
        if self.n < 2 {
            return bad("n", "need at least 2 items");
        }
        if self.budget < 1 {
            return bad("budget", "must be at least 1");
        }
        if self.replications < 1 {
            return bad("replications", "must be at least 1");
        }
        if self.schemes.is_empty() {
            return bad("schemes", "at least one scheme is required");
        }
        for (k, s) in self.schemes.iter().enumerate() {
            if self.schemes[..k].contains(s) {
                return bad("schemes", &format!("{s} listed twice"));
            }
        }
        if !(self.gamma.is_finite() && self.gamma >= 0.0) {
            return bad("gamma", "must be finite and nonnegative");
        }
        if self.gamma == 0.0 && self.schemes.contains(&Policy::Supervised) {
            return bad("gamma", "the supervised scheme needs gamma > 0");
        }
        if !(self.sigma_eps.is_finite() && self.sigma_eps > 0.0) {
            return bad("sigma_eps", "must be finite and positive");
        }
        if self.voters < 1 {
            return bad("voters", "must be at least 1");
        }
        if let Some(grid) = &self.eval_grid {
            if grid.is_empty() {
                return bad("eval_grid", "must not be empty");
            }
            if grid[0] < 1 {
                return bad("eval_grid", "checkpoints start at 1");
            }
            if grid.windows(2).any(|w| w[0] >= w[1]) {
                return bad("eval_grid", "must be strictly increasing");
            }
            if *grid.last().unwrap() > self.budget {
                return bad("eval_grid", "checkpoints must not exceed the budget");
            }
        }
        Ok(())
    }

    /// The explicit grid, or every `K/10` samples (`K = n(n-1)/2`) starting
    /// at `K ln(n) / n`, always ending at the budget.
    pub fn checkpoints(&self) -> Vec<u64> {
        if let Some(grid) = &self.eval_grid {
            return grid.clone();
        }
        let k = pair_count(self.n) as f64;
        let start = ((k * (self.n as f64).ln() / self.n as f64).ceil() as u64).max(1);
        let step = ((k / 10.0).ceil() as u64).max(1);
        let mut grid: Vec<u64> = (0..)
            .map(|s| start + s * step)
            .take_while(|&t| t <= self.budget)
            .collect();
        if grid.last() != Some(&self.budget) {
            grid.push(self.budget);
        }
        grid
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    KendallTau,
    FiedlerValue,
    Beta0,
    Beta1,
    Wallclock,
}

impl Metric {
    pub const ALL: [Metric; 5] = [
        Metric::KendallTau,
        Metric::FiedlerValue,
        Metric::Beta0,
        Metric::Beta1,
        Metric::Wallclock,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Self::KendallTau => "kendall_tau",
            Self::FiedlerValue => "fiedler_value",
            Self::Beta0 => "beta0",
            Self::Beta1 => "beta1",
            Self::Wallclock => "wallclock",
        }
    }

    pub fn is_count(self) -> bool {
        matches!(self, Self::Beta0 | Self::Beta1)
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::InvalidParameter {
                name: "metric",
                reason: format!("unknown metric {s:?}"),
            })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub replication: u64,
    pub scheme: Policy,
    pub step: u64,
    pub metric: Metric,
    pub value: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ResultTable {
    pub rows: Vec<ResultRow>,
}

impl ResultTable {
    pub fn values(&self, scheme: Policy, metric: Metric) -> impl Iterator<Item = &ResultRow> + '_ {
        self.rows
            .iter()
            .filter(move |r| r.scheme == scheme && r.metric == metric)
    }
}

/// Kendall's tau-a: `(concordant - discordant) / C(n, 2)`; pairs tied in
/// either vector count as neither.
pub fn kendall_tau(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            expected: a.len(),
            actual: b.len(),
        });
    }
    let n = a.len();
    if n < 2 {
        return Err(Error::InvalidParameter {
            name: "n",
            reason: "kendall tau needs at least 2 entries".into(),
        });
    }
    let mut score = 0i64;
    for i in 0..n {
        for j in (i + 1)..n {
            let s = (a[i] - a[j]).signum() * (b[i] - b[j]).signum();
            if a[i] != a[j] && b[i] != b[j] {
                score += s as i64;
            }
        }
    }
    Ok(score as f64 / (n * (n - 1) / 2) as f64)
}

/// Ranks starting at 1, ties sharing their average rank.
fn average_ranks(v: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..v.len()).collect();
    order.sort_by(|&x, &y| v[x].total_cmp(&v[y]));
    let mut ranks = vec![0.0; v.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && v[order[end]] == v[order[start]] {
            end += 1;
        }
        let rank = (start + end + 1) as f64 / 2.0;
        for &k in &order[start..end] {
            ranks[k] = rank;
        }
        start = end;
    }
    ranks
}

/// Spearman rank correlation with average ranks for ties. NaN when either
/// input is constant.
pub fn spearman(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            expected: a.len(),
            actual: b.len(),
        });
    }
    if a.len() < 2 {
        return Err(Error::InvalidParameter {
            name: "n",
            reason: "spearman needs at least 2 entries".into(),
        });
    }
    let (ra, rb) = (average_ranks(a), average_ranks(b));
    let mean = (a.len() as f64 + 1.0) / 2.0;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in ra.iter().zip(&rb) {
        sab += (x - mean) * (y - mean);
        saa += (x - mean) * (x - mean);
        sbb += (y - mean) * (y - mean);
    }
    Ok(sab / (saa * sbb).sqrt())
}

enum SchemeState {
    Random,
    Unsupervised(FiedlerState),
    Supervised(PosteriorState),
    SupervisedOffline(offline::DenseData),
}

/// One sampling trajectory: pair selection, label simulation and all
/// estimator and topology state.
pub struct Trajectory<'a> {
    cfg: &'a ExperimentConfig,
    truth: &'a GroundTruth,
    scheme: Policy,
    rng: ChaCha8Rng,
    graph: ComparisonGraph,
    state: SchemeState,
    tracker: PersistenceTracker,
    counts: Vec<u32>,
}

impl<'a> Trajectory<'a> {
    pub fn new(
        cfg: &'a ExperimentConfig,
        truth: &'a GroundTruth,
        scheme: Policy,
        rng: ChaCha8Rng,
    ) -> Result<Self> {
        let n = cfg.n;
        if truth.n() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                actual: truth.n(),
            });
        }
        let state = match (scheme, cfg.supervised_update) {
            (Policy::Random, _) => SchemeState::Random,
            (Policy::Unsupervised, _) => SchemeState::Unsupervised(FiedlerState::empty(n)?),
            (Policy::Supervised, SupervisedUpdate::Online) => {
                SchemeState::Supervised(PosteriorState::new(n, &cfg.ridge())?)
            }
            (Policy::Supervised, SupervisedUpdate::Offline) => {
                SchemeState::SupervisedOffline(offline::DenseData {
                    laplacian: nalgebra::DMatrix::zeros(n, n),
                    rhs: DVector::zeros(n),
                })
            }
        };
        Ok(Self {
            cfg,
            truth,
            scheme,
            rng,
            graph: ComparisonGraph::with_mode(n, ValueMode::Binary),
            state,
            tracker: PersistenceTracker::with_vertices(n),
            counts: vec![0; pair_count(n)],
        })
    }

    pub fn scheme(&self) -> Policy {
        self.scheme
    }

    pub fn graph(&self) -> &ComparisonGraph {
        &self.graph
    }

    pub fn posterior(&self) -> Option<&PosteriorState> {
        match &self.state {
            SchemeState::Supervised(p) => Some(p),
            _ => None,
        }
    }

    pub fn timeline(&self) -> &TopologyTimeline {
        self.tracker.timeline()
    }

    /// Times each pair has been sampled, indexed by [`Pair::rank`].
    pub fn pair_counts(&self) -> &[u32] {
        &self.counts
    }

    pub fn steps(&self) -> u64 {
        self.graph.record_count() as u64
    }

    fn select(&mut self) -> Result<Pair> {
        Ok(match &self.state {
            SchemeState::Random => random_select(self.cfg.n, &mut self.rng),
            SchemeState::Unsupervised(f) => unsupervised_select(f),
            SchemeState::Supervised(p) => supervised_select(p, self.cfg.link),
            SchemeState::SupervisedOffline(d) => offline::select(d, &self.cfg.ridge(), self.cfg.link)?,
        })
    }

    fn label(&mut self, pair: Pair) -> f64 {
        if self.cfg.noise_free {
            let d = self.truth.scores[pair.i] - self.truth.scores[pair.j];
            if d >= 0.0 {
                1.0
            } else {
                -1.0
            }
        } else {
            sample_label(self.cfg.link, self.truth, pair.i, pair.j, &mut self.rng)
        }
    }

    /// Selects a pair, simulates a voter and a label, and updates all state.
    pub fn step(&mut self) -> Result<(Pair, f64)> {
        let pair = self.select()?;
        let voter = self.rng.random_range(0..self.cfg.voters);
        let y = self.label(pair);
        let ins = self
            .graph
            .add_comparison(ComparisonRecord::new(VoterId(voter), pair.i, pair.j, y))?;
        let seq = ins.seq;
        if ins.new_edge {
            self.tracker.push(seq, Simplex::Edge(pair.i, pair.j))?;
            for t in ins.new_triangles.clone() {
                self.tracker
                    .push(seq, Simplex::Triangle(self.graph.triangles()[t].vertices))?;
            }
        }
        self.counts[pair.rank(self.cfg.n)] += 1;
        match &mut self.state {
            SchemeState::Random => {}
            SchemeState::Unsupervised(f) => fiedler_update(f, pair)?,
            SchemeState::Supervised(p) => posterior_update(p, pair, y),
            SchemeState::SupervisedOffline(d) => {
                let l = &mut d.laplacian;
                l[(pair.i, pair.i)] += 1.0;
                l[(pair.j, pair.j)] += 1.0;
                l[(pair.i, pair.j)] -= 1.0;
                l[(pair.j, pair.i)] -= 1.0;
                d.rhs[pair.i] += y;
                d.rhs[pair.j] -= y;
            }
        }
        Ok((pair, y))
    }

    /// Current score estimate.
    pub fn estimate(&self) -> Result<DVector<f64>> {
        match &self.state {
            SchemeState::Supervised(p) => Ok(p.mu.clone()),
            SchemeState::SupervisedOffline(_) => {
                Ok(offline_posterior(&self.graph, &self.graph.flow(), &self.cfg.ridge())?.mu)
            }
            SchemeState::Random | SchemeState::Unsupervised(_) => {
                let cfg = match self.cfg.estimator {
                    Estimator::Ridge => self.cfg.ridge(),
                    Estimator::MinNorm => RidgeConfig {
                        gamma: 0.0,
                        sigma_eps: self.cfg.sigma_eps,
                    },
                };
                Ok(global_score(&self.graph, &self.graph.flow(), &cfg)?.scores)
            }
        }
    }

    pub fn fiedler_value(&self) -> Result<f64> {
        match &self.state {
            SchemeState::Unsupervised(f) => Ok(f.fiedler_value()),
            _ => Ok(fiedler(&self.graph.laplacian())?.0),
        }
    }

    pub fn betti(&self) -> (usize, usize) {
        (self.tracker.beta0(), self.tracker.beta1())
    }
}

/// Checkpoint metrics for one `(scheme, replication)` trajectory.
pub fn run_replication(cfg: &ExperimentConfig, scheme: Policy, rep: u64) -> Result<Vec<ResultRow>> {
    cfg.validate()?;
    let truth = generate_ground_truth(cfg.n, &mut replication_rng(cfg.seed, ground_truth_stream(rep)))?;
    let rng = replication_rng(cfg.seed, scheme_stream(rep, scheme.index()));
    let start = Instant::now();
    let mut traj = Trajectory::new(cfg, &truth, scheme, rng)?;
    let truth_scores: Vec<f64> = truth.scores.iter().copied().collect();
    let mut rows = Vec::new();
    let checkpoints = cfg.checkpoints();
    let mut next = checkpoints.iter().peekable();
    for step in 1..=cfg.budget {
        traj.step()?;
        if next.next_if(|&&c| c == step).is_none() {
            continue;
        }
        let est: Vec<f64> = traj.estimate()?.iter().copied().collect();
        let (b0, b1) = traj.betti();
        let mut push = |metric, value| {
            rows.push(ResultRow {
                replication: rep,
                scheme,
                step,
                metric,
                value,
            })
        };
        push(Metric::KendallTau, kendall_tau(&est, &truth_scores)?);
        push(Metric::FiedlerValue, traj.fiedler_value()?);
        push(Metric::Beta0, b0 as f64);
        push(Metric::Beta1, b1 as f64);
        if cfg.record_wallclock {
            push(Metric::Wallclock, start.elapsed().as_secs_f64());
        }
    }
    Ok(rows)
}

/// All replications of all requested schemes, run in parallel on the
/// current rayon pool. Rows are ordered by scheme (in config order), then
/// replication, then step.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ResultTable> {
    cfg.validate()?;
    let units: Vec<(Policy, u64)> = cfg
        .schemes
        .iter()
        .flat_map(|&s| (0..cfg.replications).map(move |r| (s, r)))
        .collect();
    let parts: Vec<Vec<ResultRow>> = units
        .par_iter()
        .map(|&(s, r)| run_replication(cfg, s, r))
        .collect::<Result<_>>()?;
    Ok(ResultTable {
        rows: parts.into_iter().flatten().collect(),
    })
}

/// Sampling effort spent on one pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairBudget {
    pub pair: Pair,
    pub ambiguity: f64,
    pub mean_count: f64,
}

/// Per-pair mean sample counts of the supervised scheme over replications
/// on one ground truth, drawn from replication 0's stream.
pub fn budget_histogram(cfg: &ExperimentConfig) -> Result<Vec<PairBudget>> {
    cfg.validate()?;
    let truth = generate_ground_truth(cfg.n, &mut replication_rng(cfg.seed, ground_truth_stream(0)))?;
    budget_histogram_with_truth(cfg, &truth)
}

pub fn budget_histogram_with_truth(cfg: &ExperimentConfig, truth: &GroundTruth) -> Result<Vec<PairBudget>> {
    cfg.validate()?;
    if !cfg.schemes.contains(&Policy::Supervised) {
        return Err(Error::InvalidConfig {
            field: "schemes",
            reason: "the budget histogram needs the supervised scheme".into(),
        });
    }
    let counts: Vec<Vec<u32>> = (0..cfg.replications)
        .into_par_iter()
        .map(|rep| {
            let rng = replication_rng(cfg.seed, scheme_stream(rep, Policy::Supervised.index()));
            let mut traj = Trajectory::new(cfg, truth, Policy::Supervised, rng)?;
            for _ in 0..cfg.budget {
                traj.step()?;
            }
            Ok(traj.counts)
        })
        .collect::<Result<_>>()?;
    let r = cfg.replications as f64;
    Ok(crate::sampling::all_pairs(cfg.n)
        .map(|pair| {
            let k = pair.rank(cfg.n);
            PairBudget {
                pair,
                ambiguity: truth.ambiguity(pair.i, pair.j),
                mean_count: counts.iter().map(|c| c[k] as f64).sum::<f64>() / r,
            }
        })
        .collect())
}

/// Ensemble statistics at one checkpoint.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub scheme: Policy,
    pub metric: Metric,
    pub step: u64,
    pub mean: f64,
    /// Population standard deviation.
    pub std: f64,
    pub count: usize,
}

/// (table, replication) -> [(step, value)]
type Series = BTreeMap<(usize, u64), Vec<(u64, f64)>>;

/// Mean and standard deviation per `(scheme, metric, step)` over every
/// replication of every table. All replications of a `(scheme, metric)`
/// must share the same checkpoints.
pub fn aggregate(tables: &[ResultTable]) -> Result<Vec<CurvePoint>> {
    if tables.is_empty() {
        return Err(Error::EmptyInput("no result tables"));
    }
    let mut series: BTreeMap<(u64, Metric), Series> = BTreeMap::new();
    let mut schemes = BTreeMap::new();
    for (t, table) in tables.iter().enumerate() {
        for r in &table.rows {
            schemes.insert(r.scheme.index(), r.scheme);
            series
                .entry((r.scheme.index(), r.metric))
                .or_default()
                .entry((t, r.replication))
                .or_default()
                .push((r.step, r.value));
        }
    }
    let mut out = Vec::new();
    for ((s, metric), runs) in series {
        let mut runs: Vec<Vec<(u64, f64)>> = runs.into_values().collect();
        for run in &mut runs {
            run.sort_by_key(|&(step, _)| step);
        }
        let steps: Vec<u64> = runs[0].iter().map(|p| p.0).collect();
        if runs
            .iter()
            .any(|run| run.len() != steps.len() || run.iter().zip(&steps).any(|(p, s)| p.0 != *s))
        {
            return Err(Error::CheckpointMismatch);
        }
        let count = runs.len();
        for (k, &step) in steps.iter().enumerate() {
            let mean = runs.iter().map(|run| run[k].1).sum::<f64>() / count as f64;
            let var = runs.iter().map(|run| (run[k].1 - mean).powi(2)).sum::<f64>() / count as f64;
            out.push(CurvePoint {
                scheme: schemes[&s],
                metric,
                step,
                mean,
                std: var.sqrt(),
                count,
            });
        }
    }
    Ok(out)
}

/// Mean Kendall tau at the last checkpoint of each scheme.
pub fn final_mean_tau(curves: &[CurvePoint]) -> Vec<(Policy, f64)> {
    let mut last: BTreeMap<u64, &CurvePoint> = BTreeMap::new();
    for c in curves.iter().filter(|c| c.metric == Metric::KendallTau) {
        let slot = last.entry(c.scheme.index()).or_insert(c);
        if c.step > slot.step {
            *slot = c;
        }
    }
    last.into_values().map(|c| (c.scheme, c.mean)).collect()
}
