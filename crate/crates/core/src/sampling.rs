//! Pair selection policies.
//!
//! - [`random_select`]: uniform over the `n(n-1)/2` unordered pairs.
//! - [`unsupervised_select`]: greedy first-order growth of the Fiedler value,
//!   `argmax (v2(i) - v2(j))^2`.
//! - [`supervised_select`]: maximal expected information gain under the
//!   Gaussian posterior `x | y ~ N(mu, sigma_eps^2 (L + γI)^{-1})`, scored in
//!   O(1) per pair from the cached inverse.
//!
//! The posterior is maintained online: adding one comparison on `(i, j)` is a
//! rank-one update `L + d^T d` with `d = e_i - e_j`, so with `S = (L + γI)^{-1}`,
//! `s = S d^T` and `C = d S d^T`,
//!
//! ```text
//! S'  = S - s s^T / (1 + C)
//! mu' = mu + (y - d mu) / (1 + C) * s
//! KL  = 1/2 [ (y - d mu)^2 C / (sigma_eps^2 (1 + C)^2) + ln(1 + C) - C / (1 + C) ]
//! ```
//!
//! [`offline`] recomputes the same quantities from dense inverses.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::glm::{preference_prob, LinkFunction};
use crate::graph::{ComparisonGraph, EdgeFlow};
use crate::hodge::RidgeConfig;
use crate::linalg::{check_symmetric, sorted_eigen, spd_inverse};

/// An unordered item pair stored as `i < j`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Pair {
    pub i: usize,
    pub j: usize,
}

impl Pair {
    pub fn new(a: usize, b: usize) -> Self {
        assert_ne!(a, b, "a pair needs two distinct items");
        if a < b {
            Self { i: a, j: b }
        } else {
            Self { i: b, j: a }
        }
    }

    /// Position in the lexicographic enumeration of pairs over `n` items.
    pub fn rank(self, n: usize) -> usize {
        self.i * (2 * n - self.i - 1) / 2 + (self.j - self.i - 1)
    }

    pub fn unrank(mut index: usize, n: usize) -> Self {
        let mut i = 0;
        while index >= n - 1 - i {
            index -= n - 1 - i;
            i += 1;
        }
        Self { i, j: i + 1 + index }
    }
}

impl fmt::Display for Pair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.i, self.j)
    }
}

pub fn pair_count(n: usize) -> usize {
    n * n.saturating_sub(1) / 2
}

/// All pairs over `n` items in lexicographic order.
pub fn all_pairs(n: usize) -> impl Iterator<Item = Pair> {
    (0..n).flat_map(move |i| ((i + 1)..n).map(move |j| Pair { i, j }))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Policy {
    Random,
    Unsupervised,
    Supervised,
}

impl Policy {
    pub const ALL: [Policy; 3] = [Policy::Random, Policy::Unsupervised, Policy::Supervised];

    pub fn name(self) -> &'static str {
        match self {
            Self::Random => "random",
            Self::Unsupervised => "unsupervised",
            Self::Supervised => "supervised",
        }
    }

    pub fn index(self) -> u64 {
        self as u64
    }
}

impl fmt::Display for Policy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Policy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| Error::UnknownPolicy(s.to_string()))
    }
}

/// Relative margin a score must exceed the incumbent by to win a tie.
const TIE_TOL: f64 = 1e-12;

/// Score of every pair, lexicographic order, plus the argmax.
#[derive(Debug, Clone, PartialEq)]
pub struct PairScorecard {
    n: usize,
    scores: Vec<f64>,
    best: Pair,
}

impl PairScorecard {
    /// Ties (within a relative 1e-12) go to the lexicographically smallest pair.
    pub fn from_fn(n: usize, mut score: impl FnMut(Pair) -> f64) -> Self {
        assert!(n >= 2, "need at least two items");
        let scores: Vec<f64> = all_pairs(n).map(&mut score).collect();
        let mut best = 0;
        for (k, &s) in scores.iter().enumerate().skip(1) {
            let incumbent = scores[best];
            if s > incumbent + TIE_TOL * incumbent.abs().max(1.0) {
                best = k;
            }
        }
        Self {
            n,
            scores,
            best: Pair::unrank(best, n),
        }
    }

    pub fn best(&self) -> Pair {
        self.best
    }

    pub fn best_score(&self) -> f64 {
        self.scores[self.best.rank(self.n)]
    }

    pub fn score(&self, pair: Pair) -> f64 {
        self.scores[pair.rank(self.n)]
    }

    pub fn iter(&self) -> impl Iterator<Item = (Pair, f64)> + '_ {
        all_pairs(self.n).zip(self.scores.iter().copied())
    }
}

pub fn random_select<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Pair {
    assert!(n >= 2, "need at least two items");
    Pair::unrank(rng.random_range(0..pair_count(n)), n)
}

/// Second-smallest eigenpair of a graph Laplacian.
///
/// For a disconnected graph `λ2 = 0` and the vector is taken from the null
/// space orthogonal to the all-ones vector.
pub fn fiedler(laplacian: &DMatrix<f64>) -> Result<(f64, DVector<f64>)> {
    let spec = Spectrum::new(laplacian)?;
    Ok((spec.value, spec.vector))
}

#[derive(Debug, Clone)]
struct Spectrum {
    value: f64,
    vector: DVector<f64>,
    /// Orthogonal projector onto the λ2 eigenspace (minus constants).
    projector: DMatrix<f64>,
}

/// Eigenvalues within this relative distance count as equal.
const SPECTRAL_TOL: f64 = 1e-9;

impl Spectrum {
    fn new(laplacian: &DMatrix<f64>) -> Result<Self> {
        check_symmetric(laplacian, 1e-12)?;
        let n = laplacian.nrows();
        if n < 2 {
            return Err(Error::InvalidParameter {
                name: "laplacian",
                reason: format!("need at least 2 items, got {n}"),
            });
        }
        let (values, vectors) = sorted_eigen(laplacian);
        let tol = SPECTRAL_TOL * values[n - 1].abs().max(1.0);
        let zeros = values.iter().filter(|v| **v <= tol).count();

        let mut projector = DMatrix::zeros(n, n);
        let value = if zeros >= 2 {
            for k in 0..zeros {
                let v = vectors.column(k);
                projector += v * v.transpose();
            }
            projector.add_scalar_mut(-1.0 / n as f64);
            0.0
        } else {
            let lambda = values[1];
            for k in 1..n {
                if values[k] - lambda > tol {
                    break;
                }
                let v = vectors.column(k);
                projector += v * v.transpose();
            }
            lambda.max(0.0)
        };

        let simple = zeros < 2 && (n < 3 || values[2] - values[1] > tol);
        let mut vector: DVector<f64> = if simple {
            vectors.column(1).into_owned()
        } else {
            let k = (0..n)
                .max_by(|&a, &b| projector[(a, a)].total_cmp(&projector[(b, b)]).then(b.cmp(&a)))
                .unwrap();
            projector.column(k).into_owned()
        };
        vector /= vector.norm();
        if let Some(first) = vector.iter().find(|v| v.abs() > 1e-12) {
            if *first < 0.0 {
                vector.neg_mut();
            }
        }
        Ok(Self {
            value,
            vector,
            projector,
        })
    }

    /// First-order Fiedler gain of adding pair `p`: `d P d^T`, which is
    /// `(v2(i) - v2(j))^2` when λ2 is simple.
    fn gain(&self, p: Pair) -> f64 {
        let pr = &self.projector;
        pr[(p.i, p.i)] + pr[(p.j, p.j)] - 2.0 * pr[(p.i, p.j)]
    }
}

/// Laplacian with its Fiedler value and vector.
#[derive(Debug, Clone)]
pub struct FiedlerState {
    laplacian: DMatrix<f64>,
    spectrum: Spectrum,
}

impl FiedlerState {
    pub fn new(laplacian: DMatrix<f64>) -> Result<Self> {
        let spectrum = Spectrum::new(&laplacian)?;
        Ok(Self {
            laplacian,
            spectrum,
        })
    }

    /// State for an empty graph on `n` items.
    pub fn empty(n: usize) -> Result<Self> {
        Self::new(DMatrix::zeros(n, n))
    }

    pub fn from_graph(graph: &ComparisonGraph) -> Result<Self> {
        Self::new(graph.laplacian())
    }

    pub fn n(&self) -> usize {
        self.laplacian.nrows()
    }

    pub fn laplacian(&self) -> &DMatrix<f64> {
        &self.laplacian
    }

    pub fn fiedler_value(&self) -> f64 {
        self.spectrum.value
    }

    pub fn fiedler_vector(&self) -> &DVector<f64> {
        &self.spectrum.vector
    }

    pub fn gain(&self, pair: Pair) -> f64 {
        self.spectrum.gain(pair)
    }

    pub fn scorecard(&self) -> PairScorecard {
        PairScorecard::from_fn(self.n(), |p| self.gain(p))
    }
}

/// Greedy Fiedler step: the pair with the largest first-order gain.
///
/// When λ2 is degenerate (including the disconnected case) the gain is taken
/// over the whole eigenspace, `d P d^T`, so the choice does not depend on
/// which eigenvector the solver returned.
pub fn unsupervised_select(state: &FiedlerState) -> Pair {
    state.scorecard().best()
}

/// `L <- L + d^T d` for the pair, then a fresh eigensolve.
pub fn fiedler_update(state: &mut FiedlerState, pair: Pair) -> Result<()> {
    let l = &mut state.laplacian;
    l[(pair.i, pair.i)] += 1.0;
    l[(pair.j, pair.j)] += 1.0;
    l[(pair.i, pair.j)] -= 1.0;
    l[(pair.j, pair.i)] -= 1.0;
    state.spectrum = Spectrum::new(l)?;
    Ok(())
}

/// Gaussian posterior of ridge HodgeRank.
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorState {
    pub mu: DVector<f64>,
    /// `(L_t + γI)^{-1}`; the posterior covariance is `sigma_eps^2` times this.
    pub sigma_inv: DMatrix<f64>,
    pub gamma: f64,
    pub sigma_eps: f64,
    pub t: u64,
}

impl PosteriorState {
    /// Prior `N(0, sigma_eps^2 / γ · I)` before any data.
    pub fn new(n: usize, cfg: &RidgeConfig) -> Result<Self> {
        cfg.validate()?;
        if cfg.gamma <= 0.0 {
            return Err(Error::InvalidParameter {
                name: "gamma",
                reason: "the posterior needs gamma > 0".into(),
            });
        }
        Ok(Self {
            mu: DVector::zeros(n),
            sigma_inv: DMatrix::identity(n, n) / cfg.gamma,
            gamma: cfg.gamma,
            sigma_eps: cfg.sigma_eps,
            t: 0,
        })
    }

    pub fn n(&self) -> usize {
        self.mu.len()
    }

    /// `(C, d mu)` for a pair: two lookups and a subtraction each.
    pub fn pair_stats(&self, p: Pair) -> (f64, f64) {
        let s = &self.sigma_inv;
        let c = s[(p.i, p.i)] + s[(p.j, p.j)] - 2.0 * s[(p.i, p.j)];
        (c, self.mu[p.i] - self.mu[p.j])
    }

    /// Max-abs entry of `S (L + γI) - I` for the given Laplacian.
    pub fn inverse_residual(&self, laplacian: &DMatrix<f64>) -> f64 {
        let n = self.n();
        let lg = laplacian + DMatrix::identity(n, n) * self.gamma;
        (&self.sigma_inv * lg - DMatrix::identity(n, n)).amax()
    }
}

/// Closed-form `KL(P^{t+1} || P^t)` after observing `y_next` on `pair`.
pub fn kl_step(state: &PosteriorState, pair: Pair, y_next: f64) -> f64 {
    let (c, dmu) = state.pair_stats(pair);
    kl_from_stats(c, y_next - dmu, state.sigma_eps)
}

fn kl_from_stats(c: f64, innovation: f64, sigma_eps: f64) -> f64 {
    let shrunk = innovation / (1.0 + c);
    0.5 * (shrunk * shrunk * c / (sigma_eps * sigma_eps) + c.ln_1p() - c / (1.0 + c))
}

/// Expected KL under the binary predictive `P(y = +1) = Φ(mu_i - mu_j)`.
pub fn expected_information_gain(state: &PosteriorState, pair: Pair, link: LinkFunction) -> f64 {
    let (c, dmu) = state.pair_stats(pair);
    let p = preference_prob(link, dmu);
    p * kl_from_stats(c, 1.0 - dmu, state.sigma_eps)
        + (1.0 - p) * kl_from_stats(c, -1.0 - dmu, state.sigma_eps)
}

pub fn supervised_scorecard(state: &PosteriorState, link: LinkFunction) -> PairScorecard {
    PairScorecard::from_fn(state.n(), |p| expected_information_gain(state, p, link))
}

pub fn supervised_select(state: &PosteriorState, link: LinkFunction) -> Pair {
    supervised_scorecard(state, link).best()
}

/// Rank-one Sherman-Morrison update of the posterior, O(n^2).
pub fn posterior_update(state: &mut PosteriorState, pair: Pair, y_next: f64) {
    let n = state.n();
    let s_dt = DVector::from_iterator(
        n,
        (0..n).map(|k| state.sigma_inv[(k, pair.i)] - state.sigma_inv[(k, pair.j)]),
    );
    let c = s_dt[pair.i] - s_dt[pair.j];
    let innovation = y_next - (state.mu[pair.i] - state.mu[pair.j]);
    let denom = 1.0 + c;
    state.mu.axpy(innovation / denom, &s_dt, 1.0);
    state.sigma_inv.ger(-1.0 / denom, &s_dt, &s_dt, 1.0);
    state.t += 1;
}

/// Dense batch posterior `mu = (L + γI)^{-1} D0^T y`, `S = (L + γI)^{-1}`.
pub fn offline_posterior(
    graph: &ComparisonGraph,
    y: &EdgeFlow,
    cfg: &RidgeConfig,
) -> Result<PosteriorState> {
    cfg.validate()?;
    let n = graph.n();
    let sigma_inv = spd_inverse(&(graph.laplacian() + DMatrix::identity(n, n) * cfg.gamma))?;
    let mu = &sigma_inv * graph.coboundary_adjoint(y)?;
    Ok(PosteriorState {
        mu,
        sigma_inv,
        gamma: cfg.gamma,
        sigma_eps: cfg.sigma_eps,
        t: graph.record_count() as u64,
    })
}

/// Supervised selection recomputed from dense inverses at every candidate.
///
/// Each pair costs a Cholesky factorization, O(n^3). This is the slow
/// reference for the online path.
pub mod offline {
    use super::*;

    /// Current Laplacian and `D0^T y`, the sufficient statistics of the data.
    #[derive(Debug, Clone)]
    pub struct DenseData {
        pub laplacian: DMatrix<f64>,
        pub rhs: DVector<f64>,
    }

    impl DenseData {
        pub fn from_graph(graph: &ComparisonGraph, y: &EdgeFlow) -> Result<Self> {
            Ok(Self {
                laplacian: graph.laplacian(),
                rhs: graph.coboundary_adjoint(y)?,
            })
        }
    }

    fn log_det_spd(m: &DMatrix<f64>) -> Result<(f64, DMatrix<f64>)> {
        let chol = m.clone().cholesky().ok_or(Error::Singular)?;
        let log_det = 2.0 * chol.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>();
        Ok((log_det, chol.inverse()))
    }

    /// Generic Gaussian KL between the posteriors before and after one
    /// hypothetical observation `y_next` on `pair`.
    pub fn gaussian_kl(
        data: &DenseData,
        cfg: &RidgeConfig,
        pair: Pair,
        y_next: f64,
    ) -> Result<f64> {
        let (before, after) = posteriors(data, cfg, pair)?;
        Ok(kl_between(&before, &after, y_next, data, cfg, pair))
    }

    struct Dense {
        precision: DMatrix<f64>,
        inverse: DMatrix<f64>,
        log_det: f64,
    }

    fn posteriors(data: &DenseData, cfg: &RidgeConfig, pair: Pair) -> Result<(Dense, Dense)> {
        let n = data.laplacian.nrows();
        let precision = &data.laplacian + DMatrix::identity(n, n) * cfg.gamma;
        let (log_det, inverse) = log_det_spd(&precision)?;
        let mut next = precision.clone();
        next[(pair.i, pair.i)] += 1.0;
        next[(pair.j, pair.j)] += 1.0;
        next[(pair.i, pair.j)] -= 1.0;
        next[(pair.j, pair.i)] -= 1.0;
        let (next_log_det, next_inverse) = log_det_spd(&next)?;
        Ok((
            Dense {
                precision,
                inverse,
                log_det,
            },
            Dense {
                precision: next,
                inverse: next_inverse,
                log_det: next_log_det,
            },
        ))
    }

    fn kl_between(
        before: &Dense,
        after: &Dense,
        y_next: f64,
        data: &DenseData,
        cfg: &RidgeConfig,
        pair: Pair,
    ) -> f64 {
        let n = data.rhs.len();
        let mu = &before.inverse * &data.rhs;
        let mut rhs = data.rhs.clone();
        rhs[pair.i] += y_next;
        rhs[pair.j] -= y_next;
        let mu_next = &after.inverse * rhs;
        let diff = &mu - &mu_next;
        let quad = diff.dot(&(&before.precision * &diff)) / (cfg.sigma_eps * cfg.sigma_eps);
        let trace = (&before.precision * &after.inverse).trace();
        0.5 * (quad - n as f64 + trace + after.log_det - before.log_det)
    }

    pub fn expected_information_gain(
        data: &DenseData,
        cfg: &RidgeConfig,
        pair: Pair,
        link: LinkFunction,
    ) -> Result<f64> {
        let (before, after) = posteriors(data, cfg, pair)?;
        let mu = &before.inverse * &data.rhs;
        let p = preference_prob(link, mu[pair.i] - mu[pair.j]);
        Ok(p * kl_between(&before, &after, 1.0, data, cfg, pair)
            + (1.0 - p) * kl_between(&before, &after, -1.0, data, cfg, pair))
    }

    pub fn scorecard(data: &DenseData, cfg: &RidgeConfig, link: LinkFunction) -> Result<PairScorecard> {
        let n = data.rhs.len();
        let mut scores = Vec::with_capacity(pair_count(n));
        for p in all_pairs(n) {
            scores.push(expected_information_gain(data, cfg, p, link)?);
        }
        let mut it = scores.into_iter();
        Ok(PairScorecard::from_fn(n, |_| it.next().unwrap()))
    }

    pub fn select(data: &DenseData, cfg: &RidgeConfig, link: LinkFunction) -> Result<Pair> {
        Ok(scorecard(data, cfg, link)?.best())
    }
}
