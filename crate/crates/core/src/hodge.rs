//! Hodge decomposition of multi-voter comparison flows and the estimators
//! built on it.
//!
//! A flow `y` splits orthogonally as
//!
//! ```text
//! y = b + u + D0 x + D1^T z + w,      w in ker(D0^T) ∩ ker(D1)
//! ```
//!
//! with `b` the symmetric (position bias) part, `u` the per-edge zero-mean
//! tie kernel, `D0 x` the gradient of the global score, `D1^T z` the local
//! triangular cycles and `w` the harmonic part made of loops that no triangle
//! fills. Potentials are fixed by minimal norm: `x` is mean-zero on each
//! connected component and `z` is orthogonal to `ker(D1^T)`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{ComparisonGraph, EdgeFlow, ValueMode};
use crate::linalg::{psd_pseudo_inverse, spd_solve};

/// Ridge regularization and noise scale of the Gaussian model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RidgeConfig {
    /// `sigma_eps^2 / sigma_x^2`; zero selects the minimal-norm least-squares solution.
    pub gamma: f64,
    pub sigma_eps: f64,
}

impl Default for RidgeConfig {
    fn default() -> Self {
        Self {
            gamma: 0.01,
            sigma_eps: 1.0,
        }
    }
}

impl RidgeConfig {
    pub fn new(gamma: f64, sigma_eps: f64) -> Result<Self> {
        let cfg = Self { gamma, sigma_eps };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn min_norm() -> Self {
        Self {
            gamma: 0.0,
            sigma_eps: 1.0,
        }
    }

    pub fn ridge(gamma: f64) -> Self {
        Self {
            gamma,
            sigma_eps: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !self.gamma.is_finite() || self.gamma < 0.0 {
            return Err(Error::InvalidParameter {
                name: "gamma",
                reason: format!("must be finite and >= 0, got {}", self.gamma),
            });
        }
        if !self.sigma_eps.is_finite() || self.sigma_eps <= 0.0 {
            return Err(Error::InvalidParameter {
                name: "sigma_eps",
                reason: format!("must be finite and > 0, got {}", self.sigma_eps),
            });
        }
        Ok(())
    }
}

/// A global score together with how many components it spans.
///
/// With `gamma = 0` and more than one component, scores are only comparable
/// within a component.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreFit {
    pub scores: DVector<f64>,
    pub components: usize,
}

impl ScoreFit {
    pub fn is_connected(&self) -> bool {
        self.components <= 1
    }
}

/// HodgeRank global score: `(L + γI)^{-1} D0^T y`, or `L^† D0^T y` when `γ = 0`.
pub fn global_score(graph: &ComparisonGraph, y: &EdgeFlow, cfg: &RidgeConfig) -> Result<ScoreFit> {
    cfg.validate()?;
    let rhs = graph.coboundary_adjoint(y)?;
    let l = graph.laplacian();
    let scores = if cfg.gamma > 0.0 {
        let n = graph.n();
        spd_solve(&(l + DMatrix::identity(n, n) * cfg.gamma), &rhs)?
    } else {
        psd_pseudo_inverse(&l) * rhs
    };
    Ok(ScoreFit {
        scores,
        components: graph.component_count(),
    })
}

/// Splits `y` into its symmetric part `b` and skew part `y - b`.
///
/// A voter's `k`-th report of `(i, j)` pairs with their `k`-th report of
/// `(j, i)`; on each such pair `b = (y_ij + y_ji) / 2` in reported
/// orientation. Unpaired records and every record of a binary-mode graph are
/// purely skew.
pub fn split_bias(graph: &ComparisonGraph, y: &EdgeFlow) -> Result<(EdgeFlow, EdgeFlow)> {
    if y.len() != graph.record_count() {
        return Err(Error::DimensionMismatch {
            expected: graph.record_count(),
            actual: y.len(),
        });
    }
    let mut bias = EdgeFlow::zeros(y.len());
    if graph.mode() == ValueMode::General {
        for (a, b) in reversal_pairs(graph) {
            // canonical values: forward a, reversed b = -y_ji
            let sym = (y[a] - y[b]) / 2.0;
            bias[a] = sym;
            bias[b] = -sym;
        }
    }
    let skew = y - &bias;
    Ok((bias, skew))
}

/// `(forward, reversed)` record index pairs per voter and edge, matched in
/// arrival order.
fn reversal_pairs(graph: &ComparisonGraph) -> Vec<(usize, usize)> {
    use std::collections::HashMap;
    let mut forward: HashMap<(u32, usize), Vec<usize>> = HashMap::new();
    let mut backward: HashMap<(u32, usize), Vec<usize>> = HashMap::new();
    for (k, r) in graph.records().iter().enumerate() {
        let key = (r.voter.0, graph.record_edge(k));
        if r.reversed {
            backward.entry(key).or_default().push(k);
        } else {
            forward.entry(key).or_default().push(k);
        }
    }
    let mut pairs = Vec::new();
    for (key, fwd) in &forward {
        if let Some(bwd) = backward.get(key) {
            pairs.extend(fwd.iter().copied().zip(bwd.iter().copied()));
        }
    }
    pairs.sort_unstable();
    pairs
}

/// Splits a skew flow into the tie kernel `u` (zero sum on every edge) and
/// the per-edge mean `ybar`.
pub fn split_tie_kernel(graph: &ComparisonGraph, y_skew: &EdgeFlow) -> Result<(EdgeFlow, EdgeFlow)> {
    let means = graph.edge_means(y_skew)?;
    let ybar = graph.broadcast_edges(&means)?;
    let u = y_skew - &ybar;
    Ok((u, ybar))
}

/// The five orthogonal components of a flow plus the potentials.
#[derive(Debug, Clone, PartialEq)]
pub struct HodgeComponents {
    pub bias: EdgeFlow,
    pub tie_kernel: EdgeFlow,
    /// Mean-zero per connected component.
    pub score: DVector<f64>,
    pub curl_potential: DVector<f64>,
    pub gradient_flow: EdgeFlow,
    pub curl_flow: EdgeFlow,
    pub harmonic: EdgeFlow,
    pub components: usize,
}

/// Squared norms of the five components.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Energies {
    pub bias: f64,
    pub tie_kernel: f64,
    pub gradient: f64,
    pub curl: f64,
    pub harmonic: f64,
}

impl Energies {
    pub fn total(&self) -> f64 {
        self.bias + self.tie_kernel + self.gradient + self.curl + self.harmonic
    }
}

impl HodgeComponents {
    pub fn energies(&self) -> Energies {
        Energies {
            bias: self.bias.norm_squared(),
            tie_kernel: self.tie_kernel.norm_squared(),
            gradient: self.gradient_flow.norm_squared(),
            curl: self.curl_flow.norm_squared(),
            harmonic: self.harmonic.norm_squared(),
        }
    }

    /// Sum of all five flows.
    pub fn reconstruct(&self) -> EdgeFlow {
        let mut y = &self.bias + &self.tie_kernel;
        *y += &*self.gradient_flow;
        *y += &*self.curl_flow;
        *y += &*self.harmonic;
        y
    }

    pub fn parts(&self) -> [&EdgeFlow; 5] {
        [
            &self.bias,
            &self.tie_kernel,
            &self.gradient_flow,
            &self.curl_flow,
            &self.harmonic,
        ]
    }
}

pub fn decompose(graph: &ComparisonGraph, y: &EdgeFlow) -> Result<HodgeComponents> {
    let (bias, skew) = split_bias(graph, y)?;
    let (tie_kernel, ybar) = split_tie_kernel(graph, &skew)?;
    let fit = global_score(graph, &ybar, &RidgeConfig::min_norm())?;
    let x = fit.scores;

    // Past the tie kernel every flow is constant per edge; work edge-wise.
    let n_edges = graph.edges().len();
    let n_tri = graph.triangles().len();
    let means = graph.edge_means(&ybar)?;
    let residual = DVector::from_iterator(
        n_edges,
        graph
            .edges()
            .iter()
            .enumerate()
            .map(|(e, edge)| means[e] - (x[edge.i] - x[edge.j])),
    );

    // D1 D1^T = B W^{-1} B^T with B the signed triangle-edge incidence and
    // W = diag(m_e).
    let mut gram = DMatrix::zeros(n_tri, n_tri);
    let mut curl_rhs = DVector::zeros(n_tri);
    for e in 0..n_edges {
        let inv_m = 1.0 / graph.edge_multiplicity(e) as f64;
        let tris = graph.edge_triangles(e);
        for &(t, s) in tris {
            curl_rhs[t] += s * residual[e];
            for &(u, r) in tris {
                gram[(t, u)] += s * r * inv_m;
            }
        }
    }
    let z = psd_pseudo_inverse(&gram) * curl_rhs;
    let curl_edges = DVector::from_iterator(
        n_edges,
        (0..n_edges).map(|e| {
            graph.edge_triangles(e).iter().map(|&(t, s)| s * z[t]).sum::<f64>()
                / graph.edge_multiplicity(e) as f64
        }),
    );
    let harmonic_edges = &residual - &curl_edges;

    Ok(HodgeComponents {
        gradient_flow: graph.coboundary(&x)?,
        curl_flow: graph.broadcast_edges(&curl_edges)?,
        harmonic: graph.broadcast_edges(&harmonic_edges)?,
        bias,
        tie_kernel,
        score: x,
        curl_potential: z,
        components: fit.components,
    })
}

/// Projection onto the cyclic part of the flow space, `I - D0 L^† D0^T`.
#[derive(Debug, Clone)]
pub struct CyclicProjection<'g> {
    graph: &'g ComparisonGraph,
    laplacian_pinv: DMatrix<f64>,
}

impl<'g> CyclicProjection<'g> {
    pub fn new(graph: &'g ComparisonGraph) -> Self {
        Self {
            graph,
            laplacian_pinv: psd_pseudo_inverse(&graph.laplacian()),
        }
    }

    pub fn apply(&self, v: &EdgeFlow) -> Result<EdgeFlow> {
        let x = &self.laplacian_pinv * self.graph.coboundary_adjoint(v)?;
        Ok(v - &self.graph.coboundary(&x)?)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LassoFit {
    pub outliers: EdgeFlow,
    pub objective: f64,
    pub iterations: usize,
}

impl LassoFit {
    /// Record indices with a nonzero outlier estimate.
    pub fn support(&self) -> Vec<usize> {
        self.outliers
            .iter()
            .enumerate()
            .filter(|(_, v)| **v != 0.0)
            .map(|(k, _)| k)
            .collect()
    }
}

const LASSO_MAX_ITER: usize = 200_000;
const LASSO_TOL: f64 = 1e-10;

fn soft_threshold(v: f64, t: f64) -> f64 {
    if v > t {
        v - t
    } else if v < -t {
        v + t
    } else {
        0.0
    }
}

/// Sparse outliers of the cyclic part:
/// `argmin_g ||P y - P g||^2 + lambda ||g||_1` with `P` the cyclic projection.
///
/// Proximal gradient from `g = 0`. The smooth part has gradient
/// `2 P (g - y)` and Lipschitz constant `2 ||P||_op = 2`, so each step is
/// `g <- soft(g - P(g - y), lambda / 2)`.
pub fn outlier_lasso(graph: &ComparisonGraph, y: &EdgeFlow, lambda: f64) -> Result<LassoFit> {
    if lambda.is_nan() || lambda < 0.0 {
        return Err(Error::InvalidParameter {
            name: "lambda",
            reason: format!("must be >= 0, got {lambda}"),
        });
    }
    let proj = CyclicProjection::new(graph);
    let py = proj.apply(y)?;
    let objective = |g: &EdgeFlow, pg: &EdgeFlow| -> f64 {
        (&py - pg).norm_squared() + lambda * g.iter().map(|v| v.abs()).sum::<f64>()
    };

    let mut g = EdgeFlow::zeros(y.len());
    let mut pg = EdgeFlow::zeros(y.len());
    let mut current = objective(&g, &pg);
    let mut iterations = 0;
    while iterations < LASSO_MAX_ITER {
        iterations += 1;
        let step = &pg - &py;
        let next = EdgeFlow(DVector::from_iterator(
            g.len(),
            g.iter().zip(step.iter()).map(|(gv, sv)| soft_threshold(gv - sv, lambda / 2.0)),
        ));
        let p_next = proj.apply(&next)?;
        let value = objective(&next, &p_next);
        let decrease = current - value;
        g = next;
        pg = p_next;
        current = value;
        if decrease < LASSO_TOL {
            break;
        }
    }
    Ok(LassoFit {
        outliers: g,
        objective: current,
        iterations,
    })
}

/// Per-voter intercepts (position bias) jointly fitted with the global score.
#[derive(Debug, Clone, PartialEq)]
pub struct WorkerBias {
    /// Signed intercept per voter id, in reported orientation.
    pub intercepts: Vec<f64>,
    pub scores: DVector<f64>,
}

impl WorkerBias {
    /// Larger magnitude means a more careless voter.
    pub fn magnitudes(&self) -> Vec<f64> {
        self.intercepts.iter().map(|c| c.abs()).collect()
    }
}

/// Minimizes `||y - b - D0 x||^2` over scores `x` and one constant `b_a`
/// per voter, applied to every report of that voter in its reported
/// orientation. Voter ids must be dense: every id below the largest one
/// needs at least one record. Minimal-norm solution when not identifiable.
pub fn worker_bias_fit(graph: &ComparisonGraph, y: &EdgeFlow) -> Result<WorkerBias> {
    let m = graph.record_count();
    if y.len() != m {
        return Err(Error::DimensionMismatch { expected: m, actual: y.len() });
    }
    if m == 0 {
        return Err(Error::EmptyInput("no records"));
    }
    let voters = graph.records().iter().map(|r| r.voter.0).max().unwrap() as usize + 1;
    let mut seen = vec![false; voters];
    for r in graph.records() {
        seen[r.voter.0 as usize] = true;
    }
    if let Some(missing) = seen.iter().position(|s| !s) {
        return Err(Error::EmptyWorker(missing as u32));
    }

    let n = graph.n();
    let mut design = DMatrix::<f64>::zeros(m, voters + n);
    for (k, r) in graph.records().iter().enumerate() {
        design[(k, r.voter.0 as usize)] = if r.reversed { -1.0 } else { 1.0 };
        design[(k, voters + r.item_i)] = 1.0;
        design[(k, voters + r.item_j)] = -1.0;
    }
    // Minimal-norm solution through the normal equations; the Gram matrix
    // is PSD, and its eigensolver stays reliable on the exactly
    // rank-deficient designs where the SVD iteration does not.
    let theta = psd_pseudo_inverse(&(design.transpose() * &design)) * (design.transpose() * &y.0);
    Ok(WorkerBias {
        intercepts: theta.rows(0, voters).iter().copied().collect(),
        scores: theta.rows(voters, n).into_owned(),
    })
}
