//! Dense reference implementations and random inputs shared by the
//! integration tests.
#![allow(dead_code)]

use hodgerank::graph::{ComparisonGraph, ComparisonRecord, EdgeFlow, ValueMode, VoterId};
use hodgerank::hodge::{decompose, global_score, RidgeConfig};
use hodgerank::topology::{betti_oracle, filtration, track};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::Rng;

pub type RawRecord = (u32, usize, usize, f64);

pub fn build_graph(n: usize, mode: ValueMode, recs: &[RawRecord]) -> ComparisonGraph {
    let mut g = ComparisonGraph::with_mode(n, mode);
    for &(v, i, j, c) in recs {
        g.add_comparison(ComparisonRecord::new(VoterId(v), i, j, c)).unwrap();
    }
    g
}

/// `n` in `2..=max_n`, up to `max_records` records from 4 voters, binary or
/// real choices. Reversed reports are common so the bias part is exercised.
pub fn arb_graph(max_n: usize, max_records: usize) -> impl Strategy<Value = (usize, ValueMode, Vec<RawRecord>)> {
    (2..=max_n, any::<bool>()).prop_flat_map(move |(n, binary)| {
        let choice = if binary {
            prop_oneof![Just(1.0), Just(-1.0)].boxed()
        } else {
            (-2.0..2.0f64).boxed()
        };
        let rec = (0..4u32, 0..n, 0..n, choice)
            .prop_filter("self comparison", |&(_, i, j, _)| i != j);
        let mode = if binary { ValueMode::Binary } else { ValueMode::General };
        (Just(n), Just(mode), prop::collection::vec(rec, 0..=max_records))
    })
}

pub fn random_records<R: Rng>(rng: &mut R, n: usize, count: usize, binary: bool) -> Vec<RawRecord> {
    (0..count)
        .map(|_| {
            let i = rng.random_range(0..n);
            let mut j = rng.random_range(0..n - 1);
            if j >= i {
                j += 1;
            }
            let c = if binary {
                if rng.random::<bool>() { 1.0 } else { -1.0 }
            } else {
                rng.random_range(-2.0..2.0)
            };
            (rng.random_range(0..4), i, j, c)
        })
        .collect()
}

/// Explicit `m x n` coboundary: row `k` is `e_i - e_j` of record `k`.
pub fn dense_d0(g: &ComparisonGraph) -> DMatrix<f64> {
    let mut d = DMatrix::zeros(g.record_count(), g.n());
    for (k, r) in g.records().iter().enumerate() {
        d[(k, r.item_i)] = 1.0;
        d[(k, r.item_j)] = -1.0;
    }
    d
}

/// Explicit `T x m` curl: triangle `{i<j<k}` reads the mean flow of
/// `(i,j)`, `(j,k)` and `-(i,k)`.
pub fn dense_d1(g: &ComparisonGraph) -> DMatrix<f64> {
    let mut d = DMatrix::zeros(g.triangles().len(), g.record_count());
    for (t, tri) in g.triangles().iter().enumerate() {
        let [a, b, c] = tri.vertices;
        for (u, v, sign) in [(a, b, 1.0), (b, c, 1.0), (a, c, -1.0)] {
            let members: Vec<usize> = g
                .records()
                .iter()
                .enumerate()
                .filter(|(_, r)| (r.item_i, r.item_j) == (u, v))
                .map(|(k, _)| k)
                .collect();
            for &k in &members {
                d[(t, k)] += sign / members.len() as f64;
            }
        }
    }
    d
}

/// Components by breadth-first search over the records.
pub fn components(g: &ComparisonGraph) -> Vec<Vec<usize>> {
    let n = g.n();
    let mut adj = vec![Vec::new(); n];
    for r in g.records() {
        adj[r.item_i].push(r.item_j);
        adj[r.item_j].push(r.item_i);
    }
    let mut seen = vec![false; n];
    let mut out = Vec::new();
    for s in 0..n {
        if seen[s] {
            continue;
        }
        seen[s] = true;
        let mut comp = vec![s];
        let mut k = 0;
        while k < comp.len() {
            for &t in &adj[comp[k]] {
                if !seen[t] {
                    seen[t] = true;
                    comp.push(t);
                }
            }
            k += 1;
        }
        out.push(comp);
    }
    out
}

/// Minimal-norm least squares `argmin |D0 x - y|` with the smallest `|x|`.
///
/// `L + sum_c 1_c 1_c^T / |c|` is invertible and fixes the per-component
/// constants at zero, so an LU solve gives the exact minimal-norm solution.
pub fn min_norm_scores(g: &ComparisonGraph, y: &EdgeFlow) -> DVector<f64> {
    let d0 = dense_d0(g);
    let mut m = d0.transpose() * &d0;
    for comp in components(g) {
        let w = 1.0 / comp.len() as f64;
        for &a in &comp {
            for &b in &comp {
                m[(a, b)] += w;
            }
        }
    }
    m.lu().solve(&(d0.transpose() * &**y)).unwrap()
}

/// Orthogonal projector onto the column space of `a`, from a twice
/// orthogonalized Gram-Schmidt basis.
pub fn range_projector(a: &DMatrix<f64>) -> DMatrix<f64> {
    let rows = a.nrows();
    let scale = a.amax().max(1.0);
    let mut basis: Vec<DVector<f64>> = Vec::new();
    for c in 0..a.ncols() {
        let mut v = a.column(c).into_owned();
        for _ in 0..2 {
            for q in &basis {
                let proj = q.dot(&v);
                v -= q * proj;
            }
        }
        let norm = v.norm();
        if norm > 1e-9 * scale {
            basis.push(v / norm);
        }
    }
    let mut p = DMatrix::zeros(rows, rows);
    for q in &basis {
        p += q * q.transpose();
    }
    p
}

/// Generic KL between Gaussian posteriors after and before one observation,
/// from LU inverses and determinants.
pub fn gaussian_kl_oracle(
    laplacian: &DMatrix<f64>,
    rhs: &DVector<f64>,
    cfg: &RidgeConfig,
    i: usize,
    j: usize,
    y: f64,
) -> f64 {
    let n = rhs.len();
    let p0 = laplacian + DMatrix::identity(n, n) * cfg.gamma;
    let mut d = DVector::zeros(n);
    d[i] = 1.0;
    d[j] = -1.0;
    let p1 = &p0 + &d * d.transpose();
    let s0 = p0.clone().try_inverse().unwrap();
    let s1 = p1.clone().try_inverse().unwrap();
    let mu0 = &s0 * rhs;
    let mu1 = &s1 * (rhs + &d * y);
    let var = cfg.sigma_eps * cfg.sigma_eps;
    let diff = &mu1 - &mu0;
    // KL(N(mu1, var S1) || N(mu0, var S0))
    let trace = (&p0 * &s1).trace();
    let quad = (diff.transpose() * &p0 * &diff)[(0, 0)] / var;
    let log_ratio = (p1.determinant() / p0.determinant()).ln();
    0.5 * (trace + quad - n as f64 + log_ratio)
}

/// Checks every decomposition invariant on one graph; returns the violations.
pub fn decomposition_violations(g: &ComparisonGraph, y: &EdgeFlow) -> Vec<String> {
    let mut bad = Vec::new();
    let mut check = |ok: bool, what: String| {
        if !ok {
            bad.push(what);
        }
    };
    let parts = decompose(g, y).unwrap();
    let p = parts.parts();
    let names = ["bias", "tie_kernel", "gradient", "curl", "harmonic"];
    let scale = y.norm_squared().max(1.0);

    for a in 0..5 {
        for b in (a + 1)..5 {
            let ip = p[a].dot(&**p[b]);
            check(ip.abs() < 1e-9 * scale, format!("<{}, {}> = {ip:e}", names[a], names[b]));
        }
    }
    let e = parts.energies();
    let total = y.norm_squared();
    check(
        (e.total() - total).abs() <= 1e-9 * total.max(1e-300) + 1e-12,
        format!("energy {} vs {}", e.total(), total),
    );
    let recon = (&*parts.reconstruct() - &**y).amax();
    check(recon < 1e-9 * scale.sqrt(), format!("reconstruction error {recon:e}"));

    // chain property on the recovered score
    let chain = g.curl(&g.coboundary(&parts.score).unwrap()).unwrap();
    check(chain.iter().all(|v| v.abs() < 1e-12 * (1.0 + parts.score.amax())), format!("chain {chain}"));

    // minimal-norm least squares from the explicit coboundary
    let d0 = dense_d0(g);
    let x_oracle = min_norm_scores(g, y);
    let fit = global_score(g, y, &RidgeConfig::min_norm()).unwrap();
    let gap = (&fit.scores - &x_oracle).amax();
    check(gap < 1e-9 * (1.0 + x_oracle.amax()), format!("min-norm score gap {gap:e}"));
    let gap = (&parts.score - &x_oracle).amax();
    check(gap < 1e-9 * (1.0 + x_oracle.amax()), format!("decompose score gap {gap:e}"));

    // gradient and curl parts are the orthogonal projections onto the ranges
    let grad = range_projector(&d0) * &**y;
    let gap = (&grad - &*parts.gradient_flow).amax();
    check(gap < 1e-9 * scale.sqrt(), format!("gradient projection gap {gap:e}"));
    let d1 = dense_d1(g);
    if d1.nrows() > 0 {
        let curl = range_projector(&d1.transpose()) * &**y;
        let gap = (&curl - &*parts.curl_flow).amax();
        check(gap < 1e-9 * scale.sqrt(), format!("curl projection gap {gap:e}"));
        let hd1 = (&d1 * &*parts.harmonic).amax();
        check(hd1 < 1e-9 * scale.sqrt(), format!("D1 w = {hd1:e}"));
    }
    let hd0 = (d0.transpose() * &*parts.harmonic).amax();
    check(hd0 < 1e-9 * scale.sqrt(), format!("D0^T w = {hd0:e}"));

    // loop-free complexes carry no harmonic flow
    let tl = track(filtration(g)).unwrap();
    let (_, beta1) = tl.betti_at(u64::MAX);
    if beta1 == 0 {
        let w = parts.harmonic.norm();
        check(w < 1e-8, format!("beta1 = 0 but |w| = {w:e}"));
    }
    bad
}

/// A face-respecting stream on `n` vertices: random edges, each followed by
/// a random subset of the triangles it makes available, in random order.
pub fn random_stream<R: Rng>(rng: &mut R, n: usize, max_len: usize) -> Vec<hodgerank::topology::Simplex> {
    use hodgerank::topology::Simplex;
    let mut out: Vec<Simplex> = (0..n).map(Simplex::Vertex).collect();
    let mut edges: Vec<(usize, usize)> = Vec::new();
    let mut pending: Vec<[usize; 3]> = Vec::new();
    let mut pool: Vec<(usize, usize)> = (0..n).flat_map(|i| ((i + 1)..n).map(move |j| (i, j))).collect();
    while out.len() < max_len && (!pool.is_empty() || !pending.is_empty()) {
        if !pending.is_empty() && (pool.is_empty() || rng.random::<bool>()) {
            let t = pending.swap_remove(rng.random_range(0..pending.len()));
            out.push(Simplex::Triangle(t));
            continue;
        }
        let (a, b) = pool.swap_remove(rng.random_range(0..pool.len()));
        let has = |u: usize, v: usize| edges.contains(&(u.min(v), u.max(v)));
        for c in 0..n {
            if c != a && c != b && has(a, c) && has(b, c) {
                let mut t = [a, b, c];
                t.sort_unstable();
                pending.push(t);
            }
        }
        edges.push((a, b));
        out.push(Simplex::Edge(a, b));
    }
    out
}

/// Compares the tracker against the rank oracle on every prefix.
pub fn track_matches_oracle(stream: &[hodgerank::topology::Simplex]) -> Result<(), String> {
    use hodgerank::topology::{PersistenceTracker, Simplex};
    let mut tracker = PersistenceTracker::new();
    let mut verts = 0;
    let mut edges = Vec::new();
    let mut tris = Vec::new();
    for (k, s) in stream.iter().enumerate() {
        let ev = tracker.push(k as u64, *s).map_err(|e| e.to_string())?;
        match *s {
            Simplex::Vertex(_) => verts += 1,
            Simplex::Edge(a, b) => edges.push((a, b)),
            Simplex::Triangle(t) => tris.push(t),
        }
        let want = betti_oracle(verts, &edges, &tris);
        if (ev.beta0, ev.beta1) != want {
            return Err(format!("prefix {k}: tracker {:?}, oracle {want:?}", (ev.beta0, ev.beta1)));
        }
    }
    Ok(())
}
