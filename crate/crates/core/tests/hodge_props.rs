mod common;

use common::{arb_graph, build_graph, decomposition_violations, dense_d0, min_norm_scores};
use hodgerank::graph::EdgeFlow;
use hodgerank::hodge::{decompose, global_score, RidgeConfig};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn decomposition_invariants((n, mode, recs) in arb_graph(8, 40)) {
        let g = build_graph(n, mode, &recs);
        let bad = decomposition_violations(&g, &g.flow());
        prop_assert!(bad.is_empty(), "{bad:?}");
    }

    #[test]
    fn adding_a_gradient_shifts_the_score(
        (n, mode, recs) in arb_graph(8, 40),
        vs in prop::collection::vec(-3.0..3.0f64, 8),
    ) {
        let g = build_graph(n, mode, &recs);
        let y = g.flow();
        let v = DVector::from_column_slice(&vs[..n]);
        let shifted: EdgeFlow = &y + &g.coboundary(&v).unwrap();
        let a = decompose(&g, &y).unwrap().score;
        let b = decompose(&g, &shifted).unwrap().score;
        // v centered on each connected component
        let mut centered = v.clone();
        for comp in g.connected_components() {
            let mean = comp.iter().map(|&k| v[k]).sum::<f64>() / comp.len() as f64;
            for &k in &comp {
                centered[k] -= mean;
            }
        }
        prop_assert!((&b - &a - &centered).amax() < 1e-9);
    }

    #[test]
    fn ridge_matches_dense_normal_equations((n, mode, recs) in arb_graph(8, 40), gamma in 1e-3..10.0f64) {
        let g = build_graph(n, mode, &recs);
        let y = g.flow();
        let d0 = dense_d0(&g);
        let lhs = d0.transpose() * &d0 + DMatrix::identity(n, n) * gamma;
        let oracle = lhs.try_inverse().unwrap() * d0.transpose() * &*y;
        let fit = global_score(&g, &y, &RidgeConfig::ridge(gamma)).unwrap();
        prop_assert!((&fit.scores - &oracle).amax() < 1e-9 * (1.0 + oracle.amax()));
    }

    #[test]
    fn ridge_tends_to_min_norm((n, mode, recs) in arb_graph(6, 30)) {
        let g = build_graph(n, mode, &recs);
        let y = g.flow();
        let oracle = min_norm_scores(&g, &y);
        let fit = global_score(&g, &y, &RidgeConfig::ridge(1e-7)).unwrap();
        prop_assert!((&fit.scores - &oracle).amax() < 1e-5 * (1.0 + oracle.amax()));
    }
}

/// Repeated identical rows made the SVD-based solve return garbage; the fit
/// must satisfy the normal equations on such designs.
#[test]
fn worker_bias_on_heavily_repeated_edge() {
    use hodgerank::graph::ValueMode;
    use hodgerank::hodge::worker_bias_fit;
    let mut recs: Vec<_> = (0..26).map(|k| (k % 2, 1, 0, 0.0)).collect();
    recs.push((0, 1, 0, -1.7273079723650087));
    recs.push((1, 0, 1, 0.5));
    let g = build_graph(2, ValueMode::General, &recs);
    let y = g.flow();
    let fit = worker_bias_fit(&g, &y).unwrap();
    let voters = fit.intercepts.len();
    let design = DMatrix::from_fn(g.record_count(), voters + 2, |k, c| {
        let r = g.records()[k];
        if c < voters {
            if c == r.voter.0 as usize { if r.reversed { -1.0 } else { 1.0 } } else { 0.0 }
        } else if c - voters == r.item_i {
            1.0
        } else if c - voters == r.item_j {
            -1.0
        } else {
            0.0
        }
    });
    let theta = DVector::from_iterator(voters + 2, fit.intercepts.iter().copied().chain(fit.scores.iter().copied()));
    let normal = design.transpose() * (&design * &theta - &*y);
    assert!(normal.amax() < 1e-10, "{normal}");
}
