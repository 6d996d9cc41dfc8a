mod common;

use common::{arb_graph, build_graph, random_stream, track_matches_oracle};
use hodgerank::glm::replication_rng;
use hodgerank::hodge::decompose;
use hodgerank::topology::{filtration, track, PersistenceTracker, Simplex};
use proptest::prelude::*;

#[test]
fn tracker_matches_oracle_on_every_prefix() {
    for n in 1..=6 {
        for seed in 0..400 {
            let stream = random_stream(&mut replication_rng(seed, n as u64), n, 30);
            if let Err(e) = track_matches_oracle(&stream) {
                panic!("n={n} seed={seed}: {e}\n{stream:?}");
            }
        }
    }
}

#[test]
fn complete_complex_is_contractible() {
    for n in 1..=7 {
        let mut stream: Vec<Simplex> = (0..n).map(Simplex::Vertex).collect();
        for i in 0..n {
            for j in (i + 1)..n {
                stream.push(Simplex::Edge(i, j));
            }
        }
        for i in 0..n {
            for j in (i + 1)..n {
                for k in (j + 1)..n {
                    stream.push(Simplex::Triangle([i, j, k]));
                }
            }
        }
        let tl = track(stream.into_iter().map(|s| (0, s))).unwrap();
        let last = tl.last().unwrap();
        assert_eq!((last.beta0, last.beta1), (1, 0), "n={n}");
    }
}

proptest! {
    #[test]
    fn betti_deltas_are_legal((n, mode, recs) in arb_graph(8, 40)) {
        let g = build_graph(n, mode, &recs);
        let tl = track(filtration(&g)).unwrap();
        let mut prev = (0i64, 0i64);
        for e in &tl.events {
            let now = (e.beta0 as i64, e.beta1 as i64);
            let delta = (now.0 - prev.0, now.1 - prev.1);
            let ok = match e.kind {
                hodgerank::topology::SimplexKind::Vertex => delta == (1, 0),
                hodgerank::topology::SimplexKind::Edge => delta == (-1, 0) || delta == (0, 1),
                hodgerank::topology::SimplexKind::Triangle => delta == (0, -1) || delta == (0, 0),
            };
            prop_assert!(ok, "{:?} {:?}", e, delta);
            prop_assert!(e.beta0 >= 1);
            prev = now;
        }
    }

    #[test]
    fn beta0_follows_graph_components((n, mode, recs) in arb_graph(8, 40)) {
        let mut g = hodgerank::graph::ComparisonGraph::with_mode(n, mode);
        let mut tracker = PersistenceTracker::with_vertices(n);
        for &(v, i, j, c) in &recs {
            let ins = g.add_comparison(hodgerank::graph::ComparisonRecord::new(hodgerank::graph::VoterId(v), i, j, c)).unwrap();
            if ins.new_edge {
                let e = g.edges()[ins.edge];
                tracker.push(ins.seq, Simplex::Edge(e.i, e.j)).unwrap();
                for t in ins.new_triangles.clone() {
                    tracker.push(ins.seq, Simplex::Triangle(g.triangles()[t].vertices)).unwrap();
                }
            }
            prop_assert_eq!(tracker.beta0(), g.component_count());
        }
    }

    #[test]
    fn loop_free_means_no_harmonic_flow((n, mode, recs) in arb_graph(8, 40)) {
        let g = build_graph(n, mode, &recs);
        let tl = track(filtration(&g)).unwrap();
        if tl.last().unwrap().beta1 == 0 {
            prop_assert!(decompose(&g, &g.flow()).unwrap().harmonic.norm() < 1e-8);
        }
    }
}
