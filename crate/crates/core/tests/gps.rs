use bipgps_core::gps::has_distinct_weights;
use bipgps_core::graph::synth_graph;
use bipgps_core::rng::from_seed;
use bipgps_core::{exact_gps, product_gps, AssignmentDesign, BipartiteGraph, GpsTable, GraphSpec};
use proptest::prelude::*;

fn row_strategy() -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
    (1usize..8).prop_flat_map(|m| {
        (
            prop::collection::vec(0.05f64..1.0, m),
            prop::collection::vec(0.05f64..0.95, m),
        )
    })
}

proptest! {
    #[test]
    fn enumeration_is_a_distribution((w, p) in row_strategy()) {
        let m = w.len();
        let g = BipartiteGraph::from_pairs(m, vec![w.iter().copied().enumerate().collect()]).unwrap();
        let design = AssignmentDesign::BernoulliHeterogeneous { p: p.clone() };
        let d = exact_gps(&g, &design, 0, 20).unwrap();
        prop_assert!((d.total_mass() - 1.0).abs() < 1e-12);
        prop_assert!(d.probs().iter().all(|&q| q >= 0.0));
        let expected: f64 = w.iter().zip(&p).map(|(a, b)| a * b).sum();
        prop_assert!((d.mean() - expected).abs() < 1e-9);
        let levels = d.levels();
        prop_assert!(levels.windows(2).all(|x| x[0] < x[1]));
    }

    #[test]
    fn product_form_matches_enumeration((w, p) in row_strategy(), bits in prop::collection::vec(any::<bool>(), 8)) {
        let m = w.len();
        let g = BipartiteGraph::from_pairs(m, vec![w.iter().copied().enumerate().collect()]).unwrap();
        prop_assume!(has_distinct_weights(&g, 0));
        let z = &bits[..m];
        let e: f64 = w.iter().zip(z).filter(|(_, &t)| t).map(|(a, _)| a).sum();
        let design = AssignmentDesign::BernoulliHeterogeneous { p: p.clone() };
        let d = exact_gps(&g, &design, 0, 20).unwrap();
        // Distinct weights can still give equal subset sums, which merge
        // into one atom; the atom holds at least this pattern's mass.
        let direct = product_gps(&p, z);
        let atom = d.prob_at(e).unwrap();
        prop_assert!(atom + 1e-12 >= direct);
    }
}

#[test]
fn degree_two_half_weights() {
    let g = BipartiteGraph::from_pairs(2, vec![vec![(0, 0.5), (1, 0.5)]]).unwrap();
    let d = exact_gps(&g, &AssignmentDesign::Bernoulli { p: 0.5 }, 0, 20).unwrap();
    assert_eq!(d.levels(), vec![0.0, 0.5, 1.0]);
    assert_eq!(d.probs(), &[0.25, 0.5, 0.25]);
}

/// Union-find count of connected components, independent of the library's.
fn components_oracle(g: &BipartiteGraph) -> usize {
    let n = g.n_outcome() + g.m_diversion();
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(p: &mut [usize], x: usize) -> usize {
        let mut r = x;
        while p[r] != r {
            r = p[r];
        }
        p[x] = r;
        r
    }
    for i in 0..g.n_outcome() {
        for e in g.row(i) {
            let (a, b) = (
                find(&mut parent, i),
                find(&mut parent, g.n_outcome() + e.diversion),
            );
            parent[a] = b;
        }
    }
    let used: Vec<usize> = (0..g.n_outcome())
        .map(|i| find(&mut parent, i))
        .collect::<std::collections::BTreeSet<_>>()
        .into_iter()
        .collect();
    used.len()
}

#[test]
fn uncut_blocks_form_separate_components() {
    let spec = GraphSpec::blocks(1000, 100, 1, 10, 10, 0.0, 0);
    let g = synth_graph(&spec, &mut from_seed(4)).unwrap();
    assert_eq!(components_oracle(&g), 10);
    assert_eq!(g.components().1, 10);
}

#[test]
fn exact_table_rows_all_sum_to_one() {
    let g = synth_graph(
        &GraphSpec::uniform_degree(300, 40, 1, 10, 0),
        &mut from_seed(5),
    )
    .unwrap();
    let t = GpsTable::exact(&g, &AssignmentDesign::Bernoulli { p: 0.3 }, 20).unwrap();
    for d in t.distributions() {
        assert!((d.total_mass() - 1.0).abs() < 1e-12);
    }
}
