mod common;

use common::{bfs_oracle, random_matrix, rng};
use gad_core::data::{
    generate_synthetic, generate_synthetic_detailed, load_dataset, make_full_split, make_semi_split,
    save_dataset, SemiSplitParams, SplitSpec, SyntheticSpec,
};
use gad_core::{Graph, Label, Matrix};
use proptest::prelude::*;

fn edge_list() -> impl Strategy<Value = (usize, Vec<(usize, usize)>)> {
    (1usize..30).prop_flat_map(|n| (Just(n), prop::collection::vec((0..n, 0..n), 0..60)))
}

fn labels_strategy(n: usize) -> impl Strategy<Value = Vec<Label>> {
    prop::collection::vec(
        prop_oneof![Just(Label::Normal), Just(Label::Anomaly), Just(Label::Unknown)],
        n,
    )
}

fn assert_disjoint_and_covering(split: &SplitSpec, g: &Graph) {
    split.validate(g).unwrap();
    let labeled = g.labels().iter().filter(|l| l.is_known()).count();
    let total = split.train_anomalies.len()
        + split.train_normals.len()
        + split.val_anomalies.len()
        + split.val_normals.len()
        + split.test.len();
    assert_eq!(total, labeled);
    assert!(split.test.iter().all(|&v| g.labels()[v].is_known()));
}

#[test]
fn semi_split_is_exact_and_disjoint_over_1000_seeds() {
    let g = generate_synthetic(&SyntheticSpec::sparse(2000, 0)).unwrap();
    for seed in 0..1000 {
        let s = make_semi_split(&g, SemiSplitParams::default(), seed).unwrap();
        assert_eq!((s.train_anomalies.len(), s.train_normals.len()), (20, 80));
        assert_eq!((s.val_anomalies.len(), s.val_normals.len()), (20, 80));
        assert_disjoint_and_covering(&s, &g);
    }
}

#[test]
fn full_split_is_disjoint_over_1000_seeds() {
    let g = generate_synthetic(&SyntheticSpec::sparse(400, 1)).unwrap();
    for seed in 0..1000 {
        let s = make_full_split(&g, 0.4, seed).unwrap();
        assert_eq!(s.train_anomalies.len(), 8);
        assert_disjoint_and_covering(&s, &g);
    }
}

#[test]
fn synthetic_counts_and_symmetry() {
    for seed in 0..5 {
        let spec = SyntheticSpec::sparse(1000, seed);
        let sg = generate_synthetic_detailed(&spec).unwrap();
        let g = &sg.graph;
        let anomalies = g.nodes_with_label(Label::Anomaly);
        assert_eq!(anomalies.len(), 50);
        assert_eq!(g.nodes_with_label(Label::Normal).len(), 950);
        assert_eq!(sg.structural.len() + sg.contextual.len(), 50);
        assert_eq!(sg.structural.len() % spec.clique_size, 0);
        for u in 0..g.num_nodes() {
            for &v in g.neighbors(u) {
                assert!(g.neighbors(v).contains(&u));
            }
        }
        let mean_degree = 2.0 * g.num_edges() as f64 / 1000.0;
        assert!((3.0..6.0).contains(&mean_degree), "degree {mean_degree}");
    }
}

#[test]
fn null_signal_has_no_structure_or_shift() {
    let sg = generate_synthetic_detailed(&SyntheticSpec::sparse(500, 4).null_signal()).unwrap();
    assert!(sg.structural.is_empty());
    assert_eq!(sg.contextual.len(), 25);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn rebuild_from_edge_dump_is_identity((n, edges) in edge_list(), seed in any::<u64>()) {
        let x = random_matrix(&mut rng(seed), n, 2);
        let g = Graph::build(&edges, x.clone(), vec![Label::Unknown; n]).unwrap();
        let dump: Vec<(usize, usize)> = g.edges().collect();
        let again = Graph::build(&dump, x, vec![Label::Unknown; n]).unwrap();
        prop_assert_eq!(again, g);
    }

    #[test]
    fn bfs_matches_oracle_and_sources_shrink_distance(
        (n, edges) in edge_list(),
        picks in prop::collection::vec(any::<prop::sample::Index>(), 1..6),
    ) {
        let g = Graph::build(&edges, Matrix::zeros(n, 1), vec![Label::Unknown; n]).unwrap();
        let all: Vec<usize> = picks.iter().map(|p| p.index(n)).collect();
        let big = g.multi_source_bfs_hops(&all).unwrap();
        prop_assert_eq!(&big, &bfs_oracle(&g, &all));
        let small = g.multi_source_bfs_hops(&all[..1]).unwrap();
        for (b, s) in big.iter().zip(&small) {
            if let Some(s) = s {
                prop_assert!(b.is_some_and(|b| b <= *s));
            }
        }
    }

    #[test]
    fn normalized_adjacency_is_symmetric((n, edges) in edge_list()) {
        let g = Graph::build(&edges, Matrix::zeros(n, 1), vec![Label::Unknown; n]).unwrap();
        let a = g.normalize_adjacency();
        for i in 0..n {
            for (j, w) in a.row(i) {
                prop_assert_eq!(a.weight(j, i), Some(w));
            }
        }
    }

    #[test]
    fn save_then_load_is_identity(
        (n, edges) in edge_list(),
        seed in any::<u64>(),
        labels in labels_strategy(30),
    ) {
        let x = random_matrix(&mut rng(seed), n, 3);
        let g = Graph::build(&edges, x, labels[..n].to_vec()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let (e, f, l) = (dir.path().join("e.txt"), dir.path().join("f.csv"), dir.path().join("l.txt"));
        save_dataset(&g, &e, &f, &l).unwrap();
        prop_assert_eq!(load_dataset(&e, &f, &l).unwrap(), g);
    }
}
