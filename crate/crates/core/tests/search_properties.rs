mod support;

use bregman_kd::datagen::{generate, GenSpec};
use bregman_kd::{
    box_projection_divergence, knn, knn_traced, linear_knn, DecomposableDivergence,
    Direction, KdTree, KdTreeConfig, PointSet, QueryParams, SplitRule,
};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use support::instances::{instance, Instance, DIVERGENCES};

fn params(inst: &Instance, eps: f64) -> QueryParams {
    QueryParams::new(inst.divergence.clone(), inst.k)
        .with_direction(inst.direction)
        .with_epsilon(eps)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(400))]

    #[test]
    fn exact_search_matches_linear_scan(inst in instance(250, 5)) {
        let tree = KdTree::build(&inst.points, inst.config).unwrap();
        let p = params(&inst, 0.0);
        for q in inst.queries.rows() {
            let (found, stats) = knn(&tree, &p, q).unwrap();
            let truth = linear_knn(&inst.points, &p, q).unwrap();
            prop_assert_eq!(found.indices(), truth.indices());
            let bits = |v: Vec<f64>| v.into_iter().map(f64::to_bits).collect::<Vec<_>>();
            prop_assert_eq!(bits(found.divs()), bits(truth.divs()));
            prop_assert!(stats.coord_div_evals <= 2 * stats.split_nodes_visited + q.len() as u64);
        }
    }

    #[test]
    fn approximate_ranks_stay_within_factor(inst in instance(250, 5), eps in prop::sample::select(vec![0.1, 0.5, 1.0, 5.0])) {
        let tree = KdTree::build(&inst.points, inst.config).unwrap();
        let p = params(&inst, eps);
        for q in inst.queries.rows() {
            let (found, stats) = knn(&tree, &p, q).unwrap();
            let truth = linear_knn(&inst.points, &p, q).unwrap();
            prop_assert_eq!(found.len(), truth.len());
            for (f, t) in found.neighbors().iter().zip(truth.neighbors()) {
                prop_assert!(f.div <= (1.0 + eps) * t.div + 1e-12, "{} > (1+{}) * {}", f.div, eps, t.div);
            }
            prop_assert!(stats.coord_div_evals <= 2 * stats.split_nodes_visited + q.len() as u64);
        }
    }

    #[test]
    fn maintained_box_divergence_matches_recomputation(inst in instance(250, 5), eps in prop::sample::select(vec![0.0, 1.0])) {
        let tree = KdTree::build(&inst.points, inst.config).unwrap();
        let p = params(&inst, eps);
        for q in inst.queries.rows() {
            let (_, stats, trace) = knn_traced(&tree, &p, q).unwrap();
            prop_assert_eq!(trace.mismatches, 0, "max error {}", trace.max_abs_err);
            prop_assert_eq!(trace.nodes_checked, stats.split_nodes_visited + stats.leaf_nodes_visited);
        }
    }

    #[test]
    fn pruned_subtrees_hold_no_better_point(inst in instance(250, 5), eps in prop::sample::select(vec![0.0, 0.5, 2.0])) {
        let tree = KdTree::build(&inst.points, inst.config).unwrap();
        let p = params(&inst, eps);
        for q in inst.queries.rows() {
            let (found, _, trace) = knn_traced(&tree, &p, q).unwrap();
            let kth = found.neighbors().last().unwrap().div;
            let exact: Vec<usize> = linear_knn(&inst.points, &p, q).unwrap().indices();
            for &root in &trace.pruned {
                for i in tree.subtree_indices(root) {
                    let div = p.divergence.eval_directed(q, inst.points.row(i), p.direction);
                    prop_assert!((1.0 + eps) * div > kth, "pruned point {} has {} vs k-th {}", i, div, kth);
                    if eps == 0.0 {
                        prop_assert!(!exact.contains(&i));
                    }
                }
            }
        }
    }

    #[test]
    fn box_projection_is_a_lower_bound(inst in instance(60, 5), t in prop::collection::vec(0.0f64..1.0, 5)) {
        let tree = KdTree::build(&inst.points, inst.config).unwrap();
        let root = tree.root_box().clone();
        for q in inst.queries.rows() {
            for dir in [Direction::Primal, Direction::Dual] {
                let bd = box_projection_divergence(&inst.divergence, q, &root, dir).unwrap();
                prop_assert!(bd >= 0.0);
                prop_assert_eq!(bd == 0.0, root.contains(q));
                // Any point of the box is at least as far as the projection.
                let x: Vec<f64> = (0..q.len())
                    .map(|j| root.lo[j] + t[j] * (root.hi[j] - root.lo[j]))
                    .collect();
                let full = inst.divergence.eval_directed(q, &x, dir);
                prop_assert!(bd <= full * (1.0 + 1e-12) + 1e-15, "{} > {}", bd, full);
            }
        }
    }
}

#[test]
fn duplicates_on_cell_boundaries_resolve_ties_like_the_scan() {
    // Each grid point appears three times at scattered indices, so tied
    // neighbours often sit on the boundary of a pruned cell.
    let mut rows: Vec<[f64; 2]> = (0..3)
        .flat_map(|_| (1..=8).flat_map(|i| (1..=8).map(move |j| [0.25 * i as f64, 0.25 * j as f64])))
        .collect();
    rows.shuffle(&mut ChaCha8Rng::seed_from_u64(17));
    let points = PointSet::from_rows(&rows).unwrap();
    let queries: Vec<[f64; 2]> = (1..=16)
        .flat_map(|i| (1..=16).map(move |j| [0.125 * i as f64, 0.125 * j as f64]))
        .collect();
    for split_rule in [SplitRule::SlidingMidpoint, SplitRule::MedianOfCoordinates] {
        for bucket_size in [1, 2] {
            let tree = KdTree::build(&points, KdTreeConfig { bucket_size, split_rule }).unwrap();
            for name in DIVERGENCES {
                let div = DecomposableDivergence::parse(name, 2).unwrap();
                for direction in [Direction::Primal, Direction::Dual] {
                    for k in [1, 5, 12] {
                        let p = QueryParams::new(div.clone(), k).with_direction(direction);
                        for q in &queries {
                            let found = knn(&tree, &p, q).unwrap().0;
                            let truth = linear_knn(&points, &p, q).unwrap();
                            assert_eq!(
                                found.indices(),
                                truth.indices(),
                                "{name} {direction:?} k={k} {split_rule:?}/{bucket_size} q={q:?}"
                            );
                        }
                    }
                }
            }
        }
    }
}

#[test]
fn work_shrinks_as_epsilon_grows() {
    // Per query the visit count may wobble; over a batch it must not grow.
    let points = generate(&GenSpec::cube(20_000, 8, 4)).unwrap();
    let queries = generate(&GenSpec::cube(300, 8, 5)).unwrap();
    let tree = KdTree::build(&points, Default::default()).unwrap();
    for name in DIVERGENCES {
        let div = DecomposableDivergence::parse(name, 8).unwrap();
        let mut last = u64::MAX;
        for eps in [0.0, 0.1, 0.5, 1.0, 2.0, 5.0] {
            let p = QueryParams::new(div.clone(), 10).with_epsilon(eps);
            let visited: u64 = queries
                .rows()
                .map(|q| knn(&tree, &p, q).unwrap().1.split_nodes_visited)
                .sum();
            assert!(visited <= last, "{name}: eps {eps} visited {visited} > {last}");
            last = visited;
        }
    }
}

#[test]
fn per_query_work_is_monotone_in_epsilon() {
    let points = generate(&GenSpec::simplex(5_000, 6, 8)).unwrap();
    let queries = generate(&GenSpec::simplex(200, 6, 9)).unwrap();
    let tree = KdTree::build(&points, Default::default()).unwrap();
    let mut inversions = 0;
    let mut comparisons = 0;
    for name in ["gkl", "is", "sqeuc"] {
        let div = DecomposableDivergence::parse(name, 6).unwrap();
        for q in queries.rows() {
            let mut last = u64::MAX;
            for eps in [0.0, 0.1, 0.5, 1.0, 2.0, 5.0] {
                let p = QueryParams::new(div.clone(), 10).with_epsilon(eps);
                let v = knn(&tree, &p, q).unwrap().1.split_nodes_visited;
                comparisons += 1;
                if v > last {
                    inversions += 1;
                }
                last = v;
            }
        }
    }
    eprintln!("per-query inversions: {inversions} of {comparisons}");
    assert_eq!(inversions, 0);
}

#[test]
fn root_initialization_is_the_only_linear_cost_at_high_dimension() {
    let d = 1000;
    let points = generate(&GenSpec::simplex(2_000, d, 12)).unwrap();
    let queries = generate(&GenSpec::simplex(10, d, 13)).unwrap();
    let tree = KdTree::build(&points, Default::default()).unwrap();
    for name in DIVERGENCES {
        let p = QueryParams::new(DecomposableDivergence::parse(name, d).unwrap(), 10)
            .with_epsilon(1.0);
        for q in queries.rows() {
            let stats = knn(&tree, &p, q).unwrap().1;
            assert!(stats.coord_div_evals <= 2 * stats.split_nodes_visited + d as u64);
        }
    }
}
