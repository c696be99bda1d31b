//! Random small instances for property tests. Half of them sit on a coarse
//! grid so duplicate points and exact divergence ties are common.

use bregman_kd::{DecomposableDivergence, Direction, KdTreeConfig, PointSet, SplitRule};
use proptest::prelude::*;

pub const DIVERGENCES: [&str; 5] = ["sqeuc", "gkl", "is", "bhat", "hybrid:gkl:sqeuc:0.9"];

#[derive(Debug, Clone)]
pub struct Instance {
    pub points: PointSet,
    pub queries: PointSet,
    pub divergence: DecomposableDivergence,
    pub direction: Direction,
    pub k: usize,
    pub config: KdTreeConfig,
}

fn coords(len: usize, grid: bool) -> BoxedStrategy<Vec<f64>> {
    if grid {
        prop::collection::vec((0u8..8).prop_map(|g| 0.25 + 0.25 * g as f64), len).boxed()
    } else {
        prop::collection::vec(0.01f64..10.0, len).boxed()
    }
}

pub fn config() -> impl Strategy<Value = KdTreeConfig> {
    (1usize..10, prop::bool::ANY).prop_map(|(bucket, median)| {
        KdTreeConfig::default()
            .with_bucket_size(bucket)
            .with_split_rule(if median {
                SplitRule::MedianOfCoordinates
            } else {
                SplitRule::SlidingMidpoint
            })
    })
}

pub fn point_set(max_n: usize, max_d: usize) -> impl Strategy<Value = PointSet> {
    (1..=max_n, 1..=max_d, prop::bool::ANY).prop_flat_map(|(n, d, grid)| {
        coords(n * d, grid).prop_map(move |data| PointSet::new(data, d).unwrap())
    })
}

pub fn instance(max_n: usize, max_d: usize) -> impl Strategy<Value = Instance> {
    (1..=max_n, 1..=max_d, prop::bool::ANY, 1usize..=8).prop_flat_map(move |(n, d, grid, nq)| {
        (
            coords(n * d, grid),
            coords(nq * d, grid),
            0..DIVERGENCES.len(),
            prop::bool::ANY,
            1usize..=12,
            config(),
        )
            .prop_map(move |(data, qs, div, dual, k, config)| Instance {
                points: PointSet::new(data, d).unwrap(),
                queries: PointSet::new(qs, d).unwrap(),
                divergence: DecomposableDivergence::parse(DIVERGENCES[div], d).unwrap(),
                direction: if dual { Direction::Dual } else { Direction::Primal },
                k,
                config,
            })
    })
}
