//! Brute-force linear scan, the reference answer for every tree query.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::points::PointSet;
use crate::search::{BoundedMaxHeap, Neighbor, QueryParams, QueryStats, ResultSet};

/// The `k` nearest neighbours of `q` by scanning every point, under the same
/// ordering and tie rule as [`crate::search::knn`]. Ignores `params.epsilon`.
pub fn linear_knn(points: &PointSet, params: &QueryParams, q: &[f64]) -> Result<ResultSet> {
    linear_knn_with_stats(points, params, q).map(|(r, _)| r)
}

pub fn linear_knn_with_stats(
    points: &PointSet,
    params: &QueryParams,
    q: &[f64],
) -> Result<(ResultSet, QueryStats)> {
    check_points(points, params)?;
    params.check_query(q)?;
    Ok(scan(points, params, q))
}

/// Validates every data point against the divergence domain.
pub fn check_points(points: &PointSet, params: &QueryParams) -> Result<()> {
    if points.dim() != params.divergence.dim() {
        return Err(Error::Shape(format!(
            "points have dimension {}, divergence {}",
            points.dim(),
            params.divergence.dim()
        )));
    }
    points
        .rows()
        .try_for_each(|row| params.divergence.validate_domain(row))
}

/// Linear scan for every query row on the current rayon pool; points are
/// validated once.
pub fn linear_knn_batch(
    points: &PointSet,
    params: &QueryParams,
    queries: &PointSet,
) -> Result<Vec<ResultSet>> {
    check_points(points, params)?;
    queries
        .rows()
        .collect::<Vec<_>>()
        .into_par_iter()
        .map(|q| {
            params.check_query(q)?;
            Ok(scan(points, params, q).0)
        })
        .collect()
}

fn scan(points: &PointSet, params: &QueryParams, q: &[f64]) -> (ResultSet, QueryStats) {
    let mut heap = BoundedMaxHeap::new(params.k);
    params.divergence.scan_block(
        q,
        points.as_slice(),
        params.direction,
        false,
        f64::INFINITY,
        |index, div| {
            heap.offer(Neighbor { index, div });
            f64::INFINITY
        },
    );
    let stats = QueryStats {
        full_div_evals: points.len() as u64,
        ..QueryStats::default()
    };
    (heap.into_result_set(), stats)
}
