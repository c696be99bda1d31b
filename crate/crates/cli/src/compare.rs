//! How differently two divergences rank the same data.

use std::collections::HashSet;

use bregman_kd::{knn_batch, KdTree, KdTreeConfig, PointSet, QueryParams, ResultSet};

use crate::error::Result;

#[derive(Debug, Clone, PartialEq)]
pub struct CompareReport {
    pub queries: usize,
    pub k: usize,
    /// Queries whose two neighbour sets differ (order ignored).
    pub differing: usize,
    /// Queries whose two neighbour sets share no index.
    pub disjoint: usize,
    /// Mean number of ranks holding the same index in both lists.
    pub mean_position_matches: f64,
}

impl CompareReport {
    pub fn from_results(a: &[ResultSet], b: &[ResultSet], k: usize) -> Self {
        assert_eq!(a.len(), b.len());
        let mut report = CompareReport {
            queries: a.len(),
            k,
            differing: 0,
            disjoint: 0,
            mean_position_matches: 0.0,
        };
        let mut matches = 0usize;
        for (ra, rb) in a.iter().zip(b) {
            let ia = ra.indices();
            let ib = rb.indices();
            let sa: HashSet<usize> = ia.iter().copied().collect();
            let sb: HashSet<usize> = ib.iter().copied().collect();
            if sa != sb {
                report.differing += 1;
            }
            if sa.is_disjoint(&sb) {
                report.disjoint += 1;
            }
            matches += ia.iter().zip(&ib).filter(|(x, y)| x == y).count();
        }
        if report.queries > 0 {
            report.mean_position_matches = matches as f64 / report.queries as f64;
        }
        report
    }

    pub fn differing_fraction(&self) -> f64 {
        self.differing as f64 / self.queries.max(1) as f64
    }

    pub fn disjoint_fraction(&self) -> f64 {
        self.disjoint as f64 / self.queries.max(1) as f64
    }

    pub fn render(&self, name_a: &str, name_b: &str) -> String {
        format!(
            "{name_a} vs {name_b}, k = {}, {} queries\n\
             differing sets      {:>8} ({:.2}%)\n\
             no common neighbour {:>8} ({:.2}%)\n\
             mean rank matches   {:>8.4}\n",
            self.k,
            self.queries,
            self.differing,
            100.0 * self.differing_fraction(),
            self.disjoint,
            100.0 * self.disjoint_fraction(),
            self.mean_position_matches
        )
    }
}

/// Exact k-NN under both parameter sets from one shared tree.
pub fn compare_metrics(
    data: &PointSet,
    queries: &PointSet,
    a: &QueryParams,
    b: &QueryParams,
    config: KdTreeConfig,
) -> Result<CompareReport> {
    let a = a.clone().with_epsilon(0.0);
    let b = b.clone().with_epsilon(0.0);
    bregman_kd::oracle::check_points(data, &a)?;
    bregman_kd::oracle::check_points(data, &b)?;
    let tree = KdTree::build(data, config)?;
    let ra = knn_batch(&tree, &a, queries)?.results;
    let rb = knn_batch(&tree, &b, queries)?.results;
    Ok(CompareReport::from_results(&ra, &rb, a.k.min(b.k)))
}
