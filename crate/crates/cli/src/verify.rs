//! Tree answers checked against the linear scan.

use std::collections::HashSet;

use bregman_kd::{oracle, KdTree, KdTreeConfig, PointSet, QueryParams, ResultSet};
use rayon::prelude::*;

use crate::error::Result;

/// Float slack allowed on each `(1 + ε)` rank comparison.
pub const EPS_SLACK: f64 = 1e-12;

/// How one tree answer compares with the oracle answer for the same query.
#[derive(Debug, Clone, PartialEq)]
pub struct QueryCheck {
    /// Indices and divergence bits identical, rank by rank.
    pub exact: bool,
    pub recall: f64,
    pub eps_violations: usize,
    /// First rank that broke the guarantee.
    pub first_violation: Option<usize>,
}

pub fn check_query(found: &ResultSet, truth: &ResultSet, epsilon: f64) -> QueryCheck {
    let f = found.neighbors();
    let t = truth.neighbors();
    let exact = f.len() == t.len()
        && f.iter()
            .zip(t)
            .all(|(a, b)| a.index == b.index && a.div.to_bits() == b.div.to_bits());
    let truth_set: HashSet<usize> = t.iter().map(|n| n.index).collect();
    let hits = f.iter().filter(|n| truth_set.contains(&n.index)).count();
    let recall = if t.is_empty() { 1.0 } else { hits as f64 / t.len() as f64 };
    let mut eps_violations = 0;
    let mut first_violation = None;
    for (j, exact) in t.iter().enumerate() {
        let ok = f
            .get(j)
            .is_some_and(|n| n.div <= (1.0 + epsilon) * exact.div + EPS_SLACK);
        if !ok {
            eps_violations += 1;
            first_violation.get_or_insert(j);
        }
    }
    if f.len() > t.len() {
        eps_violations += f.len() - t.len();
        first_violation.get_or_insert(t.len());
    }
    QueryCheck { exact, recall, eps_violations, first_violation }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VerifyReport {
    pub epsilon: f64,
    pub queries: usize,
    pub exact_matches: usize,
    pub mean_recall: f64,
    pub min_recall: f64,
    /// Queries with recall below one.
    pub error_freq: usize,
    pub eps_violations: usize,
    /// Index of the first query that failed, with its check.
    pub first_failure: Option<(usize, QueryCheck)>,
}

impl VerifyReport {
    pub fn from_results(found: &[ResultSet], truth: &[ResultSet], epsilon: f64) -> Self {
        assert_eq!(found.len(), truth.len());
        let checks: Vec<QueryCheck> = found
            .iter()
            .zip(truth)
            .map(|(f, t)| check_query(f, t, epsilon))
            .collect();
        let mut report = VerifyReport {
            epsilon,
            queries: checks.len(),
            exact_matches: 0,
            mean_recall: 0.0,
            min_recall: 1.0,
            error_freq: 0,
            eps_violations: 0,
            first_failure: None,
        };
        for (i, c) in checks.into_iter().enumerate() {
            report.exact_matches += c.exact as usize;
            report.mean_recall += c.recall;
            report.min_recall = report.min_recall.min(c.recall);
            report.error_freq += (c.recall < 1.0) as usize;
            report.eps_violations += c.eps_violations;
            let failed = if epsilon == 0.0 { !c.exact } else { c.eps_violations > 0 };
            if failed && report.first_failure.is_none() {
                report.first_failure = Some((i, c));
            }
        }
        if report.queries > 0 {
            report.mean_recall /= report.queries as f64;
        }
        report
    }

    /// Exact runs must match bit for bit; approximate runs must keep every
    /// rank within the `(1 + ε)` bound.
    pub fn passed(&self) -> bool {
        self.first_failure.is_none()
    }

    pub fn exit_code(&self) -> i32 {
        if self.passed() {
            0
        } else {
            1
        }
    }

    pub fn render(&self) -> String {
        let mut out = format!(
            "queries {}  eps {}  exact {}/{}  mean_recall {:.6}  min_recall {:.6}  error_freq {}  eps_violations {}\n",
            self.queries,
            self.epsilon,
            self.exact_matches,
            self.queries,
            self.mean_recall,
            self.min_recall,
            self.error_freq,
            self.eps_violations
        );
        match &self.first_failure {
            None => out.push_str("PASS\n"),
            Some((q, c)) => out.push_str(&format!(
                "FAIL at query {q}: exact={} recall={:.4} eps_violations={} first bad rank={:?}\n",
                c.exact, c.recall, c.eps_violations, c.first_violation
            )),
        }
        out
    }
}

/// Answers every query with `search` and grades it against the linear scan.
pub fn verify_with<S>(
    search: S,
    data: &PointSet,
    queries: &PointSet,
    params: &QueryParams,
) -> Result<VerifyReport>
where
    S: Fn(&[f64]) -> bregman_kd::Result<ResultSet> + Sync,
{
    let truth = oracle::linear_knn_batch(data, params, queries)?;
    let found = queries
        .rows()
        .collect::<Vec<_>>()
        .into_par_iter()
        .map(&search)
        .collect::<bregman_kd::Result<Vec<_>>>()?;
    Ok(VerifyReport::from_results(&found, &truth, params.epsilon))
}

pub fn verify(
    data: &PointSet,
    queries: &PointSet,
    params: &QueryParams,
    config: KdTreeConfig,
) -> Result<VerifyReport> {
    let tree = KdTree::build(data, config)?;
    verify_with(
        |q| bregman_kd::knn(&tree, params, q).map(|(r, _)| r),
        data,
        queries,
        params,
    )
}
