//! Timing tables: tree queries against the linear scan, per divergence and ε.

use std::fmt::Write as _;
use std::path::Path;
use std::time::Instant;

use bregman_kd::search::BatchResult;
use bregman_kd::{
    knn_batch, oracle, DecomposableDivergence, Direction, KdTree, KdTreeConfig, PointSet,
    QueryParams, ResultSet,
};

use crate::error::{CliError, Result};
use crate::verify::VerifyReport;

#[derive(Debug, Clone)]
pub struct BenchConfig {
    /// Divergence names as accepted by [`DecomposableDivergence::parse`].
    pub divergences: Vec<String>,
    pub direction: Direction,
    pub k: usize,
    pub epsilons: Vec<f64>,
    pub repeats: usize,
    pub tree: KdTreeConfig,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchRow {
    pub divergence: String,
    pub direction: Direction,
    pub epsilon: f64,
    pub build_time_s: f64,
    pub query_time_total_s: f64,
    pub linear_time_total_s: f64,
    pub speedup_vs_linear: f64,
    pub mean_recall: f64,
    pub min_recall: f64,
    pub error_freq: usize,
    pub eps_violations: usize,
    pub mean_split_nodes_visited: f64,
    pub mean_coord_div_evals: f64,
    /// `coord_div_evals / split_nodes_visited` over the whole batch.
    pub coord_div_evals_per_split_node: f64,
}

pub fn median(values: &mut [f64]) -> f64 {
    assert!(!values.is_empty());
    values.sort_by(f64::total_cmp);
    let mid = values.len() / 2;
    if values.len() % 2 == 1 {
        values[mid]
    } else {
        0.5 * (values[mid - 1] + values[mid])
    }
}

/// Runs `f` `repeats` times (at least once) and returns the median wall time
/// in seconds along with the last output.
pub fn time_median<T>(repeats: usize, mut f: impl FnMut() -> Result<T>) -> Result<(f64, T)> {
    let mut times = Vec::with_capacity(repeats.max(1));
    let mut last = None;
    for _ in 0..repeats.max(1) {
        let start = Instant::now();
        let out = f()?;
        times.push(start.elapsed().as_secs_f64());
        last = Some(out);
    }
    Ok((median(&mut times), last.unwrap()))
}

/// Median total time of answering every query with the tree.
pub fn time_tree_queries(
    tree: &KdTree,
    params: &QueryParams,
    queries: &PointSet,
    repeats: usize,
) -> Result<(f64, BatchResult)> {
    time_median(repeats, || Ok(knn_batch(tree, params, queries)?))
}

/// Median total time of answering every query by linear scan.
pub fn time_linear_queries(
    data: &PointSet,
    params: &QueryParams,
    queries: &PointSet,
    repeats: usize,
) -> Result<(f64, Vec<ResultSet>)> {
    time_median(repeats, || Ok(oracle::linear_knn_batch(data, params, queries)?))
}

pub fn run_bench(data: &PointSet, queries: &PointSet, cfg: &BenchConfig) -> Result<Vec<BenchRow>> {
    if cfg.epsilons.is_empty() || cfg.divergences.is_empty() {
        return Err(CliError::Usage("bench needs at least one divergence and one epsilon".into()));
    }
    let (build_time_s, tree) = time_median(cfg.repeats, || Ok(KdTree::build(data, cfg.tree)?))?;
    let mut rows = Vec::new();
    for name in &cfg.divergences {
        let div = DecomposableDivergence::parse(name, data.dim())?;
        let base = QueryParams::new(div, cfg.k).with_direction(cfg.direction);
        base.validate()?;
        let (linear_time_total_s, truth) = time_linear_queries(data, &base, queries, cfg.repeats)?;
        for &epsilon in &cfg.epsilons {
            let params = base.clone().with_epsilon(epsilon);
            params.validate()?;
            let (query_time_total_s, batch) = time_tree_queries(&tree, &params, queries, cfg.repeats)?;
            let graded = VerifyReport::from_results(&batch.results, &truth, epsilon);
            let nq = queries.len() as f64;
            let t = batch.total;
            rows.push(BenchRow {
                divergence: name.clone(),
                direction: cfg.direction,
                epsilon,
                build_time_s,
                query_time_total_s,
                linear_time_total_s,
                speedup_vs_linear: linear_time_total_s / query_time_total_s,
                mean_recall: graded.mean_recall,
                min_recall: graded.min_recall,
                error_freq: graded.error_freq,
                eps_violations: graded.eps_violations,
                mean_split_nodes_visited: t.split_nodes_visited as f64 / nq,
                mean_coord_div_evals: t.coord_div_evals as f64 / nq,
                coord_div_evals_per_split_node: t.coord_div_evals as f64
                    / t.split_nodes_visited.max(1) as f64,
            });
        }
    }
    Ok(rows)
}

pub fn render_table(rows: &[BenchRow]) -> String {
    let mut out = format!(
        "{:<14} {:<6} {:>6} {:>9} {:>10} {:>10} {:>8} {:>8} {:>8} {:>6} {:>6} {:>10} {:>11} {:>8}\n",
        "divergence", "dir", "eps", "build_s", "query_s", "linear_s", "speedup",
        "recall", "min_rec", "errs", "viol", "splits/q", "coord/q", "coord/sn"
    );
    for r in rows {
        let _ = writeln!(
            out,
            "{:<14} {:<6} {:>6} {:>9.4} {:>10.4} {:>10.4} {:>8.2} {:>8.4} {:>8.4} {:>6} {:>6} {:>10.1} {:>11.1} {:>8.3}",
            r.divergence,
            r.direction,
            r.epsilon,
            r.build_time_s,
            r.query_time_total_s,
            r.linear_time_total_s,
            r.speedup_vs_linear,
            r.mean_recall,
            r.min_recall,
            r.error_freq,
            r.eps_violations,
            r.mean_split_nodes_visited,
            r.mean_coord_div_evals,
            r.coord_div_evals_per_split_node
        );
    }
    out
}

const CSV_HEADER: [&str; 14] = [
    "divergence",
    "direction",
    "epsilon",
    "build_time_s",
    "query_time_total_s",
    "linear_time_total_s",
    "speedup_vs_linear",
    "mean_recall",
    "min_recall",
    "error_freq",
    "eps_violations",
    "mean_split_nodes_visited",
    "mean_coord_div_evals",
    "coord_div_evals_per_split_node",
];

pub fn write_csv(path: &Path, rows: &[BenchRow]) -> Result<()> {
    let to_io = |e: csv::Error| CliError::io(path, e.into());
    let mut wtr = csv::Writer::from_path(path).map_err(to_io)?;
    wtr.write_record(CSV_HEADER).map_err(to_io)?;
    for r in rows {
        wtr.write_record([
            r.divergence.clone(),
            r.direction.to_string(),
            r.epsilon.to_string(),
            r.build_time_s.to_string(),
            r.query_time_total_s.to_string(),
            r.linear_time_total_s.to_string(),
            r.speedup_vs_linear.to_string(),
            r.mean_recall.to_string(),
            r.min_recall.to_string(),
            r.error_freq.to_string(),
            r.eps_violations.to_string(),
            r.mean_split_nodes_visited.to_string(),
            r.mean_coord_div_evals.to_string(),
            r.coord_div_evals_per_split_node.to_string(),
        ])
        .map_err(to_io)?;
    }
    wtr.flush().map_err(|e| CliError::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use bregman_kd::datagen::{generate, GenSpec};

    #[test]
    fn medians() {
        assert_eq!(median(&mut [3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&mut [4.0, 1.0]), 2.5);
    }

    #[test]
    fn small_bench_rows() {
        let data = generate(&GenSpec::cube(2000, 4, 1)).unwrap();
        let queries = generate(&GenSpec::cube(50, 4, 2)).unwrap();
        let cfg = BenchConfig {
            divergences: vec!["sqeuc".into(), "gkl".into()],
            direction: Direction::Primal,
            k: 5,
            epsilons: vec![0.0, 1.0],
            repeats: 1,
            tree: KdTreeConfig::default(),
        };
        let rows = run_bench(&data, &queries, &cfg).unwrap();
        assert_eq!(rows.len(), 4);
        for r in &rows {
            assert_eq!(r.eps_violations, 0);
            if r.epsilon == 0.0 {
                assert_eq!(r.mean_recall, 1.0);
                assert_eq!(r.error_freq, 0);
            }
            assert!(r.coord_div_evals_per_split_node <= 2.0 + 4.0 / r.mean_split_nodes_visited);
        }
        assert_eq!(render_table(&rows).lines().count(), 5);
    }
}
