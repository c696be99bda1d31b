//! Bregman k-nearest-neighbour queries over a [`KdTree`].
//!
//! The traversal is depth first, entering the child on the query's side of
//! each cut first. The far child is visited only when the divergence from the
//! query to the far child's box, scaled by `1 + ε`, does not exceed the current
//! k-th best divergence. That box divergence is the divergence to the
//! coordinate-wise clamp of the query onto the box, and since a child box
//! differs from its parent along one dimension only, it is maintained with at
//! most two single-coordinate evaluations per split node.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::ops::AddAssign;

use rayon::prelude::*;

use crate::divergence::{CoordinateRule, DecomposableDivergence, Direction, DOMAIN_MARGIN};
use crate::error::{Error, Result};
use crate::kdtree::{BoundingBox, KdTree, Node};
use crate::points::PointSet;

#[derive(Debug, Clone, PartialEq)]
pub struct QueryParams {
    pub k: usize,
    /// Approximation factor; 0 requests exact neighbours.
    pub epsilon: f64,
    pub direction: Direction,
    pub divergence: DecomposableDivergence,
}

impl QueryParams {
    /// Exact primal search for `k` neighbours.
    pub fn new(divergence: DecomposableDivergence, k: usize) -> Self {
        Self {
            k,
            epsilon: 0.0,
            direction: Direction::Primal,
            divergence,
        }
    }

    pub fn with_epsilon(mut self, epsilon: f64) -> Self {
        self.epsilon = epsilon;
        self
    }

    pub fn with_direction(mut self, direction: Direction) -> Self {
        self.direction = direction;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::Config("k must be at least 1".into()));
        }
        if !(self.epsilon >= 0.0 && self.epsilon.is_finite()) {
            return Err(Error::Config(format!(
                "epsilon must be finite and non-negative, got {}",
                self.epsilon
            )));
        }
        Ok(())
    }

    /// Checks a query point against the divergence's domain.
    pub(crate) fn check_query(&self, q: &[f64]) -> Result<()> {
        self.validate()?;
        self.divergence.validate_domain(q)
    }
}

/// A dataset index paired with its divergence to the query.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Neighbor {
    pub index: usize,
    pub div: f64,
}

impl Neighbor {
    /// Ascending divergence, ties broken by ascending index.
    #[inline]
    pub fn rank_cmp(&self, other: &Self) -> Ordering {
        self.div
            .total_cmp(&other.div)
            .then(self.index.cmp(&other.index))
    }
}

#[derive(Debug, Clone, Copy)]
struct HeapEntry(Neighbor);

impl PartialEq for HeapEntry {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for HeapEntry {}

impl PartialOrd for HeapEntry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for HeapEntry {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.rank_cmp(&other.0)
    }
}

/// Keeps the `k` best neighbours seen so far under [`Neighbor::rank_cmp`].
#[derive(Debug, Clone)]
pub struct BoundedMaxHeap {
    capacity: usize,
    heap: BinaryHeap<HeapEntry>,
}

impl BoundedMaxHeap {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "heap capacity must be positive");
        Self {
            capacity,
            heap: BinaryHeap::with_capacity(capacity + 1),
        }
    }

    pub fn len(&self) -> usize {
        self.heap.len()
    }

    pub fn is_empty(&self) -> bool {
        self.heap.is_empty()
    }

    pub fn is_full(&self) -> bool {
        self.heap.len() >= self.capacity
    }

    /// The current pruning radius: `+∞` until `k` candidates are held.
    #[inline]
    pub fn max_divergence(&self) -> f64 {
        if self.is_full() {
            self.heap.peek().map_or(f64::INFINITY, |e| e.0.div)
        } else {
            f64::INFINITY
        }
    }

    /// Offers a candidate; returns whether it was kept.
    #[inline]
    pub fn offer(&mut self, candidate: Neighbor) -> bool {
        if !self.is_full() {
            self.heap.push(HeapEntry(candidate));
            return true;
        }
        let mut top = self.heap.peek_mut().expect("full heap is non-empty");
        if candidate.rank_cmp(&top.0) == Ordering::Less {
            *top = HeapEntry(candidate);
            true
        } else {
            false
        }
    }

    pub fn into_result_set(self) -> ResultSet {
        ResultSet {
            neighbors: self.heap.into_sorted_vec().into_iter().map(|e| e.0).collect(),
        }
    }
}

/// Neighbours sorted by ascending divergence, ties by ascending index.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ResultSet {
    neighbors: Vec<Neighbor>,
}

impl ResultSet {
    /// Sorts arbitrary neighbours into result order.
    pub fn from_unsorted(mut neighbors: Vec<Neighbor>) -> Self {
        neighbors.sort_by(Neighbor::rank_cmp);
        Self { neighbors }
    }

    pub fn neighbors(&self) -> &[Neighbor] {
        &self.neighbors
    }

    pub fn len(&self) -> usize {
        self.neighbors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.neighbors.is_empty()
    }

    pub fn indices(&self) -> Vec<usize> {
        self.neighbors.iter().map(|n| n.index).collect()
    }

    pub fn divs(&self) -> Vec<f64> {
        self.neighbors.iter().map(|n| n.div).collect()
    }
}

/// Exact event counts for one query (or sums over a batch).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct QueryStats {
    pub split_nodes_visited: u64,
    pub leaf_nodes_visited: u64,
    /// Single-coordinate divergence evaluations spent on box projections.
    pub coord_div_evals: u64,
    /// Full divergence evaluations against data points.
    pub full_div_evals: u64,
}

impl AddAssign for QueryStats {
    fn add_assign(&mut self, rhs: Self) {
        self.split_nodes_visited += rhs.split_nodes_visited;
        self.leaf_nodes_visited += rhs.leaf_nodes_visited;
        self.coord_div_evals += rhs.coord_div_evals;
        self.full_div_evals += rhs.full_div_evals;
    }
}

/// Divergence from `q` to the nearest point of `cell`: the sum over coordinates
/// of the divergence between `q_i` and `q_i` clamped into the cell (and into
/// the divergence's domain interior). Zero iff `q` lies inside the cell.
pub fn box_projection_divergence(
    div: &DecomposableDivergence,
    q: &[f64],
    cell: &BoundingBox,
    direction: Direction,
) -> Result<f64> {
    if q.len() != div.dim() || cell.dim() != div.dim() {
        return Err(Error::Shape(format!(
            "query has {} coordinates, box {}, divergence {}",
            q.len(),
            cell.dim(),
            div.dim()
        )));
    }
    Ok(box_projection_unchecked(div, q, cell, direction))
}

fn box_projection_unchecked(
    div: &DecomposableDivergence,
    q: &[f64],
    cell: &BoundingBox,
    direction: Direction,
) -> f64 {
    let mut acc = 0.0;
    for (i, &qi) in q.iter().enumerate() {
        let target = qi.clamp(cell.lo[i], cell.hi[i]);
        if target != qi {
            let domain = div.rule(i).domain();
            let target = if domain.contains_with_margin(target, DOMAIN_MARGIN) {
                target
            } else {
                domain.clamp_interior(target)
            };
            acc += div.eval_coord_directed(i, qi, target, direction);
        }
    }
    acc
}

/// Box divergence of the far child after a cut.
///
/// `q_c` is the query coordinate along the cut dimension and `old_bound` the
/// parent cell's extent on the query's side (its lower bound when
/// `q_c < cut_val`, its upper bound otherwise). The parent's contribution along
/// the cut dimension is swapped for the divergence to the cutting plane.
/// Returns the new value and the number of coordinate evaluations (1 or 2).
#[inline]
pub fn update_box_div(
    box_div: f64,
    rule: &CoordinateRule,
    q_c: f64,
    cut_val: f64,
    old_bound: f64,
    direction: Direction,
) -> (f64, u64) {
    let eval = |target: f64| match direction {
        Direction::Primal => rule.eval(q_c, target),
        Direction::Dual => rule.eval(target, q_c),
    };
    let mut value = box_div + eval(cut_val);
    let outside = if q_c < cut_val {
        q_c < old_bound
    } else {
        q_c > old_bound
    };
    let mut evals = 1;
    if outside {
        value -= eval(old_bound);
        evals += 1;
    }
    (value.max(0.0), evals)
}

/// Diagnostics collected by [`knn_traced`].
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TraceReport {
    /// Nodes at which the maintained box divergence was recomputed.
    pub nodes_checked: u64,
    /// Nodes where maintained and recomputed values disagree beyond
    /// `max(1e-9 * |recomputed|, 1e-12)`.
    pub mismatches: u64,
    pub max_abs_err: f64,
    /// Roots of subtrees skipped by the pruning test.
    pub pruned: Vec<usize>,
}

/// Relative tolerance of the incremental-vs-recomputed box divergence check.
pub const INCREMENTAL_REL_TOL: f64 = 1e-9;
/// Absolute tolerance of the incremental-vs-recomputed box divergence check.
pub const INCREMENTAL_ABS_TOL: f64 = 1e-12;

/// Relative rounding allowance of the pruning test. The maintained box
/// divergence can exceed the divergence of a point on the cell boundary by a
/// few ulps; without this margin such a point, tied with the current k-th
/// neighbour but of lower index, would be pruned.
pub const PRUNE_ROUNDING: f64 = 1e-12;

struct Trace {
    cell: BoundingBox,
    report: TraceReport,
}

struct Search<'a> {
    tree: &'a KdTree,
    div: &'a DecomposableDivergence,
    q: &'a [f64],
    direction: Direction,
    scale: f64,
    heap: BoundedMaxHeap,
    stats: QueryStats,
    trace: Option<Trace>,
}

impl Search<'_> {
    fn visit(&mut self, id: usize, box_div: f64) {
        if let Some(trace) = self.trace.as_mut() {
            let scratch = box_projection_unchecked(self.div, self.q, &trace.cell, self.direction);
            let err = (scratch - box_div).abs();
            trace.report.nodes_checked += 1;
            trace.report.max_abs_err = trace.report.max_abs_err.max(err);
            if err > (INCREMENTAL_REL_TOL * scratch.abs()).max(INCREMENTAL_ABS_TOL) {
                trace.report.mismatches += 1;
            }
        }

        match *self.tree.node(id) {
            Node::Leaf(leaf) => {
                self.stats.leaf_nodes_visited += 1;
                self.stats.full_div_evals += leaf.len() as u64;
                let heap = &mut self.heap;
                let tree = self.tree;
                // Sums past the current k-th divergence could not enter the heap.
                self.div.scan_block(
                    self.q,
                    tree.stored_block(leaf.start, leaf.end),
                    self.direction,
                    true,
                    heap.max_divergence(),
                    |row, div| {
                        heap.offer(Neighbor {
                            index: tree.stored_index(leaf.start + row),
                            div,
                        });
                        heap.max_divergence()
                    },
                );
            }
            Node::Split(s) => {
                self.stats.split_nodes_visited += 1;
                let q_c = self.q[s.cut_dim];
                let (near, far, old_bound) = if q_c < s.cut_val {
                    (s.child_lower, s.child_higher, s.lower_bound)
                } else {
                    (s.child_higher, s.child_lower, s.upper_bound)
                };
                let near_is_lower = near == s.child_lower;

                self.enter(s.cut_dim, s.cut_val, near_is_lower, |this| this.visit(near, box_div));

                let (far_div, evals) = update_box_div(
                    box_div,
                    self.div.rule(s.cut_dim),
                    q_c,
                    s.cut_val,
                    old_bound,
                    self.direction,
                );
                self.stats.coord_div_evals += evals;
                if far_div * (1.0 - PRUNE_ROUNDING) * self.scale <= self.heap.max_divergence() {
                    self.enter(s.cut_dim, s.cut_val, !near_is_lower, |this| {
                        this.visit(far, far_div)
                    });
                } else if let Some(trace) = self.trace.as_mut() {
                    trace.report.pruned.push(far);
                }
            }
        }
    }

    /// Runs `f` with the traced cell narrowed to one side of a cut.
    #[inline]
    fn enter(&mut self, dim: usize, cut: f64, lower: bool, f: impl FnOnce(&mut Self)) {
        let Some(trace) = self.trace.as_mut() else {
            f(self);
            return;
        };
        let bound = if lower {
            &mut trace.cell.hi[dim]
        } else {
            &mut trace.cell.lo[dim]
        };
        let saved = std::mem::replace(bound, cut);
        f(self);
        let trace = self.trace.as_mut().expect("trace present");
        if lower {
            trace.cell.hi[dim] = saved;
        } else {
            trace.cell.lo[dim] = saved;
        }
    }
}

/// Checks that a tree's data lies inside the divergence's domain box. The root
/// box bounds every data point and the domain is a box, so its two corners
/// suffice.
fn check_pairing(tree: &KdTree, params: &QueryParams, q: &[f64]) -> Result<()> {
    if tree.dim() != params.divergence.dim() || q.len() != tree.dim() {
        return Err(Error::Shape(format!(
            "tree dimension {}, divergence dimension {}, query dimension {}",
            tree.dim(),
            params.divergence.dim(),
            q.len()
        )));
    }
    let root = tree.root_box();
    for (dim, rule) in params.divergence.rules().iter().enumerate() {
        let domain = rule.domain();
        for v in [root.lo[dim], root.hi[dim]] {
            if !domain.contains_with_margin(v, DOMAIN_MARGIN) {
                return Err(Error::Domain {
                    dim,
                    value: v,
                    lo: domain.lo,
                    hi: domain.hi,
                });
            }
        }
    }
    Ok(())
}

fn run(tree: &KdTree, params: &QueryParams, q: &[f64], traced: bool) -> Result<(ResultSet, QueryStats, TraceReport)> {
    params.check_query(q)?;
    check_pairing(tree, params, q)?;

    let div = &params.divergence;
    let root_div = box_projection_unchecked(div, q, tree.root_box(), params.direction);
    let mut search = Search {
        tree,
        div,
        q,
        direction: params.direction,
        scale: 1.0 + params.epsilon,
        heap: BoundedMaxHeap::new(params.k),
        stats: QueryStats {
            coord_div_evals: q.len() as u64,
            ..QueryStats::default()
        },
        trace: traced.then(|| Trace {
            cell: tree.root_box().clone(),
            report: TraceReport::default(),
        }),
    };
    search.visit(KdTree::ROOT, root_div);
    let report = search.trace.map(|t| t.report).unwrap_or_default();
    Ok((search.heap.into_result_set(), search.stats, report))
}

/// The `k` nearest neighbours of `q` (exact when `epsilon == 0`, otherwise
/// each rank is within a factor `1 + epsilon` of the exact one).
pub fn knn(tree: &KdTree, params: &QueryParams, q: &[f64]) -> Result<(ResultSet, QueryStats)> {
    run(tree, params, q, false).map(|(r, s, _)| (r, s))
}

/// Like [`knn`], but recomputes the box divergence from scratch at every
/// visited node and records pruned subtrees.
pub fn knn_traced(
    tree: &KdTree,
    params: &QueryParams,
    q: &[f64],
) -> Result<(ResultSet, QueryStats, TraceReport)> {
    run(tree, params, q, true)
}

/// Results of a batch of queries.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct BatchResult {
    pub results: Vec<ResultSet>,
    pub per_query: Vec<QueryStats>,
    pub total: QueryStats,
}

/// Runs [`knn`] for every row of `queries` on the current rayon pool.
pub fn knn_batch(tree: &KdTree, params: &QueryParams, queries: &PointSet) -> Result<BatchResult> {
    let outcomes: Vec<(ResultSet, QueryStats)> = queries
        .rows()
        .collect::<Vec<_>>()
        .into_par_iter()
        .map(|q| knn(tree, params, q))
        .collect::<Result<_>>()?;
    let mut batch = BatchResult::default();
    for (result, stats) in outcomes {
        batch.total += stats;
        batch.results.push(result);
        batch.per_query.push(stats);
    }
    Ok(batch)
}
