//! Kd-tree construction.
//!
//! The tree is divergence-agnostic: it only partitions space with
//! axis-aligned cuts, and any decomposable divergence can be used to query it
//! afterwards. Points live only in leaves. Nodes are stored in a flat pre-order
//! array and leaf points are copied into a contiguous leaf-ordered buffer.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::points::PointSet;

/// Axis-aligned box `[lo_0, hi_0] x ... x [lo_{d-1}, hi_{d-1}]` (closed).
#[derive(Debug, Clone, PartialEq)]
pub struct BoundingBox {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl BoundingBox {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        if lo.len() != hi.len() || lo.is_empty() {
            return Err(Error::Shape(format!(
                "box corners have dimensions {} and {}",
                lo.len(),
                hi.len()
            )));
        }
        for (i, (&l, &h)) in lo.iter().zip(&hi).enumerate() {
            if !l.is_finite() || !h.is_finite() || l > h {
                return Err(Error::Shape(format!("invalid box extent [{l}, {h}] along {i}")));
            }
        }
        Ok(Self { lo, hi })
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn contains(&self, p: &[f64]) -> bool {
        p.iter()
            .zip(self.lo.iter().zip(&self.hi))
            .all(|(&v, (&l, &h))| l <= v && v <= h)
    }

    fn of_indices(points: &PointSet, indices: &[usize]) -> Self {
        let d = points.dim();
        let mut lo = vec![f64::INFINITY; d];
        let mut hi = vec![f64::NEG_INFINITY; d];
        for &i in indices {
            for (j, &v) in points.row(i).iter().enumerate() {
                lo[j] = lo[j].min(v);
                hi[j] = hi[j].max(v);
            }
        }
        Self { lo, hi }
    }
}

/// Smallest axis-aligned box containing every point.
pub fn bounding_box(points: &PointSet) -> Result<BoundingBox> {
    if points.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let all: Vec<usize> = (0..points.len()).collect();
    Ok(BoundingBox::of_indices(points, &all))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SplitRule {
    /// Cut the longest box side at its midpoint, sliding the cut onto the
    /// data when one side would otherwise be empty.
    #[default]
    SlidingMidpoint,
    /// Cut the dimension of largest point spread at the median coordinate.
    MedianOfCoordinates,
}

impl FromStr for SplitRule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "midpoint" | "sliding-midpoint" => Ok(SplitRule::SlidingMidpoint),
            "median" => Ok(SplitRule::MedianOfCoordinates),
            other => Err(Error::Config(format!(
                "unknown split rule '{other}' (expected sliding-midpoint or median)"
            ))),
        }
    }
}

impl fmt::Display for SplitRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SplitRule::SlidingMidpoint => "sliding-midpoint",
            SplitRule::MedianOfCoordinates => "median",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct KdTreeConfig {
    pub bucket_size: usize,
    pub split_rule: SplitRule,
}

impl Default for KdTreeConfig {
    fn default() -> Self {
        Self {
            bucket_size: 8,
            split_rule: SplitRule::SlidingMidpoint,
        }
    }
}

impl KdTreeConfig {
    pub fn with_bucket_size(mut self, bucket_size: usize) -> Self {
        self.bucket_size = bucket_size;
        self
    }

    pub fn with_split_rule(mut self, split_rule: SplitRule) -> Self {
        self.split_rule = split_rule;
        self
    }
}

/// An internal node. `lower_bound..=upper_bound` is the node box's extent
/// along `cut_dim`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitNode {
    pub cut_dim: usize,
    pub cut_val: f64,
    pub lower_bound: f64,
    pub upper_bound: f64,
    pub child_lower: usize,
    pub child_higher: usize,
}

/// A bucket of points; `start..end` indexes the tree's leaf-ordered storage.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LeafNode {
    pub start: usize,
    pub end: usize,
}

impl LeafNode {
    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.start == self.end
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Node {
    Split(SplitNode),
    Leaf(LeafNode),
}

/// A cutting plane chosen for a node.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitPlane {
    pub cut_dim: usize,
    pub cut_val: f64,
}

/// Chooses the cutting plane for the points `indices` inside `cell`.
///
/// Points with a coordinate equal to `cut_val` belong to the higher side. When
/// every point shares the same coordinate along the chosen dimension the plane
/// sits on that coordinate and the caller splits by position instead.
pub fn split_plane(
    points: &PointSet,
    indices: &[usize],
    cell: &BoundingBox,
    rule: SplitRule,
) -> SplitPlane {
    let spread = |dim: usize| -> (f64, f64) {
        indices
            .iter()
            .map(|&i| points.row(i)[dim])
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
                (lo.min(v), hi.max(v))
            })
    };
    match rule {
        SplitRule::SlidingMidpoint => {
            let max_len = (0..cell.dim())
                .map(|j| cell.hi[j] - cell.lo[j])
                .fold(f64::NEG_INFINITY, f64::max);
            // Among the longest sides prefer the one the points spread over most.
            let mut best: Option<(usize, f64, f64, f64)> = None;
            for j in (0..cell.dim()).filter(|&j| cell.hi[j] - cell.lo[j] == max_len) {
                let (lo, hi) = spread(j);
                if best.is_none_or(|(_, _, _, s)| hi - lo > s) {
                    best = Some((j, lo, hi, hi - lo));
                }
            }
            let (cut_dim, min, max, _) = best.expect("box has at least one dimension");
            let mid = 0.5 * (cell.lo[cut_dim] + cell.hi[cut_dim]);
            let cut_val = if max < mid {
                max
            } else if min >= mid {
                // Cutting at `min` would leave the lower side empty under the
                // ties-go-higher rule, so move to the next coordinate up.
                next_above(points, indices, cut_dim, min).unwrap_or(min)
            } else {
                mid
            };
            SplitPlane { cut_dim, cut_val }
        }
        SplitRule::MedianOfCoordinates => {
            let mut best = (0, f64::NEG_INFINITY);
            for j in 0..points.dim() {
                let (lo, hi) = spread(j);
                if hi - lo > best.1 {
                    best = (j, hi - lo);
                }
            }
            let cut_dim = best.0;
            let mut coords: Vec<f64> = indices.iter().map(|&i| points.row(i)[cut_dim]).collect();
            let mid = coords.len() / 2;
            let (_, median, _) = coords.select_nth_unstable_by(mid, f64::total_cmp);
            let median = *median;
            let min = coords.iter().copied().fold(f64::INFINITY, f64::min);
            let cut_val = if median <= min {
                next_above(points, indices, cut_dim, min).unwrap_or(min)
            } else {
                median
            };
            SplitPlane { cut_dim, cut_val }
        }
    }
}

fn next_above(points: &PointSet, indices: &[usize], dim: usize, floor: f64) -> Option<f64> {
    indices
        .iter()
        .map(|&i| points.row(i)[dim])
        .filter(|&v| v > floor)
        .min_by(f64::total_cmp)
}

/// Summary statistics of a built tree.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TreeShape {
    pub split_nodes: usize,
    pub leaves: usize,
    pub max_depth: usize,
    pub max_leaf_size: usize,
    pub mean_leaf_size: f64,
}

/// An immutable Kd-tree over a point set.
#[derive(Debug, Clone, PartialEq)]
pub struct KdTree {
    nodes: Vec<Node>,
    /// Original dataset index of each leaf-ordered point.
    indices: Vec<usize>,
    /// Leaf-ordered copy of the points, row-major.
    leaf_points: Vec<f64>,
    root_box: BoundingBox,
    dim: usize,
    config: KdTreeConfig,
}

impl KdTree {
    pub fn build(points: &PointSet, config: KdTreeConfig) -> Result<Self> {
        if config.bucket_size == 0 {
            return Err(Error::Config("bucket size must be at least 1".into()));
        }
        let root_box = bounding_box(points)?;
        let mut builder = Builder {
            points,
            config,
            nodes: Vec::with_capacity(2 * points.len() / config.bucket_size + 1),
        };
        let mut indices: Vec<usize> = (0..points.len()).collect();
        let mut cell = root_box.clone();
        builder.build_node(&mut indices, 0, &mut cell);

        let mut leaf_points = Vec::with_capacity(points.as_slice().len());
        for &i in &indices {
            leaf_points.extend_from_slice(points.row(i));
        }
        Ok(Self {
            nodes: builder.nodes,
            indices,
            leaf_points,
            root_box,
            dim: points.dim(),
            config,
        })
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn config(&self) -> KdTreeConfig {
        self.config
    }

    pub fn root_box(&self) -> &BoundingBox {
        &self.root_box
    }

    pub const ROOT: usize = 0;

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn node(&self, id: usize) -> &Node {
        &self.nodes[id]
    }

    /// Dataset indices stored in a leaf.
    pub fn leaf_indices(&self, leaf: &LeafNode) -> &[usize] {
        &self.indices[leaf.start..leaf.end]
    }

    /// The leaf-ordered point at storage position `pos`.
    #[inline]
    pub fn stored_point(&self, pos: usize) -> &[f64] {
        &self.leaf_points[pos * self.dim..(pos + 1) * self.dim]
    }

    /// Leaf-ordered points at storage positions `start..end`, row-major.
    #[inline]
    pub fn stored_block(&self, start: usize, end: usize) -> &[f64] {
        &self.leaf_points[start * self.dim..end * self.dim]
    }

    #[inline]
    pub fn stored_index(&self, pos: usize) -> usize {
        self.indices[pos]
    }

    /// Every dataset index stored below `id`.
    pub fn subtree_indices(&self, id: usize) -> Vec<usize> {
        let mut out = Vec::new();
        let mut stack = vec![id];
        while let Some(id) = stack.pop() {
            match &self.nodes[id] {
                Node::Leaf(leaf) => out.extend_from_slice(self.leaf_indices(leaf)),
                Node::Split(s) => {
                    stack.push(s.child_higher);
                    stack.push(s.child_lower);
                }
            }
        }
        out
    }

    /// Visits every node in pre-order with its cell and depth.
    pub fn walk(&self, mut f: impl FnMut(usize, &Node, &BoundingBox, usize)) {
        let mut cell = self.root_box.clone();
        self.walk_from(Self::ROOT, &mut cell, 0, &mut f);
    }

    fn walk_from(
        &self,
        id: usize,
        cell: &mut BoundingBox,
        depth: usize,
        f: &mut impl FnMut(usize, &Node, &BoundingBox, usize),
    ) {
        let node = &self.nodes[id];
        f(id, node, cell, depth);
        if let Node::Split(s) = node {
            let saved_hi = cell.hi[s.cut_dim];
            cell.hi[s.cut_dim] = s.cut_val;
            self.walk_from(s.child_lower, cell, depth + 1, f);
            cell.hi[s.cut_dim] = saved_hi;

            let saved_lo = cell.lo[s.cut_dim];
            cell.lo[s.cut_dim] = s.cut_val;
            self.walk_from(s.child_higher, cell, depth + 1, f);
            cell.lo[s.cut_dim] = saved_lo;
        }
    }

    pub fn shape(&self) -> TreeShape {
        let mut shape = TreeShape {
            split_nodes: 0,
            leaves: 0,
            max_depth: 0,
            max_leaf_size: 0,
            mean_leaf_size: 0.0,
        };
        self.walk(|_, node, _, depth| {
            shape.max_depth = shape.max_depth.max(depth);
            match node {
                Node::Split(_) => shape.split_nodes += 1,
                Node::Leaf(leaf) => {
                    shape.leaves += 1;
                    shape.max_leaf_size = shape.max_leaf_size.max(leaf.len());
                }
            }
        });
        shape.mean_leaf_size = self.len() as f64 / shape.leaves as f64;
        shape
    }
}

struct Builder<'a> {
    points: &'a PointSet,
    config: KdTreeConfig,
    nodes: Vec<Node>,
}

impl Builder<'_> {
    /// Builds the subtree for `indices` (occupying storage from `offset`)
    /// and returns its node id.
    fn build_node(&mut self, indices: &mut [usize], offset: usize, cell: &mut BoundingBox) -> usize {
        let id = self.nodes.len();
        if indices.len() <= self.config.bucket_size {
            self.nodes.push(Node::Leaf(LeafNode {
                start: offset,
                end: offset + indices.len(),
            }));
            return id;
        }

        let plane = split_plane(self.points, indices, cell, self.config.split_rule);
        let dim = plane.cut_dim;
        let n_lower = stable_partition(indices, |i| self.points.row(i)[dim] < plane.cut_val);
        let n_lower = if n_lower == 0 || n_lower == indices.len() {
            // Every point shares the cut coordinate.
            indices.len() / 2
        } else {
            n_lower
        };

        self.nodes.push(Node::Leaf(LeafNode { start: 0, end: 0 }));
        let (lower_bound, upper_bound) = (cell.lo[dim], cell.hi[dim]);
        let (lower, higher) = indices.split_at_mut(n_lower);

        cell.hi[dim] = plane.cut_val;
        let child_lower = self.build_node(lower, offset, cell);
        cell.hi[dim] = upper_bound;

        cell.lo[dim] = plane.cut_val;
        let child_higher = self.build_node(higher, offset + n_lower, cell);
        cell.lo[dim] = lower_bound;

        self.nodes[id] = Node::Split(SplitNode {
            cut_dim: dim,
            cut_val: plane.cut_val,
            lower_bound,
            upper_bound,
            child_lower,
            child_higher,
        });
        id
    }
}

/// Moves elements satisfying `pred` to the front, preserving relative order on
/// both sides. Returns the number of such elements.
fn stable_partition(items: &mut [usize], pred: impl Fn(usize) -> bool) -> usize {
    let (yes, no): (Vec<usize>, Vec<usize>) = items.iter().partition(|&&i| pred(i));
    let n = yes.len();
    items[..n].copy_from_slice(&yes);
    items[n..].copy_from_slice(&no);
    n
}

#[cfg(test)]
mod tests {
    use super::*;

    fn set(rows: &[&[f64]]) -> PointSet {
        PointSet::from_rows(rows).unwrap()
    }

    #[test]
    fn bounding_box_examples() {
        let b = bounding_box(&set(&[&[0.0, 0.0], &[1.0, 2.0]])).unwrap();
        assert_eq!((b.lo, b.hi), (vec![0.0, 0.0], vec![1.0, 2.0]));
        let b = bounding_box(&set(&[&[0.3, -4.0]])).unwrap();
        assert_eq!((b.lo, b.hi), (vec![0.3, -4.0], vec![0.3, -4.0]));
        let b = bounding_box(&set(&[&[1.0, 5.0], &[3.0, 1.0], &[2.0, 2.0]])).unwrap();
        assert_eq!((b.lo, b.hi), (vec![1.0, 1.0], vec![3.0, 5.0]));
        assert!(PointSet::from_rows::<Vec<f64>>(&[]).is_err());
    }

    #[test]
    fn midpoint_of_longest_side() {
        let pts = set(&[&[0.0, 0.0], &[4.0, 1.0], &[1.0, 0.5], &[3.0, 0.2]]);
        let cell = BoundingBox::new(vec![0.0, 0.0], vec![4.0, 1.0]).unwrap();
        let plane = split_plane(&pts, &[0, 1, 2, 3], &cell, SplitRule::SlidingMidpoint);
        assert_eq!(plane, SplitPlane { cut_dim: 0, cut_val: 2.0 });
    }

    #[test]
    fn midpoint_slides_onto_data() {
        let pts = set(&[&[3.0, 0.0], &[3.5, 1.0], &[3.9, 0.5]]);
        let cell = BoundingBox::new(vec![0.0, 0.0], vec![4.0, 1.0]).unwrap();
        let plane = split_plane(&pts, &[0, 1, 2], &cell, SplitRule::SlidingMidpoint);
        // All points above the midpoint: the cut moves up so that the lowest
        // point is alone below it.
        assert_eq!(plane, SplitPlane { cut_dim: 0, cut_val: 3.5 });

        let pts = set(&[&[0.5, 0.0], &[1.0, 1.0], &[0.1, 0.5]]);
        let plane = split_plane(&pts, &[0, 1, 2], &cell, SplitRule::SlidingMidpoint);
        assert_eq!(plane, SplitPlane { cut_dim: 0, cut_val: 1.0 });
    }

    #[test]
    fn shared_coordinate_slides_to_it() {
        let pts = set(&[&[3.0, 0.0], &[3.0, 1.0], &[3.0, 0.5]]);
        let cell = BoundingBox::new(vec![0.0, 0.0], vec![4.0, 1.0]).unwrap();
        let plane = split_plane(&pts, &[0, 1, 2], &cell, SplitRule::SlidingMidpoint);
        assert_eq!(plane, SplitPlane { cut_dim: 0, cut_val: 3.0 });


        // Inside the tree: the upper cell [1.5, 3] x [0, 1] holds three points
        // sharing x = 3, so the cut sits at 3 and the points split by position.
        let pts = set(&[&[0.0, 0.0], &[3.0, 0.0], &[3.0, 1.0], &[3.0, 0.5]]);
        let tree = KdTree::build(&pts, KdTreeConfig::default().with_bucket_size(1)).unwrap();
        let Node::Split(root) = tree.node(KdTree::ROOT) else { panic!("expected a split") };
        assert_eq!((root.cut_dim, root.cut_val), (0, 1.5));
        let Node::Split(upper) = tree.node(root.child_higher) else { panic!("expected a split") };
        assert_eq!((upper.cut_dim, upper.cut_val), (0, 3.0));
        assert_eq!(tree.subtree_indices(upper.child_lower), vec![1]);
        let mut rest = tree.subtree_indices(upper.child_higher);
        rest.sort_unstable();
        assert_eq!(rest, vec![2, 3]);
    }

    #[test]
    fn median_of_three() {
        let pts = set(&[&[1.0], &[9.0], &[2.0]]);
        let cell = bounding_box(&pts).unwrap();
        let plane = split_plane(&pts, &[0, 1, 2], &cell, SplitRule::MedianOfCoordinates);
        assert_eq!(plane, SplitPlane { cut_dim: 0, cut_val: 2.0 });
    }

    #[test]
    fn small_input_is_one_leaf() {
        let pts = set(&[&[1.0, 2.0], &[3.0, 4.0], &[5.0, 6.0]]);
        let tree = KdTree::build(&pts, KdTreeConfig::default()).unwrap();
        assert_eq!(tree.nodes().len(), 1);
        let Node::Leaf(leaf) = tree.node(KdTree::ROOT) else { panic!("expected a leaf") };
        assert_eq!(tree.leaf_indices(leaf), &[0, 1, 2]);
    }

    #[test]
    fn identical_points_terminate() {
        let rows = vec![vec![0.25, 0.5]; 100];
        let pts = PointSet::from_rows(&rows).unwrap();
        for rule in [SplitRule::SlidingMidpoint, SplitRule::MedianOfCoordinates] {
            let tree =
                KdTree::build(&pts, KdTreeConfig::default().with_split_rule(rule)).unwrap();
            let shape = tree.shape();
            assert!(shape.max_leaf_size <= 8);
            let mut all = tree.subtree_indices(KdTree::ROOT);
            all.sort_unstable();
            assert_eq!(all, (0..100).collect::<Vec<_>>());
        }
    }

    #[test]
    fn ties_go_higher() {
        let pts = set(&[&[0.0], &[1.0], &[2.0], &[2.0], &[4.0]]);
        let tree = KdTree::build(&pts, KdTreeConfig::default().with_bucket_size(2)).unwrap();
        let Node::Split(root) = tree.node(KdTree::ROOT) else { panic!("expected a split") };
        assert_eq!(root.cut_val, 2.0);
        let mut higher = tree.subtree_indices(root.child_higher);
        higher.sort_unstable();
        assert_eq!(higher, vec![2, 3, 4]);
    }

    #[test]
    fn rejects_bad_input() {
        let pts = set(&[&[1.0]]);
        assert!(KdTree::build(&pts, KdTreeConfig::default().with_bucket_size(0)).is_err());
        assert!(PointSet::new(vec![1.0, f64::NAN], 1).is_err());
        assert!("sideways".parse::<SplitRule>().is_err());
    }
}
