//! Exact and approximate k-nearest-neighbour search under decomposable
//! Bregman divergences, using Kd-trees.
//!
//! ```
//! use bregman_kd::{datagen, DecomposableDivergence, KdTree, KdTreeConfig, QueryParams};
//!
//! let data = datagen::generate(&datagen::GenSpec::simplex(2_000, 10, 1)).unwrap();
//! let tree = KdTree::build(&data, KdTreeConfig::default()).unwrap();
//! let params = QueryParams::new(DecomposableDivergence::kl(10).unwrap(), 5);
//! let (result, _stats) = bregman_kd::knn(&tree, &params, data.row(0)).unwrap();
//! assert_eq!(result.neighbors()[0].index, 0);
//! ```

pub mod datagen;
pub mod divergence;
pub mod error;
pub mod kdtree;
pub mod oracle;
pub mod points;
pub mod search;

pub use divergence::{CoordinateRule, DecomposableDivergence, Direction, Interval, RuleKind};
pub use error::{Error, Result};
pub use kdtree::{bounding_box, BoundingBox, KdTree, KdTreeConfig, Node, SplitRule};
pub use oracle::linear_knn;
pub use points::PointSet;
pub use search::{
    box_projection_divergence, knn, knn_batch, knn_traced, update_box_div, BoundedMaxHeap,
    Neighbor, QueryParams, QueryStats, ResultSet,
};
