//! Balanced k-d trees from a single pass of additive trigonometric sketch
//! statistics.
//!
//! The pipeline: points in the open unit cube are summarized into a dense
//! tensor of averaged products of sinusoids ([`sketch`], or the cheaper
//! [`factorized`] basis plus a linear recovery). Any axis-aligned box count
//! is then a contraction of that tensor ([`sketch::approx_count`]), and every
//! conditional median of a k-d tree is a root of a difference of two such
//! counts ([`tree`]). No further pass over the data is needed.

// NaN must fail range checks, so negated comparisons are deliberate.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod basis;
pub mod error;
pub mod eval;
pub mod factorized;
pub mod io;
pub mod pipeline;
pub mod poly;
pub mod scalar;
pub mod sketch;
pub mod tensor;
pub mod tree;

pub use basis::{Neighborhood, UnitPoint};
pub use error::{Error, Result};
pub use eval::{DataDistribution, ExperimentConfig};
pub use factorized::{AccuracyParameter, FactorizedTensor, Transform1D, TransformMethod};
pub use pipeline::{sketch_dataset, SketchOutcome, SketchRoute};
pub use scalar::Scalar;
pub use sketch::{PointSet, Shard, SketchTensor};
pub use tree::{audit_cells, build_exact_tree, build_tree, CellAudit, KdNode, KdTree, TreeOptions};

pub type PointSet64 = PointSet<f64>;
pub type PointSet32 = PointSet<f32>;
pub type Neighborhood64 = Neighborhood<f64>;
pub type SketchTensor64 = SketchTensor<f64>;
pub type SketchTensor32 = SketchTensor<f32>;
pub type FactorizedTensor64 = FactorizedTensor<f64>;
pub type FactorizedTensor32 = FactorizedTensor<f32>;
pub type KdTree64 = KdTree<f64>;
pub type KdTree32 = KdTree<f32>;
