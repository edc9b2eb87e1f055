//! End-to-end sketching of a sharded dataset: direct or factorized basis,
//! with the recovery step and per-phase timings.

use std::time::{Duration, Instant};

use crate::error::Result;
use crate::factorized::{
    build_transform_1d, map_reduce_build_factorized, recover_standard, AccuracyParameter, FactorizedTensor,
    Transform1D,
};
use crate::scalar::Scalar;
use crate::sketch::{map_reduce_build, MapReduceReport, Shard, SketchTensor};

/// Which basis the map phase evaluates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SketchRoute {
    /// Direct for a single factor, factorized otherwise.
    #[default]
    Auto,
    /// Standard basis, `2J` trigonometric terms per coordinate.
    Direct,
    /// Factorized basis, `K` cosine calls per coordinate, then recovery.
    Factorized,
}

impl SketchRoute {
    fn factorized_for(self, acc: &AccuracyParameter) -> bool {
        match self {
            SketchRoute::Auto => acc.factors() > 1,
            SketchRoute::Direct => false,
            SketchRoute::Factorized => true,
        }
    }
}

/// Everything produced by [`sketch_dataset`].
#[derive(Debug, Clone)]
pub struct SketchOutcome<T> {
    /// Standardized tensor in the standard basis.
    pub standard: SketchTensor<T>,
    /// Standardized factorized tensor, when that route was taken.
    pub factorized: Option<FactorizedTensor<T>>,
    pub transform: Option<Transform1D>,
    pub report: MapReduceReport,
    /// Transform construction plus mode-wise recovery.
    pub transform_time: Duration,
}

/// Sketches the shards and returns the standardized standard-basis tensor.
pub fn sketch_dataset<T: Scalar>(
    shards: &[Shard<T>],
    acc: &AccuracyParameter,
    p: usize,
    parallelism: usize,
    route: SketchRoute,
) -> Result<SketchOutcome<T>> {
    if !route.factorized_for(acc) {
        let (standard, report) = map_reduce_build(shards, acc.order(), p, parallelism)?;
        return Ok(SketchOutcome {
            standard,
            factorized: None,
            transform: None,
            report,
            transform_time: Duration::ZERO,
        });
    }
    // The transform depends only on the accuracy parameter; building it first
    // rejects a bad parameter before any data is read.
    let start = Instant::now();
    let transform = build_transform_1d(acc)?;
    let mut transform_time = start.elapsed();
    let (factorized, report) = map_reduce_build_factorized(shards, acc, p, parallelism)?;
    let start = Instant::now();
    let standard = recover_standard(&factorized, &transform)?;
    transform_time += start.elapsed();
    Ok(SketchOutcome {
        standard,
        factorized: Some(factorized),
        transform: Some(transform),
        report,
        transform_time,
    })
}
