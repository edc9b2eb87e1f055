//! Additive sketch statistics over partitioned data.
//!
//! The raw statistic is `C_j(X) = sum_i prod_l c_{j_l}(x_{i,l})` for every
//! multi-index `j` in `{0..2J}^p`. It is additive over any partition of the
//! data, so shards are sketched independently and merged by addition. The
//! standardized tensor divides by the point count, which makes entry zero
//! exactly one.

use std::sync::atomic::{AtomicU64, Ordering};
use std::time::{Duration, Instant};

use rayon::prelude::*;

use crate::basis::{basis_len, c_vector, check_open_unit, g_vector, Neighborhood};
use crate::error::{Error, Result};
use crate::factorized::AccuracyParameter;
use crate::scalar::Scalar;
use crate::tensor::{contract_all, contract_all_but, flat_index, tensor_len, OuterAccumulator};

/// Points stored contiguously, `dim` coordinates each, all inside `(0, 1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PointSet<T> {
    dim: usize,
    coords: Vec<T>,
}

impl<T: Scalar> PointSet<T> {
    pub fn new(dim: usize, coords: Vec<T>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::DimensionMismatch {
                expected: 1,
                found: 0,
            });
        }
        if !coords.len().is_multiple_of(dim) {
            return Err(Error::ShapeMismatch(format!(
                "{} coordinates do not form {dim}-dimensional points",
                coords.len()
            )));
        }
        for &c in &coords {
            check_open_unit(c)?;
        }
        Ok(PointSet { dim, coords })
    }

    pub fn from_points(dim: usize, points: &[Vec<T>]) -> Result<Self> {
        let mut coords = Vec::with_capacity(points.len() * dim);
        for p in points {
            if p.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    found: p.len(),
                });
            }
            coords.extend_from_slice(p);
        }
        PointSet::new(dim, coords)
    }

    pub fn empty(dim: usize) -> Self {
        PointSet {
            dim,
            coords: Vec::new(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.coords.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn point(&self, i: usize) -> &[T] {
        &self.coords[i * self.dim..(i + 1) * self.dim]
    }

    pub fn iter(&self) -> std::slice::ChunksExact<'_, T> {
        self.coords.chunks_exact(self.dim)
    }

    pub fn coords(&self) -> &[T] {
        &self.coords
    }

    /// Splits into `parts` contiguous shards whose sizes differ by at most one.
    pub fn split(&self, parts: usize) -> Vec<Shard<T>> {
        let parts = parts.max(1);
        let n = self.len();
        let (base, extra) = (n / parts, n % parts);
        let mut start = 0;
        (0..parts)
            .map(|id| {
                let len = base + usize::from(id < extra);
                let coords = self.coords[start * self.dim..(start + len) * self.dim].to_vec();
                start += len;
                Shard {
                    id,
                    points: PointSet {
                        dim: self.dim,
                        coords,
                    },
                }
            })
            .collect()
    }

    /// Concatenates point sets of equal dimension.
    pub fn concat(sets: &[PointSet<T>]) -> Result<Self> {
        let dim = sets.first().map_or(1, |s| s.dim);
        let mut coords = Vec::new();
        for s in sets {
            if s.dim != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    found: s.dim,
                });
            }
            coords.extend_from_slice(&s.coords);
        }
        Ok(PointSet { dim, coords })
    }

    /// Fraction of points strictly inside `nb`.
    pub fn fraction_inside(&self, nb: &Neighborhood<T>) -> f64 {
        if self.is_empty() {
            return 0.0;
        }
        let inside = self.iter().filter(|x| nb.contains(x)).count();
        inside as f64 / self.len() as f64
    }
}

/// One part of a partitioned dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct Shard<T> {
    pub id: usize,
    pub points: PointSet<T>,
}

/// Thread-safe event counter (point reads, trigonometric calls).
#[derive(Debug, Default)]
pub struct Counter(AtomicU64);

impl Counter {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&self) -> u64 {
        self.0.load(Ordering::Relaxed)
    }

    pub(crate) fn add(&self, n: u64) {
        self.0.fetch_add(n, Ordering::Relaxed);
    }
}

/// Dense tensor of sketch statistics indexed by `{0..2J}^p`.
#[derive(Debug, Clone, PartialEq)]
pub struct SketchTensor<T> {
    accuracy: AccuracyParameter,
    dim: usize,
    values: Vec<T>,
    count: u64,
    standardized: bool,
}

impl<T: Scalar> SketchTensor<T> {
    pub fn zeros(accuracy: AccuracyParameter, dim: usize) -> Self {
        let len = tensor_len(dim, accuracy.basis_len());
        SketchTensor {
            accuracy,
            dim,
            values: vec![T::zero(); len],
            count: 0,
            standardized: false,
        }
    }

    /// Reassembles a tensor from stored parts, checking the shape.
    pub fn from_parts(
        accuracy: AccuracyParameter,
        dim: usize,
        values: Vec<T>,
        count: u64,
        standardized: bool,
    ) -> Result<Self> {
        let len = tensor_len(dim, accuracy.basis_len());
        if values.len() != len {
            return Err(Error::ShapeMismatch(format!(
                "expected {len} values for p={dim}, J={}, found {}",
                accuracy.order(),
                values.len()
            )));
        }
        Ok(SketchTensor {
            accuracy,
            dim,
            values,
            count,
            standardized,
        })
    }

    /// Series order `J`.
    pub fn order(&self) -> usize {
        self.accuracy.order()
    }

    /// The accuracy parameter the tensor was produced with; `(J,)` for the direct path.
    pub fn accuracy(&self) -> &AccuracyParameter {
        &self.accuracy
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Side length `2J + 1` of every mode.
    pub fn side(&self) -> usize {
        self.accuracy.basis_len()
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    /// Number of points ingested (the raw `C_0`).
    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn is_standardized(&self) -> bool {
        self.standardized
    }

    pub fn get(&self, index: &[usize]) -> T {
        self.values[flat_index(index, self.side())]
    }

    fn check_same_shape(&self, other: &Self) -> Result<()> {
        if self.dim != other.dim || self.order() != other.order() {
            return Err(Error::ShapeMismatch(format!(
                "cannot combine p={} J={} with p={} J={}",
                self.dim,
                self.order(),
                other.dim,
                other.order()
            )));
        }
        Ok(())
    }
}

/// Raw sketch of one shard using direct trigonometric evaluation (`2Jp`
/// trigonometric terms per point).
pub fn sketch_shard<T: Scalar>(shard: &Shard<T>, order: usize, p: usize) -> Result<SketchTensor<T>> {
    sketch_shard_instrumented(shard, order, p, &Counter::new())
}

/// [`sketch_shard`], adding every point read to `reads`.
pub fn sketch_shard_instrumented<T: Scalar>(
    shard: &Shard<T>,
    order: usize,
    p: usize,
    reads: &Counter,
) -> Result<SketchTensor<T>> {
    let accuracy = AccuracyParameter::single(order)?;
    if shard.points.dim() != p {
        return Err(Error::DimensionMismatch {
            expected: p,
            found: shard.points.dim(),
        });
    }
    let side = basis_len(order);
    let mut acc = OuterAccumulator::new(p, side);
    let mut buf = vec![T::zero(); p * side];
    let mut read = 0u64;
    for x in shard.points.iter() {
        read += 1;
        for (l, &xl) in x.iter().enumerate() {
            c_vector(xl, &mut buf[l * side..(l + 1) * side]);
        }
        acc.push(&buf);
    }
    reads.add(read);
    Ok(SketchTensor {
        accuracy,
        dim: p,
        values: acc.finish(),
        count: read,
        standardized: false,
    })
}

/// Entrywise sum of two raw sketches.
pub fn merge<T: Scalar>(a: &SketchTensor<T>, b: &SketchTensor<T>) -> Result<SketchTensor<T>> {
    a.check_same_shape(b)?;
    if a.standardized || b.standardized {
        return Err(Error::AlreadyStandardized);
    }
    Ok(SketchTensor {
        accuracy: a.accuracy.clone(),
        dim: a.dim,
        values: a.values.iter().zip(&b.values).map(|(&x, &y)| x + y).collect(),
        count: a.count + b.count,
        standardized: false,
    })
}

/// Divides by the point count. Already standardized tensors are returned unchanged.
pub fn standardize<T: Scalar>(t: &SketchTensor<T>) -> Result<SketchTensor<T>> {
    if t.standardized {
        return Ok(t.clone());
    }
    Ok(SketchTensor {
        values: standardize_values(&t.values, t.count)?,
        standardized: true,
        ..t.clone()
    })
}

pub(crate) fn standardize_values<T: Scalar>(values: &[T], count: u64) -> Result<Vec<T>> {
    if count == 0 {
        return Err(Error::EmptySketch);
    }
    let n = T::of(count as f64);
    let mut out: Vec<T> = values.iter().map(|&v| v / n).collect();
    out[0] = T::one();
    Ok(out)
}

/// The per-mode `g` vectors of a neighborhood.
pub(crate) fn neighborhood_g_vectors<T: Scalar>(nb: &Neighborhood<T>, side: usize) -> Vec<Vec<T>> {
    (0..nb.dim())
        .map(|l| {
            let mut g = vec![T::zero(); side];
            g_vector(nb.lower()[l], nb.upper()[l], &mut g);
            g
        })
        .collect()
}

fn check_query<T: Scalar>(t: &SketchTensor<T>, nb: &Neighborhood<T>) -> Result<()> {
    if !t.standardized {
        return Err(Error::NotStandardized);
    }
    if nb.dim() != t.dim {
        return Err(Error::DimensionMismatch {
            expected: t.dim,
            found: nb.dim(),
        });
    }
    Ok(())
}

/// Approximate fraction of points inside `nb`,
/// `sum_j Cbar_j prod_l g_{j_l}(a_l, b_l)`, computed one mode at a time.
pub fn approx_count<T: Scalar>(t: &SketchTensor<T>, nb: &Neighborhood<T>) -> Result<T> {
    check_query(t, nb)?;
    let g = neighborhood_g_vectors(nb, t.side());
    Ok(contract_all(&t.values, t.side(), &g))
}

/// The sketch contracted against `nb` on every mode except `axis`; dotting the
/// result with `g(a, b)` on that axis gives the approximate count of the box
/// with `(a, b)` substituted on `axis`.
pub(crate) fn marginal_weights<T: Scalar>(
    t: &SketchTensor<T>,
    nb: &Neighborhood<T>,
    axis: usize,
) -> Result<Vec<T>> {
    check_query(t, nb)?;
    let g = neighborhood_g_vectors(nb, t.side());
    Ok(contract_all_but(&t.values, t.side(), &g, axis))
}

/// Exact fraction inside `nb` (strict inequalities) minus the approximate count.
pub fn empirical_error<T: Scalar>(
    points: &PointSet<T>,
    t: &SketchTensor<T>,
    nb: &Neighborhood<T>,
) -> Result<f64> {
    let approx = approx_count(t, nb)?;
    Ok(points.fraction_inside(nb) - approx.as_f64())
}

/// Wall-clock and instrumentation of one map-reduce pass.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct MapReduceReport {
    pub map: Duration,
    pub reduce: Duration,
    pub points_read: u64,
    /// Scalar trigonometric evaluations (a paired sine/cosine counts as two).
    pub trig_calls: u64,
}

/// Runs `map` over every shard on a pool of `parallelism` threads and folds
/// the results pairwise in shard order. The fold shape depends only on the
/// number of shards, so the output is independent of `parallelism`.
pub(crate) fn map_reduce<S, M, R>(
    shards: &[Shard<impl Scalar>],
    parallelism: usize,
    map: M,
    reduce: R,
) -> Result<(S, Duration, Duration)>
where
    S: Send,
    M: Fn(usize) -> Result<S> + Sync,
    R: Fn(&S, &S) -> Result<S>,
{
    if parallelism == 0 {
        return Err(Error::Config("parallelism must be positive".into()));
    }
    if shards.is_empty() {
        return Err(Error::EmptySketch);
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(parallelism)
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    let start = Instant::now();
    let mapped: Vec<S> =
        pool.install(|| (0..shards.len()).into_par_iter().map(&map).collect::<Result<Vec<S>>>())?;
    let map_time = start.elapsed();

    let start = Instant::now();
    let mut level = mapped;
    while level.len() > 1 {
        let mut next = Vec::with_capacity(level.len().div_ceil(2));
        let mut it = level.into_iter();
        while let Some(left) = it.next() {
            match it.next() {
                Some(right) => next.push(reduce(&left, &right)?),
                None => next.push(left),
            }
        }
        level = next;
    }
    let reduced = level.pop().expect("at least one shard");
    Ok((reduced, map_time, start.elapsed()))
}

/// Sketches every shard in parallel, merges, and standardizes.
pub fn map_reduce_build<T: Scalar>(
    shards: &[Shard<T>],
    order: usize,
    p: usize,
    parallelism: usize,
) -> Result<(SketchTensor<T>, MapReduceReport)> {
    let reads = Counter::new();
    let (raw, map, reduce) = map_reduce(
        shards,
        parallelism,
        |i| sketch_shard_instrumented(&shards[i], order, p, &reads),
        merge,
    )?;
    let standardized = standardize(&raw)?;
    let report = MapReduceReport {
        map,
        reduce,
        points_read: reads.get(),
        trig_calls: reads.get() * (2 * order * p) as u64,
    };
    Ok((standardized, report))
}
