//! Cost-reduced factorized basis and its linear map to the standard basis.
//!
//! For `Jbar = (J_1, ..., J_K)` with `J = prod J_k` and prefixes
//! `L_k = J_1 ... J_k`, the non-constant factorized functions of one
//! coordinate are
//!
//! ```text
//! c^{j_1}(z) * prod_{k=2..K} cos^{j_k - 1}(2 L_{k-1} z)
//! c^{2r-1}(z) = cos^{2r-1} z,   c^{2r}(z) = sin z cos^{2r-2} z
//! ```
//!
//! with `j_1 in 1..=2J_1` and `j_k in 1..=J_k`, indexed at flat position
//! `1 + rank` where `rank` is row-major over the radices
//! `(2J_1, J_2, ..., J_K)`. Position 0 holds the constant. Evaluating one
//! coordinate costs `K` cosine calls; the sine comes from `sqrt(1 - cos^2)`,
//! which is exact in sign on `(0, 1)`.
//!
//! Both bases span the same `2J+1`-dimensional space, so a fixed matrix `A`
//! with `c(z) = A c~(z)` turns a factorized sketch into a standard one, mode
//! by mode.

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;

use crate::basis::{c_vector, UnitPoint};
use crate::error::{Error, Result};
use crate::poly::{exact_transform_1d, rational_to_f64};
use crate::scalar::Scalar;
use crate::sketch::{map_reduce, standardize_values, Counter, MapReduceReport, Shard, SketchTensor};
use crate::tensor::{apply_matrix_mode, flat_index, tensor_len, OuterAccumulator};

/// The factor vector `Jbar`; its product is the series order `J`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct AccuracyParameter {
    parts: Vec<usize>,
}

impl AccuracyParameter {
    pub fn new(parts: Vec<usize>) -> Result<Self> {
        if parts.is_empty() {
            return Err(Error::InvalidAccuracy("at least one factor is required".into()));
        }
        if parts.contains(&0) {
            return Err(Error::InvalidAccuracy(format!(
                "factors must be positive, got {}",
                join(&parts)
            )));
        }
        let mut order: usize = 1;
        for &p in &parts {
            order = order
                .checked_mul(p)
                .filter(|&o| o <= 1 << 20)
                .ok_or_else(|| Error::InvalidAccuracy(format!("order of {} is too large", join(&parts))))?;
        }
        Ok(AccuracyParameter { parts })
    }

    /// `Jbar = (J,)`, the plain series of order `J`.
    pub fn single(order: usize) -> Result<Self> {
        if order == 0 {
            return Err(Error::ZeroOrder);
        }
        AccuracyParameter::new(vec![order])
    }

    pub fn parts(&self) -> &[usize] {
        &self.parts
    }

    /// Number of factors `K`.
    pub fn factors(&self) -> usize {
        self.parts.len()
    }

    /// Series order `J = prod J_k`.
    pub fn order(&self) -> usize {
        self.parts.iter().product()
    }

    /// `2J + 1`, the size of both the standard and the factorized index sets.
    pub fn basis_len(&self) -> usize {
        2 * self.order() + 1
    }

    /// Prefix products `L_1, ..., L_{K-1}`.
    pub fn prefixes(&self) -> Vec<usize> {
        self.parts[..self.parts.len() - 1]
            .iter()
            .scan(1, |acc, &p| {
                *acc *= p;
                Some(*acc)
            })
            .collect()
    }

    /// Radices of the non-constant factorized index: `(2J_1, J_2, ..., J_K)`.
    pub fn radices(&self) -> Vec<usize> {
        let mut r = self.parts.clone();
        r[0] *= 2;
        r
    }

    /// Flat position of a factorized index; `None` is the constant.
    pub fn factorized_position(&self, tuple: Option<&[usize]>) -> Result<usize> {
        let Some(tuple) = tuple else { return Ok(0) };
        if tuple.len() != self.factors() {
            return Err(Error::DimensionMismatch {
                expected: self.factors(),
                found: tuple.len(),
            });
        }
        let mut rank = 0;
        for (&j, &r) in tuple.iter().zip(&self.radices()) {
            if j == 0 || j > r {
                return Err(Error::InvalidAccuracy(format!("index {j} outside 1..={r}")));
            }
            rank = rank * r + (j - 1);
        }
        Ok(1 + rank)
    }
}

fn join(parts: &[usize]) -> String {
    parts.iter().map(usize::to_string).collect::<Vec<_>>().join(",")
}

impl fmt::Display for AccuracyParameter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&join(&self.parts))
    }
}

/// Parses `"3,5"`, `"3x5"` or `"(3, 5)"`.
impl FromStr for AccuracyParameter {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let trimmed = s.trim().trim_start_matches('(').trim_end_matches(')');
        let parts = trimmed
            .split([',', 'x', 'X'])
            .map(str::trim)
            .filter(|t| !t.is_empty())
            .map(|t| {
                t.parse::<usize>()
                    .map_err(|_| Error::InvalidAccuracy(format!("cannot parse factor {t:?} in {s:?}")))
            })
            .collect::<Result<Vec<_>>>()?;
        AccuracyParameter::new(parts)
    }
}

/// Evaluates the factorized basis of one coordinate into `out` (length
/// `2J+1`) and returns the number of cosine calls made (always `K`).
pub fn factorized_basis_1d<T: Scalar>(z: T, acc: &AccuracyParameter, out: &mut [T]) -> u64 {
    debug_assert_eq!(out.len(), acc.basis_len());
    let parts = acc.parts();
    let cz = z.cos();
    let sz = (T::one() - cz * cz).max(T::zero()).sqrt();
    out[0] = T::one();

    let j1 = parts[0];
    let mut pw = T::one();
    for r in 0..j1 {
        // pw = cos^{2r}
        out[1 + 2 * r] = pw * cz;
        out[2 + 2 * r] = pw * sz;
        pw = pw * cz * cz;
    }

    let mut len = 2 * j1;
    let mut calls = 1;
    let mut prefix = 1;
    for k in 1..parts.len() {
        prefix *= parts[k - 1];
        let d = (T::of(2.0 * prefix as f64) * z).cos();
        calls += 1;
        let jk = parts[k];
        // Expand in place from the back: new[i*jk + m] = old[i] * d^m.
        for i in (0..len).rev() {
            let base = out[1 + i];
            let mut p = T::one();
            for m in 0..jk {
                out[1 + i * jk + m] = base * p;
                p *= d;
            }
        }
        len *= jk;
    }
    calls
}

/// Per-coordinate factorized vectors of one point.
pub fn factorized_point_basis<T: Scalar>(
    x: &UnitPoint<T>,
    acc: &AccuracyParameter,
) -> (Vec<Vec<T>>, u64) {
    let mut calls = 0;
    let vecs = x
        .coords()
        .iter()
        .map(|&z| {
            let mut v = vec![T::zero(); acc.basis_len()];
            calls += factorized_basis_1d(z, acc, &mut v);
            v
        })
        .collect();
    (vecs, calls)
}

/// Sketch statistics in the factorized basis.
#[derive(Debug, Clone, PartialEq)]
pub struct FactorizedTensor<T> {
    accuracy: AccuracyParameter,
    dim: usize,
    values: Vec<T>,
    count: u64,
    standardized: bool,
}

impl<T: Scalar> FactorizedTensor<T> {
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
                "expected {len} values for p={dim}, Jbar={accuracy}, found {}",
                values.len()
            )));
        }
        Ok(FactorizedTensor {
            accuracy,
            dim,
            values,
            count,
            standardized,
        })
    }

    pub fn accuracy(&self) -> &AccuracyParameter {
        &self.accuracy
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn is_standardized(&self) -> bool {
        self.standardized
    }

    pub fn get(&self, index: &[usize]) -> T {
        self.values[flat_index(index, self.accuracy.basis_len())]
    }

    pub fn merge(&self, other: &Self) -> Result<Self> {
        if self.accuracy != other.accuracy || self.dim != other.dim {
            return Err(Error::ShapeMismatch(format!(
                "cannot combine p={} Jbar={} with p={} Jbar={}",
                self.dim, self.accuracy, other.dim, other.accuracy
            )));
        }
        if self.standardized || other.standardized {
            return Err(Error::AlreadyStandardized);
        }
        Ok(FactorizedTensor {
            values: self.values.iter().zip(&other.values).map(|(&a, &b)| a + b).collect(),
            count: self.count + other.count,
            ..self.clone()
        })
    }

    pub fn standardize(&self) -> Result<Self> {
        if self.standardized {
            return Ok(self.clone());
        }
        Ok(FactorizedTensor {
            values: standardize_values(&self.values, self.count)?,
            standardized: true,
            ..self.clone()
        })
    }
}

/// How a [`Transform1D`] was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TransformMethod {
    /// Least squares on `2J+1` Chebyshev-spaced nodes.
    Interpolation,
    /// Least squares on `2(2J+1)` nodes, used when the square system is ill-conditioned.
    LeastSquares,
    /// Exact rational solve rounded to `f64`, used when the sampled solves miss the residual bound.
    ExactRational,
}

impl fmt::Display for TransformMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TransformMethod::Interpolation => "interpolation",
            TransformMethod::LeastSquares => "least-squares",
            TransformMethod::ExactRational => "exact-rational",
        })
    }
}

/// Row-major `(2J+1) x (2J+1)` matrix `A` with `c(z) = A c~(z)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Transform1D {
    accuracy: AccuracyParameter,
    matrix: Vec<f64>,
    method: TransformMethod,
    residual: f64,
}

/// Residual bound on the held-out grid.
pub const TRANSFORM_TOLERANCE: f64 = 1e-8;
const NODE_MARGIN: f64 = 1e-3;
const CONDITION_LIMIT: f64 = 1e12;

impl Transform1D {
    /// Wraps a stored matrix, re-validating it on the held-out grid.
    pub fn from_matrix(accuracy: AccuracyParameter, matrix: Vec<f64>) -> Result<Self> {
        let side = accuracy.basis_len();
        if matrix.len() != side * side {
            return Err(Error::ShapeMismatch(format!(
                "transform for Jbar={accuracy} needs {} entries, found {}",
                side * side,
                matrix.len()
            )));
        }
        let residual = held_out_residual(&accuracy, &matrix);
        if !(residual < TRANSFORM_TOLERANCE) {
            return Err(Error::SingularTransform(format!(
                "stored matrix for Jbar={accuracy} has residual {residual:e}"
            )));
        }
        Ok(Transform1D {
            accuracy,
            matrix,
            method: TransformMethod::Interpolation,
            residual,
        })
    }

    pub fn accuracy(&self) -> &AccuracyParameter {
        &self.accuracy
    }

    pub fn matrix(&self) -> &[f64] {
        &self.matrix
    }

    pub fn method(&self) -> TransformMethod {
        self.method
    }

    /// Max-norm residual on the held-out grid of `4J+7` points.
    pub fn residual(&self) -> f64 {
        self.residual
    }

    pub fn side(&self) -> usize {
        self.accuracy.basis_len()
    }

    /// `A c~(z)`.
    pub fn apply(&self, factorized: &[f64]) -> Vec<f64> {
        let side = self.side();
        (0..side)
            .map(|i| (0..side).map(|k| self.matrix[i * side + k] * factorized[k]).sum())
            .collect()
    }
}

fn chebyshev_nodes(count: usize) -> Vec<f64> {
    (0..count)
        .map(|m| {
            let t = std::f64::consts::PI * (2 * m + 1) as f64 / (2 * count) as f64;
            0.5 * (1.0 + t.cos()) * (1.0 - 2.0 * NODE_MARGIN) + NODE_MARGIN
        })
        .collect()
}

fn both_bases(z: f64, acc: &AccuracyParameter) -> (Vec<f64>, Vec<f64>) {
    let side = acc.basis_len();
    let mut std = vec![0.0; side];
    let mut fac = vec![0.0; side];
    c_vector(z, &mut std);
    factorized_basis_1d(z, acc, &mut fac);
    (std, fac)
}

fn held_out_residual(acc: &AccuracyParameter, matrix: &[f64]) -> f64 {
    let side = acc.basis_len();
    let count = 4 * acc.order() + 7;
    let mut worst: f64 = 0.0;
    for i in 0..count {
        let z = (i + 1) as f64 / (count + 1) as f64;
        let (std, fac) = both_bases(z, acc);
        for r in 0..side {
            let approx: f64 = (0..side).map(|k| matrix[r * side + k] * fac[k]).sum();
            let err = (approx - std[r]).abs();
            if !(err <= worst) {
                worst = if err.is_nan() { f64::INFINITY } else { err };
            }
        }
    }
    worst
}

/// Solves the non-constant block by SVD least squares on `count` nodes.
/// Returns the full matrix and the condition estimate of the sampled system.
fn sampled_transform(acc: &AccuracyParameter, count: usize) -> (Vec<f64>, f64) {
    let side = acc.basis_len();
    let inner = side - 1;
    let nodes = chebyshev_nodes(count);
    let mut basis = DMatrix::<f64>::zeros(count, inner);
    let mut target = DMatrix::<f64>::zeros(count, inner);
    for (m, &z) in nodes.iter().enumerate() {
        let (std, fac) = both_bases(z, acc);
        for k in 0..inner {
            basis[(m, k)] = fac[k + 1];
            target[(m, k)] = std[k + 1];
        }
    }
    let svd = basis.svd(true, true);
    let sv = &svd.singular_values;
    let (max, min) = (sv.max(), sv.min());
    let cond = if min > 0.0 { max / min } else { f64::INFINITY };
    let mut matrix = vec![0.0; side * side];
    matrix[0] = 1.0;
    if let Ok(sol) = svd.solve(&target, 0.0) {
        // `sol` is A'^T: column i of the solution holds row i of A'.
        for i in 0..inner {
            for k in 0..inner {
                matrix[(i + 1) * side + k + 1] = sol[(k, i)];
            }
        }
    }
    (matrix, cond)
}

/// Builds `A` for `Jbar` and validates it on a held-out grid.
pub fn build_transform_1d(acc: &AccuracyParameter) -> Result<Transform1D> {
    let side = acc.basis_len();
    let (mut matrix, cond) = sampled_transform(acc, side);
    let mut method = TransformMethod::Interpolation;
    if !(cond <= CONDITION_LIMIT) {
        matrix = sampled_transform(acc, 2 * side).0;
        method = TransformMethod::LeastSquares;
    }
    let mut residual = held_out_residual(acc, &matrix);
    if !(residual < TRANSFORM_TOLERANCE) {
        let exact: Vec<f64> = exact_transform_1d(acc)?.iter().map(rational_to_f64).collect();
        let exact_residual = held_out_residual(acc, &exact);
        if exact_residual < residual {
            matrix = exact;
            residual = exact_residual;
            method = TransformMethod::ExactRational;
        }
    }
    if !(residual < TRANSFORM_TOLERANCE) {
        return Err(Error::SingularTransform(format!(
            "Jbar={acc}: held-out residual {residual:e} exceeds {TRANSFORM_TOLERANCE:e} (condition estimate {cond:e})"
        )));
    }
    Ok(Transform1D {
        accuracy: acc.clone(),
        matrix,
        method,
        residual,
    })
}

/// Applies `A` along every mode, turning factorized statistics into standard ones.
pub fn recover_standard<T: Scalar>(ft: &FactorizedTensor<T>, tf: &Transform1D) -> Result<SketchTensor<T>> {
    if ft.accuracy != tf.accuracy {
        return Err(Error::ShapeMismatch(format!(
            "tensor has Jbar={} but transform has Jbar={}",
            ft.accuracy, tf.accuracy
        )));
    }
    let side = tf.side();
    let matrix: Vec<T> = tf.matrix.iter().map(|&v| T::of(v)).collect();
    let mut values = ft.values.clone();
    for axis in 0..ft.dim {
        values = apply_matrix_mode(&values, ft.dim, side, axis, &matrix);
    }
    SketchTensor::from_parts(ft.accuracy.clone(), ft.dim, values, ft.count, ft.standardized)
}

/// Raw factorized sketch of one shard.
pub fn sketch_shard_factorized<T: Scalar>(
    shard: &Shard<T>,
    acc: &AccuracyParameter,
    p: usize,
) -> Result<FactorizedTensor<T>> {
    sketch_shard_factorized_instrumented(shard, acc, p, &Counter::new(), &Counter::new())
}

/// [`sketch_shard_factorized`] with point-read and cosine-call counters.
pub fn sketch_shard_factorized_instrumented<T: Scalar>(
    shard: &Shard<T>,
    acc: &AccuracyParameter,
    p: usize,
    reads: &Counter,
    trig_calls: &Counter,
) -> Result<FactorizedTensor<T>> {
    if shard.points.dim() != p {
        return Err(Error::DimensionMismatch {
            expected: p,
            found: shard.points.dim(),
        });
    }
    let side = acc.basis_len();
    let mut accum = OuterAccumulator::new(p, side);
    let mut buf = vec![T::zero(); p * side];
    let (mut read, mut calls) = (0u64, 0u64);
    for x in shard.points.iter() {
        read += 1;
        for (l, &z) in x.iter().enumerate() {
            calls += factorized_basis_1d(z, acc, &mut buf[l * side..(l + 1) * side]);
        }
        accum.push(&buf);
    }
    reads.add(read);
    trig_calls.add(calls);
    FactorizedTensor::from_parts(acc.clone(), p, accum.finish(), read, false)
}

/// Sketches every shard in the factorized basis, merges, and standardizes.
pub fn map_reduce_build_factorized<T: Scalar>(
    shards: &[Shard<T>],
    acc: &AccuracyParameter,
    p: usize,
    parallelism: usize,
) -> Result<(FactorizedTensor<T>, MapReduceReport)> {
    let (reads, calls) = (Counter::new(), Counter::new());
    let (raw, map, reduce) = map_reduce(
        shards,
        parallelism,
        |i| sketch_shard_factorized_instrumented(&shards[i], acc, p, &reads, &calls),
        |a, b| a.merge(b),
    )?;
    let report = MapReduceReport {
        map,
        reduce,
        points_read: reads.get(),
        trig_calls: calls.get(),
    };
    Ok((raw.standardize()?, report))
}
