//! Dense `p`-mode tensors with equal side length, stored row-major.
//!
//! A multi-index `(j_1, ..., j_p)` maps to the flat offset
//! `sum_l j_l * side^(p-l)`, so the last mode is contiguous.

use crate::scalar::Scalar;

/// Number of entries of a `dim`-mode tensor with the given side length.
pub fn tensor_len(dim: usize, side: usize) -> usize {
    side.pow(dim as u32)
}

/// Flat row-major offset of a multi-index.
pub fn flat_index(index: &[usize], side: usize) -> usize {
    index.iter().fold(0, |acc, &j| {
        debug_assert!(j < side);
        acc * side + j
    })
}

/// Inverse of [`flat_index`].
pub fn unravel(mut flat: usize, dim: usize, side: usize) -> Vec<usize> {
    let mut index = vec![0; dim];
    for slot in index.iter_mut().rev() {
        *slot = flat % side;
        flat /= side;
    }
    index
}

/// Contracts mode `axis` of a tensor of shape `side^dim` against `vector`,
/// returning a tensor with that mode removed.
pub fn contract_mode<T: Scalar>(
    values: &[T],
    dim: usize,
    side: usize,
    axis: usize,
    vector: &[T],
) -> Vec<T> {
    debug_assert_eq!(vector.len(), side);
    debug_assert_eq!(values.len(), tensor_len(dim, side));
    let inner = tensor_len(dim - axis - 1, side);
    let outer = tensor_len(axis, side);
    let mut out = vec![T::zero(); outer * inner];
    if inner == 1 {
        for (o, dst) in out.iter_mut().enumerate() {
            let row = &values[o * side..(o + 1) * side];
            *dst = row.iter().zip(vector).fold(T::zero(), |acc, (&v, &g)| acc + v * g);
        }
    } else {
        for o in 0..outer {
            let dst = &mut out[o * inner..(o + 1) * inner];
            for (j, &g) in vector.iter().enumerate() {
                let src = &values[(o * side + j) * inner..(o * side + j + 1) * inner];
                for (d, &s) in dst.iter_mut().zip(src) {
                    *d += g * s;
                }
            }
        }
    }
    out
}

/// Contracts every mode with its own vector; `vectors[l]` pairs with mode `l`.
pub fn contract_all<T: Scalar>(values: &[T], side: usize, vectors: &[Vec<T>]) -> T {
    let dim = vectors.len();
    let mut cur = values.to_vec();
    for l in (0..dim).rev() {
        cur = contract_mode(&cur, l + 1, side, l, &vectors[l]);
    }
    cur[0]
}

/// Contracts every mode except `keep`, leaving a vector of length `side`.
pub fn contract_all_but<T: Scalar>(
    values: &[T],
    side: usize,
    vectors: &[Vec<T>],
    keep: usize,
) -> Vec<T> {
    let dim = vectors.len();
    let mut cur = values.to_vec();
    for l in (keep + 1..dim).rev() {
        cur = contract_mode(&cur, l + 1, side, l, &vectors[l]);
    }
    let mut remaining = keep + 1;
    for vector in vectors.iter().take(keep) {
        cur = contract_mode(&cur, remaining, side, 0, vector);
        remaining -= 1;
    }
    cur
}

/// Applies the row-major `side x side` matrix along mode `axis`:
/// `out[.., i, ..] = sum_k matrix[i][k] * values[.., k, ..]`.
pub fn apply_matrix_mode<T: Scalar>(
    values: &[T],
    dim: usize,
    side: usize,
    axis: usize,
    matrix: &[T],
) -> Vec<T> {
    debug_assert_eq!(matrix.len(), side * side);
    let inner = tensor_len(dim - axis - 1, side);
    let outer = tensor_len(axis, side);
    let mut out = vec![T::zero(); values.len()];
    for o in 0..outer {
        for i in 0..side {
            let dst_start = (o * side + i) * inner;
            for k in 0..side {
                let a = matrix[i * side + k];
                if a == T::zero() {
                    continue;
                }
                let src_start = (o * side + k) * inner;
                for r in 0..inner {
                    out[dst_start + r] += a * values[src_start + r];
                }
            }
        }
    }
    out
}

/// Accumulates a sum of rank-one tensors `v_1 (x) v_2 (x) ... (x) v_p`, one per
/// point, in blocks.
///
/// Each block is reduced with a single matrix product `V_1^T W`, where `W`
/// holds the row-wise Kronecker products of the remaining modes. Block
/// results are folded into the running total with Neumaier compensation, so
/// the result depends on block composition only at the level of the
/// within-block rounding.
pub(crate) struct OuterAccumulator<T> {
    dim: usize,
    side: usize,
    rest_len: usize,
    block: usize,
    filled: usize,
    first: Vec<T>,
    rest: Vec<T>,
    scratch: Vec<T>,
    kron: Vec<T>,
    sum: Vec<T>,
    comp: Vec<T>,
}

impl<T: Scalar> OuterAccumulator<T> {
    pub(crate) fn new(dim: usize, side: usize) -> Self {
        let rest_len = tensor_len(dim - 1, side);
        let block = ((1usize << 20) / rest_len).clamp(16, 512);
        let total = side * rest_len;
        OuterAccumulator {
            dim,
            side,
            rest_len,
            block,
            filled: 0,
            first: vec![T::zero(); block * side],
            rest: vec![T::zero(); block * rest_len],
            scratch: vec![T::zero(); total],
            kron: vec![T::zero(); rest_len],
            sum: vec![T::zero(); total],
            comp: vec![T::zero(); total],
        }
    }

    /// Adds one point given its per-mode vectors, concatenated (`dim * side`).
    pub(crate) fn push(&mut self, vectors: &[T]) {
        debug_assert_eq!(vectors.len(), self.dim * self.side);
        let side = self.side;
        let slot = self.filled;
        self.first[slot * side..(slot + 1) * side].copy_from_slice(&vectors[..side]);
        let row = &mut self.rest[slot * self.rest_len..(slot + 1) * self.rest_len];
        if self.dim == 1 {
            row[0] = T::one();
        } else {
            // Expand the Kronecker product in place, growing `len` by `side` per mode.
            row[..side].copy_from_slice(&vectors[side..2 * side]);
            let mut len = side;
            for l in 2..self.dim {
                let v = &vectors[l * side..(l + 1) * side];
                self.kron[..len].copy_from_slice(&row[..len]);
                for (i, &a) in self.kron[..len].iter().enumerate() {
                    for (d, &b) in row[i * side..(i + 1) * side].iter_mut().zip(v) {
                        *d = a * b;
                    }
                }
                len *= side;
            }
        }
        self.filled += 1;
        if self.filled == self.block {
            self.flush();
        }
    }

    fn flush(&mut self) {
        if self.filled == 0 {
            return;
        }
        T::gemm_at_b(
            self.side,
            self.filled,
            self.rest_len,
            &self.first[..self.filled * self.side],
            &self.rest[..self.filled * self.rest_len],
            &mut self.scratch,
        );
        for ((s, c), &x) in self.sum.iter_mut().zip(self.comp.iter_mut()).zip(&self.scratch) {
            let t = *s + x;
            if s.abs() >= x.abs() {
                *c += (*s - t) + x;
            } else {
                *c += (x - t) + *s;
            }
            *s = t;
        }
        self.filled = 0;
    }

    pub(crate) fn finish(mut self) -> Vec<T> {
        self.flush();
        self.sum.iter().zip(&self.comp).map(|(&s, &c)| s + c).collect()
    }
}
