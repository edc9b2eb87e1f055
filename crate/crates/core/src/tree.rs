//! Approximate and exact k-d trees, and cell audits.
//!
//! Nodes are kept in level order: the node at depth `d` (1-based) with cell
//! index `k` (1-based) sits at `2^(d-1) - 1 + (k - 1)`, and its children are
//! cells `2k - 1` (below the split) and `2k` (above) at depth `d + 1`. The
//! split axis cycles with depth, `axis = (d - 1) mod p`.

use std::time::{Duration, Instant};

use rayon::prelude::*;

use crate::basis::Neighborhood;
use crate::error::{Error, Result};
use crate::factorized::AccuracyParameter;
use crate::scalar::Scalar;
use crate::sketch::{marginal_weights, PointSet, SketchTensor};

/// Grid size of the root search.
pub const ROOT_GRID: usize = 256;
/// Distance kept from the interval ends by the root search.
pub const ROOT_MARGIN: f64 = 1e-9;
/// Bisection stops once the bracket is this narrow.
pub const BISECTION_WIDTH: f64 = 1e-12;
/// Roots with `|h|` at most this are treated as equally good.
pub const ROOT_TOLERANCE: f64 = 1e-9;
/// Deepest tree accepted.
pub const MAX_DEPTH: usize = 40;

/// The balance function `h(m) = count(a, b_{-t}(m)) - count(a_{-t}(m), b)`
/// of one node, reduced to a short trigonometric series in `m`.
#[derive(Debug, Clone)]
pub struct SplitEquation<T> {
    lower: T,
    upper: T,
    constant: T,
    /// `(k, 2 kappa w_odd, -2 kappa w_even)` per harmonic `k = 2j - 1`.
    terms: Vec<(T, T, T)>,
}

impl<T: Scalar> SplitEquation<T> {
    pub fn new(sketch: &SketchTensor<T>, nb: &Neighborhood<T>, axis: usize) -> Result<Self> {
        if axis >= sketch.dim() {
            return Err(Error::DimensionMismatch {
                expected: sketch.dim(),
                found: axis + 1,
            });
        }
        let w = marginal_weights(sketch, nb, axis)?;
        let (a, b) = (nb.lower()[axis], nb.upper()[axis]);
        let (ga, gb) = (a > T::zero(), b < T::one());
        let half = T::of(0.5);
        let two = T::of(2.0);
        let mut constant = T::zero();
        if gb {
            constant += half * w[0];
        }
        if ga {
            constant -= half * w[0];
        }
        let mut terms = Vec::with_capacity(sketch.order());
        for j in 1..=sketch.order() {
            let k = T::of((2 * j - 1) as f64);
            let kappa = two / (T::PI() * k);
            let (wo, we) = (w[2 * j - 1], w[2 * j]);
            if ga {
                let (s, c) = (k * a).sin_cos();
                constant += kappa * (we * c - wo * s);
            }
            if gb {
                let (s, c) = (k * b).sin_cos();
                constant += kappa * (we * c - wo * s);
            }
            terms.push((k, two * kappa * wo, -two * kappa * we));
        }
        Ok(SplitEquation {
            lower: a,
            upper: b,
            constant,
            terms,
        })
    }

    pub fn interval(&self) -> (T, T) {
        (self.lower, self.upper)
    }

    pub fn eval(&self, m: T) -> T {
        let mut h = self.constant;
        for &(k, s_coef, c_coef) in &self.terms {
            let (s, c) = (k * m).sin_cos();
            h += s_coef * s + c_coef * c;
        }
        h
    }
}

/// Result of one median solve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MedianSolution<T> {
    pub value: T,
    /// `h` at `value`.
    pub residual: T,
    /// No sign change was found; `value` is the grid minimizer of `|h|`.
    pub degenerate: bool,
}

/// Solves the balance equation of `nb` along `axis` from the sketch alone.
pub fn solve_median<T: Scalar>(
    sketch: &SketchTensor<T>,
    nb: &Neighborhood<T>,
    axis: usize,
) -> Result<MedianSolution<T>> {
    Ok(solve_equation(&SplitEquation::new(sketch, nb, axis)?))
}

/// Grid scan, bisection of every bracket, and root selection.
pub fn solve_equation<T: Scalar>(eq: &SplitEquation<T>) -> MedianSolution<T> {
    let (a, b) = eq.interval();
    let margin = T::of(ROOT_MARGIN);
    let (lo, hi) = if b - a > T::of(4.0) * margin {
        (a + margin, b - margin)
    } else {
        let mid = (a + b) * T::of(0.5);
        (mid, mid)
    };
    let step = (hi - lo) / T::of((ROOT_GRID - 1) as f64);
    let grid: Vec<T> = (0..ROOT_GRID)
        .map(|i| if i + 1 == ROOT_GRID { hi } else { lo + step * T::of(i as f64) })
        .collect();
    let values: Vec<T> = grid.iter().map(|&m| eq.eval(m)).collect();

    let mut roots: Vec<(T, T)> = Vec::new();
    for i in 0..ROOT_GRID - 1 {
        let (h0, h1) = (values[i], values[i + 1]);
        if h0 == T::zero() {
            roots.push((grid[i], h0));
        } else if (h0 < T::zero()) != (h1 < T::zero()) && h1 != T::zero() {
            roots.push(bisect(eq, grid[i], grid[i + 1], h0));
        }
    }
    if values[ROOT_GRID - 1] == T::zero() {
        roots.push((grid[ROOT_GRID - 1], T::zero()));
    }

    if roots.is_empty() {
        let i = (0..ROOT_GRID)
            .min_by(|&i, &j| values[i].abs().partial_cmp(&values[j].abs()).expect("finite h"))
            .expect("non-empty grid");
        return MedianSolution {
            value: grid[i],
            residual: values[i],
            degenerate: true,
        };
    }

    let mid = (a + b) * T::of(0.5);
    let tol = T::of(ROOT_TOLERANCE);
    let tied: Vec<&(T, T)> = roots.iter().filter(|r| r.1.abs() <= tol).collect();
    let best = if tied.is_empty() {
        roots
            .iter()
            .min_by(|x, y| x.1.abs().partial_cmp(&y.1.abs()).expect("finite h"))
            .expect("non-empty roots")
    } else {
        tied.into_iter()
            .min_by(|x, y| (x.0 - mid).abs().partial_cmp(&(y.0 - mid).abs()).expect("finite m"))
            .expect("non-empty ties")
    };
    MedianSolution {
        value: best.0,
        residual: best.1,
        degenerate: false,
    }
}

/// Bisects a sign-change bracket; returns the endpoint or midpoint with the smallest `|h|`.
fn bisect<T: Scalar>(eq: &SplitEquation<T>, mut lo: T, mut hi: T, mut h_lo: T) -> (T, T) {
    let width = T::of(BISECTION_WIDTH);
    let mut best = (lo, h_lo);
    let h_hi = eq.eval(hi);
    if h_hi.abs() < best.1.abs() {
        best = (hi, h_hi);
    }
    while hi - lo > width {
        let mid = (lo + hi) * T::of(0.5);
        if mid <= lo || mid >= hi {
            break;
        }
        let h_mid = eq.eval(mid);
        if h_mid.abs() < best.1.abs() {
            best = (mid, h_mid);
        }
        if h_mid == T::zero() {
            break;
        }
        if (h_mid < T::zero()) == (h_lo < T::zero()) {
            lo = mid;
            h_lo = h_mid;
        } else {
            hi = mid;
        }
    }
    best
}

/// One internal node.
#[derive(Debug, Clone, PartialEq)]
pub struct KdNode<T> {
    /// 1-based depth.
    pub depth: usize,
    /// 1-based index among the `2^(depth-1)` nodes of its level.
    pub cell: usize,
    /// 0-based split coordinate.
    pub axis: usize,
    pub region: Neighborhood<T>,
    pub split: T,
    pub degenerate: bool,
}

/// A complete k-d tree of fixed depth in level order.
#[derive(Debug, Clone, PartialEq)]
pub struct KdTree<T> {
    depth: usize,
    dim: usize,
    nodes: Vec<KdNode<T>>,
    /// `None` for trees built from exact medians.
    accuracy: Option<AccuracyParameter>,
    count: u64,
}

/// Level-order position of node `(depth, cell)`.
pub fn node_position(depth: usize, cell: usize) -> usize {
    (1usize << (depth - 1)) - 1 + (cell - 1)
}

/// Split axis used at a 1-based depth.
pub fn axis_at(depth: usize, dim: usize) -> usize {
    (depth - 1) % dim
}

impl<T: Scalar> KdTree<T> {
    /// Reassembles a tree from level-order `(split, degenerate)` pairs,
    /// rebuilding regions and checking every split lies inside its region.
    pub fn from_splits(
        dim: usize,
        depth: usize,
        accuracy: Option<AccuracyParameter>,
        count: u64,
        splits: &[(T, bool)],
    ) -> Result<Self> {
        check_depth(depth)?;
        if dim == 0 {
            return Err(Error::DimensionMismatch { expected: 1, found: 0 });
        }
        let expected = (1usize << depth) - 1;
        if splits.len() != expected {
            return Err(Error::ShapeMismatch(format!(
                "depth {depth} needs {expected} nodes, found {}",
                splits.len()
            )));
        }
        let mut nodes: Vec<KdNode<T>> = Vec::with_capacity(expected);
        for d in 1..=depth {
            let axis = axis_at(d, dim);
            for k in 1..=(1usize << (d - 1)) {
                let region = if d == 1 {
                    Neighborhood::full(dim)
                } else {
                    let parent = &nodes[node_position(d - 1, k.div_ceil(2))];
                    child_region(parent, k % 2 == 1)
                };
                let (split, degenerate) = splits[node_position(d, k)];
                let (a, b) = (region.lower()[axis], region.upper()[axis]);
                if !(a < split && split < b) {
                    return Err(Error::ShapeMismatch(format!(
                        "node ({d}, {k}): split {split} outside ({a}, {b})"
                    )));
                }
                nodes.push(KdNode {
                    depth: d,
                    cell: k,
                    axis,
                    region,
                    split,
                    degenerate,
                });
            }
        }
        Ok(KdTree {
            depth,
            dim,
            nodes,
            accuracy,
            count,
        })
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn nodes(&self) -> &[KdNode<T>] {
        &self.nodes
    }

    pub fn node(&self, depth: usize, cell: usize) -> &KdNode<T> {
        &self.nodes[node_position(depth, cell)]
    }

    pub fn accuracy(&self) -> Option<&AccuracyParameter> {
        self.accuracy.as_ref()
    }

    /// Number of points the tree was built from.
    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn degenerate_count(&self) -> usize {
        self.nodes.iter().filter(|n| n.degenerate).count()
    }

    /// The tree cut at a shallower depth.
    pub fn truncated(&self, depth: usize) -> Result<Self> {
        if depth == 0 || depth > self.depth {
            return Err(Error::InvalidDepth {
                depth,
                reason: format!("must be between 1 and {}", self.depth),
            });
        }
        Ok(KdTree {
            depth,
            nodes: self.nodes[..(1usize << depth) - 1].to_vec(),
            accuracy: self.accuracy.clone(),
            ..*self
        })
    }

    /// The `2^D` leaf cells, left to right.
    pub fn leaf_regions(&self) -> Vec<Neighborhood<T>> {
        let last = 1usize << (self.depth - 1);
        (1..=last)
            .flat_map(|k| {
                let node = self.node(self.depth, k);
                [child_region(node, true), child_region(node, false)]
            })
            .collect()
    }

    /// Checks that every child region is its parent region cut at the parent's split.
    pub fn check_tiling(&self) -> Result<()> {
        for node in &self.nodes {
            if node.depth == self.depth {
                continue;
            }
            for (cell, below) in [(2 * node.cell - 1, true), (2 * node.cell, false)] {
                let child = self.node(node.depth + 1, cell);
                if child.region != child_region(node, below) {
                    return Err(Error::ShapeMismatch(format!(
                        "node ({}, {cell}) does not tile its parent",
                        node.depth + 1
                    )));
                }
            }
        }
        Ok(())
    }

    /// 1-based leaf index of `x`, or `None` if it lies on a splitting hyperplane.
    pub fn locate(&self, x: &[T]) -> Option<usize> {
        let mut pos = 0;
        let mut cell = 1;
        for _ in 0..self.depth {
            let node = &self.nodes[pos];
            let v = x[node.axis];
            cell = if v < node.split {
                2 * node.cell - 1
            } else if v > node.split {
                2 * node.cell
            } else {
                return None;
            };
            pos = 2 * pos + 1 + usize::from(v > node.split);
        }
        Some(cell)
    }
}

fn child_region<T: Scalar>(parent: &KdNode<T>, below: bool) -> Neighborhood<T> {
    if below {
        parent.region.below(parent.axis, parent.split)
    } else {
        parent.region.above(parent.axis, parent.split)
    }
}

fn check_depth(depth: usize) -> Result<()> {
    if depth == 0 || depth > MAX_DEPTH {
        return Err(Error::InvalidDepth {
            depth,
            reason: format!("must be between 1 and {MAX_DEPTH}"),
        });
    }
    Ok(())
}

/// Options for [`build_tree`].
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TreeOptions {
    /// Smallest allowed expected leaf fraction `2^-D`; defaults to `10 / n`.
    pub leaf_floor: Option<f64>,
}

/// Summary of a sketch-based build.
#[derive(Debug, Clone, PartialEq)]
pub struct BuildReport {
    pub degenerate: usize,
    pub elapsed: Duration,
}

/// Builds the depth-`depth` tree from a standardized sketch, one level at a time.
pub fn build_tree<T: Scalar>(
    sketch: &SketchTensor<T>,
    depth: usize,
    options: &TreeOptions,
) -> Result<(KdTree<T>, BuildReport)> {
    check_depth(depth)?;
    if !sketch.is_standardized() {
        return Err(Error::NotStandardized);
    }
    let floor = options
        .leaf_floor
        .unwrap_or_else(|| if sketch.count() > 0 { 10.0 / sketch.count() as f64 } else { 0.0 });
    let leaf_fraction = 0.5f64.powi(depth as i32);
    if leaf_fraction < floor {
        return Err(Error::InvalidDepth {
            depth,
            reason: format!("expected leaf fraction {leaf_fraction:e} is below the floor {floor:e}"),
        });
    }

    let start = Instant::now();
    let dim = sketch.dim();
    let mut nodes: Vec<KdNode<T>> = Vec::with_capacity((1 << depth) - 1);
    let mut frontier = vec![Neighborhood::full(dim)];
    for d in 1..=depth {
        let axis = axis_at(d, dim);
        let solved = frontier
            .par_iter()
            .map(|nb| solve_median(sketch, nb, axis))
            .collect::<Result<Vec<_>>>()?;
        let mut next = Vec::with_capacity(2 * frontier.len());
        for (i, (region, sol)) in frontier.into_iter().zip(solved).enumerate() {
            next.push(region.below(axis, sol.value));
            next.push(region.above(axis, sol.value));
            nodes.push(KdNode {
                depth: d,
                cell: i + 1,
                axis,
                region,
                split: sol.value,
                degenerate: sol.degenerate,
            });
        }
        frontier = next;
    }
    let tree = KdTree {
        depth,
        dim,
        nodes,
        accuracy: Some(sketch.accuracy().clone()),
        count: sketch.count(),
    };
    let report = BuildReport {
        degenerate: tree.degenerate_count(),
        elapsed: start.elapsed(),
    };
    Ok((tree, report))
}

/// The canonical tree: every split is the lower median of the points
/// strictly inside the node's region. Points equal to a split go to neither side.
pub fn build_exact_tree<T: Scalar>(points: &PointSet<T>, depth: usize) -> Result<KdTree<T>> {
    check_depth(depth)?;
    let n = points.len();
    if n < (1usize << depth) {
        return Err(Error::InsufficientPoints {
            needed: 1 << depth,
            found: n,
        });
    }
    let dim = points.dim();
    let mut nodes: Vec<KdNode<T>> = Vec::with_capacity((1 << depth) - 1);
    let mut frontier: Vec<(Neighborhood<T>, Vec<usize>)> = vec![(Neighborhood::full(dim), (0..n).collect())];
    for d in 1..=depth {
        let axis = axis_at(d, dim);
        let mut next = Vec::with_capacity(2 * frontier.len());
        for (i, (region, members)) in frontier.into_iter().enumerate() {
            let (split, degenerate) = if members.is_empty() {
                let (a, b) = (region.lower()[axis], region.upper()[axis]);
                ((a + b) * T::of(0.5), true)
            } else {
                let mut vals: Vec<T> = members.iter().map(|&m| points.point(m)[axis]).collect();
                let k = vals.len().div_ceil(2) - 1;
                let (_, &mut median, _) = vals.select_nth_unstable_by(k, |x, y| x.partial_cmp(y).expect("finite"));
                (median, false)
            };
            let (below, above): (Vec<usize>, Vec<usize>) = {
                let mut below = Vec::new();
                let mut above = Vec::new();
                for m in members {
                    let v = points.point(m)[axis];
                    if v < split {
                        below.push(m);
                    } else if v > split {
                        above.push(m);
                    }
                }
                (below, above)
            };
            next.push((region.below(axis, split), below));
            next.push((region.above(axis, split), above));
            nodes.push(KdNode {
                depth: d,
                cell: i + 1,
                axis,
                region,
                split,
                degenerate,
            });
        }
        frontier = next;
    }
    Ok(KdTree {
        depth,
        dim,
        nodes,
        accuracy: None,
        count: n as u64,
    })
}

/// Exact per-leaf counts of a tree over a point set.
#[derive(Debug, Clone, PartialEq)]
pub struct CellAudit {
    pub depth: usize,
    pub n: u64,
    /// Leaf counts, left to right.
    pub counts: Vec<u64>,
    /// Points lying on a splitting hyperplane.
    pub discarded: u64,
}

/// Counts the points of every leaf with strict inequalities.
pub fn audit_cells<T: Scalar>(tree: &KdTree<T>, points: &PointSet<T>) -> Result<CellAudit> {
    if points.dim() != tree.dim() {
        return Err(Error::DimensionMismatch {
            expected: tree.dim(),
            found: points.dim(),
        });
    }
    let mut counts = vec![0u64; 1 << tree.depth()];
    let mut discarded = 0;
    for x in points.iter() {
        match tree.locate(x) {
            Some(k) => counts[k - 1] += 1,
            None => discarded += 1,
        }
    }
    Ok(CellAudit {
        depth: tree.depth(),
        n: points.len() as u64,
        counts,
        discarded,
    })
}

impl CellAudit {
    /// Ideal leaf count `n / 2^D`.
    pub fn ideal(&self) -> f64 {
        self.n as f64 / self.counts.len() as f64
    }

    /// `count - n / 2^D` per leaf.
    pub fn abs_deviations(&self) -> Vec<f64> {
        let ideal = self.ideal();
        self.counts.iter().map(|&c| c as f64 - ideal).collect()
    }

    /// `(count - n / 2^D) / (n / 2^D)` per leaf.
    pub fn rel_deviations(&self) -> Vec<f64> {
        let ideal = self.ideal();
        self.counts.iter().map(|&c| (c as f64 - ideal) / ideal).collect()
    }

    /// `(count - n / 2^D) / n` per leaf.
    pub fn frac_deviations(&self) -> Vec<f64> {
        let n = self.n as f64;
        self.abs_deviations().iter().map(|d| d / n).collect()
    }

    pub fn log2_counts(&self) -> Vec<f64> {
        self.counts.iter().map(|&c| (c as f64).log2()).collect()
    }

    pub fn max_abs_deviation(&self) -> f64 {
        self.abs_deviations().iter().fold(0.0, |m, d| m.max(d.abs()))
    }

    pub fn max_rel_deviation(&self) -> f64 {
        self.rel_deviations().iter().fold(0.0, |m, d| m.max(d.abs()))
    }

    pub fn mean_abs_rel_deviation(&self) -> f64 {
        let d = self.rel_deviations();
        d.iter().map(|v| v.abs()).sum::<f64>() / d.len() as f64
    }

    /// `[min, q1, median, q3, max]` of the leaf log2-counts (linear interpolation).
    pub fn log2_quantiles(&self) -> [f64; 5] {
        let mut v = self.log2_counts();
        v.sort_by(f64::total_cmp);
        [0.0, 0.25, 0.5, 0.75, 1.0].map(|q| quantile_sorted(&v, q))
    }

    /// Leaf counts plus discarded points; equals `n`.
    pub fn total(&self) -> u64 {
        self.counts.iter().sum::<u64>() + self.discarded
    }
}

/// Quantile of sorted data with linear interpolation between order statistics.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let pos = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let (lo, hi) = (pos.floor() as usize, pos.ceil() as usize);
    let (a, b) = (sorted[lo], sorted[hi]);
    if lo == hi || a == b {
        a
    } else {
        a + (b - a) * (pos - lo as f64)
    }
}
