//! Trigonometric expansion of interval indicators.
//!
//! For `x` in `(0, 1)` and an interval `(a, b)` inside the closed unit
//! interval, the indicator `1(a < x < b)` expands as `sum_j c_j(x) g_j(a, b)`
//! with
//!
//! ```text
//! c_0(x) = 1,  c_{2j-1}(x) = cos((2j-1) x),  c_{2j}(x) = sin((2j-1) x)
//! g_0(a,b)      = 1 - (1(a>0) + 1(b<1)) / 2
//! g_{2j-1}(a,b) = 2/(pi (2j-1)) * (1(b<1) sin((2j-1) b) - 1(a>0) sin((2j-1) a))
//! g_{2j}(a,b)   = 2/(pi (2j-1)) * (1(a>0) cos((2j-1) a) - 1(b<1) cos((2j-1) b))
//! ```
//!
//! Arguments are in radians with no rescaling by pi: `x - c` always lies in
//! `(-1, 1)`, inside the `(-pi, pi)` window of the underlying square wave.
//! Truncating at index `2J` gives the order-`J` partial sum. Partial sums are
//! returned raw, never clamped to `[0, 1]`.

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Series longer than this are summed pairwise instead of left to right.
const PAIRWISE_THRESHOLD: usize = 1024;

/// A point strictly inside the open unit cube.
#[derive(Debug, Clone, PartialEq)]
pub struct UnitPoint<T>(Vec<T>);

impl<T: Scalar> UnitPoint<T> {
    pub fn new(coords: Vec<T>) -> Result<Self> {
        if coords.is_empty() {
            return Err(Error::DimensionMismatch {
                expected: 1,
                found: 0,
            });
        }
        for &c in &coords {
            check_open_unit(c)?;
        }
        Ok(UnitPoint(coords))
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn coords(&self) -> &[T] {
        &self.0
    }
}

/// An open axis-aligned box `(lower, upper)` inside the closed unit cube.
#[derive(Debug, Clone, PartialEq)]
pub struct Neighborhood<T> {
    lower: Vec<T>,
    upper: Vec<T>,
}

impl<T: Scalar> Neighborhood<T> {
    pub fn new(lower: Vec<T>, upper: Vec<T>) -> Result<Self> {
        if lower.len() != upper.len() {
            return Err(Error::DimensionMismatch {
                expected: lower.len(),
                found: upper.len(),
            });
        }
        if lower.is_empty() {
            return Err(Error::DimensionMismatch {
                expected: 1,
                found: 0,
            });
        }
        for (&a, &b) in lower.iter().zip(&upper) {
            check_interval(a, b)?;
        }
        Ok(Neighborhood { lower, upper })
    }

    /// The whole cube `(0, 1)^p`.
    pub fn full(p: usize) -> Self {
        Neighborhood {
            lower: vec![T::zero(); p],
            upper: vec![T::one(); p],
        }
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> &[T] {
        &self.lower
    }

    pub fn upper(&self) -> &[T] {
        &self.upper
    }

    /// The box with its upper bound on `axis` replaced by `m` (the part below a split).
    pub fn below(&self, axis: usize, m: T) -> Self {
        let mut upper = self.upper.clone();
        upper[axis] = m;
        Neighborhood {
            lower: self.lower.clone(),
            upper,
        }
    }

    /// The box with its lower bound on `axis` replaced by `m` (the part above a split).
    pub fn above(&self, axis: usize, m: T) -> Self {
        let mut lower = self.lower.clone();
        lower[axis] = m;
        Neighborhood {
            lower,
            upper: self.upper.clone(),
        }
    }

    /// Strict membership; points on a face are outside.
    pub fn contains(&self, x: &[T]) -> bool {
        x.iter()
            .zip(self.lower.iter().zip(&self.upper))
            .all(|(&v, (&a, &b))| a < v && v < b)
    }
}

pub(crate) fn check_open_unit<T: Scalar>(x: T) -> Result<()> {
    if x > T::zero() && x < T::one() {
        Ok(())
    } else {
        Err(Error::OutOfUnitInterval { value: x.as_f64() })
    }
}

pub(crate) fn check_interval<T: Scalar>(a: T, b: T) -> Result<()> {
    let ok = a >= T::zero() && a < T::one() && b > T::zero() && b <= T::one() && a < b;
    if ok {
        Ok(())
    } else {
        Err(Error::InvalidInterval {
            lower: a.as_f64(),
            upper: b.as_f64(),
        })
    }
}

/// Length `2J + 1` of the one-dimensional basis for series order `J`.
pub const fn basis_len(order: usize) -> usize {
    2 * order + 1
}

/// `c_j(x)`.
pub fn coef_c<T: Scalar>(j: usize, x: T) -> Result<T> {
    check_open_unit(x)?;
    if j == 0 {
        return Ok(T::one());
    }
    let k = T::of((2 * j.div_ceil(2) - 1) as f64);
    Ok(if j % 2 == 1 { (k * x).cos() } else { (k * x).sin() })
}

/// `g_j(a, b)`, including the boundary gates at 0 and 1.
pub fn coef_g<T: Scalar>(j: usize, a: T, b: T) -> Result<T> {
    check_interval(a, b)?;
    let lower_gate = a > T::zero();
    let upper_gate = b < T::one();
    let half = T::of(0.5);
    if j == 0 {
        let mut g = T::one();
        if lower_gate {
            g -= half;
        }
        if upper_gate {
            g -= half;
        }
        return Ok(g);
    }
    let k = T::of((2 * j.div_ceil(2) - 1) as f64);
    let kappa = T::of(2.0) / (T::PI() * k);
    let mut g = T::zero();
    if j % 2 == 1 {
        if upper_gate {
            g += (k * b).sin();
        }
        if lower_gate {
            g -= (k * a).sin();
        }
    } else {
        if lower_gate {
            g += (k * a).cos();
        }
        if upper_gate {
            g -= (k * b).cos();
        }
    }
    Ok(kappa * g)
}

/// Fills `out[0..=2J]` with `c_0(x), ..., c_{2J}(x)`. `x` is not validated.
pub fn c_vector<T: Scalar>(x: T, out: &mut [T]) {
    debug_assert!(out.len() % 2 == 1);
    out[0] = T::one();
    for j in 1..=out.len() / 2 {
        let (s, c) = (T::of((2 * j - 1) as f64) * x).sin_cos();
        out[2 * j - 1] = c;
        out[2 * j] = s;
    }
}

/// Fills `out[0..=2J]` with `g_0(a, b), ..., g_{2J}(a, b)`. Bounds are not validated.
pub fn g_vector<T: Scalar>(a: T, b: T, out: &mut [T]) {
    debug_assert!(out.len() % 2 == 1);
    let lower_gate = a > T::zero();
    let upper_gate = b < T::one();
    let half = T::of(0.5);
    let mut g0 = T::one();
    if lower_gate {
        g0 -= half;
    }
    if upper_gate {
        g0 -= half;
    }
    out[0] = g0;
    let two_over_pi = T::of(2.0) / T::PI();
    for j in 1..=out.len() / 2 {
        let k = T::of((2 * j - 1) as f64);
        let kappa = two_over_pi / k;
        let (mut odd, mut even) = (T::zero(), T::zero());
        if upper_gate {
            let (s, c) = (k * b).sin_cos();
            odd += s;
            even -= c;
        }
        if lower_gate {
            let (s, c) = (k * a).sin_cos();
            odd -= s;
            even += c;
        }
        out[2 * j - 1] = kappa * odd;
        out[2 * j] = kappa * even;
    }
}

/// Sum in index order for short series, pairwise above [`PAIRWISE_THRESHOLD`].
pub(crate) fn series_sum<T: Scalar>(terms: &[T]) -> T {
    if terms.len() <= PAIRWISE_THRESHOLD {
        terms.iter().fold(T::zero(), |acc, &t| acc + t)
    } else {
        let mid = terms.len() / 2;
        series_sum(&terms[..mid]) + series_sum(&terms[mid..])
    }
}

/// Order-`J` partial sum `1_J(x, a, b) = sum_{j=0}^{2J} c_j(x) g_j(a, b)`.
pub fn indicator_partial_sum_1d<T: Scalar>(x: T, a: T, b: T, order: usize) -> Result<T> {
    check_open_unit(x)?;
    check_interval(a, b)?;
    if order == 0 {
        return Err(Error::ZeroOrder);
    }
    let m = basis_len(order);
    let mut c = vec![T::zero(); m];
    let mut g = vec![T::zero(); m];
    c_vector(x, &mut c);
    g_vector(a, b, &mut g);
    let terms: Vec<T> = c.iter().zip(&g).map(|(&c, &g)| c * g).collect();
    Ok(series_sum(&terms))
}

/// Product form of the `p`-dimensional partial sum.
pub fn indicator_partial_sum_pd<T: Scalar>(
    x: &UnitPoint<T>,
    nb: &Neighborhood<T>,
    order: usize,
) -> Result<T> {
    if x.dim() != nb.dim() {
        return Err(Error::DimensionMismatch {
            expected: nb.dim(),
            found: x.dim(),
        });
    }
    let mut prod = T::one();
    for (l, &xl) in x.coords().iter().enumerate() {
        prod *= indicator_partial_sum_1d(xl, nb.lower[l], nb.upper[l], order)?;
    }
    Ok(prod)
}

/// Expanded form `sum_{j in N_{J,p}} prod_l c_{j_l}(x_l) g_{j_l}(a_l, b_l)`.
///
/// Costs `(2J+1)^p` products; intended for cross-checking the product form
/// on small instances.
pub fn indicator_partial_sum_pd_expanded<T: Scalar>(
    x: &UnitPoint<T>,
    nb: &Neighborhood<T>,
    order: usize,
) -> Result<T> {
    if x.dim() != nb.dim() {
        return Err(Error::DimensionMismatch {
            expected: nb.dim(),
            found: x.dim(),
        });
    }
    if order == 0 {
        return Err(Error::ZeroOrder);
    }
    let m = basis_len(order);
    let p = x.dim();
    let mut cg = Vec::with_capacity(p);
    for l in 0..p {
        check_interval(nb.lower[l], nb.upper[l])?;
        let mut c = vec![T::zero(); m];
        let mut g = vec![T::zero(); m];
        c_vector(x.coords()[l], &mut c);
        g_vector(nb.lower[l], nb.upper[l], &mut g);
        cg.push(c.iter().zip(&g).map(|(&c, &g)| c * g).collect::<Vec<T>>());
    }
    let total = m.pow(p as u32);
    let mut terms = Vec::with_capacity(total);
    let mut idx = vec![0usize; p];
    for _ in 0..total {
        terms.push(idx.iter().enumerate().fold(T::one(), |acc, (l, &j)| acc * cg[l][j]));
        for l in (0..p).rev() {
            idx[l] += 1;
            if idx[l] < m {
                break;
            }
            idx[l] = 0;
        }
    }
    Ok(series_sum(&terms))
}

/// Partial sum through `j = J` of the square wave
/// `1(z < 0) = 1/2 - (2/pi) sum_j sin((2j-1) z) / (2j-1)` on `(-pi, pi)`.
pub fn square_wave_reference<T: Scalar>(z: T, order: usize) -> Result<T> {
    if z == T::zero() || z.abs() >= T::PI() || !z.is_finite() {
        return Err(Error::SquareWaveDomain(z.as_f64()));
    }
    if order == 0 {
        return Err(Error::ZeroOrder);
    }
    let two_over_pi = T::of(2.0) / T::PI();
    let mut terms = Vec::with_capacity(order + 1);
    terms.push(T::of(0.5));
    for j in 1..=order {
        let k = T::of((2 * j - 1) as f64);
        terms.push(-two_over_pi * (k * z).sin() / k);
    }
    Ok(series_sum(&terms))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn coef_c_examples() {
        assert_eq!(coef_c(0, 0.3).unwrap(), 1.0);
        assert!((coef_c(1, 0.5f64).unwrap() - 0.8775825619).abs() < 1e-10);
        assert!((coef_c(4, 0.2f64).unwrap() - 0.5646424734).abs() < 1e-10);
        assert!((coef_c(4, 0.2).unwrap() - 0.6f64.sin()).abs() < 1e-15);
    }

    #[test]
    fn coef_c_rejects_closed_endpoints() {
        assert!(coef_c(1, 0.0).is_err());
        assert!(coef_c(1, 1.0).is_err());
        assert!(coef_c(1, -0.2).is_err());
    }

    #[test]
    fn coef_g_gates_on_full_interval() {
        assert_eq!(coef_g(0, 0.0, 1.0).unwrap(), 1.0);
        for j in 1..40 {
            assert_eq!(coef_g(j, 0.0, 1.0).unwrap(), 0.0);
        }
        assert_eq!(coef_g(0, 0.25, 0.75).unwrap(), 0.0);
    }

    #[test]
    fn coef_g_rejects_empty_interval() {
        assert!(coef_g(1, 0.5, 0.5).is_err());
        assert!(coef_g(1, 0.6, 0.5).is_err());
    }

    #[test]
    fn g_vector_matches_coef_g() {
        let mut g = vec![0.0; basis_len(9)];
        for &(a, b) in &[(0.0f64, 0.3), (0.2, 1.0), (0.1, 0.9), (0.0, 1.0)] {
            g_vector(a, b, &mut g);
            for (j, &v) in g.iter().enumerate() {
                assert!((v - coef_g(j, a, b).unwrap()).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn c_vector_matches_coef_c() {
        let mut c = vec![0.0; basis_len(9)];
        c_vector(0.37, &mut c);
        for (j, &v) in c.iter().enumerate() {
            assert_eq!(v, coef_c(j, 0.37).unwrap());
        }
    }

    #[test]
    fn full_interval_partial_sum_is_one() {
        assert_eq!(indicator_partial_sum_1d(0.3, 0.0, 1.0, 5).unwrap(), 1.0);
        let x = UnitPoint::new(vec![0.3, 0.7]).unwrap();
        for order in [1, 7, 64] {
            assert_eq!(
                indicator_partial_sum_pd(&x, &Neighborhood::full(2), order).unwrap(),
                1.0
            );
        }
    }

    #[test]
    fn partial_sum_dimension_mismatch() {
        let x = UnitPoint::new(vec![0.3, 0.7]).unwrap();
        assert!(matches!(
            indicator_partial_sum_pd(&x, &Neighborhood::<f64>::full(3), 4),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn square_wave_domain() {
        assert!(square_wave_reference(0.0, 10).is_err());
        assert!(square_wave_reference(std::f64::consts::PI, 10).is_err());
        assert!(square_wave_reference(-4.0, 10).is_err());
        assert!((square_wave_reference(-1.0f64, 4000).unwrap() - 1.0).abs() < 1e-3);
        assert!(square_wave_reference(1.0f64, 4000).unwrap().abs() < 1e-3);
    }

    #[test]
    fn pairwise_sum_agrees_with_sequential() {
        let terms: Vec<f64> = (0..5000).map(|i| 1.0 / (1.0 + i as f64)).collect();
        let seq: f64 = terms.iter().sum();
        assert!((series_sum(&terms) - seq).abs() < 1e-12);
    }

    #[test]
    fn neighborhood_validation_and_splits() {
        assert!(Neighborhood::new(vec![0.2], vec![0.2]).is_err());
        assert!(Neighborhood::new(vec![-0.1], vec![0.5]).is_err());
        assert!(Neighborhood::new(vec![0.1, 0.0], vec![0.5]).is_err());
        let nb = Neighborhood::<f64>::full(2);
        let left = nb.below(0, 0.4);
        let right = nb.above(0, 0.4);
        assert_eq!(left.upper(), &[0.4, 1.0]);
        assert_eq!(right.lower(), &[0.4, 0.0]);
        assert!(left.contains(&[0.3, 0.5]));
        assert!(!left.contains(&[0.4, 0.5]));
        assert!(!right.contains(&[0.4, 0.5]));
    }
}
