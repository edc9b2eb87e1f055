//! Dense univariate polynomials over an arbitrary field and an exact
//! construction of the factorized-to-standard basis change.
//!
//! With `c = cos z` and `s = sin z`, every standard basis function is either a
//! polynomial in `c` (`cos((2j-1)z) = T_{2j-1}(c)`) or `s` times one
//! (`sin((2j-1)z) = s U_{2j-2}(c)`), and the same holds for the factorized
//! functions because `cos(2Lz) = T_{2L}(c)`. Both families therefore live in
//! the monomial coordinates `{c^odd} + {s c^even}` and the change of basis is
//! a pair of square linear solves, done here in exact rational arithmetic.

use std::ops::{Add, Mul, Sub};

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{Num, ToPrimitive, Zero};

use crate::error::{Error, Result};
use crate::factorized::AccuracyParameter;

/// Polynomial `sum_k coeffs[k] x^k`.
#[derive(Debug, Clone, PartialEq)]
pub struct Poly<T> {
    coeffs: Vec<T>,
}

impl<T: Num + Clone> Poly<T> {
    pub fn new(mut coeffs: Vec<T>) -> Self {
        while coeffs.len() > 1 && coeffs.last().is_some_and(Zero::is_zero) {
            coeffs.pop();
        }
        if coeffs.is_empty() {
            coeffs.push(T::zero());
        }
        Poly { coeffs }
    }

    pub fn constant(v: T) -> Self {
        Poly::new(vec![v])
    }

    pub fn one() -> Self {
        Poly::constant(T::one())
    }

    /// The monomial `x^k`.
    pub fn monomial(k: usize) -> Self {
        let mut coeffs = vec![T::zero(); k + 1];
        coeffs[k] = T::one();
        Poly { coeffs }
    }

    pub fn coeffs(&self) -> &[T] {
        &self.coeffs
    }

    /// Coefficient of `x^k`, zero past the degree.
    pub fn coeff(&self, k: usize) -> T {
        self.coeffs.get(k).cloned().unwrap_or_else(T::zero)
    }

    pub fn degree(&self) -> usize {
        self.coeffs.len() - 1
    }

    pub fn scale(&self, k: T) -> Self {
        Poly::new(self.coeffs.iter().map(|c| c.clone() * k.clone()).collect())
    }

    pub fn pow(&self, mut e: usize) -> Self {
        let mut base = self.clone();
        let mut acc = Poly::one();
        while e > 0 {
            if e & 1 == 1 {
                acc = &acc * &base;
            }
            base = &base * &base;
            e >>= 1;
        }
        acc
    }

    /// Horner evaluation.
    pub fn eval(&self, x: T) -> T {
        self.coeffs
            .iter()
            .rev()
            .fold(T::zero(), |acc, c| acc * x.clone() + c.clone())
    }
}

impl<T: Num + Clone> Add for &Poly<T> {
    type Output = Poly<T>;
    fn add(self, rhs: &Poly<T>) -> Poly<T> {
        let n = self.coeffs.len().max(rhs.coeffs.len());
        Poly::new((0..n).map(|k| self.coeff(k) + rhs.coeff(k)).collect())
    }
}

impl<T: Num + Clone> Sub for &Poly<T> {
    type Output = Poly<T>;
    fn sub(self, rhs: &Poly<T>) -> Poly<T> {
        let n = self.coeffs.len().max(rhs.coeffs.len());
        Poly::new((0..n).map(|k| self.coeff(k) - rhs.coeff(k)).collect())
    }
}

impl<T: Num + Clone> Mul for &Poly<T> {
    type Output = Poly<T>;
    fn mul(self, rhs: &Poly<T>) -> Poly<T> {
        let mut out = vec![T::zero(); self.coeffs.len() + rhs.coeffs.len() - 1];
        for (i, a) in self.coeffs.iter().enumerate() {
            if a.is_zero() {
                continue;
            }
            for (j, b) in rhs.coeffs.iter().enumerate() {
                out[i + j] = out[i + j].clone() + a.clone() * b.clone();
            }
        }
        Poly::new(out)
    }
}

/// Chebyshev polynomials of the first kind `T_0..=T_n`, by the three-term recurrence.
pub fn chebyshev_t<T: Num + Clone>(n: usize) -> Vec<Poly<T>> {
    chebyshev(n, Poly::monomial(1))
}

/// Chebyshev polynomials of the second kind `U_0..=U_n`.
pub fn chebyshev_u<T: Num + Clone>(n: usize) -> Vec<Poly<T>> {
    let two = T::one() + T::one();
    chebyshev(n, Poly::monomial(1).scale(two))
}

fn chebyshev<T: Num + Clone>(n: usize, first: Poly<T>) -> Vec<Poly<T>> {
    let two_x = Poly::monomial(1).scale(T::one() + T::one());
    let mut out = vec![Poly::one()];
    if n >= 1 {
        out.push(first);
    }
    for k in 2..=n {
        let next = &(&two_x * &out[k - 1]) - &out[k - 2];
        out.push(next);
    }
    out
}

/// A basis function of the form `P(c)` (`with_sine == false`) or `s P(c)`.
#[derive(Debug, Clone, PartialEq)]
pub struct TrigPoly<T> {
    pub with_sine: bool,
    pub poly: Poly<T>,
}

/// The standard basis functions `c_1..c_{2J}` as polynomials in `cos z`.
pub fn standard_trig_polys<T: Num + Clone>(order: usize) -> Vec<TrigPoly<T>> {
    let t = chebyshev_t::<T>(2 * order);
    let u = chebyshev_u::<T>(2 * order);
    (1..=order)
        .flat_map(|j| {
            [
                TrigPoly {
                    with_sine: false,
                    poly: t[2 * j - 1].clone(),
                },
                TrigPoly {
                    with_sine: true,
                    poly: u[2 * j - 2].clone(),
                },
            ]
        })
        .collect()
}

/// The non-constant factorized basis functions in flat order.
pub fn factorized_trig_polys<T: Num + Clone>(acc: &AccuracyParameter) -> Vec<TrigPoly<T>> {
    let parts = acc.parts();
    let prefixes = acc.prefixes();
    let cheb = chebyshev_t::<T>(2 * prefixes.last().copied().unwrap_or(0));
    let mut out: Vec<TrigPoly<T>> = (1..=2 * parts[0])
        .map(|j1| {
            let r = j1.div_ceil(2);
            if j1 % 2 == 1 {
                TrigPoly {
                    with_sine: false,
                    poly: Poly::monomial(2 * r - 1),
                }
            } else {
                TrigPoly {
                    with_sine: true,
                    poly: Poly::monomial(2 * r - 2),
                }
            }
        })
        .collect();
    for (k, &jk) in parts.iter().enumerate().skip(1) {
        let base = &cheb[2 * prefixes[k - 1]];
        let powers: Vec<Poly<T>> = (0..jk).map(|e| base.pow(e)).collect();
        out = out
            .iter()
            .flat_map(|f| {
                powers.iter().map(move |pw| TrigPoly {
                    with_sine: f.with_sine,
                    poly: &f.poly * pw,
                })
            })
            .collect();
    }
    out
}

/// Exact `(2J+1) x (2J+1)` row-major matrix `A` with `c(z) = A c~(z)`.
pub fn exact_transform_1d(acc: &AccuracyParameter) -> Result<Vec<BigRational>> {
    let order = acc.order();
    let side = 2 * order + 1;
    let standard = standard_trig_polys::<BigRational>(order);
    let factorized = factorized_trig_polys::<BigRational>(acc);
    let mut a = vec![BigRational::zero(); side * side];
    a[0] = BigRational::from_integer(BigInt::from(1));

    for with_sine in [false, true] {
        let cols: Vec<usize> = (0..factorized.len())
            .filter(|&i| factorized[i].with_sine == with_sine)
            .collect();
        if cols.len() != order {
            return Err(Error::SingularTransform(format!(
                "factorized family has {} functions, expected {order}",
                cols.len()
            )));
        }
        // Within a family every factorized function has a distinct degree, so
        // the system is triangular in the monomial basis: peel off the top
        // degree of the target until nothing is left.
        let mut by_degree: Vec<Option<usize>> = vec![None; 2 * order + 1];
        for &fi in &cols {
            let d = factorized[fi].poly.degree();
            if d >= by_degree.len() || by_degree[d].replace(fi).is_some() {
                return Err(Error::SingularTransform(format!(
                    "factorized basis for {acc} is linearly dependent"
                )));
            }
        }
        for (si, f) in standard.iter().enumerate().filter(|(_, f)| f.with_sine == with_sine) {
            let mut rest = f.poly.clone();
            while !rest.coeffs().iter().all(|c| c.is_zero()) {
                let d = rest.degree();
                let fi = by_degree.get(d).copied().flatten().ok_or_else(|| {
                    Error::SingularTransform(format!("degree {d} is not spanned by the factorized basis for {acc}"))
                })?;
                let basis = &factorized[fi].poly;
                let x = rest.coeff(d) / basis.coeff(d);
                rest = &rest - &basis.scale(x.clone());
                a[(si + 1) * side + fi + 1] = x;
            }
        }
    }
    Ok(a)
}

/// Nearest `f64` to a rational.
pub fn rational_to_f64(r: &BigRational) -> f64 {
    r.to_f64().unwrap_or(f64::NAN)
}
