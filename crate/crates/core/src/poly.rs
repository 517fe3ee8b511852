//! Dense univariate polynomials with exact integration over [0, 1].

use crate::scalar::Scalar;

/// Coefficients in increasing powers: `coeffs[k]` multiplies `x^k`.
#[derive(Clone, Debug, PartialEq)]
pub struct Poly<T> {
    coeffs: Vec<T>,
}

impl<T: Scalar> Poly<T> {
    pub fn new(coeffs: Vec<T>) -> Self {
        Self { coeffs }
    }

    pub fn zero() -> Self {
        Self { coeffs: Vec::new() }
    }

    pub fn constant(c: T) -> Self {
        Self { coeffs: vec![c] }
    }

    /// `c * x^k`
    pub fn monomial(c: T, k: usize) -> Self {
        let mut coeffs = vec![T::zero(); k + 1];
        coeffs[k] = c;
        Self { coeffs }
    }

    pub fn coeffs(&self) -> &[T] {
        &self.coeffs
    }

    pub fn coeff(&self, k: usize) -> T {
        self.coeffs.get(k).cloned().unwrap_or_else(T::zero)
    }

    pub fn len(&self) -> usize {
        self.coeffs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coeffs.is_empty()
    }

    pub fn eval(&self, x: &T) -> T {
        let mut acc = T::zero();
        for c in self.coeffs.iter().rev() {
            acc = acc * x.clone() + c.clone();
        }
        acc
    }

    pub fn add(&self, other: &Self) -> Self {
        let n = self.len().max(other.len());
        Self::new((0..n).map(|k| self.coeff(k) + other.coeff(k)).collect())
    }

    pub fn sub(&self, other: &Self) -> Self {
        let n = self.len().max(other.len());
        Self::new((0..n).map(|k| self.coeff(k) - other.coeff(k)).collect())
    }

    pub fn scale(&self, c: &T) -> Self {
        Self::new(self.coeffs.iter().map(|a| a.clone() * c.clone()).collect())
    }

    pub fn mul(&self, other: &Self) -> Self {
        if self.is_empty() || other.is_empty() {
            return Self::zero();
        }
        let mut out = vec![T::zero(); self.len() + other.len() - 1];
        for (i, a) in self.coeffs.iter().enumerate() {
            if a.is_zero() {
                continue;
            }
            for (j, b) in other.coeffs.iter().enumerate() {
                out[i + j] = out[i + j].clone() + a.clone() * b.clone();
            }
        }
        Self::new(out)
    }

    pub fn pow(&self, k: u32) -> Self {
        let mut acc = Self::constant(T::one());
        for _ in 0..k {
            acc = acc.mul(self);
        }
        acc
    }

    /// `∫_0^1 p(x) x^shift dx`, exactly: sum of `c_k / (k + shift + 1)`.
    pub fn moment(&self, shift: usize) -> T {
        self.coeffs
            .iter()
            .enumerate()
            .fold(T::zero(), |acc, (k, c)| acc + c.clone() / T::from_int((k + shift + 1) as i64))
    }

    /// `∫_0^1 p(x) dx`
    pub fn integral01(&self) -> T {
        self.moment(0)
    }

    /// `p(1 - x)` via binomial expansion.
    pub fn reflect(&self) -> Self {
        let mut out = vec![T::zero(); self.len()];
        for (k, c) in self.coeffs.iter().enumerate() {
            // (1 - x)^k = sum_m C(k, m) (-x)^m
            let mut binom: i64 = 1;
            for (m, slot) in out.iter_mut().enumerate().take(k + 1) {
                let sign = if m % 2 == 0 { 1 } else { -1 };
                *slot = slot.clone() + c.clone() * T::from_int(sign * binom);
                binom = binom * (k - m) as i64 / (m + 1) as i64;
            }
        }
        Self::new(out)
    }

    /// Largest absolute coefficient, as `f64`.
    pub fn max_abs_coeff(&self) -> f64 {
        self.coeffs.iter().map(|c| c.to_f64().abs()).fold(0.0, f64::max)
    }
}

/// Lagrange basis polynomials over the given distinct nodes.
pub fn lagrange_basis<T: Scalar>(nodes: &[T]) -> Vec<Poly<T>> {
    (0..nodes.len())
        .map(|i| {
            let mut p = Poly::constant(T::one());
            for (j, cj) in nodes.iter().enumerate() {
                if j == i {
                    continue;
                }
                let denom = nodes[i].clone() - cj.clone();
                let factor = Poly::new(vec![-cj.clone() / denom.clone(), T::one() / denom]);
                p = p.mul(&factor);
            }
            p
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_rational::BigRational;

    fn q(n: i64, d: i64) -> BigRational {
        BigRational::from_ratio(n, d)
    }

    #[test]
    fn exact_moments() {
        let p = Poly::new(vec![q(1, 1), q(0, 1), q(3, 1)]);
        // ∫ (1 + 3x^2) dx = 2
        assert_eq!(p.integral01(), q(2, 1));
        // ∫ x (1 + 3x^2) dx = 1/2 + 3/4
        assert_eq!(p.moment(1), q(5, 4));
    }

    #[test]
    fn reflection_matches_evaluation() {
        let p = Poly::new(vec![q(2, 1), q(-1, 3), q(5, 2), q(7, 1)]);
        let r = p.reflect();
        for x in [q(0, 1), q(1, 3), q(3, 4), q(1, 1)] {
            assert_eq!(r.eval(&x), p.eval(&(q(1, 1) - x.clone())));
        }
    }

    #[test]
    fn lagrange_cardinality() {
        let nodes = vec![q(0, 1), q(1, 5), q(1, 2), q(4, 5)];
        let basis = lagrange_basis(&nodes);
        for (i, l) in basis.iter().enumerate() {
            for (j, x) in nodes.iter().enumerate() {
                let expect = if i == j { q(1, 1) } else { q(0, 1) };
                assert_eq!(l.eval(x), expect);
            }
        }
    }
}
