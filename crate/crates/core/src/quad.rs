//! Gauss–Legendre quadrature on `[0, 1]` with adaptive doubling.

use std::sync::OnceLock;

use crate::error::{Error, Result};

pub const MAX_NODES: usize = 64;
pub const DEFAULT_TOL: f64 = 1e-12;
pub const DEFAULT_START: usize = 8;

#[derive(Clone, Debug, PartialEq)]
pub struct QuadratureRule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl QuadratureRule {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn integrate(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.nodes.iter().zip(&self.weights).map(|(&x, &w)| w * f(x)).sum()
    }
}

/// `P_n(x)` and `P_n'(x)` on `[-1, 1]` by the three-term recurrence.
fn legendre(n: usize, x: f64) -> (f64, f64) {
    let (mut p0, mut p1) = (1.0, x);
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, dp)
}

fn compute_rule(n: usize) -> QuadratureRule {
    if n == 1 {
        return QuadratureRule {
            nodes: vec![0.5],
            weights: vec![1.0],
        };
    }
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let nf = n as f64;
    for i in 0..n.div_ceil(2) {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
        for _ in 0..100 {
            let (p, dp) = legendre(n, x);
            let dx = p / dp;
            x -= dx;
            if dx.abs() <= 1e-16 {
                break;
            }
        }
        let (_, dp) = legendre(n, x);
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        // Map [-1, 1] to [0, 1]; store in increasing order.
        nodes[i] = 0.5 * (1.0 - x);
        nodes[n - 1 - i] = 0.5 * (1.0 + x);
        weights[i] = 0.5 * w;
        weights[n - 1 - i] = 0.5 * w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.5;
    }
    QuadratureRule { nodes, weights }
}

fn rules() -> &'static [QuadratureRule] {
    static RULES: OnceLock<Vec<QuadratureRule>> = OnceLock::new();
    RULES.get_or_init(|| (1..=MAX_NODES).map(compute_rule).collect())
}

/// The `n`-point Gauss–Legendre rule on `[0, 1]`, exact for degree `2n − 1`.
pub fn gauss_legendre(n: usize) -> Result<&'static QuadratureRule> {
    if !(1..=MAX_NODES).contains(&n) {
        return Err(Error::InvalidParameter(format!(
            "Gauss-Legendre rule needs 1 <= n <= {MAX_NODES}, got {n}"
        )));
    }
    Ok(&rules()[n - 1])
}

fn apply<F>(rule: &QuadratureRule, f: &mut F) -> Result<Vec<f64>>
where
    F: FnMut(f64) -> Result<Vec<f64>>,
{
    let mut acc: Vec<f64> = Vec::new();
    for (&x, &w) in rule.nodes.iter().zip(&rule.weights) {
        let v = f(x)?;
        if acc.is_empty() {
            acc = vec![0.0; v.len()];
        } else if v.len() != acc.len() {
            return Err(Error::InvalidParameter("integrand changed length between nodes".into()));
        }
        for (a, vi) in acc.iter_mut().zip(&v) {
            *a += w * vi;
        }
    }
    if acc.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("quadrature"));
    }
    Ok(acc)
}

/// Integrates a vector-valued `f` over `[0, 1]`.
///
/// Rules of `n` and `2n` points are compared, doubling from `start` up to `cap`
/// nodes. The finer estimate is accepted once the max-norm gap is at most
/// `tol · max(1, ‖estimate‖∞)`.
pub fn integrate_vec<F>(f: F, tol: f64, start: usize, cap: usize) -> Result<Vec<f64>>
where
    F: FnMut(f64) -> Result<Vec<f64>>,
{
    integrate_vec_counted(f, tol, start, cap).map(|(v, _)| v)
}

/// [`integrate_vec`], also returning the size of the coarse rule at acceptance.
/// Passing it back as `start` reproduces the same pair of rules.
pub fn integrate_vec_counted<F>(mut f: F, tol: f64, start: usize, cap: usize) -> Result<(Vec<f64>, usize)>
where
    F: FnMut(f64) -> Result<Vec<f64>>,
{
    if !(tol > 0.0) {
        return Err(Error::InvalidParameter(format!("quadrature tolerance must be positive, got {tol}")));
    }
    let cap = cap.min(MAX_NODES);
    let mut n = start.max(1);
    if n > cap {
        return Err(Error::InvalidParameter(format!("start {n} exceeds node cap {cap}")));
    }
    let mut coarse = apply(gauss_legendre(n)?, &mut f)?;
    loop {
        let m = 2 * n;
        if m > cap {
            // Not enough room to double: only an exact single-rule request can succeed.
            return Err(Error::QuadratureNotConverged {
                nodes: n,
                gap: f64::INFINITY,
                tol,
                estimate: coarse,
            });
        }
        let fine = apply(gauss_legendre(m)?, &mut f)?;
        let gap = coarse.iter().zip(&fine).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        let scale = fine.iter().map(|v| v.abs()).fold(1.0, f64::max);
        if gap <= tol * scale {
            return Ok((fine, n));
        }
        if 2 * m > cap {
            return Err(Error::QuadratureNotConverged {
                nodes: m,
                gap,
                tol,
                estimate: fine,
            });
        }
        coarse = fine;
        n = m;
    }
}

/// [`integrate_vec`] with the default start (8) and cap (64).
pub fn integrate_default<F>(f: F, tol: f64) -> Result<Vec<f64>>
where
    F: FnMut(f64) -> Result<Vec<f64>>,
{
    integrate_vec(f, tol, DEFAULT_START, MAX_NODES)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn small_rules() {
        let r1 = gauss_legendre(1).unwrap();
        assert_eq!(r1.nodes, vec![0.5]);
        assert_eq!(r1.weights, vec![1.0]);
        let r2 = gauss_legendre(2).unwrap();
        let d = 3f64.sqrt() / 6.0;
        assert!((r2.nodes[0] - (0.5 - d)).abs() < 1e-15);
        assert!((r2.nodes[1] - (0.5 + d)).abs() < 1e-15);
        assert!(r2.weights.iter().all(|w| (w - 0.5).abs() < 1e-15));
        assert!(gauss_legendre(0).is_err());
        assert!(gauss_legendre(65).is_err());
    }

    #[test]
    fn exactness_degree() {
        let r5 = gauss_legendre(5).unwrap();
        assert!((r5.integrate(|x| x.powi(8)) - 1.0 / 9.0).abs() < 1e-14);
        for n in 1..=MAX_NODES {
            let r = gauss_legendre(n).unwrap();
            assert!((r.weights.iter().sum::<f64>() - 1.0).abs() < 1e-14, "n={n}");
            assert!(r.nodes.iter().all(|&x| x > 0.0 && x < 1.0));
            assert!(r.weights.iter().all(|&w| w > 0.0));
            for k in [0, n, 2 * n - 1] {
                let got = r.integrate(|x| x.powi(k as i32));
                assert!((got - 1.0 / (k as f64 + 1.0)).abs() < 1e-13, "n={n} k={k}");
            }
        }
    }

    #[test]
    fn adaptive_examples() {
        let v = integrate_default(|s| Ok(vec![s * s, s * s * s]), 1e-12).unwrap();
        assert!((v[0] - 1.0 / 3.0).abs() < 1e-15 && (v[1] - 0.25).abs() < 1e-15);
        let e = integrate_default(|s| Ok(vec![s.exp()]), 1e-12).unwrap();
        assert!((e[0] - (std::f64::consts::E - 1.0)).abs() < 1e-13);
    }

    #[test]
    fn pole_reports_non_convergence() {
        let err = integrate_default(|s| Ok(vec![1.0 / (s - 1.0000001)]), 1e-12).unwrap_err();
        match err {
            Error::QuadratureNotConverged { nodes, estimate, .. } => {
                assert_eq!(nodes, 64);
                assert_eq!(estimate.len(), 1);
            }
            other => panic!("unexpected {other:?}"),
        }
        assert!(integrate_default(|_| Ok(vec![1.0]), 0.0).is_err());
    }

    #[test]
    fn start_independence() {
        let f = |s: f64| Ok(vec![(3.0 * s).sin() / (1.0 + s * s), (s + 0.5).ln()]);
        let base = integrate_vec(f, 1e-12, 8, 64).unwrap();
        for start in [4, 16] {
            let v = integrate_vec(f, 1e-12, start, 64).unwrap();
            for (a, b) in base.iter().zip(&v) {
                assert!((a - b).abs() <= 1e-12);
            }
        }
    }

    proptest! {
        #[test]
        fn eight_points_integrate_degree_fifteen(coeffs in proptest::collection::vec(-10i64..10, 16)) {
            let r = gauss_legendre(8).unwrap();
            let got = r.integrate(|x| coeffs.iter().rev().fold(0.0, |acc, &c| acc * x + c as f64));
            let exact: f64 = coeffs.iter().enumerate().map(|(k, &c)| c as f64 / (k as f64 + 1.0)).sum();
            prop_assert!((got - exact).abs() <= 1e-13 * (1.0 + exact.abs()));
        }
    }
}
