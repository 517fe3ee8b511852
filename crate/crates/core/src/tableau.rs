//! CSRK and PCSRK tableaux: construction, validation, the Newton matrix `E`
//! and its spectrum.
//!
//! A PCSRK method of degree `s` is given by `s` matrices `M_j` and nodes `c_j`.
//! Its kernel is `A_{τ,j,ζ} = r(τ)ᵀ M_j v(ζ)` with `r(τ) = (τ, τ²/2, …, τ^s/s)`
//! and `v(ζ) = (1, ζ, …, ζ^{s−1})`.

use nalgebra::DMatrix;
use num_complex::Complex64;
use num_rational::BigRational;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::poly::{lagrange_basis, Poly};
use crate::scalar::{QuadSurd, Scalar};

/// Dense square matrix over a [`Scalar`] field, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct SquareMatrix<T> {
    n: usize,
    data: Vec<T>,
}

impl<T: Scalar> SquareMatrix<T> {
    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            data: vec![T::zero(); n * n],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            m.set(i, i, T::one());
        }
        m
    }

    /// Panics if the rows are ragged or not square.
    pub fn from_rows(rows: Vec<Vec<T>>) -> Self {
        let n = rows.len();
        assert!(rows.iter().all(|r| r.len() == n), "matrix rows must form a square");
        Self {
            n,
            data: rows.into_iter().flatten().collect(),
        }
    }

    pub fn from_ints(rows: &[&[i64]]) -> Self {
        Self::from_rows(rows.iter().map(|r| r.iter().map(|&v| T::from_int(v)).collect()).collect())
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> &T {
        &self.data[i * self.n + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: T) {
        self.data[i * self.n + j] = v;
    }

    pub fn rows(&self) -> Vec<Vec<T>> {
        self.data.chunks(self.n.max(1)).map(|r| r.to_vec()).collect()
    }

    pub fn transpose(&self) -> Self {
        let mut t = Self::zeros(self.n);
        for i in 0..self.n {
            for j in 0..self.n {
                t.set(j, i, self.get(i, j).clone());
            }
        }
        t
    }

    pub fn add(&self, o: &Self) -> Self {
        self.zip(o, |a, b| a + b)
    }

    pub fn sub(&self, o: &Self) -> Self {
        self.zip(o, |a, b| a - b)
    }

    pub fn scale(&self, c: &T) -> Self {
        Self {
            n: self.n,
            data: self.data.iter().map(|a| a.clone() * c.clone()).collect(),
        }
    }

    pub fn mul(&self, o: &Self) -> Self {
        let n = self.n;
        let mut out = Self::zeros(n);
        for i in 0..n {
            for j in 0..n {
                let mut acc = T::zero();
                for k in 0..n {
                    acc = acc + self.get(i, k).clone() * o.get(k, j).clone();
                }
                out.set(i, j, acc);
            }
        }
        out
    }

    /// `xᵀ M`
    pub fn left_mul(&self, x: &[T]) -> Vec<T> {
        (0..self.n)
            .map(|j| (0..self.n).fold(T::zero(), |acc, k| acc + x[k].clone() * self.get(k, j).clone()))
            .collect()
    }

    /// `M x`
    pub fn right_mul(&self, x: &[T]) -> Vec<T> {
        (0..self.n)
            .map(|i| (0..self.n).fold(T::zero(), |acc, k| acc + self.get(i, k).clone() * x[k].clone()))
            .collect()
    }

    /// `(M + Mᵀ)/2`
    pub fn symmetrized(&self) -> Self {
        self.add(&self.transpose()).scale(&T::from_ratio(1, 2))
    }

    pub fn map<U: Scalar>(&self, f: impl Fn(&T) -> U) -> SquareMatrix<U> {
        SquareMatrix {
            n: self.n,
            data: self.data.iter().map(f).collect(),
        }
    }

    pub fn to_f64(&self) -> SquareMatrix<f64> {
        self.map(|v| v.to_f64())
    }

    pub fn to_dmatrix(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.n, self.n, |i, j| self.get(i, j).to_f64())
    }

    /// Largest absolute entry, in `f64`.
    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(mag).fold(0.0, f64::max)
    }

    fn zip(&self, o: &Self, f: impl Fn(T, T) -> T) -> Self {
        assert_eq!(self.n, o.n, "dimension mismatch");
        Self {
            n: self.n,
            data: self.data.iter().zip(&o.data).map(|(a, b)| f(a.clone(), b.clone())).collect(),
        }
    }
}

fn mag<T: Scalar>(x: &T) -> f64 {
    if x.is_zero() {
        0.0
    } else {
        x.to_f64().abs()
    }
}

/// `r(τ) = (τ, τ²/2, …, τ^s/s)`
pub fn r_vector<T: Scalar>(s: usize, tau: &T) -> Vec<T> {
    let mut out = Vec::with_capacity(s);
    let mut p = tau.clone();
    for k in 0..s {
        out.push(p.clone() / T::from_int(k as i64 + 1));
        p = p * tau.clone();
    }
    out
}

/// `∫₀¹ v(σ) dσ = (1, 1/2, …, 1/s)`
pub fn v_moments<T: Scalar>(s: usize) -> Vec<T> {
    (0..s).map(|k| T::from_ratio(1, k as i64 + 1)).collect()
}

fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).fold(T::zero(), |acc, (x, y)| acc + x.clone() * y.clone())
}

/// A single-matrix CSRK method `A_{τ,ζ} = r(τ)ᵀ M v(ζ)`.
#[derive(Clone, Debug, PartialEq)]
pub struct CsrkMatrix<T> {
    pub m: SquareMatrix<T>,
}

impl<T: Scalar> CsrkMatrix<T> {
    pub fn degree(&self) -> usize {
        self.m.dim()
    }

    /// Energy preserving iff `M` is symmetric.
    pub fn is_energy_preserving(&self) -> bool {
        let d = self.m.sub(&self.m.transpose());
        if T::EXACT {
            d.max_abs() == 0.0
        } else {
            d.max_abs() <= 1e-12
        }
    }
}

/// The order-4 CSRK family in the `ᾶ` chart.
pub fn csrk_alpha_family<T: Scalar>(alpha_tilde: &T) -> Result<CsrkMatrix<T>> {
    if alpha_tilde.is_zero() || !alpha_tilde.to_f64().is_finite() {
        return Err(Error::InvalidParameter(format!("alpha_tilde must be finite and nonzero, got {alpha_tilde}")));
    }
    let a = alpha_tilde.clone();
    let i = |v: i64| T::from_int(v);
    let m = SquareMatrix::from_rows(vec![
        vec![a.clone() + i(4), i(-6) * a.clone() - i(6), i(6) * a.clone()],
        vec![i(-6) * a.clone() - i(6), i(36) * a.clone() + i(12), i(-36) * a.clone()],
        vec![i(6) * a.clone(), i(-36) * a.clone(), i(36) * a],
    ]);
    Ok(CsrkMatrix { m })
}

/// `α = (1/ᾶ + 7)/36`
pub fn alpha_from_tilde<T: Scalar>(alpha_tilde: &T) -> T {
    (T::one() / alpha_tilde.clone() + T::from_int(7)) / T::from_int(36)
}

/// The Hilbert-like matrix whose product with the family matrix is the identity.
pub fn hilbert_like<T: Scalar>(alpha: &T) -> SquareMatrix<T> {
    let q = |n, d| T::from_ratio(n, d);
    SquareMatrix::from_rows(vec![
        vec![q(1, 1), q(1, 2), q(1, 3)],
        vec![q(1, 2), q(1, 3), q(1, 4)],
        vec![q(1, 3), q(1, 4), alpha.clone()],
    ])
}

/// Free parameters of the fourth-order PCSRK family.
#[derive(Clone, Debug, PartialEq)]
pub struct FamilyParams<T> {
    c1: T,
    gamma: [T; 4],
    alpha_tilde: T,
}

impl<T: Scalar> FamilyParams<T> {
    pub fn new(c1: T, gamma: [T; 4], alpha_tilde: T) -> Result<Self> {
        let c = c1.to_f64();
        if !(c > 0.0 && c < 0.5) || c1.is_zero() {
            return Err(Error::InvalidParameter(format!("c1 must lie in (0, 1/2), got {c1}")));
        }
        if alpha_tilde.is_zero() || !alpha_tilde.to_f64().is_finite() {
            return Err(Error::InvalidParameter(format!("alpha_tilde must be finite and nonzero, got {alpha_tilde}")));
        }
        if gamma.iter().any(|g| !g.to_f64().is_finite()) {
            return Err(Error::InvalidParameter("gamma must be finite".into()));
        }
        Ok(Self { c1, gamma, alpha_tilde })
    }

    pub fn c1(&self) -> &T {
        &self.c1
    }

    pub fn gamma(&self) -> &[T; 4] {
        &self.gamma
    }

    pub fn alpha_tilde(&self) -> &T {
        &self.alpha_tilde
    }

    /// `α = (1/ᾶ + 7)/36`
    pub fn alpha(&self) -> T {
        alpha_from_tilde(&self.alpha_tilde)
    }

    pub fn map<U: Scalar>(&self, f: impl Fn(&T) -> U) -> FamilyParams<U> {
        FamilyParams {
            c1: f(&self.c1),
            gamma: [f(&self.gamma[0]), f(&self.gamma[1]), f(&self.gamma[2]), f(&self.gamma[3])],
            alpha_tilde: f(&self.alpha_tilde),
        }
    }

    pub fn to_f64(&self) -> FamilyParams<f64> {
        self.map(|v| v.to_f64())
    }
}

/// `c₁ = 1/2 − √15/10` and the matching `γ` that make all order-5 coefficients
/// other than those governed by `ᾶ` exact.
pub fn optimal_c1_gamma() -> (QuadSurd, [QuadSurd; 4]) {
    let q = |n: i64, d: i64| QuadSurd::from_ratio(n, d);
    let r15 = QuadSurd::sqrt(15);
    let c1 = q(1, 2) - r15.clone() * q(1, 10);
    let gamma = [
        q(10, 3) - r15.clone() * q(2, 3),
        q(23, 2) - r15.clone() * q(2, 1),
        q(-20, 3) + r15 * q(2, 3),
        q(40, 9),
    ];
    (c1, gamma)
}

impl FamilyParams<QuadSurd> {
    /// The optimal parameters in exact arithmetic over `Q(√15)`.
    pub fn optimal(alpha_tilde: BigRational) -> Self {
        let (c1, gamma) = optimal_c1_gamma();
        Self::new(c1, gamma, QuadSurd::rational(alpha_tilde)).expect("optimal parameters are valid")
    }
}

impl FamilyParams<f64> {
    /// The optimal `c₁, γ` rounded to `f64`, with an arbitrary `ᾶ`.
    pub fn optimal_f64(alpha_tilde: f64) -> Result<Self> {
        let (c1, gamma) = optimal_c1_gamma();
        Self::new(
            c1.to_f64(),
            [gamma[0].to_f64(), gamma[1].to_f64(), gamma[2].to_f64(), gamma[3].to_f64()],
            alpha_tilde,
        )
    }
}

/// A degree-`s` PCSRK method: matrices `M₁…M_s` and nodes `c₁ < … < c_s`.
#[derive(Clone, Debug, PartialEq)]
pub struct PcsrkTableau<T> {
    name: String,
    m_list: Vec<SquareMatrix<T>>,
    nodes: Vec<T>,
    m_sum: SquareMatrix<T>,
    params: Option<FamilyParams<T>>,
}

impl<T: Scalar> PcsrkTableau<T> {
    /// Checks shapes and node ordering. Symmetry of the `M_j` is left to [`validate`].
    pub fn new(
        name: impl Into<String>,
        m_list: Vec<SquareMatrix<T>>,
        nodes: Vec<T>,
        params: Option<FamilyParams<T>>,
    ) -> Result<Self> {
        let s = nodes.len();
        if s == 0 || m_list.len() != s || m_list.iter().any(|m| m.dim() != s) {
            return Err(Error::InvalidParameter(format!(
                "a degree-{s} tableau needs {s} matrices of size {s}x{s}"
            )));
        }
        let f: Vec<f64> = nodes.iter().map(|c| c.to_f64()).collect();
        if f.iter().any(|c| !(0.0..=1.0).contains(c)) || f.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::InvalidParameter(format!(
                "nodes must be strictly increasing in [0, 1], got {f:?}"
            )));
        }
        let m_sum = m_list.iter().skip(1).fold(m_list[0].clone(), |acc, m| acc.add(m));
        Ok(Self {
            name: name.into(),
            m_list,
            nodes,
            m_sum,
            params,
        })
    }

    /// A single-matrix CSRK method written as a PCSRK tableau: `M₁ = M`, the
    /// other matrices zero. The nodes only fix the stage interpolation.
    pub fn from_csrk(name: impl Into<String>, csrk: &CsrkMatrix<T>, nodes: Vec<T>) -> Result<Self> {
        let s = csrk.degree();
        let mut m_list = vec![SquareMatrix::zeros(s); s];
        m_list[0] = csrk.m.clone();
        Self::new(name, m_list, nodes, None)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn s(&self) -> usize {
        self.nodes.len()
    }

    pub fn matrices(&self) -> &[SquareMatrix<T>] {
        &self.m_list
    }

    pub fn nodes(&self) -> &[T] {
        &self.nodes
    }

    pub fn m_sum(&self) -> &SquareMatrix<T> {
        &self.m_sum
    }

    pub fn params(&self) -> Option<&FamilyParams<T>> {
        self.params.as_ref()
    }

    /// `r(τ)ᵀ M_j`: the coefficients of `ζ^l` in `A_{τ,j,ζ}`.
    pub fn kernel_row(&self, j: usize, tau: &T) -> Vec<T> {
        self.m_list[j].left_mul(&r_vector(self.s(), tau))
    }

    /// `A_{τ,j,ζ}`
    pub fn kernel(&self, j: usize, tau: &T, zeta: &T) -> T {
        let row = self.kernel_row(j, tau);
        Poly::new(row).eval(zeta)
    }

    /// `B_{j,ζ} = A_{1,j,ζ}` as a polynomial in `ζ`.
    pub fn b_poly(&self, j: usize) -> Poly<T> {
        Poly::new(self.kernel_row(j, &T::one()))
    }

    /// `C(τ) = Σ_j ∫ A_{τ,j,σ} dσ` as a polynomial in `τ`.
    pub fn c_poly(&self) -> Poly<T> {
        let w = self.m_sum.right_mul(&v_moments(self.s()));
        let mut coeffs = vec![T::zero()];
        for (k, wk) in w.into_iter().enumerate() {
            coeffs.push(wk / T::from_int(k as i64 + 1));
        }
        Poly::new(coeffs)
    }

    pub fn map<U: Scalar>(&self, f: impl Fn(&T) -> U) -> PcsrkTableau<U> {
        PcsrkTableau {
            name: self.name.clone(),
            m_list: self.m_list.iter().map(|m| m.map(&f)).collect(),
            nodes: self.nodes.iter().map(&f).collect(),
            m_sum: self.m_sum.map(&f),
            params: self.params.as_ref().map(|p| p.map(&f)),
        }
    }

    pub fn to_f64(&self) -> PcsrkTableau<f64> {
        self.map(|v| v.to_f64())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ClassicKind {
    Avf2,
    Avf4,
}

impl std::str::FromStr for ClassicKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "avf2" => Ok(Self::Avf2),
            "avf4" => Ok(Self::Avf4),
            other => Err(Error::Config(format!("unknown classic method `{other}`"))),
        }
    }
}

/// The second-order AVF extension (`s = 1`) over any field.
pub fn avf2<T: Scalar>() -> PcsrkTableau<T> {
    PcsrkTableau::new("avf2", vec![SquareMatrix::identity(1)], vec![T::from_ratio(1, 2)], None)
        .expect("valid tableau")
}

/// The two-stage AVF(4) method, exact over `Q(√3)`.
pub fn avf4_exact() -> PcsrkTableau<QuadSurd> {
    let q = |n: i64| QuadSurd::from_int(n);
    let r3 = QuadSurd::sqrt(3);
    let m1 = SquareMatrix::from_rows(vec![
        vec![q(2) + r3.clone(), -(q(3) + r3.clone())],
        vec![-(q(3) + r3.clone()), q(6)],
    ]);
    let m2 = SquareMatrix::from_rows(vec![
        vec![q(2) - r3.clone(), r3.clone() - q(3)],
        vec![r3.clone() - q(3), q(6)],
    ]);
    let c1 = QuadSurd::from_ratio(1, 2) - r3.clone() / q(6);
    let c2 = QuadSurd::from_ratio(1, 2) + r3 / q(6);
    PcsrkTableau::new("avf4", vec![m1, m2], vec![c1, c2], None).expect("valid tableau")
}

pub fn classic_tableau(kind: ClassicKind) -> PcsrkTableau<f64> {
    match kind {
        ClassicKind::Avf2 => avf2(),
        ClassicKind::Avf4 => avf4_exact().to_f64(),
    }
}

fn generator_matrices<T: Scalar>() -> [SquareMatrix<T>; 4] {
    [
        SquareMatrix::from_ints(&[&[1, -3, 3], &[-3, 0, 0], &[3, 0, 0]]),
        SquareMatrix::from_ints(&[&[1, -2, 0], &[-2, 4, 0], &[0, 0, 0]]),
        SquareMatrix::from_ints(&[&[3, -5, 0], &[-5, 0, 6], &[0, 6, 0]]),
        SquareMatrix::from_ints(&[&[2, -3, 0], &[-3, 0, 0], &[0, 0, 9]]),
    ]
}

/// The reflection `P` with `M₁ = P M₃ Pᵀ` for symmetric methods.
pub fn reflection_matrix<T: Scalar>() -> SquareMatrix<T> {
    SquareMatrix::from_ints(&[&[1, 1, 1], &[0, -1, -2], &[0, 0, 1]])
}

/// The degree-3 energy-preserving, symmetric, fourth-order PCSRK family.
pub fn fourth_order_family<T: Scalar>(p: &FamilyParams<T>) -> Result<PcsrkTableau<T>> {
    let k = T::from_int(2) * p.c1.clone() - T::one();
    if k.is_zero() {
        return Err(Error::InvalidParameter("c1 = 1/2 makes the family singular".into()));
    }
    let mut m3 = SquareMatrix::zeros(3);
    m3.set(0, 0, T::one() / (T::from_int(6) * k.clone() * k.clone()) + T::one() / k.clone());
    m3.set(0, 1, -(T::one() / k.clone()));
    m3.set(1, 0, -(T::one() / k));
    for (g, gm) in p.gamma.iter().zip(generator_matrices::<T>()) {
        m3 = m3.add(&gm.scale(g));
    }
    let pm = reflection_matrix::<T>();
    let mut m1 = pm.mul(&m3).mul(&pm.transpose());
    if !T::EXACT {
        m1 = m1.symmetrized();
    }
    let m = csrk_alpha_family(&p.alpha_tilde)?.m;
    let m2 = m.sub(&m1).sub(&m3);
    let nodes = vec![p.c1.clone(), T::from_ratio(1, 2), T::one() - p.c1.clone()];
    PcsrkTableau::new("family", vec![m1, m2, m3], nodes, Some(p.clone()))
}

/// Outcome of one validation check.
#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "status", content = "value", rename_all = "snake_case")]
pub enum Check {
    Residual(f64),
    NotApplicable(String),
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ValidationEntry {
    pub name: &'static str,
    pub check: Check,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ValidationReport {
    pub entries: Vec<ValidationEntry>,
}

impl ValidationReport {
    pub fn get(&self, name: &str) -> Option<&Check> {
        self.entries.iter().find(|e| e.name == name).map(|e| &e.check)
    }

    pub fn residual(&self, name: &str) -> Option<f64> {
        match self.get(name)? {
            Check::Residual(r) => Some(*r),
            Check::NotApplicable(_) => None,
        }
    }

    /// Largest residual over the applicable checks.
    pub fn max_residual(&self) -> f64 {
        self.entries
            .iter()
            .filter_map(|e| match e.check {
                Check::Residual(r) => Some(r),
                Check::NotApplicable(_) => None,
            })
            .fold(0.0, f64::max)
    }

    pub fn passes(&self, tol: f64) -> bool {
        self.max_residual() <= tol
    }
}

/// Names of the checks, in report order.
pub const CHECK_NAMES: [&str; 7] = [
    "symmetric_matrices",
    "order4_sum",
    "reflection",
    "node_symmetry",
    "stage_condition",
    "scalar_condition",
    "kernel_symmetry",
];

/// Checks the sufficient conditions for an energy-preserving, symmetric, order-4 method.
///
/// `symmetric_matrices` is the absolute entrywise sum `Σ|M_ab − M_ba|` over all `M_j`.
/// Every other residual is a max-abs value divided by `max(1, max|M_j|)`, so `f64`
/// tableaux with large `ᾶ` are judged relative to their size. Exact tableaux give exact zeros.
pub fn validate<T: Scalar>(t: &PcsrkTableau<T>) -> ValidationReport {
    let s = t.s();
    let scale = t.m_list.iter().map(|m| m.max_abs()).fold(1.0, f64::max);
    let rel = |x: f64| Check::Residual(x / scale);
    let na = || Check::NotApplicable(format!("defined for degree 3, tableau has degree {s}"));
    let mut entries = Vec::new();

    let asym: f64 = t
        .m_list
        .iter()
        .map(|m| m.sub(&m.transpose()).data.iter().map(mag).sum::<f64>())
        .sum();
    entries.push(ValidationEntry {
        name: CHECK_NAMES[0],
        check: Check::Residual(asym),
    });

    if s == 3 {
        let alpha = match &t.params {
            Some(p) => p.alpha(),
            None => fitted_alpha(&t.m_sum),
        };
        let prod = hilbert_like(&alpha).mul(&t.m_sum).sub(&SquareMatrix::identity(3));
        entries.push(ValidationEntry {
            name: CHECK_NAMES[1],
            check: rel(prod.max_abs()),
        });

        let pm = reflection_matrix::<T>();
        let refl = pm.mul(&t.m_list[2]).mul(&pm.transpose()).sub(&t.m_list[0]);
        entries.push(ValidationEntry {
            name: CHECK_NAMES[2],
            check: rel(refl.max_abs()),
        });
    } else {
        entries.push(ValidationEntry {
            name: CHECK_NAMES[1],
            check: na(),
        });
        entries.push(ValidationEntry {
            name: CHECK_NAMES[2],
            check: na(),
        });
    }

    let node_res = (0..s)
        .map(|i| mag(&(t.nodes[i].clone() + t.nodes[s - 1 - i].clone() - T::one())))
        .fold(0.0, f64::max);
    entries.push(ValidationEntry {
        name: CHECK_NAMES[3],
        check: Check::Residual(node_res),
    });

    if s == 3 {
        let mom = v_moments::<T>(3);
        let mut weighted = SquareMatrix::zeros(3);
        for (c, m) in t.nodes.iter().zip(&t.m_list) {
            weighted = weighted.add(&m.scale(c));
        }
        let v = weighted.right_mul(&mom);
        let target = [T::zero(), T::one(), T::zero()];
        let res = v.iter().zip(&target).map(|(a, b)| mag(&(a.clone() - b.clone()))).fold(0.0, f64::max);
        entries.push(ValidationEntry {
            name: CHECK_NAMES[4],
            check: rel(res),
        });

        let mut weighted2 = SquareMatrix::zeros(3);
        for (c, m) in t.nodes.iter().zip(&t.m_list) {
            weighted2 = weighted2.add(&m.scale(&(c.clone() * c.clone())));
        }
        let val = dot(&mom, &weighted2.right_mul(&mom)) - T::from_ratio(1, 3);
        entries.push(ValidationEntry {
            name: CHECK_NAMES[5],
            check: rel(mag(&val)),
        });
    } else {
        entries.push(ValidationEntry {
            name: CHECK_NAMES[4],
            check: na(),
        });
        entries.push(ValidationEntry {
            name: CHECK_NAMES[5],
            check: na(),
        });
    }

    let ks = kernel_symmetry_residual(t)
        .iter()
        .flat_map(|rows| rows.iter().flatten().map(mag))
        .fold(0.0, f64::max);
    entries.push(ValidationEntry {
        name: CHECK_NAMES[6],
        check: rel(ks),
    });

    ValidationReport { entries }
}

/// The `α` that best fits the last row of `H(α) M = I` (exact when consistent).
fn fitted_alpha<T: Scalar>(m: &SquareMatrix<T>) -> T {
    let q = |n, d| T::from_ratio(n, d);
    let mut num = T::zero();
    let mut den = T::zero();
    for l in 0..3 {
        let target = if l == 2 { T::one() } else { T::zero() };
        let rest = target - q(1, 3) * m.get(0, l).clone() - q(1, 4) * m.get(1, l).clone();
        num = num + m.get(2, l).clone() * rest;
        den = den + m.get(2, l).clone() * m.get(2, l).clone();
    }
    if den.is_zero() {
        T::zero()
    } else {
        num / den
    }
}

fn binomial_row(a: usize) -> Vec<i64> {
    let mut row = vec![1i64; a + 1];
    for m in 1..a {
        row[m] = row[m - 1] * (a - m + 1) as i64 / m as i64;
    }
    row
}

/// Coefficients `[a][b]` of `τ^a ζ^b` in `A_{τ,j,ζ}`.
fn kernel_bivariate<T: Scalar>(m: &SquareMatrix<T>) -> Vec<Vec<T>> {
    let s = m.dim();
    let mut c = vec![vec![T::zero(); s]; s + 1];
    for a in 1..=s {
        for b in 0..s {
            c[a][b] = m.get(a - 1, b).clone() / T::from_int(a as i64);
        }
    }
    c
}

/// `p(1 − τ, 1 − ζ)` for bivariate coefficients.
fn reflect_bivariate<T: Scalar>(c: &[Vec<T>]) -> Vec<Vec<T>> {
    let na = c.len();
    let nb = c.first().map_or(0, |r| r.len());
    let mut out = vec![vec![T::zero(); nb]; na];
    for (a, row) in c.iter().enumerate() {
        let ba = binomial_row(a);
        for (b, coef) in row.iter().enumerate() {
            if coef.is_zero() {
                continue;
            }
            let bb = binomial_row(b);
            for (p, &cp) in ba.iter().enumerate() {
                for (q, &cq) in bb.iter().enumerate() {
                    let sign = if (p + q) % 2 == 0 { 1 } else { -1 };
                    out[p][q] = out[p][q].clone() + coef.clone() * T::from_int(sign * cp * cq);
                }
            }
        }
    }
    out
}

/// For each `j`, the bivariate coefficients of
/// `A_{1−τ, s+1−j, 1−ζ} + A_{τ,j,ζ} − B_{j,ζ}`, which vanish for symmetric methods.
pub fn kernel_symmetry_residual<T: Scalar>(t: &PcsrkTableau<T>) -> Vec<Vec<Vec<T>>> {
    let s = t.s();
    (0..s)
        .map(|j| {
            let kj = kernel_bivariate(&t.m_list[j]);
            let refl = reflect_bivariate(&kernel_bivariate(&t.m_list[s - 1 - j]));
            let b = t.b_poly(j);
            let mut out = refl;
            for (a, row) in out.iter_mut().enumerate() {
                for (bi, v) in row.iter_mut().enumerate() {
                    *v = v.clone() + kj[a][bi].clone();
                    if a == 0 {
                        *v = v.clone() - b.coeff(bi);
                    }
                }
            }
            out
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Simplifying {
    B,
    C,
    Chat,
    D,
    Dhat,
}

impl std::str::FromStr for Simplifying {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "B" => Ok(Self::B),
            "C" => Ok(Self::C),
            "Chat" => Ok(Self::Chat),
            "D" => Ok(Self::D),
            "Dhat" => Ok(Self::Dhat),
            other => Err(Error::InvalidParameter(format!("unknown simplifying assumption `{other}`"))),
        }
    }
}

const GRID: i64 = 20;

fn grid<T: Scalar>() -> impl Iterator<Item = T> {
    (0..=GRID).map(|k| T::from_ratio(k, GRID))
}

/// Residual of a simplifying assumption with exponents `(k, l)`.
///
/// Polynomial identities in `τ` or `σ` are sampled on a 21-point grid of `[0, 1]`
/// after exact integration; the result is the largest absolute deviation.
pub fn simplifying_residual<T: Scalar>(t: &PcsrkTableau<T>, kind: Simplifying, k: u32, l: u32) -> Result<f64> {
    if k < 1 {
        return Err(Error::InvalidParameter(format!("k must be at least 1, got {k}")));
    }
    let s = t.s();
    let cp = t.c_poly();
    let chat: Vec<T> = t.nodes.iter().map(|c| cp.eval(c)).collect();
    let ckm1 = cp.pow(k - 1);
    let kl = T::from_int((k + l) as i64);
    // ∫ v(σ) C(σ)^{k−1} dσ
    let vmom: Vec<T> = (0..s).map(|m| ckm1.moment(m)).collect();

    let mut worst: f64 = 0.0;
    match kind {
        Simplifying::B => {
            let total = (0..s).fold(T::zero(), |acc, i| {
                acc + t.b_poly(i).mul(&ckm1).integral01() * chat[i].powi(l)
            });
            worst = mag(&(total - T::one() / kl));
        }
        Simplifying::C => {
            let lhs_row = (0..s).fold(vec![T::zero(); s], |acc, j| {
                let w = t.m_list[j].right_mul(&vmom);
                acc.iter().zip(w).map(|(a, b)| a.clone() + b * chat[j].powi(l)).collect()
            });
            let target = cp.pow(k + l).scale(&(T::one() / kl));
            for tau in grid::<T>() {
                let lhs = dot(&r_vector(s, &tau), &lhs_row);
                worst = worst.max(mag(&(lhs - target.eval(&tau))));
            }
        }
        Simplifying::Chat => {
            for i in 0..s {
                let r = r_vector(s, &t.nodes[i]);
                let lhs = (0..s).fold(T::zero(), |acc, j| {
                    acc + dot(&r, &t.m_list[j].right_mul(&vmom)) * chat[j].powi(l)
                });
                let target = chat[i].powi(k + l) / kl.clone();
                worst = worst.max(mag(&(lhs - target)));
            }
        }
        Simplifying::D | Simplifying::Dhat => {
            // Σ_i ∫ B_{i,τ} C(τ)^{k−1} Ĉ_i^l (...) dτ
            let weights: Vec<Poly<T>> = (0..s)
                .map(|i| t.b_poly(i).mul(&ckm1).scale(&chat[i].powi(l)))
                .collect();
            for j in 0..s {
                let bj = t.b_poly(j);
                // Coefficients of σ^m in the left-hand side.
                let mut lhs = vec![T::zero(); s];
                for (i, wi) in weights.iter().enumerate() {
                    let r_int: Vec<T> = if kind == Simplifying::D {
                        (0..s).map(|a| wi.moment(a + 1) / T::from_int(a as i64 + 1)).collect()
                    } else {
                        let base = wi.integral01();
                        r_vector(s, &t.nodes[i]).into_iter().map(|v| v * base.clone()).collect()
                    };
                    let row = t.m_list[j].left_mul(&r_int);
                    lhs = lhs.iter().zip(row).map(|(a, b)| a.clone() + b).collect();
                }
                let lhs = Poly::new(lhs);
                for sigma in grid::<T>() {
                    let factor = if kind == Simplifying::D {
                        T::one() - cp.eval(&sigma).powi(k + l)
                    } else {
                        T::one() - chat[j].powi(k + l)
                    };
                    let rhs = bj.eval(&sigma) * factor / kl.clone();
                    worst = worst.max(mag(&(lhs.eval(&sigma) - rhs)));
                }
            }
        }
    }
    Ok(worst)
}

/// `E_ij = ∫₀¹ r(c_i)ᵀ M v(σ) l_j(σ) dσ`, with `l_j` the Lagrange basis on `{0, c₁, …, c_s}`.
pub fn assemble_e<T: Scalar>(t: &PcsrkTableau<T>) -> SquareMatrix<T> {
    let s = t.s();
    let mut pts = vec![T::zero()];
    pts.extend(t.nodes.iter().cloned());
    let basis = lagrange_basis(&pts);
    let mut e = SquareMatrix::zeros(s);
    for i in 0..s {
        let kern = Poly::new(t.m_sum.left_mul(&r_vector(s, &t.nodes[i])));
        for j in 0..s {
            e.set(i, j, kern.mul(&basis[j + 1]).integral01());
        }
    }
    e
}

/// `E`, its eigenvalues and (when real and distinct) its eigenvector matrix.
#[derive(Clone, Debug, Serialize)]
pub struct SpectralData {
    #[serde(serialize_with = "ser_matrix")]
    pub e: DMatrix<f64>,
    #[serde(serialize_with = "ser_complex")]
    pub eigenvalues: Vec<Complex64>,
    #[serde(serialize_with = "ser_opt_matrix")]
    pub t: Option<DMatrix<f64>>,
    #[serde(serialize_with = "ser_opt_matrix")]
    pub t_inv: Option<DMatrix<f64>>,
    pub real_distinct: bool,
    pub condition_estimate: f64,
}

fn matrix_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

fn ser_matrix<S: serde::Serializer>(m: &DMatrix<f64>, s: S) -> std::result::Result<S::Ok, S::Error> {
    serde::Serialize::serialize(&matrix_rows(m), s)
}

fn ser_opt_matrix<S: serde::Serializer>(m: &Option<DMatrix<f64>>, s: S) -> std::result::Result<S::Ok, S::Error> {
    serde::Serialize::serialize(&m.as_ref().map(matrix_rows), s)
}

fn ser_complex<S: serde::Serializer>(v: &[Complex64], s: S) -> std::result::Result<S::Ok, S::Error> {
    let pairs: Vec<[f64; 2]> = v.iter().map(|z| [z.re, z.im]).collect();
    serde::Serialize::serialize(&pairs, s)
}

impl SpectralData {
    /// Real parts of the eigenvalues, in ascending order.
    pub fn real_eigenvalues(&self) -> Option<Vec<f64>> {
        self.real_distinct.then(|| self.eigenvalues.iter().map(|z| z.re).collect())
    }
}

/// Spectrum of `E` for tableaux of degree at most 3.
///
/// Eigenvalues are the closed-form roots of the characteristic polynomial, whose
/// coefficients are formed exactly (floating tableaux are lifted to rationals
/// first) so that node-independent spectra come out bitwise identical.
/// Eigenvectors come from a null-space solve refined by inverse iteration.
pub fn e_matrix<T: Scalar>(t: &PcsrkTableau<T>) -> Result<SpectralData> {
    let e = assemble_e(t);
    if e.dim() > 3 {
        return Err(Error::InvalidParameter(format!(
            "closed-form spectrum supports degree at most 3, got {}",
            e.dim()
        )));
    }
    let coeffs: Vec<f64> = if T::EXACT {
        char_poly(&e).iter().map(|c| c.to_f64()).collect()
    } else {
        let lifted: Option<Vec<BigRational>> = t
            .m_list
            .iter()
            .flat_map(|m| m.data.iter())
            .chain(&t.nodes)
            .map(|v| v.to_rational())
            .collect();
        match lifted {
            Some(_) => {
                let exact = t.map(|v| v.to_rational().expect("checked finite"));
                char_poly(&assemble_e(&exact)).iter().map(|c| c.to_f64()).collect()
            }
            None => return Err(Error::NonFinite("tableau")),
        }
    };
    spectrum_from_poly(e.to_dmatrix(), &coeffs)
}

/// Coefficients `[a_{s-1}, …, a_0]` of the monic characteristic polynomial, `s ≤ 3`.
pub fn char_poly<T: Scalar>(e: &SquareMatrix<T>) -> Vec<T> {
    let g = |i, j| e.get(i, j).clone();
    match e.dim() {
        1 => vec![-g(0, 0)],
        2 => vec![-(g(0, 0) + g(1, 1)), g(0, 0) * g(1, 1) - g(0, 1) * g(1, 0)],
        3 => {
            let tr = g(0, 0) + g(1, 1) + g(2, 2);
            let minors = g(0, 0) * g(1, 1) - g(0, 1) * g(1, 0) + g(0, 0) * g(2, 2) - g(0, 2) * g(2, 0)
                + g(1, 1) * g(2, 2)
                - g(1, 2) * g(2, 1);
            let det = g(0, 0) * (g(1, 1) * g(2, 2) - g(1, 2) * g(2, 1))
                - g(0, 1) * (g(1, 0) * g(2, 2) - g(1, 2) * g(2, 0))
                + g(0, 2) * (g(1, 0) * g(2, 1) - g(1, 1) * g(2, 0));
            vec![-tr, minors, -det]
        }
        n => panic!("characteristic polynomial requested for degree {n}"),
    }
}

/// Spectral data of an arbitrary `s ≤ 3` matrix, from its `f64` entries.
pub fn spectrum(e: DMatrix<f64>) -> Result<SpectralData> {
    if e.nrows() > 3 || e.nrows() != e.ncols() || e.nrows() == 0 {
        return Err(Error::InvalidParameter("closed-form spectrum supports square matrices up to 3x3".into()));
    }
    let sq = SquareMatrix::from_rows(matrix_rows(&e));
    let coeffs = char_poly(&sq);
    spectrum_from_poly(e, &coeffs)
}

fn spectrum_from_poly(e: DMatrix<f64>, coeffs: &[f64]) -> Result<SpectralData> {
    let s = e.nrows();
    let mut eig = match s {
        1 => vec![Complex64::new(-coeffs[0], 0.0)],
        2 => quadratic_roots(coeffs[0], coeffs[1]),
        _ => cubic_roots(coeffs[0], coeffs[1], coeffs[2]),
    };
    eig.sort_by(|a, b| a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im)));
    let norm = e.amax().max(f64::MIN_POSITIVE);
    let real = eig.iter().all(|z| z.im == 0.0);
    let distinct = eig.windows(2).all(|w| (w[1] - w[0]).norm() > 1e-9 * norm);
    if !(real && distinct) {
        return Ok(SpectralData {
            e,
            eigenvalues: eig,
            t: None,
            t_inv: None,
            real_distinct: false,
            condition_estimate: f64::INFINITY,
        });
    }
    let mut tm = DMatrix::zeros(s, s);
    for (k, lam) in eig.iter().enumerate() {
        let v = eigenvector(&e, lam.re);
        tm.set_column(k, &v);
    }
    let t_inv = tm.clone().try_inverse().ok_or(Error::DefectiveSpectrum {
        condition: f64::INFINITY,
    })?;
    let condition = one_norm(&tm) * one_norm(&t_inv);
    if !(condition <= 1e8) {
        return Err(Error::DefectiveSpectrum { condition });
    }
    Ok(SpectralData {
        e,
        eigenvalues: eig,
        t: Some(tm),
        t_inv: Some(t_inv),
        real_distinct: true,
        condition_estimate: condition,
    })
}

fn one_norm(m: &DMatrix<f64>) -> f64 {
    m.column_iter().map(|c| c.iter().map(|v| v.abs()).sum::<f64>()).fold(0.0, f64::max)
}

/// Roots of `λ² + bλ + c`.
fn quadratic_roots(b: f64, c: f64) -> Vec<Complex64> {
    let disc = b * b - 4.0 * c;
    if disc >= 0.0 {
        let q = -0.5 * (b + b.signum() * disc.sqrt());
        if q == 0.0 {
            return vec![Complex64::new(0.0, 0.0); 2];
        }
        vec![Complex64::new(q, 0.0), Complex64::new(c / q, 0.0)]
    } else {
        let im = 0.5 * (-disc).sqrt();
        vec![Complex64::new(-0.5 * b, -im), Complex64::new(-0.5 * b, im)]
    }
}

/// Roots of `λ³ + aλ² + bλ + c`: trigonometric form for three real roots,
/// Cardano otherwise. Real roots are polished by Newton steps.
fn cubic_roots(a: f64, b: f64, c: f64) -> Vec<Complex64> {
    let p = b - a * a / 3.0;
    let q = 2.0 * a * a * a / 27.0 - a * b / 3.0 + c;
    let shift = -a / 3.0;
    let disc = -(4.0 * p * p * p + 27.0 * q * q);
    let polish = |mut x: f64| {
        for _ in 0..3 {
            let f = ((x + a) * x + b) * x + c;
            let df = (3.0 * x + 2.0 * a) * x + b;
            if df == 0.0 {
                break;
            }
            let nx = x - f / df;
            if !nx.is_finite() {
                break;
            }
            x = nx;
        }
        x
    };
    if disc > 0.0 {
        let m = 2.0 * (-p / 3.0).sqrt();
        let arg = (3.0 * q / (p * m)).clamp(-1.0, 1.0);
        let theta = arg.acos() / 3.0;
        (0..3)
            .map(|k| {
                let t = m * (theta - 2.0 * std::f64::consts::PI * k as f64 / 3.0).cos();
                Complex64::new(polish(t + shift), 0.0)
            })
            .collect()
    } else {
        let sq = (q * q / 4.0 + p * p * p / 27.0).max(0.0).sqrt();
        let u = (-q / 2.0 + sq).cbrt();
        let v = (-q / 2.0 - sq).cbrt();
        let t1 = u + v;
        let re = -(u + v) / 2.0 + shift;
        let im = (u - v) * 3f64.sqrt() / 2.0;
        if im == 0.0 {
            // Repeated root: report a real triple so distinctness decides.
            return vec![
                Complex64::new(polish(t1 + shift), 0.0),
                Complex64::new(re, 0.0),
                Complex64::new(re, 0.0),
            ];
        }
        vec![
            Complex64::new(polish(t1 + shift), 0.0),
            Complex64::new(re, -im.abs()),
            Complex64::new(re, im.abs()),
        ]
    }
}

/// Unit null vector of `E − λI`, refined by inverse iteration.
fn eigenvector(e: &DMatrix<f64>, lam: f64) -> nalgebra::DVector<f64> {
    let s = e.nrows();
    let a = e - DMatrix::identity(s, s) * lam;
    let mut v = match s {
        1 => nalgebra::DVector::from_element(1, 1.0),
        2 => {
            let c1 = nalgebra::DVector::from_vec(vec![a[(0, 1)], -a[(0, 0)]]);
            let c2 = nalgebra::DVector::from_vec(vec![a[(1, 1)], -a[(1, 0)]]);
            if c1.norm() >= c2.norm() {
                c1
            } else {
                c2
            }
        }
        _ => {
            let rows: Vec<nalgebra::Vector3<f64>> = (0..3)
                .map(|i| nalgebra::Vector3::new(a[(i, 0)], a[(i, 1)], a[(i, 2)]))
                .collect();
            let cands = [rows[0].cross(&rows[1]), rows[0].cross(&rows[2]), rows[1].cross(&rows[2])];
            let best = cands.iter().max_by(|x, y| x.norm().total_cmp(&y.norm())).expect("three candidates");
            nalgebra::DVector::from_column_slice(best.as_slice())
        }
    };
    if v.norm() == 0.0 {
        v = nalgebra::DVector::from_element(s, 1.0);
    }
    v /= v.norm();
    let shift = lam + 1e-12 * e.amax().max(1.0);
    if let Some(lu) = Some((e - DMatrix::identity(s, s) * shift).lu()) {
        for _ in 0..2 {
            match lu.solve(&v) {
                Some(w) if w.iter().all(|x| x.is_finite()) && w.norm() > 0.0 => v = &w / w.norm(),
                _ => break,
            }
        }
    }
    if v.iter().fold(0.0, |acc: f64, x| if x.abs() > acc.abs() { *x } else { acc }) < 0.0 {
        v = -v;
    }
    v
}

/// `(1/6) 2^{2/3} + (5/24) 2^{1/3} + 1/4`
pub fn parallel_threshold() -> f64 {
    2f64.powf(2.0 / 3.0) / 6.0 + 5.0 / 24.0 * 2f64.cbrt() + 0.25
}

/// Whether the family's `E` has real, distinct eigenvalues: `−ᾶ/300 > threshold`.
pub fn is_parallelizable(alpha_tilde: f64) -> bool {
    -alpha_tilde / 300.0 > parallel_threshold()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn q(n: i64, d: i64) -> BigRational {
        BigRational::from_ratio(n, d)
    }

    fn exact_params(c1: (i64, i64), g: [(i64, i64); 4], at: (i64, i64)) -> FamilyParams<BigRational> {
        FamilyParams::new(
            q(c1.0, c1.1),
            [q(g[0].0, g[0].1), q(g[1].0, g[1].1), q(g[2].0, g[2].1), q(g[3].0, g[3].1)],
            q(at.0, at.1),
        )
        .unwrap()
    }

    #[test]
    fn alpha_family_at_five() {
        let m = csrk_alpha_family(&5.0).unwrap().m;
        let expect = SquareMatrix::<f64>::from_ints(&[&[9, -36, 30], &[-36, 192, -180], &[30, -180, 180]]);
        assert_eq!(m, expect);
        assert!(csrk_alpha_family(&0.0).is_err());
    }

    #[test]
    fn alpha_family_inverts_hilbert_like_matrix() {
        for at in [q(5, 1), q(-234, 1), q(-5, 1), q(7, 3)] {
            let m = csrk_alpha_family(&at).unwrap();
            assert!(m.is_energy_preserving());
            let prod = hilbert_like(&alpha_from_tilde(&at)).mul(&m.m);
            assert_eq!(prod, SquareMatrix::identity(3));
            assert_eq!(m.m.left_mul(&v_moments(3)), vec![q(1, 1), q(0, 1), q(0, 1)]);
        }
    }

    #[test]
    fn avf4_matrices() {
        let t = avf4_exact();
        let sum = t.m_sum().map(|v| v.as_rational().cloned().expect("rational sum"));
        assert_eq!(sum, SquareMatrix::from_ints(&[&[4, -6], &[-6, 12]]));
        for m in t.matrices() {
            let det = m.get(0, 0).clone() * m.get(1, 1).clone() - m.get(0, 1).clone() * m.get(1, 0).clone();
            assert!(det.is_zero());
        }
        let a2 = avf2::<BigRational>();
        assert_eq!(a2.nodes()[0].clone(), q(1, 1) - a2.nodes()[0].clone());
    }

    #[test]
    fn family_constraints_hold_exactly() {
        let p = exact_params((1, 7), [(2, 3), (-1, 2), (5, 4), (3, 1)], (-11, 3));
        let t = fourth_order_family(&p).unwrap();
        assert_eq!(t.m_sum(), &csrk_alpha_family(p.alpha_tilde()).unwrap().m);
        let k = q(2, 1) * p.c1().clone() - q(1, 1);
        let m3 = &t.matrices()[2];
        let mom = v_moments::<BigRational>(3);
        let cond1 = k.clone() * dot(&[q(0, 1), q(1, 1), q(1, 1)], &m3.right_mul(&mom));
        assert_eq!(cond1, q(-1, 1));
        let cond2 = k.clone() * k * dot(&mom, &m3.right_mul(&mom));
        assert_eq!(cond2, q(1, 6));
        let report = validate(&t);
        assert_eq!(report.max_residual(), 0.0, "{report:?}");
    }

    #[test]
    fn optimal_gamma_constraint_sums() {
        let (_, g) = optimal_c1_gamma();
        let qs = |n, d| QuadSurd::from_ratio(n, d);
        assert_eq!(g[0].clone() + g[2].clone() + g[3].clone(), qs(10, 9));
        assert_eq!(
            qs(2, 1) * g[2].clone() + qs(3, 1) * g[3].clone(),
            QuadSurd::sqrt(15) * qs(4, 3)
        );
        assert_eq!(qs(4, 1) * g[1].clone() + qs(12, 1) * g[2].clone() + qs(9, 1) * g[3].clone(), qs(6, 1));
        let t = fourth_order_family(&FamilyParams::optimal(q(-234, 1))).unwrap();
        assert_eq!(validate(&t).max_residual(), 0.0);
    }

    #[test]
    fn validation_flags_asymmetry_and_degree() {
        let p = FamilyParams::new(0.2, [0.1, 0.2, 0.3, 0.4], -234.0).unwrap();
        let t = fourth_order_family(&p).unwrap();
        let mut ms = t.matrices().to_vec();
        let v = *ms[1].get(0, 1);
        ms[1].set(0, 1, v + 1e-3);
        let bad = PcsrkTableau::new("perturbed", ms, t.nodes().to_vec(), None).unwrap();
        let r = validate(&bad).residual("symmetric_matrices").unwrap();
        assert!((r - 2e-3).abs() < 1e-9, "{r}");

        let a4 = validate(&classic_tableau(ClassicKind::Avf4));
        assert!(a4.residual("symmetric_matrices").unwrap() <= 1e-15);
        assert!(matches!(a4.get("order4_sum"), Some(Check::NotApplicable(_))));
        assert!(a4.residual("kernel_symmetry").unwrap() <= 1e-14);
        let a4x = validate(&avf4_exact());
        assert_eq!(a4x.residual("kernel_symmetry"), Some(0.0));
        assert_eq!(a4x.residual("node_symmetry"), Some(0.0));
    }

    #[test]
    fn rejects_invalid_parameters() {
        assert!(FamilyParams::new(0.5, [0.0; 4], 1.0).is_err());
        assert!(FamilyParams::new(0.0, [0.0; 4], 1.0).is_err());
        assert!(FamilyParams::new(0.2, [0.0; 4], 0.0).is_err());
        assert!(FamilyParams::new(0.2, [f64::NAN, 0.0, 0.0, 0.0], 1.0).is_err());
        assert!(PcsrkTableau::<f64>::new("x", vec![SquareMatrix::identity(1)], vec![1.5], None).is_err());
    }

    #[test]
    fn simplifying_assumptions() {
        let p = exact_params((1, 5), [(1, 3), (2, 1), (-1, 4), (1, 1)], (-7, 2));
        let t = fourth_order_family(&p).unwrap();
        assert_eq!(t.c_poly(), Poly::new(vec![q(0, 1), q(1, 1), q(0, 1), q(0, 1)]));
        assert_eq!(simplifying_residual(&t, Simplifying::B, 1, 0).unwrap(), 0.0);
        assert_eq!(simplifying_residual(&t, Simplifying::C, 1, 0).unwrap(), 0.0);
        assert_eq!(simplifying_residual(&t, Simplifying::C, 1, 1).unwrap(), 0.0);
        assert!(simplifying_residual(&t, Simplifying::C, 2, 1).unwrap() > 1e-3);
        assert_eq!(simplifying_residual(&t, Simplifying::Chat, 1, 0).unwrap(), 0.0);
        // Consistency of the sum of the B kernels, in every shipped method.
        assert_eq!(simplifying_residual(&avf4_exact(), Simplifying::B, 1, 0).unwrap(), 0.0);
        assert_eq!(simplifying_residual(&avf2::<BigRational>(), Simplifying::B, 1, 0).unwrap(), 0.0);
        let b3 = simplifying_residual(&avf4_exact(), Simplifying::B, 3, 0).unwrap();
        assert!(b3.is_finite());
        assert!(simplifying_residual(&t, Simplifying::D, 1, 0).unwrap().is_finite());
        assert!(simplifying_residual(&t, Simplifying::Dhat, 1, 0).unwrap().is_finite());
        assert!(simplifying_residual(&t, Simplifying::B, 0, 1).is_err());
    }

    #[test]
    fn avf2_e_matrix_is_one_half() {
        for c in [q(1, 2), q(1, 3)] {
            let t = PcsrkTableau::new("a", vec![SquareMatrix::identity(1)], vec![c], None).unwrap();
            assert_eq!(assemble_e(&t).get(0, 0), &q(1, 2));
        }
    }

    #[test]
    fn spectrum_real_and_decomposes() {
        let p = FamilyParams::optimal_f64(-234.0).unwrap();
        let sd = e_matrix(&fourth_order_family(&p).unwrap()).unwrap();
        assert!(sd.real_distinct);
        let t = sd.t.as_ref().unwrap();
        let ti = sd.t_inv.as_ref().unwrap();
        let lam = DMatrix::from_diagonal(&nalgebra::DVector::from_iterator(3, sd.eigenvalues.iter().map(|z| z.re)));
        assert!((&sd.e * t - t * lam).amax() <= 1e-10 * sd.e.amax());
        assert!((t * ti - DMatrix::identity(3, 3)).amax() <= 1e-10);
    }

    #[test]
    fn spectrum_complex_cases() {
        for at in [5.0, -5.0, -200.0, -233.0] {
            let p = FamilyParams::new(0.2, [0.0; 4], at).unwrap();
            let sd = e_matrix(&fourth_order_family(&p).unwrap()).unwrap();
            assert!(!sd.real_distinct, "alpha_tilde {at}");
            assert!(sd.t.is_none());
        }
        let sd = e_matrix(&avf4_exact()).unwrap();
        assert!(!sd.real_distinct);
    }

    #[test]
    fn eigenvalues_do_not_depend_on_nodes() {
        let spec = |c1: f64| {
            let p = FamilyParams::new(c1, [0.3, -0.2, 1.1, 0.5], -250.0).unwrap();
            e_matrix(&fourth_order_family(&p).unwrap()).unwrap().real_eigenvalues().unwrap()
        };
        let base = spec(0.1);
        for c1 in [0.2, 0.3, 0.45] {
            for (a, b) in base.iter().zip(spec(c1)) {
                assert!((a - b).abs() <= 1e-11, "{a} vs {b}");
            }
        }
    }

    #[test]
    fn threshold_value() {
        assert!((parallel_threshold() - 0.7770503941).abs() < 1e-10);
        assert!(is_parallelizable(-234.0));
        assert!(!is_parallelizable(-200.0));
        assert!(!is_parallelizable(5.0));
    }

    #[test]
    fn cubic_roots_of_known_polynomials() {
        // (x-1)(x-2)(x-3)
        let r = cubic_roots(-6.0, 11.0, -6.0);
        let mut re: Vec<f64> = r.iter().map(|z| z.re).collect();
        re.sort_by(f64::total_cmp);
        for (a, b) in re.iter().zip([1.0, 2.0, 3.0]) {
            assert!((a - b).abs() < 1e-13);
        }
        // (x-1)(x²+1)
        let r = cubic_roots(-1.0, 1.0, -1.0);
        assert!(r.iter().filter(|z| z.im != 0.0).count() == 2);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn random_family_passes_validation(
            c1n in 1i64..49, g in proptest::array::uniform4(-40i64..40), at in -400i64..400
        ) {
            prop_assume!(at != 0);
            let exact = FamilyParams::new(
                q(c1n, 100),
                [q(g[0], 7), q(g[1], 5), q(g[2], 3), q(g[3], 11)],
                q(at, 2),
            ).unwrap();
            let t = fourth_order_family(&exact).unwrap();
            prop_assert_eq!(validate(&t).max_residual(), 0.0);
            let tf = fourth_order_family(&exact.to_f64()).unwrap();
            prop_assert!(validate(&tf).passes(1e-12));
        }
    }
}
