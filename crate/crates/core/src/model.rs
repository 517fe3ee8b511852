//! Poisson systems `dy/dt = S(y) ∇H(y)` and the concrete test problems.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

pub type State = DVector<f64>;

type ScalarFn = dyn Fn(&State) -> Result<f64> + Send + Sync;
type VectorFn = dyn Fn(&State) -> Result<State> + Send + Sync;

/// A named scalar quantity monitored along trajectories, e.g. a Casimir.
#[derive(Clone)]
pub struct Invariant {
    name: String,
    value: Arc<ScalarFn>,
    gradient: Arc<VectorFn>,
}

impl Invariant {
    pub fn new(
        name: impl Into<String>,
        value: impl Fn(&State) -> Result<f64> + Send + Sync + 'static,
        gradient: impl Fn(&State) -> Result<State> + Send + Sync + 'static,
    ) -> Self {
        Self {
            name: name.into(),
            value: Arc::new(value),
            gradient: Arc::new(gradient),
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn value(&self, y: &State) -> Result<f64> {
        (self.value)(y)
    }

    pub fn gradient(&self, y: &State) -> Result<State> {
        (self.gradient)(y)
    }
}

impl fmt::Debug for Invariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Invariant").field("name", &self.name).finish()
    }
}

/// A (possibly non-canonical) Poisson system. Implementations must be pure
/// functions of the state so they can be evaluated from several threads.
pub trait PoissonSystem: Send + Sync {
    fn dim(&self) -> usize;

    /// The skew-symmetric structure matrix `S(y)`.
    fn structure(&self, y: &State) -> Result<DMatrix<f64>>;

    fn grad_energy(&self, y: &State) -> Result<State>;

    fn energy(&self, y: &State) -> Result<f64>;

    /// Analytic `∇²H(y)`, when available.
    fn hessian(&self, _y: &State) -> Option<Result<DMatrix<f64>>> {
        None
    }

    fn invariants(&self) -> &[Invariant] {
        &[]
    }

    /// Whether `S` is independent of the state.
    fn constant_structure(&self) -> bool {
        false
    }
}

pub fn check_state(sys: &dyn PoissonSystem, y: &State) -> Result<()> {
    if y.len() != sys.dim() {
        return Err(Error::InvalidParameter(format!(
            "state has length {}, system dimension is {}",
            y.len(),
            sys.dim()
        )));
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("state"));
    }
    Ok(())
}

/// `∇²H(y)`: the analytic Hessian if the system has one, finite differences otherwise.
pub fn energy_hessian(sys: &dyn PoissonSystem, y: &State) -> Result<DMatrix<f64>> {
    match sys.hessian(y) {
        Some(h) => h,
        None => {
            let step = f64::EPSILON.cbrt() * y.amax().max(1.0);
            fd_hessian(sys, y, step)
        }
    }
}

/// Symmetrized central-difference Hessian of `H` built from `∇H`.
pub fn fd_hessian(sys: &dyn PoissonSystem, y: &State, step: f64) -> Result<DMatrix<f64>> {
    if !(step > 0.0) {
        return Err(Error::InvalidParameter(format!("finite-difference step must be positive, got {step}")));
    }
    let d = sys.dim();
    let mut hess = DMatrix::zeros(d, d);
    let mut yp = y.clone();
    for j in 0..d {
        yp[j] = y[j] + step;
        let gp = sys.grad_energy(&yp)?;
        yp[j] = y[j] - step;
        let gm = sys.grad_energy(&yp)?;
        yp[j] = y[j];
        for i in 0..d {
            hess[(i, j)] = (gp[i] - gm[i]) / (2.0 * step);
        }
    }
    if hess.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("finite-difference hessian"));
    }
    let sym = (&hess + hess.transpose()) * 0.5;
    Ok(sym)
}

/// `max |S + Sᵀ| / max(max |S|, tiny)`.
pub fn skew_defect(s: &DMatrix<f64>) -> f64 {
    let scale = s.amax().max(f64::MIN_POSITIVE);
    (s + s.transpose()).amax() / scale
}

/// Largest `|∇I(y)ᵀ S(y) ∇H(y)| / |∇H(y)|` over the given states.
pub fn invariant_defect(sys: &dyn PoissonSystem, inv: &Invariant, states: &[State]) -> Result<f64> {
    let mut worst: f64 = 0.0;
    for y in states {
        let g = sys.grad_energy(y)?;
        let flow = sys.structure(y)? * &g;
        let gi = inv.gradient(y)?;
        let v = gi.dot(&flow).abs() / g.norm().max(f64::MIN_POSITIVE);
        worst = worst.max(v);
    }
    Ok(worst)
}

/// Lotka–Volterra system in Poisson form, with parameters `(a, b, c, ν, μ)`.
///
/// `H(y) = ab y₁ + y₂ − a y₃ + ν ln y₂ − μ ln y₃`. Registers the Casimir
/// `C(y) = ab ln y₁ − b ln y₂ + ln y₃`, which is checked numerically at construction.
#[derive(Debug, Clone)]
pub struct LotkaVolterra {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub nu: f64,
    pub mu: f64,
    invariants: Vec<Invariant>,
}

/// The parameter set used in the reference experiments.
pub const LV_REFERENCE_PARAMS: [f64; 5] = [-2.0, -1.0, -0.5, 1.0, 2.0];
pub const LV_REFERENCE_Y0: [f64; 3] = [1.0, 1.9, 0.5];

pub fn lotka_volterra(a: f64, b: f64, c: f64, nu: f64, mu: f64) -> Result<LotkaVolterra> {
    if ![a, b, c, nu, mu].iter().all(|v| v.is_finite()) {
        return Err(Error::InvalidParameter("Lotka-Volterra parameters must be finite".into()));
    }
    let ab = a * b;
    let casimir = Invariant::new(
        "casimir",
        move |y: &State| {
            positive_components(y, &[0, 1, 2])?;
            Ok(ab * y[0].ln() - b * y[1].ln() + y[2].ln())
        },
        move |y: &State| {
            positive_components(y, &[0, 1, 2])?;
            Ok(State::from_vec(vec![ab / y[0], -b / y[1], 1.0 / y[2]]))
        },
    );
    let mut sys = LotkaVolterra {
        a,
        b,
        c,
        nu,
        mu,
        invariants: Vec::new(),
    };
    let states = random_positive_states(3, 100, 0x5eed_0001);
    let worst = invariant_defect(&sys, &casimir, &states)?;
    if !(worst <= 1e-10) {
        return Err(Error::InvariantRejected {
            name: casimir.name().to_string(),
            worst,
        });
    }
    sys.invariants.push(casimir);
    Ok(sys)
}

impl LotkaVolterra {
    /// The reference parameter set `(a, b, c, ν, μ) = (−2, −1, −0.5, 1, 2)`.
    pub fn reference() -> Self {
        let [a, b, c, nu, mu] = LV_REFERENCE_PARAMS;
        lotka_volterra(a, b, c, nu, mu).expect("reference parameters admit the Casimir")
    }
}

fn positive_components(y: &State, idx: &[usize]) -> Result<()> {
    for &i in idx {
        if !(y[i] > 0.0) {
            return Err(Error::Domain(format!("y_{} = {} must be positive", i + 1, y[i])));
        }
    }
    Ok(())
}

/// Deterministic random states with components in `[0.1, 5)`.
pub fn random_positive_states(dim: usize, count: usize, seed: u64) -> Vec<State> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| State::from_fn(dim, |_, _| rng.gen_range(0.1..5.0)))
        .collect()
}

impl PoissonSystem for LotkaVolterra {
    fn dim(&self) -> usize {
        3
    }

    fn structure(&self, y: &State) -> Result<DMatrix<f64>> {
        let (b, c) = (self.b, self.c);
        let (y1, y2, y3) = (y[0], y[1], y[2]);
        Ok(DMatrix::from_row_slice(
            3,
            3,
            &[
                0.0,
                c * y1 * y2,
                b * c * y1 * y3,
                -c * y1 * y2,
                0.0,
                -y2 * y3,
                -b * c * y1 * y3,
                y2 * y3,
                0.0,
            ],
        ))
    }

    fn grad_energy(&self, y: &State) -> Result<State> {
        positive_components(y, &[1, 2])?;
        Ok(State::from_vec(vec![
            self.a * self.b,
            1.0 + self.nu / y[1],
            -self.a - self.mu / y[2],
        ]))
    }

    fn energy(&self, y: &State) -> Result<f64> {
        positive_components(y, &[1, 2])?;
        Ok(self.a * self.b * y[0] + y[1] - self.a * y[2] + self.nu * y[1].ln() - self.mu * y[2].ln())
    }

    fn hessian(&self, y: &State) -> Option<Result<DMatrix<f64>>> {
        Some(positive_components(y, &[1, 2]).map(|_| {
            let mut h = DMatrix::zeros(3, 3);
            h[(1, 1)] = -self.nu / (y[1] * y[1]);
            h[(2, 2)] = self.mu / (y[2] * y[2]);
            h
        }))
    }

    fn invariants(&self) -> &[Invariant] {
        &self.invariants
    }
}

/// Constant-structure system with quadratic energy `½ yᵀAy + bᵀy`.
#[derive(Debug, Clone)]
pub struct QuadraticSystem {
    s: DMatrix<f64>,
    a: DMatrix<f64>,
    b: State,
}

pub fn constant_s_quadratic(s: DMatrix<f64>, a: DMatrix<f64>, b: State) -> Result<QuadraticSystem> {
    let d = s.nrows();
    if s.ncols() != d || a.nrows() != d || a.ncols() != d || b.len() != d {
        return Err(Error::InvalidParameter("S, A and b must have matching dimensions".into()));
    }
    if (&s + s.transpose()).amax() > 1e-14 {
        return Err(Error::InvalidParameter("S is not skew-symmetric".into()));
    }
    if (&a - a.transpose()).amax() > 1e-14 {
        return Err(Error::InvalidParameter("A is not symmetric".into()));
    }
    Ok(QuadraticSystem { s, a, b })
}

impl QuadraticSystem {
    /// `S = [[0, −1], [1, 0]]`, `A = I`: the unit harmonic oscillator.
    pub fn harmonic_oscillator() -> Self {
        constant_s_quadratic(
            DMatrix::from_row_slice(2, 2, &[0.0, -1.0, 1.0, 0.0]),
            DMatrix::identity(2, 2),
            State::zeros(2),
        )
        .expect("valid oscillator")
    }
}

impl PoissonSystem for QuadraticSystem {
    fn dim(&self) -> usize {
        self.s.nrows()
    }

    fn structure(&self, _y: &State) -> Result<DMatrix<f64>> {
        Ok(self.s.clone())
    }

    fn grad_energy(&self, y: &State) -> Result<State> {
        Ok(&self.a * y + &self.b)
    }

    fn energy(&self, y: &State) -> Result<f64> {
        Ok(0.5 * y.dot(&(&self.a * y)) + self.b.dot(y))
    }

    fn hessian(&self, _y: &State) -> Option<Result<DMatrix<f64>>> {
        Some(Ok(self.a.clone()))
    }

    fn constant_structure(&self) -> bool {
        true
    }
}

/// Dense synthetic problem for solver benchmarks: random skew `S`, random
/// symmetric `A`, and `H(y) = ½ yᵀAy + (κ/4) Σ yᵢ⁴`.
#[derive(Debug, Clone)]
pub struct SyntheticQuartic {
    s: DMatrix<f64>,
    a: DMatrix<f64>,
    kappa: f64,
}

impl SyntheticQuartic {
    pub fn random(dim: usize, kappa: f64, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let scale = 1.0 / (dim as f64).sqrt();
        let r = DMatrix::from_fn(dim, dim, |_, _| rng.gen_range(-1.0..1.0) * scale);
        let q = DMatrix::from_fn(dim, dim, |_, _| rng.gen_range(-1.0..1.0) * scale);
        let s = (&r - r.transpose()) * 0.5;
        let a = (&q + q.transpose()) * 0.5 + DMatrix::identity(dim, dim);
        Self { s, a, kappa }
    }

    pub fn initial_state(&self, seed: u64) -> State {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        State::from_fn(self.s.nrows(), |_, _| rng.gen_range(-1.0..1.0))
    }
}

impl PoissonSystem for SyntheticQuartic {
    fn dim(&self) -> usize {
        self.s.nrows()
    }

    fn structure(&self, _y: &State) -> Result<DMatrix<f64>> {
        Ok(self.s.clone())
    }

    fn grad_energy(&self, y: &State) -> Result<State> {
        Ok(&self.a * y + y.map(|v| self.kappa * v * v * v))
    }

    fn energy(&self, y: &State) -> Result<f64> {
        Ok(0.5 * y.dot(&(&self.a * y)) + 0.25 * self.kappa * y.iter().map(|v| v.powi(4)).sum::<f64>())
    }

    fn hessian(&self, y: &State) -> Option<Result<DMatrix<f64>>> {
        let mut h = self.a.clone();
        for i in 0..y.len() {
            h[(i, i)] += 3.0 * self.kappa * y[i] * y[i];
        }
        Some(Ok(h))
    }

    fn constant_structure(&self) -> bool {
        true
    }
}

/// A problem built from a name and `key=value` parameters, plus its default initial state.
pub struct NamedProblem {
    pub system: Box<dyn PoissonSystem>,
    pub y0: State,
}

fn param(params: &BTreeMap<String, String>, key: &str, default: f64) -> Result<f64> {
    match params.get(key) {
        None => Ok(default),
        Some(v) => v
            .trim()
            .parse::<f64>()
            .map_err(|_| Error::Config(format!("parameter {key}={v} is not a number"))),
    }
}

fn parse_y0(params: &BTreeMap<String, String>, dim: usize) -> Result<Option<State>> {
    let Some(text) = params.get("y0") else {
        return Ok(None);
    };
    let vals = text
        .split([',', ';'])
        .map(|t| t.trim().parse::<f64>())
        .collect::<std::result::Result<Vec<_>, _>>()
        .map_err(|_| Error::Config(format!("cannot parse y0={text}")))?;
    if vals.len() != dim {
        return Err(Error::Config(format!("y0 needs {dim} components, got {}", vals.len())));
    }
    Ok(Some(State::from_vec(vals)))
}

/// Builds `lotka-volterra`, `quadratic` or `synthetic` from `key=value` parameters.
pub fn problem_by_name(name: &str, params: &BTreeMap<String, String>) -> Result<NamedProblem> {
    let known: &[&str] = match name {
        "lotka-volterra" => &["a", "b", "c", "nu", "mu", "y0"],
        "quadratic" => &["a11", "a12", "a22", "b1", "b2", "y0"],
        "synthetic" => &["d", "kappa", "seed", "y0"],
        other => return Err(Error::Config(format!("unknown problem `{other}`"))),
    };
    if let Some(k) = params.keys().find(|k| !known.contains(&k.as_str())) {
        return Err(Error::Config(format!("unknown parameter `{k}` for problem {name}")));
    }
    match name {
        "lotka-volterra" => {
            let [a, b, c, nu, mu] = LV_REFERENCE_PARAMS;
            let sys = lotka_volterra(
                param(params, "a", a)?,
                param(params, "b", b)?,
                param(params, "c", c)?,
                param(params, "nu", nu)?,
                param(params, "mu", mu)?,
            )?;
            let y0 = parse_y0(params, 3)?.unwrap_or_else(|| State::from_row_slice(&LV_REFERENCE_Y0));
            Ok(NamedProblem {
                system: Box::new(sys),
                y0,
            })
        }
        "quadratic" => {
            let a12 = param(params, "a12", 0.0)?;
            let sys = constant_s_quadratic(
                DMatrix::from_row_slice(2, 2, &[0.0, -1.0, 1.0, 0.0]),
                DMatrix::from_row_slice(2, 2, &[param(params, "a11", 1.0)?, a12, a12, param(params, "a22", 1.0)?]),
                State::from_vec(vec![param(params, "b1", 0.0)?, param(params, "b2", 0.0)?]),
            )?;
            let y0 = parse_y0(params, 2)?.unwrap_or_else(|| State::from_vec(vec![1.0, 0.0]));
            Ok(NamedProblem {
                system: Box::new(sys),
                y0,
            })
        }
        _ => {
            let d = param(params, "d", 50.0)?;
            if !(d >= 1.0 && d.fract() == 0.0) {
                return Err(Error::Config(format!("synthetic dimension d={d} must be a positive integer")));
            }
            let seed = param(params, "seed", 7.0)? as u64;
            let sys = SyntheticQuartic::random(d as usize, param(params, "kappa", 0.5)?, seed);
            let y0 = parse_y0(params, d as usize)?.unwrap_or_else(|| sys.initial_state(seed + 1));
            Ok(NamedProblem {
                system: Box::new(sys),
                y0,
            })
        }
    }
}
