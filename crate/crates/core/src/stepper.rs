//! The one-step map of a PCSRK method.
//!
//! The stage polynomial `Y_τ` is stored through its values `Z_i = Y_{c_i}` and
//! interpolated on `{0, c₁, …, c_s}`. The stage equations are solved by the
//! simplified Newton iteration `(I − hE⊗J₀)ρ = −Φ(Z)`, either with one dense LU
//! or, when `E` has real distinct eigenvalues, with `s` independent `d × d` solves.

use std::cell::Cell;
use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector, Dyn, LU};
use serde::Serialize;

use crate::clock::Stopwatch;
use crate::error::{Error, Result};
use crate::model::{check_state, energy_hessian, PoissonSystem, State};
use crate::poly::lagrange_basis;
use crate::quad;
use crate::scalar::Scalar;
use crate::tableau::{assemble_e, e_matrix, PcsrkTableau, SpectralData};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum SolverMode {
    Auto,
    Full,
    Block,
}

impl FromStr for SolverMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "auto" => Ok(Self::Auto),
            "full" => Ok(Self::Full),
            "block" => Ok(Self::Block),
            other => Err(Error::Config(format!("unknown solver mode `{other}`"))),
        }
    }
}

impl fmt::Display for SolverMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Auto => "auto",
            Self::Full => "full",
            Self::Block => "block",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum JacobianRefresh {
    /// Recompute `J₀` and refactor at every step.
    PerStep,
    /// Compute `J₀` once at the initial state and reuse the factorization.
    Frozen,
}

impl FromStr for JacobianRefresh {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "per_step" | "per-step" => Ok(Self::PerStep),
            "frozen" => Ok(Self::Frozen),
            other => Err(Error::Config(format!("unknown jacobian refresh `{other}`"))),
        }
    }
}

/// Which approximation of the vector-field Jacobian goes into `I − hE⊗J₀`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum JacobianModel {
    /// `J₀ = S(y₀)∇²H(y₀)`; derivatives of `S` are dropped.
    StructureHessian,
    /// `J₀ = ∂(S∇H)/∂y` at `y₀`, with the `∂S` part by central differences.
    VectorField,
}

impl FromStr for JacobianModel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "structure_hessian" | "structure-hessian" => Ok(Self::StructureHessian),
            "vector_field" | "vector-field" => Ok(Self::VectorField),
            other => Err(Error::Config(format!("unknown jacobian model `{other}`"))),
        }
    }
}

/// `J₀` under the chosen model.
pub fn approximate_jacobian(sys: &dyn PoissonSystem, y0: &State, model: JacobianModel) -> Result<DMatrix<f64>> {
    let mut j0 = sys.structure(y0)? * energy_hessian(sys, y0)?;
    if model == JacobianModel::VectorField && !sys.constant_structure() {
        let g = sys.grad_energy(y0)?;
        let mut y = y0.clone();
        for k in 0..y0.len() {
            let step = f64::EPSILON.cbrt() * y0[k].abs().max(1.0);
            y[k] = y0[k] + step;
            let sp = sys.structure(&y)?;
            y[k] = y0[k] - step;
            let sm = sys.structure(&y)?;
            y[k] = y0[k];
            let col = (sp - sm) * &g / (2.0 * step);
            let mut target = j0.column_mut(k);
            target += col;
        }
        if j0.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("vector-field jacobian"));
        }
    }
    Ok(j0)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum WarmStart {
    /// All stages start at `y₀`.
    Constant,
    /// Stages start from the previous step's stage polynomial evaluated past `τ = 1`.
    Extrapolate,
}

impl FromStr for WarmStart {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "constant" => Ok(Self::Constant),
            "extrapolate" => Ok(Self::Extrapolate),
            other => Err(Error::Config(format!("unknown warm start `{other}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StepConfig {
    pub h: f64,
    /// Max-norm of the Newton update, relative to `max(1, ‖y₀‖∞)`.
    pub newton_tol: f64,
    pub max_newton_iters: usize,
    pub solver_mode: SolverMode,
    pub quad_tol: f64,
    pub quad_max_nodes: usize,
    pub jacobian_refresh: JacobianRefresh,
    pub jacobian: JacobianModel,
    /// Worker threads for the block solves; 1 runs them inline.
    pub threads: usize,
    pub warm_start: WarmStart,
}

impl Default for StepConfig {
    fn default() -> Self {
        Self {
            h: 0.05,
            newton_tol: 1e-13,
            max_newton_iters: 50,
            solver_mode: SolverMode::Auto,
            quad_tol: quad::DEFAULT_TOL,
            quad_max_nodes: quad::MAX_NODES,
            jacobian_refresh: JacobianRefresh::PerStep,
            jacobian: JacobianModel::StructureHessian,
            threads: 1,
            warm_start: WarmStart::Constant,
        }
    }
}

impl StepConfig {
    pub fn with_h(h: f64) -> Self {
        Self {
            h,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParameter(m));
        if !self.h.is_finite() {
            return bad(format!("step size must be finite, got {}", self.h));
        }
        if !(self.newton_tol > 0.0) {
            return bad(format!("newton_tol must be positive, got {}", self.newton_tol));
        }
        if !(self.quad_tol > 0.0) {
            return bad(format!("quad_tol must be positive, got {}", self.quad_tol));
        }
        if self.max_newton_iters == 0 {
            return bad("max_newton_iters must be at least 1".into());
        }
        if !(2 * quad::DEFAULT_START..=quad::MAX_NODES).contains(&self.quad_max_nodes) {
            return bad(format!(
                "quad_max_nodes must lie in [{}, {}], got {}",
                2 * quad::DEFAULT_START,
                quad::MAX_NODES,
                self.quad_max_nodes
            ));
        }
        Ok(())
    }
}

/// A tableau prepared for time stepping: all kernel weights in `f64`.
#[derive(Clone, Debug)]
pub struct PreparedMethod {
    name: String,
    s: usize,
    nodes: Vec<f64>,
    /// Lagrange basis on `{0, c₁, …, c_s}`, coefficients in increasing powers.
    basis: Vec<Vec<f64>>,
    /// `res_w[i][j]` = `r(c_i)ᵀ M_j`.
    res_w: Vec<Vec<Vec<f64>>>,
    /// `out_w[i]` = `r(1)ᵀ M_i`.
    out_w: Vec<Vec<f64>>,
    e: DMatrix<f64>,
    spectral: Option<SpectralData>,
    block_note: Option<String>,
}

impl PreparedMethod {
    pub fn new<T: Scalar>(t: &PcsrkTableau<T>) -> Result<Self> {
        let s = t.s();
        let mut pts = vec![T::zero()];
        pts.extend(t.nodes().iter().cloned());
        let basis = lagrange_basis(&pts)
            .iter()
            .map(|p| p.coeffs().iter().map(|c| c.to_f64()).collect())
            .collect();
        let to_f = |v: Vec<T>| v.iter().map(|x| x.to_f64()).collect::<Vec<f64>>();
        let res_w = t
            .nodes()
            .iter()
            .map(|ci| (0..s).map(|j| to_f(t.kernel_row(j, ci))).collect())
            .collect();
        let out_w = (0..s).map(|i| to_f(t.kernel_row(i, &T::one()))).collect();
        let e = assemble_e(t).to_dmatrix();
        let (spectral, block_note) = match e_matrix(t) {
            Ok(sd) if sd.real_distinct => (Some(sd), None),
            Ok(_) => (None, Some("E has complex or repeated eigenvalues".to_string())),
            Err(err) => (None, Some(err.to_string())),
        };
        Ok(Self {
            name: t.name().to_string(),
            s,
            nodes: t.nodes().iter().map(|c| c.to_f64()).collect(),
            basis,
            res_w,
            out_w,
            e,
            spectral,
            block_note,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn s(&self) -> usize {
        self.s
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn e(&self) -> &DMatrix<f64> {
        &self.e
    }

    pub fn spectral(&self) -> Option<&SpectralData> {
        self.spectral.as_ref()
    }

    /// Why block mode is unavailable, if it is.
    pub fn block_note(&self) -> Option<&str> {
        self.block_note.as_deref()
    }

    pub fn block_available(&self) -> bool {
        self.spectral.is_some()
    }

    fn resolve_mode(&self, mode: SolverMode) -> Result<SolverMode> {
        match mode {
            SolverMode::Full => Ok(SolverMode::Full),
            SolverMode::Block if self.block_available() => Ok(SolverMode::Block),
            SolverMode::Block => Err(Error::BlockModeUnavailable),
            SolverMode::Auto if self.block_available() => Ok(SolverMode::Block),
            SolverMode::Auto => Ok(SolverMode::Full),
        }
    }

    fn basis_at(&self, tau: f64) -> Vec<f64> {
        self.basis
            .iter()
            .map(|p| p.iter().rev().fold(0.0, |acc, c| acc * tau + c))
            .collect()
    }
}

/// Stage values `Z_i = Y_{c_i}` of one step, together with `y₀`.
#[derive(Clone, Debug)]
pub struct StageState {
    pub base: State,
    pub stages: Vec<State>,
}

impl StageState {
    pub fn constant(y0: &State, s: usize) -> Self {
        Self {
            base: y0.clone(),
            stages: vec![y0.clone(); s],
        }
    }


    fn add_stacked(&mut self, rho: &DVector<f64>) {
        let d = self.base.len();
        for (i, z) in self.stages.iter_mut().enumerate() {
            *z += rho.rows(i * d, d);
        }
    }
}

/// `Y_τ = y₀ l₀(τ) + Σ Z_i l_i(τ)`.
pub fn dense_eval(m: &PreparedMethod, st: &StageState, tau: f64) -> State {
    let l = m.basis_at(tau);
    let mut y = &st.base * l[0];
    for (z, li) in st.stages.iter().zip(&l[1..]) {
        y.axpy(*li, z, 1.0);
    }
    y
}

/// `∫₀¹ σ^k ∇H(Y_σ) dσ` for `k < s`, sharing one node set.
///
/// `start` carries the accepted rule size between Newton iterations. It only
/// grows within a step, so the residual does not flip between rules.
fn moments(
    m: &PreparedMethod,
    sys: &dyn PoissonSystem,
    st: &StageState,
    cfg: &StepConfig,
    start: &Cell<usize>,
) -> Result<Vec<State>> {
    let d = st.base.len();
    let s = m.s;
    let (flat, used) = quad::integrate_vec_counted(
        |sigma| {
            let y = dense_eval(m, st, sigma);
            let g = sys.grad_energy(&y)?;
            let mut out = Vec::with_capacity(s * d);
            let mut p = 1.0;
            for _ in 0..s {
                out.extend(g.iter().map(|v| v * p));
                p *= sigma;
            }
            Ok(out)
        },
        cfg.quad_tol,
        start.get(),
        cfg.quad_max_nodes,
    )?;
    start.set(used);
    Ok((0..s).map(|k| State::from_column_slice(&flat[k * d..(k + 1) * d])).collect())
}

fn combine(weights: &[f64], w: &[State]) -> State {
    let mut out = State::zeros(w[0].len());
    for (c, wk) in weights.iter().zip(w) {
        out.axpy(*c, wk, 1.0);
    }
    out
}

struct Evaluation {
    residual: DVector<f64>,
    y1: State,
}

fn evaluate(
    m: &PreparedMethod,
    sys: &dyn PoissonSystem,
    st: &StageState,
    h: f64,
    cfg: &StepConfig,
    start: &Cell<usize>,
) -> Result<Evaluation> {
    let d = st.base.len();
    let s = m.s;
    let w = moments(m, sys, st, cfg, start)?;
    let smat: Vec<DMatrix<f64>> = st.stages.iter().map(|z| sys.structure(z)).collect::<Result<_>>()?;
    let mut residual = DVector::zeros(s * d);
    for i in 0..s {
        let mut acc = State::zeros(d);
        for j in 0..s {
            let v = combine(&m.res_w[i][j], &w);
            acc += &smat[j] * v;
        }
        let phi = &st.stages[i] - &st.base - acc * h;
        residual.rows_mut(i * d, d).copy_from(&phi);
    }
    let mut inc = State::zeros(d);
    for i in 0..s {
        inc += &smat[i] * combine(&m.out_w[i], &w);
    }
    let y1 = &st.base + inc * h;
    if residual.iter().chain(y1.iter()).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("stage residual"));
    }
    Ok(Evaluation { residual, y1 })
}

/// `Φ(Z)`: the stacked stage residual.
pub fn residual(
    sys: &dyn PoissonSystem,
    m: &PreparedMethod,
    st: &StageState,
    cfg: &StepConfig,
) -> Result<DVector<f64>> {
    check_state(sys, &st.base)?;
    Ok(evaluate(m, sys, st, cfg.h, cfg, &Cell::new(quad::DEFAULT_START))?.residual)
}

/// Factored Newton matrix.
#[derive(Clone)]
enum Factorization {
    Full(LU<f64, Dyn, Dyn>),
    Block {
        t: DMatrix<f64>,
        t_inv: DMatrix<f64>,
        blocks: Vec<LU<f64, Dyn, Dyn>>,
    },
}

fn run_indexed<R: Send>(n: usize, threads: usize, f: impl Fn(usize) -> R + Sync) -> Vec<R> {
    let workers = threads.clamp(1, n.max(1));
    if workers == 1 {
        return (0..n).map(&f).collect();
    }
    let f = &f;
    let mut out: Vec<Option<R>> = (0..n).map(|_| None).collect();
    std::thread::scope(|scope| {
        let handles: Vec<_> = (0..workers)
            .map(|w| scope.spawn(move || (w..n).step_by(workers).map(|i| (i, f(i))).collect::<Vec<_>>()))
            .collect();
        for h in handles {
            for (i, r) in h.join().expect("solver worker panicked") {
                out[i] = Some(r);
            }
        }
    });
    out.into_iter().map(|r| r.expect("every index computed")).collect()
}

impl Factorization {
    fn build(m: &PreparedMethod, mode: SolverMode, h: f64, j0: &DMatrix<f64>, threads: usize) -> Result<(Self, usize)> {
        let d = j0.nrows();
        let s = m.s;
        match mode {
            SolverMode::Block => {
                let sd = m.spectral.as_ref().ok_or(Error::BlockModeUnavailable)?;
                let lams: Vec<f64> = sd.eigenvalues.iter().map(|z| z.re).collect();
                let blocks = run_indexed(s, threads, |i| (DMatrix::identity(d, d) - j0 * (h * lams[i])).lu());
                Ok((
                    Self::Block {
                        t: sd.t.clone().expect("real spectrum has eigenvectors"),
                        t_inv: sd.t_inv.clone().expect("real spectrum has eigenvectors"),
                        blocks,
                    },
                    s,
                ))
            }
            _ => {
                let n = s * d;
                let mut q = DMatrix::identity(n, n);
                for i in 0..s {
                    for j in 0..s {
                        let c = h * m.e[(i, j)];
                        if c != 0.0 {
                            let mut blk = q.view_mut((i * d, j * d), (d, d));
                            blk -= j0 * c;
                        }
                    }
                }
                Ok((Self::Full(q.lu()), 1))
            }
        }
    }

    fn mode(&self) -> SolverMode {
        match self {
            Self::Full(_) => SolverMode::Full,
            Self::Block { .. } => SolverMode::Block,
        }
    }

    /// Solves `(I − hE⊗J₀) ρ = rhs`.
    fn solve(&self, rhs: &DVector<f64>, d: usize, threads: usize) -> Result<DVector<f64>> {
        match self {
            Self::Full(lu) => lu.solve(rhs).ok_or(Error::Singular("newton matrix")),
            Self::Block { t, t_inv, blocks } => {
                let s = blocks.len();
                let mix = |mat: &DMatrix<f64>, v: &DVector<f64>| {
                    let mut out = DVector::zeros(s * d);
                    for i in 0..s {
                        for j in 0..s {
                            let c = mat[(i, j)];
                            if c != 0.0 {
                                let src = v.rows(j * d, d).into_owned();
                                let mut dst = out.rows_mut(i * d, d);
                                dst.axpy(c, &src, 1.0);
                            }
                        }
                    }
                    out
                };
                let bar = mix(t_inv, rhs);
                let parts = run_indexed(s, threads, |i| blocks[i].solve(&bar.rows(i * d, d).into_owned()));
                let mut sol = DVector::zeros(s * d);
                for (i, p) in parts.into_iter().enumerate() {
                    let p = p.ok_or(Error::Singular("newton block"))?;
                    sol.rows_mut(i * d, d).copy_from(&p);
                }
                Ok(mix(t, &sol))
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StepReport {
    /// Newton updates larger than the tolerance.
    pub iterations: usize,
    /// `‖Φ‖∞` at the accepted stages.
    pub final_residual_norm: f64,
    pub solver_mode_used: SolverMode,
    /// Newton-matrix factorizations performed in this step (blocks count individually).
    pub factorization_count: usize,
    pub wall_time: f64,
}

/// State carried between steps: cached factorization and the previous stages.
#[derive(Default)]
pub struct StepContext {
    frozen: Option<(Factorization, f64)>,
    previous: Option<StageState>,
}

impl StepContext {
    pub fn new() -> Self {
        Self::default()
    }
}

fn initial_stages(m: &PreparedMethod, y0: &State, cfg: &StepConfig, ctx: &StepContext) -> StageState {
    match (&cfg.warm_start, &ctx.previous) {
        (WarmStart::Extrapolate, Some(prev)) => StageState {
            base: y0.clone(),
            stages: m.nodes.iter().map(|c| dense_eval(m, prev, 1.0 + c)).collect(),
        },
        _ => StageState::constant(y0, m.s),
    }
}

/// Solves the stage equations and returns the converged stages with `y₁`.
pub fn newton_solve_with(
    sys: &dyn PoissonSystem,
    m: &PreparedMethod,
    y0: &State,
    cfg: &StepConfig,
    ctx: &mut StepContext,
) -> Result<(StageState, State, StepReport)> {
    cfg.validate()?;
    check_state(sys, y0)?;
    let clock = Stopwatch::start();
    let d = y0.len();
    let h = cfg.h;
    let mode = m.resolve_mode(cfg.solver_mode)?;
    let mut factorizations = 0;
    let fact = match (&cfg.jacobian_refresh, &ctx.frozen) {
        (JacobianRefresh::Frozen, Some((f, fh))) if *fh == h && f.mode() == mode => f.clone(),
        _ => {
            let j0 = approximate_jacobian(sys, y0, cfg.jacobian)?;
            let (f, count) = Factorization::build(m, mode, h, &j0, cfg.threads)?;
            factorizations = count;
            if cfg.jacobian_refresh == JacobianRefresh::Frozen {
                ctx.frozen = Some((f.clone(), h));
            }
            f
        }
    };

    let tol = cfg.newton_tol * y0.amax().max(1.0);
    let mut st = initial_stages(m, y0, cfg, ctx);
    let mut iterations = 0;
    let mut first_norm: Option<f64> = None;
    let mut growth = 0;
    let mut converged = false;
    let mut last_norm = f64::INFINITY;
    let rule = Cell::new(quad::DEFAULT_START);
    for _ in 0..=cfg.max_newton_iters {
        let ev = evaluate(m, sys, &st, h, cfg, &rule)?;
        let rho = fact.solve(&(-ev.residual), d, cfg.threads)?;
        let norm = rho.amax();
        if !norm.is_finite() {
            return Err(Error::NonFinite("newton update"));
        }
        last_norm = norm;
        st.add_stacked(&rho);
        if norm <= tol {
            converged = true;
            break;
        }
        iterations += 1;
        let n0 = *first_norm.get_or_insert(norm);
        growth = if norm > 1e3 * n0 { growth + 1 } else { 0 };
        if growth >= 2 {
            return Err(Error::NewtonDiverged {
                iteration: iterations,
                update_norm: norm,
            });
        }
        if iterations >= cfg.max_newton_iters {
            break;
        }
    }
    if !converged {
        return Err(Error::MaxIterations {
            iterations,
            update_norm: last_norm,
        });
    }
    let ev = evaluate(m, sys, &st, h, cfg, &rule)?;
    ctx.previous = Some(st.clone());
    let report = StepReport {
        iterations,
        final_residual_norm: ev.residual.amax(),
        solver_mode_used: mode,
        factorization_count: factorizations,
        wall_time: clock.seconds(),
    };
    Ok((st, ev.y1, report))
}

/// [`newton_solve_with`] without cross-step state.
pub fn newton_solve(
    sys: &dyn PoissonSystem,
    m: &PreparedMethod,
    y0: &State,
    cfg: &StepConfig,
) -> Result<(StageState, StepReport)> {
    let (st, _, rep) = newton_solve_with(sys, m, y0, cfg, &mut StepContext::new())?;
    Ok((st, rep))
}

/// One step `y₀ ↦ y₁ = y₀ + h Σ_i ∫ B_{i,τ} S(Z_i) ∇H(Y_τ) dτ`.
pub fn step(sys: &dyn PoissonSystem, m: &PreparedMethod, y0: &State, cfg: &StepConfig) -> Result<(State, StepReport)> {
    let (_, y1, rep) = newton_solve_with(sys, m, y0, cfg, &mut StepContext::new())?;
    Ok((y1, rep))
}

/// Accepted states with energy and invariant values.
#[derive(Clone, Debug)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<State>,
    pub energy: Vec<f64>,
    pub invariant_names: Vec<String>,
    /// `invariants[k][n]`: invariant `k` at step `n`.
    pub invariants: Vec<Vec<f64>>,
    /// One report per accepted step (none for the initial state).
    pub reports: Vec<StepReport>,
    /// The error that stopped the run early, if any.
    pub failure: Option<Error>,
}

impl Trajectory {
    pub fn last(&self) -> &State {
        self.states.last().expect("trajectory holds the initial state")
    }

    pub fn max_energy_drift(&self) -> f64 {
        let h0 = self.energy[0];
        self.energy.iter().map(|h| (h - h0).abs()).fold(0.0, f64::max)
    }

    pub fn max_invariant_drift(&self, name: &str) -> Option<f64> {
        let k = self.invariant_names.iter().position(|n| n == name)?;
        let v = &self.invariants[k];
        Some(v.iter().map(|x| (x - v[0]).abs()).fold(0.0, f64::max))
    }

    pub fn into_result(self) -> Result<Self> {
        match self.failure {
            Some(e) => Err(e),
            None => Ok(self),
        }
    }
}

/// Number of fixed steps of size `h` reaching `t_end`.
pub fn step_count(h: f64, t_end: f64) -> Result<usize> {
    if t_end == 0.0 {
        return Ok(0);
    }
    if h == 0.0 || !h.is_finite() || !t_end.is_finite() {
        return Err(Error::InvalidParameter(format!("cannot reach t_end={t_end} with h={h}")));
    }
    let n = t_end / h;
    let k = n.round();
    if k < 1.0 || (k - n).abs() > 1e-9 * k.max(1.0) {
        return Err(Error::InvalidParameter(format!(
            "t_end/h = {n} is not a positive integer"
        )));
    }
    Ok(k as usize)
}

/// Fixed-step integration from `y₀` to `t_end`. Stops at the first failed
/// step, keeping the accepted part of the trajectory.
pub fn integrate(
    sys: &dyn PoissonSystem,
    m: &PreparedMethod,
    y0: &State,
    h: f64,
    t_end: f64,
    cfg: &StepConfig,
) -> Result<Trajectory> {
    let steps = step_count(h, t_end)?;
    check_state(sys, y0)?;
    let cfg = StepConfig { h, ..cfg.clone() };
    cfg.validate()?;
    let invs = sys.invariants();
    let mut traj = Trajectory {
        times: vec![0.0],
        states: vec![y0.clone()],
        energy: vec![sys.energy(y0)?],
        invariant_names: invs.iter().map(|i| i.name().to_string()).collect(),
        invariants: invs.iter().map(|i| i.value(y0).map(|v| vec![v])).collect::<Result<_>>()?,
        reports: Vec::with_capacity(steps),
        failure: None,
    };
    let mut ctx = StepContext::new();
    let mut y = y0.clone();
    for n in 1..=steps {
        let outcome = newton_solve_with(sys, m, &y, &cfg, &mut ctx).and_then(|(_, y1, rep)| {
            let e = sys.energy(&y1)?;
            let vals = invs.iter().map(|i| i.value(&y1)).collect::<Result<Vec<_>>>()?;
            Ok((y1, rep, e, vals))
        });
        match outcome {
            Ok((y1, rep, e, vals)) => {
                traj.times.push(n as f64 * h);
                traj.energy.push(e);
                for (series, v) in traj.invariants.iter_mut().zip(vals) {
                    series.push(v);
                }
                traj.reports.push(rep);
                traj.states.push(y1.clone());
                y = y1;
            }
            Err(e) => {
                traj.failure = Some(e);
                break;
            }
        }
    }
    Ok(traj)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{constant_s_quadratic, LotkaVolterra, QuadraticSystem, LV_REFERENCE_Y0};
    use crate::tableau::{avf2, classic_tableau, csrk_alpha_family, fourth_order_family, ClassicKind, FamilyParams};

    fn family(at: f64) -> PreparedMethod {
        let p = FamilyParams::optimal_f64(at).unwrap();
        PreparedMethod::new(&fourth_order_family(&p).unwrap()).unwrap()
    }

    fn y0() -> State {
        State::from_row_slice(&LV_REFERENCE_Y0)
    }

    #[test]
    fn dense_output_interpolates() {
        let m = family(-234.0);
        let st = StageState {
            base: y0(),
            stages: vec![
                State::from_vec(vec![1.1, 1.8, 0.6]),
                State::from_vec(vec![1.2, 1.7, 0.7]),
                State::from_vec(vec![1.3, 1.6, 0.8]),
            ],
        };
        assert_eq!(dense_eval(&m, &st, 0.0), y0());
        let z = dense_eval(&m, &st, 0.5);
        assert!((z - &st.stages[1]).amax() < 1e-14);
    }

    #[test]
    fn zero_step_is_identity() {
        let sys = LotkaVolterra::reference();
        let m = family(-234.0);
        let st = StageState::constant(&y0(), 3);
        let r = residual(&sys, &m, &st, &StepConfig::with_h(0.0)).unwrap();
        assert_eq!(r.amax(), 0.0);
        let (y1, rep) = step(&sys, &m, &y0(), &StepConfig::with_h(0.0)).unwrap();
        assert_eq!(rep.iterations, 0);
        assert_eq!(y1, y0());
    }

    #[test]
    fn avf2_dense_output_reaches_y1() {
        let sys = LotkaVolterra::reference();
        let m = PreparedMethod::new(&avf2::<f64>()).unwrap();
        let (st, y1, _) = newton_solve_with(&sys, &m, &y0(), &StepConfig::with_h(0.1), &mut StepContext::new()).unwrap();
        assert!((dense_eval(&m, &st, 1.0) - y1).amax() < 1e-12);
    }

    #[test]
    fn energy_preserved_in_one_step() {
        let sys = LotkaVolterra::reference();
        for m in [
            family(-234.0),
            PreparedMethod::new(&classic_tableau(ClassicKind::Avf4)).unwrap(),
            PreparedMethod::new(&avf2::<f64>()).unwrap(),
        ] {
            let (y1, rep) = step(&sys, &m, &y0(), &StepConfig::with_h(0.05)).unwrap();
            let h0 = sys.energy(&y0()).unwrap();
            assert!((sys.energy(&y1).unwrap() - h0).abs() <= 1e-12 * h0.abs(), "{}", m.name());
            assert!(rep.final_residual_norm <= 1e-12);
        }
    }

    #[test]
    fn block_and_full_agree() {
        let sys = LotkaVolterra::reference();
        let m = family(-234.0);
        assert!(m.block_available());
        let mut cfg = StepConfig::with_h(0.05);
        cfg.solver_mode = SolverMode::Full;
        let (yf, rf) = step(&sys, &m, &y0(), &cfg).unwrap();
        cfg.solver_mode = SolverMode::Block;
        cfg.threads = 3;
        let (yb, rb) = step(&sys, &m, &y0(), &cfg).unwrap();
        assert_eq!(rf.solver_mode_used, SolverMode::Full);
        assert_eq!(rb.solver_mode_used, SolverMode::Block);
        assert_eq!(rb.factorization_count, 3);
        assert!((yf - &yb).amax() <= 1e-10 * yb.amax());
    }

    #[test]
    fn block_mode_rejected_for_complex_spectrum() {
        let sys = LotkaVolterra::reference();
        let m = family(5.0);
        let mut cfg = StepConfig::with_h(0.05);
        cfg.solver_mode = SolverMode::Block;
        assert!(matches!(step(&sys, &m, &y0(), &cfg), Err(Error::BlockModeUnavailable)));
        cfg.solver_mode = SolverMode::Auto;
        assert_eq!(step(&sys, &m, &y0(), &cfg).unwrap().1.solver_mode_used, SolverMode::Full);
    }

    #[test]
    fn symmetric_round_trip() {
        let sys = LotkaVolterra::reference();
        let m = family(-234.0);
        let (y1, _) = step(&sys, &m, &y0(), &StepConfig::with_h(0.1)).unwrap();
        let (back, _) = step(&sys, &m, &y1, &StepConfig::with_h(-0.1)).unwrap();
        assert!((back - y0()).norm() <= 1e-10 * y0().norm());
    }

    #[test]
    fn linear_problem_converges_in_one_iteration() {
        let sys = constant_s_quadratic(
            DMatrix::from_row_slice(2, 2, &[0.0, -1.0, 1.0, 0.0]),
            DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]),
            State::from_vec(vec![0.1, -0.2]),
        )
        .unwrap();
        let m = family(-234.0);
        let (_, rep) = step(&sys, &m, &State::from_vec(vec![1.0, 0.5]), &StepConfig::with_h(0.2)).unwrap();
        assert!(rep.iterations <= 2, "{rep:?}");
    }

    #[test]
    fn constant_structure_collapses_to_csrk() {
        let sys = QuadraticSystem::harmonic_oscillator();
        let p = FamilyParams::optimal_f64(-234.0).unwrap();
        let fam = fourth_order_family(&p).unwrap();
        let csrk = PcsrkTableau::from_csrk("csrk", &csrk_alpha_family(&-234.0).unwrap(), fam.nodes().to_vec()).unwrap();
        let a = PreparedMethod::new(&fam).unwrap();
        let b = PreparedMethod::new(&csrk).unwrap();
        let y = State::from_vec(vec![1.0, 0.0]);
        let mut cfg = StepConfig::with_h(0.3);
        cfg.solver_mode = SolverMode::Full;
        let (ya, _) = step(&sys, &a, &y, &cfg).unwrap();
        let (yb, _) = step(&sys, &b, &y, &cfg).unwrap();
        assert!((ya - yb).amax() <= 1e-12);
    }

    #[test]
    fn integrate_bookkeeping() {
        let sys = LotkaVolterra::reference();
        let m = family(-234.0);
        let t = integrate(&sys, &m, &y0(), 0.05, 0.0, &StepConfig::default()).unwrap();
        assert_eq!(t.states.len(), 1);
        let t = integrate(&sys, &m, &y0(), 0.05, 1.0, &StepConfig::default()).unwrap();
        assert!(t.failure.is_none());
        assert_eq!(t.states.len(), 21);
        assert_eq!(t.invariant_names, vec!["casimir".to_string()]);
        assert!(t.max_energy_drift() < 1e-12);
        assert!(integrate(&sys, &m, &y0(), 0.3, 1.0, &StepConfig::default()).is_err());
    }

    #[test]
    fn warm_start_and_frozen_jacobian_reach_the_same_answer() {
        let sys = LotkaVolterra::reference();
        let m = family(-234.0);
        let base = integrate(&sys, &m, &y0(), 0.05, 1.0, &StepConfig::default()).unwrap();
        let mut warm = StepConfig::default();
        warm.warm_start = WarmStart::Extrapolate;
        let mut frozen = StepConfig::default();
        frozen.jacobian_refresh = JacobianRefresh::Frozen;
        for cfg in [warm, frozen] {
            let alt = integrate(&sys, &m, &y0(), 0.05, 1.0, &cfg).unwrap().into_result().unwrap();
            let diff = (base.last() - alt.last()).amax();
            assert!(diff < 1e-11, "{diff}");
            if cfg.jacobian_refresh == JacobianRefresh::Frozen {
                assert_eq!(alt.reports[1].factorization_count, 0);
            }
        }
    }

    #[test]
    fn domain_failure_keeps_partial_trajectory() {
        let sys = LotkaVolterra::reference();
        let m = PreparedMethod::new(&avf2::<f64>()).unwrap();
        let t = integrate(&sys, &m, &y0(), 2.0, 40.0, &StepConfig::default()).unwrap();
        assert!(t.failure.is_some());
        assert!(!t.states.is_empty());
    }

    #[test]
    fn vector_field_jacobian() {
        let sys = LotkaVolterra::reference();
        let y = y0();
        let j = approximate_jacobian(&sys, &y, JacobianModel::VectorField).unwrap();
        let f = |y: &State| sys.structure(y).unwrap() * sys.grad_energy(y).unwrap();
        let step = 1e-6;
        for k in 0..3 {
            let (mut yp, mut ym) = (y.clone(), y.clone());
            yp[k] += step;
            ym[k] -= step;
            let col = (f(&yp) - f(&ym)) / (2.0 * step);
            assert!((col - j.column(k)).amax() < 1e-7);
        }
        let q = QuadraticSystem::harmonic_oscillator();
        let z = State::from_vec(vec![0.3, -0.4]);
        assert_eq!(
            approximate_jacobian(&q, &z, JacobianModel::VectorField).unwrap(),
            approximate_jacobian(&q, &z, JacobianModel::StructureHessian).unwrap()
        );
    }

    #[test]
    fn vector_field_jacobian_resolves_large_avf4_step() {
        let sys = LotkaVolterra::reference();
        let m = PreparedMethod::new(&classic_tableau(ClassicKind::Avf4)).unwrap();
        let mut cfg = StepConfig::with_h(0.25);
        cfg.jacobian = JacobianModel::VectorField;
        let t = integrate(&sys, &m, &y0(), 0.25, 1.0, &cfg).unwrap();
        assert!(t.failure.is_none());
        assert!(t.reports.iter().all(|r| r.iterations < 50));
    }
}
