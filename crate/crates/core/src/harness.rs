//! Experiment driver: convergence studies, invariant drift, tableau inspection
//! and a solver benchmark. Everything here writes plain CSV plus a text summary.

use std::collections::BTreeMap;
use std::fmt;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use num_rational::BigRational;
use serde::Serialize;

use crate::clock::Stopwatch;
use crate::error::{Error, Result};
use crate::model::{problem_by_name, NamedProblem, State, SyntheticQuartic};
use crate::ptrees::{certified_order, order_conditions};
use crate::scalar::{QuadSurd, Scalar};
use crate::stepper::{integrate, step_count, PreparedMethod, SolverMode, StepConfig, StepContext, Trajectory};
use crate::tableau::{
    avf2, avf4_exact, e_matrix, fourth_order_family, is_parallelizable, parallel_threshold, validate, ClassicKind,
    FamilyParams, PcsrkTableau, ValidationReport,
};

/// Which integrator to run.
#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum MethodSpec {
    Avf2,
    Avf4,
    /// The fourth-order family. `c1`/`gamma` default to the optimal values.
    Proposed {
        alpha_tilde: f64,
        c1: Option<f64>,
        gamma: Option<[f64; 4]>,
    },
}

impl MethodSpec {
    pub fn proposed(alpha_tilde: f64) -> Self {
        Self::Proposed {
            alpha_tilde,
            c1: None,
            gamma: None,
        }
    }

    /// Exact parameters, when `c1` and `γ` are the defaults: `Q(√15)` with a
    /// rational `ᾶ` recovered from its `f64` value.
    fn exact_params(&self) -> Option<FamilyParams<QuadSurd>> {
        match self {
            Self::Proposed {
                alpha_tilde,
                c1: None,
                gamma: None,
            } => {
                let at = BigRational::from_float(*alpha_tilde)?;
                FamilyParams::new_checked_optimal(at)
            }
            _ => None,
        }
    }

    pub fn params_f64(&self) -> Result<Option<FamilyParams<f64>>> {
        match self {
            Self::Proposed { alpha_tilde, c1, gamma } => {
                let mut p = FamilyParams::optimal_f64(*alpha_tilde)?;
                if c1.is_some() || gamma.is_some() {
                    p = FamilyParams::new(
                        c1.unwrap_or(*p.c1()),
                        gamma.unwrap_or(*p.gamma()),
                        *alpha_tilde,
                    )?;
                }
                Ok(Some(p))
            }
            _ => Ok(None),
        }
    }

    /// The tableau in `f64`. Default-parameter family members are built
    /// exactly and rounded once.
    pub fn tableau(&self) -> Result<PcsrkTableau<f64>> {
        match self {
            Self::Avf2 => Ok(avf2::<f64>()),
            Self::Avf4 => Ok(avf4_exact().to_f64()),
            Self::Proposed { .. } => match self.exact_params() {
                Some(p) => Ok(fourth_order_family(&p)?.to_f64()),
                None => fourth_order_family(&self.params_f64()?.expect("family member")),
            },
        }
    }

    pub fn prepare(&self) -> Result<PreparedMethod> {
        PreparedMethod::new(&self.tableau()?)
    }

    fn from_map(map: &BTreeMap<String, String>) -> Result<Self> {
        let name = map.get("method").map(String::as_str).unwrap_or("proposed");
        match name {
            "proposed" => {
                let alpha_tilde = get_f64(map, "alpha_tilde")?.unwrap_or(-234.0);
                let c1 = get_f64(map, "c1")?;
                let gamma = match map.get("gamma") {
                    None => None,
                    Some(text) => {
                        let v = parse_list(text)?;
                        let arr: [f64; 4] = v
                            .try_into()
                            .map_err(|_| Error::Config(format!("gamma needs 4 values, got `{text}`")))?;
                        Some(arr)
                    }
                };
                Ok(Self::Proposed { alpha_tilde, c1, gamma })
            }
            other => match ClassicKind::from_str(other)? {
                ClassicKind::Avf2 => Ok(Self::Avf2),
                ClassicKind::Avf4 => Ok(Self::Avf4),
            },
        }
    }
}

impl FamilyParams<QuadSurd> {
    fn new_checked_optimal(at: BigRational) -> Option<Self> {
        if num_traits::Zero::is_zero(&at) {
            None
        } else {
            Some(Self::optimal(at))
        }
    }
}

impl fmt::Display for MethodSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Avf2 => f.write_str("avf2"),
            Self::Avf4 => f.write_str("avf4"),
            Self::Proposed { alpha_tilde, c1, gamma } => {
                write!(f, "proposed(alpha_tilde={alpha_tilde}")?;
                if let Some(c) = c1 {
                    write!(f, ", c1={c}")?;
                }
                if let Some(g) = gamma {
                    write!(f, ", gamma={g:?}")?;
                }
                f.write_str(")")
            }
        }
    }
}

/// Everything a harness run needs.
#[derive(Clone, Debug, Serialize)]
pub struct ExperimentConfig {
    pub problem: String,
    pub problem_params: BTreeMap<String, String>,
    pub method: MethodSpec,
    /// Step sizes, strictly decreasing.
    pub ladder: Vec<f64>,
    pub t_end: f64,
    /// The reference run uses `h_min / reference_factor`.
    pub reference_factor: usize,
    /// How many of the smallest step sizes enter the slope fit.
    pub fit_points: usize,
    pub step: StepConfig,
    pub out_dir: Option<PathBuf>,
    pub seed: u64,
}

pub const CONFIG_KEYS: &[&str] = &[
    "problem",
    "method",
    "alpha_tilde",
    "c1",
    "gamma",
    "h",
    "h_max",
    "levels",
    "ladder",
    "t_end",
    "reference_factor",
    "fit_points",
    "newton_tol",
    "max_newton_iters",
    "solver_mode",
    "quad_tol",
    "quad_max_nodes",
    "jacobian_refresh",
    "jacobian",
    "warm_start",
    "threads",
    "out",
    "seed",
];

/// `h_max · 2^-k` for `k = 0..levels`.
pub fn geometric_ladder(h_max: f64, levels: usize) -> Vec<f64> {
    (0..levels).map(|k| h_max * 0.5f64.powi(k as i32)).collect()
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            problem: "lotka-volterra".into(),
            problem_params: BTreeMap::new(),
            method: MethodSpec::proposed(-234.0),
            ladder: geometric_ladder(0.25, 8),
            t_end: 1.0,
            reference_factor: 64,
            fit_points: 5,
            step: StepConfig::default(),
            out_dir: None,
            seed: 0,
        }
    }
}

/// Parses `key = value` lines; `#` starts a comment.
pub fn parse_key_values(text: &str) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("line {}: expected key = value", n + 1)))?;
        out.insert(k.trim().to_string(), v.trim().to_string());
    }
    Ok(out)
}

fn get_f64(map: &BTreeMap<String, String>, key: &str) -> Result<Option<f64>> {
    map.get(key)
        .map(|v| v.parse::<f64>().map_err(|_| Error::Config(format!("{key}={v} is not a number"))))
        .transpose()
}

fn get_parsed<T: FromStr>(map: &BTreeMap<String, String>, key: &str) -> Result<Option<T>> {
    map.get(key)
        .map(|v| v.parse::<T>().map_err(|_| Error::Config(format!("{key}={v} is not valid"))))
        .transpose()
}

fn get_enum<T: FromStr<Err = Error>>(map: &BTreeMap<String, String>, key: &str) -> Result<Option<T>> {
    map.get(key).map(|v| v.parse::<T>()).transpose()
}

fn parse_list(text: &str) -> Result<Vec<f64>> {
    text.split([',', ';'])
        .map(|t| t.trim().parse::<f64>().map_err(|_| Error::Config(format!("cannot parse list `{text}`"))))
        .collect()
}

impl ExperimentConfig {
    /// Builds a config from `key = value` pairs. Keys starting with `param.`
    /// are passed to the problem constructor.
    pub fn from_map(map: &BTreeMap<String, String>) -> Result<Self> {
        let mut cfg = Self::default();
        let mut problem_params = BTreeMap::new();
        for (k, v) in map {
            if let Some(p) = k.strip_prefix("param.") {
                problem_params.insert(p.to_string(), v.clone());
            } else if !CONFIG_KEYS.contains(&k.as_str()) {
                return Err(Error::Config(format!("unknown config key `{k}`")));
            }
        }
        cfg.problem_params = problem_params;
        if let Some(p) = map.get("problem") {
            cfg.problem = p.clone();
        }
        cfg.method = MethodSpec::from_map(map)?;
        if let Some(text) = map.get("ladder") {
            cfg.ladder = parse_list(text)?;
        } else {
            let h_max = get_f64(map, "h_max")?.unwrap_or(0.25);
            let levels = get_parsed::<usize>(map, "levels")?.unwrap_or(8);
            cfg.ladder = geometric_ladder(h_max, levels);
        }
        if let Some(t) = get_f64(map, "t_end")? {
            cfg.t_end = t;
        }
        if let Some(r) = get_parsed(map, "reference_factor")? {
            cfg.reference_factor = r;
        }
        if let Some(f) = get_parsed(map, "fit_points")? {
            cfg.fit_points = f;
        }
        if let Some(s) = get_parsed(map, "seed")? {
            cfg.seed = s;
        }
        cfg.out_dir = map.get("out").map(PathBuf::from);
        let st = &mut cfg.step;
        if let Some(h) = get_f64(map, "h")? {
            st.h = h;
        }
        if let Some(v) = get_f64(map, "newton_tol")? {
            st.newton_tol = v;
        }
        if let Some(v) = get_parsed(map, "max_newton_iters")? {
            st.max_newton_iters = v;
        }
        if let Some(v) = get_enum(map, "solver_mode")? {
            st.solver_mode = v;
        }
        if let Some(v) = get_f64(map, "quad_tol")? {
            st.quad_tol = v;
        }
        if let Some(v) = get_parsed(map, "quad_max_nodes")? {
            st.quad_max_nodes = v;
        }
        if let Some(v) = get_enum(map, "jacobian_refresh")? {
            st.jacobian_refresh = v;
        }
        if let Some(v) = get_enum(map, "jacobian")? {
            st.jacobian = v;
        }
        if let Some(v) = get_enum(map, "warm_start")? {
            st.warm_start = v;
        }
        if let Some(v) = get_parsed(map, "threads")? {
            st.threads = v;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.ladder.is_empty() {
            return bad("ladder is empty".into());
        }
        if self.ladder.windows(2).any(|w| !(w[0] > w[1])) {
            return bad(format!("ladder must be strictly decreasing: {:?}", self.ladder));
        }
        if self.reference_factor == 0 {
            return bad("reference_factor must be positive".into());
        }
        if self.fit_points < 2 {
            return bad("fit_points must be at least 2".into());
        }
        for &h in &self.ladder {
            step_count(h, self.t_end).map_err(|e| Error::Config(e.to_string()))?;
        }
        self.step.validate().map_err(|e| Error::Config(e.to_string()))?;
        Ok(())
    }

    pub fn problem(&self) -> Result<NamedProblem> {
        problem_by_name(&self.problem, &self.problem_params)
    }

    pub fn h_min(&self) -> f64 {
        *self.ladder.last().expect("validated ladder")
    }
}

/// `{:.16e}`: seventeen significant digits.
pub fn sci(x: f64) -> String {
    format!("{x:.16e}")
}

fn opt_sci(x: Option<f64>) -> String {
    x.map_or_else(|| "nan".to_string(), sci)
}

#[derive(Clone, Debug, Serialize)]
pub struct ConvergenceRow {
    pub h: f64,
    pub error: Option<f64>,
    /// Slope against the previous successful row.
    pub local_slope: Option<f64>,
    pub failure: Option<String>,
}

#[derive(Clone, Debug, Serialize)]
pub struct ConvergenceTable {
    pub method: String,
    pub reference_h: f64,
    pub rows: Vec<ConvergenceRow>,
    /// Least-squares slope of `log error` on `log h` over the fitted rows.
    pub slope: Option<f64>,
    pub fitted_h: Vec<f64>,
}

impl ConvergenceTable {
    pub fn error_at(&self, h: f64) -> Option<f64> {
        self.rows.iter().find(|r| (r.h - h).abs() <= 1e-12 * h).and_then(|r| r.error)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("h,error,local_slope\n");
        for r in &self.rows {
            let _ = writeln!(s, "{},{},{}", sci(r.h), opt_sci(r.error), opt_sci(r.local_slope));
        }
        s
    }
}

impl fmt::Display for ConvergenceTable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "method {}  reference h = {:e}", self.method, self.reference_h)?;
        writeln!(f, "{:>12}  {:>12}  {:>8}", "h", "error", "slope")?;
        for r in &self.rows {
            let err = r.error.map_or("-".into(), |e| format!("{e:.4e}"));
            let sl = r.local_slope.map_or("-".into(), |e| format!("{e:.3}"));
            write!(f, "{:>12.6e}  {err:>12}  {sl:>8}", r.h)?;
            if let Some(msg) = &r.failure {
                write!(f, "  failed: {msg}")?;
            }
            writeln!(f)?;
        }
        match self.slope {
            Some(s) => writeln!(f, "fitted slope {s:.4} over {} step sizes", self.fitted_h.len()),
            None => writeln!(f, "fitted slope unavailable"),
        }
    }
}

/// Least-squares slope of `y` on `x`.
pub fn fit_slope(x: &[f64], y: &[f64]) -> Option<f64> {
    let n = x.len();
    if n < 2 || n != y.len() {
        return None;
    }
    let mx = x.iter().sum::<f64>() / n as f64;
    let my = y.iter().sum::<f64>() / n as f64;
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

fn run(cfg: &ExperimentConfig, prob: &NamedProblem, m: &PreparedMethod, h: f64) -> Result<Trajectory> {
    integrate(prob.system.as_ref(), m, &prob.y0, h, cfg.t_end, &cfg.step)
}

/// Error at `t_end` for every ladder entry against a self-reference run.
pub fn converge(cfg: &ExperimentConfig) -> Result<ConvergenceTable> {
    cfg.validate()?;
    let prob = cfg.problem()?;
    let m = cfg.method.prepare()?;
    let reference_h = cfg.h_min() / cfg.reference_factor as f64;
    let reference = run(cfg, &prob, &m, reference_h)?.into_result()?;
    let y_ref = reference.last().clone();

    let outcomes: Vec<Result<Trajectory>> = if cfg.step.threads > 1 {
        std::thread::scope(|scope| {
            let handles: Vec<_> = cfg
                .ladder
                .iter()
                .map(|&h| {
                    let (prob, m) = (&prob, &m);
                    scope.spawn(move || run(cfg, prob, m, h))
                })
                .collect();
            handles.into_iter().map(|h| h.join().expect("ladder worker panicked")).collect()
        })
    } else {
        cfg.ladder.iter().map(|&h| run(cfg, &prob, &m, h)).collect()
    };

    let mut rows: Vec<ConvergenceRow> = Vec::new();
    let mut prev: Option<(f64, f64)> = None;
    for (&h, outcome) in cfg.ladder.iter().zip(outcomes) {
        let res = outcome.and_then(Trajectory::into_result);
        let row = match res {
            Ok(traj) => {
                let err = (traj.last() - &y_ref).norm();
                let local = prev.map(|(ph, pe)| (pe / err).ln() / (ph / h).ln());
                prev = Some((h, err));
                ConvergenceRow {
                    h,
                    error: Some(err),
                    local_slope: local,
                    failure: None,
                }
            }
            Err(e) => ConvergenceRow {
                h,
                error: None,
                local_slope: None,
                failure: Some(e.to_string()),
            },
        };
        rows.push(row);
    }
    let ok: Vec<&ConvergenceRow> = rows.iter().filter(|r| r.error.is_some_and(|e| e > 0.0)).collect();
    let fitted: Vec<&ConvergenceRow> = ok.iter().rev().take(cfg.fit_points).rev().copied().collect();
    let xs: Vec<f64> = fitted.iter().map(|r| r.h.ln()).collect();
    let ys: Vec<f64> = fitted.iter().map(|r| r.error.unwrap().ln()).collect();
    Ok(ConvergenceTable {
        method: cfg.method.to_string(),
        reference_h,
        slope: fit_slope(&xs, &ys),
        fitted_h: fitted.iter().map(|r| r.h).collect(),
        rows,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct DriftTable {
    pub method: String,
    pub h: f64,
    pub times: Vec<f64>,
    pub energy_drift: Vec<f64>,
    pub invariant_names: Vec<String>,
    /// `invariant_drift[k][n] = I_k(y_n) − I_k(y_0)`.
    pub invariant_drift: Vec<Vec<f64>>,
    pub max_energy_drift: f64,
    pub max_invariant_drift: Vec<f64>,
    pub mean_newton_iterations: f64,
    pub failure: Option<String>,
}

impl DriftTable {
    pub fn max_drift_of(&self, name: &str) -> Option<f64> {
        let k = self.invariant_names.iter().position(|n| n == name)?;
        Some(self.max_invariant_drift[k])
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("t,energy_drift");
        for n in &self.invariant_names {
            let _ = write!(s, ",{n}_drift");
        }
        s.push('\n');
        for (i, t) in self.times.iter().enumerate() {
            let _ = write!(s, "{},{}", sci(*t), sci(self.energy_drift[i]));
            for series in &self.invariant_drift {
                let _ = write!(s, ",{}", sci(series[i]));
            }
            s.push('\n');
        }
        s
    }
}

impl fmt::Display for DriftTable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "method {}  h = {}  steps = {}", self.method, self.h, self.times.len() - 1)?;
        writeln!(f, "max |H(y_n) - H(y_0)| = {:.3e}", self.max_energy_drift)?;
        for (n, d) in self.invariant_names.iter().zip(&self.max_invariant_drift) {
            writeln!(f, "max |{n}(y_n) - {n}(y_0)| = {d:.3e}")?;
        }
        writeln!(f, "mean Newton iterations per step = {:.2}", self.mean_newton_iterations)?;
        if let Some(e) = &self.failure {
            writeln!(f, "stopped early: {e}")?;
        }
        Ok(())
    }
}

/// Energy and invariant drift over one run with step `cfg.step.h`.
pub fn drift(cfg: &ExperimentConfig) -> Result<DriftTable> {
    cfg.step.validate()?;
    let prob = cfg.problem()?;
    let m = cfg.method.prepare()?;
    let traj = run(cfg, &prob, &m, cfg.step.h)?;
    let h0 = traj.energy[0];
    let energy_drift: Vec<f64> = traj.energy.iter().map(|h| h - h0).collect();
    let invariant_drift: Vec<Vec<f64>> = traj
        .invariants
        .iter()
        .map(|v| v.iter().map(|x| x - v[0]).collect())
        .collect();
    let max_abs = |v: &[f64]| v.iter().map(|x| x.abs()).fold(0.0, f64::max);
    let iters: usize = traj.reports.iter().map(|r| r.iterations).sum();
    Ok(DriftTable {
        method: cfg.method.to_string(),
        h: cfg.step.h,
        max_energy_drift: max_abs(&energy_drift),
        max_invariant_drift: invariant_drift.iter().map(|v| max_abs(v)).collect(),
        mean_newton_iterations: iters as f64 / traj.reports.len().max(1) as f64,
        times: traj.times,
        energy_drift,
        invariant_names: traj.invariant_names,
        invariant_drift,
        failure: traj.failure.map(|e| e.to_string()),
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct BenchConfig {
    pub dim: usize,
    pub kappa: f64,
    pub seed: u64,
    pub h: f64,
    pub steps: usize,
    pub alpha_tilde: f64,
    /// Threads for the parallel block run.
    pub threads: usize,
    pub step: StepConfig,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            dim: 300,
            kappa: 0.1,
            seed: 7,
            h: 0.01,
            steps: 3,
            alpha_tilde: -234.0,
            threads: 3,
            step: StepConfig::default(),
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct BenchRow {
    pub label: String,
    pub solver_mode: SolverMode,
    pub threads: usize,
    pub seconds_per_step: f64,
    pub mean_iterations: f64,
    /// Time relative to the full-mode run of the same method.
    pub ratio_to_full: f64,
    /// Max-norm distance of the final state to the full-mode run of the same method.
    pub deviation_from_full: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct BenchTable {
    pub dim: usize,
    pub steps: usize,
    pub rows: Vec<BenchRow>,
}

impl BenchTable {
    pub fn row(&self, label: &str) -> Option<&BenchRow> {
        self.rows.iter().find(|r| r.label == label)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("label,solver_mode,threads,seconds_per_step,mean_iterations,ratio_to_full,deviation_from_full\n");
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{}",
                r.label,
                r.solver_mode,
                r.threads,
                sci(r.seconds_per_step),
                sci(r.mean_iterations),
                sci(r.ratio_to_full),
                sci(r.deviation_from_full)
            );
        }
        s
    }
}

impl fmt::Display for BenchTable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "synthetic problem d = {}, {} steps per run", self.dim, self.steps)?;
        writeln!(
            f,
            "{:<24} {:>6} {:>8} {:>12} {:>8} {:>10} {:>10}",
            "run", "mode", "threads", "s/step", "iters", "vs full", "deviation"
        )?;
        for r in &self.rows {
            writeln!(
                f,
                "{:<24} {:>6} {:>8} {:>12.4e} {:>8.2} {:>10.3} {:>10.2e}",
                r.label, r.solver_mode, r.threads, r.seconds_per_step, r.mean_iterations, r.ratio_to_full, r.deviation_from_full
            )?;
        }
        Ok(())
    }
}

fn timed_run(
    sys: &SyntheticQuartic,
    m: &PreparedMethod,
    y0: &State,
    steps: usize,
    cfg: &StepConfig,
) -> Result<(State, f64, f64)> {
    let mut ctx = StepContext::new();
    let mut y = y0.clone();
    let mut iters = 0usize;
    let clock = Stopwatch::start();
    for _ in 0..steps {
        let (_, y1, rep) = crate::stepper::newton_solve_with(sys, m, &y, cfg, &mut ctx)?;
        iters += rep.iterations;
        y = y1;
    }
    let per_step = clock.seconds() / steps.max(1) as f64;
    Ok((y, per_step, iters as f64 / steps.max(1) as f64))
}

/// Wall time per step for the family in block mode (1 and `threads` workers)
/// and full mode, and for AVF(4) in full mode. Informational only.
pub fn bench(cfg: &BenchConfig) -> Result<BenchTable> {
    if cfg.steps == 0 {
        return Err(Error::Config("bench needs at least one step".into()));
    }
    let sys = SyntheticQuartic::random(cfg.dim, cfg.kappa, cfg.seed);
    let y0 = sys.initial_state(cfg.seed);
    let proposed = MethodSpec::proposed(cfg.alpha_tilde).prepare()?;
    let avf4 = MethodSpec::Avf4.prepare()?;
    let base = StepConfig {
        h: cfg.h,
        ..cfg.step.clone()
    };
    let with = |mode: SolverMode, threads: usize| StepConfig {
        solver_mode: mode,
        threads,
        ..base.clone()
    };

    let (y_full, t_full, it_full) = timed_run(&sys, &proposed, &y0, cfg.steps, &with(SolverMode::Full, 1))?;
    let mut rows = vec![];
    let mut push = |label: &str, mode, threads, y: &State, t: f64, it: f64, ref_y: &State, ref_t: f64| {
        rows.push(BenchRow {
            label: label.to_string(),
            solver_mode: mode,
            threads,
            seconds_per_step: t,
            mean_iterations: it,
            ratio_to_full: if ref_t > 0.0 { t / ref_t } else { f64::NAN },
            deviation_from_full: (y - ref_y).amax(),
        });
    };
    push("proposed full", SolverMode::Full, 1, &y_full, t_full, it_full, &y_full, t_full);
    if proposed.block_available() {
        let (y, t, it) = timed_run(&sys, &proposed, &y0, cfg.steps, &with(SolverMode::Block, 1))?;
        push("proposed block", SolverMode::Block, 1, &y, t, it, &y_full, t_full);
        let th = cfg.threads.max(1);
        let (y, t, it) = timed_run(&sys, &proposed, &y0, cfg.steps, &with(SolverMode::Block, th))?;
        push("proposed block parallel", SolverMode::Block, th, &y, t, it, &y_full, t_full);
    }
    let (y, t, it) = timed_run(&sys, &avf4, &y0, cfg.steps, &with(SolverMode::Full, 1))?;
    push("avf4 full", SolverMode::Full, 1, &y, t, it, &y, t);
    Ok(BenchTable {
        dim: cfg.dim,
        steps: cfg.steps,
        rows,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct TableauInfo {
    pub method: String,
    pub s: usize,
    pub nodes: Vec<f64>,
    pub matrices: Vec<Vec<Vec<f64>>>,
    pub validation: Vec<(String, Option<f64>)>,
    pub e: Vec<Vec<f64>>,
    pub eigenvalues: Vec<(f64, f64)>,
    pub real_distinct: bool,
    pub parallelizable: Option<bool>,
    pub threshold: f64,
    pub certified_order: usize,
    pub order_exact: bool,
    pub first_violations: Vec<String>,
}

fn validation_rows(rep: &ValidationReport) -> Vec<(String, Option<f64>)> {
    rep.entries
        .iter()
        .map(|e| (e.name.to_string(), rep.residual(e.name)))
        .collect()
}

fn order_info<T: Scalar>(tab: &PcsrkTableau<T>, max_order: usize) -> Result<(usize, Vec<String>)> {
    let p = certified_order(tab, max_order)?;
    let bad = if p < max_order {
        order_conditions(tab, p + 1)?
            .into_iter()
            .filter(|c| !c.holds)
            .take(5)
            .map(|c| format!("{}: phi = {}, e = {}", c.tree, c.weight, c.exact))
            .collect()
    } else {
        Vec::new()
    };
    Ok((p, bad))
}

/// Matrices, validation residuals, `E` and its spectrum, and the certified order.
pub fn inspect_tableau(method: &MethodSpec, max_order: usize) -> Result<TableauInfo> {
    let tab = method.tableau()?;
    let spec = e_matrix(&tab)?;
    let (order, violations, exact) = match method {
        MethodSpec::Avf2 => {
            let (p, v) = order_info(&avf2::<BigRational>(), max_order)?;
            (p, v, true)
        }
        MethodSpec::Avf4 => {
            let (p, v) = order_info(&avf4_exact(), max_order)?;
            (p, v, true)
        }
        MethodSpec::Proposed { .. } => match method.exact_params() {
            Some(p) => {
                let (o, v) = order_info(&fourth_order_family(&p)?, max_order)?;
                (o, v, true)
            }
            None => {
                let (o, v) = order_info(&tab, max_order)?;
                (o, v, false)
            }
        },
    };
    let parallelizable = match method {
        MethodSpec::Proposed { alpha_tilde, .. } => Some(is_parallelizable(*alpha_tilde)),
        _ => None,
    };
    Ok(TableauInfo {
        method: method.to_string(),
        s: tab.s(),
        nodes: tab.nodes().to_vec(),
        matrices: tab.matrices().iter().map(|m| m.rows()).collect(),
        validation: validation_rows(&validate(&tab)),
        e: (0..spec.e.nrows()).map(|i| spec.e.row(i).iter().copied().collect()).collect(),
        eigenvalues: spec.eigenvalues.iter().map(|z| (z.re, z.im)).collect(),
        real_distinct: spec.real_distinct,
        parallelizable,
        threshold: parallel_threshold(),
        certified_order: order,
        order_exact: exact,
        first_violations: violations,
    })
}

impl fmt::Display for TableauInfo {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "method {} (s = {})", self.method, self.s)?;
        writeln!(f, "nodes {:?}", self.nodes)?;
        for (j, m) in self.matrices.iter().enumerate() {
            writeln!(f, "M{}:", j + 1)?;
            for row in m {
                let cells: Vec<String> = row.iter().map(|v| format!("{v:>14.6e}")).collect();
                writeln!(f, "  {}", cells.join(" "))?;
            }
        }
        writeln!(f, "validation:")?;
        for (name, r) in &self.validation {
            match r {
                Some(v) => writeln!(f, "  {name:<20} {v:.3e}")?,
                None => writeln!(f, "  {name:<20} n/a")?,
            }
        }
        writeln!(f, "E:")?;
        for row in &self.e {
            let cells: Vec<String> = row.iter().map(|v| format!("{v:>14.6e}")).collect();
            writeln!(f, "  {}", cells.join(" "))?;
        }
        let eig: Vec<String> = self
            .eigenvalues
            .iter()
            .map(|(re, im)| if *im == 0.0 { format!("{re:.10e}") } else { format!("{re:.6e}{im:+.6e}i") })
            .collect();
        writeln!(f, "eigenvalues [{}], real and distinct: {}", eig.join(", "), self.real_distinct)?;
        if let Some(p) = self.parallelizable {
            writeln!(f, "parallelizable: {p} (threshold {:.10})", self.threshold)?;
        }
        writeln!(
            f,
            "certified order {} ({} arithmetic)",
            self.certified_order,
            if self.order_exact { "exact" } else { "f64" }
        )?;
        for v in &self.first_violations {
            writeln!(f, "  violated: {v}")?;
        }
        Ok(())
    }
}

/// Writes `contents` to `dir/name`, creating `dir`.
pub fn write_output(dir: &Path, name: &str, contents: &str) -> Result<PathBuf> {
    std::fs::create_dir_all(dir).map_err(|e| Error::Io(format!("{}: {e}", dir.display())))?;
    let path = dir.join(name);
    std::fs::write(&path, contents).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    Ok(path)
}

/// Trajectory as CSV: `t, y_1..y_d, energy, invariants...`.
pub fn trajectory_csv(traj: &Trajectory) -> String {
    let d = traj.states.first().map_or(0, |s| s.len());
    let mut s = String::from("t");
    for i in 1..=d {
        let _ = write!(s, ",y{i}");
    }
    s.push_str(",energy");
    for n in &traj.invariant_names {
        let _ = write!(s, ",{n}");
    }
    s.push('\n');
    for (n, y) in traj.states.iter().enumerate() {
        let _ = write!(s, "{}", sci(traj.times[n]));
        for v in y.iter() {
            let _ = write!(s, ",{}", sci(*v));
        }
        let _ = write!(s, ",{}", sci(traj.energy[n]));
        for series in &traj.invariants {
            let _ = write!(s, ",{}", sci(series[n]));
        }
        s.push('\n');
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    fn short_config(method: MethodSpec) -> ExperimentConfig {
        ExperimentConfig {
            method,
            ladder: geometric_ladder(0.25, 5),
            reference_factor: 16,
            fit_points: 3,
            ..ExperimentConfig::default()
        }
    }

    #[test]
    fn key_values() {
        let m = parse_key_values("# comment\nmethod = avf2\n\nt_end=2 # trailing\n").unwrap();
        assert_eq!(m.get("method").unwrap(), "avf2");
        assert_eq!(m.get("t_end").unwrap(), "2");
        assert!(parse_key_values("oops").is_err());
    }

    #[test]
    fn config_from_map() {
        let mut m = BTreeMap::new();
        m.insert("method".to_string(), "proposed".to_string());
        m.insert("alpha_tilde".to_string(), "5".to_string());
        m.insert("levels".to_string(), "3".to_string());
        m.insert("param.mu".to_string(), "3".to_string());
        let cfg = ExperimentConfig::from_map(&m).unwrap();
        assert_eq!(cfg.ladder, vec![0.25, 0.125, 0.0625]);
        assert_eq!(cfg.method, MethodSpec::proposed(5.0));
        assert_eq!(cfg.problem_params.get("mu").unwrap(), "3");
        m.insert("bogus".to_string(), "1".to_string());
        assert!(matches!(ExperimentConfig::from_map(&m), Err(Error::Config(_))));
    }

    #[test]
    fn ladder_must_decrease_and_divide() {
        let mut cfg = ExperimentConfig::default();
        cfg.ladder = vec![0.1, 0.2];
        assert!(cfg.validate().is_err());
        cfg.ladder = vec![0.3];
        assert!(cfg.validate().is_err());
        cfg.ladder = vec![0.25];
        assert!(cfg.validate().is_ok());
    }

    #[test]
    fn slope_fit() {
        let x: Vec<f64> = [1.0f64, 0.5, 0.25].iter().map(|h| h.ln()).collect();
        let y: Vec<f64> = [1.0f64, 0.5, 0.25].iter().map(|h| (3.0 * h * h).ln()).collect();
        assert!((fit_slope(&x, &y).unwrap() - 2.0).abs() < 1e-12);
        assert!(fit_slope(&x[..1], &y[..1]).is_none());
    }

    #[test]
    fn avf2_converges_at_second_order() {
        let t = converge(&short_config(MethodSpec::Avf2)).unwrap();
        let s = t.slope.unwrap();
        assert!((s - 2.0).abs() < 0.1, "slope {s}");
        assert_eq!(t.rows.len(), 5);
        let csv = t.to_csv();
        assert!(csv.starts_with("h,error,local_slope\n"));
        assert_eq!(csv.lines().count(), 6);
    }

    #[test]
    fn converge_is_deterministic() {
        let cfg = short_config(MethodSpec::Avf2);
        assert_eq!(converge(&cfg).unwrap().to_csv(), converge(&cfg).unwrap().to_csv());
    }

    #[test]
    fn drift_on_quadratic_is_roundoff() {
        let cfg = ExperimentConfig {
            problem: "quadratic".into(),
            method: MethodSpec::proposed(-234.0),
            t_end: 1.0,
            step: StepConfig::with_h(0.1),
            ..ExperimentConfig::default()
        };
        let d = drift(&cfg).unwrap();
        assert!(d.max_energy_drift < 1e-13, "{}", d.max_energy_drift);
        assert_eq!(d.times.len(), 11);
    }

    #[test]
    fn inspect_reports_order() {
        let info = inspect_tableau(&MethodSpec::proposed(-234.0), 5).unwrap();
        assert_eq!(info.certified_order, 4);
        assert!(info.order_exact);
        assert_eq!(info.parallelizable, Some(true));
        assert!(info.real_distinct);
        let info = inspect_tableau(&MethodSpec::Avf2, 4).unwrap();
        assert_eq!(info.certified_order, 2);
        assert!(!info.first_violations.is_empty());
    }

    #[test]
    fn tiny_bench_modes_agree() {
        let cfg = BenchConfig {
            dim: 4,
            steps: 2,
            h: 0.05,
            ..BenchConfig::default()
        };
        let t = bench(&cfg).unwrap();
        assert_eq!(t.rows.len(), 4);
        for r in t.rows.iter().filter(|r| r.label.starts_with("proposed")) {
            assert!(r.deviation_from_full < 1e-10, "{}: {}", r.label, r.deviation_from_full);
        }
    }
}
