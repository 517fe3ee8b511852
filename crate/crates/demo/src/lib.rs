//! Browser bindings. Every export returns a JSON string; errors become JS exceptions.

use pcsrk::harness::{inspect_tableau, MethodSpec};
use pcsrk::model::{LotkaVolterra, State, LV_REFERENCE_Y0};
use pcsrk::stepper::{integrate, StepConfig};
use pcsrk::tableau::{e_matrix, fourth_order_family, is_parallelizable, parallel_threshold, FamilyParams};
use serde::Serialize;
use wasm_bindgen::prelude::*;

fn method(name: &str, alpha_tilde: f64) -> Result<MethodSpec, String> {
    match name {
        "proposed" => Ok(MethodSpec::proposed(alpha_tilde)),
        "avf2" => Ok(MethodSpec::Avf2),
        "avf4" => Ok(MethodSpec::Avf4),
        other => Err(format!("unknown method `{other}`")),
    }
}

#[derive(Serialize)]
pub struct Run {
    pub method: String,
    pub times: Vec<f64>,
    pub states: Vec<[f64; 3]>,
    pub energy_drift: Vec<f64>,
    pub casimir_drift: Vec<f64>,
    pub max_energy_drift: f64,
    pub max_casimir_drift: f64,
    pub failure: Option<String>,
}

/// Lotka-Volterra from the reference initial state.
pub fn run_lotka_volterra(name: &str, alpha_tilde: f64, h: f64, t_end: f64) -> Result<Run, String> {
    let spec = method(name, alpha_tilde)?;
    let m = spec.prepare().map_err(|e| e.to_string())?;
    let sys = LotkaVolterra::reference();
    let y0 = State::from_row_slice(&LV_REFERENCE_Y0);
    let traj = integrate(&sys, &m, &y0, h, t_end, &StepConfig::default()).map_err(|e| e.to_string())?;
    let drift = |v: &[f64]| v.iter().map(|x| (x - v[0]).abs()).collect::<Vec<_>>();
    let k = traj.invariant_names.iter().position(|n| n == "casimir").ok_or("no Casimir registered")?;
    Ok(Run {
        method: spec.to_string(),
        times: traj.times.clone(),
        states: traj.states.iter().map(|y| [y[0], y[1], y[2]]).collect(),
        energy_drift: drift(&traj.energy),
        casimir_drift: drift(&traj.invariants[k]),
        max_energy_drift: traj.max_energy_drift(),
        max_casimir_drift: traj.max_invariant_drift("casimir").unwrap_or(0.0),
        failure: traj.failure.map(|e| e.to_string()),
    })
}

#[derive(Serialize)]
pub struct SpectrumPoint {
    pub alpha_tilde: f64,
    pub eigenvalues: Vec<[f64; 2]>,
    pub real_distinct: bool,
    pub parallelizable: bool,
}

#[derive(Serialize)]
pub struct SpectrumScan {
    pub threshold_alpha_tilde: f64,
    pub points: Vec<SpectrumPoint>,
}

/// Eigenvalues of `E` for the optimal family at `n` evenly spaced `ᾶ` in `[from, to]`.
pub fn scan_spectrum(from: f64, to: f64, n: usize) -> Result<SpectrumScan, String> {
    if !(2..=2000).contains(&n) || !(from.is_finite() && to.is_finite()) {
        return Err("need 2..=2000 points on a finite interval".into());
    }
    let mut points = Vec::with_capacity(n);
    for i in 0..n {
        let at = from + (to - from) * i as f64 / (n - 1) as f64;
        if at == 0.0 {
            continue;
        }
        let p = FamilyParams::optimal_f64(at).map_err(|e| e.to_string())?;
        let tab = fourth_order_family(&p).map_err(|e| e.to_string())?;
        let sd = e_matrix(&tab).map_err(|e| e.to_string())?;
        points.push(SpectrumPoint {
            alpha_tilde: at,
            eigenvalues: sd.eigenvalues.iter().map(|z| [z.re, z.im]).collect(),
            real_distinct: sd.real_distinct,
            parallelizable: is_parallelizable(at),
        });
    }
    Ok(SpectrumScan {
        threshold_alpha_tilde: -300.0 * parallel_threshold(),
        points,
    })
}

#[derive(Serialize)]
pub struct OrderCheck {
    pub method: String,
    pub certified_order: usize,
    pub exact: bool,
    pub violations: Vec<String>,
}

/// Certified order over black-rooted trees up to `max_order`.
pub fn check_order(name: &str, alpha_tilde: f64, max_order: usize) -> Result<OrderCheck, String> {
    let info = inspect_tableau(&method(name, alpha_tilde)?, max_order).map_err(|e| e.to_string())?;
    Ok(OrderCheck {
        method: info.method,
        certified_order: info.certified_order,
        exact: info.order_exact,
        violations: info.first_violations,
    })
}

fn to_js<T: Serialize>(r: Result<T, String>) -> Result<String, JsValue> {
    r.and_then(|v| serde_json::to_string(&v).map_err(|e| e.to_string()))
        .map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
pub fn lotka_volterra(method: &str, alpha_tilde: f64, h: f64, t_end: f64) -> Result<String, JsValue> {
    to_js(run_lotka_volterra(method, alpha_tilde, h, t_end))
}

#[wasm_bindgen]
pub fn spectrum(from: f64, to: f64, n: usize) -> Result<String, JsValue> {
    to_js(scan_spectrum(from, to, n))
}

#[wasm_bindgen]
pub fn order(method: &str, alpha_tilde: f64, max_order: usize) -> Result<String, JsValue> {
    to_js(check_order(method, alpha_tilde, max_order))
}
