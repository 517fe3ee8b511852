//! Acceptance criteria, one line each. Runs without the libtest harness so the
//! lines always reach stdout.

use std::collections::BTreeSet;
use std::time::Instant;

use nalgebra::DVector;
use num_rational::BigRational;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use pcsrk::harness::{converge, ConvergenceTable, ExperimentConfig, MethodSpec};
use pcsrk::model::{LotkaVolterra, PoissonSystem, QuadraticSystem, State, SyntheticQuartic, LV_REFERENCE_Y0};
use pcsrk::ptrees::appendix::{ALL_BLACK, COLOURED};
use pcsrk::ptrees::{
    certified_order, elementary_weight, exact_coefficient, table_quantities, verify_appendix, BiColouredTree, Quantity,
};
use pcsrk::scalar::{QuadSurd, Scalar};
use pcsrk::stepper::{integrate, step, PreparedMethod, SolverMode, StepConfig};
use pcsrk::tableau::{
    csrk_alpha_family, e_matrix, fourth_order_family, is_parallelizable, validate, FamilyParams, PcsrkTableau,
};

/// Criteria expected to fail, with the reason. See the README.
const KNOWN_RED: &[(usize, &str)] = &[(
    2,
    "the drift is real but about 15x below the threshold; the log form and the product form \
     of the Casimir both stay near 7e-4 on this run",
)];

type Criterion = (&'static str, Box<dyn FnOnce() -> Outcome>);

struct Outcome {
    pass: bool,
    detail: String,
}

fn q(n: i64, d: i64) -> BigRational {
    BigRational::new(n.into(), d.into())
}

fn y0() -> State {
    State::from_row_slice(&LV_REFERENCE_Y0)
}

fn proposed() -> PreparedMethod {
    MethodSpec::proposed(-234.0).prepare().unwrap()
}

fn energy_and_casimir() -> (f64, f64, f64) {
    let sys = LotkaVolterra::reference();
    let clock = Instant::now();
    let traj = integrate(&sys, &proposed(), &y0(), 0.05, 10.0, &StepConfig::default())
        .unwrap()
        .into_result()
        .unwrap();
    let secs = clock.elapsed().as_secs_f64();
    (traj.max_energy_drift(), traj.max_invariant_drift("casimir").unwrap(), secs)
}

fn criterion_1(energy: f64, secs: f64) -> Outcome {
    Outcome {
        pass: energy < 1e-11 && secs < 10.0,
        detail: format!("max energy drift {energy:.2e} (< 1e-11), {secs:.2} s (< 10 s)"),
    }
}

fn criterion_2(casimir: f64) -> Outcome {
    Outcome {
        pass: casimir > 0.005,
        detail: format!("max Casimir drift {casimir:.2e} (> 5e-3 required)"),
    }
}

fn ladder_run(method: MethodSpec, levels: usize, mode: SolverMode) -> ConvergenceTable {
    let mut cfg = ExperimentConfig {
        method,
        ladder: pcsrk::harness::geometric_ladder(0.25, levels),
        ..ExperimentConfig::default()
    };
    cfg.step.solver_mode = mode;
    converge(&cfg).unwrap()
}

fn criterion_3() -> Outcome {
    let clock = Instant::now();
    // (method, slope window, value at 0.0625, value at 0.03125)
    let cases = [
        (MethodSpec::proposed(-234.0), (3.85, 4.15), 5.3917e-4, 3.2949e-5),
        (MethodSpec::Avf2, (1.9, 2.1), 0.0167838, 0.0041377),
        (MethodSpec::Avf4, (3.85, 4.15), 2.7909e-5, 1.7411e-6),
    ];
    let mut pass = true;
    let mut parts = vec![];
    for (method, (lo, hi), e1, e2) in cases {
        let name = method.to_string();
        let t = ladder_run(method, 8, SolverMode::Auto);
        let slope = t.slope.unwrap_or(f64::NAN);
        let ratio = |h: f64, want: f64| t.error_at(h).map_or(f64::INFINITY, |e| e / want);
        let (r1, r2) = (ratio(0.0625, e1), ratio(0.03125, e2));
        let within = |r: f64| (0.5..=2.0).contains(&r);
        pass &= (lo..=hi).contains(&slope) && within(r1) && within(r2);
        let failed = t.rows.iter().filter(|r| r.failure.is_some()).map(|r| r.h.to_string()).collect::<Vec<_>>();
        parts.push(format!(
            "{name} slope {slope:.4}, point ratios {r1:.3}/{r2:.3}{}",
            if failed.is_empty() { String::new() } else { format!(" (unsolved at h={})", failed.join(",")) }
        ));
    }
    let secs = clock.elapsed().as_secs_f64();
    pass &= secs < 120.0;
    Outcome {
        pass,
        detail: format!("{}; {secs:.1} s", parts.join("; ")),
    }
}

fn random_rational(rng: &mut ChaCha8Rng, lo: i64, hi: i64) -> BigRational {
    q(rng.gen_range(lo..hi), rng.gen_range(1..13))
}

fn criterion_4() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let (mut worst, mut bad_order, mut bad_float) = (0.0f64, 0, 0.0f64);
    for _ in 0..200 {
        let c1 = q(rng.gen_range(1..50), 100);
        let gamma = [(); 4].map(|_| random_rational(&mut rng, -40, 40));
        let mut at = random_rational(&mut rng, -3000, 3000);
        if at == q(0, 1) {
            at = q(1, 1);
        }
        let p = FamilyParams::new(c1, gamma, at).unwrap();
        let tab = fourth_order_family(&p).unwrap();
        worst = worst.max(validate(&tab).max_residual());
        if certified_order(&tab, 4).unwrap() != 4 {
            bad_order += 1;
        }
        let tf = fourth_order_family(&p.to_f64()).unwrap();
        bad_float = bad_float.max(validate(&tf).max_residual());
    }
    Outcome {
        pass: worst <= 1e-12 && bad_float <= 1e-12 && bad_order == 0,
        detail: format!(
            "200 rational parameter sets: max residual {worst:.1e} exact, {bad_float:.1e} in f64; \
             {bad_order} below order 4"
        ),
    }
}

fn optimal_tableau(at: i64) -> PcsrkTableau<QuadSurd> {
    fourth_order_family(&FamilyParams::optimal(q(at, 1))).unwrap()
}

fn criterion_5() -> Outcome {
    let p = FamilyParams::optimal(q(-234, 1));
    let tq = table_quantities(&p).unwrap();
    let want = [
        (Quantity::A, q(1, 180)),
        (Quantity::B, q(1, 5)),
        (Quantity::E, q(-1, 360)),
        (Quantity::F, q(1, 360)),
        (Quantity::G, q(-1, 360)),
        (Quantity::H, q(1, 80)),
    ];
    let quantities_ok = want
        .iter()
        .all(|(k, v)| tq.get(*k).and_then(QuadSurd::as_rational) == Some(v));

    let tab = optimal_tableau(-234);
    let governed = |terms: &[(Quantity, i64, i64)]| {
        terms
            .iter()
            .any(|(k, _, _)| matches!(k, Quantity::C | Quantity::D | Quantity::Theta))
    };
    let mut seen = BTreeSet::new();
    let (mut checked, mut exact, mut skipped) = (0, 0, 0);
    for entry in ALL_BLACK.iter().chain(COLOURED.iter()) {
        if !seen.insert(entry.tree) {
            continue;
        }
        if governed(entry.proposed.terms) {
            skipped += 1;
            continue;
        }
        let t = BiColouredTree::parse(entry.tree).unwrap();
        checked += 1;
        if elementary_weight(&t, &tab).as_rational() == Some(&exact_coefficient(&t)) {
            exact += 1;
        }
    }
    let report = verify_appendix(&p).unwrap();
    let untabulated_exact = report.untabulated.iter().all(|k| {
        let t = BiColouredTree::parse(k).unwrap();
        elementary_weight(&t, &tab).as_rational() == Some(&exact_coefficient(&t))
    });
    Outcome {
        pass: quantities_ok && checked == exact && checked > 0 && untabulated_exact,
        detail: format!(
            "(A),(B),(E)-(H) exact: {quantities_ok}; {exact}/{checked} order-5 weights outside (C)/(D)/theta equal e(t) \
             ({skipped} governed); untabulated {} exact: {untabulated_exact}",
            report.untabulated.join(",")
        ),
    }
}

fn criterion_6() -> Outcome {
    let order = certified_order(&optimal_tableau(5), 5).unwrap();
    let t = ladder_run(MethodSpec::proposed(5.0), 6, SolverMode::Full);
    let slope = t.slope.unwrap_or(f64::NAN);
    Outcome {
        pass: order >= 5 && slope >= 5.5,
        detail: format!("alpha_tilde=5: certified order {order}, slope {slope:.3} (>= 5.5)"),
    }
}

fn criterion_7() -> Outcome {
    let real = |num: i64, den: i64| {
        let p = FamilyParams::optimal(q(num, den));
        e_matrix(&fourth_order_family(&p).unwrap()).unwrap().real_distinct
    };
    let (a, b) = (real(-233, 1), real(-933, 4));
    let (c, d) = (is_parallelizable(-234.0), is_parallelizable(-200.0));
    Outcome {
        pass: !a && b && c && !d,
        detail: format!(
            "real spectrum at -233: {a}, at -233.25: {b}; parallelizable at -234: {c}, at -200: {d}"
        ),
    }
}

fn criterion_8() -> Outcome {
    let (_, gamma) = pcsrk::tableau::optimal_c1_gamma();
    let gamma = gamma.map(|g| g.to_f64());
    let spectra: Vec<Vec<f64>> = [0.1, 0.2, 0.3, 0.45]
        .iter()
        .map(|&c1| {
            let p = FamilyParams::new(c1, gamma, -234.0).unwrap();
            let mut ev: Vec<f64> = e_matrix(&fourth_order_family(&p).unwrap())
                .unwrap()
                .eigenvalues
                .iter()
                .map(|z| z.re)
                .collect();
            ev.sort_by(f64::total_cmp);
            ev
        })
        .collect();
    let spread = spectra
        .iter()
        .flat_map(|s| s.iter().zip(&spectra[0]).map(|(a, b)| (a - b).abs()))
        .fold(0.0, f64::max);
    Outcome {
        pass: spread <= 1e-11,
        detail: format!("max eigenvalue spread over c1 in {{0.1,0.2,0.3,0.45}}: {spread:.1e}"),
    }
}

fn block_vs_full(sys: &dyn PoissonSystem, y: &State, h: f64) -> f64 {
    let m = proposed();
    let mut cfg = StepConfig::with_h(h);
    cfg.solver_mode = SolverMode::Full;
    let (yf, _) = step(sys, &m, y, &cfg).unwrap();
    cfg.solver_mode = SolverMode::Block;
    let (yb, rep) = step(sys, &m, y, &cfg).unwrap();
    assert_eq!(rep.solver_mode_used, SolverMode::Block);
    (yf.clone() - yb).norm() / yf.norm()
}

fn criterion_9() -> Outcome {
    let lv = block_vs_full(&LotkaVolterra::reference(), &y0(), 0.05);
    let sys = SyntheticQuartic::random(300, 0.1, 7);
    let syn = block_vs_full(&sys, &sys.initial_state(7), 0.01);
    Outcome {
        pass: lv <= 1e-10 && syn <= 1e-10,
        detail: format!("relative difference {lv:.1e} on Lotka-Volterra, {syn:.1e} on synthetic d=300"),
    }
}

fn criterion_10() -> Outcome {
    let sys = LotkaVolterra::reference();
    let m = proposed();
    let (y1, _) = step(&sys, &m, &y0(), &StepConfig::with_h(0.1)).unwrap();
    let (back, _) = step(&sys, &m, &y1, &StepConfig::with_h(-0.1)).unwrap();
    let round_trip = (back - y0()).norm() / y0().norm();

    let osc = QuadraticSystem::harmonic_oscillator();
    let fam = fourth_order_family(&FamilyParams::optimal_f64(-234.0).unwrap()).unwrap();
    let csrk = PcsrkTableau::from_csrk("csrk", &csrk_alpha_family(&-234.0).unwrap(), fam.nodes().to_vec()).unwrap();
    let mut cfg = StepConfig::with_h(0.3);
    cfg.solver_mode = SolverMode::Full;
    let yo = DVector::from_vec(vec![1.0, 0.0]);
    let (ya, _) = step(&osc, &PreparedMethod::new(&fam).unwrap(), &yo, &cfg).unwrap();
    let (yb, _) = step(&osc, &PreparedMethod::new(&csrk).unwrap(), &yo, &cfg).unwrap();
    let collapse = (ya - yb).amax();

    let report = verify_appendix(&FamilyParams::optimal(q(-234, 1))).unwrap();
    let misprints: BTreeSet<&str> = report
        .entries
        .iter()
        .filter(|e| !e.avf4_matches)
        .map(|e| e.tree.as_str())
        .collect();
    let documented: BTreeSet<&str> = ["b[b,b,b,w]", "b[w[b,b[w]]]"].into();
    let samples = ["7/144", "5/72", "1/36"]
        .iter()
        .all(|v| report.entries.iter().any(|e| e.avf4_matches && e.avf4_oracle == *v));
    let total = report.entries.len();
    Outcome {
        pass: round_trip <= 1e-10 && collapse <= 1e-12 && misprints == documented && samples,
        detail: format!(
            "round trip {round_trip:.1e}, constant-S collapse {collapse:.1e}, AVF(4) column {}/{total} exact \
             (misprints at {}; 7/144, 5/72, 1/36 present: {samples})",
            total - misprints.len(),
            misprints.iter().copied().collect::<Vec<_>>().join(" and ")
        ),
    }
}

fn main() {
    let (energy, casimir, secs) = energy_and_casimir();
    let runs: Vec<Criterion> = vec![
        ("energy preservation", Box::new(move || criterion_1(energy, secs))),
        ("Casimir drift", Box::new(move || criterion_2(casimir))),
        ("fourth order", Box::new(criterion_3)),
        ("order conditions", Box::new(criterion_4)),
        ("order-5 quantities", Box::new(criterion_5)),
        ("sixth-order spot check", Box::new(criterion_6)),
        ("parallelizability threshold", Box::new(criterion_7)),
        ("node-independent spectrum", Box::new(criterion_8)),
        ("block vs full solver", Box::new(criterion_9)),
        ("structural properties", Box::new(criterion_10)),
    ];
    let mut unexpected = vec![];
    for (i, (name, run)) in runs.into_iter().enumerate() {
        let n = i + 1;
        let out = run();
        let known = KNOWN_RED.iter().find(|(k, _)| *k == n);
        let tag = if out.pass { "PASS" } else { "FAIL" };
        println!("criterion {n} ({name}): {tag}: {}", out.detail);
        match (out.pass, known) {
            (false, Some((_, why))) => println!("    known red: {why}"),
            (false, None) => unexpected.push(n),
            (true, Some(_)) => println!("    listed as known red but now passes"),
            (true, None) => {}
        }
    }
    if !unexpected.is_empty() {
        eprintln!("unexpected failures: {unexpected:?}");
        std::process::exit(1);
    }
}
