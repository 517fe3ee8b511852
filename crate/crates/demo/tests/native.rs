use pcsrk_demo::{check_order, run_lotka_volterra, scan_spectrum};

#[test]
fn lotka_volterra_run_preserves_energy() {
    let run = run_lotka_volterra("proposed", -234.0, 0.1, 2.0).unwrap();
    assert_eq!(run.times.len(), 21);
    assert!(run.failure.is_none());
    assert!(run.max_energy_drift < 1e-12);
    assert!(run.max_casimir_drift > 1e-6);
    let json = serde_json::to_value(&run).unwrap();
    assert_eq!(json["states"][0], serde_json::json!([1.0, 1.9, 0.5]));
}

#[test]
fn unknown_method_is_an_error() {
    assert!(run_lotka_volterra("euler", -234.0, 0.1, 1.0).is_err());
    assert!(check_order("rk4", 0.0, 4).is_err());
}

#[test]
fn spectrum_scan_crosses_threshold() {
    let scan = scan_spectrum(-240.0, -220.0, 21).unwrap();
    assert!((scan.threshold_alpha_tilde + 233.115).abs() < 1e-3);
    for p in &scan.points {
        assert_eq!(p.real_distinct, p.parallelizable, "{}", p.alpha_tilde);
    }
    assert!(scan.points.first().unwrap().parallelizable);
    assert!(!scan.points.last().unwrap().parallelizable);
    assert!(scan_spectrum(0.0, 1.0, 1).is_err());
}

#[test]
fn order_checks() {
    assert_eq!(check_order("avf2", 0.0, 4).unwrap().certified_order, 2);
    let c = check_order("proposed", 5.0, 5).unwrap();
    assert_eq!(c.certified_order, 5);
    assert!(c.exact);
    let c = check_order("proposed", -234.0, 5).unwrap();
    assert_eq!(c.certified_order, 4);
    assert!(!c.violations.is_empty());
}
