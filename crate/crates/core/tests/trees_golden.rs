use std::fmt::Write as _;
use std::path::PathBuf;

use num_rational::BigRational;
use pcsrk::ptrees::{enumerate_black_rooted, exact_coefficient, verify_appendix};
use pcsrk::tableau::FamilyParams;

fn q(n: i64, d: i64) -> BigRational {
    BigRational::new(n.into(), d.into())
}

/// Compares against `tests/golden/<name>`; `UPDATE_GOLDEN=1` rewrites it.
fn check_golden(name: &str, actual: &str) {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/golden").join(name);
    if std::env::var_os("UPDATE_GOLDEN").is_some() {
        std::fs::write(&path, actual).unwrap();
        return;
    }
    let expected = std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    assert_eq!(actual, expected, "golden file {name} differs; rerun with UPDATE_GOLDEN=1 after review");
}

#[test]
fn tree_list_up_to_order_four() {
    let mut out = String::new();
    for t in enumerate_black_rooted(4).unwrap() {
        writeln!(out, "{} {} {}", t.order(), t, exact_coefficient(&t)).unwrap();
    }
    check_golden("trees_order4.txt", &out);
}

#[test]
fn appendix_report_at_rational_parameters() {
    let p = FamilyParams::new(q(1, 5), [q(3, 2), q(-7, 3), q(5, 4), q(-2, 1)], q(-7, 3)).unwrap();
    let rep = verify_appendix(&p).unwrap();
    check_golden("appendix_rational.txt", &rep.to_string());
}

#[test]
fn appendix_report_at_optimal_parameters() {
    let rep = verify_appendix(&FamilyParams::optimal(q(-234, 1))).unwrap();
    check_golden("appendix_optimal.txt", &rep.to_string());
}
