//! Printed order-5 coefficient tables, transcribed as data.
//!
//! Each entry holds the tree, the exact coefficient, the AVF(4) coefficient and
//! the proposed method's coefficient as an affine form in the quantities
//! `(A)`–`(H)` and `θ`. Values are stored exactly as printed, typos included;
//! the oracle in the parent module decides which ones hold.

use super::Quantity::{self, *};

pub type Ratio = (i64, i64);

#[derive(Clone, Copy, Debug)]
pub struct AffineForm {
    pub constant: Ratio,
    pub terms: &'static [(Quantity, i64, i64)],
}

#[derive(Clone, Copy, Debug)]
pub struct PrintedEntry {
    pub tree: &'static str,
    pub exact: Ratio,
    pub avf4: Ratio,
    pub proposed: AffineForm,
    /// Printed `proposed − exact`, where the table has such a row.
    pub difference: Option<AffineForm>,
}

const fn e(
    tree: &'static str,
    exact: Ratio,
    avf4: Ratio,
    constant: Ratio,
    terms: &'static [(Quantity, i64, i64)],
) -> PrintedEntry {
    PrintedEntry {
        tree,
        exact,
        avf4,
        proposed: AffineForm { constant, terms },
        difference: None,
    }
}

#[allow(clippy::too_many_arguments)]
const fn ed(
    tree: &'static str,
    exact: Ratio,
    avf4: Ratio,
    constant: Ratio,
    terms: &'static [(Quantity, i64, i64)],
    dconst: Ratio,
    dterms: &'static [(Quantity, i64, i64)],
) -> PrintedEntry {
    PrintedEntry {
        tree,
        exact,
        avf4,
        proposed: AffineForm { constant, terms },
        difference: Some(AffineForm {
            constant: dconst,
            terms: dterms,
        }),
    }
}

/// The table restricted to single-colour trees, with its difference row.
pub const ALL_BLACK: [PrintedEntry; 9] = [
    ed("b[b,b,b,b]", (1, 5), (1, 5), (1, 5), &[], (0, 1), &[]),
    ed("b[b,b,b[b]]", (1, 10), (1, 10), (1, 10), &[], (0, 1), &[]),
    ed("b[b,b[b,b]]", (1, 15), (5, 72), (5, 72), &[(Theta, 5, 3)], (1, 360), &[(Theta, 1, 6)]),
    ed("b[b,b[b[b]]]", (1, 30), (5, 144), (5, 144), &[(Theta, 1, 12)], (1, 720), &[(Theta, 1, 12)]),
    ed("b[b[b],b[b]]", (1, 20), (1, 20), (1, 20), &[], (0, 1), &[]),
    ed("b[b[b,b,b]]", (1, 20), (1, 20), (1, 20), &[], (0, 1), &[]),
    ed("b[b[b,b[b]]]", (1, 40), (1, 40), (1, 40), &[], (0, 1), &[]),
    ed("b[b[b[b,b]]]", (1, 60), (1, 72), (1, 72), &[(Theta, -1, 6)], (-1, 360), &[(Theta, -1, 6)]),
    ed("b[b[b[b[b]]]]", (1, 120), (1, 144), (1, 144), &[(Theta, -1, 12)], (-1, 720), &[(Theta, -1, 12)]),
];

/// The bi-coloured tables, in printed order (grouped by uncoloured shape).
pub const COLOURED: [PrintedEntry; 106] = [
    e("b[b,b,b,b]", (1, 5), (1, 5), (1, 5), &[]),
    e("b[b,b,b,w]", (1, 5), (7, 36), (1, 5), &[]),
    e("b[b,b,w,w]", (1, 5), (7, 36), (7, 36), &[(A, 1, 1)]),
    e("b[b,w,w,w]", (1, 5), (7, 36), (0, 1), &[(B, 1, 1)]),
    e("b[w,w,w,w]", (1, 5), (7, 36), (0, 1), &[(B, 1, 1)]),
    e("b[b,b,b[b]]", (1, 10), (1, 10), (1, 10), &[]),
    e("b[b,b[b],w]", (1, 10), (1, 10), (1, 10), &[]),
    e("b[b,b,w[b]]", (1, 10), (7, 72), (7, 72), &[(A, 1, 2)]),
    e("b[b,b,b[w]]", (1, 10), (1, 10), (1, 10), &[]),
    e("b[b[b],w,w]", (1, 10), (7, 72), (7, 72), &[(A, 1, 2)]),
    e("b[b,w,w[b]]", (1, 10), (7, 72), (0, 1), &[(B, 1, 2)]),
    e("b[b,b[w],w]", (1, 10), (1, 10), (1, 10), &[]),
    e("b[b,b,w[w]]", (1, 10), (7, 72), (7, 72), &[(A, 1, 2)]),
    e("b[b,w,w[w]]", (1, 10), (7, 72), (0, 1), &[(B, 1, 2)]),
    e("b[b[w],w,w]", (1, 10), (7, 72), (7, 72), &[(A, 1, 2)]),
    e("b[w,w,w[b]]", (1, 10), (7, 72), (0, 1), &[(B, 1, 2)]),
    e("b[w,w,w[w]]", (1, 10), (7, 72), (0, 1), &[(B, 1, 2)]),
    e("b[b,b[b,b]]", (1, 15), (5, 72), (0, 1), &[(C, 1, 1)]),
    e("b[b[b,b],w]", (1, 15), (5, 72), (0, 1), &[(C, 1, 1)]),
    e("b[b,w[b,b]]", (1, 15), (5, 72), (5, 72), &[(D, 1, 1)]),
    e("b[b,b[b,w]]", (1, 15), (5, 72), (5, 72), &[(E, 1, 1)]),
    e("b[w,w[b,b]]", (1, 15), (5, 72), (5, 72), &[(D, 1, 1)]),
    e("b[b[b,w],w]", (1, 15), (5, 72), (5, 72), &[(E, 1, 1)]),
    e("b[b,w[b,w]]", (1, 15), (5, 72), (5, 72), &[(F, -1, 1)]),
    e("b[b,b[w,w]]", (1, 15), (5, 72), (5, 72), &[(A, -1, 2)]),
    e("b[b,w[w,w]]", (1, 15), (5, 72), (5, 72), &[(G, 1, 1)]),
    e("b[b[w,w],w]", (1, 15), (5, 72), (5, 72), &[(A, -1, 2)]),
    e("b[w,w[b,w]]", (1, 15), (5, 72), (5, 72), &[(F, -1, 1)]),
    e("b[w,w[w,w]]", (1, 15), (5, 72), (5, 72), &[(G, 1, 1)]),
    e("b[b,b[b[b]]]", (1, 30), (5, 144), (0, 1), &[(C, 1, 2)]),
    e("b[b[b[b]],w]", (1, 30), (5, 144), (0, 1), &[(C, 1, 2)]),
    e("b[b,w[b[b]]]", (1, 30), (5, 144), (5, 144), &[(D, 1, 2)]),
    e("b[b,b[w[b]]]", (1, 30), (5, 144), (5, 144), &[(A, -1, 4)]),
    e("b[b,b[b[w]]]", (1, 30), (5, 144), (0, 1), &[(C, 1, 2)]),
    e("b[w,w[b[b]]]", (1, 30), (5, 144), (5, 144), &[(D, 1, 2)]),
    e("b[b[w[b]],w]", (1, 30), (5, 144), (5, 144), &[(A, -1, 4)]),
    e("b[b[b[w]],w]", (1, 30), (5, 144), (0, 1), &[(C, 1, 2)]),
    e("b[b,w[w[b]]]", (1, 30), (5, 144), (5, 144), &[(G, 1, 2)]),
    e("b[b,w[b[w]]]", (1, 30), (5, 144), (5, 144), &[(D, 1, 2)]),
    e("b[b,b[w[w]]]", (1, 30), (5, 144), (5, 144), &[(A, -1, 4)]),
    e("b[b,w[w[w]]]", (1, 30), (5, 144), (5, 144), &[(G, 1, 2)]),
    e("b[b[w[w]],w]", (1, 30), (5, 144), (5, 144), &[(A, -1, 4)]),
    e("b[w,w[b[w]]]", (1, 30), (5, 144), (5, 144), &[(D, 1, 2)]),
    e("b[w,w[w[b]]]", (1, 30), (5, 144), (5, 144), &[(G, 1, 2)]),
    e("b[w,w[w[w]]]", (1, 30), (5, 144), (5, 144), &[(G, 1, 2)]),
    e("b[b[b],b[b]]", (1, 20), (1, 20), (1, 20), &[]),
    e("b[b[b],w[b]]", (1, 20), (7, 144), (7, 144), &[(A, 1, 4)]),
    e("b[b[b],b[w]]", (1, 20), (1, 20), (1, 20), &[]),
    e("b[b[b],w[w]]", (1, 20), (7, 144), (7, 144), &[(A, 1, 4)]),
    e("b[w[b],w[b]]", (1, 20), (7, 144), (0, 1), &[(B, 1, 4)]),
    e("b[b[w],w[b]]", (1, 20), (7, 144), (7, 144), &[(A, 1, 4)]),
    e("b[b[w],w[w]]", (1, 20), (7, 144), (7, 144), &[(A, 1, 4)]),
    e("b[w[b],w[w]]", (1, 20), (7, 144), (0, 1), &[(B, 1, 4)]),
    e("b[w[w],w[w]]", (1, 20), (7, 144), (0, 1), &[(B, 1, 4)]),
    e("b[b[b,b,b]]", (1, 20), (1, 20), (1, 20), &[]),
    e("b[w[b,b,b]]", (1, 20), (1, 20), (1, 20), &[]),
    e("b[b[b,b,w]]", (1, 20), (1, 18), (1, 18), &[(E, 2, 1)]),
    e("b[w[b,b,w]]", (1, 20), (1, 18), (1, 18), &[(E, 2, 1)]),
    e("b[b[b,w,w]]", (1, 20), (1, 18), (1, 16), &[(H, -1, 1)]),
    e("b[b[w,w,w]]", (1, 20), (1, 18), (1, 4), &[(B, -1, 1)]),
    e("b[w[b,w,w]]", (1, 20), (1, 18), (1, 16), &[(H, -1, 1)]),
    e("b[w[w,w,w]]", (1, 20), (1, 18), (1, 4), &[(B, -1, 1)]),
    e("b[b[b,b[b]]]", (1, 40), (1, 40), (1, 40), &[]),
    e("b[w[b,b[b]]]", (1, 40), (1, 40), (1, 40), &[]),
    e("b[b[b[b],w]]", (1, 40), (1, 36), (1, 36), &[(E, 1, 1)]),
    e("b[b[b,w[b]]]", (1, 40), (1, 36), (1, 32), &[(H, -1, 2)]),
    e("b[b[b,b[w]]]", (1, 40), (1, 40), (1, 40), &[]),
    e("b[w[b[b],w]]", (1, 40), (1, 36), (1, 36), &[(E, 1, 1)]),
    e("b[w[b,w[b]]]", (1, 40), (1, 36), (1, 32), &[(H, -1, 2)]),
    e("b[w[b,b[w]]]", (1, 40), (1, 36), (1, 40), &[]),
    e("b[b[w,w[b]]]", (1, 40), (1, 36), (1, 8), &[(B, -1, 2)]),
    e("b[b[b[w],w]]", (1, 40), (1, 36), (1, 36), &[(E, 1, 1)]),
    e("b[b[b,w[w]]]", (1, 40), (1, 36), (1, 32), &[(H, -1, 2)]),
    e("b[b[w,w[w]]]", (1, 40), (1, 36), (1, 8), &[(B, -1, 2)]),
    e("b[w[b,w[w]]]", (1, 40), (1, 36), (1, 32), &[(H, -1, 2)]),
    e("b[w[b[w],w]]", (1, 40), (1, 36), (1, 8), &[(B, -1, 2)]),
    e("b[w[w,w[b]]]", (1, 40), (1, 36), (1, 36), &[(E, 1, 1)]),
    e("b[w[w,w[w]]]", (1, 40), (1, 36), (1, 8), &[(B, -1, 2)]),
    e("b[b[b[b,b]]]", (1, 60), (1, 72), (1, 12), &[(C, -1, 1)]),
    e("b[w[b[b,b]]]", (1, 60), (1, 72), (1, 12), &[(C, -1, 1)]),
    e("b[b[w[b,b]]]", (1, 60), (1, 72), (1, 72), &[(D, -1, 1)]),
    e("b[b[b[b,w]]]", (1, 60), (1, 72), (1, 72), &[(E, -1, 1)]),
    e("b[w[w[b,b]]]", (1, 60), (1, 72), (1, 72), &[(D, -1, 1)]),
    e("b[w[b[b,w]]]", (1, 60), (1, 72), (1, 72), &[(E, -1, 1)]),
    e("b[b[w[b,w]]]", (1, 60), (1, 72), (1, 72), &[(F, 1, 1)]),
    e("b[b[b[w,w]]]", (1, 60), (1, 72), (1, 72), &[(A, 1, 2)]),
    e("b[b[w[w,w]]]", (1, 60), (1, 72), (1, 72), &[(G, -1, 1)]),
    e("b[w[b[w,w]]]", (1, 60), (1, 72), (1, 72), &[(A, 1, 2)]),
    e("b[w[w[b,w]]]", (1, 60), (1, 72), (1, 72), &[(F, 1, 1)]),
    e("b[w[w[w,w]]]", (1, 60), (1, 72), (1, 72), &[(G, -1, 1)]),
    e("b[b[b[b[b]]]]", (1, 120), (1, 144), (1, 24), &[(C, -1, 2)]),
    e("b[w[b[b[b]]]]", (1, 120), (1, 144), (1, 24), &[(C, -1, 2)]),
    e("b[b[w[b[b]]]]", (1, 120), (1, 144), (1, 144), &[(D, -1, 2)]),
    e("b[b[b[w[b]]]]", (1, 120), (1, 144), (1, 144), &[(A, 1, 4)]),
    e("b[b[b[b[w]]]]", (1, 120), (1, 144), (1, 24), &[(C, -1, 2)]),
    e("b[w[w[b[b]]]]", (1, 120), (1, 144), (1, 144), &[(D, -1, 2)]),
    e("b[w[b[w[b]]]]", (1, 120), (1, 144), (1, 144), &[(A, 1, 4)]),
    e("b[w[b[b[w]]]]", (1, 120), (1, 144), (1, 24), &[(C, -1, 2)]),
    e("b[b[w[w[b]]]]", (1, 120), (1, 144), (1, 144), &[(G, -1, 2)]),
    e("b[b[w[b[w]]]]", (1, 120), (1, 144), (1, 144), &[(D, -1, 2)]),
    e("b[b[b[w[w]]]]", (1, 120), (1, 144), (1, 144), &[(A, 1, 4)]),
    e("b[b[w[w[w]]]]", (1, 120), (1, 144), (1, 144), &[(G, -1, 2)]),
    e("b[w[b[w[w]]]]", (1, 120), (1, 144), (1, 144), &[(A, 1, 4)]),
    e("b[w[w[b[w]]]]", (1, 120), (1, 144), (1, 144), &[(D, -1, 2)]),
    e("b[w[w[w[b]]]]", (1, 120), (1, 144), (1, 144), &[(G, -1, 2)]),
    e("b[w[w[w[w]]]]", (1, 120), (1, 144), (1, 144), &[(G, -1, 2)]),
];
