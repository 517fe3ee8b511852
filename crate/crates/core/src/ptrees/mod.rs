//! Bi-coloured rooted trees and the exact order-verification oracle.
//!
//! A tree is written in a canonical bracket notation: a colour letter (`b` or
//! `w`) followed by its children in brackets, sorted by their own keys. The
//! bushy order-3 tree with one white leaf is `b[b,w]`.
//!
//! Elementary weights are computed by exact polynomial integration. For a
//! vertex reached at abscissa `τ` with white children `W` and black children
//! `B`,
//!
//! `g(τ) = Σ_j Π_{w∈W} g_w(c_j) · r(τ)ᵀ M_j ∫₀¹ v(σ) Π_{b∈B} g_b(σ) dσ`
//!
//! and `φ(t) = g_t(1)`.

pub mod appendix;

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use num_rational::BigRational;
use num_traits::{One, Signed};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::poly::Poly;
use crate::scalar::{QuadSurd, Scalar};
use crate::tableau::{avf4_exact, fourth_order_family, FamilyParams, PcsrkTableau};

use appendix::{AffineForm, PrintedEntry, Ratio, ALL_BLACK, COLOURED};

pub const MAX_ORDER: usize = 6;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum Colour {
    Black,
    White,
}

impl Colour {
    fn letter(self) -> char {
        match self {
            Colour::Black => 'b',
            Colour::White => 'w',
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct BiColouredTree {
    colour: Colour,
    children: Vec<BiColouredTree>,
    order: usize,
    key: String,
}

impl BiColouredTree {
    pub fn leaf(colour: Colour) -> Self {
        Self::new(colour, Vec::new())
    }

    pub fn new(colour: Colour, mut children: Vec<BiColouredTree>) -> Self {
        children.sort_by(|a, b| a.key.cmp(&b.key));
        let order = 1 + children.iter().map(|c| c.order).sum::<usize>();
        let mut key = colour.letter().to_string();
        if !children.is_empty() {
            key.push('[');
            for (i, c) in children.iter().enumerate() {
                if i > 0 {
                    key.push(',');
                }
                key.push_str(&c.key);
            }
            key.push(']');
        }
        Self {
            colour,
            children,
            order,
            key,
        }
    }

    pub fn colour(&self) -> Colour {
        self.colour
    }

    pub fn children(&self) -> &[BiColouredTree] {
        &self.children
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn key(&self) -> &str {
        &self.key
    }

    /// The same tree with every vertex black.
    pub fn shape(&self) -> BiColouredTree {
        Self::new(Colour::Black, self.children.iter().map(|c| c.shape()).collect())
    }

    pub fn is_monochrome(&self) -> bool {
        self.colour == Colour::Black && self.children.iter().all(|c| c.is_monochrome())
    }

    /// Parses bracket notation; children may be given in any order.
    pub fn parse(text: &str) -> Result<Self> {
        let chars: Vec<char> = text.chars().filter(|c| !c.is_whitespace()).collect();
        let (tree, used) = parse_at(&chars, 0)?;
        if used != chars.len() {
            return Err(Error::InvalidParameter(format!("trailing input in tree '{text}'")));
        }
        Ok(tree)
    }
}

fn parse_at(chars: &[char], pos: usize) -> Result<(BiColouredTree, usize)> {
    let bad = |msg: &str| Error::InvalidParameter(format!("tree syntax: {msg} at position {pos}"));
    let colour = match chars.get(pos) {
        Some('b') => Colour::Black,
        Some('w') => Colour::White,
        _ => return Err(bad("expected 'b' or 'w'")),
    };
    let mut pos = pos + 1;
    let mut children = Vec::new();
    if chars.get(pos) == Some(&'[') {
        pos += 1;
        loop {
            let (child, next) = parse_at(chars, pos)?;
            children.push(child);
            pos = next;
            match chars.get(pos) {
                Some(',') => pos += 1,
                Some(']') => {
                    pos += 1;
                    break;
                }
                _ => return Err(bad("expected ',' or ']'")),
            }
        }
    }
    Ok((BiColouredTree::new(colour, children), pos))
}

impl fmt::Display for BiColouredTree {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.key)
    }
}

impl FromStr for BiColouredTree {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Self::parse(s)
    }
}

impl Serialize for BiColouredTree {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.key)
    }
}

/// All trees of each order `0..=max_order` (index 0 is empty), both root colours.
fn all_trees(max_order: usize) -> Vec<Vec<BiColouredTree>> {
    let mut by_order: Vec<Vec<BiColouredTree>> = vec![Vec::new(); max_order + 1];
    for n in 1..=max_order {
        // Candidate children: every tree of order < n, in a fixed order.
        let pool: Vec<&BiColouredTree> = by_order[1..n].iter().flatten().collect();
        let mut forests = Vec::new();
        forest(&pool, n - 1, 0, &mut Vec::new(), &mut forests);
        let mut out = Vec::new();
        for colour in [Colour::Black, Colour::White] {
            for f in &forests {
                out.push(BiColouredTree::new(colour, f.clone()));
            }
        }
        out.sort_by(|a, b| a.key.cmp(&b.key));
        out.dedup_by(|a, b| a.key == b.key);
        by_order[n] = out;
    }
    by_order
}

/// Multisets from `pool` (non-decreasing index) whose orders sum to `remaining`.
fn forest(
    pool: &[&BiColouredTree],
    remaining: usize,
    start: usize,
    current: &mut Vec<BiColouredTree>,
    out: &mut Vec<Vec<BiColouredTree>>,
) {
    if remaining == 0 {
        out.push(current.clone());
        return;
    }
    for i in start..pool.len() {
        if pool[i].order <= remaining {
            current.push(pool[i].clone());
            forest(pool, remaining - pool[i].order, i, current, out);
            current.pop();
        }
    }
}

/// Every black-rooted tree with at most `max_order` vertices, sorted by
/// `(order, key)`.
pub fn enumerate_black_rooted(max_order: usize) -> Result<Vec<BiColouredTree>> {
    if !(1..=MAX_ORDER).contains(&max_order) {
        return Err(Error::InvalidParameter(format!(
            "max_order must be in 1..={MAX_ORDER}, got {max_order}"
        )));
    }
    Ok(all_trees(max_order)
        .into_iter()
        .flatten()
        .filter(|t| t.colour == Colour::Black)
        .collect())
}

/// `e(t) = (1/|t|) Π e(t_k)`, the coefficient of the exact flow. Colour-blind.
pub fn exact_coefficient(t: &BiColouredTree) -> BigRational {
    t.children
        .iter()
        .fold(BigRational::new(1.into(), (t.order as i64).into()), |acc, c| {
            acc * exact_coefficient(c)
        })
}

struct WeightCalc<'a, T: Scalar> {
    tab: &'a PcsrkTableau<T>,
    cache: HashMap<String, Poly<T>>,
}

impl<T: Scalar> WeightCalc<'_, T> {
    /// `g` as a polynomial in `τ`. The vertex's own colour plays no part.
    fn g(&mut self, t: &BiColouredTree) -> Poly<T> {
        let memo = t.key[1..].to_string();
        if let Some(p) = self.cache.get(&memo) {
            return p.clone();
        }
        let s = self.tab.s();
        let mut inner = Poly::constant(T::one());
        let mut whites = Vec::new();
        for c in &t.children {
            let gc = self.g(c);
            match c.colour {
                Colour::Black => inner = inner.mul(&gc),
                Colour::White => whites.push(gc),
            }
        }
        let iv: Vec<T> = (0..s).map(|k| inner.moment(k)).collect();
        let mut total = Poly::zero();
        for (m, cj) in self.tab.matrices().iter().zip(self.tab.nodes()) {
            let pw = whites.iter().fold(T::one(), |acc, w| acc * w.eval(cj));
            if pw.is_zero() {
                continue;
            }
            let u = m.right_mul(&iv);
            let mut coeffs = vec![T::zero(); s + 1];
            for (a, ua) in u.into_iter().enumerate() {
                coeffs[a + 1] = ua / T::from_int(a as i64 + 1);
            }
            total = total.add(&Poly::new(coeffs).scale(&pw));
        }
        self.cache.insert(memo, total.clone());
        total
    }
}

/// `φ(t)` for a black-rooted tree.
pub fn elementary_weight<T: Scalar>(t: &BiColouredTree, tab: &PcsrkTableau<T>) -> T {
    WeightCalc {
        tab,
        cache: HashMap::new(),
    }
    .g(t)
    .eval(&T::one())
}

/// Weights for many trees, sharing intermediate polynomials.
pub fn elementary_weights<T: Scalar>(trees: &[BiColouredTree], tab: &PcsrkTableau<T>) -> Vec<T> {
    let mut calc = WeightCalc {
        tab,
        cache: HashMap::new(),
    };
    trees.iter().map(|t| calc.g(t).eval(&T::one())).collect()
}

fn lift<T: Scalar>(q: &BigRational) -> Result<T> {
    use num_traits::ToPrimitive;
    let num = q.numer().to_i64();
    let den = q.denom().to_i64();
    match (num, den) {
        (Some(n), Some(d)) => Ok(T::from_ratio(n, d)),
        _ => Err(Error::InvalidParameter(format!("rational {q} does not fit in i64"))),
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct OrderCondition {
    pub tree: BiColouredTree,
    pub order: usize,
    pub weight: String,
    pub exact: String,
    pub residual: f64,
    pub holds: bool,
}

/// `φ(t) − e(t)` for every black-rooted tree up to `max_order`. Exact types
/// compare exactly; `f64` within `1e-12`.
pub fn order_conditions<T: Scalar>(tab: &PcsrkTableau<T>, max_order: usize) -> Result<Vec<OrderCondition>> {
    let trees = enumerate_black_rooted(max_order)?;
    let weights = elementary_weights(&trees, tab);
    trees
        .into_iter()
        .zip(weights)
        .map(|(t, w)| {
            let e = exact_coefficient(&t);
            let diff = w.clone() - lift::<T>(&e)?;
            Ok(OrderCondition {
                order: t.order,
                weight: w.to_string(),
                exact: e.to_string(),
                residual: diff.to_f64(),
                holds: diff.near_zero(),
                tree: t,
            })
        })
        .collect()
}

/// The largest `p ≤ max_order` with `φ(t) = e(t)` for all trees of order `≤ p`.
pub fn certified_order<T: Scalar>(tab: &PcsrkTableau<T>, max_order: usize) -> Result<usize> {
    let conds = order_conditions(tab, max_order)?;
    let first_bad = conds.iter().filter(|c| !c.holds).map(|c| c.order).min();
    Ok(first_bad.map_or(max_order, |o| o - 1))
}

/// The symbols appearing in the printed order-5 coefficient tables.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum Quantity {
    A,
    B,
    C,
    D,
    E,
    F,
    G,
    H,
    Theta,
}

impl fmt::Display for Quantity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Quantity::A => "(A)",
            Quantity::B => "(B)",
            Quantity::C => "(C)",
            Quantity::D => "(D)",
            Quantity::E => "(E)",
            Quantity::F => "(F)",
            Quantity::G => "(G)",
            Quantity::H => "(H)",
            Quantity::Theta => "θ",
        };
        f.write_str(s)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum ThetaSource {
    /// `θ = −ᾶ/3000`, read off the printed proposed row of the all-black table.
    ProposedRow,
    /// `θ = −ᾶ/300`, read off its printed difference row.
    DifferenceRow,
}

#[derive(Clone, Debug, Serialize)]
pub struct ThetaCandidates<T> {
    pub proposed_row: T,
    pub difference_row: T,
    /// Printed θ-dependent formulas that each candidate reproduces, out of `checked`.
    pub proposed_row_hits: usize,
    pub difference_row_hits: usize,
    pub checked: usize,
    pub confirmed: Option<ThetaSource>,
}

impl<T: Clone> ThetaCandidates<T> {
    pub fn confirmed_value(&self) -> Option<T> {
        self.confirmed.map(|s| match s {
            ThetaSource::ProposedRow => self.proposed_row.clone(),
            ThetaSource::DifferenceRow => self.difference_row.clone(),
        })
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct TableQuantities<T> {
    /// `(A)` through `(H)`, in order.
    pub values: [T; 8],
    pub theta: ThetaCandidates<T>,
}

impl<T: Scalar> TableQuantities<T> {
    pub fn get(&self, q: Quantity) -> Option<&T> {
        match q {
            Quantity::Theta => None,
            other => Some(&self.values[other as usize]),
        }
    }

    /// Substitutes the quantities, using `theta` for `θ`.
    pub fn eval(&self, form: &AffineForm, theta: Option<&T>) -> Option<T> {
        let mut acc: T = ratio(form.constant);
        for &(q, n, d) in form.terms {
            let v = match q {
                Quantity::Theta => theta?.clone(),
                other => self.get(other)?.clone(),
            };
            acc = acc + T::from_ratio(n, d) * v;
        }
        Some(acc)
    }
}

fn ratio<T: Scalar>(r: Ratio) -> T {
    T::from_ratio(r.0, r.1)
}

/// The eight printed quantities, verbatim.
pub fn quantity_values<T: Scalar>(p: &FamilyParams<T>) -> [T; 8] {
    let q = |n: i64, d: i64| T::from_ratio(n, d);
    let c1 = p.c1().clone();
    let at = p.alpha_tilde().clone();
    let [g1, g2, g3, g4] = p.gamma().clone();
    let k = q(2, 1) * c1.clone() - T::one();
    let k2 = k.clone() * k.clone();
    let cc = c1.clone() * (c1.clone() - T::one());
    let s134 = g1 + g3.clone() + g4.clone();
    let s34 = q(2, 1) * g3.clone() + q(3, 1) * g4.clone();
    [
        k2.clone() * s134.clone() / q(120, 1),
        c1.clone() * c1.clone() / q(12, 1) - c1 / q(12, 1) + q(5, 24),
        q(5, 72) - at.clone() / q(1800, 1),
        cc.clone() * at / q(180, 1),
        k.clone() * s34.clone() / q(1440, 1),
        cc.clone() * k * s34 / q(144, 1),
        cc * k2.clone() * s134 / q(24, 1),
        k2 * (q(4, 1) * g2 + q(12, 1) * g3 + q(9, 1) * g4) / q(288, 1),
    ]
}

/// `(A)`–`(H)` together with both readings of the undefined `θ`. The weights
/// of the all-black order-5 trees decide which reading the tables support.
pub fn table_quantities<T: Scalar>(p: &FamilyParams<T>) -> Result<TableQuantities<T>> {
    let values = quantity_values(p);
    let at = p.alpha_tilde().clone();
    let cand_p = -at.clone() / T::from_int(3000);
    let cand_d = -at / T::from_int(300);
    let tab = fourth_order_family(p)?;
    let mut tq = TableQuantities {
        values,
        theta: ThetaCandidates {
            proposed_row: cand_p.clone(),
            difference_row: cand_d.clone(),
            proposed_row_hits: 0,
            difference_row_hits: 0,
            checked: 0,
            confirmed: None,
        },
    };
    let (mut hits_p, mut hits_d, mut checked) = (0, 0, 0);
    for entry in ALL_BLACK.iter() {
        let tree = BiColouredTree::parse(entry.tree)?;
        let phi = elementary_weight(&tree, &tab);
        let exact: T = ratio(entry.exact);
        let mut forms: Vec<(&AffineForm, T)> = Vec::new();
        if has_theta(&entry.proposed) {
            forms.push((&entry.proposed, phi.clone()));
        }
        if let Some(d) = entry.difference.as_ref().filter(|d| has_theta(d)) {
            forms.push((d, phi.clone() - exact));
        }
        for (form, target) in forms {
            checked += 1;
            let matches = |th: &T| tq.eval(form, Some(th)).is_some_and(|v| (v - target.clone()).near_zero());
            hits_p += usize::from(matches(&cand_p));
            hits_d += usize::from(matches(&cand_d));
        }
    }
    tq.theta.proposed_row_hits = hits_p;
    tq.theta.difference_row_hits = hits_d;
    tq.theta.checked = checked;
    tq.theta.confirmed = match hits_p.cmp(&hits_d) {
        std::cmp::Ordering::Greater => Some(ThetaSource::ProposedRow),
        std::cmp::Ordering::Less => Some(ThetaSource::DifferenceRow),
        std::cmp::Ordering::Equal => None,
    };
    Ok(tq)
}

fn has_theta(f: &AffineForm) -> bool {
    f.terms.iter().any(|t| t.0 == Quantity::Theta)
}

fn format_form(f: &AffineForm) -> String {
    let mut out = String::new();
    let (n, d) = f.constant;
    if n != 0 || f.terms.is_empty() {
        out.push_str(&fmt_ratio(n, d));
    }
    for &(q, n, d) in f.terms {
        let coef = BigRational::new(n.into(), d.into());
        let neg = coef.is_negative();
        let mag = coef.abs();
        if out.is_empty() {
            if neg {
                out.push('-');
            }
        } else {
            out.push_str(if neg { " - " } else { " + " });
        }
        if !mag.is_one() {
            out.push_str(&format!("{mag}*"));
        }
        out.push_str(&q.to_string());
    }
    out
}

fn fmt_ratio(n: i64, d: i64) -> String {
    BigRational::new(n.into(), d.into()).to_string()
}

#[derive(Clone, Debug, Serialize)]
pub struct EntryReport {
    /// `all-black`, or the uncoloured shape the entry is listed under.
    pub group: String,
    pub tree: String,
    pub exact_printed: String,
    pub exact_matches: bool,
    pub avf4_printed: String,
    pub avf4_oracle: String,
    pub avf4_matches: bool,
    pub proposed_formula: String,
    pub proposed_printed: String,
    pub proposed_oracle: String,
    /// Oracle minus printed, as `f64`.
    pub proposed_gap: f64,
    pub proposed_matches: bool,
    pub difference_matches: Option<bool>,
}

#[derive(Clone, Debug, Serialize)]
pub struct TableReport {
    pub quantities: [String; 8],
    pub theta: ThetaCandidates<String>,
    pub entries: Vec<EntryReport>,
    /// Order-5 black-rooted trees that no table lists.
    pub untabulated: Vec<String>,
}

impl TableReport {
    pub fn mismatches(&self) -> impl Iterator<Item = &EntryReport> {
        self.entries.iter().filter(|e| {
            !e.exact_matches || !e.avf4_matches || !e.proposed_matches || e.difference_matches == Some(false)
        })
    }

    pub fn entry(&self, group: &str, tree: &str) -> Option<&EntryReport> {
        self.entries.iter().find(|e| e.group == group && e.tree == tree)
    }
}

impl fmt::Display for TableReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let names = ["A", "B", "C", "D", "E", "F", "G", "H"];
        for (n, v) in names.iter().zip(&self.quantities) {
            writeln!(f, "({n}) = {v}")?;
        }
        writeln!(
            f,
            "theta: -alpha/3000 = {} ({} hits), -alpha/300 = {} ({} hits) of {}; confirmed {}",
            self.theta.proposed_row,
            self.theta.proposed_row_hits,
            self.theta.difference_row,
            self.theta.difference_row_hits,
            self.theta.checked,
            match self.theta.confirmed {
                Some(ThetaSource::ProposedRow) => "-alpha/3000",
                Some(ThetaSource::DifferenceRow) => "-alpha/300",
                None => "neither",
            }
        )?;
        let mut group = "";
        for e in &self.entries {
            if e.group != group {
                group = &e.group;
                writeln!(f, "[{group}]")?;
            }
            let mark = |ok: bool| if ok { "ok" } else { "MISMATCH" };
            write!(
                f,
                "  {:<18} exact {} {} | avf4 {} {} | proposed {} = {} {}",
                e.tree,
                e.exact_printed,
                mark(e.exact_matches),
                e.avf4_printed,
                if e.avf4_matches { "ok".to_string() } else { format!("MISMATCH (oracle {})", e.avf4_oracle) },
                e.proposed_formula,
                e.proposed_printed,
                if e.proposed_matches { "ok".to_string() } else { format!("MISMATCH (oracle {})", e.proposed_oracle) },
            )?;
            if let Some(d) = e.difference_matches {
                write!(f, " | difference {}", mark(d))?;
            }
            writeln!(f)?;
        }
        for t in &self.untabulated {
            writeln!(f, "untabulated: {t}")?;
        }
        Ok(())
    }
}

/// Checks every printed order-5 entry against the oracle: the exact column,
/// the AVF(4) column (in `Q(√3)`) and the proposed method at `p` with `(A)`–`(H)`
/// and the confirmed `θ` substituted. Mismatches are report content.
pub fn verify_appendix<T: Scalar>(p: &FamilyParams<T>) -> Result<TableReport> {
    let tq = table_quantities(p)?;
    let theta = tq.theta.confirmed_value();
    let tab = fourth_order_family(p)?;
    let avf4 = avf4_exact();
    let mut entries = Vec::new();
    let mut listed = std::collections::BTreeSet::new();
    let groups = ALL_BLACK.iter().map(|e| (true, e)).chain(COLOURED.iter().map(|e| (false, e)));
    for (all_black, entry) in groups {
        let tree = BiColouredTree::parse(entry.tree)?;
        listed.insert(tree.key.clone());
        let group = if all_black {
            "all-black".to_string()
        } else {
            format!("shape {}", tree.shape())
        };
        entries.push(check_entry(group, &tree, entry, &tq, theta.as_ref(), &tab, &avf4)?);
    }
    let untabulated = enumerate_black_rooted(5)?
        .into_iter()
        .filter(|t| t.order == 5 && !listed.contains(&t.key))
        .map(|t| t.key)
        .collect();
    let s = |v: &T| v.to_string();
    Ok(TableReport {
        quantities: tq.values.clone().map(|v| v.to_string()),
        theta: ThetaCandidates {
            proposed_row: s(&tq.theta.proposed_row),
            difference_row: s(&tq.theta.difference_row),
            proposed_row_hits: tq.theta.proposed_row_hits,
            difference_row_hits: tq.theta.difference_row_hits,
            checked: tq.theta.checked,
            confirmed: tq.theta.confirmed,
        },
        entries,
        untabulated,
    })
}

fn check_entry<T: Scalar>(
    group: String,
    tree: &BiColouredTree,
    entry: &PrintedEntry,
    tq: &TableQuantities<T>,
    theta: Option<&T>,
    tab: &PcsrkTableau<T>,
    avf4: &PcsrkTableau<QuadSurd>,
) -> Result<EntryReport> {
    let exact = exact_coefficient(tree);
    let printed_exact = BigRational::new(entry.exact.0.into(), entry.exact.1.into());
    let avf_oracle = elementary_weight(tree, avf4);
    let avf_printed: QuadSurd = ratio(entry.avf4);
    let phi = elementary_weight(tree, tab);
    let printed = tq.eval(&entry.proposed, theta);
    let (proposed_printed, proposed_gap, proposed_matches) = match &printed {
        Some(v) => {
            let gap = phi.clone() - v.clone();
            (v.to_string(), gap.to_f64(), gap.near_zero())
        }
        None => ("unresolved".to_string(), f64::NAN, false),
    };
    let difference_matches = entry.difference.as_ref().map(|d| {
        let target = phi.clone() - lift::<T>(&exact).unwrap_or_else(|_| T::zero());
        tq.eval(d, theta).is_some_and(|v| (v - target).near_zero())
    });
    Ok(EntryReport {
        group,
        tree: tree.key.clone(),
        exact_printed: printed_exact.to_string(),
        exact_matches: printed_exact == exact,
        avf4_printed: avf_printed.to_string(),
        avf4_oracle: avf_oracle.to_string(),
        avf4_matches: (avf_oracle - avf_printed).is_zero(),
        proposed_formula: format_form(&entry.proposed),
        proposed_printed,
        proposed_oracle: phi.to_string(),
        proposed_gap,
        proposed_matches,
        difference_matches,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tableau::{avf2, classic_tableau, ClassicKind};

    fn q(n: i64, d: i64) -> BigRational {
        BigRational::new(n.into(), d.into())
    }

    fn tree(s: &str) -> BiColouredTree {
        BiColouredTree::parse(s).unwrap()
    }

    fn random_params() -> FamilyParams<BigRational> {
        FamilyParams::new(q(1, 5), [q(3, 2), q(-7, 3), q(5, 4), q(-2, 1)], q(-7, 3)).unwrap()
    }

    #[test]
    fn counts_by_order() {
        let trees = enumerate_black_rooted(6).unwrap();
        let counts: Vec<usize> = (1..=6).map(|n| trees.iter().filter(|t| t.order() == n).count()).collect();
        assert_eq!(counts, vec![1, 2, 7, 26, 107, 458]);
        assert_eq!(enumerate_black_rooted(1).unwrap().len(), 1);
        assert_eq!(enumerate_black_rooted(3).unwrap().len(), 10);
        assert!(enumerate_black_rooted(0).is_err());
        assert!(enumerate_black_rooted(7).is_err());
        let mut keys: Vec<&str> = trees.iter().map(|t| t.key()).collect();
        let n = keys.len();
        keys.dedup();
        assert_eq!(keys.len(), n);
    }

    #[test]
    fn order_five_has_nine_shapes() {
        let trees = enumerate_black_rooted(5).unwrap();
        let mut shapes: Vec<String> =
            trees.iter().filter(|t| t.order() == 5).map(|t| t.shape().key().to_string()).collect();
        shapes.sort();
        shapes.dedup();
        assert_eq!(shapes.len(), 9);
    }

    #[test]
    fn parse_is_canonical() {
        let a = tree("b[w[b],b,b[b]]");
        let b = tree("b[b[b], w[b], b]");
        assert_eq!(a, b);
        assert_eq!(a.key(), "b[b,b[b],w[b]]");
        assert_eq!(a.order(), 6);
        assert_eq!(tree(a.key()), a);
        assert!(BiColouredTree::parse("b[").is_err());
        assert!(BiColouredTree::parse("x").is_err());
        assert!(BiColouredTree::parse("b]").is_err());
    }

    #[test]
    fn exact_coefficients() {
        assert_eq!(exact_coefficient(&tree("b")), q(1, 1));
        assert_eq!(exact_coefficient(&tree("b[b,b,b,b]")), q(1, 5));
        assert_eq!(exact_coefficient(&tree("b[b[b[b[b]]]]")), q(1, 120));
        assert_eq!(exact_coefficient(&tree("b[w[w[b[w]]]]")), q(1, 120));
        let mut chain = tree("b");
        for n in 2..=5i64 {
            chain = BiColouredTree::new(Colour::Black, vec![chain]);
            let fact: i64 = (1..=n).product();
            assert_eq!(exact_coefficient(&chain), q(1, fact));
        }
    }

    #[test]
    fn three_vertex_mixed_tree_is_one_third() {
        let tab = fourth_order_family(&random_params()).unwrap();
        assert_eq!(elementary_weight(&tree("b[b,w]"), &tab), q(1, 3));
    }

    #[test]
    fn avf4_weights() {
        let t = avf4_exact();
        assert_eq!(elementary_weight(&tree("b[b,b,b,b]"), &t), QuadSurd::from_ratio(1, 5));
        assert_eq!(elementary_weight(&tree("b[b,b[b,b]]"), &t), QuadSurd::from_ratio(5, 72));
    }

    #[test]
    fn certified_orders() {
        assert_eq!(certified_order(&avf2::<BigRational>(), 6).unwrap(), 2);
        assert_eq!(certified_order(&classic_tableau(ClassicKind::Avf2), 5).unwrap(), 2);
        assert_eq!(certified_order(&avf4_exact(), 5).unwrap(), 4);
        let tab = fourth_order_family(&random_params()).unwrap();
        assert_eq!(certified_order(&tab, 5).unwrap(), 4);
        let opt = fourth_order_family(&FamilyParams::optimal(q(5, 1))).unwrap();
        assert_eq!(certified_order(&opt, 5).unwrap(), 5);
    }

    #[test]
    fn float_weights_agree_with_exact() {
        let p = random_params();
        let exact = fourth_order_family(&p).unwrap();
        let float = exact.to_f64();
        for t in enumerate_black_rooted(5).unwrap() {
            let a = elementary_weight(&t, &exact).to_f64();
            let b = elementary_weight(&t, &float);
            assert!((a - b).abs() < 1e-12 * (1.0 + a.abs()), "{t}");
        }
        assert_eq!(certified_order(&float, 5).unwrap(), 4);
    }

    #[test]
    fn optimal_quantities() {
        let tq = table_quantities(&FamilyParams::optimal(q(-234, 1))).unwrap();
        let v = |x: Quantity| tq.get(x).unwrap().clone();
        let r = |n, d| QuadSurd::from_ratio(n, d);
        assert_eq!(v(Quantity::A), r(1, 180));
        assert_eq!(v(Quantity::B), r(1, 5));
        assert_eq!(v(Quantity::E), r(-1, 360));
        assert_eq!(v(Quantity::F), r(1, 360));
        assert_eq!(v(Quantity::G), r(-1, 360));
        assert_eq!(v(Quantity::H), r(1, 80));
        let (c1, _) = crate::tableau::optimal_c1_gamma();
        let k = r(2, 1) * c1.clone() - r(1, 1);
        assert_eq!(k.clone() * k, r(3, 5));
        assert_eq!(c1.clone() * (c1 - r(1, 1)), r(-1, 10));
    }

    #[test]
    fn theta_resolves_to_difference_row() {
        let tq = table_quantities(&random_params()).unwrap();
        assert_eq!(tq.theta.confirmed, Some(ThetaSource::DifferenceRow));
        assert_eq!(tq.theta.proposed_row, q(7, 9000));
        assert_eq!(tq.theta.difference_row, q(7, 900));
        assert!(tq.theta.difference_row_hits > tq.theta.proposed_row_hits);
    }

    #[test]
    fn appendix_known_values() {
        let rep = verify_appendix(&FamilyParams::optimal(q(-234, 1))).unwrap();
        assert_eq!(rep.untabulated.len(), 1);
        let first_coloured = rep.entries.iter().find(|e| e.avf4_printed == "7/144").unwrap();
        assert!(first_coloured.avf4_matches);
        let rep5 = verify_appendix(&FamilyParams::optimal(q(5, 1))).unwrap();
        let chain_like = rep5.entry("shape b[b[b[b,b]]]", "b[b[b[b,b]]]").unwrap();
        assert_eq!(chain_like.proposed_printed, "1/60");
        assert!(chain_like.proposed_matches);
        for e in rep5.entries.iter().filter(|e| e.proposed_formula == "1/2*(B)") {
            assert_eq!(e.proposed_printed, "1/10");
        }
    }

    #[test]
    fn order_four_holds_for_random_rational_params() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for _ in 0..5 {
            let c1 = q(rng.gen_range(1..=9), 20);
            let mut r = || q(rng.gen_range(-20..=20), rng.gen_range(1..=7));
            let mut at = r();
            if Scalar::is_zero(&at) {
                at = q(1, 1);
            }
            let p = FamilyParams::new(c1, [r(), r(), r(), r()], at).unwrap();
            let tab = fourth_order_family(&p).unwrap();
            assert!(order_conditions(&tab, 4).unwrap().iter().all(|c| c.holds));
        }
    }
}
