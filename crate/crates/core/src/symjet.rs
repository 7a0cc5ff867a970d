//! Exact symbolic algebra over jet coordinates.
//!
//! Expressions are polynomials in coordinates, time, momentum symbols `p^r_σ` and opaque
//! external derivatives `U_σ`, with Gaussian-rational coefficients. Every operation returns
//! the canonical sparse form, so equality is a structural comparison.

use std::collections::BTreeMap;
use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use num_bigint::BigInt;
use num_complex::Complex64;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};

use crate::error::{Error, Result};
use crate::multiindex::MultiIndex;

/// Exact complex rational `re + i·im`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct GaussRat {
    pub re: BigRational,
    pub im: BigRational,
}

impl GaussRat {
    pub fn new(re: BigRational, im: BigRational) -> Self {
        GaussRat { re, im }
    }

    pub fn int(k: i64) -> Self {
        GaussRat { re: BigRational::from_integer(k.into()), im: BigRational::zero() }
    }

    pub fn ratio(num: i64, den: i64) -> Self {
        GaussRat { re: BigRational::new(num.into(), den.into()), im: BigRational::zero() }
    }

    pub fn from_rational(re: BigRational) -> Self {
        GaussRat { re, im: BigRational::zero() }
    }

    pub fn i() -> Self {
        GaussRat { re: BigRational::zero(), im: BigRational::one() }
    }

    pub fn zero() -> Self {
        GaussRat::int(0)
    }

    pub fn one() -> Self {
        GaussRat::int(1)
    }

    pub fn is_zero(&self) -> bool {
        self.re.is_zero() && self.im.is_zero()
    }

    pub fn conj(&self) -> Self {
        GaussRat { re: self.re.clone(), im: -self.im.clone() }
    }

    pub fn inv(&self) -> Option<Self> {
        let d = &self.re * &self.re + &self.im * &self.im;
        if d.is_zero() {
            return None;
        }
        Some(GaussRat { re: &self.re / &d, im: -&self.im / &d })
    }

    pub fn to_complex(&self) -> Complex64 {
        Complex64::new(self.re.to_f64().unwrap_or(f64::NAN), self.im.to_f64().unwrap_or(f64::NAN))
    }
}

impl Add for GaussRat {
    type Output = GaussRat;
    fn add(self, o: GaussRat) -> GaussRat {
        GaussRat { re: self.re + o.re, im: self.im + o.im }
    }
}

impl Sub for GaussRat {
    type Output = GaussRat;
    fn sub(self, o: GaussRat) -> GaussRat {
        GaussRat { re: self.re - o.re, im: self.im - o.im }
    }
}

impl Mul for GaussRat {
    type Output = GaussRat;
    fn mul(self, o: GaussRat) -> GaussRat {
        GaussRat { re: &self.re * &o.re - &self.im * &o.im, im: &self.re * &o.im + &self.im * &o.re }
    }
}

impl Neg for GaussRat {
    type Output = GaussRat;
    fn neg(self) -> GaussRat {
        GaussRat { re: -self.re, im: -self.im }
    }
}

fn write_rational(f: &mut fmt::Formatter<'_>, r: &BigRational) -> fmt::Result {
    if r.denom().is_one() {
        write!(f, "{}", r.numer())
    } else {
        write!(f, "{}/{}", r.numer(), r.denom())
    }
}

impl fmt::Display for GaussRat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.im.is_zero() {
            return write_rational(f, &self.re);
        }
        write!(f, "(c ")?;
        write_rational(f, &self.re)?;
        write!(f, " ")?;
        write_rational(f, &self.im)?;
        write!(f, ")")
    }
}

/// Name of an unknown function.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Func {
    P,
    PBar,
    S,
    R,
}

impl Func {
    fn tag(self) -> &'static str {
        match self {
            Func::P => "p",
            Func::PBar => "pbar",
            Func::S => "S",
            Func::R => "R",
        }
    }

    fn conj(self) -> Func {
        match self {
            Func::P => Func::PBar,
            Func::PBar => Func::P,
            other => other,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Atom {
    Coord(usize),
    Time,
    Mom(Func, MultiIndex),
    /// Derivative `∂_σ` of a named external field such as the potential `U`.
    Ext(String, MultiIndex),
}

impl Atom {
    fn total_diff(&self, i: usize) -> Option<(Atom, bool)> {
        match self {
            Atom::Coord(j) => (*j == i).then_some((Atom::Time, true)),
            Atom::Time => None,
            Atom::Mom(r, s) => Some((Atom::Mom(*r, s.extend(i)), false)),
            Atom::Ext(name, s) => Some((Atom::Ext(name.clone(), s.extend(i)), false)),
        }
    }
}

impl fmt::Display for Atom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Atom::Coord(i) => write!(f, "q{i}"),
            Atom::Time => write!(f, "t"),
            Atom::Mom(r, s) => write!(f, "{}:{}", r.tag(), s.canonical_name()),
            Atom::Ext(name, s) => write!(f, "{name}:{}", s.canonical_name()),
        }
    }
}

/// Product of atoms with positive exponents, sorted by atom.
pub type Monomial = Vec<(Atom, u32)>;

/// Canonical sparse polynomial.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Poly {
    terms: BTreeMap<Monomial, GaussRat>,
}

fn mono_mul(a: &Monomial, b: &Monomial) -> Monomial {
    let mut m: BTreeMap<Atom, u32> = a.iter().cloned().collect();
    for (atom, k) in b {
        *m.entry(atom.clone()).or_insert(0) += k;
    }
    m.into_iter().collect()
}

impl Poly {
    pub fn zero() -> Self {
        Poly::default()
    }

    pub fn constant(c: GaussRat) -> Self {
        let mut p = Poly::zero();
        p.add_term(Vec::new(), c);
        p
    }

    pub fn atom(a: Atom) -> Self {
        let mut p = Poly::zero();
        p.add_term(vec![(a, 1)], GaussRat::one());
        p
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn terms(&self) -> impl Iterator<Item = (&Monomial, &GaussRat)> {
        self.terms.iter()
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    fn add_term(&mut self, m: Monomial, c: GaussRat) {
        if c.is_zero() {
            return;
        }
        match self.terms.entry(m) {
            std::collections::btree_map::Entry::Vacant(v) => {
                v.insert(c);
            }
            std::collections::btree_map::Entry::Occupied(mut o) => {
                let sum = o.get().clone() + c;
                if sum.is_zero() {
                    o.remove();
                } else {
                    *o.get_mut() = sum;
                }
            }
        }
    }

    pub fn scale(&self, c: &GaussRat) -> Poly {
        let mut out = Poly::zero();
        for (m, v) in &self.terms {
            out.add_term(m.clone(), v.clone() * c.clone());
        }
        out
    }

    pub fn pow(&self, k: u32) -> Poly {
        let mut out = Poly::constant(GaussRat::one());
        for _ in 0..k {
            out = &out * self;
        }
        out
    }

    /// Partial derivative with respect to one atom.
    pub fn partial(&self, atom: &Atom) -> Poly {
        let mut out = Poly::zero();
        for (m, c) in &self.terms {
            if let Some(pos) = m.iter().position(|(a, _)| a == atom) {
                let k = m[pos].1;
                let mut rest = m.clone();
                if k == 1 {
                    rest.remove(pos);
                } else {
                    rest[pos].1 -= 1;
                }
                out.add_term(rest, c.clone() * GaussRat::int(k.into()));
            }
        }
        out
    }

    /// Total derivative `D_i`.
    pub fn total_diff(&self, i: usize) -> Poly {
        let mut out = Poly::zero();
        for (m, c) in &self.terms {
            for (pos, (atom, k)) in m.iter().enumerate() {
                let Some((image, is_unit)) = atom.total_diff(i) else { continue };
                let mut rest = m.clone();
                if *k == 1 {
                    rest.remove(pos);
                } else {
                    rest[pos].1 -= 1;
                }
                let coeff = c.clone() * GaussRat::int((*k).into());
                if is_unit {
                    out.add_term(rest, coeff);
                } else {
                    out.add_term(mono_mul(&rest, &vec![(image, 1)]), coeff);
                }
            }
        }
        out
    }

    /// Repeated total differentiation `D_σ`.
    pub fn prolong(&self, sigma: &MultiIndex) -> Poly {
        let mut out = self.clone();
        for (i, &k) in sigma.counts().iter().enumerate() {
            for _ in 0..k {
                out = out.total_diff(i);
            }
        }
        out
    }

    /// Complex conjugate, with `p ↔ p̄` and all other atoms real.
    pub fn conj(&self) -> Poly {
        let mut out = Poly::zero();
        for (m, c) in &self.terms {
            let mono: BTreeMap<Atom, u32> = m
                .iter()
                .map(|(a, k)| {
                    let a = match a {
                        Atom::Mom(r, s) => Atom::Mom(r.conj(), s.clone()),
                        other => other.clone(),
                    };
                    (a, *k)
                })
                .collect();
            out.add_term(mono.into_iter().collect(), c.conj());
        }
        out
    }

    /// Replace atoms by polynomials.
    pub fn substitute(&self, f: &impl Fn(&Atom) -> Option<Poly>) -> Poly {
        let mut out = Poly::zero();
        for (m, c) in &self.terms {
            let mut term = Poly::constant(c.clone());
            for (a, k) in m {
                let base = f(a).unwrap_or_else(|| Poly::atom(a.clone()));
                term = &term * &base.pow(*k);
            }
            out = &out + &term;
        }
        out
    }

    pub fn atoms(&self) -> Vec<Atom> {
        let mut all: Vec<Atom> = self.terms.keys().flat_map(|m| m.iter().map(|(a, _)| a.clone())).collect();
        all.sort();
        all.dedup();
        all
    }

    pub fn eval_exact(&self, f: &impl Fn(&Atom) -> GaussRat) -> GaussRat {
        let mut total = GaussRat::zero();
        for (m, c) in &self.terms {
            let mut v = c.clone();
            for (a, k) in m {
                let x = f(a);
                for _ in 0..*k {
                    v = v * x.clone();
                }
            }
            total = total + v;
        }
        total
    }

    pub fn eval(&self, f: &impl Fn(&Atom) -> Complex64) -> Complex64 {
        self.terms.iter().map(|(m, c)| m.iter().fold(c.to_complex(), |acc, (a, k)| acc * f(a).powu(*k))).sum()
    }

    pub fn to_expr(&self) -> JetExpr {
        let mut summands: Vec<JetExpr> = self
            .terms
            .iter()
            .map(|(m, c)| {
                let mut factors = Vec::new();
                if !(c == &GaussRat::one() && !m.is_empty()) {
                    factors.push(JetExpr::Const(c.clone()));
                }
                for (a, k) in m {
                    let base = JetExpr::Atom(a.clone());
                    factors.push(if *k == 1 { base } else { JetExpr::Pow(Box::new(base), *k) });
                }
                if factors.len() == 1 {
                    factors.pop().unwrap()
                } else {
                    JetExpr::Product(factors)
                }
            })
            .collect();
        match summands.len() {
            0 => JetExpr::Const(GaussRat::zero()),
            1 => summands.pop().unwrap(),
            _ => JetExpr::Sum(summands),
        }
    }
}

impl Add for &Poly {
    type Output = Poly;
    fn add(self, o: &Poly) -> Poly {
        let mut out = self.clone();
        for (m, c) in &o.terms {
            out.add_term(m.clone(), c.clone());
        }
        out
    }
}

impl Sub for &Poly {
    type Output = Poly;
    fn sub(self, o: &Poly) -> Poly {
        let mut out = self.clone();
        for (m, c) in &o.terms {
            out.add_term(m.clone(), -c.clone());
        }
        out
    }
}

impl Mul for &Poly {
    type Output = Poly;
    fn mul(self, o: &Poly) -> Poly {
        let mut out = Poly::zero();
        for (ma, ca) in &self.terms {
            for (mb, cb) in &o.terms {
                out.add_term(mono_mul(ma, mb), ca.clone() * cb.clone());
            }
        }
        out
    }
}

impl Neg for &Poly {
    type Output = Poly;
    fn neg(self) -> Poly {
        self.scale(&GaussRat::int(-1))
    }
}

impl Add for Poly {
    type Output = Poly;
    fn add(self, o: Poly) -> Poly {
        &self + &o
    }
}

impl Sub for Poly {
    type Output = Poly;
    fn sub(self, o: Poly) -> Poly {
        &self - &o
    }
}

impl Mul for Poly {
    type Output = Poly;
    fn mul(self, o: Poly) -> Poly {
        &self * &o
    }
}

impl fmt::Display for Poly {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.to_expr())
    }
}

/// Expression tree. Operations canonicalize through [`Poly`].
#[derive(Clone, Debug, PartialEq)]
pub enum JetExpr {
    Const(GaussRat),
    Atom(Atom),
    Sum(Vec<JetExpr>),
    Product(Vec<JetExpr>),
    Pow(Box<JetExpr>, u32),
}

impl JetExpr {
    pub fn int(k: i64) -> Self {
        JetExpr::Const(GaussRat::int(k))
    }

    pub fn constant(c: GaussRat) -> Self {
        JetExpr::Const(c)
    }

    pub fn coord(i: usize) -> Self {
        JetExpr::Atom(Atom::Coord(i))
    }

    pub fn time() -> Self {
        JetExpr::Atom(Atom::Time)
    }

    pub fn mom(r: Func, sigma: MultiIndex) -> Self {
        JetExpr::Atom(Atom::Mom(r, sigma))
    }

    pub fn ext(name: &str, sigma: MultiIndex) -> Self {
        JetExpr::Atom(Atom::Ext(name.to_string(), sigma))
    }

    pub fn pow(self, k: u32) -> Self {
        JetExpr::Pow(Box::new(self), k)
    }

    pub fn to_poly(&self) -> Poly {
        match self {
            JetExpr::Const(c) => Poly::constant(c.clone()),
            JetExpr::Atom(a) => Poly::atom(a.clone()),
            JetExpr::Sum(items) => items.iter().fold(Poly::zero(), |acc, e| &acc + &e.to_poly()),
            JetExpr::Product(items) => items.iter().fold(Poly::constant(GaussRat::one()), |acc, e| &acc * &e.to_poly()),
            JetExpr::Pow(base, k) => base.to_poly().pow(*k),
        }
    }

    /// Canonical form of the expression.
    pub fn canonical(&self) -> JetExpr {
        self.to_poly().to_expr()
    }

    pub fn equivalent(&self, other: &JetExpr) -> bool {
        self.to_poly() == other.to_poly()
    }

    /// Prefix-notation text form.
    pub fn to_prefix(&self) -> String {
        self.to_string()
    }

    pub fn parse_prefix(text: &str, n: usize) -> Result<JetExpr> {
        let tokens = tokenize(text);
        let mut pos = 0;
        let e = parse_tokens(&tokens, &mut pos, n)?;
        if pos != tokens.len() {
            return Err(Error::Parse(format!("trailing input after expression in {text:?}")));
        }
        Ok(e)
    }
}

impl fmt::Display for JetExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            JetExpr::Const(c) => write!(f, "{c}"),
            JetExpr::Atom(a) => write!(f, "{a}"),
            JetExpr::Sum(items) | JetExpr::Product(items) => {
                let op = if matches!(self, JetExpr::Sum(_)) { "+" } else { "*" };
                write!(f, "({op}")?;
                for e in items {
                    write!(f, " {e}")?;
                }
                write!(f, ")")
            }
            JetExpr::Pow(b, k) => write!(f, "(^ {b} {k})"),
        }
    }
}

impl Add for JetExpr {
    type Output = JetExpr;
    fn add(self, o: JetExpr) -> JetExpr {
        JetExpr::Sum(vec![self, o])
    }
}

impl Sub for JetExpr {
    type Output = JetExpr;
    fn sub(self, o: JetExpr) -> JetExpr {
        JetExpr::Sum(vec![self, JetExpr::Product(vec![JetExpr::int(-1), o])])
    }
}

impl Mul for JetExpr {
    type Output = JetExpr;
    fn mul(self, o: JetExpr) -> JetExpr {
        JetExpr::Product(vec![self, o])
    }
}

impl Neg for JetExpr {
    type Output = JetExpr;
    fn neg(self) -> JetExpr {
        JetExpr::Product(vec![JetExpr::int(-1), self])
    }
}

fn tokenize(text: &str) -> Vec<String> {
    text.replace('(', " ( ").replace(')', " ) ").split_whitespace().map(str::to_string).collect()
}

fn parse_rational(s: &str) -> Result<BigRational> {
    let bad = || Error::Parse(format!("bad rational {s:?}"));
    match s.split_once('/') {
        Some((a, b)) => {
            let (a, b): (BigInt, BigInt) = (a.parse().map_err(|_| bad())?, b.parse().map_err(|_| bad())?);
            if b.is_zero() {
                return Err(bad());
            }
            Ok(BigRational::new(a, b))
        }
        None => Ok(BigRational::from_integer(s.parse().map_err(|_| bad())?)),
    }
}

fn parse_tokens(tokens: &[String], pos: &mut usize, n: usize) -> Result<JetExpr> {
    let tok = tokens.get(*pos).ok_or_else(|| Error::Parse("unexpected end of expression".into()))?;
    *pos += 1;
    if tok == "(" {
        let op = tokens.get(*pos).ok_or_else(|| Error::Parse("missing operator".into()))?.clone();
        *pos += 1;
        let out = match op.as_str() {
            "c" => {
                let re = parse_rational(tokens.get(*pos).map(String::as_str).unwrap_or(""))?;
                let im = parse_rational(tokens.get(*pos + 1).map(String::as_str).unwrap_or(""))?;
                *pos += 2;
                JetExpr::Const(GaussRat::new(re, im))
            }
            "^" => {
                let base = parse_tokens(tokens, pos, n)?;
                let k: u32 =
                    tokens.get(*pos).and_then(|s| s.parse().ok()).ok_or_else(|| Error::Parse("bad exponent".into()))?;
                *pos += 1;
                JetExpr::Pow(Box::new(base), k)
            }
            "+" | "*" => {
                let mut items = Vec::new();
                while tokens.get(*pos).map(String::as_str) != Some(")") {
                    if *pos >= tokens.len() {
                        return Err(Error::Parse("unbalanced parentheses".into()));
                    }
                    items.push(parse_tokens(tokens, pos, n)?);
                }
                if op == "+" {
                    JetExpr::Sum(items)
                } else {
                    JetExpr::Product(items)
                }
            }
            other => return Err(Error::Parse(format!("unknown operator {other:?}"))),
        };
        if tokens.get(*pos).map(String::as_str) != Some(")") {
            return Err(Error::Parse("expected ')'".into()));
        }
        *pos += 1;
        return Ok(out);
    }
    if tok == "t" {
        return Ok(JetExpr::time());
    }
    if let Some(rest) = tok.strip_prefix('q') {
        if let Ok(i) = rest.parse::<usize>() {
            return Ok(JetExpr::coord(i));
        }
    }
    if let Some((head, idx)) = tok.split_once(':') {
        let sigma = MultiIndex::parse(idx, n)?;
        let func = match head {
            "p" => Some(Func::P),
            "pbar" => Some(Func::PBar),
            "S" => Some(Func::S),
            "R" => Some(Func::R),
            _ => None,
        };
        return Ok(match func {
            Some(r) => JetExpr::mom(r, sigma),
            None => JetExpr::ext(head, sigma),
        });
    }
    Ok(JetExpr::Const(GaussRat::from_rational(parse_rational(tok)?)))
}

pub fn total_diff(e: &JetExpr, i: usize) -> JetExpr {
    e.to_poly().total_diff(i).to_expr()
}

pub fn prolong(e: &JetExpr, sigma: &MultiIndex) -> JetExpr {
    e.to_poly().prolong(sigma).to_expr()
}

/// Outcome of a Hamiltonian-condition check.
#[derive(Clone, Debug)]
pub struct Hc1Report {
    pub passed: bool,
    /// Highest momentum order `|νk|` examined.
    pub swept_order: u32,
    /// First violation: function, `ν`, `k` and the nonzero residual.
    pub violation: Option<(Func, MultiIndex, usize, JetExpr)>,
}

/// Verify `D_k ∂H/∂p^r_{νk} = 0` for every function `r` in `H`, every nonempty `ν` and every
/// coordinate `k` with `|νk| ≤ max_order`.
pub fn check_hc1(h: &JetExpr, n: usize, max_order: u32) -> Hc1Report {
    let poly = h.to_poly();
    let mut funcs: Vec<Func> = poly
        .atoms()
        .into_iter()
        .filter_map(|a| match a {
            Atom::Mom(r, _) => Some(r),
            _ => None,
        })
        .collect();
    funcs.dedup();
    for r in funcs {
        for order in 1..max_order {
            for nu in MultiIndex::of_order(n, order) {
                for k in 0..n {
                    let residual = poly.partial(&Atom::Mom(r, nu.extend(k))).total_diff(k);
                    if !residual.is_zero() {
                        return Hc1Report {
                            passed: false,
                            swept_order: max_order,
                            violation: Some((r, nu, k, residual.to_expr())),
                        };
                    }
                }
            }
        }
    }
    Hc1Report { passed: true, swept_order: max_order, violation: None }
}

#[derive(Clone, Debug)]
pub struct Hc2Report {
    pub passed: bool,
    /// `∂H^r/∂p^r_i` per coordinate, taken from the first Hamiltonian.
    pub velocity: Vec<JetExpr>,
    /// First coordinate at which the Hamiltonians disagree.
    pub mismatch: Option<usize>,
}

/// Verify that `∂H^r/∂p^r_i` is the same for every pair `(r, H^r)`.
pub fn check_hc2(hs: &[(Func, JetExpr)], n: usize) -> Hc2Report {
    let velocity: Vec<Vec<Poly>> = hs
        .iter()
        .map(|(r, h)| {
            let p = h.to_poly();
            (0..n).map(|i| p.partial(&Atom::Mom(*r, MultiIndex::unit(n, i)))).collect()
        })
        .collect();
    let mismatch = (0..n).find(|&i| velocity.iter().any(|v| v[i] != velocity[0][i]));
    Hc2Report {
        passed: hs.len() >= 2 && mismatch.is_none(),
        velocity: velocity.first().map(|v| v.iter().map(Poly::to_expr).collect()).unwrap_or_default(),
        mismatch,
    }
}

/// Complex formulation: `∂H/∂p_j` and the conjugate of `∂H̄/∂p̄_j` agree.
pub fn check_hc2_complex(h: &JetExpr, n: usize) -> Hc2Report {
    let p = h.to_poly();
    let bar = p.conj();
    let mut velocity = Vec::new();
    let mut mismatch = None;
    for i in 0..n {
        let e = MultiIndex::unit(n, i);
        let a = p.partial(&Atom::Mom(Func::P, e.clone()));
        let b = bar.partial(&Atom::Mom(Func::PBar, e)).conj();
        if a != b && mismatch.is_none() {
            mismatch = Some(i);
        }
        velocity.push(a.to_expr());
    }
    Hc2Report { passed: mismatch.is_none(), velocity, mismatch }
}

/// Ready-made Hamiltonians with exact rational `ħ` and masses.
pub mod hamiltonians {
    use super::*;

    fn rat(c: &GaussRat) -> JetExpr {
        JetExpr::Const(c.clone())
    }

    /// `H = Σ_j p_j²/2m_j + U + Σ_j (ħ/2im_j) p_jj`.
    pub fn schrodinger(hbar: &GaussRat, masses: &[GaussRat]) -> JetExpr {
        let n = masses.len();
        let mut items = vec![JetExpr::ext("U", MultiIndex::empty(n))];
        for (j, m) in masses.iter().enumerate() {
            let e = MultiIndex::unit(n, j);
            let inv2m = (GaussRat::int(2) * m.clone()).inv().expect("nonzero mass");
            let q = hbar.clone() * (GaussRat::int(2) * GaussRat::i() * m.clone()).inv().expect("nonzero mass");
            items.push(rat(&inv2m) * JetExpr::mom(Func::P, e.clone()).pow(2));
            items.push(rat(&q) * JetExpr::mom(Func::P, e.extend(j)));
        }
        JetExpr::Sum(items)
    }

    /// The real pair `(H^S, H^R)` acting on the action `S` and log-amplitude `R`.
    pub fn action_pair(hbar: &GaussRat, masses: &[GaussRat]) -> (JetExpr, JetExpr) {
        let n = masses.len();
        let mut hs = vec![JetExpr::ext("U", MultiIndex::empty(n))];
        let mut hr = Vec::new();
        for (j, m) in masses.iter().enumerate() {
            let e = MultiIndex::unit(n, j);
            let ee = e.extend(j);
            let inv2m = (GaussRat::int(2) * m.clone()).inv().expect("nonzero mass");
            let invm = m.inv().expect("nonzero mass");
            let quantum = -(hbar.clone() * hbar.clone() * inv2m.clone());
            hs.push(rat(&inv2m) * JetExpr::mom(Func::S, e.clone()).pow(2));
            hs.push(rat(&quantum) * (JetExpr::mom(Func::R, e.clone()).pow(2) + JetExpr::mom(Func::R, ee.clone())));
            hr.push(rat(&invm) * JetExpr::mom(Func::S, e.clone()) * JetExpr::mom(Func::R, e));
            hr.push(rat(&inv2m) * JetExpr::mom(Func::S, ee));
        }
        (JetExpr::Sum(hs), JetExpr::Sum(hr))
    }
}

/// Random expression trees for property tests.
#[doc(hidden)]
pub fn random_tree(rng: &mut impl rand::Rng, n: usize, depth: u32) -> JetExpr {
    let leaf = depth == 0 || rng.random_bool(0.3);
    if leaf {
        return match rng.random_range(0..5) {
            0 => JetExpr::Const(GaussRat::new(
                BigRational::new(rng.random_range(-5i64..6).into(), rng.random_range(1i64..4).into()),
                BigRational::from_integer(rng.random_range(-2i64..3).into()),
            )),
            1 => JetExpr::coord(rng.random_range(0..n)),
            2 => JetExpr::ext("U", MultiIndex::unit(n, rng.random_range(0..n))),
            _ => {
                let order = rng.random_range(0..3);
                let mut counts = vec![0; n];
                for _ in 0..order {
                    counts[rng.random_range(0..n)] += 1;
                }
                let func = if rng.random_bool(0.5) { Func::P } else { Func::PBar };
                JetExpr::mom(func, MultiIndex::new(counts))
            }
        };
    }
    match rng.random_range(0..3) {
        0 => JetExpr::Sum((0..rng.random_range(2..4)).map(|_| random_tree(rng, n, depth - 1)).collect()),
        1 => JetExpr::Product((0..2).map(|_| random_tree(rng, n, depth - 1)).collect()),
        _ => random_tree(rng, n, depth - 1).pow(rng.random_range(1..3)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn mi(c: &[u32]) -> MultiIndex {
        MultiIndex::new(c.to_vec())
    }

    fn p(c: &[u32]) -> JetExpr {
        JetExpr::mom(Func::P, mi(c))
    }

    #[test]
    fn total_diff_examples() {
        assert!(total_diff(&p(&[1]), 0).equivalent(&p(&[2])));
        let sq = p(&[1]).pow(2);
        assert!(total_diff(&sq, 0).equivalent(&(JetExpr::int(2) * p(&[1]) * p(&[2]))));
        let u = JetExpr::ext("U", mi(&[0]));
        assert!(total_diff(&u, 0).equivalent(&JetExpr::ext("U", mi(&[1]))));
        assert!(total_diff(&JetExpr::coord(0), 0).equivalent(&JetExpr::int(1)));
        assert!(total_diff(&JetExpr::time(), 0).equivalent(&JetExpr::int(0)));
    }

    #[test]
    fn prolong_examples() {
        let m = GaussRat::ratio(3, 2);
        let half_inv_m = (GaussRat::int(2) * m.clone()).inv().unwrap();
        let kinetic = JetExpr::Const(half_inv_m) * p(&[1]).pow(2);
        let expected = JetExpr::Const(m.inv().unwrap()) * p(&[1]) * p(&[2]);
        assert!(prolong(&kinetic, &mi(&[1])).equivalent(&expected));

        let hbar = GaussRat::ratio(1, 3);
        let h = hamiltonians::schrodinger(&hbar, std::slice::from_ref(&m));
        let inv_m = JetExpr::Const(m.inv().unwrap());
        let q = JetExpr::Const(hbar * (GaussRat::int(2) * GaussRat::i() * m).inv().unwrap());
        let expected = inv_m * (p(&[1]) * p(&[3]) + p(&[2]).pow(2)) + JetExpr::ext("U", mi(&[2])) + q * p(&[4]);
        assert!(prolong(&h, &mi(&[2])).equivalent(&expected));
        assert!(prolong(&h, &mi(&[0])).equivalent(&h));
    }

    #[test]
    fn total_derivatives_commute_on_random_trees() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for _ in 0..200 {
            let e = random_tree(&mut rng, 2, 3).to_poly();
            assert_eq!(e.total_diff(0).total_diff(1), e.total_diff(1).total_diff(0));
        }
    }

    #[test]
    fn total_diff_is_linear() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for _ in 0..50 {
            let a = random_tree(&mut rng, 2, 3);
            let b = random_tree(&mut rng, 2, 3);
            let c = JetExpr::Const(GaussRat::new(
                BigRational::new(2.into(), 3.into()),
                BigRational::new((-1).into(), 5.into()),
            ));
            let lhs = total_diff(&(c.clone() * a.clone() + b.clone()), 1);
            let rhs = c * total_diff(&a, 1) + total_diff(&b, 1);
            assert!(lhs.equivalent(&rhs));
        }
    }

    #[test]
    fn hc1_schrodinger_passes() {
        for n in [1, 2] {
            let h = hamiltonians::schrodinger(&GaussRat::one(), &vec![GaussRat::one(); n]);
            let r = check_hc1(&h, n, 8);
            assert!(r.passed, "{:?}", r.violation);
            assert_eq!(r.swept_order, 8);
        }
    }

    #[test]
    fn hc1_counterexamples_fail() {
        let r = check_hc1(&p(&[2]).pow(2), 1, 4);
        assert!(!r.passed);
        let (_, nu, k, residual) = r.violation.unwrap();
        assert_eq!((nu, k), (mi(&[1]), 0));
        assert!(residual.equivalent(&(JetExpr::int(2) * p(&[3]))));

        let h = p(&[1]).pow(2) + JetExpr::coord(0) * p(&[2]);
        let r = check_hc1(&h, 1, 4);
        assert!(!r.passed);
        assert!(r.violation.unwrap().3.equivalent(&JetExpr::int(1)));
    }

    #[test]
    fn hc2_action_pair() {
        let m = GaussRat::ratio(5, 2);
        for n in [1, 2] {
            let masses = vec![m.clone(); n];
            let (hs, hr) = hamiltonians::action_pair(&GaussRat::ratio(2, 3), &masses);
            let r = check_hc2(&[(Func::S, hs), (Func::R, hr)], n);
            assert!(r.passed);
            for i in 0..n {
                let expected = JetExpr::Const(m.inv().unwrap()) * JetExpr::mom(Func::S, MultiIndex::unit(n, i));
                assert!(r.velocity[i].equivalent(&expected));
            }
        }
        let half = JetExpr::Const(GaussRat::ratio(1, 2));
        let r = check_hc2(&[(Func::P, half * p(&[1]).pow(2)), (Func::P, p(&[1]).pow(3))], 1);
        assert!(!r.passed);
        let h = hamiltonians::schrodinger(&GaussRat::one(), &[GaussRat::one()]);
        assert!(check_hc2_complex(&h, 1).passed);
    }

    #[test]
    fn prefix_round_trip() {
        let h = hamiltonians::schrodinger(&GaussRat::ratio(1, 2), &[GaussRat::one(), GaussRat::int(2)]);
        let text = h.canonical().to_prefix();
        let back = JetExpr::parse_prefix(&text, 2).unwrap();
        assert!(back.equivalent(&h));
        assert_eq!(back.canonical().to_prefix(), text);
        assert!(JetExpr::parse_prefix("(+ p:x", 1).is_err());
        assert!(JetExpr::parse_prefix("(% 1 2)", 1).is_err());
    }

    #[test]
    fn conjugation_swaps_functions() {
        let e = JetExpr::Const(GaussRat::i()) * p(&[2]);
        let c = e.to_poly().conj().to_expr();
        let expected = JetExpr::Const(-GaussRat::i()) * JetExpr::mom(Func::PBar, mi(&[2]));
        assert!(c.equivalent(&expected));
    }
}
