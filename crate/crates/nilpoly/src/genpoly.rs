//! Floor-polynomial expressions: exact arithmetic with quadratic surds, a
//! small expression language (`x1^2`, `floor(sqrt(2)*x1 + 0.5)`, products
//! and sums of these), and extraction of polynomial set-maps from the
//! values of such an expression along IP sums n_σ = Σ_{i∈σ} n_i.
//!
//! The extraction pipeline: refine a block chain until every floor's
//! argument stays within 1/12 of the integers on all subset sums, then
//! tabulate q(σ) = p(n_σ) − shift, certify that q is polynomial (iterated
//! differences vanish) and that the group generated by q is closed under
//! symmetric differences, with explicit integer witnesses throughout.

use crate::ipcore::{precedes, FinSet, IPRing};
use crate::polymap::submasks;
use crate::zlin::ZLattice;
use crate::{Error, Result};
use num::bigint::BigInt;
use num::{BigRational, One, Signed, Zero};
use std::cmp::Ordering;
use std::collections::BTreeMap;

/// Bits of interval precision used when distinct surds meet, from
/// `NILPOLY_PRECISION` (default 128, clamped to 16..=65536).
pub fn precision_bits() -> u32 {
    std::env::var("NILPOLY_PRECISION")
        .ok()
        .and_then(|s| s.parse::<u32>().ok())
        .map_or(128, |p| p.clamp(16, 65536))
}

fn rat_i(n: i64) -> BigRational {
    BigRational::from_integer(BigInt::from(n))
}

fn rat(n: i64, d: i64) -> BigRational {
    BigRational::new(BigInt::from(n), BigInt::from(d))
}

/// Strips square factors: d = s²·d' with d' squarefree.
fn squarefree(d: u64) -> (u64, u64) {
    let mut s = 1u64;
    let mut rest = d;
    let mut f = 2u64;
    while f * f <= rest {
        while rest % (f * f) == 0 {
            rest /= f * f;
            s *= f;
        }
        f += 1;
    }
    (s, rest)
}

/// An exact real: a rational, a + b·√d with d ≥ 2 squarefree (closed under
/// ring operations at equal d), or a rational interval when exactness is
/// lost by mixing distinct surds.
#[derive(Debug, Clone, PartialEq)]
pub enum Real {
    Rat(BigRational),
    Surd {
        a: BigRational,
        b: BigRational,
        d: u64,
    },
    Interval {
        lo: BigRational,
        hi: BigRational,
    },
}

impl Real {
    pub fn from_rat(r: BigRational) -> Real {
        Real::Rat(r)
    }

    pub fn from_bigint(z: &BigInt) -> Real {
        Real::Rat(BigRational::from_integer(z.clone()))
    }

    pub fn integer(n: i64) -> Real {
        Real::Rat(rat_i(n))
    }

    /// a + b·√d, normalized: square factors of d are pulled into b, and
    /// d ∈ {0, 1} or b = 0 collapse to a rational.
    pub fn surd(a: BigRational, b: BigRational, d: u64) -> Real {
        if b.is_zero() || d == 0 {
            return Real::Rat(a);
        }
        let (s, rest) = squarefree(d);
        let b = b * BigRational::from_integer(BigInt::from(s));
        if rest == 1 {
            Real::Rat(a + b)
        } else {
            Real::Surd { a, b, d: rest }
        }
    }

    pub fn sqrt_of(n: u64) -> Real {
        Real::surd(BigRational::zero(), BigRational::one(), n)
    }

    pub fn is_zero(&self) -> bool {
        match self {
            Real::Rat(r) => r.is_zero(),
            // b ≠ 0 and d squarefree ≥ 2 make the value irrational
            Real::Surd { .. } => false,
            Real::Interval { lo, hi } => lo.is_zero() && hi.is_zero(),
        }
    }

    /// Rigorous enclosure at `bits` of precision.
    pub fn enclosure(&self, bits: u32) -> (BigRational, BigRational) {
        match self {
            Real::Rat(r) => (r.clone(), r.clone()),
            Real::Surd { a, b, d } => {
                let scale = BigInt::one() << (2 * bits as usize);
                let s = (BigInt::from(*d) * scale).sqrt();
                let den = BigInt::one() << (bits as usize);
                let lo_root = BigRational::new(s.clone(), den.clone());
                let hi_root = BigRational::new(s + BigInt::one(), den);
                let (x, y) = (a + b * &lo_root, a + b * &hi_root);
                if b.is_negative() {
                    (y, x)
                } else {
                    (x, y)
                }
            }
            Real::Interval { lo, hi } => (lo.clone(), hi.clone()),
        }
    }

    pub fn add(&self, other: &Real) -> Real {
        match (self, other) {
            (Real::Rat(x), Real::Rat(y)) => Real::Rat(x + y),
            (Real::Rat(x), Real::Surd { a, b, d }) | (Real::Surd { a, b, d }, Real::Rat(x)) => {
                Real::surd(a + x, b.clone(), *d)
            }
            (
                Real::Surd { a, b, d },
                Real::Surd {
                    a: a2,
                    b: b2,
                    d: d2,
                },
            ) if d == d2 => Real::surd(a + a2, b + b2, *d),
            _ => {
                let p = precision_bits();
                let (lo1, hi1) = self.enclosure(p);
                let (lo2, hi2) = other.enclosure(p);
                Real::Interval {
                    lo: lo1 + lo2,
                    hi: hi1 + hi2,
                }
            }
        }
    }

    pub fn neg(&self) -> Real {
        match self {
            Real::Rat(r) => Real::Rat(-r),
            Real::Surd { a, b, d } => Real::Surd {
                a: -a,
                b: -b,
                d: *d,
            },
            Real::Interval { lo, hi } => Real::Interval {
                lo: -hi,
                hi: -lo,
            },
        }
    }

    pub fn sub(&self, other: &Real) -> Real {
        self.add(&other.neg())
    }

    pub fn mul(&self, other: &Real) -> Real {
        match (self, other) {
            (Real::Rat(x), Real::Rat(y)) => Real::Rat(x * y),
            (Real::Rat(x), Real::Surd { a, b, d }) | (Real::Surd { a, b, d }, Real::Rat(x)) => {
                Real::surd(a * x, b * x, *d)
            }
            (
                Real::Surd { a, b, d },
                Real::Surd {
                    a: a2,
                    b: b2,
                    d: d2,
                },
            ) if d == d2 => {
                let dd = BigRational::from_integer(BigInt::from(*d));
                Real::surd(a * a2 + b * b2 * dd, a * b2 + b * a2, *d)
            }
            _ => {
                let p = precision_bits();
                let (lo1, hi1) = self.enclosure(p);
                let (lo2, hi2) = other.enclosure(p);
                let cands = [&lo1 * &lo2, &lo1 * &hi2, &hi1 * &lo2, &hi1 * &hi2];
                let lo = cands.iter().min().unwrap().clone();
                let hi = cands.iter().max().unwrap().clone();
                Real::Interval { lo, hi }
            }
        }
    }

    pub fn mul_int(&self, z: &BigInt) -> Real {
        self.mul(&Real::from_bigint(z))
    }

    /// Sign, exact for rationals and surds; `None` when an interval
    /// straddles zero.
    pub fn sign(&self) -> Option<Ordering> {
        match self {
            Real::Rat(r) => Some(r.cmp(&BigRational::zero())),
            Real::Surd { a, b, d } => {
                let sa = a.cmp(&BigRational::zero());
                let sb = b.cmp(&BigRational::zero());
                let dd = BigRational::from_integer(BigInt::from(*d));
                Some(match (sa, sb) {
                    (Ordering::Equal, s) | (s, Ordering::Equal) => s,
                    (Ordering::Greater, Ordering::Greater) => Ordering::Greater,
                    (Ordering::Less, Ordering::Less) => Ordering::Less,
                    // opposite signs: compare a² against b²·d on the
                    // dominant side
                    (Ordering::Greater, Ordering::Less) => (a * a).cmp(&(b * b * dd)),
                    (Ordering::Less, Ordering::Greater) => (b * b * dd).cmp(&(a * a)),
                })
            }
            Real::Interval { lo, hi } => {
                if lo > &BigRational::zero() {
                    Some(Ordering::Greater)
                } else if hi < &BigRational::zero() {
                    Some(Ordering::Less)
                } else if lo.is_zero() && hi.is_zero() {
                    Some(Ordering::Equal)
                } else {
                    None
                }
            }
        }
    }

    /// Exact comparison; `Err(Precision)` when intervals overlap.
    pub fn cmp_exact(&self, other: &Real) -> Result<Ordering> {
        self.sub(other).sign().ok_or_else(|| {
            Error::Precision("interval comparison is ambiguous; raise NILPOLY_PRECISION".into())
        })
    }

    /// Exact floor. Surds refine their enclosure until the floor is
    /// unambiguous; intervals must already pin it down.
    pub fn floor(&self) -> Result<BigInt> {
        match self {
            Real::Rat(r) => Ok(r.floor().to_integer()),
            Real::Surd { .. } => {
                let cap = precision_bits().saturating_mul(4).max(4096);
                let mut bits = 64;
                loop {
                    let (lo, hi) = self.enclosure(bits);
                    let (fl, fh) = (lo.floor().to_integer(), hi.floor().to_integer());
                    if fl == fh {
                        return Ok(fl);
                    }
                    if bits >= cap {
                        return Err(Error::Precision(format!(
                            "floor of a surd did not stabilize within {cap} bits"
                        )));
                    }
                    bits *= 2;
                }
            }
            Real::Interval { lo, hi } => {
                let (fl, fh) = (lo.floor().to_integer(), hi.floor().to_integer());
                if fl == fh {
                    Ok(fl)
                } else {
                    Err(Error::Precision(
                        "floor spans an integer; raise NILPOLY_PRECISION".into(),
                    ))
                }
            }
        }
    }
}

/// Nearest integer, halves rounding up.
pub fn nearest_int(x: &Real) -> Result<BigInt> {
    x.add(&Real::Rat(rat(1, 2))).floor()
}

/// Distance to the nearest integer, as an exact nonnegative real.
pub fn dint(x: &Real) -> Result<Real> {
    let n = nearest_int(x)?;
    let diff = x.sub(&Real::from_bigint(&n));
    match diff.sign() {
        Some(Ordering::Less) => Ok(diff.neg()),
        Some(_) => Ok(diff),
        None => Err(Error::Precision(
            "distance to the integers is ambiguous at this precision".into(),
        )),
    }
}

/// An integer-valued expression built from variables, integer constants,
/// sums, products, and floors of real-linear combinations.
#[derive(Debug, Clone, PartialEq)]
pub enum GenPoly {
    Const(BigInt),
    Var(usize),
    Sum(Box<GenPoly>, Box<GenPoly>),
    Prod(Box<GenPoly>, Box<GenPoly>),
    /// ⌊Σ cᵢ·pᵢ + shift⌋ with exact real coefficients.
    Floor {
        terms: Vec<(Real, GenPoly)>,
        shift: Real,
    },
}

impl GenPoly {
    /// Number of variables: one past the largest index used.
    pub fn arity(&self) -> usize {
        match self {
            GenPoly::Const(_) => 0,
            GenPoly::Var(i) => i + 1,
            GenPoly::Sum(a, b) | GenPoly::Prod(a, b) => a.arity().max(b.arity()),
            GenPoly::Floor { terms, .. } => {
                terms.iter().map(|(_, p)| p.arity()).max().unwrap_or(0)
            }
        }
    }

    pub fn degree(&self) -> u32 {
        match self {
            GenPoly::Const(_) => 0,
            GenPoly::Var(_) => 1,
            GenPoly::Sum(a, b) => a.degree().max(b.degree()),
            GenPoly::Prod(a, b) => a.degree() + b.degree(),
            GenPoly::Floor { terms, .. } => {
                terms.iter().map(|(_, p)| p.degree()).max().unwrap_or(0)
            }
        }
    }

    /// Structural admissibility: variables and 0 are admissible, sums need
    /// both parts, products one part, and floors need every inner
    /// polynomial admissible plus a shift strictly inside (0, 1).
    pub fn admissible(&self) -> bool {
        match self {
            GenPoly::Const(z) => z.is_zero(),
            GenPoly::Var(_) => true,
            GenPoly::Sum(a, b) => a.admissible() && b.admissible(),
            GenPoly::Prod(a, b) => a.admissible() || b.admissible(),
            GenPoly::Floor { terms, shift } => {
                terms.iter().all(|(_, p)| p.admissible())
                    && shift.sign() == Some(Ordering::Greater)
                    && shift.sub(&Real::integer(1)).sign() == Some(Ordering::Less)
            }
        }
    }

    pub fn eval(&self, point: &[BigInt]) -> Result<BigInt> {
        match self {
            GenPoly::Const(z) => Ok(z.clone()),
            GenPoly::Var(i) => point
                .get(*i)
                .cloned()
                .ok_or_else(|| Error::invalid(format!("point has no coordinate {}", i + 1))),
            GenPoly::Sum(a, b) => Ok(a.eval(point)? + b.eval(point)?),
            GenPoly::Prod(a, b) => Ok(a.eval(point)? * b.eval(point)?),
            GenPoly::Floor { terms, shift } => {
                let mut acc = shift.clone();
                for (c, p) in terms {
                    acc = acc.add(&c.mul_int(&p.eval(point)?));
                }
                acc.floor()
            }
        }
    }
}

// ---------------------------------------------------------------------------
// parsing

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Int(BigInt),
    Dec(BigRational),
    Var(usize),
    Floor,
    Sqrt,
    Plus,
    Minus,
    Star,
    Caret,
    LPar,
    RPar,
}

fn lex(src: &str) -> Result<Vec<Tok>> {
    let mut out = Vec::new();
    let bytes = src.as_bytes();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i] as char;
        match c {
            ' ' | '\t' | '\n' | '\r' => i += 1,
            '+' => {
                out.push(Tok::Plus);
                i += 1;
            }
            '-' => {
                out.push(Tok::Minus);
                i += 1;
            }
            '*' => {
                out.push(Tok::Star);
                i += 1;
            }
            '^' => {
                out.push(Tok::Caret);
                i += 1;
            }
            '(' => {
                out.push(Tok::LPar);
                i += 1;
            }
            ')' => {
                out.push(Tok::RPar);
                i += 1;
            }
            '0'..='9' => {
                let start = i;
                while i < bytes.len() && bytes[i].is_ascii_digit() {
                    i += 1;
                }
                if i < bytes.len() && bytes[i] == b'.' {
                    i += 1;
                    let frac_start = i;
                    while i < bytes.len() && bytes[i].is_ascii_digit() {
                        i += 1;
                    }
                    if i == frac_start {
                        return Err(Error::invalid("digits are required after a decimal point"));
                    }
                    let whole: BigInt = src[start..frac_start - 1].parse().unwrap();
                    let frac: BigInt = src[frac_start..i].parse().unwrap();
                    let scale = (0..i - frac_start).fold(BigInt::one(), |a, _| a * 10);
                    out.push(Tok::Dec(BigRational::new(
                        whole * &scale + frac,
                        scale,
                    )));
                } else {
                    out.push(Tok::Int(src[start..i].parse().unwrap()));
                }
            }
            'a'..='z' | 'A'..='Z' => {
                let start = i;
                while i < bytes.len() && (bytes[i].is_ascii_alphanumeric()) {
                    i += 1;
                }
                let word = &src[start..i];
                match word {
                    "floor" => out.push(Tok::Floor),
                    "sqrt" => out.push(Tok::Sqrt),
                    _ if word.starts_with('x') && word[1..].chars().all(|c| c.is_ascii_digit()) =>
                    {
                        let idx: usize = word[1..]
                            .parse()
                            .map_err(|_| Error::invalid(format!("bad variable `{word}`")))?;
                        if idx == 0 {
                            return Err(Error::invalid("variables are numbered from x1"));
                        }
                        out.push(Tok::Var(idx - 1));
                    }
                    _ => return Err(Error::invalid(format!("unknown name `{word}`"))),
                }
            }
            _ => return Err(Error::invalid(format!("unexpected character `{c}`"))),
        }
    }
    Ok(out)
}

/// Linear normal form used inside a floor: Σ cᵢ·pᵢ + shift.
#[derive(Debug, Clone)]
struct Lin {
    terms: Vec<(Real, GenPoly)>,
    shift: Real,
}

impl Lin {
    fn constant(r: Real) -> Lin {
        Lin {
            terms: Vec::new(),
            shift: r,
        }
    }

    fn poly(p: GenPoly) -> Lin {
        Lin {
            terms: vec![(Real::integer(1), p)],
            shift: Real::integer(0),
        }
    }

    fn push(&mut self, c: Real, p: GenPoly) {
        if c.is_zero() {
            return;
        }
        for (c0, p0) in &mut self.terms {
            if *p0 == p {
                *c0 = c0.add(&c);
                return;
            }
        }
        self.terms.push((c, p));
    }

    fn add(mut self, other: Lin) -> Lin {
        for (c, p) in other.terms {
            self.push(c, p);
        }
        self.shift = self.shift.add(&other.shift);
        self.normalize()
    }

    fn neg(self) -> Lin {
        Lin {
            terms: self
                .terms
                .into_iter()
                .map(|(c, p)| (c.neg(), p))
                .collect(),
            shift: self.shift.neg(),
        }
    }

    fn mul(self, other: &Lin) -> Lin {
        let mut out = Lin::constant(self.shift.mul(&other.shift));
        for (c, p) in &self.terms {
            out.push(c.mul(&other.shift), p.clone());
        }
        for (c, p) in &other.terms {
            out.push(c.mul(&self.shift), p.clone());
        }
        for (c, p) in &self.terms {
            for (c2, p2) in &other.terms {
                out.push(
                    c.mul(c2),
                    GenPoly::Prod(Box::new(p.clone()), Box::new(p2.clone())),
                );
            }
        }
        out.normalize()
    }

    fn normalize(mut self) -> Lin {
        self.terms.retain(|(c, _)| !c.is_zero());
        self
    }
}

const POW_CAP: u32 = 12;

struct Parser {
    toks: Vec<Tok>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos)
    }

    fn next(&mut self) -> Option<Tok> {
        let t = self.toks.get(self.pos).cloned();
        if t.is_some() {
            self.pos += 1;
        }
        t
    }

    fn expect(&mut self, t: Tok) -> Result<()> {
        match self.next() {
            Some(ref got) if *got == t => Ok(()),
            got => Err(Error::invalid(format!("expected {t:?}, found {got:?}"))),
        }
    }

    fn int_exponent(&mut self) -> Result<u32> {
        match self.next() {
            Some(Tok::Int(n)) => {
                let e = u32::try_from(n)
                    .map_err(|_| Error::invalid("exponent does not fit"))?;
                if e > POW_CAP {
                    return Err(Error::invalid(format!("exponents are capped at {POW_CAP}")));
                }
                Ok(e)
            }
            got => Err(Error::invalid(format!(
                "expected an integer exponent, found {got:?}"
            ))),
        }
    }

    // outside floors: integer-valued expressions only
    fn expr(&mut self) -> Result<GenPoly> {
        let mut acc = self.term()?;
        loop {
            match self.peek() {
                Some(Tok::Plus) => {
                    self.next();
                    acc = GenPoly::Sum(Box::new(acc), Box::new(self.term()?));
                }
                Some(Tok::Minus) => {
                    self.next();
                    let rhs = self.term()?;
                    let neg = GenPoly::Prod(
                        Box::new(GenPoly::Const(BigInt::from(-1))),
                        Box::new(rhs),
                    );
                    acc = GenPoly::Sum(Box::new(acc), Box::new(neg));
                }
                _ => return Ok(acc),
            }
        }
    }

    fn term(&mut self) -> Result<GenPoly> {
        let mut acc = self.factor()?;
        while self.peek() == Some(&Tok::Star) {
            self.next();
            acc = GenPoly::Prod(Box::new(acc), Box::new(self.factor()?));
        }
        Ok(acc)
    }

    fn factor(&mut self) -> Result<GenPoly> {
        if self.peek() == Some(&Tok::Minus) {
            self.next();
            let f = self.factor()?;
            return Ok(GenPoly::Prod(
                Box::new(GenPoly::Const(BigInt::from(-1))),
                Box::new(f),
            ));
        }
        let base = self.primary()?;
        if self.peek() == Some(&Tok::Caret) {
            self.next();
            let e = self.int_exponent()?;
            if e == 0 {
                return Ok(GenPoly::Const(BigInt::one()));
            }
            let mut acc = base.clone();
            for _ in 1..e {
                acc = GenPoly::Prod(Box::new(acc), Box::new(base.clone()));
            }
            return Ok(acc);
        }
        Ok(base)
    }

    fn primary(&mut self) -> Result<GenPoly> {
        match self.next() {
            Some(Tok::Int(n)) => Ok(GenPoly::Const(n)),
            Some(Tok::Var(i)) => Ok(GenPoly::Var(i)),
            Some(Tok::LPar) => {
                let e = self.expr()?;
                self.expect(Tok::RPar)?;
                Ok(e)
            }
            Some(Tok::Floor) => {
                self.expect(Tok::LPar)?;
                let lin = self.fexpr()?;
                self.expect(Tok::RPar)?;
                Ok(GenPoly::Floor {
                    terms: lin.terms,
                    shift: lin.shift,
                })
            }
            Some(Tok::Sqrt) => Err(Error::invalid("sqrt may appear only inside floor(...)")),
            Some(Tok::Dec(_)) => Err(Error::invalid(
                "decimal constants may appear only inside floor(...)",
            )),
            got => Err(Error::invalid(format!("unexpected token {got:?}"))),
        }
    }

    // inside a floor: real-linear combinations of integer-valued parts
    fn fexpr(&mut self) -> Result<Lin> {
        let mut acc = self.fterm()?;
        loop {
            match self.peek() {
                Some(Tok::Plus) => {
                    self.next();
                    acc = acc.add(self.fterm()?);
                }
                Some(Tok::Minus) => {
                    self.next();
                    acc = acc.add(self.fterm()?.neg());
                }
                _ => return Ok(acc),
            }
        }
    }

    fn fterm(&mut self) -> Result<Lin> {
        let mut acc = self.ffactor()?;
        while self.peek() == Some(&Tok::Star) {
            self.next();
            let rhs = self.ffactor()?;
            acc = acc.mul(&rhs);
        }
        Ok(acc)
    }

    fn ffactor(&mut self) -> Result<Lin> {
        if self.peek() == Some(&Tok::Minus) {
            self.next();
            return Ok(self.ffactor()?.neg());
        }
        let base = self.fprimary()?;
        if self.peek() == Some(&Tok::Caret) {
            self.next();
            let e = self.int_exponent()?;
            let mut acc = Lin::constant(Real::integer(1));
            for _ in 0..e {
                acc = acc.mul(&base);
            }
            return Ok(acc);
        }
        Ok(base)
    }

    fn fprimary(&mut self) -> Result<Lin> {
        match self.next() {
            Some(Tok::Int(n)) => Ok(Lin::constant(Real::from_bigint(&n))),
            Some(Tok::Dec(r)) => Ok(Lin::constant(Real::Rat(r))),
            Some(Tok::Var(i)) => Ok(Lin::poly(GenPoly::Var(i))),
            Some(Tok::Sqrt) => {
                self.expect(Tok::LPar)?;
                let n = match self.next() {
                    Some(Tok::Int(n)) => u64::try_from(n)
                        .map_err(|_| Error::invalid("sqrt expects a nonnegative integer"))?,
                    got => {
                        return Err(Error::invalid(format!(
                            "sqrt expects an integer, found {got:?}"
                        )))
                    }
                };
                self.expect(Tok::RPar)?;
                Ok(Lin::constant(Real::sqrt_of(n)))
            }
            Some(Tok::Floor) => {
                self.expect(Tok::LPar)?;
                let lin = self.fexpr()?;
                self.expect(Tok::RPar)?;
                Ok(Lin::poly(GenPoly::Floor {
                    terms: lin.terms,
                    shift: lin.shift,
                }))
            }
            Some(Tok::LPar) => {
                let e = self.fexpr()?;
                self.expect(Tok::RPar)?;
                Ok(e)
            }
            got => Err(Error::invalid(format!("unexpected token {got:?}"))),
        }
    }
}

/// Parses the expression language: integers, `xN` variables (1-based),
/// `+ - * ^`, parentheses, and `floor(...)` whose argument may also use
/// `sqrt(n)` and decimal constants.
pub fn parse_genpoly(src: &str) -> Result<GenPoly> {
    let toks = lex(src)?;
    let mut p = Parser { toks, pos: 0 };
    let e = p.expr()?;
    if p.pos != p.toks.len() {
        return Err(Error::invalid("trailing input after the expression"));
    }
    Ok(e)
}

// ---------------------------------------------------------------------------
// IP systems and near-identity refinement

/// Finitely many integer vectors n_i; subsets index the sums
/// n_σ = Σ_{i∈σ} n_i.
#[derive(Debug, Clone)]
pub struct IPSystem {
    gens: Vec<Vec<i64>>,
}

impl IPSystem {
    pub fn new(gens: Vec<Vec<i64>>) -> Result<IPSystem> {
        if gens.is_empty() {
            return Err(Error::invalid("an IP system needs at least one vector"));
        }
        if gens.len() > 63 {
            return Err(Error::invalid("IP systems are capped at 63 vectors"));
        }
        let d = gens[0].len();
        if d == 0 || gens.iter().any(|g| g.len() != d) {
            return Err(Error::invalid(
                "IP system vectors must share one nonzero dimension",
            ));
        }
        Ok(IPSystem { gens })
    }

    pub fn len(&self) -> usize {
        self.gens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gens.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.gens[0].len()
    }

    pub fn gens(&self) -> &[Vec<i64>] {
        &self.gens
    }

    pub fn n_at(&self, mask: u64) -> Vec<BigInt> {
        let mut out = vec![BigInt::zero(); self.dim()];
        for (i, g) in self.gens.iter().enumerate() {
            if mask >> i & 1 == 1 {
                for (o, x) in out.iter_mut().zip(g) {
                    *o += *x;
                }
            }
        }
        out
    }
}

fn collect_floors<'p>(p: &'p GenPoly, out: &mut Vec<(&'p [(Real, GenPoly)], &'p Real)>) {
    match p {
        GenPoly::Const(_) | GenPoly::Var(_) => {}
        GenPoly::Sum(a, b) | GenPoly::Prod(a, b) => {
            collect_floors(a, out);
            collect_floors(b, out);
        }
        GenPoly::Floor { terms, shift } => {
            out.push((terms, shift));
            for (_, q) in terms {
                collect_floors(q, out);
            }
        }
    }
}

/// Chains this long or shorter are tested whole before any sub-chain
/// search (the ring has 2^len − 1 elements).
const FULL_CHAIN_CHECK_CAP: usize = 12;

/// All runs of consecutive blocks whose union mask passes `good`,
/// in lexicographic (start, end) order.
fn good_runs(
    blocks: &[FinSet],
    good: &mut dyn FnMut(u64) -> Result<bool>,
) -> Result<Vec<(usize, usize, u64)>> {
    let mut out = Vec::new();
    for i in 0..blocks.len() {
        let mut mask = 0u64;
        for j in i..blocks.len() {
            mask |= blocks[j].mask();
            if good(mask)? {
                out.push((i, j, mask));
            }
        }
    }
    out.sort_by_key(|&(i, j, _)| (i, j));
    Ok(out)
}

/// Finds a sub-chain of `chain` — `depth` disjoint runs of consecutive
/// blocks — on whose ring every value of `p_val` lies within `eps` of an
/// integer. `p_val` is evaluated at the union's ground mask. A chain short
/// enough to test whole is returned unchanged when it already qualifies.
/// Not-found is `Ok(None)`; an ambiguous distance rejects the candidate
/// rather than erroring.
pub fn near_identity_refine(
    p_val: &dyn Fn(u64) -> Result<Real>,
    chain: &IPRing,
    eps: &Real,
    depth: usize,
) -> Result<Option<IPRing>> {
    if depth == 0 {
        return Err(Error::invalid("refinement depth must be positive"));
    }
    let blocks = chain.chain().to_vec();
    let mut close = |mask: u64| -> Result<bool> {
        let v = p_val(mask)?;
        let d = match dint(&v) {
            Ok(d) => d,
            Err(Error::Precision(_)) => return Ok(false),
            Err(e) => return Err(e),
        };
        match d.cmp_exact(eps) {
            Ok(Ordering::Less) => Ok(true),
            Ok(_) => Ok(false),
            Err(Error::Precision(_)) => Ok(false),
            Err(e) => Err(e),
        }
    };
    if blocks.len() <= FULL_CHAIN_CHECK_CAP {
        let mut all = true;
        for sel in 1u64..(1 << blocks.len()) {
            let mut mask = 0u64;
            for (t, b) in blocks.iter().enumerate() {
                if sel >> t & 1 == 1 {
                    mask |= b.mask();
                }
            }
            if !close(mask)? {
                all = false;
                break;
            }
        }
        if all {
            return Ok(Some(chain.clone()));
        }
    }
    if blocks.len() < depth {
        return Ok(None);
    }
    let runs = good_runs(&blocks, &mut close)?;
    let mut chosen: Vec<usize> = Vec::new();
    let found = refine_dfs(&runs, depth, &mut chosen, &mut close)?;
    match found {
        None => Ok(None),
        Some(idxs) => {
            let sets = idxs.iter().map(|&r| FinSet::new(runs[r].2)).collect();
            Ok(Some(IPRing::new(sets)?))
        }
    }
}

/// Lexicographically-first selection of `depth` disjoint runs all of whose
/// union sums pass `close`; singleton sums were prefiltered.
fn refine_dfs(
    runs: &[(usize, usize, u64)],
    depth: usize,
    chosen: &mut Vec<usize>,
    close: &mut dyn FnMut(u64) -> Result<bool>,
) -> Result<Option<Vec<usize>>> {
    if chosen.len() == depth {
        return Ok(Some(chosen.clone()));
    }
    let from = chosen.last().map_or(0, |&r| r + 1);
    'next: for r in from..runs.len() {
        if let Some(&prev) = chosen.last() {
            if runs[r].0 <= runs[prev].1 {
                continue;
            }
        }
        // every union with the new run must stay close
        for sel in 1u64..(1 << chosen.len()) {
            let mut mask = runs[r].2;
            for (t, &c) in chosen.iter().enumerate() {
                if sel >> t & 1 == 1 {
                    mask |= runs[c].2;
                }
            }
            if !close(mask)? {
                continue 'next;
            }
        }
        chosen.push(r);
        if let Some(found) = refine_dfs(runs, depth, chosen, close)? {
            return Ok(Some(found));
        }
        chosen.pop();
    }
    Ok(None)
}

/// Per-floor sign discipline during extraction: when a floor has no
/// fractional shift, every subset sum must sit on one side of its nearest
/// integer so the floor differs from rounding by one uniform constant.
#[derive(Clone, Copy, PartialEq)]
enum Side {
    Free,
    Above,
    Below,
}

/// The candidate filter used by extraction: each floor argument must stay
/// within min(1/(depth+1), shift slack) of the integers on every subset
/// sum. The 1/(depth+1) bound makes nearest-integer rounding additive
/// across all checked unions; the final authority is the difference
/// cascade on the extracted table.
struct FloorSearch<'a> {
    floors: Vec<(&'a [(Real, GenPoly)], Real, bool)>,
    sys: &'a IPSystem,
    depth: usize,
}

impl<'a> FloorSearch<'a> {
    fn new(p: &'a GenPoly, sys: &'a IPSystem, depth: usize) -> Result<FloorSearch<'a>> {
        let mut raw = Vec::new();
        collect_floors(p, &mut raw);
        let base = Real::Rat(rat(1, depth as i64 + 1));
        let mut floors = Vec::new();
        for (terms, shift) in raw {
            let kf = shift.sub(&Real::from_bigint(&shift.floor()?));
            let free = kf.is_zero();
            let mut th = base.clone();
            if !free {
                if kf.cmp_exact(&th)? == Ordering::Less {
                    th = kf.clone();
                }
                let other = Real::integer(1).sub(&kf);
                if other.cmp_exact(&th)? == Ordering::Less {
                    th = other;
                }
            }
            floors.push((terms, th, free));
        }
        Ok(FloorSearch { floors, sys, depth })
    }

    /// Floor conditions at one subset sum; side registers update in place.
    fn admit_point(&self, point: &[BigInt], sides: &mut [Side]) -> Result<bool> {
        for (fi, (terms, th, free)) in self.floors.iter().enumerate() {
            let mut s = Real::integer(0);
            for (c, q) in *terms {
                s = s.add(&c.mul_int(&q.eval(point)?));
            }
            let dist = match dint(&s) {
                Ok(d) => d,
                Err(Error::Precision(_)) => return Ok(false),
                Err(e) => return Err(e),
            };
            match dist.cmp_exact(th) {
                Ok(Ordering::Less) => {}
                Ok(_) => return Ok(false),
                Err(_) => return Ok(false),
            }
            if *free {
                let n = nearest_int(&s)?;
                let side = match s.sub(&Real::from_bigint(&n)).sign() {
                    Some(Ordering::Greater) => Side::Above,
                    Some(Ordering::Less) => Side::Below,
                    Some(Ordering::Equal) => Side::Free,
                    None => return Ok(false),
                };
                match (sides[fi], side) {
                    (_, Side::Free) => {}
                    (Side::Free, s) => sides[fi] = s,
                    (a, b) if a == b => {}
                    _ => return Ok(false),
                }
            }
        }
        Ok(true)
    }

    fn search(
        &self,
        runs: &[(usize, usize, u64)],
        chosen: &mut Vec<usize>,
        ms: &mut Vec<Vec<BigInt>>,
        sides: &[Side],
        visit: &mut dyn FnMut(&[(usize, usize, u64)], &[Vec<BigInt>]) -> Result<bool>,
    ) -> Result<bool> {
        if chosen.len() == self.depth {
            let sel: Vec<(usize, usize, u64)> = chosen.iter().map(|&r| runs[r]).collect();
            return visit(&sel, ms);
        }
        let from = chosen.last().map_or(0, |&r| r + 1);
        'next: for r in from..runs.len() {
            if let Some(&prev) = chosen.last() {
                if runs[r].0 <= runs[prev].1 {
                    continue;
                }
            }
            let m = self.sys.n_at(runs[r].2);
            let mut new_sides = sides.to_vec();
            // all unions that include the new run, singleton included
            for sel in 0..(1u64 << chosen.len()) {
                let mut point = m.clone();
                for (t, chosen_m) in ms.iter().enumerate() {
                    if sel >> t & 1 == 1 {
                        for (coord, x) in point.iter_mut().zip(chosen_m) {
                            *coord += x;
                        }
                    }
                }
                if !self.admit_point(&point, &mut new_sides)? {
                    continue 'next;
                }
            }
            chosen.push(r);
            ms.push(m);
            if self.search(runs, chosen, ms, &new_sides, visit)? {
                return Ok(true);
            }
            chosen.pop();
            ms.pop();
        }
        Ok(false)
    }
}

fn run_extraction_search(
    p: &GenPoly,
    sys: &IPSystem,
    chain: &IPRing,
    depth: usize,
    visit: &mut dyn FnMut(&[(usize, usize, u64)], &[Vec<BigInt>]) -> Result<bool>,
) -> Result<bool> {
    if depth == 0 {
        return Err(Error::invalid("extraction depth must be positive"));
    }
    let blocks = chain.chain().to_vec();
    if blocks.len() < depth {
        return Err(Error::invalid("the chain is shorter than the depth"));
    }
    if let Some(top) = blocks.last().and_then(FinSet::max) {
        if top >= sys.len() {
            return Err(Error::invalid("the chain leaves the IP system's index range"));
        }
    }
    if p.arity() > sys.dim() {
        return Err(Error::invalid(
            "the expression uses more variables than the system provides",
        ));
    }
    let search = FloorSearch::new(p, sys, depth)?;
    let sides = vec![Side::Free; search.floors.len()];
    // prefilter: a run is usable only if its own sum passes alone
    let runs = good_runs(&blocks, &mut |mask| {
        let mut scratch = sides.clone();
        search.admit_point(&sys.n_at(mask), &mut scratch)
    })?;
    search.search(&runs, &mut Vec::new(), &mut Vec::new(), &sides, visit)
}

// ---------------------------------------------------------------------------
// integer tables, symmetric differences, and the closure certificate

/// An integer-valued map on the subsets of `domain` (a bitmask of index
/// positions), tabulated exactly.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SdTable {
    pub domain: u64,
    pub values: BTreeMap<u64, BigInt>,
}

impl SdTable {
    pub fn new(domain: u64, values: BTreeMap<u64, BigInt>) -> Result<SdTable> {
        let masks = submasks(domain);
        if values.len() != masks.len() || masks.iter().any(|m| !values.contains_key(m)) {
            return Err(Error::invalid(
                "table must cover exactly the subsets of its domain",
            ));
        }
        Ok(SdTable { domain, values })
    }

    pub fn at(&self, mask: u64) -> &BigInt {
        &self.values[&mask]
    }

    pub fn is_zero(&self) -> bool {
        self.values.values().all(|v| v.is_zero())
    }

    /// sD_β t (α) = t(α∪β) − t(α) − t(β), on subsets of domain∖β.
    pub fn sym_diff(&self, beta: u64) -> Result<SdTable> {
        if beta == 0 || beta & !self.domain != 0 {
            return Err(Error::invalid(
                "difference direction must be a nonempty part of the domain",
            ));
        }
        let dom = self.domain & !beta;
        let tb = self.at(beta).clone();
        let mut values = BTreeMap::new();
        for a in submasks(dom) {
            values.insert(a, self.at(a | beta) - self.at(a) - &tb);
        }
        Ok(SdTable { domain: dom, values })
    }

    fn flatten(&self, domain: u64) -> Vec<BigInt> {
        submasks(domain)
            .into_iter()
            .map(|m| self.values[&m].clone())
            .collect()
    }
}

/// Bound on how many tables a symmetric-difference closure may accumulate.
const SD_GEN_CAP: usize = 48;

/// A finitely generated group of integer tables closed under symmetric
/// differences: every sD of a generator is an explicit integer combination
/// of generators on the appropriate domain.
#[derive(Debug, Clone)]
pub struct SdClosure {
    pub generators: Vec<SdTable>,
    /// (generator index, direction) → combination over generator indices
    pub witnesses: BTreeMap<(usize, u64), Vec<(usize, BigInt)>>,
}

/// Closes `seeds` under symmetric differences. New tables are added only
/// when they fall outside the integer span of the existing ones on their
/// domain; the cap turns runaway growth into `Inconclusive`. Seed order is
/// preserved in the generator list.
pub fn sd_closure_tables(seeds: Vec<SdTable>) -> Result<SdClosure> {
    if seeds.is_empty() {
        return Err(Error::invalid("at least one seed table is required"));
    }
    if seeds.iter().any(|s| !s.at(0).is_zero()) {
        return Err(Error::invalid("seed tables must vanish at the empty set"));
    }
    let mut gens = seeds;
    let mut witnesses = BTreeMap::new();
    let mut next = 0;
    while next < gens.len() {
        let idx = next;
        next += 1;
        for beta in submasks(gens[idx].domain) {
            if beta == 0 {
                continue;
            }
            let sd = gens[idx].sym_diff(beta)?;
            if sd.is_zero() {
                witnesses.insert((idx, beta), Vec::new());
                continue;
            }
            let usable: Vec<usize> = (0..gens.len())
                .filter(|&g| gens[g].domain & sd.domain == sd.domain)
                .collect();
            let dim = submasks(sd.domain).len();
            let mut lat = ZLattice::new(dim);
            for &g in &usable {
                lat.insert(gens[g].flatten(sd.domain));
            }
            match lat.member(&sd.flatten(sd.domain)) {
                Some(coeffs) => {
                    let word: Vec<(usize, BigInt)> = coeffs
                        .into_iter()
                        .enumerate()
                        .filter(|(_, c)| !c.is_zero())
                        .map(|(i, c)| (usable[i], c))
                        .collect();
                    witnesses.insert((idx, beta), word);
                }
                None => {
                    if gens.len() >= SD_GEN_CAP {
                        return Err(Error::Inconclusive(format!(
                            "symmetric-difference closure exceeded {SD_GEN_CAP} tables"
                        )));
                    }
                    gens.push(sd);
                    witnesses.insert((idx, beta), vec![(gens.len() - 1, BigInt::one())]);
                }
            }
        }
    }
    Ok(SdClosure {
        generators: gens,
        witnesses,
    })
}

/// The fvip-monomial table v(α) = Σ over chains i₁<…<i_e in α of
/// w_{i₁}[levels[0]]⋯w_{i_{e−1}}[levels[e−2]]·y[i_e], with e = levels.len()+1.
/// These families span symmetric-difference-closed groups.
pub fn monomial_table(weights: &[Vec<i64>], levels: &[usize], y: &[i64]) -> Result<SdTable> {
    let ground = weights.len();
    if ground == 0 || ground > 20 {
        return Err(Error::invalid("monomial tables support 1..=20 positions"));
    }
    if y.len() != ground {
        return Err(Error::invalid("one terminal value per position is required"));
    }
    for w in weights {
        if levels.iter().any(|&l| l >= w.len()) {
            return Err(Error::invalid("a level index leaves the weight vectors"));
        }
    }
    let e = levels.len() + 1;
    let domain = (1u64 << ground) - 1;
    let mut values = BTreeMap::new();
    for a in submasks(domain) {
        let idxs: Vec<usize> = (0..ground).filter(|&i| a >> i & 1 == 1).collect();
        let mut total = BigInt::zero();
        chains(&idxs, e, &mut Vec::new(), &mut |chain| {
            let mut prod = BigInt::one();
            for (t, &i) in chain.iter().take(e - 1).enumerate() {
                prod *= BigInt::from(weights[i][levels[t]]);
            }
            prod *= BigInt::from(y[*chain.last().unwrap()]);
            total += prod;
        });
        values.insert(a, total);
    }
    SdTable::new(domain, values)
}

/// The full monomial family up to degree `d`: for every e in 1..=d and
/// every choice of e−1 level indices, the table over ascending chains.
/// The result is its own symmetric-difference closure, with witnesses.
pub fn monomial_generators(weights: &[Vec<i64>], y: &[i64], d: usize) -> Result<SdClosure> {
    if d == 0 {
        return Err(Error::invalid("the degree bound must be positive"));
    }
    let n_levels = weights.first().map_or(0, |w| w.len());
    if weights.iter().any(|w| w.len() != n_levels) {
        return Err(Error::invalid("weight vectors must share one level count"));
    }
    let mut seeds = Vec::new();
    for e in 1..=d {
        if e >= 2 && n_levels == 0 {
            break;
        }
        let mut tuple = vec![0usize; e - 1];
        loop {
            let table = monomial_table(weights, &tuple, y)?;
            if !seeds.contains(&table) {
                seeds.push(table);
            }
            // odometer over level tuples
            let mut pos = tuple.len();
            loop {
                if pos == 0 {
                    break;
                }
                pos -= 1;
                tuple[pos] += 1;
                if tuple[pos] < n_levels {
                    break;
                }
                tuple[pos] = 0;
            }
            if tuple.iter().all(|&t| t == 0) {
                break;
            }
        }
    }
    if seeds.len() > 16 {
        return Err(Error::invalid("too many monomial generators; lower the degree"));
    }
    sd_closure_tables(seeds)
}

fn chains(idxs: &[usize], e: usize, cur: &mut Vec<usize>, f: &mut impl FnMut(&[usize])) {
    if cur.len() == e {
        f(cur);
        return;
    }
    // idxs is ascending, so everything past the last pick stays ascending
    let start = cur
        .last()
        .map_or(0, |&l| idxs.partition_point(|&i| i <= l));
    for pos in start..idxs.len() {
        cur.push(idxs[pos]);
        chains(idxs, e, cur, f);
        cur.pop();
    }
}

// ---------------------------------------------------------------------------
// extraction and verification

pub const FVIP_DEPTH_CAP: usize = 5;

/// A checkable record that p(n_σ) − shift, tabulated over the subsets of a
/// refined sub-chain, is a polynomial set-map vanishing at ∅ whose group
/// closes under symmetric differences.
#[derive(Debug, Clone)]
pub struct FvipCertificate {
    /// Unions of consecutive chain blocks, in order.
    pub subchain: Vec<FinSet>,
    pub shift: BigInt,
    /// Length of the constant ℤ-chain the table is polynomial against.
    pub chain_length: u32,
    /// Generator 0 is the extracted table itself.
    pub generators: Vec<SdTable>,
    pub witnesses: BTreeMap<(usize, u64), Vec<(usize, BigInt)>>,
}

/// Iterated differences vanish after `budget` steps: the exact meaning of
/// "polynomial against a constant chain of that length plus one".
fn cascade_vanishes(values: &BTreeMap<u64, BigInt>, domain: u64, budget: u32) -> bool {
    if values.values().all(|v| v.is_zero()) {
        return true;
    }
    if budget == 0 {
        return false;
    }
    for beta in submasks(domain) {
        if beta == 0 {
            continue;
        }
        let dom = domain & !beta;
        let mut derived = BTreeMap::new();
        for a in submasks(dom) {
            derived.insert(a, &values[&(a | beta)] - &values[&a]);
        }
        if !cascade_vanishes(&derived, dom, budget - 1) {
            return false;
        }
    }
    true
}

/// Extracts from `p` along `sys` a depth-`depth` sub-chain of `chain` and a
/// shift such that σ ↦ p(n_σ) − shift (patched to 0 at ∅) is certified
/// polynomial and symmetric-difference closed. Candidates are tried in
/// lexicographic order, shifts smallest-window first, so the result is
/// deterministic; admissible expressions are pinned to shift 0.
pub fn fvip_extract(
    p: &GenPoly,
    sys: &IPSystem,
    chain: &IPRing,
    depth: usize,
) -> Result<FvipCertificate> {
    if depth == 0 || depth > FVIP_DEPTH_CAP {
        return Err(Error::invalid(format!(
            "extraction depth must be within 1..={FVIP_DEPTH_CAP}"
        )));
    }
    let degree = p.degree();
    let chain_length = (sys.dim() as u32) * degree;
    let full = (1u64 << depth) - 1;
    let shifts: Vec<BigInt> = if p.admissible() {
        vec![BigInt::zero()]
    } else {
        let p0 = p.eval(&vec![BigInt::zero(); sys.dim()])?;
        let mut cands = vec![
            BigInt::zero(),
            p0.clone(),
            &p0 - 1,
            &p0 + 1,
            BigInt::from(-1),
            BigInt::one(),
            BigInt::from(-2),
            BigInt::from(2),
        ];
        let mut seen = Vec::new();
        cands.retain(|c| {
            if seen.contains(c) {
                false
            } else {
                seen.push(c.clone());
                true
            }
        });
        cands
    };
    let mut result: Option<FvipCertificate> = None;
    run_extraction_search(p, sys, chain, depth, &mut |runs, ms| {
        for shift in &shifts {
            let mut values = BTreeMap::new();
            values.insert(0u64, BigInt::zero());
            for sigma in submasks(full) {
                if sigma == 0 {
                    continue;
                }
                let mut point = vec![BigInt::zero(); sys.dim()];
                for (t, m) in ms.iter().enumerate() {
                    if sigma >> t & 1 == 1 {
                        for (coord, x) in point.iter_mut().zip(m) {
                            *coord += x;
                        }
                    }
                }
                values.insert(sigma, p.eval(&point)? - shift);
            }
            if !cascade_vanishes(&values, full, chain_length + 1) {
                continue;
            }
            let table = SdTable::new(full, values)?;
            let closure = match sd_closure_tables(vec![table]) {
                Ok(c) => c,
                Err(Error::Inconclusive(_)) => continue,
                Err(e) => return Err(e),
            };
            let subchain = runs.iter().map(|&(_, _, mask)| FinSet::new(mask)).collect();
            result = Some(FvipCertificate {
                subchain,
                shift: shift.clone(),
                chain_length,
                generators: closure.generators,
                witnesses: closure.witnesses,
            });
            return Ok(true);
        }
        Ok(false)
    })?;
    let cert = result.ok_or_else(|| {
        Error::Inconclusive(
            "no sub-chain and shift produced a certifiable extraction".into(),
        )
    })?;
    verify_fvip(p, sys, chain, &cert)
        .map_err(|e| Error::Internal(format!("extraction produced a bad certificate: {e}")))?;
    Ok(cert)
}

/// Independent check of an extraction certificate. Recomputes the table
/// from `p` and the sub-chain, then verifies the vanishing of iterated
/// differences by inclusion–exclusion and every closure witness by direct
/// summation.
pub fn verify_fvip(
    p: &GenPoly,
    sys: &IPSystem,
    chain: &IPRing,
    cert: &FvipCertificate,
) -> Result<()> {
    let depth = cert.subchain.len();
    if depth == 0 || depth > FVIP_DEPTH_CAP {
        return Err(Error::invalid("certificate depth is out of range"));
    }
    for w in cert.subchain.windows(2) {
        if !precedes(&w[0], &w[1]) {
            return Err(Error::invalid("certificate blocks are not ordered"));
        }
    }
    for b in &cert.subchain {
        if b.is_empty() {
            return Err(Error::invalid("certificate blocks must be nonempty"));
        }
        let mut covered = 0u64;
        for cb in chain.chain() {
            if cb.mask() & !b.mask() == 0 {
                covered |= cb.mask();
            }
        }
        if covered != b.mask() {
            return Err(Error::invalid(
                "certificate block is not a union of chain blocks",
            ));
        }
        if FinSet::max(b).is_some_and(|m| m >= sys.len()) {
            return Err(Error::invalid("certificate block leaves the system"));
        }
    }
    let full = (1u64 << depth) - 1;
    let q = cert
        .generators
        .first()
        .ok_or_else(|| Error::invalid("certificate has no tables"))?;
    if q.domain != full {
        return Err(Error::invalid("the extracted table must cover the sub-chain"));
    }
    for sigma in submasks(full) {
        let expect = if sigma == 0 {
            BigInt::zero()
        } else {
            let mut point = vec![BigInt::zero(); sys.dim()];
            for (t, b) in cert.subchain.iter().enumerate() {
                if sigma >> t & 1 == 1 {
                    for (coord, x) in point.iter_mut().zip(sys.n_at(b.mask())) {
                        *coord += x;
                    }
                }
            }
            p.eval(&point)? - &cert.shift
        };
        if *q.at(sigma) != expect {
            return Err(Error::invalid("table disagrees with the expression"));
        }
    }
    // polynomiality: every chain of disjoint differences of length
    // chain_length+1 kills the table, checked by inclusion–exclusion
    let budget = cert.chain_length + 1;
    let mut betas: Vec<u64> = Vec::new();
    if !ie_vanishes(&q.values, full, budget, &mut betas) {
        return Err(Error::invalid(
            "iterated differences do not vanish at the declared length",
        ));
    }
    // closure: every symmetric difference of every generator must be the
    // witnessed combination, and every table must vanish at ∅
    for (idx, g) in cert.generators.iter().enumerate() {
        if g.domain & !full != 0 {
            return Err(Error::invalid("generator domain leaves the sub-chain"));
        }
        let masks = submasks(g.domain);
        if g.values.len() != masks.len() || masks.iter().any(|m| !g.values.contains_key(m)) {
            return Err(Error::invalid("generator table has the wrong key set"));
        }
        if !g.at(0).is_zero() {
            return Err(Error::invalid("generators must vanish at the empty set"));
        }
        for beta in masks {
            if beta == 0 {
                continue;
            }
            let word = cert
                .witnesses
                .get(&(idx, beta))
                .ok_or_else(|| Error::invalid("a symmetric difference lacks a witness"))?;
            let dom = g.domain & !beta;
            for (w, _) in word {
                if *w >= cert.generators.len()
                    || cert.generators[*w].domain & dom != dom
                {
                    return Err(Error::invalid("witness references an unusable table"));
                }
            }
            for a in submasks(dom) {
                let lhs = g.at(a | beta) - g.at(a) - g.at(beta);
                let mut rhs = BigInt::zero();
                for (w, c) in word {
                    rhs += c * cert.generators[*w].at(a);
                }
                if lhs != rhs {
                    return Err(Error::invalid(
                        "witness fails to reproduce a symmetric difference",
                    ));
                }
            }
        }
    }
    Ok(())
}

/// Certificate for the pointwise sum of two extractions over the same
/// sub-chain: tables add, witnesses concatenate with reindexed
/// generators, and the declared length is the larger of the two. The
/// result verifies against the sum expression with the summed shift.
pub fn certificate_sum(a: &FvipCertificate, b: &FvipCertificate) -> Result<FvipCertificate> {
    if a.subchain != b.subchain {
        return Err(Error::invalid("sum certificates need matching sub-chains"));
    }
    let (qa, qb) = match (a.generators.first(), b.generators.first()) {
        (Some(x), Some(y)) => (x, y),
        _ => return Err(Error::invalid("certificates must carry their tables")),
    };
    let full = (1u64 << a.subchain.len()) - 1;
    if qa.domain != full || qb.domain != full {
        return Err(Error::invalid("extracted tables must cover the sub-chain"));
    }
    let mut values = BTreeMap::new();
    for m in submasks(full) {
        values.insert(m, qa.at(m) + qb.at(m));
    }
    let na = a.generators.len();
    let mut generators = vec![SdTable::new(full, values)?];
    generators.extend(a.generators.iter().cloned());
    generators.extend(b.generators.iter().cloned());
    let mut witnesses: BTreeMap<(usize, u64), Vec<(usize, BigInt)>> = BTreeMap::new();
    for beta in submasks(full) {
        if beta == 0 {
            continue;
        }
        // sD_β(q_a+q_b) = sD_β q_a + sD_β q_b, each already witnessed
        let wa = a
            .witnesses
            .get(&(0, beta))
            .ok_or_else(|| Error::invalid("left certificate is missing a witness"))?;
        let wb = b
            .witnesses
            .get(&(0, beta))
            .ok_or_else(|| Error::invalid("right certificate is missing a witness"))?;
        let mut w: Vec<(usize, BigInt)> =
            wa.iter().map(|(g, c)| (1 + g, c.clone())).collect();
        w.extend(wb.iter().map(|(g, c)| (1 + na + g, c.clone())));
        witnesses.insert((0, beta), w);
    }
    for ((g, beta), w) in &a.witnesses {
        witnesses.insert(
            (1 + g, *beta),
            w.iter().map(|(i, c)| (1 + i, c.clone())).collect(),
        );
    }
    for ((g, beta), w) in &b.witnesses {
        witnesses.insert(
            (1 + na + g, *beta),
            w.iter().map(|(i, c)| (1 + na + i, c.clone())).collect(),
        );
    }
    Ok(FvipCertificate {
        subchain: a.subchain.clone(),
        shift: &a.shift + &b.shift,
        chain_length: a.chain_length.max(b.chain_length),
        generators,
        witnesses,
    })
}

/// Certificate for the pointwise product of two shift-0 extractions over
/// the same sub-chain. The derivative group is rebuilt from all pairwise
/// products of the two generator families (plus the families themselves),
/// which the product expansion of symmetric differences stays inside; the
/// declared length adds.
pub fn certificate_product(a: &FvipCertificate, b: &FvipCertificate) -> Result<FvipCertificate> {
    if a.subchain != b.subchain {
        return Err(Error::invalid("product certificates need matching sub-chains"));
    }
    if !a.shift.is_zero() || !b.shift.is_zero() {
        return Err(Error::invalid(
            "products are certified only for shift-0 factors",
        ));
    }
    let (qa, qb) = match (a.generators.first(), b.generators.first()) {
        (Some(x), Some(y)) => (x, y),
        _ => return Err(Error::invalid("certificates must carry their tables")),
    };
    let full = (1u64 << a.subchain.len()) - 1;
    if qa.domain != full || qb.domain != full {
        return Err(Error::invalid("extracted tables must cover the sub-chain"));
    }
    let product = |g: &SdTable, h: &SdTable| -> Result<SdTable> {
        let dom = g.domain & h.domain;
        let mut values = BTreeMap::new();
        for m in submasks(dom) {
            values.insert(m, g.at(m) * h.at(m));
        }
        SdTable::new(dom, values)
    };
    let mut seeds = vec![product(qa, qb)?];
    for g in &a.generators {
        for h in &b.generators {
            let t = product(g, h)?;
            if !seeds.contains(&t) {
                seeds.push(t);
            }
        }
    }
    for g in a.generators.iter().chain(&b.generators) {
        if !seeds.contains(g) {
            seeds.push(g.clone());
        }
    }
    let closure = sd_closure_tables(seeds)?;
    Ok(FvipCertificate {
        subchain: a.subchain.clone(),
        shift: BigInt::zero(),
        chain_length: a.chain_length + b.chain_length,
        generators: closure.generators,
        witnesses: closure.witnesses,
    })
}

/// Inclusion–exclusion check that all `budget`-fold iterated differences
/// along disjoint nonempty directions vanish.
fn ie_vanishes(
    values: &BTreeMap<u64, BigInt>,
    domain: u64,
    budget: u32,
    betas: &mut Vec<u64>,
) -> bool {
    if betas.len() == budget as usize {
        let used: u64 = betas.iter().fold(0, |a, b| a | b);
        let rest = domain & !used;
        for alpha in submasks(rest) {
            let mut total = BigInt::zero();
            for sel in 0..(1u64 << betas.len()) {
                let mut mask = alpha;
                let mut bits = 0;
                for (t, b) in betas.iter().enumerate() {
                    if sel >> t & 1 == 1 {
                        mask |= b;
                        bits += 1;
                    }
                }
                let sign = if (betas.len() - bits) % 2 == 0 { 1 } else { -1 };
                total += BigInt::from(sign) * &values[&mask];
            }
            if !total.is_zero() {
                return false;
            }
        }
        return true;
    }
    let used: u64 = betas.iter().fold(0, |a, b| a | b);
    for beta in submasks(domain & !used) {
        if beta == 0 {
            continue;
        }
        betas.push(beta);
        let ok = ie_vanishes(values, domain, budget, betas);
        betas.pop();
        if !ok {
            return false;
        }
    }
    true
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ipcore::IPRing;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn r(n: i64, d: i64) -> Real {
        Real::Rat(rat(n, d))
    }

    #[test]
    fn surd_signs_against_integer_squares() {
        // 3² > 2·2² and 7² < 2·5²
        let x = Real::surd(rat_i(3), rat_i(-2), 2);
        assert_eq!(x.sign(), Some(Ordering::Greater));
        let y = Real::surd(rat_i(7), rat_i(-5), 2);
        assert_eq!(y.sign(), Some(Ordering::Less));
        let sq = Real::sqrt_of(2).mul(&Real::sqrt_of(2));
        assert_eq!(sq, Real::Rat(rat_i(2)));
        // (1+√2)² = 3 + 2√2
        let s = Real::surd(rat_i(1), rat_i(1), 2);
        assert_eq!(s.mul(&s), Real::surd(rat_i(3), rat_i(2), 2));
        // √8 normalizes to 2√2
        assert_eq!(Real::sqrt_of(8), Real::surd(rat_i(0), rat_i(2), 2));
    }

    #[test]
    fn surd_floor_against_integer_square_root() {
        // ⌊100√2⌋ agrees with the integer square root of 100²·2
        let hundred_rt2 = Real::surd(rat_i(0), rat_i(100), 2);
        let isqrt = BigInt::from(20000).sqrt();
        assert_eq!(hundred_rt2.floor().unwrap(), isqrt);
        assert_eq!(isqrt, BigInt::from(141));
        assert_eq!(
            Real::surd(rat_i(0), rat_i(-1), 2).floor().unwrap(),
            BigInt::from(-2)
        );
        assert_eq!(nearest_int(&Real::sqrt_of(2)).unwrap(), BigInt::one());
        // dint(√2) = √2 − 1
        assert_eq!(
            dint(&Real::sqrt_of(2)).unwrap(),
            Real::surd(rat_i(-1), rat_i(1), 2)
        );
        assert_eq!(dint(&r(99, 100)).unwrap(), r(1, 100));
    }

    #[test]
    fn mixed_surds_fall_back_to_enclosures() {
        // √2 + √3 = 3.14626…
        let s = Real::sqrt_of(2).add(&Real::sqrt_of(3));
        assert!(matches!(s, Real::Interval { .. }));
        assert_eq!(s.floor().unwrap(), BigInt::from(3));
        assert_eq!(s.sign(), Some(Ordering::Greater));
    }

    #[test]
    fn parsing_shapes_and_rejections() {
        let p = parse_genpoly("x1^2").unwrap();
        assert_eq!(p.degree(), 2);
        assert_eq!(p.arity(), 1);
        assert!(p.admissible());

        let p = parse_genpoly("floor(sqrt(2)*x1)").unwrap();
        assert_eq!(p.degree(), 1);
        assert!(!p.admissible());

        let p = parse_genpoly("floor(sqrt(2)*x1 + 0.5)").unwrap();
        assert!(p.admissible());

        assert!(parse_genpoly("3*x1").unwrap().admissible());
        assert!(!parse_genpoly("x1 + 2").unwrap().admissible());
        assert!(parse_genpoly("x1*x2 - x3").unwrap().admissible());
        assert_eq!(parse_genpoly("x1*x2 - x3").unwrap().arity(), 3);

        assert!(parse_genpoly("sqrt(2)*x1").is_err());
        assert!(parse_genpoly("0.5*x1").is_err());
        assert!(parse_genpoly("x0").is_err());
        assert!(parse_genpoly("x1 +").is_err());
        assert!(parse_genpoly("floor(x1").is_err());
        assert!(parse_genpoly("y1").is_err());
    }

    #[test]
    fn evaluation_against_square_root_tables() {
        let pt = |v: i64| vec![BigInt::from(v)];
        let p = parse_genpoly("floor(sqrt(2)*x1)").unwrap();
        // ⌊√2·5⌋ = ⌊√50⌋ = 7, and at −5 the floor drops to −8
        assert_eq!(p.eval(&pt(5)).unwrap(), BigInt::from(7));
        assert_eq!(p.eval(&pt(-5)).unwrap(), BigInt::from(-8));

        let p = parse_genpoly("x1^2 - 3*x1").unwrap();
        assert_eq!(p.eval(&pt(7)).unwrap(), BigInt::from(28));

        let p = parse_genpoly("floor(sqrt(2)*x1)*floor(sqrt(3)*x1)").unwrap();
        // ⌊√32⌋·⌊√48⌋ = 5·6
        assert_eq!(p.eval(&pt(4)).unwrap(), BigInt::from(30));

        let p = parse_genpoly("floor(0.5 + x1*x1)").unwrap();
        assert_eq!(p.eval(&pt(3)).unwrap(), BigInt::from(9));

        let nested = parse_genpoly("floor(sqrt(2)*floor(sqrt(2)*x1))").unwrap();
        // ⌊√2·⌊√2·10⌋⌋ = ⌊√2·14⌋ = 19
        assert_eq!(nested.eval(&pt(10)).unwrap(), BigInt::from(19));
    }

    #[test]
    fn symmetric_difference_of_products_expands() {
        // sD_β(vw) = (v + sD_βv + v(β))·sD_βw + (sD_βv + v(β))·w
        //            + (sD_βv + v)·w(β), pointwise on the reduced domain
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let domain = 0b1111u64;
        let mk = |rng: &mut ChaCha8Rng| {
            let mut vals = BTreeMap::new();
            for m in submasks(domain) {
                vals.insert(
                    m,
                    if m == 0 {
                        BigInt::zero()
                    } else {
                        BigInt::from(rng.gen_range(-9i64..=9))
                    },
                );
            }
            SdTable::new(domain, vals).unwrap()
        };
        for _ in 0..20 {
            let v = mk(&mut rng);
            let w = mk(&mut rng);
            let mut prod_vals = BTreeMap::new();
            for m in submasks(domain) {
                prod_vals.insert(m, v.at(m) * w.at(m));
            }
            let prod = SdTable::new(domain, prod_vals).unwrap();
            for beta in submasks(domain) {
                if beta == 0 {
                    continue;
                }
                let left = prod.sym_diff(beta).unwrap();
                let sv = v.sym_diff(beta).unwrap();
                let sw = w.sym_diff(beta).unwrap();
                for a in submasks(domain & !beta) {
                    let rhs = (v.at(a) + sv.at(a) + v.at(beta)) * sw.at(a)
                        + (sv.at(a) + v.at(beta)) * w.at(a)
                        + (sv.at(a) + v.at(a)) * w.at(beta);
                    assert_eq!(*left.at(a), rhs);
                }
            }
        }
    }

    #[test]
    fn monomial_tables_close_under_symmetric_differences() {
        let weights = vec![vec![3, 1], vec![-2, 5], vec![7, 2], vec![1, -4]];
        let y = vec![2, -1, 4, 3];
        let v = monomial_table(&weights, &[0], &y).unwrap();
        // inner sums match a direct double loop
        let probe = 0b1011u64;
        let mut expect = BigInt::zero();
        for i in 0..4 {
            for j in (i + 1)..4 {
                if probe >> i & 1 == 1 && probe >> j & 1 == 1 {
                    expect += BigInt::from(weights[i][0] * y[j]);
                }
            }
        }
        assert_eq!(*v.at(probe), expect);
        let closure = sd_closure_tables(vec![v]).unwrap();
        assert!(closure.generators.len() <= 8);
        for g in &closure.generators {
            assert!(g.at(0).is_zero());
        }
        // degree-one tables close immediately
        let lin = monomial_table(&weights, &[], &y).unwrap();
        let c2 = sd_closure_tables(vec![lin]).unwrap();
        assert_eq!(c2.generators.len(), 1);
    }

    fn doubling_system(k: usize) -> IPSystem {
        IPSystem::new((0..k).map(|i| vec![1i64 << i]).collect()).unwrap()
    }

    fn singleton_chain(k: usize) -> IPRing {
        IPRing::new((0..k).map(|i| FinSet::new(1 << i)).collect()).unwrap()
    }

    #[test]
    fn refinement_keeps_already_close_chains_whole() {
        let chain = singleton_chain(6);
        let zero = |_: u64| Ok(Real::integer(0));
        let found = near_identity_refine(&zero, &chain, &r(1, 100), 3).unwrap();
        assert_eq!(found, Some(chain.clone()));
        // dint never exceeds 1/2, so a loose eps accepts anything
        let wild = |mask: u64| Ok(Real::sqrt_of(5).mul_int(&BigInt::from(mask)));
        let found = near_identity_refine(&wild, &chain, &r(3, 5), 2).unwrap();
        assert_eq!(found, Some(chain));
    }

    #[test]
    fn refinement_selects_near_integer_multiples() {
        // √2 times the larger Pell denominators is nearly integral
        let pell = [2i64, 5, 12, 29, 70, 169];
        let sys = IPSystem::new(pell.iter().map(|&n| vec![n]).collect()).unwrap();
        let chain = singleton_chain(pell.len());
        let val = |mask: u64| Ok(Real::sqrt_of(2).mul_int(&sys.n_at(mask)[0]));
        let eps = r(1, 10);
        let found = near_identity_refine(&val, &chain, &eps, 2)
            .unwrap()
            .expect("a Pell sub-chain exists");
        let blocks = found.chain();
        assert_eq!(blocks.len(), 2);
        // √2·2 is 0.17 away from the integers, so position 0 is excluded
        assert!(blocks[0].mask() & 1 == 0);
        for sel in 1u64..4 {
            let mut mask = 0;
            for (t, b) in blocks.iter().enumerate() {
                if sel >> t & 1 == 1 {
                    mask |= b.mask();
                }
            }
            let d = dint(&val(mask).unwrap()).unwrap();
            assert_eq!(d.cmp_exact(&eps).unwrap(), Ordering::Less);
        }
        // an impossible eps comes back not-found, not an error
        let none = near_identity_refine(&val, &chain, &r(1, 1_000_000), 3).unwrap();
        assert_eq!(none, None);
    }

    #[test]
    fn monomial_family_certifies_itself() {
        let weights = vec![vec![3, 1], vec![-2, 5], vec![7, 2], vec![1, -4]];
        let y = vec![2, -1, 4, 3];
        let single = monomial_generators(&weights, &y, 1).unwrap();
        assert_eq!(single.generators.len(), 1);
        assert_eq!(
            *single.generators[0].at(0b101),
            BigInt::from(y[0] + y[2])
        );
        let family = monomial_generators(&weights, &y, 2).unwrap();
        // seeds: e=1 plus one e=2 table per level
        assert!(family.generators.len() >= 3);
        for (i, g) in family.generators.iter().enumerate() {
            for beta in submasks(g.domain) {
                if beta != 0 {
                    assert!(family.witnesses.contains_key(&(i, beta)));
                }
            }
        }
    }

    #[test]
    fn certificates_combine_under_sum_and_product() {
        let pa = parse_genpoly("x1^2").unwrap();
        let pb = parse_genpoly("3*x1").unwrap();
        let sys = doubling_system(10);
        let chain = singleton_chain(10);
        // no floors anywhere, so both extractions pick the same sub-chain
        let ca = fvip_extract(&pa, &sys, &chain, 3).unwrap();
        let cb = fvip_extract(&pb, &sys, &chain, 3).unwrap();
        assert_eq!(ca.subchain, cb.subchain);

        let sum = certificate_sum(&ca, &cb).unwrap();
        let p_sum = GenPoly::Sum(Box::new(pa.clone()), Box::new(pb.clone()));
        verify_fvip(&p_sum, &sys, &chain, &sum).unwrap();

        let prod = certificate_product(&ca, &cb).unwrap();
        assert_eq!(prod.chain_length, ca.chain_length + cb.chain_length);
        let p_prod = GenPoly::Prod(Box::new(pa), Box::new(pb));
        verify_fvip(&p_prod, &sys, &chain, &prod).unwrap();
    }

    #[test]
    fn parse_invariants_hold_structurally() {
        // degree subadditivity across the grammar
        let cases = [
            ("x1*x2", "x1", "x2"),
            ("(x1+x2)*(x1+x2)", "x1+x2", "x1+x2"),
            ("floor(sqrt(2)*x1)*floor(sqrt(3)*x1)", "floor(sqrt(2)*x1)", "floor(sqrt(3)*x1)"),
        ];
        for (whole, left, right) in cases {
            let w = parse_genpoly(whole).unwrap();
            let l = parse_genpoly(left).unwrap();
            let r = parse_genpoly(right).unwrap();
            assert!(w.degree() <= l.degree() + r.degree());
        }
        // admissible expressions vanish at the origin
        for src in [
            "x1",
            "x1^2",
            "3*x1",
            "floor(sqrt(2)*x1 + 0.5)",
            "x1*x2 - x3",
            "floor(0.25 + floor(sqrt(3)*x2 + 0.5))",
        ] {
            let p = parse_genpoly(src).unwrap();
            if p.admissible() {
                let zeros = vec![BigInt::zero(); p.arity()];
                assert_eq!(p.eval(&zeros).unwrap(), BigInt::zero(), "{src}");
            }
        }
    }

    #[test]
    fn extraction_of_a_plain_square() {
        let p = parse_genpoly("x1^2").unwrap();
        let sys = doubling_system(12);
        let chain = singleton_chain(12);
        let cert = fvip_extract(&p, &sys, &chain, 3).unwrap();
        assert_eq!(cert.shift, BigInt::zero());
        verify_fvip(&p, &sys, &chain, &cert).unwrap();
        // the table really is (m_σ)²
        for sigma in submasks(0b111u64) {
            let mut m = BigInt::zero();
            for (t, b) in cert.subchain.iter().enumerate() {
                if sigma >> t & 1 == 1 {
                    m += sys.n_at(b.mask())[0].clone();
                }
            }
            assert_eq!(*cert.generators[0].at(sigma), &m * &m);
        }
    }

    #[test]
    fn extraction_pins_admissible_shifts_to_zero() {
        let p = parse_genpoly("floor(sqrt(2)*x1 + 0.5)").unwrap();
        assert!(p.admissible());
        let sys = doubling_system(24);
        let chain = singleton_chain(24);
        let cert = fvip_extract(&p, &sys, &chain, 2).unwrap();
        assert_eq!(cert.shift, BigInt::zero());
        verify_fvip(&p, &sys, &chain, &cert).unwrap();
    }

    #[test]
    fn extraction_for_a_bare_floor_stays_in_window() {
        let p = parse_genpoly("floor(sqrt(2)*x1)").unwrap();
        let sys = doubling_system(24);
        let chain = singleton_chain(24);
        let cert = fvip_extract(&p, &sys, &chain, 2).unwrap();
        assert!(cert.shift.abs() <= BigInt::one());
        verify_fvip(&p, &sys, &chain, &cert).unwrap();
    }

    #[test]
    #[ignore = "timing probe for deep extractions"]
    fn probe_depth_four_extractions() {
        let sys = doubling_system(63);
        let chain = singleton_chain(63);
        for src in ["floor(sqrt(2)*x1)", "floor(sqrt(2)*x1)*floor(sqrt(3)*x1)"] {
            let p = parse_genpoly(src).unwrap();
            let t = std::time::Instant::now();
            match fvip_extract(&p, &sys, &chain, 4) {
                Ok(c) => println!(
                    "{src}: shift {} subchain {:?} gens {} in {:?}",
                    c.shift,
                    c.subchain.iter().map(|b| b.mask()).collect::<Vec<_>>(),
                    c.generators.len(),
                    t.elapsed()
                ),
                Err(e) => println!("{src}: failed ({e}) in {:?}", t.elapsed()),
            }
        }
    }

    #[test]
    fn tampered_certificates_are_rejected() {
        let p = parse_genpoly("x1^2").unwrap();
        let sys = doubling_system(12);
        let chain = singleton_chain(12);
        let good = fvip_extract(&p, &sys, &chain, 2).unwrap();

        let mut bad = good.clone();
        bad.shift = BigInt::from(5);
        assert!(verify_fvip(&p, &sys, &chain, &bad).is_err());

        let mut bad = good.clone();
        let k = *bad.generators[0].values.keys().last().unwrap();
        bad.generators[0].values.insert(k, BigInt::from(999));
        assert!(verify_fvip(&p, &sys, &chain, &bad).is_err());

        let mut bad = good.clone();
        bad.witnesses.remove(&(0, 1)).unwrap();
        assert!(verify_fvip(&p, &sys, &chain, &bad).is_err());

        verify_fvip(&p, &sys, &chain, &good).unwrap();
    }
}
