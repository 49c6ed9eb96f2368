//! Sparse multivariate polynomials with `f64` coefficients.
//!
//! A [`Polynomial`] is a map from [`Monomial`] keys to coefficients. Keys are
//! sorted `(VarId, exponent)` lists, so a polynomial in thousands of variables
//! whose terms each touch a handful of them stays cheap to build and multiply.

mod parse;

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use crate::error::{Error, Result};

pub use parse::{parse_polynomial, VarRegistry};

/// Coefficients with magnitude below this are dropped after arithmetic.
pub const DROP_TOLERANCE: f64 = 1e-14;

/// Identifier of one scalar variable.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct VarId(pub u32);

impl VarId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for VarId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "v{}", self.0)
    }
}

/// Exponent multi-index: `(variable, exponent)` pairs sorted by variable,
/// exponents strictly positive. The empty list is the constant monomial.
#[derive(Debug, Clone, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Monomial(Vec<(VarId, u32)>);

impl Monomial {
    pub fn one() -> Self {
        Monomial(Vec::new())
    }

    pub fn var(v: VarId) -> Self {
        Monomial(vec![(v, 1)])
    }

    /// Builds a monomial from arbitrary pairs, merging duplicates and dropping zero exponents.
    pub fn from_pairs(pairs: impl IntoIterator<Item = (VarId, u32)>) -> Self {
        let mut map: BTreeMap<VarId, u32> = BTreeMap::new();
        for (v, e) in pairs {
            *map.entry(v).or_default() += e;
        }
        Monomial(map.into_iter().filter(|&(_, e)| e > 0).collect())
    }

    pub fn pairs(&self) -> &[(VarId, u32)] {
        &self.0
    }

    pub fn degree(&self) -> u32 {
        self.0.iter().map(|&(_, e)| e).sum()
    }

    pub fn is_one(&self) -> bool {
        self.0.is_empty()
    }

    pub fn exponent_of(&self, v: VarId) -> u32 {
        self.0
            .binary_search_by_key(&v, |&(w, _)| w)
            .map(|i| self.0[i].1)
            .unwrap_or(0)
    }

    pub fn vars(&self) -> impl Iterator<Item = VarId> + '_ {
        self.0.iter().map(|&(v, _)| v)
    }

    /// Product of two monomials (merge of sorted exponent lists).
    pub fn mul(&self, other: &Monomial) -> Monomial {
        let (a, b) = (&self.0, &other.0);
        let mut out = Vec::with_capacity(a.len() + b.len());
        let (mut i, mut j) = (0, 0);
        while i < a.len() && j < b.len() {
            match a[i].0.cmp(&b[j].0) {
                std::cmp::Ordering::Less => {
                    out.push(a[i]);
                    i += 1;
                }
                std::cmp::Ordering::Greater => {
                    out.push(b[j]);
                    j += 1;
                }
                std::cmp::Ordering::Equal => {
                    out.push((a[i].0, a[i].1 + b[j].1));
                    i += 1;
                    j += 1;
                }
            }
        }
        out.extend_from_slice(&a[i..]);
        out.extend_from_slice(&b[j..]);
        Monomial(out)
    }

    pub fn eval_with<F: Fn(VarId) -> Option<f64>>(&self, value: &F) -> Result<f64> {
        let mut acc = 1.0;
        for &(v, e) in &self.0 {
            let x = value(v).ok_or(Error::MissingValue(v.0))?;
            acc *= x.powi(e as i32);
        }
        Ok(acc)
    }
}

impl fmt::Display for Monomial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.is_empty() {
            return write!(f, "1");
        }
        for (k, &(v, e)) in self.0.iter().enumerate() {
            if k > 0 {
                write!(f, "*")?;
            }
            if e == 1 {
                write!(f, "{v}")?;
            } else {
                write!(f, "{v}^{e}")?;
            }
        }
        Ok(())
    }
}

/// Sparse multivariate polynomial in canonical form (sorted, zero-free).
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Polynomial {
    terms: BTreeMap<Monomial, f64>,
}

impl Polynomial {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn constant(c: f64) -> Self {
        let mut p = Self::zero();
        p.add_term(Monomial::one(), c);
        p
    }

    pub fn var(v: VarId) -> Self {
        let mut p = Self::zero();
        p.add_term(Monomial::var(v), 1.0);
        p
    }

    /// `Σ coeffs[i]·vars[i] + constant`.
    pub fn affine(constant: f64, linear: impl IntoIterator<Item = (VarId, f64)>) -> Self {
        let mut p = Self::constant(constant);
        for (v, c) in linear {
            p.add_term(Monomial::var(v), c);
        }
        p
    }

    pub fn from_terms(terms: impl IntoIterator<Item = (Monomial, f64)>) -> Self {
        let mut p = Self::zero();
        for (m, c) in terms {
            p.add_term(m, c);
        }
        p
    }

    /// Accumulates `c·m`, dropping the term if the result falls below [`DROP_TOLERANCE`].
    pub fn add_term(&mut self, m: Monomial, c: f64) {
        use std::collections::btree_map::Entry;
        match self.terms.entry(m) {
            Entry::Vacant(e) => {
                if c.abs() >= DROP_TOLERANCE {
                    e.insert(c);
                }
            }
            Entry::Occupied(mut e) => {
                let s = *e.get() + c;
                if s.abs() < DROP_TOLERANCE {
                    e.remove();
                } else {
                    *e.get_mut() = s;
                }
            }
        }
    }

    pub fn terms(&self) -> impl Iterator<Item = (&Monomial, f64)> + '_ {
        self.terms.iter().map(|(m, &c)| (m, c))
    }

    pub fn n_terms(&self) -> usize {
        self.terms.len()
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn coefficient(&self, m: &Monomial) -> f64 {
        self.terms.get(m).copied().unwrap_or(0.0)
    }

    pub fn constant_term(&self) -> f64 {
        self.coefficient(&Monomial::one())
    }

    /// Total degree; the zero polynomial has degree 0.
    pub fn degree(&self) -> u32 {
        self.terms.keys().map(Monomial::degree).max().unwrap_or(0)
    }

    /// Highest total degree in the given subset of variables.
    pub fn degree_in(&self, vars: &[VarId]) -> u32 {
        self.terms
            .keys()
            .map(|m| {
                m.pairs()
                    .iter()
                    .filter(|(v, _)| vars.contains(v))
                    .map(|&(_, e)| e)
                    .sum()
            })
            .max()
            .unwrap_or(0)
    }

    pub fn variables(&self) -> BTreeSet<VarId> {
        self.terms.keys().flat_map(|m| m.vars()).collect()
    }

    pub fn scale(&self, s: f64) -> Polynomial {
        Polynomial::from_terms(self.terms().map(|(m, c)| (m.clone(), c * s)))
    }

    pub fn pow(&self, n: u32) -> Polynomial {
        let mut acc = Polynomial::constant(1.0);
        let mut base = self.clone();
        let mut k = n;
        while k > 0 {
            if k & 1 == 1 {
                acc = &acc * &base;
            }
            k >>= 1;
            if k > 0 {
                base = &base * &base;
            }
        }
        acc
    }

    /// Terms of exactly the given total degree.
    pub fn homogeneous_part(&self, degree: u32) -> Polynomial {
        Polynomial::from_terms(
            self.terms()
                .filter(|(m, _)| m.degree() == degree)
                .map(|(m, c)| (m.clone(), c)),
        )
    }

    /// Partial derivative with respect to `v`.
    pub fn derivative(&self, v: VarId) -> Polynomial {
        let mut out = Polynomial::zero();
        for (m, c) in self.terms() {
            let e = m.exponent_of(v);
            if e == 0 {
                continue;
            }
            let pairs = m
                .pairs()
                .iter()
                .map(|&(w, k)| if w == v { (w, k - 1) } else { (w, k) });
            out.add_term(Monomial::from_pairs(pairs), c * e as f64);
        }
        out
    }

    /// Evaluates with a lookup closure; missing variables are an error.
    pub fn eval_with<F: Fn(VarId) -> Option<f64>>(&self, value: F) -> Result<f64> {
        let mut acc = 0.0;
        for (m, c) in self.terms() {
            acc += c * m.eval_with(&value)?;
        }
        Ok(acc)
    }

    pub fn evaluate(&self, point: &HashMap<VarId, f64>) -> Result<f64> {
        self.eval_with(|v| point.get(&v).copied())
    }

    /// Evaluates at a dense point indexed by `VarId::index`.
    pub fn evaluate_dense(&self, point: &[f64]) -> Result<f64> {
        self.eval_with(|v| point.get(v.index()).copied())
    }

    /// Replaces every variable by an affine polynomial and expands.
    pub fn substitute_linear(&self, map: &HashMap<VarId, Polynomial>) -> Result<Polynomial> {
        for v in self.variables() {
            match map.get(&v) {
                None => return Err(Error::UnmappedVariable(v.0)),
                Some(image) if image.degree() > 1 => {
                    return Err(Error::InvalidArgument(format!(
                        "substitution for {v} has degree {} > 1",
                        image.degree()
                    )))
                }
                Some(_) => {}
            }
        }
        let mut powers: HashMap<(VarId, u32), Polynomial> = HashMap::new();
        let mut out = Polynomial::zero();
        for (m, c) in self.terms() {
            let mut prod = Polynomial::constant(c);
            for &(v, e) in m.pairs() {
                let pw = powers
                    .entry((v, e))
                    .or_insert_with(|| map[&v].pow(e));
                prod = &prod * &*pw;
            }
            out += &prod;
        }
        Ok(out)
    }

    /// Renames variables through `f`; the result is re-canonicalized.
    pub fn map_vars<F: Fn(VarId) -> VarId>(&self, f: F) -> Polynomial {
        Polynomial::from_terms(
            self.terms()
                .map(|(m, c)| (Monomial::from_pairs(m.pairs().iter().map(|&(v, e)| (f(v), e))), c)),
        )
    }
}

impl std::ops::AddAssign<&Polynomial> for Polynomial {
    fn add_assign(&mut self, rhs: &Polynomial) {
        for (m, c) in rhs.terms() {
            self.add_term(m.clone(), c);
        }
    }
}

impl Add for &Polynomial {
    type Output = Polynomial;
    fn add(self, rhs: &Polynomial) -> Polynomial {
        let mut out = self.clone();
        out += rhs;
        out
    }
}

impl Sub for &Polynomial {
    type Output = Polynomial;
    fn sub(self, rhs: &Polynomial) -> Polynomial {
        let mut out = self.clone();
        for (m, c) in rhs.terms() {
            out.add_term(m.clone(), -c);
        }
        out
    }
}

impl Mul for &Polynomial {
    type Output = Polynomial;
    fn mul(self, rhs: &Polynomial) -> Polynomial {
        let mut out = Polynomial::zero();
        for (ma, ca) in self.terms() {
            for (mb, cb) in rhs.terms() {
                out.add_term(ma.mul(mb), ca * cb);
            }
        }
        out
    }
}

impl Neg for &Polynomial {
    type Output = Polynomial;
    fn neg(self) -> Polynomial {
        self.scale(-1.0)
    }
}

macro_rules! forward_owned {
    ($tr:ident, $f:ident) => {
        impl $tr for Polynomial {
            type Output = Polynomial;
            fn $f(self, rhs: Polynomial) -> Polynomial {
                (&self).$f(&rhs)
            }
        }
    };
}
forward_owned!(Add, add);
forward_owned!(Sub, sub);
forward_owned!(Mul, mul);

impl fmt::Display for Polynomial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return write!(f, "0");
        }
        for (k, (m, c)) in self.terms().enumerate() {
            if k > 0 {
                write!(f, " + ")?;
            }
            if m.is_one() {
                write!(f, "{c}")?;
            } else {
                write!(f, "{c}*{m}")?;
            }
        }
        Ok(())
    }
}
