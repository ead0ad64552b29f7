//! Dense univariate and sparse multivariate polynomials over `f64`.
//!
//! Every drift, potential and diffusion entry in the crate is one of these, so
//! derivatives and antiderivatives are exact coefficient operations rather
//! than numerical approximations. Both types keep a canonical form: a
//! [`Polynomial`] never carries trailing zero coefficients and a
//! [`MultiPolynomial`] never stores a term whose coefficient is exactly zero.

use std::collections::btree_map::Entry;
use std::collections::BTreeMap;
use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};

use crate::error::PolyError;

/// Univariate polynomial, `coeffs[k]` is the coefficient of `x^k`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(from = "Vec<f64>", into = "Vec<f64>")]
pub struct Polynomial {
    coeffs: Vec<f64>,
}

impl From<Vec<f64>> for Polynomial {
    fn from(coeffs: Vec<f64>) -> Self {
        Polynomial::new(coeffs)
    }
}

impl From<Polynomial> for Vec<f64> {
    fn from(p: Polynomial) -> Self {
        p.coeffs
    }
}

impl Polynomial {
    pub fn new(mut coeffs: Vec<f64>) -> Self {
        while coeffs.last() == Some(&0.0) {
            coeffs.pop();
        }
        Polynomial { coeffs }
    }

    pub fn zero() -> Self {
        Polynomial { coeffs: Vec::new() }
    }

    pub fn constant(c: f64) -> Self {
        Polynomial::new(vec![c])
    }

    /// `c * x^k`
    pub fn monomial(k: usize, c: f64) -> Self {
        let mut coeffs = vec![0.0; k + 1];
        coeffs[k] = c;
        Polynomial::new(coeffs)
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    /// Coefficient of `x^k`, zero beyond the stored degree.
    pub fn coeff(&self, k: usize) -> f64 {
        self.coeffs.get(k).copied().unwrap_or(0.0)
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.is_empty()
    }

    /// `None` for the zero polynomial.
    pub fn degree(&self) -> Option<usize> {
        self.coeffs.len().checked_sub(1)
    }

    pub fn leading_coeff(&self) -> f64 {
        self.coeffs.last().copied().unwrap_or(0.0)
    }

    /// Horner evaluation.
    pub fn eval(&self, x: f64) -> f64 {
        self.coeffs.iter().rev().fold(0.0, |acc, &c| acc * x + c)
    }

    pub fn derivative(&self) -> Polynomial {
        Polynomial::new(
            self.coeffs
                .iter()
                .enumerate()
                .skip(1)
                .map(|(k, &c)| c * k as f64)
                .collect(),
        )
    }

    /// Antiderivative vanishing at the origin.
    pub fn antiderivative(&self) -> Polynomial {
        if self.is_zero() {
            return Polynomial::zero();
        }
        let mut coeffs = Vec::with_capacity(self.coeffs.len() + 1);
        coeffs.push(0.0);
        coeffs.extend(
            self.coeffs
                .iter()
                .enumerate()
                .map(|(k, &c)| c / (k + 1) as f64),
        );
        Polynomial::new(coeffs)
    }

    pub fn scale(&self, s: f64) -> Polynomial {
        Polynomial::new(self.coeffs.iter().map(|c| c * s).collect())
    }

    /// Lift into `nvars` variables as a polynomial in variable `var` alone.
    pub fn to_multi(&self, var: usize, nvars: usize) -> MultiPolynomial {
        assert!(var < nvars, "variable index {var} out of range for {nvars} variables");
        let mut out = MultiPolynomial::zero(nvars);
        for (k, &c) in self.coeffs.iter().enumerate() {
            let mut e = vec![0u32; nvars];
            e[var] = k as u32;
            out.add_term(e, c);
        }
        out
    }

    /// Coefficients whose magnitude is at most `rel_tol * max|c|` are zeroed.
    pub fn pruned(&self, rel_tol: f64) -> Polynomial {
        let scale = self.coeffs.iter().fold(0.0f64, |m, c| m.max(c.abs()));
        Polynomial::new(
            self.coeffs
                .iter()
                .map(|&c| if c.abs() <= rel_tol * scale { 0.0 } else { c })
                .collect(),
        )
    }
}

impl Add for &Polynomial {
    type Output = Polynomial;
    fn add(self, rhs: &Polynomial) -> Polynomial {
        let len = self.coeffs.len().max(rhs.coeffs.len());
        Polynomial::new((0..len).map(|k| self.coeff(k) + rhs.coeff(k)).collect())
    }
}

impl Sub for &Polynomial {
    type Output = Polynomial;
    fn sub(self, rhs: &Polynomial) -> Polynomial {
        let len = self.coeffs.len().max(rhs.coeffs.len());
        Polynomial::new((0..len).map(|k| self.coeff(k) - rhs.coeff(k)).collect())
    }
}

impl Mul for &Polynomial {
    type Output = Polynomial;
    fn mul(self, rhs: &Polynomial) -> Polynomial {
        if self.is_zero() || rhs.is_zero() {
            return Polynomial::zero();
        }
        let mut out = vec![0.0; self.coeffs.len() + rhs.coeffs.len() - 1];
        for (i, a) in self.coeffs.iter().enumerate() {
            for (j, b) in rhs.coeffs.iter().enumerate() {
                out[i + j] += a * b;
            }
        }
        Polynomial::new(out)
    }
}

impl Neg for &Polynomial {
    type Output = Polynomial;
    fn neg(self) -> Polynomial {
        self.scale(-1.0)
    }
}

impl fmt::Display for Polynomial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_zero() {
            return write!(f, "0");
        }
        let mut first = true;
        for (k, &c) in self.coeffs.iter().enumerate() {
            if c == 0.0 {
                continue;
            }
            if !first {
                write!(f, " + ")?;
            }
            first = false;
            match k {
                0 => write!(f, "{c}")?,
                1 => write!(f, "{c}*x")?,
                _ => write!(f, "{c}*x^{k}")?,
            }
        }
        Ok(())
    }
}

/// One stored monomial, the serialized form of a [`MultiPolynomial`] term.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Term {
    pub exponents: Vec<u32>,
    pub coeff: f64,
}

/// Sparse polynomial in a fixed number of variables.
#[derive(Clone, Debug, PartialEq)]
pub struct MultiPolynomial {
    nvars: usize,
    terms: BTreeMap<Vec<u32>, f64>,
}

impl Serialize for MultiPolynomial {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        self.to_terms().serialize(serializer)
    }
}

impl MultiPolynomial {
    pub fn zero(nvars: usize) -> Self {
        MultiPolynomial {
            nvars,
            terms: BTreeMap::new(),
        }
    }

    pub fn constant(nvars: usize, c: f64) -> Self {
        let mut p = MultiPolynomial::zero(nvars);
        p.add_term(vec![0; nvars], c);
        p
    }

    /// The coordinate function `z_i`.
    pub fn var(nvars: usize, i: usize) -> Self {
        assert!(i < nvars, "variable index {i} out of range for {nvars} variables");
        let mut e = vec![0; nvars];
        e[i] = 1;
        let mut p = MultiPolynomial::zero(nvars);
        p.add_term(e, 1.0);
        p
    }

    pub fn monomial(exponents: Vec<u32>, coeff: f64) -> Self {
        let mut p = MultiPolynomial::zero(exponents.len());
        p.add_term(exponents, coeff);
        p
    }

    /// Builds from serialized records; repeated exponent vectors are summed.
    pub fn from_terms(nvars: usize, terms: &[Term]) -> Result<Self, PolyError> {
        let mut p = MultiPolynomial::zero(nvars);
        for t in terms {
            if t.exponents.len() != nvars {
                return Err(PolyError::ArityMismatch {
                    expected: nvars,
                    found: t.exponents.len(),
                });
            }
            if !t.coeff.is_finite() {
                return Err(PolyError::NonFiniteCoefficient(t.coeff));
            }
            p.add_term(t.exponents.clone(), t.coeff);
        }
        Ok(p)
    }

    pub fn to_terms(&self) -> Vec<Term> {
        self.terms
            .iter()
            .map(|(e, &c)| Term {
                exponents: e.clone(),
                coeff: c,
            })
            .collect()
    }

    fn add_term(&mut self, exponents: Vec<u32>, coeff: f64) {
        debug_assert_eq!(exponents.len(), self.nvars);
        if coeff == 0.0 {
            return;
        }
        match self.terms.entry(exponents) {
            Entry::Vacant(v) => {
                v.insert(coeff);
            }
            Entry::Occupied(mut o) => {
                *o.get_mut() += coeff;
                if *o.get() == 0.0 {
                    o.remove();
                }
            }
        }
    }

    pub fn nvars(&self) -> usize {
        self.nvars
    }

    pub fn terms(&self) -> impl Iterator<Item = (&[u32], f64)> {
        self.terms.iter().map(|(e, &c)| (e.as_slice(), c))
    }

    pub fn num_terms(&self) -> usize {
        self.terms.len()
    }

    pub fn coeff(&self, exponents: &[u32]) -> f64 {
        self.terms.get(exponents).copied().unwrap_or(0.0)
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    /// True when the polynomial has no term of positive degree.
    pub fn is_constant(&self) -> bool {
        self.terms.keys().all(|e| e.iter().all(|&k| k == 0))
    }

    /// Value of the constant term.
    pub fn constant_term(&self) -> f64 {
        self.coeff(&vec![0; self.nvars])
    }

    /// Total degree; `None` for the zero polynomial.
    pub fn degree(&self) -> Option<u32> {
        self.terms.keys().map(|e| e.iter().sum()).max()
    }

    pub fn degree_in(&self, var: usize) -> u32 {
        self.terms.keys().map(|e| e[var]).max().unwrap_or(0)
    }

    pub fn max_abs_coeff(&self) -> f64 {
        self.terms.values().fold(0.0f64, |m, c| m.max(c.abs()))
    }

    pub fn eval(&self, z: &[f64]) -> f64 {
        debug_assert_eq!(z.len(), self.nvars);
        self.terms
            .iter()
            .map(|(e, &c)| {
                e.iter()
                    .zip(z)
                    .filter(|(&k, _)| k > 0)
                    .fold(c, |acc, (&k, &v)| acc * v.powi(k as i32))
            })
            .sum()
    }

    /// Exact partial derivative with respect to variable `var`.
    pub fn partial(&self, var: usize) -> MultiPolynomial {
        let mut out = MultiPolynomial::zero(self.nvars);
        for (e, &c) in &self.terms {
            if e[var] == 0 {
                continue;
            }
            let mut d = e.clone();
            d[var] -= 1;
            out.add_term(d, c * e[var] as f64);
        }
        out
    }

    pub fn gradient(&self) -> Vec<MultiPolynomial> {
        (0..self.nvars).map(|i| self.partial(i)).collect()
    }

    pub fn scale(&self, s: f64) -> MultiPolynomial {
        let mut out = MultiPolynomial::zero(self.nvars);
        for (e, &c) in &self.terms {
            out.add_term(e.clone(), c * s);
        }
        out
    }

    /// Integer power by repeated squaring.
    pub fn pow(&self, k: u32) -> MultiPolynomial {
        let mut result = MultiPolynomial::constant(self.nvars, 1.0);
        let mut base = self.clone();
        let mut k = k;
        while k > 0 {
            if k & 1 == 1 {
                result = &result * &base;
            }
            k >>= 1;
            if k > 0 {
                base = &base * &base;
            }
        }
        result
    }

    /// Re-embeds into `nvars >= self.nvars()` variables; variable `i` becomes
    /// variable `offset + i`.
    pub fn embed(&self, nvars: usize, offset: usize) -> MultiPolynomial {
        assert!(offset + self.nvars <= nvars, "embedding does not fit");
        let mut out = MultiPolynomial::zero(nvars);
        for (e, &c) in &self.terms {
            let mut big = vec![0; nvars];
            big[offset..offset + self.nvars].copy_from_slice(e);
            out.add_term(big, c);
        }
        out
    }

    /// Replaces variable `var` by `replacement` (a polynomial in the same
    /// variables).
    pub fn substitute(&self, var: usize, replacement: &MultiPolynomial) -> MultiPolynomial {
        assert_eq!(replacement.nvars, self.nvars, "substitution arity mismatch");
        let max_pow = self.degree_in(var);
        let mut powers = Vec::with_capacity(max_pow as usize + 1);
        powers.push(MultiPolynomial::constant(self.nvars, 1.0));
        for k in 1..=max_pow as usize {
            let next = &powers[k - 1] * replacement;
            powers.push(next);
        }
        let mut out = MultiPolynomial::zero(self.nvars);
        for (e, &c) in &self.terms {
            let k = e[var] as usize;
            let mut rest = e.clone();
            rest[var] = 0;
            let head = MultiPolynomial::monomial(rest, c);
            out = &out + &(&head * &powers[k]);
        }
        out
    }

    /// `t -> p(t * direction)` as a univariate polynomial in `t`.
    pub fn restrict_to_ray(&self, direction: &[f64]) -> Polynomial {
        assert_eq!(direction.len(), self.nvars, "ray dimension mismatch");
        let deg = self.degree().unwrap_or(0) as usize;
        let mut coeffs = vec![0.0; deg + 1];
        for (e, &c) in &self.terms {
            let d: u32 = e.iter().sum();
            let v = e
                .iter()
                .zip(direction)
                .fold(c, |acc, (&k, &u)| acc * u.powi(k as i32));
            coeffs[d as usize] += v;
        }
        Polynomial::new(coeffs)
    }

    /// Univariate view of a one-variable polynomial.
    pub fn to_univariate(&self) -> Option<Polynomial> {
        if self.nvars != 1 {
            return None;
        }
        let deg = self.degree().unwrap_or(0) as usize;
        let mut coeffs = vec![0.0; deg + 1];
        for (e, &c) in &self.terms {
            coeffs[e[0] as usize] = c;
        }
        Some(Polynomial::new(coeffs))
    }

    /// Largest coefficient difference against `other`.
    pub fn max_coeff_diff(&self, other: &MultiPolynomial) -> f64 {
        (self - other).max_abs_coeff()
    }
}

impl Add for &MultiPolynomial {
    type Output = MultiPolynomial;
    fn add(self, rhs: &MultiPolynomial) -> MultiPolynomial {
        assert_eq!(self.nvars, rhs.nvars, "arity mismatch in addition");
        let mut out = self.clone();
        for (e, &c) in &rhs.terms {
            out.add_term(e.clone(), c);
        }
        out
    }
}

impl Sub for &MultiPolynomial {
    type Output = MultiPolynomial;
    fn sub(self, rhs: &MultiPolynomial) -> MultiPolynomial {
        assert_eq!(self.nvars, rhs.nvars, "arity mismatch in subtraction");
        let mut out = self.clone();
        for (e, &c) in &rhs.terms {
            out.add_term(e.clone(), -c);
        }
        out
    }
}

impl Mul for &MultiPolynomial {
    type Output = MultiPolynomial;
    fn mul(self, rhs: &MultiPolynomial) -> MultiPolynomial {
        assert_eq!(self.nvars, rhs.nvars, "arity mismatch in product");
        let mut out = MultiPolynomial::zero(self.nvars);
        for (ea, &ca) in &self.terms {
            for (eb, &cb) in &rhs.terms {
                let e: Vec<u32> = ea.iter().zip(eb).map(|(a, b)| a + b).collect();
                out.add_term(e, ca * cb);
            }
        }
        out
    }
}

impl Neg for &MultiPolynomial {
    type Output = MultiPolynomial;
    fn neg(self) -> MultiPolynomial {
        self.scale(-1.0)
    }
}

macro_rules! forward_owned {
    ($ty:ty, $($tr:ident :: $m:ident),*) => {$(
        impl $tr for $ty {
            type Output = $ty;
            fn $m(self, rhs: $ty) -> $ty {
                (&self).$m(&rhs)
            }
        }
    )*};
}
forward_owned!(Polynomial, Add::add, Sub::sub, Mul::mul);
forward_owned!(MultiPolynomial, Add::add, Sub::sub, Mul::mul);

impl fmt::Display for MultiPolynomial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_zero() {
            return write!(f, "0");
        }
        for (i, (e, c)) in self.terms.iter().enumerate() {
            if i > 0 {
                write!(f, " + ")?;
            }
            write!(f, "{c}")?;
            for (v, &k) in e.iter().enumerate() {
                match k {
                    0 => {}
                    1 => write!(f, "*z{v}")?,
                    _ => write!(f, "*z{v}^{k}")?,
                }
            }
        }
        Ok(())
    }
}

/// Flattened term list for fast repeated evaluation in the integrator.
#[derive(Clone, Debug)]
pub(crate) struct CompiledPoly {
    terms: Vec<(f64, Vec<(usize, i32)>)>,
}

impl CompiledPoly {
    pub(crate) fn new(p: &MultiPolynomial) -> Self {
        let terms = p
            .terms()
            .map(|(e, c)| {
                let factors = e
                    .iter()
                    .enumerate()
                    .filter(|(_, &k)| k > 0)
                    .map(|(i, &k)| (i, k as i32))
                    .collect();
                (c, factors)
            })
            .collect();
        CompiledPoly { terms }
    }

    #[inline]
    pub(crate) fn eval(&self, z: &[f64]) -> f64 {
        let mut sum = 0.0;
        for (c, factors) in &self.terms {
            let mut v = *c;
            for &(i, k) in factors {
                v *= if k == 1 { z[i] } else { z[i].powi(k) };
            }
            sum += v;
        }
        sum
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn canonical_form_strips_trailing_zeros() {
        let p = Polynomial::new(vec![1.0, 2.0, 0.0, 0.0]);
        assert_eq!(p.coeffs(), &[1.0, 2.0]);
        assert_eq!(Polynomial::new(vec![0.0, 0.0]), Polynomial::zero());
        assert_eq!(Polynomial::zero().degree(), None);
    }

    #[test]
    fn horner_eval() {
        assert_eq!(Polynomial::new(vec![0.0, 0.0, 1.0]).eval(3.0), 9.0);
        assert_eq!(Polynomial::constant(1.0).eval(100.0), 1.0);
        // Duffing restoring force with omega0 = 1, lambda = 3
        assert_eq!(Polynomial::new(vec![0.0, 1.0, 0.0, 3.0]).eval(2.0), 26.0);
    }

    #[test]
    fn antiderivative_cases() {
        assert_eq!(Polynomial::zero().antiderivative(), Polynomial::zero());
        assert_eq!(
            Polynomial::constant(1.0).antiderivative(),
            Polynomial::new(vec![0.0, 1.0])
        );
        // f(x) = 0.2 (x^2 - 1)
        let f = Polynomial::new(vec![-0.2, 0.0, 0.2]);
        let big_f = f.antiderivative();
        for x in [-2.0, -1.0, 0.0, 1.0, 2.0] {
            let expected = 0.2 * (x * x * x / 3.0 - x);
            assert_relative_eq!(big_f.eval(x), expected, epsilon = 1e-14);
            assert_relative_eq!(big_f.eval(x), simpson(|s| f.eval(s), 0.0, x, 200), epsilon = 1e-10);
        }
    }

    fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
        let h = (b - a) / n as f64;
        let mut s = f(a) + f(b);
        for i in 1..n {
            let w = if i % 2 == 1 { 4.0 } else { 2.0 };
            s += w * f(a + i as f64 * h);
        }
        s * h / 3.0
    }

    #[test]
    fn gradient_examples() {
        // G = x^2/2 + 3 x^4 / 4
        let g = MultiPolynomial::from_terms(
            1,
            &[
                Term { exponents: vec![2], coeff: 0.5 },
                Term { exponents: vec![4], coeff: 0.75 },
            ],
        )
        .unwrap();
        let grad = g.gradient();
        assert_eq!(grad[0].to_univariate().unwrap(), Polynomial::new(vec![0.0, 1.0, 0.0, 3.0]));

        let c = MultiPolynomial::constant(2, 5.0);
        assert!(c.gradient().iter().all(MultiPolynomial::is_zero));

        let bil = MultiPolynomial::monomial(vec![1, 1], 1.0);
        let gb = bil.gradient();
        assert_eq!(gb[0], MultiPolynomial::var(2, 1));
        assert_eq!(gb[1], MultiPolynomial::var(2, 0));
    }

    #[test]
    fn cancellation_removes_terms() {
        let x = MultiPolynomial::var(2, 0);
        assert!((&x - &x).is_zero());
        let mut p = MultiPolynomial::zero(1);
        p.add_term(vec![1], 1.0);
        p.add_term(vec![2], 1.0);
        p.add_term(vec![1], -1.0);
        assert_eq!(p.num_terms(), 1);
    }

    #[test]
    fn substitution_and_rays() {
        // p(x, y) = y^2, substitute y -> y - x
        let p = MultiPolynomial::monomial(vec![0, 2], 1.0);
        let r = &MultiPolynomial::var(2, 1) - &MultiPolynomial::var(2, 0);
        let q = p.substitute(1, &r);
        assert_relative_eq!(q.eval(&[1.5, -0.5]), 4.0);
        let ray = q.restrict_to_ray(&[1.0, 1.0]);
        assert!(ray.is_zero());
        let ray = q.restrict_to_ray(&[1.0, 0.0]);
        assert_eq!(ray, Polynomial::monomial(2, 1.0));
    }

    #[test]
    fn arity_mismatch_is_rejected() {
        let err = MultiPolynomial::from_terms(2, &[Term { exponents: vec![1], coeff: 1.0 }]);
        assert!(matches!(err, Err(PolyError::ArityMismatch { .. })));
    }

    #[test]
    fn serde_shapes() {
        let p: Polynomial = serde_json::from_str("[1.0, 2.0, 0.0]").unwrap();
        assert_eq!(p.coeffs(), &[1.0, 2.0]);
        let m = MultiPolynomial::monomial(vec![1, 2], -1.5);
        let js = serde_json::to_string(&m).unwrap();
        assert_eq!(js, r#"[{"exponents":[1,2],"coeff":-1.5}]"#);
        let terms: Vec<Term> = serde_json::from_str(&js).unwrap();
        assert_eq!(MultiPolynomial::from_terms(2, &terms).unwrap(), m);
    }

    #[test]
    fn compiled_matches_tree_eval() {
        let p = MultiPolynomial::from_terms(
            2,
            &[
                Term { exponents: vec![3, 0], coeff: -2.0 },
                Term { exponents: vec![1, 1], coeff: 0.5 },
                Term { exponents: vec![0, 0], coeff: 1.25 },
            ],
        )
        .unwrap();
        let c = CompiledPoly::new(&p);
        for z in [[0.3, -1.2], [2.0, 0.0], [-1.0, 4.0]] {
            assert_eq!(c.eval(&z), p.eval(&z));
        }
    }
}
