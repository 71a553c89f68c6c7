//! Exact multivariate (Laurent) polynomials over a chart.
//!
//! Terms are kept in a canonical graded-lexicographic order. Exponents are
//! signed: a negative exponent is legal only on a chart coordinate declared
//! as a unit. Exact division by a coordinate is the workhorse of the
//! deformation-chart calculus; failure of divisibility is meaningful (it is
//! how non-tangency and missing vanishing orders are detected) so it is
//! reported with the offending term.

mod display;
pub(crate) mod parse;

pub use parse::parse_rational;

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::sync::Arc;

use thiserror::Error;

use crate::chart::{same_chart, Chart, ChartError};
use crate::scalar::Scalar;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AlgebraError {
    #[error(transparent)]
    Chart(#[from] ChartError),
    #[error("parse error at byte {pos}: {msg}")]
    Parse { pos: usize, msg: String },
    #[error("term `{term}` is not divisible by `{var}`")]
    NotDivisible { var: String, term: String },
    #[error("negative exponent on non-unit coordinate `{var}`")]
    NegativeExponent { var: String },
    #[error("substitution expects {expect} images, got {got}")]
    SubstitutionArity { expect: usize, got: usize },
    #[error("cannot invert `{0}` in the truncated ring")]
    NotInvertible(String),
    #[error("evaluation at a zero value of unit coordinate `{0}`")]
    EvalAtPole(String),
    #[error("jet transport did not stabilize after {0} sweeps")]
    NoFixpoint(usize),
}

/// Exponent vector of a monomial, ordered graded-lexicographically.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Mono(pub Vec<i32>);

impl Mono {
    pub fn degree(&self) -> i32 {
        self.0.iter().sum()
    }

    pub fn degree_in(&self, vars: &[usize]) -> i32 {
        vars.iter().map(|&v| self.0[v]).sum()
    }

    pub fn one(dim: usize) -> Self {
        Mono(vec![0; dim])
    }

    fn mul(&self, other: &Mono) -> Mono {
        Mono(
            self.0
                .iter()
                .zip(other.0.iter())
                .map(|(a, b)| a + b)
                .collect(),
        )
    }
}

impl Ord for Mono {
    fn cmp(&self, other: &Self) -> Ordering {
        match self.degree().cmp(&other.degree()) {
            Ordering::Equal => self.0.cmp(&other.0),
            ord => ord,
        }
    }
}

impl PartialOrd for Mono {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Truncation rule: discard monomials whose total degree in `vars` exceeds
/// `order`.
#[derive(Debug, Clone)]
pub struct Trunc {
    pub vars: Vec<usize>,
    pub order: usize,
}

impl Trunc {
    pub fn new(vars: &[usize], order: usize) -> Self {
        Trunc {
            vars: vars.to_vec(),
            order,
        }
    }

    pub fn keeps(&self, m: &Mono) -> bool {
        m.degree_in(&self.vars) <= self.order as i32
    }
}

/// Polynomial scalar field on a chart.
#[derive(Debug, Clone, PartialEq)]
pub struct Poly<C: Scalar> {
    chart: Arc<Chart>,
    terms: BTreeMap<Mono, C>,
}

impl<C: Scalar> Poly<C> {
    pub fn zero(chart: &Arc<Chart>) -> Self {
        Poly {
            chart: chart.clone(),
            terms: BTreeMap::new(),
        }
    }

    pub fn constant(chart: &Arc<Chart>, c: C) -> Self {
        let mut p = Self::zero(chart);
        if !c.is_zero() {
            p.terms.insert(Mono::one(chart.dim()), c);
        }
        p
    }

    pub fn one(chart: &Arc<Chart>) -> Self {
        Self::constant(chart, C::one())
    }

    pub fn var(chart: &Arc<Chart>, i: usize) -> Self {
        Self::var_pow(chart, i, 1)
    }

    pub fn var_pow(chart: &Arc<Chart>, i: usize, k: i32) -> Self {
        assert!(i < chart.dim(), "variable index out of range");
        assert!(
            k >= 0 || chart.is_unit(i),
            "negative exponent on non-unit coordinate"
        );
        let mut exps = vec![0; chart.dim()];
        exps[i] = k;
        let mut p = Self::zero(chart);
        p.terms.insert(Mono(exps), C::one());
        p
    }

    pub fn from_terms(chart: &Arc<Chart>, terms: Vec<(Vec<i32>, C)>) -> Self {
        let mut p = Self::zero(chart);
        for (exps, c) in terms {
            assert_eq!(exps.len(), chart.dim());
            p.add_term(Mono(exps), c);
        }
        p
    }

    pub fn chart(&self) -> &Arc<Chart> {
        &self.chart
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn is_constant(&self) -> bool {
        self.terms.keys().all(|m| m.degree() == 0 && m.0.iter().all(|&e| e == 0))
    }

    pub fn terms(&self) -> impl Iterator<Item = (&Mono, &C)> {
        self.terms.iter()
    }

    pub fn num_terms(&self) -> usize {
        self.terms.len()
    }

    pub fn constant_part(&self) -> C {
        self.terms
            .get(&Mono::one(self.chart.dim()))
            .cloned()
            .unwrap_or_else(C::zero)
    }

    fn add_term(&mut self, m: Mono, c: C) {
        if c.is_zero() {
            return;
        }
        match self.terms.get_mut(&m) {
            Some(existing) => {
                let sum = existing.clone() + c;
                if sum.is_zero() {
                    self.terms.remove(&m);
                } else {
                    *existing = sum;
                }
            }
            None => {
                self.terms.insert(m, c);
            }
        }
    }

    pub fn add(&self, other: &Self) -> Self {
        same_chart(&self.chart, &other.chart).expect("polynomial charts differ");
        let mut out = self.clone();
        for (m, c) in &other.terms {
            out.add_term(m.clone(), c.clone());
        }
        out
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.add(&other.neg())
    }

    pub fn neg(&self) -> Self {
        let mut out = Self::zero(&self.chart);
        for (m, c) in &self.terms {
            out.terms.insert(m.clone(), -c.clone());
        }
        out
    }

    pub fn scale(&self, c: &C) -> Self {
        if c.is_zero() {
            return Self::zero(&self.chart);
        }
        let mut out = Self::zero(&self.chart);
        for (m, a) in &self.terms {
            let prod = a.clone() * c.clone();
            if !prod.is_zero() {
                out.terms.insert(m.clone(), prod);
            }
        }
        out
    }

    pub fn mul(&self, other: &Self) -> Self {
        same_chart(&self.chart, &other.chart).expect("polynomial charts differ");
        let mut out = Self::zero(&self.chart);
        for (ma, ca) in &self.terms {
            for (mb, cb) in &other.terms {
                out.add_term(ma.mul(mb), ca.clone() * cb.clone());
            }
        }
        out
    }

    pub fn mul_trunc(&self, other: &Self, trunc: &Trunc) -> Self {
        same_chart(&self.chart, &other.chart).expect("polynomial charts differ");
        let mut out = Self::zero(&self.chart);
        for (ma, ca) in &self.terms {
            for (mb, cb) in &other.terms {
                let m = ma.mul(mb);
                if trunc.keeps(&m) {
                    out.add_term(m, ca.clone() * cb.clone());
                }
            }
        }
        out
    }

    pub fn pow(&self, k: u32) -> Self {
        let mut out = Self::one(&self.chart);
        for _ in 0..k {
            out = out.mul(self);
        }
        out
    }

    pub fn pow_trunc(&self, k: u32, trunc: &Trunc) -> Self {
        let mut out = Self::one(&self.chart);
        for _ in 0..k {
            out = out.mul_trunc(self, trunc);
        }
        out
    }

    /// Partial derivative with respect to coordinate `i`.
    pub fn diff(&self, i: usize) -> Self {
        let mut out = Self::zero(&self.chart);
        for (m, c) in &self.terms {
            let e = m.0[i];
            if e == 0 {
                continue;
            }
            let mut exps = m.0.clone();
            exps[i] = e - 1;
            let factor = C::from_i64(e as i64).unwrap();
            out.add_term(Mono(exps), c.clone() * factor);
        }
        out
    }

    /// Antiderivative in coordinate `i` with zero constant part. Fails on an
    /// exponent of -1.
    pub fn integrate(&self, i: usize) -> Result<Self, AlgebraError> {
        let mut out = Self::zero(&self.chart);
        for (m, c) in &self.terms {
            let e = m.0[i];
            if e == -1 {
                return Err(AlgebraError::NotInvertible(format!(
                    "antiderivative of {}^-1",
                    self.chart.coord(i)
                )));
            }
            let mut exps = m.0.clone();
            exps[i] = e + 1;
            let factor = C::one() / C::from_i64((e + 1) as i64).unwrap();
            out.add_term(Mono(exps), c.clone() * factor);
        }
        Ok(out)
    }

    /// Exact division by coordinate `i`. On a non-unit coordinate every term
    /// must contain it.
    pub fn divide_by_var(&self, i: usize) -> Result<Self, AlgebraError> {
        let mut out = Self::zero(&self.chart);
        for (m, c) in &self.terms {
            let e = m.0[i];
            if e == 0 && !self.chart.is_unit(i) {
                return Err(AlgebraError::NotDivisible {
                    var: self.chart.coord(i).to_string(),
                    term: display::format_term(&self.chart, m, c),
                });
            }
            let mut exps = m.0.clone();
            exps[i] = e - 1;
            out.terms.insert(Mono(exps), c.clone());
        }
        Ok(out)
    }

    pub fn mul_var(&self, i: usize) -> Self {
        let mut out = Self::zero(&self.chart);
        for (m, c) in &self.terms {
            let mut exps = m.0.clone();
            exps[i] += 1;
            out.terms.insert(Mono(exps), c.clone());
        }
        out
    }

    /// Set the listed coordinates to zero. They must appear with non-negative
    /// exponents.
    pub fn restrict_zero(&self, vars: &[usize]) -> Self {
        let mut out = Self::zero(&self.chart);
        'terms: for (m, c) in &self.terms {
            for &v in vars {
                match m.0[v].cmp(&0) {
                    Ordering::Greater => continue 'terms,
                    Ordering::Less => panic!(
                        "restriction to {} = 0 hits a pole",
                        self.chart.coord(v)
                    ),
                    Ordering::Equal => {}
                }
            }
            out.terms.insert(m.clone(), c.clone());
        }
        out
    }

    /// Minimal total degree in `vars` over all terms; `None` for the zero
    /// polynomial.
    pub fn vanishing_order(&self, vars: &[usize]) -> Option<i32> {
        self.terms.keys().map(|m| m.degree_in(vars)).min()
    }

    pub fn max_degree_in(&self, vars: &[usize]) -> Option<i32> {
        self.terms.keys().map(|m| m.degree_in(vars)).max()
    }

    pub fn total_degree(&self) -> Option<i32> {
        self.terms.keys().map(|m| m.degree()).max()
    }

    /// Part of total degree `k` in `vars`.
    pub fn homog_part(&self, vars: &[usize], k: i32) -> Self {
        let mut out = Self::zero(&self.chart);
        for (m, c) in &self.terms {
            if m.degree_in(vars) == k {
                out.terms.insert(m.clone(), c.clone());
            }
        }
        out
    }

    pub fn truncate(&self, trunc: &Trunc) -> Self {
        let mut out = Self::zero(&self.chart);
        for (m, c) in &self.terms {
            if trunc.keeps(m) {
                out.terms.insert(m.clone(), c.clone());
            }
        }
        out
    }

    /// Transplant onto a chart of the same dimension, keeping positions.
    pub fn rename_chart(&self, chart: &Arc<Chart>) -> Self {
        assert_eq!(self.chart.dim(), chart.dim(), "dimension mismatch");
        for i in self.chart.units() {
            assert!(chart.is_unit(i) || self.no_negative(i), "unit status lost");
        }
        Poly {
            chart: chart.clone(),
            terms: self.terms.clone(),
        }
    }

    fn no_negative(&self, i: usize) -> bool {
        self.terms.keys().all(|m| m.0[i] >= 0)
    }

    /// Transplant onto a larger chart; `map[i]` is the index in `chart` of
    /// this polynomial's coordinate `i`.
    pub fn embed(&self, chart: &Arc<Chart>, map: &[usize]) -> Self {
        assert_eq!(map.len(), self.chart.dim());
        let mut out = Poly::zero(chart);
        for (m, c) in &self.terms {
            let mut exps = vec![0; chart.dim()];
            for (i, &e) in m.0.iter().enumerate() {
                if e != 0 {
                    assert!(e > 0 || chart.is_unit(map[i]), "unit status lost in embed");
                    exps[map[i]] = e;
                }
            }
            out.terms.insert(Mono(exps), c.clone());
        }
        out
    }

    /// Full positional substitution. All images must live on one chart. A
    /// negative exponent requires its image to be an exactly invertible
    /// single-term monomial.
    pub fn substitute(&self, images: &[Poly<C>]) -> Result<Poly<C>, AlgebraError> {
        self.substitute_impl(images, None)
    }

    /// Substitution in a truncated ring: negative exponents are expanded by a
    /// geometric series modulo the truncation ideal, and all products are
    /// truncated.
    pub fn substitute_trunc(
        &self,
        images: &[Poly<C>],
        trunc: &Trunc,
    ) -> Result<Poly<C>, AlgebraError> {
        self.substitute_impl(images, Some(trunc))
    }

    fn substitute_impl(
        &self,
        images: &[Poly<C>],
        trunc: Option<&Trunc>,
    ) -> Result<Poly<C>, AlgebraError> {
        if images.len() != self.chart.dim() {
            return Err(AlgebraError::SubstitutionArity {
                expect: self.chart.dim(),
                got: images.len(),
            });
        }
        let target = images
            .first()
            .map(|p| p.chart.clone())
            .expect("substitution into a zero-dimensional chart needs no images");
        for p in images {
            same_chart(&target, &p.chart)?;
        }
        // Cache inverses of images used with negative exponents.
        let mut inverses: Vec<Option<Poly<C>>> = vec![None; images.len()];
        let mut out = Poly::zero(&target);
        for (m, c) in &self.terms {
            let mut acc = Poly::constant(&target, c.clone());
            for (i, &e) in m.0.iter().enumerate() {
                if e == 0 {
                    continue;
                }
                let factor = if e > 0 {
                    match trunc {
                        Some(t) => images[i].pow_trunc(e as u32, t),
                        None => images[i].pow(e as u32),
                    }
                } else {
                    if inverses[i].is_none() {
                        inverses[i] = Some(match trunc {
                            Some(t) => images[i].invert_trunc(t)?,
                            None => images[i].invert_monomial()?,
                        });
                    }
                    let inv = inverses[i].as_ref().unwrap();
                    match trunc {
                        Some(t) => inv.pow_trunc((-e) as u32, t),
                        None => inv.pow((-e) as u32),
                    }
                };
                acc = match trunc {
                    Some(t) => acc.mul_trunc(&factor, t),
                    None => acc.mul(&factor),
                };
            }
            out = out.add(&acc);
        }
        Ok(out)
    }

    /// Exact inverse of a single-term monomial in unit coordinates.
    pub fn invert_monomial(&self) -> Result<Poly<C>, AlgebraError> {
        if self.terms.len() != 1 {
            return Err(AlgebraError::NotInvertible(self.to_string()));
        }
        let (m, c) = self.terms.iter().next().unwrap();
        let mut exps = vec![0; self.chart.dim()];
        for (i, &e) in m.0.iter().enumerate() {
            if e != 0 && !self.chart.is_unit(i) {
                return Err(AlgebraError::NotInvertible(self.to_string()));
            }
            exps[i] = -e;
        }
        let mut out = Poly::zero(&self.chart);
        out.terms.insert(Mono(exps), C::one() / c.clone());
        Ok(out)
    }

    /// Inverse modulo the truncation ideal. The truncation-degree-zero part
    /// must be an invertible monomial; the rest is handled by a finite
    /// geometric series.
    pub fn invert_trunc(&self, trunc: &Trunc) -> Result<Poly<C>, AlgebraError> {
        let head = self.homog_part(&trunc.vars, 0);
        let head_inv = head.invert_monomial().map_err(|_| {
            AlgebraError::NotInvertible(format!(
                "{} (head `{}` is not a unit monomial)",
                self, head
            ))
        })?;
        let tail = self.sub(&head);
        if tail.is_zero() {
            return Ok(head_inv);
        }
        if tail.vanishing_order(&trunc.vars).unwrap_or(1) <= 0 {
            return Err(AlgebraError::NotInvertible(self.to_string()));
        }
        // 1/(h + r) = h^-1 * sum_k (-r/h)^k
        let q = tail.mul_trunc(&head_inv, trunc).neg();
        let mut series = Poly::one(&self.chart);
        let mut power = Poly::one(&self.chart);
        for _ in 0..trunc.order {
            power = power.mul_trunc(&q, trunc);
            if power.is_zero() {
                break;
            }
            series = series.add(&power);
        }
        Ok(series.mul_trunc(&head_inv, trunc))
    }

    pub fn map_coeffs<D: Scalar>(&self, f: impl Fn(&C) -> D) -> Poly<D> {
        let mut out = Poly::zero(&self.chart);
        for (m, c) in &self.terms {
            let d = f(c);
            if !d.is_zero() {
                out.terms.insert(m.clone(), d);
            }
        }
        out
    }

    pub fn to_f64(&self) -> Poly<f64> {
        self.map_coeffs(|c| c.to_float())
    }

    /// Evaluate at a point. Panics on a zero value for a unit coordinate
    /// carrying a negative exponent.
    pub fn eval(&self, point: &[C]) -> C {
        assert_eq!(point.len(), self.chart.dim());
        let mut total = C::zero();
        for (m, c) in &self.terms {
            let mut acc = c.clone();
            for (i, &e) in m.0.iter().enumerate() {
                if e == 0 {
                    continue;
                }
                if e > 0 {
                    for _ in 0..e {
                        acc = acc * point[i].clone();
                    }
                } else {
                    assert!(
                        !point[i].is_zero(),
                        "evaluation at a zero value of unit coordinate `{}`",
                        self.chart.coord(i)
                    );
                    for _ in 0..(-e) {
                        acc = acc / point[i].clone();
                    }
                }
            }
            total = total + acc;
        }
        total
    }

    /// Largest coefficient magnitude, as f64. Zero for the zero polynomial.
    pub fn max_abs(&self) -> f64 {
        self.terms
            .values()
            .map(|c| c.to_float().abs())
            .fold(0.0, f64::max)
    }

    /// Parse an expression in the scalar grammar over `chart`.
    pub fn parse(chart: &Arc<Chart>, text: &str) -> Result<Self, AlgebraError> {
        parse::parse_scalar(chart, text)
    }
}

impl<C: Scalar> std::ops::Add for &Poly<C> {
    type Output = Poly<C>;
    fn add(self, rhs: Self) -> Poly<C> {
        Poly::add(self, rhs)
    }
}

impl<C: Scalar> std::ops::Sub for &Poly<C> {
    type Output = Poly<C>;
    fn sub(self, rhs: Self) -> Poly<C> {
        Poly::sub(self, rhs)
    }
}

impl<C: Scalar> std::ops::Mul for &Poly<C> {
    type Output = Poly<C>;
    fn mul(self, rhs: Self) -> Poly<C> {
        Poly::mul(self, rhs)
    }
}

impl<C: Scalar> std::ops::Neg for &Poly<C> {
    type Output = Poly<C>;
    fn neg(self) -> Poly<C> {
        Poly::neg(self)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::{rat, rat_int, Rat};
    use crate::Chart;

    fn chart2() -> Arc<Chart> {
        Chart::submanifold("m", &["x"], &["y"]).unwrap()
    }

    #[test]
    fn parse_matches_term_map() {
        let c = chart2();
        let p = Poly::<Rat>::parse(&c, "y^2*x - 3/2*y").unwrap();
        let expect = Poly::from_terms(
            &c,
            vec![(vec![1, 2], rat_int(1)), (vec![0, 1], rat(-3, 2))],
        );
        assert_eq!(p, expect);
    }

    #[test]
    fn print_parse_fixpoint() {
        let c = chart2();
        let p = Poly::<Rat>::parse(&c, "y^2*x - 3/2*y").unwrap();
        let printed = p.to_string();
        assert_eq!(printed, "x*y^2 - 3/2*y");
        let reparsed = Poly::<Rat>::parse(&c, &printed).unwrap();
        assert_eq!(reparsed, p);
    }

    #[test]
    fn parse_error_position_and_chart() {
        let c = chart2();
        let err = Poly::<Rat>::parse(&c, "x + * y").unwrap_err();
        match err {
            AlgebraError::Parse { pos, .. } => assert_eq!(pos, 4),
            other => panic!("unexpected error {other:?}"),
        }
        let err = Poly::<Rat>::parse(&c, "x + q").unwrap_err();
        match err {
            AlgebraError::Parse { msg, .. } => assert!(msg.contains('m'), "msg: {msg}"),
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn ring_ops() {
        let c = chart2();
        let x = Poly::<Rat>::var(&c, 0);
        let y = Poly::<Rat>::var(&c, 1);
        let p = (&x + &y).mul(&x.sub(&y));
        let expect = Poly::<Rat>::parse(&c, "x^2 - y^2").unwrap();
        assert_eq!(p, expect);
        assert!((&p - &p).is_zero());
    }

    #[test]
    fn differentiation() {
        let c = chart2();
        let p = Poly::<Rat>::parse(&c, "3/2*x^2*y - y").unwrap();
        assert_eq!(p.diff(0), Poly::parse(&c, "3*x*y").unwrap());
        assert_eq!(p.diff(1), Poly::parse(&c, "3/2*x^2 - 1").unwrap());
    }

    #[test]
    fn exact_division_and_witness() {
        let c = Chart::new("d", &["x", "y~", "t"]).unwrap();
        let base = Poly::<Rat>::parse(&c, "t*x^2 + 2*t^2*x*y~ + t^3*y~^2").unwrap();
        let q = base.divide_by_var(2).unwrap();
        assert_eq!(q, Poly::parse(&c, "x^2 + 2*t*x*y~ + t^2*y~^2").unwrap());
        let bad = Poly::<Rat>::parse(&c, "t*x + y~").unwrap();
        match bad.divide_by_var(2).unwrap_err() {
            AlgebraError::NotDivisible { var, term } => {
                assert_eq!(var, "t");
                assert_eq!(term, "y~");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn substitution() {
        let base = chart2();
        let def = Chart::new("d", &["x", "y~", "t"]).unwrap();
        let f = Poly::<Rat>::parse(&base, "x*y + y^2").unwrap();
        let images = vec![
            Poly::<Rat>::parse(&def, "x").unwrap(),
            Poly::<Rat>::parse(&def, "t*y~").unwrap(),
        ];
        let g = f.substitute(&images).unwrap();
        assert_eq!(g, Poly::parse(&def, "t*x*y~ + t^2*y~^2").unwrap());
    }

    #[test]
    fn evaluation_exact() {
        let c = chart2();
        let p = Poly::<Rat>::parse(&c, "3/2*x^2*y - y").unwrap();
        let v = p.eval(&[rat_int(2), rat(1, 3)]);
        assert_eq!(v, rat(5, 3));
    }

    #[test]
    fn vanishing_orders_and_parts() {
        let c = Chart::submanifold("m", &["x"], &["y", "z"]).unwrap();
        let p = Poly::<Rat>::parse(&c, "x*y + y^2*z + x^3").unwrap();
        let normal = [1usize, 2];
        assert_eq!(p.vanishing_order(&normal), Some(0));
        assert_eq!(
            p.homog_part(&normal, 1),
            Poly::parse(&c, "x*y").unwrap()
        );
        assert_eq!(
            p.restrict_zero(&normal),
            Poly::parse(&c, "x^3").unwrap()
        );
        let q = p.sub(&Poly::parse(&c, "x^3").unwrap());
        assert_eq!(q.vanishing_order(&normal), Some(1));
    }

    #[test]
    fn laurent_arithmetic() {
        let c = Chart::submanifold_with_units("m", &["x"], &["y"], &["x"]).unwrap();
        let p = Poly::<Rat>::parse(&c, "x^-1*y").unwrap();
        let q = Poly::<Rat>::parse(&c, "x*y").unwrap();
        assert_eq!(p.mul(&q), Poly::parse(&c, "y^2").unwrap());
        assert_eq!(p.to_string(), "x^-1*y");
        // negative exponent rejected without unit declaration
        let plain = chart2();
        assert!(Poly::<Rat>::parse(&plain, "x^-1").is_err());
    }

    #[test]
    fn truncated_inverse_series() {
        let c = Chart::submanifold_with_units("m", &["x"], &["y"], &["x"]).unwrap();
        let p = Poly::<Rat>::parse(&c, "x + y").unwrap();
        let trunc = Trunc::new(&[1], 2);
        let inv = p.invert_trunc(&trunc).unwrap();
        assert_eq!(
            inv,
            Poly::parse(&c, "x^-1 - x^-2*y + x^-3*y^2").unwrap()
        );
        let check = p.mul_trunc(&inv, &trunc);
        assert_eq!(check, Poly::one(&c));
    }

    #[test]
    fn integrate_is_inverse_of_diff() {
        let c = chart2();
        let p = Poly::<Rat>::parse(&c, "x^2*y - 2*y^3").unwrap();
        let ip = p.integrate(1).unwrap();
        assert_eq!(ip.diff(1), p);
    }
}
