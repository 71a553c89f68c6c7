//! Tensor calculus on a chart: vector fields, differential forms,
//! multivector fields, polynomial maps between charts, and the standard
//! operations relating them (brackets, exterior calculus, pullbacks).
//!
//! Antisymmetric components are stored on strictly increasing index tuples;
//! `canonicalize` is the single place where reordering signs are decided.

mod parse;
pub mod polymat;

pub use parse::{parse_tensor, TensorValue};

use std::collections::BTreeMap;
use std::sync::Arc;

use nalgebra::DMatrix;

use crate::chart::{same_chart, Chart};
use crate::flow::{self, FlowError, FlowOpts};
use crate::poly::{AlgebraError, Poly, Trunc};
use crate::scalar::Scalar;

/// Sort an index tuple, returning the permutation sign, or `None` when an
/// index repeats (the component is zero).
pub fn canonicalize(indices: &mut Vec<usize>) -> Option<i32> {
    let mut sign = 1;
    let n = indices.len();
    for i in 0..n {
        for j in (i + 1)..n {
            match indices[j].cmp(&indices[i]) {
                std::cmp::Ordering::Less => {
                    indices.swap(i, j);
                    sign = -sign;
                }
                std::cmp::Ordering::Equal => return None,
                std::cmp::Ordering::Greater => {}
            }
        }
    }
    Some(sign)
}

fn signed<C: Scalar>(p: Poly<C>, sign: i32) -> Poly<C> {
    if sign < 0 {
        p.neg()
    } else {
        p
    }
}

/// Vector field, one component per chart coordinate.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorField<C: Scalar> {
    chart: Arc<Chart>,
    comps: Vec<Poly<C>>,
}

impl<C: Scalar> VectorField<C> {
    pub fn new(chart: &Arc<Chart>, comps: Vec<Poly<C>>) -> Self {
        assert_eq!(comps.len(), chart.dim());
        for p in &comps {
            same_chart(chart, p.chart()).expect("component chart mismatch");
        }
        VectorField {
            chart: chart.clone(),
            comps,
        }
    }

    pub fn zero(chart: &Arc<Chart>) -> Self {
        VectorField {
            chart: chart.clone(),
            comps: vec![Poly::zero(chart); chart.dim()],
        }
    }

    pub fn basis(chart: &Arc<Chart>, i: usize) -> Self {
        let mut v = Self::zero(chart);
        v.comps[i] = Poly::one(chart);
        v
    }

    pub fn chart(&self) -> &Arc<Chart> {
        &self.chart
    }

    pub fn comps(&self) -> &[Poly<C>] {
        &self.comps
    }

    pub fn comp(&self, i: usize) -> &Poly<C> {
        &self.comps[i]
    }

    pub fn is_zero(&self) -> bool {
        self.comps.iter().all(|p| p.is_zero())
    }

    pub fn add(&self, other: &Self) -> Self {
        same_chart(&self.chart, &other.chart).unwrap();
        VectorField {
            chart: self.chart.clone(),
            comps: self
                .comps
                .iter()
                .zip(other.comps.iter())
                .map(|(a, b)| a.add(b))
                .collect(),
        }
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.add(&other.neg())
    }

    pub fn neg(&self) -> Self {
        VectorField {
            chart: self.chart.clone(),
            comps: self.comps.iter().map(|p| p.neg()).collect(),
        }
    }

    pub fn scale(&self, f: &Poly<C>) -> Self {
        VectorField {
            chart: self.chart.clone(),
            comps: self.comps.iter().map(|p| p.mul(f)).collect(),
        }
    }

    /// Directional derivative X(f).
    pub fn apply(&self, f: &Poly<C>) -> Poly<C> {
        let mut acc = Poly::zero(&self.chart);
        for (i, xi) in self.comps.iter().enumerate() {
            if !xi.is_zero() {
                acc = acc.add(&xi.mul(&f.diff(i)));
            }
        }
        acc
    }

    /// Commutator [X, Y], components X(Y^i) - Y(X^i).
    pub fn lie_bracket(&self, other: &Self) -> Self {
        same_chart(&self.chart, &other.chart).unwrap();
        let comps = (0..self.chart.dim())
            .map(|i| self.apply(&other.comps[i]).sub(&other.apply(&self.comps[i])))
            .collect();
        VectorField {
            chart: self.chart.clone(),
            comps,
        }
    }

    pub fn to_multivector(&self) -> MultiVector<C> {
        let mut mv = MultiVector::zero(&self.chart, 1);
        for (i, p) in self.comps.iter().enumerate() {
            if !p.is_zero() {
                mv.comps.insert(vec![i], p.clone());
            }
        }
        mv
    }

    pub fn map_coeffs<D: Scalar>(&self, f: impl Fn(&C) -> D + Copy) -> VectorField<D> {
        VectorField {
            chart: self.chart.clone(),
            comps: self.comps.iter().map(|p| p.map_coeffs(f)).collect(),
        }
    }

    pub fn eval_f64(&self, point: &[f64]) -> Vec<f64> {
        self.comps
            .iter()
            .map(|p| p.to_f64().eval(point))
            .collect()
    }

    /// Integrate dz/ds = +X(z) from `start` for time `time`.
    pub fn flow_point(
        &self,
        start: &[f64],
        time: f64,
        opts: &FlowOpts,
    ) -> Result<Vec<f64>, FlowError> {
        let comps: Vec<Poly<f64>> = self.comps.iter().map(|p| p.to_f64()).collect();
        flow::dopri5(
            move |_s, z| comps.iter().map(|p| p.eval(z)).collect(),
            start,
            0.0,
            time,
            opts,
        )
    }

    pub fn max_abs(&self) -> f64 {
        self.comps.iter().map(|p| p.max_abs()).fold(0.0, f64::max)
    }
}

/// Differential form of fixed degree; degree 0 is a scalar held at the empty
/// index tuple.
#[derive(Debug, Clone, PartialEq)]
pub struct DiffForm<C: Scalar> {
    chart: Arc<Chart>,
    degree: usize,
    comps: BTreeMap<Vec<usize>, Poly<C>>,
}

/// Multivector field of fixed degree (0 = scalar, 1 = vector field, 2 =
/// bivector, ...).
#[derive(Debug, Clone, PartialEq)]
pub struct MultiVector<C: Scalar> {
    chart: Arc<Chart>,
    degree: usize,
    comps: BTreeMap<Vec<usize>, Poly<C>>,
}

macro_rules! alt_tensor_impl {
    ($ty:ident) => {
        impl<C: Scalar> $ty<C> {
            pub fn zero(chart: &Arc<Chart>, degree: usize) -> Self {
                $ty {
                    chart: chart.clone(),
                    degree,
                    comps: BTreeMap::new(),
                }
            }

            pub fn from_comps(
                chart: &Arc<Chart>,
                degree: usize,
                comps: Vec<(Vec<usize>, Poly<C>)>,
            ) -> Self {
                let mut out = Self::zero(chart, degree);
                for (idx, p) in comps {
                    out.add_comp(idx, p);
                }
                out
            }

            pub fn scalar(chart: &Arc<Chart>, f: Poly<C>) -> Self {
                let mut out = Self::zero(chart, 0);
                out.add_comp(Vec::new(), f);
                out
            }

            pub fn chart(&self) -> &Arc<Chart> {
                &self.chart
            }

            pub fn degree(&self) -> usize {
                self.degree
            }

            pub fn is_zero(&self) -> bool {
                self.comps.is_empty()
            }

            pub fn comps(&self) -> impl Iterator<Item = (&Vec<usize>, &Poly<C>)> {
                self.comps.iter()
            }

            /// Component at an arbitrary index tuple, sign-adjusted.
            pub fn comp(&self, indices: &[usize]) -> Poly<C> {
                let mut idx = indices.to_vec();
                match canonicalize(&mut idx) {
                    None => Poly::zero(&self.chart),
                    Some(sign) => self
                        .comps
                        .get(&idx)
                        .map(|p| signed(p.clone(), sign))
                        .unwrap_or_else(|| Poly::zero(&self.chart)),
                }
            }

            /// Add `p` at `indices` (any order), canonicalizing the sign.
            pub fn add_comp(&mut self, indices: Vec<usize>, p: Poly<C>) {
                assert_eq!(indices.len(), self.degree, "index arity mismatch");
                if p.is_zero() {
                    return;
                }
                let mut idx = indices;
                let Some(sign) = canonicalize(&mut idx) else {
                    return;
                };
                let addend = signed(p, sign);
                match self.comps.get_mut(&idx) {
                    Some(existing) => {
                        let sum = existing.add(&addend);
                        if sum.is_zero() {
                            self.comps.remove(&idx);
                        } else {
                            *existing = sum;
                        }
                    }
                    None => {
                        self.comps.insert(idx, addend);
                    }
                }
            }

            pub fn add(&self, other: &Self) -> Self {
                same_chart(&self.chart, &other.chart).unwrap();
                assert_eq!(self.degree, other.degree, "degree mismatch");
                let mut out = self.clone();
                for (idx, p) in &other.comps {
                    out.add_comp(idx.clone(), p.clone());
                }
                out
            }

            pub fn sub(&self, other: &Self) -> Self {
                self.add(&other.neg())
            }

            pub fn neg(&self) -> Self {
                let mut out = Self::zero(&self.chart, self.degree);
                for (idx, p) in &self.comps {
                    out.comps.insert(idx.clone(), p.neg());
                }
                out
            }

            pub fn scale(&self, f: &Poly<C>) -> Self {
                let mut out = Self::zero(&self.chart, self.degree);
                for (idx, p) in &self.comps {
                    let q = p.mul(f);
                    if !q.is_zero() {
                        out.comps.insert(idx.clone(), q);
                    }
                }
                out
            }

            pub fn wedge(&self, other: &Self) -> Self {
                same_chart(&self.chart, &other.chart).unwrap();
                let mut out = Self::zero(&self.chart, self.degree + other.degree);
                for (ia, pa) in &self.comps {
                    for (ib, pb) in &other.comps {
                        let mut idx = ia.clone();
                        idx.extend_from_slice(ib);
                        out.add_comp(idx, pa.mul(pb));
                    }
                }
                out
            }

            pub fn map_coeffs<D: Scalar>(&self, f: impl Fn(&C) -> D + Copy) -> $ty<D> {
                let mut out = $ty::zero(&self.chart, self.degree);
                for (idx, p) in &self.comps {
                    let q = p.map_coeffs(f);
                    if !q.is_zero() {
                        out.comps.insert(idx.clone(), q);
                    }
                }
                out
            }

            pub fn max_abs(&self) -> f64 {
                self.comps.values().map(|p| p.max_abs()).fold(0.0, f64::max)
            }

            /// Full antisymmetric component matrix at a point (degree 2).
            pub fn matrix_at(&self, point: &[f64]) -> DMatrix<f64> {
                assert_eq!(self.degree, 2);
                let n = self.chart.dim();
                let mut m = DMatrix::zeros(n, n);
                for (idx, p) in &self.comps {
                    let v = p.to_f64().eval(point);
                    m[(idx[0], idx[1])] = v;
                    m[(idx[1], idx[0])] = -v;
                }
                m
            }
        }
    };
}

alt_tensor_impl!(DiffForm);
alt_tensor_impl!(MultiVector);

impl<C: Scalar> DiffForm<C> {
    pub fn one_form(chart: &Arc<Chart>, comps: Vec<Poly<C>>) -> Self {
        assert_eq!(comps.len(), chart.dim());
        let mut out = Self::zero(chart, 1);
        for (i, p) in comps.into_iter().enumerate() {
            out.add_comp(vec![i], p);
        }
        out
    }

    pub fn basis(chart: &Arc<Chart>, i: usize) -> Self {
        let mut out = Self::zero(chart, 1);
        out.add_comp(vec![i], Poly::one(chart));
        out
    }

    pub fn one_form_comps(&self) -> Vec<Poly<C>> {
        assert_eq!(self.degree, 1);
        (0..self.chart.dim()).map(|i| self.comp(&[i])).collect()
    }

    /// Exterior derivative.
    pub fn d(&self) -> Self {
        let mut out = Self::zero(&self.chart, self.degree + 1);
        for (idx, p) in &self.comps {
            for k in 0..self.chart.dim() {
                let dp = p.diff(k);
                if dp.is_zero() {
                    continue;
                }
                let mut new_idx = vec![k];
                new_idx.extend_from_slice(idx);
                out.add_comp(new_idx, dp);
            }
        }
        out
    }

    /// Interior product with a vector field, contracting the first slot.
    pub fn interior(&self, x: &VectorField<C>) -> Self {
        same_chart(&self.chart, x.chart()).unwrap();
        assert!(self.degree >= 1, "interior product needs degree >= 1");
        let mut out = Self::zero(&self.chart, self.degree - 1);
        for (idx, p) in &self.comps {
            for (pos, &i) in idx.iter().enumerate() {
                let xi = x.comp(i);
                if xi.is_zero() {
                    continue;
                }
                let rest: Vec<usize> = idx
                    .iter()
                    .enumerate()
                    .filter(|&(q, _)| q != pos)
                    .map(|(_, &v)| v)
                    .collect();
                let term = signed(p.mul(xi), if pos % 2 == 0 { 1 } else { -1 });
                out.add_comp(rest, term);
            }
        }
        out
    }

    /// Cartan formula: L_X = d(i_X -) + i_X(d -).
    pub fn lie_derivative(&self, x: &VectorField<C>) -> Self {
        if self.degree == 0 {
            let mut out = Self::zero(&self.chart, 0);
            let f = self.comp(&[]);
            out.add_comp(Vec::new(), x.apply(&f));
            return out;
        }
        self.interior(x).d().add(&self.d().interior(x))
    }

    /// Pairing with an equal-degree multivector.
    pub fn pair(&self, p: &MultiVector<C>) -> Poly<C> {
        same_chart(&self.chart, &p.chart).unwrap();
        assert_eq!(self.degree, p.degree, "pairing needs equal degrees");
        let mut acc = Poly::zero(&self.chart);
        for (idx, a) in &self.comps {
            if let Some(b) = p.comps.get(idx) {
                acc = acc.add(&a.mul(b));
            }
        }
        acc
    }

    pub fn pullback(&self, map: &PolyMap<C>) -> Result<Self, AlgebraError> {
        self.pullback_impl(map, None)
    }

    pub fn pullback_trunc(
        &self,
        map: &PolyMap<C>,
        trunc: &Trunc,
    ) -> Result<Self, AlgebraError> {
        self.pullback_impl(map, Some(trunc))
    }

    fn pullback_impl(
        &self,
        map: &PolyMap<C>,
        trunc: Option<&Trunc>,
    ) -> Result<Self, AlgebraError> {
        same_chart(&self.chart, map.target()).unwrap();
        let src = map.source();
        // Differentials of the map components, as one-forms on the source.
        let jac = map.jacobian();
        let dphi: Vec<DiffForm<C>> = (0..self.chart.dim())
            .map(|mu| DiffForm::one_form(src, jac[mu].clone()))
            .collect();
        let mut out = DiffForm::zero(src, self.degree);
        for (idx, p) in &self.comps {
            let coeff = match trunc {
                Some(t) => p.substitute_trunc(map.comps(), t)?,
                None => p.substitute(map.comps())?,
            };
            let mut factor = DiffForm::scalar(src, coeff);
            for &mu in idx {
                factor = factor.wedge(&dphi[mu]);
                if let Some(t) = trunc {
                    factor = factor.truncate(t);
                }
            }
            out = out.add(&factor);
        }
        Ok(out)
    }

    pub fn truncate(&self, trunc: &Trunc) -> Self {
        let mut out = Self::zero(&self.chart, self.degree);
        for (idx, p) in &self.comps {
            let q = p.truncate(trunc);
            if !q.is_zero() {
                out.comps.insert(idx.clone(), q);
            }
        }
        out
    }
}

impl<C: Scalar> MultiVector<C> {
    pub fn to_vector_field(&self) -> VectorField<C> {
        assert_eq!(self.degree, 1);
        let comps = (0..self.chart.dim()).map(|i| self.comp(&[i])).collect();
        VectorField::new(&self.chart, comps)
    }

    /// Contraction of a bivector with a one-form in the first slot:
    /// (pi^sharp alpha)^nu = sum_mu alpha_mu pi^{mu nu}.
    pub fn sharp(&self, alpha: &DiffForm<C>) -> VectorField<C> {
        assert_eq!(self.degree, 2, "sharp needs a bivector");
        assert_eq!(alpha.degree(), 1, "sharp contracts a one-form");
        same_chart(&self.chart, alpha.chart()).unwrap();
        let n = self.chart.dim();
        let mut comps = vec![Poly::zero(&self.chart); n];
        for nu in 0..n {
            for mu in 0..n {
                if mu == nu {
                    continue;
                }
                let pi = self.comp(&[mu, nu]);
                if pi.is_zero() {
                    continue;
                }
                let a = alpha.comp(&[mu]);
                if a.is_zero() {
                    continue;
                }
                comps[nu] = comps[nu].add(&a.mul(&pi));
            }
        }
        VectorField::new(&self.chart, comps)
    }

    /// Bivector evaluated on two one-forms.
    pub fn eval2(&self, alpha: &DiffForm<C>, beta: &DiffForm<C>) -> Poly<C> {
        let sharp = self.sharp(alpha);
        let mut acc = Poly::zero(&self.chart);
        for (i, b) in beta.one_form_comps().iter().enumerate() {
            if !b.is_zero() {
                acc = acc.add(&sharp.comp(i).mul(b));
            }
        }
        acc
    }

    /// Schouten bracket [self, other]; degree (p + q - 1).
    pub fn schouten(&self, other: &Self) -> Self {
        same_chart(&self.chart, &other.chart).unwrap();
        let p = self.degree;
        let q = other.degree;
        let out_degree = (p + q).saturating_sub(1);
        let mut out = Self::zero(&self.chart, out_degree);
        if p == 0 && q == 0 {
            return out;
        }
        for (ia, fa) in &self.comps {
            for (ib, fb) in &other.comps {
                let term = schouten_terms(&self.chart, fa, ia, fb, ib);
                out = out.add(&term);
            }
        }
        out
    }

    /// L_X P = [X, P] for a vector field X.
    pub fn lie_derivative(&self, x: &VectorField<C>) -> Self {
        x.to_multivector().schouten(self)
    }

    pub fn truncate(&self, trunc: &Trunc) -> Self {
        let mut out = Self::zero(&self.chart, self.degree);
        for (idx, p) in &self.comps {
            let q = p.truncate(trunc);
            if !q.is_zero() {
                out.comps.insert(idx.clone(), q);
            }
        }
        out
    }

    /// Pullback of a bivector along a (jet of a) diffeomorphism: transform by
    /// the inverse Jacobian and compose with the map, all in the truncated
    /// ring.
    pub fn pullback_bivector_trunc(
        &self,
        map: &PolyMap<C>,
        trunc: &Trunc,
    ) -> Result<Self, AlgebraError> {
        assert_eq!(self.degree, 2);
        same_chart(&self.chart, map.target()).unwrap();
        let src = map.source();
        assert_eq!(src.dim(), self.chart.dim(), "needs equal dimensions");
        let n = src.dim();
        let jac = map.jacobian();
        let jac_inv = polymat::invert_trunc(&jac, trunc)?;
        // components of pi composed with the map
        let mut out = Self::zero(src, 2);
        for mu in 0..n {
            for nu in (mu + 1)..n {
                let pi = self.comp(&[mu, nu]);
                if pi.is_zero() {
                    continue;
                }
                let pi_src = pi.substitute_trunc(map.comps(), trunc)?;
                for a in 0..n {
                    for b in 0..n {
                        if a == b {
                            continue;
                        }
                        // (J^-1)^a_mu (J^-1)^b_nu pi^{mu nu}, both orders of (mu, nu)
                        let w = jac_inv[a][mu].mul_trunc(&jac_inv[b][nu], trunc);
                        let w2 = jac_inv[a][nu].mul_trunc(&jac_inv[b][mu], trunc);
                        let coeff = w.sub(&w2).mul_trunc(&pi_src, trunc);
                        out.add_comp(vec![a, b], coeff.scale(&(C::one() / (C::one() + C::one()))));
                    }
                }
            }
        }
        Ok(out)
    }
}

/// One Schouten-bracket term [fa d_Ia, fb d_Ib], by peeling factors.
fn schouten_terms<C: Scalar>(
    chart: &Arc<Chart>,
    fa: &Poly<C>,
    ia: &[usize],
    fb: &Poly<C>,
    ib: &[usize],
) -> MultiVector<C> {
    let p = ia.len();
    let q = ib.len();
    if p == 0 && q == 0 {
        return MultiVector::zero(chart, 0);
    }
    if p == 0 {
        // [f, Q] = -(-1)^{(q-1)(0-1)} [Q, f] = -(-1)^{q-1}[Q, f]
        let swapped = schouten_terms(chart, fb, ib, fa, ia);
        let sign = if (q - 1) % 2 == 0 { -1 } else { 1 };
        return if sign < 0 { swapped.neg() } else { swapped };
    }
    if p == 1 {
        return schouten_vec_term(chart, fa, ia[0], fb, ib);
    }
    // P = (fa d_{i0}) ^ d_{I'}; use
    // [P1 ^ P2, R] = P1 ^ [P2, R] + (-1)^{(r-1) p2} [P1, R] ^ P2
    let head = ia[0];
    let tail = &ia[1..];
    let one = Poly::one(chart);
    let head_mv = {
        let mut mv = MultiVector::zero(chart, 1);
        mv.add_comp(vec![head], fa.clone());
        mv
    };
    let tail_mv = MultiVector::from_comps(chart, tail.len(), vec![(tail.to_vec(), one.clone())]);
    let term1 = head_mv.wedge(&schouten_terms(chart, &one, tail, fb, ib));
    let bracket_head = schouten_vec_term(chart, fa, head, fb, ib);
    let sign = if (q + 1) * tail.len() % 2 == 0 { 1 } else { -1 };
    // (r-1) p2 with r = q, p2 = p - 1; (q - 1)(p - 1) mod 2 == (q+1)(p-1) mod 2
    let term2 = bracket_head.wedge(&tail_mv);
    let term2 = if sign < 0 { term2.neg() } else { term2 };
    term1.add(&term2)
}

/// [f d_i, g d_J] for a single vector-field factor on the left.
fn schouten_vec_term<C: Scalar>(
    chart: &Arc<Chart>,
    f: &Poly<C>,
    i: usize,
    g: &Poly<C>,
    jb: &[usize],
) -> MultiVector<C> {
    if jb.is_empty() {
        // [X, g] = X(g)
        let mut out = MultiVector::zero(chart, 0);
        out.add_comp(Vec::new(), f.mul(&g.diff(i)));
        return out;
    }
    if jb.len() == 1 {
        // [f d_i, g d_j] = f (d_i g) d_j - g (d_j f) d_i
        let mut out = MultiVector::zero(chart, 1);
        out.add_comp(vec![jb[0]], f.mul(&g.diff(i)));
        out.add_comp(vec![i], g.mul(&f.diff(jb[0])).neg());
        return out;
    }
    // [X, Q1 ^ Q2] = [X, Q1] ^ Q2 + Q1 ^ [X, Q2]  (p = 1 kills the sign)
    let one = Poly::one(chart);
    let head = jb[0];
    let tail = &jb[1..];
    let head_mv = MultiVector::from_comps(chart, 1, vec![(vec![head], g.clone())]);
    let tail_mv = MultiVector::from_comps(chart, tail.len(), vec![(tail.to_vec(), one.clone())]);
    let term1 = schouten_vec_term(chart, f, i, g, &[head]).wedge(&tail_mv);
    let term2 = head_mv.wedge(&schouten_vec_term(chart, f, i, &one, tail));
    term1.add(&term2)
}

/// Polynomial map between charts; one component per target coordinate, each
/// a scalar field on the source chart.
#[derive(Debug, Clone, PartialEq)]
pub struct PolyMap<C: Scalar> {
    source: Arc<Chart>,
    target: Arc<Chart>,
    comps: Vec<Poly<C>>,
}

impl<C: Scalar> PolyMap<C> {
    pub fn new(source: &Arc<Chart>, target: &Arc<Chart>, comps: Vec<Poly<C>>) -> Self {
        assert_eq!(comps.len(), target.dim());
        for p in &comps {
            same_chart(source, p.chart()).expect("map component chart mismatch");
        }
        PolyMap {
            source: source.clone(),
            target: target.clone(),
            comps,
        }
    }

    pub fn identity(chart: &Arc<Chart>) -> Self {
        let comps = (0..chart.dim()).map(|i| Poly::var(chart, i)).collect();
        PolyMap {
            source: chart.clone(),
            target: chart.clone(),
            comps,
        }
    }

    pub fn source(&self) -> &Arc<Chart> {
        &self.source
    }

    pub fn target(&self) -> &Arc<Chart> {
        &self.target
    }

    pub fn comps(&self) -> &[Poly<C>] {
        &self.comps
    }

    pub fn comp(&self, i: usize) -> &Poly<C> {
        &self.comps[i]
    }

    /// f on the target pulls back to f o map on the source.
    pub fn pullback_scalar(&self, f: &Poly<C>) -> Result<Poly<C>, AlgebraError> {
        same_chart(self.target(), f.chart()).unwrap();
        f.substitute(&self.comps)
    }

    pub fn pullback_scalar_trunc(
        &self,
        f: &Poly<C>,
        trunc: &Trunc,
    ) -> Result<Poly<C>, AlgebraError> {
        same_chart(self.target(), f.chart()).unwrap();
        f.substitute_trunc(&self.comps, trunc)
    }

    /// outer o self, truncated in the source variables.
    pub fn compose_trunc(
        &self,
        outer: &PolyMap<C>,
        trunc: &Trunc,
    ) -> Result<PolyMap<C>, AlgebraError> {
        same_chart(outer.source(), self.target()).unwrap();
        let comps = outer
            .comps
            .iter()
            .map(|p| p.substitute_trunc(&self.comps, trunc))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(PolyMap {
            source: self.source.clone(),
            target: outer.target.clone(),
            comps,
        })
    }

    /// J[mu][a] = d comps[mu] / d source_a.
    pub fn jacobian(&self) -> polymat::PolyMat<C> {
        self.comps
            .iter()
            .map(|p| (0..self.source.dim()).map(|a| p.diff(a)).collect())
            .collect()
    }

    pub fn eval_f64(&self, point: &[f64]) -> Vec<f64> {
        self.comps
            .iter()
            .map(|p| p.to_f64().eval(point))
            .collect()
    }

    pub fn jacobian_at(&self, point: &[f64]) -> DMatrix<f64> {
        let n = self.target.dim();
        let m = self.source.dim();
        let mut out = DMatrix::zeros(n, m);
        for mu in 0..n {
            for a in 0..m {
                out[(mu, a)] = self.comps[mu].diff(a).to_f64().eval(point);
            }
        }
        out
    }

    pub fn truncate(&self, trunc: &Trunc) -> Self {
        PolyMap {
            source: self.source.clone(),
            target: self.target.clone(),
            comps: self.comps.iter().map(|p| p.truncate(trunc)).collect(),
        }
    }

    /// Inverse jet of a map that is the identity plus terms of positive
    /// degree in the truncation variables. Verified by composing both ways.
    pub fn jet_inverse(&self, trunc: &Trunc) -> Result<PolyMap<C>, AlgebraError> {
        same_chart(self.source(), self.target()).unwrap();
        let chart = &self.source;
        let id = PolyMap::identity(chart);
        // n = self - id must gain degree in the truncation variables
        let n_comps: Vec<Poly<C>> = self
            .comps
            .iter()
            .enumerate()
            .map(|(i, p)| p.sub(&Poly::var(chart, i)).truncate(trunc))
            .collect();
        for p in &n_comps {
            if !p.is_zero() && p.vanishing_order(&trunc.vars).unwrap_or(1) < 1 {
                return Err(AlgebraError::NotInvertible(
                    "map is not a perturbation of the identity".into(),
                ));
            }
        }
        let mut psi = id.clone();
        let max_sweeps = 4 * (trunc.order + 2);
        let mut converged = false;
        for _ in 0..max_sweeps {
            // psi <- id - n o psi
            let next: Vec<Poly<C>> = n_comps
                .iter()
                .enumerate()
                .map(|(i, p)| {
                    Ok(Poly::var(chart, i).sub(&p.substitute_trunc(&psi.comps, trunc)?))
                })
                .collect::<Result<Vec<_>, AlgebraError>>()?;
            if next == psi.comps {
                converged = true;
                break;
            }
            psi.comps = next;
        }
        if !converged {
            return Err(AlgebraError::NoFixpoint(max_sweeps));
        }
        for (check, dir) in [
            (psi.compose_trunc(self, trunc)?, "left"),
            (self.compose_trunc(&psi, trunc)?, "right"),
        ] {
            for (i, p) in check.comps.iter().enumerate() {
                if p != &Poly::var(chart, i).truncate(trunc) {
                    return Err(AlgebraError::NotInvertible(format!(
                        "{dir} inverse check failed in component {}",
                        chart.coord(i)
                    )));
                }
            }
        }
        Ok(psi)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::Rat;
    use crate::Chart;

    fn r3() -> Arc<Chart> {
        Chart::new("m", &["x", "y", "z"]).unwrap()
    }

    fn p(c: &Arc<Chart>, s: &str) -> Poly<Rat> {
        Poly::parse(c, s).unwrap()
    }

    #[test]
    fn bracket_of_rotations() {
        let c = r3();
        let a = VectorField::new(&c, vec![p(&c, "0"), p(&c, "0"), p(&c, "0")]);
        assert!(a.is_zero());
        let c2 = Chart::new("m", &["x", "y"]).unwrap();
        let ydx = VectorField::new(&c2, vec![p(&c2, "y"), p(&c2, "0")]);
        let xdy = VectorField::new(&c2, vec![p(&c2, "0"), p(&c2, "x")]);
        let br = ydx.lie_bracket(&xdy);
        assert_eq!(br.comp(0), &p(&c2, "-x"));
        assert_eq!(br.comp(1), &p(&c2, "y"));
    }

    #[test]
    fn exterior_derivative_and_square_zero() {
        let c = Chart::new("m", &["x", "y"]).unwrap();
        let alpha = DiffForm::one_form(&c, vec![p(&c, "y^2"), p(&c, "0")]);
        let da = alpha.d();
        // d(y^2 dx) = 2y dy ^ dx = -2y dx ^ dy
        assert_eq!(da.comp(&[0, 1]), p(&c, "-2*y"));
        assert!(da.d().is_zero());
    }

    #[test]
    fn interior_product_sign() {
        let c = r3();
        let vol = DiffForm::from_comps(&c, 3, vec![(vec![0, 1, 2], Poly::one(&c))]);
        let dy = VectorField::basis(&c, 1);
        let got = vol.interior(&dy);
        // i_{d/dy}(dx^dy^dz) = -dx^dz
        assert_eq!(got.comp(&[0, 2]), p(&c, "-1"));
        assert_eq!(got.comps.len(), 1);
    }

    #[test]
    fn cartan_formula_on_samples() {
        let c = r3();
        let x = VectorField::new(&c, vec![p(&c, "y"), p(&c, "z*x"), p(&c, "1")]);
        let alpha = DiffForm::from_comps(
            &c,
            2,
            vec![
                (vec![0, 1], p(&c, "x*z")),
                (vec![1, 2], p(&c, "y")),
            ],
        );
        let lhs = alpha.lie_derivative(&x);
        let rhs = alpha.interior(&x).d().add(&alpha.d().interior(&x));
        assert_eq!(lhs, rhs);
        // and d commutes with L_X
        assert_eq!(lhs.d(), alpha.d().lie_derivative(&x));
    }

    #[test]
    fn schouten_poisson_so3_dual() {
        let c = r3();
        // pi = z dx^dy + x dy^dz + y dz^dx
        let pi = MultiVector::from_comps(
            &c,
            2,
            vec![
                (vec![0, 1], p(&c, "z")),
                (vec![1, 2], p(&c, "x")),
                (vec![2, 0], p(&c, "y")),
            ],
        );
        assert!(pi.schouten(&pi).is_zero());
    }

    #[test]
    fn schouten_matches_component_formula() {
        let c = r3();
        // pi = dx^dy + x dx^dz fails Jacobi
        let pi = MultiVector::from_comps(
            &c,
            2,
            vec![
                (vec![0, 1], Poly::one(&c)),
                (vec![0, 2], p(&c, "x")),
            ],
        );
        let br = pi.schouten(&pi);
        // independent component formula:
        // [pi,pi]^{ijk} = 2 sum_l (pi^{il} d_l pi^{jk} + pi^{jl} d_l pi^{ki}
        //                          + pi^{kl} d_l pi^{ij})
        let comp = |i: usize, j: usize| pi.comp(&[i, j]);
        let mut expect = Poly::zero(&c);
        let (i, j, k) = (0usize, 1usize, 2usize);
        for l in 0..3 {
            expect = expect
                .add(&comp(i, l).mul(&comp(j, k).diff(l)))
                .add(&comp(j, l).mul(&comp(k, i).diff(l)))
                .add(&comp(k, l).mul(&comp(i, j).diff(l)));
        }
        expect = expect.scale(&crate::scalar::rat_int(2));
        assert_eq!(br.comp(&[0, 1, 2]), expect);
        assert_eq!(br.comp(&[0, 1, 2]), p(&c, "2"));
    }

    #[test]
    fn graded_antisymmetry_of_schouten() {
        let c = r3();
        // [P, Q] = -(-1)^{(p-1)(q-1)} [Q, P] with p = 2, q = 1
        let pi = MultiVector::from_comps(
            &c,
            2,
            vec![(vec![0, 1], p(&c, "x*y")), (vec![1, 2], p(&c, "z"))],
        );
        let x = MultiVector::from_comps(&c, 1, vec![(vec![2], p(&c, "x^2"))]);
        let ab = pi.schouten(&x);
        let ba = x.schouten(&pi);
        assert_eq!(ab, ba.neg());
    }

    #[test]
    fn lie_derivative_of_vertical_plane() {
        let c = Chart::submanifold("m", &["x"], &["y1", "y2"]).unwrap();
        let e = VectorField::new(&c, vec![p(&c, "0"), p(&c, "y1"), p(&c, "y2")]);
        let plane = MultiVector::from_comps(&c, 2, vec![(vec![1, 2], Poly::one(&c))]);
        let got = plane.lie_derivative(&e);
        assert_eq!(got.comp(&[1, 2]), p(&c, "-2"));
    }

    #[test]
    fn sharp_on_rotation_invariant_form() {
        let c = r3();
        let pi = MultiVector::from_comps(
            &c,
            2,
            vec![
                (vec![0, 1], p(&c, "z")),
                (vec![1, 2], p(&c, "x")),
                (vec![2, 0], p(&c, "y")),
            ],
        );
        let alpha = DiffForm::one_form(&c, vec![p(&c, "0"), p(&c, "z"), p(&c, "-y")]);
        let v = pi.sharp(&alpha);
        assert_eq!(v.comp(0), &p(&c, "-y^2 - z^2"));
        assert_eq!(v.comp(1), &p(&c, "x*y"));
        assert_eq!(v.comp(2), &p(&c, "x*z"));
        // any sharp image annihilates its own form
        let pairing = DiffForm::one_form(&c, alpha.one_form_comps())
            .pair(&v.to_multivector());
        assert!(pairing.is_zero());
    }

    #[test]
    fn pullback_of_one_form() {
        let nu = Chart::submanifold("nu", &["x"], &["y~"]).unwrap();
        let m = Chart::submanifold("m", &["x"], &["y"]).unwrap();
        let phi = PolyMap::new(
            &nu,
            &m,
            vec![p(&nu, "x + 1/2*y~^2"), p(&nu, "y~")],
        );
        let dx = DiffForm::basis(&m, 0);
        let got = dx.pullback(&phi).unwrap();
        assert_eq!(got.comp(&[0]), Poly::one(&nu));
        assert_eq!(got.comp(&[1]), p(&nu, "y~"));
    }

    #[test]
    fn jet_inverse_of_shear() {
        let c = Chart::submanifold("m", &["x"], &["y~"]).unwrap();
        let phi = PolyMap::new(&c, &c, vec![p(&c, "x + 1/2*y~^2"), p(&c, "y~")]);
        let trunc = Trunc::new(&[1], 4);
        let inv = phi.jet_inverse(&trunc).unwrap();
        assert_eq!(inv.comp(0), &p(&c, "x - 1/2*y~^2"));
        assert_eq!(inv.comp(1), &p(&c, "y~"));
    }

    #[test]
    fn bivector_pullback_under_shear() {
        let c = Chart::submanifold("m", &["x"], &["y~"]).unwrap();
        let phi = PolyMap::new(&c, &c, vec![p(&c, "x + 1/2*y~^2"), p(&c, "y~")]);
        let pi = MultiVector::from_comps(&c, 2, vec![(vec![0, 1], Poly::one(&c))]);
        let trunc = Trunc::new(&[1], 4);
        let got = pi.pullback_bivector_trunc(&phi, &trunc).unwrap();
        assert_eq!(got, pi);
    }

    #[test]
    fn flow_of_rotation_field() {
        let c = Chart::new("m", &["x", "y"]).unwrap();
        let rot = VectorField::new(&c, vec![p(&c, "-y"), p(&c, "x")]);
        let z = rot
            .flow_point(&[1.0, 0.0], std::f64::consts::PI / 2.0, &Default::default())
            .unwrap();
        assert!(z[0].abs() < 1e-9 && (z[1] - 1.0).abs() < 1e-9);
    }
}
