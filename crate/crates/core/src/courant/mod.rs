//! Courant algebroids in a chart-local frame presentation: a trivialized
//! bundle with a constant fiber metric, anchor fields per frame element,
//! and structure functions giving the frame Dorfman brackets. The module
//! provides the standard and twisted double of the tangent bundle, action
//! algebroids of quadratic Lie algebras, gauge transformations by closed
//! two-forms, Dirac frames, restriction to a transversal, and the fiber
//! linearization at a critical point of the anchor.

use std::sync::Arc;

use nalgebra::DMatrix;

use crate::anchored::{project_to_transversal, transversal_chart};
use crate::chart::{same_chart, Chart};
use crate::error::{Error, Result};
use crate::fit::{monomial_basis, LinearFit};
use crate::flow::FlowOpts;
use crate::linalg::{self, Mat};
use crate::numeric;
use crate::poly::Poly;
use crate::scalar::Scalar;
use crate::tensor::{DiffForm, MultiVector, VectorField};

mod split;
pub use split::{
    courant_splitting, gauge_change_of_sigma, model_courant, CourantSplitResiduals,
    CourantSplitting, SigmaGauge,
};

#[derive(Debug, Clone)]
pub struct CourantOpts {
    /// Total-degree bound for fitted coefficient functions.
    pub coeff_degree: i32,
    /// Negative-exponent depth allowed on unit coordinates in fits.
    pub laurent_depth: i32,
    /// Truncation order of jets along the transversal.
    pub jet_order: usize,
    /// Step for finite-difference bracket residuals.
    pub fd_step: f64,
    pub flow: FlowOpts,
}

impl Default for CourantOpts {
    fn default() -> Self {
        CourantOpts {
            coeff_degree: 2,
            laurent_depth: 1,
            jet_order: 4,
            fd_step: 1e-4,
            flow: FlowOpts::default(),
        }
    }
}

/// A trivialized Courant algebroid over a chart: constant symmetric
/// invertible pairing `G`, one anchor field per frame element, and
/// structure functions `gamma^k_{ij}` with `[[e_i, e_j]] = gamma^k_{ij} e_k`.
/// Sections are coefficient vectors in the frame. The bracket of general
/// sections extends the frame bracket by the anchor derivation rule and
/// the pairing-compatible correction term.
#[derive(Debug, Clone)]
pub struct CourantAlgebroid<C: Scalar> {
    chart: Arc<Chart>,
    rank: usize,
    pairing: Mat<C>,
    pairing_inv: Mat<C>,
    anchor: Vec<VectorField<C>>,
    gamma: Vec<Vec<Vec<Poly<C>>>>,
    eta: Option<DiffForm<C>>,
}

fn validate_pairing<C: Scalar>(pairing: &[Vec<C>], r: usize) -> Result<Mat<C>> {
    if pairing.len() != r || pairing.iter().any(|row| row.len() != r) {
        return Err(Error::Invalid(format!(
            "pairing matrix must be {r} x {r}"
        )));
    }
    for i in 0..r {
        for j in 0..r {
            if pairing[i][j] != pairing[j][i] {
                return Err(Error::Invalid(
                    "pairing matrix must be symmetric".into(),
                ));
            }
        }
    }
    linalg::invert(pairing)
        .ok_or_else(|| Error::Invalid("pairing matrix must be invertible".into()))
}

impl<C: Scalar> CourantAlgebroid<C> {
    /// Assemble from raw frame data. Only shape and pairing validity are
    /// enforced here; run `axioms_check` to certify the structure.
    pub fn raw(
        chart: &Arc<Chart>,
        pairing: Mat<C>,
        anchor: Vec<VectorField<C>>,
        gamma: Vec<Vec<Vec<Poly<C>>>>,
    ) -> Result<Self> {
        let r = anchor.len();
        let pairing_inv = validate_pairing(&pairing, r)?;
        for a in &anchor {
            same_chart(chart, a.chart())?;
        }
        if gamma.len() != r
            || gamma
                .iter()
                .any(|m| m.len() != r || m.iter().any(|row| row.len() != r))
        {
            return Err(Error::Invalid(format!(
                "structure functions must form an {r} x {r} x {r} array"
            )));
        }
        for m in &gamma {
            for row in m {
                for p in row {
                    same_chart(chart, p.chart())?;
                }
            }
        }
        Ok(CourantAlgebroid {
            chart: chart.clone(),
            rank: r,
            pairing,
            pairing_inv,
            anchor,
            gamma,
            eta: None,
        })
    }

    /// Double of the tangent bundle twisted by a closed three-form. The
    /// frame lists coordinate fields first, then coordinate differentials;
    /// the pairing is the canonical one with `<X + a, Y + b> = a(Y) + b(X)`.
    pub fn exact(chart: &Arc<Chart>, eta: &DiffForm<C>) -> Result<Self> {
        same_chart(chart, eta.chart())?;
        if eta.degree() != 3 {
            return Err(Error::Invalid(
                "background form of an exact algebroid must have degree 3".into(),
            ));
        }
        if !eta.d().is_zero() {
            return Err(Error::check(
                "courant.not_closed",
                "background three-form is not closed",
            ));
        }
        let n = chart.dim();
        let r = 2 * n;
        let mut pairing = vec![vec![C::zero(); r]; r];
        for i in 0..n {
            pairing[i][n + i] = C::one();
            pairing[n + i][i] = C::one();
        }
        let mut anchor = Vec::with_capacity(r);
        for i in 0..n {
            anchor.push(VectorField::basis(chart, i));
        }
        for _ in 0..n {
            anchor.push(VectorField::zero(chart));
        }
        let mut gamma = vec![vec![vec![Poly::zero(chart); r]; r]; r];
        for i in 0..n {
            for j in 0..n {
                let contracted = eta
                    .interior(&VectorField::basis(chart, j))
                    .interior(&VectorField::basis(chart, i));
                for k in 0..n {
                    let c = contracted.comp(&[k]);
                    if !c.is_zero() {
                        gamma[n + k][i][j] = c;
                    }
                }
            }
        }
        let pairing_inv = validate_pairing(&pairing, r)?;
        Ok(CourantAlgebroid {
            chart: chart.clone(),
            rank: r,
            pairing,
            pairing_inv,
            anchor,
            gamma,
            eta: Some(eta.clone()),
        })
    }

    /// Untwisted double of the tangent bundle.
    pub fn standard(chart: &Arc<Chart>) -> Result<Self> {
        Self::exact(chart, &DiffForm::zero(chart, 3))
    }

    /// Action algebroid of a quadratic Lie algebra: constant structure
    /// `c^k_{ij}`, an invariant metric, and action fields representing the
    /// bracket. Stabilizer coisotropy is checked at the sample points.
    pub fn action(
        chart: &Arc<Chart>,
        structure: &[Mat<C>],
        metric: Mat<C>,
        fields: Vec<VectorField<C>>,
        samples: &[Vec<f64>],
    ) -> Result<Self> {
        let r = fields.len();
        if structure.len() != r
            || structure
                .iter()
                .any(|m| m.len() != r || m.iter().any(|row| row.len() != r))
        {
            return Err(Error::Invalid(format!(
                "structure constants must form an {r} x {r} x {r} array"
            )));
        }
        let metric_inv = validate_pairing(&metric, r)?;
        let c = |k: usize, i: usize, j: usize| structure[k][i][j].clone();
        for k in 0..r {
            for i in 0..r {
                for j in 0..r {
                    if c(k, i, j) + c(k, j, i) != C::zero() {
                        return Err(Error::Invalid(
                            "structure constants are not antisymmetric".into(),
                        ));
                    }
                }
            }
        }
        for i in 0..r {
            for j in 0..r {
                for k in 0..r {
                    for l in 0..r {
                        let mut acc = C::zero();
                        for m in 0..r {
                            acc = acc
                                + c(m, i, j) * c(l, m, k)
                                + c(m, j, k) * c(l, m, i)
                                + c(m, k, i) * c(l, m, j);
                        }
                        if acc != C::zero() {
                            return Err(Error::Invalid(
                                "structure constants do not satisfy the Jacobi identity".into(),
                            ));
                        }
                    }
                }
            }
        }
        // ad-invariance of the metric: <[e_i, e_j], e_k> + <e_j, [e_i, e_k]> = 0.
        for i in 0..r {
            for j in 0..r {
                for k in 0..r {
                    let mut acc = C::zero();
                    for l in 0..r {
                        acc = acc + c(l, i, j) * metric[l][k].clone()
                            + c(l, i, k) * metric[j][l].clone();
                    }
                    if acc != C::zero() {
                        return Err(Error::Invalid(
                            "metric is not invariant under the structure constants".into(),
                        ));
                    }
                }
            }
        }
        for f in &fields {
            same_chart(chart, f.chart())?;
        }
        // The fields must represent the bracket.
        for i in 0..r {
            for j in 0..r {
                let mut expect = VectorField::zero(chart);
                for k in 0..r {
                    let coeff = c(k, i, j);
                    if coeff != C::zero() {
                        expect = expect.add(&fields[k].scale(&Poly::constant(chart, coeff)));
                    }
                }
                if !fields[i].lie_bracket(&fields[j]).sub(&expect).is_zero() {
                    return Err(Error::Invalid(format!(
                        "action fields do not represent the bracket on pair ({i},{j})"
                    )));
                }
            }
        }
        // Coisotropy of stabilizers: the composite anchor-coanchor matrix
        // vanishes where the algebroid is defined; checked pointwise.
        let n = chart.dim();
        for p in samples {
            for mu in 0..n {
                for nu in 0..n {
                    let mut acc = 0.0;
                    for j in 0..r {
                        for l in 0..r {
                            let gjl = metric_inv[j][l].to_float();
                            if gjl == 0.0 {
                                continue;
                            }
                            let aj = fields[j].comp(mu).to_f64().eval(p);
                            let al = fields[l].comp(nu).to_f64().eval(p);
                            acc += aj * gjl * al;
                        }
                    }
                    if acc.abs() > 1e-9 {
                        return Err(Error::check(
                            "courant.not_coisotropic",
                            format!(
                                "stabilizer at sample {p:?} is not coisotropic: \
                                 composite anchor entry ({mu},{nu}) = {acc:.3e}"
                            ),
                        ));
                    }
                }
            }
        }
        let gamma = structure
            .iter()
            .map(|m| {
                m.iter()
                    .map(|row| {
                        row.iter()
                            .map(|v| Poly::constant(chart, v.clone()))
                            .collect()
                    })
                    .collect()
            })
            .collect();
        Ok(CourantAlgebroid {
            chart: chart.clone(),
            rank: r,
            pairing: metric,
            pairing_inv: metric_inv,
            anchor: fields,
            gamma,
            eta: None,
        })
    }

    pub fn chart(&self) -> &Arc<Chart> {
        &self.chart
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn pairing(&self) -> &Mat<C> {
        &self.pairing
    }

    pub fn pairing_inv(&self) -> &Mat<C> {
        &self.pairing_inv
    }

    pub fn frame_anchor(&self, i: usize) -> &VectorField<C> {
        &self.anchor[i]
    }

    pub fn structure_fn(&self, k: usize, i: usize, j: usize) -> &Poly<C> {
        &self.gamma[k][i][j]
    }

    /// The background three-form, when built as an exact algebroid.
    pub fn exact_background(&self) -> Option<&DiffForm<C>> {
        self.eta.as_ref()
    }

    pub fn anchor_of(&self, s: &[Poly<C>]) -> VectorField<C> {
        let mut out = VectorField::zero(&self.chart);
        for (i, coeff) in s.iter().enumerate() {
            if !coeff.is_zero() {
                out = out.add(&self.anchor[i].scale(coeff));
            }
        }
        out
    }

    pub fn pairing_of(&self, s: &[Poly<C>], t: &[Poly<C>]) -> Poly<C> {
        let mut acc = Poly::zero(&self.chart);
        for i in 0..self.rank {
            if s[i].is_zero() {
                continue;
            }
            for j in 0..self.rank {
                let g = &self.pairing[i][j];
                if g.is_zero() || t[j].is_zero() {
                    continue;
                }
                acc = acc.add(&s[i].mul(&t[j]).scale(g));
            }
        }
        acc
    }

    /// Metric-dual differential of a function: the section pairing as
    /// `<Df, tau> = a(tau) f` for every section.
    pub fn d_scalar(&self, f: &Poly<C>) -> Vec<Poly<C>> {
        (0..self.rank)
            .map(|l| {
                let mut acc = Poly::zero(&self.chart);
                for j in 0..self.rank {
                    let g = &self.pairing_inv[l][j];
                    if g.is_zero() {
                        continue;
                    }
                    let df = self.anchor[j].apply(f);
                    if !df.is_zero() {
                        acc = acc.add(&df.scale(g));
                    }
                }
                acc
            })
            .collect()
    }

    /// Transpose of the anchor through the pairing, applied to a one-form.
    pub fn a_star(&self, mu: &DiffForm<C>) -> Vec<Poly<C>> {
        assert_eq!(mu.degree(), 1, "coanchor takes a one-form");
        let comps = mu.one_form_comps();
        let n = self.chart.dim();
        (0..self.rank)
            .map(|l| {
                let mut acc = Poly::zero(&self.chart);
                for j in 0..self.rank {
                    let g = &self.pairing_inv[l][j];
                    if g.is_zero() {
                        continue;
                    }
                    let mut paired = Poly::zero(&self.chart);
                    for nu in 0..n {
                        if !comps[nu].is_zero() {
                            paired = paired.add(&comps[nu].mul(self.anchor[j].comp(nu)));
                        }
                    }
                    if !paired.is_zero() {
                        acc = acc.add(&paired.scale(g));
                    }
                }
                acc
            })
            .collect()
    }

    /// Dorfman bracket of two sections given by frame coefficients.
    pub fn dorfman(&self, s: &[Poly<C>], t: &[Poly<C>]) -> Vec<Poly<C>> {
        let r = self.rank;
        let chart = &self.chart;
        let a_s = self.anchor_of(s);
        let a_t = self.anchor_of(t);
        // Pairing-weighted right factor, used by the correction term.
        let gt: Vec<Poly<C>> = (0..r)
            .map(|i| {
                let mut acc = Poly::zero(chart);
                for j in 0..r {
                    let g = &self.pairing[i][j];
                    if !g.is_zero() && !t[j].is_zero() {
                        acc = acc.add(&t[j].scale(g));
                    }
                }
                acc
            })
            .collect();
        let inner: Vec<Poly<C>> = (0..r)
            .map(|l| {
                let mut acc = Poly::zero(chart);
                for i in 0..r {
                    if gt[i].is_zero() {
                        continue;
                    }
                    let ds = self.anchor[l].apply(&s[i]);
                    if !ds.is_zero() {
                        acc = acc.add(&ds.mul(&gt[i]));
                    }
                }
                acc
            })
            .collect();
        (0..r)
            .map(|k| {
                let mut acc = Poly::zero(chart);
                for i in 0..r {
                    if s[i].is_zero() {
                        continue;
                    }
                    for j in 0..r {
                        let g = &self.gamma[k][i][j];
                        if g.is_zero() || t[j].is_zero() {
                            continue;
                        }
                        acc = acc.add(&g.mul(&s[i]).mul(&t[j]));
                    }
                }
                acc = acc.add(&a_s.apply(&t[k]));
                acc = acc.sub(&a_t.apply(&s[k]));
                for l in 0..r {
                    let g = &self.pairing_inv[k][l];
                    if !g.is_zero() && !inner[l].is_zero() {
                        acc = acc.add(&inner[l].scale(g));
                    }
                }
                acc
            })
            .collect()
    }

    /// Split a section of an exact algebroid into its vector field and
    /// one-form parts.
    pub fn exact_parts(&self, s: &[Poly<C>]) -> (VectorField<C>, DiffForm<C>) {
        assert!(self.eta.is_some(), "exact_parts needs an exact algebroid");
        let n = self.chart.dim();
        let x = VectorField::new(&self.chart, s[..n].to_vec());
        let alpha = DiffForm::one_form(&self.chart, s[n..].to_vec());
        (x, alpha)
    }

    /// Frame coefficients of a vector field plus one-form section.
    pub fn exact_section(&self, x: &VectorField<C>, alpha: &DiffForm<C>) -> Vec<Poly<C>> {
        assert!(self.eta.is_some(), "exact_section needs an exact algebroid");
        let mut out: Vec<Poly<C>> = x.comps().to_vec();
        out.extend(alpha.one_form_comps());
        out
    }

    /// Dorfman bracket on an exact algebroid computed through Cartan
    /// calculus, as an independent route to the frame formula.
    pub fn dorfman_cartan(&self, s: &[Poly<C>], t: &[Poly<C>]) -> Vec<Poly<C>> {
        let eta = self.eta.as_ref().expect("Cartan route needs an exact algebroid");
        let (x1, a1) = self.exact_parts(s);
        let (x2, a2) = self.exact_parts(t);
        let x = x1.lie_bracket(&x2);
        let form = a2
            .lie_derivative(&x1)
            .sub(&a1.d().interior(&x2))
            .add(&eta.interior(&x2).interior(&x1));
        self.exact_section(&x, &form)
    }

    /// Frame of the graph of a bivector inside an exact algebroid: the
    /// i-th section is `pi^sharp(dx_i) + dx_i`.
    pub fn graph_frame(&self, pi: &MultiVector<C>) -> Vec<Vec<Poly<C>>> {
        assert!(self.eta.is_some(), "graph frames live in an exact algebroid");
        let n = self.chart.dim();
        (0..n)
            .map(|i| {
                let sharp = pi.sharp(&DiffForm::basis(&self.chart, i));
                let mut s: Vec<Poly<C>> = sharp.comps().to_vec();
                for j in 0..n {
                    s.push(if i == j {
                        Poly::one(&self.chart)
                    } else {
                        Poly::zero(&self.chart)
                    });
                }
                s
            })
            .collect()
    }

    /// Residual of the closed-one-form identity
    /// `[[a*(alpha), tau]] + a*(i_{a(tau)} d(alpha)) = 0`.
    pub fn closed_form_residual(&self, alpha: &DiffForm<C>, tau: &[Poly<C>]) -> Vec<Poly<C>> {
        let lhs = self.dorfman(&self.a_star(alpha), tau);
        let corr = self.a_star(&alpha.d().interior(&self.anchor_of(tau)));
        (0..self.rank).map(|k| lhs[k].add(&corr[k])).collect()
    }

    /// Gauge transformation by a closed two-form, as a frame matrix:
    /// column `j` is `e_j + a*(omega(a(e_j), .))`.
    pub fn gauge_matrix(&self, omega: &DiffForm<C>) -> Result<Vec<Vec<Poly<C>>>> {
        same_chart(&self.chart, omega.chart())?;
        if omega.degree() != 2 {
            return Err(Error::Invalid("gauge form must have degree 2".into()));
        }
        if !omega.d().is_zero() {
            return Err(Error::check(
                "courant.not_closed",
                "gauge two-form is not closed",
            ));
        }
        let r = self.rank;
        let mut m = vec![vec![Poly::zero(&self.chart); r]; r];
        for j in 0..r {
            let shift = self.a_star(&omega.interior(&self.anchor[j]));
            for l in 0..r {
                m[l][j] = if l == j {
                    shift[l].add(&Poly::one(&self.chart))
                } else {
                    shift[l].clone()
                };
            }
        }
        Ok(m)
    }

    /// Apply the gauge transformation of a closed two-form to a section.
    pub fn gauge_section(&self, omega: &DiffForm<C>, s: &[Poly<C>]) -> Result<Vec<Poly<C>>> {
        same_chart(&self.chart, omega.chart())?;
        if omega.degree() != 2 {
            return Err(Error::Invalid("gauge form must have degree 2".into()));
        }
        if !omega.d().is_zero() {
            return Err(Error::check(
                "courant.not_closed",
                "gauge two-form is not closed",
            ));
        }
        let shift = self.a_star(&omega.interior(&self.anchor_of(s)));
        Ok((0..self.rank).map(|l| s[l].add(&shift[l])).collect())
    }

    /// Certify the bracket axioms on the frame and on windows of the
    /// supplied sections: pairing invariance, the Jacobi identity, the
    /// symmetrized bracket, the derivation rule, and the vanishing of the
    /// anchor-coanchor composite. Every residual is exact; a nonzero row
    /// carries a witness.
    pub fn axioms_check(&self, sections: &[Vec<Poly<C>>]) -> AxiomsReport {
        let r = self.rank;
        let chart = &self.chart;
        let frame = |i: usize| -> Vec<Poly<C>> {
            (0..r)
                .map(|a| {
                    if a == i {
                        Poly::one(chart)
                    } else {
                        Poly::zero(chart)
                    }
                })
                .collect()
        };
        let mut pool: Vec<Vec<Poly<C>>> = (0..r).map(frame).collect();
        pool.extend(sections.iter().cloned());
        let p_len = pool.len();

        let max_abs = |ps: &[Poly<C>]| -> f64 {
            ps.iter().map(|p| p.max_abs()).fold(0.0, f64::max)
        };

        let mut inv = CheckRow::new("pairing_invariance");
        let mut jac = CheckRow::new("jacobi");
        let mut sym = CheckRow::new("symmetrized_bracket");
        let mut der = CheckRow::new("derivation");
        let mut coan = CheckRow::new("anchor_after_coanchor");

        let invariance = |sigma: &[Poly<C>], t1: &[Poly<C>], t2: &[Poly<C>], who: &str, row: &mut CheckRow| {
            let lhs = self.anchor_of(sigma).apply(&self.pairing_of(t1, t2));
            let rhs = self
                .pairing_of(&self.dorfman(sigma, t1), t2)
                .add(&self.pairing_of(t1, &self.dorfman(sigma, t2)));
            row.record(lhs.sub(&rhs).max_abs(), who);
        };
        let jacobi = |sigma: &[Poly<C>], t1: &[Poly<C>], t2: &[Poly<C>], who: &str, row: &mut CheckRow| {
            let lhs = self.dorfman(sigma, &self.dorfman(t1, t2));
            let r1 = self.dorfman(&self.dorfman(sigma, t1), t2);
            let r2 = self.dorfman(t1, &self.dorfman(sigma, t2));
            let res: Vec<Poly<C>> = (0..r)
                .map(|k| lhs[k].sub(&r1[k]).sub(&r2[k]))
                .collect();
            row.record(max_abs(&res), who);
        };

        // Exhaustive frame tuples carry the structure-level content.
        if r * r * r <= 1000 {
            for i in 0..r {
                for j in 0..r {
                    for k in 0..r {
                        let (fi, fj, fk) = (frame(i), frame(j), frame(k));
                        invariance(&fi, &fj, &fk, &format!("frame triple ({i},{j},{k})"), &mut inv);
                        jacobi(&fi, &fj, &fk, &format!("frame triple ({i},{j},{k})"), &mut jac);
                    }
                }
            }
        }
        for t in 0..p_len {
            let s0 = pool[t].clone();
            let s1 = pool[(t + 1) % p_len].clone();
            let s2 = pool[(t + 2) % p_len].clone();
            invariance(&s0, &s1, &s2, &format!("window at {t}"), &mut inv);
            jacobi(&s0, &s1, &s2, &format!("window at {t}"), &mut jac);

            let b12 = self.dorfman(&s0, &s1);
            let b21 = self.dorfman(&s1, &s0);
            let dd = self.d_scalar(&self.pairing_of(&s0, &s1));
            let res: Vec<Poly<C>> = (0..r)
                .map(|k| b12[k].add(&b21[k]).sub(&dd[k]))
                .collect();
            sym.record(max_abs(&res), &format!("pair at {t}"));

            let mut f = Poly::zero(chart);
            for v in 0..chart.dim() {
                f = f.add(&Poly::var(chart, v));
            }
            f = f.add(&s2[0]);
            let scaled: Vec<Poly<C>> = s1.iter().map(|p| p.mul(&f)).collect();
            let lhs = self.dorfman(&s0, &scaled);
            let br = self.dorfman(&s0, &s1);
            let af = self.anchor_of(&s0).apply(&f);
            let res: Vec<Poly<C>> = (0..r)
                .map(|k| lhs[k].sub(&br[k].mul(&f)).sub(&af.mul(&s1[k])))
                .collect();
            der.record(max_abs(&res), &format!("pair at {t}"));
        }

        // a composed with its pairing transpose vanishes as a polynomial
        // matrix, independent of any choice of sections.
        let n = chart.dim();
        for mu in 0..n {
            for nu in 0..n {
                let mut acc = Poly::zero(chart);
                for j in 0..r {
                    for l in 0..r {
                        let g = &self.pairing_inv[j][l];
                        if g.is_zero() {
                            continue;
                        }
                        let prod = self.anchor[j].comp(mu).mul(self.anchor[l].comp(nu));
                        if !prod.is_zero() {
                            acc = acc.add(&prod.scale(g));
                        }
                    }
                }
                coan.record(acc.max_abs(), &format!("component ({mu},{nu})"));
            }
        }

        AxiomsReport {
            rows: vec![inv, jac, sym, der, coan],
        }
    }

    /// Check a candidate Dirac frame: exact Lagrangian pairings, full
    /// half-rank at the samples, and involutivity of the span there.
    pub fn dirac_check(
        &self,
        frame: &[Vec<Poly<C>>],
        samples: &[Vec<f64>],
    ) -> Result<DiracReport> {
        let r = self.rank;
        if r % 2 != 0 || frame.len() != r / 2 {
            return Err(Error::Invalid(format!(
                "a Dirac frame over a rank {r} algebroid needs {} sections",
                r / 2
            )));
        }
        let half = r / 2;
        let mut lag = CheckRow::new("lagrangian_pairing");
        for i in 0..half {
            for j in i..half {
                let p = self.pairing_of(&frame[i], &frame[j]);
                lag.record(p.max_abs(), &format!("pair ({i},{j})"));
            }
        }
        let frame_num: Vec<Vec<Poly<f64>>> = frame
            .iter()
            .map(|s| s.iter().map(|p| p.to_f64()).collect())
            .collect();
        let mut rank_row = CheckRow::new("pointwise_rank");
        let mut inv_row = CheckRow::new("involutivity");
        for p in samples {
            let mut cols = DMatrix::zeros(r, half);
            for (c, s) in frame_num.iter().enumerate() {
                for a in 0..r {
                    cols[(a, c)] = s[a].eval(p);
                }
            }
            if numeric::rank(&cols, 1e-10) != half {
                rank_row.record(1.0, &format!("sample {p:?}"));
            }
            let svd = cols.clone().svd(true, true);
            for i in 0..half {
                for j in 0..half {
                    if i == j {
                        continue;
                    }
                    let br = self.dorfman(&frame[i], &frame[j]);
                    let mut v = DMatrix::zeros(r, 1);
                    for a in 0..r {
                        v[(a, 0)] = br[a].to_f64().eval(p);
                    }
                    let scale = v.iter().fold(1.0f64, |m, x| m.max(x.abs()));
                    let x = svd.solve(&v, 1e-12).map_err(|e| {
                        Error::Numeric(format!("least squares on the Dirac span failed: {e}"))
                    })?;
                    let res = (&cols * &x - &v)
                        .iter()
                        .fold(0.0f64, |m, x| m.max(x.abs()));
                    inv_row.record(res / scale, &format!("pair ({i},{j}) at {p:?}"));
                }
            }
        }
        Ok(DiracReport {
            rows: vec![lag, rank_row, inv_row],
        })
    }
}

/// One named residual with an optional witness for the worst case.
#[derive(Debug, Clone)]
pub struct CheckRow {
    pub name: String,
    pub residual: f64,
    pub witness: Option<String>,
}

impl CheckRow {
    pub(crate) fn new(name: &str) -> Self {
        CheckRow {
            name: name.to_string(),
            residual: 0.0,
            witness: None,
        }
    }

    pub(crate) fn record(&mut self, value: f64, witness: &str) {
        if value > self.residual {
            self.residual = value;
            self.witness = Some(witness.to_string());
        }
    }
}

#[derive(Debug, Clone)]
pub struct AxiomsReport {
    pub rows: Vec<CheckRow>,
}

impl AxiomsReport {
    /// All axiom residuals vanish identically.
    pub fn passed(&self) -> bool {
        self.rows.iter().all(|r| r.residual == 0.0)
    }

    pub fn max_residual(&self) -> f64 {
        self.rows.iter().map(|r| r.residual).fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone)]
pub struct DiracReport {
    pub rows: Vec<CheckRow>,
}

impl DiracReport {
    /// Lagrangian rows must vanish exactly; pointwise rows up to `tol`.
    pub fn passed(&self, tol: f64) -> bool {
        self.rows.iter().all(|r| match r.name.as_str() {
            "lagrangian_pairing" => r.residual == 0.0,
            _ => r.residual <= tol,
        })
    }

    pub fn max_residual(&self) -> f64 {
        self.rows.iter().map(|r| r.residual).fold(0.0, f64::max)
    }
}

/// The isotropic complement of a coisotropic subspace determined by a
/// transverse isotropic seed: inside `C_perp + span(f1)` the output is the
/// unique Lagrangian-type complement through the midpoint construction,
/// exactly over the scalar field.
pub fn isotropic_complement<C: Scalar>(
    pairing: &[Vec<C>],
    c: &[Vec<C>],
    f1: &[Vec<C>],
) -> Result<Vec<Vec<C>>> {
    let r = pairing.len();
    validate_pairing(pairing, r)?;
    for v in c.iter().chain(f1.iter()) {
        if v.len() != r {
            return Err(Error::Invalid(
                "subspace vectors must match the pairing dimension".into(),
            ));
        }
    }
    if linalg::rank(c) != c.len() || linalg::rank(f1) != f1.len() {
        return Err(Error::Invalid(
            "subspace generators must be linearly independent".into(),
        ));
    }
    // C_perp as the nullspace of the pairing rows of C.
    let rows: Mat<C> = c.iter().map(|v| linalg::mat_vec(pairing, v)).collect();
    let c_perp = if c.is_empty() {
        linalg::identity::<C>(r)
    } else {
        linalg::nullspace(&rows)
    };
    let mut stacked = c.to_vec();
    stacked.extend(c_perp.iter().cloned());
    if linalg::rank(&stacked) != c.len() {
        return Err(Error::check(
            "courant.not_coisotropic",
            "the pairing orthogonal is not contained in the subspace",
        ));
    }
    if c.len() + f1.len() != r {
        return Err(Error::check(
            "courant.not_complementary",
            format!(
                "seed dimension {} does not complement a subspace of dimension {}",
                f1.len(),
                c.len()
            ),
        ));
    }
    let mut full = c.to_vec();
    full.extend(f1.iter().cloned());
    if linalg::rank(&full) != r {
        return Err(Error::check(
            "courant.not_complementary",
            "seed subspace meets the coisotropic subspace",
        ));
    }
    // Solve <phi(u_i), u_j> = -1/2 <u_i, u_j> for phi mapping the seed
    // into C_perp; the graph of phi is the midpoint complement.
    let q = f1.len();
    let w = &c_perp;
    let p_mat: Mat<C> = w
        .iter()
        .map(|wk| {
            f1.iter()
                .map(|uj| dot(&linalg::mat_vec(pairing, wk), uj))
                .collect()
        })
        .collect();
    let p_t = linalg::transpose(&p_mat);
    let half = C::one() / (C::one() + C::one());
    let mut out = Vec::with_capacity(q);
    for ui in f1 {
        let rhs: Vec<C> = f1
            .iter()
            .map(|uj| {
                let b = dot(&linalg::mat_vec(pairing, ui), uj);
                C::zero() - half.clone() * b
            })
            .collect();
        let x = linalg::solve(&p_t, &rhs).ok_or_else(|| {
            Error::Numeric("midpoint system for the isotropic complement is singular".into())
        })?;
        let mut f = ui.clone();
        for (k, xk) in x.iter().enumerate() {
            for a in 0..r {
                f[a] = f[a].clone() + xk.clone() * w[k][a].clone();
            }
        }
        out.push(f);
    }
    // Postconditions are exact: isotropy and complementarity.
    for i in 0..q {
        for j in 0..q {
            if dot(&linalg::mat_vec(pairing, &out[i]), &out[j]) != C::zero() {
                return Err(Error::Numeric(
                    "isotropic complement output fails isotropy".into(),
                ));
            }
        }
    }
    let mut check = c.to_vec();
    check.extend(out.iter().cloned());
    if linalg::rank(&check) != r {
        return Err(Error::Numeric(
            "isotropic complement output fails complementarity".into(),
        ));
    }
    Ok(out)
}

fn dot<C: Scalar>(a: &[C], b: &[C]) -> C {
    let mut acc = C::zero();
    for (x, y) in a.iter().zip(b) {
        acc = acc + x.clone() * y.clone();
    }
    acc
}

/// Restriction of a Courant algebroid to the transversal of its chart:
/// anchor-tangent sections modulo the pairing orthogonal, with the
/// quotient realized as an explicit subframe through the isotropic
/// complement of the fiber at the basepoint.
#[derive(Debug)]
pub struct CourantPullback<C: Scalar> {
    /// Ambient chart the algebroid was restricted from.
    pub base: Arc<Chart>,
    /// Chart of the transversal.
    pub n_chart: Arc<Chart>,
    /// Constant frame of anchor-tangent sections, in ambient coefficients.
    pub c_frame: Vec<Vec<C>>,
    /// Frame of the pairing orthogonal along the transversal, in ambient
    /// coefficients over the transversal chart.
    pub cperp_frame: Vec<Vec<Poly<C>>>,
    /// Subframe realizing the quotient, in ambient coefficients.
    pub q_frame: Vec<Vec<C>>,
    /// The restricted Courant algebroid over the transversal chart.
    pub bundle: CourantAlgebroid<C>,
}

impl<C: Scalar> CourantPullback<C> {
    /// Express the restriction of an ambient section in the quotient
    /// frame, discarding its orthogonal part.
    pub fn pull_section(&self, tau: &[Poly<C>], opts: &CourantOpts) -> Result<Vec<Poly<C>>> {
        let normal = self.base.normal().to_vec();
        let restricted: Vec<Poly<C>> = tau
            .iter()
            .map(|p| {
                project_to_transversal(&p.restrict_zero(&normal), &self.base, &self.n_chart)
            })
            .collect();
        self.pull_section_restricted(&restricted, opts)
    }

    /// Same as `pull_section` for coefficients already over the
    /// transversal chart.
    pub fn pull_section_restricted(
        &self,
        tau: &[Poly<C>],
        opts: &CourantOpts,
    ) -> Result<Vec<Poly<C>>> {
        let r = self.cperp_frame[0].len();
        let m = self.q_frame.len();
        let q = self.cperp_frame.len();
        let monos = monomial_basis::<C>(&self.n_chart, opts.coeff_degree, opts.laurent_depth);
        let n_unknowns = (m + q) * monos.len();
        let mut fit = LinearFit::new(n_unknowns);
        for a in 0..r {
            let mut contribs = Vec::with_capacity(n_unknowns);
            for e in 0..m {
                for mono in &monos {
                    contribs.push(mono.scale(&self.q_frame[e][a]));
                }
            }
            for j in 0..q {
                for mono in &monos {
                    contribs.push(mono.mul(&self.cperp_frame[j][a]));
                }
            }
            fit.equation(contribs, tau[a].clone());
        }
        let sol = fit.solve().ok_or_else(|| {
            Error::check(
                "courant.section_not_tangent",
                "section restriction is not spanned by the tangent frame and its orthogonal",
            )
        })?;
        let mut out = Vec::with_capacity(m);
        for e in 0..m {
            let mut acc = Poly::zero(&self.n_chart);
            for (mi, mono) in monos.iter().enumerate() {
                acc = acc.add(&mono.scale(&sol[e * monos.len() + mi]));
            }
            out.push(acc);
        }
        Ok(out)
    }
}

/// Restrict a Courant algebroid to the transversal of its chart. The
/// anchor must be transverse at the samples; the frame of anchor-tangent
/// sections is fitted exactly and must restrict to constants, and the
/// quotient by its pairing orthogonal is realized inside it through the
/// isotropic complement of a standard-basis seed.
pub fn transversal_pullback<C: Scalar>(
    a: &CourantAlgebroid<C>,
    samples: &[Vec<f64>],
    opts: &CourantOpts,
) -> Result<CourantPullback<C>> {
    let base = a.chart().clone();
    if !base.is_submanifold() {
        return Err(Error::Invalid(
            "restricting to a transversal needs a chart with one distinguished".into(),
        ));
    }
    if samples.is_empty() {
        return Err(Error::Invalid("transversality needs sample points".into()));
    }
    let r = a.rank();
    let normal = base.normal().to_vec();
    let q = normal.len();
    if r < 2 * q {
        return Err(Error::check(
            "courant.rank_drop",
            format!("rank {r} cannot restrict across corank {q}"),
        ));
    }
    // Transversality: the normal block of the anchor has full rank at
    // every sample.
    for p in samples {
        let mut m = DMatrix::zeros(q, r);
        for (row, &nu) in normal.iter().enumerate() {
            for j in 0..r {
                m[(row, j)] = a.frame_anchor(j).comp(nu).to_f64().eval(p);
            }
        }
        if numeric::rank(&m, 1e-10) != q {
            return Err(Error::check(
                "courant.not_transverse",
                format!("anchor is not transverse to the submanifold at sample {p:?}"),
            ));
        }
    }
    let n_chart = transversal_chart(&base)?;
    // Fit sections whose anchor is tangent to the submanifold: the normal
    // anchor components vanish along it.
    let monos = monomial_basis::<C>(&n_chart, opts.coeff_degree, opts.laurent_depth);
    let n_unknowns = r * monos.len();
    let mut fit = LinearFit::new(n_unknowns);
    for &nu in &normal {
        let mut contribs = Vec::with_capacity(n_unknowns);
        for j in 0..r {
            let restricted = project_to_transversal(
                &a.frame_anchor(j).comp(nu).restrict_zero(&normal),
                &base,
                &n_chart,
            );
            for mono in &monos {
                contribs.push(mono.mul(&restricted));
            }
        }
        fit.equation(contribs, Poly::zero(&n_chart));
    }
    let mut candidates: Vec<Vec<Poly<C>>> = fit
        .nullspace()
        .into_iter()
        .map(|lambda| {
            (0..r)
                .map(|j| {
                    let mut acc = Poly::zero(&n_chart);
                    for (mi, mono) in monos.iter().enumerate() {
                        acc = acc.add(&mono.scale(&lambda[j * monos.len() + mi]));
                    }
                    acc
                })
                .collect()
        })
        .collect();
    candidates.sort_by_key(|s: &Vec<Poly<C>>| {
        let terms: usize = s.iter().map(Poly::num_terms).sum();
        let degree: i32 = s
            .iter()
            .filter_map(|p| p.total_degree())
            .map(|d| d.abs())
            .max()
            .unwrap_or(0);
        (terms, degree)
    });
    let k = r - q;
    let p0 = &samples[0];
    let p0_t: Vec<f64> = base.transverse().iter().map(|&i| p0[i]).collect();
    let mut chosen: Vec<Vec<Poly<C>>> = Vec::with_capacity(k);
    let mut rows_num: Vec<Vec<f64>> = Vec::new();
    for cand in &candidates {
        if chosen.len() == k {
            break;
        }
        let row: Vec<f64> = cand.iter().map(|p| p.to_f64().eval(&p0_t)).collect();
        let mut trial = rows_num.clone();
        trial.push(row.clone());
        let m = DMatrix::from_fn(trial.len(), r, |i, j| trial[i][j]);
        if numeric::rank(&m, 1e-10) == trial.len() {
            rows_num.push(row);
            chosen.push(cand.clone());
        }
    }
    if chosen.len() != k {
        return Err(Error::check(
            "courant.rank_drop",
            format!(
                "found {} independent tangent sections where {k} are needed",
                chosen.len()
            ),
        ));
    }
    for p in samples {
        let pt: Vec<f64> = base.transverse().iter().map(|&i| p[i]).collect();
        let m = DMatrix::from_fn(k, r, |i, j| chosen[i][j].to_f64().eval(&pt));
        if numeric::rank(&m, 1e-10) != k {
            return Err(Error::check(
                "courant.rank_drop",
                format!("tangent frame drops rank at sample {p:?}"),
            ));
        }
    }
    // The quotient construction needs constant coefficients; the fitted
    // frame prefers them by the sort above.
    let mut c_frame: Vec<Vec<C>> = Vec::with_capacity(k);
    for s in &chosen {
        let mut row = Vec::with_capacity(r);
        for p in s.iter() {
            let c = p.constant_part();
            if !p.sub(&Poly::constant(&n_chart, c.clone())).is_zero() {
                return Err(Error::check(
                    "courant.pullback_not_constant",
                    "anchor-tangent frame is not constant along the transversal; \
                     restriction needs a constant frame",
                ));
            }
            row.push(c);
        }
        c_frame.push(row);
    }
    // Pairing orthogonal along the transversal: coanchor images of the
    // conormal differentials.
    let mut cperp_frame: Vec<Vec<Poly<C>>> = Vec::with_capacity(q);
    for &nu in &normal {
        let img = a.a_star(&DiffForm::basis(&base, nu));
        cperp_frame.push(
            img.iter()
                .map(|p| project_to_transversal(&p.restrict_zero(&normal), &base, &n_chart))
                .collect(),
        );
    }
    for p in samples {
        let pt: Vec<f64> = base.transverse().iter().map(|&i| p[i]).collect();
        let m = DMatrix::from_fn(q, r, |i, j| cperp_frame[i][j].to_f64().eval(&pt));
        if numeric::rank(&m, 1e-10) != q {
            return Err(Error::check(
                "courant.rank_drop",
                format!("pairing orthogonal drops rank at sample {p:?}"),
            ));
        }
    }
    // Quotient subframe: complete the tangent frame by standard basis
    // vectors, replace the seed by its isotropic complement, and cut the
    // tangent frame down by the complement's orthogonal.
    let mut f1: Vec<Vec<C>> = Vec::with_capacity(q);
    let mut span = c_frame.clone();
    for idx in 0..r {
        if f1.len() == q {
            break;
        }
        let mut e = vec![C::zero(); r];
        e[idx] = C::one();
        let mut trial = span.clone();
        trial.push(e.clone());
        if linalg::rank(&trial) == span.len() + 1 {
            span.push(e.clone());
            f1.push(e);
        }
    }
    let f = isotropic_complement(a.pairing(), &c_frame, &f1)?;
    let s_mat: Mat<C> = f
        .iter()
        .map(|fi| {
            c_frame
                .iter()
                .map(|cc| dot(&linalg::mat_vec(a.pairing(), fi), cc))
                .collect()
        })
        .collect();
    let coeffs = linalg::nullspace(&s_mat);
    let m_rank = k - q;
    if coeffs.len() != m_rank {
        return Err(Error::Numeric(format!(
            "quotient subframe has dimension {} instead of {m_rank}",
            coeffs.len()
        )));
    }
    let q_frame: Vec<Vec<C>> = coeffs
        .iter()
        .map(|cf| {
            let mut v = vec![C::zero(); r];
            for (ci, c) in cf.iter().enumerate() {
                for x in 0..r {
                    v[x] = v[x].clone() + c.clone() * c_frame[ci][x].clone();
                }
            }
            v
        })
        .collect();
    let g_q: Mat<C> = q_frame
        .iter()
        .map(|qc| {
            q_frame
                .iter()
                .map(|qd| dot(&linalg::mat_vec(a.pairing(), qc), qd))
                .collect()
        })
        .collect();
    validate_pairing(&g_q, m_rank)
        .map_err(|_| Error::Numeric("restricted pairing is degenerate on the quotient".into()))?;
    // Quotient anchors: tangent parts of the ambient anchors along the
    // transversal; the normal parts vanish exactly by the fit.
    let mut anchors_q: Vec<VectorField<C>> = Vec::with_capacity(m_rank);
    for qc in &q_frame {
        let mut amb = VectorField::zero(&base);
        for (x, c) in qc.iter().enumerate() {
            if !c.is_zero() {
                amb = amb.add(&a.frame_anchor(x).scale(&Poly::constant(&base, c.clone())));
            }
        }
        for &nu in &normal {
            if !amb.comp(nu).restrict_zero(&normal).is_zero() {
                return Err(Error::Numeric(
                    "quotient anchor leaks into the normal directions".into(),
                ));
            }
        }
        let comps: Vec<Poly<C>> = base
            .transverse()
            .iter()
            .map(|&i| project_to_transversal(&amb.comp(i).restrict_zero(&normal), &base, &n_chart))
            .collect();
        anchors_q.push(VectorField::new(&n_chart, comps));
    }
    // Quotient structure functions: the ambient bracket of the constant
    // subframe contracts the structure functions; fit it back into the
    // subframe modulo the orthogonal.
    let mut gamma_q = vec![vec![vec![Poly::zero(&n_chart); m_rank]; m_rank]; m_rank];
    for cidx in 0..m_rank {
        for didx in 0..m_rank {
            let mut target: Vec<Poly<C>> = Vec::with_capacity(r);
            for kk in 0..r {
                let mut acc = Poly::zero(&base);
                for i in 0..r {
                    if q_frame[cidx][i].is_zero() {
                        continue;
                    }
                    for j in 0..r {
                        if q_frame[didx][j].is_zero() {
                            continue;
                        }
                        let g = a.structure_fn(kk, i, j);
                        if g.is_zero() {
                            continue;
                        }
                        let c = q_frame[cidx][i].clone() * q_frame[didx][j].clone();
                        acc = acc.add(&g.scale(&c));
                    }
                }
                target.push(project_to_transversal(
                    &acc.restrict_zero(&normal),
                    &base,
                    &n_chart,
                ));
            }
            let monos = monomial_basis::<C>(&n_chart, opts.coeff_degree, opts.laurent_depth);
            let n_unknowns = (m_rank + q) * monos.len();
            let mut fit = LinearFit::new(n_unknowns);
            for a_idx in 0..r {
                let mut contribs = Vec::with_capacity(n_unknowns);
                for e in 0..m_rank {
                    for mono in &monos {
                        contribs.push(mono.scale(&q_frame[e][a_idx]));
                    }
                }
                for j in 0..q {
                    for mono in &monos {
                        contribs.push(mono.mul(&cperp_frame[j][a_idx]));
                    }
                }
                fit.equation(contribs, target[a_idx].clone());
            }
            let sol = fit.solve().ok_or_else(|| {
                Error::check(
                    "courant.pullback_not_closed",
                    format!(
                        "bracket of quotient frame pair ({cidx},{didx}) leaves the tangent \
                         frame and its orthogonal"
                    ),
                )
            })?;
            for e in 0..m_rank {
                let mut acc = Poly::zero(&n_chart);
                for (mi, mono) in monos.iter().enumerate() {
                    acc = acc.add(&mono.scale(&sol[e * monos.len() + mi]));
                }
                gamma_q[e][cidx][didx] = acc;
            }
        }
    }
    let bundle = CourantAlgebroid::raw(&n_chart, g_q, anchors_q, gamma_q)?;
    let report = bundle.axioms_check(&[]);
    if !report.passed() {
        return Err(Error::Numeric(format!(
            "restricted algebroid fails its own axioms, worst residual {:.3e}",
            report.max_residual()
        )));
    }
    Ok(CourantPullback {
        base,
        n_chart,
        c_frame,
        cperp_frame,
        q_frame,
        bundle,
    })
}

/// Linearize a Courant algebroid at a critical point of the anchor: the
/// fiber becomes a quadratic Lie algebra acting on the tangent chart
/// through the anchor's linearization.
pub fn linearize_critical<C: Scalar>(
    a: &CourantAlgebroid<C>,
    point: &[C],
    samples: &[Vec<f64>],
) -> Result<(CourantAlgebroid<C>, AxiomsReport)> {
    let base = a.chart();
    let n = base.dim();
    if point.len() != n {
        return Err(Error::Invalid("critical point has the wrong dimension".into()));
    }
    let r = a.rank();
    for i in 0..r {
        for mu in 0..n {
            if a.frame_anchor(i).comp(mu).eval(point) != C::zero() {
                return Err(Error::check(
                    "courant.anchor_not_critical",
                    format!("anchor field {i} does not vanish at the given point"),
                ));
            }
        }
    }
    let names: Vec<&str> = base.coords().iter().map(String::as_str).collect();
    let t_chart = Chart::new(&format!("T.{}", base.name()), &names)?;
    let structure: Vec<Mat<C>> = (0..r)
        .map(|k| {
            (0..r)
                .map(|i| {
                    (0..r)
                        .map(|j| a.structure_fn(k, i, j).eval(point))
                        .collect()
                })
                .collect()
        })
        .collect();
    let fields: Vec<VectorField<C>> = (0..r)
        .map(|i| {
            let comps: Vec<Poly<C>> = (0..n)
                .map(|mu| {
                    let mut acc = Poly::zero(&t_chart);
                    for nu in 0..n {
                        let d = a.frame_anchor(i).comp(mu).diff(nu).eval(point);
                        if d != C::zero() {
                            acc = acc.add(&Poly::var(&t_chart, nu).scale(&d));
                        }
                    }
                    acc
                })
                .collect();
            VectorField::new(&t_chart, comps)
        })
        .collect();
    let lin = CourantAlgebroid::action(&t_chart, &structure, a.pairing().clone(), fields, samples)?;
    let report = lin.axioms_check(&[]);
    if !report.passed() {
        return Err(Error::Numeric(format!(
            "linearized algebroid fails its axioms, worst residual {:.3e}",
            report.max_residual()
        )));
    }
    Ok((lin, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::{rat, rat_int, Rat};
    use crate::tensor::parse_tensor;

    fn pl(chart: &Arc<Chart>, s: &str) -> Poly<Rat> {
        Poly::parse(chart, s).unwrap()
    }

    fn vf(chart: &Arc<Chart>, s: &str) -> VectorField<Rat> {
        parse_tensor::<Rat>(chart, s)
            .unwrap()
            .into_vector_field()
            .unwrap()
    }

    fn form(chart: &Arc<Chart>, degree: usize, s: &str) -> DiffForm<Rat> {
        parse_tensor::<Rat>(chart, s)
            .unwrap()
            .into_form(degree)
            .unwrap()
    }

    fn chart3() -> Arc<Chart> {
        Chart::new("m", &["x", "y", "z"]).unwrap()
    }

    fn section(
        a: &CourantAlgebroid<Rat>,
        x: &str,
        alpha: &str,
    ) -> Vec<Poly<Rat>> {
        let chart = a.chart();
        let xf = if x == "0" {
            VectorField::zero(chart)
        } else {
            vf(chart, x)
        };
        let al = if alpha == "0" {
            DiffForm::zero(chart, 1)
        } else {
            form(chart, 1, alpha)
        };
        a.exact_section(&xf, &al)
    }

    #[test]
    fn frame_bracket_matches_cartan_route() {
        let chart = chart3();
        let a = CourantAlgebroid::<Rat>::standard(&chart).unwrap();
        let s = section(&a, "y*@x + x^2*@z", "z*dy + x*dx");
        let t = section(&a, "@y + z*@x", "x*y*dz");
        let lhs = a.dorfman(&s, &t);
        let rhs = a.dorfman_cartan(&s, &t);
        for k in 0..a.rank() {
            assert_eq!(lhs[k], rhs[k]);
        }
        // Lie derivative of a differential along a coordinate field.
        let b = a.dorfman(&section(&a, "@x", "0"), &section(&a, "0", "x*dy"));
        assert_eq!(b, section(&a, "0", "dy"));
    }

    #[test]
    fn closed_forms_are_central() {
        let chart = chart3();
        let a = CourantAlgebroid::<Rat>::standard(&chart).unwrap();
        let b = a.dorfman(&section(&a, "0", "dx"), &section(&a, "@y", "y*dx"));
        assert!(b.iter().all(Poly::is_zero));
        // The general identity behind it, for a non-closed one-form.
        let alpha = form(&chart, 1, "y^2*dx + x*z*dz");
        let tau = section(&a, "z*@y + @x", "x*dz");
        for p in a.closed_form_residual(&alpha, &tau) {
            assert!(p.is_zero());
        }
    }

    #[test]
    fn twisted_bracket_contracts_background() {
        let chart = chart3();
        let eta = form(&chart, 3, "dx^dy^dz");
        let a = CourantAlgebroid::exact(&chart, &eta).unwrap();
        let b = a.dorfman(&section(&a, "@x", "0"), &section(&a, "@y", "0"));
        assert_eq!(b, section(&a, "0", "-dz"));
        let lhs = a.dorfman(
            &section(&a, "y*@x", "z*dz"),
            &section(&a, "@z + x*@y", "dx"),
        );
        let rhs = a.dorfman_cartan(
            &section(&a, "y*@x", "z*dz"),
            &section(&a, "@z + x*@y", "dx"),
        );
        for k in 0..a.rank() {
            assert_eq!(lhs[k], rhs[k]);
        }
        let c4 = Chart::new("w", &["x", "y", "z", "u"]).unwrap();
        let open = form(&c4, 3, "u*dx^dy^dz");
        let err = CourantAlgebroid::exact(&c4, &open).unwrap_err();
        assert_eq!(err.code(), "courant.not_closed");
    }

    #[test]
    fn axioms_certify_standard_and_twisted_doubles() {
        let chart = chart3();
        let sections = |a: &CourantAlgebroid<Rat>| {
            vec![
                section(a, "y*@x + @z", "x^2*dy"),
                section(a, "@y", "z*dx + y*dz"),
                section(a, "x*@z", "dy + x*y*dx"),
            ]
        };
        let a = CourantAlgebroid::<Rat>::standard(&chart).unwrap();
        let report = a.axioms_check(&sections(&a));
        assert!(report.passed(), "standard double fails: {:?}", report.rows);
        let c4 = Chart::new("w", &["x", "y", "z", "u"]).unwrap();
        let open = form(&c4, 3, "u*dx^dy^dz");
        assert!(CourantAlgebroid::exact(&c4, &open).is_err());
        let eta = form(&chart, 3, "dx^dy^dz + x^2*dx^dy^dz");
        let tw = CourantAlgebroid::exact(&chart, &eta).unwrap();
        let report = tw.axioms_check(&sections(&tw));
        assert!(report.passed(), "twisted double fails: {:?}", report.rows);
    }

    #[test]
    fn perturbed_structure_breaks_jacobi_with_witness() {
        let chart = Chart::new("m", &["x", "y"]).unwrap();
        let good = CourantAlgebroid::<Rat>::standard(&chart).unwrap();
        let mut gamma = vec![vec![vec![Poly::zero(&chart); 4]; 4]; 4];
        for k in 0..4 {
            for i in 0..4 {
                for j in 0..4 {
                    gamma[k][i][j] = good.structure_fn(k, i, j).clone();
                }
            }
        }
        // An antisymmetric perturbation that is not a closed twist.
        gamma[2][0][1] = pl(&chart, "x");
        gamma[2][1][0] = pl(&chart, "-x");
        let bad = CourantAlgebroid::raw(
            &chart,
            good.pairing().clone(),
            (0..4).map(|i| good.frame_anchor(i).clone()).collect(),
            gamma,
        )
        .unwrap();
        let report = bad.axioms_check(&[]);
        assert!(!report.passed());
        let jac = report
            .rows
            .iter()
            .find(|r| r.name == "jacobi")
            .unwrap();
        assert!(jac.residual > 0.0);
        assert!(jac.witness.is_some());
    }

    fn eps(i: usize, j: usize, k: usize) -> i64 {
        match (i, j, k) {
            (0, 1, 2) | (1, 2, 0) | (2, 0, 1) => 1,
            (0, 2, 1) | (2, 1, 0) | (1, 0, 2) => -1,
            _ => 0,
        }
    }

    /// Structure constants of the semidirect double: rotations act on
    /// their dual by the coadjoint formula, duals commute.
    fn double_structure(chart: &Arc<Chart>) -> Vec<Mat<Rat>> {
        let mut c = vec![vec![vec![rat_int(0); 6]; 6]; 6];
        for i in 0..3 {
            for j in 0..3 {
                for k in 0..3 {
                    let v = eps(i, j, k);
                    if v != 0 {
                        c[k][i][j] = rat(v, 1);
                        c[3 + k][i][3 + j] = rat(v, 1);
                        c[3 + k][3 + j][i] = rat(-v, 1);
                    }
                }
            }
        }
        let _ = chart;
        c
    }

    fn split_metric() -> Mat<Rat> {
        let mut g = vec![vec![rat_int(0); 6]; 6];
        for i in 0..3 {
            g[i][3 + i] = rat_int(1);
            g[3 + i][i] = rat_int(1);
        }
        g
    }

    fn rotations(chart: &Arc<Chart>) -> Vec<VectorField<Rat>> {
        vec![
            vf(chart, "z*@y - y*@z"),
            vf(chart, "x*@z - z*@x"),
            vf(chart, "y*@x - x*@y"),
        ]
    }

    #[test]
    fn semidirect_double_is_a_courant_algebroid() {
        let chart = chart3();
        let samples = vec![vec![1.0, 0.2, -0.3], vec![0.5, 1.0, 0.7]];
        let mut fields = rotations(&chart);
        fields.push(vf(&chart, "@x"));
        fields.push(vf(&chart, "@y"));
        fields.push(vf(&chart, "@z"));
        let a = CourantAlgebroid::action(
            &chart,
            &double_structure(&chart),
            split_metric(),
            fields,
            &samples,
        )
        .unwrap();
        let sections = vec![
            (0..6)
                .map(|i| {
                    if i == 0 {
                        pl(&chart, "x*y")
                    } else if i == 4 {
                        pl(&chart, "z")
                    } else {
                        Poly::zero(&chart)
                    }
                })
                .collect::<Vec<_>>(),
            (0..6)
                .map(|i| {
                    if i == 2 {
                        pl(&chart, "1")
                    } else if i == 3 {
                        pl(&chart, "x^2")
                    } else {
                        Poly::zero(&chart)
                    }
                })
                .collect::<Vec<_>>(),
            (0..6)
                .map(|i| {
                    if i == 1 {
                        pl(&chart, "y")
                    } else {
                        Poly::zero(&chart)
                    }
                })
                .collect::<Vec<_>>(),
        ];
        let report = a.axioms_check(&sections);
        assert!(report.passed(), "double fails: {:?}", report.rows);
    }

    #[test]
    fn rotations_with_euclidean_metric_are_rejected() {
        let chart = chart3();
        let samples = vec![vec![1.0, 0.2, -0.3]];
        let mut c = vec![vec![vec![rat_int(0); 3]; 3]; 3];
        for i in 0..3 {
            for j in 0..3 {
                for k in 0..3 {
                    let v = eps(i, j, k);
                    if v != 0 {
                        c[k][i][j] = rat(v, 1);
                    }
                }
            }
        }
        let g = vec![
            vec![rat_int(1), rat_int(0), rat_int(0)],
            vec![rat_int(0), rat_int(1), rat_int(0)],
            vec![rat_int(0), rat_int(0), rat_int(1)],
        ];
        let err =
            CourantAlgebroid::action(&chart, &c, g, rotations(&chart), &samples).unwrap_err();
        assert_eq!(err.code(), "courant.not_coisotropic");
    }

    #[test]
    fn gauge_transformations_shift_forms_and_compose() {
        let chart = Chart::new("m", &["x", "y"]).unwrap();
        let a = CourantAlgebroid::<Rat>::standard(&chart).unwrap();
        let omega = form(&chart, 2, "dx^dy");
        let out = a.gauge_section(&omega, &section(&a, "@x", "0")).unwrap();
        assert_eq!(out, section(&a, "@x", "dy"));
        // One-forms are fixed.
        let alpha = section(&a, "0", "x*dx + dy");
        assert_eq!(a.gauge_section(&omega, &alpha).unwrap(), alpha);
        // Non-closed forms are rejected (invisible below three coordinates).
        let c3 = chart3();
        let a3 = CourantAlgebroid::<Rat>::standard(&c3).unwrap();
        let open = form(&c3, 2, "z*dx^dy");
        assert_eq!(
            a3.gauge_section(&open, &section(&a3, "@x", "0"))
                .unwrap_err()
                .code(),
            "courant.not_closed"
        );
        // Group law and exact invariance of pairing and anchor.
        let omega2 = form(&chart, 2, "2*x*dx^dy");
        let m1 = a.gauge_matrix(&omega).unwrap();
        let m2 = a.gauge_matrix(&omega2).unwrap();
        let msum = a.gauge_matrix(&omega.add(&omega2)).unwrap();
        let r = a.rank();
        for i in 0..r {
            for j in 0..r {
                let mut acc = Poly::zero(&chart);
                for l in 0..r {
                    acc = acc.add(&m2[i][l].mul(&m1[l][j]));
                }
                assert_eq!(acc, msum[i][j]);
            }
        }
        let s = section(&a, "y*@x + @y", "x^2*dx");
        let t = section(&a, "@x", "y*dy + dx");
        let gs = a.gauge_section(&omega2, &s).unwrap();
        let gt = a.gauge_section(&omega2, &t).unwrap();
        assert_eq!(a.pairing_of(&gs, &gt), a.pairing_of(&s, &t));
        assert!(a.anchor_of(&gs).sub(&a.anchor_of(&s)).is_zero());
        // Gauge by a closed form intertwines the brackets.
        let br = a.gauge_section(&omega2, &a.dorfman(&s, &t)).unwrap();
        let gbr = a.dorfman(&gs, &gt);
        for k in 0..r {
            assert_eq!(br[k], gbr[k]);
        }
    }

    #[test]
    fn dirac_frames_pass_and_nonintegrable_graphs_fail() {
        let chart = chart3();
        let a = CourantAlgebroid::<Rat>::standard(&chart).unwrap();
        let samples = vec![vec![0.3, -0.5, 0.9], vec![1.1, 0.4, -0.2]];
        // The tangent frame is Dirac.
        let tangent: Vec<Vec<Poly<Rat>>> = (0..3)
            .map(|i| section(&a, &format!("@{}", ["x", "y", "z"][i]), "0"))
            .collect();
        let report = a.dirac_check(&tangent, &samples).unwrap();
        assert!(report.passed(1e-9), "{:?}", report.rows);
        // Graph of a bivector with vanishing Schouten bracket.
        let pi = parse_tensor::<Rat>(&chart, "z*@x^@y")
            .unwrap()
            .into_multivector(2)
            .unwrap();
        assert!(pi.schouten(&pi).is_zero());
        let graph = a.graph_frame(&pi);
        let report = a.dirac_check(&graph, &samples).unwrap();
        assert!(report.passed(1e-9), "{:?}", report.rows);
        // A non-integrable graph shows up in the involutivity row, and its
        // failure is certified independently by the Schouten bracket.
        let bad = parse_tensor::<Rat>(&chart, "@x^@y - x*@x^@z")
            .unwrap()
            .into_multivector(2)
            .unwrap();
        assert!(!bad.schouten(&bad).is_zero());
        let graph = a.graph_frame(&bad);
        let report = a.dirac_check(&graph, &samples).unwrap();
        assert!(!report.passed(1e-6));
        let inv = report
            .rows
            .iter()
            .find(|r| r.name == "involutivity")
            .unwrap();
        assert!(inv.residual > 1e-3, "residual {}", inv.residual);
    }

    #[test]
    fn isotropic_complement_midpoints() {
        // Hyperbolic plane: C = span(e), seed e + f, complement f.
        let g = vec![vec![rat_int(0), rat_int(1)], vec![rat_int(1), rat_int(0)]];
        let c = vec![vec![rat_int(1), rat_int(0)]];
        let f1 = vec![vec![rat_int(1), rat_int(1)]];
        let f = isotropic_complement(&g, &c, &f1).unwrap();
        assert_eq!(f, vec![vec![rat_int(0), rat_int(1)]]);
        // A Lagrangian seed is returned unchanged.
        let f1 = vec![vec![rat_int(0), rat_int(1)]];
        let f = isotropic_complement(&g, &c, &f1).unwrap();
        assert_eq!(f, f1);
        // Non-coisotropic subspaces are refused.
        let gd = vec![vec![rat_int(1), rat_int(0)], vec![rat_int(0), rat_int(1)]];
        let err = isotropic_complement(&gd, &c, &f1).unwrap_err();
        assert_eq!(err.code(), "courant.not_coisotropic");
        // Seeds meeting the subspace are refused.
        let f1 = vec![vec![rat_int(2), rat_int(0)]];
        let err = isotropic_complement(&g, &c, &f1).unwrap_err();
        assert_eq!(err.code(), "courant.not_complementary");
    }

    #[test]
    fn restriction_of_twisted_double_loses_the_twist_across_one_conormal() {
        let chart = Chart::submanifold("m", &["x", "y"], &["z"]).unwrap();
        let eta = form(&chart, 3, "dx^dy^dz");
        let a = CourantAlgebroid::exact(&chart, &eta).unwrap();
        let samples = vec![vec![0.4, -0.7, 0.0], vec![1.0, 0.3, 0.0]];
        let pb = transversal_pullback(&a, &samples, &CourantOpts::default()).unwrap();
        assert_eq!(pb.bundle.rank(), 4);
        assert_eq!(pb.n_chart.dim(), 2);
        // Quotient pairing is again the canonical split form on the frame
        // (tangent then cotangent restricted directions).
        let gq = pb.bundle.pairing();
        for i in 0..4 {
            for j in 0..4 {
                let expect = if (i + 2) % 4 == j { rat_int(1) } else { rat_int(0) };
                assert_eq!(gq[i][j], expect);
            }
        }
        // Twist contributions land in the orthogonal and disappear.
        for k in 0..4 {
            for i in 0..4 {
                for j in 0..4 {
                    assert!(pb.bundle.structure_fn(k, i, j).is_zero());
                }
            }
        }
        assert!(pb.bundle.axioms_check(&[]).passed());
        // Sections restrict by dropping their orthogonal parts.
        let tau = section(&a, "0", "y*dx + dz");
        let pulled = pb.pull_section(&tau, &CourantOpts::default()).unwrap();
        assert_eq!(pulled[2], pl(&pb.n_chart, "y"));
        for (i, p) in pulled.iter().enumerate() {
            if i != 2 {
                assert!(p.is_zero());
            }
        }
        let err = pb
            .pull_section(&section(&a, "@z", "0"), &CourantOpts::default())
            .unwrap_err();
        assert_eq!(err.code(), "courant.section_not_tangent");
    }

    #[test]
    fn restriction_of_rotation_action_to_axis() {
        let chart = Chart::submanifold_with_units("m", &["x"], &["y", "z"], &["x"]).unwrap();
        let samples = vec![vec![1.0, 0.0, 0.0], vec![0.8, 0.0, 0.0]];
        let mut fields = rotations(&chart);
        fields.push(VectorField::zero(&chart));
        fields.push(VectorField::zero(&chart));
        fields.push(VectorField::zero(&chart));
        let a = CourantAlgebroid::action(
            &chart,
            &double_structure(&chart),
            split_metric(),
            fields,
            &samples,
        )
        .unwrap();
        let pb = transversal_pullback(&a, &samples, &CourantOpts::default()).unwrap();
        // The quotient is the abelian hyperbolic plane spanned by the
        // axis rotation and its dual, with zero anchor.
        assert_eq!(pb.bundle.rank(), 2);
        let gq = pb.bundle.pairing();
        assert_eq!(gq[0][0], rat_int(0));
        assert_eq!(gq[1][1], rat_int(0));
        assert_ne!(gq[0][1], rat_int(0));
        for c in 0..2 {
            assert!(pb.bundle.frame_anchor(c).is_zero());
            for i in 0..2 {
                for j in 0..2 {
                    assert!(pb.bundle.structure_fn(c, i, j).is_zero());
                }
            }
        }
        // The quotient frame spans the axis rotation and its dual.
        for qv in &pb.q_frame {
            for (idx, v) in qv.iter().enumerate() {
                if idx != 0 && idx != 3 {
                    assert_eq!(*v, rat_int(0));
                }
            }
        }
    }

    #[test]
    fn restriction_to_a_point_yields_a_metrized_algebra() {
        let chart = Chart::build("l", &["x"], &[], &[0], &[]).unwrap();
        let mut g = vec![vec![rat_int(0); 4]; 4];
        g[0][1] = rat_int(1);
        g[1][0] = rat_int(1);
        g[2][3] = rat_int(1);
        g[3][2] = rat_int(1);
        let c = vec![vec![vec![rat_int(0); 4]; 4]; 4];
        let fields = vec![
            vf(&chart, "@x"),
            VectorField::zero(&chart),
            VectorField::zero(&chart),
            VectorField::zero(&chart),
        ];
        let samples = vec![vec![0.0]];
        let a = CourantAlgebroid::action(&chart, &c, g, fields, &samples).unwrap();
        let pb = transversal_pullback(&a, &samples, &CourantOpts::default()).unwrap();
        assert_eq!(pb.n_chart.dim(), 0);
        assert_eq!(pb.bundle.rank(), 2);
        let gq = pb.bundle.pairing();
        assert_eq!(gq[0][0], rat_int(0));
        assert_ne!(gq[0][1], rat_int(0));
        assert!(pb.bundle.axioms_check(&[]).passed());
    }

    #[test]
    fn linearization_at_critical_points() {
        // Rotations with trivial dual action vanish at the origin; the
        // linearization reproduces the structure constants.
        let chart = chart3();
        let mut fields = rotations(&chart);
        fields.push(VectorField::zero(&chart));
        fields.push(VectorField::zero(&chart));
        fields.push(VectorField::zero(&chart));
        let samples = vec![vec![0.3, 0.1, -0.2]];
        let a = CourantAlgebroid::action(
            &chart,
            &double_structure(&chart),
            split_metric(),
            fields,
            &samples,
        )
        .unwrap();
        let m = vec![rat_int(0), rat_int(0), rat_int(0)];
        let (lin, report) = linearize_critical(&a, &m, &samples).unwrap();
        assert!(report.passed());
        for k in 0..6 {
            for i in 0..6 {
                for j in 0..6 {
                    assert_eq!(
                        lin.structure_fn(k, i, j).constant_part(),
                        a.structure_fn(k, i, j).constant_part()
                    );
                }
            }
        }
        for (i, f) in rotations(lin.chart()).iter().enumerate() {
            assert!(lin.frame_anchor(i).sub(f).is_zero());
        }
        // Quadratic anchors linearize to zero.
        let chart2 = Chart::new("p", &["x", "y"]).unwrap();
        let samples = vec![vec![0.3, 0.1]];
        let g = vec![vec![rat_int(0), rat_int(1)], vec![rat_int(1), rat_int(0)]];
        let anchors = vec![vf(&chart2, "y^2*@x"), VectorField::zero(&chart2)];
        let gamma = vec![vec![vec![Poly::zero(&chart2); 2]; 2]; 2];
        let raw = CourantAlgebroid::raw(&chart2, g.clone(), anchors, gamma).unwrap();
        let (lin, _) = linearize_critical(&raw, &[rat_int(0), rat_int(0)], &samples).unwrap();
        assert!(lin.frame_anchor(0).is_zero());
        assert!(lin.frame_anchor(1).is_zero());
        // Linear anchors are their own linearization.
        let anchors = vec![vf(&chart2, "y*@y"), VectorField::zero(&chart2)];
        let gamma = vec![vec![vec![Poly::zero(&chart2); 2]; 2]; 2];
        let raw = CourantAlgebroid::raw(&chart2, g, anchors, gamma).unwrap();
        assert!(raw.axioms_check(&[]).passed());
        let (lin, _) = linearize_critical(&raw, &[rat_int(0), rat_int(0)], &samples).unwrap();
        assert!(lin.frame_anchor(0).sub(&vf(lin.chart(), "y*@y")).is_zero());
        // A point where the anchor does not vanish is refused.
        let err = linearize_critical(&raw, &[rat_int(0), rat_int(1)], &samples).unwrap_err();
        assert_eq!(err.code(), "courant.anchor_not_critical");
    }
}
