//! Anchored vector bundles in a chart-local frame presentation: a rank-r
//! trivialized bundle with an anchor map into the tangent bundle and
//! optional structure functions making the frame bracket explicit. The
//! module fits Euler-like sections, restricts bundles to a transversal,
//! builds the linearized model on the normal bundle, and realizes the
//! normal-form isomorphism by parallel transport along the rescaling
//! field on the deformation chart.

use std::sync::Arc;

use nalgebra::DMatrix;

use crate::chart::{same_chart, Chart};
use crate::defspace::DeformationSpace;
use crate::error::{Error, Result};
use crate::euler::{euler_like_check, tubular_embedding, w_field, TubularEmbedding};
use crate::fit::{monomial_basis, LinearFit};
use crate::flow::{self, FlowOpts};
use crate::numeric;
use crate::poly::{Poly, Trunc};
use crate::scalar::Scalar;
use crate::tensor::polymat;
use crate::tensor::VectorField;

#[derive(Debug, Clone)]
pub struct AnchoredOpts {
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

impl Default for AnchoredOpts {
    fn default() -> Self {
        AnchoredOpts {
            coeff_degree: 2,
            laurent_depth: 1,
            jet_order: 6,
            fd_step: 1e-4,
            flow: FlowOpts::default(),
        }
    }
}

/// A trivialized anchored bundle over a chart: an anchor field per frame
/// element, and optionally structure functions `c^k_{ij}` giving the frame
/// brackets. Without structure functions the bracket is the one induced by
/// the flat trivialization: coefficients are differentiated along anchors.
#[derive(Debug, Clone)]
pub struct AnchoredBundle<C: Scalar> {
    chart: Arc<Chart>,
    rank: usize,
    anchor: Vec<VectorField<C>>,
    structure: Option<Vec<Vec<Vec<Poly<C>>>>>,
}

impl<C: Scalar> AnchoredBundle<C> {
    pub fn new(
        chart: &Arc<Chart>,
        anchor: Vec<VectorField<C>>,
        structure: Option<Vec<Vec<Vec<Poly<C>>>>>,
    ) -> Result<Self> {
        let rank = anchor.len();
        for col in &anchor {
            same_chart(chart, col.chart())?;
        }
        if let Some(c) = &structure {
            if c.len() != rank || c.iter().any(|m| m.len() != rank || m.iter().any(|r| r.len() != rank)) {
                return Err(Error::Invalid(format!(
                    "structure functions must form a {rank}x{rank}x{rank} array"
                )));
            }
            for k in 0..rank {
                for i in 0..rank {
                    for j in 0..rank {
                        if !c[k][i][j].add(&c[k][j][i]).is_zero() {
                            return Err(Error::Invalid(format!(
                                "structure functions must be antisymmetric in the lower indices; \
                                 entry ({k},{i},{j}) breaks this"
                            )));
                        }
                    }
                }
            }
        }
        Ok(AnchoredBundle {
            chart: chart.clone(),
            rank,
            anchor,
            structure,
        })
    }

    /// The tangent bundle in the coordinate frame: identity anchor, flat
    /// bracket (which is then the Lie bracket of the realized fields).
    pub fn tangent(chart: &Arc<Chart>) -> Self {
        let anchor = (0..chart.dim()).map(|i| VectorField::basis(chart, i)).collect();
        AnchoredBundle {
            chart: chart.clone(),
            rank: chart.dim(),
            anchor,
            structure: None,
        }
    }

    pub fn chart(&self) -> &Arc<Chart> {
        &self.chart
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn frame_anchor(&self, a: usize) -> &VectorField<C> {
        &self.anchor[a]
    }

    pub fn has_structure(&self) -> bool {
        self.structure.is_some()
    }

    pub fn structure_fn(&self, k: usize, i: usize, j: usize) -> Poly<C> {
        match &self.structure {
            Some(c) => c[k][i][j].clone(),
            None => Poly::zero(&self.chart),
        }
    }

    /// Anchor of a section given by frame coefficients.
    pub fn anchor_of(&self, s: &[Poly<C>]) -> VectorField<C> {
        let mut out = VectorField::zero(&self.chart);
        for (a, coeff) in s.iter().enumerate() {
            out = out.add(&self.anchor[a].scale(coeff));
        }
        out
    }

    /// Frame-presentation bracket of two sections.
    pub fn bracket(&self, s: &[Poly<C>], t: &[Poly<C>]) -> Vec<Poly<C>> {
        let va = self.anchor_of(s);
        let vb = self.anchor_of(t);
        (0..self.rank)
            .map(|k| {
                let mut out = va.apply(&t[k]).sub(&vb.apply(&s[k]));
                if self.structure.is_some() {
                    for i in 0..self.rank {
                        for j in 0..self.rank {
                            let c = self.structure_fn(k, i, j);
                            if !c.is_zero() {
                                out = out.add(&c.mul(&s[i]).mul(&t[j]));
                            }
                        }
                    }
                }
                out
            })
            .collect()
    }

    /// `a([s,t]) - [a(s), a(t)]`; identically zero for a Lie algebroid.
    pub fn anchor_compat_residual(&self, s: &[Poly<C>], t: &[Poly<C>]) -> VectorField<C> {
        let br = self.bracket(s, t);
        self.anchor_of(&br)
            .sub(&self.anchor_of(s).lie_bracket(&self.anchor_of(t)))
    }

    /// `[s, f t] - f [s,t] - (a(s)f) t`; identically zero by construction,
    /// kept as an executable statement of the Leibniz rule.
    pub fn leibniz_residual(&self, s: &[Poly<C>], t: &[Poly<C>], f: &Poly<C>) -> Vec<Poly<C>> {
        let ft: Vec<Poly<C>> = t.iter().map(|p| p.mul(f)).collect();
        let lhs = self.bracket(s, &ft);
        let br = self.bracket(s, t);
        let df = self.anchor_of(s).apply(f);
        (0..self.rank)
            .map(|k| lhs[k].sub(&br[k].mul(f)).sub(&df.mul(&t[k])))
            .collect()
    }

    /// Sum of the cyclic double brackets of three sections.
    pub fn jacobiator(&self, s: &[Poly<C>], t: &[Poly<C>], u: &[Poly<C>]) -> Vec<Poly<C>> {
        let mut out = self.bracket(s, &self.bracket(t, u));
        let second = self.bracket(t, &self.bracket(u, s));
        let third = self.bracket(u, &self.bracket(s, t));
        for k in 0..self.rank {
            out[k] = out[k].add(&second[k]).add(&third[k]);
        }
        out
    }

    fn frame_section(&self, a: usize) -> Vec<Poly<C>> {
        (0..self.rank)
            .map(|b| {
                if a == b {
                    Poly::one(&self.chart)
                } else {
                    Poly::zero(&self.chart)
                }
            })
            .collect()
    }

    /// Exact check that the bracket and anchor form a Lie algebroid:
    /// anchor compatibility on frame pairs and vanishing Jacobiator on
    /// frame triples. Both conditions extend to all sections by the
    /// Leibniz rule.
    pub fn lie_algebroid_check(&self) -> Result<()> {
        let frames: Vec<Vec<Poly<C>>> = (0..self.rank).map(|a| self.frame_section(a)).collect();
        for i in 0..self.rank {
            for j in (i + 1)..self.rank {
                let r = self.anchor_compat_residual(&frames[i], &frames[j]);
                if !r.is_zero() {
                    return Err(Error::check(
                        "anchored.not_lie_algebroid",
                        format!("anchor does not intertwine the bracket on frame pair ({i},{j})"),
                    ));
                }
            }
        }
        for i in 0..self.rank {
            for j in (i + 1)..self.rank {
                for k in (j + 1)..self.rank {
                    let jac = self.jacobiator(&frames[i], &frames[j], &frames[k]);
                    if jac.iter().any(|p| !p.is_zero()) {
                        return Err(Error::check(
                            "anchored.not_lie_algebroid",
                            format!("Jacobiator does not vanish on frame triple ({i},{j},{k})"),
                        ));
                    }
                }
            }
        }
        Ok(())
    }
}

/// Fit a section vanishing on the transversal whose anchor is Euler-like,
/// exactly: coefficients have no normal-degree-zero part, and the normal
/// components of the anchor have linear part equal to the coordinate.
pub fn euler_section<C: Scalar>(
    e: &AnchoredBundle<C>,
    opts: &AnchoredOpts,
) -> Result<Vec<Poly<C>>> {
    let chart = e.chart().clone();
    if !chart.is_submanifold() {
        return Err(Error::Invalid(
            "fitting an Euler-like section needs a chart with a distinguished transversal".into(),
        ));
    }
    let basis = monomial_basis::<C>(&chart, opts.coeff_degree, opts.laurent_depth);
    let normal = chart.normal().to_vec();
    let n_unknowns = e.rank() * basis.len();
    let mut fit = LinearFit::new(n_unknowns);
    for a in 0..e.rank() {
        let mut contribs = vec![Poly::zero(&chart); n_unknowns];
        for (m, mono) in basis.iter().enumerate() {
            contribs[a * basis.len() + m] = mono.homog_part(&normal, 0);
        }
        fit.equation(contribs, Poly::zero(&chart));
    }
    for &j in &normal {
        let mut contribs = Vec::with_capacity(n_unknowns);
        for a in 0..e.rank() {
            let aj = e.frame_anchor(a).comp(j);
            for mono in &basis {
                contribs.push(mono.mul(aj).homog_part(&normal, 1));
            }
        }
        fit.equation(contribs, Poly::var(&chart, j));
    }
    let solution = fit.solve().ok_or_else(|| {
        Error::check(
            "anchored.euler_fit_failed",
            format!(
                "no section with coefficient degree <= {} vanishes on the transversal \
                 with an Euler-like anchor",
                opts.coeff_degree
            ),
        )
    })?;
    let mut coeffs = Vec::with_capacity(e.rank());
    for a in 0..e.rank() {
        let mut lambda = Poly::zero(&chart);
        for (m, mono) in basis.iter().enumerate() {
            lambda = lambda.add(&mono.scale(&solution[a * basis.len() + m]));
        }
        coeffs.push(lambda);
    }
    for lambda in &coeffs {
        if !lambda.restrict_zero(&normal).is_zero() {
            return Err(Error::Numeric(
                "fitted section does not vanish on the transversal".into(),
            ));
        }
    }
    let report = euler_like_check(&e.anchor_of(&coeffs))?;
    if !report.is_euler_like() {
        return Err(Error::check("euler.not_euler_like", report.describe()));
    }
    Ok(coeffs)
}

/// Transport a section value along the flow of the anchor of `sigma`,
/// solving the linear system that keeps the bracket with `sigma` zero.
/// Returns the flow endpoint and the transported frame components there.
pub fn transport_section<C: Scalar>(
    e: &AnchoredBundle<C>,
    sigma: &[Poly<C>],
    m0: &[f64],
    tau0: &[f64],
    s: f64,
    opts: &FlowOpts,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let dim = e.chart().dim();
    let r = e.rank();
    let x = e.anchor_of(sigma);
    let x_num: Vec<Poly<f64>> = x.comps().iter().map(|p| p.to_f64()).collect();
    // Coefficient of tau_a in the transport equation for component b.
    let mut coeff = vec![vec![Poly::zero(e.chart()); r]; r];
    for b in 0..r {
        for a in 0..r {
            let mut p = e.frame_anchor(a).apply(&sigma[b]);
            for i in 0..r {
                let c = e.structure_fn(b, i, a);
                if !c.is_zero() {
                    p = p.sub(&c.mul(&sigma[i]));
                }
            }
            coeff[b][a] = p;
        }
    }
    let coeff_num: Vec<Vec<Poly<f64>>> = coeff
        .iter()
        .map(|row| row.iter().map(|p| p.to_f64()).collect())
        .collect();
    let mut z0 = m0.to_vec();
    z0.extend_from_slice(tau0);
    let rhs = move |_s: f64, z: &[f64]| {
        let pt = &z[..dim];
        let mut out: Vec<f64> = x_num.iter().map(|p| p.eval(pt)).collect();
        for b in 0..r {
            let mut acc = 0.0;
            for a in 0..r {
                acc += coeff_num[b][a].eval(pt) * z[dim + a];
            }
            out.push(acc);
        }
        out
    };
    let mut o = opts.clone();
    let start = z0.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    o.box_limit = o.box_limit.max(100.0 * (start + 1.0));
    let end = flow::dopri5(rhs, &z0, 0.0, s, &o)?;
    Ok((end[..dim].to_vec(), end[dim..].to_vec()))
}

/// The restriction of an anchored bundle to the transversal: sections
/// whose anchor is tangent to it, presented by a frame inside the ambient
/// frame together with the restricted bundle over the transversal chart.
#[derive(Debug, Clone)]
pub struct TransversalPullback<C: Scalar> {
    /// Chart of the transversal alone.
    pub n_chart: Arc<Chart>,
    /// Frame of the restricted bundle in ambient frame coefficients;
    /// entries are functions of the transverse coordinates on the base
    /// chart.
    pub frame: Vec<Vec<Poly<C>>>,
    /// The restricted anchored bundle over the transversal chart.
    pub bundle: AnchoredBundle<C>,
}

pub(crate) fn project_to_transversal<C: Scalar>(
    p: &Poly<C>,
    base: &Arc<Chart>,
    n_chart: &Arc<Chart>,
) -> Poly<C> {
    let mut terms = Vec::new();
    for (mono, c) in p.terms() {
        let m: Vec<i32> = base.transverse().iter().map(|&i| mono.0[i]).collect();
        terms.push((m, c.clone()));
    }
    Poly::from_terms(n_chart, terms)
}

pub(crate) fn transversal_chart(base: &Arc<Chart>) -> Result<Arc<Chart>> {
    let names: Vec<&str> = base.transverse().iter().map(|&i| base.coord(i)).collect();
    let all: Vec<usize> = (0..names.len()).collect();
    let units: Vec<&str> = base
        .transverse()
        .iter()
        .filter(|&&i| base.is_unit(i))
        .map(|&i| base.coord(i))
        .collect();
    Ok(Chart::build(
        &format!("{}|N", base.name()),
        &names,
        &all,
        &[],
        &units,
    )?)
}

/// Restrict an anchored bundle to the transversal of its chart. The
/// anchor must be transverse to it with constant corank at the supplied
/// sample points; the frame of anchor-tangent sections is fitted exactly
/// with polynomial coefficients of bounded degree.
pub fn transversal_pullback<C: Scalar>(
    e: &AnchoredBundle<C>,
    samples: &[Vec<f64>],
    opts: &AnchoredOpts,
) -> Result<TransversalPullback<C>> {
    let base = e.chart().clone();
    if !base.is_submanifold() {
        return Err(Error::Invalid(
            "restricting to a transversal needs a chart with one distinguished".into(),
        ));
    }
    let normal = base.normal().to_vec();
    let q = normal.len();
    let r = e.rank();
    if r < q {
        return Err(Error::check(
            "anchored.rank_drop",
            format!("rank {r} bundle cannot have an anchor transverse to a corank {q} submanifold"),
        ));
    }
    for p in samples {
        let rows = DMatrix::from_fn(q, r, |row, col| {
            e.frame_anchor(col).comp(normal[row]).to_f64().eval(p)
        });
        if numeric::rank(&rows, 1e-8) < q {
            return Err(Error::check(
                "anchored.rank_drop",
                format!("anchor is not transverse to the transversal at {p:?}"),
            ));
        }
    }
    // Sections whose anchor is tangent along the transversal: normal
    // anchor components vanish there.
    let basis = monomial_basis::<C>(&base, opts.coeff_degree, opts.laurent_depth);
    let n_unknowns = r * basis.len();
    let mut fit = LinearFit::new(n_unknowns);
    for &j in &normal {
        let mut contribs = Vec::with_capacity(n_unknowns);
        for a in 0..r {
            let aj = e.frame_anchor(a).comp(j);
            for mono in &basis {
                contribs.push(mono.mul(aj).restrict_zero(&normal));
            }
        }
        fit.equation(contribs, Poly::zero(&base));
    }
    let mut candidates: Vec<Vec<Poly<C>>> = fit
        .nullspace()
        .into_iter()
        .map(|coeffs| {
            (0..r)
                .map(|a| {
                    let mut lambda = Poly::zero(&base);
                    for (m, mono) in basis.iter().enumerate() {
                        lambda = lambda.add(&mono.scale(&coeffs[a * basis.len() + m]));
                    }
                    lambda.restrict_zero(&normal)
                })
                .collect()
        })
        .collect();
    candidates.retain(|sec| sec.iter().any(|p| !p.is_zero()));
    candidates.sort_by_key(|sec| {
        let terms: usize = sec.iter().map(|p| p.num_terms()).sum();
        let degree: i32 = sec
            .iter()
            .filter_map(|p| p.total_degree())
            .map(|d| d.abs())
            .max()
            .unwrap_or(0);
        (terms, degree)
    });
    let k = r - q;
    let p0 = samples.first().ok_or_else(|| {
        Error::Invalid("restricting to a transversal needs at least one sample point".into())
    })?;
    let mut frame: Vec<Vec<Poly<C>>> = Vec::new();
    let mut chosen: Vec<Vec<f64>> = Vec::new();
    for cand in candidates {
        if frame.len() == k {
            break;
        }
        let value: Vec<f64> = cand.iter().map(|p| p.to_f64().eval(p0)).collect();
        let mut cols = chosen.clone();
        cols.push(value.clone());
        let m = DMatrix::from_fn(r, cols.len(), |row, col| cols[col][row]);
        if numeric::rank(&m, 1e-8) == cols.len() {
            chosen.push(value);
            frame.push(cand);
        }
    }
    if frame.len() < k {
        return Err(Error::check(
            "anchored.rank_drop",
            format!(
                "only {} independent anchor-tangent sections found along the transversal, \
                 expected {k}",
                frame.len()
            ),
        ));
    }
    for p in samples {
        let m = DMatrix::from_fn(r, k, |row, col| frame[col][row].to_f64().eval(p));
        if numeric::rank(&m, 1e-8) < k {
            return Err(Error::check(
                "anchored.rank_drop",
                format!("restricted frame drops rank at {p:?}"),
            ));
        }
    }
    let n_chart = transversal_chart(&base)?;
    // Anchors of the frame sections, restricted to the transversal; the
    // normal components vanish there by construction.
    let tangents: Vec<VectorField<C>> = frame
        .iter()
        .map(|sec| {
            let full = e.anchor_of(sec);
            let comps: Vec<Poly<C>> = base
                .transverse()
                .iter()
                .map(|&i| {
                    project_to_transversal(&full.comp(i).restrict_zero(&normal), &base, &n_chart)
                })
                .collect();
            VectorField::new(&n_chart, comps)
        })
        .collect();
    // Brackets of frame sections, re-expressed in the frame along the
    // transversal; closure is exactly what restriction requires.
    let tangents_base: Vec<VectorField<C>> = frame
        .iter()
        .map(|sec| {
            let full = e.anchor_of(sec);
            let comps: Vec<Poly<C>> = (0..base.dim())
                .map(|i| full.comp(i).restrict_zero(&normal))
                .collect();
            VectorField::new(&base, comps)
        })
        .collect();
    let n_basis = monomial_basis::<C>(&n_chart, opts.coeff_degree, opts.laurent_depth);
    let mut structure = vec![vec![vec![Poly::zero(&n_chart); k]; k]; k];
    for c in 0..k {
        for d in (c + 1)..k {
            let mut target_comps: Vec<Poly<C>> = Vec::with_capacity(r);
            for a in 0..r {
                let mut b = tangents_base[c]
                    .apply(&frame[d][a])
                    .sub(&tangents_base[d].apply(&frame[c][a]));
                for i in 0..r {
                    for j in 0..r {
                        let cf = e.structure_fn(a, i, j);
                        if !cf.is_zero() {
                            b = b.add(&cf.mul(&frame[c][i]).mul(&frame[d][j]));
                        }
                    }
                }
                target_comps.push(project_to_transversal(
                    &b.restrict_zero(&normal),
                    &base,
                    &n_chart,
                ));
            }
            let mut gfit = LinearFit::new(k * n_basis.len());
            for a in 0..r {
                let mut contribs = Vec::with_capacity(k * n_basis.len());
                for ee in 0..k {
                    let lam = project_to_transversal(&frame[ee][a], &base, &n_chart);
                    for mono in &n_basis {
                        contribs.push(mono.mul(&lam));
                    }
                }
                gfit.equation(contribs, target_comps[a].clone());
            }
            let sol = gfit.solve().ok_or_else(|| {
                Error::check(
                    "anchored.pullback_not_closed",
                    format!(
                        "bracket of restricted frame sections {c} and {d} does not stay in \
                         their span along the transversal"
                    ),
                )
            })?;
            for ee in 0..k {
                let mut gamma = Poly::zero(&n_chart);
                for (m, mono) in n_basis.iter().enumerate() {
                    gamma = gamma.add(&mono.scale(&sol[ee * n_basis.len() + m]));
                }
                structure[ee][c][d] = gamma.clone();
                structure[ee][d][c] = gamma.neg();
            }
        }
    }
    let bundle = AnchoredBundle::new(&n_chart, tangents, Some(structure))?;
    Ok(TransversalPullback {
        n_chart,
        frame,
        bundle,
    })
}

/// The linearized model bundle on the normal bundle chart: restricted
/// frame sections with their tangent anchors, plus one fiber direction per
/// normal coordinate, all brackets with fiber directions vanishing.
fn model_bundle<C: Scalar>(
    ds: &DeformationSpace,
    pullback: &TransversalPullback<C>,
    rank: usize,
) -> Result<AnchoredBundle<C>> {
    let nu = ds.nu();
    let base = ds.base();
    let k = pullback.frame.len();
    let embed_map: Vec<usize> = base.transverse().to_vec();
    let mut anchors: Vec<VectorField<C>> = Vec::with_capacity(rank);
    for c in 0..k {
        let mut comps = vec![Poly::zero(nu); nu.dim()];
        for (slot, &i) in base.transverse().iter().enumerate() {
            comps[i] = pullback.bundle.frame_anchor(c).comp(slot).embed(nu, &embed_map);
        }
        anchors.push(VectorField::new(nu, comps));
    }
    for &j in base.normal() {
        anchors.push(VectorField::basis(nu, j));
    }
    let mut structure = vec![vec![vec![Poly::zero(nu); rank]; rank]; rank];
    for ee in 0..k {
        for c in 0..k {
            for d in 0..k {
                structure[ee][c][d] =
                    pullback.bundle.structure_fn(ee, c, d).embed(nu, &embed_map);
            }
        }
    }
    AnchoredBundle::new(nu, anchors, Some(structure))
}

/// Defect of the fiber-product constraint for a coefficient-and-vector
/// pair on the deformation chart: the anchor of the coefficients pulled
/// through the rescaling map, minus the pushforward of the vector part.
pub fn fiber_product_defect<C: Scalar>(
    e: &AnchoredBundle<C>,
    ds: &DeformationSpace,
    g: &[Poly<C>],
    v: &VectorField<C>,
) -> Vec<Poly<C>> {
    let base = ds.base();
    let t = ds.t_index();
    let def = ds.def_chart();
    (0..base.dim())
        .map(|mu| {
            let mut lhs = Poly::zero(def);
            for a in 0..e.rank() {
                let pulled = ds.pullback_kappa(e.frame_anchor(a).comp(mu));
                lhs = lhs.add(&g[a].mul(&pulled));
            }
            let pushed = if base.is_normal(mu) {
                Poly::var(def, t)
                    .mul(v.comp(mu))
                    .add(&Poly::var(def, mu).mul(v.comp(t)))
            } else {
                v.comp(mu).clone()
            };
            lhs.sub(&pushed)
        })
        .collect()
}

/// Bracket of two coefficient-and-vector pairs on the deformation chart,
/// with structure functions pulled through the rescaling map.
pub fn deformation_bracket<C: Scalar>(
    e: &AnchoredBundle<C>,
    ds: &DeformationSpace,
    g1: &[Poly<C>],
    v1: &VectorField<C>,
    g2: &[Poly<C>],
    v2: &VectorField<C>,
) -> (Vec<Poly<C>>, VectorField<C>) {
    let r = e.rank();
    let g = (0..r)
        .map(|b| {
            let mut out = v1.apply(&g2[b]).sub(&v2.apply(&g1[b]));
            for i in 0..r {
                for j in 0..r {
                    let c = e.structure_fn(b, i, j);
                    if !c.is_zero() {
                        out = out.add(&ds.pullback_kappa(&c).mul(&g1[i]).mul(&g2[j]));
                    }
                }
            }
            out
        })
        .collect();
    (g, v1.lie_bracket(v2))
}

/// The distinguished section over the deformation space attached to an
/// Euler-like section: coefficients divided by the deformation parameter,
/// paired with the rescaling field. Both divisions are exact.
pub fn w_section<C: Scalar>(
    e: &AnchoredBundle<C>,
    ds: &DeformationSpace,
    sigma: &[Poly<C>],
) -> Result<(Vec<Poly<C>>, VectorField<C>)> {
    let normal = ds.base().normal().to_vec();
    for (a, p) in sigma.iter().enumerate() {
        if !p.restrict_zero(&normal).is_zero() {
            return Err(Error::check(
                "anchored.sigma_not_vanishing",
                format!("section coefficient {a} does not vanish on the transversal"),
            ));
        }
    }
    let x = e.anchor_of(sigma);
    let report = euler_like_check(&x)?;
    if !report.is_euler_like() {
        return Err(Error::check("euler.not_euler_like", report.describe()));
    }
    let w = w_field(ds, &x)?;
    let t = ds.t_index();
    let h: Vec<Poly<C>> = sigma
        .iter()
        .map(|p| {
            ds.pullback_kappa(p)
                .divide_by_var(t)
                .map_err(Error::from)
        })
        .collect::<Result<_>>()?;
    let defect = fiber_product_defect(e, ds, &h, &w);
    if defect.iter().any(|p| !p.is_zero()) {
        return Err(Error::Numeric(
            "rescaled section and field do not satisfy the fiber-product constraint".into(),
        ));
    }
    Ok((h, w))
}

#[derive(Debug, Clone)]
pub struct SplitResiduals {
    /// Anchor intertwining through the embedding, max over frame columns.
    pub anchor: f64,
    /// Image of the tautological fiber section against the Euler-like
    /// section at the image point.
    pub euler_section: f64,
    /// Frame-pair bracket preservation by finite differences; absent when
    /// the input bracket is not exactly a Lie algebroid.
    pub bracket: Option<f64>,
}

impl SplitResiduals {
    pub fn max(&self) -> f64 {
        self.anchor.max(self.euler_section).max(self.bracket.unwrap_or(0.0))
    }
}

/// The normal-form isomorphism for an anchored bundle along an Euler-like
/// section: base embedding plus a frame map from the linearized model,
/// with an exact jet along the transversal and a numeric pointwise
/// evaluator by parallel transport on the deformation chart.
#[derive(Debug)]
pub struct AnchoredSplitting<C: Scalar> {
    bundle: AnchoredBundle<C>,
    sigma: Vec<Poly<C>>,
    ds: DeformationSpace,
    tube: TubularEmbedding<C>,
    pullback: TransversalPullback<C>,
    model: AnchoredBundle<C>,
    frame_jet: Vec<Vec<Poly<C>>>,
    is_lie: bool,
    fd_step: f64,
    flow_opts: FlowOpts,
    // Numeric evaluation tables.
    w_num: Vec<Poly<f64>>,
    dw_num: Vec<Vec<Poly<f64>>>,
    h_num: Vec<Poly<f64>>,
    dh_num: Vec<Vec<Poly<f64>>>,
    ck_num: Vec<Vec<Vec<Poly<f64>>>>,
    anchor_num: Vec<Vec<Poly<f64>>>,
    sigma_num: Vec<Poly<f64>>,
    c_base_num: Vec<Vec<Vec<Poly<f64>>>>,
    gamma_num: Vec<Vec<Vec<Poly<f64>>>>,
    init_num: Vec<(Vec<Poly<f64>>, Vec<Poly<f64>>)>,
}

impl<C: Scalar> AnchoredSplitting<C> {
    pub fn tube(&self) -> &TubularEmbedding<C> {
        &self.tube
    }

    pub fn space(&self) -> &DeformationSpace {
        &self.ds
    }

    pub fn model(&self) -> &AnchoredBundle<C> {
        &self.model
    }

    pub fn pullback(&self) -> &TransversalPullback<C> {
        &self.pullback
    }

    pub fn sigma(&self) -> &[Poly<C>] {
        &self.sigma
    }

    /// Frame map jet on the linear-model chart: entry `[a][c]` is the
    /// ambient frame coefficient `a` of the image of model frame element
    /// `c`.
    pub fn frame_jet(&self) -> &Vec<Vec<Poly<C>>> {
        &self.frame_jet
    }

    pub fn is_lie_algebroid(&self) -> bool {
        self.is_lie
    }

    /// Numeric frame transport from a model point: the image base point,
    /// the frame matrix, and the pushed tangent vector per column.
    pub fn transport_at(&self, v: &[f64]) -> Result<(Vec<f64>, DMatrix<f64>, Vec<Vec<f64>>)> {
        let n = self.ds.base().dim();
        let dim = self.ds.def_chart().dim();
        let r = self.bundle.rank();
        let mut z0: Vec<f64> = v.to_vec();
        z0.push(0.0);
        for (g0, v0) in &self.init_num {
            let mut zp = z0[..dim].to_vec();
            zp[dim - 1] = 0.0;
            for p in g0 {
                z0.push(p.eval(&zp));
            }
            for p in v0 {
                z0.push(p.eval(&zp));
            }
        }
        let w_num = self.w_num.clone();
        let dw_num = self.dw_num.clone();
        let h_num = self.h_num.clone();
        let dh_num = self.dh_num.clone();
        let ck_num = self.ck_num.clone();
        let rhs = move |_s: f64, z: &[f64]| {
            let pt = &z[..dim];
            let mut out: Vec<f64> = w_num.iter().map(|p| p.eval(pt)).collect();
            let h: Vec<f64> = h_num.iter().map(|p| p.eval(pt)).collect();
            let dh: Vec<Vec<f64>> = dh_num
                .iter()
                .map(|row| row.iter().map(|p| p.eval(pt)).collect())
                .collect();
            let dw: Vec<Vec<f64>> = dw_num
                .iter()
                .map(|row| row.iter().map(|p| p.eval(pt)).collect())
                .collect();
            let ck: Vec<Vec<Vec<f64>>> = ck_num
                .iter()
                .map(|m| {
                    m.iter()
                        .map(|row| row.iter().map(|p| p.eval(pt)).collect())
                        .collect()
                })
                .collect();
            let r = h.len();
            let dim = pt.len();
            let n_elems = (z.len() - dim) / (r + dim);
            for e in 0..n_elems {
                let off = dim + e * (r + dim);
                let g = &z[off..off + r];
                let vv = &z[off + r..off + r + dim];
                for b in 0..r {
                    let mut acc = 0.0;
                    for nu in 0..dim {
                        acc += vv[nu] * dh[b][nu];
                    }
                    for a in 0..r {
                        for ap in 0..r {
                            let c = ck[b][a][ap];
                            if c != 0.0 {
                                acc -= c * h[a] * g[ap];
                            }
                        }
                    }
                    out.push(acc);
                }
                for mu in 0..dim {
                    let mut acc = 0.0;
                    for nu in 0..dim {
                        acc += vv[nu] * dw[mu][nu];
                    }
                    out.push(acc);
                }
            }
            out
        };
        let mut o = self.flow_opts.clone();
        let start = z0.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        o.box_limit = o.box_limit.max(100.0 * (start + 1.0));
        let end = flow::dopri5(rhs, &z0, 0.0, 1.0, &o)?;
        let z1 = end[..n].to_vec();
        let mut m = DMatrix::zeros(r, r);
        let mut pushed = Vec::with_capacity(r);
        for e in 0..r {
            let off = dim + e * (r + dim);
            for b in 0..r {
                m[(b, e)] = end[off + b];
            }
            pushed.push(end[off + r..off + r + n].to_vec());
        }
        Ok((z1, m, pushed))
    }

    /// Residuals of the defining properties at a model sample point.
    pub fn residuals_at(&self, v: &[f64]) -> Result<SplitResiduals> {
        let n = self.ds.base().dim();
        let r = self.bundle.rank();
        let k = self.pullback.frame.len();
        let (z1, m, pushed) = self.transport_at(v)?;
        let anchor_at: Vec<Vec<f64>> = (0..r)
            .map(|a| self.anchor_num[a].iter().map(|p| p.eval(&z1)).collect())
            .collect();
        let mut anchor_res: f64 = 0.0;
        let mut a_cols: Vec<Vec<f64>> = Vec::with_capacity(r);
        for c in 0..r {
            let mut col = vec![0.0; n];
            for a in 0..r {
                for mu in 0..n {
                    col[mu] += m[(a, c)] * anchor_at[a][mu];
                }
            }
            for mu in 0..n {
                anchor_res = anchor_res.max((col[mu] - pushed[c][mu]).abs());
            }
            a_cols.push(col);
        }
        let mut euler_res: f64 = 0.0;
        for a in 0..r {
            let mut acc = 0.0;
            for (j, &nj) in self.ds.base().normal().iter().enumerate() {
                acc += v[nj] * m[(a, k + j)];
            }
            euler_res = euler_res.max((acc - self.sigma_num[a].eval(&z1)).abs());
        }
        let bracket = if self.is_lie {
            let h = self.fd_step;
            let mut dm: Vec<DMatrix<f64>> = Vec::with_capacity(n);
            for nu in 0..n {
                let mut vp = v.to_vec();
                vp[nu] += h;
                let mut vm = v.to_vec();
                vm[nu] -= h;
                let (_, mp, _) = self.transport_at(&vp)?;
                let (_, mm, _) = self.transport_at(&vm)?;
                dm.push((mp - mm) / (2.0 * h));
            }
            let (_, jac) = self.tube.eval_jacobian(v)?;
            let lu = jac.lu();
            let mut tilde: Vec<Vec<f64>> = Vec::with_capacity(r);
            for col in &a_cols {
                let b = DMatrix::from_column_slice(n, 1, col);
                let sol = lu.solve(&b).ok_or_else(|| {
                    Error::Numeric("embedding Jacobian is singular at a sample point".into())
                })?;
                tilde.push((0..n).map(|i| sol[(i, 0)]).collect());
            }
            let cb: Vec<Vec<Vec<f64>>> = self
                .c_base_num
                .iter()
                .map(|mk| {
                    mk.iter()
                        .map(|row| row.iter().map(|p| p.eval(&z1)).collect())
                        .collect()
                })
                .collect();
            let gm: Vec<Vec<Vec<f64>>> = self
                .gamma_num
                .iter()
                .map(|mk| {
                    mk.iter()
                        .map(|row| row.iter().map(|p| p.eval(v)).collect())
                        .collect()
                })
                .collect();
            let mut res: f64 = 0.0;
            for c in 0..r {
                for d in (c + 1)..r {
                    for kk in 0..r {
                        let mut lhs = 0.0;
                        for a in 0..r {
                            for ap in 0..r {
                                let cf = cb[kk][a][ap];
                                if cf != 0.0 {
                                    lhs += cf * m[(a, c)] * m[(ap, d)];
                                }
                            }
                        }
                        for nu in 0..n {
                            lhs += tilde[c][nu] * dm[nu][(kk, d)];
                            lhs -= tilde[d][nu] * dm[nu][(kk, c)];
                        }
                        let mut rhs = 0.0;
                        for e in 0..r {
                            let g = gm[e][c][d];
                            if g != 0.0 {
                                rhs += g * m[(kk, e)];
                            }
                        }
                        res = res.max((lhs - rhs).abs());
                    }
                }
            }
            Some(res)
        } else {
            None
        };
        Ok(SplitResiduals {
            anchor: anchor_res,
            euler_section: euler_res,
            bracket,
        })
    }
}

/// Build the normal-form isomorphism for an anchored bundle along a
/// section vanishing on the transversal with Euler-like anchor. The frame
/// jet is computed by fixpoint transport on the deformation chart and
/// checked exactly against the defining identities; pointwise numeric
/// evaluation integrates the same transport along flow lines.
pub fn anchored_splitting<C: Scalar>(
    e: &AnchoredBundle<C>,
    sigma: &[Poly<C>],
    n_samples: &[Vec<f64>],
    opts: &AnchoredOpts,
) -> Result<AnchoredSplitting<C>> {
    let base = e.chart().clone();
    if sigma.len() != e.rank() {
        return Err(Error::Invalid(format!(
            "section has {} coefficients for a rank {} bundle",
            sigma.len(),
            e.rank()
        )));
    }
    let ds = DeformationSpace::new(&base)?;
    let (h, w) = w_section(e, &ds, sigma)?;
    let x = e.anchor_of(sigma);
    let tube = tubular_embedding(&ds, &x, opts.jet_order, &opts.flow)?;
    let is_lie = e.lie_algebroid_check().is_ok();
    let pullback = transversal_pullback(e, n_samples, opts)?;
    let r = e.rank();
    let k = pullback.frame.len();
    let model = model_bundle(&ds, &pullback, r)?;
    let def = ds.def_chart();
    let dim = def.dim();
    let n = base.dim();
    let t = ds.t_index();
    let normal = base.normal().to_vec();
    let embed_all: Vec<usize> = (0..n).collect();

    // Initial frame pairs on the zero fiber: restricted frame sections
    // with their tangent lifts, then one fiber direction per normal
    // coordinate.
    let mut inits: Vec<(Vec<Poly<C>>, VectorField<C>)> = Vec::with_capacity(r);
    for c in 0..k {
        let g0: Vec<Poly<C>> = (0..r)
            .map(|a| pullback.frame[c][a].embed(def, &embed_all))
            .collect();
        let mut comps = vec![Poly::zero(def); dim];
        let full = e.anchor_of(&pullback.frame[c]);
        for &i in base.transverse() {
            comps[i] = full.comp(i).restrict_zero(&normal).embed(def, &embed_all);
        }
        inits.push((g0, VectorField::new(def, comps)));
    }
    for &j in &normal {
        inits.push((vec![Poly::zero(def); r], VectorField::basis(def, j)));
    }
    for (g0, v0) in &inits {
        let defect = fiber_product_defect(e, &ds, g0, v0);
        if defect.iter().any(|p| !p.restrict_zero(&[t]).is_zero()) {
            return Err(Error::Numeric(
                "initial frame pair violates the fiber-product constraint on the zero fiber".into(),
            ));
        }
    }

    // Fixpoint transport of all frame pairs: the bracket with the
    // rescaled section vanishes, written as an evolution in the
    // deformation parameter.
    let order = opts.jet_order;
    let trunc = Trunc {
        vars: normal.clone(),
        order,
    };
    let stride = r + dim;
    let mut init_state: Vec<Poly<C>> = Vec::with_capacity(r * stride);
    for (g0, v0) in &inits {
        init_state.extend(g0.iter().cloned());
        init_state.extend(v0.comps().iter().cloned());
    }
    let ck: Vec<Vec<Vec<Poly<C>>>> = (0..r)
        .map(|b| {
            (0..r)
                .map(|a| {
                    (0..r)
                        .map(|ap| ds.pullback_kappa(&e.structure_fn(b, a, ap)))
                        .collect()
                })
                .collect()
        })
        .collect();
    let dh: Vec<Vec<Poly<C>>> = h
        .iter()
        .map(|p| (0..dim).map(|nu| p.diff(nu)).collect())
        .collect();
    let dw: Vec<Vec<Poly<C>>> = (0..dim)
        .map(|mu| (0..dim).map(|nu| w.comp(mu).diff(nu)).collect())
        .collect();
    let sol = flow::picard_solve(&init_state, t, &trunc, 4 * order + 16, |z| {
        let mut out = Vec::with_capacity(z.len());
        for elem in 0..r {
            let off = elem * stride;
            let g = &z[off..off + r];
            let vv = &z[off + r..off + stride];
            for b in 0..r {
                let mut acc = Poly::zero(def);
                for nu in 0..dim {
                    if nu != t {
                        acc = acc.sub(&w.comp(nu).mul_trunc(&g[b].diff(nu), &trunc));
                    }
                    acc = acc.add(&vv[nu].mul_trunc(&dh[b][nu], &trunc));
                }
                for a in 0..r {
                    for ap in 0..r {
                        if !ck[b][a][ap].is_zero() {
                            let prod = ck[b][a][ap].mul_trunc(&h[a], &trunc);
                            acc = acc.sub(&prod.mul_trunc(&g[ap], &trunc));
                        }
                    }
                }
                out.push(acc);
            }
            for mu in 0..dim {
                let mut acc = Poly::zero(def);
                for nu in 0..dim {
                    if nu != t {
                        acc = acc.sub(&w.comp(nu).mul_trunc(&vv[mu].diff(nu), &trunc));
                    }
                    acc = acc.add(&vv[nu].mul_trunc(&dw[mu][nu], &trunc));
                }
                out.push(acc);
            }
        }
        Ok(out)
    })
    .map_err(Error::from)?;

    // Transported pairs must satisfy the fiber-product constraint
    // identically up to the truncation order.
    for elem in 0..r {
        let off = elem * stride;
        let g: Vec<Poly<C>> = sol[off..off + r].to_vec();
        let vv = VectorField::new(def, sol[off + r..off + stride].to_vec());
        let defect = fiber_product_defect(e, &ds, &g, &vv);
        if defect.iter().any(|p| !p.truncate(&trunc).is_zero()) {
            return Err(Error::Numeric(
                "transported frame pair lost the fiber-product constraint".into(),
            ));
        }
    }

    // Read the invariant frame at parameter one, where it gives the
    // coefficients at the image base point, then compose with the base
    // embedding so every entry is a function of the model point.
    let images_at_one: Vec<Poly<C>> = {
        let mut v: Vec<Poly<C>> = (0..n).map(|i| Poly::var(def, i)).collect();
        v.push(Poly::one(def));
        v
    };
    let mut frame_jet = vec![vec![Poly::zero(ds.nu()); r]; r];
    for c in 0..r {
        for b in 0..r {
            let at_one = sol[c * stride + b]
                .substitute_trunc(&images_at_one, &trunc)
                .map_err(Error::from)?;
            let on_base = ds.drop_t(&at_one).rename_chart(&base);
            frame_jet[b][c] = tube
                .jet()
                .pullback_scalar_trunc(&on_base, &trunc)
                .map_err(Error::from)?;
        }
    }

    // Exact identity: the tautological fiber section maps to the
    // Euler-like section through the base embedding.
    let nu = ds.nu();
    for a in 0..r {
        let mut lhs = Poly::zero(nu);
        for (j, &nj) in normal.iter().enumerate() {
            lhs = lhs.add(&Poly::var(nu, nj).mul(&frame_jet[a][k + j]));
        }
        let rhs = tube
            .jet()
            .pullback_scalar_trunc(&sigma[a], &trunc)
            .map_err(Error::from)?;
        if !lhs.sub(&rhs).truncate(&trunc).is_zero() {
            return Err(Error::Numeric(
                "frame map does not carry the fiber section to the Euler-like section".into(),
            ));
        }
    }

    // Exact identity: anchors intertwine through the embedding Jacobian,
    // one truncation order lower.
    let jac = tube.jet().jacobian();
    let trunc_lower = Trunc {
        vars: normal.clone(),
        order: order.saturating_sub(1),
    };
    let mut a_cols_jet: Vec<Vec<Poly<C>>> = Vec::with_capacity(r);
    for c in 0..r {
        let mut col = vec![Poly::zero(nu); n];
        for a in 0..r {
            for mu in 0..n {
                let pulled = tube
                    .jet()
                    .pullback_scalar_trunc(e.frame_anchor(a).comp(mu), &trunc)
                    .map_err(Error::from)?;
                col[mu] = col[mu].add(&frame_jet[a][c].mul_trunc(&pulled, &trunc));
            }
        }
        let mut rhs = vec![Poly::zero(nu); n];
        for mu in 0..n {
            for nn in 0..n {
                rhs[mu] = rhs[mu].add(&jac[mu][nn].mul_trunc(
                    model.frame_anchor(c).comp(nn),
                    &trunc,
                ));
            }
        }
        for mu in 0..n {
            if !col[mu].sub(&rhs[mu]).truncate(&trunc_lower).is_zero() {
                return Err(Error::Numeric(
                    "frame map does not intertwine the anchors through the embedding".into(),
                ));
            }
        }
        a_cols_jet.push(col);
    }

    // Exact identity: bracket preservation on frame pairs, available when
    // the input is exactly a Lie algebroid.
    if is_lie {
        let jinv = polymat::invert_trunc(&jac, &trunc_lower).map_err(Error::from)?;
        let tilde: Vec<Vec<Poly<C>>> = a_cols_jet
            .iter()
            .map(|col| {
                (0..n)
                    .map(|nuv| {
                        let mut acc = Poly::zero(nu);
                        for mu in 0..n {
                            acc = acc.add(&jinv[nuv][mu].mul_trunc(&col[mu], &trunc_lower));
                        }
                        acc
                    })
                    .collect()
            })
            .collect();
        let c_pulled: Vec<Vec<Vec<Poly<C>>>> = (0..r)
            .map(|kk| {
                (0..r)
                    .map(|a| {
                        (0..r)
                            .map(|ap| {
                                tube.jet()
                                    .pullback_scalar_trunc(&e.structure_fn(kk, a, ap), &trunc)
                                    .expect("structure pullback cannot fail on a jet")
                            })
                            .collect()
                    })
                    .collect()
            })
            .collect();
        for c in 0..r {
            for d in (c + 1)..r {
                for kk in 0..r {
                    let mut lhs = Poly::zero(nu);
                    for a in 0..r {
                        for ap in 0..r {
                            if !c_pulled[kk][a][ap].is_zero() {
                                let prod =
                                    c_pulled[kk][a][ap].mul_trunc(&frame_jet[a][c], &trunc);
                                lhs = lhs.add(&prod.mul_trunc(&frame_jet[ap][d], &trunc));
                            }
                        }
                    }
                    for nuv in 0..n {
                        lhs = lhs.add(
                            &tilde[c][nuv].mul_trunc(&frame_jet[kk][d].diff(nuv), &trunc_lower),
                        );
                        lhs = lhs.sub(
                            &tilde[d][nuv].mul_trunc(&frame_jet[kk][c].diff(nuv), &trunc_lower),
                        );
                    }
                    let mut rhs = Poly::zero(nu);
                    for ee in 0..r {
                        let g = model.structure_fn(ee, c, d);
                        if !g.is_zero() {
                            rhs = rhs.add(&g.mul_trunc(&frame_jet[kk][ee], &trunc));
                        }
                    }
                    if !lhs.sub(&rhs).truncate(&trunc_lower).is_zero() {
                        return Err(Error::Numeric(format!(
                            "frame map does not preserve the bracket on frame pair ({c},{d})"
                        )));
                    }
                }
            }
        }
    }

    // Numeric tables for pointwise evaluation.
    let w_num: Vec<Poly<f64>> = w.comps().iter().map(|p| p.to_f64()).collect();
    let dw_num: Vec<Vec<Poly<f64>>> = dw
        .iter()
        .map(|row| row.iter().map(|p| p.to_f64()).collect())
        .collect();
    let h_num: Vec<Poly<f64>> = h.iter().map(|p| p.to_f64()).collect();
    let dh_num: Vec<Vec<Poly<f64>>> = dh
        .iter()
        .map(|row| row.iter().map(|p| p.to_f64()).collect())
        .collect();
    let ck_num: Vec<Vec<Vec<Poly<f64>>>> = ck
        .iter()
        .map(|m| {
            m.iter()
                .map(|row| row.iter().map(|p| p.to_f64()).collect())
                .collect()
        })
        .collect();
    let anchor_num: Vec<Vec<Poly<f64>>> = (0..r)
        .map(|a| {
            e.frame_anchor(a)
                .comps()
                .iter()
                .map(|p| p.to_f64())
                .collect()
        })
        .collect();
    let sigma_num: Vec<Poly<f64>> = sigma.iter().map(|p| p.to_f64()).collect();
    let c_base_num: Vec<Vec<Vec<Poly<f64>>>> = (0..r)
        .map(|kk| {
            (0..r)
                .map(|a| {
                    (0..r)
                        .map(|ap| e.structure_fn(kk, a, ap).to_f64())
                        .collect()
                })
                .collect()
        })
        .collect();
    let gamma_num: Vec<Vec<Vec<Poly<f64>>>> = (0..r)
        .map(|ee| {
            (0..r)
                .map(|c| {
                    (0..r)
                        .map(|d| model.structure_fn(ee, c, d).to_f64())
                        .collect()
                })
                .collect()
        })
        .collect();
    let init_num: Vec<(Vec<Poly<f64>>, Vec<Poly<f64>>)> = inits
        .iter()
        .map(|(g0, v0)| {
            (
                g0.iter().map(|p| p.to_f64()).collect(),
                v0.comps().iter().map(|p| p.to_f64()).collect(),
            )
        })
        .collect();

    Ok(AnchoredSplitting {
        bundle: e.clone(),
        sigma: sigma.to_vec(),
        ds,
        tube,
        pullback,
        model,
        frame_jet,
        is_lie,
        fd_step: opts.fd_step,
        flow_opts: opts.flow.clone(),
        w_num,
        dw_num,
        h_num,
        dh_num,
        ck_num,
        anchor_num,
        sigma_num,
        c_base_num,
        gamma_num,
        init_num,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::{rat, Rat};
    use crate::tensor::parse_tensor;

    fn vf(chart: &Arc<Chart>, s: &str) -> VectorField<Rat> {
        parse_tensor::<Rat>(chart, s)
            .unwrap()
            .into_vector_field()
            .unwrap()
    }

    fn pl(chart: &Arc<Chart>, s: &str) -> Poly<Rat> {
        Poly::parse(chart, s).unwrap()
    }

    fn chart_xy() -> Arc<Chart> {
        Chart::submanifold("m", &["x"], &["y"]).unwrap()
    }

    fn so3_bundle() -> AnchoredBundle<Rat> {
        let chart = Chart::submanifold_with_units("m", &["x"], &["y", "z"], &["x"]).unwrap();
        let gens = vec![
            vf(&chart, "y*@z - z*@y"),
            vf(&chart, "z*@x - x*@z"),
            vf(&chart, "x*@y - y*@x"),
        ];
        let mut c = vec![vec![vec![Poly::zero(&chart); 3]; 3]; 3];
        let eps = |i: usize, j: usize, k: usize| -> i64 {
            match (i, j, k) {
                (0, 1, 2) | (1, 2, 0) | (2, 0, 1) => 1,
                (0, 2, 1) | (2, 1, 0) | (1, 0, 2) => -1,
                _ => 0,
            }
        };
        for k in 0..3 {
            for i in 0..3 {
                for j in 0..3 {
                    let v = -eps(i, j, k);
                    if v != 0 {
                        c[k][i][j] = Poly::constant(&chart, rat(v, 1));
                    }
                }
            }
        }
        AnchoredBundle::new(&chart, gens, Some(c)).unwrap()
    }

    #[test]
    fn flat_tangent_bracket_is_lie_bracket() {
        let chart = chart_xy();
        let e = AnchoredBundle::<Rat>::tangent(&chart);
        let s = vec![pl(&chart, "y"), pl(&chart, "x^2")];
        let t = vec![pl(&chart, "1"), pl(&chart, "x*y")];
        let br = e.bracket(&s, &t);
        let expect = e.anchor_of(&s).lie_bracket(&e.anchor_of(&t));
        for k in 0..2 {
            assert_eq!(br[k], *expect.comp(k));
        }
        e.lie_algebroid_check().unwrap();
        let f = pl(&chart, "x + y^2");
        for p in e.leibniz_residual(&s, &t, &f) {
            assert!(p.is_zero());
        }
    }

    #[test]
    fn structure_functions_must_be_antisymmetric() {
        let chart = chart_xy();
        let cols = vec![vf(&chart, "@x"), vf(&chart, "@y")];
        let mut c = vec![vec![vec![Poly::<Rat>::zero(&chart); 2]; 2]; 2];
        c[0][0][1] = Poly::one(&chart);
        c[0][1][0] = Poly::one(&chart);
        assert!(AnchoredBundle::new(&chart, cols, Some(c)).is_err());
    }

    #[test]
    fn so3_structure_is_lie_algebroid() {
        let e = so3_bundle();
        e.lie_algebroid_check().unwrap();
        let s = vec![
            pl(e.chart(), "y"),
            pl(e.chart(), "x"),
            pl(e.chart(), "z^2"),
        ];
        let t = vec![
            pl(e.chart(), "1"),
            pl(e.chart(), "0"),
            pl(e.chart(), "x*y"),
        ];
        assert!(e.anchor_compat_residual(&s, &t).is_zero());
    }

    #[test]
    fn euler_section_inverts_frame_scaling() {
        let chart = chart_xy();
        let e = AnchoredBundle::new(
            &chart,
            vec![vf(&chart, "2*@x"), vf(&chart, "2*@y")],
            None,
        )
        .unwrap();
        let sigma = euler_section(&e, &AnchoredOpts::default()).unwrap();
        assert_eq!(sigma[0], Poly::zero(&chart));
        assert_eq!(sigma[1], pl(&chart, "1/2*y"));
    }

    #[test]
    fn transport_matches_flow_pushforward() {
        let chart = chart_xy();
        let e = AnchoredBundle::<Rat>::tangent(&chart);
        let sigma = vec![pl(&chart, "0"), pl(&chart, "y + y^2")];
        let x = e.anchor_of(&sigma);
        let m0 = [0.4, 0.3];
        let tau0 = [1.0, 2.0];
        let s = 0.8;
        let opts = FlowOpts::default();
        let (end, tau) = transport_section(&e, &sigma, &m0, &tau0, s, &opts).unwrap();
        // Finite-difference Jacobian of the flow map applied to tau0.
        let h = 1e-5;
        let mut jac = [[0.0f64; 2]; 2];
        for j in 0..2 {
            let mut p = m0;
            p[j] += h;
            let zp = x.flow_point(&p, s, &opts).unwrap();
            let mut q = m0;
            q[j] -= h;
            let zm = x.flow_point(&q, s, &opts).unwrap();
            for i in 0..2 {
                jac[i][j] = (zp[i] - zm[i]) / (2.0 * h);
            }
        }
        for i in 0..2 {
            let expect = jac[i][0] * tau0[0] + jac[i][1] * tau0[1];
            assert!((tau[i] - expect).abs() < 1e-6, "component {i}: {} vs {expect}", tau[i]);
        }
        let direct = x.flow_point(&m0, s, &opts).unwrap();
        for i in 0..2 {
            assert!((end[i] - direct[i]).abs() < 1e-9);
        }
    }

    #[test]
    fn transport_with_constant_structure_is_matrix_exponential() {
        let chart = chart_xy();
        // Zero anchor, frame bracket [e1, e2] = e1: transport along e2
        // scales the first component exponentially and fixes the base.
        let zero = VectorField::<Rat>::zero(&chart);
        let mut c = vec![vec![vec![Poly::zero(&chart); 2]; 2]; 2];
        c[0][0][1] = Poly::one(&chart);
        c[0][1][0] = Poly::constant(&chart, rat(-1, 1));
        let e = AnchoredBundle::new(&chart, vec![zero.clone(), zero], Some(c)).unwrap();
        e.lie_algebroid_check().unwrap();
        let sigma = vec![pl(&chart, "0"), pl(&chart, "1")];
        let (end, tau) = transport_section(
            &e,
            &sigma,
            &[0.5, 0.5],
            &[1.0, 2.0],
            0.7,
            &FlowOpts::default(),
        )
        .unwrap();
        assert!((end[0] - 0.5).abs() < 1e-12 && (end[1] - 0.5).abs() < 1e-12);
        assert!((tau[0] - 0.7f64.exp()).abs() < 1e-10, "{}", tau[0]);
        assert!((tau[1] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn pullback_needs_transverse_anchor() {
        let chart = chart_xy();
        let e = AnchoredBundle::new(&chart, vec![vf(&chart, "y*@y")], None).unwrap();
        let err = transversal_pullback(&e, &[vec![0.5, 0.0]], &AnchoredOpts::default())
            .unwrap_err();
        assert_eq!(err.code(), "anchored.rank_drop");
    }

    #[test]
    fn dilation_splitting_is_identity() {
        let chart = chart_xy();
        let e = AnchoredBundle::<Rat>::tangent(&chart);
        let sigma = vec![pl(&chart, "0"), pl(&chart, "y")];
        let split =
            anchored_splitting(&e, &sigma, &[vec![0.5, 0.0]], &AnchoredOpts::default()).unwrap();
        assert!(split.is_lie_algebroid());
        let nu = split.space().nu();
        for a in 0..2 {
            for c in 0..2 {
                let expect = if a == c {
                    Poly::one(nu)
                } else {
                    Poly::zero(nu)
                };
                assert_eq!(split.frame_jet()[a][c], expect, "entry ({a},{c})");
            }
        }
        let res = split.residuals_at(&[0.5, 0.3]).unwrap();
        assert!(res.anchor < 1e-9);
        assert!(res.euler_section < 1e-9);
        assert!(res.bracket.unwrap() < 1e-6);
    }

    #[test]
    fn shifted_dilation_splitting_is_the_jacobian() {
        let chart = chart_xy();
        let e = AnchoredBundle::<Rat>::tangent(&chart);
        let sigma = vec![pl(&chart, "0"), pl(&chart, "y + y^2")];
        let opts = AnchoredOpts::default();
        let split = anchored_splitting(&e, &sigma, &[vec![0.5, 0.0]], &opts).unwrap();
        let jac = split.tube().jet().jacobian();
        let trunc = Trunc {
            vars: chart.normal().to_vec(),
            order: opts.jet_order - 1,
        };
        // Model frame order is transverse lift then fiber direction,
        // matching the coordinate order here.
        for a in 0..2 {
            for c in 0..2 {
                assert_eq!(
                    split.frame_jet()[a][c].truncate(&trunc),
                    jac[a][c].truncate(&trunc),
                    "entry ({a},{c})"
                );
            }
        }
        let res = split.residuals_at(&[0.5, 0.3]).unwrap();
        assert!(res.anchor < 1e-8);
        assert!(res.euler_section < 1e-8);
        assert!(res.bracket.unwrap() < 1e-6);
    }

    #[test]
    fn so3_action_splitting_residuals() {
        let e = so3_bundle();
        let sigma = euler_section(&e, &AnchoredOpts::default()).unwrap();
        let samples = vec![vec![0.8, 0.0, 0.0], vec![1.0, 0.0, 0.0], vec![1.2, 0.0, 0.0]];
        let split = anchored_splitting(&e, &sigma, &samples, &AnchoredOpts::default()).unwrap();
        assert!(split.is_lie_algebroid());
        assert_eq!(split.pullback().frame.len(), 1);
        split.model().lie_algebroid_check().unwrap();
        for v in [
            [0.9, 0.1, 0.15],
            [1.1, -0.12, 0.08],
            [1.0, 0.18, -0.05],
        ] {
            let res = split.residuals_at(&v).unwrap();
            assert!(res.anchor < 1e-6, "anchor {} at {v:?}", res.anchor);
            assert!(res.euler_section < 1e-6, "euler {} at {v:?}", res.euler_section);
            let br = res.bracket.unwrap();
            assert!(br < 1e-6, "bracket {br} at {v:?}");
        }
    }
}
