//! Pairs of transverse Dirac structures and the Poisson geometry they
//! induce: certified Poisson bivectors, Manin triples with their
//! composite sharp map, cosymplectic transversal tests, the normal
//! form of a Poisson structure around such a transversal through a
//! pair of splittings related by a gauge 2-form, and a Moser-style
//! deformation argument moving one member of a triple along a family
//! of gauge transformations.

use std::cell::RefCell;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::chart::{same_chart, Chart};
use crate::courant::{
    courant_splitting, gauge_change_of_sigma, CheckRow, CourantAlgebroid, CourantOpts,
    CourantSplitting, SigmaGauge,
};
use crate::error::{Error, Result};
use crate::numeric;
use crate::poly::Poly;
use crate::scalar::Scalar;
use crate::tensor::{DiffForm, MultiVector, VectorField};

/// A bivector whose Schouten bracket with itself vanishes identically.
/// The bracket is expanded symbolically on construction, so holding a
/// value of this type certifies the Jacobi identity exactly.
pub struct PoissonStructure<C: Scalar> {
    chart: Arc<Chart>,
    pi: MultiVector<C>,
}

impl<C: Scalar> PoissonStructure<C> {
    pub fn new(pi: &MultiVector<C>) -> Result<Self> {
        if pi.degree() != 2 {
            return Err(Error::Invalid(format!(
                "a Poisson structure is a bivector, got degree {}",
                pi.degree()
            )));
        }
        let jac = pi.schouten(pi);
        if !jac.is_zero() {
            let witness = jac
                .comps()
                .find(|(_, p)| !p.is_zero())
                .map(|(idx, p)| format!("[pi,pi] component {idx:?} is {p}"))
                .unwrap_or_default();
            return Err(Error::check(
                "poisson.not_poisson",
                format!("the bivector fails the Jacobi identity: {witness}"),
            ));
        }
        Ok(PoissonStructure {
            chart: pi.chart().clone(),
            pi: pi.clone(),
        })
    }

    pub fn chart(&self) -> &Arc<Chart> {
        &self.chart
    }

    pub fn bivector(&self) -> &MultiVector<C> {
        &self.pi
    }

    /// Contraction of a one-form in the first slot.
    pub fn sharp(&self, alpha: &DiffForm<C>) -> VectorField<C> {
        self.pi.sharp(alpha)
    }

    /// Full antisymmetric component matrix at a point.
    pub fn matrix_at(&self, point: &[f64]) -> DMatrix<f64> {
        self.pi.matrix_at(point)
    }
}

/// Determinants of the normal-normal block of a bivector along the
/// submanifold of its chart, one entry per projected sample point. The
/// submanifold is cosymplectic for the structure exactly when the
/// block is invertible, which is the transversality hypothesis of the
/// normal-form constructions below.
pub struct CosymplecticReport {
    pub dets: Vec<(Vec<f64>, f64)>,
}

impl CosymplecticReport {
    pub fn min_abs_det(&self) -> f64 {
        self.dets
            .iter()
            .map(|(_, d)| d.abs())
            .fold(f64::INFINITY, f64::min)
    }

    pub fn passed(&self, tol: f64) -> bool {
        !self.dets.is_empty() && self.min_abs_det() > tol
    }
}

pub fn cosymplectic_check<C: Scalar>(
    pi: &PoissonStructure<C>,
    samples: &[Vec<f64>],
) -> Result<CosymplecticReport> {
    let chart = pi.chart();
    if !chart.is_submanifold() {
        return Err(Error::Invalid(format!(
            "chart `{}` declares no submanifold",
            chart.name()
        )));
    }
    if samples.is_empty() {
        return Err(Error::Invalid("cosymplectic check needs sample points".into()));
    }
    let normal = chart.normal().to_vec();
    let q = normal.len();
    let mut dets = Vec::with_capacity(samples.len());
    for v in samples {
        if v.len() != chart.dim() {
            return Err(Error::Invalid(format!(
                "point has {} coordinates on a {}-dimensional chart",
                v.len(),
                chart.dim()
            )));
        }
        let mut p = v.clone();
        for &nj in &normal {
            p[nj] = 0.0;
        }
        let full = pi.matrix_at(&p);
        let block = DMatrix::from_fn(q, q, |i, j| full[(normal[i], normal[j])]);
        dets.push((p, block.determinant()));
    }
    Ok(CosymplecticReport { dets })
}

/// Two maximal isotropic involutive frames spanning a Courant
/// algebroid. Construction re-certifies both frames and checks the
/// spans pointwise complementary at the sample points, so the
/// composite sharp map below is defined wherever a value of this type
/// exists.
pub struct ManinTriple<C: Scalar> {
    algebroid: CourantAlgebroid<C>,
    e_frame: Vec<Vec<Poly<C>>>,
    f_frame: Vec<Vec<Poly<C>>>,
    samples: Vec<Vec<f64>>,
}

impl<C: Scalar> ManinTriple<C> {
    pub fn new(
        algebroid: CourantAlgebroid<C>,
        e_frame: &[Vec<Poly<C>>],
        f_frame: &[Vec<Poly<C>>],
        samples: &[Vec<f64>],
    ) -> Result<Self> {
        let r = algebroid.rank();
        if r % 2 != 0 {
            return Err(Error::Invalid(format!(
                "complementary isotropic frames need even rank, got {r}"
            )));
        }
        let half = r / 2;
        let n = algebroid.chart().dim();
        for (label, frame) in [("tangent", e_frame), ("cotangent", f_frame)] {
            if frame.len() != half || frame.iter().any(|s| s.len() != r) {
                return Err(Error::Invalid(format!(
                    "the {label} frame needs {half} sections of {r} coefficients"
                )));
            }
        }
        if samples.is_empty() {
            return Err(Error::Invalid("triple certification needs sample points".into()));
        }
        for v in samples {
            if v.len() != n {
                return Err(Error::Invalid(format!(
                    "point has {} coordinates on a {n}-dimensional chart",
                    v.len()
                )));
            }
        }
        for (label, frame) in [("tangent", e_frame), ("cotangent", f_frame)] {
            let report = algebroid.dirac_check(frame, samples)?;
            if !report.passed(1e-8) {
                let worst = report
                    .rows
                    .iter()
                    .max_by(|a, b| a.residual.total_cmp(&b.residual))
                    .map(|row| format!("{} = {:.3e}", row.name, row.residual))
                    .unwrap_or_default();
                return Err(Error::check(
                    "bialgebroid.not_dirac",
                    format!("the {label} frame is not a Dirac structure: {worst}"),
                ));
            }
        }
        let e_num = frame_to_f64(e_frame);
        let f_num = frame_to_f64(f_frame);
        for v in samples {
            let mut span = DMatrix::zeros(r, r);
            for (j, col) in e_num.iter().chain(f_num.iter()).enumerate() {
                for aidx in 0..r {
                    span[(aidx, j)] = col[aidx].eval(v);
                }
            }
            if numeric::rank(&span, 1e-10) != r {
                return Err(Error::check(
                    "bialgebroid.not_transverse",
                    format!("the two frames fail to span the fiber at {v:?}"),
                ));
            }
        }
        Ok(ManinTriple {
            algebroid,
            e_frame: e_frame.to_vec(),
            f_frame: f_frame.to_vec(),
            samples: samples.to_vec(),
        })
    }

    /// The triple of a Poisson structure inside the standard double:
    /// the coordinate tangent frame against the graph of the bivector.
    pub fn graph(pi: &PoissonStructure<C>, samples: &[Vec<f64>]) -> Result<Self> {
        let chart = pi.chart();
        let algebroid = CourantAlgebroid::standard(chart)?;
        let n = chart.dim();
        let r = algebroid.rank();
        let mut e_frame = Vec::with_capacity(n);
        for i in 0..n {
            let mut sec = vec![Poly::zero(chart); r];
            sec[i] = Poly::one(chart);
            e_frame.push(sec);
        }
        let f_frame = algebroid.graph_frame(pi.bivector());
        Self::new(algebroid, &e_frame, &f_frame, samples)
    }

    pub fn algebroid(&self) -> &CourantAlgebroid<C> {
        &self.algebroid
    }

    pub fn e_frame(&self) -> &[Vec<Poly<C>>] {
        &self.e_frame
    }

    pub fn f_frame(&self) -> &[Vec<Poly<C>>] {
        &self.f_frame
    }

    pub fn samples(&self) -> &[Vec<f64>] {
        &self.samples
    }

    /// The pairing matrix between the two frames, `B[k][j] = <f_k, e_j>`.
    /// Its invertibility is the fiberwise transversality of the spans.
    pub fn pairing_matrix(&self) -> Vec<Vec<Poly<C>>> {
        let half = self.e_frame.len();
        (0..half)
            .map(|k| {
                (0..half)
                    .map(|j| self.algebroid.pairing_of(&self.f_frame[k], &self.e_frame[j]))
                    .collect()
            })
            .collect()
    }

    /// The bivector of the triple, assembled symbolically: one frame is
    /// paired against the other, the pairing matrix is inverted, and
    /// the two anchors are composed through it. Requires the pairing
    /// determinant to be a nonzero constant so the inverse stays
    /// polynomial; the numeric route `sharp_matrix_at` has no such
    /// restriction. The result is checked skew and re-certified.
    pub fn poisson_sharp(&self) -> Result<PoissonStructure<C>> {
        let chart = self.algebroid.chart();
        let n = chart.dim();
        let half = self.e_frame.len();
        let b = self.pairing_matrix();
        let det = poly_det(chart, &b);
        if !det.is_constant() || det.is_zero() {
            return Err(Error::check(
                "bialgebroid.pairing_degenerate",
                format!("the frame pairing has non-unit determinant {det}"),
            ));
        }
        let det_inv = C::one() / det.constant_part();
        // inv[j][k] = (-1)^{j+k} det(minor of b without row k, column j) / det
        let mut b_inv = vec![vec![Poly::zero(chart); half]; half];
        for j in 0..half {
            for k in 0..half {
                let minor = poly_minor(chart, &b, k, j);
                let mut cof = poly_det(chart, &minor);
                if (j + k) % 2 == 1 {
                    cof = cof.neg();
                }
                b_inv[j][k] = cof.scale(&det_inv);
            }
        }
        let ae: Vec<VectorField<C>> = self
            .e_frame
            .iter()
            .map(|s| self.algebroid.anchor_of(s))
            .collect();
        let af: Vec<VectorField<C>> = self
            .f_frame
            .iter()
            .map(|s| self.algebroid.anchor_of(s))
            .collect();
        let mut full = vec![vec![Poly::zero(chart); n]; n];
        for mu in 0..n {
            for nu in 0..n {
                let mut acc = Poly::zero(chart);
                for j in 0..half {
                    if ae[j].comp(mu).is_zero() {
                        continue;
                    }
                    for k in 0..half {
                        if b_inv[j][k].is_zero() || af[k].comp(nu).is_zero() {
                            continue;
                        }
                        acc = acc.add(&ae[j].comp(mu).mul(&b_inv[j][k]).mul(af[k].comp(nu)));
                    }
                }
                full[mu][nu] = acc;
            }
        }
        for mu in 0..n {
            for nu in 0..n {
                if !full[mu][nu].add(&full[nu][mu]).is_zero() {
                    return Err(Error::check(
                        "bialgebroid.sharp_not_skew",
                        format!(
                            "component ({mu},{nu}) breaks skewness: {} vs {}",
                            full[mu][nu], full[nu][mu]
                        ),
                    ));
                }
            }
        }
        let mut comps = Vec::new();
        for mu in 0..n {
            for nu in mu + 1..n {
                if !full[mu][nu].is_zero() {
                    comps.push((vec![mu, nu], full[mu][nu].clone()));
                }
            }
        }
        PoissonStructure::new(&MultiVector::from_comps(chart, 2, comps))
    }

    /// The bivector matrix at a point, assembled numerically from the
    /// two anchors and the inverse of the pointwise frame pairing.
    pub fn sharp_matrix_at(&self, point: &[f64]) -> Result<DMatrix<f64>> {
        let chart = self.algebroid.chart();
        let n = chart.dim();
        let r = self.algebroid.rank();
        let half = self.e_frame.len();
        if point.len() != n {
            return Err(Error::Invalid(format!(
                "point has {} coordinates on a {n}-dimensional chart",
                point.len()
            )));
        }
        let e_cols = eval_frame(&frame_to_f64(&self.e_frame), point, r);
        let f_cols = eval_frame(&frame_to_f64(&self.f_frame), point, r);
        let pairing = self.algebroid.pairing();
        let g = DMatrix::from_fn(r, r, |i, j| pairing[i][j].to_float());
        let ae = anchor_matrix(&self.algebroid, &self.e_frame, point);
        let af = anchor_matrix(&self.algebroid, &self.f_frame, point);
        let mut b = DMatrix::zeros(half, half);
        for k in 0..half {
            let gf = &g * f_cols.column(k);
            for j in 0..half {
                b[(k, j)] = e_cols.column(j).dot(&gf);
            }
        }
        let solved = b
            .lu()
            .solve(&af.transpose())
            .ok_or_else(|| {
                Error::check(
                    "bialgebroid.not_transverse",
                    format!("the frame pairing degenerates at {point:?}"),
                )
            })?;
        let pi = &ae * &solved;
        let skew = (&pi + pi.transpose()).abs().max();
        if skew > 1e-9 {
            return Err(Error::check(
                "bialgebroid.sharp_not_skew",
                format!("pointwise matrix breaks skewness by {skew:.3e} at {point:?}"),
            ));
        }
        Ok(pi)
    }
}

fn frame_to_f64<C: Scalar>(frame: &[Vec<Poly<C>>]) -> Vec<Vec<Poly<f64>>> {
    frame
        .iter()
        .map(|s| s.iter().map(Poly::to_f64).collect())
        .collect()
}

fn eval_frame(frame: &[Vec<Poly<f64>>], point: &[f64], rows: usize) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(rows, frame.len());
    for (j, col) in frame.iter().enumerate() {
        for (i, p) in col.iter().enumerate() {
            m[(i, j)] = p.eval(point);
        }
    }
    m
}

fn anchor_matrix<C: Scalar>(
    a: &CourantAlgebroid<C>,
    frame: &[Vec<Poly<C>>],
    point: &[f64],
) -> DMatrix<f64> {
    let n = a.chart().dim();
    let mut m = DMatrix::zeros(n, frame.len());
    for (j, sec) in frame.iter().enumerate() {
        let x = a.anchor_of(sec);
        for mu in 0..n {
            m[(mu, j)] = x.comp(mu).to_f64().eval(point);
        }
    }
    m
}

fn poly_minor<C: Scalar>(
    chart: &Arc<Chart>,
    m: &[Vec<Poly<C>>],
    drop_row: usize,
    drop_col: usize,
) -> Vec<Vec<Poly<C>>> {
    let n = m.len();
    let mut out = Vec::with_capacity(n.saturating_sub(1));
    for (i, row) in m.iter().enumerate() {
        if i == drop_row {
            continue;
        }
        let mut r = Vec::with_capacity(n.saturating_sub(1));
        for (j, entry) in row.iter().enumerate() {
            if j == drop_col {
                continue;
            }
            r.push(entry.clone());
        }
        out.push(r);
    }
    if out.is_empty() {
        out.push(vec![Poly::one(chart)]);
    }
    out
}

fn poly_det<C: Scalar>(chart: &Arc<Chart>, m: &[Vec<Poly<C>>]) -> Poly<C> {
    let n = m.len();
    if n == 1 {
        return m[0][0].clone();
    }
    let mut acc = Poly::zero(chart);
    for j in 0..n {
        if m[0][j].is_zero() {
            continue;
        }
        let minor = poly_minor(chart, m, 0, j);
        let mut term = m[0][j].mul(&poly_det(chart, &minor));
        if j % 2 == 1 {
            term = term.neg();
        }
        acc = acc.add(&term);
    }
    acc
}

/// The chart of a one-parameter family: the base coordinates followed
/// by the deformation parameter `s`, with the base unit set kept.
pub fn extended_chart(base: &Arc<Chart>) -> Result<Arc<Chart>> {
    let mut coords: Vec<&str> = base.coords().iter().map(String::as_str).collect();
    coords.push("s");
    let units = base.unit_names();
    Ok(Chart::build(
        &format!("{}+s", base.name()),
        &coords,
        &[],
        &[],
        &units,
    )?)
}

/// Certified normal form of a Poisson structure around the submanifold
/// of its chart: two splittings of the standard double along the
/// sections cut out by a vanishing one-form potential, the gauge
/// 2-form relating them, and the residual rows of the block-structure
/// checks on the pulled-back bivector.
pub struct WeinsteinNormalForm<C: Scalar> {
    pub triple: ManinTriple<C>,
    pub split_sigma: CourantSplitting<C>,
    pub split_tau: CourantSplitting<C>,
    pub gauge: SigmaGauge<C>,
    pub rows: Vec<CheckRow>,
}

impl<C: Scalar> WeinsteinNormalForm<C> {
    pub fn max_residual(&self) -> f64 {
        self.rows.iter().map(|r| r.residual).fold(0.0, f64::max)
    }

    pub fn row(&self, name: &str) -> Option<&CheckRow> {
        self.rows.iter().find(|r| r.name == name)
    }

    pub fn passed(&self, tol: f64) -> bool {
        self.max_residual() <= tol
    }
}

pub fn weinstein_normal_form<C: Scalar>(
    pi: &PoissonStructure<C>,
    alpha: &DiffForm<C>,
    samples: &[Vec<f64>],
    opts: &CourantOpts,
) -> Result<WeinsteinNormalForm<C>> {
    let chart = pi.chart().clone();
    same_chart(&chart, alpha.chart()).map_err(Error::from)?;
    if alpha.degree() != 1 {
        return Err(Error::Invalid("the potential must be a one-form".into()));
    }
    if !chart.is_submanifold() {
        return Err(Error::Invalid(format!(
            "chart `{}` declares no submanifold",
            chart.name()
        )));
    }
    let normal = chart.normal().to_vec();
    for (mu, comp) in alpha.one_form_comps().iter().enumerate() {
        if !comp.restrict_zero(&normal).is_zero() {
            return Err(Error::check(
                "bialgebroid.alpha_not_vanishing",
                format!(
                    "potential component d{} does not vanish on the submanifold: {comp}",
                    chart.coord(mu)
                ),
            ));
        }
    }
    let cosym = cosymplectic_check(pi, samples)?;
    if !cosym.passed(1e-9) {
        return Err(Error::check(
            "bialgebroid.not_cosymplectic",
            format!(
                "the normal block of the bivector degenerates: min |det| = {:.3e}",
                cosym.min_abs_det()
            ),
        ));
    }
    let triple = ManinTriple::graph(pi, samples)?;
    let a = triple.algebroid();
    let n = chart.dim();
    let x = pi.sharp(alpha);
    let sigma = a.exact_section(&x, &DiffForm::zero(&chart, 1));
    let tau = a.exact_section(&x, alpha);

    let mut rows = Vec::new();
    let mut identities = CheckRow::new("section_identities");
    let record_exact = |row: &mut CheckRow, ok: bool, label: &str| {
        if !ok {
            row.record(1.0, label);
        }
    };
    record_exact(
        &mut identities,
        a.anchor_of(&sigma).sub(&x).is_zero(),
        "anchor of the tangent-side section",
    );
    record_exact(
        &mut identities,
        a.anchor_of(&tau).sub(&x).is_zero(),
        "anchor of the graph-side section",
    );
    let coanchor = a.a_star(alpha);
    record_exact(
        &mut identities,
        (0..a.rank()).all(|i| tau[i].sub(&sigma[i]).sub(&coanchor[i]).is_zero()),
        "difference of the two sections against the coanchor",
    );
    let sigma_rep = combine_frame(&chart, triple.e_frame(), x.comps());
    record_exact(
        &mut identities,
        (0..a.rank()).all(|i| sigma_rep[i].sub(&sigma[i]).is_zero()),
        "tangent-side section as a tangent-frame combination",
    );
    let tau_rep = combine_frame(&chart, triple.f_frame(), &alpha.one_form_comps());
    record_exact(
        &mut identities,
        (0..a.rank()).all(|i| tau_rep[i].sub(&tau[i]).is_zero()),
        "graph-side section as a graph-frame combination",
    );
    rows.push(identities);

    let split_sigma = courant_splitting(a, &sigma, samples, opts)?;
    let split_tau = courant_splitting(a, &tau, samples, opts)?;
    let gauge = gauge_change_of_sigma(&split_sigma, alpha)?;

    let pulls_e = split_sigma.model_dirac_frame(triple.e_frame(), samples)?;
    let pulls_f = split_sigma.model_dirac_frame(triple.f_frame(), samples)?;
    let model = split_sigma.model();
    let r = model.rank();
    let half = r / 2;
    let q = normal.len();
    let m_f = half - q;
    let m_rank = split_sigma.pullback().q_frame.len();
    let transverse = chart.transverse().to_vec();
    let gauge_num: Vec<Vec<Poly<f64>>> = gauge
        .matrix
        .iter()
        .map(|row| row.iter().map(Poly::to_f64).collect())
        .collect();
    let pulls_e_num: Vec<Vec<Poly<f64>>> = pulls_e
        .iter()
        .map(|row| row.iter().map(Poly::to_f64).collect())
        .collect();
    let pulls_f_num: Vec<Vec<Poly<f64>>> = pulls_f
        .iter()
        .map(|row| row.iter().map(Poly::to_f64).collect())
        .collect();
    let anchors_model: Vec<Vec<Poly<f64>>> = (0..r)
        .map(|e| {
            (0..n)
                .map(|mu| model.frame_anchor(e).comp(mu).to_f64())
                .collect()
        })
        .collect();
    let g_model = DMatrix::from_fn(r, r, |i, j| model.pairing()[i][j].to_float());
    let pi_num = pi.bivector();

    let model_cols = |pulls: &[Vec<Poly<f64>>], pt: &[f64]| -> DMatrix<f64> {
        let mut cols = DMatrix::zeros(r, half);
        for (i, pull) in pulls.iter().enumerate() {
            for e in 0..m_rank {
                cols[(e, i)] = pull[e].eval(pt);
            }
        }
        for j in 0..q {
            cols[(m_rank + j, m_f + j)] = 1.0;
        }
        cols
    };

    let mut transversality = CheckRow::new("model_transversality");
    let mut pullback_row = CheckRow::new("poisson_pullback");
    let mut mixed_row = CheckRow::new("mixed_block");
    let mut const_row = CheckRow::new("transverse_block_constant");
    for v in samples {
        let pt: Vec<f64> = transverse.iter().map(|&i| v[i]).collect();
        let cols_e = model_cols(&pulls_e_num, &pt);
        let mut cols_f = model_cols(&pulls_f_num, &pt);
        let rw = DMatrix::from_fn(r, r, |l, j| gauge_num[l][j].eval(v));
        cols_f = &rw * cols_f;
        let mut span = DMatrix::zeros(r, r);
        span.view_mut((0, 0), (r, half)).copy_from(&cols_e);
        span.view_mut((0, half), (r, half)).copy_from(&cols_f);
        if numeric::rank(&span, 1e-10) != r {
            transversality.record(1.0, &format!("rank drop at {v:?}"));
            continue;
        }
        let am = DMatrix::from_fn(n, r, |mu, e| anchors_model[e][mu].eval(v));
        let ae = &am * &cols_e;
        let af = &am * &cols_f;
        let mut b = DMatrix::zeros(half, half);
        for k in 0..half {
            let gf = &g_model * cols_f.column(k);
            for j in 0..half {
                b[(k, j)] = cols_e.column(j).dot(&gf);
            }
        }
        let solved = match b.lu().solve(&af.transpose()) {
            Some(s) => s,
            None => {
                transversality.record(1.0, &format!("pairing degenerate at {v:?}"));
                continue;
            }
        };
        let pi_model = &ae * &solved;
        let (z1, jac) = split_sigma.tube().eval_jacobian(v)?;
        let jinv = jac.clone().try_inverse().ok_or_else(|| {
            Error::Invalid(format!("embedding Jacobian singular at {v:?}"))
        })?;
        let p_amb = pi_num.matrix_at(&z1);
        let p_pull = &jinv * p_amb * jinv.transpose();
        let diff = (&p_pull - &pi_model).abs().max();
        pullback_row.record(diff, &format!("at {v:?}"));
        let mut v0 = v.clone();
        for &nj in &normal {
            v0[nj] = 0.0;
        }
        let (_, jac0) = split_sigma.tube().eval_jacobian(&v0)?;
        let jinv0 = jac0.clone().try_inverse().ok_or_else(|| {
            Error::Invalid(format!("embedding Jacobian singular at {v0:?}"))
        })?;
        let p_pull0 = &jinv0 * pi_num.matrix_at(&v0) * jinv0.transpose();
        for &i in &transverse {
            for &nj in &normal {
                mixed_row.record(p_pull[(i, nj)].abs(), &format!("({i},{nj}) at {v:?}"));
                mixed_row.record(p_pull[(nj, i)].abs(), &format!("({nj},{i}) at {v:?}"));
            }
        }
        for &i in &transverse {
            for &j in &transverse {
                const_row.record(
                    (p_pull[(i, j)] - p_pull0[(i, j)]).abs(),
                    &format!("({i},{j}) at {v:?}"),
                );
            }
        }
    }
    rows.push(transversality);
    rows.push(pullback_row);
    rows.push(mixed_row);
    rows.push(const_row);

    let few = &samples[..samples.len().min(2)];
    let mut gauge_rel = CheckRow::new("gauge_relation");
    let mut gauge_quad = CheckRow::new("gauge_quadrature");
    for v in few {
        gauge_rel.record(
            gauge.related_residual(&split_sigma, &split_tau, v)?,
            &format!("at {v:?}"),
        );
        gauge_quad.record(
            gauge.quadrature_residual(&split_sigma, v)?,
            &format!("at {v:?}"),
        );
    }
    rows.push(gauge_rel);
    rows.push(gauge_quad);
    let mut base_dirac = CheckRow::new("base_dirac_image");
    base_dirac.record(
        split_sigma.dirac_image_residual(triple.e_frame(), few)?,
        "tangent frame through the first splitting",
    );
    rows.push(base_dirac);
    let mut graph_dirac = CheckRow::new("graph_dirac_image");
    graph_dirac.record(
        split_tau.dirac_image_residual(triple.f_frame(), few)?,
        "graph frame through the second splitting",
    );
    rows.push(graph_dirac);

    Ok(WeinsteinNormalForm {
        triple,
        split_sigma,
        split_tau,
        gauge,
        rows,
    })
}

fn combine_frame<C: Scalar>(
    chart: &Arc<Chart>,
    frame: &[Vec<Poly<C>>],
    coeffs: &[Poly<C>],
) -> Vec<Poly<C>> {
    let r = frame.first().map_or(0, Vec::len);
    let mut out = vec![Poly::zero(chart); r];
    for (c, sec) in coeffs.iter().zip(frame) {
        if c.is_zero() {
            continue;
        }
        for (o, entry) in out.iter_mut().zip(sec) {
            *o = o.add(&c.mul(entry));
        }
    }
    out
}

pub struct MoserOpts {
    /// Fixed Runge-Kutta step count over the deformation interval.
    pub steps: usize,
    /// Step for finite-difference linearization of the flow field.
    pub fd_step: f64,
    /// Step for the finite-difference exterior derivative in the
    /// bookkeeping identity.
    pub bookkeeping_fd: f64,
    /// Quadrature nodes for the bookkeeping primitive.
    pub quad_nodes: usize,
}

impl Default for MoserOpts {
    fn default() -> Self {
        MoserOpts {
            steps: 64,
            fd_step: 1e-4,
            bookkeeping_fd: 1e-3,
            quad_nodes: 16,
        }
    }
}

pub struct MoserReport {
    pub rows: Vec<CheckRow>,
}

impl MoserReport {
    pub fn max_residual(&self) -> f64 {
        self.rows.iter().map(|r| r.residual).fold(0.0, f64::max)
    }

    pub fn row(&self, name: &str) -> Option<&CheckRow> {
        self.rows.iter().find(|r| r.name == name)
    }

    pub fn passed(&self, tol: f64) -> bool {
        self.max_residual() <= tol
    }
}

/// Deform the second frame of a triple through a family of gauge
/// transformations and certify that the flow of the induced
/// time-dependent tangent section carries each deformed frame back to
/// the initial one. The family is given on the extended chart with
/// parameter `s`; its consistency condition is checked symbolically
/// before any integration, and the transported frames, the forced
/// pointwise decomposition of the generating section, and the
/// pushforward bookkeeping identity are all checked numerically.
pub fn moser_manin<C: Scalar>(
    triple: &ManinTriple<C>,
    nu_s: &DiffForm<C>,
    alpha_s: &DiffForm<C>,
    s_max: f64,
    opts: &MoserOpts,
) -> Result<MoserReport> {
    let a = triple.algebroid();
    let chart = a.chart().clone();
    let n = chart.dim();
    let r = a.rank();
    let half = r / 2;
    match a.exact_background() {
        Some(eta) if eta.is_zero() => {}
        _ => {
            return Err(Error::Invalid(
                "the deformation argument needs the standard bracket".into(),
            ))
        }
    }
    let ext = extended_chart(&chart)?;
    same_chart(nu_s.chart(), &ext).map_err(Error::from)?;
    same_chart(alpha_s.chart(), &ext).map_err(Error::from)?;
    if nu_s.degree() != 2 || alpha_s.degree() != 1 {
        return Err(Error::Invalid(
            "the family is a 2-form with a 1-form potential".into(),
        ));
    }
    let s_idx = n;
    if !alpha_s.comp(&[s_idx]).is_zero()
        || (0..n).any(|mu| !nu_s.comp(&[mu, s_idx]).is_zero())
    {
        return Err(Error::Invalid(
            "the family must use spatial differentials only".into(),
        ));
    }
    for mu in 0..n {
        for nu in mu + 1..n {
            let at_zero = nu_s.comp(&[mu, nu]).restrict_zero(&[s_idx]);
            if !at_zero.is_zero() {
                return Err(Error::check(
                    "bialgebroid.moser_nu0",
                    format!(
                        "the family must start at zero: component d{}^d{} is {at_zero} at s = 0",
                        chart.coord(mu),
                        chart.coord(nu)
                    ),
                ));
            }
            let drift = nu_s.comp(&[mu, nu]).diff(s_idx);
            let curl = alpha_s
                .comp(&[nu])
                .diff(mu)
                .sub(&alpha_s.comp(&[mu]).diff(nu));
            let defect = drift.add(&curl);
            if !defect.is_zero() {
                return Err(Error::check(
                    "bialgebroid.moser_inconsistent",
                    format!(
                        "d{}^d{} component of the rate plus the potential curl is {defect}",
                        chart.coord(mu),
                        chart.coord(nu)
                    ),
                ));
            }
        }
    }
    if opts.steps == 0 || opts.steps % 2 != 0 {
        return Err(Error::Invalid("the step count must be even and positive".into()));
    }

    let e_num = frame_to_f64(triple.e_frame());
    let f_num = frame_to_f64(triple.f_frame());
    let g_const = DMatrix::from_fn(r, r, |i, j| a.pairing()[i][j].to_float());
    let nu_comps: Vec<Vec<Poly<f64>>> = (0..n)
        .map(|mu| (0..n).map(|nu| nu_s.comp(&[mu, nu]).to_f64()).collect())
        .collect();
    let alpha_comps: Vec<Poly<f64>> = (0..n).map(|mu| alpha_s.comp(&[mu]).to_f64()).collect();

    let ext_point = |z: &[f64], s: f64| -> Vec<f64> {
        let mut p = z.to_vec();
        p.push(s);
        p
    };
    let nu_mat = |z: &[f64], s: f64| -> DMatrix<f64> {
        let p = ext_point(z, s);
        DMatrix::from_fn(n, n, |mu, nu| nu_comps[mu][nu].eval(&p))
    };
    let alpha_vec = |z: &[f64], s: f64| -> DVector<f64> {
        let p = ext_point(z, s);
        DVector::from_fn(n, |mu, _| alpha_comps[mu].eval(&p))
    };
    let cols_at = |frame: &[Vec<Poly<f64>>], z: &[f64]| -> DMatrix<f64> {
        let mut m = DMatrix::zeros(r, frame.len());
        for (j, col) in frame.iter().enumerate() {
            for i in 0..r {
                m[(i, j)] = col[i].eval(z);
            }
        }
        m
    };
    // Gauge action on an exact-frame column: the form rows pick up the
    // contraction of the 2-form with the tangent rows.
    let gauged_f = |z: &[f64], s: f64| -> DMatrix<f64> {
        let mut cols = cols_at(&f_num, z);
        let m = nu_mat(z, s);
        for k in 0..half {
            let u = cols.view((0, k), (n, 1)).clone_owned();
            let extra = m.transpose() * u;
            for mu in 0..n {
                cols[(n + mu, k)] += extra[mu];
            }
        }
        cols
    };

    let sigma_row = RefCell::new(CheckRow::new("sigma_decomposition"));
    let state_err: RefCell<Option<Error>> = RefCell::new(None);
    let flow_field = |z: &[f64], s: f64, record: bool| -> Option<DVector<f64>> {
        let cols_e = cols_at(&e_num, z);
        let cols_f = gauged_f(z, s);
        let mut b = DMatrix::zeros(half, half);
        for k in 0..half {
            let gf = &g_const * cols_f.column(k);
            for j in 0..half {
                b[(k, j)] = cols_e.column(j).dot(&gf);
            }
        }
        let alpha = alpha_vec(z, s);
        let af = tangent_rows(&cols_f, n);
        let ae = tangent_rows(&cols_e, n);
        let solved = match b.clone().lu().solve(&af.transpose()) {
            Some(x) => x,
            None => {
                *state_err.borrow_mut() = Some(Error::check(
                    "bialgebroid.moser_transversality",
                    format!("the deformed frame leaves the transverse range at s = {s:.4}, z = {z:?}"),
                ));
                return None;
            }
        };
        let pi_s = &ae * &solved;
        let x = pi_s.transpose() * &alpha;
        if record {
            // Forced decomposition: the tangent component of the
            // coanchor image must flow with the same field.
            let mut span = DMatrix::zeros(r, r);
            span.view_mut((0, 0), (r, half)).copy_from(&cols_e);
            span.view_mut((0, half), (r, half)).copy_from(&cols_f);
            let mut rhs = DVector::zeros(r);
            for mu in 0..n {
                rhs[n + mu] = -alpha[mu];
            }
            if let Some(lambda) = span.lu().solve(&rhs) {
                let mut sigma: DVector<f64> = DVector::zeros(r);
                for j in 0..half {
                    for i in 0..r {
                        sigma[i] += lambda[j] * cols_e[(i, j)];
                    }
                }
                let mut form_part: f64 = 0.0;
                let mut anchor_diff: f64 = 0.0;
                for mu in 0..n {
                    form_part = form_part.max(sigma[n + mu].abs());
                    anchor_diff = anchor_diff.max((sigma[mu] - x[mu]).abs());
                }
                if form_part > 1e-10 {
                    *state_err.borrow_mut() = Some(Error::Invalid(format!(
                        "the flow transport needs tangent generating sections, got form part {form_part:.3e}"
                    )));
                    return None;
                }
                sigma_row
                    .borrow_mut()
                    .record(anchor_diff, &format!("s = {s:.4}, z = {z:?}"));
            }
        }
        Some(x)
    };

    // State per grid point: position and flow Jacobian, advanced by a
    // classical fourth-order step with finite-difference linearization.
    let h = s_max / opts.steps as f64;
    let fd = opts.fd_step;
    let rk4 = |z0: &[f64], s0: f64, nsteps: usize, sign: f64, record: bool| -> Option<(Vec<f64>, DMatrix<f64>, Option<(Vec<f64>, DMatrix<f64>)>)> {
        let mut z = DVector::from_column_slice(z0);
        let mut jmat = DMatrix::identity(n, n);
        let mut halfway = None;
        let step = sign * h;
        for k in 0..nsteps {
            let s = s0 + sign * (k as f64) * h;
            let stage = |zs: &DVector<f64>, ss: f64, rec: bool| -> Option<(DVector<f64>, DMatrix<f64>)> {
                let zsl = zs.as_slice();
                let x = flow_field(zsl, ss, rec)?;
                let mut dx = DMatrix::zeros(n, n);
                for nu in 0..n {
                    let mut zp = zsl.to_vec();
                    let mut zm = zsl.to_vec();
                    zp[nu] += fd;
                    zm[nu] -= fd;
                    let xp = flow_field(&zp, ss, false)?;
                    let xm = flow_field(&zm, ss, false)?;
                    for mu in 0..n {
                        dx[(mu, nu)] = (xp[mu] - xm[mu]) / (2.0 * fd);
                    }
                }
                Some((x, dx))
            };
            let (x1, d1) = stage(&z, s, record)?;
            let (x2, d2) = stage(&(&z + &x1 * (step / 2.0)), s + step / 2.0, false)?;
            let j2 = &d2 * (&jmat + (&d1 * &jmat) * (step / 2.0));
            let (x3, d3) = stage(&(&z + &x2 * (step / 2.0)), s + step / 2.0, false)?;
            let j1 = &d1 * &jmat;
            let j3 = &d3 * (&jmat + &j2 * (step / 2.0));
            let (x4, d4) = stage(&(&z + &x3 * step), s + step, false)?;
            let j4 = &d4 * (&jmat + &j3 * step);
            z += (&x1 + &x2 * 2.0 + &x3 * 2.0 + x4) * (step / 6.0);
            jmat += (j1 + j2 * 2.0 + j3 * 2.0 + j4) * (step / 6.0);
            if k + 1 == nsteps / 2 && nsteps == opts.steps {
                halfway = Some((z.as_slice().to_vec(), jmat.clone()));
            }
        }
        Some((z.as_slice().to_vec(), jmat, halfway))
    };

    let mut half_row = CheckRow::new("dirac_return_half");
    let mut full_row = CheckRow::new("dirac_return_full");
    let mut base_row = CheckRow::new("base_dirac_preserved");
    let mut endpoints: Vec<(Vec<f64>, Vec<f64>, DMatrix<f64>)> = Vec::new();
    for p in triple.samples() {
        let out = rk4(p, 0.0, opts.steps, 1.0, true);
        let (z_full, j_full, halfway) = match out {
            Some(v) => v,
            None => {
                return Err(state_err
                    .borrow_mut()
                    .take()
                    .unwrap_or_else(|| Error::Invalid("flow failed".into())))
            }
        };
        let (z_half, j_half) = halfway.expect("even step count records the midpoint");
        for (label, s_at, z_at, j_at) in [
            ("half", s_max / 2.0, &z_half, &j_half),
            ("full", s_max, &z_full, &j_full),
        ] {
            let transported = push_columns(&gauged_f(p, s_at), j_at, n)?;
            let target = cols_at(&f_num, z_at);
            let res = numeric::subspace_residual(&transported, &target);
            let row = if label == "half" { &mut half_row } else { &mut full_row };
            row.record(res, &format!("from {p:?}"));
            let e_transported = push_columns(&cols_at(&e_num, p), j_at, n)?;
            let e_target = cols_at(&e_num, z_at);
            base_row.record(
                numeric::subspace_residual(&e_transported, &e_target),
                &format!("s = {s_at:.4} from {p:?}"),
            );
        }
        endpoints.push((p.clone(), z_full, j_full));
    }

    // Pushforward bookkeeping at the first grid point: the transported
    // family form must agree with minus the differential of the
    // integrated pushed potential.
    let (p0, q0, j_full) = endpoints.first().cloned().expect("samples are nonempty");
    let j_inv = j_full
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::Invalid("flow Jacobian singular at the bookkeeping point".into()))?;
    let nu_end = nu_mat(&p0, s_max);
    let pushed = j_inv.transpose() * &nu_end * &j_inv;
    let nodes = numeric::gauss_legendre(opts.quad_nodes, 0.0, s_max);
    let lambda_at = |y: &[f64]| -> Result<DVector<f64>> {
        let mut acc = DVector::zeros(n);
        for &(u, w) in &nodes {
            if u <= 0.0 {
                continue;
            }
            let (z0, jb, _) = rk4(y, u, opts.steps, -1.0, false).ok_or_else(|| {
                state_err
                    .borrow_mut()
                    .take()
                    .unwrap_or_else(|| Error::Invalid("backward flow failed".into()))
            })?;
            let x = flow_field(&z0, u, false).ok_or_else(|| {
                state_err
                    .borrow_mut()
                    .take()
                    .unwrap_or_else(|| Error::Invalid("flow field failed".into()))
            })?;
            let m = nu_mat(&z0, u);
            let beta = alpha_vec(&z0, u) - m.transpose() * &x;
            acc += jb.transpose() * beta * w;
        }
        Ok(acc)
    };
    let mut d_lambda = DMatrix::zeros(n, n);
    let hb = opts.bookkeeping_fd;
    let mut grads = Vec::with_capacity(n);
    for mu in 0..n {
        let mut yp = q0.clone();
        let mut ym = q0.clone();
        yp[mu] += hb;
        ym[mu] -= hb;
        let lp = lambda_at(&yp)?;
        let lm = lambda_at(&ym)?;
        grads.push((lp - lm) / (2.0 * hb));
    }
    for mu in 0..n {
        for nu in 0..n {
            d_lambda[(mu, nu)] = grads[mu][nu] - grads[nu][mu];
        }
    }
    let mut book_row = CheckRow::new("gauge_bookkeeping");
    book_row.record(
        (&pushed + &d_lambda).abs().max(),
        &format!("at the image of {p0:?}"),
    );

    let rows = vec![
        sigma_row.into_inner(),
        half_row,
        full_row,
        base_row,
        book_row,
    ];
    Ok(MoserReport { rows })
}

fn tangent_rows(cols: &DMatrix<f64>, n: usize) -> DMatrix<f64> {
    cols.view((0, 0), (n, cols.ncols())).clone_owned()
}

/// Transport exact-frame columns along a base diffeomorphism: tangent
/// rows push forward by the Jacobian, form rows by its inverse
/// transpose.
fn push_columns(cols: &DMatrix<f64>, jmat: &DMatrix<f64>, n: usize) -> Result<DMatrix<f64>> {
    let j_inv_t = jmat
        .transpose()
        .try_inverse()
        .ok_or_else(|| Error::Invalid("flow Jacobian singular during transport".into()))?;
    let mut out = cols.clone();
    let k = cols.ncols();
    let u = cols.view((0, 0), (n, k)).clone_owned();
    let w = cols.view((n, 0), (n, k)).clone_owned();
    out.view_mut((0, 0), (n, k)).copy_from(&(jmat * u));
    out.view_mut((n, 0), (n, k)).copy_from(&(j_inv_t * w));
    Ok(out)
}
