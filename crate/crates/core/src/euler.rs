//! Euler-like vector fields and the tubular embeddings they generate.
//!
//! A vector field on a submanifold chart is Euler-like when it vanishes on
//! the transversal and its linearization along the normal directions is the
//! fiber-dilation field. Such a field determines a distinguished vector
//! field `W` on the deformation chart with `W(t) = 1`; flowing `W` from the
//! zero fiber for unit time and reading off base coordinates produces the
//! normal-form embedding `psi`. Both a numeric evaluator for `psi` and its
//! exact jet along the transversal are provided.

use nalgebra::DMatrix;


use crate::defspace::DeformationSpace;
use crate::error::{Error, Result};
use crate::flow::{self, FlowOpts};
use crate::poly::{Poly, Trunc};
use crate::scalar::Scalar;
use crate::tensor::{PolyMap, VectorField};

/// Exact witness that a field is Euler-like: `X = sum a_i dx_i +
/// sum (y_j + b_j) dy_j` with `a_i` vanishing on the transversal and `b_j`
/// vanishing to second order in the normal coordinates. Vectors are indexed
/// by chart position; entries at the opposite block are zero.
#[derive(Debug, Clone)]
pub struct EulerDecomposition<C: Scalar> {
    pub a: Vec<Poly<C>>,
    pub b: Vec<Poly<C>>,
}

/// Outcome of the Euler-like test: the exact decomposition, or the first
/// violated vanishing condition with the offending term.
#[derive(Debug, Clone)]
pub enum EulerReport<C: Scalar> {
    EulerLike(EulerDecomposition<C>),
    NotEulerLike {
        component: String,
        required_order: i32,
        witness: String,
    },
}

impl<C: Scalar> EulerReport<C> {
    pub fn is_euler_like(&self) -> bool {
        matches!(self, EulerReport::EulerLike(_))
    }

    pub fn describe(&self) -> String {
        match self {
            EulerReport::EulerLike(_) => "Euler-like".to_string(),
            EulerReport::NotEulerLike {
                component,
                required_order,
                witness,
            } => format!(
                "component @{component} must vanish to order {required_order} in the normal coordinates; term {witness} does not"
            ),
        }
    }

    pub fn decomposition(&self) -> Option<&EulerDecomposition<C>> {
        match self {
            EulerReport::EulerLike(d) => Some(d),
            EulerReport::NotEulerLike { .. } => None,
        }
    }
}

fn lowest_term_witness<C: Scalar>(p: &Poly<C>, normal: &[usize], below: i32) -> String {
    let mut best: Option<(i32, String)> = None;
    for (m, c) in p.terms() {
        let ord = m.degree_in(normal);
        if ord < below && best.as_ref().map_or(true, |(o, _)| ord < *o) {
            let s = Poly::from_terms(p.chart(), vec![(m.0.clone(), c.clone())]).to_string();
            best = Some((ord, s));
        }
    }
    best.map(|(_, s)| s).unwrap_or_else(|| "0".to_string())
}

/// Exact decision procedure: transverse components must vanish to first
/// order in the normal coordinates, and normal components must equal the
/// coordinate plus a second-order remainder.
pub fn euler_like_check<C: Scalar>(x: &VectorField<C>) -> Result<EulerReport<C>> {
    let chart = x.chart();
    if !chart.is_submanifold() {
        return Err(Error::Invalid(format!(
            "chart {} has no transverse/normal split; the Euler-like condition needs one",
            chart.name()
        )));
    }
    let normal = chart.normal();
    let mut a = vec![Poly::zero(chart); chart.dim()];
    let mut b = vec![Poly::zero(chart); chart.dim()];
    for &i in chart.transverse() {
        let c = x.comp(i);
        if c.vanishing_order(normal).unwrap_or(1) < 1 {
            return Ok(EulerReport::NotEulerLike {
                component: chart.coord(i).to_string(),
                required_order: 1,
                witness: lowest_term_witness(c, normal, 1),
            });
        }
        a[i] = c.clone();
    }
    for &j in normal {
        let rem = x.comp(j).sub(&Poly::var(chart, j));
        if rem.vanishing_order(normal).unwrap_or(2) < 2 {
            return Ok(EulerReport::NotEulerLike {
                component: chart.coord(j).to_string(),
                required_order: 2,
                witness: lowest_term_witness(&rem, normal, 2),
            });
        }
        b[j] = rem;
    }
    Ok(EulerReport::EulerLike(EulerDecomposition { a, b }))
}

fn require_euler_like<C: Scalar>(x: &VectorField<C>) -> Result<EulerDecomposition<C>> {
    match euler_like_check(x)? {
        EulerReport::EulerLike(d) => Ok(d),
        report @ EulerReport::NotEulerLike { .. } => {
            Err(Error::check("euler.not_euler_like", report.describe()))
        }
    }
}

/// The deformation-chart vector field `W` attached to an Euler-like `X`:
/// `dt + sum (a_i(x, t*y~)/t) dx_i + sum (b_j(x, t*y~)/t^2) dy~_j`, all
/// divisions exact. Satisfies `W(t) = 1` identically.
pub fn w_field<C: Scalar>(
    ds: &DeformationSpace,
    x: &VectorField<C>,
) -> Result<VectorField<C>> {
    let dec = require_euler_like(x)?;
    let t = ds.t_index();
    let mut comps = vec![Poly::zero(ds.def_chart()); ds.def_chart().dim()];
    for &i in ds.base().transverse() {
        comps[i] = ds
            .pullback_kappa(&dec.a[i])
            .divide_by_var(t)
            .expect("first-order vanishing gives one t factor");
    }
    for &j in ds.base().normal() {
        comps[j] = ds
            .pullback_kappa(&dec.b[j])
            .divide_by_var(t)
            .and_then(|p| p.divide_by_var(t))
            .expect("second-order vanishing gives two t factors");
    }
    comps[t] = Poly::one(ds.def_chart());
    Ok(VectorField::new(ds.def_chart(), comps))
}

/// Endpoint of the rescaling flow through `(m, t0)` for duration `s`,
/// computed by the closed-form reduction to the flow of `X` on the base:
/// the base point moves for time `log(1 - s/t0)` along `X` (in the
/// convention where the flow of `d/dt` translates by `-s`) and the
/// deformation parameter becomes `t0 - s`. Requires `s/t0 < 1`.
pub fn w_flow_explicit<C: Scalar>(
    x: &VectorField<C>,
    m: &[f64],
    t0: f64,
    s: f64,
    opts: &FlowOpts,
) -> Result<(Vec<f64>, f64)> {
    if t0 == 0.0 || s / t0 >= 1.0 {
        return Err(Error::check(
            "euler.flow_domain",
            format!("rescaling flow needs s/t0 < 1, got s = {s}, t0 = {t0}"),
        ));
    }
    let u = (1.0 - s / t0).ln();
    let base = x.flow_point(m, u, opts)?;
    Ok((base, t0 - s))
}

/// Same endpoint by direct numeric integration of `-W` on the deformation
/// chart, converted back through the rescaling map. Cross-check companion
/// for `w_flow_explicit`.
pub fn w_flow_numeric<C: Scalar>(
    ds: &DeformationSpace,
    x: &VectorField<C>,
    m: &[f64],
    t0: f64,
    s: f64,
    opts: &FlowOpts,
) -> Result<(Vec<f64>, f64)> {
    if t0 == 0.0 {
        return Err(Error::Invalid("start fiber must have t0 != 0".into()));
    }
    let w = w_field(ds, x)?;
    let mut z0: Vec<f64> = Vec::with_capacity(ds.def_chart().dim());
    for i in 0..ds.base().dim() {
        z0.push(if ds.base().is_normal(i) { m[i] / t0 } else { m[i] });
    }
    z0.push(t0);
    let z = w.flow_point(&z0, -s, opts)?;
    let t_end = z[ds.t_index()];
    let base = (0..ds.base().dim())
        .map(|i| if ds.base().is_normal(i) { t_end * z[i] } else { z[i] })
        .collect();
    Ok((base, t_end))
}

/// The normal-form embedding determined by an Euler-like field: a numeric
/// evaluator from the linear-model chart into the base chart, together
/// with its exact jet along the transversal.
#[derive(Debug, Clone)]
pub struct TubularEmbedding<C: Scalar> {
    ds: DeformationSpace,
    w: VectorField<C>,
    jet: PolyMap<C>,
    order: usize,
    opts: FlowOpts,
}

impl<C: Scalar> TubularEmbedding<C> {
    pub fn space(&self) -> &DeformationSpace {
        &self.ds
    }

    /// The deformation-chart field whose unit-time flow defines the map.
    pub fn w(&self) -> &VectorField<C> {
        &self.w
    }

    /// Jet of the embedding along the transversal, as a polynomial map from
    /// the linear-model chart to the base chart, exact through normal
    /// degree `order`.
    pub fn jet(&self) -> &PolyMap<C> {
        &self.jet
    }

    pub fn order(&self) -> usize {
        self.order
    }

    fn def_point(&self, v: &[f64]) -> Vec<f64> {
        let mut z = v.to_vec();
        z.push(0.0);
        z
    }

    /// Numeric value: integrate `W` from `(v, t = 0)` to `t = 1`; at `t = 1`
    /// the rescaling map is the identity on coordinates.
    pub fn eval(&self, v: &[f64]) -> Result<Vec<f64>> {
        let z = self.w.flow_point(&self.def_point(v), 1.0, &self.opts)?;
        Ok(z[..self.ds.base().dim()].to_vec())
    }

    /// Value and Jacobian, via the joint variational flow of `W`.
    pub fn eval_jacobian(&self, v: &[f64]) -> Result<(Vec<f64>, DMatrix<f64>)> {
        let dim = self.ds.def_chart().dim();
        let n = self.ds.base().dim();
        let w_num: Vec<Poly<f64>> = self.w.comps().iter().map(|p| p.to_f64()).collect();
        let dw: Vec<Vec<Poly<f64>>> = w_num
            .iter()
            .map(|p| (0..dim).map(|nu| p.diff(nu)).collect())
            .collect();
        // State layout: def-chart point, then the dim x n variation matrix
        // (columns = initial x, y~ directions) in row-major order.
        let mut z0 = self.def_point(v);
        for mu in 0..dim {
            for c in 0..n {
                z0.push(if mu == c { 1.0 } else { 0.0 });
            }
        }
        let rhs = move |_s: f64, z: &[f64]| {
            let pt = &z[..dim];
            let mut out = Vec::with_capacity(z.len());
            for p in &w_num {
                out.push(p.eval(pt));
            }
            let a: Vec<Vec<f64>> = dw
                .iter()
                .map(|row| row.iter().map(|p| p.eval(pt)).collect())
                .collect();
            for mu in 0..dim {
                for c in 0..n {
                    let mut acc = 0.0;
                    for nu in 0..dim {
                        acc += a[mu][nu] * z[dim + nu * n + c];
                    }
                    out.push(acc);
                }
            }
            out
        };
        let end = flow::dopri5(rhs, &z0, 0.0, 1.0, &self.tube_opts(&z0))?;
        let value = end[..n].to_vec();
        let mut jac = DMatrix::zeros(n, n);
        for mu in 0..n {
            for c in 0..n {
                jac[(mu, c)] = end[dim + mu * n + c];
            }
        }
        Ok((value, jac))
    }

    /// Residual of the defining relatedness property at a sample point: the
    /// Jacobian maps the fiber-dilation field to `X` at the image point.
    pub fn relatedness_residual(&self, x: &VectorField<C>, v: &[f64]) -> Result<f64> {
        let (value, jac) = self.eval_jacobian(v)?;
        let n = self.ds.base().dim();
        let mut e = DMatrix::zeros(n, 1);
        for &j in self.ds.base().normal() {
            e[(j, 0)] = v[j];
        }
        let pushed = jac * e;
        let target = x.eval_f64(&value);
        let mut res: f64 = 0.0;
        for i in 0..n {
            res = res.max((pushed[(i, 0)] - target[i]).abs());
        }
        Ok(res)
    }

    fn tube_opts(&self, z0: &[f64]) -> FlowOpts {
        // The variational components are not coordinates; exempt them from
        // the chart box by widening it to cover their plausible growth.
        let mut o = self.opts.clone();
        let start = z0.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        o.box_limit = o.box_limit.max(100.0 * (start + 1.0));
        o
    }
}

/// Build the embedding for an Euler-like field: exact jet through normal
/// degree `order` by fixpoint integration of `W` on the deformation chart,
/// plus the numeric flow evaluator.
pub fn tubular_embedding<C: Scalar>(
    ds: &DeformationSpace,
    x: &VectorField<C>,
    order: usize,
    opts: &FlowOpts,
) -> Result<TubularEmbedding<C>> {
    let w = w_field(ds, x)?;
    let def = ds.def_chart();
    let n = ds.base().dim();
    let t = ds.t_index();
    let trunc = Trunc {
        vars: ds.base().normal().to_vec(),
        order,
    };
    let init: Vec<Poly<C>> = (0..n).map(|i| Poly::var(def, i)).collect();
    let w_comps: Vec<Poly<C>> = (0..n).map(|i| w.comp(i).clone()).collect();
    let t_var = Poly::var(def, t);
    let sol = flow::picard_solve(&init, t, &trunc, 4 * order + 16, |z| {
        let mut images: Vec<Poly<C>> = z.to_vec();
        images.push(t_var.clone());
        w_comps
            .iter()
            .map(|p| p.substitute_trunc(&images, &trunc))
            .collect()
    })?;
    let at_one: Vec<Poly<C>> = {
        let mut images: Vec<Poly<C>> = (0..n).map(|i| Poly::var(def, i)).collect();
        images.push(Poly::one(def));
        sol.iter()
            .map(|p| {
                p.substitute_trunc(&images, &trunc)
                    .expect("setting t = 1 cannot fail")
            })
            .collect()
    };
    let comps: Vec<Poly<C>> = at_one.iter().map(|p| ds.drop_t(p)).collect();
    let jet = PolyMap::new(ds.nu(), ds.base(), comps);
    for i in 0..n {
        let on_transversal = jet.comp(i).restrict_zero(ds.base().normal());
        let expected = if ds.base().is_normal(i) {
            Poly::zero(ds.nu())
        } else {
            Poly::var(ds.nu(), i)
        };
        if on_transversal.sub(&expected) != Poly::zero(ds.nu()) {
            return Err(Error::Numeric(format!(
                "embedding jet does not restrict to the identity on the transversal (component {})",
                ds.base().coord(i)
            )));
        }
        let linear = jet.comp(i).homog_part(ds.base().normal(), 1);
        let expected_linear = if ds.base().is_normal(i) {
            Poly::var(ds.nu(), i)
        } else {
            Poly::zero(ds.nu())
        };
        if linear.sub(&expected_linear) != Poly::zero(ds.nu()) {
            return Err(Error::Numeric(format!(
                "embedding jet does not linearize to the canonical identification (component {})",
                ds.base().coord(i)
            )));
        }
    }
    Ok(TubularEmbedding {
        ds: ds.clone(),
        w,
        jet,
        order,
        opts: opts.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chart::Chart;
    use crate::scalar::Rat;
    use crate::tensor::parse_tensor;
    use std::sync::Arc;

    fn vf(chart: &Arc<Chart>, s: &str) -> VectorField<Rat> {
        parse_tensor::<Rat>(chart, s).unwrap().into_vector_field().unwrap()
    }

    fn chart_xy() -> Arc<Chart> {
        Chart::submanifold("m", &["x"], &["y"]).unwrap()
    }

    #[test]
    fn euler_like_decision_table() {
        let chart = chart_xy();
        assert!(euler_like_check(&vf(&chart, "y*@y")).unwrap().is_euler_like());
        assert!(!euler_like_check(&vf(&chart, "2*y*@y")).unwrap().is_euler_like());
        assert!(euler_like_check(&vf(&chart, "y*@y + y^2*@y")).unwrap().is_euler_like());

        // The first-order-in-y remainder x*y is the canonical trap: it
        // vanishes on the transversal but not to second order.
        match euler_like_check(&vf(&chart, "y*@y + x*y*@y")).unwrap() {
            EulerReport::NotEulerLike {
                component,
                required_order,
                witness,
            } => {
                assert_eq!(component, "y");
                assert_eq!(required_order, 2);
                assert_eq!(witness, "x*y");
            }
            other => panic!("expected failure, got {other:?}"),
        }

        match euler_like_check(&vf(&chart, "x*@x + y*@y")).unwrap() {
            EulerReport::NotEulerLike { component, witness, .. } => {
                assert_eq!(component, "x");
                assert_eq!(witness, "x");
            }
            other => panic!("expected failure, got {other:?}"),
        }
    }

    #[test]
    fn w_field_examples() {
        let chart = chart_xy();
        let ds = DeformationSpace::new(&chart).unwrap();

        let w = w_field(&ds, &vf(&chart, "y*@y")).unwrap();
        assert!(w.comp(0).is_zero());
        assert!(w.comp(1).is_zero());
        assert_eq!(*w.comp(2), Poly::one(ds.def_chart()));

        let w = w_field(&ds, &vf(&chart, "y*@y + y^2*@y")).unwrap();
        assert_eq!(*w.comp(1), Poly::parse(ds.def_chart(), "y~^2").unwrap());

        let w = w_field(&ds, &vf(&chart, "y*@y + y^2*@x")).unwrap();
        assert_eq!(*w.comp(0), Poly::parse(ds.def_chart(), "t*y~^2").unwrap());
        assert!(w.comp(1).is_zero());

        assert!(w_field(&ds, &vf(&chart, "2*y*@y")).is_err());
    }

    #[test]
    fn w_is_dual_to_t() {
        let chart = chart_xy();
        let ds = DeformationSpace::new(&chart).unwrap();
        let w = w_field(&ds, &vf(&chart, "y*@y + y^2*@y + x*y^2*@x")).unwrap();
        assert_eq!(w.apply(&ds.t_var()), Poly::one(ds.def_chart()));
    }

    #[test]
    fn explicit_and_numeric_rescaling_flows_agree() {
        let chart = chart_xy();
        let ds = DeformationSpace::new(&chart).unwrap();
        let x = vf(&chart, "y*@y + y^2*@y + x*y^2*@x");
        let opts = FlowOpts::default();
        for (m, t0, s) in [
            ([0.3, 0.4], 1.0, 0.5),
            ([0.3, 0.4], 1.0, -1.0),
            ([-0.2, 0.1], -1.0, 1.0),
            ([0.5, -0.3], 2.0, 1.5),
        ] {
            let (be, te) = w_flow_explicit(&x, &m, t0, s, &opts).unwrap();
            let (bn, tn) = w_flow_numeric(&ds, &x, &m, t0, s, &opts).unwrap();
            assert!((te - tn).abs() < 1e-9, "t mismatch: {te} vs {tn}");
            for i in 0..2 {
                assert!(
                    (be[i] - bn[i]).abs() < 1e-8,
                    "coordinate {i}: {} vs {}",
                    be[i],
                    bn[i]
                );
            }
        }
        assert!(w_flow_explicit(&x, &[0.3, 0.4], 1.0, 1.0, &opts).is_err());
    }

    #[test]
    fn embedding_of_dilation_field_is_identity() {
        let chart = chart_xy();
        let ds = DeformationSpace::new(&chart).unwrap();
        let tube = tubular_embedding(&ds, &vf(&chart, "y*@y"), 6, &FlowOpts::default()).unwrap();
        assert_eq!(*tube.jet().comp(0), Poly::var(ds.nu(), 0));
        assert_eq!(*tube.jet().comp(1), Poly::var(ds.nu(), 1));
    }

    #[test]
    fn embedding_jet_of_quadratic_field_is_geometric_series() {
        let chart = chart_xy();
        let ds = DeformationSpace::new(&chart).unwrap();
        let x = vf(&chart, "y*@y + y^2*@y");
        let tube = tubular_embedding(&ds, &x, 8, &FlowOpts::default()).unwrap();
        let mut expected = Poly::zero(ds.nu());
        for k in 1..=8 {
            expected = expected.add(&Poly::var_pow(ds.nu(), 1, k));
        }
        assert_eq!(*tube.jet().comp(1), expected);

        // Numeric evaluator vs the closed form y~/(1 - y~).
        for v in [-0.5, -0.25, 0.1, 0.4, 0.5] {
            let image = tube.eval(&[0.0, v]).unwrap();
            let exact = v / (1.0 - v);
            assert!(
                (image[1] - exact).abs() < 1e-9,
                "at {v}: {} vs {exact}",
                image[1]
            );
        }
    }

    #[test]
    fn embedding_jet_with_transverse_coupling() {
        let chart = chart_xy();
        let ds = DeformationSpace::new(&chart).unwrap();
        let x = vf(&chart, "y*@y + y^2*@x");
        let tube = tubular_embedding(&ds, &x, 6, &FlowOpts::default()).unwrap();
        let expected0 = Poly::parse(ds.nu(), "x + 1/2*y~^2").unwrap();
        assert_eq!(*tube.jet().comp(0), expected0);
        assert_eq!(*tube.jet().comp(1), Poly::var(ds.nu(), 1));
    }

    #[test]
    fn relatedness_and_homogeneity() {
        let chart = chart_xy();
        let ds = DeformationSpace::new(&chart).unwrap();
        let x = vf(&chart, "y*@y + y^2*@y + x*y^2*@x");
        let opts = FlowOpts::default();
        let tube = tubular_embedding(&ds, &x, 6, &opts).unwrap();

        for v in [[0.4, 0.3], [1.0, -0.2], [-0.5, 0.45]] {
            let res = tube.relatedness_residual(&x, &v).unwrap();
            assert!(res < 1e-7, "relatedness residual {res} at {v:?}");
        }

        // Scaling a point into the fiber and flowing for the scale time
        // lands on the embedded image: psi(t*v) = kappa(flow_t(j(v))).
        for (v, tt) in [([0.4, 0.3], 0.5), ([0.8, -0.4], 0.25), ([-0.3, 0.2], 0.75)] {
            let scaled = [v[0], tt * v[1]];
            let lhs = tube.eval(&scaled).unwrap();
            let z = tube
                .w()
                .flow_point(&[v[0], v[1], 0.0], tt, &opts)
                .unwrap();
            let rhs = [z[0], z[2] * z[1]];
            for i in 0..2 {
                assert!(
                    (lhs[i] - rhs[i]).abs() < 1e-7,
                    "homogeneity at {v:?}, t = {tt}: {} vs {}",
                    lhs[i],
                    rhs[i]
                );
            }
        }
    }
}
