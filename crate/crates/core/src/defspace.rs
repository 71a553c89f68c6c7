//! The deformation-to-the-normal-cone chart attached to a submanifold chart.
//!
//! Starting from a chart with transverse coordinates `x` and normal
//! coordinates `y`, this module builds the chart with coordinates
//! `(x, y~, t)` in which the rescaling map `kappa(x, y~, t) = (x, t*y~)`
//! contracts the fibers. The `t = 0` slice carries the linearized (normal
//! bundle) geometry, every `t = a != 0` slice is a copy of the original
//! chart, and objects on the base lift to the big chart by exact division
//! by `t`. All divisions here are symbolic and exact; a lift that would
//! require dividing a term without a `t` factor is refused with the
//! offending term as witness.

use std::sync::Arc;

use thiserror::Error;

use crate::chart::Chart;
use crate::poly::{AlgebraError, Poly};
use crate::scalar::Scalar;
use crate::tensor::{DiffForm, MultiVector, PolyMap, VectorField};

/// Why a lift into the deformation chart is undefined.
#[derive(Debug, Error)]
pub enum DefspaceError {
    #[error("{func} does not vanish on the transversal: term {witness}")]
    NotVanishingOnN { func: String, witness: String },
    #[error("vector field is not tangent to the transversal: component @{comp} contains {witness}")]
    NotTangentToN { comp: String, witness: String },
    #[error(transparent)]
    Algebra(#[from] AlgebraError),
}

impl DefspaceError {
    pub fn code(&self) -> &'static str {
        match self {
            DefspaceError::NotVanishingOnN { .. } => "defspace.not_vanishing_on_transversal",
            DefspaceError::NotTangentToN { .. } => "defspace.not_tangent_to_transversal",
            DefspaceError::Algebra(_) => "algebra.error",
        }
    }
}

/// The three charts of the deformation construction: the original
/// submanifold chart (`base`), the linear-model chart (`nu`, same
/// coordinates with normal names marked by a trailing `~`), and the total
/// chart (`def`, which appends the deformation parameter `t`).
#[derive(Debug, Clone)]
pub struct DeformationSpace {
    base: Arc<Chart>,
    nu: Arc<Chart>,
    def: Arc<Chart>,
}

impl DeformationSpace {
    pub fn new(base: &Arc<Chart>) -> crate::error::Result<Self> {
        if !base.is_submanifold() {
            return Err(crate::error::Error::Invalid(format!(
                "chart {} has no transverse/normal split",
                base.name()
            )));
        }
        for u in base.units() {
            if base.is_normal(u) {
                return Err(crate::error::Error::Invalid(format!(
                    "normal coordinate {} cannot be a unit: it vanishes on the transversal",
                    base.coord(u)
                )));
            }
        }
        if base.index_of("t").is_some() {
            return Err(crate::error::Error::Invalid(
                "coordinate name t is reserved for the deformation parameter".into(),
            ));
        }
        let mut nu_coords: Vec<String> = Vec::with_capacity(base.dim());
        for i in 0..base.dim() {
            let c = base.coord(i);
            if base.is_normal(i) {
                if c.ends_with('~') {
                    return Err(crate::error::Error::Invalid(format!(
                        "normal coordinate {c} already carries the fiber marker ~"
                    )));
                }
                nu_coords.push(format!("{c}~"));
            } else {
                nu_coords.push(c.to_string());
            }
        }
        let unit_names: Vec<&str> = base.unit_names();
        let nu = Chart::build(
            &format!("nu({})", base.name()),
            &nu_coords.iter().map(|s| s.as_str()).collect::<Vec<_>>(),
            base.transverse(),
            base.normal(),
            &unit_names,
        )?;
        let mut def_coords = nu_coords.clone();
        def_coords.push("t".to_string());
        let mut def_transverse = base.transverse().to_vec();
        def_transverse.push(base.dim());
        let def = Chart::build(
            &format!("D({})", base.name()),
            &def_coords.iter().map(|s| s.as_str()).collect::<Vec<_>>(),
            &def_transverse,
            base.normal(),
            &unit_names,
        )?;
        Ok(DeformationSpace {
            base: base.clone(),
            nu,
            def,
        })
    }

    pub fn base(&self) -> &Arc<Chart> {
        &self.base
    }

    /// Chart of the linear model (the zero fiber).
    pub fn nu(&self) -> &Arc<Chart> {
        &self.nu
    }

    /// Chart of the full deformation space.
    pub fn def_chart(&self) -> &Arc<Chart> {
        &self.def
    }

    /// Index of the deformation parameter in the `def` chart.
    pub fn t_index(&self) -> usize {
        self.base.dim()
    }

    pub fn t_var<C: Scalar>(&self) -> Poly<C> {
        Poly::var(&self.def, self.t_index())
    }

    /// The rescaling map `def -> base`: transverse coordinates pass through,
    /// normal ones are scaled by `t`.
    pub fn kappa<C: Scalar>(&self) -> PolyMap<C> {
        let t = self.t_var::<C>();
        let comps = (0..self.base.dim())
            .map(|i| {
                let v = Poly::var(&self.def, i);
                if self.base.is_normal(i) {
                    v.mul(&t)
                } else {
                    v
                }
            })
            .collect();
        PolyMap::new(&self.def, &self.base, comps)
    }

    /// Inclusion of the zero fiber, `nu -> def` (sets `t = 0`).
    pub fn j_map<C: Scalar>(&self) -> PolyMap<C> {
        let mut comps: Vec<Poly<C>> = (0..self.base.dim())
            .map(|i| Poly::var(&self.nu, i))
            .collect();
        comps.push(Poly::zero(&self.nu));
        PolyMap::new(&self.nu, &self.def, comps)
    }

    /// Inclusion of the fiber over `t = a` (`a != 0`), `base -> def`:
    /// normal coordinates are divided by `a`.
    pub fn fiber_inclusion<C: Scalar>(&self, a: &C) -> crate::error::Result<PolyMap<C>> {
        if a.is_zero() {
            return Err(crate::error::Error::Invalid(
                "fiber parameter must be nonzero; the zero fiber is reached by j_map".into(),
            ));
        }
        let inv = C::one() / a.clone();
        let mut comps: Vec<Poly<C>> = (0..self.base.dim())
            .map(|i| {
                let v = Poly::var(&self.base, i);
                if self.base.is_normal(i) {
                    v.scale(&inv)
                } else {
                    v
                }
            })
            .collect();
        comps.push(Poly::constant(&self.base, a.clone()));
        Ok(PolyMap::new(&self.base, &self.def, comps))
    }

    /// The grading field `t dt - sum y~ dy~` on the `def` chart. Its flow
    /// rescales fibers; weights are `t: +1`, `y~: -1`, transverse: `0`.
    pub fn theta<C: Scalar>(&self) -> VectorField<C> {
        let mut comps = vec![Poly::zero(&self.def); self.def.dim()];
        for &j in self.base.normal() {
            comps[j] = Poly::var(&self.def, j).neg();
        }
        comps[self.t_index()] = self.t_var();
        VectorField::new(&self.def, comps)
    }

    /// Pullback along `kappa` (substitute `y = t*y~`). Always defined.
    pub fn pullback_kappa<C: Scalar>(&self, f: &Poly<C>) -> Poly<C> {
        self.kappa()
            .pullback_scalar(f)
            .expect("kappa images are invertible monomials on units")
    }

    fn witness_not_vanishing<C: Scalar>(&self, f: &Poly<C>) -> String {
        for (m, c) in f.terms() {
            if m.degree_in(self.base.normal()) == 0 {
                return Poly::from_terms(&self.base, vec![(m.0.clone(), c.clone())]).to_string();
            }
        }
        "0".to_string()
    }

    /// Lift of a function vanishing on the transversal: `(kappa^* f)/t`.
    pub fn lift_scalar<C: Scalar>(&self, f: &Poly<C>) -> Result<Poly<C>, DefspaceError> {
        if f.vanishing_order(self.base.normal()).unwrap_or(1) < 1 {
            return Err(DefspaceError::NotVanishingOnN {
                func: f.to_string(),
                witness: self.witness_not_vanishing(f),
            });
        }
        Ok(self
            .pullback_kappa(f)
            .divide_by_var(self.t_index())
            .expect("each term carries a normal factor, hence a t factor"))
    }

    /// Rescaled vertical lift of an arbitrary vector field: transverse
    /// components gain a factor `t`, normal components pass to the fiber
    /// frame unchanged. Equals `t` times the tangent lift when the latter
    /// exists.
    pub fn lift_vector_hat<C: Scalar>(&self, y: &VectorField<C>) -> VectorField<C> {
        let t = self.t_var::<C>();
        let mut comps = vec![Poly::zero(&self.def); self.def.dim()];
        for i in 0..self.base.dim() {
            let pulled = self.pullback_kappa(y.comp(i));
            comps[i] = if self.base.is_normal(i) {
                pulled
            } else {
                pulled.mul(&t)
            };
        }
        VectorField::new(&self.def, comps)
    }

    /// Tangent lift of a vector field tangent to the transversal. Its
    /// restriction to a `t = a` fiber reproduces the input; its restriction
    /// to `t = 0` is the linear approximation on the `nu` chart.
    pub fn lift_vector_tangent<C: Scalar>(
        &self,
        y: &VectorField<C>,
    ) -> Result<VectorField<C>, DefspaceError> {
        let mut comps = vec![Poly::zero(&self.def); self.def.dim()];
        for i in 0..self.base.dim() {
            let c = y.comp(i);
            if self.base.is_normal(i) {
                if c.vanishing_order(self.base.normal()).unwrap_or(1) < 1 {
                    return Err(DefspaceError::NotTangentToN {
                        comp: self.base.coord(i).to_string(),
                        witness: self.witness_not_vanishing(c),
                    });
                }
                comps[i] = self
                    .pullback_kappa(c)
                    .divide_by_var(self.t_index())
                    .expect("normal factor present");
            } else {
                comps[i] = self.pullback_kappa(c);
            }
        }
        Ok(VectorField::new(&self.def, comps))
    }

    /// Lift of a differential form: `(kappa^* alpha)/t`, each component
    /// divided exactly. Defined when every component of the pullback
    /// carries a `t` factor.
    pub fn lift_form<C: Scalar>(&self, alpha: &DiffForm<C>) -> Result<DiffForm<C>, DefspaceError> {
        let pulled = alpha.pullback(&self.kappa())?;
        let mut out = DiffForm::zero(&self.def, alpha.degree());
        for (idx, c) in pulled.comps() {
            let divided =
                c.divide_by_var(self.t_index())
                    .map_err(|e| match e {
                        AlgebraError::NotDivisible { term, .. } => DefspaceError::NotVanishingOnN {
                            func: format!(
                                "component d{} of the pullback",
                                idx.iter()
                                    .map(|&i| self.def.coord(i))
                                    .collect::<Vec<_>>()
                                    .join("^d")
                            ),
                            witness: term,
                        },
                        other => DefspaceError::Algebra(other),
                    })?;
            out.add_comp(idx.clone(), divided);
        }
        Ok(out)
    }

    /// Project a polynomial on the `def` chart with no `t` dependence left
    /// onto the `nu` chart.
    pub(crate) fn drop_t<C: Scalar>(&self, f: &Poly<C>) -> Poly<C> {
        let terms = f
            .terms()
            .map(|(m, c)| {
                debug_assert_eq!(m.0[self.t_index()], 0);
                (m.0[..self.base.dim()].to_vec(), c.clone())
            })
            .collect();
        Poly::from_terms(&self.nu, terms)
    }

    /// Value on the zero fiber, as a function on the `nu` chart.
    pub fn restrict_zero_scalar<C: Scalar>(&self, f: &Poly<C>) -> Poly<C> {
        self.drop_t(&f.restrict_zero(&[self.t_index()]))
    }

    /// Tangential part of a vector field along the zero fiber. The flag
    /// reports whether a transversal `dt`-component was discarded.
    pub fn restrict_zero_vector<C: Scalar>(&self, v: &VectorField<C>) -> (VectorField<C>, bool) {
        let dropped = !v.comp(self.t_index()).restrict_zero(&[self.t_index()]).is_zero();
        let comps = (0..self.base.dim())
            .map(|i| self.restrict_zero_scalar(v.comp(i)))
            .collect();
        (VectorField::new(&self.nu, comps), dropped)
    }

    /// Pullback of a form to the zero fiber.
    pub fn restrict_zero_form<C: Scalar>(&self, alpha: &DiffForm<C>) -> DiffForm<C> {
        alpha
            .pullback(&self.j_map())
            .expect("j images are coordinates or zero on non-units")
    }

    /// Tangential part of a multivector along the zero fiber; the flag
    /// reports discarded `t`-direction components.
    pub fn restrict_zero_multivector<C: Scalar>(
        &self,
        p: &MultiVector<C>,
    ) -> (MultiVector<C>, bool) {
        let mut out = MultiVector::zero(&self.nu, p.degree());
        let mut dropped = false;
        for (idx, c) in p.comps() {
            let at_zero = c.restrict_zero(&[self.t_index()]);
            if idx.contains(&self.t_index()) {
                dropped |= !at_zero.is_zero();
            } else if !at_zero.is_zero() {
                out.add_comp(idx.clone(), self.drop_t(&at_zero));
            }
        }
        (out, dropped)
    }

    /// Value on the fiber over `t = a`, as a function on the base chart
    /// (substitutes `x -> x`, `y~ -> y/a`, `t -> a`).
    pub fn restrict_fiber_scalar<C: Scalar>(
        &self,
        f: &Poly<C>,
        a: &C,
    ) -> crate::error::Result<Poly<C>> {
        let iota = self.fiber_inclusion(a)?;
        Ok(iota.pullback_scalar(f).map_err(crate::error::Error::from)?)
    }

    /// Tangential part of a vector field along the fiber over `t = a`,
    /// identified with the base chart. Normal components pick up the factor
    /// `a` from `y = a*y~`.
    pub fn restrict_fiber_vector<C: Scalar>(
        &self,
        v: &VectorField<C>,
        a: &C,
    ) -> crate::error::Result<(VectorField<C>, bool)> {
        let dropped = !self.restrict_fiber_scalar(v.comp(self.t_index()), a)?.is_zero();
        let mut comps = Vec::with_capacity(self.base.dim());
        for i in 0..self.base.dim() {
            let mut c = self.restrict_fiber_scalar(v.comp(i), a)?;
            if self.base.is_normal(i) {
                c = c.scale(a);
            }
            comps.push(c);
        }
        Ok((VectorField::new(&self.base, comps), dropped))
    }

    /// Pullback of a form to the fiber over `t = a`.
    pub fn restrict_fiber_form<C: Scalar>(
        &self,
        alpha: &DiffForm<C>,
        a: &C,
    ) -> crate::error::Result<DiffForm<C>> {
        let iota = self.fiber_inclusion(a)?;
        Ok(alpha.pullback(&iota).map_err(crate::error::Error::from)?)
    }

    /// Tangential part of a multivector along the fiber over `t = a`.
    pub fn restrict_fiber_multivector<C: Scalar>(
        &self,
        p: &MultiVector<C>,
        a: &C,
    ) -> crate::error::Result<(MultiVector<C>, bool)> {
        let mut out = MultiVector::zero(&self.base, p.degree());
        let mut dropped = false;
        for (idx, c) in p.comps() {
            let value = self.restrict_fiber_scalar(c, a)?;
            if idx.contains(&self.t_index()) {
                dropped |= !value.is_zero();
                continue;
            }
            let mut scaled = value;
            for &i in idx {
                if self.base.is_normal(i) {
                    scaled = scaled.scale(a);
                }
            }
            if !scaled.is_zero() {
                out.add_comp(idx.clone(), scaled);
            }
        }
        Ok((out, dropped))
    }
}

/// The Euler (fiber-dilation) field `sum y_j dy_j` of a submanifold chart,
/// built from its normal coordinates.
pub fn euler_field<C: Scalar>(chart: &Arc<Chart>) -> VectorField<C> {
    let mut comps = vec![Poly::zero(chart); chart.dim()];
    for &j in chart.normal() {
        comps[j] = Poly::var(chart, j);
    }
    VectorField::new(chart, comps)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::Rat;
    use crate::tensor::parse_tensor;

    fn space() -> DeformationSpace {
        let base = Chart::submanifold("m", &["x"], &["y"]).unwrap();
        DeformationSpace::new(&base).unwrap()
    }

    fn scal(chart: &Arc<Chart>, s: &str) -> Poly<Rat> {
        Poly::parse(chart, s).unwrap()
    }

    fn vec_field(chart: &Arc<Chart>, s: &str) -> VectorField<Rat> {
        parse_tensor::<Rat>(chart, s).unwrap().into_vector_field().unwrap()
    }

    #[test]
    fn charts_and_coordinates() {
        let ds = space();
        assert_eq!(ds.nu().coords(), &["x".to_string(), "y~".to_string()]);
        assert_eq!(
            ds.def_chart().coords(),
            &["x".to_string(), "y~".to_string(), "t".to_string()]
        );
        assert_eq!(ds.t_index(), 2);
        assert!(ds.def_chart().is_normal(1));
        assert!(!ds.def_chart().is_normal(2));
    }

    #[test]
    fn scalar_lift_and_rejection() {
        let ds = space();
        let f = scal(ds.base(), "y^2 + x*y");
        let lifted = ds.lift_scalar(&f).unwrap();
        assert_eq!(lifted, scal(ds.def_chart(), "t*y~^2 + x*y~"));

        let bad = scal(ds.base(), "x + y");
        match ds.lift_scalar(&bad) {
            Err(DefspaceError::NotVanishingOnN { witness, .. }) => assert_eq!(witness, "x"),
            other => panic!("expected non-vanishing error, got {other:?}"),
        }
    }

    #[test]
    fn vector_lifts_and_scaling_relation() {
        let ds = space();
        let y = vec_field(ds.base(), "y*@x + x*y*@y");
        let tangent = ds.lift_vector_tangent(&y).unwrap();
        assert_eq!(*tangent.comp(0), scal(ds.def_chart(), "t*y~"));
        assert_eq!(*tangent.comp(1), scal(ds.def_chart(), "x*y~"));
        assert!(tangent.comp(2).is_zero());

        let hat = ds.lift_vector_hat(&y);
        let t = ds.t_var::<Rat>();
        let scaled = VectorField::new(
            ds.def_chart(),
            tangent.comps().iter().map(|c| c.mul(&t)).collect(),
        );
        assert!(hat.sub(&scaled).is_zero());

        match ds.lift_vector_tangent(&vec_field(ds.base(), "@y")) {
            Err(DefspaceError::NotTangentToN { comp, witness }) => {
                assert_eq!(comp, "y");
                assert_eq!(witness, "1");
            }
            other => panic!("expected tangency error, got {other:?}"),
        }
    }

    #[test]
    fn grading_field_weights() {
        let ds = space();
        let theta = ds.theta::<Rat>();
        let f = scal(ds.base(), "y^2 + x*y");
        let pulled = ds.pullback_kappa(&f);
        assert!(theta.apply(&pulled).is_zero());
        let lifted = ds.lift_scalar(&f).unwrap();
        assert!(theta.apply(&lifted).add(&lifted).is_zero());
        assert_eq!(theta.apply(&ds.t_var()), ds.t_var());
    }

    #[test]
    fn grading_field_brackets() {
        let ds = space();
        let y = vec_field(ds.base(), "x^2*@x + y*@x + y*@y + y^2*@y + x*y*@y");
        let theta = ds.theta::<Rat>();

        let hat = ds.lift_vector_hat(&y);
        assert!(theta.lie_bracket(&hat).sub(&hat).is_zero());

        let tangent = ds.lift_vector_tangent(&y).unwrap();
        assert!(theta.lie_bracket(&tangent).is_zero());
    }

    #[test]
    fn fiber_restriction_inverts_tangent_lift() {
        let ds = space();
        let y = vec_field(ds.base(), "y*@x + y*@y + y^2*@y + x*y*@y");
        let tangent = ds.lift_vector_tangent(&y).unwrap();
        let a = crate::scalar::rat(2, 1);
        let (back, dropped) = ds.restrict_fiber_vector(&tangent, &a).unwrap();
        assert!(!dropped);
        assert!(back.sub(&y).is_zero());

        let (lin, dropped0) = ds.restrict_zero_vector(&tangent);
        assert!(!dropped0);
        assert!(lin.comp(0).is_zero());
        assert_eq!(*lin.comp(1), scal(ds.nu(), "y~ + x*y~"));
    }

    #[test]
    fn rescaling_composed_with_fiber_inclusion_is_identity() {
        let ds = space();
        let kappa = ds.kappa::<Rat>();
        let iota = ds.fiber_inclusion(&crate::scalar::rat(3, 1)).unwrap();
        for i in 0..ds.base().dim() {
            let composed = iota.pullback_scalar(kappa.comp(i)).unwrap();
            assert_eq!(composed, Poly::var(ds.base(), i));
        }
    }

    #[test]
    fn form_lift_and_zero_fiber() {
        let ds = space();
        let alpha = parse_tensor::<Rat>(ds.base(), "y*dx")
            .unwrap()
            .into_form(1)
            .unwrap();
        let lifted = ds.lift_form(&alpha).unwrap();
        assert_eq!(lifted.comp(&[0]), scal(ds.def_chart(), "y~"));
        assert!(lifted.comp(&[1]).is_zero());
        assert!(lifted.comp(&[2]).is_zero());

        let on_nu = ds.restrict_zero_form(&lifted);
        assert_eq!(on_nu.comp(&[0]), scal(ds.nu(), "y~"));

        let dy = parse_tensor::<Rat>(ds.base(), "dy").unwrap().into_form(1).unwrap();
        assert!(matches!(
            ds.lift_form(&dy),
            Err(DefspaceError::NotVanishingOnN { .. })
        ));
    }

    #[test]
    fn multivector_restrictions() {
        let ds = space();
        let def = ds.def_chart();
        let mut p = MultiVector::<Rat>::zero(def, 2);
        p.add_comp(vec![0, 2], Poly::one(def));
        let (z, dropped) = ds.restrict_zero_multivector(&p);
        assert!(z.is_zero());
        assert!(dropped);

        let mut q = MultiVector::<Rat>::zero(def, 2);
        q.add_comp(vec![0, 1], Poly::one(def));
        let a = crate::scalar::rat(2, 1);
        let (on_fiber, dropped) = ds.restrict_fiber_multivector(&q, &a).unwrap();
        assert!(!dropped);
        assert_eq!(on_fiber.comp(&[0, 1]), scal(ds.base(), "2"));
    }

    #[test]
    fn euler_field_of_submanifold_chart() {
        let chart = Chart::submanifold("m", &["x"], &["y", "z"]).unwrap();
        let e = euler_field::<Rat>(&chart);
        assert!(e.comp(0).is_zero());
        assert_eq!(*e.comp(1), Poly::var(&chart, 1));
        assert_eq!(*e.comp(2), Poly::var(&chart, 2));
    }
}
