//! Splitting verification for singular foliations presented by generating
//! vector fields: an Euler-like combination of the generators is fitted
//! exactly, its tubular embedding is built, and the foliation is compared
//! against its normal-cone model at sample points by principal angles.

use nalgebra::DMatrix;

use crate::chart::same_chart;
use crate::defspace::DeformationSpace;
use crate::error::{Error, Result};
use crate::euler::{euler_like_check, tubular_embedding, TubularEmbedding};
use crate::fit::{monomial_basis, LinearFit};
use crate::flow::FlowOpts;
use crate::numeric;
use crate::poly::Poly;
use crate::scalar::Scalar;
use crate::tensor::VectorField;

#[derive(Debug, Clone)]
pub struct FoliationOpts {
    /// Total-degree bound for the fitted coefficient functions.
    pub coeff_degree: i32,
    /// Negative-exponent depth allowed on unit coordinates in the fit.
    pub laurent_depth: i32,
    /// Truncation order of the embedding jet.
    pub jet_order: usize,
    /// Span-comparison tolerance.
    pub tol: f64,
    pub flow: FlowOpts,
}

impl Default for FoliationOpts {
    fn default() -> Self {
        FoliationOpts {
            coeff_degree: 2,
            laurent_depth: 1,
            jet_order: 4,
            tol: 1e-6,
            flow: FlowOpts::default(),
        }
    }
}

/// Result of the splitting verification. Structural failures (fit,
/// involutivity, Euler-like) are errors; the span comparison is data.
#[derive(Debug)]
pub struct FoliationSplit<C: Scalar> {
    /// Coefficients of the Euler-like combination, one per generator.
    pub sigma_coeffs: Vec<Poly<C>>,
    /// The Euler-like vector field itself.
    pub anchor: VectorField<C>,
    pub tube: TubularEmbedding<C>,
    /// Generators of the normal-cone model on the linear-model chart:
    /// fiber directions plus lifted transversal-tangent combinations.
    pub model_generators: Vec<VectorField<C>>,
    /// Per-sample principal-angle residual between the pushed model span
    /// and the generator span at the image point.
    pub residuals: Vec<(Vec<f64>, f64)>,
    pub max_residual: f64,
}

fn columns(n: usize, cols: &[Vec<f64>]) -> DMatrix<f64> {
    DMatrix::from_fn(n, cols.len(), |r, c| cols[c][r])
}

/// Check that the pointwise span of the generators absorbs all pairwise
/// brackets at the given points. Failure names the point and the pair.
pub fn involutivity_check<C: Scalar>(
    gens: &[VectorField<C>],
    points: &[Vec<f64>],
) -> Result<()> {
    let n = gens[0].chart().dim();
    let mut brackets = Vec::new();
    for i in 0..gens.len() {
        for j in (i + 1)..gens.len() {
            brackets.push((i, j, gens[i].lie_bracket(&gens[j])));
        }
    }
    for p in points {
        let cols: Vec<Vec<f64>> = gens.iter().map(|g| g.eval_f64(p)).collect();
        let base = columns(n, &cols);
        let r0 = numeric::rank(&base, 1e-8);
        for (i, j, br) in &brackets {
            let mut aug = cols.clone();
            aug.push(br.eval_f64(p));
            if numeric::rank(&columns(n, &aug), 1e-8) > r0 {
                return Err(Error::check(
                    "foliation.not_involutive",
                    format!(
                        "bracket of generators {i} and {j} leaves the pointwise span at {p:?}"
                    ),
                ));
            }
        }
    }
    Ok(())
}

/// Fit polynomial coefficients making the combination of the generators an
/// Euler-like field, exactly: transverse components must have no
/// normal-degree-zero part, normal components must have none and a linear
/// part equal to the coordinate. Returns the coefficients and the field.
pub fn euler_member<C: Scalar>(
    gens: &[VectorField<C>],
    opts: &FoliationOpts,
) -> Result<(Vec<Poly<C>>, VectorField<C>)> {
    let chart = gens[0].chart().clone();
    let basis = monomial_basis::<C>(&chart, opts.coeff_degree, opts.laurent_depth);
    let normal = chart.normal().to_vec();
    let n_unknowns = gens.len() * basis.len();
    let mut fit = LinearFit::new(n_unknowns);
    let contribs_for = |i: usize, part: i32| -> Vec<Poly<C>> {
        let mut v = Vec::with_capacity(n_unknowns);
        for g in gens {
            for m in &basis {
                v.push(m.mul(g.comp(i)).homog_part(&normal, part));
            }
        }
        v
    };
    for &i in chart.transverse() {
        fit.equation(contribs_for(i, 0), Poly::zero(&chart));
    }
    for &j in &normal {
        fit.equation(contribs_for(j, 0), Poly::zero(&chart));
        fit.equation(contribs_for(j, 1), Poly::var(&chart, j));
    }
    let solution = fit.solve().ok_or_else(|| {
        Error::check(
            "foliation.euler_fit_failed",
            format!(
                "no combination of the {} generators with coefficient degree <= {} is Euler-like",
                gens.len(),
                opts.coeff_degree
            ),
        )
    })?;
    let mut coeffs = Vec::with_capacity(gens.len());
    let mut anchor = VectorField::zero(&chart);
    for (k, g) in gens.iter().enumerate() {
        let mut lambda = Poly::zero(&chart);
        for (m, mono) in basis.iter().enumerate() {
            lambda = lambda.add(&mono.scale(&solution[k * basis.len() + m]));
        }
        anchor = anchor.add(&g.scale(&lambda));
        coeffs.push(lambda);
    }
    let report = euler_like_check(&anchor)?;
    if !report.is_euler_like() {
        return Err(Error::check("euler.not_euler_like", report.describe()));
    }
    Ok((coeffs, anchor))
}

/// Generators of the normal-cone model on the linear-model chart: one
/// fiber direction per normal coordinate, plus the restrictions to the
/// transversal of all fitted generator combinations tangent to it.
pub fn normal_cone_generators<C: Scalar>(
    gens: &[VectorField<C>],
    ds: &DeformationSpace,
    opts: &FoliationOpts,
) -> Vec<VectorField<C>> {
    let chart = gens[0].chart().clone();
    let nu = ds.nu();
    let normal = chart.normal().to_vec();
    let mut out: Vec<VectorField<C>> = normal.iter().map(|&j| VectorField::basis(nu, j)).collect();

    let basis = monomial_basis::<C>(&chart, opts.coeff_degree, opts.laurent_depth);
    let mut fit = LinearFit::new(gens.len() * basis.len());
    for &j in &normal {
        let mut contribs = Vec::new();
        for g in gens {
            for m in &basis {
                contribs.push(m.mul(g.comp(j)).homog_part(&normal, 0));
            }
        }
        fit.equation(contribs, Poly::zero(&chart));
    }
    for member in fit.nullspace() {
        let mut field = VectorField::zero(&chart);
        for (k, g) in gens.iter().enumerate() {
            let mut lambda = Poly::zero(&chart);
            for (m, mono) in basis.iter().enumerate() {
                lambda = lambda.add(&mono.scale(&member[k * basis.len() + m]));
            }
            field = field.add(&g.scale(&lambda));
        }
        let restricted = VectorField::new(
            nu,
            field
                .comps()
                .iter()
                .map(|c| c.restrict_zero(&normal).rename_chart(nu))
                .collect(),
        );
        if !restricted.is_zero() && !out.iter().any(|h| h.sub(&restricted).is_zero()) {
            out.push(restricted);
        }
    }
    out
}

/// Full pipeline: fit an Euler-like member, build its embedding, and
/// compare the pushed normal-cone span with the generator span at each
/// sample of the linear-model chart.
pub fn foliation_split_verify<C: Scalar>(
    gens: &[VectorField<C>],
    samples: &[Vec<f64>],
    opts: &FoliationOpts,
) -> Result<FoliationSplit<C>> {
    if gens.is_empty() {
        return Err(Error::Invalid("need at least one generator".into()));
    }
    let chart = gens[0].chart().clone();
    for g in gens {
        same_chart(g.chart(), &chart)?;
    }
    if !chart.is_submanifold() {
        return Err(Error::Invalid(format!(
            "chart {} has no transverse/normal split",
            chart.name()
        )));
    }
    let ds = DeformationSpace::new(&chart)?;
    let (sigma_coeffs, anchor) = euler_member(gens, opts)?;
    let tube = tubular_embedding(&ds, &anchor, opts.jet_order, &opts.flow)?;
    let model_generators = normal_cone_generators(gens, &ds, opts);

    let n = chart.dim();
    let mut images = Vec::with_capacity(samples.len());
    let mut jacobians = Vec::with_capacity(samples.len());
    for v in samples {
        let (value, jac) = tube.eval_jacobian(v)?;
        images.push(value);
        jacobians.push(jac);
    }
    involutivity_check(gens, &images)?;

    let mut residuals = Vec::with_capacity(samples.len());
    let mut max_residual: f64 = 0.0;
    for ((v, image), jac) in samples.iter().zip(&images).zip(&jacobians) {
        let pushed: Vec<Vec<f64>> = model_generators
            .iter()
            .map(|g| {
                let val = DMatrix::from_column_slice(n, 1, &g.eval_f64(v));
                let col = jac * val;
                col.column(0).iter().cloned().collect()
            })
            .collect();
        let target: Vec<Vec<f64>> = gens.iter().map(|g| g.eval_f64(image)).collect();
        let res = numeric::subspace_residual(&columns(n, &pushed), &columns(n, &target));
        max_residual = max_residual.max(res);
        residuals.push((v.clone(), res));
    }
    Ok(FoliationSplit {
        sigma_coeffs,
        anchor,
        tube,
        model_generators,
        residuals,
        max_residual,
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

    #[test]
    fn bracket_outside_span_is_reported() {
        let chart = Chart::new("m", &["x", "y"]).unwrap();
        let gens = [vf(&chart, "y*@x"), vf(&chart, "x*@y")];
        assert!(involutivity_check(&gens, &[vec![0.5, 0.5]]).is_ok());
        let err = involutivity_check(&gens, &[vec![1.0, 0.0]]).unwrap_err();
        assert_eq!(err.code(), "foliation.not_involutive");
    }

    #[test]
    fn regular_foliation_splits_exactly() {
        // Horizontal lines in the plane, transversal = the vertical axis.
        let chart = Chart::submanifold("m", &["y"], &["x"]).unwrap();
        let gens = [vf(&chart, "@x")];
        let samples: Vec<Vec<f64>> = (-2..=2)
            .flat_map(|a| (-2..=2).map(move |b| vec![0.4 * a as f64, 0.4 * b as f64]))
            .collect();
        let split = foliation_split_verify(&gens, &samples, &FoliationOpts::default()).unwrap();
        assert_eq!(split.sigma_coeffs[0], Poly::var(&chart, 1));
        assert!(split.max_residual < 1e-12, "residual {}", split.max_residual);
        assert_eq!(split.model_generators.len(), 1);
    }

    #[test]
    fn rotation_fields_split_around_axis() {
        let chart =
            Chart::submanifold_with_units("m", &["x"], &["y", "z"], &["x"]).unwrap();
        let gens = [
            vf(&chart, "y*@z - z*@y"),
            vf(&chart, "z*@x - x*@z"),
            vf(&chart, "x*@y - y*@x"),
        ];
        let opts = FoliationOpts::default();
        let (coeffs, anchor) = euler_member(&gens, &opts).unwrap();
        assert!(euler_like_check(&anchor).unwrap().is_euler_like());
        assert_eq!(coeffs.len(), 3);

        // Transverse component forced by the invariant x^2+y^2+z^2: the
        // radius is constant on leaves, so the x-velocity at (x, y, z) must
        // be -(y^2+z^2)/x at quadratic order.
        assert_eq!(
            anchor.comp(0).homog_part(&[1, 2], 2),
            Poly::parse(&chart, "-1*y^2*x^-1 - z^2*x^-1").unwrap()
        );

        let mut samples = Vec::new();
        for (fy, fz) in [(0.2, 0.0), (0.0, 0.2), (0.15, -0.1), (-0.1, 0.12)] {
            for k in 0..3 {
                samples.push(vec![0.9 + 0.1 * k as f64, fy, fz]);
            }
        }
        let split = foliation_split_verify(&gens, &samples, &opts).unwrap();
        assert!(
            split.max_residual < 1e-6,
            "residual {}",
            split.max_residual
        );
    }
}
