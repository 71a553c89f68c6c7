//! Taylor expansions of scalar fields about a point.
//!
//! The expansion lives on a displacement chart carrying the same coordinate
//! names; a displacement of zero corresponds to the base point. Negative
//! powers of unit coordinates expand through a finite geometric series, which
//! needs a nonzero base value.

use std::sync::Arc;

use crate::chart::Chart;
use crate::poly::{AlgebraError, Poly, Trunc};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq)]
pub struct Jet<C: Scalar> {
    base: Vec<C>,
    order: usize,
    poly: Poly<C>,
}

impl<C: Scalar> Jet<C> {
    /// Expand `p` about `base` to total degree `order`.
    pub fn expand(p: &Poly<C>, base: &[C], order: usize) -> Result<Self, AlgebraError> {
        let chart = p.chart();
        assert_eq!(base.len(), chart.dim());
        for i in chart.units() {
            if base[i].is_zero() && p.terms().any(|(m, _)| m.0[i] < 0) {
                return Err(AlgebraError::EvalAtPole(chart.coord(i).to_string()));
            }
        }
        let disp = displacement_chart(chart);
        let all: Vec<usize> = (0..chart.dim()).collect();
        let trunc = Trunc::new(&all, order);
        let images: Vec<Poly<C>> = (0..chart.dim())
            .map(|i| {
                Poly::constant(&disp, base[i].clone()).add(&Poly::var(&disp, i))
            })
            .collect();
        let poly = p.substitute_trunc(&images, &trunc)?;
        Ok(Jet {
            base: base.to_vec(),
            order,
            poly,
        })
    }

    pub fn base(&self) -> &[C] {
        &self.base
    }

    pub fn order(&self) -> usize {
        self.order
    }

    /// The truncated expansion, as a polynomial in the displacements.
    pub fn poly(&self) -> &Poly<C> {
        &self.poly
    }

    pub fn eval(&self, displacement: &[C]) -> C {
        self.poly.eval(displacement)
    }
}

/// Same coordinate names, no unit declarations: displacements may vanish.
pub fn displacement_chart(chart: &Arc<Chart>) -> Arc<Chart> {
    let names: Vec<&str> = chart.coords().iter().map(|s| s.as_str()).collect();
    Chart::build(
        &format!("{}@", chart.name()),
        &names,
        &[],
        &[],
        &[],
    )
    .expect("displacement chart")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::{rat_int, Rat};
    use crate::Chart;

    #[test]
    fn polynomial_expansion() {
        let c = Chart::new("m", &["x", "y"]).unwrap();
        let p = Poly::<Rat>::parse(&c, "x^2*y").unwrap();
        let jet = Jet::expand(&p, &[rat_int(1), rat_int(2)], 2).unwrap();
        // (1+u)^2 (2+v) = 2 + 4u + v + 2u^2 + 2uv + O(3)
        let d = jet.poly().chart().clone();
        let expect = Poly::<Rat>::parse(&d, "2*x^2 + 2*x*y + 4*x + y + 2").unwrap();
        assert_eq!(jet.poly(), &expect);
    }

    #[test]
    fn laurent_expansion_needs_nonzero_base() {
        let c = Chart::submanifold_with_units("m", &["x"], &["y"], &["x"]).unwrap();
        let p = Poly::<Rat>::parse(&c, "x^-1").unwrap();
        let err = Jet::expand(&p, &[rat_int(0), rat_int(0)], 2).unwrap_err();
        match err {
            AlgebraError::EvalAtPole(v) => assert_eq!(v, "x"),
            other => panic!("unexpected {other:?}"),
        }
        // 1/(1+u) = 1 - u + u^2 - ...
        let jet = Jet::expand(&p, &[rat_int(1), rat_int(0)], 3).unwrap();
        let d = jet.poly().chart().clone();
        let expect = Poly::<Rat>::parse(&d, "-x^3 + x^2 - x + 1").unwrap();
        assert_eq!(jet.poly(), &expect);
    }
}
