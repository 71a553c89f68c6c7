//! Exact linear fitting of unknown rational coefficients.
//!
//! A fit collects polynomial equations of the form
//! sum_u lambda_u * contribution[u] = target; matching coefficients of every
//! monomial turns each polynomial equation into exact linear constraints,
//! solved by row reduction. Used to express one geometric object in terms of
//! others (sections through a frame, anchors through generators) with no
//! numerical tolerance involved.

use std::collections::BTreeSet;
use std::sync::Arc;

use crate::chart::Chart;
use crate::poly::{Mono, Poly};
use crate::scalar::Scalar;
use crate::{linalg, tensor::VectorField};

pub struct LinearFit<C: Scalar> {
    n_unknowns: usize,
    rows: Vec<(Vec<Poly<C>>, Poly<C>)>,
}

impl<C: Scalar> LinearFit<C> {
    pub fn new(n_unknowns: usize) -> Self {
        LinearFit {
            n_unknowns,
            rows: Vec::new(),
        }
    }

    pub fn n_unknowns(&self) -> usize {
        self.n_unknowns
    }

    /// Add one polynomial equation sum_u lambda_u contribs[u] = target.
    pub fn equation(&mut self, contribs: Vec<Poly<C>>, target: Poly<C>) {
        assert_eq!(contribs.len(), self.n_unknowns, "one contribution per unknown");
        self.rows.push((contribs, target));
    }

    /// Convenience: component-wise equations for vector fields.
    pub fn vector_equation(&mut self, contribs: Vec<VectorField<C>>, target: &VectorField<C>) {
        assert_eq!(contribs.len(), self.n_unknowns);
        for i in 0..target.chart().dim() {
            self.equation(
                contribs.iter().map(|v| v.comp(i).clone()).collect(),
                target.comp(i).clone(),
            );
        }
    }

    fn matrix(&self) -> (Vec<Vec<C>>, Vec<C>) {
        let mut a = Vec::new();
        let mut b = Vec::new();
        for (contribs, target) in &self.rows {
            let mut monos: BTreeSet<Mono> = BTreeSet::new();
            for p in contribs.iter().chain(std::iter::once(target)) {
                for (m, _) in p.terms() {
                    monos.insert(m.clone());
                }
            }
            for m in monos {
                a.push(
                    contribs
                        .iter()
                        .map(|p| {
                            p.terms()
                                .find(|(pm, _)| **pm == m)
                                .map(|(_, c)| c.clone())
                                .unwrap_or_else(C::zero)
                        })
                        .collect(),
                );
                b.push(
                    target
                        .terms()
                        .find(|(pm, _)| **pm == m)
                        .map(|(_, c)| c.clone())
                        .unwrap_or_else(C::zero),
                );
            }
        }
        (a, b)
    }

    /// One exact solution, or `None` when the equations are inconsistent.
    pub fn solve(&self) -> Option<Vec<C>> {
        let (a, b) = self.matrix();
        if a.is_empty() {
            return Some(vec![C::zero(); self.n_unknowns]);
        }
        linalg::solve(&a, &b)
    }

    /// Basis of coefficient vectors with sum_u lambda_u contribs[u] = 0 for
    /// every equation.
    pub fn nullspace(&self) -> Vec<Vec<C>> {
        let (a, _) = self.matrix();
        if a.is_empty() {
            return linalg::nullspace::<C>(&vec![vec![C::zero(); self.n_unknowns]; 1]);
        }
        linalg::nullspace(&a)
    }
}

/// All monomials on `chart` with total absolute degree at most `degree`;
/// unit coordinates may carry exponents down to `-laurent_depth`, all others
/// stay non-negative.
pub fn monomial_basis<C: Scalar>(
    chart: &Arc<Chart>,
    degree: i32,
    laurent_depth: i32,
) -> Vec<Poly<C>> {
    let dim = chart.dim();
    let mut out = Vec::new();
    let mut exps = vec![0i32; dim];
    fn rec<C: Scalar>(
        chart: &Arc<Chart>,
        exps: &mut Vec<i32>,
        i: usize,
        budget: i32,
        laurent_depth: i32,
        out: &mut Vec<Poly<C>>,
    ) {
        if i == exps.len() {
            out.push(Poly::from_terms(chart, vec![(exps.clone(), C::one())]));
            return;
        }
        let lo = if chart.is_unit(i) { -laurent_depth } else { 0 };
        for e in lo..=budget {
            if e.abs() > budget {
                continue;
            }
            exps[i] = e;
            rec(chart, exps, i + 1, budget - e.abs(), laurent_depth, out);
        }
        exps[i] = 0;
    }
    rec(chart, &mut exps, 0, degree, laurent_depth, &mut out);
    out.sort_by(|a, b| {
        let ma = a.terms().next().unwrap().0.clone();
        let mb = b.terms().next().unwrap().0.clone();
        ma.cmp(&mb)
    });
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::{rat, rat_int, Rat};
    use crate::Chart;

    #[test]
    fn fits_exact_combination() {
        let c = Chart::new("m", &["x", "y"]).unwrap();
        let p = |s: &str| Poly::<Rat>::parse(&c, s).unwrap();
        // target = 2*(x^2) - 1/3*(x*y + y)
        let mut fit = LinearFit::new(2);
        fit.equation(vec![p("x^2"), p("x*y + y")], p("2*x^2 - 1/3*x*y - 1/3*y"));
        let sol = fit.solve().unwrap();
        assert_eq!(sol, vec![rat_int(2), rat(-1, 3)]);
    }

    #[test]
    fn inconsistent_system_is_none() {
        let c = Chart::new("m", &["x"]).unwrap();
        let p = |s: &str| Poly::<Rat>::parse(&c, s).unwrap();
        let mut fit = LinearFit::new(1);
        fit.equation(vec![p("x")], p("x^2"));
        assert!(fit.solve().is_none());
    }

    #[test]
    fn nullspace_of_dependent_generators() {
        let c = Chart::new("m", &["x"]).unwrap();
        let p = |s: &str| Poly::<Rat>::parse(&c, s).unwrap();
        let mut fit = LinearFit::new(3);
        fit.equation(vec![p("x"), p("2*x"), p("x^2")], Poly::zero(&c));
        let ns = fit.nullspace();
        assert_eq!(ns.len(), 1);
        let v = &ns[0];
        assert_eq!(
            v[0].clone() + v[1].clone() * rat_int(2),
            rat_int(0)
        );
        assert_eq!(v[2], rat_int(0));
    }

    #[test]
    fn monomial_basis_with_laurent_depth() {
        let c = Chart::submanifold_with_units("m", &["x"], &["y"], &["x"]).unwrap();
        let basis = monomial_basis::<Rat>(&c, 1, 1);
        let printed: Vec<String> = basis.iter().map(|p| p.to_string()).collect();
        // exponent pairs (e_x, e_y) with |e_x| + e_y <= 1, e_x >= -1
        assert!(printed.contains(&"1".to_string()));
        assert!(printed.contains(&"x^-1".to_string()));
        assert!(printed.contains(&"x".to_string()));
        assert!(printed.contains(&"y".to_string()));
        assert_eq!(basis.len(), 4);
    }
}
