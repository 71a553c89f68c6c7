//! Square matrices with polynomial entries and their exact or truncated
//! inverses.

use std::sync::Arc;

use crate::chart::Chart;
use crate::poly::{AlgebraError, Poly, Trunc};
use crate::scalar::Scalar;

pub type PolyMat<C> = Vec<Vec<Poly<C>>>;

pub fn identity<C: Scalar>(chart: &Arc<Chart>, n: usize) -> PolyMat<C> {
    (0..n)
        .map(|i| {
            (0..n)
                .map(|j| {
                    if i == j {
                        Poly::one(chart)
                    } else {
                        Poly::zero(chart)
                    }
                })
                .collect()
        })
        .collect()
}

pub fn mat_mul<C: Scalar>(a: &PolyMat<C>, b: &PolyMat<C>) -> PolyMat<C> {
    let n = a.len();
    let m = b[0].len();
    let k = b.len();
    (0..n)
        .map(|i| {
            (0..m)
                .map(|j| {
                    let mut acc = Poly::zero(a[i][0].chart());
                    for l in 0..k {
                        acc = acc.add(&a[i][l].mul(&b[l][j]));
                    }
                    acc
                })
                .collect()
        })
        .collect()
}

pub fn mat_mul_trunc<C: Scalar>(a: &PolyMat<C>, b: &PolyMat<C>, trunc: &Trunc) -> PolyMat<C> {
    let n = a.len();
    let m = b[0].len();
    let k = b.len();
    (0..n)
        .map(|i| {
            (0..m)
                .map(|j| {
                    let mut acc = Poly::zero(a[i][0].chart());
                    for l in 0..k {
                        acc = acc.add(&a[i][l].mul_trunc(&b[l][j], trunc));
                    }
                    acc
                })
                .collect()
        })
        .collect()
}

pub fn det<C: Scalar>(a: &PolyMat<C>) -> Poly<C> {
    let n = a.len();
    match n {
        0 => panic!("determinant of empty matrix"),
        1 => a[0][0].clone(),
        _ => {
            // Cofactor expansion along the first row; dimensions stay small.
            let mut acc = Poly::zero(a[0][0].chart());
            for j in 0..n {
                if a[0][j].is_zero() {
                    continue;
                }
                let minor: PolyMat<C> = (1..n)
                    .map(|i| {
                        (0..n)
                            .filter(|&c| c != j)
                            .map(|c| a[i][c].clone())
                            .collect()
                    })
                    .collect();
                let term = a[0][j].mul(&det(&minor));
                acc = if j % 2 == 0 { acc.add(&term) } else { acc.sub(&term) };
            }
            acc
        }
    }
}

/// Exact inverse through the adjugate; the determinant must be an invertible
/// monomial (constant, or a unit-coordinate monomial).
pub fn invert_exact<C: Scalar>(a: &PolyMat<C>) -> Result<PolyMat<C>, AlgebraError> {
    let n = a.len();
    let d = det(a);
    let d_inv = d.invert_monomial()?;
    let mut out = vec![vec![Poly::zero(a[0][0].chart()); n]; n];
    for i in 0..n {
        for j in 0..n {
            let minor: PolyMat<C> = (0..n)
                .filter(|&r| r != j)
                .map(|r| {
                    (0..n)
                        .filter(|&c| c != i)
                        .map(|c| a[r][c].clone())
                        .collect()
                })
                .collect();
            let cof = if n == 1 {
                Poly::one(a[0][0].chart())
            } else {
                det(&minor)
            };
            let signed = if (i + j) % 2 == 0 { cof } else { cof.neg() };
            out[i][j] = signed.mul(&d_inv);
        }
    }
    Ok(out)
}

/// Inverse in the truncated ring: the truncation-degree-zero part is inverted
/// exactly, the rest by a Neumann series.
pub fn invert_trunc<C: Scalar>(
    a: &PolyMat<C>,
    trunc: &Trunc,
) -> Result<PolyMat<C>, AlgebraError> {
    let n = a.len();
    let chart = a[0][0].chart().clone();
    let head: PolyMat<C> = a
        .iter()
        .map(|row| row.iter().map(|p| p.homog_part(&trunc.vars, 0)).collect())
        .collect();
    let head_inv = invert_exact(&head)?;
    // M = head_inv * (a - head) has positive truncation degree.
    let tail: PolyMat<C> = a
        .iter()
        .zip(head.iter())
        .map(|(ra, rh)| {
            ra.iter()
                .zip(rh.iter())
                .map(|(pa, ph)| pa.sub(ph))
                .collect()
        })
        .collect();
    for row in &tail {
        for p in row {
            if !p.is_zero() && p.vanishing_order(&trunc.vars).unwrap_or(1) <= 0 {
                return Err(AlgebraError::NotInvertible(
                    "matrix tail has truncation degree zero".into(),
                ));
            }
        }
    }
    let m = mat_mul_trunc(&head_inv, &tail, trunc);
    // (1 + M)^-1 = sum (-M)^k
    let mut series = identity(&chart, n);
    let mut power = identity(&chart, n);
    for _ in 0..trunc.order {
        power = mat_mul_trunc(&power, &m, trunc);
        let mut all_zero = true;
        for row in power.iter_mut() {
            for p in row.iter_mut() {
                *p = p.neg();
                if !p.is_zero() {
                    all_zero = false;
                }
            }
        }
        if all_zero {
            break;
        }
        for i in 0..n {
            for j in 0..n {
                series[i][j] = series[i][j].add(&power[i][j]);
            }
        }
    }
    Ok(mat_mul_trunc(&series, &head_inv, trunc))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::Rat;
    use crate::Chart;

    #[test]
    fn exact_inverse_unipotent() {
        let c = Chart::new("m", &["x", "y"]).unwrap();
        let p = |s: &str| Poly::<Rat>::parse(&c, s).unwrap();
        let a = vec![vec![p("1"), p("y")], vec![p("0"), p("1")]];
        let inv = invert_exact(&a).unwrap();
        assert_eq!(inv[0][1], p("-y"));
        let prod = mat_mul(&a, &inv);
        assert_eq!(prod, identity::<Rat>(&c, 2));
    }

    #[test]
    fn truncated_neumann_inverse() {
        let c = Chart::submanifold("m", &["x"], &["y"]).unwrap();
        let p = |s: &str| Poly::<Rat>::parse(&c, s).unwrap();
        let a = vec![vec![p("1 + y"), p("0")], vec![p("y^2"), p("1")]];
        let trunc = Trunc::new(&[1], 3);
        let inv = invert_trunc(&a, &trunc).unwrap();
        let prod = mat_mul_trunc(&a, &inv, &trunc);
        assert_eq!(prod, identity::<Rat>(&c, 2));
        assert_eq!(inv[0][0], p("1 - y + y^2 - y^3"));
    }

    #[test]
    fn determinant_sign() {
        let c = Chart::new("m", &["x"]).unwrap();
        let p = |s: &str| Poly::<Rat>::parse(&c, s).unwrap();
        let a = vec![
            vec![p("0"), p("1"), p("0")],
            vec![p("1"), p("0"), p("0")],
            vec![p("0"), p("0"), p("x")],
        ];
        assert_eq!(det(&a), p("-x"));
    }
}
