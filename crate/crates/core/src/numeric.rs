//! Floating-point helpers: subspace comparison by principal angles,
//! Gauss-Legendre quadrature, and finite differences.

use nalgebra::DMatrix;

/// Orthonormal basis of the column span, rank decided at `tol` relative to
/// the largest singular value.
fn orthonormal_basis(a: &DMatrix<f64>, tol: f64) -> DMatrix<f64> {
    if a.ncols() == 0 {
        return DMatrix::zeros(a.nrows(), 0);
    }
    let svd = a.clone().svd(true, false);
    let u = svd.u.as_ref().expect("svd with u");
    let smax = svd.singular_values.iter().cloned().fold(0.0, f64::max);
    let cutoff = tol * smax.max(1.0);
    let rank = svd
        .singular_values
        .iter()
        .filter(|&&s| s > cutoff)
        .count();
    u.columns(0, rank).into_owned()
}

/// Distance between the column spans of `a` and `b`: the largest sine of a
/// principal angle, 1.0 when the ranks differ.
pub fn subspace_residual(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    let tol = 1e-10;
    let qa = orthonormal_basis(a, tol);
    let qb = orthonormal_basis(b, tol);
    if qa.ncols() != qb.ncols() {
        return 1.0;
    }
    if qa.ncols() == 0 {
        return 0.0;
    }
    let overlap = qa.transpose() * &qb;
    let svd = overlap.svd(false, false);
    let cos_min = svd
        .singular_values
        .iter()
        .cloned()
        .fold(f64::INFINITY, f64::min)
        .clamp(-1.0, 1.0);
    (1.0 - cos_min * cos_min).max(0.0).sqrt()
}

/// Numerical column rank at relative tolerance `rel_eps`.
pub fn rank(a: &DMatrix<f64>, rel_eps: f64) -> usize {
    if a.ncols() == 0 || a.nrows() == 0 {
        return 0;
    }
    let svd = a.clone().svd(false, false);
    let smax = svd.singular_values.iter().cloned().fold(0.0, f64::max);
    let cutoff = rel_eps * smax.max(1.0);
    svd.singular_values.iter().filter(|&&s| s > cutoff).count()
}

/// Nodes and weights of `n`-point Gauss-Legendre quadrature on [a, b].
pub fn gauss_legendre(n: usize, a: f64, b: f64) -> Vec<(f64, f64)> {
    assert!(n >= 1);
    let mut rules = Vec::with_capacity(n);
    for i in 0..n {
        // Newton iteration from the Chebyshev-based initial guess.
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        for _ in 0..100 {
            let (p, dp) = legendre_and_derivative(n, x);
            let dx = p / dp;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        let (_, dp) = legendre_and_derivative(n, x);
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        rules.push((x, w));
    }
    rules.sort_by(|p, q| p.0.partial_cmp(&q.0).unwrap());
    let half = (b - a) / 2.0;
    let mid = (b + a) / 2.0;
    rules
        .into_iter()
        .map(|(x, w)| (mid + half * x, half * w))
        .collect()
}

fn legendre_and_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, dp)
}

/// Central difference df/dx at `x` with step `h`.
pub fn central_diff(f: impl Fn(f64) -> f64, x: f64, h: f64) -> f64 {
    (f(x + h) - f(x - h)) / (2.0 * h)
}

pub fn max_abs(values: impl IntoIterator<Item = f64>) -> f64 {
    values.into_iter().fold(0.0, |m, v| m.max(v.abs()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dmatrix;

    #[test]
    fn same_span_different_basis() {
        let a = dmatrix![1.0, 0.0; 0.0, 1.0; 0.0, 0.0];
        let b = dmatrix![1.0, 1.0; 1.0, -1.0; 0.0, 0.0];
        assert!(subspace_residual(&a, &b) < 1e-12);
    }

    #[test]
    fn orthogonal_spans() {
        let a = dmatrix![1.0; 0.0];
        let b = dmatrix![0.0; 1.0];
        assert!((subspace_residual(&a, &b) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn tilted_span() {
        let a = dmatrix![1.0; 0.0];
        let theta: f64 = 0.3;
        let b = dmatrix![theta.cos(); theta.sin()];
        assert!((subspace_residual(&a, &b) - theta.sin()).abs() < 1e-12);
    }

    #[test]
    fn rank_mismatch_saturates() {
        let a = dmatrix![1.0, 0.0; 0.0, 1.0];
        let b = dmatrix![1.0; 0.0];
        assert_eq!(subspace_residual(&a, &b), 1.0);
    }

    #[test]
    fn quadrature_exact_on_polynomials() {
        // 5-point rule integrates degree <= 9 exactly.
        let rule = gauss_legendre(5, 0.0, 1.0);
        let integral: f64 = rule.iter().map(|&(x, w)| w * x.powi(9)).sum();
        assert!((integral - 0.1).abs() < 1e-14);
        let total: f64 = rule.iter().map(|&(_, w)| w).sum();
        assert!((total - 1.0).abs() < 1e-14);
    }

    #[test]
    fn central_difference() {
        let d = central_diff(|x| x * x * x, 2.0, 1e-5);
        assert!((d - 12.0).abs() < 1e-8);
    }
}
