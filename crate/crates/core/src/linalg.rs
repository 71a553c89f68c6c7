//! Dense linear algebra over an exact scalar (row reduction, solving,
//! nullspaces, determinants). Pivots are chosen by largest float magnitude,
//! which is a no-op refinement for exact coefficients and sensible for f64.

use crate::scalar::Scalar;

pub type Mat<C> = Vec<Vec<C>>;

pub fn identity<C: Scalar>(n: usize) -> Mat<C> {
    (0..n)
        .map(|i| {
            (0..n)
                .map(|j| if i == j { C::one() } else { C::zero() })
                .collect()
        })
        .collect()
}

pub fn transpose<C: Scalar>(a: &[Vec<C>]) -> Mat<C> {
    if a.is_empty() {
        return Vec::new();
    }
    let cols = a[0].len();
    (0..cols)
        .map(|j| a.iter().map(|row| row[j].clone()).collect())
        .collect()
}

pub fn mat_vec<C: Scalar>(a: &[Vec<C>], x: &[C]) -> Vec<C> {
    a.iter()
        .map(|row| {
            row.iter()
                .zip(x.iter())
                .fold(C::zero(), |acc, (r, v)| acc + r.clone() * v.clone())
        })
        .collect()
}

pub fn mat_mul<C: Scalar>(a: &[Vec<C>], b: &[Vec<C>]) -> Mat<C> {
    let bt = transpose(b);
    a.iter()
        .map(|row| {
            bt.iter()
                .map(|col| {
                    row.iter()
                        .zip(col.iter())
                        .fold(C::zero(), |acc, (r, v)| acc + r.clone() * v.clone())
                })
                .collect()
        })
        .collect()
}

/// Reduce `m` to reduced row echelon form in place; returns the pivot
/// columns.
pub fn rref<C: Scalar>(m: &mut Mat<C>) -> Vec<usize> {
    let rows = m.len();
    if rows == 0 {
        return Vec::new();
    }
    let cols = m[0].len();
    let mut pivots = Vec::new();
    let mut r = 0;
    for c in 0..cols {
        if r >= rows {
            break;
        }
        // Best pivot by float magnitude; exact zeros are skipped outright.
        let mut best: Option<(usize, f64)> = None;
        for i in r..rows {
            if !m[i][c].is_zero() {
                let mag = m[i][c].to_float().abs();
                if best.map(|(_, bm)| mag > bm).unwrap_or(true) {
                    best = Some((i, mag));
                }
            }
        }
        let Some((pivot_row, _)) = best else { continue };
        m.swap(r, pivot_row);
        let inv = C::one() / m[r][c].clone();
        for j in c..cols {
            m[r][j] = m[r][j].clone() * inv.clone();
        }
        for i in 0..rows {
            if i != r && !m[i][c].is_zero() {
                let f = m[i][c].clone();
                for j in c..cols {
                    let delta = f.clone() * m[r][j].clone();
                    m[i][j] = m[i][j].clone() - delta;
                }
            }
        }
        pivots.push(c);
        r += 1;
    }
    pivots
}

pub fn rank<C: Scalar>(a: &[Vec<C>]) -> usize {
    let mut m = a.to_vec();
    rref(&mut m).len()
}

/// One solution of `a x = b` with free variables set to zero; `None` if the
/// system is inconsistent.
pub fn solve<C: Scalar>(a: &[Vec<C>], b: &[C]) -> Option<Vec<C>> {
    let rows = a.len();
    assert_eq!(rows, b.len());
    let cols = if rows == 0 { 0 } else { a[0].len() };
    let mut aug: Mat<C> = a
        .iter()
        .zip(b.iter())
        .map(|(row, rhs)| {
            let mut r = row.clone();
            r.push(rhs.clone());
            r
        })
        .collect();
    let pivots = rref(&mut aug);
    if pivots.last() == Some(&cols) {
        return None;
    }
    let mut x = vec![C::zero(); cols];
    for (r, &c) in pivots.iter().enumerate() {
        x[c] = aug[r][cols].clone();
    }
    Some(x)
}

/// Basis of the right nullspace of `a`.
pub fn nullspace<C: Scalar>(a: &[Vec<C>]) -> Vec<Vec<C>> {
    let rows = a.len();
    let cols = if rows == 0 { 0 } else { a[0].len() };
    if rows == 0 {
        return (0..cols)
            .map(|j| {
                let mut v = vec![C::zero(); cols];
                v[j] = C::one();
                v
            })
            .collect();
    }
    let mut m = a.to_vec();
    let pivots = rref(&mut m);
    let pivot_set: std::collections::BTreeSet<usize> = pivots.iter().cloned().collect();
    let mut basis = Vec::new();
    for free in 0..cols {
        if pivot_set.contains(&free) {
            continue;
        }
        let mut v = vec![C::zero(); cols];
        v[free] = C::one();
        for (r, &p) in pivots.iter().enumerate() {
            v[p] = -m[r][free].clone();
        }
        basis.push(v);
    }
    basis
}

pub fn invert<C: Scalar>(a: &[Vec<C>]) -> Option<Mat<C>> {
    let n = a.len();
    let mut aug: Mat<C> = a
        .iter()
        .enumerate()
        .map(|(i, row)| {
            assert_eq!(row.len(), n, "matrix must be square");
            let mut r = row.clone();
            for j in 0..n {
                r.push(if i == j { C::one() } else { C::zero() });
            }
            r
        })
        .collect();
    let pivots = rref(&mut aug);
    if pivots.len() != n {
        return None;
    }
    Some(aug.into_iter().map(|row| row[n..].to_vec()).collect())
}

pub fn det<C: Scalar>(a: &[Vec<C>]) -> C {
    let n = a.len();
    let mut m = a.to_vec();
    let mut sign_flip = false;
    let mut result = C::one();
    for c in 0..n {
        let mut pivot = None;
        for i in c..n {
            if !m[i][c].is_zero() {
                pivot = Some(i);
                break;
            }
        }
        let Some(p) = pivot else { return C::zero() };
        if p != c {
            m.swap(p, c);
            sign_flip = !sign_flip;
        }
        result = result * m[c][c].clone();
        let inv = C::one() / m[c][c].clone();
        for i in (c + 1)..n {
            if m[i][c].is_zero() {
                continue;
            }
            let f = m[i][c].clone() * inv.clone();
            for j in c..n {
                let delta = f.clone() * m[c][j].clone();
                m[i][j] = m[i][j].clone() - delta;
            }
        }
    }
    if sign_flip {
        -result
    } else {
        result
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::{rat, rat_int, Rat};
    use num_traits::Zero;

    fn m(rows: &[&[i64]]) -> Mat<Rat> {
        rows.iter()
            .map(|r| r.iter().map(|&v| rat_int(v)).collect())
            .collect()
    }

    #[test]
    fn solve_exact() {
        let a = m(&[&[2, 1], &[1, 3]]);
        let b = vec![rat_int(5), rat_int(10)];
        let x = solve(&a, &b).unwrap();
        assert_eq!(x, vec![rat_int(1), rat_int(3)]);
        // inconsistent
        let a2 = m(&[&[1, 1], &[2, 2]]);
        assert!(solve(&a2, &[rat_int(1), rat_int(3)]).is_none());
    }

    #[test]
    fn nullspace_and_rank() {
        let a = m(&[&[1, 2, 3], &[2, 4, 6]]);
        assert_eq!(rank(&a), 1);
        let ns = nullspace(&a);
        assert_eq!(ns.len(), 2);
        for v in &ns {
            let r = mat_vec(&a, v);
            assert!(r.iter().all(|x| x.is_zero()));
        }
    }

    #[test]
    fn inverse_and_det() {
        let a = m(&[&[2, 1], &[1, 1]]);
        assert_eq!(det(&a), rat_int(1));
        let inv = invert(&a).unwrap();
        let prod = mat_mul(&a, &inv);
        assert_eq!(prod, identity::<Rat>(2));
        let fractional = vec![vec![rat(1, 2), rat(1, 3)], vec![rat(1, 4), rat(1, 5)]];
        let d = det(&fractional);
        assert_eq!(d, rat(1, 60));
    }
}
