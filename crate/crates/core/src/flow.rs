//! ODE integration, numeric and formal.
//!
//! The numeric side is a Dormand-Prince 5(4) adaptive integrator plus a
//! fixed-step RK4, both integrating dz/ds = +F(s, z). Call sites that follow
//! a reversed-time convention negate the time argument themselves.
//!
//! The formal side is a Picard iteration that solves polynomial ODEs exactly
//! in a truncated polynomial ring, for right-hand sides whose structure makes
//! the iteration stabilize (each sweep pushes the correction to higher
//! truncation degree).

use thiserror::Error;

use crate::poly::{AlgebraError, Poly, Trunc};
use crate::scalar::Scalar;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FlowError {
    #[error("trajectory left the chart box (sup-norm {sup:.3}) at s = {s:.6}")]
    LeftChart { s: f64, sup: f64 },
    #[error("step size underflow at s = {s:.6}")]
    StepUnderflow { s: f64 },
    #[error("exceeded {0} integration steps")]
    MaxSteps(usize),
    #[error("right-hand side failed: {0}")]
    Rhs(String),
}

impl FlowError {
    pub fn code(&self) -> &'static str {
        match self {
            FlowError::LeftChart { .. } => "flow.left_chart",
            FlowError::StepUnderflow { .. } => "flow.step_underflow",
            FlowError::MaxSteps(_) => "flow.max_steps",
            FlowError::Rhs(_) => "flow.rhs",
        }
    }
}

#[derive(Debug, Clone)]
pub struct FlowOpts {
    pub rel_tol: f64,
    pub abs_tol: f64,
    /// Sup-norm bound on the state; crossing it aborts with `LeftChart`.
    pub box_limit: f64,
    pub max_steps: usize,
}

impl Default for FlowOpts {
    fn default() -> Self {
        FlowOpts {
            rel_tol: 1e-10,
            abs_tol: 1e-12,
            box_limit: 10.0,
            max_steps: 100_000,
        }
    }
}

fn sup_norm(z: &[f64]) -> f64 {
    z.iter().fold(0.0, |m, v| m.max(v.abs()))
}

/// Dormand-Prince 5(4) with PI step-size control.
pub fn dopri5<F>(rhs: F, z0: &[f64], s0: f64, s1: f64, opts: &FlowOpts) -> Result<Vec<f64>, FlowError>
where
    F: Fn(f64, &[f64]) -> Vec<f64>,
{
    const A: [[f64; 6]; 6] = [
        [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
        [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
        [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
        [
            19372.0 / 6561.0,
            -25360.0 / 2187.0,
            64448.0 / 6561.0,
            -212.0 / 729.0,
            0.0,
            0.0,
        ],
        [
            9017.0 / 3168.0,
            -355.0 / 33.0,
            46732.0 / 5247.0,
            49.0 / 176.0,
            -5103.0 / 18656.0,
            0.0,
        ],
        [
            35.0 / 384.0,
            0.0,
            500.0 / 1113.0,
            125.0 / 192.0,
            -2187.0 / 6784.0,
            11.0 / 84.0,
        ],
    ];
    const C: [f64; 6] = [0.2, 0.3, 0.8, 8.0 / 9.0, 1.0, 1.0];
    const E: [f64; 7] = [
        71.0 / 57600.0,
        0.0,
        -71.0 / 16695.0,
        71.0 / 1920.0,
        -17253.0 / 339200.0,
        22.0 / 525.0,
        -1.0 / 40.0,
    ];

    let n = z0.len();
    let span = s1 - s0;
    if span == 0.0 {
        return Ok(z0.to_vec());
    }
    let dir = span.signum();
    let mut s = s0;
    let mut z = z0.to_vec();
    if sup_norm(&z) > opts.box_limit {
        return Err(FlowError::LeftChart { s, sup: sup_norm(&z) });
    }
    let mut k0 = rhs(s, &z);
    let mut h = (span.abs() / 100.0).min(0.1).max(1e-8) * dir;
    let mut prev_err: f64 = 1.0;
    for _step in 0..opts.max_steps {
        if (s - s1) * dir >= 0.0 {
            return Ok(z);
        }
        if (s + h - s1) * dir > 0.0 {
            h = s1 - s;
        }
        if h.abs() < 1e-14 * (1.0 + s.abs()) {
            return Err(FlowError::StepUnderflow { s });
        }
        let mut k = vec![k0.clone()];
        for stage in 0..6 {
            let mut zt = z.clone();
            for (j, kj) in k.iter().enumerate() {
                let a = A[stage][j];
                if a != 0.0 {
                    for i in 0..n {
                        zt[i] += h * a * kj[i];
                    }
                }
            }
            k.push(rhs(s + C[stage] * h, &zt));
        }
        // 5th order solution is stage 6's argument (FSAL pair).
        let mut z5 = z.clone();
        for (j, kj) in k.iter().enumerate().take(6) {
            let b = A[5][j];
            if b != 0.0 {
                for i in 0..n {
                    z5[i] += h * b * kj[i];
                }
            }
        }
        let mut err: f64 = 0.0;
        for i in 0..n {
            let mut e = 0.0;
            for (j, kj) in k.iter().enumerate() {
                e += E[j] * kj[i];
            }
            e *= h;
            let scale = opts.abs_tol + opts.rel_tol * z[i].abs().max(z5[i].abs());
            err = err.max((e / scale).abs());
        }
        if err <= 1.0 {
            s += h;
            z = z5;
            k0 = k.pop().unwrap();
            if sup_norm(&z) > opts.box_limit {
                return Err(FlowError::LeftChart { s, sup: sup_norm(&z) });
            }
            // PI controller.
            let fac = 0.9 * err.max(1e-10).powf(-0.7 / 5.0) * prev_err.powf(0.4 / 5.0);
            prev_err = err.max(1e-10);
            h *= fac.clamp(0.2, 5.0);
        } else {
            h *= (0.9 * err.powf(-0.2)).clamp(0.1, 1.0);
        }
    }
    Err(FlowError::MaxSteps(opts.max_steps))
}

/// Classical RK4 with a fixed number of steps.
pub fn rk4_fixed<F>(rhs: F, z0: &[f64], s0: f64, s1: f64, steps: usize) -> Vec<f64>
where
    F: Fn(f64, &[f64]) -> Vec<f64>,
{
    let n = z0.len();
    let h = (s1 - s0) / steps as f64;
    let mut z = z0.to_vec();
    let mut s = s0;
    let axpy = |z: &[f64], a: f64, k: &[f64]| -> Vec<f64> {
        (0..n).map(|i| z[i] + a * k[i]).collect()
    };
    for _ in 0..steps {
        let k1 = rhs(s, &z);
        let k2 = rhs(s + h / 2.0, &axpy(&z, h / 2.0, &k1));
        let k3 = rhs(s + h / 2.0, &axpy(&z, h / 2.0, &k2));
        let k4 = rhs(s + h, &axpy(&z, h, &k3));
        for i in 0..n {
            z[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
        s += h;
    }
    z
}

/// Solve dz/ds = rhs(z) with z(0) = init by Picard iteration in a truncated
/// polynomial ring.
///
/// All polynomials live on one chart that contains the formal time
/// coordinate `s_index`; `init` must not involve it. Iterates
/// z <- init + integral of rhs(z) ds until a sweep is a fixpoint. The
/// truncation must make the iteration contracting, which holds when every
/// right-hand side term gains either truncation degree or a power of s.
pub fn picard_solve<C, F>(
    init: &[Poly<C>],
    s_index: usize,
    trunc: &Trunc,
    max_sweeps: usize,
    rhs: F,
) -> Result<Vec<Poly<C>>, AlgebraError>
where
    C: Scalar,
    F: Fn(&[Poly<C>]) -> Result<Vec<Poly<C>>, AlgebraError>,
{
    let mut z: Vec<Poly<C>> = init.iter().map(|p| p.truncate(trunc)).collect();
    for _ in 0..max_sweeps {
        let deriv = rhs(&z)?;
        assert_eq!(deriv.len(), z.len(), "rhs dimension mismatch");
        let mut next = Vec::with_capacity(z.len());
        for (i, d) in deriv.iter().enumerate() {
            let integrated = d.integrate(s_index)?.truncate(trunc);
            next.push(init[i].truncate(trunc).add(&integrated));
        }
        if next == z {
            return Ok(z);
        }
        z = next;
    }
    Err(AlgebraError::NoFixpoint(max_sweeps))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::poly::{Poly, Trunc};
    use crate::scalar::{rat_int, Rat};
    use crate::Chart;

    #[test]
    fn dopri5_exponential() {
        let rhs = |_s: f64, z: &[f64]| vec![z[0]];
        let z = dopri5(rhs, &[1.0], 0.0, 1.0, &FlowOpts::default()).unwrap();
        assert!((z[0] - std::f64::consts::E).abs() < 1e-9);
    }

    #[test]
    fn dopri5_circle() {
        let rhs = |_s: f64, z: &[f64]| vec![-z[1], z[0]];
        let z = dopri5(
            rhs,
            &[1.0, 0.0],
            0.0,
            std::f64::consts::PI / 2.0,
            &FlowOpts::default(),
        )
        .unwrap();
        assert!(z[0].abs() < 1e-9 && (z[1] - 1.0).abs() < 1e-9);
    }

    #[test]
    fn box_guard_fires() {
        let rhs = |_s: f64, z: &[f64]| vec![z[0] * z[0]];
        // dz/ds = z^2 from z=1 blows up at s=1
        let err = dopri5(rhs, &[1.0], 0.0, 2.0, &FlowOpts::default()).unwrap_err();
        match err {
            FlowError::LeftChart { .. } => {}
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn rk4_matches_closed_form() {
        let rhs = |_s: f64, z: &[f64]| vec![z[0]];
        let z = rk4_fixed(rhs, &[1.0], 0.0, 1.0, 64);
        assert!((z[0] - std::f64::consts::E).abs() < 1e-7);
    }

    #[test]
    fn picard_solves_quadratic_flow() {
        // dz/ds = z^2 with z(0) = y has solution y/(1 - s*y) = sum y^{k+1} s^k.
        let c = Chart::submanifold("p", &["s"], &["y"]).unwrap();
        let y = Poly::<Rat>::var(&c, 1);
        let trunc = Trunc::new(&[1], 4);
        let sol = picard_solve(&[y], 0, &trunc, 16, |z| Ok(vec![z[0].mul_trunc(&z[0], &trunc)]))
            .unwrap();
        let expect = Poly::<Rat>::parse(&c, "y + s*y^2 + s^2*y^3 + s^3*y^4").unwrap();
        assert_eq!(sol[0], expect);
    }

    #[test]
    fn picard_reports_missing_fixpoint() {
        // dz/ds = 1 + z^2 gains no truncation degree: tan(s) never stabilizes.
        let c = Chart::submanifold("p", &["s"], &["y"]).unwrap();
        let one = Poly::<Rat>::one(&c);
        let trunc = Trunc::new(&[1], 3);
        let err = picard_solve(&[Poly::zero(&c)], 0, &trunc, 8, |z| {
            Ok(vec![one.add(&z[0].mul(&z[0]))])
        })
        .unwrap_err();
        match err {
            AlgebraError::NoFixpoint(8) => {}
            other => panic!("unexpected {other:?}"),
        }
        let _ = rat_int(0);
    }
}
