//! Small numeric kernels shared by the deterministic modules: adaptive
//! Simpson quadrature, bracketed root finding, and an adaptive Cash-Karp
//! Runge-Kutta step for the scalar fluid ODE.

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Adaptive Simpson quadrature of `f` on `[a, b]` to absolute tolerance
/// `tol`. The integrand may be steep near the endpoints (the callers
/// integrate through integrable singularities after a substitution), so the
/// recursion depth limit is generous. Subdivision stops early once the
/// Richardson defect stops contracting: that is the rounding-noise floor of
/// the integrand (e.g. cancellation in 1 - g(u) very close to x_inf), below
/// which further splitting cannot improve the estimate.
pub fn adaptive_simpson<F: Scalar>(f: &dyn Fn(F) -> F, a: F, b: F, tol: F) -> Result<F> {
    if a == b {
        return Ok(F::zero());
    }
    let two = F::c(2.0);
    let six = F::c(6.0);
    let m = (a + b) / two;
    let fa = f(a);
    let fm = f(m);
    let fb = f(b);
    let whole = (b - a) / six * (fa + F::c(4.0) * fm + fb);
    simpson_rec(f, a, b, fa, fm, fb, whole, tol, 64, F::infinity(), 0)
}

#[allow(clippy::too_many_arguments)]
fn simpson_rec<F: Scalar>(
    f: &dyn Fn(F) -> F,
    a: F,
    b: F,
    fa: F,
    fm: F,
    fb: F,
    whole: F,
    tol: F,
    depth: u32,
    parent_delta: F,
    stall: u8,
) -> Result<F> {
    let two = F::c(2.0);
    let six = F::c(6.0);
    let four = F::c(4.0);
    let m = (a + b) / two;
    let lm = (a + m) / two;
    let rm = (m + b) / two;
    let flm = f(lm);
    let frm = f(rm);
    let left = (m - a) / six * (fa + four * flm + fm);
    let right = (b - m) / six * (fm + four * frm + fb);
    let delta = left + right - whole;
    let refined = left + right + delta / F::c(15.0);
    if delta.abs() <= F::c(15.0) * tol {
        return Ok(refined);
    }
    // A smooth integrand contracts the defect by ~16x per halving. When two
    // consecutive halvings fail to contract it by even 4x AND the defect is
    // already tiny relative to the leaf magnitude, the defect is rounding
    // noise and this is the best estimate the arithmetic allows. Genuine
    // singular behavior keeps an O(1) relative defect and keeps splitting.
    let stall = if delta.abs() * F::c(4.0) > parent_delta.abs() {
        stall + 1
    } else {
        0
    };
    if stall >= 2 {
        let scale = (b - a).abs() * (fa.abs() + four * fm.abs() + fb.abs()) / six;
        let rel_floor = F::c(1e-6).max(F::epsilon().sqrt() * F::c(10.0));
        if delta.abs() <= scale * rel_floor {
            return Ok(refined);
        }
    }
    if depth == 0 {
        return Err(Error::numeric(
            "adaptive_simpson",
            format!("max subdivision depth reached on [{a}, {b}], residual {delta:e}"),
        ));
    }
    let half_tol = tol / two;
    let l = simpson_rec(f, a, m, fa, flm, fm, left, half_tol, depth - 1, delta, stall)?;
    let r = simpson_rec(f, m, b, fm, frm, fb, right, half_tol, depth - 1, delta, stall)?;
    Ok(l + r)
}

/// Bisection for a root of `f` on the bracket `[lo, hi]`, assuming
/// `f(lo)` and `f(hi)` have opposite signs. Stops when the bracket width
/// falls below `rel_tol * |mid|` (plus an absolute floor for roots at 0).
pub fn bisect<F: Scalar>(f: &dyn Fn(F) -> F, lo: F, hi: F, rel_tol: F) -> Result<F> {
    let mut lo = lo;
    let mut hi = hi;
    let mut flo = f(lo);
    let fhi = f(hi);
    if flo == F::zero() {
        return Ok(lo);
    }
    if fhi == F::zero() {
        return Ok(hi);
    }
    if (flo > F::zero()) == (fhi > F::zero()) {
        return Err(Error::numeric(
            "bisect",
            format!("no sign change on bracket [{lo}, {hi}]"),
        ));
    }
    for _ in 0..4096 {
        let mid = (lo + hi) / F::c(2.0);
        let width = hi - lo;
        if width <= rel_tol * mid.abs().max(F::min_positive_value()) || mid == lo || mid == hi {
            return Ok(mid);
        }
        let fmid = f(mid);
        if fmid == F::zero() {
            return Ok(mid);
        }
        if (fmid > F::zero()) == (flo > F::zero()) {
            lo = mid;
            flo = fmid;
        } else {
            hi = mid;
        }
    }
    Ok((lo + hi) / F::c(2.0))
}

/// Cash-Karp 4(5) adaptive integration of the scalar autonomous ODE
/// `x' = rhs(x)` from `t0` to `t1`, local error controlled to `tol`
/// (absolute, per unit step).
pub fn rk45<F: Scalar>(rhs: &dyn Fn(F) -> F, t0: F, t1: F, x0: F, tol: F) -> Result<F> {
    if t1 < t0 {
        return Err(Error::domain("rk45", "backward integration not supported"));
    }
    let span = t1 - t0;
    if span == F::zero() {
        return Ok(x0);
    }
    // Cash-Karp tableau.
    let b21 = F::c(1.0 / 5.0);
    let (b31, b32) = (F::c(3.0 / 40.0), F::c(9.0 / 40.0));
    let (b41, b42, b43) = (F::c(3.0 / 10.0), F::c(-9.0 / 10.0), F::c(6.0 / 5.0));
    let (b51, b52, b53, b54) = (
        F::c(-11.0 / 54.0),
        F::c(5.0 / 2.0),
        F::c(-70.0 / 27.0),
        F::c(35.0 / 27.0),
    );
    let (b61, b62, b63, b64, b65) = (
        F::c(1631.0 / 55296.0),
        F::c(175.0 / 512.0),
        F::c(575.0 / 13824.0),
        F::c(44275.0 / 110592.0),
        F::c(253.0 / 4096.0),
    );
    let (c1, c3, c4, c6) = (
        F::c(37.0 / 378.0),
        F::c(250.0 / 621.0),
        F::c(125.0 / 594.0),
        F::c(512.0 / 1771.0),
    );
    let (d1, d3, d4, d5, d6) = (
        F::c(37.0 / 378.0 - 2825.0 / 27648.0),
        F::c(250.0 / 621.0 - 18575.0 / 48384.0),
        F::c(125.0 / 594.0 - 13525.0 / 55296.0),
        F::c(-277.0 / 14336.0),
        F::c(512.0 / 1771.0 - 1.0 / 4.0),
    );

    let mut t = t0;
    let mut x = x0;
    let mut h = span.min(F::c(0.1));
    let h_min = span * F::epsilon() * F::c(16.0);
    let mut steps = 0u64;
    while t < t1 {
        if steps > 50_000_000 {
            return Err(Error::numeric("rk45", "step budget exhausted"));
        }
        steps += 1;
        if t + h > t1 {
            h = t1 - t;
        }
        let k1 = rhs(x);
        let k2 = rhs(x + h * b21 * k1);
        let k3 = rhs(x + h * (b31 * k1 + b32 * k2));
        let k4 = rhs(x + h * (b41 * k1 + b42 * k2 + b43 * k3));
        let k5 = rhs(x + h * (b51 * k1 + b52 * k2 + b53 * k3 + b54 * k4));
        let k6 = rhs(x + h * (b61 * k1 + b62 * k2 + b63 * k3 + b64 * k4 + b65 * k5));
        let dx = h * (c1 * k1 + c3 * k3 + c4 * k4 + c6 * k6);
        let err = (h * (d1 * k1 + d3 * k3 + d4 * k4 + d5 * k5 + d6 * k6)).abs();
        let scale = tol * h.max(F::c(1e-4));
        if err <= scale || h <= h_min {
            t = t + h;
            x = x + dx;
        }
        // Standard step-size update with safety factor and clamped growth.
        let ratio = if err > F::zero() {
            F::c(0.9) * (scale / err).powf(F::c(0.2))
        } else {
            F::c(5.0)
        };
        h = h * ratio.max(F::c(0.2)).min(F::c(5.0));
        if h < h_min {
            h = h_min;
        }
    }
    Ok(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn simpson_polynomial_is_near_exact() {
        let v = adaptive_simpson(&|x: f64| x * x * x, 0.0, 2.0, 1e-12).unwrap();
        assert_relative_eq!(v, 4.0, epsilon = 1e-12);
    }

    #[test]
    fn simpson_log_singularity() {
        // integral of ln(x) on (0,1] is -1; integrable endpoint singularity
        let v = adaptive_simpson(&|x: f64| (x.max(1e-300)).ln(), 1e-14, 1.0, 1e-10).unwrap();
        assert_relative_eq!(v, -1.0, epsilon = 1e-8);
    }

    #[test]
    fn bisect_finds_sqrt2() {
        let r = bisect(&|x: f64| x * x - 2.0, 0.0, 2.0, 1e-14).unwrap();
        assert_relative_eq!(r, std::f64::consts::SQRT_2, epsilon = 1e-12);
    }

    #[test]
    fn bisect_rejects_bad_bracket() {
        assert!(bisect(&|x: f64| x * x + 1.0, -1.0, 1.0, 1e-12).is_err());
    }

    #[test]
    fn rk45_exponential_decay() {
        let v = rk45(&|x: f64| -x, 0.0, 3.0, 1.0, 1e-10).unwrap();
        assert_relative_eq!(v, (-3.0f64).exp(), epsilon = 1e-8);
    }

    #[test]
    fn rk45_logistic_closed_form() {
        // x' = x(1-x), x(0)=0.1 -> x(t) = 1/(1+9 e^{-t})
        let v = rk45(&|x: f64| x * (1.0 - x), 0.0, 2.0, 0.1, 1e-10).unwrap();
        assert_relative_eq!(v, 1.0 / (1.0 + 9.0 * (-2.0f64).exp()), epsilon = 1e-8);
    }
}
