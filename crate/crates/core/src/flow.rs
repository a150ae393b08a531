//! Deterministic analysis of the fluid ODE x' = (lambda-mu) x (1 - g(x)).
//!
//! The solution is implicit through the strictly increasing function
//! G(x) = log x + H(x), where H integrates g(u)/(u(1-g(u))) from 0. This
//! module tabulates H on a sub-interval of (0, x_inf), evaluates G and its
//! inverse to tight tolerances, and exposes the flow map
//! phi_{s,t}(x) = G^{-1}(G(x) + (lambda-mu)(t-s)) together with a direct
//! Runge-Kutta integrator of the ODE that serves as an independent
//! cross-check.

use std::io::Write;

use crate::error::{Error, Result};
use crate::model::{ModelAnalysis, ModelSpec};
use crate::numeric::{adaptive_simpson, rk45};
use crate::scalar::Scalar;

/// Tuning knobs for the tabulation; defaults match the working precision.
#[derive(Debug, Clone)]
pub struct GTableConfig<F> {
    /// Number of Chebyshev-spaced nodes.
    pub nodes: usize,
    /// Absolute quadrature tolerance per increment.
    pub quad_tol: F,
    /// Domain margin: the table covers [eps*x_inf, (1-eps)*x_inf].
    pub domain_eps: F,
    /// Absolute tolerance on G-values in the inversion.
    pub inv_tol: F,
}

impl<F: Scalar> Default for GTableConfig<F> {
    fn default() -> Self {
        GTableConfig {
            nodes: 4096,
            quad_tol: F::tol(1e-12),
            domain_eps: F::tol(1e-8),
            inv_tol: F::tol(1e-10),
        }
    }
}

#[derive(Debug, Clone)]
struct Node<F> {
    x: F,
    /// H(x), accumulated from 0.
    h: F,
    /// G(x) = log x + H(x).
    g: F,
}

/// Tabulated representation of G on [x_lo, x_hi] subset of (0, x_inf),
/// supporting evaluation, inversion, and the forward flow. Immutable after
/// construction.
#[derive(Debug, Clone)]
pub struct GTable<F: Scalar> {
    model: ModelSpec<F>,
    x_inf: F,
    nodes: Vec<Node<F>>,
    cfg: GTableConfig<F>,
}

impl<F: Scalar> GTable<F> {
    pub fn build(analysis: &ModelAnalysis<F>) -> Result<Self> {
        Self::build_with(analysis, GTableConfig::default())
    }

    pub fn build_with(analysis: &ModelAnalysis<F>, cfg: GTableConfig<F>) -> Result<Self> {
        let model = analysis.model().clone();
        let x_inf = analysis.x_inf();
        let n = cfg.nodes.max(16);
        let x_lo = cfg.domain_eps * x_inf;
        let x_hi = (F::one() - cfg.domain_eps) * x_inf;
        let mid = (x_lo + x_hi) / F::c(2.0);
        let half = (x_hi - x_lo) / F::c(2.0);

        let mut nodes = Vec::with_capacity(n);
        let pi = F::c(std::f64::consts::PI);
        let nm1 = F::from_usize(n - 1).unwrap();
        let mut h_acc = singular_head(&model, x_lo, cfg.quad_tol)?;
        let mut prev_x = x_lo;
        for j in 0..n {
            let x = if j == 0 {
                x_lo
            } else if j == n - 1 {
                x_hi
            } else {
                mid - half * (pi * F::from_usize(j).unwrap() / nm1).cos()
            };
            if j > 0 {
                h_acc = h_acc + integrate_h(&model, prev_x, x, cfg.quad_tol)?;
                prev_x = x;
            }
            nodes.push(Node {
                x,
                h: h_acc,
                g: x.ln() + h_acc,
            });
        }
        for w in nodes.windows(2) {
            if !(w[1].g > w[0].g) {
                return Err(Error::numeric(
                    "gtable",
                    format!("G not strictly increasing near x = {}", w[1].x),
                ));
            }
        }
        Ok(GTable {
            model,
            x_inf,
            nodes,
            cfg,
        })
    }

    pub fn model(&self) -> &ModelSpec<F> {
        &self.model
    }

    pub fn x_inf(&self) -> F {
        self.x_inf
    }

    pub fn domain(&self) -> (F, F) {
        (self.nodes[0].x, self.nodes[self.nodes.len() - 1].x)
    }

    /// H(x) = integral of g(u)/(u(1-g(u))) over (0, x], for 0 <= x < x_inf.
    /// Evaluated by an exact quadrature increment from the nearest table
    /// node, so accuracy does not depend on interpolation.
    pub fn big_h(&self, x: F) -> Result<F> {
        if x == F::zero() {
            return Ok(F::zero());
        }
        if x < F::zero() || x >= self.x_inf {
            return Err(Error::domain(
                "big_h",
                format!("H diverges outside [0, x_inf): x = {x}, x_inf = {}", self.x_inf),
            ));
        }
        let (x_lo, _) = self.domain();
        if x < x_lo {
            return singular_head(&self.model, x, self.cfg.quad_tol);
        }
        let j = self.nearest_node_index(x);
        let node = &self.nodes[j];
        let inc = if x >= node.x {
            integrate_h(&self.model, node.x, x, self.cfg.quad_tol)?
        } else {
            -integrate_h(&self.model, x, node.x, self.cfg.quad_tol)?
        };
        Ok(node.h + inc)
    }

    /// G(x) = log x + H(x), strictly increasing on (0, x_inf).
    pub fn big_g(&self, x: F) -> Result<F> {
        if x <= F::zero() || x >= self.x_inf {
            return Err(Error::domain(
                "big_g",
                format!("G defined on (0, x_inf): x = {x}, x_inf = {}", self.x_inf),
            ));
        }
        Ok(x.ln() + self.big_h(x)?)
    }

    /// Inverse of G for any finite y, extrapolated by the exact asymptotics
    /// G(x) ~ log x + H(x_lo) below the table and by the boundary slope
    /// above it; always in (0, x_inf). Infinities map to the boundary
    /// values 0 and x_inf.
    pub fn big_g_inv(&self, y: F) -> F {
        if y == F::neg_infinity() {
            return F::zero();
        }
        if y == F::infinity() {
            return self.x_inf;
        }
        let first = &self.nodes[0];
        let last = &self.nodes[self.nodes.len() - 1];
        if y <= first.g {
            // below the table G(x) = log x + H(x) with 0 <= H <= H(x_lo)
            return (y - first.h).exp().max(F::min_positive_value());
        }
        if y >= last.g {
            let slope = F::one() / (last.x * (F::one() - self.g_of(last.x)));
            let cap = self.x_inf * (F::one() - F::tol(1e-12));
            return (last.x + (y - last.g) / slope).min(cap);
        }
        // bracket between adjacent nodes, then safeguarded Newton on
        // G(x) - y with the analytic derivative 1/(x(1-g)).
        let idx = self.nodes.partition_point(|nd| nd.g <= y);
        let (lo, hi) = (&self.nodes[idx - 1], &self.nodes[idx]);
        let mut a = lo.x;
        let mut b = hi.x;
        // chord in (x, G) seeds the iteration
        let mut x = a + (b - a) * (y - lo.g) / (hi.g - lo.g);
        let h_at = |xx: F| -> F {
            // node-incremental H; errors surface as NaN and trip bisection
            self.big_h(xx).unwrap_or(F::nan())
        };
        for _ in 0..80 {
            let gx = x.ln() + h_at(x);
            let resid = gx - y;
            if resid.abs() <= self.cfg.inv_tol {
                return x;
            }
            if resid.is_nan() {
                break;
            }
            if resid > F::zero() {
                b = x;
            } else {
                a = x;
            }
            let slope = F::one() / (x * (F::one() - self.g_of(x)));
            let mut next = x - resid / slope;
            if !(next > a && next < b) {
                next = (a + b) / F::c(2.0);
            }
            if next == x {
                return x;
            }
            x = next;
        }
        (a + b) / F::c(2.0)
    }

    /// Psi(x) = G^{-1}(log x) for x > 0 and Psi(0) = 0; continuous and
    /// nondecreasing on [0, infinity).
    pub fn psi(&self, x: F) -> Result<F> {
        if x < F::zero() || x.is_nan() {
            return Err(Error::domain("psi", format!("x must be >= 0, got {x}")));
        }
        if x == F::zero() {
            return Ok(F::zero());
        }
        Ok(self.big_g_inv(x.ln()))
    }

    /// Forward flow phi_{s,t}(x): G(phi) = G(x) + (lambda-mu)(t-s), with
    /// phi_{s,t}(0) = 0. Backward flow (t < s) is rejected.
    pub fn flow_phi(&self, s: F, t: F, x: F) -> Result<F> {
        if t < s {
            return Err(Error::domain("flow_phi", "backward flow (t < s) not supported"));
        }
        if x == F::zero() {
            return Ok(F::zero());
        }
        if x < F::zero() || x >= self.x_inf {
            return Err(Error::domain(
                "flow_phi",
                format!("x = {x} outside [0, x_inf = {})", self.x_inf),
            ));
        }
        if t == s {
            return Ok(x);
        }
        let y = self.big_g(x)? + self.model.growth_rate() * (t - s);
        Ok(self.big_g_inv(y))
    }

    /// Write (x, G(x), H(x)) rows for the table nodes as CSV.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "x,G,H")?;
        for nd in &self.nodes {
            writeln!(w, "{},{},{}", nd.x, nd.g, nd.h)?;
        }
        Ok(())
    }

    fn g_of(&self, x: F) -> F {
        self.model.g_eval(x).map(|v| v.g).unwrap_or(F::nan())
    }

    fn nearest_node_index(&self, x: F) -> usize {
        let idx = self.nodes.partition_point(|nd| nd.x <= x);
        if idx == 0 {
            return 0;
        }
        if idx >= self.nodes.len() {
            return self.nodes.len() - 1;
        }
        let below = &self.nodes[idx - 1];
        let above = &self.nodes[idx];
        if x - below.x <= above.x - x {
            idx - 1
        } else {
            idx
        }
    }
}

/// H(x) straight from the definition (head substitution plus interior
/// quadrature), without any table. This is the reference route used to
/// cross-check the tabulation.
pub fn big_h_direct<F: Scalar>(model: &ModelSpec<F>, x_inf: F, x: F, tol: F) -> Result<F> {
    if x == F::zero() {
        return Ok(F::zero());
    }
    if x < F::zero() || x >= x_inf {
        return Err(Error::domain("big_h", format!("x = {x} outside [0, x_inf)")));
    }
    let head_end = (x_inf * F::c(1e-3)).min(x);
    let head = singular_head(model, head_end, tol)?;
    Ok(head + integrate_h(model, head_end, x, tol)?)
}

/// Integral of g(u)/(u(1-g(u))) over (0, x] via the substitution u = e^{-s},
/// which removes the 1/u factor exactly: the integrand becomes
/// g(e^{-s})/(1-g(e^{-s})) on [log(1/x), infinity). Integrated in fixed
/// blocks until the tail is negligible.
fn singular_head<F: Scalar>(model: &ModelSpec<F>, x: F, tol: F) -> Result<F> {
    let phi = |s: F| {
        let u = (-s).exp();
        match model.g_eval(u) {
            Ok(v) => v.g / (F::one() - v.g),
            Err(_) => F::nan(),
        }
    };
    let block = F::c(8.0);
    let mut lo = (F::one() / x).ln();
    let mut total = F::zero();
    let block_tol = tol / F::c(4.0);
    for i in 0..4096 {
        let hi = lo + block;
        let inc = adaptive_simpson(&phi, lo, hi, block_tol)?;
        total = total + inc;
        lo = hi;
        if inc.abs() < block_tol && i >= 1 {
            return Ok(total);
        }
        // once e^{-s} underflows the integrand is exactly zero
        if lo > F::c(750.0) {
            return Ok(total);
        }
    }
    Err(Error::numeric(
        "big_h",
        format!("tail of g(u)/(u(1-g(u))) near 0 converges too slowly at x = {x}"),
    ))
}

fn integrate_h<F: Scalar>(model: &ModelSpec<F>, a: F, b: F, tol: F) -> Result<F> {
    if a == b {
        return Ok(F::zero());
    }
    let f = |u: F| match model.g_eval(u) {
        Ok(v) => v.g / (u * (F::one() - v.g)),
        Err(_) => F::nan(),
    };
    adaptive_simpson(&f, a, b, tol)
}

/// Direct adaptive Runge-Kutta integration of the fluid ODE
/// x' = (lambda-mu) x (1-g(x)) from time s to t. Independent of the
/// G-table; local error 1e-9.
pub fn ode_rk<F: Scalar>(model: &ModelSpec<F>, s: F, t: F, x: F, x_inf: F) -> Result<F> {
    if t < s {
        return Err(Error::domain("ode_rk", "backward integration not supported"));
    }
    if x < F::zero() || x > x_inf * (F::one() + F::tol(1e-9)) {
        return Err(Error::domain(
            "ode_rk",
            format!("x = {x} outside [0, x_inf = {x_inf}]"),
        ));
    }
    let net = model.growth_rate();
    let rhs = |v: F| {
        let v = v.max(F::zero());
        match model.g_eval(v) {
            Ok(g) => net * v * (F::one() - g.g),
            Err(_) => F::nan(),
        }
    };
    let out = rk45(&rhs, s, t, x, F::tol(1e-9))?;
    if out.is_nan() {
        return Err(Error::numeric("ode_rk", "integration left the model domain"));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ModelAnalysis, ModelSpec, Regulation};
    use approx::{assert_abs_diff_eq, assert_relative_eq};

    fn table(reg: Regulation<f64>) -> GTable<f64> {
        let m = ModelSpec::new(2.0, 1.0, 1e4, 0.0, reg).unwrap();
        let a = ModelAnalysis::analyze(&m).unwrap();
        GTable::build(&a).unwrap()
    }

    fn logistic_table() -> GTable<f64> {
        table(Regulation::Logistic)
    }

    // Remark-1 closed form (1/p) log(x^p / (1 - x^p)) for g(x) = x^p.
    fn g_closed(x: f64, p: f64) -> f64 {
        (x.powf(p) / (1.0 - x.powf(p))).ln() / p
    }

    #[test]
    fn big_h_logistic_closed_form() {
        // H(x) = -log(1-x)
        let t = logistic_table();
        assert_eq!(t.big_h(0.0).unwrap(), 0.0);
        assert_abs_diff_eq!(t.big_h(0.5).unwrap(), 2.0f64.ln(), epsilon = 1e-10);
        assert_abs_diff_eq!(t.big_h(0.9).unwrap(), -(0.1f64).ln(), epsilon = 1e-10);
        assert!(t.big_h(1.0).is_err());
    }

    #[test]
    fn big_h_power_law_closed_form() {
        // H(x) = -(1/p) log(1 - x^p)
        let t = table(Regulation::PowerLaw { p: 2.0 });
        assert_abs_diff_eq!(t.big_h(0.5).unwrap(), -0.5 * (0.75f64).ln(), epsilon = 1e-10);
        assert_abs_diff_eq!(t.big_h(0.5).unwrap(), 0.143841036225890, epsilon = 1e-9);
    }

    #[test]
    fn big_h_direct_matches_table() {
        let m = ModelSpec::new(2.0, 1.0, 1e4, 0.0, Regulation::Ricker { a: 1.0 }).unwrap();
        let a = ModelAnalysis::analyze(&m).unwrap();
        let t = GTable::build(&a).unwrap();
        for &x in &[0.01, 0.2, 0.5, 0.9 * a.x_inf()] {
            let direct = big_h_direct(&m, a.x_inf(), x, 1e-12).unwrap();
            assert_abs_diff_eq!(t.big_h(x).unwrap(), direct, epsilon = 1e-8);
        }
    }

    #[test]
    fn big_g_logistic_values() {
        let t = logistic_table();
        assert_abs_diff_eq!(t.big_g(0.5).unwrap(), 0.0, epsilon = 1e-10);
        assert_abs_diff_eq!(t.big_g(0.75).unwrap(), 3.0f64.ln(), epsilon = 1e-10);
        assert!(t.big_g(0.0).is_err());
        assert!(t.big_g(1.0).is_err());
    }

    #[test]
    fn big_g_power_law_zero_crossing() {
        let t = table(Regulation::PowerLaw { p: 2.0 });
        let x = 0.5f64.powf(0.5);
        assert_abs_diff_eq!(t.big_g(x).unwrap(), 0.0, epsilon = 1e-9);
        assert_abs_diff_eq!(t.big_g_inv(0.0), x, epsilon = 1e-9);
    }

    #[test]
    fn closed_form_agreement_on_grid() {
        for p in [1.0, 2.0] {
            let t = if p == 1.0 {
                logistic_table()
            } else {
                table(Regulation::PowerLaw { p })
            };
            for i in 1..100 {
                let x = i as f64 / 100.0;
                assert_abs_diff_eq!(t.big_g(x).unwrap(), g_closed(x, p), epsilon = 1e-8);
            }
        }
    }

    #[test]
    fn inverse_round_trip() {
        let t = logistic_table();
        for i in 1..=99 {
            let x = i as f64 / 100.0;
            let rt = t.big_g_inv(t.big_g(x).unwrap());
            assert_abs_diff_eq!(rt, x, epsilon = 1e-9);
        }
    }

    #[test]
    fn inverse_handles_extremes() {
        let t = logistic_table();
        assert_eq!(t.big_g_inv(f64::NEG_INFINITY), 0.0);
        assert_eq!(t.big_g_inv(f64::INFINITY), t.x_inf());
        assert_relative_eq!(t.big_g_inv(f64::INFINITY), 1.0, max_relative = 1e-10);
        // far below the table: G ~ log x so inverse ~ e^y
        assert_relative_eq!(t.big_g_inv(-30.0), (-30.0f64).exp(), max_relative = 1e-6);
        // far above: clamped strictly below x_inf
        let top = t.big_g_inv(60.0);
        assert!(top < 1.0 && top > 0.999);
    }

    #[test]
    fn psi_values() {
        let t = logistic_table();
        assert_eq!(t.psi(0.0).unwrap(), 0.0);
        assert_abs_diff_eq!(t.psi(1.0).unwrap(), 0.5, epsilon = 1e-9);
        // Remark 1: w0 = w/(1+w) for the logistic model
        for w in [0.1, 0.5, 2.0, 7.0] {
            assert_abs_diff_eq!(t.psi(w).unwrap(), w / (1.0 + w), epsilon = 1e-9);
        }
        assert!(t.psi(-1.0).is_err());
    }

    #[test]
    fn flow_identity_and_absorbing_zero() {
        let t = logistic_table();
        assert_eq!(t.flow_phi(1.0, 1.0, 0.3).unwrap(), 0.3);
        assert_eq!(t.flow_phi(0.0, 5.0, 0.0).unwrap(), 0.0);
        assert!(t.flow_phi(1.0, 0.5, 0.3).is_err());
    }

    #[test]
    fn flow_logistic_closed_form() {
        // G(0.1) = log(1/9); adding log 9 lands at G = 0, i.e. x = 1/2
        let t = logistic_table();
        let out = t.flow_phi(0.0, 9.0f64.ln(), 0.1).unwrap();
        assert_abs_diff_eq!(out, 0.5, epsilon = 1e-9);
    }

    #[test]
    fn flow_semigroup() {
        let t = logistic_table();
        for x in [0.05, 0.3, 0.7] {
            let one_hop = t.flow_phi(0.0, 2.5, x).unwrap();
            let two_hop = t
                .flow_phi(1.0, 2.5, t.flow_phi(0.0, 1.0, x).unwrap())
                .unwrap();
            assert_abs_diff_eq!(one_hop, two_hop, epsilon = 1e-8);
        }
    }

    #[test]
    fn flow_monotone_in_x() {
        let t = logistic_table();
        let mut prev = 0.0;
        for i in 1..40 {
            let x = i as f64 / 40.0;
            let v = t.flow_phi(0.0, 1.7, x).unwrap();
            assert!(v > prev);
            prev = v;
        }
    }

    #[test]
    fn ode_oracle_agreement() {
        let m = ModelSpec::new(2.0, 1.0, 1e4, 0.0, Regulation::Logistic).unwrap();
        let a = ModelAnalysis::analyze(&m).unwrap();
        let t = GTable::build(&a).unwrap();
        for x in [0.02, 0.1, 0.4, 0.8] {
            for dt in [0.3, 1.0, 4.0] {
                let via_g = t.flow_phi(0.0, dt, x).unwrap();
                let via_rk = ode_rk(&m, 0.0, dt, x, a.x_inf()).unwrap();
                assert_abs_diff_eq!(via_g, via_rk, epsilon = 1e-6);
            }
        }
    }

    #[test]
    fn ode_fixed_points() {
        let m = ModelSpec::new(2.0, 1.0, 1e4, 0.0, Regulation::Logistic).unwrap();
        let a = ModelAnalysis::analyze(&m).unwrap();
        assert_abs_diff_eq!(ode_rk(&m, 0.0, 7.0, 0.0, a.x_inf()).unwrap(), 0.0);
        assert_abs_diff_eq!(
            ode_rk(&m, 0.0, 7.0, a.x_inf(), a.x_inf()).unwrap(),
            a.x_inf(),
            epsilon = 1e-8
        );
    }

    #[test]
    fn bounded_outputs() {
        let t = logistic_table();
        for y in [-700.0, -5.0, 0.0, 5.0, 700.0] {
            let v = t.big_g_inv(y);
            assert!(v >= 0.0 && v < 1.0, "G^-1({y}) = {v} out of range");
        }
        for x in [0.0, 1e-9, 1.0, 1e6] {
            let v = t.psi(x).unwrap();
            assert!(v >= 0.0 && v < 1.0);
        }
    }

    #[test]
    fn f32_table_smoke() {
        let m = ModelSpec::<f32>::new(2.0, 1.0, 1e4, 0.0, Regulation::Logistic).unwrap();
        let a = ModelAnalysis::analyze(&m).unwrap();
        let cfg = GTableConfig {
            nodes: 512,
            ..GTableConfig::default()
        };
        let t = GTable::build_with(&a, cfg).unwrap();
        assert_abs_diff_eq!(t.big_g(0.5).unwrap(), 0.0, epsilon = 1e-3);
        assert_abs_diff_eq!(t.big_g_inv(0.0), 0.5, epsilon = 1e-3);
    }
}
