//! Closed-form limit laws and linear birth-death transients.
//!
//! `WLaw` is the martingale limit of e^{-(lambda-mu)t} Y_t for the linear
//! BD process started from one individual: an atom of mass mu/lambda at 0
//! plus an Exp(1 - mu/lambda) tail, so E W = 1. `W0Law` is its pushforward
//! under G^{-1}(log .), the random initial condition of the fluid ODE.
//! `LinearBdLaw` packages the transient distribution of a supercritical
//! linear BD process from a single ancestor, used as the analytic oracle
//! for the coupling marginals.

use rand::Rng;
use rand_distr::{Distribution, Exp1, OpenClosed01};

use crate::error::{Error, Result};
use crate::flow::GTable;
use crate::scalar::Scalar;
use crate::stats::MixedCdf;

/// Law of the martingale limit W: P[W = 0] = mu/lambda and
/// P[W > w] = (1 - mu/lambda) e^{-(1 - mu/lambda) w}.
#[derive(Debug, Clone, Copy)]
pub struct WLaw<F> {
    lambda: F,
    mu: F,
}

impl<F: Scalar> WLaw<F> {
    pub fn new(lambda: F, mu: F) -> Result<Self> {
        if !(lambda > mu && mu >= F::zero()) {
            return Err(Error::InvalidModel(format!(
                "WLaw needs lambda > mu >= 0, got lambda = {lambda}, mu = {mu}"
            )));
        }
        Ok(WLaw { lambda, mu })
    }

    /// Mass of the atom at 0, mu/lambda.
    pub fn atom(&self) -> F {
        self.mu / self.lambda
    }

    /// Rate of the exponential tail, 1 - mu/lambda.
    pub fn tail_rate(&self) -> F {
        F::one() - self.atom()
    }

    pub fn cdf(&self, w: F) -> F {
        if w < F::zero() {
            F::zero()
        } else {
            F::one() - self.tail_rate() * (-self.tail_rate() * w).exp()
        }
    }

    /// Draw a realization: 0 with probability mu/lambda, otherwise
    /// exponential with rate 1 - mu/lambda.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> F {
        let u: f64 = OpenClosed01.sample(rng);
        if F::c(u) <= self.atom() {
            return F::zero();
        }
        let e: f64 = Exp1.sample(rng);
        F::c(e) / self.tail_rate()
    }
}

impl<F: Scalar> MixedCdf<F> for WLaw<F> {
    fn cdf(&self, x: F) -> F {
        WLaw::cdf(self, x)
    }

    fn cdf_left(&self, x: F) -> F {
        if x <= F::zero() {
            F::zero()
        } else {
            WLaw::cdf(self, x)
        }
    }

    fn atoms(&self) -> Vec<F> {
        if self.mu > F::zero() {
            vec![F::zero()]
        } else {
            Vec::new()
        }
    }
}

/// Pushforward of W (alpha = 0), or the deterministic G^{-1}(0)
/// (alpha in (0,1)), through the G-table: the law of the random initial
/// condition w0 on [0, x_inf).
pub struct W0Law<'a, F: Scalar> {
    w: WLaw<F>,
    table: &'a GTable<F>,
    degenerate: bool,
}

impl<'a, F: Scalar> W0Law<'a, F> {
    pub fn new(w: WLaw<F>, table: &'a GTable<F>, alpha: F) -> Result<Self> {
        if !(alpha >= F::zero() && alpha < F::one()) {
            return Err(Error::InvalidModel(format!("alpha must be in [0,1), got {alpha}")));
        }
        Ok(W0Law {
            w,
            table,
            degenerate: alpha > F::zero(),
        })
    }

    /// Location of the point mass in the degenerate (alpha > 0) case.
    pub fn degenerate_point(&self) -> F {
        self.table.big_g_inv(F::zero())
    }

    /// P[w0 <= u] for 0 <= u < x_inf. For alpha = 0 this is
    /// P[W <= e^{G(u)}] through the monotone map w0 <= u <=> W <= e^{G(u)};
    /// for alpha in (0,1) a unit step at G^{-1}(0).
    pub fn cdf(&self, u: F) -> Result<F> {
        if !(u >= F::zero() && u < self.table.x_inf()) {
            return Err(Error::domain(
                "w0_cdf",
                format!("u = {u} outside [0, x_inf = {})", self.table.x_inf()),
            ));
        }
        Ok(self.cdf_unchecked(u))
    }

    fn cdf_unchecked(&self, u: F) -> F {
        if self.degenerate {
            return if u >= self.degenerate_point() {
                F::one()
            } else {
                F::zero()
            };
        }
        if u <= F::zero() {
            return self.w.atom();
        }
        match self.table.big_g(u) {
            Ok(g) => self.w.cdf(g.exp()),
            Err(_) => F::one(),
        }
    }
}

impl<F: Scalar> MixedCdf<F> for W0Law<'_, F> {
    /// CDF extended to the whole real line: 0 left of the support, 1 from
    /// x_inf on.
    fn cdf(&self, u: F) -> F {
        if u < F::zero() {
            F::zero()
        } else if u >= self.table.x_inf() {
            F::one()
        } else {
            self.cdf_unchecked(u)
        }
    }

    fn cdf_left(&self, u: F) -> F {
        if self.degenerate {
            return if u > self.degenerate_point() {
                F::one()
            } else {
                F::zero()
            };
        }
        if u <= F::zero() {
            F::zero()
        } else {
            MixedCdf::cdf(self, u)
        }
    }

    fn atoms(&self) -> Vec<F> {
        if self.degenerate {
            vec![self.degenerate_point()]
        } else {
            vec![F::zero()]
        }
    }
}

/// Transient law of the supercritical linear BD process with per-capita
/// birth rate gamma > death rate beta >= 0, started from a single ancestor,
/// observed at time t. With eta_t = (beta/gamma) e^{-(gamma-beta)t}:
/// P[Z_t > r] = ((1-beta/gamma)/(1-eta_t)) (1 - (gamma/beta - 1) eta_t/(1-eta_t))^r.
#[derive(Debug, Clone, Copy)]
pub struct LinearBdLaw<F> {
    gamma: F,
    beta: F,
    t: F,
}

impl<F: Scalar> LinearBdLaw<F> {
    pub fn new(gamma: F, beta: F, t: F) -> Result<Self> {
        if !(gamma > beta && beta >= F::zero()) {
            return Err(Error::InvalidModel(format!(
                "linear BD transients require gamma > beta >= 0, got {gamma}, {beta}"
            )));
        }
        if !(t > F::zero()) {
            return Err(Error::domain("linear_bd", format!("t must be > 0, got {t}")));
        }
        Ok(LinearBdLaw { gamma, beta, t })
    }

    /// Survival-side geometric ratio q; computed from
    /// e^{-(gamma-beta)t} so large t cannot overflow.
    fn q(&self) -> F {
        let eps = (-(self.gamma - self.beta) * self.t).exp();
        self.gamma * (F::one() - eps) / (self.gamma - self.beta * eps)
    }

    /// P[Z_t = 0]; tends to beta/gamma as t grows.
    pub fn p_zero(&self) -> F {
        let eps = (-(self.gamma - self.beta) * self.t).exp();
        self.beta * (F::one() - eps) / (self.gamma - self.beta * eps)
    }

    /// P[Z_t > r], valid for all r >= 0 (at r = 0 it equals 1 - P[Z_t = 0]).
    pub fn tail(&self, r: u64) -> F {
        let q = self.q();
        let log_q = (-(F::one() - q)).ln_1p();
        (F::one() - self.p_zero()) * (F::from_count(r) * log_q).exp()
    }

    /// E Z_t = e^{(gamma-beta)t}.
    pub fn mean(&self) -> F {
        ((self.gamma - self.beta) * self.t).exp()
    }

    /// The variance bound ((gamma+beta)/(gamma-beta)) e^{2(gamma-beta)t};
    /// an upper bound, not the exact variance.
    pub fn var_bound(&self) -> F {
        (self.gamma + self.beta) / (self.gamma - self.beta)
            * (F::c(2.0) * (self.gamma - self.beta) * self.t).exp()
    }
}

/// Lattice CDF on the integers: P[Z_t <= floor(x)].
impl<F: Scalar> MixedCdf<F> for LinearBdLaw<F> {
    fn cdf(&self, x: F) -> F {
        if x < F::zero() {
            return F::zero();
        }
        F::one() - self.tail(x.floor().to_u64().unwrap_or(u64::MAX))
    }

    fn cdf_left(&self, x: F) -> F {
        if x <= F::zero() {
            return F::zero();
        }
        let r = x.ceil().to_u64().unwrap_or(u64::MAX);
        F::one() - self.tail(r.saturating_sub(1))
    }
}

/// Chebyshev bound from the transient moments: for the same linear BD
/// process started from M ancestors,
/// P[|M^{-1} e^{-(gamma-beta)t} Z_t - 1| >= eps] <= (gamma+beta)/(M eps^2 (gamma-beta)),
/// clamped to 1.
pub fn chebyshev_dev_bound<F: Scalar>(gamma: F, beta: F, m: u64, eps: F) -> Result<F> {
    if !(gamma > beta && beta >= F::zero()) {
        return Err(Error::InvalidModel(format!(
            "chebyshev bound requires gamma > beta >= 0, got {gamma}, {beta}"
        )));
    }
    if m == 0 || !(eps > F::zero()) {
        return Err(Error::domain("chebyshev_dev_bound", "need M >= 1 and eps > 0"));
    }
    let b = (gamma + beta) / (F::from_count(m) * eps * eps * (gamma - beta));
    Ok(b.min(F::one()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ModelAnalysis, ModelSpec, Regulation};
    use crate::stats::{dkw_epsilon, ks_mixed, EmpiricalDistribution};
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    #[test]
    fn w_cdf_values() {
        let law = WLaw::new(2.0, 1.0).unwrap();
        assert_eq!(law.cdf(-1.0), 0.0);
        assert_abs_diff_eq!(law.cdf(0.0), 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(law.cdf(1.0), 1.0 - 0.5 * (-0.5f64).exp(), epsilon = 1e-15);
        assert_abs_diff_eq!(law.cdf(1.0), 0.696734670143683, epsilon = 1e-12);
        assert_abs_diff_eq!(law.cdf(1e6), 1.0, epsilon = 1e-15);
    }

    #[test]
    fn w_mixture_normalizes_and_has_unit_mean() {
        // mean = atom*0 + (1-atom) * 1/rate = (1-mu/lambda)/(1-mu/lambda) = 1
        let law = WLaw::new(3.0, 1.2).unwrap();
        let tail_mass = 1.0 - law.atom();
        assert_abs_diff_eq!(law.atom() + tail_mass, 1.0, epsilon = 1e-12);
        let mean = tail_mass / law.tail_rate();
        assert_abs_diff_eq!(mean, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn w_sample_statistics() {
        let law = WLaw::new(2.0, 1.0).unwrap();
        let mut rng = ChaCha12Rng::seed_from_u64(7);
        let n = 1_000_000;
        let draws: Vec<f64> = (0..n).map(|_| law.sample(&mut rng)).collect();
        let zeros = draws.iter().filter(|&&w| w == 0.0).count();
        let mean = draws.iter().sum::<f64>() / n as f64;
        assert_abs_diff_eq!(mean, 1.0, epsilon = 0.004);
        // binomial 3 sigma around 0.5
        let sd = (0.25f64 / n as f64).sqrt();
        assert!((zeros as f64 / n as f64 - 0.5).abs() < 3.0 * sd);
    }

    #[test]
    fn w_pure_birth_is_unit_exponential() {
        let law = WLaw::new(1.0, 0.0).unwrap();
        assert_eq!(law.atom(), 0.0);
        let mut rng = ChaCha12Rng::seed_from_u64(11);
        let draws: Vec<f64> = (0..20_000).map(|_| law.sample(&mut rng)).collect();
        assert!(draws.iter().all(|&w| w > 0.0));
        let emp = EmpiricalDistribution::from_samples(draws).unwrap();
        let d = ks_mixed(&emp, &law);
        assert!(d <= dkw_epsilon(20_000, 0.001).unwrap(), "KS = {d}");
    }

    #[test]
    fn w_sampler_matches_cdf_in_ks() {
        let law = WLaw::new(2.0, 1.0).unwrap();
        let mut rng = ChaCha12Rng::seed_from_u64(3);
        let draws: Vec<f64> = (0..10_000).map(|_| law.sample(&mut rng)).collect();
        let emp = EmpiricalDistribution::from_samples(draws).unwrap();
        let d = ks_mixed(&emp, &law);
        assert!(d <= dkw_epsilon(10_000, 0.01).unwrap(), "KS = {d}");
    }

    fn logistic_table() -> (ModelSpec<f64>, GTable<f64>) {
        let m = ModelSpec::new(2.0, 1.0, 1e4, 0.0, Regulation::Logistic).unwrap();
        let a = ModelAnalysis::analyze(&m).unwrap();
        let t = GTable::build(&a).unwrap();
        (m, t)
    }

    #[test]
    fn w0_cdf_logistic_values() {
        let (m, t) = logistic_table();
        let w = WLaw::new(m.lambda, m.mu).unwrap();
        let law = W0Law::new(w, &t, 0.0).unwrap();
        assert_abs_diff_eq!(law.cdf(0.0).unwrap(), 0.5, epsilon = 1e-12);
        // w0 <= 1/2 iff W <= 1 for w0 = W/(1+W)
        assert_abs_diff_eq!(
            law.cdf(0.5).unwrap(),
            1.0 - 0.5 * (-0.5f64).exp(),
            epsilon = 1e-9
        );
        assert!(law.cdf(1.0).is_err());
        assert!(law.cdf(-0.1).is_err());
    }

    #[test]
    fn w0_cdf_composition_identity() {
        let (m, t) = logistic_table();
        let w = WLaw::new(m.lambda, m.mu).unwrap();
        let law = W0Law::new(w, &t, 0.0).unwrap();
        for i in 1..20 {
            let u = i as f64 / 20.0;
            let direct = law.cdf(u).unwrap();
            let composed = w.cdf(t.big_g(u).unwrap().exp());
            assert_abs_diff_eq!(direct, composed, epsilon = 1e-12);
        }
    }

    #[test]
    fn w0_degenerate_step() {
        let (m, t) = logistic_table();
        let w = WLaw::new(m.lambda, m.mu).unwrap();
        let law = W0Law::new(w, &t, 0.5).unwrap();
        let p = law.degenerate_point();
        assert_abs_diff_eq!(p, 0.5, epsilon = 1e-9);
        assert_eq!(law.cdf(p - 1e-6).unwrap(), 0.0);
        assert_eq!(law.cdf(p + 1e-6).unwrap(), 1.0);
    }

    #[test]
    fn linear_bd_p_zero() {
        // gamma=2, beta=1, t=log 2: eta = 0.25, p0 = 0.5 - (0.25/0.75)*0.5 = 1/3
        let law = LinearBdLaw::new(2.0, 1.0, 2.0f64.ln()).unwrap();
        assert_abs_diff_eq!(law.p_zero(), 1.0 / 3.0, epsilon = 1e-12);
        // t -> infinity: p0 -> beta/gamma
        let law = LinearBdLaw::new(2.0, 1.0, 500.0).unwrap();
        assert_abs_diff_eq!(law.p_zero(), 0.5, epsilon = 1e-12);
    }

    #[test]
    fn linear_bd_tail_consistency() {
        let law = LinearBdLaw::new(2.0, 1.0, 2.0f64.ln()).unwrap();
        assert_abs_diff_eq!(law.tail(0), 1.0 - law.p_zero(), epsilon = 1e-12);
        // total mass: p0 + sum over r of P[Z = r+1] telescopes to 1
        let mut mass = law.p_zero();
        let mut r = 0;
        while law.tail(r) > 1e-13 {
            mass += law.tail(r) - law.tail(r + 1);
            r += 1;
        }
        assert_abs_diff_eq!(mass, 1.0, epsilon = 1e-10);
    }

    #[test]
    fn linear_bd_pure_birth_geometric() {
        // Yule process: P[Z_t > r] = (1 - e^{-gamma t})^r
        let law = LinearBdLaw::new(1.5, 0.0, 0.7).unwrap();
        assert_eq!(law.p_zero(), 0.0);
        let q: f64 = 1.0 - (-1.5f64 * 0.7).exp();
        for r in [0u64, 1, 5, 20] {
            assert_abs_diff_eq!(law.tail(r), q.powi(r as i32), epsilon = 1e-12);
        }
    }

    #[test]
    fn linear_bd_moments() {
        let law = LinearBdLaw::new(2.0, 1.0, 1.0).unwrap();
        assert_abs_diff_eq!(law.mean(), 1.0f64.exp(), epsilon = 1e-12);
        assert_abs_diff_eq!(law.var_bound(), 3.0 * 2.0f64.exp(), epsilon = 1e-12);
        assert_abs_diff_eq!(law.var_bound(), 22.167, epsilon = 1e-2);
        let near_zero = LinearBdLaw::new(2.0, 1.0, 1e-12).unwrap();
        assert_abs_diff_eq!(near_zero.mean(), 1.0, epsilon = 1e-9);
    }

    #[test]
    fn linear_bd_no_overflow_at_large_t() {
        let law = LinearBdLaw::<f64>::new(2.0, 1.0, 2000.0).unwrap();
        assert!(law.p_zero().is_finite());
        assert!(law.tail(10).is_finite());
        assert!(law.tail(u64::MAX / 2) >= 0.0);
    }

    #[test]
    fn chebyshev_bound_values() {
        let b = chebyshev_dev_bound(2.0, 1.0, 100, 0.5).unwrap();
        assert_abs_diff_eq!(b, 0.12, epsilon = 1e-12);
        let b = chebyshev_dev_bound(2.0, 1.0, 100_000_000_000, 0.5).unwrap();
        assert!(b < 1e-8);
        let b = chebyshev_dev_bound(2.0, 1.0, 1, 0.01).unwrap();
        assert_eq!(b, 1.0);
        assert!(chebyshev_dev_bound(1.0, 2.0, 10, 0.5).is_err());
    }

    #[test]
    fn rejects_subcritical() {
        assert!(LinearBdLaw::new(1.0, 2.0, 1.0).is_err());
        assert!(WLaw::new(1.0, 1.0).is_err());
    }
}
