//! Empirical-distribution machinery: ECDFs, Kolmogorov-Smirnov distance
//! against mixed (atom + continuous) CDFs, Dvoretzky-Kiefer-Wolfowitz
//! bands, and Wilson binomial confidence intervals.
//!
//! KS is the primary metric because the limit laws here carry an atom at 0;
//! the distance is computed from both one-sided gaps at every critical
//! point, which handles atoms exactly. Acceptance thresholds come from DKW
//! bands, not asymptotic KS p-values (those are invalid with atoms).

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// A possibly-mixed cumulative distribution function on the reals.
///
/// `cdf` is the usual right-continuous CDF; `cdf_left` is its left limit
/// (identical for continuous laws, the default); `atoms` lists locations of
/// point masses so the KS sup can also be probed there.
pub trait MixedCdf<F: Scalar> {
    fn cdf(&self, x: F) -> F;

    fn cdf_left(&self, x: F) -> F {
        self.cdf(x)
    }

    fn atoms(&self) -> Vec<F> {
        Vec::new()
    }
}

/// Adapter for a plain continuous CDF given as a closure.
pub struct ContinuousCdf<G>(pub G);

impl<F: Scalar, G: Fn(F) -> F> MixedCdf<F> for ContinuousCdf<G> {
    fn cdf(&self, x: F) -> F {
        (self.0)(x)
    }
}

/// Sorted sample with ECDF queries.
#[derive(Debug, Clone)]
pub struct EmpiricalDistribution<F> {
    samples: Vec<F>,
}

impl<F: Scalar> EmpiricalDistribution<F> {
    pub fn from_samples(mut samples: Vec<F>) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::Sample("empty sample".into()));
        }
        if samples.iter().any(|v| v.is_nan()) {
            return Err(Error::Sample("sample contains NaN".into()));
        }
        samples.sort_by(|a, b| a.partial_cmp(b).unwrap());
        Ok(EmpiricalDistribution { samples })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn values(&self) -> &[F] {
        &self.samples
    }

    /// F_N(x) = fraction of samples <= x.
    pub fn cdf(&self, x: F) -> F {
        let k = self.samples.partition_point(|&v| v <= x);
        F::from_usize(k).unwrap() / F::from_usize(self.len()).unwrap()
    }

    /// F_N(x-) = fraction of samples < x.
    pub fn cdf_left(&self, x: F) -> F {
        let k = self.samples.partition_point(|&v| v < x);
        F::from_usize(k).unwrap() / F::from_usize(self.len()).unwrap()
    }

    pub fn mean(&self) -> F {
        self.samples.iter().copied().sum::<F>() / F::from_usize(self.len()).unwrap()
    }

    /// Unbiased sample variance (0 for a single observation).
    pub fn variance(&self) -> F {
        let n = self.len();
        if n < 2 {
            return F::zero();
        }
        let m = self.mean();
        let ss = self
            .samples
            .iter()
            .map(|&v| (v - m) * (v - m))
            .sum::<F>();
        ss / F::from_usize(n - 1).unwrap()
    }

    /// Standard error of the sample mean.
    pub fn std_error(&self) -> F {
        (self.variance() / F::from_usize(self.len()).unwrap()).sqrt()
    }

    /// Order-statistic quantile (nearest-rank).
    pub fn quantile(&self, q: F) -> F {
        let n = self.len();
        let pos = (q * F::from_usize(n).unwrap()).ceil().to_usize().unwrap_or(0);
        self.samples[pos.clamp(1, n) - 1]
    }

    pub fn median(&self) -> F {
        self.quantile(F::c(0.5))
    }

    pub fn interquartile_range(&self) -> F {
        self.quantile(F::c(0.75)) - self.quantile(F::c(0.25))
    }
}

/// Kolmogorov-Smirnov distance sup_x |F_N(x) - F(x)| between an ECDF and a
/// possibly-mixed CDF. Both functions are right-continuous steps (in the
/// sample) so the sup is attained at a sample point or an atom of the law,
/// approached from the left or the right; both one-sided gaps are taken at
/// every critical point.
pub fn ks_mixed<F: Scalar>(emp: &EmpiricalDistribution<F>, law: &dyn MixedCdf<F>) -> F {
    let mut points: Vec<F> = emp.values().to_vec();
    points.extend(law.atoms());
    points.sort_by(|a, b| a.partial_cmp(b).unwrap());
    points.dedup();
    let mut d = F::zero();
    for &x in &points {
        let right = (emp.cdf(x) - law.cdf(x)).abs();
        let left = (emp.cdf_left(x) - law.cdf_left(x)).abs();
        d = d.max(right).max(left);
    }
    d
}

/// Wasserstein-1 distance between the ECDF and a law, as the integral of
/// |F_N - F| over the sample range. Secondary diagnostic only; the law is
/// integrated by midpoint refinement between consecutive sample values.
pub fn wasserstein_1<F: Scalar>(emp: &EmpiricalDistribution<F>, law: &dyn MixedCdf<F>) -> F {
    let xs = emp.values();
    let mut total = F::zero();
    let sub = 8;
    for w in xs.windows(2) {
        let (a, b) = (w[0], w[1]);
        if b <= a {
            continue;
        }
        let fnv = emp.cdf(a);
        let h = (b - a) / F::from_usize(sub).unwrap();
        for i in 0..sub {
            let mid = a + h * (F::from_usize(i).unwrap() + F::c(0.5));
            total = total + (fnv - law.cdf(mid)).abs() * h;
        }
    }
    total
}

/// Dvoretzky-Kiefer-Wolfowitz band half-width sqrt(ln(2/delta) / (2N)):
/// with probability at least 1 - delta the ECDF of N i.i.d. draws stays
/// within this distance of the true CDF, uniformly.
pub fn dkw_epsilon<F: Scalar>(n: usize, delta: F) -> Result<F> {
    if n == 0 {
        return Err(Error::Sample("DKW band needs N >= 1".into()));
    }
    if !(delta > F::zero() && delta < F::one()) {
        return Err(Error::Sample(format!("delta must be in (0,1), got {delta}")));
    }
    Ok(((F::c(2.0) / delta).ln() / (F::c(2.0) * F::from_usize(n).unwrap())).sqrt())
}

/// Wilson score interval for a binomial proportion at confidence 1 - delta.
pub fn binom_ci<F: Scalar>(k: u64, n: u64, delta: F) -> Result<(F, F)> {
    if n == 0 {
        return Err(Error::Sample("binomial CI needs n >= 1".into()));
    }
    if k > n {
        return Err(Error::Sample(format!("k = {k} exceeds n = {n}")));
    }
    let z = normal_quantile(F::one() - delta / F::c(2.0));
    let nf = F::from_count(n);
    let p = F::from_count(k) / nf;
    let z2 = z * z;
    let denom = F::one() + z2 / nf;
    let center = (p + z2 / (F::c(2.0) * nf)) / denom;
    let half = z * (p * (F::one() - p) / nf + z2 / (F::c(4.0) * nf * nf)).sqrt() / denom;
    Ok(((center - half).max(F::zero()), (center + half).min(F::one())))
}

/// Standard normal quantile via the Acklam rational approximation
/// (relative error below 1.2e-9 over (0,1)), ample for confidence bands.
pub fn normal_quantile<F: Scalar>(p: F) -> F {
    let pf = p.to_f64().expect("probability convertible");
    assert!(pf > 0.0 && pf < 1.0, "quantile needs p in (0,1), got {pf}");
    const A: [f64; 6] = [
        -3.969683028665376e+01,
        2.209460984245205e+02,
        -2.759285104469687e+02,
        1.383577518672690e+02,
        -3.066479806614716e+01,
        2.506628277459239e+00,
    ];
    const B: [f64; 5] = [
        -5.447609879822406e+01,
        1.615858368580409e+02,
        -1.556989798598866e+02,
        6.680131188771972e+01,
        -1.328068155288572e+01,
    ];
    const C: [f64; 6] = [
        -7.784894002430293e-03,
        -3.223964580411365e-01,
        -2.400758277161838e+00,
        -2.549732539343734e+00,
        4.374664141464968e+00,
        2.938163982698783e+00,
    ];
    const D: [f64; 4] = [
        7.784695709041462e-03,
        3.224671290700398e-01,
        2.445134137142996e+00,
        3.754408661907416e+00,
    ];
    const P_LOW: f64 = 0.02425;
    let x = if pf < P_LOW {
        let q = (-2.0 * pf.ln()).sqrt();
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    } else if pf <= 1.0 - P_LOW {
        let q = pf - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    } else {
        let q = (-2.0 * (1.0 - pf).ln()).sqrt();
        -(((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    };
    F::c(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    struct PointMass(f64);

    impl MixedCdf<f64> for PointMass {
        fn cdf(&self, x: f64) -> f64 {
            if x >= self.0 {
                1.0
            } else {
                0.0
            }
        }
        fn cdf_left(&self, x: f64) -> f64 {
            if x > self.0 {
                1.0
            } else {
                0.0
            }
        }
        fn atoms(&self) -> Vec<f64> {
            vec![self.0]
        }
    }

    #[test]
    fn ks_point_mass_exact_match() {
        let emp = EmpiricalDistribution::from_samples(vec![0.0, 0.0, 0.0, 0.0]).unwrap();
        assert_eq!(ks_mixed(&emp, &PointMass(0.0)), 0.0);
    }

    #[test]
    fn ks_point_mass_half_misplaced() {
        let emp = EmpiricalDistribution::from_samples(vec![0.0, 1.0]).unwrap();
        assert_eq!(ks_mixed(&emp, &PointMass(0.0)), 0.5);
    }

    #[test]
    fn ks_detects_unsampled_atom() {
        // law has an atom at 0.5 the sample misses entirely
        let emp = EmpiricalDistribution::from_samples(vec![0.0, 1.0]).unwrap();
        let d = ks_mixed(&emp, &PointMass(0.5));
        assert_eq!(d, 0.5);
    }

    #[test]
    fn ks_uniform_exact() {
        // two-point sample {0.25, 0.75} against U(0,1): sup gap is 0.25
        let emp = EmpiricalDistribution::from_samples(vec![0.25, 0.75]).unwrap();
        let d = ks_mixed(&emp, &ContinuousCdf(|x: f64| x.clamp(0.0, 1.0)));
        assert_abs_diff_eq!(d, 0.25, epsilon = 1e-15);
    }

    #[test]
    fn ks_idempotent_under_duplication() {
        let base = vec![0.1, 0.4, 0.9];
        let mut doubled = base.clone();
        doubled.extend(base.clone());
        let law = ContinuousCdf(|x: f64| x.clamp(0.0, 1.0));
        let a = ks_mixed(&EmpiricalDistribution::from_samples(base).unwrap(), &law);
        let b = ks_mixed(&EmpiricalDistribution::from_samples(doubled).unwrap(), &law);
        assert_abs_diff_eq!(a, b, epsilon = 1e-15);
    }

    #[test]
    fn dkw_values() {
        let e = dkw_epsilon::<f64>(10_000, 0.05).unwrap();
        assert_abs_diff_eq!(e, ((40.0f64).ln() / 20_000.0).sqrt(), epsilon = 1e-15);
        assert_abs_diff_eq!(e, 0.013581, epsilon = 1e-6);
        assert!(dkw_epsilon::<f64>(100_000_000, 0.05).unwrap() < 1e-3);
        assert!(dkw_epsilon::<f64>(0, 0.05).is_err());
    }

    #[test]
    fn dkw_monotonicity() {
        let a = dkw_epsilon::<f64>(100, 0.05).unwrap();
        let b = dkw_epsilon::<f64>(10_000, 0.05).unwrap();
        assert!(b < a);
        let c = dkw_epsilon::<f64>(100, 0.01).unwrap();
        assert!(c > a);
    }

    #[test]
    fn wilson_interval() {
        let (lo, hi) = binom_ci::<f64>(5000, 10_000, 0.01).unwrap();
        assert!(lo < 0.5 && 0.5 < hi);
        assert_abs_diff_eq!((hi - lo) / 2.0, 0.0129, epsilon = 2e-4);
        let (lo, hi) = binom_ci::<f64>(10, 10, 0.05).unwrap();
        assert_eq!(hi, 1.0);
        assert!(lo < 1.0);
        let (lo, _) = binom_ci::<f64>(0, 10, 0.05).unwrap();
        assert_eq!(lo, 0.0);
        assert!(binom_ci::<f64>(1, 0, 0.05).is_err());
    }

    #[test]
    fn normal_quantile_reference_values() {
        assert_abs_diff_eq!(normal_quantile::<f64>(0.975), 1.959963985, epsilon = 1e-7);
        assert_abs_diff_eq!(normal_quantile::<f64>(0.995), 2.575829304, epsilon = 1e-7);
        assert_abs_diff_eq!(normal_quantile::<f64>(0.5), 0.0, epsilon = 1e-9);
        assert_abs_diff_eq!(
            normal_quantile::<f64>(0.01),
            -normal_quantile::<f64>(0.99),
            epsilon = 1e-9
        );
    }

    #[test]
    fn quantiles_and_moments() {
        let emp =
            EmpiricalDistribution::from_samples(vec![4.0, 1.0, 3.0, 2.0]).unwrap();
        assert_eq!(emp.median(), 2.0);
        assert_eq!(emp.quantile(1.0), 4.0);
        assert_abs_diff_eq!(emp.mean(), 2.5, epsilon = 1e-15);
        assert_abs_diff_eq!(emp.variance(), 5.0 / 3.0, epsilon = 1e-15);
    }

    #[test]
    fn wasserstein_zero_for_matching_step() {
        let emp = EmpiricalDistribution::from_samples(vec![1.0, 1.0, 1.0]).unwrap();
        assert_eq!(wasserstein_1(&emp, &PointMass(1.0)), 0.0);
    }
}
