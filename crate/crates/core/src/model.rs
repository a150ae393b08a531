//! Model family: per-capita birth rate `lambda - (lambda-mu) g1(z/K)` and
//! death rate `mu + (lambda-mu) g2(z/K)`, with a catalogue of built-in
//! regulation functions and numerical validation of the structural
//! assumptions (g(0) = 0 with g(x_inf) = 1, Lipschitz x*g(x), and
//! integrability of g+(x)/x at 0).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::{adaptive_simpson, bisect};
use crate::scalar::Scalar;

/// Regulation function pair (g1, g2) as functions of the dimensionless
/// density x = z/K. Every built-in variant has g1(0) = g2(0) = 0 and both
/// components monotone nondecreasing; `Tabulated` is free-form.
///
/// The catalogue follows the classical discrete-regulation models. The
/// variants with a rate-ratio prefactor (`Ricker`, `BevertonHolt`,
/// `Hassell`, `MaynardSmithSlatkin`) put the regulation on the birth side;
/// `Logistic` regulates the death side (the stochastic logistic / Verhulst
/// process); `PowerLaw` puts g(x) = x^p on the birth side, which makes it
/// directly usable for the pure-birth setup with rate lambda*z*(1 - g(z/K)).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", bound = "F: Scalar")]
pub enum Regulation<F: Scalar> {
    /// g1 = 0, g2(x) = x.
    Logistic,
    /// g1(x) = x^p, g2 = 0, p > 0.
    PowerLaw { p: F },
    /// g1(x) = rho (1 - e^{-a x}), g2 = 0, a > 0, rho = lambda/(lambda-mu).
    Ricker { a: F },
    /// g1(x) = rho x/(x+m), g2 = 0, m > 0.
    BevertonHolt { m: F },
    /// g1(x) = rho (1 - (1+x/m)^{-c}), g2 = 0, m, c > 0.
    Hassell { m: F, c: F },
    /// g1(x) = rho (1 - (1+(x/m)^c)^{-1}), g2 = 0, m, c > 0.
    MaynardSmithSlatkin { m: F, c: F },
    /// Piecewise-linear interpolation of (x, g1, g2) rows. The grid must be
    /// strictly increasing in x; queries outside the grid range are errors.
    Tabulated { grid: Vec<[F; 3]> },
}

/// Values of the regulation functions at one density.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GValues<F> {
    pub g1: F,
    pub g2: F,
    /// g = g1 + g2.
    pub g: F,
}

impl<F: Scalar> Regulation<F> {
    /// Structural validation of the variant parameters.
    pub fn validate(&self) -> Result<()> {
        let pos = |v: F, name: &str| {
            if v > F::zero() {
                Ok(())
            } else {
                Err(Error::InvalidModel(format!("{name} must be > 0, got {v}")))
            }
        };
        match self {
            Regulation::Logistic => Ok(()),
            Regulation::PowerLaw { p } => pos(*p, "p"),
            Regulation::Ricker { a } => pos(*a, "a"),
            Regulation::BevertonHolt { m } => pos(*m, "m"),
            Regulation::Hassell { m, c } | Regulation::MaynardSmithSlatkin { m, c } => {
                pos(*m, "m")?;
                pos(*c, "c")
            }
            Regulation::Tabulated { grid } => {
                if grid.len() < 2 {
                    return Err(Error::InvalidModel(
                        "tabulated grid needs at least 2 rows".into(),
                    ));
                }
                for w in grid.windows(2) {
                    if !(w[1][0] > w[0][0]) {
                        return Err(Error::InvalidModel(
                            "tabulated grid x values must be strictly increasing".into(),
                        ));
                    }
                }
                Ok(())
            }
        }
    }

    /// Evaluate (g1, g2) at density `x >= 0`; `rho = lambda/(lambda-mu)`
    /// scales the birth-side variants.
    pub fn eval(&self, x: F, rho: F) -> Result<GValues<F>> {
        if x < F::zero() || !x.is_finite() {
            return Err(Error::domain("g_eval", format!("density must be >= 0, got {x}")));
        }
        let one = F::one();
        let (g1, g2) = match self {
            Regulation::Logistic => (F::zero(), x),
            Regulation::PowerLaw { p } => (x.powf(*p), F::zero()),
            Regulation::Ricker { a } => (rho * (one - (-*a * x).exp()), F::zero()),
            Regulation::BevertonHolt { m } => (rho * x / (x + *m), F::zero()),
            Regulation::Hassell { m, c } => {
                (rho * (one - (one + x / *m).powf(-*c)), F::zero())
            }
            Regulation::MaynardSmithSlatkin { m, c } => {
                (rho * (one - one / (one + (x / *m).powf(*c))), F::zero())
            }
            Regulation::Tabulated { grid } => interp_tabulated(grid, x)?,
        };
        Ok(GValues { g1, g2, g: g1 + g2 })
    }

    /// Built-in variants all have monotone components, so the running
    /// supremum g_l+ coincides with g_l itself.
    pub fn is_monotone(&self) -> bool {
        !matches!(self, Regulation::Tabulated { .. })
    }

    /// Natural length scale of the variant, used to seed the bracket scan
    /// for the root of g(x) = 1.
    fn length_scale(&self) -> F {
        let one = F::one();
        match self {
            Regulation::Logistic | Regulation::PowerLaw { .. } => one,
            Regulation::Ricker { a } => one.max(one / *a),
            Regulation::BevertonHolt { m } => one.max(*m),
            Regulation::Hassell { m, .. } | Regulation::MaynardSmithSlatkin { m, .. } => {
                one.max(*m)
            }
            Regulation::Tabulated { grid } => grid.last().map(|r| r[0]).unwrap_or(one),
        }
    }
}

fn interp_tabulated<F: Scalar>(grid: &[[F; 3]], x: F) -> Result<(F, F)> {
    let first = grid.first().unwrap();
    let last = grid.last().unwrap();
    if x < first[0] || x > last[0] {
        return Err(Error::domain(
            "g_eval",
            format!("x = {x} outside tabulated range [{}, {}]", first[0], last[0]),
        ));
    }
    let idx = grid.partition_point(|row| row[0] <= x);
    if idx == grid.len() {
        return Ok((last[1], last[2]));
    }
    let lo = &grid[idx - 1];
    let hi = &grid[idx];
    let w = (x - lo[0]) / (hi[0] - lo[0]);
    let one = F::one();
    Ok((
        lo[1] * (one - w) + hi[1] * w,
        lo[2] * (one - w) + hi[2] * w,
    ))
}

/// The model: rates, scale, initial-size exponent, and regulation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "F: Scalar")]
pub struct ModelSpec<F: Scalar> {
    pub lambda: F,
    pub mu: F,
    #[serde(rename = "K")]
    pub big_k: F,
    pub alpha: F,
    pub regulation: Regulation<F>,
}

impl<F: Scalar> ModelSpec<F> {
    pub fn new(lambda: F, mu: F, big_k: F, alpha: F, regulation: Regulation<F>) -> Result<Self> {
        let spec = ModelSpec {
            lambda,
            mu,
            big_k,
            alpha,
            regulation,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda > self.mu && self.mu >= F::zero()) {
            return Err(Error::InvalidModel(format!(
                "need lambda > mu >= 0, got lambda = {}, mu = {}",
                self.lambda, self.mu
            )));
        }
        if !(self.big_k >= F::one()) {
            return Err(Error::InvalidModel(format!("need K >= 1, got {}", self.big_k)));
        }
        if !(self.alpha >= F::zero() && self.alpha < F::one()) {
            return Err(Error::InvalidModel(format!(
                "need alpha in [0, 1), got {}",
                self.alpha
            )));
        }
        self.regulation.validate()
    }

    /// Net growth rate lambda - mu.
    #[inline]
    pub fn growth_rate(&self) -> F {
        self.lambda - self.mu
    }

    /// Rate ratio lambda/(lambda-mu) entering the birth-side variants.
    #[inline]
    pub fn rho(&self) -> F {
        self.lambda / self.growth_rate()
    }

    /// Initial population size floor(K^alpha), always >= 1 since K >= 1.
    pub fn z0(&self) -> u64 {
        self.big_k
            .powf(self.alpha)
            .floor()
            .to_u64()
            .expect("K^alpha representable as count")
            .max(1)
    }

    /// chi_alpha(K) = K^alpha / floor(K^alpha).
    pub fn chi_alpha(&self) -> F {
        self.big_k.powf(self.alpha) / F::from_count(self.z0())
    }

    /// Evaluate the regulation pair at density x.
    #[inline]
    pub fn g_eval(&self, x: F) -> Result<GValues<F>> {
        self.regulation.eval(x, self.rho())
    }

    /// Total birth and death rates at integer state z. The per-capita birth
    /// rate is clamped at 0 when a user-supplied g1 exceeds lambda/(lambda-mu)
    /// (validation warns about that separately); death is clamped likewise.
    pub fn rates(&self, z: u64) -> Result<(F, F)> {
        if z == 0 {
            return Ok((F::zero(), F::zero()));
        }
        let zf = F::from_count(z);
        let g = self.g_eval(zf / self.big_k)?;
        let net = self.growth_rate();
        let birth = (self.lambda - net * g.g1).max(F::zero());
        let death = (self.mu + net * g.g2).max(F::zero());
        Ok((zf * birth, zf * death))
    }
}

/// Single pass/fail check with a human-readable diagnostic.
#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub pass: bool,
    pub detail: String,
}

impl Check {
    fn pass(detail: impl Into<String>) -> Self {
        Check {
            pass: true,
            detail: detail.into(),
        }
    }
    fn fail(detail: impl Into<String>) -> Self {
        Check {
            pass: false,
            detail: detail.into(),
        }
    }
}

/// Result of validating the three model assumptions.
#[derive(Debug, Clone, Serialize)]
pub struct AssumptionReport {
    /// g(0) = 0, a root x_inf of g = 1 exists, and g < 1 on (0, x_inf).
    pub shape: Check,
    /// x*g(x) uniformly Lipschitz on [0, x_inf] (grid estimate, stable
    /// under refinement).
    pub lipschitz: Check,
    /// g+(x)/x integrable at 0 (tail quadrature converges and
    /// g+(x) log(1/x) -> 0).
    pub integrability: Check,
    pub warnings: Vec<String>,
}

impl AssumptionReport {
    pub fn all_pass(&self) -> bool {
        self.shape.pass && self.lipschitz.pass && self.integrability.pass
    }
}

/// Derived quantities of a validated model: the root x_inf of g(x) = 1, the
/// Lipschitz estimate for x*g(x), and running suprema of g1, g2.
#[derive(Debug, Clone)]
pub struct ModelAnalysis<F: Scalar> {
    model: ModelSpec<F>,
    x_inf: F,
    theta: F,
    /// Running-supremum grid (x, g1+, g2+) for non-monotone regulation;
    /// empty for the monotone built-ins where g_l+ = g_l.
    gplus_grid: Vec<[F; 3]>,
    report: AssumptionReport,
}

const THETA_GRID: usize = 100_000;

impl<F: Scalar> ModelAnalysis<F> {
    /// Analyze a model: locate x_inf, estimate the Lipschitz constant, build
    /// the running-supremum grid, and run the assumption checks.
    pub fn analyze(model: &ModelSpec<F>) -> Result<Self> {
        model.validate()?;
        let mut warnings = Vec::new();
        let x_inf = find_x_inf(model)?;

        let theta_coarse = lipschitz_grid_estimate(model, x_inf, THETA_GRID / 5)?;
        let theta = lipschitz_grid_estimate(model, x_inf, THETA_GRID)?;
        // The grid estimate is a lower bound on the true constant; report
        // instability under refinement, which suggests x*g(x) may not be
        // Lipschitz at all.
        let lipschitz = if theta > theta_coarse * F::c(1.5) {
            Check::fail(format!(
                "slope estimate not stable under grid refinement: {theta_coarse} -> {theta}"
            ))
        } else {
            Check::pass(format!("theta estimate {theta} (grid lower bound)"))
        };

        let gplus_grid = if model.regulation.is_monotone() {
            Vec::new()
        } else {
            build_gplus_grid(model, x_inf)?
        };

        let mut analysis = ModelAnalysis {
            model: model.clone(),
            x_inf,
            theta,
            gplus_grid,
            report: AssumptionReport {
                shape: Check::pass(""),
                lipschitz,
                integrability: Check::pass(""),
                warnings: Vec::new(),
            },
        };

        analysis.report.shape = analysis.check_shape()?;
        analysis.report.integrability = analysis.check_integrability();

        // Warn if g1 ever exceeds lambda/(lambda-mu): birth rates get clamped.
        let rho = model.rho();
        for i in 0..=200u32 {
            let x = x_inf * F::from_u32(i).unwrap() / F::c(200.0);
            if model.g_eval(x)?.g1 > rho * (F::one() + F::tol(1e-12)) {
                warnings.push(format!(
                    "g1({x}) exceeds lambda/(lambda-mu); per-capita birth rate clamped at 0"
                ));
                break;
            }
        }
        analysis.report.warnings = warnings;
        Ok(analysis)
    }

    pub fn model(&self) -> &ModelSpec<F> {
        &self.model
    }

    /// Root of g(x) = 1.
    pub fn x_inf(&self) -> F {
        self.x_inf
    }

    /// Lipschitz-constant estimate for x*g(x) on [0, x_inf], floored at 1.
    pub fn theta(&self) -> F {
        self.theta
    }

    pub fn report(&self) -> &AssumptionReport {
        &self.report
    }

    /// Running suprema (g1+(x), g2+(x)) = sup_{0<=y<=x} |g_l(y)| for
    /// 0 <= x <= x_inf. Exact for the monotone built-ins, grid-based for
    /// tabulated regulation.
    pub fn g_plus(&self, x: F) -> Result<(F, F)> {
        if x < F::zero() || x > self.x_inf * (F::one() + F::tol(1e-9)) {
            return Err(Error::domain(
                "g_plus",
                format!("x = {x} outside [0, x_inf = {}]", self.x_inf),
            ));
        }
        let x = x.min(self.x_inf);
        if self.gplus_grid.is_empty() {
            let g = self.model.g_eval(x)?;
            return Ok((g.g1.abs(), g.g2.abs()));
        }
        // Grid rows hold the running max up to each node; the partial
        // segment past the last node below x can only raise the sup at x
        // itself (linear interpolation attains extrema at endpoints).
        let idx = self.gplus_grid.partition_point(|row| row[0] <= x);
        let g = self.model.g_eval(x)?;
        let (mut p1, mut p2) = (g.g1.abs(), g.g2.abs());
        if idx > 0 {
            let row = &self.gplus_grid[idx - 1];
            p1 = p1.max(row[1]);
            p2 = p2.max(row[2]);
        }
        Ok((p1, p2))
    }

    /// g+(x) = g1+(x) + g2+(x).
    pub fn g_plus_total(&self, x: F) -> Result<F> {
        let (p1, p2) = self.g_plus(x)?;
        Ok(p1 + p2)
    }

    fn check_shape(&self) -> Result<Check> {
        let g0 = match self.model.g_eval(F::zero()) {
            Ok(v) => v.g,
            Err(e) => return Ok(Check::fail(format!("g(0) not evaluable: {e}"))),
        };
        if g0.abs() > F::tol(1e-9) {
            return Ok(Check::fail(format!("g(0) = {g0} != 0")));
        }
        let root_val = self.model.g_eval(self.x_inf)?.g;
        if (root_val - F::one()).abs() > F::tol(1e-8) {
            return Ok(Check::fail(format!(
                "g(x_inf) = {root_val} != 1 at x_inf = {}",
                self.x_inf
            )));
        }
        // Strictly below 1 in the interior, sampled on a grid away from the
        // root tolerance band.
        let n = 2000u32;
        for i in 1..n {
            let x = self.x_inf * F::from_u32(i).unwrap() / F::from_u32(n).unwrap();
            if self.x_inf - x < self.x_inf * F::tol(1e-9) {
                continue;
            }
            let g = self.model.g_eval(x)?.g;
            if g >= F::one() {
                return Ok(Check::fail(format!("g({x}) = {g} >= 1 inside (0, x_inf)")));
            }
        }
        Ok(Check::pass(format!("g(0) = 0, g(x_inf) = 1 at x_inf = {}", self.x_inf)))
    }

    /// Assumption (iii) numerically: g+(x) log(1/x) decreasing to 0 along
    /// x = 1e-2, 1e-4, ..., 1e-12, and the dyadic tails of the integral of
    /// g+(u)/u contract geometrically.
    fn check_integrability(&self) -> Check {
        let mut seq = Vec::new();
        for k in 1..=6u32 {
            let x = F::c(10.0).powi(-2 * k as i32);
            let gp = match self.g_plus_total(x) {
                Ok(v) => v,
                Err(e) => return Check::fail(format!("g+ not evaluable near 0: {e}")),
            };
            seq.push(gp * (F::one() / x).ln());
        }
        let slack = F::one() + F::tol(1e-9);
        for w in seq.windows(2) {
            if w[1] > w[0] * slack {
                return Check::fail(format!(
                    "g+(x) log(1/x) not decreasing near 0: {seq:?}"
                ));
            }
        }
        let first = seq[0];
        let last = *seq.last().unwrap();
        if last > F::c(0.1).min(first) + F::tol(1e-12) {
            return Check::fail(format!(
                "g+(x) log(1/x) does not tend to 0: first {first}, last {last}"
            ));
        }

        // Tail integrals of g+(u)/u via u = e^{-s}.
        let tail = |a: F, b: F| -> Result<F> {
            let lo = (F::one() / b).ln();
            let hi = (F::one() / a).ln();
            adaptive_simpson(
                &|s: F| self.g_plus_total((-s).exp()).unwrap_or(F::zero()),
                lo,
                hi,
                F::tol(1e-10),
            )
        };
        let mut incs = Vec::new();
        let mut hi = F::c(1e-2);
        for _ in 0..3 {
            let lo = hi * F::c(1e-4);
            match tail(lo, hi) {
                Ok(v) => incs.push(v),
                Err(e) => return Check::fail(format!("tail quadrature failed: {e}")),
            }
            hi = lo;
        }
        for w in incs.windows(2) {
            let converged = w[1] < F::tol(1e-9);
            if !converged && w[1] > w[0] * F::c(0.5) {
                return Check::fail(format!(
                    "integral of g+(u)/u not converging at 0: tail increments {incs:?}"
                ));
            }
        }
        Check::pass(format!(
            "g+ log(1/x) -> 0 ({first} to {last}); tail increments {incs:?}"
        ))
    }
}

/// Locate the root of g(x) = 1 by doubling bracket scan plus bisection to
/// relative tolerance 1e-12.
pub fn find_x_inf<F: Scalar>(model: &ModelSpec<F>) -> Result<F> {
    let rho = model.rho();
    let reg = &model.regulation;
    let g_minus_1 = |x: F| match reg.eval(x, rho) {
        Ok(v) => v.g - F::one(),
        Err(_) => F::nan(),
    };
    let mut hi = F::c(10.0) * reg.length_scale();
    let max_hi = match reg {
        Regulation::Tabulated { grid } => grid.last().unwrap()[0],
        _ => reg.length_scale() * F::c(1e12),
    };
    hi = hi.min(max_hi);
    let mut tries = 0;
    loop {
        let v = g_minus_1(hi);
        if v.is_nan() {
            return Err(Error::AssumptionViolated {
                which: "(i)",
                detail: format!("g not evaluable at x = {hi} while searching for x_inf"),
            });
        }
        if v >= F::zero() {
            break;
        }
        if hi >= max_hi || tries > 60 {
            return Err(Error::AssumptionViolated {
                which: "(i)",
                detail: format!("no root of g(x) = 1 found below x = {hi}"),
            });
        }
        hi = (hi * F::c(2.0)).min(max_hi);
        tries += 1;
    }
    bisect(&g_minus_1, F::zero(), hi, F::tol(1e-12))
}

fn lipschitz_grid_estimate<F: Scalar>(model: &ModelSpec<F>, x_inf: F, n: usize) -> Result<F> {
    let nf = F::from_usize(n).unwrap();
    let mut max_slope = F::zero();
    let mut prev = F::zero();
    for i in 1..=n {
        let x = x_inf * F::from_usize(i).unwrap() / nf;
        let xg = x * model.g_eval(x)?.g;
        let slope = ((xg - prev) * nf / x_inf).abs();
        if slope > max_slope {
            max_slope = slope;
        }
        prev = xg;
    }
    Ok(max_slope.max(F::one()))
}

fn build_gplus_grid<F: Scalar>(model: &ModelSpec<F>, x_inf: F) -> Result<Vec<[F; 3]>> {
    // Union of the tabulated nodes and a uniform refinement; running max.
    let mut xs: Vec<F> = Vec::new();
    if let Regulation::Tabulated { grid } = &model.regulation {
        xs.extend(grid.iter().map(|r| r[0]).filter(|&x| x <= x_inf));
    }
    let n = 4096;
    for i in 0..=n {
        xs.push(x_inf * F::from_u32(i).unwrap() / F::from_u32(n).unwrap());
    }
    xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    xs.dedup();
    let mut out = Vec::with_capacity(xs.len());
    let mut m1 = F::zero();
    let mut m2 = F::zero();
    for x in xs {
        let g = model.g_eval(x)?;
        m1 = m1.max(g.g1.abs());
        m2 = m2.max(g.g2.abs());
        out.push([x, m1, m2]);
    }
    Ok(out)
}
