//! Quadruple coupling of the nonlinear process Z with three linear BD
//! processes on shared Poisson drivers: U from above with rates
//! (lambda + lambda_K, mu - mu_K), Y with the plain rates (lambda, mu), and
//! V from below with (lambda - lambda_K, mu + mu_K), where
//! lambda_K = (lambda-mu) g1+(K^{alpha+c+eta-1}) and likewise mu_K for g2+.
//!
//! Four sequences of unit Poisson streams drive the four processes; the
//! shared uniform marks on streams 3 and 4 thin the extra rate
//! 2 lambda_K (resp. 2 mu_K) down to each process's intensity. Y keeps a
//! mark iff it is <= 1/2, Z iff it is <= p3 (births) or <= p4 (deaths), so
//! the acceptance sets nest and the sandwich V <= Y <= U (always) and
//! V <= Z <= U (up to the hitting time tau of level K^{alpha+c+eta}) holds
//! pathwise, event by event.
//!
//! Instead of materializing one Poisson process per index n, each event
//! draws the active index uniformly on {1, ..., U_{t-}}: conditional on a
//! jump of the superposition restricted to the first U_{t-} unit streams,
//! the stream that fired is uniform among them. U dominates every other
//! process, so indices above U_{t-} never change anything.

use rand::Rng;
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, Exp1};

use crate::error::{Error, Result};
use crate::model::{ModelAnalysis, ModelSpec};
use crate::scalar::Scalar;
use crate::sim::{simulate_bd, SimOptions, Terminal};
use crate::stats::binom_ci;

/// Derived coupling constants for one (model, K).
#[derive(Debug, Clone)]
pub struct CouplingParams<F> {
    pub c: F,
    pub eta: F,
    pub lambda_k: F,
    pub mu_k: F,
    /// t0 = log(K^c) / (lambda - mu): end of the linear phase.
    pub t0: F,
    /// t1 = log(K^{1-alpha}) / (lambda - mu): observation time of the limit.
    pub t1: F,
    /// Integer hitting level ceil(K^{alpha+c+eta}) defining tau.
    pub tau_level: u64,
    /// chi_alpha(K) = K^alpha / floor(K^alpha).
    pub chi_alpha: F,
    /// e^{-(lambda-mu) t0} / floor(K^alpha): W_K = wk_factor * Y_{t0}.
    pub wk_factor: F,
    pub net_rate: F,
    pub z0: u64,
    /// Finite-K feasibility notes (large perturbations, override issues).
    pub warnings: Vec<String>,
}

/// Explicit (c, eta) choices; the default rule is used for absent fields.
#[derive(Debug, Clone, Copy, Default)]
pub struct ParamOverrides<F> {
    pub c: Option<F>,
    pub eta: Option<F>,
}

/// Derive (c, eta, lambda_K, mu_K, t0, t1, tau level) for the coupling.
///
/// The default rule pins c through (1-(alpha+c))(1 + 1.25 theta) = 1/4,
/// which satisfies the constraint 0 < (1-(alpha+c))(1+theta) < 1/2 with a
/// 25% safety margin on the grid estimate of theta, and takes eta half of
/// the remaining room. Overrides are accepted as long as the sandwich
/// construction itself is sound (rates stay valid and the exponents are in
/// range); a violated asymptotic-rate constraint is reported as a warning,
/// since properties (a)-(g) hold for any admissible pair.
pub fn derive_params<F: Scalar>(
    analysis: &ModelAnalysis<F>,
    overrides: ParamOverrides<F>,
) -> Result<CouplingParams<F>> {
    let model = analysis.model();
    let alpha = model.alpha;
    let theta = analysis.theta();
    let one = F::one();
    let room = one - alpha;

    let c = match overrides.c {
        Some(c) => c,
        None => {
            let gap = one / (F::c(4.0) * (one + F::c(1.25) * theta));
            (one - alpha - gap).max(room * F::c(0.05)).min(room * F::c(0.999))
        }
    };
    if !(c > F::zero() && c < room) {
        return Err(Error::Infeasible(format!(
            "c = {c} outside (0, 1 - alpha = {room})"
        )));
    }
    let eta = match overrides.eta {
        Some(e) => e,
        None => (room - c) / F::c(2.0),
    };
    if !(eta > F::zero() && eta < room - c) {
        return Err(Error::Infeasible(format!(
            "eta = {eta} outside (0, 1 - alpha - c = {})",
            room - c
        )));
    }

    let mut warnings = Vec::new();
    let cdef = (one - (alpha + c)) * (one + theta);
    if !(cdef > F::zero() && cdef < F::c(0.5)) {
        warnings.push(format!(
            "(1-(alpha+c))(1+theta) = {cdef} outside (0, 1/2): the Gronwall \
             rate argument does not apply at this c, though the sandwich \
             construction itself is unaffected"
        ));
    }

    let big_k = model.big_k;
    let net = model.growth_rate();
    let gplus_arg = big_k.powf(alpha + c + eta - one);
    let x_inf = analysis.x_inf();
    let (g1p, g2p) = analysis.g_plus(gplus_arg.min(x_inf))?;
    if gplus_arg > x_inf {
        warnings.push(format!(
            "K^{{alpha+c+eta-1}} = {gplus_arg} exceeds x_inf = {x_inf}; \
             perturbation rates evaluated at x_inf (K far too small)"
        ));
    }
    let lambda_k = net * g1p;
    let mu_k = net * g2p;
    if !(model.lambda - lambda_k > F::zero()) {
        return Err(Error::Infeasible(format!(
            "lambda - lambda_K = {} <= 0: K too small for this coupling",
            model.lambda - lambda_k
        )));
    }
    if !(model.mu - mu_k >= F::zero()) {
        return Err(Error::Infeasible(format!(
            "mu - mu_K = {} < 0: K too small for this coupling",
            model.mu - mu_k
        )));
    }
    if lambda_k + mu_k > F::c(0.1) * net {
        warnings.push(format!(
            "perturbation lambda_K + mu_K = {} exceeds 10% of lambda - mu; \
             the asymptotic regime needs larger K",
            lambda_k + mu_k
        ));
    }

    let t0 = big_k.powf(c).ln() / net;
    let t1 = big_k.powf(one - alpha).ln() / net;
    let level = big_k.powf(alpha + c + eta).ceil();
    let tau_level = level.to_u64().unwrap_or(u64::MAX);
    let z0 = model.z0();
    Ok(CouplingParams {
        c,
        eta,
        lambda_k,
        mu_k,
        t0,
        t1,
        tau_level,
        chi_alpha: model.chi_alpha(),
        wk_factor: (-net * t0).exp() / F::from_count(z0),
        net_rate: net,
        z0,
        warnings,
    })
}

/// Mark-acceptance thresholds for Z at state z: stream-3 births keep marks
/// <= p3 = (lambda_K - (lambda-mu) g1(z/K)) / (2 lambda_K), stream-4 deaths
/// keep marks <= p4 = (mu_K + (lambda-mu) g2(z/K)) / (2 mu_K). When a
/// stream's rate vanishes the stream is disabled and the convention
/// (p3, p4) = (0, 1/2) applies.
pub fn thinning_probs<F: Scalar>(
    model: &ModelSpec<F>,
    params: &CouplingParams<F>,
    z: u64,
) -> Result<(F, F)> {
    if z > params.tau_level {
        return Err(Error::domain(
            "thinning_probs",
            format!("z = {z} beyond the coupling level {}", params.tau_level),
        ));
    }
    let g = model.g_eval(F::from_count(z) / model.big_k)?;
    let net = model.growth_rate();
    let half = F::c(0.5);
    let p3 = if params.lambda_k > F::zero() {
        ((params.lambda_k - net * g.g1) / (F::c(2.0) * params.lambda_k)).clamp(F::zero(), half)
    } else {
        F::zero()
    };
    let p4 = if params.mu_k > F::zero() {
        ((params.mu_k + net * g.g2) / (F::c(2.0) * params.mu_k)).clamp(half, F::one())
    } else {
        half
    };
    Ok((p3, p4))
}

/// Which Poisson stream fired, with its thinning mark when one was drawn.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AuditRecord<F> {
    pub t: F,
    /// stream 1: shared births; 2: shared deaths; 3: thinned births;
    /// 4: thinned deaths.
    pub stream: u8,
    /// active index, uniform on {1, ..., U_{t-}}.
    pub index: u64,
    pub mark: Option<F>,
    pub state: [u64; 4],
}

/// Options for one quadruple run.
#[derive(Debug, Clone)]
pub struct QuadOptions<F> {
    pub horizon: F,
    /// Sorted snapshot times within [0, horizon].
    pub snapshot_times: Vec<F>,
    /// Keep the per-event audit log (stream, index, marks).
    pub record_audit: bool,
    pub event_budget: u64,
}

impl<F: Scalar> QuadOptions<F> {
    pub fn to_horizon(horizon: F) -> Self {
        QuadOptions {
            horizon,
            snapshot_times: Vec::new(),
            record_audit: false,
            event_budget: 200_000_000,
        }
    }

    pub fn with_snapshots(mut self, times: Vec<F>) -> Self {
        self.snapshot_times = times;
        self
    }

    pub fn with_audit(mut self) -> Self {
        self.record_audit = true;
        self
    }
}

/// Four coupled trajectories on one event clock.
#[derive(Debug, Clone)]
pub struct QuadruplePath<F> {
    pub z0: u64,
    /// (t, [u, y, z, v]) at the requested snapshot times.
    pub snapshots: Vec<(F, [u64; 4])>,
    /// [u, y, z, v] at the horizon.
    pub final_state: [u64; 4],
    pub horizon: F,
    /// First time Z reached the coupling level, if it did.
    pub tau: Option<F>,
    /// Sandwich violations observed at event times; always 0 if the
    /// construction is correct.
    pub domination_violations: u64,
    pub events: u64,
    pub budget_exhausted: bool,
    pub audit: Vec<AuditRecord<F>>,
}

impl<F: Scalar> QuadruplePath<F> {
    /// State [u, y, z, v] at an exact snapshot time.
    pub fn state_at(&self, t: F) -> Result<[u64; 4]> {
        if t == self.horizon {
            return Ok(self.final_state);
        }
        self.snapshots
            .iter()
            .find(|&&(s, _)| s == t)
            .map(|&(_, st)| st)
            .ok_or_else(|| Error::domain("quad state_at", "t is not a snapshot time"))
    }

    /// CSV rows (t, U, Y, Z, V, stream, n) from the audit log.
    pub fn write_csv<W: std::io::Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "t,U,Y,Z,V,stream,n")?;
        for rec in &self.audit {
            writeln!(
                w,
                "{},{},{},{},{},{},{}",
                rec.t, rec.state[0], rec.state[1], rec.state[2], rec.state[3], rec.stream, rec.index
            )?;
        }
        Ok(())
    }
}

/// W_K = e^{-(lambda-mu) t0} Y_{t0} / Y_0, read off a path that recorded a
/// snapshot at t0 (or ran exactly to t0).
pub fn wk_statistic<F: Scalar>(path: &QuadruplePath<F>, params: &CouplingParams<F>) -> Result<F> {
    if path.horizon < params.t0 {
        return Err(Error::domain(
            "wk_statistic",
            format!("path horizon {} shorter than t0 = {}", path.horizon, params.t0),
        ));
    }
    let y_t0 = path.state_at(params.t0)?[1];
    Ok(params.wk_factor * F::from_count(y_t0))
}

/// Empirical fraction of paths whose tau came at or before t0, with a
/// Wilson interval at confidence 1 - delta.
pub fn hitting_stats<F: Scalar>(
    paths: &[QuadruplePath<F>],
    params: &CouplingParams<F>,
    delta: F,
) -> Result<(F, (F, F))> {
    if paths.len() < 100 {
        return Err(Error::Sample(format!(
            "hitting statistics need >= 100 paths, got {}",
            paths.len()
        )));
    }
    let hits = paths
        .iter()
        .filter(|p| p.tau.is_some_and(|t| t <= params.t0))
        .count() as u64;
    let n = paths.len() as u64;
    let frac = F::from_count(hits) / F::from_count(n);
    Ok((frac, binom_ci(hits, n, delta)?))
}

/// Simulate the quadruple (U, Y, Z, V) to `opts.horizon`.
///
/// Z runs inside the coupling until tau (first time it reaches
/// `params.tau_level`), then detaches and continues as an independent exact
/// SSA with its own child stream, which reproduces the correct conditional
/// law. U, Y, V always run to the horizon (or joint extinction).
pub fn simulate_quadruple<F: Scalar>(
    model: &ModelSpec<F>,
    params: &CouplingParams<F>,
    opts: &QuadOptions<F>,
    rng: &mut ChaCha12Rng,
) -> Result<QuadruplePath<F>> {
    if !(opts.horizon > F::zero()) {
        return Err(Error::domain("simulate_quadruple", "horizon must be > 0"));
    }
    if model.z0() != params.z0 {
        return Err(Error::Mismatch(
            "coupling parameters derived from a different model".into(),
        ));
    }
    for w in opts.snapshot_times.windows(2) {
        if w[1] < w[0] {
            return Err(Error::domain("simulate_quadruple", "snapshot times must be sorted"));
        }
    }
    if opts.snapshot_times.last().is_some_and(|&t| t > opts.horizon) {
        return Err(Error::domain("simulate_quadruple", "snapshot time beyond horizon"));
    }

    let r1 = model.lambda - params.lambda_k;
    let r2 = model.mu - params.mu_k;
    let r3 = F::c(2.0) * params.lambda_k;
    let r4 = F::c(2.0) * params.mu_k;
    let per_index = r1 + r2 + r3 + r4;
    let half = F::c(0.5);

    let z0 = params.z0;
    let mut state = [z0; 4]; // [u, y, z, v]
    let mut t = F::zero();
    let mut path = QuadruplePath {
        z0,
        snapshots: Vec::with_capacity(opts.snapshot_times.len()),
        final_state: state,
        horizon: opts.horizon,
        tau: None,
        domination_violations: 0,
        events: 0,
        budget_exhausted: false,
        audit: Vec::new(),
    };
    let mut attached = true;
    let mut snap = opts.snapshot_times.iter().copied().peekable();

    let mut z_detached: Option<(F, u64)> = None;
    if z0 >= params.tau_level {
        // degenerate level: Z detaches immediately
        path.tau = Some(F::zero());
        attached = false;
        z_detached = Some((F::zero(), z0));
    }

    loop {
        let u = state[0];
        if u == 0 {
            break;
        }
        let total = F::from_count(u) * per_index;
        let e: f64 = Exp1.sample(rng);
        let t_next = t + F::c(e) / total;
        while let Some(&s) = snap.peek() {
            if s < t_next {
                path.snapshots.push((s, state));
                snap.next();
            } else {
                break;
            }
        }
        if t_next > opts.horizon {
            t = opts.horizon;
            break;
        }
        t = t_next;
        path.events += 1;

        // stream selection proportional to aggregate rates
        let pick = F::c(rng.gen::<f64>()) * per_index;
        let stream: u8 = if pick < r1 {
            1
        } else if pick < r1 + r2 {
            2
        } else if pick < r1 + r2 + r3 {
            3
        } else {
            4
        };
        let n = rng.gen_range(1..=u);
        let mark: Option<F> = if stream >= 3 {
            Some(F::c(rng.gen::<f64>()))
        } else {
            None
        };

        let (p3, p4) = if attached && stream >= 3 {
            thinning_probs(model, params, state[2].min(params.tau_level))?
        } else {
            (F::zero(), half)
        };

        let prev = state;
        let applies = |value: u64| n <= value;
        match stream {
            1 => {
                // shared births: everyone with index in range
                for (i, v) in state.iter_mut().enumerate() {
                    if i == 2 && !attached {
                        continue;
                    }
                    if applies(prev[i]) {
                        *v += 1;
                    }
                }
            }
            2 => {
                for (i, v) in state.iter_mut().enumerate() {
                    if i == 2 && !attached {
                        continue;
                    }
                    if applies(prev[i]) {
                        *v -= 1;
                    }
                }
            }
            3 => {
                let j = mark.unwrap();
                if applies(prev[0]) {
                    state[0] += 1;
                }
                if applies(prev[1]) && j <= half {
                    state[1] += 1;
                }
                if attached && applies(prev[2]) && j <= p3 {
                    state[2] += 1;
                }
            }
            _ => {
                let j = mark.unwrap();
                if applies(prev[1]) && j <= half {
                    state[1] -= 1;
                }
                if attached && applies(prev[2]) && j <= p4 {
                    state[2] -= 1;
                }
                if applies(prev[3]) {
                    state[3] -= 1;
                }
            }
        }
        // sandwich invariants at every event time
        if state[3] > state[1] || state[1] > state[0] {
            path.domination_violations += 1;
        }
        if attached && (state[3] > state[2] || state[2] > state[0]) {
            path.domination_violations += 1;
        }

        if opts.record_audit {
            path.audit.push(AuditRecord {
                t,
                stream,
                index: n,
                mark,
                state,
            });
        }

        if attached && state[2] >= params.tau_level {
            path.tau = Some(t);
            attached = false;
            z_detached = Some((t, state[2]));
        }

        if path.events >= opts.event_budget {
            path.budget_exhausted = true;
            break;
        }
    }

    // flush trailing snapshots with the final (frozen) state
    while let Some(&s) = snap.peek() {
        path.snapshots.push((s, state));
        snap.next();
    }
    path.final_state = state;

    // independent continuation of Z after tau, on a child stream
    if let Some((tau, z_at_tau)) = z_detached {
        let child = crate::sim::RngStream::new(rng.gen::<u64>(), rng.gen::<u64>());
        let remaining = opts.horizon - tau;
        let mut cont_opts = SimOptions::to_horizon(remaining.max(F::min_positive_value()))
            .with_snapshots(
                opts.snapshot_times
                    .iter()
                    .filter(|&&s| s > tau)
                    .map(|&s| s - tau)
                    .collect(),
            );
        cont_opts.event_budget = opts.event_budget;
        let cont = simulate_bd(model, z_at_tau, &cont_opts, &mut child.rng())?;
        if cont.terminal == Terminal::BudgetExhausted {
            path.budget_exhausted = true;
        }
        let mut cont_iter = cont.snapshots.iter();
        for (s, st) in path.snapshots.iter_mut() {
            if *s > tau {
                if let Some(&(_, zc)) = cont_iter.next() {
                    st[2] = zc;
                }
            }
        }
        path.final_state[2] = cont.z_end;
        path.events += cont.n_events;
    }

    Ok(path)
}
