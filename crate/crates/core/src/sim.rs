//! Exact event-driven simulation (direct-method SSA) of linear and
//! density-dependent birth-death processes, the shared-clock pure-birth
//! jump-time construction, and semimartingale diagnostics.
//!
//! Every replicate owns its own counter-based RNG stream, so runs are
//! bit-for-bit reproducible for a given (seed, stream) and independent of
//! how replicates are scheduled across threads.

use std::hash::{Hash, Hasher};
use std::io::{Read, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, Exp1};

use crate::error::{Error, Result};
use crate::model::{ModelAnalysis, ModelSpec};
use crate::scalar::Scalar;

/// Reproducible stream handle: `seed` selects the experiment, `stream`
/// the replicate. Streams with distinct ids are statistically independent
/// (ChaCha stream feature), and the same pair always reproduces the same
/// trajectory.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RngStream {
    pub seed: u64,
    pub stream: u64,
}

impl RngStream {
    pub fn new(seed: u64, stream: u64) -> Self {
        RngStream { seed, stream }
    }

    pub fn rng(&self) -> ChaCha12Rng {
        let mut rng = ChaCha12Rng::seed_from_u64(self.seed);
        rng.set_stream(self.stream);
        rng
    }
}

/// Why a trajectory stopped.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Terminal {
    HorizonReached,
    AbsorbedAtZero,
    CapReached,
    BudgetExhausted,
}

/// Recording and stopping options for one SSA run.
#[derive(Debug, Clone)]
pub struct SimOptions<F> {
    pub horizon: F,
    /// Stop as soon as the state reaches this level (None = no cap).
    pub cap: Option<u64>,
    /// Keep the full (time, +-1) event list. Required for the
    /// semimartingale diagnostics; snapshots alone bound memory at large K.
    pub record_events: bool,
    /// Sorted times (within [0, horizon]) at which to record the state.
    pub snapshot_times: Vec<F>,
    /// Hard bound on the number of events; exhaustion is reported as a
    /// distinct terminal flag, never silently truncated.
    pub event_budget: u64,
}

impl<F: Scalar> SimOptions<F> {
    pub fn to_horizon(horizon: F) -> Self {
        SimOptions {
            horizon,
            cap: None,
            record_events: false,
            snapshot_times: Vec::new(),
            event_budget: 100_000_000,
        }
    }

    pub fn with_events(mut self) -> Self {
        self.record_events = true;
        self
    }

    pub fn with_snapshots(mut self, times: Vec<F>) -> Self {
        self.snapshot_times = times;
        self
    }

    pub fn with_cap(mut self, cap: u64) -> Self {
        self.cap = Some(cap);
        self
    }

    fn validate(&self) -> Result<()> {
        if !(self.horizon > F::zero()) {
            return Err(Error::domain("simulate", "horizon must be > 0"));
        }
        for w in self.snapshot_times.windows(2) {
            if w[1] < w[0] {
                return Err(Error::domain("simulate", "snapshot times must be sorted"));
            }
        }
        if self
            .snapshot_times
            .last()
            .is_some_and(|&t| t > self.horizon)
        {
            return Err(Error::domain("simulate", "snapshot time beyond horizon"));
        }
        Ok(())
    }
}

/// One exact jump path: initial state plus time-ordered unit events.
#[derive(Debug, Clone)]
pub struct Trajectory<F> {
    pub z0: u64,
    /// (time, +1/-1) events; empty unless events were recorded.
    pub events: Vec<(F, i8)>,
    /// (time, state) pairs at the requested snapshot times. Entries after a
    /// cap hit or budget exhaustion are absent (the state there is unknown);
    /// after absorption at 0 they are filled with zeros.
    pub snapshots: Vec<(F, u64)>,
    pub terminal: Terminal,
    /// Time at which the path stopped evolving (== horizon unless
    /// absorbed/capped/out of budget earlier).
    pub t_end: F,
    pub z_end: u64,
    pub n_events: u64,
    model_tag: u64,
}

impl<F: Scalar> Trajectory<F> {
    /// Right-continuous state value at `t`. Requires recorded events, or a
    /// `t` that is an exact snapshot time, or a time past absorption.
    pub fn state_at(&self, t: F) -> Result<u64> {
        if t < F::zero() || t > self.t_end && self.terminal != Terminal::AbsorbedAtZero {
            return Err(Error::domain(
                "state_at",
                format!("t = {t} outside recorded range [0, {}]", self.t_end),
            ));
        }
        if self.terminal == Terminal::AbsorbedAtZero && t >= self.t_end {
            return Ok(0);
        }
        if !self.events.is_empty() || self.n_events == 0 {
            let k = self.events.partition_point(|&(s, _)| s <= t);
            let delta: i64 = self.events[..k].iter().map(|&(_, d)| d as i64).sum();
            return Ok((self.z0 as i64 + delta) as u64);
        }
        if let Some(&(_, z)) = self.snapshots.iter().find(|&&(s, _)| s == t) {
            return Ok(z);
        }
        Err(Error::domain(
            "state_at",
            "events not recorded and t is not a snapshot time",
        ))
    }

    /// Write the recorded snapshots as `t,z` CSV rows.
    pub fn write_snapshots_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "t,z")?;
        for &(t, z) in &self.snapshots {
            writeln!(w, "{t},{z}")?;
        }
        Ok(())
    }

    /// Binary snapshot dump: exact round trip of (t, z) pairs.
    pub fn write_snapshots_bin<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(b"BDSNAP01")?;
        w.write_all(&self.z0.to_le_bytes())?;
        w.write_all(&(self.snapshots.len() as u64).to_le_bytes())?;
        for &(t, z) in &self.snapshots {
            w.write_all(&t.to_f64().unwrap().to_bits().to_le_bytes())?;
            w.write_all(&z.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_snapshots_bin<R: Read>(mut r: R) -> Result<(u64, Vec<(F, u64)>)> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != b"BDSNAP01" {
            return Err(Error::domain("read_snapshots_bin", "bad magic"));
        }
        let mut buf = [0u8; 8];
        r.read_exact(&mut buf)?;
        let z0 = u64::from_le_bytes(buf);
        r.read_exact(&mut buf)?;
        let n = u64::from_le_bytes(buf);
        let mut out = Vec::with_capacity(n as usize);
        for _ in 0..n {
            r.read_exact(&mut buf)?;
            let t = F::c(f64::from_bits(u64::from_le_bytes(buf)));
            r.read_exact(&mut buf)?;
            out.push((t, u64::from_le_bytes(buf)));
        }
        Ok((z0, out))
    }
}

fn model_tag<F: Scalar>(model: &ModelSpec<F>) -> u64 {
    let mut h = std::collections::hash_map::DefaultHasher::new();
    model.lambda.to_f64().unwrap().to_bits().hash(&mut h);
    model.mu.to_f64().unwrap().to_bits().hash(&mut h);
    model.big_k.to_f64().unwrap().to_bits().hash(&mut h);
    model.alpha.to_f64().unwrap().to_bits().hash(&mut h);
    format!("{:?}", model.regulation).hash(&mut h);
    h.finish()
}

/// Exact SSA for the density-dependent model: at state z the total birth
/// rate is z*max(0, lambda - (lambda-mu) g1(z/K)) and the death rate
/// z*(mu + (lambda-mu) g2(z/K)).
pub fn simulate_bd<F: Scalar>(
    model: &ModelSpec<F>,
    z0: u64,
    opts: &SimOptions<F>,
    rng: &mut ChaCha12Rng,
) -> Result<Trajectory<F>> {
    let mut traj = run_ssa(&|z| model.rates(z), z0, opts, rng)?;
    traj.model_tag = model_tag(model);
    Ok(traj)
}

/// Exact SSA for the linear BD process with per-capita birth rate `gamma`
/// and death rate `beta` (no density dependence). Sub- and supercritical
/// parameter choices are both fine here; only the analytic transient law
/// requires gamma > beta.
pub fn simulate_linear_bd<F: Scalar>(
    gamma: F,
    beta: F,
    z0: u64,
    opts: &SimOptions<F>,
    rng: &mut ChaCha12Rng,
) -> Result<Trajectory<F>> {
    if gamma < F::zero() || beta < F::zero() {
        return Err(Error::InvalidModel(format!(
            "rates must be nonnegative, got gamma = {gamma}, beta = {beta}"
        )));
    }
    run_ssa(
        &|z| {
            let zf = F::from_count(z);
            Ok((zf * gamma, zf * beta))
        },
        z0,
        opts,
        rng,
    )
}

fn run_ssa<F: Scalar>(
    rates: &dyn Fn(u64) -> Result<(F, F)>,
    z0: u64,
    opts: &SimOptions<F>,
    rng: &mut ChaCha12Rng,
) -> Result<Trajectory<F>> {
    opts.validate()?;
    let mut traj = Trajectory {
        z0,
        events: Vec::new(),
        snapshots: Vec::with_capacity(opts.snapshot_times.len()),
        terminal: Terminal::HorizonReached,
        t_end: opts.horizon,
        z_end: z0,
        n_events: 0,
        model_tag: 0,
    };
    let mut z = z0;
    let mut t = F::zero();
    let mut snap = opts.snapshot_times.iter().copied().peekable();

    if opts.cap.is_some_and(|c| z0 >= c) {
        traj.terminal = Terminal::CapReached;
        traj.t_end = F::zero();
        return Ok(traj);
    }

    loop {
        let (b, d) = rates(z)?;
        let total = b + d;
        if !(total >= F::zero()) || b < F::zero() || d < F::zero() {
            return Err(Error::numeric("simulate", format!("invalid rates at z = {z}")));
        }
        if total == F::zero() {
            // z = 0 is the absorbing state; a stuck positive state (pure
            // birth beyond its ceiling) just coasts to the horizon.
            while let Some(&s) = snap.peek() {
                traj.snapshots.push((s, z));
                snap.next();
            }
            if z == 0 {
                traj.terminal = Terminal::AbsorbedAtZero;
                traj.t_end = t;
            }
            traj.z_end = z;
            return Ok(traj);
        }
        let e: f64 = Exp1.sample(rng);
        let t_next = t + F::c(e) / total;
        while let Some(&s) = snap.peek() {
            if s < t_next {
                traj.snapshots.push((s, z));
                snap.next();
            } else {
                break;
            }
        }
        if t_next > opts.horizon {
            traj.z_end = z;
            return Ok(traj);
        }
        let u: f64 = rng.gen();
        let delta: i8 = if F::c(u) * total < b { 1 } else { -1 };
        z = (z as i64 + delta as i64) as u64;
        t = t_next;
        traj.n_events += 1;
        if opts.record_events {
            traj.events.push((t, delta));
        }
        if opts.cap.is_some_and(|c| z >= c) {
            // +1 jumps land exactly on the cap
            while let Some(&s) = snap.peek() {
                if s <= t {
                    traj.snapshots.push((s, z));
                    snap.next();
                } else {
                    break;
                }
            }
            traj.terminal = Terminal::CapReached;
            traj.t_end = t;
            traj.z_end = z;
            return Ok(traj);
        }
        if traj.n_events >= opts.event_budget {
            traj.terminal = Terminal::BudgetExhausted;
            traj.t_end = t;
            traj.z_end = z;
            return Ok(traj);
        }
    }
}

/// Jump times of the nonlinear pure-birth process and of the linear
/// (Yule) process built from one shared i.i.d. Exp(1) sequence:
/// T_n = sum tau_i / (lambda i (1 - g(i/K))) and T~_n = sum tau_i/(lambda i).
/// T_n >= T~_n holds pathwise term by term.
pub fn pure_birth_jump_times<F: Scalar>(
    analysis: &ModelAnalysis<F>,
    n_max: u64,
    rng: &mut ChaCha12Rng,
) -> Result<(Vec<F>, Vec<F>)> {
    let model = analysis.model();
    if model.mu != F::zero() {
        return Err(Error::InvalidModel(
            "pure-birth jump times require mu = 0".into(),
        ));
    }
    let ceiling = (model.big_k * analysis.x_inf()).floor();
    if F::from_count(n_max) > ceiling {
        return Err(Error::domain(
            "pure_birth_jump_times",
            format!("n_max = {n_max} beyond the absorption level {ceiling}"),
        ));
    }
    let lambda = model.lambda;
    let mut t_nonlinear = Vec::with_capacity(n_max as usize);
    let mut t_linear = Vec::with_capacity(n_max as usize);
    let mut acc_n = F::zero();
    let mut acc_l = F::zero();
    for i in 1..=n_max {
        let (b, d) = model.rates(i)?;
        if d != F::zero() {
            return Err(Error::InvalidModel(
                "pure-birth jump times require a birth-side regulation (g2 = 0)".into(),
            ));
        }
        if !(b > F::zero()) {
            return Err(Error::domain(
                "pure_birth_jump_times",
                format!("birth rate vanished at n = {i} before n_max"),
            ));
        }
        let tau: f64 = Exp1.sample(rng);
        let tau = F::c(tau);
        acc_n = acc_n + tau / b;
        acc_l = acc_l + tau / (lambda * F::from_count(i));
        t_nonlinear.push(acc_n);
        t_linear.push(acc_l);
    }
    Ok((t_nonlinear, t_linear))
}

/// Semimartingale diagnostics of a recorded path:
/// M_t = Z_t - Z_0 - (lambda-mu) Int_0^t Z_s (1 - g(Z_s/K)) ds, its
/// realized quadratic variation [M]_t (= number of jumps), and the
/// predictable one <M>_t = Int ((lambda+mu) Z_s + (lambda-mu) Z_s (g2-g1)) ds.
/// Both integrals are sums over constant-state intervals, so the only error
/// is floating point rounding.
#[derive(Debug, Clone)]
pub struct MartingaleDiagnostics<F> {
    /// (segment start, M at segment start, drift rate on the segment).
    segments: Vec<(F, F, F)>,
    pub m_terminal: F,
    pub realized_qv: F,
    pub predictable_qv: F,
    /// [M]_T / <M>_T, defined as 1 when the path has no activity.
    pub qv_ratio: F,
}

impl<F: Scalar> MartingaleDiagnostics<F> {
    /// M_t at any 0 <= t <= horizon.
    pub fn residual_at(&self, t: F) -> F {
        let k = self.segments.partition_point(|&(s, _, _)| s <= t);
        let (s, m, rate) = self.segments[k - 1];
        m - rate * (t - s)
    }
}

pub fn martingale_residual<F: Scalar>(
    traj: &Trajectory<F>,
    model: &ModelSpec<F>,
) -> Result<MartingaleDiagnostics<F>> {
    if traj.model_tag != 0 && traj.model_tag != model_tag(model) {
        return Err(Error::Mismatch(
            "trajectory was generated from a different model".into(),
        ));
    }
    if traj.events.is_empty() && traj.n_events > 0 {
        return Err(Error::Mismatch(
            "martingale diagnostics require full event recording".into(),
        ));
    }
    let net = model.growth_rate();
    let sum = model.lambda + model.mu;
    let mut z = traj.z0;
    let mut t_prev = F::zero();
    let mut drift = F::zero();
    let mut pqv = F::zero();
    let mut m = F::zero();
    let mut segments = Vec::with_capacity(traj.events.len() + 1);
    let seg_rate = |z: u64| -> Result<(F, F)> {
        let zf = F::from_count(z);
        let g = model.g_eval(zf / model.big_k)?;
        Ok((
            net * zf * (F::one() - g.g),
            sum * zf + net * zf * (g.g2 - g.g1),
        ))
    };
    let (mut drift_rate, mut pqv_rate) = seg_rate(z)?;
    segments.push((F::zero(), F::zero(), drift_rate));
    for &(t, delta) in &traj.events {
        let dt = t - t_prev;
        drift = drift + drift_rate * dt;
        pqv = pqv + pqv_rate * dt;
        z = (z as i64 + delta as i64) as u64;
        let zf = F::from_count(z) - F::from_count(traj.z0);
        m = zf - drift;
        t_prev = t;
        let r = seg_rate(z)?;
        drift_rate = r.0;
        pqv_rate = r.1;
        segments.push((t, m, drift_rate));
    }
    let tail = traj.t_end - t_prev;
    drift = drift + drift_rate * tail;
    pqv = pqv + pqv_rate * tail;
    let m_terminal = F::from_count(z) - F::from_count(traj.z0) - drift;
    let realized = F::from_count(traj.n_events);
    let ratio = if pqv == F::zero() {
        F::one()
    } else {
        realized / pqv
    };
    Ok(MartingaleDiagnostics {
        segments,
        m_terminal,
        realized_qv: realized,
        predictable_qv: pqv,
        qv_ratio: ratio,
    })
}
