//! Fixed-step deterministic simulation of the full platoon.
//!
//! The continuous state is one flat vector: leader `[p, v, a]` followed by
//! `[p, v, a, s, beta1, beta2]` per follower (observer internal state and
//! the two command filters are part of the ODE). Integration is classical
//! fourth-order Runge-Kutta with a fixed step. Within a step the control is
//! quasi-continuous: every Runge-Kutta stage re-evaluates the feedback law
//! at the stage state, while the observer's transmitted input copy `gamma`
//! is held (it changes only at trigger instants, checked once per step).
//!
//! Step sequencing at each grid point: evaluate the control from the
//! current state, run the trigger check (which may reset `gamma` to the
//! fresh control), record a trace row, then integrate to the next grid
//! point. Rows are therefore post-trigger: at a fire instant the recorded
//! transmission error is exactly zero, and between fires its magnitude
//! stays below the threshold.

use crate::controller::{
    baseline_control, controller_step, BaselineInputs, ControllerInputs, FilterState,
    SurfaceSnapshot,
};
use crate::dynamics::{follower_deriv, leader_deriv, unmodeled_q, KinematicState};
use crate::error::{ConfigError, SimError};
use crate::eso::{eso_deriv, estimate_q, trigger_check, EsoParams, EsoState};
use crate::num::{real, Real};
use crate::scenario::Scenario;
use crate::synthesis::derive_all;

/// Which feedback law drives the followers.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ControllerKind {
    /// Two-surface controller with event-triggered observer.
    Surface,
    /// Linear comparison law; no observer, no filters.
    Baseline,
}

/// How the transmitted input copy `gamma` is refreshed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TriggerMode {
    /// Refresh only when the transmission error reaches the threshold.
    Event,
    /// Refresh every step; removes the event-triggered holding error so the
    /// closed loop is smooth (used for integration-order studies).
    Continuous,
}

/// Observer internal-state initialization.
#[derive(Debug, Clone, PartialEq)]
pub enum ObserverInit<T> {
    /// s(0) = 0: the estimate starts at obs_gain * a(0).
    Cold,
    /// Explicit s(0) per follower (e.g. the equilibrium value).
    Custom(Vec<T>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimOptions<T> {
    pub dt: T,
    pub horizon: T,
    pub controller: ControllerKind,
    pub trigger: TriggerMode,
    /// Record every `stride`-th grid point (the final point is always
    /// recorded). 1 keeps everything.
    pub stride: usize,
    pub observer_init: ObserverInit<T>,
}

impl<T: Real> SimOptions<T> {
    pub fn new(dt: T, horizon: T) -> Self {
        Self {
            dt,
            horizon,
            controller: ControllerKind::Surface,
            trigger: TriggerMode::Event,
            stride: 1,
            observer_init: ObserverInit::Cold,
        }
    }

    /// Options taken from the scenario's configured step and horizon.
    pub fn from_scenario(sc: &Scenario<T>) -> Self {
        Self::new(sc.dt, sc.horizon)
    }
}

/// Recorded signals of one follower, one entry per recorded grid point.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct VehicleTrack<T> {
    pub p: Vec<T>,
    pub v: Vec<T>,
    pub a: Vec<T>,
    /// Spacing error to the preceding vehicle.
    pub e: Vec<T>,
    /// Control input produced at the grid point.
    pub u: Vec<T>,
    /// True unmodeled dynamics (from the hidden plant; diagnostic).
    pub q: Vec<T>,
    /// Observer estimate.
    pub q_hat: Vec<T>,
    /// Observation error `q - q_hat`.
    pub e1: Vec<T>,
    /// Transmission error `gamma - u` after the trigger check.
    pub psi: Vec<T>,
    /// Surface energy of the controller coordinates.
    pub lyap: Vec<T>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct LeaderTrack<T> {
    pub p: Vec<T>,
    pub v: Vec<T>,
    pub a: Vec<T>,
}

/// Running per-vehicle extrema, updated at every grid point regardless of
/// the recording stride, so verdicts do not depend on how sparsely the trace
/// was recorded.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SignalExtrema<T> {
    /// Largest |spacing error| and when it occurred.
    pub sup_e: T,
    pub sup_e_time: T,
    /// Smallest inter-vehicle gap.
    pub min_gap: T,
    /// Largest |observation error|.
    pub sup_e1: T,
    /// Largest surface energy.
    pub sup_lyap: T,
}

impl<T: Real> SignalExtrema<T> {
    pub fn new() -> Self {
        Self {
            sup_e: T::zero(),
            sup_e_time: T::zero(),
            min_gap: T::infinity(),
            sup_e1: T::zero(),
            sup_lyap: T::zero(),
        }
    }

    fn update(&mut self, t: T, e: T, gap: T, e1: T, lyap: T) {
        if e.abs() > self.sup_e {
            self.sup_e = e.abs();
            self.sup_e_time = t;
        }
        self.min_gap = self.min_gap.min(gap);
        self.sup_e1 = self.sup_e1.max(e1.abs());
        self.sup_lyap = self.sup_lyap.max(lyap);
    }
}

impl<T: Real> Default for SignalExtrema<T> {
    fn default() -> Self {
        Self::new()
    }
}

/// Full simulation output.
#[derive(Debug, Clone, PartialEq)]
pub struct SimTrace<T> {
    /// Recorded grid times.
    pub t: Vec<T>,
    pub leader: LeaderTrack<T>,
    pub vehicles: Vec<VehicleTrack<T>>,
    /// Per-vehicle extrema over every grid point (not just recorded rows).
    pub extrema: Vec<SignalExtrema<T>>,
    /// Trigger instants per follower (starts with t = 0, the initial
    /// transmission). Empty in continuous-trigger or baseline runs.
    pub events: Vec<Vec<T>>,
    /// Final transmission counts per follower.
    pub trigger_counts: Vec<usize>,
    /// Number of integration steps taken.
    pub steps: usize,
    pub dt: T,
    /// Desired gaps, carried along for gap reconstruction.
    pub spacings: Vec<T>,
}

impl<T: Real> SimTrace<T> {
    pub fn rows(&self) -> usize {
        self.t.len()
    }

    /// Actual inter-vehicle gap of follower `i` at row `k`.
    pub fn gap(&self, i: usize, k: usize) -> T {
        let prev_p = if i == 0 { self.leader.p[k] } else { self.vehicles[i - 1].p[k] };
        prev_p - self.vehicles[i].p[k]
    }
}

/// Extrema recomputed from the recorded rows alone (a lower-resolution view;
/// the engine's running extrema see every step). Useful for hand-built
/// traces and as a consistency check.
pub fn scan_extrema<T: Real>(trace: &SimTrace<T>) -> Vec<SignalExtrema<T>> {
    let mut out = vec![SignalExtrema::new(); trace.vehicles.len()];
    for (i, ex) in out.iter_mut().enumerate() {
        let tr = &trace.vehicles[i];
        for k in 0..trace.rows() {
            ex.update(trace.t[k], tr.e[k], trace.gap(i, k), tr.e1[k], tr.lyap[k]);
        }
    }
    out
}

struct FollowerLayout;

impl FollowerLayout {
    const LEADER: usize = 3;
    const WIDTH: usize = 6;

    fn offset(i: usize) -> usize {
        Self::LEADER + Self::WIDTH * i
    }
}

/// One follower's control evaluation at a given state.
struct ControlEval<T> {
    u: T,
    q_hat: T,
    snapshot: Option<SurfaceSnapshot<T>>,
}

struct Engine<'a, T> {
    sc: &'a Scenario<T>,
    controller: ControllerKind,
    trigger: TriggerMode,
    /// Observer parameters per follower (Surface mode).
    eso: Vec<EsoParams<T>>,
}

impl<'a, T: Real> Engine<'a, T> {
    fn follower_control(
        &self,
        i: usize,
        y: &[T],
        prev: &KinematicState<T>,
    ) -> ControlEval<T> {
        let o = FollowerLayout::offset(i);
        let f = &self.sc.followers[i];
        let state = KinematicState { p: y[o], v: y[o + 1], a: y[o + 2] };
        match self.controller {
            ControllerKind::Surface => {
                let gains = &self.sc.gains.as_ref().expect("checked at build").vehicles[i];
                let q_hat = estimate_q(y[o + 3], state.a, gains.obs_gain);
                let inp = ControllerInputs {
                    gap: prev.p - state.p,
                    v: state.v,
                    a: state.a,
                    v_prev: prev.v,
                    q_hat,
                };
                let fs = FilterState { beta1: y[o + 4], beta2: y[o + 5] };
                let snap = controller_step(&inp, &fs, gains, f.spacing);
                ControlEval { u: snap.u, q_hat, snapshot: Some(snap) }
            }
            ControllerKind::Baseline => {
                let inp = BaselineInputs {
                    gap: prev.p - state.p,
                    v: state.v,
                    a: state.a,
                    v_prev: prev.v,
                    a_prev: prev.a,
                };
                let bg = self.sc.baseline.as_ref().expect("checked at build");
                ControlEval { u: baseline_control(&inp, f.spacing, bg), q_hat: T::zero(), snapshot: None }
            }
        }
    }

    /// Full right-hand side at (t, y) with held transmissions `gammas`.
    fn rhs(&self, t: T, y: &[T], gammas: &[T], dy: &mut [T]) {
        let lead = KinematicState { p: y[0], v: y[1], a: y[2] };
        let u0 = self.sc.leader.profile.input(t);
        let ld = leader_deriv(&lead, u0, self.sc.leader.inertial_delay);
        dy[0] = ld.p;
        dy[1] = ld.v;
        dy[2] = ld.a;
        let mut prev = lead;
        for (i, f) in self.sc.followers.iter().enumerate() {
            let o = FollowerLayout::offset(i);
            let state = KinematicState { p: y[o], v: y[o + 1], a: y[o + 2] };
            let eval = self.follower_control(i, y, &prev);
            let sigma = f.disturbance.sample(t).sigma;
            let sd = follower_deriv(&state, eval.u, sigma, &f.params);
            dy[o] = sd.p;
            dy[o + 1] = sd.v;
            dy[o + 2] = sd.a;
            match self.controller {
                ControllerKind::Surface => {
                    let gains = &self.sc.gains.as_ref().expect("checked at build").vehicles[i];
                    // Event mode holds the last transmitted input between
                    // triggers; continuous mode feeds the observer the
                    // instantaneous input, keeping the loop smooth through
                    // integration sub-stages.
                    let gamma = match self.trigger {
                        TriggerMode::Event => gammas[i],
                        TriggerMode::Continuous => eval.u,
                    };
                    dy[o + 3] = eso_deriv(y[o + 3], state.a, gamma, &self.eso[i]);
                    let snap = eval.snapshot.expect("surface mode");
                    let fs = FilterState { beta1: y[o + 4], beta2: y[o + 5] };
                    let (b1, b2) =
                        crate::controller::filter_derivs(&fs, snap.alpha1, snap.alpha2, gains);
                    dy[o + 4] = b1;
                    dy[o + 5] = b2;
                }
                ControllerKind::Baseline => {
                    dy[o + 3] = T::zero();
                    dy[o + 4] = T::zero();
                    dy[o + 5] = T::zero();
                }
            }
            prev = state;
        }
    }
}

/// Signal names for the non-finite abort, in state-vector order.
fn signal_name(idx: usize) -> String {
    if idx < 3 {
        return format!("leader {}", ["position", "velocity", "acceleration"][idx]);
    }
    let i = (idx - FollowerLayout::LEADER) / FollowerLayout::WIDTH;
    let k = (idx - FollowerLayout::LEADER) % FollowerLayout::WIDTH;
    let name = ["position", "velocity", "acceleration", "observer state", "filter 1", "filter 2"]
        [k];
    format!("vehicle {} {name}", i + 1)
}

/// Trigger thresholds for an event-triggered surface run: configured value
/// when present, otherwise the analysis formula (must be positive).
pub fn resolve_thresholds<T: Real>(sc: &Scenario<T>) -> Result<Vec<T>, SimError> {
    let need_formula = sc.followers.iter().any(|f| f.threshold.is_none());
    let derived = if need_formula {
        let ctx = sc.verification_context().map_err(SimError::Config)?;
        Some(derive_all(&ctx))
    } else {
        None
    };
    sc.followers
        .iter()
        .enumerate()
        .map(|(i, f)| {
            if let Some(m) = f.threshold {
                return Ok(m);
            }
            let d = &derived.as_ref().expect("built above").vehicles[i];
            match d.sim_threshold {
                Some(m) => Ok(m),
                None => Err(SimError::Config(ConfigError::new(
                    format!("vehicle[{i}].trigger_threshold"),
                    format!(
                        "no threshold configured and the analysis formula is not positive \
                         ({:.3e} at obs_gain {:.3e}); configure trigger_threshold or raise \
                         obs_gain above {:.3e}",
                        d.threshold_formula,
                        sc.gains.as_ref().expect("surface mode").vehicles[i].obs_gain,
                        d.l_min
                    ),
                ))),
            }
        })
        .collect()
}

/// Runs the scenario to completion or the first non-finite state entry.
pub fn simulate<T: Real>(sc: &Scenario<T>, opts: &SimOptions<T>) -> Result<SimTrace<T>, SimError> {
    let n = sc.followers.len();
    if opts.stride == 0 {
        return Err(SimError::Config(ConfigError::new("stride", "must be at least 1")));
    }
    if opts.dt <= T::zero() || !opts.dt.is_finite() {
        return Err(SimError::Config(ConfigError::new("dt", "must be positive and finite")));
    }
    if opts.horizon < T::zero() || !opts.horizon.is_finite() {
        return Err(SimError::Config(ConfigError::new("horizon", "must be nonnegative and finite")));
    }
    match &opts.observer_init {
        ObserverInit::Custom(s0) if s0.len() != n => {
            return Err(SimError::Config(ConfigError::new(
                "observer_init",
                format!("expected {n} initial observer states, got {}", s0.len()),
            )))
        }
        _ => {}
    }
    let gains = match opts.controller {
        ControllerKind::Surface => Some(sc.gain_set().map_err(SimError::Config)?),
        ControllerKind::Baseline => {
            sc.baseline_gains().map_err(SimError::Config)?;
            None
        }
    };
    if let Some(gs) = gains {
        if gs.vehicles.len() != n {
            return Err(SimError::Config(ConfigError::new(
                "gains",
                "one gain row per follower required",
            )));
        }
    }

    // Thresholds only matter for event-triggered surface runs.
    let thresholds = match (opts.controller, opts.trigger) {
        (ControllerKind::Surface, TriggerMode::Event) => resolve_thresholds(sc)?,
        _ => vec![T::zero(); n],
    };
    let eso: Vec<EsoParams<T>> = match opts.controller {
        ControllerKind::Surface => gains
            .expect("surface mode")
            .vehicles
            .iter()
            .zip(&thresholds)
            .map(|(g, m)| EsoParams { obs_gain: g.obs_gain, b_hat: g.b_hat, threshold: *m })
            .collect(),
        ControllerKind::Baseline => Vec::new(),
    };

    // Initial flat state.
    let dim = FollowerLayout::LEADER + FollowerLayout::WIDTH * n;
    let mut y = vec![T::zero(); dim];
    y[0] = sc.leader.state0.p;
    y[1] = sc.leader.state0.v;
    y[2] = sc.leader.state0.a;
    {
        let mut prev = sc.leader.state0;
        for (i, f) in sc.followers.iter().enumerate() {
            let o = FollowerLayout::offset(i);
            y[o] = f.state0.p;
            y[o + 1] = f.state0.v;
            y[o + 2] = f.state0.a;
            y[o + 3] = match &opts.observer_init {
                ObserverInit::Cold => T::zero(),
                ObserverInit::Custom(s0) => s0[i],
            };
            if opts.controller == ControllerKind::Surface {
                let g = &gains.expect("surface mode").vehicles[i];
                let q_hat0 = estimate_q(y[o + 3], f.state0.a, g.obs_gain);
                let inp = ControllerInputs {
                    gap: prev.p - f.state0.p,
                    v: f.state0.v,
                    a: f.state0.a,
                    v_prev: prev.v,
                    q_hat: q_hat0,
                };
                let fs = FilterState::init(&inp, g, f.spacing);
                y[o + 4] = fs.beta1;
                y[o + 5] = fs.beta2;
            }
            prev = f.state0;
        }
    }

    let engine = Engine { sc, controller: opts.controller, trigger: opts.trigger, eso };

    let n_steps = (opts.horizon / opts.dt).round().to_usize().unwrap_or(0);
    let mut trace = SimTrace {
        t: Vec::new(),
        leader: LeaderTrack::default(),
        vehicles: vec![VehicleTrack::default(); n],
        extrema: vec![SignalExtrema::new(); n],
        events: vec![Vec::new(); n],
        trigger_counts: vec![0; n],
        steps: n_steps,
        dt: opts.dt,
        spacings: sc.followers.iter().map(|f| f.spacing).collect(),
    };

    // Initial transmissions: gamma(0) = u(0) counts as the first trigger.
    let mut eso_states: Vec<EsoState<T>> = Vec::with_capacity(n);
    {
        let mut prev = sc.leader.state0;
        for i in 0..n {
            let eval = engine.follower_control(i, &y, &prev);
            eso_states.push(EsoState::init(eval.u));
            if opts.controller == ControllerKind::Surface && opts.trigger == TriggerMode::Event {
                trace.events[i].push(T::zero());
            }
            let o = FollowerLayout::offset(i);
            prev = KinematicState { p: y[o], v: y[o + 1], a: y[o + 2] };
        }
    }

    // Integration buffers.
    let mut k1 = vec![T::zero(); dim];
    let mut k2 = vec![T::zero(); dim];
    let mut k3 = vec![T::zero(); dim];
    let mut k4 = vec![T::zero(); dim];
    let mut stage = vec![T::zero(); dim];
    let mut gammas = vec![T::zero(); n];

    let half = real::<T>(0.5);
    let sixth = T::one() / real::<T>(6.0);
    let two = real::<T>(2.0);

    for step in 0..=n_steps {
        let t = opts.dt * real::<T>(step as f64);

        // Controls at the grid point, then trigger checks, then the row.
        let mut evals: Vec<ControlEval<T>> = Vec::with_capacity(n);
        {
            let mut prev = KinematicState { p: y[0], v: y[1], a: y[2] };
            for i in 0..n {
                let eval = engine.follower_control(i, &y, &prev);
                let o = FollowerLayout::offset(i);
                prev = KinematicState { p: y[o], v: y[o + 1], a: y[o + 2] };
                evals.push(eval);
            }
        }
        if opts.controller == ControllerKind::Surface {
            for i in 0..n {
                match opts.trigger {
                    TriggerMode::Event => {
                        if trigger_check(&mut eso_states[i], evals[i].u, t, &engine.eso[i]) {
                            trace.events[i].push(t);
                        }
                    }
                    TriggerMode::Continuous => {
                        eso_states[i].gamma = evals[i].u;
                        eso_states[i].last_trigger_t = t;
                        eso_states[i].trigger_count += 1;
                    }
                }
            }
        }

        // Signals are computed at every grid point so the running extrema
        // see everything; rows are stored only on stride hits.
        let record = step % opts.stride == 0 || step == n_steps;
        if record {
            trace.t.push(t);
            trace.leader.p.push(y[0]);
            trace.leader.v.push(y[1]);
            trace.leader.a.push(y[2]);
        }
        {
            let mut prev = KinematicState { p: y[0], v: y[1], a: y[2] };
            for i in 0..n {
                let o = FollowerLayout::offset(i);
                let f = &sc.followers[i];
                let state = KinematicState { p: y[o], v: y[o + 1], a: y[o + 2] };
                let gap = prev.p - state.p;
                let e = gap - f.spacing;
                let (q, q_hat, e1, psi, lyap) = match opts.controller {
                    ControllerKind::Surface => {
                        let g = &gains.expect("surface mode").vehicles[i];
                        let sigma = f.disturbance.sample(t).sigma;
                        let q = unmodeled_q(&state, evals[i].u, sigma, &f.params, g.b_hat);
                        (
                            q,
                            evals[i].q_hat,
                            q - evals[i].q_hat,
                            eso_states[i].gamma - evals[i].u,
                            evals[i].snapshot.as_ref().expect("surface mode").lyapunov(),
                        )
                    }
                    ControllerKind::Baseline => {
                        (T::zero(), T::zero(), T::zero(), T::zero(), T::zero())
                    }
                };
                trace.extrema[i].update(t, e, gap, e1, lyap);
                if record {
                    let tr = &mut trace.vehicles[i];
                    tr.p.push(state.p);
                    tr.v.push(state.v);
                    tr.a.push(state.a);
                    tr.e.push(e);
                    tr.u.push(evals[i].u);
                    tr.q.push(q);
                    tr.q_hat.push(q_hat);
                    tr.e1.push(e1);
                    tr.psi.push(psi);
                    tr.lyap.push(lyap);
                }
                prev = state;
            }
        }

        if step == n_steps {
            break;
        }

        // Classical fourth-order step with gamma held.
        for i in 0..n {
            gammas[i] = eso_states[i].gamma;
        }
        let dt = opts.dt;
        engine.rhs(t, &y, &gammas, &mut k1);
        for j in 0..dim {
            stage[j] = y[j] + half * dt * k1[j];
        }
        engine.rhs(t + half * dt, &stage, &gammas, &mut k2);
        for j in 0..dim {
            stage[j] = y[j] + half * dt * k2[j];
        }
        engine.rhs(t + half * dt, &stage, &gammas, &mut k3);
        for j in 0..dim {
            stage[j] = y[j] + dt * k3[j];
        }
        engine.rhs(t + dt, &stage, &gammas, &mut k4);
        for j in 0..dim {
            y[j] += dt * sixth * (k1[j] + two * k2[j] + two * k3[j] + k4[j]);
        }

        if let Some(bad) = y.iter().position(|v| !v.is_finite()) {
            return Err(SimError::NonFinite {
                signal: signal_name(bad),
                t: (opts.dt * real::<T>((step + 1) as f64)).to_f64().unwrap_or(f64::NAN),
            });
        }
    }

    if opts.controller == ControllerKind::Surface {
        for (count, st) in trace.trigger_counts.iter_mut().zip(&eso_states) {
            *count = st.trigger_count as usize;
        }
    }
    Ok(trace)
}
