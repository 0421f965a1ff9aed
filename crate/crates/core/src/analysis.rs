//! Outcome verdicts computed from a finished simulation trace.
//!
//! Four properties are judged, mirroring what the offline analysis
//! guarantees for a verified gain set:
//!
//! * string stability: every spacing error stays inside the envelope
//!   `|e_i| <= delta` and every inter-vehicle gap stays positive;
//! * terminal precision: in a terminal window that starts after the leader
//!   has gone quiescent, every |e_i| is at most epsilon (the practical
//!   limsup check on a finite horizon);
//! * bounded observation error: `sup |e1_i|` is at most the derived bound;
//! * Zeno-freeness: at least the solver step between transmissions, with
//!   the derived minimum inter-event time reported alongside.
//!
//! All verdicts are pure functions of the recorded rows and event times.

use core::fmt;

use crate::engine::SimTrace;
use crate::num::{real, Real};
use crate::synthesis::DerivedBounds;

/// Everything the verdicts need besides the trace itself.
#[derive(Debug, Clone, PartialEq)]
pub struct AnalysisInputs<T> {
    /// String-stability envelope.
    pub delta: T,
    /// Terminal precision target.
    pub epsilon: T,
    /// Length of the terminal window (seconds).
    pub terminal_window: T,
    /// Time after which the leader's input is constant; the terminal window
    /// must start at or after this.
    pub leader_quiescent_after: T,
    /// Observation-error bound per vehicle, when an observer ran.
    pub e1_bounds: Vec<Option<T>>,
    /// Guaranteed minimum inter-event time per vehicle, when derived.
    pub tau_mins: Vec<Option<T>>,
}

/// Default terminal-window length in seconds.
pub const DEFAULT_TERMINAL_WINDOW: f64 = 2.0;

impl<T: Real> AnalysisInputs<T> {
    pub fn new(delta: T, epsilon: T, leader_quiescent_after: T, n: usize) -> Self {
        Self {
            delta,
            epsilon,
            terminal_window: real::<T>(DEFAULT_TERMINAL_WINDOW),
            leader_quiescent_after,
            e1_bounds: vec![None; n],
            tau_mins: vec![None; n],
        }
    }

    /// Pulls the per-vehicle bounds out of the derived constants.
    pub fn with_derived(mut self, derived: &DerivedBounds<T>) -> Self {
        self.e1_bounds = derived.vehicles.iter().map(|d| Some(d.e1_bar)).collect();
        self.tau_mins = derived.vehicles.iter().map(|d| d.zeno.map(|z| z.tau_min)).collect();
        self
    }
}

/// Per-vehicle measured quantities and verdicts.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VehicleVerdict<T> {
    /// Largest |spacing error| over the run and when it occurred.
    pub sup_e: T,
    pub sup_e_time: T,
    /// Smallest inter-vehicle gap over the run.
    pub min_gap: T,
    /// Largest |spacing error| inside the terminal window.
    pub terminal_sup_e: T,
    /// Largest |observation error| over the run.
    pub sup_e1: T,
    pub e1_bound: Option<T>,
    /// Largest surface energy over the run.
    pub sup_lyap: T,
    /// Transmissions (including the initial one).
    pub events: usize,
    /// Smallest gap between consecutive transmissions; None below 2 events.
    pub min_event_gap: Option<T>,
    pub tau_min: Option<T>,
    /// Fraction of trigger checks that did not transmit.
    pub reduction: T,
    pub string_stable: bool,
    pub precise: bool,
    /// None when no observer ran or no bound was derived.
    pub obs_bounded: Option<bool>,
    /// Transmissions never accumulate: at least one solver step apart.
    pub zeno_free: bool,
    /// Measured event gaps also respect the derived minimum inter-event
    /// time; None when no bound was derived, vacuously true below 2 events.
    pub respects_tau_min: Option<bool>,
}

/// Whole-run verdict report.
#[derive(Debug, Clone, PartialEq)]
pub struct StabilityReport<T> {
    pub vehicles: Vec<VehicleVerdict<T>>,
    pub delta: T,
    pub epsilon: T,
    /// Terminal window actually used, `[start, end]`.
    pub window: (T, T),
    /// Whether the window starts after the leader went quiescent; the
    /// precision verdict is meaningless otherwise.
    pub window_valid: bool,
    pub string_stable: bool,
    pub precise: bool,
    pub zeno_free: bool,
}

impl<T: Real> StabilityReport<T> {
    /// True when every platoon-level verdict holds and the window was
    /// admissible.
    pub fn all_pass(&self) -> bool {
        self.string_stable && self.precise && self.zeno_free && self.window_valid
    }
}

/// Computes every verdict from a finished trace.
pub fn analyze<T: Real>(trace: &SimTrace<T>, inp: &AnalysisInputs<T>) -> StabilityReport<T> {
    let rows = trace.rows();
    assert!(rows > 0, "a trace always has at least its initial row");
    let n = trace.vehicles.len();
    let t_end = trace.t[rows - 1];
    let window_start = t_end - inp.terminal_window;
    let window_valid = window_start >= inp.leader_quiescent_after;
    // Event instants sit on the integration grid, but t = dt * step loses a
    // few ulps at the horizon scale, so consecutive-step gaps can differ
    // from dt in the last bits. Gap comparisons get that much slack.
    let grid_tol = real::<T>(8.0) * T::epsilon() * t_end.abs().max(T::one());

    let mut vehicles = Vec::with_capacity(n);
    for i in 0..n {
        let tr = &trace.vehicles[i];
        // Whole-run extrema come from the engine's every-step tracker, so
        // they are exact regardless of the recording stride; the terminal
        // window is judged over the recorded rows inside it.
        let ex = &trace.extrema[i];
        let sup_e = ex.sup_e;
        let sup_e_time = ex.sup_e_time;
        let min_gap = ex.min_gap;
        let sup_e1 = ex.sup_e1;
        let sup_lyap = ex.sup_lyap;
        let mut terminal_sup_e = T::zero();
        for k in 0..rows {
            if trace.t[k] >= window_start {
                terminal_sup_e = terminal_sup_e.max(tr.e[k].abs());
            }
        }

        let ev = &trace.events[i];
        let min_event_gap = ev
            .windows(2)
            .map(|w| w[1] - w[0])
            .fold(None, |acc: Option<T>, g| Some(acc.map_or(g, |a| a.min(g))));
        let checks = trace.steps + 1;
        let reduction = T::one() - real::<T>(ev.len() as f64) / real::<T>(checks as f64);
        let e1_bound = inp.e1_bounds.get(i).copied().flatten();
        let tau_min = inp.tau_mins.get(i).copied().flatten();

        let string_stable = sup_e <= inp.delta && min_gap > T::zero();
        let precise = terminal_sup_e <= inp.epsilon;
        let obs_bounded = e1_bound.map(|b| sup_e1 <= b);
        let zeno_free = match min_event_gap {
            None => true,
            Some(g) => g >= trace.dt - grid_tol,
        };
        let respects_tau_min = tau_min.map(|tm| match min_event_gap {
            None => true,
            Some(g) => g >= tm - grid_tol,
        });

        vehicles.push(VehicleVerdict {
            sup_e,
            sup_e_time,
            min_gap,
            terminal_sup_e,
            sup_e1,
            e1_bound,
            sup_lyap,
            events: ev.len(),
            min_event_gap,
            tau_min,
            reduction,
            string_stable,
            precise,
            obs_bounded,
            zeno_free,
            respects_tau_min,
        });
    }

    StabilityReport {
        string_stable: vehicles.iter().all(|v| v.string_stable),
        precise: vehicles.iter().all(|v| v.precise),
        zeno_free: vehicles.iter().all(|v| v.zeno_free),
        vehicles,
        delta: inp.delta,
        epsilon: inp.epsilon,
        window: (window_start, t_end),
        window_valid,
    }
}

fn fmt_opt<T: Real>(v: Option<T>) -> String {
    match v {
        Some(x) => format!("{x:.4e}"),
        None => "-".to_string(),
    }
}

impl<T: Real> fmt::Display for StabilityReport<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "string-stability   {}  (sup|e| <= {:.4e} and positive gaps, all vehicles)",
            if self.string_stable { "PASS" } else { "FAIL" },
            self.delta,
        )?;
        writeln!(
            f,
            "terminal-precision {}  (|e| <= {:.4e} on [{:.3}, {:.3}]{})",
            if self.precise && self.window_valid { "PASS" } else { "FAIL" },
            self.epsilon,
            self.window.0,
            self.window.1,
            if self.window_valid { "" } else { "; window overlaps leader activity: REJECTED" },
        )?;
        writeln!(
            f,
            "zeno-freeness      {}  (transmissions at least one step apart)",
            if self.zeno_free { "PASS" } else { "FAIL" },
        )?;
        for (i, v) in self.vehicles.iter().enumerate() {
            writeln!(
                f,
                "veh {:>2}: sup|e| {:.4e} @t={:.3}  min_gap {:.4e}  term|e| {:.4e}  \
                 sup|e1| {:.4e} (bound {})  sup(V) {:.4e}  events {}  min_evt_gap {}  \
                 tau_min {}  reduction {:.4}",
                i + 1,
                v.sup_e,
                v.sup_e_time,
                v.min_gap,
                v.terminal_sup_e,
                v.sup_e1,
                fmt_opt(v.e1_bound),
                v.sup_lyap,
                v.events,
                fmt_opt(v.min_event_gap),
                fmt_opt(v.tau_min),
                v.reduction,
            )?;
        }
        Ok(())
    }
}
