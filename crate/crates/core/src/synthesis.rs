//! Derived robust constants, feasibility verification, and gain synthesis.
//!
//! Everything here is offline math on the configuration: no simulation state
//! is touched. Given plant parameter intervals, initial conditions,
//! disturbance envelopes, and a gain set, the verifier derives the constants
//! that certify the closed loop (observation-error bound, trigger threshold,
//! minimum inter-event time, admissible initial spacing error, convergence
//! rate) and evaluates every sufficient condition, reporting each as a
//! named check with its bound, actual value, and margin. Suggest mode runs
//! the same chain forward to propose a gain set that passes verification.
//!
//! Dependency order of the derivation: input-gain window -> gain-mismatch
//! ratio -> per-vehicle envelope chain (v_bar, a_bar, alpha3, alpha4) ->
//! filter bounds -> rate constants c1/c2 -> observer gain floor and trigger
//! threshold -> minimum inter-event time -> surface/gain/filter conditions ->
//! admissible initial error -> convergence rate.

use core::fmt;

use crate::controller::{initial_surfaces, GainSet, VehicleGains};
use crate::dynamics::ModelBounds;
use crate::error::SynthesisError;
use crate::num::{gravity, real, Real};

/// Admissible interval for the input gain estimate `b_hat`:
/// `(lower_edge, b_hi]` keeps the gain-mismatch ratio below one.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BWindow<T> {
    /// Smallest true input gain compatible with the bounds, 1/(m_hi tau_hi).
    pub b_lo: T,
    /// Largest true input gain compatible with the bounds, 1/(m_lo tau_lo).
    pub b_hi: T,
    /// Open lower edge of the admissible window.
    pub lower_edge: T,
}

impl<T: Real> BWindow<T> {
    pub fn contains(&self, b_hat: T) -> bool {
        self.lower_edge < b_hat && b_hat <= self.b_hi
    }
}

/// Computes the admissible window for `b_hat` from the plant bounds.
///
/// The lower edge is `max(b_lo, b_hi/2)`. When the bounds are degenerate
/// (plant gain exactly known, b_lo == b_hi) the `b_lo` constraint would
/// exclude the single sensible estimate `b_hat = b`, so the edge falls back
/// to `b_hi/2`; the mismatch ratio is zero there and every derived bound
/// only tightens.
pub fn input_gain_window<T: Real>(bounds: &ModelBounds<T>) -> BWindow<T> {
    let b_hi = T::one() / (bounds.mass.lo * bounds.inertial_delay.lo);
    let b_lo = T::one() / (bounds.mass.hi * bounds.inertial_delay.hi);
    let half_hi = b_hi / real::<T>(2.0);
    let lower_edge = if b_lo == b_hi { half_hi } else { b_lo.max(half_hi) };
    BWindow { b_lo, b_hi, lower_edge }
}

/// Gain-mismatch ratio `max((b_hi - b_hat)/b_hat, (b_hat - b_lo)/b_hat)`.
/// Strictly below one whenever `b_hat` lies in the window.
pub fn gain_mismatch_ratio<T: Real>(window: &BWindow<T>, b_hat: T) -> T {
    ((window.b_hi - b_hat) / b_hat).max((b_hat - window.b_lo) / b_hat)
}

/// Worst-case absolute gain mismatch `max(b_hi - b_hat, b_hat - b_lo)`,
/// floored at zero for the exactly-known case.
pub fn gain_mismatch_abs<T: Real>(window: &BWindow<T>, b_hat: T) -> T {
    (window.b_hi - b_hat).max(b_hat - window.b_lo).max(T::zero())
}

/// Per-vehicle trajectory envelopes used by the rate constants.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChainRow<T> {
    /// Velocity envelope along the platoon.
    pub v_bar: T,
    /// Acceleration envelope of this vehicle.
    pub a_bar: T,
    /// Envelope of the first virtual-control rate.
    pub alpha3: T,
    /// Envelope of the second virtual-control rate.
    pub alpha4: T,
}

/// Front-to-back propagation of the trajectory envelopes.
///
/// `v_bar0` bounds the leader's velocity, `a_bar0` its acceleration
/// (max of |a0(0)| and the input bound). alpha4 of a vehicle uses its own
/// kappa1, so each row is completed before moving to the next.
pub fn propagate_chain<T: Real>(
    gains: &[VehicleGains<T>],
    delta: T,
    v_bar0: T,
    a_bar0: T,
) -> Vec<ChainRow<T>> {
    let two = real::<T>(2.0);
    let mut rows = Vec::with_capacity(gains.len());
    let mut v_prev = v_bar0;
    let mut a_prev = a_bar0;
    for g in gains {
        let v_bar = (two * g.h1 + g.k1) * delta + v_prev;
        let alpha3 = a_prev / g.h1 + (two * g.k1 + g.k1 * g.k1 / g.h1) * delta;
        let a_bar = (two * g.h2 + g.h1 * g.k2 + g.h1 * g.h1 + g.h1 / g.kappa1) * delta;
        let alpha4 = ((g.k1 * g.h1 * g.h1
            + g.k2 * g.h1 * g.h1
            + (g.h1 / (g.kappa1 * g.kappa1) - g.h1 * g.h1 * g.h1).abs()
            + (g.h1 * g.k2 * g.k2 - g.h1 * g.h1 * g.h1).abs())
            / g.h2
            + alpha3 / g.kappa1
            + two * g.k2)
            * delta;
        rows.push(ChainRow { v_bar, a_bar, alpha3, alpha4 });
        v_prev = v_bar;
        a_prev = a_bar;
    }
    rows
}

/// Worst-case initial observation error for one vehicle.
///
/// `tau_true` is the vehicle's actual inertial delay (known in simulation),
/// the interval bounds cover the remaining terms, `u0_mag` is |u(0)| and
/// `q_hat0_mag` is |q_hat(0)| = obs_gain * |a(0)| for the cold-started
/// observer.
#[allow(clippy::too_many_arguments)]
pub fn obs_error_bound<T: Real>(
    a0: T,
    v0: T,
    tau_true: T,
    u0_mag: T,
    q_hat0_mag: T,
    sigma1: T,
    bounds: &ModelBounds<T>,
    b_hat: T,
) -> T {
    let window = input_gain_window(bounds);
    a0.abs() / tau_true
        + bounds.air_drag.hi * v0 * v0 / (bounds.mass.lo * bounds.inertial_delay.lo)
        + gravity::<T>() * bounds.rolling.hi / bounds.inertial_delay.lo
        + gain_mismatch_abs(&window, b_hat) * u0_mag
        + sigma1
        + q_hat0_mag
}

/// Affine growth envelope of the unmodeled-dynamics rate:
/// `|q_dot| <= c1 + (c2 + cb*l)|e1| + cb*l*b_hat*|psi|`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateConstants<T> {
    pub c1: T,
    pub c2: T,
}

/// Computes the rate constants for one vehicle from the plant bounds, its
/// trajectory envelopes, its gains, and the disturbance-rate envelope.
/// With an exactly-known input gain (mismatch ratio zero) the entire
/// mismatch bracket of c1 drops out.
pub fn rate_constants<T: Real>(
    bounds: &ModelBounds<T>,
    cb: T,
    row: &ChainRow<T>,
    g: &VehicleGains<T>,
    sigma2: T,
    delta: T,
) -> RateConstants<T> {
    let two = real::<T>(2.0);
    let inv_tau = T::one() / bounds.inertial_delay.lo;
    let drag_rate = two * bounds.air_drag.hi * row.v_bar / bounds.mass.lo;
    let c2 = inv_tau + drag_rate + cb * g.k3;

    let h_ratio2 = g.h2 * g.h2 / (g.h1 * g.h1);
    let mismatch_bracket = (g.h2 * g.h2
        + (g.k2 + g.k3) * g.h2 * g.h2 / g.h1
        + (g.k3 * g.k3 - h_ratio2).abs()
        + (h_ratio2 - T::one() / (g.kappa2 * g.kappa2)).abs())
        * delta
        + row.alpha4 / g.kappa2;
    let c1 = (inv_tau + drag_rate) * (g.k3 + g.h2 / g.h1 + T::one() / g.kappa2) * g.h2 * delta
        + two * bounds.air_drag.hi * row.v_bar * row.a_bar
            / (bounds.mass.lo * bounds.inertial_delay.lo)
        + two * bounds.air_drag.hi * row.a_bar * row.a_bar / bounds.mass.lo
        + sigma2
        + cb * mismatch_bracket;
    RateConstants { c1, c2 }
}

/// Observer gain floor: the estimate contracts onto the bound `e1_bar` only
/// for `l > l_min`.
pub fn required_obs_gain<T: Real>(rc: &RateConstants<T>, cb: T, e1_bar: T) -> T {
    (rc.c1 + rc.c2 * e1_bar) / ((T::one() - cb) * e1_bar)
}

/// Trigger threshold dictated by the observation-error bound at observer
/// gain `l`. Positive exactly when `l` exceeds the observer gain floor; a
/// non-positive value means no admissible threshold exists at this `l`.
pub fn trigger_threshold_formula<T: Real>(
    l: T,
    rc: &RateConstants<T>,
    cb: T,
    e1_bar: T,
    b_hat: T,
) -> T {
    (e1_bar * (l - rc.c2 - cb * l) - rc.c1) / (l * b_hat * (T::one() + cb))
}

/// Zeno-exclusion quantities: the control-rate envelope `b_rate` with
/// `|u_dot| <= l |psi| + b_rate`, and the induced minimum inter-event time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ZenoBound<T> {
    pub b_rate: T,
    pub tau_min: T,
}

pub fn zeno_bound<T: Real>(
    g: &VehicleGains<T>,
    e1_bar: T,
    alpha4: T,
    delta: T,
    threshold: T,
) -> ZenoBound<T> {
    let l = g.obs_gain;
    let h_ratio2 = g.h2 * g.h2 / (g.h1 * g.h1);
    let b_rate = g.h2
        * ((l + g.k3) * e1_bar / g.h2
            + (g.h2
                + (g.k2 + g.k3) * g.h2 / g.h1
                + (g.k3 * g.k3 - h_ratio2).abs()
                + (h_ratio2 - T::one() / (g.kappa2 * g.kappa2)).abs()
                + alpha4 / g.kappa2)
                * delta)
        / g.b_hat;
    ZenoBound { b_rate, tau_min: threshold / (l * threshold + b_rate) }
}

/// Left side of the initial-surface condition:
/// `v_d(0)^2/h1^2 + (a(0) - k2 v_d(0))^2/h2^2`, to be at most delta^2.
pub fn initial_surface_lhs<T: Real>(v_d0: T, a0: T, g: &VehicleGains<T>) -> T {
    let z2_num = a0 - g.k2 * v_d0;
    v_d0 * v_d0 / (g.h1 * g.h1) + z2_num * z2_num / (g.h2 * g.h2)
}

/// Lower bounds on the surface gains: `(k1_min == k2_min, k3_min)`.
pub fn gain_lower_bounds<T: Real>(xi: T, epsilon: T, h2: T, e1_bar: T) -> (T, T) {
    let two = real::<T>(2.0);
    let three = real::<T>(3.0);
    let eps2 = epsilon * epsilon;
    let k12 = (three * xi + eps2) / (two * eps2);
    let k3 = (three * xi * xi * h2 * h2 + e1_bar * e1_bar * eps2)
        / (two * h2 * h2 * eps2 * xi);
    (k12, k3)
}

/// Upper bounds on the command-filter time constants
/// `(kappa1_max, kappa2_max)`.
pub fn filter_upper_bounds<T: Real>(
    xi: T,
    epsilon: T,
    g: &VehicleGains<T>,
    alpha3: T,
    alpha4: T,
) -> (T, T) {
    let two = real::<T>(2.0);
    let three = real::<T>(3.0);
    let eps2 = epsilon * epsilon;
    let h1_2 = g.h1 * g.h1;
    let h2_2 = g.h2 * g.h2;
    let kappa1 = two * xi * eps2 / (three * xi * xi + xi * eps2 * h1_2 + eps2 * alpha3 * alpha3);
    let kappa2 = two * xi * eps2 * h1_2
        / (three * xi * xi * h1_2 + xi * eps2 * h2_2 + h1_2 * eps2 * alpha4 * alpha4);
    (kappa1, kappa2)
}

/// Exponential decay rate of the surface energy: the minimum of the five
/// damping coefficients. Positive whenever the gain and filter conditions
/// hold with any slack.
pub fn convergence_rate<T: Real>(g: &VehicleGains<T>, e1_bar: T, alpha3: T, alpha4: T) -> T {
    let half = real::<T>(0.5);
    let two = real::<T>(2.0);
    let r1 = g.k1 - half;
    let r2 = g.k2 - half;
    let r3 = g.k3 - e1_bar * e1_bar / (two * g.h2 * g.h2 * g.xi);
    let r4 = T::one() / g.kappa1 - g.h1 * g.h1 * half - alpha3 * alpha3 / (two * g.xi);
    let r5 = T::one() / g.kappa2 - g.h2 * g.h2 / (two * g.h1 * g.h1)
        - alpha4 * alpha4 / (two * g.xi);
    r1.min(r2).min(r3).min(r4).min(r5)
}

/// Surface-energy envelope `V(0) e^{-2 rho t} + 3 xi (1 - e^{-2 rho t})/(4 rho)`.
pub fn lyapunov_envelope<T: Real>(v0: T, rho: T, xi: T, t: T) -> T {
    let two = real::<T>(2.0);
    let decay = (-two * rho * t).exp();
    v0 * decay + real::<T>(3.0) * xi * (T::one() - decay) / (real::<T>(4.0) * rho)
}

/// Admissible initial spacing error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum InitialErrorBound<T> {
    /// The initial-surface condition fails even at e(0) = 0.
    Infeasible,
    /// |e(0)| must stay at or below this value.
    Bounded(T),
    /// Every |e(0)| <= delta keeps the initial energy inside the envelope.
    UnconstrainedWithinDelta,
}

impl<T: Real> InitialErrorBound<T> {
    /// The numeric bound this outcome imposes on |e(0)| given the envelope
    /// delta.
    pub fn limit(&self, delta: T) -> Option<T> {
        match *self {
            InitialErrorBound::Infeasible => None,
            InitialErrorBound::Bounded(b) => Some(b),
            InitialErrorBound::UnconstrainedWithinDelta => Some(delta),
        }
    }
}

/// Solves the initial-energy quadratic `A0 e^2 + B0 e + C0 <= 0` for the
/// admissible |e(0)|.
pub fn admissible_initial_error<T: Real>(
    v_d0: T,
    a0: T,
    g: &VehicleGains<T>,
    delta: T,
) -> InitialErrorBound<T> {
    let two = real::<T>(2.0);
    let four = real::<T>(4.0);
    let h1_2 = g.h1 * g.h1;
    let h2_2 = g.h2 * g.h2;
    let cross = g.k1 * g.k2 + h1_2;
    let z2_num = a0 - g.k2 * v_d0;
    let a_q = T::one() + g.k1 * g.k1 / h1_2 + cross * cross / h2_2;
    let b_q = two * g.k1 * v_d0 / h1_2 - two * z2_num * cross / h2_2;
    let c_q = v_d0 * v_d0 / h1_2 + z2_num * z2_num / h2_2 - delta * delta;
    if c_q > T::zero() {
        return InitialErrorBound::Infeasible;
    }
    let disc = b_q * b_q - four * a_q * c_q;
    // c_q <= 0 makes the discriminant nonnegative up to rounding.
    let sq = disc.max(T::zero()).sqrt();
    let r1 = (-b_q + sq) / (two * a_q);
    let r2 = (-b_q - sq) / (two * a_q);
    let iota = r1.abs().min(r2.abs());
    if iota >= delta {
        InitialErrorBound::UnconstrainedWithinDelta
    } else {
        InitialErrorBound::Bounded(iota)
    }
}

// ---------------------------------------------------------------------------
// Whole-platoon verification
// ---------------------------------------------------------------------------

/// Per-vehicle verification inputs beyond the gain set.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VehicleContext<T> {
    /// True inertial delay of this vehicle.
    pub tau_true: T,
    /// Initial own velocity and acceleration.
    pub v0: T,
    pub a0: T,
    /// Initial velocity difference to the preceding vehicle and initial
    /// spacing error.
    pub v_d0: T,
    pub e0: T,
    /// Disturbance envelopes.
    pub sigma1: T,
    pub sigma2: T,
    /// Control input the controller produces at t = 0.
    pub u0: T,
    /// Observer estimate at t = 0 (obs_gain * a0 for a cold start).
    pub q_hat0: T,
    /// Trigger threshold configured for the run, if any; otherwise the
    /// formula value is used.
    pub threshold: Option<T>,
}

/// Verification inputs for the whole platoon.
#[derive(Debug, Clone, PartialEq)]
pub struct PlatoonContext<T> {
    pub bounds: ModelBounds<T>,
    pub gains: GainSet<T>,
    /// Leader velocity envelope.
    pub v_bar0: T,
    /// Leader acceleration envelope: max(|a0(0)|, input bound).
    pub a_bar0: T,
    pub vehicles: Vec<VehicleContext<T>>,
}

/// Everything derived for one vehicle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VehicleDerived<T> {
    pub chain: ChainRow<T>,
    pub e1_bar: T,
    pub rate: RateConstants<T>,
    pub l_min: T,
    /// Threshold the observation-error analysis dictates at the configured
    /// observer gain; non-positive means infeasible there.
    pub threshold_formula: T,
    /// Threshold the simulation will actually use, when one exists.
    pub sim_threshold: Option<T>,
    pub zeno: Option<ZenoBound<T>>,
    pub surface_lhs: T,
    pub k12_min: T,
    pub k3_min: T,
    pub kappa1_max: T,
    pub kappa2_max: T,
    pub iota: InitialErrorBound<T>,
    pub rho: T,
}

/// Derived constants for the platoon.
#[derive(Debug, Clone, PartialEq)]
pub struct DerivedBounds<T> {
    pub window: BWindow<T>,
    /// Gain-mismatch ratio per vehicle (b_hat may differ along the platoon).
    pub cb: Vec<T>,
    pub vehicles: Vec<VehicleDerived<T>>,
}

/// How a reported value must relate to its bound.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Relation {
    /// actual <= bound
    AtMost,
    /// actual >= bound
    AtLeast,
    /// actual > bound
    Above,
}

/// One named sufficient-condition check.
#[derive(Debug, Clone, PartialEq)]
pub struct ConditionCheck<T> {
    pub name: &'static str,
    /// Vehicle index (1-based), or None for platoon-level checks.
    pub vehicle: Option<usize>,
    pub bound: T,
    pub actual: T,
    pub relation: Relation,
    pub pass: bool,
    /// Relative slack, positive iff the check passes:
    /// (bound - actual)/|bound| for AtMost, (actual - bound)/|bound| for the
    /// others; absolute slack when the bound is zero.
    pub margin: T,
}

impl<T: Real> ConditionCheck<T> {
    fn new(name: &'static str, vehicle: Option<usize>, bound: T, actual: T, relation: Relation) -> Self {
        let pass = match relation {
            Relation::AtMost => actual <= bound,
            Relation::AtLeast => actual >= bound,
            Relation::Above => actual > bound,
        };
        let raw = match relation {
            Relation::AtMost => bound - actual,
            Relation::AtLeast | Relation::Above => actual - bound,
        };
        let margin = if bound == T::zero() { raw } else { raw / bound.abs() };
        Self { name, vehicle, bound, actual, relation, pass, margin }
    }
}

/// Full verification outcome: derived constants plus every condition check.
#[derive(Debug, Clone, PartialEq)]
pub struct VerificationReport<T> {
    pub derived: DerivedBounds<T>,
    pub checks: Vec<ConditionCheck<T>>,
    pub all_pass: bool,
}

impl<T: Real> VerificationReport<T> {
    pub fn failed(&self) -> impl Iterator<Item = &ConditionCheck<T>> {
        self.checks.iter().filter(|c| !c.pass)
    }
}

impl<T: Real> fmt::Display for VerificationReport<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for c in &self.checks {
            let veh = match c.vehicle {
                Some(i) => format!("veh {i}"),
                None => "platoon".to_string(),
            };
            let rel = match c.relation {
                Relation::AtMost => "<=",
                Relation::AtLeast => ">=",
                Relation::Above => "> ",
            };
            writeln!(
                f,
                "{:<9} {:<22} actual {:>14.6e} {} bound {:>14.6e}  margin {:>+10.3e}  {}",
                veh,
                c.name,
                c.actual,
                rel,
                c.bound,
                c.margin,
                if c.pass { "PASS" } else { "FAIL" },
            )?;
        }
        let failed = self.checks.iter().filter(|c| !c.pass).count();
        if failed == 0 {
            writeln!(f, "all {} conditions hold", self.checks.len())
        } else {
            writeln!(f, "{failed} of {} conditions fail", self.checks.len())
        }
    }
}

/// Derives every constant for the platoon without judging it.
pub fn derive_all<T: Real>(ctx: &PlatoonContext<T>) -> DerivedBounds<T> {
    let window = input_gain_window(&ctx.bounds);
    let gains = &ctx.gains.vehicles;
    let delta = ctx.gains.delta;
    let epsilon = ctx.gains.epsilon;
    let chain = propagate_chain(gains, delta, ctx.v_bar0, ctx.a_bar0);
    let cb: Vec<T> = gains.iter().map(|g| gain_mismatch_ratio(&window, g.b_hat)).collect();

    let mut vehicles = Vec::with_capacity(gains.len());
    for (i, g) in gains.iter().enumerate() {
        let vc = &ctx.vehicles[i];
        let row = chain[i];
        let e1_bar = obs_error_bound(
            vc.a0,
            vc.v0,
            vc.tau_true,
            vc.u0.abs(),
            vc.q_hat0.abs(),
            vc.sigma1,
            &ctx.bounds,
            g.b_hat,
        );
        let rate = rate_constants(&ctx.bounds, cb[i], &row, g, vc.sigma2, delta);
        let l_min = required_obs_gain(&rate, cb[i], e1_bar);
        let threshold_formula = trigger_threshold_formula(g.obs_gain, &rate, cb[i], e1_bar, g.b_hat);
        let sim_threshold = vc
            .threshold
            .or(if threshold_formula > T::zero() { Some(threshold_formula) } else { None });
        let zeno = sim_threshold.map(|m| zeno_bound(g, e1_bar, row.alpha4, delta, m));
        let (k12_min, k3_min) = gain_lower_bounds(g.xi, epsilon, g.h2, e1_bar);
        let (kappa1_max, kappa2_max) = filter_upper_bounds(g.xi, epsilon, g, row.alpha3, row.alpha4);
        let iota = admissible_initial_error(vc.v_d0, vc.a0, g, delta);
        let rho = convergence_rate(g, e1_bar, row.alpha3, row.alpha4);
        vehicles.push(VehicleDerived {
            chain: row,
            e1_bar,
            rate,
            l_min,
            threshold_formula,
            sim_threshold,
            zeno,
            surface_lhs: initial_surface_lhs(vc.v_d0, vc.a0, g),
            k12_min,
            k3_min,
            kappa1_max,
            kappa2_max,
            iota,
            rho,
        });
    }
    DerivedBounds { window, cb, vehicles }
}

/// Derives all constants and evaluates every sufficient condition.
pub fn verify_all<T: Real>(ctx: &PlatoonContext<T>) -> VerificationReport<T> {
    let derived = derive_all(ctx);
    let delta = ctx.gains.delta;
    let mut checks = Vec::new();
    for (i, g) in ctx.gains.vehicles.iter().enumerate() {
        let veh = Some(i + 1);
        let d = &derived.vehicles[i];
        let vc = &ctx.vehicles[i];

        // Window membership as two directed checks on b_hat.
        checks.push(ConditionCheck::new(
            "input-gain-low",
            veh,
            derived.window.lower_edge,
            g.b_hat,
            Relation::Above,
        ));
        checks.push(ConditionCheck::new(
            "input-gain-high",
            veh,
            derived.window.b_hi,
            g.b_hat,
            Relation::AtMost,
        ));
        checks.push(ConditionCheck::new(
            "initial-surface",
            veh,
            delta * delta,
            d.surface_lhs,
            Relation::AtMost,
        ));
        let iota_bound = d.iota.limit(delta).unwrap_or(T::zero());
        checks.push(ConditionCheck::new(
            "initial-error",
            veh,
            iota_bound,
            vc.e0.abs(),
            Relation::AtMost,
        ));
        checks.push(ConditionCheck::new("gain-k1", veh, d.k12_min, g.k1, Relation::AtLeast));
        checks.push(ConditionCheck::new("gain-k2", veh, d.k12_min, g.k2, Relation::AtLeast));
        checks.push(ConditionCheck::new("gain-k3", veh, d.k3_min, g.k3, Relation::AtLeast));
        checks.push(ConditionCheck::new(
            "filter-kappa1",
            veh,
            d.kappa1_max,
            g.kappa1,
            Relation::AtMost,
        ));
        checks.push(ConditionCheck::new(
            "filter-kappa2",
            veh,
            d.kappa2_max,
            g.kappa2,
            Relation::AtMost,
        ));
        checks.push(ConditionCheck::new("observer-gain", veh, d.l_min, g.obs_gain, Relation::Above));
        // The configured threshold (or the formula value when none is
        // configured) must be positive and no larger than the formula value:
        // a smaller threshold triggers more often and only tightens the
        // observation-error bound.
        let m_used = vc.threshold.unwrap_or(d.threshold_formula);
        checks.push(ConditionCheck::new(
            "trigger-threshold-pos",
            veh,
            T::zero(),
            m_used,
            Relation::Above,
        ));
        checks.push(ConditionCheck::new(
            "trigger-threshold",
            veh,
            d.threshold_formula,
            m_used,
            Relation::AtMost,
        ));
        checks.push(ConditionCheck::new("decay-rate", veh, T::zero(), d.rho, Relation::Above));
    }
    let all_pass = checks.iter().all(|c| c.pass);
    VerificationReport { derived, checks, all_pass }
}

// ---------------------------------------------------------------------------
// Suggest mode
// ---------------------------------------------------------------------------

/// Inputs for gain synthesis: the scenario without its gain set.
#[derive(Debug, Clone, PartialEq)]
pub struct SuggestInputs<T> {
    pub bounds: ModelBounds<T>,
    pub delta: T,
    pub epsilon: T,
    pub v_bar0: T,
    pub a_bar0: T,
    /// Starting values for the virtual-control scalings; raised per vehicle
    /// if the initial-surface condition demands it.
    pub h1_seed: T,
    pub h2_seed: T,
    pub vehicles: Vec<SuggestVehicle<T>>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SuggestVehicle<T> {
    pub tau_true: T,
    pub v0: T,
    pub a0: T,
    pub v_d0: T,
    pub e0: T,
    pub sigma1: T,
    pub sigma2: T,
}

/// Synthesized gain set plus the trigger thresholds the analysis dictates.
#[derive(Debug, Clone, PartialEq)]
pub struct SuggestOutcome<T> {
    pub gains: GainSet<T>,
    pub thresholds: Vec<T>,
}

/// Multiplicative slack applied to every bound the synthesis sits on.
const SUGGEST_MARGIN: f64 = 1.05;
/// Observer gain is placed this far above its floor.
const OBS_GAIN_FACTOR: f64 = 1.25;

/// Proposes a gain set that passes `verify_all` on the same inputs.
///
/// Works front to back; for each vehicle a one-dimensional search over the
/// analysis constant xi evaluates the full derivation chain and keeps the
/// feasible candidate with the least stiffness (max of observer gain and
/// filter rates), which is what bounds the simulation step size.
pub fn suggest<T: Real>(inp: &SuggestInputs<T>) -> Result<SuggestOutcome<T>, SynthesisError> {
    let margin = real::<T>(SUGGEST_MARGIN);
    let window = input_gain_window(&inp.bounds);
    // Mismatch-minimizing estimate: midpoint of the true-gain interval,
    // pushed inside the admissible window if needed.
    let mid = (window.b_lo + window.b_hi) / real::<T>(2.0);
    let b_hat = if window.contains(mid) {
        mid
    } else {
        (window.lower_edge + window.b_hi) / real::<T>(2.0)
    };
    let cb = gain_mismatch_ratio(&window, b_hat);
    let mismatch_abs = gain_mismatch_abs(&window, b_hat);

    let mut per_vehicle: Vec<VehicleGains<T>> = Vec::new();
    let mut thresholds = Vec::new();
    let mut a_bar_prev = inp.a_bar0;
    let mut v_bar_prev = inp.v_bar0;

    for (idx, vc) in inp.vehicles.iter().enumerate() {
        let mut best: Option<(T, VehicleGains<T>, T, ChainRow<T>)> = None;
        // log-spaced xi sweep over a wide range around epsilon^2.
        let eps2 = inp.epsilon * inp.epsilon;
        for step in 0..120 {
            let exp = -4.0 + 8.0 * (step as f64) / 119.0;
            let xi = eps2 * real::<T>(10f64.powf(exp));
            if let Some(cand) = synthesize_vehicle(
                inp, vc, xi, b_hat, cb, mismatch_abs, a_bar_prev, v_bar_prev, margin,
            ) {
                let better = match &best {
                    Some((score, ..)) => cand.0 < *score,
                    None => true,
                };
                if better {
                    best = Some(cand);
                }
            }
        }
        let (_, gains, threshold, row) = best.ok_or_else(|| {
            SynthesisError::NoFeasibleGains(format!(
                "vehicle {}: no xi in the sweep satisfies every condition",
                idx + 1
            ))
        })?;
        a_bar_prev = row.a_bar;
        v_bar_prev = row.v_bar;
        per_vehicle.push(gains);
        thresholds.push(threshold);
    }

    Ok(SuggestOutcome {
        gains: GainSet { vehicles: per_vehicle, delta: inp.delta, epsilon: inp.epsilon },
        thresholds,
    })
}

/// Evaluates one (vehicle, xi) candidate; returns (stiffness score, gains,
/// threshold, chain row) when every condition holds.
#[allow(clippy::too_many_arguments)]
fn synthesize_vehicle<T: Real>(
    inp: &SuggestInputs<T>,
    vc: &SuggestVehicle<T>,
    xi: T,
    b_hat: T,
    cb: T,
    mismatch_abs: T,
    a_bar_prev: T,
    v_bar_prev: T,
    margin: T,
) -> Option<(T, VehicleGains<T>, T, ChainRow<T>)> {
    let two = real::<T>(2.0);
    let delta = inp.delta;
    let epsilon = inp.epsilon;
    let sqrt2 = two.sqrt();

    let (k12_min, _) = gain_lower_bounds(xi, epsilon, T::one(), T::zero());
    let k1 = margin * k12_min;
    let k2 = k1;

    // Scalings: keep the seeds unless the initial-surface condition needs
    // more headroom (each term is held below delta^2/2).
    let h1 = inp.h1_seed.max(sqrt2 * vc.v_d0.abs() / delta * margin);
    let h2 = inp
        .h2_seed
        .max(sqrt2 * (vc.a0 - k2 * vc.v_d0).abs() / delta * margin);

    let alpha3 = a_bar_prev / h1 + (two * k1 + k1 * k1 / h1) * delta;
    let mut g = VehicleGains {
        k1,
        k2,
        k3: T::zero(),
        h1,
        h2,
        kappa1: T::zero(),
        kappa2: T::zero(),
        obs_gain: T::zero(),
        b_hat,
        xi,
    };
    let (kappa1_max, _) = filter_upper_bounds(xi, epsilon, &g, alpha3, T::zero());
    g.kappa1 = kappa1_max / margin;
    let a_bar = (two * h2 + h1 * k2 + h1 * h1 + h1 / g.kappa1) * delta;
    let alpha4 = ((k1 * h1 * h1
        + k2 * h1 * h1
        + (h1 / (g.kappa1 * g.kappa1) - h1 * h1 * h1).abs()
        + (h1 * k2 * k2 - h1 * h1 * h1).abs())
        / h2
        + alpha3 / g.kappa1
        + two * k2)
        * delta;
    let (_, kappa2_max) = filter_upper_bounds(xi, epsilon, &g, alpha3, alpha4);
    g.kappa2 = kappa2_max / margin;
    let row = ChainRow { v_bar: (two * h1 + k1) * delta + v_bar_prev, a_bar, alpha3, alpha4 };

    // Joint fixed point of (k3, obs_gain): the observation-error bound
    // depends on u(0) (linear in k3) and on q_hat(0) = obs_gain * a(0).
    let (z1_0, z2_0) = initial_surfaces(vc.e0, vc.v_d0, vc.a0, &g);
    let e1_base = vc.a0.abs() / vc.tau_true
        + inp.bounds.air_drag.hi * vc.v0 * vc.v0
            / (inp.bounds.mass.lo * inp.bounds.inertial_delay.lo)
        + gravity::<T>() * inp.bounds.rolling.hi / inp.bounds.inertial_delay.lo
        + vc.sigma1;
    let mut k3 = margin * gain_lower_bounds(xi, epsilon, h2, e1_base).1;
    let mut l = T::zero();
    let mut converged = false;
    for _ in 0..200 {
        let q_hat0 = l * vc.a0;
        let u0 = h2 * (-q_hat0 / h2 - k3 * z2_0 - h2 * z1_0 / h1) / b_hat;
        let e1_bar = e1_base + mismatch_abs * u0.abs() + q_hat0.abs();
        let k3_new = margin * gain_lower_bounds(xi, epsilon, h2, e1_bar).1;
        g.k3 = k3_new;
        let rate = rate_constants(&inp.bounds, cb, &row, &g, vc.sigma2, delta);
        let l_new = real::<T>(OBS_GAIN_FACTOR) * required_obs_gain(&rate, cb, e1_bar);
        if !k3_new.is_finite() || !l_new.is_finite() || l_new <= T::zero() {
            return None;
        }
        let close = (k3_new - k3).abs() <= real::<T>(1e-12) * k3_new.abs()
            && (l_new - l).abs() <= real::<T>(1e-12) * l_new.abs();
        k3 = k3_new;
        l = l_new;
        if close {
            converged = true;
            break;
        }
    }
    if !converged {
        return None;
    }
    g.k3 = k3;
    g.obs_gain = l;

    // Final consistent constants at the fixed point.
    let q_hat0 = l * vc.a0;
    let u0 = h2 * (-q_hat0 / h2 - k3 * z2_0 - h2 * z1_0 / h1) / b_hat;
    let e1_bar = e1_base + mismatch_abs * u0.abs() + q_hat0.abs();
    let rate = rate_constants(&inp.bounds, cb, &row, &g, vc.sigma2, delta);
    let threshold = trigger_threshold_formula(l, &rate, cb, e1_bar, b_hat);
    if threshold <= T::zero() {
        return None;
    }

    // Admissibility of the scenario's own initial error.
    match admissible_initial_error(vc.v_d0, vc.a0, &g, delta) {
        InitialErrorBound::Infeasible => return None,
        InitialErrorBound::Bounded(iota) if vc.e0.abs() > iota => return None,
        _ => {}
    }
    if initial_surface_lhs(vc.v_d0, vc.a0, &g) > delta * delta {
        return None;
    }
    if convergence_rate(&g, e1_bar, alpha3, alpha4) <= T::zero() {
        return None;
    }

    let score = l.max(T::one() / g.kappa1).max(T::one() / g.kappa2);
    Some((score, g, threshold, row))
}
