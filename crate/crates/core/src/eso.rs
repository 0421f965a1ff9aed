//! Reduced-order extended state observer with an event-triggered input
//! channel.
//!
//! The observer reconstructs the lumped unmodeled dynamics `q` of one
//! follower from its measured acceleration and the last transmitted control
//! value `gamma`. Only `gamma` travels over the network: it is refreshed to
//! the current control input whenever the deviation `psi = gamma - u` reaches
//! the trigger threshold, and held constant in between.

use crate::num::Real;

/// Observer configuration for one vehicle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EsoParams<T> {
    /// Observer gain; also the error-decay rate of the estimate.
    pub obs_gain: T,
    /// Input gain estimate used by both the observer and the controller.
    pub b_hat: T,
    /// Event-trigger threshold on |gamma - u|. Strictly positive.
    pub threshold: T,
}

/// Discrete observer state: the internal integrator plus the held input and
/// trigger bookkeeping.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EsoState<T> {
    /// Internal observer variable; estimate is `q_hat = s + obs_gain * a`.
    pub s: T,
    /// Held control value, constant between trigger events.
    pub gamma: T,
    /// Time of the most recent trigger event.
    pub last_trigger_t: T,
    /// Number of trigger events so far (initialization counts as the first).
    pub trigger_count: u64,
}

impl<T: Real> EsoState<T> {
    /// Starts the observer: internal state at zero, held value seeded with
    /// the initial control input. Seeding counts as the first trigger at
    /// t = 0.
    pub fn init(u0: T) -> Self {
        Self { s: T::zero(), gamma: u0, last_trigger_t: T::zero(), trigger_count: 1 }
    }

    /// Current deviation between the held and the actual control value.
    pub fn psi(&self, u_now: T) -> T {
        self.gamma - u_now
    }
}

/// Derivative of the internal observer variable.
pub fn eso_deriv<T: Real>(s: T, a: T, gamma: T, params: &EsoParams<T>) -> T {
    let l = params.obs_gain;
    -l * s - l * l * a - l * params.b_hat * gamma
}

/// Estimate of the unmodeled dynamics.
pub fn estimate_q<T: Real>(s: T, a: T, obs_gain: T) -> T {
    s + obs_gain * a
}

/// Observation error `e1 = q - q_hat`.
pub fn observation_error<T: Real>(q_true: T, q_hat: T) -> T {
    q_true - q_hat
}

/// Event-trigger check, run once per integration step after the controller
/// update. Fires when |gamma - u| reaches the threshold (inclusive); firing
/// transmits the current input, so psi resets to zero.
///
/// Returns true when an event fired at time `t`.
pub fn trigger_check<T: Real>(state: &mut EsoState<T>, u_now: T, t: T, params: &EsoParams<T>) -> bool {
    debug_assert!(t >= state.last_trigger_t);
    if state.psi(u_now).abs() >= params.threshold {
        state.gamma = u_now;
        state.last_trigger_t = t;
        state.trigger_count += 1;
        true
    } else {
        false
    }
}
