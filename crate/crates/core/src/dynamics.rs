//! Longitudinal vehicle models.
//!
//! Every vehicle is a third-order chain: position, velocity, acceleration,
//! with a first-order engine lag on the acceleration channel. Followers add
//! quadratic air drag, rolling resistance, and a time-varying external
//! disturbance. The follower acceleration channel splits into a known input
//! gain estimate `b_hat` and a lumped unmodeled term `q`, which is what the
//! observer estimates at runtime:
//!
//! `a_dot = q + b_hat * u`

use serde::{Deserialize, Serialize};

use crate::num::{gravity, real, Real};

/// Position / velocity / acceleration triple. Also used for the derivative
/// of such a triple.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct KinematicState<T> {
    pub p: T,
    pub v: T,
    pub a: T,
}

impl<T: Real> KinematicState<T> {
    pub fn new(p: T, v: T, a: T) -> Self {
        Self { p, v, a }
    }

    pub fn is_finite(&self) -> bool {
        self.p.is_finite() && self.v.is_finite() && self.a.is_finite()
    }
}

/// Physical parameters of one follower vehicle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VehicleParams<T> {
    /// Mass in kg.
    pub mass: T,
    /// Air drag coefficient (force = air_drag * v^2).
    pub air_drag: T,
    /// Rolling resistance coefficient (dimensionless).
    pub rolling: T,
    /// Engine/brake inertial delay in seconds.
    pub inertial_delay: T,
}

/// Closed interval, used for admissible parameter ranges.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval<T> {
    pub lo: T,
    pub hi: T,
}

impl<T: Real> Interval<T> {
    pub fn new(lo: T, hi: T) -> Self {
        Self { lo, hi }
    }

    pub fn contains(&self, x: T) -> bool {
        self.lo <= x && x <= self.hi
    }

    pub fn is_degenerate(&self) -> bool {
        self.lo == self.hi
    }
}

/// Interval bounds on the follower parameters; the basis of every robust
/// constant the verifier derives.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelBounds<T> {
    pub mass: Interval<T>,
    pub air_drag: Interval<T>,
    pub rolling: Interval<T>,
    pub inertial_delay: Interval<T>,
}

impl<T: Real> ModelBounds<T> {
    pub fn contains(&self, p: &VehicleParams<T>) -> bool {
        self.mass.contains(p.mass)
            && self.air_drag.contains(p.air_drag)
            && self.rolling.contains(p.rolling)
            && self.inertial_delay.contains(p.inertial_delay)
    }
}

/// Two-term external disturbance on the acceleration channel:
/// `sigma(t) = exp_amp * exp(-exp_rate * t) + sin_amp * sin(sin_freq * t)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DisturbanceParams<T> {
    pub exp_amp: T,
    pub exp_rate: T,
    pub sin_amp: T,
    pub sin_freq: T,
}

/// Disturbance value and its analytic time derivative at one instant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DisturbanceSample<T> {
    pub sigma: T,
    pub sigma_dot: T,
}

impl<T: Real> DisturbanceParams<T> {
    pub fn zero() -> Self {
        Self { exp_amp: T::zero(), exp_rate: T::zero(), sin_amp: T::zero(), sin_freq: T::zero() }
    }

    /// Evaluates sigma and sigma_dot analytically; no finite differencing.
    pub fn sample(&self, t: T) -> DisturbanceSample<T> {
        let decay = (-self.exp_rate * t).exp();
        let phase = self.sin_freq * t;
        DisturbanceSample {
            sigma: self.exp_amp * decay + self.sin_amp * phase.sin(),
            sigma_dot: -self.exp_amp * self.exp_rate * decay
                + self.sin_amp * self.sin_freq * phase.cos(),
        }
    }

    /// Tight envelope on |sigma|: both terms at their peaks.
    pub fn sigma_bound(&self) -> T {
        self.exp_amp.abs() + self.sin_amp.abs()
    }

    /// Tight envelope on |sigma_dot|.
    pub fn sigma_dot_bound(&self) -> T {
        (self.exp_amp * self.exp_rate).abs() + (self.sin_amp * self.sin_freq).abs()
    }
}

/// Leader dynamics: the commanded acceleration u0 acts through a first-order
/// lag with time constant `tau0`.
pub fn leader_deriv<T: Real>(state: &KinematicState<T>, u0: T, tau0: T) -> KinematicState<T> {
    KinematicState { p: state.v, v: state.a, a: (u0 - state.a) / tau0 }
}

/// Follower dynamics. `u` is the engine/brake input in force-lag units,
/// `sigma` the external disturbance on the acceleration channel.
pub fn follower_deriv<T: Real>(
    state: &KinematicState<T>,
    u: T,
    sigma: T,
    params: &VehicleParams<T>,
) -> KinematicState<T> {
    let VehicleParams { mass: m, air_drag: c, rolling: mu, inertial_delay: tau } = *params;
    let g = gravity::<T>();
    let two = real::<T>(2.0);
    let a_dot = -state.a / tau
        - c * state.v * state.v / (m * tau)
        - g * mu / tau
        - two * c * state.v * state.a / m
        + u / (m * tau)
        + sigma;
    KinematicState { p: state.v, v: state.a, a: a_dot }
}

/// True input gain of the acceleration channel: b = 1 / (m * tau).
pub fn control_gain<T: Real>(params: &VehicleParams<T>) -> T {
    T::one() / (params.mass * params.inertial_delay)
}

/// Lumped unmodeled dynamics q, defined so that `a_dot = q + b_hat * u`
/// holds identically for the follower model. Includes the input-gain
/// mismatch `(b - b_hat) * u` and the disturbance.
pub fn unmodeled_q<T: Real>(
    state: &KinematicState<T>,
    u: T,
    sigma: T,
    params: &VehicleParams<T>,
    b_hat: T,
) -> T {
    let VehicleParams { mass: m, air_drag: c, rolling: mu, inertial_delay: tau } = *params;
    let g = gravity::<T>();
    let two = real::<T>(2.0);
    let b = control_gain(params);
    -state.a / tau - c * state.v * state.v / (m * tau) - g * mu / tau
        - two * c * state.v * state.a / m
        + (b - b_hat) * u
        + sigma
}

/// Analytic time derivative of `q` along a trajectory with consistent
/// kinematics (v_dot = a). Diagnostic only; the running system never needs it.
pub fn unmodeled_w<T: Real>(
    state: &KinematicState<T>,
    a_dot: T,
    u_dot: T,
    sigma_dot: T,
    params: &VehicleParams<T>,
    b_hat: T,
) -> T {
    let VehicleParams { mass: m, air_drag: c, inertial_delay: tau, .. } = *params;
    let two = real::<T>(2.0);
    let b = control_gain(params);
    -a_dot / tau - two * c * state.v * state.a / (m * tau) - two * c * state.a * state.a / m
        - two * c * state.v * a_dot / m
        + (b - b_hat) * u_dot
        + sigma_dot
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn table_params() -> VehicleParams<f64> {
        VehicleParams { mass: 1500.0, air_drag: 0.4, rolling: 0.05, inertial_delay: 0.2 }
    }

    #[test]
    fn leader_deriv_constant_velocity() {
        let d = leader_deriv(&KinematicState::new(80.0, 10.0, 0.0), 0.0, 0.3);
        assert_eq!((d.p, d.v, d.a), (10.0, 0.0, 0.0));
    }

    #[test]
    fn leader_deriv_lag_decay_and_drive() {
        let d = leader_deriv(&KinematicState::new(0.0, 5.0, 2.0), 0.0, 0.5);
        assert_relative_eq!(d.a, -4.0);
        let d = leader_deriv(&KinematicState::new(0.0, 5.0, 0.0), 1.0, 0.4);
        assert_relative_eq!(d.a, 2.5);
    }

    #[test]
    fn follower_deriv_frozen_oracle() {
        // Hand-computed: -0.4*100/(1500*0.2) - 9.81*0.05/0.2 = -2.5858333...
        let d = follower_deriv(&KinematicState::new(71.0, 10.0, 0.0), 0.0, 0.0, &table_params());
        assert_eq!(d.p, 10.0);
        assert_eq!(d.v, 0.0);
        assert_relative_eq!(d.a, -(0.4 * 100.0) / 300.0 - 9.81 * 0.05 / 0.2, max_relative = 1e-15);
        assert_relative_eq!(d.a, -2.585_833_333_333_333_5, max_relative = 1e-14);
    }

    #[test]
    fn control_gain_frozen() {
        assert_relative_eq!(control_gain(&table_params()), 1.0 / 300.0, max_relative = 1e-15);
    }

    #[test]
    fn disturbance_frozen_oracles() {
        let dp = DisturbanceParams { exp_amp: 10.0, exp_rate: 0.2, sin_amp: 1.0, sin_freq: 5.0 };
        let s0 = dp.sample(0.0);
        assert_relative_eq!(s0.sigma, 10.0, max_relative = 1e-15);
        assert_relative_eq!(s0.sigma_dot, -2.0 + 5.0, max_relative = 1e-15);
        let s1 = dp.sample(1.0);
        // 10*exp(-0.2) + sin(5)
        assert_relative_eq!(s1.sigma, 7.228_383_256_116_681, max_relative = 1e-14);
        assert_relative_eq!(s1.sigma_dot, -2.0 * (-0.2f64).exp() + 5.0 * 5.0f64.cos(), max_relative = 1e-14);
    }

    #[test]
    fn disturbance_bounds_hold_on_dense_sampling() {
        // 1e4 deterministic pseudo-random (t, params) samples.
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for _ in 0..10_000 {
            let dp = DisturbanceParams::<f64> {
                exp_amp: rng.gen_range(0.0..20.0),
                exp_rate: rng.gen_range(0.0..0.5),
                sin_amp: rng.gen_range(0.0..1.0),
                sin_freq: rng.gen_range(0.0..8.0),
            };
            let t = rng.gen_range(0.0..100.0);
            let s = dp.sample(t);
            assert!(s.sigma.abs() <= dp.sigma_bound() * (1.0 + 1e-12));
            assert!(s.sigma_dot.abs() <= dp.sigma_dot_bound() * (1.0 + 1e-12));
        }
    }

    #[test]
    fn unmodeled_w_matches_central_difference_of_q() {
        // Synthetic smooth trajectory with consistent kinematics:
        // v = 2 + sin t, a = cos t, a_dot = -sin t, u = 3 sin 2t.
        let params = table_params();
        let b_hat = 0.003;
        let dp = DisturbanceParams { exp_amp: 5.0, exp_rate: 0.3, sin_amp: 0.8, sin_freq: 6.0 };
        let state_at = |t: f64| KinematicState::new(0.0, 2.0 + t.sin(), t.cos());
        let u_at = |t: f64| 3.0 * (2.0 * t).sin();
        let q_at = |t: f64| unmodeled_q(&state_at(t), u_at(t), dp.sample(t).sigma, &params, b_hat);
        let h = 1e-5;
        for &t in &[0.3, 0.9, 2.7] {
            let w = unmodeled_w(
                &state_at(t),
                -t.sin(),
                6.0 * (2.0 * t).cos(),
                dp.sample(t).sigma_dot,
                &params,
                b_hat,
            );
            let fd = (q_at(t + h) - q_at(t - h)) / (2.0 * h);
            assert_relative_eq!(w, fd, max_relative = 1e-7);
        }
    }

    #[test]
    fn free_particle_velocity_constant_without_forces() {
        // u = 0, sigma = 0, c = 0, mu = 0, a(0) = 0: acceleration stays zero,
        // velocity stays constant under explicit integration.
        let params = VehicleParams { mass: 1600.0, air_drag: 0.0, rolling: 0.0, inertial_delay: 0.3 };
        let mut s = KinematicState::new(0.0, 12.0, 0.0);
        let dt = 1e-3;
        for _ in 0..1000 {
            // Plain RK4 over the isolated follower model.
            let f = |st: &KinematicState<f64>| follower_deriv(st, 0.0, 0.0, &params);
            let k1 = f(&s);
            let mid1 = KinematicState::new(
                s.p + 0.5 * dt * k1.p,
                s.v + 0.5 * dt * k1.v,
                s.a + 0.5 * dt * k1.a,
            );
            let k2 = f(&mid1);
            let mid2 = KinematicState::new(
                s.p + 0.5 * dt * k2.p,
                s.v + 0.5 * dt * k2.v,
                s.a + 0.5 * dt * k2.a,
            );
            let k3 = f(&mid2);
            let end = KinematicState::new(s.p + dt * k3.p, s.v + dt * k3.v, s.a + dt * k3.a);
            let k4 = f(&end);
            s = KinematicState::new(
                s.p + dt / 6.0 * (k1.p + 2.0 * k2.p + 2.0 * k3.p + k4.p),
                s.v + dt / 6.0 * (k1.v + 2.0 * k2.v + 2.0 * k3.v + k4.v),
                s.a + dt / 6.0 * (k1.a + 2.0 * k2.a + 2.0 * k3.a + k4.a),
            );
        }
        assert_relative_eq!(s.v, 12.0, max_relative = 1e-12);
        assert_eq!(s.a, 0.0);
    }

    proptest! {
        /// The decomposition a_dot = q + b_hat*u is an identity of the model,
        /// not an approximation.
        #[test]
        fn decomposition_identity(
            v in -40.0..40.0f64,
            a in -5.0..5.0f64,
            u in -1e5..1e5f64,
            sigma in -25.0..25.0f64,
            m in 1500.0..2000.0f64,
            c in 0.2..0.4f64,
            mu in 0.02..0.05f64,
            tau in 0.2..0.4f64,
            b_hat in 1e-4..1e-2f64,
        ) {
            let params = VehicleParams { mass: m, air_drag: c, rolling: mu, inertial_delay: tau };
            let st = KinematicState::new(0.0, v, a);
            let a_dot = follower_deriv(&st, u, sigma, &params).a;
            let q = unmodeled_q(&st, u, sigma, &params, b_hat);
            let scale = a_dot.abs().max(q.abs()).max(1.0);
            prop_assert!((a_dot - (q + b_hat * u)).abs() <= 1e-12 * scale);
        }

        /// Identity also holds in f32, demonstrating the generic scalar path.
        #[test]
        fn decomposition_identity_f32(
            v in -30.0f32..30.0,
            a in -4.0f32..4.0,
            u in -1e4f32..1e4,
        ) {
            let params = VehicleParams::<f32> {
                mass: 1700.0, air_drag: 0.3, rolling: 0.03, inertial_delay: 0.25,
            };
            let st = KinematicState::new(0.0f32, v, a);
            let a_dot = follower_deriv(&st, u, 0.5, &params).a;
            let q = unmodeled_q(&st, u, 0.5, &params, 1e-3);
            let scale = a_dot.abs().max(1.0);
            prop_assert!((a_dot - (q + 1e-3 * u)).abs() <= 1e-4 * scale);
        }

        /// sigma envelopes are valid for arbitrary nonnegative parameters.
        #[test]
        fn disturbance_bound_property(
            l1 in 0.0..20.0f64, l2 in 0.0..0.5f64, l3 in 0.0..1.0f64, l4 in 0.0..8.0f64,
            t in 0.0..200.0f64,
        ) {
            let dp = DisturbanceParams { exp_amp: l1, exp_rate: l2, sin_amp: l3, sin_freq: l4 };
            let s = dp.sample(t);
            prop_assert!(s.sigma.abs() <= dp.sigma_bound() + 1e-12);
            prop_assert!(s.sigma_dot.abs() <= dp.sigma_dot_bound() + 1e-12);
        }
    }
}
