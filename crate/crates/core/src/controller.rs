//! Spacing controller built on two dynamic surfaces with first-order
//! command filters, plus the linear baseline law used for comparison runs.
//!
//! Each follower regulates the spacing error `e = p_prev - p - r` using only
//! locally measurable signals: its own velocity and acceleration, the
//! preceding vehicle's velocity, the gap, and the observer's estimate of the
//! unmodeled dynamics. The sensing restriction is structural: the input
//! struct carries exactly those signals and nothing else.

use crate::num::Real;

/// Per-vehicle gain set for the surface controller and its observer.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VehicleGains<T> {
    /// Spacing-error gain.
    pub k1: T,
    /// First-surface gain.
    pub k2: T,
    /// Second-surface gain.
    pub k3: T,
    /// Virtual velocity scaling.
    pub h1: T,
    /// Virtual acceleration scaling.
    pub h2: T,
    /// First command-filter time constant.
    pub kappa1: T,
    /// Second command-filter time constant.
    pub kappa2: T,
    /// Observer gain.
    pub obs_gain: T,
    /// Input gain estimate.
    pub b_hat: T,
    /// Analysis constant trading convergence rate against gain size.
    pub xi: T,
}

/// Platoon-wide gain configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct GainSet<T> {
    pub vehicles: Vec<VehicleGains<T>>,
    /// Safe spacing-error bound (m); the string-stability envelope.
    pub delta: T,
    /// Steady-state precision target (m).
    pub epsilon: T,
}

/// Gains of the linear comparison controller.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BaselineGains<T> {
    pub kp: T,
    pub kv: T,
    pub ka: T,
    pub kd: T,
}

/// Command-filter states; part of the continuous ODE state and advanced by
/// the engine's integrator via `filter_derivs`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FilterState<T> {
    pub beta1: T,
    pub beta2: T,
}

/// Everything the surface controller is allowed to sense.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControllerInputs<T> {
    /// Gap to the preceding vehicle, `p_prev - p`.
    pub gap: T,
    /// Own velocity.
    pub v: T,
    /// Own acceleration.
    pub a: T,
    /// Preceding vehicle's velocity.
    pub v_prev: T,
    /// Observer estimate of the unmodeled dynamics.
    pub q_hat: T,
}

/// Everything the baseline controller is allowed to sense.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BaselineInputs<T> {
    pub gap: T,
    pub v: T,
    pub a: T,
    pub v_prev: T,
    /// Preceding vehicle's acceleration (wireless channel).
    pub a_prev: T,
}

/// All intermediate controller quantities for one vehicle at one instant.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SurfaceSnapshot<T> {
    pub e: T,
    pub z1: T,
    pub z2: T,
    pub eta1: T,
    pub eta2: T,
    pub alpha1: T,
    pub alpha2: T,
    pub u: T,
}

impl<T: Real> SurfaceSnapshot<T> {
    /// Quadratic energy of the surface coordinates; the quantity bounded by
    /// delta^2/2 on a certified run.
    pub fn lyapunov(&self) -> T {
        let half = T::one() / (T::one() + T::one());
        half * (self.e * self.e
            + self.z1 * self.z1
            + self.z2 * self.z2
            + self.eta1 * self.eta1
            + self.eta2 * self.eta2)
    }
}

/// Spacing error `e = p_prev - p - r`.
pub fn spacing_error<T: Real>(p_prev: T, p: T, r: T) -> T {
    p_prev - p - r
}

/// First virtual control: desired scaled velocity.
pub fn virtual_velocity<T: Real>(v_prev: T, e: T, g: &VehicleGains<T>) -> T {
    (v_prev + g.k1 * e) / g.h1
}

/// Second virtual control: desired scaled acceleration.
pub fn virtual_accel<T: Real>(z1: T, eta1: T, e: T, g: &VehicleGains<T>) -> T {
    g.h1 * (-g.k2 * z1 - eta1 / g.kappa1 + g.h1 * e) / g.h2
}

/// Control input: cancels the estimated unmodeled dynamics and stabilizes
/// both surfaces.
pub fn control_input<T: Real>(q_hat: T, z1: T, z2: T, eta2: T, g: &VehicleGains<T>) -> T {
    g.h2 * (-q_hat / g.h2 - g.k3 * z2 - g.h2 * z1 / g.h1 - eta2 / g.kappa2) / g.b_hat
}

/// Command-filter derivatives `(beta1_dot, beta2_dot)`.
pub fn filter_derivs<T: Real>(
    fs: &FilterState<T>,
    alpha1: T,
    alpha2: T,
    g: &VehicleGains<T>,
) -> (T, T) {
    ((alpha1 - fs.beta1) / g.kappa1, (alpha2 - fs.beta2) / g.kappa2)
}

/// Linear comparison law.
pub fn baseline_control<T: Real>(inp: &BaselineInputs<T>, r: T, g: &BaselineGains<T>) -> T {
    let e = inp.gap - r;
    g.kp * e + g.kv * (inp.v_prev - inp.v) + g.ka * inp.a_prev + g.kd * inp.a
}

/// Evaluates the full surface-controller chain at the current state.
/// Filters are not advanced here; the engine integrates them.
pub fn controller_step<T: Real>(
    inp: &ControllerInputs<T>,
    fs: &FilterState<T>,
    g: &VehicleGains<T>,
    r: T,
) -> SurfaceSnapshot<T> {
    let e = inp.gap - r;
    let alpha1 = virtual_velocity(inp.v_prev, e, g);
    let z1 = inp.v / g.h1 - fs.beta1;
    let eta1 = fs.beta1 - alpha1;
    let alpha2 = virtual_accel(z1, eta1, e, g);
    let z2 = inp.a / g.h2 - fs.beta2;
    let eta2 = fs.beta2 - alpha2;
    let u = control_input(inp.q_hat, z1, z2, eta2, g);
    SurfaceSnapshot { e, z1, z2, eta1, eta2, alpha1, alpha2, u }
}

impl<T: Real> FilterState<T> {
    /// Filter initialization: each filter starts on its own command,
    /// `beta1(0) = alpha1(0)` and `beta2(0) = alpha2(0)`, so both filter
    /// errors start at zero.
    pub fn init(inp: &ControllerInputs<T>, g: &VehicleGains<T>, r: T) -> Self {
        let e = inp.gap - r;
        let alpha1 = virtual_velocity(inp.v_prev, e, g);
        let beta1 = alpha1;
        let z1 = inp.v / g.h1 - beta1;
        // eta1(0) = 0 by construction.
        let alpha2 = virtual_accel(z1, T::zero(), e, g);
        Self { beta1, beta2: alpha2 }
    }
}

/// Closed-form initial surface values implied by the initialization above:
/// `z1(0) = (-v_d(0) - k1 e(0)) / h1` and
/// `z2(0) = (a(0) - k2 v_d(0) - (k1 k2 + h1^2) e(0)) / h2`,
/// with `v_d(0) = v_prev(0) - v(0)`. Used by the verifier without running
/// the controller.
pub fn initial_surfaces<T: Real>(e0: T, v_d0: T, a0: T, g: &VehicleGains<T>) -> (T, T) {
    let z1 = (-v_d0 - g.k1 * e0) / g.h1;
    let z2 = (a0 - g.k2 * v_d0 - (g.k1 * g.k2 + g.h1 * g.h1) * e0) / g.h2;
    (z1, z2)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    /// First published gain set of the eight-vehicle scenario.
    fn gains() -> VehicleGains<f64> {
        VehicleGains {
            k1: 0.8,
            k2: 1.5,
            k3: 300.0,
            h1: 2.0,
            h2: 8.0,
            kappa1: 0.05,
            kappa2: 0.01,
            obs_gain: 1200.0,
            b_hat: 0.003,
            xi: 0.002,
        }
    }

    #[test]
    fn spacing_error_cases() {
        assert_eq!(spacing_error(80.0, 71.0, 8.0), 1.0);
        assert_eq!(spacing_error(63.5, 54.0, 8.0), 1.5);
        assert_relative_eq!(spacing_error(22.1, 14.8, 8.0), -0.7, max_relative = 1e-12);
    }

    #[test]
    fn virtual_velocity_frozen() {
        assert_relative_eq!(virtual_velocity(10.0, 1.0, &gains()), 5.4);
    }

    #[test]
    fn virtual_accel_frozen() {
        // 2*(0.6 + 2)/8 = 0.65
        assert_relative_eq!(virtual_accel(-0.4, 0.0, 1.0, &gains()), 0.65);
    }

    #[test]
    fn control_input_pure_cancellation() {
        // With all surfaces at zero the law reduces to -q_hat / b_hat.
        let u = control_input(-2.5, 0.0, 0.0, 0.0, &gains());
        assert_relative_eq!(u, 2.5 / 0.003, max_relative = 1e-15);
    }

    #[test]
    fn filter_derivs_frozen() {
        let fs = FilterState { beta1: 0.0, beta2: 0.0 };
        let (d1, _) = filter_derivs(&fs, 5.4, 0.0, &gains());
        assert_relative_eq!(d1, 108.0);
    }

    #[test]
    fn baseline_frozen() {
        let g = BaselineGains { kp: 2000.0, kv: 4000.0, ka: 2000.0, kd: 100.0 };
        let inp = BaselineInputs { gap: 9.0, v: 11.0, a: 0.0, v_prev: 10.0, a_prev: 0.5 };
        // 2000*1 + 4000*(-1) + 2000*0.5 + 100*0 = -1000
        assert_relative_eq!(baseline_control(&inp, 8.0, &g), -1000.0);
    }

    /// Full chain at start for the scenario's first follower:
    /// gap 9, r 8, equal speeds 10, zero acceleration, cold observer.
    #[test]
    fn controller_chain_at_start_frozen() {
        let g = gains();
        let inp = ControllerInputs { gap: 9.0, v: 10.0, a: 0.0, v_prev: 10.0, q_hat: 0.0 };
        let fs = FilterState::init(&inp, &g, 8.0);
        assert_relative_eq!(fs.beta1, 5.4);
        assert_relative_eq!(fs.beta2, 0.65);
        let snap = controller_step(&inp, &fs, &g, 8.0);
        assert_relative_eq!(snap.e, 1.0);
        assert_relative_eq!(snap.z1, -0.4, max_relative = 1e-14);
        assert_relative_eq!(snap.z2, -0.65, max_relative = 1e-14);
        assert_eq!(snap.eta1, 0.0);
        assert_eq!(snap.eta2, 0.0);
        // 8*(195 + 1.6)/0.003
        assert_relative_eq!(snap.u, 524_266.666_666_666_6, max_relative = 1e-12);
    }

    #[test]
    fn initial_surfaces_match_running_chain() {
        let g = gains();
        for &(gap, v, a, v_prev) in
            &[(9.0, 10.0, 0.0, 10.0), (7.5, 11.0, 1.5, 10.0), (9.5, 11.5, -1.0, 11.0)]
        {
            let inp = ControllerInputs { gap, v, a, v_prev, q_hat: 0.0 };
            let fs = FilterState::init(&inp, &g, 8.0);
            let snap = controller_step(&inp, &fs, &g, 8.0);
            let (z1, z2) = initial_surfaces(gap - 8.0, v_prev - v, a, &g);
            assert_relative_eq!(snap.z1, z1, max_relative = 1e-12, epsilon = 1e-14);
            assert_relative_eq!(snap.z2, z2, max_relative = 1e-12, epsilon = 1e-14);
        }
    }

    #[test]
    fn zero_surface_gain_limit() {
        // With k1=k2=k3 -> 0 the law keeps only observer cancellation, the
        // surface cross-term, and the filter correction.
        let mut g = gains();
        g.k1 = 0.0;
        g.k2 = 0.0;
        g.k3 = 0.0;
        let u = control_input(-1.2, 0.3, 0.7, 0.05, &g);
        let expect = g.h2 * (1.2 / g.h2 - g.h2 * 0.3 / g.h1 - 0.05 / g.kappa2) / g.b_hat;
        assert_relative_eq!(u, expect, max_relative = 1e-15);
    }

    proptest! {
        /// The control law is linear in (q_hat, z1, z2, eta2).
        #[test]
        fn control_input_superposition(
            q1 in -50.0..50.0f64, z11 in -5.0..5.0f64, z21 in -5.0..5.0f64, e21 in -5.0..5.0f64,
            q2 in -50.0..50.0f64, z12 in -5.0..5.0f64, z22 in -5.0..5.0f64, e22 in -5.0..5.0f64,
        ) {
            let g = gains();
            let lhs = control_input(q1 + q2, z11 + z12, z21 + z22, e21 + e22, &g);
            let rhs = control_input(q1, z11, z21, e21, &g) + control_input(q2, z12, z22, e22, &g);
            let scale = lhs.abs().max(rhs.abs()).max(1.0);
            prop_assert!((lhs - rhs).abs() <= 1e-10 * scale);
        }

        /// Filter rate strictly decreases in magnitude as kappa grows.
        #[test]
        fn filter_rate_monotone_in_kappa(
            beta in -10.0..10.0f64,
            alpha in -10.0..10.0f64,
            kap in 1e-3..1.0f64,
        ) {
            prop_assume!((alpha - beta).abs() > 1e-9);
            let mut g = gains();
            g.kappa1 = kap;
            let fs = FilterState { beta1: beta, beta2: 0.0 };
            let (d_small, _) = filter_derivs(&fs, alpha, 0.0, &g);
            g.kappa1 = kap * 10.0;
            let (d_large, _) = filter_derivs(&fs, alpha, 0.0, &g);
            prop_assert!(d_large.abs() < d_small.abs());
        }

        /// Closed-form initial surfaces agree with the running chain for
        /// arbitrary initial conditions.
        #[test]
        fn initial_surface_closed_form(
            e0 in -3.0..3.0f64,
            v in 5.0..15.0f64,
            vd in -3.0..3.0f64,
            a in -2.5..2.5f64,
        ) {
            let g = gains();
            let inp = ControllerInputs { gap: e0 + 8.0, v, a, v_prev: v + vd, q_hat: 0.0 };
            let fs = FilterState::init(&inp, &g, 8.0);
            let snap = controller_step(&inp, &fs, &g, 8.0);
            let (z1, z2) = initial_surfaces(e0, vd, a, &g);
            prop_assert!((snap.z1 - z1).abs() <= 1e-10 * z1.abs().max(1.0));
            prop_assert!((snap.z2 - z2).abs() <= 1e-10 * z2.abs().max(1.0));
        }
    }
}
