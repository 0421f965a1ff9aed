//! Deterministic simulation and verification toolkit for vehicle platoons
//! under event-triggered disturbance observation and surface-based control.
//!
//! The crate models a string of followers behind an independently driven
//! leader. Each follower runs a first-order observer whose correction input
//! is only transmitted when it drifts past a trigger threshold, and a
//! two-surface tracking controller with first-order command filters. The
//! toolkit has three layers:
//!
//! * model and control primitives ([`dynamics`], [`eso`], [`controller`]),
//! * offline verification and gain synthesis ([`synthesis`]): derives the
//!   robust constants (observation-error bound, observer-gain floor,
//!   trigger threshold, minimum inter-event time, admissible initial error,
//!   decay rate) from plant intervals and checks every sufficient condition,
//! * scenario configuration, fixed-step integration, outcome analysis, and
//!   export ([`scenario`], [`engine`], [`analysis`], [`export`]).
//!
//! All numerics are generic over the scalar type through [`num::Real`]
//! (`f32` or `f64`); the crate root exposes double-precision aliases for the
//! common case.

pub mod analysis;
pub mod controller;
pub mod dynamics;
pub mod engine;
pub mod error;
pub mod eso;
pub mod export;
pub mod num;
pub mod scenario;
pub mod synthesis;

pub use analysis::{analyze, AnalysisInputs, StabilityReport, VehicleVerdict};
pub use controller::{
    baseline_control, control_input, controller_step, initial_surfaces, spacing_error,
    BaselineGains, BaselineInputs, ControllerInputs, FilterState, GainSet, SurfaceSnapshot,
    VehicleGains,
};
pub use dynamics::{
    control_gain, follower_deriv, leader_deriv, unmodeled_q, unmodeled_w, DisturbanceParams,
    DisturbanceSample, Interval, KinematicState, ModelBounds, VehicleParams,
};
pub use engine::{
    simulate, ControllerKind, ObserverInit, SimOptions, SimTrace, TriggerMode,
};
pub use error::{ConfigError, ExportError, SimError, SynthesisError};
pub use eso::{eso_deriv, estimate_q, observation_error, trigger_check, EsoParams, EsoState};
pub use export::{read_run, write_run, RunMeta, VehicleMeta};
pub use num::{real, Real};
pub use scenario::{Scenario, ScenarioBuilder};
pub use synthesis::{
    derive_all, suggest, verify_all, ConditionCheck, DerivedBounds, InitialErrorBound,
    PlatoonContext, SuggestInputs, SuggestOutcome, SuggestVehicle, VehicleContext,
    VerificationReport,
};

/// Default scalar precision for simulation and verification.
pub type Scalar = f64;
/// Double-precision kinematic state.
pub type State = KinematicState<Scalar>;
/// Double-precision plant parameters.
pub type Plant = VehicleParams<Scalar>;
/// Double-precision plant parameter intervals.
pub type Bounds = ModelBounds<Scalar>;
/// Double-precision controller gains for one vehicle.
pub type Gains = VehicleGains<Scalar>;
/// Double-precision disturbance description.
pub type Disturbance = DisturbanceParams<Scalar>;
/// Double-precision observer parameters.
pub type Observer = EsoParams<Scalar>;
