//! Scenario configuration: TOML parsing, validation, the leader's drive
//! profile, and deterministic resolution of the unknown plant parameters.
//!
//! A configuration file describes the platoon symbolically: initial states,
//! parameter intervals, disturbance ranges, gains, and the leader's input
//! schedule. `ScenarioBuilder::resolve` turns it into a concrete
//! [`Scenario`] by drawing every unpinned plant parameter and disturbance
//! coefficient from its interval with a seeded generator, in a fixed order
//! (per vehicle front to back: mass, air drag, rolling resistance, inertial
//! delay; then per vehicle the four disturbance coefficients), so a seed
//! fully determines the run.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;

use crate::controller::{
    controller_step, BaselineGains, ControllerInputs, FilterState, GainSet, VehicleGains,
};
use crate::dynamics::{DisturbanceParams, Interval, KinematicState, ModelBounds, VehicleParams};
use crate::error::ConfigError;
use crate::num::{real, Real};
use crate::synthesis::{PlatoonContext, SuggestInputs, SuggestVehicle, VehicleContext};

// ---------------------------------------------------------------------------
// Leader drive profile
// ---------------------------------------------------------------------------

/// One stage of the leader's input schedule.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StageKind<T> {
    /// Constant input over the stage.
    Constant(T),
    /// Raised-cosine pulse `peak/2 * (1 - cos(2 pi s / len))`: starts and
    /// ends at zero with zero slope, peaks mid-stage.
    Pulse(T),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LeaderStage<T> {
    pub t_start: T,
    pub t_end: T,
    pub kind: StageKind<T>,
}

/// Piecewise leader input; constant at the final stage's end value after the
/// schedule runs out.
#[derive(Debug, Clone, PartialEq)]
pub struct LeaderProfile<T> {
    stages: Vec<LeaderStage<T>>,
}

impl<T: Real> LeaderProfile<T> {
    pub fn new(stages: Vec<LeaderStage<T>>) -> Self {
        Self { stages }
    }

    pub fn stages(&self) -> &[LeaderStage<T>] {
        &self.stages
    }

    fn eval_stage(stage: &LeaderStage<T>, t: T) -> T {
        match stage.kind {
            StageKind::Constant(v) => v,
            StageKind::Pulse(peak) => {
                let len = stage.t_end - stage.t_start;
                let two = real::<T>(2.0);
                let phase = two * real::<T>(std::f64::consts::PI) * (t - stage.t_start) / len;
                peak / two * (T::one() - phase.cos())
            }
        }
    }

    /// Input at time `t`.
    pub fn input(&self, t: T) -> T {
        for stage in &self.stages {
            if t < stage.t_end {
                return Self::eval_stage(stage, t);
            }
        }
        self.terminal_value()
    }

    /// Value the input holds after the schedule runs out.
    pub fn terminal_value(&self) -> T {
        match self.stages.last() {
            Some(stage) => match stage.kind {
                StageKind::Constant(v) => v,
                StageKind::Pulse(_) => T::zero(),
            },
            None => T::zero(),
        }
    }

    /// Upper bound on |input| over all time.
    pub fn input_bound(&self) -> T {
        self.stages.iter().fold(T::zero(), |acc, s| {
            let m = match s.kind {
                StageKind::Constant(v) => v.abs(),
                StageKind::Pulse(peak) => peak.abs(),
            };
            acc.max(m)
        })
    }

    /// Integral of |input| over the whole schedule.
    pub fn abs_integral(&self) -> T {
        let two = real::<T>(2.0);
        self.stages.iter().fold(T::zero(), |acc, s| {
            let len = s.t_end - s.t_start;
            acc + match s.kind {
                StageKind::Constant(v) => v.abs() * len,
                StageKind::Pulse(peak) => peak.abs() * len / two,
            }
        })
    }

    /// Earliest time after which the input stays at its terminal value.
    pub fn quiescent_after(&self) -> T {
        let term = self.terminal_value();
        let mut q = self.stages.last().map_or(T::zero(), |s| s.t_end);
        for stage in self.stages.iter().rev() {
            let constant_at_term = match stage.kind {
                StageKind::Constant(v) => v == term,
                StageKind::Pulse(peak) => peak == T::zero() && term == T::zero(),
            };
            if constant_at_term {
                q = stage.t_start;
            } else {
                break;
            }
        }
        q
    }
}

// ---------------------------------------------------------------------------
// Resolved scenario
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq)]
pub struct LeaderSetup<T> {
    pub state0: KinematicState<T>,
    pub inertial_delay: T,
    /// Velocity envelope used by the verification chain; validated against
    /// the profile.
    pub v_bound: T,
    pub profile: LeaderProfile<T>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FollowerSetup<T> {
    pub state0: KinematicState<T>,
    /// True plant parameters (drawn or pinned); the controller never reads
    /// them.
    pub params: VehicleParams<T>,
    pub disturbance: DisturbanceParams<T>,
    /// Desired gap to the preceding vehicle.
    pub spacing: T,
    /// Configured trigger threshold; the analysis formula fills in when
    /// absent.
    pub threshold: Option<T>,
}

/// A fully resolved, simulable scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario<T> {
    pub leader: LeaderSetup<T>,
    pub followers: Vec<FollowerSetup<T>>,
    pub bounds: ModelBounds<T>,
    pub gains: Option<GainSet<T>>,
    pub baseline: Option<BaselineGains<T>>,
    pub horizon: T,
    pub dt: T,
    pub seed: u64,
}

impl<T: Real> Scenario<T> {
    pub fn gain_set(&self) -> Result<&GainSet<T>, ConfigError> {
        self.gains
            .as_ref()
            .ok_or_else(|| ConfigError::new("gains", "section required for this operation"))
    }

    pub fn baseline_gains(&self) -> Result<&BaselineGains<T>, ConfigError> {
        self.baseline
            .as_ref()
            .ok_or_else(|| ConfigError::new("baseline", "section required for this operation"))
    }

    /// Initial spacing error of follower `i` (0-based), from the initial
    /// positions and the desired gap.
    pub fn initial_spacing_error(&self, i: usize) -> T {
        let prev_p = if i == 0 { self.leader.state0.p } else { self.followers[i - 1].state0.p };
        prev_p - self.followers[i].state0.p - self.followers[i].spacing
    }

    /// Verification inputs for the whole platoon. The initial control input
    /// of each vehicle is obtained by running the controller once on the
    /// initial state with freshly initialized filters and a cold-started
    /// observer (estimate = obs_gain * a(0)).
    pub fn verification_context(&self) -> Result<PlatoonContext<T>, ConfigError> {
        let gains = self.gain_set()?;
        if gains.vehicles.len() != self.followers.len() {
            return Err(ConfigError::new("gains", "one gain row per follower required"));
        }
        let mut vehicles = Vec::with_capacity(self.followers.len());
        let mut prev = self.leader.state0;
        for (i, f) in self.followers.iter().enumerate() {
            let g = &gains.vehicles[i];
            let q_hat0 = g.obs_gain * f.state0.a;
            let inp = ControllerInputs {
                gap: prev.p - f.state0.p,
                v: f.state0.v,
                a: f.state0.a,
                v_prev: prev.v,
                q_hat: q_hat0,
            };
            let fs = FilterState::init(&inp, g, f.spacing);
            let snap = controller_step(&inp, &fs, g, f.spacing);
            vehicles.push(VehicleContext {
                tau_true: f.params.inertial_delay,
                v0: f.state0.v,
                a0: f.state0.a,
                v_d0: prev.v - f.state0.v,
                e0: snap.e,
                sigma1: f.disturbance.sigma_bound(),
                sigma2: f.disturbance.sigma_dot_bound(),
                u0: snap.u,
                q_hat0,
                threshold: f.threshold,
            });
            prev = f.state0;
        }
        Ok(PlatoonContext {
            bounds: self.bounds,
            gains: gains.clone(),
            v_bar0: self.leader.v_bound,
            a_bar0: self.leader.state0.a.abs().max(self.leader.profile.input_bound()),
            vehicles,
        })
    }

    /// Synthesis inputs: the scenario stripped of its gain set. Scaling
    /// seeds come from the configured gains when present.
    pub fn suggest_inputs(&self) -> Result<SuggestInputs<T>, ConfigError> {
        let (h1_seed, h2_seed) = match &self.gains {
            Some(gs) if !gs.vehicles.is_empty() => (gs.vehicles[0].h1, gs.vehicles[0].h2),
            _ => (real::<T>(2.0), real::<T>(8.0)),
        };
        let (delta, epsilon) = match &self.gains {
            Some(gs) => (gs.delta, gs.epsilon),
            None => {
                return Err(ConfigError::new(
                    "gains",
                    "delta and epsilon required (a gains section with at least those fields)",
                ))
            }
        };
        let mut vehicles = Vec::with_capacity(self.followers.len());
        let mut prev = self.leader.state0;
        for (i, f) in self.followers.iter().enumerate() {
            vehicles.push(SuggestVehicle {
                tau_true: f.params.inertial_delay,
                v0: f.state0.v,
                a0: f.state0.a,
                v_d0: prev.v - f.state0.v,
                e0: self.initial_spacing_error(i),
                sigma1: f.disturbance.sigma_bound(),
                sigma2: f.disturbance.sigma_dot_bound(),
            });
            prev = f.state0;
        }
        Ok(SuggestInputs {
            bounds: self.bounds,
            delta,
            epsilon,
            v_bar0: self.leader.v_bound,
            a_bar0: self.leader.state0.a.abs().max(self.leader.profile.input_bound()),
            h1_seed,
            h2_seed,
            vehicles,
        })
    }
}

// ---------------------------------------------------------------------------
// Raw configuration (serde layer, always f64)
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
enum ScalarOrVec {
    One(f64),
    Many(Vec<f64>),
}

impl ScalarOrVec {
    fn resolve(&self, n: usize, field: &str) -> Result<Vec<f64>, ConfigError> {
        match self {
            ScalarOrVec::One(v) => Ok(vec![*v; n]),
            ScalarOrVec::Many(vs) if vs.len() == n => Ok(vs.clone()),
            ScalarOrVec::Many(vs) => Err(ConfigError::new(
                field,
                format!("expected a scalar or {n} entries, got {}", vs.len()),
            )),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawStage {
    until: f64,
    input: Option<f64>,
    pulse: Option<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawLeader {
    p0: f64,
    v0: f64,
    a0: f64,
    inertial_delay: f64,
    v_bound: f64,
    stage: Vec<RawStage>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawBounds {
    mass: [f64; 2],
    air_drag: [f64; 2],
    rolling: [f64; 2],
    inertial_delay: [f64; 2],
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDisturbance {
    exp_amp: [f64; 2],
    exp_rate: [f64; 2],
    sin_amp: [f64; 2],
    sin_freq: [f64; 2],
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawGains {
    k1: ScalarOrVec,
    k2: ScalarOrVec,
    k3: ScalarOrVec,
    h1: ScalarOrVec,
    h2: ScalarOrVec,
    kappa1: ScalarOrVec,
    kappa2: ScalarOrVec,
    obs_gain: ScalarOrVec,
    b_hat: ScalarOrVec,
    xi: ScalarOrVec,
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawBaseline {
    kp: f64,
    kv: f64,
    ka: f64,
    kd: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawVehicle {
    p0: f64,
    v0: f64,
    a0: f64,
    mass: Option<f64>,
    air_drag: Option<f64>,
    rolling: Option<f64>,
    inertial_delay: Option<f64>,
    /// Pinned disturbance coefficients [exp_amp, exp_rate, sin_amp,
    /// sin_freq]; drawn from the ranges when absent.
    lambda: Option<[f64; 4]>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    r: ScalarOrVec,
    delta: f64,
    epsilon: f64,
    horizon: f64,
    dt: f64,
    seed: u64,
    trigger_threshold: Option<ScalarOrVec>,
    leader: RawLeader,
    bounds: RawBounds,
    disturbance: RawDisturbance,
    gains: Option<RawGains>,
    baseline: Option<RawBaseline>,
    vehicle: Vec<RawVehicle>,
}

/// Parsed but not yet resolved configuration.
#[derive(Debug, Clone)]
pub struct ScenarioBuilder {
    raw: RawConfig,
}

fn check_interval(name: &str, iv: [f64; 2], min_lo: f64) -> Result<(), ConfigError> {
    if !iv[0].is_finite() || !iv[1].is_finite() || iv[0] > iv[1] {
        return Err(ConfigError::new(name, format!("invalid interval [{}, {}]", iv[0], iv[1])));
    }
    if iv[0] < min_lo {
        return Err(ConfigError::new(
            name,
            format!("lower endpoint {} below minimum {min_lo}", iv[0]),
        ));
    }
    Ok(())
}

fn check_positive(name: &str, v: f64) -> Result<(), ConfigError> {
    if !v.is_finite() || v <= 0.0 {
        return Err(ConfigError::new(name, format!("must be positive and finite, got {v}")));
    }
    Ok(())
}

fn in_interval(v: f64, iv: [f64; 2]) -> bool {
    iv[0] <= v && v <= iv[1]
}

impl ScenarioBuilder {
    pub fn from_toml_str(text: &str) -> Result<Self, ConfigError> {
        let raw: RawConfig =
            toml::from_str(text).map_err(|e| ConfigError::new("config", e.to_string()))?;
        let b = Self { raw };
        b.validate()?;
        Ok(b)
    }

    pub fn from_path(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError::new(path.display().to_string(), e.to_string()))?;
        Self::from_toml_str(&text)
    }

    /// Seed recorded in the file; a caller-supplied seed overrides it at
    /// resolve time.
    pub fn seed(&self) -> u64 {
        self.raw.seed
    }

    pub fn vehicle_count(&self) -> usize {
        self.raw.vehicle.len()
    }

    fn validate(&self) -> Result<(), ConfigError> {
        let raw = &self.raw;
        let n = raw.vehicle.len();
        if n == 0 {
            return Err(ConfigError::new("vehicle", "at least one follower required"));
        }
        check_positive("delta", raw.delta)?;
        check_positive("epsilon", raw.epsilon)?;
        if raw.epsilon > raw.delta {
            return Err(ConfigError::new(
                "epsilon",
                format!("precision target {} must not exceed delta {}", raw.epsilon, raw.delta),
            ));
        }
        check_positive("dt", raw.dt)?;
        if !raw.horizon.is_finite() || raw.horizon < 0.0 {
            return Err(ConfigError::new("horizon", "must be finite and nonnegative"));
        }
        let r = raw.r.resolve(n, "r")?;
        for (i, ri) in r.iter().enumerate() {
            check_positive(&format!("r[{i}]"), *ri)?;
            if *ri <= raw.delta {
                return Err(ConfigError::new(
                    format!("r[{i}]"),
                    format!(
                        "desired gap {ri} must exceed delta {} so certified gaps stay positive",
                        raw.delta
                    ),
                ));
            }
        }
        if let Some(th) = &raw.trigger_threshold {
            for (i, m) in th.resolve(n, "trigger_threshold")?.iter().enumerate() {
                check_positive(&format!("trigger_threshold[{i}]"), *m)?;
            }
        }

        // Leader.
        check_positive("leader.inertial_delay", raw.leader.inertial_delay)?;
        if raw.leader.stage.is_empty() {
            return Err(ConfigError::new("leader.stage", "at least one stage required"));
        }
        let mut prev_until = 0.0;
        for (k, st) in raw.leader.stage.iter().enumerate() {
            if st.until <= prev_until || !st.until.is_finite() {
                return Err(ConfigError::new(
                    format!("leader.stage[{k}].until"),
                    format!("stage ends must increase strictly from 0, got {}", st.until),
                ));
            }
            prev_until = st.until;
            match (st.input, st.pulse) {
                (Some(_), None) | (None, Some(_)) => {}
                _ => {
                    return Err(ConfigError::new(
                        format!("leader.stage[{k}]"),
                        "exactly one of `input` or `pulse` required",
                    ))
                }
            }
        }
        let profile = build_profile::<f64>(&raw.leader.stage);
        let v_needed =
            raw.leader.v0 + raw.leader.inertial_delay * raw.leader.a0.abs() + profile.abs_integral();
        if raw.leader.v_bound < v_needed {
            return Err(ConfigError::new(
                "leader.v_bound",
                format!(
                    "{} cannot cover the drive profile; v0 + tau*|a0| + integral(|input|) = {v_needed}",
                    raw.leader.v_bound
                ),
            ));
        }

        // Plant intervals.
        check_interval("bounds.mass", raw.bounds.mass, f64::MIN_POSITIVE)?;
        check_interval("bounds.air_drag", raw.bounds.air_drag, 0.0)?;
        check_interval("bounds.rolling", raw.bounds.rolling, 0.0)?;
        check_interval("bounds.inertial_delay", raw.bounds.inertial_delay, f64::MIN_POSITIVE)?;
        check_interval("disturbance.exp_amp", raw.disturbance.exp_amp, 0.0)?;
        check_interval("disturbance.exp_rate", raw.disturbance.exp_rate, 0.0)?;
        check_interval("disturbance.sin_amp", raw.disturbance.sin_amp, 0.0)?;
        check_interval("disturbance.sin_freq", raw.disturbance.sin_freq, 0.0)?;

        // Pinned per-vehicle values must sit inside their intervals.
        for (i, v) in raw.vehicle.iter().enumerate() {
            let pins = [
                ("mass", v.mass, raw.bounds.mass),
                ("air_drag", v.air_drag, raw.bounds.air_drag),
                ("rolling", v.rolling, raw.bounds.rolling),
                ("inertial_delay", v.inertial_delay, raw.bounds.inertial_delay),
            ];
            for (name, pin, iv) in pins {
                if let Some(x) = pin {
                    if !in_interval(x, iv) {
                        return Err(ConfigError::new(
                            format!("vehicle[{i}].{name}"),
                            format!("{x} outside bounds [{}, {}]", iv[0], iv[1]),
                        ));
                    }
                }
            }
            if let Some(lam) = v.lambda {
                let ranges = [
                    raw.disturbance.exp_amp,
                    raw.disturbance.exp_rate,
                    raw.disturbance.sin_amp,
                    raw.disturbance.sin_freq,
                ];
                for (k, (x, iv)) in lam.iter().zip(ranges).enumerate() {
                    if !in_interval(*x, iv) {
                        return Err(ConfigError::new(
                            format!("vehicle[{i}].lambda[{k}]"),
                            format!("{x} outside range [{}, {}]", iv[0], iv[1]),
                        ));
                    }
                }
            }
        }

        // Gains, when present.
        if let Some(g) = &raw.gains {
            let fields: [(&str, &ScalarOrVec); 10] = [
                ("gains.k1", &g.k1),
                ("gains.k2", &g.k2),
                ("gains.k3", &g.k3),
                ("gains.h1", &g.h1),
                ("gains.h2", &g.h2),
                ("gains.kappa1", &g.kappa1),
                ("gains.kappa2", &g.kappa2),
                ("gains.obs_gain", &g.obs_gain),
                ("gains.b_hat", &g.b_hat),
                ("gains.xi", &g.xi),
            ];
            for (name, sv) in fields {
                for (i, x) in sv.resolve(n, name)?.iter().enumerate() {
                    check_positive(&format!("{name}[{i}]"), *x)?;
                }
            }
        }
        Ok(())
    }

    /// Resolves the configuration into a concrete scenario using `seed`.
    pub fn resolve<T: Real>(&self, seed: u64) -> Result<Scenario<T>, ConfigError> {
        let raw = &self.raw;
        let n = raw.vehicle.len();
        let r = raw.r.resolve(n, "r")?;
        let thresholds = match &raw.trigger_threshold {
            Some(sv) => sv.resolve(n, "trigger_threshold")?.into_iter().map(Some).collect(),
            None => vec![None; n],
        };

        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let draw = |rng: &mut ChaCha8Rng, pin: Option<f64>, iv: [f64; 2]| -> f64 {
            match pin {
                Some(x) => x,
                None => rng.gen_range(iv[0]..=iv[1]),
            }
        };
        // Plant parameters first, vehicle by vehicle.
        let mut params = Vec::with_capacity(n);
        for v in &raw.vehicle {
            let mass = draw(&mut rng, v.mass, raw.bounds.mass);
            let air_drag = draw(&mut rng, v.air_drag, raw.bounds.air_drag);
            let rolling = draw(&mut rng, v.rolling, raw.bounds.rolling);
            let inertial_delay = draw(&mut rng, v.inertial_delay, raw.bounds.inertial_delay);
            params.push(VehicleParams {
                mass: real::<T>(mass),
                air_drag: real::<T>(air_drag),
                rolling: real::<T>(rolling),
                inertial_delay: real::<T>(inertial_delay),
            });
        }
        // Then disturbance coefficients, vehicle by vehicle.
        let mut disturbances = Vec::with_capacity(n);
        for v in &raw.vehicle {
            let pins = v.lambda.map(|l| [Some(l[0]), Some(l[1]), Some(l[2]), Some(l[3])]);
            let pins = pins.unwrap_or([None; 4]);
            let exp_amp = draw(&mut rng, pins[0], raw.disturbance.exp_amp);
            let exp_rate = draw(&mut rng, pins[1], raw.disturbance.exp_rate);
            let sin_amp = draw(&mut rng, pins[2], raw.disturbance.sin_amp);
            let sin_freq = draw(&mut rng, pins[3], raw.disturbance.sin_freq);
            disturbances.push(DisturbanceParams {
                exp_amp: real::<T>(exp_amp),
                exp_rate: real::<T>(exp_rate),
                sin_amp: real::<T>(sin_amp),
                sin_freq: real::<T>(sin_freq),
            });
        }

        let followers = raw
            .vehicle
            .iter()
            .enumerate()
            .map(|(i, v)| FollowerSetup {
                state0: KinematicState {
                    p: real::<T>(v.p0),
                    v: real::<T>(v.v0),
                    a: real::<T>(v.a0),
                },
                params: params[i],
                disturbance: disturbances[i],
                spacing: real::<T>(r[i]),
                threshold: thresholds[i].map(real::<T>),
            })
            .collect();

        let gains = match &raw.gains {
            Some(g) => {
                let k1 = g.k1.resolve(n, "gains.k1")?;
                let k2 = g.k2.resolve(n, "gains.k2")?;
                let k3 = g.k3.resolve(n, "gains.k3")?;
                let h1 = g.h1.resolve(n, "gains.h1")?;
                let h2 = g.h2.resolve(n, "gains.h2")?;
                let kappa1 = g.kappa1.resolve(n, "gains.kappa1")?;
                let kappa2 = g.kappa2.resolve(n, "gains.kappa2")?;
                let obs_gain = g.obs_gain.resolve(n, "gains.obs_gain")?;
                let b_hat = g.b_hat.resolve(n, "gains.b_hat")?;
                let xi = g.xi.resolve(n, "gains.xi")?;
                let vehicles = (0..n)
                    .map(|i| VehicleGains {
                        k1: real::<T>(k1[i]),
                        k2: real::<T>(k2[i]),
                        k3: real::<T>(k3[i]),
                        h1: real::<T>(h1[i]),
                        h2: real::<T>(h2[i]),
                        kappa1: real::<T>(kappa1[i]),
                        kappa2: real::<T>(kappa2[i]),
                        obs_gain: real::<T>(obs_gain[i]),
                        b_hat: real::<T>(b_hat[i]),
                        xi: real::<T>(xi[i]),
                    })
                    .collect();
                Some(GainSet {
                    vehicles,
                    delta: real::<T>(raw.delta),
                    epsilon: real::<T>(raw.epsilon),
                })
            }
            None => None,
        };

        Ok(Scenario {
            leader: LeaderSetup {
                state0: KinematicState {
                    p: real::<T>(raw.leader.p0),
                    v: real::<T>(raw.leader.v0),
                    a: real::<T>(raw.leader.a0),
                },
                inertial_delay: real::<T>(raw.leader.inertial_delay),
                v_bound: real::<T>(raw.leader.v_bound),
                profile: build_profile::<T>(&raw.leader.stage),
            },
            followers,
            bounds: ModelBounds {
                mass: Interval::new(real::<T>(raw.bounds.mass[0]), real::<T>(raw.bounds.mass[1])),
                air_drag: Interval::new(
                    real::<T>(raw.bounds.air_drag[0]),
                    real::<T>(raw.bounds.air_drag[1]),
                ),
                rolling: Interval::new(
                    real::<T>(raw.bounds.rolling[0]),
                    real::<T>(raw.bounds.rolling[1]),
                ),
                inertial_delay: Interval::new(
                    real::<T>(raw.bounds.inertial_delay[0]),
                    real::<T>(raw.bounds.inertial_delay[1]),
                ),
            },
            gains,
            baseline: raw.baseline.map(|b| BaselineGains {
                kp: real::<T>(b.kp),
                kv: real::<T>(b.kv),
                ka: real::<T>(b.ka),
                kd: real::<T>(b.kd),
            }),
            horizon: real::<T>(raw.horizon),
            dt: real::<T>(raw.dt),
            seed,
        })
    }
}

fn build_profile<T: Real>(stages: &[RawStage]) -> LeaderProfile<T> {
    let mut out = Vec::with_capacity(stages.len());
    let mut t_start = 0.0f64;
    for st in stages {
        let kind = match (st.input, st.pulse) {
            (Some(v), _) => StageKind::Constant(real::<T>(v)),
            (None, Some(p)) => StageKind::Pulse(real::<T>(p)),
            (None, None) => StageKind::Constant(T::zero()),
        };
        out.push(LeaderStage { t_start: real::<T>(t_start), t_end: real::<T>(st.until), kind });
        t_start = st.until;
    }
    LeaderProfile::new(out)
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use approx::assert_relative_eq;

    /// Self-contained eight-follower configuration mirroring the shipped
    /// default; kept inline so unit tests need no file system.
    pub(crate) const EIGHT_VEHICLE_TOML: &str = r#"
r = 8.0
delta = 7.0
epsilon = 0.1
horizon = 15.0
dt = 1e-4
seed = 42
trigger_threshold = 50.0

[leader]
p0 = 80.0
v0 = 10.0
a0 = 0.0
inertial_delay = 0.3
v_bound = 14.0

[[leader.stage]]
until = 6.0
input = 0.0

[[leader.stage]]
until = 9.0
pulse = 2.1669

[[leader.stage]]
until = 15.0
input = 0.0

[bounds]
mass = [1500.0, 2000.0]
air_drag = [0.2, 0.4]
rolling = [0.02, 0.05]
inertial_delay = [0.2, 0.4]

[disturbance]
exp_amp = [1.0, 20.0]
exp_rate = [0.1, 0.5]
sin_amp = [0.5, 1.0]
sin_freq = [4.0, 8.0]

[gains]
k1 = 0.8
k2 = 1.5
k3 = 300.0
h1 = 2.0
h2 = 8.0
kappa1 = 0.05
kappa2 = 0.01
obs_gain = 1200.0
b_hat = 0.003
xi = 0.002

[baseline]
kp = 2000.0
kv = 4000.0
ka = 2000.0
kd = 100.0

[[vehicle]]
p0 = 71.0
v0 = 10.0
a0 = 0.0

[[vehicle]]
p0 = 63.5
v0 = 11.0
a0 = 1.5

[[vehicle]]
p0 = 54.0
v0 = 11.5
a0 = -1.0

[[vehicle]]
p0 = 47.2
v0 = 12.5
a0 = 0.0

[[vehicle]]
p0 = 38.4
v0 = 12.5
a0 = -2.0

[[vehicle]]
p0 = 30.6
v0 = 11.5
a0 = 1.0

[[vehicle]]
p0 = 22.1
v0 = 13.5
a0 = 0.0

[[vehicle]]
p0 = 14.8
v0 = 13.0
a0 = -1.0
"#;

    fn builder() -> ScenarioBuilder {
        ScenarioBuilder::from_toml_str(EIGHT_VEHICLE_TOML).expect("reference config parses")
    }

    #[test]
    fn parses_and_resolves_reference_config() {
        let b = builder();
        assert_eq!(b.vehicle_count(), 8);
        assert_eq!(b.seed(), 42);
        let sc: Scenario<f64> = b.resolve(42).unwrap();
        assert_eq!(sc.followers.len(), 8);
        assert_relative_eq!(sc.leader.state0.p, 80.0);
        assert_relative_eq!(sc.followers[7].state0.p, 14.8);
        assert_eq!(sc.followers[0].threshold, Some(50.0));
        let gains = sc.gain_set().unwrap();
        assert_eq!(gains.vehicles.len(), 8);
        assert_relative_eq!(gains.vehicles[3].k3, 300.0);
        assert_relative_eq!(gains.delta, 7.0);
    }

    #[test]
    fn resolution_is_deterministic_in_the_seed() {
        let b = builder();
        let a: Scenario<f64> = b.resolve(7).unwrap();
        let c: Scenario<f64> = b.resolve(7).unwrap();
        assert_eq!(a, c);
        let d: Scenario<f64> = b.resolve(8).unwrap();
        assert_ne!(
            a.followers[0].params.mass, d.followers[0].params.mass,
            "different seeds must draw different plants"
        );
    }

    #[test]
    fn drawn_values_stay_inside_their_intervals() {
        let b = builder();
        for seed in 0..100u64 {
            let sc: Scenario<f64> = b.resolve(seed).unwrap();
            for f in &sc.followers {
                assert!(sc.bounds.contains(&f.params));
                assert!(f.disturbance.exp_amp >= 1.0 && f.disturbance.exp_amp <= 20.0);
                assert!(f.disturbance.exp_rate >= 0.1 && f.disturbance.exp_rate <= 0.5);
                assert!(f.disturbance.sin_amp >= 0.5 && f.disturbance.sin_amp <= 1.0);
                assert!(f.disturbance.sin_freq >= 4.0 && f.disturbance.sin_freq <= 8.0);
            }
        }
    }

    #[test]
    fn pinned_parameters_bypass_the_rng() {
        let toml = EIGHT_VEHICLE_TOML.replace(
            "[[vehicle]]\np0 = 71.0\nv0 = 10.0\na0 = 0.0\n",
            "[[vehicle]]\np0 = 71.0\nv0 = 10.0\na0 = 0.0\nmass = 1700.0\nlambda = [10.0, 0.2, 1.0, 5.0]\n",
        );
        let b = ScenarioBuilder::from_toml_str(&toml).unwrap();
        for seed in [1u64, 2, 3] {
            let sc: Scenario<f64> = b.resolve(seed).unwrap();
            assert_eq!(sc.followers[0].params.mass, 1700.0);
            assert_eq!(sc.followers[0].disturbance.exp_amp, 10.0);
            assert_eq!(sc.followers[0].disturbance.sin_freq, 5.0);
        }
    }

    #[test]
    fn pinned_parameter_outside_bounds_is_rejected() {
        let toml = EIGHT_VEHICLE_TOML.replace(
            "[[vehicle]]\np0 = 71.0\nv0 = 10.0\na0 = 0.0\n",
            "[[vehicle]]\np0 = 71.0\nv0 = 10.0\na0 = 0.0\nmass = 900.0\n",
        );
        let err = ScenarioBuilder::from_toml_str(&toml).unwrap_err();
        assert!(err.field.contains("vehicle[0].mass"), "got field {}", err.field);
    }

    #[test]
    fn validation_rejects_bad_envelopes_and_spacing() {
        let err = ScenarioBuilder::from_toml_str(
            &EIGHT_VEHICLE_TOML.replace("epsilon = 0.1", "epsilon = 8.0"),
        )
        .unwrap_err();
        assert_eq!(err.field, "epsilon");

        let err =
            ScenarioBuilder::from_toml_str(&EIGHT_VEHICLE_TOML.replace("r = 8.0", "r = 6.0"))
                .unwrap_err();
        assert!(err.field.starts_with("r["));

        let err = ScenarioBuilder::from_toml_str(
            &EIGHT_VEHICLE_TOML.replace("kappa1 = 0.05", "kappa1 = -0.05"),
        )
        .unwrap_err();
        assert!(err.field.contains("kappa1"));
    }

    #[test]
    fn validation_rejects_broken_stage_lists() {
        // Stage with both input and pulse.
        let err = ScenarioBuilder::from_toml_str(&EIGHT_VEHICLE_TOML.replace(
            "until = 9.0\npulse = 2.1669",
            "until = 9.0\npulse = 2.1669\ninput = 0.0",
        ))
        .unwrap_err();
        assert!(err.field.contains("leader.stage[1]"), "got {}", err.field);

        // Non-increasing stage ends.
        let err = ScenarioBuilder::from_toml_str(
            &EIGHT_VEHICLE_TOML.replace("until = 9.0", "until = 5.0"),
        )
        .unwrap_err();
        assert!(err.field.contains("until"), "got {}", err.field);
    }

    #[test]
    fn validation_rejects_insufficient_velocity_bound() {
        let err = ScenarioBuilder::from_toml_str(
            &EIGHT_VEHICLE_TOML.replace("v_bound = 14.0", "v_bound = 11.0"),
        )
        .unwrap_err();
        assert_eq!(err.field, "leader.v_bound");
    }

    #[test]
    fn unknown_fields_are_rejected() {
        let err = ScenarioBuilder::from_toml_str(
            &EIGHT_VEHICLE_TOML.replace("delta = 7.0", "delta = 7.0\ndleta = 7.0"),
        )
        .unwrap_err();
        assert_eq!(err.field, "config");
    }

    #[test]
    fn leader_profile_pulse_shape() {
        let b = builder();
        let sc: Scenario<f64> = b.resolve(42).unwrap();
        let prof = &sc.leader.profile;
        assert_relative_eq!(prof.input(0.0), 0.0);
        assert_relative_eq!(prof.input(5.999), 0.0);
        // Pulse starts from zero with zero slope and peaks mid-stage.
        assert!(prof.input(6.0 + 1e-6) < 1e-9);
        assert_relative_eq!(prof.input(7.5), 2.1669, max_relative = 1e-12);
        assert!(prof.input(8.999_999) < 1e-5);
        assert_relative_eq!(prof.input(10.0), 0.0);
        assert_relative_eq!(prof.input(99.0), 0.0);
        assert_relative_eq!(prof.input_bound(), 2.1669);
        assert_relative_eq!(prof.abs_integral(), 2.1669 * 1.5, max_relative = 1e-12);
        assert_relative_eq!(prof.quiescent_after(), 9.0);
        assert_relative_eq!(prof.terminal_value(), 0.0);
    }

    #[test]
    fn quiescent_time_skips_trailing_constant_runs() {
        let prof = LeaderProfile::new(vec![
            LeaderStage { t_start: 0.0, t_end: 2.0, kind: StageKind::Constant(1.0) },
            LeaderStage { t_start: 2.0, t_end: 4.0, kind: StageKind::Constant(0.5) },
            LeaderStage { t_start: 4.0, t_end: 6.0, kind: StageKind::Constant(0.5) },
        ]);
        assert_relative_eq!(prof.terminal_value(), 0.5);
        assert_relative_eq!(prof.quiescent_after(), 2.0);
    }

    #[test]
    fn initial_control_inputs_frozen_oracle() {
        // First follower at the reference initial condition: gap 9, spacing
        // 8, matched speeds, zero acceleration.
        let b = builder();
        let sc: Scenario<f64> = b.resolve(42).unwrap();
        let ctx = sc.verification_context().unwrap();
        let vc = &ctx.vehicles[0];
        assert_relative_eq!(vc.e0, 1.0, max_relative = 1e-12);
        assert_relative_eq!(vc.v_d0, 0.0);
        assert_relative_eq!(vc.q_hat0, 0.0);
        assert_relative_eq!(vc.u0, 1_572.8 / 0.003, max_relative = 1e-12);
        // Envelope anchors for the verification chain.
        assert_relative_eq!(ctx.v_bar0, 14.0);
        assert_relative_eq!(ctx.a_bar0, 2.1669);
        // Initial spacing errors across the platoon.
        let e0: Vec<f64> = (0..8).map(|i| sc.initial_spacing_error(i)).collect();
        let expect = [1.0, -0.5, 1.5, -1.2, 0.8, -0.2, 0.5, -0.7];
        for (a, b) in e0.iter().zip(expect) {
            assert_relative_eq!(*a, b, max_relative = 1e-9, epsilon = 1e-12);
        }
    }

    #[test]
    fn suggest_inputs_mirror_the_scenario() {
        let b = builder();
        let sc: Scenario<f64> = b.resolve(42).unwrap();
        let si = sc.suggest_inputs().unwrap();
        assert_eq!(si.vehicles.len(), 8);
        assert_relative_eq!(si.delta, 7.0);
        assert_relative_eq!(si.epsilon, 0.1);
        assert_relative_eq!(si.h1_seed, 2.0);
        assert_relative_eq!(si.vehicles[2].v_d0, 11.0 - 11.5, max_relative = 1e-12);
        let f = &sc.followers[4];
        assert_relative_eq!(si.vehicles[4].sigma1, f.disturbance.sigma_bound());
        assert_relative_eq!(si.vehicles[4].sigma2, f.disturbance.sigma_dot_bound());
        assert_relative_eq!(si.vehicles[4].tau_true, f.params.inertial_delay);
    }

    #[test]
    fn f32_resolution_matches_f64_draws() {
        // Draws happen at f64 and convert, so both precisions see the same
        // plant to f32 accuracy.
        let b = builder();
        let a: Scenario<f64> = b.resolve(5).unwrap();
        let c: Scenario<f32> = b.resolve(5).unwrap();
        for (x, y) in a.followers.iter().zip(&c.followers) {
            assert_relative_eq!(x.params.mass as f32, y.params.mass, max_relative = 1e-6);
            assert_relative_eq!(
                x.disturbance.sin_freq as f32,
                y.disturbance.sin_freq,
                max_relative = 1e-6
            );
        }
    }
}
