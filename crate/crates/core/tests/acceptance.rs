//! End-to-end acceptance checks over the shipped scenario configs.
//!
//! Each test prints one pass/fail line with the measured values; tolerances
//! are pinned inline next to the asserts.

use std::path::PathBuf;
use std::time::Instant;

use once_cell::sync::Lazy;

use platoon_core::analysis::{analyze, AnalysisInputs, StabilityReport};
use platoon_core::engine::{
    simulate, ControllerKind, ObserverInit, SimOptions, SimTrace, TriggerMode,
};
use platoon_core::num::gravity;
use platoon_core::scenario::{Scenario, ScenarioBuilder};
use platoon_core::synthesis::{derive_all, gain_mismatch_ratio, input_gain_window, DerivedBounds};

fn config_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name)
}

fn load(name: &str) -> Scenario<f64> {
    let b = ScenarioBuilder::from_path(&config_path(name)).expect("config parses");
    let seed = b.seed();
    b.resolve(seed).expect("config resolves")
}

struct Run {
    trace: SimTrace<f64>,
    report: StabilityReport<f64>,
    derived: DerivedBounds<f64>,
    wall: f64,
}

fn make_run(name: &str, controller: ControllerKind, stride: usize) -> Run {
    let sc = load(name);
    let mut opts = SimOptions::from_scenario(&sc);
    opts.controller = controller;
    opts.stride = stride;
    let gains = sc.gain_set().expect("gains present").clone();
    let derived = derive_all(&sc.verification_context().expect("context builds"));
    let mut inp = AnalysisInputs::new(
        gains.delta,
        gains.epsilon,
        sc.leader.profile.quiescent_after(),
        sc.followers.len(),
    );
    if controller == ControllerKind::Surface {
        inp = inp.with_derived(&derived);
    }
    let t0 = Instant::now();
    let trace = simulate(&sc, &opts).expect("run completes");
    let wall = t0.elapsed().as_secs_f64();
    let report = analyze(&trace, &inp);
    Run { trace, report, derived, wall }
}

/// Reference eight-vehicle scenario, surface controller, 0.1 m precision.
static EPS01: Lazy<Run> = Lazy::new(|| make_run("default.toml", ControllerKind::Surface, 10));
/// Same scenario with the 0.01 m precision gain set.
static EPS001: Lazy<Run> = Lazy::new(|| make_run("eps001.toml", ControllerKind::Surface, 10));
/// Reference scenario under the linear comparison law.
static BASELINE: Lazy<Run> = Lazy::new(|| make_run("default.toml", ControllerKind::Baseline, 10));
/// Fully certified single-follower scenario (all conditions verified).
static CERT: Lazy<Run> = Lazy::new(|| make_run("certified.toml", ControllerKind::Surface, 20));

fn conclude(n: usize, name: &str, pass: bool, detail: &str) {
    eprintln!("criterion {n} {name}: {} ({detail})", if pass { "PASS" } else { "FAIL" });
    assert!(pass, "criterion {n} {name}: {detail}");
}

#[test]
fn criterion_1_input_gain_window() {
    let t0 = Instant::now();
    let sc = load("default.toml");
    let window = input_gain_window(&sc.bounds);
    let b_hat = sc.gain_set().unwrap().vehicles[0].b_hat;
    let cb = gain_mismatch_ratio(&window, b_hat);

    let hi_err = (window.b_hi - 1.0 / 300.0).abs() / (1.0 / 300.0);
    let lo_err = (window.b_lo - 1.0 / 800.0).abs() / (1.0 / 800.0);
    let edge_err = (window.lower_edge - 1.0 / 600.0).abs() / (1.0 / 600.0);
    let cb_err = (cb - 7.0 / 12.0).abs();
    let inside = window.contains(b_hat);
    let wall = t0.elapsed().as_secs_f64();

    let pass = hi_err <= 1e-12
        && lo_err <= 1e-12
        && edge_err <= 1e-12
        && inside
        && cb_err <= 1e-12
        && wall < 1.0;
    conclude(
        1,
        "input gain window",
        pass,
        &format!(
            "b_hi {:.12e} vs 1/300, b_lo {:.12e} vs 1/800, edge {:.12e} vs 1/600, \
             b_hat 0.003 inside: {inside}, mismatch ratio {cb:.15} vs 7/12 (err {cb_err:.2e}), \
             wall {wall:.3} s",
            window.b_hi, window.b_lo, window.lower_edge
        ),
    );
}

#[test]
fn criterion_2_initial_surface_condition() {
    let t0 = Instant::now();
    let sc = load("default.toml");
    let gains = sc.gain_set().unwrap();
    let derived = derive_all(&sc.verification_context().unwrap());
    let bound = gains.delta * gains.delta;
    let lhs: Vec<f64> = derived.vehicles.iter().map(|d| d.surface_lhs).collect();
    let max_lhs = lhs.iter().cloned().fold(0.0, f64::max);
    let all_within = lhs.iter().all(|&v| v <= bound);
    let wall = t0.elapsed().as_secs_f64();

    // Largest term belongs to the vehicle closing a 2 m/s velocity gap:
    // (2/2)^2 + (3/8)^2 = 1.140625. All eight sit far inside the envelope
    // delta^2 = 49.
    let pass = all_within && (max_lhs - 1.140625).abs() <= 1e-12 && wall < 1.0;
    conclude(
        2,
        "initial surface condition",
        pass,
        &format!(
            "all 8 within envelope {bound}: {all_within}, largest lhs {max_lhs:.6} \
             (frozen 1.140625), wall {wall:.3} s"
        ),
    );
}

#[test]
fn criterion_3_string_stability() {
    let run = &*EPS01;
    let delta = run.report.delta;
    let sup: Vec<f64> = run.trace.extrema.iter().map(|e| e.sup_e).collect();
    let max_sup = sup.iter().cloned().fold(0.0, f64::max);
    let min_gap = run.trace.extrema.iter().map(|e| e.min_gap).fold(f64::INFINITY, f64::min);
    let margin = (delta - max_sup) / delta;

    let pass = run.report.string_stable && max_sup <= delta && min_gap > 0.0 && run.wall < 60.0;
    conclude(
        3,
        "string stability",
        pass,
        &format!(
            "max sup|e| {max_sup:.4} <= {delta} (margin {margin:.3}), \
             min gap {min_gap:.4} m > 0, wall {:.2} s",
            run.wall
        ),
    );
}

#[test]
fn criterion_4_terminal_precision() {
    let coarse = &*EPS01;
    let fine = &*EPS001;
    let term = |r: &Run| {
        r.report.vehicles.iter().map(|v| v.terminal_sup_e).fold(0.0, f64::max)
    };
    let t_coarse = term(coarse);
    let t_fine = term(fine);

    let pass = coarse.report.window_valid
        && fine.report.window_valid
        && t_coarse <= 0.2
        && t_fine < t_coarse;
    conclude(
        4,
        "terminal precision",
        pass,
        &format!(
            "coarse gain set terminal max|e| {t_coarse:.3e} <= 0.2 m, \
             fine gain set {t_fine:.3e} strictly smaller"
        ),
    );
}

#[test]
fn criterion_5_observation_error_bound() {
    // Asserted on the fully certified run; informational on the reference
    // run whose gain set does not satisfy every sufficient condition.
    let cert = &*CERT;
    let cert_ok: Vec<(f64, f64)> = cert
        .trace
        .extrema
        .iter()
        .zip(&cert.derived.vehicles)
        .map(|(e, d)| (e.sup_e1, d.e1_bar))
        .collect();
    let cert_pass = cert_ok.iter().all(|(sup, bound)| sup <= bound);

    let reference = &*EPS01;
    let under = reference
        .trace
        .extrema
        .iter()
        .zip(&reference.derived.vehicles)
        .filter(|(e, d)| e.sup_e1 <= d.e1_bar)
        .count();

    conclude(
        5,
        "observation error bound",
        cert_pass,
        &format!(
            "certified run sup|e1| {:.4} <= bound {:.4}; \
             reference run (unverified gains, informational): {under}/8 under bound",
            cert_ok[0].0, cert_ok[0].1
        ),
    );
}

#[test]
fn criterion_6_zeno_exclusion() {
    let cert = &*CERT;
    let reference = &*EPS01;
    let gap_ok = |r: &Run| {
        r.report
            .vehicles
            .iter()
            .all(|v| v.zeno_free && v.respects_tau_min.unwrap_or(true))
    };
    let cert_ok = gap_ok(cert);
    let ref_ok = gap_ok(reference);
    let min_red = reference
        .report
        .vehicles
        .iter()
        .map(|v| v.reduction)
        .fold(f64::INFINITY, f64::min);
    let cert_gap = cert.report.vehicles[0].min_event_gap.unwrap_or(f64::INFINITY);
    let cert_tau = cert.report.vehicles[0].tau_min.unwrap_or(0.0);

    let pass = cert_ok && ref_ok && min_red > 0.5;
    conclude(
        6,
        "zeno exclusion",
        pass,
        &format!(
            "certified min event gap {cert_gap:.4e} >= tau_min {cert_tau:.3e}; \
             reference run gaps respect tau_min: {ref_ok}; \
             smallest transmission reduction {min_red:.4} > 0.5"
        ),
    );
}

#[test]
fn criterion_7_baseline_comparison() {
    let surface = &*EPS01;
    let base = &*BASELINE;
    let mut exceeds = 0usize;
    let mut rows = String::new();
    for i in 0..8 {
        let s = surface.trace.extrema[i].sup_e;
        let b = base.trace.extrema[i].sup_e;
        if b > s {
            exceeds += 1;
        }
        rows.push_str(&format!("{:.3}/{:.3} ", s, b));
    }
    let pass = exceeds >= 7;
    conclude(
        7,
        "baseline comparison",
        pass,
        &format!("baseline peak exceeds surface peak for {exceeds}/8 vehicles; surface/baseline peaks: {rows}"),
    );
}

/// Final leader + follower kinematic states of a run.
fn final_states(trace: &SimTrace<f64>) -> Vec<f64> {
    let k = trace.rows() - 1;
    let mut out = vec![trace.leader.p[k], trace.leader.v[k], trace.leader.a[k]];
    for tr in &trace.vehicles {
        out.extend([tr.p[k], tr.v[k], tr.a[k]]);
    }
    out
}

#[test]
fn criterion_8_integrator_integrity() {
    // Step-halving on the reference scenario with continuous transmission
    // (the event trigger is intentionally discontinuous, so order is
    // measured on the smooth closed loop). Stage seams at t = 6 and 9 land
    // on step boundaries for every dt used.
    let sc = load("default.toml");
    let states: Vec<Vec<f64>> = [1e-3, 5e-4, 2.5e-4]
        .iter()
        .map(|&dt| {
            let mut opts = SimOptions::new(dt, 7.0);
            opts.trigger = TriggerMode::Continuous;
            opts.stride = (7.0 / dt) as usize;
            final_states(&simulate(&sc, &opts).expect("order run completes"))
        })
        .collect();
    let diff = |a: &[f64], b: &[f64]| -> f64 {
        a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
    };
    let e_coarse = diff(&states[0], &states[1]);
    let e_fine = diff(&states[1], &states[2]);
    let contraction = e_coarse / e_fine;

    // Exact equilibrium held for 15 s: zero spacing error, zero velocity
    // gap, observer started at its fixed point.
    let eq_sc: Scenario<f64> =
        ScenarioBuilder::from_toml_str(EQUILIBRIUM_15S_TOML).unwrap().resolve(1).unwrap();
    let f = &eq_sc.followers[0];
    let u_eq = f.params.air_drag * f.state0.v * f.state0.v
        + gravity::<f64>() * f.params.rolling * f.params.mass;
    let s_eq = -eq_sc.gain_set().unwrap().vehicles[0].b_hat * u_eq;
    let mut eq_opts = SimOptions::from_scenario(&eq_sc);
    eq_opts.stride = 100;
    eq_opts.observer_init = ObserverInit::Custom(vec![s_eq]);
    let eq_trace = simulate(&eq_sc, &eq_opts).expect("equilibrium run completes");
    let drift = eq_trace.extrema[0].sup_e;

    // Bit-identical reruns of the reference scenario.
    let mut det_opts = SimOptions::from_scenario(&sc);
    det_opts.horizon = 1.0;
    let first = simulate(&sc, &det_opts).expect("run completes");
    let second = simulate(&sc, &det_opts).expect("run completes");
    let deterministic = first == second;

    let pass = contraction >= 8.0 && drift < 1e-9 && deterministic;
    conclude(
        8,
        "integrator integrity",
        pass,
        &format!(
            "step-halving contraction {contraction:.1} >= 8 \
             (errors {e_coarse:.3e} -> {e_fine:.3e}), \
             equilibrium drift {drift:.2e} < 1e-9 over 15 s, \
             bit-identical rerun: {deterministic}"
        ),
    );
}

#[test]
fn criterion_9_energy_envelope() {
    let cert = &*CERT;
    let delta = cert.report.delta;
    let bound = delta * delta / 2.0;
    let sup_v = cert.trace.extrema.iter().map(|e| e.sup_lyap).fold(0.0, f64::max);

    let pass = sup_v <= bound;
    conclude(
        9,
        "energy envelope",
        pass,
        &format!("sup V {sup_v:.4e} <= delta^2/2 = {bound:.4e} on the certified run"),
    );
}

/// Single-follower exact-equilibrium scenario: leader and follower both
/// cruise at 10 m/s with the desired 8 m gap, an exactly known plant, and
/// no disturbance.
const EQUILIBRIUM_15S_TOML: &str = r#"
r = 8.0
delta = 0.5
epsilon = 0.5
horizon = 15.0
dt = 1e-4
seed = 1
trigger_threshold = 250.0

[leader]
p0 = 80.0
v0 = 10.0
a0 = 0.0
inertial_delay = 0.25
v_bound = 10.0

[[leader.stage]]
until = 15.0
input = 0.0

[bounds]
mass = [1700.0, 1700.0]
air_drag = [0.3, 0.3]
rolling = [0.035, 0.035]
inertial_delay = [0.25, 0.25]

[disturbance]
exp_amp = [0.0, 0.0]
exp_rate = [0.0, 0.0]
sin_amp = [0.0, 0.0]
sin_freq = [0.0, 0.0]

[gains]
k1 = 0.9
k2 = 0.9
k3 = 2.0
h1 = 2.0
h2 = 8.0
kappa1 = 0.05
kappa2 = 0.005
obs_gain = 10000.0
b_hat = 0.00235294117647058823
xi = 0.05

[baseline]
kp = 2000.0
kv = 4000.0
ka = 2000.0
kd = 100.0

[[vehicle]]
p0 = 72.0
v0 = 10.0
a0 = 0.0
"#;
