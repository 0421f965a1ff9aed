//! Command-line front end: simulate, verify, suggest, compare, report.
//!
//! Exit codes: 0 success, 1 failed verdicts or infeasible synthesis,
//! 2 configuration or data errors.

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};

use platoon_core::analysis::{analyze, AnalysisInputs, StabilityReport};
use platoon_core::engine::{resolve_thresholds, simulate, ControllerKind, SimOptions, SimTrace};
use platoon_core::error::SimError;
use platoon_core::export::{read_run, write_run, RunMeta};
use platoon_core::scenario::{Scenario, ScenarioBuilder};
use platoon_core::synthesis::{derive_all, suggest, verify_all};

#[derive(Parser)]
#[command(
    name = "platoon-cli",
    version,
    about = "Deterministic platoon simulation with event-triggered observation: \
             run scenarios, verify gain conditions, synthesize gains, and analyze traces"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Integrate a scenario, print outcome verdicts, optionally export the run.
    Simulate(SimulateArgs),
    /// Check every sufficient condition for the configured gain set.
    Verify {
        /// Scenario TOML file.
        #[arg(long)]
        config: PathBuf,
    },
    /// Search for a gain set that passes verification; prints a config snippet.
    Suggest {
        /// Scenario TOML file (its gains section seeds the search scaling).
        #[arg(long)]
        config: PathBuf,
    },
    /// Run the surface and baseline controllers on the same plants and
    /// compare peak spacing errors.
    Compare(CompareArgs),
    /// Re-analyze an exported run directory.
    Report {
        /// Run directory written by simulate --out.
        #[arg(long)]
        trace: PathBuf,
        /// Exit nonzero unless every verdict passes.
        #[arg(long)]
        strict: bool,
    },
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ControllerArg {
    /// Two-surface tracking controller with the event-triggered observer.
    Dsc,
    /// Linear comparison law without an observer.
    Baseline,
}

impl ControllerArg {
    fn kind(self) -> ControllerKind {
        match self {
            Self::Dsc => ControllerKind::Surface,
            Self::Baseline => ControllerKind::Baseline,
        }
    }

    fn name(self) -> &'static str {
        match self {
            Self::Dsc => "surface",
            Self::Baseline => "baseline",
        }
    }
}

#[derive(Args)]
struct SimulateArgs {
    /// Scenario TOML file.
    #[arg(long)]
    config: PathBuf,
    #[arg(long, value_enum, default_value_t = ControllerArg::Dsc)]
    controller: ControllerArg,
    /// Override the configured integration step.
    #[arg(long)]
    dt: Option<f64>,
    /// Override the configured horizon (seconds).
    #[arg(long)]
    horizon: Option<f64>,
    /// Override the configured RNG seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Record every n-th grid point (the final point is always kept).
    #[arg(long, default_value_t = 1)]
    stride: usize,
    /// Directory to export trace.csv, events.csv, meta.toml, and charts.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Exit nonzero unless every verdict passes.
    #[arg(long)]
    strict: bool,
}

#[derive(Args)]
struct CompareArgs {
    /// Scenario TOML file (needs both gains and baseline sections).
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    dt: Option<f64>,
    #[arg(long)]
    horizon: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value_t = 1)]
    stride: usize,
    /// Directory receiving surface/ and baseline/ run exports.
    #[arg(long)]
    out: Option<PathBuf>,
}

type Fail = (u8, String);

fn config_fail(e: impl std::fmt::Display) -> Fail {
    (2, e.to_string())
}

fn sim_fail(e: SimError) -> Fail {
    match &e {
        SimError::NonFinite { .. } => (1, e.to_string()),
        SimError::Config(_) => (2, e.to_string()),
    }
}

fn load(config: &Path, seed: Option<u64>) -> Result<Scenario<f64>, Fail> {
    let builder = ScenarioBuilder::from_path(config).map_err(config_fail)?;
    let seed = seed.unwrap_or_else(|| builder.seed());
    builder.resolve(seed).map_err(config_fail)
}

/// Verdict inputs for a run of `sc`: envelope and precision targets from the
/// gains section, observer bounds from the derived constants when the
/// surface controller ran.
fn analysis_inputs(sc: &Scenario<f64>, kind: ControllerKind) -> Result<AnalysisInputs<f64>, Fail> {
    let gains = sc.gain_set().map_err(config_fail)?;
    let inp = AnalysisInputs::new(
        gains.delta,
        gains.epsilon,
        sc.leader.profile.quiescent_after(),
        sc.followers.len(),
    );
    if kind == ControllerKind::Surface {
        let ctx = sc.verification_context().map_err(config_fail)?;
        Ok(inp.with_derived(&derive_all(&ctx)))
    } else {
        Ok(inp)
    }
}

fn print_run_header(sc: &Scenario<f64>, trace: &SimTrace<f64>, name: &str, wall: f64) {
    println!(
        "controller {name}  followers {}  seed {}  dt {:.3e}  steps {}  rows {}  wall {wall:.2} s",
        sc.followers.len(),
        sc.seed,
        trace.dt,
        trace.steps,
        trace.rows(),
    );
    if trace.trigger_counts.iter().any(|&c| c > 0) {
        println!("transmissions {:?}", trace.trigger_counts);
    }
}

fn run_simulate(args: SimulateArgs) -> Result<u8, Fail> {
    let sc = load(&args.config, args.seed)?;
    let mut opts = SimOptions::from_scenario(&sc);
    if let Some(dt) = args.dt {
        opts.dt = dt;
    }
    if let Some(h) = args.horizon {
        opts.horizon = h;
    }
    opts.stride = args.stride;
    opts.controller = args.controller.kind();

    let thresholds: Vec<Option<f64>> = if opts.controller == ControllerKind::Surface {
        resolve_thresholds(&sc).map_err(sim_fail)?.into_iter().map(Some).collect()
    } else {
        vec![None; sc.followers.len()]
    };
    let inp = analysis_inputs(&sc, opts.controller)?;

    let t0 = Instant::now();
    let trace = simulate(&sc, &opts).map_err(sim_fail)?;
    let wall = t0.elapsed().as_secs_f64();

    print_run_header(&sc, &trace, args.controller.name(), wall);
    let rep = analyze(&trace, &inp);
    print!("{rep}");

    if let Some(dir) = &args.out {
        let meta = RunMeta::new(&trace, &inp, args.controller.name(), sc.seed, &thresholds);
        write_run(dir, &trace, &meta).map_err(config_fail)?;
        println!("exported to {}", dir.display());
    }

    Ok(exit_for(&rep, args.strict))
}

fn exit_for(rep: &StabilityReport<f64>, strict: bool) -> u8 {
    if strict && !rep.all_pass() {
        1
    } else {
        0
    }
}

fn run_verify(config: &Path) -> Result<u8, Fail> {
    let sc = load(config, None)?;
    let ctx = sc.verification_context().map_err(config_fail)?;
    let report = verify_all(&ctx);
    print!("{report}");
    Ok(if report.all_pass { 0 } else { 1 })
}

fn toml_array(vals: impl Iterator<Item = f64>) -> String {
    let inner: Vec<String> = vals.map(|v| format!("{v:?}")).collect();
    format!("[{}]", inner.join(", "))
}

fn run_suggest(config: &Path) -> Result<u8, Fail> {
    let sc = load(config, None)?;
    let inputs = sc.suggest_inputs().map_err(config_fail)?;
    let outcome = suggest(&inputs).map_err(|e| (1, e.to_string()))?;

    // Honest re-check: rebuild the scenario around the suggested gains and
    // run the full verification on it.
    let mut verified = sc.clone();
    verified.gains = Some(outcome.gains.clone());
    for (f, th) in verified.followers.iter_mut().zip(&outcome.thresholds) {
        f.threshold = Some(*th);
    }
    let ctx = verified.verification_context().map_err(config_fail)?;
    let report = verify_all(&ctx);
    print!("{report}");
    if !report.all_pass {
        return Ok(1);
    }

    let g = &outcome.gains;
    println!();
    println!("# suggested gain set: every sufficient condition verified");
    println!("# replace the trigger_threshold and [gains] entries with:");
    println!("trigger_threshold = {}", toml_array(outcome.thresholds.iter().copied()));
    println!();
    println!("[gains]");
    println!("k1 = {}", toml_array(g.vehicles.iter().map(|v| v.k1)));
    println!("k2 = {}", toml_array(g.vehicles.iter().map(|v| v.k2)));
    println!("k3 = {}", toml_array(g.vehicles.iter().map(|v| v.k3)));
    println!("h1 = {}", toml_array(g.vehicles.iter().map(|v| v.h1)));
    println!("h2 = {}", toml_array(g.vehicles.iter().map(|v| v.h2)));
    println!("kappa1 = {}", toml_array(g.vehicles.iter().map(|v| v.kappa1)));
    println!("kappa2 = {}", toml_array(g.vehicles.iter().map(|v| v.kappa2)));
    println!("obs_gain = {}", toml_array(g.vehicles.iter().map(|v| v.obs_gain)));
    println!("b_hat = {}", toml_array(g.vehicles.iter().map(|v| v.b_hat)));
    println!("xi = {}", toml_array(g.vehicles.iter().map(|v| v.xi)));
    Ok(0)
}

fn run_compare(args: CompareArgs) -> Result<u8, Fail> {
    let sc = load(&args.config, args.seed)?;
    let mut surf_opts = SimOptions::from_scenario(&sc);
    if let Some(dt) = args.dt {
        surf_opts.dt = dt;
    }
    if let Some(h) = args.horizon {
        surf_opts.horizon = h;
    }
    surf_opts.stride = args.stride;
    let mut base_opts = surf_opts.clone();
    base_opts.controller = ControllerKind::Baseline;

    let thresholds: Vec<Option<f64>> =
        resolve_thresholds(&sc).map_err(sim_fail)?.into_iter().map(Some).collect();
    let surf_inp = analysis_inputs(&sc, ControllerKind::Surface)?;
    let base_inp = analysis_inputs(&sc, ControllerKind::Baseline)?;

    let t0 = Instant::now();
    let (surf, base) = std::thread::scope(|s| {
        let hs = s.spawn(|| simulate(&sc, &surf_opts));
        let hb = s.spawn(|| simulate(&sc, &base_opts));
        (hs.join().expect("surface run panicked"), hb.join().expect("baseline run panicked"))
    });
    let wall = t0.elapsed().as_secs_f64();
    let surf = surf.map_err(sim_fail)?;
    let base = base.map_err(sim_fail)?;

    let surf_rep = analyze(&surf, &surf_inp);
    let base_rep = analyze(&base, &base_inp);

    println!(
        "compared over {} steps at dt {:.3e} (wall {wall:.2} s); peak |spacing error| per vehicle:",
        surf.steps, surf.dt
    );
    println!("{:>4}  {:>13}  {:>13}  {:>9}  {:>6}", "veh", "surface", "baseline", "ratio", "evts");
    let mut worst_s: f64 = 0.0;
    let mut worst_b: f64 = 0.0;
    for i in 0..surf_rep.vehicles.len() {
        let vs = &surf_rep.vehicles[i];
        let vb = &base_rep.vehicles[i];
        worst_s = worst_s.max(vs.sup_e);
        worst_b = worst_b.max(vb.sup_e);
        println!(
            "{:>4}  {:>13.4e}  {:>13.4e}  {:>9.4}  {:>6}",
            i + 1,
            vs.sup_e,
            vb.sup_e,
            vs.sup_e / vb.sup_e,
            vs.events,
        );
    }
    println!(
        "{:>4}  {:>13.4e}  {:>13.4e}  {:>9.4}",
        "max",
        worst_s,
        worst_b,
        worst_s / worst_b
    );

    if let Some(dir) = &args.out {
        let meta_s = RunMeta::new(&surf, &surf_inp, "surface", sc.seed, &thresholds);
        write_run(&dir.join("surface"), &surf, &meta_s).map_err(config_fail)?;
        let none = vec![None; sc.followers.len()];
        let meta_b = RunMeta::new(&base, &base_inp, "baseline", sc.seed, &none);
        write_run(&dir.join("baseline"), &base, &meta_b).map_err(config_fail)?;
        println!("exported to {}", dir.display());
    }
    Ok(0)
}

fn run_report(dir: &Path, strict: bool) -> Result<u8, Fail> {
    let (trace, meta) = read_run(dir).map_err(config_fail)?;
    println!(
        "run {}  controller {}  seed {}  dt {:.3e}  steps {}  rows {}",
        dir.display(),
        meta.controller,
        meta.seed,
        meta.dt,
        meta.steps,
        trace.rows(),
    );
    let rep = analyze(&trace, &meta.analysis_inputs());
    print!("{rep}");
    Ok(exit_for(&rep, strict))
}

fn run(cli: Cli) -> Result<u8, Fail> {
    match cli.cmd {
        Cmd::Simulate(args) => run_simulate(args),
        Cmd::Verify { config } => run_verify(&config),
        Cmd::Suggest { config } => run_suggest(&config),
        Cmd::Compare(args) => run_compare(args),
        Cmd::Report { trace, strict } => run_report(&trace, strict),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => ExitCode::from(code),
        Err((code, msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(code)
        }
    }
}
