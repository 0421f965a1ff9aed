//! Writers and readers for finished runs.
//!
//! A run directory holds four kinds of files:
//!
//! * `trace.csv` — one row per recorded grid point: time, leader state, then
//!   ten columns per follower;
//! * `events.csv` — one row per transmission, `(vehicle, t)`;
//! * `meta.toml` — everything a later analysis needs that the CSV rows do
//!   not carry (step size, bounds, spacing policy, seed);
//! * `error_<i>.svg` — spacing-error chart per follower.
//!
//! Values are written with nine significant digits; re-exporting a re-read
//! run reproduces the files byte for byte.

use std::fmt::Write as _;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::analysis::AnalysisInputs;
use crate::engine::{LeaderTrack, SignalExtrema, SimTrace, VehicleTrack};
use crate::error::ExportError;

pub const TRACE_FILE: &str = "trace.csv";
pub const EVENTS_FILE: &str = "events.csv";
pub const META_FILE: &str = "meta.toml";

/// Columns recorded per follower, in file order.
const VEHICLE_COLUMNS: [&str; 10] =
    ["p", "v", "a", "e", "u", "q", "q_hat", "e1", "psi", "lyap"];

/// Run facts that the CSV files do not carry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMeta {
    /// Which feedback law produced the run ("surface" or "baseline").
    pub controller: String,
    pub seed: u64,
    pub dt: f64,
    /// Integration steps taken (recorded rows may be fewer under striding).
    pub steps: usize,
    pub delta: f64,
    pub epsilon: f64,
    pub terminal_window: f64,
    pub leader_quiescent_after: f64,
    pub vehicles: Vec<VehicleMeta>,
}

/// Per-follower sidecar facts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VehicleMeta {
    /// Desired gap to the preceding vehicle.
    pub spacing: f64,
    /// Total transmissions over the run.
    pub transmissions: usize,
    /// Running extrema from the engine (every step, not just recorded rows).
    pub sup_e: f64,
    pub sup_e_time: f64,
    pub min_gap: f64,
    pub sup_e1: f64,
    pub sup_lyap: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub e1_bound: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tau_min: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trigger_threshold: Option<f64>,
}

impl RunMeta {
    /// Collects the sidecar facts from a finished trace and the verdict
    /// inputs that judged it.
    pub fn new(
        trace: &SimTrace<f64>,
        inp: &AnalysisInputs<f64>,
        controller: &str,
        seed: u64,
        thresholds: &[Option<f64>],
    ) -> Self {
        let vehicles = (0..trace.vehicles.len())
            .map(|i| VehicleMeta {
                spacing: trace.spacings[i],
                transmissions: trace.trigger_counts[i],
                sup_e: trace.extrema[i].sup_e,
                sup_e_time: trace.extrema[i].sup_e_time,
                min_gap: trace.extrema[i].min_gap,
                sup_e1: trace.extrema[i].sup_e1,
                sup_lyap: trace.extrema[i].sup_lyap,
                e1_bound: inp.e1_bounds.get(i).copied().flatten(),
                tau_min: inp.tau_mins.get(i).copied().flatten(),
                trigger_threshold: thresholds.get(i).copied().flatten(),
            })
            .collect();
        Self {
            controller: controller.to_string(),
            seed,
            dt: trace.dt,
            steps: trace.steps,
            delta: inp.delta,
            epsilon: inp.epsilon,
            terminal_window: inp.terminal_window,
            leader_quiescent_after: inp.leader_quiescent_after,
            vehicles,
        }
    }

    /// Rebuilds the verdict inputs for a re-read run.
    pub fn analysis_inputs(&self) -> AnalysisInputs<f64> {
        AnalysisInputs {
            delta: self.delta,
            epsilon: self.epsilon,
            terminal_window: self.terminal_window,
            leader_quiescent_after: self.leader_quiescent_after,
            e1_bounds: self.vehicles.iter().map(|v| v.e1_bound).collect(),
            tau_mins: self.vehicles.iter().map(|v| v.tau_min).collect(),
        }
    }
}

fn cell(x: f64) -> String {
    format!("{x:.8e}")
}

/// Header line for `n` followers.
fn trace_header(n: usize) -> String {
    let mut h = String::from("t,lead_p,lead_v,lead_a");
    for i in 1..=n {
        for col in VEHICLE_COLUMNS {
            let _ = write!(h, ",{col}_{i}");
        }
    }
    h
}

/// Serializes the recorded rows as CSV text.
pub fn trace_csv(trace: &SimTrace<f64>) -> String {
    let n = trace.vehicles.len();
    let mut out = trace_header(n);
    out.push('\n');
    for k in 0..trace.rows() {
        let _ = write!(
            out,
            "{},{},{},{}",
            cell(trace.t[k]),
            cell(trace.leader.p[k]),
            cell(trace.leader.v[k]),
            cell(trace.leader.a[k]),
        );
        for tr in &trace.vehicles {
            let _ = write!(
                out,
                ",{},{},{},{},{},{},{},{},{},{}",
                cell(tr.p[k]),
                cell(tr.v[k]),
                cell(tr.a[k]),
                cell(tr.e[k]),
                cell(tr.u[k]),
                cell(tr.q[k]),
                cell(tr.q_hat[k]),
                cell(tr.e1[k]),
                cell(tr.psi[k]),
                cell(tr.lyap[k]),
            );
        }
        out.push('\n');
    }
    out
}

/// Serializes the transmission instants as CSV text, vehicles in order.
pub fn events_csv(trace: &SimTrace<f64>) -> String {
    let mut out = String::from("vehicle,t\n");
    for (i, ev) in trace.events.iter().enumerate() {
        for &t in ev {
            let _ = writeln!(out, "{},{}", i + 1, cell(t));
        }
    }
    out
}

fn parse_cell(token: &str, line: usize) -> Result<f64, ExportError> {
    token
        .trim()
        .parse::<f64>()
        .map_err(|_| ExportError::Parse(format!("line {line}: bad number {token:?}")))
}

/// Columns recovered from a trace CSV: grid times, leader track, follower
/// tracks.
pub type TraceColumns = (Vec<f64>, LeaderTrack<f64>, Vec<VehicleTrack<f64>>);

/// Parses trace CSV text back into per-signal columns. Events, counts, step
/// size, and spacings come from the sidecar; see [`read_run`].
pub fn parse_trace_csv(text: &str) -> Result<TraceColumns, ExportError> {
    let mut lines = text.lines().enumerate();
    let (_, header) = lines
        .next()
        .ok_or_else(|| ExportError::Parse("empty trace file".into()))?;
    let cols = header.split(',').count();
    if cols < 4 || (cols - 4) % VEHICLE_COLUMNS.len() != 0 {
        return Err(ExportError::Parse(format!("unrecognized header with {cols} columns")));
    }
    let n = (cols - 4) / VEHICLE_COLUMNS.len();
    if header != trace_header(n) {
        return Err(ExportError::Parse("header names do not match the trace layout".into()));
    }

    let mut t = Vec::new();
    let mut leader = LeaderTrack::default();
    let mut vehicles = vec![VehicleTrack::default(); n];
    for (idx, line) in lines {
        if line.is_empty() {
            continue;
        }
        let lineno = idx + 1;
        let mut it = line.split(',');
        let mut next = |what: &str| {
            it.next()
                .ok_or_else(|| ExportError::Parse(format!("line {lineno}: missing {what}")))
                .and_then(|tok| parse_cell(tok, lineno))
        };
        t.push(next("t")?);
        leader.p.push(next("lead_p")?);
        leader.v.push(next("lead_v")?);
        leader.a.push(next("lead_a")?);
        for tr in &mut vehicles {
            tr.p.push(next("p")?);
            tr.v.push(next("v")?);
            tr.a.push(next("a")?);
            tr.e.push(next("e")?);
            tr.u.push(next("u")?);
            tr.q.push(next("q")?);
            tr.q_hat.push(next("q_hat")?);
            tr.e1.push(next("e1")?);
            tr.psi.push(next("psi")?);
            tr.lyap.push(next("lyap")?);
        }
        if it.next().is_some() {
            return Err(ExportError::Parse(format!("line {lineno}: extra columns")));
        }
    }
    if t.is_empty() {
        return Err(ExportError::Parse("trace has a header but no rows".into()));
    }
    Ok((t, leader, vehicles))
}

/// Parses events CSV text into per-vehicle instants for `n` vehicles.
pub fn parse_events_csv(text: &str, n: usize) -> Result<Vec<Vec<f64>>, ExportError> {
    let mut events = vec![Vec::new(); n];
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, "vehicle,t")) => {}
        _ => return Err(ExportError::Parse("events file must start with vehicle,t".into())),
    }
    for (idx, line) in lines {
        if line.is_empty() {
            continue;
        }
        let lineno = idx + 1;
        let (veh, t) = line
            .split_once(',')
            .ok_or_else(|| ExportError::Parse(format!("line {lineno}: expected vehicle,t")))?;
        let veh: usize = veh
            .trim()
            .parse()
            .map_err(|_| ExportError::Parse(format!("line {lineno}: bad vehicle {veh:?}")))?;
        if veh == 0 || veh > n {
            return Err(ExportError::Parse(format!(
                "line {lineno}: vehicle {veh} outside 1..={n}"
            )));
        }
        events[veh - 1].push(parse_cell(t, lineno)?);
    }
    Ok(events)
}

/// Writes trace, events, sidecar, and one chart per follower into `dir`
/// (created if needed).
pub fn write_run(dir: &Path, trace: &SimTrace<f64>, meta: &RunMeta) -> Result<(), ExportError> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join(TRACE_FILE), trace_csv(trace))?;
    fs::write(dir.join(EVENTS_FILE), events_csv(trace))?;
    let meta_text = toml::to_string_pretty(meta)
        .map_err(|e| ExportError::Parse(format!("sidecar serialization: {e}")))?;
    fs::write(dir.join(META_FILE), meta_text)?;
    for i in 0..trace.vehicles.len() {
        let svg = error_chart_svg(trace, i, meta.delta);
        fs::write(dir.join(format!("error_{}.svg", i + 1)), svg)?;
    }
    Ok(())
}

/// Reads a run directory back into a trace and its sidecar.
pub fn read_run(dir: &Path) -> Result<(SimTrace<f64>, RunMeta), ExportError> {
    let meta_text = fs::read_to_string(dir.join(META_FILE))?;
    let meta: RunMeta = toml::from_str(&meta_text)
        .map_err(|e| ExportError::Parse(format!("sidecar: {e}")))?;

    // Streams the trace file line by line; full-resolution traces are large.
    let mut trace_text = String::new();
    let mut reader = BufReader::new(fs::File::open(dir.join(TRACE_FILE))?);
    loop {
        let read = reader.read_line(&mut trace_text)?;
        if read == 0 {
            break;
        }
    }
    let (t, leader, vehicles) = parse_trace_csv(&trace_text)?;
    if vehicles.len() != meta.vehicles.len() {
        return Err(ExportError::Parse(format!(
            "trace has {} vehicles but sidecar lists {}",
            vehicles.len(),
            meta.vehicles.len()
        )));
    }

    let events_text = fs::read_to_string(dir.join(EVENTS_FILE))?;
    let events = parse_events_csv(&events_text, vehicles.len())?;

    let trace = SimTrace {
        t,
        leader,
        vehicles,
        extrema: meta
            .vehicles
            .iter()
            .map(|v| SignalExtrema {
                sup_e: v.sup_e,
                sup_e_time: v.sup_e_time,
                min_gap: v.min_gap,
                sup_e1: v.sup_e1,
                sup_lyap: v.sup_lyap,
            })
            .collect(),
        events,
        trigger_counts: meta.vehicles.iter().map(|v| v.transmissions).collect(),
        steps: meta.steps,
        dt: meta.dt,
        spacings: meta.vehicles.iter().map(|v| v.spacing).collect(),
    };
    Ok((trace, meta))
}

/// Writes any string to a file through a buffered writer.
pub fn write_text(path: &Path, text: &str) -> Result<(), ExportError> {
    let mut f = std::io::BufWriter::new(fs::File::create(path)?);
    f.write_all(text.as_bytes())?;
    Ok(())
}

const CHART_W: f64 = 860.0;
const CHART_H: f64 = 420.0;
const MARGIN_L: f64 = 72.0;
const MARGIN_R: f64 = 24.0;
const MARGIN_T: f64 = 34.0;
const MARGIN_B: f64 = 52.0;
/// Charts downsample to at most this many polyline points.
const CHART_POINTS: usize = 2000;

fn tick_label(v: f64) -> String {
    let a = v.abs();
    if a == 0.0 {
        "0".to_string()
    } else if (0.01..10_000.0).contains(&a) {
        let s = format!("{v:.3}");
        let s = s.trim_end_matches('0').trim_end_matches('.');
        s.to_string()
    } else {
        format!("{v:.2e}")
    }
}

/// Renders the spacing error of follower `i` (0-based) as a standalone SVG
/// line chart with the envelope `|e| = delta` marked.
pub fn error_chart_svg(trace: &SimTrace<f64>, i: usize, delta: f64) -> String {
    let rows = trace.rows();
    let e = &trace.vehicles[i].e;
    let t0 = trace.t[0];
    let t1 = trace.t[rows - 1].max(t0 + f64::EPSILON);

    let mut lo = -delta;
    let mut hi = delta;
    for &v in e {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    let pad = 0.08 * (hi - lo).max(1e-12);
    lo -= pad;
    hi += pad;

    let plot_w = CHART_W - MARGIN_L - MARGIN_R;
    let plot_h = CHART_H - MARGIN_T - MARGIN_B;
    let x = |t: f64| MARGIN_L + (t - t0) / (t1 - t0) * plot_w;
    let y = |v: f64| MARGIN_T + (hi - v) / (hi - lo) * plot_h;

    let mut svg = String::with_capacity(16 * 1024);
    let _ = writeln!(
        svg,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{CHART_W}\" height=\"{CHART_H}\" \
         viewBox=\"0 0 {CHART_W} {CHART_H}\" font-family=\"sans-serif\" font-size=\"12\">"
    );
    let _ = writeln!(svg, "<rect width=\"{CHART_W}\" height=\"{CHART_H}\" fill=\"white\"/>");
    let _ = writeln!(
        svg,
        "<text x=\"{:.1}\" y=\"20\" text-anchor=\"middle\" font-size=\"14\">vehicle {} spacing error</text>",
        MARGIN_L + plot_w / 2.0,
        i + 1
    );

    // Axes frame.
    let _ = writeln!(
        svg,
        "<rect x=\"{MARGIN_L}\" y=\"{MARGIN_T}\" width=\"{plot_w:.1}\" height=\"{plot_h:.1}\" \
         fill=\"none\" stroke=\"#444\"/>"
    );

    // Ticks and grid.
    for k in 0..=6 {
        let t = t0 + (t1 - t0) * k as f64 / 6.0;
        let xx = x(t);
        let _ = writeln!(
            svg,
            "<line x1=\"{xx:.1}\" y1=\"{:.1}\" x2=\"{xx:.1}\" y2=\"{:.1}\" stroke=\"#444\"/>",
            MARGIN_T + plot_h,
            MARGIN_T + plot_h + 5.0
        );
        let _ = writeln!(
            svg,
            "<text x=\"{xx:.1}\" y=\"{:.1}\" text-anchor=\"middle\">{}</text>",
            MARGIN_T + plot_h + 20.0,
            tick_label(t)
        );
    }
    for k in 0..=5 {
        let v = lo + (hi - lo) * k as f64 / 5.0;
        let yy = y(v);
        let _ = writeln!(
            svg,
            "<line x1=\"{:.1}\" y1=\"{yy:.1}\" x2=\"{MARGIN_L}\" y2=\"{yy:.1}\" stroke=\"#444\"/>",
            MARGIN_L - 5.0
        );
        let _ = writeln!(
            svg,
            "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"end\">{}</text>",
            MARGIN_L - 9.0,
            yy + 4.0,
            tick_label(v)
        );
    }
    let _ = writeln!(
        svg,
        "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"middle\">t (s)</text>",
        MARGIN_L + plot_w / 2.0,
        CHART_H - 12.0
    );
    let _ = writeln!(
        svg,
        "<text x=\"16\" y=\"{:.1}\" text-anchor=\"middle\" transform=\"rotate(-90 16 {:.1})\">e (m)</text>",
        MARGIN_T + plot_h / 2.0,
        MARGIN_T + plot_h / 2.0
    );

    // Zero line and envelope.
    if lo < 0.0 && hi > 0.0 {
        let yy = y(0.0);
        let _ = writeln!(
            svg,
            "<line x1=\"{MARGIN_L}\" y1=\"{yy:.1}\" x2=\"{:.1}\" y2=\"{yy:.1}\" stroke=\"#bbb\"/>",
            MARGIN_L + plot_w
        );
    }
    for bound in [delta, -delta] {
        let yy = y(bound);
        let _ = writeln!(
            svg,
            "<line x1=\"{MARGIN_L}\" y1=\"{yy:.1}\" x2=\"{:.1}\" y2=\"{yy:.1}\" \
             stroke=\"#d62728\" stroke-dasharray=\"6 4\"/>",
            MARGIN_L + plot_w
        );
    }

    // Error polyline, downsampled; the last row is always included.
    let stride = rows.div_ceil(CHART_POINTS).max(1);
    let mut points = String::new();
    let mut k = 0;
    while k < rows {
        let _ = write!(points, "{:.1},{:.1} ", x(trace.t[k]), y(e[k]));
        if k == rows - 1 {
            break;
        }
        k = (k + stride).min(rows - 1);
    }
    let _ = writeln!(
        svg,
        "<polyline points=\"{}\" fill=\"none\" stroke=\"#1f77b4\" stroke-width=\"1.6\"/>",
        points.trim_end()
    );
    svg.push_str("</svg>\n");
    svg
}
