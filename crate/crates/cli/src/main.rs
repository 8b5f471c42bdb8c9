//! `optex`: batch front end for the optimal extraction solver.
//!
//! Exit codes: 0 success, 1 input or solver error, 2 a verification assertion failed.
//! Errors are printed to stderr as `{"error":{"kind":..,"message":..}}`.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use optex::sensitivity::{default_grid, sweep_roots, RootSweep};
use optex::sim::{barrier_samples, estimate, stopping_samples};
use optex::{
    run_hjb_suite, solve, sweep_value, validate, BarrierSolution, GridSpec, IdentityResiduals, ModelParams,
    PathConfig, SimEstimate, StatePoint, SweepParam, SweepReport,
};

/// Identity residuals above this fail `solve`.
const IDENTITY_TOL: f64 = 1e-10;

#[derive(Parser)]
#[command(name = "optex", version, about = "Optimal extraction with price impact and hyper-exponential jumps")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Threshold, coefficients and identity residuals.
    Solve(Common),
    /// Value function and derivatives at given states.
    Value {
        #[command(flatten)]
        common: Common,
        /// State "x,y"; repeatable.
        #[arg(long = "at", value_parser = parse_pair)]
        at: Vec<(f64, f64)>,
        /// File of "x,y" lines (an optional "x,y" header is skipped).
        #[arg(long)]
        points: Option<PathBuf>,
    },
    /// Variational inequality residual suite.
    Verify {
        #[command(flatten)]
        common: Common,
        /// Geometric grid points below the threshold.
        #[arg(long, default_value_t = 10)]
        below: u32,
        /// Geometric grid points above the threshold.
        #[arg(long, default_value_t = 10)]
        above: u32,
    },
    /// Monte Carlo value of a barrier strategy.
    Simulate {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        sim: SimArgs,
        #[arg(long)]
        y0: f64,
        /// Barrier; defaults to the optimal threshold.
        #[arg(long)]
        b: Option<f64>,
    },
    /// Monte Carlo value of stopping at the first entry above a level.
    Stopping {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        sim: SimArgs,
        /// Stopping level; defaults to the optimal threshold.
        #[arg(long)]
        level: Option<f64>,
    },
    /// Comparative statics over one parameter.
    Sweep {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        param: String,
        /// Comma-separated increasing grid; defaults to five points over a decade.
        #[arg(long, value_delimiter = ',')]
        grid: Option<Vec<f64>>,
        /// Probe state "x,y"; repeatable.
        #[arg(long, value_parser = parse_pair)]
        probe: Vec<(f64, f64)>,
    },
}

#[derive(Args)]
struct Common {
    /// Model parameters (JSON).
    #[arg(long)]
    params: Option<PathBuf>,
    /// Previously written solution (JSON); used instead of re-solving.
    #[arg(long)]
    solution: Option<PathBuf>,
    /// Output file; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    format: Format,
    #[arg(long, default_value_t = 42)]
    seed: u64,
}

#[derive(Args)]
struct SimArgs {
    #[arg(long)]
    x0: f64,
    #[arg(long, default_value_t = 200_000)]
    paths: usize,
    /// Time step; defaults to 1e-3/rho.
    #[arg(long)]
    dt: Option<f64>,
    /// Horizon; defaults to the time where the discount factor reaches 1e-9.
    #[arg(long)]
    horizon: Option<f64>,
    /// Write one CSV row per path to this file.
    #[arg(long)]
    dump_paths: Option<PathBuf>,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Csv,
}

fn parse_pair(s: &str) -> std::result::Result<(f64, f64), String> {
    let (a, b) = s.split_once(',').ok_or_else(|| format!("expected \"x,y\", got \"{s}\""))?;
    let x = a.trim().parse::<f64>().map_err(|e| format!("bad x in \"{s}\": {e}"))?;
    let y = b.trim().parse::<f64>().map_err(|e| format!("bad y in \"{s}\": {e}"))?;
    Ok((x, y))
}

/// Output text plus whether every assertion held.
struct Outcome {
    text: String,
    passed: bool,
}

fn read_params(path: &Path) -> Result<ModelParams> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

fn load_solution(common: &Common) -> Result<BarrierSolution> {
    match (&common.solution, &common.params) {
        (Some(path), _) => {
            let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
        }
        (None, Some(path)) => Ok(solve(&validate(read_params(path)?)?)?),
        (None, None) => bail!(optex::Error::InvalidConfig("one of --params or --solution is required".into())),
    }
}

fn to_json<T: Serialize>(value: &T) -> Result<String> {
    Ok(serde_json::to_string_pretty(value)? + "\n")
}

fn to_csv(header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for row in rows {
        w.write_record(&row)?;
    }
    Ok(String::from_utf8(w.into_inner()?)?)
}

/// Shortest round-trip form, with an exponent for very small or large magnitudes.
fn num(v: f64) -> String {
    format!("{v:?}")
}

#[derive(Serialize)]
struct SolveOutput<'a> {
    #[serde(flatten)]
    solution: &'a BarrierSolution,
    identity_residuals: IdentityResiduals,
    positivity: bool,
    passed: bool,
}

fn cmd_solve(common: &Common) -> Result<Outcome> {
    let sol = load_solution(common)?;
    let res = sol.identity_residuals();
    let positivity = sol.positivity_holds();
    let passed = positivity && res.max() <= IDENTITY_TOL;
    let text = match common.format {
        Format::Json => to_json(&SolveOutput { solution: &sol, identity_residuals: res, positivity, passed })?,
        Format::Csv => {
            let mut rows = vec![vec!["bstar".into(), String::new(), num(sol.bstar)]];
            let mut push = |name: &str, xs: &[f64]| {
                rows.extend(xs.iter().enumerate().map(|(i, &v)| vec![name.into(), i.to_string(), num(v)]));
            };
            push("K", &sol.k);
            push("pos", &sol.roots.pos);
            push("neg", &sol.roots.neg);
            push("Rn", &[sol.r_ratio]);
            push("Mn", &sol.m_coef);
            push("Xi", &sol.xi);
            push("max_identity_residual", &[res.max()]);
            to_csv(&["quantity", "index", "value"], rows)?
        }
    };
    Ok(Outcome { text, passed })
}

fn read_points(path: &Path) -> Result<Vec<(f64, f64)>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || (i == 0 && line.replace(' ', "") == "x,y") {
            continue;
        }
        out.push(parse_pair(line).map_err(|e| anyhow!("{}:{}: {e}", path.display(), i + 1))?);
    }
    Ok(out)
}

#[derive(Serialize)]
struct ValueRow {
    x: f64,
    y: f64,
    region: &'static str,
    value: f64,
    dvdx: f64,
    d2vdx2: f64,
    dvdy: f64,
    u: f64,
}

fn cmd_value(common: &Common, at: &[(f64, f64)], points: Option<&Path>) -> Result<Outcome> {
    let sol = load_solution(common)?;
    let mut pts = at.to_vec();
    if let Some(path) = points {
        pts.extend(read_points(path)?);
    }
    if pts.is_empty() {
        bail!(optex::Error::InvalidConfig("no states given (use --at or --points)".into()));
    }
    let rows: Vec<ValueRow> = pts
        .iter()
        .map(|&(x, y)| {
            let pt = StatePoint::new(x, y);
            let d = sol.derivs(pt);
            ValueRow {
                x,
                y,
                region: sol.classify(pt).as_str(),
                value: d.v,
                dvdx: d.vx,
                d2vdx2: d.vxx,
                dvdy: d.vy,
                u: sol.directional_u(x),
            }
        })
        .collect();
    let text = match common.format {
        Format::Json => to_json(&rows)?,
        Format::Csv => to_csv(
            &["x", "y", "region", "value", "dvdx", "d2vdx2", "dvdy", "u"],
            rows.iter().map(|r| {
                vec![num(r.x), num(r.y), r.region.into(), num(r.value), num(r.dvdx), num(r.d2vdx2), num(r.dvdy), num(r.u)]
            }),
        )?,
    };
    Ok(Outcome { text, passed: true })
}

fn cmd_verify(common: &Common, below: u32, above: u32) -> Result<Outcome> {
    let sol = load_solution(common)?;
    let grid = GridSpec { below: below as f64, above: above as f64, ..GridSpec::default() };
    let report = run_hjb_suite(&sol, &grid)?;
    let text = match common.format {
        Format::Json => to_json(&report)?,
        Format::Csv => to_csv(
            &["check", "value", "tolerance", "passed"],
            report.checks.iter().map(|c| vec![c.name.clone(), num(c.value), num(c.tolerance), c.passed.to_string()]),
        )?,
    };
    Ok(Outcome { text, passed: report.passed })
}

fn path_config(sol: &BarrierSolution, common: &Common, sim: &SimArgs) -> Result<PathConfig> {
    let mut cfg = PathConfig::for_params(&sol.params, common.seed, sim.paths);
    if let Some(dt) = sim.dt {
        cfg.dt = dt;
    }
    if let Some(h) = sim.horizon {
        cfg.horizon = h;
    }
    cfg.validate()?;
    Ok(cfg)
}

#[derive(Serialize)]
struct SimOutput {
    x0: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    y0: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    b: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    level: Option<f64>,
    mean: f64,
    stderr: f64,
    paths: usize,
    dt: f64,
    #[serde(rename = "T")]
    horizon: f64,
    seed: u64,
    truncated_fraction: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    jump_overshoot_fraction: Option<f64>,
    /// Closed-form counterpart, when the barrier or level is the optimal threshold.
    #[serde(skip_serializing_if = "Option::is_none")]
    closed_form: Option<f64>,
}

fn sim_text(format: Format, out: &SimOutput) -> Result<String> {
    match format {
        Format::Json => to_json(out),
        Format::Csv => {
            let opt = |v: Option<f64>| v.map(num).unwrap_or_default();
            to_csv(
                &["x0", "y0", "b", "level", "mean", "stderr", "paths", "dt", "T", "seed", "truncated_fraction", "jump_overshoot_fraction", "closed_form"],
                [vec![
                    num(out.x0),
                    opt(out.y0),
                    opt(out.b),
                    opt(out.level),
                    num(out.mean),
                    num(out.stderr),
                    out.paths.to_string(),
                    num(out.dt),
                    num(out.horizon),
                    out.seed.to_string(),
                    num(out.truncated_fraction),
                    opt(out.jump_overshoot_fraction),
                    opt(out.closed_form),
                ]],
            )
        }
    }
}

fn sim_output(x0: f64, est: &SimEstimate) -> SimOutput {
    SimOutput {
        x0,
        y0: None,
        b: None,
        level: None,
        mean: est.mean,
        stderr: est.stderr,
        paths: est.paths,
        dt: est.dt,
        horizon: est.horizon,
        seed: est.seed,
        truncated_fraction: est.truncated_fraction,
        jump_overshoot_fraction: est.jump_overshoot_fraction,
        closed_form: None,
    }
}

fn cmd_simulate(common: &Common, sim: &SimArgs, y0: f64, b: Option<f64>) -> Result<Outcome> {
    let sol = load_solution(common)?;
    let cfg = path_config(&sol, common, sim)?;
    let b = b.unwrap_or(sol.bstar);
    let rows = barrier_samples(&sol.params, sim.x0, y0, &[b], &cfg)?;
    let profits: Vec<f64> = rows.iter().map(|r| r.0[0]).collect();
    let unfinished = rows.iter().filter(|r| r.1[0]).count();
    if let Some(path) = &sim.dump_paths {
        let text = to_csv(
            &["path", "profit", "unfinished"],
            rows.iter().enumerate().map(|(i, r)| vec![i.to_string(), num(r.0[0]), r.1[0].to_string()]),
        )?;
        write_file(path, &text)?;
    }
    let mut out = sim_output(sim.x0, &estimate(&profits, unfinished, &cfg));
    out.y0 = Some(y0);
    out.b = Some(b);
    out.closed_form = (b == sol.bstar).then(|| sol.value(StatePoint::new(sim.x0, y0)));
    Ok(Outcome { text: sim_text(common.format, &out)?, passed: true })
}

fn cmd_stopping(common: &Common, sim: &SimArgs, level: Option<f64>) -> Result<Outcome> {
    let sol = load_solution(common)?;
    let cfg = path_config(&sol, common, sim)?;
    let level = level.unwrap_or(sol.bstar);
    let rows = stopping_samples(&sol.params, sim.x0, level, &cfg)?;
    if let Some(path) = &sim.dump_paths {
        let text = to_csv(
            &["path", "payoff", "stopped", "by_jump"],
            rows.iter().enumerate().map(|(i, r)| vec![i.to_string(), num(r.0), r.1.to_string(), r.2.to_string()]),
        )?;
        write_file(path, &text)?;
    }
    let payoffs: Vec<f64> = rows.iter().map(|r| r.0).collect();
    let unfinished = rows.iter().filter(|r| !r.1).count();
    let stopped = rows.len() - unfinished;
    let by_jump = rows.iter().filter(|r| r.2).count();
    let mut out = sim_output(sim.x0, &estimate(&payoffs, unfinished, &cfg));
    out.level = Some(level);
    out.jump_overshoot_fraction = Some(if stopped > 0 { by_jump as f64 / stopped as f64 } else { 0.0 });
    out.closed_form = (level == sol.bstar).then(|| sol.directional_u(sim.x0));
    Ok(Outcome { text: sim_text(common.format, &out)?, passed: true })
}

#[derive(Serialize)]
struct SweepOutput {
    sweep: SweepReport,
    roots: RootSweep,
    passed: bool,
}

fn cmd_sweep(common: &Common, param: &str, grid: Option<&[f64]>, probes: &[(f64, f64)]) -> Result<Outcome> {
    let param = SweepParam::parse(param)?;
    let base = match (&common.params, &common.solution) {
        (Some(path), _) => validate(read_params(path)?)?.into_inner(),
        (None, Some(_)) => load_solution(common)?.params.into_inner(),
        (None, None) => bail!(optex::Error::InvalidConfig("one of --params or --solution is required".into())),
    };
    let grid = match grid {
        Some(g) => g.to_vec(),
        None => default_grid(param, param.get(&base)),
    };
    let probes: Vec<StatePoint> = probes.iter().map(|&(x, y)| StatePoint::new(x, y)).collect();
    let sweep = sweep_value(&base, param, &grid, &probes)?;
    let roots = sweep_roots(&base, param, &grid)?;
    let passed = sweep.all_asserted_hold() && roots.all_asserted_hold();
    let text = match common.format {
        Format::Json => to_json(&SweepOutput { sweep, roots, passed })?,
        Format::Csv => {
            let mut rows = Vec::new();
            for (i, (&v, &b)) in sweep.grid.iter().zip(&sweep.bstar).enumerate() {
                if sweep.probes.is_empty() {
                    rows.push(vec![param.name().into(), num(v), num(b), String::new(), String::new(), String::new()]);
                }
                for (j, pt) in sweep.probes.iter().enumerate() {
                    rows.push(vec![param.name().into(), num(v), num(b), num(pt.x), num(pt.y), num(sweep.values[i][j])]);
                }
            }
            to_csv(&["parameter", "value", "bstar", "probe_x", "probe_y", "V"], rows)?
        }
    };
    Ok(Outcome { text, passed })
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

/// Runs the command; with `--out` the text goes to that file and nothing is left for stdout.
fn run(cli: Cli) -> Result<Outcome> {
    let mut outcome = match &cli.command {
        Command::Solve(common) => cmd_solve(common),
        Command::Value { common, at, points } => cmd_value(common, at, points.as_deref()),
        Command::Verify { common, below, above } => cmd_verify(common, *below, *above),
        Command::Simulate { common, sim, y0, b } => cmd_simulate(common, sim, *y0, *b),
        Command::Stopping { common, sim, level } => cmd_stopping(common, sim, *level),
        Command::Sweep { common, param, grid, probe } => cmd_sweep(common, param, grid.as_deref(), probe),
    }?;
    if let Some(path) = out_path(&cli) {
        write_file(path, &outcome.text)?;
        outcome.text.clear();
    }
    Ok(outcome)
}

fn out_path(cli: &Cli) -> Option<&Path> {
    let common = match &cli.command {
        Command::Solve(c) => c,
        Command::Value { common, .. }
        | Command::Verify { common, .. }
        | Command::Simulate { common, .. }
        | Command::Stopping { common, .. }
        | Command::Sweep { common, .. } => common,
    };
    common.out.as_deref()
}

fn error_kind(err: &anyhow::Error) -> &'static str {
    if let Some(e) = err.chain().find_map(|e| e.downcast_ref::<optex::Error>()) {
        return e.kind();
    }
    if err.chain().any(|e| e.is::<std::io::Error>()) {
        "Io"
    } else if err.chain().any(|e| e.is::<serde_json::Error>()) {
        "Parse"
    } else {
        "Other"
    }
}

fn report_error(kind: &str, message: String) -> ExitCode {
    let body = serde_json::json!({ "error": { "kind": kind, "message": message } });
    eprintln!("{body}");
    ExitCode::from(1)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            // --help and --version
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => return report_error("Usage", e.to_string().trim_end().to_string()),
    };
    let outcome = match run(cli) {
        Ok(o) => o,
        Err(e) => return report_error(error_kind(&e), format!("{e:#}")),
    };
    if let Err(e) = std::io::stdout().write_all(outcome.text.as_bytes()) {
        return report_error("Io", e.to_string());
    }
    if outcome.passed {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(2)
    }
}
