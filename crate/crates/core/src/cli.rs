//! Command-line front end: JSON configuration in, CSV out.
//!
//! Exit codes: 0 success, 2 usage error, 3 numeric or contract failure,
//! 4 resource cap.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::Deserialize;

use crate::adiabatic::{fidelity_sweep, prepare_initial_state, run_adiabatic, Schedule, StepOptions, FIDELITY_L_GRID, FIDELITY_T_GRID};
use crate::error::Error;
use crate::model::{Boundary, SpinFilling, SshhParams};
use crate::observables::{exact_report, sampled_report, EstimateReport};
use crate::oracle::{adiabatic_benchmark_with, crosscheck_with, trotter_consistency, OracleOptions, CROSSCHECK_TOL, PARITY_TOL};
use crate::simulator::{bitstring, sample};
use crate::singleparticle::{winding_class, WindingClass};
use crate::stateprep::ground_state_spec;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_FAILURE: i32 = 3;
pub const EXIT_RESOURCE: i32 = 4;

/// Worker cap when neither `--threads` nor `SSHH_THREADS` is given. Each
/// worker owns a full statevector, so the default stays small.
pub const DEFAULT_MAX_THREADS: usize = 4;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Lib(#[from] Error),
    #[error("contract violated: {0}")]
    Contract(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Lib(Error::Argument(_)) => EXIT_USAGE,
            CliError::Lib(Error::Resource(_)) => EXIT_RESOURCE,
            CliError::Lib(_) | CliError::Contract(_) => EXIT_FAILURE,
        }
    }
}

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

#[derive(Debug, Parser)]
#[command(name = "sshh", version, about = "Adiabatic state preparation for the spinful SSH-Hubbard chain")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fidelity over a grid of total times and Trotter interval counts.
    FidelitySweep(RunArgs),
    /// Many-body Berry phase over intercell hopping and sublattice asymmetry.
    BerrySweep(RunArgs),
    /// Sublattice polarization profile of the open chain.
    Polarization(RunArgs),
    /// Computational-basis shots of the evolved state.
    Sample(RunArgs),
    /// Checks the qubit Hamiltonian and circuits against exact diagonalization.
    OracleCheck(OracleArgs),
}

#[derive(Debug, Clone, Default, Args)]
pub struct RunArgs {
    /// JSON configuration; its fields override the preset.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub preset: Option<Preset>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub shots: Option<u64>,
    /// Worker threads (overrides SSHH_THREADS).
    #[arg(long)]
    pub threads: Option<usize>,
    /// Output CSV path; standard output when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Args)]
pub struct OracleArgs {
    #[command(flatten)]
    pub run: RunArgs,
    /// Negate the periodic-boundary hop in the qubit model and circuits.
    #[arg(long, hide = true)]
    pub flip_boundary_sign: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Preset {
    FigFidelity,
    FigBerry,
    FigPolarization,
}

// ---------------------------------------------------------------- config

#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ComplexParts {
    pub re: f64,
    #[serde(default)]
    pub im: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(untagged)]
pub enum ComplexSpec {
    Real(f64),
    Complex(ComplexParts),
}

impl ComplexSpec {
    fn value(self) -> Complex64 {
        match self {
            ComplexSpec::Real(x) => Complex64::new(x, 0.0),
            ComplexSpec::Complex(c) => Complex64::new(c.re, c.im),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FillingKeyword {
    Half,
    HalfPlusTwo,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExplicitFilling {
    pub n_up: usize,
    pub n_down: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(untagged)]
pub enum FillingSpec {
    Keyword(FillingKeyword),
    Explicit(ExplicitFilling),
}

impl FillingSpec {
    pub fn resolve(self, n_cells: usize) -> SpinFilling {
        match self {
            FillingSpec::Keyword(FillingKeyword::Half) => SpinFilling::half(n_cells),
            FillingSpec::Keyword(FillingKeyword::HalfPlusTwo) => SpinFilling::half_plus_two(n_cells),
            FillingSpec::Explicit(e) => SpinFilling::new(e.n_up, e.n_down),
        }
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub n_cells: Option<usize>,
    pub v: Option<ComplexSpec>,
    pub w: Option<ComplexSpec>,
    pub u_a: Option<f64>,
    pub u_b: Option<f64>,
    /// Sets `u_b = u_a + delta_u`.
    pub delta_u: Option<f64>,
    pub boundary: Option<Boundary>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleSection {
    pub t_total: Option<f64>,
    pub steps: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepParam {
    V,
    W,
    UA,
    UB,
    DeltaU,
    TTotal,
    Steps,
}

impl SweepParam {
    pub fn name(self) -> &'static str {
        match self {
            SweepParam::V => "v",
            SweepParam::W => "w",
            SweepParam::UA => "u_a",
            SweepParam::UB => "u_b",
            SweepParam::DeltaU => "delta_u",
            SweepParam::TTotal => "t_total",
            SweepParam::Steps => "steps",
        }
    }

    fn is_integer(self) -> bool {
        self == SweepParam::Steps
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepAxis {
    pub parameter: SweepParam,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub model: Option<ModelSection>,
    pub filling: Option<FillingSpec>,
    pub schedule: Option<ScheduleSection>,
    pub shots: Option<u64>,
    pub seed: Option<u64>,
    /// Axes combined as a cartesian product, first axis outermost.
    pub sweep: Option<Vec<SweepAxis>>,
    pub output: Option<PathBuf>,
}

pub fn parse_config(text: &str) -> Result<ConfigFile, CliError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        usage(format!("invalid config at `{path}`: {}", e.into_inner()))
    })
}

/// Fully resolved experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct Experiment {
    pub params: SshhParams,
    pub filling: SpinFilling,
    pub schedule: Schedule,
    pub shots: u64,
    pub seed: u64,
    pub sweep: Vec<SweepAxis>,
    pub output: Option<PathBuf>,
}

#[derive(Debug, Clone)]
struct Draft {
    n_cells: usize,
    v: Complex64,
    w: Complex64,
    u_a: f64,
    u_b: f64,
    boundary: Boundary,
    filling: FillingSpec,
    t_total: f64,
    steps: usize,
    shots: u64,
    seed: u64,
    sweep: Vec<SweepAxis>,
    output: Option<PathBuf>,
}

/// The default grid of asymmetries between the two endpoints of the sweep.
/// The interior points are our choice.
pub const DELTA_U_LOG_GRID: [f64; 7] = [3e-4, 1e-3, 3e-3, 1e-2, 3e-2, 1e-1, 3e-1];

pub fn berry_w_grid() -> Vec<f64> {
    let mut w: Vec<f64> = (0..=8).map(|k| 0.25 * k as f64).filter(|&x| x != 1.0).collect();
    w.extend([0.99, 1.01]);
    w.sort_by(f64::total_cmp);
    w
}

fn preset_draft(preset: Preset) -> Draft {
    let base = Draft {
        n_cells: 6,
        v: Complex64::new(1.0, 0.0),
        w: Complex64::new(1.5, 0.0),
        u_a: 0.01,
        u_b: 0.01,
        boundary: Boundary::Pbc,
        filling: FillingSpec::Keyword(FillingKeyword::Half),
        t_total: 1.0,
        steps: 40,
        shots: 0,
        seed: 0,
        sweep: Vec::new(),
        output: None,
    };
    let with_zero = |tail: &[f64]| std::iter::once(0.0).chain(tail.iter().copied()).collect::<Vec<f64>>();
    match preset {
        Preset::FigFidelity => Draft {
            v: Complex64::new(0.5, 0.0),
            u_a: 0.0,
            u_b: 0.0,
            sweep: vec![
                SweepAxis { parameter: SweepParam::TTotal, values: FIDELITY_T_GRID.to_vec() },
                SweepAxis { parameter: SweepParam::Steps, values: FIDELITY_L_GRID.iter().map(|&l| l as f64).collect() },
            ],
            ..base
        },
        Preset::FigBerry => Draft {
            sweep: vec![
                SweepAxis { parameter: SweepParam::W, values: berry_w_grid() },
                SweepAxis { parameter: SweepParam::DeltaU, values: with_zero(&DELTA_U_LOG_GRID) },
            ],
            ..base
        },
        Preset::FigPolarization => {
            let mut du = with_zero(&DELTA_U_LOG_GRID);
            du.push(0.5);
            Draft {
                v: Complex64::new(0.1, 0.0),
                w: Complex64::new(1.0, 0.0),
                boundary: Boundary::Obc,
                filling: FillingSpec::Keyword(FillingKeyword::HalfPlusTwo),
                sweep: vec![SweepAxis { parameter: SweepParam::DeltaU, values: du }],
                ..base
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CommandKind {
    FidelitySweep,
    BerrySweep,
    Polarization,
    Sample,
    OracleCheck,
}

fn default_draft(kind: CommandKind) -> Draft {
    match kind {
        CommandKind::FidelitySweep => preset_draft(Preset::FigFidelity),
        CommandKind::BerrySweep => preset_draft(Preset::FigBerry),
        CommandKind::Polarization => preset_draft(Preset::FigPolarization),
        CommandKind::Sample => Draft { sweep: Vec::new(), shots: 100_000, ..preset_draft(Preset::FigBerry) },
        CommandKind::OracleCheck => Draft {
            n_cells: 2,
            v: Complex64::new(0.5, 0.0),
            u_a: 0.5,
            u_b: 0.5,
            t_total: 10.0,
            steps: 400,
            sweep: Vec::new(),
            ..preset_draft(Preset::FigBerry)
        },
    }
}

fn read_config(path: &Path) -> Result<ConfigFile, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| usage(format!("cannot read config {}: {e}", path.display())))?;
    parse_config(&text)
}

pub fn resolve_experiment(kind: CommandKind, args: &RunArgs) -> Result<Experiment, CliError> {
    let config = match &args.config {
        Some(p) => Some(read_config(p)?),
        None => None,
    };
    resolve_with(kind, args, config)
}

/// Preset, then configuration file, then flags.
pub fn resolve_with(kind: CommandKind, args: &RunArgs, config: Option<ConfigFile>) -> Result<Experiment, CliError> {
    let mut d = match args.preset {
        Some(p) => preset_draft(p),
        None => default_draft(kind),
    };
    if let Some(cfg) = config {
        if let Some(m) = cfg.model {
            if m.u_b.is_some() && m.delta_u.is_some() {
                return Err(usage("invalid config at `model.delta_u`: conflicts with model.u_b"));
            }
            d.n_cells = m.n_cells.unwrap_or(d.n_cells);
            d.v = m.v.map_or(d.v, ComplexSpec::value);
            d.w = m.w.map_or(d.w, ComplexSpec::value);
            d.u_a = m.u_a.unwrap_or(d.u_a);
            d.u_b = m.u_b.unwrap_or(d.u_b);
            if let Some(du) = m.delta_u {
                d.u_b = d.u_a + du;
            }
            d.boundary = m.boundary.unwrap_or(d.boundary);
        }
        d.filling = cfg.filling.unwrap_or(d.filling);
        if let Some(s) = cfg.schedule {
            d.t_total = s.t_total.unwrap_or(d.t_total);
            d.steps = s.steps.unwrap_or(d.steps);
        }
        d.shots = cfg.shots.unwrap_or(d.shots);
        d.seed = cfg.seed.unwrap_or(d.seed);
        d.sweep = cfg.sweep.unwrap_or(d.sweep);
        d.output = cfg.output.or(d.output);
    }
    d.shots = args.shots.unwrap_or(d.shots);
    d.seed = args.seed.unwrap_or(d.seed);
    d.output = args.out.clone().or(d.output);

    let params = SshhParams::new(d.n_cells, d.v, d.w, d.u_a, d.u_b, d.boundary).map_err(|e| usage(format!("invalid config at `model`: {e}")))?;
    let filling = d.filling.resolve(d.n_cells);
    filling.validate(d.n_cells).map_err(|e| usage(format!("invalid config at `filling`: {e}")))?;
    let schedule = Schedule::new(d.t_total, d.steps).map_err(|e| usage(format!("invalid config at `schedule`: {e}")))?;
    for (k, axis) in d.sweep.iter().enumerate() {
        if axis.values.is_empty() {
            return Err(usage(format!("invalid config at `sweep[{k}].values`: empty list")));
        }
        if axis.values.iter().any(|x| !x.is_finite()) {
            return Err(usage(format!("invalid config at `sweep[{k}].values`: non-finite value")));
        }
        if axis.parameter.is_integer() && axis.values.iter().any(|&x| x < 1.0 || x.fract() != 0.0) {
            return Err(usage(format!("invalid config at `sweep[{k}].values`: steps must be positive integers")));
        }
        if d.sweep[..k].iter().any(|a| a.parameter == axis.parameter) {
            return Err(usage(format!("invalid config at `sweep[{k}].parameter`: repeated axis")));
        }
    }
    Ok(Experiment { params, filling, schedule, shots: d.shots, seed: d.seed, sweep: d.sweep, output: d.output })
}

/// Cartesian product of the axes, first axis outermost.
pub fn sweep_points(axes: &[SweepAxis]) -> Vec<Vec<f64>> {
    let mut points = vec![Vec::new()];
    for axis in axes {
        points = points
            .into_iter()
            .flat_map(|p| {
                axis.values.iter().map(move |&x| {
                    let mut q = p.clone();
                    q.push(x);
                    q
                })
            })
            .collect();
    }
    points
}

/// Applies one sweep point. `delta_u` is applied last, relative to `u_a`.
pub fn apply_point(exp: &Experiment, axes: &[SweepAxis], point: &[f64]) -> Result<(SshhParams, Schedule), CliError> {
    let mut p = exp.params;
    let mut s = exp.schedule;
    let mut delta = None;
    for (axis, &x) in axes.iter().zip(point) {
        match axis.parameter {
            SweepParam::V => p.v = Complex64::new(x, 0.0),
            SweepParam::W => p.w = Complex64::new(x, 0.0),
            SweepParam::UA => p.u_a = x,
            SweepParam::UB => p.u_b = x,
            SweepParam::DeltaU => delta = Some(x),
            SweepParam::TTotal => s.t_total = x,
            SweepParam::Steps => s.steps = x as usize,
        }
    }
    if let Some(du) = delta {
        p.u_b = p.u_a + du;
    }
    p.validate().map_err(|e| usage(format!("invalid sweep point: {e}")))?;
    s.validate().map_err(|e| usage(format!("invalid sweep point: {e}")))?;
    Ok((p, s))
}

// ------------------------------------------------------------------- CSV

/// One output row. Missing quantities stay `None` and print as empty fields.
#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub sweep: Vec<f64>,
    pub z_re: Option<f64>,
    pub z_im: Option<f64>,
    pub z_mag: Option<f64>,
    pub gamma_rad: Option<f64>,
    pub gamma_over_pi: Option<f64>,
    pub charge_center: Option<f64>,
    pub polarization: Vec<Option<f64>>,
    pub edge_occ: Option<f64>,
    pub fidelity: Option<f64>,
    pub shots: u64,
    pub seed: Option<u64>,
    pub z_re_se: Option<f64>,
    pub z_im_se: Option<f64>,
    pub gamma_se: Option<f64>,
}

impl ResultRow {
    pub fn empty(sweep: Vec<f64>, n_cells: usize) -> Self {
        ResultRow {
            sweep,
            z_re: None,
            z_im: None,
            z_mag: None,
            gamma_rad: None,
            gamma_over_pi: None,
            charge_center: None,
            polarization: vec![None; n_cells],
            edge_occ: None,
            fidelity: None,
            shots: 0,
            seed: None,
            z_re_se: None,
            z_im_se: None,
            gamma_se: None,
        }
    }

    pub fn from_report(sweep: Vec<f64>, r: &EstimateReport, seed: Option<u64>) -> Self {
        ResultRow {
            sweep,
            z_re: Some(r.z_bar.re),
            z_im: Some(r.z_bar.im),
            z_mag: Some(r.z_magnitude),
            gamma_rad: r.gamma,
            gamma_over_pi: r.gamma_over_pi(),
            charge_center: r.charge_center,
            polarization: r.polarization.iter().map(|&p| Some(p)).collect(),
            edge_occ: Some(r.edge_occupation),
            fidelity: None,
            shots: r.shots,
            seed,
            z_re_se: r.std_errors.z_re,
            z_im_se: r.std_errors.z_im,
            gamma_se: r.std_errors.gamma,
        }
    }
}

pub fn csv_header(sweep_names: &[&str], n_cells: usize) -> String {
    let mut cols: Vec<String> = sweep_names.iter().map(|s| s.to_string()).collect();
    cols.extend(["z_re", "z_im", "z_mag", "gamma_rad", "gamma_over_pi", "charge_center"].map(String::from));
    cols.extend((0..n_cells).map(|j| format!("p_{j}")));
    cols.extend(["edge_occ", "fidelity", "shots", "seed", "z_re_se", "z_im_se", "gamma_se"].map(String::from));
    cols.join(",")
}

/// 17 significant digits.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map(fmt_f64).unwrap_or_default()
}

pub fn csv_line(row: &ResultRow, axes: &[SweepParam]) -> String {
    let mut f: Vec<String> = row
        .sweep
        .iter()
        .zip(axes)
        .map(|(&x, a)| if a.is_integer() { format!("{}", x as u64) } else { fmt_f64(x) })
        .collect();
    f.extend([row.z_re, row.z_im, row.z_mag, row.gamma_rad, row.gamma_over_pi, row.charge_center].map(fmt_opt));
    f.extend(row.polarization.iter().map(|&p| fmt_opt(p)));
    f.push(fmt_opt(row.edge_occ));
    f.push(fmt_opt(row.fidelity));
    f.push(row.shots.to_string());
    f.push(row.seed.map(|s| s.to_string()).unwrap_or_default());
    f.extend([row.z_re_se, row.z_im_se, row.gamma_se].map(fmt_opt));
    f.join(",")
}

pub fn render_csv(axes: &[SweepParam], n_cells: usize, rows: &[ResultRow]) -> String {
    let names: Vec<&str> = axes.iter().map(|a| a.name()).collect();
    let mut out = csv_header(&names, n_cells);
    out.push('\n');
    for r in rows {
        out.push_str(&csv_line(r, axes));
        out.push('\n');
    }
    out
}

/// Parses a result CSV back into rows; the number of sweep columns is
/// everything before `z_re`.
pub fn parse_result_csv(text: &str) -> Result<(Vec<String>, Vec<ResultRow>), CliError> {
    let mut lines = text.lines();
    let header: Vec<&str> = lines.next().ok_or_else(|| usage("empty CSV"))?.split(',').collect();
    let n_sweep = header.iter().position(|&h| h == "z_re").ok_or_else(|| usage("CSV lacks a z_re column"))?;
    let n_cells = header.iter().filter(|h| h.starts_with("p_")).count();
    let expected = n_sweep + 6 + n_cells + 7;
    if header.len() != expected {
        return Err(usage("unexpected CSV column count"));
    }
    let opt = |s: &str| -> Result<Option<f64>, CliError> {
        if s.is_empty() {
            Ok(None)
        } else {
            s.parse::<f64>().map(Some).map_err(|e| usage(format!("bad number {s:?}: {e}")))
        }
    };
    let mut rows = Vec::new();
    for line in lines {
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != expected {
            return Err(usage("row width differs from header"));
        }
        let sweep = f[..n_sweep].iter().map(|s| s.parse::<f64>().map_err(|e| usage(format!("bad number {s:?}: {e}")))).collect::<Result<_, _>>()?;
        let base = n_sweep;
        let pol = (0..n_cells).map(|j| opt(f[base + 6 + j])).collect::<Result<_, _>>()?;
        let tail = base + 6 + n_cells;
        rows.push(ResultRow {
            sweep,
            z_re: opt(f[base])?,
            z_im: opt(f[base + 1])?,
            z_mag: opt(f[base + 2])?,
            gamma_rad: opt(f[base + 3])?,
            gamma_over_pi: opt(f[base + 4])?,
            charge_center: opt(f[base + 5])?,
            polarization: pol,
            edge_occ: opt(f[tail])?,
            fidelity: opt(f[tail + 1])?,
            shots: f[tail + 2].parse().map_err(|e| usage(format!("bad shot count: {e}")))?,
            seed: if f[tail + 3].is_empty() { None } else { Some(f[tail + 3].parse().map_err(|e| usage(format!("bad seed: {e}")))?) },
            z_re_se: opt(f[tail + 4])?,
            z_im_se: opt(f[tail + 5])?,
            gamma_se: opt(f[tail + 6])?,
        });
    }
    Ok((header[..n_sweep].iter().map(|s| s.to_string()).collect(), rows))
}

fn write_output(path: Option<&Path>, text: &str) -> Result<(), CliError> {
    match path {
        Some(p) => std::fs::write(p, text).map_err(|e| usage(format!("cannot write {}: {e}", p.display()))),
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(text.as_bytes()).and_then(|_| out.flush()).map_err(|e| usage(format!("cannot write output: {e}")))
        }
    }
}

// -------------------------------------------------------------- commands

fn warn_fermi(params: &SshhParams, filling: SpinFilling) -> Result<(), CliError> {
    let (_, warnings) = ground_state_spec(params, filling)?;
    for w in warnings {
        eprintln!(
            "warning: levels {} and {} are degenerate at the Fermi level ({:.3e} vs {:.3e}); the filled determinant is not unique",
            w.n_occupied,
            w.n_occupied + 1,
            w.homo,
            w.lumo
        );
    }
    Ok(())
}

/// Prepares the free ground state, evolves it, and reports exact observables
/// plus a sampled row when `shots > 0`.
pub fn evolve_point(params: &SshhParams, filling: SpinFilling, schedule: &Schedule, shots: u64, seed: u64) -> Result<Vec<(EstimateReport, Option<u64>)>, CliError> {
    warn_fermi(params, filling)?;
    let (initial, _) = prepare_initial_state(params, filling)?;
    let fin = run_adiabatic(params, filling, schedule, &initial)?;
    drop(initial);
    let exact = exact_report(&fin, params.n_cells, filling.total())?;
    if exact.low_magnitude {
        eprintln!("warning: |z| = {:.3e} is small; the Berry phase is poorly conditioned", exact.z_magnitude);
    }
    let mut out = vec![(exact, None)];
    if shots > 0 {
        let batch = sample(&fin, shots, seed)?;
        out.push((sampled_report(&batch, params.n_cells, filling.total())?, Some(seed)));
    }
    Ok(out)
}

fn observable_sweep(exp: &Experiment) -> Result<String, CliError> {
    let points = sweep_points(&exp.sweep);
    let resolved: Vec<(SshhParams, Schedule)> = points.iter().map(|pt| apply_point(exp, &exp.sweep, pt)).collect::<Result<_, _>>()?;
    let results: Vec<Result<Vec<ResultRow>, CliError>> = resolved
        .par_iter()
        .zip(points.par_iter())
        .enumerate()
        .map(|(i, ((params, schedule), pt))| {
            // one seed per point so rows stay independent of scheduling
            let seed = exp.seed.wrapping_add(i as u64);
            let reports = evolve_point(params, exp.filling, schedule, exp.shots, seed)?;
            Ok(reports.iter().map(|(r, s)| ResultRow::from_report(pt.clone(), r, *s)).collect())
        })
        .collect();
    let mut rows = Vec::new();
    for r in results {
        rows.extend(r?);
    }
    let axes: Vec<SweepParam> = exp.sweep.iter().map(|a| a.parameter).collect();
    Ok(render_csv(&axes, exp.params.n_cells, &rows))
}

pub fn cmd_berry_sweep(exp: &Experiment) -> Result<String, CliError> {
    if exp.params.boundary != Boundary::Pbc {
        return Err(usage("berry-sweep needs periodic boundaries"));
    }
    if exp.filling != SpinFilling::half(exp.params.n_cells) {
        return Err(usage("berry-sweep needs half filling"));
    }
    for pt in sweep_points(&exp.sweep) {
        let (p, _) = apply_point(exp, &exp.sweep, &pt)?;
        if winding_class(&p) == WindingClass::Critical {
            return Err(usage(format!(
                "w = {} rejected: phase ill-defined near transition, the gap closes at |v| = |w|",
                p.w.re
            )));
        }
    }
    observable_sweep(exp)
}

pub fn cmd_polarization(exp: &Experiment) -> Result<String, CliError> {
    if exp.params.boundary != Boundary::Obc {
        return Err(usage("polarization needs open boundaries"));
    }
    observable_sweep(exp)
}

pub fn cmd_fidelity_sweep(exp: &Experiment) -> Result<String, CliError> {
    let mut t_list = vec![exp.schedule.t_total];
    let mut l_list = vec![exp.schedule.steps];
    let mut outer = Vec::new();
    for axis in &exp.sweep {
        match axis.parameter {
            SweepParam::TTotal => t_list = axis.values.clone(),
            SweepParam::Steps => l_list = axis.values.iter().map(|&x| x as usize).collect(),
            _ => outer.push(axis.clone()),
        }
    }
    if l_list.windows(2).any(|w| w[0] >= w[1]) {
        return Err(usage("invalid config at `sweep`: steps must be strictly ascending"));
    }
    let mut axes: Vec<SweepParam> = outer.iter().map(|a| a.parameter).collect();
    axes.extend([SweepParam::TTotal, SweepParam::Steps]);
    let mut rows = Vec::new();
    for pt in sweep_points(&outer) {
        let (params, _) = apply_point(exp, &outer, &pt)?;
        warn_fermi(&params, exp.filling)?;
        for r in fidelity_sweep(&params, &t_list, &l_list, exp.filling)? {
            let mut sweep = pt.clone();
            sweep.extend([r.t_total, r.steps as f64]);
            let mut row = ResultRow::empty(sweep, params.n_cells);
            row.fidelity = Some(r.fidelity);
            rows.push(row);
        }
    }
    Ok(render_csv(&axes, exp.params.n_cells, &rows))
}

/// `bitstring,count` rows, bit strings written qubit 0 first.
pub fn cmd_sample(exp: &Experiment) -> Result<String, CliError> {
    if exp.shots == 0 {
        return Err(usage("sample needs at least one shot"));
    }
    let points = sweep_points(&exp.sweep);
    if points.len() != 1 {
        return Err(usage("sample takes a single model point; remove the sweep"));
    }
    let (params, schedule) = apply_point(exp, &exp.sweep, &points[0])?;
    let (initial, _) = prepare_initial_state(&params, exp.filling)?;
    let fin = run_adiabatic(&params, exp.filling, &schedule, &initial)?;
    drop(initial);
    let batch = sample(&fin, exp.shots, exp.seed)?;
    let mut out = String::from("bitstring,count\n");
    for (b, c) in batch.iter() {
        let _ = writeln!(out, "{},{c}", bitstring(b, batch.num_qubits));
    }
    Ok(out)
}

/// One oracle contract evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct CheckRecord {
    pub params: SshhParams,
    pub filling: SpinFilling,
    pub check: String,
    pub value: f64,
    pub threshold: f64,
    pub pass: bool,
}

/// The default oracle grid: two cells, both boundaries, five parameter
/// points including `U_A != U_B`, plus a three-cell ring.
pub fn oracle_grid() -> Vec<(SshhParams, SpinFilling)> {
    let pts = [(0.5, 1.5, 0.5, 0.5), (1.0, 0.3, 0.0, 0.0), (0.8, 1.2, 0.2, 0.9), (0.1, 1.0, 1.3, 0.2), (1.2, 0.8, 0.0, 0.4)];
    let mut out = Vec::new();
    for boundary in [Boundary::Obc, Boundary::Pbc] {
        for &(v, w, ua, ub) in &pts {
            out.push((SshhParams::real(2, v, w, ua, ub, boundary).expect("valid grid"), SpinFilling::half(2)));
        }
    }
    out.push((SshhParams::real(3, 0.5, 1.5, 0.3, 0.6, Boundary::Pbc).expect("valid grid"), SpinFilling::half(3)));
    out.push((SshhParams::real(3, 0.5, 1.5, 0.3, 0.6, Boundary::Pbc).expect("valid grid"), SpinFilling::new(2, 3)));
    out
}

pub fn run_oracle_checks(points: &[(SshhParams, SpinFilling)], schedule: &Schedule, flip_boundary_sign: bool) -> Result<Vec<CheckRecord>, CliError> {
    let oracle_opts = OracleOptions { flip_boundary_sign, ..OracleOptions::default() };
    let step_opts = StepOptions { flip_boundary_sign };
    let per_point: Vec<Result<Vec<CheckRecord>, CliError>> = points
        .par_iter()
        .map(|&(params, filling)| {
            let mut recs = Vec::new();
            let mut push = |check: String, value: f64, threshold: f64, pass: bool| recs.push(CheckRecord { params, filling, check, value, threshold, pass });
            if params.n_cells <= 3 {
                for lambda in [0.0, 0.5, 1.0] {
                    let dev = crosscheck_with(&params, filling, lambda, oracle_opts)?;
                    push(format!("pauli_vs_fermionic(lambda={lambda})"), dev, CROSSCHECK_TOL, dev < CROSSCHECK_TOL);
                }
            }
            let inf = trotter_consistency(&params, filling, schedule, step_opts)?;
            push("circuit_vs_fermionic_trotter_infidelity".into(), inf, PARITY_TOL, inf < PARITY_TOL);
            let b = adiabatic_benchmark_with(&params, filling, schedule, step_opts)?;
            push("benchmark_fidelity".into(), b.fidelity, 0.0, (0.0..=1.0 + 1e-12).contains(&b.fidelity));
            push("benchmark_energy_error".into(), b.energy_error, -1e-9, b.energy_error >= -1e-9);
            Ok(recs)
        })
        .collect();
    let mut out = Vec::new();
    for r in per_point {
        out.extend(r?);
    }
    Ok(out)
}

pub fn render_checks(records: &[CheckRecord]) -> String {
    let mut out = String::from("n_cells,boundary,v_re,v_im,w_re,w_im,u_a,u_b,n_up,n_down,check,value,threshold,pass\n");
    for r in records {
        let p = &r.params;
        let boundary = match p.boundary {
            Boundary::Pbc => "pbc",
            Boundary::Obc => "obc",
        };
        let _ = writeln!(
            out,
            "{},{boundary},{},{},{},{},{},{},{},{},{},{},{},{}",
            p.n_cells,
            fmt_f64(p.v.re),
            fmt_f64(p.v.im),
            fmt_f64(p.w.re),
            fmt_f64(p.w.im),
            fmt_f64(p.u_a),
            fmt_f64(p.u_b),
            r.filling.n_up,
            r.filling.n_down,
            r.check,
            fmt_f64(r.value),
            fmt_f64(r.threshold),
            r.pass
        );
    }
    out
}

pub fn cmd_oracle_check(args: &OracleArgs) -> Result<String, CliError> {
    let (points, schedule) = if args.run.config.is_none() && args.run.preset.is_none() {
        let exp = resolve_with(CommandKind::OracleCheck, &args.run, None)?;
        (oracle_grid(), exp.schedule)
    } else {
        let exp = resolve_experiment(CommandKind::OracleCheck, &args.run)?;
        let mut pts = Vec::new();
        let mut schedule = exp.schedule;
        for pt in sweep_points(&exp.sweep) {
            let (p, s) = apply_point(&exp, &exp.sweep, &pt)?;
            schedule = s;
            pts.push((p, exp.filling));
        }
        (pts, schedule)
    };
    if let Some((p, _)) = points.iter().find(|(p, _)| p.n_cells > 4) {
        return Err(usage(format!("oracle-check is limited to four cells, got {}", p.n_cells)));
    }
    let records = run_oracle_checks(&points, &schedule, args.flip_boundary_sign)?;
    let failed = records.iter().filter(|r| !r.pass).count();
    eprintln!("oracle-check: {} of {} checks passed", records.len() - failed, records.len());
    let csv = render_checks(&records);
    if failed > 0 {
        let out = args.run.out.as_deref();
        write_output(out, &csv)?;
        return Err(CliError::Contract(format!("{failed} oracle checks failed")));
    }
    Ok(csv)
}

// ------------------------------------------------------------------ main

pub fn thread_count(flag: Option<usize>) -> Result<usize, CliError> {
    if let Some(n) = flag {
        if n == 0 {
            return Err(usage("--threads must be positive"));
        }
        return Ok(n);
    }
    match std::env::var("SSHH_THREADS") {
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(n),
            _ => Err(usage(format!("SSHH_THREADS must be a positive integer, got {v:?}"))),
        },
        Err(_) => Ok(std::thread::available_parallelism().map_or(1, |n| n.get()).min(DEFAULT_MAX_THREADS)),
    }
}

fn run_command(command: &Command) -> Result<(), CliError> {
    let (kind, run) = match command {
        Command::FidelitySweep(a) => (CommandKind::FidelitySweep, a),
        Command::BerrySweep(a) => (CommandKind::BerrySweep, a),
        Command::Polarization(a) => (CommandKind::Polarization, a),
        Command::Sample(a) => (CommandKind::Sample, a),
        Command::OracleCheck(a) => (CommandKind::OracleCheck, &a.run),
    };
    let threads = thread_count(run.threads)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| CliError::Lib(Error::Resource(format!("cannot start worker pool: {e}"))))?;
    pool.install(|| {
        if let Command::OracleCheck(a) = command {
            let csv = cmd_oracle_check(a)?;
            return write_output(a.run.out.as_deref(), &csv);
        }
        let exp = resolve_experiment(kind, run)?;
        let csv = match kind {
            CommandKind::FidelitySweep => cmd_fidelity_sweep(&exp)?,
            CommandKind::BerrySweep => cmd_berry_sweep(&exp)?,
            CommandKind::Polarization => cmd_polarization(&exp)?,
            CommandKind::Sample => cmd_sample(&exp)?,
            CommandKind::OracleCheck => unreachable!("handled above"),
        };
        write_output(exp.output.as_deref(), &csv)
    })
}

pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match run_command(&cli.command) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
