//! Command-line front end for the spectral laboratory. One experiment per
//! invocation, machine-readable output, and an exit code that means
//! something: 0 when every check in scope passed, 1 when a verification
//! failed or a computation broke down, 2 when the configuration is
//! unusable.

// Same numerics house style as the library crate.
#![allow(clippy::excessive_precision)]
#![allow(clippy::neg_cmp_op_on_partial_ord)]
#![allow(clippy::needless_range_loop)]

use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use num_complex::Complex64;
use num_traits::ToPrimitive;
use serde::{Deserialize, Serialize};

use anosov_spectra::error::Error;
use anosov_spectra::lattice_maps::ToralAutomorphism;
use anosov_spectra::par;
use anosov_spectra::perturbed_maps::{OrbitTable, Perturbation, PerturbedMap};
use anosov_spectra::suite;
use anosov_spectra::suspension::{
    strip_constants, FlowResonanceLattice, LatticePoint, SuspensionFlow, StripReport,
};
use anosov_spectra::trace_lab::{
    gaussian_average_experiment, gaussian_to_csv, pressure_estimate, pressure_estimate_shifted,
    verify_global_trace, GaussianRecord, PressureEstimate, TestFunction, TraceReport,
};
use anosov_spectra::transfer::{extract_resonances, MapResonances, DEFAULT_MATCH_TOL};
use anosov_spectra::zeta::{scan_to_csv, ScanRow, ZetaEvaluator};

const TAU: f64 = std::f64::consts::TAU;

/// Horizon ceilings. Aggregate tables are cheap; explicit orbit tables run
/// Newton continuation per primitive orbit and grow like lambda^p.
const LINEAR_P_CAP: usize = 30;
const PERTURBED_P_CAP: usize = 8;
const K_CAP: usize = 24;
const J_CAP: i64 = 100_000;

#[derive(Parser)]
#[command(
    name = "anosov-spectra",
    version,
    about = "Spectral laboratory for suspension flows over hyperbolic toral maps",
    propagate_version = true
)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Closed-orbit census: fixed-point counts, primitive orbits, trace sums
    Orbits(OrbitsArgs),
    /// Transfer-operator spectrum and the flow resonance lattice
    Resonances(ResonancesArgs),
    /// Weighted zeta function on a frequency grid, with pole winding checks
    ZetaScan(ZetaScanArgs),
    /// Trace-formula check over a family of bump test functions
    VerifyTrace(VerifyTraceArgs),
    /// Windowed pressure estimates for the unstable-potential family
    Pressure(PressureArgs),
    /// Essential-spectrum strip constants from the shortest orbit
    StripConstants(StripConstantsArgs),
    /// Gaussian-averaged second moment of the windowed orbit sum
    AppendixA(AppendixAArgs),
    /// Full verification suite at reference settings
    All(AllArgs),
}

#[derive(Args, Clone, Debug, Default)]
struct SystemArgs {
    /// Map specification file (JSON: matrix, epsilon, trig terms)
    #[arg(long, value_name = "PATH")]
    system: Option<PathBuf>,
    /// Row-major integer matrix entries, e.g. 1,1,1,2
    #[arg(long, value_name = "ENTRIES")]
    matrix: Option<String>,
    /// Drop the perturbation and use the linear map
    #[arg(long)]
    linear: bool,
    /// Strength of the built-in trigonometric perturbation
    #[arg(long)]
    epsilon: Option<f64>,
    /// Roof height of the suspension
    #[arg(long)]
    r: Option<f64>,
}

#[derive(Args, Clone, Debug, Default)]
struct IoArgs {
    /// JSON file mirroring the flags; explicit flags win
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Worker threads (default: all cores; ANOSOV_SPECTRA_THREADS overrides
    /// the default, the flag overrides both)
    #[arg(long)]
    threads: Option<usize>,
    /// Output target: a file path, or "json"/"csv"/"-" for stdout
    #[arg(long, value_name = "PATH|FMT")]
    out: Option<String>,
}

#[derive(Args, Debug)]
#[command(allow_negative_numbers = true)]
struct OrbitsArgs {
    #[command(flatten)]
    sys: SystemArgs,
    #[command(flatten)]
    io: IoArgs,
    /// Largest map period in the table
    #[arg(long)]
    pmax: Option<usize>,
}

#[derive(Args, Debug)]
#[command(allow_negative_numbers = true)]
struct ResonancesArgs {
    #[command(flatten)]
    sys: SystemArgs,
    #[command(flatten)]
    io: IoArgs,
    /// Fourier truncation of the transfer operator
    #[arg(long = "K")]
    k: Option<usize>,
    /// Lattice window: translates with |j| <= J per resonance family
    #[arg(long = "J")]
    j: Option<i64>,
    /// Discard spectrum below this modulus
    #[arg(long)]
    mu_min: Option<f64>,
}

#[derive(Args, Debug)]
#[command(allow_negative_numbers = true)]
struct ZetaScanArgs {
    #[command(flatten)]
    sys: SystemArgs,
    #[command(flatten)]
    io: IoArgs,
    /// Left edge of the Re(lambda) grid
    #[arg(long)]
    re_min: Option<f64>,
    /// Right edge of the Re(lambda) grid
    #[arg(long)]
    re_max: Option<f64>,
    /// Number of grid points
    #[arg(long)]
    points: Option<usize>,
    /// Height Im(lambda) of the scan line
    #[arg(long)]
    im: Option<f64>,
    /// Orbit-sum horizon in flow time
    #[arg(long)]
    t_max: Option<f64>,
    /// Contour radius for the winding-number checks
    #[arg(long)]
    radius: Option<f64>,
    /// Fourier truncation of the transfer operator
    #[arg(long = "K")]
    k: Option<usize>,
    /// Discard spectrum below this modulus
    #[arg(long)]
    mu_min: Option<f64>,
}

#[derive(Args, Debug)]
#[command(allow_negative_numbers = true)]
struct VerifyTraceArgs {
    #[command(flatten)]
    sys: SystemArgs,
    #[command(flatten)]
    io: IoArgs,
    /// Number of bump test functions, centered at r, 2r, ..
    #[arg(long)]
    bumps: Option<usize>,
    /// Half-width of each bump
    #[arg(long)]
    scale: Option<f64>,
    /// Lattice window: translates with |j| <= J per resonance family
    #[arg(long = "J")]
    j: Option<i64>,
    /// Agreement tolerance between the two sides
    #[arg(long)]
    tol: Option<f64>,
    /// Fourier truncation of the transfer operator
    #[arg(long = "K")]
    k: Option<usize>,
    /// Discard spectrum below this modulus
    #[arg(long)]
    mu_min: Option<f64>,
}

#[derive(Args, Debug)]
#[command(allow_negative_numbers = true)]
struct PressureArgs {
    #[command(flatten)]
    sys: SystemArgs,
    #[command(flatten)]
    io: IoArgs,
    /// Multiplier of the unstable potential; omit to run 0, 1, 2 with checks
    #[arg(long)]
    g: Option<f64>,
    /// Exponential lift applied inside the windowed sums
    #[arg(long)]
    shift: Option<f64>,
    /// First window center
    #[arg(long)]
    t_min: Option<f64>,
    /// Last window center
    #[arg(long)]
    t_max: Option<f64>,
    /// Number of window centers
    #[arg(long)]
    t_count: Option<usize>,
}

#[derive(Args, Debug)]
#[command(allow_negative_numbers = true)]
struct StripConstantsArgs {
    #[command(flatten)]
    sys: SystemArgs,
    #[command(flatten)]
    io: IoArgs,
    /// Strip parameter in (0, 1)
    #[arg(long)]
    delta: Option<f64>,
    /// First window center of the embedded pressure fit
    #[arg(long)]
    t_min: Option<f64>,
    /// Last window center of the embedded pressure fit
    #[arg(long)]
    t_max: Option<f64>,
    /// Number of window centers of the embedded pressure fit
    #[arg(long)]
    t_count: Option<usize>,
}

#[derive(Args, Debug)]
#[command(allow_negative_numbers = true)]
struct AppendixAArgs {
    #[command(flatten)]
    sys: SystemArgs,
    #[command(flatten)]
    io: IoArgs,
    /// Gaussian width of the averaging kernel
    #[arg(long)]
    sigma: Option<f64>,
    /// First window center
    #[arg(long)]
    t_min: Option<f64>,
    /// Last window center
    #[arg(long)]
    t_max: Option<f64>,
    /// Number of window centers
    #[arg(long)]
    t_count: Option<usize>,
}

#[derive(Args, Debug)]
#[command(allow_negative_numbers = true)]
struct AllArgs {
    #[command(flatten)]
    io: IoArgs,
}

/// Config file mirroring the flags, kebab-case keys. Unknown keys are
/// rejected so a typo cannot silently fall back to a default.
#[derive(Debug, Default, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields, default)]
struct ConfigFile {
    system: Option<PathBuf>,
    matrix: Option<String>,
    linear: Option<bool>,
    epsilon: Option<f64>,
    r: Option<f64>,
    threads: Option<usize>,
    out: Option<String>,
    pmax: Option<usize>,
    #[serde(rename = "K")]
    k: Option<usize>,
    #[serde(rename = "J")]
    j: Option<i64>,
    mu_min: Option<f64>,
    tol: Option<f64>,
    bumps: Option<usize>,
    scale: Option<f64>,
    g: Option<f64>,
    shift: Option<f64>,
    t_min: Option<f64>,
    t_max: Option<f64>,
    t_count: Option<usize>,
    sigma: Option<f64>,
    re_min: Option<f64>,
    re_max: Option<f64>,
    im: Option<f64>,
    points: Option<usize>,
    delta: Option<f64>,
    radius: Option<f64>,
}

impl ConfigFile {
    fn load(path: &Option<PathBuf>) -> Result<ConfigFile, CliError> {
        let Some(p) = path else {
            return Ok(ConfigFile::default());
        };
        let text = fs::read_to_string(p)
            .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", p.display())))?;
        serde_json::from_str(&text)
            .map_err(|e| CliError::Config(format!("bad config {}: {e}", p.display())))
    }
}

#[derive(Debug)]
enum CliError {
    /// Unusable configuration; exit 2.
    Config(String),
    /// The computation itself failed or refused; exit 1.
    Run(String),
}

/// Requests the core rejects up front (bad systems, windows or grids that
/// cannot satisfy the run as configured) are configuration problems;
/// breakdowns inside an accepted computation are runtime failures.
fn core_err(e: Error) -> CliError {
    match e {
        Error::InvalidInput(_)
        | Error::NotHyperbolic { .. }
        | Error::NotUnimodular { .. }
        | Error::SingularPower { .. }
        | Error::WindowTooSmall { .. }
        | Error::SupportExceedsTable { .. }
        | Error::EmptyWindow { .. }
        | Error::NearPole { .. }
        | Error::PoleOnContour { .. } => CliError::Config(e.to_string()),
        _ => CliError::Run(e.to_string()),
    }
}

#[derive(Serialize)]
struct FailureRecord {
    kind: &'static str,
    error: String,
}

struct Output {
    json: String,
    csv: Option<String>,
    pass: bool,
}

fn pick<T>(flag: Option<T>, cfg: Option<T>, default: T) -> T {
    flag.or(cfg).unwrap_or(default)
}

fn to_json<T: Serialize>(value: &T) -> Result<String, CliError> {
    suite::to_json(value).map_err(core_err)
}

// ---------------------------------------------------------------------------
// system resolution

struct SystemSetup {
    map: PerturbedMap,
    roof: f64,
}

impl SystemSetup {
    fn is_linear(&self) -> bool {
        self.map.epsilon() == 0.0
    }

    fn p_cap(&self) -> usize {
        if self.is_linear() {
            LINEAR_P_CAP
        } else {
            PERTURBED_P_CAP
        }
    }

    fn flow(&self) -> Result<SuspensionFlow, CliError> {
        SuspensionFlow::new(self.map.clone(), self.roof).map_err(core_err)
    }

    /// Orbit table up to map period `horizon`; aggregates for linear maps,
    /// Newton-continued orbits otherwise.
    fn table(&self, horizon: usize) -> Result<OrbitTable, CliError> {
        if horizon == 0 || horizon > self.p_cap() {
            return Err(CliError::Config(format!(
                "period horizon {horizon} outside 1..={} for this system",
                self.p_cap()
            )));
        }
        if self.is_linear() {
            Ok(OrbitTable::linear_aggregates(self.map.linear(), horizon))
        } else {
            OrbitTable::perturbed(&self.map, horizon).map_err(core_err)
        }
    }

    fn resonances(&self, k_cut: usize, mu_min: f64) -> Result<MapResonances, CliError> {
        if self.is_linear() {
            return Ok(MapResonances::exact_linear());
        }
        if k_cut == 0 || k_cut > K_CAP {
            return Err(CliError::Config(format!("K = {k_cut} outside 1..={K_CAP}")));
        }
        if !(mu_min > 0.0 && mu_min < 1.0) {
            return Err(CliError::Config(format!("mu-min = {mu_min} outside (0, 1)")));
        }
        extract_resonances(&self.map, k_cut, mu_min, DEFAULT_MATCH_TOL).map_err(core_err)
    }

    fn lattice(&self, res: &MapResonances, j_max: i64) -> Result<FlowResonanceLattice, CliError> {
        if !(1..=J_CAP).contains(&j_max) {
            return Err(CliError::Config(format!("J = {j_max} outside 1..={J_CAP}")));
        }
        if self.is_linear() {
            FlowResonanceLattice::linear(self.roof, j_max).map_err(core_err)
        } else {
            FlowResonanceLattice::from_resonances(self.roof, res, j_max).map_err(core_err)
        }
    }
}

fn parse_matrix(text: &str) -> Result<(Vec<i64>, ToralAutomorphism), CliError> {
    let entries: Vec<i64> = text
        .split(',')
        .map(|t| t.trim().parse::<i64>())
        .collect::<Result<_, _>>()
        .map_err(|e| CliError::Config(format!("bad matrix entry in {text:?}: {e}")))?;
    let dim = (entries.len() as f64).sqrt().round() as usize;
    if dim == 0 || dim * dim != entries.len() {
        return Err(CliError::Config(format!(
            "matrix needs a square number of entries, got {}",
            entries.len()
        )));
    }
    let rows: Vec<Vec<i64>> = entries.chunks(dim).map(|c| c.to_vec()).collect();
    let auto = ToralAutomorphism::new(&rows).map_err(core_err)?;
    Ok((entries, auto))
}

fn resolve_system(sys: &SystemArgs, cfg: &ConfigFile) -> Result<SystemSetup, CliError> {
    let roof = pick(sys.r, cfg.r, 1.0);
    if !(roof.is_finite() && roof > 0.0) {
        return Err(CliError::Config(format!("roof must be positive, got {roof}")));
    }
    let linear = sys.linear || cfg.linear.unwrap_or(false);

    if let Some(path) = sys.system.as_ref().or(cfg.system.as_ref()) {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read system {}: {e}", path.display())))?;
        let loaded = PerturbedMap::from_json(&text).map_err(core_err)?;
        let map = if linear {
            let dim = loaded.dim();
            PerturbedMap::new(loaded.linear().clone(), 0.0, Perturbation::empty(dim))
                .map_err(core_err)?
        } else {
            loaded
        };
        return Ok(SystemSetup { map, roof });
    }

    let matrix_text = sys
        .matrix
        .clone()
        .or_else(|| cfg.matrix.clone())
        .unwrap_or_else(|| "1,1,1,2".into());
    let (entries, auto) = parse_matrix(&matrix_text)?;
    let epsilon = if linear {
        0.0
    } else {
        pick(sys.epsilon, cfg.epsilon, 0.0)
    };
    let map = if epsilon == 0.0 {
        let dim = auto.dim();
        PerturbedMap::new(auto, 0.0, Perturbation::empty(dim)).map_err(core_err)?
    } else if entries == [1, 1, 1, 2] {
        PerturbedMap::standard_example(epsilon)
    } else {
        return Err(CliError::Config(
            "nonzero --epsilon needs the built-in 1,1,1,2 matrix; other maps take \
             their perturbation from a --system file"
                .into(),
        ));
    };
    Ok(SystemSetup { map, roof })
}

// ---------------------------------------------------------------------------
// output plumbing

fn emit(target: &Option<String>, json: &str, csv: Option<&str>) -> Result<(), CliError> {
    match target.as_deref() {
        None | Some("-") | Some("json") => {
            println!("{json}");
            Ok(())
        }
        Some("csv") => {
            let c = csv.ok_or_else(|| CliError::Config("this command has no CSV form".into()))?;
            print!("{c}");
            Ok(())
        }
        Some(path) if path.ends_with(".csv") => {
            let c = csv.ok_or_else(|| CliError::Config("this command has no CSV form".into()))?;
            fs::write(path, c).map_err(|e| CliError::Config(format!("cannot write {path}: {e}")))
        }
        Some(path) => fs::write(path, format!("{json}\n"))
            .map_err(|e| CliError::Config(format!("cannot write {path}: {e}"))),
    }
}

fn resolve_threads(flag: Option<usize>, cfg: Option<usize>) -> Result<Option<usize>, CliError> {
    let chosen = if flag.is_some() {
        flag
    } else if let Ok(s) = std::env::var("ANOSOV_SPECTRA_THREADS") {
        let t: usize = s.trim().parse().map_err(|_| {
            CliError::Config(format!("ANOSOV_SPECTRA_THREADS must be an integer, got {s:?}"))
        })?;
        Some(t)
    } else {
        cfg
    };
    if chosen == Some(0) {
        return Err(CliError::Config("thread count must be at least 1".into()));
    }
    Ok(chosen)
}

fn config_failure(msg: String) -> u8 {
    let record = FailureRecord { kind: "config", error: msg };
    let text = suite::to_json(&record)
        .unwrap_or_else(|_| format!("{{\"kind\":\"config\",\"error\":{:?}}}", record.error));
    eprintln!("{text}");
    2
}

/// Loads the config, pins the thread pool, runs the body, writes the output.
fn drive(io: &IoArgs, body: impl FnOnce(&ConfigFile) -> Result<Output, CliError> + Send) -> u8 {
    let cfg = match ConfigFile::load(&io.config) {
        Ok(c) => c,
        Err(CliError::Config(m)) | Err(CliError::Run(m)) => return config_failure(m),
    };
    let threads = match resolve_threads(io.threads, cfg.threads) {
        Ok(t) => t,
        Err(CliError::Config(m)) | Err(CliError::Run(m)) => return config_failure(m),
    };
    let target = io.out.clone().or_else(|| cfg.out.clone());
    let result = match threads {
        Some(w) => par::with_width(w, || body(&cfg)),
        None => body(&cfg),
    };
    match result {
        Ok(out) => match emit(&target, &out.json, out.csv.as_deref()) {
            Ok(()) => u8::from(!out.pass),
            Err(CliError::Config(m)) | Err(CliError::Run(m)) => config_failure(m),
        },
        Err(CliError::Config(m)) => config_failure(m),
        Err(CliError::Run(m)) => {
            let record = FailureRecord { kind: "runtime", error: m };
            let text = suite::to_json(&record)
                .unwrap_or_else(|_| format!("{{\"kind\":\"runtime\",\"error\":{:?}}}", record.error));
            if emit(&target, &text, None).is_err() {
                eprintln!("{text}");
            }
            1
        }
    }
}

// ---------------------------------------------------------------------------
// commands

#[derive(Serialize)]
struct OrbitsOut {
    epsilon: f64,
    p_max: usize,
    fixed_point_counts: Vec<u64>,
    primitive_orbit_counts: Vec<u64>,
    trace_sums: Vec<f64>,
    determinant_check: bool,
    pass: bool,
}

fn run_orbits(a: &OrbitsArgs, cfg: &ConfigFile) -> Result<Output, CliError> {
    let setup = resolve_system(&a.sys, cfg)?;
    let p_max = pick(a.pmax, cfg.pmax, 8);
    let table = setup.table(p_max)?;
    let classes = table.classes_up_to(p_max).map_err(core_err)?;

    let mut fixed = vec![0.0f64; p_max];
    let mut primitive = vec![0.0f64; p_max];
    for c in &classes {
        fixed[c.map_period() - 1] += c.count * c.primitive_period as f64;
        if c.iterate == 1 {
            primitive[c.primitive_period - 1] += c.count;
        }
    }
    let fixed_point_counts: Vec<u64> = fixed.iter().map(|&v| v.round() as u64).collect();
    let primitive_orbit_counts: Vec<u64> = primitive.iter().map(|&v| v.round() as u64).collect();
    let trace_sums = (1..=p_max)
        .map(|p| table.trace_sum(p))
        .collect::<Result<Vec<_>, _>>()
        .map_err(core_err)?;

    // The census survives the perturbation: Newton continuation moves orbits
    // without creating or destroying them, so the determinant counts of the
    // linear part stay exact.
    let determinant_check = (1..=p_max).all(|p| {
        setup
            .map
            .linear()
            .count_fixed_points(p)
            .to_u64()
            .is_some_and(|expected| expected == fixed_point_counts[p - 1])
    });

    let out = OrbitsOut {
        epsilon: setup.map.epsilon(),
        p_max,
        fixed_point_counts,
        primitive_orbit_counts,
        trace_sums,
        determinant_check,
        pass: determinant_check,
    };
    Ok(Output { json: to_json(&out)?, csv: None, pass: out.pass })
}

#[derive(Serialize)]
struct ResonancesOut {
    epsilon: f64,
    roof: f64,
    k_cut: usize,
    mu_min: f64,
    j_max: i64,
    eigenvalues_re: Vec<f64>,
    eigenvalues_im: Vec<f64>,
    match_dists: Vec<f64>,
    discarded_power_sums: Vec<f64>,
    trivial_beyond_leading: bool,
    lattice_count: usize,
    max_im: f64,
    grid_gap: f64,
    conjugation_gap: f64,
    periodicity_gap: f64,
    entries: Vec<LatticePoint>,
    pass: bool,
}

fn run_resonances(a: &ResonancesArgs, cfg: &ConfigFile) -> Result<Output, CliError> {
    let setup = resolve_system(&a.sys, cfg)?;
    let k_cut = pick(a.k, cfg.k, 12);
    let mu_min = pick(a.mu_min, cfg.mu_min, 0.005);
    let j_max = pick(a.j, cfg.j, 12);

    let res = setup.resonances(k_cut, mu_min)?;
    let lattice = setup.lattice(&res, j_max)?;

    let max_im = lattice
        .entries
        .iter()
        .map(|e| e.im)
        .fold(f64::NEG_INFINITY, f64::max);
    let grid_gap = if setup.is_linear() {
        lattice
            .entries
            .iter()
            .map(|e| (e.re - TAU * e.j as f64 / setup.roof).abs().max(e.im.abs()))
            .fold(0.0f64, f64::max)
    } else {
        0.0
    };
    let conjugation_gap = lattice.conjugation_gap();
    let periodicity_gap = lattice.periodicity_gap();

    let pass = if setup.is_linear() {
        grid_gap < 1e-12 && lattice.entries.len() == (2 * j_max + 1) as usize
    } else {
        max_im <= 1e-8 && conjugation_gap <= 1e-6
    };

    let out = ResonancesOut {
        epsilon: setup.map.epsilon(),
        roof: setup.roof,
        k_cut: res.k_cut,
        mu_min: res.mu_min,
        j_max,
        eigenvalues_re: res.eigenvalues.iter().map(|m| m.re).collect(),
        eigenvalues_im: res.eigenvalues.iter().map(|m| m.im).collect(),
        match_dists: res.match_dists.clone(),
        discarded_power_sums: res.discarded_power_sums.clone(),
        trivial_beyond_leading: res.trivial_beyond_leading,
        lattice_count: lattice.entries.len(),
        max_im,
        grid_gap,
        conjugation_gap,
        periodicity_gap,
        entries: lattice.entries.clone(),
        pass,
    };
    Ok(Output { json: to_json(&out)?, csv: Some(lattice.to_csv()), pass })
}

#[derive(Serialize)]
struct WindingCheck {
    center_re: f64,
    radius: f64,
    winding: i64,
    expected: i64,
}

#[derive(Serialize)]
struct ZetaScanOut {
    epsilon: f64,
    roof: f64,
    t_max: f64,
    im: f64,
    windings: Vec<WindingCheck>,
    rows: Vec<ScanRow>,
    pass: bool,
}

fn run_zeta_scan(a: &ZetaScanArgs, cfg: &ConfigFile) -> Result<Output, CliError> {
    let setup = resolve_system(&a.sys, cfg)?;
    let re_min = pick(a.re_min, cfg.re_min, -10.0);
    let re_max = pick(a.re_max, cfg.re_max, 10.0);
    let points = pick(a.points, cfg.points, 41);
    let im = pick(a.im, cfg.im, 1.0);
    let t_max = pick(a.t_max, cfg.t_max, 5.0 * setup.roof);
    let radius = pick(a.radius, cfg.radius, 1.0 / setup.roof);

    if !(re_max > re_min) {
        return Err(CliError::Config(format!(
            "re-max = {re_max} must exceed re-min = {re_min}"
        )));
    }
    if !(2..=100_000).contains(&points) {
        return Err(CliError::Config(format!("points = {points} outside 2..=100000")));
    }
    if !(radius > 0.0) {
        return Err(CliError::Config(format!("radius must be positive, got {radius}")));
    }

    let horizon = (t_max / setup.roof).floor() as usize;
    let table = setup.table(horizon.max(1))?;
    let res = setup.resonances(pick(a.k, cfg.k, 12), pick(a.mu_min, cfg.mu_min, 0.005))?;
    let ev = ZetaEvaluator::new(setup.flow()?, &table, res, t_max).map_err(core_err)?;

    let step = (re_max - re_min) / (points - 1) as f64;
    let lambdas: Vec<Complex64> = (0..points)
        .map(|i| Complex64::new(re_min + i as f64 * step, im))
        .collect();
    let rows = ev.scan(&lambdas).map_err(core_err)?;

    // One simple pole of zeta_1 sits in each lattice cell along the real
    // axis; the winding of the resonance form must see exactly it.
    let centers = [0.0, TAU / setup.roof];
    let mut windings = Vec::new();
    let mut pass = true;
    for c in centers {
        let w = ev
            .residue_at(Complex64::new(c, 0.0), radius)
            .map_err(core_err)?;
        pass &= w == 1;
        windings.push(WindingCheck { center_re: c, radius, winding: w, expected: 1 });
    }

    let out = ZetaScanOut {
        epsilon: setup.map.epsilon(),
        roof: setup.roof,
        t_max,
        im,
        windings,
        rows,
        pass,
    };
    Ok(Output { json: to_json(&out)?, csv: Some(scan_to_csv(&out.rows)), pass })
}

#[derive(Serialize)]
struct VerifyTraceOut {
    epsilon: f64,
    roof: f64,
    bumps: usize,
    scale: f64,
    j_max: i64,
    tolerance: f64,
    reports: Vec<TraceReport>,
    pass: bool,
}

fn run_verify_trace(a: &VerifyTraceArgs, cfg: &ConfigFile) -> Result<Output, CliError> {
    let setup = resolve_system(&a.sys, cfg)?;
    let bumps = pick(a.bumps, cfg.bumps, 5);
    let scale = pick(a.scale, cfg.scale, 0.4 * setup.roof);
    let j_max = pick(a.j, cfg.j, 4000);
    let tol = pick(a.tol, cfg.tol, if setup.is_linear() { 1e-8 } else { 1e-3 });

    if bumps == 0 {
        return Err(CliError::Config("bumps must be at least 1".into()));
    }
    if !(scale > 0.0 && scale < setup.roof) {
        return Err(CliError::Config(format!(
            "scale = {scale} outside (0, roof = {})",
            setup.roof
        )));
    }
    if !(tol > 0.0) {
        return Err(CliError::Config(format!("tol must be positive, got {tol}")));
    }

    let table = setup.table(bumps)?;
    let res = setup.resonances(pick(a.k, cfg.k, 12), pick(a.mu_min, cfg.mu_min, 0.005))?;
    let lattice = setup.lattice(&res, j_max)?;
    let flow = setup.flow()?;

    let phis = (1..=bumps)
        .map(|d| TestFunction::bump(scale, d as f64 * setup.roof))
        .collect::<Result<Vec<_>, _>>()
        .map_err(core_err)?;
    let reports = verify_global_trace(&flow, &table, &lattice, &phis, tol).map_err(core_err)?;
    let pass = reports.iter().all(|r| r.pass);

    let out = VerifyTraceOut {
        epsilon: setup.map.epsilon(),
        roof: setup.roof,
        bumps,
        scale,
        j_max,
        tolerance: tol,
        reports,
        pass,
    };
    Ok(Output { json: to_json(&out)?, csv: None, pass })
}

fn time_grid(
    t_min: f64,
    t_max: f64,
    t_count: usize,
) -> Result<Vec<f64>, CliError> {
    if !(2..=10_000).contains(&t_count) {
        return Err(CliError::Config(format!("t-count = {t_count} outside 2..=10000")));
    }
    if !(t_max > t_min) {
        return Err(CliError::Config(format!(
            "t-max = {t_max} must exceed t-min = {t_min}"
        )));
    }
    let step = (t_max - t_min) / (t_count - 1) as f64;
    Ok((0..t_count).map(|i| t_min + i as f64 * step).collect())
}

#[derive(Serialize)]
struct PressureOut {
    epsilon: f64,
    roof: f64,
    t_grid: Vec<f64>,
    rate_reference: Option<f64>,
    single: Option<PressureEstimate>,
    zero: Option<PressureEstimate>,
    psi_u: Option<PressureEstimate>,
    two_psi_u: Option<PressureEstimate>,
    pass: bool,
}

fn run_pressure(a: &PressureArgs, cfg: &ConfigFile) -> Result<Output, CliError> {
    let setup = resolve_system(&a.sys, cfg)?;
    let t_grid = time_grid(
        pick(a.t_min, cfg.t_min, 8.0),
        pick(a.t_max, cfg.t_max, 20.0),
        pick(a.t_count, cfg.t_count, 13),
    )?;
    let horizon = ((t_grid[t_grid.len() - 1] + 1.0) / setup.roof).floor() as usize;
    let table = setup.table(horizon.max(1))?;
    let flow = setup.flow()?;

    let g_flag = a.g.or(cfg.g);
    let shift = a.shift.or(cfg.shift);

    if let Some(g) = g_flag {
        let est = pressure_estimate_shifted(&table, &flow, g, shift.unwrap_or(0.0), &t_grid)
            .map_err(core_err)?;
        let out = PressureOut {
            epsilon: setup.map.epsilon(),
            roof: setup.roof,
            t_grid,
            rate_reference: None,
            single: Some(est),
            zero: None,
            psi_u: None,
            two_psi_u: None,
            pass: true,
        };
        return Ok(Output { json: to_json(&out)?, csv: None, pass: true });
    }

    let zero = pressure_estimate(&table, &flow, 0.0, &t_grid).map_err(core_err)?;
    let psi_u = pressure_estimate(&table, &flow, 1.0, &t_grid).map_err(core_err)?;
    let two_psi_u = pressure_estimate(&table, &flow, 2.0, &t_grid).map_err(core_err)?;

    // The unit-potential pressure vanishes for every system here; the outer
    // two have closed forms only when the map is linear.
    let mut pass = psi_u.p_hat.abs() <= 0.05;
    let rate_reference = if setup.is_linear() {
        let rate = setup.map.linear().expansion_rate() / setup.roof;
        pass = pass
            && (zero.p_hat - rate).abs() <= 0.05 * rate
            && (two_psi_u.p_hat + rate).abs() <= 0.05 * rate;
        Some(rate)
    } else {
        None
    };

    let out = PressureOut {
        epsilon: setup.map.epsilon(),
        roof: setup.roof,
        t_grid,
        rate_reference,
        single: None,
        zero: Some(zero),
        psi_u: Some(psi_u),
        two_psi_u: Some(two_psi_u),
        pass,
    };
    Ok(Output { json: to_json(&out)?, csv: None, pass })
}

#[derive(Serialize)]
struct StripOut {
    epsilon: f64,
    roof: f64,
    report: StripReport,
    rate_reference: Option<f64>,
    strip_closed_form: Option<f64>,
    pass: bool,
}

fn run_strip_constants(a: &StripConstantsArgs, cfg: &ConfigFile) -> Result<Output, CliError> {
    let setup = resolve_system(&a.sys, cfg)?;
    let delta = pick(a.delta, cfg.delta, 0.5);
    let t_grid = time_grid(
        pick(a.t_min, cfg.t_min, 8.0),
        pick(a.t_max, cfg.t_max, 20.0),
        pick(a.t_count, cfg.t_count, 13),
    )?;
    let horizon = ((t_grid[t_grid.len() - 1] + 1.0) / setup.roof).floor() as usize;
    let table = setup.table(horizon.max(1))?;
    let flow = setup.flow()?;

    let p2 = pressure_estimate(&table, &flow, 2.0, &t_grid).map_err(core_err)?;
    let report = strip_constants(&flow, &table, delta, p2.p_hat).map_err(core_err)?;

    let (rate_reference, strip_closed_form, pass) = if setup.is_linear() {
        let rate = setup.map.linear().expansion_rate() / setup.roof;
        let n = report.flow_dim as f64;
        let closed = (2.0 * n + 1.5) * (-rate);
        let ok = (report.theta0 - rate).abs() <= 1e-9
            && (report.naud_strip - closed).abs() <= 0.05 * closed.abs();
        (Some(rate), Some(closed), ok)
    } else {
        (None, None, true)
    };

    let out = StripOut {
        epsilon: setup.map.epsilon(),
        roof: setup.roof,
        report,
        rate_reference,
        strip_closed_form,
        pass,
    };
    Ok(Output { json: to_json(&out)?, csv: None, pass })
}

#[derive(Serialize)]
struct AppendixAOut {
    epsilon: f64,
    roof: f64,
    sigma: f64,
    t_grid: Vec<f64>,
    diag_slope: f64,
    rate_reference: Option<f64>,
    slope_gap: Option<f64>,
    records: Vec<GaussianRecord>,
    pass: bool,
}

fn run_appendix_a(a: &AppendixAArgs, cfg: &ConfigFile) -> Result<Output, CliError> {
    let setup = resolve_system(&a.sys, cfg)?;
    let sigma = pick(a.sigma, cfg.sigma, 1.0);
    let t_grid = time_grid(
        pick(a.t_min, cfg.t_min, 12.0),
        pick(a.t_max, cfg.t_max, 20.0),
        pick(a.t_count, cfg.t_count, 9),
    )?;
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(CliError::Config(format!("sigma must be positive, got {sigma}")));
    }
    let horizon = ((t_grid[t_grid.len() - 1] + 1.9) / setup.roof).ceil() as usize;
    let table = setup.table(horizon.max(1))?;
    let flow = setup.flow()?;

    let records = gaussian_average_experiment(&table, &flow, &t_grid, sigma).map_err(core_err)?;
    let diag_slope = ls_slope(
        &t_grid,
        &records.iter().map(|r| r.diag_lower.ln()).collect::<Vec<_>>(),
    );

    // The diagonal decays at the pressure rate of twice the unstable
    // potential; checked against an independent fit when the map is linear.
    let (rate_reference, slope_gap, pass) = if setup.is_linear() {
        let p2 = pressure_estimate(&table, &flow, 2.0, &t_grid).map_err(core_err)?;
        let gap = (diag_slope - p2.p_hat).abs();
        (Some(p2.p_hat), Some(gap), gap <= 0.1)
    } else {
        (None, None, true)
    };

    let out = AppendixAOut {
        epsilon: setup.map.epsilon(),
        roof: setup.roof,
        sigma,
        t_grid,
        diag_slope,
        rate_reference,
        slope_gap,
        records,
        pass,
    };
    Ok(Output { json: to_json(&out)?, csv: Some(gaussian_to_csv(&out.records)), pass })
}

fn ls_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    for (&x, &y) in xs.iter().zip(ys) {
        sxx += (x - mx) * (x - mx);
        sxy += (x - mx) * (y - my);
    }
    sxy / sxx
}

fn run_all(cfg: &ConfigFile) -> Result<Output, CliError> {
    let _ = cfg;
    let report = suite::compute_suite().map_err(core_err)?;
    let pass = report.pass;
    Ok(Output { json: to_json(&report)?, csv: None, pass })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let code = match cli.command {
        Cmd::Orbits(a) => drive(&a.io.clone(), |cfg| run_orbits(&a, cfg)),
        Cmd::Resonances(a) => drive(&a.io.clone(), |cfg| run_resonances(&a, cfg)),
        Cmd::ZetaScan(a) => drive(&a.io.clone(), |cfg| run_zeta_scan(&a, cfg)),
        Cmd::VerifyTrace(a) => drive(&a.io.clone(), |cfg| run_verify_trace(&a, cfg)),
        Cmd::Pressure(a) => drive(&a.io.clone(), |cfg| run_pressure(&a, cfg)),
        Cmd::StripConstants(a) => drive(&a.io.clone(), |cfg| run_strip_constants(&a, cfg)),
        Cmd::AppendixA(a) => drive(&a.io.clone(), |cfg| run_appendix_a(&a, cfg)),
        Cmd::All(a) => drive(&a.io.clone(), run_all),
    };
    ExitCode::from(code)
}
