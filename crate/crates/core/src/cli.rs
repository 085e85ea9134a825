//! Command-line front end for the `tpm` binary.
//!
//! Configuration files are flat UTF-8 text, one `section.key = value` per
//! line, with `#` starting a comment. Every key is checked against
//! [`SCHEMA`]; unknown or repeated keys are errors.
//!
//! Exit codes: 0 success, 2 Darcy validity refused, 64 usage/config/input
//! error, 70 solver failure (including cell problems with no solution).

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use serde::Serialize;

use crate::cellproblems::{
    crosscheck_from_solution, permeability, permeability_with_solution, profile_integral, PermeabilityTensor, ProfileRule,
};
use crate::darcy::{manufactured, scale_back, solve_darcy, DarcySolution, MacroDomain, ScaledApproximation};
use crate::error::{Error, Result};
use crate::grid::{
    build_geometry, discrete_div, discrete_div_3d, discrete_grad, discrete_grad_3d, inner, CellGeometry, ObstacleShape,
    StaggeredField2D, StaggeredField3D,
};
use crate::io::{read_tensor, to_json_string, write_cell_field, write_darcy_fields, write_json};
use crate::linsolve::{Backend, SolverConfig};
use crate::regimes::{classify, exponent_report, ExponentReport, Regime, RegimeParams};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INVALID: i32 = 2;
pub const EXIT_USAGE: i32 = 64;
pub const EXIT_SOLVER: i32 = 70;

/// Exit code for an error.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Validity { .. } => EXIT_INVALID,
        Error::Incompatible(_) | Error::NoConvergence { .. } | Error::Singular(_) => EXIT_SOLVER,
        Error::Domain(_)
        | Error::Geometry(_)
        | Error::Shape(_)
        | Error::Tensor(_)
        | Error::Config(_)
        | Error::Io(_)
        | Error::Json(_)
        | Error::Csv(_) => EXIT_USAGE,
    }
}

/// Recognized configuration keys, their defaults and meaning.
pub const SCHEMA: &[(&str, &str, &str)] = &[
    ("regime.epsilon", "0.1", "film thickness ε in (0, 1)"),
    ("regime.delta", "-", "obstacle size exponent δ > 0; selects the regime"),
    ("regime.gamma", "1", "Reynolds exponent γ"),
    ("cell.regime", "from regime.delta", "HTPM, PTPM or VTPM"),
    ("geometry.shape", "disk", "none, disk, ellipse or rectangle"),
    ("geometry.center_x", "0", "obstacle center, cell coordinates in (-1/2, 1/2)"),
    ("geometry.center_y", "0", "obstacle center"),
    ("geometry.radius", "0.25", "disk radius"),
    ("geometry.semi_a", "-", "ellipse semi-axis along the rotated x direction"),
    ("geometry.semi_b", "-", "ellipse second semi-axis"),
    ("geometry.rotation", "0", "ellipse rotation in radians"),
    ("geometry.half_x", "-", "rectangle half-width in x"),
    ("geometry.half_y", "-", "rectangle half-width in y"),
    ("geometry.n", "64", "cells per side of the unit cell"),
    ("geometry.nz", "16", "vertical intervals (PTPM)"),
    ("solver.rel_tol", "1e-10", "relative residual tolerance"),
    ("solver.max_iter", "max(50 sqrt(dim), 10000)", "iteration cap"),
    ("solver.backend", "krylov", "krylov or dense"),
    ("macro.lx", "1", "domain length in x"),
    ("macro.ly", "1", "domain length in y"),
    ("macro.m", "32", "pressure cells in x"),
    ("macro.my", "macro.m", "pressure cells in y"),
    ("macro.eta", "1", "viscosity η"),
    ("macro.force", "manufactured", "constant, manufactured or none"),
    ("macro.force_x", "0", "constant force, x component"),
    ("macro.force_y", "0", "constant force, y component"),
    ("darcy.permeability", "-", "permeability JSON written by `tpm cell`"),
    ("darcy.k11", "-", "explicit tensor entry (with darcy.k12, darcy.k22, darcy.regime)"),
    ("darcy.k12", "0", "explicit tensor entry"),
    ("darcy.k22", "-", "explicit tensor entry"),
    ("darcy.regime", "-", "regime of the explicit tensor"),
    ("output.dir", "tpm_output", "directory for JSON and CSV output"),
    ("output.fields", "false", "also dump cell fields as CSV"),
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ForceSpec {
    None,
    Constant,
    Manufactured,
}

/// Typed view of a configuration file.
#[derive(Debug, Clone)]
pub struct RunConfig {
    values: BTreeMap<String, String>,
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut values = BTreeMap::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = strip_comment(raw).trim();
            if line.is_empty() {
                continue;
            }
            let at = |msg: String| Error::Config(format!("line {}: {msg}", lineno + 1));
            let (key, value) = line.split_once('=').ok_or_else(|| at(format!("expected `key = value`, got `{line}`")))?;
            let key = key.trim();
            let mut value = value.trim();
            if value.len() >= 2 && value.starts_with('"') && value.ends_with('"') {
                value = &value[1..value.len() - 1];
            }
            if !SCHEMA.iter().any(|(k, _, _)| *k == key) {
                return Err(at(format!("unknown key `{key}`")));
            }
            if value.is_empty() {
                return Err(at(format!("empty value for `{key}`")));
            }
            if values.insert(key.to_string(), value.to_string()).is_some() {
                return Err(at(format!("duplicate key `{key}`")));
            }
        }
        Ok(Self { values })
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn contains(&self, key: &str) -> bool {
        self.values.contains_key(key)
    }

    pub fn raw(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(String::as_str)
    }

    fn parsed<T: std::str::FromStr>(&self, key: &str, what: &str) -> Result<Option<T>> {
        self.raw(key)
            .map(|v| v.parse::<T>().map_err(|_| Error::Config(format!("`{key}` must be {what}, got `{v}`"))))
            .transpose()
    }

    pub fn real(&self, key: &str) -> Result<Option<f64>> {
        let v: Option<f64> = self.parsed(key, "a real number")?;
        match v {
            Some(x) if !x.is_finite() => Err(Error::Config(format!("`{key}` must be finite"))),
            v => Ok(v),
        }
    }

    pub fn real_or(&self, key: &str, default: f64) -> Result<f64> {
        Ok(self.real(key)?.unwrap_or(default))
    }

    pub fn count(&self, key: &str) -> Result<Option<usize>> {
        self.parsed(key, "a non-negative integer")
    }

    pub fn flag(&self, key: &str) -> Result<bool> {
        match self.raw(key) {
            None | Some("false") => Ok(false),
            Some("true") => Ok(true),
            Some(v) => Err(Error::Config(format!("`{key}` must be true or false, got `{v}`"))),
        }
    }

    pub fn regime_params(&self) -> Result<RegimeParams> {
        let delta = self.real("regime.delta")?.ok_or_else(|| Error::Config("`regime.delta` is required".into()))?;
        RegimeParams::new(self.real_or("regime.epsilon", 0.1)?, delta, self.real_or("regime.gamma", 1.0)?)
    }

    /// Regime of the cell problem: `cell.regime`, else classified from `δ`.
    pub fn cell_regime(&self) -> Result<Regime> {
        match self.raw("cell.regime") {
            Some(r) => r.parse(),
            None if self.contains("regime.delta") => classify(&self.regime_params()?),
            None => Err(Error::Config("set `cell.regime` or `regime.delta`".into())),
        }
    }

    pub fn shape(&self) -> Result<ObstacleShape> {
        let kind = self.raw("geometry.shape").unwrap_or("disk").to_ascii_lowercase();
        let allowed: &[&str] = match kind.as_str() {
            "none" => &[],
            "disk" => &["geometry.center_x", "geometry.center_y", "geometry.radius"],
            "ellipse" => &["geometry.center_x", "geometry.center_y", "geometry.semi_a", "geometry.semi_b", "geometry.rotation"],
            "rectangle" => &["geometry.center_x", "geometry.center_y", "geometry.half_x", "geometry.half_y"],
            other => return Err(Error::Config(format!("unknown geometry.shape `{other}`"))),
        };
        let shape_keys = [
            "geometry.center_x",
            "geometry.center_y",
            "geometry.radius",
            "geometry.semi_a",
            "geometry.semi_b",
            "geometry.rotation",
            "geometry.half_x",
            "geometry.half_y",
        ];
        if let Some(k) = shape_keys.iter().find(|k| self.contains(k) && !allowed.contains(k)) {
            return Err(Error::Config(format!("`{k}` does not apply to geometry.shape = {kind}")));
        }
        let required = |key: &str| -> Result<f64> {
            self.real(key)?.ok_or_else(|| Error::Config(format!("`{key}` is required for geometry.shape = {kind}")))
        };
        let center = [self.real_or("geometry.center_x", 0.0)?, self.real_or("geometry.center_y", 0.0)?];
        Ok(match kind.as_str() {
            "none" => ObstacleShape::None,
            "disk" => ObstacleShape::Disk { center, radius: self.real_or("geometry.radius", 0.25)? },
            "ellipse" => ObstacleShape::Ellipse {
                center,
                semi_axes: [required("geometry.semi_a")?, required("geometry.semi_b")?],
                rotation: self.real_or("geometry.rotation", 0.0)?,
            },
            _ => ObstacleShape::Rectangle { center, half_widths: [required("geometry.half_x")?, required("geometry.half_y")?] },
        })
    }

    pub fn geometry(&self) -> Result<CellGeometry> {
        let n = self.count("geometry.n")?.unwrap_or(64);
        let nz = self.count("geometry.nz")?.unwrap_or(16);
        build_geometry(self.shape()?, n, nz)
    }

    pub fn solver(&self) -> Result<SolverConfig> {
        let backend = match self.raw("solver.backend").unwrap_or("krylov") {
            "krylov" => Backend::Krylov,
            "dense" => Backend::Dense,
            other => return Err(Error::Config(format!("unknown solver.backend `{other}`"))),
        };
        let cfg = SolverConfig {
            rel_tol: self.real_or("solver.rel_tol", 1e-10)?,
            max_iter: self.count("solver.max_iter")?,
            backend,
            ..SolverConfig::default()
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn force_spec(&self) -> Result<ForceSpec> {
        let spec = match self.raw("macro.force").unwrap_or("manufactured") {
            "none" => ForceSpec::None,
            "constant" => ForceSpec::Constant,
            "manufactured" => ForceSpec::Manufactured,
            other => return Err(Error::Config(format!("unknown macro.force `{other}`"))),
        };
        if spec != ForceSpec::Constant {
            if let Some(k) = ["macro.force_x", "macro.force_y"].iter().find(|k| self.contains(k)) {
                return Err(Error::Config(format!("`{k}` needs macro.force = constant")));
            }
        }
        Ok(spec)
    }

    /// Macroscale domain; the manufactured force is built for `K = I`.
    pub fn macro_domain(&self) -> Result<MacroDomain> {
        self.macro_domain_for(&[[1.0, 0.0], [0.0, 1.0]])
    }

    /// Macroscale domain with the manufactured force adapted to the tensor `k`.
    pub fn macro_domain_for(&self, k: &[[f64; 2]; 2]) -> Result<MacroDomain> {
        let lx = self.real_or("macro.lx", 1.0)?;
        let ly = self.real_or("macro.ly", 1.0)?;
        let m = self.count("macro.m")?.unwrap_or(32);
        let my = self.count("macro.my")?.unwrap_or(m);
        let eta = self.real_or("macro.eta", 1.0)?;
        match self.force_spec()? {
            ForceSpec::None => MacroDomain::uniform(lx, ly, m, my, eta, [0.0, 0.0]),
            ForceSpec::Constant => {
                let f = [self.real_or("macro.force_x", 0.0)?, self.real_or("macro.force_y", 0.0)?];
                MacroDomain::uniform(lx, ly, m, my, eta, f)
            }
            ForceSpec::Manufactured => MacroDomain::with_force(lx, ly, m, my, eta, |x, y| manufactured::force_for(x, y, lx, ly, k)),
        }
    }

    /// Tensor for `tpm darcy`: a JSON file, or explicit entries.
    pub fn tensor(&self, file_override: Option<&Path>) -> Result<PermeabilityTensor> {
        let explicit = ["darcy.k11", "darcy.k12", "darcy.k22", "darcy.regime"].iter().any(|k| self.contains(k));
        let file = file_override.map(Path::to_path_buf).or_else(|| self.raw("darcy.permeability").map(PathBuf::from));
        match (file, explicit) {
            (Some(_), true) => Err(Error::Config("give either a permeability file or darcy.k* entries, not both".into())),
            (Some(path), false) => read_tensor(&path),
            (None, true) => {
                let need = |key: &str| self.real(key)?.ok_or_else(|| Error::Config(format!("`{key}` is required")));
                let regime: Regime =
                    self.raw("darcy.regime").ok_or_else(|| Error::Config("`darcy.regime` is required".into()))?.parse()?;
                let k12 = self.real_or("darcy.k12", 0.0)?;
                Ok(PermeabilityTensor::new(regime, [[need("darcy.k11")?, k12], [k12, need("darcy.k22")?]], 0, 0))
            }
            (None, false) => Err(Error::Config("no permeability: set darcy.permeability or darcy.k11/k22/regime".into())),
        }
    }

    pub fn output_dir(&self) -> PathBuf {
        PathBuf::from(self.raw("output.dir").unwrap_or("tpm_output"))
    }
}

fn strip_comment(line: &str) -> &str {
    match line.find('#') {
        Some(i) => &line[..i],
        None => line,
    }
}

/// Documented defaults, printed by `tpm config-help`.
pub fn schema_table() -> String {
    let mut out = String::new();
    for (key, default, help) in SCHEMA {
        let _ = writeln!(out, "{key:<20} default {default:<26} {help}");
    }
    out
}

#[derive(Debug, Parser)]
#[command(name = "tpm", version, about = "Permeability cell problems and Darcy solves for thin porous media")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Classify (δ, γ) and print the exponent report; exit 2 when γ > γ_c.
    Classify {
        #[arg(long, allow_negative_numbers = true)]
        delta: f64,
        #[arg(long, default_value_t = 1.0, allow_negative_numbers = true)]
        gamma: f64,
        #[arg(long, default_value_t = 0.1, allow_negative_numbers = true)]
        epsilon: f64,
    },
    /// Solve the cell problem and write the permeability JSON.
    Cell {
        #[arg(long)]
        config: PathBuf,
        /// Where to write the tensor (default: <output.dir>/permeability.json).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Solve the macroscale Darcy problem.
    Darcy {
        #[arg(long)]
        config: PathBuf,
        /// Permeability JSON; overrides darcy.permeability.
        #[arg(long)]
        permeability: Option<PathBuf>,
    },
    /// Classify, solve the cell problem, solve Darcy and rescale.
    Pipeline {
        #[arg(long)]
        config: PathBuf,
    },
    /// Run the built-in analytic checks; the exit code counts failures.
    Validate {
        /// Override a tolerance, e.g. `--set poiseuille=1e-6`.
        #[arg(long = "set", value_name = "NAME=TOL")]
        overrides: Vec<String>,
    },
    /// List the configuration keys and their defaults.
    ConfigHelp,
}

/// Parse `args` (including the program name), run and return the exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let text = e.render().to_string();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = write!(out, "{text}");
                    EXIT_OK
                }
                _ => {
                    let _ = write!(err, "{text}");
                    EXIT_USAGE
                }
            };
        }
    };
    let result = match cli.command {
        Command::Classify { delta, gamma, epsilon } => cmd_classify(delta, gamma, epsilon, out),
        Command::Cell { config, out: path } => {
            RunConfig::from_path(&config).and_then(|c| cmd_cell(&c, path.as_deref(), out).map(|_| EXIT_OK))
        }
        Command::Darcy { config, permeability } => {
            RunConfig::from_path(&config).and_then(|c| cmd_darcy(&c, permeability.as_deref(), out).map(|_| EXIT_OK))
        }
        Command::Pipeline { config } => RunConfig::from_path(&config).and_then(|c| cmd_pipeline(&c, out)),
        Command::Validate { overrides } => cmd_validate(&overrides, out),
        Command::ConfigHelp => write!(out, "{}", schema_table()).map(|_| EXIT_OK).map_err(Error::from),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            exit_code(&e)
        }
    }
}

pub fn cmd_classify(delta: f64, gamma: f64, epsilon: f64, out: &mut dyn Write) -> Result<i32> {
    let report = exponent_report(&RegimeParams::new(epsilon, delta, gamma)?)?;
    write!(out, "{}", to_json_string(&report)?)?;
    Ok(if report.darcy_valid { EXIT_OK } else { EXIT_INVALID })
}

fn solve_cell(config: &RunConfig, regime: Regime) -> Result<PermeabilityTensor> {
    let geom = config.geometry()?;
    let cfg = config.solver()?;
    if !config.flag("output.fields")? {
        return permeability(regime, &geom, &cfg);
    }
    let (solution, k) = permeability_with_solution(regime, &geom, &cfg)?;
    let dir = config.output_dir();
    for (i, d) in solution.directions.iter().enumerate() {
        write_cell_field(&dir.join(format!("cell_e{}", i + 1)), &d.field)?;
    }
    Ok(k)
}

/// Solve the cell problem and write `permeability.json`.
pub fn cmd_cell(config: &RunConfig, path: Option<&Path>, out: &mut dyn Write) -> Result<PermeabilityTensor> {
    let k = solve_cell(config, config.cell_regime()?)?;
    let path = path.map(Path::to_path_buf).unwrap_or_else(|| config.output_dir().join("permeability.json"));
    write_json(&path, &k)?;
    write!(out, "{}", to_json_string(&k)?)?;
    Ok(k)
}

#[derive(Debug, Clone, Serialize)]
pub struct ManufacturedErrors {
    /// Discrete L² norm of `P - P*` over the cells.
    pub pressure_l2: f64,
    /// Discrete L² norm of `V - c g` over the interior faces.
    pub velocity_l2: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct DarcySummary {
    pub regime: Regime,
    pub prefactor: f64,
    pub k: [[f64; 2]; 2],
    pub lx: f64,
    pub ly: f64,
    pub m: usize,
    pub my: usize,
    pub eta: f64,
    pub force: &'static str,
    pub iterations: usize,
    pub residual: f64,
    pub mean_pressure: f64,
    pub max_divergence: f64,
    pub boundary_flux: f64,
    pub max_velocity: f64,
    /// Volume flux through the vertical midline `x = Lx/2` (nearest face column).
    pub midline_flux: f64,
    pub manufactured: Option<ManufacturedErrors>,
    pub fields: Vec<PathBuf>,
}

/// Errors against the manufactured closed forms; the domain must carry the
/// force from [`manufactured::force_for`] for the solved tensor.
pub fn manufactured_errors(domain: &MacroDomain, s: &DarcySolution) -> ManufacturedErrors {
    let (m, my, hx, hy) = (domain.m, domain.my, domain.hx(), domain.hy());
    let (lx, ly) = (domain.lx, domain.ly);
    let mut p_exact: Vec<f64> = (0..m * my)
        .map(|c| {
            let (x, y) = domain.cell_center(c % m, c / m);
            manufactured::pressure(x, y, lx, ly)
        })
        .collect();
    let mean = p_exact.iter().sum::<f64>() / (m * my) as f64;
    p_exact.iter_mut().for_each(|p| *p -= mean);
    let pressure_l2 = (s.pressure.iter().zip(&p_exact).map(|(a, b)| (a - b).powi(2)).sum::<f64>() * hx * hy).sqrt();

    let mut sq = 0.0;
    for j in 0..my {
        for i in 1..m {
            let g = manufactured::solenoidal(i as f64 * hx, (j as f64 + 0.5) * hy, lx, ly);
            sq += (s.vx[i + (m + 1) * j] - s.prefactor * g[0]).powi(2);
        }
    }
    for j in 1..my {
        for i in 0..m {
            let g = manufactured::solenoidal((i as f64 + 0.5) * hx, j as f64 * hy, lx, ly);
            sq += (s.vy[i + m * j] - s.prefactor * g[1]).powi(2);
        }
    }
    ManufacturedErrors { pressure_l2, velocity_l2: (sq * hx * hy).sqrt() }
}

fn darcy_stage(config: &RunConfig, k: &PermeabilityTensor, prefix: &str) -> Result<(DarcySolution, DarcySummary)> {
    let domain = config.macro_domain_for(&k.k)?;
    let spec = config.force_spec()?;
    let s = solve_darcy(&domain, k, &config.solver()?)?;
    let fields = write_darcy_fields(&config.output_dir().join(prefix), &s)?;
    let summary = DarcySummary {
        regime: s.regime,
        prefactor: s.prefactor,
        k: k.k,
        lx: domain.lx,
        ly: domain.ly,
        m: domain.m,
        my: domain.my,
        eta: domain.eta,
        force: match spec {
            ForceSpec::None => "none",
            ForceSpec::Constant => "constant",
            ForceSpec::Manufactured => "manufactured",
        },
        iterations: s.stats.iterations,
        residual: s.stats.residual,
        mean_pressure: s.mean_pressure(),
        max_divergence: s.max_divergence(),
        boundary_flux: s.boundary_flux(),
        max_velocity: s.max_velocity(),
        midline_flux: s.flux_through_column(domain.m / 2),
        manufactured: (spec == ForceSpec::Manufactured).then(|| manufactured_errors(&domain, &s)),
        fields,
    };
    Ok((s, summary))
}

/// Solve Darcy with the configured tensor; writes `darcy_{p,u,v}.csv` and
/// `darcy.json`.
pub fn cmd_darcy(config: &RunConfig, permeability: Option<&Path>, out: &mut dyn Write) -> Result<(DarcySolution, DarcySummary)> {
    let k = config.tensor(permeability)?;
    let (s, summary) = darcy_stage(config, &k, "darcy")?;
    write_json(&config.output_dir().join("darcy.json"), &summary)?;
    write!(out, "{}", to_json_string(&summary)?)?;
    Ok((s, summary))
}

#[derive(Debug, Clone, Serialize)]
pub struct PipelineReport {
    pub status: &'static str,
    pub report: ExponentReport,
    pub permeability: PermeabilityTensor,
    pub darcy: DarcySummary,
    pub scaling: Option<ScaledApproximation>,
    pub refusal: Option<String>,
}

/// Classify, solve the cell problem, solve Darcy and rescale. Everything is
/// written to `pipeline.json`; when `γ > γ_c` the rescaling is refused and
/// the exit code is 2.
pub fn cmd_pipeline(config: &RunConfig, out: &mut dyn Write) -> Result<i32> {
    let params = config.regime_params()?;
    let report = exponent_report(&params)?;
    if let Some(r) = config.raw("cell.regime") {
        let r: Regime = r.parse()?;
        if r != report.regime {
            return Err(Error::Config(format!("cell.regime = {r} contradicts regime.delta ({})", report.regime)));
        }
    }
    let k = solve_cell(config, report.regime)?;
    write_json(&config.output_dir().join("permeability.json"), &k)?;
    let (s, darcy) = darcy_stage(config, &k, "pipeline")?;
    let (status, scaling, refusal, code) = match scale_back(&s, &report, params.epsilon) {
        Ok(scaled) => ("ok", Some(scaled), None, EXIT_OK),
        Err(e @ Error::Validity { .. }) => ("refused", None, Some(e.to_string()), EXIT_INVALID),
        Err(e) => return Err(e),
    };
    let artifact = PipelineReport { status, report, permeability: k, darcy, scaling, refusal };
    write_json(&config.output_dir().join("pipeline.json"), &artifact)?;
    write!(out, "{}", to_json_string(&artifact)?)?;
    Ok(code)
}

/// One row of `tpm validate`.
#[derive(Debug, Clone, Serialize)]
pub struct CheckResult {
    pub name: &'static str,
    pub error: f64,
    pub tolerance: f64,
    pub pass: bool,
}

type Check = (&'static str, f64, fn() -> Result<f64>);

fn max_abs_diff(a: &[[f64; 2]; 2], b: &[[f64; 2]; 2]) -> f64 {
    a.iter().flatten().zip(b.iter().flatten()).fold(0.0, |m, (x, y)| m.max((x - y).abs()))
}

fn pseudo_random(len: usize, seed: f64) -> Vec<f64> {
    (0..len).map(|i| ((i as f64 + 1.0) * seed).sin() * 43758.5453 % 1.0).collect()
}

fn check_poiseuille() -> Result<f64> {
    let geom = build_geometry(ObstacleShape::None, 8, 32)?;
    let k = permeability(Regime::Ptpm, &geom, &SolverConfig::with_tol(1e-12))?;
    Ok(max_abs_diff(&k.k, &[[1.0 / 12.0, 0.0], [0.0, 1.0 / 12.0]]))
}

fn check_heleshaw_identity() -> Result<f64> {
    let geom = build_geometry(ObstacleShape::None, 16, 8)?;
    let k = permeability(Regime::Vtpm, &geom, &SolverConfig::default())?;
    Ok(max_abs_diff(&k.k, &[[1.0, 0.0], [0.0, 1.0]]))
}

fn check_profile_integral() -> Result<f64> {
    Ok((profile_integral(ProfileRule::GaussLegendre(8)) + 1.0 / 12.0).abs())
}

fn check_adjointness_2d() -> Result<f64> {
    let n = 16;
    let f = StaggeredField2D { u: pseudo_random(n * n, 1.1), v: pseudo_random(n * n, 2.3), ..StaggeredField2D::zeros(n) };
    let p = pseudo_random(n * n, 3.7);
    let (gx, gy) = discrete_grad(&p, n)?;
    let lhs = inner(&discrete_div(&f)?, &p);
    let rhs = -(inner(&f.u, &gx) + inner(&f.v, &gy));
    Ok((lhs - rhs).abs() / lhs.abs().max(1.0))
}

fn check_adjointness_3d() -> Result<f64> {
    let (n, nz) = (8, 8);
    let mut f = StaggeredField3D::zeros(n, nz);
    f.u = pseudo_random(f.u.len(), 1.3);
    f.v = pseudo_random(f.v.len(), 2.9);
    f.w = pseudo_random(f.w.len(), 4.1);
    let p = pseudo_random(f.p.len(), 5.3);
    let (gx, gy, gz) = discrete_grad_3d(&p, n, nz)?;
    let lhs = inner(&discrete_div_3d(&f)?, &p);
    let rhs = -(inner(&f.u, &gx) + inner(&f.v, &gy) + inner(&f.w, &gz));
    Ok((lhs - rhs).abs() / lhs.abs().max(1.0))
}

fn check_vertical_reduction() -> Result<f64> {
    let geom = build_geometry(ObstacleShape::disk(0.25), 32, 8)?;
    let (solution, kv) = permeability_with_solution(Regime::Vtpm, &geom, &SolverConfig::with_tol(1e-12))?;
    let (a, b) = crosscheck_from_solution(&geom, &solution, &kv)?;
    Ok(max_abs_diff(&a, &b) / kv.frobenius_norm())
}

fn check_closed_box() -> Result<f64> {
    let d = MacroDomain::uniform(1.0, 1.0, 16, 16, 1.0, [1.0, 0.0])?;
    let k = PermeabilityTensor::new(Regime::Htpm, [[1.0, 0.0], [0.0, 1.0]], 0, 0);
    let s = solve_darcy(&d, &k, &SolverConfig::with_tol(1e-13))?;
    let p_err = (0..d.m * d.my).fold(0.0f64, |e, c| {
        let (x, _) = d.cell_center(c % d.m, c / d.m);
        e.max((s.pressure[c] - (x - 0.5)).abs())
    });
    Ok(p_err.max(s.max_velocity()))
}

pub const CHECKS: &[Check] = &[
    ("poiseuille", 1e-4, check_poiseuille),
    ("heleshaw_identity", 1e-10, check_heleshaw_identity),
    ("profile_integral", 1e-12, check_profile_integral),
    ("adjointness_2d", 1e-12, check_adjointness_2d),
    ("adjointness_3d", 1e-12, check_adjointness_3d),
    ("vertical_reduction", 1e-10, check_vertical_reduction),
    ("closed_box", 1e-10, check_closed_box),
];

/// Run the built-in checks with optional `name=tol` overrides.
pub fn run_checks(overrides: &[String]) -> Result<Vec<CheckResult>> {
    let mut tol: BTreeMap<&str, f64> = CHECKS.iter().map(|(n, t, _)| (*n, *t)).collect();
    for o in overrides {
        let (name, value) = o.split_once('=').ok_or_else(|| Error::Config(format!("expected NAME=TOL, got `{o}`")))?;
        let slot = tol.get_mut(name.trim()).ok_or_else(|| Error::Config(format!("unknown check `{name}`")))?;
        *slot = value
            .trim()
            .parse::<f64>()
            .ok()
            .filter(|t| *t >= 0.0)
            .ok_or_else(|| Error::Config(format!("bad tolerance `{value}`")))?;
    }
    Ok(CHECKS
        .iter()
        .map(|(name, _, f)| {
            let tolerance = tol[name];
            let error = f().unwrap_or(f64::NAN);
            CheckResult { name, error, tolerance, pass: error <= tolerance }
        })
        .collect())
}

pub fn cmd_validate(overrides: &[String], out: &mut dyn Write) -> Result<i32> {
    let rows = run_checks(overrides)?;
    writeln!(out, "{:<20} {:>12} {:>12}  result", "check", "error", "tolerance")?;
    for r in &rows {
        writeln!(out, "{:<20} {:>12.3e} {:>12.3e}  {}", r.name, r.error, r.tolerance, if r.pass { "PASS" } else { "FAIL" })?;
    }
    let failures = rows.iter().filter(|r| !r.pass).count();
    Ok(failures.min(125) as i32)
}
