//! Python bindings for `tpm-core`, importable as `thinporous`.

use pyo3::create_exception;
use pyo3::exceptions::{PyException, PyValueError};
use pyo3::prelude::*;

use tpm_core::cellproblems;
use tpm_core::darcy::{self, manufactured};
use tpm_core::{Error, ObstacleShape, Regime, RegimeParams, SolverConfig};

create_exception!(thinporous, ValidityError, PyException, "Darcy reconstruction refused: gamma exceeds gamma_c.");
create_exception!(thinporous, SolverError, PyException, "A linear solve failed or the cell problem has no solution.");

fn to_py(e: Error) -> PyErr {
    match e {
        Error::Validity { .. } => ValidityError::new_err(e.to_string()),
        Error::Incompatible(_) | Error::NoConvergence { .. } | Error::Singular(_) => SolverError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn parse_regime(name: &str) -> PyResult<Regime> {
    name.parse().map_err(to_py)
}

/// Regime classification and scaling exponents for (epsilon, delta, gamma).
#[pyclass(name = "ExponentReport", frozen, from_py_object)]
#[derive(Clone)]
pub struct PyExponentReport(pub tpm_core::ExponentReport);

#[pymethods]
impl PyExponentReport {
    #[getter]
    fn regime(&self) -> &'static str {
        self.0.regime.as_str()
    }
    #[getter]
    fn gamma_c(&self) -> f64 {
        self.0.gamma_c
    }
    #[getter]
    fn darcy_valid(&self) -> bool {
        self.0.darcy_valid
    }
    #[getter]
    fn c_delta(&self) -> Option<f64> {
        self.0.c_delta
    }
    #[getter]
    fn r_conjugate(&self) -> Option<f64> {
        self.0.r_conjugate
    }
    #[getter]
    fn alpha_inertial(&self) -> f64 {
        self.0.alpha_inertial
    }
    #[getter]
    fn vel_scale_exp(&self) -> f64 {
        self.0.vel_scale_exp
    }
    #[getter]
    fn epsilon(&self) -> f64 {
        self.0.epsilon
    }
    #[getter]
    fn delta(&self) -> f64 {
        self.0.delta
    }
    #[getter]
    fn gamma(&self) -> f64 {
        self.0.gamma
    }

    fn to_json(&self) -> PyResult<String> {
        tpm_core::io::to_json_string(&self.0).map_err(to_py)
    }

    fn __repr__(&self) -> String {
        format!(
            "ExponentReport(regime={}, gamma_c={}, darcy_valid={})",
            self.0.regime,
            self.0.gamma_c,
            if self.0.darcy_valid { "True" } else { "False" }
        )
    }
}

#[pyfunction]
#[pyo3(signature = (delta, gamma = 1.0, epsilon = 0.1))]
fn classify(delta: f64, gamma: f64, epsilon: f64) -> PyResult<PyExponentReport> {
    let params = RegimeParams::new(epsilon, delta, gamma).map_err(to_py)?;
    tpm_core::exponent_report(&params).map(PyExponentReport).map_err(to_py)
}

/// Masked periodic unit cell.
#[pyclass(name = "CellGeometry", frozen)]
pub struct PyCellGeometry(pub tpm_core::CellGeometry);

#[pymethods]
impl PyCellGeometry {
    /// `shape` is one of "none", "disk", "ellipse", "rectangle".
    #[new]
    #[pyo3(signature = (shape = "disk", n = 64, nz = 16, radius = 0.25, center = (0.0, 0.0), semi_axes = None, rotation = 0.0, half_widths = None))]
    #[allow(clippy::too_many_arguments)]
    fn new(
        shape: &str,
        n: usize,
        nz: usize,
        radius: f64,
        center: (f64, f64),
        semi_axes: Option<(f64, f64)>,
        rotation: f64,
        half_widths: Option<(f64, f64)>,
    ) -> PyResult<Self> {
        let center = [center.0, center.1];
        let missing = |what: &str| PyValueError::new_err(format!("shape {shape:?} needs {what}"));
        let shape = match shape {
            "none" => ObstacleShape::None,
            "disk" => ObstacleShape::Disk { center, radius },
            "ellipse" => {
                let (a, b) = semi_axes.ok_or_else(|| missing("semi_axes"))?;
                ObstacleShape::Ellipse { center, semi_axes: [a, b], rotation }
            }
            "rectangle" => {
                let (a, b) = half_widths.ok_or_else(|| missing("half_widths"))?;
                ObstacleShape::Rectangle { center, half_widths: [a, b] }
            }
            other => return Err(PyValueError::new_err(format!("unknown shape {other:?}"))),
        };
        tpm_core::build_geometry(shape, n, nz).map(Self).map_err(to_py)
    }

    #[getter]
    fn n(&self) -> usize {
        self.0.n
    }
    #[getter]
    fn nz(&self) -> usize {
        self.0.nz
    }
    #[getter]
    fn fluid_fraction(&self) -> f64 {
        self.0.fluid_fraction()
    }
}

/// Symmetric 2x2 permeability tensor with its provenance.
#[pyclass(name = "PermeabilityTensor", frozen, from_py_object)]
#[derive(Clone)]
pub struct PyPermeabilityTensor(pub tpm_core::PermeabilityTensor);

#[pymethods]
impl PyPermeabilityTensor {
    #[new]
    #[pyo3(signature = (regime, k))]
    fn new(regime: &str, k: [[f64; 2]; 2]) -> PyResult<Self> {
        Ok(Self(tpm_core::PermeabilityTensor::new(parse_regime(regime)?, k, 0, 0)))
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        serde_json::from_str(text).map(Self).map_err(|e| PyValueError::new_err(e.to_string()))
    }

    fn to_json(&self) -> PyResult<String> {
        tpm_core::io::to_json_string(&self.0).map_err(to_py)
    }

    #[getter]
    fn regime(&self) -> &'static str {
        self.0.regime.as_str()
    }
    #[getter]
    fn k(&self) -> [[f64; 2]; 2] {
        self.0.k
    }
    #[getter]
    fn asymmetry(&self) -> f64 {
        self.0.asymmetry
    }
    #[getter]
    fn residuals(&self) -> Vec<f64> {
        self.0.residuals.clone()
    }
    fn eigenvalues(&self) -> [f64; 2] {
        self.0.eigenvalues()
    }
    fn is_positive_definite(&self) -> bool {
        self.0.is_positive_definite()
    }

    fn __repr__(&self) -> String {
        format!("PermeabilityTensor(regime={}, k={:?})", self.0.regime, self.0.k)
    }
}

#[pyfunction]
#[pyo3(signature = (regime, geometry, rel_tol = 1e-10))]
fn permeability(py: Python<'_>, regime: &str, geometry: &PyCellGeometry, rel_tol: f64) -> PyResult<PyPermeabilityTensor> {
    let regime = parse_regime(regime)?;
    let cfg = SolverConfig::with_tol(rel_tol);
    let geom = &geometry.0;
    py.detach(|| cellproblems::permeability(regime, geom, &cfg)).map(PyPermeabilityTensor).map_err(to_py)
}

/// Pressure and face velocities of a macroscale Darcy solve.
#[pyclass(name = "DarcySolution", frozen)]
pub struct PyDarcySolution(pub tpm_core::DarcySolution);

#[pymethods]
impl PyDarcySolution {
    #[getter]
    fn shape(&self) -> (usize, usize) {
        (self.0.m, self.0.my)
    }
    /// Cell pressures, row-major in `(j, i)`.
    #[getter]
    fn pressure(&self) -> Vec<f64> {
        self.0.pressure.clone()
    }
    /// x-face velocities, `(m + 1) * my` entries.
    #[getter]
    fn vx(&self) -> Vec<f64> {
        self.0.vx.clone()
    }
    /// y-face velocities, `m * (my + 1)` entries.
    #[getter]
    fn vy(&self) -> Vec<f64> {
        self.0.vy.clone()
    }
    #[getter]
    fn prefactor(&self) -> f64 {
        self.0.prefactor
    }
    #[getter]
    fn iterations(&self) -> usize {
        self.0.stats.iterations
    }
    fn max_divergence(&self) -> f64 {
        self.0.max_divergence()
    }
    fn mean_pressure(&self) -> f64 {
        self.0.mean_pressure()
    }
}

/// `force` is "manufactured", "none" or an `(fx, fy)` pair. The manufactured
/// force is adapted to `k` so that the exact pressure is cos(pi x/lx) cos(pi y/ly).
#[pyfunction]
#[pyo3(signature = (k, lx = 1.0, ly = 1.0, m = 32, my = None, eta = 1.0, force = None, rel_tol = 1e-10))]
#[allow(clippy::too_many_arguments)]
fn solve_darcy(
    py: Python<'_>,
    k: &PyPermeabilityTensor,
    lx: f64,
    ly: f64,
    m: usize,
    my: Option<usize>,
    eta: f64,
    force: Option<&Bound<'_, PyAny>>,
    rel_tol: f64,
) -> PyResult<PyDarcySolution> {
    let my = my.unwrap_or(m);
    let kk = k.0.k;
    let domain = match force {
        None => darcy::MacroDomain::uniform(lx, ly, m, my, eta, [0.0, 0.0]),
        Some(f) => {
            if let Ok(name) = f.extract::<String>() {
                match name.as_str() {
                    "manufactured" => {
                        darcy::MacroDomain::with_force(lx, ly, m, my, eta, |x, y| manufactured::force_for(x, y, lx, ly, &kk))
                    }
                    "none" => darcy::MacroDomain::uniform(lx, ly, m, my, eta, [0.0, 0.0]),
                    other => return Err(PyValueError::new_err(format!("unknown force {other:?}"))),
                }
            } else {
                let (fx, fy): (f64, f64) = f.extract()?;
                darcy::MacroDomain::uniform(lx, ly, m, my, eta, [fx, fy])
            }
        }
    }
    .map_err(to_py)?;
    let cfg = SolverConfig::with_tol(rel_tol);
    let tensor = &k.0;
    py.detach(|| darcy::solve_darcy(&domain, tensor, &cfg)).map(PyDarcySolution).map_err(to_py)
}

/// Returns `(factor, vx, vy)`; raises `ValidityError` when gamma > gamma_c.
#[pyfunction]
fn scale_back(solution: &PyDarcySolution, report: &PyExponentReport, epsilon: f64) -> PyResult<(f64, Vec<f64>, Vec<f64>)> {
    let s = darcy::scale_back(&solution.0, &report.0, epsilon).map_err(to_py)?;
    Ok((s.factor, s.vx, s.vy))
}

#[pymodule]
pub fn thinporous(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyExponentReport>()?;
    m.add_class::<PyCellGeometry>()?;
    m.add_class::<PyPermeabilityTensor>()?;
    m.add_class::<PyDarcySolution>()?;
    m.add_function(wrap_pyfunction!(classify, m)?)?;
    m.add_function(wrap_pyfunction!(permeability, m)?)?;
    m.add_function(wrap_pyfunction!(solve_darcy, m)?)?;
    m.add_function(wrap_pyfunction!(scale_back, m)?)?;
    m.add("ValidityError", m.py().get_type::<ValidityError>())?;
    m.add("SolverError", m.py().get_type::<SolverError>())?;
    Ok(())
}
