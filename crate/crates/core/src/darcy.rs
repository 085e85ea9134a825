//! Macroscale Darcy problem on a rectangle `ω = (0, Lx) × (0, Ly)`:
//!
//! ```text
//! V = c K (f - ∇P),   div V = 0 in ω,   V·n = 0 on ∂ω,   mean(P) = 0,
//! ```
//!
//! with `c = 1/η` for HTPM/PTPM and `c = 1/(12η)` for VTPM.
//!
//! The pressure minimizes the discrete energy
//!
//! ```text
//! Σ_x-faces K11 (gx - fx)² + Σ_y-faces K22 (gy - fy)² + Σ_vertices 2 K12 (ḡx - f̄x)(ḡy - f̄y)
//! ```
//!
//! over interior faces and vertices, where `g` are two-point face gradients
//! and `ḡ` their averages at interior grid vertices. The energy is convex for
//! any SPD `K`, reduces to the usual five-point scheme for diagonal `K`, and
//! its Euler-Lagrange equations are exactly `div V = 0` for the face fluxes
//! returned here. Boundary faces carry no flux by construction. With a
//! nonzero `K12` the cross term is truncated at the boundary vertices, which
//! costs one order of accuracy next to the walls.

use serde::Serialize;

use crate::cellproblems::PermeabilityTensor;
use crate::error::{Error, Result};
use crate::linsolve::{cg_solve_from, SolveStats, SolverConfig, SparseMatrix};
use crate::regimes::{ExponentReport, Regime};

#[derive(Debug, Clone, PartialEq)]
pub struct MacroDomain {
    pub lx: f64,
    pub ly: f64,
    pub m: usize,
    pub my: usize,
    pub eta: f64,
    /// Cell-centered body force, index `i + m*j`.
    pub force_x: Vec<f64>,
    pub force_y: Vec<f64>,
}

impl MacroDomain {
    /// Domain with the force sampled at cell centers.
    pub fn with_force(lx: f64, ly: f64, m: usize, my: usize, eta: f64, force: impl Fn(f64, f64) -> [f64; 2]) -> Result<Self> {
        let mut d = Self { lx, ly, m, my, eta, force_x: vec![0.0; m * my], force_y: vec![0.0; m * my] };
        d.validate_shape()?;
        for j in 0..my {
            for i in 0..m {
                let (x, y) = d.cell_center(i, j);
                let [fx, fy] = force(x, y);
                d.force_x[i + m * j] = fx;
                d.force_y[i + m * j] = fy;
            }
        }
        d.validate()?;
        Ok(d)
    }

    pub fn uniform(lx: f64, ly: f64, m: usize, my: usize, eta: f64, force: [f64; 2]) -> Result<Self> {
        Self::with_force(lx, ly, m, my, eta, |_, _| force)
    }

    pub fn hx(&self) -> f64 {
        self.lx / self.m as f64
    }

    pub fn hy(&self) -> f64 {
        self.ly / self.my as f64
    }

    pub fn cell_center(&self, i: usize, j: usize) -> (f64, f64) {
        ((i as f64 + 0.5) * self.hx(), (j as f64 + 0.5) * self.hy())
    }

    fn validate_shape(&self) -> Result<()> {
        if !(self.lx > 0.0 && self.ly > 0.0 && self.lx.is_finite() && self.ly.is_finite()) {
            return Err(Error::Domain(format!("domain lengths must be positive, got {} x {}", self.lx, self.ly)));
        }
        if self.m < 2 || self.my < 2 {
            return Err(Error::Domain(format!("need at least 2x2 cells, got {}x{}", self.m, self.my)));
        }
        if !(self.eta > 0.0 && self.eta.is_finite()) {
            return Err(Error::Domain(format!("viscosity must be positive, got {}", self.eta)));
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        self.validate_shape()?;
        let cells = self.m * self.my;
        if self.force_x.len() != cells || self.force_y.len() != cells {
            return Err(Error::Shape(format!("force arrays must have {cells} entries")));
        }
        if self.force_x.iter().chain(&self.force_y).any(|f| !f.is_finite()) {
            return Err(Error::Domain("force must be finite everywhere".into()));
        }
        Ok(())
    }
}

/// Darcy prefactor `c` in `V = c K (f - ∇P)`.
pub fn prefactor(regime: Regime, eta: f64) -> f64 {
    match regime {
        Regime::Htpm | Regime::Ptpm => 1.0 / eta,
        Regime::Vtpm => 1.0 / (12.0 * eta),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DarcySolution {
    pub m: usize,
    pub my: usize,
    pub lx: f64,
    pub ly: f64,
    pub regime: Regime,
    pub prefactor: f64,
    /// Cell-centered, zero mean.
    pub pressure: Vec<f64>,
    /// Normal velocity on x-faces, `(m + 1) * my` entries, index `i + (m+1)*j`;
    /// the boundary columns `i = 0, m` are zero.
    pub vx: Vec<f64>,
    /// Normal velocity on y-faces, `m * (my + 1)` entries, index `i + m*j`.
    pub vy: Vec<f64>,
    pub stats: SolveStats,
}

impl DarcySolution {
    pub fn hx(&self) -> f64 {
        self.lx / self.m as f64
    }

    pub fn hy(&self) -> f64 {
        self.ly / self.my as f64
    }

    pub fn divergence(&self) -> Vec<f64> {
        let (m, my) = (self.m, self.my);
        let (hx, hy) = (self.hx(), self.hy());
        let mut div = vec![0.0; m * my];
        for j in 0..my {
            for i in 0..m {
                div[i + m * j] = (self.vx[i + 1 + (m + 1) * j] - self.vx[i + (m + 1) * j]) / hx
                    + (self.vy[i + m * (j + 1)] - self.vy[i + m * j]) / hy;
            }
        }
        div
    }

    pub fn max_divergence(&self) -> f64 {
        self.divergence().iter().fold(0.0, |a, d| a.max(d.abs()))
    }

    /// `∮ |V·n|` over `∂ω`.
    pub fn boundary_flux(&self) -> f64 {
        let (m, my) = (self.m, self.my);
        let mut total = 0.0;
        for j in 0..my {
            total += (self.vx[(m + 1) * j].abs() + self.vx[m + (m + 1) * j].abs()) * self.hy();
        }
        for i in 0..m {
            total += (self.vy[i].abs() + self.vy[i + m * my].abs()) * self.hx();
        }
        total
    }

    pub fn mean_pressure(&self) -> f64 {
        self.pressure.iter().sum::<f64>() / self.pressure.len() as f64
    }

    pub fn max_velocity(&self) -> f64 {
        self.vx.iter().chain(&self.vy).fold(0.0, |a, v| a.max(v.abs()))
    }

    /// Net volume flux through the vertical line `x = i hx` (`i` in `0..=m`).
    pub fn flux_through_column(&self, i: usize) -> f64 {
        (0..self.my).map(|j| self.vx[i + (self.m + 1) * j]).sum::<f64>() * self.hy()
    }
}

/// Interior-face and vertex bookkeeping for the energy discretization.
struct Stencil {
    m: usize,
    my: usize,
    hx: f64,
    hy: f64,
}

impl Stencil {
    fn new(d: &MacroDomain) -> Self {
        Self { m: d.m, my: d.my, hx: d.hx(), hy: d.hy() }
    }

    fn cell(&self, i: usize, j: usize) -> usize {
        i + self.m * j
    }

    /// Interior x-face at `x = i hx`, `1 <= i < m`.
    fn xface(&self, i: usize, j: usize) -> usize {
        (i - 1) + (self.m - 1) * j
    }

    /// Interior y-face at `y = j hy`, `1 <= j < my`.
    fn yface(&self, i: usize, j: usize) -> usize {
        i + self.m * (j - 1)
    }

    fn num_xfaces(&self) -> usize {
        (self.m - 1) * self.my
    }

    fn num_yfaces(&self) -> usize {
        self.m * (self.my - 1)
    }

    /// Cell weights of `ḡx` and `ḡy` at interior vertex `(i, j)`.
    fn vertex_weights(&self, i: usize, j: usize) -> ([(usize, f64); 4], [(usize, f64); 4]) {
        let ax = 0.5 / self.hx;
        let ay = 0.5 / self.hy;
        let gx = [
            (self.cell(i, j - 1), ax),
            (self.cell(i - 1, j - 1), -ax),
            (self.cell(i, j), ax),
            (self.cell(i - 1, j), -ax),
        ];
        let gy = [
            (self.cell(i - 1, j), ay),
            (self.cell(i - 1, j - 1), -ay),
            (self.cell(i, j), ay),
            (self.cell(i, j - 1), -ay),
        ];
        (gx, gy)
    }

    /// Face-averaged forces on the interior faces.
    fn face_forces(&self, d: &MacroDomain) -> (Vec<f64>, Vec<f64>) {
        let mut fx = vec![0.0; self.num_xfaces()];
        let mut fy = vec![0.0; self.num_yfaces()];
        for j in 0..self.my {
            for i in 1..self.m {
                fx[self.xface(i, j)] = 0.5 * (d.force_x[self.cell(i - 1, j)] + d.force_x[self.cell(i, j)]);
            }
        }
        for j in 1..self.my {
            for i in 0..self.m {
                fy[self.yface(i, j)] = 0.5 * (d.force_y[self.cell(i, j - 1)] + d.force_y[self.cell(i, j)]);
            }
        }
        (fx, fy)
    }

    fn gradients(&self, p: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let mut gx = vec![0.0; self.num_xfaces()];
        let mut gy = vec![0.0; self.num_yfaces()];
        for j in 0..self.my {
            for i in 1..self.m {
                gx[self.xface(i, j)] = (p[self.cell(i, j)] - p[self.cell(i - 1, j)]) / self.hx;
            }
        }
        for j in 1..self.my {
            for i in 0..self.m {
                gy[self.yface(i, j)] = (p[self.cell(i, j)] - p[self.cell(i, j - 1)]) / self.hy;
            }
        }
        (gx, gy)
    }

    /// `q = M (g - f)`: face fluxes of `K(∇P - f)`, i.e. `-V / c`.
    fn fluxes(&self, k: &[[f64; 2]; 2], rx: &[f64], ry: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let mut qx: Vec<f64> = rx.iter().map(|r| k[0][0] * r).collect();
        let mut qy: Vec<f64> = ry.iter().map(|r| k[1][1] * r).collect();
        let k12 = 0.5 * (k[0][1] + k[1][0]);
        if k12 != 0.0 {
            for j in 1..self.my {
                for i in 1..self.m {
                    let (xa, xb) = (self.xface(i, j - 1), self.xface(i, j));
                    let (ya, yb) = (self.yface(i - 1, j), self.yface(i, j));
                    let rxv = 0.5 * (rx[xa] + rx[xb]);
                    let ryv = 0.5 * (ry[ya] + ry[yb]);
                    qx[xa] += 0.5 * k12 * ryv;
                    qx[xb] += 0.5 * k12 * ryv;
                    qy[ya] += 0.5 * k12 * rxv;
                    qy[yb] += 0.5 * k12 * rxv;
                }
            }
        }
        (qx, qy)
    }

    /// `Gᵀ q` on the cells.
    fn transpose_gradient(&self, qx: &[f64], qy: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.m * self.my];
        for j in 0..self.my {
            for i in 1..self.m {
                let q = qx[self.xface(i, j)] / self.hx;
                out[self.cell(i, j)] += q;
                out[self.cell(i - 1, j)] -= q;
            }
        }
        for j in 1..self.my {
            for i in 0..self.m {
                let q = qy[self.yface(i, j)] / self.hy;
                out[self.cell(i, j)] += q;
                out[self.cell(i, j - 1)] -= q;
            }
        }
        out
    }

    fn matrix(&self, k: &[[f64; 2]; 2]) -> Result<SparseMatrix> {
        let n = self.m * self.my;
        let mut t = Vec::with_capacity(n * 9);
        let (cx, cy) = (k[0][0] / (self.hx * self.hx), k[1][1] / (self.hy * self.hy));
        let pair = |t: &mut Vec<(usize, usize, f64)>, a: usize, b: usize, w: f64| {
            t.push((a, a, w));
            t.push((b, b, w));
            t.push((a, b, -w));
            t.push((b, a, -w));
        };
        for j in 0..self.my {
            for i in 1..self.m {
                pair(&mut t, self.cell(i - 1, j), self.cell(i, j), cx);
            }
        }
        for j in 1..self.my {
            for i in 0..self.m {
                pair(&mut t, self.cell(i, j - 1), self.cell(i, j), cy);
            }
        }
        let k12 = 0.5 * (k[0][1] + k[1][0]);
        if k12 != 0.0 {
            for j in 1..self.my {
                for i in 1..self.m {
                    let (ax, ay) = self.vertex_weights(i, j);
                    for &(p, a) in &ax {
                        for &(q, b) in &ay {
                            t.push((p, q, k12 * a * b));
                            t.push((q, p, k12 * a * b));
                        }
                    }
                }
            }
        }
        SparseMatrix::from_triplets(n, &t)
    }
}

fn check_tensor(k: &PermeabilityTensor) -> Result<()> {
    let norm = k.frobenius_norm();
    if !k.k.iter().flatten().all(|x| x.is_finite()) {
        return Err(Error::Tensor("non-finite entries".into()));
    }
    if (k.k[0][1] - k.k[1][0]).abs() > 1e-8 * norm {
        return Err(Error::Tensor(format!("not symmetric: k12 = {}, k21 = {}", k.k[0][1], k.k[1][0])));
    }
    if !k.is_positive_definite() || k.k[0][0] <= 0.0 || k.k[1][1] <= 0.0 {
        return Err(Error::Tensor(format!("not positive definite: eigenvalues {:?}", k.eigenvalues())));
    }
    Ok(())
}

/// `Σ_cells (Gᵀ M f)`: zero up to rounding for any force, which is the
/// solvability condition of the pure Neumann problem.
pub fn compatibility_defect(domain: &MacroDomain, k: &PermeabilityTensor) -> Result<f64> {
    domain.validate()?;
    let st = Stencil::new(domain);
    let (fx, fy) = st.face_forces(domain);
    let (qx, qy) = st.fluxes(&k.k, &fx, &fy);
    Ok(st.transpose_gradient(&qx, &qy).iter().sum())
}

pub fn solve_darcy(domain: &MacroDomain, k: &PermeabilityTensor, cfg: &SolverConfig) -> Result<DarcySolution> {
    solve_darcy_from(domain, k, None, cfg)
}

/// As [`solve_darcy`], starting the iteration from `initial` pressures.
pub fn solve_darcy_from(
    domain: &MacroDomain,
    k: &PermeabilityTensor,
    initial: Option<&[f64]>,
    cfg: &SolverConfig,
) -> Result<DarcySolution> {
    domain.validate()?;
    check_tensor(k)?;
    let st = Stencil::new(domain);
    let cells = domain.m * domain.my;
    let a = st.matrix(&k.k)?;
    let (fx, fy) = st.face_forces(domain);
    let (mfx, mfy) = st.fluxes(&k.k, &fx, &fy);
    let b = st.transpose_gradient(&mfx, &mfy);

    let cfg = SolverConfig { nullspace: vec![vec![1.0; cells]], ..cfg.clone() };
    let sol = cg_solve_from(&a, &b, initial, &cfg)?;
    let mut pressure = sol.x;
    let mean = pressure.iter().sum::<f64>() / cells as f64;
    pressure.iter_mut().for_each(|p| *p -= mean);

    let c = prefactor(k.regime, domain.eta);
    let (gx, gy) = st.gradients(&pressure);
    let rx: Vec<f64> = gx.iter().zip(&fx).map(|(g, f)| g - f).collect();
    let ry: Vec<f64> = gy.iter().zip(&fy).map(|(g, f)| g - f).collect();
    let (qx, qy) = st.fluxes(&k.k, &rx, &ry);

    let (m, my) = (domain.m, domain.my);
    let mut vx = vec![0.0; (m + 1) * my];
    let mut vy = vec![0.0; m * (my + 1)];
    for j in 0..my {
        for i in 1..m {
            vx[i + (m + 1) * j] = -c * qx[st.xface(i, j)];
        }
    }
    for j in 1..my {
        for i in 0..m {
            vy[i + m * j] = -c * qy[st.yface(i, j)];
        }
    }
    Ok(DarcySolution {
        m,
        my,
        lx: domain.lx,
        ly: domain.ly,
        regime: k.regime,
        prefactor: c,
        pressure,
        vx,
        vy,
        stats: sol.stats,
    })
}

/// Physical-scale approximation `(ε^s Ṽ, P̃)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScaledApproximation {
    pub epsilon: f64,
    pub exponent: f64,
    pub factor: f64,
    #[serde(skip)]
    pub pressure: Vec<f64>,
    #[serde(skip)]
    pub vx: Vec<f64>,
    #[serde(skip)]
    pub vy: Vec<f64>,
}

/// Rescale the averaged velocity to the film of thickness `ε`. Refused when
/// `γ > γ_c`, where inertia survives the limit.
pub fn scale_back(sol: &DarcySolution, report: &ExponentReport, epsilon: f64) -> Result<ScaledApproximation> {
    if !report.darcy_valid {
        return Err(Error::Validity { gamma: report.gamma, gamma_c: report.gamma_c });
    }
    if !(epsilon > 0.0 && epsilon <= 1.0) {
        return Err(Error::Domain(format!("epsilon must lie in (0, 1], got {epsilon}")));
    }
    let factor = epsilon.powf(report.vel_scale_exp);
    Ok(ScaledApproximation {
        epsilon,
        exponent: report.vel_scale_exp,
        factor,
        pressure: sol.pressure.clone(),
        vx: sol.vx.iter().map(|v| v * factor).collect(),
        vy: sol.vy.iter().map(|v| v * factor).collect(),
    })
}

/// Closed-form data for the manufactured Darcy problem on `(0, lx) × (0, ly)`:
/// `P* = cos(πx/lx) cos(πy/ly)` and the divergence-free `g = rot ψ` with
/// `ψ = sin²(πx/lx) sin²(πy/ly)`, which has no normal component on `∂ω`.
pub mod manufactured {
    use std::f64::consts::PI;

    pub fn pressure(x: f64, y: f64, lx: f64, ly: f64) -> f64 {
        (PI * x / lx).cos() * (PI * y / ly).cos()
    }

    pub fn pressure_gradient(x: f64, y: f64, lx: f64, ly: f64) -> [f64; 2] {
        let (sx, cx) = (PI * x / lx).sin_cos();
        let (sy, cy) = (PI * y / ly).sin_cos();
        [-PI / lx * sx * cy, -PI / ly * cx * sy]
    }

    /// `g = (∂ψ/∂y, -∂ψ/∂x)`.
    pub fn solenoidal(x: f64, y: f64, lx: f64, ly: f64) -> [f64; 2] {
        let (sx, s2x) = ((PI * x / lx).sin(), (2.0 * PI * x / lx).sin());
        let (sy, s2y) = ((PI * y / ly).sin(), (2.0 * PI * y / ly).sin());
        [PI / ly * sx * sx * s2y, -PI / lx * s2x * sy * sy]
    }

    /// `f = ∇P* + g`; with `K = I` the Darcy solution is `P = P*`, `V = c g`.
    pub fn force(x: f64, y: f64, lx: f64, ly: f64) -> [f64; 2] {
        force_for(x, y, lx, ly, &[[1.0, 0.0], [0.0, 1.0]])
    }

    /// `f = ∇P* + K⁻¹g`, so that `P = P*` and `V = c g` for any SPD `K`.
    /// A singular `K` falls back to [`force`]; the solver rejects it anyway.
    pub fn force_for(x: f64, y: f64, lx: f64, ly: f64, k: &[[f64; 2]; 2]) -> [f64; 2] {
        let gp = pressure_gradient(x, y, lx, ly);
        let g = solenoidal(x, y, lx, ly);
        let det = k[0][0] * k[1][1] - k[0][1] * k[1][0];
        let kg = if det > 0.0 && det.is_finite() {
            [(k[1][1] * g[0] - k[0][1] * g[1]) / det, (k[0][0] * g[1] - k[1][0] * g[0]) / det]
        } else {
            g
        };
        [gp[0] + kg[0], gp[1] + kg[1]]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::regimes::{exponent_report, RegimeParams};

    fn iso(regime: Regime, k: f64) -> PermeabilityTensor {
        PermeabilityTensor::new(regime, [[k, 0.0], [0.0, k]], 16, 16)
    }

    fn tight() -> SolverConfig {
        SolverConfig::with_tol(1e-13)
    }

    #[test]
    fn closed_box_with_constant_force() {
        let d = MacroDomain::uniform(1.0, 1.0, 16, 16, 1.0, [1.0, 0.0]).unwrap();
        let s = solve_darcy(&d, &iso(Regime::Htpm, 1.0), &tight()).unwrap();
        assert!(s.max_velocity() <= 1e-10);
        for j in 0..16 {
            for i in 0..16 {
                let (x, _) = d.cell_center(i, j);
                assert!((s.pressure[i + 16 * j] - (x - 0.5)).abs() <= 1e-10);
            }
        }
    }

    #[test]
    fn zero_force_gives_zero_solution() {
        let d = MacroDomain::uniform(2.0, 1.0, 10, 6, 3.0, [0.0, 0.0]).unwrap();
        let k = PermeabilityTensor::new(Regime::Ptpm, [[2.0, 0.0], [0.0, 1.0]], 8, 8);
        let s = solve_darcy(&d, &k, &SolverConfig::default()).unwrap();
        assert!(s.pressure.iter().all(|p| *p == 0.0));
        assert!(s.vx.iter().chain(&s.vy).all(|v| *v == 0.0));
    }

    #[test]
    fn invalid_tensors_are_rejected() {
        let d = MacroDomain::uniform(1.0, 1.0, 8, 8, 1.0, [1.0, 0.0]).unwrap();
        let bad = PermeabilityTensor::new(Regime::Htpm, [[1.0, 2.0], [2.0, 1.0]], 8, 8);
        assert!(matches!(solve_darcy(&d, &bad, &SolverConfig::default()), Err(Error::Tensor(_))));
        let skew = PermeabilityTensor::new(Regime::Htpm, [[1.0, 0.1], [0.0, 1.0]], 8, 8);
        assert!(matches!(solve_darcy(&d, &skew, &SolverConfig::default()), Err(Error::Tensor(_))));
    }

    #[test]
    fn domain_validation() {
        assert!(MacroDomain::uniform(0.0, 1.0, 8, 8, 1.0, [0.0, 0.0]).is_err());
        assert!(MacroDomain::uniform(1.0, 1.0, 1, 8, 1.0, [0.0, 0.0]).is_err());
        assert!(MacroDomain::uniform(1.0, 1.0, 8, 8, 0.0, [0.0, 0.0]).is_err());
        assert!(MacroDomain::uniform(1.0, 1.0, 8, 8, 1.0, [f64::NAN, 0.0]).is_err());
    }

    #[test]
    fn prefactor_by_regime() {
        assert_eq!(prefactor(Regime::Htpm, 2.0), 0.5);
        assert_eq!(prefactor(Regime::Ptpm, 2.0), 0.5);
        assert_eq!(prefactor(Regime::Vtpm, 2.0), 1.0 / 24.0);
    }

    #[test]
    fn divergence_free_and_no_flux_for_anisotropic_tensor() {
        let d = MacroDomain::with_force(1.5, 1.0, 24, 16, 0.7, |x, y| [(3.0 * x).sin() + y, x * y - 0.3]).unwrap();
        let k = PermeabilityTensor::new(Regime::Vtpm, [[1.3, 0.4], [0.4, 0.6]], 8, 8);
        let s = solve_darcy(&d, &k, &SolverConfig::with_tol(1e-12)).unwrap();
        let vscale = s.max_velocity() / d.hx().min(d.hy());
        assert!(s.max_divergence() <= 1e-9 * vscale);
        assert_eq!(s.boundary_flux(), 0.0);
        assert!(s.mean_pressure().abs() <= 1e-12);
        for i in 0..=d.m {
            assert!(s.flux_through_column(i).abs() < 1e-9);
        }
    }

    #[test]
    fn compatibility_holds_for_any_force() {
        let d = MacroDomain::with_force(1.0, 2.0, 13, 9, 1.0, |x, y| [x.exp(), (x * y).cos()]).unwrap();
        let k = PermeabilityTensor::new(Regime::Htpm, [[2.0, -0.5], [-0.5, 1.0]], 8, 8);
        assert!(compatibility_defect(&d, &k).unwrap().abs() <= 1e-12);
    }

    #[test]
    fn initial_guess_does_not_change_the_pressure() {
        let d = MacroDomain::with_force(1.0, 1.0, 20, 20, 1.0, |x, y| manufactured::force(x, y, 1.0, 1.0)).unwrap();
        let k = iso(Regime::Htpm, 1.0);
        let a = solve_darcy(&d, &k, &tight()).unwrap();
        let guess: Vec<f64> = (0..400).map(|c| (c as f64 * 0.1).sin() + 5.0).collect();
        let b = solve_darcy_from(&d, &k, Some(&guess), &tight()).unwrap();
        let diff = a.pressure.iter().zip(&b.pressure).fold(0.0f64, |m, (x, y)| m.max((x - y).abs()));
        assert!(diff <= 1e-10);
    }

    #[test]
    fn adding_a_gradient_shifts_the_pressure() {
        use std::f64::consts::PI;
        let base = |x: f64, y: f64| [x.sin() * y, 0.5 * x - y * y];
        // φ = sin²(πx) sin²(πy) (x 0.3), smooth and vanishing with its gradient on ∂ω
        let phi = |x: f64, y: f64| 0.3 * (PI * x).sin().powi(2) * (PI * y).sin().powi(2);
        let grad_phi = |x: f64, y: f64| {
            [
                0.3 * PI * (2.0 * PI * x).sin() * (PI * y).sin().powi(2),
                0.3 * PI * (PI * x).sin().powi(2) * (2.0 * PI * y).sin(),
            ]
        };
        let k = PermeabilityTensor::new(Regime::Htpm, [[1.0, 0.0], [0.0, 0.5]], 8, 8);
        let run = |m: usize| {
            let d0 = MacroDomain::with_force(1.0, 1.0, m, m, 1.0, base).unwrap();
            let d1 = MacroDomain::with_force(1.0, 1.0, m, m, 1.0, |x, y| {
                let (f, g) = (base(x, y), grad_phi(x, y));
                [f[0] + g[0], f[1] + g[1]]
            })
            .unwrap();
            let s0 = solve_darcy(&d0, &k, &tight()).unwrap();
            let s1 = solve_darcy(&d1, &k, &tight()).unwrap();
            let mut shift: Vec<f64> = (0..m * m)
                .map(|c| {
                    let (x, y) = d0.cell_center(c % m, c / m);
                    s1.pressure[c] - s0.pressure[c] - phi(x, y)
                })
                .collect();
            let mean = shift.iter().sum::<f64>() / (m * m) as f64;
            shift.iter_mut().for_each(|s| *s -= mean);
            let p_err = shift.iter().fold(0.0f64, |a, s| a.max(s.abs()));
            let v_err = s0.vx.iter().zip(&s1.vx).chain(s0.vy.iter().zip(&s1.vy)).fold(0.0f64, |a, (x, y)| a.max((x - y).abs()));
            (p_err, v_err)
        };
        let (p1, v1) = run(16);
        let (p2, v2) = run(32);
        assert!(v1 < 1e-10 && v2 < 1e-10, "{v1} {v2}");
        assert!(p1 < 5e-3 && p2 < p1 / 3.0, "{p1} {p2}");
    }

    #[test]
    fn scale_back_factors() {
        let d = MacroDomain::uniform(1.0, 1.0, 8, 8, 1.0, [0.0, 1.0]).unwrap();
        let s = solve_darcy(&d, &iso(Regime::Htpm, 0.02), &SolverConfig::default()).unwrap();

        let htpm = exponent_report(&RegimeParams::new(0.1, 2.0, 1.0).unwrap()).unwrap();
        let scaled = scale_back(&s, &htpm, 0.1).unwrap();
        assert!((scaled.factor - 1e-3).abs() < 1e-15);

        let vtpm = exponent_report(&RegimeParams::new(0.1, 0.5, 1.0).unwrap()).unwrap();
        let scaled = scale_back(&s, &vtpm, 0.1).unwrap();
        assert!((scaled.factor - 0.1).abs() < 1e-15);

        let scaled = scale_back(&s, &vtpm, 1.0).unwrap();
        assert_eq!(scaled.factor, 1.0);
        assert_eq!(scaled.vx, s.vx);
        assert_eq!(scaled.pressure, s.pressure);

        let invalid = exponent_report(&RegimeParams::new(0.1, 0.5, 1.2).unwrap()).unwrap();
        assert!(matches!(scale_back(&s, &invalid, 0.1), Err(Error::Validity { .. })));
        assert!(scale_back(&s, &vtpm, 0.0).is_err());
    }
}
