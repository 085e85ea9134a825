//! Permeability cell problems.
//!
//! * HTPM: periodic 2D Stokes flow around the obstacle, `K_ij = ∫ w^i_j`.
//! * PTPM: 3D Stokes flow in the layer `Z' × (0, 1)` between no-slip walls
//!   around the extruded obstacle, `K_ij = ∫ w^i_j` over the fluid volume.
//! * VTPM: the Hele-Shaw problem `-Δπ = 0`, `(∇π + e_i)·n = 0` on the
//!   obstacle, `K_ij = ∫ (∇π^i + e_i)·e_j`.
//!
//! The Stokes problems are discretized on the staggered grids of
//! [`crate::grid`] with binary masking and solved as one symmetric indefinite
//! system. Momentum rows are scaled by `1/d` and the pressure unknown by
//! `√d`, `d` being the velocity diagonal, so both blocks are of unit size
//! and MINRES needs no preconditioner. The pressure is fixed by projecting
//! out constants over the fluid cells.

use std::thread;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{CellGeometry, StaggeredField2D, StaggeredField3D};
use crate::linsolve::{solve_spd, solve_symmetric, SolveStats, SolverConfig, SparseMatrix};
use crate::regimes::Regime;

pub type Mat2 = [[f64; 2]; 2];

const NONE: usize = usize::MAX;

/// Number of worker threads for independent direction solves; `TPM_THREADS`
/// caps it.
pub fn worker_threads() -> usize {
    let available = thread::available_parallelism().map_or(1, |n| n.get());
    match std::env::var("TPM_THREADS").ok().and_then(|v| v.trim().parse::<usize>().ok()) {
        Some(cap) => cap.clamp(1, available.max(1)),
        None => available,
    }
}

/// Run the `i = 1, 2` solves, concurrently when more than one worker is allowed.
fn for_both_directions<T, F>(f: F) -> Result<[T; 2]>
where
    T: Send,
    F: Fn(usize) -> Result<T> + Sync,
{
    if worker_threads() >= 2 {
        let (a, b) = thread::scope(|s| {
            let second = s.spawn(|| f(1));
            let first = f(0);
            (first, second.join().expect("direction solve panicked"))
        });
        Ok([a?, b?])
    } else {
        Ok([f(0)?, f(1)?])
    }
}

/// Symmetric positive definite 2×2 tensor relating averaged velocity to the
/// effective force.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PermeabilityTensor {
    pub regime: Regime,
    pub k: Mat2,
    pub n: usize,
    pub nz: usize,
    /// Final relative residual of each column solve.
    pub residuals: Vec<f64>,
    /// `|k12 - k21| / ‖k‖_F` before symmetrization.
    pub asymmetry: f64,
    #[serde(skip)]
    pub iterations: Vec<usize>,
}

impl PermeabilityTensor {
    pub fn new(regime: Regime, k: Mat2, n: usize, nz: usize) -> Self {
        Self { regime, k, n, nz, residuals: vec![0.0, 0.0], asymmetry: 0.0, iterations: vec![0, 0] }
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.k.iter().flatten().map(|x| x * x).sum::<f64>().sqrt()
    }

    /// Eigenvalues of the symmetric part, ascending.
    pub fn eigenvalues(&self) -> [f64; 2] {
        let a = self.k[0][0];
        let d = self.k[1][1];
        let b = 0.5 * (self.k[0][1] + self.k[1][0]);
        let mean = 0.5 * (a + d);
        let rad = (0.25 * (a - d) * (a - d) + b * b).sqrt();
        [mean - rad, mean + rad]
    }

    pub fn is_positive_definite(&self) -> bool {
        self.eigenvalues()[0] > 0.0
    }

    pub fn quadratic_form(&self, x: [f64; 2]) -> f64 {
        (0..2).flat_map(|i| (0..2).map(move |j| (i, j))).map(|(i, j)| x[i] * self.k[i][j] * x[j]).sum()
    }

    pub fn apply(&self, x: [f64; 2]) -> [f64; 2] {
        [self.k[0][0] * x[0] + self.k[0][1] * x[1], self.k[1][0] * x[0] + self.k[1][1] * x[1]]
    }

    fn measure_asymmetry(&mut self) {
        let norm = self.frobenius_norm();
        self.asymmetry = if norm > 0.0 { (self.k[0][1] - self.k[1][0]).abs() / norm } else { 0.0 };
    }

    /// Replace `k` by its symmetric part; the asymmetry metric is kept.
    pub fn symmetrize(&mut self) {
        let off = 0.5 * (self.k[0][1] + self.k[1][0]);
        self.k[0][1] = off;
        self.k[1][0] = off;
    }
}

/// Discrete cell field for one forcing direction.
#[derive(Debug, Clone, PartialEq)]
pub enum CellField {
    Planar(StaggeredField2D),
    Layered(StaggeredField3D),
}

#[derive(Debug, Clone, PartialEq)]
pub struct DirectionSolution {
    /// Velocity `w^i` and pressure `π^i`. For the Hele-Shaw problem the face
    /// components hold the total flux `∇π^i + e_i` (zero on closed faces).
    pub field: CellField,
    pub stats: SolveStats,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CellSolution {
    pub regime: Regime,
    pub directions: Vec<DirectionSolution>,
}

/// Unknown numbering for the staggered Stokes system. Planar systems have a
/// single level and no `w` unknowns.
#[derive(Debug, Clone)]
pub struct StokesLayout {
    pub n: usize,
    pub levels: usize,
    pub layered: bool,
    pub h: f64,
    pub h3: f64,
    u: Vec<usize>,
    v: Vec<usize>,
    w: Vec<usize>,
    p: Vec<usize>,
    pub num_velocity: usize,
    pub num_pressure: usize,
}

impl StokesLayout {
    fn new(geom: &CellGeometry, layered: bool) -> Self {
        let n = geom.n;
        let levels = if layered { geom.levels() } else { 1 };
        let plane = n * n;
        let mut next = 0;
        let number = |active: bool, next: &mut usize| {
            if active {
                *next += 1;
                *next - 1
            } else {
                NONE
            }
        };
        let mut u = vec![NONE; plane * levels];
        let mut v = vec![NONE; plane * levels];
        for l in 0..levels {
            for c in 0..plane {
                u[c + plane * l] = number(!geom.mask.u_face[c], &mut next);
            }
        }
        for l in 0..levels {
            for c in 0..plane {
                v[c + plane * l] = number(!geom.mask.v_face[c], &mut next);
            }
        }
        let wl = if layered { levels - 1 } else { 0 };
        let mut w = vec![NONE; plane * wl];
        for l in 0..wl {
            for c in 0..plane {
                w[c + plane * l] = number(!geom.mask.cell[c], &mut next);
            }
        }
        let num_velocity = next;
        let mut p = vec![NONE; plane * levels];
        for l in 0..levels {
            for c in 0..plane {
                p[c + plane * l] = number(!geom.mask.cell[c], &mut next);
            }
        }
        let num_pressure = next - num_velocity;
        Self { n, levels, layered, h: geom.h(), h3: geom.h3(), u, v, w, p, num_velocity, num_pressure }
    }

    pub fn dim(&self) -> usize {
        self.num_velocity + self.num_pressure
    }

    /// Diagonal of the unscaled velocity block.
    fn velocity_diagonal(&self) -> f64 {
        let lateral = 4.0 / (self.h * self.h);
        if self.layered {
            lateral + 2.0 / (self.h3 * self.h3)
        } else {
            lateral
        }
    }
}

/// Assembled and scaled Stokes cell system.
#[derive(Debug, Clone)]
pub struct StokesSystem {
    pub layout: StokesLayout,
    pub matrix: SparseMatrix,
    /// Momentum rows are multiplied by `1/d`, pressures by `√d`.
    pub diag_scale: f64,
    pub nullspace: Vec<f64>,
}

impl StokesSystem {
    pub fn assemble(geom: &CellGeometry, layered: bool) -> Result<Self> {
        let lay = StokesLayout::new(geom, layered);
        let n = lay.n;
        let plane = n * n;
        let nl = lay.levels;
        let d = lay.velocity_diagonal();
        let s = 1.0 / d;
        let g = 1.0 / d.sqrt();
        let ih2 = 1.0 / (lay.h * lay.h);
        let ih32 = 1.0 / (lay.h3 * lay.h3);
        let ih = 1.0 / lay.h;
        let ih3 = 1.0 / lay.h3;
        let at = |i: usize, j: usize, l: usize| (i % n) + n * (j % n) + plane * l;
        let mut t: Vec<(usize, usize, f64)> = Vec::with_capacity(lay.dim() * 9);

        let push_sym = |t: &mut Vec<(usize, usize, f64)>, r: usize, c: usize, v: f64| {
            t.push((r, c, v));
            t.push((c, r, v));
        };

        // horizontal components: comp 0 = u (normal x), comp 1 = v (normal y)
        for comp in 0..2 {
            let idx = if comp == 0 { &lay.u } else { &lay.v };
            for l in 0..nl {
                for j in 0..n {
                    for i in 0..n {
                        let row = idx[at(i, j, l)];
                        if row == NONE {
                            continue;
                        }
                        // a closed neighbour across the velocity component is mirrored
                        // (ghost = -value), putting the no-slip wall on the staircase
                        // edge half a spacing away
                        let tangential = 1 - comp;
                        let mut diag = 1.0;
                        let lateral = [(at(i + 1, j, l), 0), (at(i + n - 1, j, l), 0), (at(i, j + 1, l), 1), (at(i, j + n - 1, l), 1)];
                        for (nb, axis) in lateral {
                            if idx[nb] != NONE {
                                t.push((row, idx[nb], -s * ih2));
                            } else if axis == tangential {
                                diag += s * ih2;
                            }
                        }
                        t.push((row, row, diag));
                        if layered {
                            if l + 1 < nl && idx[at(i, j, l + 1)] != NONE {
                                t.push((row, idx[at(i, j, l + 1)], -s * ih32));
                            }
                            if l > 0 && idx[at(i, j, l - 1)] != NONE {
                                t.push((row, idx[at(i, j, l - 1)], -s * ih32));
                            }
                        }
                        let behind = if comp == 0 { at(i + n - 1, j, l) } else { at(i, j + n - 1, l) };
                        push_sym(&mut t, row, lay.p[at(i, j, l)], g * ih);
                        push_sym(&mut t, row, lay.p[behind], -g * ih);
                    }
                }
            }
        }
        if layered {
            for l in 0..nl - 1 {
                for j in 0..n {
                    for i in 0..n {
                        let row = lay.w[at(i, j, l)];
                        if row == NONE {
                            continue;
                        }
                        let mut diag = 1.0;
                        for nb in [at(i + 1, j, l), at(i + n - 1, j, l), at(i, j + 1, l), at(i, j + n - 1, l)] {
                            if lay.w[nb] != NONE {
                                t.push((row, lay.w[nb], -s * ih2));
                            } else {
                                diag += s * ih2;
                            }
                        }
                        t.push((row, row, diag));
                        if l + 2 < nl && lay.w[at(i, j, l + 1)] != NONE {
                            t.push((row, lay.w[at(i, j, l + 1)], -s * ih32));
                        }
                        if l > 0 && lay.w[at(i, j, l - 1)] != NONE {
                            t.push((row, lay.w[at(i, j, l - 1)], -s * ih32));
                        }
                        push_sym(&mut t, row, lay.p[at(i, j, l + 1)], g * ih3);
                        push_sym(&mut t, row, lay.p[at(i, j, l)], -g * ih3);
                    }
                }
            }
        }

        let matrix = SparseMatrix::from_triplets(lay.dim(), &t)?;
        let mut nullspace = vec![0.0; lay.dim()];
        nullspace[lay.num_velocity..].iter_mut().for_each(|x| *x = 1.0);
        Ok(Self { layout: lay, matrix, diag_scale: d, nullspace })
    }

    /// Right-hand side for the body force `e_dir` (`None` for zero force).
    pub fn rhs(&self, dir: Option<usize>) -> Vec<f64> {
        let mut b = vec![0.0; self.layout.dim()];
        if let Some(dir) = dir {
            let idx = if dir == 0 { &self.layout.u } else { &self.layout.v };
            let s = 1.0 / self.diag_scale;
            for &k in idx.iter().filter(|k| **k != NONE) {
                b[k] = s;
            }
        }
        b
    }

    pub fn solve(&self, rhs: &[f64], cfg: &SolverConfig) -> Result<DirectionSolution> {
        let cfg = SolverConfig { nullspace: vec![self.nullspace.clone()], ..cfg.clone() };
        let sol = solve_symmetric(&self.matrix, rhs, &cfg)?;
        Ok(DirectionSolution { field: self.unpack(&sol.x), stats: sol.stats })
    }

    /// Scatter a solution vector into a staggered field (inactive entries zero).
    pub fn unpack(&self, x: &[f64]) -> CellField {
        let lay = &self.layout;
        let pscale = self.diag_scale.sqrt();
        let gather = |idx: &[usize], scale: f64| -> Vec<f64> {
            idx.iter().map(|&k| if k == NONE { 0.0 } else { scale * x[k] }).collect()
        };
        let (u, v, p) = (gather(&lay.u, 1.0), gather(&lay.v, 1.0), gather(&lay.p, pscale));
        if lay.layered {
            CellField::Layered(StaggeredField3D {
                n: lay.n,
                nz: lay.levels + 1,
                h: lay.h,
                h3: lay.h3,
                u,
                v,
                w: gather(&lay.w, 1.0),
                p,
            })
        } else {
            CellField::Planar(StaggeredField2D { n: lay.n, h: lay.h, u, v, p })
        }
    }
}

/// `[∫ w_1, ∫ w_2]` over the fluid region (midpoint rule on faces).
pub fn velocity_average(field: &CellField) -> [f64; 2] {
    match field {
        CellField::Planar(f) => {
            let cells = (f.n * f.n) as f64;
            [f.u.iter().sum::<f64>() / cells, f.v.iter().sum::<f64>() / cells]
        }
        CellField::Layered(f) => {
            let cells = (f.n * f.n * f.nz) as f64;
            [f.u.iter().sum::<f64>() / cells, f.v.iter().sum::<f64>() / cells]
        }
    }
}

/// Viscous dissipation `∫ |∇w|²` by explicit finite differences. Closed
/// neighbours in the direction of the component (and the `z₃` walls) are
/// zeros one spacing away; closed neighbours across it are mirror ghosts, so
/// the wall sits half a spacing away.
pub fn dissipation(field: &CellField, geom: &CellGeometry) -> f64 {
    let n = geom.n;
    let plane = n * n;
    let at = |i: usize, j: usize| (i % n) + n * (j % n);
    // squared differences over the lateral lattice, each pair once; a link to
    // a closed neighbour along axis a contributes weight[a] * value²
    let lateral = |a: &[f64], open: &dyn Fn(usize) -> bool, levels: usize, weight: [f64; 2]| -> f64 {
        let mut acc = 0.0;
        for l in 0..levels {
            for j in 0..n {
                for i in 0..n {
                    let c = at(i, j);
                    if !open(c) {
                        continue;
                    }
                    let val = a[c + plane * l];
                    for (axis, nb) in [at(i + 1, j), at(i, j + 1)].into_iter().enumerate() {
                        if open(nb) {
                            acc += (val - a[nb + plane * l]).powi(2);
                        } else {
                            acc += weight[axis] * val * val;
                        }
                    }
                    for (axis, nb) in [at(i + n - 1, j), at(i, j + n - 1)].into_iter().enumerate() {
                        if !open(nb) {
                            acc += weight[axis] * val * val;
                        }
                    }
                }
            }
        }
        acc
    };
    let mask = &geom.mask;
    let u_open = |c: usize| !mask.u_face[c];
    let v_open = |c: usize| !mask.v_face[c];
    let w_open = |c: usize| !mask.cell[c];
    match field {
        // (Δu/h)² h² per pair
        CellField::Planar(f) => lateral(&f.u, &u_open, 1, [1.0, 2.0]) + lateral(&f.v, &v_open, 1, [2.0, 1.0]),
        CellField::Layered(f) => {
            let nl = f.nz - 1;
            let ih2 = (n * n) as f64;
            let ih32 = (f.nz * f.nz) as f64;
            let vertical = |a: &[f64], levels: usize| -> f64 {
                // walls (or closed outer w faces) sit one spacing beyond the end levels
                let mut acc = 0.0;
                for c in 0..plane {
                    let mut prev = 0.0;
                    for l in 0..levels {
                        let val = a[c + plane * l];
                        acc += (val - prev).powi(2);
                        prev = val;
                    }
                    acc += prev * prev;
                }
                acc
            };
            let lat = lateral(&f.u, &u_open, nl, [1.0, 2.0])
                + lateral(&f.v, &v_open, nl, [2.0, 1.0])
                + lateral(&f.w, &w_open, nl - 1, [2.0, 2.0]);
            let vert = vertical(&f.u, nl) + vertical(&f.v, nl) + vertical(&f.w, nl - 1);
            (lat * ih2 + vert * ih32) / (plane * f.nz) as f64
        }
    }
}

fn tensor_from_columns(regime: Regime, geom: &CellGeometry, dirs: &[DirectionSolution], k: Mat2) -> PermeabilityTensor {
    let mut t = PermeabilityTensor::new(regime, k, geom.n, geom.nz);
    t.residuals = dirs.iter().map(|d| d.stats.residual).collect();
    t.iterations = dirs.iter().map(|d| d.stats.iterations).collect();
    t.measure_asymmetry();
    t
}

fn solve_stokes_cell(geom: &CellGeometry, cfg: &SolverConfig, layered: bool) -> Result<(CellSolution, PermeabilityTensor)> {
    cfg.validate()?;
    let system = StokesSystem::assemble(geom, layered)?;
    let dirs = for_both_directions(|dir| system.solve(&system.rhs(Some(dir)), cfg))?;
    let k = [velocity_average(&dirs[0].field), velocity_average(&dirs[1].field)];
    let regime = if layered { Regime::Ptpm } else { Regime::Htpm };
    let tensor = tensor_from_columns(regime, geom, &dirs, k);
    Ok((CellSolution { regime, directions: dirs.into() }, tensor))
}

/// Periodic 2D Stokes cell problem (HTPM).
pub fn solve_stokes2d_cell(geom: &CellGeometry, cfg: &SolverConfig) -> Result<(CellSolution, PermeabilityTensor)> {
    if !geom.has_obstacle() {
        return Err(Error::Incompatible(
            "the periodic 2D Stokes problem needs an obstacle to balance the body force".into(),
        ));
    }
    solve_stokes_cell(geom, cfg, false)
}

/// 3D Stokes cell problem between the walls `z = 0, 1` (PTPM). Only the
/// lateral forcings are solved: with no vertical force the third problem has
/// the zero solution.
pub fn solve_stokes3d_cell(geom: &CellGeometry, cfg: &SolverConfig) -> Result<(CellSolution, PermeabilityTensor)> {
    solve_stokes_cell(geom, cfg, true)
}

/// Graph-Laplacian form of the Hele-Shaw cell problem on the fluid cells.
#[derive(Debug, Clone)]
pub struct HeleShawSystem {
    pub n: usize,
    cell_index: Vec<usize>,
    pub matrix: SparseMatrix,
    pub nullspace: Vec<f64>,
}

impl HeleShawSystem {
    pub fn assemble(geom: &CellGeometry) -> Result<Self> {
        let n = geom.n;
        let mask = &geom.mask;
        let mut cell_index = vec![NONE; n * n];
        let mut count = 0;
        for (c, solid) in mask.cell.iter().enumerate() {
            if !solid {
                cell_index[c] = count;
                count += 1;
            }
        }
        let mut t = Vec::with_capacity(5 * count);
        for j in 0..n {
            for i in 0..n {
                let c = i + n * j;
                let row = cell_index[c];
                if row == NONE {
                    continue;
                }
                let ip = (i + 1) % n + n * j;
                let im = (i + n - 1) % n + n * j;
                let jp = i + n * ((j + 1) % n);
                let jm = i + n * ((j + n - 1) % n);
                // (neighbour cell, face between them)
                for (nb, face_closed) in [
                    (ip, mask.u_face[ip]),
                    (im, mask.u_face[c]),
                    (jp, mask.v_face[jp]),
                    (jm, mask.v_face[c]),
                ] {
                    if !face_closed {
                        t.push((row, row, 1.0));
                        t.push((row, cell_index[nb], -1.0));
                    }
                }
            }
        }
        let matrix = SparseMatrix::from_triplets(count, &t)?;
        Ok(Self { n, cell_index, matrix, nullspace: vec![1.0; count] })
    }

    /// `-h² Dᵀ e_dir`: net count of open faces across the cell along `dir`, times `h`.
    pub fn rhs(&self, geom: &CellGeometry, dir: usize) -> Vec<f64> {
        let n = self.n;
        let h = geom.h();
        let mut b = vec![0.0; self.matrix.dim()];
        for j in 0..n {
            for i in 0..n {
                let c = i + n * j;
                let row = self.cell_index[c];
                if row == NONE {
                    continue;
                }
                let (lo, hi) = if dir == 0 {
                    (geom.mask.u_face[c], geom.mask.u_face[(i + 1) % n + n * j])
                } else {
                    (geom.mask.v_face[c], geom.mask.v_face[i + n * ((j + 1) % n)])
                };
                let open = |closed: bool| if closed { 0.0 } else { 1.0 };
                b[row] = h * (open(hi) - open(lo));
            }
        }
        b
    }

    pub fn solve(&self, geom: &CellGeometry, dir: usize, cfg: &SolverConfig) -> Result<DirectionSolution> {
        let cfg = SolverConfig { nullspace: vec![self.nullspace.clone()], ..cfg.clone() };
        let sol = solve_spd(&self.matrix, &self.rhs(geom, dir), &cfg)?;
        Ok(DirectionSolution { field: self.flux_field(geom, &sol.x, dir), stats: sol.stats })
    }

    /// Pressure on cells and total flux `∇π + e_dir` on open faces.
    pub fn flux_field(&self, geom: &CellGeometry, pi: &[f64], dir: usize) -> CellField {
        let n = self.n;
        let inv_h = n as f64;
        let mut f = StaggeredField2D::zeros(n);
        for (c, &k) in self.cell_index.iter().enumerate() {
            if k != NONE {
                f.p[c] = pi[k];
            }
        }
        for j in 0..n {
            for i in 0..n {
                let c = i + n * j;
                if !geom.mask.u_face[c] {
                    let left = (i + n - 1) % n + n * j;
                    f.u[c] = (f.p[c] - f.p[left]) * inv_h + if dir == 0 { 1.0 } else { 0.0 };
                }
                if !geom.mask.v_face[c] {
                    let below = i + n * ((j + n - 1) % n);
                    f.v[c] = (f.p[c] - f.p[below]) * inv_h + if dir == 1 { 1.0 } else { 0.0 };
                }
            }
        }
        CellField::Planar(f)
    }
}

/// Hele-Shaw cell problem (VTPM).
pub fn solve_heleshaw_cell(geom: &CellGeometry, cfg: &SolverConfig) -> Result<(CellSolution, PermeabilityTensor)> {
    cfg.validate()?;
    let system = HeleShawSystem::assemble(geom)?;
    let dirs = for_both_directions(|dir| system.solve(geom, dir, cfg))?;
    let k = [velocity_average(&dirs[0].field), velocity_average(&dirs[1].field)];
    let tensor = tensor_from_columns(Regime::Vtpm, geom, &dirs, k);
    Ok((CellSolution { regime: Regime::Vtpm, directions: dirs.into() }, tensor))
}

/// `∫_{Z'_f} (∇π^i + e_i)·(∇π^j + e_j)`, equal to `K_V,ij` at the discrete solution.
pub fn heleshaw_energy(solution: &CellSolution) -> Result<Mat2> {
    if solution.regime != Regime::Vtpm {
        return Err(Error::Incompatible("not a Hele-Shaw solution".into()));
    }
    let flux = |d: usize| match &solution.directions[d].field {
        CellField::Planar(f) => Ok(f),
        CellField::Layered(_) => Err(Error::Shape("Hele-Shaw fields are planar".into())),
    };
    let (a, b) = (flux(0)?, flux(1)?);
    let cells = (a.n * a.n) as f64;
    let e = |x: &StaggeredField2D, y: &StaggeredField2D| {
        (crate::grid::inner(&x.u, &y.u) + crate::grid::inner(&x.v, &y.v)) / cells
    };
    Ok([[e(a, a), e(a, b)], [e(b, a), e(b, b)]])
}

/// Vertical integration rules for the film profile.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProfileRule {
    Analytic,
    /// Cell midpoints of `nz` uniform intervals.
    Midpoint(usize),
    /// Two-point Gauss-Legendre on each of `nz` intervals (exact for cubics).
    GaussLegendre(usize),
}

/// Poiseuille profile of the explicit vertical reduction, `½(z² - z)`.
pub fn film_profile(z: f64) -> f64 {
    0.5 * (z * z - z)
}

/// `∫_0^1 ½(z² - z) dz`, which is exactly `-1/12`.
pub fn profile_integral(rule: ProfileRule) -> f64 {
    match rule {
        ProfileRule::Analytic => -1.0 / 12.0,
        ProfileRule::Midpoint(nz) => {
            let h = 1.0 / nz as f64;
            (0..nz).map(|k| film_profile((k as f64 + 0.5) * h)).sum::<f64>() * h
        }
        ProfileRule::GaussLegendre(nz) => {
            let h = 1.0 / nz as f64;
            let off = 0.5 * h / 3f64.sqrt();
            (0..nz)
                .map(|k| {
                    let mid = (k as f64 + 0.5) * h;
                    0.5 * h * (film_profile(mid - off) + film_profile(mid + off))
                })
                .sum()
        }
    }
}

/// Reconstruct the layered velocity `w^i(z) = ½(z₃² - z₃)(∇π^i + e_i)` of
/// the reduced 3D problem from a Hele-Shaw solution, sampled on the layered
/// grid of `geom`.
pub fn reconstruct_layered_velocity(geom: &CellGeometry, direction: &DirectionSolution) -> Result<StaggeredField3D> {
    let CellField::Planar(flux) = &direction.field else {
        return Err(Error::Shape("expected a planar Hele-Shaw field".into()));
    };
    let mut f = StaggeredField3D::zeros(geom.n, geom.nz);
    let plane = geom.n * geom.n;
    for l in 0..f.levels() {
        let prof = film_profile(f.level_height(l));
        for c in 0..plane {
            f.u[c + plane * l] = prof * flux.u[c];
            f.v[c + plane * l] = prof * flux.v[c];
            f.p[c + plane * l] = flux.p[c];
        }
    }
    Ok(f)
}

/// Returns `(A, B)`: `A = -12 ∫_{Z'_f} ∫_0^1 w^i_j` with `w^i` given by the
/// explicit vertical reduction of a Hele-Shaw solution, and `B = K_V`.
pub fn crosscheck_from_solution(geom: &CellGeometry, solution: &CellSolution, kv: &PermeabilityTensor) -> Result<(Mat2, Mat2)> {
    if solution.regime != Regime::Vtpm || kv.regime != Regime::Vtpm {
        return Err(Error::Incompatible("the vertical reduction needs a Hele-Shaw solution".into()));
    }
    let vertical = profile_integral(ProfileRule::GaussLegendre(geom.nz));
    let mut a = [[0.0; 2]; 2];
    for (i, dir) in solution.directions.iter().enumerate() {
        let CellField::Planar(flux) = &dir.field else {
            return Err(Error::Shape("expected a planar Hele-Shaw field".into()));
        };
        let cells = (geom.n * geom.n) as f64;
        let integrate = |face: &[f64]| face.iter().map(|q| vertical * q).sum::<f64>() / cells;
        a[i] = [-12.0 * integrate(&flux.u), -12.0 * integrate(&flux.v)];
    }
    Ok((a, kv.k))
}

pub fn reduced3d_crosscheck(geom: &CellGeometry, cfg: &SolverConfig) -> Result<(Mat2, Mat2)> {
    let (solution, kv) = solve_heleshaw_cell(geom, cfg)?;
    crosscheck_from_solution(geom, &solution, &kv)
}

/// Solve the cell problem of `regime` and return the symmetrized tensor.
pub fn permeability(regime: Regime, geom: &CellGeometry, cfg: &SolverConfig) -> Result<PermeabilityTensor> {
    permeability_with_solution(regime, geom, cfg).map(|(_, k)| k)
}

pub fn permeability_with_solution(
    regime: Regime,
    geom: &CellGeometry,
    cfg: &SolverConfig,
) -> Result<(CellSolution, PermeabilityTensor)> {
    let (solution, mut k) = match regime {
        Regime::Htpm => solve_stokes2d_cell(geom, cfg)?,
        Regime::Ptpm => solve_stokes3d_cell(geom, cfg)?,
        Regime::Vtpm => solve_heleshaw_cell(geom, cfg)?,
    };
    k.symmetrize();
    Ok((solution, k))
}
