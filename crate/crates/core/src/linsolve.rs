//! Sparse symmetric linear algebra.
//!
//! Unpreconditioned (or Jacobi-preconditioned) conjugate gradients for
//! positive semidefinite systems and MINRES for symmetric indefinite ones.
//! Declared nullspaces are projected out of the right-hand side, the Krylov
//! vectors and the final iterate, so singular but consistent systems return
//! the solution orthogonal to the nullspace. Everything is sequential and
//! deterministic: identical inputs give bitwise identical iterates.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Row-compressed sparse matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseMatrix {
    dim: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl SparseMatrix {
    /// Assemble from `(row, col, value)` triplets; duplicates are summed and
    /// entries that end up exactly zero are dropped.
    pub fn from_triplets(dim: usize, triplets: &[(usize, usize, f64)]) -> Result<Self> {
        let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); dim];
        for &(r, c, v) in triplets {
            if r >= dim || c >= dim {
                return Err(Error::Shape(format!("entry ({r}, {c}) outside a {dim}x{dim} matrix")));
            }
            rows[r].push((c, v));
        }
        let mut row_ptr = Vec::with_capacity(dim + 1);
        let mut col_idx = Vec::with_capacity(triplets.len());
        let mut values = Vec::with_capacity(triplets.len());
        row_ptr.push(0);
        for mut row in rows {
            row.sort_by_key(|e| e.0);
            let mut k = 0;
            while k < row.len() {
                let c = row[k].0;
                let mut sum = 0.0;
                while k < row.len() && row[k].0 == c {
                    sum += row[k].1;
                    k += 1;
                }
                if sum != 0.0 {
                    col_idx.push(c);
                    values.push(sum);
                }
            }
            row_ptr.push(col_idx.len());
        }
        Ok(Self { dim, row_ptr, col_idx, values })
    }

    pub fn identity(dim: usize) -> Self {
        Self { dim, row_ptr: (0..=dim).collect(), col_idx: (0..dim).collect(), values: vec![1.0; dim] }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let range = self.row_ptr[r]..self.row_ptr[r + 1];
        self.col_idx[range.clone()].iter().copied().zip(self.values[range].iter().copied())
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.row(r).find(|(col, _)| *col == c).map_or(0.0, |(_, v)| v)
    }

    /// `y = A x`
    pub fn matvec_into(&self, x: &[f64], y: &mut [f64]) {
        debug_assert_eq!(x.len(), self.dim);
        debug_assert_eq!(y.len(), self.dim);
        for (r, out) in y.iter_mut().enumerate() {
            let mut acc = 0.0;
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                acc += self.values[k] * x[self.col_idx[k]];
            }
            *out = acc;
        }
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.dim];
        self.matvec_into(x, &mut y);
        y
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.dim).map(|r| self.get(r, r)).collect()
    }

    /// `max |a_ij - a_ji| / max |a_ij|`.
    pub fn asymmetry(&self) -> f64 {
        let scale = self.values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if scale == 0.0 {
            return 0.0;
        }
        let mut worst = 0.0f64;
        for r in 0..self.dim {
            for (c, v) in self.row(r) {
                worst = worst.max((v - self.get(c, r)).abs());
            }
        }
        worst / scale
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.dim, self.dim);
        for r in 0..self.dim {
            for (c, v) in self.row(r) {
                m[(r, c)] = v;
            }
        }
        m
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Backend {
    /// CG or MINRES, depending on the call.
    #[default]
    Krylov,
    /// Dense LU; for validating small systems only.
    Dense,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    pub rel_tol: f64,
    /// `None` picks `max(50 sqrt(dim), 10_000)`.
    pub max_iter: Option<usize>,
    /// Vectors spanning the nullspace to project out (need not be orthonormal).
    pub nullspace: Vec<Vec<f64>>,
    pub jacobi: bool,
    pub backend: Backend,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self { rel_tol: 1e-10, max_iter: None, nullspace: Vec::new(), jacobi: false, backend: Backend::Krylov }
    }
}

impl SolverConfig {
    pub fn with_tol(rel_tol: f64) -> Self {
        Self { rel_tol, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.rel_tol > 0.0 && self.rel_tol < 1.0) {
            return Err(Error::Config(format!("rel_tol must lie in (0, 1), got {}", self.rel_tol)));
        }
        if self.max_iter == Some(0) {
            return Err(Error::Config("max_iter must be at least 1".into()));
        }
        Ok(())
    }

    pub fn iteration_cap(&self, dim: usize) -> usize {
        self.max_iter.unwrap_or_else(|| ((50.0 * (dim as f64).sqrt()) as usize).max(10_000))
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct SolveStats {
    pub iterations: usize,
    /// True relative residual `‖b - Ax‖ / ‖b‖` of the returned iterate.
    pub residual: f64,
    /// Set when the right-hand side had a nullspace component that was removed.
    pub rhs_projected: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Solution {
    pub x: Vec<f64>,
    pub stats: SolveStats,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// Orthonormal basis of a nullspace, built by modified Gram-Schmidt.
#[derive(Debug, Clone, Default)]
pub struct Nullspace {
    basis: Vec<Vec<f64>>,
}

impl Nullspace {
    pub fn new(vectors: &[Vec<f64>], dim: usize) -> Result<Self> {
        let mut basis: Vec<Vec<f64>> = Vec::new();
        for v in vectors {
            if v.len() != dim {
                return Err(Error::Shape(format!("nullspace vector of length {} for dimension {dim}", v.len())));
            }
            let mut q = v.clone();
            for e in &basis {
                let c = dot(&q, e);
                axpy(-c, e, &mut q);
            }
            let nq = norm(&q);
            if nq > 1e-12 * norm(v).max(f64::MIN_POSITIVE) {
                q.iter_mut().for_each(|x| *x /= nq);
                basis.push(q);
            }
        }
        Ok(Self { basis })
    }

    pub fn is_empty(&self) -> bool {
        self.basis.is_empty()
    }

    pub fn basis(&self) -> &[Vec<f64>] {
        &self.basis
    }

    /// Remove the nullspace component in place.
    pub fn project(&self, x: &mut [f64]) {
        for e in &self.basis {
            let c = dot(x, e);
            axpy(-c, e, x);
        }
    }
}

fn jacobi_inverse(a: &SparseMatrix) -> Vec<f64> {
    a.diagonal().iter().map(|d| if d.abs() > 0.0 { 1.0 / d.abs() } else { 1.0 }).collect()
}

fn check_rhs(a: &SparseMatrix, b: &[f64]) -> Result<()> {
    if b.len() != a.dim() {
        return Err(Error::Shape(format!("rhs of length {} for a {}x{} matrix", b.len(), a.dim(), a.dim())));
    }
    Ok(())
}

/// Project the right-hand side; returns the projected copy and whether it changed.
fn prepare_rhs(b: &[f64], ns: &Nullspace) -> (Vec<f64>, bool) {
    let mut bp = b.to_vec();
    ns.project(&mut bp);
    let removed = b.iter().zip(&bp).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    (bp, removed > 1e-12 * norm(b).max(f64::MIN_POSITIVE))
}

fn true_residual(a: &SparseMatrix, x: &[f64], b: &[f64], bnorm: f64) -> f64 {
    let ax = a.matvec(x);
    let r: f64 = ax.iter().zip(b).map(|(y, bi)| (bi - y).powi(2)).sum::<f64>().sqrt();
    r / bnorm
}

/// Conjugate gradients for symmetric positive semidefinite `A`.
pub fn cg_solve(a: &SparseMatrix, b: &[f64], cfg: &SolverConfig) -> Result<Solution> {
    cg_solve_from(a, b, None, cfg)
}

pub fn cg_solve_from(a: &SparseMatrix, b: &[f64], x0: Option<&[f64]>, cfg: &SolverConfig) -> Result<Solution> {
    cfg.validate()?;
    check_rhs(a, b)?;
    let n = a.dim();
    let ns = Nullspace::new(&cfg.nullspace, n)?;
    let (b, rhs_projected) = prepare_rhs(b, &ns);
    let bnorm = norm(&b);
    if bnorm == 0.0 {
        return Ok(Solution { x: vec![0.0; n], stats: SolveStats { iterations: 0, residual: 0.0, rhs_projected } });
    }
    let minv = cfg.jacobi.then(|| jacobi_inverse(a));
    let precondition = |r: &[f64], z: &mut [f64]| {
        match &minv {
            Some(m) => z.iter_mut().zip(r.iter().zip(m)).for_each(|(zi, (ri, mi))| *zi = ri * mi),
            None => z.copy_from_slice(r),
        }
        ns.project(z);
    };

    let mut x = match x0 {
        Some(x0) => {
            if x0.len() != n {
                return Err(Error::Shape("initial guess has the wrong length".into()));
            }
            x0.to_vec()
        }
        None => vec![0.0; n],
    };
    ns.project(&mut x);
    let mut r = b.clone();
    if x.iter().any(|v| *v != 0.0) {
        let ax = a.matvec(&x);
        r.iter_mut().zip(&ax).for_each(|(ri, axi)| *ri -= axi);
        ns.project(&mut r);
    }
    let mut z = vec![0.0; n];
    precondition(&r, &mut z);
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut ap = vec![0.0; n];
    let cap = cfg.iteration_cap(n);

    let mut rel = norm(&r) / bnorm;
    let mut it = 0;
    while it < cap {
        if rel <= cfg.rel_tol {
            let t = true_residual(a, &x, &b, bnorm);
            if t <= cfg.rel_tol {
                return Ok(Solution { x, stats: SolveStats { iterations: it, residual: t, rhs_projected } });
            }
        }
        a.matvec_into(&p, &mut ap);
        let pap = dot(&p, &ap);
        if pap <= 0.0 {
            break;
        }
        let alpha = rz / pap;
        axpy(alpha, &p, &mut x);
        axpy(-alpha, &ap, &mut r);
        ns.project(&mut r);
        precondition(&r, &mut z);
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for (pi, zi) in p.iter_mut().zip(&z) {
            *pi = zi + beta * *pi;
        }
        rel = norm(&r) / bnorm;
        it += 1;
    }
    ns.project(&mut x);
    let t = true_residual(a, &x, &b, bnorm);
    if t <= cfg.rel_tol {
        return Ok(Solution { x, stats: SolveStats { iterations: it, residual: t, rhs_projected } });
    }
    Err(Error::NoConvergence { iterations: it, residual: t })
}

/// MINRES for symmetric, possibly indefinite `A` (Paige-Saunders recurrences).
pub fn minres_solve(a: &SparseMatrix, b: &[f64], cfg: &SolverConfig) -> Result<Solution> {
    cfg.validate()?;
    check_rhs(a, b)?;
    let n = a.dim();
    let ns = Nullspace::new(&cfg.nullspace, n)?;
    let (b, rhs_projected) = prepare_rhs(b, &ns);
    let bnorm = norm(&b);
    if bnorm == 0.0 {
        return Ok(Solution { x: vec![0.0; n], stats: SolveStats { iterations: 0, residual: 0.0, rhs_projected } });
    }
    let minv = cfg.jacobi.then(|| jacobi_inverse(a));
    let apply_minv = |r: &[f64]| -> Vec<f64> {
        match &minv {
            Some(m) => r.iter().zip(m).map(|(ri, mi)| ri * mi).collect(),
            None => r.to_vec(),
        }
    };

    let mut x = vec![0.0; n];
    let mut r1 = b.clone();
    let mut y = apply_minv(&r1);
    let beta1 = dot(&r1, &y).sqrt();
    let mut r2 = r1.clone();
    let mut w = vec![0.0; n];
    let mut w1 = vec![0.0; n];
    let mut w2 = vec![0.0; n];
    let mut v = vec![0.0; n];

    let (mut oldb, mut beta) = (0.0, beta1);
    let (mut dbar, mut epsln, mut phibar) = (0.0, 0.0, beta1);
    let (mut cs, mut sn) = (-1.0f64, 0.0f64);
    let cap = cfg.iteration_cap(n);

    let mut it = 0;
    while it < cap {
        it += 1;
        let s = 1.0 / beta;
        v.iter_mut().zip(&y).for_each(|(vi, yi)| *vi = s * yi);
        a.matvec_into(&v, &mut y);
        if it >= 2 {
            axpy(-beta / oldb, &r1, &mut y);
        }
        let alfa = dot(&v, &y);
        axpy(-alfa / beta, &r2, &mut y);
        std::mem::swap(&mut r1, &mut r2);
        r2.copy_from_slice(&y);
        ns.project(&mut r2);
        y = apply_minv(&r2);
        oldb = beta;
        beta = dot(&r2, &y).max(0.0).sqrt();

        let oldeps = epsln;
        let delta = cs * dbar + sn * alfa;
        let gbar = sn * dbar - cs * alfa;
        epsln = sn * beta;
        dbar = -cs * beta;

        let gamma = gbar.hypot(beta).max(f64::EPSILON);
        cs = gbar / gamma;
        sn = beta / gamma;
        let phi = cs * phibar;
        phibar *= sn;

        let denom = 1.0 / gamma;
        std::mem::swap(&mut w1, &mut w2);
        std::mem::swap(&mut w2, &mut w);
        for k in 0..n {
            w[k] = (v[k] - oldeps * w1[k] - delta * w2[k]) * denom;
        }
        axpy(phi, &w, &mut x);

        let estimate = phibar / beta1;
        let breakdown = beta <= 1e-14 * beta1;
        if estimate <= cfg.rel_tol || breakdown {
            let mut xp = x.clone();
            ns.project(&mut xp);
            let t = true_residual(a, &xp, &b, bnorm);
            if t <= cfg.rel_tol {
                return Ok(Solution { x: xp, stats: SolveStats { iterations: it, residual: t, rhs_projected } });
            }
            if breakdown {
                return Err(Error::NoConvergence { iterations: it, residual: t });
            }
        }
    }
    ns.project(&mut x);
    let t = true_residual(a, &x, &b, bnorm);
    if t <= cfg.rel_tol {
        return Ok(Solution { x, stats: SolveStats { iterations: it, residual: t, rhs_projected } });
    }
    Err(Error::NoConvergence { iterations: it, residual: t })
}

pub const DENSE_MAX_DIM: usize = 20_000;

/// Partial-pivoting LU solve. Fails when the matrix is numerically singular.
pub fn dense_solve(a: &DMatrix<f64>, b: &[f64]) -> Result<Vec<f64>> {
    let n = a.nrows();
    if a.ncols() != n || b.len() != n {
        return Err(Error::Shape(format!("dense system {}x{} with rhs {}", a.nrows(), a.ncols(), b.len())));
    }
    if n > DENSE_MAX_DIM {
        return Err(Error::Shape(format!("dense solve limited to dimension {DENSE_MAX_DIM}, got {n}")));
    }
    let lu = a.clone().lu();
    let u = lu.u();
    let pivots = u.diagonal();
    let max = pivots.iter().fold(0.0f64, |m, d| m.max(d.abs()));
    let min = pivots.iter().fold(f64::INFINITY, |m, d| m.min(d.abs()));
    if max == 0.0 || min <= 1e-13 * max {
        return Err(Error::Singular(format!("pivot ratio {:.3e}", if max == 0.0 { 0.0 } else { min / max })));
    }
    let x = lu
        .solve(&DVector::from_column_slice(b))
        .ok_or_else(|| Error::Singular("zero pivot".into()))?;
    Ok(x.as_slice().to_vec())
}

/// Dense solve of a singular symmetric system: the matrix is bordered with an
/// orthonormal nullspace basis `N`, enforcing `Nᵀx = 0`.
pub fn dense_solve_with_nullspace(a: &DMatrix<f64>, b: &[f64], nullspace: &[Vec<f64>]) -> Result<Vec<f64>> {
    let n = a.nrows();
    let ns = Nullspace::new(nullspace, n)?;
    if ns.is_empty() {
        return dense_solve(a, b);
    }
    let k = ns.basis().len();
    let mut big = DMatrix::zeros(n + k, n + k);
    big.view_mut((0, 0), (n, n)).copy_from(a);
    for (c, e) in ns.basis().iter().enumerate() {
        for r in 0..n {
            big[(r, n + c)] = e[r];
            big[(n + c, r)] = e[r];
        }
    }
    let (bp, _) = prepare_rhs(b, &ns);
    let mut rhs = bp;
    rhs.extend(std::iter::repeat_n(0.0, k));
    let mut x = dense_solve(&big, &rhs)?;
    x.truncate(n);
    Ok(x)
}

/// Solve a symmetric (possibly indefinite) system with the configured backend.
pub fn solve_symmetric(a: &SparseMatrix, b: &[f64], cfg: &SolverConfig) -> Result<Solution> {
    match cfg.backend {
        Backend::Krylov => minres_solve(a, b, cfg),
        Backend::Dense => dense_backend(a, b, cfg),
    }
}

/// Solve a symmetric positive semidefinite system with the configured backend.
pub fn solve_spd(a: &SparseMatrix, b: &[f64], cfg: &SolverConfig) -> Result<Solution> {
    match cfg.backend {
        Backend::Krylov => cg_solve(a, b, cfg),
        Backend::Dense => dense_backend(a, b, cfg),
    }
}

fn dense_backend(a: &SparseMatrix, b: &[f64], cfg: &SolverConfig) -> Result<Solution> {
    check_rhs(a, b)?;
    let ns = Nullspace::new(&cfg.nullspace, a.dim())?;
    let (bp, rhs_projected) = prepare_rhs(b, &ns);
    let x = dense_solve_with_nullspace(&a.to_dense(), &bp, &cfg.nullspace)?;
    let bnorm = norm(&bp);
    let residual = if bnorm == 0.0 { 0.0 } else { true_residual(a, &x, &bp, bnorm) };
    Ok(Solution { x, stats: SolveStats { iterations: 0, residual, rhs_projected } })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};

    fn periodic_laplacian_1d(n: usize) -> SparseMatrix {
        let mut t = Vec::new();
        for i in 0..n {
            t.push((i, i, 2.0));
            t.push((i, (i + 1) % n, -1.0));
            t.push((i, (i + n - 1) % n, -1.0));
        }
        SparseMatrix::from_triplets(n, &t).unwrap()
    }

    /// Pseudo-inverse solve through a symmetric eigendecomposition.
    fn pinv_solve(a: &DMatrix<f64>, b: &[f64]) -> Vec<f64> {
        let eig = a.clone().symmetric_eigen();
        let scale = eig.eigenvalues.iter().fold(0.0f64, |m, l| m.max(l.abs()));
        let bv = DVector::from_column_slice(b);
        let mut x = DVector::zeros(b.len());
        for (k, lambda) in eig.eigenvalues.iter().enumerate() {
            if lambda.abs() > 1e-10 * scale {
                let q = eig.eigenvectors.column(k);
                x += q * (q.dot(&bv) / lambda);
            }
        }
        x.as_slice().to_vec()
    }

    fn max_diff(a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).fold(0.0, |m, (x, y)| m.max((x - y).abs()))
    }

    #[test]
    fn triplets_are_summed_and_zeros_dropped() {
        let m = SparseMatrix::from_triplets(2, &[(0, 0, 1.0), (0, 0, 2.0), (0, 1, 1.0), (0, 1, -1.0), (1, 1, 4.0)])
            .unwrap();
        assert_eq!(m.nnz(), 2);
        assert_eq!(m.get(0, 0), 3.0);
        assert_eq!(m.get(0, 1), 0.0);
        assert!(SparseMatrix::from_triplets(2, &[(2, 0, 1.0)]).is_err());
    }

    #[test]
    fn asymmetry_detects_unsymmetric_entries() {
        let m = SparseMatrix::from_triplets(2, &[(0, 0, 2.0), (0, 1, 1.0), (1, 0, 0.5), (1, 1, 2.0)]).unwrap();
        assert!((m.asymmetry() - 0.25).abs() < 1e-15);
        assert_eq!(periodic_laplacian_1d(6).asymmetry(), 0.0);
    }

    #[test]
    fn identity_solves_in_one_iteration() {
        let a = SparseMatrix::identity(5);
        let b = [1.0, -2.0, 3.0, 0.5, 7.0];
        let s = cg_solve(&a, &b, &SolverConfig::default()).unwrap();
        assert_eq!(s.x, b);
        assert_eq!(s.stats.iterations, 1);
    }

    #[test]
    fn cg_matches_pseudo_inverse_on_periodic_laplacian() {
        let n = 40;
        let a = periodic_laplacian_1d(n);
        let mut rng = rand::rngs::StdRng::seed_from_u64(1);
        let mut b: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let mean = b.iter().sum::<f64>() / n as f64;
        b.iter_mut().for_each(|x| *x -= mean);
        let cfg = SolverConfig { nullspace: vec![vec![1.0; n]], ..SolverConfig::with_tol(1e-12) };
        let s = cg_solve(&a, &b, &cfg).unwrap();
        let oracle = pinv_solve(&a.to_dense(), &b);
        assert!(max_diff(&s.x, &oracle) < 1e-9);
        assert!(!s.stats.rhs_projected);
    }

    #[test]
    fn fully_projected_rhs_gives_zero() {
        let n = 10;
        let a = periodic_laplacian_1d(n);
        let cfg = SolverConfig { nullspace: vec![vec![1.0; n]], ..SolverConfig::default() };
        let s = cg_solve(&a, &vec![3.0; n], &cfg).unwrap();
        assert!(s.x.iter().all(|x| *x == 0.0));
        assert!(s.stats.rhs_projected);
        let s = minres_solve(&a, &vec![3.0; n], &cfg).unwrap();
        assert!(s.x.iter().all(|x| *x == 0.0));
    }

    #[test]
    fn inconsistent_rhs_is_flagged_and_projected() {
        let n = 12;
        let a = periodic_laplacian_1d(n);
        let mut b = vec![0.0; n];
        b[0] = 1.0;
        let cfg = SolverConfig { nullspace: vec![vec![1.0; n]], ..SolverConfig::default() };
        let s = cg_solve(&a, &b, &cfg).unwrap();
        assert!(s.stats.rhs_projected);
        assert!(s.x.iter().sum::<f64>().abs() < 1e-10);
    }

    #[test]
    fn minres_on_indefinite_diagonal() {
        let a = SparseMatrix::from_triplets(2, &[(0, 0, 1.0), (1, 1, -1.0)]).unwrap();
        let s = minres_solve(&a, &[1.0, 1.0], &SolverConfig::default()).unwrap();
        assert!(max_diff(&s.x, &[1.0, -1.0]) < 1e-14);
    }

    fn random_symmetric(n: usize, seed: u64, shift: f64) -> SparseMatrix {
        let mut rng = rand::rngs::StdRng::seed_from_u64(seed);
        let mut t = Vec::new();
        for i in 0..n {
            t.push((i, i, rng.gen_range(-2.0..2.0) + shift));
            for j in 0..i {
                if rng.gen_bool(0.2) {
                    let v = rng.gen_range(-1.0..1.0);
                    t.push((i, j, v));
                    t.push((j, i, v));
                }
            }
        }
        SparseMatrix::from_triplets(n, &t).unwrap()
    }

    #[test]
    fn minres_matches_dense_lu_on_random_indefinite() {
        let n = 50;
        let a = random_symmetric(n, 42, 0.0);
        let mut rng = rand::rngs::StdRng::seed_from_u64(43);
        let b: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let s = minres_solve(&a, &b, &SolverConfig::with_tol(1e-13)).unwrap();
        let oracle = dense_solve(&a.to_dense(), &b).unwrap();
        let scale = oracle.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        assert!(max_diff(&s.x, &oracle) < 1e-8 * scale.max(1.0));
    }

    #[test]
    fn minres_on_singular_consistent_system() {
        // saddle point with a one-dimensional pressure nullspace
        let n = 6;
        let mut t = Vec::new();
        for i in 0..n {
            t.push((i, i, 2.0));
            t.push((i, (i + 1) % n, -0.5));
            t.push(((i + 1) % n, i, -0.5));
        }
        // two pressures with gradient rows G = [1, -1] on two velocity dofs
        for (r, c, v) in [(0, 6, 1.0), (0, 7, -1.0), (3, 6, -1.0), (3, 7, 1.0)] {
            t.push((r, c, v));
            t.push((c, r, v));
        }
        let a = SparseMatrix::from_triplets(8, &t).unwrap();
        let mut null = vec![0.0; 8];
        null[6] = 1.0;
        null[7] = 1.0;
        let mut b = vec![1.0, 0.0, -0.5, 0.25, 0.0, 0.0, 0.0, 0.0];
        b[6] = 0.0;
        let cfg = SolverConfig { nullspace: vec![null.clone()], ..SolverConfig::with_tol(1e-12) };
        let s = minres_solve(&a, &b, &cfg).unwrap();
        assert!(s.stats.residual <= 1e-12);
        let oracle = pinv_solve(&a.to_dense(), &b);
        assert!(max_diff(&s.x, &oracle) < 1e-9);
        let dense = dense_solve_with_nullspace(&a.to_dense(), &b, &[null]).unwrap();
        assert!(max_diff(&dense, &oracle) < 1e-12);
    }

    #[test]
    fn jacobi_preconditioning_reaches_the_same_solution() {
        let n = 30;
        let a = random_symmetric(n, 9, 8.0);
        let b: Vec<f64> = (0..n).map(|i| (i as f64).sin()).collect();
        let plain = cg_solve(&a, &b, &SolverConfig::with_tol(1e-12)).unwrap();
        let pre = cg_solve(&a, &b, &SolverConfig { jacobi: true, ..SolverConfig::with_tol(1e-12) }).unwrap();
        assert!(max_diff(&plain.x, &pre.x) < 1e-9);
        let m = minres_solve(&a, &b, &SolverConfig { jacobi: true, ..SolverConfig::with_tol(1e-12) }).unwrap();
        assert!(max_diff(&plain.x, &m.x) < 1e-9);
    }

    #[test]
    fn non_convergence_is_reported() {
        let a = periodic_laplacian_1d(200);
        let mut b = vec![0.0; 200];
        b[0] = 1.0;
        b[100] = -1.0;
        let cfg = SolverConfig { max_iter: Some(3), nullspace: vec![vec![1.0; 200]], ..SolverConfig::default() };
        assert!(matches!(cg_solve(&a, &b, &cfg), Err(Error::NoConvergence { iterations: 3, .. })));
        assert!(matches!(minres_solve(&a, &b, &cfg), Err(Error::NoConvergence { .. })));
    }

    #[test]
    fn config_validation() {
        let a = SparseMatrix::identity(2);
        assert!(cg_solve(&a, &[1.0, 1.0], &SolverConfig::with_tol(0.0)).is_err());
        assert!(cg_solve(&a, &[1.0, 1.0], &SolverConfig::with_tol(1.5)).is_err());
        assert!(cg_solve(&a, &[1.0], &SolverConfig::default()).is_err());
        assert_eq!(SolverConfig::default().iteration_cap(100), 10_000);
        assert_eq!(SolverConfig::default().iteration_cap(1_000_000), 50_000);
    }

    #[test]
    fn dense_solve_examples() {
        let a = DMatrix::from_row_slice(2, 2, &[4.0, 1.0, 1.0, 3.0]);
        let x = dense_solve(&a, &[1.0, 2.0]).unwrap();
        assert!(max_diff(&x, &[1.0 / 11.0, 7.0 / 11.0]) < 1e-15);
        let singular = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        assert!(matches!(dense_solve(&singular, &[1.0, 1.0]), Err(Error::Singular(_))));
        let x = dense_solve_with_nullspace(&singular, &[1.0, 1.0], &[vec![1.0, -1.0]]).unwrap();
        assert!(max_diff(&x, &[0.5, 0.5]) < 1e-15);
    }

    #[test]
    fn iteration_is_deterministic() {
        let a = random_symmetric(60, 5, 0.5);
        let b: Vec<f64> = (0..60).map(|i| (i as f64 * 0.37).cos()).collect();
        let cfg = SolverConfig::with_tol(1e-11);
        let s1 = minres_solve(&a, &b, &cfg).unwrap();
        let s2 = minres_solve(&a, &b, &cfg).unwrap();
        assert_eq!(s1.x, s2.x);
        assert_eq!(s1.stats, s2.stats);
    }

    proptest! {
        #[test]
        fn projection_is_idempotent(v in proptest::collection::vec(-10.0f64..10.0, 8), w in proptest::collection::vec(-1.0f64..1.0, 8)) {
            let ns = Nullspace::new(&[vec![1.0; 8], w], 8).unwrap();
            let mut once = v.clone();
            ns.project(&mut once);
            let mut twice = once.clone();
            ns.project(&mut twice);
            prop_assert!(max_diff(&once, &twice) <= 1e-14 * (1.0 + norm(&v)));
        }

        #[test]
        fn cg_agrees_with_dense_on_spd(seed in 0u64..1000) {
            let n = 25;
            let mut rng = rand::rngs::StdRng::seed_from_u64(seed);
            // diagonally dominant, hence SPD
            let a = random_symmetric(n, seed, 0.0);
            let mut t = Vec::new();
            for r in 0..n {
                let off: f64 = a.row(r).filter(|(c, _)| *c != r).map(|(_, v)| v.abs()).sum();
                for (c, v) in a.row(r) {
                    t.push((r, c, if c == r { off + 1.0 + v.abs() } else { v }));
                }
            }
            let spd = SparseMatrix::from_triplets(n, &t).unwrap();
            let b: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let s = cg_solve(&spd, &b, &SolverConfig::with_tol(1e-13)).unwrap();
            let oracle = dense_solve(&spd.to_dense(), &b).unwrap();
            let scale = norm(&oracle);
            prop_assert!(max_diff(&s.x, &oracle) <= 1e-8 * scale);
        }
    }
}
