//! Periodic staggered grids on the unit cell `Z' = (-1/2, 1/2)²`.
//!
//! Layout for an `n × n` grid with spacing `h = 1/n`, flat index `i + n*j`:
//!
//! * pressure cell `(i, j)` is centered at `x_i = -1/2 + (i + 1/2) h`;
//! * `u` face `(i, j)` is the left face of cell `(i, j)`, at `x = -1/2 + i h`;
//! * `v` face `(i, j)` is the bottom face of cell `(i, j)`.
//!
//! The layered (3D) layout on `Z = Z' × (0, 1)` uses `nz` intervals across the
//! film. Horizontal velocities and pressures live on the `nz - 1` interior
//! levels `z_l = (l + 1)/nz`, so the no-slip walls `z = 0, 1` coincide with
//! the first missing level on each side. Vertical velocities live on the
//! `nz - 2` half levels between consecutive pressure levels and vanish on the
//! outermost half levels.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Coordinate of the `k`-th point of a staggered sequence, `k2 = 2k` for
/// faces and `2k + 1` for centers. Computed as an exact ratio so mirror
/// indices give exactly negated coordinates.
fn coord(k2: usize, n: usize) -> f64 {
    (k2 as f64 - n as f64) / (2 * n) as f64
}

pub fn cell_center(i: usize, n: usize) -> f64 {
    coord(2 * i + 1, n)
}

pub fn face_position(i: usize, n: usize) -> f64 {
    coord(2 * i, n)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ObstacleShape {
    None,
    Disk {
        center: [f64; 2],
        radius: f64,
    },
    /// `rotation` is the angle (radians) of the first semi-axis from the `x` axis.
    Ellipse {
        center: [f64; 2],
        semi_axes: [f64; 2],
        rotation: f64,
    },
    Rectangle {
        center: [f64; 2],
        half_widths: [f64; 2],
    },
}

impl ObstacleShape {
    pub fn disk(radius: f64) -> Self {
        ObstacleShape::Disk { center: [0.0, 0.0], radius }
    }

    pub fn is_empty(&self) -> bool {
        matches!(self, ObstacleShape::None)
    }

    /// Closed membership test (boundary points count as solid).
    pub fn contains(&self, x: f64, y: f64) -> bool {
        match *self {
            ObstacleShape::None => false,
            ObstacleShape::Disk { center, radius } => {
                let dx = x - center[0];
                let dy = y - center[1];
                dx * dx + dy * dy <= radius * radius
            }
            ObstacleShape::Ellipse { center, semi_axes, rotation } => {
                let (s, c) = rotation.sin_cos();
                let dx = x - center[0];
                let dy = y - center[1];
                let a = (c * dx + s * dy) / semi_axes[0];
                let b = (-s * dx + c * dy) / semi_axes[1];
                a * a + b * b <= 1.0
            }
            ObstacleShape::Rectangle { center, half_widths } => {
                (x - center[0]).abs() <= half_widths[0] && (y - center[1]).abs() <= half_widths[1]
            }
        }
    }

    pub fn area(&self) -> f64 {
        match *self {
            ObstacleShape::None => 0.0,
            ObstacleShape::Disk { radius, .. } => std::f64::consts::PI * radius * radius,
            ObstacleShape::Ellipse { semi_axes, .. } => std::f64::consts::PI * semi_axes[0] * semi_axes[1],
            ObstacleShape::Rectangle { half_widths, .. } => 4.0 * half_widths[0] * half_widths[1],
        }
    }

    /// Center and half-extents of the axis-aligned bounding box.
    fn bounding_box(&self) -> Option<([f64; 2], [f64; 2])> {
        match *self {
            ObstacleShape::None => None,
            ObstacleShape::Disk { center, radius } => Some((center, [radius, radius])),
            ObstacleShape::Ellipse { center, semi_axes, rotation } => {
                let (s, c) = rotation.sin_cos();
                let [a, b] = semi_axes;
                let ex = (a * a * c * c + b * b * s * s).sqrt();
                let ey = (a * a * s * s + b * b * c * c).sqrt();
                Some((center, [ex, ey]))
            }
            ObstacleShape::Rectangle { center, half_widths } => Some((center, half_widths)),
        }
    }

    /// Mirror image under `(x, y) -> (y, x)`.
    pub fn transposed(&self) -> Self {
        match *self {
            ObstacleShape::None => ObstacleShape::None,
            ObstacleShape::Disk { center, radius } => ObstacleShape::Disk { center: [center[1], center[0]], radius },
            ObstacleShape::Ellipse { center, semi_axes, rotation } => ObstacleShape::Ellipse {
                center: [center[1], center[0]],
                semi_axes,
                rotation: std::f64::consts::FRAC_PI_2 - rotation,
            },
            ObstacleShape::Rectangle { center, half_widths } => ObstacleShape::Rectangle {
                center: [center[1], center[0]],
                half_widths: [half_widths[1], half_widths[0]],
            },
        }
    }

    fn validate_parameters(&self) -> Result<()> {
        let positive = |v: f64, what: &str| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::Geometry(format!("{what} must be positive, got {v}")))
            }
        };
        match *self {
            ObstacleShape::None => Ok(()),
            ObstacleShape::Disk { radius, .. } => positive(radius, "radius"),
            ObstacleShape::Ellipse { semi_axes, rotation, .. } => {
                positive(semi_axes[0], "semi-axis")?;
                positive(semi_axes[1], "semi-axis")?;
                if rotation.is_finite() {
                    Ok(())
                } else {
                    Err(Error::Geometry("rotation must be finite".into()))
                }
            }
            ObstacleShape::Rectangle { half_widths, .. } => {
                positive(half_widths[0], "half-width")?;
                positive(half_widths[1], "half-width")
            }
        }
    }
}

/// Binary discretization of the obstacle. `true` means solid.
#[derive(Debug, Clone, PartialEq)]
pub struct SolidMask {
    pub n: usize,
    pub cell: Vec<bool>,
    pub u_face: Vec<bool>,
    pub v_face: Vec<bool>,
}

impl SolidMask {
    pub fn fluid_cells(&self) -> usize {
        self.cell.iter().filter(|s| !**s).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.cell.iter().chain(&self.u_face).chain(&self.v_face).any(|s| *s)
    }
}

#[derive(Debug, Clone)]
pub struct CellGeometry {
    pub shape: ObstacleShape,
    /// Cells per side of `Z'`.
    pub n: usize,
    /// Intervals across the film for layered problems.
    pub nz: usize,
    pub mask: SolidMask,
}

impl CellGeometry {
    pub fn h(&self) -> f64 {
        1.0 / self.n as f64
    }

    pub fn h3(&self) -> f64 {
        1.0 / self.nz as f64
    }

    /// Number of interior horizontal-velocity/pressure levels in the layered grid.
    pub fn levels(&self) -> usize {
        self.nz - 1
    }

    pub fn fluid_fraction(&self) -> f64 {
        self.mask.fluid_cells() as f64 / (self.n * self.n) as f64
    }

    pub fn is_fluid(&self, i: usize, j: usize) -> bool {
        !self.mask.cell[i + self.n * j]
    }

    pub fn has_obstacle(&self) -> bool {
        !self.mask.is_empty()
    }

    /// Rebuild with the obstacle mirrored about the diagonal.
    pub fn transposed(&self) -> Result<Self> {
        build_geometry(self.shape.transposed(), self.n, self.nz)
    }
}

pub const MIN_RESOLUTION: usize = 8;

/// Discretize `shape` on an `n × n` grid (and `nz` intervals across the film).
///
/// The obstacle must stay at least one grid spacing away from `∂Z'`, and the
/// remaining fluid must form a single periodic component.
pub fn build_geometry(shape: ObstacleShape, n: usize, nz: usize) -> Result<CellGeometry> {
    if n < MIN_RESOLUTION {
        return Err(Error::Geometry(format!("n must be at least {MIN_RESOLUTION}, got {n}")));
    }
    if nz < MIN_RESOLUTION {
        return Err(Error::Geometry(format!("nz must be at least {MIN_RESOLUTION}, got {nz}")));
    }
    shape.validate_parameters()?;
    let h = 1.0 / n as f64;
    if let Some((c, e)) = shape.bounding_box() {
        for d in 0..2 {
            if c[d].abs() + e[d] > 0.5 - h {
                return Err(Error::Geometry(format!(
                    "obstacle must be strictly inside the cell: extent {:.6} along axis {} exceeds {:.6}",
                    c[d].abs() + e[d],
                    d,
                    0.5 - h
                )));
            }
        }
    }

    let idx = |i: usize, j: usize| i + n * j;
    let mut cell = vec![false; n * n];
    for j in 0..n {
        for i in 0..n {
            cell[idx(i, j)] = shape.contains(cell_center(i, n), cell_center(j, n));
        }
    }

    // Faces are solid if their midpoint is in the obstacle or they touch a
    // solid cell. Fluid cells left with no open face are dead and join the solid.
    let (mut u_face, mut v_face) = (vec![false; n * n], vec![false; n * n]);
    loop {
        for j in 0..n {
            for i in 0..n {
                let im = (i + n - 1) % n;
                let jm = (j + n - 1) % n;
                u_face[idx(i, j)] = cell[idx(i, j)]
                    || cell[idx(im, j)]
                    || shape.contains(face_position(i, n), cell_center(j, n));
                v_face[idx(i, j)] = cell[idx(i, j)]
                    || cell[idx(i, jm)]
                    || shape.contains(cell_center(i, n), face_position(j, n));
            }
        }
        let mut changed = false;
        for j in 0..n {
            for i in 0..n {
                if cell[idx(i, j)] {
                    continue;
                }
                let ip = (i + 1) % n;
                let jp = (j + 1) % n;
                if u_face[idx(i, j)] && u_face[idx(ip, j)] && v_face[idx(i, j)] && v_face[idx(i, jp)] {
                    cell[idx(i, j)] = true;
                    changed = true;
                }
            }
        }
        if !changed {
            break;
        }
    }

    let mask = SolidMask { n, cell, u_face, v_face };
    let fluid = mask.fluid_cells();
    if fluid == 0 {
        return Err(Error::Geometry("no fluid cells".into()));
    }
    if connected_fluid_cells(&mask) != fluid {
        return Err(Error::Geometry("fluid region is not connected".into()));
    }
    Ok(CellGeometry { shape, n, nz, mask })
}

/// Size of the periodic fluid component containing the first fluid cell,
/// moving only through open faces.
fn connected_fluid_cells(mask: &SolidMask) -> usize {
    let n = mask.n;
    let Some(start) = mask.cell.iter().position(|s| !s) else {
        return 0;
    };
    let mut seen = vec![false; n * n];
    let mut stack = vec![start];
    seen[start] = true;
    let mut count = 0;
    while let Some(c) = stack.pop() {
        count += 1;
        let (i, j) = (c % n, c / n);
        let ip = (i + 1) % n;
        let im = (i + n - 1) % n;
        let jp = (j + 1) % n;
        let jm = (j + n - 1) % n;
        let neighbors = [
            (ip + n * j, mask.u_face[ip + n * j]),
            (im + n * j, mask.u_face[c]),
            (i + n * jp, mask.v_face[i + n * jp]),
            (i + n * jm, mask.v_face[c]),
        ];
        for (nb, closed) in neighbors {
            if !closed && !seen[nb] && !mask.cell[nb] {
                seen[nb] = true;
                stack.push(nb);
            }
        }
    }
    count
}

/// Velocity components on faces and pressure on centers of a fully periodic
/// `n × n` grid.
#[derive(Debug, Clone, PartialEq)]
pub struct StaggeredField2D {
    pub n: usize,
    pub h: f64,
    pub u: Vec<f64>,
    pub v: Vec<f64>,
    pub p: Vec<f64>,
}

impl StaggeredField2D {
    pub fn zeros(n: usize) -> Self {
        Self { n, h: 1.0 / n as f64, u: vec![0.0; n * n], v: vec![0.0; n * n], p: vec![0.0; n * n] }
    }

    pub fn check(&self) -> Result<()> {
        let len = self.n * self.n;
        if self.u.len() != len || self.v.len() != len || self.p.len() != len {
            return Err(Error::Shape(format!(
                "2D field with n = {} needs {} entries per component, got u {}, v {}, p {}",
                self.n,
                len,
                self.u.len(),
                self.v.len(),
                self.p.len()
            )));
        }
        Ok(())
    }
}

/// Layered field on `Z' × (0, 1)`: laterally periodic, no-slip walls in `z`.
/// See the module docs for the level convention.
#[derive(Debug, Clone, PartialEq)]
pub struct StaggeredField3D {
    pub n: usize,
    pub nz: usize,
    pub h: f64,
    pub h3: f64,
    /// `n * n * (nz - 1)` entries, index `i + n*(j + n*l)`.
    pub u: Vec<f64>,
    pub v: Vec<f64>,
    /// `n * n * (nz - 2)` entries between levels `l` and `l + 1`.
    pub w: Vec<f64>,
    pub p: Vec<f64>,
}

impl StaggeredField3D {
    pub fn zeros(n: usize, nz: usize) -> Self {
        let lv = n * n * (nz - 1);
        let lw = n * n * (nz - 2);
        Self {
            n,
            nz,
            h: 1.0 / n as f64,
            h3: 1.0 / nz as f64,
            u: vec![0.0; lv],
            v: vec![0.0; lv],
            w: vec![0.0; lw],
            p: vec![0.0; lv],
        }
    }

    pub fn levels(&self) -> usize {
        self.nz - 1
    }

    pub fn level_height(&self, l: usize) -> f64 {
        (l + 1) as f64 * self.h3
    }

    pub fn check(&self) -> Result<()> {
        if self.nz < 3 {
            return Err(Error::Shape(format!("layered field needs nz >= 3, got {}", self.nz)));
        }
        let lv = self.n * self.n * (self.nz - 1);
        let lw = self.n * self.n * (self.nz - 2);
        if self.u.len() != lv || self.v.len() != lv || self.p.len() != lv || self.w.len() != lw {
            return Err(Error::Shape(format!(
                "3D field (n = {}, nz = {}) has wrong component lengths",
                self.n, self.nz
            )));
        }
        Ok(())
    }
}

/// Conservative face-difference divergence at cell centers.
pub fn discrete_div(field: &StaggeredField2D) -> Result<Vec<f64>> {
    field.check()?;
    let n = field.n;
    let inv_h = 1.0 / field.h;
    let mut out = vec![0.0; n * n];
    for j in 0..n {
        let jp = (j + 1) % n;
        for i in 0..n {
            let ip = (i + 1) % n;
            let c = i + n * j;
            out[c] = (field.u[ip + n * j] - field.u[c] + field.v[i + n * jp] - field.v[c]) * inv_h;
        }
    }
    Ok(out)
}

/// Two-point gradient of a cell-centered scalar onto the `u` and `v` faces.
pub fn discrete_grad(p: &[f64], n: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    if p.len() != n * n {
        return Err(Error::Shape(format!("expected {} cell values, got {}", n * n, p.len())));
    }
    let inv_h = n as f64;
    let mut gx = vec![0.0; n * n];
    let mut gy = vec![0.0; n * n];
    for j in 0..n {
        let jm = (j + n - 1) % n;
        for i in 0..n {
            let im = (i + n - 1) % n;
            let c = i + n * j;
            gx[c] = (p[c] - p[im + n * j]) * inv_h;
            gy[c] = (p[c] - p[i + n * jm]) * inv_h;
        }
    }
    Ok((gx, gy))
}

/// Five-point periodic Laplacian of a cell-centered (or single-component
/// face-centered) array. Every component of the staggered layout lives on a
/// shifted copy of the same periodic lattice, so one stencil serves all.
pub fn discrete_laplacian(a: &[f64], n: usize) -> Result<Vec<f64>> {
    if a.len() != n * n {
        return Err(Error::Shape(format!("expected {} values, got {}", n * n, a.len())));
    }
    let inv_h2 = (n * n) as f64;
    let mut out = vec![0.0; n * n];
    for j in 0..n {
        let jp = (j + 1) % n;
        let jm = (j + n - 1) % n;
        for i in 0..n {
            let ip = (i + 1) % n;
            let im = (i + n - 1) % n;
            let c = i + n * j;
            out[c] = (a[ip + n * j] + a[im + n * j] + a[i + n * jp] + a[i + n * jm] - 4.0 * a[c]) * inv_h2;
        }
    }
    Ok(out)
}

/// Vector Laplacian of the face components of a periodic field.
pub fn discrete_vector_laplacian(field: &StaggeredField2D) -> Result<(Vec<f64>, Vec<f64>)> {
    field.check()?;
    Ok((discrete_laplacian(&field.u, field.n)?, discrete_laplacian(&field.v, field.n)?))
}

/// Divergence of a layered field; the outermost `w` values are zero.
pub fn discrete_div_3d(field: &StaggeredField3D) -> Result<Vec<f64>> {
    field.check()?;
    let n = field.n;
    let nl = field.levels();
    let (inv_h, inv_h3) = (1.0 / field.h, 1.0 / field.h3);
    let plane = n * n;
    let mut out = vec![0.0; plane * nl];
    for l in 0..nl {
        for j in 0..n {
            let jp = (j + 1) % n;
            for i in 0..n {
                let ip = (i + 1) % n;
                let c = i + n * j + plane * l;
                let w_top = if l + 1 < nl { field.w[i + n * j + plane * l] } else { 0.0 };
                let w_bot = if l > 0 { field.w[i + n * j + plane * (l - 1)] } else { 0.0 };
                out[c] = (field.u[ip + n * j + plane * l] - field.u[c]) * inv_h
                    + (field.v[i + n * jp + plane * l] - field.v[c]) * inv_h
                    + (w_top - w_bot) * inv_h3;
            }
        }
    }
    Ok(out)
}

/// Gradient of a layered cell-centered scalar: `(gx, gy, gz)` on the
/// `u`, `v` and interior `w` positions.
pub fn discrete_grad_3d(p: &[f64], n: usize, nz: usize) -> Result<(Vec<f64>, Vec<f64>, Vec<f64>)> {
    let plane = n * n;
    let nl = nz - 1;
    if p.len() != plane * nl {
        return Err(Error::Shape(format!("expected {} cell values, got {}", plane * nl, p.len())));
    }
    let inv_h = n as f64;
    let inv_h3 = nz as f64;
    let mut gx = vec![0.0; plane * nl];
    let mut gy = vec![0.0; plane * nl];
    let mut gz = vec![0.0; plane * (nl - 1)];
    for l in 0..nl {
        for j in 0..n {
            let jm = (j + n - 1) % n;
            for i in 0..n {
                let im = (i + n - 1) % n;
                let c = i + n * j + plane * l;
                gx[c] = (p[c] - p[im + n * j + plane * l]) * inv_h;
                gy[c] = (p[c] - p[i + n * jm + plane * l]) * inv_h;
                if l + 1 < nl {
                    gz[c] = (p[c + plane] - p[c]) * inv_h3;
                }
            }
        }
    }
    Ok((gx, gy, gz))
}

/// Laplacian of a horizontal velocity component on the layered grid, with
/// homogeneous Dirichlet values on the walls `z = 0, 1`.
pub fn discrete_laplacian_3d_horizontal(a: &[f64], n: usize, nz: usize) -> Result<Vec<f64>> {
    let plane = n * n;
    let nl = nz - 1;
    if a.len() != plane * nl {
        return Err(Error::Shape(format!("expected {} values, got {}", plane * nl, a.len())));
    }
    let inv_h2 = (n * n) as f64;
    let inv_h32 = (nz * nz) as f64;
    let mut out = vec![0.0; plane * nl];
    for l in 0..nl {
        for j in 0..n {
            let jp = (j + 1) % n;
            let jm = (j + n - 1) % n;
            for i in 0..n {
                let ip = (i + 1) % n;
                let im = (i + n - 1) % n;
                let c = i + n * j + plane * l;
                let lateral = a[ip + n * j + plane * l] + a[im + n * j + plane * l] + a[i + n * jp + plane * l]
                    + a[i + n * jm + plane * l]
                    - 4.0 * a[c];
                let up = if l + 1 < nl { a[c + plane] } else { 0.0 };
                let down = if l > 0 { a[c - plane] } else { 0.0 };
                out[c] = lateral * inv_h2 + (up + down - 2.0 * a[c]) * inv_h32;
            }
        }
    }
    Ok(out)
}

pub fn inner(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use std::f64::consts::PI;

    fn random_vec(rng: &mut impl Rng, len: usize) -> Vec<f64> {
        (0..len).map(|_| rng.gen_range(-1.0..1.0)).collect()
    }

    #[test]
    fn empty_geometry_is_all_fluid() {
        let g = build_geometry(ObstacleShape::None, 16, 8).unwrap();
        assert_eq!(g.fluid_fraction(), 1.0);
        assert!(g.mask.is_empty());
        assert!(!g.has_obstacle());
    }

    #[test]
    fn disk_fluid_fraction_matches_area() {
        let n = 64;
        let g = build_geometry(ObstacleShape::disk(0.25), n, 16).unwrap();
        // independent pixel count
        let mut inside = 0;
        for j in 0..n {
            for i in 0..n {
                let x = -0.5 + (i as f64 + 0.5) / n as f64;
                let y = -0.5 + (j as f64 + 0.5) / n as f64;
                if x * x + y * y <= 0.0625 {
                    inside += 1;
                }
            }
        }
        let pixel_fraction = 1.0 - inside as f64 / (n * n) as f64;
        assert!((g.fluid_fraction() - pixel_fraction).abs() < 1e-12);
        assert!((g.fluid_fraction() - (1.0 - PI / 16.0)).abs() < 2.0 / n as f64);
    }

    #[test]
    fn obstacle_touching_the_boundary_is_rejected() {
        assert!(matches!(build_geometry(ObstacleShape::disk(0.51), 64, 16), Err(Error::Geometry(_))));
        // closer than one grid spacing
        assert!(build_geometry(ObstacleShape::disk(0.49), 64, 16).is_err());
        assert!(build_geometry(ObstacleShape::disk(0.48), 64, 16).is_ok());
        let off = ObstacleShape::Disk { center: [0.3, 0.0], radius: 0.25 };
        assert!(build_geometry(off, 64, 16).is_err());
        let rotated = ObstacleShape::Ellipse { center: [0.0, 0.0], semi_axes: [0.45, 0.05], rotation: PI / 4.0 };
        assert!(build_geometry(rotated, 64, 16).is_ok());
        let wide = ObstacleShape::Rectangle { center: [0.0, 0.0], half_widths: [0.5, 0.1] };
        assert!(build_geometry(wide, 64, 16).is_err());
    }

    #[test]
    fn resolution_and_parameter_checks() {
        assert!(build_geometry(ObstacleShape::None, 4, 16).is_err());
        assert!(build_geometry(ObstacleShape::None, 16, 4).is_err());
        assert!(build_geometry(ObstacleShape::disk(-0.1), 16, 16).is_err());
        assert!(build_geometry(ObstacleShape::disk(0.0), 16, 16).is_err());
    }

    #[test]
    fn mask_is_consistent() {
        let shapes = [
            ObstacleShape::disk(0.3),
            ObstacleShape::Rectangle { center: [0.05, -0.02], half_widths: [0.3, 0.1] },
            ObstacleShape::Ellipse { center: [0.0, 0.0], semi_axes: [0.35, 0.15], rotation: 0.6 },
        ];
        for shape in shapes {
            let g = build_geometry(shape, 40, 8).unwrap();
            let n = g.n;
            for j in 0..n {
                for i in 0..n {
                    let im = (i + n - 1) % n;
                    let jm = (j + n - 1) % n;
                    if g.mask.cell[i + n * j] && g.mask.cell[im + n * j] {
                        assert!(g.mask.u_face[i + n * j]);
                    }
                    if g.mask.cell[i + n * j] && g.mask.cell[i + n * jm] {
                        assert!(g.mask.v_face[i + n * j]);
                    }
                }
            }
        }
    }

    #[test]
    fn symmetric_shapes_give_symmetric_masks() {
        let n = 48;
        let g = build_geometry(ObstacleShape::disk(0.27), n, 8).unwrap();
        let m = &g.mask;
        for j in 0..n {
            for i in 0..n {
                // reflections x -> -x, y -> -y and the diagonal swap
                assert_eq!(m.cell[i + n * j], m.cell[(n - 1 - i) + n * j]);
                assert_eq!(m.cell[i + n * j], m.cell[i + n * (n - 1 - j)]);
                assert_eq!(m.cell[i + n * j], m.cell[j + n * i]);
                assert_eq!(m.u_face[i + n * j], m.v_face[j + n * i]);
                // u face i sits at -1/2 + i h, its mirror is face n - i
                assert_eq!(m.u_face[i + n * j], m.u_face[(n - i) % n + n * j]);
            }
        }
    }

    #[test]
    fn transposed_geometry_swaps_masks() {
        let shape = ObstacleShape::Ellipse { center: [0.02, -0.03], semi_axes: [0.3, 0.12], rotation: 0.4 };
        let g = build_geometry(shape, 32, 8).unwrap();
        let t = g.transposed().unwrap();
        let n = g.n;
        let mut mismatches = 0;
        for j in 0..n {
            for i in 0..n {
                if g.mask.cell[i + n * j] != t.mask.cell[j + n * i] {
                    mismatches += 1;
                }
            }
        }
        // rounding in the rotated membership test may flip boundary cells
        assert!(mismatches <= 2, "{mismatches}");
    }

    #[test]
    fn divergence_of_constant_and_zero_fields() {
        let n = 16;
        let mut f = StaggeredField2D::zeros(n);
        assert!(discrete_div(&f).unwrap().iter().all(|d| *d == 0.0));
        f.u.iter_mut().for_each(|u| *u = 1.0);
        assert!(discrete_div(&f).unwrap().iter().all(|d| *d == 0.0));
    }

    #[test]
    fn divergence_matches_direct_stencil() {
        let n = 32;
        let mut f = StaggeredField2D::zeros(n);
        for j in 0..n {
            for i in 0..n {
                f.u[i + n * j] = (2.0 * PI * face_position(i, n)).sin();
            }
        }
        let div = discrete_div(&f).unwrap();
        for j in 0..n {
            for i in 0..n {
                let xr = face_position(i, n) + 1.0 / n as f64;
                let oracle = ((2.0 * PI * xr).sin() - (2.0 * PI * face_position(i, n)).sin()) * n as f64;
                assert!((div[i + n * j] - oracle).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn divergence_sums_to_zero() {
        let mut rng = rand::rngs::StdRng::seed_from_u64(7);
        let n = 20;
        let f = StaggeredField2D {
            n,
            h: 1.0 / n as f64,
            u: random_vec(&mut rng, n * n),
            v: random_vec(&mut rng, n * n),
            p: vec![0.0; n * n],
        };
        let total: f64 = discrete_div(&f).unwrap().iter().sum();
        assert!(total.abs() < 1e-11);
    }

    #[test]
    fn shape_mismatch_is_reported() {
        let mut f = StaggeredField2D::zeros(8);
        f.u.pop();
        assert!(matches!(discrete_div(&f), Err(Error::Shape(_))));
        assert!(discrete_grad(&[0.0; 10], 8).is_err());
        assert!(discrete_laplacian(&[0.0; 10], 8).is_err());
    }

    #[test]
    fn gradient_of_constant_is_zero() {
        let (gx, gy) = discrete_grad(&vec![3.5; 64], 8).unwrap();
        assert!(gx.iter().chain(&gy).all(|g| *g == 0.0));
    }

    #[test]
    fn laplacian_is_second_order() {
        let err = |n: usize| {
            let p: Vec<f64> = (0..n * n).map(|c| (2.0 * PI * cell_center(c % n, n)).cos()).collect();
            let lap = discrete_laplacian(&p, n).unwrap();
            lap.iter()
                .zip(&p)
                .map(|(l, p)| (l + 4.0 * PI * PI * p).abs())
                .fold(0.0, f64::max)
        };
        let (e1, e2) = (err(16), err(32));
        let rate = (e1 / e2).log2();
        assert!((rate - 2.0).abs() < 0.05, "rate {rate}");
    }

    #[test]
    fn div_and_grad_are_negative_adjoints() {
        let mut rng = rand::rngs::StdRng::seed_from_u64(11);
        let n = 24;
        let p = random_vec(&mut rng, n * n);
        let f = StaggeredField2D {
            n,
            h: 1.0 / n as f64,
            u: random_vec(&mut rng, n * n),
            v: random_vec(&mut rng, n * n),
            p: vec![0.0; n * n],
        };
        let div = discrete_div(&f).unwrap();
        let (gx, gy) = discrete_grad(&p, n).unwrap();
        let lhs = inner(&div, &p);
        let rhs = -(inner(&f.u, &gx) + inner(&f.v, &gy));
        assert!((lhs - rhs).abs() <= 1e-12 * lhs.abs().max(1.0));
    }

    #[test]
    fn div_grad_is_the_laplacian() {
        let mut rng = rand::rngs::StdRng::seed_from_u64(3);
        let n = 12;
        let p = random_vec(&mut rng, n * n);
        let (gx, gy) = discrete_grad(&p, n).unwrap();
        let f = StaggeredField2D { n, h: 1.0 / n as f64, u: gx, v: gy, p: vec![0.0; n * n] };
        let div = discrete_div(&f).unwrap();
        let lap = discrete_laplacian(&p, n).unwrap();
        for (a, b) in div.iter().zip(&lap) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn layered_adjointness_with_walls() {
        let mut rng = rand::rngs::StdRng::seed_from_u64(5);
        let (n, nz) = (10, 9);
        let mut f = StaggeredField3D::zeros(n, nz);
        f.u = random_vec(&mut rng, f.u.len());
        f.v = random_vec(&mut rng, f.v.len());
        f.w = random_vec(&mut rng, f.w.len());
        let p = random_vec(&mut rng, f.p.len());
        let div = discrete_div_3d(&f).unwrap();
        let (gx, gy, gz) = discrete_grad_3d(&p, n, nz).unwrap();
        let lhs = inner(&div, &p);
        let rhs = -(inner(&f.u, &gx) + inner(&f.v, &gy) + inner(&f.w, &gz));
        assert!((lhs - rhs).abs() <= 1e-12 * lhs.abs().max(1.0));
        assert!(div.iter().sum::<f64>().abs() < 1e-10);
    }

    #[test]
    fn layered_laplacian_is_exact_on_the_channel_profile() {
        // z(1 - z)/2 has second derivative -1 and vanishes on the walls
        let (n, nz) = (8, 16);
        let f = StaggeredField3D::zeros(n, nz);
        let u: Vec<f64> = (0..f.u.len())
            .map(|c| {
                let z = f.level_height(c / (n * n));
                0.5 * z * (1.0 - z)
            })
            .collect();
        let lap = discrete_laplacian_3d_horizontal(&u, n, nz).unwrap();
        assert!(lap.iter().all(|l| (l + 1.0).abs() < 1e-10));
    }
}
