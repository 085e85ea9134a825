//! Upscaling toolkit for thin porous media.
//!
//! A thin porous medium is a fluid film of thickness `ε` perforated by a
//! periodic array of vertical cylinders of size and period `ε^δ`. Depending on
//! `δ` the flow homogenizes to one of three lower-dimensional Darcy laws, each
//! with its own permeability cell problem:
//!
//! * [`regimes`]: regime classification and the scaling exponents.
//! * [`grid`]: periodic staggered grids on the unit cell, obstacle masks and
//!   discrete operators.
//! * [`linsolve`]: sparse symmetric solvers (CG, MINRES) and a dense oracle.
//! * [`cellproblems`]: the 2D Stokes, 3D Stokes and Hele-Shaw cell problems and
//!   the permeability tensors they define.
//! * [`darcy`]: the macroscale Darcy solve on a rectangle and the rescaling to
//!   physical velocities.
//! * [`cli`]: config parsing, JSON/CSV output and the `tpm` subcommands.

pub mod cellproblems;
pub mod cli;
pub mod darcy;
pub mod error;
pub mod grid;
pub mod io;
pub mod linsolve;
pub mod regimes;

pub use cellproblems::{permeability, CellSolution, PermeabilityTensor};
pub use darcy::{solve_darcy, DarcySolution, MacroDomain, ScaledApproximation};
pub use error::{Error, Result};
pub use grid::{build_geometry, CellGeometry, ObstacleShape};
pub use linsolve::{SolverConfig, SparseMatrix};
pub use regimes::{classify, exponent_report, ExponentReport, Regime, RegimeParams};
