//! Multigrid-preconditioned Krylov solver for the 2D Helmholtz equation.
//!
//! The physical problem lives on the unit square with an absorbing layer
//! realised by complex coordinate stretching. The preconditioner is the same
//! Helmholtz operator rediscretised on a globally rotated complex grid (or,
//! equivalently up to a scalar, a complex shifted Laplacian), inverted
//! approximately by one multigrid V-cycle. Each level is smoothed either by a
//! cubic polynomial (three damped Jacobi sweeps with complex weights chosen
//! from a triangle bounding the level's symbol) or by GMRES(m).
//!
//! Module map:
//!
//! - [`grid`]: stretched and rotated complex grids, wave number fields
//! - [`operator`]: matrix-free 5-point operator, diagonal, dense assembly
//! - [`spectrum`]: symbol sampling, hulls, bounding triangles, weight design
//! - [`smoother`]: damped Jacobi, cubic polynomial and GMRES(m) smoothers
//! - [`multigrid`]: hierarchy, transfers, V-cycle, coarse direct solve
//! - [`krylov`]: FGMRES and restarted GMRES
//! - [`blocked_kernel`]: tiled fused cubic smoother and its benchmark

pub mod blocked_kernel;
pub mod dense;
pub mod grid;
pub mod krylov;
pub mod multigrid;
pub mod operator;
pub mod smoother;
pub mod spectrum;
pub mod vector;

pub use num_complex::Complex64 as C64;
