//! Tiled application of the cubic smoother.
//!
//! Each tile loads its block of `u` grown by one ghost layer per sweep and
//! applies the three Jacobi sweeps in place of three passes over the grid:
//! sweep `s` is evaluated on the tile grown by `3 - s` layers, so the halo
//! values later sweeps need are recomputed inside the tile instead of being
//! exchanged. Tiles read only the frozen input and write disjoint blocks, so
//! they run in parallel and in any order. Point updates go through the same
//! stencil and Jacobi routines as [`crate::smoother::poly3_smooth`], which
//! makes the result bitwise identical to it for every plan.
//!
//! Cost model per updated point (complex values 16 bytes, reals 8 bytes):
//!
//! - one stencil: 5 complex multiplies and 4 complex adds, 38 flops
//! - one Jacobi update `u + w (b - Au) / |d|`: 12 flops
//! - fused cubic: `3 * (38 + 12) = 150` flops, plus redundant halo work
//! - traffic: `u`, `b` and `1/|d|` read on the tile grown by 3 layers and
//!   `u` written on the tile; a naive sweep moves 56 bytes per point

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::operator::StencilOperator;
use crate::smoother::{jacobi_update, poly3_smooth};
use crate::spectrum::SmootherWeights;
use crate::C64;

/// Flops of one stencil evaluation.
pub const STENCIL_FLOPS: usize = 38;
/// Flops of one damped Jacobi point update.
pub const UPDATE_FLOPS: usize = 12;
/// Flops per point of one fused cubic application without redundancy.
pub const FLOPS_PER_POINT: usize = 3 * (STENCIL_FLOPS + UPDATE_FLOPS);
/// Ghost layers for three fused sweeps.
pub const GHOST: usize = 3;

const COMPLEX_BYTES: usize = 16;
const REAL_BYTES: usize = 8;

#[derive(Debug, Error, PartialEq)]
pub enum KernelError {
    #[error("tile {tile_x}x{tile_y} too small: each axis needs at least {min} points or the whole axis")]
    TileTooSmall { tile_x: usize, tile_y: usize, min: usize },
    #[error("field has {got} entries, operator expects {expected}")]
    ShapeMismatch { expected: usize, got: usize },
    #[error("no plans given")]
    NoPlans,
    #[error("repetitions must be at least 1")]
    NoRepetitions,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TileOrder {
    RowMajor,
    ColumnMajor,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TilePlan {
    pub tile_x: usize,
    pub tile_y: usize,
    pub ghost: usize,
    pub order: TileOrder,
}

impl TilePlan {
    pub fn square(tile: usize) -> Self {
        TilePlan {
            tile_x: tile,
            tile_y: tile,
            ghost: GHOST,
            order: TileOrder::RowMajor,
        }
    }

    /// One tile covering an `n_x` by `n_y` grid.
    pub fn whole(n_x: usize, n_y: usize) -> Self {
        TilePlan {
            tile_x: n_x,
            tile_y: n_y,
            ghost: GHOST,
            order: TileOrder::RowMajor,
        }
    }

    pub fn label(&self) -> String {
        format!("{}x{}", self.tile_x, self.tile_y)
    }

    pub fn validate(&self, n_x: usize, n_y: usize) -> Result<(), KernelError> {
        let min = 2 * self.ghost;
        let ok = |t: usize, n: usize| t >= 1 && (t >= min || t >= n);
        if !ok(self.tile_x, n_x) || !ok(self.tile_y, n_y) {
            return Err(KernelError::TileTooSmall {
                tile_x: self.tile_x,
                tile_y: self.tile_y,
                min,
            });
        }
        Ok(())
    }

    /// Tile rectangles `(x0, x1, y0, y1)` partitioning the grid, in plan order.
    pub fn tiles(&self, n_x: usize, n_y: usize) -> Vec<(usize, usize, usize, usize)> {
        let xs: Vec<(usize, usize)> = (0..n_x)
            .step_by(self.tile_x.max(1))
            .map(|x0| (x0, (x0 + self.tile_x).min(n_x)))
            .collect();
        let ys: Vec<(usize, usize)> = (0..n_y)
            .step_by(self.tile_y.max(1))
            .map(|y0| (y0, (y0 + self.tile_y).min(n_y)))
            .collect();
        let mut out = Vec::with_capacity(xs.len() * ys.len());
        match self.order {
            TileOrder::RowMajor => {
                for &(y0, y1) in &ys {
                    for &(x0, x1) in &xs {
                        out.push((x0, x1, y0, y1));
                    }
                }
            }
            TileOrder::ColumnMajor => {
                for &(x0, x1) in &xs {
                    for &(y0, y1) in &ys {
                        out.push((x0, x1, y0, y1));
                    }
                }
            }
        }
        out
    }
}

/// Half-open index range grown by `g` and clipped to `[0, n)`.
fn grow(a: usize, b: usize, g: usize, n: usize) -> (usize, usize) {
    (a.saturating_sub(g), (b + g).min(n))
}

/// Fused cubic smoother on one tile; returns the tile's block of `u'`, row-major.
fn tile_poly3(
    op: &StencilOperator,
    u: &[C64],
    b: &[C64],
    sweeps: &[C64],
    (x0, x1, y0, y1): (usize, usize, usize, usize),
) -> Vec<C64> {
    let (nx, ny) = (op.n_x(), op.n_y());
    let s = sweeps.len();
    let zero = C64::new(0.0, 0.0);
    // local frame covers the tile grown by `s` layers
    let (lx0, lx1) = grow(x0, x1, s, nx);
    let (ly0, ly1) = grow(y0, y1, s, ny);
    let lw = lx1 - lx0;
    let local = |i: usize, j: usize| (j - ly0) * lw + (i - lx0);
    let mut cur: Vec<C64> = Vec::with_capacity(lw * (ly1 - ly0));
    for j in ly0..ly1 {
        cur.extend_from_slice(&u[j * nx + lx0..j * nx + lx1]);
    }
    let mut next = cur.clone();
    let inv = op.inv_abs_diagonal();
    for (k, &w) in sweeps.iter().enumerate() {
        let g = s - 1 - k;
        let (rx0, rx1) = grow(x0, x1, g, nx);
        let (ry0, ry1) = grow(y0, y1, g, ny);
        for j in ry0..ry1 {
            for i in rx0..rx1 {
                let west = if i > 0 { cur[local(i - 1, j)] } else { zero };
                let east = if i + 1 < nx { cur[local(i + 1, j)] } else { zero };
                let south = if j > 0 { cur[local(i, j - 1)] } else { zero };
                let north = if j + 1 < ny { cur[local(i, j + 1)] } else { zero };
                let c = cur[local(i, j)];
                let au = op.stencil_point(i, j, c, west, east, south, north);
                let p = j * nx + i;
                next[local(i, j)] = jacobi_update(c, b[p], au, inv[p], w);
            }
        }
        std::mem::swap(&mut cur, &mut next);
    }
    let mut out = Vec::with_capacity((x1 - x0) * (y1 - y0));
    for j in y0..y1 {
        for i in x0..x1 {
            out.push(cur[local(i, j)]);
        }
    }
    out
}

/// `poly3_smooth` evaluated tile by tile with ghost recomputation.
pub fn blocked_poly3(
    op: &StencilOperator,
    u: &[C64],
    b: &[C64],
    weights: &SmootherWeights,
    plan: &TilePlan,
) -> Result<Vec<C64>, KernelError> {
    let (nx, ny) = (op.n_x(), op.n_y());
    for len in [u.len(), b.len()] {
        if len != op.len() {
            return Err(KernelError::ShapeMismatch {
                expected: op.len(),
                got: len,
            });
        }
    }
    plan.validate(nx, ny)?;
    // a zero weight is skipped by the naive path as well
    let sweeps: Vec<C64> = weights.w.iter().copied().filter(|w| *w != C64::new(0.0, 0.0)).collect();
    if sweeps.is_empty() {
        return Ok(u.to_vec());
    }
    let tiles = plan.tiles(nx, ny);
    let blocks: Vec<Vec<C64>> = tiles.par_iter().map(|&t| tile_poly3(op, u, b, &sweeps, t)).collect();
    let mut out = vec![C64::new(0.0, 0.0); op.len()];
    for (&(x0, x1, y0, y1), block) in tiles.iter().zip(&blocks) {
        let w = x1 - x0;
        for (r, j) in (y0..y1).enumerate() {
            out[j * nx + x0..j * nx + x1].copy_from_slice(&block[r * w..(r + 1) * w]);
        }
    }
    Ok(out)
}

/// Max over components of `|a - b| / max(|b|, tiny)`.
pub fn max_relative_difference(a: &[C64], b: &[C64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).norm() / y.norm().max(f64::MIN_POSITIVE))
        .fold(0.0, f64::max)
}

/// Flops executed per updated point, halo recomputation included.
pub fn model_flops_per_point(plan: &TilePlan, n_x: usize, n_y: usize) -> f64 {
    let per_sweep = (STENCIL_FLOPS + UPDATE_FLOPS) as f64;
    let mut total = 0.0;
    for (x0, x1, y0, y1) in plan.tiles(n_x, n_y) {
        for g in 0..GHOST {
            let (a, b) = grow(x0, x1, g, n_x);
            let (c, d) = grow(y0, y1, g, n_y);
            total += per_sweep * ((b - a) * (d - c)) as f64;
        }
    }
    total / (n_x * n_y) as f64
}

/// Bytes from slow memory per updated point for one fused application.
pub fn model_bytes_per_point(plan: &TilePlan, n_x: usize, n_y: usize) -> f64 {
    let read = (2 * COMPLEX_BYTES + REAL_BYTES) as f64;
    let mut total = 0.0;
    for (x0, x1, y0, y1) in plan.tiles(n_x, n_y) {
        let (a, b) = grow(x0, x1, GHOST, n_x);
        let (c, d) = grow(y0, y1, GHOST, n_y);
        total += read * ((b - a) * (d - c)) as f64 + (COMPLEX_BYTES * (x1 - x0) * (y1 - y0)) as f64;
    }
    total / (n_x * n_y) as f64
}

/// Bytes per point of three unfused sweeps.
pub fn naive_bytes_per_point() -> f64 {
    (GHOST * (3 * COMPLEX_BYTES + REAL_BYTES)) as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub plan: String,
    /// Median wall time of one fused application.
    pub time_ms: f64,
    /// Million point updates (one cubic application each) per second.
    pub mlups: f64,
    pub flops_per_point: f64,
    pub est_bytes_per_point: f64,
    pub arithmetic_intensity: f64,
    /// `(max - min) / median` of the timings.
    pub spread: f64,
    /// Spread above 20%.
    pub unstable_timing: bool,
    /// Blocked versus naive result, checked before timing.
    pub max_rel_diff: f64,
}

/// Times `blocked_poly3` for every plan on a deterministic field.
pub fn bench(
    op: &StencilOperator,
    u: &[C64],
    b: &[C64],
    weights: &SmootherWeights,
    plans: &[TilePlan],
    repetitions: usize,
) -> Result<Vec<BenchRow>, KernelError> {
    if plans.is_empty() {
        return Err(KernelError::NoPlans);
    }
    if repetitions == 0 {
        return Err(KernelError::NoRepetitions);
    }
    let (nx, ny) = (op.n_x(), op.n_y());
    let mut naive = u.to_vec();
    if naive.len() != op.len() || b.len() != op.len() {
        return Err(KernelError::ShapeMismatch {
            expected: op.len(),
            got: naive.len().min(b.len()),
        });
    }
    poly3_smooth(op, &mut naive, b, weights);
    let mut rows = Vec::with_capacity(plans.len());
    for plan in plans {
        let check = blocked_poly3(op, u, b, weights, plan)?;
        let max_rel_diff = max_relative_difference(&check, &naive);
        let mut times: Vec<f64> = (0..repetitions)
            .map(|_| {
                let t = Instant::now();
                let out = blocked_poly3(op, u, b, weights, plan);
                let dt = t.elapsed().as_secs_f64();
                std::hint::black_box(out).ok();
                dt
            })
            .collect();
        times.sort_by(f64::total_cmp);
        let median = times[times.len() / 2];
        let spread = if median > 0.0 {
            (times[times.len() - 1] - times[0]) / median
        } else {
            0.0
        };
        let flops = model_flops_per_point(plan, nx, ny);
        let bytes = model_bytes_per_point(plan, nx, ny);
        rows.push(BenchRow {
            plan: plan.label(),
            time_ms: median * 1e3,
            mlups: if median > 0.0 { op.len() as f64 / median / 1e6 } else { f64::INFINITY },
            flops_per_point: flops,
            est_bytes_per_point: bytes,
            arithmetic_intensity: flops / bytes,
            spread,
            unstable_timing: spread > 0.2,
            max_rel_diff,
        });
    }
    Ok(rows)
}
