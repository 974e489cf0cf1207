//! Spectral design of the cubic smoother for one multigrid level.
//!
//! For every distinct frozen-coefficient stencil on a level the symbol of the
//! operator is sampled on a uniform `(θx, θy)` lattice of `(0, π]²` and divided
//! by the modulus of the diagonal, which is the scaling the Jacobi sweeps use:
//!
//! ```text
//! μ = [ cx (1 - cos θx) + cy (1 - cos θy) - s k² ] / | cx + cy - s k² |
//! ```
//!
//! where `cx = 2/(h_{i-1} h_i)` and `cy` are the axis contributions to the
//! diagonal. Dividing by a positive real keeps the samples in the half-plane
//! where the preconditioner's spectrum lives. The samples are enclosed by a
//! triangle below the real axis and the three weights are chosen so the cubic
//! is bounded by one on that triangle while damping the high frequencies.

mod hull;
mod optimize;
mod triangle;

use std::collections::HashSet;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::operator::StencilOperator;
use crate::C64;

pub use hull::{convex_hull, Hull};
pub use optimize::{optimize_weights, poly_max_on_boundary, OptimizeOptions, SmootherWeights, STABILITY_SLACK};
pub use triangle::{lower_half_candidates, lower_half_triangle, min_enclosing_triangle, orient_lower_half, Oriented, Triangle};

#[derive(Debug, Error, PartialEq)]
pub enum SpectrumError {
    #[error("theta_count must be at least 8, got {0}")]
    TooFewThetas(usize),
    #[error("resonant diagonal on level {level}: |d| = {modulus:e}")]
    ResonantDiagonal { level: usize, modulus: f64 },
    #[error("empty point set")]
    EmptyPointSet,
    #[error("non-finite sample")]
    NonFinite,
    #[error("spectrum not half-plane-bounded: extends to {above} above and {below} below the real axis")]
    NotHalfPlaneBounded { above: f64, below: f64 },
    #[error("unstable level {level:?}: best stability {}, smoothing {}", best.achieved_stability, best.achieved_smoothing)]
    UnstableLevel {
        level: Option<usize>,
        best: SmootherWeights,
    },
}

/// Jacobi-normalised symbol samples of one level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SymbolSampleSet {
    pub points: Vec<C64>,
    /// `true` where `max(θx, θy) >= π/2`.
    pub high_frequency: Vec<bool>,
    pub theta_count: usize,
    /// Number of distinct frozen-coefficient stencils sampled.
    pub stencils: usize,
}

impl SymbolSampleSet {
    pub fn hf_points(&self) -> impl Iterator<Item = C64> + '_ {
        self.points
            .iter()
            .zip(&self.high_frequency)
            .filter_map(|(z, hf)| hf.then_some(*z))
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Samples the normalised symbol of every distinct `(cx, cy, k)` triple on the level.
pub fn symbol_samples(
    op: &StencilOperator,
    level: usize,
    theta_count: usize,
) -> Result<SymbolSampleSet, SpectrumError> {
    if theta_count < 8 {
        return Err(SpectrumError::TooFewThetas(theta_count));
    }
    let s = op.mode().shift();
    let cx = op.center_x();
    let cy = op.center_y();
    let kf = op.k_field();
    let bits = |z: C64| (z.re.to_bits(), z.im.to_bits());
    let mut seen = HashSet::new();
    let mut triples = Vec::new();
    for j in 0..op.n_y() {
        for i in 0..op.n_x() {
            let k = kf.at(i, j);
            if seen.insert((bits(cx[i]), bits(cy[j]), k.to_bits())) {
                triples.push((cx[i], cy[j], k));
            }
        }
    }
    let one_minus_cos: Vec<f64> = (1..=theta_count)
        .map(|m| 1.0 - (m as f64 * std::f64::consts::PI / theta_count as f64).cos())
        .collect();
    let hf_from = theta_count.div_ceil(2);
    let per = theta_count * theta_count;
    let mut points = Vec::with_capacity(per * triples.len());
    let mut high_frequency = Vec::with_capacity(per * triples.len());
    for &(cxv, cyv, k) in &triples {
        let shift = s * (k * k);
        let d = cxv + cyv - shift;
        let scale = cxv.norm() + cyv.norm() + shift.norm();
        if d.norm() <= 1e-12 * scale {
            return Err(SpectrumError::ResonantDiagonal {
                level,
                modulus: d.norm(),
            });
        }
        let inv = 1.0 / d.norm();
        for (my, ay) in one_minus_cos.iter().enumerate() {
            for (mx, ax) in one_minus_cos.iter().enumerate() {
                points.push((cxv * *ax + cyv * *ay - shift) * inv);
                // θ index m = mx + 1; hf when 2 (m) >= theta_count
                high_frequency.push(mx + 1 >= hf_from || my + 1 >= hf_from);
            }
        }
    }
    if points.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(SpectrumError::NonFinite);
    }
    Ok(SymbolSampleSet {
        points,
        high_frequency,
        theta_count,
        stencils: triples.len(),
    })
}

#[derive(Debug, Clone, Copy)]
pub struct SpectrumOptions {
    pub theta_count: usize,
    /// Relative outward growth of the bounding triangle.
    pub inflate: f64,
    /// Candidate triangles screened per criterion (see [`lower_half_candidates`]).
    pub candidates: usize,
    /// Optimizer budget spent on each candidate while screening.
    pub screen_budget: usize,
    pub optimize: OptimizeOptions,
}

impl Default for SpectrumOptions {
    fn default() -> Self {
        SpectrumOptions {
            theta_count: 64,
            inflate: 0.05,
            candidates: 6,
            screen_budget: 1500,
            optimize: OptimizeOptions::default(),
        }
    }
}

/// Everything the spectral analysis produced for one level.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LevelSpectrum {
    pub level: usize,
    pub samples: SymbolSampleSet,
    /// Samples were conjugated before bounding; triangle and hulls are in the
    /// conjugated frame, weights are returned to the original frame.
    pub flipped: bool,
    /// False when the samples reach above the real axis after orientation.
    pub half_plane_bounded: bool,
    pub hull: Hull,
    pub hf_hull: Hull,
    pub triangle: Triangle,
    pub weights: SmootherWeights,
}

impl LevelSpectrum {
    /// Sample `z` as seen in the triangle's frame.
    pub fn oriented(&self, z: C64) -> C64 {
        if self.flipped {
            z.conj()
        } else {
            z
        }
    }
}

/// Samples, bounds and optimises one level.
pub fn analyze_level(
    op: &StencilOperator,
    level: usize,
    opts: &SpectrumOptions,
) -> Result<LevelSpectrum, SpectrumError> {
    let samples = symbol_samples(op, level, opts.theta_count)?;
    let raw_hull = convex_hull(&samples.points)?;
    let flipped = raw_hull.max_im() > raw_hull.min_im().abs();
    let orient = |z: C64| if flipped { z.conj() } else { z };
    let oriented: Vec<C64> = samples.points.iter().map(|&z| orient(z)).collect();
    let hull = convex_hull(&oriented)?;
    let hf: Vec<C64> = samples.hf_points().map(orient).collect();
    let hf_hull = convex_hull(&hf)?;
    let candidates = lower_half_candidates(&hull, opts.inflate, opts.candidates);
    let triangle = if candidates.len() == 1 {
        candidates[0]
    } else {
        // keep the triangle on which a short optimisation smooths best
        let screen = OptimizeOptions {
            budget: opts.screen_budget,
            ..opts.optimize
        };
        let scores: Vec<f64> = candidates
            .par_iter()
            .map(|t| match optimize_weights(t, &hf_hull, &screen) {
                Ok(w) => w.achieved_smoothing,
                Err(_) => f64::INFINITY,
            })
            .collect();
        let mut best = 0;
        for (i, s) in scores.iter().enumerate() {
            if *s < scores[best] {
                best = i;
            }
        }
        candidates[best]
    };
    let half_plane_bounded = hull.max_im() <= 0.0;
    let mut weights = match optimize_weights(&triangle, &hf_hull, &opts.optimize) {
        Ok(w) => w,
        Err(SpectrumError::UnstableLevel { best, .. }) => {
            return Err(SpectrumError::UnstableLevel {
                level: Some(level),
                best,
            })
        }
        Err(e) => return Err(e),
    };
    if flipped {
        weights = weights.conj();
    }
    Ok(LevelSpectrum {
        level,
        samples,
        flipped,
        half_plane_bounded,
        hull,
        hf_hull,
        triangle,
        weights,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{build_stretched_grid, build_wavenumber_field, csl_grid, rotate_grid, Ramp, WavenumberSpec};
    use crate::operator::OperatorMode;

    fn precond(n: usize, lw: usize, sigma: f64, k: f64) -> StencilOperator {
        let g = build_stretched_grid(n, lw, sigma, Ramp::Quadratic).unwrap();
        let f = build_wavenumber_field(&WavenumberSpec::Constant(k), &g).unwrap();
        StencilOperator::new(rotate_grid(&g, 0.5).unwrap(), f, OperatorMode::ShiftedGrid).unwrap()
    }

    fn csl(n: usize, k: f64) -> StencilOperator {
        let g = build_stretched_grid(n, 0, 0.0, Ramp::Quadratic).unwrap();
        let f = build_wavenumber_field(&WavenumberSpec::Constant(k), &g).unwrap();
        StencilOperator::new(csl_grid(&g).unwrap(), f, OperatorMode::ShiftedLaplacian { beta: 0.5 }).unwrap()
    }

    #[test]
    fn laplacian_corner_sample_is_two() {
        let op = csl(15, 1e-200);
        let s = symbol_samples(&op, 0, 16).unwrap();
        let last = *s.points.last().unwrap();
        assert_eq!(last, C64::new(2.0, 0.0));
    }

    #[test]
    fn real_laplacian_samples_are_real() {
        let op = csl(15, 1e-200);
        let s = symbol_samples(&op, 0, 32).unwrap();
        assert_eq!(s.len(), 1024);
        for z in &s.points {
            assert_eq!(z.im, 0.0);
            assert!(z.re > 0.0 && z.re <= 2.0);
        }
        assert_eq!(s.hf_points().count(), 1024 - 15 * 15);
    }

    #[test]
    fn too_few_thetas_rejected() {
        assert_eq!(
            symbol_samples(&csl(7, 1.0), 0, 4).unwrap_err(),
            SpectrumError::TooFewThetas(4)
        );
    }

    #[test]
    fn stretched_level_has_several_stencils() {
        let op = precond(31, 4, 1.0, 20.0);
        let s = symbol_samples(&op, 0, 8).unwrap();
        // interior value plus four distinct layer values per axis
        assert_eq!(s.stencils, 25);
    }

    #[test]
    fn samples_lie_below_real_axis() {
        for (lw, sigma) in [(0, 0.0), (4, 1.0)] {
            let op = precond(31, lw, sigma, 20.0);
            let s = symbol_samples(&op, 0, 64).unwrap();
            assert!(s.points.iter().all(|z| z.im <= 0.0));
        }
    }

    #[test]
    fn level_analysis_contract() {
        let op = precond(31, 4, 1.0, 20.0);
        let ls = analyze_level(&op, 0, &SpectrumOptions::default()).unwrap();
        assert!(!ls.flipped);
        assert!(ls.half_plane_bounded);
        for z in &ls.triangle.v {
            assert!(z.im <= 1e-12);
        }
        for z in &ls.samples.points {
            assert!(ls.triangle.contains(ls.oriented(*z), 1e-10));
        }
        assert!(ls.weights.achieved_stability <= 1.0 + STABILITY_SLACK);
        assert!(ls.weights.achieved_smoothing < 1.0);
    }
}
