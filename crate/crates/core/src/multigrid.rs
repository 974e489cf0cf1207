//! Geometric multigrid on the preconditioner's complex grid hierarchy.
//!
//! Coarse levels are rediscretisations on grids with every other node kept
//! (spacings summed pairwise) and `k` injected. Fine node `2I + 1` coincides
//! with coarse node `I`, so every level has odd `n`. Transfers are full
//! weighting and bilinear interpolation on the index lattice; the coarsest
//! level is solved by dense LU.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dense::{DenseError, LuFactors};
use crate::operator::{OperatorError, StencilOperator};
use crate::smoother::{gmres_smooth, poly3_smooth, SmootherKind};
use crate::spectrum::{analyze_level, LevelSpectrum, SmootherWeights, SpectrumError, SpectrumOptions};
use crate::vector::{all_finite, norm};
use crate::C64;

#[derive(Debug, Error, PartialEq)]
pub enum MultigridError {
    #[error(transparent)]
    Operator(#[from] OperatorError),
    #[error(transparent)]
    Spectrum(#[from] SpectrumError),
    #[error(transparent)]
    Dense(#[from] DenseError),
    #[error("coarsest level has {n} points per axis; direct solve limited to {max}")]
    InsufficientLevels { n: usize, max: usize },
    #[error("{given} fixed weight sets for {levels} levels")]
    WeightCount { given: usize, levels: usize },
    #[error("divergence detected on level {level}")]
    DivergenceDetected { level: usize },
    #[error("field has {got} entries, level expects {expected}")]
    ShapeMismatch { expected: usize, got: usize },
}

/// How each level is smoothed.
#[derive(Debug, Clone, PartialEq)]
pub enum SmootherSpec {
    /// Cubic smoother with weights optimised per level.
    Poly3,
    /// Cubic smoother with given weights, one set per level from the finest.
    Poly3Fixed(Vec<SmootherWeights>),
    Gmres { m: usize },
}

#[derive(Debug, Clone)]
pub struct HierarchyOptions {
    /// Upper bound on the number of levels; `1` means a direct solve.
    pub max_levels: Option<usize>,
    /// Stop coarsening once `n` is at most this.
    pub coarsest_max: usize,
    pub nu_pre: usize,
    pub nu_post: usize,
    pub spectrum: SpectrumOptions,
}

impl Default for HierarchyOptions {
    fn default() -> Self {
        HierarchyOptions {
            max_levels: None,
            coarsest_max: 9,
            nu_pre: 1,
            nu_post: 1,
            spectrum: SpectrumOptions::default(),
        }
    }
}

/// Largest coarsest grid (per axis) the dense solver accepts.
pub const COARSEST_CAP: usize = 63;

#[derive(Debug, Clone)]
pub struct Level {
    pub op: StencilOperator,
    pub smoother: SmootherKind,
    /// Present when the weights came from the spectral analysis.
    pub spectrum: Option<LevelSpectrum>,
}

#[derive(Debug, Clone)]
pub struct Hierarchy {
    levels: Vec<Level>,
    coarse: LuFactors,
    nu_pre: usize,
    nu_post: usize,
}

/// Residual norms of one level during one cycle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LevelRecord {
    pub level: usize,
    pub residual_in: f64,
    pub residual_after_pre: f64,
    pub residual_after_cgc: f64,
    pub residual_after_post: f64,
    /// `|r after cgc| / |r before cgc|`; above one the correction diverged.
    pub cgc_ratio: f64,
}

/// One V-cycle's records, one per non-coarsest level visited.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CycleDiagnostics {
    pub levels: Vec<LevelRecord>,
}

fn zeros(n: usize) -> Vec<C64> {
    vec![C64::new(0.0, 0.0); n]
}

/// Number of levels `build_hierarchy` produces for a fine grid of `n`.
pub fn level_count(n: usize, coarsest_max: usize, max_levels: Option<usize>) -> usize {
    let cap = max_levels.unwrap_or(usize::MAX).max(1);
    let mut n = n;
    let mut levels = 1;
    while levels < cap && n > coarsest_max && n % 2 == 1 && n >= 3 {
        n = (n - 1) / 2;
        levels += 1;
    }
    levels
}

/// Builds the level operators, their smoothers and the coarsest LU.
pub fn build_hierarchy(
    fine: StencilOperator,
    smoother: &SmootherSpec,
    opts: &HierarchyOptions,
) -> Result<Hierarchy, MultigridError> {
    let count = level_count(fine.n_x(), opts.coarsest_max, opts.max_levels);
    let mut ops = vec![fine];
    while ops.len() < count {
        let next = ops.last().unwrap().coarsen()?;
        ops.push(next);
    }
    let coarsest = ops.last().unwrap();
    if coarsest.n_x() > COARSEST_CAP || coarsest.n_y() > COARSEST_CAP {
        return Err(MultigridError::InsufficientLevels {
            n: coarsest.n_x().max(coarsest.n_y()),
            max: COARSEST_CAP,
        });
    }
    let coarse = coarsest.assemble_dense()?.lu()?;

    let levels = match smoother {
        SmootherSpec::Gmres { m } => ops
            .into_iter()
            .map(|op| Level {
                op,
                smoother: SmootherKind::Gmres { m: (*m).max(1) },
                spectrum: None,
            })
            .collect(),
        SmootherSpec::Poly3Fixed(ws) => {
            if ws.len() < ops.len() {
                return Err(MultigridError::WeightCount {
                    given: ws.len(),
                    levels: ops.len(),
                });
            }
            ops.into_iter()
                .zip(ws)
                .map(|(op, w)| Level {
                    op,
                    smoother: SmootherKind::Poly3(*w),
                    spectrum: None,
                })
                .collect()
        }
        SmootherSpec::Poly3 => {
            let spectra: Vec<Result<LevelSpectrum, SpectrumError>> = ops
                .par_iter()
                .enumerate()
                .map(|(l, op)| analyze_level(op, l, &opts.spectrum))
                .collect();
            let mut levels = Vec::with_capacity(ops.len());
            for (op, s) in ops.into_iter().zip(spectra) {
                let s = s?;
                levels.push(Level {
                    op,
                    smoother: SmootherKind::Poly3(s.weights),
                    spectrum: Some(s),
                });
            }
            levels
        }
    };
    Ok(Hierarchy {
        levels,
        coarse,
        nu_pre: opts.nu_pre,
        nu_post: opts.nu_post,
    })
}

/// Full weighting; fine `n` must be `2 n_c + 1` per axis.
pub fn restrict(fine: &[C64], n_x: usize, n_y: usize) -> Vec<C64> {
    assert_eq!(fine.len(), n_x * n_y);
    assert!(n_x % 2 == 1 && n_y % 2 == 1);
    let (cx, cy) = ((n_x - 1) / 2, (n_y - 1) / 2);
    let at = |i: usize, j: usize| fine[j * n_x + i];
    let mut out = Vec::with_capacity(cx * cy);
    for jc in 0..cy {
        let j = 2 * jc + 1;
        for ic in 0..cx {
            let i = 2 * ic + 1;
            let corners = at(i - 1, j - 1) + at(i + 1, j - 1) + at(i - 1, j + 1) + at(i + 1, j + 1);
            let edges = at(i - 1, j) + at(i + 1, j) + at(i, j - 1) + at(i, j + 1);
            out.push(at(i, j) * 0.25 + edges * 0.125 + corners * 0.0625);
        }
    }
    out
}

/// Bilinear interpolation onto the fine lattice of `2 n + 1` points per axis,
/// zero outside the coarse interior.
pub fn prolong(coarse: &[C64], n_x: usize, n_y: usize) -> Vec<C64> {
    assert_eq!(coarse.len(), n_x * n_y);
    let (fx, fy) = (2 * n_x + 1, 2 * n_y + 1);
    let get = |i: isize, j: isize| {
        if i < 0 || j < 0 || i >= n_x as isize || j >= n_y as isize {
            C64::new(0.0, 0.0)
        } else {
            coarse[j as usize * n_x + i as usize]
        }
    };
    // fine index f maps to coarse (f - 1) / 2; even f lies halfway between two
    let taps = |f: usize| -> [(isize, f64); 2] {
        if f % 2 == 1 {
            [(((f - 1) / 2) as isize, 1.0), (0, 0.0)]
        } else {
            [((f / 2) as isize - 1, 0.5), ((f / 2) as isize, 0.5)]
        }
    };
    let mut out = Vec::with_capacity(fx * fy);
    for j in 0..fy {
        let tj = taps(j);
        for i in 0..fx {
            let ti = taps(i);
            let mut v = C64::new(0.0, 0.0);
            for &(jj, wj) in &tj {
                if wj == 0.0 {
                    continue;
                }
                for &(ii, wi) in &ti {
                    if wi != 0.0 {
                        v += get(ii, jj) * (wi * wj);
                    }
                }
            }
            out.push(v);
        }
    }
    out
}

/// Dense LU back substitution.
pub fn coarse_solve(factors: &LuFactors, rhs: &[C64]) -> Result<Vec<C64>, DenseError> {
    factors.solve(rhs)
}

impl Hierarchy {
    pub fn levels(&self) -> &[Level] {
        &self.levels
    }

    pub fn num_levels(&self) -> usize {
        self.levels.len()
    }

    pub fn fine(&self) -> &StencilOperator {
        &self.levels[0].op
    }

    pub fn coarse_factors(&self) -> &LuFactors {
        &self.coarse
    }

    pub fn weights(&self) -> Vec<Option<SmootherWeights>> {
        self.levels
            .iter()
            .map(|l| match l.smoother {
                SmootherKind::Poly3(w) => Some(w),
                SmootherKind::Gmres { .. } => None,
            })
            .collect()
    }

    /// One V(nu_pre, nu_post) cycle improving `u` for `A_0 u = b`.
    pub fn v_cycle(
        &self,
        b: &[C64],
        u: &mut [C64],
        diag: Option<&mut CycleDiagnostics>,
    ) -> Result<(), MultigridError> {
        let n = self.fine().len();
        for len in [b.len(), u.len()] {
            if len != n {
                return Err(MultigridError::ShapeMismatch { expected: n, got: len });
            }
        }
        let mut sink = CycleDiagnostics::default();
        let record = diag.is_some();
        self.cycle(0, b, u, record, &mut sink)?;
        if let Some(d) = diag {
            *d = sink;
        }
        Ok(())
    }

    /// One cycle from a zero guess: the preconditioner application.
    pub fn precondition(
        &self,
        r: &[C64],
        diag: Option<&mut CycleDiagnostics>,
    ) -> Result<Vec<C64>, MultigridError> {
        let mut z = zeros(r.len());
        self.v_cycle(r, &mut z, diag)?;
        Ok(z)
    }

    fn smooth(&self, level: usize, u: &mut [C64], b: &[C64], sweeps: usize) {
        let l = &self.levels[level];
        for _ in 0..sweeps {
            match &l.smoother {
                SmootherKind::Poly3(w) => poly3_smooth(&l.op, u, b, w),
                SmootherKind::Gmres { m } => gmres_smooth(&l.op, u, b, *m),
            }
        }
    }

    fn cycle(
        &self,
        level: usize,
        b: &[C64],
        u: &mut [C64],
        record: bool,
        diag: &mut CycleDiagnostics,
    ) -> Result<(), MultigridError> {
        let diverged = || MultigridError::DivergenceDetected { level };
        if level + 1 == self.levels.len() {
            let x = coarse_solve(&self.coarse, b).map_err(|_| diverged())?;
            // a direct solve replaces any current iterate
            u.copy_from_slice(&x);
            return if all_finite(u) { Ok(()) } else { Err(diverged()) };
        }
        let op = &self.levels[level].op;
        let residual_in = if record { norm(&op.residual(b, u)?) } else { 0.0 };

        self.smooth(level, u, b, self.nu_pre);
        let r = op.residual(b, u)?;
        if !all_finite(&r) {
            return Err(diverged());
        }
        let residual_after_pre = norm(&r);

        let rc = restrict(&r, op.n_x(), op.n_y());
        let mut ec = zeros(rc.len());
        let slot = diag.levels.len();
        if record {
            diag.levels.push(LevelRecord {
                level,
                residual_in,
                residual_after_pre,
                residual_after_cgc: 0.0,
                residual_after_post: 0.0,
                cgc_ratio: 0.0,
            });
        }
        self.cycle(level + 1, &rc, &mut ec, record, diag)?;
        let coarse = &self.levels[level + 1].op;
        let e = prolong(&ec, coarse.n_x(), coarse.n_y());
        for (ui, ei) in u.iter_mut().zip(&e) {
            *ui += ei;
        }
        if !all_finite(u) {
            return Err(diverged());
        }
        let residual_after_cgc = if record { norm(&op.residual(b, u)?) } else { 0.0 };

        self.smooth(level, u, b, self.nu_post);
        if !all_finite(u) {
            return Err(diverged());
        }
        if record {
            let residual_after_post = norm(&op.residual(b, u)?);
            let rec = &mut diag.levels[slot];
            rec.residual_after_cgc = residual_after_cgc;
            rec.residual_after_post = residual_after_post;
            rec.cgc_ratio = if residual_after_pre > 0.0 {
                residual_after_cgc / residual_after_pre
            } else {
                0.0
            };
        }
        Ok(())
    }
}
