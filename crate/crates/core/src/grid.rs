//! Complex-valued tensor grids on the unit square and wave number fields.
//!
//! A grid stores the `n + 1` interval lengths per axis between the `n`
//! interior nodes and the two Dirichlet boundary nodes. Lengths are complex:
//! the physical grid carries an imaginary stretch inside the absorbing layers,
//! the preconditioner grid multiplies every length by one global factor
//! `gamma = sqrt(1 + i*beta)`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::C64;

#[derive(Debug, Error, PartialEq)]
pub enum GridError {
    #[error("grid needs at least 3 interior points per axis, got {0}")]
    TooFewPoints(usize),
    #[error("layer width {width} exceeds n/4 for n = {n}: absorbing layers would overlap")]
    LayerTooWide { width: usize, n: usize },
    #[error("sigma_max must be finite and non-negative, got {0}")]
    NegativeStretch(f64),
    #[error("shift beta must be finite and positive, got {0}")]
    InvalidShift(f64),
    #[error("rotation requires a physical grid, got {0:?}")]
    NotPhysical(GridKind),
    #[error("cannot coarsen an axis with {0} interior points (needs odd n >= 3)")]
    NotCoarsenable(usize),
    #[error("wave number must be finite and positive, got {0}")]
    NonPositiveWavenumber(f64),
    #[error("wedge interfaces must satisfy 0 < lower < upper < 1, got ({0}, {1})")]
    InvalidInterfaces(f64, f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum GridKind {
    Physical,
    PrecondGrid,
    PrecondCsl,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Ramp {
    Linear,
    Quadratic,
}

impl Ramp {
    fn eval(self, t: f64) -> f64 {
        match self {
            Ramp::Linear => t,
            Ramp::Quadratic => t * t,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComplexGrid {
    pub n_x: usize,
    pub n_y: usize,
    /// `n_x + 1` interval lengths; interval `j` joins node `j - 1` and node `j`.
    pub spacing_x: Vec<C64>,
    pub spacing_y: Vec<C64>,
    pub kind: GridKind,
    /// Global rotation factor applied to the physical spacings (1 unless rotated).
    pub gamma: C64,
}

/// Layer width used when none is given: `n / 8`, at least 4, never above `n / 4`.
pub fn default_layer_width(n: usize) -> usize {
    (n / 8).max(4).min(n / 4)
}

fn stretched_axis(n: usize, layer_width: usize, sigma_max: f64, ramp: Ramp) -> Vec<C64> {
    let h = 1.0 / (n + 1) as f64;
    let mut spacing = vec![C64::new(h, 0.0); n + 1];
    for j in 1..=layer_width {
        // j counts intervals from the inner edge of the layer outward
        let sigma = sigma_max * ramp.eval(j as f64 / layer_width as f64);
        let s = C64::new(h, h * sigma);
        spacing[layer_width - j] = s;
        spacing[n + 1 - layer_width + j - 1] = s;
    }
    spacing
}

/// Physical grid on the unit square with `n` interior points per axis and
/// complex-stretched absorbing layers of `layer_width` intervals at every side.
pub fn build_stretched_grid(
    n: usize,
    layer_width: usize,
    sigma_max: f64,
    ramp: Ramp,
) -> Result<ComplexGrid, GridError> {
    if n < 3 {
        return Err(GridError::TooFewPoints(n));
    }
    if 4 * layer_width > n {
        return Err(GridError::LayerTooWide { width: layer_width, n });
    }
    if !(sigma_max >= 0.0) || !sigma_max.is_finite() {
        return Err(GridError::NegativeStretch(sigma_max));
    }
    let axis = stretched_axis(n, layer_width, sigma_max, ramp);
    Ok(ComplexGrid {
        n_x: n,
        n_y: n,
        spacing_x: axis.clone(),
        spacing_y: axis,
        kind: GridKind::Physical,
        gamma: C64::new(1.0, 0.0),
    })
}

/// Principal square root of `1 + i*beta`.
pub fn rotation_factor(beta: f64) -> C64 {
    C64::new(1.0, beta).sqrt()
}

/// Multiplies every spacing of a physical grid by `gamma = sqrt(1 + i*beta)`.
pub fn rotate_grid(g: &ComplexGrid, beta: f64) -> Result<ComplexGrid, GridError> {
    if g.kind != GridKind::Physical {
        return Err(GridError::NotPhysical(g.kind));
    }
    if !(beta > 0.0) || !beta.is_finite() {
        return Err(GridError::InvalidShift(beta));
    }
    let gamma = rotation_factor(beta);
    Ok(ComplexGrid {
        n_x: g.n_x,
        n_y: g.n_y,
        spacing_x: g.spacing_x.iter().map(|h| h * gamma).collect(),
        spacing_y: g.spacing_y.iter().map(|h| h * gamma).collect(),
        kind: GridKind::PrecondGrid,
        gamma,
    })
}

/// Same spacings as the physical grid, tagged for the shifted-Laplacian operator.
pub fn csl_grid(g: &ComplexGrid) -> Result<ComplexGrid, GridError> {
    if g.kind != GridKind::Physical {
        return Err(GridError::NotPhysical(g.kind));
    }
    Ok(ComplexGrid {
        kind: GridKind::PrecondCsl,
        ..g.clone()
    })
}

fn coarsen_axis(spacing: &[C64]) -> Result<Vec<C64>, GridError> {
    let n = spacing.len() - 1;
    if n < 3 || n % 2 == 0 {
        return Err(GridError::NotCoarsenable(n));
    }
    Ok(spacing.chunks_exact(2).map(|p| p[0] + p[1]).collect())
}

impl ComplexGrid {
    pub fn len(&self) -> usize {
        self.n_x * self.n_y
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Keeps every other node; coarse intervals are pairwise sums of fine ones.
    pub fn coarsen(&self) -> Result<ComplexGrid, GridError> {
        let spacing_x = coarsen_axis(&self.spacing_x)?;
        let spacing_y = coarsen_axis(&self.spacing_y)?;
        Ok(ComplexGrid {
            n_x: spacing_x.len() - 1,
            n_y: spacing_y.len() - 1,
            spacing_x,
            spacing_y,
            kind: self.kind,
            gamma: self.gamma,
        })
    }

    pub fn can_coarsen(&self) -> bool {
        self.n_x >= 3 && self.n_y >= 3 && self.n_x % 2 == 1 && self.n_y % 2 == 1
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum WavenumberSpec {
    Constant(f64),
    /// Three horizontal bands. Row 0 (smallest y) is the top of the wedge model;
    /// a row belongs to the band whose interval holds its y coordinate,
    /// lower bound inclusive.
    Wedge {
        k_top: f64,
        k_mid: f64,
        k_bot: f64,
        lower: f64,
        upper: f64,
    },
}

impl WavenumberSpec {
    pub fn wedge(k_top: f64, k_mid: f64, k_bot: f64) -> Self {
        WavenumberSpec::Wedge {
            k_top,
            k_mid,
            k_bot,
            lower: 1.0 / 3.0,
            upper: 2.0 / 3.0,
        }
    }

    pub fn max_k(&self) -> f64 {
        match *self {
            WavenumberSpec::Constant(k) => k,
            WavenumberSpec::Wedge { k_top, k_mid, k_bot, .. } => k_top.max(k_mid).max(k_bot),
        }
    }

    pub fn validate(&self) -> Result<(), GridError> {
        let check = |k: f64| {
            if k > 0.0 && k.is_finite() {
                Ok(())
            } else {
                Err(GridError::NonPositiveWavenumber(k))
            }
        };
        match *self {
            WavenumberSpec::Constant(k) => check(k),
            WavenumberSpec::Wedge {
                k_top,
                k_mid,
                k_bot,
                lower,
                upper,
            } => {
                check(k_top)?;
                check(k_mid)?;
                check(k_bot)?;
                if !(0.0 < lower && lower < upper && upper < 1.0) {
                    return Err(GridError::InvalidInterfaces(lower, upper));
                }
                Ok(())
            }
        }
    }
}

/// Real wave number per interior node, x fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct WavenumberField {
    pub n_x: usize,
    pub n_y: usize,
    pub values: Vec<f64>,
}

impl WavenumberField {
    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.values[j * self.n_x + i]
    }

    /// Injection onto the coarse grid: coarse node `J` takes fine node `2J + 1`.
    pub fn inject(&self) -> WavenumberField {
        let n_x = (self.n_x - 1) / 2;
        let n_y = (self.n_y - 1) / 2;
        let mut values = Vec::with_capacity(n_x * n_y);
        for j in 0..n_y {
            for i in 0..n_x {
                values.push(self.at(2 * i + 1, 2 * j + 1));
            }
        }
        WavenumberField { n_x, n_y, values }
    }
}

pub fn build_wavenumber_field(
    spec: &WavenumberSpec,
    g: &ComplexGrid,
) -> Result<WavenumberField, GridError> {
    spec.validate()?;
    let mut values = Vec::with_capacity(g.len());
    for j in 0..g.n_y {
        let k = match *spec {
            WavenumberSpec::Constant(k) => k,
            WavenumberSpec::Wedge {
                k_top,
                k_mid,
                k_bot,
                lower,
                upper,
            } => {
                let y = (j + 1) as f64 / (g.n_y + 1) as f64;
                if y < lower {
                    k_top
                } else if y < upper {
                    k_mid
                } else {
                    k_bot
                }
            }
        };
        values.extend(std::iter::repeat(k).take(g.n_x));
    }
    Ok(WavenumberField {
        n_x: g.n_x,
        n_y: g.n_y,
        values,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: C64, b: C64, tol: f64) -> bool {
        (a - b).norm() <= tol
    }

    #[test]
    fn zero_width_layer_is_uniform() {
        let g = build_stretched_grid(7, 0, 0.5, Ramp::Quadratic).unwrap();
        assert_eq!(g.spacing_x.len(), 8);
        for s in g.spacing_x.iter().chain(&g.spacing_y) {
            assert_eq!(*s, C64::new(0.125, 0.0));
        }
    }

    #[test]
    fn zero_stretch_matches_zero_width() {
        let a = build_stretched_grid(7, 0, 0.5, Ramp::Linear).unwrap();
        let b = build_stretched_grid(7, 1, 0.0, Ramp::Linear).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn quadratic_ramp_values() {
        let g = build_stretched_grid(15, 3, 1.0, Ramp::Quadratic).unwrap();
        let h = 1.0 / 16.0;
        assert!(close(g.spacing_x[0], C64::new(h, h), 1e-15));
        assert!(close(g.spacing_x[15], C64::new(h, h), 1e-15));
        // third interval from the boundary is the innermost layer interval
        assert!(close(g.spacing_x[2], C64::new(h, h / 9.0), 1e-15));
        assert!(close(g.spacing_x[13], C64::new(h, h / 9.0), 1e-15));
        assert!(close(g.spacing_x[1], C64::new(h, h * 4.0 / 9.0), 1e-15));
        for s in &g.spacing_x[3..13] {
            assert_eq!(*s, C64::new(h, 0.0));
        }
    }

    #[test]
    fn stretch_is_monotone_and_symmetric() {
        for ramp in [Ramp::Linear, Ramp::Quadratic] {
            let g = build_stretched_grid(31, 7, 2.0, ramp).unwrap();
            let n = g.n_x;
            for j in 0..=n {
                assert_eq!(g.spacing_x[j], g.spacing_x[n - j]);
                assert!(g.spacing_x[j].re > 0.0);
            }
            for j in 0..7 {
                assert!(g.spacing_x[j].im >= g.spacing_x[j + 1].im);
            }
        }
    }

    #[test]
    fn rejects_bad_layers() {
        assert_eq!(
            build_stretched_grid(15, 4, 1.0, Ramp::Linear),
            Err(GridError::LayerTooWide { width: 4, n: 15 })
        );
        assert_eq!(
            build_stretched_grid(15, 2, -0.1, Ramp::Linear),
            Err(GridError::NegativeStretch(-0.1))
        );
        assert_eq!(
            build_stretched_grid(2, 0, 0.0, Ramp::Linear),
            Err(GridError::TooFewPoints(2))
        );
    }

    #[test]
    fn default_width_rule() {
        assert_eq!(default_layer_width(63), 7);
        assert_eq!(default_layer_width(31), 4);
        assert_eq!(default_layer_width(15), 3);
        assert_eq!(default_layer_width(127), 15);
    }

    #[test]
    fn rotation_of_uniform_grid() {
        let g = build_stretched_grid(9, 0, 0.0, Ramp::Quadratic).unwrap();
        let r = rotate_grid(&g, 0.5).unwrap();
        // sqrt(1 + 0.5i) by hand: modulus 1.25^(1/4), argument atan(0.5)/2
        let m = 1.25f64.powf(0.25);
        let a = 0.5f64.atan() / 2.0;
        let expect = C64::new(0.1 * m * a.cos(), 0.1 * m * a.sin());
        assert!(close(expect, C64::new(0.1 * 1.029086, 0.1 * 0.242934), 1e-7));
        for s in &r.spacing_x {
            assert!(close(*s, expect, 1e-15));
        }
        assert_eq!(r.kind, GridKind::PrecondGrid);
        assert!(close(r.gamma, C64::new(1.029086, 0.242934), 1e-6));
        assert!(r.gamma.norm() >= 1.0 && r.gamma.re > 0.0);
    }

    #[test]
    fn small_shift_leaves_spacings_unchanged() {
        let g = build_stretched_grid(15, 3, 1.0, Ramp::Quadratic).unwrap();
        let r = rotate_grid(&g, 1e-12).unwrap();
        for (a, b) in g.spacing_x.iter().zip(&r.spacing_x) {
            assert!(close(*a, *b, 1e-13));
        }
    }

    #[test]
    fn rotation_preserves_ratios() {
        let g = build_stretched_grid(31, 6, 1.5, Ramp::Quadratic).unwrap();
        let r = rotate_grid(&g, 0.7).unwrap();
        for j in 0..g.spacing_x.len() {
            let a = g.spacing_x[j] / g.spacing_x[0];
            let b = r.spacing_x[j] / r.spacing_x[0];
            assert!(close(a, b, 1e-14));
        }
    }

    #[test]
    fn rotation_rejects_non_physical_and_bad_shift() {
        let g = build_stretched_grid(15, 3, 1.0, Ramp::Quadratic).unwrap();
        let r = rotate_grid(&g, 0.5).unwrap();
        assert_eq!(
            rotate_grid(&r, 0.5),
            Err(GridError::NotPhysical(GridKind::PrecondGrid))
        );
        assert_eq!(rotate_grid(&g, -1.0), Err(GridError::InvalidShift(-1.0)));
        assert_eq!(rotate_grid(&g, 0.0), Err(GridError::InvalidShift(0.0)));
    }

    #[test]
    fn coarsening_sums_pairs() {
        let g = build_stretched_grid(9, 2, 1.0, Ramp::Quadratic).unwrap();
        let r = rotate_grid(&g, 0.5).unwrap();
        let c = r.coarsen().unwrap();
        assert_eq!(c.n_x, 4);
        for (jc, s) in c.spacing_x.iter().enumerate() {
            assert_eq!(*s, r.spacing_x[2 * jc] + r.spacing_x[2 * jc + 1]);
        }
        assert_eq!(c.gamma, r.gamma);
        assert!(c.coarsen().is_err());
    }

    #[test]
    fn constant_field() {
        let g = build_stretched_grid(31, 0, 0.0, Ramp::Quadratic).unwrap();
        let f = build_wavenumber_field(&WavenumberSpec::Constant(40.0), &g).unwrap();
        assert_eq!(f.values.len(), 961);
        assert!(f.values.iter().all(|&k| k == 40.0));
    }

    #[test]
    fn wedge_bands_lower_inclusive() {
        let g = build_stretched_grid(29, 0, 0.0, Ramp::Quadratic).unwrap();
        let f = build_wavenumber_field(&WavenumberSpec::wedge(10.0, 20.0, 40.0), &g).unwrap();
        // y_j = (j + 1) / 30: row 9 sits exactly on 1/3, row 19 exactly on 2/3
        for j in 0..29 {
            let expect = if j < 9 {
                10.0
            } else if j < 19 {
                20.0
            } else {
                40.0
            };
            for i in 0..29 {
                assert_eq!(f.at(i, j), expect, "row {j}");
            }
        }
    }

    #[test]
    fn equal_wedge_is_constant() {
        let g = build_stretched_grid(15, 3, 1.0, Ramp::Quadratic).unwrap();
        let a = build_wavenumber_field(&WavenumberSpec::wedge(7.0, 7.0, 7.0), &g).unwrap();
        let b = build_wavenumber_field(&WavenumberSpec::Constant(7.0), &g).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn rejects_non_positive_k() {
        let g = build_stretched_grid(15, 3, 1.0, Ramp::Quadratic).unwrap();
        assert!(build_wavenumber_field(&WavenumberSpec::Constant(0.0), &g).is_err());
        assert!(build_wavenumber_field(&WavenumberSpec::wedge(1.0, -2.0, 3.0), &g).is_err());
    }

    #[test]
    fn injection_takes_coincident_nodes() {
        let g = build_stretched_grid(29, 0, 0.0, Ramp::Quadratic).unwrap();
        let f = build_wavenumber_field(&WavenumberSpec::wedge(10.0, 20.0, 40.0), &g).unwrap();
        let c = f.inject();
        assert_eq!((c.n_x, c.n_y), (14, 14));
        for j in 0..14 {
            assert_eq!(c.at(0, j), f.at(1, 2 * j + 1));
        }
    }
}
