//! Matrix-free 5-point Helmholtz operator on a complex grid.
//!
//! `(A u)_ij = -(D2x u)_ij - (D2y u)_ij - s k_ij^2 u_ij` with the 3-point
//! second difference on non-uniform complex spacings
//! `(D2 u)_j = 2/(h_{j-1}+h_j) [ (u_{j+1}-u_j)/h_j - (u_j-u_{j-1})/h_{j-1} ]`
//! and homogeneous Dirichlet values outside the interior. Unknowns are ordered
//! lexicographically with x fastest.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dense::DenseMatrix;
use crate::grid::{ComplexGrid, GridError, GridKind, WavenumberField};
use crate::C64;

/// Largest system `assemble_dense` accepts.
pub const DENSE_CAP: usize = 4096;

const PAR_THRESHOLD: usize = 1 << 14;

#[derive(Debug, Error, PartialEq)]
pub enum OperatorError {
    #[error("field has {got} entries, operator expects {expected}")]
    ShapeMismatch { expected: usize, got: usize },
    #[error("wave number field is {field:?}, grid is {grid:?}")]
    FieldMismatch {
        field: (usize, usize),
        grid: (usize, usize),
    },
    #[error("operator mode {mode:?} is incompatible with grid kind {kind:?}")]
    ModeMismatch { mode: OperatorMode, kind: GridKind },
    #[error("diagonal vanishes at node ({i}, {j})")]
    ZeroDiagonal { i: usize, j: usize },
    #[error("dense assembly limited to {cap} unknowns, got {got}")]
    TooLarge { cap: usize, got: usize },
    #[error(transparent)]
    Grid(#[from] GridError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum OperatorMode {
    /// The discretised physical problem on the stretched grid.
    Physical,
    /// Same operator on the globally rotated grid.
    ShiftedGrid,
    /// Physical grid, `k^2` replaced by `(1 + i beta) k^2`.
    ShiftedLaplacian { beta: f64 },
}

impl OperatorMode {
    pub fn shift(&self) -> C64 {
        match *self {
            OperatorMode::ShiftedLaplacian { beta } => C64::new(1.0, beta),
            _ => C64::new(1.0, 0.0),
        }
    }

    fn expected_kind(&self) -> GridKind {
        match self {
            OperatorMode::Physical => GridKind::Physical,
            OperatorMode::ShiftedGrid => GridKind::PrecondGrid,
            OperatorMode::ShiftedLaplacian { .. } => GridKind::PrecondCsl,
        }
    }
}

/// Per-axis 3-point coefficients for the interior nodes of one axis.
#[derive(Debug, Clone)]
struct AxisStencil {
    lower: Vec<C64>,
    upper: Vec<C64>,
    center: Vec<C64>,
}

impl AxisStencil {
    fn new(spacing: &[C64]) -> Self {
        let n = spacing.len() - 1;
        let mut lower = Vec::with_capacity(n);
        let mut upper = Vec::with_capacity(n);
        let mut center = Vec::with_capacity(n);
        for j in 0..n {
            let (hl, hr) = (spacing[j], spacing[j + 1]);
            let two_over = 2.0 / (hl + hr);
            let l = -two_over / hl;
            let u = -two_over / hr;
            lower.push(l);
            upper.push(u);
            center.push(-(l + u));
        }
        AxisStencil {
            lower,
            upper,
            center,
        }
    }
}

#[derive(Debug, Clone)]
pub struct StencilOperator {
    grid: ComplexGrid,
    k_field: WavenumberField,
    mode: OperatorMode,
    x: AxisStencil,
    y: AxisStencil,
    diag: Vec<C64>,
    inv_abs_diag: Vec<f64>,
}

impl StencilOperator {
    pub fn new(
        grid: ComplexGrid,
        k_field: WavenumberField,
        mode: OperatorMode,
    ) -> Result<Self, OperatorError> {
        if mode.expected_kind() != grid.kind {
            return Err(OperatorError::ModeMismatch {
                mode,
                kind: grid.kind,
            });
        }
        if (k_field.n_x, k_field.n_y) != (grid.n_x, grid.n_y) {
            return Err(OperatorError::FieldMismatch {
                field: (k_field.n_x, k_field.n_y),
                grid: (grid.n_x, grid.n_y),
            });
        }
        let x = AxisStencil::new(&grid.spacing_x);
        let y = AxisStencil::new(&grid.spacing_y);
        let s = mode.shift();
        let mut diag = Vec::with_capacity(grid.len());
        let mut inv_abs_diag = Vec::with_capacity(grid.len());
        for j in 0..grid.n_y {
            for i in 0..grid.n_x {
                let k = k_field.at(i, j);
                let d = x.center[i] + y.center[j] - s * (k * k);
                let scale = x.center[i].norm() + y.center[j].norm() + s.norm() * k * k;
                if !(d.norm() > 1e-14 * scale) {
                    return Err(OperatorError::ZeroDiagonal { i, j });
                }
                diag.push(d);
                inv_abs_diag.push(1.0 / d.norm());
            }
        }
        Ok(StencilOperator {
            grid,
            k_field,
            mode,
            x,
            y,
            diag,
            inv_abs_diag,
        })
    }

    /// Rediscretisation on the coarsened grid with `k` injected.
    pub fn coarsen(&self) -> Result<Self, OperatorError> {
        StencilOperator::new(self.grid.coarsen()?, self.k_field.inject(), self.mode)
    }

    pub fn grid(&self) -> &ComplexGrid {
        &self.grid
    }

    pub fn k_field(&self) -> &WavenumberField {
        &self.k_field
    }

    pub fn mode(&self) -> OperatorMode {
        self.mode
    }

    pub fn n_x(&self) -> usize {
        self.grid.n_x
    }

    pub fn n_y(&self) -> usize {
        self.grid.n_y
    }

    pub fn len(&self) -> usize {
        self.grid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grid.is_empty()
    }

    /// Coefficient of `u_ij` in `apply`.
    pub fn diagonal(&self) -> &[C64] {
        &self.diag
    }

    /// `1 / |d_ij|`, the Jacobi scaling used by the smoothers.
    pub fn inv_abs_diagonal(&self) -> &[f64] {
        &self.inv_abs_diag
    }

    /// x-direction contribution `2 / (h_{i-1} h_i)` to the diagonal at column `i`.
    pub fn center_x(&self) -> &[C64] {
        &self.x.center
    }

    pub fn center_y(&self) -> &[C64] {
        &self.y.center
    }

    /// Stencil value at `(i, j)` from the centre value and its four neighbours.
    /// Every evaluation path goes through here so results agree bitwise.
    #[inline(always)]
    pub fn stencil_point(
        &self,
        i: usize,
        j: usize,
        center: C64,
        west: C64,
        east: C64,
        south: C64,
        north: C64,
    ) -> C64 {
        self.x.lower[i] * west
            + self.x.upper[i] * east
            + self.y.lower[j] * south
            + self.y.upper[j] * north
            + self.diag[j * self.grid.n_x + i] * center
    }

    #[inline(always)]
    fn apply_row(&self, u: &[C64], j: usize, out: &mut [C64]) {
        let nx = self.grid.n_x;
        let ny = self.grid.n_y;
        let zero = C64::new(0.0, 0.0);
        let row = &u[j * nx..(j + 1) * nx];
        let below = (j > 0).then(|| &u[(j - 1) * nx..j * nx]);
        let above = (j + 1 < ny).then(|| &u[(j + 1) * nx..(j + 2) * nx]);
        for i in 0..nx {
            let west = if i > 0 { row[i - 1] } else { zero };
            let east = if i + 1 < nx { row[i + 1] } else { zero };
            let south = below.map_or(zero, |r| r[i]);
            let north = above.map_or(zero, |r| r[i]);
            out[i] = self.stencil_point(i, j, row[i], west, east, south, north);
        }
    }

    /// `v = A u` without shape checks beyond debug assertions.
    pub fn apply_into(&self, u: &[C64], v: &mut [C64]) {
        assert_eq!(u.len(), self.len());
        assert_eq!(v.len(), self.len());
        let nx = self.grid.n_x;
        if self.len() >= PAR_THRESHOLD {
            v.par_chunks_mut(nx)
                .enumerate()
                .for_each(|(j, out)| self.apply_row(u, j, out));
        } else {
            for (j, out) in v.chunks_mut(nx).enumerate() {
                self.apply_row(u, j, out);
            }
        }
    }

    pub fn apply(&self, u: &[C64]) -> Result<Vec<C64>, OperatorError> {
        self.check_shape(u)?;
        let mut v = vec![C64::new(0.0, 0.0); self.len()];
        self.apply_into(u, &mut v);
        Ok(v)
    }

    /// `r = b - A u`, written into `r`.
    pub fn residual_into(&self, b: &[C64], u: &[C64], r: &mut [C64]) {
        self.apply_into(u, r);
        for (ri, bi) in r.iter_mut().zip(b) {
            *ri = bi - *ri;
        }
    }

    pub fn residual(&self, b: &[C64], u: &[C64]) -> Result<Vec<C64>, OperatorError> {
        self.check_shape(b)?;
        self.check_shape(u)?;
        let mut r = vec![C64::new(0.0, 0.0); self.len()];
        self.residual_into(b, u, &mut r);
        Ok(r)
    }

    pub fn check_shape(&self, u: &[C64]) -> Result<(), OperatorError> {
        if u.len() != self.len() {
            return Err(OperatorError::ShapeMismatch {
                expected: self.len(),
                got: u.len(),
            });
        }
        Ok(())
    }

    /// Dense matrix whose column `c` equals `apply(e_c)`.
    pub fn assemble_dense(&self) -> Result<DenseMatrix, OperatorError> {
        let n = self.len();
        if n > DENSE_CAP {
            return Err(OperatorError::TooLarge {
                cap: DENSE_CAP,
                got: n,
            });
        }
        let nx = self.grid.n_x;
        let mut a = DenseMatrix::zeros(n);
        for j in 0..self.grid.n_y {
            for i in 0..nx {
                let r = j * nx + i;
                a.set(r, r, self.diag[r]);
                if i > 0 {
                    a.set(r, r - 1, self.x.lower[i]);
                }
                if i + 1 < nx {
                    a.set(r, r + 1, self.x.upper[i]);
                }
                if j > 0 {
                    a.set(r, r - nx, self.y.lower[j]);
                }
                if j + 1 < self.grid.n_y {
                    a.set(r, r + nx, self.y.upper[j]);
                }
            }
        }
        Ok(a)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{
        build_stretched_grid, build_wavenumber_field, csl_grid, rotate_grid, Ramp, WavenumberSpec,
    };
    use crate::vector::{norm, norm_inf};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_field(n: usize, seed: u64) -> Vec<C64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
            .collect()
    }

    fn physical(n: usize, lw: usize, sigma: f64, k: f64) -> StencilOperator {
        let g = build_stretched_grid(n, lw, sigma, Ramp::Quadratic).unwrap();
        let f = build_wavenumber_field(&WavenumberSpec::Constant(k), &g).unwrap();
        StencilOperator::new(g, f, OperatorMode::Physical).unwrap()
    }

    fn all_modes(n: usize, lw: usize, sigma: f64, k: f64) -> Vec<StencilOperator> {
        let g = build_stretched_grid(n, lw, sigma, Ramp::Quadratic).unwrap();
        let f = build_wavenumber_field(&WavenumberSpec::Constant(k), &g).unwrap();
        vec![
            StencilOperator::new(g.clone(), f.clone(), OperatorMode::Physical).unwrap(),
            StencilOperator::new(rotate_grid(&g, 0.5).unwrap(), f.clone(), OperatorMode::ShiftedGrid)
                .unwrap(),
            StencilOperator::new(
                csl_grid(&g).unwrap(),
                f,
                OperatorMode::ShiftedLaplacian { beta: 0.5 },
            )
            .unwrap(),
        ]
    }

    #[test]
    fn zero_maps_to_zero() {
        let op = physical(9, 2, 1.0, 5.0);
        let v = op.apply(&vec![C64::new(0.0, 0.0); 81]).unwrap();
        assert!(v.iter().all(|z| *z == C64::new(0.0, 0.0)));
    }

    #[test]
    fn unit_spike_on_uniform_grid() {
        let k = 3.0;
        let op = physical(7, 0, 0.0, k);
        let h = 0.125;
        let mut u = vec![C64::new(0.0, 0.0); 49];
        u[3 * 7 + 3] = C64::new(1.0, 0.0);
        let v = op.apply(&u).unwrap();
        assert!((v[24] - C64::new(4.0 / (h * h) - k * k, 0.0)).norm() < 1e-12);
        // each neighbour sees -1/h^2 from the x or y second difference
        assert!((v[23] - C64::new(-1.0 / (h * h), 0.0)).norm() < 1e-12);
        assert!((v[31] - C64::new(-1.0 / (h * h), 0.0)).norm() < 1e-12);
    }

    #[test]
    fn diagonal_values() {
        let k = 4.0;
        let op = physical(7, 0, 0.0, k);
        let h2 = 0.125 * 0.125;
        assert!((op.diagonal()[24] - C64::new(4.0 / h2 - k * k, 0.0)).norm() < 1e-11);
        let csl = &all_modes(7, 0, 0.0, k)[2];
        let expect = C64::new(4.0 / h2, 0.0) - C64::new(1.0, 0.5) * (k * k);
        assert!((csl.diagonal()[24] - expect).norm() < 1e-11);
    }

    #[test]
    fn diagonal_matches_basis_probe() {
        for op in all_modes(6, 1, 1.0, 7.0) {
            for p in 0..op.len() {
                let mut e = vec![C64::new(0.0, 0.0); op.len()];
                e[p] = C64::new(1.0, 0.0);
                let v = op.apply(&e).unwrap();
                assert_eq!(v[p], op.diagonal()[p]);
            }
        }
    }

    #[test]
    fn apply_matches_dense_on_every_mode() {
        for (n, lw, sigma) in [(8, 2, 1.0), (7, 1, 0.5), (5, 0, 0.0), (3, 0, 0.0)] {
            for op in all_modes(n, lw, sigma, 6.0) {
                let a = op.assemble_dense().unwrap();
                let u = random_field(op.len(), 3);
                let v = op.apply(&u).unwrap();
                let w = a.matvec(&u);
                let err = norm(&crate::vector::sub(&v, &w));
                assert!(err <= 1e-12 * norm(&v), "{:?}: {err}", op.mode());
            }
        }
    }

    #[test]
    fn single_unknown_matrix() {
        let g = build_stretched_grid(3, 0, 0.0, Ramp::Linear).unwrap();
        let f = build_wavenumber_field(&WavenumberSpec::Constant(2.0), &g).unwrap();
        let op = StencilOperator::new(g, f, OperatorMode::Physical).unwrap();
        let a = op.assemble_dense().unwrap();
        assert_eq!(a.get(0, 0), op.diagonal()[0]);
        // 2/(h_l h_r) per axis with h = 1/4
        assert!((a.get(0, 0) - C64::new(64.0 - 4.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn uniform_real_matrix_is_symmetric() {
        let op = physical(6, 0, 0.0, 3.0);
        let a = op.assemble_dense().unwrap();
        for r in 0..a.n {
            for c in 0..a.n {
                assert_eq!(a.get(r, c), a.get(c, r));
            }
        }
    }

    #[test]
    fn dense_cap_enforced() {
        let op = physical(65, 0, 0.0, 1.0);
        assert_eq!(
            op.assemble_dense().unwrap_err(),
            OperatorError::TooLarge {
                cap: 4096,
                got: 4225
            }
        );
    }

    #[test]
    fn shape_errors() {
        let op = physical(5, 0, 0.0, 1.0);
        let bad = vec![C64::new(0.0, 0.0); 3];
        assert!(matches!(
            op.apply(&bad),
            Err(OperatorError::ShapeMismatch { expected: 25, got: 3 })
        ));
        assert!(op.residual(&bad, &bad).is_err());
    }

    #[test]
    fn mode_and_kind_must_agree() {
        let g = build_stretched_grid(5, 0, 0.0, Ramp::Linear).unwrap();
        let f = build_wavenumber_field(&WavenumberSpec::Constant(1.0), &g).unwrap();
        assert!(matches!(
            StencilOperator::new(g, f, OperatorMode::ShiftedGrid),
            Err(OperatorError::ModeMismatch { .. })
        ));
    }

    #[test]
    fn residual_of_zero_guess_is_rhs() {
        let op = physical(6, 1, 1.0, 4.0);
        let b = random_field(36, 9);
        let r = op.residual(&b, &vec![C64::new(0.0, 0.0); 36]).unwrap();
        assert_eq!(r, b);
    }

    #[test]
    fn second_order_consistency() {
        let err = |n: usize| {
            let op = physical(n, 0, 0.0, 1e-300);
            let h = 1.0 / (n + 1) as f64;
            let pi = std::f64::consts::PI;
            let mut u = Vec::with_capacity(n * n);
            for j in 0..n {
                for i in 0..n {
                    let (x, y) = ((i + 1) as f64 * h, (j + 1) as f64 * h);
                    u.push(C64::new((pi * x).sin() * (pi * y).sin(), 0.0));
                }
            }
            let v = op.apply(&u).unwrap();
            let diff: Vec<C64> = v
                .iter()
                .zip(&u)
                .map(|(a, b)| a - b * (2.0 * pi * pi))
                .collect();
            norm_inf(&diff)
        };
        let (e32, e64) = (err(32), err(64));
        let order = (e32 / e64).ln() / (65.0f64 / 33.0).ln();
        assert!(order >= 1.9, "observed order {order}");
    }

    #[test]
    fn shifted_grid_equals_scaled_laplacian() {
        for (lw, sigma) in [(0, 0.0), (3, 1.0)] {
            let modes = all_modes(15, lw, sigma, 9.0);
            let gamma2 = modes[1].grid().gamma * modes[1].grid().gamma;
            let u = random_field(225, 4);
            let vg = modes[1].apply(&u).unwrap();
            let vc = modes[2].apply(&u).unwrap();
            for (a, b) in vg.iter().zip(&vc) {
                assert!((a * gamma2 - b).norm() <= 1e-12 * b.norm().max(1.0));
            }
        }
    }

    #[test]
    fn laplacian_spectrum_closed_form() {
        // k -> 0 on a uniform real grid: eigenvalues 4/h^2 (sin^2(p pi h/2) + sin^2(q pi h/2))
        let n = 6;
        let op = physical(n, 0, 0.0, 1e-300);
        let a = op.assemble_dense().unwrap();
        let m = nalgebra::DMatrix::from_fn(a.n, a.n, |r, c| a.get(r, c).re);
        let mut ev: Vec<f64> = nalgebra::SymmetricEigen::new(m).eigenvalues.iter().copied().collect();
        ev.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let h = 1.0 / (n + 1) as f64;
        let pi = std::f64::consts::PI;
        let one_d: Vec<f64> = (1..=n)
            .map(|p| 4.0 / (h * h) * (p as f64 * pi * h / 2.0).sin().powi(2))
            .collect();
        let mut expect: Vec<f64> = one_d
            .iter()
            .flat_map(|a| one_d.iter().map(move |b| a + b))
            .collect();
        expect.sort_by(|a, b| a.partial_cmp(b).unwrap());
        for (a, b) in ev.iter().zip(&expect) {
            assert!((a - b).abs() <= 1e-10 * b, "{a} vs {b}");
        }
    }

    proptest! {
        #[test]
        fn apply_is_linear(seed in 0u64..1000, ar in -2.0f64..2.0, ai in -2.0f64..2.0) {
            let op = &all_modes(9, 2, 1.0, 5.0)[(seed % 3) as usize];
            let u = random_field(81, seed);
            let v = random_field(81, seed + 1);
            let alpha = C64::new(ar, ai);
            let beta = C64::new(0.3, -1.1);
            let comb: Vec<C64> = u.iter().zip(&v).map(|(a, b)| alpha * a + beta * b).collect();
            let lhs = op.apply(&comb).unwrap();
            let au = op.apply(&u).unwrap();
            let av = op.apply(&v).unwrap();
            let rhs: Vec<C64> = au.iter().zip(&av).map(|(a, b)| alpha * a + beta * b).collect();
            let err = norm(&crate::vector::sub(&lhs, &rhs));
            prop_assert!(err <= 1e-13 * norm(&rhs).max(1.0));
        }
    }

    #[test]
    fn parallel_apply_matches_serial_rows() {
        let op = physical(129, 16, 1.0, 50.0);
        let u = random_field(op.len(), 5);
        let v = op.apply(&u).unwrap();
        let mut w = vec![C64::new(0.0, 0.0); op.len()];
        for (j, out) in w.chunks_mut(129).enumerate() {
            op.apply_row(&u, j, out);
        }
        assert_eq!(v, w);
    }
}
