//! Level smoothers: damped Jacobi, the cubic polynomial built from three
//! Jacobi sweeps, and GMRES(m) on the defect equation.
//!
//! Jacobi sweeps scale the residual by `1 / |d|`; the phase of the diagonal is
//! carried by the complex weights instead.

use serde::{Deserialize, Serialize};

use crate::operator::StencilOperator;
use crate::spectrum::SmootherWeights;
use crate::vector::{axpy, dot, norm};
use crate::C64;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum SmootherKind {
    Poly3(SmootherWeights),
    Gmres { m: usize },
}

/// One Jacobi point update; shared with the tiled kernel so both agree bitwise.
#[inline(always)]
pub(crate) fn jacobi_update(u: C64, b: C64, au: C64, inv_abs_diag: f64, w: C64) -> C64 {
    u + w * ((b - au) * inv_abs_diag)
}

/// `u <- u + w |D|^{-1} (b - A u)`.
pub fn damped_jacobi(op: &StencilOperator, u: &mut [C64], b: &[C64], w: C64) {
    assert_eq!(u.len(), op.len());
    assert_eq!(b.len(), op.len());
    if w == C64::new(0.0, 0.0) {
        return;
    }
    let mut au = vec![C64::new(0.0, 0.0); op.len()];
    op.apply_into(u, &mut au);
    for (((ui, bi), ai), s) in u.iter_mut().zip(b).zip(&au).zip(op.inv_abs_diagonal()) {
        *ui = jacobi_update(*ui, *bi, *ai, *s, w);
    }
}

/// Three damped Jacobi sweeps with `w1`, `w2`, `w3` in that order.
pub fn poly3_smooth(op: &StencilOperator, u: &mut [C64], b: &[C64], weights: &SmootherWeights) {
    for &w in &weights.w {
        damped_jacobi(op, u, b, w);
    }
}

/// GMRES(m) on `A c = b - A u` from `c = 0`; returns `u + c_m`.
///
/// Arnoldi with modified Gram-Schmidt; a second pass runs when the new
/// vector keeps less than `1e-8` of its norm. Stops early on happy breakdown.
pub fn gmres_smooth(op: &StencilOperator, u: &mut [C64], b: &[C64], m: usize) {
    assert!(m >= 1);
    let n = op.len();
    let r0 = op.residual(b, u).expect("shape mismatch");
    let beta = norm(&r0);
    if beta == 0.0 {
        return;
    }
    let mut basis: Vec<Vec<C64>> = Vec::with_capacity(m + 1);
    basis.push(r0.iter().map(|z| z / beta).collect());
    let mut ls = GivensLeastSquares::new(beta, m);
    let mut w = vec![C64::new(0.0, 0.0); n];
    for j in 0..m {
        op.apply_into(&basis[j], &mut w);
        let (col, next_norm) = orthogonalize(&basis, &mut w);
        ls.push_column(col, next_norm);
        if next_norm <= 1e-14 * beta {
            break;
        }
        basis.push(w.iter().map(|z| z / next_norm).collect());
    }
    for (yi, v) in ls.solve().iter().zip(&basis) {
        axpy(*yi, v, u);
    }
}

/// Modified Gram-Schmidt of `w` against `basis` with optional second pass.
/// Returns the Hessenberg column (without the subdiagonal) and `|w|` after.
pub(crate) fn orthogonalize(basis: &[Vec<C64>], w: &mut [C64]) -> (Vec<C64>, f64) {
    let before = norm(w);
    let mut col = vec![C64::new(0.0, 0.0); basis.len()];
    for (c, v) in col.iter_mut().zip(basis) {
        let h = dot(v, w);
        *c = h;
        axpy(-h, v, w);
    }
    let mut after = norm(w);
    if after < 1e-8 * before {
        for (c, v) in col.iter_mut().zip(basis) {
            let h = dot(v, w);
            *c += h;
            axpy(-h, v, w);
        }
        after = norm(w);
    }
    (col, after)
}

/// Incremental QR of the Arnoldi Hessenberg matrix by Givens rotations.
/// `residual()` is the least-squares residual `min |beta e1 - H y|` so far.
#[derive(Debug, Clone)]
pub(crate) struct GivensLeastSquares {
    r: Vec<Vec<C64>>,
    rotations: Vec<(f64, C64)>,
    g: Vec<C64>,
}

impl GivensLeastSquares {
    pub(crate) fn new(beta: f64, capacity: usize) -> Self {
        let mut g = Vec::with_capacity(capacity + 1);
        g.push(C64::new(beta, 0.0));
        GivensLeastSquares {
            r: Vec::with_capacity(capacity),
            rotations: Vec::with_capacity(capacity),
            g,
        }
    }

    /// Appends Hessenberg column `col` (length j+1) with subdiagonal `sub`.
    pub(crate) fn push_column(&mut self, mut col: Vec<C64>, sub: f64) {
        let j = col.len() - 1;
        for (i, &(c, s)) in self.rotations.iter().enumerate() {
            let (a, b) = (col[i], col[i + 1]);
            col[i] = a * c + s * b;
            col[i + 1] = -s.conj() * a + b * c;
        }
        let (c, s) = givens(col[j], C64::new(sub, 0.0));
        col[j] = col[j] * c + s * sub;
        let gj = self.g[j];
        self.g[j] = gj * c;
        self.g.push(-s.conj() * gj);
        self.rotations.push((c, s));
        self.r.push(col);
    }

    pub(crate) fn residual(&self) -> f64 {
        self.g.last().map_or(0.0, |z| z.norm())
    }

    /// Back substitution for the current least-squares coefficients.
    pub(crate) fn solve(&self) -> Vec<C64> {
        let k = self.r.len();
        let mut y = vec![C64::new(0.0, 0.0); k];
        for i in (0..k).rev() {
            let mut acc = self.g[i];
            for (jj, yj) in y.iter().enumerate().skip(i + 1) {
                acc -= self.r[jj][i] * yj;
            }
            y[i] = acc / self.r[i][i];
        }
        y
    }
}

/// Rotation `[c s; -conj(s) c]` with real `c` taking `(a, b)` to `(r, 0)`.
fn givens(a: C64, b: C64) -> (f64, C64) {
    let (na, nb) = (a.norm(), b.norm());
    if nb == 0.0 {
        return (1.0, C64::new(0.0, 0.0));
    }
    if na == 0.0 {
        return (0.0, b.conj() / nb);
    }
    let r = na.hypot(nb);
    (na / r, (a / na) * b.conj() / r)
}
