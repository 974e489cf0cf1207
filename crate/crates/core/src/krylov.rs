//! Restarted flexible GMRES with right preconditioning, and plain restarted
//! GMRES as a baseline.
//!
//! The initial guess is zero. Residual norms are taken from the Givens
//! least-squares recurrence and reported relative to `|b|`; every restart and
//! the final answer are checked against an explicitly computed residual.

use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::multigrid::{CycleDiagnostics, MultigridError};
use crate::smoother::{orthogonalize, GivensLeastSquares};
use crate::vector::{axpy, norm, sub};
use crate::C64;

#[derive(Debug, Error, PartialEq)]
pub enum KrylovError {
    #[error("invalid solver option: {0}")]
    InvalidOptions(String),
    #[error("operator returned {got} entries, expected {expected}")]
    ShapeMismatch { expected: usize, got: usize },
    #[error("preconditioner failed: {0}")]
    Preconditioner(#[from] MultigridError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KrylovOptions {
    /// Target for `|b - A x| / |b|`.
    pub tol: f64,
    pub restart: usize,
    /// Cap on the total number of Arnoldi steps.
    pub max_iter: usize,
}

impl Default for KrylovOptions {
    fn default() -> Self {
        KrylovOptions {
            tol: 1e-6,
            restart: 20,
            max_iter: 1000,
        }
    }
}

impl KrylovOptions {
    pub fn validate(&self) -> Result<(), KrylovError> {
        if !(self.tol > 0.0) || !self.tol.is_finite() {
            return Err(KrylovError::InvalidOptions(format!("tol must be positive, got {}", self.tol)));
        }
        if self.restart == 0 {
            return Err(KrylovError::InvalidOptions("restart must be at least 1".into()));
        }
        if self.max_iter == 0 {
            return Err(KrylovError::InvalidOptions("max_iter must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    Converged,
    /// `max_iter` Arnoldi steps without reaching `tol`.
    MaxIterations,
    /// A full restart cycle left the residual where it started.
    Stagnated,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub converged: bool,
    pub status: SolveStatus,
    pub iterations: usize,
    /// Relative residual before the first step and after every step.
    pub residual_history: Vec<f64>,
    /// Explicit `|b - A x| / |b|` of the returned iterate.
    pub final_residual: f64,
    pub wall_time: f64,
    /// Per-cycle multigrid records, when the caller collected them.
    pub diagnostics: Option<Vec<CycleDiagnostics>>,
}

/// FGMRES(restart) for `A x = b`; `precondition` may change between calls.
pub fn fgmres<A, P>(
    apply_a: A,
    precondition: P,
    b: &[C64],
    opts: &KrylovOptions,
) -> Result<(Vec<C64>, SolveReport), KrylovError>
where
    A: FnMut(&[C64]) -> Vec<C64>,
    P: FnMut(&[C64]) -> Result<Vec<C64>, KrylovError>,
{
    restarted(apply_a, Some(precondition), b, opts)
}

/// Unpreconditioned GMRES(restart).
pub fn gmres_baseline<A>(apply_a: A, b: &[C64], opts: &KrylovOptions) -> Result<(Vec<C64>, SolveReport), KrylovError>
where
    A: FnMut(&[C64]) -> Vec<C64>,
{
    restarted(
        apply_a,
        None::<fn(&[C64]) -> Result<Vec<C64>, KrylovError>>,
        b,
        opts,
    )
}

fn restarted<A, P>(
    mut apply_a: A,
    mut precondition: Option<P>,
    b: &[C64],
    opts: &KrylovOptions,
) -> Result<(Vec<C64>, SolveReport), KrylovError>
where
    A: FnMut(&[C64]) -> Vec<C64>,
    P: FnMut(&[C64]) -> Result<Vec<C64>, KrylovError>,
{
    opts.validate()?;
    let start = Instant::now();
    let n = b.len();
    let mut x = vec![C64::new(0.0, 0.0); n];
    let bnorm = norm(b);
    let report = |converged, status, iterations, residual_history, final_residual: f64| SolveReport {
        converged,
        status,
        iterations,
        residual_history,
        final_residual,
        wall_time: start.elapsed().as_secs_f64(),
        diagnostics: None,
    };
    if bnorm == 0.0 {
        // zero data: x = 0 is exact, relative residual taken as 0
        return Ok((x, report(true, SolveStatus::Converged, 0, vec![0.0], 0.0)));
    }
    let mut checked_a = |v: &[C64]| -> Result<Vec<C64>, KrylovError> {
        let w = apply_a(v);
        if w.len() != n {
            return Err(KrylovError::ShapeMismatch { expected: n, got: w.len() });
        }
        Ok(w)
    };

    let mut history = vec![1.0];
    let mut iterations = 0;
    let mut r = b.to_vec();
    let mut rel = 1.0;
    loop {
        let beta = norm(&r);
        let cycle_start = rel;
        let mut basis: Vec<Vec<C64>> = vec![r.iter().map(|z| z / beta).collect()];
        let mut zs: Vec<Vec<C64>> = Vec::new();
        let mut ls = GivensLeastSquares::new(beta, opts.restart);
        for _ in 0..opts.restart {
            let v = basis.last().unwrap();
            let z = match precondition.as_mut() {
                Some(p) => {
                    let z = p(v)?;
                    if z.len() != n {
                        return Err(KrylovError::ShapeMismatch { expected: n, got: z.len() });
                    }
                    z
                }
                None => v.clone(),
            };
            let mut w = checked_a(&z)?;
            zs.push(z);
            let (col, next) = orthogonalize(&basis, &mut w);
            ls.push_column(col, next);
            iterations += 1;
            history.push(ls.residual() / bnorm);
            let done = ls.residual() <= opts.tol * bnorm || iterations >= opts.max_iter;
            if done || next <= 1e-14 * beta {
                break;
            }
            basis.push(w.iter().map(|z| z / next).collect());
        }
        for (yi, z) in ls.solve().iter().zip(&zs) {
            axpy(*yi, z, &mut x);
        }
        r = sub(b, &checked_a(&x)?);
        rel = norm(&r) / bnorm;
        if rel <= opts.tol {
            return Ok((x, report(true, SolveStatus::Converged, iterations, history, rel)));
        }
        if iterations >= opts.max_iter {
            return Ok((x, report(false, SolveStatus::MaxIterations, iterations, history, rel)));
        }
        if rel >= cycle_start * (1.0 - 1e-12) {
            return Ok((x, report(false, SolveStatus::Stagnated, iterations, history, rel)));
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dense::DenseMatrix;
    use crate::grid::{build_stretched_grid, build_wavenumber_field, rotate_grid, Ramp, WavenumberSpec};
    use crate::multigrid::{build_hierarchy, HierarchyOptions, SmootherSpec};
    use crate::operator::{OperatorMode, StencilOperator};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn random_vec(n: usize, seed: u64) -> Vec<C64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| c(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))).collect()
    }

    fn random_matrix(n: usize, seed: u64) -> DenseMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut a = DenseMatrix::zeros(n);
        for r in 0..n {
            for col in 0..n {
                let v = c(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)) * 0.3;
                a.set(r, col, if r == col { v + c(n as f64 * 0.3, 0.0) } else { v });
            }
        }
        a
    }

    fn identity(v: &[C64]) -> Result<Vec<C64>, KrylovError> {
        Ok(v.to_vec())
    }

    fn physical(n: usize, lw: usize, sigma: f64, k: f64) -> (StencilOperator, StencilOperator) {
        let g = build_stretched_grid(n, lw, sigma, Ramp::Quadratic).unwrap();
        let f = build_wavenumber_field(&WavenumberSpec::Constant(k), &g).unwrap();
        let a = StencilOperator::new(g.clone(), f.clone(), OperatorMode::Physical).unwrap();
        let m = StencilOperator::new(rotate_grid(&g, 0.5).unwrap(), f, OperatorMode::ShiftedGrid).unwrap();
        (a, m)
    }

    #[test]
    fn zero_rhs() {
        let (x, rep) = fgmres(|v| v.to_vec(), identity, &[c(0.0, 0.0); 5], &KrylovOptions::default()).unwrap();
        assert!(x.iter().all(|z| *z == c(0.0, 0.0)));
        assert_eq!(rep.iterations, 0);
        assert!(rep.converged);
        let (_, rep) = gmres_baseline(|v| v.to_vec(), &[c(0.0, 0.0); 5], &KrylovOptions::default()).unwrap();
        assert_eq!(rep.iterations, 0);
    }

    #[test]
    fn identity_and_scaled_identity_take_one_step() {
        let b = random_vec(12, 1);
        let (x, rep) = fgmres(|v| v.to_vec(), identity, &b, &KrylovOptions::default()).unwrap();
        assert_eq!(rep.iterations, 1);
        assert!(rep.converged);
        assert!(norm(&sub(&x, &b)) <= 1e-14 * norm(&b));
        let (x, rep) =
            gmres_baseline(|v| v.iter().map(|z| z * 2.0).collect(), &b, &KrylovOptions::default()).unwrap();
        assert_eq!(rep.iterations, 1);
        assert!(norm(&sub(&x.iter().map(|z| z * 2.0).collect::<Vec<_>>(), &b)) <= 1e-14 * norm(&b));
    }

    #[test]
    fn invalid_options_rejected() {
        let b = random_vec(3, 2);
        for opts in [
            KrylovOptions { tol: 0.0, ..Default::default() },
            KrylovOptions { restart: 0, ..Default::default() },
            KrylovOptions { max_iter: 0, ..Default::default() },
        ] {
            assert!(matches!(
                gmres_baseline(|v| v.to_vec(), &b, &opts),
                Err(KrylovError::InvalidOptions(_))
            ));
        }
    }

    #[test]
    fn preconditioned_solve_matches_dense_lu() {
        // 16 x 16 interior grid, constant k, multigrid-preconditioned
        let (a, m) = physical(15, 3, 1.0, 8.0);
        let b = random_vec(a.len(), 3);
        let h = build_hierarchy(m, &SmootherSpec::Gmres { m: 3 }, &HierarchyOptions::default()).unwrap();
        let opts = KrylovOptions {
            tol: 1e-10,
            ..Default::default()
        };
        let (x, rep) = fgmres(|v| a.apply(v).unwrap(), |r| Ok(h.precondition(r, None)?), &b, &opts).unwrap();
        assert!(rep.converged);
        let exact = a.assemble_dense().unwrap().lu().unwrap().solve(&b).unwrap();
        assert!(norm(&sub(&x, &exact)) <= 1e-6 * norm(&exact));
    }

    #[test]
    fn residuals_monotone_within_restart() {
        let (a, m) = physical(15, 3, 1.0, 10.0);
        let h = build_hierarchy(m, &SmootherSpec::Gmres { m: 3 }, &HierarchyOptions::default()).unwrap();
        let b = random_vec(a.len(), 4);
        let opts = KrylovOptions {
            restart: 5,
            tol: 1e-8,
            ..Default::default()
        };
        let (_, rep) = fgmres(|v| a.apply(v).unwrap(), |r| Ok(h.precondition(r, None)?), &b, &opts).unwrap();
        assert!(rep.converged);
        assert_eq!(rep.residual_history[0], 1.0);
        assert_eq!(rep.residual_history.len(), rep.iterations + 1);
        for cycle in rep.residual_history[1..].chunks(5) {
            for pair in cycle.windows(2) {
                assert!(pair[1] <= pair[0] * (1.0 + 1e-12));
            }
        }
        assert!(rep.final_residual <= 1e-8);
    }

    /// Minimiser of `|b - A x|` over `x` in `P span(b, A P b, ...)` (`m` terms),
    /// from the normalised power basis and an SVD least-squares solve.
    fn right_preconditioned_oracle(a: &DenseMatrix, p: &DenseMatrix, b: &[C64], m: usize) -> Vec<C64> {
        use nalgebra::{DMatrix, DVector};
        let mut k = vec![b.iter().map(|z| z / norm(b)).collect::<Vec<_>>()];
        for _ in 1..m {
            let next = a.matvec(&p.matvec(k.last().unwrap()));
            let s = norm(&next);
            k.push(next.iter().map(|z| z / s).collect());
        }
        let n = b.len();
        let zs: Vec<Vec<C64>> = k.iter().map(|v| p.matvec(v)).collect();
        let az = DMatrix::from_fn(n, m, |r, col| a.matvec(&zs[col])[r]);
        let y = az
            .svd(true, true)
            .solve(&DVector::from_column_slice(b), 1e-14)
            .unwrap();
        let mut x = vec![c(0.0, 0.0); n];
        for (yi, z) in y.iter().zip(&zs) {
            axpy(*yi, z, &mut x);
        }
        x
    }

    #[test]
    fn fixed_preconditioner_matches_right_preconditioned_gmres() {
        let n = 30;
        let a = random_matrix(n, 5);
        let p = random_matrix(n, 6);
        let b = random_vec(n, 7);
        for m in 1..=6 {
            let opts = KrylovOptions {
                tol: 1e-300,
                restart: 50,
                max_iter: m,
            };
            let (x, rep) = fgmres(|v| a.matvec(v), |v| Ok(p.matvec(v)), &b, &opts).unwrap();
            assert_eq!(rep.iterations, m);
            let oracle = right_preconditioned_oracle(&a, &p, &b, m);
            assert!(norm(&sub(&x, &oracle)) <= 1e-10 * norm(&oracle), "m = {m}");
        }
    }

    #[test]
    fn baseline_reaches_optimal_krylov_residual() {
        let n = 24;
        let a = random_matrix(n, 8);
        let b = random_vec(n, 9);
        let eye = {
            let mut e = DenseMatrix::zeros(n);
            for i in 0..n {
                e.set(i, i, c(1.0, 0.0));
            }
            e
        };
        let opts = KrylovOptions {
            tol: 1e-300,
            restart: n,
            max_iter: n,
        };
        let (_, rep) = gmres_baseline(|v| a.matvec(v), &b, &opts).unwrap();
        for pair in rep.residual_history.windows(2) {
            assert!(pair[1] <= pair[0] * (1.0 + 1e-12));
        }
        for m in [3, 8, 15] {
            let x = right_preconditioned_oracle(&a, &eye, &b, m);
            let best = norm(&sub(&b, &a.matvec(&x))) / norm(&b);
            assert!(rep.residual_history[m] <= best + 1e-10, "m = {m}");
        }
    }

    #[test]
    fn stagnation_and_max_iter_reported_distinctly() {
        // cyclic shift: GMRES(1) makes no progress from b = e_0
        let n = 8;
        let shift = |v: &[C64]| (0..n).map(|i| v[(i + n - 1) % n]).collect::<Vec<_>>();
        let mut b = vec![c(0.0, 0.0); n];
        b[0] = c(1.0, 0.0);
        let opts = KrylovOptions {
            restart: 1,
            ..Default::default()
        };
        let (_, rep) = gmres_baseline(shift, &b, &opts).unwrap();
        assert_eq!(rep.status, SolveStatus::Stagnated);
        assert!(!rep.converged);

        let a = random_matrix(40, 10);
        let b = random_vec(40, 11);
        let opts = KrylovOptions {
            tol: 1e-14,
            restart: 3,
            max_iter: 4,
        };
        let (_, rep) = gmres_baseline(|v| a.matvec(v), &b, &opts).unwrap();
        assert_eq!(rep.status, SolveStatus::MaxIterations);
        assert_eq!(rep.iterations, 4);
    }

    #[test]
    fn report_round_trips_through_json() {
        let b = random_vec(6, 12);
        let (_, rep) = gmres_baseline(|v| v.iter().map(|z| z * 3.0).collect(), &b, &KrylovOptions::default()).unwrap();
        let s = serde_json::to_string(&rep).unwrap();
        let back: SolveReport = serde_json::from_str(&s).unwrap();
        assert_eq!(back, rep);
    }
}
