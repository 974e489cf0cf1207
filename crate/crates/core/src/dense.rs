//! Dense complex matrices and LU factorisation with partial pivoting.
//!
//! Used for the coarsest multigrid level and as the oracle format for small
//! operators.

use thiserror::Error;

use crate::C64;

#[derive(Debug, Error, PartialEq)]
pub enum DenseError {
    #[error("matrix is singular to working precision at column {0}")]
    Singular(usize),
    #[error("right-hand side has length {got}, expected {expected}")]
    ShapeMismatch { expected: usize, got: usize },
}

/// Square matrix stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix {
    pub n: usize,
    pub data: Vec<C64>,
}

impl DenseMatrix {
    pub fn zeros(n: usize) -> Self {
        DenseMatrix {
            n,
            data: vec![C64::new(0.0, 0.0); n * n],
        }
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> C64 {
        self.data[r * self.n + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: C64) {
        self.data[r * self.n + c] = v;
    }

    pub fn matvec(&self, x: &[C64]) -> Vec<C64> {
        assert_eq!(x.len(), self.n);
        self.data
            .chunks_exact(self.n)
            .map(|row| row.iter().zip(x).map(|(a, b)| a * b).sum())
            .collect()
    }

    pub fn lu(&self) -> Result<LuFactors, DenseError> {
        LuFactors::factor(self.clone())
    }
}

/// `P A = L U` packed in one matrix; `L` has a unit diagonal.
#[derive(Debug, Clone)]
pub struct LuFactors {
    lu: DenseMatrix,
    perm: Vec<usize>,
}

impl LuFactors {
    pub fn factor(mut a: DenseMatrix) -> Result<Self, DenseError> {
        let n = a.n;
        let mut perm: Vec<usize> = (0..n).collect();
        let scale = a.data.iter().map(|z| z.norm()).fold(0.0, f64::max);
        for k in 0..n {
            let (p, pmax) = (k..n)
                .map(|r| (r, a.get(r, k).norm()))
                .fold((k, -1.0), |acc, x| if x.1 > acc.1 { x } else { acc });
            if pmax <= f64::EPSILON * scale * n as f64 || pmax == 0.0 {
                return Err(DenseError::Singular(k));
            }
            if p != k {
                for c in 0..n {
                    a.data.swap(k * n + c, p * n + c);
                }
                perm.swap(k, p);
            }
            let pivot = a.get(k, k);
            for r in k + 1..n {
                let l = a.get(r, k) / pivot;
                a.set(r, k, l);
                if l == C64::new(0.0, 0.0) {
                    continue;
                }
                let (top, bottom) = a.data.split_at_mut(r * n);
                let krow = &top[k * n..k * n + n];
                let rrow = &mut bottom[..n];
                for c in k + 1..n {
                    rrow[c] -= l * krow[c];
                }
            }
        }
        Ok(LuFactors { lu: a, perm })
    }

    pub fn dim(&self) -> usize {
        self.lu.n
    }

    /// Forward and back substitution.
    pub fn solve(&self, rhs: &[C64]) -> Result<Vec<C64>, DenseError> {
        let n = self.lu.n;
        if rhs.len() != n {
            return Err(DenseError::ShapeMismatch {
                expected: n,
                got: rhs.len(),
            });
        }
        let mut x: Vec<C64> = self.perm.iter().map(|&p| rhs[p]).collect();
        for r in 0..n {
            let row = &self.lu.data[r * n..r * n + r];
            let s: C64 = row.iter().zip(&x[..r]).map(|(a, b)| a * b).sum();
            x[r] -= s;
        }
        for r in (0..n).rev() {
            let row = &self.lu.data[r * n + r + 1..(r + 1) * n];
            let s: C64 = row.iter().zip(&x[r + 1..]).map(|(a, b)| a * b).sum();
            x[r] = (x[r] - s) / self.lu.get(r, r);
        }
        Ok(x)
    }
}
