//! Choice of the three complex damped-Jacobi weights.
//!
//! The error polynomial is `p(z) = (1 - w1 z)(1 - w2 z)(1 - w3 z)`. Its maximum
//! modulus over the bounding triangle must not exceed one (stability) while its
//! maximum over the high-frequency hull is minimised (smoothing). Both maxima
//! sit on the region boundaries because `p` is analytic.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::hull::Hull;
use super::triangle::Triangle;
use super::SpectrumError;
use crate::C64;

/// Tolerance on the stability maximum.
pub const STABILITY_SLACK: f64 = 1e-8;

/// Boundary resolution used for the reported maxima.
const REPORT_PER_EDGE: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SmootherWeights {
    pub w: [C64; 3],
    /// Max `|p|` over the triangle boundary.
    pub achieved_stability: f64,
    /// Max `|p|` over the high-frequency hull boundary.
    pub achieved_smoothing: f64,
}

impl SmootherWeights {
    /// `p ≡ 1`, the trivially stable choice.
    pub fn zero() -> Self {
        SmootherWeights {
            w: [C64::new(0.0, 0.0); 3],
            achieved_stability: 1.0,
            achieved_smoothing: 1.0,
        }
    }

    pub fn eval(&self, z: C64) -> C64 {
        poly(&self.w, z)
    }

    pub fn conj(&self) -> Self {
        SmootherWeights {
            w: self.w.map(|w| w.conj()),
            ..*self
        }
    }
}

#[inline]
fn poly(w: &[C64; 3], z: C64) -> C64 {
    (C64::new(1.0, 0.0) - w[0] * z) * (C64::new(1.0, 0.0) - w[1] * z) * (C64::new(1.0, 0.0) - w[2] * z)
}

/// Max `|p(z)|` over the given samples.
pub fn poly_max_on_boundary(w: &[C64; 3], samples: &[C64]) -> f64 {
    samples
        .iter()
        .map(|&z| poly(w, z).norm_sqr())
        .fold(0.0, f64::max)
        .sqrt()
}

#[derive(Debug, Clone, Copy)]
pub struct OptimizeOptions {
    /// Total objective evaluations across all restarts.
    pub budget: usize,
    pub restarts: usize,
    pub per_edge: usize,
    pub seed: u64,
}

impl Default for OptimizeOptions {
    fn default() -> Self {
        OptimizeOptions {
            budget: 20_000,
            restarts: 8,
            per_edge: 256,
            seed: 0,
        }
    }
}

fn pack(w: &[C64; 3]) -> [f64; 6] {
    [w[0].re, w[0].im, w[1].re, w[1].im, w[2].re, w[2].im]
}

fn unpack(x: &[f64; 6]) -> [C64; 3] {
    [C64::new(x[0], x[1]), C64::new(x[2], x[3]), C64::new(x[4], x[5])]
}

/// Minimises `f` with Nelder-Mead from `start`, restarting the simplex around
/// the incumbent whenever it collapses, until `budget` evaluations are spent.
fn nelder_mead(f: &dyn Fn(&[f64; 6]) -> f64, start: [f64; 6], step: f64, budget: usize) -> ([f64; 6], f64) {
    const N: usize = 6;
    let mut evals = 0usize;
    let eval = |x: &[f64; 6], evals: &mut usize| {
        *evals += 1;
        f(x)
    };
    let mut best = (start, eval(&start, &mut evals));
    let mut step = step;
    while evals + N + 1 < budget {
        let mut simplex: Vec<([f64; 6], f64)> = Vec::with_capacity(N + 1);
        simplex.push(best);
        for d in 0..N {
            let mut x = best.0;
            x[d] += step;
            let fx = eval(&x, &mut evals);
            simplex.push((x, fx));
        }
        loop {
            simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
            let spread = simplex[N].1 - simplex[0].1;
            let size = simplex[1..]
                .iter()
                .map(|(x, _)| (0..N).map(|d| (x[d] - simplex[0].0[d]).abs()).fold(0.0, f64::max))
                .fold(0.0, f64::max);
            if evals + 2 >= budget || (spread <= 1e-13 * simplex[0].1.abs().max(1e-300) && size < 1e-9) || size < 1e-12 {
                break;
            }
            let mut centroid = [0.0; N];
            for (x, _) in &simplex[..N] {
                for d in 0..N {
                    centroid[d] += x[d] / N as f64;
                }
            }
            let worst = simplex[N];
            let along = |t: f64| {
                let mut y = [0.0; N];
                for d in 0..N {
                    y[d] = centroid[d] + t * (worst.0[d] - centroid[d]);
                }
                y
            };
            let xr = along(-1.0);
            let fr = eval(&xr, &mut evals);
            if fr < simplex[0].1 {
                let xe = along(-2.0);
                let fe = eval(&xe, &mut evals);
                simplex[N] = if fe < fr { (xe, fe) } else { (xr, fr) };
            } else if fr < simplex[N - 1].1 {
                simplex[N] = (xr, fr);
            } else {
                let (xc, fc) = if fr < worst.1 {
                    let x = along(-0.5);
                    (x, eval(&x, &mut evals))
                } else {
                    let x = along(0.5);
                    (x, eval(&x, &mut evals))
                };
                if fc < worst.1.min(fr) {
                    simplex[N] = (xc, fc);
                } else {
                    let x0 = simplex[0].0;
                    for s in simplex.iter_mut().skip(1) {
                        for d in 0..N {
                            s.0[d] = x0[d] + 0.5 * (s.0[d] - x0[d]);
                        }
                        s.1 = eval(&s.0, &mut evals);
                    }
                }
            }
        }
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        let improved = simplex[0].1 < best.1 - 1e-12;
        if simplex[0].1 < best.1 {
            best = simplex[0];
        }
        step = if improved { step * 0.5 } else { step * 0.1 };
        if step < 1e-10 {
            break;
        }
    }
    best
}

/// Largest `t` in `[0, 1]` (by bisection) with `stab(t w) <= 1 + slack`.
fn shrink_to_feasible(w: [C64; 3], boundary: &[C64]) -> [C64; 3] {
    let feasible = |t: f64| poly_max_on_boundary(&w.map(|x| x * t), boundary) <= 1.0 + STABILITY_SLACK / 2.0;
    if feasible(1.0) {
        return w;
    }
    let (mut lo, mut hi) = (0.0, 1.0);
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if feasible(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    w.map(|x| x * lo)
}

/// Weights minimising the smoothing factor on `hf_hull` subject to stability
/// on `triangle` (penalty formulation, Nelder-Mead with deterministic restarts).
pub fn optimize_weights(
    triangle: &Triangle,
    hf_hull: &Hull,
    opts: &OptimizeOptions,
) -> Result<SmootherWeights, SpectrumError> {
    if hf_hull.vertices.is_empty() {
        return Err(SpectrumError::EmptyPointSet);
    }
    let per_edge = opts.per_edge.max(256);
    let stab_pts = triangle.boundary_samples(per_edge);
    let hf_pts = hf_hull.boundary_samples(per_edge);
    let penalty = 100.0;
    let objective = |x: &[f64; 6]| {
        let w = unpack(x);
        let stab = poly_max_on_boundary(&w, &stab_pts);
        let smooth = poly_max_on_boundary(&w, &hf_pts);
        let v = smooth + penalty * (stab - 1.0).max(0.0);
        if v.is_finite() {
            v
        } else {
            f64::MAX
        }
    };

    let centroid = triangle.centroid();
    let hf_center = hf_hull.vertices.iter().sum::<C64>() / hf_hull.vertices.len() as f64;
    let one = C64::new(1.0, 0.0);
    let mut starts: Vec<[C64; 3]> = Vec::new();
    let omega = 2.0 / 3.0 / centroid.norm().max(1e-300);
    starts.push([C64::new(omega, 0.0); 3]);
    let wc = (2.0 / 3.0) * one / centroid;
    starts.push([wc; 3]);
    starts.push([one / hf_center; 3]);
    // roots spread over the high-frequency region
    let far = hf_hull
        .vertices
        .iter()
        .copied()
        .max_by(|a, b| (a - hf_center).norm().total_cmp(&(b - hf_center).norm()))
        .unwrap();
    let spread = far - hf_center;
    let roots = [hf_center - spread * 0.85, hf_center, hf_center + spread * 0.85];
    if roots.iter().all(|z| z.norm() > 1e-12) {
        starts.push(roots.map(|z| one / z));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let restarts = opts.restarts.max(8);
    while starts.len() < restarts {
        let base = starts[starts.len() % 3.min(starts.len())];
        let jitter = |rng: &mut ChaCha8Rng, w: C64| {
            w * C64::from_polar(rng.gen_range(0.5..1.5), rng.gen_range(-0.6..0.6))
        };
        starts.push(base.map(|w| jitter(&mut rng, w)));
    }

    let per_restart = (opts.budget / starts.len()).max(50);
    let scale = wc.norm().max(1e-12);
    let mut best: Option<([f64; 6], f64)> = None;
    for s in &starts {
        let start = pack(&shrink_to_feasible(*s, &stab_pts));
        let (x, fx) = nelder_mead(&objective, start, 0.2 * scale, per_restart);
        if best.map_or(true, |b| fx < b.1) {
            best = Some((x, fx));
        }
    }
    let (x, _) = best.expect("at least one restart");
    let fine_stab = triangle.boundary_samples(REPORT_PER_EDGE);
    let w = shrink_to_feasible(unpack(&x), &fine_stab);
    let achieved_stability = poly_max_on_boundary(&w, &fine_stab);
    let achieved_smoothing = poly_max_on_boundary(&w, &hf_hull.boundary_samples(REPORT_PER_EDGE));
    let weights = SmootherWeights {
        w,
        achieved_stability,
        achieved_smoothing,
    };
    if !(achieved_stability <= 1.0 + STABILITY_SLACK) || !achieved_smoothing.is_finite() {
        return Err(SpectrumError::UnstableLevel {
            level: None,
            best: weights,
        });
    }
    Ok(weights)
}
