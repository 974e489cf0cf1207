//! Subcommand entry points and their output files.
//!
//! Files written (all CSV with a header row, columns in the order listed):
//!
//! | file | columns |
//! |---|---|
//! | `report.json` | [`RunReport`] |
//! | `residuals.csv` | iteration, relative_residual |
//! | `diagnostics.csv` | cycle, level, residual_in, residual_after_pre, residual_after_cgc, residual_after_post, cgc_ratio |
//! | `solution.csv` | i, j, x, y, re, im |
//! | `sweep.csv` | k, n, iterations, converged, wall_time |
//! | `sweep_fit.csv` | points, slope, intercept, r_squared |
//! | `spectrum_samples.csv` | level, re, im, hf |
//! | `spectrum_levels.csv` | level, n, stencils, samples, flipped, v1_re .. v3_im, w1_re .. w3_im, achieved_stability, achieved_smoothing |
//! | `bench.csv` | plan, time_ms, mlups, flops_per_point, est_bytes_per_point, arithmetic_intensity, spread, unstable_timing, max_rel_diff |

use std::fs;
use std::path::Path;

use anyhow::{bail, Context};
use helmholtz_core::blocked_kernel::{bench, BenchRow, TilePlan};
use helmholtz_core::grid::WavenumberField;
use helmholtz_core::krylov::{fgmres, gmres_baseline, KrylovError, KrylovOptions, SolveReport};
use helmholtz_core::multigrid::{build_hierarchy, CycleDiagnostics, SmootherSpec};
use helmholtz_core::smoother::SmootherKind;
use helmholtz_core::spectrum::{analyze_level, SmootherWeights, SpectrumOptions};
use helmholtz_core::C64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::config::{n_for_wavenumber, KSpec, PrecondMode, ProblemConfig};
use crate::problem::{self, hierarchy_options, physical_grid, preconditioner, preconditioner_operator, smoother_spec};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelSummary {
    pub level: usize,
    pub n: usize,
    pub smoother: String,
    pub weights: Option<SmootherWeights>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub config: ProblemConfig,
    pub layer_width: usize,
    pub levels: Vec<LevelSummary>,
    pub solve: SolveReport,
}

/// Solves the configured problem without touching the file system.
pub fn solve(cfg: &ProblemConfig) -> anyhow::Result<(Vec<C64>, RunReport)> {
    cfg.validate()?;
    let a = problem::physical_operator(cfg)?;
    let b = problem::rhs(cfg);
    let opts = KrylovOptions {
        tol: cfg.tol,
        restart: cfg.restart,
        max_iter: cfg.max_iter,
    };
    let apply = |v: &[C64]| {
        let mut out = vec![C64::new(0.0, 0.0); v.len()];
        a.apply_into(v, &mut out);
        out
    };
    let (x, report, levels) = if cfg.precond == PrecondMode::None {
        let (x, r) = gmres_baseline(apply, &b, &opts)?;
        (x, r, Vec::new())
    } else {
        let h = preconditioner(cfg, smoother_spec(cfg.smoother))?;
        let levels = h
            .levels()
            .iter()
            .enumerate()
            .map(|(l, lev)| LevelSummary {
                level: l,
                n: lev.op.n_x(),
                smoother: match lev.smoother {
                    SmootherKind::Poly3(_) => "poly3".into(),
                    SmootherKind::Gmres { m } => format!("gmres{m}"),
                },
                weights: match lev.smoother {
                    SmootherKind::Poly3(w) => Some(w),
                    SmootherKind::Gmres { .. } => None,
                },
            })
            .collect();
        let mut cycles: Vec<CycleDiagnostics> = Vec::new();
        let record = cfg.diagnostics;
        let precond = |r: &[C64]| -> Result<Vec<C64>, KrylovError> {
            if record {
                let mut d = CycleDiagnostics::default();
                let z = h.precondition(r, Some(&mut d))?;
                cycles.push(d);
                Ok(z)
            } else {
                Ok(h.precondition(r, None)?)
            }
        };
        let (x, mut r) = fgmres(apply, precond, &b, &opts)?;
        if record {
            r.diagnostics = Some(cycles);
        }
        (x, r, levels)
    };
    Ok((
        x,
        RunReport {
            config: cfg.clone(),
            layer_width: cfg.effective_layer_width(),
            levels,
            solve: report,
        },
    ))
}

fn writer(path: &Path) -> anyhow::Result<csv::Writer<fs::File>> {
    csv::Writer::from_path(path).with_context(|| format!("cannot create {}", path.display()))
}

#[derive(Serialize)]
struct ResidualRow {
    iteration: usize,
    relative_residual: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticRow {
    pub cycle: usize,
    pub level: usize,
    pub residual_in: f64,
    pub residual_after_pre: f64,
    pub residual_after_cgc: f64,
    pub residual_after_post: f64,
    pub cgc_ratio: f64,
}

#[derive(Serialize)]
struct SolutionRow {
    i: usize,
    j: usize,
    x: f64,
    y: f64,
    re: f64,
    im: f64,
}

/// Flattens per-cycle records into rows.
pub fn diagnostic_rows(cycles: &[CycleDiagnostics]) -> Vec<DiagnosticRow> {
    cycles
        .iter()
        .enumerate()
        .flat_map(|(c, d)| {
            d.levels.iter().map(move |r| DiagnosticRow {
                cycle: c,
                level: r.level,
                residual_in: r.residual_in,
                residual_after_pre: r.residual_after_pre,
                residual_after_cgc: r.residual_after_cgc,
                residual_after_post: r.residual_after_post,
                cgc_ratio: r.cgc_ratio,
            })
        })
        .collect()
}

/// Solves and writes `report.json`, `residuals.csv` and, when enabled,
/// `diagnostics.csv` and `solution.csv` into `out_dir`.
pub fn run_solve(cfg: &ProblemConfig, out_dir: &Path) -> anyhow::Result<RunReport> {
    cfg.validate()?;
    fs::create_dir_all(out_dir).with_context(|| format!("cannot create {}", out_dir.display()))?;
    let (x, report) = solve(cfg)?;
    fs::write(out_dir.join("report.json"), serde_json::to_string_pretty(&report)?)?;
    let mut w = writer(&out_dir.join("residuals.csv"))?;
    for (iteration, r) in report.solve.residual_history.iter().enumerate() {
        w.serialize(ResidualRow {
            iteration,
            relative_residual: *r,
        })?;
    }
    w.flush()?;
    if let Some(cycles) = &report.solve.diagnostics {
        let path = out_dir.join("diagnostics.csv");
        // header written by hand so it is present even when no cycle ran
        let mut w = csv::WriterBuilder::new()
            .has_headers(false)
            .from_path(&path)
            .with_context(|| format!("cannot create {}", path.display()))?;
        w.write_record([
            "cycle",
            "level",
            "residual_in",
            "residual_after_pre",
            "residual_after_cgc",
            "residual_after_post",
            "cgc_ratio",
        ])?;
        for row in diagnostic_rows(cycles) {
            w.serialize(row)?;
        }
        w.flush()?;
    }
    if cfg.write_solution {
        let n = cfg.n;
        let h = 1.0 / (n + 1) as f64;
        let mut w = writer(&out_dir.join("solution.csv"))?;
        for j in 0..n {
            for i in 0..n {
                let z = x[j * n + i];
                w.serialize(SolutionRow {
                    i,
                    j,
                    x: (i + 1) as f64 * h,
                    y: (j + 1) as f64 * h,
                    re: z.re,
                    im: z.im,
                })?;
            }
        }
        w.flush()?;
    }
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub k: f64,
    pub n: usize,
    pub iterations: usize,
    pub converged: bool,
    pub wall_time: f64,
}

/// Least-squares line through `(k, iterations)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearFit {
    pub points: usize,
    pub slope: Option<f64>,
    pub intercept: Option<f64>,
    pub r_squared: Option<f64>,
}

pub fn linear_fit(xs: &[f64], ys: &[f64]) -> LinearFit {
    let m = xs.len();
    let none = LinearFit {
        points: m,
        slope: None,
        intercept: None,
        r_squared: None,
    };
    if m < 2 {
        return none;
    }
    let mx = xs.iter().sum::<f64>() / m as f64;
    let my = ys.iter().sum::<f64>() / m as f64;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    if sxx == 0.0 {
        return none;
    }
    let slope = sxy / sxx;
    let r_squared = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
    LinearFit {
        points: m,
        slope: Some(slope),
        intercept: Some(my - slope * mx),
        r_squared: Some(r_squared),
    }
}

/// Configuration of one sweep entry.
pub fn sweep_config(base: &ProblemConfig, k: f64, ppw: f64) -> anyhow::Result<ProblemConfig> {
    let n = n_for_wavenumber(k, ppw)?;
    Ok(ProblemConfig {
        n,
        k: KSpec::Constant(k),
        ..base.clone()
    })
}

/// One solve per wave number; writes `sweep.csv` and `sweep_fit.csv`.
pub fn run_sweep(
    base: &ProblemConfig,
    k_list: &[f64],
    ppw: f64,
    out_dir: Option<&Path>,
) -> anyhow::Result<(Vec<SweepRow>, LinearFit)> {
    if k_list.is_empty() {
        bail!("k list is empty");
    }
    let mut ks = k_list.to_vec();
    ks.sort_by(f64::total_cmp);
    let configs: Vec<ProblemConfig> = ks.iter().map(|&k| sweep_config(base, k, ppw)).collect::<Result<_, _>>()?;
    for c in &configs {
        c.validate()?;
    }
    let mut rows = Vec::with_capacity(ks.len());
    for (k, c) in ks.iter().zip(&configs) {
        let (_, r) = solve(c)?;
        rows.push(SweepRow {
            k: *k,
            n: c.n,
            iterations: r.solve.iterations,
            converged: r.solve.converged,
            wall_time: r.solve.wall_time,
        });
    }
    let xs: Vec<f64> = rows.iter().map(|r| r.k).collect();
    let ys: Vec<f64> = rows.iter().map(|r| r.iterations as f64).collect();
    let fit = linear_fit(&xs, &ys);
    if let Some(dir) = out_dir {
        fs::create_dir_all(dir)?;
        let mut w = writer(&dir.join("sweep.csv"))?;
        for r in &rows {
            w.serialize(r)?;
        }
        w.flush()?;
        let mut w = writer(&dir.join("sweep_fit.csv"))?;
        w.serialize(&fit)?;
        w.flush()?;
    }
    Ok((rows, fit))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleRow {
    pub level: usize,
    pub re: f64,
    pub im: f64,
    pub hf: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumLevelRow {
    pub level: usize,
    pub n: usize,
    pub stencils: usize,
    pub samples: usize,
    pub flipped: bool,
    pub v1_re: f64,
    pub v1_im: f64,
    pub v2_re: f64,
    pub v2_im: f64,
    pub v3_re: f64,
    pub v3_im: f64,
    pub w1_re: f64,
    pub w1_im: f64,
    pub w2_re: f64,
    pub w2_im: f64,
    pub w3_re: f64,
    pub w3_im: f64,
    pub achieved_stability: f64,
    pub achieved_smoothing: f64,
}

/// Spectral analysis of every preconditioner level; `k = 0` is accepted here
/// and gives the symbol of the (rotated) Laplacian.
pub fn run_spectrum(
    cfg: &ProblemConfig,
    theta_count: usize,
    out_dir: Option<&Path>,
) -> anyhow::Result<(Vec<SampleRow>, Vec<SpectrumLevelRow>)> {
    if cfg.precond == PrecondMode::None {
        bail!("spectrum needs precond grid or csl");
    }
    let laplacian = cfg.k == KSpec::Constant(0.0);
    let checked = if laplacian {
        ProblemConfig {
            k: KSpec::Constant(1.0),
            ..cfg.clone()
        }
    } else {
        cfg.clone()
    };
    checked.validate()?;
    let g = physical_grid(cfg)?;
    let field = if laplacian {
        WavenumberField {
            n_x: g.n_x,
            n_y: g.n_y,
            values: vec![0.0; g.len()],
        }
    } else {
        problem::wavenumber_field(cfg, &g)?
    };
    let fine = preconditioner_operator(&g, field, cfg.precond, cfg.beta)?;
    let mut opts = hierarchy_options(cfg);
    opts.spectrum = SpectrumOptions {
        theta_count,
        ..SpectrumOptions::default()
    };
    let h = build_hierarchy(fine, &SmootherSpec::Poly3, &opts)?;
    let mut samples = Vec::new();
    let mut levels = Vec::new();
    for (l, lev) in h.levels().iter().enumerate() {
        let s = match &lev.spectrum {
            Some(s) => s,
            None => bail!("level {l} has no spectrum"),
        };
        for (z, hf) in s.samples.points.iter().zip(&s.samples.high_frequency) {
            samples.push(SampleRow {
                level: l,
                re: z.re,
                im: z.im,
                hf: *hf,
            });
        }
        let [v1, v2, v3] = s.triangle.v;
        let [w1, w2, w3] = s.weights.w;
        levels.push(SpectrumLevelRow {
            level: l,
            n: lev.op.n_x(),
            stencils: s.samples.stencils,
            samples: s.samples.len(),
            flipped: s.flipped,
            v1_re: v1.re,
            v1_im: v1.im,
            v2_re: v2.re,
            v2_im: v2.im,
            v3_re: v3.re,
            v3_im: v3.im,
            w1_re: w1.re,
            w1_im: w1.im,
            w2_re: w2.re,
            w2_im: w2.im,
            w3_re: w3.re,
            w3_im: w3.im,
            achieved_stability: s.weights.achieved_stability,
            achieved_smoothing: s.weights.achieved_smoothing,
        });
    }
    if let Some(dir) = out_dir {
        fs::create_dir_all(dir)?;
        let mut w = writer(&dir.join("spectrum_samples.csv"))?;
        for r in &samples {
            w.serialize(r)?;
        }
        w.flush()?;
        let mut w = writer(&dir.join("spectrum_levels.csv"))?;
        for r in &levels {
            w.serialize(r)?;
        }
        w.flush()?;
    }
    Ok((samples, levels))
}

/// Parses `8,16,32x8,full`; `full` is one tile over the grid.
pub fn parse_plans(text: &str, n: usize) -> anyhow::Result<Vec<TilePlan>> {
    let mut plans = Vec::new();
    for tok in text.split(',').map(str::trim).filter(|t| !t.is_empty()) {
        let plan = if tok == "full" {
            TilePlan::whole(n, n)
        } else if let Some((a, b)) = tok.split_once('x') {
            TilePlan {
                tile_x: a.parse().with_context(|| format!("bad plan `{tok}`"))?,
                tile_y: b.parse().with_context(|| format!("bad plan `{tok}`"))?,
                ..TilePlan::square(1)
            }
        } else {
            TilePlan::square(tok.parse().with_context(|| format!("bad plan `{tok}`"))?)
        };
        plans.push(plan);
    }
    Ok(plans)
}

/// Model checks over a ladder ordered by growing tiles: bytes per point
/// decrease and arithmetic intensity increases.
pub fn bench_model_monotone(rows: &[BenchRow]) -> bool {
    rows.windows(2).all(|p| {
        p[1].est_bytes_per_point < p[0].est_bytes_per_point && p[1].arithmetic_intensity > p[0].arithmetic_intensity
    })
}

/// Benchmarks the fused cubic smoother of the finest preconditioner level.
pub fn run_bench(
    cfg: &ProblemConfig,
    plans: &[TilePlan],
    repetitions: usize,
    out_dir: Option<&Path>,
) -> anyhow::Result<Vec<BenchRow>> {
    if plans.is_empty() {
        bail!("plan list is empty");
    }
    cfg.validate_discretisation()?;
    let mode = if cfg.precond == PrecondMode::None {
        PrecondMode::Grid
    } else {
        cfg.precond
    };
    let g = physical_grid(cfg)?;
    let f = problem::wavenumber_field(cfg, &g)?;
    let op = preconditioner_operator(&g, f, mode, cfg.beta)?;
    let weights = analyze_level(&op, 0, &SpectrumOptions::default())?.weights;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut field = || -> Vec<C64> {
        (0..op.len())
            .map(|_| C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
            .collect()
    };
    let u = field();
    let b = field();
    let rows = bench(&op, &u, &b, &weights, plans, repetitions)?;
    if let Some(dir) = out_dir {
        fs::create_dir_all(dir)?;
        let mut w = writer(&dir.join("bench.csv"))?;
        for r in &rows {
            w.serialize(r)?;
        }
        w.flush()?;
    }
    Ok(rows)
}
