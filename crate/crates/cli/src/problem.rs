//! Model problem assembly from a validated [`ProblemConfig`].

use helmholtz_core::grid::{build_stretched_grid, build_wavenumber_field, csl_grid, rotate_grid, ComplexGrid, WavenumberField};
use helmholtz_core::multigrid::{build_hierarchy, Hierarchy, HierarchyOptions, SmootherSpec};
use helmholtz_core::operator::{OperatorMode, StencilOperator};
use helmholtz_core::C64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::config::{PrecondMode, ProblemConfig, RhsSpec, SmootherChoice};

/// Physical grid of the configuration.
pub fn physical_grid(cfg: &ProblemConfig) -> anyhow::Result<ComplexGrid> {
    Ok(build_stretched_grid(cfg.n, cfg.effective_layer_width(), cfg.sigma_max, cfg.ramp)?)
}

pub fn wavenumber_field(cfg: &ProblemConfig, g: &ComplexGrid) -> anyhow::Result<WavenumberField> {
    Ok(build_wavenumber_field(&cfg.k.to_wavenumber(), g)?)
}

/// The discretised Helmholtz operator.
pub fn physical_operator(cfg: &ProblemConfig) -> anyhow::Result<StencilOperator> {
    let g = physical_grid(cfg)?;
    let f = wavenumber_field(cfg, &g)?;
    Ok(StencilOperator::new(g, f, OperatorMode::Physical)?)
}

/// Fine-level preconditioner operator for `mode` (not `None`).
pub fn preconditioner_operator(
    g: &ComplexGrid,
    field: WavenumberField,
    mode: PrecondMode,
    beta: f64,
) -> anyhow::Result<StencilOperator> {
    let op = match mode {
        PrecondMode::Grid => StencilOperator::new(rotate_grid(g, beta)?, field, OperatorMode::ShiftedGrid)?,
        PrecondMode::Csl => StencilOperator::new(csl_grid(g)?, field, OperatorMode::ShiftedLaplacian { beta })?,
        PrecondMode::None => anyhow::bail!("no preconditioner operator for precond mode none"),
    };
    Ok(op)
}

pub fn hierarchy_options(cfg: &ProblemConfig) -> HierarchyOptions {
    HierarchyOptions {
        max_levels: cfg.levels,
        nu_pre: cfg.nu_pre,
        nu_post: cfg.nu_post,
        ..HierarchyOptions::default()
    }
}

pub fn smoother_spec(choice: SmootherChoice) -> SmootherSpec {
    match choice {
        SmootherChoice::Poly3 => SmootherSpec::Poly3,
        SmootherChoice::Gmres3 => SmootherSpec::Gmres { m: 3 },
    }
}

/// Multigrid hierarchy of the configured preconditioner.
pub fn preconditioner(cfg: &ProblemConfig, smoother: SmootherSpec) -> anyhow::Result<Hierarchy> {
    let g = physical_grid(cfg)?;
    let f = wavenumber_field(cfg, &g)?;
    let fine = preconditioner_operator(&g, f, cfg.precond, cfg.beta)?;
    Ok(build_hierarchy(fine, &smoother, &hierarchy_options(cfg))?)
}

/// Right-hand side of the configuration.
pub fn rhs(cfg: &ProblemConfig) -> Vec<C64> {
    let n = cfg.n;
    match cfg.rhs {
        RhsSpec::PointSource => {
            let h = 1.0 / (n + 1) as f64;
            let mut b = vec![C64::new(0.0, 0.0); n * n];
            let c = n / 2;
            b[c * n + c] = C64::new(1.0 / (h * h), 0.0);
            b
        }
        RhsSpec::Random => {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            (0..n * n)
                .map(|_| C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
                .collect()
        }
    }
}
