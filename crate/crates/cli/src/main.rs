use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use helmholtz_cli::config::ProblemConfig;
use helmholtz_cli::run::{parse_plans, run_bench, run_solve, run_spectrum, run_sweep};

#[derive(Parser)]
#[command(name = "helmholtz", version, about = "Multigrid-preconditioned 2D Helmholtz solver")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve one problem; exit code 0 iff converged.
    Solve {
        #[command(flatten)]
        common: Common,
        /// Also write solution.csv.
        #[arg(long)]
        solution: bool,
    },
    /// Iterations versus wave number at fixed points per wavelength.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Comma-separated wave numbers.
        #[arg(long, value_delimiter = ',', default_value = "10,20,40,80")]
        k_list: Vec<f64>,
        #[arg(long, default_value_t = 10.0)]
        ppw: f64,
    },
    /// Symbol samples, bounding triangles and weights per level.
    Spectrum {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 64)]
        theta_count: usize,
    },
    /// Throughput of the tiled cubic smoother.
    Bench {
        #[command(flatten)]
        common: Common,
        /// Tile ladder, e.g. `8,16,32,64,full` or `16x32`.
        #[arg(long, default_value = "8,16,32,64,full")]
        plans: String,
        #[arg(long, default_value_t = 5)]
        repetitions: usize,
    },
}

#[derive(Args)]
struct Common {
    /// key = value file applied before the flags.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    n: Option<usize>,
    /// Constant `20` or `wedge:10,20,40`.
    #[arg(long)]
    k: Option<String>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    sigma_max: Option<f64>,
    #[arg(long)]
    layer_width: Option<usize>,
    /// poly3 or gmres3.
    #[arg(long)]
    smoother: Option<String>,
    /// grid, csl or none.
    #[arg(long)]
    precond: Option<String>,
    #[arg(long)]
    levels: Option<usize>,
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    restart: Option<usize>,
    #[arg(long)]
    max_iter: Option<usize>,
    /// Seeds the random right-hand side and benchmark fields.
    #[arg(long)]
    seed: Option<u64>,
    /// point or random.
    #[arg(long)]
    rhs: Option<String>,
    #[arg(long, default_value = "out")]
    out_dir: PathBuf,
    /// Record coarse grid correction norms per cycle.
    #[arg(long)]
    diagnostics: bool,
}

impl Common {
    fn config(&self) -> anyhow::Result<ProblemConfig> {
        let mut cfg = match &self.config {
            Some(p) => ProblemConfig::from_file(p)?,
            None => ProblemConfig::default(),
        };
        let overrides: [(&str, Option<String>); 13] = [
            ("n", self.n.map(|v| v.to_string())),
            ("k", self.k.clone()),
            ("beta", self.beta.map(|v| v.to_string())),
            ("sigma_max", self.sigma_max.map(|v| v.to_string())),
            ("layer_width", self.layer_width.map(|v| v.to_string())),
            ("smoother", self.smoother.clone()),
            ("precond", self.precond.clone()),
            ("levels", self.levels.map(|v| v.to_string())),
            ("tol", self.tol.map(|v| v.to_string())),
            ("restart", self.restart.map(|v| v.to_string())),
            ("max_iter", self.max_iter.map(|v| v.to_string())),
            ("seed", self.seed.map(|v| v.to_string())),
            ("rhs", self.rhs.clone()),
        ];
        for (key, value) in overrides {
            if let Some(v) = value {
                cfg.set(key, &v)?;
            }
        }
        if self.diagnostics {
            cfg.diagnostics = true;
        }
        Ok(cfg)
    }
}

fn run(cli: Cli) -> anyhow::Result<bool> {
    match cli.command {
        Command::Solve { common, solution } => {
            let mut cfg = common.config()?;
            cfg.write_solution |= solution;
            let report = run_solve(&cfg, &common.out_dir)?;
            let s = &report.solve;
            println!(
                "{:?} after {} iterations, relative residual {:.3e}, {:.2} s",
                s.status, s.iterations, s.final_residual, s.wall_time
            );
            Ok(s.converged)
        }
        Command::Sweep { common, k_list, ppw } => {
            let cfg = common.config()?;
            let (rows, fit) = run_sweep(&cfg, &k_list, ppw, Some(&common.out_dir))?;
            for r in &rows {
                println!("k = {:>6} n = {:>4} iterations = {:>4} converged = {}", r.k, r.n, r.iterations, r.converged);
            }
            if let (Some(s), Some(r2)) = (fit.slope, fit.r_squared) {
                println!("slope {s:.4} iterations per unit k, R^2 = {r2:.4}");
            }
            Ok(rows.iter().all(|r| r.converged))
        }
        Command::Spectrum { common, theta_count } => {
            let cfg = common.config()?;
            let (_, levels) = run_spectrum(&cfg, theta_count, Some(&common.out_dir))?;
            for l in &levels {
                println!(
                    "level {} n = {:>3} stability {:.6} smoothing {:.4}",
                    l.level, l.n, l.achieved_stability, l.achieved_smoothing
                );
            }
            Ok(true)
        }
        Command::Bench {
            common,
            plans,
            repetitions,
        } => {
            let cfg = common.config()?;
            let plans = parse_plans(&plans, cfg.n)?;
            let rows = run_bench(&cfg, &plans, repetitions, Some(&common.out_dir))?;
            for r in &rows {
                println!(
                    "{:>9} {:>9.3} ms {:>8.1} MLUP/s intensity {:.3}{}",
                    r.plan,
                    r.time_ms,
                    r.mlups,
                    r.arithmetic_intensity,
                    if r.unstable_timing { " (timing spread > 20%)" } else { "" }
                );
            }
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
