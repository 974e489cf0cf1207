//! Problem configuration: defaults, key-value file parsing and validation.
//!
//! File format: one `key = value` per line, `#` starts a comment. Keys are the
//! field names below (`k` accepts `20` or `wedge:10,20,40`). Command-line flags
//! are applied after the file and win.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use helmholtz_core::grid::{Ramp, WavenumberSpec};
use helmholtz_core::multigrid::level_count;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("invalid {field}: {reason}")]
    Invalid { field: &'static str, reason: String },
    #[error("line {line}: {reason}")]
    Syntax { line: usize, reason: String },
    #[error("unknown key `{0}`")]
    UnknownKey(String),
    #[error("cannot read config file: {0}")]
    Io(String),
}

fn invalid(field: &'static str, reason: impl Into<String>) -> ConfigError {
    ConfigError::Invalid {
        field,
        reason: reason.into(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PrecondMode {
    /// Rotated-grid preconditioner.
    Grid,
    /// Complex shifted Laplacian.
    Csl,
    /// No preconditioner: restarted GMRES.
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SmootherChoice {
    Poly3,
    Gmres3,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RhsSpec {
    /// `1/h^2` at the centre node.
    PointSource,
    /// Uniform complex entries in `[-1, 1]^2` from `seed`.
    Random,
}

/// Wave number specification as written in configs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KSpec {
    Constant(f64),
    /// Bands from small `y` to large `y`, interfaces at 1/3 and 2/3.
    Wedge([f64; 3]),
}

impl KSpec {
    pub fn to_wavenumber(self) -> WavenumberSpec {
        match self {
            KSpec::Constant(k) => WavenumberSpec::Constant(k),
            KSpec::Wedge([a, b, c]) => WavenumberSpec::wedge(a, b, c),
        }
    }

    pub fn max_k(self) -> f64 {
        match self {
            KSpec::Constant(k) => k,
            KSpec::Wedge(ks) => ks.iter().copied().fold(0.0, f64::max),
        }
    }
}

impl FromStr for KSpec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let s = s.trim();
        if let Some(rest) = s.strip_prefix("wedge:") {
            let ks: Vec<f64> = rest
                .split(',')
                .map(|t| t.trim().parse::<f64>().map_err(|e| format!("`{t}`: {e}")))
                .collect::<Result<_, _>>()?;
            let ks: [f64; 3] = ks
                .try_into()
                .map_err(|v: Vec<f64>| format!("wedge needs 3 values, got {}", v.len()))?;
            Ok(KSpec::Wedge(ks))
        } else {
            s.parse::<f64>().map(KSpec::Constant).map_err(|e| format!("`{s}`: {e}"))
        }
    }
}

impl fmt::Display for KSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            KSpec::Constant(k) => write!(f, "{k}"),
            KSpec::Wedge([a, b, c]) => write!(f, "wedge:{a},{b},{c}"),
        }
    }
}

fn parse_enum<T: Copy>(field: &'static str, s: &str, table: &[(&str, T)]) -> Result<T, ConfigError> {
    let key = s.trim().to_ascii_lowercase();
    table.iter().find(|(name, _)| *name == key).map(|(_, v)| *v).ok_or_else(|| {
        let names: Vec<&str> = table.iter().map(|(n, _)| *n).collect();
        invalid(field, format!("`{s}` is not one of {}", names.join(", ")))
    })
}

impl FromStr for PrecondMode {
    type Err = ConfigError;
    fn from_str(s: &str) -> Result<Self, ConfigError> {
        parse_enum(
            "precond mode",
            s,
            &[("grid", PrecondMode::Grid), ("csl", PrecondMode::Csl), ("none", PrecondMode::None)],
        )
    }
}

impl FromStr for SmootherChoice {
    type Err = ConfigError;
    fn from_str(s: &str) -> Result<Self, ConfigError> {
        parse_enum(
            "smoother",
            s,
            &[("poly3", SmootherChoice::Poly3), ("gmres3", SmootherChoice::Gmres3)],
        )
    }
}

impl FromStr for RhsSpec {
    type Err = ConfigError;
    fn from_str(s: &str) -> Result<Self, ConfigError> {
        parse_enum(
            "rhs",
            s,
            &[("point", RhsSpec::PointSource), ("random", RhsSpec::Random)],
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProblemConfig {
    /// Interior points per axis.
    pub n: usize,
    pub k: KSpec,
    /// Absorbing layer width in intervals; `None` picks the default for `n`.
    pub layer_width: Option<usize>,
    pub sigma_max: f64,
    pub ramp: Ramp,
    pub beta: f64,
    pub precond: PrecondMode,
    pub smoother: SmootherChoice,
    /// Cap on multigrid levels; `None` coarsens down to at most 9 points.
    pub levels: Option<usize>,
    pub nu_pre: usize,
    pub nu_post: usize,
    pub tol: f64,
    pub restart: usize,
    pub max_iter: usize,
    pub rhs: RhsSpec,
    pub seed: u64,
    /// Record per-cycle coarse grid correction norms.
    pub diagnostics: bool,
    /// Also write `solution.csv`.
    pub write_solution: bool,
}

impl Default for ProblemConfig {
    fn default() -> Self {
        ProblemConfig {
            n: 63,
            k: KSpec::Constant(20.0),
            layer_width: None,
            sigma_max: 1.0,
            ramp: Ramp::Quadratic,
            beta: 0.5,
            precond: PrecondMode::Grid,
            smoother: SmootherChoice::Gmres3,
            levels: None,
            nu_pre: 1,
            nu_post: 1,
            tol: 1e-6,
            restart: 20,
            max_iter: 1000,
            rhs: RhsSpec::PointSource,
            seed: 0,
            diagnostics: false,
            write_solution: false,
        }
    }
}

fn parse_num<T: FromStr>(field: &'static str, v: &str) -> Result<T, ConfigError>
where
    T::Err: fmt::Display,
{
    v.trim().parse::<T>().map_err(|e| invalid(field, format!("`{}`: {e}", v.trim())))
}

fn parse_bool(field: &'static str, v: &str) -> Result<bool, ConfigError> {
    match v.trim().to_ascii_lowercase().as_str() {
        "true" | "yes" | "1" | "on" => Ok(true),
        "false" | "no" | "0" | "off" => Ok(false),
        other => Err(invalid(field, format!("`{other}` is not a boolean"))),
    }
}

impl ProblemConfig {
    /// Layer width after applying the default.
    pub fn effective_layer_width(&self) -> usize {
        if self.sigma_max == 0.0 && self.layer_width.is_none() {
            return 0;
        }
        self.layer_width
            .unwrap_or_else(|| helmholtz_core::grid::default_layer_width(self.n))
    }

    /// Sets one key from its textual value.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        match key.trim() {
            "n" => self.n = parse_num("n", value)?,
            "k" => self.k = value.parse().map_err(|e: String| invalid("wave number k", e))?,
            "layer_width" => {
                self.layer_width = match value.trim() {
                    "auto" | "" => None,
                    v => Some(parse_num("layer width", v)?),
                }
            }
            "sigma_max" => self.sigma_max = parse_num("sigma_max", value)?,
            "ramp" => {
                self.ramp = parse_enum(
                    "ramp",
                    value,
                    &[("linear", Ramp::Linear), ("quadratic", Ramp::Quadratic)],
                )?
            }
            "beta" => self.beta = parse_num("shift beta", value)?,
            "precond" => self.precond = value.parse()?,
            "smoother" => self.smoother = value.parse()?,
            "levels" => {
                self.levels = match value.trim() {
                    "auto" | "" => None,
                    v => Some(parse_num("levels", v)?),
                }
            }
            "nu_pre" => self.nu_pre = parse_num("nu_pre", value)?,
            "nu_post" => self.nu_post = parse_num("nu_post", value)?,
            "tol" => self.tol = parse_num("tol", value)?,
            "restart" => self.restart = parse_num("restart", value)?,
            "max_iter" => self.max_iter = parse_num("max_iter", value)?,
            "rhs" => self.rhs = value.parse()?,
            "seed" => self.seed = parse_num("seed", value)?,
            "diagnostics" => self.diagnostics = parse_bool("diagnostics", value)?,
            "write_solution" => self.write_solution = parse_bool("write_solution", value)?,
            other => return Err(ConfigError::UnknownKey(other.to_string())),
        }
        Ok(())
    }

    /// Applies `key = value` lines on top of `self`.
    pub fn apply_text(&mut self, text: &str) -> Result<(), ConfigError> {
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| ConfigError::Syntax {
                line: idx + 1,
                reason: format!("expected `key = value`, got `{line}`"),
            })?;
            self.set(key, value).map_err(|e| match e {
                ConfigError::Invalid { .. } | ConfigError::UnknownKey(_) => ConfigError::Syntax {
                    line: idx + 1,
                    reason: e.to_string(),
                },
                other => other,
            })?;
        }
        Ok(())
    }

    pub fn from_file(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Io(e.to_string()))?;
        let mut cfg = ProblemConfig::default();
        cfg.apply_text(&text)?;
        Ok(cfg)
    }

    /// Checks every constraint the grid, operator, multigrid and solver
    /// constructors impose, so a run fails before allocating anything.
    pub fn validate(&self) -> Result<(), ConfigError> {
        self.validate_discretisation()?;
        self.validate_solver()
    }

    /// Grid, wave number and shift constraints only.
    pub fn validate_discretisation(&self) -> Result<(), ConfigError> {
        if self.n < 3 {
            return Err(invalid("n", format!("need at least 3 interior points, got {}", self.n)));
        }
        match self.k {
            KSpec::Constant(k) if !(k > 0.0 && k.is_finite()) => {
                return Err(invalid("wave number k", format!("must be positive, got {k}")))
            }
            KSpec::Wedge(ks) if ks.iter().any(|k| !(*k > 0.0 && k.is_finite())) => {
                return Err(invalid("wave number k", format!("wedge values must be positive, got {ks:?}")))
            }
            _ => {}
        }
        if !(self.sigma_max >= 0.0 && self.sigma_max.is_finite()) {
            return Err(invalid("sigma_max", format!("must be >= 0, got {}", self.sigma_max)));
        }
        let lw = self.effective_layer_width();
        if 4 * lw > self.n {
            return Err(invalid(
                "layer width",
                format!("{lw} exceeds n/4 = {} (layers would overlap)", self.n / 4),
            ));
        }
        if !(self.beta > 0.0 && self.beta.is_finite()) {
            return Err(invalid("shift beta", format!("must be positive, got {}", self.beta)));
        }
        Ok(())
    }

    /// Krylov and multigrid constraints.
    pub fn validate_solver(&self) -> Result<(), ConfigError> {
        if !(self.tol > 0.0 && self.tol < 1.0) {
            return Err(invalid("tol", format!("must lie in (0, 1), got {}", self.tol)));
        }
        if self.restart == 0 {
            return Err(invalid("restart", "must be at least 1"));
        }
        if self.max_iter == 0 {
            return Err(invalid("max_iter", "must be at least 1"));
        }
        if self.levels == Some(0) {
            return Err(invalid("levels", "must be at least 1"));
        }
        if self.precond != PrecondMode::None {
            if self.nu_pre + self.nu_post == 0 {
                return Err(invalid("nu_pre/nu_post", "at least one smoothing step is required"));
            }
            let levels = level_count(self.n, 9, self.levels);
            let mut coarsest = self.n;
            for _ in 1..levels {
                coarsest = (coarsest - 1) / 2;
            }
            if coarsest > helmholtz_core::multigrid::COARSEST_CAP {
                return Err(invalid(
                    "levels",
                    format!(
                        "coarsest grid would have {coarsest} points per axis (limit {}); use n = 2^m - 1 or more levels",
                        helmholtz_core::multigrid::COARSEST_CAP
                    ),
                ));
            }
        }
        Ok(())
    }
}

/// `n` per axis keeping `k h` within 5% of `2 pi / ppw`, with `n` odd.
pub fn n_for_wavenumber(k: f64, ppw: f64) -> Result<usize, ConfigError> {
    if !(k > 0.0 && k.is_finite()) {
        return Err(invalid("wave number k", format!("must be positive, got {k}")));
    }
    if !(ppw > 0.0 && ppw.is_finite()) {
        return Err(invalid("points per wavelength", format!("must be positive, got {ppw}")));
    }
    let target = 2.0 * std::f64::consts::PI / ppw;
    // n + 1 intervals; even so that n is odd and coarsens
    let m = ((k / target / 2.0).round() as usize).max(2) * 2;
    let kh = k / m as f64;
    if (kh - target).abs() > 0.05 * target {
        return Err(invalid(
            "points per wavelength",
            format!("no odd n puts k h within 5% of {target:.4} for k = {k} (best k h = {kh:.4})"),
        ));
    }
    Ok(m - 1)
}
