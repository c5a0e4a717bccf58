//! Run configuration: a flat TOML file plus one `[tolerances]` table.
//!
//! Every key is optional and falls back to a default, unknown keys are
//! rejected, and validation reports the offending field by name so a bad
//! file fails fast with an actionable message.

use qbm_core::fock::DENSE_DIM_CAP;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("failed to read {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("failed to parse config: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("field `q` = {0}: the deformation parameter must lie in [0, 1)")]
    QOutOfRange(f64),
    #[error("field `gamma` = {0}: the roughness exponent must lie strictly between 1/3 and 1/2")]
    GammaOutOfRange(f64),
    #[error("field `d` = {0}: the time grid needs at least one segment")]
    EmptyGrid(usize),
    #[error("field `n` = {0}: the truncation depth must be at least 1")]
    BadDepth(usize),
    #[error(
        "fields `d` = {d}, `n` = {n}: truncated space dimension {dim} exceeds the dense cap {cap}"
    )]
    DimensionCap {
        d: usize,
        n: usize,
        dim: usize,
        cap: usize,
    },
    #[error("field `n_max` = {n_max}: level {n_max} needs {cells} cells but `d` = {d}")]
    LevelTooFine { n_max: usize, cells: usize, d: usize },
    #[error("field `k` = {0}: plot grids need at least 2 points")]
    BadGridPoints(usize),
    #[error("field `r_max` = {0}: moment tables go up to word length 12")]
    BadWordLength(usize),
    #[error("field `tolerances.{name}` = {value}: tolerances must be positive and finite")]
    BadTolerance { name: String, value: f64 },
}

/// Tolerance knobs, one per quantitative clause of the check suite. The
/// defaults are the acceptance values; a config can only make them stricter
/// or looser wholesale, never skip a clause.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct Tolerances {
    /// Pairing oracle vs Fock matrices, absolute.
    pub oracle: f64,
    /// Crossing moment identity for nested increments, absolute.
    pub increment_moment: f64,
    /// Marginal density normalization error.
    pub density_norm: f64,
    /// Sup distance to the semicircle density at q = 0.
    pub density_semicircle: f64,
    /// Quadrature moments vs the pairing oracle.
    pub density_moment: f64,
    /// Relative slack on the 1/2-Holder bound.
    pub holder: f64,
    /// Chen identity defect, absolute.
    pub chen: f64,
    /// Upper bound on consecutive Levy-area defect ratios.
    pub levy_ratio: f64,
    /// Second quantization of the unit, absolute.
    pub gamma_unit: f64,
    /// Free-case collapse to the state, absolute.
    pub gamma_free: f64,
    /// Conditioning-window invariance, absolute.
    pub gamma_window: f64,
    /// Discretized Ito isometry defect, absolute.
    pub isometry: f64,
    /// Ito-Stratonovich residual at the finest level, relative to L2 scale.
    pub correction_rel: f64,
    /// State of the Stratonovich area for the unit tensor, absolute.
    pub correction_state: f64,
    /// Minimal squared-defect shrink factor per mesh halving.
    pub quadratic_factor: f64,
    /// Scalar rough integrals vs closed forms, absolute.
    pub scalar_integral: f64,
    /// Picard fixed-point residual.
    pub picard_residual: f64,
    /// Scalar RDE vs the classical ODE oracle, absolute.
    pub scalar_rde: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            oracle: 1e-10,
            increment_moment: 1e-10,
            density_norm: 1e-8,
            density_semicircle: 1e-10,
            density_moment: 1e-6,
            holder: 1e-8,
            chen: 1e-12,
            levy_ratio: 0.85,
            gamma_unit: 1e-10,
            gamma_free: 1e-8,
            gamma_window: 1e-8,
            isometry: 1e-8,
            correction_rel: 1e-2,
            correction_state: 2e-3,
            quadratic_factor: 1.8,
            scalar_integral: 1e-10,
            picard_residual: 1e-9,
            scalar_rde: 1e-8,
        }
    }
}

impl Tolerances {
    /// Named view, in a fixed order, for reports and validation.
    pub fn entries(&self) -> Vec<(&'static str, f64)> {
        vec![
            ("oracle", self.oracle),
            ("increment_moment", self.increment_moment),
            ("density_norm", self.density_norm),
            ("density_semicircle", self.density_semicircle),
            ("density_moment", self.density_moment),
            ("holder", self.holder),
            ("chen", self.chen),
            ("levy_ratio", self.levy_ratio),
            ("gamma_unit", self.gamma_unit),
            ("gamma_free", self.gamma_free),
            ("gamma_window", self.gamma_window),
            ("isometry", self.isometry),
            ("correction_rel", self.correction_rel),
            ("correction_state", self.correction_state),
            ("quadratic_factor", self.quadratic_factor),
            ("scalar_integral", self.scalar_integral),
            ("picard_residual", self.picard_residual),
            ("scalar_rde", self.scalar_rde),
        ]
    }
}

/// One run of the harness: model parameters, grid sizes, output location
/// and the RNG seed. Checks with fixed published sizes ignore `d`/`n` and
/// only take `q`, `gamma`, tolerances and the seed from here.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// Deformation parameter, `0 <= q < 1`.
    pub q: f64,
    /// Base time grid segments on `[0, 1]`.
    pub d: usize,
    /// Fock truncation depth.
    #[serde(alias = "N")]
    pub n: usize,
    /// Finest dyadic level for decay and comparison sweeps.
    pub n_max: usize,
    /// Roughness exponent, `1/3 < gamma < 1/2`.
    pub gamma: f64,
    /// Largest word length in moment tables.
    pub r_max: usize,
    /// Number of abscissas in density plots.
    #[serde(alias = "K")]
    pub k: usize,
    /// Where CSV and JSON artifacts go; `--out` overrides.
    pub output_dir: Option<PathBuf>,
    /// Root seed; each check derives its own stream from this and its name.
    pub seed: u64,
    pub tolerances: Tolerances,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            q: 0.5,
            d: 8,
            n: 2,
            n_max: 3,
            gamma: 0.4,
            r_max: 6,
            k: 1001,
            output_dir: None,
            seed: 0,
            tolerances: Tolerances::default(),
        }
    }
}

/// Truncated Fock dimension `1 + d + .. + d^n`.
pub fn space_dim(d: usize, n: usize) -> usize {
    let mut dim = 1usize;
    let mut level = 1usize;
    for _ in 0..n {
        level = level.saturating_mul(d);
        dim = dim.saturating_add(level);
    }
    dim
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, ConfigError> {
        let cfg: RunConfig = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_toml_str(&text)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if !(0.0..1.0).contains(&self.q) || !self.q.is_finite() {
            return Err(ConfigError::QOutOfRange(self.q));
        }
        if !(self.gamma > 1.0 / 3.0 && self.gamma < 0.5) {
            return Err(ConfigError::GammaOutOfRange(self.gamma));
        }
        if self.d == 0 {
            return Err(ConfigError::EmptyGrid(self.d));
        }
        if self.n == 0 {
            return Err(ConfigError::BadDepth(self.n));
        }
        let dim = space_dim(self.d, self.n);
        if dim > DENSE_DIM_CAP {
            return Err(ConfigError::DimensionCap {
                d: self.d,
                n: self.n,
                dim,
                cap: DENSE_DIM_CAP,
            });
        }
        let cells = 1usize
            .checked_shl(self.n_max as u32)
            .unwrap_or(usize::MAX);
        if cells > self.d || self.d % cells != 0 {
            return Err(ConfigError::LevelTooFine {
                n_max: self.n_max,
                cells,
                d: self.d,
            });
        }
        if self.k < 2 {
            return Err(ConfigError::BadGridPoints(self.k));
        }
        if self.r_max == 0 || self.r_max > 12 {
            return Err(ConfigError::BadWordLength(self.r_max));
        }
        for (name, value) in self.tolerances.entries() {
            if !(value.is_finite() && value > 0.0) {
                return Err(ConfigError::BadTolerance {
                    name: name.to_string(),
                    value,
                });
            }
        }
        Ok(())
    }
}
