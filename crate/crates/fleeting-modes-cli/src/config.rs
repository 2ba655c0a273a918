//! Run configuration with three-layer precedence: command-line flags over
//! config file over built-in defaults. The fully resolved configuration is
//! echoed into every command's manifest for auditability.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::CliError;

/// Environment variable holding the default output directory.
pub const OUT_DIR_ENV: &str = "FLEETING_MODES_OUT_DIR";

/// Fully resolved configuration.
#[derive(Debug, Clone, Serialize)]
pub struct RunConfig {
    // data sources
    pub data: Option<PathBuf>,
    pub open: Option<PathBuf>,
    pub high: Option<PathBuf>,
    pub low: Option<PathBuf>,
    pub close: Option<PathBuf>,
    pub returns: Option<PathBuf>,
    /// Universe selection; `None` keeps every asset in the file.
    pub assets: Option<Vec<String>>,
    pub delimiter: char,

    // window geometry: explicit lengths win over ratios
    pub t_in: Option<usize>,
    pub t_out: Option<usize>,
    pub q_in: f64,
    pub q_out: f64,

    // numerics
    pub vol_floor: f64,
    pub eigenvalue_floor: f64,
    pub edge_constant: f64,

    // analytics
    pub top_fraction: f64,
    pub bottom_fraction: f64,
    pub halflife: f64,
    pub lag: usize,
    pub n_max: usize,
    pub null_reps: usize,
    pub null_dates: usize,
    pub top_k_modes: usize,
    pub grid: usize,

    // simulation
    pub n_assets: Option<usize>,
    pub t_total: Option<usize>,
    pub scenario: String,
    pub shift_at: Option<usize>,
    pub shift_variance: Option<f64>,
    pub price_scale: f64,

    // calibration
    pub calib_reps: usize,
    pub target_quantile: f64,

    pub seed: u64,
    pub out_dir: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            data: None,
            open: None,
            high: None,
            low: None,
            close: None,
            returns: None,
            assets: None,
            delimiter: ',',
            t_in: None,
            t_out: None,
            q_in: 0.25,
            q_out: 4.0,
            vol_floor: 1e-4,
            eigenvalue_floor: 1e-12,
            edge_constant: fleeting_modes::null_model::DEFAULT_EDGE_CONSTANT,
            top_fraction: 0.10,
            bottom_fraction: 0.90,
            halflife: 100.0,
            lag: 1,
            n_max: 30,
            null_reps: 8,
            null_dates: 16,
            top_k_modes: 2,
            grid: 2001,
            n_assets: None,
            t_total: None,
            scenario: "identity".into(),
            shift_at: None,
            shift_variance: None,
            price_scale: 0.01,
            calib_reps: 200,
            target_quantile: 0.90,
            seed: 0,
            out_dir: std::env::var_os(OUT_DIR_ENV)
                .map(PathBuf::from)
                .unwrap_or_else(|| PathBuf::from("out")),
        }
    }
}

/// Config-file schema: every field optional, unknown keys rejected.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub data: Option<PathBuf>,
    pub open: Option<PathBuf>,
    pub high: Option<PathBuf>,
    pub low: Option<PathBuf>,
    pub close: Option<PathBuf>,
    pub returns: Option<PathBuf>,
    pub assets: Option<Vec<String>>,
    pub delimiter: Option<char>,
    pub t_in: Option<usize>,
    pub t_out: Option<usize>,
    pub q_in: Option<f64>,
    pub q_out: Option<f64>,
    pub vol_floor: Option<f64>,
    pub eigenvalue_floor: Option<f64>,
    pub edge_constant: Option<f64>,
    pub top_fraction: Option<f64>,
    pub bottom_fraction: Option<f64>,
    pub halflife: Option<f64>,
    pub lag: Option<usize>,
    pub n_max: Option<usize>,
    pub null_reps: Option<usize>,
    pub null_dates: Option<usize>,
    pub top_k_modes: Option<usize>,
    pub grid: Option<usize>,
    pub n_assets: Option<usize>,
    pub t_total: Option<usize>,
    pub scenario: Option<String>,
    pub shift_at: Option<usize>,
    pub shift_variance: Option<f64>,
    pub price_scale: Option<f64>,
    pub calib_reps: Option<usize>,
    pub target_quantile: Option<f64>,
    pub seed: Option<u64>,
    pub out_dir: Option<PathBuf>,
}

impl FileConfig {
    pub fn load(path: &std::path::Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            CliError::InvalidConfig(format!("cannot read config {}: {e}", path.display()))
        })?;
        toml::from_str(&text).map_err(|e| {
            CliError::InvalidConfig(format!("cannot parse config {}: {e}", path.display()))
        })
    }
}

impl RunConfig {
    /// Applies a config-file layer on top of the current values.
    pub fn apply_file(&mut self, file: FileConfig) {
        macro_rules! keep_some {
            ($($field:ident),* $(,)?) => {
                $(if file.$field.is_some() { self.$field = file.$field; })*
            };
        }
        macro_rules! set_value {
            ($($field:ident),* $(,)?) => {
                $(if let Some(v) = file.$field { self.$field = v; })*
            };
        }
        keep_some!(
            data, open, high, low, close, returns, assets, t_in, t_out, n_assets, t_total,
            shift_at, shift_variance,
        );
        set_value!(
            delimiter, q_in, q_out, vol_floor, eigenvalue_floor, edge_constant, top_fraction,
            bottom_fraction, halflife, lag, n_max, null_reps, null_dates, top_k_modes, grid,
            scenario, price_scale, calib_reps, target_quantile, seed, out_dir,
        );
    }

    /// Base validation shared by all commands.
    pub fn validate(&self) -> Result<(), CliError> {
        for (name, v) in [
            ("vol_floor", self.vol_floor),
            ("edge_constant", self.edge_constant),
            ("halflife", self.halflife),
            ("price_scale", self.price_scale),
        ] {
            if !(v > 0.0) {
                return Err(CliError::InvalidConfig(format!("{name} must be positive")));
            }
        }
        if !(self.eigenvalue_floor >= 0.0) {
            return Err(CliError::InvalidConfig(
                "eigenvalue_floor must be nonnegative".into(),
            ));
        }
        if !(self.q_in > 0.0 && self.q_in < 1.0) {
            return Err(CliError::InvalidConfig(format!(
                "q_in must lie in (0, 1), got {}",
                self.q_in
            )));
        }
        if !(self.q_out > 0.0) {
            return Err(CliError::InvalidConfig("q_out must be positive".into()));
        }
        if !(self.top_fraction > 0.0 && self.top_fraction < 1.0) {
            return Err(CliError::InvalidConfig(
                "top_fraction must lie in (0, 1)".into(),
            ));
        }
        if !(self.bottom_fraction > 0.0 && self.bottom_fraction <= 1.0) {
            return Err(CliError::InvalidConfig(
                "bottom_fraction must lie in (0, 1]".into(),
            ));
        }
        if !(self.target_quantile > 0.0 && self.target_quantile < 1.0) {
            return Err(CliError::InvalidConfig(
                "target_quantile must lie in (0, 1)".into(),
            ));
        }
        if self.grid < 2 {
            return Err(CliError::InvalidConfig("grid must be at least 2".into()));
        }
        Ok(())
    }

    /// Resolves `(t_in, t_out)` for a universe of size `n`, checking that the
    /// in-sample window exceeds the universe.
    pub fn windows_for(&self, n: usize) -> Result<(usize, usize), CliError> {
        let (t_in, t_out) = match (self.t_in, self.t_out) {
            (Some(a), Some(b)) => (a, b),
            (None, None) => (
                (n as f64 / self.q_in).round() as usize,
                ((n as f64 / self.q_out).round() as usize).max(1),
            ),
            _ => {
                return Err(CliError::InvalidConfig(
                    "set both t_in and t_out, or neither (ratios are used then)".into(),
                ))
            }
        };
        if t_in <= n {
            return Err(CliError::InvalidConfig(format!(
                "t_in = {t_in} must exceed the universe size {n} (q_in < 1)"
            )));
        }
        if t_out == 0 {
            return Err(CliError::InvalidConfig("t_out must be positive".into()));
        }
        Ok((t_in, t_out))
    }
}
