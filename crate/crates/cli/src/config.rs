use std::path::{Path, PathBuf};

use dkp_core::fields::{Grid, GridSpec};
use dkp_core::{Error, Result};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Command {
    Analyze,
    Transform,
    Verify,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    /// Full pipeline on a matrix field.
    Main,
    /// Diagonal variant on the lower-right scalar.
    Rpcor,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub command: Command,
    /// Fixture names or paths to field files.
    pub inputs: Vec<String>,
    pub n: usize,
    pub x_count: usize,
    #[serde(rename = "T")]
    pub top: f64,
    pub t_min: f64,
    pub m: usize,
    pub eps0: Option<f64>,
    pub skip_mollify: bool,
    pub n_max: usize,
    pub variant: Variant,
    pub delta: f64,
    #[serde(rename = "T_s")]
    pub solver_height: f64,
    pub q: f64,
    pub apertures: Vec<f64>,
    pub out_dir: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            command: Command::Analyze,
            inputs: Vec::new(),
            n: 2,
            x_count: 64,
            top: 0.5,
            t_min: 0.5 / 64.0,
            m: 4,
            eps0: None,
            skip_mollify: false,
            n_max: dkp_core::pipeline::DEFAULT_N_MAX,
            variant: Variant::Main,
            delta: 1.0 / 32.0,
            solver_height: 0.5,
            q: 2.0,
            apertures: vec![2.0, 4.0],
            out_dir: PathBuf::from("dkp-out"),
        }
    }
}

fn bad(key: &str, reason: impl Into<String>) -> Error {
    Error::InvalidInput {
        key: key.into(),
        reason: reason.into(),
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| bad("config", e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        if !(2..=3).contains(&self.n) {
            return Err(bad("n", "must be 2 or 3"));
        }
        if self.x_count < 4 {
            return Err(bad("x_count", "must be at least 4"));
        }
        if !(self.top > 0.0 && self.top.is_finite()) {
            return Err(bad("T", "must be positive"));
        }
        if !(self.t_min > 0.0 && self.t_min <= self.top) {
            return Err(bad("t_min", "must lie in (0, T]"));
        }
        if self.m < 1 {
            return Err(bad("m", "must be at least 1"));
        }
        if let Some(e) = self.eps0 {
            if !(e > 0.0 && e <= 0.5) {
                return Err(bad("eps0", "must lie in (0, 1/2]"));
            }
        }
        if self.n_max < 1 {
            return Err(bad("n_max", "must be at least 1"));
        }
        if !(self.delta > 0.0 && self.delta <= 0.25) {
            return Err(bad("delta", "must lie in (0, 1/4]"));
        }
        if !(self.solver_height > 0.0 && self.solver_height.is_finite()) {
            return Err(bad("T_s", "must be positive"));
        }
        if !(self.q >= 1.0 && self.q.is_finite()) {
            return Err(bad("q", "must be at least 1"));
        }
        if let Some(k) = self.apertures.iter().find(|k| !(**k >= 1.0 && k.is_finite())) {
            return Err(bad("apertures", format!("aperture {k} is below 1")));
        }
        Ok(())
    }

    pub fn grid(&self) -> Result<Grid> {
        Grid::from_spec(&GridSpec {
            n: self.n,
            x_count: self.x_count,
            top: self.top,
            t_min: self.t_min,
            m: self.m,
        })
    }
}
