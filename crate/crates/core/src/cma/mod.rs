//! Covariance matrix adaptation evolution strategy with the four tunable
//! parameters: `scale`, `popsize_factor`, `elitist` and `diagonal`.

mod params;
mod run;
mod state;

pub use params::StrategyParams;
pub use run::{generation_size, run, run_with, SmallBudget};
pub use state::{init_state, CmaState, CovarianceView, Domain, TellReport, REFERENCE_STEP};

use serde::{Deserialize, Serialize};
use std::fmt;

use crate::error::{Error, Result};

pub const SCALE_RANGE: (f64, f64) = (0.1, 10.0);
pub const POPSIZE_FACTOR_RANGE: (u32, u32) = (1, 9);

/// The tunable CMA parameters. Construction enforces the search-space domain:
/// `scale` in the open interval (0.1, 10) and `popsize_factor` in 1..=9.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawConfig", into = "RawConfig")]
pub struct CmaConfig {
    scale: f64,
    popsize_factor: u32,
    elitist: bool,
    diagonal: bool,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    scale: f64,
    popsize_factor: u32,
    elitist: bool,
    diagonal: bool,
}

impl TryFrom<RawConfig> for CmaConfig {
    type Error = Error;

    fn try_from(raw: RawConfig) -> Result<Self> {
        CmaConfig::new(raw.scale, raw.popsize_factor, raw.elitist, raw.diagonal)
    }
}

impl From<CmaConfig> for RawConfig {
    fn from(c: CmaConfig) -> Self {
        RawConfig {
            scale: c.scale,
            popsize_factor: c.popsize_factor,
            elitist: c.elitist,
            diagonal: c.diagonal,
        }
    }
}

impl CmaConfig {
    /// Untuned defaults: scale 1, factor 3, no elitism, full covariance.
    pub const DEFAULT: CmaConfig = CmaConfig {
        scale: 1.0,
        popsize_factor: 3,
        elitist: false,
        diagonal: false,
    };

    pub fn new(scale: f64, popsize_factor: u32, elitist: bool, diagonal: bool) -> Result<Self> {
        let (lo, hi) = SCALE_RANGE;
        if !(scale > lo && scale < hi) {
            return Err(Error::config(
                "scale",
                format!("{scale} outside ({lo}, {hi})"),
            ));
        }
        let (flo, fhi) = POPSIZE_FACTOR_RANGE;
        if !(flo..=fhi).contains(&popsize_factor) {
            return Err(Error::config(
                "popsize_factor",
                format!("{popsize_factor} outside [{flo}, {fhi}]"),
            ));
        }
        Ok(CmaConfig {
            scale,
            popsize_factor,
            elitist,
            diagonal,
        })
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn popsize_factor(&self) -> u32 {
        self.popsize_factor
    }

    pub fn elitist(&self) -> bool {
        self.elitist
    }

    pub fn diagonal(&self) -> bool {
        self.diagonal
    }
}

impl Default for CmaConfig {
    fn default() -> Self {
        CmaConfig::DEFAULT
    }
}

impl fmt::Display for CmaConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "CMA(scale={},popsize_factor={},elitist={},diagonal={})",
            self.scale, self.popsize_factor, self.elitist, self.diagonal
        )
    }
}

/// `floor(4 + popsize_factor * ln(dimension))`.
pub fn population_size(config: &CmaConfig, dimension: usize) -> usize {
    assert!(dimension >= 1, "dimension must be positive");
    (4.0 + f64::from(config.popsize_factor) * (dimension as f64).ln()).floor() as usize
}
