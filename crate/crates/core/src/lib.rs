//! Black-box optimization toolkit around a parameterized CMA-ES: benchmark
//! suites, an elitist iterated-racing configurator, majority-vote
//! validation, the MetaCMA selection wizard and an anytime comparison
//! harness.

pub mod baselines;
pub mod cma;
pub mod error;
pub mod evaluation;
pub mod racing;
pub mod record;
pub mod seed;
pub mod store;
pub mod suites;
pub mod validation;
pub mod wizard;

pub use baselines::{run_baseline, Baseline};
pub use cma::{population_size, CmaConfig};
pub use error::{Error, Result};
pub use record::{Optimizer, RunRecord};
pub use suites::{Block, InstanceSpec, SuiteName, SuiteSpec};
pub use wizard::{meta_cma_select, wizard_run, ConfigName, ConfigRegistry, ProblemDescriptor};
