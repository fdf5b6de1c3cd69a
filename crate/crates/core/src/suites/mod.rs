//! BBOB-style benchmark suites.
//!
//! A suite is a context (ranges of dimension and budget, worker count and
//! boundedness) from which blocks of instances are drawn. A block fixes the
//! dimension, rotation, budget and context, and contains exactly one instance
//! per catalog function.

pub mod functions;
pub mod instance;
mod rotation;

pub use functions::{function_catalog, FunctionClass, FunctionDescriptor, FunctionId};
pub use instance::{evaluate, InstanceSpec, Interval, Problem};
pub use rotation::random_rotation;

use rand::Rng;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::seed::{derive_seed, rng_from};

/// Default upper dimension for the high-dimensional suite.
pub const HD_DEFAULT_CAP: usize = 1000;
/// Hard upper dimension for the high-dimensional suite.
pub const HD_MAX_DIMENSION: usize = 3000;
/// Box used by the box-constrained suites.
pub const STANDARD_BOX: Interval = Interval::new(-5.0, 5.0);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SuiteName {
    #[serde(rename = "YABBOB")]
    Yabbob,
    #[serde(rename = "YASMALLBBOB")]
    Yasmallbbob,
    #[serde(rename = "YATUNINGBBOB")]
    Yatuningbbob,
    #[serde(rename = "YAPARABBOB")]
    Yaparabbob,
    #[serde(rename = "YABOUNDEDBBOB")]
    Yaboundedbbob,
    #[serde(rename = "YABIGBBOB")]
    Yabigbbob,
    #[serde(rename = "YABOXBBOB")]
    Yaboxbbob,
    #[serde(rename = "YAHDBBOB")]
    Yahdbbob,
}

impl SuiteName {
    pub const ALL: [SuiteName; 8] = [
        SuiteName::Yabbob,
        SuiteName::Yasmallbbob,
        SuiteName::Yatuningbbob,
        SuiteName::Yaparabbob,
        SuiteName::Yaboundedbbob,
        SuiteName::Yabigbbob,
        SuiteName::Yaboxbbob,
        SuiteName::Yahdbbob,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            SuiteName::Yabbob => "YABBOB",
            SuiteName::Yasmallbbob => "YASMALLBBOB",
            SuiteName::Yatuningbbob => "YATUNINGBBOB",
            SuiteName::Yaparabbob => "YAPARABBOB",
            SuiteName::Yaboundedbbob => "YABOUNDEDBBOB",
            SuiteName::Yabigbbob => "YABIGBBOB",
            SuiteName::Yaboxbbob => "YABOXBBOB",
            SuiteName::Yahdbbob => "YAHDBBOB",
        }
    }

    /// Human-readable context row.
    pub fn context(self) -> &'static str {
        match self {
            SuiteName::Yabbob => "dimension in [2,50], budget in [50,12800]",
            SuiteName::Yasmallbbob => "budget < 50",
            SuiteName::Yatuningbbob => "budget < 50 and dimension <= 15",
            SuiteName::Yaparabbob => "num-workers = 100",
            SuiteName::Yaboundedbbob => "box-constrained, budget <= 300, dimension <= 40",
            SuiteName::Yabigbbob => "budget 40000 to 320000",
            SuiteName::Yaboxbbob => "box-constrained",
            SuiteName::Yahdbbob => "dimension 100 to 3000",
        }
    }

    /// Whether tuning on this suite is part of the training pipeline.
    pub fn is_training(self) -> bool {
        matches!(
            self,
            SuiteName::Yabbob
                | SuiteName::Yasmallbbob
                | SuiteName::Yatuningbbob
                | SuiteName::Yaparabbob
                | SuiteName::Yaboundedbbob
        )
    }
}

impl fmt::Display for SuiteName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SuiteName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        SuiteName::ALL
            .into_iter()
            .find(|n| n.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::UnknownSuite(s.to_string()))
    }
}

/// Inclusive integer range sampled log-uniformly.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LogRange {
    pub lower: u64,
    pub upper: u64,
}

impl LogRange {
    pub const fn new(lower: u64, upper: u64) -> Self {
        LogRange { lower, upper }
    }

    pub fn contains(&self, v: u64) -> bool {
        v >= self.lower && v <= self.upper
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> u64 {
        if self.lower == self.upper {
            return self.lower;
        }
        let lo = (self.lower as f64).ln();
        let hi = ((self.upper + 1) as f64).ln();
        let v = rng.random_range(lo..hi).exp().floor() as u64;
        v.clamp(self.lower, self.upper)
    }
}

/// Context of a suite; one row of the training or test tables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteSpec {
    pub name: SuiteName,
    pub dimension: LogRange,
    pub budget: LogRange,
    pub num_workers: usize,
    #[serde(rename = "box", default, skip_serializing_if = "Option::is_none")]
    pub bounds: Option<Interval>,
    pub functions: Vec<FunctionId>,
}

impl SuiteSpec {
    pub fn named(name: SuiteName) -> Self {
        let (dimension, budget, num_workers, bounds) = match name {
            SuiteName::Yabbob => (LogRange::new(2, 50), LogRange::new(50, 12800), 1, None),
            SuiteName::Yasmallbbob => (LogRange::new(2, 50), LogRange::new(10, 49), 1, None),
            SuiteName::Yatuningbbob => (LogRange::new(2, 15), LogRange::new(10, 49), 1, None),
            SuiteName::Yaparabbob => (LogRange::new(2, 50), LogRange::new(50, 12800), 100, None),
            SuiteName::Yaboundedbbob => (
                LogRange::new(2, 40),
                LogRange::new(10, 300),
                1,
                Some(STANDARD_BOX),
            ),
            SuiteName::Yabigbbob => (LogRange::new(2, 50), LogRange::new(40_000, 320_000), 1, None),
            SuiteName::Yaboxbbob => (
                LogRange::new(2, 50),
                LogRange::new(50, 12800),
                1,
                Some(STANDARD_BOX),
            ),
            SuiteName::Yahdbbob => (
                LogRange::new(100, HD_DEFAULT_CAP as u64),
                LogRange::new(50, 12800),
                1,
                None,
            ),
        };
        SuiteSpec {
            name,
            dimension,
            budget,
            num_workers,
            bounds,
            functions: FunctionId::ALL.to_vec(),
        }
    }

    /// Lowers (or, for the high-dimensional suite, raises up to its hard
    /// limit) the largest sampled dimension.
    pub fn with_dimension_cap(mut self, cap: usize) -> Result<Self> {
        let hard = match self.name {
            SuiteName::Yahdbbob => HD_MAX_DIMENSION,
            _ => SuiteSpec::named(self.name).dimension.upper as usize,
        };
        if cap > hard || (cap as u64) < self.dimension.lower {
            return Err(Error::config(
                "dimension_cap",
                format!(
                    "{cap} outside [{}, {hard}] for {}",
                    self.dimension.lower, self.name
                ),
            ));
        }
        self.dimension.upper = cap as u64;
        Ok(self)
    }

    pub fn with_functions(mut self, functions: Vec<FunctionId>) -> Result<Self> {
        if functions.is_empty() {
            return Err(Error::config("functions", "at least one function required"));
        }
        let mut sorted = functions.clone();
        sorted.sort();
        sorted.dedup();
        if sorted.len() != functions.len() {
            return Err(Error::config("functions", "duplicate function"));
        }
        self.functions = functions;
        Ok(self)
    }

    /// The context predicate of the named suite.
    pub fn admits(&self, instance: &InstanceSpec) -> bool {
        let box_ok = match (self.bounds, &instance.bounds) {
            (Some(expected), Some(b)) => instance.fully_bounded && b.iter().all(|iv| *iv == expected),
            (None, None) => !instance.fully_bounded,
            _ => false,
        };
        box_ok
            && self.dimension.contains(instance.dimension as u64)
            && self.budget.contains(instance.budget)
            && instance.num_workers == self.num_workers
            && self.functions.contains(&instance.function)
    }
}

/// Instances identical except for the benchmark function.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Block {
    instances: Vec<InstanceSpec>,
}

impl Block {
    pub fn new(instances: Vec<InstanceSpec>) -> Result<Self> {
        let first = instances
            .first()
            .ok_or_else(|| Error::config("block", "empty block"))?;
        for inst in &instances {
            let same = inst.dimension == first.dimension
                && inst.rotation_seed == first.rotation_seed
                && inst.budget == first.budget
                && inst.num_workers == first.num_workers
                && inst.fully_bounded == first.fully_bounded
                && inst.bounds == first.bounds;
            if !same {
                return Err(Error::config(
                    "block",
                    "instances must differ only in their function",
                ));
            }
        }
        let mut functions: Vec<_> = instances.iter().map(|i| i.function).collect();
        functions.sort();
        functions.dedup();
        if functions.len() != instances.len() {
            return Err(Error::config("block", "duplicate function in block"));
        }
        Ok(Block { instances })
    }

    pub fn instances(&self) -> &[InstanceSpec] {
        &self.instances
    }

    pub fn len(&self) -> usize {
        self.instances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instances.is_empty()
    }

    pub fn dimension(&self) -> usize {
        self.instances[0].dimension
    }

    pub fn budget(&self) -> u64 {
        self.instances[0].budget
    }

    pub fn rotation_seed(&self) -> u64 {
        self.instances[0].rotation_seed
    }
}

/// Draws `n_blocks` blocks from the suite context, deterministically in `seed`.
pub fn generate_suite(suite: &SuiteSpec, n_blocks: usize, seed: u64) -> Result<Vec<Block>> {
    if n_blocks == 0 {
        return Err(Error::config("n_blocks", "must be at least 1"));
    }
    (0..n_blocks as u64)
        .map(|b| {
            let mut rng = rng_from(derive_seed(seed, &[b]));
            let dimension = suite.dimension.sample(&mut rng) as usize;
            let budget = suite.budget.sample(&mut rng);
            let rotation_seed = derive_seed(seed, &[b, u64::from_le_bytes(*b"rotation")]);
            let instances = suite
                .functions
                .iter()
                .map(|&function| {
                    let inst = InstanceSpec::unbounded(function, dimension, rotation_seed, budget)
                        .with_workers(suite.num_workers);
                    match suite.bounds {
                        Some(b) => inst.with_box(b.lower, b.upper),
                        None => inst,
                    }
                })
                .collect();
            Block::new(instances)
        })
        .collect()
}

/// Stable sort by increasing budget, then increasing dimension.
pub fn order_blocks(mut blocks: Vec<Block>) -> Vec<Block> {
    blocks.sort_by_key(|b| (b.budget(), b.dimension()));
    blocks
}

#[cfg(test)]
mod tests {
    use super::*;

    fn block(budget: u64, dim: usize, seed: u64) -> Block {
        Block::new(vec![InstanceSpec::unbounded(FunctionId::Sphere, dim, seed, budget)]).unwrap()
    }

    #[test]
    fn order_by_budget_then_dimension() {
        let ordered = order_blocks(vec![block(100, 5, 0), block(50, 20, 0), block(50, 3, 0)]);
        let keys: Vec<_> = ordered.iter().map(|b| (b.budget(), b.dimension())).collect();
        assert_eq!(keys, vec![(50, 3), (50, 20), (100, 5)]);
        assert_eq!(order_blocks(ordered.clone()), ordered);
    }

    #[test]
    fn order_is_stable() {
        let ordered = order_blocks(vec![block(50, 3, 1), block(10, 3, 9), block(50, 3, 2)]);
        let seeds: Vec<_> = ordered.iter().map(Block::rotation_seed).collect();
        assert_eq!(seeds, vec![9, 1, 2]);
    }

    #[test]
    fn every_suite_respects_its_context() {
        for name in SuiteName::ALL {
            let suite = SuiteSpec::named(name);
            let blocks = generate_suite(&suite, 30, 3).unwrap();
            assert_eq!(blocks.len(), 30);
            for b in &blocks {
                assert_eq!(b.len(), suite.functions.len());
                for inst in b.instances() {
                    assert!(suite.admits(inst), "{name}: {inst:?}");
                    inst.validate().unwrap();
                }
            }
        }
    }

    #[test]
    fn table_contexts() {
        let check = |name, pred: &dyn Fn(&InstanceSpec) -> bool| {
            let blocks = generate_suite(&SuiteSpec::named(name), 50, 11).unwrap();
            assert!(blocks.iter().flat_map(Block::instances).all(pred), "{name}");
        };
        check(SuiteName::Yabbob, &|i| (2..=50).contains(&i.dimension) && (50..=12800).contains(&i.budget));
        check(SuiteName::Yasmallbbob, &|i| i.budget < 50);
        check(SuiteName::Yatuningbbob, &|i| i.budget < 50 && i.dimension <= 15);
        check(SuiteName::Yaparabbob, &|i| i.num_workers == 100);
        check(SuiteName::Yaboundedbbob, &|i| i.fully_bounded && i.budget <= 300 && i.dimension <= 40);
        check(SuiteName::Yabigbbob, &|i| (40_000..=320_000).contains(&i.budget));
        check(SuiteName::Yaboxbbob, &|i| i.fully_bounded);
        check(SuiteName::Yahdbbob, &|i| (100..=3000).contains(&i.dimension));
    }

    #[test]
    fn generation_is_deterministic() {
        let suite = SuiteSpec::named(SuiteName::Yabbob);
        assert_eq!(
            generate_suite(&suite, 5, 42).unwrap(),
            generate_suite(&suite, 5, 42).unwrap()
        );
        assert_ne!(
            generate_suite(&suite, 5, 42).unwrap(),
            generate_suite(&suite, 5, 43).unwrap()
        );
    }

    #[test]
    fn dimension_cap() {
        let hd = SuiteSpec::named(SuiteName::Yahdbbob);
        assert_eq!(hd.dimension.upper, 1000);
        assert_eq!(hd.clone().with_dimension_cap(3000).unwrap().dimension.upper, 3000);
        assert!(hd.clone().with_dimension_cap(3001).is_err());
        assert!(hd.with_dimension_cap(50).is_err());
        let small = SuiteSpec::named(SuiteName::Yasmallbbob).with_dimension_cap(10).unwrap();
        let blocks = generate_suite(&small, 20, 0).unwrap();
        assert!(blocks.iter().all(|b| b.dimension() <= 10));
    }

    #[test]
    fn suite_names_parse() {
        for name in SuiteName::ALL {
            assert_eq!(name.as_str().parse::<SuiteName>().unwrap(), name);
        }
        assert!(matches!("YAWIDEBBOB".parse::<SuiteName>(), Err(Error::UnknownSuite(_))));
    }

    #[test]
    fn block_rejects_mixed_instances() {
        let a = InstanceSpec::unbounded(FunctionId::Sphere, 2, 0, 10);
        let b = InstanceSpec::unbounded(FunctionId::Ackley, 3, 0, 10);
        assert!(Block::new(vec![a.clone(), b]).is_err());
        assert!(Block::new(vec![a.clone(), a]).is_err());
    }
}
