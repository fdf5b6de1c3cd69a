//! Reference optimizers that give the comparison harness competitors:
//! random search, a (1+1)-ES with the one-fifth success rule and
//! DE/rand/1/bin.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::record::{Optimizer, RunRecord, Tracker};
use crate::seed::rng_from;
use crate::suites::{InstanceSpec, Interval, Problem};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Baseline {
    RandomSearch,
    OnePlusOneEs,
    DifferentialEvolution,
}

impl Baseline {
    pub const ALL: [Baseline; 3] = [
        Baseline::RandomSearch,
        Baseline::OnePlusOneEs,
        Baseline::DifferentialEvolution,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Baseline::RandomSearch => "random-search",
            Baseline::OnePlusOneEs => "one-plus-one-es",
            Baseline::DifferentialEvolution => "differential-evolution",
        }
    }

    pub fn run(self, instance: &InstanceSpec, seed: u64) -> Result<RunRecord> {
        let problem = instance.materialize()?;
        let mut ctx = Context {
            problem: &problem,
            budget: instance.budget,
            rng: rng_from(seed),
            tracker: Tracker::new(),
        };
        match self {
            Baseline::RandomSearch => random_search(&mut ctx)?,
            Baseline::OnePlusOneEs => one_plus_one(&mut ctx)?,
            Baseline::DifferentialEvolution => differential_evolution(&mut ctx)?,
        }
        Ok(ctx.tracker.finish(
            self.as_str().to_string(),
            Optimizer::Baseline { name: self },
            instance,
            seed,
        ))
    }
}

impl fmt::Display for Baseline {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Baseline {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Baseline::ALL
            .into_iter()
            .find(|b| b.as_str() == s)
            .ok_or_else(|| Error::UnknownBaseline(s.to_string()))
    }
}

/// Runs the baseline called `name`.
pub fn run_baseline(name: &str, instance: &InstanceSpec, seed: u64) -> Result<RunRecord> {
    name.parse::<Baseline>()?.run(instance, seed)
}

struct Context<'a> {
    problem: &'a Problem,
    budget: u64,
    rng: ChaCha8Rng,
    tracker: Tracker,
}

impl Context<'_> {
    fn remaining(&self) -> u64 {
        self.budget - self.tracker.evaluations()
    }

    fn eval(&mut self, x: &[f64]) -> Result<f64> {
        let f = self.problem.evaluate(x)?;
        if self.tracker.observe(x, f) {
            self.tracker.checkpoint();
        }
        Ok(f)
    }

    /// Standard normal around the origin, or uniform in the box.
    fn random_point(&mut self) -> Vec<f64> {
        match self.problem.bounds() {
            Some(b) => b
                .iter()
                .map(|iv| self.rng.random_range(iv.lower..=iv.upper))
                .collect(),
            None => (0..self.problem.dimension())
                .map(|_| StandardNormal.sample(&mut self.rng))
                .collect(),
        }
    }

    fn center_and_step(&self) -> (Vec<f64>, Vec<f64>) {
        match self.problem.bounds() {
            Some(b) => (
                b.iter().map(Interval::center).collect(),
                b.iter().map(|iv| iv.width() / 4.0).collect(),
            ),
            None => (
                vec![0.0; self.problem.dimension()],
                vec![1.0; self.problem.dimension()],
            ),
        }
    }
}

fn random_search(ctx: &mut Context<'_>) -> Result<()> {
    while ctx.remaining() > 0 {
        let x = ctx.random_point();
        ctx.eval(&x)?;
    }
    Ok(())
}

fn one_plus_one(ctx: &mut Context<'_>) -> Result<()> {
    let (mut parent, step) = ctx.center_and_step();
    let mut parent_loss = ctx.eval(&parent)?;
    let mut sigma = 1.0;
    while ctx.remaining() > 0 {
        let child: Vec<f64> = parent
            .iter()
            .zip(&step)
            .map(|(p, s)| {
                let z: f64 = StandardNormal.sample(&mut ctx.rng);
                p + sigma * s * z
            })
            .collect();
        let child = ctx.problem.clip(&child);
        let loss = ctx.eval(&child)?;
        if loss <= parent_loss {
            parent = child;
            parent_loss = loss;
            sigma *= 1.5;
        } else {
            sigma *= 1.5f64.powf(-0.25);
        }
        sigma = sigma.clamp(1e-300, 1e300);
    }
    Ok(())
}

const DE_POPULATION: usize = 30;
const DE_WEIGHT: f64 = 0.5;
const DE_CROSSOVER: f64 = 0.9;

fn differential_evolution(ctx: &mut Context<'_>) -> Result<()> {
    let d = ctx.problem.dimension();
    let mut population = Vec::with_capacity(DE_POPULATION);
    let mut losses = Vec::with_capacity(DE_POPULATION);
    while population.len() < DE_POPULATION && ctx.remaining() > 0 {
        let x = ctx.random_point();
        losses.push(ctx.eval(&x)?);
        population.push(x);
    }
    if population.len() < 4 {
        return Ok(());
    }
    let n = population.len();
    'outer: loop {
        for i in 0..n {
            if ctx.remaining() == 0 {
                break 'outer;
            }
            let mut pick = |exclude: &[usize]| loop {
                let k = ctx.rng.random_range(0..n);
                if !exclude.contains(&k) {
                    break k;
                }
            };
            let a = pick(&[i]);
            let b = pick(&[i, a]);
            let c = pick(&[i, a, b]);
            let forced = ctx.rng.random_range(0..d);
            let trial: Vec<f64> = (0..d)
                .map(|j| {
                    if j == forced || ctx.rng.random_bool(DE_CROSSOVER) {
                        population[a][j] + DE_WEIGHT * (population[b][j] - population[c][j])
                    } else {
                        population[i][j]
                    }
                })
                .collect();
            let trial = ctx.problem.clip(&trial);
            let loss = ctx.eval(&trial)?;
            if loss <= losses[i] {
                population[i] = trial;
                losses[i] = loss;
            }
        }
    }
    Ok(())
}
