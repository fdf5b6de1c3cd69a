use super::state::{CmaState, Domain};
use super::{population_size, CmaConfig};
use crate::error::{Error, Result};
use crate::record::{Optimizer, RunRecord, Tracker};
use crate::suites::InstanceSpec;

/// What to do when the budget cannot cover one full generation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SmallBudget {
    /// Fail with [`Error::BudgetTooSmall`].
    #[default]
    Reject,
    /// Spend the whole budget on a truncated first generation.
    SampleOnly,
}

/// Points per generation on `instance`: the configured population size,
/// raised to the number of parallel workers.
pub fn generation_size(config: &CmaConfig, instance: &InstanceSpec) -> usize {
    population_size(config, instance.dimension).max(instance.num_workers)
}

/// Runs CMA-ES on `instance` until the evaluation budget is spent.
pub fn run(config: &CmaConfig, instance: &InstanceSpec, seed: u64) -> Result<RunRecord> {
    run_with(config, instance, seed, SmallBudget::Reject)
}

pub fn run_with(
    config: &CmaConfig,
    instance: &InstanceSpec,
    seed: u64,
    small_budget: SmallBudget,
) -> Result<RunRecord> {
    let problem = instance.materialize()?;
    let mut state = CmaState::new(*config, instance.dimension, &Domain::of(instance), seed)?
        .with_min_population(instance.num_workers);
    let lambda = state.population();
    if instance.budget < lambda as u64 && small_budget == SmallBudget::Reject {
        return Err(Error::BudgetTooSmall {
            budget: instance.budget,
            population: lambda,
        });
    }

    let mut tracker = Tracker::new();
    while tracker.evaluations() + lambda as u64 <= instance.budget {
        let points = state.ask();
        let losses = points
            .iter()
            .map(|x| {
                let f = problem.evaluate(x)?;
                tracker.observe(x, f);
                Ok(f)
            })
            .collect::<Result<Vec<_>>>()?;
        state.tell(&points, &losses)?;
        tracker.checkpoint();
    }
    let remaining = (instance.budget - tracker.evaluations()) as usize;
    if remaining > 0 {
        for x in state.ask().into_iter().take(remaining) {
            let f = problem.evaluate(&x)?;
            tracker.observe(&x, f);
        }
    }

    Ok(tracker.finish(
        config.to_string(),
        Optimizer::Cma {
            config: *config,
            selected: None,
        },
        instance,
        seed,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::suites::{evaluate, FunctionId};

    #[test]
    fn budget_split_into_generations() {
        // factor 3, d = 10 gives 10 points per generation.
        let inst = InstanceSpec::unbounded(FunctionId::Sphere, 10, 1, 50);
        let r = run(&CmaConfig::DEFAULT, &inst, 0).unwrap();
        let evals: Vec<u64> = r.history.iter().map(|h| h.0).collect();
        assert_eq!(evals, vec![10, 20, 30, 40, 50]);
    }

    #[test]
    fn final_generation_is_truncated() {
        let small = CmaConfig::new(0.4151, 9, false, false).unwrap();
        let inst = InstanceSpec::unbounded(FunctionId::Rastrigin, 10, 3, 40);
        let r = run(&small, &inst, 5).unwrap();
        assert_eq!(r.evaluations(), 40);
        assert_eq!(r.history.first().unwrap().0, 24);
    }

    #[test]
    fn budget_below_population_is_rejected() {
        let inst = InstanceSpec::unbounded(FunctionId::Sphere, 10, 1, 9);
        assert!(matches!(
            run(&CmaConfig::DEFAULT, &inst, 0),
            Err(Error::BudgetTooSmall { budget: 9, population: 10 })
        ));
        let r = run_with(&CmaConfig::DEFAULT, &inst, 0, SmallBudget::SampleOnly).unwrap();
        assert_eq!(r.evaluations(), 9);
    }

    #[test]
    fn record_contract() {
        let inst = InstanceSpec::unbounded(FunctionId::Ackley, 6, 4, 300);
        let a = run(&CmaConfig::DEFAULT, &inst, 11).unwrap();
        assert_eq!(a, run(&CmaConfig::DEFAULT, &inst, 11).unwrap());
        assert_eq!(a.final_loss, evaluate(&inst, &a.recommendation).unwrap());
        assert!(a.history.windows(2).all(|w| w[0].0 < w[1].0 && w[0].1 >= w[1].1));
        assert_ne!(a, run(&CmaConfig::DEFAULT, &inst, 12).unwrap());
    }

    #[test]
    fn workers_raise_generation_size() {
        let inst = InstanceSpec::unbounded(FunctionId::Sphere, 5, 0, 1000).with_workers(100);
        assert_eq!(generation_size(&CmaConfig::DEFAULT, &inst), 100);
        let r = run(&CmaConfig::DEFAULT, &inst, 0).unwrap();
        assert_eq!(r.history.len(), 10);
    }

    #[test]
    fn bounded_recommendation_inside_box() {
        let cfg = CmaConfig::new(9.0, 1, true, true).unwrap();
        let inst = InstanceSpec::unbounded(FunctionId::Ellipsoid, 8, 2, 200).with_box(-5.0, 5.0);
        let r = run(&cfg, &inst, 3).unwrap();
        assert!(r.recommendation.iter().all(|v| (-5.0..=5.0).contains(v)));
        assert_eq!(r.final_loss, evaluate(&inst, &r.recommendation).unwrap());
    }
}
