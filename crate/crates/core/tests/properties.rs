use proptest::prelude::*;

use cmawizard::cma::{CmaState, CovarianceView, Domain};
use cmawizard::evaluation::{convergence_curves, score_matrix, DEFAULT_CHECKPOINTS};
use cmawizard::racing::{refine, sample_initial, ParamSpace};
use cmawizard::suites::{evaluate, FunctionId};
use cmawizard::{population_size, run_baseline, Baseline, CmaConfig, InstanceSpec, Optimizer, RunRecord};

fn config() -> impl Strategy<Value = CmaConfig> {
    (0.11f64..9.9, 1u32..=9, any::<bool>(), any::<bool>())
        .prop_map(|(s, f, e, d)| CmaConfig::new(s, f, e, d).unwrap())
}

fn function() -> impl Strategy<Value = FunctionId> {
    (0..FunctionId::ALL.len()).prop_map(|i| FunctionId::ALL[i])
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn population_grows_with_dimension(f in 1u32..=9, d in 1usize..3000) {
        let c = CmaConfig::new(1.0, f, false, false).unwrap();
        prop_assert!(population_size(&c, d) <= population_size(&c, d + 1));
        prop_assert!(population_size(&c, d) >= 4);
    }

    #[test]
    fn tell_keeps_state_sound(
        c in config(),
        f in function(),
        d in 1usize..12,
        bounded in any::<bool>(),
        seed in any::<u64>(),
    ) {
        let mut inst = InstanceSpec::unbounded(f, d, seed, 10_000);
        if bounded {
            inst = inst.with_box(-5.0, 5.0);
        }
        let problem = inst.materialize().unwrap();
        let mut state = CmaState::new(c, d, &Domain::of(&inst), seed).unwrap();
        let mut best = f64::INFINITY;
        for _ in 0..15 {
            let points = state.ask();
            prop_assert_eq!(points.len(), state.population());
            if bounded {
                prop_assert!(points.iter().flatten().all(|v| (-5.0..=5.0).contains(v)));
            }
            let losses: Vec<f64> = points.iter().map(|x| problem.evaluate(x).unwrap()).collect();
            let report = state.tell(&points, &losses).unwrap();
            let (_, seen) = state.best_seen().unwrap();
            prop_assert!(seen <= best);
            if c.elitist() {
                prop_assert!(report.pool_best <= best);
            }
            best = seen;
            prop_assert!(state.sigma() > 0.0);
            let cov = state.covariance();
            prop_assert!(cov.min_eigenvalue() > 0.0);
            prop_assert_eq!(cov.len(), if c.diagonal() { d } else { d * d });
            prop_assert_eq!(matches!(cov, CovarianceView::Diagonal(_)), c.diagonal());
        }
    }

    #[test]
    fn records_honour_their_contract(
        c in config(),
        f in function(),
        d in 1usize..8,
        budget in 1u64..300,
        seed in any::<u64>(),
    ) {
        let inst = InstanceSpec::unbounded(f, d, seed, budget);
        let r = cmawizard::cma::run_with(&c, &inst, seed, cmawizard::cma::SmallBudget::SampleOnly).unwrap();
        prop_assert_eq!(r.evaluations(), budget);
        prop_assert!(r.history.windows(2).all(|w| w[0].0 < w[1].0 && w[0].1 >= w[1].1));
        prop_assert_eq!(r.final_loss, evaluate(&inst, &r.recommendation).unwrap());
        let b = Baseline::ALL[(seed % 3) as usize];
        let rb = run_baseline(b.as_str(), &inst, seed).unwrap();
        prop_assert_eq!(rb.final_loss, evaluate(&inst, &rb.recommendation).unwrap());
    }

    #[test]
    fn refined_candidates_stay_in_space(n in 2usize..40, iteration in 1usize..8, seed in any::<u64>()) {
        let space = ParamSpace::cma();
        let elites = sample_initial(&space, 3, seed);
        for c in refine(&elites, &space, iteration, n, 100, seed) {
            prop_assert!(space.contains(&c.values));
            prop_assert!(c.parent.is_some());
        }
    }

    #[test]
    fn curves_are_normalized(losses in prop::collection::vec(0u8..5, 6..=6)) {
        let records: Vec<RunRecord> = losses
            .iter()
            .enumerate()
            .map(|(i, &l)| RunRecord {
                algorithm: format!("a{}", i % 3),
                optimizer: Optimizer::Baseline { name: Baseline::RandomSearch },
                instance: InstanceSpec::unbounded(FunctionId::Sphere, 2, (i / 3) as u64, 40),
                seed: 0,
                history: vec![(1 + i as u64, l as f64)],
                recommendation: vec![0.0; 2],
                final_loss: l as f64,
            })
            .collect();
        let m = score_matrix(&records, &DEFAULT_CHECKPOINTS).unwrap();
        for a in 0..3 {
            for b in 0..3 {
                prop_assert_eq!(m.wins[a][b] + m.wins[b][a], 1.0);
            }
        }
        for curve in convergence_curves(&records, &DEFAULT_CHECKPOINTS).unwrap() {
            prop_assert!(curve.points.iter().all(|p| (0.0..=1.0).contains(&p.1)));
        }
    }
}
