use serde::{Deserialize, Serialize};

use crate::baselines::Baseline;
use crate::cma::CmaConfig;
use crate::suites::InstanceSpec;

/// What produced a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Optimizer {
    Cma {
        config: CmaConfig,
        /// Registry name, when the configuration was picked by name.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        selected: Option<String>,
    },
    Baseline {
        name: Baseline,
    },
}

/// One optimizer execution on one instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    /// Identifier under which runs are grouped for comparison.
    pub algorithm: String,
    pub optimizer: Optimizer,
    pub instance: InstanceSpec,
    pub seed: u64,
    /// `(evaluations, best loss so far)`, strictly increasing in evaluations.
    pub history: Vec<(u64, f64)>,
    pub recommendation: Vec<f64>,
    pub final_loss: f64,
}

impl RunRecord {
    pub fn evaluations(&self) -> u64 {
        self.history.last().map_or(0, |h| h.0)
    }

    /// Best loss after `evaluations` evaluations, or infinity before the
    /// first recorded point.
    pub fn loss_at(&self, evaluations: u64) -> f64 {
        let idx = self.history.partition_point(|(e, _)| *e <= evaluations);
        if idx == 0 {
            f64::INFINITY
        } else {
            self.history[idx - 1].1
        }
    }

    pub fn with_algorithm(mut self, algorithm: impl Into<String>) -> Self {
        self.algorithm = algorithm.into();
        self
    }
}

/// Tracks the best evaluated point and the anytime history of a run.
#[derive(Debug, Clone)]
pub(crate) struct Tracker {
    evaluations: u64,
    best: Option<(Vec<f64>, f64)>,
    history: Vec<(u64, f64)>,
}

impl Tracker {
    pub fn new() -> Self {
        Tracker {
            evaluations: 0,
            best: None,
            history: Vec::new(),
        }
    }

    pub fn evaluations(&self) -> u64 {
        self.evaluations
    }


    /// Counts one evaluation; returns whether it improved the best.
    pub fn observe(&mut self, x: &[f64], loss: f64) -> bool {
        self.evaluations += 1;
        let improved = self.best.as_ref().is_none_or(|(_, f)| loss < *f);
        if improved {
            self.best = Some((x.to_vec(), loss));
        }
        improved
    }

    /// Appends the current best to the history.
    pub fn checkpoint(&mut self) {
        if let Some((_, f)) = &self.best {
            if self.history.last().is_none_or(|(e, _)| *e < self.evaluations) {
                self.history.push((self.evaluations, *f));
            }
        }
    }

    pub fn finish(
        mut self,
        algorithm: String,
        optimizer: Optimizer,
        instance: &InstanceSpec,
        seed: u64,
    ) -> RunRecord {
        self.checkpoint();
        let (recommendation, final_loss) = self.best.expect("at least one evaluation");
        RunRecord {
            algorithm,
            optimizer,
            instance: instance.clone(),
            seed,
            history: self.history,
            recommendation,
            final_loss,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::suites::FunctionId;

    #[test]
    fn loss_lookup_is_last_value_before_checkpoint() {
        let record = RunRecord {
            algorithm: "a".into(),
            optimizer: Optimizer::Cma {
                config: CmaConfig::DEFAULT,
                selected: None,
            },
            instance: InstanceSpec::unbounded(FunctionId::Sphere, 2, 0, 10),
            seed: 0,
            history: vec![(4, 3.0), (8, 2.0), (10, 1.0)],
            recommendation: vec![0.0, 0.0],
            final_loss: 1.0,
        };
        assert_eq!(record.loss_at(3), f64::INFINITY);
        assert_eq!(record.loss_at(4), 3.0);
        assert_eq!(record.loss_at(7), 3.0);
        assert_eq!(record.loss_at(8), 2.0);
        assert_eq!(record.loss_at(100), 1.0);
        assert_eq!(record.evaluations(), 10);
    }

    #[test]
    fn tracker_history_is_monotone() {
        let mut t = Tracker::new();
        for (i, f) in [5.0, 6.0, 4.0, 4.0, 1.0].into_iter().enumerate() {
            t.observe(&[i as f64], f);
            t.checkpoint();
        }
        t.checkpoint();
        let inst = InstanceSpec::unbounded(FunctionId::Sphere, 1, 0, 5);
        let r = t.finish(
            "x".into(),
            Optimizer::Baseline {
                name: Baseline::RandomSearch,
            },
            &inst,
            0,
        );
        assert_eq!(r.history, vec![(1, 5.0), (2, 5.0), (3, 4.0), (4, 4.0), (5, 1.0)]);
        assert_eq!(r.recommendation, vec![4.0]);
        assert_eq!(r.final_loss, 1.0);
    }
}
