//! Selection between tuned elites and the default configuration by repeated
//! whole-suite runs and majority voting.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cma::{run_with, CmaConfig, SmallBudget};
use crate::error::{Error, Result};
use crate::seed::derive_seed;
use crate::suites::{generate_suite, InstanceSpec, SuiteSpec};

pub const DEFAULT_CONTENDER: &str = "default";

/// Final loss of a configuration on an instance.
pub trait ConfigTarget: Sync {
    fn final_loss(&self, config: &CmaConfig, instance: &InstanceSpec, seed: u64) -> Result<f64>;
}

impl<F> ConfigTarget for F
where
    F: Fn(&CmaConfig, &InstanceSpec, u64) -> Result<f64> + Sync,
{
    fn final_loss(&self, config: &CmaConfig, instance: &InstanceSpec, seed: u64) -> Result<f64> {
        self(config, instance, seed)
    }
}

/// Scores configurations with real CMA-ES runs.
#[derive(Debug, Clone, Copy, Default)]
pub struct CmaRunner;

impl ConfigTarget for CmaRunner {
    fn final_loss(&self, config: &CmaConfig, instance: &InstanceSpec, seed: u64) -> Result<f64> {
        Ok(run_with(config, instance, seed, SmallBudget::SampleOnly)?.final_loss)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Contender {
    pub id: String,
    pub config: CmaConfig,
}

impl Contender {
    pub fn new(id: impl Into<String>, config: CmaConfig) -> Self {
        Contender {
            id: id.into(),
            config,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum VoteRule {
    /// Each run elects a winner; the most frequent run winner wins.
    #[default]
    OverRuns,
    /// Instance wins are pooled over all runs.
    Pooled,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationSettings {
    pub n_runs: usize,
    /// Blocks drawn per run.
    pub n_blocks: usize,
    pub vote: VoteRule,
    pub workers: usize,
    pub seed: u64,
}

impl Default for ValidationSettings {
    fn default() -> Self {
        ValidationSettings {
            n_runs: 10,
            n_blocks: 20,
            vote: VoteRule::OverRuns,
            workers: 1,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub contenders: Vec<Contender>,
    pub vote: VoteRule,
    /// Winner id of each run.
    pub per_run_winners: Vec<String>,
    /// `[run][contender]` instance wins; ties are split evenly.
    pub per_instance_win_counts: Vec<Vec<f64>>,
    /// `[run][contender]` mean final loss.
    pub mean_losses: Vec<Vec<f64>>,
    pub overall_winner: String,
    /// Whether the vote itself was tied and a tie-break decided.
    pub tie: bool,
}

impl ValidationReport {
    pub fn winner(&self) -> &Contender {
        self.contenders
            .iter()
            .find(|c| c.id == self.overall_winner)
            .expect("winner is a contender")
    }

    pub fn run_wins(&self, id: &str) -> usize {
        self.per_run_winners.iter().filter(|w| *w == id).count()
    }
}

/// Index of the best entry by `(score desc, loss asc, index asc)`.
fn best_by(scores: &[f64], losses: &[f64]) -> usize {
    (0..scores.len())
        .min_by(|&a, &b| {
            scores[b]
                .total_cmp(&scores[a])
                .then(losses[a].total_cmp(&losses[b]))
                .then(a.cmp(&b))
        })
        .expect("at least one contender")
}

/// Runs every contender on every instance of `settings.n_runs` freshly drawn
/// instance sets and elects the overall winner. The default configuration is
/// added when no contender carries it.
pub fn validate(
    contenders: &[Contender],
    suite: &SuiteSpec,
    settings: &ValidationSettings,
    target: &dyn ConfigTarget,
) -> Result<ValidationReport> {
    let mut contenders = contenders.to_vec();
    if !contenders.iter().any(|c| c.config == CmaConfig::DEFAULT) {
        contenders.push(Contender::new(DEFAULT_CONTENDER, CmaConfig::DEFAULT));
    }
    if contenders.len() < 2 {
        return Err(Error::config("contenders", "at least two contenders are required"));
    }
    if settings.n_runs == 0 {
        return Err(Error::config("n_runs", "must be at least 1"));
    }
    let mut ids: Vec<&str> = contenders.iter().map(|c| c.id.as_str()).collect();
    ids.sort_unstable();
    if ids.windows(2).any(|w| w[0] == w[1]) {
        return Err(Error::config("contenders", "duplicate contender id"));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(settings.workers.max(1))
        .build()
        .map_err(|e| Error::config("workers", e.to_string()))?;

    let k = contenders.len();
    let mut per_run_winners = Vec::with_capacity(settings.n_runs);
    let mut wins = Vec::with_capacity(settings.n_runs);
    let mut mean_losses = Vec::with_capacity(settings.n_runs);
    for r in 0..settings.n_runs as u64 {
        let blocks = generate_suite(suite, settings.n_blocks, derive_seed(settings.seed, &[r]))?;
        let instances: Vec<&InstanceSpec> = blocks.iter().flat_map(|b| b.instances()).collect();
        let losses: Vec<Vec<f64>> = pool.install(|| {
            instances
                .par_iter()
                .enumerate()
                .map(|(i, inst)| {
                    let seed = derive_seed(settings.seed, &[r, i as u64, 1]);
                    contenders
                        .iter()
                        .map(|c| target.final_loss(&c.config, inst, seed))
                        .collect::<Result<Vec<f64>>>()
                })
                .collect::<Result<Vec<_>>>()
        })?;

        let mut run_wins = vec![0.0; k];
        for row in &losses {
            let best = row.iter().copied().fold(f64::INFINITY, f64::min);
            let tied: Vec<usize> = (0..k).filter(|&c| row[c] == best).collect();
            for &c in &tied {
                run_wins[c] += 1.0 / tied.len() as f64;
            }
        }
        let run_means: Vec<f64> = (0..k)
            .map(|c| losses.iter().map(|row| row[c]).sum::<f64>() / losses.len() as f64)
            .collect();
        per_run_winners.push(contenders[best_by(&run_wins, &run_means)].id.clone());
        wins.push(run_wins);
        mean_losses.push(run_means);
    }

    let total_wins: Vec<f64> = (0..k).map(|c| wins.iter().map(|w| w[c]).sum()).collect();
    let overall_means: Vec<f64> = (0..k)
        .map(|c| mean_losses.iter().map(|m| m[c]).sum::<f64>() / mean_losses.len() as f64)
        .collect();
    let votes: Vec<f64> = match settings.vote {
        VoteRule::OverRuns => contenders
            .iter()
            .map(|c| per_run_winners.iter().filter(|w| **w == c.id).count() as f64)
            .collect(),
        VoteRule::Pooled => total_wins.clone(),
    };
    let top = votes.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let leaders: Vec<usize> = (0..k).filter(|&c| votes[c] == top).collect();
    let tie = leaders.len() > 1;
    let leader_wins: Vec<f64> = leaders.iter().map(|&c| total_wins[c]).collect();
    let leader_means: Vec<f64> = leaders.iter().map(|&c| overall_means[c]).collect();
    let winner = leaders[best_by(&leader_wins, &leader_means)];

    Ok(ValidationReport {
        overall_winner: contenders[winner].id.clone(),
        contenders,
        vote: settings.vote,
        per_run_winners,
        per_instance_win_counts: wins,
        mean_losses,
        tie,
    })
}
