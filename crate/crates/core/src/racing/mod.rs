//! Elitist iterated racing.
//!
//! Each iteration samples candidates (uniformly at first, then around the
//! surviving elites), races them over the ordered blocks of a training suite
//! and eliminates statistically worse candidates with a paired t-test against
//! the incumbent. Survivors become the elites of the next iteration.

mod space;
mod ttest;

pub use space::{
    refine, refine_sd, sample_initial, Candidate, ParamDescriptor, ParamKind, ParamSpace, ParamValue,
};
pub use ttest::{paired_t_test, PairedTest};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cma::{run_with, SmallBudget};
use crate::error::{Error, Result};
use crate::seed::derive_seed;
use crate::suites::{generate_suite, order_blocks, Block, InstanceSpec, SuiteSpec};

const SAMPLE_STREAM: u64 = 1;
const REFINE_STREAM: u64 = 2;
const SUITE_STREAM: u64 = 3;
const RUN_STREAM: u64 = 4;

/// Produces the loss of one candidate on one instance.
pub trait Target: Sync {
    fn evaluate(&self, candidate: &Candidate, instance: &InstanceSpec, seed: u64) -> Result<f64>;
}

impl<F> Target for F
where
    F: Fn(&Candidate, &InstanceSpec, u64) -> Result<f64> + Sync,
{
    fn evaluate(&self, candidate: &Candidate, instance: &InstanceSpec, seed: u64) -> Result<f64> {
        self(candidate, instance, seed)
    }
}

/// Runs CMA-ES with the candidate's configuration and scores the final
/// recommended point. Budgets below one generation are spent on a truncated
/// first generation so that every candidate gets a loss on every instance.
#[derive(Debug, Clone)]
pub struct CmaTarget {
    pub space: ParamSpace,
}

impl Default for CmaTarget {
    fn default() -> Self {
        CmaTarget {
            space: ParamSpace::cma(),
        }
    }
}

impl Target for CmaTarget {
    fn evaluate(&self, candidate: &Candidate, instance: &InstanceSpec, seed: u64) -> Result<f64> {
        let config = self.space.to_cma_config(candidate)?;
        Ok(run_with(&config, instance, seed, SmallBudget::SampleOnly)?.final_loss)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TunerSettings {
    pub max_experiments: u64,
    pub first_test_after_blocks: usize,
    pub alpha: f64,
    /// A race stops once at most this many candidates are alive after a test.
    pub min_survivors: usize,
    /// Cap on candidates per iteration.
    pub max_candidates: usize,
    /// Number of training blocks drawn from the suite.
    pub n_blocks: usize,
    /// Threads used for the runs of one block; results do not depend on it.
    pub workers: usize,
    pub seed: u64,
}

impl Default for TunerSettings {
    fn default() -> Self {
        TunerSettings {
            max_experiments: 10_000,
            first_test_after_blocks: 5,
            alpha: 0.05,
            min_survivors: 2,
            max_candidates: 50,
            n_blocks: 50,
            workers: 1,
            seed: 0,
        }
    }
}

impl TunerSettings {
    pub fn validate(&self) -> Result<()> {
        if self.first_test_after_blocks < 1 {
            return Err(Error::config("first_test_after_blocks", "must be at least 1"));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::config("alpha", format!("{} outside (0, 1)", self.alpha)));
        }
        if self.min_survivors < 1 {
            return Err(Error::config("min_survivors", "must be at least 1"));
        }
        if self.max_candidates < 2 {
            return Err(Error::config("max_candidates", "must be at least 2"));
        }
        if self.n_blocks < self.first_test_after_blocks {
            return Err(Error::config(
                "n_blocks",
                format!(
                    "{} blocks cannot reach the first test after {}",
                    self.n_blocks, self.first_test_after_blocks
                ),
            ));
        }
        if self.workers < 1 {
            return Err(Error::config("workers", "must be at least 1"));
        }
        Ok(())
    }
}

/// One target run performed by the tuner.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentRecord {
    pub iteration: usize,
    pub block: usize,
    pub instance: usize,
    pub candidate: u64,
    pub seed: u64,
    pub loss: f64,
}

impl ExperimentRecord {
    fn same_experiment(&self, other: &ExperimentRecord) -> bool {
        self.iteration == other.iteration
            && self.block == other.block
            && self.instance == other.instance
            && self.candidate == other.candidate
            && self.seed == other.seed
    }
}

/// Ordered experiment log. Experiments already present in a replayed prefix
/// are reused instead of being run again, which makes an interrupted tuning
/// run resumable with identical results.
#[derive(Default)]
pub struct Journal<'a> {
    replay: Vec<ExperimentRecord>,
    records: Vec<ExperimentRecord>,
    new_limit: Option<u64>,
    new_count: u64,
    sink: Option<Box<dyn FnMut(&[ExperimentRecord]) -> Result<()> + 'a>>,
}

impl<'a> Journal<'a> {
    pub fn new() -> Self {
        Journal::default()
    }

    /// Reuses `records` as the first experiments of the run.
    pub fn replaying(mut self, records: Vec<ExperimentRecord>) -> Self {
        self.replay = records;
        self
    }

    /// Stops with [`Error::Interrupted`] before a block would push the number
    /// of newly run experiments above `limit`.
    pub fn with_limit(mut self, limit: u64) -> Self {
        self.new_limit = Some(limit);
        self
    }

    /// Receives each block's newly run experiments as soon as they finish.
    pub fn with_sink(mut self, sink: impl FnMut(&[ExperimentRecord]) -> Result<()> + 'a) -> Self {
        self.sink = Some(Box::new(sink));
        self
    }

    pub fn records(&self) -> &[ExperimentRecord] {
        &self.records
    }

    pub fn into_records(self) -> Vec<ExperimentRecord> {
        self.records
    }

    fn run_block(
        &mut self,
        planned: Vec<ExperimentRecord>,
        candidates: &[&Candidate],
        block: &Block,
        target: &dyn Target,
        pool: &rayon::ThreadPool,
    ) -> Result<Vec<ExperimentRecord>> {
        let start = self.records.len();
        let mut fresh = Vec::new();
        for (k, exp) in planned.iter().enumerate() {
            match self.replay.get(start + k) {
                Some(old) if old.same_experiment(exp) => {}
                Some(_) => {
                    return Err(Error::Parse(format!(
                        "experiment log entry {} does not belong to this tuning run",
                        start + k
                    )))
                }
                None => fresh.push(k),
            }
        }
        if let Some(limit) = self.new_limit {
            if self.new_count + fresh.len() as u64 > limit {
                return Err(Error::Interrupted {
                    completed: self.records.len() as u64,
                });
            }
        }
        let losses: Vec<Result<f64>> = pool.install(|| {
            fresh
                .par_iter()
                .map(|&k| {
                    let exp = &planned[k];
                    let cand = candidates
                        .iter()
                        .find(|c| c.id == exp.candidate)
                        .expect("planned candidate is alive");
                    target.evaluate(cand, &block.instances()[exp.instance], exp.seed)
                })
                .collect()
        });
        let mut done = planned;
        for (k, exp) in done.iter_mut().enumerate() {
            if let Some(old) = self.replay.get(start + k) {
                exp.loss = old.loss;
            }
        }
        for (&k, loss) in fresh.iter().zip(losses) {
            done[k].loss = loss?;
        }
        self.new_count += fresh.len() as u64;
        if let Some(sink) = self.sink.as_mut() {
            let first_fresh = fresh.first().copied().unwrap_or(done.len());
            sink(&done[first_fresh..])?;
        }
        self.records.extend(done.iter().cloned());
        Ok(done)
    }
}

/// Bookkeeping of one race.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RaceState {
    pub iteration: usize,
    /// Every candidate that entered the race.
    pub candidates: Vec<Candidate>,
    pub alive: Vec<bool>,
    /// Losses per entrant, one per instance it ran, in block order.
    pub losses: Vec<Vec<f64>>,
    /// Number of blocks seen when each entrant was eliminated.
    pub eliminated_after: Vec<Option<usize>>,
    pub blocks_seen: usize,
    pub experiments_used: u64,
    /// Survivors ranked by mean loss.
    pub elites: Vec<Candidate>,
}

impl RaceState {
    fn new(iteration: usize, candidates: Vec<Candidate>) -> Self {
        let n = candidates.len();
        RaceState {
            iteration,
            candidates,
            alive: vec![true; n],
            losses: vec![Vec::new(); n],
            eliminated_after: vec![None; n],
            blocks_seen: 0,
            experiments_used: 0,
            elites: Vec::new(),
        }
    }

    pub fn alive_candidates(&self) -> Vec<&Candidate> {
        self.candidates
            .iter()
            .zip(&self.alive)
            .filter_map(|(c, a)| a.then_some(c))
            .collect()
    }

    pub fn mean_loss(&self, entrant: usize) -> f64 {
        let l = &self.losses[entrant];
        if l.is_empty() {
            f64::INFINITY
        } else {
            l.iter().sum::<f64>() / l.len() as f64
        }
    }

    fn alive_indices(&self) -> Vec<usize> {
        (0..self.candidates.len()).filter(|&i| self.alive[i]).collect()
    }

    /// Alive entrants ordered by mean loss; ties keep entry order.
    fn ranked_alive(&self) -> Vec<usize> {
        let mut idx = self.alive_indices();
        idx.sort_by(|&a, &b| self.mean_loss(a).total_cmp(&self.mean_loss(b)));
        idx
    }

    fn eliminate_worse(&mut self, alpha: f64) {
        let ranked = self.ranked_alive();
        let Some(&best) = ranked.first() else { return };
        for &c in &ranked[1..] {
            if paired_t_test(&self.losses[c], &self.losses[best]).worse_at(alpha) {
                self.alive[c] = false;
                self.eliminated_after[c] = Some(self.blocks_seen);
            }
        }
    }
}

fn thread_pool(workers: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::config("workers", e.to_string()))
}

/// Races `candidates` over `blocks` (already ordered) within `budget`
/// experiments.
///
/// Every alive candidate runs every instance of a block, with seeds shared
/// between candidates. After `first_test_after_blocks` blocks, and after every
/// block thereafter, candidates significantly worse than the incumbent are
/// eliminated. A block that would overrun the budget is not started.
#[allow(clippy::too_many_arguments)]
pub fn race(
    target: &dyn Target,
    candidates: Vec<Candidate>,
    blocks: &[Block],
    settings: &TunerSettings,
    iteration: usize,
    budget: u64,
    journal: &mut Journal<'_>,
) -> Result<RaceState> {
    if candidates.len() < 2 {
        return Err(Error::config("candidates", "a race needs at least two candidates"));
    }
    settings.validate()?;
    let pool = thread_pool(settings.workers)?;
    let mut state = RaceState::new(iteration, candidates);

    for (b, block) in blocks.iter().enumerate() {
        let alive = state.alive_indices();
        let cost = (alive.len() * block.len()) as u64;
        if state.experiments_used + cost > budget {
            break;
        }
        let planned: Vec<ExperimentRecord> = alive
            .iter()
            .flat_map(|&c| {
                let id = state.candidates[c].id;
                (0..block.len()).map(move |i| ExperimentRecord {
                    iteration,
                    block: b,
                    instance: i,
                    candidate: id,
                    seed: derive_seed(settings.seed, &[RUN_STREAM, iteration as u64, b as u64, i as u64]),
                    loss: f64::NAN,
                })
            })
            .collect();
        let alive_refs: Vec<&Candidate> = alive.iter().map(|&c| &state.candidates[c]).collect();
        let done = journal.run_block(planned, &alive_refs, block, target, &pool)?;
        for (chunk, &c) in done.chunks(block.len()).zip(&alive) {
            state.losses[c].extend(chunk.iter().map(|e| e.loss));
        }
        state.experiments_used += cost;
        state.blocks_seen += 1;

        if state.blocks_seen >= settings.first_test_after_blocks {
            state.eliminate_worse(settings.alpha);
            if state.alive_indices().len() <= settings.min_survivors {
                break;
            }
        }
    }

    state.elites = state
        .ranked_alive()
        .into_iter()
        .map(|c| state.candidates[c].clone())
        .collect();
    Ok(state)
}

/// `2 + round(log2(n_params))`.
pub fn iteration_count(n_params: usize) -> usize {
    2 + (n_params.max(1) as f64).log2().round() as usize
}

/// `min(floor(budget / (instances_per_block * (first_test + 2))), cap)`.
pub fn candidates_for_budget(budget: u64, instances_per_block: usize, settings: &TunerSettings) -> usize {
    let per_candidate = (instances_per_block * (settings.first_test_after_blocks + 2)) as u64;
    ((budget / per_candidate) as usize).min(settings.max_candidates)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedElite {
    pub rank: usize,
    pub candidate: Candidate,
    pub mean_loss: f64,
    pub instances: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TuneOutcome {
    pub elites: Vec<RankedElite>,
    pub races: Vec<RaceState>,
    pub experiments: Vec<ExperimentRecord>,
    pub experiments_used: u64,
}

/// Full tuning run over `suite`.
pub fn tune(
    target: &dyn Target,
    space: &ParamSpace,
    suite: &SuiteSpec,
    settings: &TunerSettings,
) -> Result<TuneOutcome> {
    tune_with_journal(target, space, suite, settings, Journal::new())
}

pub fn tune_with_journal(
    target: &dyn Target,
    space: &ParamSpace,
    suite: &SuiteSpec,
    settings: &TunerSettings,
    mut journal: Journal<'_>,
) -> Result<TuneOutcome> {
    settings.validate()?;
    let blocks = order_blocks(generate_suite(
        suite,
        settings.n_blocks,
        derive_seed(settings.seed, &[SUITE_STREAM]),
    )?);
    let per_block = suite.functions.len();
    let n_iter = iteration_count(space.len());

    let first_budget = settings.max_experiments / n_iter as u64;
    let initial = candidates_for_budget(first_budget, per_block, settings);
    if initial < 2 {
        return Err(Error::config(
            "max_experiments",
            format!(
                "{} experiments cannot race two candidates through {} blocks of {} instances",
                settings.max_experiments,
                settings.first_test_after_blocks + 2,
                per_block
            ),
        ));
    }

    let mut remaining = settings.max_experiments;
    let mut races: Vec<RaceState> = Vec::new();
    let mut elites: Vec<Candidate> = Vec::new();
    let mut next_id = 0u64;
    for j in 1..=n_iter {
        let budget = remaining / (n_iter - j + 1) as u64;
        let total = candidates_for_budget(budget, per_block, settings);
        let candidates = if j == 1 {
            sample_initial(space, total, derive_seed(settings.seed, &[SAMPLE_STREAM]))
        } else {
            let n_new = total.saturating_sub(elites.len());
            let children = refine(
                &elites,
                space,
                j - 1,
                n_new,
                next_id,
                derive_seed(settings.seed, &[REFINE_STREAM, j as u64]),
            );
            elites.iter().cloned().chain(children).collect::<Vec<_>>()
        };
        if candidates.len() < 2 {
            break;
        }
        next_id = next_id.max(candidates.iter().map(|c| c.id + 1).max().unwrap_or(0));
        let state = race(target, candidates, &blocks, settings, j, budget, &mut journal)?;
        remaining -= state.experiments_used;
        elites = state.elites.iter().take(iteration_count(space.len())).cloned().collect();
        races.push(state);
    }

    let last = races.last().expect("first iteration always races");
    let ranked = last
        .elites
        .iter()
        .enumerate()
        .map(|(rank, cand)| {
            let entrant = last
                .candidates
                .iter()
                .position(|c| c.id == cand.id)
                .expect("elite entered the race");
            RankedElite {
                rank: rank + 1,
                candidate: cand.clone(),
                mean_loss: last.mean_loss(entrant),
                instances: last.losses[entrant].len(),
            }
        })
        .collect();
    Ok(TuneOutcome {
        elites: ranked,
        experiments_used: settings.max_experiments - remaining,
        races,
        experiments: journal.into_records(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cma::CmaConfig;
    use crate::suites::{FunctionId, SuiteName};

    fn blocks(n: usize, per_block: usize) -> Vec<Block> {
        (0..n)
            .map(|b| {
                Block::new(
                    FunctionId::ALL[..per_block]
                        .iter()
                        .map(|&f| InstanceSpec::unbounded(f, 2, b as u64, 10 + b as u64))
                        .collect(),
                )
                .unwrap()
            })
            .collect()
    }

    fn base_loss(inst: &InstanceSpec, seed: u64) -> f64 {
        (inst.function as usize as f64) * 10.0 + inst.budget as f64 + (seed % 1000) as f64 * 1e-3
    }

    #[test]
    fn shifted_candidate_dies_at_first_test() {
        let space = ParamSpace::cma();
        let a = space.from_cma_config(&CmaConfig::DEFAULT, 0).unwrap();
        let b = space.from_cma_config(&CmaConfig::new(2.0, 3, false, false).unwrap(), 1).unwrap();
        let target = |c: &Candidate, inst: &InstanceSpec, seed: u64| -> Result<f64> {
            let noise = ((seed >> 7) % 13) as f64 * 1e-6;
            Ok(base_loss(inst, seed) + if c.id == 1 { 100.0 + noise } else { 0.0 })
        };
        let settings = TunerSettings {
            min_survivors: 1,
            ..TunerSettings::default()
        };
        let state = race(&target, vec![a, b], &blocks(8, 10), &settings, 1, 10_000, &mut Journal::new()).unwrap();
        assert_eq!(state.eliminated_after, vec![None, Some(5)]);
        assert_eq!(state.blocks_seen, 5);
        assert_eq!(state.experiments_used, 100);
        assert_eq!(state.elites.len(), 1);
        assert_eq!(state.elites[0].id, 0);
    }

    #[test]
    fn identical_candidates_survive() {
        let space = ParamSpace::cma();
        let a = space.from_cma_config(&CmaConfig::DEFAULT, 0).unwrap();
        let mut b = a.clone();
        b.id = 1;
        let target = |_: &Candidate, inst: &InstanceSpec, seed: u64| Ok(base_loss(inst, seed));
        let settings = TunerSettings {
            min_survivors: 1,
            ..TunerSettings::default()
        };
        let state = race(&target, vec![a, b], &blocks(9, 3), &settings, 1, 10_000, &mut Journal::new()).unwrap();
        assert_eq!(state.alive, vec![true, true]);
        assert_eq!(state.blocks_seen, 9);
    }

    #[test]
    fn experiments_count_per_block() {
        let space = ParamSpace::cma();
        let cands = sample_initial(&space, 10, 0);
        let target = |_: &Candidate, inst: &InstanceSpec, seed: u64| Ok(base_loss(inst, seed));
        let state = race(&target, cands, &blocks(5, 10), &TunerSettings::default(), 1, 10_000, &mut Journal::new()).unwrap();
        assert_eq!(state.experiments_used, 500);
        assert_eq!(state.losses.iter().map(Vec::len).sum::<usize>(), 500);
    }

    #[test]
    fn block_overrunning_budget_is_not_started() {
        let space = ParamSpace::cma();
        let cands = sample_initial(&space, 4, 0);
        let target = |_: &Candidate, inst: &InstanceSpec, seed: u64| Ok(base_loss(inst, seed));
        let mut journal = Journal::new();
        let state = race(&target, cands, &blocks(6, 10), &TunerSettings::default(), 1, 130, &mut journal).unwrap();
        assert_eq!(state.blocks_seen, 3);
        assert_eq!(state.experiments_used, 120);
        assert_eq!(journal.records().len(), 120);
        assert!(state.losses.iter().all(|l| l.len() == 30));
    }

    #[test]
    fn parallel_matches_sequential() {
        let space = ParamSpace::cma();
        let suite = SuiteSpec::named(SuiteName::Yatuningbbob).with_dimension_cap(4).unwrap();
        let mut settings = TunerSettings {
            max_experiments: 600,
            n_blocks: 8,
            seed: 3,
            ..TunerSettings::default()
        };
        let seq = tune(&CmaTarget::default(), &space, &suite, &settings).unwrap();
        settings.workers = 4;
        let par = tune(&CmaTarget::default(), &space, &suite, &settings).unwrap();
        assert_eq!(seq, par);
    }

    #[test]
    fn budget_too_small_is_a_configuration_error() {
        let settings = TunerSettings {
            max_experiments: 100,
            ..TunerSettings::default()
        };
        let err = tune(
            &CmaTarget::default(),
            &ParamSpace::cma(),
            &SuiteSpec::named(SuiteName::Yasmallbbob),
            &settings,
        )
        .unwrap_err();
        assert!(matches!(err, Error::InvalidConfig { ref field, .. } if field == "max_experiments"));
    }

    #[test]
    fn iteration_count_formula() {
        assert_eq!(iteration_count(4), 4);
        assert_eq!(iteration_count(1), 2);
        assert_eq!(iteration_count(8), 5);
    }

    #[test]
    fn settings_validation() {
        let bad = [
            TunerSettings { first_test_after_blocks: 0, ..TunerSettings::default() },
            TunerSettings { alpha: 0.0, ..TunerSettings::default() },
            TunerSettings { alpha: 1.0, ..TunerSettings::default() },
            TunerSettings { n_blocks: 3, ..TunerSettings::default() },
        ];
        for s in bad {
            assert!(s.validate().is_err(), "{s:?}");
        }
        assert!(TunerSettings::default().validate().is_ok());
    }
}
