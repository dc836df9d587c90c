use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::metrics::{EpisodeRecord, RunMetrics};
use super::spec::ExperimentSpec;
use crate::driver::Trial;
use crate::env::Variant;
use crate::error::{Result, SivError};
use crate::feedback::{drain_pushes, sample_at_tick, HeldSamples, PushChannel};
use crate::seed::{derive_seed, episode_seed};
use crate::user::SyntheticUser;

/// Outcome of a full experiment. Records are in canonical
/// (variant, run, episode) order whatever order the cells executed in.
#[derive(Debug, Clone)]
pub struct ExperimentResult {
    pub records: Vec<EpisodeRecord>,
    pub metrics: RunMetrics,
    /// (variant, run) cells in the order they were executed.
    pub execution_order: Vec<(Variant, usize)>,
}

/// Runs one episode against the synthetic user. `trial` must have just been
/// started with [`Trial::start_episode`].
pub fn run_episode(trial: &mut Trial, user: &mut SyntheticUser, run: usize, seed: u64) -> Result<EpisodeRecord> {
    let tick_ms = trial.env().tick_ms;
    let mut held = HeldSamples::new();
    let mut pushes = PushChannel::new();
    let mut tick = 0u64;
    loop {
        let t_ms = tick * tick_ms;
        let feedback = user.react(trial.state(), t_ms);
        held.feed(feedback.sample);
        if let Some(p) = feedback.push {
            pushes.send(p);
        }
        let hand = sample_at_tick(&mut held, t_ms)?;
        let push = drain_pushes(&mut pushes, t_ms);
        let report = trial.tick(hand, push, tick)?;
        tick += 1;
        if let Some(end) = report.end {
            return Ok(EpisodeRecord {
                variant: trial.variant(),
                run,
                episode: end.episode,
                steps: end.steps,
                pushes: end.pushes,
                total_reward: end.reward,
                truncated: end.truncated,
                seed,
            });
        }
    }
}

/// Starts episode `episode` of `run` with its derived seeds and plays it out.
pub fn play_episode(
    spec: &ExperimentSpec,
    trial: &mut Trial,
    user: &mut SyntheticUser,
    run: usize,
    episode: usize,
) -> Result<EpisodeRecord> {
    let seed = episode_seed(spec.master_seed, trial.variant().label(), run, episode);
    trial.start_episode(episode, seed);
    user.begin_episode(derive_seed(seed, &["user"]));
    run_episode(trial, user, run, seed)
}

pub fn new_trial(spec: &ExperimentSpec, variant: Variant) -> Result<Trial> {
    Trial::new(variant, spec.env.clone(), spec.preference_table(), spec.agent.clone(), spec.coding)
}

/// One (variant, run) cell: a fresh learner carried through every episode.
pub fn run_cell(spec: &ExperimentSpec, variant: Variant, run: usize) -> Result<Vec<EpisodeRecord>> {
    let mut trial = new_trial(spec, variant)?;
    let mut user = SyntheticUser::new(spec.user.clone(), spec.preference_table());
    (0..spec.episodes)
        .map(|e| play_episode(spec, &mut trial, &mut user, run, e))
        .collect()
}

/// Execution order of the (variant, run) cells: variant-major then
/// run-major, permuted from the master seed when blind shuffling is on.
pub fn execution_order(spec: &ExperimentSpec) -> Vec<(Variant, usize)> {
    let mut cells: Vec<(Variant, usize)> = spec
        .variants
        .iter()
        .flat_map(|&v| (0..spec.runs).map(move |r| (v, r)))
        .collect();
    if spec.blind_shuffle {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(spec.master_seed, &["shuffle"]));
        cells.shuffle(&mut rng);
    }
    cells
}

pub fn run_experiment(spec: &ExperimentSpec) -> Result<ExperimentResult> {
    run_experiment_parallel(spec, 1)
}

/// Runs the experiment with up to `threads` cells in flight.
pub fn run_experiment_parallel(spec: &ExperimentSpec, threads: usize) -> Result<ExperimentResult> {
    spec.validate()?;
    let order = execution_order(spec);
    let cells: Vec<Vec<EpisodeRecord>> = if threads > 1 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .map_err(|e| SivError::Config(format!("thread pool: {e}")))?;
        pool.install(|| {
            order
                .par_iter()
                .map(|&(v, r)| run_cell(spec, v, r))
                .collect::<Result<Vec<_>>>()
        })?
    } else {
        order
            .iter()
            .map(|&(v, r)| run_cell(spec, v, r))
            .collect::<Result<Vec<_>>>()?
    };
    let mut records: Vec<EpisodeRecord> = cells.into_iter().flatten().collect();
    let rank = |v: Variant| spec.variants.iter().position(|&x| x == v).unwrap_or(usize::MAX);
    records.sort_by_key(|r| (rank(r.variant), r.run, r.episode));
    let metrics = RunMetrics::from_records(&records);
    Ok(ExperimentResult { records, metrics, execution_order: order })
}

/// Repeats the experiment for `count` consecutive master seeds starting at
/// the spec's own.
pub fn run_seeds(spec: &ExperimentSpec, count: usize, threads: usize) -> Result<Vec<(u64, ExperimentResult)>> {
    (0..count as u64)
        .map(|i| {
            let seeded = ExperimentSpec { master_seed: spec.master_seed.wrapping_add(i), ..spec.clone() };
            run_experiment_parallel(&seeded, threads).map(|r| (seeded.master_seed, r))
        })
        .collect()
}
