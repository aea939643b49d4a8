use std::collections::VecDeque;

use super::events::{EventKind, EventLog};
use super::profile::ClusterProfile;
use super::simulate::simulate_epochs;
use crate::engine::{
    init_learners, learner_streams, run_training, sgd_update, Recorder, RingSchedule, RunRecord, Strategy,
    StrategyConfig,
};
use crate::mixing::MixingMatrix;
use crate::objectives::{sample_batch, Dataset, Objective};
use crate::{rng, Error, Result};

/// Staleness bound used when none is configured. The simulated pipeline
/// never runs more than one gradient ahead, so this is never exceeded.
pub const DEFAULT_COUPLED_STALENESS: usize = 1;

/// Staleness of every gradient implied by the event order: for each
/// learner, the iteration index at `grad_start` minus the number of updates
/// that learner had applied by then.
pub fn derived_staleness(log: &EventLog, learners: usize) -> Vec<Vec<u64>> {
    let mut versions = vec![0u64; learners];
    let mut out = vec![Vec::new(); learners];
    for e in &log.events {
        match e.kind {
            EventKind::GradStart => out[e.learner].push(e.iteration - versions[e.learner]),
            EventKind::Update => versions[e.learner] += 1,
            _ => {}
        }
    }
    out
}

/// Trains while letting the simulated timeline decide which partner models
/// are averaged and how stale each gradient is.
///
/// Synchronous strategies are unaffected by timing, so their record is the
/// plain engine run and only the timeline is added. For the ring strategies
/// each learner evaluates its gradient on its own model at `grad_start`,
/// applies row `l` of that iteration's mixing matrix to the partners'
/// models as they are at `avg_done`, and subtracts the gradient at
/// `update`.
pub fn coupled_run(
    profile: &ClusterProfile,
    cfg: &StrategyConfig,
    max_staleness: usize,
    objective: &dyn Objective,
    data: &Dataset,
) -> Result<(RunRecord, EventLog)> {
    cfg.validate()?;
    profile.validate()?;
    if profile.learners != cfg.learners {
        return Err(Error::Dimension {
            expected: cfg.learners,
            got: profile.learners,
        });
    }
    let ipe = cfg.iterations_per_epoch(data.train_len());
    let mut log = simulate_epochs(cfg.strategy, profile, ipe as u64, cfg.epochs)?;
    match cfg.strategy {
        Strategy::Sdpsgd | Strategy::AdpsgdD1d => {
            let record = run_training(cfg, objective, data)?;
            let done = record.iterations.len() as u64;
            if done < (cfg.epochs * ipe) as u64 {
                log.events.retain(|e| e.iteration < done);
                log.total_time = log.events.last().map_or(0.0, |e| e.t);
                log.epoch_ends.truncate(record.epochs.len());
            }
            Ok((record, log))
        }
        Strategy::AdpsgdFm | Strategy::AdpsgdRm => replay_async(cfg, max_staleness, objective, data, ipe, log),
        Strategy::GenericStaleness { .. } => unreachable!("rejected by the simulator"),
    }
}

/// Mixing matrices indexed by iteration, drawn lazily in iteration order
/// from the run's mixing stream.
struct MixingCache {
    ring: RingSchedule,
    rng: rng::StreamRng,
    first: u64,
    matrices: VecDeque<MixingMatrix>,
}

impl MixingCache {
    fn get(&mut self, iteration: u64) -> &MixingMatrix {
        while self.first + (self.matrices.len() as u64) <= iteration {
            let m = self.ring.next(&mut self.rng);
            self.matrices.push_back(m);
        }
        &self.matrices[(iteration - self.first) as usize]
    }

    fn forget_before(&mut self, iteration: u64) {
        while self.first < iteration && !self.matrices.is_empty() {
            self.matrices.pop_front();
            self.first += 1;
        }
    }
}

fn replay_async(
    cfg: &StrategyConfig,
    max_staleness: usize,
    objective: &dyn Objective,
    data: &Dataset,
    ipe: usize,
    mut log: EventLog,
) -> Result<(RunRecord, EventLog)> {
    let l = cfg.learners;
    let w0 = objective.initial_point();
    let mut states = init_learners(l, &w0, 1);
    let mut rngs = learner_streams(cfg.seed, l);
    let ring = match cfg.strategy {
        Strategy::AdpsgdRm => RingSchedule::random(l)?,
        _ => RingSchedule::fixed(l)?,
    };
    let mut mixing = MixingCache {
        ring,
        rng: rng::mixing_stream(cfg.seed),
        first: 0,
        matrices: VecDeque::new(),
    };
    let mut recorder = Recorder::new(cfg, ipe, objective, data, &w0);
    let mut versions = vec![0u64; l];
    let mut grads: Vec<VecDeque<(u64, Vec<f64>, f64)>> = vec![VecDeque::new(); l];
    let mut averaged: Vec<Option<(u64, Vec<f64>)>> = vec![None; l];
    let epoch_updates = (l * ipe) as u64;
    let mut total = 0u64;
    let mut stop_at = None;

    for (idx, ev) in log.events.iter().enumerate() {
        let me = ev.learner;
        match ev.kind {
            EventKind::GradStart => {
                let tau = (ev.iteration - versions[me]) as usize;
                if tau > max_staleness {
                    return Err(Error::StalenessOverflow {
                        learner: me,
                        requested: tau,
                        max: max_staleness,
                        event: Some(ev.to_string()),
                    });
                }
                let batch = sample_batch(data, cfg.local_batch, &mut rngs[me])?;
                let w = states[me].model();
                let (loss, g) = objective.loss_and_gradient(w, &batch);
                grads[me].push_back((ev.iteration, g, loss));
            }
            EventKind::AvgDone => {
                let models: Vec<&[f64]> = states.iter().map(|s| s.model()).collect();
                let avg = mixing.get(ev.iteration).mix_row(me, &models);
                averaged[me] = Some((ev.iteration, avg));
            }
            EventKind::Update => {
                let (gi, g, loss) = grads[me].pop_front().ok_or_else(|| missing(ev, "gradient"))?;
                let (ai, avg) = averaged[me].take().ok_or_else(|| missing(ev, "average"))?;
                if gi != ev.iteration || ai != ev.iteration {
                    return Err(missing(ev, "matching gradient and average"));
                }
                let epoch = (total / epoch_updates) as usize;
                let lr = cfg.schedule.lr_at(epoch);
                states[me].push(sgd_update(&avg, &g, lr));
                versions[me] += 1;
                recorder.add_batch_loss(loss);
                total += 1;
                let min_version = versions.iter().copied().min().unwrap_or(0);
                mixing.forget_before(min_version);
                if total % l as u64 == 0 {
                    let k = total / l as u64;
                    if !recorder.iteration(k, epoch, lr, &states) {
                        stop_at = Some(idx);
                        break;
                    }
                    if total % epoch_updates == 0
                        && !recorder.end_epoch(epoch, k, lr, &states, objective, data)
                    {
                        stop_at = Some(idx);
                        break;
                    }
                }
            }
            EventKind::GradDone | EventKind::AvgStart => {}
        }
    }
    if let Some(idx) = stop_at {
        log.events.truncate(idx + 1);
        log.total_time = log.events[idx].t;
        log.epoch_ends.retain(|&t| t <= log.total_time);
    }
    Ok((recorder.finish(&states), log))
}

fn missing(ev: &super::events::Event, what: &str) -> Error {
    Error::InvalidState(format!("no {what} pending for {ev}"))
}
