use std::cmp::{Ordering, Reverse};
use std::collections::BinaryHeap;

use super::events::{Event, EventKind, EventLog};
use super::profile::ClusterProfile;
use crate::engine::Strategy;
use crate::{Error, Result};

/// Priority-queue entry ordered by time, then learner, then event kind,
/// then insertion order.
#[derive(Debug, Clone, Copy)]
struct Pending {
    event: Event,
    seq: u64,
}

impl Pending {
    fn key(&self) -> (f64, usize, EventKind, u64) {
        (self.event.t, self.event.learner, self.event.kind, self.seq)
    }
}

impl PartialEq for Pending {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Pending {}

impl PartialOrd for Pending {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Pending {
    fn cmp(&self, other: &Self) -> Ordering {
        let (a, b) = (self.key(), other.key());
        a.0.total_cmp(&b.0)
            .then(a.1.cmp(&b.1))
            .then(a.2.cmp(&b.2))
            .then(a.3.cmp(&b.3))
    }
}

#[derive(Default)]
struct EventQueue {
    heap: BinaryHeap<Reverse<Pending>>,
    seq: u64,
}

impl EventQueue {
    fn push(&mut self, t: f64, learner: usize, kind: EventKind, iteration: u64) {
        self.heap.push(Reverse(Pending {
            event: Event {
                t,
                learner,
                kind,
                iteration,
            },
            seq: self.seq,
        }));
        self.seq += 1;
    }

    fn pop(&mut self) -> Option<Event> {
        self.heap.pop().map(|Reverse(p)| p.event)
    }
}

/// Wall-clock timeline of one epoch of `iterations_per_learner` iterations.
pub fn simulate_wallclock(strategy: Strategy, profile: &ClusterProfile, iterations_per_learner: u64) -> Result<EventLog> {
    simulate_epochs(strategy, profile, iterations_per_learner, 1)
}

/// Timeline of `epochs` consecutive epochs.
pub fn simulate_epochs(
    strategy: Strategy,
    profile: &ClusterProfile,
    iterations_per_learner: u64,
    epochs: usize,
) -> Result<EventLog> {
    profile.validate()?;
    if iterations_per_learner == 0 {
        return Err(Error::InvalidArgument("iterations per learner must be at least 1".into()));
    }
    match strategy {
        Strategy::Sdpsgd | Strategy::AdpsgdD1d => Ok(synchronous(strategy, profile, iterations_per_learner, epochs)),
        Strategy::AdpsgdFm | Strategy::AdpsgdRm => {
            if profile.learners < 3 {
                return Err(Error::InvalidArgument(format!(
                    "{strategy} needs at least 3 learners, got {}",
                    profile.learners
                )));
            }
            Ok(asynchronous(profile, iterations_per_learner, epochs))
        }
        Strategy::GenericStaleness { .. } => Err(Error::InvalidArgument(
            "the timing simulator models only the four named strategies".into(),
        )),
    }
}

/// Lock-step rounds. Allreduce follows the slowest gradient for the
/// synchronous strategy and overlaps with compute for delay-by-one.
fn synchronous(strategy: Strategy, profile: &ClusterProfile, ipl: u64, epochs: usize) -> EventLog {
    let l = profile.learners;
    let compute: Vec<f64> = (0..l).map(|i| profile.compute_time_of(i)).collect();
    let slowest = compute.iter().copied().fold(0.0, f64::max);
    let mut log = EventLog::default();
    let mut t0 = 0.0;
    let mut round_events = Vec::with_capacity(5 * l);
    for r in 0..ipl * epochs as u64 {
        round_events.clear();
        let end = match strategy {
            Strategy::AdpsgdD1d => t0 + slowest.max(profile.allreduce_time) + profile.sync_overhead,
            _ => t0 + slowest + profile.allreduce_time,
        };
        for (learner, &c) in compute.iter().enumerate() {
            let ev = |t, kind| Event {
                t,
                learner,
                kind,
                iteration: r,
            };
            round_events.push(ev(t0, EventKind::GradStart));
            round_events.push(ev(t0 + c, EventKind::GradDone));
            let avg_start = if strategy == Strategy::AdpsgdD1d { t0 } else { t0 + slowest };
            round_events.push(ev(avg_start, EventKind::AvgStart));
            round_events.push(ev(avg_start + profile.allreduce_time, EventKind::AvgDone));
            round_events.push(ev(end, EventKind::Update));
        }
        round_events.sort_by(|a, b| {
            a.t.total_cmp(&b.t)
                .then(a.learner.cmp(&b.learner))
                .then(a.kind.cmp(&b.kind))
        });
        log.events.extend_from_slice(&round_events);
        t0 = end;
        if (r + 1) % ipl == 0 {
            log.epoch_ends.push(t0);
        }
    }
    log.total_time = t0;
    log
}

#[derive(Debug, Default, Clone)]
struct Pipeline {
    /// Completion times of started gradients not yet applied.
    grad_due: Vec<(u64, f64)>,
    grads_started: u64,
    grads_done: u64,
    grad_busy: bool,
    avgs_started: u64,
    avgs_done: u64,
    updates: u64,
    update_pending: bool,
}

/// Free-running learners. The GPU starts the next gradient as soon as the
/// previous one finishes, but keeps at most one gradient ahead of the last
/// applied update. Averaging for iteration `i` may begin once gradient `i`
/// is under way and update `i - 1` has landed. The CPU keeps repeating the
/// averaging while the gradient is computed, and the update uses the last
/// round that finished strictly before the gradient arrived (or waits for
/// the first round). Superseded rounds leave the model untouched, so only
/// the effective round is logged. Partners' models are read when that round
/// completes and partners never wait.
fn asynchronous(profile: &ClusterProfile, ipl: u64, epochs: usize) -> EventLog {
    let l = profile.learners;
    let compute: Vec<f64> = (0..l).map(|i| profile.compute_time_of(i)).collect();
    let epoch_updates = l as u64 * ipl;
    let target = epoch_updates * epochs as u64;
    let comm = profile.pairwise_comm_time;
    let mut pipes = vec![Pipeline::default(); l];
    let mut queue = EventQueue::default();
    let mut log = EventLog::default();
    let mut total = 0u64;

    let advance = |p: &mut Pipeline, learner: usize, t: f64, queue: &mut EventQueue| {
        let j = p.grads_started;
        if !p.grad_busy && p.updates + 1 >= j {
            queue.push(t, learner, EventKind::GradStart, j);
            p.grad_due.push((j, t + compute[learner]));
            p.grads_started += 1;
            p.grad_busy = true;
        }
        let j = p.avgs_started;
        if p.avgs_done == p.avgs_started && p.grads_started > j && p.updates >= j {
            let due = p
                .grad_due
                .iter()
                .find(|(i, _)| *i == j)
                .map_or(t, |&(_, d)| d);
            queue.push(effective_round_start(t, due, comm), learner, EventKind::AvgStart, j);
            p.avgs_started += 1;
        }
        let j = p.updates;
        if !p.update_pending && p.grads_done > j && p.avgs_done > j {
            queue.push(t, learner, EventKind::Update, j);
            p.update_pending = true;
        }
    };

    for (learner, p) in pipes.iter_mut().enumerate() {
        advance(p, learner, 0.0, &mut queue);
    }
    while total < target {
        let Some(ev) = queue.pop() else { break };
        let p = &mut pipes[ev.learner];
        match ev.kind {
            EventKind::GradStart => {
                queue.push(ev.t + compute[ev.learner], ev.learner, EventKind::GradDone, ev.iteration);
            }
            EventKind::AvgStart => {
                queue.push(ev.t + profile.pairwise_comm_time, ev.learner, EventKind::AvgDone, ev.iteration);
            }
            EventKind::GradDone => {
                p.grads_done += 1;
                p.grad_busy = false;
            }
            EventKind::AvgDone => p.avgs_done += 1,
            EventKind::Update => {
                p.updates += 1;
                p.update_pending = false;
                p.grad_due.retain(|(i, _)| *i != ev.iteration);
                total += 1;
                if total % epoch_updates == 0 {
                    log.epoch_ends.push(ev.t);
                }
            }
        }
        log.events.push(ev);
        log.total_time = ev.t;
        advance(p, ev.learner, ev.t, &mut queue);
    }
    log
}

/// Start of the last averaging round, in back-to-back rounds of length
/// `comm` from `from`, that completes strictly before `due`; `from` itself
/// when not even one round fits.
fn effective_round_start(from: f64, due: f64, comm: f64) -> f64 {
    if due <= from + comm {
        return from;
    }
    let mut rounds = ((due - from) / comm).ceil() as u64;
    while rounds > 1 {
        let start = from + (rounds - 1) as f64 * comm;
        if start + comm < due {
            return start;
        }
        rounds -= 1;
    }
    from
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlowdownReport {
    pub factor: f64,
    pub baseline_epoch_time: f64,
    pub straggler_epoch_time: f64,
    pub ratio: f64,
}

/// Epoch time with learner 0 slowed by each factor, relative to `base`.
pub fn slowdown_experiment(
    strategy: Strategy,
    base: &ClusterProfile,
    iterations_per_learner: u64,
    factors: &[f64],
) -> Result<Vec<SlowdownReport>> {
    let baseline = simulate_wallclock(strategy, base, iterations_per_learner)?.epoch_time();
    factors
        .iter()
        .map(|&factor| {
            let slowed = simulate_wallclock(strategy, &base.with_straggler(0, factor), iterations_per_learner)?;
            let straggler_epoch_time = slowed.epoch_time();
            Ok(SlowdownReport {
                factor,
                baseline_epoch_time: baseline,
                straggler_epoch_time,
                ratio: straggler_epoch_time / baseline,
            })
        })
        .collect()
}
