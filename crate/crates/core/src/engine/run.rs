use std::fmt;
use std::str::FromStr;

use super::schedule::LrSchedule;
use super::state::{init_learners, mean_model, parameter_matrix, LearnerState};
use super::steps::{step_adpsgd_mixing, step_d1d, step_generic_staleness, step_sdpsgd, RingSchedule};
use crate::mixing::{build_uniform, consensus_distance, ConsensusMode};
use crate::objectives::{sample_batch, Dataset, Objective, SampleBatch};
use crate::rng::{self, StreamRng};
use crate::{Error, Result};

/// Heldout loss above this multiple of the initial heldout loss counts as
/// divergence.
pub const DIVERGENCE_FACTOR: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Strategy {
    Sdpsgd,
    AdpsgdFm,
    AdpsgdRm,
    AdpsgdD1d,
    /// Every learner's gradient is taken `tau_max` iterations late.
    GenericStaleness { tau_max: usize },
}

impl Strategy {
    pub const NAMED: [Strategy; 4] = [
        Strategy::Sdpsgd,
        Strategy::AdpsgdFm,
        Strategy::AdpsgdRm,
        Strategy::AdpsgdD1d,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Self::Sdpsgd => "sdpsgd",
            Self::AdpsgdFm => "adpsgd_fm",
            Self::AdpsgdRm => "adpsgd_rm",
            Self::AdpsgdD1d => "adpsgd_d1d",
            Self::GenericStaleness { .. } => "generic_staleness",
        }
    }

    pub fn is_synchronous(&self) -> bool {
        matches!(self, Self::Sdpsgd | Self::AdpsgdD1d)
    }

    /// Smallest learner count for which the strategy is defined with more
    /// than one learner.
    fn min_learners(&self, mixing: GenericMixing) -> usize {
        match self {
            Self::AdpsgdFm | Self::AdpsgdRm => 3,
            Self::GenericStaleness { .. } if mixing != GenericMixing::Uniform => 3,
            _ => 2,
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::GenericStaleness { tau_max } => write!(f, "generic_staleness(tau={tau_max})"),
            other => f.write_str(other.name()),
        }
    }
}

impl FromStr for Strategy {
    type Err = Error;

    /// Parses the four named strategies; the staleness variant needs its
    /// bound and is built directly.
    fn from_str(s: &str) -> Result<Self> {
        Self::NAMED
            .into_iter()
            .find(|st| st.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown strategy '{s}'")))
    }
}

/// Mixing matrix used by the generic staleness strategy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum GenericMixing {
    #[default]
    FixedRing,
    RandomRing,
    Uniform,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StrategyConfig {
    pub strategy: Strategy,
    pub learners: usize,
    pub local_batch: usize,
    pub epochs: usize,
    pub schedule: LrSchedule,
    pub seed: u64,
    pub generic_mixing: GenericMixing,
}

impl StrategyConfig {
    pub fn validate(&self) -> Result<()> {
        if self.learners == 0 {
            return Err(Error::InvalidArgument("at least one learner is required".into()));
        }
        let min = self.strategy.min_learners(self.generic_mixing);
        if self.learners > 1 && self.learners < min {
            return Err(Error::InvalidArgument(format!(
                "{} needs at least {min} learners, got {}",
                self.strategy, self.learners
            )));
        }
        if self.local_batch == 0 {
            return Err(Error::InvalidArgument("local batch size must be at least 1".into()));
        }
        self.schedule.validate()
    }

    /// `N / (L M)`, at least one.
    pub fn iterations_per_epoch(&self, train_len: usize) -> usize {
        (train_len / (self.learners * self.local_batch).max(1)).max(1)
    }

    pub(crate) fn history_depth(&self) -> usize {
        match self.strategy {
            Strategy::GenericStaleness { tau_max } => tau_max + 1,
            _ => 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterationRecord {
    /// Number of completed iterations, starting at 1.
    pub k: u64,
    pub epoch: usize,
    pub lr: f64,
    pub consensus_distance: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub lr: f64,
    /// Heldout loss of the averaged model at the end of the epoch.
    pub heldout_loss: f64,
    /// Mean minibatch loss seen by the learners during the epoch.
    pub train_loss: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DivergenceReport {
    pub epoch: usize,
    pub iteration: u64,
    pub heldout_loss: f64,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub strategy: Strategy,
    pub learners: usize,
    pub iterations_per_epoch: usize,
    pub initial_heldout_loss: f64,
    pub iterations: Vec<IterationRecord>,
    pub epochs: Vec<EpochRecord>,
    /// Average of all learners' models when the run stopped.
    pub final_model: Vec<f64>,
    pub divergence: Option<DivergenceReport>,
}

impl RunRecord {
    pub fn diverged(&self) -> bool {
        self.divergence.is_some()
    }

    pub fn final_heldout_loss(&self) -> f64 {
        self.epochs
            .last()
            .map_or(self.initial_heldout_loss, |e| e.heldout_loss)
    }

    pub fn distance_to(&self, point: &[f64]) -> f64 {
        self.final_model
            .iter()
            .zip(point)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }
}

/// Collects metrics and applies the divergence rule. Shared with the
/// timing-coupled trainer so both produce identical records.
pub(crate) struct Recorder {
    record: RunRecord,
    epoch_loss_sum: f64,
    epoch_loss_count: usize,
}

impl Recorder {
    pub(crate) fn new(
        cfg: &StrategyConfig,
        ipe: usize,
        objective: &dyn Objective,
        data: &Dataset,
        initial: &[f64],
    ) -> Self {
        Self {
            record: RunRecord {
                strategy: cfg.strategy,
                learners: cfg.learners,
                iterations_per_epoch: ipe,
                initial_heldout_loss: objective.heldout_loss(initial, data),
                iterations: Vec::new(),
                epochs: Vec::new(),
                final_model: initial.to_vec(),
                divergence: None,
            },
            epoch_loss_sum: 0.0,
            epoch_loss_count: 0,
        }
    }

    pub(crate) fn add_batch_loss(&mut self, loss: f64) {
        self.epoch_loss_sum += loss;
        self.epoch_loss_count += 1;
    }

    /// Records consensus after iteration `k`. Returns `false` once the run
    /// has diverged.
    pub(crate) fn iteration(&mut self, k: u64, epoch: usize, lr: f64, states: &[LearnerState]) -> bool {
        if states.iter().any(|s| s.model().iter().any(|x| !x.is_finite())) {
            self.diverge(epoch, k, f64::NAN, "non-finite model parameters");
            return false;
        }
        let distance = consensus_distance(&parameter_matrix(states), ConsensusMode::ParameterColumns)
            .unwrap_or(f64::NAN);
        self.record.iterations.push(IterationRecord {
            k,
            epoch,
            lr,
            consensus_distance: distance,
        });
        true
    }

    /// Evaluates the averaged model at the end of `epoch`. Returns `false`
    /// once the run has diverged.
    pub(crate) fn end_epoch(
        &mut self,
        epoch: usize,
        k: u64,
        lr: f64,
        states: &[LearnerState],
        objective: &dyn Objective,
        data: &Dataset,
    ) -> bool {
        let avg = mean_model(states);
        let heldout = objective.heldout_loss(&avg, data);
        let train = self.epoch_loss_sum / self.epoch_loss_count.max(1) as f64;
        self.epoch_loss_sum = 0.0;
        self.epoch_loss_count = 0;
        self.record.epochs.push(EpochRecord {
            epoch,
            lr,
            heldout_loss: heldout,
            train_loss: train,
        });
        if !heldout.is_finite() {
            self.diverge(epoch, k, heldout, "non-finite heldout loss");
            return false;
        }
        let initial = self.record.initial_heldout_loss;
        if initial > 0.0 && heldout > DIVERGENCE_FACTOR * initial {
            self.diverge(epoch, k, heldout, "heldout loss exceeded 10x its initial value");
            return false;
        }
        true
    }

    fn diverge(&mut self, epoch: usize, iteration: u64, heldout_loss: f64, reason: &str) {
        self.record.divergence = Some(DivergenceReport {
            epoch,
            iteration,
            heldout_loss,
            reason: reason.to_string(),
        });
    }

    pub(crate) fn finish(mut self, states: &[LearnerState]) -> RunRecord {
        self.record.final_model = mean_model(states);
        self.record
    }
}

pub(crate) fn learner_streams(seed: u64, learners: usize) -> Vec<StreamRng> {
    (0..learners).map(|l| rng::learner_stream(seed, l)).collect()
}

/// Runs `epochs * N / (L M)` iterations of the configured strategy from the
/// objective's initial point. Divergence stops the run early and is reported
/// in the record rather than as an error.
pub fn run_training(cfg: &StrategyConfig, objective: &dyn Objective, data: &Dataset) -> Result<RunRecord> {
    cfg.validate()?;
    let l = cfg.learners;
    let ipe = cfg.iterations_per_epoch(data.train_len());
    let w0 = objective.initial_point();
    let mut states = init_learners(l, &w0, cfg.history_depth());
    let mut learner_rngs = learner_streams(cfg.seed, l);
    let mut mixing_rng = rng::mixing_stream(cfg.seed);
    let mut recorder = Recorder::new(cfg, ipe, objective, data, &w0);

    let ring = match (l, cfg.strategy, cfg.generic_mixing) {
        (1, _, _) => None,
        (_, Strategy::AdpsgdFm, _) => Some(RingSchedule::fixed(l)?),
        (_, Strategy::AdpsgdRm, _) => Some(RingSchedule::random(l)?),
        (_, Strategy::GenericStaleness { .. }, GenericMixing::FixedRing) => Some(RingSchedule::fixed(l)?),
        (_, Strategy::GenericStaleness { .. }, GenericMixing::RandomRing) => Some(RingSchedule::random(l)?),
        _ => None,
    };
    let uniform = if l > 1 { Some(build_uniform(l)?) } else { None };
    let lag = match cfg.strategy {
        Strategy::GenericStaleness { tau_max } => tau_max,
        _ => 0,
    };
    let taus = vec![lag; l];

    let total = (cfg.epochs * ipe) as u64;
    for k in 0..total {
        let epoch = (k / ipe as u64) as usize;
        let lr = cfg.schedule.lr_at(epoch);
        let batches = learner_rngs
            .iter_mut()
            .map(|r| sample_batch(data, cfg.local_batch, r))
            .collect::<Result<Vec<SampleBatch>>>()?;
        let losses = if l == 1 {
            step_sdpsgd(&mut states, objective, &batches, lr)?
        } else {
            match cfg.strategy {
                Strategy::Sdpsgd => step_sdpsgd(&mut states, objective, &batches, lr)?,
                Strategy::AdpsgdD1d => step_d1d(&mut states, objective, &batches, lr)?,
                Strategy::AdpsgdFm | Strategy::AdpsgdRm => {
                    let t = ring.as_ref().expect("ring strategies have a schedule").next(&mut mixing_rng);
                    step_adpsgd_mixing(&mut states, objective, &batches, lr, &t)?
                }
                Strategy::GenericStaleness { .. } => {
                    let t = match &ring {
                        Some(r) => r.next(&mut mixing_rng),
                        None => uniform.clone().expect("uniform mixing exists for two or more learners"),
                    };
                    step_generic_staleness(&mut states, objective, &batches, lr, &t, &taus)?
                }
            }
        };
        for loss in losses {
            recorder.add_batch_loss(loss);
        }
        if !recorder.iteration(k + 1, epoch, lr, &states) {
            break;
        }
        if (k + 1) % ipe as u64 == 0 && !recorder.end_epoch(epoch, k + 1, lr, &states, objective, data) {
            break;
        }
    }
    Ok(recorder.finish(&states))
}
