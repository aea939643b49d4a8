//! Training strategies and the sequential training loop.

mod run;
mod schedule;
mod state;
mod steps;

pub use run::{
    run_training, DivergenceReport, EpochRecord, GenericMixing, IterationRecord, RunRecord, Strategy,
    StrategyConfig, DIVERGENCE_FACTOR,
};
pub(crate) use run::{learner_streams, Recorder};
pub use schedule::{lr_at, LrSchedule};
pub use state::{init_learners, mean_model, parameter_matrix, LearnerState};
pub use steps::{
    sgd_update, step_adpsgd_mixing, step_d1d, step_generic_staleness, step_sdpsgd, RingSchedule, SYNC_TOL,
};
