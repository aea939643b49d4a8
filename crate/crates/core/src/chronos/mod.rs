//! Discrete-event timing simulation of a training cluster, straggler
//! slowdown measurement, and a trainer driven by the simulated event order.

mod coupled;
mod events;
mod profile;
mod simulate;

pub use coupled::{coupled_run, derived_staleness, DEFAULT_COUPLED_STALENESS};
pub use events::{Event, EventKind, EventLog};
pub use profile::{ClusterProfile, Straggler};
pub use simulate::{simulate_epochs, simulate_wallclock, slowdown_experiment, SlowdownReport};
