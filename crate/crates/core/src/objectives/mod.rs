//! Toy training tasks standing in for acoustic-model training.
//!
//! Each task pairs an [`Objective`] (mini-batch loss and exact gradient) with
//! a seeded synthetic [`Dataset`]. Learners draw mini-batches i.i.d. with
//! replacement from the shared training split.

mod data;
mod logistic;
mod mlp;
mod quadratic;
mod spec;

pub use data::{sample_batch, Dataset, Sample, SampleBatch};
pub use logistic::{make_logistic, Logistic, LOGISTIC_L2};
pub use mlp::{make_mlp, Mlp};
pub use quadratic::{make_quadratic, make_quadratic_with, Quadratic};
pub use spec::ObjectiveSpec;

/// A differentiable training loss over mini-batches of samples.
pub trait Objective: Send + Sync {
    fn name(&self) -> &'static str;

    /// Number of trainable parameters.
    fn dimension(&self) -> usize;

    /// Mean loss over `batch` at parameters `w`.
    fn loss(&self, w: &[f64], batch: &[Sample]) -> f64;

    /// Mean gradient over `batch` at parameters `w`.
    fn gradient(&self, w: &[f64], batch: &[Sample]) -> Vec<f64>;

    /// Loss and gradient together; objectives that share work between the
    /// two override this.
    fn loss_and_gradient(&self, w: &[f64], batch: &[Sample]) -> (f64, Vec<f64>) {
        (self.loss(w, batch), self.gradient(w, batch))
    }

    /// Loss on the full heldout split, without any injected noise.
    fn heldout_loss(&self, w: &[f64], data: &Dataset) -> f64 {
        self.loss(w, data.heldout())
    }

    /// Common starting point for every learner.
    fn initial_point(&self) -> Vec<f64>;

    fn optimum(&self) -> Option<&[f64]> {
        None
    }
}

/// Largest relative deviation between the analytic gradient and a central
/// finite difference of the loss, measured in the infinity norm.
pub fn gradient_check(objective: &dyn Objective, w: &[f64], batch: &[Sample], step: f64) -> f64 {
    let analytic = objective.gradient(w, batch);
    let mut probe = w.to_vec();
    let mut numeric = vec![0.0; w.len()];
    for i in 0..w.len() {
        let orig = probe[i];
        probe[i] = orig + step;
        let up = objective.loss(&probe, batch);
        probe[i] = orig - step;
        let down = objective.loss(&probe, batch);
        probe[i] = orig;
        numeric[i] = (up - down) / (2.0 * step);
    }
    let diff = analytic
        .iter()
        .zip(&numeric)
        .map(|(a, n)| (a - n).abs())
        .fold(0.0, f64::max);
    let scale = analytic
        .iter()
        .chain(&numeric)
        .map(|x| x.abs())
        .fold(1e-8, f64::max);
    diff / scale
}
