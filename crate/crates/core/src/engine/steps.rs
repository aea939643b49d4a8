//! Single-iteration update rules. Every step takes one pre-drawn batch per
//! learner so that the same rule can be replayed by the timing simulator,
//! and returns each learner's minibatch loss at the point its gradient was
//! taken.

use rand::Rng;
use rayon::prelude::*;

use super::state::{mean_of, LearnerState};
use crate::mixing::{build_fixed_ring, build_random_ring, random_permutation, MixingMatrix};
use crate::objectives::{Objective, SampleBatch};
use crate::{Error, Result};

/// Maximum elementwise deviation tolerated between learners that are
/// supposed to hold the same model.
pub const SYNC_TOL: f64 = 1e-12;

fn check_inputs(states: &[LearnerState], batches: &[SampleBatch]) -> Result<()> {
    if states.is_empty() {
        return Err(Error::InvalidArgument("no learners".into()));
    }
    if batches.len() != states.len() {
        return Err(Error::Dimension {
            expected: states.len(),
            got: batches.len(),
        });
    }
    Ok(())
}

/// Per-learner `(loss, gradient)` at the given points. Learners are
/// independent, so they are evaluated in parallel and collected in order.
fn evaluate(objective: &dyn Objective, points: &[&[f64]], batches: &[SampleBatch]) -> (Vec<f64>, Vec<Vec<f64>>) {
    points
        .par_iter()
        .zip(batches.par_iter())
        .map(|(w, b)| objective.loss_and_gradient(w, b))
        .unzip()
}

/// `w - lr * g`, elementwise.
pub fn sgd_update(w: &[f64], g: &[f64], lr: f64) -> Vec<f64> {
    w.iter().zip(g).map(|(x, d)| x - lr * d).collect()
}

/// Synchronous step: every learner takes a local SGD step from the shared
/// model and the results are averaged exactly.
pub fn step_sdpsgd(
    states: &mut [LearnerState],
    objective: &dyn Objective,
    batches: &[SampleBatch],
    lr: f64,
) -> Result<Vec<f64>> {
    check_inputs(states, batches)?;
    let shared = states[0].model().to_vec();
    for s in states.iter().skip(1) {
        let deviation = s
            .model()
            .iter()
            .zip(&shared)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        if !(deviation <= SYNC_TOL) {
            return Err(Error::SyncViolation {
                learner: s.id(),
                deviation,
            });
        }
    }
    let (losses, grads) = evaluate(objective, &vec![shared.as_slice(); states.len()], batches);
    let locals: Vec<Vec<f64>> = grads.iter().map(|g| sgd_update(&shared, g, lr)).collect();
    let avg = mean_of(locals.iter().map(Vec::as_slice));
    for s in states.iter_mut() {
        s.push(avg.clone());
    }
    Ok(losses)
}

/// Gossip step: `W_{k+1} = W_k T_k - lr * G(W_k)`.
pub fn step_adpsgd_mixing(
    states: &mut [LearnerState],
    objective: &dyn Objective,
    batches: &[SampleBatch],
    lr: f64,
    mixing: &MixingMatrix,
) -> Result<Vec<f64>> {
    step_generic_staleness(states, objective, batches, lr, mixing, &vec![0; states.len()])
}

/// Delay-by-one step: the gradient is taken at each learner's own model
/// while the exact average is formed, then subtracted from that average.
pub fn step_d1d(
    states: &mut [LearnerState],
    objective: &dyn Objective,
    batches: &[SampleBatch],
    lr: f64,
) -> Result<Vec<f64>> {
    check_inputs(states, batches)?;
    let points: Vec<&[f64]> = states.iter().map(LearnerState::model).collect();
    let (losses, grads) = evaluate(objective, &points, batches);
    let avg = mean_of(states.iter().map(LearnerState::model));
    for (s, g) in states.iter_mut().zip(&grads) {
        s.push(sgd_update(&avg, g, lr));
    }
    Ok(losses)
}

/// `W_{k+1} = W_k T_k - lr * G`, where column `l` of `G` is evaluated at
/// learner `l`'s model from `taus[l]` iterations ago.
pub fn step_generic_staleness(
    states: &mut [LearnerState],
    objective: &dyn Objective,
    batches: &[SampleBatch],
    lr: f64,
    mixing: &MixingMatrix,
    taus: &[usize],
) -> Result<Vec<f64>> {
    check_inputs(states, batches)?;
    if mixing.order() != states.len() {
        return Err(Error::Dimension {
            expected: states.len(),
            got: mixing.order(),
        });
    }
    if taus.len() != states.len() {
        return Err(Error::Dimension {
            expected: states.len(),
            got: taus.len(),
        });
    }
    let points = states
        .iter()
        .zip(taus)
        .map(|(s, &tau)| s.lagged(tau))
        .collect::<Result<Vec<&[f64]>>>()?;
    let (losses, grads) = evaluate(objective, &points, batches);
    let models: Vec<&[f64]> = states.iter().map(LearnerState::model).collect();
    let next: Vec<Vec<f64>> = (0..states.len())
        .map(|l| sgd_update(&mixing.mix_row(l, &models), &grads[l], lr))
        .collect();
    for (s, w) in states.iter_mut().zip(next) {
        s.push(w);
    }
    Ok(losses)
}

/// Source of per-iteration ring mixing matrices.
#[derive(Debug, Clone)]
pub enum RingSchedule {
    /// The same neighbor ring every iteration.
    Fixed(MixingMatrix),
    /// A fresh uniformly random ring every iteration.
    Random { order: usize },
}

impl RingSchedule {
    pub fn fixed(order: usize) -> Result<Self> {
        Ok(Self::Fixed(build_fixed_ring(order)?))
    }

    pub fn random(order: usize) -> Result<Self> {
        // validates the order once up front
        build_fixed_ring(order)?;
        Ok(Self::Random { order })
    }

    pub fn next<R: Rng + ?Sized>(&self, rng: &mut R) -> MixingMatrix {
        match self {
            Self::Fixed(m) => m.clone(),
            Self::Random { order } => {
                let perm = random_permutation(*order, rng);
                build_random_ring(*order, &perm).expect("order validated at construction")
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::state::{init_learners, mean_model};
    use crate::mixing::build_uniform;
    use crate::objectives::{make_quadratic_with, sample_batch, Dataset};
    use crate::rng;

    fn setup(learners: usize) -> (crate::objectives::Quadratic, Dataset, Vec<SampleBatch>) {
        let (obj, data) = make_quadratic_with(6, 10.0, 0.5, 256, 0.2, 3).unwrap();
        let mut r = rng::stream(3, 9);
        let batches = (0..learners)
            .map(|_| sample_batch(&data, 4, &mut r).unwrap())
            .collect();
        (obj, data, batches)
    }

    fn spread(states: &mut [LearnerState]) {
        for (i, s) in states.iter_mut().enumerate() {
            let w: Vec<f64> = (0..s.model().len())
                .map(|d| (i * 7 + d) as f64 * 0.1 - 1.0)
                .collect();
            s.push(w);
        }
    }

    #[test]
    fn sdpsgd_rejects_desynchronized_models() {
        let (obj, _, batches) = setup(3);
        let mut states = init_learners(3, &[0.0; 6], 1);
        states[2].push(vec![1e-9; 6]);
        let err = step_sdpsgd(&mut states, &obj, &batches, 0.1).unwrap_err();
        assert!(matches!(err, Error::SyncViolation { learner: 2, .. }));
    }

    #[test]
    fn sdpsgd_keeps_models_identical() {
        let (obj, _, batches) = setup(4);
        let mut states = init_learners(4, &[0.5; 6], 1);
        step_sdpsgd(&mut states, &obj, &batches, 0.1).unwrap();
        for s in &states[1..] {
            assert_eq!(s.model(), states[0].model());
        }
    }

    #[test]
    fn d1d_columns_differ_by_gradient_difference() {
        let (obj, _, batches) = setup(4);
        let mut states = init_learners(4, &[0.0; 6], 1);
        spread(&mut states);
        let grads: Vec<Vec<f64>> = states
            .iter()
            .zip(&batches)
            .map(|(s, b)| obj.gradient(s.model(), b))
            .collect();
        let lr = 0.05;
        step_d1d(&mut states, &obj, &batches, lr).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                for d in 0..6 {
                    let lhs = states[i].model()[d] - states[j].model()[d];
                    let rhs = -lr * (grads[i][d] - grads[j][d]);
                    assert!((lhs - rhs).abs() < 1e-13);
                }
            }
        }
    }

    #[test]
    fn uniform_zero_staleness_matches_d1d() {
        let (obj, _, batches) = setup(5);
        let mut a = init_learners(5, &[0.0; 6], 1);
        spread(&mut a);
        let mut b = a.clone();
        step_d1d(&mut a, &obj, &batches, 0.1).unwrap();
        let u = build_uniform(5).unwrap();
        step_generic_staleness(&mut b, &obj, &batches, 0.1, &u, &[0; 5]).unwrap();
        for (x, y) in a.iter().zip(&b) {
            for (p, q) in x.model().iter().zip(y.model()) {
                assert!((p - q).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn staleness_beyond_history_is_an_error() {
        let (obj, _, batches) = setup(3);
        let mut states = init_learners(3, &[0.0; 6], 2);
        let t = build_fixed_ring(3).unwrap();
        let err = step_generic_staleness(&mut states, &obj, &batches, 0.1, &t, &[0, 2, 0]).unwrap_err();
        assert!(matches!(err, Error::StalenessOverflow { learner: 1, requested: 2, max: 1, .. }));
        // the failed step leaves every learner untouched
        assert!(states.iter().all(|s| s.model() == [0.0; 6]));
    }

    #[test]
    fn mixing_preserves_mean_without_gradients() {
        struct Flat;
        impl Objective for Flat {
            fn name(&self) -> &'static str {
                "flat"
            }
            fn dimension(&self) -> usize {
                6
            }
            fn loss(&self, _: &[f64], _: &[crate::objectives::Sample]) -> f64 {
                0.0
            }
            fn gradient(&self, _: &[f64], _: &[crate::objectives::Sample]) -> Vec<f64> {
                vec![0.0; 6]
            }
            fn initial_point(&self) -> Vec<f64> {
                vec![0.0; 6]
            }
        }
        let mut states = init_learners(7, &[0.0; 6], 1);
        spread(&mut states);
        let before = mean_model(&states);
        let sched = RingSchedule::random(7).unwrap();
        let mut r = rng::mixing_stream(1);
        let batches = vec![SampleBatch::default(); 7];
        for _ in 0..5 {
            let t = sched.next(&mut r);
            step_adpsgd_mixing(&mut states, &Flat, &batches, 0.3, &t).unwrap();
        }
        let after = mean_model(&states);
        for (a, b) in before.iter().zip(&after) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}
