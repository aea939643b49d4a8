use std::collections::VecDeque;

use nalgebra::DMatrix;

use crate::{Error, Result};

/// One learner's current model plus the most recent past models, newest
/// first. The buffer is pre-filled with the initial model so lagged reads
/// are defined from the first iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct LearnerState {
    id: usize,
    history: VecDeque<Vec<f64>>,
    depth: usize,
}

impl LearnerState {
    pub fn new(id: usize, initial: Vec<f64>, depth: usize) -> Self {
        let depth = depth.max(1);
        Self {
            id,
            history: std::iter::repeat_n(initial, depth).collect(),
            depth,
        }
    }

    pub fn id(&self) -> usize {
        self.id
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn model(&self) -> &[f64] {
        &self.history[0]
    }

    /// Model from `tau` iterations ago; `tau = 0` is the current model.
    pub fn lagged(&self, tau: usize) -> Result<&[f64]> {
        self.history
            .get(tau)
            .map(Vec::as_slice)
            .ok_or(Error::StalenessOverflow {
                learner: self.id,
                requested: tau,
                max: self.depth - 1,
                event: None,
            })
    }

    pub fn push(&mut self, model: Vec<f64>) {
        self.history.push_front(model);
        self.history.truncate(self.depth);
    }
}

/// Builds `L` learners that all start from the same model.
pub fn init_learners(learners: usize, initial: &[f64], depth: usize) -> Vec<LearnerState> {
    (0..learners)
        .map(|id| LearnerState::new(id, initial.to_vec(), depth))
        .collect()
}

/// `D x L` matrix whose column `l` is learner `l`'s current model.
pub fn parameter_matrix(states: &[LearnerState]) -> DMatrix<f64> {
    let dim = states.first().map_or(0, |s| s.model().len());
    DMatrix::from_fn(dim, states.len(), |r, c| states[c].model()[r])
}

/// Mean of the learners' models, summed in learner order.
pub fn mean_model(states: &[LearnerState]) -> Vec<f64> {
    mean_of(states.iter().map(LearnerState::model))
}

pub(crate) fn mean_of<'a>(models: impl Iterator<Item = &'a [f64]>) -> Vec<f64> {
    let mut sum: Vec<f64> = Vec::new();
    let mut n = 0usize;
    for m in models {
        if sum.is_empty() {
            sum = vec![0.0; m.len()];
        }
        for (s, x) in sum.iter_mut().zip(m) {
            *s += x;
        }
        n += 1;
    }
    let n = n.max(1) as f64;
    sum.iter_mut().for_each(|s| *s /= n);
    sum
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn history_is_bounded_and_ordered() {
        let mut s = LearnerState::new(3, vec![0.0], 3);
        assert_eq!(s.lagged(2).unwrap(), &[0.0]);
        for v in 1..=5 {
            s.push(vec![v as f64]);
        }
        assert_eq!(s.model(), &[5.0]);
        assert_eq!(s.lagged(1).unwrap(), &[4.0]);
        assert_eq!(s.lagged(2).unwrap(), &[3.0]);
        assert!(matches!(
            s.lagged(3),
            Err(Error::StalenessOverflow {
                learner: 3,
                requested: 3,
                max: 2,
                ..
            })
        ));
    }

    #[test]
    fn parameter_matrix_columns_are_learners() {
        let mut states = init_learners(2, &[1.0, 2.0], 1);
        states[1].push(vec![5.0, 6.0]);
        let w = parameter_matrix(&states);
        assert_eq!(w.nrows(), 2);
        assert_eq!(w[(0, 1)], 5.0);
        assert_eq!(mean_model(&states), vec![3.0, 4.0]);
    }
}
