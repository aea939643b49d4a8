use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Straggler {
    pub learner: usize,
    pub factor: f64,
}

/// Per-learner compute cost and scalar communication costs, in seconds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClusterProfile {
    pub learners: usize,
    /// Time for one minibatch gradient on an unslowed learner.
    pub compute_time: f64,
    /// Optional per-learner multipliers on `compute_time`; empty means all 1.
    #[serde(default)]
    pub compute_multipliers: Vec<f64>,
    /// One pairwise model exchange (ring averaging).
    pub pairwise_comm_time: f64,
    /// One global allreduce.
    pub allreduce_time: f64,
    /// Fixed per-round cost of the delay-by-one synchronization.
    #[serde(default)]
    pub sync_overhead: f64,
    #[serde(default)]
    pub stragglers: Vec<Straggler>,
}

impl ClusterProfile {
    pub fn homogeneous(learners: usize, compute_time: f64, pairwise_comm_time: f64, allreduce_time: f64) -> Self {
        Self {
            learners,
            compute_time,
            compute_multipliers: Vec::new(),
            pairwise_comm_time,
            allreduce_time,
            sync_overhead: 0.0,
            stragglers: Vec::new(),
        }
    }

    /// Copy of the profile with one more straggler.
    pub fn with_straggler(&self, learner: usize, factor: f64) -> Self {
        let mut p = self.clone();
        p.stragglers.push(Straggler { learner, factor });
        p
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::InvalidArgument(format!("cluster profile: {what}")));
        if self.learners == 0 {
            return bad("at least one learner is required");
        }
        for (name, v) in [
            ("compute_time", self.compute_time),
            ("pairwise_comm_time", self.pairwise_comm_time),
            ("allreduce_time", self.allreduce_time),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return bad(&format!("{name} must be positive, got {v}"));
            }
        }
        if !(self.sync_overhead.is_finite() && self.sync_overhead >= 0.0) {
            return bad("sync_overhead must be non-negative");
        }
        if !self.compute_multipliers.is_empty() {
            if self.compute_multipliers.len() != self.learners {
                return bad("compute_multipliers must have one entry per learner");
            }
            if self.compute_multipliers.iter().any(|m| !(m.is_finite() && *m > 0.0)) {
                return bad("compute multipliers must be positive");
            }
        }
        for s in &self.stragglers {
            if s.learner >= self.learners {
                return bad(&format!("straggler learner {} out of range", s.learner));
            }
            if !(s.factor.is_finite() && s.factor >= 1.0) {
                return bad(&format!("straggler factor must be at least 1, got {}", s.factor));
            }
        }
        Ok(())
    }

    /// Effective gradient time of `learner`, including slowdowns.
    pub fn compute_time_of(&self, learner: usize) -> f64 {
        let base = self.compute_time * self.compute_multipliers.get(learner).copied().unwrap_or(1.0);
        self.stragglers
            .iter()
            .filter(|s| s.learner == learner)
            .fold(base, |t, s| t * s.factor)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn straggler_multiplies_compute() {
        let p = ClusterProfile::homogeneous(4, 0.5, 0.01, 0.1).with_straggler(2, 10.0);
        p.validate().unwrap();
        assert_eq!(p.compute_time_of(2), 5.0);
        assert_eq!(p.compute_time_of(1), 0.5);
    }

    #[test]
    fn rejects_invalid_profiles() {
        let p = ClusterProfile::homogeneous(4, 0.5, 0.01, 0.1);
        assert!(p.with_straggler(4, 2.0).validate().is_err());
        assert!(p.with_straggler(0, 0.5).validate().is_err());
        assert!(ClusterProfile::homogeneous(4, 0.0, 0.01, 0.1).validate().is_err());
        let mut m = p.clone();
        m.compute_multipliers = vec![1.0; 3];
        assert!(m.validate().is_err());
    }
}
