use serde::{Deserialize, Serialize};

use super::quadratic::{DEFAULT_HELDOUT_FRACTION, DEFAULT_QUADRATIC_SAMPLES};
use super::{make_logistic, make_mlp, make_quadratic_with, Dataset, Objective};
use crate::Result;

/// Serializable description of a training task, as it appears in run
/// configs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ObjectiveSpec {
    Quadratic {
        dimension: usize,
        condition_number: f64,
        noise_sigma: f64,
        #[serde(default = "default_quadratic_samples")]
        samples: usize,
        #[serde(default = "default_heldout_fraction")]
        heldout_fraction: f64,
    },
    Logistic {
        dimension: usize,
        samples: usize,
    },
    Mlp {
        inputs: usize,
        hidden: usize,
        classes: usize,
        samples: usize,
    },
}

fn default_quadratic_samples() -> usize {
    DEFAULT_QUADRATIC_SAMPLES
}

fn default_heldout_fraction() -> f64 {
    DEFAULT_HELDOUT_FRACTION
}

impl ObjectiveSpec {
    pub fn build(&self, seed: u64) -> Result<(Box<dyn Objective>, Dataset)> {
        Ok(match *self {
            ObjectiveSpec::Quadratic {
                dimension,
                condition_number,
                noise_sigma,
                samples,
                heldout_fraction,
            } => {
                let (o, d) = make_quadratic_with(
                    dimension,
                    condition_number,
                    noise_sigma,
                    samples,
                    heldout_fraction,
                    seed,
                )?;
                (Box::new(o), d)
            }
            ObjectiveSpec::Logistic { dimension, samples } => {
                let (o, d) = make_logistic(dimension, samples, seed)?;
                (Box::new(o), d)
            }
            ObjectiveSpec::Mlp {
                inputs,
                hidden,
                classes,
                samples,
            } => {
                let (o, d) = make_mlp(inputs, hidden, classes, samples, seed)?;
                (Box::new(o), d)
            }
        })
    }
}
