use rand_distr::{Distribution, StandardNormal};

use super::{Dataset, Objective, Sample};
use crate::{rng, Error, Result};

/// L2 regularization strength; keeps the optimum unique.
pub const LOGISTIC_L2: f64 = 1e-4;

const LABEL_NOISE: f64 = 0.25;
const HELDOUT_FRACTION: f64 = 0.2;

/// Binary logistic regression with labels in `{-1, +1}`:
/// `mean log(1 + exp(-y x^T w)) + (l2 / 2) |w|^2`.
#[derive(Debug, Clone)]
pub struct Logistic {
    dimension: usize,
    l2: f64,
}

impl Logistic {
    pub fn new(dimension: usize) -> Self {
        Self {
            dimension,
            l2: LOGISTIC_L2,
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `log(1 + exp(x))` without overflow.
fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

impl Objective for Logistic {
    fn name(&self) -> &'static str {
        "logistic"
    }

    fn dimension(&self) -> usize {
        self.dimension
    }

    fn loss(&self, w: &[f64], batch: &[Sample]) -> f64 {
        let reg = 0.5 * self.l2 * dot(w, w);
        if batch.is_empty() {
            return reg;
        }
        let data: f64 = batch
            .iter()
            .map(|s| softplus(-s.target * dot(&s.features, w)))
            .sum();
        data / batch.len() as f64 + reg
    }

    fn gradient(&self, w: &[f64], batch: &[Sample]) -> Vec<f64> {
        let mut g: Vec<f64> = w.iter().map(|x| self.l2 * x).collect();
        if batch.is_empty() {
            return g;
        }
        let inv = 1.0 / batch.len() as f64;
        for s in batch {
            let margin = s.target * dot(&s.features, w);
            let coef = -s.target * sigmoid(-margin) * inv;
            for (gi, x) in g.iter_mut().zip(&s.features) {
                *gi += coef * x;
            }
        }
        g
    }

    fn initial_point(&self) -> Vec<f64> {
        vec![0.0; self.dimension]
    }
}

/// Gaussian features labelled by a random hyperplane, with Gaussian noise
/// added to the margin before thresholding.
pub fn make_logistic(dimension: usize, samples: usize, seed: u64) -> Result<(Logistic, Dataset)> {
    if dimension == 0 {
        return Err(Error::InvalidArgument("dimension must be at least 1".into()));
    }
    if samples < 10 {
        return Err(Error::InvalidArgument(format!(
            "logistic task needs at least 10 samples, got {samples}"
        )));
    }
    let mut r = rng::data_stream(seed);
    let mut normal = || -> f64 { StandardNormal.sample(&mut r) };
    let direction: Vec<f64> = (0..dimension).map(|_| normal()).collect();
    let norm = dot(&direction, &direction).sqrt();
    let all: Vec<Sample> = (0..samples)
        .map(|_| {
            let features: Vec<f64> = (0..dimension).map(|_| normal()).collect();
            let margin = dot(&features, &direction) / norm + LABEL_NOISE * normal();
            Sample {
                features,
                target: if margin >= 0.0 { 1.0 } else { -1.0 },
            }
        })
        .collect();
    Ok((Logistic::new(dimension), Dataset::split(all, HELDOUT_FRACTION)?))
}
