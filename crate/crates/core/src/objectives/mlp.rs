use std::f64::consts::PI;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use super::{Dataset, Objective, Sample};
use crate::{rng, Error, Result};

const CLUSTER_RADIUS: f64 = 4.0;
const CLUSTER_SPREAD: f64 = 1.0;
const HELDOUT_FRACTION: f64 = 0.2;
const INIT_STREAM: u64 = 0x1_0000;

/// One-hidden-layer tanh network with a softmax cross-entropy loss.
///
/// Parameters are flattened as `[W1 (hidden x inputs), b1, W2 (classes x
/// hidden), b2]`, row-major.
#[derive(Debug, Clone)]
pub struct Mlp {
    inputs: usize,
    hidden: usize,
    classes: usize,
    seed: u64,
}

struct Forward {
    hidden: Vec<f64>,
    probs: Vec<f64>,
    loss: f64,
}

impl Mlp {
    pub fn new(inputs: usize, hidden: usize, classes: usize, seed: u64) -> Self {
        Self {
            inputs,
            hidden,
            classes,
            seed,
        }
    }

    fn offsets(&self) -> (usize, usize, usize) {
        let b1 = self.hidden * self.inputs;
        let w2 = b1 + self.hidden;
        let b2 = w2 + self.classes * self.hidden;
        (b1, w2, b2)
    }

    fn forward(&self, w: &[f64], x: &[f64], label: usize) -> Forward {
        let (ob1, ow2, ob2) = self.offsets();
        let hidden: Vec<f64> = (0..self.hidden)
            .map(|h| {
                let row = &w[h * self.inputs..(h + 1) * self.inputs];
                let a = w[ob1 + h] + row.iter().zip(x).map(|(p, xi)| p * xi).sum::<f64>();
                a.tanh()
            })
            .collect();
        let logits: Vec<f64> = (0..self.classes)
            .map(|c| {
                let row = &w[ow2 + c * self.hidden..ow2 + (c + 1) * self.hidden];
                w[ob2 + c] + row.iter().zip(&hidden).map(|(p, z)| p * z).sum::<f64>()
            })
            .collect();
        let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
        let total: f64 = exps.iter().sum();
        let probs: Vec<f64> = exps.iter().map(|e| e / total).collect();
        let loss = total.ln() + max - logits[label];
        Forward {
            hidden,
            probs,
            loss,
        }
    }

    pub fn predict(&self, w: &[f64], x: &[f64]) -> usize {
        let f = self.forward(w, x, 0);
        f.probs
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .map_or(0, |(c, _)| c)
    }

    pub fn accuracy(&self, w: &[f64], samples: &[Sample]) -> f64 {
        if samples.is_empty() {
            return 0.0;
        }
        let hits = samples
            .iter()
            .filter(|s| self.predict(w, &s.features) == s.target as usize)
            .count();
        hits as f64 / samples.len() as f64
    }
}

impl Objective for Mlp {
    fn name(&self) -> &'static str {
        "mlp"
    }

    fn dimension(&self) -> usize {
        self.hidden * self.inputs + self.hidden + self.classes * self.hidden + self.classes
    }

    fn loss(&self, w: &[f64], batch: &[Sample]) -> f64 {
        if batch.is_empty() {
            return 0.0;
        }
        let total: f64 = batch
            .iter()
            .map(|s| self.forward(w, &s.features, s.target as usize).loss)
            .sum();
        total / batch.len() as f64
    }

    fn gradient(&self, w: &[f64], batch: &[Sample]) -> Vec<f64> {
        let mut g = vec![0.0; self.dimension()];
        if batch.is_empty() {
            return g;
        }
        let (ob1, ow2, ob2) = self.offsets();
        let inv = 1.0 / batch.len() as f64;
        let mut dz = vec![0.0; self.hidden];
        for s in batch {
            let label = s.target as usize;
            let f = self.forward(w, &s.features, label);
            dz.iter_mut().for_each(|d| *d = 0.0);
            for c in 0..self.classes {
                let dlogit = (f.probs[c] - if c == label { 1.0 } else { 0.0 }) * inv;
                g[ob2 + c] += dlogit;
                let base = ow2 + c * self.hidden;
                for h in 0..self.hidden {
                    g[base + h] += dlogit * f.hidden[h];
                    dz[h] += w[base + h] * dlogit;
                }
            }
            for h in 0..self.hidden {
                let da = dz[h] * (1.0 - f.hidden[h] * f.hidden[h]);
                g[ob1 + h] += da;
                let base = h * self.inputs;
                for (gi, x) in g[base..base + self.inputs].iter_mut().zip(&s.features) {
                    *gi += da * x;
                }
            }
        }
        g
    }

    /// Gaussian weights scaled by `1/sqrt(fan_in)`, zero biases.
    fn initial_point(&self) -> Vec<f64> {
        let mut r = rng::stream(self.seed, INIT_STREAM);
        let (ob1, ow2, ob2) = self.offsets();
        let mut w = vec![0.0; self.dimension()];
        let s1 = 1.0 / (self.inputs as f64).sqrt();
        for x in &mut w[..ob1] {
            *x = s1 * Distribution::<f64>::sample(&StandardNormal, &mut r);
        }
        let s2 = 1.0 / (self.hidden as f64).sqrt();
        for x in &mut w[ow2..ob2] {
            *x = s2 * Distribution::<f64>::sample(&StandardNormal, &mut r);
        }
        w
    }
}

fn cluster_center(class: usize, classes: usize, inputs: usize) -> Vec<f64> {
    let mut c = vec![0.0; inputs];
    if inputs == 1 {
        c[0] = CLUSTER_RADIUS * (class as f64 - (classes as f64 - 1.0) / 2.0);
    } else {
        let angle = 2.0 * PI * class as f64 / classes as f64;
        c[0] = CLUSTER_RADIUS * angle.cos();
        c[1] = CLUSTER_RADIUS * angle.sin();
    }
    c
}

/// Gaussian clusters, one per class, with centres evenly spaced on a circle
/// in the first two input dimensions.
pub fn make_mlp(
    inputs: usize,
    hidden: usize,
    classes: usize,
    samples: usize,
    seed: u64,
) -> Result<(Mlp, Dataset)> {
    if inputs == 0 || hidden == 0 || classes == 0 || samples == 0 {
        return Err(Error::InvalidArgument(
            "mlp dimensions and sample count must be at least 1".into(),
        ));
    }
    let mut r = rng::data_stream(seed);
    let centers: Vec<Vec<f64>> = (0..classes)
        .map(|c| cluster_center(c, classes, inputs))
        .collect();
    let all: Vec<Sample> = (0..samples)
        .map(|_| {
            let class = r.random_range(0..classes);
            let features = centers[class]
                .iter()
                .map(|m| m + CLUSTER_SPREAD * Distribution::<f64>::sample(&StandardNormal, &mut r))
                .collect();
            Sample {
                features,
                target: class as f64,
            }
        })
        .collect();
    Ok((
        Mlp::new(inputs, hidden, classes, seed),
        Dataset::split(all, HELDOUT_FRACTION)?,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::objectives::gradient_check;

    #[test]
    fn zero_weights_give_uniform_softmax() {
        let mlp = Mlp::new(3, 4, 5, 0);
        let w = vec![0.0; mlp.dimension()];
        let batch = vec![Sample {
            features: vec![0.0; 3],
            target: 2.0,
        }];
        assert!((mlp.loss(&w, &batch) - 5f64.ln()).abs() < 1e-14);
    }

    #[test]
    fn dimension_layout() {
        let mlp = Mlp::new(2, 8, 3, 0);
        assert_eq!(mlp.dimension(), 2 * 8 + 8 + 3 * 8 + 3);
        assert_eq!(mlp.initial_point().len(), mlp.dimension());
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let (mlp, d) = make_mlp(3, 5, 3, 64, 7).unwrap();
        let w = mlp.initial_point();
        assert!(gradient_check(&mlp, &w, &d.train()[..12], 1e-5) < 1e-4);
    }

    #[test]
    fn rejects_empty_dimensions() {
        assert!(make_mlp(0, 2, 2, 10, 0).is_err());
    }
}
