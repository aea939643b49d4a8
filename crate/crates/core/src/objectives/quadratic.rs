use nalgebra::{DMatrix, DVector};
use rand_distr::{Distribution, StandardNormal};

use super::{Dataset, Objective, Sample};
use crate::{linalg, rng, Error, Result};

pub const DEFAULT_QUADRATIC_SAMPLES: usize = 4096;
pub const DEFAULT_HELDOUT_FRACTION: f64 = 0.2;

/// `f(w; z) = 1/2 (w - w*)^T A (w - w*) + sigma z^T (w - w*)`.
///
/// Each training sample carries a standard-normal noise vector `z`; the
/// training noise is centred so the full-batch gradient is exactly
/// `A (w - w*)`. The heldout loss drops the noise term.
#[derive(Debug, Clone)]
pub struct Quadratic {
    hessian: DMatrix<f64>,
    eigenvalues: Vec<f64>,
    optimum: Vec<f64>,
    noise_sigma: f64,
    smoothness: f64,
}

impl Quadratic {
    pub fn hessian(&self) -> &DMatrix<f64> {
        &self.hessian
    }

    /// Eigenvalues of `A` used to build it, ascending from 1 to the
    /// condition number.
    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    /// Gradient Lipschitz constant `mu`, measured as the largest eigenvalue of `A`.
    pub fn smoothness(&self) -> f64 {
        self.smoothness
    }

    pub fn noise_sigma(&self) -> f64 {
        self.noise_sigma
    }

    /// Standard deviation of the norm of the per-sample gradient noise.
    pub fn gradient_noise_scale(&self) -> f64 {
        self.noise_sigma * (self.optimum.len() as f64).sqrt()
    }

    fn error(&self, w: &[f64]) -> DVector<f64> {
        DVector::from_iterator(w.len(), w.iter().zip(&self.optimum).map(|(a, b)| a - b))
    }

    pub fn exact_loss(&self, w: &[f64]) -> f64 {
        let e = self.error(w);
        0.5 * e.dot(&(&self.hessian * &e))
    }
}

impl Objective for Quadratic {
    fn name(&self) -> &'static str {
        "quadratic"
    }

    fn dimension(&self) -> usize {
        self.optimum.len()
    }

    fn loss(&self, w: &[f64], batch: &[Sample]) -> f64 {
        self.loss_and_gradient(w, batch).0
    }

    fn gradient(&self, w: &[f64], batch: &[Sample]) -> Vec<f64> {
        self.loss_and_gradient(w, batch).1
    }

    fn loss_and_gradient(&self, w: &[f64], batch: &[Sample]) -> (f64, Vec<f64>) {
        let e = self.error(w);
        let ae = &self.hessian * &e;
        let mut loss = 0.5 * e.dot(&ae);
        let mut g: Vec<f64> = ae.iter().copied().collect();
        if batch.is_empty() || self.noise_sigma == 0.0 {
            return (loss, g);
        }
        let scale = self.noise_sigma / batch.len() as f64;
        let mut noise = 0.0;
        for s in batch {
            for ((gi, z), x) in g.iter_mut().zip(&s.features).zip(e.iter()) {
                *gi += scale * z;
                noise += z * x;
            }
        }
        loss += scale * noise;
        (loss, g)
    }

    fn heldout_loss(&self, w: &[f64], _data: &Dataset) -> f64 {
        self.exact_loss(w)
    }

    fn initial_point(&self) -> Vec<f64> {
        vec![0.0; self.optimum.len()]
    }

    fn optimum(&self) -> Option<&[f64]> {
        Some(&self.optimum)
    }
}

pub fn make_quadratic(
    dimension: usize,
    condition_number: f64,
    noise_sigma: f64,
    seed: u64,
) -> Result<(Quadratic, Dataset)> {
    make_quadratic_with(
        dimension,
        condition_number,
        noise_sigma,
        DEFAULT_QUADRATIC_SAMPLES,
        DEFAULT_HELDOUT_FRACTION,
        seed,
    )
}

/// `A = Q diag(lambda) Q^T` with `Q` a random orthogonal matrix and `lambda`
/// geometrically spaced over `[1, condition_number]`.
pub fn make_quadratic_with(
    dimension: usize,
    condition_number: f64,
    noise_sigma: f64,
    samples: usize,
    heldout_fraction: f64,
    seed: u64,
) -> Result<(Quadratic, Dataset)> {
    if dimension == 0 {
        return Err(Error::InvalidArgument("dimension must be at least 1".into()));
    }
    if !(condition_number >= 1.0) || !condition_number.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "condition number {condition_number} must be finite and >= 1"
        )));
    }
    if !(noise_sigma >= 0.0) || !noise_sigma.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "noise sigma {noise_sigma} must be finite and >= 0"
        )));
    }
    let mut r = rng::data_stream(seed);
    let mut normal = || -> f64 { StandardNormal.sample(&mut r) };

    let gaussian = DMatrix::from_fn(dimension, dimension, |_, _| normal());
    let q = gaussian.qr().q();
    let eigenvalues: Vec<f64> = (0..dimension)
        .map(|i| {
            if dimension == 1 {
                1.0
            } else {
                condition_number.powf(i as f64 / (dimension - 1) as f64)
            }
        })
        .collect();
    let diag = DMatrix::from_diagonal(&DVector::from_vec(eigenvalues.clone()));
    let mut hessian = &q * diag * q.transpose();
    // symmetrize away round-off so the symmetric eigensolver sees an exact
    // symmetric input
    hessian = (&hessian + hessian.transpose()) * 0.5;
    let optimum: Vec<f64> = (0..dimension).map(|_| normal()).collect();

    let mut all: Vec<Sample> = (0..samples)
        .map(|_| Sample {
            features: (0..dimension).map(|_| normal()).collect(),
            target: 0.0,
        })
        .collect();
    let n_heldout = (samples as f64 * heldout_fraction).round() as usize;
    let n_train = samples - n_heldout.min(samples);
    if n_train > 0 {
        let mut mean = vec![0.0; dimension];
        for s in &all[..n_train] {
            for (m, z) in mean.iter_mut().zip(&s.features) {
                *m += z;
            }
        }
        for m in &mut mean {
            *m /= n_train as f64;
        }
        for s in &mut all[..n_train] {
            for (z, m) in s.features.iter_mut().zip(&mean) {
                *z -= m;
            }
        }
    }
    let data = Dataset::split(all, heldout_fraction)?;

    let smoothness = linalg::symmetric_eigenvalues(&hessian)?
        .last()
        .copied()
        .unwrap_or(1.0);
    Ok((
        Quadratic {
            hessian,
            eigenvalues,
            optimum,
            noise_sigma,
            smoothness,
        },
        data,
    ))
}
