use rand::Rng;

use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub features: Vec<f64>,
    /// Regression target, `+-1` label, or class index depending on the task.
    pub target: f64,
}

/// Train/heldout split of synthetic samples. The two splits are disjoint by
/// construction: samples are generated once and partitioned.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    train: Vec<Sample>,
    heldout: Vec<Sample>,
}

impl Dataset {
    pub fn new(train: Vec<Sample>, heldout: Vec<Sample>) -> Self {
        Self { train, heldout }
    }

    /// Keeps the first `1 - heldout_fraction` of `samples` for training.
    pub fn split(mut samples: Vec<Sample>, heldout_fraction: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&heldout_fraction) {
            return Err(Error::InvalidArgument(format!(
                "heldout fraction {heldout_fraction} must lie in [0, 1)"
            )));
        }
        let n_heldout = (samples.len() as f64 * heldout_fraction).round() as usize;
        let heldout = samples.split_off(samples.len() - n_heldout);
        Ok(Self::new(samples, heldout))
    }

    pub fn train(&self) -> &[Sample] {
        &self.train
    }

    pub fn heldout(&self) -> &[Sample] {
        &self.heldout
    }

    pub fn train_len(&self) -> usize {
        self.train.len()
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SampleBatch {
    pub indices: Vec<usize>,
    pub samples: Vec<Sample>,
}

impl SampleBatch {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Concatenation of several batches, e.g. the pooled batch of all
    /// learners in one synchronous step.
    pub fn concat<'a>(batches: impl IntoIterator<Item = &'a SampleBatch>) -> SampleBatch {
        let mut out = SampleBatch {
            indices: Vec::new(),
            samples: Vec::new(),
        };
        for b in batches {
            out.indices.extend_from_slice(&b.indices);
            out.samples.extend(b.samples.iter().cloned());
        }
        out
    }
}

impl std::ops::Deref for SampleBatch {
    type Target = [Sample];

    fn deref(&self) -> &[Sample] {
        &self.samples
    }
}

/// Draws `m` training samples uniformly with replacement.
pub fn sample_batch<R: Rng + ?Sized>(data: &Dataset, m: usize, rng: &mut R) -> Result<SampleBatch> {
    if m == 0 {
        return Err(Error::InvalidArgument("batch size must be at least 1".into()));
    }
    let n = data.train_len();
    if n == 0 {
        return Err(Error::InvalidState("cannot sample from an empty training split".into()));
    }
    let indices: Vec<usize> = (0..m).map(|_| rng.random_range(0..n)).collect();
    let samples = indices.iter().map(|&i| data.train[i].clone()).collect();
    Ok(SampleBatch { indices, samples })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;

    fn scalar_dataset(values: &[f64]) -> Dataset {
        let samples = values
            .iter()
            .map(|&v| Sample {
                features: vec![v],
                target: 0.0,
            })
            .collect();
        Dataset::new(samples, Vec::new())
    }

    #[test]
    fn single_element_dataset() {
        let d = scalar_dataset(&[7.0]);
        let b = sample_batch(&d, 1, &mut rng::stream(1, 1)).unwrap();
        assert_eq!(b.indices, vec![0]);
        assert_eq!(b.samples[0].features, vec![7.0]);
    }

    #[test]
    fn empty_dataset_is_an_error() {
        let d = scalar_dataset(&[]);
        assert!(matches!(
            sample_batch(&d, 3, &mut rng::stream(1, 1)),
            Err(Error::InvalidState(_))
        ));
        let d = scalar_dataset(&[1.0]);
        assert!(sample_batch(&d, 0, &mut rng::stream(1, 1)).is_err());
    }

    #[test]
    fn same_seed_same_batch() {
        let d = scalar_dataset(&(0..50).map(f64::from).collect::<Vec<_>>());
        let a = sample_batch(&d, 16, &mut rng::stream(5, 2)).unwrap();
        let b = sample_batch(&d, 16, &mut rng::stream(5, 2)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn empirical_mean_matches_dataset_mean() {
        let values: Vec<f64> = (0..97).map(|i| ((i * 37) % 97) as f64 / 7.0).collect();
        let d = scalar_dataset(&values);
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        let draws = 100_000;
        let b = sample_batch(&d, draws, &mut rng::stream(11, 0)).unwrap();
        let emp = b.iter().map(|s| s.features[0]).sum::<f64>() / draws as f64;
        let three_sigma = 3.0 * (var / draws as f64).sqrt();
        assert!((emp - mean).abs() < three_sigma, "{emp} vs {mean} (3s={three_sigma})");
    }

    #[test]
    fn split_is_disjoint_partition() {
        let d = scalar_dataset(&[0.0]);
        assert_eq!(d.heldout().len(), 0);
        let samples: Vec<Sample> = (0..10)
            .map(|i| Sample {
                features: vec![i as f64],
                target: 0.0,
            })
            .collect();
        let d = Dataset::split(samples, 0.3).unwrap();
        assert_eq!(d.train_len(), 7);
        assert_eq!(d.heldout().len(), 3);
        assert_eq!(d.heldout()[0].features[0], 7.0);
        assert!(Dataset::split(Vec::new(), 1.0).is_err());
    }
}
