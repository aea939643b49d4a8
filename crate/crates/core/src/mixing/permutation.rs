use nalgebra::DMatrix;
use rand::Rng;

use crate::{Error, Result};

/// A bijection on `{0, ..., L-1}`; `position(i)` is the ring slot that
/// learner `i` occupies after shuffling.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Permutation {
    mapping: Vec<usize>,
}

impl Permutation {
    pub fn new(mapping: Vec<usize>) -> Result<Self> {
        let n = mapping.len();
        let mut seen = vec![false; n];
        for &m in &mapping {
            if m >= n || seen[m] {
                return Err(Error::InvalidArgument(format!(
                    "{mapping:?} is not a permutation of 0..{n}"
                )));
            }
            seen[m] = true;
        }
        Ok(Self { mapping })
    }

    pub fn identity(order: usize) -> Self {
        Self {
            mapping: (0..order).collect(),
        }
    }

    pub fn reversal(order: usize) -> Self {
        Self {
            mapping: (0..order).rev().collect(),
        }
    }

    pub fn order(&self) -> usize {
        self.mapping.len()
    }

    pub fn position(&self, i: usize) -> usize {
        self.mapping[i]
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.mapping
    }

    /// Permutation matrix with a one at `(position(j), j)`.
    pub fn to_matrix(&self) -> DMatrix<f64> {
        let n = self.order();
        let mut p = DMatrix::zeros(n, n);
        for (j, &pos) in self.mapping.iter().enumerate() {
            p[(pos, j)] = 1.0;
        }
        p
    }
}

/// Uniform random permutation by the Durstenfeld form of the Fisher-Yates
/// shuffle, O(L).
pub fn random_permutation<R: Rng + ?Sized>(order: usize, rng: &mut R) -> Permutation {
    let mut mapping: Vec<usize> = (0..order).collect();
    for i in (1..order).rev() {
        let j = rng.random_range(0..=i);
        mapping.swap(i, j);
    }
    Permutation { mapping }
}
