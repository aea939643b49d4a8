//! Spectra of mixing matrices and the consensus-decay bounds built on them.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use rand::Rng;
use rayon::prelude::*;

use super::{build_fixed_ring, build_random_ring, random_permutation, MixingMatrix};
use crate::linalg::{self, averaging_matrix};
use crate::{rng, Error, Result};

/// Tolerance on the leading eigenvalue of a doubly stochastic matrix.
const LEADING_EIGENVALUE_TOL: f64 = 1e-9;

/// One-sided slack, in standard errors, allowed when a sample mean is
/// compared with a bound on an expectation.
pub const EXPECTATION_SLACK_SE: f64 = 3.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectralReport {
    /// Second-largest eigenvalue magnitude.
    pub lambda_hat: f64,
    pub spectral_gap: f64,
    /// Magnitude of the leading eigenvalue (1 for a doubly stochastic matrix).
    pub leading: f64,
}

/// Sorts eigenvalue magnitudes, checks the leading one is 1 and returns the
/// second largest.
pub fn second_eigenvalue_magnitude(m: &MixingMatrix) -> Result<SpectralReport> {
    let mut mags: Vec<f64> = linalg::eigenvalues(m.entries())?
        .iter()
        .map(|z| z.norm())
        .collect();
    mags.sort_by(|a, b| b.total_cmp(a));
    let leading = mags[0];
    if (leading - 1.0).abs() > LEADING_EIGENVALUE_TOL {
        return Err(Error::Numerical(format!(
            "leading eigenvalue magnitude {leading} differs from 1 for {}",
            m.entries()
        )));
    }
    let lambda_hat = mags.get(1).copied().unwrap_or(0.0).clamp(0.0, 1.0);
    Ok(SpectralReport {
        lambda_hat,
        spectral_gap: 1.0 - lambda_hat,
        leading,
    })
}

/// Second eigenvalue of the fixed ring from the DFT of its first row:
/// `1/3 + 2/3 cos(2 pi / L)`.
pub fn fm_lambda_closed_form(order: usize) -> Result<f64> {
    if order < 3 {
        return Err(Error::InvalidOrder {
            order,
            reason: "fixed ring needs at least 3 learners",
        });
    }
    let v = 1.0 / 3.0 + 2.0 / 3.0 * (2.0 * PI / order as f64).cos();
    // cos(2pi/3) rounds to -0.49999999999999978; the exact value is 0
    Ok(if order == 3 { 0.0 } else { v })
}

/// `log10` of the fixed-mixing consensus bound `lambda^k`.
pub fn fm_consensus_bound_log10(order: usize, k: u64) -> Result<f64> {
    let lambda = fm_lambda_closed_form(order)?;
    if k == 0 {
        return Ok(0.0);
    }
    Ok(k as f64 * lambda.log10())
}

pub fn fm_consensus_bound(order: usize, k: u64) -> Result<f64> {
    Ok(10f64.powf(fm_consensus_bound_log10(order, k)?))
}

/// `log10` of the random-mixing expectation bound `sqrt(L-1) / sqrt(3)^k`.
pub fn rm_consensus_bound_log10(order: usize, k: u64) -> Result<f64> {
    if order < 2 {
        return Err(Error::InvalidOrder {
            order,
            reason: "random-mixing bound needs at least 2 learners",
        });
    }
    Ok(0.5 * ((order - 1) as f64).log10() - 0.5 * k as f64 * 3f64.log10())
}

pub fn rm_consensus_bound(order: usize, k: u64) -> Result<f64> {
    Ok(10f64.powf(rm_consensus_bound_log10(order, k)?))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConsensusMode {
    /// `||M - 11^T/L||_2` for an `L x L` product of mixing matrices.
    MatrixProduct,
    /// `||W (I - 11^T/L)||_2` for a `D x L` matrix of learner models.
    ParameterColumns,
}

pub fn consensus_distance(m: &DMatrix<f64>, mode: ConsensusMode) -> Result<f64> {
    linalg::ensure_finite(m)?;
    match mode {
        ConsensusMode::MatrixProduct => {
            if !m.is_square() {
                return Err(Error::Dimension {
                    expected: m.nrows(),
                    got: m.ncols(),
                });
            }
            let dev = m - averaging_matrix(m.nrows());
            linalg::spectral_norm(&dev)
        }
        ConsensusMode::ParameterColumns => linalg::spectral_norm(&linalg::center_columns(m)),
    }
}

/// Closed-form `E[T_r^T T_r]` over uniform ring permutations: 1/3 on the
/// diagonal and `2 / (3 (L-1))` elsewhere. Only claimed for `L > 5`.
pub fn rm_expected_gram(order: usize) -> Result<DMatrix<f64>> {
    if order <= 5 {
        return Err(Error::OutOfRegime(format!(
            "expected Gram closed form requires more than 5 learners, got {order}"
        )));
    }
    let off = 2.0 / (3.0 * (order - 1) as f64);
    Ok(DMatrix::from_fn(order, order, |i, j| {
        if i == j {
            1.0 / 3.0
        } else {
            off
        }
    }))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RingKind {
    FixedRing,
    RandomRing,
}

/// One row of a consensus-decay verification.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecayPoint {
    pub k: u64,
    /// Exact distance (fixed ring) or sample mean over trials (random ring).
    pub measured: f64,
    /// Standard error of the sample mean; zero for the deterministic product.
    pub std_error: f64,
    pub variance: f64,
    pub bound: f64,
    pub log10_bound: f64,
}

impl DecayPoint {
    pub fn log10_measured(&self) -> f64 {
        self.measured.log10()
    }

    /// `measured <= bound` up to round-off for an exact product, or up to
    /// three standard errors for a sample mean.
    pub fn within_bound(&self, absolute_tol: f64) -> bool {
        self.measured <= self.bound + EXPECTATION_SLACK_SE * self.std_error + absolute_tol
    }
}

/// Measures `||T_1 ... T_k - 11^T/L||_2` for `k = 0..=k_max` next to the
/// matching bound.
///
/// The fixed ring product is deterministic. For the random ring each of the
/// `trials` sequences draws a fresh permutation per factor; trials run in
/// parallel on independent streams derived from one draw of `rng`, and are
/// reduced in trial order.
pub fn verify_consensus_decay<R: Rng + ?Sized>(
    kind: RingKind,
    order: usize,
    k_max: u64,
    trials: usize,
    rng: &mut R,
) -> Result<Vec<DecayPoint>> {
    match kind {
        RingKind::FixedRing => {
            let t = build_fixed_ring(order)?;
            let mut product = DMatrix::<f64>::identity(order, order);
            let mut out = Vec::with_capacity(k_max as usize + 1);
            for k in 0..=k_max {
                if k > 0 {
                    product = &product * t.entries();
                }
                let measured = consensus_distance(&product, ConsensusMode::MatrixProduct)?;
                let log10_bound = fm_consensus_bound_log10(order, k)?;
                out.push(DecayPoint {
                    k,
                    measured,
                    std_error: 0.0,
                    variance: 0.0,
                    bound: 10f64.powf(log10_bound),
                    log10_bound,
                });
            }
            Ok(out)
        }
        RingKind::RandomRing => {
            if order < 6 {
                return Err(Error::OutOfRegime(format!(
                    "random-ring decay bound is verified for more than 5 learners, got {order}"
                )));
            }
            if trials == 0 {
                return Err(Error::InvalidArgument("trials must be at least 1".into()));
            }
            let base: u64 = rng.random();
            let per_trial: Vec<Vec<f64>> = (0..trials)
                .into_par_iter()
                .map(|trial| random_ring_trial(order, k_max, base, trial as u64))
                .collect::<Result<_>>()?;
            (0..=k_max)
                .map(|k| {
                    let samples = per_trial.iter().map(|d| d[k as usize]);
                    let (mean, variance) = mean_and_variance(samples, trials);
                    let log10_bound = rm_consensus_bound_log10(order, k)?;
                    Ok(DecayPoint {
                        k,
                        measured: mean,
                        std_error: (variance / trials as f64).sqrt(),
                        variance,
                        bound: 10f64.powf(log10_bound),
                        log10_bound,
                    })
                })
                .collect()
        }
    }
}

fn random_ring_trial(order: usize, k_max: u64, base: u64, trial: u64) -> Result<Vec<f64>> {
    let mut r = rng::stream(base, trial);
    let mut product = DMatrix::<f64>::identity(order, order);
    let mut distances = Vec::with_capacity(k_max as usize + 1);
    distances.push(consensus_distance(&product, ConsensusMode::MatrixProduct)?);
    for _ in 0..k_max {
        let perm = random_permutation(order, &mut r);
        let t = build_random_ring(order, &perm)?;
        product = &product * t.entries();
        distances.push(consensus_distance(&product, ConsensusMode::MatrixProduct)?);
    }
    Ok(distances)
}

/// Mean and unbiased sample variance (zero for a single sample).
fn mean_and_variance(samples: impl Iterator<Item = f64> + Clone, n: usize) -> (f64, f64) {
    let mean = samples.clone().sum::<f64>() / n as f64;
    if n < 2 {
        return (mean, 0.0);
    }
    let ss: f64 = samples.map(|x| (x - mean) * (x - mean)).sum();
    (mean, ss / (n - 1) as f64)
}

/// Ergodic rate bound for ADPSGD on a nonconvex objective:
/// `20 (f0 - f*) mu / K + 2 (f0 - f* + mu) sigma / sqrt(M K)`.
///
/// A calculator for reporting; `mu` is the gradient Lipschitz constant and
/// `sigma` bounds the stochastic-gradient variance.
pub fn adpsgd_rate_bound(
    iterations: u64,
    batch: u64,
    mu: f64,
    sigma: f64,
    f0_gap: f64,
) -> Result<f64> {
    if iterations == 0 || batch == 0 || !(mu > 0.0) || !(sigma > 0.0) || !(f0_gap > 0.0) {
        return Err(Error::InvalidArgument(
            "rate bound needs positive K, M, mu, sigma and f0 - f*".into(),
        ));
    }
    let k = iterations as f64;
    let m = batch as f64;
    Ok(20.0 * f0_gap * mu / k + 2.0 * (f0_gap + mu) * sigma / (m * k).sqrt())
}
