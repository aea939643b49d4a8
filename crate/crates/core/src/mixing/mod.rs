//! Doubly stochastic mixing matrices on a ring of learners.
//!
//! Row `i` of a mixing matrix holds the weights learner `i` applies to every
//! learner's model during one averaging step. Three families are built here:
//! the fixed ring (each learner averages with its immediate neighbours), the
//! randomized ring (the same stencil applied to a shuffled ring) and the
//! uniform matrix that a global allreduce realizes.

mod permutation;
mod spectral;

use std::fmt;

use nalgebra::DMatrix;

use crate::{Error, Result};

pub use permutation::{random_permutation, Permutation};
pub use spectral::{
    adpsgd_rate_bound, consensus_distance, fm_consensus_bound, fm_consensus_bound_log10,
    fm_lambda_closed_form, rm_consensus_bound, rm_consensus_bound_log10, rm_expected_gram,
    second_eigenvalue_magnitude, verify_consensus_decay, ConsensusMode, DecayPoint, RingKind,
    SpectralReport,
};

/// Row and column sums must match 1 to this tolerance.
pub const STOCHASTIC_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub enum MixingKind {
    FixedRing,
    RandomRing(Permutation),
    Uniform,
}

impl fmt::Display for MixingKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MixingKind::FixedRing => f.write_str("fixed"),
            MixingKind::RandomRing(_) => f.write_str("random"),
            MixingKind::Uniform => f.write_str("uniform"),
        }
    }
}

/// A dense `L x L` doubly stochastic matrix tagged with how it was built.
#[derive(Debug, Clone, PartialEq)]
pub struct MixingMatrix {
    entries: DMatrix<f64>,
    kind: MixingKind,
}

impl MixingMatrix {
    pub fn order(&self) -> usize {
        self.entries.nrows()
    }

    pub fn entries(&self) -> &DMatrix<f64> {
        &self.entries
    }

    pub fn kind(&self) -> &MixingKind {
        &self.kind
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.entries[(row, col)]
    }

    pub fn into_entries(self) -> DMatrix<f64> {
        self.entries
    }

    /// Checks nonnegativity and unit row/column sums.
    pub fn check_doubly_stochastic(&self) -> Result<()> {
        check_doubly_stochastic(&self.entries, STOCHASTIC_TOL)
    }

    /// Weighted combination `sum_j t[row, j] * models[j]`, accumulated in
    /// ascending learner order.
    pub fn mix_row(&self, row: usize, models: &[&[f64]]) -> Vec<f64> {
        debug_assert_eq!(models.len(), self.order());
        let dim = models.first().map_or(0, |m| m.len());
        let mut out = vec![0.0; dim];
        for (j, model) in models.iter().enumerate() {
            let weight = self.entries[(row, j)];
            if weight == 0.0 {
                continue;
            }
            for (o, x) in out.iter_mut().zip(model.iter()) {
                *o += weight * x;
            }
        }
        out
    }
}

/// Validates that `m` is square, nonnegative and has unit row and column
/// sums within `tol`.
pub fn check_doubly_stochastic(m: &DMatrix<f64>, tol: f64) -> Result<()> {
    if !m.is_square() {
        return Err(Error::Dimension {
            expected: m.nrows(),
            got: m.ncols(),
        });
    }
    if let Some(x) = m.iter().find(|x| !(**x >= 0.0)) {
        return Err(Error::Numerical(format!(
            "mixing matrix has a negative or non-finite entry {x}"
        )));
    }
    for (i, row) in m.row_iter().enumerate() {
        let s = row.sum();
        if (s - 1.0).abs() > tol {
            return Err(Error::Numerical(format!("row {i} sums to {s}")));
        }
    }
    for (j, col) in m.column_iter().enumerate() {
        let s = col.sum();
        if (s - 1.0).abs() > tol {
            return Err(Error::Numerical(format!("column {j} sums to {s}")));
        }
    }
    Ok(())
}

/// Circulant ring stencil: each learner weights itself and its immediate
/// left and right neighbours by 1/3.
pub fn build_fixed_ring(order: usize) -> Result<MixingMatrix> {
    if order < 3 {
        return Err(Error::InvalidOrder {
            order,
            reason: "a ring needs at least 3 learners for distinct left/right neighbours",
        });
    }
    Ok(MixingMatrix {
        entries: ring_stencil(order, |i| i),
        kind: MixingKind::FixedRing,
    })
}

pub fn build_uniform(order: usize) -> Result<MixingMatrix> {
    if order < 2 {
        return Err(Error::InvalidOrder {
            order,
            reason: "uniform mixing needs at least 2 learners",
        });
    }
    Ok(MixingMatrix {
        entries: DMatrix::from_element(order, order, 1.0 / order as f64),
        kind: MixingKind::Uniform,
    })
}

/// The fixed-ring stencil applied after relabelling learners by `perm`:
/// learner `i` sits at ring position `perm[i]`, so entry `(i, j)` equals
/// `T_fixed[perm[i], perm[j]]`, i.e. `P^T T_fixed P`.
pub fn build_random_ring(order: usize, perm: &Permutation) -> Result<MixingMatrix> {
    if perm.order() != order {
        return Err(Error::Dimension {
            expected: order,
            got: perm.order(),
        });
    }
    if order < 3 {
        return Err(Error::InvalidOrder {
            order,
            reason: "a ring needs at least 3 learners for distinct left/right neighbours",
        });
    }
    Ok(MixingMatrix {
        entries: ring_stencil(order, |i| perm.position(i)),
        kind: MixingKind::RandomRing(perm.clone()),
    })
}

fn ring_stencil(order: usize, position: impl Fn(usize) -> usize) -> DMatrix<f64> {
    let third = 1.0 / 3.0;
    let positions: Vec<usize> = (0..order).map(&position).collect();
    DMatrix::from_fn(order, order, |i, j| {
        let d = (positions[i] + order - positions[j]) % order;
        if d == 0 || d == 1 || d == order - 1 {
            third
        } else {
            0.0
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const THIRD: f64 = 1.0 / 3.0;

    #[test]
    fn fixed_ring_rejects_small_orders() {
        for l in 0..3 {
            assert!(matches!(
                build_fixed_ring(l),
                Err(Error::InvalidOrder { .. })
            ));
        }
    }

    #[test]
    fn fixed_ring_of_three_is_uniform() {
        let f = build_fixed_ring(3).unwrap();
        let u = build_uniform(3).unwrap();
        assert_eq!(f.entries(), u.entries());
    }

    #[test]
    fn fixed_ring_first_row_l5() {
        let f = build_fixed_ring(5).unwrap();
        let row: Vec<f64> = f.entries().row(0).iter().copied().collect();
        assert_eq!(row, vec![THIRD, THIRD, 0.0, 0.0, THIRD]);
    }

    #[test]
    fn fixed_ring_column_sums_l8() {
        let f = build_fixed_ring(8).unwrap();
        for col in f.entries().column_iter() {
            assert!((col.sum() - 1.0).abs() <= STOCHASTIC_TOL);
        }
        f.check_doubly_stochastic().unwrap();
    }

    #[test]
    fn fixed_ring_entries_follow_neighbour_rule() {
        for l in 3..20 {
            let f = build_fixed_ring(l).unwrap();
            for i in 0..l {
                for j in 0..l {
                    let neighbour = j == i || j == (i + 1) % l || j == (i + l - 1) % l;
                    let expected = if neighbour { THIRD } else { 0.0 };
                    assert_eq!(f.get(i, j), expected, "L={l} ({i},{j})");
                }
            }
        }
    }

    #[test]
    fn uniform_small_cases() {
        assert!(build_uniform(1).is_err());
        let u2 = build_uniform(2).unwrap();
        assert!(u2.entries().iter().all(|x| *x == 0.5));
        let u4 = build_uniform(4).unwrap();
        assert!(u4.entries().iter().all(|x| *x == 0.25));
    }

    #[test]
    fn random_ring_identity_is_fixed_ring() {
        for l in 3..12 {
            let r = build_random_ring(l, &Permutation::identity(l)).unwrap();
            assert_eq!(r.entries(), build_fixed_ring(l).unwrap().entries());
        }
    }

    #[test]
    fn random_ring_order_mismatch() {
        let p = Permutation::identity(5);
        assert!(matches!(
            build_random_ring(6, &p),
            Err(Error::Dimension { expected: 6, got: 5 })
        ));
    }

    #[test]
    fn random_ring_matches_explicit_conjugation() {
        // P^T T P with P[a][b] = 1 iff a = perm(b), multiplied out densely.
        let p = Permutation::new(vec![3, 0, 5, 1, 4, 2]).unwrap();
        let t = build_fixed_ring(6).unwrap();
        let pm = p.to_matrix();
        let expected = pm.transpose() * t.entries() * &pm;
        let r = build_random_ring(6, &p).unwrap();
        assert!((r.entries() - expected).abs().max() < 1e-15);
    }

    #[test]
    fn mix_row_is_weighted_sum() {
        let f = build_fixed_ring(4).unwrap();
        let a = [3.0, 0.0];
        let b = [0.0, 3.0];
        let c = [6.0, 6.0];
        let d = [9.0, -3.0];
        let models: Vec<&[f64]> = vec![&a, &b, &c, &d];
        let out = f.mix_row(0, &models);
        // row 0 weights learners 0, 1, 3
        assert!((out[0] - 4.0).abs() < 1e-14);
        assert!((out[1] - 0.0).abs() < 1e-14);
    }

    #[test]
    fn doubly_stochastic_check_rejects_bad_matrices() {
        let m = DMatrix::from_row_slice(2, 2, &[0.5, 0.5, 0.6, 0.4]);
        assert!(check_doubly_stochastic(&m, STOCHASTIC_TOL).is_err());
        let m = DMatrix::from_row_slice(2, 2, &[1.5, -0.5, -0.5, 1.5]);
        assert!(check_doubly_stochastic(&m, STOCHASTIC_TOL).is_err());
    }
}
