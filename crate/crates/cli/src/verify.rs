//! Closed-form versus numeric checks run by the `verify` command.

use std::f64::consts::PI;

use adpsgd_core::chronos::{coupled_run, ClusterProfile, DEFAULT_COUPLED_STALENESS};
use adpsgd_core::engine::{
    init_learners, mean_model, run_training, step_adpsgd_mixing, step_sdpsgd, GenericMixing, LrSchedule,
    Strategy, StrategyConfig,
};
use adpsgd_core::linalg::symmetric_eigenvalues;
use adpsgd_core::mixing::{
    build_fixed_ring, build_random_ring, build_uniform, fm_lambda_closed_form, random_permutation,
    rm_expected_gram, second_eigenvalue_magnitude, verify_consensus_decay, RingKind,
};
use adpsgd_core::objectives::{
    gradient_check, make_logistic, make_mlp, make_quadratic_with, sample_batch, Dataset, Objective, SampleBatch,
};
use adpsgd_core::rng;
use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    fn new(name: &'static str, passed: bool, detail: String) -> Self {
        Self { name, passed, detail }
    }

    fn failed(name: &'static str, err: impl std::fmt::Display) -> Self {
        Self::new(name, false, format!("error: {err}"))
    }

    pub fn line(&self) -> String {
        format!("{} {}: {}", if self.passed { "PASS" } else { "FAIL" }, self.name, self.detail)
    }
}

fn attempt(name: &'static str, f: impl FnOnce() -> adpsgd_core::Result<Check>) -> Check {
    f().unwrap_or_else(|e| Check::failed(name, e))
}

/// Closed-form second eigenvalue of the fixed ring against the numeric one
/// for every L in 3..=128.
pub fn fixed_ring_closed_form() -> Check {
    const NAME: &str = "fixed_ring_lambda_closed_form";
    attempt(NAME, || {
        let mut worst = (0.0f64, 0usize);
        for l in 3..=128 {
            let numeric = second_eigenvalue_magnitude(&build_fixed_ring(l)?)?.lambda_hat;
            let err = (fm_lambda_closed_form(l)? - numeric).abs();
            if err > worst.0 {
                worst = (err, l);
            }
        }
        Ok(Check::new(
            NAME,
            worst.0 <= 1e-9,
            format!("max |closed - numeric| = {:.3e} (L={}) over L=3..128, tol 1e-9", worst.0, worst.1),
        ))
    })
}

/// Monte-Carlo mean of `T^T T` over uniform ring permutations against the
/// closed form, entrywise and through its spectrum.
pub fn random_ring_gram(seed: u64, trials: usize) -> Check {
    const NAME: &str = "random_ring_expected_gram";
    attempt(NAME, || {
        let mut worst_entry = 0.0f64;
        let mut worst_eig = 0.0f64;
        for l in [8usize, 16] {
            let mut r = rng::stream(seed, 0x6a3 + l as u64);
            let mut acc = DMatrix::<f64>::zeros(l, l);
            for _ in 0..trials {
                let t = build_random_ring(l, &random_permutation(l, &mut r))?;
                acc += t.entries().transpose() * t.entries();
            }
            acc /= trials as f64;
            let closed = rm_expected_gram(l)?;
            worst_entry = worst_entry.max((&acc - &closed).amax());
            let small = 1.0 / 3.0 - 2.0 / (3.0 * (l as f64 - 1.0));
            let mut expected = vec![small; l - 1];
            expected.push(1.0);
            let got = symmetric_eigenvalues(&acc)?;
            for (a, b) in got.iter().zip(&expected) {
                worst_eig = worst_eig.max((a - b).abs());
            }
        }
        Ok(Check::new(
            NAME,
            worst_entry <= 0.01 && worst_eig <= 0.01,
            format!(
                "{trials} permutations at L=8,16: max entry error {worst_entry:.3e}, max eigenvalue error {worst_eig:.3e}, tol 1e-2"
            ),
        ))
    })
}

/// `||T^k - 11^T/L||_2 <= lambda^k` for the fixed ring.
pub fn fixed_ring_product_bound() -> Check {
    const NAME: &str = "fixed_ring_product_bound";
    attempt(NAME, || {
        let mut worst = f64::NEG_INFINITY;
        let mut rows = 0;
        for l in [8usize, 16, 64] {
            let lam = 1.0 / 3.0 + 2.0 / 3.0 * (2.0 * PI / l as f64).cos();
            for p in verify_consensus_decay(RingKind::FixedRing, l, 200, 1, &mut rng::stream(0, 0))? {
                worst = worst.max(p.measured - lam.powi(p.k as i32));
                rows += 1;
            }
        }
        Ok(Check::new(
            NAME,
            worst <= 1e-12,
            format!("{rows} rows at L=8,16,64, k<=200: max(measured - bound) = {worst:.3e}, tol 1e-12"),
        ))
    })
}

/// Sample mean of random-ring products against the expectation bound.
pub fn random_ring_expectation_bound(seed: u64, trials: usize) -> Check {
    const NAME: &str = "random_ring_expectation_bound";
    attempt(NAME, || {
        let mut violations = 0;
        let mut rows = 0;
        let mut r = rng::stream(seed, 0xb0d);
        for l in [16usize, 32] {
            for p in verify_consensus_decay(RingKind::RandomRing, l, 30, trials, &mut r)? {
                rows += 1;
                if !p.within_bound(0.0) {
                    violations += 1;
                }
            }
        }
        Ok(Check::new(
            NAME,
            violations == 0,
            format!("{trials} trials at L=16,32, k<=30: {violations} of {rows} rows above bound + 3 SE"),
        ))
    })
}

fn random_point<R: Rng>(dim: usize, scale: f64, r: &mut R) -> Vec<f64> {
    (0..dim)
        .map(|_| scale * Distribution::<f64>::sample(&StandardNormal, r))
        .collect()
}

fn max_gradient_error(objective: &dyn Objective, data: &Dataset, seed: u64, scale: f64) -> adpsgd_core::Result<f64> {
    let mut r = rng::stream(seed, 0x9c);
    let mut worst = 0.0f64;
    for _ in 0..20 {
        let w = random_point(objective.dimension(), scale, &mut r);
        let batch = sample_batch(data, 8, &mut r)?;
        worst = worst.max(gradient_check(objective, &w, &batch, 1e-5));
    }
    Ok(worst)
}

/// Finite-difference gradient checks at 20 random points per objective.
pub fn gradient_checks(seed: u64) -> Check {
    const NAME: &str = "gradient_finite_difference";
    attempt(NAME, || {
        let (q, qd) = make_quadratic_with(12, 20.0, 0.7, 512, 0.2, seed)?;
        let (lg, ld) = make_logistic(10, 400, seed)?;
        let (mlp, md) = make_mlp(4, 6, 3, 600, seed)?;
        let eq = max_gradient_error(&q, &qd, seed, 1.0)?;
        let el = max_gradient_error(&lg, &ld, seed, 1.0)?;
        let em = max_gradient_error(&mlp, &md, seed, 0.5)?;
        Ok(Check::new(
            NAME,
            eq <= 1e-5 && el <= 1e-5 && em <= 1e-4,
            format!("max relative error: quadratic {eq:.2e} (tol 1e-5), logistic {el:.2e} (tol 1e-5), mlp {em:.2e} (tol 1e-4)"),
        ))
    })
}

/// One synchronous step equals SGD on the pooled batch.
pub fn sdpsgd_equivalence(seed: u64) -> Check {
    const NAME: &str = "sdpsgd_pooled_batch_equivalence";
    attempt(NAME, || {
        let (obj, data) = make_quadratic_with(10, 10.0, 1.0, 800, 0.2, seed)?;
        let mut r = rng::stream(seed, 0x5d);
        let mut worst = 0.0f64;
        for trial in 0..20 {
            let l = 2 + trial % 7;
            let m = 1 + trial % 5;
            let start = random_point(10, 1.0, &mut r);
            let batches = (0..l)
                .map(|_| sample_batch(&data, m, &mut r))
                .collect::<adpsgd_core::Result<Vec<_>>>()?;
            let mut states = init_learners(l, &start, 1);
            step_sdpsgd(&mut states, &obj, &batches, 0.05)?;
            let g = obj.gradient(&start, &SampleBatch::concat(&batches));
            for s in &states {
                for ((x, w), d) in s.model().iter().zip(&start).zip(&g) {
                    worst = worst.max((x - (w - 0.05 * d)).abs());
                }
            }
        }
        Ok(Check::new(NAME, worst <= 1e-10, format!("20 trials: max deviation {worst:.3e}, tol 1e-10")))
    })
}

/// Row and column sums of all three mixing families.
pub fn doubly_stochastic(seed: u64) -> Check {
    const NAME: &str = "mixing_doubly_stochastic";
    attempt(NAME, || {
        let mut r = rng::stream(seed, 0xd5);
        let mut count = 0;
        for l in 3..=64 {
            build_fixed_ring(l)?.check_doubly_stochastic()?;
            build_uniform(l)?.check_doubly_stochastic()?;
            build_random_ring(l, &random_permutation(l, &mut r))?.check_doubly_stochastic()?;
            count += 3;
        }
        Ok(Check::new(NAME, true, format!("{count} matrices for L=3..64 within 1e-12")))
    })
}

/// With zero gradients a mixing step keeps the learners' mean.
pub fn mixing_preserves_mean(seed: u64) -> Check {
    const NAME: &str = "mixing_preserves_mean";
    struct Flat(usize);
    impl Objective for Flat {
        fn name(&self) -> &'static str {
            "flat"
        }
        fn dimension(&self) -> usize {
            self.0
        }
        fn loss(&self, _: &[f64], _: &[adpsgd_core::objectives::Sample]) -> f64 {
            0.0
        }
        fn gradient(&self, _: &[f64], _: &[adpsgd_core::objectives::Sample]) -> Vec<f64> {
            vec![0.0; self.0]
        }
        fn initial_point(&self) -> Vec<f64> {
            vec![0.0; self.0]
        }
    }
    attempt(NAME, || {
        let mut r = rng::stream(seed, 0x3e);
        let mut worst = 0.0f64;
        for l in [3usize, 8, 17] {
            let mut states = init_learners(l, &[0.0; 5], 1);
            for s in states.iter_mut() {
                s.push(random_point(5, 1.0, &mut r));
            }
            let before = mean_model(&states);
            let batches = vec![SampleBatch::default(); l];
            for _ in 0..10 {
                let t = build_random_ring(l, &random_permutation(l, &mut r))?;
                step_adpsgd_mixing(&mut states, &Flat(5), &batches, 0.1, &t)?;
            }
            for (a, b) in mean_model(&states).iter().zip(&before) {
                worst = worst.max((a - b).abs());
            }
        }
        Ok(Check::new(NAME, worst <= 1e-12, format!("max drift of the mean {worst:.3e}, tol 1e-12")))
    })
}

/// Timing-coupled training on a homogeneous cluster reproduces the engine.
pub fn coupled_matches_engine(seed: u64) -> Check {
    const NAME: &str = "coupled_homogeneous_matches_engine";
    attempt(NAME, || {
        let (obj, data) = make_quadratic_with(8, 10.0, 0.5, 640, 0.2, seed)?;
        let profile = ClusterProfile::homogeneous(6, 1.0, 0.1, 0.2);
        let mut mismatched = Vec::new();
        for strategy in Strategy::NAMED {
            let cfg = StrategyConfig {
                strategy,
                learners: 6,
                local_batch: 4,
                epochs: 2,
                schedule: LrSchedule::constant(0.05),
                seed,
                generic_mixing: GenericMixing::FixedRing,
            };
            let engine = run_training(&cfg, &obj, &data)?;
            let (coupled, _) = coupled_run(&profile, &cfg, DEFAULT_COUPLED_STALENESS, &obj, &data)?;
            if engine != coupled {
                mismatched.push(strategy.name());
            }
        }
        Ok(Check::new(
            NAME,
            mismatched.is_empty(),
            if mismatched.is_empty() {
                "all four strategies bit-identical".to_string()
            } else {
                format!("records differ for {}", mismatched.join(", "))
            },
        ))
    })
}

/// Every check, in report order.
pub fn run_all(seed: u64) -> Vec<Check> {
    vec![
        fixed_ring_closed_form(),
        random_ring_gram(seed, 20_000),
        fixed_ring_product_bound(),
        random_ring_expectation_bound(seed, 1000),
        gradient_checks(seed),
        sdpsgd_equivalence(seed),
        doubly_stochastic(seed),
        mixing_preserves_mean(seed),
        coupled_matches_engine(seed),
    ]
}
