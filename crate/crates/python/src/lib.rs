//! Python bindings: mixing matrices and their spectra, consensus-decay
//! measurements, training runs and the cluster timing model.

use adpsgd_core::chronos::{self, coupled_run, slowdown_experiment};
use adpsgd_core::engine::{self, run_training, GenericMixing, Strategy, StrategyConfig};
use adpsgd_core::mixing::{self, RingKind};
use adpsgd_core::objectives::ObjectiveSpec;
use adpsgd_core::rng;
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;

fn to_py(e: adpsgd_core::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn parse_strategy(name: &str) -> PyResult<Strategy> {
    name.parse().map_err(to_py)
}

/// A doubly stochastic mixing matrix.
#[pyclass(frozen, module = "adpsgd")]
struct MixingMatrix(mixing::MixingMatrix);

#[pymethods]
impl MixingMatrix {
    /// Fixed ring: each learner averages with itself and both neighbours.
    #[staticmethod]
    fn fixed_ring(order: usize) -> PyResult<Self> {
        mixing::build_fixed_ring(order).map(Self).map_err(to_py)
    }

    /// Ring over a uniformly random permutation of the learners.
    #[staticmethod]
    fn random_ring(order: usize, seed: u64) -> PyResult<Self> {
        let perm = mixing::random_permutation(order, &mut rng::mixing_stream(seed));
        mixing::build_random_ring(order, &perm).map(Self).map_err(to_py)
    }

    /// `11^T / L`, what an allreduce computes.
    #[staticmethod]
    fn uniform(order: usize) -> PyResult<Self> {
        mixing::build_uniform(order).map(Self).map_err(to_py)
    }

    #[getter]
    fn order(&self) -> usize {
        self.0.order()
    }

    /// Row-major entries as a list of rows.
    fn rows(&self) -> Vec<Vec<f64>> {
        let m = self.0.entries();
        (0..m.nrows()).map(|r| m.row(r).iter().copied().collect()).collect()
    }

    /// `(lambda_hat, spectral_gap)`.
    fn spectrum(&self) -> PyResult<(f64, f64)> {
        let r = mixing::second_eigenvalue_magnitude(&self.0).map_err(to_py)?;
        Ok((r.lambda_hat, r.spectral_gap))
    }

    /// Applies row `row` to one model per learner.
    fn mix_row(&self, row: usize, models: Vec<Vec<f64>>) -> PyResult<Vec<f64>> {
        if row >= self.0.order() || models.len() != self.0.order() {
            return Err(PyValueError::new_err(format!(
                "need row < {0} and {0} models, got row {row} and {1} models",
                self.0.order(),
                models.len()
            )));
        }
        let refs: Vec<&[f64]> = models.iter().map(Vec::as_slice).collect();
        Ok(self.0.mix_row(row, &refs))
    }

    fn __repr__(&self) -> String {
        format!("MixingMatrix({}, order={})", self.0.kind(), self.0.order())
    }
}

#[pyfunction]
fn fm_lambda_closed_form(order: usize) -> PyResult<f64> {
    mixing::fm_lambda_closed_form(order).map_err(to_py)
}

/// Rows of `(k, measured, std_error, bound)` for `k = 0..=k_max`.
#[pyfunction]
#[pyo3(signature = (kind, order, k_max, trials = 1, seed = 0))]
fn consensus_decay(kind: &str, order: usize, k_max: u64, trials: usize, seed: u64) -> PyResult<Vec<(u64, f64, f64, f64)>> {
    let kind = match kind {
        "fixed" => RingKind::FixedRing,
        "random" => RingKind::RandomRing,
        other => return Err(PyValueError::new_err(format!("kind must be 'fixed' or 'random', got {other:?}"))),
    };
    let points = mixing::verify_consensus_decay(kind, order, k_max, trials, &mut rng::mixing_stream(seed)).map_err(to_py)?;
    Ok(points.iter().map(|p| (p.k, p.measured, p.std_error, p.bound)).collect())
}

#[pyclass(frozen, skip_from_py_object, module = "adpsgd")]
#[derive(Clone, Copy)]
struct LrSchedule(engine::LrSchedule);

#[pymethods]
impl LrSchedule {
    #[new]
    #[pyo3(signature = (base_lr, peak_lr, warmup_epochs = 0, anneal_factor = std::f64::consts::FRAC_1_SQRT_2, anneal_start_epoch = usize::MAX))]
    fn new(base_lr: f64, peak_lr: f64, warmup_epochs: usize, anneal_factor: f64, anneal_start_epoch: usize) -> PyResult<Self> {
        let s = engine::LrSchedule {
            base_lr,
            peak_lr,
            warmup_epochs,
            anneal_factor,
            anneal_start_epoch,
        };
        s.validate().map_err(to_py)?;
        Ok(Self(s))
    }

    #[staticmethod]
    fn constant(lr: f64) -> PyResult<Self> {
        Self::new(lr, lr, 0, 1.0, 0)
    }

    fn lr_at(&self, epoch: usize) -> f64 {
        self.0.lr_at(epoch)
    }
}

/// A training task; the dataset is generated from the run's seed.
#[pyclass(frozen, skip_from_py_object, module = "adpsgd")]
#[derive(Clone)]
struct Objective(ObjectiveSpec);

#[pymethods]
impl Objective {
    #[staticmethod]
    #[pyo3(signature = (dimension, condition_number, noise_sigma, samples = 4096, heldout_fraction = 0.2))]
    fn quadratic(dimension: usize, condition_number: f64, noise_sigma: f64, samples: usize, heldout_fraction: f64) -> Self {
        Self(ObjectiveSpec::Quadratic {
            dimension,
            condition_number,
            noise_sigma,
            samples,
            heldout_fraction,
        })
    }

    #[staticmethod]
    fn logistic(dimension: usize, samples: usize) -> Self {
        Self(ObjectiveSpec::Logistic { dimension, samples })
    }

    #[staticmethod]
    fn mlp(inputs: usize, hidden: usize, classes: usize, samples: usize) -> Self {
        Self(ObjectiveSpec::Mlp {
            inputs,
            hidden,
            classes,
            samples,
        })
    }

    /// The known minimizer, if the task has one.
    fn optimum(&self, seed: u64) -> PyResult<Option<Vec<f64>>> {
        let (obj, _) = self.0.build(seed).map_err(to_py)?;
        Ok(obj.optimum().map(<[f64]>::to_vec))
    }
}

#[pyclass(frozen, module = "adpsgd")]
struct RunRecord(engine::RunRecord);

#[pymethods]
impl RunRecord {
    #[getter]
    fn strategy(&self) -> &'static str {
        self.0.strategy.name()
    }

    #[getter]
    fn learners(&self) -> usize {
        self.0.learners
    }

    #[getter]
    fn iterations_per_epoch(&self) -> usize {
        self.0.iterations_per_epoch
    }

    #[getter]
    fn initial_heldout_loss(&self) -> f64 {
        self.0.initial_heldout_loss
    }

    #[getter]
    fn final_heldout_loss(&self) -> f64 {
        self.0.final_heldout_loss()
    }

    #[getter]
    fn diverged(&self) -> bool {
        self.0.diverged()
    }

    #[getter]
    fn divergence_epoch(&self) -> Option<usize> {
        self.0.divergence.as_ref().map(|d| d.epoch)
    }

    /// `(epoch, lr, heldout_loss, train_loss)` per completed epoch.
    fn epochs(&self) -> Vec<(usize, f64, f64, f64)> {
        self.0
            .epochs
            .iter()
            .map(|e| (e.epoch, e.lr, e.heldout_loss, e.train_loss))
            .collect()
    }

    /// `(k, consensus_distance)` per iteration.
    fn consensus(&self) -> Vec<(u64, f64)> {
        self.0.iterations.iter().map(|i| (i.k, i.consensus_distance)).collect()
    }

    #[getter]
    fn final_model(&self) -> Vec<f64> {
        self.0.final_model.clone()
    }

    fn distance_to(&self, point: Vec<f64>) -> f64 {
        self.0.distance_to(&point)
    }

    fn __repr__(&self) -> String {
        format!(
            "RunRecord(strategy={}, epochs={}, final_heldout_loss={:e}, diverged={})",
            self.0.strategy.name(),
            self.0.epochs.len(),
            self.0.final_heldout_loss(),
            self.0.diverged()
        )
    }
}

fn strategy_config(
    strategy: &str,
    learners: usize,
    local_batch: usize,
    epochs: usize,
    schedule: &LrSchedule,
    seed: u64,
) -> PyResult<StrategyConfig> {
    let cfg = StrategyConfig {
        strategy: parse_strategy(strategy)?,
        learners,
        local_batch,
        epochs,
        schedule: schedule.0,
        seed,
        generic_mixing: GenericMixing::FixedRing,
    };
    cfg.validate().map_err(to_py)?;
    Ok(cfg)
}

/// Trains one strategy (`sdpsgd`, `adpsgd_fm`, `adpsgd_rm`, `adpsgd_d1d`).
#[pyfunction]
#[pyo3(signature = (strategy, objective, learners, local_batch, epochs, schedule, seed = 0))]
fn train(
    py: Python<'_>,
    strategy: &str,
    objective: &Objective,
    learners: usize,
    local_batch: usize,
    epochs: usize,
    schedule: &LrSchedule,
    seed: u64,
) -> PyResult<RunRecord> {
    let cfg = strategy_config(strategy, learners, local_batch, epochs, schedule, seed)?;
    let spec = objective.0.clone();
    py.detach(move || {
        let (obj, data) = spec.build(seed)?;
        run_training(&cfg, obj.as_ref(), &data)
    })
    .map(RunRecord)
    .map_err(to_py)
}

/// Homogeneous cluster timing profile with optional stragglers.
#[pyclass(frozen, skip_from_py_object, module = "adpsgd")]
#[derive(Clone)]
struct ClusterProfile(chronos::ClusterProfile);

#[pymethods]
impl ClusterProfile {
    #[new]
    #[pyo3(signature = (learners, compute_time, pairwise_comm_time, allreduce_time, sync_overhead = 0.0))]
    fn new(learners: usize, compute_time: f64, pairwise_comm_time: f64, allreduce_time: f64, sync_overhead: f64) -> PyResult<Self> {
        let mut p = chronos::ClusterProfile::homogeneous(learners, compute_time, pairwise_comm_time, allreduce_time);
        p.sync_overhead = sync_overhead;
        p.validate().map_err(to_py)?;
        Ok(Self(p))
    }

    /// A copy with `learner` slowed down by `factor`.
    fn with_straggler(&self, learner: usize, factor: f64) -> PyResult<Self> {
        let p = self.0.with_straggler(learner, factor);
        p.validate().map_err(to_py)?;
        Ok(Self(p))
    }

    /// Simulated wall-clock time of one epoch.
    #[pyo3(signature = (strategy, iterations_per_learner = 100))]
    fn epoch_time(&self, strategy: &str, iterations_per_learner: u64) -> PyResult<f64> {
        chronos::simulate_wallclock(parse_strategy(strategy)?, &self.0, iterations_per_learner)
            .map(|log| log.epoch_time())
            .map_err(to_py)
    }

    /// Event timeline as `(t, learner, event, iteration)` tuples.
    #[pyo3(signature = (strategy, iterations_per_learner = 100))]
    fn events(&self, strategy: &str, iterations_per_learner: u64) -> PyResult<Vec<(f64, usize, &'static str, u64)>> {
        let log = chronos::simulate_wallclock(parse_strategy(strategy)?, &self.0, iterations_per_learner).map_err(to_py)?;
        Ok(log.events.iter().map(|e| (e.t, e.learner, e.kind.as_str(), e.iteration)).collect())
    }
}

/// `(factor, baseline_s, straggler_s, ratio)` with learner 0 slowed down.
#[pyfunction]
#[pyo3(signature = (strategy, profile, factors, iterations_per_learner = 100))]
fn slowdown(strategy: &str, profile: &ClusterProfile, factors: Vec<f64>, iterations_per_learner: u64) -> PyResult<Vec<(f64, f64, f64, f64)>> {
    let reports = slowdown_experiment(parse_strategy(strategy)?, &profile.0, iterations_per_learner, &factors).map_err(to_py)?;
    Ok(reports
        .iter()
        .map(|r| (r.factor, r.baseline_epoch_time, r.straggler_epoch_time, r.ratio))
        .collect())
}

/// Training replayed in the event order of the timing model.
#[pyfunction]
#[pyo3(signature = (strategy, objective, profile, local_batch, epochs, schedule, seed = 0, max_staleness = 1))]
#[allow(clippy::too_many_arguments)]
fn coupled_train(
    py: Python<'_>,
    strategy: &str,
    objective: &Objective,
    profile: &ClusterProfile,
    local_batch: usize,
    epochs: usize,
    schedule: &LrSchedule,
    seed: u64,
    max_staleness: usize,
) -> PyResult<RunRecord> {
    let cfg = strategy_config(strategy, profile.0.learners, local_batch, epochs, schedule, seed)?;
    let spec = objective.0.clone();
    let prof = profile.0.clone();
    py.detach(move || {
        let (obj, data) = spec.build(seed)?;
        coupled_run(&prof, &cfg, max_staleness, obj.as_ref(), &data).map(|(r, _)| r)
    })
    .map(RunRecord)
    .map_err(to_py)
}

#[pymodule]
fn adpsgd(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<MixingMatrix>()?;
    m.add_class::<LrSchedule>()?;
    m.add_class::<Objective>()?;
    m.add_class::<RunRecord>()?;
    m.add_class::<ClusterProfile>()?;
    m.add_function(wrap_pyfunction!(fm_lambda_closed_form, m)?)?;
    m.add_function(wrap_pyfunction!(consensus_decay, m)?)?;
    m.add_function(wrap_pyfunction!(train, m)?)?;
    m.add_function(wrap_pyfunction!(slowdown, m)?)?;
    m.add_function(wrap_pyfunction!(coupled_train, m)?)?;
    m.add("STRATEGIES", Strategy::NAMED.iter().map(|s| s.name()).collect::<Vec<_>>())?;
    Ok(())
}
