//! The four subcommands. Each takes a resolved config and an output
//! directory and reports an [`Outcome`].

use std::fs;
use std::path::{Path, PathBuf};

use adpsgd_core::chronos::{coupled_run, simulate_wallclock, EventLog};
use adpsgd_core::engine::{run_training, RunRecord, Strategy, StrategyConfig};
use adpsgd_core::mixing::{
    build_fixed_ring, fm_lambda_closed_form, second_eigenvalue_magnitude, verify_consensus_decay, DecayPoint,
    RingKind,
};
use adpsgd_core::rng;

use crate::config::{AnalysisSection, ExperimentKind, RunConfig};
use crate::output::{fmt_f64, prepare_dir, run_status, write_resolved_config, write_run, Csv};
use crate::verify;
use crate::{CliError, Outcome};

/// FM rows are exact products, so only round-off is tolerated.
const FM_BOUND_TOL: f64 = 1e-12;

/// Command-line values that take precedence over the config file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub k_max: Option<u64>,
    pub trials: Option<usize>,
    pub learners: Option<Vec<usize>>,
}

/// Loads (or, for commands that need no file, synthesizes) the config,
/// applies overrides and resolves defaults.
pub fn prepare_config(kind: ExperimentKind, path: Option<&Path>, overrides: &Overrides) -> Result<RunConfig, CliError> {
    let mut cfg = match path {
        Some(p) => RunConfig::load(p)?,
        None if matches!(kind, ExperimentKind::AnalyzeMixing | ExperimentKind::Verify) => RunConfig::bare(kind),
        None => return Err(CliError::Config(format!("{} requires --config", kind.as_str()))),
    };
    if cfg.experiment.kind != kind {
        return Err(CliError::Config(format!(
            "config describes a {} experiment, not {}",
            cfg.experiment.kind.as_str(),
            kind.as_str()
        )));
    }
    if let Some(seed) = overrides.seed {
        cfg.experiment.seed = seed;
    }
    if let Some(out) = &overrides.out {
        cfg.experiment.out = Some(out.clone());
    }
    if overrides.k_max.is_some() || overrides.trials.is_some() || overrides.learners.is_some() {
        if kind != ExperimentKind::AnalyzeMixing {
            return Err(CliError::Config(
                "--k-max, --trials and --learners only apply to analyze-mixing".into(),
            ));
        }
        let a = cfg.analysis.get_or_insert_with(AnalysisSection::default);
        if let Some(k) = overrides.k_max {
            a.k_max = k;
        }
        if let Some(t) = overrides.trials {
            a.trials = t;
        }
        if let Some(l) = &overrides.learners {
            a.learners = l.clone();
        }
    }
    let cfg = cfg.resolve()?;
    if cfg.experiment.out.is_none() {
        return Err(CliError::Config("no output directory: pass --out or set experiment.out".into()));
    }
    Ok(cfg)
}

/// Dispatches on the experiment kind. The resolved config is written first
/// so even a failed run documents what it attempted.
pub fn run(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let dir = cfg
        .experiment
        .out
        .clone()
        .ok_or_else(|| CliError::Config("no output directory".into()))?;
    prepare_dir(&dir)?;
    write_resolved_config(&dir, cfg)?;
    match cfg.experiment.kind {
        ExperimentKind::AnalyzeMixing => analyze_mixing(cfg, &dir),
        ExperimentKind::Train => train(cfg, &dir),
        ExperimentKind::Stragglers => stragglers(cfg, &dir),
        ExperimentKind::Verify => verify_all(cfg, &dir),
    }
}

fn decay_row(csv: &mut Csv, kind: &str, order: usize, p: &DecayPoint) {
    csv.row(&[
        kind.to_string(),
        order.to_string(),
        p.k.to_string(),
        fmt_f64(p.measured),
        fmt_f64(p.bound),
        fmt_f64(p.log10_measured()),
        fmt_f64(p.log10_bound),
    ]);
}

/// `mixing.csv` with consensus decay against its bound for both ring
/// kinds, and `spectral.csv` with the fixed ring's second eigenvalue.
/// Random-ring rows are written only where the bound holds (L >= 6).
pub fn analyze_mixing(cfg: &RunConfig, dir: &Path) -> Result<Outcome, CliError> {
    let a = cfg.analysis.clone().unwrap_or_default();
    let seed = cfg.experiment.seed;
    let mut mixing = Csv::new(&["kind", "L", "k", "measured", "bound", "log10_measured", "log10_bound"]);
    let mut spectral = Csv::new(&["L", "lambda_hat", "lambda_closed_form", "spectral_gap"]);
    let mut violations = Vec::new();
    for &order in &a.learners {
        let fixed = verify_consensus_decay(RingKind::FixedRing, order, a.k_max, 1, &mut rng::stream(seed, 0))?;
        for p in &fixed {
            decay_row(&mut mixing, "fixed", order, p);
            if !p.within_bound(FM_BOUND_TOL) {
                violations.push(format!("fixed ring L={order} k={}: {} > {}", p.k, p.measured, p.bound));
            }
        }
        if order >= 6 {
            let mut r = rng::stream(seed, order as u64);
            for p in verify_consensus_decay(RingKind::RandomRing, order, a.k_max, a.trials, &mut r)? {
                decay_row(&mut mixing, "random", order, &p);
            }
        }
        let report = second_eigenvalue_magnitude(&build_fixed_ring(order)?)?;
        spectral.row(&[
            order.to_string(),
            fmt_f64(report.lambda_hat),
            fmt_f64(fm_lambda_closed_form(order)?),
            fmt_f64(report.spectral_gap),
        ]);
    }
    mixing.write(&dir.join("mixing.csv"))?;
    spectral.write(&dir.join("spectral.csv"))?;
    if violations.is_empty() {
        Ok(Outcome::Success)
    } else {
        for v in &violations {
            eprintln!("bound violated: {v}");
        }
        Ok(Outcome::VerificationFailed)
    }
}

fn training_outcome(record: &RunRecord) -> Outcome {
    if record.diverged() {
        Outcome::Diverged
    } else {
        Outcome::Success
    }
}

/// `run.csv`, `consensus.csv` and `summary.txt` for one training run.
pub fn train(cfg: &RunConfig, dir: &Path) -> Result<Outcome, CliError> {
    let sc = cfg.strategy_config()?;
    let spec = cfg
        .objective
        .as_ref()
        .ok_or_else(|| CliError::Config("missing [objective] section".into()))?;
    let (objective, data) = spec.build(sc.seed)?;
    let record = run_training(&sc, objective.as_ref(), &data)?;
    let tolerance = cfg.train.as_ref().and_then(|t| t.optimum_tolerance);
    let status = run_status(&record, objective.optimum(), tolerance);
    write_run(dir, &record, status, objective.optimum())?;
    if let Some(d) = &record.divergence {
        eprintln!("diverged at epoch {} (iteration {}): {}", d.epoch, d.iteration, d.reason);
    }
    Ok(training_outcome(&record))
}

fn factor_label(factor: f64) -> String {
    format!("f{factor}")
}

/// `slowdown.csv` from the timing model; in coupled mode also one training
/// run per strategy and factor under `coupled/<strategy>/`.
pub fn stragglers(cfg: &RunConfig, dir: &Path) -> Result<Outcome, CliError> {
    let section = cfg.stragglers.clone().unwrap_or_default();
    let s = cfg
        .strategy
        .as_ref()
        .ok_or_else(|| CliError::Config("missing [strategy] section".into()))?;
    let cluster = cfg
        .cluster
        .as_ref()
        .ok_or_else(|| CliError::Config("missing [cluster] section".into()))?;
    let base = cluster.profile(s.learners);
    let strategies: Vec<Strategy> = section
        .strategies
        .iter()
        .map(|n| n.parse())
        .collect::<Result<_, adpsgd_core::Error>>()?;

    let mut csv = Csv::new(&["strategy", "factor", "baseline_s", "straggler_s", "ratio"]);
    for &strategy in &strategies {
        let baseline = simulate_wallclock(strategy, &base, section.iterations_per_learner)?.epoch_time();
        for &factor in &section.factors {
            let slowed = base.with_straggler(section.straggler, factor);
            let t = simulate_wallclock(strategy, &slowed, section.iterations_per_learner)?.epoch_time();
            csv.row(&[
                strategy.name().to_string(),
                fmt_f64(factor),
                fmt_f64(baseline),
                fmt_f64(t),
                fmt_f64(t / baseline),
            ]);
        }
    }
    csv.write(&dir.join("slowdown.csv"))?;

    if !section.coupled {
        return Ok(Outcome::Success);
    }
    let spec = cfg
        .objective
        .as_ref()
        .ok_or_else(|| CliError::Config("missing [objective] section".into()))?;
    let template = cfg.strategy_config()?;
    let (objective, data) = spec.build(template.seed)?;
    let mut outcome = Outcome::Success;
    for &strategy in &strategies {
        let sc = StrategyConfig { strategy, ..template.clone() };
        let root = dir.join("coupled").join(strategy.name());
        let mut runs = vec![("baseline".to_string(), base.clone())];
        for &factor in &section.factors {
            runs.push((factor_label(factor), base.with_straggler(section.straggler, factor)));
        }
        for (label, profile) in runs {
            let (record, log) = coupled_run(&profile, &sc, section.max_staleness, objective.as_ref(), &data)?;
            let run_dir = root.join(&label);
            write_coupled(&run_dir, &record, &log, objective.optimum())?;
            if record.diverged() {
                eprintln!("{strategy} {label}: diverged");
                outcome = Outcome::Diverged;
            }
        }
    }
    Ok(outcome)
}

fn write_coupled(dir: &Path, record: &RunRecord, log: &EventLog, optimum: Option<&[f64]>) -> Result<(), CliError> {
    let status = run_status(record, optimum, None);
    write_run(dir, record, status, optimum)?;
    fs::write(dir.join("events.csv"), log.to_csv())?;
    Ok(())
}

/// `verify.txt` with one PASS/FAIL line per check.
pub fn verify_all(cfg: &RunConfig, dir: &Path) -> Result<Outcome, CliError> {
    let checks = verify::run_all(cfg.experiment.seed);
    let mut text = String::new();
    for c in &checks {
        let line = c.line();
        println!("{line}");
        text.push_str(&line);
        text.push('\n');
    }
    fs::write(dir.join("verify.txt"), text)?;
    if checks.iter().all(|c| c.passed) {
        Ok(Outcome::Success)
    } else {
        Ok(Outcome::VerificationFailed)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn factor_labels_are_path_safe() {
        assert_eq!(factor_label(100.0), "f100");
        assert_eq!(factor_label(2.5), "f2.5");
    }

    #[test]
    fn train_without_config_is_a_usage_error() {
        let err = prepare_config(ExperimentKind::Train, None, &Overrides::default()).unwrap_err();
        assert_eq!(err.code(), crate::EXIT_USAGE);
    }

    #[test]
    fn analysis_overrides_apply() {
        let o = Overrides {
            out: Some("x".into()),
            k_max: Some(5),
            trials: Some(7),
            learners: Some(vec![8]),
            seed: Some(9),
        };
        let cfg = prepare_config(ExperimentKind::AnalyzeMixing, None, &o).unwrap();
        let a = cfg.analysis.unwrap();
        assert_eq!((a.k_max, a.trials, a.learners), (5, 7, vec![8]));
        assert_eq!(cfg.experiment.seed, 9);
    }

    #[test]
    fn small_ring_is_rejected() {
        let o = Overrides {
            out: Some("x".into()),
            learners: Some(vec![2]),
            ..Overrides::default()
        };
        let err = prepare_config(ExperimentKind::AnalyzeMixing, None, &o).unwrap_err();
        assert_eq!(err.code(), crate::EXIT_USAGE);
    }
}
