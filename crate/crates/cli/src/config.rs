//! Run configuration files. Every section rejects unknown keys, and the
//! fully resolved configuration is written next to each run's outputs.

use std::path::{Path, PathBuf};

use adpsgd_core::chronos::{ClusterProfile, Straggler, DEFAULT_COUPLED_STALENESS};
use adpsgd_core::engine::{GenericMixing, LrSchedule, Strategy, StrategyConfig};
use adpsgd_core::objectives::ObjectiveSpec;
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    AnalyzeMixing,
    Train,
    Stragglers,
    Verify,
}

impl ExperimentKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            Self::AnalyzeMixing => "analyze-mixing",
            Self::Train => "train",
            Self::Stragglers => "stragglers",
            Self::Verify => "verify",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSection {
    pub kind: ExperimentKind,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MixingChoice {
    #[default]
    FixedRing,
    RandomRing,
    Uniform,
}

impl From<MixingChoice> for GenericMixing {
    fn from(m: MixingChoice) -> Self {
        match m {
            MixingChoice::FixedRing => GenericMixing::FixedRing,
            MixingChoice::RandomRing => GenericMixing::RandomRing,
            MixingChoice::Uniform => GenericMixing::Uniform,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StrategySection {
    /// `sdpsgd`, `adpsgd_fm`, `adpsgd_rm`, `adpsgd_d1d` or `generic_staleness`.
    pub name: String,
    pub learners: usize,
    pub local_batch: usize,
    pub epochs: usize,
    /// Staleness bound for `generic_staleness`.
    #[serde(default)]
    pub tau_max: usize,
    /// Mixing matrix for `generic_staleness`.
    #[serde(default)]
    pub mixing: MixingChoice,
}

impl StrategySection {
    pub fn strategy(&self) -> Result<Strategy, CliError> {
        if self.name == "generic_staleness" {
            return Ok(Strategy::GenericStaleness { tau_max: self.tau_max });
        }
        self.name
            .parse()
            .map_err(|e: adpsgd_core::Error| CliError::Config(e.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClusterSection {
    pub compute_time: f64,
    pub pairwise_comm_time: f64,
    pub allreduce_time: f64,
    #[serde(default)]
    pub sync_overhead: f64,
    #[serde(default)]
    pub compute_multipliers: Vec<f64>,
    /// Stragglers present in every run, on top of the injected one.
    #[serde(default)]
    pub stragglers: Vec<Straggler>,
}

impl ClusterSection {
    pub fn profile(&self, learners: usize) -> ClusterProfile {
        ClusterProfile {
            learners,
            compute_time: self.compute_time,
            compute_multipliers: self.compute_multipliers.clone(),
            pairwise_comm_time: self.pairwise_comm_time,
            allreduce_time: self.allreduce_time,
            sync_overhead: self.sync_overhead,
            stragglers: self.stragglers.clone(),
        }
    }
}

fn default_factors() -> Vec<f64> {
    vec![1.0, 5.0, 10.0, 100.0]
}

fn default_strategies() -> Vec<String> {
    Strategy::NAMED.iter().map(|s| s.name().to_string()).collect()
}

fn default_iterations_per_learner() -> u64 {
    100
}

fn default_max_staleness() -> usize {
    DEFAULT_COUPLED_STALENESS
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StragglersSection {
    #[serde(default = "default_strategies")]
    pub strategies: Vec<String>,
    #[serde(default = "default_factors")]
    pub factors: Vec<f64>,
    /// Learner that is slowed down.
    #[serde(default)]
    pub straggler: usize,
    #[serde(default = "default_iterations_per_learner")]
    pub iterations_per_learner: u64,
    /// Also train every strategy under the simulated timeline.
    #[serde(default)]
    pub coupled: bool,
    #[serde(default = "default_max_staleness")]
    pub max_staleness: usize,
}

impl Default for StragglersSection {
    fn default() -> Self {
        Self {
            strategies: default_strategies(),
            factors: default_factors(),
            straggler: 0,
            iterations_per_learner: default_iterations_per_learner(),
            coupled: false,
            max_staleness: default_max_staleness(),
        }
    }
}

pub fn default_analysis_learners() -> Vec<usize> {
    vec![16, 32, 64]
}

fn default_k_max() -> u64 {
    60
}

fn default_trials() -> usize {
    200
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalysisSection {
    #[serde(default = "default_analysis_learners")]
    pub learners: Vec<usize>,
    #[serde(default = "default_k_max")]
    pub k_max: u64,
    #[serde(default = "default_trials")]
    pub trials: usize,
}

impl Default for AnalysisSection {
    fn default() -> Self {
        Self {
            learners: default_analysis_learners(),
            k_max: default_k_max(),
            trials: default_trials(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct TrainSection {
    /// A run counts as converged when the averaged model ends within this
    /// distance of the known optimum. Without it (or without a known
    /// optimum) the heldout loss only has to fall below its initial value.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub optimum_tolerance: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub experiment: ExperimentSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub strategy: Option<StrategySection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub schedule: Option<LrSchedule>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub objective: Option<ObjectiveSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cluster: Option<ClusterSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stragglers: Option<StragglersSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub analysis: Option<AnalysisSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub train: Option<TrainSection>,
}

impl RunConfig {
    /// A config with only the experiment section, for commands driven
    /// entirely by flags.
    pub fn bare(kind: ExperimentKind) -> Self {
        Self {
            experiment: ExperimentSection {
                kind,
                seed: 0,
                out: None,
            },
            strategy: None,
            schedule: None,
            objective: None,
            cluster: None,
            stragglers: None,
            analysis: None,
            train: None,
        }
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("run configs always serialize")
    }

    fn require<'a, T>(section: &'a Option<T>, name: &str) -> Result<&'a T, CliError> {
        section
            .as_ref()
            .ok_or_else(|| CliError::Config(format!("missing [{name}] section")))
    }

    /// Materializes defaults for the sections the experiment uses and
    /// validates everything it will read.
    pub fn resolve(mut self) -> Result<Self, CliError> {
        match self.experiment.kind {
            ExperimentKind::AnalyzeMixing => {
                let a = self.analysis.get_or_insert_with(AnalysisSection::default);
                if a.learners.is_empty() {
                    return Err(CliError::Config("analysis.learners is empty".into()));
                }
                if let Some(&l) = a.learners.iter().find(|&&l| l < 3) {
                    return Err(CliError::Config(format!("ring analysis needs L >= 3, got {l}")));
                }
                if a.trials == 0 {
                    return Err(CliError::Config("analysis.trials must be at least 1".into()));
                }
            }
            ExperimentKind::Train => {
                self.train.get_or_insert_with(TrainSection::default);
                self.strategy_config()?;
                Self::require(&self.objective, "objective")?;
                if let Some(tol) = self.train.as_ref().and_then(|t| t.optimum_tolerance) {
                    if !(tol > 0.0) {
                        return Err(CliError::Config("train.optimum_tolerance must be positive".into()));
                    }
                }
            }
            ExperimentKind::Stragglers => {
                self.stragglers.get_or_insert_with(StragglersSection::default);
                let s = Self::require(&self.strategy, "strategy")?;
                let cluster = Self::require(&self.cluster, "cluster")?;
                cluster
                    .profile(s.learners)
                    .validate()
                    .map_err(|e| CliError::Config(e.to_string()))?;
                let st = self.stragglers.as_ref().expect("inserted above");
                if st.straggler >= s.learners {
                    return Err(CliError::Config(format!(
                        "stragglers.straggler {} out of range for {} learners",
                        st.straggler, s.learners
                    )));
                }
                if let Some(f) = st.factors.iter().find(|f| !(f.is_finite() && **f >= 1.0)) {
                    return Err(CliError::Config(format!("straggler factors must be >= 1, got {f}")));
                }
                if st.iterations_per_learner == 0 {
                    return Err(CliError::Config("stragglers.iterations_per_learner must be positive".into()));
                }
                for name in &st.strategies {
                    let parsed: Strategy = name
                        .parse()
                        .map_err(|e: adpsgd_core::Error| CliError::Config(e.to_string()))?;
                    if matches!(parsed, Strategy::AdpsgdFm | Strategy::AdpsgdRm) && s.learners < 3 {
                        return Err(CliError::Config(format!("{name} needs at least 3 learners")));
                    }
                }
                if st.coupled {
                    Self::require(&self.objective, "objective")?;
                    self.strategy_config()?;
                }
            }
            ExperimentKind::Verify => {}
        }
        Ok(self)
    }

    /// Engine configuration from the `[strategy]` and `[schedule]` sections.
    pub fn strategy_config(&self) -> Result<StrategyConfig, CliError> {
        let s = Self::require(&self.strategy, "strategy")?;
        let schedule = *Self::require(&self.schedule, "schedule")?;
        let cfg = StrategyConfig {
            strategy: s.strategy()?,
            learners: s.learners,
            local_batch: s.local_batch,
            epochs: s.epochs,
            schedule,
            seed: self.experiment.seed,
            generic_mixing: s.mixing.into(),
        };
        cfg.validate().map_err(|e| CliError::Config(e.to_string()))?;
        Ok(cfg)
    }
}
