//! Statistical campaigns: bound coverage, assumption audits, limit curves and
//! contraction-rate checks.
//!
//! Each campaign is a [`Campaign`] registered by name in a
//! [`CampaignRegistry`]. A campaign factory receives the raw parameter table
//! from the run config and rejects unknown keys. Trials derive their seeds
//! from the campaign seed with [`crate::seed::derive`] using the trial index as
//! the stream, so results do not depend on the degree of parallelism.
//!
//! All pass/fail tolerances are three binomial standard errors.

mod audit;
mod coverage;
mod limit;
mod rate;

use serde::de::DeserializeOwned;
use serde::Serialize;
use thiserror::Error;

use crate::bounds::{BoundsError, ConvergenceSpec, ProblemSpec};
use crate::datagen::{DataDistribution, DataError};
use crate::engine::{EngineConfig, EngineError};
use crate::learners::{LearnError, LearnerConfig};

pub use audit::{assumption_audit, AuditCell, AuditReport, FrontierPoint};
pub use coverage::{coverage_experiment, coverage_pass_threshold, CoverageReport};
pub use limit::{limit_curve, LimitCurve};
pub use rate::{rate_experiment, RateMode, RateReport};

/// Version tag embedded in every JSON report.
pub const REPORT_SCHEMA_VERSION: u32 = 1;

/// Fresh-sample size used to measure "true" risk.
pub const TRUE_RISK_SAMPLES: usize = 100_000;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid campaign config: {0}")]
    InvalidConfig(String),
    #[error("unknown campaign `{0}`")]
    UnknownCampaign(String),
    #[error(transparent)]
    Bounds(#[from] BoundsError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Learn(#[from] LearnError),
    #[error(transparent)]
    Engine(#[from] EngineError),
}

/// Everything a campaign may draw on besides its own parameters.
pub struct CampaignContext {
    pub spec: ProblemSpec,
    pub distribution: DataDistribution,
    pub learner: LearnerConfig,
    pub convergence: Option<ConvergenceSpec>,
    /// Engine settings, used by the empirical rate mode.
    pub engine: Option<EngineConfig>,
    pub seed: u64,
    pub pool: rayon::ThreadPool,
}

#[derive(Debug, Clone)]
pub struct CampaignOutcome {
    pub name: &'static str,
    pub pass: bool,
    pub report: serde_json::Value,
    pub table: String,
}

impl CampaignOutcome {
    pub fn new<R: Serialize>(name: &'static str, pass: bool, report: &R, table: String) -> Self {
        Self {
            name,
            pass,
            report: serde_json::to_value(report).expect("reports serialize"),
            table,
        }
    }
}

pub trait Campaign: Send + Sync {
    fn name(&self) -> &'static str;
    fn run(&self, ctx: &CampaignContext) -> Result<CampaignOutcome, HarnessError>;
}

pub type CampaignFactory = fn(toml::Table) -> Result<Box<dyn Campaign>, HarnessError>;

pub struct CampaignRegistry {
    entries: Vec<(&'static str, CampaignFactory)>,
}

pub(crate) fn parse_params<T: DeserializeOwned>(
    name: &str,
    table: toml::Table,
) -> Result<T, HarnessError> {
    toml::Value::Table(table)
        .try_into()
        .map_err(|e| HarnessError::InvalidConfig(format!("{name}: {e}")))
}

impl CampaignRegistry {
    pub fn empty() -> Self {
        Self {
            entries: Vec::new(),
        }
    }

    pub fn builtin() -> Self {
        let mut r = Self::empty();
        r.register("coverage", coverage::factory);
        r.register("audit", audit::factory);
        r.register("limit", limit::factory);
        r.register("rate", rate::factory);
        r
    }

    pub fn register(&mut self, name: &'static str, factory: CampaignFactory) {
        match self.entries.iter_mut().find(|(n, _)| *n == name) {
            Some(slot) => slot.1 = factory,
            None => self.entries.push((name, factory)),
        }
    }

    pub fn names(&self) -> Vec<&'static str> {
        self.entries.iter().map(|(n, _)| *n).collect()
    }

    pub fn build(
        &self,
        name: &str,
        params: toml::Table,
    ) -> Result<Box<dyn Campaign>, HarnessError> {
        let (_, factory) = self
            .entries
            .iter()
            .find(|(n, _)| *n == name)
            .ok_or_else(|| HarnessError::UnknownCampaign(name.to_string()))?;
        factory(params)
    }
}

/// Three standard errors of a binomial proportion `p` over `n` draws.
pub fn three_sigma(p: f64, n: usize) -> f64 {
    3.0 * (p * (1.0 - p) / n as f64).sqrt()
}
