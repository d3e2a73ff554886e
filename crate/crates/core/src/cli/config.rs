//! The run configuration file.
//!
//! A single TOML document. Every table rejects unknown keys, and every value
//! is validated by the module that owns it before any work starts.

use std::fs;
use std::io::BufReader;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::bounds::{ConvergenceSpec, ProblemSpec};
use crate::datagen::DataDistribution;
use crate::engine::{EngineConfig, InitialModel, MPolicy};
use crate::learners::{load_model, ConstantModel, LearnerConfig, Model, OracleModel};
use crate::seed::{self, stream};

use super::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(
        default,
        serialize_with = "serialize_seed",
        deserialize_with = "deserialize_seed"
    )]
    pub seed: u64,
    pub problem: ProblemSpec,
    pub distribution: Option<DistributionConfig>,
    pub learner: Option<LearnerConfig>,
    pub engine: Option<EngineSection>,
    pub convergence: Option<ConvergenceSpec>,
    /// `name` selects the campaign; the remaining keys are its parameters.
    pub campaign: Option<toml::Table>,
    #[serde(default)]
    pub output: OutputSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "preset", rename_all = "snake_case", deny_unknown_fields)]
pub enum DistributionConfig {
    /// `k` centers at `±separation` along the first `ceil(k/2)` axes, equal priors.
    AxisAligned {
        dim: usize,
        separation: f64,
        spread: f64,
    },
    Explicit {
        centers: Vec<Vec<f64>>,
        spread: f64,
        priors: Vec<f64>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Algorithm {
    One,
    Two,
}

impl Algorithm {
    fn from_number(n: u8) -> Option<Self> {
        match n {
            1 => Some(Algorithm::One),
            2 => Some(Algorithm::Two),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EngineSection {
    pub unlabeled_count: usize,
    pub test_count: usize,
    pub iterations: usize,
    #[serde(
        serialize_with = "serialize_algorithm",
        deserialize_with = "deserialize_algorithm"
    )]
    pub algorithm: Algorithm,
    #[serde(default = "default_m_policy")]
    pub m_policy: MPolicy,
    pub initial_model: InitialModelConfig,
}

fn default_m_policy() -> MPolicy {
    MPolicy::MaxAllowed
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialModelConfig {
    /// Oracle model with flip rate `epsilon`; the perturbation seed defaults
    /// to one derived from the run seed.
    Oracle {
        epsilon: f64,
        perturbation_seed: Option<u64>,
    },
    /// Fit the configured learner on `labeled` clean examples.
    Bootstrap {
        labeled: usize,
    },
    Constant {
        class: usize,
    },
    File {
        path: PathBuf,
    },
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    pub trajectory: Option<PathBuf>,
    pub model: Option<PathBuf>,
    pub report: Option<PathBuf>,
}

fn serialize_seed<S: Serializer>(seed: &u64, s: S) -> Result<S::Ok, S::Error> {
    match i64::try_from(*seed) {
        Ok(v) => s.serialize_i64(v),
        Err(_) => s.serialize_str(&seed.to_string()),
    }
}

fn deserialize_seed<'de, D: Deserializer<'de>>(d: D) -> Result<u64, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Raw {
        Int(i64),
        Text(String),
    }
    match Raw::deserialize(d)? {
        Raw::Int(v) => u64::try_from(v)
            .map_err(|_| serde::de::Error::custom(format!("seed must be non-negative, got {v}"))),
        Raw::Text(t) => t.parse::<u64>().map_err(|_| {
            serde::de::Error::custom(format!("seed must be a 64-bit unsigned integer, got `{t}`"))
        }),
    }
}

fn serialize_algorithm<S: Serializer>(a: &Algorithm, s: S) -> Result<S::Ok, S::Error> {
    s.serialize_i64(match a {
        Algorithm::One => 1,
        Algorithm::Two => 2,
    })
}

fn deserialize_algorithm<'de, D: Deserializer<'de>>(d: D) -> Result<Algorithm, D::Error> {
    let n = i64::deserialize(d)?;
    u8::try_from(n)
        .ok()
        .and_then(Algorithm::from_number)
        .ok_or_else(|| serde::de::Error::custom(format!("algorithm must be 1 or 2, got {n}")))
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    /// Canonical TOML rendering, used to echo the resolved config into outputs.
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn distribution(&self) -> Result<DataDistribution, CliError> {
        let d = self
            .distribution
            .as_ref()
            .ok_or_else(|| CliError::Config("missing [distribution] section".into()))?;
        let dist = match d {
            DistributionConfig::AxisAligned {
                dim,
                separation,
                spread,
            } => DataDistribution::axis_aligned(self.problem.k(), *dim, *separation, *spread),
            DistributionConfig::Explicit {
                centers,
                spread,
                priors,
            } => DataDistribution::new(centers.clone(), *spread, priors.clone()),
        }
        .map_err(|e| CliError::Config(format!("distribution: {e}")))?;
        if dist.k() != self.problem.k() {
            return Err(CliError::Config(format!(
                "distribution has {} classes but problem.k = {}",
                dist.k(),
                self.problem.k()
            )));
        }
        Ok(dist)
    }

    pub fn learner(&self) -> Result<LearnerConfig, CliError> {
        let l = self
            .learner
            .clone()
            .ok_or_else(|| CliError::Config("missing [learner] section".into()))?;
        l.validate()
            .map_err(|e| CliError::Config(format!("learner: {e}")))?;
        Ok(l)
    }

    pub fn engine_section(&self) -> Result<&EngineSection, CliError> {
        self.engine
            .as_ref()
            .ok_or_else(|| CliError::Config("missing [engine] section".into()))
    }

    /// Resolves the `[engine]` table into a validated engine configuration.
    pub fn engine(&self) -> Result<EngineConfig, CliError> {
        let e = self.engine_section()?;
        let distribution = self.distribution()?;
        let learner = self.learner()?;
        let k = self.problem.k();
        let initial_model = match &e.initial_model {
            InitialModelConfig::Oracle {
                epsilon,
                perturbation_seed,
            } => {
                let s =
                    perturbation_seed.unwrap_or_else(|| seed::derive(self.seed, stream::INITIAL));
                let m = OracleModel::new(distribution.clone(), *epsilon, s)
                    .map_err(|e| CliError::Config(format!("initial_model: {e}")))?;
                InitialModel::Given(Arc::new(m))
            }
            InitialModelConfig::Bootstrap { labeled } => {
                InitialModel::Bootstrap { labeled: *labeled }
            }
            InitialModelConfig::Constant { class } => {
                let m = ConstantModel::new(k, distribution.dim(), *class)
                    .map_err(|e| CliError::Config(format!("initial_model: {e}")))?;
                InitialModel::Given(Arc::new(m))
            }
            InitialModelConfig::File { path } => {
                let f = fs::File::open(path)
                    .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
                let m: Box<dyn Model> = load_model(BufReader::new(f))
                    .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
                InitialModel::Given(Arc::from(m))
            }
        };
        let cfg = EngineConfig {
            spec: self.problem,
            learner,
            distribution,
            unlabeled_count: e.unlabeled_count,
            test_count: e.test_count,
            iterations: e.iterations,
            m_policy: e.m_policy,
            initial_model,
            seed: self.seed,
        };
        cfg.validate()
            .map_err(|e| CliError::Config(e.to_string()))?;
        Ok(cfg)
    }

    /// The campaign name and its parameter table.
    pub fn campaign(&self) -> Result<(String, toml::Table), CliError> {
        let mut table = self
            .campaign
            .clone()
            .ok_or_else(|| CliError::Config("missing [campaign] section".into()))?;
        match table.remove("name") {
            Some(toml::Value::String(name)) => Ok((name, table)),
            Some(other) => Err(CliError::Config(format!(
                "campaign.name must be a string, got {other}"
            ))),
            None => Err(CliError::Config("campaign.name is required".into())),
        }
    }
}
