use std::io::{self, Write};

use super::{
    check_dim, check_train, join_floats, parse_floats, LearnError, Learner, Model, ModelError,
    ModelParams,
};
use crate::datagen::{DataDistribution, Dataset};
use crate::seed::splitmix64;

/// Learner whose output ignores its training labels: it predicts the
/// distribution's Bayes class, flipped to a uniformly chosen wrong class with
/// probability `epsilon`. Flips are a deterministic hash of the input point and
/// the perturbation seed, so the model is a fixed function of the features.
#[derive(Debug, Clone)]
pub struct OracleLearner {
    distribution: DataDistribution,
    epsilon: f64,
    perturbation_seed: u64,
}

impl OracleLearner {
    pub fn new(distribution: DataDistribution, epsilon: f64, perturbation_seed: u64) -> Self {
        Self {
            distribution,
            epsilon,
            perturbation_seed,
        }
    }
}

impl Learner for OracleLearner {
    fn name(&self) -> &'static str {
        "oracle"
    }

    fn fit(&self, train: &Dataset) -> Result<Box<dyn Model>, LearnError> {
        check_train(train)?;
        if train.dim != self.distribution.dim() {
            return Err(ModelError::DimensionMismatch {
                expected: self.distribution.dim(),
                found: train.dim,
            }
            .into());
        }
        Ok(Box::new(OracleModel::new(
            self.distribution.clone(),
            self.epsilon,
            self.perturbation_seed,
        )?))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleModel {
    distribution: DataDistribution,
    epsilon: f64,
    perturbation_seed: u64,
}

impl OracleModel {
    pub fn new(
        distribution: DataDistribution,
        epsilon: f64,
        perturbation_seed: u64,
    ) -> Result<Self, ModelError> {
        if !(0.0..1.0).contains(&epsilon) {
            return Err(ModelError::Invalid(format!(
                "oracle epsilon {epsilon} outside [0,1)"
            )));
        }
        Ok(Self {
            distribution,
            epsilon,
            perturbation_seed,
        })
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub(super) fn load(p: &ModelParams) -> Result<Box<dyn Model>, LearnError> {
        let epsilon: f64 = p.scalar("epsilon")?;
        let perturbation_seed: u64 = p.scalar("perturbation_seed")?;
        let spread: f64 = p.scalar("spread")?;
        let priors = parse_floats(p.one("priors")?, p.k)?;
        let centers = p
            .indexed_rows("center", p.k)?
            .iter()
            .map(|row| parse_floats(row, p.dim))
            .collect::<Result<Vec<_>, _>>()?;
        let dist = DataDistribution::new(centers, spread, priors)
            .map_err(|e| LearnError::Format(e.to_string()))?;
        Ok(Box::new(OracleModel::new(
            dist,
            epsilon,
            perturbation_seed,
        )?))
    }
}

fn point_hash(seed: u64, features: &[f64]) -> u64 {
    features
        .iter()
        .fold(splitmix64(seed), |h, v| splitmix64(h ^ v.to_bits()))
}

impl Model for OracleModel {
    fn kind(&self) -> &'static str {
        "oracle"
    }

    fn k(&self) -> usize {
        self.distribution.k()
    }

    fn dim(&self) -> usize {
        self.distribution.dim()
    }

    fn predict(&self, features: &[f64]) -> Result<usize, ModelError> {
        check_dim(self.dim(), features)?;
        let truth = self.distribution.bayes_class(features);
        if self.epsilon == 0.0 {
            return Ok(truth);
        }
        let h = point_hash(self.perturbation_seed, features);
        let u = (h >> 11) as f64 * (1.0 / (1u64 << 53) as f64);
        if u >= self.epsilon {
            return Ok(truth);
        }
        let k = self.k() as u64;
        let pick = (splitmix64(h) % (k - 1)) as usize;
        Ok(if pick >= truth { pick + 1 } else { pick })
    }

    fn write_params(&self, out: &mut dyn Write) -> io::Result<()> {
        writeln!(out, "epsilon {}", self.epsilon)?;
        writeln!(out, "perturbation_seed {}", self.perturbation_seed)?;
        writeln!(out, "spread {}", self.distribution.spread())?;
        writeln!(out, "priors {}", join_floats(self.distribution.priors()))?;
        for (i, c) in self.distribution.centers().iter().enumerate() {
            writeln!(out, "center {i} {}", join_floats(c))?;
        }
        Ok(())
    }
}
