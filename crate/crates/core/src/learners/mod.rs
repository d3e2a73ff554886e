//! Pluggable learners.
//!
//! A [`Learner`] turns a labeled [`Dataset`] into a boxed [`Model`]. Learners
//! are looked up by name in a [`LearnerRegistry`]; models are written to and
//! read from a plain-text format keyed by a kind tag, dispatched through the
//! same kind of name table.
//!
//! Model file layout:
//!
//! ```text
//! plcert-model 1
//! kind <tag>
//! k <classes>
//! dim <features>
//! <tag-specific lines, each `key value...`>
//! ```
//!
//! Lines starting with `#` are comments.

mod centroid;
mod constant;
mod logistic;
mod oracle;

use std::collections::BTreeMap;
use std::fmt::Debug;
use std::io::{self, BufRead, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::datagen::{DataDistribution, Dataset, LabeledExample, RiskEstimate};
use crate::seed;

pub use centroid::{NearestCentroid, NearestCentroidModel};
pub use constant::ConstantModel;
pub use logistic::{LogisticModel, LogisticRegression};
pub use oracle::{OracleLearner, OracleModel};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("feature dimension mismatch: model expects {expected}, got {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("invalid model: {0}")]
    Invalid(String),
}

#[derive(Debug, Error)]
pub enum LearnError {
    #[error("training set is empty")]
    EmptyTrainingSet,
    #[error("label {label} out of range for {k} classes")]
    LabelOutOfRange { label: usize, k: usize },
    #[error("gradient descent diverged at step {step} (loss = {loss})")]
    Diverged { step: usize, loss: f64 },
    #[error("unknown learner `{0}`")]
    UnknownLearner(String),
    #[error("unknown model kind `{0}`")]
    UnknownModelKind(String),
    #[error("invalid learner config: {0}")]
    InvalidConfig(String),
    #[error("empty evaluation subset")]
    EmptySubset,
    #[error("malformed model file: {0}")]
    Format(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// A trained classifier.
pub trait Model: Debug + Send + Sync {
    fn kind(&self) -> &'static str;
    fn k(&self) -> usize;
    fn dim(&self) -> usize;

    /// Deterministic argmax prediction; ties resolve to the lowest class index.
    fn predict(&self, features: &[f64]) -> Result<usize, ModelError>;

    /// Writes the tag-specific parameter lines.
    fn write_params(&self, out: &mut dyn Write) -> io::Result<()>;
}

pub trait Learner: Send + Sync {
    fn name(&self) -> &'static str;
    fn fit(&self, train: &Dataset) -> Result<Box<dyn Model>, LearnError>;
}

fn default_gd_steps() -> usize {
    500
}

fn default_gd_learning_rate() -> f64 {
    0.1
}

fn default_gd_l2() -> f64 {
    1e-4
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LearnerConfig {
    pub kind: String,
    #[serde(default)]
    pub oracle_epsilon: f64,
    #[serde(default = "default_gd_steps")]
    pub gd_steps: usize,
    #[serde(default = "default_gd_learning_rate")]
    pub gd_learning_rate: f64,
    #[serde(default = "default_gd_l2")]
    pub gd_l2: f64,
    #[serde(default)]
    pub seed: u64,
}

impl LearnerConfig {
    pub fn new(kind: &str) -> Self {
        Self {
            kind: kind.to_string(),
            oracle_epsilon: 0.0,
            gd_steps: default_gd_steps(),
            gd_learning_rate: default_gd_learning_rate(),
            gd_l2: default_gd_l2(),
            seed: 0,
        }
    }

    pub fn oracle(epsilon: f64) -> Self {
        Self {
            oracle_epsilon: epsilon,
            ..Self::new("oracle")
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<(), LearnError> {
        if !(0.0..1.0).contains(&self.oracle_epsilon) {
            return Err(LearnError::InvalidConfig(format!(
                "oracle_epsilon must lie in [0,1), got {}",
                self.oracle_epsilon
            )));
        }
        if self.gd_steps == 0 {
            return Err(LearnError::InvalidConfig(
                "gd_steps must be positive".into(),
            ));
        }
        if !(self.gd_learning_rate.is_finite() && self.gd_learning_rate > 0.0) {
            return Err(LearnError::InvalidConfig(
                "gd_learning_rate must be positive".into(),
            ));
        }
        if !(self.gd_l2.is_finite() && self.gd_l2 > 0.0) {
            return Err(LearnError::InvalidConfig("gd_l2 must be positive".into()));
        }
        Ok(())
    }
}

/// What a learner factory may consult besides its config.
pub struct LearnerContext<'a> {
    pub distribution: &'a DataDistribution,
}

pub type LearnerFactory =
    fn(&LearnerConfig, &LearnerContext<'_>) -> Result<Box<dyn Learner>, LearnError>;

pub struct LearnerRegistry {
    entries: Vec<(&'static str, LearnerFactory)>,
}

impl LearnerRegistry {
    pub fn empty() -> Self {
        Self {
            entries: Vec::new(),
        }
    }

    pub fn builtin() -> Self {
        let mut r = Self::empty();
        r.register("oracle", |cfg, ctx| {
            Ok(Box::new(OracleLearner::new(
                ctx.distribution.clone(),
                cfg.oracle_epsilon,
                cfg.seed,
            )))
        });
        r.register("nearest_centroid", |_, _| Ok(Box::new(NearestCentroid)));
        r.register("logistic", |cfg, _| {
            Ok(Box::new(LogisticRegression {
                steps: cfg.gd_steps,
                learning_rate: cfg.gd_learning_rate,
                l2: cfg.gd_l2,
            }))
        });
        r
    }

    /// Registers (or replaces) a factory under `name`.
    pub fn register(&mut self, name: &'static str, factory: LearnerFactory) {
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
        config: &LearnerConfig,
        ctx: &LearnerContext<'_>,
    ) -> Result<Box<dyn Learner>, LearnError> {
        config.validate()?;
        let (_, factory) = self
            .entries
            .iter()
            .find(|(n, _)| *n == config.kind)
            .ok_or_else(|| LearnError::UnknownLearner(config.kind.clone()))?;
        factory(config, ctx)
    }
}

/// Shorthand for building from the builtin registry.
pub fn build_learner(
    config: &LearnerConfig,
    distribution: &DataDistribution,
) -> Result<Box<dyn Learner>, LearnError> {
    LearnerRegistry::builtin().build(config, &LearnerContext { distribution })
}

pub(crate) fn check_train(train: &Dataset) -> Result<(), LearnError> {
    if train.is_empty() {
        return Err(LearnError::EmptyTrainingSet);
    }
    if let Some(e) = train.examples.iter().find(|e| e.label >= train.k) {
        return Err(LearnError::LabelOutOfRange {
            label: e.label,
            k: train.k,
        });
    }
    Ok(())
}

pub(crate) fn check_dim(expected: usize, features: &[f64]) -> Result<(), ModelError> {
    if features.len() != expected {
        return Err(ModelError::DimensionMismatch {
            expected,
            found: features.len(),
        });
    }
    Ok(())
}

/// Index of the largest score; the first one wins ties.
pub(crate) fn argmax(scores: impl IntoIterator<Item = f64>) -> usize {
    let mut best = 0;
    let mut best_score = f64::NEG_INFINITY;
    for (i, s) in scores.into_iter().enumerate() {
        if s > best_score {
            best = i;
            best_score = s;
        }
    }
    best
}

/// Misclassification counts over the examples accepted by `filter`.
pub fn error_counts(
    model: &dyn Model,
    data: &Dataset,
    filter: impl Fn(&LabeledExample) -> bool,
) -> Result<(usize, usize), LearnError> {
    let mut wrong = 0;
    let mut total = 0;
    for e in data.examples.iter().filter(|e| filter(e)) {
        total += 1;
        if model.predict(&e.features)? != e.label {
            wrong += 1;
        }
    }
    Ok((wrong, total))
}

/// Fraction of filtered examples whose prediction differs from their label.
pub fn empirical_error(
    model: &dyn Model,
    data: &Dataset,
    filter: impl Fn(&LabeledExample) -> bool,
) -> Result<f64, LearnError> {
    let (wrong, total) = error_counts(model, data, filter)?;
    if total == 0 {
        return Err(LearnError::EmptySubset);
    }
    Ok(wrong as f64 / total as f64)
}

/// [`empirical_error`] with its binomial standard error.
pub fn empirical_risk(
    model: &dyn Model,
    data: &Dataset,
    filter: impl Fn(&LabeledExample) -> bool,
) -> Result<RiskEstimate, LearnError> {
    let (wrong, total) = error_counts(model, data, filter)?;
    if total == 0 {
        return Err(LearnError::EmptySubset);
    }
    Ok(RiskEstimate::from_counts(wrong, total))
}

/// Risk against ground truth on a fresh sample of `samples` points.
pub fn population_risk(
    model: &dyn Model,
    dist: &DataDistribution,
    samples: usize,
    seed: u64,
) -> Result<RiskEstimate, LearnError> {
    let fresh = crate::datagen::sample(dist, samples, seed)
        .map_err(|e| LearnError::Format(e.to_string()))?;
    let mut wrong = 0;
    for e in &fresh.examples {
        if model.predict(&e.features)? != e.true_label {
            wrong += 1;
        }
    }
    Ok(RiskEstimate::from_counts(wrong, samples))
}

pub fn save_model(model: &dyn Model, out: &mut dyn Write) -> io::Result<()> {
    writeln!(out, "plcert-model 1")?;
    writeln!(out, "kind {}", model.kind())?;
    writeln!(out, "k {}", model.k())?;
    writeln!(out, "dim {}", model.dim())?;
    model.write_params(out)
}

/// Parsed `key value...` lines of a model file, in file order.
#[derive(Debug, Default)]
pub struct ModelParams {
    pub k: usize,
    pub dim: usize,
    lines: BTreeMap<String, Vec<Vec<String>>>,
}

impl ModelParams {
    /// All value lists recorded under `key`.
    pub fn all(&self, key: &str) -> &[Vec<String>] {
        self.lines.get(key).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn one(&self, key: &str) -> Result<&[String], LearnError> {
        match self.all(key) {
            [v] => Ok(v),
            _ => Err(LearnError::Format(format!(
                "expected exactly one `{key}` line"
            ))),
        }
    }

    pub fn scalar<T: std::str::FromStr>(&self, key: &str) -> Result<T, LearnError> {
        match self.one(key)? {
            [v] => parse_value(v),
            _ => Err(LearnError::Format(format!("`{key}` takes one value"))),
        }
    }

    /// Rows of the form `key <index> v0 v1 ...`, returned in index order.
    pub fn indexed_rows(&self, key: &str, count: usize) -> Result<Vec<Vec<String>>, LearnError> {
        let mut rows = vec![None; count];
        for line in self.all(key) {
            let (idx, rest) = line
                .split_first()
                .ok_or_else(|| LearnError::Format(format!("`{key}` line needs an index")))?;
            let idx: usize = parse_value(idx)?;
            let slot = rows
                .get_mut(idx)
                .ok_or_else(|| LearnError::Format(format!("`{key}` index {idx} out of range")))?;
            *slot = Some(rest.to_vec());
        }
        rows.into_iter()
            .enumerate()
            .map(|(i, r)| r.ok_or_else(|| LearnError::Format(format!("missing `{key} {i}` line"))))
            .collect()
    }
}

pub(crate) fn parse_value<T: std::str::FromStr>(s: &str) -> Result<T, LearnError> {
    s.parse()
        .map_err(|_| LearnError::Format(format!("cannot parse `{s}`")))
}

pub(crate) fn parse_floats(values: &[String], expected: usize) -> Result<Vec<f64>, LearnError> {
    if values.len() != expected {
        return Err(LearnError::Format(format!(
            "expected {expected} values, found {}",
            values.len()
        )));
    }
    values.iter().map(|v| parse_value::<f64>(v)).collect()
}

pub(crate) fn join_floats(values: &[f64]) -> String {
    values
        .iter()
        .map(f64::to_string)
        .collect::<Vec<_>>()
        .join(" ")
}

pub type ModelLoader = fn(&ModelParams) -> Result<Box<dyn Model>, LearnError>;

fn model_loaders() -> [(&'static str, ModelLoader); 4] {
    [
        ("oracle", OracleModel::load),
        ("nearest_centroid", NearestCentroidModel::load),
        ("logistic", LogisticModel::load),
        ("constant", ConstantModel::load),
    ]
}

pub fn load_model<R: BufRead>(input: R) -> Result<Box<dyn Model>, LearnError> {
    let mut lines = Vec::new();
    for line in input.lines() {
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        lines.push(trimmed.to_string());
    }
    let mut iter = lines.into_iter();
    if iter.next().as_deref() != Some("plcert-model 1") {
        return Err(LearnError::Format("missing `plcert-model 1` header".into()));
    }
    let mut params = ModelParams::default();
    let mut kind = None;
    for line in iter {
        let mut parts = line.split_whitespace().map(String::from);
        let key = parts.next().unwrap_or_default();
        let values: Vec<String> = parts.collect();
        match key.as_str() {
            "kind" => kind = values.first().cloned(),
            _ => params.lines.entry(key).or_default().push(values),
        }
    }
    params.k = params.scalar("k")?;
    params.dim = params.scalar("dim")?;
    if params.k < 2 || params.dim == 0 {
        return Err(LearnError::Format("k must be >= 2 and dim >= 1".into()));
    }
    let kind = kind.ok_or_else(|| LearnError::Format("missing `kind` line".into()))?;
    let (_, loader) = model_loaders()
        .into_iter()
        .find(|(tag, _)| *tag == kind)
        .ok_or(LearnError::UnknownModelKind(kind))?;
    loader(&params)
}

pub fn model_to_string(model: &dyn Model) -> String {
    let mut buf = Vec::new();
    save_model(model, &mut buf).expect("writing to a Vec cannot fail");
    String::from_utf8(buf).expect("model text is UTF-8")
}

/// Seed for the `i`-th fit of a run seeded with `run_seed`.
pub fn fit_seed(run_seed: u64, iteration: u64) -> u64 {
    seed::derive(seed::derive(run_seed, seed::stream::LEARNER), iteration)
}
