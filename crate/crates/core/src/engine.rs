//! Pseudo-label self-training loops.
//!
//! [`run_algorithm1`] is the plain loop: pseudo-label the unlabeled pool with
//! the current model, retrain from scratch, repeat. [`run_algorithm2`] adds the
//! certification step: before retraining, a subset of the pseudo-labeled pool
//! is relabeled uniformly at random so the relaxed mixture bound can be
//! evaluated on the retrained model. Each iteration estimates the current
//! model's risk on a fresh test sample and halts when no randomized subset can
//! satisfy the noise ceiling.

use std::io::Write;
use std::sync::Arc;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bounds::{
    self, bound_map, max_randomized_count, mixture_counts_hold, ratt_bound_relaxed, BoundsError,
    EmpiricalErrors, ProblemSpec, SplitSpec,
};
use crate::datagen::{
    self, apply_pseudo_labels, randomize_indices, DataDistribution, DataError, Dataset, Provenance,
};
use crate::learners::{
    self, build_learner, empirical_risk, fit_seed, LearnError, LearnerConfig, Model,
};
use crate::seed::{self, stream};

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("invalid engine config: {0}")]
    InvalidConfig(String),
    #[error("iteration {iteration}: {source}")]
    Fit {
        iteration: usize,
        #[source]
        source: LearnError,
    },
    #[error(transparent)]
    Learn(#[from] LearnError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Bounds(#[from] BoundsError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// How many pseudo-labels to randomize each iteration, before capping at the
/// largest count the noise ceiling allows.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MPolicy {
    MaxAllowed,
    Fixed(u64),
    Fraction(f64),
}

impl MPolicy {
    pub fn resolve(&self, cap: u64) -> u64 {
        match *self {
            MPolicy::MaxAllowed => cap,
            MPolicy::Fixed(m) => m.min(cap),
            MPolicy::Fraction(f) => ((f * cap as f64).floor() as u64).min(cap),
        }
    }

    fn validate(&self) -> Result<(), EngineError> {
        match *self {
            MPolicy::Fixed(0) => Err(EngineError::InvalidConfig(
                "fixed m must be at least 1".into(),
            )),
            MPolicy::Fraction(f) if !(f > 0.0 && f <= 1.0) => Err(EngineError::InvalidConfig(
                format!("m fraction must lie in (0,1], got {f}"),
            )),
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone)]
pub enum InitialModel {
    Given(Arc<dyn Model>),
    /// Fit the configured learner on this many clean labeled examples.
    Bootstrap {
        labeled: usize,
    },
}

#[derive(Debug, Clone)]
pub struct EngineConfig {
    pub spec: ProblemSpec,
    pub learner: LearnerConfig,
    pub distribution: DataDistribution,
    pub unlabeled_count: usize,
    pub test_count: usize,
    pub iterations: usize,
    pub m_policy: MPolicy,
    pub initial_model: InitialModel,
    pub seed: u64,
}

pub const MIN_TEST_COUNT: usize = 1000;

impl EngineConfig {
    pub fn validate(&self) -> Result<(), EngineError> {
        let bad = |m: String| Err(EngineError::InvalidConfig(m));
        if self.unlabeled_count == 0 {
            return bad("unlabeled_count must be at least 1".into());
        }
        if self.iterations == 0 {
            return bad("iterations must be at least 1".into());
        }
        if self.test_count < MIN_TEST_COUNT {
            return bad(format!(
                "test_count must be at least {MIN_TEST_COUNT}, got {}",
                self.test_count
            ));
        }
        if self.spec.k() != self.distribution.k() {
            return bad(format!(
                "problem k={} disagrees with distribution k={}",
                self.spec.k(),
                self.distribution.k()
            ));
        }
        if let InitialModel::Given(m) = &self.initial_model {
            if m.k() != self.spec.k() || m.dim() != self.distribution.dim() {
                return bad("initial model shape disagrees with the distribution".into());
            }
        }
        if let InitialModel::Bootstrap { labeled: 0 } = self.initial_model {
            return bad("bootstrap size must be at least 1".into());
        }
        self.learner.validate()?;
        self.m_policy.validate()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HaltReason {
    Completed,
    InfeasibleGamma,
    MZero,
}

impl std::fmt::Display for HaltReason {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            HaltReason::Completed => "completed",
            HaltReason::InfeasibleGamma => "infeasible_gamma",
            HaltReason::MZero => "m_zero",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRecord {
    pub iteration: usize,
    /// Risk of `f_i` on a fresh test sample.
    pub gamma_hat: f64,
    pub gamma_hat_se: f64,
    pub m_used: u64,
    /// `max_randomized_count(N, gamma_hat, delta_tilde)`; absent for Algorithm 1.
    pub m_cap: Option<u64>,
    /// Non-randomized pseudo-labels that agree with the truth.
    pub pseudo_correct: u64,
    /// Non-randomized pseudo-labels that disagree with the truth.
    pub pseudo_wrong: u64,
    /// Training error of `f_{i+1}` on the pseudo-correct portion.
    pub e_clean: Option<f64>,
    pub e_clean_se: Option<f64>,
    /// Training error of `f_{i+1}` on the randomized portion.
    pub e_random: Option<f64>,
    pub e_random_se: Option<f64>,
    pub bound_empirical: Option<f64>,
    pub bound_predicted: Option<f64>,
    pub feasible: bool,
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    pub algorithm: u8,
    pub records: Vec<TrajectoryRecord>,
    pub initial_model: Arc<dyn Model>,
    pub final_model: Arc<dyn Model>,
    pub halt_reason: HaltReason,
    /// Number of bound evaluations made, each holding with probability `1 - delta`.
    pub bound_applications: usize,
    pub per_application_delta: f64,
}

pub const CSV_HEADER: &str =
    "i,gamma_hat,m_used,e_clean,e_random,bound_empirical,bound_predicted,feasible";

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

impl Trajectory {
    /// Writes one row per record under the fixed header. `preamble` lines are
    /// emitted first, each prefixed with `# `.
    pub fn write_csv<W: Write>(&self, out: &mut W, preamble: &[String]) -> std::io::Result<()> {
        for line in preamble {
            writeln!(out, "# {line}")?;
        }
        writeln!(out, "{CSV_HEADER}")?;
        for r in &self.records {
            writeln!(
                out,
                "{},{},{},{},{},{},{},{}",
                r.iteration,
                r.gamma_hat,
                r.m_used,
                opt(r.e_clean),
                opt(r.e_random),
                opt(r.bound_empirical),
                opt(r.bound_predicted),
                r.feasible
            )?;
        }
        Ok(())
    }

    pub fn gamma_hats(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.gamma_hat).collect()
    }
}

struct Run<'a> {
    config: &'a EngineConfig,
    pool: Dataset,
}

impl<'a> Run<'a> {
    fn new(config: &'a EngineConfig) -> Result<Self, EngineError> {
        config.validate()?;
        let pool = datagen::sample(
            &config.distribution,
            config.unlabeled_count,
            seed::derive(config.seed, stream::UNLABELED),
        )?;
        Ok(Self { config, pool })
    }

    fn initial_model(&self) -> Result<Arc<dyn Model>, EngineError> {
        match &self.config.initial_model {
            InitialModel::Given(m) => Ok(Arc::clone(m)),
            InitialModel::Bootstrap { labeled } => {
                let s = seed::derive(self.config.seed, stream::INITIAL);
                let labeled = datagen::sample(&self.config.distribution, *labeled, s)?;
                let model =
                    self.learner(usize::MAX)?
                        .fit(&labeled)
                        .map_err(|source| EngineError::Fit {
                            iteration: 0,
                            source,
                        })?;
                Ok(Arc::from(model))
            }
        }
    }

    fn learner(&self, iteration: usize) -> Result<Box<dyn learners::Learner>, EngineError> {
        let run_seed = seed::derive(self.config.seed, self.config.learner.seed);
        let cfg = self
            .config
            .learner
            .clone()
            .with_seed(fit_seed(run_seed, iteration as u64));
        Ok(build_learner(&cfg, &self.config.distribution)?)
    }

    fn estimate_gamma(
        &self,
        model: &dyn Model,
        iteration: usize,
    ) -> Result<(f64, f64), EngineError> {
        let s = seed::derive(
            seed::derive(self.config.seed, stream::TEST),
            iteration as u64,
        );
        let test = datagen::sample(&self.config.distribution, self.config.test_count, s)?;
        let r = empirical_risk(model, &test, |_| true)?;
        Ok((r.estimate, r.std_error))
    }

    fn fit(&self, train: &Dataset, iteration: usize) -> Result<Box<dyn Model>, EngineError> {
        self.learner(iteration)?
            .fit(train)
            .map_err(|source| EngineError::Fit { iteration, source })
    }
}

fn subset_risk(
    model: &dyn Model,
    data: &Dataset,
    which: Provenance,
) -> Result<Option<(f64, f64)>, EngineError> {
    match empirical_risk(model, data, |e| e.provenance == which) {
        Ok(r) => Ok(Some((r.estimate, r.std_error))),
        Err(LearnError::EmptySubset) => Ok(None),
        Err(e) => Err(e.into()),
    }
}

/// Largest `m <= target` such that randomizing the first `m` entries of
/// `order` keeps the realized pseudo-label counts within the noise ceiling.
/// The excess `m + wrong(m) - dt * correct(m)` never decreases in `m`, so a
/// downward scan stops at the answer.
fn largest_admissible_m(pool: &Dataset, order: &[usize], target: u64, delta_tilde: f64) -> u64 {
    let total_wrong = pool.count(Provenance::PseudoWrong) as u64;
    let n = pool.len() as u64;
    let mut wrong_in_prefix: Vec<u64> = Vec::with_capacity(target as usize + 1);
    wrong_in_prefix.push(0);
    for &i in order.iter().take(target as usize) {
        let prev = *wrong_in_prefix.last().unwrap();
        wrong_in_prefix
            .push(prev + u64::from(pool.examples[i].provenance == Provenance::PseudoWrong));
    }
    (0..=target)
        .rev()
        .find(|&m| {
            let wrong = total_wrong - wrong_in_prefix[m as usize];
            let correct = n - m - wrong;
            mixture_counts_hold(m, wrong, correct, delta_tilde)
        })
        .unwrap_or(0)
}

/// Plain pseudo-label self-training.
pub fn run_algorithm1(config: &EngineConfig) -> Result<Trajectory, EngineError> {
    let run = Run::new(config)?;
    let initial = run.initial_model()?;
    let mut current = Arc::clone(&initial);
    let mut records = Vec::with_capacity(config.iterations);
    let threshold = config.spec.gamma_threshold();

    for i in 0..config.iterations {
        let (gamma_hat, gamma_hat_se) = run.estimate_gamma(current.as_ref(), i)?;
        let pseudo = apply_pseudo_labels(&run.pool, current.as_ref())?;
        let next: Arc<dyn Model> = Arc::from(run.fit(&pseudo, i)?);
        let clean = subset_risk(next.as_ref(), &pseudo, Provenance::PseudoCorrect)?;
        records.push(TrajectoryRecord {
            iteration: i,
            gamma_hat,
            gamma_hat_se,
            m_used: 0,
            m_cap: None,
            pseudo_correct: pseudo.count(Provenance::PseudoCorrect) as u64,
            pseudo_wrong: pseudo.count(Provenance::PseudoWrong) as u64,
            e_clean: clean.map(|c| c.0),
            e_clean_se: clean.map(|c| c.1),
            e_random: None,
            e_random_se: None,
            bound_empirical: None,
            bound_predicted: None,
            feasible: gamma_hat < threshold,
        });
        current = next;
    }
    Ok(Trajectory {
        algorithm: 1,
        records,
        initial_model: initial,
        final_model: current,
        halt_reason: HaltReason::Completed,
        bound_applications: 0,
        per_application_delta: config.spec.delta(),
    })
}

/// Self-training with a randomized certification subset each iteration.
///
/// The randomized count is `m_policy` capped at
/// `max_randomized_count(N, gamma_hat, delta_tilde)`, then lowered further if
/// needed so the realized pseudo-label counts satisfy the noise ceiling.
pub fn run_algorithm2(config: &EngineConfig) -> Result<Trajectory, EngineError> {
    let run = Run::new(config)?;
    let spec = &config.spec;
    let n_total = config.unlabeled_count as u64;
    let initial = run.initial_model()?;
    let mut current = Arc::clone(&initial);
    let mut records = Vec::with_capacity(config.iterations);
    let mut halt_reason = HaltReason::Completed;

    for i in 0..config.iterations {
        let (gamma_hat, gamma_hat_se) = run.estimate_gamma(current.as_ref(), i)?;
        let cap = match max_randomized_count(n_total, gamma_hat, spec.delta_tilde()) {
            Ok(cap) => cap,
            Err(BoundsError::InfeasibleGamma { .. }) => {
                halt_reason = HaltReason::InfeasibleGamma;
                break;
            }
            Err(e) => return Err(e.into()),
        };
        let pseudo = apply_pseudo_labels(&run.pool, current.as_ref())?;

        let mut order: Vec<usize> = (0..pseudo.len()).collect();
        let mut rng = seed::rng(seed::derive(
            seed::derive(config.seed, stream::PSEUDO_SHUFFLE),
            i as u64,
        ));
        order.shuffle(&mut rng);
        let target = config.m_policy.resolve(cap);
        let m = largest_admissible_m(&pseudo, &order, target, spec.delta_tilde());
        if m == 0 {
            halt_reason = HaltReason::MZero;
            break;
        }
        let mut rng = seed::rng(seed::derive(
            seed::derive(config.seed, stream::RANDOMIZE),
            i as u64,
        ));
        let mixed = randomize_indices(&pseudo, &order[..m as usize], spec.k(), &mut rng)?;

        let next: Arc<dyn Model> = Arc::from(run.fit(&mixed, i)?);
        let clean = subset_risk(next.as_ref(), &mixed, Provenance::PseudoCorrect)?;
        let random = subset_risk(next.as_ref(), &mixed, Provenance::Randomized)?;
        let pseudo_correct = mixed.count(Provenance::PseudoCorrect) as u64;
        let bound_empirical = match (clean, random) {
            (Some(c), Some(r)) => {
                let split = SplitSpec::new(m, pseudo_correct)?;
                let errs = EmpiricalErrors::new(c.0, r.0)?;
                Some(ratt_bound_relaxed(spec, &split, &errs)?.total)
            }
            _ => None,
        };
        records.push(TrajectoryRecord {
            iteration: i,
            gamma_hat,
            gamma_hat_se,
            m_used: m,
            m_cap: Some(cap),
            pseudo_correct,
            pseudo_wrong: mixed.count(Provenance::PseudoWrong) as u64,
            e_clean: clean.map(|c| c.0),
            e_clean_se: clean.map(|c| c.1),
            e_random: random.map(|r| r.0),
            e_random_se: random.map(|r| r.1),
            bound_empirical,
            bound_predicted: Some(bound_map(spec, n_total, gamma_hat)?),
            feasible: true,
        });
        current = next;
    }
    let bound_applications = records
        .iter()
        .filter(|r| r.bound_empirical.is_some())
        .count();
    Ok(Trajectory {
        algorithm: 2,
        records,
        initial_model: initial,
        final_model: current,
        halt_reason,
        bound_applications,
        per_application_delta: spec.delta(),
    })
}

/// Checks the count-level mixture constraint on a record, allowing `slack`
/// examples on the noisy side.
pub fn record_satisfies_mixture(record: &TrajectoryRecord, delta_tilde: f64, slack: u64) -> bool {
    let noisy = record.m_used + record.pseudo_wrong;
    bounds::mixture_counts_hold(
        noisy.saturating_sub(slack),
        0,
        record.pseudo_correct,
        delta_tilde,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::learners::{ConstantModel, OracleModel};

    fn dist() -> DataDistribution {
        DataDistribution::axis_aligned(4, 2, 4.0, 0.4).unwrap()
    }

    fn config(initial: InitialModel, learner: LearnerConfig) -> EngineConfig {
        EngineConfig {
            spec: ProblemSpec::new(4, 0.05, 0.02, 0.25).unwrap(),
            learner,
            distribution: dist(),
            unlabeled_count: 2000,
            test_count: 2000,
            iterations: 3,
            m_policy: MPolicy::MaxAllowed,
            initial_model: initial,
            seed: 17,
        }
    }

    fn oracle(eps: f64) -> InitialModel {
        InitialModel::Given(Arc::new(OracleModel::new(dist(), eps, 99).unwrap()))
    }

    #[test]
    fn policy_resolution() {
        assert_eq!(MPolicy::MaxAllowed.resolve(20), 20);
        assert_eq!(MPolicy::Fixed(5).resolve(20), 5);
        assert_eq!(MPolicy::Fixed(50).resolve(20), 20);
        assert_eq!(MPolicy::Fraction(0.5).resolve(21), 10);
    }

    #[test]
    fn config_validation() {
        let mut c = config(oracle(0.0), LearnerConfig::oracle(0.0));
        c.test_count = 999;
        assert!(c.validate().is_err());
        let mut c = config(oracle(0.0), LearnerConfig::oracle(0.0));
        c.iterations = 0;
        assert!(c.validate().is_err());
        let mut c = config(oracle(0.0), LearnerConfig::oracle(0.0));
        c.m_policy = MPolicy::Fixed(0);
        assert!(c.validate().is_err());
        let c = config(
            InitialModel::Given(Arc::new(ConstantModel::new(3, 2, 0).unwrap())),
            LearnerConfig::oracle(0.0),
        );
        assert!(c.validate().is_err());
    }

    #[test]
    fn algorithm1_perfect_oracle_stays_perfect() {
        let t = run_algorithm1(&config(oracle(0.0), LearnerConfig::oracle(0.0))).unwrap();
        assert_eq!(t.records.len(), 3);
        assert!(t
            .records
            .iter()
            .all(|r| r.gamma_hat == 0.0 && r.bound_empirical.is_none()));
        assert_eq!(t.halt_reason, HaltReason::Completed);
    }

    #[test]
    fn algorithm1_single_iteration() {
        let mut c = config(oracle(0.0), LearnerConfig::oracle(0.0));
        c.iterations = 1;
        assert_eq!(run_algorithm1(&c).unwrap().records.len(), 1);
    }

    #[test]
    fn algorithm1_has_no_gate() {
        let c = config(
            InitialModel::Given(Arc::new(ConstantModel::new(4, 2, 0).unwrap())),
            LearnerConfig {
                gd_steps: 50,
                ..LearnerConfig::new("logistic")
            },
        );
        let t = run_algorithm1(&c).unwrap();
        assert_eq!(t.records.len(), 3);
        assert!(!t.records[0].feasible);
        assert!(t.records[0].gamma_hat > 0.7);
    }

    #[test]
    fn algorithm2_halts_on_infeasible_start() {
        let c = config(
            InitialModel::Given(Arc::new(ConstantModel::new(4, 2, 0).unwrap())),
            LearnerConfig::oracle(0.0),
        );
        let t = run_algorithm2(&c).unwrap();
        assert_eq!(t.halt_reason, HaltReason::InfeasibleGamma);
        assert!(t.records.is_empty());
        assert_eq!(t.bound_applications, 0);
    }

    #[test]
    fn algorithm2_max_allowed_at_zero_risk_matches_optimal_split() {
        let mut c = config(oracle(0.0), LearnerConfig::oracle(0.0));
        c.unlabeled_count = 100;
        c.iterations = 1;
        let t = run_algorithm2(&c).unwrap();
        let r = &t.records[0];
        assert_eq!(r.gamma_hat, 0.0);
        assert_eq!(r.m_used, 20);
        assert_eq!(r.m_cap, Some(20));
    }

    #[test]
    fn algorithm2_records_satisfy_constraints() {
        let c = config(oracle(0.1), LearnerConfig::oracle(0.01));
        let t = run_algorithm2(&c).unwrap();
        assert_eq!(t.halt_reason, HaltReason::Completed);
        for r in &t.records {
            assert!(r.m_used <= r.m_cap.unwrap());
            assert!(record_satisfies_mixture(r, 0.25, 0));
            assert!(r.bound_empirical.unwrap().is_finite());
        }
        assert_eq!(t.bound_applications, 3);
    }

    #[test]
    fn fixed_policy_is_respected() {
        let mut c = config(oracle(0.0), LearnerConfig::oracle(0.0));
        c.m_policy = MPolicy::Fixed(7);
        let t = run_algorithm2(&c).unwrap();
        assert!(t.records.iter().all(|r| r.m_used == 7));
    }

    #[test]
    fn csv_layout() {
        let t = run_algorithm2(&config(oracle(0.05), LearnerConfig::oracle(0.01))).unwrap();
        let mut buf = Vec::new();
        t.write_csv(&mut buf, &["seed=17".into()]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "# seed=17");
        assert_eq!(lines[1], CSV_HEADER);
        assert_eq!(lines.len(), 2 + 3);
    }

    #[test]
    fn admissible_m_scan() {
        let d = dist();
        let data = datagen::sample(&d, 100, 1).unwrap();
        let mut pseudo = data.clone();
        for (i, e) in pseudo.examples.iter_mut().enumerate() {
            e.provenance = if i < 10 {
                Provenance::PseudoWrong
            } else {
                Provenance::PseudoCorrect
            };
        }
        let order: Vec<usize> = (0..100).rev().collect();
        // Randomizing m correct examples: m + 10 <= 0.25 (90 - m) => m <= 10.
        assert_eq!(largest_admissible_m(&pseudo, &order, 50, 0.25), 10);
        let forward: Vec<usize> = (0..100).collect();
        // Wrong examples go first: m <= 10 keeps m + (10-m) = 10 <= 0.25 * 90.
        assert_eq!(largest_admissible_m(&pseudo, &forward, 10, 0.25), 10);
    }
}
