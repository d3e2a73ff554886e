use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{
    parse_params, three_sigma, Campaign, CampaignContext, CampaignOutcome, HarnessError,
    TRUE_RISK_SAMPLES,
};
use crate::bounds::{optimal_split, ratt_bound_relaxed, EmpiricalErrors, ProblemSpec};
use crate::datagen::{self, DataDistribution, Provenance};
use crate::learners::{build_learner, empirical_error, fit_seed, population_risk, LearnerConfig};
use crate::seed::{self, stream};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageReport {
    pub trials: usize,
    pub violations: usize,
    pub coverage: f64,
    pub target: f64,
    /// `target - 3 sqrt(delta (1-delta) / trials)`.
    pub threshold: f64,
    pub pass: bool,
    pub unlabeled_count: usize,
    pub m: u64,
    pub n: u64,
    pub mean_bound: f64,
    pub vacuous_trials: usize,
    pub mean_true_risk: f64,
    pub max_true_risk: f64,
}

pub fn coverage_pass_threshold(delta: f64, trials: usize) -> f64 {
    1.0 - delta - three_sigma(delta, trials)
}

struct TrialOutcome {
    bound: f64,
    true_risk: f64,
}

/// Repeats: draw `N` examples, randomize the optimal-split share of them, fit,
/// evaluate the relaxed bound at the measured errors, and compare against the
/// risk on a fresh sample of `true_risk_samples` points.
#[allow(clippy::too_many_arguments)]
pub fn coverage_experiment(
    spec: &ProblemSpec,
    learner: &LearnerConfig,
    dist: &DataDistribution,
    unlabeled_count: usize,
    trials: usize,
    seed: u64,
    true_risk_samples: usize,
) -> Result<CoverageReport, HarnessError> {
    if trials == 0 {
        return Err(HarnessError::InvalidConfig(
            "trials must be positive".into(),
        ));
    }
    if dist.k() != spec.k() {
        return Err(HarnessError::InvalidConfig(
            "distribution k disagrees with problem k".into(),
        ));
    }
    let split = optimal_split(unlabeled_count as u64, spec.delta_tilde())?;
    learner.validate()?;

    let outcomes = (0..trials)
        .into_par_iter()
        .map(|t| -> Result<TrialOutcome, HarnessError> {
            let trial_seed = seed::derive(seed::derive(seed, stream::TRIAL), t as u64);
            let clean = datagen::sample(
                dist,
                unlabeled_count,
                seed::derive(trial_seed, stream::CLEAN),
            )?;
            let mixed = datagen::randomize_labels(
                &clean,
                split.m() as usize,
                spec.k(),
                seed::derive(trial_seed, stream::RANDOMIZE),
            )?;
            let cfg = learner.clone().with_seed(fit_seed(trial_seed, 0));
            let model = build_learner(&cfg, dist)?.fit(&mixed)?;
            let e_clean = empirical_error(model.as_ref(), &mixed, |e| {
                e.provenance == Provenance::Clean
            })?;
            let e_random = empirical_error(model.as_ref(), &mixed, |e| {
                e.provenance == Provenance::Randomized
            })?;
            let bound =
                ratt_bound_relaxed(spec, &split, &EmpiricalErrors::new(e_clean, e_random)?)?;
            let risk = population_risk(
                model.as_ref(),
                dist,
                true_risk_samples,
                seed::derive(trial_seed, stream::POPULATION),
            )?;
            Ok(TrialOutcome {
                bound: bound.total,
                true_risk: risk.estimate,
            })
        })
        .collect::<Result<Vec<_>, _>>()?;

    let violations = outcomes.iter().filter(|o| o.true_risk > o.bound).count();
    let coverage = 1.0 - violations as f64 / trials as f64;
    let threshold = coverage_pass_threshold(spec.delta(), trials);
    Ok(CoverageReport {
        trials,
        violations,
        coverage,
        target: 1.0 - spec.delta(),
        threshold,
        pass: coverage >= threshold,
        unlabeled_count,
        m: split.m(),
        n: split.n(),
        mean_bound: outcomes.iter().map(|o| o.bound).sum::<f64>() / trials as f64,
        vacuous_trials: outcomes.iter().filter(|o| o.bound > 1.0).count(),
        mean_true_risk: outcomes.iter().map(|o| o.true_risk).sum::<f64>() / trials as f64,
        max_true_risk: outcomes.iter().map(|o| o.true_risk).fold(0.0, f64::max),
    })
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct Params {
    unlabeled_count: usize,
    trials: usize,
    #[serde(default = "default_true_risk_samples")]
    true_risk_samples: usize,
}

fn default_true_risk_samples() -> usize {
    TRUE_RISK_SAMPLES
}

struct CoverageCampaign(Params);

pub(super) fn factory(table: toml::Table) -> Result<Box<dyn Campaign>, HarnessError> {
    let p: Params = parse_params("coverage", table)?;
    if p.trials < 100 {
        return Err(HarnessError::InvalidConfig(format!(
            "coverage needs at least 100 trials, got {}",
            p.trials
        )));
    }
    Ok(Box::new(CoverageCampaign(p)))
}

impl Campaign for CoverageCampaign {
    fn name(&self) -> &'static str {
        "coverage"
    }

    fn run(&self, ctx: &CampaignContext) -> Result<CampaignOutcome, HarnessError> {
        let r = ctx.pool.install(|| {
            coverage_experiment(
                &ctx.spec,
                &ctx.learner,
                &ctx.distribution,
                self.0.unlabeled_count,
                self.0.trials,
                ctx.seed,
                self.0.true_risk_samples,
            )
        })?;
        let table = format!(
            "coverage  trials={} violations={} coverage={:.4} threshold={:.4} pass={}\n\
             split     m={} n={} mean_bound={:.4} vacuous={} mean_true_risk={:.4} max_true_risk={:.4}\n",
            r.trials,
            r.violations,
            r.coverage,
            r.threshold,
            r.pass,
            r.m,
            r.n,
            r.mean_bound,
            r.vacuous_trials,
            r.mean_true_risk,
            r.max_true_risk
        );
        Ok(CampaignOutcome::new("coverage", r.pass, &r, table))
    }
}
