use serde::{Deserialize, Serialize};

use super::{parse_params, Campaign, CampaignContext, CampaignOutcome, HarnessError};
use crate::datagen::{self, DataDistribution, Provenance, RiskEstimate};
use crate::learners::{build_learner, empirical_risk, fit_seed, LearnError, LearnerConfig};
use crate::seed::{self, stream};

/// One grid cell: training on `clean_count` clean plus `random_count`
/// randomly-labeled examples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditCell {
    pub ratio: f64,
    pub clean_count: usize,
    pub random_count: usize,
    /// Set when the randomized subset is empty and the cell was not evaluated.
    pub skipped: bool,
    pub e_clean: Option<RiskEstimate>,
    pub e_random: Option<RiskEstimate>,
    /// Smallest epsilon for which both fit inequalities hold at 3 sigma.
    pub epsilon_required: Option<f64>,
    /// Training error on the randomized examples whose label is wrong.
    pub mislabeled_train: Option<RiskEstimate>,
    /// Error on a fresh, fully mislabeled sample.
    pub mislabeled_population: Option<RiskEstimate>,
    /// `mislabeled_train <= mislabeled_population + 3 sigma`.
    pub overfit_direction_holds: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrontierPoint {
    pub delta_tilde: f64,
    pub epsilon: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditReport {
    pub k: usize,
    pub grid: Vec<f64>,
    pub cells: Vec<AuditCell>,
    /// For each evaluated ratio, the smallest epsilon that covers every cell
    /// at or below it.
    pub frontier: Vec<FrontierPoint>,
    pub max_delta_tilde: Option<f64>,
    pub min_epsilon: Option<f64>,
}

impl AuditReport {
    /// Whether every evaluated cell satisfies both inequalities at `epsilon`.
    pub fn holds_at(&self, epsilon: f64) -> bool {
        self.min_epsilon.is_some_and(|e| e <= epsilon)
    }
}

fn combined_se(a: &RiskEstimate, b: &RiskEstimate) -> f64 {
    (a.std_error * a.std_error + b.std_error * b.std_error).sqrt()
}

pub fn assumption_audit(
    learner: &LearnerConfig,
    dist: &DataDistribution,
    ratio_grid: &[f64],
    clean_count: usize,
    seed: u64,
) -> Result<AuditReport, HarnessError> {
    if ratio_grid.is_empty() {
        return Err(HarnessError::InvalidConfig("audit grid is empty".into()));
    }
    if ratio_grid.iter().any(|r| !(0.0..1.0).contains(r)) {
        return Err(HarnessError::InvalidConfig(
            "audit ratios must lie in [0,1)".into(),
        ));
    }
    if ratio_grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(HarnessError::InvalidConfig(
            "audit ratios must be strictly increasing".into(),
        ));
    }
    if clean_count < 1000 {
        return Err(HarnessError::InvalidConfig(format!(
            "audit subset size must be at least 1000, got {clean_count}"
        )));
    }
    let k = dist.k();
    let chance = 1.0 - 1.0 / k as f64;
    let mut cells = Vec::with_capacity(ratio_grid.len());

    for (j, &ratio) in ratio_grid.iter().enumerate() {
        let random_count = (ratio * clean_count as f64).floor() as usize;
        let cell_seed = seed::derive(seed::derive(seed, stream::TRIAL), j as u64);
        if random_count == 0 {
            cells.push(AuditCell {
                ratio,
                clean_count,
                random_count,
                skipped: true,
                e_clean: None,
                e_random: None,
                epsilon_required: None,
                mislabeled_train: None,
                mislabeled_population: None,
                overfit_direction_holds: None,
            });
            continue;
        }
        let data = datagen::sample(
            dist,
            clean_count + random_count,
            seed::derive(cell_seed, stream::CLEAN),
        )?;
        let mixed = datagen::randomize_labels(
            &data,
            random_count,
            k,
            seed::derive(cell_seed, stream::RANDOMIZE),
        )?;
        let cfg = learner.clone().with_seed(fit_seed(cell_seed, 0));
        let model = build_learner(&cfg, dist)?.fit(&mixed)?;
        let e_clean = empirical_risk(model.as_ref(), &mixed, |e| {
            e.provenance == Provenance::Clean
        })?;
        let e_random = empirical_risk(model.as_ref(), &mixed, |e| {
            e.provenance == Provenance::Randomized
        })?;
        let epsilon_required = [
            e_clean.estimate - 3.0 * e_clean.std_error,
            chance - e_random.estimate - 3.0 * e_random.std_error,
            0.0,
        ]
        .into_iter()
        .fold(f64::NEG_INFINITY, f64::max);

        let mislabeled_train = match empirical_risk(model.as_ref(), &mixed, |e| {
            e.provenance == Provenance::Randomized && e.label != e.true_label
        }) {
            Ok(r) => Some(r),
            Err(LearnError::EmptySubset) => None,
            Err(e) => return Err(e.into()),
        };
        let fresh = datagen::sample(
            dist,
            clean_count,
            seed::derive(cell_seed, stream::POPULATION),
        )?;
        let fresh = datagen::mislabel(
            &fresh,
            clean_count,
            k,
            seed::derive(cell_seed, stream::MISLABEL),
        )?;
        let mislabeled_population = empirical_risk(model.as_ref(), &fresh, |_| true)?;
        let overfit_direction_holds = mislabeled_train.as_ref().map(|t| {
            t.estimate
                <= mislabeled_population.estimate + 3.0 * combined_se(t, &mislabeled_population)
        });

        cells.push(AuditCell {
            ratio,
            clean_count,
            random_count,
            skipped: false,
            e_clean: Some(e_clean),
            e_random: Some(e_random),
            epsilon_required: Some(epsilon_required),
            mislabeled_train,
            mislabeled_population: Some(mislabeled_population),
            overfit_direction_holds,
        });
    }

    let mut frontier = Vec::new();
    let mut running = f64::NEG_INFINITY;
    for cell in &cells {
        if let Some(eps) = cell.epsilon_required {
            running = running.max(eps);
            frontier.push(FrontierPoint {
                delta_tilde: cell.ratio,
                epsilon: running,
            });
        }
    }
    Ok(AuditReport {
        k,
        grid: ratio_grid.to_vec(),
        max_delta_tilde: frontier.last().map(|p| p.delta_tilde),
        min_epsilon: frontier.last().map(|p| p.epsilon),
        cells,
        frontier,
    })
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct Params {
    ratios: Vec<f64>,
    size: usize,
    /// Epsilon the audit must certify; defaults to the problem's epsilon.
    epsilon: Option<f64>,
}

struct AuditCampaign(Params);

pub(super) fn factory(table: toml::Table) -> Result<Box<dyn Campaign>, HarnessError> {
    Ok(Box::new(AuditCampaign(parse_params("audit", table)?)))
}

fn fmt_est(e: &Option<RiskEstimate>) -> String {
    match e {
        Some(e) => format!("{:.4}±{:.4}", e.estimate, e.std_error),
        None => "-".into(),
    }
}

impl Campaign for AuditCampaign {
    fn name(&self) -> &'static str {
        "audit"
    }

    fn run(&self, ctx: &CampaignContext) -> Result<CampaignOutcome, HarnessError> {
        let r = assumption_audit(
            &ctx.learner,
            &ctx.distribution,
            &self.0.ratios,
            self.0.size,
            ctx.seed,
        )?;
        let target = self.0.epsilon.unwrap_or(ctx.spec.epsilon());
        let pass = r.holds_at(target);
        let mut table =
            String::from("ratio     e_clean          e_random         eps_req   overfit_dir\n");
        for c in &r.cells {
            table.push_str(&format!(
                "{:<9} {:<16} {:<16} {:<9} {}\n",
                c.ratio,
                fmt_est(&c.e_clean),
                fmt_est(&c.e_random),
                c.epsilon_required
                    .map(|e| format!("{e:.4}"))
                    .unwrap_or("skipped".into()),
                c.overfit_direction_holds
                    .map(|b| b.to_string())
                    .unwrap_or("-".into()),
            ));
        }
        table.push_str(&format!(
            "frontier: delta_tilde={:?} epsilon={:?}; target epsilon={target} pass={pass}\n",
            r.max_delta_tilde, r.min_epsilon
        ));
        let report = serde_json::json!({ "target_epsilon": target, "pass": pass, "audit": r });
        Ok(CampaignOutcome::new("audit", pass, &report, table))
    }
}
