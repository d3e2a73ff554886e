use serde::{Deserialize, Serialize};

use super::{parse_params, Campaign, CampaignContext, CampaignOutcome, HarnessError};
use crate::bounds::{bound_map, supervised_ceiling, ProblemSpec};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LimitCurve {
    pub gamma0: f64,
    pub n_grid: Vec<u64>,
    /// `B(gamma0, N) / E_D*(N)` for each grid point.
    pub ratios: Vec<f64>,
    pub strictly_decreasing: bool,
    pub bounded_below_by_one: bool,
    pub final_gap: f64,
}

/// Ratio of the one-step pseudo-label bound to the supervised ceiling as `N` grows.
pub fn limit_curve(
    spec: &ProblemSpec,
    gamma0: f64,
    n_grid: &[u64],
) -> Result<LimitCurve, HarnessError> {
    if n_grid.is_empty() || n_grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(HarnessError::InvalidConfig(
            "N grid must be non-empty and strictly increasing".into(),
        ));
    }
    let ratios = n_grid
        .iter()
        .map(|&n| Ok(bound_map(spec, n, gamma0)? / supervised_ceiling(spec, n)?))
        .collect::<Result<Vec<f64>, HarnessError>>()?;
    Ok(LimitCurve {
        gamma0,
        n_grid: n_grid.to_vec(),
        strictly_decreasing: ratios.windows(2).all(|w| w[1] < w[0]),
        bounded_below_by_one: ratios.iter().all(|&r| r >= 1.0 - 1e-12),
        final_gap: (ratios.last().unwrap() - 1.0).abs(),
        ratios,
    })
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct Params {
    gamma0: f64,
    n_grid: Vec<u64>,
    /// When set, the last ratio must lie within this distance of 1.
    tolerance: Option<f64>,
}

struct LimitCampaign(Params);

pub(super) fn factory(table: toml::Table) -> Result<Box<dyn Campaign>, HarnessError> {
    Ok(Box::new(LimitCampaign(parse_params("limit", table)?)))
}

impl Campaign for LimitCampaign {
    fn name(&self) -> &'static str {
        "limit"
    }

    fn run(&self, ctx: &CampaignContext) -> Result<CampaignOutcome, HarnessError> {
        let c = limit_curve(&ctx.spec, self.0.gamma0, &self.0.n_grid)?;
        let shape_ok = if self.0.gamma0 > 0.0 && ctx.spec.epsilon() > 0.0 {
            c.strictly_decreasing
        } else {
            c.ratios.windows(2).all(|w| w[1] <= w[0] + 1e-12)
        };
        let pass =
            shape_ok && c.bounded_below_by_one && self.0.tolerance.is_none_or(|t| c.final_gap <= t);
        let mut table = String::from("N                 B/E_D*\n");
        for (n, r) in c.n_grid.iter().zip(&c.ratios) {
            table.push_str(&format!("{n:<17} {r:.9}\n"));
        }
        table.push_str(&format!(
            "strictly_decreasing={} final_gap={:.3e} pass={pass}\n",
            c.strictly_decreasing, c.final_gap
        ));
        let report = serde_json::json!({ "tolerance": self.0.tolerance, "pass": pass, "curve": c });
        Ok(CampaignOutcome::new("limit", pass, &report, table))
    }
}
