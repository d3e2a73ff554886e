use serde::{Deserialize, Serialize};

use super::{parse_params, Campaign, CampaignContext, CampaignOutcome, HarnessError};
use crate::bounds::{
    bound_map, min_unlabeled_self_consistent, supervised_ceiling, BoundsError, ConvergenceSpec,
    ProblemSpec, DEFAULT_COMPLEXITY_CAP,
};
use crate::engine::{run_algorithm2, EngineConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RateMode {
    BoundMap,
    Empirical,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateReport {
    pub mode: RateMode,
    pub n: u64,
    pub p: f64,
    pub e_d_star: f64,
    pub band: [f64; 2],
    pub gamma0: f64,
    /// Bound trajectory `[g0, B(g0), ...]`.
    pub bound_trajectory: Vec<f64>,
    /// Ratios for steps whose starting iterate lies inside the band.
    pub in_band_ratios: Vec<f64>,
    pub max_in_band_ratio: Option<f64>,
    pub band_entered: bool,
    /// Empirical-mode only: `bound_empirical` per engine iteration.
    pub empirical_bounds: Option<Vec<Option<f64>>>,
    /// Empirical-mode only: ratios of consecutive `bound_empirical - E_D*` gaps.
    pub empirical_ratios: Option<Vec<f64>>,
    pub threshold_n: Option<u64>,
    pub above_threshold: bool,
    pub pass: bool,
    pub notes: Vec<String>,
}

fn in_band(x: f64, band: [f64; 2]) -> bool {
    x >= band[0] && x <= band[1]
}

/// In-band contraction ratios along the bound-map trajectory from `gamma0`.
fn bound_map_ratios(
    spec: &ProblemSpec,
    total: u64,
    e_d_star: f64,
    band: [f64; 2],
    gamma0: f64,
    max_steps: usize,
    notes: &mut Vec<String>,
) -> Result<(Vec<f64>, Vec<f64>), HarnessError> {
    let mut traj = vec![gamma0];
    let mut ratios = Vec::new();
    let mut current = gamma0;
    for _ in 0..max_steps {
        if !in_band(current, band) {
            break;
        }
        let next = match bound_map(spec, total, current) {
            Ok(b) => b,
            Err(BoundsError::InfeasibleGamma { gamma, threshold }) => {
                notes.push(format!(
                    "iterate {gamma} is not below the feasibility threshold {threshold}"
                ));
                break;
            }
            Err(e) => return Err(e.into()),
        };
        ratios.push((next - e_d_star) / (current - e_d_star));
        traj.push(next);
        current = next;
    }
    Ok((traj, ratios))
}

/// Contraction check of the bound trajectory inside `[E_D*+c1, E_D*+c2]`.
///
/// Bound-map mode starts at `gamma0` (default `E_D*+c2`). Empirical mode also
/// runs Algorithm 2 with `engine` and reports its bound ratios for context;
/// the pass flag always follows the bound trajectory. No assertion is made
/// below the self-consistent sample-complexity threshold.
#[allow(clippy::too_many_arguments)]
pub fn rate_experiment(
    spec: &ProblemSpec,
    conv: &ConvergenceSpec,
    total: u64,
    mode: RateMode,
    gamma0: Option<f64>,
    max_steps: usize,
    engine: Option<&EngineConfig>,
) -> Result<RateReport, HarnessError> {
    if total == 0 {
        return Err(HarnessError::InvalidConfig("N must be at least 1".into()));
    }
    let e_d_star = supervised_ceiling(spec, total)?;
    let band = [e_d_star + conv.c1(), e_d_star + conv.c2()];
    let gamma0 = gamma0.unwrap_or(band[1]);
    let mut notes = Vec::new();

    let (bound_trajectory, in_band_ratios) =
        bound_map_ratios(spec, total, e_d_star, band, gamma0, max_steps, &mut notes)?;
    let band_entered = !in_band_ratios.is_empty();
    if !band_entered {
        notes.push("band never entered".into());
    }
    let max_in_band_ratio = in_band_ratios.iter().copied().reduce(f64::max);

    let threshold_n = match min_unlabeled_self_consistent(spec, conv, DEFAULT_COMPLEXITY_CAP) {
        Ok(n) => Some(n),
        Err(e) => {
            notes.push(format!("threshold unavailable: {e}"));
            None
        }
    };
    let above_threshold = threshold_n.is_some_and(|t| total >= t);
    let pass = if above_threshold {
        in_band_ratios.iter().all(|&r| r <= conv.p())
    } else {
        notes.push("no assertion below threshold".into());
        true
    };

    let (empirical_bounds, empirical_ratios) = match mode {
        RateMode::BoundMap => (None, None),
        RateMode::Empirical => {
            let cfg = engine.ok_or_else(|| {
                HarnessError::InvalidConfig("empirical rate mode needs an [engine] section".into())
            })?;
            if cfg.unlabeled_count as u64 != total {
                return Err(HarnessError::InvalidConfig(format!(
                    "engine unlabeled_count {} disagrees with campaign N {total}",
                    cfg.unlabeled_count
                )));
            }
            let traj = run_algorithm2(cfg)?;
            let bounds: Vec<Option<f64>> = traj.records.iter().map(|r| r.bound_empirical).collect();
            let ratios: Vec<f64> = bounds
                .windows(2)
                .filter_map(|w| match (w[0], w[1]) {
                    (Some(a), Some(b)) if in_band(a, band) => Some((b - e_d_star) / (a - e_d_star)),
                    _ => None,
                })
                .collect();
            (Some(bounds), Some(ratios))
        }
    };

    Ok(RateReport {
        mode,
        n: total,
        p: conv.p(),
        e_d_star,
        band,
        gamma0,
        bound_trajectory,
        in_band_ratios,
        max_in_band_ratio,
        band_entered,
        empirical_bounds,
        empirical_ratios,
        threshold_n,
        above_threshold,
        pass,
        notes,
    })
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct Params {
    unlabeled_count: u64,
    #[serde(default = "default_mode")]
    mode: RateMode,
    gamma0: Option<f64>,
    #[serde(default = "default_steps")]
    max_steps: usize,
}

fn default_mode() -> RateMode {
    RateMode::BoundMap
}

fn default_steps() -> usize {
    1000
}

struct RateCampaign(Params);

pub(super) fn factory(table: toml::Table) -> Result<Box<dyn Campaign>, HarnessError> {
    Ok(Box::new(RateCampaign(parse_params("rate", table)?)))
}

impl Campaign for RateCampaign {
    fn name(&self) -> &'static str {
        "rate"
    }

    fn run(&self, ctx: &CampaignContext) -> Result<CampaignOutcome, HarnessError> {
        let conv = ctx.convergence.ok_or_else(|| {
            HarnessError::InvalidConfig("rate campaign needs a [convergence] section".into())
        })?;
        let r = rate_experiment(
            &ctx.spec,
            &conv,
            self.0.unlabeled_count,
            self.0.mode,
            self.0.gamma0,
            self.0.max_steps,
            ctx.engine.as_ref(),
        )?;
        let mut table = format!(
            "rate  N={} p={} E_D*={:.6} band=[{:.6}, {:.6}] threshold_N={}\n",
            r.n,
            r.p,
            r.e_d_star,
            r.band[0],
            r.band[1],
            r.threshold_n.map(|t| t.to_string()).unwrap_or("-".into())
        );
        for (i, ratio) in r.in_band_ratios.iter().enumerate() {
            table.push_str(&format!("step {i:<4} ratio {ratio:.6}\n"));
        }
        if let Some(er) = &r.empirical_ratios {
            table.push_str(&format!("empirical ratios {er:?}\n"));
        }
        for n in &r.notes {
            table.push_str(&format!("note: {n}\n"));
        }
        table.push_str(&format!(
            "max_in_band_ratio={:?} pass={}\n",
            r.max_in_band_ratio, r.pass
        ));
        Ok(CampaignOutcome::new("rate", r.pass, &r, table))
    }
}
