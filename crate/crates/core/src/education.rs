//! Education levers: what bitrate drop, greenness or intrinsic benefit would
//! bring a user's threshold down to a target, and the before/after experiment.

use serde::{Deserialize, Serialize};

use crate::distribution::DistributionSpec;
use crate::error::{domain, ModelError, Result};
use crate::model::{delta_utility_raw, BitrateBounds};
use crate::policy::{evaluate_cohort, Cohort, OfferGrid, RatioStats};
use crate::population::{generate_population, Lever, PopulationConfig, ThresholdModel};
use crate::stream::{stream_id, Domain};

/// Reduced bitrate meeting a target threshold.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BitrateSolution {
    pub x_low: f64,
    /// The solution lies below `x_min`, so the target is unreachable by a bitrate change alone.
    pub below_min: bool,
}

/// Greenness factor meeting a target threshold.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GammaSolution {
    pub gamma: f64,
    /// `gamma < 1`: the user would need to value quality above the baseline curve.
    pub below_one: bool,
    /// `gamma * x_min` within 1% of `x_max`: the MOS curve is nearly a step.
    pub near_upper: bool,
}

impl GammaSolution {
    pub fn is_admissible(&self) -> bool {
        !self.below_one
    }
}

fn check_target(r_target: f64) -> Result<()> {
    if !(r_target >= 0.0 && r_target.is_finite()) {
        return domain(format!(
            "target threshold must be finite and >= 0, got {r_target}"
        ));
    }
    Ok(())
}

/// The low bitrate at which a user with `(gamma, savings)` has threshold `r_target`.
pub fn bitrate_for_target(
    x_high: f64,
    gamma: f64,
    savings: f64,
    r_target: f64,
    bounds: &BitrateBounds,
) -> Result<BitrateSolution> {
    check_target(r_target)?;
    if !(x_high > 0.0) {
        return domain("x_high must be positive");
    }
    let span = bounds.green_span(gamma)?;
    let x_low = x_high * (-1.25 * span * (r_target + savings)).exp();
    Ok(BitrateSolution {
        x_low,
        below_min: x_low < bounds.x_min,
    })
}

/// The greenness factor at which the user's threshold equals `r_target`.
pub fn gamma_for_target(
    x_high: f64,
    x_low: f64,
    savings: f64,
    r_target: f64,
    bounds: &BitrateBounds,
) -> Result<GammaSolution> {
    check_target(r_target)?;
    bounds.validate()?;
    if !(0.0 < x_low && x_low < x_high) {
        return domain(format!("need 0 < x_low < x_high, got ({x_low}, {x_high})"));
    }
    let need = r_target + savings;
    if !(need > 0.0) {
        return Err(ModelError::Infeasible(format!(
            "r_target + savings = {need} leaves no positive loss to match"
        )));
    }
    let gamma = bounds.x_max / (bounds.x_min * (4.0 * (x_high / x_low).ln() / (5.0 * need)).exp());
    Ok(GammaSolution {
        gamma,
        below_one: gamma < 1.0,
        near_upper: gamma * bounds.x_min > 0.99 * bounds.x_max,
    })
}

/// Intrinsic benefit giving threshold `r_target`. Negative means the target is already met.
pub fn savings_for_target(
    x_high: f64,
    x_low: f64,
    gamma: f64,
    r_target: f64,
    bounds: &BitrateBounds,
) -> Result<f64> {
    check_target(r_target)?;
    Ok(delta_utility_raw(x_high, x_low, gamma, bounds)? - r_target)
}

/// Before/after ratio curves for one education intervention.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EducationRow {
    pub offer_grid_value: f64,
    pub baseline: RatioStats,
    pub educated: RatioStats,
    /// Standard error of the paired replicate difference `educated - baseline`.
    pub diff_mean: f64,
    pub diff_stderr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EducationResult {
    pub rows: Vec<EducationRow>,
    pub argmax_baseline: Option<f64>,
    pub argmax_educated: Option<f64>,
}

/// Inputs of [`education_experiment`].
#[derive(Debug, Clone)]
pub struct EducationSetup<'a> {
    pub population: &'a PopulationConfig,
    pub baseline: &'a DistributionSpec,
    pub educated: &'a DistributionSpec,
    /// Law of the intrinsic benefit; the greenness factor absorbs each threshold.
    pub savings: &'a DistributionSpec,
    pub offers: &'a OfferGrid,
    pub c_admin: f64,
    pub seed: u64,
    pub n_replicates: usize,
}

/// Builds baseline and educated populations that share every draw except the
/// threshold law, then sweeps the offer grid over both.
///
/// Each replicate re-draws the population. Both arms of one replicate see the
/// same uniform variates, so the null intervention gives identical curves.
pub fn education_experiment(setup: &EducationSetup) -> Result<EducationResult> {
    if setup.n_replicates == 0 {
        return Err(ModelError::Config("n_replicates must be at least 1".into()));
    }
    let points = setup.offers.points()?;
    let arm = |law: &DistributionSpec, seed: u64| -> Result<Cohort> {
        let cfg = PopulationConfig {
            savings: setup.savings.clone(),
            threshold: ThresholdModel::Law {
                law: law.clone(),
                lever: Lever::Gamma,
            },
            seed,
            ..setup.population.clone()
        };
        let pop = generate_population(&cfg)?;
        Cohort::from_profiles(&pop, &cfg.bounds)
    };

    let n = points.len();
    let mut base: Vec<Vec<Option<f64>>> = vec![Vec::new(); n];
    let mut edu: Vec<Vec<Option<f64>>> = vec![Vec::new(); n];
    let mut costs = vec![(0.0, 0.0, 0.0, 0.0); n];
    for rep in 0..setup.n_replicates {
        let pop_seed = setup.seed ^ stream_id(Domain::Replicates, &[rep as u64]);
        let cb = arm(setup.baseline, pop_seed)?;
        let ce = arm(setup.educated, pop_seed)?;
        let mut offer_rng = crate::stream::substream(setup.seed, Domain::Offers, &[rep as u64]);
        let u = crate::policy::draw_variates(&mut offer_rng, cb.len());
        for (j, pt) in points.iter().enumerate() {
            let offers = pt.offers(&u);
            let ob = evaluate_cohort(&cb, &offers, setup.c_admin, None);
            let oe = evaluate_cohort(&ce, &offers, setup.c_admin, None);
            base[j].push(ob.ratio);
            edu[j].push(oe.ratio);
            costs[j].0 += ob.expected_cost;
            costs[j].1 += ob.expected_flexibility;
            costs[j].2 += oe.expected_cost;
            costs[j].3 += oe.expected_flexibility;
        }
    }

    let reps = setup.n_replicates as f64;
    let mut rows = Vec::with_capacity(n);
    for (j, pt) in points.iter().enumerate() {
        let diffs: Vec<f64> = base[j]
            .iter()
            .zip(&edu[j])
            .filter_map(|(b, e)| Some((*e)? - (*b)?))
            .collect();
        let (diff_mean, diff_stderr) = crate::policy::mean_stderr(&diffs);
        rows.push(EducationRow {
            offer_grid_value: pt.value,
            baseline: RatioStats::from_samples(&base[j], costs[j].0 / reps, costs[j].1 / reps),
            educated: RatioStats::from_samples(&edu[j], costs[j].2 / reps, costs[j].3 / reps),
            diff_mean,
            diff_stderr,
        });
    }
    let pick = |f: fn(&EducationRow) -> &RatioStats| {
        crate::policy::argmax_index(rows.iter().map(|r| (f(r).ratio, r.offer_grid_value)))
            .map(|i| rows[i].offer_grid_value)
    };
    Ok(EducationResult {
        argmax_baseline: pick(|r| &r.baseline),
        argmax_educated: pick(|r| &r.educated),
        rows,
    })
}
