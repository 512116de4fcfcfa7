//! Provider objective: expected cost, expected flexibility and their ratio,
//! plus the grid sweeps over offer laws and targeted subsets.
//!
//! Sweeps use common random numbers. Within a replicate every user keeps one
//! uniform variate and each grid point maps it through its own law's quantile
//! function, so neighbouring grid points differ only by the law change.
//! Offers that fall below zero are treated as no offer.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::acceptance::sigmoid;
use crate::distribution::{DistributionSpec, Grid};
use crate::error::{ModelError, Result};
use crate::model::{min_incentive, BitrateBounds, UserProfile};
use crate::population::{Group, Partition};
use crate::stream::{substream, Domain};

/// Flattened per-user data needed to score a policy.
#[derive(Debug, Clone, PartialEq)]
pub struct Cohort {
    pub r_min: Vec<f64>,
    pub delta: Vec<f64>,
    pub flex: Vec<f64>,
}

impl Cohort {
    pub fn from_profiles(profiles: &[UserProfile], bounds: &BitrateBounds) -> Result<Self> {
        let mut c = Cohort {
            r_min: Vec::with_capacity(profiles.len()),
            delta: Vec::with_capacity(profiles.len()),
            flex: Vec::with_capacity(profiles.len()),
        };
        for p in profiles {
            c.r_min.push(min_incentive(p, bounds)?);
            c.delta.push(p.delta);
            c.flex.push(p.flexibility());
        }
        Ok(c)
    }

    pub fn len(&self) -> usize {
        self.r_min.len()
    }

    pub fn is_empty(&self) -> bool {
        self.r_min.is_empty()
    }

    pub fn accept_prob(&self, i: usize, offer: f64) -> f64 {
        sigmoid(self.delta[i] * (offer - self.r_min[i]))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PolicyOutcome {
    pub expected_cost: f64,
    pub expected_flexibility: f64,
    /// Absent when the expected cost is zero.
    pub ratio: Option<f64>,
    pub n_offers: usize,
    pub mean_accept_prob: f64,
}

/// Per-user offers; zero means no offer.
#[derive(Debug, Clone, PartialEq)]
pub struct OfferAssignment(Vec<f64>);

impl OfferAssignment {
    pub fn new(amounts: Vec<f64>) -> Result<Self> {
        if let Some(bad) = amounts.iter().find(|a| !(**a >= 0.0 && a.is_finite())) {
            return Err(ModelError::Domain(format!(
                "offer amounts must be finite and >= 0, got {bad}"
            )));
        }
        Ok(Self(amounts))
    }

    pub fn amounts(&self) -> &[f64] {
        &self.0
    }
}

/// Scores `offers` on `cohort`. With a mask, only masked-in users count.
pub fn evaluate_cohort(
    cohort: &Cohort,
    offers: &[f64],
    c_admin: f64,
    mask: Option<&[bool]>,
) -> PolicyOutcome {
    let mut cost = 0.0;
    let mut flex = 0.0;
    let mut n_offers = 0;
    let mut p_sum = 0.0;
    let mut n = 0usize;
    for (i, &r) in offers.iter().enumerate() {
        if let Some(m) = mask {
            if !m[i] {
                continue;
            }
        }
        let p = cohort.accept_prob(i, r);
        n += 1;
        p_sum += p;
        flex += p * cohort.flex[i];
        if r > 0.0 {
            cost += p * r + c_admin;
            n_offers += 1;
        }
    }
    PolicyOutcome {
        expected_cost: cost,
        expected_flexibility: flex,
        ratio: (cost > 0.0).then(|| flex / cost),
        n_offers,
        mean_accept_prob: if n == 0 { 0.0 } else { p_sum / n as f64 },
    }
}

/// Expected cost, flexibility and ratio of an assignment.
pub fn evaluate_policy(
    profiles: &[UserProfile],
    bounds: &BitrateBounds,
    assignment: &OfferAssignment,
    c_admin: f64,
) -> Result<PolicyOutcome> {
    if assignment.0.len() != profiles.len() {
        return Err(ModelError::Misaligned {
            what: "offer assignment",
            got: assignment.0.len(),
            expected: profiles.len(),
        });
    }
    if !(c_admin >= 0.0) {
        return Err(ModelError::Domain(format!(
            "c_admin must be >= 0, got {c_admin}"
        )));
    }
    let cohort = Cohort::from_profiles(profiles, bounds)?;
    Ok(evaluate_cohort(&cohort, &assignment.0, c_admin, None))
}

/// One realization of the policy: Bernoulli acceptances, summed paid offers and flexibility.
pub fn realize_policy<R: Rng + ?Sized>(
    cohort: &Cohort,
    offers: &[f64],
    c_admin: f64,
    rng: &mut R,
) -> (f64, f64) {
    let mut cost = 0.0;
    let mut flex = 0.0;
    for (i, &r) in offers.iter().enumerate() {
        let accepted = rng.random::<f64>() < cohort.accept_prob(i, r);
        if r > 0.0 {
            cost += c_admin;
        }
        if accepted {
            cost += r;
            flex += cohort.flex[i];
        }
    }
    (cost, flex)
}

/// `n` uniform variates in (0, 1), one per user.
pub fn draw_variates(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.sample(rand::distr::Open01)).collect()
}

/// Family of offer laws swept along one parameter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum OfferGrid {
    /// `U[a, b]` with `b` swept.
    UniformUpper { a: f64, b: Grid },
    /// `U[a, b]` with `a` swept.
    UniformLower { a: Grid, b: f64 },
    /// `N(mu, sigma^2)` with `mu` swept.
    NormalMean { mu: Grid, sigma: f64 },
    /// `N(mu, sigma^2)` with `sigma` swept.
    NormalSigma { mu: f64, sigma: Grid },
    /// Everyone offered the same amount `r`.
    Constant { r: Grid },
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridPoint {
    /// The swept parameter.
    pub value: f64,
    pub params: Vec<(&'static str, f64)>,
    pub law: DistributionSpec,
}

impl GridPoint {
    /// Offers for users holding variates `u`, floored at zero.
    pub fn offers(&self, u: &[f64]) -> Vec<f64> {
        u.iter().map(|&x| self.law.quantile(x).max(0.0)).collect()
    }

    /// Everyone offered the law's mean.
    pub fn mean_offers(&self, n: usize) -> Vec<f64> {
        vec![self.law.mean().max(0.0); n]
    }
}

impl OfferGrid {
    pub fn param_names(&self) -> [&'static str; 2] {
        match self {
            Self::UniformUpper { .. } | Self::UniformLower { .. } => ["a", "b"],
            Self::NormalMean { .. } | Self::NormalSigma { .. } => ["mu", "sigma"],
            Self::Constant { .. } => ["r", ""],
        }
    }

    pub fn points(&self) -> Result<Vec<GridPoint>> {
        let pts: Vec<GridPoint> = match self {
            Self::UniformUpper { a, b } => b
                .values()
                .into_iter()
                .map(|b| GridPoint {
                    value: b,
                    params: vec![("a", *a), ("b", b)],
                    law: DistributionSpec::uniform(*a, b),
                })
                .collect(),
            Self::UniformLower { a, b } => a
                .values()
                .into_iter()
                .map(|a| GridPoint {
                    value: a,
                    params: vec![("a", a), ("b", *b)],
                    law: DistributionSpec::uniform(a, *b),
                })
                .collect(),
            Self::NormalMean { mu, sigma } => mu
                .values()
                .into_iter()
                .map(|m| GridPoint {
                    value: m,
                    params: vec![("mu", m), ("sigma", *sigma)],
                    law: DistributionSpec::normal(m, sigma * sigma),
                })
                .collect(),
            Self::NormalSigma { mu, sigma } => sigma
                .values()
                .into_iter()
                .map(|s| GridPoint {
                    value: s,
                    params: vec![("mu", *mu), ("sigma", s)],
                    law: DistributionSpec::normal(*mu, s * s),
                })
                .collect(),
            Self::Constant { r } => r
                .values()
                .into_iter()
                .map(|r| GridPoint {
                    value: r,
                    params: vec![("r", r)],
                    law: DistributionSpec::constant(r),
                })
                .collect(),
        };
        if pts.is_empty() {
            return Err(ModelError::InvalidSpec("offer grid is empty".into()));
        }
        for p in &pts {
            p.law
                .validate()
                .map_err(|e| ModelError::InvalidSpec(format!("grid point {}: {e}", p.value)))?;
        }
        if let Self::NormalMean { sigma, .. } = self {
            if *sigma < 0.0 {
                return Err(ModelError::InvalidSpec("sigma must be >= 0".into()));
            }
        }
        if let Self::NormalSigma { sigma, .. } = self {
            if sigma.values().iter().any(|s| *s < 0.0) {
                return Err(ModelError::InvalidSpec("sigma must be >= 0".into()));
            }
        }
        Ok(pts)
    }
}

pub fn mean_stderr(xs: &[f64]) -> (f64, f64) {
    let n = xs.len();
    if n == 0 {
        return (f64::NAN, 0.0);
    }
    let m = xs.iter().sum::<f64>() / n as f64;
    if n < 2 {
        return (m, 0.0);
    }
    let var = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1) as f64;
    (m, (var / n as f64).sqrt())
}

/// Replicate-averaged outcome at one grid point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RatioStats {
    pub expected_cost: f64,
    pub expected_flexibility: f64,
    /// Mean over replicates where the ratio is defined.
    pub ratio: Option<f64>,
    pub ratio_stderr: f64,
    pub n_defined: usize,
}

impl RatioStats {
    pub fn from_samples(ratios: &[Option<f64>], mean_cost: f64, mean_flex: f64) -> Self {
        let defined: Vec<f64> = ratios.iter().flatten().copied().collect();
        let (m, se) = mean_stderr(&defined);
        Self {
            expected_cost: mean_cost,
            expected_flexibility: mean_flex,
            ratio: (!defined.is_empty()).then_some(m),
            ratio_stderr: se,
            n_defined: defined.len(),
        }
    }

    fn from_outcomes(outs: &[PolicyOutcome]) -> Self {
        let n = outs.len().max(1) as f64;
        let ratios: Vec<Option<f64>> = outs.iter().map(|o| o.ratio).collect();
        Self::from_samples(
            &ratios,
            outs.iter().map(|o| o.expected_cost).sum::<f64>() / n,
            outs.iter().map(|o| o.expected_flexibility).sum::<f64>() / n,
        )
    }
}

/// Index of the largest defined ratio; ties go to the smaller swept value.
pub fn argmax_index(items: impl Iterator<Item = (Option<f64>, f64)>) -> Option<usize> {
    let mut best: Option<(usize, f64, f64)> = None;
    for (i, (r, v)) in items.enumerate() {
        let Some(r) = r else { continue };
        best = match best {
            Some((_, br, bv)) if r < br || (r == br && v >= bv) => best,
            _ => Some((i, r, v)),
        };
    }
    best.map(|(i, _, _)| i)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub value: f64,
    pub params: Vec<(String, f64)>,
    pub stats: RatioStats,
    pub is_argmax: bool,
}

/// A ratio curve over a grid.
/// Grid value, named parameters and statistics of one curve point before argmax marking.
type RawPoint = (f64, Vec<(String, f64)>, RatioStats);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Curve {
    pub label: String,
    pub points: Vec<CurvePoint>,
}

impl Curve {
    fn new(label: &str, points: Vec<RawPoint>) -> Self {
        let best = argmax_index(points.iter().map(|(v, _, s)| (s.ratio, *v)));
        Curve {
            label: label.to_string(),
            points: points
                .into_iter()
                .enumerate()
                .map(|(i, (value, params, stats))| CurvePoint {
                    value,
                    params,
                    stats,
                    is_argmax: Some(i) == best,
                })
                .collect(),
        }
    }

    pub fn argmax(&self) -> Option<usize> {
        self.points.iter().position(|p| p.is_argmax)
    }

    pub fn argmax_value(&self) -> Option<f64> {
        self.argmax().map(|i| self.points[i].value)
    }

    pub fn values(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.value).collect()
    }

    /// Ratios with undefined points read as zero.
    pub fn ratios(&self) -> Vec<f64> {
        self.points
            .iter()
            .map(|p| p.stats.ratio.unwrap_or(0.0))
            .collect()
    }

    pub fn stderrs(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.stats.ratio_stderr).collect()
    }
}

fn owned(params: &[(&'static str, f64)]) -> Vec<(String, f64)> {
    params.iter().map(|(k, v)| (k.to_string(), *v)).collect()
}

fn check_common(c_admin: f64, n_replicates: usize) -> Result<()> {
    if !(c_admin >= 0.0) {
        return Err(ModelError::Domain(format!(
            "c_admin must be >= 0, got {c_admin}"
        )));
    }
    if n_replicates == 0 {
        return Err(ModelError::Config("n_replicates must be at least 1".into()));
    }
    Ok(())
}

/// Offers everyone a draw from each grid law and averages over replicates.
pub fn sweep_distribution(
    cohort: &Cohort,
    grid: &OfferGrid,
    c_admin: f64,
    seed: u64,
    n_replicates: usize,
) -> Result<Curve> {
    check_common(c_admin, n_replicates)?;
    let points = grid.points()?;
    let mut outs: Vec<Vec<PolicyOutcome>> = vec![Vec::with_capacity(n_replicates); points.len()];
    for rep in 0..n_replicates {
        let u = draw_variates(
            &mut substream(seed, Domain::Offers, &[rep as u64]),
            cohort.len(),
        );
        for (j, pt) in points.iter().enumerate() {
            outs[j].push(evaluate_cohort(cohort, &pt.offers(&u), c_admin, None));
        }
    }
    Ok(Curve::new(
        "all",
        points
            .iter()
            .zip(&outs)
            .map(|(p, o)| (p.value, owned(&p.params), RatioStats::from_outcomes(o)))
            .collect(),
    ))
}

/// Order in which users receive offers when only `k` are incentivized.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Selection {
    /// Fresh random permutation per replicate.
    #[default]
    Random,
    /// Cheapest thresholds first.
    AscendingRmin,
    /// By user index (group A first after a partition).
    Index,
}

fn selection_order(cohort: &Cohort, selection: Selection, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let mut order: Vec<usize> = (0..cohort.len()).collect();
    match selection {
        Selection::Random => order.shuffle(rng),
        Selection::AscendingRmin => {
            order.sort_by(|&a, &b| cohort.r_min[a].total_cmp(&cohort.r_min[b]).then(a.cmp(&b)))
        }
        Selection::Index => {}
    }
    order
}

/// Ratio as a function of how many users receive an offer.
pub fn sweep_subset_size(
    cohort: &Cohort,
    offer_law: &DistributionSpec,
    k_grid: &[usize],
    selection: Selection,
    c_admin: f64,
    seed: u64,
    n_replicates: usize,
) -> Result<Curve> {
    check_common(c_admin, n_replicates)?;
    offer_law.validate()?;
    if k_grid.is_empty() {
        return Err(ModelError::Config("k grid is empty".into()));
    }
    if let Some(k) = k_grid.iter().find(|k| **k > cohort.len()) {
        return Err(ModelError::Config(format!(
            "k = {k} exceeds population size {}",
            cohort.len()
        )));
    }
    let mut outs: Vec<Vec<PolicyOutcome>> = vec![Vec::with_capacity(n_replicates); k_grid.len()];
    for rep in 0..n_replicates {
        let order = selection_order(
            cohort,
            selection,
            &mut substream(seed, Domain::Replicates, &[rep as u64]),
        );
        let u = draw_variates(
            &mut substream(seed, Domain::Offers, &[rep as u64]),
            cohort.len(),
        );
        for (j, &k) in k_grid.iter().enumerate() {
            let mut offers = vec![0.0; cohort.len()];
            for &i in &order[..k] {
                offers[i] = offer_law.quantile(u[i]).max(0.0);
            }
            outs[j].push(evaluate_cohort(cohort, &offers, c_admin, None));
        }
    }
    Ok(Curve::new(
        "subset",
        k_grid
            .iter()
            .zip(&outs)
            .map(|(&k, o)| {
                (
                    k as f64,
                    vec![("k".to_string(), k as f64)],
                    RatioStats::from_outcomes(o),
                )
            })
            .collect(),
    ))
}

/// Which users a targeting curve is scored on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Audience {
    /// Only the users who receive offers.
    #[default]
    Targeted,
    /// Everyone, including the free flexibility of users without an offer.
    Population,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Target {
    A,
    B,
    Both,
}

impl Target {
    pub const ALL: [Target; 3] = [Target::A, Target::B, Target::Both];

    pub fn name(self) -> &'static str {
        match self {
            Target::A => "a",
            Target::B => "b",
            Target::Both => "both",
        }
    }

    fn includes(self, g: Group) -> bool {
        matches!(
            (self, g),
            (Target::Both, _) | (Target::A, Group::A) | (Target::B, Group::B)
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupComparison {
    /// Curves for targeting A only, B only and both, in that order.
    pub curves: Vec<Curve>,
    /// Per grid point, the target with the largest ratio.
    pub best: Vec<Option<Target>>,
}

impl GroupComparison {
    pub fn curve(&self, t: Target) -> &Curve {
        &self.curves[Target::ALL.iter().position(|x| *x == t).unwrap()]
    }
}

/// Ratio curves for offering only group A, only group B, or both.
pub fn compare_group_targeting(
    partition: &Partition,
    bounds: &BitrateBounds,
    grid: &OfferGrid,
    audience: Audience,
    c_admin: f64,
    seed: u64,
    n_replicates: usize,
) -> Result<GroupComparison> {
    check_common(c_admin, n_replicates)?;
    let cohort = Cohort::from_profiles(&partition.profiles, bounds)?;
    let points = grid.points()?;
    let masks: Vec<Vec<bool>> = Target::ALL
        .iter()
        .map(|t| partition.labels.iter().map(|g| t.includes(*g)).collect())
        .collect();
    let mut outs = vec![vec![Vec::with_capacity(n_replicates); points.len()]; 3];
    for rep in 0..n_replicates {
        let u = draw_variates(
            &mut substream(seed, Domain::Offers, &[rep as u64]),
            cohort.len(),
        );
        for (j, pt) in points.iter().enumerate() {
            let full = pt.offers(&u);
            for (t, mask) in masks.iter().enumerate() {
                let offers: Vec<f64> = full
                    .iter()
                    .zip(mask)
                    .map(|(r, m)| if *m { *r } else { 0.0 })
                    .collect();
                let scope = match audience {
                    Audience::Targeted => Some(&mask[..]),
                    Audience::Population => None,
                };
                outs[t][j].push(evaluate_cohort(&cohort, &offers, c_admin, scope));
            }
        }
    }
    let curves: Vec<Curve> = Target::ALL
        .iter()
        .zip(&outs)
        .map(|(t, o)| {
            Curve::new(
                t.name(),
                points
                    .iter()
                    .zip(o)
                    .map(|(p, o)| (p.value, owned(&p.params), RatioStats::from_outcomes(o)))
                    .collect(),
            )
        })
        .collect();
    let best = (0..points.len())
        .map(|j| {
            argmax_index(curves.iter().map(|c| (c.points[j].stats.ratio, 0.0)))
                .map(|i| Target::ALL[i])
        })
        .collect();
    Ok(GroupComparison { curves, best })
}

/// Offering everyone the law's mean versus individual draws from the law.
pub fn compare_mean_vs_individual(
    cohort: &Cohort,
    grid: &OfferGrid,
    c_admin: f64,
    seed: u64,
    n_replicates: usize,
) -> Result<(Curve, Curve)> {
    check_common(c_admin, n_replicates)?;
    let points = grid.points()?;
    let individual = sweep_distribution(cohort, grid, c_admin, seed, n_replicates)?;
    let mean = Curve::new(
        "mean",
        points
            .iter()
            .map(|p| {
                let o = evaluate_cohort(cohort, &p.mean_offers(cohort.len()), c_admin, None);
                (p.value, owned(&p.params), RatioStats::from_outcomes(&[o]))
            })
            .collect(),
    );
    let individual = Curve {
        label: "individual".into(),
        ..individual
    };
    Ok((mean, individual))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::population::{generate_population, PopulationConfig};
    use approx::assert_relative_eq;

    fn cohort(r_min: &[f64], delta: f64, flex: &[f64]) -> Cohort {
        Cohort {
            r_min: r_min.to_vec(),
            delta: vec![delta; r_min.len()],
            flex: flex.to_vec(),
        }
    }

    fn pop(n: usize, seed: u64) -> (Vec<UserProfile>, BitrateBounds) {
        let c = PopulationConfig {
            n_users: n,
            seed,
            ..PopulationConfig::default()
        };
        (generate_population(&c).unwrap(), c.bounds)
    }

    #[test]
    fn two_users_at_threshold() {
        let c = cohort(&[2.0, 2.0], 3.0, &[1000.0, 2000.0]);
        let o = evaluate_cohort(&c, &[2.0, 2.0], 0.04, None);
        assert_relative_eq!(
            o.expected_cost,
            2.0 * (0.5 * 2.0) + 2.0 * 0.04,
            epsilon = 1e-12
        );
        assert_relative_eq!(o.expected_flexibility, 1500.0, epsilon = 1e-9);
        assert_eq!(o.n_offers, 2);
        assert_relative_eq!(o.mean_accept_prob, 0.5);
    }

    #[test]
    fn no_offers_no_ratio() {
        let c = cohort(&[1.0, 3.0], 1e4, &[1000.0, 2000.0]);
        let o = evaluate_cohort(&c, &[0.0, 0.0], 0.04, None);
        assert_eq!(o.expected_cost, 0.0);
        assert!(o.expected_flexibility < 1e-100);
        assert_eq!(o.ratio, None);
    }

    #[test]
    fn single_sure_user() {
        let c = cohort(&[0.0], 1e4, &[3800.0]);
        let o = evaluate_cohort(&c, &[5.0], 0.0, None);
        assert_relative_eq!(o.ratio.unwrap(), 760.0, epsilon = 1e-9);
    }

    #[test]
    fn zero_offers_still_yield_flexibility() {
        let c = cohort(&[0.5], 1.2, &[1000.0]);
        let o = evaluate_cohort(&c, &[0.0], 0.04, None);
        assert_relative_eq!(
            o.expected_flexibility,
            1000.0 * sigmoid(-0.6),
            epsilon = 1e-9
        );
        assert_eq!(o.expected_cost, 0.0);
    }

    #[test]
    fn evaluate_policy_checks_inputs() {
        let (p, b) = pop(10, 1);
        let short = OfferAssignment::new(vec![1.0; 9]).unwrap();
        assert!(matches!(
            evaluate_policy(&p, &b, &short, 0.04),
            Err(ModelError::Misaligned { .. })
        ));
        assert!(OfferAssignment::new(vec![-1.0]).is_err());
        let ok = OfferAssignment::new(vec![1.0; 10]).unwrap();
        assert!(evaluate_policy(&p, &b, &ok, -0.1).is_err());
        let o = evaluate_policy(&p, &b, &ok, 0.04).unwrap();
        assert!(o.expected_cost >= 0.04 * 10.0);
    }

    #[test]
    fn subset_k_zero_is_no_offer_policy() {
        let (p, b) = pop(200, 2);
        let c = Cohort::from_profiles(&p, &b).unwrap();
        let curve = sweep_subset_size(
            &c,
            &DistributionSpec::normal(0.1, 0.05),
            &[0],
            Selection::Random,
            0.04,
            3,
            4,
        )
        .unwrap();
        let direct = evaluate_cohort(&c, &vec![0.0; 200], 0.04, None);
        assert_eq!(
            curve.points[0].stats.expected_flexibility,
            direct.expected_flexibility
        );
        assert_eq!(curve.points[0].stats.ratio, None);
        assert_eq!(curve.argmax(), None);
    }

    #[test]
    fn argmax_ties_go_to_smaller_value() {
        let items = vec![
            (Some(2.0), 3.0),
            (Some(2.0), 1.0),
            (None, 0.0),
            (Some(1.0), 0.5),
        ];
        assert_eq!(argmax_index(items.into_iter()), Some(1));
        assert_eq!(argmax_index(vec![(None, 1.0)].into_iter()), None);
    }

    #[test]
    fn sweeps_are_deterministic() {
        let (p, b) = pop(300, 4);
        let c = Cohort::from_profiles(&p, &b).unwrap();
        let g = OfferGrid::NormalMean {
            mu: Grid::linspace(0.0, 2.0, 5),
            sigma: 1.0,
        };
        assert_eq!(
            sweep_distribution(&c, &g, 0.04, 9, 3).unwrap(),
            sweep_distribution(&c, &g, 0.04, 9, 3).unwrap()
        );
    }

    #[test]
    fn empty_group_curve_is_no_offer_baseline() {
        let (p, b) = pop(50, 5);
        let part = Partition {
            profiles: p,
            labels: vec![Group::B; 50],
        };
        let g = OfferGrid::Constant {
            r: Grid::List(vec![0.5, 1.0]),
        };
        for aud in [Audience::Targeted, Audience::Population] {
            let cmp = compare_group_targeting(&part, &b, &g, aud, 0.04, 1, 2).unwrap();
            assert!(cmp
                .curve(Target::A)
                .points
                .iter()
                .all(|p| p.stats.ratio.is_none()));
            assert!(cmp
                .curve(Target::B)
                .points
                .iter()
                .all(|p| p.stats.ratio.is_some()));
        }
    }

    #[test]
    fn realized_outcome_matches_expectation() {
        let (p, b) = pop(100, 6);
        let c = Cohort::from_profiles(&p, &b).unwrap();
        let offers: Vec<f64> = (0..100).map(|i| (i % 5) as f64 * 0.2).collect();
        let exp = evaluate_cohort(&c, &offers, 0.04, None);
        let mut rng = substream(6, Domain::Decisions, &[0]);
        let m = 4000;
        let (mut sc, mut sf) = (Vec::new(), Vec::new());
        for _ in 0..m {
            let (cst, flx) = realize_policy(&c, &offers, 0.04, &mut rng);
            sc.push(cst);
            sf.push(flx);
        }
        let (mc, sec) = mean_stderr(&sc);
        let (mf, sef) = mean_stderr(&sf);
        assert!((mc - exp.expected_cost).abs() < 4.0 * sec);
        assert!((mf - exp.expected_flexibility).abs() < 4.0 * sef);
    }

    mod props {
        use super::*;
        use proptest::collection::vec;
        use proptest::prelude::*;

        fn users() -> impl Strategy<Value = Vec<(f64, f64, f64, f64)>> {
            vec(
                (0.0f64..5.0, 0.1f64..50.0, 100.0f64..4700.0, 0.0f64..6.0),
                1..30,
            )
        }

        fn split(u: &[(f64, f64, f64, f64)]) -> (Cohort, Vec<f64>) {
            (
                Cohort {
                    r_min: u.iter().map(|x| x.0).collect(),
                    delta: u.iter().map(|x| x.1).collect(),
                    flex: u.iter().map(|x| x.2).collect(),
                },
                u.iter()
                    .map(|x| if x.3 < 1.0 { 0.0 } else { x.3 })
                    .collect(),
            )
        }

        proptest! {
            #[test]
            fn outcome_is_additive(a in users(), b in users(), c_admin in 0.0f64..0.5) {
                let (ca, oa) = split(&a);
                let (cb, ob) = split(&b);
                let all: Vec<_> = a.iter().chain(&b).copied().collect();
                let (cu, ou) = split(&all);
                let x = evaluate_cohort(&ca, &oa, c_admin, None);
                let y = evaluate_cohort(&cb, &ob, c_admin, None);
                let z = evaluate_cohort(&cu, &ou, c_admin, None);
                prop_assert!((z.expected_cost - x.expected_cost - y.expected_cost).abs() < 1e-9 * (1.0 + z.expected_cost));
                prop_assert!((z.expected_flexibility - x.expected_flexibility - y.expected_flexibility).abs() < 1e-9 * (1.0 + z.expected_flexibility));
                prop_assert_eq!(z.n_offers, x.n_offers + y.n_offers);
            }

            #[test]
            fn duplication_keeps_ratio(a in users(), c_admin in 0.0f64..0.5) {
                let (ca, oa) = split(&a);
                let twice: Vec<_> = a.iter().chain(&a).copied().collect();
                let (cd, od) = split(&twice);
                let x = evaluate_cohort(&ca, &oa, c_admin, None);
                let y = evaluate_cohort(&cd, &od, c_admin, None);
                match (x.ratio, y.ratio) {
                    (Some(p), Some(q)) => prop_assert!((p - q).abs() < 1e-9 * p.abs().max(1.0)),
                    (None, None) => {}
                    _ => prop_assert!(false),
                }
            }

            #[test]
            fn single_user_ratio_and_probability(r in 0.1f64..10.0, x in 100.0f64..4700.0, r_min in 0.0f64..10.0, d1 in 0.1f64..5.0, d2 in 0.1f64..5.0) {
                // without admin cost the ratio is x / r whatever the probability
                let a = evaluate_cohort(&cohort(&[r_min], d1, &[x]), &[r], 0.0, None).ratio.unwrap();
                prop_assert!((a - x / r).abs() < 1e-9 * (x / r));
                // with admin cost the ratio rises with the probability
                let c = 0.04;
                let pa = sigmoid(d1 * (r - r_min));
                let pb = sigmoid(d2 * (r - r_min));
                prop_assume!((pa - pb).abs() > 1e-9);
                let ra = evaluate_cohort(&cohort(&[r_min], d1, &[x]), &[r], c, None).ratio.unwrap();
                let rb = evaluate_cohort(&cohort(&[r_min], d2, &[x]), &[r], c, None).ratio.unwrap();
                prop_assert_eq!(ra > rb, pa > pb);
            }
        }
    }
}
