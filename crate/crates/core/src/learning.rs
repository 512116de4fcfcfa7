//! Per-user threshold and slope estimation from past offers and responses.
//!
//! Responses follow `P[accept | r] = sigmoid(theta0 + theta1 * r)`, so the
//! slope is `theta1` and the threshold is `-theta0 / theta1`. The fit is a
//! damped Newton iteration on the concave log-likelihood, optionally with an
//! isotropic ridge penalty `lambda / 2 * |theta|^2`.

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::acceptance::sigmoid;
use crate::distribution::DistributionSpec;
use crate::error::{ModelError, Result};
use crate::model::min_incentive;
use crate::population::{generate_population, PopulationConfig};
use crate::stream::{substream, Domain};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InteractionRecord {
    pub offer: f64,
    pub response: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SeparationDirection {
    /// Every response is an acceptance.
    AllAccepted,
    /// Every response is a refusal.
    AllRefused,
    /// Some cut-off splits refusals below from acceptances above.
    Increasing,
    /// Acceptances all sit at or below the refusals.
    Decreasing,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FitError {
    #[error("no records")]
    Empty,
    #[error("all offers identical; slope is not identifiable")]
    Degenerate,
    #[error("responses are separable in the offer ({0:?}); the likelihood has no maximum")]
    Separated(SeparationDirection),
}

impl From<FitError> for ModelError {
    fn from(e: FitError) -> Self {
        ModelError::Domain(e.to_string())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitOptions {
    /// Isotropic ridge strength on both coefficients. Zero is plain maximum likelihood.
    pub ridge: f64,
    pub max_iter: usize,
    pub grad_tol: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            ridge: 0.0,
            max_iter: 100,
            grad_tol: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterEstimate {
    pub theta0: f64,
    pub theta1: f64,
    pub r_min_hat: f64,
    pub delta_hat: f64,
    pub converged: bool,
    pub iterations: usize,
    pub n_samples: usize,
    pub log_likelihood: f64,
    /// The fitted slope is not positive, so the curve does not describe acceptance.
    pub negative_slope: bool,
    /// Inverse of the penalized observed information at the estimate.
    pub covariance: [[f64; 2]; 2],
}

impl ParameterEstimate {
    /// Asymptotic standard errors of `(r_min_hat, delta_hat)`.
    pub fn standard_errors(&self) -> (f64, f64) {
        let c = &self.covariance;
        // gradient of -theta0/theta1 with respect to (theta0, theta1)
        let g0 = -1.0 / self.theta1;
        let g1 = self.theta0 / (self.theta1 * self.theta1);
        let var_r = g0 * g0 * c[0][0] + 2.0 * g0 * g1 * c[0][1] + g1 * g1 * c[1][1];
        (var_r.max(0.0).sqrt(), c[1][1].max(0.0).sqrt())
    }
}

/// `m` offers drawn from `offer_law`, each answered by a user with `(r_min, delta)`.
pub fn generate_interactions<R: Rng + ?Sized>(
    r_min: f64,
    delta: f64,
    offer_law: &DistributionSpec,
    m: usize,
    rng: &mut R,
) -> Result<Vec<InteractionRecord>> {
    if m == 0 {
        return Err(ModelError::Config("need at least one interaction".into()));
    }
    if !(delta > 0.0) {
        return Err(ModelError::Domain(format!(
            "delta must be positive, got {delta}"
        )));
    }
    offer_law.validate()?;
    Ok((0..m)
        .map(|_| {
            let offer = offer_law.sample(rng);
            let p = sigmoid(delta * (offer - r_min));
            InteractionRecord {
                offer,
                response: rng.random::<f64>() < p,
            }
        })
        .collect())
}

/// Detects when the likelihood has no interior maximum.
pub fn separation(records: &[InteractionRecord]) -> Option<SeparationDirection> {
    let mut max0 = f64::NEG_INFINITY;
    let mut min0 = f64::INFINITY;
    let mut max1 = f64::NEG_INFINITY;
    let mut min1 = f64::INFINITY;
    for r in records {
        if r.response {
            max1 = max1.max(r.offer);
            min1 = min1.min(r.offer);
        } else {
            max0 = max0.max(r.offer);
            min0 = min0.min(r.offer);
        }
    }
    if min0 == f64::INFINITY {
        Some(SeparationDirection::AllAccepted)
    } else if min1 == f64::INFINITY {
        Some(SeparationDirection::AllRefused)
    } else if max0 <= min1 {
        Some(SeparationDirection::Increasing)
    } else if max1 <= min0 {
        Some(SeparationDirection::Decreasing)
    } else {
        None
    }
}

fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

/// Penalized log-likelihood, gradient and negative Hessian at `theta`.
fn objective(
    records: &[InteractionRecord],
    theta: [f64; 2],
    ridge: f64,
) -> (f64, [f64; 2], [[f64; 2]; 2]) {
    let mut ll = 0.0;
    let mut g = [0.0; 2];
    let mut h = [[0.0; 2]; 2];
    for rec in records {
        let r = rec.offer;
        let eta = theta[0] + theta[1] * r;
        let y = if rec.response { 1.0 } else { 0.0 };
        ll += y * eta - softplus(eta);
        let z = sigmoid(eta);
        let zc = sigmoid(-eta);
        // residual y - z without cancellation when z is close to 1
        let e = if rec.response { zc } else { -z };
        g[0] += e;
        g[1] += e * r;
        let w = z * zc;
        h[0][0] += w;
        h[0][1] += w * r;
        h[1][1] += w * r * r;
    }
    ll -= 0.5 * ridge * (theta[0] * theta[0] + theta[1] * theta[1]);
    g[0] -= ridge * theta[0];
    g[1] -= ridge * theta[1];
    h[0][0] += ridge;
    h[1][1] += ridge;
    h[1][0] = h[0][1];
    (ll, g, h)
}

fn invert(h: [[f64; 2]; 2]) -> Option<[[f64; 2]; 2]> {
    let det = h[0][0] * h[1][1] - h[0][1] * h[1][0];
    if !(det.abs() > 0.0) || !det.is_finite() {
        return None;
    }
    Some([
        [h[1][1] / det, -h[0][1] / det],
        [-h[1][0] / det, h[0][0] / det],
    ])
}

/// Fits the two-parameter logistic model, also returning the log-likelihood after each iteration.
pub fn fit_logistic_traced(
    records: &[InteractionRecord],
    opts: &FitOptions,
) -> std::result::Result<(ParameterEstimate, Vec<f64>), FitError> {
    if records.is_empty() {
        return Err(FitError::Empty);
    }
    let first = records[0].offer;
    if records.iter().all(|r| r.offer == first) {
        return Err(FitError::Degenerate);
    }
    if opts.ridge <= 0.0 {
        if let Some(dir) = separation(records) {
            return Err(FitError::Separated(dir));
        }
    }

    let mut theta = [0.0, 0.1];
    let (mut ll, mut g, mut h) = objective(records, theta, opts.ridge);
    let mut trace = vec![ll];
    let mut converged = g[0].abs().max(g[1].abs()) < opts.grad_tol;
    let mut iterations = 0;
    while !converged && iterations < opts.max_iter {
        iterations += 1;
        let Some(hi) = invert(h) else { break };
        let step = [
            hi[0][0] * g[0] + hi[0][1] * g[1],
            hi[1][0] * g[0] + hi[1][1] * g[1],
        ];
        // halve the Newton step until the objective does not drop beyond rounding
        let slack = 1e-12 * ll.abs().max(1.0);
        let mut t = 1.0;
        let mut accepted = None;
        for _ in 0..60 {
            let cand = [theta[0] + t * step[0], theta[1] + t * step[1]];
            let out = objective(records, cand, opts.ridge);
            if out.0 >= ll - slack {
                accepted = Some((cand, out));
                break;
            }
            t *= 0.5;
        }
        let Some((cand, (nll, ng, nh))) = accepted else {
            break;
        };
        let stalled = (0..2)
            .all(|i| (cand[i] - theta[i]).abs() <= 4.0 * f64::EPSILON * theta[i].abs().max(1.0));
        theta = cand;
        ll = nll;
        g = ng;
        h = nh;
        trace.push(ll);
        // a full step that no longer moves theta is a fixed point at machine precision
        converged = g[0].abs().max(g[1].abs()) < opts.grad_tol || (stalled && t == 1.0);
    }

    let covariance = invert(h).unwrap_or([[f64::INFINITY, 0.0], [0.0, f64::INFINITY]]);
    Ok((
        ParameterEstimate {
            theta0: theta[0],
            theta1: theta[1],
            r_min_hat: -theta[0] / theta[1],
            delta_hat: theta[1],
            converged,
            iterations,
            n_samples: records.len(),
            log_likelihood: ll,
            negative_slope: theta[1] <= 0.0,
            covariance,
        },
        trace,
    ))
}

pub fn fit_logistic(
    records: &[InteractionRecord],
    opts: &FitOptions,
) -> std::result::Result<ParameterEstimate, FitError> {
    fit_logistic_traced(records, opts).map(|(e, _)| e)
}

/// One row of the error-versus-history-length table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorRow {
    pub m: usize,
    pub mean_abs_err_rmin: f64,
    pub mean_abs_err_delta: f64,
    pub n_excluded: usize,
    pub n_fits: usize,
}

#[derive(Debug, Clone)]
pub struct LearningSetup<'a> {
    /// Users whose thresholds and slopes are to be recovered.
    pub population: &'a PopulationConfig,
    pub offer_law: &'a DistributionSpec,
    pub m_grid: &'a [usize],
    pub n_replicates: usize,
    pub fit: FitOptions,
    pub seed: u64,
}

/// Usable estimate, or `None` if the fit failed, did not converge or has a non-positive slope.
pub fn usable(
    fit: &std::result::Result<ParameterEstimate, FitError>,
) -> Option<&ParameterEstimate> {
    match fit {
        Ok(e) if e.converged && !e.negative_slope && e.r_min_hat.is_finite() => Some(e),
        _ => None,
    }
}

/// Mean absolute estimation errors per history length, skipping unusable fits.
pub fn error_vs_samples(setup: &LearningSetup) -> Result<Vec<ErrorRow>> {
    if setup.m_grid.is_empty() {
        return Err(ModelError::Config("m grid is empty".into()));
    }
    if setup.m_grid.contains(&0) {
        return Err(ModelError::Config("m grid values must be >= 1".into()));
    }
    if setup.n_replicates == 0 {
        return Err(ModelError::Config("n_replicates must be at least 1".into()));
    }
    let pop = generate_population(setup.population)?;
    let truth: Vec<(f64, f64)> = pop
        .iter()
        .map(|p| Ok((min_incentive(p, &setup.population.bounds)?, p.delta)))
        .collect::<Result<_>>()?;

    let mut rows = Vec::with_capacity(setup.m_grid.len());
    for &m in setup.m_grid {
        let (mut er, mut ed, mut used, mut excluded) = (0.0, 0.0, 0usize, 0usize);
        for rep in 0..setup.n_replicates {
            for (i, &(r_min, delta)) in truth.iter().enumerate() {
                let mut rng = substream(
                    setup.seed,
                    Domain::Decisions,
                    &[rep as u64, i as u64, m as u64],
                );
                let data = generate_interactions(r_min, delta, setup.offer_law, m, &mut rng)?;
                match usable(&fit_logistic(&data, &setup.fit)) {
                    Some(e) => {
                        er += (e.r_min_hat - r_min).abs();
                        ed += (e.delta_hat - delta).abs();
                        used += 1;
                    }
                    None => excluded += 1,
                }
            }
        }
        let n = used.max(1) as f64;
        rows.push(ErrorRow {
            m,
            mean_abs_err_rmin: if used == 0 { f64::NAN } else { er / n },
            mean_abs_err_delta: if used == 0 { f64::NAN } else { ed / n },
            n_excluded: excluded,
            n_fits: used + excluded,
        });
    }
    Ok(rows)
}

/// Least-squares slope of `ln y` on `ln x`.
pub fn log_log_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = lx.iter().map(|x| (x - mx).powi(2)).sum();
    sxy / sxx
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn rec(offer: f64, response: bool) -> InteractionRecord {
        InteractionRecord { offer, response }
    }

    fn data(
        r_min: f64,
        delta: f64,
        law: &DistributionSpec,
        m: usize,
        seed: u64,
    ) -> Vec<InteractionRecord> {
        let mut rng = substream(seed, Domain::Decisions, &[0]);
        generate_interactions(r_min, delta, law, m, &mut rng).unwrap()
    }

    fn users(seed: u64, n: usize) -> Vec<(f64, f64)> {
        let mut r = substream(seed, Domain::Population, &[0]);
        (0..n)
            .map(|_| (r.random_range(2.0..8.0), r.random_range(0.5..3.0)))
            .collect()
    }

    /// Mean absolute errors over usable fits, and the share of unusable ones.
    fn fit_users(
        truth: &[(f64, f64)],
        law: &DistributionSpec,
        m: usize,
        seed: u64,
    ) -> (f64, f64, f64) {
        let (mut er, mut ed, mut used) = (0.0, 0.0, 0usize);
        for (i, &(r_min, delta)) in truth.iter().enumerate() {
            let mut rng = substream(seed, Domain::Decisions, &[i as u64, m as u64]);
            let d = generate_interactions(r_min, delta, law, m, &mut rng).unwrap();
            if let Some(e) = usable(&fit_logistic(&d, &FitOptions::default())) {
                er += (e.r_min_hat - r_min).abs();
                ed += (e.delta_hat - delta).abs();
                used += 1;
            }
        }
        let u = used as f64;
        (er / u, ed / u, 1.0 - u / truth.len() as f64)
    }

    #[test]
    fn estimator_is_consistent() {
        let truth = users(5, 100);
        let law = DistributionSpec::uniform(0.0, 10.0);
        let (r10, d10, _) = fit_users(&truth, &law, 10, 6);
        let (rbig, dbig, skipped) = fit_users(&truth, &law, 10_000, 6);
        assert_eq!(skipped, 0.0);
        assert!(rbig < r10 / 10.0, "r_min error {rbig} vs {r10}");
        assert!(dbig < d10 / 10.0, "delta error {dbig} vs {d10}");
    }

    #[test]
    fn offers_away_from_the_threshold_are_unstable() {
        let truth = users(8, 100);
        let (_, _, covering) = fit_users(&truth, &DistributionSpec::uniform(0.0, 10.0), 20, 9);
        let (_, _, disjoint) = fit_users(&truth, &DistributionSpec::uniform(9.0, 10.0), 20, 9);
        assert!(
            covering < disjoint,
            "instability {covering} (covering) vs {disjoint} (disjoint)"
        );
    }

    #[test]
    fn saturated_histories() {
        let above = data(1.0, 1e4, &DistributionSpec::uniform(2.0, 3.0), 200, 1);
        assert!(above.iter().all(|r| r.response));
        let below = data(5.0, 1e4, &DistributionSpec::uniform(2.0, 3.0), 200, 1);
        assert!(below.iter().all(|r| !r.response));
    }

    #[test]
    fn half_acceptance_at_threshold() {
        let d = data(4.0, 3.0, &DistributionSpec::constant(4.0), 10_000, 2);
        let rate = d.iter().filter(|r| r.response).count() as f64 / 1e4;
        assert!((rate - 0.5).abs() < 0.015);
    }

    #[test]
    fn recovers_known_parameters() {
        let d = data(5.0, 2.0, &DistributionSpec::uniform(0.0, 10.0), 100_000, 3);
        let e = fit_logistic(&d, &FitOptions::default()).unwrap();
        assert!(e.converged);
        assert!((e.r_min_hat - 5.0).abs() < 0.1, "{}", e.r_min_hat);
        assert!((e.delta_hat - 2.0).abs() < 0.1, "{}", e.delta_hat);
    }

    #[test]
    fn separation_cases() {
        let ones = vec![rec(1.0, true), rec(2.0, true)];
        assert_eq!(
            fit_logistic(&ones, &FitOptions::default()),
            Err(FitError::Separated(SeparationDirection::AllAccepted))
        );
        let split = vec![rec(1.0, false), rec(2.0, false), rec(3.0, true)];
        assert_eq!(
            fit_logistic(&split, &FitOptions::default()),
            Err(FitError::Separated(SeparationDirection::Increasing))
        );
        let flip = vec![rec(1.0, true), rec(2.0, false)];
        assert_eq!(
            fit_logistic(&flip, &FitOptions::default()),
            Err(FitError::Separated(SeparationDirection::Decreasing))
        );
        let same = vec![rec(2.0, true), rec(2.0, false)];
        assert_eq!(
            fit_logistic(&same, &FitOptions::default()),
            Err(FitError::Degenerate)
        );
        assert_eq!(
            fit_logistic(&[], &FitOptions::default()),
            Err(FitError::Empty)
        );
        // a penalty keeps the estimate finite under separation
        let e = fit_logistic(
            &split,
            &FitOptions {
                ridge: 0.1,
                ..FitOptions::default()
            },
        )
        .unwrap();
        assert!(e.converged && e.theta1 > 0.0);
    }

    #[test]
    fn flipped_labels_negate_theta() {
        let d = data(5.0, 1.0, &DistributionSpec::uniform(0.0, 10.0), 2000, 4);
        let f: Vec<_> = d.iter().map(|r| rec(r.offer, !r.response)).collect();
        let a = fit_logistic(&d, &FitOptions::default()).unwrap();
        let b = fit_logistic(&f, &FitOptions::default()).unwrap();
        assert_relative_eq!(a.theta0, -b.theta0, max_relative = 1e-6);
        assert_relative_eq!(a.theta1, -b.theta1, max_relative = 1e-6);
        assert_relative_eq!(a.r_min_hat, b.r_min_hat, max_relative = 1e-6);
        assert!(b.negative_slope && !a.negative_slope);
    }

    #[test]
    fn likelihood_never_drops() {
        for seed in 0..20 {
            let d = data(3.0, 2.5, &DistributionSpec::uniform(0.0, 10.0), 60, seed);
            if let Ok((_, trace)) = fit_logistic_traced(&d, &FitOptions::default()) {
                assert!(trace
                    .windows(2)
                    .all(|w| w[1] >= w[0] - 1e-12 * w[0].abs().max(1.0)));
            }
        }
    }

    #[test]
    fn slope_of_power_law() {
        let xs = [10.0, 20.0, 40.0, 80.0];
        let ys: Vec<f64> = xs.iter().map(|x: &f64| 3.0 * x.powf(-0.5)).collect();
        assert_relative_eq!(log_log_slope(&xs, &ys), -0.5, epsilon = 1e-12);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(64))]
            #[test]
            fn separable_iff_cut_exists(offers in proptest::collection::vec(0.0f64..10.0, 2..20), cut in 0.0f64..10.0) {
                let d: Vec<_> = offers.iter().map(|&o| rec(o, o > cut)).collect();
                prop_assert!(separation(&d).is_some());
            }

            #[test]
            fn gradient_vanishes_at_estimate(seed in 0u64..1000, r_min in 2.0f64..8.0, delta in 0.5f64..3.0) {
                let d = data(r_min, delta, &DistributionSpec::uniform(0.0, 10.0), 200, seed);
                if let Ok(e) = fit_logistic(&d, &FitOptions::default()) {
                    let (_, g, _) = objective(&d, [e.theta0, e.theta1], 0.0);
                    prop_assert!(e.converged);
                    prop_assert!(g[0].abs().max(g[1].abs()) < 1e-8);
                }
            }
        }
    }
}
