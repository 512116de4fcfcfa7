//! Altruistic users: a composite utility mixing private QoE with the
//! population's mean utility, and the thresholds it implies.

use serde::{Deserialize, Serialize};

use crate::error::{ModelError, Result};
use crate::model::{delta_utility_raw, qoe_unclipped, utility, BitrateBounds, UserProfile};

/// Mean normalized utility of all users at bitrate `x`.
pub fn social_wellbeing(profiles: &[UserProfile], x: f64, bounds: &BitrateBounds) -> Result<f64> {
    if profiles.is_empty() {
        return Err(ModelError::EmptyPopulation);
    }
    let mut sum = 0.0;
    for p in profiles {
        sum += utility(x, p.gamma, bounds)?;
    }
    Ok(sum / profiles.len() as f64)
}

fn raw_utility(x: f64, gamma: f64, bounds: &BitrateBounds) -> Result<f64> {
    Ok(qoe_unclipped(x, gamma, bounds)? / 5.0)
}

/// Composite utility gap of user `n` when every user moves from its high to
/// its low bitrate: `beta * (private gap) + (1 - beta) * (social gap)`.
///
/// Utilities are left unclipped so the gaps agree with the closed-form loss.
pub fn altruistic_threshold(
    profile: &UserProfile,
    profiles: &[UserProfile],
    bounds: &BitrateBounds,
) -> Result<f64> {
    if profiles.is_empty() {
        return Err(ModelError::EmptyPopulation);
    }
    profile.validate(bounds)?;
    let private = raw_utility(profile.x_high, profile.gamma, bounds)?
        - raw_utility(profile.x_low, profile.gamma, bounds)?;
    let mut sw_high = 0.0;
    let mut sw_low = 0.0;
    for p in profiles {
        p.validate(bounds)?;
        sw_high += raw_utility(p.x_high, p.gamma, bounds)?;
        sw_low += raw_utility(p.x_low, p.gamma, bounds)?;
    }
    let n = profiles.len() as f64;
    let social = (sw_high - sw_low) / n;
    Ok(profile.beta * private + (1.0 - profile.beta) * social)
}

/// Threshold of an altruistic user after subtracting its savings, floored at zero.
pub fn altruistic_min_incentive(
    profile: &UserProfile,
    profiles: &[UserProfile],
    bounds: &BitrateBounds,
) -> Result<f64> {
    Ok((altruistic_threshold(profile, profiles, bounds)? - profile.savings).max(0.0))
}

/// `beta * du_n + (1 - beta) * mean_du`.
pub fn heterogeneous_threshold(beta: f64, du_n: f64, mean_du: f64) -> f64 {
    beta * du_n + (1.0 - beta) * mean_du
}

pub fn mean_delta_utility(profiles: &[UserProfile], bounds: &BitrateBounds) -> Result<f64> {
    if profiles.is_empty() {
        return Err(ModelError::EmptyPopulation);
    }
    let mut s = 0.0;
    for p in profiles {
        s += delta_utility_raw(p.x_high, p.x_low, p.gamma, bounds)?;
    }
    Ok(s / profiles.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TwoGroup {
    L,
    M,
}

/// Sizes of the two groups; `l + m` must equal `n`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroupSizes {
    pub l: usize,
    pub m: usize,
    pub n: usize,
}

/// Threshold for a member of `group` when each group shares one utility loss.
pub fn two_group_min_incentive(
    group: TwoGroup,
    beta: f64,
    du_l: f64,
    du_m: f64,
    sizes: GroupSizes,
) -> Result<f64> {
    if sizes.l + sizes.m != sizes.n || sizes.n == 0 {
        return Err(ModelError::Domain(format!(
            "group sizes {} + {} do not add up to {}",
            sizes.l, sizes.m, sizes.n
        )));
    }
    if !(0.0..=1.0).contains(&beta) {
        return Err(ModelError::Domain(format!("beta {beta} outside [0, 1]")));
    }
    if du_l < 0.0 || du_m < 0.0 {
        return Err(ModelError::Domain("utility losses must be >= 0".into()));
    }
    let fl = sizes.l as f64 / sizes.n as f64;
    let fm = sizes.m as f64 / sizes.n as f64;
    Ok(match group {
        TwoGroup::L => (beta + (1.0 - beta) * fl) * du_l + (1.0 - beta) * fm * du_m,
        TwoGroup::M => (1.0 - beta) * fl * du_l + (beta + (1.0 - beta) * fm) * du_m,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BetaCurve {
    pub rows: Vec<(f64, f64)>,
    /// Grid value with the smallest threshold (ties to the larger beta).
    pub minimizer: f64,
    /// Sign of `du_n - mean du`: -1, 0 or 1.
    pub slope_sign: i8,
}

/// Threshold of `profile` as its altruism weight runs over `beta_grid`.
pub fn beta_response_curve(
    profile: &UserProfile,
    profiles: &[UserProfile],
    beta_grid: &[f64],
    bounds: &BitrateBounds,
) -> Result<BetaCurve> {
    if beta_grid.is_empty() {
        return Err(ModelError::Config("beta grid is empty".into()));
    }
    if let Some(b) = beta_grid.iter().find(|b| !(0.0..=1.0).contains(*b)) {
        return Err(ModelError::Domain(format!("beta {b} outside [0, 1]")));
    }
    let mut rows = Vec::with_capacity(beta_grid.len());
    for &beta in beta_grid {
        let p = UserProfile { beta, ..*profile };
        rows.push((beta, altruistic_min_incentive(&p, profiles, bounds)?));
    }
    let du = delta_utility_raw(profile.x_high, profile.x_low, profile.gamma, bounds)?;
    let gap = du - mean_delta_utility(profiles, bounds)?;
    let slope_sign = if gap.abs() <= 1e-12 * du.abs().max(1.0) {
        0
    } else if gap > 0.0 {
        1
    } else {
        -1
    };
    let mut best = rows[0];
    for &(b, r) in &rows[1..] {
        if r < best.1 || (r == best.1 && b > best.0) {
            best = (b, r);
        }
    }
    Ok(BetaCurve {
        rows,
        minimizer: best.0,
        slope_sign,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn b() -> BitrateBounds {
        BitrateBounds::default()
    }

    fn user(id: usize, xh: f64, xl: f64, gamma: f64, beta: f64) -> UserProfile {
        UserProfile {
            id,
            x_high: xh,
            x_low: xl,
            gamma,
            delta: 1.0,
            beta,
            savings: 0.0,
        }
    }

    fn du(p: &UserProfile) -> f64 {
        delta_utility_raw(p.x_high, p.x_low, p.gamma, &b()).unwrap()
    }

    #[test]
    fn wellbeing_basics() {
        let same = vec![user(0, 5000.0, 300.0, 1.0, 1.0); 3];
        assert_relative_eq!(
            social_wellbeing(&same, 1200.0, &b()).unwrap(),
            utility(1200.0, 1.0, &b()).unwrap()
        );
        let pair = [
            user(0, 5000.0, 300.0, 1.0, 1.0),
            user(1, 5000.0, 300.0, 3.0, 1.0),
        ];
        let (u0, u1) = (
            utility(1200.0, 1.0, &b()).unwrap(),
            utility(1200.0, 3.0, &b()).unwrap(),
        );
        let sw = social_wellbeing(&pair, 1200.0, &b()).unwrap();
        assert_relative_eq!(sw, (u0 + u1) / 2.0, epsilon = 1e-12);
        assert!(u0.min(u1) <= sw && sw <= u0.max(u1));
        assert!(matches!(
            social_wellbeing(&[], 300.0, &b()),
            Err(ModelError::EmptyPopulation)
        ));
    }

    #[test]
    fn beta_extremes() {
        let pop = vec![
            user(0, 5000.0, 600.0, 1.15, 1.0),
            user(1, 2000.0, 1500.0, 1.3, 1.0),
            user(2, 3000.0, 300.0, 1.0, 1.0),
        ];
        let mean = pop.iter().map(du).sum::<f64>() / 3.0;
        let p = pop[0];
        assert_relative_eq!(
            altruistic_threshold(&p, &pop, &b()).unwrap(),
            du(&p),
            epsilon = 1e-14
        );
        let p0 = UserProfile { beta: 0.0, ..p };
        assert_relative_eq!(
            altruistic_threshold(&p0, &pop, &b()).unwrap(),
            mean,
            epsilon = 1e-14
        );
    }

    #[test]
    fn convex_combination_example() {
        assert_relative_eq!(heterogeneous_threshold(0.5, 0.4, 0.2), 0.3, epsilon = 1e-15);
    }

    #[test]
    fn two_group_cases() {
        let s = GroupSizes { l: 3, m: 7, n: 10 };
        assert_relative_eq!(
            two_group_min_incentive(TwoGroup::L, 1.0, 0.4, 0.1, s).unwrap(),
            0.4
        );
        assert_relative_eq!(
            two_group_min_incentive(TwoGroup::M, 1.0, 0.4, 0.1, s).unwrap(),
            0.1
        );
        let all_l = GroupSizes { l: 10, m: 0, n: 10 };
        assert_relative_eq!(
            two_group_min_incentive(TwoGroup::L, 0.3, 0.4, 0.9, all_l).unwrap(),
            0.4,
            epsilon = 1e-15
        );
        let half = GroupSizes { l: 5, m: 5, n: 10 };
        assert_relative_eq!(
            two_group_min_incentive(TwoGroup::L, 0.0, 0.4, 0.1, half).unwrap(),
            0.25,
            epsilon = 1e-15
        );
        assert!(two_group_min_incentive(
            TwoGroup::L,
            0.5,
            0.4,
            0.1,
            GroupSizes { l: 3, m: 3, n: 10 }
        )
        .is_err());
    }

    #[test]
    fn beta_curve_directions() {
        let pop = vec![
            user(0, 5000.0, 300.0, 1.15, 1.0),
            user(1, 2000.0, 1500.0, 1.15, 1.0),
        ];
        let grid: Vec<f64> = (0..=10).map(|i| i as f64 / 10.0).collect();
        let big = beta_response_curve(&pop[0], &pop, &grid, &b()).unwrap();
        assert_eq!((big.slope_sign, big.minimizer), (1, 0.0));
        assert!(big.rows.windows(2).all(|w| w[1].1 > w[0].1));
        let small = beta_response_curve(&pop[1], &pop, &grid, &b()).unwrap();
        assert_eq!((small.slope_sign, small.minimizer), (-1, 1.0));
        assert!(small.rows.windows(2).all(|w| w[1].1 < w[0].1));
        let same = vec![user(0, 4000.0, 600.0, 1.2, 1.0); 4];
        let flat = beta_response_curve(&same[0], &same, &grid, &b()).unwrap();
        assert_eq!(flat.slope_sign, 0);
        assert!(flat
            .rows
            .iter()
            .all(|r| (r.1 - flat.rows[0].1).abs() < 1e-15));
    }

    mod props {
        use super::*;
        use proptest::collection::vec;
        use proptest::prelude::*;

        fn population() -> impl Strategy<Value = Vec<UserProfile>> {
            vec(
                (
                    2000.0f64..5000.0,
                    300.0f64..1900.0,
                    1.0f64..3.0,
                    0.0f64..=1.0,
                ),
                1..50,
            )
            .prop_map(|v| {
                v.into_iter()
                    .enumerate()
                    .map(|(i, (xh, xl, g, bt))| user(i, xh, xl, g, bt))
                    .collect()
            })
        }

        proptest! {
            #[test]
            fn direct_equals_closed_form(pop in population()) {
                let mean = mean_delta_utility(&pop, &b()).unwrap();
                for p in &pop {
                    let direct = altruistic_threshold(p, &pop, &b()).unwrap();
                    let closed = heterogeneous_threshold(p.beta, du(p), mean);
                    prop_assert!((direct - closed).abs() < 1e-12);
                    prop_assert!(direct >= du(p).min(mean) - 1e-12 && direct <= du(p).max(mean) + 1e-12);
                }
            }

            #[test]
            fn affine_in_beta(pop in population(), beta in 0.0f64..=1.0) {
                let mean = mean_delta_utility(&pop, &b()).unwrap();
                let p = UserProfile { beta, ..pop[0] };
                let r = altruistic_threshold(&p, &pop, &b()).unwrap();
                let r0 = altruistic_threshold(&UserProfile { beta: 0.0, ..p }, &pop, &b()).unwrap();
                prop_assert!((r - (r0 + beta * (du(&p) - mean))).abs() < 1e-12);
            }

            #[test]
            fn two_group_matches_direct(l in 0usize..=25, m in 0usize..=25, beta in 0.0f64..=1.0,
                                        a in (2000.0f64..5000.0, 300.0f64..1900.0, 1.0f64..3.0),
                                        c in (2000.0f64..5000.0, 300.0f64..1900.0, 1.0f64..3.0)) {
                prop_assume!(l + m > 0);
                let mut pop: Vec<UserProfile> = (0..l).map(|i| user(i, a.0, a.1, a.2, beta)).collect();
                pop.extend((0..m).map(|i| user(l + i, c.0, c.1, c.2, beta)));
                let sizes = GroupSizes { l, m, n: l + m };
                let (dl, dm) = (du(&pop[0]), du(pop.last().unwrap()));
                if l > 0 {
                    let direct = altruistic_threshold(&pop[0], &pop, &b()).unwrap();
                    prop_assert!((direct - two_group_min_incentive(TwoGroup::L, beta, dl, dm, sizes).unwrap()).abs() < 1e-12);
                }
                if m > 0 {
                    let direct = altruistic_threshold(pop.last().unwrap(), &pop, &b()).unwrap();
                    prop_assert!((direct - two_group_min_incentive(TwoGroup::M, beta, dl, dm, sizes).unwrap()).abs() < 1e-12);
                }
            }

            #[test]
            fn greener_population_needs_more(pop in population(), dg in 0.01f64..1.0) {
                let greener: Vec<UserProfile> = pop.iter().map(|p| UserProfile { gamma: p.gamma + dg, ..*p }).collect();
                for (p, q) in pop.iter().zip(&greener) {
                    prop_assert!(altruistic_threshold(q, &greener, &b()).unwrap() > altruistic_threshold(p, &pop, &b()).unwrap());
                }
            }
        }
    }
}
