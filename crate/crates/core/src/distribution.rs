//! Sampling laws for incentives and user parameters.
//!
//! Every law samples through its quantile function. Feeding the same uniform
//! variate to two laws couples them monotonically, which keeps sweep curves
//! smooth across grid points.

use rand::distr::Open01;
use rand::Rng;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{ModelError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DistributionSpec {
    Uniform {
        a: f64,
        b: f64,
    },
    Normal {
        mu: f64,
        sigma_sq: f64,
    },
    /// Finite support. Missing weights mean equal weights.
    Discrete {
        values: Vec<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        weights: Option<Vec<f64>>,
    },
    Constant {
        v: f64,
    },
}

fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(ModelError::InvalidSpec(msg.into()))
}

impl DistributionSpec {
    pub fn uniform(a: f64, b: f64) -> Self {
        Self::Uniform { a, b }
    }

    pub fn normal(mu: f64, sigma_sq: f64) -> Self {
        Self::Normal { mu, sigma_sq }
    }

    pub fn constant(v: f64) -> Self {
        Self::Constant { v }
    }

    /// Equal-weight law over `values`.
    pub fn discrete_uniform(values: &[f64]) -> Self {
        Self::Discrete {
            values: values.to_vec(),
            weights: None,
        }
    }

    /// Swaps an inverted uniform interval into `(min, max)`; returns a note if it did.
    pub fn normalize(&mut self) -> Option<String> {
        if let Self::Uniform { a, b } = self {
            if *a > *b {
                let note = format!("uniform interval [{a}, {b}] reordered to [{b}, {a}]");
                std::mem::swap(a, b);
                return Some(note);
            }
        }
        None
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Self::Uniform { a, b } => {
                if !(a.is_finite() && b.is_finite()) {
                    return invalid("uniform bounds must be finite");
                }
                if a > b {
                    return invalid(format!("uniform needs a <= b, got a={a}, b={b}"));
                }
            }
            Self::Normal { mu, sigma_sq } => {
                if !(mu.is_finite() && sigma_sq.is_finite()) {
                    return invalid("normal parameters must be finite");
                }
                if *sigma_sq < 0.0 {
                    return invalid(format!("normal variance must be >= 0, got {sigma_sq}"));
                }
            }
            Self::Discrete { values, weights } => {
                if values.is_empty() {
                    return invalid("discrete law needs at least one value");
                }
                if values.iter().any(|v| !v.is_finite()) {
                    return invalid("discrete values must be finite");
                }
                if let Some(w) = weights {
                    if w.len() != values.len() {
                        return invalid(format!(
                            "discrete law has {} values but {} weights",
                            values.len(),
                            w.len()
                        ));
                    }
                    if w.iter().any(|x| !(x.is_finite() && *x >= 0.0)) {
                        return invalid("discrete weights must be non-negative");
                    }
                    let total: f64 = w.iter().sum();
                    if (total - 1.0).abs() > 1e-9 {
                        return invalid(format!("discrete weights sum to {total}, not 1"));
                    }
                }
            }
            Self::Constant { v } => {
                if !v.is_finite() {
                    return invalid("constant must be finite");
                }
            }
        }
        Ok(())
    }

    /// Inverse CDF at `u` in (0, 1).
    pub fn quantile(&self, u: f64) -> f64 {
        match self {
            Self::Uniform { a, b } => a + (b - a) * u,
            Self::Normal { mu, sigma_sq } => {
                if *sigma_sq == 0.0 {
                    *mu
                } else {
                    let z = Normal::standard().inverse_cdf(u);
                    mu + sigma_sq.sqrt() * z
                }
            }
            Self::Discrete { values, weights } => {
                let n = values.len();
                match weights {
                    None => values[((u * n as f64) as usize).min(n - 1)],
                    Some(w) => {
                        let mut acc = 0.0;
                        for (v, wi) in values.iter().zip(w) {
                            acc += wi;
                            if u < acc {
                                return *v;
                            }
                        }
                        // rounding left u above the last cumulative weight
                        values[w.iter().rposition(|x| *x > 0.0).unwrap_or(n - 1)]
                    }
                }
            }
            Self::Constant { v } => *v,
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        self.quantile(rng.sample(Open01))
    }

    pub fn mean(&self) -> f64 {
        match self {
            Self::Uniform { a, b } => 0.5 * (a + b),
            Self::Normal { mu, .. } => *mu,
            Self::Discrete { values, weights } => match weights {
                None => values.iter().sum::<f64>() / values.len() as f64,
                Some(w) => values.iter().zip(w).map(|(v, p)| v * p).sum(),
            },
            Self::Constant { v } => *v,
        }
    }

    pub fn variance(&self) -> f64 {
        match self {
            Self::Uniform { a, b } => (b - a).powi(2) / 12.0,
            Self::Normal { sigma_sq, .. } => *sigma_sq,
            Self::Discrete { values, weights } => {
                let m = self.mean();
                let n = values.len() as f64;
                match weights {
                    None => values.iter().map(|v| (v - m).powi(2)).sum::<f64>() / n,
                    Some(w) => values.iter().zip(w).map(|(v, p)| p * (v - m).powi(2)).sum(),
                }
            }
            Self::Constant { .. } => 0.0,
        }
    }
}

/// Free-standing form of [`DistributionSpec::sample`] with validation.
pub fn sample_from<R: Rng + ?Sized>(spec: &DistributionSpec, rng: &mut R) -> Result<f64> {
    spec.validate()?;
    Ok(spec.sample(rng))
}

/// A list of grid values, given explicitly or as an evenly spaced range.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Grid {
    List(Vec<f64>),
    Range { start: f64, stop: f64, n: usize },
}

impl Grid {
    pub fn linspace(start: f64, stop: f64, n: usize) -> Self {
        Self::Range { start, stop, n }
    }

    pub fn values(&self) -> Vec<f64> {
        match self {
            Self::List(v) => v.clone(),
            Self::Range { start, stop, n } => match n {
                0 => Vec::new(),
                1 => vec![*start],
                _ => (0..*n)
                    .map(|i| start + (stop - start) * i as f64 / (*n - 1) as f64)
                    .collect(),
            },
        }
    }

    pub fn validate(&self) -> Result<()> {
        let v = self.values();
        if v.is_empty() {
            return invalid("grid is empty");
        }
        if v.iter().any(|x| !x.is_finite()) {
            return invalid("grid values must be finite");
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stream::{substream, Domain};

    fn moments(spec: &DistributionSpec, n: usize, seed: u64) -> (f64, f64) {
        let mut rng = substream(seed, Domain::Offers, &[0]);
        let xs: Vec<f64> = (0..n).map(|_| spec.sample(&mut rng)).collect();
        let m = xs.iter().sum::<f64>() / n as f64;
        let v = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1) as f64;
        (m, v)
    }

    #[test]
    fn degenerate_laws() {
        let mut rng = substream(0, Domain::Offers, &[0]);
        assert_eq!(
            sample_from(&DistributionSpec::constant(0.04), &mut rng).unwrap(),
            0.04
        );
        assert_eq!(
            sample_from(&DistributionSpec::uniform(5.0, 5.0), &mut rng).unwrap(),
            5.0
        );
        assert_eq!(DistributionSpec::normal(3.0, 0.0).sample(&mut rng), 3.0);
    }

    #[test]
    fn wide_normal_moments() {
        let (m, v) = moments(&DistributionSpec::normal(0.0, 100.0), 100_000, 11);
        assert!(m.abs() < 0.15, "mean {m}");
        assert!((v - 100.0).abs() < 5.0, "variance {v}");
    }

    #[test]
    fn uniform_and_discrete_moments() {
        let n = 100_000;
        let u = DistributionSpec::uniform(2.0, 8.0);
        let (m, v) = moments(&u, n, 3);
        assert!((m - 5.0).abs() < 3.0 * (3.0f64 / n as f64).sqrt());
        assert!((v - 3.0).abs() < 0.1);
        let d = DistributionSpec::discrete_uniform(&[2000.0, 3000.0, 4000.0, 5000.0]);
        let (m, _) = moments(&d, n, 4);
        assert!((m - 3500.0).abs() < 3.0 * (d.variance() / n as f64).sqrt());
    }

    #[test]
    fn weighted_discrete_quantile() {
        let d = DistributionSpec::Discrete {
            values: vec![1.0, 2.0, 3.0],
            weights: Some(vec![0.2, 0.0, 0.8]),
        };
        d.validate().unwrap();
        assert_eq!(d.quantile(0.1), 1.0);
        assert_eq!(d.quantile(0.2), 3.0);
        assert_eq!(d.quantile(1.0 - 1e-17), 3.0);
        assert!((d.mean() - 2.6).abs() < 1e-12);
    }

    #[test]
    fn validation_catches_bad_laws() {
        assert!(DistributionSpec::uniform(5.0, 4.0).validate().is_err());
        assert!(DistributionSpec::normal(0.0, -1.0).validate().is_err());
        assert!(DistributionSpec::discrete_uniform(&[]).validate().is_err());
        let bad = DistributionSpec::Discrete {
            values: vec![1.0, 2.0],
            weights: Some(vec![0.5, 0.6]),
        };
        assert!(bad.validate().is_err());
        assert!(DistributionSpec::constant(f64::INFINITY)
            .validate()
            .is_err());
    }

    #[test]
    fn inverted_uniform_is_reordered() {
        let mut s = DistributionSpec::uniform(5.0, 4.0);
        assert!(s.normalize().is_some());
        assert_eq!(s, DistributionSpec::uniform(4.0, 5.0));
        assert!(s.normalize().is_none());
    }

    #[test]
    fn serde_shape() {
        let s: DistributionSpec =
            serde_json::from_str(r#"{"kind":"normal","mu":30,"sigma_sq":25}"#).unwrap();
        assert_eq!(s, DistributionSpec::normal(30.0, 25.0));
        let g: Grid = serde_json::from_str(r#"{"start":0,"stop":1,"n":5}"#).unwrap();
        assert_eq!(g.values(), vec![0.0, 0.25, 0.5, 0.75, 1.0]);
        let g: Grid = serde_json::from_str("[1, 2]").unwrap();
        assert_eq!(g.values(), vec![1.0, 2.0]);
        assert!(serde_json::from_str::<DistributionSpec>(r#"{"kind":"beta","a":1}"#).is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn quantiles_are_monotone(mu in -10.0f64..10.0, s2 in 0.0f64..50.0, u in 0.001f64..0.998, du in 0.0f64..0.001) {
                let s = DistributionSpec::normal(mu, s2);
                prop_assert!(s.quantile(u + du) >= s.quantile(u));
                let t = DistributionSpec::uniform(mu, mu + s2);
                prop_assert!(t.quantile(u + du) >= t.quantile(u));
            }
        }
    }
}
