//! Seeded synthetic user populations.
//!
//! Each attribute of each user has its own sub-stream keyed by
//! `(seed, user id, attribute)`. Two configs that differ in one law therefore
//! draw identical values for every other attribute, and a changed law sees the
//! same uniform variates (quantile coupling).

use std::io::{Read, Write};

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::distribution::DistributionSpec;
use crate::education::gamma_for_target;
use crate::error::{ModelError, Result};
use crate::model::{delta_utility_raw, min_incentive, BitrateBounds, UserProfile};
use crate::stream::{substream, Domain};

const MAX_ATTEMPTS: usize = 1000;

/// Which parameter absorbs an imposed threshold.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Lever {
    /// `s = dU - r_min`; may go negative.
    #[default]
    Savings,
    /// Keep the sampled `s` and solve the greenness factor instead.
    Gamma,
}

/// How each user's minimum acceptable incentive comes about.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "mode", rename_all = "snake_case", deny_unknown_fields)]
pub enum ThresholdModel {
    /// From bitrates, gamma and savings.
    #[default]
    Derived,
    /// Drawn from `law`; `lever` is back-solved so the model reproduces it.
    Law {
        law: DistributionSpec,
        #[serde(default)]
        lever: Lever,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PopulationConfig {
    pub n_users: usize,
    pub high_bitrate: DistributionSpec,
    pub low_bitrate: DistributionSpec,
    pub gamma: DistributionSpec,
    pub delta: DistributionSpec,
    pub beta: DistributionSpec,
    pub savings: DistributionSpec,
    pub bounds: BitrateBounds,
    pub threshold: ThresholdModel,
    /// Filled from the run's master seed.
    #[serde(skip)]
    pub seed: u64,
}

impl Default for PopulationConfig {
    fn default() -> Self {
        Self {
            n_users: 1000,
            high_bitrate: DistributionSpec::discrete_uniform(&[2000.0, 3000.0, 4000.0, 5000.0]),
            low_bitrate: DistributionSpec::discrete_uniform(&[300.0, 600.0, 1200.0, 1500.0]),
            gamma: DistributionSpec::constant(1.15),
            delta: DistributionSpec::constant(1.2),
            beta: DistributionSpec::constant(1.0),
            savings: DistributionSpec::constant(0.0),
            bounds: BitrateBounds::default(),
            threshold: ThresholdModel::Derived,
            seed: 0,
        }
    }
}

impl PopulationConfig {
    /// Every problem found, as `(field, message)` pairs.
    pub fn problems(&self) -> Vec<(String, String)> {
        let mut out = Vec::new();
        if self.n_users == 0 {
            out.push(("n_users".into(), "must be at least 1".into()));
        }
        if let Err(e) = self.bounds.validate() {
            out.push(("bounds".into(), e.to_string()));
        }
        let specs = [
            ("high_bitrate", &self.high_bitrate),
            ("low_bitrate", &self.low_bitrate),
            ("gamma", &self.gamma),
            ("delta", &self.delta),
            ("beta", &self.beta),
            ("savings", &self.savings),
        ];
        for (name, s) in specs {
            if let Err(e) = s.validate() {
                out.push((name.into(), e.to_string()));
            }
        }
        if let ThresholdModel::Law { law, .. } = &self.threshold {
            if let Err(e) = law.validate() {
                out.push(("threshold.law".into(), e.to_string()));
            }
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        match self.problems().into_iter().next() {
            None => Ok(()),
            Some((f, m)) => Err(ModelError::Config(format!("{f}: {m}"))),
        }
    }
}

#[derive(Clone, Copy)]
enum Attr {
    High = 0,
    Low = 1,
    Gamma = 2,
    Delta = 3,
    Beta = 4,
    Savings = 5,
    Threshold = 6,
}

fn attr_stream(seed: u64, id: usize, attr: Attr, layer: u64) -> ChaCha8Rng {
    substream(seed, Domain::Population, &[id as u64, attr as u64, layer])
}

/// Draws from `spec` until `ok` holds.
fn draw_until(
    spec: &DistributionSpec,
    rng: &mut ChaCha8Rng,
    what: &str,
    ok: impl Fn(f64) -> bool,
) -> Result<f64> {
    for _ in 0..MAX_ATTEMPTS {
        let v = spec.sample(rng);
        if ok(v) {
            return Ok(v);
        }
    }
    Err(ModelError::Config(format!(
        "{what}: no admissible value after {MAX_ATTEMPTS} draws from {spec:?}"
    )))
}

fn gamma_ok(bounds: BitrateBounds) -> impl Fn(f64) -> bool {
    move |g| g >= 1.0 && g * bounds.x_min < bounds.x_max
}

/// Sets the user's savings (or gamma) so that its threshold equals `r_target`.
fn impose_threshold(
    p: &mut UserProfile,
    r_target: f64,
    lever: Lever,
    bounds: &BitrateBounds,
) -> Result<bool> {
    match lever {
        Lever::Savings => {
            p.savings = delta_utility_raw(p.x_high, p.x_low, p.gamma, bounds)? - r_target;
            Ok(true)
        }
        Lever::Gamma => {
            if r_target + p.savings <= 0.0 {
                return Ok(false);
            }
            let sol = gamma_for_target(p.x_high, p.x_low, p.savings, r_target, bounds)?;
            if !sol.is_admissible() {
                return Ok(false);
            }
            p.gamma = sol.gamma;
            Ok(true)
        }
    }
}

fn draw_threshold(
    p: &mut UserProfile,
    law: &DistributionSpec,
    lever: Lever,
    rng: &mut ChaCha8Rng,
    bounds: &BitrateBounds,
) -> Result<()> {
    for _ in 0..MAX_ATTEMPTS {
        let r = law.sample(rng);
        if r >= 0.0 && impose_threshold(p, r, lever, bounds)? {
            return Ok(());
        }
    }
    Err(ModelError::Config(format!(
        "user {}: threshold law {law:?} gives no admissible value after {MAX_ATTEMPTS} draws",
        p.id
    )))
}

/// Draws user `id` from `config`.
pub fn generate_user(config: &PopulationConfig, id: usize) -> Result<UserProfile> {
    let b = config.bounds;
    let seed = config.seed;
    let mut sh = attr_stream(seed, id, Attr::High, 0);
    let mut sl = attr_stream(seed, id, Attr::Low, 0);
    let mut pair = None;
    for _ in 0..MAX_ATTEMPTS {
        let xh = config.high_bitrate.sample(&mut sh);
        let xl = config.low_bitrate.sample(&mut sl);
        if b.x_min <= xl && xl < xh && xh <= b.x_max {
            pair = Some((xh, xl));
            break;
        }
    }
    let (x_high, x_low) = pair.ok_or_else(|| {
        ModelError::Config(format!(
            "user {id}: bitrate laws give no pair with x_min <= x_low < x_high <= x_max"
        ))
    })?;

    let gamma = draw_until(
        &config.gamma,
        &mut attr_stream(seed, id, Attr::Gamma, 0),
        "gamma",
        gamma_ok(b),
    )?;
    let delta = draw_until(
        &config.delta,
        &mut attr_stream(seed, id, Attr::Delta, 0),
        "delta",
        |v| v > 0.0,
    )?;
    let beta = draw_until(
        &config.beta,
        &mut attr_stream(seed, id, Attr::Beta, 0),
        "beta",
        |v| (0.0..=1.0).contains(&v),
    )?;
    let savings = draw_until(
        &config.savings,
        &mut attr_stream(seed, id, Attr::Savings, 0),
        "savings",
        |v| v >= 0.0,
    )?;

    let mut p = UserProfile {
        id,
        x_high,
        x_low,
        gamma,
        delta,
        beta,
        savings,
    };
    if let ThresholdModel::Law { law, lever } = &config.threshold {
        let mut rng = attr_stream(seed, id, Attr::Threshold, 0);
        draw_threshold(&mut p, law, *lever, &mut rng, &b)?;
    }
    p.validate(&b)?;
    Ok(p)
}

/// `config.n_users` profiles ordered by id.
pub fn generate_population(config: &PopulationConfig) -> Result<Vec<UserProfile>> {
    config.validate()?;
    (0..config.n_users)
        .map(|id| generate_user(config, id))
        .collect()
}

/// Per-group replacement laws. Unset fields keep the user's current value.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GroupOverrides {
    pub gamma: Option<DistributionSpec>,
    pub delta: Option<DistributionSpec>,
    pub beta: Option<DistributionSpec>,
    pub savings: Option<DistributionSpec>,
    pub r_min: Option<DistributionSpec>,
}

impl GroupOverrides {
    pub fn r_min(law: DistributionSpec) -> Self {
        Self {
            r_min: Some(law),
            ..Self::default()
        }
    }

    pub fn problems(&self) -> Vec<(String, String)> {
        let fields = [
            ("gamma", &self.gamma),
            ("delta", &self.delta),
            ("beta", &self.beta),
            ("savings", &self.savings),
            ("r_min", &self.r_min),
        ];
        fields
            .into_iter()
            .filter_map(|(n, s)| {
                s.as_ref()
                    .and_then(|s| s.validate().err())
                    .map(|e| (n.to_string(), e.to_string()))
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Group {
    A,
    B,
}

/// A population split into a leading group A of size `k` and the rest, B.
#[derive(Debug, Clone, PartialEq)]
pub struct Partition {
    pub profiles: Vec<UserProfile>,
    pub labels: Vec<Group>,
}

impl Partition {
    pub fn members(&self, g: Group) -> impl Iterator<Item = &UserProfile> {
        self.profiles
            .iter()
            .zip(&self.labels)
            .filter(move |(_, l)| **l == g)
            .map(|(p, _)| p)
    }
}

fn apply_overrides(
    p: &mut UserProfile,
    ov: &GroupOverrides,
    bounds: &BitrateBounds,
    seed: u64,
    layer: u64,
) -> Result<()> {
    let id = p.id;
    if let Some(s) = &ov.gamma {
        p.gamma = draw_until(
            s,
            &mut attr_stream(seed, id, Attr::Gamma, layer),
            "gamma",
            gamma_ok(*bounds),
        )?;
    }
    if let Some(s) = &ov.delta {
        p.delta = draw_until(
            s,
            &mut attr_stream(seed, id, Attr::Delta, layer),
            "delta",
            |v| v > 0.0,
        )?;
    }
    if let Some(s) = &ov.beta {
        p.beta = draw_until(
            s,
            &mut attr_stream(seed, id, Attr::Beta, layer),
            "beta",
            |v| (0.0..=1.0).contains(&v),
        )?;
    }
    if let Some(s) = &ov.savings {
        p.savings = draw_until(
            s,
            &mut attr_stream(seed, id, Attr::Savings, layer),
            "savings",
            |v| v >= 0.0,
        )?;
    }
    if let Some(s) = &ov.r_min {
        let mut rng = attr_stream(seed, id, Attr::Threshold, layer);
        draw_threshold(p, s, Lever::Savings, &mut rng, bounds)?;
    }
    p.validate(bounds)
}

/// Re-draws the first `k` users from `group_a` and the rest from `group_b`.
pub fn partition_population(
    profiles: &[UserProfile],
    k: usize,
    group_a: &GroupOverrides,
    group_b: &GroupOverrides,
    bounds: &BitrateBounds,
    seed: u64,
) -> Result<Partition> {
    if k > profiles.len() {
        return Err(ModelError::Config(format!(
            "group size {k} exceeds population size {}",
            profiles.len()
        )));
    }
    let mut out = profiles.to_vec();
    let mut labels = Vec::with_capacity(out.len());
    for (i, p) in out.iter_mut().enumerate() {
        let (g, ov, layer) = if i < k {
            (Group::A, group_a, 1)
        } else {
            (Group::B, group_b, 2)
        };
        apply_overrides(p, ov, bounds, seed, layer)?;
        labels.push(g);
    }
    Ok(Partition {
        profiles: out,
        labels,
    })
}

const CSV_HEADER: [&str; 8] = [
    "user_id", "x_high", "x_low", "gamma", "delta", "beta", "savings", "r_min",
];

pub fn write_population_csv<W: Write>(
    w: W,
    profiles: &[UserProfile],
    bounds: &BitrateBounds,
) -> Result<()> {
    let io = |e: csv::Error| ModelError::Config(format!("csv write failed: {e}"));
    let mut out = csv::Writer::from_writer(w);
    out.write_record(CSV_HEADER).map_err(io)?;
    for p in profiles {
        let r = min_incentive(p, bounds)?;
        let row = [
            p.id.to_string(),
            p.x_high.to_string(),
            p.x_low.to_string(),
            p.gamma.to_string(),
            p.delta.to_string(),
            p.beta.to_string(),
            p.savings.to_string(),
            r.to_string(),
        ];
        out.write_record(&row).map_err(io)?;
    }
    out.flush()
        .map_err(|e| ModelError::Config(format!("csv write failed: {e}")))?;
    Ok(())
}

/// Reads profiles back; the `r_min` column is checked against the model.
pub fn read_population_csv<R: Read>(r: R, bounds: &BitrateBounds) -> Result<Vec<UserProfile>> {
    let bad = |m: String| ModelError::Config(format!("population csv: {m}"));
    let mut rdr = csv::Reader::from_reader(r);
    let header = rdr.headers().map_err(|e| bad(e.to_string()))?.clone();
    if header.iter().collect::<Vec<_>>() != CSV_HEADER {
        return Err(bad(format!("unexpected header {:?}", header)));
    }
    let mut out = Vec::new();
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| bad(e.to_string()))?;
        let f = |i: usize| -> Result<f64> {
            rec[i]
                .parse::<f64>()
                .map_err(|e| bad(format!("row {}: column {}: {e}", line + 1, CSV_HEADER[i])))
        };
        let id = rec[0]
            .parse::<usize>()
            .map_err(|e| bad(format!("row {}: user_id: {e}", line + 1)))?;
        let p = UserProfile {
            id,
            x_high: f(1)?,
            x_low: f(2)?,
            gamma: f(3)?,
            delta: f(4)?,
            beta: f(5)?,
            savings: f(6)?,
        };
        p.validate(bounds)?;
        let r = min_incentive(&p, bounds)?;
        if (r - f(7)?).abs() > 1e-9 * (1.0 + r.abs()) {
            return Err(bad(format!(
                "row {}: r_min does not match the model",
                line + 1
            )));
        }
        out.push(p);
    }
    Ok(out)
}
