//! Green QoE mapping, normalized utilities and per-user incentive thresholds.
//!
//! The MOS curve is logarithmic in bitrate. A user with greenness factor
//! `gamma` saturates at `x_max / gamma` instead of `x_max`, which steepens the
//! curve and makes any bitrate drop hurt more.

use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};

/// Lowest and highest bitrate (kbps) the MOS mapping is defined on.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BitrateBounds {
    pub x_min: f64,
    pub x_max: f64,
}

impl Default for BitrateBounds {
    fn default() -> Self {
        Self {
            x_min: 300.0,
            x_max: 5000.0,
        }
    }
}

impl BitrateBounds {
    pub fn new(x_min: f64, x_max: f64) -> Result<Self> {
        let b = Self { x_min, x_max };
        b.validate()?;
        Ok(b)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.x_min.is_finite() && self.x_max.is_finite()) {
            return domain("bitrate bounds must be finite");
        }
        if !(0.0 < self.x_min && self.x_min < self.x_max) {
            return domain(format!(
                "bitrate bounds need 0 < x_min < x_max, got ({}, {})",
                self.x_min, self.x_max
            ));
        }
        Ok(())
    }

    /// `ln x_max - ln(gamma * x_min)`, the span of the green MOS curve.
    pub fn green_span(&self, gamma: f64) -> Result<f64> {
        if !(gamma > 0.0 && gamma.is_finite()) {
            return domain(format!("gamma must be positive and finite, got {gamma}"));
        }
        let span = self.x_max.ln() - (gamma * self.x_min).ln();
        if span <= 0.0 {
            return domain(format!(
                "gamma * x_min must stay below x_max (gamma = {gamma})"
            ));
        }
        Ok(span)
    }

    fn check_rate(&self, x: f64) -> Result<()> {
        if !(self.x_min <= x && x <= self.x_max) {
            return domain(format!(
                "bitrate {x} outside [{}, {}]",
                self.x_min, self.x_max
            ));
        }
        Ok(())
    }
}

/// One user's parameters. `savings` may be negative when a threshold was
/// imposed directly and the intrinsic benefit had to be back-solved.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UserProfile {
    pub id: usize,
    pub x_high: f64,
    pub x_low: f64,
    pub gamma: f64,
    pub delta: f64,
    pub beta: f64,
    pub savings: f64,
}

impl UserProfile {
    pub fn validate(&self, bounds: &BitrateBounds) -> Result<()> {
        let fields = [
            self.x_high,
            self.x_low,
            self.gamma,
            self.delta,
            self.beta,
            self.savings,
        ];
        if fields.iter().any(|v| !v.is_finite()) {
            return domain(format!("user {}: non-finite parameter", self.id));
        }
        if !(bounds.x_min <= self.x_low && self.x_low < self.x_high && self.x_high <= bounds.x_max)
        {
            return domain(format!(
                "user {}: need x_min <= x_low < x_high <= x_max, got x_low={}, x_high={}",
                self.id, self.x_low, self.x_high
            ));
        }
        if self.gamma < 1.0 {
            return domain(format!("user {}: gamma {} < 1", self.id, self.gamma));
        }
        bounds.green_span(self.gamma)?;
        if self.delta <= 0.0 {
            return domain(format!("user {}: delta must be positive", self.id));
        }
        if !(0.0..=1.0).contains(&self.beta) {
            return domain(format!("user {}: beta outside [0, 1]", self.id));
        }
        Ok(())
    }

    /// Bitrate reduction in kbps if the user switches down.
    pub fn flexibility(&self) -> f64 {
        self.x_high - self.x_low
    }
}

/// MOS before clipping. Used where closed forms need the raw curve.
pub fn qoe_unclipped(x: f64, gamma: f64, bounds: &BitrateBounds) -> Result<f64> {
    bounds.check_rate(x)?;
    let span = bounds.green_span(gamma)?;
    Ok(1.0 + 4.0 * (x.ln() - bounds.x_min.ln()) / span)
}

/// MOS score in [1, 5].
pub fn qoe_score(x: f64, gamma: f64, bounds: &BitrateBounds) -> Result<f64> {
    Ok(qoe_unclipped(x, gamma, bounds)?.clamp(1.0, 5.0))
}

/// Normalized utility `MOS / 5`, clipped to [0, 1].
pub fn utility(x: f64, gamma: f64, bounds: &BitrateBounds) -> Result<f64> {
    Ok((qoe_score(x, gamma, bounds)? / 5.0).clamp(0.0, 1.0))
}

/// Utility loss from `x_high` down to `x_low`, using the unclipped closed form.
pub fn delta_utility_raw(
    x_high: f64,
    x_low: f64,
    gamma: f64,
    bounds: &BitrateBounds,
) -> Result<f64> {
    if !(x_low > 0.0 && x_high > 0.0) {
        return domain("bitrates must be positive");
    }
    let span = bounds.green_span(gamma)?;
    Ok(4.0 * (x_high.ln() - x_low.ln()) / (5.0 * span))
}

pub fn delta_utility(profile: &UserProfile, bounds: &BitrateBounds) -> Result<f64> {
    profile.validate(bounds)?;
    delta_utility_raw(profile.x_high, profile.x_low, profile.gamma, bounds)
}

/// Smallest incentive that offsets the net loss: `max(dU - s, 0)`.
pub fn min_incentive(profile: &UserProfile, bounds: &BitrateBounds) -> Result<f64> {
    Ok((delta_utility(profile, bounds)? - profile.savings).max(0.0))
}
