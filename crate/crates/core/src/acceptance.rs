//! Sigmoid acceptance of an offered incentive and seeded Bernoulli decisions.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};

/// An incentive offered to one user.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Offer {
    pub user_id: usize,
    pub amount: f64,
}

/// A user's binary response to an offer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Decision {
    pub user_id: usize,
    pub accepted: bool,
}

/// Logistic function, evaluated on the branch that cannot overflow.
#[inline]
pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Probability that a user with threshold `r_min` and slope `delta` accepts `offer`.
pub fn accept_probability(offer: f64, r_min: f64, delta: f64) -> Result<f64> {
    if !(delta > 0.0) {
        return domain(format!("delta must be positive, got {delta}"));
    }
    if !offer.is_finite() || !r_min.is_finite() {
        return domain("offer and threshold must be finite");
    }
    Ok(sigmoid(delta * (offer - r_min)))
}

/// One Bernoulli draw at the acceptance probability of `offer`.
pub fn sample_decision<R: Rng + ?Sized>(
    offer: Offer,
    r_min: f64,
    delta: f64,
    rng: &mut R,
) -> Result<Decision> {
    if offer.amount < 0.0 {
        return domain("offer amount must be non-negative");
    }
    let p = accept_probability(offer.amount, r_min, delta)?;
    Ok(Decision {
        user_id: offer.user_id,
        accepted: rng.random::<f64>() < p,
    })
}
