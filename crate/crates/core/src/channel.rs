//! Fibre-loss planning: transmission `η_C = 10^(-αL/10)` against the
//! `1/(|G|+1)` threshold of the single-party attack.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Attenuation `alpha` in dB/km over `length` km.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChannelModel {
    alpha: f64,
    length: f64,
}

impl ChannelModel {
    pub fn new(alpha: f64, length: f64) -> Result<Self> {
        if !(alpha >= 0.0 && alpha.is_finite()) || !(length >= 0.0 && length.is_finite()) {
            return Err(Error::Argument(format!(
                "alpha and length must be finite and nonnegative (got {alpha}, {length})"
            )));
        }
        Ok(Self { alpha, length })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn length(&self) -> f64 {
        self.length
    }
}

pub fn channel_efficiency(model: &ChannelModel) -> f64 {
    10f64.powf(-model.alpha * model.length / 10.0)
}

/// Smallest number of key bases `g` with `1/(g+1) < η_C`, i.e. the attack
/// on all key bases is strictly infeasible.
pub fn min_bases(model: &ChannelModel) -> Result<u64> {
    let eta = channel_efficiency(model);
    if eta <= 0.0 {
        return Err(Error::UnreachableDistance);
    }
    let guess = (1.0 / eta).floor();
    if guess > 1e15 {
        return Err(Error::UnreachableDistance);
    }
    let works = |g: u64| 1.0 / (g as f64 + 1.0) < eta;
    let mut g = (guess as u64).max(1);
    while !works(g) {
        g += 1;
    }
    while g > 1 && works(g - 1) {
        g -= 1;
    }
    Ok(g)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "km", rename_all = "snake_case")]
pub enum Distance {
    /// Supremum of secure lengths; the bound itself is excluded.
    Finite(f64),
    Unbounded,
}

/// `L = (10/α) log₁₀(bases + 1)`: the open upper limit on distance for
/// which `bases` key bases keep the attack infeasible.
pub fn max_distance(alpha: f64, bases: u64) -> Result<Distance> {
    if bases == 0 {
        return Err(Error::Argument("need at least one basis".into()));
    }
    if !(alpha >= 0.0 && alpha.is_finite()) {
        return Err(Error::Argument(format!("invalid attenuation {alpha}")));
    }
    if alpha == 0.0 {
        return Ok(Distance::Unbounded);
    }
    Ok(Distance::Finite(10.0 / alpha * (bases as f64 + 1.0).log10()))
}
