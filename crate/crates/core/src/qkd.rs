//! Asymptotic two-decoy BB84 secure-key-rate bound.
//!
//! Takes measured gains and error rates for a signal, a decoy and a
//! near-vacuum intensity and produces the standard lower bound on the
//! single-photon yield, the upper bound on the single-photon error rate,
//! and the resulting secure bits per clock cycle.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum QkdError {
    #[error("probability {0} outside [0, 1]")]
    Domain(f64),
    #[error("invalid decoy inputs: {0}")]
    InvalidInputs(String),
}

/// Measured quantities feeding the decoy bound.
///
/// The third intensity is treated as vacuum: its gain estimates the
/// background yield `Y0`, corrected once for the residual photon flux
/// `vac` (see [`key_rate`]).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DecoyInputs {
    pub mu: f64,
    pub nu: f64,
    pub vac: f64,
    pub q_mu: f64,
    pub q_nu: f64,
    pub q_vac: f64,
    pub e_mu: f64,
    pub e_nu: f64,
    /// Probability that a detection contributes to the sifted key; the
    /// default keeps only the majority basis on both sides.
    pub q_sift: f64,
    /// Error-correction inefficiency relative to the Shannon limit.
    pub f_ec: f64,
}

impl Default for DecoyInputs {
    fn default() -> Self {
        DecoyInputs {
            mu: 0.4,
            nu: 0.1,
            vac: 0.001,
            q_mu: 0.0,
            q_nu: 0.0,
            q_vac: 0.0,
            e_mu: 0.0,
            e_nu: 0.0,
            q_sift: (15.0 / 16.0) * (15.0 / 16.0),
            f_ec: 1.16,
        }
    }
}

impl DecoyInputs {
    pub fn validate(&self) -> Result<(), QkdError> {
        if !(self.nu > 0.0 && self.mu > self.nu) {
            return Err(QkdError::InvalidInputs(format!(
                "need 0 < nu < mu, got nu={} mu={}",
                self.nu, self.mu
            )));
        }
        if !(self.vac >= 0.0 && self.vac < self.nu) {
            return Err(QkdError::InvalidInputs(format!(
                "vacuum intensity {} must lie in [0, nu)",
                self.vac
            )));
        }
        for (label, value) in [
            ("q_mu", self.q_mu),
            ("q_nu", self.q_nu),
            ("q_vac", self.q_vac),
            ("e_mu", self.e_mu),
            ("e_nu", self.e_nu),
        ] {
            if !(0.0..=1.0).contains(&value) {
                return Err(QkdError::InvalidInputs(format!(
                    "{label} must lie in [0, 1], got {value}"
                )));
            }
        }
        if !(self.f_ec >= 1.0) {
            return Err(QkdError::InvalidInputs(format!(
                "f_ec must be at least 1, got {}",
                self.f_ec
            )));
        }
        if !(self.q_sift > 0.0 && self.q_sift <= 1.0) {
            return Err(QkdError::InvalidInputs(format!(
                "q_sift must lie in (0, 1], got {}",
                self.q_sift
            )));
        }
        Ok(())
    }
}

/// Decoy bounds plus the clamped secure-key rate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KeyRateResult {
    pub y0: f64,
    pub y1_lower: f64,
    pub e1_upper: f64,
    pub q1_lower: f64,
    /// Secure bits per clock cycle, never negative.
    pub rate: f64,
    /// Set when the yield bound collapsed to zero and no rate is claimed.
    pub bound_collapsed: bool,
}

/// Binary Shannon entropy in bits, with H2(0) = H2(1) = 0.
pub fn binary_entropy(p: f64) -> Result<f64, QkdError> {
    if !(0.0..=1.0).contains(&p) {
        return Err(QkdError::Domain(p));
    }
    if p == 0.0 || p == 1.0 {
        return Ok(0.0);
    }
    Ok(-p * p.log2() - (1.0 - p) * (1.0 - p).log2())
}

fn clamp_unit(x: f64) -> f64 {
    x.clamp(0.0, 1.0)
}

/// Two-decoy asymptotic bound.
///
/// `Y0` starts from the measured vacuum gain and gets one fixed-point
/// correction for the residual intensity of the vacuum state:
/// `Y0 = Q_vac e^w - w Y1` with the provisional `Y1` from the uncorrected
/// pass. Single-photon errors at or above 1/2 contribute no secret bits.
pub fn key_rate(inputs: &DecoyInputs) -> Result<KeyRateResult, QkdError> {
    inputs.validate()?;
    let DecoyInputs { mu, nu, vac, q_mu, q_nu, q_vac, e_mu, e_nu, q_sift, f_ec } = *inputs;

    let y1_bound = |y0: f64| -> f64 {
        (mu / (mu * nu - nu * nu))
            * (q_nu * nu.exp()
                - q_mu * mu.exp() * nu * nu / (mu * mu)
                - ((mu * mu - nu * nu) / (mu * mu)) * y0)
    };

    let y1_provisional = y1_bound(q_vac).max(0.0);
    let y0 = clamp_unit(q_vac * vac.exp() - vac * y1_provisional);
    let y1_raw = y1_bound(y0);
    let y1_lower = clamp_unit(y1_raw);
    let q1_lower = y1_lower * mu * (-mu).exp();

    if y1_raw <= 0.0 {
        return Ok(KeyRateResult {
            y0,
            y1_lower: 0.0,
            e1_upper: 1.0,
            q1_lower: 0.0,
            rate: 0.0,
            bound_collapsed: true,
        });
    }

    let e1_upper = clamp_unit((e_nu * q_nu * nu.exp() - 0.5 * y0) / (y1_lower * nu));
    let single_photon_term = if e1_upper >= 0.5 {
        0.0
    } else {
        q1_lower * (1.0 - binary_entropy(e1_upper)?)
    };
    let rate =
        (q_sift * (-q_mu * f_ec * binary_entropy(e_mu)? + single_photon_term)).max(0.0);

    Ok(KeyRateResult { y0, y1_lower, e1_upper, q1_lower, rate, bound_collapsed: false })
}
