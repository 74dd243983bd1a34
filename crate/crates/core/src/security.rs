//! Secure-key lower bound for weak-pulse sources and the μ search over it.
//!
//! The bound is the tagged-photon (GLLP) form evaluated from the sifted rate
//! R_μ and mean QBER Q_μ:
//!
//! ```text
//! Δ = min(1, ½·P(n ≥ 2) / R_μ)
//! S = R_μ · max(0, (1 − Δ)(1 − H₂(min(½, Q_μ / (1 − Δ)))) − f_EC·H₂(Q_μ))
//! ```
//!
//! Multi-photon pulses are assumed fully known to an eavesdropper and are
//! credited at the largest sifting probability ½ a pulse can have.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analytic::{poisson_tail, qber_avg, sifted_rate};
use crate::error::{QkdError, Result};
use crate::types::{Protocol, PulseParams, Visibility};

/// H₂(x) in bits, with H₂(0) = H₂(1) = 0.
pub fn binary_entropy(x: f64) -> f64 {
    if x <= 0.0 || x >= 1.0 {
        return 0.0;
    }
    -x * x.log2() - (1.0 - x) * (1.0 - x).log2()
}

/// P(n ≥ 2) for a Poisson source of mean `mu`.
pub fn multiphoton_prob(mu: f64) -> Result<f64> {
    poisson_tail(mu, 2)
}

/// Which photon numbers are treated as fully insecure.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
#[non_exhaustive]
pub enum TaggingPolicy {
    /// Every pulse with two or more photons is tagged, for both protocols.
    #[default]
    MultiPhoton,
}

impl TaggingPolicy {
    /// Probability that a pulse is tagged.
    pub fn tagged_prob(self, mu: f64) -> Result<f64> {
        match self {
            TaggingPolicy::MultiPhoton => multiphoton_prob(mu),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SecurityParams {
    /// Error-correction inefficiency, ≥ 1 (1 is the Shannon limit).
    pub f_ec: f64,
    pub tagging: TaggingPolicy,
}

impl Default for SecurityParams {
    fn default() -> Self {
        SecurityParams {
            f_ec: 1.0,
            tagging: TaggingPolicy::MultiPhoton,
        }
    }
}

impl SecurityParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.f_ec.is_finite() && self.f_ec >= 1.0) {
            return Err(QkdError::InvalidParameter {
                name: "f_EC",
                value: self.f_ec,
                reason: "must be at least 1",
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SecureRateResult {
    /// Secure bits per pulse; multiply by the pulse rate for bits/s.
    pub secure_rate: f64,
    pub tagged_fraction: f64,
    pub q_mu: f64,
    pub r_mu: f64,
    pub feasible: bool,
}

impl SecureRateResult {
    fn infeasible(r_mu: f64, q_mu: f64, tagged_fraction: f64) -> Self {
        SecureRateResult {
            secure_rate: 0.0,
            tagged_fraction,
            q_mu,
            r_mu,
            feasible: false,
        }
    }
}

/// Lower bound on secure bits per pulse.
///
/// A zero sifted rate is reported as an infeasible result, not an error.
pub fn secure_rate(
    protocol: Protocol,
    pulse: &PulseParams,
    v: Visibility,
    sec: &SecurityParams,
) -> Result<SecureRateResult> {
    sec.validate()?;
    let r_mu = sifted_rate(protocol, pulse, v);
    let q_mu = match qber_avg(protocol, pulse, v) {
        Ok(q) => q,
        Err(QkdError::UndefinedQber) => return Ok(SecureRateResult::infeasible(0.0, 0.0, 1.0)),
        Err(e) => return Err(e),
    };
    let tagged = (0.5 * sec.tagging.tagged_prob(pulse.mu)? / r_mu).min(1.0);
    if tagged >= 1.0 || q_mu >= 0.5 {
        return Ok(SecureRateResult::infeasible(r_mu, q_mu, tagged));
    }
    let untagged = 1.0 - tagged;
    let phase_error = (q_mu / untagged).min(0.5);
    let fraction = untagged * (1.0 - binary_entropy(phase_error)) - sec.f_ec * binary_entropy(q_mu);
    if fraction <= 0.0 {
        return Ok(SecureRateResult::infeasible(r_mu, q_mu, tagged));
    }
    Ok(SecureRateResult {
        secure_rate: r_mu * fraction,
        tagged_fraction: tagged,
        q_mu,
        r_mu,
        feasible: true,
    })
}

/// Inclusive arithmetic grid `start, start + step, …, ≤ stop`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MuGrid {
    pub start: f64,
    pub stop: f64,
    pub step: f64,
}

impl Default for MuGrid {
    fn default() -> Self {
        MuGrid {
            start: 0.03,
            stop: 0.30,
            step: 0.001,
        }
    }
}

impl MuGrid {
    pub fn points(&self) -> Result<Vec<f64>> {
        let bad = !(self.start.is_finite() && self.stop.is_finite() && self.step.is_finite());
        if bad || self.step <= 0.0 || self.start <= 0.0 || self.stop >= 1.0 || self.start > self.stop {
            return Err(QkdError::EmptyGrid(format!(
                "mu grid [{}, {}] step {} must satisfy 0 < start <= stop < 1 and step > 0",
                self.start, self.stop, self.step
            )));
        }
        Ok(inclusive_grid(self.start, self.stop, self.step))
    }
}

/// Points `start + i·step` up to `stop`, tolerant of the rounding in `(stop − start)/step`.
///
/// Points are rounded to 12 decimals so that e.g. 0.6 + 3·0.02 prints as 0.66.
pub fn inclusive_grid(start: f64, stop: f64, step: f64) -> Vec<f64> {
    let count = ((stop - start) / step + 1e-9).floor() as usize + 1;
    (0..count)
        .map(|i| ((start + i as f64 * step) * 1e12).round() / 1e12)
        .collect()
}

/// Index of the largest value, the first one on ties.
pub fn argmax_first(values: &[f64]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, &v) in values.iter().enumerate() {
        match best {
            Some(b) if v <= values[b] => {}
            _ => best = Some(i),
        }
    }
    best
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MuOptimum {
    pub mu: f64,
    pub result: SecureRateResult,
}

/// Grid search for the μ maximizing the secure rate; ties go to the smaller μ.
///
/// `pulse.mu` is ignored. Grid points are evaluated in parallel; the answer is
/// independent of evaluation order.
pub fn optimize_mu(
    protocol: Protocol,
    pulse: &PulseParams,
    v: Visibility,
    grid: &MuGrid,
    sec: &SecurityParams,
) -> Result<MuOptimum> {
    let mus = grid.points()?;
    let results = mus
        .par_iter()
        .map(|&mu| secure_rate(protocol, &pulse.with_mu(mu)?, v, sec))
        .collect::<Result<Vec<_>>>()?;
    let rates: Vec<f64> = results.iter().map(|r| r.secure_rate).collect();
    let best = argmax_first(&rates).ok_or_else(|| QkdError::EmptyGrid("no mu points".into()))?;
    Ok(MuOptimum {
        mu: mus[best],
        result: results[best],
    })
}
