//! Single-pulse building blocks: source, channel, receiver and sifting.

use rand::Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use super::config::{DoubleClickPolicy, FlipModel};
use crate::error::{QkdError, Result};
use crate::types::{sarg04_bit, sarg_sets_containing, Basis, PolarizationState, SargSet};

/// Weak coherent source with Poisson photon statistics.
#[derive(Debug, Clone, Copy)]
pub struct PhotonSource {
    poisson: Poisson<f64>,
}

impl PhotonSource {
    pub fn new(mu: f64) -> Result<Self> {
        let poisson = Poisson::new(mu).map_err(|_| QkdError::InvalidParameter {
            name: "mu",
            value: mu,
            reason: "must be finite and positive",
        })?;
        Ok(PhotonSource { poisson })
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> u32 {
        self.poisson.sample(rng) as u32
    }
}

/// Photon number of one pulse, Poisson(μ).
pub fn sample_pulse<R: Rng + ?Sized>(rng: &mut R, mu: f64) -> Result<u32> {
    Ok(PhotonSource::new(mu)?.sample(rng))
}

/// Photons that reached Bob's detectors. All photons of a pulse start in the
/// same state, so arrivals are fully described by two counts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Arrivals {
    pub sent: PolarizationState,
    /// Photons still in `sent`.
    pub unflipped: u32,
    /// Photons flipped to `sent.orthogonal()`.
    pub flipped: u32,
}

impl Arrivals {
    pub fn none(sent: PolarizationState) -> Self {
        Arrivals {
            sent,
            unflipped: 0,
            flipped: 0,
        }
    }

    pub fn count(&self) -> u32 {
        self.unflipped + self.flipped
    }

    pub fn states(&self) -> impl Iterator<Item = PolarizationState> + '_ {
        std::iter::repeat_n(self.sent, self.unflipped as usize)
            .chain(std::iter::repeat_n(self.sent.orthogonal(), self.flipped as usize))
    }
}

/// Loss and depolarization for an `n`-photon pulse prepared in `state`.
///
/// Each photon survives independently with probability `survival` (η = η_d·t).
/// A pulse-level flip (if any) is drawn once for the pulse; photon-level flips
/// are drawn for each surviving photon.
pub fn transmit<R: Rng + ?Sized>(
    rng: &mut R,
    state: PolarizationState,
    n: u32,
    survival: f64,
    flips: FlipModel,
) -> Arrivals {
    if n == 0 {
        return Arrivals::none(state);
    }
    let pulse_flipped = flips.per_pulse > 0.0 && rng.random::<f64>() < flips.per_pulse;
    let mut arrivals = Arrivals::none(state);
    for _ in 0..n {
        if rng.random::<f64>() >= survival {
            continue;
        }
        let photon_flipped = flips.per_photon > 0.0 && rng.random::<f64>() < flips.per_photon;
        if pulse_flipped != photon_flipped {
            arrivals.flipped += 1;
        } else {
            arrivals.unflipped += 1;
        }
    }
    arrivals
}

/// What Bob records for one pulse.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Detection {
    NoClick,
    Click(PolarizationState),
}

impl Detection {
    pub fn state(self) -> Option<PolarizationState> {
        match self {
            Detection::NoClick => None,
            Detection::Click(s) => Some(s),
        }
    }
}

/// Bob's two gated detectors for `basis`.
///
/// A photon polarized in `basis` goes to its own detector; a photon in the
/// conjugate basis goes to either detector with probability ½. Each detector
/// also dark-fires with probability `dark_count`.
pub fn detect<R: Rng + ?Sized>(
    rng: &mut R,
    arrivals: Arrivals,
    basis: Basis,
    dark_count: f64,
    policy: DoubleClickPolicy,
) -> Detection {
    let mut fired = [false; 2];
    for (state, count) in [
        (arrivals.sent, arrivals.unflipped),
        (arrivals.sent.orthogonal(), arrivals.flipped),
    ] {
        if count == 0 {
            continue;
        }
        if state.basis() == basis {
            fired[usize::from(state.bb84_bit())] = true;
        } else {
            for _ in 0..count {
                fired[usize::from(rng.random::<bool>())] = true;
            }
        }
    }
    if dark_count > 0.0 {
        for slot in &mut fired {
            // Always draw both so the stream layout does not depend on photon hits.
            let dark = rng.random::<f64>() < dark_count;
            *slot |= dark;
        }
    }
    let detectors = basis.states();
    match fired {
        [false, false] => Detection::NoClick,
        [true, false] => Detection::Click(detectors[0]),
        [false, true] => Detection::Click(detectors[1]),
        [true, true] => match policy {
            DoubleClickPolicy::RandomBit => Detection::Click(detectors[usize::from(rng.random::<bool>())]),
            DoubleClickPolicy::Discard => Detection::NoClick,
        },
    }
}

/// Result of sifting one pulse.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sift {
    pub kept: bool,
    /// Bob's key bit, when kept.
    pub bit: Option<u8>,
    pub error: bool,
}

impl Sift {
    const DISCARDED: Sift = Sift {
        kept: false,
        bit: None,
        error: false,
    };
}

/// BB84 basis reconciliation.
pub fn sift_bb84(alice: PolarizationState, bob_basis: Basis, outcome: Detection) -> Sift {
    match outcome {
        Detection::Click(seen) if bob_basis == alice.basis() => {
            let bit = seen.bb84_bit();
            Sift {
                kept: true,
                bit: Some(bit),
                error: bit != alice.bb84_bit(),
            }
        }
        _ => Sift::DISCARDED,
    }
}

/// SARG04 sifting against the announced pair.
///
/// An outcome orthogonal to one member rules that member out, so Bob infers
/// the other one. Outcomes orthogonal to neither member are inconclusive.
pub fn sift_sarg04(alice: PolarizationState, announced: SargSet, outcome: Detection) -> Result<Sift> {
    if !announced.contains(alice) {
        return Err(QkdError::InvalidConfig(format!(
            "announced set {announced} does not contain the sent state {alice}"
        )));
    }
    let Some(seen) = outcome.state() else {
        return Ok(Sift::DISCARDED);
    };
    let [z, x] = announced.members();
    let inferred = if seen == z.orthogonal() {
        x
    } else if seen == x.orthogonal() {
        z
    } else {
        return Ok(Sift::DISCARDED);
    };
    Ok(Sift {
        kept: true,
        bit: Some(sarg04_bit(inferred.basis())),
        error: inferred != alice,
    })
}

/// Alice's public announcement: one of the two sets holding her state, uniformly.
pub fn announce_set<R: Rng + ?Sized>(rng: &mut R, alice: PolarizationState) -> SargSet {
    sarg_sets_containing(alice)[usize::from(rng.random::<bool>())]
}
