//! Shared vocabulary: polarization states, bases, SARG04 announcement sets,
//! bit encodings and the validated parameter records every other module
//! consumes.

use std::cmp::Ordering;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{check_non_negative, check_probability, QkdError, Result};

/// Measurement / preparation basis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Basis {
    /// Rectilinear: H and V.
    Z,
    /// Diagonal: +45° and −45°.
    X,
}

impl Basis {
    pub const ALL: [Basis; 2] = [Basis::Z, Basis::X];

    pub fn conjugate(self) -> Basis {
        match self {
            Basis::Z => Basis::X,
            Basis::X => Basis::Z,
        }
    }

    /// The two states of this basis ordered by BB84 bit value (bit 0 first).
    pub fn states(self) -> [PolarizationState; 2] {
        match self {
            Basis::Z => [PolarizationState::H, PolarizationState::V],
            Basis::X => [PolarizationState::DPlus, PolarizationState::DMinus],
        }
    }
}

/// One of the four BB84 polarization states.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PolarizationState {
    H,
    V,
    /// +45°
    DPlus,
    /// −45°
    DMinus,
}

impl PolarizationState {
    pub const ALL: [PolarizationState; 4] = [
        PolarizationState::H,
        PolarizationState::V,
        PolarizationState::DPlus,
        PolarizationState::DMinus,
    ];

    pub fn orthogonal(self) -> PolarizationState {
        use PolarizationState::*;
        match self {
            H => V,
            V => H,
            DPlus => DMinus,
            DMinus => DPlus,
        }
    }

    pub fn basis(self) -> Basis {
        use PolarizationState::*;
        match self {
            H | V => Basis::Z,
            DPlus | DMinus => Basis::X,
        }
    }

    /// BB84 bit label: H, +45 → 0; V, −45 → 1.
    pub fn bb84_bit(self) -> u8 {
        use PolarizationState::*;
        match self {
            H | DPlus => 0,
            V | DMinus => 1,
        }
    }

    /// Inverse of [`bb84_bit`](Self::bb84_bit) within a basis.
    pub fn from_bb84(basis: Basis, bit: u8) -> PolarizationState {
        basis.states()[usize::from(bit & 1)]
    }

    /// Uniform index in `0..4` to state, in [`ALL`](Self::ALL) order.
    pub fn from_index(index: u32) -> PolarizationState {
        Self::ALL[(index & 3) as usize]
    }

    // Position inside a SARG04 set's canonical ordering: V before H, +45 before −45.
    fn sarg_rank(self) -> u8 {
        use PolarizationState::*;
        match self {
            V | DPlus => 0,
            H | DMinus => 1,
        }
    }
}

impl fmt::Display for PolarizationState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            PolarizationState::H => "H",
            PolarizationState::V => "V",
            PolarizationState::DPlus => "+45",
            PolarizationState::DMinus => "-45",
        };
        f.write_str(s)
    }
}

/// SARG04 bit label, carried by the basis of the state Alice actually sent: Z → 0, X → 1.
pub fn sarg04_bit(basis: Basis) -> u8 {
    match basis {
        Basis::Z => 0,
        Basis::X => 1,
    }
}

/// A publicly announced SARG04 pair: one Z-basis state and one X-basis state.
///
/// Only four such pairs are used: {V,+45}, {+45,H}, {H,−45}, {−45,V}.
/// Every state belongs to exactly two of them.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SargSet {
    z: PolarizationState,
    x: PolarizationState,
}

impl SargSet {
    /// All four sets in canonical order.
    pub const ALL: [SargSet; 4] = [
        SargSet::from_parts(PolarizationState::V, PolarizationState::DPlus),
        SargSet::from_parts(PolarizationState::V, PolarizationState::DMinus),
        SargSet::from_parts(PolarizationState::H, PolarizationState::DPlus),
        SargSet::from_parts(PolarizationState::H, PolarizationState::DMinus),
    ];

    const fn from_parts(z: PolarizationState, x: PolarizationState) -> SargSet {
        SargSet { z, x }
    }

    /// Builds a set from one Z state and one X state (in either argument order).
    pub fn new(a: PolarizationState, b: PolarizationState) -> Result<SargSet> {
        match (a.basis(), b.basis()) {
            (Basis::Z, Basis::X) => Ok(SargSet { z: a, x: b }),
            (Basis::X, Basis::Z) => Ok(SargSet { z: b, x: a }),
            _ => Err(QkdError::InvalidConfig(format!(
                "SARG04 set needs one Z and one X state, got {{{a}, {b}}}"
            ))),
        }
    }

    pub fn z_member(self) -> PolarizationState {
        self.z
    }

    pub fn x_member(self) -> PolarizationState {
        self.x
    }

    pub fn members(self) -> [PolarizationState; 2] {
        [self.z, self.x]
    }

    pub fn contains(self, s: PolarizationState) -> bool {
        self.z == s || self.x == s
    }

    /// The member that is not `s`, if `s` belongs to the set.
    pub fn other(self, s: PolarizationState) -> Option<PolarizationState> {
        if s == self.z {
            Some(self.x)
        } else if s == self.x {
            Some(self.z)
        } else {
            None
        }
    }

    fn sort_key(self) -> (u8, u8) {
        (self.z.sarg_rank(), self.x.sarg_rank())
    }
}

impl Ord for SargSet {
    fn cmp(&self, other: &Self) -> Ordering {
        self.sort_key().cmp(&other.sort_key())
    }
}

impl PartialOrd for SargSet {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for SargSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{{}, {}}}", self.z, self.x)
    }
}

/// The two sets containing `s`, in canonical order.
pub fn sarg_sets_containing(s: PolarizationState) -> [SargSet; 2] {
    let mut found = SargSet::ALL.into_iter().filter(|set| set.contains(s));
    match (found.next(), found.next()) {
        (Some(a), Some(b)) => [a, b],
        _ => unreachable!("every state lies in exactly two sets"),
    }
}

/// Key-distribution protocol; the two differ only in classical sifting.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Protocol {
    Bb84,
    Sarg04,
}

impl Protocol {
    pub const ALL: [Protocol; 2] = [Protocol::Bb84, Protocol::Sarg04];

    pub fn name(self) -> &'static str {
        match self {
            Protocol::Bb84 => "bb84",
            Protocol::Sarg04 => "sarg04",
        }
    }
}

impl fmt::Display for Protocol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Protocol {
    type Err = QkdError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "bb84" => Ok(Protocol::Bb84),
            "sarg04" => Ok(Protocol::Sarg04),
            other => Err(QkdError::InvalidConfig(format!("unknown protocol '{other}'"))),
        }
    }
}

/// Channel visibility V ∈ [0, 1].
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct Visibility(f64);

impl Visibility {
    pub const PERFECT: Visibility = Visibility(1.0);

    pub fn new(v: f64) -> Result<Visibility> {
        check_probability("visibility", v).map(Visibility)
    }

    pub fn value(self) -> f64 {
        self.0
    }

    /// F = (1 + V) / 2
    pub fn fidelity(self) -> f64 {
        (1.0 + self.0) / 2.0
    }

    /// D = (1 − V) / 2, the per-qubit flip probability.
    pub fn disturbance(self) -> f64 {
        (1.0 - self.0) / 2.0
    }

    /// Visibility whose disturbance is `d` ∈ [0, ½].
    pub fn from_disturbance(d: f64) -> Result<Visibility> {
        if !(0.0..=0.5).contains(&d) {
            return Err(QkdError::InvalidParameter {
                name: "disturbance",
                value: d,
                reason: "must lie in [0, 0.5]",
            });
        }
        Visibility::new(1.0 - 2.0 * d)
    }
}

impl TryFrom<f64> for Visibility {
    type Error = QkdError;

    fn try_from(v: f64) -> Result<Self> {
        Visibility::new(v)
    }
}

impl From<Visibility> for f64 {
    fn from(v: Visibility) -> f64 {
        v.0
    }
}

/// Depolarizing, lossy fiber link.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelParams {
    pub visibility: Visibility,
    /// dB/km
    pub attenuation_db_per_km: f64,
    /// km
    pub length_km: f64,
}

impl ChannelParams {
    pub fn new(visibility: f64, attenuation_db_per_km: f64, length_km: f64) -> Result<Self> {
        let params = ChannelParams {
            visibility: Visibility::new(visibility)?,
            attenuation_db_per_km,
            length_km,
        };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<()> {
        check_non_negative("attenuation", self.attenuation_db_per_km)?;
        check_non_negative("length", self.length_km)?;
        Ok(())
    }

    pub fn fidelity(&self) -> f64 {
        self.visibility.fidelity()
    }

    pub fn disturbance(&self) -> f64 {
        self.visibility.disturbance()
    }

    /// t = 10^(−αl/10)
    pub fn transmission(&self) -> f64 {
        10f64.powf(-self.attenuation_db_per_km * self.length_km / 10.0)
    }
}

/// Source and receiver characteristics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeviceParams {
    /// Mean photon number per pulse, μ.
    pub mu: f64,
    /// Bob's detection efficiency including optics, η_d.
    pub detector_efficiency: f64,
    /// Dark-count probability per detector per gate, p_d.
    pub dark_count_prob: f64,
    /// Hz; only used to turn per-pulse rates into bits per second.
    pub pulse_rate_hz: f64,
}

impl DeviceParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.mu.is_finite() && self.mu > 0.0) {
            return Err(QkdError::InvalidParameter {
                name: "mu",
                value: self.mu,
                reason: "must be finite and positive",
            });
        }
        check_probability("detector efficiency", self.detector_efficiency)?;
        check_probability("dark-count probability", self.dark_count_prob)?;
        if self.dark_count_prob >= 1.0 {
            return Err(QkdError::InvalidParameter {
                name: "dark-count probability",
                value: self.dark_count_prob,
                reason: "must be below 1",
            });
        }
        check_non_negative("pulse rate", self.pulse_rate_hz)?;
        Ok(())
    }

    /// Overall single-photon survival η = η_d · t.
    pub fn eta(&self, channel: &ChannelParams) -> f64 {
        self.detector_efficiency * channel.transmission()
    }

    pub fn pulse(&self, channel: &ChannelParams) -> Result<PulseParams> {
        self.validate()?;
        channel.validate()?;
        PulseParams::new(self.mu, self.eta(channel), self.dark_count_prob)
    }
}

/// The three numbers the closed-form rates depend on besides V: μ, η and p_d.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PulseParams {
    pub mu: f64,
    pub eta: f64,
    pub dark_count: f64,
}

impl PulseParams {
    pub fn new(mu: f64, eta: f64, dark_count: f64) -> Result<Self> {
        if !(mu.is_finite() && mu > 0.0) {
            return Err(QkdError::InvalidParameter {
                name: "mu",
                value: mu,
                reason: "must be finite and positive",
            });
        }
        check_probability("eta", eta)?;
        check_probability("dark-count probability", dark_count)?;
        if dark_count >= 1.0 {
            return Err(QkdError::InvalidParameter {
                name: "dark-count probability",
                value: dark_count,
                reason: "must be below 1",
            });
        }
        Ok(PulseParams { mu, eta, dark_count })
    }

    pub fn with_mu(self, mu: f64) -> Result<Self> {
        PulseParams::new(mu, self.eta, self.dark_count)
    }

    /// p̄_d = 1 − p_d
    pub fn no_dark(&self) -> f64 {
        1.0 - self.dark_count
    }
}
