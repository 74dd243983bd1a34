use serde::{Deserialize, Serialize};

use crate::analytic::compose_visibility;
use crate::error::{QkdError, Result};
use crate::types::{ChannelParams, DeviceParams, Protocol, PulseParams, Visibility};

/// How the requested channel disturbance is applied to a pulse.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DepolMode {
    /// Each surviving photon flips independently with probability D.
    #[default]
    PerPhoton,
    /// One flip decision per pulse, as when Alice's stored bit is flipped
    /// after the fact to emulate a noisier channel.
    PerPulse,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BasisChoice {
    /// Bob picks one basis per pulse, uniformly.
    #[default]
    Active,
    /// Per-photon beam-splitter choice over four detectors. Reserved; rejected by validation.
    Passive,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DoubleClickPolicy {
    /// Both detectors fired: report one of the two outcomes uniformly at random.
    #[default]
    RandomBit,
    /// Both detectors fired: treat as no detection. Expected rates then
    /// differ from the closed forms.
    Discard,
}

/// Everything needed to reproduce one Monte Carlo run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub protocol: Protocol,
    pub channel: ChannelParams,
    pub device: DeviceParams,
    pub pulses: u64,
    pub seed: u64,
    #[serde(default)]
    pub depol_mode: DepolMode,
    #[serde(default)]
    pub basis_choice: BasisChoice,
    #[serde(default)]
    pub double_click: DoubleClickPolicy,
    /// Visibility already present in the physical link; the requested
    /// `channel.visibility` is then an extra flip stage composed with it.
    #[serde(default)]
    pub intrinsic_visibility: Option<Visibility>,
}

/// Fiber and detector figures of the reference setup.
pub mod reference {
    pub const MU: f64 = 0.189;
    pub const DETECTOR_EFFICIENCY: f64 = 0.4;
    pub const DARK_COUNT_PROB: f64 = 3.3e-5;
    pub const ATTENUATION_DB_PER_KM: f64 = 3.0;
    pub const LENGTH_KM: f64 = 1.27;
    pub const INTRINSIC_VISIBILITY: f64 = 0.954;
    pub const PULSE_RATE_HZ: f64 = 1e6;
}

impl SimConfig {
    /// Reference setup at its native visibility, 10⁷ pulses.
    pub fn reference(protocol: Protocol) -> SimConfig {
        SimConfig {
            protocol,
            channel: ChannelParams {
                visibility: Visibility::new(reference::INTRINSIC_VISIBILITY).expect("valid"),
                attenuation_db_per_km: reference::ATTENUATION_DB_PER_KM,
                length_km: reference::LENGTH_KM,
            },
            device: DeviceParams {
                mu: reference::MU,
                detector_efficiency: reference::DETECTOR_EFFICIENCY,
                dark_count_prob: reference::DARK_COUNT_PROB,
                pulse_rate_hz: reference::PULSE_RATE_HZ,
            },
            pulses: 10_000_000,
            seed: 42,
            depol_mode: DepolMode::PerPhoton,
            basis_choice: BasisChoice::Active,
            double_click: DoubleClickPolicy::RandomBit,
            intrinsic_visibility: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.pulses == 0 {
            return Err(QkdError::InvalidConfig("pulse count must be positive".into()));
        }
        if self.basis_choice == BasisChoice::Passive {
            return Err(QkdError::InvalidConfig(
                "passive basis choice is reserved and not simulated".into(),
            ));
        }
        self.channel.validate()?;
        self.device.validate()?;
        Ok(())
    }

    /// Net channel visibility seen by the photons.
    pub fn effective_visibility(&self) -> Visibility {
        match self.intrinsic_visibility {
            Some(vi) => compose_visibility(self.channel.visibility, vi),
            None => self.channel.visibility,
        }
    }

    pub fn pulse_params(&self) -> Result<PulseParams> {
        self.device.pulse(&self.channel)
    }

    /// Flip probabilities per stage.
    pub fn flip_model(&self) -> FlipModel {
        match self.depol_mode {
            DepolMode::PerPhoton => FlipModel {
                per_pulse: 0.0,
                per_photon: self.effective_visibility().disturbance(),
            },
            DepolMode::PerPulse => FlipModel {
                per_pulse: self.channel.visibility.disturbance(),
                per_photon: self.intrinsic_visibility.map_or(0.0, |v| v.disturbance()),
            },
        }
    }
}

/// Flip probabilities of the two depolarization stages a pulse passes through.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct FlipModel {
    /// One decision for the whole pulse.
    pub per_pulse: f64,
    /// Independent decision per surviving photon.
    pub per_photon: f64,
}

impl FlipModel {
    pub fn new(mode: DepolMode, v: Visibility) -> FlipModel {
        match mode {
            DepolMode::PerPhoton => FlipModel {
                per_pulse: 0.0,
                per_photon: v.disturbance(),
            },
            DepolMode::PerPulse => FlipModel {
                per_pulse: v.disturbance(),
                per_photon: 0.0,
            },
        }
    }
}
