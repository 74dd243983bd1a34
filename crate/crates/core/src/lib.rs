//! Weak-pulse BB84 and SARG04 key distribution over a depolarizing channel.
//!
//! * [`types`]: states, bases, SARG04 sets and parameter records.
//! * [`analytic`]: closed-form QBER, sifted rate and overall error rate.
//! * [`security`]: secure-key lower bound and mean-photon-number search.
//! * [`sim`]: pulse-level Monte Carlo whose expectations match [`analytic`].

pub mod analytic;
pub mod error;
pub mod security;
pub mod sim;
pub mod types;

pub use error::{QkdError, Result};
pub use types::{
    sarg04_bit, sarg_sets_containing, Basis, ChannelParams, DeviceParams, PolarizationState, Protocol, PulseParams,
    SargSet, Visibility,
};
