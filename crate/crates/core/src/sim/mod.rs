//! Pulse-by-pulse Monte Carlo of the weak-pulse link.
//!
//! Each pulse: Alice picks one of the four states uniformly, the source emits
//! n ~ Poisson(μ) photons, every photon survives with probability η = η_d·t
//! and is flipped to the orthogonal state with probability D, Bob picks a
//! basis uniformly and looks at the two gated detectors of that basis.
//!
//! # Why the expectations equal the closed forms
//!
//! Poisson thinning makes the photon counts reaching different detectors
//! independent Poisson variables. Write a = p̄_d e^{−μFη}, b = p̄_d e^{−μDη};
//! these are the probabilities that the "correct" and "flipped" detectors stay
//! silent when Bob's basis matches Alice's.
//!
//! Matching basis: the wrong detector alone fires with probability a(1−b),
//! both fire with probability (1−a)(1−b) and then half the time the wrong one
//! is reported, so
//!
//! ```text
//! P(error | match) = a(1−b) + ½(1−a)(1−b) = ½(1 + a − b − ab),   ab = p̄_d² e^{−μη}
//! P(click | match) = 1 − ab
//! ```
//!
//! BB84 keeps matching-basis clicks: R = ½(1 − p̄_d² e^{−μη}) and R·Q = ¼(1 + a − b − ab).
//!
//! SARG04 with Alice sending V and announcing {V, +45}: in Z only an H outcome
//! is conclusive (and wrong, with the probability above); in X every photon is
//! split 50/50, each X detector stays silent with c = p̄_d e^{−μη/2}, and a −45
//! outcome (conclusive, correct) has probability ½(1 − c²) = ½(1 − p̄_d² e^{−μη}).
//! Averaging over Bob's basis:
//!
//! ```text
//! R = ½[½(1 + a − b − ab) + ½(1 − ab)] = ½(1 + a/2 − b/2 − p̄_d² e^{−μη})
//! R·Q = ¼(1 + a − b − ab)
//! ```
//!
//! which are the closed forms in [`crate::analytic`]. The same argument holds
//! for every state and announced set by symmetry. Dropping the random
//! resolution of double clicks, or firing dark counts on all four detectors,
//! breaks these identities.
//!
//! Every pulse draws from its own generator keyed by (seed, pulse index), so
//! a run is bit-identical however its pulses are split across threads.

mod config;
mod pulse;
mod run;

pub use config::{reference, BasisChoice, DepolMode, DoubleClickPolicy, FlipModel, SimConfig};
pub use pulse::{
    announce_set, detect, sample_pulse, sift_bb84, sift_sarg04, transmit, Arrivals, Detection, PhotonSource, Sift,
};
pub use run::{
    binomial_se, pulse_rng, simulate_run, simulate_run_sequential, simulate_run_with_workers, Announcement,
    PhotonNumberTally, PulseSimulator, RunStats, SiftRecord, BLOCK_PULSES,
};
