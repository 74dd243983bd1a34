use std::time::{Duration, Instant};

use rand::{RngCore, SeedableRng};
use rand_xoshiro::Xoshiro256PlusPlus;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{DoubleClickPolicy, FlipModel, SimConfig};
use super::pulse::{announce_set, detect, sift_bb84, sift_sarg04, transmit, Detection, PhotonSource};
use crate::error::{QkdError, Result};
use crate::types::{sarg04_bit, Basis, PolarizationState, Protocol, SargSet};

/// Pulses handed to a worker at a time. Results do not depend on it.
pub const BLOCK_PULSES: u64 = 1 << 16;

/// Independent generator for pulse `index` of the run keyed by `seed`.
pub fn pulse_rng(seed: u64, index: u64) -> Xoshiro256PlusPlus {
    Xoshiro256PlusPlus::seed_from_u64(seed ^ index.wrapping_mul(0xD1B5_4A32_D192_ED03))
}

/// What Alice discloses for sifting.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Announcement {
    Basis(Basis),
    Set(SargSet),
}

/// Full trace of one pulse.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SiftRecord {
    pub alice_state: PolarizationState,
    pub alice_bit: u8,
    pub announced: Announcement,
    pub photon_count: u32,
    pub bob_basis: Basis,
    pub bob_outcome: Detection,
    pub kept: bool,
    pub error: bool,
}

/// A validated configuration compiled for the pulse loop.
#[derive(Debug, Clone, Copy)]
pub struct PulseSimulator {
    protocol: Protocol,
    seed: u64,
    source: PhotonSource,
    survival: f64,
    flips: FlipModel,
    dark_count: f64,
    double_click: DoubleClickPolicy,
}

impl PulseSimulator {
    pub fn new(config: &SimConfig) -> Result<Self> {
        config.validate()?;
        let pulse = config.pulse_params()?;
        Ok(PulseSimulator {
            protocol: config.protocol,
            seed: config.seed,
            source: PhotonSource::new(pulse.mu)?,
            survival: pulse.eta,
            flips: config.flip_model(),
            dark_count: pulse.dark_count,
            double_click: config.double_click,
        })
    }

    /// Simulates pulse `index`; the same index always yields the same record.
    pub fn pulse(&self, index: u64) -> SiftRecord {
        let mut rng = pulse_rng(self.seed, index);
        let choices = rng.next_u32();
        let alice = PolarizationState::from_index(choices);
        let bob_basis = if choices & 4 == 0 { Basis::Z } else { Basis::X };

        let n = self.source.sample(&mut rng);
        let arrivals = transmit(&mut rng, alice, n, self.survival, self.flips);
        let outcome = detect(&mut rng, arrivals, bob_basis, self.dark_count, self.double_click);

        let (announced, alice_bit, sift) = match self.protocol {
            Protocol::Bb84 => (
                Announcement::Basis(alice.basis()),
                alice.bb84_bit(),
                sift_bb84(alice, bob_basis, outcome),
            ),
            Protocol::Sarg04 => {
                let set = announce_set(&mut rng, alice);
                let sift = sift_sarg04(alice, set, outcome).expect("announced set contains the sent state");
                (Announcement::Set(set), sarg04_bit(alice.basis()), sift)
            }
        };
        SiftRecord {
            alice_state: alice,
            alice_bit,
            announced,
            photon_count: n,
            bob_basis,
            bob_outcome: outcome,
            kept: sift.kept,
            error: sift.error,
        }
    }

    fn run_range(&self, start: u64, end: u64) -> Tally {
        let mut tally = Tally::default();
        for index in start..end {
            tally.record(&self.pulse(index));
        }
        tally
    }
}

/// Counts for pulses carrying exactly `n` photons.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct PhotonNumberTally {
    pub n: u32,
    pub sent: u64,
    /// Pulses that ended up in the sifted key.
    pub conclusive: u64,
    pub errors: u64,
}

impl PhotonNumberTally {
    /// Y_n: probability that an n-photon pulse yields a sifted bit.
    pub fn yield_(&self) -> f64 {
        ratio(self.conclusive, self.sent)
    }

    /// R_n: sifted bits from n-photon pulses per pulse sent overall.
    pub fn rate(&self, pulses: u64) -> f64 {
        ratio(self.conclusive, pulses)
    }

    /// Q_n, undefined without conclusive pulses.
    pub fn qber(&self) -> Option<f64> {
        (self.conclusive > 0).then(|| ratio(self.errors, self.conclusive))
    }
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
struct Tally {
    pulses: u64,
    sifted: u64,
    errors: u64,
    per_n: Vec<[u64; 3]>,
}

impl Tally {
    fn record(&mut self, rec: &SiftRecord) {
        let n = rec.photon_count as usize;
        if self.per_n.len() <= n {
            self.per_n.resize(n + 1, [0; 3]);
        }
        let row = &mut self.per_n[n];
        self.pulses += 1;
        row[0] += 1;
        if rec.kept {
            self.sifted += 1;
            row[1] += 1;
            if rec.error {
                self.errors += 1;
                row[2] += 1;
            }
        }
    }

    fn merge(mut self, other: Tally) -> Tally {
        self.pulses += other.pulses;
        self.sifted += other.sifted;
        self.errors += other.errors;
        if self.per_n.len() < other.per_n.len() {
            self.per_n.resize(other.per_n.len(), [0; 3]);
        }
        for (mine, theirs) in self.per_n.iter_mut().zip(&other.per_n) {
            for k in 0..3 {
                mine[k] += theirs[k];
            }
        }
        self
    }
}

/// Aggregate outcome of a run. Serializes to the stats JSON schema.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunStats {
    pub protocol: Protocol,
    pub pulses: u64,
    pub sifted: u64,
    pub errors: u64,
    /// errors / sifted; null when nothing was sifted.
    pub qber: Option<f64>,
    pub sifted_rate: f64,
    pub error_rate: f64,
    pub per_n: Vec<PhotonNumberTally>,
    /// Wall-clock time; kept out of the JSON so stats files are reproducible.
    #[serde(skip)]
    pub elapsed: Duration,
}

impl RunStats {
    fn from_tally(protocol: Protocol, tally: Tally, elapsed: Duration) -> Self {
        let per_n = tally
            .per_n
            .iter()
            .enumerate()
            .filter(|(_, row)| row[0] > 0)
            .map(|(n, row)| PhotonNumberTally {
                n: n as u32,
                sent: row[0],
                conclusive: row[1],
                errors: row[2],
            })
            .collect();
        RunStats {
            protocol,
            pulses: tally.pulses,
            sifted: tally.sifted,
            errors: tally.errors,
            qber: (tally.sifted > 0).then(|| ratio(tally.errors, tally.sifted)),
            sifted_rate: ratio(tally.sifted, tally.pulses),
            error_rate: ratio(tally.errors, tally.pulses),
            per_n,
            elapsed,
        }
    }

    /// Binomial standard error of the QBER estimate, taken at `p` (often the
    /// analytic target) over the sifted sample.
    pub fn qber_se_at(&self, p: f64) -> f64 {
        binomial_se(p, self.sifted)
    }

    pub fn sifted_rate_se_at(&self, p: f64) -> f64 {
        binomial_se(p, self.pulses)
    }

    pub fn error_rate_se_at(&self, p: f64) -> f64 {
        binomial_se(p, self.pulses)
    }

    pub fn photon_number(&self, n: u32) -> Option<&PhotonNumberTally> {
        self.per_n.iter().find(|row| row.n == n)
    }
}

/// sqrt(p(1−p)/trials); zero for an empty sample.
pub fn binomial_se(p: f64, trials: u64) -> f64 {
    if trials == 0 {
        return 0.0;
    }
    (p * (1.0 - p) / trials as f64).max(0.0).sqrt()
}

/// Runs the configured number of pulses on the global thread pool.
pub fn simulate_run(config: &SimConfig) -> Result<RunStats> {
    let started = Instant::now();
    let sim = PulseSimulator::new(config)?;
    let blocks = config.pulses.div_ceil(BLOCK_PULSES);
    let tally = (0..blocks)
        .into_par_iter()
        .map(|b| {
            let start = b * BLOCK_PULSES;
            sim.run_range(start, (start + BLOCK_PULSES).min(config.pulses))
        })
        .reduce(Tally::default, Tally::merge);
    Ok(RunStats::from_tally(config.protocol, tally, started.elapsed()))
}

/// Same as [`simulate_run`] on a dedicated pool of `workers` threads.
pub fn simulate_run_with_workers(config: &SimConfig, workers: usize) -> Result<RunStats> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| QkdError::InvalidConfig(format!("thread pool: {e}")))?;
    pool.install(|| simulate_run(config))
}

/// Sequential reference path; used to check the parallel merge.
pub fn simulate_run_sequential(config: &SimConfig) -> Result<RunStats> {
    let started = Instant::now();
    let sim = PulseSimulator::new(config)?;
    let tally = sim.run_range(0, config.pulses);
    Ok(RunStats::from_tally(config.protocol, tally, started.elapsed()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::Visibility;

    fn small(protocol: Protocol) -> SimConfig {
        SimConfig {
            pulses: 200_000,
            ..SimConfig::reference(protocol)
        }
    }

    #[test]
    fn perfect_channel_has_no_errors() {
        let mut cfg = small(Protocol::Bb84);
        cfg.channel.visibility = Visibility::PERFECT;
        cfg.device.dark_count_prob = 0.0;
        let stats = simulate_run(&cfg).unwrap();
        assert!(stats.sifted > 0);
        assert_eq!(stats.errors, 0);
        assert_eq!(stats.qber, Some(0.0));
    }

    #[test]
    fn parallel_equals_sequential() {
        for protocol in Protocol::ALL {
            let cfg = SimConfig {
                pulses: 3 * BLOCK_PULSES + 17,
                ..small(protocol)
            };
            let par = simulate_run_with_workers(&cfg, 3).unwrap();
            let seq = simulate_run_sequential(&cfg).unwrap();
            assert_eq!(
                RunStats {
                    elapsed: Duration::ZERO,
                    ..par
                },
                RunStats {
                    elapsed: Duration::ZERO,
                    ..seq
                }
            );
        }
    }

    #[test]
    fn per_n_sums_reconstruct_totals() {
        let stats = simulate_run(&small(Protocol::Sarg04)).unwrap();
        let sent: u64 = stats.per_n.iter().map(|r| r.sent).sum();
        let conclusive: u64 = stats.per_n.iter().map(|r| r.conclusive).sum();
        let errors: u64 = stats.per_n.iter().map(|r| r.errors).sum();
        assert_eq!(sent, stats.pulses);
        assert_eq!(conclusive, stats.sifted);
        assert_eq!(errors, stats.errors);
        let rate: f64 = stats.per_n.iter().map(|r| r.rate(stats.pulses)).sum();
        assert!((rate - stats.sifted_rate).abs() < 1e-15);
        for row in &stats.per_n {
            assert!((0.0..=1.0).contains(&row.yield_()));
        }
    }

    #[test]
    fn records_respect_invariants() {
        let sim = PulseSimulator::new(&small(Protocol::Sarg04)).unwrap();
        for i in 0..50_000 {
            let rec = sim.pulse(i);
            assert!(!rec.error || rec.kept);
            assert!(!rec.kept || rec.bob_outcome != Detection::NoClick);
            match rec.announced {
                Announcement::Set(set) => assert!(set.contains(rec.alice_state)),
                Announcement::Basis(_) => panic!("SARG04 announces sets"),
            }
        }
    }

    #[test]
    fn stats_json_field_names() {
        let stats = simulate_run(&SimConfig {
            pulses: 1000,
            ..small(Protocol::Bb84)
        })
        .unwrap();
        let json = serde_json::to_value(&stats).unwrap();
        for key in ["pulses", "sifted", "errors", "qber", "per_n"] {
            assert!(json.get(key).is_some(), "missing {key}");
        }
        let row = &json["per_n"][0];
        for key in ["n", "sent", "conclusive", "errors"] {
            assert!(row.get(key).is_some(), "missing per_n.{key}");
        }
        assert!(json.get("elapsed").is_none());
    }
}
