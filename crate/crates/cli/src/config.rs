//! Run settings: built-in reference values, overlaid by an optional JSON
//! config file, overlaid by command-line flags.
//!
//! Config file schema (every key optional, unknown keys rejected):
//!
//! ```json
//! {
//!   "protocol": "bb84" | "sarg04" | "both",
//!   "visibility": 0.954,
//!   "intrinsic_visibility": null,
//!   "attenuation_db_per_km": 3.0,
//!   "length_km": 1.27,
//!   "mu": 0.189,
//!   "detector_efficiency": 0.4,
//!   "dark_count_prob": 3.3e-5,
//!   "pulse_rate_hz": 1e6,
//!   "pulses": 10000000,
//!   "seed": 42,
//!   "depol_mode": "per_photon" | "per_pulse",
//!   "basis_choice": "active",
//!   "double_click_policy": "random_bit" | "discard",
//!   "sweep": { "start": 0.6, "stop": 1.0, "step": 0.02 },
//!   "mu_grid": { "start": 0.03, "stop": 0.30, "step": 0.001 },
//!   "f_ec": 1.0,
//!   "tolerance_sigmas": 5.0,
//!   "mc": false,
//!   "workers": null,
//!   "out_dir": "qkd-out",
//!   "ledger": "qkd-out/ledger.jsonl"
//! }
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use qkd_core::security::{inclusive_grid, MuGrid, SecurityParams};
use qkd_core::sim::{BasisChoice, DepolMode, DoubleClickPolicy, SimConfig};
use qkd_core::{Protocol, Visibility};

use crate::error::{CliError, Result};

/// Overrides the default output directory.
pub const OUT_DIR_ENV: &str = "QKD_OUT_DIR";
pub const DEFAULT_OUT_DIR: &str = "qkd-out";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum ProtocolSelection {
    Bb84,
    Sarg04,
    Both,
}

impl ProtocolSelection {
    pub fn protocols(self) -> Vec<Protocol> {
        match self {
            ProtocolSelection::Bb84 => vec![Protocol::Bb84],
            ProtocolSelection::Sarg04 => vec![Protocol::Sarg04],
            ProtocolSelection::Both => Protocol::ALL.to_vec(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Range {
    pub start: f64,
    pub stop: f64,
    pub step: f64,
}

impl Range {
    /// Default visibility sweep.
    pub const VISIBILITY: Range = Range {
        start: 0.6,
        stop: 1.0,
        step: 0.02,
    };

    pub fn points(&self) -> Result<Vec<f64>> {
        let finite = self.start.is_finite() && self.stop.is_finite() && self.step.is_finite();
        if !finite || self.step <= 0.0 || self.start > self.stop {
            return Err(CliError::Validation(format!(
                "sweep [{}, {}] step {} needs start <= stop and step > 0",
                self.start, self.stop, self.step
            )));
        }
        Ok(inclusive_grid(self.start, self.stop, self.step))
    }
}

/// Contents of a `--config` file.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub protocol: Option<ProtocolSelection>,
    pub visibility: Option<f64>,
    pub intrinsic_visibility: Option<f64>,
    pub attenuation_db_per_km: Option<f64>,
    pub length_km: Option<f64>,
    pub mu: Option<f64>,
    pub detector_efficiency: Option<f64>,
    pub dark_count_prob: Option<f64>,
    pub pulse_rate_hz: Option<f64>,
    pub pulses: Option<u64>,
    pub seed: Option<u64>,
    pub depol_mode: Option<DepolMode>,
    pub basis_choice: Option<BasisChoice>,
    pub double_click_policy: Option<DoubleClickPolicy>,
    pub sweep: Option<Range>,
    pub mu_grid: Option<Range>,
    pub f_ec: Option<f64>,
    pub tolerance_sigmas: Option<f64>,
    pub mc: Option<bool>,
    pub workers: Option<usize>,
    pub out_dir: Option<PathBuf>,
    pub ledger: Option<PathBuf>,
}

impl ConfigFile {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))
    }

    /// Fields set in `over` replace those in `self`.
    pub fn overlay(self, over: ConfigFile) -> ConfigFile {
        macro_rules! pick {
            ($($field:ident),*) => {
                ConfigFile { $($field: over.$field.or(self.$field)),* }
            };
        }
        pick!(
            protocol,
            visibility,
            intrinsic_visibility,
            attenuation_db_per_km,
            length_km,
            mu,
            detector_efficiency,
            dark_count_prob,
            pulse_rate_hz,
            pulses,
            seed,
            depol_mode,
            basis_choice,
            double_click_policy,
            sweep,
            mu_grid,
            f_ec,
            tolerance_sigmas,
            mc,
            workers,
            out_dir,
            ledger
        )
    }
}

/// Fully resolved, validated settings for one command.
#[derive(Debug, Clone, PartialEq)]
pub struct Settings {
    /// Simulation parameters; `base.protocol` is the first selected protocol.
    pub base: SimConfig,
    pub protocols: Vec<Protocol>,
    pub sweep: Range,
    pub mu_grid: MuGrid,
    pub security: SecurityParams,
    pub tolerance_sigmas: f64,
    pub mc: bool,
    pub workers: Option<usize>,
    pub out_dir: PathBuf,
    pub ledger: PathBuf,
    /// Visibility used for analytic targets in `compare`, when it should
    /// differ from the simulated one.
    pub target_visibility: Option<Visibility>,
}

/// The part of [`Settings`] that determines results; hashed for the ledger.
#[derive(Serialize)]
struct DigestView<'a> {
    base: &'a SimConfig,
    protocols: &'a [Protocol],
    sweep: &'a Range,
    mu_grid: &'a MuGrid,
    security: &'a SecurityParams,
    tolerance_sigmas: f64,
    mc: bool,
    target_visibility: Option<Visibility>,
}

impl Settings {
    pub fn resolve(file: ConfigFile) -> Result<Settings> {
        let mut base = SimConfig::reference(Protocol::Bb84);
        let selection = file.protocol.unwrap_or(ProtocolSelection::Both);
        let protocols = selection.protocols();
        base.protocol = protocols[0];

        if let Some(v) = file.visibility {
            base.channel.visibility = Visibility::new(v)?;
        }
        base.intrinsic_visibility = file.intrinsic_visibility.map(Visibility::new).transpose()?;
        set(&mut base.channel.attenuation_db_per_km, file.attenuation_db_per_km);
        set(&mut base.channel.length_km, file.length_km);
        set(&mut base.device.mu, file.mu);
        set(&mut base.device.detector_efficiency, file.detector_efficiency);
        set(&mut base.device.dark_count_prob, file.dark_count_prob);
        set(&mut base.device.pulse_rate_hz, file.pulse_rate_hz);
        set(&mut base.pulses, file.pulses);
        set(&mut base.seed, file.seed);
        set(&mut base.depol_mode, file.depol_mode);
        set(&mut base.basis_choice, file.basis_choice);
        set(&mut base.double_click, file.double_click_policy);
        base.validate()?;

        let sweep = file.sweep.unwrap_or(Range::VISIBILITY);
        sweep.points()?;
        let mu_grid = file.mu_grid.map_or_else(MuGrid::default, |r| MuGrid {
            start: r.start,
            stop: r.stop,
            step: r.step,
        });
        mu_grid.points()?;

        let security = SecurityParams {
            f_ec: file.f_ec.unwrap_or(1.0),
            ..SecurityParams::default()
        };
        security.validate()?;

        let tolerance_sigmas = file.tolerance_sigmas.unwrap_or(5.0);
        if !(tolerance_sigmas.is_finite() && tolerance_sigmas > 0.0) {
            return Err(CliError::Validation(format!(
                "tolerance must be a positive number of sigmas, got {tolerance_sigmas}"
            )));
        }
        if file.workers == Some(0) {
            return Err(CliError::Validation("worker count must be positive".into()));
        }

        let out_dir = file
            .out_dir
            .or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT_DIR));
        let ledger = file.ledger.unwrap_or_else(|| out_dir.join("ledger.jsonl"));

        Ok(Settings {
            base,
            protocols,
            sweep,
            mu_grid,
            security,
            tolerance_sigmas,
            mc: file.mc.unwrap_or(false),
            workers: file.workers,
            out_dir,
            ledger,
            target_visibility: None,
        })
    }

    pub fn sim_config(&self, protocol: Protocol) -> SimConfig {
        SimConfig { protocol, ..self.base }
    }

    /// Stable hash of everything that affects results.
    pub fn digest(&self) -> String {
        let view = DigestView {
            base: &self.base,
            protocols: &self.protocols,
            sweep: &self.sweep,
            mu_grid: &self.mu_grid,
            security: &self.security,
            tolerance_sigmas: self.tolerance_sigmas,
            mc: self.mc,
            target_visibility: self.target_visibility,
        };
        let value = serde_json::to_value(view).expect("settings serialize");
        digest_value(&value)
    }
}

fn set<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

/// JSON text with object keys sorted at every level.
pub fn canonical_json(value: &Value) -> String {
    match value {
        Value::Object(map) => {
            let mut entries: Vec<_> = map.iter().collect();
            entries.sort_by(|a, b| a.0.cmp(b.0));
            let body: Vec<String> = entries
                .into_iter()
                .map(|(k, v)| format!("{}:{}", Value::String(k.clone()), canonical_json(v)))
                .collect();
            format!("{{{}}}", body.join(","))
        }
        Value::Array(items) => {
            let body: Vec<String> = items.iter().map(canonical_json).collect();
            format!("[{}]", body.join(","))
        }
        other => other.to_string(),
    }
}

/// SHA-256 of the canonical JSON form, hex encoded.
pub fn digest_value(value: &Value) -> String {
    hex::encode(Sha256::digest(canonical_json(value).as_bytes()))
}
