//! TOML run configuration and the on-disk pulse lookup table format.

use std::path::{Path, PathBuf};

use serde::Deserialize;
use thiserror::Error;

use crate::adi::{Envelope, GateSemantics, LookupTable, PulseDef};
use crate::execution::DEFAULT_STEP_BUDGET;
use crate::microcode::QControlStore;
use crate::timing::DEFAULT_QUEUE_CAPACITY;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("reading {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("parsing {path}: {source}")]
    Toml { path: PathBuf, source: toml::de::Error },
    #[error("pulse entry {index}: {message}")]
    BadPulse { index: usize, message: String },
    #[error("microprogram file: {0}")]
    BadMicroprogram(String),
}

fn default_queue_capacity() -> usize {
    DEFAULT_QUEUE_CAPACITY
}
fn default_ctpg_delay() -> u64 {
    crate::adi::DEFAULT_TRIGGER_DELAY_CYCLES
}
fn default_ssb_freq() -> f64 {
    -0.05
}
fn default_t1() -> f64 {
    20000.0
}
fn default_mu1() -> f64 {
    1.0
}
fn default_step_budget() -> u64 {
    DEFAULT_STEP_BUDGET
}

#[derive(Debug, Clone, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    #[serde(default)]
    pub timing: TimingConfig,
    #[serde(default)]
    pub ctpg: CtpgConfig,
    #[serde(default)]
    pub microcode: MicrocodeConfig,
    #[serde(default)]
    pub readout: ReadoutConfig,
    #[serde(default)]
    pub qubit: QubitConfig,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimingConfig {
    #[serde(default = "default_queue_capacity")]
    pub queue_capacity: usize,
    #[serde(default = "default_step_budget")]
    pub step_budget: u64,
}

impl Default for TimingConfig {
    fn default() -> Self {
        TimingConfig {
            queue_capacity: default_queue_capacity(),
            step_budget: default_step_budget(),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CtpgConfig {
    #[serde(default = "default_ctpg_delay")]
    pub delay_cycles: u64,
    #[serde(default = "default_ssb_freq")]
    pub ssb_freq_ghz: f64,
    /// Extra delay applied to x-axis pulses only, in ns (timing-skew fault
    /// injection).
    #[serde(default)]
    pub x_delay_ns: f64,
    /// Path to a pulse lookup table file; the built-in table when absent.
    #[serde(default)]
    pub lookup_table: Option<PathBuf>,
}

impl Default for CtpgConfig {
    fn default() -> Self {
        CtpgConfig {
            delay_cycles: default_ctpg_delay(),
            ssb_freq_ghz: default_ssb_freq(),
            x_delay_ns: 0.0,
            lookup_table: None,
        }
    }
}

#[derive(Debug, Clone, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct MicrocodeConfig {
    /// Path to extra microprogram definitions loaded on top of the built-ins.
    #[serde(default)]
    pub definitions: Option<PathBuf>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReadoutConfig {
    /// Mean readout level of |0>.
    #[serde(default)]
    pub mu0: f64,
    /// Mean readout level of |1>.
    #[serde(default = "default_mu1")]
    pub mu1: f64,
    /// Readout noise standard deviation (sampled mode).
    #[serde(default)]
    pub sigma: f64,
    /// Discrimination threshold; midway between the means when absent.
    #[serde(default)]
    pub threshold: Option<f64>,
}

impl Default for ReadoutConfig {
    fn default() -> Self {
        ReadoutConfig { mu0: 0.0, mu1: default_mu1(), sigma: 0.0, threshold: None }
    }
}

impl ReadoutConfig {
    pub fn threshold(&self) -> f64 {
        self.threshold.unwrap_or((self.mu0 + self.mu1) / 2.0)
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QubitConfig {
    #[serde(default = "default_t1")]
    pub t1_ns: f64,
}

impl Default for QubitConfig {
    fn default() -> Self {
        QubitConfig { t1_ns: default_t1() }
    }
}

impl SimConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|source| ConfigError::Io { path: path.to_path_buf(), source })?;
        toml::from_str(&text)
            .map_err(|source| ConfigError::Toml { path: path.to_path_buf(), source })
    }

    /// Builds the pulse lookup table, reading the configured file if set.
    pub fn lookup_table(&self) -> Result<LookupTable, ConfigError> {
        match &self.ctpg.lookup_table {
            None => Ok(LookupTable::default_single_qubit()),
            Some(path) => load_lookup_table(path),
        }
    }

    /// Builds the Q control store, loading extra definitions if configured.
    pub fn control_store(&self) -> Result<QControlStore, ConfigError> {
        let mut store = QControlStore::with_defaults();
        if let Some(path) = &self.microcode.definitions {
            let text = std::fs::read_to_string(path)
                .map_err(|source| ConfigError::Io { path: path.clone(), source })?;
            store
                .load_definitions(&text)
                .map_err(|e| ConfigError::BadMicroprogram(e.to_string()))?;
        }
        Ok(store)
    }
}

/// On-disk lookup table entry.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct PulseEntry {
    codeword: u8,
    /// Gate kind: "identity", "rotation", "cz", or "measurement".
    gate: String,
    #[serde(default)]
    axis_rad: Option<f64>,
    #[serde(default)]
    angle_rad: Option<f64>,
    duration_ns: f64,
    #[serde(default = "default_mu1")]
    amplitude: f64,
    #[serde(default)]
    envelope: Envelope,
}

#[derive(Debug, Clone, Deserialize)]
struct LookupTableFile {
    #[serde(default)]
    sample_rate_gsps: Option<f64>,
    #[serde(default)]
    resolution_bits: Option<u32>,
    #[serde(rename = "pulse", default)]
    pulses: Vec<PulseEntry>,
}

/// Loads a `[[pulse]]`-list TOML lookup table.
pub fn load_lookup_table(path: &Path) -> Result<LookupTable, ConfigError> {
    let text = std::fs::read_to_string(path)
        .map_err(|source| ConfigError::Io { path: path.to_path_buf(), source })?;
    let file: LookupTableFile = toml::from_str(&text)
        .map_err(|source| ConfigError::Toml { path: path.to_path_buf(), source })?;
    let mut entries = Vec::with_capacity(file.pulses.len());
    for (index, p) in file.pulses.iter().enumerate() {
        let gate = match p.gate.as_str() {
            "identity" => GateSemantics::Identity,
            "cz" => GateSemantics::Cz,
            "measurement" => GateSemantics::Measurement,
            "rotation" => {
                let axis = p.axis_rad.ok_or_else(|| ConfigError::BadPulse {
                    index,
                    message: "rotation needs axis_rad".to_string(),
                })?;
                let angle = p.angle_rad.ok_or_else(|| ConfigError::BadPulse {
                    index,
                    message: "rotation needs angle_rad".to_string(),
                })?;
                GateSemantics::Rotation { axis, angle }
            }
            other => {
                return Err(ConfigError::BadPulse {
                    index,
                    message: format!("unknown gate kind `{other}`"),
                })
            }
        };
        entries.push(PulseDef {
            codeword: p.codeword,
            gate,
            duration_ns: p.duration_ns,
            amplitude: p.amplitude,
            envelope: p.envelope,
        });
    }
    let mut lut = LookupTable::new(entries);
    if let Some(rate) = file.sample_rate_gsps {
        lut.sample_rate_gsps = rate;
    }
    if let Some(bits) = file.resolution_bits {
        lut.resolution_bits = bits;
    }
    Ok(lut)
}
