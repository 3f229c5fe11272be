//! Cycle-accurate simulator of a queue-based quantum control
//! microarchitecture: an assembler for a quantum microinstruction set, an
//! execution controller with microcode expansion, a deterministic timing
//! controller driving codeword-triggered pulse generation, a small qubit
//! physics backend, and an AllXY calibration experiment harness.

pub mod adi;
pub mod config;
pub mod execution;
pub mod harness;
pub mod isa;
pub mod microcode;
pub mod qsim;
pub mod scalar;
pub mod timing;
pub mod trace;

pub use scalar::Scalar;

/// Double-precision single-qubit state, the default for simulation.
pub type QubitStateF64 = qsim::QubitState<f64>;
/// Single-precision single-qubit state.
pub type QubitStateF32 = qsim::QubitState<f32>;
/// Double-precision two-qubit register.
pub type TwoQubitRegisterF64 = qsim::TwoQubitRegister<f64>;
/// Double-precision measurement discrimination configuration.
pub type MduConfigF64 = adi::MduConfig<f64>;
/// Double-precision data collector.
pub type DataCollectorF64 = harness::DataCollector<f64>;
