//! Analog-digital interface: micro-op unit sequence tables, codeword-triggered
//! pulse generation, measurement pulse gating, and measurement discrimination.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::Scalar;
use crate::timing::CYCLE_NS;

/// Cycles between a codeword trigger and the analog start of its pulse. All
/// codeword-triggered generators share this fixed latency, so relative pulse
/// timing equals relative trigger timing.
pub const DEFAULT_TRIGGER_DELAY_CYCLES: u64 = 16;

/// Default codeword trigger sample rate resolution, in GSa/s.
pub const DEFAULT_SAMPLE_RATE_GSPS: f64 = 1.0;
/// DAC resolution used for waveform memory accounting.
pub const DEFAULT_RESOLUTION_BITS: u32 = 12;

#[derive(Debug, Error, PartialEq)]
pub enum AdiError {
    #[error("micro-op {0:?} has no sequence table entry")]
    UnknownMicroOp(String),
    #[error("codeword {0} has no lookup table entry")]
    UnknownCodeword(u8),
    #[error("measurement pulse window starting at cycle {start} overlaps the window starting at {previous}")]
    OverlappingMeasurementWindow { start: u64, previous: u64 },
    #[error("discrimination input is empty")]
    EmptySignal,
    #[error("weight vector length {weights} does not match signal length {signal}")]
    WeightLengthMismatch { weights: usize, signal: usize },
}

/// One codeword trigger leaving the micro-op unit for a pulse generator.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CodewordTrigger {
    /// T_D cycle the trigger is raised.
    pub cycle: u64,
    /// Pulse generator (qubit channel) the trigger addresses.
    pub unit: u8,
    pub codeword: u8,
}

/// Sequence table: micro-op name to a list of (cycle offset, codeword)
/// trigger steps. Composite micro-ops expand to several triggers.
#[derive(Debug, Clone)]
pub struct SeqTable {
    entries: Vec<(String, Vec<(u64, u8)>)>,
}

impl SeqTable {
    pub fn new(entries: Vec<(String, Vec<(u64, u8)>)>) -> Self {
        SeqTable { entries }
    }

    /// Single-qubit default table. The primitive rotations map to one
    /// codeword each; Z is composed from two X rotations 4 cycles apart.
    pub fn default_single_qubit() -> Self {
        SeqTable::new(vec![
            ("I".into(), vec![(0, 0)]),
            ("X180".into(), vec![(0, 1)]),
            ("X90".into(), vec![(0, 2)]),
            ("Xm90".into(), vec![(0, 3)]),
            ("Y180".into(), vec![(0, 4)]),
            ("Y90".into(), vec![(0, 5)]),
            ("Ym90".into(), vec![(0, 6)]),
            ("Z".into(), vec![(0, 1), (4, 4)]),
            ("CZ".into(), vec![(0, 8)]),
        ])
    }

    pub fn steps(&self, uop: &str) -> Option<&[(u64, u8)]> {
        self.entries
            .iter()
            .find(|(name, _)| name == uop)
            .map(|(_, steps)| steps.as_slice())
    }

    /// Expands a micro-op fired at `cycle` into codeword triggers for `unit`.
    pub fn emit_codewords(
        &self,
        uop: &str,
        cycle: u64,
        unit: u8,
    ) -> Result<Vec<CodewordTrigger>, AdiError> {
        let steps = self
            .steps(uop)
            .ok_or_else(|| AdiError::UnknownMicroOp(uop.to_string()))?;
        Ok(steps
            .iter()
            .map(|&(offset, codeword)| CodewordTrigger { cycle: cycle + offset, unit, codeword })
            .collect())
    }
}

/// What a pulse does to the qubit state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GateSemantics {
    Identity,
    /// Rotation by `angle` radians about the equatorial axis at `axis`
    /// radians from x (0 = x, pi/2 = y).
    Rotation { axis: f64, angle: f64 },
    Cz,
    Measurement,
}

/// Pulse envelope shape for waveform rendering.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Envelope {
    #[default]
    Gaussian,
    Square,
}

/// One lookup table entry: codeword to pulse definition.
#[derive(Debug, Clone, PartialEq)]
pub struct PulseDef {
    pub codeword: u8,
    pub gate: GateSemantics,
    pub duration_ns: f64,
    pub amplitude: f64,
    pub envelope: Envelope,
}

/// Codeword-indexed lookup table of pulse definitions, shared by every
/// generated pulse so each waveform is stored once.
#[derive(Debug, Clone)]
pub struct LookupTable {
    entries: Vec<PulseDef>,
    pub sample_rate_gsps: f64,
    pub resolution_bits: u32,
}

impl LookupTable {
    pub fn new(entries: Vec<PulseDef>) -> Self {
        LookupTable {
            entries,
            sample_rate_gsps: DEFAULT_SAMPLE_RATE_GSPS,
            resolution_bits: DEFAULT_RESOLUTION_BITS,
        }
    }

    /// Default single-qubit table: identity plus the six pi and pi/2
    /// rotations about x and y, each 20 ns, and the measurement and CZ
    /// pulses on the codewords above them.
    pub fn default_single_qubit() -> Self {
        use std::f64::consts::{FRAC_PI_2, PI};
        let rot = |axis, angle| GateSemantics::Rotation { axis, angle };
        let def = |codeword, gate, duration_ns| PulseDef {
            codeword,
            gate,
            duration_ns,
            amplitude: 1.0,
            envelope: Envelope::Gaussian,
        };
        LookupTable::new(vec![
            def(0, GateSemantics::Identity, 20.0),
            def(1, rot(0.0, PI), 20.0),
            def(2, rot(0.0, FRAC_PI_2), 20.0),
            def(3, rot(0.0, -FRAC_PI_2), 20.0),
            def(4, rot(FRAC_PI_2, PI), 20.0),
            def(5, rot(FRAC_PI_2, FRAC_PI_2), 20.0),
            def(6, rot(FRAC_PI_2, -FRAC_PI_2), 20.0),
            def(7, GateSemantics::Measurement, 1500.0),
            def(8, GateSemantics::Cz, 40.0),
        ])
    }

    pub fn get(&self, codeword: u8) -> Result<&PulseDef, AdiError> {
        self.entries
            .iter()
            .find(|p| p.codeword == codeword)
            .ok_or(AdiError::UnknownCodeword(codeword))
    }

    pub fn entries(&self) -> &[PulseDef] {
        &self.entries
    }

    /// Waveform memory needed to store the listed codewords once each, in
    /// bytes. A pulse of duration T at rate R stores 2 T R samples (both the
    /// in-phase and quadrature components) at the table's resolution.
    pub fn footprint_bytes(&self, codewords: &[u8]) -> Result<u64, AdiError> {
        let mut bits = 0u64;
        for &cw in codewords {
            let def = self.get(cw)?;
            let samples = 2 * (def.duration_ns * self.sample_rate_gsps).round() as u64;
            bits += samples * self.resolution_bits as u64;
        }
        Ok(bits.div_ceil(8))
    }
}

/// Waveform memory needed when whole operation sequences are stored as
/// pre-combined waveforms instead of one entry per codeword: `waveforms`
/// distinct waveforms, each `ops_per_waveform` operation slots of
/// `op_duration_ns`, with both I and Q components, at the table's sample rate
/// and resolution.
pub fn combined_waveform_baseline_bytes(
    lut: &LookupTable,
    waveforms: u64,
    ops_per_waveform: u64,
    op_duration_ns: f64,
) -> u64 {
    let samples = 2 * (op_duration_ns * lut.sample_rate_gsps).round() as u64;
    let bits = waveforms * ops_per_waveform * samples * lut.resolution_bits as u64;
    bits.div_ceil(8)
}

/// A pulse emitted by a codeword-triggered pulse generator.
#[derive(Debug, Clone, PartialEq)]
pub struct PulseEvent {
    pub unit: u8,
    pub codeword: u8,
    /// T_D cycle of the analog start (trigger cycle + fixed delay).
    pub start_cycle: u64,
    pub start_ns: f64,
    pub gate: GateSemantics,
    pub duration_ns: f64,
}

/// Codeword-triggered pulse generator: turns triggers into pulse events with
/// a fixed trigger-to-analog latency.
#[derive(Debug, Clone)]
pub struct Ctpg {
    pub unit: u8,
    pub lut: LookupTable,
    pub delay_cycles: u64,
}

impl Ctpg {
    pub fn new(unit: u8, lut: LookupTable) -> Self {
        Ctpg { unit, lut, delay_cycles: DEFAULT_TRIGGER_DELAY_CYCLES }
    }

    pub fn generate_pulse(&self, trigger: &CodewordTrigger) -> Result<PulseEvent, AdiError> {
        let def = self.lut.get(trigger.codeword)?;
        let start_cycle = trigger.cycle + self.delay_cycles;
        Ok(PulseEvent {
            unit: self.unit,
            codeword: trigger.codeword,
            start_cycle,
            start_ns: start_cycle as f64 * CYCLE_NS,
            gate: def.gate,
            duration_ns: def.duration_ns,
        })
    }

    /// Renders one codeword's I/Q waveform with single-sideband modulation at
    /// `ssb_freq_ghz`, quantized to the table's DAC resolution. Returns
    /// (time_ns, i, q) samples.
    pub fn render_waveform(
        &self,
        codeword: u8,
        ssb_freq_ghz: f64,
    ) -> Result<Vec<(f64, f64, f64)>, AdiError> {
        let def = self.lut.get(codeword)?;
        let dt = 1.0 / self.lut.sample_rate_gsps;
        let n = (def.duration_ns * self.lut.sample_rate_gsps).round() as usize;
        let max_code = ((1u32 << (self.lut.resolution_bits - 1)) - 1) as f64;
        let quantize = |v: f64| (v * max_code).round() / max_code;
        let mid = def.duration_ns / 2.0;
        let sigma = def.duration_ns / 8.0;
        let mut out = Vec::with_capacity(n);
        for k in 0..n {
            let t = k as f64 * dt;
            let env = match def.envelope {
                Envelope::Gaussian => (-((t - mid) / sigma).powi(2) / 2.0).exp(),
                Envelope::Square => 1.0,
            };
            let phase = std::f64::consts::TAU * ssb_freq_ghz * t;
            let i = def.amplitude * env * phase.cos();
            let q = def.amplitude * env * phase.sin();
            out.push((t, quantize(i), quantize(q)));
        }
        Ok(out)
    }

    /// CSV dump of [`render_waveform`], header `t_ns,i,q`.
    pub fn waveform_csv(&self, codeword: u8, ssb_freq_ghz: f64) -> Result<String, AdiError> {
        let samples = self.render_waveform(codeword, ssb_freq_ghz)?;
        let mut out = String::from("t_ns,i,q\n");
        for (t, i, q) in samples {
            writeln!(out, "{t},{i},{q}").expect("string write");
        }
        Ok(out)
    }
}

/// Tracks measurement pulse windows; concurrent windows on one channel are a
/// hardware fault.
#[derive(Debug, Clone, Default)]
pub struct MpgTracker {
    windows: Vec<(u64, u64)>,
}

impl MpgTracker {
    pub fn open(&mut self, start_cycle: u64, duration_cycles: u64) -> Result<(), AdiError> {
        if let Some(&(prev_start, prev_end)) = self.windows.last() {
            if start_cycle < prev_end {
                return Err(AdiError::OverlappingMeasurementWindow {
                    start: start_cycle,
                    previous: prev_start,
                });
            }
        }
        self.windows.push((start_cycle, start_cycle + duration_cycles));
        Ok(())
    }

    pub fn windows(&self) -> &[(u64, u64)] {
        &self.windows
    }
}

/// Measurement discrimination unit configuration: integration weights, sample
/// rate of the digitized signal, and the binary threshold.
#[derive(Debug, Clone)]
pub struct MduConfig<F: Scalar> {
    pub weights: Vec<F>,
    pub sample_rate_gsps: F,
    pub threshold: F,
}

impl<F: Scalar> MduConfig<F> {
    /// Uniform unit weights over `samples` points.
    pub fn uniform(samples: usize, sample_rate_gsps: F, threshold: F) -> Self {
        MduConfig { weights: vec![F::one(); samples], sample_rate_gsps, threshold }
    }
}

/// Weighted integration followed by binary thresholding: returns the
/// integrated signal S and the qubit bit S > threshold.
pub fn discriminate<F: Scalar>(cfg: &MduConfig<F>, signal: &[F]) -> Result<(F, bool), AdiError> {
    if signal.is_empty() {
        return Err(AdiError::EmptySignal);
    }
    if cfg.weights.len() != signal.len() {
        return Err(AdiError::WeightLengthMismatch {
            weights: cfg.weights.len(),
            signal: signal.len(),
        });
    }
    let dt = F::one() / cfg.sample_rate_gsps;
    let s = signal
        .iter()
        .zip(&cfg.weights)
        .map(|(&v, &w)| v * w * dt)
        .sum::<F>();
    Ok((s, s > cfg.threshold))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn composite_z_expands_to_two_triggers() {
        let table = SeqTable::default_single_qubit();
        let triggers = table.emit_codewords("Z", 100, 0).unwrap();
        assert_eq!(
            triggers,
            vec![
                CodewordTrigger { cycle: 100, unit: 0, codeword: 1 },
                CodewordTrigger { cycle: 104, unit: 0, codeword: 4 },
            ]
        );
    }

    #[test]
    fn primitive_rotation_is_one_trigger() {
        let table = SeqTable::default_single_qubit();
        let triggers = table.emit_codewords("X180", 40000, 2).unwrap();
        assert_eq!(triggers, vec![CodewordTrigger { cycle: 40000, unit: 2, codeword: 1 }]);
    }

    #[test]
    fn unknown_micro_op_is_an_error() {
        let table = SeqTable::default_single_qubit();
        assert_eq!(
            table.emit_codewords("XYZ", 0, 0).unwrap_err(),
            AdiError::UnknownMicroOp("XYZ".into())
        );
    }

    #[test]
    fn trigger_delay_is_sixteen_cycles() {
        let ctpg = Ctpg::new(0, LookupTable::default_single_qubit());
        let pulse = ctpg
            .generate_pulse(&CodewordTrigger { cycle: 40000, unit: 0, codeword: 1 })
            .unwrap();
        assert_eq!(pulse.start_cycle, 40016);
        assert_eq!(pulse.start_ns, 200080.0);
        assert_eq!(pulse.duration_ns, 20.0);
        assert_eq!(pulse.gate, GateSemantics::Rotation { axis: 0.0, angle: std::f64::consts::PI });
    }

    #[test]
    fn per_codeword_storage_footprint() {
        let lut = LookupTable::default_single_qubit();
        // Seven 20 ns pulses at 1 GSa/s, 12-bit, I and Q: 7 * 2 * 20 * 12 / 8.
        assert_eq!(lut.footprint_bytes(&[0, 1, 2, 3, 4, 5, 6]).unwrap(), 420);
    }

    #[test]
    fn combined_waveform_baseline() {
        let lut = LookupTable::default_single_qubit();
        // 21 waveforms of 2 operations, 20 ns each: 21 * 2 * 2 * 20 * 12 / 8.
        assert_eq!(combined_waveform_baseline_bytes(&lut, 21, 2, 20.0), 2520);
    }

    #[test]
    fn constant_signal_integrates_to_area() {
        let cfg = MduConfig::<f64>::uniform(50, 1.0, 25.0);
        let signal = vec![1.0; 50];
        let (s, bit) = discriminate(&cfg, &signal).unwrap();
        assert_eq!(s, 50.0);
        assert!(bit);
    }

    #[test]
    fn threshold_comparison_is_strict() {
        let cfg = MduConfig::<f64>::uniform(4, 1.0, 4.0);
        let (s, bit) = discriminate(&cfg, &vec![1.0; 4]).unwrap();
        assert_eq!(s, 4.0);
        assert!(!bit, "S equal to the threshold must read as 0");
    }

    #[test]
    fn mismatched_weights_rejected() {
        let cfg = MduConfig::<f64>::uniform(3, 1.0, 0.0);
        assert!(matches!(
            discriminate(&cfg, &[1.0, 2.0]),
            Err(AdiError::WeightLengthMismatch { weights: 3, signal: 2 })
        ));
    }

    #[test]
    fn overlapping_measurement_windows_fault() {
        let mut tracker = MpgTracker::default();
        tracker.open(100, 300).unwrap();
        assert!(tracker.open(399, 300).is_err());
        tracker.open(400, 300).unwrap();
    }

    #[test]
    fn waveform_is_quantized_and_bounded() {
        let ctpg = Ctpg::new(0, LookupTable::default_single_qubit());
        let samples = ctpg.render_waveform(1, -0.05).unwrap();
        assert_eq!(samples.len(), 20);
        let max_code = ((1u32 << 11) - 1) as f64;
        for (_, i, q) in samples {
            assert!(i.abs() <= 1.0 && q.abs() <= 1.0);
            assert!((i * max_code - (i * max_code).round()).abs() < 1e-9);
            assert!((q * max_code - (q * max_code).round()).abs() < 1e-9);
        }
    }

    proptest::proptest! {
        #[test]
        fn discrimination_is_linear(signal in proptest::collection::vec(-10.0f64..10.0, 1..64), scale in 0.1f64..5.0) {
            let cfg = MduConfig::<f64>::uniform(signal.len(), 1.0, 0.0);
            let (s, _) = discriminate(&cfg, &signal).unwrap();
            let scaled: Vec<f64> = signal.iter().map(|v| v * scale).collect();
            let (s2, _) = discriminate(&cfg, &scaled).unwrap();
            proptest::prop_assert!((s2 - s * scale).abs() < 1e-9 * (1.0 + s.abs() * scale));
        }
    }
}
