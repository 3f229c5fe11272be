//! AllXY experiment harness: the 21 gate-pair schedule, program generation,
//! the averaging data collector, and fidelity rescaling against the
//! calibration points.

pub mod pipeline;

use serde::Serialize;
use thiserror::Error;

use crate::isa::{
    ClassicalInstr, Instr, LabelRef, Program, QisOperand, QuantumInstr, QubitSet, QumisInstr,
    Register,
};
use crate::scalar::Scalar;

#[derive(Debug, Error, PartialEq)]
pub enum HarnessError {
    #[error("collector finished mid-round: {filled} of {expected} slots in the last round")]
    IncompleteRound { filled: usize, expected: usize },
    #[error("collector received no rounds")]
    NoRounds,
    #[error("calibration levels coincide; cannot rescale")]
    DegenerateCalibration,
}

/// The five pulses used by the AllXY schedule.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Gate {
    I,
    X180,
    Y180,
    X90,
    Y90,
}

impl Gate {
    pub fn uop_name(self) -> &'static str {
        match self {
            Gate::I => "I",
            Gate::X180 => "X180",
            Gate::Y180 => "Y180",
            Gate::X90 => "X90",
            Gate::Y90 => "Y90",
        }
    }

    /// (axis, angle) in radians, or `None` for the identity.
    pub fn rotation(self) -> Option<(f64, f64)> {
        use std::f64::consts::{FRAC_PI_2, PI};
        match self {
            Gate::I => None,
            Gate::X180 => Some((0.0, PI)),
            Gate::Y180 => Some((FRAC_PI_2, PI)),
            Gate::X90 => Some((0.0, FRAC_PI_2)),
            Gate::Y90 => Some((FRAC_PI_2, FRAC_PI_2)),
        }
    }
}

/// The 21 AllXY gate combinations in schedule order. Ideal excited-state
/// populations step 0 (combinations 0-4), 0.5 (5-16), 1 (17-20).
pub const ALLXY_PAIRS: [(Gate, Gate); 21] = [
    (Gate::I, Gate::I),
    (Gate::X180, Gate::X180),
    (Gate::Y180, Gate::Y180),
    (Gate::X180, Gate::Y180),
    (Gate::Y180, Gate::X180),
    (Gate::X90, Gate::I),
    (Gate::Y90, Gate::I),
    (Gate::X90, Gate::Y90),
    (Gate::X90, Gate::Y90),
    (Gate::X90, Gate::Y180),
    (Gate::Y90, Gate::X180),
    (Gate::X180, Gate::Y90),
    (Gate::Y180, Gate::X90),
    (Gate::X90, Gate::X180),
    (Gate::X180, Gate::X90),
    (Gate::Y90, Gate::Y180),
    (Gate::Y180, Gate::Y90),
    (Gate::X180, Gate::I),
    (Gate::Y180, Gate::I),
    (Gate::X90, Gate::X90),
    (Gate::Y90, Gate::Y90),
];

/// Ideal excited-state population for a combination index.
pub fn ideal_population(combination: usize) -> f64 {
    match combination {
        0..=4 => 0.0,
        5..=16 => 0.5,
        _ => 1.0,
    }
}

/// Parameters of one AllXY run.
#[derive(Debug, Clone)]
pub struct AllXySpec {
    pub pairs: Vec<(Gate, Gate)>,
    /// Back-to-back repetitions of each combination within a round.
    pub repetitions: usize,
    /// Number of outer rounds, each covering every (combination, repetition).
    pub rounds: u32,
    /// Initialization wait before each segment, in cycles.
    pub init_wait: u32,
    /// Gap after each pulse, in cycles.
    pub gap: u32,
    /// Measurement pulse duration, in cycles.
    pub mpg_duration: u32,
    pub qubit: u8,
    /// Register receiving measurement results.
    pub result_reg: Register,
}

impl Default for AllXySpec {
    fn default() -> Self {
        AllXySpec {
            pairs: ALLXY_PAIRS.to_vec(),
            repetitions: 2,
            rounds: 25600,
            init_wait: 40000,
            gap: 4,
            mpg_duration: 300,
            qubit: 2,
            result_reg: Register::new(7).expect("r7"),
        }
    }
}

impl AllXySpec {
    /// Measurement segments per round.
    pub fn segments_per_round(&self) -> usize {
        self.pairs.len() * self.repetitions
    }

    /// Generates the runnable program: a register-counted outer loop whose
    /// body issues, for every (combination, repetition), an initialization
    /// wait, the two pulses with gaps, and a gated measurement.
    pub fn generate_program(&self) -> Program {
        let r = |i: u32| Register::new(i).expect("register");
        let (r_wait, r_count, r_rounds) = (r(15), r(1), r(2));
        let mut instructions = vec![
            Instr::Classical(ClassicalInstr::Mov { rd: r_wait, imm: self.init_wait as i32 }),
            Instr::Classical(ClassicalInstr::Mov { rd: r_count, imm: 0 }),
            Instr::Classical(ClassicalInstr::Mov { rd: r_rounds, imm: self.rounds as i32 }),
        ];
        let loop_start = instructions.len();
        for &(g1, g2) in &self.pairs {
            for _ in 0..self.repetitions {
                instructions.push(Instr::Classical(ClassicalInstr::QNopReg { rs: r_wait }));
                for g in [g1, g2] {
                    instructions.push(Instr::Qumis(QumisInstr::Pulse {
                        pairs: vec![(QubitSet::single(self.qubit), g.uop_name().to_string())],
                    }));
                    instructions.push(Instr::Qumis(QumisInstr::Wait { interval: self.gap }));
                }
                instructions.push(Instr::Quantum(QuantumInstr {
                    mnemonic: "Measure".into(),
                    operands: vec![
                        QisOperand::Qubit(self.qubit),
                        QisOperand::Reg(self.result_reg),
                    ],
                }));
            }
        }
        let target = LabelRef { name: "Outer_Loop".into(), index: loop_start };
        instructions.push(Instr::Classical(ClassicalInstr::Addi {
            rd: r_count,
            ra: r_count,
            imm: 1,
        }));
        instructions.push(Instr::Classical(ClassicalInstr::Bne {
            ra: r_count,
            rb: r_rounds,
            target,
        }));
        let mut program = Program { instructions, labels: Default::default() };
        program.labels.insert("Outer_Loop".into(), loop_start);
        program
    }
}

/// Streams per-segment readout values into running per-slot sums; one round
/// is one pass over all `k` slots.
#[derive(Debug, Clone)]
pub struct DataCollector<F: Scalar> {
    sums: Vec<F>,
    cursor: usize,
    rounds: u64,
}

impl<F: Scalar> DataCollector<F> {
    pub fn new(k: usize) -> Self {
        DataCollector { sums: vec![F::zero(); k], cursor: 0, rounds: 0 }
    }

    pub fn slots(&self) -> usize {
        self.sums.len()
    }

    pub fn rounds(&self) -> u64 {
        self.rounds
    }

    /// Pushes the next value in round-robin slot order.
    pub fn push_next(&mut self, value: F) {
        self.sums[self.cursor] += value;
        self.cursor += 1;
        if self.cursor == self.sums.len() {
            self.cursor = 0;
            self.rounds += 1;
        }
    }

    /// Per-slot averages over the completed rounds.
    pub fn averages(&self) -> Result<Vec<F>, HarnessError> {
        if self.cursor != 0 {
            return Err(HarnessError::IncompleteRound {
                filled: self.cursor,
                expected: self.sums.len(),
            });
        }
        if self.rounds == 0 {
            return Err(HarnessError::NoRounds);
        }
        let n = F::from_f64(self.rounds as f64);
        Ok(self.sums.iter().map(|&s| s / n).collect())
    }
}

/// Rescales averaged readout levels to fidelities using the run's own
/// calibration points: combination 0 (ideal ground) defines 0 and the last
/// two combinations (ideal excited) define 1. `reps` is the number of slots
/// per combination.
pub fn rescale_fidelity<F: Scalar>(averages: &[F], reps: usize) -> Result<Vec<F>, HarnessError> {
    assert!(reps > 0 && averages.len() % reps == 0, "slot count must be a multiple of reps");
    let combos = averages.len() / reps;
    assert!(combos >= 3, "need the ground and two excited calibration combinations");
    let mean_of = |combo: usize| {
        averages[combo * reps..(combo + 1) * reps]
            .iter()
            .copied()
            .sum::<F>()
            / F::from_f64(reps as f64)
    };
    let cal0 = mean_of(0);
    let cal1 = (mean_of(combos - 2) + mean_of(combos - 1)) / F::from_f64(2.0);
    let denom = cal1 - cal0;
    if denom.abs() < F::from_f64(1e-12) {
        return Err(HarnessError::DegenerateCalibration);
    }
    Ok(averages.iter().map(|&s| (s - cal0) / denom).collect())
}

/// One row of the experiment output.
#[derive(Debug, Clone, Serialize)]
pub struct ExperimentRecord {
    pub slot: usize,
    pub combination: usize,
    pub gates: [&'static str; 2],
    pub average_level: f64,
    pub fidelity: f64,
    pub ideal: f64,
}

/// Assembles the per-slot result table for a completed AllXY run.
pub fn experiment_records(
    spec: &AllXySpec,
    averages: &[f64],
    fidelities: &[f64],
) -> Vec<ExperimentRecord> {
    averages
        .iter()
        .zip(fidelities)
        .enumerate()
        .map(|(slot, (&avg, &fid))| {
            let combination = slot / spec.repetitions;
            let (g1, g2) = spec.pairs[combination];
            ExperimentRecord {
                slot,
                combination,
                gates: [g1.uop_name(), g2.uop_name()],
                average_level: avg,
                fidelity: fid,
                ideal: ideal_population(combination),
            }
        })
        .collect()
}
