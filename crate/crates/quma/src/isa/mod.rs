//! Instruction set: auxiliary classical instructions, QuMIS microinstructions,
//! and microcode-expanded quantum instructions, plus the `.qumis` assembler.

mod parse;

pub use parse::{parse_program, parse_program_with_mnemonics, parse_qumis_lines, ParseError, ParseErrorKind};

use std::collections::BTreeMap;
use std::fmt;

use serde::Serialize;
use thiserror::Error;

/// Number of general-purpose registers in the register file.
pub const NUM_REGISTERS: usize = 16;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum IsaError {
    #[error("register index {0} out of range (r0-r15)")]
    RegisterOutOfRange(u32),
    #[error("Wait interval must be >= 1")]
    ZeroWait,
    #[error("MPG duration must be >= 1")]
    ZeroMpgDuration,
    #[error("Pulse instruction has no (qubit set, micro-op) pairs")]
    EmptyPulse,
    #[error("qubit sets within one Pulse overlap")]
    OverlappingPulsePairs,
    #[error("qubit set is empty")]
    EmptyQubitSet,
}

/// One of the 16 general-purpose registers. r0 is an ordinary register.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct Register(u8);

impl Register {
    pub fn new(index: u32) -> Result<Self, IsaError> {
        if (index as usize) < NUM_REGISTERS {
            Ok(Register(index as u8))
        } else {
            Err(IsaError::RegisterOutOfRange(index))
        }
    }

    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for Register {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "r{}", self.0)
    }
}

/// Canonicalized (sorted, deduplicated) set of qubit addresses, so set
/// equality is structural equality.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize)]
pub struct QubitSet(Vec<u8>);

impl QubitSet {
    pub fn new(mut qubits: Vec<u8>) -> Result<Self, IsaError> {
        if qubits.is_empty() {
            return Err(IsaError::EmptyQubitSet);
        }
        qubits.sort_unstable();
        qubits.dedup();
        Ok(QubitSet(qubits))
    }

    pub fn single(q: u8) -> Self {
        QubitSet(vec![q])
    }

    pub fn iter(&self) -> impl Iterator<Item = u8> + '_ {
        self.0.iter().copied()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn is_disjoint(&self, other: &QubitSet) -> bool {
        self.0.iter().all(|q| !other.0.contains(q))
    }
}

impl fmt::Display for QubitSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{")?;
        for (i, q) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "q{q}")?;
        }
        write!(f, "}}")
    }
}

/// Base+offset memory operand, written `rX[imm]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MemRef {
    pub base: Register,
    pub offset: i32,
}

impl fmt::Display for MemRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}[{}]", self.base, self.offset)
    }
}

/// Branch target, resolved to an instruction index at parse time. The name is
/// kept for disassembly.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelRef {
    pub name: String,
    pub index: usize,
}

/// Auxiliary classical instructions (register update and program flow).
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ClassicalInstr {
    Mov { rd: Register, imm: i32 },
    Add { rd: Register, ra: Register, rb: Register },
    Addi { rd: Register, ra: Register, imm: i32 },
    Sub { rd: Register, ra: Register, rb: Register },
    Load { rd: Register, addr: MemRef },
    Store { rs: Register, addr: MemRef },
    Bne { ra: Register, rb: Register, target: LabelRef },
    Beq { ra: Register, rb: Register, target: LabelRef },
    Jump { target: LabelRef },
    /// Reads a waiting time from a register and issues the corresponding
    /// `Wait` instruction at execution time.
    QNopReg { rs: Register },
}

/// QuMIS microinstructions.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum QumisInstr {
    Wait { interval: u32 },
    Pulse { pairs: Vec<(QubitSet, String)> },
    Mpg { qubits: QubitSet, duration: u32 },
    Md { qubits: QubitSet, dest: Option<Register> },
}

impl QumisInstr {
    pub fn validate(&self) -> Result<(), IsaError> {
        match self {
            QumisInstr::Wait { interval } if *interval == 0 => Err(IsaError::ZeroWait),
            QumisInstr::Mpg { duration, .. } if *duration == 0 => Err(IsaError::ZeroMpgDuration),
            QumisInstr::Pulse { pairs } => {
                if pairs.is_empty() {
                    return Err(IsaError::EmptyPulse);
                }
                for (i, (a, _)) in pairs.iter().enumerate() {
                    for (b, _) in &pairs[i + 1..] {
                        if !a.is_disjoint(b) {
                            return Err(IsaError::OverlappingPulsePairs);
                        }
                    }
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }
}

/// Operand of a microcode-expanded quantum instruction.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum QisOperand {
    Qubit(u8),
    Reg(Register),
    Name(String),
}

impl fmt::Display for QisOperand {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            QisOperand::Qubit(q) => write!(f, "q{q}"),
            QisOperand::Reg(r) => write!(f, "{r}"),
            QisOperand::Name(n) => write!(f, "{n}"),
        }
    }
}

/// Quantum instruction at the QIS level (e.g. `Apply X180, q0`,
/// `Measure q0, r7`, `CNOT q1, q2`), expanded by the physical microcode unit.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QuantumInstr {
    pub mnemonic: String,
    pub operands: Vec<QisOperand>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Instr {
    Classical(ClassicalInstr),
    Qumis(QumisInstr),
    Quantum(QuantumInstr),
}

/// A parsed program: ordered instructions plus the label symbol table.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Program {
    pub instructions: Vec<Instr>,
    pub labels: BTreeMap<String, usize>,
}

impl Program {
    pub fn len(&self) -> usize {
        self.instructions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instructions.is_empty()
    }
}

impl fmt::Display for ClassicalInstr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ClassicalInstr::Mov { rd, imm } => write!(f, "mov {rd}, {imm}"),
            ClassicalInstr::Add { rd, ra, rb } => write!(f, "add {rd}, {ra}, {rb}"),
            ClassicalInstr::Addi { rd, ra, imm } => write!(f, "addi {rd}, {ra}, {imm}"),
            ClassicalInstr::Sub { rd, ra, rb } => write!(f, "sub {rd}, {ra}, {rb}"),
            ClassicalInstr::Load { rd, addr } => write!(f, "Load {rd}, {addr}"),
            ClassicalInstr::Store { rs, addr } => write!(f, "Store {rs}, {addr}"),
            ClassicalInstr::Bne { ra, rb, target } => write!(f, "bne {ra}, {rb}, {}", target.name),
            ClassicalInstr::Beq { ra, rb, target } => write!(f, "beq {ra}, {rb}, {}", target.name),
            ClassicalInstr::Jump { target } => write!(f, "jump {}", target.name),
            ClassicalInstr::QNopReg { rs } => write!(f, "QNopReg {rs}"),
        }
    }
}

impl fmt::Display for QumisInstr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            QumisInstr::Wait { interval } => write!(f, "Wait {interval}"),
            QumisInstr::Pulse { pairs } => {
                write!(f, "Pulse ")?;
                for (i, (qs, uop)) in pairs.iter().enumerate() {
                    if i > 0 {
                        write!(f, ", ")?;
                    }
                    write!(f, "{qs}, {uop}")?;
                }
                Ok(())
            }
            QumisInstr::Mpg { qubits, duration } => write!(f, "MPG {qubits}, {duration}"),
            QumisInstr::Md { qubits, dest: Some(rd) } => write!(f, "MD {qubits}, {rd}"),
            QumisInstr::Md { qubits, dest: None } => write!(f, "MD {qubits}"),
        }
    }
}

impl fmt::Display for QuantumInstr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.mnemonic)?;
        for (i, op) in self.operands.iter().enumerate() {
            write!(f, "{}{op}", if i == 0 { " " } else { ", " })?;
        }
        Ok(())
    }
}

impl fmt::Display for Instr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Instr::Classical(c) => c.fmt(f),
            Instr::Qumis(q) => q.fmt(f),
            Instr::Quantum(q) => q.fmt(f),
        }
    }
}

/// Writes a program back out in canonical form. The result re-parses to a
/// structurally equal program.
pub fn disassemble(program: &Program) -> String {
    let mut by_index: BTreeMap<usize, Vec<&str>> = BTreeMap::new();
    for (name, &index) in &program.labels {
        by_index.entry(index).or_default().push(name);
    }
    let mut out = String::new();
    for (i, instr) in program.instructions.iter().enumerate() {
        if let Some(names) = by_index.get(&i) {
            for name in names {
                out.push_str(name);
                out.push_str(":\n");
            }
        }
        out.push_str(&instr.to_string());
        out.push('\n');
    }
    if let Some(names) = by_index.get(&program.instructions.len()) {
        for name in names {
            out.push_str(name);
            out.push_str(":\n");
        }
    }
    out
}
