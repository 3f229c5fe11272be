//! Execution controller: runs auxiliary classical instructions in the
//! non-deterministic timing domain and streams quantum instructions onward.
//!
//! Classical instructions take zero deterministic-domain time; only the
//! emitted `Wait` instructions advance scheduled time downstream.

use thiserror::Error;

use crate::isa::{
    ClassicalInstr, Instr, MemRef, Program, QuantumInstr, QubitSet, QumisInstr, Register,
    NUM_REGISTERS,
};

/// Default data-memory size in 32-bit words.
pub const DEFAULT_MEMORY_WORDS: usize = 65536;
/// Default step budget for `run_to_completion` (infinite-loop guard).
pub const DEFAULT_STEP_BUDGET: u64 = 1_000_000_000;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ExecFault {
    #[error("step on a halted machine")]
    Halted,
    #[error("memory access out of bounds: address {addr} (memory has {size} words)")]
    MemoryOutOfBounds { addr: i64, size: usize },
    #[error("QNopReg read a non-positive wait interval ({0})")]
    BadWaitInterval(i32),
    #[error("step budget exhausted at pc {pc} (possible infinite loop)")]
    BudgetExhausted { pc: usize },
    #[error("read of register {0} stalled with no measurement in flight")]
    DeadlockedStall(Register),
}

/// 16 x 32-bit signed registers plus the MD-writeback scoreboard.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct RegisterFile {
    values: [i32; NUM_REGISTERS],
    pending: [bool; NUM_REGISTERS],
}

impl RegisterFile {
    /// Reads a register; `None` means the register has an outstanding MD
    /// writeback and the reader must stall.
    pub fn read(&self, r: Register) -> Option<i32> {
        if self.pending[r.index()] {
            None
        } else {
            Some(self.values[r.index()])
        }
    }

    pub fn write(&mut self, r: Register, value: i32) {
        self.values[r.index()] = value;
    }

    pub fn set_pending(&mut self, r: Register) {
        self.pending[r.index()] = true;
    }

    pub fn is_pending(&self, r: Register) -> bool {
        self.pending[r.index()]
    }

    pub fn any_pending(&self) -> bool {
        self.pending.iter().any(|&p| p)
    }

    /// Delivers a measurement result from the deterministic timing domain.
    pub fn write_back(&mut self, r: Register, value: i32) {
        self.values[r.index()] = value;
        self.pending[r.index()] = false;
    }

    pub fn values(&self) -> &[i32; NUM_REGISTERS] {
        &self.values
    }
}

/// Word-addressable data memory.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DataMemory {
    words: Vec<i32>,
}

impl DataMemory {
    pub fn new(size: usize) -> Self {
        DataMemory { words: vec![0; size] }
    }

    pub fn load(&self, addr: i64) -> Result<i32, ExecFault> {
        self.check(addr).map(|i| self.words[i])
    }

    pub fn store(&mut self, addr: i64, value: i32) -> Result<(), ExecFault> {
        let i = self.check(addr)?;
        self.words[i] = value;
        Ok(())
    }

    fn check(&self, addr: i64) -> Result<usize, ExecFault> {
        if addr >= 0 && (addr as usize) < self.words.len() {
            Ok(addr as usize)
        } else {
            Err(ExecFault::MemoryOutOfBounds { addr, size: self.words.len() })
        }
    }

    pub fn words(&self) -> &[i32] {
        &self.words
    }
}

impl Default for DataMemory {
    fn default() -> Self {
        DataMemory::new(DEFAULT_MEMORY_WORDS)
    }
}

/// Quantum instruction streamed to the physical microcode unit. `QNopReg` is
/// already resolved into a `Wait` at this point.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum QuantumIssue {
    Qumis(QumisInstr),
    Quantum(QuantumInstr),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum StepOutcome {
    /// A classical instruction retired with no quantum emission.
    Continue,
    /// A quantum instruction was streamed onward.
    Emit(QuantumIssue),
    /// The instruction read a register with an outstanding MD writeback; the
    /// pc did not advance.
    Stall(Register),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExecState {
    pub pc: usize,
    pub regs: RegisterFile,
    pub mem: DataMemory,
    pub halted: bool,
}

impl ExecState {
    pub fn new(memory_words: usize) -> Self {
        ExecState {
            pc: 0,
            regs: RegisterFile::default(),
            mem: DataMemory::new(memory_words),
            halted: false,
        }
    }

    fn resolve(&self, m: &MemRef) -> Option<i64> {
        self.regs.read(m.base).map(|base| base as i64 + m.offset as i64)
    }

    /// Executes one instruction. Signed arithmetic wraps (two's complement).
    pub fn step(&mut self, program: &Program) -> Result<StepOutcome, ExecFault> {
        if self.halted {
            return Err(ExecFault::Halted);
        }
        debug_assert!(self.pc < program.len());
        let instr = &program.instructions[self.pc];

        // Any register read may stall on a pending MD writeback.
        macro_rules! read {
            ($r:expr) => {
                match self.regs.read($r) {
                    Some(v) => v,
                    None => return Ok(StepOutcome::Stall($r)),
                }
            };
        }

        let mut next_pc = self.pc + 1;
        let outcome = match instr {
            Instr::Classical(c) => {
                match c {
                    ClassicalInstr::Mov { rd, imm } => self.regs.write(*rd, *imm),
                    ClassicalInstr::Add { rd, ra, rb } => {
                        let v = read!(*ra).wrapping_add(read!(*rb));
                        self.regs.write(*rd, v);
                    }
                    ClassicalInstr::Addi { rd, ra, imm } => {
                        let v = read!(*ra).wrapping_add(*imm);
                        self.regs.write(*rd, v);
                    }
                    ClassicalInstr::Sub { rd, ra, rb } => {
                        let v = read!(*ra).wrapping_sub(read!(*rb));
                        self.regs.write(*rd, v);
                    }
                    ClassicalInstr::Load { rd, addr } => {
                        let _ = read!(addr.base);
                        let a = self.resolve(addr).expect("base readable");
                        let v = self.mem.load(a)?;
                        self.regs.write(*rd, v);
                    }
                    ClassicalInstr::Store { rs, addr } => {
                        let v = read!(*rs);
                        let _ = read!(addr.base);
                        let a = self.resolve(addr).expect("base readable");
                        self.mem.store(a, v)?;
                    }
                    ClassicalInstr::Bne { ra, rb, target } => {
                        if read!(*ra) != read!(*rb) {
                            next_pc = target.index;
                        }
                    }
                    ClassicalInstr::Beq { ra, rb, target } => {
                        if read!(*ra) == read!(*rb) {
                            next_pc = target.index;
                        }
                    }
                    ClassicalInstr::Jump { target } => next_pc = target.index,
                    ClassicalInstr::QNopReg { rs } => {
                        let interval = read!(*rs);
                        if interval < 1 {
                            return Err(ExecFault::BadWaitInterval(interval));
                        }
                        self.pc = next_pc;
                        self.halted = self.pc >= program.len();
                        return Ok(StepOutcome::Emit(QuantumIssue::Qumis(QumisInstr::Wait {
                            interval: interval as u32,
                        })));
                    }
                }
                StepOutcome::Continue
            }
            Instr::Qumis(q) => StepOutcome::Emit(QuantumIssue::Qumis(q.clone())),
            Instr::Quantum(q) => StepOutcome::Emit(QuantumIssue::Quantum(q.clone())),
        };
        self.pc = next_pc;
        self.halted = self.pc >= program.len();
        Ok(outcome)
    }
}

/// Marks the MD destination register (if any) as pending in the scoreboard.
/// Called by the pipeline after microcode expansion, so that raw `MD` and
/// microcode-expanded `Measure` behave identically.
pub fn mark_md_pending(regs: &mut RegisterFile, instr: &QumisInstr) -> Option<(Register, QubitSet)> {
    if let QumisInstr::Md { qubits, dest: Some(rd) } = instr {
        regs.set_pending(*rd);
        Some((*rd, qubits.clone()))
    } else {
        None
    }
}

/// Runs a program to completion, collecting the quantum emission stream in
/// program order.
///
/// `md_resolver` supplies measurement results for `MD`-pending register reads
/// when the full pipeline is not attached; `None` makes a pending read a
/// deadlock fault.
pub fn run_to_completion(
    program: &Program,
    budget: u64,
    mut md_resolver: Option<&mut dyn FnMut(&QubitSet) -> i32>,
) -> Result<(Vec<QuantumIssue>, ExecState), ExecFault> {
    let mut state = ExecState::new(DEFAULT_MEMORY_WORDS);
    let mut stream = Vec::new();
    let mut in_flight: Vec<(Register, QubitSet)> = Vec::new();
    let mut steps = 0u64;
    while !state.halted {
        steps += 1;
        if steps > budget {
            return Err(ExecFault::BudgetExhausted { pc: state.pc });
        }
        match state.step(program)? {
            StepOutcome::Continue => {}
            StepOutcome::Emit(issue) => {
                if let QuantumIssue::Qumis(q) = &issue {
                    if let Some(entry) = mark_md_pending(&mut state.regs, q) {
                        in_flight.push(entry);
                    }
                }
                stream.push(issue);
            }
            StepOutcome::Stall(reg) => match md_resolver.as_mut() {
                Some(resolver) => {
                    // Deliver results in issue order until the blocking
                    // register clears.
                    while state.regs.is_pending(reg) && !in_flight.is_empty() {
                        let (rd, qubits) = in_flight.remove(0);
                        let value = resolver(&qubits);
                        state.regs.write_back(rd, value);
                    }
                    if state.regs.is_pending(reg) {
                        return Err(ExecFault::DeadlockedStall(reg));
                    }
                }
                None => return Err(ExecFault::DeadlockedStall(reg)),
            },
        }
    }
    Ok((stream, state))
}
