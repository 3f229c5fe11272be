//! End-to-end pipeline: execution controller -> microcode expansion -> label
//! assignment -> timing control -> codeword triggers -> qubit physics ->
//! measurement discrimination -> data collection.
//!
//! The producer (execution controller plus expansion) can be throttled to an
//! arbitrary rate; as long as it keeps the queues from underflowing, the
//! fired-event trace is identical at any rate.

use std::collections::{HashMap, VecDeque};
use std::io::{self, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::adi::{AdiError, Ctpg, GateSemantics, MpgTracker, SeqTable};
use crate::config::SimConfig;
use crate::execution::{ExecFault, ExecState, StepOutcome, DEFAULT_MEMORY_WORDS};
use crate::harness::DataCollector;
use crate::isa::{Program, QubitSet, Register};
use crate::microcode::{expand, LabelAssigner, MicrocodeError, QControlStore};
use crate::qsim::QubitState;
use crate::timing::{
    EventPayload, Fired, QueueInput, QueueSet, TimingController, TimingFault, CYCLE_NS,
};
use crate::trace::{TraceRecord, TraceWriter};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("execution controller: {0}")]
    Exec(#[from] ExecFault),
    #[error("microcode unit: {0}")]
    Microcode(#[from] MicrocodeError),
    #[error("timing controller: {0}")]
    Timing(#[from] TimingFault),
    #[error("analog-digital interface: {0}")]
    Adi(#[from] AdiError),
    #[error("trace output: {0}")]
    Io(#[from] io::Error),
    #[error("configuration: {0}")]
    Config(#[from] crate::config::ConfigError),
    #[error("analysis: {0}")]
    Harness(#[from] crate::harness::HarnessError),
    #[error("step budget of {0} exhausted")]
    BudgetExhausted(u64),
    #[error("deadlock: producer stalled on {0} with no measurement in flight")]
    Deadlock(Register),
    #[error("CZ pulse on qubit set with {0} qubits: the end-to-end pipeline drives single-qubit channels")]
    CzUnsupported(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Deterministic: MD yields the expectation of the readout level and the
    /// qubit is re-initialized afterwards.
    Expectation,
    /// Stochastic: projective measurement plus Gaussian readout noise.
    Sample,
}

#[derive(Debug, Clone)]
pub struct RunOptions {
    pub mode: Mode,
    pub seed: u64,
    /// Consumer ticks per produced instruction while a broadcast is pending.
    pub throttle: u64,
    /// Data-collection slot count; `None` disables the collector.
    pub collector_slots: Option<usize>,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions { mode: Mode::Expectation, seed: 0, throttle: 1, collector_slots: None }
    }
}

/// One discrimination result.
#[derive(Debug, Clone, PartialEq)]
pub struct MdRecord {
    pub cycle: u64,
    pub qubits: QubitSet,
    pub level: f64,
    pub bit: bool,
    pub dest: Option<Register>,
}

#[derive(Debug)]
pub struct PipelineOutput {
    pub md_records: Vec<MdRecord>,
    pub collector: Option<DataCollector<f64>>,
    pub exec: ExecState,
    pub final_cycle: u64,
}

struct Pipeline<'a, 't> {
    program: &'a Program,
    store: &'a QControlStore,
    cfg: &'a SimConfig,
    opts: &'a RunOptions,
    exec: ExecState,
    assigner: LabelAssigner,
    ctrl: TimingController,
    queues: QueueSet,
    backlog: VecDeque<QueueInput>,
    stalled: Option<Register>,
    steps: u64,
    seq: SeqTable,
    ctpg: Ctpg,
    qubits: HashMap<u8, QubitState<f64>>,
    trackers: HashMap<u8, MpgTracker>,
    rng: ChaCha8Rng,
    collector: Option<DataCollector<f64>>,
    md_records: Vec<MdRecord>,
    trace: Option<TraceWriter<&'t mut dyn Write>>,
}

/// Runs a program through the full pipeline. `trace` receives the JSON Lines
/// event trace when set.
pub fn run_pipeline<'a, 't>(
    program: &'a Program,
    store: &'a QControlStore,
    cfg: &'a SimConfig,
    opts: &'a RunOptions,
    trace: Option<&'t mut dyn Write>,
) -> Result<PipelineOutput, PipelineError> {
    let mut ctpg = Ctpg::new(0, cfg.lookup_table()?);
    ctpg.delay_cycles = cfg.ctpg.delay_cycles;
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    rng.set_stream(0);
    let mut p = Pipeline {
        program,
        store,
        cfg,
        opts,
        exec: ExecState::new(DEFAULT_MEMORY_WORDS),
        assigner: LabelAssigner::new(),
        ctrl: TimingController::new(),
        queues: QueueSet::new(cfg.timing.queue_capacity),
        backlog: VecDeque::new(),
        stalled: None,
        steps: 0,
        seq: SeqTable::default_single_qubit(),
        ctpg,
        qubits: HashMap::new(),
        trackers: HashMap::new(),
        rng,
        collector: opts.collector_slots.map(DataCollector::new),
        md_records: Vec::new(),
        trace: trace.map(TraceWriter::new),
    };
    p.run()?;
    Ok(PipelineOutput {
        md_records: p.md_records,
        collector: p.collector,
        exec: p.exec,
        final_cycle: p.ctrl.t_d(),
    })
}

impl Pipeline<'_, '_> {
    fn run(&mut self) -> Result<(), PipelineError> {
        // Phase 1: let the producer run until the first time point is queued,
        // then start the deterministic clock. Events preceding any Wait carry
        // label 0 and fire at T_D = 0, so they must all be queued by then.
        while !self.exec.halted && self.stalled.is_none() && self.queues.timing.is_empty() {
            self.produce_one()?;
            self.flush_backlog()?;
        }
        // A producer stall here may still resolve: label-0 MD events fire at
        // start and write back. True deadlocks surface in the main loop.
        let fired = self.ctrl.start(&mut self.queues)?;
        self.handle_fired(fired)?;

        // Phase 2: interleave throttled production with clock advancement.
        // Between broadcasts the clock is fast-forwarded in jumps that are
        // observably identical to single-stepping.
        let mut credit: u64 = 0;
        loop {
            self.flush_backlog()?;
            let producer_active =
                !self.exec.halted && self.stalled.is_none() && self.backlog.is_empty();
            let pending = self.ctrl.cycles_until_broadcast(&self.queues);
            match (producer_active, pending) {
                (false, None) => {
                    if let Some(reg) = self.stalled {
                        return Err(PipelineError::Deadlock(reg));
                    }
                    if !self.backlog.is_empty() {
                        // Queue full with nothing left to fire.
                        return Err(PipelineError::Timing(TimingFault::Stranded(
                            crate::timing::QueueKind::Pulse,
                        )));
                    }
                    break;
                }
                (false, Some(_)) => {
                    if let Some(fired) = self.ctrl.advance_to_broadcast(&mut self.queues)? {
                        self.handle_fired(fired)?;
                    }
                }
                (true, None) => {
                    // No time point pending: clock cycles are unobservable,
                    // so the producer runs freely.
                    self.produce_one()?;
                    credit = 0;
                }
                (true, Some(distance)) => {
                    let to_production = self.opts.throttle - credit;
                    if to_production >= distance {
                        credit += distance;
                        if let Some(fired) = self.ctrl.advance_to_broadcast(&mut self.queues)? {
                            self.handle_fired(fired)?;
                        }
                    } else {
                        self.ctrl.skip(to_production, &self.queues);
                        credit += to_production;
                    }
                    if credit >= self.opts.throttle {
                        self.produce_one()?;
                        credit -= self.opts.throttle;
                    }
                }
            }
        }
        self.ctrl.check_drained(&self.queues)?;
        Ok(())
    }

    /// Executes one instruction on the execution controller and expands any
    /// quantum emission into labeled queue inputs.
    fn produce_one(&mut self) -> Result<(), PipelineError> {
        self.steps += 1;
        if self.steps > self.cfg.timing.step_budget {
            return Err(PipelineError::BudgetExhausted(self.cfg.timing.step_budget));
        }
        match self.exec.step(self.program)? {
            StepOutcome::Continue => {}
            StepOutcome::Stall(reg) => self.stalled = Some(reg),
            StepOutcome::Emit(issue) => {
                for instr in expand(&issue, self.store)? {
                    if let crate::isa::QumisInstr::Md { dest: Some(rd), .. } = &instr {
                        self.exec.regs.set_pending(*rd);
                    }
                    self.backlog.extend(self.assigner.push(&instr)?);
                }
            }
        }
        Ok(())
    }

    /// Moves backlog entries into the queues until one hits backpressure.
    fn flush_backlog(&mut self) -> Result<(), PipelineError> {
        while let Some(input) = self.backlog.front().cloned() {
            match self.ctrl.enqueue(&mut self.queues, input)? {
                Ok(fired) => {
                    self.backlog.pop_front();
                    self.handle_fired(fired)?;
                }
                Err(_full) => break,
            }
        }
        Ok(())
    }

    fn handle_fired(&mut self, fired: Vec<Fired>) -> Result<(), PipelineError> {
        for f in fired {
            if let Some(tw) = &mut self.trace {
                tw.record(&TraceRecord::fire(&f, CYCLE_NS))?;
            }
            match f.event.payload.clone() {
                EventPayload::Pulse { qubits, uop } => self.fire_pulse(&f, &qubits, &uop)?,
                EventPayload::Mpg { qubits, duration } => self.fire_mpg(&f, &qubits, duration)?,
                EventPayload::Md { qubits, dest } => self.fire_md(&f, &qubits, dest)?,
            }
        }
        // A completed writeback may unblock a stalled producer.
        if let Some(reg) = self.stalled {
            if !self.exec.regs.is_pending(reg) {
                self.stalled = None;
            }
        }
        Ok(())
    }

    fn qubit_state(&mut self, q: u8) -> &mut QubitState<f64> {
        let t1 = self.cfg.qubit.t1_ns;
        self.qubits.entry(q).or_insert_with(|| QubitState::ground(t1))
    }

    fn relax(&mut self, q: u8, until_ns: f64, mode: Mode) {
        let state = self.qubits.get_mut(&q).expect("state exists");
        let dt = until_ns - state.t_last_ns;
        if dt <= 0.0 {
            return;
        }
        match mode {
            Mode::Expectation => state.relax_expectation(dt),
            Mode::Sample => state.relax_sampled(dt, &mut self.rng),
        }
        state.t_last_ns = until_ns;
    }

    fn fire_pulse(&mut self, f: &Fired, qubits: &QubitSet, uop: &str) -> Result<(), PipelineError> {
        for q in qubits.iter() {
            let triggers = self.seq.emit_codewords(uop, f.cycle, q)?;
            for trigger in triggers {
                if let Some(tw) = &mut self.trace {
                    tw.record(&TraceRecord::codeword(&trigger, CYCLE_NS))?;
                }
                let pulse = self.ctpg.generate_pulse(&trigger)?;
                match pulse.gate {
                    GateSemantics::Cz => {
                        return Err(PipelineError::CzUnsupported(qubits.len()));
                    }
                    GateSemantics::Identity | GateSemantics::Measurement => {
                        self.qubit_state(q);
                        self.relax(q, pulse.start_ns, self.opts.mode);
                        let state = self.qubits.get_mut(&q).expect("state exists");
                        state.t_last_ns = state.t_last_ns.max(pulse.start_ns + pulse.duration_ns);
                    }
                    GateSemantics::Rotation { axis, .. } => {
                        self.qubit_state(q);
                        self.relax(q, pulse.start_ns, self.opts.mode);
                        // Timing-skew fault injection shifts only x-family
                        // pulses, leaving y pulses as the phase reference.
                        let x_family = axis.rem_euclid(std::f64::consts::PI).abs() < 1e-9
                            || (axis.rem_euclid(std::f64::consts::PI) - std::f64::consts::PI).abs()
                                < 1e-9;
                        let extra = if x_family { self.cfg.ctpg.x_delay_ns } else { 0.0 };
                        let ssb = self.cfg.ctpg.ssb_freq_ghz;
                        let state = self.qubits.get_mut(&q).expect("state exists");
                        state.apply_pulse_event(&pulse, ssb, extra);
                    }
                }
            }
        }
        Ok(())
    }

    fn fire_mpg(&mut self, f: &Fired, qubits: &QubitSet, duration: u32) -> Result<(), PipelineError> {
        for q in qubits.iter() {
            self.trackers.entry(q).or_default().open(f.cycle, duration as u64)?;
        }
        if let Some(tw) = &mut self.trace {
            tw.record(&TraceRecord::MpgWindow {
                cycle: f.cycle,
                ns: f.cycle as f64 * CYCLE_NS,
                duration_cycles: duration as u64,
            })?;
        }
        Ok(())
    }

    fn fire_md(
        &mut self,
        f: &Fired,
        qubits: &QubitSet,
        dest: Option<Register>,
    ) -> Result<(), PipelineError> {
        let now_ns = f.cycle as f64 * CYCLE_NS;
        let readout = self.cfg.readout.clone();
        let mode = self.opts.mode;
        // A single MD discriminates one channel; a multi-qubit QAddr reads
        // the first address (frequency-multiplexed readout is out of scope).
        let q = qubits.iter().next().expect("non-empty qubit set");
        self.qubit_state(q);
        self.relax(q, now_ns, mode);
        let level = match mode {
            Mode::Expectation => {
                let state = self.qubits.get_mut(&q).expect("state exists");
                let p1 = state.p1();
                // Re-initialize for the next segment; deterministic runs do
                // not rely on decay-by-waiting.
                state.reset(state.t_last_ns.max(now_ns));
                p1 * readout.mu1 + (1.0 - p1) * readout.mu0
            }
            Mode::Sample => {
                let state = self.qubits.get_mut(&q).expect("state exists");
                let one = state.measure_sampled(&mut self.rng);
                state.t_last_ns = state.t_last_ns.max(now_ns);
                let mu = if one { readout.mu1 } else { readout.mu0 };
                if readout.sigma > 0.0 {
                    mu + readout.sigma * gaussian(&mut self.rng)
                } else {
                    mu
                }
            }
        };
        let bit = level > readout.threshold();
        if let Some(rd) = dest {
            self.exec.regs.write_back(rd, bit as i32);
        }
        if let Some(tw) = &mut self.trace {
            tw.record(&TraceRecord::Measurement {
                cycle: f.cycle,
                ns: now_ns,
                qubits: qubits.to_string(),
                level,
                bit: bit as u8,
            })?;
        }
        self.md_records.push(MdRecord { cycle: f.cycle, qubits: qubits.clone(), level, bit, dest });
        if let Some(collector) = &mut self.collector {
            let before = collector.rounds();
            collector.push_next(level);
            // Round boundary: switch to the next RNG substream so rounds are
            // independently reproducible.
            if collector.rounds() != before {
                self.rng = ChaCha8Rng::seed_from_u64(self.opts.seed);
                self.rng.set_stream(collector.rounds());
            }
        }
        Ok(())
    }
}

/// Full AllXY experiment result: per-slot averaged readout levels and
/// rescaled fidelities.
#[derive(Debug)]
pub struct AllXyOutcome {
    pub averages: Vec<f64>,
    pub fidelities: Vec<f64>,
    pub records: Vec<crate::harness::ExperimentRecord>,
    pub output: PipelineOutput,
}

/// Generates, runs, and analyzes an AllXY experiment end to end.
pub fn run_allxy(
    spec: &crate::harness::AllXySpec,
    cfg: &SimConfig,
    opts: &RunOptions,
    trace: Option<&mut dyn Write>,
) -> Result<AllXyOutcome, PipelineError> {
    let program = spec.generate_program();
    let store = QControlStore::with_defaults();
    let run_opts = RunOptions {
        collector_slots: Some(spec.segments_per_round()),
        ..opts.clone()
    };
    let output = run_pipeline(&program, &store, cfg, &run_opts, trace)?;
    let collector = output.collector.as_ref().expect("collector enabled");
    let averages = collector.averages()?;
    let fidelities = crate::harness::rescale_fidelity(&averages, spec.repetitions)?;
    let records = crate::harness::experiment_records(spec, &averages, &fidelities);
    Ok(AllXyOutcome { averages, fidelities, records, output })
}

/// Standard normal via Box-Muller; consumes two uniforms.
fn gaussian<R: Rng>(rng: &mut R) -> f64 {
    let u1: f64 = rng.gen::<f64>().max(f64::MIN_POSITIVE);
    let u2: f64 = rng.gen();
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}
