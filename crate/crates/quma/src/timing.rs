//! Timing control unit: a timing queue, per-kind event queues, and a timing
//! controller that broadcasts labels when the deterministic clock T_D reaches
//! each time point.
//!
//! The controller divides the machine into two timing domains. Producers fill
//! the queues in an as-fast-as-possible fashion with non-deterministic
//! timing; events leave the queues with deterministic, cycle-accurate timing
//! that depends only on the enqueued sequence.

use std::collections::VecDeque;

use serde::Serialize;
use thiserror::Error;

use crate::isa::{QubitSet, Register};

/// Deterministic-domain cycle time in nanoseconds.
pub const CYCLE_NS: f64 = 5.0;
/// Default capacity of each queue.
pub const DEFAULT_QUEUE_CAPACITY: usize = 4096;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum TimingFault {
    #[error("timing controller started twice")]
    DoubleStart,
    #[error("tick before the timing controller was started")]
    NotStarted,
    #[error("{kind:?} queue front label {front} is behind broadcast label {broadcast}: an event missed its time point")]
    MissedEvent { kind: QueueKind, front: u32, broadcast: u32 },
    #[error("event with label {label} arrived after its label was broadcast")]
    LateArrival { label: u32 },
    #[error("simulation ended with events stranded in the {0:?} queue")]
    Stranded(QueueKind),
}

/// Producer-side backpressure signal: the queue is full, retry after the
/// consumer makes progress.
#[derive(Debug, Error, PartialEq, Eq)]
#[error("queue full")]
pub struct QueueFull;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum QueueKind {
    Pulse,
    Mpg,
    Md,
}

/// Payload of an event queue entry.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum EventPayload {
    Pulse { qubits: QubitSet, uop: String },
    Mpg { qubits: QubitSet, duration: u32 },
    Md { qubits: QubitSet, dest: Option<Register> },
}

impl EventPayload {
    pub fn kind(&self) -> QueueKind {
        match self {
            EventPayload::Pulse { .. } => QueueKind::Pulse,
            EventPayload::Mpg { .. } => QueueKind::Mpg,
            EventPayload::Md { .. } => QueueKind::Md,
        }
    }
}

/// (timing label, payload) entry in an event queue.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct TimedEvent {
    pub label: u32,
    pub payload: EventPayload,
}

/// Input produced by the label assigner for the queue set.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum QueueInput {
    Timing { interval: u32, label: u32 },
    Event(TimedEvent),
}

/// The timing queue plus the per-kind event queues, all bounded FIFOs.
#[derive(Debug, Clone)]
pub struct QueueSet {
    capacity: usize,
    pub timing: VecDeque<(u32, u32)>,
    pub pulse: VecDeque<TimedEvent>,
    pub mpg: VecDeque<TimedEvent>,
    pub md: VecDeque<TimedEvent>,
}

impl QueueSet {
    pub fn new(capacity: usize) -> Self {
        QueueSet {
            capacity,
            timing: VecDeque::new(),
            pulse: VecDeque::new(),
            mpg: VecDeque::new(),
            md: VecDeque::new(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.timing.is_empty()
            && self.pulse.is_empty()
            && self.mpg.is_empty()
            && self.md.is_empty()
    }

    fn event_queue_mut(&mut self, kind: QueueKind) -> &mut VecDeque<TimedEvent> {
        match kind {
            QueueKind::Pulse => &mut self.pulse,
            QueueKind::Mpg => &mut self.mpg,
            QueueKind::Md => &mut self.md,
        }
    }

    /// Front-to-back snapshot of one event queue as (payload, label) pairs.
    pub fn snapshot(&self, kind: QueueKind) -> Vec<TimedEvent> {
        let q = match kind {
            QueueKind::Pulse => &self.pulse,
            QueueKind::Mpg => &self.mpg,
            QueueKind::Md => &self.md,
        };
        q.iter().cloned().collect()
    }

    pub fn snapshot_timing(&self) -> Vec<(u32, u32)> {
        self.timing.iter().copied().collect()
    }
}

/// An event dequeued and fired by the timing controller.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Fired {
    /// T_D cycle at which the event fired.
    pub cycle: u64,
    pub kind: QueueKind,
    pub event: TimedEvent,
}

/// Maintains the deterministic-domain clock T_D and fires queued events when
/// their time points are reached.
#[derive(Debug, Clone)]
pub struct TimingController {
    t_d: u64,
    /// Cycles counted since the last broadcast (or since start).
    elapsed: u64,
    started: bool,
    last_broadcast: Option<u32>,
}

impl Default for TimingController {
    fn default() -> Self {
        Self::new()
    }
}

impl TimingController {
    pub fn new() -> Self {
        TimingController { t_d: 0, elapsed: 0, started: false, last_broadcast: None }
    }

    pub fn t_d(&self) -> u64 {
        self.t_d
    }

    pub fn started(&self) -> bool {
        self.started
    }

    /// Starts the deterministic clock at T_D = 0. Events carrying label 0
    /// fire immediately.
    pub fn start(&mut self, queues: &mut QueueSet) -> Result<Vec<Fired>, TimingFault> {
        if self.started {
            return Err(TimingFault::DoubleStart);
        }
        self.started = true;
        self.t_d = 0;
        self.elapsed = 0;
        self.last_broadcast = Some(0);
        self.fire_matching(queues, 0)
    }

    /// Advances T_D by one cycle and fires everything whose time point is
    /// reached. The interval counter resets on the same cycle as a broadcast
    /// (zero dead cycles).
    pub fn tick(&mut self, queues: &mut QueueSet) -> Result<Vec<Fired>, TimingFault> {
        if !self.started {
            return Err(TimingFault::NotStarted);
        }
        self.t_d += 1;
        self.elapsed += 1;
        self.drain_broadcasts(queues)
    }

    /// Cycles until the next broadcast, if a time point is queued.
    pub fn cycles_until_broadcast(&self, queues: &QueueSet) -> Option<u64> {
        queues.timing.front().map(|&(interval, _)| (interval as u64).saturating_sub(self.elapsed))
    }

    /// Jumps the clock forward by `cycles` without crossing a time point.
    /// Observable behavior is identical to `cycles` calls of [`tick`] that
    /// fire nothing.
    pub fn skip(&mut self, cycles: u64, queues: &QueueSet) {
        debug_assert!(self.started);
        debug_assert!(
            self.cycles_until_broadcast(queues).map_or(true, |d| cycles < d),
            "skip must not cross a broadcast"
        );
        self.t_d += cycles;
        self.elapsed += cycles;
    }

    /// Fast-forwards to the next broadcast and returns its fired events, or
    /// `None` if the timing queue is empty.
    pub fn advance_to_broadcast(
        &mut self,
        queues: &mut QueueSet,
    ) -> Result<Option<Vec<Fired>>, TimingFault> {
        if !self.started {
            return Err(TimingFault::NotStarted);
        }
        let Some(distance) = self.cycles_until_broadcast(queues) else {
            return Ok(None);
        };
        if distance > 1 {
            self.skip(distance - 1, queues);
        }
        // A zero distance means a late timing entry: the broadcast happens on
        // the tick that observes it.
        if distance == 0 {
            return self.drain_broadcasts(queues).map(Some);
        }
        self.tick(queues).map(Some)
    }

    fn drain_broadcasts(&mut self, queues: &mut QueueSet) -> Result<Vec<Fired>, TimingFault> {
        let mut fired = Vec::new();
        while let Some(&(interval, label)) = queues.timing.front() {
            if (interval as u64) > self.elapsed {
                break;
            }
            queues.timing.pop_front();
            self.elapsed -= interval as u64;
            self.last_broadcast = Some(label);
            fired.extend(self.fire_matching(queues, label)?);
        }
        Ok(fired)
    }

    fn fire_matching(
        &self,
        queues: &mut QueueSet,
        label: u32,
    ) -> Result<Vec<Fired>, TimingFault> {
        let mut fired = Vec::new();
        for kind in [QueueKind::Pulse, QueueKind::Mpg, QueueKind::Md] {
            let queue = queues.event_queue_mut(kind);
            while let Some(front) = queue.front() {
                if front.label == label {
                    let event = queue.pop_front().expect("front exists");
                    fired.push(Fired { cycle: self.t_d, kind, event });
                } else if front.label < label {
                    return Err(TimingFault::MissedEvent {
                        kind,
                        front: front.label,
                        broadcast: label,
                    });
                } else {
                    break;
                }
            }
        }
        Ok(fired)
    }

    /// Appends an input to the queue set, honoring capacity. An event whose
    /// label equals the last broadcast fires immediately (the label-0 case);
    /// an older label is a hard fault.
    pub fn enqueue(
        &mut self,
        queues: &mut QueueSet,
        input: QueueInput,
    ) -> Result<Result<Vec<Fired>, QueueFull>, TimingFault> {
        match input {
            QueueInput::Timing { interval, label } => {
                if queues.timing.len() >= queues.capacity {
                    return Ok(Err(QueueFull));
                }
                queues.timing.push_back((interval, label));
                if self.started {
                    return self.drain_broadcasts(queues).map(Ok);
                }
                Ok(Ok(Vec::new()))
            }
            QueueInput::Event(event) => {
                let kind = event.payload.kind();
                if let Some(last) = self.last_broadcast {
                    if self.started && event.label < last {
                        return Err(TimingFault::LateArrival { label: event.label });
                    }
                    if self.started && event.label == last {
                        return Ok(Ok(vec![Fired { cycle: self.t_d, kind, event }]));
                    }
                }
                let capacity = queues.capacity;
                let queue = queues.event_queue_mut(kind);
                if queue.len() >= capacity {
                    return Ok(Err(QueueFull));
                }
                queue.push_back(event);
                Ok(Ok(Vec::new()))
            }
        }
    }

    /// Checks that nothing is left in the event queues; called at end of
    /// simulation to enforce the every-event-fires-once conservation rule.
    pub fn check_drained(&self, queues: &QueueSet) -> Result<(), TimingFault> {
        for kind in [QueueKind::Pulse, QueueKind::Mpg, QueueKind::Md] {
            let empty = match kind {
                QueueKind::Pulse => queues.pulse.is_empty(),
                QueueKind::Mpg => queues.mpg.is_empty(),
                QueueKind::Md => queues.md.is_empty(),
            };
            if !empty {
                return Err(TimingFault::Stranded(kind));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::isa::parse_qumis_lines;
    use crate::microcode::label_stream;

    /// The QuMIS stream for the first two AllXY measurement segments.
    pub const ALLXY_TWO_SEGMENTS: &str = "\
Wait 40000
Pulse {q0}, I
Wait 4
Pulse {q0}, I
Wait 4
MPG {q0}, 300
MD {q0}, r7
Wait 40000
Pulse {q0}, X180
Wait 4
Pulse {q0}, X180
Wait 4
MPG {q0}, 300
MD {q0}, r7
";

    fn loaded_queues() -> (TimingController, QueueSet) {
        let stream = parse_qumis_lines(ALLXY_TWO_SEGMENTS).unwrap();
        let inputs = label_stream(&stream).unwrap();
        let mut ctrl = TimingController::new();
        let mut queues = QueueSet::new(DEFAULT_QUEUE_CAPACITY);
        for input in inputs {
            ctrl.enqueue(&mut queues, input).unwrap().unwrap();
        }
        (ctrl, queues)
    }

    fn labels(queues: &QueueSet, kind: QueueKind) -> Vec<u32> {
        queues.snapshot(kind).iter().map(|e| e.label).collect()
    }

    #[test]
    fn queue_state_before_start_matches_the_allxy_snapshot() {
        let (_, queues) = loaded_queues();
        assert_eq!(
            queues.snapshot_timing(),
            vec![(40000, 1), (4, 2), (4, 3), (40000, 4), (4, 5), (4, 6)]
        );
        assert_eq!(labels(&queues, QueueKind::Pulse), vec![1, 2, 4, 5]);
        assert_eq!(labels(&queues, QueueKind::Mpg), vec![3, 6]);
        assert_eq!(labels(&queues, QueueKind::Md), vec![3, 6]);
    }

    #[test]
    fn first_broadcast_fires_the_front_pulse() {
        let (mut ctrl, mut queues) = loaded_queues();
        ctrl.start(&mut queues).unwrap();
        let mut fired = Vec::new();
        for _ in 0..40000 {
            fired.extend(ctrl.tick(&mut queues).unwrap());
        }
        assert_eq!(ctrl.t_d(), 40000);
        assert_eq!(fired.len(), 1);
        assert_eq!(fired[0].kind, QueueKind::Pulse);
        assert_eq!(fired[0].cycle, 40000);
        // Queue state at T_D = 40000.
        assert_eq!(
            queues.snapshot_timing(),
            vec![(4, 2), (4, 3), (40000, 4), (4, 5), (4, 6)]
        );
        assert_eq!(labels(&queues, QueueKind::Pulse), vec![2, 4, 5]);
        assert_eq!(labels(&queues, QueueKind::Mpg), vec![3, 6]);
    }

    #[test]
    fn label_three_fires_mpg_and_md_together() {
        let (mut ctrl, mut queues) = loaded_queues();
        ctrl.start(&mut queues).unwrap();
        let mut fired = Vec::new();
        for _ in 0..40008 {
            fired.extend(ctrl.tick(&mut queues).unwrap());
        }
        let at_40008: Vec<_> = fired.iter().filter(|f| f.cycle == 40008).collect();
        assert_eq!(at_40008.len(), 2);
        assert_eq!(at_40008[0].kind, QueueKind::Mpg);
        assert_eq!(at_40008[1].kind, QueueKind::Md);
        // Queue state at T_D = 40008.
        assert_eq!(queues.snapshot_timing(), vec![(40000, 4), (4, 5), (4, 6)]);
        assert_eq!(labels(&queues, QueueKind::Pulse), vec![4, 5]);
        assert_eq!(labels(&queues, QueueKind::Mpg), vec![6]);
        assert_eq!(labels(&queues, QueueKind::Md), vec![6]);
    }

    #[test]
    fn absolute_fire_times_are_cumulative_interval_sums() {
        let (mut ctrl, mut queues) = loaded_queues();
        ctrl.start(&mut queues).unwrap();
        let mut cycles = Vec::new();
        while !queues.is_empty() {
            if let Some(fired) = ctrl.advance_to_broadcast(&mut queues).unwrap() {
                cycles.extend(fired.iter().map(|f| f.cycle));
            } else {
                break;
            }
        }
        assert_eq!(cycles, vec![40000, 40004, 40008, 40008, 80008, 80012, 80016, 80016]);
    }

    #[test]
    fn empty_timing_queue_tick_advances_clock_only() {
        let mut ctrl = TimingController::new();
        let mut queues = QueueSet::new(8);
        ctrl.start(&mut queues).unwrap();
        let fired = ctrl.tick(&mut queues).unwrap();
        assert!(fired.is_empty());
        assert_eq!(ctrl.t_d(), 1);
    }

    #[test]
    fn label_zero_event_fires_at_start() {
        let stream = parse_qumis_lines("Pulse {q0}, X180").unwrap();
        let inputs = label_stream(&stream).unwrap();
        let mut ctrl = TimingController::new();
        let mut queues = QueueSet::new(8);
        for input in inputs {
            ctrl.enqueue(&mut queues, input).unwrap().unwrap();
        }
        let fired = ctrl.start(&mut queues).unwrap();
        assert_eq!(fired.len(), 1);
        assert_eq!(fired[0].cycle, 0);
        assert_eq!(fired[0].event.label, 0);
    }

    #[test]
    fn double_start_faults() {
        let mut ctrl = TimingController::new();
        let mut queues = QueueSet::new(8);
        ctrl.start(&mut queues).unwrap();
        assert_eq!(ctrl.start(&mut queues).unwrap_err(), TimingFault::DoubleStart);
    }

    #[test]
    fn full_queue_signals_backpressure_and_recovers() {
        let mut ctrl = TimingController::new();
        let mut queues = QueueSet::new(2);
        for label in 1..=2 {
            ctrl.enqueue(&mut queues, QueueInput::Timing { interval: 1, label })
                .unwrap()
                .unwrap();
        }
        let full = ctrl
            .enqueue(&mut queues, QueueInput::Timing { interval: 1, label: 3 })
            .unwrap();
        assert_eq!(full, Err(QueueFull));
        // Consumer progress unblocks the producer.
        ctrl.start(&mut queues).unwrap();
        ctrl.tick(&mut queues).unwrap();
        ctrl.enqueue(&mut queues, QueueInput::Timing { interval: 1, label: 3 })
            .unwrap()
            .unwrap();
    }

    #[test]
    fn stranded_events_are_reported() {
        let mut ctrl = TimingController::new();
        let mut queues = QueueSet::new(8);
        ctrl.enqueue(
            &mut queues,
            QueueInput::Event(TimedEvent {
                label: 5,
                payload: EventPayload::Pulse { qubits: QubitSet::single(0), uop: "I".into() },
            }),
        )
        .unwrap()
        .unwrap();
        assert_eq!(ctrl.check_drained(&queues), Err(TimingFault::Stranded(QueueKind::Pulse)));
    }

    #[test]
    fn missed_event_is_a_hard_fault() {
        let mut ctrl = TimingController::new();
        let mut queues = QueueSet::new(8);
        // Event at label 1, but the timing queue jumps straight to label 2.
        queues.pulse.push_back(TimedEvent {
            label: 1,
            payload: EventPayload::Pulse { qubits: QubitSet::single(0), uop: "I".into() },
        });
        queues.timing.push_back((1, 2));
        ctrl.start(&mut queues).unwrap();
        let err = ctrl.tick(&mut queues).unwrap_err();
        assert!(matches!(err, TimingFault::MissedEvent { .. }));
    }

    #[test]
    fn fast_forward_equals_single_stepping() {
        let stream = parse_qumis_lines(ALLXY_TWO_SEGMENTS).unwrap();
        let inputs = label_stream(&stream).unwrap();

        let run = |fast: bool| -> Vec<(u64, QueueKind, u32)> {
            let mut ctrl = TimingController::new();
            let mut queues = QueueSet::new(DEFAULT_QUEUE_CAPACITY);
            for input in inputs.clone() {
                ctrl.enqueue(&mut queues, input).unwrap().unwrap();
            }
            let mut out = Vec::new();
            let mut log = |fired: Vec<Fired>| {
                out.extend(fired.into_iter().map(|f| (f.cycle, f.kind, f.event.label)))
            };
            log(ctrl.start(&mut queues).unwrap());
            if fast {
                while let Some(f) = ctrl.advance_to_broadcast(&mut queues).unwrap() {
                    log(f);
                }
            } else {
                while !queues.timing.is_empty() {
                    log(ctrl.tick(&mut queues).unwrap());
                }
            }
            out
        };
        assert_eq!(run(true), run(false));
    }
}
