//! End-to-end acceptance suite. Each test prints one PASS line for its
//! criterion; tolerances are pinned in the assertions.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::f64::consts::{FRAC_PI_2, PI};

use quma::adi::{
    combined_waveform_baseline_bytes, discriminate, CodewordTrigger, Ctpg, GateSemantics,
    LookupTable, MduConfig, SeqTable,
};
use quma::config::SimConfig;
use quma::execution::QuantumIssue;
use quma::harness::pipeline::{run_allxy, run_pipeline, Mode, RunOptions};
use quma::harness::{ideal_population, AllXySpec};
use quma::isa::{parse_program, parse_qumis_lines, QisOperand, QuantumInstr};
use quma::microcode::{expand, label_stream, QControlStore};
use quma::qsim::{QubitState, TwoQubitRegister};
use quma::timing::{QueueKind, QueueSet, TimingController, DEFAULT_QUEUE_CAPACITY};

/// QuMIS stream for the first two AllXY measurement segments (combination 0
/// round then combination 1 round at one repetition each).
const TWO_SEGMENTS: &str = "\
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

fn loaded_controller() -> (TimingController, QueueSet) {
    let stream = parse_qumis_lines(TWO_SEGMENTS).unwrap();
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

fn uops(queues: &QueueSet) -> Vec<(String, u32)> {
    queues
        .snapshot(QueueKind::Pulse)
        .iter()
        .map(|e| match &e.payload {
            quma::timing::EventPayload::Pulse { uop, .. } => (uop.clone(), e.label),
            other => panic!("unexpected payload {other:?}"),
        })
        .collect()
}

#[test]
fn criterion_01_golden_queue_states() {
    // T_D = 0: all six timing entries and every event queued.
    let (mut ctrl, mut queues) = loaded_controller();
    assert_eq!(
        queues.snapshot_timing(),
        vec![(40000, 1), (4, 2), (4, 3), (40000, 4), (4, 5), (4, 6)]
    );
    assert_eq!(
        uops(&queues),
        vec![
            ("I".to_string(), 1),
            ("I".to_string(), 2),
            ("X180".to_string(), 4),
            ("X180".to_string(), 5),
        ]
    );
    assert_eq!(labels(&queues, QueueKind::Mpg), vec![3, 6]);
    assert_eq!(labels(&queues, QueueKind::Md), vec![3, 6]);

    // T_D = 40000: label 1 broadcast, first pulse gone.
    ctrl.start(&mut queues).unwrap();
    for _ in 0..40000 {
        ctrl.tick(&mut queues).unwrap();
    }
    assert_eq!(queues.snapshot_timing(), vec![(4, 2), (4, 3), (40000, 4), (4, 5), (4, 6)]);
    assert_eq!(
        uops(&queues),
        vec![("I".to_string(), 2), ("X180".to_string(), 4), ("X180".to_string(), 5)]
    );
    assert_eq!(labels(&queues, QueueKind::Mpg), vec![3, 6]);
    assert_eq!(labels(&queues, QueueKind::Md), vec![3, 6]);

    // T_D = 40008: labels 2 and 3 broadcast, first segment fully fired.
    for _ in 0..8 {
        ctrl.tick(&mut queues).unwrap();
    }
    assert_eq!(queues.snapshot_timing(), vec![(40000, 4), (4, 5), (4, 6)]);
    assert_eq!(uops(&queues), vec![("X180".to_string(), 4), ("X180".to_string(), 5)]);
    assert_eq!(labels(&queues, QueueKind::Mpg), vec![6]);
    assert_eq!(labels(&queues, QueueKind::Md), vec![6]);
    println!("criterion 1 (golden queue states at T_D 0/40000/40008): PASS");
}

#[test]
fn criterion_02_codeword_timing() {
    let program = parse_program(TWO_SEGMENTS).unwrap();
    let store = QControlStore::with_defaults();
    let cfg = SimConfig::default();
    let mut trace = Vec::new();
    run_pipeline(
        &program,
        &store,
        &cfg,
        &RunOptions::default(),
        Some(&mut trace as &mut dyn std::io::Write),
    )
    .unwrap();
    let mut codeword_cycles = Vec::new();
    let mut mpg_cycles = Vec::new();
    let mut md_cycles = Vec::new();
    for line in String::from_utf8(trace).unwrap().lines() {
        let v: serde_json::Value = serde_json::from_str(line).unwrap();
        match v["type"].as_str().unwrap() {
            "codeword" => codeword_cycles.push(v["cycle"].as_u64().unwrap()),
            "fire" => match v["queue"].as_str().unwrap() {
                "mpg" => mpg_cycles.push(v["cycle"].as_u64().unwrap()),
                "md" => md_cycles.push(v["cycle"].as_u64().unwrap()),
                _ => {}
            },
            _ => {}
        }
    }
    assert_eq!(codeword_cycles, vec![40000, 40004, 80008, 80012]);
    assert_eq!(mpg_cycles, vec![40008, 80016]);
    assert_eq!(md_cycles, vec![40008, 80016]);
    println!("criterion 2 (codeword triggers 40000/40004/80008/80012, MPG/MD 40008/80016): PASS");
}

#[test]
fn criterion_03_ideal_staircase_expectation() {
    let spec = AllXySpec { rounds: 2, ..Default::default() };
    let cfg = SimConfig::default();
    let opts = RunOptions { mode: Mode::Expectation, ..Default::default() };
    let outcome = run_allxy(&spec, &cfg, &opts, None).unwrap();
    assert_eq!(outcome.fidelities.len(), 42);
    for (slot, &f) in outcome.fidelities.iter().enumerate() {
        let ideal = ideal_population(slot / 2);
        assert!(
            (f - ideal).abs() < 1e-9,
            "slot {slot}: F = {f}, ideal = {ideal}"
        );
    }
    println!("criterion 3 (expectation-mode staircase exact to 1e-9): PASS");
}

#[test]
fn criterion_04_sampled_staircase() {
    let spec = AllXySpec { rounds: 25600, ..Default::default() };
    let cfg = SimConfig::default();
    let opts = RunOptions { mode: Mode::Sample, seed: 7, ..Default::default() };
    let outcome = run_allxy(&spec, &cfg, &opts, None).unwrap();
    for (slot, &f) in outcome.fidelities.iter().enumerate() {
        let ideal = ideal_population(slot / 2);
        assert!(
            (f - ideal).abs() <= 0.016,
            "slot {slot}: F = {f}, ideal = {ideal}"
        );
    }
    println!("criterion 4 (sampled staircase, N=25600, within 0.016 of ideal): PASS");
}

#[test]
fn criterion_05_ssb_timing_sensitivity() {
    let f_ssb = 0.05; // 50 MHz, 20 ns period
    let ctpg = Ctpg::new(0, LookupTable::default_single_qubit());
    // Trigger cycle chosen so the nominal start is phase-aligned.
    let x180 = ctpg
        .generate_pulse(&CodewordTrigger { cycle: 40000, unit: 0, codeword: 1 })
        .unwrap();
    assert_eq!(x180.start_ns % 20.0, 0.0);

    // 5 ns late: the x pulse acts as the y rotation.
    let mut delayed = QubitState::<f64>::ground(20000.0);
    delayed.apply_pulse_event(&x180, f_ssb, 5.0);
    let mut y180 = QubitState::<f64>::ground(20000.0);
    y180.apply_rotation(FRAC_PI_2, PI);
    assert!(delayed.fidelity(&y180) >= 1.0 - 1e-12);

    // 20 ns late (one full period): indistinguishable from on time.
    let mut full_period = QubitState::<f64>::ground(20000.0);
    full_period.apply_pulse_event(&x180, f_ssb, 20.0);
    let mut x_ref = QubitState::<f64>::ground(20000.0);
    x_ref.apply_rotation(0.0, PI);
    assert!(full_period.fidelity(&x_ref) >= 1.0 - 1e-12);
    println!("criterion 5 (5 ns SSB delay turns x into y; 20 ns restores it): PASS");
}

#[test]
fn criterion_06_cnot_microprogram() {
    let store = QControlStore::with_defaults();
    let issue = QuantumIssue::Quantum(QuantumInstr {
        mnemonic: "CNOT".into(),
        operands: vec![QisOperand::Qubit(1), QisOperand::Qubit(2)],
    });
    let stream = expand(&issue, &store).unwrap();
    let inputs = label_stream(&stream).unwrap();

    // Drive the expansion through the timing controller and record fired
    // pulses with their cycles.
    let mut ctrl = TimingController::new();
    let mut queues = QueueSet::new(DEFAULT_QUEUE_CAPACITY);
    for input in inputs {
        ctrl.enqueue(&mut queues, input).unwrap().unwrap();
    }
    let mut fired = ctrl.start(&mut queues).unwrap();
    while let Some(more) = ctrl.advance_to_broadcast(&mut queues).unwrap() {
        fired.extend(more);
    }
    ctrl.check_drained(&queues).unwrap();
    let pulses: Vec<(u64, String)> = fired
        .iter()
        .filter_map(|f| match &f.event.payload {
            quma::timing::EventPayload::Pulse { uop, .. } => Some((f.cycle, uop.clone())),
            _ => None,
        })
        .collect();
    assert_eq!(pulses.len(), 3);
    assert_eq!(pulses[0].1, "Ym90");
    assert_eq!(pulses[1].1, "CZ");
    assert_eq!(pulses[2].1, "Y90");
    assert_eq!(pulses[1].0 - pulses[0].0, 4, "CZ fires 4 cycles after Ym90");
    assert_eq!(pulses[2].0 - pulses[1].0, 8, "Y90 fires 8 cycles after CZ");

    // Simulate the fired sequence on all four basis states; target is q1.
    let lut = LookupTable::default_single_qubit();
    let seq = SeqTable::default_single_qubit();
    for (c, t, ec, et) in [(0u8, 0u8, 0u8, 0u8), (0, 1, 0, 1), (1, 0, 1, 1), (1, 1, 1, 0)] {
        let mut reg = TwoQubitRegister::<f64>::from_basis(c, t);
        for (cycle, uop) in &pulses {
            for (_, cw) in seq.steps(uop).unwrap().iter().map(|&(o, cw)| (cycle + o, cw)) {
                match lut.get(cw).unwrap().gate {
                    GateSemantics::Cz => reg.apply_cz(),
                    GateSemantics::Rotation { axis, angle } => reg.apply_single(1, axis, angle),
                    other => panic!("unexpected gate {other:?}"),
                }
            }
        }
        let want = TwoQubitRegister::<f64>::from_basis(ec, et);
        assert!(
            reg.fidelity(&want) >= 1.0 - 1e-12,
            "CNOT |{c}{t}> -> |{ec}{et}>"
        );
    }
    println!("criterion 6 (CNOT expansion timing and basis-state action): PASS");
}

#[test]
fn criterion_07_seq_z_equivalence() {
    let seq = SeqTable::default_single_qubit();
    let ctpg = Ctpg::new(0, LookupTable::default_single_qubit());
    let f_ssb = -0.05;
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let gauss = |rng: &mut ChaCha8Rng| -> f64 {
        let u1: f64 = rng.gen::<f64>().max(f64::MIN_POSITIVE);
        let u2: f64 = rng.gen();
        (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    };
    for trial in 0..100 {
        // Haar-random pure state from normalized complex Gaussians.
        let amp0 = Complex64::new(gauss(&mut rng), gauss(&mut rng));
        let amp1 = Complex64::new(gauss(&mut rng), gauss(&mut rng));
        let mut via_seq = QubitState::from_amplitudes(amp0, amp1, 20000.0);
        let mut direct = via_seq.clone();

        let base_cycle = 100 + 8 * trial as u64;
        for trigger in seq.emit_codewords("Z", base_cycle, 0).unwrap() {
            let pulse = ctpg.generate_pulse(&trigger).unwrap();
            via_seq.apply_pulse_event(&pulse, f_ssb, 0.0);
        }
        // Direct Z up to global phase: negate the excited amplitude.
        direct.amp1 = -direct.amp1;
        assert!(
            via_seq.fidelity(&direct) >= 1.0 - 1e-12,
            "trial {trial}: fidelity {}",
            via_seq.fidelity(&direct)
        );
    }
    println!("criterion 7 (Seq_Z two-codeword path equals direct Z on 100 random states): PASS");
}

#[test]
fn criterion_08_memory_accounting() {
    let lut = LookupTable::default_single_qubit();
    let per_codeword = lut.footprint_bytes(&[0, 1, 2, 3, 4, 5, 6]).unwrap();
    let baseline = combined_waveform_baseline_bytes(&lut, 21, 2, 20.0);
    assert_eq!(per_codeword, 420);
    assert_eq!(baseline, 2520);
    println!("criterion 8 (lookup table 420 bytes vs 2520-byte combined baseline): PASS");
}

#[test]
fn criterion_09_timing_decoupling() {
    let spec = AllXySpec { rounds: 2, ..Default::default() };
    let program = spec.generate_program();
    let store = QControlStore::with_defaults();
    let cfg = SimConfig::default();
    let run = |throttle: u64| -> Vec<u8> {
        let mut trace = Vec::new();
        let opts = RunOptions { throttle, ..Default::default() };
        run_pipeline(
            &program,
            &store,
            &cfg,
            &opts,
            Some(&mut trace as &mut dyn std::io::Write),
        )
        .unwrap();
        trace
    };
    let base = run(1);
    assert!(!base.is_empty());
    assert_eq!(base, run(10), "throttle 10 trace diverged");
    assert_eq!(base, run(1000), "throttle 1000 trace diverged");
    println!("criterion 9 (producer throttled 1/10/1000 yields byte-identical traces): PASS");
}

#[test]
fn criterion_10_measurement_discrimination() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..1000 {
        let len = rng.gen_range(1..64);
        let rate: f64 = rng.gen_range(0.25..4.0);
        let signal: Vec<f64> = (0..len).map(|_| rng.gen_range(-10.0..10.0)).collect();
        let weights: Vec<f64> = (0..len).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let cfg = MduConfig { weights: weights.clone(), sample_rate_gsps: rate, threshold: 0.0 };
        let (s, _) = discriminate(&cfg, &signal).unwrap();
        // Independent brute-force oracle.
        let mut oracle = 0.0;
        for k in 0..len {
            oracle += signal[k] * weights[k] / rate;
        }
        let scale = 1.0 + oracle.abs();
        assert!((s - oracle).abs() <= 1e-9 * scale, "S = {s}, oracle = {oracle}");
    }
    // Strict threshold: S exactly equal to T_q reads as 0.
    let cfg = MduConfig::<f64>::uniform(10, 1.0, 10.0);
    let (s, bit) = discriminate(&cfg, &vec![1.0; 10]).unwrap();
    assert_eq!(s, 10.0);
    assert!(!bit);
    println!("criterion 10 (discrimination matches brute-force oracle; strict threshold): PASS");
}

#[test]
fn criterion_11_seeded_determinism() {
    let spec = AllXySpec { rounds: 128, ..Default::default() };
    let cfg = SimConfig::default();
    let run = || {
        let mut trace = Vec::new();
        let opts = RunOptions { mode: Mode::Sample, seed: 2024, ..Default::default() };
        let outcome = run_allxy(
            &spec,
            &cfg,
            &opts,
            Some(&mut trace as &mut dyn std::io::Write),
        )
        .unwrap();
        let mut results = String::new();
        for r in &outcome.records {
            results.push_str(&format!(
                "{},{},{:.12},{:.12}\n",
                r.slot, r.combination, r.average_level, r.fidelity
            ));
        }
        (trace, results)
    };
    let (trace_a, results_a) = run();
    let (trace_b, results_b) = run();
    assert!(!trace_a.is_empty());
    assert_eq!(trace_a, trace_b, "traces differ between identically seeded runs");
    assert_eq!(results_a, results_b, "results differ between identically seeded runs");
    println!("criterion 11 (same seed gives byte-identical trace and results): PASS");
}
