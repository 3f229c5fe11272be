//! `quma`: assemble and run programs for the queue-based quantum control
//! microarchitecture simulator, or drive the built-in AllXY experiment.

use std::fmt::Write as _;
use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use quma::adi::Ctpg;
use quma::config::SimConfig;
use quma::execution::ExecFault;
use quma::harness::pipeline::{
    run_allxy, run_pipeline, Mode, PipelineError, PipelineOutput, RunOptions,
};
use quma::harness::AllXySpec;
use quma::isa::{disassemble, parse_program, Register};
use quma::microcode::QControlStore;

const EXIT_PARSE: u8 = 2;
const EXIT_RUNTIME: u8 = 3;
const EXIT_BUDGET: u8 = 4;
const EXIT_IO: u8 = 5;

#[derive(Parser)]
#[command(name = "quma", version, about = "Queue-based quantum control microarchitecture simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parse a program and write its canonical disassembly.
    Assemble {
        /// Input `.qumis` program.
        input: PathBuf,
        /// Output path; stdout when omitted.
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Run a program through the full pipeline.
    Run {
        /// Input `.qumis` program.
        input: PathBuf,
        #[command(flatten)]
        common: CommonRunArgs,
        /// Enable the data-collection unit with this many slots per round.
        #[arg(long)]
        k: Option<usize>,
    },
    /// Generate, run, and analyze the AllXY calibration experiment.
    Allxy {
        #[command(flatten)]
        common: CommonRunArgs,
        /// Outer rounds N.
        #[arg(long, default_value_t = 25600)]
        rounds: u32,
        /// Back-to-back repetitions of each gate combination.
        #[arg(long, default_value_t = 2)]
        reps: usize,
        /// Readout noise standard deviation (overrides config).
        #[arg(long)]
        noise: Option<f64>,
        /// Qubit T1 in ns (overrides config).
        #[arg(long)]
        t1: Option<f64>,
        /// Single-sideband frequency in GHz (overrides config).
        #[arg(long)]
        ssb: Option<f64>,
        /// Fault injection: delay x-family pulses by this many ns.
        #[arg(long, default_value_t = 0.0)]
        ssb_shift_ns: f64,
        /// Write the fidelity staircase as an SVG plot.
        #[arg(long)]
        plot: Option<PathBuf>,
        /// Write the generated program instead of nothing.
        #[arg(long)]
        emit_program: Option<PathBuf>,
    },
    /// Render one codeword's I/Q waveform as CSV.
    Waveform {
        codeword: u8,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Output path; stdout when omitted.
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
}

#[derive(Args)]
struct CommonRunArgs {
    /// Configuration file (TOML).
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value_t = ModeArg::Expectation)]
    mode: ModeArg,
    /// JSON Lines event trace output.
    #[arg(long)]
    trace: Option<PathBuf>,
    /// Results file output.
    #[arg(long)]
    results: Option<PathBuf>,
    /// Execution-controller step budget (overrides config).
    #[arg(long)]
    max_steps: Option<u64>,
    /// Consumer ticks per produced instruction.
    #[arg(long, default_value_t = 1)]
    throttle: u64,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Expectation,
    Sample,
}

impl From<ModeArg> for Mode {
    fn from(m: ModeArg) -> Mode {
        match m {
            ModeArg::Expectation => Mode::Expectation,
            ModeArg::Sample => Mode::Sample,
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(code) => ExitCode::from(code),
    }
}

fn dispatch(cli: Cli) -> Result<(), u8> {
    match cli.command {
        Command::Assemble { input, output } => cmd_assemble(&input, output.as_deref()),
        Command::Run { input, common, k } => cmd_run(&input, &common, k),
        Command::Allxy {
            common,
            rounds,
            reps,
            noise,
            t1,
            ssb,
            ssb_shift_ns,
            plot,
            emit_program,
        } => cmd_allxy(&common, rounds, reps, noise, t1, ssb, ssb_shift_ns, plot, emit_program),
        Command::Waveform { codeword, config, output } => {
            cmd_waveform(codeword, config.as_deref(), output.as_deref())
        }
    }
}

fn io_fail(err: impl std::fmt::Display) -> u8 {
    eprintln!("error: {err}");
    EXIT_IO
}

fn read_file(path: &std::path::Path) -> Result<String, u8> {
    std::fs::read_to_string(path).map_err(|e| io_fail(format!("reading {}: {e}", path.display())))
}

fn write_output(path: Option<&std::path::Path>, content: &str) -> Result<(), u8> {
    match path {
        Some(p) => std::fs::write(p, content)
            .map_err(|e| io_fail(format!("writing {}: {e}", p.display()))),
        None => {
            print!("{content}");
            Ok(())
        }
    }
}

fn load_config(path: Option<&std::path::Path>) -> Result<SimConfig, u8> {
    match path {
        None => Ok(SimConfig::default()),
        Some(p) => SimConfig::load(p).map_err(|e| {
            eprintln!("error: {e}");
            EXIT_IO
        }),
    }
}

fn pipeline_exit(err: PipelineError) -> u8 {
    eprintln!("error: {err}");
    match err {
        PipelineError::BudgetExhausted(_) => EXIT_BUDGET,
        PipelineError::Exec(ExecFault::BudgetExhausted { .. }) => EXIT_BUDGET,
        PipelineError::Io(_) | PipelineError::Config(_) => EXIT_IO,
        _ => EXIT_RUNTIME,
    }
}

fn cmd_assemble(input: &std::path::Path, output: Option<&std::path::Path>) -> Result<(), u8> {
    let source = read_file(input)?;
    let program = parse_program(&source).map_err(|e| {
        eprintln!("error: {e}");
        EXIT_PARSE
    })?;
    write_output(output, &disassemble(&program))
}

/// Opens the trace file and runs the pipeline, keeping borrow scopes tight.
fn run_with_trace(
    program: &quma::isa::Program,
    store: &QControlStore,
    cfg: &SimConfig,
    opts: &RunOptions,
    trace_path: Option<&std::path::Path>,
) -> Result<PipelineOutput, u8> {
    let mut trace_file = match trace_path {
        Some(p) => Some(
            std::fs::File::create(p)
                .map(std::io::BufWriter::new)
                .map_err(|e| io_fail(format!("creating {}: {e}", p.display())))?,
        ),
        None => None,
    };
    let out = run_pipeline(
        program,
        store,
        cfg,
        opts,
        trace_file.as_mut().map(|f| f as &mut dyn Write),
    )
    .map_err(pipeline_exit)?;
    if let Some(f) = trace_file.as_mut() {
        f.flush().map_err(io_fail)?;
    }
    Ok(out)
}

fn cmd_run(input: &std::path::Path, common: &CommonRunArgs, k: Option<usize>) -> Result<(), u8> {
    let source = read_file(input)?;
    let program = parse_program(&source).map_err(|e| {
        eprintln!("error: {e}");
        EXIT_PARSE
    })?;
    let mut cfg = load_config(common.config.as_deref())?;
    if let Some(budget) = common.max_steps {
        cfg.timing.step_budget = budget;
    }
    let store = cfg.control_store().map_err(|e| io_fail(e))?;
    let opts = RunOptions {
        mode: common.mode.into(),
        seed: common.seed,
        throttle: common.throttle,
        collector_slots: k,
    };
    let out = run_with_trace(&program, &store, &cfg, &opts, common.trace.as_deref())?;
    let report = run_report(&out);
    write_output(common.results.as_deref(), &report)
}

/// Final register file, measurement records, and optional collector averages.
fn run_report(out: &PipelineOutput) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "final_cycle,{}", out.final_cycle);
    for i in 0..quma::isa::NUM_REGISTERS {
        let r = Register::new(i as u32).expect("register");
        let _ = writeln!(s, "r{i},{}", out.exec.regs.read(r).unwrap_or(0));
    }
    for m in &out.md_records {
        let _ = writeln!(s, "md,{},{},{:.12},{}", m.cycle, m.qubits, m.level, m.bit as u8);
    }
    if let Some(collector) = &out.collector {
        if let Ok(avgs) = collector.averages() {
            for (slot, avg) in avgs.iter().enumerate() {
                let _ = writeln!(s, "avg,{slot},{avg:.12}");
            }
        }
    }
    s
}

#[allow(clippy::too_many_arguments)]
fn cmd_allxy(
    common: &CommonRunArgs,
    rounds: u32,
    reps: usize,
    noise: Option<f64>,
    t1: Option<f64>,
    ssb: Option<f64>,
    ssb_shift_ns: f64,
    plot: Option<PathBuf>,
    emit_program: Option<PathBuf>,
) -> Result<(), u8> {
    let mut cfg = load_config(common.config.as_deref())?;
    if let Some(sigma) = noise {
        cfg.readout.sigma = sigma;
    }
    if let Some(t1) = t1 {
        cfg.qubit.t1_ns = t1;
    }
    if let Some(f) = ssb {
        cfg.ctpg.ssb_freq_ghz = f;
    }
    if let Some(budget) = common.max_steps {
        cfg.timing.step_budget = budget;
    }
    cfg.ctpg.x_delay_ns = ssb_shift_ns;
    let spec = AllXySpec { rounds, repetitions: reps, ..Default::default() };
    if let Some(path) = &emit_program {
        write_output(Some(path), &disassemble(&spec.generate_program()))?;
    }
    let opts = RunOptions {
        mode: common.mode.into(),
        seed: common.seed,
        throttle: common.throttle,
        collector_slots: None,
    };
    let mut trace_file = match common.trace.as_deref() {
        Some(p) => Some(
            std::fs::File::create(p)
                .map(std::io::BufWriter::new)
                .map_err(|e| io_fail(format!("creating {}: {e}", p.display())))?,
        ),
        None => None,
    };
    let outcome = run_allxy(
        &spec,
        &cfg,
        &opts,
        trace_file.as_mut().map(|f| f as &mut dyn Write),
    )
    .map_err(pipeline_exit)?;
    if let Some(f) = trace_file.as_mut() {
        f.flush().map_err(io_fail)?;
    }
    let mut csv = String::from("slot,combination,gate1,gate2,average,fidelity,ideal\n");
    for r in &outcome.records {
        let _ = writeln!(
            csv,
            "{},{},{},{},{:.12},{:.12},{}",
            r.slot, r.combination, r.gates[0], r.gates[1], r.average_level, r.fidelity, r.ideal
        );
    }
    write_output(common.results.as_deref(), &csv)?;
    if let Some(path) = &plot {
        write_output(Some(path), &staircase_svg(&outcome.fidelities))?;
    }
    Ok(())
}

/// Minimal SVG scatter/staircase of fidelity versus slot index.
fn staircase_svg(fidelities: &[f64]) -> String {
    let (w, h, pad) = (640.0, 360.0, 40.0);
    let n = fidelities.len().max(1) as f64;
    let x = |i: f64| pad + i / (n - 1.0).max(1.0) * (w - 2.0 * pad);
    let y = |f: f64| h - pad - f.clamp(-0.2, 1.2) * (h - 2.0 * pad);
    let mut s = String::new();
    let _ = writeln!(
        s,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\">"
    );
    let _ = writeln!(s, "<rect width=\"{w}\" height=\"{h}\" fill=\"white\"/>");
    for level in [0.0, 0.5, 1.0] {
        let _ = writeln!(
            s,
            "<line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"#ccc\"/>",
            pad,
            y(level),
            w - pad,
            y(level)
        );
        let _ = writeln!(
            s,
            "<text x=\"4\" y=\"{}\" font-size=\"12\">{level}</text>",
            y(level) + 4.0
        );
    }
    for (i, &f) in fidelities.iter().enumerate() {
        let _ = writeln!(
            s,
            "<circle cx=\"{:.1}\" cy=\"{:.1}\" r=\"3\" fill=\"crimson\"/>",
            x(i as f64),
            y(f)
        );
    }
    let _ = writeln!(s, "<text x=\"{}\" y=\"{}\" font-size=\"12\">slot</text>", w / 2.0, h - 8.0);
    s.push_str("</svg>\n");
    s
}

fn cmd_waveform(
    codeword: u8,
    config: Option<&std::path::Path>,
    output: Option<&std::path::Path>,
) -> Result<(), u8> {
    let cfg = load_config(config)?;
    let lut = cfg.lookup_table().map_err(|e| io_fail(e))?;
    let mut ctpg = Ctpg::new(0, lut);
    ctpg.delay_cycles = cfg.ctpg.delay_cycles;
    let csv = ctpg.waveform_csv(codeword, cfg.ctpg.ssb_freq_ghz).map_err(|e| {
        eprintln!("error: {e}");
        EXIT_RUNTIME
    })?;
    write_output(output, &csv)
}
