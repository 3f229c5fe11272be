//! Physical microcode unit and quantum microinstruction buffer: expand
//! quantum instructions into QuMIS via the Q control store, and assign timing
//! labels that drive the timing-control queues.

use std::collections::HashMap;

use thiserror::Error;

use crate::execution::QuantumIssue;
use crate::isa::{QisOperand, QuantumInstr, QubitSet, QumisInstr, Register};
use crate::timing::{EventPayload, QueueInput, TimedEvent};

/// Shipped microprogram definitions. `CNOT` realizes
/// `Ry(pi/2)_t . CZ . Ry(-pi/2)_t`; `Measure` splits into MPG + MD.
pub const DEFAULT_MICROPROGRAMS: &str = "\
def CNOT(qt, qc):
    Pulse {qt}, Ym90
    Wait 4
    Pulse {qt, qc}, CZ
    Wait 8
    Pulse {qt}, Y90
    Wait 4

def Measure(q, rd):
    MPG {q}, 300
    MD {q}, rd
";

#[derive(Debug, Error, PartialEq, Eq)]
pub enum MicrocodeError {
    #[error("unknown quantum mnemonic `{0}`")]
    UnknownMnemonic(String),
    #[error("`{mnemonic}` expects at most {expected} operand(s), got {got}")]
    ArityMismatch { mnemonic: String, expected: usize, got: usize },
    #[error("operand for formal `{formal}` of `{mnemonic}` must be a {expected}")]
    OperandKind { mnemonic: String, formal: String, expected: &'static str },
    #[error("formal parameter `{0}` is unbound")]
    UnboundFormal(String),
    #[error("timing label overflow (more than 2^32 - 1 time points)")]
    LabelOverflow,
    #[error("microprogram file: {0}")]
    BadDefinition(String),
    #[error("{0}")]
    Invalid(String),
}

/// Qubit-set element inside a microprogram body: either a formal parameter or
/// a concrete qubit address.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum QubitAtom {
    Formal(String),
    Concrete(u8),
}

/// Register operand inside a microprogram body.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RegAtom {
    Formal(String),
    Concrete(Register),
}

/// QuMIS instruction template with formal qubit/register parameters.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TemplateInstr {
    Wait { interval: u32 },
    Pulse { pairs: Vec<(Vec<QubitAtom>, String)> },
    Mpg { qubits: Vec<QubitAtom>, duration: u32 },
    Md { qubits: Vec<QubitAtom>, dest: Option<RegAtom> },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Microprogram {
    pub name: String,
    pub params: Vec<String>,
    pub body: Vec<TemplateInstr>,
}

/// The Q control store: quantum mnemonic -> microprogram.
#[derive(Debug, Clone, Default)]
pub struct QControlStore {
    programs: HashMap<String, Microprogram>,
}

impl QControlStore {
    /// Store preloaded with the shipped CNOT and Measure microprograms.
    pub fn with_defaults() -> Self {
        let mut store = QControlStore::default();
        store.load_definitions(DEFAULT_MICROPROGRAMS).expect("default microprograms parse");
        store
    }

    pub fn get(&self, name: &str) -> Option<&Microprogram> {
        self.programs.get(name)
    }

    pub fn insert(&mut self, program: Microprogram) {
        self.programs.insert(program.name.clone(), program);
    }

    /// Quantum mnemonics this store can expand, plus the native `Apply`.
    pub fn mnemonics(&self) -> Vec<String> {
        let mut names: Vec<String> = self.programs.keys().cloned().collect();
        names.push("Apply".to_string());
        names.sort();
        names
    }

    /// Loads `.qmp` definitions: `def NAME(params):` headers followed by
    /// QuMIS-grammar bodies with formal qubit/register parameters.
    pub fn load_definitions(&mut self, text: &str) -> Result<(), MicrocodeError> {
        let mut current: Option<Microprogram> = None;
        for (lineno, raw) in text.lines().enumerate() {
            let line = match raw.find('#') {
                Some(i) => &raw[..i],
                None => raw,
            }
            .trim();
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix("def ") {
                if let Some(prog) = current.take() {
                    self.finish(prog)?;
                }
                current = Some(parse_header(rest).map_err(|msg| {
                    MicrocodeError::BadDefinition(format!("line {}: {msg}", lineno + 1))
                })?);
            } else {
                let prog = current.as_mut().ok_or_else(|| {
                    MicrocodeError::BadDefinition(format!(
                        "line {}: instruction outside a `def` block",
                        lineno + 1
                    ))
                })?;
                let instr = parse_template_line(line, &prog.params).map_err(|msg| {
                    MicrocodeError::BadDefinition(format!("line {}: {msg}", lineno + 1))
                })?;
                prog.body.push(instr);
            }
        }
        if let Some(prog) = current.take() {
            self.finish(prog)?;
        }
        Ok(())
    }

    fn finish(&mut self, prog: Microprogram) -> Result<(), MicrocodeError> {
        if prog.body.is_empty() {
            return Err(MicrocodeError::BadDefinition(format!(
                "microprogram `{}` has an empty body",
                prog.name
            )));
        }
        self.insert(prog);
        Ok(())
    }
}

fn parse_header(rest: &str) -> Result<Microprogram, String> {
    let rest = rest.trim().strip_suffix(':').ok_or("`def` header must end with `:`")?;
    let open = rest.find('(').ok_or("`def` header needs a parameter list")?;
    let close = rest.rfind(')').ok_or("unclosed parameter list")?;
    let name = rest[..open].trim();
    if name.is_empty() {
        return Err("missing microprogram name".to_string());
    }
    let params: Vec<String> = rest[open + 1..close]
        .split(',')
        .map(|p| p.trim().to_string())
        .filter(|p| !p.is_empty())
        .collect();
    Ok(Microprogram { name: name.to_string(), params, body: Vec::new() })
}

fn parse_template_line(line: &str, params: &[String]) -> Result<TemplateInstr, String> {
    // Reuse the instruction parser by substituting formals with placeholder
    // concrete operands, then mapping them back. Simpler: parse by hand with
    // the same operand grammar, treating bare identifiers as formals.
    let (mnemonic, rest) = match line.find(char::is_whitespace) {
        Some(i) => (&line[..i], line[i..].trim()),
        None => (line, ""),
    };
    let ops = split_top_level(rest);
    let atomize = |s: &str| -> Result<Vec<QubitAtom>, String> {
        let inner = s
            .strip_prefix('{')
            .and_then(|t| t.strip_suffix('}'))
            .ok_or_else(|| format!("malformed qubit set `{s}`"))?;
        inner
            .split(',')
            .map(|part| {
                let part = part.trim();
                if let Some(d) = part.strip_prefix('q') {
                    if !d.is_empty() && d.chars().all(|c| c.is_ascii_digit()) {
                        return Ok(QubitAtom::Concrete(d.parse().map_err(|_| "bad qubit")?));
                    }
                }
                if params.iter().any(|p| p == part) {
                    Ok(QubitAtom::Formal(part.to_string()))
                } else {
                    Err(format!("`{part}` is neither a qubit nor a formal parameter"))
                }
            })
            .collect()
    };
    match mnemonic {
        "Wait" => {
            let interval: u32 =
                ops.first().and_then(|s| s.parse().ok()).ok_or("Wait needs an interval")?;
            if interval == 0 {
                return Err("Wait interval must be >= 1".to_string());
            }
            Ok(TemplateInstr::Wait { interval })
        }
        "Pulse" => {
            if ops.is_empty() || ops.len() % 2 != 0 {
                return Err("Pulse takes (qubit set, micro-op) pairs".to_string());
            }
            let mut pairs = Vec::new();
            for chunk in ops.chunks(2) {
                pairs.push((atomize(&chunk[0])?, chunk[1].clone()));
            }
            Ok(TemplateInstr::Pulse { pairs })
        }
        "MPG" => {
            if ops.len() != 2 {
                return Err("MPG takes a qubit set and a duration".to_string());
            }
            let duration: u32 = ops[1].parse().map_err(|_| "bad MPG duration")?;
            if duration == 0 {
                return Err("MPG duration must be >= 1".to_string());
            }
            Ok(TemplateInstr::Mpg { qubits: atomize(&ops[0])?, duration })
        }
        "MD" => {
            if ops.is_empty() || ops.len() > 2 {
                return Err("MD takes a qubit set and an optional register".to_string());
            }
            let dest = match ops.get(1) {
                None => None,
                Some(s) if params.iter().any(|p| p == s) => Some(RegAtom::Formal(s.clone())),
                Some(s) => {
                    let d = s.strip_prefix('r').ok_or_else(|| format!("bad register `{s}`"))?;
                    let index: u32 = d.parse().map_err(|_| format!("bad register `{s}`"))?;
                    let reg = Register::new(index).map_err(|e| e.to_string())?;
                    Some(RegAtom::Concrete(reg))
                }
            };
            Ok(TemplateInstr::Md { qubits: atomize(&ops[0])?, dest })
        }
        other => Err(format!("`{other}` is not a QuMIS mnemonic")),
    }
}

fn split_top_level(s: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut depth = 0usize;
    let mut cur = String::new();
    for c in s.chars() {
        match c {
            '{' => {
                depth += 1;
                cur.push(c);
            }
            '}' => {
                depth = depth.saturating_sub(1);
                cur.push(c);
            }
            ',' if depth == 0 => {
                out.push(cur.trim().to_string());
                cur.clear();
            }
            _ => cur.push(c),
        }
    }
    if !cur.trim().is_empty() {
        out.push(cur.trim().to_string());
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Binding {
    Qubit(u8),
    Reg(Register),
    Name(String),
}

/// Expands a quantum QIS instruction into QuMIS using the control store.
/// Native QuMIS instructions pass through unchanged.
pub fn expand(issue: &QuantumIssue, store: &QControlStore) -> Result<Vec<QumisInstr>, MicrocodeError> {
    match issue {
        QuantumIssue::Qumis(q) => Ok(vec![q.clone()]),
        QuantumIssue::Quantum(q) => expand_quantum(q, store),
    }
}

fn expand_quantum(
    instr: &QuantumInstr,
    store: &QControlStore,
) -> Result<Vec<QumisInstr>, MicrocodeError> {
    // `Apply uOp, qN` is a native single-pulse expansion.
    if instr.mnemonic == "Apply" {
        return match instr.operands.as_slice() {
            [QisOperand::Name(uop), QisOperand::Qubit(q)] => Ok(vec![QumisInstr::Pulse {
                pairs: vec![(QubitSet::single(*q), uop.clone())],
            }]),
            _ => Err(MicrocodeError::OperandKind {
                mnemonic: "Apply".to_string(),
                formal: "uOp, qubit".to_string(),
                expected: "micro-op name followed by a qubit",
            }),
        };
    }
    let prog = store
        .get(&instr.mnemonic)
        .ok_or_else(|| MicrocodeError::UnknownMnemonic(instr.mnemonic.clone()))?;
    if instr.operands.len() > prog.params.len() {
        return Err(MicrocodeError::ArityMismatch {
            mnemonic: instr.mnemonic.clone(),
            expected: prog.params.len(),
            got: instr.operands.len(),
        });
    }
    let mut bindings: HashMap<&str, Binding> = HashMap::new();
    for (formal, actual) in prog.params.iter().zip(&instr.operands) {
        let b = match actual {
            QisOperand::Qubit(q) => Binding::Qubit(*q),
            QisOperand::Reg(r) => Binding::Reg(*r),
            QisOperand::Name(n) => Binding::Name(n.clone()),
        };
        bindings.insert(formal.as_str(), b);
    }
    let qubit_of = |atoms: &[QubitAtom]| -> Result<QubitSet, MicrocodeError> {
        let mut qubits = Vec::with_capacity(atoms.len());
        for atom in atoms {
            match atom {
                QubitAtom::Concrete(q) => qubits.push(*q),
                QubitAtom::Formal(f) => match bindings.get(f.as_str()) {
                    Some(Binding::Qubit(q)) => qubits.push(*q),
                    Some(_) => {
                        return Err(MicrocodeError::OperandKind {
                            mnemonic: instr.mnemonic.clone(),
                            formal: f.clone(),
                            expected: "qubit address",
                        })
                    }
                    None => return Err(MicrocodeError::UnboundFormal(f.clone())),
                },
            }
        }
        QubitSet::new(qubits).map_err(|e| MicrocodeError::Invalid(e.to_string()))
    };
    let mut out = Vec::with_capacity(prog.body.len());
    for template in &prog.body {
        let expanded = match template {
            TemplateInstr::Wait { interval } => QumisInstr::Wait { interval: *interval },
            TemplateInstr::Pulse { pairs } => QumisInstr::Pulse {
                pairs: pairs
                    .iter()
                    .map(|(atoms, uop)| Ok((qubit_of(atoms)?, uop.clone())))
                    .collect::<Result<Vec<_>, MicrocodeError>>()?,
            },
            TemplateInstr::Mpg { qubits, duration } => {
                QumisInstr::Mpg { qubits: qubit_of(qubits)?, duration: *duration }
            }
            TemplateInstr::Md { qubits, dest } => {
                let dest = match dest {
                    None => None,
                    Some(RegAtom::Concrete(r)) => Some(*r),
                    Some(RegAtom::Formal(f)) => match bindings.get(f.as_str()) {
                        Some(Binding::Reg(r)) => Some(*r),
                        Some(_) => {
                            return Err(MicrocodeError::OperandKind {
                                mnemonic: instr.mnemonic.clone(),
                                formal: f.clone(),
                                expected: "register",
                            })
                        }
                        // An unbound MD destination is legal: the result goes
                        // only to the data-collection unit.
                        None => None,
                    },
                };
                QumisInstr::Md { qubits: qubit_of(qubits)?, dest }
            }
        };
        expanded.validate().map_err(|e| MicrocodeError::Invalid(e.to_string()))?;
        out.push(expanded);
    }
    Ok(out)
}

/// Assigns timing labels to a QuMIS stream and turns it into queue inputs.
///
/// Each `Wait n` increments the current label `L` and yields the timing-queue
/// entry `(n, L)`; events between two Waits share the label of the preceding
/// Wait; events preceding any Wait carry label 0.
#[derive(Debug, Default)]
pub struct LabelAssigner {
    current: u32,
}

impl LabelAssigner {
    pub fn new() -> Self {
        LabelAssigner::default()
    }

    pub fn current_label(&self) -> u32 {
        self.current
    }

    pub fn push(&mut self, instr: &QumisInstr) -> Result<Vec<QueueInput>, MicrocodeError> {
        match instr {
            QumisInstr::Wait { interval } => {
                self.current = self.current.checked_add(1).ok_or(MicrocodeError::LabelOverflow)?;
                Ok(vec![QueueInput::Timing { interval: *interval, label: self.current }])
            }
            QumisInstr::Pulse { pairs } => Ok(pairs
                .iter()
                .map(|(qubits, uop)| {
                    QueueInput::Event(TimedEvent {
                        label: self.current,
                        payload: EventPayload::Pulse { qubits: qubits.clone(), uop: uop.clone() },
                    })
                })
                .collect()),
            QumisInstr::Mpg { qubits, duration } => Ok(vec![QueueInput::Event(TimedEvent {
                label: self.current,
                payload: EventPayload::Mpg { qubits: qubits.clone(), duration: *duration },
            })]),
            QumisInstr::Md { qubits, dest } => Ok(vec![QueueInput::Event(TimedEvent {
                label: self.current,
                payload: EventPayload::Md { qubits: qubits.clone(), dest: *dest },
            })]),
        }
    }

    /// Labels a whole stream at once.
    pub fn push_all(&mut self, stream: &[QumisInstr]) -> Result<Vec<QueueInput>, MicrocodeError> {
        let mut out = Vec::new();
        for instr in stream {
            out.extend(self.push(instr)?);
        }
        Ok(out)
    }
}

/// Convenience wrapper used by tests and the assembler path: expand a raw
/// QIS/QuMIS issue stream into labeled queue inputs.
pub fn label_stream(stream: &[QumisInstr]) -> Result<Vec<QueueInput>, MicrocodeError> {
    LabelAssigner::new().push_all(stream)
}
