//! Line-oriented parser for `.qumis` assembly text.
//!
//! Grammar: one instruction per line, `#` starts an end-of-line comment,
//! labels are written `Name:` on their own line or prefixing an instruction,
//! immediates are decimal, qubit sets are written `{q0, q1}`.

use std::collections::{BTreeMap, HashSet};
use std::fmt;

use thiserror::Error;

use super::{
    ClassicalInstr, Instr, LabelRef, MemRef, Program, QisOperand, QuantumInstr, QubitSet,
    QumisInstr, Register,
};

/// Quantum mnemonics the parser accepts by default. `Apply` is handled
/// natively by the microcode unit; the rest come from the shipped
/// microprogram definitions.
pub const DEFAULT_QUANTUM_MNEMONICS: &[&str] = &["Apply", "Measure", "CNOT"];

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("line {line}: {kind}")]
pub struct ParseError {
    pub line: usize,
    pub kind: ParseErrorKind,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ParseErrorKind {
    EmptyProgram,
    UnknownMnemonic(String),
    DuplicateLabel(String),
    UndefinedLabel(String),
    BadLabel(String),
    BadOperands(String),
    Invalid(String),
}

impl fmt::Display for ParseErrorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ParseErrorKind::EmptyProgram => write!(f, "program is empty"),
            ParseErrorKind::UnknownMnemonic(m) => write!(f, "unknown mnemonic `{m}`"),
            ParseErrorKind::DuplicateLabel(l) => write!(f, "duplicate label `{l}`"),
            ParseErrorKind::UndefinedLabel(l) => write!(f, "undefined label `{l}`"),
            ParseErrorKind::BadLabel(l) => write!(f, "malformed label `{l}`"),
            ParseErrorKind::BadOperands(m) => write!(f, "malformed operands: {m}"),
            ParseErrorKind::Invalid(m) => write!(f, "{m}"),
        }
    }
}

fn err<T>(line: usize, kind: ParseErrorKind) -> Result<T, ParseError> {
    Err(ParseError { line, kind })
}

/// Parses a program using the default quantum mnemonic set.
pub fn parse_program(source: &str) -> Result<Program, ParseError> {
    let defaults: Vec<String> = DEFAULT_QUANTUM_MNEMONICS.iter().map(|s| s.to_string()).collect();
    parse_program_with_mnemonics(source, &defaults)
}

/// Parses a program, additionally accepting `quantum_mnemonics` as
/// microcode-expanded quantum instructions.
pub fn parse_program_with_mnemonics(
    source: &str,
    quantum_mnemonics: &[String],
) -> Result<Program, ParseError> {
    let known: HashSet<&str> = quantum_mnemonics.iter().map(|s| s.as_str()).collect();

    // First pass: collect labels and raw instruction lines.
    let mut labels: BTreeMap<String, usize> = BTreeMap::new();
    let mut pending: Vec<(usize, String)> = Vec::new(); // (line number, instruction text)
    for (lineno, raw) in source.lines().enumerate() {
        let lineno = lineno + 1;
        let mut text = match raw.find('#') {
            Some(i) => &raw[..i],
            None => raw,
        }
        .trim();
        if text.is_empty() {
            continue;
        }
        if let Some(colon) = text.find(':') {
            let name = text[..colon].trim();
            if !is_identifier(name) {
                return err(lineno, ParseErrorKind::BadLabel(name.to_string()));
            }
            if labels.insert(name.to_string(), pending.len()).is_some() {
                return err(lineno, ParseErrorKind::DuplicateLabel(name.to_string()));
            }
            text = text[colon + 1..].trim();
            if text.is_empty() {
                continue;
            }
        }
        pending.push((lineno, text.to_string()));
    }
    if pending.is_empty() {
        return err(0, ParseErrorKind::EmptyProgram);
    }

    // Second pass: parse instructions and resolve branch targets.
    let resolve = |line: usize, name: &str| -> Result<LabelRef, ParseError> {
        match labels.get(name) {
            Some(&index) => Ok(LabelRef { name: name.to_string(), index }),
            None => err(line, ParseErrorKind::UndefinedLabel(name.to_string())),
        }
    };
    let mut instructions = Vec::with_capacity(pending.len());
    for (line, text) in &pending {
        instructions.push(parse_instruction(*line, text, &known, &resolve)?);
    }
    Ok(Program { instructions, labels })
}

/// Parses text consisting solely of QuMIS instructions (no labels, no
/// classical instructions) into a flat instruction list.
pub fn parse_qumis_lines(source: &str) -> Result<Vec<QumisInstr>, ParseError> {
    let program = parse_program(source)?;
    program
        .instructions
        .into_iter()
        .enumerate()
        .map(|(i, instr)| match instr {
            Instr::Qumis(q) => Ok(q),
            other => err(
                i + 1,
                ParseErrorKind::Invalid(format!("expected a QuMIS instruction, got `{other}`")),
            ),
        })
        .collect()
}

fn is_identifier(s: &str) -> bool {
    let mut chars = s.chars();
    match chars.next() {
        Some(c) if c.is_ascii_alphabetic() || c == '_' => {}
        _ => return false,
    }
    chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

/// Splits an operand string on commas that are not inside `{}`.
fn split_operands(s: &str) -> Vec<String> {
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
    let last = cur.trim();
    if !last.is_empty() {
        out.push(last.to_string());
    }
    out
}

fn parse_register(line: usize, s: &str) -> Result<Register, ParseError> {
    let digits = s
        .strip_prefix('r')
        .filter(|d| !d.is_empty() && d.chars().all(|c| c.is_ascii_digit()));
    let index: u32 = match digits.and_then(|d| d.parse().ok()) {
        Some(i) => i,
        None => {
            return err(line, ParseErrorKind::BadOperands(format!("expected register, got `{s}`")))
        }
    };
    Register::new(index)
        .map_err(|e| ParseError { line, kind: ParseErrorKind::BadOperands(e.to_string()) })
}

fn parse_imm(line: usize, s: &str) -> Result<i32, ParseError> {
    s.parse().map_err(|_| ParseError {
        line,
        kind: ParseErrorKind::BadOperands(format!("expected decimal immediate, got `{s}`")),
    })
}

fn parse_uimm(line: usize, s: &str) -> Result<u32, ParseError> {
    s.parse().map_err(|_| ParseError {
        line,
        kind: ParseErrorKind::BadOperands(format!("expected unsigned immediate, got `{s}`")),
    })
}

fn parse_memref(line: usize, s: &str) -> Result<MemRef, ParseError> {
    let bad = || ParseError {
        line,
        kind: ParseErrorKind::BadOperands(format!("expected memory operand rX[imm], got `{s}`")),
    };
    let open = s.find('[').ok_or_else(bad)?;
    if !s.ends_with(']') {
        return Err(bad());
    }
    let base = parse_register(line, s[..open].trim())?;
    let offset = parse_imm(line, s[open + 1..s.len() - 1].trim())?;
    Ok(MemRef { base, offset })
}

fn parse_qubit(line: usize, s: &str) -> Result<u8, ParseError> {
    let digits = s
        .strip_prefix('q')
        .filter(|d| !d.is_empty() && d.chars().all(|c| c.is_ascii_digit()));
    digits.and_then(|d| d.parse().ok()).ok_or_else(|| ParseError {
        line,
        kind: ParseErrorKind::BadOperands(format!("expected qubit qN, got `{s}`")),
    })
}

fn parse_qubit_set(line: usize, s: &str) -> Result<QubitSet, ParseError> {
    let bad = |msg: String| ParseError { line, kind: ParseErrorKind::BadOperands(msg) };
    let inner = s
        .strip_prefix('{')
        .and_then(|t| t.strip_suffix('}'))
        .ok_or_else(|| bad(format!("malformed qubit set `{s}`")))?;
    let mut qubits = Vec::new();
    for part in inner.split(',') {
        let part = part.trim();
        if part.is_empty() {
            return Err(bad(format!("malformed qubit set `{s}`")));
        }
        qubits.push(parse_qubit(line, part)?);
    }
    QubitSet::new(qubits).map_err(|e| bad(e.to_string()))
}

fn expect_arity(line: usize, mnemonic: &str, ops: &[String], n: usize) -> Result<(), ParseError> {
    if ops.len() == n {
        Ok(())
    } else {
        err(
            line,
            ParseErrorKind::BadOperands(format!(
                "`{mnemonic}` takes {n} operand(s), got {}",
                ops.len()
            )),
        )
    }
}

fn parse_instruction(
    line: usize,
    text: &str,
    quantum: &HashSet<&str>,
    resolve: &dyn Fn(usize, &str) -> Result<LabelRef, ParseError>,
) -> Result<Instr, ParseError> {
    let (mnemonic, rest) = match text.find(char::is_whitespace) {
        Some(i) => (&text[..i], text[i..].trim()),
        None => (text, ""),
    };
    let ops = split_operands(rest);
    let instr = match mnemonic {
        "mov" | "Mov" => {
            expect_arity(line, mnemonic, &ops, 2)?;
            Instr::Classical(ClassicalInstr::Mov {
                rd: parse_register(line, &ops[0])?,
                imm: parse_imm(line, &ops[1])?,
            })
        }
        "add" | "Add" | "addi" => {
            expect_arity(line, mnemonic, &ops, 3)?;
            let rd = parse_register(line, &ops[0])?;
            let ra = parse_register(line, &ops[1])?;
            // `add r1, r1, 1` is accepted as the immediate form.
            if mnemonic != "addi" && ops[2].starts_with('r') && parse_register(line, &ops[2]).is_ok()
            {
                Instr::Classical(ClassicalInstr::Add { rd, ra, rb: parse_register(line, &ops[2])? })
            } else {
                Instr::Classical(ClassicalInstr::Addi { rd, ra, imm: parse_imm(line, &ops[2])? })
            }
        }
        "sub" | "Sub" => {
            expect_arity(line, mnemonic, &ops, 3)?;
            Instr::Classical(ClassicalInstr::Sub {
                rd: parse_register(line, &ops[0])?,
                ra: parse_register(line, &ops[1])?,
                rb: parse_register(line, &ops[2])?,
            })
        }
        "load" | "Load" => {
            expect_arity(line, mnemonic, &ops, 2)?;
            Instr::Classical(ClassicalInstr::Load {
                rd: parse_register(line, &ops[0])?,
                addr: parse_memref(line, &ops[1])?,
            })
        }
        "store" | "Store" => {
            expect_arity(line, mnemonic, &ops, 2)?;
            Instr::Classical(ClassicalInstr::Store {
                rs: parse_register(line, &ops[0])?,
                addr: parse_memref(line, &ops[1])?,
            })
        }
        "bne" | "beq" => {
            expect_arity(line, mnemonic, &ops, 3)?;
            let ra = parse_register(line, &ops[0])?;
            let rb = parse_register(line, &ops[1])?;
            let target = resolve(line, &ops[2])?;
            if mnemonic == "bne" {
                Instr::Classical(ClassicalInstr::Bne { ra, rb, target })
            } else {
                Instr::Classical(ClassicalInstr::Beq { ra, rb, target })
            }
        }
        "jump" => {
            expect_arity(line, mnemonic, &ops, 1)?;
            Instr::Classical(ClassicalInstr::Jump { target: resolve(line, &ops[0])? })
        }
        "QNopReg" => {
            expect_arity(line, mnemonic, &ops, 1)?;
            Instr::Classical(ClassicalInstr::QNopReg { rs: parse_register(line, &ops[0])? })
        }
        "Wait" => {
            expect_arity(line, mnemonic, &ops, 1)?;
            let instr = QumisInstr::Wait { interval: parse_uimm(line, &ops[0])? };
            validate_qumis(line, instr)?
        }
        "Pulse" => {
            if ops.is_empty() || ops.len() % 2 != 0 {
                return err(
                    line,
                    ParseErrorKind::BadOperands(
                        "`Pulse` takes (qubit set, micro-op) pairs".to_string(),
                    ),
                );
            }
            let mut pairs = Vec::with_capacity(ops.len() / 2);
            for chunk in ops.chunks(2) {
                let qs = parse_qubit_set(line, &chunk[0])?;
                if !is_identifier(&chunk[1]) {
                    return err(
                        line,
                        ParseErrorKind::BadOperands(format!("bad micro-op name `{}`", chunk[1])),
                    );
                }
                pairs.push((qs, chunk[1].clone()));
            }
            validate_qumis(line, QumisInstr::Pulse { pairs })?
        }
        "MPG" => {
            expect_arity(line, mnemonic, &ops, 2)?;
            let instr = QumisInstr::Mpg {
                qubits: parse_qubit_set(line, &ops[0])?,
                duration: parse_uimm(line, &ops[1])?,
            };
            validate_qumis(line, instr)?
        }
        "MD" => {
            if ops.is_empty() || ops.len() > 2 {
                return err(
                    line,
                    ParseErrorKind::BadOperands("`MD` takes a qubit set and optional register".into()),
                );
            }
            let qubits = parse_qubit_set(line, &ops[0])?;
            let dest = if ops.len() == 2 { Some(parse_register(line, &ops[1])?) } else { None };
            validate_qumis(line, QumisInstr::Md { qubits, dest })?
        }
        m if quantum.contains(m) => {
            let operands = ops
                .iter()
                .map(|o| parse_qis_operand(line, o))
                .collect::<Result<Vec<_>, _>>()?;
            Instr::Quantum(QuantumInstr { mnemonic: m.to_string(), operands })
        }
        other => return err(line, ParseErrorKind::UnknownMnemonic(other.to_string())),
    };
    Ok(instr)
}

fn validate_qumis(line: usize, instr: QumisInstr) -> Result<Instr, ParseError> {
    instr
        .validate()
        .map_err(|e| ParseError { line, kind: ParseErrorKind::Invalid(e.to_string()) })?;
    Ok(Instr::Qumis(instr))
}

fn parse_qis_operand(line: usize, s: &str) -> Result<QisOperand, ParseError> {
    if s.starts_with('q') && s[1..].chars().all(|c| c.is_ascii_digit()) && s.len() > 1 {
        return Ok(QisOperand::Qubit(parse_qubit(line, s)?));
    }
    if s.starts_with('r') && s[1..].chars().all(|c| c.is_ascii_digit()) && s.len() > 1 {
        if let Ok(r) = parse_register(line, s) {
            return Ok(QisOperand::Reg(r));
        }
    }
    if is_identifier(s) {
        Ok(QisOperand::Name(s.to_string()))
    } else {
        err(line, ParseErrorKind::BadOperands(format!("bad operand `{s}`")))
    }
}

#[cfg(test)]
mod tests {
    use super::super::disassemble;
    use super::*;

    #[test]
    fn parses_wait() {
        let p = parse_program("Wait 40000").unwrap();
        assert_eq!(p.instructions, vec![Instr::Qumis(QumisInstr::Wait { interval: 40000 })]);
    }

    #[test]
    fn parses_pulse() {
        let p = parse_program("Pulse {q2}, X180").unwrap();
        assert_eq!(
            p.instructions,
            vec![Instr::Qumis(QumisInstr::Pulse {
                pairs: vec![(QubitSet::single(2), "X180".to_string())],
            })]
        );
    }

    #[test]
    fn empty_source_is_an_error() {
        let e = parse_program("").unwrap_err();
        assert_eq!(e.kind, ParseErrorKind::EmptyProgram);
        let e = parse_program("# only a comment\n\n").unwrap_err();
        assert_eq!(e.kind, ParseErrorKind::EmptyProgram);
    }

    #[test]
    fn undefined_label_is_an_error() {
        let e = parse_program("bne r1, r2, Outer_Loop").unwrap_err();
        assert_eq!(e.kind, ParseErrorKind::UndefinedLabel("Outer_Loop".to_string()));
    }

    #[test]
    fn unknown_mnemonic_reports_line() {
        let e = parse_program("mov r1, 0\nPlse {q2}, X180").unwrap_err();
        assert_eq!(e.line, 2);
        assert_eq!(e.kind, ParseErrorKind::UnknownMnemonic("Plse".to_string()));
    }

    #[test]
    fn labels_prefix_or_standalone() {
        let p = parse_program("Start: mov r1, 0\nLoop:\naddi r1, r1, 1\nbne r1, r1, Loop").unwrap();
        assert_eq!(p.labels["Start"], 0);
        assert_eq!(p.labels["Loop"], 1);
    }

    #[test]
    fn add_with_immediate_third_operand_is_addi() {
        let p = parse_program("add r1, r1, 1").unwrap();
        assert_eq!(
            p.instructions[0],
            Instr::Classical(ClassicalInstr::Addi {
                rd: Register::new(1).unwrap(),
                ra: Register::new(1).unwrap(),
                imm: 1,
            })
        );
    }

    #[test]
    fn measure_and_apply_parse_as_quantum() {
        let p = parse_program("Apply I, q0\nMeasure q0, r7").unwrap();
        match &p.instructions[1] {
            Instr::Quantum(q) => {
                assert_eq!(q.mnemonic, "Measure");
                assert_eq!(
                    q.operands,
                    vec![QisOperand::Qubit(0), QisOperand::Reg(Register::new(7).unwrap())]
                );
            }
            other => panic!("expected quantum instr, got {other:?}"),
        }
    }

    #[test]
    fn canonical_two_pair_pulse() {
        let p = parse_program("Pulse {q0}, Ym90, {q1}, CZ").unwrap();
        assert_eq!(disassemble(&p), "Pulse {q0}, Ym90, {q1}, CZ\n");
        assert_eq!(parse_program(&disassemble(&p)).unwrap(), p);
    }

    #[test]
    fn single_wait_disassembles_canonically() {
        let p = parse_program("Wait 40000").unwrap();
        assert_eq!(disassemble(&p), "Wait 40000\n");
    }

    #[test]
    fn zero_wait_rejected() {
        assert!(parse_program("Wait 0").is_err());
    }

    #[test]
    fn malformed_qubit_set() {
        assert!(parse_program("Pulse q2, X180").is_err());
        assert!(parse_program("MPG {x2}, 300").is_err());
    }
}
