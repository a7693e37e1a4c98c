//! Symbolic assembly: the program between the compiler and the assembler.
//!
//! Text format: one instruction per line, labels end in `:`, comments start
//! with `;`. A trailing `; line N` comment records the source line. Code comes
//! first; `.data` switches to data directives (`name: .space n` or
//! `name: .word a, b, ...`). `.entry <label|addr>` sets the entry point.

use crate::isa::AluOp;
use std::fmt::{self, Write};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Target {
    Label(String),
    Addr(u16),
}

impl fmt::Display for Target {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Target::Label(l) => f.write_str(l),
            Target::Addr(a) => write!(f, "{a}"),
        }
    }
}

/// LOADI operand: a literal, a label address, or its high/low byte.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Imm {
    Value(i16),
    Addr(String),
    Hi(String),
    Lo(String),
}

impl fmt::Display for Imm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Imm::Value(v) => write!(f, "{v}"),
            Imm::Addr(l) => f.write_str(l),
            Imm::Hi(l) => write!(f, "hi({l})"),
            Imm::Lo(l) => write!(f, "lo({l})"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum AsmInstr {
    Halt,
    LoadI { rd: u8, imm: Imm },
    Load { rd: u8, rs: u8, off: i8 },
    Store { rd: u8, rs: u8, off: i8 },
    Alu { op: AluOp, rd: u8, rs: u8, rt: u8 },
    Not { rd: u8, rs: u8 },
    Jmp(Target),
    Jz(u8, Target),
    Jn(u8, Target),
    In { rd: u8, port: u8 },
    Out { rd: u8, port: u8 },
    /// Raw word, for data embedded in code or undecodable words.
    Word(u16),
}

impl AsmInstr {
    pub fn is_conditional_branch(&self) -> bool {
        matches!(self, AsmInstr::Jz(..) | AsmInstr::Jn(..))
    }
}

fn mem(rs: u8, off: i8) -> String {
    if off < 0 {
        format!("[r{rs}{off}]")
    } else {
        format!("[r{rs}+{off}]")
    }
}

impl fmt::Display for AsmInstr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AsmInstr::Halt => write!(f, "HALT"),
            AsmInstr::LoadI { rd, imm } => write!(f, "LOADI r{rd}, {imm}"),
            AsmInstr::Load { rd, rs, off } => write!(f, "LOAD r{rd}, {}", mem(*rs, *off)),
            AsmInstr::Store { rd, rs, off } => write!(f, "STORE r{rd}, {}", mem(*rs, *off)),
            AsmInstr::Alu { op, rd, rs, rt } => {
                write!(f, "{} r{rd}, r{rs}, r{rt}", op.mnemonic())
            }
            AsmInstr::Not { rd, rs } => write!(f, "NOT r{rd}, r{rs}"),
            AsmInstr::Jmp(t) => write!(f, "JMP {t}"),
            AsmInstr::Jz(rd, t) => write!(f, "JZ r{rd}, {t}"),
            AsmInstr::Jn(rd, t) => write!(f, "JN r{rd}, {t}"),
            AsmInstr::In { rd, port } => write!(f, "IN r{rd}, {port}"),
            AsmInstr::Out { rd, port } => write!(f, "OUT r{rd}, {port}"),
            AsmInstr::Word(w) => write!(f, ".word 0x{w:04X}"),
        }
    }
}

/// One line of code: optional label, optional instruction.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AsmLine {
    pub label: Option<String>,
    pub instr: Option<AsmInstr>,
    pub source_line: Option<u32>,
}

impl AsmLine {
    pub fn instr(instr: AsmInstr, source_line: Option<u32>) -> Self {
        Self {
            label: None,
            instr: Some(instr),
            source_line,
        }
    }

    pub fn label(name: impl Into<String>) -> Self {
        Self {
            label: Some(name.into()),
            instr: None,
            source_line: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DataDirective {
    pub label: String,
    pub init: Vec<u16>,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct AssemblyProgram {
    pub lines: Vec<AsmLine>,
    pub data: Vec<DataDirective>,
    pub entry: Option<Target>,
}

impl AssemblyProgram {
    pub fn instructions(&self) -> impl Iterator<Item = &AsmInstr> {
        self.lines.iter().filter_map(|l| l.instr.as_ref())
    }

    pub fn code_words(&self) -> usize {
        self.instructions().count()
    }

    pub fn data_words(&self) -> usize {
        self.data.iter().map(|d| d.init.len()).sum()
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        if let Some(e) = &self.entry {
            let _ = writeln!(out, ".entry {e}");
        }
        for l in &self.lines {
            if let Some(label) = &l.label {
                let _ = writeln!(out, "{label}:");
            }
            if let Some(i) = &l.instr {
                let text = format!("    {i}");
                match l.source_line {
                    Some(src) => {
                        let _ = writeln!(out, "{text:<28}; line {src}");
                    }
                    None => {
                        let _ = writeln!(out, "{text}");
                    }
                }
            }
        }
        if !self.data.is_empty() {
            out.push_str(".data\n");
            for d in &self.data {
                if d.init.iter().all(|w| *w == 0) {
                    let _ = writeln!(out, "{}: .space {}", d.label, d.init.len());
                } else {
                    let words: Vec<String> = d.init.iter().map(|w| w.to_string()).collect();
                    let _ = writeln!(out, "{}: .word {}", d.label, words.join(", "));
                }
            }
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self, AsmParseError> {
        parse_text(text)
    }
}

impl fmt::Display for AssemblyProgram {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_text())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("assembly line {line}: {message}")]
pub struct AsmParseError {
    pub line: usize,
    pub message: String,
}

fn is_label(s: &str) -> bool {
    let mut chars = s.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_alphabetic() || c == '_' || c == '.')
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '.')
}

fn parse_int(s: &str) -> Option<i64> {
    let s = s.trim();
    let (neg, body) = match s.strip_prefix('-') {
        Some(b) => (true, b),
        None => (false, s),
    };
    let v = if let Some(h) = body.strip_prefix("0x").or_else(|| body.strip_prefix("0X")) {
        i64::from_str_radix(h, 16).ok()?
    } else {
        body.parse::<i64>().ok()?
    };
    Some(if neg { -v } else { v })
}

fn parse_reg(s: &str) -> Result<u8, String> {
    let s = s.trim();
    s.strip_prefix('r')
        .and_then(|n| n.parse::<u8>().ok())
        .filter(|n| *n < 8)
        .ok_or_else(|| format!("expected register r0..r7, found `{s}`"))
}

fn parse_target(s: &str) -> Result<Target, String> {
    let s = s.trim();
    if let Some(v) = parse_int(s) {
        return u16::try_from(v)
            .map(Target::Addr)
            .map_err(|_| format!("address out of range: {s}"));
    }
    if is_label(s) {
        Ok(Target::Label(s.to_string()))
    } else {
        Err(format!("expected label or address, found `{s}`"))
    }
}

fn parse_imm(s: &str) -> Result<Imm, String> {
    let s = s.trim();
    if let Some(v) = parse_int(s) {
        return i16::try_from(v)
            .map(Imm::Value)
            .map_err(|_| format!("immediate out of range: {s}"));
    }
    for (prefix, ctor) in [("hi(", Imm::Hi as fn(String) -> Imm), ("lo(", Imm::Lo)] {
        if let Some(inner) = s.strip_prefix(prefix).and_then(|r| r.strip_suffix(')')) {
            if is_label(inner) {
                return Ok(ctor(inner.to_string()));
            }
        }
    }
    if is_label(s) {
        Ok(Imm::Addr(s.to_string()))
    } else {
        Err(format!("expected immediate, found `{s}`"))
    }
}

fn parse_mem(s: &str) -> Result<(u8, i8), String> {
    let inner = s
        .trim()
        .strip_prefix('[')
        .and_then(|r| r.strip_suffix(']'))
        .ok_or_else(|| format!("expected [rs+off], found `{s}`"))?;
    let split = inner.find(['+', '-']);
    let (reg, off) = match split {
        Some(p) => (&inner[..p], parse_int(&inner[p..].replace('+', ""))),
        None => (inner, Some(0)),
    };
    let rs = parse_reg(reg)?;
    let off = off
        .filter(|o| (-32..=31).contains(o))
        .ok_or_else(|| format!("offset must be in -32..=31 in `{s}`"))?;
    Ok((rs, off as i8))
}

fn parse_port(s: &str) -> Result<u8, String> {
    parse_int(s)
        .filter(|p| (0..8).contains(p))
        .map(|p| p as u8)
        .ok_or_else(|| format!("port must be 0..=7, found `{}`", s.trim()))
}

fn parse_instr(mnemonic: &str, args: &[&str]) -> Result<AsmInstr, String> {
    let want = |n: usize| {
        if args.len() == n {
            Ok(())
        } else {
            Err(format!("{mnemonic} takes {n} operand(s), found {}", args.len()))
        }
    };
    let alu = |op| -> Result<AsmInstr, String> {
        want(3)?;
        Ok(AsmInstr::Alu {
            op,
            rd: parse_reg(args[0])?,
            rs: parse_reg(args[1])?,
            rt: parse_reg(args[2])?,
        })
    };
    Ok(match mnemonic.to_ascii_uppercase().as_str() {
        "HALT" => {
            want(0)?;
            AsmInstr::Halt
        }
        "LOADI" => {
            want(2)?;
            AsmInstr::LoadI {
                rd: parse_reg(args[0])?,
                imm: parse_imm(args[1])?,
            }
        }
        "LOAD" | "STORE" => {
            want(2)?;
            let rd = parse_reg(args[0])?;
            let (rs, off) = parse_mem(args[1])?;
            if mnemonic.eq_ignore_ascii_case("LOAD") {
                AsmInstr::Load { rd, rs, off }
            } else {
                AsmInstr::Store { rd, rs, off }
            }
        }
        "ADD" => alu(AluOp::Add)?,
        "SUB" => alu(AluOp::Sub)?,
        "AND" => alu(AluOp::And)?,
        "OR" => alu(AluOp::Or)?,
        "XOR" => alu(AluOp::Xor)?,
        "NOT" => {
            want(2)?;
            AsmInstr::Not {
                rd: parse_reg(args[0])?,
                rs: parse_reg(args[1])?,
            }
        }
        "JMP" => {
            want(1)?;
            AsmInstr::Jmp(parse_target(args[0])?)
        }
        "JZ" | "JN" => {
            want(2)?;
            let rd = parse_reg(args[0])?;
            let t = parse_target(args[1])?;
            if mnemonic.eq_ignore_ascii_case("JZ") {
                AsmInstr::Jz(rd, t)
            } else {
                AsmInstr::Jn(rd, t)
            }
        }
        "IN" | "OUT" => {
            want(2)?;
            let rd = parse_reg(args[0])?;
            let port = parse_port(args[1])?;
            if mnemonic.eq_ignore_ascii_case("IN") {
                AsmInstr::In { rd, port }
            } else {
                AsmInstr::Out { rd, port }
            }
        }
        ".WORD" => {
            want(1)?;
            let v = parse_int(args[0])
                .filter(|v| (-32768..=65535).contains(v))
                .ok_or_else(|| format!("bad word `{}`", args[0]))?;
            AsmInstr::Word(v as u16)
        }
        other => return Err(format!("unknown mnemonic `{other}`")),
    })
}

fn split_args(rest: &str) -> Vec<&str> {
    let rest = rest.trim();
    if rest.is_empty() {
        Vec::new()
    } else {
        rest.split(',').map(str::trim).collect()
    }
}

fn parse_text(text: &str) -> Result<AssemblyProgram, AsmParseError> {
    let mut prog = AssemblyProgram::default();
    let mut in_data = false;
    for (idx, raw) in text.lines().enumerate() {
        let lineno = idx + 1;
        let err = |message: String| AsmParseError {
            line: lineno,
            message,
        };
        let (code, comment) = match raw.find(';') {
            Some(p) => (&raw[..p], Some(raw[p + 1..].trim())),
            None => (raw, None),
        };
        let source_line = comment
            .and_then(|c| c.strip_prefix("line "))
            .and_then(|n| n.trim().parse::<u32>().ok());
        let mut code = code.trim();
        if code.is_empty() {
            continue;
        }
        if let Some(rest) = code.strip_prefix(".entry") {
            prog.entry = Some(parse_target(rest).map_err(err)?);
            continue;
        }
        if code == ".data" {
            in_data = true;
            continue;
        }
        if code == ".text" {
            in_data = false;
            continue;
        }
        let mut label = None;
        if let Some(colon) = code.find(':') {
            let name = code[..colon].trim();
            if !is_label(name) {
                return Err(err(format!("bad label `{name}`")));
            }
            label = Some(name.to_string());
            code = code[colon + 1..].trim();
        }
        if in_data {
            let label = label.ok_or_else(|| err("data directive needs a label".into()))?;
            let init = if let Some(n) = code.strip_prefix(".space") {
                let n = parse_int(n)
                    .filter(|n| (1..=4096).contains(n))
                    .ok_or_else(|| err(format!("bad .space size `{}`", n.trim())))?;
                vec![0; n as usize]
            } else if let Some(ws) = code.strip_prefix(".word") {
                split_args(ws)
                    .iter()
                    .map(|w| {
                        parse_int(w)
                            .filter(|v| (-32768..=65535).contains(v))
                            .map(|v| v as u16)
                            .ok_or_else(|| err(format!("bad word `{w}`")))
                    })
                    .collect::<Result<Vec<_>, _>>()?
            } else {
                return Err(err(format!("expected .space or .word, found `{code}`")));
            };
            prog.data.push(DataDirective { label, init });
            continue;
        }
        let instr = if code.is_empty() {
            None
        } else {
            let (mnemonic, rest) = code.split_once(char::is_whitespace).unwrap_or((code, ""));
            Some(parse_instr(mnemonic, &split_args(rest)).map_err(err)?)
        };
        prog.lines.push(AsmLine {
            label,
            instr,
            source_line,
        });
    }
    Ok(prog)
}
