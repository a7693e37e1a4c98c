//! Instruction set: 16-bit words, eight registers (r0 reads as zero),
//! 4096-word unified memory.
//!
//! | op | mnemonic | format                       |
//! |----|----------|------------------------------|
//! | 0  | HALT     |                              |
//! | 1  | LOADI    | rd, simm9                    |
//! | 2  | LOAD     | rd, [rs+simm6]               |
//! | 3  | STORE    | rd, [rs+simm6]               |
//! | 4-8| ADD SUB AND OR XOR | rd, rs, rt         |
//! | 9  | NOT      | rd, rs                       |
//! | 10 | JMP      | addr12                       |
//! | 11 | JZ       | rd, addr9                    |
//! | 12 | JN       | rd, addr9                    |
//! | 13 | IN       | rd, port3                    |
//! | 14 | OUT      | rd, port3                    |
//! | 15 | reserved (traps)                        |
//!
//! Bits `[15:12]` hold the opcode, `rd` sits in `[11:9]`, `rs` in `[8:6]`,
//! `rt` in `[5:3]`; immediates occupy the low bits.

use std::fmt;

pub const MEM_WORDS: usize = 4096;
pub const ADDR_MASK: u16 = 0x0FFF;
pub const NUM_REGS: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum AluOp {
    Add,
    Sub,
    And,
    Or,
    Xor,
}

impl AluOp {
    pub fn opcode(self) -> u16 {
        match self {
            AluOp::Add => 4,
            AluOp::Sub => 5,
            AluOp::And => 6,
            AluOp::Or => 7,
            AluOp::Xor => 8,
        }
    }

    pub fn apply(self, a: u16, b: u16) -> u16 {
        match self {
            AluOp::Add => a.wrapping_add(b),
            AluOp::Sub => a.wrapping_sub(b),
            AluOp::And => a & b,
            AluOp::Or => a | b,
            AluOp::Xor => a ^ b,
        }
    }

    pub fn mnemonic(self) -> &'static str {
        match self {
            AluOp::Add => "ADD",
            AluOp::Sub => "SUB",
            AluOp::And => "AND",
            AluOp::Or => "OR",
            AluOp::Xor => "XOR",
        }
    }
}

/// A decoded instruction with numeric operands.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Instr {
    Halt,
    LoadI { rd: u8, imm: i16 },
    Load { rd: u8, rs: u8, off: i8 },
    Store { rd: u8, rs: u8, off: i8 },
    Alu { op: AluOp, rd: u8, rs: u8, rt: u8 },
    Not { rd: u8, rs: u8 },
    Jmp { addr: u16 },
    Jz { rd: u8, addr: u16 },
    Jn { rd: u8, addr: u16 },
    In { rd: u8, port: u8 },
    Out { rd: u8, port: u8 },
}

pub fn sext(value: u16, bits: u32) -> i16 {
    let shift = 16 - bits;
    ((value << shift) as i16) >> shift
}

pub fn opcode_of(word: u16) -> u8 {
    (word >> 12) as u8
}

pub fn mnemonic_of_opcode(op: u8) -> &'static str {
    const NAMES: [&str; 16] = [
        "HALT", "LOADI", "LOAD", "STORE", "ADD", "SUB", "AND", "OR", "XOR", "NOT", "JMP", "JZ",
        "JN", "IN", "OUT", "ILLEGAL",
    ];
    NAMES[(op & 0xF) as usize]
}

impl Instr {
    /// Decodes leniently: bits not used by the format are ignored.
    /// Returns `None` only for the reserved opcode.
    pub fn decode(w: u16) -> Option<Instr> {
        let rd = ((w >> 9) & 7) as u8;
        let rs = ((w >> 6) & 7) as u8;
        let rt = ((w >> 3) & 7) as u8;
        let alu = |op| Instr::Alu { op, rd, rs, rt };
        Some(match w >> 12 {
            0 => Instr::Halt,
            1 => Instr::LoadI {
                rd,
                imm: sext(w & 0x1FF, 9),
            },
            2 => Instr::Load {
                rd,
                rs,
                off: sext(w & 0x3F, 6) as i8,
            },
            3 => Instr::Store {
                rd,
                rs,
                off: sext(w & 0x3F, 6) as i8,
            },
            4 => alu(AluOp::Add),
            5 => alu(AluOp::Sub),
            6 => alu(AluOp::And),
            7 => alu(AluOp::Or),
            8 => alu(AluOp::Xor),
            9 => Instr::Not { rd, rs },
            10 => Instr::Jmp { addr: w & 0xFFF },
            11 => Instr::Jz { rd, addr: w & 0x1FF },
            12 => Instr::Jn { rd, addr: w & 0x1FF },
            13 => Instr::In {
                rd,
                port: (w & 7) as u8,
            },
            14 => Instr::Out {
                rd,
                port: (w & 7) as u8,
            },
            _ => return None,
        })
    }

    /// Decodes only words that re-encode to themselves.
    pub fn decode_canonical(w: u16) -> Option<Instr> {
        Instr::decode(w).filter(|i| i.encode() == w)
    }

    pub fn encode(&self) -> u16 {
        let r = |rd: u8| ((rd as u16) & 7) << 9;
        let s = |rs: u8| ((rs as u16) & 7) << 6;
        match *self {
            Instr::Halt => 0,
            Instr::LoadI { rd, imm } => 0x1000 | r(rd) | (imm as u16 & 0x1FF),
            Instr::Load { rd, rs, off } => 0x2000 | r(rd) | s(rs) | (off as u16 & 0x3F),
            Instr::Store { rd, rs, off } => 0x3000 | r(rd) | s(rs) | (off as u16 & 0x3F),
            Instr::Alu { op, rd, rs, rt } => {
                (op.opcode() << 12) | r(rd) | s(rs) | (((rt as u16) & 7) << 3)
            }
            Instr::Not { rd, rs } => 0x9000 | r(rd) | s(rs),
            Instr::Jmp { addr } => 0xA000 | (addr & 0xFFF),
            Instr::Jz { rd, addr } => 0xB000 | r(rd) | (addr & 0x1FF),
            Instr::Jn { rd, addr } => 0xC000 | r(rd) | (addr & 0x1FF),
            Instr::In { rd, port } => 0xD000 | r(rd) | (port as u16 & 7),
            Instr::Out { rd, port } => 0xE000 | r(rd) | (port as u16 & 7),
        }
    }

    pub fn mnemonic(&self) -> &'static str {
        mnemonic_of_opcode(opcode_of(self.encode()))
    }
}

fn fmt_mem(f: &mut fmt::Formatter<'_>, rs: u8, off: i8) -> fmt::Result {
    if off < 0 {
        write!(f, "[r{rs}{off}]")
    } else {
        write!(f, "[r{rs}+{off}]")
    }
}

impl fmt::Display for Instr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            Instr::Halt => write!(f, "HALT"),
            Instr::LoadI { rd, imm } => write!(f, "LOADI r{rd}, {imm}"),
            Instr::Load { rd, rs, off } => {
                write!(f, "LOAD r{rd}, ")?;
                fmt_mem(f, rs, off)
            }
            Instr::Store { rd, rs, off } => {
                write!(f, "STORE r{rd}, ")?;
                fmt_mem(f, rs, off)
            }
            Instr::Alu { op, rd, rs, rt } => write!(f, "{} r{rd}, r{rs}, r{rt}", op.mnemonic()),
            Instr::Not { rd, rs } => write!(f, "NOT r{rd}, r{rs}"),
            Instr::Jmp { addr } => write!(f, "JMP {addr}"),
            Instr::Jz { rd, addr } => write!(f, "JZ r{rd}, {addr}"),
            Instr::Jn { rd, addr } => write!(f, "JN r{rd}, {addr}"),
            Instr::In { rd, port } => write!(f, "IN r{rd}, {port}"),
            Instr::Out { rd, port } => write!(f, "OUT r{rd}, {port}"),
        }
    }
}
