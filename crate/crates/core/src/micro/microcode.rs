//! The control store. Every opcode runs the shared three-step fetch prefix
//! followed by its own execute steps.

use crate::isa::mnemonic_of_opcode;
use std::fmt::Write as _;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum BusSource {
    #[default]
    None,
    Pc,
    Mdr,
    Alu,
    Reg,
    Imm,
}

/// Registers loaded from the bus at the end of the step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct Dests {
    pub pc: bool,
    pub mar: bool,
    pub mdr: bool,
    pub ir: bool,
    pub reg: bool,
    pub a: bool,
    pub b: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum MicroAlu {
    #[default]
    Add,
    Sub,
    And,
    Or,
    Xor,
    Not,
    PassB,
    Inc,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum MemOp {
    #[default]
    None,
    /// MDR takes the word at MAR.
    Read,
    /// The word at MAR takes MDR.
    Write,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum RegSel {
    #[default]
    Rd,
    Rs,
    Rt,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum BranchTest {
    #[default]
    None,
    Z,
    N,
    Always,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum IoOp {
    #[default]
    None,
    /// MDR takes the next word from the port in IR[2:0].
    In,
    /// MDR goes out on the port in IR[2:0].
    Out,
}

/// Immediate field extracted from IR onto the bus.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum ImmSel {
    /// IR[8:0], sign-extended.
    #[default]
    S9,
    /// IR[5:0], sign-extended.
    S6,
    /// IR[8:0], zero-extended.
    U9,
    /// IR[11:0], zero-extended.
    U12,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum HaltOp {
    #[default]
    None,
    Halt,
    Trap,
}

/// One horizontal control word.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct MicroOp {
    pub bus: BusSource,
    pub dest: Dests,
    pub alu: MicroAlu,
    pub mem: MemOp,
    pub reg_sel: RegSel,
    pub imm: ImmSel,
    pub branch: BranchTest,
    pub io: IoOp,
    pub halt: HaltOp,
    pub end: bool,
}

impl MicroOp {
    /// MDR loads from the external data pins rather than the bus.
    pub fn mdr_external(&self) -> bool {
        self.mem == MemOp::Read || self.io == IoOp::In
    }

    pub fn dest_names(&self) -> String {
        let d = self.dest;
        let names: Vec<&str> = [
            (d.pc, "PC"),
            (d.mar, "MAR"),
            (d.mdr, "MDR"),
            (d.ir, "IR"),
            (d.reg, "REG"),
            (d.a, "A"),
            (d.b, "B"),
        ]
        .into_iter()
        .filter(|(on, _)| *on)
        .map(|(_, n)| n)
        .collect();
        if names.is_empty() {
            "-".into()
        } else {
            names.join("+")
        }
    }
}

pub const FETCH_STEPS: usize = 3;
pub const MAX_MICRO_STEPS: usize = 16;

fn dest(f: impl FnOnce(&mut Dests)) -> Dests {
    let mut d = Dests::default();
    f(&mut d);
    d
}

pub fn fetch_prefix() -> [MicroOp; FETCH_STEPS] {
    [
        MicroOp {
            bus: BusSource::Pc,
            dest: dest(|d| {
                d.mar = true;
                d.b = true
            }),
            ..Default::default()
        },
        MicroOp {
            bus: BusSource::Alu,
            alu: MicroAlu::Inc,
            dest: dest(|d| d.pc = true),
            mem: MemOp::Read,
            ..Default::default()
        },
        MicroOp {
            bus: BusSource::Mdr,
            dest: dest(|d| d.ir = true),
            ..Default::default()
        },
    ]
}

fn reg_to(sel: RegSel, f: impl FnOnce(&mut Dests)) -> MicroOp {
    MicroOp {
        bus: BusSource::Reg,
        reg_sel: sel,
        dest: dest(f),
        ..Default::default()
    }
}

fn imm_to(imm: ImmSel, f: impl FnOnce(&mut Dests)) -> MicroOp {
    MicroOp {
        bus: BusSource::Imm,
        imm,
        dest: dest(f),
        ..Default::default()
    }
}

fn end(mut op: MicroOp) -> MicroOp {
    op.end = true;
    op
}

/// Restores PC from B (the address of the instruction) and stops.
pub fn stop_op(halt: HaltOp) -> MicroOp {
    MicroOp {
        bus: BusSource::Alu,
        alu: MicroAlu::PassB,
        dest: dest(|d| d.pc = true),
        branch: if halt == HaltOp::Halt { BranchTest::Always } else { BranchTest::None },
        halt,
        end: true,
        ..Default::default()
    }
}

fn execute_steps(opcode: u8) -> Vec<MicroOp> {
    let ea = [
        reg_to(RegSel::Rs, |d| d.a = true),
        imm_to(ImmSel::S6, |d| d.b = true),
        MicroOp {
            bus: BusSource::Alu,
            alu: MicroAlu::Add,
            dest: dest(|d| d.mar = true),
            ..Default::default()
        },
    ];
    let alu = |op| {
        vec![
            reg_to(RegSel::Rs, |d| d.a = true),
            reg_to(RegSel::Rt, |d| d.b = true),
            end(MicroOp {
                bus: BusSource::Alu,
                alu: op,
                dest: dest(|d| d.reg = true),
                reg_sel: RegSel::Rd,
                ..Default::default()
            }),
        ]
    };
    let cond_jump = |test| {
        vec![
            reg_to(RegSel::Rd, |d| d.b = true),
            end(MicroOp {
                bus: BusSource::Imm,
                imm: ImmSel::U9,
                alu: MicroAlu::PassB,
                dest: dest(|d| d.pc = true),
                branch: test,
                ..Default::default()
            }),
        ]
    };
    match opcode {
        0 => vec![stop_op(HaltOp::Halt)],
        1 => vec![end(imm_to(ImmSel::S9, |d| d.reg = true))],
        2 => {
            let mut v = ea.to_vec();
            v.push(MicroOp {
                mem: MemOp::Read,
                ..Default::default()
            });
            v.push(end(MicroOp {
                bus: BusSource::Mdr,
                dest: dest(|d| d.reg = true),
                reg_sel: RegSel::Rd,
                ..Default::default()
            }));
            v
        }
        3 => {
            let mut v = ea.to_vec();
            v.push(reg_to(RegSel::Rd, |d| d.mdr = true));
            v.push(end(MicroOp {
                mem: MemOp::Write,
                ..Default::default()
            }));
            v
        }
        4 => alu(MicroAlu::Add),
        5 => alu(MicroAlu::Sub),
        6 => alu(MicroAlu::And),
        7 => alu(MicroAlu::Or),
        8 => alu(MicroAlu::Xor),
        9 => vec![
            reg_to(RegSel::Rs, |d| d.a = true),
            end(MicroOp {
                bus: BusSource::Alu,
                alu: MicroAlu::Not,
                dest: dest(|d| d.reg = true),
                reg_sel: RegSel::Rd,
                ..Default::default()
            }),
        ],
        10 => vec![end(MicroOp {
            branch: BranchTest::Always,
            ..imm_to(ImmSel::U12, |d| d.pc = true)
        })],
        11 => cond_jump(BranchTest::Z),
        12 => cond_jump(BranchTest::N),
        13 => vec![
            MicroOp {
                io: IoOp::In,
                ..Default::default()
            },
            end(MicroOp {
                bus: BusSource::Mdr,
                dest: dest(|d| d.reg = true),
                reg_sel: RegSel::Rd,
                ..Default::default()
            }),
        ],
        14 => vec![
            reg_to(RegSel::Rd, |d| d.mdr = true),
            end(MicroOp {
                io: IoOp::Out,
                ..Default::default()
            }),
        ],
        _ => vec![stop_op(HaltOp::Trap)],
    }
}

/// Full micro-sequence for an opcode; the reserved opcode traps.
pub fn microcode_for(opcode: u8) -> Vec<MicroOp> {
    let mut v = fetch_prefix().to_vec();
    v.extend(execute_steps(opcode & 0xF));
    v
}

/// The control store indexed by opcode and micro-pc.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MicrocodeRom {
    table: Vec<Vec<MicroOp>>,
}

impl Default for MicrocodeRom {
    fn default() -> Self {
        Self::new()
    }
}

impl MicrocodeRom {
    pub fn new() -> Self {
        Self {
            table: (0..16).map(microcode_for).collect(),
        }
    }

    pub fn get(&self, opcode: u8, upc: usize) -> Option<&MicroOp> {
        self.table.get(opcode as usize & 0xF)?.get(upc)
    }

    pub fn sequence(&self, opcode: u8) -> &[MicroOp] {
        &self.table[opcode as usize & 0xF]
    }

    /// CSV with one row per (opcode, micro-pc).
    pub fn to_csv(&self) -> String {
        let mut s = String::from("opcode,mnemonic,upc,bus,dest,alu,mem,reg_sel,imm,branch,io,halt,end\n");
        for (op, seq) in self.table.iter().enumerate() {
            for (upc, m) in seq.iter().enumerate() {
                writeln!(
                    s,
                    "{op},{},{upc},{:?},{},{:?},{:?},{:?},{:?},{:?},{:?},{:?},{}",
                    mnemonic_of_opcode(op as u8),
                    m.bus,
                    m.dest_names(),
                    m.alu,
                    m.mem,
                    m.reg_sel,
                    m.imm,
                    m.branch,
                    m.io,
                    m.halt,
                    m.end as u8
                )
                .unwrap();
            }
        }
        s
    }
}
