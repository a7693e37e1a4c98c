//! Reference interpreter at the instruction-set level.

use crate::compiler::MachineImage;
use crate::isa::{Instr, ADDR_MASK, MEM_WORDS, NUM_REGS};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::{BTreeMap, VecDeque};
use std::fmt;
use std::io::{self, Write};
use thiserror::Error;

/// Architectural state: what a program can observe.
#[derive(Clone, PartialEq, Eq)]
pub struct MachineState {
    pub pc: u16,
    pub regs: [u16; NUM_REGS],
    pub mem: Vec<u16>,
    pub halted: bool,
    /// Instructions retired.
    pub cycle: u64,
}

impl fmt::Debug for MachineState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("MachineState")
            .field("pc", &self.pc)
            .field("regs", &self.regs)
            .field("halted", &self.halted)
            .field("cycle", &self.cycle)
            .field("mem_digest", &hex::encode(&Sha256::digest(self.mem_bytes())[..8]))
            .finish()
    }
}

impl MachineState {
    pub fn boot(img: &MachineImage) -> Self {
        Self {
            pc: img.entry_point & ADDR_MASK,
            regs: [0; NUM_REGS],
            mem: img.words.clone(),
            halted: false,
            cycle: 0,
        }
    }

    /// SHA-256 over pc, registers, memory, halt flag and cycle count.
    pub fn digest(&self) -> String {
        let mut h = Sha256::new();
        h.update(self.pc.to_be_bytes());
        for r in self.regs {
            h.update(r.to_be_bytes());
        }
        h.update(self.mem_bytes());
        h.update([self.halted as u8]);
        h.update(self.cycle.to_be_bytes());
        hex::encode(h.finalize())
    }

    fn mem_bytes(&self) -> Vec<u8> {
        self.mem.iter().flat_map(|w| w.to_be_bytes()).collect()
    }

    fn set_reg(&mut self, r: u8, v: u16) {
        if r != 0 {
            self.regs[r as usize] = v;
        }
    }

    /// Contents of `len` words starting at `addr`.
    pub fn read_block(&self, addr: u16, len: usize) -> &[u16] {
        let a = addr as usize;
        &self.mem[a..(a + len).min(MEM_WORDS)]
    }
}

/// One word of a scripted input stream, as stored in input files.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct InputRecord {
    pub port: u8,
    pub word: u16,
}

/// A word handed to the machine, with the cycle it was consumed at.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Delivery {
    pub cycle: u64,
    pub port: u8,
    pub word: u16,
}

/// A non-scripted producer of words for one port.
pub trait WordSource: Send {
    fn next_word(&mut self) -> Option<u16>;
}

/// Supplies words to `IN`; scripted per-port queues, optionally with live
/// sources on some ports. Every delivered word is logged.
#[derive(Default)]
pub struct InputProvider {
    queues: BTreeMap<u8, VecDeque<u16>>,
    live: BTreeMap<u8, Box<dyn WordSource>>,
    log: Vec<Delivery>,
}

impl fmt::Debug for InputProvider {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("InputProvider")
            .field("queues", &self.queues)
            .field("live_ports", &self.live.keys().collect::<Vec<_>>())
            .field("delivered", &self.log.len())
            .finish()
    }
}

#[derive(Debug, Error)]
pub enum InputError {
    #[error("malformed input stream: {0}")]
    Json(#[from] serde_json::Error),
    #[error("port {0} out of range 0..=7")]
    BadPort(u8),
}

impl InputProvider {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn scripted(records: &[InputRecord]) -> Self {
        let mut p = Self::new();
        for r in records {
            p.queues.entry(r.port).or_default().push_back(r.word);
        }
        p
    }

    /// Words for port 0, in order.
    pub fn words(words: &[u16]) -> Self {
        let recs: Vec<_> = words.iter().map(|&word| InputRecord { port: 0, word }).collect();
        Self::scripted(&recs)
    }

    /// Parses the JSON array form `[{"port":p,"word":w}, ...]`.
    pub fn parse_records(json: &str) -> Result<Vec<InputRecord>, InputError> {
        let recs: Vec<InputRecord> = serde_json::from_str(json)?;
        if let Some(bad) = recs.iter().find(|r| r.port > 7) {
            return Err(InputError::BadPort(bad.port));
        }
        Ok(recs)
    }

    /// A provider that reproduces exactly the reads recorded in `log`.
    pub fn replay(log: &[Delivery]) -> Self {
        let recs: Vec<_> = log
            .iter()
            .map(|d| InputRecord {
                port: d.port,
                word: d.word,
            })
            .collect();
        Self::scripted(&recs)
    }

    pub fn push(&mut self, port: u8, word: u16) {
        self.queues.entry(port).or_default().push_back(word);
    }

    pub fn with_source(mut self, port: u8, src: Box<dyn WordSource>) -> Self {
        self.live.insert(port, src);
        self
    }

    /// Next word for `port`, or `None` when exhausted. Live sources take
    /// precedence over scripted words on the same port.
    pub fn read(&mut self, port: u8, cycle: u64) -> Option<u16> {
        let word = match self.live.get_mut(&port) {
            Some(src) => src.next_word(),
            None => self.queues.get_mut(&port).and_then(|q| q.pop_front()),
        }?;
        self.log.push(Delivery { cycle, port, word });
        Some(word)
    }

    pub fn deliveries(&self) -> &[Delivery] {
        &self.log
    }

    pub fn has_live_sources(&self) -> bool {
        !self.live.is_empty()
    }

    /// Digest of the not-yet-consumed scripted words; identifies the input
    /// specification of a run when taken before it starts.
    pub fn script_digest(&self) -> String {
        let mut h = Sha256::new();
        for (port, q) in &self.queues {
            for w in q {
                h.update([*port]);
                h.update(w.to_be_bytes());
            }
        }
        for port in self.live.keys() {
            h.update(b"live");
            h.update([*port]);
        }
        hex::encode(h.finalize())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HaltReason {
    Halted,
    HaltedOnInput,
    IllegalInstruction,
    /// The cycle cap ran out first; says nothing about whether the program
    /// would halt.
    CycleLimitExceeded,
}

impl HaltReason {
    pub fn is_trap(self) -> bool {
        matches!(self, HaltReason::HaltedOnInput | HaltReason::IllegalInstruction)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "ev", rename_all = "snake_case")]
pub enum ArchEvent {
    RegWrite { r: u8, v: u16 },
    MemWrite { a: u16, v: u16 },
    Output { port: u8, word: u16 },
    Input { port: u8, word: u16 },
    BranchTaken { target: u16 },
    BranchNotTaken,
    Halt,
    Trap { reason: HaltReason },
}

/// An event stamped with the retiring instruction's cycle and address.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct EventRecord {
    pub c: u64,
    pub pc: u16,
    #[serde(flatten)]
    pub ev: ArchEvent,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum VmError {
    #[error("machine already halted")]
    AlreadyHalted,
    #[error("max_cycles must be positive")]
    ZeroCycleLimit,
}

/// Executes one instruction in place and returns the events it caused plus
/// the halt reason if it stopped the machine.
pub fn step(
    s: &mut MachineState,
    input: &mut InputProvider,
) -> Result<(Vec<ArchEvent>, Option<HaltReason>), VmError> {
    if s.halted {
        return Err(VmError::AlreadyHalted);
    }
    let word = s.mem[(s.pc & ADDR_MASK) as usize];
    let next = (s.pc + 1) & ADDR_MASK;
    let mut ev = Vec::new();
    let trap = |s: &mut MachineState, ev: &mut Vec<ArchEvent>, reason| {
        s.halted = true;
        ev.push(ArchEvent::Trap { reason });
        Ok((std::mem::take(ev), Some(reason)))
    };
    let Some(instr) = Instr::decode(word) else {
        return trap(s, &mut ev, HaltReason::IllegalInstruction);
    };
    let write_reg = |s: &mut MachineState, ev: &mut Vec<ArchEvent>, r: u8, v: u16| {
        s.set_reg(r, v);
        if r != 0 {
            ev.push(ArchEvent::RegWrite { r, v });
        }
    };
    let ea = |s: &MachineState, rs: u8, off: i8| s.regs[rs as usize].wrapping_add(off as i16 as u16) & ADDR_MASK;
    let mut pc = next;
    match instr {
        Instr::Halt => {
            s.halted = true;
            s.cycle += 1;
            ev.push(ArchEvent::Halt);
            return Ok((ev, Some(HaltReason::Halted)));
        }
        Instr::LoadI { rd, imm } => write_reg(s, &mut ev, rd, imm as u16),
        Instr::Load { rd, rs, off } => {
            let v = s.mem[ea(s, rs, off) as usize];
            write_reg(s, &mut ev, rd, v);
        }
        Instr::Store { rd, rs, off } => {
            let a = ea(s, rs, off);
            let v = s.regs[rd as usize];
            s.mem[a as usize] = v;
            ev.push(ArchEvent::MemWrite { a, v });
        }
        Instr::Alu { op, rd, rs, rt } => {
            let v = op.apply(s.regs[rs as usize], s.regs[rt as usize]);
            write_reg(s, &mut ev, rd, v);
        }
        Instr::Not { rd, rs } => {
            let v = !s.regs[rs as usize];
            write_reg(s, &mut ev, rd, v);
        }
        Instr::Jmp { addr } => pc = addr,
        Instr::Jz { rd, addr } | Instr::Jn { rd, addr } => {
            let v = s.regs[rd as usize];
            let taken = match instr {
                Instr::Jz { .. } => v == 0,
                _ => v & 0x8000 != 0,
            };
            if taken {
                pc = addr;
                ev.push(ArchEvent::BranchTaken { target: addr });
            } else {
                ev.push(ArchEvent::BranchNotTaken);
            }
        }
        Instr::In { rd, port } => match input.read(port, s.cycle) {
            Some(word) => {
                ev.push(ArchEvent::Input { port, word });
                write_reg(s, &mut ev, rd, word);
            }
            None => return trap(s, &mut ev, HaltReason::HaltedOnInput),
        },
        Instr::Out { rd, port } => ev.push(ArchEvent::Output {
            port,
            word: s.regs[rd as usize],
        }),
    }
    s.pc = pc;
    s.cycle += 1;
    Ok((ev, None))
}

#[derive(Debug, Clone)]
pub struct RunResult {
    pub state: MachineState,
    pub events: Vec<EventRecord>,
    pub halt: HaltReason,
}

impl RunResult {
    pub fn outputs(&self) -> Vec<(u8, u16)> {
        self.events
            .iter()
            .filter_map(|e| match e.ev {
                ArchEvent::Output { port, word } => Some((port, word)),
                _ => None,
            })
            .collect()
    }

    /// Words written to port 0.
    pub fn output_words(&self) -> Vec<u16> {
        self.outputs()
            .into_iter()
            .filter(|(p, _)| *p == 0)
            .map(|(_, w)| w)
            .collect()
    }
}

/// Runs until halt or `max_cycles` instructions, calling `observe` with the
/// state after every retired instruction.
pub fn run_observed(
    img: &MachineImage,
    input: &mut InputProvider,
    max_cycles: u64,
    mut observe: impl FnMut(&MachineState),
) -> Result<RunResult, VmError> {
    if max_cycles == 0 {
        return Err(VmError::ZeroCycleLimit);
    }
    let mut s = MachineState::boot(img);
    let mut events = Vec::new();
    let mut steps = 0;
    let halt = loop {
        if steps == max_cycles {
            break HaltReason::CycleLimitExceeded;
        }
        let (c, pc) = (s.cycle, s.pc);
        let (evs, stop) = step(&mut s, input)?;
        steps += 1;
        events.extend(evs.into_iter().map(|ev| EventRecord { c, pc, ev }));
        observe(&s);
        if let Some(reason) = stop {
            break reason;
        }
    };
    Ok(RunResult {
        state: s,
        events,
        halt,
    })
}

pub fn run(
    img: &MachineImage,
    input: &mut InputProvider,
    max_cycles: u64,
) -> Result<RunResult, VmError> {
    run_observed(img, input, max_cycles, |_| {})
}

/// Writes events as JSON Lines with a fixed key order.
pub fn write_event_log(events: &[EventRecord], mut w: impl Write) -> io::Result<()> {
    for e in events {
        serde_json::to_writer(&mut w, e)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}
