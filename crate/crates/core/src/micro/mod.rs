//! The microcoded CPU: a gate-level datapath sequenced by a behavioural
//! control store and memory, runnable with gates evaluated directly or
//! expanded to transistors.

mod datapath;
mod microcode;

pub use datapath::{control_inputs, Datapath, Probes, CONTROL_INPUTS, INPUT_COUNT};
pub use microcode::{
    fetch_prefix, microcode_for, stop_op, BranchTest, BusSource, Dests, HaltOp, ImmSel, IoOp, MemOp, MicroAlu,
    MicroOp, MicrocodeRom, RegSel, FETCH_STEPS, MAX_MICRO_STEPS,
};

use crate::compiler::MachineImage;
use crate::gates::{Circuit, LogicValue};
use crate::isa::{ADDR_MASK, NUM_REGS};
use crate::isa_vm::{ArchEvent, EventRecord, HaltReason, InputProvider, MachineState, RunResult, VmError};
use crate::switch::{expand_to_transistors, DeviceParams, FetCond, SwitchError, SwitchSim, TransistorNet};
use serde::{Deserialize, Serialize};
use std::fmt;
use std::io;
use std::str::FromStr;
use std::sync::Arc;
use thiserror::Error;

/// Edges with the reset line asserted before the machine starts.
pub const RESET_EDGES: u64 = 4;
/// Edges that load the entry point into PC after reset.
pub const BOOT_EDGES: u64 = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Fidelity {
    #[default]
    Gate,
    Switch,
}

impl fmt::Display for Fidelity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Fidelity::Gate => "gate",
            Fidelity::Switch => "switch",
        })
    }
}

impl FromStr for Fidelity {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "gate" => Ok(Fidelity::Gate),
            "switch" => Ok(Fidelity::Switch),
            _ => Err(format!("unknown fidelity `{s}` (expected gate or switch)")),
        }
    }
}

#[derive(Debug, Error)]
pub enum MicroError {
    #[error("net `{0}` is X")]
    XContamination(String),
    #[error(transparent)]
    Switch(#[from] SwitchError),
    #[error(transparent)]
    Vm(#[from] VmError),
    #[error("activity sink failed: {0}")]
    Sink(#[from] io::Error),
}

#[derive(Debug, Clone)]
pub struct MicroMachine {
    pub fidelity: Fidelity,
    pub datapath: Datapath,
    pub rom: MicrocodeRom,
    /// Present at switch fidelity.
    pub transistors: Option<Arc<TransistorNet>>,
}

impl MicroMachine {
    pub fn circuit(&self) -> &Circuit {
        &self.datapath.circuit
    }

    pub fn gate_count(&self) -> usize {
        self.datapath.circuit.gates.len()
    }

    pub fn fet_count(&self) -> usize {
        self.transistors.as_ref().map_or(0, |t| t.fets.len())
    }

    pub fn params(&self) -> Option<DeviceParams> {
        self.transistors.as_ref().map(|t| t.params)
    }
}

pub fn build_machine(fidelity: Fidelity) -> MicroMachine {
    build_machine_with(fidelity, DeviceParams::default())
}

pub fn build_machine_with(fidelity: Fidelity, params: DeviceParams) -> MicroMachine {
    let datapath = Datapath::build();
    let transistors = match fidelity {
        Fidelity::Gate => None,
        Fidelity::Switch => Some(Arc::new(expand_to_transistors(&datapath.circuit, params))),
    };
    MicroMachine {
        fidelity,
        datapath,
        rom: MicrocodeRom::new(),
        transistors,
    }
}

/// What a clock cycle was spent on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Activity {
    Reset,
    Boot,
    /// Executing (or fetching) the instruction at `addr`.
    Instr { addr: u16, upc: u8, word: u16 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CycleCtx {
    /// Clock-edge index, from zero at the first reset edge.
    pub edge: u64,
    pub activity: Activity,
}

/// Receives low-level activity. Changes arrive during a cycle and are
/// attributed when `end_cycle` is called for it.
pub trait ActivitySink {
    /// A gate output changed (gate fidelity; index into the circuit's gates).
    fn gate_change(&mut self, gate: usize, v: LogicValue);
    /// A transistor changed conduction (switch fidelity).
    fn fet_change(&mut self, fet: usize, c: FetCond);
    fn end_cycle(&mut self, ctx: &CycleCtx) -> io::Result<()>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MicroLimits {
    pub max_instructions: u64,
    pub max_edges: u64,
}

impl MicroLimits {
    /// An edge budget that never binds before the instruction budget does.
    pub fn instructions(n: u64) -> Self {
        Self {
            max_instructions: n,
            max_edges: RESET_EDGES + BOOT_EDGES + n.saturating_mul(MAX_MICRO_STEPS as u64),
        }
    }
}

#[derive(Debug, Clone)]
pub struct MicroRun {
    pub result: RunResult,
    pub edges: u64,
    /// Edge at which each started instruction began its fetch.
    pub instr_edges: Vec<u64>,
}

enum Engine {
    Gate {
        vals: Vec<LogicValue>,
        state: Vec<LogicValue>,
    },
    Switch {
        sim: Box<SwitchSim>,
        inputs: Vec<usize>,
        phi: [usize; 2],
    },
}

struct Runner<'m, 's> {
    m: &'m MicroMachine,
    eng: Engine,
    sink: Option<&'s mut dyn ActivitySink>,
    edges: u64,
}

const SWITCH_OFFSET: usize = 2;

impl<'m, 's> Runner<'m, 's> {
    fn new(m: &'m MicroMachine, sink: Option<&'s mut dyn ActivitySink>) -> Self {
        let c = m.circuit();
        let eng = match &m.transistors {
            None => Engine::Gate {
                vals: vec![LogicValue::X; c.net_count()],
                state: c.power_on_state(),
            },
            Some(t) => {
                let phi = [t.net("phi1").expect("clock"), t.net("phi2").expect("clock")];
                let mut sim = SwitchSim::new(t.clone());
                sim.set_input(phi[0], LogicValue::Zero);
                sim.set_input(phi[1], LogicValue::Zero);
                Engine::Switch {
                    sim: Box::new(sim),
                    inputs: t.inputs[..c.inputs.len()].to_vec(),
                    phi,
                }
            }
        };
        Self { m, eng, sink, edges: 0 }
    }

    fn get(&self, net: usize) -> LogicValue {
        match &self.eng {
            Engine::Gate { vals, .. } => vals[net],
            Engine::Switch { sim, .. } => sim.value(net + SWITCH_OFFSET).to_logic(),
        }
    }

    fn word(&self, nets: &[usize]) -> Result<u16, MicroError> {
        let mut w = 0u16;
        for (i, &n) in nets.iter().enumerate() {
            match self.get(n).to_bool() {
                Some(b) => w |= (b as u16) << i,
                None => return Err(MicroError::XContamination(self.m.circuit().net_names[n].clone())),
            }
        }
        Ok(w)
    }

    fn bit(&self, net: usize) -> Result<bool, MicroError> {
        Ok(self.word(&[net])? == 1)
    }

    fn settle(&mut self, op: &MicroOp, reset: bool, ext: u16) -> Result<(), MicroError> {
        let ins = control_inputs(op, reset, ext);
        let c = self.m.circuit();
        match &mut self.eng {
            Engine::Gate { vals, state } => match self.sink.as_deref_mut() {
                None => c.settle_into(vals, &ins, state),
                Some(sink) => {
                    let before = vals.clone();
                    c.settle_into(vals, &ins, state);
                    for &g in &c.order {
                        let out = c.gate_output[g];
                        if vals[out] != before[out] {
                            sink.gate_change(g, vals[out]);
                        }
                    }
                }
            },
            Engine::Switch { sim, inputs, .. } => {
                for (&n, &v) in inputs.iter().zip(&ins) {
                    sim.set_input(n, v);
                }
                settle_switch(sim, &mut self.sink)?;
            }
        }
        Ok(())
    }

    fn edge(&mut self, activity: Activity) -> Result<(), MicroError> {
        let c = self.m.circuit();
        match &mut self.eng {
            Engine::Gate { vals, state } => {
                let next = c.clock_edge(vals).state;
                for (i, &g) in c.dffs.iter().enumerate() {
                    let out = c.gate_output[g];
                    if vals[out] != next[i] {
                        if let Some(sink) = self.sink.as_deref_mut() {
                            sink.gate_change(g, next[i]);
                        }
                        vals[out] = next[i];
                    }
                }
                *state = next;
            }
            Engine::Switch { sim, phi, .. } => {
                for (clk, v) in [(0, LogicValue::One), (0, LogicValue::Zero), (1, LogicValue::One), (1, LogicValue::Zero)] {
                    sim.set_input(phi[clk], v);
                    settle_switch(sim, &mut self.sink)?;
                }
            }
        }
        if let Some(sink) = self.sink.as_deref_mut() {
            sink.end_cycle(&CycleCtx {
                edge: self.edges,
                activity,
            })?;
        }
        self.edges += 1;
        Ok(())
    }

    fn project(&self, arch: &mut MachineState) -> Result<(), MicroError> {
        let p = &self.m.datapath.probes;
        arch.pc = self.word(&p.pc)?;
        for (j, nets) in p.regs.iter().enumerate() {
            arch.regs[j + 1] = self.word(nets)?;
        }
        Ok(())
    }
}

fn settle_switch(sim: &mut SwitchSim, sink: &mut Option<&mut dyn ActivitySink>) -> Result<(), MicroError> {
    match sink.as_deref_mut() {
        None => sim.settle(&mut |_, _| {})?,
        Some(s) => sim.settle(&mut |f, c| s.fet_change(f, c))?,
    };
    Ok(())
}

/// Runs an image on the microcoded machine.
pub fn run_micro(
    m: &MicroMachine,
    img: &MachineImage,
    input: &mut InputProvider,
    limits: MicroLimits,
    sink: Option<&mut dyn ActivitySink>,
) -> Result<MicroRun, MicroError> {
    run_micro_observed(m, img, input, limits, sink, |_| {})
}

/// Like [`run_micro`], calling `observe` with the projected architectural
/// state at every instruction boundary.
pub fn run_micro_observed(
    m: &MicroMachine,
    img: &MachineImage,
    input: &mut InputProvider,
    limits: MicroLimits,
    sink: Option<&mut dyn ActivitySink>,
    mut observe: impl FnMut(&MachineState),
) -> Result<MicroRun, MicroError> {
    if limits.max_instructions == 0 || limits.max_edges == 0 {
        return Err(VmError::ZeroCycleLimit.into());
    }
    let mut r = Runner::new(m, sink);
    let mut arch = MachineState::boot(img);
    let mut events = Vec::new();
    let mut instr_edges = Vec::new();
    let done = |r: Runner, arch, events, halt, instr_edges| {
        Ok(MicroRun {
            edges: r.edges,
            instr_edges,
            result: RunResult {
                state: arch,
                events,
                halt,
            },
        })
    };

    let idle = MicroOp::default();
    for _ in 0..RESET_EDGES {
        if r.edges == limits.max_edges {
            return done(r, arch, events, HaltReason::CycleLimitExceeded, instr_edges);
        }
        r.settle(&idle, true, 0)?;
        r.edge(Activity::Reset)?;
    }
    let boot = [
        MicroOp {
            mem: MemOp::Read,
            ..idle
        },
        MicroOp {
            bus: BusSource::Mdr,
            dest: Dests { pc: true, ..Dests::default() },
            ..idle
        },
    ];
    for (op, ext) in boot.iter().zip([img.entry_point & ADDR_MASK, 0]) {
        if r.edges == limits.max_edges {
            return done(r, arch, events, HaltReason::CycleLimitExceeded, instr_edges);
        }
        r.settle(op, false, ext)?;
        r.edge(Activity::Boot)?;
    }
    let c = m.circuit();
    for &g in &c.dffs {
        let q = c.gate_output[g];
        if !r.get(q).is_known() {
            return Err(MicroError::XContamination(c.net_names[q].clone()));
        }
    }
    r.project(&mut arch)?;
    debug_assert_eq!(arch.regs, [0; NUM_REGS]);

    let probes = &m.datapath.probes;
    let prefix = fetch_prefix();
    let mut started = 0u64;
    let halt = loop {
        if started == limits.max_instructions {
            break HaltReason::CycleLimitExceeded;
        }
        started += 1;
        instr_edges.push(r.edges);
        let addr = r.word(&probes.pc)?;
        let word = arch.mem[addr as usize];
        let (c0, mut evs, mut stop) = (arch.cycle, Vec::new(), None);
        let mut opcode = 0u8;
        let mut ir = 0u16;
        let mut upc = 0usize;
        loop {
            if r.edges == limits.max_edges {
                return done(r, arch, events, HaltReason::CycleLimitExceeded, instr_edges);
            }
            let mut op = if upc < FETCH_STEPS {
                prefix[upc]
            } else {
                *m.rom.get(opcode, upc).expect("sequences end with an end step")
            };
            let port = (ir & 7) as u8;
            let mut ext = 0;
            if op.mem == MemOp::Read {
                ext = arch.mem[r.word(&probes.mar)? as usize];
            }
            if op.io == IoOp::In {
                match input.read(port, arch.cycle) {
                    Some(w) => {
                        ext = w;
                        evs.push(ArchEvent::Input { port, word: w });
                    }
                    None => {
                        op = stop_op(HaltOp::Trap);
                        stop = Some(HaltReason::HaltedOnInput);
                    }
                }
            }
            if op.io == IoOp::Out {
                let w = r.word(&probes.mdr)?;
                evs.push(ArchEvent::Output { port, word: w });
            }
            if op.mem == MemOp::Write {
                let (a, v) = (r.word(&probes.mar)?, r.word(&probes.mdr)?);
                arch.mem[a as usize] = v;
                evs.push(ArchEvent::MemWrite { a, v });
            }
            r.settle(&op, false, ext)?;
            if op.dest.reg {
                let reg = r.word(&probes.ridx)? as u8;
                if reg != 0 {
                    evs.push(ArchEvent::RegWrite {
                        r: reg,
                        v: r.word(&probes.bus)?,
                    });
                }
            }
            let flag = match op.branch {
                BranchTest::Z => Some(r.bit(probes.z)?),
                BranchTest::N => Some(r.bit(probes.n)?),
                _ => None,
            };
            match flag {
                Some(true) => evs.push(ArchEvent::BranchTaken {
                    target: r.word(&probes.bus)? & ADDR_MASK,
                }),
                Some(false) => evs.push(ArchEvent::BranchNotTaken),
                None => {}
            }
            match op.halt {
                HaltOp::None => {}
                HaltOp::Halt => {
                    evs.push(ArchEvent::Halt);
                    stop = Some(HaltReason::Halted);
                }
                HaltOp::Trap => {
                    let reason = *stop.get_or_insert(HaltReason::IllegalInstruction);
                    evs.push(ArchEvent::Trap { reason });
                }
            }
            r.edge(Activity::Instr {
                addr,
                upc: upc as u8,
                word,
            })?;
            if upc == FETCH_STEPS - 1 {
                ir = r.word(&probes.ir)?;
                opcode = (ir >> 12) as u8;
            }
            if op.end {
                break;
            }
            upc += 1;
        }
        r.project(&mut arch)?;
        if matches!(stop, None | Some(HaltReason::Halted)) {
            arch.cycle += 1;
        }
        arch.halted = stop.is_some();
        events.extend(evs.into_iter().map(|ev| EventRecord { c: c0, pc: addr, ev }));
        observe(&arch);
        if let Some(reason) = stop {
            break reason;
        }
    };
    done(r, arch, events, halt, instr_edges)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::isa::{AluOp, Instr};
    use crate::isa_vm::run_observed;

    fn image(prog: &[Instr]) -> MachineImage {
        MachineImage::from_words(&prog.iter().map(Instr::encode).collect::<Vec<_>>())
    }

    fn boundaries_agree(m: &MicroMachine, img: &MachineImage, input: &[u16], max: u64) -> RunResult {
        let mut isa_states = Vec::new();
        let isa = run_observed(img, &mut InputProvider::words(input), max, |s| isa_states.push(s.clone())).unwrap();
        let mut micro_states = Vec::new();
        let micro = run_micro_observed(
            m,
            img,
            &mut InputProvider::words(input),
            MicroLimits::instructions(max),
            None,
            |s| micro_states.push(s.clone()),
        )
        .unwrap();
        assert_eq!(micro_states, isa_states);
        assert_eq!(micro.result.events, isa.events);
        assert_eq!(micro.result.halt, isa.halt);
        micro.result
    }

    #[test]
    fn halt_at_entry_stops_within_one_instruction() {
        let m = build_machine(Fidelity::Gate);
        let run = run_micro(&m, &MachineImage::empty(), &mut InputProvider::new(), MicroLimits::instructions(10), None)
            .unwrap();
        assert_eq!(run.result.halt, HaltReason::Halted);
        assert_eq!(run.edges, RESET_EDGES + BOOT_EDGES + FETCH_STEPS as u64 + 1);
        assert_eq!(run.result.state.pc, 0);
        assert_eq!(run.result.state.cycle, 1);
    }

    #[test]
    fn every_instruction_kind_matches_the_interpreter() {
        use Instr::*;
        let prog = [
            In { rd: 1, port: 0 },
            LoadI { rd: 2, imm: -3 },
            Alu { op: AluOp::Add, rd: 3, rs: 1, rt: 2 },
            Alu { op: AluOp::Sub, rd: 4, rs: 2, rt: 1 },
            Alu { op: AluOp::And, rd: 5, rs: 1, rt: 2 },
            Alu { op: AluOp::Or, rd: 6, rs: 1, rt: 2 },
            Alu { op: AluOp::Xor, rd: 7, rs: 1, rt: 2 },
            Not { rd: 7, rs: 7 },
            LoadI { rd: 6, imm: 40 },
            Store { rd: 3, rs: 6, off: -2 },
            Load { rd: 5, rs: 6, off: -2 },
            Out { rd: 5, port: 3 },
            Jn { rd: 2, addr: 15 },
            Halt,
            Halt,
            Jz { rd: 0, addr: 17 },
            Halt,
            Alu { op: AluOp::Add, rd: 0, rs: 1, rt: 1 },
            Jz { rd: 1, addr: 0 },
            Jmp { addr: 21 },
            Halt,
            In { rd: 1, port: 0 },
        ];
        let m = build_machine(Fidelity::Gate);
        let res = boundaries_agree(&m, &image(&prog), &[0x1234], 100);
        assert_eq!(res.halt, HaltReason::HaltedOnInput);
        assert_eq!(res.outputs(), vec![(3, 0x1231)]);
    }

    #[test]
    fn illegal_word_traps_like_the_interpreter() {
        let m = build_machine(Fidelity::Gate);
        let img = MachineImage::from_words(&[Instr::LoadI { rd: 1, imm: 7 }.encode(), 0xF123]);
        let res = boundaries_agree(&m, &img, &[], 10);
        assert_eq!(res.halt, HaltReason::IllegalInstruction);
        assert_eq!(res.state.pc, 1);
    }

    #[test]
    fn instruction_budget_is_respected() {
        let m = build_machine(Fidelity::Gate);
        let img = image(&[Instr::Jmp { addr: 0 }]);
        let res = boundaries_agree(&m, &img, &[], 7);
        assert_eq!(res.halt, HaltReason::CycleLimitExceeded);
        assert_eq!(res.state.cycle, 7);
    }

    #[test]
    fn switch_fidelity_agrees_on_a_short_program() {
        use Instr::*;
        let prog = [
            LoadI { rd: 1, imm: 5 },
            LoadI { rd: 2, imm: -1 },
            Alu { op: AluOp::Add, rd: 1, rs: 1, rt: 2 },
            Out { rd: 1, port: 0 },
            Jz { rd: 1, addr: 6 },
            Jmp { addr: 2 },
            Halt,
        ];
        let m = build_machine(Fidelity::Switch);
        assert!(m.fet_count() > 2 * m.gate_count());
        let res = boundaries_agree(&m, &image(&prog), &[], 100);
        assert_eq!(res.output_words(), vec![4, 3, 2, 1, 0]);
    }

    #[test]
    fn sink_sees_reset_first() {
        struct Count(Vec<(CycleCtx, usize)>, usize);
        impl ActivitySink for Count {
            fn gate_change(&mut self, _: usize, _: LogicValue) {
                self.1 += 1;
            }
            fn fet_change(&mut self, _: usize, _: FetCond) {
                self.1 += 1;
            }
            fn end_cycle(&mut self, ctx: &CycleCtx) -> io::Result<()> {
                self.0.push((*ctx, std::mem::take(&mut self.1)));
                Ok(())
            }
        }
        let m = build_machine(Fidelity::Gate);
        let mut sink = Count(Vec::new(), 0);
        let run = run_micro(&m, &MachineImage::empty(), &mut InputProvider::new(), MicroLimits::instructions(1), Some(&mut sink))
            .unwrap();
        assert_eq!(sink.0.len() as u64, run.edges);
        assert_eq!(sink.0[0].0.activity, Activity::Reset);
        assert!(sink.0[0].1 > 0);
        assert_eq!(sink.0[RESET_EDGES as usize].0.activity, Activity::Boot);
        assert!(matches!(sink.0.last().unwrap().0.activity, Activity::Instr { upc: 3, .. }));
    }

    #[test]
    fn microcode_rom_is_built_for_every_fidelity() {
        let a = build_machine(Fidelity::Gate);
        let b = build_machine(Fidelity::Switch);
        assert_eq!(a.rom, b.rom);
        assert_eq!(a.circuit().gates, b.circuit().gates);
    }
}
