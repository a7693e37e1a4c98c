//! The datapath netlist: registers, register file, ALU and internal bus,
//! assembled from the standard blocks.

use super::microcode::{BusSource, ImmSel, MicroAlu, MicroOp, RegSel};
use crate::gates::{synthesize_block, BlockKind, Builder, Circuit, GateKind, LogicValue, Netlist};
use std::sync::Arc;

pub const WORD: usize = 16;
pub const ADDR: usize = 12;

/// Control inputs in port order; `ext` follows as 16 data pins.
pub const CONTROL_INPUTS: [&str; 22] = [
    "reset", "bus_pc", "bus_mdr", "bus_alu", "bus_reg", "bus_imm", "ld_pc", "ld_mar", "ld_mdr", "ld_ir",
    "ld_reg", "ld_a", "ld_b", "mdr_ext", "alu_op[0]", "alu_op[1]", "alu_op[2]", "rsel[0]", "rsel[1]",
    "imm_sel[0]", "imm_sel[1]", "cond_z",
];
const COND_N: usize = CONTROL_INPUTS.len();
const EXT0: usize = COND_N + 1;
pub const INPUT_COUNT: usize = EXT0 + WORD;

fn block(kind: BlockKind, width: usize) -> Arc<Netlist> {
    Arc::new(synthesize_block(kind, width).expect("fixed block parameters are valid"))
}

fn bits(name: &str, w: usize) -> Vec<String> {
    (0..w).map(|i| format!("{name}[{i}]")).collect()
}

fn bus_bind<'a>(port: &'a str, nets: &'a [String]) -> impl Iterator<Item = (String, String)> + 'a {
    nets.iter().enumerate().map(move |(i, n)| (format!("{port}[{i}]"), n.clone()))
}

fn alu() -> Netlist {
    let mut b = Builder::new("alu");
    let a = b.input_bus("a", WORD);
    let bb = b.input_bus("b", WORD);
    let op = b.input_bus("op", 3);
    let d = bits("d", 8);
    b.instance("dec", block(BlockKind::Decoder, 3), bus_bind("a", &op).chain(bus_bind("y", &d)));
    let use_a = b.named("use_a", GateKind::Nor, &[&d[6], &d[7]]);
    let cin = b.named("cin", GateKind::Or, &[&d[1], &d[7]]);
    let mut x = Vec::new();
    let mut y = Vec::new();
    let mut logic: [Vec<String>; 4] = Default::default();
    for i in 0..WORD {
        x.push(b.named(&format!("x[{i}]"), GateKind::And, &[&a[i], &use_a]));
        y.push(b.named(&format!("y[{i}]"), GateKind::Xor, &[&bb[i], &d[1]]));
        logic[0].push(b.named(&format!("and[{i}]"), GateKind::And, &[&a[i], &bb[i]]));
        logic[1].push(b.named(&format!("or[{i}]"), GateKind::Or, &[&a[i], &bb[i]]));
        logic[2].push(b.named(&format!("xor[{i}]"), GateKind::Xor, &[&a[i], &bb[i]]));
        logic[3].push(b.named(&format!("not[{i}]"), GateKind::Not, &[&a[i]]));
    }
    let sum = bits("sum", WORD);
    b.instance(
        "add",
        block(BlockKind::Adder, WORD),
        bus_bind("a", &x)
            .chain(bus_bind("b", &y))
            .chain(bus_bind("s", &sum))
            .chain([("cin".to_string(), cin), ("cout".to_string(), "cout".to_string())]),
    );
    let out = bits("out", WORD);
    // op: ADD SUB AND OR XOR NOT PASS_B INC; the adder covers 0, 1, 6, 7
    let ways = [&sum, &sum, &logic[0], &logic[1], &logic[2], &logic[3], &sum, &sum];
    let mut binds: Vec<(String, String)> = bus_bind("sel", &op).chain(bus_bind("y", &out)).collect();
    for (j, w) in ways.iter().enumerate() {
        binds.extend(bus_bind(&format!("in{j}"), w));
    }
    b.instance("sel", block(BlockKind::Mux { ways: 8 }, WORD), binds);
    for o in &out {
        b.output(o);
    }
    let z = b.reduce(GateKind::Nor, &out);
    b.output_as("z", &z);
    b.output_as("n", &out[WORD - 1]);
    b.finish()
}

/// One-hot AND-OR bus; the PC source is zero-extended.
fn internal_bus() -> Netlist {
    let mut b = Builder::new("bus");
    let srcs = ["pc", "mdr", "alu", "reg", "imm"];
    let sel: Vec<String> = srcs.iter().map(|s| b.input(&format!("sel_{s}"))).collect();
    let data: Vec<Vec<String>> = srcs
        .iter()
        .map(|s| b.input_bus(s, if *s == "pc" { ADDR } else { WORD }))
        .collect();
    for i in 0..WORD {
        let terms: Vec<String> = sel
            .iter()
            .zip(&data)
            .filter(|(_, d)| i < d.len())
            .map(|(s, d)| b.and2(s, &d[i]))
            .collect();
        let y = b.reduce(GateKind::Or, &terms);
        b.output_as(&format!("y[{i}]"), &y);
    }
    b.finish()
}

fn datapath_netlist() -> Netlist {
    let mut b = Builder::new("cpu");
    for name in CONTROL_INPUTS {
        b.input(name);
    }
    b.input("cond_n");
    let ext = b.input_bus("ext", WORD);
    let bus = bits("bus", WORD);
    let zero = b.named("zero", GateKind::Const0, &[]);

    // branch gating of the PC load
    let nz = b.named("ctl/nz", GateKind::Not, &["z"]);
    let bz = b.named("ctl/bz", GateKind::And, &["cond_z", &nz]);
    let nn = b.named("ctl/nn", GateKind::Not, &["n"]);
    let bn = b.named("ctl/bn", GateKind::And, &["cond_n", &nn]);
    let keep = b.named("ctl/keep", GateKind::Nor, &[&bz, &bn]);
    let pc_load = b.named("ctl/pc_load", GateKind::And, &["ld_pc", &keep]);
    let mdr_en = b.named("ctl/mdr_en", GateKind::Or, &["ld_mdr", "mdr_ext"]);

    let register = |b: &mut Builder, name: &str, width: usize, d: &[String], en: &str| {
        let q = bits(name, width);
        b.instance(
            name,
            block(BlockKind::Register, width),
            bus_bind("d", &d[..width])
                .chain(bus_bind("q", &q))
                .chain([("en".to_string(), en.to_string()), ("rst".to_string(), "reset".to_string())]),
        );
        q
    };
    let pc = register(&mut b, "pc", ADDR, &bus, &pc_load);
    register(&mut b, "mar", ADDR, &bus, "ld_mar");
    let mdr_d = bits("mdr_d", WORD);
    b.instance(
        "mdr_in",
        block(BlockKind::Mux { ways: 2 }, WORD),
        bus_bind("in0", &bus)
            .chain(bus_bind("in1", &ext))
            .chain(bus_bind("y", &mdr_d))
            .chain([("sel[0]".to_string(), "mdr_ext".to_string())]),
    );
    let mdr = register(&mut b, "mdr", WORD, &mdr_d, &mdr_en);
    let ir = register(&mut b, "ir", WORD, &bus, "ld_ir");
    let a = register(&mut b, "a", WORD, &bus, "ld_a");
    let bb = register(&mut b, "b", WORD, &bus, "ld_b");

    // register file: r0 reads as zero and ignores writes
    let field = |lo: usize| ir[lo..lo + 3].to_vec();
    let ridx = bits("ridx", 3);
    b.instance(
        "rsel",
        block(BlockKind::Mux { ways: 4 }, 3),
        bus_bind("in0", &field(9))
            .chain(bus_bind("in1", &field(6)))
            .chain(bus_bind("in2", &field(3)))
            .chain(bus_bind("in3", &field(9)))
            .chain(bus_bind("sel", &bits("rsel", 2)))
            .chain(bus_bind("y", &ridx)),
    );
    let rdec = bits("rdec", 8);
    b.instance("rdec", block(BlockKind::Decoder, 3), bus_bind("a", &ridx).chain(bus_bind("y", &rdec)));
    let mut file = vec![vec![zero.clone(); WORD]];
    for j in 1..8 {
        let we = b.named(&format!("ctl/we{j}"), GateKind::And, &["ld_reg", &rdec[j]]);
        file.push(register(&mut b, &format!("r{j}"), WORD, &bus, &we));
    }
    let regout = bits("regout", WORD);
    let mut binds: Vec<(String, String)> = bus_bind("sel", &ridx).chain(bus_bind("y", &regout)).collect();
    for (j, r) in file.iter().enumerate() {
        binds.extend(bus_bind(&format!("in{j}"), r));
    }
    b.instance("rread", block(BlockKind::Mux { ways: 8 }, WORD), binds);

    // immediates: S9, S6, U9, U12
    let ext_field = |hi: usize, fill: &str| -> Vec<String> {
        (0..WORD).map(|i| if i < hi { ir[i].clone() } else { fill.to_string() }).collect()
    };
    let imm = bits("imm", WORD);
    b.instance(
        "imm",
        block(BlockKind::Mux { ways: 4 }, WORD),
        bus_bind("in0", &ext_field(9, &ir[8]))
            .chain(bus_bind("in1", &ext_field(6, &ir[5])))
            .chain(bus_bind("in2", &ext_field(9, &zero)))
            .chain(bus_bind("in3", &ext_field(12, &zero)))
            .chain(bus_bind("sel", &bits("imm_sel", 2)))
            .chain(bus_bind("y", &imm)),
    );

    let alu_out = bits("alu_out", WORD);
    b.instance(
        "alu",
        Arc::new(alu()),
        bus_bind("a", &a)
            .chain(bus_bind("b", &bb))
            .chain(bus_bind("op", &bits("alu_op", 3)))
            .chain(bus_bind("out", &alu_out))
            .chain([("z".to_string(), "z".to_string()), ("n".to_string(), "n".to_string())]),
    );

    let mut binds: Vec<(String, String)> = bus_bind("pc", &pc)
        .chain(bus_bind("mdr", &mdr))
        .chain(bus_bind("alu", &alu_out))
        .chain(bus_bind("reg", &regout))
        .chain(bus_bind("imm", &imm))
        .chain(bus_bind("y", &bus))
        .collect();
    for s in ["pc", "mdr", "alu", "reg", "imm"] {
        binds.push((format!("sel_{s}"), format!("bus_{s}")));
    }
    b.instance("bus", Arc::new(internal_bus()), binds);

    for n in pc.iter().chain(&bits("mar", ADDR)).chain(&mdr).chain(&ir).chain(&bus) {
        b.output(n);
    }
    b.output("z");
    b.output("n");
    b.finish()
}

/// Net indices of the architecturally interesting signals.
#[derive(Debug, Clone)]
pub struct Probes {
    pub pc: Vec<usize>,
    pub mar: Vec<usize>,
    pub mdr: Vec<usize>,
    pub ir: Vec<usize>,
    pub bus: Vec<usize>,
    pub ridx: Vec<usize>,
    /// r1..r7; r0 is constant zero.
    pub regs: Vec<Vec<usize>>,
    pub z: usize,
    pub n: usize,
}

#[derive(Debug, Clone)]
pub struct Datapath {
    pub netlist: Netlist,
    pub circuit: Circuit,
    pub probes: Probes,
}

impl Datapath {
    pub fn build() -> Self {
        let netlist = datapath_netlist();
        let circuit = netlist.flatten().expect("datapath netlist is well formed");
        let bus = |n: &str, w| circuit.bus(n, w).expect("datapath net");
        let probes = Probes {
            pc: bus("pc", ADDR),
            mar: bus("mar", ADDR),
            mdr: bus("mdr", WORD),
            ir: bus("ir", WORD),
            bus: bus("bus", WORD),
            ridx: bus("ridx", 3),
            regs: (1..8).map(|j| bus(&format!("r{j}"), WORD)).collect(),
            z: circuit.net("z").expect("z"),
            n: circuit.net("n").expect("n"),
        };
        debug_assert_eq!(circuit.inputs.len(), INPUT_COUNT);
        Self {
            netlist,
            circuit,
            probes,
        }
    }
}

/// Primary input vector for one control word.
pub fn control_inputs(op: &MicroOp, reset: bool, ext: u16) -> Vec<LogicValue> {
    let mut v = [false; INPUT_COUNT];
    v[0] = reset;
    let bus_slot = match op.bus {
        BusSource::None => None,
        BusSource::Pc => Some(1),
        BusSource::Mdr => Some(2),
        BusSource::Alu => Some(3),
        BusSource::Reg => Some(4),
        BusSource::Imm => Some(5),
    };
    if let Some(i) = bus_slot {
        v[i] = true;
    }
    let d = op.dest;
    for (i, on) in [d.pc, d.mar, d.mdr, d.ir, d.reg, d.a, d.b].into_iter().enumerate() {
        v[6 + i] = on;
    }
    v[13] = op.mdr_external();
    let alu = match op.alu {
        MicroAlu::Add => 0,
        MicroAlu::Sub => 1,
        MicroAlu::And => 2,
        MicroAlu::Or => 3,
        MicroAlu::Xor => 4,
        MicroAlu::Not => 5,
        MicroAlu::PassB => 6,
        MicroAlu::Inc => 7,
    };
    let rsel = match op.reg_sel {
        RegSel::Rd => 0,
        RegSel::Rs => 1,
        RegSel::Rt => 2,
    };
    let imm = match op.imm {
        ImmSel::S9 => 0,
        ImmSel::S6 => 1,
        ImmSel::U9 => 2,
        ImmSel::U12 => 3,
    };
    for i in 0..3 {
        v[14 + i] = alu >> i & 1 == 1;
    }
    for i in 0..2 {
        v[17 + i] = rsel >> i & 1 == 1;
        v[19 + i] = imm >> i & 1 == 1;
    }
    use super::microcode::BranchTest;
    v[21] = op.branch == BranchTest::Z;
    v[COND_N] = op.branch == BranchTest::N;
    for i in 0..WORD {
        v[EXT0 + i] = ext >> i & 1 == 1;
    }
    v.iter().map(|&b| LogicValue::from_bool(b)).collect()
}
