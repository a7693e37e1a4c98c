use super::{DeviceParams, FetDevice, Polarity};
use crate::gates::{Circuit, GateKind};
use std::collections::HashMap;
use std::fmt::Write as _;

pub const VDD: &str = "VDD";
pub const GND: &str = "GND";
/// Two-phase non-overlapping clock inputs added for flip-flops.
pub const CLOCK_NETS: [&str; 2] = ["phi1", "phi2"];

/// A flat network of FETs between named nets, with provenance back to the
/// gates it was expanded from.
#[derive(Debug, Clone)]
pub struct TransistorNet {
    pub net_names: Vec<String>,
    index: HashMap<String, usize>,
    pub inputs: Vec<usize>,
    pub outputs: Vec<usize>,
    pub fets: Vec<FetDevice>,
    /// Originating gate index for every FET.
    pub provenance: Vec<usize>,
    pub gate_ids: Vec<String>,
    pub gate_kinds: Vec<GateKind>,
    pub params: DeviceParams,
    /// Output net of every flip-flop, in the circuit's state order.
    pub dff_q: Vec<usize>,
}

/// FET count of the static CMOS cell for a gate.
pub fn fet_count_for(kind: GateKind, inputs: usize) -> usize {
    match kind {
        GateKind::Not | GateKind::Const0 | GateKind::Const1 => 2,
        GateKind::Nand | GateKind::Nor => 2 * inputs,
        GateKind::And | GateKind::Or => 2 * inputs + 2,
        GateKind::Xor => 16 * (inputs - 1),
        GateKind::Dff => 32,
    }
}

impl TransistorNet {
    pub const VDD_NET: usize = 0;
    pub const GND_NET: usize = 1;

    pub fn net(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    pub fn net_count(&self) -> usize {
        self.net_names.len()
    }

    pub fn is_rail(&self, n: usize) -> bool {
        n == Self::VDD_NET || n == Self::GND_NET
    }

    pub fn fet_gate_id(&self, fet: usize) -> &str {
        &self.gate_ids[self.provenance[fet]]
    }

    /// Sets every FET threshold of a polarity. Values outside `(0, vdd)`
    /// are accepted here so that out-of-regime devices can be studied.
    pub fn set_threshold(&mut self, p: Polarity, vth: f64) {
        match p {
            Polarity::N => self.params.vth_n = vth,
            Polarity::P => self.params.vth_p = vth,
        }
        for f in self.fets.iter_mut().filter(|f| f.polarity == p) {
            f.vth = vth;
        }
    }

    /// Dump with one `<id> = FET(n|p, gate, source, drain, vth)` record per
    /// device, sorted by id.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        writeln!(s, ".vdd {}", self.params.vdd).unwrap();
        let names = |v: &[usize]| v.iter().map(|&n| self.net_names[n].as_str()).collect::<Vec<_>>().join(" ");
        writeln!(s, ".inputs {}", names(&self.inputs)).unwrap();
        writeln!(s, ".outputs {}", names(&self.outputs)).unwrap();
        let mut fets: Vec<&FetDevice> = self.fets.iter().collect();
        fets.sort_by(|a, b| a.id.cmp(&b.id));
        for f in fets {
            writeln!(
                s,
                "{} = FET({}, {}, {}, {}, {})",
                f.id,
                f.polarity,
                self.net_names[f.gate],
                self.net_names[f.source],
                self.net_names[f.drain],
                f.vth
            )
            .unwrap();
        }
        s
    }

    fn intern(&mut self, name: &str) -> usize {
        if let Some(&n) = self.index.get(name) {
            return n;
        }
        self.net_names.push(name.to_string());
        self.index.insert(name.to_string(), self.net_names.len() - 1);
        self.net_names.len() - 1
    }
}

struct Cell<'a> {
    t: &'a mut TransistorNet,
    gate: usize,
    id: String,
    fresh: usize,
}

impl Cell<'_> {
    fn internal(&mut self) -> usize {
        let name = format!("{}/~{}", self.id, self.fresh);
        self.fresh += 1;
        self.t.intern(&name)
    }

    fn fet(&mut self, name: String, polarity: Polarity, gate: usize, source: usize, drain: usize) {
        let vth = self.t.params.vth(polarity);
        self.t.fets.push(FetDevice {
            id: format!("{}/{}", self.id, name),
            polarity,
            gate,
            source,
            drain,
            vth,
        });
        self.t.provenance.push(self.gate);
    }

    fn inv(&mut self, pfx: &str, a: usize, out: usize) {
        self.fet(format!("{pfx}p0"), Polarity::P, a, TransistorNet::VDD_NET, out);
        self.fet(format!("{pfx}n0"), Polarity::N, a, TransistorNet::GND_NET, out);
    }

    /// Parallel network of `par` polarity from `par_rail`, series stack of
    /// the other polarity from `out` down to `ser_rail` in input order.
    fn complementary(&mut self, pfx: &str, ins: &[usize], out: usize, nand: bool) {
        let (par, ser, par_rail, ser_rail) = if nand {
            (Polarity::P, Polarity::N, TransistorNet::VDD_NET, TransistorNet::GND_NET)
        } else {
            (Polarity::N, Polarity::P, TransistorNet::GND_NET, TransistorNet::VDD_NET)
        };
        for (i, &a) in ins.iter().enumerate() {
            self.fet(format!("{pfx}{par}{i}"), par, a, par_rail, out);
        }
        let mut upper = out;
        for (i, &a) in ins.iter().enumerate() {
            let lower = if i + 1 == ins.len() { ser_rail } else { self.internal() };
            self.fet(format!("{pfx}{ser}{i}"), ser, a, lower, upper);
            upper = lower;
        }
    }

    fn nand(&mut self, pfx: &str, ins: &[usize], out: usize) {
        self.complementary(pfx, ins, out, true)
    }

    fn xor2(&mut self, pfx: &str, a: usize, b: usize, out: usize) {
        let n1 = self.internal();
        let n2 = self.internal();
        let n3 = self.internal();
        self.nand(&format!("{pfx}g1."), &[a, b], n1);
        self.nand(&format!("{pfx}g2."), &[a, n1], n2);
        self.nand(&format!("{pfx}g3."), &[b, n1], n3);
        self.nand(&format!("{pfx}g4."), &[n2, n3], out);
    }

    /// Gated D latch from four NAND2 cells; transparent while `clk` is high.
    fn latch(&mut self, pfx: &str, d: usize, clk: usize, q: usize) {
        let s = self.internal();
        let r = self.internal();
        let qb = self.internal();
        self.nand(&format!("{pfx}s."), &[d, clk], s);
        self.nand(&format!("{pfx}r."), &[s, clk], r);
        self.nand(&format!("{pfx}q."), &[s, qb], q);
        self.nand(&format!("{pfx}qb."), &[r, q], qb);
    }
}

/// Static CMOS expansion. Flip-flops become master/slave latches clocked
/// by `phi1` then `phi2`, which are appended to the primary inputs.
pub fn expand_to_transistors(c: &Circuit, params: DeviceParams) -> TransistorNet {
    let mut t = TransistorNet {
        net_names: Vec::new(),
        index: HashMap::new(),
        inputs: Vec::new(),
        outputs: Vec::new(),
        fets: Vec::new(),
        provenance: Vec::new(),
        gate_ids: c.gates.iter().map(|g| g.id.clone()).collect(),
        gate_kinds: c.gates.iter().map(|g| g.kind).collect(),
        params,
        dff_q: Vec::new(),
    };
    t.intern(VDD);
    t.intern(GND);
    for name in &c.net_names {
        t.intern(name);
    }
    t.inputs = c.inputs.iter().map(|&n| n + 2).collect();
    t.outputs = c.outputs.iter().map(|&n| n + 2).collect();
    let clocks = if c.is_sequential() {
        let p = [t.intern(CLOCK_NETS[0]), t.intern(CLOCK_NETS[1])];
        t.inputs.extend(p);
        Some(p)
    } else {
        None
    };
    t.dff_q = c.dffs.iter().map(|&g| c.gate_output[g] + 2).collect();
    for (gi, g) in c.gates.iter().enumerate() {
        let ins: Vec<usize> = c.gate_inputs[gi].iter().map(|&n| n + 2).collect();
        let out = c.gate_output[gi] + 2;
        let mut cell = Cell {
            t: &mut t,
            gate: gi,
            id: g.id.clone(),
            fresh: 0,
        };
        match g.kind {
            GateKind::Not => cell.inv("", ins[0], out),
            GateKind::Nand => cell.complementary("", &ins, out, true),
            GateKind::Nor => cell.complementary("", &ins, out, false),
            GateKind::And | GateKind::Or => {
                let mid = cell.internal();
                cell.complementary("c.", &ins, mid, g.kind == GateKind::And);
                cell.inv("inv.", mid, out);
            }
            GateKind::Xor => {
                let mut acc = ins[0];
                for (j, &b) in ins[1..].iter().enumerate() {
                    let dst = if j + 2 == ins.len() { out } else { cell.internal() };
                    cell.xor2(&format!("x{j}."), acc, b, dst);
                    acc = dst;
                }
            }
            GateKind::Const0 => cell.inv("tie.", TransistorNet::VDD_NET, out),
            GateKind::Const1 => cell.inv("tie.", TransistorNet::GND_NET, out),
            GateKind::Dff => {
                let [phi1, phi2] = clocks.expect("sequential circuit has clocks");
                let m = cell.internal();
                cell.latch("m.", ins[0], phi1, m);
                cell.latch("s.", m, phi2, out);
            }
        }
    }
    t
}
