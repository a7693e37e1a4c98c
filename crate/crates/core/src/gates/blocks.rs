use super::netlist::{Gate, Instance, Netlist};
use super::GateKind;
use std::collections::{HashMap, HashSet};
use std::sync::Arc;
use thiserror::Error;

/// Incremental netlist construction with automatic internal net names.
#[derive(Debug, Clone)]
pub struct Builder {
    nl: Netlist,
    next: usize,
    exports: Vec<(String, String)>,
}

impl Builder {
    pub fn new(name: impl Into<String>) -> Self {
        Self {
            nl: Netlist::new(name),
            next: 0,
            exports: Vec::new(),
        }
    }

    pub fn input(&mut self, name: &str) -> String {
        self.nl.inputs.push(name.to_string());
        name.to_string()
    }

    pub fn input_bus(&mut self, name: &str, width: usize) -> Vec<String> {
        (0..width).map(|i| self.input(&format!("{name}[{i}]"))).collect()
    }

    /// Adds a gate with an explicit output net.
    pub fn named(&mut self, out: &str, kind: GateKind, ins: &[&str]) -> String {
        debug_assert!(kind.arity_ok(ins.len()), "{kind} with {} inputs", ins.len());
        self.nl.gates.push(Gate {
            output: out.to_string(),
            kind,
            inputs: ins.iter().map(|s| s.to_string()).collect(),
        });
        out.to_string()
    }

    pub fn gate(&mut self, kind: GateKind, ins: &[&str]) -> String {
        let out = format!("_{}", self.next);
        self.next += 1;
        self.named(&out, kind, ins)
    }

    pub fn not(&mut self, a: &str) -> String {
        self.gate(GateKind::Not, &[a])
    }

    pub fn and2(&mut self, a: &str, b: &str) -> String {
        self.gate(GateKind::And, &[a, b])
    }

    pub fn or2(&mut self, a: &str, b: &str) -> String {
        self.gate(GateKind::Or, &[a, b])
    }

    pub fn xor2(&mut self, a: &str, b: &str) -> String {
        self.gate(GateKind::Xor, &[a, b])
    }

    pub fn nand2(&mut self, a: &str, b: &str) -> String {
        self.gate(GateKind::Nand, &[a, b])
    }

    pub fn const0(&mut self) -> String {
        self.gate(GateKind::Const0, &[])
    }

    /// AND/OR/... over any number of nets; a single net is returned as is.
    pub fn reduce(&mut self, kind: GateKind, ins: &[String]) -> String {
        match ins {
            [] => panic!("empty reduction"),
            [one] => one.clone(),
            _ => {
                let refs: Vec<&str> = ins.iter().map(String::as_str).collect();
                self.gate(kind, &refs)
            }
        }
    }

    /// `s ? a1 : a0` as AND-OR.
    pub fn mux2(&mut self, s: &str, a0: &str, a1: &str) -> String {
        let ns = self.not(s);
        let x = self.and2(a0, &ns);
        let y = self.and2(a1, s);
        self.or2(&x, &y)
    }

    /// Exposes `net` as output port `port`; the driving gate is renamed
    /// when possible, otherwise a buffer is inserted.
    pub fn output_as(&mut self, port: &str, net: &str) {
        self.exports.push((port.to_string(), net.to_string()));
    }

    /// Declares an already-driven net as an output port.
    pub fn output(&mut self, net: &str) {
        self.nl.outputs.push(net.to_string());
    }

    pub fn instance<P: Into<String>, N: Into<String>>(
        &mut self,
        name: &str,
        module: Arc<Netlist>,
        bindings: impl IntoIterator<Item = (P, N)>,
    ) {
        self.nl.instances.push(Instance {
            name: name.to_string(),
            module,
            bindings: bindings.into_iter().map(|(p, n)| (p.into(), n.into())).collect(),
        });
    }

    pub fn finish(mut self) -> Netlist {
        let inputs: HashSet<String> = self.nl.inputs.iter().cloned().collect();
        let driven: HashSet<String> = self.nl.gates.iter().map(|g| g.output.clone()).collect();
        let mut rename: HashMap<String, String> = HashMap::new();
        let mut buffers = Vec::new();
        for (port, net) in std::mem::take(&mut self.exports) {
            if driven.contains(&net) && !inputs.contains(&net) && !rename.contains_key(&net) {
                rename.insert(net, port.clone());
            } else {
                buffers.push((port.clone(), net));
            }
            self.nl.outputs.push(port);
        }
        let r = |n: &mut String| {
            if let Some(new) = rename.get(n.as_str()) {
                *n = new.clone();
            }
        };
        for g in &mut self.nl.gates {
            r(&mut g.output);
            g.inputs.iter_mut().for_each(r);
        }
        for i in &mut self.nl.instances {
            i.bindings.values_mut().for_each(r);
        }
        for (port, mut net) in buffers {
            r(&mut net);
            self.named(&port, GateKind::And, &[&net, &net]);
        }
        self.nl
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BlockKind {
    /// `a + b + cin`; outputs `s` and `cout`.
    Adder,
    /// Unsigned `lt`, `eq`, `gt`.
    Comparator,
    /// `ways` inputs of the given width selected by `sel`.
    Mux { ways: usize },
    /// One-hot decode of `a`; width at most 8.
    Decoder,
    /// Loadable register with enable and synchronous reset.
    Register,
    /// Up-counter with enable and synchronous reset.
    Counter,
}

/// Structurally different gate-level realizations of the same block.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Realization {
    Reference,
    Alternate,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SynthError {
    #[error("unsupported width {width} for {kind:?}")]
    Width { kind: BlockKind, width: usize },
    #[error("mux ways must be a power of two between 2 and 16, got {0}")]
    Ways(usize),
}

pub fn synthesize_block(kind: BlockKind, width: usize) -> Result<Netlist, SynthError> {
    synthesize_variant(kind, width, Realization::Reference)
}

pub fn synthesize_variant(kind: BlockKind, width: usize, r: Realization) -> Result<Netlist, SynthError> {
    let max = if kind == BlockKind::Decoder { 8 } else { 16 };
    if width == 0 || width > max {
        return Err(SynthError::Width { kind, width });
    }
    let alt = r == Realization::Alternate;
    let suffix = if alt { "_alt" } else { "" };
    Ok(match kind {
        BlockKind::Adder => adder(width, alt, &format!("adder{width}{suffix}")),
        BlockKind::Comparator => comparator(width, alt, &format!("cmp{width}{suffix}")),
        BlockKind::Mux { ways } => {
            if !(2..=16).contains(&ways) || !ways.is_power_of_two() {
                return Err(SynthError::Ways(ways));
            }
            mux(width, ways, alt, &format!("mux{width}x{ways}{suffix}"))
        }
        BlockKind::Decoder => decoder(width, alt, &format!("dec{width}{suffix}")),
        BlockKind::Register => register(width, alt, &format!("reg{width}{suffix}")),
        BlockKind::Counter => counter(width, alt, &format!("ctr{width}{suffix}")),
    })
}

fn full_adder(b: &mut Builder, x: &str, y: &str, c: &str, alt: bool) -> (String, String) {
    if alt {
        let n1 = b.nand2(x, y);
        let n2 = b.nand2(x, &n1);
        let n3 = b.nand2(y, &n1);
        let p = b.nand2(&n2, &n3);
        let n5 = b.nand2(&p, c);
        let n6 = b.nand2(&p, &n5);
        let n7 = b.nand2(c, &n5);
        let s = b.nand2(&n6, &n7);
        let co = b.nand2(&n1, &n5);
        (s, co)
    } else {
        let p = b.xor2(x, y);
        let s = b.xor2(&p, c);
        let g = b.and2(x, y);
        let t = b.and2(&p, c);
        let co = b.or2(&g, &t);
        (s, co)
    }
}

fn adder(w: usize, alt: bool, name: &str) -> Netlist {
    let mut b = Builder::new(name);
    let a = b.input_bus("a", w);
    let y = b.input_bus("b", w);
    let mut c = b.input("cin");
    for i in 0..w {
        let (s, co) = full_adder(&mut b, &a[i], &y[i], &c, alt);
        b.output_as(&format!("s[{i}]"), &s);
        c = co;
    }
    b.output_as("cout", &c);
    b.finish()
}

fn comparator(w: usize, alt: bool, name: &str) -> Netlist {
    let mut b = Builder::new(name);
    let a = b.input_bus("a", w);
    let y = b.input_bus("b", w);
    if alt {
        // a - b = a + ~b + 1; no carry out means a < b.
        let mut c = b.gate(GateKind::Const1, &[]);
        let mut diffs = Vec::new();
        for i in 0..w {
            let nb = b.not(&y[i]);
            let (_, co) = full_adder(&mut b, &a[i], &nb, &c, true);
            c = co;
            diffs.push(b.xor2(&a[i], &y[i]));
        }
        let lt = b.not(&c);
        let eq = if diffs.len() == 1 {
            b.not(&diffs[0])
        } else {
            b.reduce(GateKind::Nor, &diffs)
        };
        let gt = b.gate(GateKind::Nor, &[&lt, &eq]);
        b.output_as("lt", &lt);
        b.output_as("eq", &eq);
        b.output_as("gt", &gt);
    } else {
        let mut g_acc: Option<String> = None;
        let mut l_acc: Option<String> = None;
        let mut e_acc: Option<String> = None;
        for i in (0..w).rev() {
            let na = b.not(&a[i]);
            let nb = b.not(&y[i]);
            let gi = b.and2(&a[i], &nb);
            let li = b.and2(&na, &y[i]);
            let ei = b.gate(GateKind::Nor, &[&gi, &li]);
            (g_acc, l_acc, e_acc) = match (g_acc, l_acc, e_acc) {
                (Some(g), Some(l), Some(e)) => {
                    let gt = b.and2(&e, &gi);
                    let lt = b.and2(&e, &li);
                    (Some(b.or2(&g, &gt)), Some(b.or2(&l, &lt)), Some(b.and2(&e, &ei)))
                }
                _ => (Some(gi), Some(li), Some(ei)),
            };
        }
        b.output_as("lt", &l_acc.unwrap());
        b.output_as("eq", &e_acc.unwrap());
        b.output_as("gt", &g_acc.unwrap());
    }
    b.finish()
}

/// Minterm nets for `bits`, least significant bit first.
fn minterms(b: &mut Builder, bits: &[String]) -> Vec<String> {
    let negs: Vec<String> = bits.iter().map(|x| b.not(x)).collect();
    (0..1usize << bits.len())
        .map(|j| {
            let lits: Vec<String> = (0..bits.len())
                .map(|i| if j >> i & 1 == 1 { bits[i].clone() } else { negs[i].clone() })
                .collect();
            b.reduce(GateKind::And, &lits)
        })
        .collect()
}

fn mux(w: usize, ways: usize, alt: bool, name: &str) -> Netlist {
    let k = ways.trailing_zeros() as usize;
    let mut b = Builder::new(name);
    let sel = b.input_bus("sel", k);
    let ins: Vec<Vec<String>> = (0..ways).map(|j| b.input_bus(&format!("in{j}"), w)).collect();
    if alt {
        let nsel: Vec<String> = sel.iter().map(|s| b.not(s)).collect();
        for i in 0..w {
            let mut layer: Vec<String> = ins.iter().map(|v| v[i].clone()).collect();
            for (lvl, s) in sel.iter().enumerate() {
                layer = layer
                    .chunks(2)
                    .map(|p| {
                        let x = b.nand2(&p[0], &nsel[lvl]);
                        let y = b.nand2(&p[1], s);
                        b.nand2(&x, &y)
                    })
                    .collect();
            }
            b.output_as(&format!("y[{i}]"), &layer[0]);
        }
    } else {
        let dec = minterms(&mut b, &sel);
        for i in 0..w {
            let terms: Vec<String> = (0..ways).map(|j| b.and2(&dec[j], &ins[j][i])).collect();
            let y = b.reduce(GateKind::Or, &terms);
            b.output_as(&format!("y[{i}]"), &y);
        }
    }
    b.finish()
}

fn decoder(w: usize, alt: bool, name: &str) -> Netlist {
    let mut b = Builder::new(name);
    let a = b.input_bus("a", w);
    let outs = if alt {
        if w == 1 {
            let y0 = b.not(&a[0]);
            let y1 = b.not(&y0);
            vec![y0, y1]
        } else {
            let lo_w = w / 2;
            let lo = minterms(&mut b, &a[..lo_w]);
            let hi = minterms(&mut b, &a[lo_w..]);
            (0..1usize << w)
                .map(|j| {
                    let (l, h) = (&lo[j & ((1 << lo_w) - 1)], &hi[j >> lo_w]);
                    b.and2(l, h)
                })
                .collect()
        }
    } else {
        let negs: Vec<String> = a.iter().map(|x| b.not(x)).collect();
        (0..1usize << w)
            .map(|j| {
                let lits: Vec<&str> = (0..w)
                    .map(|i| if j >> i & 1 == 1 { a[i].as_str() } else { negs[i].as_str() })
                    .collect();
                if w == 1 {
                    b.gate(GateKind::And, &[lits[0], lits[0]])
                } else {
                    b.gate(GateKind::And, &lits)
                }
            })
            .collect()
    };
    for (j, y) in outs.iter().enumerate() {
        b.output_as(&format!("y[{j}]"), y);
    }
    b.finish()
}

fn register(w: usize, alt: bool, name: &str) -> Netlist {
    let mut b = Builder::new(name);
    let d = b.input_bus("d", w);
    let en = b.input("en");
    let rst = b.input("rst");
    let nen = b.not(&en);
    let nrst = b.not(&rst);
    for i in 0..w {
        let q = format!("q[{i}]");
        let next = if alt {
            let x = b.nand2(&d[i], &en);
            let y = b.nand2(&q, &nen);
            let m = b.nand2(&x, &y);
            let nm = b.not(&m);
            b.gate(GateKind::Nor, &[&rst, &nm])
        } else {
            let x = b.and2(&en, &d[i]);
            let y = b.and2(&nen, &q);
            let m = b.or2(&x, &y);
            b.and2(&nrst, &m)
        };
        b.named(&q, GateKind::Dff, &[&next]);
        b.output(&q);
    }
    b.finish()
}

fn counter(w: usize, alt: bool, name: &str) -> Netlist {
    let mut b = Builder::new(name);
    let en = b.input("en");
    let rst = b.input("rst");
    let qs: Vec<String> = (0..w).map(|i| format!("q[{i}]")).collect();
    let nrst = b.not(&rst);
    let mut carry = en.clone();
    for i in 0..w {
        let next = if alt {
            let mut terms = vec![en.clone()];
            terms.extend(qs[..i].iter().cloned());
            let t = b.reduce(GateKind::And, &terms);
            let nt = b.not(&t);
            let nq = b.not(&qs[i]);
            let x = b.and2(&qs[i], &nt);
            let y = b.and2(&nq, &t);
            let s = b.or2(&x, &y);
            let ns = b.not(&s);
            b.gate(GateKind::Nor, &[&rst, &ns])
        } else {
            let s = b.xor2(&qs[i], &carry);
            carry = b.and2(&qs[i], &carry);
            b.and2(&nrst, &s)
        };
        b.named(&qs[i], GateKind::Dff, &[&next]);
        b.output(&qs[i]);
    }
    b.finish()
}
