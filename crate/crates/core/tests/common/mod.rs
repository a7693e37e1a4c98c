//! Independent oracles shared by the integration tests.
#![allow(dead_code)]

use emst_core::compiler::MachineImage;
use emst_core::gates::{Circuit, Gate, GateKind, Netlist};
use emst_core::isa_vm::{HaltReason, RunResult};
use emst_core::lang::{Ast, BinOp, Expr, LValue, Stmt, StmtKind, VarKind};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use std::collections::{BTreeMap, HashMap, VecDeque};
use std::path::PathBuf;

pub fn workspace_root() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../..")
}

// ---------------------------------------------------------------------------
// Tree-walking interpreter

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OracleHalt {
    Halted,
    InputExhausted,
    IndexOutOfRange,
    StepLimit,
}

impl OracleHalt {
    pub fn matches(self, h: HaltReason) -> bool {
        matches!(
            (self, h),
            (OracleHalt::Halted, HaltReason::Halted)
                | (OracleHalt::InputExhausted, HaltReason::HaltedOnInput)
                | (OracleHalt::IndexOutOfRange, HaltReason::IllegalInstruction)
                | (OracleHalt::StepLimit, HaltReason::CycleLimitExceeded)
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OracleResult {
    pub outputs: Vec<(u8, u16)>,
    pub vars: BTreeMap<String, Vec<u16>>,
    pub halt: OracleHalt,
}

enum Stop {
    Halt(OracleHalt),
}

struct Interp {
    vars: BTreeMap<String, Vec<u16>>,
    input: BTreeMap<u8, VecDeque<u16>>,
    outputs: Vec<(u8, u16)>,
    steps: u64,
    max_steps: u64,
}

/// `a < b`: the sign of the difference taken modulo 2^16.
fn less(a: u16, b: u16) -> bool {
    (a as i64 - b as i64).rem_euclid(1 << 16) >= 1 << 15
}

impl Interp {
    fn eval(&self, e: &Expr) -> Result<u16, Stop> {
        Ok(match e {
            Expr::Int(v) => *v,
            Expr::Var(n) => self.vars[n][0],
            Expr::Index(n, i) => {
                let i = self.eval(i)? as usize;
                *self.vars[n].get(i).ok_or(Stop::Halt(OracleHalt::IndexOutOfRange))?
            }
            Expr::Not(x) => (self.eval(x)? == 0) as u16,
            Expr::Bin(op, l, r) => {
                let (a, b) = (self.eval(l)?, self.eval(r)?);
                match op {
                    BinOp::Add => ((a as u32 + b as u32) % 65536) as u16,
                    BinOp::Sub => ((a as u32 + 65536 - b as u32) % 65536) as u16,
                    BinOp::BitAnd => a & b,
                    BinOp::BitOr => a | b,
                    BinOp::BitXor => a ^ b,
                    BinOp::Lt => less(a, b) as u16,
                    BinOp::Gt => less(b, a) as u16,
                    BinOp::Le => !less(b, a) as u16,
                    BinOp::Ge => !less(a, b) as u16,
                    BinOp::Eq => (a == b) as u16,
                    BinOp::Ne => (a != b) as u16,
                    BinOp::And => (a != 0 && b != 0) as u16,
                    BinOp::Or => (a != 0 || b != 0) as u16,
                }
            }
        })
    }

    fn slot(&self, lv: &LValue) -> Result<(String, usize), Stop> {
        match lv {
            LValue::Var(n) => Ok((n.clone(), 0)),
            LValue::Index(n, i) => {
                let i = self.eval(i)? as usize;
                if i >= self.vars[n].len() {
                    return Err(Stop::Halt(OracleHalt::IndexOutOfRange));
                }
                Ok((n.clone(), i))
            }
        }
    }

    fn store(&mut self, lv: &LValue, v: u16) -> Result<(), Stop> {
        let (n, i) = self.slot(lv)?;
        self.vars.get_mut(&n).unwrap()[i] = v;
        Ok(())
    }

    fn tick(&mut self) -> Result<(), Stop> {
        self.steps += 1;
        if self.steps > self.max_steps {
            return Err(Stop::Halt(OracleHalt::StepLimit));
        }
        Ok(())
    }

    fn block(&mut self, stmts: &[Stmt]) -> Result<(), Stop> {
        for s in stmts {
            self.stmt(s)?;
        }
        Ok(())
    }

    fn stmt(&mut self, s: &Stmt) -> Result<(), Stop> {
        self.tick()?;
        match &s.kind {
            StmtKind::Assign(lv, e) => {
                let v = self.eval(e)?;
                self.store(lv, v)?;
            }
            StmtKind::If {
                cond,
                then_body,
                else_body,
            } => {
                if self.eval(cond)? != 0 {
                    self.block(then_body)?;
                } else {
                    self.block(else_body)?;
                }
            }
            StmtKind::While { cond, body } => {
                while self.eval(cond)? != 0 {
                    self.tick()?;
                    self.block(body)?;
                }
            }
            StmtKind::RepeatUntil { body, cond } => loop {
                self.tick()?;
                self.block(body)?;
                if self.eval(cond)? != 0 {
                    break;
                }
            },
            StmtKind::Swap(a, b) => {
                let (na, ia) = self.slot(a)?;
                let (nb, ib) = self.slot(b)?;
                let x = self.vars[&na][ia];
                let y = self.vars[&nb][ib];
                self.vars.get_mut(&na).unwrap()[ia] = y;
                self.vars.get_mut(&nb).unwrap()[ib] = x;
            }
            StmtKind::Read(lv, port) => {
                self.slot(lv)?;
                let w = self
                    .input
                    .get_mut(port)
                    .and_then(|q| q.pop_front())
                    .ok_or(Stop::Halt(OracleHalt::InputExhausted))?;
                self.store(lv, w)?;
            }
            StmtKind::Write(e, port) => {
                let v = self.eval(e)?;
                self.outputs.push((*port, v));
            }
            StmtKind::Halt => return Err(Stop::Halt(OracleHalt::Halted)),
        }
        Ok(())
    }
}

/// Interprets a parsed program directly, with no compilation involved.
pub fn interpret(ast: &Ast, input: &[(u8, u16)], max_steps: u64) -> OracleResult {
    let vars = ast
        .decls
        .iter()
        .map(|d| {
            let n = match d.kind {
                VarKind::Scalar => 1,
                VarKind::Array(n) => n as usize,
            };
            (d.name.clone(), vec![0; n])
        })
        .collect();
    let mut q: BTreeMap<u8, VecDeque<u16>> = BTreeMap::new();
    for &(p, w) in input {
        q.entry(p).or_default().push_back(w);
    }
    let mut it = Interp {
        vars,
        input: q,
        outputs: Vec::new(),
        steps: 0,
        max_steps,
    };
    let halt = match it.block(&ast.body) {
        Ok(()) => OracleHalt::Halted,
        Err(Stop::Halt(h)) => h,
    };
    OracleResult {
        outputs: it.outputs,
        vars: it.vars,
        halt,
    }
}

/// Compares a compiled run with the oracle: outputs, halt reason, and
/// every declared variable's memory.
pub fn agree(ast: &Ast, img: &MachineImage, run: &RunResult, oracle: &OracleResult) -> Result<(), String> {
    if !oracle.halt.matches(run.halt) {
        return Err(format!("halt: oracle {:?}, machine {:?}", oracle.halt, run.halt));
    }
    if oracle.outputs != run.outputs() {
        return Err(format!("outputs: oracle {:?}, machine {:?}", oracle.outputs, run.outputs()));
    }
    for d in &ast.decls {
        let addr = img.symbol(&d.name).ok_or_else(|| format!("no symbol for {}", d.name))?;
        let want = &oracle.vars[&d.name];
        let got = run.state.read_block(addr, want.len());
        if got != want.as_slice() {
            return Err(format!("variable {}: oracle {want:?}, machine {got:?}", d.name));
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Random programs

pub struct ProgramGen {
    rng: StdRng,
}

pub const GEN_SCALARS: usize = 5;
pub const GEN_ARRAY: usize = 8;

impl ProgramGen {
    pub fn new(seed: u64) -> Self {
        Self {
            rng: StdRng::seed_from_u64(seed),
        }
    }

    fn leaf(&mut self, loops: usize) -> String {
        match self.rng.random_range(0..10) {
            0..=2 => self.rng.random_range(0..=300u32).to_string(),
            3 => format!("-{}", self.rng.random_range(1..=40u32)),
            4 if loops > 0 => format!("c{}", self.rng.random_range(0..loops)),
            5 => format!("A[{} & 7]", self.scalar()),
            _ => self.scalar(),
        }
    }

    fn scalar(&mut self) -> String {
        format!("v{}", self.rng.random_range(0..GEN_SCALARS))
    }

    fn expr(&mut self, depth: u32, loops: usize) -> String {
        if depth == 0 || self.rng.random_bool(0.3) {
            return self.leaf(loops);
        }
        const OPS: [&str; 13] = ["+", "-", "&", "|", "^", "<", ">", "=", "<=", ">=", "!=", "and", "or"];
        match self.rng.random_range(0..8) {
            0 => format!("(not {})", self.paren(depth - 1, loops)),
            1 => format!("A[({}) & 7]", self.expr(depth - 1, loops)),
            _ => {
                let op = OPS[self.rng.random_range(0..OPS.len())];
                format!("({} {op} {})", self.paren(depth - 1, loops), self.paren(depth - 1, loops))
            }
        }
    }

    fn paren(&mut self, depth: u32, loops: usize) -> String {
        let e = self.expr(depth, loops);
        if e.starts_with('(') || !e.contains(' ') {
            e
        } else {
            format!("({e})")
        }
    }

    fn target(&mut self, loops: usize) -> String {
        if self.rng.random_bool(0.3) {
            format!("A[{} & 7]", self.paren(1, loops))
        } else {
            self.scalar()
        }
    }

    fn stmts(&mut self, out: &mut String, indent: usize, n: usize, loops: usize, nest: usize) {
        let pad = "    ".repeat(indent);
        for _ in 0..n {
            let pick = self.rng.random_range(0..20);
            match pick {
                0..=6 => {
                    let t = self.target(loops);
                    let e = self.expr(2, loops);
                    out.push_str(&format!("{pad}{t} = {e};\n"));
                }
                7..=8 => {
                    let e = self.expr(2, loops);
                    let port = self.rng.random_range(0..2);
                    out.push_str(&format!("{pad}write {e} to {port};\n"));
                }
                9 => {
                    let t = self.target(loops);
                    out.push_str(&format!("{pad}read {t};\n"));
                }
                10 => {
                    let (a, b) = (self.target(loops), self.target(loops));
                    out.push_str(&format!("{pad}swap {a}, {b};\n"));
                }
                11..=14 if nest < 2 => {
                    let c = self.expr(2, loops);
                    out.push_str(&format!("{pad}if {c} {{\n"));
                    let k = self.rng.random_range(1..4);
                    self.stmts(out, indent + 1, k, loops, nest + 1);
                    if self.rng.random_bool(0.5) {
                        out.push_str(&format!("{pad}}} else {{\n"));
                        let k = self.rng.random_range(1..4);
                        self.stmts(out, indent + 1, k, loops, nest + 1);
                    }
                    out.push_str(&format!("{pad}}}\n"));
                }
                15..=16 if nest < 2 && loops < 3 => {
                    let hi = self.rng.random_range(0..4);
                    out.push_str(&format!("{pad}for c{loops} = 0 to {hi} {{\n"));
                    let k = self.rng.random_range(1..4);
                    self.stmts(out, indent + 1, k, loops + 1, nest + 1);
                    out.push_str(&format!("{pad}}}\n"));
                }
                17 if nest < 2 && loops < 3 => {
                    // counted repeat loop on the next free counter
                    let hi = self.rng.random_range(1..4);
                    out.push_str(&format!("{pad}c{loops} = 0;\n{pad}repeat {{\n"));
                    let k = self.rng.random_range(1..3);
                    self.stmts(out, indent + 1, k, loops + 1, nest + 1);
                    out.push_str(&format!("{pad}    c{loops} = c{loops} + 1;\n{pad}}} until c{loops} >= {hi};\n"));
                }
                18 if self.rng.random_bool(0.1) => out.push_str(&format!("{pad}halt;\n")),
                _ => {
                    let t = self.scalar();
                    let e = self.leaf(loops);
                    out.push_str(&format!("{pad}{t} = {t} + {e};\n"));
                }
            }
        }
    }

    /// A random program together with an input stream for it.
    pub fn program(&mut self) -> (String, Vec<(u8, u16)>) {
        let mut s = String::from("# generated\n");
        for i in 0..GEN_SCALARS {
            s.push_str(&format!("var v{i};\n"));
        }
        s.push_str(&format!("var A[{GEN_ARRAY}];\nvar c0;\nvar c1;\nvar c2;\n"));
        let n = self.rng.random_range(4..12);
        self.stmts(&mut s, 0, n, 0, 0);
        for i in 0..GEN_SCALARS {
            s.push_str(&format!("write v{i};\n"));
        }
        let words = self.rng.random_range(0..24);
        let input = (0..words).map(|_| (0u8, self.rng.random())).collect();
        (s, input)
    }
}

// ---------------------------------------------------------------------------
// Bit-parallel netlist evaluation, independent of the library simulator

/// A flat combinational view: free variables are the primary inputs
/// followed by flip-flop outputs; observed nets are the primary outputs
/// followed by flip-flop inputs.
pub struct FlatEval {
    kinds: Vec<GateKind>,
    args: Vec<Vec<usize>>,
    outs: Vec<usize>,
    order: Vec<usize>,
    free: Vec<usize>,
    observed: Vec<usize>,
    nets: usize,
}

impl FlatEval {
    pub fn new(n: &Netlist) -> Self {
        assert!(n.instances.is_empty(), "flat netlists only");
        let mut ids: HashMap<String, usize> = HashMap::new();
        let mut id = |s: &String| {
            let k = ids.len();
            *ids.entry(s.clone()).or_insert(k)
        };
        let free_in: Vec<usize> = n.inputs.iter().map(|s| id(s)).collect();
        let outs: Vec<usize> = n.gates.iter().map(|g| id(&g.output)).collect();
        let args: Vec<Vec<usize>> = n.gates.iter().map(|g| g.inputs.iter().map(|s| id(s)).collect()).collect();
        let observed_out: Vec<usize> = n.outputs.iter().map(|s| id(s)).collect();
        let nets = ids.len();
        let kinds: Vec<GateKind> = n.gates.iter().map(|g| g.kind).collect();
        let dffs: Vec<usize> = (0..kinds.len()).filter(|&g| kinds[g] == GateKind::Dff).collect();
        let mut free = free_in;
        free.extend(dffs.iter().map(|&g| outs[g]));
        let mut observed = observed_out;
        observed.extend(dffs.iter().map(|&g| args[g][0]));
        // topological order over combinational gates by depth-first search
        let mut driver = vec![usize::MAX; nets];
        for (g, &o) in outs.iter().enumerate() {
            if kinds[g] != GateKind::Dff {
                driver[o] = g;
            }
        }
        let mut order = Vec::new();
        let mut mark = vec![0u8; kinds.len()];
        fn visit(g: usize, driver: &[usize], args: &[Vec<usize>], mark: &mut [u8], order: &mut Vec<usize>) {
            if mark[g] == 2 {
                return;
            }
            assert_ne!(mark[g], 1, "combinational loop");
            mark[g] = 1;
            for &a in &args[g] {
                if driver[a] != usize::MAX {
                    visit(driver[a], driver, args, mark, order);
                }
            }
            mark[g] = 2;
            order.push(g);
        }
        for g in 0..kinds.len() {
            if kinds[g] != GateKind::Dff {
                visit(g, &driver, &args, &mut mark, &mut order);
            }
        }
        Self {
            kinds,
            args,
            outs,
            order,
            free,
            observed,
            nets,
        }
    }

    pub fn free_count(&self) -> usize {
        self.free.len()
    }

    /// Observed nets for 64 consecutive rows starting at `base`, one bit
    /// per row. Variable 0 is the most significant bit of the row number.
    pub fn eval_block(&self, base: u64, vals: &mut Vec<u64>) -> Vec<u64> {
        vals.clear();
        vals.resize(self.nets, 0);
        let k = self.free.len();
        for (j, &net) in self.free.iter().enumerate() {
            let mut w = 0u64;
            for r in 0..64u64 {
                if ((base + r) >> (k - 1 - j)) & 1 == 1 {
                    w |= 1 << r;
                }
            }
            vals[net] = w;
        }
        for &g in &self.order {
            let a = &self.args[g];
            let fold = |f: fn(u64, u64) -> u64| a.iter().map(|&x| vals[x]).reduce(f).unwrap();
            let v = match self.kinds[g] {
                GateKind::And => fold(|x, y| x & y),
                GateKind::Or => fold(|x, y| x | y),
                GateKind::Xor => fold(|x, y| x ^ y),
                GateKind::Nand => !fold(|x, y| x & y),
                GateKind::Nor => !fold(|x, y| x | y),
                GateKind::Not => !vals[a[0]],
                GateKind::Const0 => 0,
                GateKind::Const1 => !0,
                GateKind::Dff => unreachable!(),
            };
            vals[self.outs[g]] = v;
        }
        self.observed.iter().map(|&n| vals[n]).collect()
    }

    /// Whether two views with the same free variables compute the same
    /// observed functions on every row.
    pub fn same_function(&self, other: &FlatEval) -> bool {
        assert_eq!(self.free.len(), other.free.len());
        let rows = 1u64 << self.free.len();
        let mask = if rows >= 64 { !0 } else { (1u64 << rows) - 1 };
        let (mut va, mut vb) = (Vec::new(), Vec::new());
        let mut base = 0;
        while base < rows {
            let a = self.eval_block(base, &mut va);
            let b = other.eval_block(base, &mut vb);
            if a.iter().zip(&b).any(|(x, y)| (x ^ y) & mask != 0) {
                return false;
            }
            base += 64;
        }
        true
    }
}

/// A flat netlist with the same gates as a flattened circuit.
pub fn flat_netlist(c: &Circuit) -> Netlist {
    let mut n = Netlist::new(c.name.clone());
    n.inputs = c.input_names().into_iter().map(String::from).collect();
    n.outputs = c.output_names().into_iter().map(String::from).collect();
    n.gates = c
        .gates
        .iter()
        .map(|g| Gate {
            output: g.output.clone(),
            kind: g.kind,
            inputs: g.inputs.clone(),
        })
        .collect();
    n
}

/// Every netlist obtained by changing the kind of one combinational gate
/// to another kind of the same arity.
pub fn single_gate_mutants(n: &Netlist) -> Vec<Netlist> {
    const KINDS: [GateKind; 6] = [
        GateKind::And,
        GateKind::Or,
        GateKind::Nand,
        GateKind::Nor,
        GateKind::Xor,
        GateKind::Not,
    ];
    let mut out = Vec::new();
    for (i, g) in n.gates.iter().enumerate() {
        if g.kind == GateKind::Dff {
            continue;
        }
        let mut alternatives: Vec<GateKind> = KINDS.iter().copied().filter(|k| k.arity_ok(g.inputs.len())).collect();
        if g.inputs.is_empty() {
            alternatives = vec![if g.kind == GateKind::Const0 { GateKind::Const1 } else { GateKind::Const0 }];
        }
        for k in alternatives {
            if k != g.kind {
                let mut m = n.clone();
                m.gates[i].kind = k;
                out.push(m);
            }
        }
    }
    out
}
