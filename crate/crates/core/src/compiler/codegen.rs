//! Lowering of checked programs to symbolic assembly.
//!
//! Register use: r1..r5 form a stack of expression temporaries, r6 holds
//! addresses, r7 is scratch for building constants that do not fit LOADI.
//! Data follows code; when any data address exceeds the LOADI range every
//! address is built with the long `hi`/`lo` sequence instead.

use super::asm::*;
use crate::isa::{AluOp, MEM_WORDS};
use crate::lang::{BinOp, CheckedProgram, Expr, LValue, Stmt, StmtKind, VarKind};
use thiserror::Error;

/// Word placed at the bounds-check trap label; opcode 15 is reserved and
/// traps as an illegal instruction.
pub const TRAP_WORD: u16 = 0xF000;
pub const TRAP_LABEL: &str = "L.trap";

const ADDR_REG: u8 = 6;
const SCRATCH: u8 = 7;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CompileError {
    #[error("program needs {0} words; memory holds {MEM_WORDS}")]
    CapacityExceeded(usize),
    #[error("branch trampolines end at word {0}; conditional branches reach only the first 512")]
    BranchRangeExceeded(usize),
}

struct Gen<'a> {
    prog: &'a CheckedProgram,
    lines: Vec<AsmLine>,
    pending_labels: Vec<String>,
    src: Option<u32>,
    next_label: usize,
    long_addresses: bool,
    uses_trap: bool,
    /// Distinct conditional-branch targets, when branches go via trampolines.
    trampolines: Option<Vec<String>>,
}

impl Gen<'_> {
    fn fresh(&mut self) -> String {
        self.next_label += 1;
        format!("L.{}", self.next_label)
    }

    fn emit(&mut self, mut i: AsmInstr) {
        if let (Some(targets), AsmInstr::Jz(_, t) | AsmInstr::Jn(_, t)) =
            (self.trampolines.as_mut(), &mut i)
        {
            if let Target::Label(l) = t {
                if !targets.contains(l) {
                    targets.push(l.clone());
                }
                *l = trampoline_label(l);
            }
        }
        let mut labels = std::mem::take(&mut self.pending_labels);
        // Extra labels on the same address get their own label-only lines.
        let last = labels.pop();
        for l in labels {
            self.lines.push(AsmLine::label(l));
        }
        self.lines.push(AsmLine {
            label: last,
            instr: Some(i),
            source_line: self.src,
        });
    }

    fn place(&mut self, label: String) {
        self.pending_labels.push(label);
    }

    fn alu(&mut self, op: AluOp, rd: u8, rs: u8, rt: u8) {
        self.emit(AsmInstr::Alu { op, rd, rs, rt });
    }

    fn loadi(&mut self, rd: u8, v: i16) {
        self.emit(AsmInstr::LoadI {
            rd,
            imm: Imm::Value(v),
        });
    }

    /// rd <- hi * 256 + lo, via eight doublings. Clobbers r7.
    fn build_long(&mut self, rd: u8, hi: Imm, lo: Imm) {
        self.emit(AsmInstr::LoadI { rd, imm: hi });
        for _ in 0..8 {
            self.alu(AluOp::Add, rd, rd, rd);
        }
        self.emit(AsmInstr::LoadI {
            rd: SCRATCH,
            imm: lo,
        });
        self.alu(AluOp::Add, rd, rd, SCRATCH);
    }

    fn load_const(&mut self, rd: u8, v: u16) {
        let s = v as i16;
        if (-256..=255).contains(&s) {
            self.loadi(rd, s);
        } else {
            self.build_long(rd, Imm::Value(s >> 8), Imm::Value((v & 0xFF) as i16));
        }
    }

    fn load_addr(&mut self, rd: u8, name: &str) {
        if self.long_addresses {
            self.build_long(rd, Imm::Hi(name.into()), Imm::Lo(name.into()));
        } else {
            self.emit(AsmInstr::LoadI {
                rd,
                imm: Imm::Addr(name.into()),
            });
        }
    }

    fn array_len(&self, name: &str) -> u16 {
        match self.prog.symbols[name].kind {
            VarKind::Array(n) => n,
            VarKind::Scalar => 1,
        }
    }

    /// Traps unless 0 <= r_idx < len. Clobbers r6 and r7.
    fn bounds_check(&mut self, idx: u8, len: u16) {
        self.uses_trap = true;
        let ok = self.fresh();
        self.emit(AsmInstr::Jn(idx, Target::Label(TRAP_LABEL.into())));
        self.load_const(ADDR_REG, len);
        self.alu(AluOp::Sub, ADDR_REG, idx, ADDR_REG);
        self.emit(AsmInstr::Jn(ADDR_REG, Target::Label(ok.clone())));
        self.emit(AsmInstr::Jmp(Target::Label(TRAP_LABEL.into())));
        self.place(ok);
    }

    /// r6 <- address of name[r_idx], after a bounds check.
    fn element_addr(&mut self, name: &str, idx: u8) {
        let len = self.array_len(name);
        self.bounds_check(idx, len);
        self.load_addr(ADDR_REG, name);
        self.alu(AluOp::Add, ADDR_REG, ADDR_REG, idx);
    }

    /// Leaves 0 or 1 in rd depending on whether the jump emitted by `test`
    /// is taken (`taken_value`) or not.
    fn materialize_flag(&mut self, rd: u8, taken_value: i16, test: impl FnOnce(&mut Self, Target)) {
        let taken = self.fresh();
        let end = self.fresh();
        test(self, Target::Label(taken.clone()));
        self.loadi(rd, 1 - taken_value);
        self.emit(AsmInstr::Jmp(Target::Label(end.clone())));
        self.place(taken);
        self.loadi(rd, taken_value);
        self.place(end);
    }

    /// rd <- (rd != 0) as 0/1.
    fn normalize(&mut self, rd: u8) {
        let skip = self.fresh();
        self.emit(AsmInstr::Jz(rd, Target::Label(skip.clone())));
        self.loadi(rd, 1);
        self.place(skip);
    }

    /// Evaluates `e` into register r_k.
    fn expr(&mut self, e: &Expr, k: u8) {
        match e {
            Expr::Int(v) => self.load_const(k, *v),
            Expr::Var(n) => {
                self.load_addr(k, n);
                self.emit(AsmInstr::Load { rd: k, rs: k, off: 0 });
            }
            Expr::Index(n, i) => {
                self.expr(i, k);
                self.element_addr(n, k);
                self.emit(AsmInstr::Load {
                    rd: k,
                    rs: ADDR_REG,
                    off: 0,
                });
            }
            Expr::Not(inner) => {
                self.expr(inner, k);
                self.materialize_flag(k, 1, |g, t| g.emit(AsmInstr::Jz(k, t)));
            }
            Expr::Bin(op, l, r) => {
                self.expr(l, k);
                if matches!(op, BinOp::And | BinOp::Or) {
                    self.normalize(k);
                }
                self.expr(r, k + 1);
                let t = k + 1;
                match op {
                    BinOp::Add => self.alu(AluOp::Add, k, k, t),
                    BinOp::Sub => self.alu(AluOp::Sub, k, k, t),
                    BinOp::BitAnd => self.alu(AluOp::And, k, k, t),
                    BinOp::BitOr => self.alu(AluOp::Or, k, k, t),
                    BinOp::BitXor => self.alu(AluOp::Xor, k, k, t),
                    BinOp::And | BinOp::Or => {
                        self.normalize(t);
                        let aop = if *op == BinOp::And { AluOp::And } else { AluOp::Or };
                        self.alu(aop, k, k, t);
                    }
                    cmp => {
                        let (jump, taken_value) = self.compare(*cmp, k, t);
                        self.materialize_flag(k, taken_value, |g, target| {
                            g.emit(jump(k, target))
                        });
                    }
                }
            }
        }
    }

    /// Emits the subtraction for a comparison into r_k and returns the
    /// branch to test it with and the truth value when that branch is taken.
    fn compare(&mut self, op: BinOp, k: u8, t: u8) -> (fn(u8, Target) -> AsmInstr, i16) {
        let (swap, jump, taken): (bool, fn(u8, Target) -> AsmInstr, bool) = match op {
            BinOp::Lt => (false, AsmInstr::Jn, true),
            BinOp::Gt => (true, AsmInstr::Jn, true),
            BinOp::Le => (true, AsmInstr::Jn, false),
            BinOp::Ge => (false, AsmInstr::Jn, false),
            BinOp::Eq => (false, AsmInstr::Jz, true),
            BinOp::Ne => (false, AsmInstr::Jz, false),
            _ => unreachable!("not a comparison"),
        };
        if swap {
            self.alu(AluOp::Sub, k, t, k);
        } else {
            self.alu(AluOp::Sub, k, k, t);
        }
        (jump, taken as i16)
    }

    /// Jumps to `target` when `cond` is false, using one conditional branch.
    fn branch_if_false(&mut self, cond: &Expr, target: &str) {
        if let Expr::Bin(op, l, r) = cond {
            if op.is_comparison() {
                self.expr(l, 1);
                self.expr(r, 2);
                let (jump, taken_means_true) = self.compare(*op, 1, 2);
                if taken_means_true == 1 {
                    let skip = self.fresh();
                    self.emit(jump(1, Target::Label(skip.clone())));
                    self.emit(AsmInstr::Jmp(Target::Label(target.into())));
                    self.place(skip);
                } else {
                    self.emit(jump(1, Target::Label(target.into())));
                }
                return;
            }
        }
        self.expr(cond, 1);
        self.emit(AsmInstr::Jz(1, Target::Label(target.into())));
    }

    /// Register r_k <- address of the lvalue.
    fn lvalue_addr(&mut self, lv: &LValue, k: u8) {
        match lv {
            LValue::Var(n) => self.load_addr(k, n),
            LValue::Index(n, i) => {
                self.expr(i, k);
                self.element_addr(n, k);
                self.alu(AluOp::Add, k, ADDR_REG, 0);
            }
        }
    }

    fn stmts(&mut self, stmts: &[Stmt]) {
        for s in stmts {
            self.stmt(s);
        }
    }

    fn stmt(&mut self, s: &Stmt) {
        self.src = Some(s.line);
        match &s.kind {
            StmtKind::Assign(lv, e) => {
                self.expr(e, 1);
                match lv {
                    LValue::Var(n) => self.load_addr(ADDR_REG, n),
                    LValue::Index(n, i) => {
                        self.expr(i, 2);
                        self.element_addr(n, 2);
                    }
                }
                self.emit(AsmInstr::Store {
                    rd: 1,
                    rs: ADDR_REG,
                    off: 0,
                });
            }
            StmtKind::If {
                cond,
                then_body,
                else_body,
            } => {
                let else_l = self.fresh();
                self.branch_if_false(cond, &else_l);
                self.stmts(then_body);
                if else_body.is_empty() {
                    self.place(else_l);
                } else {
                    let end = self.fresh();
                    self.src = Some(s.line);
                    self.emit(AsmInstr::Jmp(Target::Label(end.clone())));
                    self.place(else_l);
                    self.stmts(else_body);
                    self.place(end);
                }
            }
            StmtKind::While { cond, body } => {
                let top = self.fresh();
                let end = self.fresh();
                self.place(top.clone());
                self.branch_if_false(cond, &end);
                self.stmts(body);
                self.src = Some(s.line);
                self.emit(AsmInstr::Jmp(Target::Label(top)));
                self.place(end);
            }
            StmtKind::RepeatUntil { body, cond } => {
                let top = self.fresh();
                self.place(top.clone());
                self.stmts(body);
                self.src = Some(s.line);
                self.branch_if_false(cond, &top);
            }
            StmtKind::Swap(a, b) => {
                self.lvalue_addr(a, 1);
                self.lvalue_addr(b, 2);
                self.emit(AsmInstr::Load { rd: 3, rs: 1, off: 0 });
                self.emit(AsmInstr::Load { rd: 4, rs: 2, off: 0 });
                self.emit(AsmInstr::Store { rd: 4, rs: 1, off: 0 });
                self.emit(AsmInstr::Store { rd: 3, rs: 2, off: 0 });
            }
            StmtKind::Read(lv, port) => {
                self.lvalue_addr(lv, 1);
                self.emit(AsmInstr::In { rd: 2, port: *port });
                self.emit(AsmInstr::Store { rd: 2, rs: 1, off: 0 });
            }
            StmtKind::Write(e, port) => {
                self.expr(e, 1);
                self.emit(AsmInstr::Out { rd: 1, port: *port });
            }
            StmtKind::Halt => self.emit(AsmInstr::Halt),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Layout {
    /// Code from address 0, data after it.
    CodeFirst,
    /// A jump over the variables, which then sit at low addresses.
    DataFirst,
    /// Code first, with every address built in two halves.
    LongAddresses,
}

fn trampoline_label(target: &str) -> String {
    format!("T.{target}")
}

fn generate(p: &CheckedProgram, layout: Layout, trampolines: bool) -> AssemblyProgram {
    let mut g = Gen {
        prog: p,
        lines: Vec::new(),
        pending_labels: Vec::new(),
        src: None,
        next_label: 0,
        long_addresses: layout == Layout::LongAddresses,
        uses_trap: false,
        trampolines: trampolines.then(Vec::new),
    };
    g.stmts(&p.ast.body);
    g.src = None;
    g.emit(AsmInstr::Halt);
    if g.uses_trap {
        g.place(TRAP_LABEL.into());
        g.emit(AsmInstr::Word(TRAP_WORD));
    }
    let body = std::mem::take(&mut g.lines);
    let targets = g.trampolines.take().unwrap_or_default();
    // Low memory, reached by a jump over it: variables, then one JMP per
    // conditional-branch target so every JZ/JN stays within 9-bit reach.
    if layout == Layout::DataFirst || trampolines {
        let start = g.fresh();
        g.emit(AsmInstr::Jmp(Target::Label(start.clone())));
        if layout == Layout::DataFirst {
            for d in &p.ast.decls {
                g.place(d.name.clone());
                for _ in 0..d.kind.size() {
                    g.emit(AsmInstr::Word(0));
                }
            }
        }
        for t in targets {
            g.place(trampoline_label(&t));
            g.emit(AsmInstr::Jmp(Target::Label(t)));
        }
        g.place(start);
        for l in std::mem::take(&mut g.pending_labels) {
            g.lines.push(AsmLine::label(l));
        }
    }
    g.lines.extend(body);
    let data = if layout == Layout::DataFirst {
        Vec::new()
    } else {
        p.ast
            .decls
            .iter()
            .map(|d| DataDirective {
                label: d.name.clone(),
                init: vec![0; d.kind.size() as usize],
            })
            .collect()
    };
    AssemblyProgram {
        lines: g.lines,
        data,
        entry: None,
    }
}

/// Words from address 0 through the last trampoline; every one of them must
/// be reachable by a conditional branch.
fn low_prefix_words(asm: &AssemblyProgram) -> usize {
    asm.lines
        .iter()
        .filter(|l| l.instr.is_some())
        .enumerate()
        .filter(|(_, l)| l.label.as_deref().is_some_and(|n| n.starts_with("T.")))
        .map(|(k, _)| k + 1)
        .last()
        .unwrap_or(0)
}

/// Compiles a checked program to assembly. Every emitted instruction carries
/// the line of the statement that produced it; the closing `HALT` and trap
/// word carry none.
///
/// Variables are addressed with a single `LOADI` whenever they can all sit
/// below address 256: after the code when it is short, otherwise ahead of
/// it behind a jump. Only when the variables alone do not fit are addresses
/// built in two halves.
///
/// Code longer than conditional branches can reach sends every `JZ`/`JN`
/// through a `JMP` trampoline placed in low memory.
pub fn compile(p: &CheckedProgram) -> Result<AssemblyProgram, CompileError> {
    let mut asm = generate(p, Layout::CodeFirst, false);
    let mut layout = Layout::CodeFirst;
    if asm.code_words() + asm.data_words() > 256 {
        let data: usize = p.ast.decls.iter().map(|d| d.kind.size() as usize).sum();
        layout = if data < 256 {
            Layout::DataFirst
        } else {
            Layout::LongAddresses
        };
        asm = generate(p, layout, false);
    }
    if asm.code_words() > 512 {
        asm = generate(p, layout, true);
        let prefix = low_prefix_words(&asm);
        if prefix > 512 {
            return Err(CompileError::BranchRangeExceeded(prefix));
        }
    }
    let total = asm.code_words() + asm.data_words();
    if total > MEM_WORDS {
        return Err(CompileError::CapacityExceeded(total));
    }
    Ok(asm)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lang::{analyze, parse_str};

    fn compile_src(src: &str) -> AssemblyProgram {
        compile(&analyze(parse_str(src).unwrap()).unwrap()).unwrap()
    }

    #[test]
    fn straight_line_lowering() {
        let a = compile_src("var x; x = 1 + 2;");
        let text: Vec<String> = a.instructions().map(|i| i.to_string()).collect();
        assert_eq!(
            text,
            [
                "LOADI r1, 1",
                "LOADI r2, 2",
                "ADD r1, r1, r2",
                "LOADI r6, x",
                "STORE r1, [r6+0]",
                "HALT"
            ]
        );
        assert!(a.lines[..5].iter().all(|l| l.source_line == Some(1)));
    }

    #[test]
    fn if_uses_one_conditional_branch() {
        let a = compile_src("var x;\nif x > 0 { write x; }");
        let branches = a.instructions().filter(|i| i.is_conditional_branch()).count();
        assert_eq!(branches, 1);
        assert!(a.instructions().any(|i| matches!(i, AsmInstr::Alu { op: AluOp::Sub, .. })));
    }

    #[test]
    fn large_programs_switch_to_long_addresses() {
        let a = compile_src("var big[300]; var x; x = 1;");
        assert!(a.instructions().any(|i| matches!(i, AsmInstr::LoadI { imm: Imm::Hi(_), .. })));
    }

    #[test]
    fn long_code_puts_variables_first() {
        let body = "x = x + 1;\n".repeat(60);
        let a = compile_src(&format!("var x; var y[3];\n{body}"));
        assert!(a.data.is_empty());
        assert!(matches!(a.lines[0].instr, Some(AsmInstr::Jmp(_))));
        assert_eq!(a.lines[1].label.as_deref(), Some("x"));
        assert!(!a.instructions().any(|i| matches!(i, AsmInstr::LoadI { imm: Imm::Hi(_), .. })));
        let img = crate::compiler::assemble(&a).unwrap();
        assert_eq!(img.symbol("x"), Some(1));
        assert_eq!(img.symbol("y"), Some(2));
    }

    #[test]
    fn long_code_branches_through_trampolines() {
        let body = "if x < 5 { x = x + 1; } else { x = x - 300; }\n".repeat(40);
        let src = format!("var x; var a[4];\n{body}write x;");
        let a = compile_src(&src);
        assert!(a.code_words() > 512);
        let img = crate::compiler::assemble(&a).unwrap();
        let mut x: i16 = 0;
        for _ in 0..40 {
            x = if x < 5 { x + 1 } else { x.wrapping_sub(300) };
        }
        let mut input = crate::isa_vm::InputProvider::new();
        let r = crate::isa_vm::run(&img, &mut input, 100_000).unwrap();
        assert_eq!(r.outputs(), [(0, x as u16)]);
        let text = a.to_text();
        assert!(text.contains("T.L."));
        let reparsed = AssemblyProgram::parse(&text).unwrap();
        assert_eq!(crate::compiler::assemble(&reparsed).unwrap().words, img.words);
    }

    #[test]
    fn capacity_is_checked() {
        let p = analyze(parse_str("var a[4000]; var b[200];").unwrap()).unwrap();
        assert!(matches!(compile(&p), Err(CompileError::CapacityExceeded(_))));
    }
}
