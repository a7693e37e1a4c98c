use super::ast::*;
use std::fmt::Write;

const NOT_PREC: u8 = 3;
const ATOM_PREC: u8 = 10;

fn prec(e: &Expr) -> u8 {
    match e {
        Expr::Bin(op, ..) => op.precedence(),
        Expr::Not(_) => NOT_PREC,
        _ => ATOM_PREC,
    }
}

fn expr(e: &Expr, out: &mut String) {
    match e {
        Expr::Int(v) => {
            let _ = write!(out, "{}", *v as i16);
        }
        Expr::Var(n) => out.push_str(n),
        Expr::Index(n, i) => {
            out.push_str(n);
            out.push('[');
            expr(i, out);
            out.push(']');
        }
        Expr::Not(inner) => {
            out.push_str("not ");
            child(inner, prec(inner) < NOT_PREC, out);
        }
        Expr::Bin(op, l, r) => {
            let p = op.precedence();
            let lp = prec(l);
            child(l, lp < p || (lp == p && op.is_comparison()), out);
            let _ = write!(out, " {} ", op.symbol());
            child(r, prec(r) <= p, out);
        }
    }
}

fn child(e: &Expr, paren: bool, out: &mut String) {
    if paren {
        out.push('(');
        expr(e, out);
        out.push(')');
    } else {
        expr(e, out);
    }
}

fn lvalue(lv: &LValue, out: &mut String) {
    match lv {
        LValue::Var(n) => out.push_str(n),
        LValue::Index(n, i) => {
            out.push_str(n);
            out.push('[');
            expr(i, out);
            out.push(']');
        }
    }
}

fn block(stmts: &[Stmt], depth: usize, out: &mut String) {
    out.push_str("{\n");
    for s in stmts {
        stmt(s, depth + 1, out);
    }
    out.push_str(&"    ".repeat(depth));
    out.push('}');
}

fn stmt(s: &Stmt, depth: usize, out: &mut String) {
    out.push_str(&"    ".repeat(depth));
    match &s.kind {
        StmtKind::Assign(lv, e) => {
            lvalue(lv, out);
            out.push_str(" = ");
            expr(e, out);
            out.push(';');
        }
        StmtKind::If {
            cond,
            then_body,
            else_body,
        } => {
            out.push_str("if ");
            expr(cond, out);
            out.push(' ');
            block(then_body, depth, out);
            if !else_body.is_empty() {
                out.push_str(" else ");
                block(else_body, depth, out);
            }
        }
        StmtKind::While { cond, body } => {
            out.push_str("while ");
            expr(cond, out);
            out.push(' ');
            block(body, depth, out);
        }
        StmtKind::RepeatUntil { body, cond } => {
            out.push_str("repeat ");
            block(body, depth, out);
            out.push_str(" until ");
            expr(cond, out);
            out.push(';');
        }
        StmtKind::Swap(a, b) => {
            out.push_str("swap ");
            lvalue(a, out);
            out.push_str(", ");
            lvalue(b, out);
            out.push(';');
        }
        StmtKind::Read(lv, port) => {
            out.push_str("read ");
            lvalue(lv, out);
            if *port != 0 {
                let _ = write!(out, " from {port}");
            }
            out.push(';');
        }
        StmtKind::Write(e, port) => {
            out.push_str("write ");
            expr(e, out);
            if *port != 0 {
                let _ = write!(out, " to {port}");
            }
            out.push(';');
        }
        StmtKind::Halt => out.push_str("halt;"),
    }
    out.push('\n');
}

/// Renders an expression in canonical concrete syntax.
pub fn expr_to_string(e: &Expr) -> String {
    let mut s = String::new();
    expr(e, &mut s);
    s
}

/// Canonical source rendering; re-parses to a structurally equal tree.
pub fn pretty_print(ast: &Ast) -> SourceProgram {
    let mut out = String::new();
    for d in &ast.decls {
        match d.kind {
            VarKind::Scalar => {
                let _ = writeln!(out, "var {};", d.name);
            }
            VarKind::Array(n) => {
                let _ = writeln!(out, "var {}[{}];", d.name, n);
            }
        }
    }
    for s in &ast.body {
        stmt(s, 0, &mut out);
    }
    SourceProgram::new("pretty", out)
}
