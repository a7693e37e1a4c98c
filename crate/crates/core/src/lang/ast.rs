//! Syntax tree of the mini language.
//!
//! Equality on [`Stmt`] and [`Decl`] is structural: source line numbers are
//! carried along for diagnostics and source maps but never compared.

use std::fmt;

/// A `.mhl` source file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SourceProgram {
    pub name: String,
    pub text: String,
}

impl SourceProgram {
    pub fn new(name: impl Into<String>, text: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            text: text.into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum VarKind {
    Scalar,
    Array(u16),
}

impl VarKind {
    /// Words of storage the variable occupies.
    pub fn size(self) -> u16 {
        match self {
            VarKind::Scalar => 1,
            VarKind::Array(n) => n,
        }
    }
}

#[derive(Debug, Clone, Eq)]
pub struct Decl {
    pub name: String,
    pub kind: VarKind,
    pub line: u32,
}

impl PartialEq for Decl {
    fn eq(&self, other: &Self) -> bool {
        self.name == other.name && self.kind == other.kind
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BinOp {
    Add,
    Sub,
    BitAnd,
    BitOr,
    BitXor,
    Lt,
    Gt,
    Eq,
    Le,
    Ge,
    Ne,
    And,
    Or,
}

impl BinOp {
    pub fn symbol(self) -> &'static str {
        match self {
            BinOp::Add => "+",
            BinOp::Sub => "-",
            BinOp::BitAnd => "&",
            BinOp::BitOr => "|",
            BinOp::BitXor => "^",
            BinOp::Lt => "<",
            BinOp::Gt => ">",
            BinOp::Eq => "=",
            BinOp::Le => "<=",
            BinOp::Ge => ">=",
            BinOp::Ne => "!=",
            BinOp::And => "and",
            BinOp::Or => "or",
        }
    }

    pub fn is_comparison(self) -> bool {
        matches!(
            self,
            BinOp::Lt | BinOp::Gt | BinOp::Eq | BinOp::Le | BinOp::Ge | BinOp::Ne
        )
    }

    /// Binding strength; larger binds tighter.
    pub fn precedence(self) -> u8 {
        match self {
            BinOp::Or => 1,
            BinOp::And => 2,
            BinOp::Lt | BinOp::Gt | BinOp::Eq | BinOp::Le | BinOp::Ge | BinOp::Ne => 4,
            BinOp::BitOr => 5,
            BinOp::BitXor => 6,
            BinOp::BitAnd => 7,
            BinOp::Add | BinOp::Sub => 8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Expr {
    /// Literal word (16-bit two's complement).
    Int(u16),
    Var(String),
    Index(String, Box<Expr>),
    Bin(BinOp, Box<Expr>, Box<Expr>),
    Not(Box<Expr>),
}

impl Expr {
    pub fn int(v: i32) -> Expr {
        Expr::Int(v as u16)
    }

    pub fn var(name: &str) -> Expr {
        Expr::Var(name.to_string())
    }

    pub fn bin(op: BinOp, l: Expr, r: Expr) -> Expr {
        Expr::Bin(op, Box::new(l), Box::new(r))
    }

    pub fn index(name: &str, e: Expr) -> Expr {
        Expr::Index(name.to_string(), Box::new(e))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LValue {
    Var(String),
    Index(String, Box<Expr>),
}

impl LValue {
    pub fn name(&self) -> &str {
        match self {
            LValue::Var(n) | LValue::Index(n, _) => n,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum StmtKind {
    Assign(LValue, Expr),
    If {
        cond: Expr,
        then_body: Vec<Stmt>,
        else_body: Vec<Stmt>,
    },
    While {
        cond: Expr,
        body: Vec<Stmt>,
    },
    RepeatUntil {
        body: Vec<Stmt>,
        cond: Expr,
    },
    Swap(LValue, LValue),
    Read(LValue, u8),
    Write(Expr, u8),
    Halt,
}

#[derive(Debug, Clone, Eq)]
pub struct Stmt {
    pub kind: StmtKind,
    pub line: u32,
}

impl PartialEq for Stmt {
    fn eq(&self, other: &Self) -> bool {
        self.kind == other.kind
    }
}

impl Stmt {
    pub fn new(kind: StmtKind, line: u32) -> Self {
        Self { kind, line }
    }

    /// Nested statement lists, in source order.
    pub fn children(&self) -> Vec<&[Stmt]> {
        match &self.kind {
            StmtKind::If {
                then_body,
                else_body,
                ..
            } => vec![then_body, else_body],
            StmtKind::While { body, .. } | StmtKind::RepeatUntil { body, .. } => vec![body],
            _ => Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Ast {
    pub decls: Vec<Decl>,
    pub body: Vec<Stmt>,
}

impl Ast {
    /// Visit every statement in pre-order.
    pub fn walk<'a>(&'a self, f: &mut impl FnMut(&'a Stmt)) {
        fn go<'a>(stmts: &'a [Stmt], f: &mut impl FnMut(&'a Stmt)) {
            for s in stmts {
                f(s);
                for c in s.children() {
                    go(c, f);
                }
            }
        }
        go(&self.body, f);
    }

    pub fn statement_count(&self) -> usize {
        let mut n = 0;
        self.walk(&mut |_| n += 1);
        n
    }
}

impl fmt::Display for Ast {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&crate::lang::pretty_print(self).text)
    }
}
