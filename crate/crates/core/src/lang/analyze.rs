use super::ast::*;
use std::collections::BTreeMap;
use thiserror::Error;

/// Registers r1..r5 hold expression temporaries; r6 and r7 are reserved for
/// address arithmetic, so no expression may need more than five.
pub const MAX_EXPR_REGISTERS: usize = 5;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SemanticError {
    #[error("line {line}: undeclared variable `{name}`")]
    UndeclaredVariable { name: String, line: u32 },
    #[error("line {line}: duplicate declaration of `{name}`")]
    DuplicateDeclaration { name: String, line: u32 },
    #[error("line {line}: `{name}` used as {used} but declared as {declared}")]
    KindMismatch {
        name: String,
        line: u32,
        used: &'static str,
        declared: &'static str,
    },
    #[error("line {line}: expression needs {needed} registers (limit {MAX_EXPR_REGISTERS})")]
    ExpressionTooDeep { line: u32, needed: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Symbol {
    pub kind: VarKind,
    pub size: u16,
    pub line: u32,
}

/// A program that passed semantic checks.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CheckedProgram {
    pub ast: Ast,
    pub symbols: BTreeMap<String, Symbol>,
    /// Source line of each statement, indexed by pre-order position.
    pub source_map: Vec<u32>,
}

/// Registers the naive stack allocator needs to evaluate `e`.
pub fn register_need(e: &Expr) -> usize {
    match e {
        Expr::Int(_) | Expr::Var(_) => 1,
        Expr::Index(_, i) => register_need(i),
        Expr::Not(inner) => register_need(inner),
        Expr::Bin(_, l, r) => register_need(l).max(1 + register_need(r)),
    }
}

struct Checker<'a> {
    symbols: &'a BTreeMap<String, Symbol>,
}

impl Checker<'_> {
    fn lookup(&self, name: &str, indexed: bool, line: u32) -> Result<(), SemanticError> {
        let sym = self
            .symbols
            .get(name)
            .ok_or_else(|| SemanticError::UndeclaredVariable {
                name: name.to_string(),
                line,
            })?;
        let declared_array = matches!(sym.kind, VarKind::Array(_));
        if declared_array != indexed {
            let word = |a: bool| if a { "array" } else { "scalar" };
            return Err(SemanticError::KindMismatch {
                name: name.to_string(),
                line,
                used: word(indexed),
                declared: word(declared_array),
            });
        }
        Ok(())
    }

    fn expr(&self, e: &Expr, line: u32) -> Result<(), SemanticError> {
        match e {
            Expr::Int(_) => Ok(()),
            Expr::Var(n) => self.lookup(n, false, line),
            Expr::Index(n, i) => {
                self.lookup(n, true, line)?;
                self.expr(i, line)
            }
            Expr::Not(inner) => self.expr(inner, line),
            Expr::Bin(_, l, r) => {
                self.expr(l, line)?;
                self.expr(r, line)
            }
        }
    }

    fn top_expr(&self, e: &Expr, line: u32) -> Result<(), SemanticError> {
        self.expr(e, line)?;
        let needed = register_need(e);
        if needed > MAX_EXPR_REGISTERS {
            return Err(SemanticError::ExpressionTooDeep { line, needed });
        }
        Ok(())
    }

    /// Index expressions of stores are evaluated while one register already
    /// holds the stored value, so they get one register less.
    fn lvalue(&self, lv: &LValue, line: u32, reserved: usize) -> Result<(), SemanticError> {
        match lv {
            LValue::Var(n) => self.lookup(n, false, line),
            LValue::Index(n, i) => {
                self.lookup(n, true, line)?;
                self.expr(i, line)?;
                let needed = register_need(i) + reserved;
                if needed > MAX_EXPR_REGISTERS {
                    return Err(SemanticError::ExpressionTooDeep { line, needed });
                }
                Ok(())
            }
        }
    }

    fn stmts(&self, stmts: &[Stmt], map: &mut Vec<u32>) -> Result<(), SemanticError> {
        for s in stmts {
            map.push(s.line);
            let line = s.line;
            match &s.kind {
                StmtKind::Assign(lv, e) => {
                    self.top_expr(e, line)?;
                    self.lvalue(lv, line, 1)?;
                }
                StmtKind::If {
                    cond,
                    then_body,
                    else_body,
                } => {
                    self.top_expr(cond, line)?;
                    self.stmts(then_body, map)?;
                    self.stmts(else_body, map)?;
                }
                StmtKind::While { cond, body } => {
                    self.top_expr(cond, line)?;
                    self.stmts(body, map)?;
                }
                StmtKind::RepeatUntil { body, cond } => {
                    self.stmts(body, map)?;
                    self.top_expr(cond, line)?;
                }
                StmtKind::Swap(a, b) => {
                    // Both addresses are live at once, plus two loaded values.
                    self.lvalue(a, line, 0)?;
                    self.lvalue(b, line, 1)?;
                }
                StmtKind::Read(lv, _) => self.lvalue(lv, line, 1)?,
                StmtKind::Write(e, _) => self.top_expr(e, line)?,
                StmtKind::Halt => {}
            }
        }
        Ok(())
    }
}

/// Builds the symbol table and rejects undeclared or duplicate names.
pub fn analyze(ast: Ast) -> Result<CheckedProgram, SemanticError> {
    let mut symbols = BTreeMap::new();
    for d in &ast.decls {
        if symbols.contains_key(&d.name) {
            return Err(SemanticError::DuplicateDeclaration {
                name: d.name.clone(),
                line: d.line,
            });
        }
        symbols.insert(
            d.name.clone(),
            Symbol {
                kind: d.kind,
                size: d.kind.size(),
                line: d.line,
            },
        );
    }
    let mut source_map = Vec::new();
    Checker { symbols: &symbols }.stmts(&ast.body, &mut source_map)?;
    Ok(CheckedProgram {
        ast,
        symbols,
        source_map,
    })
}
