//! Hand-written lexer and recursive-descent parser.

use super::ast::*;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("syntax error at {line}:{col}: expected {expected}")]
pub struct SyntaxError {
    pub line: u32,
    pub col: u32,
    pub expected: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Tok {
    Ident(String),
    Int(u32),
    Kw(&'static str),
    Sym(&'static str),
    Eof,
}

impl Tok {
    fn describe(&self) -> String {
        match self {
            Tok::Ident(s) => format!("identifier `{s}`"),
            Tok::Int(v) => format!("integer {v}"),
            Tok::Kw(k) => format!("`{k}`"),
            Tok::Sym(s) => format!("`{s}`"),
            Tok::Eof => "end of input".into(),
        }
    }
}

const KEYWORDS: &[&str] = &[
    "var", "if", "else", "while", "repeat", "until", "swap", "read", "write", "halt", "and", "or",
    "not", "from", "to", "for",
];

// Longest symbols first so that `<=` wins over `<`.
const SYMBOLS: &[&str] = &[
    "<=", ">=", "!=", "==", ";", ",", "[", "]", "{", "}", "(", ")", "=", "+", "-", "<", ">", "&",
    "|", "^",
];

#[derive(Debug, Clone)]
struct Token {
    tok: Tok,
    line: u32,
    col: u32,
}

fn lex(text: &str) -> Result<Vec<Token>, SyntaxError> {
    let mut out = Vec::new();
    let chars: Vec<char> = text.chars().collect();
    let (mut i, mut line, mut col) = (0usize, 1u32, 1u32);
    while i < chars.len() {
        let c = chars[i];
        if c == '\n' {
            i += 1;
            line += 1;
            col = 1;
            continue;
        }
        if c.is_whitespace() {
            i += 1;
            col += 1;
            continue;
        }
        if c == '#' || (c == '/' && chars.get(i + 1) == Some(&'/')) {
            while i < chars.len() && chars[i] != '\n' {
                i += 1;
            }
            continue;
        }
        let (start_line, start_col) = (line, col);
        if c.is_ascii_alphabetic() || c == '_' {
            let s = i;
            while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                i += 1;
            }
            col += (i - s) as u32;
            let word: String = chars[s..i].iter().collect();
            let tok = match KEYWORDS.iter().find(|k| **k == word) {
                Some(k) => Tok::Kw(k),
                None => Tok::Ident(word),
            };
            out.push(Token {
                tok,
                line: start_line,
                col: start_col,
            });
            continue;
        }
        if c.is_ascii_digit() {
            let s = i;
            while i < chars.len() && chars[i].is_ascii_alphanumeric() {
                i += 1;
            }
            col += (i - s) as u32;
            let lit: String = chars[s..i].iter().collect();
            let parsed = if let Some(hex) = lit.strip_prefix("0x") {
                u32::from_str_radix(hex, 16).ok()
            } else {
                lit.parse::<u32>().ok()
            };
            match parsed {
                Some(v) if v <= 0xFFFF => out.push(Token {
                    tok: Tok::Int(v),
                    line: start_line,
                    col: start_col,
                }),
                _ => {
                    return Err(SyntaxError {
                        line: start_line,
                        col: start_col,
                        expected: "integer literal in 0..=65535".into(),
                    })
                }
            }
            continue;
        }
        let rest: String = chars[i..chars.len().min(i + 2)].iter().collect();
        match SYMBOLS.iter().find(|s| rest.starts_with(**s)) {
            Some(sym) => {
                i += sym.len();
                col += sym.len() as u32;
                out.push(Token {
                    tok: Tok::Sym(sym),
                    line: start_line,
                    col: start_col,
                });
            }
            None => {
                return Err(SyntaxError {
                    line,
                    col,
                    expected: format!("a token, found {c:?}"),
                })
            }
        }
    }
    out.push(Token {
        tok: Tok::Eof,
        line,
        col,
    });
    Ok(out)
}

struct Parser {
    toks: Vec<Token>,
    pos: usize,
}

type PResult<T> = Result<T, SyntaxError>;

impl Parser {
    fn peek(&self) -> &Tok {
        &self.toks[self.pos].tok
    }

    fn line(&self) -> u32 {
        self.toks[self.pos].line
    }

    fn bump(&mut self) -> Tok {
        let t = self.toks[self.pos].tok.clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn fail<T>(&self, expected: &str) -> PResult<T> {
        let t = &self.toks[self.pos];
        Err(SyntaxError {
            line: t.line,
            col: t.col,
            expected: format!("{expected}, found {}", t.tok.describe()),
        })
    }

    fn is_sym(&self, s: &str) -> bool {
        matches!(self.peek(), Tok::Sym(x) if *x == s)
    }

    fn is_kw(&self, k: &str) -> bool {
        matches!(self.peek(), Tok::Kw(x) if *x == k)
    }

    fn expect_sym(&mut self, s: &str) -> PResult<()> {
        if self.is_sym(s) {
            self.bump();
            Ok(())
        } else {
            self.fail(&format!("`{s}`"))
        }
    }

    fn expect_kw(&mut self, k: &str) -> PResult<()> {
        if self.is_kw(k) {
            self.bump();
            Ok(())
        } else {
            self.fail(&format!("`{k}`"))
        }
    }

    fn ident(&mut self) -> PResult<String> {
        match self.peek().clone() {
            Tok::Ident(s) => {
                self.bump();
                Ok(s)
            }
            _ => self.fail("identifier"),
        }
    }

    fn int(&mut self) -> PResult<u32> {
        match *self.peek() {
            Tok::Int(v) => {
                self.bump();
                Ok(v)
            }
            _ => self.fail("integer literal"),
        }
    }

    fn program(&mut self) -> PResult<Ast> {
        let mut decls = Vec::new();
        while self.is_kw("var") {
            let line = self.line();
            self.bump();
            let name = self.ident()?;
            let kind = if self.is_sym("[") {
                self.bump();
                let n = self.int()?;
                if n == 0 {
                    self.pos -= 1;
                    return self.fail("array length of at least 1");
                }
                self.expect_sym("]")?;
                VarKind::Array(n as u16)
            } else {
                VarKind::Scalar
            };
            self.expect_sym(";")?;
            decls.push(Decl { name, kind, line });
        }
        let mut body = Vec::new();
        while *self.peek() != Tok::Eof {
            self.stmt_into(&mut body)?;
        }
        Ok(Ast { decls, body })
    }

    fn block(&mut self) -> PResult<Vec<Stmt>> {
        self.expect_sym("{")?;
        let mut out = Vec::new();
        while !self.is_sym("}") {
            if *self.peek() == Tok::Eof {
                return self.fail("`}`");
            }
            self.stmt_into(&mut out)?;
        }
        self.bump();
        Ok(out)
    }

    fn lvalue(&mut self) -> PResult<LValue> {
        let name = self.ident()?;
        if self.is_sym("[") {
            self.bump();
            let e = self.expr()?;
            self.expect_sym("]")?;
            Ok(LValue::Index(name, Box::new(e)))
        } else {
            Ok(LValue::Var(name))
        }
    }

    fn port(&mut self, kw: &str) -> PResult<u8> {
        if self.is_kw(kw) {
            self.bump();
            let p = self.int()?;
            if p > 7 {
                self.pos -= 1;
                return self.fail("port number 0..=7");
            }
            Ok(p as u8)
        } else {
            Ok(0)
        }
    }

    /// Parses one statement; `for` expands into two.
    fn stmt_into(&mut self, out: &mut Vec<Stmt>) -> PResult<()> {
        let line = self.line();
        let kind = match self.peek().clone() {
            Tok::Kw("if") => {
                self.bump();
                let cond = self.expr()?;
                let then_body = self.block()?;
                let else_body = if self.is_kw("else") {
                    self.bump();
                    self.block()?
                } else {
                    Vec::new()
                };
                StmtKind::If {
                    cond,
                    then_body,
                    else_body,
                }
            }
            Tok::Kw("while") => {
                self.bump();
                let cond = self.expr()?;
                let body = self.block()?;
                StmtKind::While { cond, body }
            }
            Tok::Kw("repeat") => {
                self.bump();
                let body = self.block()?;
                self.expect_kw("until")?;
                let cond = self.expr()?;
                self.expect_sym(";")?;
                StmtKind::RepeatUntil { body, cond }
            }
            Tok::Kw("for") => {
                self.bump();
                let var = self.ident()?;
                self.expect_sym("=")?;
                let from = self.expr()?;
                self.expect_kw("to")?;
                let to = self.expr()?;
                let mut body = self.block()?;
                body.push(Stmt::new(
                    StmtKind::Assign(
                        LValue::Var(var.clone()),
                        Expr::bin(BinOp::Add, Expr::Var(var.clone()), Expr::Int(1)),
                    ),
                    line,
                ));
                out.push(Stmt::new(
                    StmtKind::Assign(LValue::Var(var.clone()), from),
                    line,
                ));
                StmtKind::While {
                    cond: Expr::bin(BinOp::Le, Expr::Var(var), to),
                    body,
                }
            }
            Tok::Kw("swap") => {
                self.bump();
                let a = self.lvalue()?;
                self.expect_sym(",")?;
                let b = self.lvalue()?;
                self.expect_sym(";")?;
                StmtKind::Swap(a, b)
            }
            Tok::Kw("read") => {
                self.bump();
                let lv = self.lvalue()?;
                let port = self.port("from")?;
                self.expect_sym(";")?;
                StmtKind::Read(lv, port)
            }
            Tok::Kw("write") => {
                self.bump();
                let e = self.expr()?;
                let port = self.port("to")?;
                self.expect_sym(";")?;
                StmtKind::Write(e, port)
            }
            Tok::Kw("halt") => {
                self.bump();
                self.expect_sym(";")?;
                StmtKind::Halt
            }
            Tok::Ident(_) => {
                let lv = self.lvalue()?;
                self.expect_sym("=")?;
                let e = self.expr()?;
                self.expect_sym(";")?;
                StmtKind::Assign(lv, e)
            }
            _ => return self.fail("statement"),
        };
        out.push(Stmt::new(kind, line));
        Ok(())
    }

    fn expr(&mut self) -> PResult<Expr> {
        self.or_expr()
    }

    fn or_expr(&mut self) -> PResult<Expr> {
        let mut l = self.and_expr()?;
        while self.is_kw("or") {
            self.bump();
            let r = self.and_expr()?;
            l = Expr::bin(BinOp::Or, l, r);
        }
        Ok(l)
    }

    fn and_expr(&mut self) -> PResult<Expr> {
        let mut l = self.not_expr()?;
        while self.is_kw("and") {
            self.bump();
            let r = self.not_expr()?;
            l = Expr::bin(BinOp::And, l, r);
        }
        Ok(l)
    }

    fn not_expr(&mut self) -> PResult<Expr> {
        if self.is_kw("not") {
            self.bump();
            let e = self.not_expr()?;
            return Ok(Expr::Not(Box::new(e)));
        }
        self.cmp_expr()
    }

    fn cmp_expr(&mut self) -> PResult<Expr> {
        let l = self.binary_level(0)?;
        let op = match self.peek() {
            Tok::Sym("<") => BinOp::Lt,
            Tok::Sym(">") => BinOp::Gt,
            Tok::Sym("=") | Tok::Sym("==") => BinOp::Eq,
            Tok::Sym("<=") => BinOp::Le,
            Tok::Sym(">=") => BinOp::Ge,
            Tok::Sym("!=") => BinOp::Ne,
            _ => return Ok(l),
        };
        self.bump();
        let r = self.binary_level(0)?;
        Ok(Expr::bin(op, l, r))
    }

    /// Left-associative levels `|`, `^`, `&`, then `+`/`-`.
    fn binary_level(&mut self, level: usize) -> PResult<Expr> {
        const LEVELS: &[&[(&str, BinOp)]] = &[
            &[("|", BinOp::BitOr)],
            &[("^", BinOp::BitXor)],
            &[("&", BinOp::BitAnd)],
            &[("+", BinOp::Add), ("-", BinOp::Sub)],
        ];
        if level == LEVELS.len() {
            return self.primary();
        }
        let mut l = self.binary_level(level + 1)?;
        loop {
            let op = LEVELS[level]
                .iter()
                .find(|(s, _)| self.is_sym(s))
                .map(|(_, op)| *op);
            match op {
                Some(op) => {
                    self.bump();
                    let r = self.binary_level(level + 1)?;
                    l = Expr::bin(op, l, r);
                }
                None => return Ok(l),
            }
        }
    }

    fn primary(&mut self) -> PResult<Expr> {
        match self.peek().clone() {
            Tok::Int(v) => {
                self.bump();
                Ok(Expr::Int(v as u16))
            }
            Tok::Sym("-") => {
                self.bump();
                let v = self.int()?;
                Ok(Expr::Int((v as u16).wrapping_neg()))
            }
            Tok::Sym("(") => {
                self.bump();
                let e = self.expr()?;
                self.expect_sym(")")?;
                Ok(e)
            }
            Tok::Ident(name) => {
                self.bump();
                if self.is_sym("[") {
                    self.bump();
                    let e = self.expr()?;
                    self.expect_sym("]")?;
                    Ok(Expr::Index(name, Box::new(e)))
                } else {
                    Ok(Expr::Var(name))
                }
            }
            _ => self.fail("expression"),
        }
    }
}

/// Parses program text.
pub fn parse(src: &SourceProgram) -> Result<Ast, SyntaxError> {
    parse_str(&src.text)
}

pub fn parse_str(text: &str) -> Result<Ast, SyntaxError> {
    let toks = lex(text)?;
    let mut p = Parser { toks, pos: 0 };
    p.program()
}

/// Parses raw bytes; invalid UTF-8 is reported as a syntax error at the
/// offending position.
pub fn parse_bytes(bytes: &[u8]) -> Result<Ast, SyntaxError> {
    match std::str::from_utf8(bytes) {
        Ok(s) => parse_str(s),
        Err(e) => {
            let good = &bytes[..e.valid_up_to()];
            let line = 1 + good.iter().filter(|b| **b == b'\n').count() as u32;
            let last_nl = good.iter().rposition(|b| *b == b'\n').map_or(0, |p| p + 1);
            let col = 1 + String::from_utf8_lossy(&good[last_nl..]).chars().count() as u32;
            Err(SyntaxError {
                line,
                col,
                expected: "valid UTF-8".into(),
            })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_program() {
        let ast = parse_str("var x; x = 1 + 2;").unwrap();
        assert_eq!(ast.decls.len(), 1);
        assert_eq!(ast.body.len(), 1);
        assert_eq!(
            ast.body[0].kind,
            StmtKind::Assign(
                LValue::Var("x".into()),
                Expr::bin(BinOp::Add, Expr::Int(1), Expr::Int(2))
            )
        );
    }

    #[test]
    fn missing_expression_reports_position() {
        let e = parse_str("x = ;").unwrap_err();
        assert_eq!((e.line, e.col), (1, 5));
    }

    #[test]
    fn error_on_second_line() {
        let e = parse_str("var x;\nx = 1 +;").unwrap_err();
        assert_eq!((e.line, e.col), (2, 8));
    }

    #[test]
    fn for_desugars_to_while() {
        let ast = parse_str("var i; for i = 1 to 3 { write i; }").unwrap();
        assert_eq!(ast.body.len(), 2);
        assert!(matches!(ast.body[1].kind, StmtKind::While { .. }));
    }

    #[test]
    fn precedence_and_ports() {
        let ast = parse_str("var a; var b; read a from 2; write a + 1 < b and not b to 3;").unwrap();
        assert_eq!(ast.body[0].kind, StmtKind::Read(LValue::Var("a".into()), 2));
        match &ast.body[1].kind {
            StmtKind::Write(Expr::Bin(BinOp::And, l, r), 3) => {
                assert!(matches!(**l, Expr::Bin(BinOp::Lt, _, _)));
                assert!(matches!(**r, Expr::Not(_)));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn chained_comparison_rejected() {
        assert!(parse_str("var a; a = 1 < 2 < 3;").is_err());
    }

    #[test]
    fn negative_literal_and_overflow() {
        let ast = parse_str("var a; a = -5;").unwrap();
        assert_eq!(
            ast.body[0].kind,
            StmtKind::Assign(LValue::Var("a".into()), Expr::Int(0xFFFB))
        );
        assert!(parse_str("var a; a = 70000;").is_err());
        assert!(parse_str("var a[0];").is_err());
    }

    #[test]
    fn invalid_utf8_is_a_syntax_error() {
        let e = parse_bytes(b"var x;\nx = \xff;").unwrap_err();
        assert_eq!((e.line, e.col), (2, 5));
    }
}
