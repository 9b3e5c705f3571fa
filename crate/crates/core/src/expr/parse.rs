//! Recursive-descent parser for the dynamics grammar:
//!
//! ```text
//! expr   := term (('+'|'-') term)*
//! term   := factor (('*'|'/') factor)*
//! factor := ['-'] atom ['^' integer]
//! atom   := number | ident | func '(' expr ')' | '(' expr ')'
//! func   := sin | cos | tan | exp | ln | sqrt
//! ```

use super::{BinOp, Expr, ExprError, Func};

#[derive(Clone, Debug, PartialEq)]
enum Tok {
    Num(f64, bool),
    Ident(String),
    Op(char),
    LParen,
    RParen,
}

struct Lexer<'a> {
    src: &'a str,
    pos: usize,
}

impl<'a> Lexer<'a> {
    fn tokens(src: &'a str) -> Result<Vec<(Tok, usize)>, ExprError> {
        let mut lx = Lexer { src, pos: 0 };
        let mut out = Vec::new();
        while let Some(t) = lx.next_token()? {
            out.push(t);
        }
        Ok(out)
    }

    fn peek(&self) -> Option<char> {
        self.src[self.pos..].chars().next()
    }

    fn next_token(&mut self) -> Result<Option<(Tok, usize)>, ExprError> {
        while self.peek().is_some_and(char::is_whitespace) {
            self.pos += 1;
        }
        let start = self.pos;
        let Some(c) = self.peek() else { return Ok(None) };
        let tok = match c {
            '+' | '-' | '*' | '/' | '^' => {
                self.pos += 1;
                Tok::Op(c)
            }
            '(' => {
                self.pos += 1;
                Tok::LParen
            }
            ')' => {
                self.pos += 1;
                Tok::RParen
            }
            c if c.is_ascii_digit() || c == '.' => self.number(start)?,
            c if c.is_ascii_alphabetic() || c == '_' => {
                while self.peek().is_some_and(|c| c.is_ascii_alphanumeric() || c == '_') {
                    self.pos += 1;
                }
                Tok::Ident(self.src[start..self.pos].to_string())
            }
            other => {
                return Err(ExprError::Syntax {
                    pos: start,
                    msg: format!("unexpected character `{other}`"),
                })
            }
        };
        Ok(Some((tok, start)))
    }

    fn number(&mut self, start: usize) -> Result<Tok, ExprError> {
        let bytes = self.src.as_bytes();
        let digits = |p: &mut usize| {
            while *p < bytes.len() && bytes[*p].is_ascii_digit() {
                *p += 1;
            }
        };
        let mut p = self.pos;
        let mut integral = true;
        digits(&mut p);
        if p < bytes.len() && bytes[p] == b'.' {
            integral = false;
            p += 1;
            digits(&mut p);
        }
        if p < bytes.len() && (bytes[p] == b'e' || bytes[p] == b'E') {
            let mut q = p + 1;
            if q < bytes.len() && (bytes[q] == b'+' || bytes[q] == b'-') {
                q += 1;
            }
            if q < bytes.len() && bytes[q].is_ascii_digit() {
                integral = false;
                p = q;
                digits(&mut p);
            }
        }
        let text = &self.src[start..p];
        self.pos = p;
        text.parse::<f64>()
            .ok()
            .filter(|v| v.is_finite())
            .map(|v| Tok::Num(v, integral))
            .ok_or_else(|| ExprError::Syntax { pos: start, msg: format!("bad number `{text}`") })
    }
}

struct Parser<'n, S> {
    toks: Vec<(Tok, usize)>,
    i: usize,
    end: usize,
    names: &'n [S],
}

/// Parses `src`, resolving identifiers against `names` (slot = position).
pub fn parse_expr<S: AsRef<str>>(src: &str, names: &[S]) -> Result<Expr, ExprError> {
    let mut p = Parser { toks: Lexer::tokens(src)?, i: 0, end: src.len(), names };
    let e = p.expr()?;
    match p.toks.get(p.i) {
        None => Ok(e),
        Some((_, pos)) => Err(ExprError::Syntax { pos: *pos, msg: "unexpected trailing input".into() }),
    }
}

impl<S: AsRef<str>> Parser<'_, S> {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.i).map(|(t, _)| t)
    }

    fn pos(&self) -> usize {
        self.toks.get(self.i).map_or(self.end, |(_, p)| *p)
    }

    fn bump(&mut self) -> Option<(Tok, usize)> {
        let t = self.toks.get(self.i).cloned();
        self.i += 1;
        t
    }

    fn expect(&mut self, want: Tok, what: &str) -> Result<(), ExprError> {
        let pos = self.pos();
        match self.bump() {
            Some((t, _)) if t == want => Ok(()),
            _ => Err(ExprError::Syntax { pos, msg: format!("expected {what}") }),
        }
    }

    fn expr(&mut self) -> Result<Expr, ExprError> {
        let mut lhs = self.term()?;
        while let Some(Tok::Op(c @ ('+' | '-'))) = self.peek() {
            let op = if *c == '+' { BinOp::Add } else { BinOp::Sub };
            self.i += 1;
            let rhs = self.term()?;
            lhs = Expr::Bin(op, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn term(&mut self) -> Result<Expr, ExprError> {
        let mut lhs = self.factor()?;
        while let Some(Tok::Op(c @ ('*' | '/'))) = self.peek() {
            let op = if *c == '*' { BinOp::Mul } else { BinOp::Div };
            self.i += 1;
            let rhs = self.factor()?;
            lhs = Expr::Bin(op, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn factor(&mut self) -> Result<Expr, ExprError> {
        let negate = matches!(self.peek(), Some(Tok::Op('-')));
        if negate {
            self.i += 1;
        }
        let mut e = self.atom()?;
        if let Some(Tok::Op('^')) = self.peek() {
            self.i += 1;
            let pos = self.pos();
            match self.bump() {
                Some((Tok::Num(v, true), _)) if v <= u32::MAX as f64 => {
                    e = Expr::Pow(Box::new(e), v as u32);
                }
                Some(_) => return Err(ExprError::BadExponent { pos }),
                None => return Err(ExprError::Syntax { pos, msg: "missing exponent".into() }),
            }
        }
        Ok(if negate { Expr::Neg(Box::new(e)) } else { e })
    }

    fn atom(&mut self) -> Result<Expr, ExprError> {
        let pos = self.pos();
        match self.bump() {
            Some((Tok::Num(v, _), _)) => Ok(Expr::Const(v)),
            Some((Tok::LParen, _)) => {
                let e = self.expr()?;
                self.expect(Tok::RParen, "`)`")?;
                Ok(e)
            }
            Some((Tok::Ident(name), _)) => {
                if let Some(f) = Func::from_name(&name) {
                    if self.peek() == Some(&Tok::LParen) {
                        self.i += 1;
                        let arg = self.expr()?;
                        self.expect(Tok::RParen, "`)`")?;
                        return Ok(Expr::Func(f, Box::new(arg)));
                    }
                }
                self.names
                    .iter()
                    .position(|n| n.as_ref() == name)
                    .map(Expr::Var)
                    .ok_or(ExprError::UnknownIdent { name, pos })
            }
            Some(_) => Err(ExprError::Syntax { pos, msg: "expected operand".into() }),
            None => Err(ExprError::Syntax { pos, msg: "unexpected end of input".into() }),
        }
    }
}
