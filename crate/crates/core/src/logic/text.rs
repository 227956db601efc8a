//! C-like text syntax for formulas: `status == 0 && roundId > 0 || !(stake == msg.value)`.
//!
//! `||` binds weaker than `&&`, and `!` applies to the following atom or
//! parenthesised group. Printing parenthesises nested conjunctions and
//! disjunctions so that `parse(print(f)) == f` for formulas built through the
//! `Formula` constructors.

use std::str::FromStr;

use num_bigint::BigInt;

use super::{Atom, CmpOp, Formula, LogicError, Term};
use crate::trace::Value;

pub(super) fn print(f: &Formula) -> String {
    let mut out = String::new();
    write(f, &mut out);
    out
}

fn write(f: &Formula, out: &mut String) {
    match f {
        Formula::True => out.push_str("true"),
        Formula::False => out.push_str("false"),
        Formula::Atom(a) => out.push_str(&a.to_string()),
        Formula::Not(c) => {
            out.push_str("!(");
            write(c, out);
            out.push(')');
        }
        Formula::And(cs) => join(cs, " && ", out, |c| matches!(c, Formula::And(_) | Formula::Or(_))),
        Formula::Or(cs) => join(cs, " || ", out, |c| matches!(c, Formula::Or(_))),
    }
}

fn join(cs: &[Formula], sep: &str, out: &mut String, needs_parens: impl Fn(&Formula) -> bool) {
    for (i, c) in cs.iter().enumerate() {
        if i > 0 {
            out.push_str(sep);
        }
        if needs_parens(c) {
            out.push('(');
            write(c, out);
            out.push(')');
        } else {
            write(c, out);
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Ident(String),
    Int(BigInt),
    Addr(String),
    Op(CmpOp),
    And,
    Or,
    Bang,
    LParen,
    RParen,
}

fn lex(src: &str) -> Result<Vec<(usize, Tok)>, LogicError> {
    let bytes = src.as_bytes();
    let mut i = 0;
    let mut toks = Vec::new();
    let err = |pos: usize, msg: &str| LogicError::Parse { pos, msg: msg.to_string() };
    while i < bytes.len() {
        let c = bytes[i] as char;
        let start = i;
        if c.is_ascii_whitespace() {
            i += 1;
            continue;
        }
        let two = src.get(i..i + 2).unwrap_or("");
        let tok = match two {
            "&&" => Some((Tok::And, 2)),
            "||" => Some((Tok::Or, 2)),
            "==" => Some((Tok::Op(CmpOp::Eq), 2)),
            "!=" => Some((Tok::Op(CmpOp::Ne), 2)),
            "<=" => Some((Tok::Op(CmpOp::Le), 2)),
            ">=" => Some((Tok::Op(CmpOp::Ge), 2)),
            _ => None,
        };
        if let Some((t, n)) = tok {
            toks.push((start, t));
            i += n;
            continue;
        }
        let single = match c {
            '<' => Some(Tok::Op(CmpOp::Lt)),
            '>' => Some(Tok::Op(CmpOp::Gt)),
            '=' => Some(Tok::Op(CmpOp::Eq)),
            '!' => Some(Tok::Bang),
            '(' => Some(Tok::LParen),
            ')' => Some(Tok::RParen),
            _ => None,
        };
        if let Some(t) = single {
            toks.push((start, t));
            i += 1;
            continue;
        }
        if two.eq_ignore_ascii_case("0x") {
            i += 2;
            while i < bytes.len() && (bytes[i] as char).is_ascii_hexdigit() {
                i += 1;
            }
            if i == start + 2 {
                return Err(err(start, "address literal without digits"));
            }
            toks.push((start, Tok::Addr(src[start..i].to_string())));
            continue;
        }
        if c.is_ascii_digit() || (c == '-' && bytes.get(i + 1).is_some_and(|b| b.is_ascii_digit())) {
            i += 1;
            while i < bytes.len() && bytes[i].is_ascii_digit() {
                i += 1;
            }
            let n = BigInt::from_str(&src[start..i]).map_err(|_| err(start, "bad integer"))?;
            toks.push((start, Tok::Int(n)));
            continue;
        }
        if c.is_ascii_alphabetic() || c == '_' || c == '$' {
            while i < bytes.len() {
                let d = bytes[i] as char;
                if d.is_ascii_alphanumeric() || d == '_' || d == '.' || d == '$' {
                    i += 1;
                } else {
                    break;
                }
            }
            toks.push((start, Tok::Ident(src[start..i].to_string())));
            continue;
        }
        return Err(err(start, &format!("unexpected character `{c}`")));
    }
    Ok(toks)
}

struct Parser {
    toks: Vec<(usize, Tok)>,
    pos: usize,
    len: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|(_, t)| t)
    }

    fn offset(&self) -> usize {
        self.toks.get(self.pos).map(|(o, _)| *o).unwrap_or(self.len)
    }

    fn err(&self, msg: &str) -> LogicError {
        LogicError::Parse { pos: self.offset(), msg: msg.to_string() }
    }

    fn next(&mut self) -> Option<Tok> {
        let t = self.toks.get(self.pos).map(|(_, t)| t.clone());
        self.pos += 1;
        t
    }

    fn or(&mut self) -> Result<Formula, LogicError> {
        let mut parts = vec![self.and()?];
        while self.peek() == Some(&Tok::Or) {
            self.pos += 1;
            parts.push(self.and()?);
        }
        Ok(Formula::or(parts))
    }

    fn and(&mut self) -> Result<Formula, LogicError> {
        let mut parts = vec![self.unary()?];
        while self.peek() == Some(&Tok::And) {
            self.pos += 1;
            parts.push(self.unary()?);
        }
        Ok(Formula::and(parts))
    }

    fn unary(&mut self) -> Result<Formula, LogicError> {
        match self.peek() {
            Some(Tok::Bang) => {
                self.pos += 1;
                Ok(Formula::Not(Box::new(self.unary()?)))
            }
            Some(Tok::LParen) => {
                self.pos += 1;
                let f = self.or()?;
                if self.next() != Some(Tok::RParen) {
                    self.pos -= 1;
                    return Err(self.err("expected `)`"));
                }
                Ok(f)
            }
            Some(Tok::Ident(w)) if w == "true" => {
                self.pos += 1;
                Ok(Formula::True)
            }
            Some(Tok::Ident(w)) if w == "false" => {
                self.pos += 1;
                Ok(Formula::False)
            }
            _ => self.atom(),
        }
    }

    fn operand(&mut self) -> Result<Term, LogicError> {
        match self.next() {
            Some(Tok::Ident(name)) => Ok(Term::Var(name)),
            Some(Tok::Int(n)) => Ok(Term::Const(Value::Int(n))),
            Some(Tok::Addr(a)) => Ok(Term::Const(Value::addr(&a))),
            _ => {
                self.pos -= 1;
                Err(self.err("expected a parameter or constant"))
            }
        }
    }

    fn atom(&mut self) -> Result<Formula, LogicError> {
        let lhs = self.operand()?;
        let op = match self.next() {
            Some(Tok::Op(op)) => op,
            _ => {
                self.pos -= 1;
                return Err(self.err("expected a comparison operator"));
            }
        };
        let rhs = self.operand()?;
        let atom = match (lhs, rhs) {
            (Term::Var(l), rhs) => Atom { lhs: l, op, rhs },
            (Term::Const(c), Term::Var(r)) => Atom { lhs: r, op: op.flip(), rhs: Term::Const(c) },
            (Term::Const(_), Term::Const(_)) => {
                return Err(self.err("comparison between two constants"));
            }
        };
        Ok(Formula::Atom(atom))
    }
}

pub fn parse_formula(src: &str) -> Result<Formula, LogicError> {
    let toks = lex(src)?;
    if toks.is_empty() {
        return Err(LogicError::Parse { pos: 0, msg: "empty formula".into() });
    }
    let mut p = Parser { toks, pos: 0, len: src.len() };
    let f = p.or()?;
    if p.pos < p.toks.len() {
        return Err(p.err("unexpected trailing input"));
    }
    Ok(f)
}
