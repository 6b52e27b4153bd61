//! Arithmetic expressions for deterministic update rules.
//!
//! Supported syntax: decimal literals, variables, `+ - * / %`, comparisons
//! (`< <= > >= == !=`, yielding 0 or 1), `&& || !`, the conditional
//! `c ? a : b`, parentheses, and the functions `min`, `max`, `abs`, `floor`,
//! `ceil`, `round`, `clamp(v, lo, hi)`. Variables are resolved to slots when
//! the expression is compiled, so evaluation does no string lookups.

use std::fmt;

#[derive(Debug, Clone, PartialEq)]
pub struct ExprError(pub String);

impl fmt::Display for ExprError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Rem,
    Lt,
    Le,
    Gt,
    Ge,
    Eq,
    Ne,
    And,
    Or,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Func {
    Min,
    Max,
    Abs,
    Floor,
    Ceil,
    Round,
    Clamp,
}

#[derive(Debug, Clone, PartialEq)]
enum Node {
    Num(f64),
    Var(usize),
    Neg(Box<Node>),
    Not(Box<Node>),
    Bin(BinOp, Box<Node>, Box<Node>),
    Cond(Box<Node>, Box<Node>, Box<Node>),
    Call(Func, Vec<Node>),
}

/// A compiled expression over a fixed list of variable names.
#[derive(Debug, Clone, PartialEq)]
pub struct Expr {
    root: Node,
    source: String,
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Op(&'static str),
    LParen,
    RParen,
    Comma,
    Question,
    Colon,
}

fn tokenize(src: &str) -> Result<Vec<Tok>, ExprError> {
    const OPS: [&str; 15] = [
        "<=", ">=", "==", "!=", "&&", "||", "+", "-", "*", "/", "%", "<", ">", "!", "=",
    ];
    let chars: Vec<char> = src.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        if c.is_whitespace() {
            i += 1;
        } else if c.is_ascii_digit() || c == '.' {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_digit() || chars[i] == '.') {
                i += 1;
            }
            let s: String = chars[start..i].iter().collect();
            let v = s.parse::<f64>().map_err(|_| ExprError(format!("bad number `{s}`")))?;
            out.push(Tok::Num(v));
        } else if c.is_alphabetic() || c == '_' {
            let start = i;
            while i < chars.len() && (chars[i].is_alphanumeric() || chars[i] == '_') {
                i += 1;
            }
            out.push(Tok::Ident(chars[start..i].iter().collect()));
        } else {
            match c {
                '(' => out.push(Tok::LParen),
                ')' => out.push(Tok::RParen),
                ',' => out.push(Tok::Comma),
                '?' => out.push(Tok::Question),
                ':' => out.push(Tok::Colon),
                _ => {
                    let rest: String = chars[i..chars.len().min(i + 2)].iter().collect();
                    let op = OPS
                        .iter()
                        .find(|op| rest.starts_with(*op))
                        .ok_or_else(|| ExprError(format!("unexpected character `{c}`")))?;
                    if *op == "=" {
                        return Err(ExprError("use `==` for equality".into()));
                    }
                    i += op.len() - 1;
                    out.push(Tok::Op(op));
                }
            }
            i += 1;
        }
    }
    Ok(out)
}

struct Parser<'a> {
    toks: Vec<Tok>,
    pos: usize,
    vars: &'a [&'a str],
}

impl Parser<'_> {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos)
    }

    fn next(&mut self) -> Option<Tok> {
        let t = self.toks.get(self.pos).cloned();
        self.pos += 1;
        t
    }

    fn expect(&mut self, t: Tok) -> Result<(), ExprError> {
        match self.next() {
            Some(ref got) if *got == t => Ok(()),
            got => Err(ExprError(format!("expected {t:?}, found {got:?}"))),
        }
    }

    fn conditional(&mut self) -> Result<Node, ExprError> {
        let cond = self.binary(0)?;
        if self.peek() == Some(&Tok::Question) {
            self.next();
            let a = self.conditional()?;
            self.expect(Tok::Colon)?;
            let b = self.conditional()?;
            return Ok(Node::Cond(Box::new(cond), Box::new(a), Box::new(b)));
        }
        Ok(cond)
    }

    fn binary(&mut self, min_prec: u8) -> Result<Node, ExprError> {
        let mut lhs = self.unary()?;
        while let Some(Tok::Op(s)) = self.peek() {
            let (op, prec) = match *s {
                "||" => (BinOp::Or, 1),
                "&&" => (BinOp::And, 2),
                "==" => (BinOp::Eq, 3),
                "!=" => (BinOp::Ne, 3),
                "<" => (BinOp::Lt, 4),
                "<=" => (BinOp::Le, 4),
                ">" => (BinOp::Gt, 4),
                ">=" => (BinOp::Ge, 4),
                "+" => (BinOp::Add, 5),
                "-" => (BinOp::Sub, 5),
                "*" => (BinOp::Mul, 6),
                "/" => (BinOp::Div, 6),
                "%" => (BinOp::Rem, 6),
                _ => break,
            };
            if prec < min_prec {
                break;
            }
            self.next();
            let rhs = self.binary(prec + 1)?;
            lhs = Node::Bin(op, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Node, ExprError> {
        match self.peek() {
            Some(Tok::Op("-")) => {
                self.next();
                Ok(Node::Neg(Box::new(self.unary()?)))
            }
            Some(Tok::Op("!")) => {
                self.next();
                Ok(Node::Not(Box::new(self.unary()?)))
            }
            _ => self.atom(),
        }
    }

    fn atom(&mut self) -> Result<Node, ExprError> {
        match self.next() {
            Some(Tok::Num(v)) => Ok(Node::Num(v)),
            Some(Tok::LParen) => {
                let e = self.conditional()?;
                self.expect(Tok::RParen)?;
                Ok(e)
            }
            Some(Tok::Ident(name)) => {
                if self.peek() == Some(&Tok::LParen) {
                    self.next();
                    let (func, arity) = match name.as_str() {
                        "min" => (Func::Min, 2),
                        "max" => (Func::Max, 2),
                        "abs" => (Func::Abs, 1),
                        "floor" => (Func::Floor, 1),
                        "ceil" => (Func::Ceil, 1),
                        "round" => (Func::Round, 1),
                        "clamp" => (Func::Clamp, 3),
                        _ => return Err(ExprError(format!("unknown function `{name}`"))),
                    };
                    let mut args = vec![self.conditional()?];
                    while self.peek() == Some(&Tok::Comma) {
                        self.next();
                        args.push(self.conditional()?);
                    }
                    self.expect(Tok::RParen)?;
                    if args.len() != arity {
                        return Err(ExprError(format!(
                            "`{name}` takes {arity} arguments, got {}",
                            args.len()
                        )));
                    }
                    Ok(Node::Call(func, args))
                } else {
                    self.vars
                        .iter()
                        .position(|v| *v == name)
                        .map(Node::Var)
                        .ok_or_else(|| ExprError(format!("unknown variable `{name}`")))
                }
            }
            t => Err(ExprError(format!("unexpected token {t:?}"))),
        }
    }
}

fn truth(v: f64) -> bool {
    v != 0.0
}

fn eval(node: &Node, vals: &[f64]) -> f64 {
    match node {
        Node::Num(v) => *v,
        Node::Var(i) => vals[*i],
        Node::Neg(a) => -eval(a, vals),
        Node::Not(a) => f64::from(!truth(eval(a, vals))),
        Node::Cond(c, a, b) => {
            if truth(eval(c, vals)) {
                eval(a, vals)
            } else {
                eval(b, vals)
            }
        }
        Node::Bin(op, a, b) => {
            let x = eval(a, vals);
            // short-circuit logic
            match op {
                BinOp::And => return f64::from(truth(x) && truth(eval(b, vals))),
                BinOp::Or => return f64::from(truth(x) || truth(eval(b, vals))),
                _ => {}
            }
            let y = eval(b, vals);
            match op {
                BinOp::Add => x + y,
                BinOp::Sub => x - y,
                BinOp::Mul => x * y,
                BinOp::Div => x / y,
                BinOp::Rem => x.rem_euclid(y),
                BinOp::Lt => f64::from(x < y),
                BinOp::Le => f64::from(x <= y),
                BinOp::Gt => f64::from(x > y),
                BinOp::Ge => f64::from(x >= y),
                BinOp::Eq => f64::from(x == y),
                BinOp::Ne => f64::from(x != y),
                BinOp::And | BinOp::Or => unreachable!(),
            }
        }
        Node::Call(f, args) => {
            let a = eval(&args[0], vals);
            match f {
                Func::Min => a.min(eval(&args[1], vals)),
                Func::Max => a.max(eval(&args[1], vals)),
                Func::Abs => a.abs(),
                Func::Floor => a.floor(),
                Func::Ceil => a.ceil(),
                Func::Round => a.round(),
                Func::Clamp => a.max(eval(&args[1], vals)).min(eval(&args[2], vals)),
            }
        }
    }
}

impl Expr {
    /// Compile `source`, resolving identifiers against `vars` (slot order).
    pub fn compile(source: &str, vars: &[&str]) -> Result<Self, ExprError> {
        let toks = tokenize(source)?;
        let mut p = Parser { toks, pos: 0, vars };
        let root = p.conditional()?;
        if p.pos != p.toks.len() {
            return Err(ExprError(format!("trailing input after position {}", p.pos)));
        }
        Ok(Self {
            root,
            source: source.to_string(),
        })
    }

    /// Evaluate with `vals[i]` bound to the i-th compile-time variable.
    pub fn eval(&self, vals: &[f64]) -> f64 {
        eval(&self.root, vals)
    }

    pub fn source(&self) -> &str {
        &self.source
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn precedence_and_functions() {
        let e = Expr::compile("1 + 2 * x - min(x, 3) % 2", &["x"]).unwrap();
        assert_eq!(e.eval(&[5.0]), 1.0 + 10.0 - 1.0);
        let e = Expr::compile("x > 0.5 && !(u == 1) ? 2 : clamp(u - 4, 0, 1)", &["x", "u"]).unwrap();
        assert_eq!(e.eval(&[1.0, 0.0]), 2.0);
        assert_eq!(e.eval(&[1.0, 1.0]), 0.0);
        assert_eq!(Expr::compile("-(-3) % 2", &[]).unwrap().eval(&[]), 1.0);
        assert_eq!(Expr::compile("(0 - 1) % 3", &[]).unwrap().eval(&[]), 2.0);
    }

    #[test]
    fn errors_are_reported() {
        assert!(Expr::compile("y + 1", &["x"]).is_err());
        assert!(Expr::compile("x = 1", &["x"]).is_err());
        assert!(Expr::compile("min(1)", &[]).is_err());
        assert!(Expr::compile("(1 + 2", &[]).is_err());
        assert!(Expr::compile("1 2", &[]).is_err());
    }
}
