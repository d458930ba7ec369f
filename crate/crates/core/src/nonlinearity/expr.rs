//! Expression trees for nonlinearities and their recursive-descent parser.
//!
//! Grammar:
//!
//! ```text
//! expr   := term (('+' | '-') term)*
//! term   := factor (('*' | '/') factor)*
//! factor := unary ('^' nonneg-integer)?
//! unary  := '-' unary | base
//! base   := number | 'x' | func '(' expr ')' | '(' expr ')'
//! func   := sin | cos | exp | tanh | log
//! ```
//!
//! Note that `-x^2` parses as `(-x)^2`, as the grammar dictates.

use std::fmt;

use crate::error::{Error, Result};
use crate::nonlinearity::jet::Jet2;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Sin,
    Cos,
    Exp,
    Tanh,
    Log,
}

impl Func {
    fn from_name(name: &str) -> Option<Func> {
        Some(match name {
            "sin" => Func::Sin,
            "cos" => Func::Cos,
            "exp" => Func::Exp,
            "tanh" => Func::Tanh,
            "log" => Func::Log,
            _ => return None,
        })
    }

    pub fn name(self) -> &'static str {
        match self {
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Exp => "exp",
            Func::Tanh => "tanh",
            Func::Log => "log",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Const(f64),
    Var,
    Neg(Box<Expr>),
    Binary(BinOp, Box<Expr>, Box<Expr>),
    Pow(Box<Expr>, u32),
    Call(Func, Box<Expr>),
}

impl Expr {
    /// Evaluates the jet of this expression at the jet `x`.
    pub fn eval(&self, x: Jet2) -> Result<Jet2> {
        let out = match self {
            Expr::Const(c) => Jet2::constant(*c),
            Expr::Var => x,
            Expr::Neg(a) => -a.eval(x)?,
            Expr::Binary(op, a, b) => {
                let a = a.eval(x)?;
                let b = b.eval(x)?;
                match op {
                    BinOp::Add => a + b,
                    BinOp::Sub => a - b,
                    BinOp::Mul => a * b,
                    BinOp::Div => {
                        if b.value == 0.0 {
                            return Err(self.domain_error(x.value));
                        }
                        a / b
                    }
                }
            }
            Expr::Pow(a, k) => a.eval(x)?.powi(*k),
            Expr::Call(func, a) => {
                let a = a.eval(x)?;
                match func {
                    Func::Sin => a.sin(),
                    Func::Cos => a.cos(),
                    Func::Exp => a.exp(),
                    Func::Tanh => a.tanh(),
                    Func::Log => {
                        if a.value <= 0.0 {
                            return Err(self.domain_error(x.value));
                        }
                        a.ln()
                    }
                }
            }
        };
        Ok(out)
    }

    fn domain_error(&self, x: f64) -> Error {
        Error::Domain {
            node: self.to_string(),
            x,
        }
    }
}

/// Fully parenthesized rendering; parsing it back yields the same tree.
impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            // `{}` on f64 is the shortest round-tripping decimal, never exponent form.
            Expr::Const(c) => write!(f, "{c}"),
            Expr::Var => write!(f, "x"),
            Expr::Neg(a) => write!(f, "(-{a})"),
            Expr::Binary(op, a, b) => {
                let sym = match op {
                    BinOp::Add => '+',
                    BinOp::Sub => '-',
                    BinOp::Mul => '*',
                    BinOp::Div => '/',
                };
                write!(f, "({a} {sym} {b})")
            }
            Expr::Pow(a, k) => write!(f, "({a})^{k}"),
            Expr::Call(func, a) => write!(f, "{}({a})", func.name()),
        }
    }
}

pub fn parse_expr(text: &str) -> Result<Expr> {
    let mut p = Parser {
        chars: text.chars().collect(),
        pos: 0,
    };
    let e = p.expr()?;
    p.skip_ws();
    if let Some(c) = p.peek() {
        return Err(Error::Syntax {
            pos: p.pos,
            msg: format!("unexpected `{c}`"),
        });
    }
    Ok(e)
}

struct Parser {
    chars: Vec<char>,
    pos: usize,
}

impl Parser {
    fn skip_ws(&mut self) {
        while self.chars.get(self.pos).is_some_and(|c| c.is_whitespace()) {
            self.pos += 1;
        }
    }

    fn peek(&self) -> Option<char> {
        self.chars.get(self.pos).copied()
    }

    /// Next significant character, with the typographic minus folded into '-'.
    fn peek_tok(&mut self) -> Option<char> {
        self.skip_ws();
        self.peek().map(|c| if c == '\u{2212}' { '-' } else { c })
    }

    fn syntax(&self, msg: impl Into<String>) -> Error {
        Error::Syntax {
            pos: self.pos,
            msg: msg.into(),
        }
    }

    fn expect(&mut self, want: char) -> Result<()> {
        match self.peek_tok() {
            Some(c) if c == want => {
                self.pos += 1;
                Ok(())
            }
            Some(c) => Err(self.syntax(format!("expected `{want}`, found `{c}`"))),
            None => Err(self.syntax(format!("expected `{want}`, found end of input"))),
        }
    }

    fn expr(&mut self) -> Result<Expr> {
        let mut lhs = self.term()?;
        while let Some(c @ ('+' | '-')) = self.peek_tok() {
            self.pos += 1;
            let rhs = self.term()?;
            let op = if c == '+' { BinOp::Add } else { BinOp::Sub };
            lhs = Expr::Binary(op, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn term(&mut self) -> Result<Expr> {
        let mut lhs = self.factor()?;
        while let Some(c @ ('*' | '/')) = self.peek_tok() {
            self.pos += 1;
            let rhs = self.factor()?;
            let op = if c == '*' { BinOp::Mul } else { BinOp::Div };
            lhs = Expr::Binary(op, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn factor(&mut self) -> Result<Expr> {
        let base = self.unary()?;
        if self.peek_tok() == Some('^') {
            self.pos += 1;
            self.skip_ws();
            let start = self.pos;
            let k = self.exponent(start)?;
            return Ok(Expr::Pow(Box::new(base), k));
        }
        Ok(base)
    }

    fn exponent(&mut self, start: usize) -> Result<u32> {
        match self.peek() {
            Some(c) if c.is_ascii_digit() => {}
            Some('-' | '\u{2212}' | '.') => return Err(Error::NonIntegerExponent { pos: start }),
            Some(c) => return Err(self.syntax(format!("expected integer exponent, found `{c}`"))),
            None => return Err(self.syntax("expected integer exponent, found end of input")),
        }
        let lit = self.number_literal();
        if lit.contains(['.', 'e', 'E']) {
            return Err(Error::NonIntegerExponent { pos: start });
        }
        lit.parse::<u32>()
            .map_err(|_| Error::NonIntegerExponent { pos: start })
    }

    fn unary(&mut self) -> Result<Expr> {
        if self.peek_tok() == Some('-') {
            self.pos += 1;
            let inner = self.unary()?;
            return Ok(Expr::Neg(Box::new(inner)));
        }
        self.base()
    }

    fn base(&mut self) -> Result<Expr> {
        match self.peek_tok() {
            None => Err(self.syntax("unexpected end of input")),
            Some('(') => {
                self.pos += 1;
                let e = self.expr()?;
                self.expect(')')?;
                Ok(e)
            }
            Some(c) if c.is_ascii_digit() || c == '.' => {
                let start = self.pos;
                let lit = self.number_literal();
                lit.parse::<f64>()
                    .map(Expr::Const)
                    .map_err(|_| Error::Syntax {
                        pos: start,
                        msg: format!("malformed number `{lit}`"),
                    })
            }
            Some(c) if c.is_ascii_alphabetic() || c == '_' => {
                let start = self.pos;
                let mut name = String::new();
                while let Some(c) = self
                    .peek()
                    .filter(|c| c.is_ascii_alphanumeric() || *c == '_')
                {
                    name.push(c);
                    self.pos += 1;
                }
                if name == "x" {
                    return Ok(Expr::Var);
                }
                match Func::from_name(&name) {
                    Some(func) => {
                        self.expect('(')?;
                        let arg = self.expr()?;
                        self.expect(')')?;
                        Ok(Expr::Call(func, Box::new(arg)))
                    }
                    None => Err(Error::UnknownIdentifier { name, pos: start }),
                }
            }
            Some(c) => Err(self.syntax(format!("unexpected `{c}`"))),
        }
    }

    /// digits [. digits] [(e|E) [+|-] digits]
    fn number_literal(&mut self) -> String {
        let mut s = String::new();
        let digits = |p: &mut Parser, s: &mut String| {
            while let Some(c) = p.peek().filter(char::is_ascii_digit) {
                s.push(c);
                p.pos += 1;
            }
        };
        digits(self, &mut s);
        if self.peek() == Some('.') {
            s.push('.');
            self.pos += 1;
            digits(self, &mut s);
        }
        if let Some(e @ ('e' | 'E')) = self.peek() {
            let save = self.pos;
            let mut tail = String::from(e);
            self.pos += 1;
            if let Some(sign @ ('+' | '-')) = self.peek() {
                tail.push(sign);
                self.pos += 1;
            }
            if self.peek().is_some_and(|c| c.is_ascii_digit()) {
                s.push_str(&tail);
                digits(self, &mut s);
            } else {
                self.pos = save;
            }
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn at(text: &str, x: f64) -> Jet2 {
        parse_expr(text).unwrap().eval(Jet2::variable(x)).unwrap()
    }

    #[test]
    fn precedence_and_associativity() {
        assert_eq!(at("1 + 2 * 3", 0.0).value, 7.0);
        assert_eq!(at("8 / 4 / 2", 0.0).value, 1.0);
        assert_eq!(at("5 - 3 - 1", 0.0).value, 1.0);
        assert_eq!(at("2 * x^3", 2.0).value, 16.0);
    }

    #[test]
    fn unary_minus_binds_tighter_than_power() {
        assert_eq!(at("-x^2", 3.0).value, 9.0);
        assert_eq!(at("-(x^2)", 3.0).value, -9.0);
        assert_eq!(at("--x", 3.0).value, 3.0);
        assert_eq!(at("\u{2212}x", 3.0).value, -3.0);
    }

    #[test]
    fn numbers() {
        assert_eq!(at("1.5e2", 0.0).value, 150.0);
        assert_eq!(at(".5", 0.0).value, 0.5);
        assert_eq!(at("2e-1*x", 1.0).value, 0.2);
    }

    #[test]
    fn syntax_errors_carry_positions() {
        match parse_expr("x^^2") {
            Err(Error::Syntax { pos, .. }) => assert_eq!(pos, 2),
            other => panic!("{other:?}"),
        }
        match parse_expr("(x + 1") {
            Err(Error::Syntax { pos, .. }) => assert_eq!(pos, 6),
            other => panic!("{other:?}"),
        }
        assert!(matches!(
            parse_expr("x 2"),
            Err(Error::Syntax { pos: 2, .. })
        ));
        assert!(matches!(parse_expr(""), Err(Error::Syntax { .. })));
    }

    #[test]
    fn unknown_identifier_and_bad_exponent() {
        assert!(matches!(
            parse_expr("sqrt(x)"),
            Err(Error::UnknownIdentifier { pos: 0, .. })
        ));
        assert!(matches!(
            parse_expr("1 + y"),
            Err(Error::UnknownIdentifier { pos: 4, .. })
        ));
        assert!(matches!(
            parse_expr("x^2.5"),
            Err(Error::NonIntegerExponent { pos: 2 })
        ));
        assert!(matches!(
            parse_expr("x^-1"),
            Err(Error::NonIntegerExponent { pos: 2 })
        ));
    }

    #[test]
    fn domain_errors_name_the_node() {
        let e = parse_expr("1 + log(x - 1)").unwrap();
        match e.eval(Jet2::variable(0.5)) {
            Err(Error::Domain { node, .. }) => assert_eq!(node, "log((x - 1))"),
            other => panic!("{other:?}"),
        }
        let d = parse_expr("1/(x - 2)").unwrap();
        assert!(matches!(
            d.eval(Jet2::variable(2.0)),
            Err(Error::Domain { .. })
        ));
    }

    #[test]
    fn display_reparses_to_same_tree() {
        for text in [
            "x^2/2",
            "-x^2 + sin(3*x) - 1/(1+exp(-x))",
            "tanh(x)*log(2+x^2)",
        ] {
            let e = parse_expr(text).unwrap();
            assert_eq!(parse_expr(&e.to_string()).unwrap(), e);
        }
    }
}
