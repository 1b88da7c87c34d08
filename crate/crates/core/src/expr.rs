//! Elementary expression language for model coefficients in config files.
//!
//! ```text
//! expr    := term (('+' | '-') term)*
//! term    := unary (('*' | '/') unary)*
//! unary   := '-' unary | primary
//! primary := number | pi | e | t | x[i] | z[j] | u[k]
//!          | func '(' expr ')' | '(' expr ')'
//! func    := sin | cos | exp | arctan | atan | tanh
//! ```

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Evaluation context: time, slow state, fast state and jump mark.
#[derive(Debug, Clone, Copy)]
pub struct Args<'a> {
    pub t: f64,
    pub x: &'a [f64],
    pub z: &'a [f64],
    pub u: &'a [f64],
}

impl<'a> Args<'a> {
    pub fn new(t: f64, x: &'a [f64], z: &'a [f64], u: &'a [f64]) -> Self {
        Self { t, x, z, u }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Func {
    Sin,
    Cos,
    Exp,
    Arctan,
    Tanh,
}

impl Func {
    fn apply(self, v: f64) -> f64 {
        match self {
            Func::Sin => v.sin(),
            Func::Cos => v.cos(),
            Func::Exp => v.exp(),
            Func::Arctan => v.atan(),
            Func::Tanh => v.tanh(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Node {
    Const(f64),
    Time,
    X(usize),
    Z(usize),
    U(usize),
    Neg(Box<Node>),
    Add(Box<Node>, Box<Node>),
    Sub(Box<Node>, Box<Node>),
    Mul(Box<Node>, Box<Node>),
    Div(Box<Node>, Box<Node>),
    Call(Func, Box<Node>),
}

impl Node {
    fn eval(&self, a: &Args<'_>) -> f64 {
        match self {
            Node::Const(c) => *c,
            Node::Time => a.t,
            Node::X(i) => a.x[*i],
            Node::Z(i) => a.z[*i],
            Node::U(i) => a.u[*i],
            Node::Neg(n) => -n.eval(a),
            Node::Add(l, r) => l.eval(a) + r.eval(a),
            Node::Sub(l, r) => l.eval(a) - r.eval(a),
            Node::Mul(l, r) => l.eval(a) * r.eval(a),
            Node::Div(l, r) => l.eval(a) / r.eval(a),
            Node::Call(f, n) => f.apply(n.eval(a)),
        }
    }

    fn visit(&self, f: &mut impl FnMut(&Node)) {
        f(self);
        match self {
            Node::Neg(n) | Node::Call(_, n) => n.visit(f),
            Node::Add(l, r) | Node::Sub(l, r) | Node::Mul(l, r) | Node::Div(l, r) => {
                l.visit(f);
                r.visit(f);
            }
            _ => {}
        }
    }

    fn is_const(&self) -> bool {
        matches!(self, Node::Const(_))
    }

    // Folds constant sub-trees so `is_zero` sees through "0*x" style input.
    fn fold(self) -> Node {
        let bin = |l: Node, r: Node, op: fn(f64, f64) -> f64, mk: fn(Box<Node>, Box<Node>) -> Node| {
            match (l.fold(), r.fold()) {
                (Node::Const(a), Node::Const(b)) => Node::Const(op(a, b)),
                (l, r) => mk(Box::new(l), Box::new(r)),
            }
        };
        match self {
            Node::Neg(n) => match n.fold() {
                Node::Const(c) => Node::Const(-c),
                n => Node::Neg(Box::new(n)),
            },
            Node::Call(f, n) => match n.fold() {
                Node::Const(c) => Node::Const(f.apply(c)),
                n => Node::Call(f, Box::new(n)),
            },
            Node::Add(l, r) => bin(*l, *r, |a, b| a + b, Node::Add),
            Node::Sub(l, r) => bin(*l, *r, |a, b| a - b, Node::Sub),
            Node::Mul(l, r) => match (l.fold(), r.fold()) {
                (Node::Const(a), Node::Const(b)) => Node::Const(a * b),
                (Node::Const(z), _) | (_, Node::Const(z)) if z == 0.0 => Node::Const(0.0),
                (l, r) => Node::Mul(Box::new(l), Box::new(r)),
            },
            Node::Div(l, r) => bin(*l, *r, |a, b| a / b, Node::Div),
            n => n,
        }
    }
}

/// A parsed expression that remembers its source text.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct Expr {
    source: String,
    root: Node,
}

impl PartialEq for Expr {
    fn eq(&self, other: &Self) -> bool {
        self.source == other.source
    }
}

impl Expr {
    pub fn constant(c: f64) -> Self {
        Self {
            source: format!("{c:?}"),
            root: Node::Const(c),
        }
    }

    #[inline]
    pub fn eval(&self, args: &Args<'_>) -> f64 {
        self.root.eval(args)
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    pub fn is_zero(&self) -> bool {
        self.root == Node::Const(0.0)
    }

    pub fn is_const(&self) -> bool {
        self.root.is_const()
    }

    /// Largest index used per variable family `(x, z, u)`, if any.
    pub fn max_indices(&self) -> (Option<usize>, Option<usize>, Option<usize>) {
        let (mut mx, mut mz, mut mu) = (None, None, None);
        let bump = |m: &mut Option<usize>, i: usize| *m = Some(m.map_or(i, |v: usize| v.max(i)));
        self.root.visit(&mut |n| match n {
            Node::X(i) => bump(&mut mx, *i),
            Node::Z(i) => bump(&mut mz, *i),
            Node::U(i) => bump(&mut mu, *i),
            _ => {}
        });
        (mx, mz, mu)
    }

    /// Whether the expression reads the fast state.
    pub fn uses_z(&self) -> bool {
        self.max_indices().1.is_some()
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.source)
    }
}

impl FromStr for Expr {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let mut p = Parser {
            src: s.as_bytes(),
            pos: 0,
        };
        let root = p.expr()?;
        p.skip_ws();
        if p.pos != p.src.len() {
            return Err(p.error("trailing input"));
        }
        Ok(Self {
            source: s.trim().to_string(),
            root: root.fold(),
        })
    }
}

impl TryFrom<String> for Expr {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<Expr> for String {
    fn from(e: Expr) -> String {
        e.source
    }
}

struct Parser<'a> {
    src: &'a [u8],
    pos: usize,
}

impl Parser<'_> {
    fn error(&self, what: &str) -> Error {
        Error::Parse(format!(
            "{what} at offset {} in `{}`",
            self.pos,
            String::from_utf8_lossy(self.src)
        ))
    }

    fn skip_ws(&mut self) {
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.skip_ws();
        self.src.get(self.pos).copied()
    }

    fn eat(&mut self, c: u8) -> bool {
        if self.peek() == Some(c) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect(&mut self, c: u8) -> Result<()> {
        if self.eat(c) {
            Ok(())
        } else {
            Err(self.error(&format!("expected `{}`", c as char)))
        }
    }

    fn expr(&mut self) -> Result<Node> {
        let mut lhs = self.term()?;
        loop {
            if self.eat(b'+') {
                lhs = Node::Add(Box::new(lhs), Box::new(self.term()?));
            } else if self.eat(b'-') {
                lhs = Node::Sub(Box::new(lhs), Box::new(self.term()?));
            } else {
                return Ok(lhs);
            }
        }
    }

    fn term(&mut self) -> Result<Node> {
        let mut lhs = self.unary()?;
        loop {
            if self.eat(b'*') {
                lhs = Node::Mul(Box::new(lhs), Box::new(self.unary()?));
            } else if self.eat(b'/') {
                lhs = Node::Div(Box::new(lhs), Box::new(self.unary()?));
            } else {
                return Ok(lhs);
            }
        }
    }

    fn unary(&mut self) -> Result<Node> {
        if self.eat(b'-') {
            Ok(Node::Neg(Box::new(self.unary()?)))
        } else if self.eat(b'+') {
            self.unary()
        } else {
            self.primary()
        }
    }

    fn primary(&mut self) -> Result<Node> {
        match self.peek() {
            Some(b'(') => {
                self.pos += 1;
                let e = self.expr()?;
                self.expect(b')')?;
                Ok(e)
            }
            Some(c) if c.is_ascii_digit() || c == b'.' => self.number(),
            Some(c) if c.is_ascii_alphabetic() => {
                let start = self.pos;
                while self.pos < self.src.len() && self.src[self.pos].is_ascii_alphanumeric() {
                    self.pos += 1;
                }
                let ident = std::str::from_utf8(&self.src[start..self.pos]).unwrap_or("");
                let func = match ident {
                    "sin" => Some(Func::Sin),
                    "cos" => Some(Func::Cos),
                    "exp" => Some(Func::Exp),
                    "arctan" | "atan" => Some(Func::Arctan),
                    "tanh" => Some(Func::Tanh),
                    _ => None,
                };
                if let Some(f) = func {
                    self.expect(b'(')?;
                    let arg = self.expr()?;
                    self.expect(b')')?;
                    return Ok(Node::Call(f, Box::new(arg)));
                }
                match ident {
                    "pi" => Ok(Node::Const(std::f64::consts::PI)),
                    "e" => Ok(Node::Const(std::f64::consts::E)),
                    "t" => Ok(Node::Time),
                    "x" | "z" | "u" => {
                        self.expect(b'[')?;
                        self.skip_ws();
                        let start = self.pos;
                        while self.pos < self.src.len() && self.src[self.pos].is_ascii_digit() {
                            self.pos += 1;
                        }
                        let idx: usize = std::str::from_utf8(&self.src[start..self.pos])
                            .ok()
                            .and_then(|s| s.parse().ok())
                            .ok_or_else(|| self.error("expected index"))?;
                        self.expect(b']')?;
                        Ok(match ident {
                            "x" => Node::X(idx),
                            "z" => Node::Z(idx),
                            _ => Node::U(idx),
                        })
                    }
                    _ => Err(self.error(&format!("unknown identifier `{ident}`"))),
                }
            }
            _ => Err(self.error("unexpected token")),
        }
    }

    fn number(&mut self) -> Result<Node> {
        let start = self.pos;
        while self.pos < self.src.len() {
            let c = self.src[self.pos];
            let exp_sign = (c == b'+' || c == b'-')
                && self.pos > start
                && matches!(self.src[self.pos - 1], b'e' | b'E');
            if c.is_ascii_digit() || c == b'.' || c == b'e' || c == b'E' || exp_sign {
                self.pos += 1;
            } else {
                break;
            }
        }
        std::str::from_utf8(&self.src[start..self.pos])
            .ok()
            .and_then(|s| s.parse::<f64>().ok())
            .map(Node::Const)
            .ok_or_else(|| self.error("bad number"))
    }
}
