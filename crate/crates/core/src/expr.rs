//! A small arithmetic language for closed-form symbols in spec files.
//!
//! Values are complex. Comparisons act on real parts and yield `1` or `0`.
//! `^` binds tighter than unary minus and associates to the right.

use num_complex::Complex64;
use std::fmt;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ExprError {
    #[error("parse error at offset {offset}: {message}")]
    Parse { offset: usize, message: String },
    #[error("unbound variable `{name}` at offset {offset}")]
    Unbound { name: String, offset: usize },
}

#[derive(Debug, Error, Clone, Copy, PartialEq, Eq)]
pub enum EvalError {
    #[error("division by zero")]
    DivisionByZero,
    #[error("non-finite result")]
    NonFinite,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Func {
    Abs,
    Sign,
    Exp,
    Log,
    Sqrt,
    Sin,
    Cos,
    Tan,
    Atan,
    Tanh,
    Re,
    Im,
    Conj,
    Min,
    Max,
}

impl Func {
    fn lookup(name: &str) -> Option<(Func, usize)> {
        Some(match name {
            "abs" => (Func::Abs, 1),
            "sign" => (Func::Sign, 1),
            "exp" => (Func::Exp, 1),
            "log" => (Func::Log, 1),
            "sqrt" => (Func::Sqrt, 1),
            "sin" => (Func::Sin, 1),
            "cos" => (Func::Cos, 1),
            "tan" => (Func::Tan, 1),
            "atan" => (Func::Atan, 1),
            "tanh" => (Func::Tanh, 1),
            "re" => (Func::Re, 1),
            "im" => (Func::Im, 1),
            "conj" => (Func::Conj, 1),
            "min" => (Func::Min, 2),
            "max" => (Func::Max, 2),
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
}

#[derive(Debug, Clone, PartialEq)]
enum Node {
    Const(Complex64),
    Var(usize),
    Neg(Box<Node>),
    Bin(BinOp, Box<Node>, Box<Node>),
    Call(Func, Vec<Node>),
}

/// A parsed expression bound to a fixed list of variable names.
#[derive(Debug, Clone, PartialEq)]
pub struct Expr {
    source: String,
    root: Node,
    arity: usize,
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.source)
    }
}

impl Expr {
    /// Parses `source`; identifiers other than `i`, `pi` and function names
    /// must appear in `variables`, whose order fixes the evaluation slots.
    pub fn parse(source: &str, variables: &[&str]) -> Result<Self, ExprError> {
        let mut parser = Parser {
            src: source.as_bytes(),
            pos: 0,
            variables,
        };
        let root = parser.comparison()?;
        parser.skip_ws();
        if parser.pos < parser.src.len() {
            return Err(parser.error("unexpected trailing input"));
        }
        Ok(Self {
            source: source.to_string(),
            root,
            arity: variables.len(),
        })
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    pub fn eval(&self, values: &[Complex64]) -> Result<Complex64, EvalError> {
        assert_eq!(values.len(), self.arity, "expression arity");
        let v = eval(&self.root, values)?;
        if v.re.is_finite() && v.im.is_finite() {
            Ok(v)
        } else {
            Err(EvalError::NonFinite)
        }
    }

    /// Evaluates with real arguments.
    pub fn eval_real(&self, values: &[f64]) -> Result<Complex64, EvalError> {
        let args: Vec<Complex64> = values.iter().map(|&x| Complex64::new(x, 0.0)).collect();
        self.eval(&args)
    }
}

fn truth(b: bool) -> Complex64 {
    Complex64::new(if b { 1.0 } else { 0.0 }, 0.0)
}

fn eval(node: &Node, vars: &[Complex64]) -> Result<Complex64, EvalError> {
    Ok(match node {
        Node::Const(c) => *c,
        Node::Var(i) => vars[*i],
        Node::Neg(a) => -eval(a, vars)?,
        Node::Bin(op, a, b) => {
            let x = eval(a, vars)?;
            let y = eval(b, vars)?;
            match op {
                BinOp::Add => x + y,
                BinOp::Sub => x - y,
                BinOp::Mul => x * y,
                BinOp::Div => {
                    if y == Complex64::new(0.0, 0.0) {
                        return Err(EvalError::DivisionByZero);
                    }
                    x / y
                }
                BinOp::Pow => power(x, y),
                BinOp::Eq => truth(x == y),
                BinOp::Ne => truth(x != y),
                BinOp::Lt => truth(x.re < y.re),
                BinOp::Le => truth(x.re <= y.re),
                BinOp::Gt => truth(x.re > y.re),
                BinOp::Ge => truth(x.re >= y.re),
            }
        }
        Node::Call(f, args) => {
            let x = eval(&args[0], vars)?;
            match f {
                Func::Abs => Complex64::new(x.norm(), 0.0),
                Func::Sign => {
                    if x.im == 0.0 {
                        Complex64::new(if x.re > 0.0 { 1.0 } else if x.re < 0.0 { -1.0 } else { 0.0 }, 0.0)
                    } else {
                        x / x.norm()
                    }
                }
                Func::Exp => x.exp(),
                Func::Log => x.ln(),
                Func::Sqrt => x.sqrt(),
                Func::Sin => x.sin(),
                Func::Cos => x.cos(),
                Func::Tan => x.tan(),
                Func::Atan => {
                    if x.im == 0.0 {
                        Complex64::new(x.re.atan(), 0.0)
                    } else {
                        x.atan()
                    }
                }
                Func::Tanh => x.tanh(),
                Func::Re => Complex64::new(x.re, 0.0),
                Func::Im => Complex64::new(x.im, 0.0),
                Func::Conj => x.conj(),
                Func::Min | Func::Max => {
                    let y = eval(&args[1], vars)?;
                    let pick_x = if *f == Func::Min { x.re <= y.re } else { x.re >= y.re };
                    if pick_x {
                        x
                    } else {
                        y
                    }
                }
            }
        }
    })
}

/// Integer powers stay exact; anything else goes through the principal branch.
fn power(x: Complex64, y: Complex64) -> Complex64 {
    if y.im == 0.0 && y.re.fract() == 0.0 && y.re.abs() <= 64.0 {
        x.powi(y.re as i32)
    } else if x.im == 0.0 && y.im == 0.0 && x.re >= 0.0 {
        Complex64::new(x.re.powf(y.re), 0.0)
    } else {
        x.powc(y)
    }
}

struct Parser<'a> {
    src: &'a [u8],
    pos: usize,
    variables: &'a [&'a str],
}

impl Parser<'_> {
    fn error(&self, message: &str) -> ExprError {
        ExprError::Parse {
            offset: self.pos,
            message: message.to_string(),
        }
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

    fn eat(&mut self, token: &str) -> bool {
        self.skip_ws();
        if self.src[self.pos..].starts_with(token.as_bytes()) {
            self.pos += token.len();
            true
        } else {
            false
        }
    }

    fn comparison(&mut self) -> Result<Node, ExprError> {
        let lhs = self.additive()?;
        let ops = [
            ("==", BinOp::Eq),
            ("!=", BinOp::Ne),
            ("<=", BinOp::Le),
            (">=", BinOp::Ge),
            ("<", BinOp::Lt),
            (">", BinOp::Gt),
        ];
        for (token, op) in ops {
            if self.eat(token) {
                let rhs = self.additive()?;
                return Ok(Node::Bin(op, Box::new(lhs), Box::new(rhs)));
            }
        }
        Ok(lhs)
    }

    fn additive(&mut self) -> Result<Node, ExprError> {
        let mut lhs = self.multiplicative()?;
        loop {
            let op = match self.peek() {
                Some(b'+') => BinOp::Add,
                Some(b'-') => BinOp::Sub,
                _ => return Ok(lhs),
            };
            self.pos += 1;
            let rhs = self.multiplicative()?;
            lhs = Node::Bin(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn multiplicative(&mut self) -> Result<Node, ExprError> {
        let mut lhs = self.unary()?;
        loop {
            let op = match self.peek() {
                Some(b'*') => BinOp::Mul,
                Some(b'/') => BinOp::Div,
                _ => return Ok(lhs),
            };
            self.pos += 1;
            let rhs = self.unary()?;
            lhs = Node::Bin(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn unary(&mut self) -> Result<Node, ExprError> {
        match self.peek() {
            Some(b'-') => {
                self.pos += 1;
                Ok(Node::Neg(Box::new(self.unary()?)))
            }
            Some(b'+') => {
                self.pos += 1;
                self.unary()
            }
            _ => self.power(),
        }
    }

    fn power(&mut self) -> Result<Node, ExprError> {
        let base = self.atom()?;
        if self.peek() == Some(b'^') {
            self.pos += 1;
            let exponent = self.unary()?;
            return Ok(Node::Bin(BinOp::Pow, Box::new(base), Box::new(exponent)));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Node, ExprError> {
        match self.peek() {
            None => Err(self.error("unexpected end of input")),
            Some(b'(') => {
                self.pos += 1;
                let inner = self.comparison()?;
                if !self.eat(")") {
                    return Err(self.error("expected `)`"));
                }
                Ok(inner)
            }
            Some(c) if c.is_ascii_digit() || c == b'.' => self.number(),
            Some(c) if c.is_ascii_alphabetic() || c == b'_' => self.identifier(),
            Some(_) => Err(self.error("unexpected character")),
        }
    }

    fn number(&mut self) -> Result<Node, ExprError> {
        let start = self.pos;
        let digits = |p: &mut Self| {
            while p.pos < p.src.len() && (p.src[p.pos].is_ascii_digit() || p.src[p.pos] == b'.') {
                p.pos += 1;
            }
        };
        digits(self);
        if self.pos < self.src.len() && matches!(self.src[self.pos], b'e' | b'E') {
            let save = self.pos;
            self.pos += 1;
            if self.pos < self.src.len() && matches!(self.src[self.pos], b'+' | b'-') {
                self.pos += 1;
            }
            if self.pos < self.src.len() && self.src[self.pos].is_ascii_digit() {
                digits(self);
            } else {
                self.pos = save;
            }
        }
        let text = std::str::from_utf8(&self.src[start..self.pos]).expect("ascii");
        let value: f64 = text.parse().map_err(|_| ExprError::Parse {
            offset: start,
            message: format!("bad number `{text}`"),
        })?;
        if self.pos < self.src.len() && self.src[self.pos] == b'i' {
            let next = self.src.get(self.pos + 1).copied();
            if !next.is_some_and(|c| c.is_ascii_alphanumeric() || c == b'_') {
                self.pos += 1;
                return Ok(Node::Const(Complex64::new(0.0, value)));
            }
        }
        Ok(Node::Const(Complex64::new(value, 0.0)))
    }

    fn identifier(&mut self) -> Result<Node, ExprError> {
        let start = self.pos;
        while self.pos < self.src.len() && (self.src[self.pos].is_ascii_alphanumeric() || self.src[self.pos] == b'_') {
            self.pos += 1;
        }
        let name = std::str::from_utf8(&self.src[start..self.pos]).expect("ascii");
        if let Some((func, arity)) = Func::lookup(name) {
            if !self.eat("(") {
                return Err(self.error(&format!("expected `(` after `{name}`")));
            }
            let mut args = vec![self.comparison()?];
            while self.eat(",") {
                args.push(self.comparison()?);
            }
            if !self.eat(")") {
                return Err(self.error("expected `)`"));
            }
            if args.len() != arity {
                return Err(ExprError::Parse {
                    offset: start,
                    message: format!("`{name}` takes {arity} argument(s), got {}", args.len()),
                });
            }
            return Ok(Node::Call(func, args));
        }
        match name {
            "i" => Ok(Node::Const(Complex64::new(0.0, 1.0))),
            "pi" => Ok(Node::Const(Complex64::new(std::f64::consts::PI, 0.0))),
            _ => match self.variables.iter().position(|v| *v == name) {
                Some(slot) => Ok(Node::Var(slot)),
                None => Err(ExprError::Unbound {
                    name: name.to_string(),
                    offset: start,
                }),
            },
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn eval_at(src: &str, vars: &[&str], values: &[f64]) -> Result<Complex64, EvalError> {
        Expr::parse(src, vars).unwrap().eval_real(values)
    }

    #[test]
    fn precedence_and_associativity() {
        assert_eq!(eval_at("1+2*3", &[], &[]).unwrap().re, 7.0);
        assert_eq!(eval_at("2^3^2", &[], &[]).unwrap().re, 512.0);
        assert_eq!(eval_at("-2^2", &[], &[]).unwrap().re, -4.0);
        assert_eq!(eval_at("(1+2)*3 - 4/2", &[], &[]).unwrap().re, 7.0);
        assert_eq!(eval_at("1 + (2 < 3)", &[], &[]).unwrap().re, 2.0);
        assert_eq!(eval_at("2.5e1", &[], &[]).unwrap().re, 25.0);
    }

    #[test]
    fn complex_literals() {
        assert_eq!(eval_at("3i", &[], &[]).unwrap(), Complex64::new(0.0, 3.0));
        assert_eq!(eval_at("i*i", &[], &[]).unwrap(), Complex64::new(-1.0, 0.0));
        assert_eq!(eval_at("abs(3+4i)", &[], &[]).unwrap().re, 5.0);
        assert_eq!(eval_at("conj(1+2i)", &[], &[]).unwrap(), Complex64::new(1.0, -2.0));
    }

    #[test]
    fn functions_and_variables() {
        let vars = ["s1", "t1"];
        assert_eq!(eval_at("sign(s1-t1)", &vars, &[2.0, 5.0]).unwrap().re, -1.0);
        assert_eq!(eval_at("sign(s1-t1)", &vars, &[5.0, 5.0]).unwrap().re, 0.0);
        assert_eq!(eval_at("max(s1, t1) - min(s1, t1)", &vars, &[2.0, 5.0]).unwrap().re, 3.0);
        let v = eval_at("atan(s1)*4", &vars, &[1.0, 0.0]).unwrap().re;
        assert!((v - std::f64::consts::PI).abs() < 1e-15);
    }

    #[test]
    fn error_positions() {
        assert_eq!(
            Expr::parse("(s1+", &["s1"]).unwrap_err(),
            ExprError::Parse {
                offset: 4,
                message: "unexpected end of input".into()
            }
        );
        match Expr::parse("s1 + q2", &["s1"]).unwrap_err() {
            ExprError::Unbound { name, offset } => assert_eq!((name.as_str(), offset), ("q2", 5)),
            other => panic!("{other:?}"),
        }
        assert!(matches!(Expr::parse("1 2", &[]), Err(ExprError::Parse { offset: 2, .. })));
        assert!(matches!(Expr::parse("max(1)", &[]), Err(ExprError::Parse { offset: 0, .. })));
    }

    #[test]
    fn division_by_zero_is_an_error() {
        assert_eq!(eval_at("1/(s1-t1)", &["s1", "t1"], &[1.0, 1.0]), Err(EvalError::DivisionByZero));
        assert_eq!(eval_at("log(0)", &[], &[]), Err(EvalError::NonFinite));
    }
}
