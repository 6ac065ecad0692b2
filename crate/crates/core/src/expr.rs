//! Arithmetic expressions over `x, y, z` used to define potentials in
//! configuration files.
//!
//! Grammar: `+ - * / ^`, parentheses, numeric literals, the constant `pi`
//! (or `π`), and the functions `sin cos exp sqrt abs`. Evaluation carries a
//! forward-mode gradient so analytic `∇V` is available wherever `V` is.

use std::fmt;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
enum Func {
    Sin,
    Cos,
    Exp,
    Sqrt,
    Abs,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

#[derive(Debug, Clone, PartialEq)]
enum Node {
    Num(f64),
    Var(usize),
    Neg(Box<Node>),
    Bin(BinOp, Box<Node>, Box<Node>),
    Call(Func, Box<Node>),
}

/// A parsed expression together with its source text.
#[derive(Clone, PartialEq)]
pub struct Expr {
    source: String,
    root: Node,
}

impl fmt::Debug for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Expr({:?})", self.source)
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.source)
    }
}

#[derive(Debug, Clone, Copy)]
struct Dual {
    v: f64,
    g: [f64; 3],
}

impl Dual {
    fn constant(v: f64) -> Self {
        Self { v, g: [0.0; 3] }
    }

    fn chain(self, v: f64, d: f64) -> Self {
        Self {
            v,
            g: [d * self.g[0], d * self.g[1], d * self.g[2]],
        }
    }

    fn combine(a: Self, b: Self, v: f64, da: f64, db: f64) -> Self {
        Self {
            v,
            g: [
                da * a.g[0] + db * b.g[0],
                da * a.g[1] + db * b.g[1],
                da * a.g[2] + db * b.g[2],
            ],
        }
    }
}

impl Expr {
    pub fn parse(source: &str) -> Result<Self> {
        let tokens = tokenize(source)?;
        let mut p = Parser { tokens, pos: 0 };
        let root = p.expr()?;
        if p.pos != p.tokens.len() {
            return Err(Error::Expression(format!(
                "unexpected trailing input in {source:?}"
            )));
        }
        Ok(Self {
            source: source.trim().to_string(),
            root,
        })
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    /// Value of the expression if it does not depend on `x, y, z`.
    pub fn as_constant(&self) -> Option<f64> {
        fn depends(n: &Node) -> bool {
            match n {
                Node::Num(_) => false,
                Node::Var(_) => true,
                Node::Neg(a) | Node::Call(_, a) => depends(a),
                Node::Bin(_, a, b) => depends(a) || depends(b),
            }
        }
        if depends(&self.root) {
            None
        } else {
            Some(self.eval([0.0; 3]))
        }
    }

    pub fn eval(&self, x: [f64; 3]) -> f64 {
        eval(&self.root, x).v
    }

    /// Value and analytic gradient at `x`.
    pub fn eval_with_gradient(&self, x: [f64; 3]) -> (f64, [f64; 3]) {
        let d = eval(&self.root, x);
        (d.v, d.g)
    }
}

fn eval(node: &Node, x: [f64; 3]) -> Dual {
    match node {
        Node::Num(c) => Dual::constant(*c),
        Node::Var(i) => {
            let mut g = [0.0; 3];
            g[*i] = 1.0;
            Dual { v: x[*i], g }
        }
        Node::Neg(a) => {
            let a = eval(a, x);
            a.chain(-a.v, -1.0)
        }
        Node::Call(f, a) => {
            let a = eval(a, x);
            match f {
                Func::Sin => a.chain(a.v.sin(), a.v.cos()),
                Func::Cos => a.chain(a.v.cos(), -a.v.sin()),
                Func::Exp => {
                    let e = a.v.exp();
                    a.chain(e, e)
                }
                Func::Sqrt => {
                    let s = a.v.sqrt();
                    let d = if s > 0.0 { 0.5 / s } else { 0.0 };
                    a.chain(s, d)
                }
                Func::Abs => {
                    let d = if a.v > 0.0 {
                        1.0
                    } else if a.v < 0.0 {
                        -1.0
                    } else {
                        0.0
                    };
                    a.chain(a.v.abs(), d)
                }
            }
        }
        Node::Bin(op, a, b) => {
            let a = eval(a, x);
            let b_val = eval(b, x);
            match op {
                BinOp::Add => Dual::combine(a, b_val, a.v + b_val.v, 1.0, 1.0),
                BinOp::Sub => Dual::combine(a, b_val, a.v - b_val.v, 1.0, -1.0),
                BinOp::Mul => Dual::combine(a, b_val, a.v * b_val.v, b_val.v, a.v),
                BinOp::Div => {
                    let q = a.v / b_val.v;
                    Dual::combine(a, b_val, q, 1.0 / b_val.v, -q / b_val.v)
                }
                BinOp::Pow => pow(a, b_val, is_constant_node(b)),
            }
        }
    }
}

fn is_constant_node(n: &Node) -> bool {
    match n {
        Node::Num(_) => true,
        Node::Var(_) => false,
        Node::Neg(a) | Node::Call(_, a) => is_constant_node(a),
        Node::Bin(_, a, b) => is_constant_node(a) && is_constant_node(b),
    }
}

fn pow(a: Dual, b: Dual, b_constant: bool) -> Dual {
    if b_constant {
        let e = b.v;
        if e.fract() == 0.0 && e.abs() < 64.0 {
            let k = e as i32;
            let v = a.v.powi(k);
            let d = if k == 0 { 0.0 } else { e * a.v.powi(k - 1) };
            return a.chain(v, d);
        }
        let v = a.v.powf(e);
        let d = if a.v == 0.0 {
            0.0
        } else {
            e * a.v.powf(e - 1.0)
        };
        return a.chain(v, d);
    }
    // a^b = exp(b ln a), base must be positive
    let v = a.v.powf(b.v);
    let da = if a.v == 0.0 {
        0.0
    } else {
        b.v * a.v.powf(b.v - 1.0)
    };
    let db = if a.v > 0.0 { v * a.v.ln() } else { 0.0 };
    Dual::combine(a, b, v, da, db)
}

#[derive(Debug, Clone, PartialEq)]
enum Token {
    Num(f64),
    Ident(String),
    Op(char),
    LParen,
    RParen,
}

fn tokenize(src: &str) -> Result<Vec<Token>> {
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
            if i < chars.len() && (chars[i] == 'e' || chars[i] == 'E') {
                let mut j = i + 1;
                if j < chars.len() && (chars[j] == '+' || chars[j] == '-') {
                    j += 1;
                }
                if j < chars.len() && chars[j].is_ascii_digit() {
                    i = j;
                    while i < chars.len() && chars[i].is_ascii_digit() {
                        i += 1;
                    }
                }
            }
            let text: String = chars[start..i].iter().collect();
            let v = text
                .parse::<f64>()
                .map_err(|_| Error::Expression(format!("bad number {text:?}")))?;
            out.push(Token::Num(v));
        } else if c.is_alphabetic() || c == '_' {
            let start = i;
            while i < chars.len() && (chars[i].is_alphanumeric() || chars[i] == '_') {
                i += 1;
            }
            out.push(Token::Ident(chars[start..i].iter().collect()));
        } else if "+-*/^".contains(c) {
            out.push(Token::Op(c));
            i += 1;
        } else if c == '(' {
            out.push(Token::LParen);
            i += 1;
        } else if c == ')' {
            out.push(Token::RParen);
            i += 1;
        } else {
            return Err(Error::Expression(format!(
                "unexpected character {c:?} in {src:?}"
            )));
        }
    }
    Ok(out)
}

struct Parser {
    tokens: Vec<Token>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Token> {
        self.tokens.get(self.pos)
    }

    fn next(&mut self) -> Option<Token> {
        let t = self.tokens.get(self.pos).cloned();
        self.pos += 1;
        t
    }

    fn expr(&mut self) -> Result<Node> {
        let mut lhs = self.term()?;
        while let Some(Token::Op(c @ ('+' | '-'))) = self.peek().cloned() {
            self.pos += 1;
            let rhs = self.term()?;
            let op = if c == '+' { BinOp::Add } else { BinOp::Sub };
            lhs = Node::Bin(op, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn term(&mut self) -> Result<Node> {
        let mut lhs = self.unary()?;
        while let Some(Token::Op(c @ ('*' | '/'))) = self.peek().cloned() {
            self.pos += 1;
            let rhs = self.unary()?;
            let op = if c == '*' { BinOp::Mul } else { BinOp::Div };
            lhs = Node::Bin(op, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Node> {
        match self.peek() {
            Some(Token::Op('-')) => {
                self.pos += 1;
                Ok(Node::Neg(Box::new(self.unary()?)))
            }
            Some(Token::Op('+')) => {
                self.pos += 1;
                self.unary()
            }
            _ => self.power(),
        }
    }

    fn power(&mut self) -> Result<Node> {
        let base = self.atom()?;
        if let Some(Token::Op('^')) = self.peek() {
            self.pos += 1;
            let exp = self.unary()?;
            return Ok(Node::Bin(BinOp::Pow, Box::new(base), Box::new(exp)));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Node> {
        match self.next() {
            Some(Token::Num(v)) => Ok(Node::Num(v)),
            Some(Token::LParen) => {
                let e = self.expr()?;
                match self.next() {
                    Some(Token::RParen) => Ok(e),
                    _ => Err(Error::Expression("missing ')'".into())),
                }
            }
            Some(Token::Ident(name)) => {
                let func = match name.as_str() {
                    "x" => return Ok(Node::Var(0)),
                    "y" => return Ok(Node::Var(1)),
                    "z" => return Ok(Node::Var(2)),
                    "pi" | "π" => return Ok(Node::Num(std::f64::consts::PI)),
                    "sin" => Func::Sin,
                    "cos" => Func::Cos,
                    "exp" => Func::Exp,
                    "sqrt" => Func::Sqrt,
                    "abs" => Func::Abs,
                    other => {
                        return Err(Error::Expression(format!("unknown identifier {other:?}")))
                    }
                };
                match self.next() {
                    Some(Token::LParen) => {}
                    _ => {
                        return Err(Error::Expression(format!(
                            "function {name} needs parenthesized argument"
                        )))
                    }
                }
                let arg = self.expr()?;
                match self.next() {
                    Some(Token::RParen) => Ok(Node::Call(func, Box::new(arg))),
                    _ => Err(Error::Expression("missing ')'".into())),
                }
            }
            Some(t) => Err(Error::Expression(format!("unexpected token {t:?}"))),
            None => Err(Error::Expression("unexpected end of expression".into())),
        }
    }
}
