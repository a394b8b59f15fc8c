//! Rational coefficient expressions over named state variables.
//!
//! Expressions are parsed once, with every parameter replaced by its numeric
//! value, and then evaluated many times (once per element centroid during
//! assembly, once per step along a simulated path). Symbolic differentiation
//! produces the `∂a_ij/∂x_j` coefficients needed by the weak form.

use std::collections::HashMap;
use std::fmt;
use std::ops::{Add, Div, Mul, Neg, Sub};
use std::sync::Arc;

use thiserror::Error;

/// Errors raised while parsing or differentiating an expression.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum ExprError {
    #[error("unknown identifier `{name}` at position {pos}")]
    UnknownIdentifier { name: String, pos: usize },
    #[error("syntax error at position {pos}: {msg}")]
    Syntax { pos: usize, msg: String },
    #[error("exponent at position {pos} must be a nonnegative integer literal, found `{found}`")]
    NonIntegerExponent { pos: usize, found: String },
    #[error("`{0}` is not a declared variable")]
    UnknownVariable(String),
}

/// Errors raised while evaluating an expression.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalError {
    #[error("division by zero at point {point:?}")]
    DivisionByZero { point: Vec<f64> },
    #[error("expected a point with {expected} coordinates, got {found}")]
    DimensionMismatch { expected: usize, found: usize },
}

/// Syntax tree node. Variables are indices into the owning expression's
/// variable list.
#[derive(Debug, Clone, PartialEq)]
pub enum Node {
    Num(f64),
    Var(usize),
    Neg(Box<Node>),
    Add(Box<Node>, Box<Node>),
    Sub(Box<Node>, Box<Node>),
    Mul(Box<Node>, Box<Node>),
    Div(Box<Node>, Box<Node>),
    Pow(Box<Node>, u32),
}

impl Node {
    pub fn as_num(&self) -> Option<f64> {
        match self {
            Node::Num(v) => Some(*v),
            _ => None,
        }
    }

    pub fn is_zero(&self) -> bool {
        self.as_num() == Some(0.0)
    }

    fn is_one(&self) -> bool {
        self.as_num() == Some(1.0)
    }

    /// `base^exp` with constant folding.
    pub fn pow(self, exp: u32) -> Node {
        match (self, exp) {
            (_, 0) => Node::Num(1.0),
            (base, 1) => base,
            (Node::Num(v), n) => Node::Num(v.powi(n as i32)),
            (base, n) => Node::Pow(Box::new(base), n),
        }
    }

    fn eval(&self, point: &[f64]) -> Result<f64, EvalError> {
        Ok(match self {
            Node::Num(v) => *v,
            Node::Var(i) => point[*i],
            Node::Neg(a) => -a.eval(point)?,
            Node::Add(a, b) => a.eval(point)? + b.eval(point)?,
            Node::Sub(a, b) => a.eval(point)? - b.eval(point)?,
            Node::Mul(a, b) => a.eval(point)? * b.eval(point)?,
            Node::Div(a, b) => {
                let num = a.eval(point)?;
                let den = b.eval(point)?;
                if den == 0.0 {
                    return Err(EvalError::DivisionByZero { point: point.to_vec() });
                }
                num / den
            }
            Node::Pow(a, n) => a.eval(point)?.powi(*n as i32),
        })
    }

    fn derivative(&self, var: usize) -> Node {
        match self {
            Node::Num(_) => Node::Num(0.0),
            Node::Var(i) => Node::Num(if *i == var { 1.0 } else { 0.0 }),
            Node::Neg(a) => -a.derivative(var),
            Node::Add(a, b) => a.derivative(var) + b.derivative(var),
            Node::Sub(a, b) => a.derivative(var) - b.derivative(var),
            Node::Mul(a, b) => a.derivative(var) * (**b).clone() + (**a).clone() * b.derivative(var),
            Node::Div(a, b) => {
                let numer = a.derivative(var) * (**b).clone() - (**a).clone() * b.derivative(var);
                numer / (**b).clone().pow(2)
            }
            Node::Pow(_, 0) => Node::Num(0.0),
            Node::Pow(a, n) => Node::Num(f64::from(*n)) * (**a).clone().pow(n - 1) * a.derivative(var),
        }
    }

    fn max_var(&self) -> Option<usize> {
        match self {
            Node::Num(_) => None,
            Node::Var(i) => Some(*i),
            Node::Neg(a) | Node::Pow(a, _) => a.max_var(),
            Node::Add(a, b) | Node::Sub(a, b) | Node::Mul(a, b) | Node::Div(a, b) => a.max_var().max(b.max_var()),
        }
    }

    // Binding strength used by the printer: higher binds tighter.
    fn precedence(&self) -> u8 {
        match self {
            Node::Add(..) | Node::Sub(..) => 1,
            Node::Mul(..) | Node::Div(..) => 2,
            Node::Neg(_) => 3,
            Node::Num(v) if v.is_sign_negative() => 3,
            Node::Pow(..) => 4,
            Node::Num(_) | Node::Var(_) => 5,
        }
    }
}

impl Neg for Node {
    type Output = Node;
    fn neg(self) -> Node {
        match self {
            Node::Num(v) => Node::Num(-v),
            Node::Neg(a) => *a,
            a => Node::Neg(Box::new(a)),
        }
    }
}

impl Add for Node {
    type Output = Node;
    fn add(self, rhs: Node) -> Node {
        match (self, rhs) {
            (Node::Num(a), Node::Num(b)) => Node::Num(a + b),
            (a, b) if a.is_zero() => b,
            (a, b) if b.is_zero() => a,
            (a, b) => Node::Add(Box::new(a), Box::new(b)),
        }
    }
}

impl Sub for Node {
    type Output = Node;
    fn sub(self, rhs: Node) -> Node {
        match (self, rhs) {
            (Node::Num(a), Node::Num(b)) => Node::Num(a - b),
            (a, b) if b.is_zero() => a,
            (a, b) if a.is_zero() => -b,
            (a, b) => Node::Sub(Box::new(a), Box::new(b)),
        }
    }
}

impl Mul for Node {
    type Output = Node;
    fn mul(self, rhs: Node) -> Node {
        match (self, rhs) {
            (Node::Num(a), Node::Num(b)) => Node::Num(a * b),
            (a, b) if a.is_zero() || b.is_zero() => Node::Num(0.0),
            (a, b) if a.is_one() => b,
            (a, b) if b.is_one() => a,
            (Node::Num(-1.0), b) => -b,
            (a, Node::Num(-1.0)) => -a,
            (a, b) => Node::Mul(Box::new(a), Box::new(b)),
        }
    }
}

impl Div for Node {
    type Output = Node;
    fn div(self, rhs: Node) -> Node {
        match (self, rhs) {
            (Node::Num(a), Node::Num(b)) if b != 0.0 => Node::Num(a / b),
            // 0/b is 0 wherever the quotient is defined.
            (a, _) if a.is_zero() => Node::Num(0.0),
            (a, b) if b.is_one() => a,
            (a, b) => Node::Div(Box::new(a), Box::new(b)),
        }
    }
}

/// A parsed, fully numeric expression over an ordered list of variables.
#[derive(Debug, Clone, PartialEq)]
pub struct Expression {
    node: Node,
    variables: Arc<[String]>,
}

impl Expression {
    /// Parses `source`, substituting every parameter by its value.
    ///
    /// Grammar: decimal/scientific literals, identifiers, `+ - * / ^`,
    /// parentheses and unary minus. `^` binds tightest and takes a
    /// nonnegative integer literal exponent; unary minus binds tighter than
    /// `*` and `/`. Variables shadow parameters of the same name.
    pub fn parse<S: AsRef<str>>(
        source: &str,
        variables: &[S],
        parameters: &HashMap<String, f64>,
    ) -> Result<Expression, ExprError> {
        let variables: Arc<[String]> = variables.iter().map(|s| s.as_ref().to_owned()).collect();
        Self::parse_shared(source, variables, parameters)
    }

    /// Like [`Expression::parse`] but reuses an existing variable list.
    pub fn parse_shared(
        source: &str,
        variables: Arc<[String]>,
        parameters: &HashMap<String, f64>,
    ) -> Result<Expression, ExprError> {
        let tokens = tokenize(source)?;
        let mut parser = Parser {
            tokens,
            at: 0,
            variables: &variables,
            parameters,
            len: source.len(),
        };
        let node = parser.expression()?;
        if let Some(tok) = parser.peek() {
            return Err(ExprError::Syntax {
                pos: tok.pos,
                msg: format!("unexpected {}", tok.kind),
            });
        }
        Ok(Expression { node, variables })
    }

    /// Wraps an already built tree. Panics if the tree references a variable
    /// index outside `variables`.
    pub fn from_node(node: Node, variables: Arc<[String]>) -> Expression {
        if let Some(i) = node.max_var() {
            assert!(i < variables.len(), "variable index {i} out of range");
        }
        Expression { node, variables }
    }

    pub fn constant(value: f64, variables: Arc<[String]>) -> Expression {
        Expression {
            node: Node::Num(value),
            variables,
        }
    }

    pub fn node(&self) -> &Node {
        &self.node
    }

    pub fn into_node(self) -> Node {
        self.node
    }

    pub fn variables(&self) -> &Arc<[String]> {
        &self.variables
    }

    /// Returns the literal value if the expression folded to a constant.
    pub fn as_constant(&self) -> Option<f64> {
        self.node.as_num()
    }

    pub fn evaluate(&self, point: &[f64]) -> Result<f64, EvalError> {
        if point.len() != self.variables.len() {
            return Err(EvalError::DimensionMismatch {
                expected: self.variables.len(),
                found: point.len(),
            });
        }
        self.node.eval(point)
    }

    /// Exact partial derivative with respect to the named variable.
    pub fn differentiate(&self, variable: &str) -> Result<Expression, ExprError> {
        let index = self
            .variables
            .iter()
            .position(|v| v == variable)
            .ok_or_else(|| ExprError::UnknownVariable(variable.to_owned()))?;
        Ok(self.differentiate_index(index))
    }

    pub fn differentiate_index(&self, index: usize) -> Expression {
        Expression {
            node: self.node.derivative(index),
            variables: self.variables.clone(),
        }
    }
}

impl fmt::Display for Expression {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write_node(f, &self.node, &self.variables)
    }
}

fn write_number(f: &mut fmt::Formatter<'_>, v: f64) -> fmt::Result {
    let a = v.abs();
    if a != 0.0 && !(1e-4..1e6).contains(&a) {
        write!(f, "{v:e}")
    } else {
        write!(f, "{v}")
    }
}

fn write_child(f: &mut fmt::Formatter<'_>, node: &Node, vars: &[String], needs_parens: bool) -> fmt::Result {
    if needs_parens {
        f.write_str("(")?;
        write_node(f, node, vars)?;
        f.write_str(")")
    } else {
        write_node(f, node, vars)
    }
}

fn write_node(f: &mut fmt::Formatter<'_>, node: &Node, vars: &[String]) -> fmt::Result {
    let prec = node.precedence();
    match node {
        Node::Num(v) => write_number(f, *v),
        Node::Var(i) => f.write_str(&vars[*i]),
        Node::Neg(a) => {
            f.write_str("-")?;
            write_child(f, a, vars, a.precedence() < 3)
        }
        Node::Pow(a, n) => {
            write_child(f, a, vars, a.precedence() < 5)?;
            write!(f, "^{n}")
        }
        Node::Add(a, b) | Node::Sub(a, b) | Node::Mul(a, b) | Node::Div(a, b) => {
            let op = match node {
                Node::Add(..) => " + ",
                Node::Sub(..) => " - ",
                Node::Mul(..) => "*",
                _ => "/",
            };
            write_child(f, a, vars, a.precedence() < prec)?;
            f.write_str(op)?;
            write_child(f, b, vars, b.precedence() <= prec)
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum TokenKind {
    Number(f64, String),
    Ident(String),
    Op(char),
}

impl fmt::Display for TokenKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TokenKind::Number(_, text) => write!(f, "number `{text}`"),
            TokenKind::Ident(name) => write!(f, "identifier `{name}`"),
            TokenKind::Op(c) => write!(f, "`{c}`"),
        }
    }
}

#[derive(Debug, Clone)]
struct Token {
    kind: TokenKind,
    pos: usize,
}

fn tokenize(source: &str) -> Result<Vec<Token>, ExprError> {
    let bytes = source.as_bytes();
    let mut tokens = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i] as char;
        if c.is_ascii_whitespace() {
            i += 1;
        } else if c.is_ascii_digit() || c == '.' {
            let start = i;
            while i < bytes.len() && (bytes[i].is_ascii_digit() || bytes[i] == b'.') {
                i += 1;
            }
            if i < bytes.len() && (bytes[i] == b'e' || bytes[i] == b'E') {
                let mut j = i + 1;
                if j < bytes.len() && (bytes[j] == b'+' || bytes[j] == b'-') {
                    j += 1;
                }
                if j < bytes.len() && bytes[j].is_ascii_digit() {
                    while j < bytes.len() && bytes[j].is_ascii_digit() {
                        j += 1;
                    }
                    i = j;
                }
            }
            let text = &source[start..i];
            let value: f64 = text.parse().map_err(|_| ExprError::Syntax {
                pos: start,
                msg: format!("malformed number `{text}`"),
            })?;
            tokens.push(Token {
                kind: TokenKind::Number(value, text.to_owned()),
                pos: start,
            });
        } else if c.is_ascii_alphabetic() || c == '_' {
            let start = i;
            while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                i += 1;
            }
            tokens.push(Token {
                kind: TokenKind::Ident(source[start..i].to_owned()),
                pos: start,
            });
        } else if "+-*/^()".contains(c) {
            tokens.push(Token {
                kind: TokenKind::Op(c),
                pos: i,
            });
            i += 1;
        } else {
            let ch = source[i..].chars().next().unwrap_or(c);
            return Err(ExprError::Syntax {
                pos: i,
                msg: format!("unexpected character `{ch}`"),
            });
        }
    }
    Ok(tokens)
}

struct Parser<'a> {
    tokens: Vec<Token>,
    at: usize,
    variables: &'a [String],
    parameters: &'a HashMap<String, f64>,
    len: usize,
}

impl Parser<'_> {
    fn peek(&self) -> Option<&Token> {
        self.tokens.get(self.at)
    }

    fn eat_op(&mut self, op: char) -> bool {
        if matches!(self.peek(), Some(Token { kind: TokenKind::Op(c), .. }) if *c == op) {
            self.at += 1;
            true
        } else {
            false
        }
    }

    fn end_pos(&self) -> usize {
        self.peek().map_or(self.len, |t| t.pos)
    }

    // expression := term (('+' | '-') term)*
    fn expression(&mut self) -> Result<Node, ExprError> {
        let mut lhs = self.term()?;
        loop {
            if self.eat_op('+') {
                lhs = Node::Add(Box::new(lhs), Box::new(self.term()?));
            } else if self.eat_op('-') {
                lhs = Node::Sub(Box::new(lhs), Box::new(self.term()?));
            } else {
                return Ok(lhs);
            }
        }
    }

    // term := unary (('*' | '/') unary)*
    fn term(&mut self) -> Result<Node, ExprError> {
        let mut lhs = self.unary()?;
        loop {
            if self.eat_op('*') {
                lhs = Node::Mul(Box::new(lhs), Box::new(self.unary()?));
            } else if self.eat_op('/') {
                lhs = Node::Div(Box::new(lhs), Box::new(self.unary()?));
            } else {
                return Ok(lhs);
            }
        }
    }

    // unary := '-' unary | power
    fn unary(&mut self) -> Result<Node, ExprError> {
        if self.eat_op('-') {
            return Ok(Node::Neg(Box::new(self.unary()?)));
        }
        self.power()
    }

    // power := primary ('^' integer)*
    fn power(&mut self) -> Result<Node, ExprError> {
        let mut base = self.primary()?;
        while self.eat_op('^') {
            let pos = self.end_pos();
            match self.peek().cloned() {
                Some(Token {
                    kind: TokenKind::Number(v, text),
                    ..
                }) => {
                    self.at += 1;
                    if v < 0.0 || v.fract() != 0.0 || v > f64::from(i32::MAX as u32) {
                        return Err(ExprError::NonIntegerExponent { pos, found: text });
                    }
                    base = Node::Pow(Box::new(base), v as u32);
                }
                Some(tok) => {
                    let found = match tok.kind {
                        TokenKind::Number(_, t) | TokenKind::Ident(t) => t,
                        TokenKind::Op(c) => c.to_string(),
                    };
                    return Err(ExprError::NonIntegerExponent { pos, found });
                }
                None => {
                    return Err(ExprError::Syntax {
                        pos,
                        msg: "expected an exponent".into(),
                    })
                }
            }
        }
        Ok(base)
    }

    fn primary(&mut self) -> Result<Node, ExprError> {
        let pos = self.end_pos();
        let Some(tok) = self.peek().cloned() else {
            return Err(ExprError::Syntax {
                pos,
                msg: "unexpected end of input".into(),
            });
        };
        self.at += 1;
        match tok.kind {
            TokenKind::Number(v, _) => Ok(Node::Num(v)),
            TokenKind::Ident(name) => {
                if let Some(i) = self.variables.iter().position(|v| *v == name) {
                    Ok(Node::Var(i))
                } else if let Some(v) = self.parameters.get(&name) {
                    Ok(Node::Num(*v))
                } else {
                    Err(ExprError::UnknownIdentifier { name, pos: tok.pos })
                }
            }
            TokenKind::Op('(') => {
                let inner = self.expression()?;
                if !self.eat_op(')') {
                    return Err(ExprError::Syntax {
                        pos: self.end_pos(),
                        msg: "expected `)`".into(),
                    });
                }
                Ok(inner)
            }
            other => Err(ExprError::Syntax {
                pos: tok.pos,
                msg: format!("unexpected {other}"),
            }),
        }
    }
}
