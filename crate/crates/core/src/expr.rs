//! Closed-form scalar expressions for coefficients and impulse rules.
//!
//! Expressions are trees over constants, the time variable `t`, the knot
//! index `k`, sums, products, negation, nonnegative integer powers and the
//! functions `sin`, `cos`, `exp`. Text round-trips through [`ScalarExpr::parse`]
//! and the `Display` impl.
//!
//! Named parameters (e.g. `alpha`, `q0`) are substituted at parse time, and
//! every variable-free subtree is folded to a single constant.

use std::collections::{BTreeMap, BTreeSet};
use std::f64::consts::PI;
use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

/// Free variable of an expression. Evaluation binds both to the same point.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Variable {
    /// `t`, used by coefficient functions.
    Time,
    /// `k`, used by impulse rules.
    Index,
}

#[derive(Debug, Clone, PartialEq)]
enum Node {
    Const(f64),
    Var(Variable),
    Neg(Box<Node>),
    Sum(Vec<Node>),
    Product(Vec<Node>),
    Pow(Box<Node>, u32),
    Sin(Box<Node>),
    Cos(Box<Node>),
    Exp(Box<Node>),
}

/// An immutable real-valued expression tree.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarExpr {
    root: Node,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ExprError {
    #[error("syntax error at position {position}: {message}")]
    Syntax { position: usize, message: String },
    #[error("unknown identifier `{name}` at position {position}")]
    UnknownIdentifier { name: String, position: usize },
    #[error("constant must be finite, got {0}")]
    NonFinite(f64),
    #[error("power exponent must be a nonnegative integer, got {0}")]
    BadExponent(f64),
    #[error("sum and product need at least one operand")]
    Empty,
}

impl ScalarExpr {
    pub fn constant(value: f64) -> Result<Self, ExprError> {
        if !value.is_finite() {
            return Err(ExprError::NonFinite(value));
        }
        Ok(Self { root: Node::Const(value) })
    }

    pub fn zero() -> Self {
        Self { root: Node::Const(0.0) }
    }

    pub fn time() -> Self {
        Self { root: Node::Var(Variable::Time) }
    }

    pub fn index() -> Self {
        Self { root: Node::Var(Variable::Index) }
    }

    #[allow(clippy::should_implement_trait)]
    pub fn neg(child: ScalarExpr) -> Self {
        Self { root: Node::Neg(Box::new(child.root)) }
    }

    pub fn sum(children: Vec<ScalarExpr>) -> Result<Self, ExprError> {
        if children.is_empty() {
            return Err(ExprError::Empty);
        }
        Ok(Self { root: Node::Sum(children.into_iter().map(|c| c.root).collect()) })
    }

    pub fn product(children: Vec<ScalarExpr>) -> Result<Self, ExprError> {
        if children.is_empty() {
            return Err(ExprError::Empty);
        }
        Ok(Self { root: Node::Product(children.into_iter().map(|c| c.root).collect()) })
    }

    /// Integer power. Negative or oversized exponents are rejected here so
    /// evaluation never fails.
    pub fn power(child: ScalarExpr, exponent: i64) -> Result<Self, ExprError> {
        if !(0..=i32::MAX as i64).contains(&exponent) {
            return Err(ExprError::BadExponent(exponent as f64));
        }
        Ok(Self { root: Node::Pow(Box::new(child.root), exponent as u32) })
    }

    pub fn sin(child: ScalarExpr) -> Self {
        Self { root: Node::Sin(Box::new(child.root)) }
    }

    pub fn cos(child: ScalarExpr) -> Self {
        Self { root: Node::Cos(Box::new(child.root)) }
    }

    pub fn exp(child: ScalarExpr) -> Self {
        Self { root: Node::Exp(Box::new(child.root)) }
    }

    /// Evaluates the expression with every variable bound to `point`.
    pub fn eval(&self, point: f64) -> f64 {
        self.root.eval(point)
    }

    /// Parses text with no named parameters.
    pub fn parse(text: &str) -> Result<Self, ExprError> {
        Self::parse_with(text, &BTreeMap::new())
    }

    /// Parses text, substituting the given named parameters as constants.
    pub fn parse_with(text: &str, params: &BTreeMap<String, f64>) -> Result<Self, ExprError> {
        let tokens = tokenize(text)?;
        let mut parser = Parser { tokens, pos: 0, params, len: text.len() };
        let root = parser.expr()?;
        if let Some(tok) = parser.peek() {
            return Err(ExprError::Syntax {
                position: tok.position,
                message: format!("unexpected {}", tok.kind.describe()),
            });
        }
        Ok(Self { root })
    }

    /// Named parameters referenced by `text`, excluding `t`, `k`, `pi` and
    /// function names.
    pub fn parameter_names(text: &str) -> Result<BTreeSet<String>, ExprError> {
        Ok(tokenize(text)?
            .into_iter()
            .filter_map(|tok| match tok.kind {
                TokenKind::Ident(name) if !matches!(name.as_str(), "t" | "k" | "pi" | "sin" | "cos" | "exp") => Some(name),
                _ => None,
            })
            .collect())
    }

    /// Constant value if the tree has no variables.
    pub fn as_constant(&self) -> Option<f64> {
        if self.root.has_vars() {
            None
        } else {
            Some(self.root.eval(0.0))
        }
    }

    pub fn uses(&self, var: Variable) -> bool {
        self.root.uses(var)
    }

    pub fn depth(&self) -> usize {
        self.root.depth()
    }
}

impl Node {
    fn eval(&self, x: f64) -> f64 {
        match self {
            Node::Const(v) => *v,
            Node::Var(_) => x,
            Node::Neg(c) => -c.eval(x),
            Node::Sum(cs) => {
                let mut it = cs.iter();
                let first = it.next().map_or(0.0, |c| c.eval(x));
                it.fold(first, |acc, c| acc + c.eval(x))
            }
            Node::Product(cs) => {
                let mut it = cs.iter();
                let first = it.next().map_or(1.0, |c| c.eval(x));
                it.fold(first, |acc, c| acc * c.eval(x))
            }
            Node::Pow(c, n) => c.eval(x).powi(*n as i32),
            Node::Sin(c) => c.eval(x).sin(),
            Node::Cos(c) => c.eval(x).cos(),
            Node::Exp(c) => c.eval(x).exp(),
        }
    }

    fn has_vars(&self) -> bool {
        match self {
            Node::Const(_) => false,
            Node::Var(_) => true,
            Node::Neg(c) | Node::Pow(c, _) | Node::Sin(c) | Node::Cos(c) | Node::Exp(c) => {
                c.has_vars()
            }
            Node::Sum(cs) | Node::Product(cs) => cs.iter().any(Node::has_vars),
        }
    }

    fn uses(&self, var: Variable) -> bool {
        match self {
            Node::Const(_) => false,
            Node::Var(v) => *v == var,
            Node::Neg(c) | Node::Pow(c, _) | Node::Sin(c) | Node::Cos(c) | Node::Exp(c) => {
                c.uses(var)
            }
            Node::Sum(cs) | Node::Product(cs) => cs.iter().any(|c| c.uses(var)),
        }
    }

    fn depth(&self) -> usize {
        match self {
            Node::Const(_) | Node::Var(_) => 1,
            Node::Neg(c) | Node::Pow(c, _) | Node::Sin(c) | Node::Cos(c) | Node::Exp(c) => {
                1 + c.depth()
            }
            Node::Sum(cs) | Node::Product(cs) => 1 + cs.iter().map(Node::depth).max().unwrap_or(0),
        }
    }

    fn folded(self) -> Node {
        if self.has_vars() {
            self
        } else {
            Node::Const(self.eval(0.0))
        }
    }

    fn precedence(&self) -> u8 {
        match self {
            Node::Sum(_) => 1,
            Node::Product(_) => 2,
            Node::Neg(_) => 3,
            Node::Const(v) if v.is_sign_negative() => 3,
            Node::Pow(..) => 4,
            _ => 5,
        }
    }

    fn write(&self, out: &mut String) {
        match self {
            Node::Const(v) => {
                if *v == PI {
                    out.push_str("pi");
                } else if v.is_sign_negative() {
                    out.push_str(&format!("-{}", -v));
                } else {
                    out.push_str(&format!("{v}"));
                }
            }
            Node::Var(Variable::Time) => out.push('t'),
            Node::Var(Variable::Index) => out.push('k'),
            Node::Neg(c) => {
                out.push('-');
                c.write_at(out, 4);
            }
            Node::Sum(cs) => {
                for (i, c) in cs.iter().enumerate() {
                    match c {
                        Node::Neg(inner) if i > 0 => {
                            out.push('-');
                            inner.write_at(out, 2);
                        }
                        Node::Const(v) if i > 0 && v.is_sign_negative() => {
                            out.push_str(&format!("-{}", -v));
                        }
                        _ => {
                            if i > 0 {
                                out.push('+');
                            }
                            // Nested sums and leading negatives keep their grouping.
                            c.write_at(out, if i == 0 { 3 } else { 2 });
                        }
                    }
                }
            }
            Node::Product(cs) => {
                for (i, c) in cs.iter().enumerate() {
                    if i > 0 {
                        out.push('*');
                    }
                    c.write_at(out, 4);
                }
            }
            Node::Pow(c, n) => {
                c.write_at(out, 5);
                out.push_str(&format!("^{n}"));
            }
            Node::Sin(c) => write_call(out, "sin", c),
            Node::Cos(c) => write_call(out, "cos", c),
            Node::Exp(c) => write_call(out, "exp", c),
        }
    }

    fn write_at(&self, out: &mut String, min_precedence: u8) {
        if self.precedence() < min_precedence {
            out.push('(');
            self.write(out);
            out.push(')');
        } else {
            self.write(out);
        }
    }
}

fn write_call(out: &mut String, name: &str, arg: &Node) {
    out.push_str(name);
    out.push('(');
    arg.write(out);
    out.push(')');
}

impl fmt::Display for ScalarExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut s = String::new();
        self.root.write(&mut s);
        f.write_str(&s)
    }
}

impl std::str::FromStr for ScalarExpr {
    type Err = ExprError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::parse(s)
    }
}

impl Serialize for ScalarExpr {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for ScalarExpr {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let text = String::deserialize(deserializer)?;
        Self::parse(&text).map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq)]
enum TokenKind {
    Number(f64),
    Ident(String),
    Plus,
    Minus,
    Star,
    Slash,
    Caret,
    LParen,
    RParen,
}

impl TokenKind {
    fn describe(&self) -> String {
        match self {
            TokenKind::Number(v) => format!("number {v}"),
            TokenKind::Ident(s) => format!("identifier `{s}`"),
            TokenKind::Plus => "`+`".into(),
            TokenKind::Minus => "`-`".into(),
            TokenKind::Star => "`*`".into(),
            TokenKind::Slash => "`/`".into(),
            TokenKind::Caret => "`^`".into(),
            TokenKind::LParen => "`(`".into(),
            TokenKind::RParen => "`)`".into(),
        }
    }
}

#[derive(Debug, Clone)]
struct Token {
    kind: TokenKind,
    position: usize,
}

fn tokenize(text: &str) -> Result<Vec<Token>, ExprError> {
    let bytes = text.as_bytes();
    let mut tokens = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i];
        let start = i;
        let kind = match c {
            b' ' | b'\t' | b'\n' | b'\r' => {
                i += 1;
                continue;
            }
            b'+' => TokenKind::Plus,
            b'-' => TokenKind::Minus,
            b'*' => TokenKind::Star,
            b'/' => TokenKind::Slash,
            b'^' => TokenKind::Caret,
            b'(' => TokenKind::LParen,
            b')' => TokenKind::RParen,
            b'0'..=b'9' | b'.' => {
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
                let lit = &text[start..i];
                let value: f64 = lit.parse().map_err(|_| ExprError::Syntax {
                    position: start,
                    message: format!("malformed number `{lit}`"),
                })?;
                tokens.push(Token { kind: TokenKind::Number(value), position: start });
                continue;
            }
            c if c.is_ascii_alphabetic() || c == b'_' => {
                while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                    i += 1;
                }
                tokens.push(Token {
                    kind: TokenKind::Ident(text[start..i].to_string()),
                    position: start,
                });
                continue;
            }
            _ => {
                return Err(ExprError::Syntax {
                    position: start,
                    message: format!("unexpected character `{}`", text[start..].chars().next().unwrap_or('?')),
                })
            }
        };
        tokens.push(Token { kind, position: start });
        i += 1;
    }
    Ok(tokens)
}

struct Parser<'a> {
    tokens: Vec<Token>,
    pos: usize,
    params: &'a BTreeMap<String, f64>,
    len: usize,
}

impl Parser<'_> {
    fn peek(&self) -> Option<&Token> {
        self.tokens.get(self.pos)
    }

    fn next_is(&self, kind: &TokenKind) -> bool {
        self.peek().is_some_and(|t| &t.kind == kind)
    }

    fn here(&self) -> usize {
        self.peek().map_or(self.len, |t| t.position)
    }

    fn expect(&mut self, kind: TokenKind) -> Result<(), ExprError> {
        if self.next_is(&kind) {
            self.pos += 1;
            Ok(())
        } else {
            Err(self.unexpected(&format!("expected {}", kind.describe())))
        }
    }

    fn unexpected(&self, message: &str) -> ExprError {
        let found = self
            .peek()
            .map_or_else(|| "end of input".to_string(), |t| t.kind.describe());
        ExprError::Syntax { position: self.here(), message: format!("{message}, found {found}") }
    }

    fn expr(&mut self) -> Result<Node, ExprError> {
        let mut terms = vec![self.term()?];
        loop {
            if self.next_is(&TokenKind::Plus) {
                self.pos += 1;
                terms.push(self.term()?);
            } else if self.next_is(&TokenKind::Minus) {
                self.pos += 1;
                terms.push(Node::Neg(Box::new(self.term()?)).folded());
            } else {
                break;
            }
        }
        if terms.len() == 1 {
            return Ok(terms.pop().unwrap());
        }
        checked(Node::Sum(terms).folded(), self.here())
    }

    fn term(&mut self) -> Result<Node, ExprError> {
        let first = self.unary()?;
        let mut factors: Vec<(bool, Node, usize)> = vec![(false, first, 0)];
        loop {
            let divide = if self.next_is(&TokenKind::Star) {
                false
            } else if self.next_is(&TokenKind::Slash) {
                true
            } else {
                break;
            };
            self.pos += 1;
            let at = self.here();
            factors.push((divide, self.unary()?, at));
        }
        if factors.len() == 1 {
            return Ok(factors.pop().unwrap().1);
        }
        if factors.iter().all(|(_, n, _)| !n.has_vars()) {
            let mut value = factors[0].1.eval(0.0);
            for (divide, n, _) in &factors[1..] {
                if *divide {
                    value /= n.eval(0.0);
                } else {
                    value *= n.eval(0.0);
                }
            }
            return finite_const(value, self.here());
        }
        let mut nodes = Vec::with_capacity(factors.len());
        for (divide, n, at) in factors {
            if !divide {
                nodes.push(n);
                continue;
            }
            if n.has_vars() {
                return Err(ExprError::Syntax {
                    position: at,
                    message: "division is only supported by constant expressions".into(),
                });
            }
            let d = n.eval(0.0);
            if d == 0.0 {
                return Err(ExprError::Syntax { position: at, message: "division by zero".into() });
            }
            nodes.push(Node::Const(1.0 / d));
        }
        Ok(Node::Product(nodes))
    }

    fn unary(&mut self) -> Result<Node, ExprError> {
        if self.next_is(&TokenKind::Minus) {
            self.pos += 1;
            return Ok(Node::Neg(Box::new(self.unary()?)).folded());
        }
        if self.next_is(&TokenKind::Plus) {
            self.pos += 1;
            return self.unary();
        }
        self.power()
    }

    fn power(&mut self) -> Result<Node, ExprError> {
        let base = self.atom()?;
        if !self.next_is(&TokenKind::Caret) {
            return Ok(base);
        }
        self.pos += 1;
        let at = self.here();
        let exponent = self.unary()?;
        if exponent.has_vars() {
            return Err(ExprError::Syntax {
                position: at,
                message: "exponent must be a constant integer".into(),
            });
        }
        let e = exponent.eval(0.0);
        if e.fract() != 0.0 || !(0.0..=i32::MAX as f64).contains(&e) {
            return Err(ExprError::BadExponent(e));
        }
        checked(Node::Pow(Box::new(base), e as u32).folded(), at)
    }

    fn atom(&mut self) -> Result<Node, ExprError> {
        let Some(tok) = self.peek().cloned() else {
            return Err(self.unexpected("expected an operand"));
        };
        self.pos += 1;
        match tok.kind {
            TokenKind::Number(v) => finite_const(v, tok.position),
            TokenKind::LParen => {
                let inner = self.expr()?;
                self.expect(TokenKind::RParen)?;
                Ok(inner)
            }
            TokenKind::Ident(name) => {
                if self.next_is(&TokenKind::LParen) {
                    let wrap: fn(Box<Node>) -> Node = match name.as_str() {
                        "sin" => Node::Sin,
                        "cos" => Node::Cos,
                        "exp" => Node::Exp,
                        _ => {
                            return Err(ExprError::UnknownIdentifier { name, position: tok.position })
                        }
                    };
                    self.pos += 1;
                    let arg = self.expr()?;
                    self.expect(TokenKind::RParen)?;
                    let node = wrap(Box::new(arg)).folded();
                    if let Node::Const(v) = node {
                        return finite_const(v, tok.position);
                    }
                    return Ok(node);
                }
                match name.as_str() {
                    "t" => Ok(Node::Var(Variable::Time)),
                    "k" => Ok(Node::Var(Variable::Index)),
                    "pi" => Ok(Node::Const(PI)),
                    _ => match self.params.get(&name) {
                        Some(v) => finite_const(*v, tok.position),
                        None => Err(ExprError::UnknownIdentifier { name, position: tok.position }),
                    },
                }
            }
            other => {
                self.pos -= 1;
                Err(self.unexpected(&format!("expected an operand before {}", other.describe())))
            }
        }
    }
}

fn checked(node: Node, position: usize) -> Result<Node, ExprError> {
    match node {
        Node::Const(v) => finite_const(v, position),
        other => Ok(other),
    }
}

fn finite_const(value: f64, position: usize) -> Result<Node, ExprError> {
    if value.is_finite() {
        Ok(Node::Const(value))
    } else {
        Err(ExprError::Syntax { position, message: format!("expression overflows to {value}") })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn params(pairs: &[(&str, f64)]) -> BTreeMap<String, f64> {
        pairs.iter().map(|(k, v)| (k.to_string(), *v)).collect()
    }

    #[test]
    fn eval_examples() {
        let e = ScalarExpr::parse("sin(2*pi*t)").unwrap();
        assert!((e.eval(0.25) - 1.0).abs() < 1e-15);
        assert_eq!(ScalarExpr::constant(-1.0).unwrap().eval(7.3), -1.0);
        let e = ScalarExpr::product(vec![ScalarExpr::exp(ScalarExpr::time()), ScalarExpr::time()])
            .unwrap();
        assert!((e.eval(1.0) - std::f64::consts::E).abs() < 1e-15);
    }

    #[test]
    fn parse_maps_grammar_directly() {
        let e = ScalarExpr::parse("sin(2*pi*t)").unwrap();
        let expected = ScalarExpr::sin(
            ScalarExpr::product(vec![
                ScalarExpr::constant(2.0).unwrap(),
                ScalarExpr::constant(PI).unwrap(),
                ScalarExpr::time(),
            ])
            .unwrap(),
        );
        assert_eq!(e, expected);
    }

    #[test]
    fn parameters_fold_to_constants() {
        let e = ScalarExpr::parse_with("-(1)*q0", &params(&[("q0", 1.0)])).unwrap();
        assert_eq!(e, ScalarExpr::constant(-1.0).unwrap());
        let e = ScalarExpr::parse_with("(alpha-1)", &params(&[("alpha", 2.0)])).unwrap();
        assert_eq!(e, ScalarExpr::constant(1.0).unwrap());
    }

    #[test]
    fn serialize_examples() {
        assert_eq!(ScalarExpr::zero().to_string(), "0");
        assert_eq!(ScalarExpr::parse("sin(2*pi*t)").unwrap().to_string(), "sin(2*pi*t)");
        let e = ScalarExpr::sum(vec![ScalarExpr::time(), ScalarExpr::constant(1.0).unwrap()])
            .unwrap();
        assert_eq!(e.to_string(), "t+1");
    }

    #[test]
    fn precedence_and_associativity() {
        let e = ScalarExpr::parse("-t^2").unwrap();
        assert_eq!(e.eval(3.0), -9.0);
        let e = ScalarExpr::parse("2*t - 3*t + 1").unwrap();
        assert_eq!(e.eval(2.0), -1.0);
        let e = ScalarExpr::parse("t/4").unwrap();
        assert_eq!(e.eval(2.0), 0.5);
        let e = ScalarExpr::parse(" exp( - t ) * cos(t)").unwrap();
        assert!((e.eval(0.0) - 1.0).abs() < 1e-15);
        assert_eq!(ScalarExpr::parse("1e-3*t").unwrap().eval(2.0), 0.002);
    }

    #[test]
    fn errors_carry_positions() {
        match ScalarExpr::parse("t + * 2") {
            Err(ExprError::Syntax { position, .. }) => assert_eq!(position, 4),
            other => panic!("unexpected {other:?}"),
        }
        match ScalarExpr::parse("t + foo") {
            Err(ExprError::UnknownIdentifier { name, position }) => {
                assert_eq!(name, "foo");
                assert_eq!(position, 4);
            }
            other => panic!("unexpected {other:?}"),
        }
        assert!(ScalarExpr::parse("tan(t)").is_err());
        assert!(ScalarExpr::parse("(t").is_err());
        assert!(ScalarExpr::parse("1/t").is_err());
        assert!(ScalarExpr::parse("t^t").is_err());
        assert!(matches!(ScalarExpr::parse("t^-1"), Err(ExprError::BadExponent(_))));
        assert!(matches!(ScalarExpr::parse("t^1.5"), Err(ExprError::BadExponent(_))));
    }

    #[test]
    fn construction_rejects_malformed_trees() {
        assert!(ScalarExpr::constant(f64::NAN).is_err());
        assert!(ScalarExpr::constant(f64::INFINITY).is_err());
        assert!(ScalarExpr::power(ScalarExpr::time(), -2).is_err());
        assert!(ScalarExpr::sum(vec![]).is_err());
    }

    #[test]
    fn variable_usage() {
        let e = ScalarExpr::parse("0.5*k + 1").unwrap();
        assert!(e.uses(Variable::Index));
        assert!(!e.uses(Variable::Time));
        assert_eq!(e.eval(4.0), 3.0);
        assert_eq!(ScalarExpr::parse("2*pi").unwrap().as_constant(), Some(2.0 * PI));
    }

    #[test]
    fn serde_as_string() {
        let e = ScalarExpr::parse("-3*t^2+cos(t)").unwrap();
        let json = serde_json::to_string(&e).unwrap();
        let back: ScalarExpr = serde_json::from_str(&json).unwrap();
        assert_eq!(back.eval(0.7), e.eval(0.7));
    }

    fn arb_expr() -> impl Strategy<Value = ScalarExpr> {
        let leaf = prop_oneof![
            (-2.0f64..2.0).prop_map(|v| ScalarExpr::constant(v).unwrap()),
            Just(ScalarExpr::constant(PI).unwrap()),
            Just(ScalarExpr::time()),
        ];
        leaf.prop_recursive(6, 48, 3, |inner| {
            prop_oneof![
                inner.clone().prop_map(ScalarExpr::neg),
                prop::collection::vec(inner.clone(), 1..4)
                    .prop_map(|v| ScalarExpr::sum(v).unwrap()),
                prop::collection::vec(inner.clone(), 1..4)
                    .prop_map(|v| ScalarExpr::product(v).unwrap()),
                (inner.clone(), 0i64..4)
                    .prop_map(|(c, n)| ScalarExpr::power(ScalarExpr::sin(c), n).unwrap()),
                inner.clone().prop_map(ScalarExpr::sin),
                inner.clone().prop_map(ScalarExpr::cos),
                inner.prop_map(|c| ScalarExpr::exp(ScalarExpr::sin(c))),
            ]
        })
    }

    proptest! {
        #[test]
        fn round_trip_is_evaluation_exact(
            e in arb_expr(),
            ts in prop::collection::vec(-5.0f64..5.0, 100),
        ) {
            let text = e.to_string();
            let back = ScalarExpr::parse(&text).unwrap();
            for t in ts {
                let (x, y) = (e.eval(t), back.eval(t));
                prop_assert!(x.to_bits() == y.to_bits() || (x.is_nan() && y.is_nan()),
                    "{} vs {} at {} for {}", x, y, t, text);
            }
        }

        #[test]
        fn eval_is_pure(e in arb_expr(), t in -5.0f64..5.0) {
            prop_assert_eq!(e.eval(t).to_bits(), e.eval(t).to_bits());
        }
    }

    #[test]
    fn parameter_names_skip_builtins() {
        let names = ScalarExpr::parameter_names("-a0 + sin(2*pi*t) * q0 - k").unwrap();
        assert_eq!(names.into_iter().collect::<Vec<_>>(), vec!["a0".to_string(), "q0".to_string()]);
        assert!(ScalarExpr::parameter_names("t^2").unwrap().is_empty());
    }
}
