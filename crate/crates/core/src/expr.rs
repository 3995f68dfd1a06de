//! Field expressions: a small arithmetic language over the coordinates `x`, `y`.
//!
//! Grammar (lowest precedence first, binary operators left-associative):
//!
//! ```text
//! expr     := term (('+' | '-') term)*
//! term     := unary (('*' | '/') unary)*
//! unary    := '-' unary | power
//! power    := primary ('^' exponent)*
//! exponent := '-'? primary                      (must not mention x or y)
//! primary  := number | 'x' | 'y' | func '(' expr (',' expr)* ')' | '(' expr ')'
//! func     := sin | cos | exp | abs | sqrt | min | max
//! ```

use std::fmt;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Var {
    X,
    Y,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Sin,
    Cos,
    Exp,
    Abs,
    Sqrt,
    Min,
    Max,
}

impl Func {
    fn from_name(name: &str) -> Option<Func> {
        Some(match name {
            "sin" => Func::Sin,
            "cos" => Func::Cos,
            "exp" => Func::Exp,
            "abs" => Func::Abs,
            "sqrt" => Func::Sqrt,
            "min" => Func::Min,
            "max" => Func::Max,
            _ => return None,
        })
    }

    fn name(self) -> &'static str {
        match self {
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Exp => "exp",
            Func::Abs => "abs",
            Func::Sqrt => "sqrt",
            Func::Min => "min",
            Func::Max => "max",
        }
    }

    fn arity(self) -> usize {
        match self {
            Func::Min | Func::Max => 2,
            _ => 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Node {
    Num(f64),
    Var(Var),
    Neg(Box<Node>),
    Binary(BinOp, Box<Node>, Box<Node>),
    Pow(Box<Node>, Box<Node>),
    Call(Func, Vec<Node>),
}

impl Node {
    fn mentions_coordinates(&self) -> bool {
        match self {
            Node::Num(_) => false,
            Node::Var(_) => true,
            Node::Neg(a) => a.mentions_coordinates(),
            Node::Binary(_, a, b) | Node::Pow(a, b) => {
                a.mentions_coordinates() || b.mentions_coordinates()
            }
            Node::Call(_, args) => args.iter().any(Node::mentions_coordinates),
        }
    }

    fn mentions(&self, var: Var) -> bool {
        match self {
            Node::Num(_) => false,
            Node::Var(v) => *v == var,
            Node::Neg(a) => a.mentions(var),
            Node::Binary(_, a, b) | Node::Pow(a, b) => a.mentions(var) || b.mentions(var),
            Node::Call(_, args) => args.iter().any(|a| a.mentions(var)),
        }
    }

    fn eval(&self, point: [f64; 2]) -> Result<f64> {
        let fail = |message: String| Error::Evaluation { point, message };
        let value = match self {
            Node::Num(v) => *v,
            Node::Var(Var::X) => point[0],
            Node::Var(Var::Y) => point[1],
            Node::Neg(a) => -a.eval(point)?,
            Node::Binary(op, a, b) => {
                let (a, b) = (a.eval(point)?, b.eval(point)?);
                match op {
                    BinOp::Add => a + b,
                    BinOp::Sub => a - b,
                    BinOp::Mul => a * b,
                    BinOp::Div => {
                        if b == 0.0 {
                            return Err(fail("division by zero".into()));
                        }
                        a / b
                    }
                }
            }
            Node::Pow(base, exponent) => {
                let (b, e) = (base.eval(point)?, exponent.eval(point)?);
                if b < 0.0 && e.fract() != 0.0 {
                    return Err(fail(format!("negative base {b} with fractional exponent {e}")));
                }
                if b == 0.0 && e < 0.0 {
                    return Err(fail("zero raised to a negative power".into()));
                }
                b.powf(e)
            }
            Node::Call(func, args) => {
                let a = args[0].eval(point)?;
                match func {
                    Func::Sin => a.sin(),
                    Func::Cos => a.cos(),
                    Func::Exp => a.exp(),
                    Func::Abs => a.abs(),
                    Func::Sqrt => {
                        if a < 0.0 {
                            return Err(fail(format!("sqrt of negative value {a}")));
                        }
                        a.sqrt()
                    }
                    Func::Min => a.min(args[1].eval(point)?),
                    Func::Max => a.max(args[1].eval(point)?),
                }
            }
        };
        if value.is_finite() {
            Ok(value)
        } else {
            Err(fail(format!("non-finite value {value}")))
        }
    }
}

impl fmt::Display for Node {
    /// Canonical form: every compound sub-expression is parenthesized, so the
    /// printed text parses back to the identical tree.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Node::Num(v) => write!(f, "{v:?}"),
            Node::Var(Var::X) => f.write_str("x"),
            Node::Var(Var::Y) => f.write_str("y"),
            Node::Neg(a) => write!(f, "(-{a})"),
            Node::Binary(op, a, b) => {
                let sym = match op {
                    BinOp::Add => "+",
                    BinOp::Sub => "-",
                    BinOp::Mul => "*",
                    BinOp::Div => "/",
                };
                write!(f, "({a} {sym} {b})")
            }
            Node::Pow(a, b) => write!(f, "({a} ^ {b})"),
            Node::Call(func, args) => {
                write!(f, "{}(", func.name())?;
                for (i, arg) in args.iter().enumerate() {
                    if i > 0 {
                        f.write_str(", ")?;
                    }
                    write!(f, "{arg}")?;
                }
                f.write_str(")")
            }
        }
    }
}

/// A parsed field expression together with its source text.
#[derive(Debug, Clone)]
pub struct FieldExpr {
    source: String,
    root: Node,
}

impl PartialEq for FieldExpr {
    fn eq(&self, other: &Self) -> bool {
        self.root == other.root
    }
}

impl FieldExpr {
    pub fn parse(text: &str) -> Result<FieldExpr> {
        parse_field_expr(text)
    }

    pub fn constant(value: f64) -> FieldExpr {
        let root = if value < 0.0 {
            Node::Neg(Box::new(Node::Num(-value)))
        } else {
            Node::Num(value)
        };
        FieldExpr {
            source: root.to_string(),
            root,
        }
    }

    pub fn eval(&self, point: [f64; 2]) -> Result<f64> {
        self.root.eval(point)
    }

    pub fn root(&self) -> &Node {
        &self.root
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    pub fn uses_y(&self) -> bool {
        self.root.mentions(Var::Y)
    }

    /// Value if the expression does not depend on the coordinates.
    pub fn as_constant(&self) -> Option<f64> {
        if self.root.mentions_coordinates() {
            None
        } else {
            self.root.eval([0.0, 0.0]).ok()
        }
    }
}

impl fmt::Display for FieldExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.root.fmt(f)
    }
}

pub fn parse_field_expr(text: &str) -> Result<FieldExpr> {
    let tokens = lex(text)?;
    let mut parser = Parser {
        tokens,
        pos: 0,
        end: text.len(),
    };
    if parser.tokens.is_empty() {
        return Err(Error::Syntax {
            offset: 0,
            message: "empty expression".into(),
        });
    }
    let root = parser.expr()?;
    if let Some(tok) = parser.peek() {
        return Err(Error::Syntax {
            offset: tok.offset,
            message: format!("unexpected {}", tok.kind.describe()),
        });
    }
    Ok(FieldExpr {
        source: text.to_string(),
        root,
    })
}

#[derive(Debug, Clone, PartialEq)]
enum TokenKind {
    Num(f64),
    Ident(String),
    Plus,
    Minus,
    Star,
    Slash,
    Caret,
    LParen,
    RParen,
    Comma,
}

impl TokenKind {
    fn describe(&self) -> String {
        match self {
            TokenKind::Num(v) => format!("number {v}"),
            TokenKind::Ident(s) => format!("identifier `{s}`"),
            TokenKind::Plus => "`+`".into(),
            TokenKind::Minus => "`-`".into(),
            TokenKind::Star => "`*`".into(),
            TokenKind::Slash => "`/`".into(),
            TokenKind::Caret => "`^`".into(),
            TokenKind::LParen => "`(`".into(),
            TokenKind::RParen => "`)`".into(),
            TokenKind::Comma => "`,`".into(),
        }
    }
}

#[derive(Debug, Clone)]
struct Token {
    kind: TokenKind,
    offset: usize,
}

fn lex(text: &str) -> Result<Vec<Token>> {
    let bytes = text.as_bytes();
    let mut tokens = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i];
        let start = i;
        let single = match c {
            b' ' | b'\t' | b'\n' | b'\r' => {
                i += 1;
                continue;
            }
            b'+' => Some(TokenKind::Plus),
            b'-' => Some(TokenKind::Minus),
            b'*' => Some(TokenKind::Star),
            b'/' => Some(TokenKind::Slash),
            b'^' => Some(TokenKind::Caret),
            b'(' => Some(TokenKind::LParen),
            b')' => Some(TokenKind::RParen),
            b',' => Some(TokenKind::Comma),
            _ => None,
        };
        if let Some(kind) = single {
            tokens.push(Token {
                kind,
                offset: start,
            });
            i += 1;
            continue;
        }
        if c.is_ascii_digit() || c == b'.' {
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
            let literal = &text[start..i];
            let value: f64 = literal.parse().map_err(|_| Error::Syntax {
                offset: start,
                message: format!("malformed number `{literal}`"),
            })?;
            tokens.push(Token {
                kind: TokenKind::Num(value),
                offset: start,
            });
            continue;
        }
        if c.is_ascii_alphabetic() || c == b'_' {
            while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                i += 1;
            }
            tokens.push(Token {
                kind: TokenKind::Ident(text[start..i].to_string()),
                offset: start,
            });
            continue;
        }
        return Err(Error::Syntax {
            offset: start,
            message: format!("unexpected character `{}`", text[start..].chars().next().unwrap()),
        });
    }
    Ok(tokens)
}

struct Parser {
    tokens: Vec<Token>,
    pos: usize,
    end: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Token> {
        self.tokens.get(self.pos)
    }

    fn next_is(&self, kind: &TokenKind) -> bool {
        self.peek().is_some_and(|t| &t.kind == kind)
    }

    fn offset(&self) -> usize {
        self.peek().map_or(self.end, |t| t.offset)
    }

    fn expect(&mut self, kind: TokenKind) -> Result<()> {
        if self.next_is(&kind) {
            self.pos += 1;
            Ok(())
        } else {
            let found = self
                .peek()
                .map_or("end of input".to_string(), |t| t.kind.describe());
            Err(Error::Syntax {
                offset: self.offset(),
                message: format!("expected {}, found {found}", kind.describe()),
            })
        }
    }

    fn expr(&mut self) -> Result<Node> {
        let mut lhs = self.term()?;
        loop {
            let op = if self.next_is(&TokenKind::Plus) {
                BinOp::Add
            } else if self.next_is(&TokenKind::Minus) {
                BinOp::Sub
            } else {
                return Ok(lhs);
            };
            self.pos += 1;
            let rhs = self.term()?;
            lhs = Node::Binary(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn term(&mut self) -> Result<Node> {
        let mut lhs = self.unary()?;
        loop {
            let op = if self.next_is(&TokenKind::Star) {
                BinOp::Mul
            } else if self.next_is(&TokenKind::Slash) {
                BinOp::Div
            } else {
                return Ok(lhs);
            };
            self.pos += 1;
            let rhs = self.unary()?;
            lhs = Node::Binary(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn unary(&mut self) -> Result<Node> {
        if self.next_is(&TokenKind::Minus) {
            self.pos += 1;
            return Ok(Node::Neg(Box::new(self.unary()?)));
        }
        self.power()
    }

    fn power(&mut self) -> Result<Node> {
        let mut base = self.primary()?;
        while self.next_is(&TokenKind::Caret) {
            self.pos += 1;
            let offset = self.offset();
            let exponent = if self.next_is(&TokenKind::Minus) {
                self.pos += 1;
                Node::Neg(Box::new(self.primary()?))
            } else {
                self.primary()?
            };
            if exponent.mentions_coordinates() {
                return Err(Error::Syntax {
                    offset,
                    message: "exponent of `^` must be constant".into(),
                });
            }
            base = Node::Pow(Box::new(base), Box::new(exponent));
        }
        Ok(base)
    }

    fn primary(&mut self) -> Result<Node> {
        let Some(tok) = self.peek().cloned() else {
            return Err(Error::Syntax {
                offset: self.end,
                message: "unexpected end of input".into(),
            });
        };
        self.pos += 1;
        match tok.kind {
            TokenKind::Num(v) => Ok(Node::Num(v)),
            TokenKind::LParen => {
                let inner = self.expr()?;
                self.expect(TokenKind::RParen)?;
                Ok(inner)
            }
            TokenKind::Ident(name) => match name.as_str() {
                "x" => Ok(Node::Var(Var::X)),
                "y" => Ok(Node::Var(Var::Y)),
                _ => {
                    let Some(func) = Func::from_name(&name) else {
                        return Err(Error::UnknownIdentifier {
                            name,
                            offset: tok.offset,
                        });
                    };
                    self.expect(TokenKind::LParen)?;
                    let mut args = vec![self.expr()?];
                    while self.next_is(&TokenKind::Comma) {
                        self.pos += 1;
                        args.push(self.expr()?);
                    }
                    self.expect(TokenKind::RParen)?;
                    if args.len() != func.arity() {
                        return Err(Error::Arity {
                            name,
                            expected: func.arity(),
                            found: args.len(),
                        });
                    }
                    Ok(Node::Call(func, args))
                }
            },
            other => Err(Error::Syntax {
                offset: tok.offset,
                message: format!("unexpected {}", other.describe()),
            }),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn eval(text: &str, x: f64) -> f64 {
        parse_field_expr(text).unwrap().eval([x, 0.0]).unwrap()
    }

    #[test]
    fn sine_profile_at_origin() {
        assert_eq!(eval("2 + 0.5*sin(3.14159*x)", 0.0), 2.0);
    }

    #[test]
    fn unbalanced_paren_reports_offset() {
        match parse_field_expr("1/(x") {
            Err(Error::Syntax { offset, .. }) => assert_eq!(offset, 4),
            other => panic!("expected syntax error, got {other:?}"),
        }
    }

    #[test]
    fn user_functions_are_unknown_identifiers() {
        match parse_field_expr("p(x)") {
            Err(Error::UnknownIdentifier { name, offset }) => {
                assert_eq!(name, "p");
                assert_eq!(offset, 0);
            }
            other => panic!("expected unknown identifier, got {other:?}"),
        }
    }

    #[test]
    fn arity_is_checked() {
        assert!(matches!(
            parse_field_expr("min(x)"),
            Err(Error::Arity { expected: 2, found: 1, .. })
        ));
        assert!(matches!(
            parse_field_expr("sin(x, 1)"),
            Err(Error::Arity { expected: 1, found: 2, .. })
        ));
    }

    #[test]
    fn precedence_and_associativity() {
        assert_eq!(eval("1 + 2 * 3", 0.0), 7.0);
        assert_eq!(eval("8 - 3 - 2", 0.0), 3.0);
        assert_eq!(eval("8 / 4 / 2", 0.0), 1.0);
        assert_eq!(eval("-2^2", 0.0), -4.0);
        assert_eq!(eval("2^3^2", 0.0), 64.0);
        assert_eq!(eval("2^-1", 0.0), 0.5);
        assert_eq!(eval("-x * 3", 2.0), -6.0);
        assert_eq!(eval("max(x, 1) + min(x, 1)", 3.0), 4.0);
        assert_eq!(eval("1.5e1 + .5", 0.0), 15.5);
    }

    #[test]
    fn exponent_must_be_constant() {
        assert!(matches!(
            parse_field_expr("2^x"),
            Err(Error::Syntax { offset: 2, .. })
        ));
        assert!(parse_field_expr("x^(1/2)").is_ok());
    }

    #[test]
    fn evaluation_errors_carry_the_point() {
        let e = parse_field_expr("1/x").unwrap();
        match e.eval([0.0, 0.5]) {
            Err(Error::Evaluation { point, .. }) => assert_eq!(point, [0.0, 0.5]),
            other => panic!("{other:?}"),
        }
        assert!(parse_field_expr("sqrt(x - 1)").unwrap().eval([0.5, 0.0]).is_err());
        assert!(parse_field_expr("x^0.5").unwrap().eval([-1.0, 0.0]).is_err());
    }

    #[test]
    fn empty_and_trailing_input_rejected() {
        assert!(matches!(parse_field_expr("  "), Err(Error::Syntax { offset: 0, .. })));
        assert!(matches!(parse_field_expr("x )"), Err(Error::Syntax { offset: 2, .. })));
    }

    fn arb_node() -> impl Strategy<Value = Node> {
        let leaf = prop_oneof![
            (0.0f64..1e6).prop_map(Node::Num),
            Just(Node::Var(Var::X)),
            Just(Node::Var(Var::Y)),
        ];
        leaf.prop_recursive(5, 48, 3, |inner| {
            let op = prop_oneof![
                Just(BinOp::Add),
                Just(BinOp::Sub),
                Just(BinOp::Mul),
                Just(BinOp::Div)
            ];
            let func1 = prop_oneof![
                Just(Func::Sin),
                Just(Func::Cos),
                Just(Func::Exp),
                Just(Func::Abs),
                Just(Func::Sqrt)
            ];
            let func2 = prop_oneof![Just(Func::Min), Just(Func::Max)];
            prop_oneof![
                inner.clone().prop_map(|a| Node::Neg(Box::new(a))),
                (op, inner.clone(), inner.clone())
                    .prop_map(|(op, a, b)| Node::Binary(op, Box::new(a), Box::new(b))),
                (inner.clone(), -4.0f64..4.0).prop_map(|(a, e)| {
                    let e = if e < 0.0 {
                        Node::Neg(Box::new(Node::Num(-e)))
                    } else {
                        Node::Num(e)
                    };
                    Node::Pow(Box::new(a), Box::new(e))
                }),
                (func1, inner.clone()).prop_map(|(f, a)| Node::Call(f, vec![a])),
                (func2, inner.clone(), inner).prop_map(|(f, a, b)| Node::Call(f, vec![a, b])),
            ]
        })
    }

    proptest! {
        #[test]
        fn printer_round_trips(node in arb_node()) {
            let printed = node.to_string();
            let reparsed = parse_field_expr(&printed).unwrap();
            prop_assert_eq!(reparsed.root(), &node);
            let again = parse_field_expr(&reparsed.to_string()).unwrap();
            prop_assert_eq!(again, reparsed);
        }
    }
}
