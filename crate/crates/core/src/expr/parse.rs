//! Lexer and recursive-descent parser for the expression grammar.
//!
//! Precedence, tightest first: `^` (right-associative), unary `-`,
//! `* /`, `+ -`; binary operators at equal precedence associate left.

use super::{eval_pow, Expression, Node};
use std::sync::Arc;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ParseError {
    #[error("syntax error at byte {offset}: {message}")]
    Syntax { offset: usize, message: String },
    #[error("unknown variable `{name}` at byte {offset}")]
    UnknownVariable { offset: usize, name: String },
    #[error("unknown function `{name}` at byte {offset}")]
    UnknownFunction { offset: usize, name: String },
    #[error("exponent at byte {offset} must fold to a finite constant")]
    NonConstantExponent { offset: usize },
    #[error("empty expression")]
    EmptyInput,
    #[error("no variables declared")]
    NoVariables,
    #[error("duplicate variable `{0}` in declaration")]
    DuplicateVariable(String),
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
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

#[derive(Debug, Clone)]
struct Token {
    tok: Tok,
    offset: usize,
}

fn lex(text: &str) -> Result<Vec<Token>, ParseError> {
    let bytes = text.as_bytes();
    let mut tokens = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i];
        match c {
            b' ' | b'\t' | b'\r' | b'\n' => i += 1,
            b'+' | b'-' | b'*' | b'/' | b'^' | b'(' | b')' | b',' => {
                let tok = match c {
                    b'+' => Tok::Plus,
                    b'-' => Tok::Minus,
                    b'*' => Tok::Star,
                    b'/' => Tok::Slash,
                    b'^' => Tok::Caret,
                    b'(' => Tok::LParen,
                    b')' => Tok::RParen,
                    _ => Tok::Comma,
                };
                tokens.push(Token { tok, offset: i });
                i += 1;
            }
            b'0'..=b'9' => {
                let start = i;
                while i < bytes.len() && bytes[i].is_ascii_digit() {
                    i += 1;
                }
                if i < bytes.len() && bytes[i] == b'.' {
                    i += 1;
                    while i < bytes.len() && bytes[i].is_ascii_digit() {
                        i += 1;
                    }
                }
                // scientific suffix, consumed only when well-formed
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
                let value: f64 = text[start..i].parse().map_err(|_| ParseError::Syntax {
                    offset: start,
                    message: format!("invalid number `{}`", &text[start..i]),
                })?;
                tokens.push(Token {
                    tok: Tok::Num(value),
                    offset: start,
                });
            }
            b'A'..=b'Z' | b'a'..=b'z' | b'_' => {
                let start = i;
                while i < bytes.len()
                    && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_')
                {
                    i += 1;
                }
                tokens.push(Token {
                    tok: Tok::Ident(text[start..i].to_string()),
                    offset: start,
                });
            }
            _ => {
                return Err(ParseError::Syntax {
                    offset: i,
                    message: format!("unexpected character `{}`", text[i..].chars().next().unwrap()),
                })
            }
        }
    }
    Ok(tokens)
}

struct Parser<'a> {
    tokens: Vec<Token>,
    pos: usize,
    vars: &'a [&'a str],
    end: usize,
}

impl<'a> Parser<'a> {
    fn peek(&self) -> Option<&Tok> {
        self.tokens.get(self.pos).map(|t| &t.tok)
    }

    fn offset(&self) -> usize {
        self.tokens.get(self.pos).map(|t| t.offset).unwrap_or(self.end)
    }

    fn bump(&mut self) -> Option<Token> {
        let t = self.tokens.get(self.pos).cloned();
        if t.is_some() {
            self.pos += 1;
        }
        t
    }

    fn expect(&mut self, tok: Tok, what: &str) -> Result<(), ParseError> {
        match self.peek() {
            Some(t) if *t == tok => {
                self.pos += 1;
                Ok(())
            }
            _ => Err(ParseError::Syntax {
                offset: self.offset(),
                message: format!("expected {}", what),
            }),
        }
    }

    // expr := term (('+'|'-') term)*
    fn expr(&mut self) -> Result<Node, ParseError> {
        let mut lhs = self.term()?;
        loop {
            match self.peek() {
                Some(Tok::Plus) => {
                    self.pos += 1;
                    let rhs = self.term()?;
                    lhs = Node::Add(Box::new(lhs), Box::new(rhs));
                }
                Some(Tok::Minus) => {
                    self.pos += 1;
                    let rhs = self.term()?;
                    lhs = Node::Sub(Box::new(lhs), Box::new(rhs));
                }
                _ => return Ok(lhs),
            }
        }
    }

    // term := unary (('*'|'/') unary)*
    fn term(&mut self) -> Result<Node, ParseError> {
        let mut lhs = self.unary()?;
        loop {
            match self.peek() {
                Some(Tok::Star) => {
                    self.pos += 1;
                    let rhs = self.unary()?;
                    lhs = Node::Mul(Box::new(lhs), Box::new(rhs));
                }
                Some(Tok::Slash) => {
                    self.pos += 1;
                    let rhs = self.unary()?;
                    lhs = Node::Div(Box::new(lhs), Box::new(rhs));
                }
                _ => return Ok(lhs),
            }
        }
    }

    // unary := '-' unary | power
    fn unary(&mut self) -> Result<Node, ParseError> {
        if let Some(Tok::Minus) = self.peek() {
            self.pos += 1;
            Ok(Node::Neg(Box::new(self.unary()?)))
        } else {
            self.power()
        }
    }

    // power := atom ('^' unary)?   — exponent must fold to a constant
    fn power(&mut self) -> Result<Node, ParseError> {
        let base = self.atom()?;
        if let Some(Tok::Caret) = self.peek() {
            self.pos += 1;
            let exp_offset = self.offset();
            let exponent = self.unary()?;
            let value = fold_constant(&exponent)
                .ok_or(ParseError::NonConstantExponent { offset: exp_offset })?;
            return Ok(Node::Pow(Box::new(base), value));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Node, ParseError> {
        let offset = self.offset();
        match self.bump().map(|t| t.tok) {
            Some(Tok::Num(v)) => Ok(Node::Const(v)),
            Some(Tok::LParen) => {
                let inner = self.expr()?;
                self.expect(Tok::RParen, "closing `)`")?;
                Ok(inner)
            }
            Some(Tok::Ident(name)) => {
                if let Some(Tok::LParen) = self.peek() {
                    self.pos += 1;
                    return self.call(&name, offset);
                }
                match self.vars.iter().position(|v| *v == name) {
                    Some(i) => Ok(Node::Var(i)),
                    None => Err(ParseError::UnknownVariable { offset, name }),
                }
            }
            _ => Err(ParseError::Syntax {
                offset,
                message: "expected expression".to_string(),
            }),
        }
    }

    fn call(&mut self, name: &str, offset: usize) -> Result<Node, ParseError> {
        let unary_fn: Option<fn(Box<Node>) -> Node> = match name {
            "exp" => Some(Node::Exp),
            "ln" => Some(Node::Ln),
            "abs" => Some(Node::Abs),
            _ => None,
        };
        if let Some(make) = unary_fn {
            let arg = self.expr()?;
            self.expect(Tok::RParen, "closing `)`")?;
            return Ok(make(Box::new(arg)));
        }
        let binary_fn: Option<fn(Box<Node>, Box<Node>) -> Node> = match name {
            "min" => Some(Node::Min),
            "max" => Some(Node::Max),
            _ => None,
        };
        if let Some(make) = binary_fn {
            let a = self.expr()?;
            self.expect(Tok::Comma, "`,` between arguments")?;
            let b = self.expr()?;
            self.expect(Tok::RParen, "closing `)`")?;
            return Ok(make(Box::new(a), Box::new(b)));
        }
        Err(ParseError::UnknownFunction {
            offset,
            name: name.to_string(),
        })
    }
}

/// Folds a variable-free subtree to its constant value, if possible.
fn fold_constant(node: &Node) -> Option<f64> {
    let v = match node {
        Node::Const(c) => *c,
        Node::Var(_) => return None,
        Node::Neg(a) => -fold_constant(a)?,
        Node::Add(a, b) => fold_constant(a)? + fold_constant(b)?,
        Node::Sub(a, b) => fold_constant(a)? - fold_constant(b)?,
        Node::Mul(a, b) => fold_constant(a)? * fold_constant(b)?,
        Node::Div(a, b) => {
            let d = fold_constant(b)?;
            if d == 0.0 {
                return None;
            }
            fold_constant(a)? / d
        }
        Node::Pow(a, p) => eval_pow(fold_constant(a)?, *p).ok()?,
        Node::Exp(a) => fold_constant(a)?.exp(),
        Node::Ln(a) => {
            let x = fold_constant(a)?;
            if x <= 0.0 {
                return None;
            }
            x.ln()
        }
        Node::Abs(a) => fold_constant(a)?.abs(),
        Node::Min(a, b) => fold_constant(a)?.min(fold_constant(b)?),
        Node::Max(a, b) => fold_constant(a)?.max(fold_constant(b)?),
    };
    v.is_finite().then_some(v)
}

pub(super) fn parse(text: &str, vars: &[&str]) -> Result<Expression, ParseError> {
    if text.trim().is_empty() {
        return Err(ParseError::EmptyInput);
    }
    if vars.is_empty() {
        return Err(ParseError::NoVariables);
    }
    for (i, v) in vars.iter().enumerate() {
        if vars[..i].contains(v) {
            return Err(ParseError::DuplicateVariable(v.to_string()));
        }
    }
    let tokens = lex(text)?;
    let mut parser = Parser {
        tokens,
        pos: 0,
        vars,
        end: text.len(),
    };
    let root = parser.expr()?;
    if parser.pos < parser.tokens.len() {
        return Err(ParseError::Syntax {
            offset: parser.offset(),
            message: "unexpected trailing input".to_string(),
        });
    }
    let names: Arc<[String]> = vars.iter().map(|s| s.to_string()).collect();
    Ok(Expression::from_root(root, names))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn double_caret_is_syntax_error_at_offset() {
        let err = Expression::parse("y^^2", &["y"]).unwrap_err();
        assert_eq!(
            err,
            ParseError::Syntax {
                offset: 2,
                message: "expected expression".to_string()
            }
        );
    }

    #[test]
    fn unknown_variable_is_named() {
        let err = Expression::parse("4*(1+x)", &["t"]).unwrap_err();
        assert_eq!(
            err,
            ParseError::UnknownVariable {
                offset: 5,
                name: "x".to_string()
            }
        );
    }

    #[test]
    fn variable_exponent_is_rejected() {
        let err = Expression::parse("2^t", &["t"]).unwrap_err();
        assert!(matches!(err, ParseError::NonConstantExponent { offset: 2 }));
    }

    #[test]
    fn constant_subexpression_exponent_folds() {
        let e = Expression::parse("t^(1/2)", &["t"]).unwrap();
        assert_eq!(e.eval(&[9.0]).unwrap(), 3.0);
        let neg = Expression::parse("(1+t)^(-1.5)", &["t"]).unwrap();
        assert!((neg.eval(&[3.0]).unwrap() - 0.125).abs() < 1e-15);
    }

    #[test]
    fn caret_is_right_associative() {
        // 2^3^2 = 2^(3^2) = 512
        let e = Expression::parse("t*2^3^2", &["t"]).unwrap();
        assert_eq!(e.eval(&[1.0]).unwrap(), 512.0);
    }

    #[test]
    fn caret_binds_tighter_than_unary_minus() {
        let e = Expression::parse("-t^2", &["t"]).unwrap();
        assert_eq!(e.eval(&[3.0]).unwrap(), -9.0);
    }

    #[test]
    fn left_associativity_of_sub_and_div() {
        let e = Expression::parse("8 - 2 - 1 + t", &["t"]).unwrap();
        assert_eq!(e.eval(&[0.0]).unwrap(), 5.0);
        let d = Expression::parse("8/2/2 + 0*t", &["t"]).unwrap();
        assert_eq!(d.eval(&[0.0]).unwrap(), 2.0);
    }

    #[test]
    fn scientific_literals() {
        let e = Expression::parse("1e4 + t*1.5e-3", &["t"]).unwrap();
        assert_eq!(e.eval(&[2.0]).unwrap(), 10000.003);
    }

    #[test]
    fn functions_parse() {
        let e = Expression::parse("min(exp(t), max(abs(t), ln(1+t)))", &["t"]).unwrap();
        assert!(e.eval(&[1.0]).is_ok());
        let err = Expression::parse("sin(t)", &["t"]).unwrap_err();
        assert!(matches!(err, ParseError::UnknownFunction { .. }));
    }

    #[test]
    fn empty_and_trailing_inputs_error() {
        assert_eq!(
            Expression::parse("  ", &["t"]).unwrap_err(),
            ParseError::EmptyInput
        );
        assert!(matches!(
            Expression::parse("1+1 2", &["t"]).unwrap_err(),
            ParseError::Syntax { offset: 4, .. }
        ));
        assert_eq!(
            Expression::parse("t", &[]).unwrap_err(),
            ParseError::NoVariables
        );
    }

    #[test]
    fn unbalanced_parens_error() {
        assert!(matches!(
            Expression::parse("(1+t", &["t"]).unwrap_err(),
            ParseError::Syntax { .. }
        ));
    }

    #[test]
    fn non_ascii_input_errors_at_byte_offset() {
        let err = Expression::parse("4*\u{03bb}", &["t"]).unwrap_err();
        match err {
            ParseError::Syntax { offset, message } => {
                assert_eq!(offset, 2);
                assert!(message.contains('\u{03bb}'));
            }
            other => panic!("unexpected error {:?}", other),
        }
    }
}
