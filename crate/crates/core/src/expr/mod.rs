//! Scalar expression DSL for coefficient functions.
//!
//! Expressions are parsed over a declared variable set (`{t}`, `{t,y}`,
//! `{n,y}`, ...), evaluate to `f64`, and are closed under symbolic
//! differentiation because power nodes carry a constant real exponent.
//! Any non-finite intermediate is promoted to a domain error so that
//! certificate checks never pass on NaN comparisons.

mod parse;

pub use parse::ParseError;

use std::fmt;
use std::sync::Arc;
use thiserror::Error;

/// Evaluation failure of an [`Expression`] at a concrete point.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalError {
    #[error("division by zero")]
    DivisionByZero,
    #[error("ln of non-positive value {0}")]
    LnNonPositive(f64),
    #[error("0 raised to negative power {0}")]
    ZeroToNegativePower(f64),
    #[error("fractional power {exponent} of negative base {base}")]
    NegativeBaseFractionalPower { base: f64, exponent: f64 },
    #[error("non-finite intermediate value")]
    NonFinite,
    #[error("expected {expected} variable values, got {got}")]
    ArityMismatch { expected: usize, got: usize },
    #[error("no value bound for variable `{0}`")]
    UnboundVariable(String),
    #[error("{0}")]
    External(String),
}

/// Differentiation failure: `abs`, `min`, and `max` nodes are rejected.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum DiffError {
    #[error("cannot differentiate through `{0}`")]
    NonDifferentiable(&'static str),
    #[error("unknown differentiation variable `{0}`")]
    UnknownVariable(String),
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) enum Node {
    Const(f64),
    Var(usize),
    Neg(Box<Node>),
    Add(Box<Node>, Box<Node>),
    Sub(Box<Node>, Box<Node>),
    Mul(Box<Node>, Box<Node>),
    Div(Box<Node>, Box<Node>),
    /// Base raised to a constant real exponent.
    Pow(Box<Node>, f64),
    Exp(Box<Node>),
    Ln(Box<Node>),
    Abs(Box<Node>),
    Min(Box<Node>, Box<Node>),
    Max(Box<Node>, Box<Node>),
}

/// A parsed scalar expression over a declared, ordered variable set.
///
/// Immutable after parse; cheap to clone and safe to share across threads.
/// Evaluation is positional: `values[i]` binds to `vars()[i]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Expression {
    vars: Arc<[String]>,
    root: Node,
}

impl Expression {
    /// Parses `text` over the ordered variable set `vars`.
    ///
    /// Grammar: decimal literals, `+ - * / ^`, parentheses, `exp()`, `ln()`,
    /// `abs()`, `min(,)`, `max(,)`. `^` binds tightest and is
    /// right-associative; its exponent must fold to a finite constant.
    pub fn parse(text: &str, vars: &[&str]) -> Result<Expression, ParseError> {
        parse::parse(text, vars)
    }

    /// A constant expression over the given variable set.
    pub fn constant(value: f64, vars: &[&str]) -> Expression {
        Expression {
            vars: vars.iter().map(|s| s.to_string()).collect(),
            root: Node::Const(value),
        }
    }

    pub(crate) fn from_root(root: Node, vars: Arc<[String]>) -> Expression {
        Expression { vars, root }
    }

    /// The declared variable set, in binding order.
    pub fn vars(&self) -> &[String] {
        &self.vars
    }

    /// Names of variables actually referenced by the expression.
    pub fn free_vars(&self) -> Vec<&str> {
        let mut used = vec![false; self.vars.len()];
        mark_used(&self.root, &mut used);
        self.vars
            .iter()
            .zip(&used)
            .filter(|(_, u)| **u)
            .map(|(v, _)| v.as_str())
            .collect()
    }

    /// Evaluates at the point given positionally against [`Self::vars`].
    pub fn eval(&self, values: &[f64]) -> Result<f64, EvalError> {
        if values.len() != self.vars.len() {
            return Err(EvalError::ArityMismatch {
                expected: self.vars.len(),
                got: values.len(),
            });
        }
        eval_node(&self.root, values)
    }

    /// Evaluates with named bindings; every free variable must be bound.
    pub fn eval_named(&self, bindings: &[(&str, f64)]) -> Result<f64, EvalError> {
        let mut values = vec![f64::NAN; self.vars.len()];
        let mut bound = vec![false; self.vars.len()];
        for (name, value) in bindings {
            if let Some(i) = self.vars.iter().position(|v| v == name) {
                values[i] = *value;
                bound[i] = true;
            }
        }
        for free in self.free_vars() {
            let i = self.vars.iter().position(|v| v == free).unwrap();
            if !bound[i] {
                return Err(EvalError::UnboundVariable(free.to_string()));
            }
        }
        eval_node(&self.root, &values)
    }

    /// Symbolic derivative with respect to `var`.
    ///
    /// The result evaluates to the analytic derivative wherever defined;
    /// constant subexpressions are folded to keep derivatives readable.
    pub fn diff(&self, var: &str) -> Result<Expression, DiffError> {
        let target = self
            .vars
            .iter()
            .position(|v| v == var)
            .ok_or_else(|| DiffError::UnknownVariable(var.to_string()))?;
        let root = diff_node(&self.root, target)?;
        Ok(Expression {
            vars: self.vars.clone(),
            root,
        })
    }
}

fn mark_used(node: &Node, used: &mut [bool]) {
    match node {
        Node::Const(_) => {}
        Node::Var(i) => used[*i] = true,
        Node::Neg(a) | Node::Exp(a) | Node::Ln(a) | Node::Abs(a) | Node::Pow(a, _) => {
            mark_used(a, used)
        }
        Node::Add(a, b)
        | Node::Sub(a, b)
        | Node::Mul(a, b)
        | Node::Div(a, b)
        | Node::Min(a, b)
        | Node::Max(a, b) => {
            mark_used(a, used);
            mark_used(b, used);
        }
    }
}

fn finite(x: f64) -> Result<f64, EvalError> {
    if x.is_finite() {
        Ok(x)
    } else {
        Err(EvalError::NonFinite)
    }
}

/// Power with a constant exponent; domain violations are typed errors.
pub(crate) fn eval_pow(base: f64, exponent: f64) -> Result<f64, EvalError> {
    if base > 0.0 {
        finite(base.powf(exponent))
    } else if base == 0.0 {
        if exponent > 0.0 {
            Ok(0.0)
        } else if exponent == 0.0 {
            Ok(1.0)
        } else {
            Err(EvalError::ZeroToNegativePower(exponent))
        }
    } else if exponent.fract() == 0.0 && exponent.abs() < 9.0e15 {
        // integral exponent: powf handles the sign exactly
        finite(base.powf(exponent))
    } else {
        Err(EvalError::NegativeBaseFractionalPower {
            base,
            exponent,
        })
    }
}

fn eval_node(node: &Node, values: &[f64]) -> Result<f64, EvalError> {
    match node {
        Node::Const(c) => Ok(*c),
        Node::Var(i) => Ok(values[*i]),
        Node::Neg(a) => Ok(-eval_node(a, values)?),
        Node::Add(a, b) => finite(eval_node(a, values)? + eval_node(b, values)?),
        Node::Sub(a, b) => finite(eval_node(a, values)? - eval_node(b, values)?),
        Node::Mul(a, b) => finite(eval_node(a, values)? * eval_node(b, values)?),
        Node::Div(a, b) => {
            let denom = eval_node(b, values)?;
            if denom == 0.0 {
                return Err(EvalError::DivisionByZero);
            }
            finite(eval_node(a, values)? / denom)
        }
        Node::Pow(a, p) => eval_pow(eval_node(a, values)?, *p),
        Node::Exp(a) => finite(eval_node(a, values)?.exp()),
        Node::Ln(a) => {
            let x = eval_node(a, values)?;
            if x <= 0.0 {
                return Err(EvalError::LnNonPositive(x));
            }
            finite(x.ln())
        }
        Node::Abs(a) => Ok(eval_node(a, values)?.abs()),
        Node::Min(a, b) => Ok(eval_node(a, values)?.min(eval_node(b, values)?)),
        Node::Max(a, b) => Ok(eval_node(a, values)?.max(eval_node(b, values)?)),
    }
}

// Smart constructors with conservative constant folding. Folds may widen
// the domain of a derivative (0 * undefined becomes 0) but never change a
// defined value.
fn k(c: f64) -> Node {
    Node::Const(c)
}

fn is_const(node: &Node, c: f64) -> bool {
    matches!(node, Node::Const(v) if *v == c)
}

fn add(a: Node, b: Node) -> Node {
    match (&a, &b) {
        (Node::Const(x), Node::Const(y)) if (x + y).is_finite() => return k(x + y),
        _ => {}
    }
    if is_const(&a, 0.0) {
        return b;
    }
    if is_const(&b, 0.0) {
        return a;
    }
    Node::Add(Box::new(a), Box::new(b))
}

fn sub(a: Node, b: Node) -> Node {
    match (&a, &b) {
        (Node::Const(x), Node::Const(y)) if (x - y).is_finite() => return k(x - y),
        _ => {}
    }
    if is_const(&b, 0.0) {
        return a;
    }
    if is_const(&a, 0.0) {
        return neg(b);
    }
    Node::Sub(Box::new(a), Box::new(b))
}

fn neg(a: Node) -> Node {
    match a {
        Node::Const(x) => k(-x),
        Node::Neg(inner) => *inner,
        other => Node::Neg(Box::new(other)),
    }
}

fn mul(a: Node, b: Node) -> Node {
    match (&a, &b) {
        (Node::Const(x), Node::Const(y)) if (x * y).is_finite() => return k(x * y),
        _ => {}
    }
    if is_const(&a, 0.0) || is_const(&b, 0.0) {
        return k(0.0);
    }
    if is_const(&a, 1.0) {
        return b;
    }
    if is_const(&b, 1.0) {
        return a;
    }
    Node::Mul(Box::new(a), Box::new(b))
}

fn div(a: Node, b: Node) -> Node {
    match (&a, &b) {
        (Node::Const(x), Node::Const(y)) if *y != 0.0 && (x / y).is_finite() => return k(x / y),
        _ => {}
    }
    if is_const(&b, 1.0) {
        return a;
    }
    Node::Div(Box::new(a), Box::new(b))
}

fn pow(a: Node, p: f64) -> Node {
    if p == 1.0 {
        return a;
    }
    if p == 0.0 {
        return k(1.0);
    }
    if let Node::Const(x) = &a {
        if let Ok(v) = eval_pow(*x, p) {
            return k(v);
        }
    }
    Node::Pow(Box::new(a), p)
}

fn diff_node(node: &Node, target: usize) -> Result<Node, DiffError> {
    Ok(match node {
        Node::Const(_) => k(0.0),
        Node::Var(i) => {
            if *i == target {
                k(1.0)
            } else {
                k(0.0)
            }
        }
        Node::Neg(a) => neg(diff_node(a, target)?),
        Node::Add(a, b) => add(diff_node(a, target)?, diff_node(b, target)?),
        Node::Sub(a, b) => sub(diff_node(a, target)?, diff_node(b, target)?),
        Node::Mul(a, b) => {
            let da = diff_node(a, target)?;
            let db = diff_node(b, target)?;
            add(mul(da, (**b).clone()), mul((**a).clone(), db))
        }
        Node::Div(a, b) => {
            let da = diff_node(a, target)?;
            let db = diff_node(b, target)?;
            let num = sub(mul(da, (**b).clone()), mul((**a).clone(), db));
            div(num, pow((**b).clone(), 2.0))
        }
        Node::Pow(a, p) => {
            // d(u^p) = p * u^(p-1) * u'
            let da = diff_node(a, target)?;
            mul(mul(k(*p), pow((**a).clone(), p - 1.0)), da)
        }
        Node::Exp(a) => mul(Node::Exp(a.clone()), diff_node(a, target)?),
        Node::Ln(a) => div(diff_node(a, target)?, (**a).clone()),
        Node::Abs(_) => return Err(DiffError::NonDifferentiable("abs")),
        Node::Min(_, _) => return Err(DiffError::NonDifferentiable("min")),
        Node::Max(_, _) => return Err(DiffError::NonDifferentiable("max")),
    })
}

// Precedence levels for printing: addition 1, multiplication 2, unary
// minus 3, power 4, atoms 5. Parenthesization reproduces the tree shape
// exactly so that a round trip evaluates bit-for-bit identically.
fn precedence(node: &Node) -> u8 {
    match node {
        Node::Add(..) | Node::Sub(..) => 1,
        Node::Mul(..) | Node::Div(..) => 2,
        Node::Neg(..) => 3,
        Node::Pow(..) => 4,
        Node::Const(c) if *c < 0.0 => 3,
        _ => 5,
    }
}

fn fmt_child(f: &mut fmt::Formatter<'_>, child: &Node, vars: &[String], wrap: bool) -> fmt::Result {
    if wrap {
        write!(f, "(")?;
        fmt_node(f, child, vars)?;
        write!(f, ")")
    } else {
        fmt_node(f, child, vars)
    }
}

fn fmt_binary(
    f: &mut fmt::Formatter<'_>,
    op: &str,
    a: &Node,
    b: &Node,
    prec: u8,
    vars: &[String],
) -> fmt::Result {
    fmt_child(f, a, vars, precedence(a) < prec)?;
    write!(f, " {} ", op)?;
    fmt_child(f, b, vars, precedence(b) <= prec)
}

fn fmt_node(f: &mut fmt::Formatter<'_>, node: &Node, vars: &[String]) -> fmt::Result {
    match node {
        Node::Const(c) => write!(f, "{}", c),
        Node::Var(i) => write!(f, "{}", vars[*i]),
        Node::Neg(a) => {
            write!(f, "-")?;
            fmt_child(f, a, vars, precedence(a) < 3)
        }
        Node::Add(a, b) => fmt_binary(f, "+", a, b, 1, vars),
        Node::Sub(a, b) => fmt_binary(f, "-", a, b, 1, vars),
        Node::Mul(a, b) => fmt_binary(f, "*", a, b, 2, vars),
        Node::Div(a, b) => fmt_binary(f, "/", a, b, 2, vars),
        Node::Pow(a, p) => {
            let wrap_base = match &**a {
                Node::Var(_) => false,
                Node::Const(c) => *c < 0.0,
                _ => true,
            };
            fmt_child(f, a, vars, wrap_base)?;
            if *p < 0.0 {
                write!(f, "^({})", p)
            } else {
                write!(f, "^{}", p)
            }
        }
        Node::Exp(a) => {
            write!(f, "exp(")?;
            fmt_node(f, a, vars)?;
            write!(f, ")")
        }
        Node::Ln(a) => {
            write!(f, "ln(")?;
            fmt_node(f, a, vars)?;
            write!(f, ")")
        }
        Node::Abs(a) => {
            write!(f, "abs(")?;
            fmt_node(f, a, vars)?;
            write!(f, ")")
        }
        Node::Min(a, b) => {
            write!(f, "min(")?;
            fmt_node(f, a, vars)?;
            write!(f, ", ")?;
            fmt_node(f, b, vars)?;
            write!(f, ")")
        }
        Node::Max(a, b) => {
            write!(f, "max(")?;
            fmt_node(f, a, vars)?;
            write!(f, ", ")?;
            fmt_node(f, b, vars)?;
            write!(f, ")")
        }
    }
}

impl fmt::Display for Expression {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt_node(f, &self.root, &self.vars)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t_expr(text: &str) -> Expression {
        Expression::parse(text, &["t"]).unwrap()
    }

    fn ty_expr(text: &str) -> Expression {
        Expression::parse(text, &["t", "y"]).unwrap()
    }

    #[test]
    fn evaluates_simple_quotient() {
        let e = t_expr("4/(1+t)");
        assert_eq!(e.eval(&[0.0]).unwrap(), 4.0);
        assert_eq!(e.eval(&[3.0]).unwrap(), 1.0);
    }

    #[test]
    fn evaluates_power_law_envelope() {
        // mu(t) = lambda*(1+t)^nu with lambda=4, nu=1
        let e = t_expr("4*(1+t)^1");
        assert_eq!(e.eval(&[3.0]).unwrap(), 16.0);
    }

    #[test]
    fn division_by_zero_is_domain_error() {
        let e = t_expr("1/t");
        assert_eq!(e.eval(&[0.0]), Err(EvalError::DivisionByZero));
    }

    #[test]
    fn ln_of_nonpositive_errors() {
        let e = t_expr("ln(t)");
        assert!(matches!(e.eval(&[-1.0]), Err(EvalError::LnNonPositive(_))));
        assert!(matches!(e.eval(&[0.0]), Err(EvalError::LnNonPositive(_))));
        assert!((e.eval(&[std::f64::consts::E]).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn power_domain_rules() {
        let e = t_expr("t^(-1)");
        assert!(matches!(
            e.eval(&[0.0]),
            Err(EvalError::ZeroToNegativePower(_))
        ));
        let frac = t_expr("t^0.5");
        assert!(matches!(
            frac.eval(&[-4.0]),
            Err(EvalError::NegativeBaseFractionalPower { .. })
        ));
        assert_eq!(frac.eval(&[4.0]).unwrap(), 2.0);
        // integral exponents of negative bases keep their sign
        let cube = t_expr("t^3");
        assert_eq!(cube.eval(&[-2.0]).unwrap(), -8.0);
    }

    #[test]
    fn overflow_is_promoted_to_domain_error() {
        let e = t_expr("exp(t)");
        assert_eq!(e.eval(&[1.0e4]), Err(EvalError::NonFinite));
    }

    #[test]
    fn two_term_example_nonlinearity() {
        // alpha(t,y) from the power-law worked example (m=1, p=2, q=1.5)
        let e = ty_expr("2*(1+t)^(-1)*y^2 + 2*(1+t)^(-1.5)*y^0.5");
        let v = e.eval(&[0.0, 0.25]).unwrap();
        assert!((v - (2.0 * 0.0625 + 2.0 * 0.5)).abs() < 1e-15);
    }

    #[test]
    fn diff_power_rule() {
        let e = t_expr("4*(1+t)^1");
        let d = e.diff("t").unwrap();
        for &t in &[0.0, 1.0, 5.0] {
            assert!((d.eval(&[t]).unwrap() - 4.0).abs() < 1e-14);
        }
    }

    #[test]
    fn diff_shifted_envelope() {
        // d/dt [c + lambda*(1+t)^(-b)] = -b*lambda*(1+t)^(-b-1)
        let e = t_expr("1 + 2*(1+t)^(-1.5)");
        let d = e.diff("t").unwrap();
        for &t in &[0.0, 0.5, 9.0] {
            let expect: f64 = -1.5 * 2.0 * (1.0f64 + t).powf(-2.5);
            assert!((d.eval(&[t]).unwrap() - expect).abs() < 1e-13);
        }
    }

    #[test]
    fn diff_constant_is_zero() {
        let e = t_expr("7");
        let d = e.diff("t").unwrap();
        assert_eq!(d.eval(&[123.0]).unwrap(), 0.0);
        assert_eq!(format!("{}", d), "0");
    }

    #[test]
    fn diff_rejects_nonsmooth_nodes() {
        for text in ["abs(t)", "min(t, 1)", "max(t, 1)"] {
            let e = t_expr(text);
            assert!(matches!(
                e.diff("t"),
                Err(DiffError::NonDifferentiable(_))
            ));
        }
    }

    #[test]
    fn diff_exp_and_ln() {
        let e = t_expr("exp(2*t)");
        let d = e.diff("t").unwrap();
        assert!((d.eval(&[0.3]).unwrap() - 2.0 * (0.6f64).exp()).abs() < 1e-13);
        let l = t_expr("ln(1+t)");
        let dl = l.diff("t").unwrap();
        assert!((dl.eval(&[1.0]).unwrap() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn display_round_trips_structure() {
        let texts = [
            "4/(1+t)^1",
            "2*(1+t)^(-1)*y^2 + 2*(1+t)^(-1.5)*y^0.5",
            "min(t, max(y, 1))",
            "-(t + y)^2",
            "exp(-t)*abs(y)",
        ];
        for text in texts {
            let e = ty_expr(text);
            let printed = format!("{}", e);
            let back = ty_expr(&printed);
            for i in 0..40 {
                let t = 0.13 * i as f64;
                let y = 0.07 * i as f64 + 0.01;
                let a = e.eval(&[t, y]);
                let b = back.eval(&[t, y]);
                assert_eq!(a, b, "{} vs {}", printed, text);
            }
        }
    }

    #[test]
    fn eval_named_requires_free_vars_only() {
        let e = ty_expr("2*t");
        assert_eq!(e.eval_named(&[("t", 3.0)]).unwrap(), 6.0);
        let both = ty_expr("t*y");
        assert!(matches!(
            both.eval_named(&[("t", 3.0)]),
            Err(EvalError::UnboundVariable(_))
        ));
    }

    #[test]
    fn free_vars_reports_usage() {
        let e = ty_expr("2*(1+t)^(-1)");
        assert_eq!(e.free_vars(), vec!["t"]);
    }
}
