//! Difference-inequality certificates and the extremal recurrence oracle.
//!
//! The discrete problem is
//!
//! ```text
//! (g_{n+1} - g_n) / h_n <= -gamma_n g_n + alpha(n, g_n) + beta_n,
//!     h_n > 0,   0 < h_n gamma_n < 1,
//! ```
//!
//! and a positive sequence `mu_n` certifies `0 <= g_n <= 1/mu_n` for all
//! checked `n` when the residual
//!
//! ```text
//! D_n = (1/mu_n)(gamma_n - (mu_{n+1} - mu_n)/(mu_n h_n))
//!       - alpha(n, 1/mu_n) - beta_n
//! ```
//!
//! is nonnegative and `g_0 <= 1/mu_0` (the discrete gate is nonstrict,
//! unlike the continuous strict one). Setting `h_n = 1` recovers the
//! unit-step special case.

use std::io::{self, Write};

use thiserror::Error;

use crate::continuous::MONOTONICITY_TOL;
use crate::expr::{EvalError, Expression};
use crate::fmt_f64;
use crate::report::{CertificateReport, Verdict};

/// Default exhaustive verification range.
pub const DEFAULT_N_MAX: usize = 100_000;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DiscreteError {
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("envelope is not positive: mu_{n} = {value}")]
    NonpositiveMu { n: usize, value: f64 },
    #[error("table of length {len} has no entry for n = {n}")]
    TableOutOfRange { n: usize, len: usize },
    #[error("step precondition violated at n = {n}: h = {h}, h*gamma = {h_gamma} (need h > 0 and 0 < h*gamma < 1)")]
    StepPrecondition { n: usize, h: f64, h_gamma: f64 },
    #[error("index {n} exceeds n_max = {n_max}")]
    BeyondRange { n: usize, n_max: usize },
    #[error("initial value must be nonnegative, got {0}")]
    BadInitialValue(f64),
    #[error("recurrence overflowed at n = {n} (value {value})")]
    BlewUp { n: usize, value: f64 },
    #[error("expression for `{role}` must use variables {expected}, got {got}")]
    BadVariables {
        role: &'static str,
        expected: String,
        got: String,
    },
}

/// A real sequence given either in closed form over `n` or as an explicit
/// finite table (tables cap the verification range).
#[derive(Debug, Clone)]
pub enum Seq {
    Expr(Expression),
    Table(Vec<f64>),
}

impl Seq {
    pub fn parse(text: &str) -> Result<Seq, crate::expr::ParseError> {
        Ok(Seq::Expr(Expression::parse(text, &["n"])?))
    }

    pub fn constant(value: f64) -> Seq {
        Seq::Expr(Expression::constant(value, &["n"]))
    }

    pub fn at(&self, n: usize) -> Result<f64, DiscreteError> {
        match self {
            Seq::Expr(e) => Ok(e.eval(&[n as f64])?),
            Seq::Table(values) => values.get(n).copied().ok_or(DiscreteError::TableOutOfRange {
                n,
                len: values.len(),
            }),
        }
    }

    /// Largest index a table can serve; `None` for closed forms.
    pub fn max_index(&self) -> Option<usize> {
        match self {
            Seq::Expr(_) => None,
            Seq::Table(values) => values.len().checked_sub(1),
        }
    }
}

/// Sequences `gamma_n`, `beta_n`, `h_n`, the nonlinearity `alpha(n, y)`,
/// and the exhaustive verification bound `n_max`.
#[derive(Debug, Clone)]
pub struct DiscreteProblem {
    pub gamma: Seq,
    pub beta: Seq,
    pub h: Seq,
    pub alpha: Expression,
    pub n_max: usize,
}

impl DiscreteProblem {
    pub fn new(
        gamma: Seq,
        beta: Seq,
        h: Seq,
        alpha: Expression,
        n_max: usize,
    ) -> Result<DiscreteProblem, DiscreteError> {
        let vars: Vec<&str> = alpha.vars().iter().map(|s| s.as_str()).collect();
        if vars != ["n", "y"] {
            return Err(DiscreteError::BadVariables {
                role: "alpha",
                expected: "[\"n\", \"y\"]".to_string(),
                got: format!("{:?}", vars),
            });
        }
        Ok(DiscreteProblem {
            gamma,
            beta,
            h,
            alpha,
            n_max,
        })
    }

    pub fn alpha_at(&self, n: usize, y: f64) -> Result<f64, EvalError> {
        self.alpha.eval(&[n as f64, y])
    }

    /// `n_max` clipped to what explicit tables can serve.
    pub fn effective_n_max(&self) -> usize {
        let mut n = self.n_max;
        for cap in [
            self.gamma.max_index(),
            self.beta.max_index(),
            self.h.max_index(),
        ]
        .into_iter()
        .flatten()
        {
            n = n.min(cap);
        }
        n
    }

    /// The same problem with unit steps `h_n = 1`, realizing the
    /// unit-step special case. Only `h` is substituted: callers wanting
    /// an equivalent rescaled problem must fold the old `h_n` into
    /// `gamma`, `alpha`, and `beta` themselves.
    pub fn unit_step_view(&self) -> DiscreteProblem {
        DiscreteProblem {
            gamma: self.gamma.clone(),
            beta: self.beta.clone(),
            h: Seq::constant(1.0),
            alpha: self.alpha.clone(),
            n_max: self.n_max,
        }
    }

    fn step_data(&self, n: usize) -> Result<(f64, f64, f64), DiscreteError> {
        let gamma = self.gamma.at(n)?;
        let h = self.h.at(n)?;
        let h_gamma = h * gamma;
        if !(h > 0.0) || !(h_gamma > 0.0 && h_gamma < 1.0) {
            return Err(DiscreteError::StepPrecondition { n, h, h_gamma });
        }
        let beta = self.beta.at(n)?;
        Ok((gamma, h, beta))
    }
}

/// Positive certificate sequence `mu_n`.
#[derive(Debug, Clone)]
pub struct DiscreteEnvelope {
    pub mu: Seq,
}

impl DiscreteEnvelope {
    pub fn new(mu: Seq) -> DiscreteEnvelope {
        DiscreteEnvelope { mu }
    }

    pub fn mu_at(&self, n: usize) -> Result<f64, DiscreteError> {
        let v = self.mu.at(n)?;
        if v <= 0.0 {
            return Err(DiscreteError::NonpositiveMu { n, value: v });
        }
        Ok(v)
    }

    pub fn bound(&self, n: usize) -> Result<f64, DiscreteError> {
        Ok(1.0 / self.mu_at(n)?)
    }
}

/// Residual of the discrete certificate condition at index `n`:
/// `(1/mu_n)(gamma_n - (mu_{n+1} - mu_n)/(mu_n h_n)) - alpha(n, 1/mu_n) - beta_n`.
pub fn discrete_residual(
    p: &DiscreteProblem,
    env: &DiscreteEnvelope,
    n: usize,
) -> Result<f64, DiscreteError> {
    if n > p.effective_n_max() {
        return Err(DiscreteError::BeyondRange {
            n,
            n_max: p.effective_n_max(),
        });
    }
    let gamma = p.gamma.at(n)?;
    let h = p.h.at(n)?;
    let beta = p.beta.at(n)?;
    let mu = env.mu_at(n)?;
    let mu_next = env.mu_at(n + 1)?;
    let inv_mu = 1.0 / mu;
    let alpha = p.alpha_at(n, inv_mu)?;
    Ok(inv_mu * (gamma - (mu_next - mu) / (mu * h)) - alpha - beta)
}

/// Checks `g_0 <= 1/mu_0`, the step preconditions, and
/// `discrete_residual(n) >= 0` for every `n <= n_max`.
///
/// The verdict covers `n <= n_max` only (noted in the report); extending
/// a power-law `mu_n` beyond the range is the search module's closed-form
/// territory.
pub fn verify_discrete_certificate(
    p: &DiscreteProblem,
    env: &DiscreteEnvelope,
    g0: f64,
) -> Result<CertificateReport, DiscreteError> {
    if g0 < 0.0 {
        return Err(DiscreteError::BadInitialValue(g0));
    }
    let n_max = p.effective_n_max();
    let grid_desc = format!("all integers n in [0, {}]", n_max);

    let mut samples = Vec::with_capacity(n_max + 1);
    let mut min_residual = f64::INFINITY;
    let mut argmin_n = 0usize;
    for n in 0..=n_max {
        p.step_data(n)?;
        let r = discrete_residual(p, env, n)?;
        if r < min_residual {
            min_residual = r;
            argmin_n = n;
        }
        samples.push((n as f64, r));
    }

    let mut notes = Vec::new();

    // sampled standing assumptions: beta_n >= 0, alpha >= 0 nondecreasing
    let mut assumptions_ok = true;
    let mut max_bound: f64 = 0.0;
    for n in 0..=n_max {
        max_bound = max_bound.max(env.bound(n)?);
    }
    let spot_stride = (n_max / 32).max(1);
    'outer: for n in (0..=n_max).step_by(spot_stride) {
        let beta = p.beta.at(n)?;
        if beta < 0.0 {
            notes.push(format!("beta_{} = {} is negative", n, fmt_f64(beta)));
            assumptions_ok = false;
            break;
        }
        let mut prev: Option<(f64, f64)> = None;
        for j in 0..17 {
            let y = 2.0 * max_bound * j as f64 / 16.0;
            let a = p.alpha_at(n, y)?;
            if a < 0.0 {
                notes.push(format!(
                    "alpha({}, {}) = {} is negative",
                    n,
                    fmt_f64(y),
                    fmt_f64(a)
                ));
                assumptions_ok = false;
                break 'outer;
            }
            if let Some((y_prev, a_prev)) = prev {
                if a_prev > a + MONOTONICITY_TOL {
                    notes.push(format!(
                        "alpha is not nondecreasing in y at n = {}: alpha(n, {}) > alpha(n, {})",
                        n,
                        fmt_f64(y_prev),
                        fmt_f64(y)
                    ));
                    assumptions_ok = false;
                    break 'outer;
                }
            }
            prev = Some((y, a));
        }
    }

    let bound0 = env.bound(0)?;
    let headroom = bound0 - g0;
    notes.push(format!(
        "initial: g_0 = {} vs 1/mu_0 = {} (headroom {})",
        fmt_f64(g0),
        fmt_f64(bound0),
        fmt_f64(headroom)
    ));

    let report = |verdict, min_residual, argmin_t, notes: Vec<String>, samples| CertificateReport {
        verdict,
        min_residual,
        argmin_t,
        grid: grid_desc.clone(),
        margin: 0.0,
        notes,
        samples,
    };

    if min_residual < 0.0 {
        if headroom < 0.0 {
            notes.push("initial condition also fails: g_0 > 1/mu_0".to_string());
        }
        notes.push("certificate condition fails on the range".to_string());
        return Ok(report(
            Verdict::Infeasible,
            min_residual,
            argmin_n as f64,
            notes,
            samples,
        ));
    }
    if headroom < 0.0 {
        notes.push(
            "initial condition fails: g_0 > 1/mu_0; recorded residual is the initial headroom"
                .to_string(),
        );
        return Ok(report(Verdict::Infeasible, headroom, 0.0, notes, samples));
    }
    if !assumptions_ok {
        notes.push("standing assumptions on alpha/beta failed spot checks".to_string());
        return Ok(report(
            Verdict::Inconclusive,
            min_residual,
            argmin_n as f64,
            notes,
            samples,
        ));
    }

    notes.push(format!(
        "certificate covers n <= {} only; a closed-form family check extends it to all n",
        n_max
    ));
    Ok(report(
        Verdict::CertifiedNonstrict,
        min_residual,
        argmin_n as f64,
        notes,
        samples,
    ))
}

/// Runs the extremal recurrence
/// `g_{n+1} = g_n (1 - h_n gamma_n) + h_n alpha(n, g_n) + h_n beta_n`
/// exactly as floating-point composition, returning all `steps + 1`
/// values.
pub fn run_recurrence(
    p: &DiscreteProblem,
    g0: f64,
    steps: usize,
) -> Result<Vec<f64>, DiscreteError> {
    if g0 < 0.0 {
        return Err(DiscreteError::BadInitialValue(g0));
    }
    let n_max = p.effective_n_max();
    if steps > n_max {
        return Err(DiscreteError::BeyondRange {
            n: steps,
            n_max,
        });
    }
    let mut values = Vec::with_capacity(steps + 1);
    values.push(g0);
    let mut g = g0;
    for n in 0..steps {
        let (gamma, h, beta) = p.step_data(n)?;
        let alpha = p.alpha_at(n, g)?;
        g = g * (1.0 - h * gamma) + h * alpha + h * beta;
        if !g.is_finite() {
            return Err(DiscreteError::BlewUp { n: n + 1, value: g });
        }
        values.push(g);
    }
    Ok(values)
}

/// CSV with header `n,g_n,bound_n,residual_n` for a recurrence run.
pub fn write_sequence_csv<W: Write>(
    mut w: W,
    p: &DiscreteProblem,
    env: &DiscreteEnvelope,
    values: &[f64],
) -> Result<(), DiscreteError> {
    writeln!(w, "n,g_n,bound_n,residual_n").map_err(io_to_eval)?;
    for (n, g) in values.iter().enumerate() {
        let bound = env.bound(n)?;
        let residual = discrete_residual(p, env, n)?;
        writeln!(
            w,
            "{},{},{},{}",
            n,
            fmt_f64(*g),
            fmt_f64(bound),
            fmt_f64(residual)
        )
        .map_err(io_to_eval)?;
    }
    Ok(())
}

fn io_to_eval(e: io::Error) -> DiscreteError {
    DiscreteError::Eval(EvalError::External(format!("io error: {}", e)))
}
