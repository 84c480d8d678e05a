//! Continuous-time certificate verification.
//!
//! A problem is the coefficient triple `(gamma, beta, alpha)` of
//!
//! ```text
//! g'(t) <= -gamma(t) g(t) + alpha(t, g(t)) + beta(t),    t >= t0,
//! ```
//!
//! with `beta, alpha >= 0` and `alpha` nondecreasing in its second
//! argument. A candidate envelope `mu(t) > 0` certifies `g <= 1/mu` when
//! the residual
//!
//! ```text
//! R(t) = (1/mu) * (gamma - mu'/mu) - alpha(t, 1/mu) - beta(t)
//! ```
//!
//! is nonnegative and the initial value clears `mu(t0) * g(t0) < 1`
//! (strict mode) or `<= 1` (nonstrict mode, which additionally needs the
//! caller to attest that `alpha` is locally Lipschitz in `y`).
//!
//! Verification samples `R` on a finite log-uniform grid; extending a
//! certificate to all `t >= t0` is the job of the closed-form family
//! checks in [`crate::search`].

use std::fmt;
use std::sync::Arc;

use thiserror::Error;

use crate::expr::{EvalError, Expression};
use crate::report::{CertificateReport, Verdict};

/// Absolute slack allowed when spot-checking monotonicity of `alpha`,
/// guarding against floating-point noise on flat regions.
pub const MONOTONICITY_TOL: f64 = 1e-12;

/// Default number of residual grid points.
pub const DEFAULT_GRID_POINTS: usize = 2048;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ContinuousError {
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("envelope is not positive: mu({t}) = {value}")]
    NonpositiveMu { t: f64, value: f64 },
    #[error("horizon {horizon} must exceed t0 = {t0}")]
    BadHorizon { t0: f64, horizon: f64 },
    #[error("residual grid needs at least 2 points, got {0}")]
    BadGrid(usize),
    #[error("initial value must be nonnegative, got {0}")]
    BadInitialValue(f64),
    #[error("expression for `{role}` must use variables {expected}, got {got}")]
    BadVariables {
        role: &'static str,
        expected: String,
        got: String,
    },
    #[error("margin must be nonnegative, got {0}")]
    BadMargin(f64),
    #[error("{0} sample count must be at least 2")]
    BadSampleCount(&'static str),
}

type CoefficientFn = dyn Fn(f64) -> Result<f64, EvalError> + Send + Sync;

/// A scalar coefficient of `t`: either a closed-form expression or a
/// named callable (used by the vector-system reduction, where `gamma`
/// comes from an eigenvalue computation and `beta` from a norm).
#[derive(Clone)]
pub enum Coefficient {
    Expr(Expression),
    Func { name: String, f: Arc<CoefficientFn> },
}

impl Coefficient {
    pub fn parse(text: &str) -> Result<Coefficient, crate::expr::ParseError> {
        Ok(Coefficient::Expr(Expression::parse(text, &["t"])?))
    }

    pub fn constant(value: f64) -> Coefficient {
        Coefficient::Expr(Expression::constant(value, &["t"]))
    }

    pub fn from_fn<F>(name: impl Into<String>, f: F) -> Coefficient
    where
        F: Fn(f64) -> Result<f64, EvalError> + Send + Sync + 'static,
    {
        Coefficient::Func {
            name: name.into(),
            f: Arc::new(f),
        }
    }

    pub fn eval(&self, t: f64) -> Result<f64, EvalError> {
        match self {
            Coefficient::Expr(e) => e.eval(&[t]),
            Coefficient::Func { f, .. } => f(t),
        }
    }
}

impl fmt::Debug for Coefficient {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Coefficient::Expr(e) => write!(f, "Expr({})", e),
            Coefficient::Func { name, .. } => write!(f, "Func({})", name),
        }
    }
}

impl fmt::Display for Coefficient {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Coefficient::Expr(e) => write!(f, "{}", e),
            Coefficient::Func { name, .. } => write!(f, "{}", name),
        }
    }
}

/// The coefficient triple of the differential inequality plus the start
/// time. `alpha` is an expression in `(t, y)`.
#[derive(Debug, Clone)]
pub struct ContinuousProblem {
    pub gamma: Coefficient,
    pub beta: Coefficient,
    pub alpha: Expression,
    pub t0: f64,
}

impl ContinuousProblem {
    pub fn new(
        gamma: Coefficient,
        beta: Coefficient,
        alpha: Expression,
        t0: f64,
    ) -> Result<ContinuousProblem, ContinuousError> {
        check_vars(&alpha, &["t", "y"], "alpha")?;
        if let Coefficient::Expr(e) = &gamma {
            check_vars(e, &["t"], "gamma")?;
        }
        if let Coefficient::Expr(e) = &beta {
            check_vars(e, &["t"], "beta")?;
        }
        Ok(ContinuousProblem {
            gamma,
            beta,
            alpha,
            t0,
        })
    }

    pub fn gamma_at(&self, t: f64) -> Result<f64, EvalError> {
        self.gamma.eval(t)
    }

    pub fn beta_at(&self, t: f64) -> Result<f64, EvalError> {
        self.beta.eval(t)
    }

    pub fn alpha_at(&self, t: f64, y: f64) -> Result<f64, EvalError> {
        self.alpha.eval(&[t, y])
    }

    /// Right-hand side of the equality-case dynamics
    /// `-gamma(t) g + alpha(t, g) + beta(t)`.
    pub fn rhs(&self, t: f64, g: f64) -> Result<f64, EvalError> {
        Ok(-self.gamma_at(t)? * g + self.alpha_at(t, g)? + self.beta_at(t)?)
    }
}

pub(crate) fn check_vars(
    e: &Expression,
    expected: &[&str],
    role: &'static str,
) -> Result<(), ContinuousError> {
    let got: Vec<&str> = e.vars().iter().map(|s| s.as_str()).collect();
    if got != expected {
        return Err(ContinuousError::BadVariables {
            role,
            expected: format!("{:?}", expected),
            got: format!("{:?}", got),
        });
    }
    Ok(())
}

/// A candidate envelope `mu(t) > 0` with its derivative.
#[derive(Debug, Clone)]
pub struct Envelope {
    pub mu: Expression,
    pub mu_dot: Expression,
    pub description: String,
}

impl Envelope {
    /// Builds the envelope from `mu`, deriving `mu_dot` symbolically.
    pub fn new(mu: Expression) -> Result<Envelope, crate::expr::DiffError> {
        let mu_dot = mu.diff("t")?;
        let description = format!("mu(t) = {}", mu);
        Ok(Envelope {
            mu,
            mu_dot,
            description,
        })
    }

    /// Uses a caller-supplied derivative (for `mu` with non-smooth
    /// notation or externally derived forms).
    pub fn with_derivative(mu: Expression, mu_dot: Expression) -> Envelope {
        let description = format!("mu(t) = {}", mu);
        Envelope {
            mu,
            mu_dot,
            description,
        }
    }

    pub fn mu_at(&self, t: f64) -> Result<f64, ContinuousError> {
        let v = self.mu.eval(&[t])?;
        if v <= 0.0 {
            return Err(ContinuousError::NonpositiveMu { t, value: v });
        }
        Ok(v)
    }

    pub fn mu_dot_at(&self, t: f64) -> Result<f64, EvalError> {
        self.mu_dot.eval(&[t])
    }

    /// The certified bound `1/mu(t)`.
    pub fn bound(&self, t: f64) -> Result<f64, ContinuousError> {
        Ok(1.0 / self.mu_at(t)?)
    }
}

/// Residual of the certificate condition at time `t`:
/// `R(t) = (1/mu)(gamma - mu'/mu) - alpha(t, 1/mu) - beta(t)`.
/// `R(t) >= 0` iff the condition holds at `t`.
pub fn condition_residual(
    p: &ContinuousProblem,
    env: &Envelope,
    t: f64,
) -> Result<f64, ContinuousError> {
    let mu = env.mu_at(t)?;
    let mu_dot = env.mu_dot_at(t)?;
    let gamma = p.gamma_at(t)?;
    let inv_mu = 1.0 / mu;
    let lhs = inv_mu * (gamma - mu_dot * inv_mu);
    let alpha = p.alpha_at(t, inv_mu)?;
    let beta = p.beta_at(t)?;
    Ok(lhs - alpha - beta)
}

/// Verification mode: strict (bound `g < 1/mu`) or nonstrict
/// (`g <= 1/mu`), the latter requiring an explicit attestation that
/// `alpha` is locally Lipschitz in `y` (not machine-checkable from an
/// AST in general).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VerifyMode {
    Strict,
    Nonstrict { alpha_locally_lipschitz: bool },
}

#[derive(Debug, Clone)]
pub struct VerifyOptions {
    pub horizon: f64,
    pub grid_points: usize,
    pub margin: f64,
    pub mode: VerifyMode,
}

impl VerifyOptions {
    pub fn strict(horizon: f64) -> VerifyOptions {
        VerifyOptions {
            horizon,
            grid_points: DEFAULT_GRID_POINTS,
            margin: 0.0,
            mode: VerifyMode::Strict,
        }
    }
}

/// Log-uniform grid on `[t0, horizon]`: uniform in `ln(1 + t - t0)`,
/// matching coefficient functions that are power laws in `(1 + t)`.
/// Both endpoints are hit exactly.
pub fn log_grid(t0: f64, horizon: f64, points: usize) -> Vec<f64> {
    let span = (1.0 + horizon - t0).ln();
    (0..points)
        .map(|i| {
            if i == 0 {
                t0
            } else if i == points - 1 {
                horizon
            } else {
                let s = span * i as f64 / (points - 1) as f64;
                t0 + s.exp_m1()
            }
        })
        .collect()
}

/// Checks the certificate conditions of the envelope on a log-uniform
/// grid over `[t0, horizon]` and gates on the initial value.
///
/// The verdict covers the grid range only; the report carries an explicit
/// note to that effect. Assumption violations found by spot checks
/// (negative `alpha`/`beta`, `alpha` decreasing in `y`) yield
/// `Inconclusive` rather than a certificate.
pub fn verify_certificate(
    p: &ContinuousProblem,
    env: &Envelope,
    g0: f64,
    opts: &VerifyOptions,
) -> Result<CertificateReport, ContinuousError> {
    if g0 < 0.0 {
        return Err(ContinuousError::BadInitialValue(g0));
    }
    if opts.horizon <= p.t0 {
        return Err(ContinuousError::BadHorizon {
            t0: p.t0,
            horizon: opts.horizon,
        });
    }
    if opts.grid_points < 2 {
        return Err(ContinuousError::BadGrid(opts.grid_points));
    }
    if opts.margin < 0.0 {
        return Err(ContinuousError::BadMargin(opts.margin));
    }

    let grid = log_grid(p.t0, opts.horizon, opts.grid_points);
    let grid_desc = format!(
        "log-uniform, {} points on [{}, {}]",
        opts.grid_points,
        crate::fmt_f64(p.t0),
        crate::fmt_f64(opts.horizon)
    );

    let mut samples = Vec::with_capacity(grid.len());
    let mut min_residual = f64::INFINITY;
    let mut argmin_t = p.t0;
    let mut max_inv_mu: f64 = 0.0;
    for &t in &grid {
        let r = condition_residual(p, env, t)?;
        if r < min_residual {
            min_residual = r;
            argmin_t = t;
        }
        max_inv_mu = max_inv_mu.max(1.0 / env.mu_at(t)?);
        samples.push((t, r));
    }

    let mut notes = Vec::new();

    // assumption spot checks: alpha >= 0 nondecreasing in y, beta >= 0
    let spot = alpha_spot_check(p, &grid, 2.0 * max_inv_mu)?;
    let mut assumptions_ok = true;
    if !spot.monotonicity_violations.is_empty() {
        assumptions_ok = false;
        let (t, y1, y2, a1, a2) = spot.monotonicity_violations[0];
        notes.push(format!(
            "alpha is not nondecreasing in y: alpha({}, {}) = {} > alpha({}, {}) = {}",
            crate::fmt_f64(t),
            crate::fmt_f64(y1),
            crate::fmt_f64(a1),
            crate::fmt_f64(t),
            crate::fmt_f64(y2),
            crate::fmt_f64(a2)
        ));
    }
    if !spot.negative_alpha.is_empty() {
        assumptions_ok = false;
        let (t, y, v) = spot.negative_alpha[0];
        notes.push(format!(
            "alpha({}, {}) = {} is negative",
            crate::fmt_f64(t),
            crate::fmt_f64(y),
            crate::fmt_f64(v)
        ));
    }
    if !spot.negative_beta.is_empty() {
        assumptions_ok = false;
        let (t, v) = spot.negative_beta[0];
        notes.push(format!(
            "beta({}) = {} is negative",
            crate::fmt_f64(t),
            crate::fmt_f64(v)
        ));
    }

    // initial-condition gate
    let mu0 = env.mu_at(p.t0)?;
    let initial = mu0 * g0;
    let headroom = 1.0 - initial;
    notes.push(format!(
        "initial: mu(t0)*g0 = {} (headroom {})",
        crate::fmt_f64(initial),
        crate::fmt_f64(headroom)
    ));

    let report = |verdict, min_residual, argmin_t, notes: Vec<String>, samples| CertificateReport {
        verdict,
        min_residual,
        argmin_t,
        grid: grid_desc.clone(),
        margin: opts.margin,
        notes,
        samples,
    };

    // residual infeasibility dominates; otherwise a failed initial gate
    // records its own negative headroom at t0
    if min_residual < 0.0 {
        if initial > 1.0 {
            notes.push("initial condition also fails: mu(t0)*g0 > 1".to_string());
        }
        notes.push("condition residual is negative on the grid".to_string());
        return Ok(report(
            Verdict::Infeasible,
            min_residual,
            argmin_t,
            notes,
            samples,
        ));
    }
    if initial > 1.0 {
        notes.push(
            "initial condition fails: mu(t0)*g0 > 1; recorded residual is the initial headroom"
                .to_string(),
        );
        return Ok(report(Verdict::Infeasible, headroom, p.t0, notes, samples));
    }

    if !assumptions_ok {
        notes.push("standing assumptions on alpha/beta failed spot checks".to_string());
        return Ok(report(
            Verdict::Inconclusive,
            min_residual,
            argmin_t,
            notes,
            samples,
        ));
    }

    let certified = match opts.mode {
        VerifyMode::Strict => {
            if initial < 1.0 {
                Some(Verdict::CertifiedStrict)
            } else {
                // mu(t0)*g0 == 1 exactly: the strict gate does not
                // apply; the nonstrict mode with a Lipschitz attestation
                // covers the boundary case
                notes.push(
                    "mu(t0)*g0 = 1: strict mode inconclusive; rerun in nonstrict mode with \
                     the alpha-Lipschitz attestation"
                        .to_string(),
                );
                None
            }
        }
        VerifyMode::Nonstrict {
            alpha_locally_lipschitz,
        } => {
            if alpha_locally_lipschitz {
                notes.push(
                    "nonstrict bound relies on the caller's attestation that alpha is \
                     locally Lipschitz in y"
                        .to_string(),
                );
                Some(Verdict::CertifiedNonstrict)
            } else {
                notes.push(
                    "nonstrict mode requires the alpha-Lipschitz attestation flag".to_string(),
                );
                None
            }
        }
    };

    let Some(verdict) = certified else {
        return Ok(report(
            Verdict::Inconclusive,
            min_residual,
            argmin_t,
            notes,
            samples,
        ));
    };

    if min_residual < opts.margin {
        notes.push(format!(
            "residual {} is below the requested margin {}",
            crate::fmt_f64(min_residual),
            crate::fmt_f64(opts.margin)
        ));
        return Ok(report(
            Verdict::Inconclusive,
            min_residual,
            argmin_t,
            notes,
            samples,
        ));
    }

    if spot.min_alpha == 0.0 {
        notes.push(
            "alpha vanishes somewhere on the sampled domain; treated as admissible in both \
             modes although the nonstrict bound is usually stated for strictly positive alpha"
                .to_string(),
        );
    }
    notes.push(format!(
        "certificate covers [{}, {}] only; a closed-form family check extends it to all t >= t0",
        crate::fmt_f64(p.t0),
        crate::fmt_f64(opts.horizon)
    ));

    Ok(report(verdict, min_residual, argmin_t, notes, samples))
}

struct SpotCheck {
    monotonicity_violations: Vec<(f64, f64, f64, f64, f64)>,
    negative_alpha: Vec<(f64, f64, f64)>,
    negative_beta: Vec<(f64, f64)>,
    min_alpha: f64,
}

fn alpha_spot_check(
    p: &ContinuousProblem,
    grid: &[f64],
    y_max: f64,
) -> Result<SpotCheck, ContinuousError> {
    let t_count = 33.min(grid.len());
    let y_count = 33;
    let stride = (grid.len() / t_count).max(1);
    let mut check = SpotCheck {
        monotonicity_violations: Vec::new(),
        negative_alpha: Vec::new(),
        negative_beta: Vec::new(),
        min_alpha: f64::INFINITY,
    };
    let y_hi = if y_max > 0.0 { y_max } else { 1.0 };
    for &t in grid.iter().step_by(stride) {
        let beta = p.beta_at(t)?;
        if beta < 0.0 {
            check.negative_beta.push((t, beta));
        }
        let mut prev: Option<(f64, f64)> = None;
        for j in 0..y_count {
            let y = y_hi * j as f64 / (y_count - 1) as f64;
            let a = p.alpha_at(t, y)?;
            if a < 0.0 {
                check.negative_alpha.push((t, y, a));
            }
            check.min_alpha = check.min_alpha.min(a);
            if let Some((y_prev, a_prev)) = prev {
                if a_prev > a + MONOTONICITY_TOL {
                    check
                        .monotonicity_violations
                        .push((t, y_prev, y, a_prev, a));
                }
            }
            prev = Some((y, a));
        }
    }
    Ok(check)
}

/// Report from [`check_alpha_assumptions`].
#[derive(Debug, Clone)]
pub struct AlphaCheckReport {
    /// `(t, y1, y2, alpha(t,y1), alpha(t,y2))` with `y1 < y2` but
    /// `alpha(t,y1) > alpha(t,y2) + tol`.
    pub monotonicity_violations: Vec<(f64, f64, f64, f64, f64)>,
    pub negative_alpha: Vec<(f64, f64, f64)>,
    pub negative_beta: Vec<(f64, f64)>,
}

impl AlphaCheckReport {
    pub fn pass(&self) -> bool {
        self.monotonicity_violations.is_empty()
            && self.negative_alpha.is_empty()
            && self.negative_beta.is_empty()
    }
}

/// Samples `alpha` on a `t x y` grid over `[t0, horizon] x [0, y_max]`
/// and reports monotonicity violations in `y` and negative values of
/// `alpha` or `beta`.
pub fn check_alpha_assumptions(
    p: &ContinuousProblem,
    horizon: f64,
    t_samples: usize,
    y_samples: usize,
    y_max: f64,
) -> Result<AlphaCheckReport, ContinuousError> {
    if t_samples < 2 {
        return Err(ContinuousError::BadSampleCount("t"));
    }
    if y_samples < 2 {
        return Err(ContinuousError::BadSampleCount("y"));
    }
    if horizon <= p.t0 {
        return Err(ContinuousError::BadHorizon {
            t0: p.t0,
            horizon,
        });
    }
    let mut report = AlphaCheckReport {
        monotonicity_violations: Vec::new(),
        negative_alpha: Vec::new(),
        negative_beta: Vec::new(),
    };
    for &t in &log_grid(p.t0, horizon, t_samples) {
        let beta = p.beta_at(t)?;
        if beta < 0.0 {
            report.negative_beta.push((t, beta));
        }
        let mut prev: Option<(f64, f64)> = None;
        for j in 0..y_samples {
            let y = y_max * j as f64 / (y_samples - 1) as f64;
            let a = p.alpha_at(t, y)?;
            if a < 0.0 {
                report.negative_alpha.push((t, y, a));
            }
            if let Some((y_prev, a_prev)) = prev {
                if a_prev > a + MONOTONICITY_TOL {
                    report
                        .monotonicity_violations
                        .push((t, y_prev, y, a_prev, a));
                }
            }
            prev = Some((y, a));
        }
    }
    Ok(report)
}
