//! Finite-dimensional realization of the vector-to-scalar reduction.
//!
//! A system `u' + A u = h(t, u) + f(t)` in `R^d` with symmetric `A`
//! satisfying `<Au, u> >= gamma <u, u>` and `||h(t, u)|| <= alpha(t, ||u||)`
//! reduces to the scalar inequality for `g = ||u||`:
//!
//! ```text
//! g' <= -gamma(t) g + alpha(t, g) + beta(t),     beta(t) = ||f(t)||,
//! ```
//!
//! with `gamma` the minimal eigenvalue of `A`. The reduction produces a
//! [`ContinuousProblem`] that drives the certificate verifier verbatim,
//! and the vector integrator cross-checks certified envelopes against
//! the actual dynamics.
//!
//! `alpha` is a hypothesis supplied by the caller, exactly as in the
//! underlying theory; [`falsify_alpha_bound`] can reject it by sampling
//! but never prove it.

mod eigen;

pub use eigen::{min_eigenvalue, sym_eigenvalues};

use std::collections::HashMap;
use std::io::{self, Write};
use std::sync::{Arc, RwLock};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::continuous::{Coefficient, ContinuousProblem, Envelope};
use crate::expr::{EvalError, Expression};
use crate::fmt_f64;
use crate::ode::{OdeError, Sample, Trajectory, TrajectoryStatus};
use crate::rk45::{integrate_rk45, RkStatus};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum HilbertError {
    #[error("matrix is empty")]
    EmptyMatrix,
    #[error("matrix is not square: {rows} rows but a row of length {cols}")]
    NotSquare { rows: usize, cols: usize },
    #[error("matrix asymmetric at ({i}, {j}): |a_ij - a_ji| = {delta}")]
    Asymmetric { i: usize, j: usize, delta: f64 },
    #[error("Jacobi sweep did not converge")]
    NoConvergence,
    #[error("dimension mismatch for {what}: expected {expected}, got {got}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("parameter `{name}` = {value} violates {constraint}")]
    BadParameter {
        name: &'static str,
        value: f64,
        constraint: &'static str,
    },
    #[error("trajectory spans less than two decades of (1+t); cannot assess the tail")]
    TrajectoryTooShort,
    #[error("trajectory is empty")]
    EmptyTrajectory,
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("expression for `{role}` must use variables {expected}, got {got}")]
    BadVariables {
        role: &'static str,
        expected: String,
        got: String,
    },
}

/// Constant symmetric matrix, or a matrix of expressions in `t`.
#[derive(Debug, Clone)]
pub enum MatrixSpec {
    Constant(Vec<Vec<f64>>),
    TimeVarying(Vec<Vec<Expression>>),
}

impl MatrixSpec {
    fn dim(&self) -> usize {
        match self {
            MatrixSpec::Constant(m) => m.len(),
            MatrixSpec::TimeVarying(m) => m.len(),
        }
    }

    /// Evaluates the matrix at `t` (a clone for the constant case).
    pub fn at(&self, t: f64) -> Result<Vec<Vec<f64>>, EvalError> {
        match self {
            MatrixSpec::Constant(m) => Ok(m.clone()),
            MatrixSpec::TimeVarying(m) => m
                .iter()
                .map(|row| row.iter().map(|e| e.eval(&[t])).collect())
                .collect(),
        }
    }
}

/// The vector evolution `u' + A u = h(t, u) + f(t)` with the scalar
/// nonlinearity bound `||h(t, u)|| <= alpha_bound(t, ||u||)` supplied as
/// a hypothesis.
#[derive(Debug, Clone)]
pub struct VectorSystem {
    pub dim: usize,
    pub a: MatrixSpec,
    /// Components of `h`, expressions in `(t, u1, ..., ud)`.
    pub h_field: Vec<Expression>,
    /// Components of `f`, expressions in `t`.
    pub f_field: Vec<Expression>,
    /// The hypothesis `alpha(t, y)` bounding `||h||` on spheres.
    pub alpha_bound: Expression,
    pub u0: Vec<f64>,
}

/// Variable set `(t, u1, ..., ud)` for the components of `h`.
pub fn state_vars(dim: usize) -> Vec<String> {
    let mut vars = vec!["t".to_string()];
    for i in 1..=dim {
        vars.push(format!("u{}", i));
    }
    vars
}

impl VectorSystem {
    pub fn new(
        a: MatrixSpec,
        h_field: Vec<Expression>,
        f_field: Vec<Expression>,
        alpha_bound: Expression,
        u0: Vec<f64>,
    ) -> Result<VectorSystem, HilbertError> {
        let dim = a.dim();
        if dim == 0 {
            return Err(HilbertError::EmptyMatrix);
        }
        if let MatrixSpec::Constant(m) = &a {
            eigen::check_symmetric(m)?;
        }
        if h_field.len() != dim {
            return Err(HilbertError::DimensionMismatch {
                what: "h",
                expected: dim,
                got: h_field.len(),
            });
        }
        if f_field.len() != dim {
            return Err(HilbertError::DimensionMismatch {
                what: "f",
                expected: dim,
                got: f_field.len(),
            });
        }
        if u0.len() != dim {
            return Err(HilbertError::DimensionMismatch {
                what: "u0",
                expected: dim,
                got: u0.len(),
            });
        }
        let expected = state_vars(dim);
        for e in &h_field {
            if e.vars() != expected.as_slice() {
                return Err(HilbertError::BadVariables {
                    role: "h",
                    expected: format!("{:?}", expected),
                    got: format!("{:?}", e.vars()),
                });
            }
        }
        for e in &f_field {
            if e.vars() != ["t".to_string()].as_slice() {
                return Err(HilbertError::BadVariables {
                    role: "f",
                    expected: "[\"t\"]".to_string(),
                    got: format!("{:?}", e.vars()),
                });
            }
        }
        if alpha_bound.vars() != ["t".to_string(), "y".to_string()].as_slice() {
            return Err(HilbertError::BadVariables {
                role: "alpha_bound",
                expected: "[\"t\", \"y\"]".to_string(),
                got: format!("{:?}", alpha_bound.vars()),
            });
        }
        Ok(VectorSystem {
            dim,
            a,
            h_field,
            f_field,
            alpha_bound,
            u0,
        })
    }

    pub fn h_at(&self, t: f64, u: &[f64]) -> Result<Vec<f64>, EvalError> {
        let mut point = Vec::with_capacity(self.dim + 1);
        point.push(t);
        point.extend_from_slice(u);
        self.h_field.iter().map(|e| e.eval(&point)).collect()
    }

    pub fn f_at(&self, t: f64) -> Result<Vec<f64>, EvalError> {
        self.f_field.iter().map(|e| e.eval(&[t])).collect()
    }
}

fn euclid_norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Derives the scalar problem for `g = ||u||`: `gamma` is the minimal
/// eigenvalue of `A` (computed once for constant `A`, sampled and
/// memoized for `A(t)`), `beta(t) = ||f(t)||`, and `alpha` is the
/// caller's hypothesis, passed through verbatim. Start time is 0.
pub fn reduce_to_scalar(sys: &VectorSystem) -> Result<ContinuousProblem, HilbertError> {
    let gamma = match &sys.a {
        MatrixSpec::Constant(m) => {
            let value = min_eigenvalue(m)?;
            Coefficient::constant(value)
        }
        MatrixSpec::TimeVarying(_) => {
            let spec = sys.a.clone();
            let cache: Arc<RwLock<HashMap<u64, f64>>> = Arc::new(RwLock::new(HashMap::new()));
            Coefficient::from_fn("min_eigenvalue(A(t))", move |t| {
                let key = t.to_bits();
                if let Some(v) = cache.read().expect("cache lock").get(&key) {
                    return Ok(*v);
                }
                let m = spec.at(t)?;
                let v = min_eigenvalue(&m).map_err(|e| EvalError::External(e.to_string()))?;
                cache.write().expect("cache lock").insert(key, v);
                Ok(v)
            })
        }
    };
    let f_field = sys.f_field.clone();
    let beta = Coefficient::from_fn("norm(f(t))", move |t| {
        let f: Result<Vec<f64>, EvalError> = f_field.iter().map(|e| e.eval(&[t])).collect();
        Ok(euclid_norm(&f?))
    });
    ContinuousProblem::new(gamma, beta, sys.alpha_bound.clone(), 0.0)
        .map_err(|e| HilbertError::Eval(EvalError::External(e.to_string())))
}

/// One accepted point of a vector trajectory.
#[derive(Debug, Clone)]
pub struct VectorSample {
    pub t: f64,
    pub u: Vec<f64>,
    pub norm: f64,
}

/// Vector trajectory with the same status semantics as the scalar one.
#[derive(Debug, Clone)]
pub struct VectorTrajectory {
    pub samples: Vec<VectorSample>,
    pub tolerance: f64,
    pub status: TrajectoryStatus,
    pub notes: Vec<String>,
    norm_dots: Vec<f64>,
}

impl VectorTrajectory {
    /// CSV with header `t,u_1,...,u_d,norm`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        let dim = self.samples.first().map(|s| s.u.len()).unwrap_or(0);
        write!(w, "t")?;
        for i in 1..=dim {
            write!(w, ",u_{}", i)?;
        }
        writeln!(w, ",norm")?;
        for s in &self.samples {
            write!(w, "{}", fmt_f64(s.t))?;
            for v in &s.u {
                write!(w, ",{}", fmt_f64(*v))?;
            }
            writeln!(w, ",{}", fmt_f64(s.norm))?;
        }
        Ok(())
    }

    /// The scalar trajectory of `g = ||u||`, with
    /// `g' = <u, u'> / ||u||` (and `||u'||` at `u = 0`).
    pub fn norm_trajectory(&self) -> Trajectory {
        let samples = self
            .samples
            .iter()
            .zip(&self.norm_dots)
            .map(|(s, nd)| Sample {
                t: s.t,
                g: s.norm,
                g_dot: *nd,
            })
            .collect();
        Trajectory {
            samples,
            tolerance: self.tolerance,
            status: self.status.clone(),
            notes: self.notes.clone(),
        }
    }
}

/// Integrates the equality dynamics `u' = -A(t) u + h(t, u) + f(t)`.
pub fn integrate_vector(
    sys: &VectorSystem,
    horizon: f64,
    rel_tol: f64,
    abs_tol: f64,
) -> Result<VectorTrajectory, OdeError> {
    crate::rk45::validate(0.0, horizon, rel_tol, abs_tol)?;
    let rhs = |t: f64, u: &Vec<f64>| -> Result<Vec<f64>, EvalError> {
        let a = sys.a.at(t)?;
        let h = sys.h_at(t, u)?;
        let f = sys.f_at(t)?;
        let mut du = vec![0.0; sys.dim];
        for i in 0..sys.dim {
            let mut au = 0.0;
            for j in 0..sys.dim {
                au += a[i][j] * u[j];
            }
            du[i] = -au + h[i] + f[i];
            if !du[i].is_finite() {
                return Err(EvalError::NonFinite);
            }
        }
        Ok(du)
    };
    let result = integrate_rk45(rhs, 0.0, sys.u0.clone(), horizon, rel_tol, abs_tol, |_| false, "")?;

    let mut samples = Vec::with_capacity(result.samples.len());
    let mut norm_dots = Vec::with_capacity(result.samples.len());
    for (t, u, du) in &result.samples {
        let norm = euclid_norm(u);
        let norm_dot = if norm > 0.0 {
            u.iter().zip(du).map(|(a, b)| a * b).sum::<f64>() / norm
        } else {
            euclid_norm(du)
        };
        samples.push(VectorSample {
            t: *t,
            u: u.clone(),
            norm,
        });
        norm_dots.push(norm_dot);
    }
    let mut notes = result.notes;
    let status = match result.status {
        RkStatus::Completed => TrajectoryStatus::Completed,
        RkStatus::BlewUp => TrajectoryStatus::BlewUp,
        RkStatus::DomainError(msg) => {
            notes.push(format!("domain error: {}", msg));
            TrajectoryStatus::DomainError
        }
    };
    Ok(VectorTrajectory {
        samples,
        tolerance: abs_tol,
        status,
        notes,
        norm_dots,
    })
}

/// Builds the shifted-envelope worked instance: `gamma = 0`,
/// `mu(t) = c + lambda (1+t)^(-b)`, and `alpha`, `beta` equal to the
/// largest values compatible with the envelope, split by `theta`:
///
/// ```text
/// alpha(t, y) = theta C y^p b lambda / ((lambda + c)(1+t)^(1+b)),
/// beta(t)     = (1 - theta) b lambda / ((c + lambda)^2 (1+t)^(1+b)),
/// C           = c^(p-1) if p > 1, else (lambda + c)^(p-1).
/// ```
///
/// By construction the certificate condition holds for all `t >= 0`, and
/// any `g(0) < 1/(c + lambda)` is certified with `g(t) <= 1/mu(t) < 1/c`.
pub fn build_example2(
    c: f64,
    lambda: f64,
    b: f64,
    theta: f64,
    p: f64,
) -> Result<(ContinuousProblem, Envelope), HilbertError> {
    let gate = |name: &'static str, value: f64, ok: bool, constraint: &'static str| {
        if ok {
            Ok(())
        } else {
            Err(HilbertError::BadParameter {
                name,
                value,
                constraint,
            })
        }
    };
    gate("c", c, c > 0.0, "c > 0")?;
    gate("lambda", lambda, lambda > 0.0, "lambda > 0")?;
    gate("b", b, b > 0.0, "b > 0")?;
    gate("theta", theta, theta > 0.0 && theta < 1.0, "0 < theta < 1")?;
    gate("p", p, p > 0.0, "p > 0")?;

    let big_c = if p > 1.0 {
        c.powf(p - 1.0)
    } else {
        (lambda + c).powf(p - 1.0)
    };
    let alpha_coef = theta * big_c * b * lambda / (lambda + c);
    let beta_coef = (1.0 - theta) * b * lambda / ((c + lambda) * (c + lambda));
    let decay = 1.0 + b;

    let alpha = Expression::parse(
        &format!("{} * y^{} / (1+t)^{}", alpha_coef, p, decay),
        &["t", "y"],
    )
    .expect("generated alpha text parses");
    let beta = Coefficient::parse(&format!("{} / (1+t)^{}", beta_coef, decay))
        .expect("generated beta text parses");
    let problem = ContinuousProblem::new(Coefficient::constant(0.0), beta, alpha, 0.0)
        .expect("generated problem is well-formed");

    let mu = Expression::parse(&format!("{} + {} * (1+t)^(-{})", c, lambda, b), &["t"])
        .expect("generated mu text parses");
    let envelope = Envelope::new(mu).expect("power-law mu is differentiable");
    Ok((problem, envelope))
}

/// Window statistic over the trajectory tail.
#[derive(Debug, Clone, Copy)]
pub struct TailWindow {
    pub t_lo: f64,
    pub t_hi: f64,
    /// `sup |g'(t)| (1+t)^(1+b)` over samples in the window.
    pub sup_stat: f64,
    pub samples: usize,
}

/// Report from [`check_gdot_decay`]: decay of `g'` like `(1+t)^-(1+b)`
/// and the empirical limit of `g`.
#[derive(Debug, Clone)]
pub struct GdotDecayReport {
    pub windows: Vec<TailWindow>,
    /// Last-window statistic over first-window statistic.
    pub growth_ratio: f64,
    /// No growth trend across the tail windows.
    pub bounded: bool,
    /// `g` at the final sample.
    pub g_limit: f64,
    /// The claimed ceiling `1/c`.
    pub limit_bound: f64,
    pub limit_ok: bool,
}

/// Growth-ratio threshold declaring the tail statistic bounded: a real
/// trend like `(1+t)^0.1` grows by ~1.58x across two decades, while the
/// saturating statistic of a certified instance drifts by well under 2%.
pub const GDOT_GROWTH_LIMIT: f64 = 1.2;

/// Tolerance on the empirical limit check `g(inf) <= 1/c + tol`.
pub const GDOT_LIMIT_TOL: f64 = 1e-6;

/// Checks the tail claim `g'(t) = O((1+t)^-(1+b))` on a trajectory and
/// the limit claim `g(inf) <= 1/c`: the last two decades of `(1+t)` are
/// split into 8 log windows and `sup |g'| (1+t)^(1+b)` must show no
/// growth trend across them.
pub fn check_gdot_decay(
    traj: &Trajectory,
    b: f64,
    c: f64,
) -> Result<GdotDecayReport, HilbertError> {
    if b <= 0.0 {
        return Err(HilbertError::BadParameter {
            name: "b",
            value: b,
            constraint: "b > 0",
        });
    }
    if c <= 0.0 {
        return Err(HilbertError::BadParameter {
            name: "c",
            value: c,
            constraint: "c > 0",
        });
    }
    let first = traj.samples.first().ok_or(HilbertError::EmptyTrajectory)?;
    let last = traj.samples.last().ok_or(HilbertError::EmptyTrajectory)?;
    if (1.0 + last.t) / (1.0 + first.t) < 100.0 {
        return Err(HilbertError::TrajectoryTooShort);
    }

    const WINDOWS: usize = 8;
    let log_hi = (1.0 + last.t).ln();
    let log_lo = log_hi - (100.0f64).ln();
    let edges: Vec<f64> = (0..=WINDOWS)
        .map(|i| (log_lo + (log_hi - log_lo) * i as f64 / WINDOWS as f64).exp() - 1.0)
        .collect();

    let mut windows = Vec::with_capacity(WINDOWS);
    for w in 0..WINDOWS {
        let (t_lo, t_hi) = (edges[w], edges[w + 1]);
        let mut sup_stat = 0.0f64;
        let mut count = 0usize;
        for s in &traj.samples {
            if s.t >= t_lo && s.t <= t_hi {
                sup_stat = sup_stat.max(s.g_dot.abs() * (1.0 + s.t).powf(1.0 + b));
                count += 1;
            }
        }
        if count > 0 {
            windows.push(TailWindow {
                t_lo,
                t_hi,
                sup_stat,
                samples: count,
            });
        }
    }
    if windows.len() < 2 {
        return Err(HilbertError::TrajectoryTooShort);
    }

    let w_first = windows.first().unwrap().sup_stat;
    let w_last = windows.last().unwrap().sup_stat;
    let growth_ratio = if w_first > 0.0 {
        w_last / w_first
    } else if w_last > 0.0 {
        f64::INFINITY
    } else {
        1.0
    };
    let bounded = growth_ratio <= GDOT_GROWTH_LIMIT;

    let g_limit = last.g;
    let limit_bound = 1.0 / c;
    let limit_ok = g_limit <= limit_bound + GDOT_LIMIT_TOL;

    Ok(GdotDecayReport {
        windows,
        growth_ratio,
        bounded,
        g_limit,
        limit_bound,
        limit_ok,
    })
}

/// A sampled point violating the hypothesis `||h(t,u)|| <= alpha(t, ||u||)`.
#[derive(Debug, Clone)]
pub struct AlphaBoundCounterexample {
    pub t: f64,
    pub u: Vec<f64>,
    pub h_norm: f64,
    pub alpha_value: f64,
}

/// Samples random directions on spheres of the given radii and looks for
/// violations of the nonlinearity bound. Can reject the hypothesis,
/// never prove it.
pub fn falsify_alpha_bound(
    sys: &VectorSystem,
    horizon: f64,
    t_samples: usize,
    radii: &[f64],
    dirs_per_radius: usize,
    seed: u64,
) -> Result<Option<AlphaBoundCounterexample>, HilbertError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let grid = crate::continuous::log_grid(0.0, horizon.max(1e-6), t_samples.max(2));
    for &t in &grid {
        for &radius in radii {
            if radius <= 0.0 {
                continue;
            }
            for _ in 0..dirs_per_radius {
                let u = random_sphere_point(&mut rng, sys.dim, radius);
                let h = sys.h_at(t, &u)?;
                let h_norm = euclid_norm(&h);
                let alpha_value = sys.alpha_bound.eval(&[t, radius])?;
                if h_norm > alpha_value + 1e-9 * (1.0 + alpha_value.abs()) {
                    return Ok(Some(AlphaBoundCounterexample {
                        t,
                        u,
                        h_norm,
                        alpha_value,
                    }));
                }
            }
        }
    }
    Ok(None)
}

/// Uniform direction via Box-Muller normals, scaled to `radius`.
fn random_sphere_point(rng: &mut ChaCha8Rng, dim: usize, radius: f64) -> Vec<f64> {
    loop {
        let mut v = Vec::with_capacity(dim);
        while v.len() < dim {
            let u1: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
            let u2: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
            let r = (-2.0 * u1.ln()).sqrt();
            v.push(r * u2.cos());
            if v.len() < dim {
                v.push(r * u2.sin());
            }
        }
        let norm = euclid_norm(&v);
        if norm > 1e-12 {
            return v.iter().map(|x| x * radius / norm).collect();
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::continuous::{condition_residual, verify_certificate, VerifyOptions};
    use crate::ode::check_envelope;

    fn zero_h(dim: usize) -> Vec<Expression> {
        let vars = state_vars(dim);
        let refs: Vec<&str> = vars.iter().map(|s| s.as_str()).collect();
        (0..dim).map(|_| Expression::constant(0.0, &refs)).collect()
    }

    fn zero_f(dim: usize) -> Vec<Expression> {
        (0..dim).map(|_| Expression::constant(0.0, &["t"])).collect()
    }

    fn zero_alpha() -> Expression {
        Expression::constant(0.0, &["t", "y"])
    }

    #[test]
    fn reduce_identity_system() {
        let sys = VectorSystem::new(
            MatrixSpec::Constant(vec![vec![1.0, 0.0], vec![0.0, 1.0]]),
            zero_h(2),
            zero_f(2),
            zero_alpha(),
            vec![1.0, 0.0],
        )
        .unwrap();
        let p = reduce_to_scalar(&sys).unwrap();
        assert_eq!(p.gamma_at(3.0).unwrap(), 1.0);
        assert_eq!(p.beta_at(3.0).unwrap(), 0.0);
        assert_eq!(p.alpha_at(3.0, 0.5).unwrap(), 0.0);
    }

    #[test]
    fn coupled_system_decays_at_min_eigenvalue_rate() {
        // A = [[2,1],[1,2]] has gamma = 1; with h = f = 0 the norm obeys
        // ||u(t)|| <= ||u0|| e^{-t}
        let sys = VectorSystem::new(
            MatrixSpec::Constant(vec![vec![2.0, 1.0], vec![1.0, 2.0]]),
            zero_h(2),
            zero_f(2),
            zero_alpha(),
            vec![1.0, 0.0],
        )
        .unwrap();
        let p = reduce_to_scalar(&sys).unwrap();
        assert!((p.gamma_at(0.0).unwrap() - 1.0).abs() < 1e-12);

        let traj = integrate_vector(&sys, 5.0, 1e-9, 1e-11).unwrap();
        assert_eq!(traj.status, TrajectoryStatus::Completed);
        for s in &traj.samples {
            assert!(s.norm <= (-s.t).exp() + 1e-7, "t = {}", s.t);
        }
    }

    #[test]
    fn diagonal_decay_matches_closed_form() {
        let sys = VectorSystem::new(
            MatrixSpec::Constant(vec![vec![1.0, 0.0], vec![0.0, 1.0]]),
            zero_h(2),
            zero_f(2),
            zero_alpha(),
            vec![3.0, 4.0],
        )
        .unwrap();
        let traj = integrate_vector(&sys, 1.0, 1e-10, 1e-12).unwrap();
        let end = traj.samples.last().unwrap();
        assert!((end.norm - 5.0 * (-1.0f64).exp()).abs() < 1e-6);
    }

    #[test]
    fn zero_start_stays_zero() {
        let sys = VectorSystem::new(
            MatrixSpec::Constant(vec![vec![1.0, 0.0], vec![0.0, 2.0]]),
            zero_h(2),
            zero_f(2),
            zero_alpha(),
            vec![0.0, 0.0],
        )
        .unwrap();
        let traj = integrate_vector(&sys, 3.0, 1e-8, 1e-10).unwrap();
        assert!(traj.samples.iter().all(|s| s.norm == 0.0));
    }

    #[test]
    fn reduced_gamma_is_a_valid_coercivity_constant() {
        // <Au, u> >= gamma <u, u> must hold at sampled (t, u) for the
        // derived gamma
        let a = vec![
            vec![3.0, 1.0, -0.5],
            vec![1.0, 2.0, 0.25],
            vec![-0.5, 0.25, 4.0],
        ];
        let sys = VectorSystem::new(
            MatrixSpec::Constant(a.clone()),
            zero_h(3),
            zero_f(3),
            zero_alpha(),
            vec![1.0, -1.0, 0.5],
        )
        .unwrap();
        let p = reduce_to_scalar(&sys).unwrap();
        let gamma = p.gamma_at(0.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..200 {
            let u: Vec<f64> = (0..3).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let norm2: f64 = u.iter().map(|v| v * v).sum();
            let quad: f64 = (0..3)
                .map(|i| (0..3).map(|j| a[i][j] * u[j]).sum::<f64>() * u[i])
                .sum();
            assert!(quad >= gamma * norm2 - 1e-10 * norm2.max(1.0));
        }
    }

    #[test]
    fn time_varying_gamma_is_memoized_min_eigenvalue() {
        // A(t) = [[2 + 1/(1+t), 1], [1, 2]]
        let exprs = vec![
            vec![
                Expression::parse("2 + 1/(1+t)", &["t"]).unwrap(),
                Expression::constant(1.0, &["t"]),
            ],
            vec![
                Expression::constant(1.0, &["t"]),
                Expression::constant(2.0, &["t"]),
            ],
        ];
        let sys = VectorSystem::new(
            MatrixSpec::TimeVarying(exprs),
            zero_h(2),
            zero_f(2),
            zero_alpha(),
            vec![1.0, 0.0],
        )
        .unwrap();
        let p = reduce_to_scalar(&sys).unwrap();
        // analytic minimum of [[a,1],[1,2]]: (a+2)/2 - sqrt((a-2)^2/4 + 1)
        for &t in &[0.0, 1.0, 9.0] {
            let a = 2.0 + 1.0 / (1.0 + t);
            let expect = 0.5 * (a + 2.0) - ((a - 2.0) * (a - 2.0) / 4.0 + 1.0f64).sqrt();
            let twice_first = p.gamma_at(t).unwrap();
            let twice_second = p.gamma_at(t).unwrap();
            assert!((twice_first - expect).abs() < 1e-10);
            assert_eq!(twice_first, twice_second);
        }
    }

    #[test]
    fn example2_builder_produces_globally_valid_certificate() {
        let (problem, envelope) = build_example2(1.0, 1.0, 1.0, 0.5, 2.0).unwrap();
        // residual is positive for all sampled t
        for &t in &crate::continuous::log_grid(0.0, 1.0e6, 256) {
            assert!(condition_residual(&problem, &envelope, t).unwrap() > 0.0);
        }
        let report =
            verify_certificate(&problem, &envelope, 0.4, &VerifyOptions::strict(1.0e4)).unwrap();
        assert!(report.verdict.is_certified());
        // bound tends to 1/c = 1 from below
        assert!(envelope.bound(1.0e9).unwrap() < 1.0);
    }

    #[test]
    fn example2_constant_is_continuous_at_p_one() {
        // both branches give C = 1 at p = 1
        let (pa, _) = build_example2(1.0, 1.0, 1.0, 0.5, 1.0).unwrap();
        let (pb, _) = build_example2(1.0, 1.0, 1.0, 0.5, 1.0 + 1e-12).unwrap();
        let a0 = pa.alpha_at(0.0, 0.3).unwrap();
        let b0 = pb.alpha_at(0.0, 0.3).unwrap();
        assert!((a0 - b0).abs() < 1e-9);
    }

    #[test]
    fn example2_rejects_bad_parameters() {
        assert!(matches!(
            build_example2(0.0, 1.0, 1.0, 0.5, 2.0),
            Err(HilbertError::BadParameter { name: "c", .. })
        ));
        assert!(matches!(
            build_example2(1.0, 1.0, 1.0, 1.0, 2.0),
            Err(HilbertError::BadParameter { name: "theta", .. })
        ));
    }

    #[test]
    fn example2_beta_vanishes_as_theta_approaches_one() {
        let (p, env) = build_example2(1.0, 1.0, 1.0, 1.0 - 1e-9, 2.0).unwrap();
        assert!(p.beta_at(0.0).unwrap() < 1e-9);
        let report = verify_certificate(&p, &env, 0.4, &VerifyOptions::strict(100.0)).unwrap();
        assert!(report.verdict.is_certified());
    }

    #[test]
    fn example2_vector_instance_obeys_certified_envelope() {
        // d = 2 realization with A = 0, ||h|| = alpha exactly on spheres,
        // ||f|| = beta: g = ||u|| obeys the shifted-envelope scalar problem
        let (_, envelope) = build_example2(1.0, 1.0, 1.0, 0.5, 2.0).unwrap();
        let vars = state_vars(2);
        let refs: Vec<&str> = vars.iter().map(|s| s.as_str()).collect();
        let h = vec![
            Expression::parse("0.25 * u1 * (u1^2 + u2^2)^0.5 / (1+t)^2", &refs).unwrap(),
            Expression::parse("0.25 * u2 * (u1^2 + u2^2)^0.5 / (1+t)^2", &refs).unwrap(),
        ];
        let f = vec![
            Expression::parse("0.125 / (1+t)^2", &["t"]).unwrap(),
            Expression::constant(0.0, &["t"]),
        ];
        let sys = VectorSystem::new(
            MatrixSpec::Constant(vec![vec![0.0, 0.0], vec![0.0, 0.0]]),
            h,
            f,
            Expression::parse("0.25 * y^2 / (1+t)^2", &["t", "y"]).unwrap(),
            vec![0.24, 0.32],
        )
        .unwrap();
        assert!(
            falsify_alpha_bound(&sys, 100.0, 8, &[0.1, 0.5, 1.0], 16, 7).unwrap().is_none()
        );

        let reduced = reduce_to_scalar(&sys).unwrap();
        assert_eq!(reduced.gamma_at(1.0).unwrap(), 0.0);
        assert!((reduced.beta_at(0.0).unwrap() - 0.125).abs() < 1e-15);

        let traj = integrate_vector(&sys, 1.0e3, 1e-9, 1e-11).unwrap();
        let check = check_envelope(&traj.norm_trajectory(), &envelope, false).unwrap();
        assert!(check.clean(), "worst slack {}", check.worst_slack);
    }

    #[test]
    fn falsifier_rejects_wrong_bound() {
        let vars = state_vars(2);
        let refs: Vec<&str> = vars.iter().map(|s| s.as_str()).collect();
        let h = vec![
            Expression::parse("u1", &refs).unwrap(),
            Expression::parse("u2", &refs).unwrap(),
        ];
        let sys = VectorSystem::new(
            MatrixSpec::Constant(vec![vec![1.0, 0.0], vec![0.0, 1.0]]),
            h,
            zero_f(2),
            // claims ||h|| <= y/2, but ||h|| = y
            Expression::parse("0.5*y", &["t", "y"]).unwrap(),
            vec![1.0, 0.0],
        )
        .unwrap();
        let counter = falsify_alpha_bound(&sys, 10.0, 4, &[1.0], 8, 42)
            .unwrap()
            .expect("bound is violated");
        assert!(counter.h_norm > counter.alpha_value);
    }

    #[test]
    fn gdot_decay_on_example2_tail() {
        let (problem, _) = build_example2(1.0, 1.0, 1.0, 0.5, 2.0).unwrap();
        let traj = crate::ode::integrate_extremal(&problem, 0.4, 1.0e4, 1e-9, 1e-11).unwrap();
        let report = check_gdot_decay(&traj, 1.0, 1.0).unwrap();
        assert!(report.bounded, "growth ratio {}", report.growth_ratio);
        assert!(report.limit_ok);
        assert!(report.g_limit <= 1.0 + 1e-6);
    }

    #[test]
    fn gdot_decay_flat_trajectory() {
        let p = ContinuousProblem::new(
            Coefficient::constant(0.0),
            Coefficient::constant(0.0),
            Expression::constant(0.0, &["t", "y"]),
            0.0,
        )
        .unwrap();
        let traj = crate::ode::integrate_extremal(&p, 0.3, 1.0e3, 1e-8, 1e-10).unwrap();
        let report = check_gdot_decay(&traj, 1.0, 1.0).unwrap();
        assert!(report.bounded);
        assert_eq!(report.g_limit, 0.3);
    }

    #[test]
    fn gdot_decay_parameter_and_length_gates() {
        let p = ContinuousProblem::new(
            Coefficient::constant(0.0),
            Coefficient::constant(0.0),
            Expression::constant(0.0, &["t", "y"]),
            0.0,
        )
        .unwrap();
        let traj = crate::ode::integrate_extremal(&p, 0.3, 1.0e3, 1e-8, 1e-10).unwrap();
        assert!(matches!(
            check_gdot_decay(&traj, 0.0, 1.0),
            Err(HilbertError::BadParameter { name: "b", .. })
        ));
        let short = crate::ode::integrate_extremal(&p, 0.3, 50.0, 1e-8, 1e-10).unwrap();
        assert!(matches!(
            check_gdot_decay(&short, 1.0, 1.0),
            Err(HilbertError::TrajectoryTooShort)
        ));
    }
}
