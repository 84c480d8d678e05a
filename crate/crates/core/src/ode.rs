//! Numerical oracle for the continuous inequality: integrates the
//! equality-case dynamics `g' = -gamma(t) g + alpha(t, g) + beta(t)` (the
//! worst case dominating every solution of the inequality when `alpha` is
//! nondecreasing) and compares trajectories against certified envelopes.

use std::io::{self, Write};

use thiserror::Error;

use crate::continuous::{ContinuousError, ContinuousProblem, Envelope};
use crate::expr::Expression;
use crate::fmt_f64;
use crate::rk45::{integrate_rk45, RkResult, RkStatus};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OdeError {
    #[error("horizon {horizon} must exceed start time {t0}")]
    BadHorizon { t0: f64, horizon: f64 },
    #[error("tolerances must be positive and finite, got {0}")]
    BadTolerance(f64),
    #[error("initial value must be nonnegative, got {0}")]
    BadInitialValue(f64),
    #[error("right-hand side must use variables [\"t\", \"y\"], got {0:?}")]
    BadRhsVariables(Vec<String>),
}

/// One accepted integrator point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sample {
    pub t: f64,
    pub g: f64,
    pub g_dot: f64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TrajectoryStatus {
    Completed,
    /// The state exceeded `1/abs_tol` or the step size underflowed; the
    /// last sample records the escape time.
    BlewUp,
    DomainError,
}

/// An integrated scalar trajectory with dense output.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub samples: Vec<Sample>,
    /// The absolute tolerance the trajectory was integrated at.
    pub tolerance: f64,
    pub status: TrajectoryStatus,
    pub notes: Vec<String>,
}

impl Trajectory {
    fn from_result(result: RkResult<f64>, abs_tol: f64) -> Trajectory {
        let samples = result
            .samples
            .into_iter()
            .map(|(t, g, g_dot)| Sample { t, g, g_dot })
            .collect();
        let (status, mut notes) = (result.status, result.notes);
        let status = match status {
            RkStatus::Completed => TrajectoryStatus::Completed,
            RkStatus::BlewUp => TrajectoryStatus::BlewUp,
            RkStatus::DomainError(msg) => {
                notes.push(format!("domain error: {}", msg));
                TrajectoryStatus::DomainError
            }
        };
        Trajectory {
            samples,
            tolerance: abs_tol,
            status,
            notes,
        }
    }

    pub fn start_time(&self) -> Option<f64> {
        self.samples.first().map(|s| s.t)
    }

    pub fn end_time(&self) -> Option<f64> {
        self.samples.last().map(|s| s.t)
    }

    /// Dense output by cubic Hermite interpolation between the accepted
    /// steps bracketing `t` (locally fourth-order accurate). `None`
    /// outside the sampled range.
    pub fn value_at(&self, t: f64) -> Option<f64> {
        if self.samples.is_empty() {
            return None;
        }
        let first = self.samples.first().unwrap();
        let last = self.samples.last().unwrap();
        if t < first.t || t > last.t {
            return None;
        }
        let idx = self
            .samples
            .partition_point(|s| s.t <= t)
            .min(self.samples.len() - 1);
        if idx == 0 {
            return Some(first.g);
        }
        let a = &self.samples[idx - 1];
        let b = &self.samples[idx];
        if b.t == a.t {
            return Some(b.g);
        }
        let h = b.t - a.t;
        let s = (t - a.t) / h;
        let s2 = s * s;
        let s3 = s2 * s;
        let h00 = 2.0 * s3 - 3.0 * s2 + 1.0;
        let h10 = s3 - 2.0 * s2 + s;
        let h01 = -2.0 * s3 + 3.0 * s2;
        let h11 = s3 - s2;
        Some(h00 * a.g + h10 * h * a.g_dot + h01 * b.g + h11 * h * b.g_dot)
    }

    /// CSV with header `t,g,g_dot` at full round-trip precision.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "t,g,g_dot")?;
        for s in &self.samples {
            writeln!(w, "{},{},{}", fmt_f64(s.t), fmt_f64(s.g), fmt_f64(s.g_dot))?;
        }
        Ok(())
    }
}

/// Integrates the equality case of the inequality from `g0 >= 0`.
///
/// The true flow preserves `g >= 0` when `g0 >= 0` and `beta >= 0`, so
/// any negative excursion is numerical; accepted states are clamped at
/// zero and the clamp is recorded in the notes.
pub fn integrate_extremal(
    p: &ContinuousProblem,
    g0: f64,
    horizon: f64,
    rel_tol: f64,
    abs_tol: f64,
) -> Result<Trajectory, OdeError> {
    if g0 < 0.0 {
        return Err(OdeError::BadInitialValue(g0));
    }
    crate::rk45::validate(p.t0, horizon, rel_tol, abs_tol)?;
    let result = integrate_rk45(
        |t, y: &f64| p.rhs(t, *y),
        p.t0,
        g0,
        horizon,
        rel_tol,
        abs_tol,
        |y: &mut f64| {
            if *y < 0.0 {
                *y = 0.0;
                true
            } else {
                false
            }
        },
        "state clamped at zero after a negative numerical excursion",
    )?;
    Ok(Trajectory::from_result(result, abs_tol))
}

/// Integrates `y' = rhs(t, y)` for a user-supplied right-hand side in
/// `(t, y)`; no clamping is applied.
pub fn integrate_scalar(
    rhs: &Expression,
    y0: f64,
    t0: f64,
    horizon: f64,
    rel_tol: f64,
    abs_tol: f64,
) -> Result<Trajectory, OdeError> {
    let vars: Vec<&str> = rhs.vars().iter().map(|s| s.as_str()).collect();
    if vars != ["t", "y"] {
        return Err(OdeError::BadRhsVariables(rhs.vars().to_vec()));
    }
    crate::rk45::validate(t0, horizon, rel_tol, abs_tol)?;
    let result = integrate_rk45(
        |t, y: &f64| rhs.eval(&[t, *y]),
        t0,
        y0,
        horizon,
        rel_tol,
        abs_tol,
        |_| false,
        "",
    )?;
    Ok(Trajectory::from_result(result, abs_tol))
}

/// A sample where the trajectory exceeded the envelope bound.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Violation {
    pub t: f64,
    pub g: f64,
    pub bound: f64,
}

/// Result of checking a trajectory against an envelope bound `1/mu`.
#[derive(Debug, Clone)]
pub struct EnvelopeCheck {
    pub violations: Vec<Violation>,
    /// `min_t (1/mu(t) - g(t))` over all samples.
    pub worst_slack: f64,
    pub worst_t: f64,
    pub checked: usize,
    pub strict: bool,
}

impl EnvelopeCheck {
    pub fn clean(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Lists every sample where `g >= 1/mu` (strict) or
/// `g > 1/mu + tolerance` (nonstrict, using the trajectory's integration
/// tolerance as slack).
pub fn check_envelope(
    traj: &Trajectory,
    env: &Envelope,
    strict: bool,
) -> Result<EnvelopeCheck, ContinuousError> {
    let mut check = EnvelopeCheck {
        violations: Vec::new(),
        worst_slack: f64::INFINITY,
        worst_t: f64::NAN,
        checked: traj.samples.len(),
        strict,
    };
    for s in &traj.samples {
        let bound = env.bound(s.t)?;
        let slack = bound - s.g;
        if slack < check.worst_slack {
            check.worst_slack = slack;
            check.worst_t = s.t;
        }
        let violated = if strict {
            s.g >= bound
        } else {
            s.g > bound + traj.tolerance
        };
        if violated {
            check.violations.push(Violation {
                t: s.t,
                g: s.g,
                bound,
            });
        }
    }
    Ok(check)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::continuous::Coefficient;

    fn constant_problem(gamma: f64, beta: f64) -> ContinuousProblem {
        ContinuousProblem::new(
            Coefficient::constant(gamma),
            Coefficient::constant(beta),
            Expression::constant(0.0, &["t", "y"]),
            0.0,
        )
        .unwrap()
    }

    #[test]
    fn linear_decay_hits_closed_form() {
        let p = constant_problem(1.0, 0.0);
        let traj = integrate_extremal(&p, 1.0, 1.0, 1e-8, 1e-10).unwrap();
        assert_eq!(traj.status, TrajectoryStatus::Completed);
        let end = traj.samples.last().unwrap();
        assert!((end.g - (-1.0f64).exp()).abs() < 1e-6);
    }

    #[test]
    fn zero_dynamics_keeps_constant_solution() {
        let p = constant_problem(0.0, 0.0);
        let traj = integrate_extremal(&p, 0.5, 10.0, 1e-8, 1e-10).unwrap();
        for s in &traj.samples {
            assert_eq!(s.g, 0.5);
        }
    }

    #[test]
    fn scalar_rhs_closed_form() {
        let rhs = Expression::parse("-y", &["t", "y"]).unwrap();
        let traj = integrate_scalar(&rhs, 2.0, 0.0, 1.0, 1e-8, 1e-10).unwrap();
        let end = traj.samples.last().unwrap();
        assert!((end.g - 2.0 * (-1.0f64).exp()).abs() < 1e-6);

        let zero = Expression::parse("0*y", &["t", "y"]).unwrap();
        let flat = integrate_scalar(&zero, 3.0, 0.0, 5.0, 1e-8, 1e-10).unwrap();
        assert!(flat.samples.iter().all(|s| s.g == 3.0));
    }

    #[test]
    fn quadratic_rhs_blows_up_near_one() {
        let rhs = Expression::parse("y^2", &["t", "y"]).unwrap();
        let traj = integrate_scalar(&rhs, 1.0, 0.0, 2.0, 1e-8, 1e-10).unwrap();
        assert_eq!(traj.status, TrajectoryStatus::BlewUp);
        let escape = traj.samples.last().unwrap().t;
        assert!((escape - 1.0).abs() < 1e-2);
    }

    #[test]
    fn dense_output_matches_exponential() {
        let p = constant_problem(1.0, 0.0);
        let traj = integrate_extremal(&p, 1.0, 2.0, 1e-10, 1e-12).unwrap();
        for i in 0..40 {
            let t = 0.05 * i as f64;
            let v = traj.value_at(t).unwrap();
            assert!((v - (-t).exp()).abs() < 1e-8, "t = {}", t);
        }
        assert!(traj.value_at(-0.1).is_none());
        assert!(traj.value_at(2.1).is_none());
    }

    #[test]
    fn envelope_check_flags_constant_violator() {
        let env = Envelope::new(Expression::constant(2.0, &["t"])).unwrap();
        let traj = Trajectory {
            samples: (0..5)
                .map(|i| Sample {
                    t: i as f64,
                    g: 1.0,
                    g_dot: 0.0,
                })
                .collect(),
            tolerance: 1e-10,
            status: TrajectoryStatus::Completed,
            notes: vec![],
        };
        let check = check_envelope(&traj, &env, true).unwrap();
        assert_eq!(check.violations.len(), 5);
        assert!((check.worst_slack + 0.5).abs() < 1e-15);
    }

    #[test]
    fn envelope_check_passes_zero_trajectory() {
        let env = Envelope::new(Expression::parse("4*(1+t)", &["t"]).unwrap()).unwrap();
        let traj = Trajectory {
            samples: (0..5)
                .map(|i| Sample {
                    t: i as f64,
                    g: 0.0,
                    g_dot: 0.0,
                })
                .collect(),
            tolerance: 1e-10,
            status: TrajectoryStatus::Completed,
            notes: vec![],
        };
        let check = check_envelope(&traj, &env, true).unwrap();
        assert!(check.clean());
    }

    #[test]
    fn nonincreasing_without_forcing() {
        let p = constant_problem(0.7, 0.0);
        let traj = integrate_extremal(&p, 0.9, 20.0, 1e-9, 1e-11).unwrap();
        for w in traj.samples.windows(2) {
            assert!(w[1].g <= w[0].g + 10.0 * traj.tolerance);
        }
    }

    #[test]
    fn clamp_keeps_state_nonnegative_and_records_a_note() {
        // negative forcing violates the standing assumptions but must
        // not drive the clamped integrator below zero
        let p = ContinuousProblem::new(
            Coefficient::constant(1.0),
            Coefficient::constant(-1.0),
            Expression::constant(0.0, &["t", "y"]),
            0.0,
        )
        .unwrap();
        let traj = integrate_extremal(&p, 0.5, 5.0, 1e-8, 1e-10).unwrap();
        assert!(traj.samples.iter().all(|s| s.g >= 0.0));
        assert!(traj.notes.iter().any(|n| n.contains("clamped")));
    }

    #[test]
    fn csv_has_expected_header() {
        let p = constant_problem(1.0, 0.0);
        let traj = integrate_extremal(&p, 1.0, 0.5, 1e-6, 1e-8).unwrap();
        let mut buf = Vec::new();
        traj.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("t,g,g_dot\n"));
    }

    #[test]
    fn rejects_negative_initial_value() {
        let p = constant_problem(1.0, 0.0);
        assert!(matches!(
            integrate_extremal(&p, -0.1, 1.0, 1e-8, 1e-10),
            Err(OdeError::BadInitialValue(_))
        ));
    }
}
