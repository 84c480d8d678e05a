//! Embedded Dormand-Prince 4(5) stepper with PI step-size control and
//! FSAL reuse. Shared by the scalar and vector integrators.

use crate::expr::EvalError;
use crate::ode::OdeError;

// Dormand-Prince tableau (7 stages, first-same-as-last).
const C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 7] = [
    [0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [
        19372.0 / 6561.0,
        -25360.0 / 2187.0,
        64448.0 / 6561.0,
        -212.0 / 729.0,
        0.0,
        0.0,
    ],
    [
        9017.0 / 3168.0,
        -355.0 / 33.0,
        46732.0 / 5247.0,
        49.0 / 176.0,
        -5103.0 / 18656.0,
        0.0,
    ],
    [
        35.0 / 384.0,
        0.0,
        500.0 / 1113.0,
        125.0 / 192.0,
        -2187.0 / 6784.0,
        11.0 / 84.0,
    ],
];
// 5th-order weights (advance with local extrapolation); the 7th stage
// only feeds the error estimate.
const B5: [f64; 7] = [
    35.0 / 384.0,
    0.0,
    500.0 / 1113.0,
    125.0 / 192.0,
    -2187.0 / 6784.0,
    11.0 / 84.0,
    0.0,
];
// B5 - B4: error estimator weights.
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];

const SAFETY: f64 = 0.9;
const BETA_STAB: f64 = 0.04;
const EXPO1: f64 = 0.2 - BETA_STAB * 0.75;
const FAC_MIN: f64 = 0.2;
const FAC_MAX: f64 = 10.0;
const MAX_STEPS: usize = 20_000_000;

/// State vector abstraction shared by the scalar and the d-dimensional
/// integrators.
pub(crate) trait OdeState: Clone {
    /// `self += c * other`.
    fn scaled_add(&mut self, c: f64, other: &Self);
    /// Max of `|err_i| / (atol + rtol * max(|a_i|, |b_i|))`, treating
    /// `self` as the error vector.
    fn err_ratio(&self, a: &Self, b: &Self, rtol: f64, atol: f64) -> f64;
    fn inf_norm(&self) -> f64;
    fn all_finite(&self) -> bool;
}

impl OdeState for f64 {
    fn scaled_add(&mut self, c: f64, other: &f64) {
        *self += c * other;
    }

    fn err_ratio(&self, a: &f64, b: &f64, rtol: f64, atol: f64) -> f64 {
        let scale = atol + rtol * a.abs().max(b.abs());
        (self / scale).abs()
    }

    fn inf_norm(&self) -> f64 {
        self.abs()
    }

    fn all_finite(&self) -> bool {
        self.is_finite()
    }
}

impl OdeState for Vec<f64> {
    fn scaled_add(&mut self, c: f64, other: &Vec<f64>) {
        for (s, o) in self.iter_mut().zip(other) {
            *s += c * o;
        }
    }

    fn err_ratio(&self, a: &Vec<f64>, b: &Vec<f64>, rtol: f64, atol: f64) -> f64 {
        let mut worst = 0.0f64;
        for i in 0..self.len() {
            let scale = atol + rtol * a[i].abs().max(b[i].abs());
            worst = worst.max((self[i] / scale).abs());
        }
        worst
    }

    fn inf_norm(&self) -> f64 {
        self.iter().fold(0.0f64, |m, x| m.max(x.abs()))
    }

    fn all_finite(&self) -> bool {
        self.iter().all(|x| x.is_finite())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) enum RkStatus {
    Completed,
    BlewUp,
    DomainError(String),
}

pub(crate) struct RkResult<S> {
    /// `(t, y, y')` at the initial point and at every accepted step.
    pub samples: Vec<(f64, S, S)>,
    pub status: RkStatus,
    pub notes: Vec<String>,
}

pub(crate) fn validate(t0: f64, t_end: f64, rel_tol: f64, abs_tol: f64) -> Result<(), OdeError> {
    if !(t_end > t0) {
        return Err(OdeError::BadHorizon { t0, horizon: t_end });
    }
    if !(rel_tol > 0.0) || !rel_tol.is_finite() {
        return Err(OdeError::BadTolerance(rel_tol));
    }
    if !(abs_tol > 0.0) || !abs_tol.is_finite() {
        return Err(OdeError::BadTolerance(abs_tol));
    }
    Ok(())
}

/// Initial step size heuristic following the classic embedded-pair
/// implementation: probe the local curvature with one Euler step.
fn initial_step<S, F>(
    rhs: &mut F,
    t0: f64,
    y0: &S,
    f0: &S,
    t_end: f64,
    rtol: f64,
    atol: f64,
) -> f64
where
    S: OdeState,
    F: FnMut(f64, &S) -> Result<S, EvalError>,
{
    let span = t_end - t0;
    let d0 = y0.err_ratio(y0, y0, rtol, atol).max(1e-10);
    let d1 = f0.err_ratio(y0, y0, rtol, atol).max(1e-10);
    let h0 = (0.01 * d0 / d1).min(span);
    let mut y1 = y0.clone();
    y1.scaled_add(h0, f0);
    let h = match rhs(t0 + h0, &y1) {
        Ok(f1) => {
            let mut diff = f1;
            diff.scaled_add(-1.0, f0);
            let d2 = diff.err_ratio(y0, y0, rtol, atol) / h0;
            let dm = d1.max(d2);
            if dm <= 1e-15 {
                (h0 * 1e-3).max(1e-6 * span)
            } else {
                (0.01 / dm).powf(0.2)
            }
        }
        Err(_) => h0,
    };
    h.min(100.0 * h0).min(span)
}

/// Integrates `y' = rhs(t, y)` from `t0` to `t_end`.
///
/// `adjust` runs after every accepted step and may modify the state (the
/// extremal integrator clamps at zero there); returning `true` records a
/// note and invalidates FSAL reuse for the next step.
pub(crate) fn integrate_rk45<S, F, G>(
    mut rhs: F,
    t0: f64,
    y0: S,
    t_end: f64,
    rel_tol: f64,
    abs_tol: f64,
    mut adjust: G,
    adjust_note: &str,
) -> Result<RkResult<S>, OdeError>
where
    S: OdeState,
    F: FnMut(f64, &S) -> Result<S, EvalError>,
    G: FnMut(&mut S) -> bool,
{
    validate(t0, t_end, rel_tol, abs_tol)?;

    let mut samples = Vec::new();
    let mut notes = Vec::new();
    let mut adjusted_any = false;

    let blowup = 1.0 / abs_tol;
    let h_min = 1e-14 * (t_end - t0);

    let mut t = t0;
    let mut y = y0;
    let mut f = match rhs(t, &y) {
        Ok(f) => f,
        Err(e) => {
            return Ok(RkResult {
                samples,
                status: RkStatus::DomainError(e.to_string()),
                notes,
            })
        }
    };
    samples.push((t, y.clone(), f.clone()));
    if y.inf_norm() > blowup {
        return Ok(RkResult {
            samples,
            status: RkStatus::BlewUp,
            notes,
        });
    }

    let mut h = initial_step(&mut rhs, t, &y, &f, t_end, rel_tol, abs_tol).max(h_min);
    let mut facold: f64 = 1e-4;
    let mut rejected = false;
    let mut k: Vec<S> = Vec::with_capacity(7);

    for _ in 0..MAX_STEPS {
        if t >= t_end {
            return Ok(RkResult {
                samples,
                status: RkStatus::Completed,
                notes,
            });
        }
        h = h.min(t_end - t);
        if h < h_min {
            notes.push("step size underflow".to_string());
            return Ok(RkResult {
                samples,
                status: RkStatus::BlewUp,
                notes,
            });
        }

        k.clear();
        k.push(f.clone());
        let mut stage_error = None;
        for i in 1..7 {
            let mut y_stage = y.clone();
            for (j, kj) in k.iter().enumerate().take(i) {
                let a = A[i][j];
                if a != 0.0 {
                    y_stage.scaled_add(a * h, kj);
                }
            }
            match rhs(t + C[i] * h, &y_stage) {
                Ok(ki) => k.push(ki),
                Err(e) => {
                    stage_error = Some(e);
                    break;
                }
            }
        }
        if let Some(e) = stage_error {
            // a domain error inside the step: retry with a smaller step in
            // case the step overshot the domain; give up at h_min
            if h / 2.0 >= h_min {
                h /= 2.0;
                rejected = true;
                continue;
            }
            return Ok(RkResult {
                samples,
                status: RkStatus::DomainError(e.to_string()),
                notes,
            });
        }

        let mut y_new = y.clone();
        for (i, ki) in k.iter().enumerate() {
            if B5[i] != 0.0 {
                y_new.scaled_add(B5[i] * h, ki);
            }
        }
        let mut err_vec = y.clone();
        err_vec.scaled_add(-1.0, &y); // zero of the right shape
        for (i, ki) in k.iter().enumerate() {
            if E[i] != 0.0 {
                err_vec.scaled_add(E[i] * h, ki);
            }
        }
        let err = err_vec.err_ratio(&y, &y_new, rel_tol, abs_tol);
        let err = if err.is_finite() { err } else { f64::MAX };

        let fac11 = err.max(1e-16).powf(EXPO1);
        if err <= 1.0 && y_new.all_finite() {
            // accept; the PI factor uses the previous step's error
            let fac = (fac11 / facold.powf(BETA_STAB) / SAFETY).clamp(1.0 / FAC_MAX, 1.0 / FAC_MIN);
            facold = err.max(1e-4);
            t += h;
            y = y_new;
            // FSAL: stage 7 was evaluated at (t + h, y_new)
            f = k[6].clone();
            if adjust(&mut y) {
                if !adjusted_any {
                    notes.push(adjust_note.to_string());
                    adjusted_any = true;
                }
                match rhs(t, &y) {
                    Ok(fr) => f = fr,
                    Err(e) => {
                        samples.push((t, y.clone(), f.clone()));
                        return Ok(RkResult {
                            samples,
                            status: RkStatus::DomainError(e.to_string()),
                            notes,
                        });
                    }
                }
            }
            samples.push((t, y.clone(), f.clone()));
            if y.inf_norm() > blowup {
                return Ok(RkResult {
                    samples,
                    status: RkStatus::BlewUp,
                    notes,
                });
            }
            let mut h_new = h / fac;
            if rejected {
                h_new = h_new.min(h);
                rejected = false;
            }
            h = h_new;
        } else {
            rejected = true;
            h /= (fac11 / SAFETY).min(1.0 / FAC_MIN);
        }
    }

    notes.push("step limit reached".to_string());
    Ok(RkResult {
        samples,
        status: RkStatus::DomainError("step limit reached".to_string()),
        notes,
    })
}
