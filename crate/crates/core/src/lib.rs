//! Certified growth/decay envelopes for nonlinear differential and
//! difference inequalities.
//!
//! The library works with nonnegative solutions of
//!
//! ```text
//! g'(t) <= -gamma(t) g(t) + alpha(t, g(t)) + beta(t),        t >= t0,
//! ```
//!
//! and its discrete analog. A positive envelope `mu` certifies the bound
//! `g(t) <= 1/mu(t)` when a pointwise residual condition holds together
//! with a gate on the initial value. The crate provides:
//!
//! * [`expr`] — a small expression DSL (parse, evaluate, differentiate)
//!   for coefficient functions,
//! * [`continuous`] — the continuous-time certificate verifier,
//! * [`ode`] — an adaptive Runge-Kutta oracle that integrates the
//!   equality-case dynamics and checks trajectories against envelopes,
//! * [`discrete`] — the difference-inequality verifier and the extremal
//!   recurrence oracle,
//! * [`hilbert`] — finite-dimensional vector systems `u' + Au = h + f`
//!   reduced to the scalar inequality via the minimal eigenvalue of `A`,
//! * [`search`] — feasibility search over parametric envelope families,
//!   including closed-form checks that extend certificates from a finite
//!   grid to all `t >= t0`.

pub mod continuous;
pub mod discrete;
pub mod expr;
pub mod hilbert;
pub mod ode;
pub mod report;
pub mod search;

mod rk45;

pub use continuous::{
    check_alpha_assumptions, condition_residual, log_grid, verify_certificate, AlphaCheckReport,
    Coefficient, ContinuousError, ContinuousProblem, Envelope, VerifyMode, VerifyOptions,
};
pub use discrete::{
    discrete_residual, run_recurrence, verify_discrete_certificate, write_sequence_csv,
    DiscreteEnvelope, DiscreteError, DiscreteProblem, Seq,
};
pub use expr::{DiffError, EvalError, Expression, ParseError};
pub use hilbert::{
    build_example2, check_gdot_decay, falsify_alpha_bound, integrate_vector, min_eigenvalue,
    reduce_to_scalar, sym_eigenvalues, GdotDecayReport, HilbertError, MatrixSpec, VectorSystem,
    VectorTrajectory,
};
pub use ode::{
    check_envelope, integrate_extremal, integrate_scalar, EnvelopeCheck, OdeError, Sample,
    Trajectory, TrajectoryStatus,
};
pub use report::{CertificateReport, Verdict};
pub use search::{
    powerlaw_closed_form_check, refine_boundary, search_feasible, EnvelopeFamily, PowerLawShape,
    FeasibleRegion, LatticePoint, Objective, SearchError, SearchProblem,
};

/// Formats a float with the shortest representation that round-trips,
/// used by every report and CSV writer.
pub fn fmt_f64(x: f64) -> String {
    format!("{}", x)
}
