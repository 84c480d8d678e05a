//! Feasibility search over parametric envelope families.
//!
//! A lattice over the family's parameter box is evaluated with the grid
//! verifier; for the power-law coefficient shape with `b = 1` the
//! closed-form sufficient inequalities
//!
//! ```text
//! m + 0.5 p nu >= 1,    q - 0.5 nu >= 1,
//! sqrt(lambda) + lambda^(-0.5 p) <= c - 0.5 nu
//! ```
//!
//! are checked as well; they extend a certificate from the finite grid to
//! all `t >= 0`. When the shape is supplied, lattice feasibility is the
//! conjunction of the grid certificate and the closed-form check, so
//! boundary refinement converges to the globally valid frontier rather
//! than to a horizon artifact.

use std::io::{self, Write};

use thiserror::Error;

use crate::continuous::{verify_certificate, ContinuousError, ContinuousProblem, Coefficient, Envelope, VerifyOptions};
use crate::discrete::{verify_discrete_certificate, DiscreteEnvelope, DiscreteError, DiscreteProblem, Seq};
use crate::expr::Expression;
use crate::fmt_f64;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SearchError {
    #[error("closed-form check applies only to the b = 1 shape, got b = {0}")]
    WrongShape(f64),
    #[error("parameter `{name}` range [{lo}, {hi}] is invalid: {reason}")]
    BadRange {
        name: &'static str,
        lo: f64,
        hi: f64,
        reason: &'static str,
    },
    #[error("resolution must give at least 2 points per parameter, got {0:?}")]
    BadResolution(Vec<usize>),
    #[error("resolution has {got} entries but the family has {expected} parameters")]
    ResolutionArity { expected: usize, got: usize },
    #[error("family kind does not match the problem kind")]
    FamilyMismatch,
    #[error("unknown parameter `{0}`")]
    UnknownParam(String),
    #[error("no feasible/infeasible sign change along `{0}`")]
    NoSignChange(String),
    #[error("region is empty")]
    EmptyRegion,
    #[error("refinement tolerance must be positive, got {0}")]
    BadTolerance(f64),
    #[error("parameter `{name}` = {value} violates {constraint}")]
    BadParameter {
        name: &'static str,
        value: f64,
        constraint: &'static str,
    },
    #[error(transparent)]
    Continuous(#[from] ContinuousError),
    #[error(transparent)]
    Discrete(#[from] DiscreteError),
}

/// Closed-form sufficient check for the power-law shape with `b = 1`:
/// returns `true` iff all three inequalities hold, in which case the
/// certificate condition holds for ALL `t >= 0` with
/// `mu = lambda (1+t)^nu`, not just on a sampling grid.
pub fn powerlaw_closed_form_check(
    b: f64,
    m: f64,
    q: f64,
    c: f64,
    p: f64,
    lambda: f64,
    nu: f64,
) -> Result<bool, SearchError> {
    if b != 1.0 {
        return Err(SearchError::WrongShape(b));
    }
    if lambda <= 0.0 {
        return Err(SearchError::BadParameter {
            name: "lambda",
            value: lambda,
            constraint: "lambda > 0",
        });
    }
    Ok(m + 0.5 * p * nu >= 1.0
        && q - 0.5 * nu >= 1.0
        && lambda.sqrt() + lambda.powf(-0.5 * p) <= c - 0.5 * nu)
}

/// The power-law coefficient shape in the original `u` variables:
/// `u' = -c/(1+t)^b u + u|u|^p/(1+t)^m + (1+t)^-q`. Squaring gives the
/// scalar problem for `g = u^2` with
/// `gamma = 2c/(1+t)^b`, `alpha = 2(1+t)^-m y^(1+p/2) + 2(1+t)^-q y^0.5`,
/// `beta = 0`.
#[derive(Debug, Clone, Copy)]
pub struct PowerLawShape {
    pub b: f64,
    pub m: f64,
    pub q: f64,
    pub c: f64,
    pub p: f64,
}

impl PowerLawShape {
    pub fn new(b: f64, m: f64, q: f64, c: f64, p: f64) -> Result<PowerLawShape, SearchError> {
        let gate = |name: &'static str, value: f64| {
            if value > 0.0 {
                Ok(())
            } else {
                Err(SearchError::BadParameter {
                    name,
                    value,
                    constraint: "positive",
                })
            }
        };
        gate("b", b)?;
        gate("m", m)?;
        gate("q", q)?;
        gate("c", c)?;
        gate("p", p)?;
        Ok(PowerLawShape { b, m, q, c, p })
    }

    /// The scalar problem for `g = u^2`.
    pub fn problem(&self) -> ContinuousProblem {
        let gamma = Coefficient::parse(&format!("2*{}/(1+t)^{}", self.c, self.b))
            .expect("generated gamma parses");
        let alpha = Expression::parse(
            &format!(
                "2*(1+t)^(-{})*y^{} + 2*(1+t)^(-{})*y^0.5",
                self.m,
                1.0 + 0.5 * self.p,
                self.q
            ),
            &["t", "y"],
        )
        .expect("generated alpha parses");
        ContinuousProblem::new(gamma, Coefficient::constant(0.0), alpha, 0.0)
            .expect("shape problem is well-formed")
    }

    /// The equality-case dynamics in the original variable `u` (as an
    /// expression in `(t, y)`), for oracle runs.
    pub fn scalar_ode_rhs(&self) -> Expression {
        Expression::parse(
            &format!(
                "-{}*y/(1+t)^{} + y*abs(y)^{}/(1+t)^{} + (1+t)^(-{})",
                self.c, self.b, self.p, self.m, self.q
            ),
            &["t", "y"],
        )
        .expect("generated rhs parses")
    }

    pub fn closed_form_check(&self, lambda: f64, nu: f64) -> Result<bool, SearchError> {
        powerlaw_closed_form_check(self.b, self.m, self.q, self.c, self.p, lambda, nu)
    }
}

/// Parametric envelope families with closed parameter ranges.
#[derive(Debug, Clone)]
pub enum EnvelopeFamily {
    /// `mu(t) = lambda (1+t)^nu`.
    PowerLaw { lambda: (f64, f64), nu: (f64, f64) },
    /// `mu(t) = c + lambda (1+t)^(-b)`.
    Shifted {
        c: (f64, f64),
        lambda: (f64, f64),
        b: (f64, f64),
    },
    /// `mu_n = mu`.
    ConstantDiscrete { mu: (f64, f64) },
    /// `mu_n = lambda (1+n)^nu`.
    PowerDiscrete { lambda: (f64, f64), nu: (f64, f64) },
}

impl EnvelopeFamily {
    pub fn param_names(&self) -> &'static [&'static str] {
        match self {
            EnvelopeFamily::PowerLaw { .. } => &["lambda", "nu"],
            EnvelopeFamily::Shifted { .. } => &["c", "lambda", "b"],
            EnvelopeFamily::ConstantDiscrete { .. } => &["mu"],
            EnvelopeFamily::PowerDiscrete { .. } => &["lambda", "nu"],
        }
    }

    pub fn ranges(&self) -> Vec<(f64, f64)> {
        match self {
            EnvelopeFamily::PowerLaw { lambda, nu } => vec![*lambda, *nu],
            EnvelopeFamily::Shifted { c, lambda, b } => vec![*c, *lambda, *b],
            EnvelopeFamily::ConstantDiscrete { mu } => vec![*mu],
            EnvelopeFamily::PowerDiscrete { lambda, nu } => vec![*lambda, *nu],
        }
    }

    pub fn is_discrete(&self) -> bool {
        matches!(
            self,
            EnvelopeFamily::ConstantDiscrete { .. } | EnvelopeFamily::PowerDiscrete { .. }
        )
    }

    /// Index of the decay-rate parameter maximized by
    /// [`Objective::MaxDecay`].
    fn decay_param(&self) -> usize {
        match self {
            EnvelopeFamily::PowerLaw { .. } | EnvelopeFamily::PowerDiscrete { .. } => 1,
            EnvelopeFamily::Shifted { .. } => 2,
            // a constant envelope has no decay; prefer the tightest bound
            EnvelopeFamily::ConstantDiscrete { .. } => 0,
        }
    }

    pub fn validate(&self) -> Result<(), SearchError> {
        let names = self.param_names();
        let positive_lo: &[&str] = match self {
            EnvelopeFamily::PowerLaw { .. } | EnvelopeFamily::PowerDiscrete { .. } => &["lambda"],
            EnvelopeFamily::Shifted { .. } => &["c", "lambda", "b"],
            EnvelopeFamily::ConstantDiscrete { .. } => &["mu"],
        };
        for (name, (lo, hi)) in names.iter().zip(self.ranges()) {
            if !(lo < hi) {
                return Err(SearchError::BadRange {
                    name: match *name {
                        "lambda" => "lambda",
                        "nu" => "nu",
                        "c" => "c",
                        "b" => "b",
                        _ => "mu",
                    },
                    lo,
                    hi,
                    reason: "needs lo < hi",
                });
            }
            if positive_lo.contains(name) && lo <= 0.0 {
                return Err(SearchError::BadRange {
                    name: match *name {
                        "lambda" => "lambda",
                        "c" => "c",
                        "b" => "b",
                        _ => "mu",
                    },
                    lo,
                    hi,
                    reason: "needs a positive lower bound",
                });
            }
        }
        Ok(())
    }

    /// Builds the continuous envelope at a parameter point.
    pub fn continuous_envelope(&self, params: &[f64]) -> Result<Envelope, SearchError> {
        let text = match self {
            EnvelopeFamily::PowerLaw { .. } => {
                format!("{} * (1+t)^({})", params[0], params[1])
            }
            EnvelopeFamily::Shifted { .. } => {
                format!("{} + {} * (1+t)^(-({}))", params[0], params[1], params[2])
            }
            _ => return Err(SearchError::FamilyMismatch),
        };
        let mu = Expression::parse(&text, &["t"]).expect("generated mu parses");
        Ok(Envelope::new(mu).expect("family mu is differentiable"))
    }

    /// Builds the discrete envelope at a parameter point.
    pub fn discrete_envelope(&self, params: &[f64]) -> Result<DiscreteEnvelope, SearchError> {
        match self {
            EnvelopeFamily::ConstantDiscrete { .. } => {
                Ok(DiscreteEnvelope::new(Seq::constant(params[0])))
            }
            EnvelopeFamily::PowerDiscrete { .. } => {
                let text = format!("{} * (1+n)^({})", params[0], params[1]);
                Ok(DiscreteEnvelope::new(Seq::Expr(
                    Expression::parse(&text, &["n"]).expect("generated mu parses"),
                )))
            }
            _ => Err(SearchError::FamilyMismatch),
        }
    }
}

/// The problem a family is searched against. For continuous problems the
/// optional [`PowerLawShape`] enables the closed-form check; lattice
/// feasibility is then `grid certificate AND closed form`.
pub enum SearchProblem<'a> {
    Continuous {
        problem: &'a ContinuousProblem,
        g0: f64,
        opts: VerifyOptions,
        closed_form: Option<PowerLawShape>,
    },
    Discrete {
        problem: &'a DiscreteProblem,
        g0: f64,
    },
}

/// One evaluated lattice point.
#[derive(Debug, Clone)]
pub struct LatticePoint {
    pub params: Vec<f64>,
    pub min_residual: f64,
    /// Initial-condition headroom `1 - mu(t0) g0` (discrete: `1 - mu_0 g_0`).
    pub headroom: f64,
    pub feasible: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Objective {
    /// Maximize the decay-rate parameter among feasible points.
    MaxDecay,
    /// Maximize the worst-case residual among feasible points.
    MaxMargin,
}

/// Exhaustive lattice evaluation result, in lattice order (last parameter
/// fastest). `points` holds every lattice point with its feasibility
/// flag; `best` indexes the winner under the search objective.
#[derive(Debug, Clone)]
pub struct FeasibleRegion {
    pub param_names: Vec<String>,
    /// Lattice values per parameter axis.
    pub axes: Vec<Vec<f64>>,
    pub points: Vec<LatticePoint>,
    pub best: Option<usize>,
    pub objective: Objective,
}

impl FeasibleRegion {
    pub fn feasible_count(&self) -> usize {
        self.points.iter().filter(|p| p.feasible).count()
    }

    pub fn is_empty(&self) -> bool {
        self.feasible_count() == 0
    }

    pub fn best_point(&self) -> Option<&LatticePoint> {
        self.best.map(|i| &self.points[i])
    }

    fn strides(&self) -> Vec<usize> {
        let mut strides = vec![1usize; self.axes.len()];
        for i in (0..self.axes.len().saturating_sub(1)).rev() {
            strides[i] = strides[i + 1] * self.axes[i + 1].len();
        }
        strides
    }

    fn point_index(&self, idx: &[usize]) -> usize {
        idx.iter()
            .zip(self.strides())
            .map(|(i, s)| i * s)
            .sum()
    }

    /// Whether the sampled region covers `point`: every corner of the
    /// lattice cell containing the point must be feasible. Points on a
    /// lattice hyperplane use the degenerate cell along that axis.
    pub fn contains(&self, point: &[f64]) -> bool {
        if point.len() != self.axes.len() {
            return false;
        }
        let mut corners: Vec<Vec<usize>> = Vec::with_capacity(self.axes.len());
        for (axis, &x) in self.axes.iter().zip(point) {
            let eps = 1e-9 * (1.0 + x.abs());
            if x < axis[0] - eps || x > *axis.last().unwrap() + eps {
                return false;
            }
            if let Some(j) = axis.iter().position(|v| (v - x).abs() <= eps) {
                corners.push(vec![j]);
            } else {
                let j = axis.partition_point(|v| *v < x);
                corners.push(vec![j - 1, j]);
            }
        }
        let mut all = vec![Vec::new()];
        for options in &corners {
            let mut next = Vec::new();
            for prefix in &all {
                for &o in options {
                    let mut p = prefix.clone();
                    p.push(o);
                    next.push(p);
                }
            }
            all = next;
        }
        all.iter()
            .all(|idx| self.points[self.point_index(idx)].feasible)
    }

    /// CSV `param1,...,paramK,min_residual,headroom,feasible` over every
    /// evaluated lattice point.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(
            w,
            "{},min_residual,headroom,feasible",
            self.param_names.join(",")
        )?;
        for p in &self.points {
            let params: Vec<String> = p.params.iter().map(|v| fmt_f64(*v)).collect();
            writeln!(
                w,
                "{},{},{},{}",
                params.join(","),
                fmt_f64(p.min_residual),
                fmt_f64(p.headroom),
                p.feasible
            )?;
        }
        Ok(())
    }
}

fn linspace(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    (0..count)
        .map(|i| lo + (hi - lo) * i as f64 / (count - 1) as f64)
        .collect()
}

/// Evaluates one parameter point against the search problem.
fn evaluate_point(
    problem: &SearchProblem<'_>,
    family: &EnvelopeFamily,
    params: &[f64],
) -> Result<LatticePoint, SearchError> {
    match problem {
        SearchProblem::Continuous {
            problem,
            g0,
            opts,
            closed_form,
        } => {
            if family.is_discrete() {
                return Err(SearchError::FamilyMismatch);
            }
            let envelope = family.continuous_envelope(params)?;
            let report = verify_certificate(problem, &envelope, *g0, opts)?;
            let mu0 = envelope.mu_at(problem.t0)?;
            let mut feasible = report.verdict.is_certified();
            if let (Some(shape), EnvelopeFamily::PowerLaw { .. }) = (closed_form, family) {
                feasible = feasible && shape.closed_form_check(params[0], params[1])?;
            }
            Ok(LatticePoint {
                params: params.to_vec(),
                min_residual: report.min_residual,
                headroom: 1.0 - mu0 * g0,
                feasible,
            })
        }
        SearchProblem::Discrete { problem, g0 } => {
            if !family.is_discrete() {
                return Err(SearchError::FamilyMismatch);
            }
            let envelope = family.discrete_envelope(params)?;
            let report = verify_discrete_certificate(problem, &envelope, *g0)?;
            let mu0 = envelope.mu_at(0)?;
            Ok(LatticePoint {
                params: params.to_vec(),
                min_residual: report.min_residual,
                headroom: 1.0 - mu0 * g0,
                feasible: report.verdict.is_certified(),
            })
        }
    }
}

/// Compares feasible candidates under the objective; ties prefer larger
/// headroom, then lexicographically smaller parameters.
fn better(objective: Objective, decay_param: usize, a: &LatticePoint, b: &LatticePoint) -> bool {
    let key = |p: &LatticePoint| match objective {
        Objective::MaxDecay => p.params[decay_param],
        Objective::MaxMargin => p.min_residual,
    };
    let (ka, kb) = (key(a), key(b));
    if ka != kb {
        return ka > kb;
    }
    if a.headroom != b.headroom {
        return a.headroom > b.headroom;
    }
    for (x, y) in a.params.iter().zip(&b.params) {
        if x != y {
            return x < y;
        }
    }
    false
}

/// Evaluates the full lattice (closed intervals, `resolution[i]` points
/// per parameter) and selects the best feasible point. An empty feasible
/// set is returned as an empty region, not an error.
pub fn search_feasible(
    problem: &SearchProblem<'_>,
    family: &EnvelopeFamily,
    resolution: &[usize],
    objective: Objective,
) -> Result<FeasibleRegion, SearchError> {
    family.validate()?;
    let ranges = family.ranges();
    if resolution.len() != ranges.len() {
        return Err(SearchError::ResolutionArity {
            expected: ranges.len(),
            got: resolution.len(),
        });
    }
    if resolution.iter().any(|r| *r < 2) {
        return Err(SearchError::BadResolution(resolution.to_vec()));
    }
    if let (
        SearchProblem::Continuous {
            closed_form: Some(shape),
            ..
        },
        EnvelopeFamily::PowerLaw { .. },
    ) = (problem, family)
    {
        if shape.b != 1.0 {
            return Err(SearchError::WrongShape(shape.b));
        }
    }

    let axes: Vec<Vec<f64>> = ranges
        .iter()
        .zip(resolution)
        .map(|((lo, hi), n)| linspace(*lo, *hi, *n))
        .collect();

    let total: usize = axes.iter().map(|a| a.len()).product();
    let mut points = Vec::with_capacity(total);
    let mut idx = vec![0usize; axes.len()];
    let decay_param = family.decay_param();
    let mut best: Option<usize> = None;
    for flat in 0..total {
        let params: Vec<f64> = idx.iter().zip(&axes).map(|(i, a)| a[*i]).collect();
        let point = evaluate_point(problem, family, &params)?;
        if point.feasible {
            let replace = match best {
                None => true,
                Some(i) => better(objective, decay_param, &point, &points[i]),
            };
            if replace {
                best = Some(flat);
            }
        }
        points.push(point);
        // advance the lattice odometer, last axis fastest
        for axis in (0..idx.len()).rev() {
            idx[axis] += 1;
            if idx[axis] < axes[axis].len() {
                break;
            }
            idx[axis] = 0;
        }
    }

    Ok(FeasibleRegion {
        param_names: family.param_names().iter().map(|s| s.to_string()).collect(),
        axes,
        points,
        best,
        objective,
    })
}

/// Bisects the feasibility boundary along one parameter axis, the other
/// coordinates fixed at the best point, to within `tol`. The bracket is
/// the sign change adjacent to the best point (searching first towards
/// larger values, then towards smaller ones).
pub fn refine_boundary(
    problem: &SearchProblem<'_>,
    family: &EnvelopeFamily,
    region: &FeasibleRegion,
    param: &str,
    tol: f64,
) -> Result<f64, SearchError> {
    if !(tol > 0.0) {
        return Err(SearchError::BadTolerance(tol));
    }
    let best = region.best_point().ok_or(SearchError::EmptyRegion)?.clone();
    let axis = region
        .param_names
        .iter()
        .position(|n| n == param)
        .ok_or_else(|| SearchError::UnknownParam(param.to_string()))?;

    let values = &region.axes[axis];
    let strides = region.strides();
    let base_flat: usize = best
        .params
        .iter()
        .enumerate()
        .map(|(i, v)| {
            let j = region.axes[i]
                .iter()
                .position(|a| a == v)
                .expect("best point lies on the lattice");
            j * strides[i]
        })
        .sum();
    let kb = region.axes[axis]
        .iter()
        .position(|a| *a == best.params[axis])
        .expect("best point lies on the lattice");
    let line_feasible = |k: usize| {
        let flat =
            (base_flat as isize + (k as isize - kb as isize) * strides[axis] as isize) as usize;
        region.points[flat].feasible
    };

    // bracket: nearest feasible/infeasible adjacency, looking up first
    let mut bracket: Option<(f64, f64)> = None;
    for k in kb..values.len().saturating_sub(1) {
        if line_feasible(k) && !line_feasible(k + 1) {
            bracket = Some((values[k], values[k + 1]));
            break;
        }
    }
    if bracket.is_none() {
        for k in (1..=kb).rev() {
            if line_feasible(k) && !line_feasible(k - 1) {
                bracket = Some((values[k], values[k - 1]));
                break;
            }
        }
    }
    let (mut feasible_end, mut infeasible_end) =
        bracket.ok_or_else(|| SearchError::NoSignChange(param.to_string()))?;

    let feasible_at = |v: f64| -> Result<bool, SearchError> {
        let mut params = best.params.clone();
        params[axis] = v;
        Ok(evaluate_point(problem, family, &params)?.feasible)
    };

    while (feasible_end - infeasible_end).abs() > tol {
        let mid = 0.5 * (feasible_end + infeasible_end);
        if feasible_at(mid)? {
            feasible_end = mid;
        } else {
            infeasible_end = mid;
        }
    }
    Ok(0.5 * (feasible_end + infeasible_end))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::continuous::VerifyMode;
    use crate::discrete::DEFAULT_N_MAX;

    fn example1_shape() -> PowerLawShape {
        PowerLawShape::new(1.0, 1.0, 1.5, 4.0, 2.0).unwrap()
    }

    fn small_opts() -> VerifyOptions {
        VerifyOptions {
            horizon: 1.0e4,
            grid_points: 192,
            margin: 0.0,
            mode: VerifyMode::Strict,
        }
    }

    #[test]
    fn closed_form_check_on_certified_point() {
        // 1 + 1 >= 1; 1.5 - 0.5 >= 1; 2 + 0.25 = 2.25 <= 3.5
        assert!(powerlaw_closed_form_check(1.0, 1.0, 1.5, 4.0, 2.0, 4.0, 1.0).unwrap());
    }

    #[test]
    fn closed_form_check_fails_on_weak_forcing_decay() {
        // q = 1.2 gives q - 0.5 nu = 0.7 < 1
        assert!(!powerlaw_closed_form_check(1.0, 1.0, 1.2, 4.0, 2.0, 4.0, 1.0).unwrap());
    }

    #[test]
    fn closed_form_check_fails_for_huge_lambda() {
        assert!(!powerlaw_closed_form_check(1.0, 1.0, 1.5, 4.0, 2.0, 1.0e6, 1.0).unwrap());
    }

    #[test]
    fn closed_form_check_rejects_other_shapes() {
        assert!(matches!(
            powerlaw_closed_form_check(2.0, 1.0, 1.5, 4.0, 2.0, 4.0, 1.0),
            Err(SearchError::WrongShape(_))
        ));
    }

    #[test]
    fn search_recovers_the_known_certified_point() {
        let shape = example1_shape();
        let problem = shape.problem();
        let search = SearchProblem::Continuous {
            problem: &problem,
            g0: 0.16,
            opts: small_opts(),
            closed_form: Some(shape),
        };
        let family = EnvelopeFamily::PowerLaw {
            lambda: (1.0, 8.0),
            nu: (0.25, 2.0),
        };
        let region = search_feasible(&search, &family, &[8, 15], Objective::MaxDecay).unwrap();
        assert!(!region.is_empty());
        assert!(region.contains(&[4.0, 1.0]));
        let best = region.best_point().unwrap();
        // decay objective drives nu to the q-constraint boundary nu = 1
        assert!((best.params[1] - 1.0).abs() < 1e-12, "best {:?}", best.params);
    }

    #[test]
    fn unfixable_forcing_gives_empty_region() {
        let problem = ContinuousProblem::new(
            Coefficient::constant(0.0),
            Coefficient::constant(1.0),
            Expression::constant(0.0, &["t", "y"]),
            0.0,
        )
        .unwrap();
        let search = SearchProblem::Continuous {
            problem: &problem,
            g0: 0.1,
            opts: VerifyOptions {
                horizon: 100.0,
                grid_points: 64,
                margin: 0.0,
                mode: VerifyMode::Strict,
            },
            closed_form: None,
        };
        let family = EnvelopeFamily::PowerLaw {
            lambda: (0.5, 4.0),
            nu: (0.25, 2.0),
        };
        let region = search_feasible(&search, &family, &[4, 4], Objective::MaxMargin).unwrap();
        assert!(region.is_empty());
        assert!(region.best_point().is_none());
    }

    #[test]
    fn discrete_constant_family_recovers_mu_four() {
        let problem = DiscreteProblem::new(
            Seq::constant(0.5),
            Seq::constant(0.0),
            Seq::constant(1.0),
            Expression::parse("y^2", &["n", "y"]).unwrap(),
            500,
        )
        .unwrap();
        let search = SearchProblem::Discrete {
            problem: &problem,
            g0: 0.2,
        };
        let family = EnvelopeFamily::ConstantDiscrete { mu: (1.0, 7.0) };
        let region = search_feasible(&search, &family, &[13], Objective::MaxDecay).unwrap();
        assert!(region.contains(&[4.0]));
        let _ = DEFAULT_N_MAX;
    }

    #[test]
    fn family_validation_gates() {
        let family = EnvelopeFamily::PowerLaw {
            lambda: (2.0, 2.0),
            nu: (0.25, 2.0),
        };
        assert!(matches!(
            family.validate(),
            Err(SearchError::BadRange { .. })
        ));
        let nonpositive = EnvelopeFamily::Shifted {
            c: (0.0, 1.0),
            lambda: (1.0, 2.0),
            b: (0.5, 1.5),
        };
        assert!(matches!(
            nonpositive.validate(),
            Err(SearchError::BadRange { .. })
        ));
    }

    #[test]
    fn resolution_gates() {
        let shape = example1_shape();
        let problem = shape.problem();
        let search = SearchProblem::Continuous {
            problem: &problem,
            g0: 0.16,
            opts: small_opts(),
            closed_form: None,
        };
        let family = EnvelopeFamily::PowerLaw {
            lambda: (1.0, 8.0),
            nu: (0.25, 2.0),
        };
        assert!(matches!(
            search_feasible(&search, &family, &[8], Objective::MaxDecay),
            Err(SearchError::ResolutionArity { .. })
        ));
        assert!(matches!(
            search_feasible(&search, &family, &[8, 1], Objective::MaxDecay),
            Err(SearchError::BadResolution(_))
        ));
    }

    #[test]
    fn refine_boundary_finds_closed_form_frontier() {
        let shape = example1_shape();
        let problem = shape.problem();
        let search = SearchProblem::Continuous {
            problem: &problem,
            g0: 0.16,
            opts: small_opts(),
            closed_form: Some(shape),
        };
        let family = EnvelopeFamily::PowerLaw {
            lambda: (1.0, 8.0),
            nu: (0.25, 2.0),
        };
        let region = search_feasible(&search, &family, &[8, 15], Objective::MaxDecay).unwrap();
        let boundary = refine_boundary(&search, &family, &region, "nu", 1e-3).unwrap();
        // the binding constraint is q - 0.5 nu >= 1, active at nu = 1
        assert!(
            (boundary - 1.0).abs() <= 1e-3,
            "boundary {} should be within 1e-3 of 1.0",
            boundary
        );
    }

    #[test]
    fn refine_with_cell_wide_tolerance_returns_midpoint() {
        let shape = example1_shape();
        let problem = shape.problem();
        let search = SearchProblem::Continuous {
            problem: &problem,
            g0: 0.16,
            opts: small_opts(),
            closed_form: Some(shape),
        };
        let family = EnvelopeFamily::PowerLaw {
            lambda: (1.0, 8.0),
            nu: (0.25, 2.0),
        };
        let region = search_feasible(&search, &family, &[8, 15], Objective::MaxDecay).unwrap();
        // nu lattice step is 0.125; a tolerance that wide returns the
        // cell midpoint immediately
        let boundary = refine_boundary(&search, &family, &region, "nu", 0.125).unwrap();
        assert!((boundary - 1.0625).abs() < 1e-12);
    }

    #[test]
    fn refine_errors_without_sign_change() {
        let problem = ContinuousProblem::new(
            Coefficient::constant(5.0),
            Coefficient::constant(0.0),
            Expression::constant(0.0, &["t", "y"]),
            0.0,
        )
        .unwrap();
        let search = SearchProblem::Continuous {
            problem: &problem,
            g0: 0.05,
            opts: VerifyOptions {
                horizon: 10.0,
                grid_points: 32,
                margin: 0.0,
                mode: VerifyMode::Strict,
            },
            closed_form: None,
        };
        // flat envelopes: residual = gamma/mu > 0, every lattice point feasible
        let family = EnvelopeFamily::PowerLaw {
            lambda: (1.0, 2.0),
            nu: (-0.5, 0.0),
        };
        let region = search_feasible(&search, &family, &[3, 3], Objective::MaxMargin).unwrap();
        assert!(!region.is_empty());
        assert!(matches!(
            refine_boundary(&search, &family, &region, "nu", 1e-3),
            Err(SearchError::NoSignChange(_))
        ));
    }

    #[test]
    fn region_csv_layout() {
        let problem = DiscreteProblem::new(
            Seq::constant(0.5),
            Seq::constant(0.0),
            Seq::constant(1.0),
            Expression::parse("y^2", &["n", "y"]).unwrap(),
            50,
        )
        .unwrap();
        let search = SearchProblem::Discrete {
            problem: &problem,
            g0: 0.2,
        };
        let family = EnvelopeFamily::ConstantDiscrete { mu: (1.0, 7.0) };
        let region = search_feasible(&search, &family, &[4], Objective::MaxMargin).unwrap();
        let mut buf = Vec::new();
        region.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("mu,min_residual,headroom,feasible\n"));
        assert_eq!(text.lines().count(), 5);
    }
}
