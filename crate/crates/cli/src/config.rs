//! Run configuration: a flat TOML file with one section per concern.
//! Expressions are quoted strings in the DSL grammar; the full schema is
//! documented in docs/config.md.

use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::Deserialize;

use envcert::{
    Coefficient, ContinuousProblem, DiscreteEnvelope, DiscreteProblem, Envelope, EnvelopeFamily,
    PowerLawShape, Expression, MatrixSpec, Objective, Seq, VectorSystem, VerifyMode,
    VerifyOptions,
};

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub problem: Option<ProblemConfig>,
    pub envelope: Option<EnvelopeConfig>,
    pub family: Option<FamilyConfig>,
    pub verify: Option<VerifyConfig>,
    pub simulate: Option<SimulateConfig>,
    pub search: Option<SearchConfig>,
    pub reduce: Option<ReduceConfig>,
    pub output: Option<OutputConfig>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProblemKind {
    Continuous,
    Scalar,
    Discrete,
    Vector,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemConfig {
    pub kind: ProblemKind,
    // continuous
    pub t0: Option<f64>,
    pub gamma: Option<String>,
    pub beta: Option<String>,
    pub alpha: Option<String>,
    // scalar free-form right-hand side
    pub rhs: Option<String>,
    // discrete (closed forms in n, or explicit tables)
    pub gamma_seq: Option<String>,
    pub gamma_table: Option<Vec<f64>>,
    pub beta_seq: Option<String>,
    pub beta_table: Option<Vec<f64>>,
    pub h_seq: Option<String>,
    pub h_table: Option<Vec<f64>>,
    pub n_max: Option<usize>,
    // vector
    pub a: Option<Vec<Vec<f64>>>,
    pub a_exprs: Option<Vec<Vec<String>>>,
    pub h: Option<Vec<String>>,
    pub f: Option<Vec<String>>,
    pub alpha_bound: Option<String>,
    pub u0: Option<Vec<f64>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvelopeConfig {
    pub mu: Option<String>,
    pub mu_dot: Option<String>,
    pub mu_seq: Option<String>,
    pub mu_table: Option<Vec<f64>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FamilyConfig {
    pub kind: String,
    pub lambda: Option<[f64; 2]>,
    pub nu: Option<[f64; 2]>,
    pub c: Option<[f64; 2]>,
    pub b: Option<[f64; 2]>,
    pub mu: Option<[f64; 2]>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClosedFormConfig {
    pub b: f64,
    pub m: f64,
    pub q: f64,
    pub c: f64,
    pub p: f64,
    /// Envelope parameters to check, for the verify command.
    pub lambda: Option<f64>,
    pub nu: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifyConfig {
    pub g0: f64,
    #[serde(default = "default_horizon")]
    pub horizon: f64,
    #[serde(default = "default_grid_points")]
    pub grid_points: usize,
    #[serde(default)]
    pub margin: f64,
    #[serde(default = "default_mode")]
    pub mode: String,
    #[serde(default)]
    pub alpha_lipschitz: bool,
    pub closed_form: Option<ClosedFormConfig>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateConfig {
    pub g0: Option<f64>,
    #[serde(default = "default_sim_horizon")]
    pub horizon: f64,
    #[serde(default = "default_rel_tol")]
    pub rel_tol: f64,
    #[serde(default = "default_abs_tol")]
    pub abs_tol: f64,
    pub steps: Option<usize>,
    #[serde(default = "default_true")]
    pub strict: bool,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SearchConfig {
    pub g0: f64,
    #[serde(default = "default_horizon")]
    pub horizon: f64,
    #[serde(default = "default_search_grid")]
    pub grid_points: usize,
    #[serde(default)]
    pub margin: f64,
    pub resolution: Vec<usize>,
    #[serde(default = "default_objective")]
    pub objective: String,
    pub refine_param: Option<String>,
    #[serde(default = "default_refine_tol")]
    pub refine_tol: f64,
    pub closed_form: Option<ClosedFormConfig>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReduceConfig {
    pub builder: Option<String>,
    pub c: Option<f64>,
    pub lambda: Option<f64>,
    pub b: Option<f64>,
    pub theta: Option<f64>,
    pub p: Option<f64>,
    #[serde(default = "default_falsifier_dirs")]
    pub falsifier_dirs: usize,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: String,
}

fn default_horizon() -> f64 {
    1.0e4
}
fn default_sim_horizon() -> f64 {
    1.0e3
}
fn default_grid_points() -> usize {
    2048
}
fn default_search_grid() -> usize {
    256
}
fn default_rel_tol() -> f64 {
    1e-8
}
fn default_abs_tol() -> f64 {
    1e-10
}
fn default_mode() -> String {
    "strict".to_string()
}
fn default_objective() -> String {
    "max_decay".to_string()
}
fn default_refine_tol() -> f64 {
    1e-3
}
fn default_falsifier_dirs() -> usize {
    16
}
fn default_true() -> bool {
    true
}

pub fn load(path: &Path) -> Result<FileConfig> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading config {}", path.display()))?;
    let config: FileConfig = toml::from_str(&text)
        .with_context(|| format!("parsing config {}", path.display()))?;
    Ok(config)
}

impl FileConfig {
    pub fn output_dir(&self) -> &str {
        self.output.as_ref().map(|o| o.dir.as_str()).unwrap_or("out")
    }
}

impl ProblemConfig {
    pub fn continuous(&self) -> Result<ContinuousProblem> {
        let gamma = self
            .gamma
            .as_deref()
            .context("problem.gamma is required for a continuous problem")?;
        let beta = self
            .beta
            .as_deref()
            .context("problem.beta is required for a continuous problem")?;
        let alpha = self
            .alpha
            .as_deref()
            .context("problem.alpha is required for a continuous problem")?;
        let gamma = Coefficient::parse(gamma).context("parsing problem.gamma")?;
        let beta = Coefficient::parse(beta).context("parsing problem.beta")?;
        let alpha =
            Expression::parse(alpha, &["t", "y"]).context("parsing problem.alpha")?;
        ContinuousProblem::new(gamma, beta, alpha, self.t0.unwrap_or(0.0))
            .context("building continuous problem")
    }

    pub fn scalar_rhs(&self) -> Result<Expression> {
        let rhs = self
            .rhs
            .as_deref()
            .context("problem.rhs is required for a scalar problem")?;
        Expression::parse(rhs, &["t", "y"]).context("parsing problem.rhs")
    }

    pub fn discrete(&self) -> Result<DiscreteProblem> {
        let seq = |name: &str, expr: &Option<String>, table: &Option<Vec<f64>>| -> Result<Seq> {
            match (expr, table) {
                (Some(text), None) => {
                    Seq::parse(text).with_context(|| format!("parsing problem.{}_seq", name))
                }
                (None, Some(values)) => Ok(Seq::Table(values.clone())),
                (Some(_), Some(_)) => {
                    bail!("problem.{name}_seq and problem.{name}_table are mutually exclusive")
                }
                (None, None) => bail!("problem.{name}_seq or problem.{name}_table is required"),
            }
        };
        let gamma = seq("gamma", &self.gamma_seq, &self.gamma_table)?;
        let beta = seq("beta", &self.beta_seq, &self.beta_table)?;
        let h = seq("h", &self.h_seq, &self.h_table)?;
        let alpha = self
            .alpha
            .as_deref()
            .context("problem.alpha is required for a discrete problem")?;
        let alpha = Expression::parse(alpha, &["n", "y"]).context("parsing problem.alpha")?;
        DiscreteProblem::new(
            gamma,
            beta,
            h,
            alpha,
            self.n_max.unwrap_or(envcert::discrete::DEFAULT_N_MAX),
        )
        .context("building discrete problem")
    }

    pub fn vector(&self) -> Result<VectorSystem> {
        let a = match (&self.a, &self.a_exprs) {
            (Some(values), None) => MatrixSpec::Constant(values.clone()),
            (None, Some(texts)) => {
                let rows: Result<Vec<Vec<Expression>>> = texts
                    .iter()
                    .map(|row| {
                        row.iter()
                            .map(|text| {
                                Expression::parse(text, &["t"]).context("parsing problem.a_exprs")
                            })
                            .collect()
                    })
                    .collect();
                MatrixSpec::TimeVarying(rows?)
            }
            (Some(_), Some(_)) => bail!("problem.a and problem.a_exprs are mutually exclusive"),
            (None, None) => bail!("problem.a or problem.a_exprs is required"),
        };
        let dim = match &a {
            MatrixSpec::Constant(m) => m.len(),
            MatrixSpec::TimeVarying(m) => m.len(),
        };
        let vars = envcert::hilbert::state_vars(dim);
        let refs: Vec<&str> = vars.iter().map(|s| s.as_str()).collect();
        let h_texts = self.h.as_ref().context("problem.h is required")?;
        let h_field: Result<Vec<Expression>> = h_texts
            .iter()
            .map(|text| Expression::parse(text, &refs).context("parsing problem.h"))
            .collect();
        let f_texts = self.f.as_ref().context("problem.f is required")?;
        let f_field: Result<Vec<Expression>> = f_texts
            .iter()
            .map(|text| Expression::parse(text, &["t"]).context("parsing problem.f"))
            .collect();
        let alpha_bound = self
            .alpha_bound
            .as_deref()
            .context("problem.alpha_bound is required")?;
        let alpha_bound =
            Expression::parse(alpha_bound, &["t", "y"]).context("parsing problem.alpha_bound")?;
        let u0 = self.u0.clone().context("problem.u0 is required")?;
        VectorSystem::new(a, h_field?, f_field?, alpha_bound, u0)
            .context("building vector system")
    }
}

impl EnvelopeConfig {
    pub fn continuous(&self) -> Result<Envelope> {
        let mu = self
            .mu
            .as_deref()
            .context("envelope.mu is required for a continuous envelope")?;
        let mu = Expression::parse(mu, &["t"]).context("parsing envelope.mu")?;
        match &self.mu_dot {
            Some(text) => {
                let mu_dot =
                    Expression::parse(text, &["t"]).context("parsing envelope.mu_dot")?;
                Ok(Envelope::with_derivative(mu, mu_dot))
            }
            None => Envelope::new(mu).context("differentiating envelope.mu"),
        }
    }

    pub fn discrete(&self) -> Result<DiscreteEnvelope> {
        match (&self.mu_seq, &self.mu_table) {
            (Some(text), None) => Ok(DiscreteEnvelope::new(
                Seq::parse(text).context("parsing envelope.mu_seq")?,
            )),
            (None, Some(values)) => Ok(DiscreteEnvelope::new(Seq::Table(values.clone()))),
            (Some(_), Some(_)) => bail!("envelope.mu_seq and envelope.mu_table are exclusive"),
            (None, None) => bail!("envelope.mu_seq or envelope.mu_table is required"),
        }
    }
}

impl FamilyConfig {
    pub fn family(&self) -> Result<EnvelopeFamily> {
        let pair = |name: &str, value: &Option<[f64; 2]>| -> Result<(f64, f64)> {
            let [lo, hi] = value.with_context(|| format!("family.{} range is required", name))?;
            Ok((lo, hi))
        };
        let family = match self.kind.as_str() {
            "power_law" => EnvelopeFamily::PowerLaw {
                lambda: pair("lambda", &self.lambda)?,
                nu: pair("nu", &self.nu)?,
            },
            "shifted" => EnvelopeFamily::Shifted {
                c: pair("c", &self.c)?,
                lambda: pair("lambda", &self.lambda)?,
                b: pair("b", &self.b)?,
            },
            "constant_discrete" => EnvelopeFamily::ConstantDiscrete {
                mu: pair("mu", &self.mu)?,
            },
            "power_discrete" => EnvelopeFamily::PowerDiscrete {
                lambda: pair("lambda", &self.lambda)?,
                nu: pair("nu", &self.nu)?,
            },
            other => bail!("unknown family.kind `{}`", other),
        };
        family.validate().context("validating family ranges")?;
        Ok(family)
    }
}

impl ClosedFormConfig {
    pub fn shape(&self) -> Result<PowerLawShape> {
        PowerLawShape::new(self.b, self.m, self.q, self.c, self.p)
            .context("building closed-form shape")
    }
}

impl VerifyConfig {
    pub fn options(&self) -> Result<VerifyOptions> {
        let mode = match self.mode.as_str() {
            "strict" => VerifyMode::Strict,
            "nonstrict" => VerifyMode::Nonstrict {
                alpha_locally_lipschitz: self.alpha_lipschitz,
            },
            other => bail!("unknown verify.mode `{}` (use strict | nonstrict)", other),
        };
        Ok(VerifyOptions {
            horizon: self.horizon,
            grid_points: self.grid_points,
            margin: self.margin,
            mode,
        })
    }
}

impl SearchConfig {
    pub fn objective(&self) -> Result<Objective> {
        match self.objective.as_str() {
            "max_decay" => Ok(Objective::MaxDecay),
            "max_margin" => Ok(Objective::MaxMargin),
            other => bail!(
                "unknown search.objective `{}` (use max_decay | max_margin)",
                other
            ),
        }
    }
}
