//! The four subcommands. Each one reads the sections it needs from the
//! config, runs the matching library operation, writes its artifacts,
//! and maps the outcome to an exit code:
//!
//! * verify:   0 certified, 2 infeasible, 3 inconclusive
//! * simulate: 0 clean, 2 envelope violations, 4 blow-up
//! * search:   0 nonempty region, 2 empty region
//! * reduce:   0 emitted (or the chained verify code), 2 falsified bound
//!
//! Usage and evaluation errors exit 1 via the error path in main.

use std::fmt::Write as _;

use anyhow::{bail, Context, Result};

use envcert::{
    check_envelope, falsify_alpha_bound, fmt_f64, integrate_extremal, integrate_scalar,
    integrate_vector, reduce_to_scalar, refine_boundary, run_recurrence, search_feasible,
    verify_certificate, verify_discrete_certificate, write_sequence_csv, CertificateReport,
    ContinuousProblem, Envelope, SearchProblem, Trajectory, TrajectoryStatus, Verdict,
};

use crate::config::{FileConfig, ProblemKind};
use crate::output::OutputDir;

pub struct Overrides {
    pub out: Option<std::path::PathBuf>,
    pub horizon: Option<f64>,
    pub grid: Option<usize>,
    pub margin: Option<f64>,
    pub seed: u64,
}

fn output_dir(config: &FileConfig, overrides: &Overrides) -> Result<OutputDir> {
    let dir = overrides
        .out
        .clone()
        .unwrap_or_else(|| std::path::PathBuf::from(config.output_dir()));
    OutputDir::create(&dir)
}

fn verdict_exit(verdict: Verdict) -> i32 {
    match verdict {
        Verdict::CertifiedStrict | Verdict::CertifiedNonstrict => 0,
        Verdict::Infeasible => 2,
        Verdict::Inconclusive => 3,
    }
}

pub fn cmd_verify(config: &FileConfig, overrides: &Overrides) -> Result<i32> {
    let out = output_dir(config, overrides)?;
    let problem = config.problem.as_ref().context("[problem] is required")?;
    let envelope_cfg = config.envelope.as_ref().context("[envelope] is required")?;
    let verify = config.verify.as_ref().context("[verify] is required")?;
    let mut opts = verify.options()?;
    if let Some(h) = overrides.horizon {
        opts.horizon = h;
    }
    if let Some(g) = overrides.grid {
        opts.grid_points = g;
    }
    if let Some(m) = overrides.margin {
        opts.margin = m;
    }

    let (report, problem_desc): (CertificateReport, String) = match problem.kind {
        ProblemKind::Continuous => {
            let p = problem.continuous()?;
            let env = envelope_cfg.continuous()?;
            let report = verify_certificate(&p, &env, verify.g0, &opts)?;
            (report, describe_continuous(&p, &env))
        }
        ProblemKind::Vector => {
            let sys = problem.vector()?;
            let p = reduce_to_scalar(&sys)?;
            let env = envelope_cfg.continuous()?;
            let report = verify_certificate(&p, &env, verify.g0, &opts)?;
            let mut desc = describe_continuous(&p, &env);
            desc.push_str("(reduced from a vector system; g = norm(u))\n");
            (report, desc)
        }
        ProblemKind::Discrete => {
            let p = problem.discrete()?;
            let env = envelope_cfg.discrete()?;
            let report = verify_discrete_certificate(&p, &env, verify.g0)?;
            (report, "discrete problem\n".to_string())
        }
        ProblemKind::Scalar => bail!("verify does not apply to a free-form scalar ODE"),
    };

    let mut report = report;
    let mut closed_form_line = None;
    if let Some(cf) = &verify.closed_form {
        let shape = cf.shape()?;
        let lambda = cf.lambda.context("verify.closed_form.lambda is required")?;
        let nu = cf.nu.context("verify.closed_form.nu is required")?;
        let global = shape.closed_form_check(lambda, nu)?;
        if global && report.verdict.is_certified() {
            // the closed form extends the certificate to all t >= t0, so
            // the horizon-limitation note no longer applies
            report.notes.retain(|n| !n.contains("closed-form family check"));
        }
        closed_form_line = Some(format!(
            "closed-form check at (lambda = {}, nu = {}): {}",
            fmt_f64(lambda),
            fmt_f64(nu),
            if global {
                "holds for all t >= t0"
            } else {
                "fails; certificate remains horizon-limited"
            }
        ));
    }
    let mut text = problem_desc;
    text.push_str(&report.to_text());
    if let Some(line) = closed_form_line {
        writeln!(text, "{}", line)?;
    }
    out.write_string("report.txt", &text)?;

    let mut csv = Vec::new();
    report.write_residual_csv(&mut csv)?;
    out.write("residuals.csv", &csv)?;

    Ok(verdict_exit(report.verdict))
}

fn describe_continuous(p: &ContinuousProblem, env: &Envelope) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "gamma: {}", p.gamma);
    let _ = writeln!(s, "beta: {}", p.beta);
    let _ = writeln!(s, "alpha: {}", p.alpha);
    let _ = writeln!(s, "t0: {}", fmt_f64(p.t0));
    let _ = writeln!(s, "envelope: {}", env.description);
    s
}

fn trajectory_exit(
    out: &OutputDir,
    traj: &Trajectory,
    envelope: Option<&Envelope>,
    strict: bool,
    write_csv: bool,
) -> Result<i32> {
    if write_csv {
        let mut csv = Vec::new();
        traj.write_csv(&mut csv)?;
        out.write("trajectory.csv", &csv)?;
    }

    let mut report = String::new();
    writeln!(report, "status: {:?}", traj.status)?;
    writeln!(report, "samples: {}", traj.samples.len())?;
    if let Some(last) = traj.samples.last() {
        writeln!(
            report,
            "final: t = {}, g = {}",
            fmt_f64(last.t),
            fmt_f64(last.g)
        )?;
    }
    for note in &traj.notes {
        writeln!(report, "note: {}", note)?;
    }

    let mut violations = 0usize;
    if let Some(env) = envelope {
        let check = check_envelope(traj, env, strict)?;
        violations = check.violations.len();
        writeln!(
            report,
            "envelope check ({}): {} violations over {} samples",
            if strict { "strict" } else { "nonstrict" },
            violations,
            check.checked
        )?;
        writeln!(
            report,
            "worst slack: {} at t = {}",
            fmt_f64(check.worst_slack),
            fmt_f64(check.worst_t)
        )?;
        for v in check.violations.iter().take(20) {
            writeln!(
                report,
                "violation: t = {}, g = {}, bound = {}",
                fmt_f64(v.t),
                fmt_f64(v.g),
                fmt_f64(v.bound)
            )?;
        }
    }
    out.write_string("simulation.txt", &report)?;

    Ok(match traj.status {
        TrajectoryStatus::BlewUp => 4,
        TrajectoryStatus::DomainError => 1,
        TrajectoryStatus::Completed => {
            if violations > 0 {
                2
            } else {
                0
            }
        }
    })
}

pub fn cmd_simulate(config: &FileConfig, overrides: &Overrides) -> Result<i32> {
    let out = output_dir(config, overrides)?;
    let problem = config.problem.as_ref().context("[problem] is required")?;
    let sim = config.simulate.as_ref().context("[simulate] is required")?;
    let horizon = overrides.horizon.unwrap_or(sim.horizon);

    match problem.kind {
        ProblemKind::Continuous => {
            let p = problem.continuous()?;
            let g0 = sim.g0.context("simulate.g0 is required")?;
            let traj = integrate_extremal(&p, g0, horizon, sim.rel_tol, sim.abs_tol)?;
            let env = config
                .envelope
                .as_ref()
                .map(|e| e.continuous())
                .transpose()?;
            trajectory_exit(&out, &traj, env.as_ref(), sim.strict, true)
        }
        ProblemKind::Scalar => {
            let rhs = problem.scalar_rhs()?;
            let y0 = sim.g0.context("simulate.g0 is required")?;
            let traj = integrate_scalar(
                &rhs,
                y0,
                problem.t0.unwrap_or(0.0),
                horizon,
                sim.rel_tol,
                sim.abs_tol,
            )?;
            let env = config
                .envelope
                .as_ref()
                .map(|e| e.continuous())
                .transpose()?;
            trajectory_exit(&out, &traj, env.as_ref(), sim.strict, true)
        }
        ProblemKind::Vector => {
            let sys = problem.vector()?;
            let traj = integrate_vector(&sys, horizon, sim.rel_tol, sim.abs_tol)?;
            let mut csv = Vec::new();
            traj.write_csv(&mut csv)?;
            out.write("trajectory.csv", &csv)?;
            let env = config
                .envelope
                .as_ref()
                .map(|e| e.continuous())
                .transpose()?;
            trajectory_exit(&out, &traj.norm_trajectory(), env.as_ref(), sim.strict, false)
        }
        ProblemKind::Discrete => {
            let p = problem.discrete()?;
            let g0 = sim.g0.context("simulate.g0 is required")?;
            let steps = sim.steps.unwrap_or(p.effective_n_max());
            match run_recurrence(&p, g0, steps) {
                Ok(values) => {
                    let mut report = String::new();
                    writeln!(report, "status: Completed")?;
                    writeln!(report, "steps: {}", values.len() - 1)?;
                    writeln!(report, "final: g_{} = {}", steps, fmt_f64(values[steps]))?;
                    let mut violations = 0usize;
                    if let Some(env_cfg) = &config.envelope {
                        let env = env_cfg.discrete()?;
                        let mut csv = Vec::new();
                        write_sequence_csv(&mut csv, &p, &env, &values)?;
                        out.write("sequence.csv", &csv)?;
                        for (n, g) in values.iter().enumerate() {
                            if *g > env.bound(n)? {
                                violations += 1;
                            }
                        }
                        writeln!(
                            report,
                            "envelope check: {} violations over {} values",
                            violations,
                            values.len()
                        )?;
                    } else {
                        let mut csv = String::from("n,g_n\n");
                        for (n, g) in values.iter().enumerate() {
                            writeln!(csv, "{},{}", n, fmt_f64(*g))?;
                        }
                        out.write_string("sequence.csv", &csv)?;
                    }
                    out.write_string("simulation.txt", &report)?;
                    Ok(if violations > 0 { 2 } else { 0 })
                }
                Err(envcert::DiscreteError::BlewUp { n, value }) => {
                    out.write_string(
                        "simulation.txt",
                        &format!("status: BlewUp\nat n = {}, value = {}\n", n, fmt_f64(value)),
                    )?;
                    Ok(4)
                }
                Err(e) => Err(e.into()),
            }
        }
    }
}

pub fn cmd_search(config: &FileConfig, overrides: &Overrides) -> Result<i32> {
    let out = output_dir(config, overrides)?;
    let problem = config.problem.as_ref().context("[problem] is required")?;
    let family_cfg = config.family.as_ref().context("[family] is required")?;
    let search_cfg = config.search.as_ref().context("[search] is required")?;
    let family = family_cfg.family()?;
    let objective = search_cfg.objective()?;

    let opts = envcert::VerifyOptions {
        horizon: overrides.horizon.unwrap_or(search_cfg.horizon),
        grid_points: overrides.grid.unwrap_or(search_cfg.grid_points),
        margin: overrides.margin.unwrap_or(search_cfg.margin),
        mode: envcert::VerifyMode::Strict,
    };
    let closed_form = search_cfg
        .closed_form
        .as_ref()
        .map(|cf| cf.shape())
        .transpose()?;

    let continuous_holder;
    let discrete_holder;
    let search_problem = match problem.kind {
        ProblemKind::Continuous => {
            continuous_holder = problem.continuous()?;
            SearchProblem::Continuous {
                problem: &continuous_holder,
                g0: search_cfg.g0,
                opts,
                closed_form,
            }
        }
        ProblemKind::Discrete => {
            discrete_holder = problem.discrete()?;
            SearchProblem::Discrete {
                problem: &discrete_holder,
                g0: search_cfg.g0,
            }
        }
        _ => bail!("search requires a continuous or discrete problem"),
    };

    let region = search_feasible(&search_problem, &family, &search_cfg.resolution, objective)?;

    let mut csv = Vec::new();
    region.write_csv(&mut csv)?;
    out.write("region.csv", &csv)?;

    let mut best_text = String::new();
    writeln!(
        best_text,
        "feasible points: {} of {}",
        region.feasible_count(),
        region.points.len()
    )?;
    match region.best_point() {
        Some(best) => {
            let named: Vec<String> = region
                .param_names
                .iter()
                .zip(&best.params)
                .map(|(n, v)| format!("{} = {}", n, fmt_f64(*v)))
                .collect();
            writeln!(best_text, "best: {}", named.join(", "))?;
            writeln!(
                best_text,
                "min residual: {}, headroom: {}",
                fmt_f64(best.min_residual),
                fmt_f64(best.headroom)
            )?;
        }
        None => writeln!(best_text, "best: none (empty region)")?,
    }
    if let Some(param) = &search_cfg.refine_param {
        if region.best_point().is_some() {
            let boundary = refine_boundary(
                &search_problem,
                &family,
                &region,
                param,
                search_cfg.refine_tol,
            )?;
            writeln!(
                best_text,
                "refined boundary along {}: {}",
                param,
                fmt_f64(boundary)
            )?;
        }
    }
    out.write_string("best.txt", &best_text)?;

    Ok(if region.is_empty() { 2 } else { 0 })
}

pub fn cmd_reduce(config: &FileConfig, overrides: &Overrides) -> Result<i32> {
    let out = output_dir(config, overrides)?;

    if let Some(reduce_cfg) = config.reduce.as_ref().filter(|r| r.builder.is_some()) {
        let builder = reduce_cfg.builder.as_deref().unwrap();
        if builder != "example2" {
            bail!("unknown reduce.builder `{}` (use example2)", builder);
        }
        let need = |name: &str, value: Option<f64>| {
            value.with_context(|| format!("reduce.{} is required by the example2 builder", name))
        };
        let (problem, envelope) = envcert::build_example2(
            need("c", reduce_cfg.c)?,
            need("lambda", reduce_cfg.lambda)?,
            need("b", reduce_cfg.b)?,
            need("theta", reduce_cfg.theta)?,
            need("p", reduce_cfg.p)?,
        )?;
        let mut text = describe_continuous(&problem, &envelope);
        text.push_str("(built by the example2 shifted-envelope builder)\n");
        write_beta_samples(&out, &problem)?;

        if let Some(verify) = &config.verify {
            let mut opts = verify.options()?;
            if let Some(h) = overrides.horizon {
                opts.horizon = h;
            }
            if let Some(g) = overrides.grid {
                opts.grid_points = g;
            }
            let report = verify_certificate(&problem, &envelope, verify.g0, &opts)?;
            text.push_str(&report.to_text());
            out.write_string("reduced.txt", &text)?;
            let mut csv = Vec::new();
            report.write_residual_csv(&mut csv)?;
            out.write("residuals.csv", &csv)?;
            return Ok(verdict_exit(report.verdict));
        }
        out.write_string("reduced.txt", &text)?;
        return Ok(0);
    }

    let problem = config.problem.as_ref().context("[problem] is required")?;
    if problem.kind != ProblemKind::Vector {
        bail!("reduce requires a vector problem or the example2 builder");
    }
    let sys = problem.vector()?;
    let reduced = reduce_to_scalar(&sys)?;

    let mut text = String::new();
    writeln!(text, "dim: {}", sys.dim)?;
    writeln!(text, "gamma: {}", reduced.gamma)?;
    writeln!(text, "gamma(0): {}", fmt_f64(reduced.gamma_at(0.0)?))?;
    writeln!(text, "beta: {}", reduced.beta)?;
    writeln!(text, "alpha (hypothesis, echoed): {}", reduced.alpha)?;
    write_beta_samples(&out, &reduced)?;

    // sampling-based falsifier for the alpha hypothesis: can reject it,
    // never prove it
    let falsifier_dirs = config
        .reduce
        .as_ref()
        .map(|r| r.falsifier_dirs)
        .unwrap_or(16);
    let radii: Vec<f64> = (1..=5).map(|k| k as f64 * 0.5).collect();
    let counter = falsify_alpha_bound(&sys, 100.0, 16, &radii, falsifier_dirs, overrides.seed)?;
    let falsified = counter.is_some();
    match counter {
        Some(cx) => {
            writeln!(
                text,
                "alpha bound falsified at t = {}: norm(h) = {} > alpha = {}",
                fmt_f64(cx.t),
                fmt_f64(cx.h_norm),
                fmt_f64(cx.alpha_value)
            )?;
        }
        None => writeln!(
            text,
            "alpha bound survived sampling (seed {}, {} directions per radius)",
            overrides.seed, falsifier_dirs
        )?,
    }

    if !falsified {
        if let (Some(env_cfg), Some(verify)) = (&config.envelope, &config.verify) {
            let envelope = env_cfg.continuous()?;
            let mut opts = verify.options()?;
            if let Some(h) = overrides.horizon {
                opts.horizon = h;
            }
            let report = verify_certificate(&reduced, &envelope, verify.g0, &opts)?;
            text.push_str(&report.to_text());
            out.write_string("reduced.txt", &text)?;
            let mut csv = Vec::new();
            report.write_residual_csv(&mut csv)?;
            out.write("residuals.csv", &csv)?;
            return Ok(verdict_exit(report.verdict));
        }
    }
    out.write_string("reduced.txt", &text)?;
    Ok(if falsified { 2 } else { 0 })
}

/// Sample table of the derived forcing coefficient.
fn write_beta_samples(out: &OutputDir, problem: &ContinuousProblem) -> Result<()> {
    let mut csv = String::from("t,beta\n");
    for &t in &envcert::log_grid(problem.t0, problem.t0 + 1.0e4, 64) {
        writeln!(csv, "{},{}", fmt_f64(t), fmt_f64(problem.beta_at(t)?))?;
    }
    out.write_string("beta_samples.csv", &csv)
}
