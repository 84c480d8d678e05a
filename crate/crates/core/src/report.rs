//! Certificate verdicts and their serialized report forms.

use std::io::{self, Write};

use crate::fmt_f64;

/// Outcome of a certificate verification run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    /// Strict bound `g(t) < 1/mu(t)` certified on the checked range.
    CertifiedStrict,
    /// Nonstrict bound `g(t) <= 1/mu(t)` certified on the checked range.
    CertifiedNonstrict,
    /// A checked condition failed with a recorded negative residual.
    Infeasible,
    /// Nothing failed outright, but the certificate could not be granted.
    Inconclusive,
}

impl Verdict {
    pub fn is_certified(self) -> bool {
        matches!(self, Verdict::CertifiedStrict | Verdict::CertifiedNonstrict)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Verdict::CertifiedStrict => "CertifiedStrict",
            Verdict::CertifiedNonstrict => "CertifiedNonstrict",
            Verdict::Infeasible => "Infeasible",
            Verdict::Inconclusive => "Inconclusive",
        }
    }
}

/// Result of a verification run over a residual grid.
///
/// `samples` holds the evaluated `(t, residual)` pairs in grid order (for
/// discrete problems `t` is the index `n`). When the initial-condition
/// gate fails, `min_residual` holds the negative initial headroom
/// `1 - mu(t0) * g0` (discrete: `1/mu_0 - g0`) with `argmin_t = t0`, so an
/// `Infeasible` verdict always records a negative quantity at a point.
#[derive(Debug, Clone)]
pub struct CertificateReport {
    pub verdict: Verdict,
    pub min_residual: f64,
    pub argmin_t: f64,
    pub grid: String,
    pub margin: f64,
    pub notes: Vec<String>,
    pub samples: Vec<(f64, f64)>,
}

impl CertificateReport {
    /// Structured plain-text form, deterministic for identical inputs.
    pub fn write_text<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "verdict: {}", self.verdict.as_str())?;
        writeln!(w, "grid: {}", self.grid)?;
        writeln!(w, "margin: {}", fmt_f64(self.margin))?;
        writeln!(
            w,
            "min residual: {} at t = {}",
            fmt_f64(self.min_residual),
            fmt_f64(self.argmin_t)
        )?;
        if self.notes.is_empty() {
            writeln!(w, "notes: none")?;
        } else {
            writeln!(w, "notes:")?;
            for note in &self.notes {
                writeln!(w, "  - {}", note)?;
            }
        }
        Ok(())
    }

    /// CSV of `(t, residual)` pairs at full round-trip precision.
    pub fn write_residual_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "t,residual")?;
        for (t, r) in &self.samples {
            writeln!(w, "{},{}", fmt_f64(*t), fmt_f64(*r))?;
        }
        Ok(())
    }

    pub fn to_text(&self) -> String {
        let mut buf = Vec::new();
        self.write_text(&mut buf).expect("write to Vec cannot fail");
        String::from_utf8(buf).expect("report text is valid UTF-8")
    }
}
