use std::fmt;

use crate::error::{Error, Result};
use crate::trace::RunTrace;

/// Outcome of [`compare_traces`].
#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonReport {
    pub updates_compared: usize,
    /// Largest absolute loss difference over all updates.
    pub max_loss_diff: f64,
    pub max_grad_norm_diff: f64,
    /// Largest absolute final-parameter difference; zero when either trace lacks parameters.
    pub max_param_diff: f64,
    /// Earliest update index whose loss or gradient norm differs by more than the tolerance.
    pub first_divergence: Option<u64>,
    /// Earliest update whose recorded batch indices or versions differ. Informational.
    pub first_provenance_mismatch: Option<u64>,
    pub tolerance: f64,
    pub pass: bool,
}

impl ComparisonReport {
    pub fn max_diff(&self) -> f64 {
        self.max_loss_diff.max(self.max_grad_norm_diff).max(self.max_param_diff)
    }
}

impl fmt::Display for ComparisonReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "updates compared = {}", self.updates_compared)?;
        writeln!(f, "max loss diff = {:e}", self.max_loss_diff)?;
        writeln!(f, "max grad norm diff = {:e}", self.max_grad_norm_diff)?;
        writeln!(f, "max param diff = {:e}", self.max_param_diff)?;
        match self.first_divergence {
            Some(s) => writeln!(f, "first divergence = update {s}")?,
            None => writeln!(f, "first divergence = none")?,
        }
        write!(f, "result = {}", if self.pass { "pass" } else { "fail" })
    }
}

/// Differences of two traces over the same update range; passes iff every
/// difference is at most `tol`. NaN on one side only counts as infinite.
pub fn compare_traces(a: &RunTrace, b: &RunTrace, tol: f64) -> Result<ComparisonReport> {
    if !(tol >= 0.0) {
        return Err(Error::Domain(format!("tolerance must be non-negative, got {tol}")));
    }
    if a.records.len() != b.records.len() {
        return Err(Error::Comparison(format!(
            "traces cover {} and {} updates",
            a.records.len(),
            b.records.len()
        )));
    }
    let mut max_loss_diff = 0.0f64;
    let mut max_grad_norm_diff = 0.0f64;
    let mut first_divergence = None;
    let mut first_provenance_mismatch = None;
    for (ra, rb) in a.records.iter().zip(&b.records) {
        if ra.s != rb.s {
            return Err(Error::Comparison(format!(
                "update index {} paired with {}",
                ra.s, rb.s
            )));
        }
        let dl = diff(ra.loss, rb.loss);
        let dg = diff(ra.grad_norm, rb.grad_norm);
        max_loss_diff = max_loss_diff.max(dl);
        max_grad_norm_diff = max_grad_norm_diff.max(dg);
        if first_divergence.is_none() && (dl > tol || dg > tol) {
            first_divergence = Some(ra.s);
        }
        if first_provenance_mismatch.is_none() && ra.modules != rb.modules {
            first_provenance_mismatch = Some(ra.s);
        }
    }
    let max_param_diff = if a.final_params.is_empty() || b.final_params.is_empty() {
        0.0
    } else if a.final_params.len() != b.final_params.len() {
        return Err(Error::Comparison(format!(
            "final parameter vectors have lengths {} and {}",
            a.final_params.len(),
            b.final_params.len()
        )));
    } else {
        a.final_params
            .iter()
            .zip(&b.final_params)
            .fold(0.0f64, |m, (&x, &y)| m.max(diff(x, y)))
    };
    let pass = first_divergence.is_none() && max_param_diff <= tol;
    Ok(ComparisonReport {
        updates_compared: a.records.len(),
        max_loss_diff,
        max_grad_norm_diff,
        max_param_diff,
        first_divergence,
        first_provenance_mismatch,
        tolerance: tol,
        pass,
    })
}

fn diff(x: f64, y: f64) -> f64 {
    if x.to_bits() == y.to_bits() || x == y {
        0.0
    } else if x.is_nan() || y.is_nan() {
        f64::INFINITY
    } else {
        (x - y).abs()
    }
}
