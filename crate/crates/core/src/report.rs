//! Report types shared by the inequality fits and the assumption audit.

use serde::Serialize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    Pass,
    Fail,
    Inconclusive,
}

/// One test function's contribution to a fit.
#[derive(Debug, Clone, Serialize)]
pub struct RatioRow {
    pub function: String,
    /// Left-hand side of the inequality for this function.
    pub lhs: f64,
    /// Right-hand side at the fitted constants.
    pub rhs: f64,
    /// The ratio entering the fit (meaning depends on the inequality).
    pub ratio: f64,
    pub stderr: f64,
}

/// Fitted constants for one inequality with the per-function evidence.
#[derive(Debug, Clone, Serialize)]
pub struct FitReport {
    pub inequality: String,
    pub constants: Vec<(String, f64)>,
    pub rows: Vec<RatioRow>,
    pub verdict: Verdict,
    /// Human-readable pass criterion.
    pub criterion: String,
    pub notes: Vec<String>,
}

impl FitReport {
    pub fn constant(&self, name: &str) -> Option<f64> {
        self.constants
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, v)| *v)
    }

    /// Final verdict: `pass` unless any materially nonzero ratio carries a
    /// standard error above a quarter of its value, which downgrades the
    /// report to inconclusive.
    pub fn verdict_from(pass: bool, rows: &[RatioRow]) -> Verdict {
        let noisy = rows
            .iter()
            .any(|r| r.ratio.abs() > 1e-12 && r.stderr > 0.25 * r.ratio.abs());
        if noisy {
            Verdict::Inconclusive
        } else if pass {
            Verdict::Pass
        } else {
            Verdict::Fail
        }
    }
}
