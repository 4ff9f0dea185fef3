use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::exec::{Exec, McOutcome};
use crate::manifold::Manifold;
use crate::partition::Partition;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    /// Heat-kernel skeletons on `M^T`.
    Cylinder,
    /// Developed Gaussian piecewise-linear paths.
    Geometric,
}

impl Scheme {
    pub fn as_str(&self) -> &'static str {
        match self {
            Scheme::Cylinder => "cylinder",
            Scheme::Geometric => "geometric",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    #[serde(rename = "mc")]
    MonteCarlo,
    Quadrature,
}

/// A Monte Carlo or quadrature estimate with the metadata needed to rerun it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimateReport {
    pub label: String,
    pub estimate: f64,
    pub stderr: f64,
    /// Half-width of the 95% interval, `1.96 · stderr`.
    pub ci95: f64,
    /// Accepted samples (grid points for quadrature).
    pub samples: usize,
    pub rejected: usize,
    /// `rejected fraction × max |F|`: bias bound from dropped samples.
    pub bias_bound: f64,
    /// Grid-refinement difference for quadrature results.
    pub error_bound: Option<f64>,
    pub n: usize,
    pub mesh: f64,
    /// `uniform(n)` or the explicit times.
    pub partition: String,
    pub manifold: String,
    pub scheme: Scheme,
    pub method: Method,
    pub seed: Option<u64>,
    pub workers: usize,
    pub wall_time_s: f64,
}

pub const CSV_HEADER: &str =
    "label,scheme,method,manifold,n,mesh,partition,estimate,stderr,ci95,samples,rejected,bias_bound,seed,workers";

impl EstimateReport {
    #[allow(clippy::too_many_arguments)]
    pub(crate) fn from_outcome(
        label: &str,
        outcome: &McOutcome,
        partition: &Partition,
        manifold: &Manifold,
        scheme: Scheme,
        seed: u64,
        exec: &Exec,
        wall_time_s: f64,
    ) -> Result<Self> {
        let stats = outcome.stats()?;
        Ok(EstimateReport {
            label: label.to_string(),
            estimate: stats.mean,
            stderr: stats.stderr,
            ci95: 1.96 * stats.stderr,
            samples: stats.count,
            rejected: outcome.rejected,
            bias_bound: outcome.rejection_fraction() * stats.max_abs,
            error_bound: None,
            n: partition.segments(),
            mesh: partition.mesh(),
            partition: partition.descriptor(),
            manifold: manifold.name(),
            scheme,
            method: Method::MonteCarlo,
            seed: Some(seed),
            workers: exec.workers.min(outcome.values.len() + outcome.rejected).max(1),
            wall_time_s,
        })
    }

    /// Copy with the wall-clock field zeroed, for reproducibility comparisons.
    pub fn without_timing(&self) -> Self {
        EstimateReport { wall_time_s: 0.0, ..self.clone() }
    }

    /// Replace the estimate by a smooth function of it, propagating the
    /// standard error to first order.
    pub fn map_estimate(&self, label: &str, f: impl Fn(f64) -> f64, derivative: f64) -> Self {
        let stderr = self.stderr * derivative.abs();
        EstimateReport {
            label: label.to_string(),
            estimate: f(self.estimate),
            stderr,
            ci95: 1.96 * stderr,
            ..self.clone()
        }
    }

    pub fn csv_row(&self) -> String {
        let mut s = String::new();
        let seed = self.seed.map(|s| s.to_string()).unwrap_or_default();
        let _ = write!(
            s,
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            csv_field(&self.label),
            self.scheme.as_str(),
            match self.method {
                Method::MonteCarlo => "mc",
                Method::Quadrature => "quadrature",
            },
            csv_field(&self.manifold),
            self.n,
            self.mesh,
            self.partition,
            self.estimate,
            self.stderr,
            self.ci95,
            self.samples,
            self.rejected,
            self.bias_bound,
            seed,
            self.workers
        );
        s
    }
}

/// Quote a CSV field when it contains a separator or quote.
pub fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// `sqrt(a² + b²)` for two independent standard errors.
pub fn joint_stderr(a: f64, b: f64) -> f64 {
    a.hypot(b)
}
