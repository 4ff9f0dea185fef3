//! Midpoint and left-point Riemann sums of ambient fields over embedded skeletons.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::cylinder::{expectation_mc_stream, CylinderFunctional, McBudget, PathSkeleton};
use crate::error::{Error, Result};
use crate::exec::StreamId;
use crate::limit::{FunctionalFamily, Provenance, RefinementChain, WienerSpace};
use crate::manifold::{Coords, Manifold, Point};
use crate::partition::Partition;
use crate::report::EstimateReport;

pub const STRATONOVICH_STREAM: u16 = 5;
pub const RESIDUAL_STREAM: u16 = 6;

/// Scalar function on the manifold, through its embedding.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ScalarFn {
    Constant { value: f64 },
    /// Embedded ambient coordinate `j`.
    Coordinate { index: usize },
}

impl ScalarFn {
    pub fn validate(&self, manifold: &Manifold) -> Result<()> {
        match self {
            ScalarFn::Coordinate { index } if *index >= manifold.embedding_dimension() => Err(Error::InvalidArgument(
                format!("coordinate index {index} out of range for {}", manifold.name()),
            )),
            _ => Ok(()),
        }
    }

    pub fn eval(&self, manifold: &Manifold, x: &Point) -> f64 {
        match self {
            ScalarFn::Constant { value } => *value,
            ScalarFn::Coordinate { index } => manifold.embed(x)[*index],
        }
    }
}

/// Smooth map `M → ℝᴺ` into the embedding space.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum AmbientField {
    Zero,
    Constant { vector: Vec<f64> },
    /// `(−y, x, 0, …)/r²` in the first two embedded coordinates.
    Rotation,
    /// Tangential gradient of a scalar function.
    Gradient { scalar: ScalarFn },
}

impl AmbientField {
    pub fn label(&self) -> String {
        match self {
            AmbientField::Zero => "zero".into(),
            AmbientField::Constant { .. } => "constant".into(),
            AmbientField::Rotation => "rotation".into(),
            AmbientField::Gradient { scalar: ScalarFn::Constant { .. } } => "gradient(constant)".into(),
            AmbientField::Gradient { scalar: ScalarFn::Coordinate { index } } => format!("gradient(x{index})"),
        }
    }

    pub fn validate(&self, manifold: &Manifold) -> Result<()> {
        let n = manifold.embedding_dimension();
        match self {
            AmbientField::Constant { vector } if vector.len() != n => {
                Err(Error::DimensionMismatch { expected: n, got: vector.len() })
            }
            AmbientField::Rotation if n < 2 => Err(Error::Unsupported(format!("rotation field on {}", manifold.name()))),
            AmbientField::Gradient { scalar } => scalar.validate(manifold),
            _ => Ok(()),
        }
    }

    pub fn eval(&self, manifold: &Manifold, x: &Point) -> Coords {
        let n = manifold.embedding_dimension();
        match self {
            AmbientField::Zero => Coords::from_elem(0.0, n),
            AmbientField::Constant { vector } => Coords::from_slice(vector),
            AmbientField::Rotation => {
                let p = manifold.embed(x);
                let r2 = manifold.scale().powi(2);
                let mut out = Coords::from_elem(0.0, n);
                out[0] = -p[1] / r2;
                out[1] = p[0] / r2;
                out
            }
            AmbientField::Gradient { scalar } => match scalar {
                ScalarFn::Constant { .. } => Coords::from_elem(0.0, n),
                ScalarFn::Coordinate { index } => {
                    let mut e = Coords::from_elem(0.0, n);
                    e[*index] = 1.0;
                    let v = manifold.ambient_to_tangent(x, &e);
                    manifold.tangent_to_ambient(x, &v)
                }
            },
        }
    }
}

/// Embedded points `x₀, x₁, …, x_n` and field values at them.
fn embedded(manifold: &Manifold, field: &AmbientField, s: &PathSkeleton) -> (Vec<Coords>, Vec<Coords>) {
    let n = s.points().len();
    let mut xs = Vec::with_capacity(n + 1);
    let mut fs = Vec::with_capacity(n + 1);
    for i in 0..=n {
        let p = s.at(i);
        xs.push(manifold.embed(p));
        fs.push(field.eval(manifold, p));
    }
    (xs, fs)
}

fn riemann_sum(xs: &[Coords], fs: &[Coords], weight: impl Fn(f64, f64) -> f64) -> f64 {
    let mut total = 0.0;
    for i in 1..xs.len() {
        let mut term = 0.0;
        for j in 0..xs[i].len() {
            term += weight(fs[i - 1][j], fs[i][j]) * (xs[i][j] - xs[i - 1][j]);
        }
        total += term;
    }
    total
}

/// `Σ_i Σ_j ½(f_j(x_i) + f_j(x_{i−1}))(x_i^j − x_{i−1}^j)`.
pub fn midpoint_sum(manifold: &Manifold, field: &AmbientField, s: &PathSkeleton) -> f64 {
    let (xs, fs) = embedded(manifold, field, s);
    riemann_sum(&xs, &fs, |a, b| 0.5 * (a + b))
}

/// `Σ_i Σ_j f_j(x_{i−1})(x_i^j − x_{i−1}^j)`.
pub fn ito_sum(manifold: &Manifold, field: &AmbientField, s: &PathSkeleton) -> f64 {
    let (xs, fs) = embedded(manifold, field, s);
    riemann_sum(&xs, &fs, |a, _| a)
}

/// `Σ_i Σ_j (f_j(x_i) − f_j(x_{i−1}))(x_i^j − x_{i−1}^j)`.
pub fn covariation_sum(manifold: &Manifold, field: &AmbientField, s: &PathSkeleton) -> f64 {
    let (xs, fs) = embedded(manifold, field, s);
    riemann_sum(&xs, &fs, |a, b| b - a)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SumKind {
    Midpoint,
    Ito,
    Covariation,
}

/// The chosen Riemann sum as a cylinder functional.
pub fn sum_functional(
    manifold: &Manifold,
    field: &AmbientField,
    partition: Arc<Partition>,
    kind: SumKind,
) -> Result<CylinderFunctional> {
    field.validate(manifold)?;
    let (m, f) = (manifold.clone(), field.clone());
    let label = format!("{}_{}", match kind {
        SumKind::Midpoint => "midpoint",
        SumKind::Ito => "ito",
        SumKind::Covariation => "covariation",
    }, field.label());
    Ok(CylinderFunctional::new(partition, label, move |s: &PathSkeleton| {
        Ok(match kind {
            SumKind::Midpoint => midpoint_sum(&m, &f, s),
            SumKind::Ito => ito_sum(&m, &f, s),
            SumKind::Covariation => covariation_sum(&m, &f, s),
        })
    }))
}

/// Midpoint sums along a chain, for the limit-scheme diagnostics.
pub fn stratonovich_family(manifold: &Manifold, field: &AmbientField, chain: &RefinementChain) -> Result<FunctionalFamily> {
    let members = chain
        .levels()
        .iter()
        .map(|p| sum_functional(manifold, field, p.clone(), SumKind::Midpoint))
        .collect::<Result<_>>()?;
    FunctionalFamily::new(chain.clone(), members, Provenance::Stratonovich)
}

fn stream_for(tag: u16, partition: &Partition) -> StreamId {
    StreamId::new(tag, partition.segments().min(u16::MAX as usize) as u16)
}

/// `E|midpoint sum|²` at one partition.
pub fn stratonovich_l2(
    space: &WienerSpace,
    field: &AmbientField,
    partition: Arc<Partition>,
    budget: &McBudget,
) -> Result<EstimateReport> {
    let stream = stream_for(STRATONOVICH_STREAM, &partition);
    let f = sum_functional(space.manifold(), field, partition.clone(), SumKind::Midpoint)?.abs_pow(2.0);
    let f = f.relabel(format!("l2_midpoint_{}", field.label()));
    expectation_mc_stream(&space.measure(partition)?, &f, budget, stream)
}

/// Mean-square and root-mean-square of `midpoint(∇g) − (g(x_{t_n}) − g(x₀))`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResidualReport {
    pub mean_square: EstimateReport,
    /// `sqrt(mean_square)` with delta-method standard error.
    pub rms: EstimateReport,
}

pub fn exact_form_residual(
    space: &WienerSpace,
    g: &ScalarFn,
    partition: Arc<Partition>,
    budget: &McBudget,
) -> Result<ResidualReport> {
    g.validate(space.manifold())?;
    let m = space.manifold().clone();
    let field = AmbientField::Gradient { scalar: g.clone() };
    let g = g.clone();
    let f = CylinderFunctional::new(partition.clone(), format!("residual_{}", field.label()), move |s: &PathSkeleton| {
        let r = midpoint_sum(&m, &field, s) - (g.eval(&m, s.endpoint()) - g.eval(&m, s.base()));
        Ok(r * r)
    });
    let stream = stream_for(RESIDUAL_STREAM, &partition);
    let mean_square = expectation_mc_stream(&space.measure(partition)?, &f, budget, stream)?;
    let ms = mean_square.estimate.max(0.0);
    let rms_value = ms.sqrt();
    let derivative = if ms > 0.0 { 0.5 / rms_value } else { 0.0 };
    let rms = mean_square.map_estimate(&format!("{}_rms", mean_square.label), |v| v.max(0.0).sqrt(), derivative);
    Ok(ResidualReport { mean_square, rms })
}
