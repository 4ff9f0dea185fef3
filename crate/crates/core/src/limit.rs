//! Functional families along refining partitions and their limit estimates.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::cylinder::{
    expectation_mc_stream, expectation_quadrature, CylinderFunctional, CylinderMeasure, McBudget,
    MAX_QUADRATURE_SEGMENTS,
};
use crate::error::{Error, Result};
use crate::exec::StreamId;
use crate::functional::PathFunctional;
use crate::heat_kernel::KernelEvaluator;
use crate::manifold::{Manifold, Point};
use crate::partition::Partition;
use crate::report::{joint_stderr, EstimateReport};

pub const LIMIT_STREAM: u16 = 2;
pub const DIAGNOSTIC_STREAM: u16 = 3;
pub const DENSITY_STREAM: u16 = 4;

/// Heat-kernel path measures from a fixed base point, one per partition.
#[derive(Clone, Debug)]
pub struct WienerSpace {
    pub kernel: KernelEvaluator,
    pub base: Point,
}

impl WienerSpace {
    pub fn new(manifold: Manifold, base: Point) -> Result<Self> {
        manifold.check_point(&base)?;
        Ok(WienerSpace { kernel: KernelEvaluator::new(manifold), base })
    }

    pub fn manifold(&self) -> &Manifold {
        self.kernel.manifold()
    }

    pub fn measure(&self, partition: Arc<Partition>) -> Result<CylinderMeasure> {
        CylinderMeasure::new(self.kernel.clone(), self.base.clone(), partition)
    }
}

/// Nested partitions with strictly decreasing mesh.
#[derive(Clone, Debug, PartialEq)]
pub struct RefinementChain {
    levels: Vec<Arc<Partition>>,
}

impl RefinementChain {
    pub fn new(levels: Vec<Partition>) -> Result<Self> {
        if levels.is_empty() {
            return Err(Error::InvalidPartition("empty refinement chain".into()));
        }
        for w in levels.windows(2) {
            if !w[0].is_subset_of(&w[1]) {
                return Err(Error::NotNested);
            }
            if !(w[1].mesh() < w[0].mesh()) {
                return Err(Error::InvalidPartition("chain mesh must strictly decrease".into()));
            }
        }
        Ok(RefinementChain { levels: levels.into_iter().map(Arc::new).collect() })
    }

    /// `n = 2, 4, …, 2^k`.
    pub fn dyadic(k: u32) -> Result<Self> {
        RefinementChain::new((1..=k).map(Partition::dyadic).collect::<Result<_>>()?)
    }

    /// Uniform partitions with the given segment counts.
    pub fn uniform(counts: &[usize]) -> Result<Self> {
        RefinementChain::new(counts.iter().map(|&n| Partition::uniform(n)).collect::<Result<_>>()?)
    }

    pub fn levels(&self) -> &[Arc<Partition>] {
        &self.levels
    }

    pub fn len(&self) -> usize {
        self.levels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.levels.is_empty()
    }

    pub fn finest(&self) -> &Arc<Partition> {
        self.levels.last().expect("chain is nonempty")
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    LiftedFromR,
    DiscretizedPathFunctional,
    Stratonovich,
    Custom,
}

/// One cylinder functional per chain level.
#[derive(Clone, Debug)]
pub struct FunctionalFamily {
    pub chain: RefinementChain,
    pub members: Vec<CylinderFunctional>,
    pub provenance: Provenance,
}

impl FunctionalFamily {
    pub fn new(chain: RefinementChain, members: Vec<CylinderFunctional>, provenance: Provenance) -> Result<Self> {
        if members.len() != chain.len() {
            return Err(Error::DimensionMismatch { expected: chain.len(), got: members.len() });
        }
        for (f, p) in members.iter().zip(chain.levels()) {
            if !f.partition().same_as(p) {
                return Err(Error::InvalidPartition(format!("member '{}' is not on its chain level", f.label())));
            }
        }
        Ok(FunctionalFamily { chain, members, provenance })
    }

    pub fn label(&self) -> &str {
        self.members.first().map(|f| f.label()).unwrap_or("")
    }
}

/// `f_T(s) = F(piecewise-geodesic interpolation of s)`.
pub fn discretize(manifold: &Manifold, f: &PathFunctional, partition: Arc<Partition>) -> Result<CylinderFunctional> {
    CylinderFunctional::from_path_functional(manifold, partition, f.clone())
}

pub fn discretize_family(manifold: &Manifold, f: &PathFunctional, chain: &RefinementChain) -> Result<FunctionalFamily> {
    let members = chain.levels().iter().map(|p| discretize(manifold, f, p.clone())).collect::<Result<_>>()?;
    FunctionalFamily::new(chain.clone(), members, Provenance::DiscretizedPathFunctional)
}

/// Members `f ∘ π` on every level containing the partition of `f`, zero before it.
pub fn embed_family(f: &CylinderFunctional, chain: &RefinementChain) -> Result<FunctionalFamily> {
    let members = chain
        .levels()
        .iter()
        .map(|p| {
            if f.partition().is_subset_of(p) {
                f.lift(p)
            } else {
                Ok(CylinderFunctional::zero(p.clone()))
            }
        })
        .collect::<Result<_>>()?;
    FunctionalFamily::new(chain.clone(), members, Provenance::LiftedFromR)
}

/// `‖π*(f_k) − f_{k+1}‖_{L^p}` between consecutive levels.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoCauchyRow {
    pub level: usize,
    pub n_from: usize,
    pub n_to: usize,
    pub delta: f64,
    pub stderr: f64,
    /// Monte Carlo estimate of `E|π*(f_k) − f_{k+1}|^p`.
    pub moment: EstimateReport,
    /// Quadrature value of `δ_k` when the finer level is small enough.
    pub quadrature: Option<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DiagnosticOptions {
    pub p: f64,
    pub budget: McBudget,
    /// Add a quadrature column on flat compact manifolds when feasible.
    pub quadrature: bool,
}

fn check_p(p: f64) -> Result<()> {
    if p == 1.0 || p == 2.0 {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("p must be 1 or 2, got {p}")))
    }
}

/// `(E|d|^p)^{1/p}` with its delta-method standard error.
fn moment_to_norm(moment: &EstimateReport, p: f64) -> (f64, f64) {
    let m = moment.estimate.max(0.0);
    let delta = m.powf(1.0 / p);
    let stderr = if m > 0.0 { moment.stderr * m.powf(1.0 / p - 1.0) / p } else { 0.0 };
    (delta, stderr)
}

fn quadrature_feasible(space: &WienerSpace, n: usize) -> bool {
    // keep the automatic column to grids of at most 255³ points
    let dims = space.manifold().circle_radii().len() * n;
    matches!(space.manifold(), Manifold::Circle { .. } | Manifold::FlatTorus { .. })
        && n <= MAX_QUADRATURE_SEGMENTS
        && dims <= 3
}

pub fn co_cauchy_diagnostic(
    space: &WienerSpace,
    family: &FunctionalFamily,
    options: &DiagnosticOptions,
) -> Result<Vec<CoCauchyRow>> {
    check_p(options.p)?;
    if family.chain.len() < 2 {
        return Err(Error::InvalidArgument("co-Cauchy diagnostic needs at least two levels".into()));
    }
    let levels = family.chain.levels();
    let mut rows = Vec::with_capacity(levels.len() - 1);
    for k in 0..levels.len() - 1 {
        let finer = &levels[k + 1];
        let diff = family.members[k].lift(finer)?.minus(&family.members[k + 1])?;
        let integrand = diff.abs_pow(options.p);
        let measure = space.measure(finer.clone())?;
        let moment = expectation_mc_stream(&measure, &integrand, &options.budget, StreamId::new(DIAGNOSTIC_STREAM, k as u16))?;
        let (delta, stderr) = moment_to_norm(&moment, options.p);
        let quadrature = if options.quadrature && quadrature_feasible(space, finer.segments()) {
            Some(expectation_quadrature(&measure, &integrand, None)?.estimate.max(0.0).powf(1.0 / options.p))
        } else {
            None
        };
        rows.push(CoCauchyRow {
            level: k,
            n_from: levels[k].segments(),
            n_to: finer.segments(),
            delta,
            stderr,
            moment,
            quadrature,
        });
    }
    Ok(rows)
}

/// `‖π*(f_k) − f_K‖_{L^p}` against the finest level `K`, one row per coarser level.
pub fn density_diagnostic(space: &WienerSpace, family: &FunctionalFamily, options: &DiagnosticOptions) -> Result<Vec<CoCauchyRow>> {
    check_p(options.p)?;
    let levels = family.chain.levels();
    let finest = family.chain.finest();
    let last = family.members.last().ok_or(Error::ZeroSamples)?;
    let measure = space.measure(finest.clone())?;
    let mut rows = Vec::new();
    for k in 0..levels.len().saturating_sub(1) {
        let integrand = family.members[k].lift(finest)?.minus(last)?.abs_pow(options.p);
        let moment = expectation_mc_stream(&measure, &integrand, &options.budget, StreamId::new(DENSITY_STREAM, k as u16))?;
        let (delta, stderr) = moment_to_norm(&moment, options.p);
        rows.push(CoCauchyRow {
            level: k,
            n_from: levels[k].segments(),
            n_to: finest.segments(),
            delta,
            stderr,
            moment,
            quadrature: None,
        });
    }
    Ok(rows)
}

/// Per-level estimates `∫ f_T dμ^T` along the chain.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LimitTable {
    pub levels: Vec<EstimateReport>,
    /// `estimate_k − estimate_{k−1}` for `k ≥ 1`.
    pub differences: Vec<f64>,
    pub difference_stderr: Vec<f64>,
    /// Finest-level value; no rate is assumed, so nothing is extrapolated past it.
    pub extrapolated: f64,
    pub extrapolated_stderr: f64,
}

impl LimitTable {
    pub fn from_levels(levels: Vec<EstimateReport>) -> Result<Self> {
        let last = levels.last().ok_or(Error::ZeroSamples)?;
        let (extrapolated, extrapolated_stderr) = (last.estimate, last.stderr);
        let differences = levels.windows(2).map(|w| w[1].estimate - w[0].estimate).collect();
        let difference_stderr = levels.windows(2).map(|w| joint_stderr(w[0].stderr, w[1].stderr)).collect();
        Ok(LimitTable { levels, differences, difference_stderr, extrapolated, extrapolated_stderr })
    }
}

/// Monte Carlo estimate at each level; `budgets[k]` samples at level `k`
/// (a single budget applies to every level).
pub fn limit_estimate(space: &WienerSpace, family: &FunctionalFamily, budgets: &[McBudget]) -> Result<LimitTable> {
    if budgets.len() != 1 && budgets.len() != family.chain.len() {
        return Err(Error::DimensionMismatch { expected: family.chain.len(), got: budgets.len() });
    }
    let mut levels = Vec::with_capacity(family.chain.len());
    for (k, (f, p)) in family.members.iter().zip(family.chain.levels()).enumerate() {
        let budget = if budgets.len() == 1 { &budgets[0] } else { &budgets[k] };
        let measure = space.measure(p.clone())?;
        levels.push(expectation_mc_stream(&measure, f, budget, StreamId::new(LIMIT_STREAM, k as u16))?);
    }
    LimitTable::from_levels(levels)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exec::Exec;
    use crate::functional::Observable;

    fn circle_space() -> WienerSpace {
        let m = Manifold::circle(1.0).unwrap();
        WienerSpace::new(m.clone(), m.default_base()).unwrap()
    }

    fn budget(samples: usize) -> McBudget {
        McBudget::new(samples, 17).with_exec(Exec::parallel(4))
    }

    #[test]
    fn chain_validation() {
        assert!(RefinementChain::dyadic(3).is_ok());
        assert_eq!(RefinementChain::dyadic(3).unwrap().finest().segments(), 8);
        assert!(matches!(RefinementChain::uniform(&[2, 3]), Err(Error::NotNested)));
        assert!(RefinementChain::uniform(&[2, 2]).is_err());
        assert!(RefinementChain::uniform(&[3, 6, 12]).is_ok());
    }

    #[test]
    fn embedded_family_is_exactly_co_cauchy() {
        let space = circle_space();
        let chain = RefinementChain::uniform(&[2, 4, 8, 16]).unwrap();
        let r = Arc::new(Partition::uniform(4).unwrap());
        let f = discretize(space.manifold(), &PathFunctional::SupDistance, r).unwrap();
        let family = embed_family(&f, &chain).unwrap();
        let rows = co_cauchy_diagnostic(&space, &family, &DiagnosticOptions { p: 2.0, budget: budget(2000), quadrature: false })
            .unwrap();
        assert!(rows[0].delta > 0.0);
        assert_eq!(rows[1].delta, 0.0);
        assert_eq!(rows[2].delta, 0.0);
    }

    #[test]
    fn constant_family_limit_is_exact() {
        let space = circle_space();
        let chain = RefinementChain::dyadic(3).unwrap();
        let family = discretize_family(space.manifold(), &PathFunctional::Constant { value: 1.5 }, &chain).unwrap();
        let table = limit_estimate(&space, &family, &[budget(500)]).unwrap();
        assert!(table.levels.iter().all(|r| r.estimate == 1.5 && r.stderr == 0.0));
        assert_eq!(table.extrapolated, 1.5);
        assert!(table.differences.iter().all(|&d| d == 0.0));
    }

    #[test]
    fn endpoint_family_has_zero_diagnostics() {
        let space = circle_space();
        let chain = RefinementChain::uniform(&[1, 2, 6]).unwrap();
        let f = PathFunctional::Endpoint { observable: Observable::Legendre { degree: 1 } };
        let family = discretize_family(space.manifold(), &f, &chain).unwrap();
        let rows = co_cauchy_diagnostic(&space, &family, &DiagnosticOptions { p: 1.0, budget: budget(500), quadrature: true })
            .unwrap();
        for row in rows {
            assert_eq!(row.delta, 0.0);
            if let Some(q) = row.quadrature {
                assert_eq!(q, 0.0);
            }
        }
    }

    #[test]
    fn rejects_bad_p_and_short_chains() {
        let space = circle_space();
        let chain = RefinementChain::dyadic(1).unwrap();
        let family = discretize_family(space.manifold(), &PathFunctional::Energy, &chain).unwrap();
        let opts = DiagnosticOptions { p: 2.0, budget: budget(10), quadrature: false };
        assert!(co_cauchy_diagnostic(&space, &family, &opts).is_err());
        let opts = DiagnosticOptions { p: 3.0, ..opts };
        assert!(co_cauchy_diagnostic(&space, &family, &opts).is_err());
    }
}
