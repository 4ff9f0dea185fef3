//! Finite-dimensional path measures on `M^T` and their expectation engines.

use std::fmt;
use std::sync::Arc;
use std::time::Instant;

use rand::Rng;

use crate::error::{Error, Result};
use crate::exec::{monte_carlo, pairwise_sum, Exec, SampleRng, StreamId};
use crate::functional::{GeodesicPolyline, Observable, PathFunctional};
use crate::heat_kernel::{circle_kernel, KernelEvaluator, TransitionSampler};
use crate::manifold::{Manifold, Point};
use crate::partition::Partition;
use crate::report::{EstimateReport, Method, Scheme};

/// Stream tag for plain cylinder expectations.
pub const CYLINDER_STREAM: u16 = 1;

/// Largest tensor grid the quadrature engine accepts.
pub const MAX_GRID_POINTS: f64 = 1e8;

/// Largest segment count accepted by the quadrature engine.
pub const MAX_QUADRATURE_SEGMENTS: usize = 4;

/// Points of a path at the nonzero times of a partition, anchored at `base`.
#[derive(Clone, Debug, PartialEq)]
pub struct PathSkeleton {
    pub(crate) partition: Arc<Partition>,
    pub(crate) base: Point,
    pub(crate) points: Vec<Point>,
}

impl PathSkeleton {
    pub fn new(partition: Arc<Partition>, base: Point, points: Vec<Point>) -> Result<Self> {
        if points.len() != partition.segments() {
            return Err(Error::DimensionMismatch { expected: partition.segments(), got: points.len() });
        }
        Ok(PathSkeleton { partition, base, points })
    }

    pub fn partition(&self) -> &Arc<Partition> {
        &self.partition
    }

    pub fn base(&self) -> &Point {
        &self.base
    }

    pub fn points(&self) -> &[Point] {
        &self.points
    }

    pub fn endpoint(&self) -> &Point {
        self.points.last().unwrap_or(&self.base)
    }

    /// Point at partition index `i` (0 is the base point).
    pub fn at(&self, i: usize) -> &Point {
        if i == 0 {
            &self.base
        } else {
            &self.points[i - 1]
        }
    }

    /// Keep the points at the times of `target ⊆ self.partition`.
    pub fn project(&self, target: &Arc<Partition>) -> Result<PathSkeleton> {
        if Arc::ptr_eq(target, &self.partition) {
            return Ok(self.clone());
        }
        let idx = target.embedding_indices(&self.partition)?;
        Ok(PathSkeleton {
            partition: target.clone(),
            base: self.base.clone(),
            points: idx.into_iter().map(|i| self.points[i].clone()).collect(),
        })
    }

    pub fn interpolate(&self, manifold: &Manifold) -> Result<GeodesicPolyline> {
        GeodesicPolyline::interpolate(manifold, self.partition.clone(), &self.base, &self.points)
    }
}

type Rule = dyn Fn(&PathSkeleton) -> Result<f64> + Send + Sync;

/// Real function on skeletons over a fixed partition.
#[derive(Clone)]
pub struct CylinderFunctional {
    partition: Arc<Partition>,
    label: String,
    rule: Arc<Rule>,
    /// Known bound on `|f|`, used for rejection bias bounds.
    sup_abs: Option<f64>,
}

impl fmt::Debug for CylinderFunctional {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CylinderFunctional")
            .field("label", &self.label)
            .field("n", &self.partition.segments())
            .finish()
    }
}

/// Ball constraint `d(x_t, center) ≤ radius` of a cylinder set.
#[derive(Clone, Debug, PartialEq)]
pub struct BallConstraint {
    pub time: f64,
    pub center: Point,
    pub radius: f64,
}

impl CylinderFunctional {
    pub fn new<F>(partition: Arc<Partition>, label: impl Into<String>, rule: F) -> Self
    where
        F: Fn(&PathSkeleton) -> Result<f64> + Send + Sync + 'static,
    {
        CylinderFunctional { partition, label: label.into(), rule: Arc::new(rule), sup_abs: None }
    }

    pub fn with_sup_abs(mut self, bound: f64) -> Self {
        self.sup_abs = Some(bound);
        self
    }

    pub fn constant(partition: Arc<Partition>, value: f64) -> Self {
        CylinderFunctional::new(partition, format!("constant({value})"), move |_| Ok(value)).with_sup_abs(value.abs())
    }

    pub fn zero(partition: Arc<Partition>) -> Self {
        CylinderFunctional::constant(partition, 0.0)
    }

    /// `f(s) = g(x_{t_n})`.
    pub fn endpoint(manifold: &Manifold, partition: Arc<Partition>, observable: Observable) -> Result<Self> {
        observable.validate(manifold)?;
        let m = manifold.clone();
        let label = PathFunctional::Endpoint { observable: observable.clone() }.label();
        let bound = observable.sup_abs(manifold);
        let mut f = CylinderFunctional::new(partition, label, move |s: &PathSkeleton| {
            Ok(observable.eval(&m, &s.base, s.endpoint()))
        });
        f.sup_abs = bound;
        Ok(f)
    }

    /// Indicator of `{x_{t} ∈ B(center, radius)}` for every constraint.
    pub fn indicator(manifold: &Manifold, partition: Arc<Partition>, constraints: Vec<BallConstraint>) -> Result<Self> {
        let mut slots = Vec::with_capacity(constraints.len());
        for c in constraints {
            manifold.check_point(&c.center)?;
            if !(c.time > 0.0 && c.time <= 1.0) {
                return Err(Error::InvalidArgument(format!("constraint time {} outside (0, 1]", c.time)));
            }
            let idx = partition
                .times()
                .iter()
                .position(|&t| (t - c.time).abs() <= 1e-12)
                .ok_or_else(|| Error::InvalidArgument(format!("constraint time {} is not a partition time", c.time)))?;
            slots.push((idx, c.center, c.radius));
        }
        let m = manifold.clone();
        Ok(CylinderFunctional::new(partition, "indicator", move |s: &PathSkeleton| {
            let inside = slots.iter().all(|(i, c, r)| m.distance(s.at(*i), c) <= *r);
            Ok(if inside { 1.0 } else { 0.0 })
        })
        .with_sup_abs(1.0))
    }

    /// `Σ d(x_{i−1}, x_i)² / Δt_i`, the energy of the geodesic interpolation.
    pub fn discretized_energy(manifold: &Manifold, partition: Arc<Partition>) -> Self {
        let m = manifold.clone();
        CylinderFunctional::new(partition, "energy", move |s: &PathSkeleton| {
            let mut e = 0.0;
            for (i, dt) in s.partition.gaps().enumerate() {
                e += m.distance(s.at(i), s.at(i + 1)).powi(2) / dt;
            }
            Ok(e)
        })
    }

    /// `F` evaluated on the piecewise-geodesic interpolation of the skeleton.
    pub fn from_path_functional(manifold: &Manifold, partition: Arc<Partition>, f: PathFunctional) -> Result<Self> {
        f.validate(manifold)?;
        match &f {
            PathFunctional::Endpoint { observable } => {
                return CylinderFunctional::endpoint(manifold, partition, observable.clone());
            }
            PathFunctional::Constant { value } => return Ok(CylinderFunctional::constant(partition, *value)),
            _ => {}
        }
        let m = manifold.clone();
        let bound = match f {
            PathFunctional::SupDistance => Observable::DistanceFromBase.sup_abs(manifold),
            _ => None,
        };
        let mut out = CylinderFunctional::new(partition, f.label(), move |s: &PathSkeleton| {
            let path = s.interpolate(&m)?;
            Ok(f.eval(&m, &path))
        });
        out.sup_abs = bound;
        Ok(out)
    }

    pub fn partition(&self) -> &Arc<Partition> {
        &self.partition
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn sup_abs(&self) -> Option<f64> {
        self.sup_abs
    }

    pub fn relabel(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }

    pub fn eval(&self, s: &PathSkeleton) -> Result<f64> {
        if !Arc::ptr_eq(&s.partition, &self.partition) && !s.partition.same_as(&self.partition) {
            return Err(Error::InvalidPartition(format!(
                "skeleton has {} segments, functional expects {}",
                s.partition.segments(),
                self.partition.segments()
            )));
        }
        (self.rule)(s)
    }

    /// Pullback `f ∘ π` to a finer partition.
    pub fn lift(&self, finer: &Arc<Partition>) -> Result<Self> {
        if Arc::ptr_eq(finer, &self.partition) || finer.same_as(&self.partition) {
            return Ok(CylinderFunctional { partition: finer.clone(), ..self.clone() });
        }
        self.partition.embedding_indices(finer)?;
        let inner = self.clone();
        Ok(CylinderFunctional {
            partition: finer.clone(),
            label: self.label.clone(),
            rule: Arc::new(move |s: &PathSkeleton| inner.eval(&s.project(&inner.partition)?)),
            sup_abs: self.sup_abs,
        })
    }

    /// Pointwise difference `self − other` on a common partition.
    pub fn minus(&self, other: &CylinderFunctional) -> Result<Self> {
        if !self.partition.same_as(&other.partition) {
            return Err(Error::InvalidPartition("difference of functionals on different partitions".into()));
        }
        let (a, b) = (self.clone(), other.clone());
        let bound = match (self.sup_abs, other.sup_abs) {
            (Some(x), Some(y)) => Some(x + y),
            _ => None,
        };
        let mut out = CylinderFunctional::new(
            self.partition.clone(),
            format!("{} - {}", self.label, other.label),
            move |s: &PathSkeleton| Ok(a.eval(s)? - b.eval(s)?),
        );
        out.sup_abs = bound;
        Ok(out)
    }

    /// `|f|^p`.
    pub fn abs_pow(&self, p: f64) -> Self {
        let a = self.clone();
        let mut out = CylinderFunctional::new(self.partition.clone(), format!("|{}|^{p}", self.label), move |s| {
            Ok(a.eval(s)?.abs().powf(p))
        });
        out.sup_abs = self.sup_abs.map(|b| b.powf(p));
        out
    }
}

/// The measure `∏ p_{Δt_i}(x_{i−1}, x_i) dμ(x_i)` on skeletons of a partition.
#[derive(Clone, Debug)]
pub struct CylinderMeasure {
    kernel: KernelEvaluator,
    base: Point,
    partition: Arc<Partition>,
    samplers: Vec<Arc<TransitionSampler>>,
}

impl CylinderMeasure {
    pub fn new(kernel: KernelEvaluator, base: Point, partition: Arc<Partition>) -> Result<Self> {
        kernel.manifold().check_point(&base)?;
        let mut cache: Vec<(u64, Arc<TransitionSampler>)> = Vec::new();
        let mut samplers = Vec::with_capacity(partition.segments());
        for dt in partition.gaps() {
            let key = dt.to_bits();
            let s = match cache.iter().find(|(k, _)| *k == key) {
                Some((_, s)) => s.clone(),
                None => {
                    let s = Arc::new(kernel.transition_sampler(dt)?);
                    cache.push((key, s.clone()));
                    s
                }
            };
            samplers.push(s);
        }
        Ok(CylinderMeasure { kernel, base, partition, samplers })
    }

    pub fn manifold(&self) -> &Manifold {
        self.kernel.manifold()
    }

    pub fn kernel(&self) -> &KernelEvaluator {
        &self.kernel
    }

    pub fn base(&self) -> &Point {
        &self.base
    }

    pub fn partition(&self) -> &Arc<Partition> {
        &self.partition
    }

    /// Same kernel and base point on another partition.
    pub fn on(&self, partition: Arc<Partition>) -> Result<CylinderMeasure> {
        CylinderMeasure::new(self.kernel.clone(), self.base.clone(), partition)
    }

    pub fn density(&self, s: &PathSkeleton) -> Result<f64> {
        if !s.partition.same_as(&self.partition) {
            return Err(Error::InvalidPartition("skeleton partition differs from the measure partition".into()));
        }
        let mut d = 1.0;
        for (i, dt) in self.partition.gaps().enumerate() {
            d *= self.kernel.kernel(dt, s.at(i), s.at(i + 1))?;
        }
        Ok(d)
    }

    pub fn sample_skeleton<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<PathSkeleton> {
        let mut points: Vec<Point> = Vec::with_capacity(self.samplers.len());
        for sampler in &self.samplers {
            let prev = points.last().unwrap_or(&self.base);
            let next = sampler.sample(prev, rng)?;
            points.push(next);
        }
        Ok(PathSkeleton { partition: self.partition.clone(), base: self.base.clone(), points })
    }
}

/// Sample count, seed and execution policy of a Monte Carlo run.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct McBudget {
    pub samples: usize,
    pub seed: u64,
    pub exec: Exec,
}

impl McBudget {
    pub fn new(samples: usize, seed: u64) -> Self {
        McBudget { samples, seed, exec: Exec::default() }
    }

    pub fn with_exec(mut self, exec: Exec) -> Self {
        self.exec = exec;
        self
    }
}

fn check_partition(measure: &CylinderMeasure, f: &CylinderFunctional) -> Result<()> {
    if measure.partition.same_as(&f.partition) {
        Ok(())
    } else {
        Err(Error::InvalidPartition(format!(
            "functional on {} segments, measure on {}",
            f.partition.segments(),
            measure.partition.segments()
        )))
    }
}

/// Evaluate `f` on a sampled skeleton, mapping cut-locus failures to rejection.
pub(crate) fn accept(value: Result<f64>) -> Result<Option<f64>> {
    match value {
        Ok(v) => Ok(Some(v)),
        Err(Error::CutLocus) => Ok(None),
        Err(e) => Err(e),
    }
}

pub fn expectation_mc(measure: &CylinderMeasure, f: &CylinderFunctional, budget: &McBudget) -> Result<EstimateReport> {
    expectation_mc_stream(measure, f, budget, StreamId::new(CYLINDER_STREAM, 0))
}

pub fn expectation_mc_stream(
    measure: &CylinderMeasure,
    f: &CylinderFunctional,
    budget: &McBudget,
    stream: StreamId,
) -> Result<EstimateReport> {
    check_partition(measure, f)?;
    let start = Instant::now();
    let outcome = monte_carlo(budget.samples, budget.seed, stream, &budget.exec, |rng: &mut SampleRng| {
        let s = measure.sample_skeleton(rng)?;
        accept(f.eval(&s))
    })?;
    let mut report = EstimateReport::from_outcome(
        f.label(),
        &outcome,
        &measure.partition,
        measure.manifold(),
        Scheme::Cylinder,
        budget.seed,
        &budget.exec,
        start.elapsed().as_secs_f64(),
    )?;
    if let Some(b) = f.sup_abs {
        report.bias_bound = outcome.rejection_fraction() * b;
    }
    Ok(report)
}

/// Tensor-trapezoid integral of `f · density` over `(S¹)^{m·n}`.
///
/// `grid` nodes per circle factor; by default the largest odd count not
/// above `min(255, 10⁸^{1/(m n)})`. The error bound is the difference to the
/// same rule on a grid of about half the size.
pub fn expectation_quadrature(measure: &CylinderMeasure, f: &CylinderFunctional, grid: Option<usize>) -> Result<EstimateReport> {
    check_partition(measure, f)?;
    let radii = match measure.manifold() {
        Manifold::Circle { .. } | Manifold::FlatTorus { .. } => measure.manifold().circle_radii(),
        m => return Err(Error::Unsupported(format!("quadrature on {}", m.name()))),
    };
    let n = measure.partition.segments();
    if n > MAX_QUADRATURE_SEGMENTS {
        return Err(Error::Unsupported(format!(
            "quadrature needs at most {MAX_QUADRATURE_SEGMENTS} segments, got {n}"
        )));
    }
    let dims = radii.len() * n;
    let fine = match grid {
        Some(g) => {
            if g < 2 || (g as f64).powi(dims as i32) > MAX_GRID_POINTS {
                return Err(Error::InvalidArgument(format!("grid {g}^{dims} exceeds {MAX_GRID_POINTS} points")));
            }
            g
        }
        None => default_grid(dims),
    };
    let coarse = (fine / 2) | 1;
    let start = Instant::now();
    let exec = Exec::default();
    let (value, rejected) = trapezoid(measure, f, &radii, fine, &exec)?;
    let (coarse_value, _) = trapezoid(measure, f, &radii, coarse, &exec)?;
    Ok(EstimateReport {
        label: f.label().to_string(),
        estimate: value,
        stderr: 0.0,
        ci95: 0.0,
        samples: fine.pow(dims as u32),
        rejected,
        bias_bound: 0.0,
        error_bound: Some((value - coarse_value).abs()),
        n,
        mesh: measure.partition.mesh(),
        partition: measure.partition.descriptor(),
        manifold: measure.manifold().name(),
        scheme: Scheme::Cylinder,
        method: Method::Quadrature,
        seed: None,
        workers: exec.workers,
        wall_time_s: start.elapsed().as_secs_f64(),
    })
}

/// `(E|f|^p)^{1/p}` by quadrature.
pub fn lp_norm_quadrature(measure: &CylinderMeasure, f: &CylinderFunctional, p: f64, grid: Option<usize>) -> Result<f64> {
    Ok(expectation_quadrature(measure, &f.abs_pow(p), grid)?.estimate.powf(1.0 / p))
}

pub fn default_grid(dims: usize) -> usize {
    let cap = MAX_GRID_POINTS.powf(1.0 / dims as f64).floor().min(255.0) as usize;
    // odd grids keep consecutive nodes away from exact antipodes
    if cap % 2 == 0 {
        cap - 1
    } else {
        cap
    }
}

fn trapezoid(
    measure: &CylinderMeasure,
    f: &CylinderFunctional,
    radii: &[f64],
    g: usize,
    exec: &Exec,
) -> Result<(f64, usize)> {
    let m = radii.len();
    let n = measure.partition.segments();
    let tol = measure.kernel.tolerance();
    let h: Vec<f64> = radii.iter().map(|r| 2.0 * std::f64::consts::PI * r / g as f64).collect();
    let cell: f64 = h.iter().product();
    let gaps: Vec<f64> = measure.partition.gaps().collect();
    // tables[i][k][d] = p_{Δt_i}(d·h_k) on factor k
    let tables: Vec<Vec<Vec<f64>>> = gaps
        .iter()
        .map(|&dt| {
            radii
                .iter()
                .zip(&h)
                .map(|(&r, &hk)| (0..g).map(|d| circle_kernel(dt, d as f64 * hk, r, tol)).collect())
                .collect()
        })
        .collect();
    let base = measure.base.clone();
    let first: Vec<Vec<f64>> = radii
        .iter()
        .zip(&h)
        .enumerate()
        .map(|(k, (&r, &hk))| (0..g).map(|j| circle_kernel(gaps[0], j as f64 * hk - base.0[k], r, tol)).collect())
        .collect();
    let per_point = g.pow(m as u32);
    let decode = |idx: usize, out: &mut [usize]| {
        let mut rest = idx;
        for o in out.iter_mut() {
            *o = rest % g;
            rest /= g;
        }
    };
    let point_of = |digits: &[usize]| Point(digits.iter().zip(&h).map(|(&d, &hk)| d as f64 * hk).collect());

    let chunks = exec.map(per_point, |j1| -> Result<(f64, usize)> {
        let mut digits = vec![vec![0usize; m]; n];
        decode(j1, &mut digits[0]);
        let w1: f64 = (0..m).map(|k| first[k][digits[0][k]]).product::<f64>() * cell;
        let mut skeleton = PathSkeleton {
            partition: measure.partition.clone(),
            base: base.clone(),
            points: vec![point_of(&digits[0]); n],
        };
        let mut acc = Vec::new();
        let mut rejected = 0;
        walk(1, w1, &mut digits, &mut skeleton, &mut acc, &mut rejected, &tables, cell, per_point, &decode, &point_of, f)?;
        Ok((pairwise_sum(&acc), rejected))
    });
    let mut sums = Vec::with_capacity(per_point);
    let mut rejected = 0;
    for c in chunks {
        let (s, r) = c?;
        sums.push(s);
        rejected += r;
    }
    Ok((pairwise_sum(&sums), rejected))
}

#[allow(clippy::too_many_arguments)]
fn walk(
    level: usize,
    weight: f64,
    digits: &mut Vec<Vec<usize>>,
    skeleton: &mut PathSkeleton,
    acc: &mut Vec<f64>,
    rejected: &mut usize,
    tables: &[Vec<Vec<f64>>],
    cell: f64,
    per_point: usize,
    decode: &dyn Fn(usize, &mut [usize]),
    point_of: &dyn Fn(&[usize]) -> Point,
    f: &CylinderFunctional,
) -> Result<()> {
    let n = digits.len();
    if level == n {
        match accept(f.eval(skeleton))? {
            Some(v) => acc.push(weight * v),
            None => *rejected += 1,
        }
        return Ok(());
    }
    let g = tables[0][0].len();
    let mut cur = vec![0usize; digits[0].len()];
    for j in 0..per_point {
        decode(j, &mut cur);
        let mut w = weight * cell;
        for (k, &d) in cur.iter().enumerate() {
            let prev = digits[level - 1][k];
            w *= tables[level][k][(d + g - prev) % g];
        }
        if w == 0.0 {
            continue;
        }
        digits[level].copy_from_slice(&cur);
        skeleton.points[level] = point_of(&cur);
        walk(level + 1, w, digits, skeleton, acc, rejected, tables, cell, per_point, decode, point_of, f)?;
    }
    Ok(())
}
