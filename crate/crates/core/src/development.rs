//! Cartan development of piecewise-linear paths in ℝᵐ onto the manifold.
//!
//! A flat path `α` with `α(0) = 0` is rolled onto `M` starting at `x₀` with a
//! chosen orthonormal frame: each increment `Δα_i` is read in the current
//! frame, shot along a geodesic, and the frame is parallel transported to the
//! new vertex. Sampling Gaussian flat paths and developing them gives the
//! geometric path measure on piecewise-geodesic paths.

use std::f64::consts::PI;
use std::sync::Arc;
use std::time::Instant;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::cylinder::{expectation_mc_stream, McBudget};
use crate::error::{Error, Result};
use crate::exec::{monte_carlo, SampleRng, StreamId};
use crate::functional::{GeodesicPolyline, PathFunctional};
use crate::limit::{discretize_family, LimitTable, RefinementChain, WienerSpace};
use crate::manifold::{dot, Coords, Frame, Manifold, Point, TangentVector};
use crate::partition::Partition;
use crate::report::{joint_stderr, EstimateReport, Scheme};

pub const GEOMETRIC_STREAM: u16 = 7;

/// Gram residual above which a transported frame is re-orthonormalized.
pub const REORTHONORMALIZE_ABOVE: f64 = 1e-9;

/// Piecewise-linear path in ℝᵐ with `α(0) = 0`, vertices at `t₁, …, t_n`.
#[derive(Clone, Debug, PartialEq)]
pub struct FlatPiecewisePath {
    pub partition: Arc<Partition>,
    pub vertices: Vec<Coords>,
}

impl FlatPiecewisePath {
    pub fn new(partition: Arc<Partition>, vertices: Vec<Coords>) -> Result<Self> {
        if vertices.len() != partition.segments() {
            return Err(Error::DimensionMismatch { expected: partition.segments(), got: vertices.len() });
        }
        if let Some(first) = vertices.first() {
            let m = first.len();
            if let Some(bad) = vertices.iter().find(|v| v.len() != m) {
                return Err(Error::DimensionMismatch { expected: m, got: bad.len() });
            }
        }
        Ok(FlatPiecewisePath { partition, vertices })
    }

    pub fn zero(partition: Arc<Partition>, dimension: usize) -> Self {
        let n = partition.segments();
        FlatPiecewisePath { partition, vertices: vec![Coords::from_elem(0.0, dimension); n] }
    }

    pub fn dimension(&self) -> usize {
        self.vertices.first().map_or(0, |v| v.len())
    }

    /// `α(t_i) − α(t_{i−1})` per segment.
    pub fn increments(&self) -> Vec<Coords> {
        let m = self.dimension();
        let zero = Coords::from_elem(0.0, m);
        let mut prev = &zero;
        let mut out = Vec::with_capacity(self.vertices.len());
        for v in &self.vertices {
            out.push(v.iter().zip(prev).map(|(a, b)| a - b).collect());
            prev = v;
        }
        out
    }

    /// `Δα_i / Δt_i` per segment.
    pub fn velocities(&self) -> Vec<Coords> {
        self.increments()
            .into_iter()
            .zip(self.partition.gaps())
            .map(|(d, dt)| d.iter().map(|c| c / dt).collect())
            .collect()
    }

    pub fn scaled(&self, c: f64) -> Self {
        FlatPiecewisePath {
            partition: self.partition.clone(),
            vertices: self.vertices.iter().map(|v| v.iter().map(|x| x * c).collect()).collect(),
        }
    }

    /// `α(t)` by linear interpolation.
    pub fn at(&self, t: f64) -> Coords {
        let times = self.partition.times();
        let m = self.dimension();
        let i = times[1..].iter().position(|&s| t <= s).unwrap_or(times.len() - 2);
        let zero = Coords::from_elem(0.0, m);
        let a = if i == 0 { &zero } else { &self.vertices[i - 1] };
        let b = &self.vertices[i];
        let s = (t - times[i]) / (times[i + 1] - times[i]);
        a.iter().zip(b).map(|(x, y)| x + s * (y - x)).collect()
    }
}

/// `Σ |Δα_i|² / Δt_i`.
pub fn energy_flat(alpha: &FlatPiecewisePath) -> f64 {
    alpha.increments().iter().zip(alpha.partition.gaps()).map(|(d, dt)| dot(d, d) / dt).sum()
}

/// `(m/2) Σ log(2π Δt_i)`.
fn log_normalizer(partition: &Partition, m: usize) -> f64 {
    0.5 * m as f64 * partition.gaps().map(|dt| (2.0 * PI * dt).ln()).sum::<f64>()
}

/// Log of `∏ (2πΔt_i)^{−m/2} exp(−|Δα_i|²/(2Δt_i))`.
pub fn lambda0_log_density(alpha: &FlatPiecewisePath) -> f64 {
    -0.5 * energy_flat(alpha) - log_normalizer(&alpha.partition, alpha.dimension())
}

pub fn lambda0_density(alpha: &FlatPiecewisePath) -> f64 {
    lambda0_log_density(alpha).exp()
}

/// Independent Gaussian increments with variance `Δt_i` per coordinate.
pub fn sample_lambda0<R: Rng + ?Sized>(partition: &Arc<Partition>, dimension: usize, rng: &mut R) -> FlatPiecewisePath {
    let mut cur = Coords::from_elem(0.0, dimension);
    let mut vertices = Vec::with_capacity(partition.segments());
    for dt in partition.gaps() {
        let sd = dt.sqrt();
        for c in cur.iter_mut() {
            *c += sd * rng.sample::<f64, _>(StandardNormal);
        }
        vertices.push(cur.clone());
    }
    FlatPiecewisePath { partition: partition.clone(), vertices }
}

/// Piecewise-geodesic path on `M` with the frame carried along it.
#[derive(Clone, Debug, PartialEq)]
pub struct CurvedPiecewisePath {
    pub partition: Arc<Partition>,
    pub base: Point,
    /// `γ(t₁), …, γ(t_n)`.
    pub vertices: Vec<Point>,
    /// Segment `i` is `t ↦ exp(γ(t_{i−1}), (t − t_{i−1}) v_i)`.
    pub velocities: Vec<TangentVector>,
    /// Frames at `γ(t₀), …, γ(t_n)`.
    pub frames: Vec<Frame>,
    /// Times the frame drifted past [`REORTHONORMALIZE_ABOVE`] and was repaired.
    pub reorthonormalizations: usize,
}

impl CurvedPiecewisePath {
    /// Path through given vertices along minimizing geodesics, framed by
    /// transporting `frame0` (the canonical frame at `base` by default).
    pub fn from_vertices(
        manifold: &Manifold,
        partition: Arc<Partition>,
        base: Point,
        vertices: Vec<Point>,
        frame0: Option<Frame>,
    ) -> Result<Self> {
        let polyline = GeodesicPolyline::interpolate(manifold, partition, &base, &vertices)?;
        CurvedPiecewisePath::from_velocities(manifold, polyline.partition, base, polyline.velocities, frame0)
    }

    /// Shoot the segments from `base` with the given per-segment velocities.
    pub fn from_velocities(
        manifold: &Manifold,
        partition: Arc<Partition>,
        base: Point,
        velocities: Vec<TangentVector>,
        frame0: Option<Frame>,
    ) -> Result<Self> {
        if velocities.len() != partition.segments() {
            return Err(Error::DimensionMismatch { expected: partition.segments(), got: velocities.len() });
        }
        manifold.check_point(&base)?;
        let frame = match frame0 {
            Some(f) => check_frame(manifold, &base, f)?,
            None => manifold.canonical_frame(&base),
        };
        let mut path = CurvedPiecewisePath {
            partition: partition.clone(),
            base: base.clone(),
            vertices: Vec::with_capacity(velocities.len()),
            velocities: Vec::with_capacity(velocities.len()),
            frames: Vec::with_capacity(velocities.len() + 1),
            reorthonormalizations: 0,
        };
        path.frames.push(frame);
        let mut cur = base;
        for (v, dt) in velocities.into_iter().zip(partition.gaps()) {
            let w = v.scaled(dt);
            let next = manifold.exp(&cur, &w)?;
            let frame = path.frames.last().expect("initial frame");
            let mut moved: Frame = frame.iter().map(|e| manifold.transport(&cur, &w, e)).collect::<Result<_>>()?;
            if frame_gram_residual(&moved) > REORTHONORMALIZE_ABOVE {
                orthonormalize(manifold, &next, &mut moved);
                path.reorthonormalizations += 1;
            }
            path.frames.push(moved);
            path.velocities.push(v);
            path.vertices.push(next.clone());
            cur = next;
        }
        Ok(path)
    }

    pub fn endpoint(&self) -> &Point {
        self.vertices.last().unwrap_or(&self.base)
    }

    /// The same path as a piecewise-geodesic polyline.
    pub fn polyline(&self) -> GeodesicPolyline {
        GeodesicPolyline {
            partition: self.partition.clone(),
            base: self.base.clone(),
            vertices: self.vertices.clone(),
            velocities: self.velocities.clone(),
        }
    }
}

fn check_frame(manifold: &Manifold, x: &Point, frame: Frame) -> Result<Frame> {
    if frame.len() != manifold.dimension() {
        return Err(Error::DimensionMismatch { expected: manifold.dimension(), got: frame.len() });
    }
    for e in &frame {
        if e.0.len() != manifold.tangent_len() {
            return Err(Error::DimensionMismatch { expected: manifold.tangent_len(), got: e.0.len() });
        }
        if let Manifold::Sphere2 { radius } = manifold {
            if (dot(&e.0, &x.0) / radius).abs() > 1e-10 {
                return Err(Error::InvalidArgument("frame vector is not tangent at the base point".into()));
            }
        }
    }
    if frame_gram_residual(&frame) > 1e-10 {
        return Err(Error::InvalidArgument("frame is not orthonormal".into()));
    }
    Ok(frame)
}

/// `max |⟨e_i, e_j⟩ − δ_ij|`.
pub fn frame_gram_residual(frame: &Frame) -> f64 {
    let mut worst = 0.0_f64;
    for (i, a) in frame.iter().enumerate() {
        for (j, b) in frame.iter().enumerate() {
            let target = if i == j { 1.0 } else { 0.0 };
            worst = worst.max((a.dot(b) - target).abs());
        }
    }
    worst
}

/// Gram–Schmidt after projecting onto the tangent space at `x`.
fn orthonormalize(manifold: &Manifold, x: &Point, frame: &mut Frame) {
    for i in 0..frame.len() {
        let mut v = frame[i].clone();
        if let Manifold::Sphere2 { .. } = manifold {
            v = manifold.ambient_to_tangent(x, &v.0);
        }
        for e in frame.iter().take(i) {
            let c = v.dot(e);
            for (vi, ei) in v.0.iter_mut().zip(&e.0) {
                *vi -= c * ei;
            }
        }
        let n = v.norm();
        frame[i] = v.scaled(1.0 / n);
    }
}

/// Roll `α` onto `M` from `x₀`, reading increments in `frame0` (canonical by default).
pub fn develop(manifold: &Manifold, alpha: &FlatPiecewisePath, x0: &Point, frame0: Option<Frame>) -> Result<CurvedPiecewisePath> {
    let m = manifold.dimension();
    if alpha.dimension() != m && !alpha.vertices.is_empty() {
        return Err(Error::DimensionMismatch { expected: m, got: alpha.dimension() });
    }
    manifold.check_point(x0)?;
    let frame = match frame0 {
        Some(f) => check_frame(manifold, x0, f)?,
        None => manifold.canonical_frame(x0),
    };
    let n = alpha.partition.segments();
    let mut path = CurvedPiecewisePath {
        partition: alpha.partition.clone(),
        base: x0.clone(),
        vertices: Vec::with_capacity(n),
        velocities: Vec::with_capacity(n),
        frames: Vec::with_capacity(n + 1),
        reorthonormalizations: 0,
    };
    path.frames.push(frame);
    let mut cur = x0.clone();
    for (d, dt) in alpha.increments().into_iter().zip(alpha.partition.gaps()) {
        let frame = path.frames.last().expect("initial frame");
        let mut w = manifold.zero_tangent();
        for (e, c) in frame.iter().zip(&d) {
            for (wi, ei) in w.0.iter_mut().zip(&e.0) {
                *wi += c * ei;
            }
        }
        let next = manifold.exp(&cur, &w)?;
        let mut moved: Frame = frame.iter().map(|e| manifold.transport(&cur, &w, e)).collect::<Result<_>>()?;
        if frame_gram_residual(&moved) > REORTHONORMALIZE_ABOVE {
            orthonormalize(manifold, &next, &mut moved);
            path.reorthonormalizations += 1;
        }
        path.frames.push(moved);
        path.velocities.push(w.scaled(1.0 / dt));
        path.vertices.push(next.clone());
        cur = next;
    }
    Ok(path)
}

/// Pull each segment velocity back through the frame carried by `γ`.
pub fn antidevelop(gamma: &CurvedPiecewisePath) -> FlatPiecewisePath {
    let m = gamma.frames.first().map_or(0, |f| f.len());
    let mut cur = Coords::from_elem(0.0, m);
    let mut vertices = Vec::with_capacity(gamma.vertices.len());
    for ((v, frame), dt) in gamma.velocities.iter().zip(&gamma.frames).zip(gamma.partition.gaps()) {
        for (c, e) in cur.iter_mut().zip(frame) {
            *c += v.dot(e) * dt;
        }
        vertices.push(cur.clone());
    }
    FlatPiecewisePath { partition: gamma.partition.clone(), vertices }
}

/// `Σ |v_i|² Δt_i`.
pub fn energy_curved(gamma: &CurvedPiecewisePath) -> f64 {
    gamma.velocities.iter().zip(gamma.partition.gaps()).map(|(v, dt)| v.dot(v) * dt).sum()
}

/// Development of a smooth flat path by classical Runge–Kutta on the
/// embedded frame bundle, re-orthonormalizing after every step. Returns the
/// points at `t = j / steps`.
pub fn develop_smooth(
    manifold: &Manifold,
    x0: &Point,
    velocity: &dyn Fn(f64) -> Coords,
    steps: usize,
) -> Result<Vec<Point>> {
    if steps == 0 {
        return Err(Error::InvalidArgument("step count must be positive".into()));
    }
    let h = 1.0 / steps as f64;
    let mut out = Vec::with_capacity(steps);
    match manifold {
        Manifold::Sphere2 { radius } => {
            let r2 = radius * radius;
            // state: position and two frame vectors in ℝ³
            let frame = manifold.canonical_frame(x0);
            let mut state = [0.0; 9];
            state[..3].copy_from_slice(&x0.0);
            state[3..6].copy_from_slice(&frame[0].0);
            state[6..].copy_from_slice(&frame[1].0);
            let rhs = |t: f64, s: &[f64; 9]| -> [f64; 9] {
                let a = velocity(t);
                let mut g = [0.0; 3];
                for i in 0..3 {
                    g[i] = a[0] * s[3 + i] + a[1] * s[6 + i];
                }
                let mut d = [0.0; 9];
                d[..3].copy_from_slice(&g);
                for k in 0..2 {
                    let e = &s[3 + 3 * k..6 + 3 * k];
                    let c = dot(e, &g) / r2;
                    for i in 0..3 {
                        d[3 + 3 * k + i] = -c * s[i];
                    }
                }
                d
            };
            for j in 0..steps {
                let t = j as f64 * h;
                state = rk4_step(&rhs, t, &state, h);
                let n = dot(&state[..3], &state[..3]).sqrt();
                let x = Point(state[..3].iter().map(|c| c * radius / n).collect());
                let mut frame: Frame = vec![
                    TangentVector(Coords::from_slice(&state[3..6])),
                    TangentVector(Coords::from_slice(&state[6..])),
                ];
                orthonormalize(manifold, &x, &mut frame);
                state[..3].copy_from_slice(&x.0);
                state[3..6].copy_from_slice(&frame[0].0);
                state[6..].copy_from_slice(&frame[1].0);
                out.push(x);
            }
        }
        _ => {
            // flat: the frame is constant and the path is exp(x₀, α(t))
            let m = manifold.dimension();
            let mut a = Coords::from_elem(0.0, m);
            for j in 0..steps {
                let t = j as f64 * h;
                let k1 = velocity(t);
                let k2 = velocity(t + 0.5 * h);
                let k4 = velocity(t + h);
                for i in 0..m {
                    a[i] += h / 6.0 * (k1[i] + 4.0 * k2[i] + k4[i]);
                }
                out.push(manifold.exp(x0, &TangentVector(a.clone()))?);
            }
        }
    }
    Ok(out)
}

fn rk4_step<const N: usize>(f: &dyn Fn(f64, &[f64; N]) -> [f64; N], t: f64, y: &[f64; N], h: f64) -> [f64; N] {
    let add = |a: &[f64; N], b: &[f64; N], s: f64| -> [f64; N] {
        let mut o = *a;
        for i in 0..N {
            o[i] += s * b[i];
        }
        o
    };
    let k1 = f(t, y);
    let k2 = f(t + 0.5 * h, &add(y, &k1, 0.5 * h));
    let k3 = f(t + 0.5 * h, &add(y, &k2, 0.5 * h));
    let k4 = f(t + h, &add(y, &k3, h));
    let mut o = *y;
    for i in 0..N {
        o[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    }
    o
}

/// Draws developed Gaussian paths from a fixed base point and frame.
#[derive(Clone, Debug)]
pub struct GeometricMeasureSampler {
    pub manifold: Manifold,
    pub base: Point,
    pub partition: Arc<Partition>,
    pub frame0: Frame,
}

impl GeometricMeasureSampler {
    pub fn new(manifold: Manifold, base: Point, partition: Arc<Partition>) -> Result<Self> {
        manifold.check_point(&base)?;
        let frame0 = manifold.canonical_frame(&base);
        Ok(GeometricMeasureSampler { manifold, base, partition, frame0 })
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<CurvedPiecewisePath> {
        let alpha = sample_lambda0(&self.partition, self.manifold.dimension(), rng);
        develop(&self.manifold, &alpha, &self.base, Some(self.frame0.clone()))
    }
}

pub type FlatFunctional = Arc<dyn Fn(&FlatPiecewisePath) -> Result<f64> + Send + Sync>;
pub type CurvedFunctional = Arc<dyn Fn(&CurvedPiecewisePath) -> Result<f64> + Send + Sync>;

/// Change of variables between flat path coordinates and developed paths.
#[derive(Clone, Debug)]
pub struct Transfer {
    pub manifold: Manifold,
    pub base: Point,
    pub frame0: Frame,
}

impl Transfer {
    pub fn new(manifold: Manifold, base: Point) -> Result<Self> {
        manifold.check_point(&base)?;
        let frame0 = manifold.canonical_frame(&base);
        Ok(Transfer { manifold, base, frame0 })
    }

    /// `g ↦ g ∘ develop`.
    pub fn to_flat(&self, g: CurvedFunctional) -> FlatFunctional {
        let t = self.clone();
        Arc::new(move |alpha: &FlatPiecewisePath| g(&develop(&t.manifold, alpha, &t.base, Some(t.frame0.clone()))?))
    }

    /// `f ↦ f ∘ antidevelop`.
    pub fn to_curved(&self, f: FlatFunctional) -> CurvedFunctional {
        Arc::new(move |gamma: &CurvedPiecewisePath| f(&antidevelop(gamma)))
    }

    /// A path functional restricted to developed paths.
    pub fn path_functional(&self, f: PathFunctional) -> Result<CurvedFunctional> {
        f.validate(&self.manifold)?;
        let m = self.manifold.clone();
        Ok(Arc::new(move |gamma: &CurvedPiecewisePath| Ok(f.eval(&m, &gamma.polyline()))))
    }
}

/// `∫ F dν_T` for one partition by sampling developed paths.
pub fn geometric_expectation(
    sampler: &GeometricMeasureSampler,
    f: &PathFunctional,
    budget: &McBudget,
    stream: StreamId,
) -> Result<EstimateReport> {
    f.validate(&sampler.manifold)?;
    let start = Instant::now();
    let outcome = monte_carlo(budget.samples, budget.seed, stream, &budget.exec, |rng: &mut SampleRng| {
        let gamma = sampler.sample(rng)?;
        Ok(Some(f.eval(&sampler.manifold, &gamma.polyline())))
    })?;
    EstimateReport::from_outcome(
        &f.label(),
        &outcome,
        &sampler.partition,
        &sampler.manifold,
        Scheme::Geometric,
        budget.seed,
        &budget.exec,
        start.elapsed().as_secs_f64(),
    )
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SchemeChoice {
    Geometric,
    Cylinder,
    Both,
}

/// Geometric minus cylinder estimate at one level.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CrossCheck {
    pub n: usize,
    pub difference: f64,
    pub joint_stderr: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeometricTable {
    pub geometric: Option<LimitTable>,
    pub cylinder: Option<LimitTable>,
    pub cross_check: Vec<CrossCheck>,
}

/// Per-level estimates of `∫ F dν_T` along the chain, optionally next to the
/// heat-kernel cylinder estimates of the same functional.
pub fn geometric_limit_estimate(
    space: &WienerSpace,
    f: &PathFunctional,
    chain: &RefinementChain,
    budgets: &[McBudget],
    scheme: SchemeChoice,
) -> Result<GeometricTable> {
    if budgets.len() != 1 && budgets.len() != chain.len() {
        return Err(Error::DimensionMismatch { expected: chain.len(), got: budgets.len() });
    }
    let budget = |k: usize| if budgets.len() == 1 { &budgets[0] } else { &budgets[k] };
    let geometric = if scheme != SchemeChoice::Cylinder {
        let mut levels = Vec::with_capacity(chain.len());
        for (k, p) in chain.levels().iter().enumerate() {
            let sampler = GeometricMeasureSampler::new(space.manifold().clone(), space.base.clone(), p.clone())?;
            levels.push(geometric_expectation(&sampler, f, budget(k), StreamId::new(GEOMETRIC_STREAM, k as u16))?);
        }
        Some(LimitTable::from_levels(levels)?)
    } else {
        None
    };
    let cylinder = if scheme != SchemeChoice::Geometric {
        let family = discretize_family(space.manifold(), f, chain)?;
        let mut levels = Vec::with_capacity(chain.len());
        for (k, (member, p)) in family.members.iter().zip(chain.levels()).enumerate() {
            let measure = space.measure(p.clone())?;
            levels.push(expectation_mc_stream(&measure, member, budget(k), StreamId::new(crate::limit::LIMIT_STREAM, k as u16))?);
        }
        Some(LimitTable::from_levels(levels)?)
    } else {
        None
    };
    let cross_check = match (&geometric, &cylinder) {
        (Some(g), Some(c)) => g
            .levels
            .iter()
            .zip(&c.levels)
            .map(|(a, b)| CrossCheck {
                n: a.n,
                difference: a.estimate - b.estimate,
                joint_stderr: joint_stderr(a.stderr, b.stderr),
            })
            .collect(),
        _ => Vec::new(),
    };
    Ok(GeometricTable { geometric, cylinder, cross_check })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exec::stream_rng;
    use rand::SeedableRng;
    use smallvec::smallvec;

    fn flat(times: Vec<f64>, vertices: Vec<Vec<f64>>) -> FlatPiecewisePath {
        FlatPiecewisePath::new(
            Partition::new(times).unwrap().shared(),
            vertices.into_iter().map(|v| Coords::from_vec(v)).collect(),
        )
        .unwrap()
    }

    #[test]
    fn unit_segment_energy_and_scaling() {
        let a = flat(vec![0.0, 1.0], vec![vec![1.0]]);
        assert_eq!(energy_flat(&a), 1.0);
        let b = flat(vec![0.0, 0.3, 1.0], vec![vec![0.2, -1.0], vec![0.5, 0.4]]);
        assert!((energy_flat(&b.scaled(3.0)) - 9.0 * energy_flat(&b)).abs() < 1e-12);
    }

    #[test]
    fn flat_energy_matches_dense_integral() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(2);
        let p = Partition::new(vec![0.0, 0.1, 0.35, 0.4, 0.8, 1.0]).unwrap().shared();
        let a = sample_lambda0(&p, 2, &mut rng);
        // midpoint rule on a grid refining every breakpoint is exact for piecewise constant |α′|²
        let steps = 10_000;
        let h = 1.0 / steps as f64;
        let dense: f64 = (0..steps)
            .map(|j| {
                let t = (j as f64 + 0.5) * h;
                let (lo, hi) = (a.at(t - 0.25 * h), a.at(t + 0.25 * h));
                lo.iter().zip(&hi).map(|(x, y)| ((y - x) / (0.5 * h)).powi(2)).sum::<f64>() * h
            })
            .sum();
        assert!((dense - energy_flat(&a)).abs() < 1e-10 * (1.0 + dense));
    }

    #[test]
    fn gaussian_peak_and_log_identity() {
        let a = flat(vec![0.0, 1.0], vec![vec![0.0]]);
        assert!((lambda0_density(&a) - 0.398_942_280_401_432_7).abs() < 1e-15);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let p = Partition::uniform(7).unwrap().shared();
        let b = sample_lambda0(&p, 3, &mut rng);
        let residual = lambda0_log_density(&b) + 0.5 * energy_flat(&b) + log_normalizer(&p, 3);
        assert!(residual.abs() < 1e-12);
    }

    #[test]
    fn lambda0_increment_moments() {
        let p = Partition::new(vec![0.0, 0.2, 1.0]).unwrap().shared();
        let mut rng = stream_rng(1, StreamId::new(99, 0), 0);
        let n = 20_000;
        let mut sums = [0.0; 2];
        let mut sq = [0.0; 2];
        for _ in 0..n {
            let a = sample_lambda0(&p, 1, &mut rng);
            for (k, d) in a.increments().iter().enumerate() {
                sums[k] += d[0];
                sq[k] += d[0] * d[0];
            }
        }
        for (k, dt) in p.gaps().enumerate() {
            let mean = sums[k] / n as f64;
            let var = sq[k] / n as f64 - mean * mean;
            assert!(mean.abs() < 4.0 * (dt / n as f64).sqrt());
            // variance of the sample variance of a Gaussian is 2σ⁴/n
            assert!((var - dt).abs() < 4.0 * dt * (2.0 / n as f64).sqrt());
        }
    }

    #[test]
    fn zero_path_develops_to_constant() {
        let m = Manifold::sphere(1.0).unwrap();
        let p = Partition::uniform(4).unwrap().shared();
        let g = develop(&m, &FlatPiecewisePath::zero(p, 2), &m.default_base(), None).unwrap();
        assert!(g.vertices.iter().all(|v| *v == m.default_base()));
        assert!(antidevelop(&g).vertices.iter().all(|v| v.iter().all(|&c| c == 0.0)));
    }

    #[test]
    fn circle_development_wraps() {
        let m = Manifold::circle(1.0).unwrap();
        let x0 = m.point(&[0.5]).unwrap();
        let a = flat(vec![0.0, 0.5, 1.0], vec![vec![3.0], vec![7.5]]);
        let g = develop(&m, &a, &x0, None).unwrap();
        for (v, al) in g.vertices.iter().zip(&a.vertices) {
            let expected = (0.5 + al[0]).rem_euclid(2.0 * PI);
            assert!((v.0[0] - expected).abs() < 1e-12);
        }
    }

    #[test]
    fn half_circumference_from_north_reaches_south() {
        let m = Manifold::sphere(1.0).unwrap();
        let a = flat(vec![0.0, 1.0], vec![vec![PI, 0.0]]);
        let g = develop(&m, &a, &m.default_base(), None).unwrap();
        let end = g.endpoint();
        assert!((end.0[2] + 1.0).abs() < 1e-15 && end.0[0].abs() < 1e-15 && end.0[1].abs() < 1e-15);
    }

    #[test]
    fn frames_stay_orthonormal_over_long_paths() {
        let m = Manifold::sphere(1.0).unwrap();
        let p = Partition::uniform(1024).unwrap().shared();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(13);
        let a = sample_lambda0(&p, 2, &mut rng).scaled(4.0);
        let g = develop(&m, &a, &m.default_base(), None).unwrap();
        assert_eq!(g.reorthonormalizations, 0);
        let last = g.frames.last().unwrap();
        assert!(frame_gram_residual(last) < 1e-9);
        let tangency = last.iter().map(|e| dot(&e.0, &g.endpoint().0).abs()).fold(0.0, f64::max);
        assert!(tangency < 1e-9);
    }

    #[test]
    fn develop_and_antidevelop_invert_each_other() {
        let m = Manifold::sphere(1.5).unwrap();
        let p = Partition::uniform(16).unwrap().shared();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(21);
        let a = sample_lambda0(&p, 2, &mut rng);
        let g = develop(&m, &a, &m.default_base(), None).unwrap();
        let back = antidevelop(&g);
        let err = a
            .vertices
            .iter()
            .zip(&back.vertices)
            .flat_map(|(x, y)| x.iter().zip(y).map(|(u, v)| (u - v).abs()))
            .fold(0.0, f64::max);
        assert!(err < 1e-12);
        // the other direction, from vertices joined by minimizing geodesics
        let pts: Vec<Point> = (0..16).map(|_| m.random_point(&mut rng)).collect();
        let Ok(gamma) = CurvedPiecewisePath::from_vertices(&m, p, m.default_base(), pts, None) else { return };
        let again = develop(&m, &antidevelop(&gamma), &m.default_base(), None).unwrap();
        for (x, y) in gamma.vertices.iter().zip(&again.vertices) {
            assert!(m.distance(x, y) < 1e-9);
        }
        assert!((energy_curved(&gamma) - energy_flat(&antidevelop(&gamma))).abs() < 1e-10 * (1.0 + energy_curved(&gamma)));
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let m = Manifold::sphere(1.0).unwrap();
        let a = flat(vec![0.0, 1.0], vec![vec![1.0]]);
        assert!(matches!(develop(&m, &a, &m.default_base(), None), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn runge_kutta_agrees_with_segment_development() {
        let m = Manifold::sphere(1.0).unwrap();
        let vel = |t: f64| -> Coords { smallvec![(3.0 * t).cos() * 2.0, 1.0 + t] };
        let x0 = m.default_base();
        let smooth = develop_smooth(&m, &x0, &vel, 2000).unwrap();
        // fine piecewise-linear interpolation of the same flat path
        let n = 4000;
        let p = Partition::uniform(n).unwrap().shared();
        let alpha_at = |t: f64| -> Coords { smallvec![2.0 * (3.0 * t).sin() / 3.0, t + 0.5 * t * t] };
        let a = FlatPiecewisePath::new(p, (1..=n).map(|i| alpha_at(i as f64 / n as f64)).collect()).unwrap();
        let g = develop(&m, &a, &x0, None).unwrap();
        assert!(m.distance(smooth.last().unwrap(), g.endpoint()) < 1e-6);
        let flat_m = Manifold::flat_torus(vec![1.0, 2.0]).unwrap();
        let xf = flat_m.default_base();
        let end = develop_smooth(&flat_m, &xf, &vel, 100).unwrap();
        let direct = flat_m.exp(&xf, &TangentVector(alpha_at(1.0))).unwrap();
        assert!(flat_m.distance(end.last().unwrap(), &direct) < 1e-9);
    }

    #[test]
    fn transfer_round_trip_and_energy() {
        let m = Manifold::sphere(1.0).unwrap();
        let t = Transfer::new(m.clone(), m.default_base()).unwrap();
        let energy: CurvedFunctional = Arc::new(|g: &CurvedPiecewisePath| Ok(energy_curved(g)));
        let as_flat = t.to_flat(energy.clone());
        let back = t.to_curved(as_flat.clone());
        let p = Partition::uniform(8).unwrap().shared();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let a = sample_lambda0(&p, 2, &mut rng);
        assert!((as_flat(&a).unwrap() - energy_flat(&a)).abs() < 1e-10 * (1.0 + energy_flat(&a)));
        let g = develop(&m, &a, &m.default_base(), None).unwrap();
        assert!((back(&g).unwrap() - energy(&g).unwrap()).abs() < 1e-9);
        let c = t.to_curved(Arc::new(|_: &FlatPiecewisePath| Ok(2.0)));
        assert_eq!(c(&g).unwrap(), 2.0);
    }

    #[test]
    fn sampler_is_deterministic() {
        let m = Manifold::sphere(1.0).unwrap();
        let s = GeometricMeasureSampler::new(m.clone(), m.default_base(), Partition::uniform(8).unwrap().shared()).unwrap();
        let a = s.sample(&mut stream_rng(4, StreamId::new(7, 0), 0)).unwrap();
        let b = s.sample(&mut stream_rng(4, StreamId::new(7, 0), 0)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn frame_validation() {
        let m = Manifold::sphere(1.0).unwrap();
        let bad = vec![TangentVector(smallvec![1.0, 0.0, 0.0]), TangentVector(smallvec![1.0, 0.0, 0.0])];
        let a = FlatPiecewisePath::zero(Partition::uniform(1).unwrap().shared(), 2);
        assert!(develop(&m, &a, &m.default_base(), Some(bad)).is_err());
    }
}
