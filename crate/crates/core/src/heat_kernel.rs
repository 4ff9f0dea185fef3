//! Heat kernels `p_t(x, y)` of the supported manifolds.
//!
//! All kernels are transition densities of Brownian motion with generator
//! `Δ/2`, so the flat kernel is `(2πt)^{-m/2} exp(-|x-y|²/(2t))`. Readers
//! working with the generator `Δ` should evaluate at time `2t`.
//!
//! * circle: wrapped Gaussian image sum for `t < r²`, Fourier series otherwise;
//! * flat torus: product of circle kernels;
//! * sphere: Legendre series truncated by an explicit tail bound;
//! * Euclidean space: the Gaussian.

use std::f64::consts::PI;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::manifold::{dot, wrap_signed, Manifold, Point, TangentVector};
use crate::quadrature::{gauss_legendre, periodic_nodes};

pub const DEFAULT_TOLERANCE: f64 = 1e-12;

/// Maximum Legendre degree of the sphere series.
pub const SPHERE_L_MAX: usize = 256;

/// Points in the envelope scan of the sphere polar-angle sampler.
pub const ENVELOPE_SCAN_POINTS: usize = 512;

/// Safety factor applied to the scanned envelope maximum.
pub const ENVELOPE_FACTOR: f64 = 1.1;

/// Envelope rebuilds tolerated within a single draw.
pub const MAX_ENVELOPE_REBUILDS: usize = 3;

/// Below this `t/r²` the polar angle is proposed from a Rayleigh law.
const RAYLEIGH_REGIME: f64 = 1.0;

/// Proposal support is cut where the Gaussian tail mass is `exp(-30)`.
const POLAR_TAIL_EXPONENT: f64 = 30.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelMethod {
    ImageSum,
    SpectralSum,
    Gaussian,
    Product,
}

/// Node counts used by the normalization and semigroup checks.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuadratureRule {
    /// Trapezoid nodes per circle factor.
    pub circle_nodes: usize,
    /// Gauss–Legendre nodes in `cos θ` on the sphere.
    pub sphere_polar: usize,
    /// Uniform azimuth nodes on the sphere.
    pub sphere_azimuth: usize,
    /// Trapezoid nodes per coordinate for Euclidean convolutions.
    pub line_nodes: usize,
}

impl Default for QuadratureRule {
    fn default() -> Self {
        QuadratureRule { circle_nodes: 2048, sphere_polar: 128, sphere_azimuth: 128, line_nodes: 4096 }
    }
}

#[derive(Clone, Debug)]
pub struct KernelEvaluator {
    manifold: Manifold,
    tolerance: f64,
    clips: Arc<AtomicU64>,
}

impl KernelEvaluator {
    pub fn new(manifold: Manifold) -> Self {
        KernelEvaluator { manifold, tolerance: DEFAULT_TOLERANCE, clips: Arc::new(AtomicU64::new(0)) }
    }

    pub fn with_tolerance(mut self, tolerance: f64) -> Self {
        self.tolerance = tolerance;
        self
    }

    pub fn manifold(&self) -> &Manifold {
        &self.manifold
    }

    pub fn tolerance(&self) -> f64 {
        self.tolerance
    }

    /// Number of negative undershoots below `-tolerance` clipped so far.
    pub fn clip_events(&self) -> u64 {
        self.clips.load(Ordering::Relaxed)
    }

    pub fn method(&self, t: f64) -> KernelMethod {
        match &self.manifold {
            Manifold::Circle { radius } => {
                if t < radius * radius {
                    KernelMethod::ImageSum
                } else {
                    KernelMethod::SpectralSum
                }
            }
            Manifold::FlatTorus { .. } => KernelMethod::Product,
            Manifold::Sphere2 { .. } => KernelMethod::SpectralSum,
            Manifold::Euclidean { .. } => KernelMethod::Gaussian,
        }
    }

    pub fn kernel(&self, t: f64, x: &Point, y: &Point) -> Result<f64> {
        check_time(t)?;
        self.manifold.check_point(x)?;
        self.manifold.check_point(y)?;
        let raw = match &self.manifold {
            Manifold::Circle { radius } => circle_kernel(t, y.0[0] - x.0[0], *radius, self.tolerance),
            Manifold::FlatTorus { radii } => x
                .0
                .iter()
                .zip(&y.0)
                .zip(radii)
                .map(|((a, b), &r)| self.clip(circle_kernel(t, b - a, r, self.tolerance)))
                .product(),
            Manifold::Sphere2 { radius } => {
                let c = (dot(&x.0, &y.0) / (radius * radius)).clamp(-1.0, 1.0);
                sphere_kernel(t, c, *radius, self.tolerance)?
            }
            Manifold::Euclidean { dimension } => {
                let d2: f64 = x.0.iter().zip(&y.0).map(|(a, b)| (a - b).powi(2)).sum();
                (2.0 * PI * t).powf(-(*dimension as f64) / 2.0) * (-d2 / (2.0 * t)).exp()
            }
        };
        Ok(self.clip(raw))
    }

    fn clip(&self, v: f64) -> f64 {
        if v >= 0.0 {
            return v;
        }
        if v < -self.tolerance {
            self.clips.fetch_add(1, Ordering::Relaxed);
            log::warn!("heat kernel series undershoot {v:e} clipped to 0");
        }
        0.0
    }

    pub fn normalization_check(&self, t: f64, x: &Point) -> Result<f64> {
        self.normalization_check_with(t, x, &QuadratureRule::default())
    }

    /// `|∫ p_t(x, y) dμ(y) - 1|` by quadrature.
    pub fn normalization_check_with(&self, t: f64, x: &Point, rule: &QuadratureRule) -> Result<f64> {
        check_time(t)?;
        self.manifold.check_point(x)?;
        let total = match &self.manifold {
            Manifold::Circle { radius } => self.circle_integral(*radius, rule.circle_nodes, |z| {
                Ok(self.clip(circle_kernel(t, z - x.0[0], *radius, self.tolerance)))
            })?,
            Manifold::FlatTorus { radii } => {
                let mut prod = 1.0;
                for (k, &r) in radii.iter().enumerate() {
                    prod *= self.circle_integral(r, rule.circle_nodes, |z| {
                        Ok(self.clip(circle_kernel(t, z - x.0[k], r, self.tolerance)))
                    })?;
                }
                prod
            }
            Manifold::Sphere2 { .. } => self.sphere_integral(rule, |z| self.kernel(t, x, z))?,
            // Gaussian normalization is exact
            Manifold::Euclidean { .. } => 1.0,
        };
        Ok((total - 1.0).abs())
    }

    pub fn semigroup_check(&self, s: f64, t: f64, x: &Point, y: &Point) -> Result<f64> {
        self.semigroup_check_with(s, t, x, y, &QuadratureRule::default())
    }

    /// `|∫ p_s(x, z) p_t(z, y) dμ(z) - p_{s+t}(x, y)|` by quadrature.
    pub fn semigroup_check_with(&self, s: f64, t: f64, x: &Point, y: &Point, rule: &QuadratureRule) -> Result<f64> {
        check_time(s)?;
        check_time(t)?;
        self.manifold.check_point(x)?;
        self.manifold.check_point(y)?;
        let tol = self.tolerance;
        let convolved = match &self.manifold {
            Manifold::Circle { radius } => self.circle_integral(*radius, rule.circle_nodes, |z| {
                Ok(circle_kernel(s, z - x.0[0], *radius, tol) * circle_kernel(t, y.0[0] - z, *radius, tol))
            })?,
            Manifold::FlatTorus { radii } => {
                let mut prod = 1.0;
                for (k, &r) in radii.iter().enumerate() {
                    prod *= self.circle_integral(r, rule.circle_nodes, |z| {
                        Ok(circle_kernel(s, z - x.0[k], r, tol) * circle_kernel(t, y.0[k] - z, r, tol))
                    })?;
                }
                prod
            }
            Manifold::Sphere2 { .. } => {
                self.sphere_integral(rule, |z| Ok(self.kernel(s, x, z)? * self.kernel(t, z, y)?))?
            }
            Manifold::Euclidean { .. } => {
                let mut prod = 1.0;
                for (a, b) in x.0.iter().zip(&y.0) {
                    prod *= line_convolution(s, t, *a, *b, rule.line_nodes);
                }
                prod
            }
        };
        let direct = self.kernel(s + t, x, y)?;
        Ok((convolved - direct).abs())
    }

    fn circle_integral<F>(&self, radius: f64, nodes: usize, f: F) -> Result<f64>
    where
        F: Fn(f64) -> Result<f64>,
    {
        let h = 2.0 * PI * radius / nodes as f64;
        let mut acc = 0.0;
        for z in periodic_nodes(0.0, 2.0 * PI * radius, nodes) {
            acc += f(z)?;
        }
        Ok(acc * h)
    }

    /// Gauss–Legendre in `cos θ` times uniform azimuth, global polar coordinates.
    fn sphere_integral<F>(&self, rule: &QuadratureRule, f: F) -> Result<f64>
    where
        F: Fn(&Point) -> Result<f64>,
    {
        let r = self.manifold.scale();
        let (us, ws) = gauss_legendre(rule.sphere_polar);
        let dphi = 2.0 * PI / rule.sphere_azimuth as f64;
        let mut acc = 0.0;
        for (u, w) in us.iter().zip(&ws) {
            let rho = (1.0 - u * u).max(0.0).sqrt();
            let mut ring = 0.0;
            for phi in periodic_nodes(0.0, 2.0 * PI, rule.sphere_azimuth) {
                let z = Point([r * rho * phi.cos(), r * rho * phi.sin(), r * u].into_iter().collect());
                ring += f(&z)?;
            }
            acc += w * ring * dphi;
        }
        Ok(acc * r * r)
    }

    /// Prepared sampler for transitions over a time step `t`.
    pub fn transition_sampler(&self, t: f64) -> Result<TransitionSampler> {
        check_time(t)?;
        Ok(match &self.manifold {
            Manifold::Sphere2 { radius } => TransitionSampler::Sphere {
                manifold: self.manifold.clone(),
                polar: PolarSampler::new(t / (radius * radius), self.tolerance * 2.0 * PI * radius * radius)?,
            },
            m => TransitionSampler::Flat { manifold: m.clone(), sd: t.sqrt() },
        })
    }

    /// Draw `y ~ p_t(x, ·) dμ`.
    pub fn sample_transition<R: Rng + ?Sized>(&self, t: f64, x: &Point, rng: &mut R) -> Result<Point> {
        self.transition_sampler(t)?.sample(x, rng)
    }
}

fn check_time(t: f64) -> Result<()> {
    if t > 0.0 && t.is_finite() {
        Ok(())
    } else {
        Err(Error::NonPositiveTime(t))
    }
}

/// Circle kernel for a signed coordinate difference `d`.
pub fn circle_kernel(t: f64, d: f64, radius: f64, tolerance: f64) -> f64 {
    let d = wrap_signed(d, radius);
    if t < radius * radius {
        circle_image_sum(t, d, radius, tolerance)
    } else {
        circle_spectral_sum(t, d, radius, tolerance)
    }
}

/// `Σ_k (2πt)^{-1/2} exp(-(d + 2πrk)²/(2t))`, summed outward until both
/// sides fall below `tolerance · 1e-3`.
pub fn circle_image_sum(t: f64, d: f64, radius: f64, tolerance: f64) -> f64 {
    let c = 2.0 * PI * radius;
    let norm = (2.0 * PI * t).sqrt().recip();
    let term = |k: f64| norm * (-(d + c * k).powi(2) / (2.0 * t)).exp();
    let mut sum = term(0.0);
    let cutoff = tolerance * 1e-3;
    let mut k = 1.0;
    loop {
        let a = term(k);
        let b = term(-k);
        sum += a + b;
        // beyond |d + ck| > |d| terms decrease monotonically
        if a < cutoff && b < cutoff && c * k > d.abs() {
            break;
        }
        k += 1.0;
    }
    sum
}

/// `(1/(2πr)) (1 + 2 Σ_{n≥1} exp(-n² t/(2r²)) cos(n d / r))`.
pub fn circle_spectral_sum(t: f64, d: f64, radius: f64, tolerance: f64) -> f64 {
    let c = 2.0 * PI * radius;
    let mut sum = 1.0 / c;
    let cutoff = tolerance * 1e-3;
    let mut n = 1.0_f64;
    loop {
        let decay = (-n * n * t / (2.0 * radius * radius)).exp();
        sum += 2.0 / c * decay * (n * d / radius).cos();
        if 2.0 / c * decay < cutoff {
            break;
        }
        n += 1.0;
    }
    sum
}

/// Truncated Legendre coefficients `c_l = (2l+1)/(4πr²) exp(-l(l+1)t/(2r²))`.
#[derive(Clone, Debug, PartialEq)]
pub struct SphereSeries {
    coefficients: Vec<f64>,
}

impl SphereSeries {
    pub fn new(t: f64, radius: f64, tolerance: f64) -> Result<Self> {
        check_time(t)?;
        let tau = t / (radius * radius);
        let area = 4.0 * PI * radius * radius;
        let mut coefficients = Vec::new();
        for l in 0..=SPHERE_L_MAX {
            let lf = l as f64;
            coefficients.push((2.0 * lf + 1.0) / area * (-lf * (lf + 1.0) * tau / 2.0).exp());
            let bound = (2.0 * lf + 3.0) / area * (-(lf + 1.0) * (lf + 2.0) * tau / 2.0).exp()
                / (1.0 - (-(lf + 2.0) * tau).exp());
            if bound < tolerance {
                return Ok(SphereSeries { coefficients });
            }
            if l == SPHERE_L_MAX {
                return Err(Error::TruncationCap { t, cap: SPHERE_L_MAX, bound, tolerance });
            }
        }
        unreachable!()
    }

    pub fn degree(&self) -> usize {
        self.coefficients.len() - 1
    }

    /// `Σ c_l P_l(u)` by the three-term recurrence.
    pub fn eval(&self, u: f64) -> f64 {
        let mut sum = self.coefficients[0];
        if self.coefficients.len() == 1 {
            return sum;
        }
        let mut p0 = 1.0;
        let mut p1 = u;
        sum += self.coefficients[1] * p1;
        for (l, c) in self.coefficients.iter().enumerate().skip(2) {
            let lf = l as f64;
            let p2 = ((2.0 * lf - 1.0) * u * p1 - (lf - 1.0) * p0) / lf;
            sum += c * p2;
            p0 = p1;
            p1 = p2;
        }
        sum
    }
}

/// Sphere kernel as a function of the cosine of the geodesic angle.
pub fn sphere_kernel(t: f64, cos_angle: f64, radius: f64, tolerance: f64) -> Result<f64> {
    Ok(SphereSeries::new(t, radius, tolerance)?.eval(cos_angle))
}

fn line_convolution(s: f64, t: f64, a: f64, b: f64, nodes: usize) -> f64 {
    let center = 0.5 * (a + b);
    let half = 0.5 * (a - b).abs() + 12.0 * s.max(t).sqrt();
    let h = 2.0 * half / nodes as f64;
    let g = |v: f64, d: f64| (2.0 * PI * v).sqrt().recip() * (-d * d / (2.0 * v)).exp();
    let mut acc = 0.0;
    for j in 0..=nodes {
        let z = center - half + j as f64 * h;
        let w = if j == 0 || j == nodes { 0.5 } else { 1.0 };
        acc += w * g(s, z - a) * g(t, b - z);
    }
    acc * h
}

#[derive(Clone, Debug, PartialEq)]
enum Proposal {
    UniformCos,
    Rayleigh { tau: f64, theta_max: f64, mass: f64 },
}

/// Rejection sampler for the geodesic angle of a sphere transition.
///
/// The target density of `u = cos θ` is `h(u) = 2πr² p_t(u)` on `[-1, 1]`.
/// For `t/r² ≥ 1` the proposal is uniform in `u`; for shorter steps it is a
/// Rayleigh law in `θ` truncated to `[0, θ_max]`, which keeps the acceptance
/// rate bounded as the step shrinks. The envelope is the largest target to
/// proposal ratio on a 512-point scan, inflated by 10%.
#[derive(Clone, Debug, PartialEq)]
pub struct PolarSampler {
    series: Arc<SphereSeries>,
    proposal: Proposal,
    envelope: f64,
}

impl PolarSampler {
    /// `tau = t / r²`; `tolerance` is in units of the `u`-density.
    pub fn new(tau: f64, tolerance: f64) -> Result<Self> {
        check_time(tau)?;
        // unit sphere series, rescaled to the u-density
        let unit = SphereSeries::new(tau, 1.0, tolerance / (2.0 * PI))?;
        let series = SphereSeries { coefficients: unit.coefficients.iter().map(|c| c * 2.0 * PI).collect() };
        let proposal = if tau >= RAYLEIGH_REGIME {
            Proposal::UniformCos
        } else {
            let theta_max = (2.0 * POLAR_TAIL_EXPONENT * tau).sqrt().min(PI);
            let mass = -(-theta_max * theta_max / (2.0 * tau)).exp_m1();
            Proposal::Rayleigh { tau, theta_max, mass }
        };
        let mut sampler = PolarSampler { series: Arc::new(series), proposal, envelope: 0.0 };
        sampler.envelope = ENVELOPE_FACTOR * sampler.scan_max(ENVELOPE_SCAN_POINTS);
        Ok(sampler)
    }

    pub fn envelope(&self) -> f64 {
        self.envelope
    }

    /// `u`-density of the target.
    pub fn density(&self, u: f64) -> f64 {
        self.series.eval(u)
    }

    fn ratio(&self, theta: f64) -> f64 {
        match &self.proposal {
            Proposal::UniformCos => self.series.eval(theta.cos()),
            Proposal::Rayleigh { tau, mass, .. } => {
                let sinc = if theta < 1e-8 { 1.0 } else { theta.sin() / theta };
                self.series.eval(theta.cos()) * sinc * (theta * theta / (2.0 * tau)).exp() * tau * mass
            }
        }
    }

    fn scan_max(&self, points: usize) -> f64 {
        let mut best = 0.0_f64;
        for j in 0..points {
            let f = j as f64 / (points - 1) as f64;
            let theta = match &self.proposal {
                Proposal::UniformCos => (1.0 - 2.0 * f).acos(),
                Proposal::Rayleigh { theta_max, .. } => f * theta_max,
            };
            best = best.max(self.ratio(theta));
        }
        best
    }

    fn propose<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match &self.proposal {
            Proposal::UniformCos => (2.0 * rng.random::<f64>() - 1.0).acos(),
            Proposal::Rayleigh { tau, mass, .. } => {
                let v: f64 = rng.random();
                (-2.0 * tau * (-v * mass).ln_1p()).sqrt()
            }
        }
    }

    /// Geodesic angle θ of one transition.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<f64> {
        let mut envelope = self.envelope;
        let mut rebuilds = 0;
        loop {
            let theta = self.propose(rng);
            let w = self.ratio(theta);
            if w > envelope {
                rebuilds += 1;
                if rebuilds > MAX_ENVELOPE_REBUILDS {
                    return Err(Error::EnvelopeExhausted { rebuilds, ratio: w, bound: envelope });
                }
                log::warn!("rejection envelope {envelope} exceeded by ratio {w}; rebuilding");
                envelope = ENVELOPE_FACTOR * w.max(self.scan_max(4 * ENVELOPE_SCAN_POINTS));
                continue;
            }
            if rng.random::<f64>() * envelope < w {
                return Ok(theta);
            }
        }
    }
}

#[derive(Clone, Debug)]
pub enum TransitionSampler {
    /// Gaussian increment per coordinate, wrapped on circle factors.
    Flat { manifold: Manifold, sd: f64 },
    /// Rejection-sampled geodesic angle, uniform direction.
    Sphere { manifold: Manifold, polar: PolarSampler },
}

impl TransitionSampler {
    pub fn sample<R: Rng + ?Sized>(&self, x: &Point, rng: &mut R) -> Result<Point> {
        match self {
            TransitionSampler::Flat { manifold, sd } => {
                let v = TangentVector((0..manifold.dimension()).map(|_| sd * rng.sample::<f64, _>(StandardNormal)).collect());
                manifold.exp(x, &v)
            }
            TransitionSampler::Sphere { manifold, polar } => {
                let theta = polar.sample(rng)?;
                let phi = 2.0 * PI * rng.random::<f64>();
                let frame = manifold.canonical_frame(x);
                let len = theta * manifold.scale();
                let (s, c) = phi.sin_cos();
                let v = TangentVector((0..3).map(|i| len * (c * frame[0].0[i] + s * frame[1].0[i])).collect());
                manifold.exp(x, &v)
            }
        }
    }
}
