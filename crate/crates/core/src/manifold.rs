//! Closed-form Riemannian geometry for the supported manifolds.
//!
//! Every manifold here has exact geodesics and parallel transport:
//!
//! * `Circle { radius }`: coordinate is arc length in `[0, 2πr)`.
//! * `FlatTorus { radii }`: one arc-length coordinate per circle factor.
//! * `Sphere2 { radius }`: points are ambient vectors in ℝ³ with `|x| = r`.
//! * `Euclidean { dimension }`: flat reference space ℝᵐ (not closed).
//!
//! Tangent vectors use intrinsic components (arc-length velocities) on the
//! flat manifolds and tangent ambient vectors on the sphere. In both cases the
//! Riemannian inner product is the Euclidean dot product of the components.
//!
//! Parallel transport on the sphere is the Levi-Civita rotation in the plane
//! spanned by the geodesic direction and the outward normal; the component
//! orthogonal to that plane is left unchanged.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use smallvec::{smallvec, SmallVec};

use crate::error::{Error, Result};

pub type Coords = SmallVec<[f64; 4]>;

/// Tolerance for accepting an ambient vector as lying on the manifold.
pub const EMBED_TOLERANCE: f64 = 1e-8;

/// Relative angular margin below which two points count as antipodal.
const CUT_LOCUS_MARGIN: f64 = 1e-12;

pub const DIFFUSION_CONVENTION: &str = "generator Δ/2";

/// A point on a manifold, stored in the manifold's canonical coordinates.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Point(pub Coords);

/// A tangent vector in the manifold's tangent representation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TangentVector(pub Coords);

/// Orthonormal basis of a tangent space, one vector per intrinsic dimension.
pub type Frame = Vec<TangentVector>;

impl Point {
    pub fn coords(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl TangentVector {
    pub fn zeros(len: usize) -> Self {
        TangentVector(smallvec![0.0; len])
    }

    pub fn components(&self) -> &[f64] {
        &self.0
    }

    pub fn norm(&self) -> f64 {
        dot(&self.0, &self.0).sqrt()
    }

    pub fn dot(&self, other: &TangentVector) -> f64 {
        dot(&self.0, &other.0)
    }

    pub fn scaled(&self, s: f64) -> TangentVector {
        TangentVector(self.0.iter().map(|c| c * s).collect())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Manifold {
    Circle { radius: f64 },
    FlatTorus { radii: Vec<f64> },
    Sphere2 { radius: f64 },
    Euclidean { dimension: usize },
}

/// Geometric primitives consumed by the path-space modules.
///
/// Implemented by [`Manifold`]; user manifolds can implement it to reuse the
/// development and functional code.
pub trait Geometry {
    fn dimension(&self) -> usize;
    fn exp(&self, x: &Point, v: &TangentVector) -> Result<Point>;
    fn log(&self, x: &Point, y: &Point) -> Result<TangentVector>;
    fn transport(&self, x: &Point, v: &TangentVector, w: &TangentVector) -> Result<TangentVector>;
    fn distance(&self, x: &Point, y: &Point) -> f64;
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn cross(a: &[f64], b: &[f64]) -> [f64; 3] {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

/// Signed representative of `d` modulo the circumference, in `(-πr, πr]`.
pub fn wrap_signed(d: f64, radius: f64) -> f64 {
    let c = 2.0 * PI * radius;
    let w = (d + PI * radius).rem_euclid(c) - PI * radius;
    if w <= -PI * radius {
        PI * radius
    } else {
        w
    }
}

/// Canonical arc-length coordinate in `[0, 2πr)`.
pub fn wrap_canonical(s: f64, radius: f64) -> f64 {
    let c = 2.0 * PI * radius;
    let w = s.rem_euclid(c);
    if w >= c {
        0.0
    } else {
        w
    }
}

fn check_radius(r: f64) -> Result<()> {
    if r.is_finite() && r > 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidManifold(format!("radius must be positive, got {r}")))
    }
}

impl Manifold {
    pub fn circle(radius: f64) -> Result<Self> {
        check_radius(radius)?;
        Ok(Manifold::Circle { radius })
    }

    pub fn flat_torus(radii: Vec<f64>) -> Result<Self> {
        if radii.is_empty() {
            return Err(Error::InvalidManifold("torus needs at least one factor".into()));
        }
        for &r in &radii {
            check_radius(r)?;
        }
        Ok(Manifold::FlatTorus { radii })
    }

    pub fn sphere(radius: f64) -> Result<Self> {
        check_radius(radius)?;
        Ok(Manifold::Sphere2 { radius })
    }

    pub fn euclidean(dimension: usize) -> Result<Self> {
        if dimension == 0 {
            return Err(Error::InvalidManifold("dimension must be at least 1".into()));
        }
        Ok(Manifold::Euclidean { dimension })
    }

    /// Re-run constructor validation, e.g. after deserialization.
    pub fn validated(self) -> Result<Self> {
        match self {
            Manifold::Circle { radius } => Manifold::circle(radius),
            Manifold::FlatTorus { radii } => Manifold::flat_torus(radii),
            Manifold::Sphere2 { radius } => Manifold::sphere(radius),
            Manifold::Euclidean { dimension } => Manifold::euclidean(dimension),
        }
    }

    pub fn name(&self) -> String {
        match self {
            Manifold::Circle { radius } => format!("circle(r={radius})"),
            Manifold::FlatTorus { radii } => {
                let r: Vec<String> = radii.iter().map(|r| r.to_string()).collect();
                format!("torus(r={})", r.join(","))
            }
            Manifold::Sphere2 { radius } => format!("sphere2(r={radius})"),
            Manifold::Euclidean { dimension } => format!("euclidean(m={dimension})"),
        }
    }

    /// Intrinsic dimension m.
    pub fn dimension(&self) -> usize {
        match self {
            Manifold::Circle { .. } => 1,
            Manifold::FlatTorus { radii } => radii.len(),
            Manifold::Sphere2 { .. } => 2,
            Manifold::Euclidean { dimension } => *dimension,
        }
    }

    /// Dimension N of the ambient space of the isometric embedding.
    pub fn embedding_dimension(&self) -> usize {
        match self {
            Manifold::Circle { .. } => 2,
            Manifold::FlatTorus { radii } => 2 * radii.len(),
            Manifold::Sphere2 { .. } => 3,
            Manifold::Euclidean { dimension } => *dimension,
        }
    }

    /// Length of a point's coordinate vector.
    pub fn coord_len(&self) -> usize {
        match self {
            Manifold::Sphere2 { .. } => 3,
            _ => self.dimension(),
        }
    }

    /// Length of a tangent vector's component vector.
    pub fn tangent_len(&self) -> usize {
        self.coord_len()
    }

    pub fn diffusion_convention(&self) -> &'static str {
        DIFFUSION_CONVENTION
    }

    pub fn is_compact(&self) -> bool {
        !matches!(self, Manifold::Euclidean { .. })
    }

    /// True when every factor is flat (circle, torus, Euclidean).
    pub fn is_flat(&self) -> bool {
        !matches!(self, Manifold::Sphere2 { .. })
    }

    pub fn injectivity_radius(&self) -> f64 {
        match self {
            Manifold::Circle { radius } | Manifold::Sphere2 { radius } => PI * radius,
            Manifold::FlatTorus { radii } => PI * radii.iter().cloned().fold(f64::INFINITY, f64::min),
            Manifold::Euclidean { .. } => f64::INFINITY,
        }
    }

    /// Radius of the first curved factor (1 for Euclidean space).
    pub fn scale(&self) -> f64 {
        match self {
            Manifold::Circle { radius } | Manifold::Sphere2 { radius } => *radius,
            Manifold::FlatTorus { radii } => radii[0],
            Manifold::Euclidean { .. } => 1.0,
        }
    }

    /// Radii of the circle factors of a flat manifold; empty otherwise.
    pub fn circle_radii(&self) -> Vec<f64> {
        match self {
            Manifold::Circle { radius } => vec![*radius],
            Manifold::FlatTorus { radii } => radii.clone(),
            _ => Vec::new(),
        }
    }

    fn check_len(&self, len: usize, expected: usize) -> Result<()> {
        if len == expected {
            Ok(())
        } else {
            Err(Error::DimensionMismatch { expected, got: len })
        }
    }

    /// Build a point, normalizing to the canonical coordinate range.
    ///
    /// Sphere coordinates within [`EMBED_TOLERANCE`] (relative) of the sphere
    /// are projected onto it; anything farther is rejected.
    pub fn point(&self, coords: &[f64]) -> Result<Point> {
        self.check_len(coords.len(), self.coord_len())?;
        if coords.iter().any(|c| !c.is_finite()) {
            return Err(Error::InvalidPoint("non-finite coordinate".into()));
        }
        match self {
            Manifold::Circle { radius } => Ok(Point(smallvec![wrap_canonical(coords[0], *radius)])),
            Manifold::FlatTorus { radii } => Ok(Point(
                coords.iter().zip(radii).map(|(&s, &r)| wrap_canonical(s, r)).collect(),
            )),
            Manifold::Sphere2 { radius } => {
                let n = norm(coords);
                if (n - radius).abs() > EMBED_TOLERANCE * radius {
                    return Err(Error::InvalidPoint(format!(
                        "|x| = {n} differs from the sphere radius {radius}"
                    )));
                }
                Ok(Point(coords.iter().map(|c| c * radius / n).collect()))
            }
            Manifold::Euclidean { .. } => Ok(Point(coords.iter().cloned().collect())),
        }
    }

    /// Default base point: angle 0 on flat factors, north pole on the sphere,
    /// origin in Euclidean space.
    pub fn default_base(&self) -> Point {
        match self {
            Manifold::Sphere2 { radius } => Point(smallvec![0.0, 0.0, *radius]),
            _ => Point(smallvec![0.0; self.coord_len()]),
        }
    }

    /// Length check, plus the radius on the sphere.
    pub fn check_point(&self, x: &Point) -> Result<()> {
        self.check_len(x.len(), self.coord_len())?;
        if let Manifold::Sphere2 { radius } = self {
            let n = norm(&x.0);
            if !((n - radius).abs() <= EMBED_TOLERANCE * radius) {
                return Err(Error::InvalidPoint(format!("|x| = {n} differs from the sphere radius {radius}")));
            }
        }
        Ok(())
    }

    fn check_tangent(&self, v: &TangentVector) -> Result<()> {
        self.check_len(v.0.len(), self.tangent_len())
    }

    pub fn zero_tangent(&self) -> TangentVector {
        TangentVector::zeros(self.tangent_len())
    }

    pub fn exp(&self, x: &Point, v: &TangentVector) -> Result<Point> {
        self.check_point(x)?;
        self.check_tangent(v)?;
        Ok(match self {
            Manifold::Circle { radius } => Point(smallvec![wrap_canonical(x.0[0] + v.0[0], *radius)]),
            Manifold::FlatTorus { radii } => Point(
                x.0.iter()
                    .zip(&v.0)
                    .zip(radii)
                    .map(|((s, d), &r)| wrap_canonical(s + d, r))
                    .collect(),
            ),
            Manifold::Sphere2 { radius } => sphere_exp(*radius, &x.0, &v.0),
            Manifold::Euclidean { .. } => Point(x.0.iter().zip(&v.0).map(|(a, b)| a + b).collect()),
        })
    }

    /// Initial velocity of the minimizing geodesic from `x` to `y`.
    pub fn log(&self, x: &Point, y: &Point) -> Result<TangentVector> {
        self.check_point(x)?;
        self.check_point(y)?;
        match self {
            Manifold::Circle { radius } => Ok(TangentVector(smallvec![circle_log(*radius, x.0[0], y.0[0])?])),
            Manifold::FlatTorus { radii } => {
                let mut out = Coords::with_capacity(radii.len());
                for ((a, b), &r) in x.0.iter().zip(&y.0).zip(radii) {
                    out.push(circle_log(r, *a, *b)?);
                }
                Ok(TangentVector(out))
            }
            Manifold::Sphere2 { radius } => sphere_log(*radius, &x.0, &y.0),
            Manifold::Euclidean { .. } => Ok(TangentVector(y.0.iter().zip(&x.0).map(|(b, a)| b - a).collect())),
        }
    }

    /// Parallel transport of `w` along the geodesic `t ↦ exp(x, t v)`, `t ∈ [0, 1]`.
    pub fn transport(&self, x: &Point, v: &TangentVector, w: &TangentVector) -> Result<TangentVector> {
        self.check_point(x)?;
        self.check_tangent(v)?;
        self.check_tangent(w)?;
        match self {
            Manifold::Sphere2 { radius } => Ok(sphere_transport(*radius, &x.0, &v.0, &w.0)),
            _ => Ok(w.clone()),
        }
    }

    pub fn distance(&self, x: &Point, y: &Point) -> f64 {
        debug_assert_eq!(x.len(), y.len());
        match self {
            Manifold::Circle { radius } => wrap_signed(y.0[0] - x.0[0], *radius).abs(),
            Manifold::FlatTorus { radii } => x
                .0
                .iter()
                .zip(&y.0)
                .zip(radii)
                .map(|((a, b), &r)| wrap_signed(b - a, r).powi(2))
                .sum::<f64>()
                .sqrt(),
            Manifold::Sphere2 { radius } => {
                let c = cross(&x.0, &y.0);
                radius * norm(&c).atan2(dot(&x.0, &y.0))
            }
            Manifold::Euclidean { .. } => x.0.iter().zip(&y.0).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt(),
        }
    }

    /// Riemannian inner product of two tangent vectors at the same point.
    pub fn inner(&self, v: &TangentVector, w: &TangentVector) -> f64 {
        v.dot(w)
    }

    pub fn embed(&self, x: &Point) -> Coords {
        match self {
            Manifold::Circle { radius } => {
                let a = x.0[0] / radius;
                smallvec![radius * a.cos(), radius * a.sin()]
            }
            Manifold::FlatTorus { radii } => {
                let mut out = Coords::with_capacity(2 * radii.len());
                for (s, &r) in x.0.iter().zip(radii) {
                    let a = s / r;
                    out.push(r * a.cos());
                    out.push(r * a.sin());
                }
                out
            }
            Manifold::Sphere2 { .. } | Manifold::Euclidean { .. } => x.0.clone(),
        }
    }

    /// Inverse of [`Manifold::embed`], projecting inputs that lie within
    /// [`EMBED_TOLERANCE`] of the embedded manifold.
    pub fn embed_inverse(&self, p: &[f64]) -> Result<Point> {
        self.check_len(p.len(), self.embedding_dimension())?;
        let circle_factor = |px: f64, py: f64, r: f64| -> Result<f64> {
            let rho = px.hypot(py);
            if (rho - r).abs() > EMBED_TOLERANCE * r {
                return Err(Error::InvalidPoint(format!(
                    "ambient point at radius {rho} is off the circle of radius {r}"
                )));
            }
            Ok(wrap_canonical(r * py.atan2(px), r))
        };
        match self {
            Manifold::Circle { radius } => Ok(Point(smallvec![circle_factor(p[0], p[1], *radius)?])),
            Manifold::FlatTorus { radii } => {
                let mut out = Coords::with_capacity(radii.len());
                for (k, &r) in radii.iter().enumerate() {
                    out.push(circle_factor(p[2 * k], p[2 * k + 1], r)?);
                }
                Ok(Point(out))
            }
            Manifold::Sphere2 { .. } | Manifold::Euclidean { .. } => self.point(p),
        }
    }

    /// Tangent vector expressed as an ambient vector in ℝᴺ.
    pub fn tangent_to_ambient(&self, x: &Point, v: &TangentVector) -> Coords {
        match self {
            Manifold::Circle { radius } => {
                let a = x.0[0] / radius;
                smallvec![-a.sin() * v.0[0], a.cos() * v.0[0]]
            }
            Manifold::FlatTorus { radii } => {
                let mut out = Coords::with_capacity(2 * radii.len());
                for ((s, c), &r) in x.0.iter().zip(&v.0).zip(radii) {
                    let a = s / r;
                    out.push(-a.sin() * c);
                    out.push(a.cos() * c);
                }
                out
            }
            Manifold::Sphere2 { .. } | Manifold::Euclidean { .. } => v.0.clone(),
        }
    }

    /// Orthogonal projection of an ambient vector onto the tangent space at `x`.
    pub fn ambient_to_tangent(&self, x: &Point, a: &[f64]) -> TangentVector {
        match self {
            Manifold::Circle { radius } => {
                let t = x.0[0] / radius;
                TangentVector(smallvec![-t.sin() * a[0] + t.cos() * a[1]])
            }
            Manifold::FlatTorus { radii } => TangentVector(
                x.0.iter()
                    .zip(radii)
                    .enumerate()
                    .map(|(k, (s, &r))| {
                        let t = s / r;
                        -t.sin() * a[2 * k] + t.cos() * a[2 * k + 1]
                    })
                    .collect(),
            ),
            Manifold::Sphere2 { radius } => {
                let c = dot(a, &x.0) / (radius * radius);
                TangentVector(a.iter().zip(&x.0).map(|(ai, xi)| ai - c * xi).collect())
            }
            Manifold::Euclidean { .. } => TangentVector(a.iter().cloned().collect()),
        }
    }

    /// Deterministic orthonormal frame of the tangent space at `x`.
    pub fn canonical_frame(&self, x: &Point) -> Frame {
        match self {
            Manifold::Sphere2 { radius } => {
                let n: Vec<f64> = x.0.iter().map(|c| c / radius).collect();
                // helper axis least aligned with the normal
                let mut k = 0;
                for i in 1..3 {
                    if n[i].abs() < n[k].abs() {
                        k = i;
                    }
                }
                let mut e1 = [0.0; 3];
                e1[k] = 1.0;
                let c = n[k];
                for i in 0..3 {
                    e1[i] -= c * n[i];
                }
                let l = norm(&e1);
                for c in e1.iter_mut() {
                    *c /= l;
                }
                let e2 = cross(&n, &e1);
                vec![TangentVector(SmallVec::from_slice(&e1)), TangentVector(SmallVec::from_slice(&e2))]
            }
            _ => {
                let m = self.dimension();
                (0..m)
                    .map(|i| {
                        let mut v = TangentVector::zeros(m);
                        v.0[i] = 1.0;
                        v
                    })
                    .collect()
            }
        }
    }

    /// Uniformly distributed point (standard Gaussian in Euclidean space).
    pub fn random_point<R: Rng + ?Sized>(&self, rng: &mut R) -> Point {
        match self {
            Manifold::Circle { radius } => Point(smallvec![rng.random::<f64>() * 2.0 * PI * radius]),
            Manifold::FlatTorus { radii } => {
                Point(radii.iter().map(|r| rng.random::<f64>() * 2.0 * PI * r).collect())
            }
            Manifold::Sphere2 { radius } => loop {
                let g: [f64; 3] = [
                    rng.sample(StandardNormal),
                    rng.sample(StandardNormal),
                    rng.sample(StandardNormal),
                ];
                let n = norm(&g);
                if n > 1e-8 {
                    break Point(g.iter().map(|c| c * radius / n).collect());
                }
            },
            Manifold::Euclidean { dimension } => {
                Point((0..*dimension).map(|_| rng.sample::<f64, _>(StandardNormal)).collect())
            }
        }
    }

    /// Tangent vector at `x` with independent standard Gaussian frame components.
    pub fn random_tangent<R: Rng + ?Sized>(&self, x: &Point, rng: &mut R) -> TangentVector {
        let frame = self.canonical_frame(x);
        let mut v = self.zero_tangent();
        for e in &frame {
            let g: f64 = rng.sample(StandardNormal);
            for (vi, ei) in v.0.iter_mut().zip(&e.0) {
                *vi += g * ei;
            }
        }
        v
    }
}

impl Geometry for Manifold {
    fn dimension(&self) -> usize {
        Manifold::dimension(self)
    }
    fn exp(&self, x: &Point, v: &TangentVector) -> Result<Point> {
        Manifold::exp(self, x, v)
    }
    fn log(&self, x: &Point, y: &Point) -> Result<TangentVector> {
        Manifold::log(self, x, y)
    }
    fn transport(&self, x: &Point, v: &TangentVector, w: &TangentVector) -> Result<TangentVector> {
        Manifold::transport(self, x, v, w)
    }
    fn distance(&self, x: &Point, y: &Point) -> f64 {
        Manifold::distance(self, x, y)
    }
}

fn circle_log(radius: f64, a: f64, b: f64) -> Result<f64> {
    let d = wrap_signed(b - a, radius);
    if d.abs() >= PI * radius * (1.0 - CUT_LOCUS_MARGIN) {
        return Err(Error::CutLocus);
    }
    Ok(d)
}

fn sphere_exp(radius: f64, x: &[f64], v: &[f64]) -> Point {
    let len = norm(v);
    if len == 0.0 {
        return Point(SmallVec::from_slice(x));
    }
    let phi = len / radius;
    let (s, c) = phi.sin_cos();
    let k = radius * s / len;
    let y: [f64; 3] = [c * x[0] + k * v[0], c * x[1] + k * v[1], c * x[2] + k * v[2]];
    let n = norm(&y);
    Point(y.iter().map(|yi| yi * radius / n).collect())
}

fn sphere_log(radius: f64, x: &[f64], y: &[f64]) -> Result<TangentVector> {
    let r2 = radius * radius;
    let cr = cross(x, y);
    let s = norm(&cr) / r2;
    let c = dot(x, y) / r2;
    let theta = s.atan2(c);
    if theta >= PI * (1.0 - CUT_LOCUS_MARGIN) {
        return Err(Error::CutLocus);
    }
    let u: [f64; 3] = [y[0] - c * x[0], y[1] - c * x[1], y[2] - c * x[2]];
    let nu = norm(&u);
    if nu == 0.0 || theta == 0.0 {
        return Ok(TangentVector::zeros(3));
    }
    let k = radius * theta / nu;
    Ok(TangentVector(u.iter().map(|ui| ui * k).collect()))
}

fn sphere_transport(radius: f64, x: &[f64], v: &[f64], w: &[f64]) -> TangentVector {
    let len = norm(v);
    if len == 0.0 {
        return TangentVector(SmallVec::from_slice(w));
    }
    let phi = len / radius;
    let (s, c) = phi.sin_cos();
    let a = dot(w, v) / len;
    let out = (0..3)
        .map(|i| {
            let u = v[i] / len;
            let n = x[i] / radius;
            w[i] - a * u + a * (-s * n + c * u)
        })
        .collect();
    TangentVector(out)
}
