//! Point observables and path functionals evaluated on piecewise-geodesic paths.

use std::f64::consts::PI;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::manifold::{dot, wrap_signed, Manifold, Point, TangentVector};
use crate::partition::Partition;
use crate::quadrature::legendre;

/// Real function on the manifold, parameterized relative to the base point.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Observable {
    Constant { value: f64 },
    /// Embedded ambient coordinate `j`.
    Coordinate { index: usize },
    /// `P_l(cos θ)`, θ the geodesic angle from the base point. Circle and sphere.
    Legendre { degree: usize },
    DistanceFromBase,
}

impl Observable {
    pub fn validate(&self, manifold: &Manifold) -> Result<()> {
        match self {
            Observable::Coordinate { index } if *index >= manifold.embedding_dimension() => {
                Err(Error::InvalidArgument(format!(
                    "coordinate index {index} out of range for {}",
                    manifold.name()
                )))
            }
            Observable::Legendre { .. }
                if !matches!(manifold, Manifold::Circle { .. } | Manifold::Sphere2 { .. }) =>
            {
                Err(Error::Unsupported(format!("legendre observable on {}", manifold.name())))
            }
            _ => Ok(()),
        }
    }

    pub fn eval(&self, manifold: &Manifold, base: &Point, x: &Point) -> f64 {
        match self {
            Observable::Constant { value } => *value,
            Observable::Coordinate { index } => manifold.embed(x)[*index],
            Observable::Legendre { degree } => {
                let r = manifold.scale();
                let c = dot(&manifold.embed(base), &manifold.embed(x)) / (r * r);
                legendre(*degree, c.clamp(-1.0, 1.0))
            }
            Observable::DistanceFromBase => manifold.distance(base, x),
        }
    }

    /// Bound on `|f|` over the manifold, when finite.
    pub fn sup_abs(&self, manifold: &Manifold) -> Option<f64> {
        match self {
            Observable::Constant { value } => Some(value.abs()),
            Observable::Coordinate { .. } if manifold.is_compact() => Some(
                manifold.circle_radii().into_iter().fold(manifold.scale(), f64::max),
            ),
            Observable::Legendre { .. } => Some(1.0),
            Observable::DistanceFromBase if manifold.is_compact() => Some(diameter(manifold)),
            _ => None,
        }
    }
}

fn diameter(manifold: &Manifold) -> f64 {
    match manifold {
        Manifold::Circle { radius } | Manifold::Sphere2 { radius } => PI * radius,
        Manifold::FlatTorus { radii } => PI * radii.iter().map(|r| r * r).sum::<f64>().sqrt(),
        Manifold::Euclidean { .. } => f64::INFINITY,
    }
}

/// Functional on continuous paths from the base point.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case", deny_unknown_fields)]
pub enum PathFunctional {
    Constant { value: f64 },
    /// Observable of the path at time 1.
    Endpoint { observable: Observable },
    /// `sup_t d(x₀, γ(t))`.
    SupDistance,
    /// `Σ |γ̇|² Δt` of the piecewise-geodesic path.
    Energy,
    /// Net turns around circle factor `factor`.
    Winding { factor: usize },
}

impl PathFunctional {
    pub fn label(&self) -> String {
        match self {
            PathFunctional::Constant { value } => format!("constant({value})"),
            PathFunctional::Endpoint { observable } => match observable {
                Observable::Constant { value } => format!("endpoint_constant({value})"),
                Observable::Coordinate { index } => format!("endpoint_coordinate({index})"),
                Observable::Legendre { degree } => format!("endpoint_legendre({degree})"),
                Observable::DistanceFromBase => "endpoint_distance".into(),
            },
            PathFunctional::SupDistance => "sup_distance".into(),
            PathFunctional::Energy => "energy".into(),
            PathFunctional::Winding { factor } => format!("winding({factor})"),
        }
    }

    pub fn validate(&self, manifold: &Manifold) -> Result<()> {
        match self {
            PathFunctional::Endpoint { observable } => observable.validate(manifold),
            PathFunctional::Winding { factor } => {
                if *factor < manifold.circle_radii().len() {
                    Ok(())
                } else {
                    Err(Error::Unsupported(format!("winding factor {factor} on {}", manifold.name())))
                }
            }
            _ => Ok(()),
        }
    }

    /// True when the value depends only on the endpoint of the path.
    pub fn is_endpoint(&self) -> bool {
        matches!(self, PathFunctional::Constant { .. } | PathFunctional::Endpoint { .. })
    }

    pub fn eval(&self, manifold: &Manifold, path: &GeodesicPolyline) -> f64 {
        match self {
            PathFunctional::Constant { value } => *value,
            PathFunctional::Endpoint { observable } => observable.eval(manifold, &path.base, path.endpoint()),
            PathFunctional::SupDistance => sup_distance(manifold, path),
            PathFunctional::Energy => path.energy(),
            PathFunctional::Winding { factor } => {
                let r = manifold.circle_radii()[*factor];
                let dts = path.partition.gaps();
                path.velocities.iter().zip(dts).map(|(v, dt)| v.0[*factor] * dt).sum::<f64>() / (2.0 * PI * r)
            }
        }
    }
}

/// Path through `base, vertices[0], …` following the minimizing geodesic on
/// each partition segment; `velocities[i]` is constant on segment `i`.
#[derive(Clone, Debug, PartialEq)]
pub struct GeodesicPolyline {
    pub partition: Arc<Partition>,
    pub base: Point,
    pub vertices: Vec<Point>,
    pub velocities: Vec<TangentVector>,
}

impl GeodesicPolyline {
    /// Interpolate skeleton points; fails with `CutLocus` when consecutive
    /// points have no unique minimizing geodesic.
    pub fn interpolate(manifold: &Manifold, partition: Arc<Partition>, base: &Point, points: &[Point]) -> Result<Self> {
        if points.len() != partition.segments() {
            return Err(Error::DimensionMismatch { expected: partition.segments(), got: points.len() });
        }
        let mut velocities = Vec::with_capacity(points.len());
        let mut prev = base;
        for (y, dt) in points.iter().zip(partition.gaps()) {
            velocities.push(manifold.log(prev, y)?.scaled(1.0 / dt));
            prev = y;
        }
        Ok(GeodesicPolyline { partition, base: base.clone(), vertices: points.to_vec(), velocities })
    }

    pub fn endpoint(&self) -> &Point {
        self.vertices.last().unwrap_or(&self.base)
    }

    pub fn energy(&self) -> f64 {
        self.velocities.iter().zip(self.partition.gaps()).map(|(v, dt)| v.dot(v) * dt).sum()
    }

    /// Point at time `t ∈ [0, 1]`.
    pub fn point_at(&self, manifold: &Manifold, t: f64) -> Result<Point> {
        let times = self.partition.times();
        let i = match times[1..].iter().position(|&s| t <= s) {
            Some(i) => i,
            None => times.len() - 2,
        };
        let start = if i == 0 { &self.base } else { &self.vertices[i - 1] };
        manifold.exp(start, &self.velocities[i].scaled(t - times[i]))
    }
}

/// Closed-form supremum of `d(x₀, γ(t))` over each geodesic segment.
pub fn sup_distance(manifold: &Manifold, path: &GeodesicPolyline) -> f64 {
    let mut best = 0.0_f64;
    let mut start = &path.base;
    for ((v, dt), end) in path.velocities.iter().zip(path.partition.gaps()).zip(&path.vertices) {
        best = best.max(segment_sup_distance(manifold, &path.base, start, v, dt));
        start = end;
    }
    best
}

fn segment_sup_distance(manifold: &Manifold, x0: &Point, start: &Point, v: &TangentVector, dt: f64) -> f64 {
    match manifold {
        Manifold::Circle { radius } => {
            let u0 = wrap_signed(start.0[0] - x0.0[0], *radius);
            wrapped_line_sup(u0, v.0[0] * dt, *radius)
        }
        Manifold::FlatTorus { radii } => {
            // squared distance is smooth between wrap points, and each factor
            // term is convex there, so the max sits at an endpoint or a wrap point
            let u0: Vec<f64> = radii.iter().enumerate().map(|(k, &r)| wrap_signed(start.0[k] - x0.0[k], r)).collect();
            let w: Vec<f64> = v.0.iter().map(|c| c * dt).collect();
            // (parameter, factor sitting exactly at its antipode)
            let mut candidates: Vec<(f64, Option<usize>)> = vec![(0.0, None), (1.0, None)];
            for (k, &r) in radii.iter().enumerate() {
                if w[k] == 0.0 {
                    continue;
                }
                let (lo, hi) = if w[k] > 0.0 { (u0[k], u0[k] + w[k]) } else { (u0[k] + w[k], u0[k]) };
                let mut m = ((lo / (PI * r) - 1.0) / 2.0).ceil();
                while (2.0 * m + 1.0) * PI * r <= hi {
                    candidates.push((((2.0 * m + 1.0) * PI * r - u0[k]) / w[k], Some(k)));
                    m += 1.0;
                }
            }
            candidates
                .into_iter()
                .map(|(s, at)| {
                    radii
                        .iter()
                        .enumerate()
                        .map(|(k, &r)| if at == Some(k) { PI * r } else { wrap_signed(u0[k] + s * w[k], r).abs() })
                        .map(|d| d * d)
                        .sum::<f64>()
                        .sqrt()
                })
                .fold(0.0, f64::max)
        }
        Manifold::Sphere2 { radius } => {
            let r = *radius;
            let speed = v.norm();
            let p: Vec<f64> = start.0.iter().map(|c| c / r).collect();
            let xh: Vec<f64> = x0.0.iter().map(|c| c / r).collect();
            let a = dot(&xh, &p);
            if speed * dt == 0.0 {
                return r * a.clamp(-1.0, 1.0).acos();
            }
            let u: Vec<f64> = v.0.iter().map(|c| c / speed).collect();
            let b = dot(&xh, &u);
            let omega = speed * dt / r;
            // cos d(φ) = a cos φ + b sin φ along the segment φ ∈ [0, ω]
            let phi_star = b.atan2(a);
            let k = ((-phi_star - PI) / (2.0 * PI)).ceil();
            let phi_min = phi_star + PI + 2.0 * PI * k;
            let min_cos = if phi_min <= omega {
                -(a.hypot(b))
            } else {
                a.min(a * omega.cos() + b * omega.sin())
            };
            r * min_cos.clamp(-1.0, 1.0).acos()
        }
        Manifold::Euclidean { .. } => {
            let d0: f64 = start.0.iter().zip(&x0.0).map(|(s, x)| (s - x).powi(2)).sum::<f64>().sqrt();
            let d1: f64 = start
                .0
                .iter()
                .zip(&x0.0)
                .zip(&v.0)
                .map(|((s, x), c)| (s + c * dt - x).powi(2))
                .sum::<f64>()
                .sqrt();
            d0.max(d1)
        }
    }
}

/// `sup_{s∈[0,1]} |wrap(u0 + s·w)|` on a circle of radius `r`.
fn wrapped_line_sup(u0: f64, w: f64, r: f64) -> f64 {
    let (lo, hi) = if w >= 0.0 { (u0, u0 + w) } else { (u0 + w, u0) };
    let m = ((lo / (PI * r) - 1.0) / 2.0).ceil();
    if (2.0 * m + 1.0) * PI * r <= hi {
        PI * r
    } else {
        wrap_signed(u0, r).abs().max(wrap_signed(u0 + w, r).abs())
    }
}
