//! Plain-text path files.
//!
//! ```text
//! # comment
//! path flat                # or: path curved
//! manifold sphere2 1.0     # circle r | flat_torus r1 r2 … | sphere2 r | euclidean m
//! base 0 0 1               # optional, manifold default otherwise
//! times 0 0.5 1
//! 0.3 -0.1                 # one vertex per nonzero time
//! 0.7 0.2
//! ```
//!
//! Curved vertex lines may carry the segment velocity after a `|`, which
//! keeps segments longer than the injectivity radius intact.

use std::fmt::Write as _;
use std::sync::Arc;

use crate::development::{CurvedPiecewisePath, FlatPiecewisePath};
use crate::error::{Error, Result};
use crate::manifold::{Coords, Manifold, Point, TangentVector};
use crate::partition::Partition;

/// Vertex positions recomputed from velocities must match within this distance.
const VERTEX_MATCH: f64 = 1e-8;

#[derive(Clone, Debug, PartialEq)]
pub enum PathFile {
    Flat { manifold: Manifold, base: Point, path: FlatPiecewisePath },
    Curved { manifold: Manifold, path: CurvedPiecewisePath },
}

fn err(line: usize, message: impl Into<String>) -> Error {
    Error::PathFile { line, message: message.into() }
}

fn numbers(line: usize, fields: &[&str]) -> Result<Vec<f64>> {
    fields
        .iter()
        .map(|f| f.parse::<f64>().map_err(|_| err(line, format!("not a number: '{f}'"))))
        .collect()
}

fn parse_manifold(line: usize, fields: &[&str]) -> Result<Manifold> {
    let (kind, rest) = fields.split_first().ok_or_else(|| err(line, "missing manifold kind"))?;
    let m = match *kind {
        "circle" | "sphere2" => {
            let v = numbers(line, rest)?;
            if v.len() != 1 {
                return Err(err(line, format!("{kind} takes one radius")));
            }
            if *kind == "circle" {
                Manifold::circle(v[0])
            } else {
                Manifold::sphere(v[0])
            }
        }
        "flat_torus" => Manifold::flat_torus(numbers(line, rest)?),
        "euclidean" => {
            let d = rest
                .first()
                .and_then(|s| s.parse::<usize>().ok())
                .ok_or_else(|| err(line, "euclidean takes a dimension"))?;
            Manifold::euclidean(d)
        }
        other => return Err(err(line, format!("unknown manifold kind '{other}'"))),
    };
    m.map_err(|e| err(line, e.to_string()))
}

fn manifold_line(m: &Manifold) -> String {
    match m {
        Manifold::Circle { radius } => format!("manifold circle {radius}"),
        Manifold::FlatTorus { radii } => {
            format!("manifold flat_torus {}", radii.iter().map(|r| r.to_string()).collect::<Vec<_>>().join(" "))
        }
        Manifold::Sphere2 { radius } => format!("manifold sphere2 {radius}"),
        Manifold::Euclidean { dimension } => format!("manifold euclidean {dimension}"),
    }
}

fn join(values: &[f64]) -> String {
    values.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(" ")
}

impl PathFile {
    pub fn parse(text: &str) -> Result<Self> {
        let mut kind: Option<(usize, String)> = None;
        let mut manifold: Option<Manifold> = None;
        let mut base: Option<(usize, Vec<f64>)> = None;
        let mut times: Option<(usize, Vec<f64>)> = None;
        let mut rows: Vec<(usize, Vec<f64>, Option<Vec<f64>>)> = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let fields: Vec<&str> = content.split_whitespace().collect();
            match fields[0] {
                "path" => {
                    let k = fields.get(1).ok_or_else(|| err(line, "path needs 'flat' or 'curved'"))?;
                    if *k != "flat" && *k != "curved" {
                        return Err(err(line, format!("unknown path kind '{k}'")));
                    }
                    kind = Some((line, k.to_string()));
                }
                "manifold" => manifold = Some(parse_manifold(line, &fields[1..])?),
                "base" => base = Some((line, numbers(line, &fields[1..])?)),
                "times" => times = Some((line, numbers(line, &fields[1..])?)),
                _ => {
                    let (pos, vel) = match content.split_once('|') {
                        Some((a, b)) => {
                            let a: Vec<&str> = a.split_whitespace().collect();
                            let b: Vec<&str> = b.split_whitespace().collect();
                            (numbers(line, &a)?, Some(numbers(line, &b)?))
                        }
                        None => (numbers(line, &fields)?, None),
                    };
                    rows.push((line, pos, vel));
                }
            }
        }
        let (_, kind) = kind.ok_or_else(|| err(1, "missing 'path flat|curved' header"))?;
        let manifold = manifold.ok_or_else(|| err(1, "missing 'manifold' header"))?;
        let (tline, times) = times.ok_or_else(|| err(1, "missing 'times' header"))?;
        let partition = Arc::new(Partition::new(times).map_err(|e| err(tline, e.to_string()))?);
        if rows.len() != partition.segments() {
            return Err(err(
                rows.last().map_or(tline, |r| r.0),
                format!("expected {} vertex lines, found {}", partition.segments(), rows.len()),
            ));
        }
        let base = match base {
            Some((line, c)) => manifold.point(&c).map_err(|e| err(line, e.to_string()))?,
            None => manifold.default_base(),
        };
        if kind == "flat" {
            let m = manifold.dimension();
            let mut vertices = Vec::with_capacity(rows.len());
            for (line, pos, vel) in rows {
                if vel.is_some() {
                    return Err(err(line, "flat vertices take no velocity"));
                }
                if pos.len() != m {
                    return Err(err(line, format!("expected {m} components, found {}", pos.len())));
                }
                vertices.push(Coords::from_vec(pos));
            }
            let path = FlatPiecewisePath::new(partition, vertices)?;
            return Ok(PathFile::Flat { manifold, base, path });
        }
        let mut points = Vec::with_capacity(rows.len());
        let mut velocities = Vec::with_capacity(rows.len());
        for (line, pos, vel) in &rows {
            points.push(manifold.point(pos).map_err(|e| err(*line, e.to_string()))?);
            if let Some(v) = vel {
                if v.len() != manifold.tangent_len() {
                    return Err(err(*line, format!("expected {} velocity components", manifold.tangent_len())));
                }
                velocities.push(TangentVector(Coords::from_slice(v)));
            }
        }
        let path = if velocities.is_empty() {
            CurvedPiecewisePath::from_vertices(&manifold, partition, base, points, None)
                .map_err(|e| err(rows[0].0, e.to_string()))?
        } else if velocities.len() == rows.len() {
            let path = CurvedPiecewisePath::from_velocities(&manifold, partition, base, velocities, None)?;
            for ((line, _, _), (given, shot)) in rows.iter().zip(points.iter().zip(&path.vertices)) {
                if manifold.distance(given, shot) > VERTEX_MATCH * manifold.scale().max(1.0) {
                    return Err(err(*line, "vertex does not match its segment velocity"));
                }
            }
            path
        } else {
            return Err(err(rows[0].0, "give a velocity on every vertex line or on none"));
        };
        Ok(PathFile::Curved { manifold, path })
    }

    pub fn render(&self) -> String {
        let mut s = String::new();
        match self {
            PathFile::Flat { manifold, base, path } => {
                let _ = writeln!(s, "path flat");
                let _ = writeln!(s, "{}", manifold_line(manifold));
                let _ = writeln!(s, "base {}", join(base.coords()));
                let _ = writeln!(s, "times {}", join(path.partition.times()));
                for v in &path.vertices {
                    let _ = writeln!(s, "{}", join(v));
                }
            }
            PathFile::Curved { manifold, path } => {
                let _ = writeln!(s, "path curved");
                let _ = writeln!(s, "{}", manifold_line(manifold));
                let _ = writeln!(s, "base {}", join(path.base.coords()));
                let _ = writeln!(s, "times {}", join(path.partition.times()));
                for (p, v) in path.vertices.iter().zip(&path.velocities) {
                    let _ = writeln!(s, "{} | {}", join(p.coords()), join(v.components()));
                }
            }
        }
        s
    }
}
