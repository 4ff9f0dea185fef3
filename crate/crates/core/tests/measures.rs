use std::f64::consts::PI;
use std::sync::Arc;

use proptest::prelude::*;

use wienerpath::cylinder::{expectation_quadrature, lp_norm_quadrature, CylinderFunctional, CylinderMeasure, McBudget};
use wienerpath::exec::{stream_rng, StreamId};
use wienerpath::functional::{Observable, PathFunctional};
use wienerpath::limit::{
    density_diagnostic, discretize, discretize_family, embed_family, limit_estimate, DiagnosticOptions, RefinementChain,
    WienerSpace,
};
use wienerpath::manifold::{Coords, Manifold, Point};
use wienerpath::partition::Partition;
use wienerpath::report::joint_stderr;

fn space(m: Manifold) -> WienerSpace {
    let base = m.default_base();
    WienerSpace::new(m, base).unwrap()
}

fn uniform(n: usize) -> Arc<Partition> {
    Partition::uniform(n).unwrap().shared()
}

fn histogram(values: impl Iterator<Item = f64>, lo: f64, hi: f64, bins: usize) -> Vec<f64> {
    let mut h = vec![0.0; bins];
    let mut total = 0.0;
    for v in values {
        let k = (((v - lo) / (hi - lo)) * bins as f64).floor().clamp(0.0, bins as f64 - 1.0) as usize;
        h[k] += 1.0;
        total += 1.0;
    }
    h.iter().map(|c| c / total).collect()
}

fn tv(a: &[f64], b: &[f64]) -> f64 {
    0.5 * a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>()
}

/// Scalar summary of a point used for binning: the angle on the circle, `cos θ` from the base on the sphere.
fn coordinate(m: &Manifold, base: &Point, x: &Point) -> f64 {
    match m {
        Manifold::Sphere2 { .. } => Observable::Legendre { degree: 1 }.eval(m, base, x),
        _ => x.coords()[0],
    }
}

/// Law of the point at time 1/2: sampled directly on `uniform(2)`, and projected from `uniform(8)`.
fn markov_consistency_tv(m: Manifold, lo: f64, hi: f64) -> f64 {
    let sp = space(m.clone());
    let coarse = uniform(2);
    let fine = uniform(8);
    let mu_c = sp.measure(coarse.clone()).unwrap();
    let mu_f = sp.measure(fine.clone()).unwrap();
    let samples = 100_000;
    let mut rc = stream_rng(1, StreamId::new(40, 0), 0);
    let mut rf = stream_rng(1, StreamId::new(41, 0), 0);
    let direct = (0..samples).map(|_| {
        let s = mu_c.sample_skeleton(&mut rc).unwrap();
        coordinate(&m, &sp.base, s.at(1))
    });
    let hc = histogram(direct, lo, hi, 32);
    let projected = (0..samples).map(|_| {
        let s = mu_f.sample_skeleton(&mut rf).unwrap().project(&coarse).unwrap();
        coordinate(&m, &sp.base, s.at(1))
    });
    let hf = histogram(projected, lo, hi, 32);
    tv(&hc, &hf)
}

#[test]
fn markov_consistency_on_circle_and_sphere() {
    let circle = markov_consistency_tv(Manifold::circle(1.0).unwrap(), 0.0, 2.0 * PI);
    assert!(circle < 0.03, "circle TV {circle}");
    let sphere = markov_consistency_tv(Manifold::sphere(1.0).unwrap(), -1.0, 1.0);
    assert!(sphere < 0.03, "sphere TV {sphere}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn lift_is_evaluation_after_projection(kind in 0usize..3, seed in any::<u64>(), coarse_n in 1usize..5, factor in 1usize..4) {
        let m = [Manifold::circle(1.0).unwrap(), Manifold::flat_torus(vec![1.0, 0.5]).unwrap(), Manifold::sphere(1.0).unwrap()][kind].clone();
        let sp = space(m.clone());
        let coarse = uniform(coarse_n);
        let fine = uniform(coarse_n * factor);
        let mu = sp.measure(fine.clone()).unwrap();
        let mut rng = stream_rng(seed, StreamId::new(42, 0), 0);
        for f in [PathFunctional::SupDistance, PathFunctional::Energy, PathFunctional::Endpoint { observable: Observable::DistanceFromBase }] {
            let g = discretize(&m, &f, coarse.clone()).unwrap();
            let lifted = g.lift(&fine).unwrap();
            for _ in 0..8 {
                let s = mu.sample_skeleton(&mut rng).unwrap();
                let a = lifted.eval(&s).ok();
                let b = g.eval(&s.project(&coarse).unwrap()).ok();
                prop_assert_eq!(a, b);
            }
        }
    }
}

#[test]
fn quadrature_norms_are_invariant_under_lifting() {
    let m = Manifold::circle(1.0).unwrap();
    let sp = space(m.clone());
    let root = uniform(1);
    for f in [PathFunctional::SupDistance, PathFunctional::Endpoint { observable: Observable::Legendre { degree: 1 } }] {
        let g = discretize(&m, &f, root.clone()).unwrap();
        let chain = RefinementChain::uniform(&[1, 2]).unwrap();
        let family = embed_family(&g, &chain).unwrap();
        for p in [1.0, 2.0] {
            let norms: Vec<f64> = family
                .members
                .iter()
                .zip(chain.levels())
                .map(|(h, level)| lp_norm_quadrature(&sp.measure(level.clone()).unwrap(), h, p, Some(201)).unwrap())
                .collect();
            assert!((norms[0] - norms[1]).abs() < 1e-8, "{} p={p}: {norms:?}", f.label());
        }
    }
}

#[test]
fn quadrature_mass_is_one_for_three_segments() {
    let sp = space(Manifold::circle(1.3).unwrap());
    let p = Partition::new(vec![0.0, 0.1, 0.55, 1.0]).unwrap().shared();
    let one = CylinderFunctional::constant(p.clone(), 1.0);
    let r = expectation_quadrature(&sp.measure(p).unwrap(), &one, Some(101)).unwrap();
    assert!((r.estimate - 1.0).abs() < 1e-10);
}

#[test]
fn endpoint_levels_differ_only_by_noise() {
    for m in [Manifold::circle(1.0).unwrap(), Manifold::sphere(1.0).unwrap()] {
        let sp = space(m.clone());
        let f = PathFunctional::Endpoint { observable: Observable::Legendre { degree: 1 } };
        let chain = RefinementChain::uniform(&[1, 4, 16]).unwrap();
        let family = discretize_family(&m, &f, &chain).unwrap();
        let table = limit_estimate(&sp, &family, &[McBudget::new(20_000, 8)]).unwrap();
        for (d, se) in table.differences.iter().zip(&table.difference_stderr) {
            assert!(d.abs() < 4.0 * se, "{}: {d} vs {se}", m.name());
        }
    }
}

#[test]
fn density_distances_shrink_toward_the_finest_level() {
    let m = Manifold::circle(1.0).unwrap();
    let sp = space(m.clone());
    let chain = RefinementChain::uniform(&[2, 4, 8, 32]).unwrap();
    let family = discretize_family(&m, &PathFunctional::SupDistance, &chain).unwrap();
    for p in [1.0, 2.0] {
        let options = DiagnosticOptions { p, budget: McBudget::new(20_000, 4), quadrature: false };
        let rows = density_diagnostic(&sp, &family, &options).unwrap();
        for w in rows.windows(2) {
            assert!(w[1].delta < w[0].delta + 2.0 * joint_stderr(w[0].stderr, w[1].stderr), "p={p}: {:?}", rows.iter().map(|r| r.delta).collect::<Vec<_>>());
        }
    }
}

#[test]
fn measure_needs_a_valid_base() {
    let m = Manifold::sphere(1.0).unwrap();
    let kernel = wienerpath::heat_kernel::KernelEvaluator::new(m);
    let off_sphere = Point(Coords::from_slice(&[0.0, 0.0, 2.0]));
    assert!(CylinderMeasure::new(kernel, off_sphere, uniform(2)).is_err());
}
