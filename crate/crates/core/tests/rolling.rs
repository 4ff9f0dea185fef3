use std::sync::Arc;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use statrs::distribution::{Continuous, Normal};

use wienerpath::development::{
    antidevelop, develop, energy_curved, energy_flat, frame_gram_residual, lambda0_log_density, CurvedPiecewisePath,
    FlatPiecewisePath,
};
use wienerpath::manifold::{Coords, Manifold};
use wienerpath::partition::Partition;

fn manifolds() -> impl Strategy<Value = Manifold> {
    prop_oneof![
        (0.5f64..2.0).prop_map(|r| Manifold::sphere(r).unwrap()),
        (0.5f64..2.0).prop_map(|r| Manifold::circle(r).unwrap()),
        (0.5f64..2.0, 0.5f64..2.0).prop_map(|(a, b)| Manifold::flat_torus(vec![a, b]).unwrap()),
        (1usize..4).prop_map(|d| Manifold::euclidean(d).unwrap()),
    ]
}

fn random_flat<R: Rng>(partition: &Arc<Partition>, dim: usize, spread: f64, rng: &mut R) -> FlatPiecewisePath {
    let mut cur = vec![0.0; dim];
    let vertices = partition
        .gaps()
        .map(|dt| {
            for c in cur.iter_mut() {
                *c += spread * dt.sqrt() * rng.sample::<f64, _>(StandardNormal);
            }
            Coords::from_slice(&cur)
        })
        .collect();
    FlatPiecewisePath::new(partition.clone(), vertices).unwrap()
}

fn sup_diff(a: &FlatPiecewisePath, b: &FlatPiecewisePath) -> f64 {
    a.vertices
        .iter()
        .zip(&b.vertices)
        .flat_map(|(u, v)| u.iter().zip(v.iter()).map(|(x, y)| (x - y).abs()))
        .fold(0.0, f64::max)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn development_preserves_energy(m in manifolds(), seed in any::<u64>(), n in 1usize..64, spread in 0.1f64..5.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let partition = Partition::uniform(n).unwrap().shared();
        let alpha = random_flat(&partition, m.dimension(), spread, &mut rng);
        let x0 = m.random_point(&mut rng);
        let gamma = develop(&m, &alpha, &x0, None).unwrap();
        let (e_flat, e_curved) = (energy_flat(&alpha), energy_curved(&gamma));
        prop_assert!((e_flat - e_curved).abs() < 1e-10 * (1.0 + e_flat));
    }

    #[test]
    fn antidevelop_inverts_develop(m in manifolds(), seed in any::<u64>(), n in 1usize..64, spread in 0.1f64..5.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let partition = Partition::uniform(n).unwrap().shared();
        let alpha = random_flat(&partition, m.dimension(), spread, &mut rng);
        let x0 = m.random_point(&mut rng);
        let back = antidevelop(&develop(&m, &alpha, &x0, None).unwrap());
        prop_assert!(sup_diff(&alpha, &back) < 1e-9 * (1.0 + spread));
    }

    #[test]
    fn develop_inverts_antidevelop(seed in any::<u64>(), n in 1usize..40) {
        // curved paths built from arbitrary vertices joined by minimizing geodesics
        let m = Manifold::sphere(1.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let partition = Partition::uniform(n).unwrap().shared();
        let base = m.random_point(&mut rng);
        let vertices = (0..n).map(|_| m.random_point(&mut rng)).collect();
        let gamma = CurvedPiecewisePath::from_vertices(&m, partition, base.clone(), vertices, None).unwrap();
        let again = develop(&m, &antidevelop(&gamma), &base, None).unwrap();
        for (a, b) in gamma.vertices.iter().zip(&again.vertices) {
            prop_assert!(m.distance(a, b) < 1e-9);
        }
    }

    #[test]
    fn lambda0_density_is_the_energy_gaussian(seed in any::<u64>(), n in 1usize..20, dim in 1usize..4) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let partition = Partition::uniform(n).unwrap().shared();
        let alpha = random_flat(&partition, dim, 1.0, &mut rng);
        // product of independent normal densities, variance dt per coordinate
        let mut expected = 0.0;
        for (inc, dt) in alpha.increments().iter().zip(partition.gaps()) {
            let normal = Normal::new(0.0, dt.sqrt()).unwrap();
            expected += inc.iter().map(|&x| normal.ln_pdf(x)).sum::<f64>();
        }
        let got = lambda0_log_density(&alpha);
        prop_assert!((got - expected).abs() < 1e-10 * (1.0 + expected.abs()), "{got} vs {expected}");
    }
}

#[test]
fn sphere_frames_stay_orthonormal_over_1024_segments() {
    let m = Manifold::sphere(1.0).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let partition = Partition::uniform(1024).unwrap().shared();
    let alpha = random_flat(&partition, 2, 3.0, &mut rng);
    let gamma = develop(&m, &alpha, &m.default_base(), None).unwrap();
    let worst = gamma.frames.iter().map(frame_gram_residual).fold(0.0, f64::max);
    assert!(worst < 1e-9, "gram residual {worst:e}");
    assert_eq!(gamma.reorthonormalizations, 0);
}
