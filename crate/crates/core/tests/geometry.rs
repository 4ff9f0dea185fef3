use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use wienerpath::heat_kernel::{circle_image_sum, circle_spectral_sum, KernelEvaluator, DEFAULT_TOLERANCE};
use wienerpath::manifold::{Manifold, TangentVector};

fn manifolds() -> impl Strategy<Value = Manifold> {
    prop_oneof![
        (0.3f64..3.0).prop_map(|r| Manifold::circle(r).unwrap()),
        (0.3f64..3.0, 0.3f64..3.0).prop_map(|(a, b)| Manifold::flat_torus(vec![a, b]).unwrap()),
        (0.3f64..3.0, 0.3f64..3.0, 0.3f64..3.0).prop_map(|(a, b, c)| Manifold::flat_torus(vec![a, b, c]).unwrap()),
        (0.3f64..3.0).prop_map(|r| Manifold::sphere(r).unwrap()),
        (1usize..5).prop_map(|d| Manifold::euclidean(d).unwrap()),
    ]
}

/// Rescale `v` to the given fraction of the injectivity radius (capped for Euclidean space).
fn with_length(m: &Manifold, v: &TangentVector, fraction: f64) -> TangentVector {
    let reach = m.injectivity_radius().min(10.0);
    let n = v.norm();
    if n == 0.0 {
        v.clone()
    } else {
        v.scaled(fraction * reach / n)
    }
}

fn sub_norm(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn exp_log_round_trip(m in manifolds(), seed in any::<u64>(), fraction in 0.0f64..0.9) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = m.random_point(&mut rng);
        let v = with_length(&m, &m.random_tangent(&x, &mut rng), fraction);
        let y = m.exp(&x, &v).unwrap();
        let back = m.log(&x, &y).unwrap();
        prop_assert!(sub_norm(back.components(), v.components()) < 1e-10 * (1.0 + v.norm()));
    }

    #[test]
    fn geodesic_arc_length(m in manifolds(), seed in any::<u64>(), fraction in 0.0f64..0.99) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = m.random_point(&mut rng);
        let v = with_length(&m, &m.random_tangent(&x, &mut rng), fraction);
        let y = m.exp(&x, &v).unwrap();
        prop_assert!((m.distance(&x, &y) - v.norm()).abs() < 1e-10 * (1.0 + v.norm()));
    }

    #[test]
    fn transport_is_an_isometry(m in manifolds(), seed in any::<u64>(), fraction in 0.0f64..3.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = m.random_point(&mut rng);
        let v = with_length(&m, &m.random_tangent(&x, &mut rng), fraction);
        let w1 = m.random_tangent(&x, &mut rng);
        let w2 = m.random_tangent(&x, &mut rng);
        let t1 = m.transport(&x, &v, &w1).unwrap();
        let t2 = m.transport(&x, &v, &w2).unwrap();
        let scale = 1.0 + w1.norm() * w2.norm();
        prop_assert!((m.inner(&t1, &t2) - m.inner(&w1, &w2)).abs() < 1e-12 * scale);
        // transported vectors stay tangent at the endpoint
        let y = m.exp(&x, &v).unwrap();
        let back = m.tangent_to_ambient(&y, &m.ambient_to_tangent(&y, &m.tangent_to_ambient(&y, &t1)));
        prop_assert!(sub_norm(&back, &m.tangent_to_ambient(&y, &t1)) < 1e-12 * (1.0 + t1.norm()));
    }

    #[test]
    fn embedding_is_infinitesimally_isometric(m in manifolds(), seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = m.random_point(&mut rng);
        let v = m.random_tangent(&x, &mut rng);
        prop_assume!(v.norm() > 1e-3);
        let eps = 1e-5;
        let y = m.exp(&x, &v.scaled(eps)).unwrap();
        let ratio = sub_norm(&m.embed(&y), &m.embed(&x)) / eps;
        prop_assert!((ratio - v.norm()).abs() / v.norm() < 1e-4);
    }

    #[test]
    fn embed_inverse_round_trip(m in manifolds(), seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = m.random_point(&mut rng);
        let back = m.embed_inverse(&m.embed(&x)).unwrap();
        prop_assert!(m.distance(&x, &back) < 1e-12 * (1.0 + m.scale()));
    }

    #[test]
    fn heat_kernel_is_symmetric(m in manifolds(), seed in any::<u64>(), t in 0.01f64..3.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = m.random_point(&mut rng);
        let y = m.random_point(&mut rng);
        let k = KernelEvaluator::new(m.clone());
        let (a, b) = (k.kernel(t, &x, &y).unwrap(), k.kernel(t, &y, &x).unwrap());
        prop_assert!((a - b).abs() < 1e-12 * (1.0 + a.abs()));
    }

    #[test]
    fn heat_kernel_is_positive_without_clipping(m in manifolds(), seed in any::<u64>(), t in 1e-3f64..3.0) {
        prop_assume!(m.is_compact());
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = m.random_point(&mut rng);
        let y = m.random_point(&mut rng);
        // keep the sphere series inside its cap
        prop_assume!(!matches!(m, Manifold::Sphere2 { .. }) || t / (m.scale() * m.scale()) > 2e-3);
        let k = KernelEvaluator::new(m);
        prop_assert!(k.kernel(t, &x, &y).unwrap() >= 0.0);
        prop_assert_eq!(k.clip_events(), 0);
    }

    #[test]
    fn circle_image_and_spectral_sums_agree_near_switchover(r in 0.3f64..3.0, d in -10.0f64..10.0, s in 0.7f64..1.4) {
        let t = s * r * r;
        let a = circle_image_sum(t, d, r, DEFAULT_TOLERANCE);
        let b = circle_spectral_sum(t, d, r, DEFAULT_TOLERANCE);
        prop_assert!((a - b).abs() < 1e-10 / r);
    }
}

#[test]
fn normalization_and_semigroup_sweep() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    for (m, norm_tol, semi_tol) in [
        (Manifold::circle(1.0).unwrap(), 1e-10, 1e-8),
        (Manifold::flat_torus(vec![1.0, 0.6]).unwrap(), 1e-10, 1e-8),
        (Manifold::sphere(1.0).unwrap(), 1e-6, 1e-6),
    ] {
        let k = KernelEvaluator::new(m.clone());
        let x = m.random_point(&mut rng);
        let y = m.random_point(&mut rng);
        for t in [0.05, 0.1, 0.5, 1.0] {
            let n = k.normalization_check(t, &x).unwrap();
            assert!(n < norm_tol, "{} normalization at t={t}: {n:e}", m.name());
            let s = k.semigroup_check(t, t, &x, &y).unwrap();
            assert!(s < semi_tol, "{} semigroup at t={t}: {s:e}", m.name());
        }
        assert_eq!(k.clip_events(), 0);
    }
}
