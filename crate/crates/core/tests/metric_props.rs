mod common;

use common::*;
use ot_core::metric_space::{group_quotient, lq_product, Exponent, QuotientSpace};
use ot_core::Space;
use proptest::prelude::*;
use rand::Rng;
use std::sync::Arc;

fn random_partition(r: &mut rand_chacha::ChaCha8Rng, n: usize) -> Vec<Vec<usize>> {
    let k = r.gen_range(1..=n);
    let labels = random_surjection(r, n, k);
    (0..k).map(|c| (0..n).filter(|&i| labels[i] == c).collect()).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn clouds_satisfy_triangle_inequality(seed in any::<u64>(), n in 1usize..9, dim in 1usize..4) {
        let s = random_cloud(&mut rng(seed), n, dim);
        prop_assert!(s.triangle_violations(1e-12).is_empty());
    }

    #[test]
    fn lq_distance_nonincreasing_in_q(seed in any::<u64>(), a in 1usize..5, b in 1usize..5) {
        let mut r = rng(seed);
        let x = random_cloud(&mut r, a, 2);
        let y = random_cloud(&mut r, b, 1);
        let qs = [Exponent::Finite(1.0), Exponent::Finite(1.5), Exponent::Finite(2.0), Exponent::Finite(3.0), Exponent::Infinity];
        let spaces: Vec<_> = qs.iter().map(|&q| lq_product(&x, &y, q).unwrap()).collect();
        for w in spaces.windows(2) {
            for i in 0..w[0].len() {
                for j in 0..w[0].len() {
                    prop_assert!(w[1].dist(i, j) <= w[0].dist(i, j) + 1e-12);
                }
            }
        }
        for s in &spaces {
            prop_assert!(s.triangle_violations(1e-12).is_empty());
        }
    }

    #[test]
    fn quotient_map_is_one_lipschitz(seed in any::<u64>(), n in 1usize..9) {
        let mut r = rng(seed);
        let s = random_cloud(&mut r, n, 2);
        let classes = random_partition(&mut r, n);
        let q = QuotientSpace::from_partition(s.clone(), classes).unwrap();
        for a in 0..n {
            for b in 0..n {
                let d = q.quotient_distance(q.project(a), q.project(b)).unwrap();
                prop_assert!(d <= s.dist(a, b));
            }
        }
    }

    #[test]
    fn reflection_quotient_is_a_metric(seed in any::<u64>(), half in 1usize..5) {
        let mut r = rng(seed);
        let mut pos: Vec<f64> = Vec::new();
        while pos.len() < half {
            let x = r.gen_range(1i32..40) as f64 / 4.0;
            if !pos.contains(&x) {
                pos.push(x);
            }
        }
        let xs: Vec<f64> = pos.iter().map(|x| -x).chain(pos.iter().copied()).collect();
        let s: Space = line(&xs);
        let flip: Vec<usize> = (0..2 * half).map(|i| (i + half) % (2 * half)).collect();
        let q = group_quotient(s, &[(0..2 * half).collect(), flip]).unwrap();
        prop_assert_eq!(q.num_classes(), half);
        prop_assert!(q.dstar_triangle_violations(1e-12).is_empty());
    }
}

#[test]
fn non_isometric_action_rejected() {
    let s = line(&[0.0, 1.0, 3.0]);
    let swap = vec![1, 0, 2];
    let e = group_quotient(s, &[vec![0, 1, 2], swap]);
    assert!(matches!(e, Err(ot_core::OtError::InvalidAction(_))));
}

#[test]
fn unknown_class_is_not_found() {
    let s: Space = Arc::new(ot_core::FiniteMetricSpace::on_line(&[0.0, 2.0]).unwrap());
    let q = QuotientSpace::from_partition(s, vec![vec![0], vec![1]]).unwrap();
    assert_eq!(q.quotient_distance(0, 1).unwrap(), 2.0);
    assert!(matches!(q.quotient_distance(0, 5), Err(ot_core::OtError::NotFound(_))));
}
