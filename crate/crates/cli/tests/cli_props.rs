use std::sync::Arc;

use ot_cli::{load_bundle, run_command, Command, EntityRef, Options, ProblemBundle};
use ot_core::mass::{self, Mass};
use ot_core::{DiscreteMeasure, FiniteMetricSpace, PointedEuclideanCloud, Space, TransportPlan};
use proptest::prelude::*;

fn labelled_space(n: usize, scale: u32) -> Space {
    let labels = (0..n).map(|i| format!("s{i}")).collect();
    let dist = (0..n).map(|i| (0..n).map(|j| (i as f64 - j as f64).abs() * scale as f64 / 4.0).collect()).collect();
    Arc::new(FiniteMetricSpace::new(labels, dist).unwrap())
}

fn weights(raw: &[u8]) -> Vec<Mass> {
    let total: i64 = raw.iter().map(|&w| w as i64).sum::<i64>().max(1);
    raw.iter().map(|&w| mass::ratio(w as i64, total)).collect()
}

fn bundle_from(n: usize, scale: u32, a: &[u8], pts: &[(i8, i8)]) -> ProblemBundle {
    let mut b = ProblemBundle::default();
    let s = labelled_space(n, scale);
    let m = DiscreteMeasure::new(s.clone(), weights(&a[..n])).unwrap();
    b.plans.insert("prod".into(), TransportPlan::product(&m, &m));
    b.measures.insert("m".into(), m);
    b.spaces.insert("S".into(), s);
    let mut uniq: Vec<Vec<f64>> = Vec::new();
    for &(x, y) in pts {
        let p = vec![x as f64 / 2.0, y as f64 / 2.0];
        if !uniq.contains(&p) {
            uniq.push(p);
        }
    }
    let c = PointedEuclideanCloud::new(uniq).unwrap().to_space();
    let k = c.len();
    let cm = DiscreteMeasure::new(c.clone(), weights(&a[..k])).unwrap();
    b.measures.insert("cloud_m".into(), cm);
    b.spaces.insert("C".into(), c);
    b.config.depth = Some(scale as usize % 4 + 1);
    b
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn bundles_roundtrip_through_json(
        n in 1usize..6,
        scale in 1u32..9,
        a in prop::collection::vec(1u8..9, 8),
        pts in prop::collection::vec((-6i8..6, -6i8..6), 1..6),
    ) {
        let b = bundle_from(n, scale, &a, &pts);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("b.json");
        std::fs::write(&path, serde_json::to_vec_pretty(&b.to_json()).unwrap()).unwrap();
        let again = load_bundle(&[path.display().to_string()]).unwrap();
        prop_assert_eq!(&again, &b);
        prop_assert_eq!(again.to_json(), b.to_json());
    }

    #[test]
    fn reports_are_deterministic(
        n in 1usize..6,
        scale in 1u32..9,
        a in prop::collection::vec(1u8..9, 8),
        pts in prop::collection::vec((-6i8..6, -6i8..6), 1..6),
    ) {
        let b = bundle_from(n, scale, &a, &pts);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("b.json");
        std::fs::write(&path, serde_json::to_vec(&b.to_json()).unwrap()).unwrap();
        let file = path.display().to_string();
        let r = |name: &str| EntityRef { path: Some(file.clone()), name: Some(name.into()) };
        let loaded = load_bundle(&[file.clone()]).unwrap();
        let commands = [
            Command::Solve { mu: r("m"), nu: r("m"), cost: None, p: 2.0 },
            Command::Dual { mu: r("m"), nu: r("m") },
            Command::Disintegrate { plan: r("prod"), axis: ot_cli::commands::AxisArg::Second },
            Command::Interpolate { mu0: r("cloud_m"), mu1: r("cloud_m"), check: true, sample_pairs: None, frames_csv: None },
        ];
        for cmd in &commands {
            let x = run_command(&loaded, cmd, &Options::default()).unwrap();
            let y = run_command(&load_bundle(&[file.clone()]).unwrap(), cmd, &Options::default()).unwrap();
            prop_assert_eq!(serde_json::to_string(&x).unwrap(), serde_json::to_string(&y).unwrap());
            prop_assert!(x.passed(), "{}: {:?}", x.command, x.checks);
        }
    }
}
