mod common;

use common::*;
use ot_core::disintegration::{disintegrate, Axis, DisintegrationMap};
use ot_core::mass;
use ot_core::measures::{pushforward, MeasureOverMeasures, PointMap};
use ot_core::parallel::Execution;
use ot_core::solver::{solve_kantorovich, solve_transport, CostMatrix, TransportPlan};
use ot_core::transport_class::{
    abstract_cost, check_dirac_equivalence, equivalent_by_disintegration, solve_mk_in_class,
    solve_mk_in_class_with, MkConfig, TransportClass,
};
use ot_core::DiscreteMeasure;
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::Rng;

/// Permutes the rows of a plan whose first marginal is uniform.
fn permute_rows(gamma: &TransportPlan, perm: &[usize]) -> TransportPlan {
    let rows: Vec<Vec<_>> = perm.iter().map(|&i| gamma.row(i).to_vec()).collect();
    TransportPlan::from_matrix(gamma.row_space().clone(), gamma.col_space().clone(), rows).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn equivalence_relation(seed in any::<u64>(), a in 1usize..6, b in 1usize..5) {
        let mut r = rng(seed);
        let (x, y) = (random_cloud(&mut r, a, 1), random_cloud(&mut r, b, 1));
        let mu = DiscreteMeasure::uniform(x.clone()).unwrap();
        let g = random_plan_with_marginal(&mut r, &mu, &y);
        let mut perm: Vec<usize> = (0..a).collect();
        perm.shuffle(&mut r);
        let h = permute_rows(&g, &perm);
        perm.shuffle(&mut r);
        let k = permute_rows(&h, &perm);
        let other = random_plan_with_marginal(&mut r, &mu, &y);
        let plans = [g, h, k, other];
        for p in &plans {
            prop_assert!(equivalent_by_disintegration(p, p).unwrap());
        }
        prop_assert!(equivalent_by_disintegration(&plans[0], &plans[1]).unwrap());
        prop_assert!(equivalent_by_disintegration(&plans[1], &plans[2]).unwrap());
        for i in 0..4 {
            for j in 0..4 {
                let e = equivalent_by_disintegration(&plans[i], &plans[j]).unwrap();
                prop_assert_eq!(e, equivalent_by_disintegration(&plans[j], &plans[i]).unwrap());
                for k in 0..4 {
                    if e && equivalent_by_disintegration(&plans[j], &plans[k]).unwrap() {
                        prop_assert!(equivalent_by_disintegration(&plans[i], &plans[k]).unwrap());
                    }
                }
            }
        }
    }

    #[test]
    fn maps_with_equal_pushforwards_are_equivalent(seed in any::<u64>(), a in 1usize..7, b in 1usize..5) {
        let mut r = rng(seed);
        let (x, y) = (random_cloud(&mut r, a, 1), random_cloud(&mut r, b, 1));
        let mu = DiscreteMeasure::uniform(x.clone()).unwrap();
        let t: Vec<usize> = (0..a).map(|_| r.gen_range(0..b)).collect();
        let mut sigma: Vec<usize> = (0..a).collect();
        sigma.shuffle(&mut r);
        let s: Vec<usize> = sigma.iter().map(|&i| t[i]).collect();
        let tm = PointMap::new(x.clone(), y.clone(), t.clone()).unwrap();
        let sm = PointMap::new(x.clone(), y.clone(), s.clone()).unwrap();
        prop_assert_eq!(pushforward(&mu, &tm).unwrap(), pushforward(&mu, &sm).unwrap());
        let gt = TransportPlan::deterministic(&mu, y.clone(), &t).unwrap();
        let gs = TransportPlan::deterministic(&mu, y.clone(), &s).unwrap();
        prop_assert!(equivalent_by_disintegration(&gt, &gs).unwrap());

        let nu = random_measure(&mut r, &x, 0.3);
        let u = PointMap::new(x.clone(), y.clone(), (0..a).map(|_| r.gen_range(0..b)).collect()).unwrap();
        let rep = check_dirac_equivalence(&tm, &u, &nu).unwrap();
        prop_assert!(rep.consistent());
    }

    #[test]
    fn mk_bounded_by_relaxation(seed in any::<u64>(), a in 1usize..6, b in 1usize..5, k in 1usize..4) {
        let mut r = rng(seed);
        let (x, y) = (random_cloud(&mut r, a, 1), random_cloud(&mut r, b, 1));
        let mu = random_measure(&mut r, &x, 0.0);
        let atoms = random_atoms(&mut r, &y, k.min(a));
        let f = random_surjection(&mut r, a, atoms.len());
        let conds = (0..a).map(|i| Some(atoms[f[i]].clone())).collect();
        let map = DisintegrationMap::new(x.clone(), y.clone(), conds).unwrap();
        let l = ot_core::transport_class::pushforward_map(&map, &mu).unwrap();
        let c = random_cost(&mut r, a, b);
        let sol = solve_mk_in_class(&c, &mu, &l).unwrap();
        prop_assert!(sol.relaxation_bound <= sol.cost + 1e-9);

        let supply: Vec<_> = mu.weights().to_vec();
        let demand: Vec<_> = l.atoms().iter().map(|(_, w)| w.clone()).collect();
        let ct = CostMatrix::from_fn(a, l.len(), |i, j| abstract_cost(i, &l.atoms()[j].0, &c)).unwrap();
        let relax = solve_transport(&supply, &demand, &ct).unwrap();
        let map_like = (0..a).all(|i| (0..l.len()).filter(|&j| relax.flow(i, j) != &mass::zero()).count() == 1);
        if map_like {
            prop_assert!((sol.cost - sol.relaxation_bound).abs() <= 1e-9);
        }
        let seq = solve_mk_in_class_with(&c, &mu, &l, &MkConfig { execution: Execution::Sequential, ..MkConfig::default() }).unwrap();
        prop_assert_eq!(seq.assignment, sol.assignment);
        prop_assert_eq!(seq.exact_cost, sol.exact_cost);
    }

    #[test]
    fn mk_over_vertex_classes_is_kantorovich(seed in any::<u64>(), a in 1usize..4, b in 1usize..4) {
        let mut r = rng(seed);
        let (x, y) = (random_cloud(&mut r, a, 1), random_cloud(&mut r, b, 1));
        let mu = random_measure(&mut r, &x, 0.0);
        let nu = random_measure(&mut r, &y, 0.0);
        let c = random_cost(&mut r, a, b);
        let kant = solve_kantorovich(&mu, &nu, &c).unwrap();
        let mut best = f64::INFINITY;
        for v in transport_vertices(mu.weights(), nu.weights(), &c) {
            let plan = TransportPlan::new(x.clone(), y.clone(), v.flows).unwrap();
            let class = TransportClass::of_plan(&plan).unwrap();
            let sol = solve_mk_in_class(&c, &mu, class.lambda()).unwrap();
            prop_assert!(sol.cost >= kant.cost - 1e-9);
            best = best.min(sol.cost);
        }
        prop_assert!((best - kant.cost).abs() <= 1e-9);
        let own = TransportClass::of_plan(&kant.plan).unwrap();
        let sol = solve_mk_in_class(&c, &mu, own.lambda()).unwrap();
        prop_assert!((sol.cost - kant.cost).abs() <= 1e-9);
    }

    #[test]
    fn class_of_plan_is_consistent(seed in any::<u64>(), a in 1usize..7, b in 1usize..5) {
        let mut r = rng(seed);
        let (x, y) = (random_cloud(&mut r, a, 1), random_cloud(&mut r, b, 1));
        let g = random_plan(&mut r, &x, &y, 0.4);
        let class = TransportClass::of_plan(&g).unwrap();
        prop_assert!(ot_core::transport_class::lambda_consistent(class.lambda(), &g.second_marginal()));
        prop_assert!(class.contains(&g).unwrap());
        let (mu, _) = disintegrate(&g, Axis::First);
        prop_assert_eq!(class.mu(), &mu);
        prop_assert_eq!(class.lambda().total_weight(), mass::one());
        let _ = MeasureOverMeasures::dirac(g.second_marginal());
    }
}
