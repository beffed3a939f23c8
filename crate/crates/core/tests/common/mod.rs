//! Independent oracles and seeded instance generators shared by the
//! integration tests.
#![allow(dead_code)]

use std::sync::Arc;

use num::{Signed, Zero};
use ot_core::mass::{self, Mass};
use ot_core::measures::{DiscreteMeasure, MeasureOverMeasures};
use ot_core::metric_space::{FiniteMetricSpace, PointedEuclideanCloud, Space};
use ot_core::solver::{CostMatrix, TransportPlan};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn line(xs: &[f64]) -> Space {
    Arc::new(FiniteMetricSpace::on_line(xs).unwrap())
}

/// `n` distinct points of a `1/16` grid in `[-4, 4]^dim`.
pub fn random_points(r: &mut ChaCha8Rng, n: usize, dim: usize) -> Vec<Vec<f64>> {
    let mut out: Vec<Vec<f64>> = Vec::with_capacity(n);
    while out.len() < n {
        let p: Vec<f64> = (0..dim).map(|_| r.gen_range(-64i32..=64) as f64 / 16.0).collect();
        if !out.contains(&p) {
            out.push(p);
        }
    }
    out
}

pub fn random_cloud(r: &mut ChaCha8Rng, n: usize, dim: usize) -> Space {
    PointedEuclideanCloud::new(random_points(r, n, dim)).unwrap().to_space()
}

/// Random integer weights in `0..=6` (some zero, at least one positive),
/// normalised to a probability vector.
pub fn random_weights(r: &mut ChaCha8Rng, n: usize, zero_prob: f64) -> Vec<Mass> {
    let mut raw: Vec<i64> = (0..n)
        .map(|_| if r.gen_bool(zero_prob) { 0 } else { r.gen_range(1..=6) })
        .collect();
    if raw.iter().all(|&w| w == 0) {
        let k = r.gen_range(0..n);
        raw[k] = r.gen_range(1..=6);
    }
    let total: i64 = raw.iter().sum();
    raw.into_iter().map(|w| mass::ratio(w, total)).collect()
}

pub fn random_measure(r: &mut ChaCha8Rng, space: &Space, zero_prob: f64) -> DiscreteMeasure {
    let w = random_weights(r, space.len(), zero_prob);
    DiscreteMeasure::new(space.clone(), w).unwrap()
}

pub fn random_plan(r: &mut ChaCha8Rng, x: &Space, y: &Space, zero_prob: f64) -> TransportPlan {
    let w = random_weights(r, x.len() * y.len(), zero_prob);
    TransportPlan::new(x.clone(), y.clone(), w).unwrap()
}

pub fn random_cost(r: &mut ChaCha8Rng, m: usize, n: usize) -> CostMatrix {
    let data: Vec<f64> = (0..m * n).map(|_| r.gen_range(0.0..10.0)).collect();
    CostMatrix::new(m, n, data).unwrap()
}

/// Plan with first marginal `mu` whose rows are random probabilities.
pub fn random_plan_with_marginal(r: &mut ChaCha8Rng, mu: &DiscreteMeasure, y: &Space) -> TransportPlan {
    let n = y.len();
    let mut entries = Vec::with_capacity(mu.space().len() * n);
    for x in 0..mu.space().len() {
        let row = random_weights(r, n, 0.4);
        entries.extend(row.into_iter().map(|w| w * mu.weight(x)));
    }
    TransportPlan::new(mu.space().clone(), y.clone(), entries).unwrap()
}

/// A vertex of the transportation polytope and its cost.
#[derive(Debug, Clone)]
pub struct Vertex {
    pub flows: Vec<Mass>,
    pub cost: f64,
}

/// Every vertex of `{γ ≥ 0 : γ1 = supply, γᵀ1 = demand}`, found by
/// enumerating spanning trees of the bipartite graph and solving each tree
/// by leaf elimination. Degenerate vertices are reported once.
pub fn transport_vertices(supply: &[Mass], demand: &[Mass], c: &CostMatrix) -> Vec<Vertex> {
    let (m, n) = (supply.len(), demand.len());
    let arcs: Vec<(usize, usize)> = (0..m).flat_map(|i| (0..n).map(move |j| (i, j))).collect();
    let k = m + n - 1;
    let mut out: Vec<Vertex> = Vec::new();
    let mut chosen = Vec::with_capacity(k);
    enumerate(&arcs, 0, k, &mut chosen, &mut |tree| {
        if !is_forest(m, n, tree) {
            return;
        }
        let Some(flows) = solve_tree(supply, demand, tree) else { return };
        if flows.iter().any(|f| f.is_negative()) {
            return;
        }
        if out.iter().any(|v| v.flows == flows) {
            return;
        }
        let cost = flows.iter().enumerate().map(|(a, f)| mass::to_f64(f) * c.get(a / n, a % n)).sum();
        out.push(Vertex { flows, cost });
    });
    out
}

fn enumerate(
    arcs: &[(usize, usize)],
    start: usize,
    k: usize,
    chosen: &mut Vec<(usize, usize)>,
    visit: &mut impl FnMut(&[(usize, usize)]),
) {
    if chosen.len() == k {
        visit(chosen);
        return;
    }
    for a in start..arcs.len() {
        if arcs.len() - a < k - chosen.len() {
            break;
        }
        chosen.push(arcs[a]);
        enumerate(arcs, a + 1, k, chosen, visit);
        chosen.pop();
    }
}

fn is_forest(m: usize, n: usize, arcs: &[(usize, usize)]) -> bool {
    let mut parent: Vec<usize> = (0..m + n).collect();
    fn find(p: &mut [usize], mut x: usize) -> usize {
        while p[x] != x {
            p[x] = p[p[x]];
            x = p[x];
        }
        x
    }
    for &(i, j) in arcs {
        let (a, b) = (find(&mut parent, i), find(&mut parent, m + j));
        if a == b {
            return false;
        }
        parent[a] = b;
    }
    true
}

fn solve_tree(supply: &[Mass], demand: &[Mass], tree: &[(usize, usize)]) -> Option<Vec<Mass>> {
    let (m, n) = (supply.len(), demand.len());
    let mut residual: Vec<Mass> = supply.iter().chain(demand).cloned().collect();
    let mut live: Vec<bool> = vec![true; tree.len()];
    let mut flows = vec![Mass::zero(); m * n];
    for _ in 0..tree.len() {
        let mut degree = vec![0usize; m + n];
        for (e, &(i, j)) in tree.iter().enumerate() {
            if live[e] {
                degree[i] += 1;
                degree[m + j] += 1;
            }
        }
        let (e, leaf) = tree.iter().enumerate().find_map(|(e, &(i, j))| {
            if !live[e] {
                None
            } else if degree[i] == 1 {
                Some((e, i))
            } else if degree[m + j] == 1 {
                Some((e, m + j))
            } else {
                None
            }
        })?;
        let (i, j) = tree[e];
        let other = if leaf == i { m + j } else { i };
        let f = residual[leaf].clone();
        residual[other] -= &f;
        residual[leaf] = Mass::zero();
        flows[i * n + j] = f;
        live[e] = false;
    }
    residual.iter().all(Zero::is_zero).then_some(flows)
}

/// Minimum cost over the vertices of the transportation polytope.
pub fn vertex_minimum(supply: &[Mass], demand: &[Mass], c: &CostMatrix) -> f64 {
    transport_vertices(supply, demand, c).iter().map(|v| v.cost).fold(f64::INFINITY, f64::min)
}

/// `c(x, y)` read as an exact rational.
pub fn exact_entry(c: &CostMatrix, x: usize, y: usize) -> Mass {
    mass::from_f64(c.get(x, y)).unwrap()
}

/// `Σ_y c(x, y) λ(y)`, exactly.
pub fn exact_abstract_cost(c: &CostMatrix, x: usize, lam: &DiscreteMeasure) -> Mass {
    let mut acc = Mass::zero();
    for (y, w) in lam.weights().iter().enumerate() {
        acc += exact_entry(c, x, y) * w;
    }
    acc
}

/// Minimum of `Σ μ(x) c̃(x, f(x))` over every map from the support of `mu`
/// to the atoms of `l` whose pushforward is `l`; `None` when none exists.
pub fn exhaustive_mk(c: &CostMatrix, mu: &DiscreteMeasure, l: &MeasureOverMeasures) -> Option<Mass> {
    let support = mu.support();
    let atoms = l.atoms();
    let k = atoms.len();
    let total = k.pow(support.len() as u32);
    let table: Vec<Vec<Mass>> = support
        .iter()
        .map(|&x| atoms.iter().map(|(a, _)| mu.weight(x) * exact_abstract_cost(c, x, a)).collect())
        .collect();
    let mut best: Option<Mass> = None;
    for code in 0..total {
        let mut rest = code;
        let mut load = vec![Mass::zero(); k];
        let mut cost = Mass::zero();
        for (s, &x) in support.iter().enumerate() {
            let j = rest % k;
            rest /= k;
            load[j] += mu.weight(x);
            cost += &table[s][j];
        }
        if load.iter().zip(atoms).all(|(a, (_, w))| a == w) && best.as_ref().is_none_or(|b| cost < *b) {
            best = Some(cost);
        }
    }
    best
}

/// Midpoint rule for `∫_a^b f`.
pub fn midpoint_riemann(f: impl Fn(f64) -> f64, a: f64, b: f64, steps: usize) -> f64 {
    let h = (b - a) / steps as f64;
    (0..steps).map(|i| f(a + (i as f64 + 0.5) * h)).sum::<f64>() * h
}

/// Random probability measures on `y`, pairwise distinct. A one-point
/// space carries a single probability, so `k` is capped at 1 there.
pub fn random_atoms(r: &mut ChaCha8Rng, y: &Space, k: usize) -> Vec<DiscreteMeasure> {
    let k = if y.len() == 1 { k.min(1) } else { k };
    let mut out: Vec<DiscreteMeasure> = Vec::with_capacity(k);
    while out.len() < k {
        let m = random_measure(r, y, 0.3);
        if !out.contains(&m) {
            out.push(m);
        }
    }
    out
}

/// A random map from `0..n` onto `0..k` (every value hit when `n ≥ k`).
pub fn random_surjection(r: &mut ChaCha8Rng, n: usize, k: usize) -> Vec<usize> {
    let mut f: Vec<usize> = (0..n).map(|i| if i < k { i } else { r.gen_range(0..k) }).collect();
    f.shuffle(r);
    f
}
