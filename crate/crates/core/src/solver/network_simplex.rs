//! Primal network simplex on the bipartite transportation graph.
//!
//! Flows are exact rationals; costs and potentials are `f64`. The basis is
//! a spanning tree over the `m + n` row/column nodes with exactly
//! `m + n - 1` arcs (degenerate zero-flow arcs included). Entering and
//! leaving arcs follow Bland's smallest-index rule, which makes the pivot
//! sequence deterministic and rules out cycling on degenerate vertices.

use std::collections::VecDeque;

use num::Zero;

use crate::error::{OtError, Result};
use crate::mass::{self, Mass};

use super::CostMatrix;

/// Hard cap on pivots; Bland's rule terminates far below this.
const MAX_PIVOTS: usize = 10_000_000;

/// Optimal flows and dual potentials of a balanced transportation problem.
#[derive(Debug, Clone)]
pub struct TransportSolution {
    /// Row-major `m × n` flows.
    pub flows: Vec<Mass>,
    /// Row potentials `u` with `u_i + v_j <= c_ij`, equality on basic arcs.
    pub u: Vec<f64>,
    pub v: Vec<f64>,
    pub iterations: usize,
    /// Row-major basic arcs of the final tree.
    pub basis: Vec<(usize, usize)>,
}

impl TransportSolution {
    pub fn flow(&self, i: usize, j: usize) -> &Mass {
        &self.flows[i * self.v.len() + j]
    }

    pub fn cost(&self, c: &CostMatrix) -> f64 {
        let n = self.v.len();
        self.flows
            .iter()
            .enumerate()
            .filter(|(_, f)| !f.is_zero())
            .map(|(k, f)| mass::to_f64(f) * c.get(k / n, k % n))
            .sum()
    }
}

/// Solves `min Σ c_ij f_ij` subject to row sums `supply` and column sums
/// `demand`, `f >= 0`.
pub fn solve_transport(supply: &[Mass], demand: &[Mass], cost: &CostMatrix) -> Result<TransportSolution> {
    let (m, n) = (supply.len(), demand.len());
    if cost.rows() != m || cost.cols() != n {
        return Err(OtError::InvalidArgument(format!(
            "cost matrix is {}x{}, marginals are {m}x{n}",
            cost.rows(),
            cost.cols()
        )));
    }
    if supply.iter().chain(demand).any(|w| w < &Mass::zero()) {
        return Err(OtError::InvalidArgument("negative marginal mass".into()));
    }
    let total_supply = mass::sum(supply);
    let total_demand = mass::sum(demand);
    if total_supply != total_demand {
        return Err(OtError::Infeasible(format!(
            "total masses differ: {} vs {}",
            mass::format(&total_supply),
            mass::format(&total_demand)
        )));
    }
    if m == 0 || n == 0 {
        return Ok(TransportSolution { flows: Vec::new(), u: vec![0.0; m], v: vec![0.0; n], iterations: 0, basis: Vec::new() });
    }

    let mut tableau = Tableau::northwest_corner(supply, demand);
    let scale = cost.max_entry().max(1.0);
    let tol = 1e-12 * scale;
    let mut u = vec![0.0; m];
    let mut v = vec![0.0; n];
    let mut iterations = 0;
    loop {
        tableau.potentials(cost, &mut u, &mut v);
        let entering = (0..m * n).find(|&k| {
            !tableau.is_basic[k] && cost.get(k / n, k % n) - u[k / n] - v[k % n] < -tol
        });
        let Some(k) = entering else { break };
        tableau.pivot(k / n, k % n);
        iterations += 1;
        if iterations > MAX_PIVOTS {
            return Err(OtError::ResourceLimit(format!("network simplex exceeded {MAX_PIVOTS} pivots")));
        }
    }
    let mut basis: Vec<(usize, usize)> = tableau.arcs.clone();
    basis.sort_unstable();
    Ok(TransportSolution { flows: tableau.flows, u, v, iterations, basis })
}

struct Tableau {
    m: usize,
    n: usize,
    flows: Vec<Mass>,
    is_basic: Vec<bool>,
    arcs: Vec<(usize, usize)>,
}

impl Tableau {
    /// Staircase initial basis: `m + n - 1` arcs forming a spanning tree.
    fn northwest_corner(supply: &[Mass], demand: &[Mass]) -> Self {
        let (m, n) = (supply.len(), demand.len());
        let mut flows = vec![Mass::zero(); m * n];
        let mut is_basic = vec![false; m * n];
        let mut arcs = Vec::with_capacity(m + n - 1);
        let mut s = supply[0].clone();
        let mut d = demand[0].clone();
        let (mut i, mut j) = (0, 0);
        loop {
            let f = if s < d { s.clone() } else { d.clone() };
            s -= &f;
            d -= &f;
            flows[i * n + j] = f;
            is_basic[i * n + j] = true;
            arcs.push((i, j));
            if i == m - 1 && j == n - 1 {
                break;
            }
            if (s.is_zero() && i < m - 1) || j == n - 1 {
                i += 1;
                s = supply[i].clone();
            } else {
                j += 1;
                d = demand[j].clone();
            }
        }
        debug_assert_eq!(arcs.len(), m + n - 1);
        Tableau { m, n, flows, is_basic, arcs }
    }

    /// Node ids: rows `0..m`, columns `m..m+n`.
    fn adjacency(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.m + self.n];
        for (a, &(i, j)) in self.arcs.iter().enumerate() {
            adj[i].push(a);
            adj[self.m + j].push(a);
        }
        adj
    }

    fn potentials(&self, cost: &CostMatrix, u: &mut [f64], v: &mut [f64]) {
        let adj = self.adjacency();
        self.potentials_ordered(cost, u, v, &adj);
    }

    /// Sets each node's potential from its BFS parent, rooted at row 0.
    fn potentials_ordered(&self, cost: &CostMatrix, u: &mut [f64], v: &mut [f64], adj: &[Vec<usize>]) {
        let mut seen = vec![false; self.m + self.n];
        let mut queue = VecDeque::from([0usize]);
        seen[0] = true;
        u[0] = 0.0;
        while let Some(node) = queue.pop_front() {
            for &a in &adj[node] {
                let (i, j) = self.arcs[a];
                let other = if node < self.m { self.m + j } else { i };
                if seen[other] {
                    continue;
                }
                seen[other] = true;
                let c = cost.get(i, j);
                if node < self.m {
                    v[j] = c - u[i];
                } else {
                    u[i] = c - v[j];
                }
                queue.push_back(other);
            }
        }
    }

    /// Tree path from row `i` to column `j` as a list of arc indices.
    fn tree_path(&self, i: usize, j: usize) -> Vec<usize> {
        let adj = self.adjacency();
        let target = self.m + j;
        let mut parent_arc = vec![usize::MAX; self.m + self.n];
        let mut seen = vec![false; self.m + self.n];
        let mut queue = VecDeque::from([i]);
        seen[i] = true;
        while let Some(node) = queue.pop_front() {
            if node == target {
                break;
            }
            for &a in &adj[node] {
                let (ai, aj) = self.arcs[a];
                let other = if node < self.m { self.m + aj } else { ai };
                if !seen[other] {
                    seen[other] = true;
                    parent_arc[other] = a;
                    queue.push_back(other);
                }
            }
        }
        let mut path = Vec::new();
        let mut node = target;
        while node != i {
            let a = parent_arc[node];
            path.push(a);
            let (ai, aj) = self.arcs[a];
            node = if node < self.m { self.m + aj } else { ai };
        }
        // path runs from column j back to row i
        path
    }

    fn pivot(&mut self, i: usize, j: usize) {
        let n = self.n;
        let path = self.tree_path(i, j);
        // arcs at odd positions along the cycle (starting next to column j)
        // lose flow
        let losing: Vec<usize> = path.iter().copied().step_by(2).collect();
        let gaining: Vec<usize> = path.iter().copied().skip(1).step_by(2).collect();
        let theta = losing
            .iter()
            .map(|&a| {
                let (r, c) = self.arcs[a];
                &self.flows[r * n + c]
            })
            .min()
            .expect("a cycle has at least one losing arc")
            .clone();
        let leaving = losing
            .iter()
            .copied()
            .filter(|&a| {
                let (r, c) = self.arcs[a];
                self.flows[r * n + c] == theta
            })
            .min_by_key(|&a| {
                let (r, c) = self.arcs[a];
                r * n + c
            })
            .expect("minimum is attained");
        if !theta.is_zero() {
            for &a in &losing {
                let (r, c) = self.arcs[a];
                self.flows[r * n + c] -= &theta;
            }
            for &a in &gaining {
                let (r, c) = self.arcs[a];
                self.flows[r * n + c] += &theta;
            }
        }
        self.flows[i * n + j] = theta;
        let (lr, lc) = self.arcs[leaving];
        self.is_basic[lr * n + lc] = false;
        self.flows[lr * n + lc] = Mass::zero();
        self.is_basic[i * n + j] = true;
        self.arcs[leaving] = (i, j);
    }
}
