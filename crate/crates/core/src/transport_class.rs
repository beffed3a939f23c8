//! Transport classes: plans over a fixed first marginal grouped by the
//! pushforward of their disintegration maps, and the transport problem
//! restricted to one class.

use num::{Signed, Zero};

use crate::disintegration::{disintegrate, dirac_disintegration, Axis, DisintegrationMap};
use crate::error::{OtError, Result};
use crate::mass::{self, Mass};
use crate::measures::{barycenter_of_classes, pushforward, same_space, DiscreteMeasure, MeasureOverMeasures, PointMap};
use crate::parallel::{self, Execution};
use crate::solver::network_simplex::solve_transport;
use crate::solver::{wasserstein, CostMatrix, TransportPlan};

/// `[γ]`, identified by `Λ = f_*μ` and the shared first marginal `μ`.
#[derive(Debug, Clone, PartialEq)]
pub struct TransportClass {
    lambda: MeasureOverMeasures,
    mu: DiscreteMeasure,
}

impl TransportClass {
    pub fn new(lambda: MeasureOverMeasures, mu: DiscreteMeasure) -> Result<Self> {
        if lambda.total_weight() != mass::one() {
            return Err(OtError::InvalidArgument(format!(
                "class weights sum to {}",
                mass::format(&lambda.total_weight())
            )));
        }
        if !barycenter_of_classes(&lambda)?.is_probability() {
            return Err(OtError::InvalidArgument("class barycenter is not a probability".into()));
        }
        Ok(TransportClass { lambda, mu })
    }

    /// The class of `γ`.
    pub fn of_plan(gamma: &TransportPlan) -> Result<Self> {
        let (mu, f) = disintegrate(gamma, Axis::First);
        let lambda = pushforward_map(&f, &mu)?;
        Self::new(lambda, mu)
    }

    pub fn lambda(&self) -> &MeasureOverMeasures {
        &self.lambda
    }

    pub fn mu(&self) -> &DiscreteMeasure {
        &self.mu
    }

    /// Second marginal shared by every member.
    pub fn target_marginal(&self) -> DiscreteMeasure {
        barycenter_of_classes(&self.lambda).expect("validated on construction")
    }

    pub fn contains(&self, gamma: &TransportPlan) -> Result<bool> {
        let (mu, f) = disintegrate(gamma, Axis::First);
        if mu != self.mu {
            return Ok(false);
        }
        Ok(pushforward_map(&f, &mu)? == self.lambda)
    }
}

/// `f_*μ = Σ_x μ(x) δ_{f(x)}` with equal conditionals merged exactly.
pub fn pushforward_map(f: &DisintegrationMap, mu: &DiscreteMeasure) -> Result<MeasureOverMeasures> {
    if !same_space(mu.space(), f.base()) {
        return Err(OtError::InvalidArgument("measure does not live on the map's base".into()));
    }
    let mut items = Vec::new();
    for x in mu.support() {
        let cond = f
            .get(x)
            .ok_or_else(|| OtError::MissingConditional(format!("'{}'", mu.space().label(x))))?;
        items.push((cond.clone(), mu.weight(x).clone()));
    }
    MeasureOverMeasures::collect(items)
}

/// Whether two plans with the same first marginal lie in the same class.
pub fn equivalent_by_disintegration(gamma: &TransportPlan, eta: &TransportPlan) -> Result<bool> {
    if !same_space(gamma.row_space(), eta.row_space()) || !same_space(gamma.col_space(), eta.col_space()) {
        return Err(OtError::InvalidComparison("plans live on different spaces".into()));
    }
    let (mu, f) = disintegrate(gamma, Axis::First);
    let (mu2, g) = disintegrate(eta, Axis::First);
    if mu != mu2 {
        return Err(OtError::InvalidComparison("plans have different first marginals".into()));
    }
    Ok(pushforward_map(&f, &mu)? == pushforward_map(&g, &mu)?)
}

/// Both sides of the point-map criterion, computed independently.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DiracEquivalenceReport {
    /// `T_*μ = S_*μ`.
    pub points_equal: bool,
    /// `f_*μ = g_*μ` for the Dirac disintegrations of `T` and `S`.
    pub classes_equal: bool,
}

impl DiracEquivalenceReport {
    pub fn consistent(&self) -> bool {
        self.points_equal == self.classes_equal
    }
}

pub fn check_dirac_equivalence(t: &PointMap, s: &PointMap, mu: &DiscreteMeasure) -> Result<DiracEquivalenceReport> {
    let points_equal = pushforward(mu, t)? == pushforward(mu, s)?;
    let f = dirac_disintegration(t, mu)?;
    let g = dirac_disintegration(s, mu)?;
    let classes_equal = pushforward_map(&f, mu)? == pushforward_map(&g, mu)?;
    Ok(DiracEquivalenceReport { points_equal, classes_equal })
}

/// `∫ λ dΛ = ν`, exactly.
pub fn lambda_consistent(l: &MeasureOverMeasures, nu: &DiscreteMeasure) -> bool {
    barycenter_of_classes(l).is_ok_and(|b| b == *nu)
}

/// `c̃(x, λ) = Σ_y c(x, y) λ(y)`.
pub fn abstract_cost(x: usize, lam: &DiscreteMeasure, c: &CostMatrix) -> f64 {
    lam.weights().iter().enumerate().map(|(y, w)| c.get(x, y) * mass::to_f64(w)).sum()
}

fn abstract_cost_exact(x: usize, lam: &DiscreteMeasure, c: &CostMatrix) -> Result<Mass> {
    let mut acc = Mass::zero();
    for (y, w) in lam.weights().iter().enumerate() {
        if !w.is_zero() {
            acc += mass::from_f64(c.get(x, y))? * w;
        }
    }
    Ok(acc)
}

/// Default bound on `|supp μ|` for [`solve_mk_in_class`].
pub const DEFAULT_SEARCH_CAP: usize = 12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MkConfig {
    pub search_cap: usize,
    pub execution: Execution,
}

impl Default for MkConfig {
    fn default() -> Self {
        MkConfig { search_cap: DEFAULT_SEARCH_CAP, execution: Execution::default() }
    }
}

/// Optimal member of a transport class.
#[derive(Debug, Clone)]
pub struct MkSolution {
    pub map: DisintegrationMap,
    /// Atom index of `Λ` chosen at each point, `None` off the support.
    pub assignment: Vec<Option<usize>>,
    pub cost: f64,
    /// Cost with each `c(x, y)` read as its exact binary value.
    pub exact_cost: Mass,
    /// Value of the transport relaxation between `μ` and the atom weights.
    pub relaxation_bound: f64,
    pub nodes: u64,
}

impl MkSolution {
    pub fn plan(&self, mu: &DiscreteMeasure) -> Result<TransportPlan> {
        crate::disintegration::reassemble(mu, &self.map)
    }
}

pub fn solve_mk_in_class(c: &CostMatrix, mu: &DiscreteMeasure, l: &MeasureOverMeasures) -> Result<MkSolution> {
    solve_mk_in_class_with(c, mu, l, &MkConfig::default())
}

struct Search<'a> {
    order: &'a [usize],
    masses: &'a [Mass],
    /// `μ(x) c̃(x, λ_j)`, indexed by search position then atom.
    weighted: &'a [Vec<f64>],
    weighted_exact: &'a [Vec<Mass>],
}

#[derive(Default)]
struct Best {
    choice: Option<Vec<usize>>,
    exact: Option<Mass>,
    approx: f64,
    nodes: u64,
}

const PRUNE_SLACK: f64 = 1e-9;

impl Search<'_> {
    fn run(&self, first_atom: usize, capacity: &[Mass]) -> Best {
        let mut best = Best { approx: f64::INFINITY, ..Best::default() };
        let mut cap = capacity.to_vec();
        if cap[first_atom] < self.masses[0] {
            return best;
        }
        cap[first_atom] -= &self.masses[0];
        let mut choice = vec![first_atom];
        self.descend(1, &mut cap, &mut choice, self.weighted[0][first_atom], &mut best);
        best
    }

    fn descend(&self, depth: usize, cap: &mut [Mass], choice: &mut Vec<usize>, partial: f64, best: &mut Best) {
        best.nodes += 1;
        if depth == self.order.len() {
            let exact = mass::sum(
                choice.iter().enumerate().map(|(k, &j)| &self.weighted_exact[k][j]).collect::<Vec<_>>(),
            );
            if best.exact.as_ref().is_none_or(|b| exact < *b) {
                best.approx = partial;
                best.exact = Some(exact);
                best.choice = Some(choice.clone());
            }
            return;
        }
        let mut bound = partial;
        for k in depth..self.order.len() {
            let cheapest = (0..cap.len())
                .filter(|&j| cap[j] >= self.masses[k])
                .map(|j| self.weighted[k][j])
                .fold(f64::INFINITY, f64::min);
            if cheapest.is_infinite() {
                return;
            }
            bound += cheapest;
        }
        if bound > best.approx + PRUNE_SLACK * best.approx.abs().max(1.0) {
            return;
        }
        for j in 0..cap.len() {
            if cap[j] < self.masses[depth] {
                continue;
            }
            cap[j] -= &self.masses[depth];
            choice.push(j);
            self.descend(depth + 1, cap, choice, partial + self.weighted[depth][j], best);
            choice.pop();
            cap[j] += &self.masses[depth];
        }
    }
}

/// Minimises `Σ_x μ(x) c̃(x, f(x))` over maps `f: supp μ → atoms(Λ)` with
/// `f_*μ = Λ`, by branch and bound over point-to-atom assignments.
///
/// Top-level branches (the atom of the first searched point) are explored
/// independently and reduced in branch order, so sequential and parallel
/// execution return the same map.
pub fn solve_mk_in_class_with(
    c: &CostMatrix,
    mu: &DiscreteMeasure,
    l: &MeasureOverMeasures,
    config: &MkConfig,
) -> Result<MkSolution> {
    let target = l
        .target_space()
        .ok_or_else(|| OtError::InvalidArgument("empty class".into()))?
        .clone();
    if c.rows() != mu.space().len() || c.cols() != target.len() {
        return Err(OtError::InvalidArgument(format!(
            "cost matrix is {}x{}, expected {}x{}",
            c.rows(),
            c.cols(),
            mu.space().len(),
            target.len()
        )));
    }
    mu.require_probability("first marginal")?;
    if l.total_weight() != mass::one() {
        return Err(OtError::InvalidArgument("class weights must sum to 1".into()));
    }
    for (i, (lam, _)) in l.atoms().iter().enumerate() {
        if !lam.is_probability() {
            return Err(OtError::InvalidArgument(format!("atom {i} is not a probability")));
        }
    }
    let mut order = mu.support();
    if order.len() > config.search_cap {
        return Err(OtError::ResourceLimit(format!(
            "{} support points exceed the search cap of {}",
            order.len(),
            config.search_cap
        )));
    }
    order.sort_by(|&a, &b| mu.weight(b).cmp(mu.weight(a)));
    let atoms = l.atoms();
    let masses: Vec<Mass> = order.iter().map(|&x| mu.weight(x).clone()).collect();
    let weighted: Vec<Vec<f64>> = order
        .iter()
        .map(|&x| atoms.iter().map(|(lam, _)| mass::to_f64(mu.weight(x)) * abstract_cost(x, lam, c)).collect())
        .collect();
    let weighted_exact = order
        .iter()
        .map(|&x| {
            atoms
                .iter()
                .map(|(lam, _)| Ok(mu.weight(x) * abstract_cost_exact(x, lam, c)?))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    let capacity: Vec<Mass> = atoms.iter().map(|(_, w)| w.clone()).collect();

    let relaxation_bound = {
        let cols: Vec<usize> = (0..atoms.len()).filter(|&j| capacity[j].is_positive()).collect();
        let demand: Vec<Mass> = cols.iter().map(|&j| capacity[j].clone()).collect();
        let ct = CostMatrix::from_fn(order.len(), cols.len(), |k, b| {
            abstract_cost(order[k], &atoms[cols[b]].0, c)
        })?;
        solve_transport(&masses, &demand, &ct)?.cost(&ct)
    };

    let search = Search { order: &order, masses: &masses, weighted: &weighted, weighted_exact: &weighted_exact };
    let branches: Vec<usize> = (0..atoms.len()).collect();
    let results = parallel::map(config.execution, &branches, |&j| search.run(j, &capacity));
    let nodes = results.iter().map(|b| b.nodes).sum();
    let mut winner: Option<Best> = None;
    for r in results {
        let Some(exact) = &r.exact else { continue };
        if winner.as_ref().is_none_or(|w| exact < w.exact.as_ref().unwrap()) {
            winner = Some(r);
        }
    }
    let best = winner.ok_or_else(|| {
        OtError::InfeasibleClass("no map from the support aggregates to the class weights".into())
    })?;
    let choice = best.choice.expect("leaf reached");
    let mut assignment = vec![None; mu.space().len()];
    let mut conditionals = vec![None; mu.space().len()];
    for (k, &x) in order.iter().enumerate() {
        assignment[x] = Some(choice[k]);
        conditionals[x] = Some(atoms[choice[k]].0.clone());
    }
    let map = DisintegrationMap::new(mu.space().clone(), target, conditionals)?;
    let exact_cost = best.exact.expect("leaf reached");
    Ok(MkSolution { map, assignment, cost: mass::to_f64(&exact_cost), exact_cost, relaxation_bound, nodes })
}

/// `W₁` between two measures over measures with ground cost `W₁(λ_i, λ_j)`.
///
/// A quantitative companion to exact class equality; zero iff the classes
/// coincide.
pub fn class_distance(a: &MeasureOverMeasures, b: &MeasureOverMeasures) -> Result<f64> {
    let (sa, sb) = match (a.target_space(), b.target_space()) {
        (Some(x), Some(y)) => (x, y),
        _ => return Err(OtError::InvalidArgument("empty measure over measures".into())),
    };
    if !same_space(sa, sb) {
        return Err(OtError::InvalidArgument("classes live on different spaces".into()));
    }
    if a.total_weight() != b.total_weight() {
        return Err(OtError::InvalidArgument("classes have different total weight".into()));
    }
    let mut ground = Vec::with_capacity(a.len() * b.len());
    for (la, _) in a.atoms() {
        for (lb, _) in b.atoms() {
            ground.push(wasserstein(la, lb, 1.0)?);
        }
    }
    let c = CostMatrix::new(a.len(), b.len(), ground)?;
    let supply: Vec<Mass> = a.atoms().iter().map(|(_, w)| w.clone()).collect();
    let demand: Vec<Mass> = b.atoms().iter().map(|(_, w)| w.clone()).collect();
    Ok(solve_transport(&supply, &demand, &c)?.cost(&c))
}
