//! Exact Kantorovich solver, Wasserstein distances and the W₁ dual.

pub mod network_simplex;

pub use network_simplex::{solve_transport, TransportSolution};

use num::{Signed, Zero};

use crate::error::{OtError, Result};
use crate::mass::{self, Mass};
use crate::measures::{same_space, DiscreteMeasure};
use crate::metric_space::{squared_euclidean, Space};

/// Absolute tolerance for float comparisons against analytic values.
pub const DEFAULT_TOL: f64 = 1e-9;

/// Dense nonnegative cost matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct CostMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl CostMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(OtError::InvalidArgument(format!(
                "{} cost entries for a {rows}x{cols} matrix",
                data.len()
            )));
        }
        if let Some(k) = data.iter().position(|c| !c.is_finite() || *c < 0.0) {
            return Err(OtError::InvalidArgument(format!(
                "cost entry ({}, {}) = {} is not a finite nonnegative number",
                k / cols.max(1),
                k % cols.max(1),
                data[k]
            )));
        }
        Ok(CostMatrix { rows, cols, data })
    }

    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|row| row.len() != c) {
            return Err(OtError::InvalidArgument("ragged cost matrix".into()));
        }
        Self::new(r, c, rows.into_iter().flatten().collect())
    }

    pub fn from_fn(rows: usize, cols: usize, f: impl Fn(usize, usize) -> f64) -> Result<Self> {
        let data = (0..rows * cols).map(|k| f(k / cols, k % cols)).collect();
        Self::new(rows, cols, data)
    }

    /// `c(x, y) = d(x, y)^p` on a single space.
    pub fn metric_power(space: &Space, p: f64) -> Result<Self> {
        let n = space.len();
        Self::from_fn(n, n, |i, j| dist_power(space.dist(i, j), p))
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    pub fn max_entry(&self) -> f64 {
        self.data.iter().copied().fold(0.0, f64::max)
    }

    /// Sub-matrix on the given rows and columns.
    pub fn restrict(&self, rows: &[usize], cols: &[usize]) -> CostMatrix {
        let data = rows
            .iter()
            .flat_map(|&i| cols.iter().map(move |&j| self.get(i, j)))
            .collect();
        CostMatrix { rows: rows.len(), cols: cols.len(), data }
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        self.data.chunks(self.cols.max(1)).map(<[f64]>::to_vec).take(self.rows).collect()
    }
}

pub(crate) fn dist_power(d: f64, p: f64) -> f64 {
    if p == 1.0 {
        d
    } else if p == 2.0 {
        d * d
    } else {
        d.powf(p)
    }
}

fn root(x: f64, p: f64) -> f64 {
    if p == 1.0 {
        x
    } else if p == 2.0 {
        x.sqrt()
    } else {
        x.powf(1.0 / p)
    }
}

/// A coupling on `X × Y` with exact rational entries.
#[derive(Debug, Clone)]
pub struct TransportPlan {
    rows: Space,
    cols: Space,
    mass: Vec<Mass>,
}

impl PartialEq for TransportPlan {
    fn eq(&self, other: &Self) -> bool {
        self.mass == other.mass && same_space(&self.rows, &other.rows) && same_space(&self.cols, &other.cols)
    }
}

impl TransportPlan {
    /// Row-major entries; all must be nonnegative.
    pub fn new(rows: Space, cols: Space, mass: Vec<Mass>) -> Result<Self> {
        if mass.len() != rows.len() * cols.len() {
            return Err(OtError::InvalidArgument(format!(
                "{} plan entries for a {}x{} plan",
                mass.len(),
                rows.len(),
                cols.len()
            )));
        }
        if let Some(k) = mass.iter().position(|m| m.is_negative()) {
            let n = cols.len();
            return Err(OtError::InvalidArgument(format!(
                "negative plan entry at ('{}', '{}')",
                rows.label(k / n),
                cols.label(k % n)
            )));
        }
        Ok(TransportPlan { rows, cols, mass })
    }

    pub fn from_matrix(rows: Space, cols: Space, matrix: Vec<Vec<Mass>>) -> Result<Self> {
        if matrix.len() != rows.len() || matrix.iter().any(|r| r.len() != cols.len()) {
            return Err(OtError::InvalidArgument("plan matrix shape does not match its spaces".into()));
        }
        Self::new(rows, cols, matrix.into_iter().flatten().collect())
    }

    /// The independent coupling `μ ⊗ ν`.
    pub fn product(mu: &DiscreteMeasure, nu: &DiscreteMeasure) -> Self {
        let mass = mu
            .weights()
            .iter()
            .flat_map(|a| nu.weights().iter().map(move |b| a * b))
            .collect();
        TransportPlan { rows: mu.space().clone(), cols: nu.space().clone(), mass }
    }

    /// The deterministic coupling of `μ` with `T_*μ` along `assignment`.
    pub fn deterministic(mu: &DiscreteMeasure, target: Space, assignment: &[usize]) -> Result<Self> {
        let n = target.len();
        let mut mass = vec![Mass::zero(); mu.space().len() * n];
        for (x, w) in mu.weights().iter().enumerate() {
            if w.is_zero() {
                continue;
            }
            let y = *assignment
                .get(x)
                .ok_or_else(|| OtError::InvalidArgument(format!("no image for '{}'", mu.space().label(x))))?;
            if y >= n {
                return Err(OtError::InvalidArgument(format!("image {y} outside the target space")));
            }
            mass[x * n + y] = w.clone();
        }
        Self::new(mu.space().clone(), target, mass)
    }

    pub fn row_space(&self) -> &Space {
        &self.rows
    }

    pub fn col_space(&self) -> &Space {
        &self.cols
    }

    pub fn num_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn num_cols(&self) -> usize {
        self.cols.len()
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> &Mass {
        &self.mass[i * self.cols.len() + j]
    }

    pub fn entries(&self) -> &[Mass] {
        &self.mass
    }

    pub fn row(&self, i: usize) -> &[Mass] {
        let n = self.cols.len();
        &self.mass[i * n..(i + 1) * n]
    }

    pub fn to_matrix(&self) -> Vec<Vec<Mass>> {
        (0..self.num_rows()).map(|i| self.row(i).to_vec()).collect()
    }

    /// Positive entries `(i, j)` in row-major order.
    pub fn support(&self) -> Vec<(usize, usize)> {
        let n = self.cols.len();
        (0..self.mass.len())
            .filter(|&k| self.mass[k].is_positive())
            .map(|k| (k / n, k % n))
            .collect()
    }

    /// `(proj_X)_* γ`.
    pub fn first_marginal(&self) -> DiscreteMeasure {
        let w = (0..self.num_rows()).map(|i| mass::sum(self.row(i))).collect();
        DiscreteMeasure::new(self.rows.clone(), w).expect("row sums of a nonnegative plan")
    }

    /// `(proj_Y)_* γ`.
    pub fn second_marginal(&self) -> DiscreteMeasure {
        let n = self.num_cols();
        let mut w = vec![Mass::zero(); n];
        for (k, m) in self.mass.iter().enumerate() {
            w[k % n] += m;
        }
        DiscreteMeasure::new(self.cols.clone(), w).expect("column sums of a nonnegative plan")
    }

    pub fn total_mass(&self) -> Mass {
        mass::sum(&self.mass)
    }

    /// `Σ c_ij γ_ij` in floating point.
    pub fn cost(&self, c: &CostMatrix) -> f64 {
        let n = self.num_cols();
        self.mass
            .iter()
            .enumerate()
            .filter(|(_, m)| !m.is_zero())
            .map(|(k, m)| mass::to_f64(m) * c.get(k / n, k % n))
            .sum()
    }

    /// `Σ c_ij γ_ij` with each cost read as its exact binary value.
    pub fn exact_cost(&self, c: &CostMatrix) -> Mass {
        let n = self.num_cols();
        let mut acc = Mass::zero();
        for (k, m) in self.mass.iter().enumerate() {
            if !m.is_zero() {
                acc += m * mass::from_f64(c.get(k / n, k % n)).expect("costs are finite");
            }
        }
        acc
    }

    /// Swaps the roles of `X` and `Y`.
    pub fn transpose(&self) -> TransportPlan {
        let (m, n) = (self.num_rows(), self.num_cols());
        let mass = (0..n * m).map(|k| self.get(k % m, k / m).clone()).collect();
        TransportPlan { rows: self.cols.clone(), cols: self.rows.clone(), mass }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveStatus {
    Optimal,
}

/// Output of [`solve_kantorovich`].
#[derive(Debug, Clone)]
pub struct SolveReport {
    pub plan: TransportPlan,
    pub cost: f64,
    /// Dual potentials `(u, v)`, feasible on every entry of the cost matrix.
    pub potentials: Option<(Vec<f64>, Vec<f64>)>,
    pub iterations: usize,
    pub status: SolveStatus,
}

/// Minimises `Σ c_ij γ_ij` over couplings of `mu` and `nu`.
///
/// The simplex runs on the supports only; zero-mass rows and columns get
/// potentials from the c-transform so that dual feasibility holds on the
/// whole matrix.
pub fn solve_kantorovich(mu: &DiscreteMeasure, nu: &DiscreteMeasure, c: &CostMatrix) -> Result<SolveReport> {
    let (m, n) = (mu.space().len(), nu.space().len());
    if c.rows() != m || c.cols() != n {
        return Err(OtError::InvalidArgument(format!(
            "cost matrix is {}x{}, measures live on {m} and {n} points",
            c.rows(),
            c.cols()
        )));
    }
    let (rm, cm) = (mu.total_mass(), nu.total_mass());
    if rm != cm {
        return Err(OtError::Infeasible(format!(
            "total masses differ: {} vs {}",
            mass::format(&rm),
            mass::format(&cm)
        )));
    }
    let rows = mu.support();
    let cols = nu.support();
    let supply: Vec<Mass> = rows.iter().map(|&i| mu.weight(i).clone()).collect();
    let demand: Vec<Mass> = cols.iter().map(|&j| nu.weight(j).clone()).collect();
    let sub = c.restrict(&rows, &cols);
    let sol = solve_transport(&supply, &demand, &sub)?;

    let mut plan = vec![Mass::zero(); m * n];
    for (a, &i) in rows.iter().enumerate() {
        for (b, &j) in cols.iter().enumerate() {
            plan[i * n + j] = sol.flow(a, b).clone();
        }
    }
    let mut u = vec![f64::INFINITY; m];
    let mut v = vec![f64::INFINITY; n];
    for (a, &i) in rows.iter().enumerate() {
        u[i] = sol.u[a];
    }
    for (b, &j) in cols.iter().enumerate() {
        v[j] = sol.v[b];
    }
    let potentials = if rows.is_empty() || cols.is_empty() {
        None
    } else {
        for i in 0..m {
            if u[i].is_infinite() {
                u[i] = cols.iter().map(|&j| c.get(i, j) - v[j]).fold(f64::INFINITY, f64::min);
            }
        }
        for j in 0..n {
            if v[j].is_infinite() {
                v[j] = (0..m).map(|i| c.get(i, j) - u[i]).fold(f64::INFINITY, f64::min);
            }
        }
        Some((u, v))
    };
    let plan = TransportPlan::new(mu.space().clone(), nu.space().clone(), plan)?;
    let cost = plan.cost(c);
    Ok(SolveReport { plan, cost, potentials, iterations: sol.iterations, status: SolveStatus::Optimal })
}

fn check_order(p: f64) -> Result<()> {
    if !p.is_finite() || p < 1.0 {
        return Err(OtError::InvalidParameter(format!("Wasserstein order must be a finite p >= 1, got {p}")));
    }
    Ok(())
}

/// `W_p(μ, ν)` on a common finite metric space.
///
/// Symmetric bit for bit: the pair is solved in a fixed order.
pub fn wasserstein(mu: &DiscreteMeasure, nu: &DiscreteMeasure, p: f64) -> Result<f64> {
    check_order(p)?;
    if !same_space(mu.space(), nu.space()) {
        return Err(OtError::InvalidArgument("measures live on different spaces".into()));
    }
    mu.require_probability("first measure")?;
    nu.require_probability("second measure")?;
    let (a, b) = if mu.weights() <= nu.weights() { (mu, nu) } else { (nu, mu) };
    let space = mu.space();
    let cost = |i: usize, j: usize| dist_power(space.dist(i, j), p);
    Ok(root(optimal_cost_on_supports(a, b, cost)?, p))
}

/// `W_p` between measures on (possibly different) Euclidean clouds.
pub fn wasserstein_euclidean(mu: &DiscreteMeasure, nu: &DiscreteMeasure, p: f64) -> Result<f64> {
    check_order(p)?;
    let (a, b) = match (mu.space().coords(), nu.space().coords()) {
        (Some(a), Some(b)) => (a, b),
        _ => return Err(OtError::InvalidArgument("measures need Euclidean coordinates".into())),
    };
    mu.require_probability("first measure")?;
    nu.require_probability("second measure")?;
    let cost = |i: usize, j: usize| {
        let d2 = squared_euclidean(&a[i], &b[j]);
        if p == 2.0 {
            d2
        } else {
            d2.sqrt().powf(p)
        }
    };
    Ok(root(optimal_cost_on_supports(mu, nu, cost)?, p))
}

/// Minimal `Σ c γ` restricted to the supports, with `c` given pointwise.
pub fn optimal_cost_on_supports(
    mu: &DiscreteMeasure,
    nu: &DiscreteMeasure,
    cost: impl Fn(usize, usize) -> f64,
) -> Result<f64> {
    let rows = mu.support();
    let cols = nu.support();
    let supply: Vec<Mass> = rows.iter().map(|&i| mu.weight(i).clone()).collect();
    let demand: Vec<Mass> = cols.iter().map(|&j| nu.weight(j).clone()).collect();
    let c = CostMatrix::from_fn(rows.len(), cols.len(), |a, b| cost(rows[a], cols[b]))?;
    let sol = solve_transport(&supply, &demand, &c)?;
    Ok(sol.cost(&c))
}

/// Kantorovich potential for `W₁` and the dual objective.
#[derive(Debug, Clone)]
pub struct W1Dual {
    /// 1-Lipschitz potential `φ`, normalised so that `φ(first point) = 0`.
    pub potential: Vec<f64>,
    /// `Σ φ d(μ − ν)`.
    pub value: f64,
    /// Primal `W₁` from the simplex.
    pub primal: f64,
    /// `max(|φ(a) − φ(b)| − d(a, b))` over all pairs; ≤ 0 up to rounding.
    pub lipschitz_excess: f64,
}

/// Solves the `W₁` dual `sup { ∫ φ d(μ − ν) : φ ∈ Lip₁ }`.
///
/// The potential is the c-transform `φ(x) = min_y d(x, y) − v(y)` of the
/// column potentials of the primal simplex, which is 1-Lipschitz by
/// construction and attains the primal value.
pub fn w1_dual(mu: &DiscreteMeasure, nu: &DiscreteMeasure) -> Result<W1Dual> {
    if !same_space(mu.space(), nu.space()) {
        return Err(OtError::InvalidArgument("measures live on different spaces".into()));
    }
    mu.require_probability("first measure")?;
    nu.require_probability("second measure")?;
    let space = mu.space();
    let n = space.len();
    let c = CostMatrix::metric_power(space, 1.0)?;
    let report = solve_kantorovich(mu, nu, &c)?;
    let (_, v) = report.potentials.clone().expect("probabilities have nonempty support");
    let cols = nu.support();
    let mut phi: Vec<f64> = (0..n)
        .map(|x| cols.iter().map(|&y| space.dist(x, y) - v[y]).fold(f64::INFINITY, f64::min))
        .collect();
    if let Some(&shift) = phi.first() {
        phi.iter_mut().for_each(|p| *p -= shift);
    }
    let value: f64 = (0..n)
        .map(|x| phi[x] * (mass::to_f64(mu.weight(x)) - mass::to_f64(nu.weight(x))))
        .sum();
    let mut excess = f64::NEG_INFINITY;
    for a in 0..n {
        for b in 0..n {
            excess = excess.max((phi[a] - phi[b]).abs() - space.dist(a, b));
        }
    }
    Ok(W1Dual { potential: phi, value, primal: report.cost, lipschitz_excess: excess })
}

/// A marginal entry that does not match.
#[derive(Debug, Clone, PartialEq)]
pub struct MarginalViolation {
    pub index: usize,
    pub label: String,
    pub expected: Mass,
    pub actual: Mass,
}

/// Outcome of [`verify_plan`].
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PlanCheck {
    pub space_mismatch: bool,
    pub row_violations: Vec<MarginalViolation>,
    pub column_violations: Vec<MarginalViolation>,
}

impl PlanCheck {
    pub fn passed(&self) -> bool {
        !self.space_mismatch && self.row_violations.is_empty() && self.column_violations.is_empty()
    }
}

/// Exact check of `γ[A × Y] = μ[A]` and `γ[X × B] = ν[B]` point by point.
pub fn verify_plan(plan: &TransportPlan, mu: &DiscreteMeasure, nu: &DiscreteMeasure) -> PlanCheck {
    if !same_space(plan.row_space(), mu.space()) || !same_space(plan.col_space(), nu.space()) {
        return PlanCheck { space_mismatch: true, ..Default::default() };
    }
    let diff = |actual: &DiscreteMeasure, expected: &DiscreteMeasure| {
        (0..expected.space().len())
            .filter(|&i| actual.weight(i) != expected.weight(i))
            .map(|i| MarginalViolation {
                index: i,
                label: expected.space().label(i).to_string(),
                expected: expected.weight(i).clone(),
                actual: actual.weight(i).clone(),
            })
            .collect()
    };
    PlanCheck {
        space_mismatch: false,
        row_violations: diff(&plan.first_marginal(), mu),
        column_violations: diff(&plan.second_marginal(), nu),
    }
}
