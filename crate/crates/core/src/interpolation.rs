//! Gluing of couplings and dyadic displacement interpolation between
//! measures on Euclidean clouds.
//!
//! Intermediate frames live on fresh clouds built from the interpolated
//! points. Coordinates are merged on a `1e-12` grid and the resulting
//! points are sorted lexicographically, so frames are reproducible.
//! Optimal plans are not unique in general; the solver's pivoting rule
//! fixes one, and a path represents that single interpolation.

use std::collections::BTreeMap;

use num::{Signed, Zero};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{OtError, Result};
use crate::mass::{self, Mass};
use crate::measures::{same_space, DiscreteMeasure};
use crate::metric_space::{squared_euclidean, PointedEuclideanCloud, Space};
use crate::parallel::{self, Execution};
use crate::solver::{solve_kantorovich, wasserstein_euclidean, CostMatrix, TransportPlan};

/// Grid used to merge interpolated points.
pub const QUANTUM: f64 = 1e-12;
/// Default maximal dyadic depth (65 frames).
pub const DEFAULT_DEPTH_CAP: usize = 6;
/// Tolerance of [`check_constant_speed`].
pub const SPEED_TOL: f64 = 1e-7;
/// Tolerance of [`check_cyclical_monotonicity`], relative to `max(1, max c)`.
pub const CYCLE_TOL: f64 = 1e-12;

/// A coupling of three measures, row-major over `X₁ × X₂ × X₃`.
#[derive(Debug, Clone, PartialEq)]
pub struct Coupling3 {
    spaces: [Space; 3],
    mass: Vec<Mass>,
}

impl Coupling3 {
    pub fn spaces(&self) -> &[Space; 3] {
        &self.spaces
    }

    fn dims(&self) -> [usize; 3] {
        [self.spaces[0].len(), self.spaces[1].len(), self.spaces[2].len()]
    }

    pub fn get(&self, x: usize, y: usize, z: usize) -> &Mass {
        let [_, n2, n3] = self.dims();
        &self.mass[(x * n2 + y) * n3 + z]
    }

    /// Projection onto the axes `a < b`.
    pub fn marginal(&self, a: usize, b: usize) -> TransportPlan {
        let d = self.dims();
        let mut out = vec![Mass::zero(); d[a] * d[b]];
        for x in 0..d[0] {
            for y in 0..d[1] {
                for z in 0..d[2] {
                    let w = self.get(x, y, z);
                    if !w.is_zero() {
                        let idx = [x, y, z];
                        out[idx[a] * d[b] + idx[b]] += w;
                    }
                }
            }
        }
        TransportPlan::new(self.spaces[a].clone(), self.spaces[b].clone(), out).expect("nonnegative")
    }
}

/// Glues `γ₁₂` and `γ₂₃` along their common marginal `μ₂`:
/// `μ₁₂₃(x, y, z) = γ₁₂(x, y) γ₂₃(y, z) / μ₂(y)`.
pub fn glue(gamma12: &TransportPlan, gamma23: &TransportPlan) -> Result<Coupling3> {
    if !same_space(gamma12.col_space(), gamma23.row_space()) {
        return Err(OtError::GlueMismatch("middle spaces differ".into()));
    }
    let mid = gamma12.second_marginal();
    if mid != gamma23.first_marginal() {
        return Err(OtError::GlueMismatch("second marginal of the first plan is not the first marginal of the second".into()));
    }
    let (n1, n2, n3) = (gamma12.num_rows(), gamma12.num_cols(), gamma23.num_cols());
    let mut m = vec![Mass::zero(); n1 * n2 * n3];
    for y in mid.support() {
        let my = mid.weight(y);
        for x in 0..n1 {
            let a = gamma12.get(x, y);
            if a.is_zero() {
                continue;
            }
            for z in 0..n3 {
                let b = gamma23.get(y, z);
                if !b.is_zero() {
                    m[(x * n2 + y) * n3 + z] = a * b / my;
                }
            }
        }
    }
    let spaces = [gamma12.row_space().clone(), gamma12.col_space().clone(), gamma23.col_space().clone()];
    Ok(Coupling3 { spaces, mass: m })
}

fn coords(m: &DiscreteMeasure) -> Result<&[Vec<f64>]> {
    m.space()
        .coords()
        .ok_or_else(|| OtError::InvalidArgument("measure needs Euclidean coordinates".into()))
}

/// Positive atoms as `(coordinates, weight)`, sorted by coordinates.
pub fn euclidean_atoms(m: &DiscreteMeasure) -> Result<Vec<(Vec<f64>, Mass)>> {
    let c = coords(m)?;
    let mut out: Vec<_> = m.support().into_iter().map(|i| (c[i].clone(), m.weight(i).clone())).collect();
    out.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("finite coordinates"));
    Ok(out)
}

fn quantize(p: &[f64]) -> Vec<i128> {
    p.iter().map(|c| (c / QUANTUM).round() as i128).collect()
}

/// Squared-distance plan between measures on two clouds.
fn quadratic_plan(mu0: &DiscreteMeasure, mu1: &DiscreteMeasure) -> Result<TransportPlan> {
    let (a, b) = (coords(mu0)?, coords(mu1)?);
    let c = CostMatrix::from_fn(a.len(), b.len(), |i, j| squared_euclidean(&a[i], &b[j]))?;
    Ok(solve_kantorovich(mu0, mu1, &c)?.plan)
}

/// Pushforward of `plan` under `(x, z) ↦ (1 − t) x + t z` on a new cloud.
fn displacement_frame(plan: &TransportPlan, t: f64) -> Result<DiscreteMeasure> {
    let a = plan.row_space().coords().expect("checked by caller");
    let b = plan.col_space().coords().expect("checked by caller");
    let mut merged: BTreeMap<Vec<i128>, (Vec<f64>, Mass)> = BTreeMap::new();
    for (i, j) in plan.support() {
        let p: Vec<f64> = a[i].iter().zip(&b[j]).map(|(x, z)| (1.0 - t) * x + t * z).collect();
        let slot = merged.entry(quantize(&p)).or_insert_with(|| (p, Mass::zero()));
        slot.1 += plan.get(i, j);
    }
    let (points, weights): (Vec<_>, Vec<_>) = merged.into_values().unzip();
    let cloud = PointedEuclideanCloud::new(points)?;
    DiscreteMeasure::new(cloud.to_space(), weights)
}

fn check_time(t: &Mass) -> Result<()> {
    if t.is_negative() || *t > mass::one() {
        return Err(OtError::InvalidParameter(format!("time {} is outside [0, 1]", mass::format(t))));
    }
    Ok(())
}

/// McCann interpolant `μ_t` of the quadratic optimal plan.
pub fn mccann_step(mu0: &DiscreteMeasure, mu1: &DiscreteMeasure, t: &Mass) -> Result<DiscreteMeasure> {
    check_time(t)?;
    mu0.require_probability("initial measure")?;
    mu1.require_probability("final measure")?;
    let plan = quadratic_plan(mu0, mu1)?;
    if t.is_zero() {
        return Ok(mu0.clone());
    }
    if *t == mass::one() {
        return Ok(mu1.clone());
    }
    displacement_frame(&plan, mass::to_f64(t))
}

/// A path through support points of consecutive frames.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    /// Index into the space of each frame.
    pub points: Vec<usize>,
    pub weight: Mass,
}

/// Frames at the dyadic times `i / 2^k` and a law on piecewise-linear
/// trajectories whose evaluations reproduce them.
#[derive(Debug, Clone)]
pub struct InterpolationPath {
    pub depth: usize,
    pub times: Vec<Mass>,
    pub measures: Vec<DiscreteMeasure>,
    pub trajectories: Vec<Trajectory>,
}

impl InterpolationPath {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// `(e_{t_i})_* Θ`.
    pub fn evaluate(&self, i: usize) -> DiscreteMeasure {
        let space = self.measures[i].space().clone();
        let mut w = vec![Mass::zero(); space.len()];
        for tr in &self.trajectories {
            w[tr.points[i]] += &tr.weight;
        }
        DiscreteMeasure::new(space, w).expect("nonnegative")
    }

    /// `(e_{t_i}, e_{t_j})_* Θ`.
    pub fn coupling(&self, i: usize, j: usize) -> TransportPlan {
        let (a, b) = (self.measures[i].space(), self.measures[j].space());
        let mut w = vec![Mass::zero(); a.len() * b.len()];
        for tr in &self.trajectories {
            w[tr.points[i] * b.len() + tr.points[j]] += &tr.weight;
        }
        TransportPlan::new(a.clone(), b.clone(), w).expect("nonnegative")
    }

    /// Coordinates of a trajectory at every stored time.
    pub fn trajectory_coords(&self, tr: &Trajectory) -> Vec<Vec<f64>> {
        tr.points
            .iter()
            .enumerate()
            .map(|(i, &p)| self.measures[i].space().coords().expect("Euclidean frames")[p].clone())
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct InterpolationConfig {
    pub depth_cap: usize,
    pub execution: Execution,
}

impl Default for InterpolationConfig {
    fn default() -> Self {
        InterpolationConfig { depth_cap: DEFAULT_DEPTH_CAP, execution: Execution::default() }
    }
}

pub fn dyadic_interpolation(mu0: &DiscreteMeasure, mu1: &DiscreteMeasure, k: usize) -> Result<InterpolationPath> {
    dyadic_interpolation_with(mu0, mu1, k, &InterpolationConfig::default())
}

/// Builds the level-`k` dyadic interpolation.
///
/// Frames come from the global quadratic plan. Each consecutive pair of
/// frames is then coupled optimally (independently, possibly in parallel)
/// and the couplings are glued left to right into the trajectory law.
pub fn dyadic_interpolation_with(
    mu0: &DiscreteMeasure,
    mu1: &DiscreteMeasure,
    k: usize,
    config: &InterpolationConfig,
) -> Result<InterpolationPath> {
    if k == 0 {
        return Err(OtError::InvalidParameter("depth must be at least 1".into()));
    }
    if k > config.depth_cap {
        return Err(OtError::ResourceLimit(format!("depth {k} exceeds the cap of {}", config.depth_cap)));
    }
    mu0.require_probability("initial measure")?;
    mu1.require_probability("final measure")?;
    let plan = quadratic_plan(mu0, mu1)?;
    let steps = 1usize << k;
    let times: Vec<Mass> = (0..=steps).map(|i| mass::ratio(i as i64, steps as i64)).collect();
    let measures = times
        .iter()
        .map(|t| {
            if t.is_zero() {
                Ok(mu0.clone())
            } else if *t == mass::one() {
                Ok(mu1.clone())
            } else {
                displacement_frame(&plan, mass::to_f64(t))
            }
        })
        .collect::<Result<Vec<_>>>()?;

    let intervals: Vec<usize> = (0..steps).collect();
    let couplings = parallel::map(config.execution, &intervals, |&i| quadratic_plan(&measures[i], &measures[i + 1]))
        .into_iter()
        .collect::<Result<Vec<_>>>()?;

    let first = &couplings[0];
    let mut trajectories: Vec<Trajectory> = first
        .support()
        .into_iter()
        .map(|(x, y)| Trajectory { points: vec![x, y], weight: first.get(x, y).clone() })
        .collect();
    for (i, gamma) in couplings.iter().enumerate().skip(1) {
        let marginal = measures[i].weights();
        let mut next = Vec::with_capacity(trajectories.len());
        for tr in trajectories {
            let y = *tr.points.last().expect("nonempty");
            for (z, g) in gamma.row(y).iter().enumerate() {
                if g.is_zero() {
                    continue;
                }
                let mut points = tr.points.clone();
                points.push(z);
                next.push(Trajectory { points, weight: &tr.weight * g / &marginal[y] });
            }
        }
        trajectories = next;
    }
    Ok(InterpolationPath { depth: k, times, measures, trajectories })
}

/// `W₂` between two stored frames against `(t − s) W₂(μ₀, μ₁)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpeedSample {
    pub s: usize,
    pub t: usize,
    pub w2: f64,
    pub expected: f64,
}

impl SpeedSample {
    pub fn deviation(&self) -> f64 {
        (self.w2 - self.expected).abs()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConstantSpeedReport {
    pub total: f64,
    pub samples: Vec<SpeedSample>,
    pub max_deviation: f64,
    /// First pair `(s, t)` of frame indices outside tolerance.
    pub failing_pair: Option<(usize, usize)>,
    /// Largest `|C^{t₁,t₂} + C^{t₂,t₃} − C^{t₁,t₃}|` with `C^{s,t} = W₂²/(t − s)`.
    pub additivity_max_deviation: f64,
    pub failing_triple: Option<(usize, usize, usize)>,
}

impl ConstantSpeedReport {
    pub fn passed(&self) -> bool {
        self.failing_pair.is_none() && self.failing_triple.is_none()
    }
}

pub fn check_constant_speed(path: &InterpolationPath) -> Result<ConstantSpeedReport> {
    check_constant_speed_with(path, Execution::default())
}

/// Checks `W₂(μ_s, μ_t) = (t − s) W₂(μ₀, μ₁)` for every stored pair and
/// additivity of the action `C^{s,t}` over every stored triple.
pub fn check_constant_speed_with(path: &InterpolationPath, execution: Execution) -> Result<ConstantSpeedReport> {
    let n = path.len();
    let t: Vec<f64> = path.times.iter().map(mass::to_f64).collect();
    let pairs: Vec<(usize, usize)> = (0..n).flat_map(|s| (s + 1..n).map(move |u| (s, u))).collect();
    let w = parallel::map(execution, &pairs, |&(s, u)| wasserstein_euclidean(&path.measures[s], &path.measures[u], 2.0))
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    let mut table = vec![vec![0.0; n]; n];
    for (&(s, u), &d) in pairs.iter().zip(&w) {
        table[s][u] = d;
    }
    let total = table[0][n - 1] / (t[n - 1] - t[0]);
    let samples: Vec<SpeedSample> = pairs
        .iter()
        .map(|&(s, u)| SpeedSample { s, t: u, w2: table[s][u], expected: (t[u] - t[s]) * total })
        .collect();
    let max_deviation = samples.iter().map(SpeedSample::deviation).fold(0.0, f64::max);
    let failing_pair = samples.iter().find(|p| p.deviation() > SPEED_TOL).map(|p| (p.s, p.t));

    let action = |s: usize, u: usize| table[s][u].powi(2) / (t[u] - t[s]);
    let mut additivity_max_deviation: f64 = 0.0;
    let mut failing_triple = None;
    for a in 0..n {
        for b in a + 1..n {
            for c in b + 1..n {
                let dev = (action(a, b) + action(b, c) - action(a, c)).abs();
                additivity_max_deviation = additivity_max_deviation.max(dev);
                if dev > SPEED_TOL && failing_triple.is_none() {
                    failing_triple = Some((a, b, c));
                }
            }
        }
    }
    Ok(ConstantSpeedReport { total, samples, max_deviation, failing_pair, additivity_max_deviation, failing_triple })
}

/// Which pairs of support entries a monotonicity check visits.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PairSampling {
    All,
    Random { count: usize, seed: u64 },
}

/// A 2-cycle `(x, y), (x̃, ỹ)` with `c(x, y) + c(x̃, ỹ) > c(x, ỹ) + c(x̃, y)`.
#[derive(Debug, Clone, PartialEq)]
pub struct CycleViolation {
    pub first: (usize, usize),
    pub second: (usize, usize),
    pub excess: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MonotonicityReport {
    pub pairs_checked: usize,
    pub max_excess: f64,
    pub violation: Option<CycleViolation>,
}

impl MonotonicityReport {
    pub fn passed(&self) -> bool {
        self.violation.is_none()
    }
}

/// Two-point c-cyclical monotonicity of the support of `gamma`.
pub fn check_cyclical_monotonicity(
    gamma: &TransportPlan,
    c: &CostMatrix,
    sampling: PairSampling,
) -> Result<MonotonicityReport> {
    if c.rows() != gamma.num_rows() || c.cols() != gamma.num_cols() {
        return Err(OtError::InvalidArgument("cost matrix does not match the plan".into()));
    }
    let support = gamma.support();
    let tol = CYCLE_TOL * c.max_entry().max(1.0);
    let excess = |(x, y): (usize, usize), (u, v): (usize, usize)| c.get(x, y) + c.get(u, v) - c.get(x, v) - c.get(u, y);
    let mut report = MonotonicityReport { pairs_checked: 0, max_excess: f64::NEG_INFINITY, violation: None };
    let mut visit = |a: (usize, usize), b: (usize, usize)| {
        let e = excess(a, b);
        report.pairs_checked += 1;
        report.max_excess = report.max_excess.max(e);
        if e > tol && report.violation.is_none() {
            report.violation = Some(CycleViolation { first: a, second: b, excess: e });
        }
    };
    match sampling {
        PairSampling::All => {
            for (k, &a) in support.iter().enumerate() {
                for &b in &support[k + 1..] {
                    visit(a, b);
                }
            }
        }
        PairSampling::Random { count, seed } => {
            if support.len() >= 2 {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                for _ in 0..count {
                    let a = rng.gen_range(0..support.len());
                    let b = rng.gen_range(0..support.len());
                    if a != b {
                        visit(support[a], support[b]);
                    }
                }
            }
        }
    }
    Ok(report)
}
