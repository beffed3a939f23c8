//! Metric foliations, metric measure foliations and a family of
//! conditionals that fails to be continuous.
//!
//! Continuity is a limit notion, so it is never returned as a verdict here:
//! [`continuity_modulus`] emits `(W₂, |y − y'|)` tables and callers assert
//! finite bounds on them.

use num::{Signed, Zero};

use crate::disintegration::{disintegrate, Axis};
use crate::error::{OtError, Result};
use crate::mass::{self, Mass};
use crate::measures::{same_space, DiscreteMeasure, PointMap};
use crate::metric_space::{set_distance, FiniteMetricSpace, QuotientSpace, Space, METRIC_TOL};
use crate::parallel::{self, Execution};
use crate::solver::{wasserstein, TransportPlan};

/// Tolerance of [`check_mmf`].
pub const MMF_TOL: f64 = 1e-9;

/// A measure on a partitioned space together with its conditionals on the
/// fibres.
#[derive(Debug, Clone, PartialEq)]
pub struct FoliatedSpace {
    mu: DiscreteMeasure,
    quotient: QuotientSpace,
    /// `p_*μ`, indexed by class.
    quotient_mass: Vec<Mass>,
    /// `μ_y`, defined where `p_*μ(y) > 0`.
    conditionals: Vec<Option<DiscreteMeasure>>,
}

impl FoliatedSpace {
    /// Conditionals `μ|_F / μ(F)` of `mu` on each fibre.
    pub fn from_measure(mu: DiscreteMeasure, quotient: QuotientSpace) -> Result<Self> {
        let mut conditionals = Vec::with_capacity(quotient.num_classes());
        for fibre in quotient.classes() {
            let m = mass::sum(fibre.iter().map(|&x| mu.weight(x)));
            if m.is_zero() {
                conditionals.push(None);
                continue;
            }
            let mut w = vec![Mass::zero(); mu.space().len()];
            for &x in fibre {
                w[x] = mu.weight(x) / &m;
            }
            conditionals.push(Some(DiscreteMeasure::new(mu.space().clone(), w)?));
        }
        Self::new(mu, quotient, conditionals)
    }

    /// Validates fibre support and exact reassembly of `mu`.
    pub fn new(mu: DiscreteMeasure, quotient: QuotientSpace, conditionals: Vec<Option<DiscreteMeasure>>) -> Result<Self> {
        if !same_space(mu.space(), quotient.base()) {
            return Err(OtError::InvalidArgument("measure does not live on the quotient's base".into()));
        }
        if conditionals.len() != quotient.num_classes() {
            return Err(OtError::InvalidArgument(format!(
                "{} conditionals for {} classes",
                conditionals.len(),
                quotient.num_classes()
            )));
        }
        let quotient_mass: Vec<Mass> =
            quotient.classes().iter().map(|f| mass::sum(f.iter().map(|&x| mu.weight(x)))).collect();
        let mut rebuilt = vec![Mass::zero(); mu.space().len()];
        for (y, cond) in conditionals.iter().enumerate() {
            let Some(c) = cond else {
                if quotient_mass[y].is_positive() {
                    return Err(OtError::MissingConditional(quotient.class_name(y)));
                }
                continue;
            };
            if !same_space(c.space(), mu.space()) || !c.is_probability() {
                return Err(OtError::InvalidArgument(format!(
                    "conditional on {} is not a probability on the base",
                    quotient.class_name(y)
                )));
            }
            if let Some(x) = c.support().into_iter().find(|&x| quotient.project(x) != y) {
                return Err(OtError::InvalidArgument(format!(
                    "conditional on {} charges '{}' outside its fibre",
                    quotient.class_name(y),
                    mu.space().label(x)
                )));
            }
            for (acc, w) in rebuilt.iter_mut().zip(c.weights()) {
                *acc += &quotient_mass[y] * w;
            }
        }
        if rebuilt.as_slice() != mu.weights() {
            return Err(OtError::InvalidArgument("conditionals do not reassemble the measure".into()));
        }
        Ok(FoliatedSpace { mu, quotient, quotient_mass, conditionals })
    }

    pub fn mu(&self) -> &DiscreteMeasure {
        &self.mu
    }

    pub fn quotient(&self) -> &QuotientSpace {
        &self.quotient
    }

    pub fn quotient_mass(&self) -> &[Mass] {
        &self.quotient_mass
    }

    pub fn conditional(&self, y: usize) -> Option<&DiscreteMeasure> {
        self.conditionals.get(y).and_then(Option::as_ref)
    }
}

/// A point `x ∈ F` with `d(x, F') ≠ d(F, F')`.
#[derive(Debug, Clone, PartialEq)]
pub struct FoliationViolation {
    pub point: usize,
    pub from: usize,
    pub to: usize,
    pub point_distance: f64,
    pub set_distance: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricFoliationReport {
    pub violations: Vec<FoliationViolation>,
    pub max_deviation: f64,
}

impl MetricFoliationReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Checks that every point of a class is equidistant from every other class.
pub fn check_metric_foliation(q: &QuotientSpace) -> MetricFoliationReport {
    let base = q.base();
    let tol = METRIC_TOL * base.max_distance().max(1.0);
    let mut violations = Vec::new();
    let mut max_deviation: f64 = 0.0;
    for (from, f) in q.classes().iter().enumerate() {
        for (to, g) in q.classes().iter().enumerate() {
            if from == to {
                continue;
            }
            let d = set_distance(base, f, g);
            for &x in f {
                let dx = set_distance(base, &[x], g);
                let dev = (dx - d).abs();
                max_deviation = max_deviation.max(dev);
                if dev > tol {
                    violations.push(FoliationViolation { point: x, from, to, point_distance: dx, set_distance: d });
                }
            }
        }
    }
    MetricFoliationReport { violations, max_deviation }
}

/// `W₂(μ_y, μ_z)` against `d*(y, z)` for one pair of classes.
#[derive(Debug, Clone, PartialEq)]
pub struct MmfPair {
    pub y: usize,
    pub z: usize,
    pub w2: f64,
    pub dstar: f64,
}

impl MmfPair {
    pub fn deviation(&self) -> f64 {
        (self.w2 - self.dstar).abs()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MmfReport {
    pub pairs: Vec<MmfPair>,
    pub max_deviation: f64,
    pub violations: Vec<(usize, usize)>,
}

impl MmfReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }
}

pub fn check_mmf(fs: &FoliatedSpace) -> Result<MmfReport> {
    check_mmf_with(fs, Execution::default())
}

/// Checks `W₂(μ_y, μ_z) = d*(y, z)` over all pairs of positive-mass classes.
pub fn check_mmf_with(fs: &FoliatedSpace, execution: Execution) -> Result<MmfReport> {
    let live: Vec<usize> = (0..fs.quotient.num_classes()).filter(|&y| fs.quotient_mass[y].is_positive()).collect();
    let pairs: Vec<(usize, usize)> =
        live.iter().enumerate().flat_map(|(k, &y)| live[k + 1..].iter().map(move |&z| (y, z))).collect();
    let dstar = fs.quotient.dstar_matrix();
    let pairs = parallel::map(execution, &pairs, |&(y, z)| {
        let a = fs.conditional(y).expect("positive mass");
        let b = fs.conditional(z).expect("positive mass");
        Ok(MmfPair { y, z, w2: wasserstein(a, b, 2.0)?, dstar: dstar[y][z] })
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    let max_deviation = pairs.iter().map(MmfPair::deviation).fold(0.0, f64::max);
    let violations = pairs.iter().filter(|p| p.deviation() > MMF_TOL).map(|p| (p.y, p.z)).collect();
    Ok(MmfReport { pairs, max_deviation, violations })
}

/// One row of a continuity table.
#[derive(Debug, Clone, PartialEq)]
pub struct ModulusRow {
    pub i: usize,
    pub j: usize,
    pub w2: f64,
    pub gap: f64,
}

pub fn continuity_modulus(family: &[(f64, DiscreteMeasure)]) -> Result<Vec<ModulusRow>> {
    continuity_modulus_with(family, Execution::default())
}

/// `W₂(μ_{y_i}, μ_{y_j})` and `|y_i − y_j|` for every `i < j`.
pub fn continuity_modulus_with(family: &[(f64, DiscreteMeasure)], execution: Execution) -> Result<Vec<ModulusRow>> {
    if let Some((_, first)) = family.first() {
        if family.iter().any(|(_, m)| !same_space(m.space(), first.space())) {
            return Err(OtError::InvalidArgument("family members live on different spaces".into()));
        }
    }
    let pairs: Vec<(usize, usize)> = (0..family.len()).flat_map(|i| (i + 1..family.len()).map(move |j| (i, j))).collect();
    parallel::map(execution, &pairs, |&(i, j)| {
        let w2 = wasserstein(&family[i].1, &family[j].1, 2.0)?;
        Ok(ModulusRow { i, j, w2, gap: (family[i].0 - family[j].0).abs() })
    })
    .into_iter()
    .collect()
}

/// The grid family `μ_y = δ_{y/2}` for `y < 1` and `μ₁` uniform on the
/// upper half of the grid.
#[derive(Debug, Clone)]
pub struct Counterexample {
    pub space: Space,
    /// Parameters `y`, increasing, ending with `1`.
    pub params: Vec<Mass>,
    pub measures: Vec<DiscreteMeasure>,
}

impl Counterexample {
    /// Limit of `W₂²(μ_y, μ₁)` as the grid refines and `y → 1`.
    pub fn limit_value() -> Mass {
        mass::ratio(1, 12)
    }

    pub fn family(&self) -> Vec<(f64, DiscreteMeasure)> {
        self.params.iter().map(mass::to_f64).zip(self.measures.iter().cloned()).collect()
    }

    /// Index of the largest parameter below 1.
    pub fn nearest_to_one(&self) -> usize {
        self.params.len() - 2
    }
}

/// Discretises the family on the grid `x_i = i / (n − 1)`.
pub fn build_counterexample(n: usize) -> Result<Counterexample> {
    if n < 4 {
        return Err(OtError::InvalidParameter(format!("grid size must be at least 4, got {n}")));
    }
    let last = (n - 1) as i64;
    let grid: Vec<Mass> = (0..n as i64).map(|i| mass::ratio(i, last)).collect();
    let labels = (0..n).map(|i| format!("x{i}")).collect();
    let dist = grid
        .iter()
        .map(|a| grid.iter().map(|b| mass::to_f64(&(a - b).abs())).collect())
        .collect();
    let space: Space = std::sync::Arc::new(FiniteMetricSpace::new(labels, dist)?);
    let half = mass::ratio(1, 2);
    let (lower, upper): (Vec<usize>, Vec<usize>) = (0..n).partition(|&i| grid[i] < half);
    let mut params = Vec::with_capacity(lower.len() + 1);
    let mut measures = Vec::with_capacity(lower.len() + 1);
    for &i in &lower {
        params.push(&grid[i] * mass::from_int(2));
        measures.push(DiscreteMeasure::dirac(space.clone(), i)?);
    }
    params.push(mass::one());
    measures.push(DiscreteMeasure::uniform_on(space.clone(), &upper)?);
    Ok(Counterexample { space, params, measures })
}

#[derive(Debug, Clone, PartialEq)]
pub struct BijectiveReport {
    /// Points `y` where the conditional is not `δ_{π⁻¹(y)}`.
    pub mismatches: Vec<usize>,
    pub checked: usize,
}

impl BijectiveReport {
    pub fn passed(&self) -> bool {
        self.mismatches.is_empty()
    }
}

/// Disintegrates `μ` along a bijection `π` and checks that each conditional
/// is the Dirac mass at `π⁻¹(y)`.
pub fn check_bijective_dirac(pi: &PointMap, mu: &DiscreteMeasure) -> Result<BijectiveReport> {
    if !pi.is_bijective() {
        return Err(OtError::InvalidArgument("map is not a bijection".into()));
    }
    let inverse = pi.inverse()?;
    let plan = TransportPlan::deterministic(mu, pi.target().clone(), pi.assignments())?;
    let (nu, f) = disintegrate(&plan, Axis::Second);
    let mut mismatches = Vec::new();
    let live = nu.support();
    for &y in &live {
        let want = DiscreteMeasure::dirac(mu.space().clone(), inverse.apply(y))?;
        if f.get(y) != Some(&want) {
            mismatches.push(y);
        }
    }
    Ok(BijectiveReport { mismatches, checked: live.len() })
}
