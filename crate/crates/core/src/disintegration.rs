//! Disintegration of plans into conditional families and reassembly.
//!
//! A plan `γ` on `X × Y` factors as `μ ⊗ f` where `μ` is its first
//! marginal and `f(x)` is row `x` of `γ` divided by `μ(x)`. Conditionals
//! are left undefined where the marginal vanishes; callers needing a total
//! map must pick a default themselves.
//!
//! Borel measurability of the disintegration map has no finite content:
//! every map on a finite space is measurable.

use num::{Signed, Zero};

use crate::error::{OtError, Result};
use crate::mass::{self, Mass};
use crate::measures::{same_space, DiscreteMeasure, PointMap};
use crate::metric_space::Space;
use crate::solver::TransportPlan;

/// Which coordinate of `X × Y` a plan is disintegrated along.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    First,
    Second,
}

/// `x ↦ f(x)`, a probability measure on the target for each point of a
/// designated support set, undefined elsewhere.
#[derive(Debug, Clone, PartialEq)]
pub struct DisintegrationMap {
    base: Space,
    target: Space,
    conditionals: Vec<Option<DiscreteMeasure>>,
}

impl DisintegrationMap {
    pub fn new(base: Space, target: Space, conditionals: Vec<Option<DiscreteMeasure>>) -> Result<Self> {
        if conditionals.len() != base.len() {
            return Err(OtError::InvalidArgument(format!(
                "{} conditionals for a base of {} points",
                conditionals.len(),
                base.len()
            )));
        }
        for (x, c) in conditionals.iter().enumerate() {
            if let Some(c) = c {
                if !same_space(c.space(), &target) {
                    return Err(OtError::InvalidArgument(format!(
                        "conditional at '{}' lives on another space",
                        base.label(x)
                    )));
                }
                if !c.is_probability() {
                    return Err(OtError::InvalidArgument(format!(
                        "conditional at '{}' has mass {}",
                        base.label(x),
                        mass::format(&c.total_mass())
                    )));
                }
            }
        }
        Ok(DisintegrationMap { base, target, conditionals })
    }

    /// The same conditional at every point of the base.
    pub fn constant(base: Space, conditional: DiscreteMeasure) -> Result<Self> {
        let target = conditional.space().clone();
        let conditionals = vec![Some(conditional); base.len()];
        Self::new(base, target, conditionals)
    }

    pub fn base(&self) -> &Space {
        &self.base
    }

    pub fn target(&self) -> &Space {
        &self.target
    }

    pub fn get(&self, x: usize) -> Option<&DiscreteMeasure> {
        self.conditionals.get(x).and_then(Option::as_ref)
    }

    pub fn conditionals(&self) -> &[Option<DiscreteMeasure>] {
        &self.conditionals
    }

    /// Points where the map is defined.
    pub fn domain(&self) -> Vec<usize> {
        (0..self.conditionals.len()).filter(|&x| self.conditionals[x].is_some()).collect()
    }
}

/// Splits `γ` into its marginal along `axis` and the conditional family.
///
/// Along [`Axis::Second`] the roles swap: the base is `Y` and each
/// conditional lives on `X`.
pub fn disintegrate(gamma: &TransportPlan, axis: Axis) -> (DiscreteMeasure, DisintegrationMap) {
    let plan = match axis {
        Axis::First => gamma.clone(),
        Axis::Second => gamma.transpose(),
    };
    let marginal = plan.first_marginal();
    let target = plan.col_space().clone();
    let conditionals = (0..plan.num_rows())
        .map(|x| {
            let mx = marginal.weight(x);
            (!mx.is_zero()).then(|| {
                let w = plan.row(x).iter().map(|g| g / mx).collect();
                DiscreteMeasure::new(target.clone(), w).expect("row of a nonnegative plan")
            })
        })
        .collect();
    let map = DisintegrationMap { base: plan.row_space().clone(), target, conditionals };
    (marginal, map)
}

/// `μ ⊗ f`: the plan with entries `μ(x) f(x)(y)`.
pub fn reassemble(mu: &DiscreteMeasure, f: &DisintegrationMap) -> Result<TransportPlan> {
    if !same_space(mu.space(), f.base()) {
        return Err(OtError::InvalidArgument("measure does not live on the map's base".into()));
    }
    let n = f.target().len();
    let mut entries = vec![Mass::zero(); mu.space().len() * n];
    for x in mu.support() {
        let cond = f
            .get(x)
            .ok_or_else(|| OtError::MissingConditional(format!("'{}'", mu.space().label(x))))?;
        for (y, w) in cond.weights().iter().enumerate() {
            entries[x * n + y] = mu.weight(x) * w;
        }
    }
    TransportPlan::new(mu.space().clone(), f.target().clone(), entries)
}

/// `x ↦ δ_{T(x)}` on the support of `mu`.
pub fn dirac_disintegration(map: &PointMap, mu: &DiscreteMeasure) -> Result<DisintegrationMap> {
    if !same_space(mu.space(), map.source()) {
        return Err(OtError::InvalidArgument("measure does not live on the map's source".into()));
    }
    let target = map.target().clone();
    let conditionals = (0..mu.space().len())
        .map(|x| {
            if mu.weight(x).is_zero() {
                Ok(None)
            } else {
                DiscreteMeasure::dirac(target.clone(), map.apply(x)).map(Some)
            }
        })
        .collect::<Result<Vec<_>>>()?;
    DisintegrationMap::new(mu.space().clone(), target, conditionals)
}

/// A finite-measure-valued kernel `x ↦ η_x` (not necessarily probabilities).
#[derive(Debug, Clone, PartialEq)]
pub struct MeasureKernel {
    base: Space,
    target: Space,
    rows: Vec<DiscreteMeasure>,
}

impl MeasureKernel {
    pub fn new(base: Space, target: Space, rows: Vec<DiscreteMeasure>) -> Result<Self> {
        if rows.len() != base.len() {
            return Err(OtError::InvalidArgument(format!("{} kernel rows for {} points", rows.len(), base.len())));
        }
        if rows.iter().any(|r| !same_space(r.space(), &target)) {
            return Err(OtError::InvalidArgument("kernel rows live on another space".into()));
        }
        Ok(MeasureKernel { base, target, rows })
    }

    /// Undefined conditionals become zero measures.
    pub fn from_map(f: &DisintegrationMap) -> Self {
        let rows = f
            .conditionals()
            .iter()
            .map(|c| c.clone().unwrap_or_else(|| DiscreteMeasure::zero(f.target().clone())))
            .collect();
        MeasureKernel { base: f.base().clone(), target: f.target().clone(), rows }
    }

    pub fn row(&self, x: usize) -> &DiscreteMeasure {
        &self.rows[x]
    }

    pub fn scaled_rows(&self, factor: &Mass) -> Result<Self> {
        let rows = self.rows.iter().map(|r| r.scaled(factor)).collect::<Result<Vec<_>>>()?;
        Ok(MeasureKernel { base: self.base.clone(), target: self.target.clone(), rows })
    }
}

/// First failing clause of [`check_uniqueness_abs_continuity`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum UniquenessViolation {
    /// `γ(x, y) ≠ ν(x) η_x(y)`.
    Reassembly { x: usize, y: usize },
    /// `x ∈ C`, `μ(x) = 0` but `ν(x) > 0`.
    AbsoluteContinuity { x: usize },
    /// `(ν|_C(x) / μ(x)) η_x ≠ γ_x`.
    DensityIdentity { x: usize },
}

/// Outcome of [`check_uniqueness_abs_continuity`]; every clause is
/// evaluated independently.
#[derive(Debug, Clone, PartialEq)]
pub struct UniquenessReport {
    pub reassembly_violations: Vec<(usize, usize)>,
    pub abs_continuity_violations: Vec<usize>,
    /// `ν|_C(x) / μ(x)` wherever `μ(x) > 0`.
    pub density: Vec<Option<Mass>>,
    pub density_identity_violations: Vec<usize>,
}

impl UniquenessReport {
    pub fn passed(&self) -> bool {
        self.first_violation().is_none()
    }

    pub fn first_violation(&self) -> Option<UniquenessViolation> {
        if let Some(&(x, y)) = self.reassembly_violations.first() {
            return Some(UniquenessViolation::Reassembly { x, y });
        }
        if let Some(&x) = self.abs_continuity_violations.first() {
            return Some(UniquenessViolation::AbsoluteContinuity { x });
        }
        self.density_identity_violations
            .first()
            .map(|&x| UniquenessViolation::DensityIdentity { x })
    }
}

/// Checks a second factorisation `γ = ν ⊗ η` against the canonical one.
///
/// With `μ` the first marginal of `γ` and `C = {x : η_x ≠ 0}`:
/// (a) `γ = ν ⊗ η` exactly; (b) `ν|_C ≪ μ`; (c) `(ν|_C / μ) η_x = γ_x`
/// wherever `μ(x) > 0`, where `γ_x` is the canonical conditional.
pub fn check_uniqueness_abs_continuity(
    gamma: &TransportPlan,
    nu: &DiscreteMeasure,
    eta: &MeasureKernel,
) -> Result<UniquenessReport> {
    if !same_space(nu.space(), gamma.row_space()) || !same_space(&eta.base, gamma.row_space()) {
        return Err(OtError::InvalidArgument("ν and η must be indexed by the plan's rows".into()));
    }
    if !same_space(&eta.target, gamma.col_space()) {
        return Err(OtError::InvalidArgument("η must live on the plan's columns".into()));
    }
    let (m, n) = (gamma.num_rows(), gamma.num_cols());
    let mu = gamma.first_marginal();
    let mut reassembly_violations = Vec::new();
    for x in 0..m {
        for y in 0..n {
            if gamma.get(x, y) != &(nu.weight(x) * eta.row(x).weight(y)) {
                reassembly_violations.push((x, y));
            }
        }
    }
    let in_c: Vec<bool> = (0..m).map(|x| eta.row(x).total_mass().is_positive()).collect();
    let restricted = |x: usize| if in_c[x] { nu.weight(x).clone() } else { Mass::zero() };
    let abs_continuity_violations = (0..m)
        .filter(|&x| mu.weight(x).is_zero() && restricted(x).is_positive())
        .collect();
    let density: Vec<Option<Mass>> = (0..m)
        .map(|x| (!mu.weight(x).is_zero()).then(|| restricted(x) / mu.weight(x)))
        .collect();
    let density_identity_violations = (0..m)
        .filter(|&x| {
            let Some(rho) = &density[x] else { return false };
            let mx = mu.weight(x);
            (0..n).any(|y| rho * eta.row(x).weight(y) != gamma.get(x, y) / mx)
        })
        .collect();
    Ok(UniquenessReport { reassembly_violations, abs_continuity_violations, density, density_identity_violations })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mass::ratio;
    use crate::metric_space::FiniteMetricSpace;
    use std::sync::Arc;

    fn line(n: usize) -> Space {
        let xs: Vec<f64> = (0..n).map(|i| i as f64).collect();
        Arc::new(FiniteMetricSpace::on_line(&xs).unwrap())
    }

    fn plan(x: &Space, y: &Space, rows: &[&[(i64, i64)]]) -> TransportPlan {
        let m = rows.iter().map(|r| r.iter().map(|&(p, q)| ratio(p, q)).collect()).collect();
        TransportPlan::from_matrix(x.clone(), y.clone(), m).unwrap()
    }

    fn meas(s: &Space, w: &[(i64, i64)]) -> DiscreteMeasure {
        DiscreteMeasure::new(s.clone(), w.iter().map(|&(p, q)| ratio(p, q)).collect()).unwrap()
    }

    #[test]
    fn product_plan_conditionals_are_nu() {
        let (x, y) = (line(3), line(2));
        let mu = meas(&x, &[(1, 2), (1, 3), (1, 6)]);
        let nu = meas(&y, &[(1, 4), (3, 4)]);
        let (marg, f) = disintegrate(&TransportPlan::product(&mu, &nu), Axis::First);
        assert_eq!(marg, mu);
        for xi in 0..3 {
            assert_eq!(f.get(xi), Some(&nu));
        }
    }

    #[test]
    fn diagonal_plan_gives_diracs() {
        let x = line(3);
        let g = plan(&x, &x, &[&[(1, 3), (0, 1), (0, 1)], &[(0, 1), (1, 3), (0, 1)], &[(0, 1), (0, 1), (1, 3)]]);
        let (marg, f) = disintegrate(&g, Axis::First);
        assert_eq!(marg, DiscreteMeasure::uniform(x.clone()).unwrap());
        for i in 0..3 {
            assert_eq!(f.get(i), Some(&DiscreteMeasure::dirac(x.clone(), i).unwrap()));
        }
    }

    #[test]
    fn factory_plan_one() {
        let (x, y) = (line(3), line(2));
        let g = plan(&x, &y, &[&[(1, 6), (1, 6)], &[(0, 1), (1, 3)], &[(0, 1), (1, 3)]]);
        let (_, f) = disintegrate(&g, Axis::First);
        assert_eq!(f.get(0), Some(&meas(&y, &[(1, 2), (1, 2)])));
        assert_eq!(f.get(1), Some(&meas(&y, &[(0, 1), (1, 1)])));
        assert_eq!(f.get(2), Some(&meas(&y, &[(0, 1), (1, 1)])));
        let mu = DiscreteMeasure::uniform(x).unwrap();
        assert_eq!(reassemble(&mu, &f).unwrap(), g);
    }

    #[test]
    fn zero_rows_are_undefined_and_second_axis() {
        let (x, y) = (line(3), line(2));
        let g = plan(&x, &y, &[&[(1, 4), (1, 4)], &[(0, 1), (0, 1)], &[(0, 1), (1, 2)]]);
        let (marg, f) = disintegrate(&g, Axis::First);
        assert!(f.get(1).is_none());
        assert_eq!(f.domain(), vec![0, 2]);
        assert_eq!(reassemble(&marg, &f).unwrap(), g);

        let (ymarg, h) = disintegrate(&g, Axis::Second);
        assert_eq!(ymarg, meas(&y, &[(1, 4), (3, 4)]));
        assert_eq!(h.get(1), Some(&meas(&x, &[(1, 3), (0, 1), (2, 3)])));
        assert_eq!(reassemble(&ymarg, &h).unwrap().transpose(), g);
    }

    #[test]
    fn reassemble_requires_conditionals_on_support() {
        let (x, y) = (line(2), line(2));
        let f = DisintegrationMap::new(x.clone(), y.clone(), vec![Some(DiscreteMeasure::dirac(y.clone(), 1).unwrap()), None])
            .unwrap();
        let ok = reassemble(&DiscreteMeasure::dirac(x.clone(), 0).unwrap(), &f).unwrap();
        assert_eq!(ok.get(0, 1), &ratio(1, 1));
        assert!(matches!(
            reassemble(&DiscreteMeasure::uniform(x).unwrap(), &f),
            Err(OtError::MissingConditional(_))
        ));
    }

    #[test]
    fn map_rejects_sub_probabilities() {
        let (x, y) = (line(1), line(2));
        let half = meas(&y, &[(1, 4), (1, 4)]);
        assert!(DisintegrationMap::new(x, y, vec![Some(half)]).is_err());
    }

    #[test]
    fn dirac_disintegration_of_maps() {
        let x = line(3);
        let mu = DiscreteMeasure::uniform(x.clone()).unwrap();
        let id = dirac_disintegration(&PointMap::identity(x.clone()), &mu).unwrap();
        for i in 0..3 {
            assert_eq!(id.get(i), Some(&DiscreteMeasure::dirac(x.clone(), i).unwrap()));
        }
        let y = line(2);
        let t = PointMap::constant(x.clone(), y.clone(), 1).unwrap();
        let g = dirac_disintegration(&t, &mu).unwrap();
        assert!((0..3).all(|i| g.get(i) == g.get(0)));
        let plan = reassemble(&mu, &g).unwrap();
        assert_eq!(plan.second_marginal(), crate::measures::pushforward(&mu, &t).unwrap());
    }

    #[test]
    fn uniqueness_canonical_and_scaled() {
        let (x, y) = (line(3), line(2));
        let g = plan(&x, &y, &[&[(1, 6), (1, 6)], &[(0, 1), (1, 3)], &[(0, 1), (1, 3)]]);
        let (mu, f) = disintegrate(&g, Axis::First);
        let eta = MeasureKernel::from_map(&f);
        let r = check_uniqueness_abs_continuity(&g, &mu, &eta).unwrap();
        assert!(r.passed());
        assert!(r.density.iter().all(|d| d.as_ref() == Some(&ratio(1, 1))));

        let nu2 = mu.scaled(&ratio(2, 1)).unwrap();
        let eta2 = eta.scaled_rows(&ratio(1, 2)).unwrap();
        let r = check_uniqueness_abs_continuity(&g, &nu2, &eta2).unwrap();
        assert!(r.passed());
        assert!(r.density.iter().all(|d| d.as_ref() == Some(&ratio(2, 1))));
    }

    #[test]
    fn uniqueness_detects_mass_off_the_marginal() {
        let (x, y) = (line(3), line(2));
        let g = plan(&x, &y, &[&[(1, 2), (0, 1)], &[(0, 1), (0, 1)], &[(0, 1), (1, 2)]]);
        let (mu, f) = disintegrate(&g, Axis::First);
        let mut rows: Vec<DiscreteMeasure> = (0..3).map(|i| MeasureKernel::from_map(&f).row(i).clone()).collect();
        rows[1] = DiscreteMeasure::dirac(y.clone(), 0).unwrap();
        let eta = MeasureKernel::new(x.clone(), y.clone(), rows).unwrap();
        let nu = DiscreteMeasure::new(x.clone(), vec![ratio(1, 2), ratio(1, 5), ratio(1, 2)]).unwrap();
        let r = check_uniqueness_abs_continuity(&g, &nu, &eta).unwrap();
        assert_eq!(r.abs_continuity_violations, vec![1]);
        assert!(r.density_identity_violations.is_empty());
        assert_eq!(r.reassembly_violations, vec![(1, 0)]);
        assert!(!r.passed());
        let _ = mu;
    }
}
