//! Discrete measures with exact rational weights, point maps and
//! pushforwards, measures over measures, and Dirac-lattice approximation.

use std::collections::BTreeMap;
use std::sync::Arc;

use num::{Signed, Zero};

use crate::error::{OtError, Result};
use crate::mass::{self, Mass};
use crate::metric_space::Space;

/// True when two handles denote the same space (pointer or structural).
pub fn same_space(a: &Space, b: &Space) -> bool {
    Arc::ptr_eq(a, b) || **a == **b
}

/// Nonnegative rational weights on the points of a finite space.
#[derive(Debug, Clone)]
pub struct DiscreteMeasure {
    space: Space,
    weights: Vec<Mass>,
}

impl PartialEq for DiscreteMeasure {
    fn eq(&self, other: &Self) -> bool {
        self.weights == other.weights && same_space(&self.space, &other.space)
    }
}

impl DiscreteMeasure {
    pub fn new(space: Space, weights: Vec<Mass>) -> Result<Self> {
        if weights.len() != space.len() {
            return Err(OtError::InvalidArgument(format!(
                "{} weights for a space of {} points",
                weights.len(),
                space.len()
            )));
        }
        if let Some(i) = weights.iter().position(|w| w.is_negative()) {
            return Err(OtError::InvalidArgument(format!(
                "negative weight {} at '{}'",
                mass::format(&weights[i]),
                space.label(i)
            )));
        }
        Ok(DiscreteMeasure { space, weights })
    }

    pub fn zero(space: Space) -> Self {
        let weights = vec![Mass::zero(); space.len()];
        DiscreteMeasure { space, weights }
    }

    /// Builds a measure from `(label, weight)` pairs; unnamed points get zero.
    pub fn from_labels(space: Space, entries: &[(&str, Mass)]) -> Result<Self> {
        let mut weights = vec![Mass::zero(); space.len()];
        for (label, w) in entries {
            let i = space
                .index_of(label)
                .ok_or_else(|| OtError::NotFound(format!("label '{label}'")))?;
            weights[i] += w;
        }
        Self::new(space, weights)
    }

    pub fn dirac(space: Space, point: usize) -> Result<Self> {
        if point >= space.len() {
            return Err(OtError::InvalidArgument(format!("point {point} outside the space")));
        }
        let mut weights = vec![Mass::zero(); space.len()];
        weights[point] = mass::one();
        Ok(DiscreteMeasure { space, weights })
    }

    pub fn uniform(space: Space) -> Result<Self> {
        let all: Vec<usize> = (0..space.len()).collect();
        Self::uniform_on(space, &all)
    }

    pub fn uniform_on(space: Space, points: &[usize]) -> Result<Self> {
        if points.is_empty() {
            return Err(OtError::InvalidArgument("uniform measure on an empty set".into()));
        }
        let w = mass::ratio(1, points.len() as i64);
        let mut weights = vec![Mass::zero(); space.len()];
        for &p in points {
            if p >= space.len() {
                return Err(OtError::InvalidArgument(format!("point {p} outside the space")));
            }
            weights[p] += &w;
        }
        Ok(DiscreteMeasure { space, weights })
    }

    pub fn space(&self) -> &Space {
        &self.space
    }

    pub fn weights(&self) -> &[Mass] {
        &self.weights
    }

    pub fn weight(&self, i: usize) -> &Mass {
        &self.weights[i]
    }

    pub fn weights_f64(&self) -> Vec<f64> {
        self.weights.iter().map(mass::to_f64).collect()
    }

    pub fn total_mass(&self) -> Mass {
        mass::sum(&self.weights)
    }

    pub fn is_probability(&self) -> bool {
        self.total_mass() == mass::one()
    }

    /// Indices with positive weight, ascending.
    pub fn support(&self) -> Vec<usize> {
        (0..self.weights.len()).filter(|&i| self.weights[i].is_positive()).collect()
    }

    pub fn scaled(&self, factor: &Mass) -> Result<Self> {
        Self::new(self.space.clone(), self.weights.iter().map(|w| w * factor).collect())
    }

    /// Division by the total mass.
    pub fn normalized(&self) -> Result<Self> {
        let total = self.total_mass();
        if total.is_zero() {
            return Err(OtError::InvalidArgument("cannot normalise a zero measure".into()));
        }
        Ok(DiscreteMeasure {
            space: self.space.clone(),
            weights: self.weights.iter().map(|w| w / &total).collect(),
        })
    }

    pub fn require_probability(&self, what: &str) -> Result<()> {
        if self.is_probability() {
            Ok(())
        } else {
            Err(OtError::InvalidArgument(format!(
                "{what} has total mass {}, expected 1",
                mass::format(&self.total_mass())
            )))
        }
    }
}

/// A total assignment of target points to source points.
#[derive(Debug, Clone, PartialEq)]
pub struct PointMap {
    source: Space,
    target: Space,
    assign: Vec<usize>,
}

impl PointMap {
    pub fn new(source: Space, target: Space, assign: Vec<usize>) -> Result<Self> {
        if assign.len() != source.len() {
            return Err(OtError::InvalidArgument(format!(
                "map assigns {} points but the source has {}",
                assign.len(),
                source.len()
            )));
        }
        if let Some(&bad) = assign.iter().find(|&&t| t >= target.len()) {
            return Err(OtError::InvalidArgument(format!("target index {bad} outside the target space")));
        }
        Ok(PointMap { source, target, assign })
    }

    pub fn identity(space: Space) -> Self {
        let assign = (0..space.len()).collect();
        PointMap { source: space.clone(), target: space, assign }
    }

    pub fn constant(source: Space, target: Space, point: usize) -> Result<Self> {
        let assign = vec![point; source.len()];
        Self::new(source, target, assign)
    }

    pub fn source(&self) -> &Space {
        &self.source
    }

    pub fn target(&self) -> &Space {
        &self.target
    }

    pub fn apply(&self, x: usize) -> usize {
        self.assign[x]
    }

    pub fn assignments(&self) -> &[usize] {
        &self.assign
    }

    /// `next ∘ self`.
    pub fn then(&self, next: &PointMap) -> Result<PointMap> {
        if !same_space(&self.target, &next.source) {
            return Err(OtError::InvalidArgument("maps do not compose: space mismatch".into()));
        }
        let assign = self.assign.iter().map(|&y| next.assign[y]).collect();
        Ok(PointMap { source: self.source.clone(), target: next.target.clone(), assign })
    }

    pub fn is_bijective(&self) -> bool {
        if self.source.len() != self.target.len() {
            return false;
        }
        let mut hit = vec![false; self.target.len()];
        for &y in &self.assign {
            if std::mem::replace(&mut hit[y], true) {
                return false;
            }
        }
        true
    }

    /// The inverse of a bijection.
    pub fn inverse(&self) -> Result<PointMap> {
        if !self.is_bijective() {
            return Err(OtError::InvalidArgument("map is not bijective".into()));
        }
        let mut inv = vec![0; self.assign.len()];
        for (x, &y) in self.assign.iter().enumerate() {
            inv[y] = x;
        }
        Ok(PointMap { source: self.target.clone(), target: self.source.clone(), assign: inv })
    }
}

/// `T_* m`: the weight of `y` is the `m`-mass of `T⁻¹(y)`.
pub fn pushforward(m: &DiscreteMeasure, map: &PointMap) -> Result<DiscreteMeasure> {
    if !same_space(m.space(), map.source()) {
        return Err(OtError::InvalidArgument("measure does not live on the map's source".into()));
    }
    let mut weights = vec![Mass::zero(); map.target().len()];
    for (x, w) in m.weights().iter().enumerate() {
        weights[map.apply(x)] += w;
    }
    DiscreteMeasure::new(map.target().clone(), weights)
}

/// Canonical identity of a measure: weights keyed and ordered by label.
///
/// Two measures on the same label set get the same key iff their weights
/// agree exactly on every label.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct MeasureKey(Vec<(String, Mass)>);

pub fn canonicalize_measure_key(m: &DiscreteMeasure) -> MeasureKey {
    let mut entries: Vec<(String, Mass)> = m
        .space()
        .labels()
        .iter()
        .cloned()
        .zip(m.weights().iter().cloned())
        .collect();
    entries.sort_by(|a, b| a.0.cmp(&b.0));
    MeasureKey(entries)
}

/// A finitely supported distribution over distinct probability measures,
/// e.g. the pushforward of a marginal by a disintegration map.
#[derive(Debug, Clone)]
pub struct MeasureOverMeasures {
    atoms: Vec<(DiscreteMeasure, Mass)>,
}

impl MeasureOverMeasures {
    /// Validates nonnegative weights, a shared target space and distinct atoms.
    pub fn new(atoms: Vec<(DiscreteMeasure, Mass)>) -> Result<Self> {
        let mut seen = BTreeMap::new();
        for (i, (m, w)) in atoms.iter().enumerate() {
            if w.is_negative() {
                return Err(OtError::InvalidArgument(format!("atom {i} has negative weight")));
            }
            if !same_space(m.space(), atoms[0].0.space()) {
                return Err(OtError::InvalidArgument("atoms live on different spaces".into()));
            }
            if let Some(j) = seen.insert(canonicalize_measure_key(m), i) {
                return Err(OtError::InvalidArgument(format!("atoms {j} and {i} are equal")));
            }
        }
        Ok(MeasureOverMeasures { atoms })
    }

    /// Sums the weights of repeated measures; atoms keep first-seen order.
    pub fn collect(items: impl IntoIterator<Item = (DiscreteMeasure, Mass)>) -> Result<Self> {
        let mut order: Vec<(DiscreteMeasure, Mass)> = Vec::new();
        let mut slot: BTreeMap<MeasureKey, usize> = BTreeMap::new();
        for (m, w) in items {
            let key = canonicalize_measure_key(&m);
            match slot.get(&key) {
                Some(&i) => order[i].1 += w,
                None => {
                    slot.insert(key, order.len());
                    order.push((m, w));
                }
            }
        }
        Self::new(order)
    }

    pub fn dirac(m: DiscreteMeasure) -> Self {
        MeasureOverMeasures { atoms: vec![(m, mass::one())] }
    }

    pub fn atoms(&self) -> &[(DiscreteMeasure, Mass)] {
        &self.atoms
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn total_weight(&self) -> Mass {
        mass::sum(self.atoms.iter().map(|(_, w)| w))
    }

    pub fn target_space(&self) -> Option<&Space> {
        self.atoms.first().map(|(m, _)| m.space())
    }

    /// Positive-weight atoms in canonical key order.
    fn canonical(&self) -> Vec<(MeasureKey, &Mass)> {
        let mut v: Vec<_> = self
            .atoms
            .iter()
            .filter(|(_, w)| !w.is_zero())
            .map(|(m, w)| (canonicalize_measure_key(m), w))
            .collect();
        v.sort();
        v
    }

    /// Weight assigned to `m` (zero if it is not an atom).
    pub fn weight_of(&self, m: &DiscreteMeasure) -> Mass {
        let key = canonicalize_measure_key(m);
        self.atoms
            .iter()
            .find(|(a, _)| canonicalize_measure_key(a) == key)
            .map_or_else(Mass::zero, |(_, w)| w.clone())
    }
}

impl PartialEq for MeasureOverMeasures {
    fn eq(&self, other: &Self) -> bool {
        let spaces_match = match (self.target_space(), other.target_space()) {
            (Some(a), Some(b)) => same_space(a, b),
            _ => true,
        };
        spaces_match && self.canonical() == other.canonical()
    }
}

/// `Σ_j w_j λ_j`, the mean measure of a measure over measures.
pub fn barycenter_of_classes(l: &MeasureOverMeasures) -> Result<DiscreteMeasure> {
    let space = l
        .target_space()
        .ok_or_else(|| OtError::InvalidArgument("empty measure over measures".into()))?
        .clone();
    let mut weights = vec![Mass::zero(); space.len()];
    for (m, w) in l.atoms() {
        if !same_space(m.space(), &space) {
            return Err(OtError::InvalidArgument("atoms live on different spaces".into()));
        }
        for (acc, x) in weights.iter_mut().zip(m.weights()) {
            *acc += x * w;
        }
    }
    DiscreteMeasure::new(space, weights)
}

/// Largest denominator used when rationalising lattice weights.
pub const LATTICE_MAX_DENOMINATOR: u64 = 1_000_000;

/// Result of [`dirac_lattice_approx`].
#[derive(Debug, Clone)]
pub struct LatticeApproximation {
    pub measure: DiscreteMeasure,
    /// Lattice point each support point was sent to (`None` off the support).
    pub assignment: Vec<Option<usize>>,
    /// `Σ |α_j − β_j|` between the pushed-forward and the rationalised weights.
    pub rounding_tv: Mass,
}

/// Moves `m` onto a finite lattice that is an `eps/2`-net of its support.
///
/// Each support point goes to the first lattice point within `eps` (the
/// first ball of the disjointified cover that contains it). The resulting
/// weights are replaced by best rational approximations with denominator
/// at most [`LATTICE_MAX_DENOMINATOR`]; the leftover mass is put on the
/// heaviest atom.
pub fn dirac_lattice_approx(m: &DiscreteMeasure, lattice: &[usize], eps: f64) -> Result<LatticeApproximation> {
    if !(eps > 0.0) || !eps.is_finite() {
        return Err(OtError::InvalidParameter(format!("eps must be positive, got {eps}")));
    }
    let space = m.space();
    if lattice.is_empty() {
        return Err(OtError::CoverageFailure("empty lattice".into()));
    }
    if let Some(&bad) = lattice.iter().find(|&&k| k >= space.len()) {
        return Err(OtError::InvalidArgument(format!("lattice point {bad} outside the space")));
    }
    let tol = crate::metric_space::METRIC_TOL;
    let mut assignment = vec![None; space.len()];
    let mut pushed = vec![Mass::zero(); space.len()];
    for x in m.support() {
        if !lattice.iter().any(|&k| space.dist(x, k) <= eps / 2.0 + tol) {
            return Err(OtError::CoverageFailure(format!(
                "'{}' is farther than eps/2 = {} from every lattice point",
                space.label(x),
                eps / 2.0
            )));
        }
        let k = *lattice
            .iter()
            .find(|&&k| space.dist(x, k) <= eps + tol)
            .expect("a point within eps/2 is within eps");
        assignment[x] = Some(k);
        pushed[k] += m.weight(x);
    }
    let mut rounded: Vec<Mass> = pushed
        .iter()
        .map(|a| mass::limit_denominator(a, LATTICE_MAX_DENOMINATOR))
        .collect();
    let leftover = m.total_mass() - mass::sum(&rounded);
    if !leftover.is_zero() {
        let heaviest = (0..rounded.len())
            .fold(0, |best, i| if rounded[i] > rounded[best] { i } else { best });
        rounded[heaviest] += leftover;
    }
    let rounding_tv = mass::sum(
        pushed
            .iter()
            .zip(&rounded)
            .map(|(a, b)| (a - b).abs())
            .collect::<Vec<_>>()
            .iter(),
    );
    Ok(LatticeApproximation {
        measure: DiscreteMeasure::new(space.clone(), rounded)?,
        assignment,
        rounding_tv,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mass::{from_f64, ratio};
    use crate::metric_space::FiniteMetricSpace;

    fn line(xs: &[f64]) -> Space {
        Arc::new(FiniteMetricSpace::on_line(xs).unwrap())
    }

    fn m(space: &Space, w: &[(i64, i64)]) -> DiscreteMeasure {
        DiscreteMeasure::new(space.clone(), w.iter().map(|&(p, q)| ratio(p, q)).collect()).unwrap()
    }

    #[test]
    fn rejects_negative_and_wrong_length() {
        let s = line(&[0.0, 1.0]);
        assert!(DiscreteMeasure::new(s.clone(), vec![ratio(-1, 2), ratio(3, 2)]).is_err());
        assert!(DiscreteMeasure::new(s, vec![ratio(1, 2)]).is_err());
    }

    #[test]
    fn pushforward_identity_and_constant() {
        let s = line(&[0.0, 1.0, 2.0]);
        let mu = m(&s, &[(1, 2), (1, 3), (1, 6)]);
        assert_eq!(pushforward(&mu, &PointMap::identity(s.clone())).unwrap(), mu);
        let t = line(&[5.0, 6.0]);
        let c = PointMap::constant(s.clone(), t.clone(), 1).unwrap();
        let scaled = mu.scaled(&ratio(2, 1)).unwrap();
        assert_eq!(pushforward(&scaled, &c).unwrap(), m(&t, &[(0, 1), (2, 1)]));
    }

    #[test]
    fn factory_collapse_map() {
        let x = line(&[0.0, 1.0, 2.0]);
        let y = line(&[10.0, 11.0]);
        let mu = m(&x, &[(1, 3), (1, 3), (1, 3)]);
        let t = PointMap::new(x, y.clone(), vec![1, 1, 1]).unwrap();
        assert_eq!(pushforward(&mu, &t).unwrap(), m(&y, &[(0, 1), (1, 1)]));
    }

    #[test]
    fn pushforward_space_mismatch() {
        let a = line(&[0.0, 1.0]);
        let b = line(&[0.0, 2.0]);
        let mu = DiscreteMeasure::uniform(a).unwrap();
        assert!(matches!(
            pushforward(&mu, &PointMap::identity(b)),
            Err(OtError::InvalidArgument(_))
        ));
    }

    #[test]
    fn barycenter_examples() {
        let y = line(&[0.0, 1.0]);
        let nu = m(&y, &[(1, 6), (5, 6)]);
        assert_eq!(barycenter_of_classes(&MeasureOverMeasures::dirac(nu.clone())).unwrap(), nu);
        let l = MeasureOverMeasures::new(vec![
            (m(&y, &[(1, 1), (0, 1)]), ratio(1, 2)),
            (m(&y, &[(0, 1), (1, 1)]), ratio(1, 2)),
        ])
        .unwrap();
        assert_eq!(barycenter_of_classes(&l).unwrap(), m(&y, &[(1, 2), (1, 2)]));
        let factory = MeasureOverMeasures::new(vec![
            (m(&y, &[(1, 2), (1, 2)]), ratio(1, 3)),
            (m(&y, &[(0, 1), (1, 1)]), ratio(2, 3)),
        ])
        .unwrap();
        assert_eq!(barycenter_of_classes(&factory).unwrap(), nu);
    }

    #[test]
    fn mixed_spaces_rejected() {
        let a = line(&[0.0, 1.0]);
        let b = line(&[0.0, 3.0]);
        let atoms = vec![
            (DiscreteMeasure::dirac(a, 0).unwrap(), ratio(1, 2)),
            (DiscreteMeasure::dirac(b, 0).unwrap(), ratio(1, 2)),
        ];
        assert!(MeasureOverMeasures::new(atoms).is_err());
    }

    #[test]
    fn duplicate_atoms_rejected_or_merged() {
        let y = line(&[0.0, 1.0]);
        let d = DiscreteMeasure::dirac(y, 0).unwrap();
        assert!(MeasureOverMeasures::new(vec![(d.clone(), ratio(1, 2)), (d.clone(), ratio(1, 2))]).is_err());
        let merged = MeasureOverMeasures::collect(vec![(d.clone(), ratio(1, 2)), (d.clone(), ratio(1, 2))]).unwrap();
        assert_eq!(merged.len(), 1);
        assert_eq!(merged.weight_of(&d), ratio(1, 1));
    }

    #[test]
    fn measure_keys() {
        let y = line(&[0.0, 1.0]);
        let a = m(&y, &[(1, 2), (1, 2)]);
        let b = m(&y, &[(2, 4), (2, 4)]);
        assert_eq!(canonicalize_measure_key(&a), canonicalize_measure_key(&b));
        let next_up = from_f64(f64::from_bits(0.5f64.to_bits() + 1)).unwrap();
        let c = DiscreteMeasure::new(y.clone(), vec![next_up.clone(), ratio(1, 1) - next_up]).unwrap();
        assert_ne!(canonicalize_measure_key(&a), canonicalize_measure_key(&c));

        let l1 = vec!["u".to_string(), "v".to_string()];
        let l2 = vec!["v".to_string(), "u".to_string()];
        let d = vec![vec![0.0, 1.0], vec![1.0, 0.0]];
        let s1 = Arc::new(FiniteMetricSpace::new(l1, d.clone()).unwrap());
        let s2 = Arc::new(FiniteMetricSpace::new(l2, d).unwrap());
        let p = DiscreteMeasure::new(s1, vec![ratio(1, 3), ratio(2, 3)]).unwrap();
        let q = DiscreteMeasure::new(s2, vec![ratio(2, 3), ratio(1, 3)]).unwrap();
        assert_eq!(canonicalize_measure_key(&p), canonicalize_measure_key(&q));
    }

    #[test]
    fn lattice_superset_is_exact() {
        let s = line(&[0.0, 0.5, 1.0]);
        let mu = m(&s, &[(1, 3), (1, 3), (1, 3)]);
        let approx = dirac_lattice_approx(&mu, &[0, 1, 2], 0.1).unwrap();
        assert_eq!(approx.measure, mu);
        assert!(approx.rounding_tv.is_zero());
    }

    #[test]
    fn lattice_moves_interior_point() {
        let s = line(&[0.0, 0.4, 1.0]);
        let mu = m(&s, &[(1, 3), (1, 3), (1, 3)]);
        let approx = dirac_lattice_approx(&mu, &[0, 2], 0.9).unwrap();
        assert_eq!(approx.measure, m(&s, &[(2, 3), (0, 1), (1, 3)]));
        assert_eq!(approx.assignment[1], Some(0));
    }

    #[test]
    fn lattice_coverage_failure() {
        let s = line(&[0.0, 0.4, 1.0]);
        let mu = DiscreteMeasure::uniform(s).unwrap();
        assert!(matches!(dirac_lattice_approx(&mu, &[0, 2], 0.5), Err(OtError::CoverageFailure(_))));
        assert!(matches!(dirac_lattice_approx(&mu, &[0, 2], -1.0), Err(OtError::InvalidParameter(_))));
    }

    #[test]
    fn lattice_rationalises_awkward_weights() {
        let s = line(&[0.0, 1.0]);
        let w = from_f64(0.1).unwrap();
        let mu = DiscreteMeasure::new(s, vec![w.clone(), mass::one() - w]).unwrap();
        let approx = dirac_lattice_approx(&mu, &[0, 1], 0.1).unwrap();
        assert!(approx.measure.is_probability());
        assert_eq!(approx.measure.weight(0), &ratio(1, 10));
        assert!(approx.rounding_tv > Mass::zero());
        assert!(mass::to_f64(&approx.rounding_tv) < 1e-15);
    }
}
