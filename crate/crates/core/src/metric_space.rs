//! Finite metric spaces, Euclidean clouds, ℓq products and quotients.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::fmt;
use std::sync::Arc;

use crate::error::{OtError, Result};

/// Validation tolerance for symmetry and the triangle inequality.
pub const METRIC_TOL: f64 = 1e-12;

/// Shared handle to an immutable space. Measures and plans hold these.
pub type Space = Arc<FiniteMetricSpace>;

/// A labelled finite point set with a distance matrix.
///
/// Spaces built from a [`PointedEuclideanCloud`] also remember the
/// coordinates, which the interpolation module needs for straight segments.
#[derive(Debug, Clone)]
pub struct FiniteMetricSpace {
    labels: Vec<String>,
    dist: Vec<Vec<f64>>,
    coords: Option<Vec<Vec<f64>>>,
    index: HashMap<String, usize>,
}

impl PartialEq for FiniteMetricSpace {
    fn eq(&self, other: &Self) -> bool {
        self.labels == other.labels && self.dist == other.dist && self.coords == other.coords
    }
}

impl FiniteMetricSpace {
    pub fn new(labels: Vec<String>, dist: Vec<Vec<f64>>) -> Result<Self> {
        let space = Self::unchecked(labels, dist, None)?;
        space.validate_entries()?;
        if let Some((i, j, k)) = space.triangle_violations(METRIC_TOL).first().copied() {
            return Err(OtError::InvalidSpace(format!(
                "triangle inequality fails: d({a},{c}) > d({a},{b}) + d({b},{c})",
                a = space.labels[i],
                b = space.labels[j],
                c = space.labels[k]
            )));
        }
        Ok(space)
    }

    /// Points on the real line, labelled by their position in `xs`.
    pub fn on_line(xs: &[f64]) -> Result<Self> {
        let points = xs.iter().map(|&x| vec![x]).collect();
        Ok(PointedEuclideanCloud::new(points)?.to_space_value())
    }

    fn unchecked(labels: Vec<String>, dist: Vec<Vec<f64>>, coords: Option<Vec<Vec<f64>>>) -> Result<Self> {
        let n = labels.len();
        if dist.len() != n || dist.iter().any(|row| row.len() != n) {
            return Err(OtError::InvalidSpace(format!("distance matrix must be {n}x{n}")));
        }
        let mut index = HashMap::with_capacity(n);
        for (i, l) in labels.iter().enumerate() {
            if index.insert(l.clone(), i).is_some() {
                return Err(OtError::InvalidSpace(format!("duplicate label '{l}'")));
            }
        }
        Ok(FiniteMetricSpace { labels, dist, coords, index })
    }

    fn validate_entries(&self) -> Result<()> {
        let n = self.len();
        for i in 0..n {
            if self.dist[i][i] != 0.0 {
                return Err(OtError::InvalidSpace(format!("nonzero self-distance at '{}'", self.labels[i])));
            }
            for j in 0..n {
                let d = self.dist[i][j];
                if !d.is_finite() || d < 0.0 {
                    return Err(OtError::InvalidSpace(format!("bad distance {d} at ({i},{j})")));
                }
                if i != j && d <= 0.0 {
                    return Err(OtError::InvalidSpace(format!(
                        "distinct points '{}' and '{}' at distance 0",
                        self.labels[i], self.labels[j]
                    )));
                }
                if (d - self.dist[j][i]).abs() > METRIC_TOL {
                    return Err(OtError::InvalidSpace(format!("asymmetric distance at ({i},{j})")));
                }
            }
        }
        Ok(())
    }

    /// Triples `(i, j, k)` with `d(i,k) > d(i,j) + d(j,k) + tol`.
    pub fn triangle_violations(&self, tol: f64) -> Vec<(usize, usize, usize)> {
        let n = self.len();
        let mut out = Vec::new();
        for i in 0..n {
            for k in 0..n {
                for j in 0..n {
                    if self.dist[i][k] > self.dist[i][j] + self.dist[j][k] + tol {
                        out.push((i, j, k));
                    }
                }
            }
        }
        out
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn label(&self, i: usize) -> &str {
        &self.labels[i]
    }

    pub fn index_of(&self, label: &str) -> Option<usize> {
        self.index.get(label).copied()
    }

    #[inline]
    pub fn dist(&self, i: usize, j: usize) -> f64 {
        self.dist[i][j]
    }

    pub fn dist_matrix(&self) -> &[Vec<f64>] {
        &self.dist
    }

    pub fn coords(&self) -> Option<&[Vec<f64>]> {
        self.coords.as_deref()
    }

    pub fn is_euclidean(&self) -> bool {
        self.coords.is_some()
    }

    pub fn max_distance(&self) -> f64 {
        self.dist.iter().flatten().copied().fold(0.0, f64::max)
    }
}

/// A finite set of distinct points in R^k with the Euclidean distance.
#[derive(Debug, Clone, PartialEq)]
pub struct PointedEuclideanCloud {
    points: Vec<Vec<f64>>,
}

impl PointedEuclideanCloud {
    pub fn new(points: Vec<Vec<f64>>) -> Result<Self> {
        if let Some(first) = points.first() {
            let k = first.len();
            if k == 0 {
                return Err(OtError::InvalidSpace("points must have at least one coordinate".into()));
            }
            for (i, p) in points.iter().enumerate() {
                if p.len() != k {
                    return Err(OtError::InvalidSpace(format!("point {i} has dimension {} != {k}", p.len())));
                }
                if p.iter().any(|c| !c.is_finite()) {
                    return Err(OtError::InvalidSpace(format!("point {i} has a non-finite coordinate")));
                }
            }
        }
        let mut seen = HashSet::new();
        for (i, p) in points.iter().enumerate() {
            let key: Vec<u64> = p.iter().map(|c| (c + 0.0).to_bits()).collect();
            if !seen.insert(key) {
                return Err(OtError::InvalidSpace(format!("point {i} is repeated")));
            }
        }
        Ok(PointedEuclideanCloud { points })
    }

    pub fn points(&self) -> &[Vec<f64>] {
        &self.points
    }

    pub fn dim(&self) -> usize {
        self.points.first().map_or(0, Vec::len)
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// The induced metric space, labelled `p0, p1, ...`.
    pub fn to_space(&self) -> Space {
        Arc::new(self.to_space_value())
    }

    fn to_space_value(&self) -> FiniteMetricSpace {
        let labels = (0..self.len()).map(|i| format!("p{i}")).collect();
        let dist = self
            .points
            .iter()
            .map(|a| self.points.iter().map(|b| euclidean(a, b)).collect())
            .collect();
        FiniteMetricSpace::unchecked(labels, dist, Some(self.points.clone()))
            .expect("cloud labels are unique by construction")
    }
}

pub fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

pub fn squared_euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Exponent of an ℓq product.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Exponent {
    Finite(f64),
    Infinity,
}

impl Exponent {
    pub fn combine(self, a: f64, b: f64) -> f64 {
        match self {
            Exponent::Infinity => a.max(b),
            Exponent::Finite(q) if q == 1.0 => a + b,
            Exponent::Finite(q) if q == 2.0 => a.hypot(b),
            Exponent::Finite(q) => (a.powf(q) + b.powf(q)).powf(1.0 / q),
        }
    }
}

impl fmt::Display for Exponent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Exponent::Finite(q) => write!(f, "{q}"),
            Exponent::Infinity => write!(f, "inf"),
        }
    }
}

/// The ℓq product `A ×_q B`; point `(i, j)` sits at index `i * |B| + j`
/// with label `(a,b)`.
pub fn lq_product(a: &FiniteMetricSpace, b: &FiniteMetricSpace, q: Exponent) -> Result<FiniteMetricSpace> {
    if let Exponent::Finite(q) = q {
        if !(q >= 1.0) || !q.is_finite() {
            return Err(OtError::InvalidParameter(format!("product exponent must be >= 1, got {q}")));
        }
    }
    let (na, nb) = (a.len(), b.len());
    let mut labels = Vec::with_capacity(na * nb);
    for la in a.labels() {
        for lb in b.labels() {
            labels.push(format!("({la},{lb})"));
        }
    }
    let mut dist = vec![vec![0.0; na * nb]; na * nb];
    for i in 0..na * nb {
        for j in 0..na * nb {
            if i != j {
                dist[i][j] = q.combine(a.dist(i / nb, j / nb), b.dist(i % nb, j % nb));
            }
        }
    }
    let coords = match (q, a.coords(), b.coords()) {
        (Exponent::Finite(q), Some(ca), Some(cb)) if q == 2.0 => Some(
            (0..na * nb)
                .map(|i| ca[i / nb].iter().chain(&cb[i % nb]).copied().collect())
                .collect(),
        ),
        _ => None,
    };
    let space = FiniteMetricSpace::unchecked(labels, dist, coords)?;
    space.validate_entries()?;
    Ok(space)
}

/// A partition of a base space with the induced quotient distance
/// `d*([x], [x']) = min d(a, b)` over `a ∈ [x]`, `b ∈ [x']`.
///
/// Any partition is accepted; whether `d*` is a metric is reported by
/// [`QuotientSpace::dstar_triangle_violations`], not enforced.
#[derive(Debug, Clone, PartialEq)]
pub struct QuotientSpace {
    base: Space,
    classes: Vec<Vec<usize>>,
    class_of: Vec<usize>,
    dstar: Vec<Vec<f64>>,
}

impl QuotientSpace {
    pub fn from_partition(base: Space, classes: Vec<Vec<usize>>) -> Result<Self> {
        let n = base.len();
        let mut class_of = vec![usize::MAX; n];
        for (c, members) in classes.iter().enumerate() {
            if members.is_empty() {
                return Err(OtError::InvalidArgument(format!("class {c} is empty")));
            }
            for &m in members {
                if m >= n {
                    return Err(OtError::InvalidArgument(format!("class {c} references point {m} outside the space")));
                }
                if class_of[m] != usize::MAX {
                    return Err(OtError::InvalidArgument(format!(
                        "point '{}' belongs to more than one class",
                        base.label(m)
                    )));
                }
                class_of[m] = c;
            }
        }
        if let Some(m) = class_of.iter().position(|&c| c == usize::MAX) {
            return Err(OtError::InvalidArgument(format!("point '{}' is in no class", base.label(m))));
        }
        let k = classes.len();
        let mut dstar = vec![vec![0.0; k]; k];
        for y in 0..k {
            for z in 0..k {
                if y != z {
                    dstar[y][z] = set_distance(&base, &classes[y], &classes[z]);
                }
            }
        }
        Ok(QuotientSpace { base, classes, class_of, dstar })
    }

    pub fn from_label_partition(base: Space, classes: &[Vec<String>]) -> Result<Self> {
        let idx = classes
            .iter()
            .map(|c| {
                c.iter()
                    .map(|l| base.index_of(l).ok_or_else(|| OtError::NotFound(format!("label '{l}'"))))
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        Self::from_partition(base, idx)
    }

    pub fn base(&self) -> &Space {
        &self.base
    }

    pub fn classes(&self) -> &[Vec<usize>] {
        &self.classes
    }

    pub fn num_classes(&self) -> usize {
        self.classes.len()
    }

    /// The quotient map `p`.
    pub fn project(&self, point: usize) -> usize {
        self.class_of[point]
    }

    pub fn class_name(&self, y: usize) -> String {
        let names: Vec<&str> = self.classes[y].iter().map(|&i| self.base.label(i)).collect();
        format!("{{{}}}", names.join(","))
    }

    pub fn dstar_matrix(&self) -> &[Vec<f64>] {
        &self.dstar
    }

    pub fn quotient_distance(&self, y: usize, z: usize) -> Result<f64> {
        let k = self.num_classes();
        if y >= k || z >= k {
            return Err(OtError::NotFound(format!("class id {} (have {k} classes)", y.max(z))));
        }
        Ok(self.dstar[y][z])
    }

    /// Triples of class ids violating the triangle inequality for `d*`.
    pub fn dstar_triangle_violations(&self, tol: f64) -> Vec<(usize, usize, usize)> {
        let k = self.num_classes();
        let mut out = Vec::new();
        for a in 0..k {
            for c in 0..k {
                for b in 0..k {
                    if self.dstar[a][c] > self.dstar[a][b] + self.dstar[b][c] + tol {
                        out.push((a, b, c));
                    }
                }
            }
        }
        out
    }
}

/// `min d(a, b)` over `a ∈ from`, `b ∈ to`.
pub fn set_distance(space: &FiniteMetricSpace, from: &[usize], to: &[usize]) -> f64 {
    from.iter()
        .flat_map(|&a| to.iter().map(move |&b| space.dist(a, b)))
        .fold(f64::INFINITY, f64::min)
}

/// A permutation of point indices.
pub type Permutation = Vec<usize>;

/// Orbit quotient of `space` under a finite group of isometries.
///
/// The action must be a set of exact isometries closed under composition
/// and inverses.
pub fn group_quotient(space: Space, action: &[Permutation]) -> Result<QuotientSpace> {
    let n = space.len();
    if action.is_empty() {
        return Err(OtError::InvalidAction("the empty set is not a group".into()));
    }
    for (g_idx, g) in action.iter().enumerate() {
        if g.len() != n {
            return Err(OtError::InvalidAction(format!("permutation {g_idx} has length {} != {n}", g.len())));
        }
        let image: BTreeSet<usize> = g.iter().copied().collect();
        if image.len() != n || image.iter().any(|&v| v >= n) {
            return Err(OtError::InvalidAction(format!("permutation {g_idx} is not a bijection")));
        }
        for i in 0..n {
            for j in 0..n {
                if space.dist(g[i], g[j]) != space.dist(i, j) {
                    return Err(OtError::InvalidAction(format!(
                        "permutation {g_idx} is not an isometry at ('{}','{}')",
                        space.label(i),
                        space.label(j)
                    )));
                }
            }
        }
    }
    let set: HashSet<&Permutation> = action.iter().collect();
    for g in action {
        let inv = invert(g);
        if !set.contains(&inv) {
            return Err(OtError::InvalidAction("set is not closed under inverses".into()));
        }
        for h in action {
            let gh: Permutation = h.iter().map(|&i| g[i]).collect();
            if !set.contains(&gh) {
                return Err(OtError::InvalidAction("set is not closed under composition".into()));
            }
        }
    }
    let mut assigned = vec![false; n];
    let mut classes = Vec::new();
    for i in 0..n {
        if assigned[i] {
            continue;
        }
        let orbit: BTreeSet<usize> = action.iter().map(|g| g[i]).chain(std::iter::once(i)).collect();
        for &o in &orbit {
            assigned[o] = true;
        }
        classes.push(orbit.into_iter().collect());
    }
    QuotientSpace::from_partition(space, classes)
}

fn invert(g: &[usize]) -> Permutation {
    let mut inv = vec![0; g.len()];
    for (i, &gi) in g.iter().enumerate() {
        inv[gi] = i;
    }
    inv
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_points() -> FiniteMetricSpace {
        FiniteMetricSpace::on_line(&[0.0, 1.0]).unwrap()
    }

    fn square() -> Space {
        PointedEuclideanCloud::new(vec![vec![0.0, 0.0], vec![1.0, 0.0], vec![0.0, 1.0], vec![1.0, 1.0]])
            .unwrap()
            .to_space()
    }

    #[test]
    fn rejects_bad_matrices() {
        let l = |v: &[&str]| v.iter().map(|s| s.to_string()).collect::<Vec<_>>();
        assert!(FiniteMetricSpace::new(l(&["a", "b"]), vec![vec![0.0, 1.0], vec![2.0, 0.0]]).is_err());
        assert!(FiniteMetricSpace::new(l(&["a", "b"]), vec![vec![0.0, 0.0], vec![0.0, 0.0]]).is_err());
        assert!(FiniteMetricSpace::new(l(&["a", "a"]), vec![vec![0.0, 1.0], vec![1.0, 0.0]]).is_err());
        let bad_triangle = vec![vec![0.0, 1.0, 5.0], vec![1.0, 0.0, 1.0], vec![5.0, 1.0, 0.0]];
        assert!(matches!(
            FiniteMetricSpace::new(l(&["a", "b", "c"]), bad_triangle),
            Err(OtError::InvalidSpace(_))
        ));
    }

    #[test]
    fn product_of_single_points() {
        let p = FiniteMetricSpace::new(vec!["a".into()], vec![vec![0.0]]).unwrap();
        let prod = lq_product(&p, &p, Exponent::Finite(2.0)).unwrap();
        assert_eq!(prod.len(), 1);
        assert_eq!(prod.dist_matrix(), &[vec![0.0]]);
    }

    #[test]
    fn product_diagonals() {
        let a = two_points();
        let l2 = lq_product(&a, &a, Exponent::Finite(2.0)).unwrap();
        assert_eq!(l2.len(), 4);
        assert_eq!(l2.dist(0, 3), 2f64.sqrt());
        assert!(l2.is_euclidean());
        let linf = lq_product(&a, &a, Exponent::Infinity).unwrap();
        assert_eq!(linf.dist(0, 3), 1.0);
        let l1 = lq_product(&a, &a, Exponent::Finite(1.0)).unwrap();
        assert_eq!(l1.dist(0, 3), 2.0);
        assert_eq!(l1.label(1), "(p0,p1)");
        assert!(matches!(lq_product(&a, &a, Exponent::Finite(0.5)), Err(OtError::InvalidParameter(_))));
    }

    #[test]
    fn trivial_group_gives_singletons() {
        let sq = square();
        let q = group_quotient(sq.clone(), &[vec![0, 1, 2, 3]]).unwrap();
        assert_eq!(q.num_classes(), 4);
        for i in 0..4 {
            for j in 0..4 {
                assert_eq!(q.quotient_distance(i, j).unwrap(), sq.dist(i, j));
            }
        }
    }

    #[test]
    fn swap_collapses_two_points() {
        let s = Arc::new(two_points());
        let q = group_quotient(s, &[vec![0, 1], vec![1, 0]]).unwrap();
        assert_eq!(q.num_classes(), 1);
        assert_eq!(q.dstar_matrix(), &[vec![0.0]]);
    }

    #[test]
    fn diagonal_reflection_on_square() {
        // (a,b) -> (b,a): p0=(0,0), p1=(1,0), p2=(0,1), p3=(1,1)
        let sq = square();
        let q = group_quotient(sq.clone(), &[vec![0, 1, 2, 3], vec![0, 2, 1, 3]]).unwrap();
        assert_eq!(q.classes(), &[vec![0], vec![1, 2], vec![3]]);
        // brute force over orbit pairs
        for y in 0..3 {
            for z in 0..3 {
                let mut best = f64::INFINITY;
                for &a in &q.classes()[y] {
                    for &b in &q.classes()[z] {
                        best = best.min(sq.dist(a, b));
                    }
                }
                let expect = if y == z { 0.0 } else { best };
                assert_eq!(q.quotient_distance(y, z).unwrap(), expect);
            }
        }
        assert_eq!(q.quotient_distance(1, 0).unwrap(), 1.0);
        assert_eq!(q.quotient_distance(0, 2).unwrap(), 2f64.sqrt());
        assert!(q.dstar_triangle_violations(METRIC_TOL).is_empty());
        assert!(matches!(q.quotient_distance(0, 7), Err(OtError::NotFound(_))));
    }

    #[test]
    fn rejects_non_isometries_and_non_groups() {
        let line = Arc::new(FiniteMetricSpace::on_line(&[0.0, 1.0, 3.0]).unwrap());
        let shift = vec![1, 2, 0];
        assert!(matches!(
            group_quotient(line.clone(), &[vec![0, 1, 2], shift]),
            Err(OtError::InvalidAction(_))
        ));
        let sq = square();
        // rotation by 90 degrees without its powers
        let rot = vec![1, 3, 0, 2];
        assert!(matches!(
            group_quotient(sq, &[vec![0, 1, 2, 3], rot]),
            Err(OtError::InvalidAction(_))
        ));
    }

    #[test]
    fn arbitrary_partitions_are_recorded() {
        let line = Arc::new(FiniteMetricSpace::on_line(&[0.0, 1.0, 2.0, 3.0]).unwrap());
        let q = QuotientSpace::from_partition(line.clone(), vec![vec![0, 3], vec![1], vec![2]]).unwrap();
        assert_eq!(q.quotient_distance(0, 1).unwrap(), 1.0);
        // d*({1},{2}) = 1 <= d*({1},{0,3}) + d*({0,3},{2}) = 2 holds; this
        // partition is fine, but overlapping / missing classes are not.
        assert!(QuotientSpace::from_partition(line.clone(), vec![vec![0, 1], vec![1, 2, 3]]).is_err());
        assert!(QuotientSpace::from_partition(line, vec![vec![0, 1]]).is_err());
    }

    #[test]
    fn non_metric_quotient_is_reported() {
        // classes {0,3} and {1} are close, {1} and {2} close, but {0,3}-{2}...
        let line = Arc::new(FiniteMetricSpace::on_line(&[0.0, 1.0, 5.0, 10.0, 11.0]).unwrap());
        let q = QuotientSpace::from_partition(line, vec![vec![0, 4], vec![1], vec![2], vec![3]]).unwrap();
        // d*({1},{3}) = 9 > d*({1},{0,4}) + d*({0,4},{3}) = 1 + 1
        assert!(!q.dstar_triangle_violations(METRIC_TOL).is_empty());
    }
}
