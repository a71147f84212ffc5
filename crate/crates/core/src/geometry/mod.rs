//! Sup-norm geometry of multi-particle configurations and rectangles.
//!
//! A configuration is a point of `R^{nd}` seen as `n` particles in `R^d`.
//! Rectangles are products of open cubes, one per particle. Particle
//! indices are zero-based throughout.

mod cover;
pub mod laws;

pub use cover::{suitable_cover, CellRule, Cover};

use crate::error::{invalid, Error, Result};
use serde::{Deserialize, Serialize};

pub fn sup_norm(x: &[f64]) -> f64 {
    x.iter().fold(0.0, |m, v| m.max(v.abs()))
}

pub fn sup_dist(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).fold(0.0, |m, (a, b)| m.max((a - b).abs()))
}

/// `n` particles in `R^d`, stored particle-major.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Configuration {
    d: usize,
    coords: Vec<f64>,
}

impl Configuration {
    pub fn new(d: usize, coords: Vec<f64>) -> Result<Self> {
        if d == 0 {
            return Err(invalid("ambient dimension must be at least 1"));
        }
        if coords.is_empty() || coords.len() % d != 0 {
            return Err(Error::DimensionMismatch(format!(
                "{} coordinates do not split into particles of dimension {d}",
                coords.len()
            )));
        }
        if coords.iter().any(|c| !c.is_finite()) {
            return Err(invalid("coordinates must be finite"));
        }
        Ok(Self { d, coords })
    }

    pub fn from_points(points: &[Vec<f64>]) -> Result<Self> {
        let d = points.first().map_or(0, Vec::len);
        if points.iter().any(|p| p.len() != d) {
            return Err(Error::DimensionMismatch("points of unequal dimension".into()));
        }
        Self::new(d, points.concat())
    }

    pub fn n(&self) -> usize {
        self.coords.len() / self.d
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn particle(&self, i: usize) -> &[f64] {
        &self.coords[i * self.d..(i + 1) * self.d]
    }

    pub fn particles(&self) -> impl Iterator<Item = &[f64]> {
        self.coords.chunks(self.d)
    }

    /// Configuration made of the listed particles, in the given order.
    pub fn select(&self, particles: &[usize]) -> Self {
        let coords = particles.iter().flat_map(|&i| self.particle(i).iter().copied()).collect();
        Self { d: self.d, coords }
    }

    pub fn translate(&self, shift: &[f64]) -> Self {
        let coords = self
            .coords
            .iter()
            .enumerate()
            .map(|(q, c)| c + shift[q % self.d])
            .collect();
        Self { d: self.d, coords }
    }

    /// `max_i |a_i|`.
    pub fn norm(&self) -> f64 {
        sup_norm(&self.coords)
    }

    pub fn distance(&self, other: &Self) -> Result<f64> {
        if self.d != other.d || self.n() != other.n() {
            return Err(Error::DimensionMismatch("configurations of different shape".into()));
        }
        Ok(sup_dist(&self.coords, &other.coords))
    }
}

pub fn diam(a: &Configuration) -> f64 {
    let mut best: f64 = 0.0;
    for (i, x) in a.particles().enumerate() {
        for y in a.particles().skip(i + 1) {
            best = best.max(sup_dist(x, y));
        }
    }
    best
}

fn directed_hausdorff(a: &Configuration, b: &Configuration) -> f64 {
    a.particles()
        .map(|x| b.particles().map(|y| sup_dist(x, y)).fold(f64::INFINITY, f64::min))
        .fold(0.0, f64::max)
}

/// Hausdorff distance between the particle position sets of `a` and `b`.
pub fn hausdorff_distance(a: &Configuration, b: &Configuration) -> Result<f64> {
    if a.d() != b.d() {
        return Err(Error::DimensionMismatch(format!(
            "ambient dimensions {} and {}",
            a.d(),
            b.d()
        )));
    }
    Ok(directed_hausdorff(a, b).max(directed_hausdorff(b, a)))
}

/// Distance to the `n`-fold Cartesian power of the other position set.
/// For such a power the nearest point is chosen particle by particle, so the
/// larger of the two directed distances is the Hausdorff distance.
pub fn is_l_distant(a: &Configuration, b: &Configuration, l: f64) -> Result<bool> {
    if a.n() != b.n() {
        return Err(Error::DimensionMismatch("particle counts differ".into()));
    }
    Ok(hausdorff_distance(a, b)? >= 3.0 * a.n() as f64 * l)
}

/// Sufficient test for two fully interactive boxes of side `l` to be fully
/// separated.
pub fn fi_fully_separated_check(a: &Configuration, b: &Configuration, l: f64) -> Result<bool> {
    if a.d() != b.d() || a.n() != b.n() {
        return Err(Error::DimensionMismatch("configurations of different shape".into()));
    }
    let far = a
        .particles()
        .flat_map(|x| b.particles().map(move |y| sup_dist(x, y)))
        .fold(0.0, f64::max);
    Ok(far >= 3.0 * a.n() as f64 * l)
}

/// Open cubes `Λ_{s1}(c1)` and `Λ_{s2}(c2)` intersect.
pub fn open_cubes_meet(c1: &[f64], s1: f64, c2: &[f64], s2: f64) -> bool {
    sup_dist(c1, c2) < 0.5 * (s1 + s2)
}

/// Product of open cubes `Λ_{L_i}(a_i)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NRectangle {
    center: Configuration,
    sides: Vec<f64>,
}

impl NRectangle {
    pub fn new(center: Configuration, sides: Vec<f64>) -> Result<Self> {
        if sides.len() != center.n() {
            return Err(Error::DimensionMismatch(format!(
                "{} sides for {} particles",
                sides.len(),
                center.n()
            )));
        }
        if sides.iter().any(|&s| !(s > 0.0 && s.is_finite())) {
            return Err(invalid("rectangle sides must be positive"));
        }
        Ok(Self { center, sides })
    }

    pub fn cube(center: Configuration, side: f64) -> Result<Self> {
        let n = center.n();
        Self::new(center, vec![side; n])
    }

    pub fn center(&self) -> &Configuration {
        &self.center
    }

    pub fn sides(&self) -> &[f64] {
        &self.sides
    }

    pub fn n(&self) -> usize {
        self.center.n()
    }

    pub fn d(&self) -> usize {
        self.center.d()
    }

    pub fn is_box(&self) -> bool {
        self.sides.iter().all(|&s| s == self.sides[0])
    }

    pub fn min_side(&self) -> f64 {
        self.sides.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max_side(&self) -> f64 {
        self.sides.iter().copied().fold(0.0, f64::max)
    }

    /// Side length along flattened axis `q`.
    pub fn axis_side(&self, q: usize) -> f64 {
        self.sides[q / self.d()]
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        let d = self.d();
        x.len() == self.center.coords.len()
            && x.iter().enumerate().all(|(q, v)| (v - self.center.coords[q]).abs() < 0.5 * self.sides[q / d])
    }

    /// Rectangle built from the listed particles.
    pub fn select(&self, particles: &[usize]) -> Self {
        Self {
            center: self.center.select(particles),
            sides: particles.iter().map(|&i| self.sides[i]).collect(),
        }
    }

    pub fn translate(&self, shift: &[f64]) -> Self {
        Self { center: self.center.translate(shift), sides: self.sides.clone() }
    }

    /// Whether the open cube of particle `i` meets the union of all particle
    /// cubes of `other`.
    fn face_meets_projection(&self, i: usize, other: &Self) -> bool {
        (0..other.n()).any(|j| {
            open_cubes_meet(self.center.particle(i), self.sides[i], other.center.particle(j), other.sides[j])
        })
    }

    /// Largest `t` such that every point of the rectangle is at sup-distance
    /// at least `t` from particles `i` and `j`, i.e. the gap between their cubes.
    pub fn particle_gap(&self, i: usize, j: usize) -> f64 {
        sup_dist(self.center.particle(i), self.center.particle(j)) - 0.5 * (self.sides[i] + self.sides[j])
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Which {
    First,
    Second,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum SeparationClass {
    FullySeparated,
    /// The cube of `particle` in rectangle `rect` misses every cube of the other one.
    PartiallySeparated { rect: Which, particle: usize },
    Entangled,
}

impl SeparationClass {
    pub fn is_partially_separated(&self) -> bool {
        !matches!(self, SeparationClass::Entangled)
    }
}

pub fn separation_class(r1: &NRectangle, r2: &NRectangle) -> Result<SeparationClass> {
    if r1.n() != r2.n() || r1.d() != r2.d() {
        return Err(Error::DimensionMismatch("rectangles of different shape".into()));
    }
    let first_free: Vec<bool> = (0..r1.n()).map(|i| !r1.face_meets_projection(i, r2)).collect();
    if first_free.iter().all(|&f| f) {
        return Ok(SeparationClass::FullySeparated);
    }
    if let Some(i) = first_free.iter().position(|&f| f) {
        return Ok(SeparationClass::PartiallySeparated { rect: Which::First, particle: i });
    }
    if let Some(j) = (0..r2.n()).find(|&j| !r2.face_meets_projection(j, r1)) {
        return Ok(SeparationClass::PartiallySeparated { rect: Which::Second, particle: j });
    }
    Ok(SeparationClass::Entangled)
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum InteractionClass {
    FullyInteractive,
    /// Particles in `j` are farther than the interaction range from all others.
    PartiallyInteractive { j: Vec<usize> },
}

impl InteractionClass {
    pub fn split(&self) -> Option<&[usize]> {
        match self {
            InteractionClass::PartiallyInteractive { j } => Some(j),
            InteractionClass::FullyInteractive => None,
        }
    }
}

/// Proper nonempty subsets of `0..n` by increasing size, lexicographic within a size.
pub fn canonical_splits(n: usize) -> Vec<Vec<usize>> {
    fn extend(start: usize, n: usize, size: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == size {
            out.push(cur.clone());
            return;
        }
        for i in start..n {
            cur.push(i);
            extend(i + 1, n, size, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    for size in 1..n {
        extend(0, n, size, &mut Vec::new(), &mut out);
    }
    out
}

pub fn complement(j: &[usize], n: usize) -> Vec<usize> {
    (0..n).filter(|i| !j.contains(i)).collect()
}

pub fn interaction_class(rect: &NRectangle, r0: f64) -> InteractionClass {
    let n = rect.n();
    for j in canonical_splits(n) {
        let jc = complement(&j, n);
        if j.iter().all(|&a| jc.iter().all(|&b| rect.particle_gap(a, b) >= r0)) {
            return InteractionClass::PartiallyInteractive { j };
        }
    }
    InteractionClass::FullyInteractive
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn cfg(d: usize, c: &[f64]) -> Configuration {
        Configuration::new(d, c.to_vec()).unwrap()
    }

    #[test]
    fn hausdorff_examples() {
        assert_eq!(hausdorff_distance(&cfg(1, &[0., 0.]), &cfg(1, &[1., 1.])).unwrap(), 1.0);
        assert_eq!(hausdorff_distance(&cfg(1, &[0., 3.]), &cfg(1, &[3., 0.])).unwrap(), 0.0);
        assert_eq!(hausdorff_distance(&cfg(1, &[0., 1.]), &cfg(1, &[5., 9.])).unwrap(), 8.0);
        assert!(hausdorff_distance(&cfg(1, &[0., 1.]), &cfg(2, &[0., 1.])).is_err());
    }

    #[test]
    fn diam_examples() {
        assert_eq!(diam(&cfg(1, &[0., 0.])), 0.0);
        assert_eq!(diam(&cfg(1, &[0., 1., 5.])), 5.0);
        assert_eq!(diam(&cfg(2, &[0., 0., 3., 4.])), 4.0);
        assert_eq!(diam(&cfg(2, &[7., -2.])), 0.0);
    }

    #[test]
    fn separation_examples() {
        let b = |c: &[f64]| NRectangle::cube(cfg(1, c), 4.0).unwrap();
        assert_eq!(separation_class(&b(&[0., 0.]), &b(&[10., 10.])).unwrap(), SeparationClass::FullySeparated);
        assert_eq!(
            separation_class(&b(&[0., 0.]), &b(&[0., 10.])).unwrap(),
            SeparationClass::PartiallySeparated { rect: Which::Second, particle: 1 }
        );
        assert_eq!(separation_class(&b(&[0., 0.]), &b(&[0., 0.])).unwrap(), SeparationClass::Entangled);
        // Touching open intervals do not meet.
        assert_eq!(separation_class(&b(&[0., 0.]), &b(&[4., 4.])).unwrap(), SeparationClass::FullySeparated);
    }

    #[test]
    fn interaction_examples() {
        let b = |c: &[f64]| NRectangle::cube(cfg(1, c), 4.0).unwrap();
        assert_eq!(
            interaction_class(&b(&[0., 10.]), 1.0),
            InteractionClass::PartiallyInteractive { j: vec![0] }
        );
        assert_eq!(interaction_class(&b(&[0., 3.]), 1.0), InteractionClass::FullyInteractive);
        assert_eq!(interaction_class(&b(&[0., 0.]), 1.0), InteractionClass::FullyInteractive);
        // Particle 1 isolated from the pair {0, 2}.
        assert_eq!(
            interaction_class(&b(&[0., 20., 1.]), 1.0),
            InteractionClass::PartiallyInteractive { j: vec![1] }
        );
    }

    #[test]
    fn canonical_order() {
        assert_eq!(
            canonical_splits(3),
            vec![vec![0], vec![1], vec![2], vec![0, 1], vec![0, 2], vec![1, 2]]
        );
        assert!(canonical_splits(1).is_empty());
    }

    #[test]
    fn distant_examples() {
        let a = cfg(1, &[0., 0.]);
        assert!(is_l_distant(&a, &cfg(1, &[13., 13.]), 2.0).unwrap());
        assert!(!is_l_distant(&a, &cfg(1, &[10., 10.]), 2.0).unwrap());
        assert!(!is_l_distant(&a, &a, 2.0).unwrap());
        // Shared position set: distance zero even though the configurations differ.
        assert!(!is_l_distant(&cfg(1, &[0., 100.]), &cfg(1, &[100., 0.]), 1.0).unwrap());
    }

    #[test]
    fn fi_examples() {
        let a = cfg(1, &[0., 1.]);
        assert!(fi_fully_separated_check(&a, &cfg(1, &[20., 21.]), 2.0).unwrap());
        assert!(!fi_fully_separated_check(&a, &a, 2.0).unwrap());
        assert!(!fi_fully_separated_check(&a, &cfg(1, &[5., 6.]), 2.0).unwrap());
    }

    #[test]
    fn rectangle_validation() {
        assert!(NRectangle::new(cfg(1, &[0., 1.]), vec![1.0]).is_err());
        assert!(NRectangle::new(cfg(1, &[0.]), vec![0.0]).is_err());
        assert!(Configuration::new(2, vec![1.0, 2.0, 3.0]).is_err());
        let r = NRectangle::new(cfg(1, &[0., 5.]), vec![2.0, 4.0]).unwrap();
        assert!(!r.is_box());
        assert!(r.contains(&[0.9, 6.9]));
        assert!(!r.contains(&[1.0, 5.0]));
    }

    fn config_strategy() -> impl Strategy<Value = (Configuration, Configuration)> {
        (1usize..=3, 1usize..=2).prop_flat_map(|(n, d)| {
            let coords = proptest::collection::vec(-8i32..8, n * d);
            (coords.clone(), coords).prop_map(move |(a, b)| {
                let f = |v: Vec<i32>| Configuration::new(d, v.into_iter().map(|x| x as f64 * 0.5).collect()).unwrap();
                (f(a), f(b))
            })
        })
    }

    proptest! {
        #[test]
        fn hausdorff_bounds((a, b) in config_strategy()) {
            let dh = hausdorff_distance(&a, &b).unwrap();
            let dist = a.distance(&b).unwrap();
            prop_assert!(dh <= dist);
            prop_assert!(dist <= dh + diam(&a));
            prop_assert_eq!(dh, hausdorff_distance(&b, &a).unwrap());
        }

        #[test]
        fn hausdorff_permutation_invariant((a, b) in config_strategy()) {
            let n = a.n();
            let rev: Vec<usize> = (0..n).rev().collect();
            prop_assert_eq!(
                hausdorff_distance(&a, &b).unwrap(),
                hausdorff_distance(&a.select(&rev), &b).unwrap()
            );
        }

        #[test]
        fn full_separation_is_partial((a, b) in config_strategy(), side in 0.5f64..4.0) {
            let r1 = NRectangle::cube(a, side).unwrap();
            let r2 = NRectangle::cube(b, side).unwrap();
            if separation_class(&r1, &r2).unwrap() == SeparationClass::FullySeparated {
                prop_assert!((0..r1.n()).all(|i| !r1.face_meets_projection(i, &r2)));
                prop_assert!((0..r2.n()).all(|j| !r2.face_meets_projection(j, &r1)));
            }
        }

        #[test]
        fn interaction_translation_invariant((a, _b) in config_strategy(), shift in -5i32..5, side in 0.5f64..3.0) {
            let r = NRectangle::cube(a, side).unwrap();
            let s = vec![shift as f64 * 0.25; r.d()];
            prop_assert_eq!(interaction_class(&r, 0.5), interaction_class(&r.translate(&s), 0.5));
        }

        #[test]
        fn fi_check_implies_full_separation((a, b) in config_strategy(), side in 2.0f64..4.0) {
            let r0 = 1.0;
            let r1 = NRectangle::cube(a.clone(), side).unwrap();
            let r2 = NRectangle::cube(b.clone(), side).unwrap();
            let fi = interaction_class(&r1, r0) == InteractionClass::FullyInteractive
                && interaction_class(&r2, r0) == InteractionClass::FullyInteractive;
            if fi && fi_fully_separated_check(&a, &b, side).unwrap() {
                prop_assert_eq!(separation_class(&r1, &r2).unwrap(), SeparationClass::FullySeparated);
            }
        }
    }
}
