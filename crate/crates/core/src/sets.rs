//! Finite coefficient sets in the complex plane and their convex-hull
//! geometry: extreme points, diameter, scaling, conjugation, Minkowski sums,
//! and point membership with a small slack.
//!
//! Points are user-typed coefficients, so coincident inputs are deduplicated
//! at 1e-12 and the hull uses the monotone-chain algorithm on lexicographic
//! order.

use crate::spaces::{c, Scalar};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Tolerance for treating two input coefficients as the same point.
pub const DEDUP_TOL: f64 = 1e-12;

/// Slack for half-plane membership tests.
pub const CONTAINS_SLACK: f64 = 1e-12;

#[derive(Debug, Error, PartialEq)]
pub enum SetError {
    #[error("coefficient set must be nonempty")]
    Empty,
    #[error("non-finite coefficient")]
    NonFinite,
}

/// A nonempty finite set of complex coefficients, deduplicated on input.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointSet {
    points: Vec<Scalar>,
}

impl PointSet {
    pub fn new(mut points: Vec<Scalar>) -> Result<Self, SetError> {
        if points.is_empty() {
            return Err(SetError::Empty);
        }
        if points.iter().any(|p| !p.re.is_finite() || !p.im.is_finite()) {
            return Err(SetError::NonFinite);
        }
        points.sort_by(|a, b| (a.re, a.im).partial_cmp(&(b.re, b.im)).unwrap());
        points.dedup_by(|a, b| (*a - *b).norm() <= DEDUP_TOL);
        Ok(PointSet { points })
    }

    pub fn from_reals(xs: &[f64]) -> Result<Self, SetError> {
        PointSet::new(xs.iter().map(|&x| c(x, 0.0)).collect())
    }

    /// Regular N-gon on the unit circle, the finite stand-in for the disk.
    pub fn disk_ngon(n: usize) -> Self {
        assert!(n >= 3);
        let points = (0..n)
            .map(|k| {
                let t = 2.0 * std::f64::consts::PI * k as f64 / n as f64;
                c(t.cos(), t.sin())
            })
            .collect();
        PointSet::new(points).unwrap()
    }

    pub fn points(&self) -> &[Scalar] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Pointwise multiplication by a fixed scalar.
    pub fn scale(&self, a: Scalar) -> PointSet {
        PointSet::new(self.points.iter().map(|p| a * p).collect()).unwrap()
    }

    /// Pointwise complex conjugation.
    pub fn conjugate(&self) -> PointSet {
        PointSet::new(self.points.iter().map(|p| p.conj()).collect()).unwrap()
    }

    /// Minkowski sum: all pairwise sums, deduplicated.
    pub fn minkowski_sum(&self, other: &PointSet) -> PointSet {
        let mut sums = Vec::with_capacity(self.len() * other.len());
        for a in &self.points {
            for b in &other.points {
                sums.push(a + b);
            }
        }
        PointSet::new(sums).unwrap()
    }

    /// Maximum pairwise distance.
    pub fn diameter(&self) -> f64 {
        let mut best = 0.0_f64;
        for (i, a) in self.points.iter().enumerate() {
            for b in &self.points[i + 1..] {
                best = best.max((a - b).norm());
            }
        }
        best
    }

    /// Largest modulus among the coefficients.
    pub fn max_modulus(&self) -> f64 {
        self.points.iter().map(|p| p.norm()).fold(0.0, f64::max)
    }

    pub fn convex_hull(&self) -> ConvexRegion {
        convex_hull(self)
    }
}

/// Convex hull of a finite planar set, stored as its extreme points.
///
/// Degenerate cases keep their natural representations: a singleton is one
/// point, a segment is its two endpoints; with three or more extreme points
/// the polygon is in counterclockwise order starting from the lexicographic
/// minimum.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvexRegion {
    extreme_points: Vec<Scalar>,
}

fn cross(o: Scalar, a: Scalar, b: Scalar) -> f64 {
    (a.re - o.re) * (b.im - o.im) - (a.im - o.im) * (b.re - o.re)
}

/// Monotone chain. Collinear points are dropped, so the output is exactly
/// the extreme-point list.
pub fn convex_hull(set: &PointSet) -> ConvexRegion {
    let pts = set.points(); // already sorted lexicographically, deduplicated
    let n = pts.len();
    if n <= 2 {
        return ConvexRegion { extreme_points: pts.to_vec() };
    }
    // Cross products scale like length^2; make the collinearity cutoff
    // follow the spread of the data.
    let spread = (pts[n - 1] - pts[0]).norm().max(set.diameter());
    let tol = DEDUP_TOL * spread.max(1.0) * spread.max(1.0);

    let mut lower: Vec<Scalar> = Vec::new();
    for &p in pts {
        while lower.len() >= 2 && cross(lower[lower.len() - 2], lower[lower.len() - 1], p) <= tol {
            lower.pop();
        }
        lower.push(p);
    }
    let mut upper: Vec<Scalar> = Vec::new();
    for &p in pts.iter().rev() {
        while upper.len() >= 2 && cross(upper[upper.len() - 2], upper[upper.len() - 1], p) <= tol {
            upper.pop();
        }
        upper.push(p);
    }
    lower.pop();
    upper.pop();
    lower.extend(upper);
    if lower.len() <= 1 {
        // All points collinear within tolerance: keep the two endpoints.
        return ConvexRegion { extreme_points: vec![pts[0], pts[n - 1]] };
    }
    ConvexRegion { extreme_points: lower }
}

impl ConvexRegion {
    pub fn extreme_points(&self) -> &[Scalar] {
        &self.extreme_points
    }

    pub fn len(&self) -> usize {
        self.extreme_points.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn as_point_set(&self) -> PointSet {
        PointSet::new(self.extreme_points.clone()).unwrap()
    }

    pub fn diameter(&self) -> f64 {
        self.as_point_set().diameter()
    }

    /// Membership with [`CONTAINS_SLACK`] of absolute slack measured as a
    /// distance, so it is meaningful for all degenerate shapes.
    pub fn contains(&self, z: Scalar) -> bool {
        match self.extreme_points.len() {
            1 => (z - self.extreme_points[0]).norm() <= CONTAINS_SLACK,
            2 => {
                let (a, b) = (self.extreme_points[0], self.extreme_points[1]);
                dist_to_segment(z, a, b) <= CONTAINS_SLACK
            }
            _ => {
                let m = self.extreme_points.len();
                for i in 0..m {
                    let a = self.extreme_points[i];
                    let b = self.extreme_points[(i + 1) % m];
                    let len = (b - a).norm();
                    // signed distance of z to the directed edge a -> b
                    if cross(a, b, z) < -CONTAINS_SLACK * len.max(1.0) {
                        return false;
                    }
                }
                true
            }
        }
    }
}

fn dist_to_segment(z: Scalar, a: Scalar, b: Scalar) -> f64 {
    let ab = b - a;
    let len2 = ab.norm_sqr();
    if len2 == 0.0 {
        return (z - a).norm();
    }
    let t = ((z - a).re * ab.re + (z - a).im * ab.im) / len2;
    let t = t.clamp(0.0, 1.0);
    (z - (a + ab * t)).norm()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn close(a: Scalar, b: Scalar) -> bool {
        (a - b).norm() < 1e-12
    }

    #[test]
    fn hull_of_two_points_is_segment() {
        let h = PointSet::from_reals(&[-1.0, 1.0]).unwrap().convex_hull();
        assert_eq!(h.len(), 2);
        assert!(close(h.extreme_points()[0], c(-1.0, 0.0)));
        assert!(close(h.extreme_points()[1], c(1.0, 0.0)));
    }

    #[test]
    fn hull_drops_collinear_interior_point() {
        let h = PointSet::from_reals(&[0.0, 0.5, 1.0]).unwrap().convex_hull();
        assert_eq!(h.len(), 2);
        assert!(close(h.extreme_points()[0], c(0.0, 0.0)));
        assert!(close(h.extreme_points()[1], c(1.0, 0.0)));
    }

    #[test]
    fn hull_of_square_with_interior_origin() {
        let set =
            PointSet::new(vec![c(1.0, 0.0), c(0.0, 1.0), c(-1.0, 0.0), c(0.0, -1.0), c(0.0, 0.0)])
                .unwrap();
        let h = set.convex_hull();
        assert_eq!(h.len(), 4);
        assert!(h.contains(c(0.0, 0.0)));
        assert!(!h.contains(c(0.9, 0.9)));
    }

    #[test]
    fn scale_and_conjugate() {
        let s = PointSet::from_reals(&[-1.0, 1.0]).unwrap().scale(c(2.0, 0.0));
        assert_eq!(s.points(), &[c(-2.0, 0.0), c(2.0, 0.0)]);
        let conj = PointSet::new(vec![c(0.0, 1.0)]).unwrap().conjugate();
        assert_eq!(conj.points(), &[c(0.0, -1.0)]);
        let zero = PointSet::from_reals(&[-3.0, 4.0]).unwrap().scale(Scalar::ZERO);
        assert_eq!(zero.len(), 1);
        assert_eq!(zero.points()[0], Scalar::ZERO);
    }

    #[test]
    fn minkowski_sums() {
        let a = PointSet::from_reals(&[0.0, 1.0]).unwrap();
        let s = a.minkowski_sum(&a);
        assert_eq!(s.points(), &[c(0.0, 0.0), c(1.0, 0.0), c(2.0, 0.0)]);
        let single =
            PointSet::new(vec![c(1.0, 2.0)]).unwrap().minkowski_sum(&PointSet::new(vec![c(-0.5, 0.25)]).unwrap());
        assert_eq!(single.points(), &[c(0.5, 2.25)]);
        let pm = PointSet::from_reals(&[-1.0, 1.0]).unwrap();
        let s = pm.minkowski_sum(&pm);
        assert_eq!(s.points(), &[c(-2.0, 0.0), c(0.0, 0.0), c(2.0, 0.0)]);
    }

    #[test]
    fn diameter_and_max_modulus() {
        assert_eq!(PointSet::from_reals(&[-1.0, 1.0]).unwrap().diameter(), 2.0);
        assert_eq!(PointSet::from_reals(&[0.0, 1.0]).unwrap().max_modulus(), 1.0);
    }

    #[test]
    fn disk_ngon_has_unit_extremes() {
        let gon = PointSet::disk_ngon(64);
        assert_eq!(gon.convex_hull().len(), 64);
        assert!((gon.max_modulus() - 1.0).abs() < 1e-15);
        assert!(gon.convex_hull().contains(c(0.5, 0.5)));
    }

    proptest! {
        #[test]
        fn hull_idempotent_and_contains_inputs(
            pts in prop::collection::vec((-5.0_f64..5.0, -5.0_f64..5.0), 1..12)
        ) {
            let set = PointSet::new(pts.iter().map(|&(r, i)| c(r, i)).collect()).unwrap();
            let hull = set.convex_hull();
            let again = hull.as_point_set().convex_hull();
            prop_assert_eq!(hull.len(), again.len());
            for (a, b) in hull.extreme_points().iter().zip(again.extreme_points()) {
                prop_assert!((a - b).norm() < 1e-12);
            }
            for &p in set.points() {
                prop_assert!(hull.contains(p));
            }
        }

        #[test]
        fn diameter_scales_exactly(
            pts in prop::collection::vec((-5.0_f64..5.0, -5.0_f64..5.0), 1..8),
            a in (-4.0_f64..4.0, -4.0_f64..4.0),
        ) {
            let set = PointSet::new(pts.iter().map(|&(r, i)| c(r, i)).collect()).unwrap();
            let a = c(a.0, a.1);
            let lhs = set.scale(a).diameter();
            let rhs = a.norm() * set.diameter();
            prop_assert!((lhs - rhs).abs() <= 1e-12 * (1.0 + rhs));
        }

        #[test]
        fn hull_commutes_with_minkowski_sum(
            xs in prop::collection::vec((-3.0_f64..3.0, -3.0_f64..3.0), 1..7),
            ys in prop::collection::vec((-3.0_f64..3.0, -3.0_f64..3.0), 1..7),
        ) {
            let a = PointSet::new(xs.iter().map(|&(r, i)| c(r, i)).collect()).unwrap();
            let b = PointSet::new(ys.iter().map(|&(r, i)| c(r, i)).collect()).unwrap();
            let lhs = a.minkowski_sum(&b).convex_hull();
            let rhs = a
                .convex_hull()
                .as_point_set()
                .minkowski_sum(&b.convex_hull().as_point_set())
                .convex_hull();
            prop_assert_eq!(lhs.len(), rhs.len());
            for (u, v) in lhs.extreme_points().iter().zip(rhs.extreme_points()) {
                prop_assert!((u - v).norm() < 1e-9);
            }
        }
    }
}
