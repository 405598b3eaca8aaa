//! Euclidean projections onto projection-friendly convex sets and the
//! tangent-cone residual `dist(0, d + N_S(w))` used by the stationarity
//! measure.
//!
//! Every closed-form set projects exactly. Intersections fall back to
//! Dykstra's alternating projections, which converge to the true projection
//! onto the intersection (plain alternating projections do not).

mod affine;
mod dykstra;

pub use affine::AffineSubspace;

use crate::{Error, Result, Vector};

/// Activity tolerance: a box or halfspace constraint whose slack is at most
/// this value is treated as active by [`ConvexSet::tangent_residual`].
pub const ACT_TOL: f64 = 1e-8;

/// Default sweep budget for Dykstra's algorithm.
pub const DYKSTRA_ITERS: usize = 500;
/// Default stopping tolerance (change of the iterate over one sweep).
pub const DYKSTRA_TOL: f64 = 1e-10;

/// A closed convex set with an exact (or Dykstra) Euclidean projection.
#[derive(Debug, Clone)]
pub enum ConvexSet {
    /// All of `R^dim`.
    WholeSpace { dim: usize },
    /// `{ w : lo <= w <= hi }`; bounds may be infinite.
    Box { lo: Vector, hi: Vector },
    /// `{ w : a'w = b }`.
    Hyperplane { a: Vector, b: f64 },
    /// `{ w : a'w <= b }`.
    Halfspace { a: Vector, b: f64 },
    /// `{ w : M w = c }` with `M` of full row rank.
    Affine(AffineSubspace),
    /// `{ w : |w - center| <= radius }`.
    Ball { center: Vector, radius: f64 },
    /// Intersection of the members, projected onto with Dykstra's algorithm.
    Intersection {
        members: Vec<ConvexSet>,
        max_iters: usize,
        tol: f64,
    },
    /// Cartesian product; member `i` acts on the `i`-th block of coordinates.
    Product(Vec<ConvexSet>),
}

/// Outcome of a membership test.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Containment {
    pub inside: bool,
    /// Largest violation of a defining (in)equality; 0 when strictly inside.
    pub violation: f64,
}

impl ConvexSet {
    pub fn whole(dim: usize) -> Self {
        ConvexSet::WholeSpace { dim }
    }

    pub fn boxed(lo: Vector, hi: Vector) -> Result<Self> {
        if lo.len() != hi.len() {
            return Err(Error::DimensionMismatch {
                expected: lo.len(),
                actual: hi.len(),
            });
        }
        if lo.iter().zip(hi.iter()).any(|(l, h)| !(l <= h)) {
            return Err(Error::InvalidSet("box needs lo <= hi componentwise".into()));
        }
        Ok(ConvexSet::Box { lo, hi })
    }

    /// The multiplier box `[0, r]^p`.
    pub fn nonneg_box(dim: usize, radius: f64) -> Self {
        ConvexSet::Box {
            lo: Vector::zeros(dim),
            hi: Vector::from_element(dim, radius),
        }
    }

    pub fn hyperplane(a: Vector, b: f64) -> Result<Self> {
        if a.norm_squared() == 0.0 {
            return Err(Error::InvalidSet(
                "hyperplane normal must be nonzero".into(),
            ));
        }
        Ok(ConvexSet::Hyperplane { a, b })
    }

    pub fn halfspace(a: Vector, b: f64) -> Result<Self> {
        if a.norm_squared() == 0.0 {
            return Err(Error::InvalidSet("halfspace normal must be nonzero".into()));
        }
        Ok(ConvexSet::Halfspace { a, b })
    }

    pub fn affine(matrix: crate::Matrix, rhs: Vector) -> Result<Self> {
        AffineSubspace::new(matrix, rhs).map(ConvexSet::Affine)
    }

    pub fn ball(center: Vector, radius: f64) -> Result<Self> {
        if !(radius >= 0.0) {
            return Err(Error::InvalidSet("ball radius must be nonnegative".into()));
        }
        Ok(ConvexSet::Ball { center, radius })
    }

    pub fn intersection(members: Vec<ConvexSet>) -> Result<Self> {
        Self::intersection_with(members, DYKSTRA_ITERS, DYKSTRA_TOL)
    }

    pub fn intersection_with(members: Vec<ConvexSet>, max_iters: usize, tol: f64) -> Result<Self> {
        let Some(first) = members.first() else {
            return Err(Error::InvalidSet(
                "intersection needs at least one member".into(),
            ));
        };
        let dim = first.dim();
        if let Some(bad) = members.iter().find(|m| m.dim() != dim) {
            return Err(Error::DimensionMismatch {
                expected: dim,
                actual: bad.dim(),
            });
        }
        Ok(ConvexSet::Intersection {
            members,
            max_iters,
            tol,
        })
    }

    pub fn product(members: Vec<ConvexSet>) -> Self {
        ConvexSet::Product(members)
    }

    pub fn dim(&self) -> usize {
        match self {
            ConvexSet::WholeSpace { dim } => *dim,
            ConvexSet::Box { lo, .. } => lo.len(),
            ConvexSet::Hyperplane { a, .. } | ConvexSet::Halfspace { a, .. } => a.len(),
            ConvexSet::Affine(aff) => aff.dim(),
            ConvexSet::Ball { center, .. } => center.len(),
            ConvexSet::Intersection { members, .. } => members[0].dim(),
            ConvexSet::Product(members) => members.iter().map(ConvexSet::dim).sum(),
        }
    }

    fn check_dim(&self, w: &Vector) -> Result<()> {
        if w.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                actual: w.len(),
            });
        }
        Ok(())
    }

    /// Euclidean projection `argmin_{u in S} |u - w|`.
    pub fn project(&self, w: &Vector) -> Result<Vector> {
        self.check_dim(w)?;
        Ok(match self {
            ConvexSet::WholeSpace { .. } => w.clone(),
            ConvexSet::Box { lo, hi } => Vector::from_iterator(
                w.len(),
                w.iter()
                    .zip(lo.iter().zip(hi.iter()))
                    .map(|(v, (l, h))| v.max(*l).min(*h)),
            ),
            ConvexSet::Hyperplane { a, b } => {
                let shift = (a.dot(w) - b) / a.norm_squared();
                w - a * shift
            }
            ConvexSet::Halfspace { a, b } => {
                let excess = a.dot(w) - b;
                if excess > 0.0 {
                    w - a * (excess / a.norm_squared())
                } else {
                    w.clone()
                }
            }
            ConvexSet::Affine(aff) => aff.project(w),
            ConvexSet::Ball { center, radius } => {
                let offset = w - center;
                let dist = offset.norm();
                if dist <= *radius {
                    w.clone()
                } else {
                    center + offset * (radius / dist)
                }
            }
            ConvexSet::Intersection {
                members,
                max_iters,
                tol,
            } => dykstra::project(members, w, *max_iters, *tol)?,
            ConvexSet::Product(members) => {
                let mut out = Vector::zeros(w.len());
                let mut start = 0;
                for m in members {
                    let d = m.dim();
                    let block = Vector::from(w.rows(start, d).into_owned());
                    out.rows_mut(start, d).copy_from(&m.project(&block)?);
                    start += d;
                }
                out
            }
        })
    }

    /// Membership test with tolerance `tol` on every defining (in)equality.
    pub fn contains(&self, w: &Vector, tol: f64) -> Containment {
        let violation = if w.len() != self.dim() {
            f64::INFINITY
        } else {
            self.violation(w)
        };
        Containment {
            inside: violation <= tol,
            violation,
        }
    }

    fn violation(&self, w: &Vector) -> f64 {
        match self {
            ConvexSet::WholeSpace { .. } => 0.0,
            ConvexSet::Box { lo, hi } => w
                .iter()
                .zip(lo.iter().zip(hi.iter()))
                .map(|(v, (l, h))| (l - v).max(v - h).max(0.0))
                .fold(0.0, f64::max),
            ConvexSet::Hyperplane { a, b } => (a.dot(w) - b).abs(),
            ConvexSet::Halfspace { a, b } => (a.dot(w) - b).max(0.0),
            ConvexSet::Affine(aff) => aff.residual(w).amax(),
            ConvexSet::Ball { center, radius } => ((w - center).norm() - radius).max(0.0),
            ConvexSet::Intersection { members, .. } => {
                members.iter().map(|m| m.violation(w)).fold(0.0, f64::max)
            }
            ConvexSet::Product(members) => {
                let mut start = 0;
                let mut worst = 0.0_f64;
                for m in members {
                    let d = m.dim();
                    let block = Vector::from(w.rows(start, d).into_owned());
                    worst = worst.max(m.violation(&block));
                    start += d;
                }
                worst
            }
        }
    }

    /// `dist(0, d + N_S(w)) = |Proj_{T_S(w)}(-d)|` for `w` in `S`.
    ///
    /// Intersections have no closed-form tangent cone here; callers should
    /// pass an equivalent affine or box model instead.
    pub fn tangent_residual(&self, w: &Vector, d: &Vector) -> Result<f64> {
        self.check_dim(w)?;
        self.check_dim(d)?;
        if let ConvexSet::Intersection { .. } = self {
            return Err(Error::UnsupportedSet("intersection"));
        }
        let tol = ACT_TOL * (1.0 + w.amax());
        let c = self.contains(w, tol);
        if !c.inside {
            return Err(Error::NotInSet {
                violation: c.violation,
            });
        }
        Ok(self.tangent_sq(w, d)?.sqrt())
    }

    // Squared norm of the tangent-cone projection of -d.
    fn tangent_sq(&self, w: &Vector, d: &Vector) -> Result<f64> {
        Ok(match self {
            ConvexSet::WholeSpace { .. } => d.norm_squared(),
            ConvexSet::Box { lo, hi } => {
                let mut acc = 0.0;
                for i in 0..w.len() {
                    let v = -d[i];
                    let at_lo = w[i] - lo[i] <= ACT_TOL;
                    let at_hi = hi[i] - w[i] <= ACT_TOL;
                    let t = match (at_lo, at_hi) {
                        (true, true) => 0.0,
                        (true, false) => v.max(0.0),
                        (false, true) => v.min(0.0),
                        (false, false) => v,
                    };
                    acc += t * t;
                }
                acc
            }
            ConvexSet::Hyperplane { a, .. } => {
                let t = d - a * (a.dot(d) / a.norm_squared());
                t.norm_squared()
            }
            ConvexSet::Halfspace { a, b } => {
                let slack = (b - a.dot(w)) / a.norm();
                halfspace_tangent_sq(a, d, slack <= ACT_TOL)
            }
            ConvexSet::Affine(aff) => aff.null_space_component(d).norm_squared(),
            ConvexSet::Ball { center, radius } => {
                let offset = w - center;
                let active = *radius - offset.norm() <= ACT_TOL;
                if active && offset.norm() > 0.0 {
                    halfspace_tangent_sq(&offset, d, true)
                } else if active {
                    // Degenerate zero-radius ball: the tangent cone is {0}.
                    0.0
                } else {
                    d.norm_squared()
                }
            }
            ConvexSet::Intersection { .. } => return Err(Error::UnsupportedSet("intersection")),
            ConvexSet::Product(members) => {
                let mut start = 0;
                let mut acc = 0.0;
                for m in members {
                    let n = m.dim();
                    let wb = Vector::from(w.rows(start, n).into_owned());
                    let db = Vector::from(d.rows(start, n).into_owned());
                    acc += m.tangent_sq(&wb, &db)?;
                    start += n;
                }
                acc
            }
        })
    }
}

// Tangent cone of an active halfspace with normal `a` is {u : a'u <= 0}.
fn halfspace_tangent_sq(a: &Vector, d: &Vector, active: bool) -> f64 {
    if !active {
        return d.norm_squared();
    }
    let v = -d;
    let excess = a.dot(&v);
    if excess > 0.0 {
        (v - a * (excess / a.norm_squared())).norm_squared()
    } else {
        v.norm_squared()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dvector;

    fn close(a: &Vector, b: &Vector, tol: f64) -> bool {
        (a - b).amax() <= tol
    }

    #[test]
    fn box_clamps_componentwise() {
        let s = ConvexSet::boxed(dvector![0.0, 0.0], dvector![1.0, 1.0]).unwrap();
        assert_eq!(s.project(&dvector![2.0, -1.0]).unwrap(), dvector![1.0, 0.0]);
    }

    #[test]
    fn box_rejects_inverted_bounds() {
        assert!(ConvexSet::boxed(dvector![1.0], dvector![0.0]).is_err());
    }

    #[test]
    fn box_allows_infinite_bounds() {
        let s = ConvexSet::boxed(
            dvector![f64::NEG_INFINITY, 0.0],
            dvector![0.0, f64::INFINITY],
        )
        .unwrap();
        assert_eq!(s.project(&dvector![3.0, -3.0]).unwrap(), dvector![0.0, 0.0]);
        assert_eq!(
            s.project(&dvector![-3.0, 3.0]).unwrap(),
            dvector![-3.0, 3.0]
        );
    }

    #[test]
    fn hyperplane_subtracts_mean() {
        let s = ConvexSet::hyperplane(Vector::from_element(3, 1.0), 0.0).unwrap();
        assert!(close(
            &s.project(&dvector![1.0, 1.0, 1.0]).unwrap(),
            &Vector::zeros(3),
            1e-15
        ));
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let s = ConvexSet::whole(3);
        assert!(matches!(
            s.project(&dvector![1.0]),
            Err(Error::DimensionMismatch {
                expected: 3,
                actual: 1
            })
        ));
    }

    #[test]
    fn containment_examples() {
        let b = ConvexSet::boxed(dvector![0.0], dvector![1.0]).unwrap();
        assert!(b.contains(&dvector![0.5], 0.0).inside);

        let h = ConvexSet::hyperplane(dvector![1.0, 1.0], 0.0).unwrap();
        let c = h.contains(&dvector![1e-7, 0.0], 1e-6);
        assert!(c.inside);
        assert!((c.violation - 1e-7).abs() < 1e-20);

        let ball = ConvexSet::ball(dvector![0.0, 0.0], 1.0).unwrap();
        let c = ball.contains(&dvector![2.0, 0.0], 1e-6);
        assert!(!c.inside);
        assert_eq!(c.violation, 1.0);
    }

    #[test]
    fn tangent_residual_whole_space_is_norm() {
        let s = ConvexSet::whole(2);
        let r = s
            .tangent_residual(&dvector![7.0, -1.0], &dvector![3.0, 4.0])
            .unwrap();
        assert_eq!(r, 5.0);
    }

    #[test]
    fn tangent_residual_box_at_lower_bound() {
        let s = ConvexSet::nonneg_box(1, 10.0);
        let w = dvector![0.0];
        assert_eq!(s.tangent_residual(&w, &dvector![-2.0]).unwrap(), 2.0);
        assert_eq!(s.tangent_residual(&w, &dvector![2.0]).unwrap(), 0.0);
        // upper bound mirrors it
        let w = dvector![10.0];
        assert_eq!(s.tangent_residual(&w, &dvector![-2.0]).unwrap(), 0.0);
        assert_eq!(s.tangent_residual(&w, &dvector![2.0]).unwrap(), 2.0);
    }

    #[test]
    fn tangent_residual_hyperplane() {
        let s = ConvexSet::hyperplane(dvector![1.0, 1.0], 0.0).unwrap();
        let w = dvector![1.0, -1.0];
        assert!(s.tangent_residual(&w, &dvector![1.0, 1.0]).unwrap() < 1e-15);
        let r = s.tangent_residual(&w, &dvector![1.0, 0.0]).unwrap();
        assert!((r - 0.5_f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn tangent_residual_rejects_outside_points_and_intersections() {
        let s = ConvexSet::hyperplane(dvector![1.0, 1.0], 0.0).unwrap();
        assert!(matches!(
            s.tangent_residual(&dvector![1.0, 1.0], &dvector![0.0, 0.0]),
            Err(Error::NotInSet { .. })
        ));
        let i = ConvexSet::intersection(vec![s.clone(), s]).unwrap();
        assert!(matches!(
            i.tangent_residual(&dvector![1.0, -1.0], &dvector![0.0, 0.0]),
            Err(Error::UnsupportedSet(_))
        ));
    }

    #[test]
    fn tangent_residual_active_halfspace() {
        let s = ConvexSet::halfspace(dvector![-1.0, 1.0], 0.0).unwrap();
        let w = dvector![1.0, 1.0];
        // -d points outward: only the tangential part survives
        let r = s.tangent_residual(&w, &dvector![1.0, -1.0]).unwrap();
        assert!(r < 1e-15);
        let r = s.tangent_residual(&w, &dvector![-1.0, 1.0]).unwrap();
        assert!((r - 2.0_f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn product_splits_blocks() {
        let s = ConvexSet::product(vec![ConvexSet::whole(1), ConvexSet::nonneg_box(2, 1.0)]);
        assert_eq!(s.dim(), 3);
        assert_eq!(
            s.project(&dvector![-5.0, -5.0, 5.0]).unwrap(),
            dvector![-5.0, 0.0, 1.0]
        );
        let r = s
            .tangent_residual(&dvector![0.0, 0.0, 1.0], &dvector![3.0, 4.0, 1.0])
            .unwrap();
        // block 2: at lower, -d = -4 clipped to 0; block 3: at upper, -d = -1 kept
        assert!((r - 10.0_f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn intersection_of_halfspaces_hand_checked() {
        let s = ConvexSet::intersection(vec![
            ConvexSet::halfspace(dvector![1.0, 0.0], 0.0).unwrap(),
            ConvexSet::halfspace(dvector![1.0, 1.0], 0.0).unwrap(),
        ])
        .unwrap();
        let p = s.project(&dvector![1.0, 1.0]).unwrap();
        // both constraints active: w = (0, 0)
        assert!(close(&p, &dvector![0.0, 0.0], 1e-8));
    }
}
