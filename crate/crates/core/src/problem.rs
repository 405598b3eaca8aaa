//! The bilevel problem interface.
//!
//! ```text
//! min_{x in X, y in Y} F(x, y)   s.t.  y solves  min_{y in Y} f(x, y)  s.t.  g(x, y) <= 0
//! ```
//!
//! Implementors supply zeroth- and first-order oracles only. There is no
//! second-order hook; the solver never needs one.

use crate::{ConvexSet, Matrix, Vector};

pub trait BilevelProblem: Send + Sync {
    /// Upper-level dimension `n`.
    fn dim_x(&self) -> usize;
    /// Lower-level dimension `m`.
    fn dim_y(&self) -> usize;
    /// Number of lower-level constraints `p` (may be zero).
    fn dim_g(&self) -> usize;

    /// Upper-level objective `F(x, y)`.
    fn upper(&self, x: &Vector, y: &Vector) -> f64;
    /// `(grad_x F, grad_y F)`.
    fn upper_grad(&self, x: &Vector, y: &Vector) -> (Vector, Vector);

    /// Lower-level objective `f(x, y)`; must be convex in `y` on `Y`.
    fn lower(&self, x: &Vector, y: &Vector) -> f64;
    /// `(grad_x f, grad_y f)`.
    fn lower_grad(&self, x: &Vector, y: &Vector) -> (Vector, Vector);

    /// Constraint mapping `g(x, y)`, of length `p`, componentwise convex in `y`.
    fn constraints(&self, x: &Vector, y: &Vector) -> Vector;
    /// Jacobians `(grad_x g, grad_y g)`, shaped `p x n` and `p x m`.
    fn constraints_jac(&self, x: &Vector, y: &Vector) -> (Matrix, Matrix);

    /// `(lambda' grad_x g, lambda' grad_y g)`. Override when the Jacobian is
    /// expensive to materialize.
    fn constraints_vjp(&self, x: &Vector, y: &Vector, lambda: &Vector) -> (Vector, Vector) {
        let (jx, jy) = self.constraints_jac(x, y);
        (jx.tr_mul(lambda), jy.tr_mul(lambda))
    }

    fn set_x(&self) -> &ConvexSet;
    fn set_y(&self) -> &ConvexSet;
    /// `C = {(x, y) in X x Y : g(x, y) <= 0}` over `R^{n+m}`, in a
    /// projection-friendly form.
    fn feasible_set(&self) -> &ConvexSet;

    /// Weak-convexity constant `rho_f` of `f`.
    fn weak_convexity(&self) -> f64 {
        0.0
    }

    /// Known lower bound of `F` on `X x Y`, if any.
    fn upper_floor(&self) -> Option<f64> {
        None
    }
}

/// Concatenates `(x, y)` into one vector of length `n + m`.
pub fn join(x: &Vector, y: &Vector) -> Vector {
    let mut w = Vector::zeros(x.len() + y.len());
    w.rows_mut(0, x.len()).copy_from(x);
    w.rows_mut(x.len(), y.len()).copy_from(y);
    w
}

/// Splits `w` into its first `n` entries and the rest.
pub fn split(w: &Vector, n: usize) -> (Vector, Vector) {
    (
        Vector::from(w.rows(0, n).into_owned()),
        Vector::from(w.rows(n, w.len() - n).into_owned()),
    )
}
