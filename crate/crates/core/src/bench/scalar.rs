use nalgebra::dvector;

use crate::{BilevelProblem, ConvexSet, LipschitzModuli, Matrix, Vector};

/// One-dimensional testbed with closed-form saddle points.
///
/// `f(x, y) = y^2 / 2`, `g(x, y) = y - x` (dropped when unconstrained),
/// `F(x, y) = s ((x - 1)^2 + (y - 1)^2) / 2` for an upper-level scale `s`;
/// `X = Y = R`.
#[derive(Debug, Clone)]
pub struct ScalarTestbed {
    upper_scale: f64,
    constrained: bool,
    whole: ConvexSet,
    feasible: ConvexSet,
}

impl ScalarTestbed {
    pub fn new(upper_scale: f64) -> Self {
        Self {
            upper_scale,
            constrained: true,
            whole: ConvexSet::whole(1),
            feasible: ConvexSet::Halfspace {
                a: dvector![-1.0, 1.0],
                b: 0.0,
            },
        }
    }

    /// Same data without the constraint (`p = 0`).
    pub fn unconstrained(upper_scale: f64) -> Self {
        Self {
            upper_scale,
            constrained: false,
            whole: ConvexSet::whole(1),
            feasible: ConvexSet::whole(2),
        }
    }

    pub fn moduli(&self) -> LipschitzModuli {
        LipschitzModuli {
            upper_smooth: self.upper_scale,
            lower_smooth: 1.0,
            constraint: if self.constrained { 2f64.sqrt() } else { 0.0 },
            constraint_grad_x: 0.0,
            constraint_grad_y: 0.0,
        }
    }

    /// Lower-level solution `argmin { y^2/2 : y <= x }`.
    pub fn ll_solution(&self, x: f64) -> f64 {
        if self.constrained {
            x.min(0.0)
        } else {
            0.0
        }
    }
}

impl BilevelProblem for ScalarTestbed {
    fn dim_x(&self) -> usize {
        1
    }
    fn dim_y(&self) -> usize {
        1
    }
    fn dim_g(&self) -> usize {
        usize::from(self.constrained)
    }

    fn upper(&self, x: &Vector, y: &Vector) -> f64 {
        0.5 * self.upper_scale * ((x[0] - 1.0).powi(2) + (y[0] - 1.0).powi(2))
    }
    fn upper_grad(&self, x: &Vector, y: &Vector) -> (Vector, Vector) {
        (
            dvector![self.upper_scale * (x[0] - 1.0)],
            dvector![self.upper_scale * (y[0] - 1.0)],
        )
    }

    fn lower(&self, _x: &Vector, y: &Vector) -> f64 {
        0.5 * y[0] * y[0]
    }
    fn lower_grad(&self, _x: &Vector, y: &Vector) -> (Vector, Vector) {
        (dvector![0.0], dvector![y[0]])
    }

    fn constraints(&self, x: &Vector, y: &Vector) -> Vector {
        if self.constrained {
            dvector![y[0] - x[0]]
        } else {
            Vector::zeros(0)
        }
    }
    fn constraints_jac(&self, _x: &Vector, _y: &Vector) -> (Matrix, Matrix) {
        let p = self.dim_g();
        (
            Matrix::from_element(p, 1, -1.0),
            Matrix::from_element(p, 1, 1.0),
        )
    }

    fn set_x(&self) -> &ConvexSet {
        &self.whole
    }
    fn set_y(&self) -> &ConvexSet {
        &self.whole
    }
    fn feasible_set(&self) -> &ConvexSet {
        &self.feasible
    }
    fn upper_floor(&self) -> Option<f64> {
        Some(0.0)
    }
}
