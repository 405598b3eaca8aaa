use crate::{BilevelProblem, ConvexSet, LipschitzModuli, Matrix, Vector};

/// Coupled equality-constrained problem with a merely convex lower level.
///
/// ```text
/// F(x, y) = |x - y2|^2 / 2 + |y1 - 1|^2 / 2
/// f(x, y) = |y1|^2 / 2 - x'y1 + 1'y2
/// 1'x + 1'y1 + 1'y2 = 0      (as two opposite inequalities, p = 2)
/// ```
///
/// with `x, y1, y2 in R^n`. The solution is `x* = -0.3`, `y1* = 0.7`,
/// `y2* = -0.4` (all entries).
#[derive(Debug, Clone)]
pub struct MerelyConvex {
    n: usize,
    set_x: ConvexSet,
    set_y: ConvexSet,
    feasible: ConvexSet,
}

impl MerelyConvex {
    pub fn new(n: usize) -> Self {
        assert!(n >= 1, "dimension must be positive");
        Self {
            n,
            set_x: ConvexSet::whole(n),
            set_y: ConvexSet::whole(2 * n),
            feasible: ConvexSet::Hyperplane {
                a: Vector::from_element(3 * n, 1.0),
                b: 0.0,
            },
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn x_star(&self) -> Vector {
        Vector::from_element(self.n, -0.3)
    }

    pub fn y_star(&self) -> Vector {
        let mut y = Vector::from_element(2 * self.n, 0.7);
        y.rows_mut(self.n, self.n).fill(-0.4);
        y
    }

    /// Multipliers of the two signed rows at the solution (`lambda1 - lambda2 = -1`).
    pub fn multiplier_star(&self) -> Vector {
        nalgebra::dvector![0.0, 1.0]
    }

    pub fn moduli(&self) -> LipschitzModuli {
        LipschitzModuli {
            // Hessian of F has blocks [[I, -I], [-I, I]] and I.
            upper_smooth: 2.0,
            // Largest |eigenvalue| of [[0, -1], [-1, 1]].
            lower_smooth: (1.0 + 5f64.sqrt()) / 2.0,
            constraint: ((3 * self.n) as f64).sqrt(),
            constraint_grad_x: 0.0,
            constraint_grad_y: 0.0,
        }
    }

    fn coupling(&self, x: &Vector, y: &Vector) -> f64 {
        x.sum() + y.sum()
    }
}

impl BilevelProblem for MerelyConvex {
    fn dim_x(&self) -> usize {
        self.n
    }
    fn dim_y(&self) -> usize {
        2 * self.n
    }
    fn dim_g(&self) -> usize {
        2
    }

    fn upper(&self, x: &Vector, y: &Vector) -> f64 {
        let n = self.n;
        let y1 = y.rows(0, n);
        let y2 = y.rows(n, n);
        0.5 * (x - y2).norm_squared() + 0.5 * y1.map(|v| v - 1.0).norm_squared()
    }
    fn upper_grad(&self, x: &Vector, y: &Vector) -> (Vector, Vector) {
        let n = self.n;
        let diff = x - y.rows(n, n);
        let mut gy = Vector::zeros(2 * n);
        gy.rows_mut(0, n).copy_from(&y.rows(0, n).map(|v| v - 1.0));
        gy.rows_mut(n, n).copy_from(&(-&diff));
        (diff, gy)
    }

    fn lower(&self, x: &Vector, y: &Vector) -> f64 {
        let n = self.n;
        let y1 = y.rows(0, n);
        0.5 * y1.norm_squared() - x.dot(&y1) + y.rows(n, n).sum()
    }
    fn lower_grad(&self, x: &Vector, y: &Vector) -> (Vector, Vector) {
        let n = self.n;
        let y1 = y.rows(0, n);
        let mut gy = Vector::from_element(2 * n, 1.0);
        gy.rows_mut(0, n).copy_from(&(y1 - x));
        (-y1.into_owned(), gy)
    }

    fn constraints(&self, x: &Vector, y: &Vector) -> Vector {
        let s = self.coupling(x, y);
        nalgebra::dvector![s, -s]
    }
    fn constraints_jac(&self, _x: &Vector, _y: &Vector) -> (Matrix, Matrix) {
        let signs = |cols: usize| Matrix::from_fn(2, cols, |i, _| if i == 0 { 1.0 } else { -1.0 });
        (signs(self.n), signs(2 * self.n))
    }
    fn constraints_vjp(&self, _x: &Vector, _y: &Vector, lambda: &Vector) -> (Vector, Vector) {
        let mu = lambda[0] - lambda[1];
        (
            Vector::from_element(self.n, mu),
            Vector::from_element(2 * self.n, mu),
        )
    }

    fn set_x(&self) -> &ConvexSet {
        &self.set_x
    }
    fn set_y(&self) -> &ConvexSet {
        &self.set_y
    }
    fn feasible_set(&self) -> &ConvexSet {
        &self.feasible
    }
    fn upper_floor(&self) -> Option<f64> {
        Some(0.0)
    }
}
