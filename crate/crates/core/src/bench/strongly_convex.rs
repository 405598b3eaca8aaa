use nalgebra::{Cholesky, Dyn};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::sets::AffineSubspace;
use crate::{BilevelProblem, ConvexSet, Error, LipschitzModuli, Matrix, Result, Vector};

const MAX_ATTEMPTS: u64 = 8;

/// Strongly convex lower level under a coupled affine constraint.
///
/// ```text
/// F(x, y) = sin(c'x + d'y) + ln(|x + y|^2 + 1)
/// f(x, y) = |x - y|^2 / 2
/// A y + H x = 0              (two signed copies, p = 2 k)
/// X = { x : B x = 0 }
/// ```
///
/// `A` is `k x n` with orthonormal rows, `k = max(1, n / 4)`.
#[derive(Debug, Clone)]
pub struct StronglyConvex {
    n: usize,
    a: Matrix,
    h: Matrix,
    b: Matrix,
    c: Vector,
    d: Vector,
    gram: Cholesky<f64, Dyn>,
    set_x: ConvexSet,
    set_y: ConvexSet,
    feasible: ConvexSet,
    constraint_lipschitz: f64,
    seed: u64,
}

fn gaussian(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| StandardNormal.sample(rng))
}

impl StronglyConvex {
    /// Draws the data from a seeded normal generator, retrying with the next
    /// seed when a matrix comes out rank deficient.
    pub fn new(n: usize, seed: u64) -> Result<Self> {
        if n < 2 {
            return Err(Error::InvalidConfig(format!(
                "strongly convex benchmark needs n >= 2, got {n}"
            )));
        }
        let k = (n / 4).max(1);
        let mut last = None;
        for attempt in 0..MAX_ATTEMPTS {
            let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(attempt));
            let raw_a = gaussian(&mut rng, k, n);
            let b = gaussian(&mut rng, k, n);
            let h = gaussian(&mut rng, k, n);
            let c = Vector::from_fn(n, |_, _| StandardNormal.sample(&mut rng));
            let d = Vector::from_fn(n, |_, _| StandardNormal.sample(&mut rng));
            let qr = raw_a.transpose().qr();
            let r_diag = qr.r().diagonal().abs();
            if !(r_diag.min() > 1e-8 * r_diag.max()) {
                last = Some(Error::InvalidSet("generated A is rank deficient".into()));
                continue;
            }
            let a = qr.q().transpose();
            match Self::from_matrices(a, h, b, c, d) {
                Ok(mut p) => {
                    p.seed = seed;
                    return Ok(p);
                }
                Err(e) => last = Some(e),
            }
        }
        Err(last.unwrap_or_else(|| Error::InvalidSet("data generation failed".into())))
    }

    /// Builds the problem from explicit data (`A: k x n`, `H: k x n`, `B: q x n`).
    pub fn from_matrices(a: Matrix, h: Matrix, b: Matrix, c: Vector, d: Vector) -> Result<Self> {
        let n = a.ncols();
        let k = a.nrows();
        for (m, rows) in [(&h, k), (&b, b.nrows())] {
            if m.ncols() != n || m.nrows() != rows {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    actual: m.ncols(),
                });
            }
        }
        for v in [&c, &d] {
            if v.len() != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    actual: v.len(),
                });
            }
        }
        // Rank check on A; the Gram factor drives the solution map.
        AffineSubspace::new(a.clone(), Vector::zeros(k))?;
        let gram = Cholesky::new(&a * a.transpose())
            .ok_or_else(|| Error::InvalidSet("A is not of full row rank".into()))?;
        let set_x = ConvexSet::Affine(AffineSubspace::new(b.clone(), Vector::zeros(b.nrows()))?);

        // C = { (x, y) : B x = 0, H x + A y = 0 }.
        let q = b.nrows();
        let mut stacked = Matrix::zeros(q + k, 2 * n);
        stacked.view_mut((0, 0), (q, n)).copy_from(&b);
        stacked.view_mut((q, 0), (k, n)).copy_from(&h);
        stacked.view_mut((q, n), (k, n)).copy_from(&a);
        let feasible = ConvexSet::Affine(AffineSubspace::new(stacked, Vector::zeros(q + k))?);

        let mut signed = Matrix::zeros(2 * k, 2 * n);
        signed.view_mut((0, 0), (k, n)).copy_from(&h);
        signed.view_mut((0, n), (k, n)).copy_from(&a);
        signed.view_mut((k, 0), (k, n)).copy_from(&(-&h));
        signed.view_mut((k, n), (k, n)).copy_from(&(-&a));
        let constraint_lipschitz = signed.singular_values().max();

        Ok(Self {
            n,
            a,
            h,
            b,
            c,
            d,
            gram,
            set_x,
            set_y: ConvexSet::whole(n),
            feasible,
            constraint_lipschitz,
            seed: 0,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn a(&self) -> &Matrix {
        &self.a
    }

    pub fn h(&self) -> &Matrix {
        &self.h
    }

    pub fn b(&self) -> &Matrix {
        &self.b
    }

    /// `y*(x) = x - A'(AA')^{-1}(A x + H x)`.
    pub fn ll_solution(&self, x: &Vector) -> Vector {
        let mult = self.gram.solve(&(&self.a * x + &self.h * x));
        x - self.a.tr_mul(&mult)
    }

    /// The lower-level feasible set `{ y : A y = -H x }`.
    pub fn ll_feasible(&self, x: &Vector) -> Result<AffineSubspace> {
        AffineSubspace::new(self.a.clone(), -(&self.h * x))
    }

    pub fn hyperobjective(&self, x: &Vector) -> f64 {
        self.upper(x, &self.ll_solution(x))
    }

    pub fn moduli(&self) -> LipschitzModuli {
        LipschitzModuli {
            // |c|^2 + |d|^2 bounds the sine term, 4 the logarithm.
            upper_smooth: self.c.norm_squared() + self.d.norm_squared() + 4.0,
            lower_smooth: 2.0,
            constraint: self.constraint_lipschitz,
            constraint_grad_x: 0.0,
            constraint_grad_y: 0.0,
        }
    }
}

impl BilevelProblem for StronglyConvex {
    fn dim_x(&self) -> usize {
        self.n
    }
    fn dim_y(&self) -> usize {
        self.n
    }
    fn dim_g(&self) -> usize {
        2 * self.a.nrows()
    }

    fn upper(&self, x: &Vector, y: &Vector) -> f64 {
        (self.c.dot(x) + self.d.dot(y)).sin() + ((x + y).norm_squared() + 1.0).ln()
    }
    fn upper_grad(&self, x: &Vector, y: &Vector) -> (Vector, Vector) {
        let cs = (self.c.dot(x) + self.d.dot(y)).cos();
        let s = x + y;
        let log_part = &s * (2.0 / (s.norm_squared() + 1.0));
        (&self.c * cs + &log_part, &self.d * cs + log_part)
    }

    fn lower(&self, x: &Vector, y: &Vector) -> f64 {
        0.5 * (x - y).norm_squared()
    }
    fn lower_grad(&self, x: &Vector, y: &Vector) -> (Vector, Vector) {
        let diff = x - y;
        (diff.clone(), -diff)
    }

    fn constraints(&self, x: &Vector, y: &Vector) -> Vector {
        let r = &self.a * y + &self.h * x;
        let k = r.len();
        Vector::from_fn(2 * k, |i, _| if i < k { r[i] } else { -r[i - k] })
    }
    fn constraints_jac(&self, _x: &Vector, _y: &Vector) -> (Matrix, Matrix) {
        let k = self.a.nrows();
        let signed = |m: &Matrix| {
            let mut out = Matrix::zeros(2 * k, self.n);
            out.rows_mut(0, k).copy_from(m);
            out.rows_mut(k, k).copy_from(&(-m));
            out
        };
        (signed(&self.h), signed(&self.a))
    }
    fn constraints_vjp(&self, _x: &Vector, _y: &Vector, lambda: &Vector) -> (Vector, Vector) {
        let k = self.a.nrows();
        let mu = lambda.rows(0, k) - lambda.rows(k, k);
        (self.h.tr_mul(&mu), self.a.tr_mul(&mu))
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
        Some(-1.0)
    }
}
