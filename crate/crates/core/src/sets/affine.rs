use nalgebra::{Cholesky, Dyn};

use crate::{Error, Matrix, Result, Vector};

/// `{ w : M w = c }` with a cached Cholesky factor of `M M'`.
#[derive(Debug, Clone)]
pub struct AffineSubspace {
    matrix: Matrix,
    rhs: Vector,
    gram: Cholesky<f64, Dyn>,
}

impl AffineSubspace {
    pub fn new(matrix: Matrix, rhs: Vector) -> Result<Self> {
        if matrix.nrows() != rhs.len() {
            return Err(Error::DimensionMismatch {
                expected: matrix.nrows(),
                actual: rhs.len(),
            });
        }
        if matrix.nrows() == 0 {
            return Err(Error::InvalidSet(
                "affine subspace needs at least one row".into(),
            ));
        }
        let gram = &matrix * matrix.transpose();
        let chol = Cholesky::new(gram)
            .ok_or_else(|| Error::InvalidSet("constraint matrix is not of full row rank".into()))?;
        let diag = chol.l_dirty().diagonal();
        let (lo, hi) = diag.iter().fold((f64::INFINITY, 0.0_f64), |(lo, hi), v| {
            (lo.min(v.abs()), hi.max(v.abs()))
        });
        if !(lo > 1e-7 * hi) {
            return Err(Error::InvalidSet(
                "constraint matrix is numerically rank deficient".into(),
            ));
        }
        Ok(Self {
            matrix,
            rhs,
            gram: chol,
        })
    }

    pub fn dim(&self) -> usize {
        self.matrix.ncols()
    }

    pub fn matrix(&self) -> &Matrix {
        &self.matrix
    }

    pub fn rhs(&self) -> &Vector {
        &self.rhs
    }

    /// `M w - c`.
    pub fn residual(&self, w: &Vector) -> Vector {
        &self.matrix * w - &self.rhs
    }

    pub fn project(&self, w: &Vector) -> Vector {
        let mult = self.gram.solve(&self.residual(w));
        w - self.matrix.tr_mul(&mult)
    }

    /// `(I - M'(MM')^{-1} M) d`.
    pub fn null_space_component(&self, d: &Vector) -> Vector {
        let mult = self.gram.solve(&(&self.matrix * d));
        d - self.matrix.tr_mul(&mult)
    }
}
