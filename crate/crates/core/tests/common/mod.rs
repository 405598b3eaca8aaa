#![allow(dead_code)]

use lvhba::{ConvexSet, Matrix, Vector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub fn gaussian(rng: &mut ChaCha8Rng, n: usize) -> Vector {
    Vector::from_fn(n, |_, _| StandardNormal.sample(rng))
}

/// Projection onto `{ w : a_i'w <= b_i }` by enumerating active sets: every
/// subset with a nonsingular Gram matrix yields a candidate, and the nearest
/// feasible candidate is the projection.
pub fn brute_force_polyhedron_projection(a: &[Vector], b: &[f64], w: &Vector) -> Vector {
    let m = a.len();
    let feasible = |v: &Vector| a.iter().zip(b).all(|(ai, bi)| ai.dot(v) <= bi + 1e-9);
    let mut best: Option<(f64, Vector)> = None;
    for mask in 0u32..(1 << m) {
        let idx: Vec<usize> = (0..m).filter(|i| mask & (1 << i) != 0).collect();
        if idx.len() > w.len() {
            continue;
        }
        let candidate = if idx.is_empty() {
            w.clone()
        } else {
            let rows = Matrix::from_fn(idx.len(), w.len(), |r, c| a[idx[r]][c]);
            let rhs = Vector::from_fn(idx.len(), |r, _| b[idx[r]]);
            let gram = &rows * rows.transpose();
            let Some(chol) = gram.clone().cholesky() else {
                continue;
            };
            if gram.determinant().abs() < 1e-12 {
                continue;
            }
            let mult = chol.solve(&(&rows * w - rhs));
            w - rows.tr_mul(&mult)
        };
        if feasible(&candidate) {
            let d = (&candidate - w).norm();
            if best.as_ref().is_none_or(|(bd, _)| d < *bd) {
                best = Some((d, candidate));
            }
        }
    }
    best.expect("the polyhedron contains the origin").1
}

/// Random polyhedron containing the origin: `count` halfspaces `a'w <= b`
/// with `b > 0`.
pub fn random_polyhedron(
    rng: &mut ChaCha8Rng,
    dim: usize,
    count: usize,
) -> (Vec<Vector>, Vec<f64>) {
    let a: Vec<Vector> = (0..count).map(|_| gaussian(rng, dim)).collect();
    let b: Vec<f64> = (0..count).map(|_| rng.random_range(0.1..2.0)).collect();
    (a, b)
}

pub fn halfspaces(a: &[Vector], b: &[f64]) -> Vec<ConvexSet> {
    a.iter()
        .zip(b)
        .map(|(ai, bi)| ConvexSet::halfspace(ai.clone(), *bi).unwrap())
        .collect()
}
