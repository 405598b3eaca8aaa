use super::ConvexSet;
use crate::{Error, Result, Vector};

/// Dykstra's alternating projections onto `members[0] ∩ ... ∩ members[n-1]`.
///
/// Stops once a full sweep moves the iterate by at most `tol`.
pub(super) fn project(
    members: &[ConvexSet],
    w: &Vector,
    max_iters: usize,
    tol: f64,
) -> Result<Vector> {
    let mut x = w.clone();
    let mut increments: Vec<Vector> = vec![Vector::zeros(w.len()); members.len()];
    let mut change = f64::INFINITY;
    for _ in 0..max_iters {
        let start = x.clone();
        for (set, inc) in members.iter().zip(increments.iter_mut()) {
            let shifted = &x + &*inc;
            let y = set.project(&shifted)?;
            *inc = shifted - &y;
            x = y;
        }
        change = (&x - &start).norm();
        if change <= tol {
            return Ok(x);
        }
    }
    Err(Error::DykstraNotConverged {
        iterations: max_iters,
        change,
    })
}
