use serde::{Deserialize, Serialize};

use crate::Vector;

/// Iterate `(x^k, y^k, z^k, theta^k, lambda^k)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterateState {
    pub x: Vector,
    pub y: Vector,
    pub z: Vector,
    pub theta: Vector,
    pub lambda: Vector,
    pub k: usize,
}

/// Borrowed outer point `(x, y, z)` at which the value function is evaluated.
#[derive(Debug, Clone, Copy)]
pub struct Anchor<'a> {
    pub x: &'a Vector,
    pub y: &'a Vector,
    pub z: &'a Vector,
}

impl<'a> Anchor<'a> {
    pub fn new(x: &'a Vector, y: &'a Vector, z: &'a Vector) -> Self {
        Self { x, y, z }
    }
}

impl IterateState {
    pub fn anchor(&self) -> Anchor<'_> {
        Anchor {
            x: &self.x,
            y: &self.y,
            z: &self.z,
        }
    }

    pub fn is_finite(&self) -> bool {
        [&self.x, &self.y, &self.z, &self.theta, &self.lambda]
            .iter()
            .all(|v| v.iter().all(|e| e.is_finite()))
    }
}
