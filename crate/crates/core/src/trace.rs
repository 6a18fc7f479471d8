// SPDX-License-Identifier: MIT OR Apache-2.0

//! Per-step records of a closed-loop run.

use crate::controllers::Gains;
use crate::linalg::{Mat, Vector};

/// Record of a run over `K` layers.
///
/// Index `k` of `errors`, `integrators` and `increments` refers to the state
/// entering layer `k` (so they hold `K + 1` entries); `controls`,
/// `jacobians` and `disturbances` belong to the transition `k → k+1` and hold
/// `K` entries.
#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    pub gains: Gains,
    /// ē(k).
    pub errors: Vec<Vector>,
    /// u(k).
    pub controls: Vec<Vector>,
    /// s(k) = Σ_{j<k} ē(j).
    pub integrators: Vec<Vector>,
    /// Δē(k) = ē(k) − ē(k−1), with ē(−1) = 0.
    pub increments: Vec<Vector>,
    /// Ā(k).
    pub jacobians: Vec<Mat>,
    /// w(k).
    pub disturbances: Vec<Vector>,
}

impl Trace {
    pub(crate) fn start(gains: Gains, e0: Vector) -> Self {
        let dim = e0.len();
        Trace {
            gains,
            increments: vec![e0.clone()],
            errors: vec![e0],
            controls: Vec::new(),
            integrators: vec![Vector::zeros(dim)],
            jacobians: Vec::new(),
            disturbances: Vec::new(),
        }
    }

    /// Appends one transition. `next_integrator` is s(k+1).
    pub(crate) fn push(&mut self, u: Vector, a_bar: Mat, w: Vector, next_error: Vector, next_integrator: Vector) {
        let prev = self.errors.last().expect("trace always holds ē(0)");
        self.increments.push(&next_error - prev);
        self.controls.push(u);
        self.jacobians.push(a_bar);
        self.disturbances.push(w);
        self.errors.push(next_error);
        self.integrators.push(next_integrator);
    }

    /// Number of transitions `K`.
    pub fn steps(&self) -> usize {
        self.controls.len()
    }

    pub fn dim(&self) -> usize {
        self.errors[0].len()
    }

    pub fn error_norms(&self) -> Vec<f64> {
        self.errors.iter().map(|e| e.norm()).collect()
    }

    /// ⟨ē(0), ē(k)⟩ for every k.
    pub fn inner_with_initial(&self) -> Vec<f64> {
        let e0 = &self.errors[0];
        self.errors.iter().map(|e| e0.dot(e)).collect()
    }

    /// First k with ‖ē(k)‖ < `tol`.
    pub fn convergence_step(&self, tol: f64) -> Option<usize> {
        self.errors.iter().position(|e| e.norm() < tol)
    }

    /// Largest absolute entry-wise difference of the error sequences.
    pub fn max_error_diff(&self, other: &Trace) -> f64 {
        if self.errors.len() != other.errors.len() {
            return f64::INFINITY;
        }
        self.errors
            .iter()
            .zip(&other.errors)
            .map(|(a, b)| if a.len() == b.len() { (a - b).amax() } else { f64::INFINITY })
            .fold(0.0, f64::max)
    }

    /// Largest absolute difference over errors, controls and integrators.
    pub fn max_diff(&self, other: &Trace) -> f64 {
        fn seq(a: &[Vector], b: &[Vector]) -> f64 {
            if a.len() != b.len() {
                return f64::INFINITY;
            }
            a.iter()
                .zip(b)
                .map(|(x, y)| if x.len() == y.len() { (x - y).amax() } else { f64::INFINITY })
                .fold(0.0, f64::max)
        }
        seq(&self.errors, &other.errors)
            .max(seq(&self.controls, &other.controls))
            .max(seq(&self.integrators, &other.integrators))
    }
}
