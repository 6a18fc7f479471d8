// SPDX-License-Identifier: MIT OR Apache-2.0

//! Steering functions and the P / PI / PID steering laws.
//!
//! The discrete PID steering vector is
//!
//! ```text
//! u(k) = kp·ē(k) + ki·Σ_{j<k} ē(j) + kd·(ē(k) − ē(k−1)),   ē(−1) = 0
//! ```
//!
//! so the derivative term kicks at `k = 0`. Gains are scalar multiples of the
//! identity.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::linalg::{ensure_finite_vec, Vector};
use crate::plant::{average_error, ContrastivePlant};
use crate::trace::Trace;

/// Proportional, integral and derivative gains.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Gains {
    #[serde(default)]
    pub kp: f64,
    #[serde(default)]
    pub ki: f64,
    #[serde(default)]
    pub kd: f64,
}

impl Gains {
    pub fn new(kp: f64, ki: f64, kd: f64) -> Result<Self> {
        let g = Gains { kp, ki, kd };
        g.validate()?;
        Ok(g)
    }

    pub fn p(kp: f64) -> Result<Self> {
        Self::new(kp, 0.0, 0.0)
    }

    pub fn pi(kp: f64, ki: f64) -> Result<Self> {
        Self::new(kp, ki, 0.0)
    }

    pub fn pid(kp: f64, ki: f64, kd: f64) -> Result<Self> {
        Self::new(kp, ki, kd)
    }

    pub fn zero() -> Self {
        Gains { kp: 0.0, ki: 0.0, kd: 0.0 }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("kp", self.kp), ("ki", self.ki), ("kd", self.kd)] {
            if !v.is_finite() || v < 0.0 {
                return invalid(format!("gain {name} must be finite and non-negative, got {v}"));
            }
        }
        Ok(())
    }

    pub fn label(&self) -> &'static str {
        match (self.ki > 0.0, self.kd > 0.0) {
            (false, false) => "P",
            (true, false) => "PI",
            (false, true) => "PD",
            (true, true) => "PID",
        }
    }
}

/// Gains plus the controller's memory.
#[derive(Debug, Clone, PartialEq)]
pub struct ControllerState {
    pub gains: Gains,
    /// s(k) = Σ_{j<k} ē(j).
    pub integrator: Vector,
    /// ē(k−1); zero before the first step.
    pub prev_error: Vector,
    pub step: usize,
}

impl ControllerState {
    pub fn new(gains: Gains, dim: usize) -> Result<Self> {
        gains.validate()?;
        if dim == 0 {
            return invalid("controller dimension must be at least 1");
        }
        Ok(ControllerState { gains, integrator: Vector::zeros(dim), prev_error: Vector::zeros(dim), step: 0 })
    }

    pub fn dim(&self) -> usize {
        self.integrator.len()
    }

    /// Computes u(k) from ē(k) and returns it with the advanced state.
    pub fn control(&self, e: &Vector) -> Result<(Vector, ControllerState)> {
        ensure_finite_vec(e, "control")?;
        if e.len() != self.dim() {
            return invalid(format!("control: error has dim {} but controller has dim {}", e.len(), self.dim()));
        }
        let g = &self.gains;
        let u = e * g.kp + &self.integrator * g.ki + (e - &self.prev_error) * g.kd;
        let next =
            ControllerState { gains: *g, integrator: &self.integrator + e, prev_error: e.clone(), step: self.step + 1 };
        Ok((u, next))
    }

    /// In-place variant of [`ControllerState::control`].
    pub fn step(&mut self, e: &Vector) -> Result<Vector> {
        let (u, next) = self.control(e)?;
        *self = next;
        Ok(u)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SteerKind {
    Add,
    DirectionalAblation,
}

/// How a steering vector is applied to an activation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SteerFn {
    pub kind: SteerKind,
    #[serde(default = "unit_alpha")]
    pub alpha: f64,
}

fn unit_alpha() -> f64 {
    1.0
}

impl Default for SteerFn {
    fn default() -> Self {
        SteerFn::add(1.0)
    }
}

impl SteerFn {
    pub fn add(alpha: f64) -> Self {
        SteerFn { kind: SteerKind::Add, alpha }
    }

    pub fn ablation() -> Self {
        SteerFn { kind: SteerKind::DirectionalAblation, alpha: 1.0 }
    }
}

/// ρ_steer(x, u): `x + α·u` for addition, `x − û ûᵀ x` for ablation.
pub fn apply_steer(f: &SteerFn, x: &Vector, u: &Vector) -> Result<Vector> {
    if x.len() != u.len() {
        return invalid(format!("apply_steer: dims {} and {} differ", x.len(), u.len()));
    }
    match f.kind {
        SteerKind::Add => Ok(x + u * f.alpha),
        SteerKind::DirectionalAblation => {
            let norm = u.norm();
            if !(norm >= 1e-12) {
                return Err(Error::DegenerateDirection { norm });
            }
            let unit = u / norm;
            Ok(x - &unit * unit.dot(x))
        }
    }
}

/// Difference-in-means vectors r(k) = mean x⁺(k) − mean x⁻(k) of recorded,
/// unsteered trajectories indexed `[k][i]`.
pub fn steering_vectors_nonsequential(plus_traj: &[Vec<Vector>], minus_traj: &[Vec<Vector>]) -> Result<Vec<Vector>> {
    if plus_traj.len() != minus_traj.len() {
        return invalid(format!("trajectories have {} and {} layers", plus_traj.len(), minus_traj.len()));
    }
    if plus_traj.is_empty() {
        return invalid("trajectories are empty");
    }
    plus_traj.iter().zip(minus_traj).map(|(p, m)| average_error(p, m)).collect()
}

/// Feeds a history of r(k) through a fresh controller.
pub fn controls_from_history(gains: Gains, history: &[Vector]) -> Result<Vec<Vector>> {
    let Some(first) = history.first() else {
        return Ok(Vec::new());
    };
    let mut ctrl = ControllerState::new(gains, first.len())?;
    history.iter().map(|r| ctrl.step(r)).collect()
}

/// Closed-loop rollout: at each layer the controller reads r(k) from the
/// current (already steered) states, the steering function is applied to
/// every minus-branch state and both branches pass through layer `k`.
///
/// Returns r(0..=K) and the full trace; the trace's `jacobians` and
/// `disturbances` are the local model at each visited state.
pub fn steering_vectors_sequential(
    plant: &ContrastivePlant,
    gains: Gains,
    steer: &SteerFn,
) -> Result<(Vec<Vector>, Trace)> {
    let mut plus = plant.initial_plus().to_vec();
    let mut minus = plant.initial_minus().to_vec();
    let mut ctrl = ControllerState::new(gains, plant.dim())?;
    let e0 = average_error(&plus, &minus)?;
    let mut trace = Trace::start(gains, e0.clone());
    let mut history = vec![e0];

    for k in 0..plant.layer_count() {
        let r = history.last().expect("history is non-empty");
        let local = plant.local_model(&plus, &minus, k)?;
        let u = ctrl.step(r)?;
        let steered = minus.iter().map(|x| apply_steer(steer, x, &u)).collect::<Result<Vec<_>>>()?;
        plus = plant.apply_layer(k, &plus)?;
        minus = plant.apply_layer(k, &steered)?;
        let r_next = average_error(&plus, &minus)?;
        if !r_next.norm().is_finite() {
            return Err(Error::Divergence { step: k + 1 });
        }
        trace.push(u, local.mean_jacobian, local.disturbance, r_next.clone(), ctrl.integrator.clone());
        history.push(r_next);
    }
    Ok((history, trace))
}

/// The discretized P controller acting on the plant directly:
/// `u(k) = kp·ē(k)` added to the minus branch before layer `k`.
pub fn discretized_p_rollout(plant: &ContrastivePlant, kp: f64) -> Result<Trace> {
    let gains = Gains::p(kp)?;
    let mut plus = plant.initial_plus().to_vec();
    let mut minus = plant.initial_minus().to_vec();
    let e0 = average_error(&plus, &minus)?;
    let mut trace = Trace::start(gains, e0.clone());
    let mut sum = e0.clone();
    let mut e = e0;
    for k in 0..plant.layer_count() {
        let local = plant.local_model(&plus, &minus, k)?;
        let u = &e * kp;
        let (p, m) = plant.step_exact(&plus, &minus, &u, k)?;
        plus = p;
        minus = m;
        let next = average_error(&plus, &minus)?;
        if !next.norm().is_finite() {
            return Err(Error::Divergence { step: k + 1 });
        }
        trace.push(u, local.mean_jacobian, local.disturbance, next.clone(), sum.clone());
        sum += &next;
        e = next;
    }
    Ok(trace)
}
