// SPDX-License-Identifier: MIT OR Apache-2.0

//! Closed-loop block matrices and the lifted state.
//!
//! With `s*(k)` chosen so that `G(k)s*(k) = w∥(k)` and `s̃ = s − s*`, the PID
//! loop is the linear recursion
//!
//! ```text
//! ⎡ē ⎤       ⎡M_P    −G  −H⎤⎡ē ⎤   ⎡ w⊥⎤
//! ⎢s̃ ⎥     = ⎢I       I   0⎥⎢s̃ ⎥ + ⎢ −d⎥
//! ⎣Δē⎦(k+1)  ⎣M_P−I  −G  −H⎦⎣Δē⎦(k) ⎣ w⊥⎦
//! ```
//!
//! with `d(k) = s*(k+1) − s*(k)`.

use crate::controllers::Gains;
use crate::error::{invalid, Error, Result};
use crate::linalg::{ensure_finite, ensure_finite_vec, orthogonal_decompose, pinv, stack, Mat, Vector};
use crate::plant::ModelStep;
use crate::trace::Trace;

/// `M_P = Ā(1−kp)`, `G = Ā·ki`, `H = Ā·kd` and the lifted PI / PID matrices.
#[derive(Debug, Clone, PartialEq)]
pub struct LiftedMatrices {
    pub m_p: Mat,
    pub g: Mat,
    pub h: Mat,
    /// `[[M_P, −G], [I, I]]`.
    pub m_i: Mat,
    /// `[[M_P, −G, −H], [I, I, 0], [M_P − I, −G, −H]]`.
    pub m_d: Mat,
}

pub fn lifted_matrices(a_bar: &Mat, gains: &Gains) -> Result<LiftedMatrices> {
    ensure_finite(a_bar, "lifted_matrices")?;
    if !a_bar.is_square() {
        return invalid("lifted_matrices: Ā must be square");
    }
    gains.validate()?;
    let n = a_bar.nrows();
    let id = Mat::identity(n, n);
    let m_p = a_bar * (1.0 - gains.kp);
    let g = a_bar * gains.ki;
    let h = a_bar * gains.kd;

    let mut m_i = Mat::zeros(2 * n, 2 * n);
    m_i.view_mut((0, 0), (n, n)).copy_from(&m_p);
    m_i.view_mut((0, n), (n, n)).copy_from(&(-&g));
    m_i.view_mut((n, 0), (n, n)).copy_from(&id);
    m_i.view_mut((n, n), (n, n)).copy_from(&id);

    let mut m_d = Mat::zeros(3 * n, 3 * n);
    m_d.view_mut((0, 0), (n, n)).copy_from(&m_p);
    m_d.view_mut((0, n), (n, n)).copy_from(&(-&g));
    m_d.view_mut((0, 2 * n), (n, n)).copy_from(&(-&h));
    m_d.view_mut((n, 0), (n, n)).copy_from(&id);
    m_d.view_mut((n, n), (n, n)).copy_from(&id);
    m_d.view_mut((2 * n, 0), (n, n)).copy_from(&(&m_p - &id));
    m_d.view_mut((2 * n, n), (n, n)).copy_from(&(-&g));
    m_d.view_mut((2 * n, 2 * n), (n, n)).copy_from(&(-&h));

    Ok(LiftedMatrices { m_p, g, h, m_i, m_d })
}

/// Matched / unmatched split of the disturbance along a trajectory.
///
/// `w_par`, `w_perp`, `s_star` and `d` each hold one entry per transition.
/// The last increment uses `s*(K) := s*(K−1)`. With `ki = 0` nothing can be
/// cancelled, so the whole disturbance counts as unmatched and `s* = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct MatchedSplit {
    pub w_par: Vec<Vector>,
    pub w_perp: Vec<Vector>,
    pub s_star: Vec<Vector>,
    pub d: Vec<Vector>,
}

impl MatchedSplit {
    /// s*(k) with the end convention `s*(K) = s*(K−1)`; zero for empty splits.
    pub fn s_star_at(&self, k: usize, dim: usize) -> Vector {
        match self.s_star.get(k).or(self.s_star.last()) {
            Some(s) => s.clone(),
            None => Vector::zeros(dim),
        }
    }
}

pub fn matched_split(traj: &[ModelStep], ki: f64) -> Result<MatchedSplit> {
    let mut w_par = Vec::with_capacity(traj.len());
    let mut w_perp = Vec::with_capacity(traj.len());
    let mut s_star = Vec::with_capacity(traj.len());
    for step in traj {
        ensure_finite_vec(&step.w, "matched_split")?;
        let n = step.w.len();
        if ki > 0.0 {
            let (par, perp) = orthogonal_decompose(&step.w, &step.a_bar)?;
            s_star.push(pinv(&step.a_bar)? * &par / ki);
            w_par.push(par);
            w_perp.push(perp);
        } else {
            w_par.push(Vector::zeros(n));
            w_perp.push(step.w.clone());
            s_star.push(Vector::zeros(n));
        }
    }
    let d = (0..s_star.len())
        .map(|k| match s_star.get(k + 1) {
            Some(next) => next - &s_star[k],
            None => Vector::zeros(s_star[k].len()),
        })
        .collect();
    Ok(MatchedSplit { w_par, w_perp, s_star, d })
}

/// One lifted state `(ē, s̃, Δē)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LiftedState {
    pub e: Vector,
    pub s_tilde: Vector,
    pub delta_e: Vector,
}

impl LiftedState {
    pub fn stacked(&self) -> Vector {
        stack(&[&self.e, &self.s_tilde, &self.delta_e])
    }

    /// `(ē, s̃)`.
    pub fn pi_part(&self) -> Vector {
        stack(&[&self.e, &self.s_tilde])
    }

    pub fn from_stacked(z: &Vector, n: usize) -> Self {
        LiftedState {
            e: z.rows(0, n).into_owned(),
            s_tilde: z.rows(n, n).into_owned(),
            delta_e: z.rows(2 * n, n).into_owned(),
        }
    }
}

fn trajectory_of(trace: &Trace) -> Vec<ModelStep> {
    trace.jacobians.iter().zip(&trace.disturbances).map(|(a, w)| ModelStep { a_bar: a.clone(), w: w.clone() }).collect()
}

/// Lifted states of a recorded trace, with its matched split.
pub fn lift_trace(trace: &Trace) -> Result<(Vec<LiftedState>, MatchedSplit)> {
    let split = matched_split(&trajectory_of(trace), trace.gains.ki)?;
    let n = trace.dim();
    let states = (0..trace.errors.len())
        .map(|k| LiftedState {
            e: trace.errors[k].clone(),
            s_tilde: &trace.integrators[k] - split.s_star_at(k, n),
            delta_e: trace.increments[k].clone(),
        })
        .collect();
    Ok((states, split))
}

/// Iterates the lifted PID recursion from `ζ(0) = (ē(0), −s*(0), ē(0))`.
pub fn simulate_lifted_pid(traj: &[ModelStep], gains: &Gains, e0: &Vector) -> Result<Vec<LiftedState>> {
    ensure_finite_vec(e0, "simulate_lifted_pid")?;
    let n = e0.len();
    let split = matched_split(traj, gains.ki)?;
    let mut z = LiftedState { e: e0.clone(), s_tilde: -split.s_star_at(0, n), delta_e: e0.clone() }.stacked();
    let mut out = vec![LiftedState::from_stacked(&z, n)];
    for (k, step) in traj.iter().enumerate() {
        if step.a_bar.nrows() != n {
            return invalid(format!("trajectory step {k} has mismatched dimensions"));
        }
        let lm = lifted_matrices(&step.a_bar, gains)?;
        let forcing = stack(&[&split.w_perp[k], &(-&split.d[k]), &split.w_perp[k]]);
        z = &lm.m_d * &z + forcing;
        if !z.iter().all(|x| x.is_finite()) {
            return Err(Error::Divergence { step: k + 1 });
        }
        out.push(LiftedState::from_stacked(&z, n));
    }
    Ok(out)
}
