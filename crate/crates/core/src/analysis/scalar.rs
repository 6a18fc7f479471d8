// SPDX-License-Identifier: MIT OR Apache-2.0

//! Scalarization of a trace along `v = ē(0)/‖ē(0)‖`.
//!
//! Projecting the lifted recursion onto `v` gives the scalar pair
//!
//! ```text
//! e_v(k+1) = a(k) e_v(k) − b(k) s_v(k) − c(k) Δe_v(k) + w⊥_v(k)
//! s_v(k+1) = s_v(k) + e_v(k) − d_v(k)
//! ```
//!
//! with `a = vᵀM_P v`, `b = vᵀG v`, `c = vᵀH v`. The first line is exact when
//! the error stays on the line spanned by `v`; in general it differs from
//! the projection by the cross terms `vᵀM_P(ē − e_v v)` and so on.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Vector;
use crate::trace::Trace;

use super::lifted::lift_trace;

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ScalarTrace {
    pub v: Vec<f64>,
    pub e_v: Vec<f64>,
    pub s_v: Vec<f64>,
    pub delta_e_v: Vec<f64>,
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    pub c: Vec<f64>,
    /// vᵀĀ(k)v.
    pub a_bar_v: Vec<f64>,
    pub w_v_perp: Vec<f64>,
    pub d_v: Vec<f64>,
}

pub fn scalarize(trace: &Trace) -> Result<ScalarTrace> {
    let e0 = &trace.errors[0];
    let norm = e0.norm();
    if !(norm >= 1e-12) {
        return Err(Error::DegenerateInitialError { norm });
    }
    let v: Vector = e0 / norm;
    let (states, split) = lift_trace(trace)?;
    let g = trace.gains;
    let a_bar_v: Vec<f64> = trace.jacobians.iter().map(|a| v.dot(&(a * &v))).collect();
    Ok(ScalarTrace {
        e_v: states.iter().map(|z| v.dot(&z.e)).collect(),
        s_v: states.iter().map(|z| v.dot(&z.s_tilde)).collect(),
        delta_e_v: states.iter().map(|z| v.dot(&z.delta_e)).collect(),
        a: a_bar_v.iter().map(|x| x * (1.0 - g.kp)).collect(),
        b: a_bar_v.iter().map(|x| x * g.ki).collect(),
        c: a_bar_v.iter().map(|x| x * g.kd).collect(),
        w_v_perp: split.w_perp.iter().map(|w| v.dot(w)).collect(),
        d_v: split.d.iter().map(|d| v.dot(d)).collect(),
        a_bar_v,
        v: v.iter().copied().collect(),
    })
}

impl ScalarTrace {
    pub fn steps(&self) -> usize {
        self.a.len()
    }

    /// e_v(k+1) from the scalar recursion at the recorded e_v(k), s_v(k), Δe_v(k).
    pub fn replay_e_v(&self) -> Vec<f64> {
        (0..self.steps())
            .map(|k| {
                self.a[k] * self.e_v[k] - self.b[k] * self.s_v[k] - self.c[k] * self.delta_e_v[k] + self.w_v_perp[k]
            })
            .collect()
    }

    /// s_v(k+1) from s_v(k) + e_v(k) − d_v(k).
    pub fn replay_s_v(&self) -> Vec<f64> {
        (0..self.steps()).map(|k| self.s_v[k] + self.e_v[k] - self.d_v[k]).collect()
    }

    pub fn d_inf(&self) -> f64 {
        self.d_v.iter().fold(0.0, |m, x| m.max(x.abs()))
    }

    pub fn w_inf(&self) -> f64 {
        self.w_v_perp.iter().fold(0.0, |m, x| m.max(x.abs()))
    }

    /// Whether vᵀĀ(k)v ≥ 0 at every step.
    pub fn projected_jacobian_nonnegative(&self) -> bool {
        self.a_bar_v.iter().all(|&x| x >= 0.0)
    }
}
