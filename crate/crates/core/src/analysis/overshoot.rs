// SPDX-License-Identifier: MIT OR Apache-2.0

//! Directional overshoot: intervals where `e_v` is negative after starting
//! positive.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

use super::certificates::StabilityCertificate;
use super::scalar::ScalarTrace;

/// Safety factor applied to the largest observed pre-peak decay ratio.
pub const R_SMOOTH_SAFETY: f64 = 1.1;

/// A maximal run of negative `e_v` values.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OvershootEvent {
    pub start: usize,
    pub length: usize,
    pub amplitude: f64,
    /// False when the trace ends while still negative.
    pub closed: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FirstOvershoot {
    /// First sign change.
    pub t0: usize,
    /// First return to a non-negative value (one past the end if none).
    pub t1: usize,
    pub i_max: usize,
    pub a0: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct OvershootReport {
    pub events: Vec<OvershootEvent>,
    pub first: Option<FirstOvershoot>,
}

/// Scans a scalar error sequence for overshoot events.
///
/// A run of negative values starting at index 0 has no preceding
/// non-negative sample and is not an overshoot.
pub fn detect_overshoots(e_v: &[f64]) -> OvershootReport {
    let mut events = Vec::new();
    let mut first = None;
    let mut k = 0;
    while k < e_v.len() {
        if e_v[k] < 0.0 && k > 0 {
            let start = k;
            let mut i_max = k;
            while k < e_v.len() && e_v[k] < 0.0 {
                if -e_v[k] > -e_v[i_max] {
                    i_max = k;
                }
                k += 1;
            }
            let ev = OvershootEvent { start, length: k - start, amplitude: -e_v[i_max], closed: k < e_v.len() };
            if first.is_none() {
                first = Some(FirstOvershoot { t0: start, t1: k, i_max, a0: ev.amplitude });
            }
            events.push(ev);
        } else if e_v[k] < 0.0 {
            while k < e_v.len() && e_v[k] < 0.0 {
                k += 1;
            }
        } else {
            k += 1;
        }
    }
    OvershootReport { events, first }
}

impl ScalarTrace {
    pub fn overshoots(&self) -> OvershootReport {
        detect_overshoots(&self.e_v)
    }
}

/// Upper bound on the first-overshoot amplitude of a PI loop:
///
/// ```text
/// Mh(1/(1−q) + 1/(1−q)²)·e_v0 + (Mh/(1−q)·(t0−1) + Mh/(1−q))·d_inf
///   + (Mh(t0−1) + 1)/(1−q)·w_inf
/// ```
///
/// `t0 − 1` is clamped at zero.
pub fn first_overshoot_bound(cert: &StabilityCertificate, e_v0: f64, t0: usize, d_inf: f64, w_inf: f64) -> Result<f64> {
    let q = cert.q;
    if q >= 1.0 {
        return Err(Error::Unstable { radius: q });
    }
    if !(cert.margin_sum() < 1.0) {
        return Err(Error::InvalidCertificate(format!("q + Mh = {} is not below 1", cert.margin_sum())));
    }
    for (name, x) in [("e_v0", e_v0), ("d_inf", d_inf), ("w_inf", w_inf)] {
        if !(x >= 0.0) || !x.is_finite() {
            return invalid(format!("{name} must be finite and non-negative, got {x}"));
        }
    }
    let mh = cert.m_bound * cert.h;
    let one_q = 1.0 - q;
    let tm1 = t0.saturating_sub(1) as f64;
    Ok(mh * (1.0 / one_q + 1.0 / (one_q * one_q)) * e_v0
        + (mh / one_q * tm1 + mh / one_q) * d_inf
        + (mh * tm1 + 1.0) / one_q * w_inf)
}

/// Largest derivative gain keeping the pre-peak PID trace monotone:
/// `ℓ_max = (1 − q)/((R − 1)·M)`, unbounded when `R = 1`.
///
/// The guarantee assumes the derivative term starts from `ē(−1) = ē(0)`.
/// With the default `ē(−1) = 0` the first control carries `kd·ē(0)`, and at
/// `ℓ` near `ℓ_max` the trace can rebound at step 2.
pub fn derivative_gain_threshold(q: f64, m_bound: f64, r_smooth: f64) -> Result<f64> {
    if !(r_smooth >= 1.0) {
        return invalid(format!("r_smooth must be at least 1, got {r_smooth}"));
    }
    if q >= 1.0 {
        return Err(Error::Unstable { radius: q });
    }
    if !(m_bound > 0.0) {
        return invalid(format!("m_bound must be positive, got {m_bound}"));
    }
    if r_smooth == 1.0 {
        return Ok(f64::INFINITY);
    }
    Ok((1.0 - q) / ((r_smooth - 1.0) * m_bound))
}

/// Conservative smoothness ratio from a PI trace: 1.1 times the largest
/// `e_v(k−1)/e_v(k)` over `k ∈ [1, i_max − 1]` with `e_v(k) > 0`.
///
/// Without an overshoot the whole trace is used.
pub fn estimate_r_smooth(pi_trace: &ScalarTrace) -> Result<f64> {
    let e = &pi_trace.e_v;
    let i_max = detect_overshoots(e).first.map_or(e.len(), |f| f.i_max);
    if i_max < 2 {
        return Err(Error::InsufficientTrace(format!("i_max = {i_max} leaves no pre-peak ratios")));
    }
    let ratio = (1..i_max)
        .filter(|&k| e[k] > 0.0)
        .map(|k| e[k - 1] / e[k])
        .fold(None, |m: Option<f64>, r| Some(m.map_or(r, |m| m.max(r))));
    match ratio {
        Some(r) => Ok(R_SMOOTH_SAFETY * r),
        None => Err(Error::InsufficientTrace("no positive samples before the peak".into())),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OvershootComparison {
    pub a0_pi: Option<f64>,
    pub a0_pid: Option<f64>,
    pub reduced: bool,
    pub precondition_met: bool,
}

/// Whether `e_v` is non-increasing on `[0, i_max]`, with `i_max` the PID
/// trace's own first peak (or its end).
fn monotone_before_peak(e: &[f64]) -> bool {
    let end = detect_overshoots(e).first.map_or(e.len().saturating_sub(1), |f| f.i_max);
    (0..end).all(|k| e[k + 1] <= e[k] + 1e-12)
}

/// First-overshoot amplitudes of a PI and a PID run on the same realization.
/// A run without an overshoot counts as amplitude 0 for `reduced`.
pub fn compare_first_overshoot(pi_trace: &ScalarTrace, pid_trace: &ScalarTrace) -> OvershootComparison {
    let a0_pi = pi_trace.overshoots().first.map(|f| f.a0);
    let a0_pid = pid_trace.overshoots().first.map(|f| f.a0);
    OvershootComparison {
        a0_pi,
        a0_pid,
        reduced: a0_pid.unwrap_or(0.0) <= a0_pi.unwrap_or(0.0) + 1e-12,
        precondition_met: monotone_before_peak(&pid_trace.e_v),
    }
}
