// SPDX-License-Identifier: MIT OR Apache-2.0

//! Deliberately naive reference implementations.
//!
//! Nothing here calls into [`crate::controllers`] or the analysis routines it
//! is used to check; the loops are written out by hand.

use crate::controllers::{Gains, SteerFn, SteerKind};
use crate::error::{invalid, Error, Result};
use crate::linalg::{Mat, Vector};
use crate::plant::{ContrastivePlant, LayerKind, LayerMap};
use crate::trace::Trace;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FdJacobianConfig {
    pub step: f64,
}

impl Default for FdJacobianConfig {
    fn default() -> Self {
        FdJacobianConfig { step: 1e-6 }
    }
}

fn eval_map(map: &LayerMap, x: &[f64]) -> Vec<f64> {
    let n = x.len();
    (0..n)
        .map(|i| {
            let mut z = map.bias[i];
            for (j, xj) in x.iter().enumerate() {
                z += map.weight[(i, j)] * xj;
            }
            match map.kind {
                LayerKind::Linear => z,
                LayerKind::TanhResidual => x[i] + map.scale * z.tanh(),
            }
        })
        .collect()
}

/// Central-difference Jacobian of a layer map.
pub fn fd_jacobian(map: &LayerMap, x: &Vector, cfg: &FdJacobianConfig) -> Result<Mat> {
    if !(cfg.step > 0.0) {
        return invalid("finite-difference step must be positive");
    }
    if x.len() != map.dim() {
        return invalid("fd_jacobian: dimension mismatch");
    }
    let n = x.len();
    let base: Vec<f64> = x.iter().copied().collect();
    let mut j = Mat::zeros(n, n);
    for col in 0..n {
        let mut up = base.clone();
        let mut dn = base.clone();
        up[col] += cfg.step;
        dn[col] -= cfg.step;
        let (fu, fd) = (eval_map(map, &up), eval_map(map, &dn));
        for row in 0..n {
            j[(row, col)] = (fu[row] - fd[row]) / (2.0 * cfg.step);
        }
    }
    Ok(j)
}

fn mean_diff(plus: &[Vec<f64>], minus: &[Vec<f64>]) -> Vec<f64> {
    let n = plus[0].len();
    let mut out = vec![0.0; n];
    for (p, m) in plus.iter().zip(minus) {
        for d in 0..n {
            out[d] += p[d] - m[d];
        }
    }
    let count = plus.len() as f64;
    out.iter().map(|x| x / count).collect()
}

/// Straight-line closed-loop rollout, matching
/// [`crate::controllers::steering_vectors_sequential`].
pub fn naive_rollout(plant: &ContrastivePlant, gains: Gains, steer: &SteerFn) -> Result<Trace> {
    let to_vec = |v: &Vector| v.iter().copied().collect::<Vec<f64>>();
    let mut plus: Vec<Vec<f64>> = plant.initial_plus().iter().map(to_vec).collect();
    let mut minus: Vec<Vec<f64>> = plant.initial_minus().iter().map(to_vec).collect();
    let n = plant.dim();

    let mut e = mean_diff(&plus, &minus);
    let mut trace = Trace::start(gains, Vector::from_vec(e.clone()));
    let mut sum = vec![0.0; n];
    let mut prev = vec![0.0; n];

    for k in 0..plant.layer_count() {
        let plus_v: Vec<Vector> = plus.iter().map(|x| Vector::from_vec(x.clone())).collect();
        let minus_v: Vec<Vector> = minus.iter().map(|x| Vector::from_vec(x.clone())).collect();
        let local = plant.local_model(&plus_v, &minus_v, k)?;

        let u: Vec<f64> = (0..n).map(|d| gains.kp * e[d] + gains.ki * sum[d] + gains.kd * (e[d] - prev[d])).collect();
        for d in 0..n {
            sum[d] += e[d];
        }
        prev = e.clone();

        let unorm = u.iter().map(|x| x * x).sum::<f64>().sqrt();
        for x in minus.iter_mut() {
            match steer.kind {
                SteerKind::Add => {
                    for d in 0..n {
                        x[d] += steer.alpha * u[d];
                    }
                }
                SteerKind::DirectionalAblation => {
                    if !(unorm >= 1e-12) {
                        return Err(Error::DegenerateDirection { norm: unorm });
                    }
                    let dot: f64 = (0..n).map(|d| x[d] * u[d]).sum::<f64>() / unorm;
                    for d in 0..n {
                        x[d] -= dot * u[d] / unorm;
                    }
                }
            }
        }
        let maps = &plant.layers()[k];
        plus = maps.iter().zip(&plus).map(|(f, x)| eval_map(f, x)).collect();
        minus = maps.iter().zip(&minus).map(|(f, x)| eval_map(f, x)).collect();
        e = mean_diff(&plus, &minus);
        if e.iter().any(|x| !x.is_finite()) {
            return Err(Error::Divergence { step: k + 1 });
        }
        trace.push(
            Vector::from_vec(u),
            local.mean_jacobian,
            local.disturbance,
            Vector::from_vec(e.clone()),
            Vector::from_vec(sum.clone()),
        );
    }
    Ok(trace)
}

/// Spectral radius of `[[q, −Mh], [1, 1]]` from the quadratic formula.
fn comparison_radius(q: f64, mh: f64) -> f64 {
    let tr = 1.0 + q;
    let det = q + mh;
    let disc = tr * tr - 4.0 * det;
    if disc >= 0.0 {
        let s = disc.sqrt();
        ((tr + s) / 2.0).abs().max(((tr - s) / 2.0).abs())
    } else {
        det.sqrt()
    }
}

/// Grid point with the smallest comparison-matrix radius.
pub fn grid_min_radius(q: f64, m_bound: f64, h_grid: &[f64]) -> Result<(f64, f64)> {
    if h_grid.is_empty() {
        return invalid("grid_min_radius: empty grid");
    }
    if !(m_bound > 0.0) || !(0.0..1.0).contains(&q) {
        return invalid("grid_min_radius: need 0 <= q < 1 and M > 0");
    }
    let upper = (1.0 - q) / m_bound;
    if h_grid.iter().any(|&h| !(h > 0.0 && h < upper)) {
        return invalid(format!("grid_min_radius: grid must lie inside (0, {upper})"));
    }
    let mut best = (h_grid[0], comparison_radius(q, m_bound * h_grid[0]));
    for &h in &h_grid[1..] {
        let r = comparison_radius(q, m_bound * h);
        if r < best.1 {
            best = (h, r);
        }
    }
    Ok(best)
}

/// Uniform grid `start, start + step, …` strictly below `end`.
pub fn uniform_grid(start: f64, end: f64, step: f64) -> Vec<f64> {
    let mut out = Vec::new();
    let mut i = 0u64;
    loop {
        let h = start + step * i as f64;
        if h >= end {
            break;
        }
        out.push(h);
        i += 1;
    }
    out
}
