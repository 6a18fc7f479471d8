// SPDX-License-Identifier: MIT OR Apache-2.0

//! P and PI certificates.

use serde::{Deserialize, Serialize};

use crate::controllers::Gains;
use crate::error::{invalid, Error, Result};
use crate::linalg::{gelfand_constant, solve, spectral_radius, Mat, Vector};

use super::lifted::lifted_matrices;

/// Horizon used when scanning `‖Hᵏ‖ρ⁻ᵏ` for the envelope constant.
pub const GELFAND_HORIZON: usize = 500;

fn check_nonneg(name: &str, x: f64) -> Result<()> {
    if x.is_finite() && x >= 0.0 {
        Ok(())
    } else {
        invalid(format!("{name} must be finite and non-negative, got {x}"))
    }
}

/// `qᵏ·e0 + (1 − qᵏ)/(1 − q)·w_inf`.
pub fn p_envelope(q: f64, w_inf: f64, e0_norm: f64, k: usize) -> Result<f64> {
    check_nonneg("q", q)?;
    check_nonneg("w_inf", w_inf)?;
    check_nonneg("e0_norm", e0_norm)?;
    if q >= 1.0 {
        return Err(Error::Unstable { radius: q });
    }
    let qk = q.powi(k.min(i32::MAX as usize) as i32);
    Ok(qk * e0_norm + (1.0 - qk) / (1.0 - q) * w_inf)
}

/// Fixed point `(I − Ā(1 − kp))⁻¹ w` of the P loop under constant disturbance.
pub fn steady_state_error(a_bar: &Mat, kp: f64, w: &Vector) -> Result<Vector> {
    check_nonneg("kp", kp)?;
    if a_bar.nrows() != w.len() {
        return invalid("steady_state_error: dimension mismatch");
    }
    let m_p = a_bar * (1.0 - kp);
    let radius = spectral_radius(&m_p)?;
    if radius >= 1.0 {
        return Err(Error::Unstable { radius });
    }
    let n = a_bar.nrows();
    solve(&(Mat::identity(n, n) - m_p), w)
}

/// The 2×2 PI comparison matrix `[[q, −M·h], [1, 1]]`.
///
/// Its characteristic polynomial is `λ² − (1+q)λ + (q + Mh)`, the loop
/// matrix of a scalar PI mode with contraction `q` and integral weight `Mh`.
pub fn pi_comparison_matrix(q: f64, m_bound: f64, h: f64) -> Result<Mat> {
    check_nonneg("q", q)?;
    check_nonneg("m_bound", m_bound)?;
    check_nonneg("h", h)?;
    Ok(Mat::from_row_slice(2, 2, &[q, -m_bound * h, 1.0, 1.0]))
}

/// Bundle deciding PI input-to-state stability and its convergence rate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityCertificate {
    pub m_bound: f64,
    pub q: f64,
    pub h: f64,
    pub ell: f64,
    /// Spectral radius of the comparison matrix.
    pub radius: Option<f64>,
    pub rho: Option<f64>,
    pub c_const: Option<f64>,
    pub iss: bool,
}

impl StabilityCertificate {
    /// `q + M·h`.
    pub fn margin_sum(&self) -> f64 {
        self.q + self.m_bound * self.h
    }

    pub fn with_ell(mut self, ell: f64) -> Self {
        self.ell = ell;
        self
    }

    /// `C ρᵏ ζ0 + C/(1−ρ) · v_inf`, or `None` when not certified.
    pub fn envelope(&self, zeta0_norm: f64, v_inf: f64, k: usize) -> Option<f64> {
        let (rho, c) = (self.rho?, self.c_const?);
        Some(c * rho.powi(k as i32) * zeta0_norm + c / (1.0 - rho) * v_inf)
    }
}

/// PI certificate: `iss ⇔ q + M·h < 1` with a positive integral weight.
///
/// When certified, `ρ` is the midpoint between the comparison-matrix radius
/// and 1, and `C = max{1, max_{k ≤ 500} ‖Hᵏ‖ρ⁻ᵏ}`.
pub fn certify_pi(m_bound: f64, q: f64, h: f64) -> Result<StabilityCertificate> {
    let hmat = pi_comparison_matrix(q, m_bound, h)?;
    let iss = q + m_bound * h < 1.0 && m_bound * h > 0.0;
    let mut cert = StabilityCertificate { m_bound, q, h, ell: 0.0, radius: None, rho: None, c_const: None, iss };
    let r = spectral_radius(&hmat)?;
    cert.radius = Some(r);
    if iss {
        let rho = (r + 1.0) / 2.0;
        cert.rho = Some(rho);
        cert.c_const = Some(gelfand_constant(&hmat, rho, GELFAND_HORIZON)?);
    }
    Ok(cert)
}

/// `h* = (1 − q)² / (4M)`, where the comparison matrix has a double root.
pub fn optimal_integral_gain(q: f64, m_bound: f64) -> Result<f64> {
    check_nonneg("q", q)?;
    if q >= 1.0 {
        return Err(Error::Unstable { radius: q });
    }
    if !(m_bound > 0.0) || !m_bound.is_finite() {
        return invalid(format!("m_bound must be positive, got {m_bound}"));
    }
    Ok((1.0 - q).powi(2) / (4.0 * m_bound))
}

/// Exact spectral radius of the lifted PI matrix `M_I` for a constant Ā.
pub fn pi_loop_radius(a_bar: &Mat, gains: &Gains) -> Result<f64> {
    spectral_radius(&lifted_matrices(a_bar, gains)?.m_i)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::spectral_norm;
    use approx::assert_abs_diff_eq;

    #[test]
    fn envelope_examples() {
        assert_abs_diff_eq!(p_envelope(0.5, 0.0, 1.0, 3).unwrap(), 0.125, epsilon = 1e-15);
        assert_abs_diff_eq!(p_envelope(0.25, 0.1, 1.0, 10_000).unwrap(), 2.0 / 15.0, epsilon = 1e-15);
        for k in 1..10 {
            assert_abs_diff_eq!(p_envelope(0.0, 0.3, 5.0, k).unwrap(), 0.3, epsilon = 1e-15);
        }
        assert!(matches!(p_envelope(1.0, 0.0, 1.0, 1), Err(Error::Unstable { .. })));
    }

    #[test]
    fn steady_state_examples() {
        let a = Mat::from_element(1, 1, 0.5);
        assert_eq!(steady_state_error(&a, 0.5, &Vector::zeros(1)).unwrap(), Vector::zeros(1));
        let x = steady_state_error(&a, 0.5, &Vector::from_element(1, 0.1)).unwrap();
        let mut e = 1.0;
        for _ in 0..500 {
            e = 0.5 * (e - 0.5 * e) + 0.1;
        }
        assert!(((x[0] - e) / e).abs() <= 1e-6);
        let a2 = Mat::from_row_slice(2, 2, &[0.3, 0.7, -0.2, 0.9]);
        let w = Vector::from_vec(vec![0.4, -1.0]);
        assert_abs_diff_eq!(steady_state_error(&a2, 1.0, &w).unwrap(), w, epsilon = 1e-15);
    }

    #[test]
    fn comparison_matrix_radius() {
        let h = pi_comparison_matrix(0.0, 1.0, 0.0).unwrap();
        assert_abs_diff_eq!(spectral_radius(&h).unwrap(), 1.0, epsilon = 1e-14);
        let h = pi_comparison_matrix(0.3, 1.0, 0.2).unwrap();
        assert_abs_diff_eq!(spectral_radius(&h).unwrap(), 0.5f64.sqrt(), epsilon = 1e-12);
    }

    #[test]
    fn comparison_matrix_grid() {
        for i in 0..50 {
            for j in 1..50 {
                let q = i as f64 / 50.0;
                let mh = j as f64 / 50.0;
                if q + mh < 1.0 {
                    let h = pi_comparison_matrix(q, 1.0, mh).unwrap();
                    assert!(spectral_radius(&h).unwrap() < 1.0, "q={q} mh={mh}");
                }
            }
        }
    }

    #[test]
    fn certify_pi_examples() {
        assert!(!certify_pi(1.0, 0.9, 0.2).unwrap().iss);
        let c = certify_pi(2.0, 0.5, 0.1).unwrap();
        assert!(c.iss);
        let rho = c.rho.unwrap();
        assert!(rho < 1.0 && rho > c.radius.unwrap());
        let hmat = pi_comparison_matrix(0.5, 2.0, 0.1).unwrap();
        let mut p = Mat::identity(2, 2);
        for k in 0..=200 {
            assert!(spectral_norm(&p).unwrap() <= c.c_const.unwrap() * rho.powi(k) * (1.0 + 1e-12));
            p = &p * &hmat;
        }
        assert!(!certify_pi(2.0, 0.5, 0.0).unwrap().iss);
    }

    #[test]
    fn optimal_gain_examples() {
        assert_abs_diff_eq!(optimal_integral_gain(0.5, 2.0).unwrap(), 0.03125, epsilon = 1e-15);
        assert_abs_diff_eq!(optimal_integral_gain(0.0, 3.0).unwrap(), 1.0 / 12.0, epsilon = 1e-15);
        let (q, m) = (0.35, 1.7);
        let h = optimal_integral_gain(q, m).unwrap();
        assert_abs_diff_eq!((q - 1.0).powi(2) - 4.0 * m * h, 0.0, epsilon = 1e-15);
        let r = spectral_radius(&pi_comparison_matrix(q, m, h).unwrap()).unwrap();
        assert_abs_diff_eq!(r, (1.0 + q) / 2.0, epsilon = 1e-6);
        assert_abs_diff_eq!((q + m * h).sqrt(), (1.0 + q) / 2.0, epsilon = 1e-15);
    }
}
