// SPDX-License-Identifier: MIT OR Apache-2.0

//! Lyapunov certificate for the PID loop.
//!
//! The candidate is `V_PID(ζ) = ζ_PIᵀ P ζ_PI + r‖Δē‖²`, where `ζ_PI = (ē, s̃)`
//! and `P` solves `M_IᵀPM_I − P = −Q` for the PI loop.

use serde::{Deserialize, Serialize};

use crate::controllers::Gains;
use crate::error::{Error, Result};
use crate::linalg::{min_symmetric_eigenvalue, solve_discrete_lyapunov, spectral_norm, Mat};

use super::lifted::{lifted_matrices, LiftedState};
use super::serde_mat;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LyapunovCertificate {
    #[serde(with = "serde_mat", default)]
    pub p_matrix: Option<Mat>,
    #[serde(with = "serde_mat", default)]
    pub q_matrix: Option<Mat>,
    pub m_bound: f64,
    pub q: f64,
    pub h: f64,
    pub ell: f64,
    pub p_norm: f64,
    pub m_i_norm: f64,
    pub m_p_minus_i_norm: f64,
    pub mu: f64,
    pub r_weight: f64,
    pub epsilon: f64,
    pub s_margin: f64,
    pub t_margin: f64,
    pub admissible_ell_sq: f64,
    pub valid: bool,
}

/// Margins of the PID decrement for the prescribed weights
///
/// ```text
/// ε = μ/(8‖P‖‖M_I‖²),   r = μ/(8(‖M_P − I‖² + Mh))
/// S = μ − 2ε‖P‖‖M_I‖² − 3r(‖M_P − I‖² + Mh)
/// T = r(1 − 3M²ℓ²) − ‖P‖M²ℓ²(1/ε + 1)
/// ```
///
/// The certificate is valid iff `S > 0` and `T > 0`, i.e. iff `ℓ²` is below
/// `r/((‖P‖(1/ε + 1) + 3r)M²)`.
#[allow(clippy::too_many_arguments)]
pub fn certify_pid(
    m_bound: f64,
    q: f64,
    h: f64,
    ell: f64,
    mu: f64,
    p_norm: f64,
    m_i_norm: f64,
    m_p_minus_i_norm: f64,
) -> Result<LyapunovCertificate> {
    if !(mu > 0.0) || !mu.is_finite() {
        return Err(Error::InvalidCertificate(format!("mu must be positive, got {mu}")));
    }
    if !(q + m_bound * h < 1.0) {
        return Err(Error::InvalidCertificate(format!("q + Mh = {} is not below 1", q + m_bound * h)));
    }
    for (name, x) in [("m_bound", m_bound), ("p_norm", p_norm), ("m_i_norm", m_i_norm)] {
        if !(x > 0.0) || !x.is_finite() {
            return Err(Error::InvalidInput(format!("{name} must be positive, got {x}")));
        }
    }
    for (name, x) in [("q", q), ("h", h), ("ell", ell), ("m_p_minus_i_norm", m_p_minus_i_norm)] {
        if !(x >= 0.0) || !x.is_finite() {
            return Err(Error::InvalidInput(format!("{name} must be non-negative, got {x}")));
        }
    }
    let mh = m_bound * h;
    let coupling = m_p_minus_i_norm.powi(2) + mh;
    if !(coupling > 0.0) {
        return Err(Error::InvalidCertificate("‖M_P − I‖² + Mh vanishes".into()));
    }
    let epsilon = mu / (8.0 * p_norm * m_i_norm * m_i_norm);
    let r = mu / (8.0 * coupling);
    let s_margin = mu - 2.0 * epsilon * p_norm * m_i_norm * m_i_norm - 3.0 * r * coupling;
    let m2l2 = m_bound * m_bound * ell * ell;
    let t_margin = r * (1.0 - 3.0 * m2l2) - p_norm * m2l2 * (1.0 / epsilon + 1.0);
    let admissible_ell_sq = r / ((p_norm * (1.0 / epsilon + 1.0) + 3.0 * r) * m_bound * m_bound);
    Ok(LyapunovCertificate {
        p_matrix: None,
        q_matrix: None,
        m_bound,
        q,
        h,
        ell,
        p_norm,
        m_i_norm,
        m_p_minus_i_norm,
        mu,
        r_weight: r,
        epsilon,
        s_margin,
        t_margin,
        admissible_ell_sq,
        valid: s_margin > 0.0 && t_margin > 0.0,
    })
}

/// Certificate for a constant Ā: solves the PI Lyapunov equation with
/// weight `q_weight` (identity if `None`) and calls [`certify_pid`] with
/// `μ = λ_min(Q)/2`.
pub fn certify_pid_lti(a_bar: &Mat, gains: &Gains, q_weight: Option<&Mat>) -> Result<LyapunovCertificate> {
    let lm = lifted_matrices(a_bar, gains)?;
    let n2 = lm.m_i.nrows();
    let q_mat = q_weight.cloned().unwrap_or_else(|| Mat::identity(n2, n2));
    let p = solve_discrete_lyapunov(&lm.m_i, &q_mat)?;
    let mu_pi = min_symmetric_eigenvalue(&q_mat)?;
    let n = a_bar.nrows();
    let mut cert = certify_pid(
        spectral_norm(a_bar)?,
        spectral_norm(&lm.m_p)?,
        gains.ki,
        gains.kd,
        mu_pi / 2.0,
        spectral_norm(&p)?,
        spectral_norm(&lm.m_i)?,
        spectral_norm(&(&lm.m_p - Mat::identity(n, n)))?,
    )?;
    cert.p_matrix = Some(p);
    cert.q_matrix = Some(q_mat);
    Ok(cert)
}

impl LyapunovCertificate {
    /// `V_PID(ζ)`; `None` without a stored `P`.
    pub fn value(&self, z: &LiftedState) -> Option<f64> {
        let p = self.p_matrix.as_ref()?;
        let x = z.pi_part();
        Some(x.dot(&(p * &x)) + self.r_weight * z.delta_e.norm_squared())
    }
}

/// One-step dissipation inequality for a constant-Ā PID loop:
///
/// ```text
/// V(k+1) − V(k) ≤ −decay·‖ζ(k)‖² + nu_gain·‖(w⊥, −d)‖² + omega_gain·‖w⊥‖²
/// ```
///
/// so `V` cannot increase while `‖ζ(k)‖²` exceeds the disturbance term
/// divided by `decay`.
///
/// The constants follow from `ζ_PI⁺ = M_I ζ_PI − [H; 0]Δē + ν` and
/// `Δē⁺ = [M_P − I, −G]ζ_PI − HΔē + w⊥` with Young's inequality split at
/// `μ_PI/2` on the cross term of the PI part.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DissipationBound {
    pub decay: f64,
    pub nu_gain: f64,
    pub omega_gain: f64,
}

impl DissipationBound {
    /// Radius² of the ball outside which `V` is non-increasing.
    pub fn ball_sq(&self, nu_sq: f64, omega_sq: f64) -> f64 {
        (self.nu_gain * nu_sq + self.omega_gain * omega_sq) / self.decay
    }
}

pub fn pid_dissipation_bound(a_bar: &Mat, gains: &Gains, cert: &LyapunovCertificate) -> Result<DissipationBound> {
    let (Some(p), Some(q_mat)) = (&cert.p_matrix, &cert.q_matrix) else {
        return Err(Error::InvalidCertificate("certificate carries no Lyapunov matrices".into()));
    };
    let lm = lifted_matrices(a_bar, gains)?;
    let n = a_bar.nrows();
    let mu_pi = min_symmetric_eigenvalue(q_mat)?;
    let p_norm = spectral_norm(p)?;
    let mi = spectral_norm(&lm.m_i)?;
    let h = spectral_norm(&lm.h)?;
    let mut n_mat = Mat::zeros(n, 2 * n);
    n_mat.view_mut((0, 0), (n, n)).copy_from(&(&lm.m_p - Mat::identity(n, n)));
    n_mat.view_mut((0, n), (n, n)).copy_from(&(-&lm.g));
    let nn = spectral_norm(&n_mat)?;
    let r = cert.r_weight;

    // ΔV_PI ≤ −(μ/2)‖x‖² + K‖z‖², K = 2‖P‖²‖M_I‖²/μ + ‖P‖, ‖z‖² ≤ 2‖H‖²‖Δē‖² + 2‖ν‖².
    let k_gain = 2.0 * p_norm * p_norm * mi * mi / mu_pi + p_norm;
    let decay_x = mu_pi / 2.0 - 3.0 * r * nn * nn;
    let decay_y = r * (1.0 - 3.0 * h * h) - 2.0 * k_gain * h * h;
    let decay = decay_x.min(decay_y);
    if !(decay > 0.0) {
        return Err(Error::InvalidCertificate(format!("dissipation rate {decay} is not positive")));
    }
    Ok(DissipationBound { decay, nu_gain: 2.0 * k_gain, omega_gain: 3.0 * r })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn zero_derivative_gain_is_always_valid() {
        let c = certify_pid(1.5, 0.4, 0.2, 0.0, 0.7, 3.0, 1.8, 0.9).unwrap();
        assert!(c.valid);
        assert_abs_diff_eq!(c.t_margin, c.r_weight, epsilon = 1e-15);
    }

    #[test]
    fn s_margin_is_three_eighths_mu() {
        for &(mu, p, mi, mpmi) in &[(0.5, 2.0, 1.3, 0.4), (1.0, 10.0, 2.5, 1.1), (0.01, 1.0, 1.0, 0.0)] {
            let c = certify_pid(1.0, 0.5, 0.3, 0.01, mu, p, mi, mpmi).unwrap();
            assert_abs_diff_eq!(c.s_margin, 3.0 * mu / 8.0, epsilon = 1e-15);
        }
    }

    #[test]
    fn admissible_threshold_separates_validity() {
        let c = certify_pid(1.2, 0.3, 0.4, 0.0, 0.5, 4.0, 1.7, 0.8).unwrap();
        let ell_max = c.admissible_ell_sq.sqrt();
        assert!(certify_pid(1.2, 0.3, 0.4, 0.99 * ell_max, 0.5, 4.0, 1.7, 0.8).unwrap().valid);
        assert!(!certify_pid(1.2, 0.3, 0.4, 1.01 * ell_max, 0.5, 4.0, 1.7, 0.8).unwrap().valid);
    }

    #[test]
    fn errors() {
        assert!(matches!(certify_pid(1.0, 0.5, 0.1, 0.0, 0.0, 1.0, 1.0, 1.0), Err(Error::InvalidCertificate(_))));
        assert!(matches!(certify_pid(1.0, 0.9, 0.2, 0.0, 1.0, 1.0, 1.0, 1.0), Err(Error::InvalidCertificate(_))));
    }

    #[test]
    fn lti_certificate_has_positive_definite_p() {
        let a = Mat::from_row_slice(2, 2, &[0.6, 0.1, 0.1, 0.4]);
        let gains = Gains::pid(0.4, 0.2, 0.0).unwrap();
        let c = certify_pid_lti(&a, &gains, None).unwrap();
        assert!(c.admissible_ell_sq > 0.0);
        assert!(min_symmetric_eigenvalue(c.p_matrix.as_ref().unwrap()).unwrap() > 0.0);
        let json = serde_json::to_string(&c).unwrap();
        let back: LyapunovCertificate = serde_json::from_str(&json).unwrap();
        assert_eq!(back, c);
    }
}
