// SPDX-License-Identifier: MIT OR Apache-2.0

//! Certificates, bounds and diagnostics for the closed loops.
//!
//! - [`certificates`]: P envelope, steady state, PI comparison matrix and
//!   certificate, optimal integral gain.
//! - [`lifted`]: closed-loop block matrices and the lifted state
//!   `(ē, s̃, Δē)`.
//! - [`scalar`]: projection of a trace onto `v = ē(0)/‖ē(0)‖`.
//! - [`overshoot`]: overshoot events, the first-overshoot bound and the
//!   derivative-gain threshold.
//! - [`lyapunov`]: the PID Lyapunov certificate.

pub mod certificates;
pub mod lifted;
pub mod lyapunov;
pub mod overshoot;
pub mod scalar;

pub use certificates::{
    certify_pi, optimal_integral_gain, p_envelope, pi_comparison_matrix, pi_loop_radius, steady_state_error,
    StabilityCertificate,
};
pub use lifted::{
    lift_trace, lifted_matrices, matched_split, simulate_lifted_pid, LiftedMatrices, LiftedState, MatchedSplit,
};
pub use lyapunov::{certify_pid, certify_pid_lti, pid_dissipation_bound, DissipationBound, LyapunovCertificate};
pub use overshoot::{
    compare_first_overshoot, derivative_gain_threshold, detect_overshoots, estimate_r_smooth, first_overshoot_bound,
    FirstOvershoot, OvershootComparison, OvershootEvent, OvershootReport,
};
pub use scalar::{scalarize, ScalarTrace};

pub(crate) mod serde_mat {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    use crate::linalg::{mat_from_rows, mat_to_rows, Mat};

    pub fn serialize<S: Serializer>(m: &Option<Mat>, s: S) -> Result<S::Ok, S::Error> {
        m.as_ref().map(mat_to_rows).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<Mat>, D::Error> {
        let rows: Option<Vec<Vec<f64>>> = Option::deserialize(d)?;
        rows.map(|r| mat_from_rows(&r).map_err(serde::de::Error::custom)).transpose()
    }
}
