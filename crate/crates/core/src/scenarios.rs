// SPDX-License-Identifier: MIT OR Apache-2.0

//! Synthetic plants and matrices used by experiments and the CLI.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::analysis::{detect_overshoots, scalarize, FirstOvershoot};
use crate::controllers::{steering_vectors_sequential, Gains, SteerFn};
use crate::error::{invalid, Result};
use crate::linalg::{spectral_norm, Mat, Vector};
use crate::plant::{randn_mat, randn_vec, ContrastivePlant, LayerMap};

/// Seed of the shipped figure plant.
pub const FIGURE_SEED: u64 = 7;

/// Orthogonal matrix from the QR factorization of a Gaussian matrix.
pub fn random_orthogonal(rng: &mut ChaCha8Rng, n: usize) -> Mat {
    let qr = randn_mat(rng, n, n).qr();
    let q = qr.q();
    let r = qr.r();
    // Fix column signs so the distribution does not depend on QR conventions.
    let mut out = q;
    for j in 0..n {
        if r[(j, j)] < 0.0 {
            out.column_mut(j).neg_mut();
        }
    }
    out
}

/// Symmetric matrix `U diag(λ) Uᵀ` with eigenvalues uniform in `[lo, hi]`.
pub fn random_symmetric(rng: &mut ChaCha8Rng, n: usize, lo: f64, hi: f64) -> Mat {
    let u = random_orthogonal(rng, n);
    let diag = Vector::from_fn(n, |_, _| rng.random_range(lo..=hi));
    &u * Mat::from_diagonal(&diag) * u.transpose()
}

/// Gaussian matrix rescaled to spectral norm `norm`.
pub fn random_with_norm(rng: &mut ChaCha8Rng, n: usize, norm: f64) -> Result<Mat> {
    let m = randn_mat(rng, n, n);
    let s = spectral_norm(&m)?;
    Ok(m * (norm / s))
}

/// Parameters of [`make_persistent_plant`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PersistentPlantConfig {
    pub dim: usize,
    /// Dimension of the block on which every layer acts as the identity.
    pub neutral_dims: usize,
    pub pairs: usize,
    pub layers: usize,
    /// Largest norm of a per-pair coupling from the neutral block into the
    /// contracting block.
    pub coupling: f64,
    pub seed: u64,
}

impl Default for PersistentPlantConfig {
    fn default() -> Self {
        PersistentPlantConfig { dim: 8, neutral_dims: 3, pairs: 4, layers: 150, coupling: 0.5, seed: FIGURE_SEED }
    }
}

/// Linear plant whose heterogeneity never decays.
///
/// In a rotated basis every pair's weight is `diag(I, A₂) + Δᵢ`, where `A₂`
/// is symmetric with eigenvalues in `[0.2, 0.9]` and `Δᵢ` maps the neutral
/// block into the contracting one with `Σ Δᵢ = 0`. The per-pair deviations
/// of the neutral component are preserved forever, so `w(k)` settles to a
/// nonzero constant inside the image of Ā.
pub fn make_persistent_plant(cfg: &PersistentPlantConfig) -> Result<ContrastivePlant> {
    let PersistentPlantConfig { dim, neutral_dims: d1, pairs, layers, coupling, seed } = *cfg;
    if dim == 0 || d1 >= dim || pairs == 0 || layers == 0 {
        return invalid("persistent plant needs dim > neutral_dims and at least one pair and layer");
    }
    if !(coupling >= 0.0) || !coupling.is_finite() {
        return invalid("coupling must be finite and non-negative");
    }
    let d2 = dim - d1;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let q = random_orthogonal(&mut rng, dim);
    let a2 = random_symmetric(&mut rng, d2, 0.2, 0.9);
    let mut a_bar = Mat::zeros(dim, dim);
    a_bar.view_mut((0, 0), (d1, d1)).fill_with_identity();
    a_bar.view_mut((d1, d1), (d2, d2)).copy_from(&a2);

    let mut deltas: Vec<Mat> = (0..pairs)
        .map(|_| {
            let mut d = Mat::zeros(dim, dim);
            d.view_mut((d1, 0), (d2, d1)).copy_from(&randn_mat(&mut rng, d2, d1));
            d
        })
        .collect();
    if pairs > 1 {
        let mean = deltas.iter().fold(Mat::zeros(dim, dim), |acc, d| acc + d) / pairs as f64;
        for d in &mut deltas {
            *d -= &mean;
        }
        let largest = deltas.iter().map(spectral_norm).collect::<Result<Vec<_>>>()?.into_iter().fold(0.0, f64::max);
        for d in &mut deltas {
            *d *= coupling / largest;
        }
    } else {
        deltas[0].fill(0.0);
    }

    let maps: Vec<LayerMap> = deltas
        .iter()
        .map(|d| LayerMap::linear(&q * (&a_bar + d) * q.transpose(), Vector::zeros(dim)))
        .collect::<Result<_>>()?;
    let initial_plus = (0..pairs).map(|_| randn_vec(&mut rng, dim)).collect();
    let initial_minus = (0..pairs).map(|_| randn_vec(&mut rng, dim)).collect();
    ContrastivePlant::new(vec![maps; layers], initial_plus, initial_minus, Some(seed))
}

/// The P, PI and PID gain blocks used by the figure.
pub fn figure_gains() -> [(String, Gains); 3] {
    [
        ("P".to_string(), Gains { kp: 0.5, ki: 0.0, kd: 0.0 }),
        ("PI".to_string(), Gains { kp: 0.5, ki: 0.3, kd: 0.0 }),
        ("PID".to_string(), Gains { kp: 0.5, ki: 0.3, kd: 0.2 }),
    ]
}

/// ⟨ē(0), ē(k)⟩ under one controller.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FigureColumn {
    pub label: String,
    pub gains: Gains,
    pub inner: Vec<f64>,
    pub first_overshoot: Option<FirstOvershoot>,
}

/// Runs every controller on the plant with additive steering.
pub fn figure_series(plant: &ContrastivePlant, controllers: &[(String, Gains)]) -> Result<Vec<FigureColumn>> {
    controllers
        .iter()
        .map(|(label, gains)| {
            let (_, trace) = steering_vectors_sequential(plant, *gains, &SteerFn::add(1.0))?;
            let inner = trace.inner_with_initial();
            let first = scalarize(&trace).ok().and_then(|s| detect_overshoots(&s.e_v).first);
            Ok(FigureColumn { label: label.clone(), gains: *gains, inner, first_overshoot: first })
        })
        .collect()
}
