// SPDX-License-Identifier: MIT OR Apache-2.0

//! Contrastive two-branch layerwise plants.
//!
//! Each of the `N` pairs carries a desired state `x⁺ᵢ(k)` and an undesired
//! state `x⁻ᵢ(k)`; both pass through the same per-pair layer map `fᵢ⁽ᵏ⁾`, and
//! steering acts on the minus branch only:
//!
//! ```text
//! x⁺ᵢ(k+1) = fᵢ⁽ᵏ⁾(x⁺ᵢ(k)),   x⁻ᵢ(k+1) = fᵢ⁽ᵏ⁾(x⁻ᵢ(k) + u(k))
//! ```
//!
//! Linearizing at `x⁺ᵢ(k)` gives `ē(k+1) ≈ Ā(k)ē(k) − Ā(k)u(k) + w(k)` with
//! `w(k) = (1/N) Σ Ãᵢ(k) ẽᵢ(k)`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::controllers::ControllerState;
use crate::error::{invalid, Error, Result};
use crate::linalg::{ensure_finite, ensure_finite_vec, mat_from_rows, mat_to_rows, spectral_norm, Mat, Vector};
use crate::trace::Trace;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LayerKind {
    /// `x ↦ W x + b`.
    Linear,
    /// `x ↦ x + scale · tanh(W x + b)`.
    TanhResidual,
}

/// One layer map `f(x)` of one pair.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerMap {
    pub kind: LayerKind,
    pub weight: Mat,
    pub bias: Vector,
    pub scale: f64,
}

impl LayerMap {
    pub fn new(kind: LayerKind, weight: Mat, bias: Vector, scale: f64) -> Result<Self> {
        ensure_finite(&weight, "layer weight")?;
        ensure_finite_vec(&bias, "layer bias")?;
        if !weight.is_square() || weight.nrows() != bias.len() {
            return invalid(format!(
                "layer weight is {}x{} but bias has dim {}",
                weight.nrows(),
                weight.ncols(),
                bias.len()
            ));
        }
        if !scale.is_finite() {
            return invalid("layer scale must be finite");
        }
        Ok(LayerMap { kind, weight, bias, scale })
    }

    pub fn linear(weight: Mat, bias: Vector) -> Result<Self> {
        Self::new(LayerKind::Linear, weight, bias, 1.0)
    }

    pub fn tanh_residual(weight: Mat, bias: Vector, scale: f64) -> Result<Self> {
        Self::new(LayerKind::TanhResidual, weight, bias, scale)
    }

    pub fn dim(&self) -> usize {
        self.bias.len()
    }

    pub fn apply(&self, x: &Vector) -> Vector {
        let pre = &self.weight * x + &self.bias;
        match self.kind {
            LayerKind::Linear => pre,
            LayerKind::TanhResidual => x + pre.map(f64::tanh) * self.scale,
        }
    }

    /// Analytic Jacobian at `x`.
    pub fn jacobian(&self, x: &Vector) -> Mat {
        match self.kind {
            LayerKind::Linear => self.weight.clone(),
            LayerKind::TanhResidual => {
                let pre = &self.weight * x + &self.bias;
                let mut j = self.weight.clone();
                for (r, z) in pre.iter().enumerate() {
                    let t = z.tanh();
                    let g = self.scale * (1.0 - t * t);
                    j.row_mut(r).scale_mut(g);
                }
                for i in 0..j.nrows() {
                    j[(i, i)] += 1.0;
                }
                j
            }
        }
    }
}

/// Branch states indexed `[k][i]`.
pub type BranchStates = Vec<Vec<Vector>>;

/// Mean and deviations of the linearization at one layer.
#[derive(Debug, Clone, PartialEq)]
pub struct PlantStep {
    pub k: usize,
    /// ē(k).
    pub e_bar: Vector,
    /// eᵢ(k) = x⁺ᵢ(k) − x⁻ᵢ(k).
    pub per_pair_errors: Vec<Vector>,
    /// Aᵢ(k) evaluated at x⁺ᵢ(k).
    pub per_pair_jacobians: Vec<Mat>,
    /// Ā(k).
    pub mean_jacobian: Mat,
    /// w(k).
    pub disturbance: Vector,
}

/// N contrastive pairs passing through K layers.
#[derive(Debug, Clone, PartialEq)]
pub struct ContrastivePlant {
    dim: usize,
    /// `layers[k][i]` is the map of pair `i` at layer `k`.
    layers: Vec<Vec<LayerMap>>,
    initial_plus: Vec<Vector>,
    initial_minus: Vec<Vector>,
    seed: Option<u64>,
}

/// ē = (1/N) Σ (x⁺ᵢ − x⁻ᵢ).
pub fn average_error(plus: &[Vector], minus: &[Vector]) -> Result<Vector> {
    if plus.len() != minus.len() || plus.is_empty() {
        return invalid(format!("average_error: {} plus and {} minus states", plus.len(), minus.len()));
    }
    let dim = plus[0].len();
    let mut acc = Vector::zeros(dim);
    for (p, m) in plus.iter().zip(minus) {
        if p.len() != dim || m.len() != dim {
            return invalid("average_error: state dimensions differ");
        }
        acc += p - m;
    }
    Ok(acc / plus.len() as f64)
}

/// Entry-wise mean; identical inputs return the shared matrix so that
/// `Ãᵢ ≡ 0` holds exactly.
fn mean_matrix(ms: &[Mat]) -> Mat {
    if ms.iter().all(|a| a == &ms[0]) {
        return ms[0].clone();
    }
    ms.iter().fold(Mat::zeros(ms[0].nrows(), ms[0].ncols()), |acc, a| acc + a) / ms.len() as f64
}

impl ContrastivePlant {
    pub fn new(
        layers: Vec<Vec<LayerMap>>,
        initial_plus: Vec<Vector>,
        initial_minus: Vec<Vector>,
        seed: Option<u64>,
    ) -> Result<Self> {
        let pairs = initial_plus.len();
        if pairs == 0 {
            return invalid("plant needs at least one pair");
        }
        if initial_minus.len() != pairs {
            return invalid("initial_plus and initial_minus have different pair counts");
        }
        if layers.is_empty() {
            return invalid("plant needs at least one layer");
        }
        let dim = initial_plus[0].len();
        for x in initial_plus.iter().chain(&initial_minus) {
            ensure_finite_vec(x, "initial state")?;
            if x.len() != dim {
                return invalid("initial states have different dimensions");
            }
        }
        for (k, layer) in layers.iter().enumerate() {
            if layer.len() != pairs {
                return invalid(format!("layer {k} has {} maps for {pairs} pairs", layer.len()));
            }
            if layer.iter().any(|f| f.dim() != dim) {
                return invalid(format!("layer {k} has a map of the wrong dimension"));
            }
        }
        Ok(ContrastivePlant { dim, layers, initial_plus, initial_minus, seed })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn pairs(&self) -> usize {
        self.initial_plus.len()
    }

    pub fn layer_count(&self) -> usize {
        self.layers.len()
    }

    pub fn layers(&self) -> &[Vec<LayerMap>] {
        &self.layers
    }

    pub fn initial_plus(&self) -> &[Vector] {
        &self.initial_plus
    }

    pub fn initial_minus(&self) -> &[Vector] {
        &self.initial_minus
    }

    pub fn seed(&self) -> Option<u64> {
        self.seed
    }

    pub fn is_linear(&self) -> bool {
        self.layers.iter().flatten().all(|f| f.kind == LayerKind::Linear)
    }

    fn check_states(&self, states: &[Vector], k: usize) -> Result<()> {
        if k >= self.layer_count() {
            return invalid(format!("layer index {k} out of range (K = {})", self.layer_count()));
        }
        if states.len() != self.pairs() {
            return invalid(format!("expected {} states, got {}", self.pairs(), states.len()));
        }
        if states.iter().any(|x| x.len() != self.dim) {
            return invalid("state dimension does not match plant");
        }
        Ok(())
    }

    /// Passes every pair's state through its layer-`k` map.
    pub fn apply_layer(&self, k: usize, states: &[Vector]) -> Result<Vec<Vector>> {
        self.check_states(states, k)?;
        Ok(self.layers[k].iter().zip(states).map(|(f, x)| f.apply(x)).collect())
    }

    /// One exact step with `u` added to every minus-branch state.
    pub fn step_exact(
        &self,
        plus: &[Vector],
        minus: &[Vector],
        u: &Vector,
        k: usize,
    ) -> Result<(Vec<Vector>, Vec<Vector>)> {
        if u.len() != self.dim {
            return invalid(format!("steering vector has dim {} but plant has dim {}", u.len(), self.dim));
        }
        self.check_states(minus, k)?;
        let next_plus = self.apply_layer(k, plus)?;
        let next_minus = self.layers[k].iter().zip(minus).map(|(f, x)| f.apply(&(x + u))).collect();
        Ok((next_plus, next_minus))
    }

    /// Linearization at the plus-branch states of layer `k`.
    pub fn local_model(&self, plus: &[Vector], minus: &[Vector], k: usize) -> Result<PlantStep> {
        self.check_states(plus, k)?;
        self.check_states(minus, k)?;
        let n = self.pairs() as f64;
        let per_pair_errors: Vec<Vector> = plus.iter().zip(minus).map(|(p, m)| p - m).collect();
        let e_bar = average_error(plus, minus)?;
        let per_pair_jacobians: Vec<Mat> = self.layers[k].iter().zip(plus).map(|(f, x)| f.jacobian(x)).collect();
        let mean_jacobian = mean_matrix(&per_pair_jacobians);
        let mut disturbance = Vector::zeros(self.dim);
        for (a, e) in per_pair_jacobians.iter().zip(&per_pair_errors) {
            disturbance += (a - &mean_jacobian) * (e - &e_bar);
        }
        disturbance /= n;
        Ok(PlantStep { k, e_bar, per_pair_errors, per_pair_jacobians, mean_jacobian, disturbance })
    }

    /// ‖ē_exact(k+1) − (Ā ē − Ā u + w)‖ at the given states.
    pub fn linearization_residual(&self, plus: &[Vector], minus: &[Vector], u: &Vector, k: usize) -> Result<f64> {
        let local = self.local_model(plus, minus, k)?;
        let (p, m) = self.step_exact(plus, minus, u, k)?;
        let exact = average_error(&p, &m)?;
        let model = &local.mean_jacobian * (&local.e_bar - u) + &local.disturbance;
        Ok((exact - model).norm())
    }

    /// Unsteered plus and minus states for k = 0..=K.
    pub fn rollout_unsteered(&self) -> Result<(BranchStates, BranchStates)> {
        let mut plus = vec![self.initial_plus.clone()];
        let mut minus = vec![self.initial_minus.clone()];
        for k in 0..self.layer_count() {
            let p = self.apply_layer(k, &plus[k])?;
            let m = self.apply_layer(k, &minus[k])?;
            if p.iter().chain(&m).any(|x| !x.iter().all(|v| v.is_finite())) {
                return Err(Error::Divergence { step: k + 1 });
            }
            plus.push(p);
            minus.push(m);
        }
        Ok((plus, minus))
    }

    /// Ā(k) along the plus branch, which steering never touches.
    pub fn mean_jacobians(&self) -> Result<Vec<Mat>> {
        let mut plus = self.initial_plus.clone();
        let mut out = Vec::with_capacity(self.layer_count());
        for k in 0..self.layer_count() {
            let jacs: Vec<Mat> = self.layers[k].iter().zip(&plus).map(|(f, x)| f.jacobian(x)).collect();
            out.push(mean_matrix(&jacs));
            plus = self.apply_layer(k, &plus)?;
        }
        Ok(out)
    }

    /// M = max_k ‖Ā(k)‖.
    pub fn jacobian_bound(&self) -> Result<f64> {
        self.mean_jacobians()?.iter().try_fold(0.0f64, |acc, a| Ok(acc.max(spectral_norm(a)?)))
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&PlantDoc::from(self))?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: PlantDoc = serde_json::from_str(text)?;
        doc.try_into()
    }
}

/// Serialized form of a [`ContrastivePlant`]; matrices are lists of rows.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PlantDoc {
    pub dim: usize,
    pub pairs: usize,
    #[serde(default)]
    pub seed: Option<u64>,
    pub layers: Vec<Vec<LayerDoc>>,
    pub initial_plus: Vec<Vec<f64>>,
    pub initial_minus: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LayerDoc {
    pub kind: LayerKind,
    pub weight: Vec<Vec<f64>>,
    pub bias: Vec<f64>,
    #[serde(default = "one")]
    pub scale: f64,
}

fn one() -> f64 {
    1.0
}

impl From<&ContrastivePlant> for PlantDoc {
    fn from(p: &ContrastivePlant) -> Self {
        let vecs = |xs: &[Vector]| xs.iter().map(|x| x.iter().copied().collect()).collect();
        PlantDoc {
            dim: p.dim,
            pairs: p.pairs(),
            seed: p.seed,
            layers: p
                .layers
                .iter()
                .map(|layer| {
                    layer
                        .iter()
                        .map(|f| LayerDoc {
                            kind: f.kind,
                            weight: mat_to_rows(&f.weight),
                            bias: f.bias.iter().copied().collect(),
                            scale: f.scale,
                        })
                        .collect()
                })
                .collect(),
            initial_plus: vecs(&p.initial_plus),
            initial_minus: vecs(&p.initial_minus),
        }
    }
}

impl TryFrom<PlantDoc> for ContrastivePlant {
    type Error = Error;

    fn try_from(doc: PlantDoc) -> Result<Self> {
        let layers = doc
            .layers
            .into_iter()
            .map(|layer| {
                layer
                    .into_iter()
                    .map(|l| LayerMap::new(l.kind, mat_from_rows(&l.weight)?, Vector::from_vec(l.bias), l.scale))
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        let to_vecs = |xs: Vec<Vec<f64>>| xs.into_iter().map(Vector::from_vec).collect::<Vec<_>>();
        let plant = ContrastivePlant::new(layers, to_vecs(doc.initial_plus), to_vecs(doc.initial_minus), doc.seed)?;
        if plant.dim != doc.dim || plant.pairs() != doc.pairs {
            return invalid(format!(
                "plant document declares dim {} / pairs {} but contains dim {} / pairs {}",
                doc.dim,
                doc.pairs,
                plant.dim,
                plant.pairs()
            ));
        }
        Ok(plant)
    }
}

/// Parameters of [`make_random_plant`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RandomPlantConfig {
    pub dim: usize,
    pub pairs: usize,
    pub layers: usize,
    pub kind: LayerKind,
    pub jacobian_norm_cap: f64,
    /// Relative size of per-pair weight deviations and of the spread of the
    /// plus-branch initial states; 0 gives identical pairs.
    pub heterogeneity: f64,
    pub seed: u64,
}

pub(crate) fn randn_mat(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Mat {
    Mat::from_fn(rows, cols, |_, _| rng.sample(StandardNormal))
}

pub(crate) fn randn_vec(rng: &mut ChaCha8Rng, dim: usize) -> Vector {
    Vector::from_fn(dim, |_, _| rng.sample(StandardNormal))
}

/// `count` zero-mean matrices whose largest spectral norm is `size`.
fn centered_perturbations(rng: &mut ChaCha8Rng, dim: usize, count: usize, size: f64) -> Result<Vec<Mat>> {
    if count < 2 || size == 0.0 {
        return Ok(vec![Mat::zeros(dim, dim); count]);
    }
    let mut raw: Vec<Mat> = (0..count).map(|_| randn_mat(rng, dim, dim)).collect();
    let mean = raw.iter().fold(Mat::zeros(dim, dim), |acc, m| acc + m) / count as f64;
    for m in &mut raw {
        *m -= &mean;
    }
    let largest = raw.iter().try_fold(0.0f64, |acc, m| Ok::<_, Error>(acc.max(spectral_norm(m)?)))?;
    if largest > 0.0 {
        for m in &mut raw {
            *m *= size / largest;
        }
    }
    Ok(raw)
}

/// Seeded random plant.
///
/// Linear layers have mean weight `Ā(k)` of norm in `[cap/2, cap]` and
/// per-pair deviations of norm up to `heterogeneity·‖Ā(k)‖`. Tanh-residual
/// layers draw `W` with unit-scale entries and halve the residual scale until
/// `‖Ā(k)‖ ≤ cap` at the unsteered plus states; since the Jacobian tends to
/// the identity as the scale shrinks, they need `cap ≥ 1`.
pub fn make_random_plant(cfg: &RandomPlantConfig) -> Result<ContrastivePlant> {
    let RandomPlantConfig { dim, pairs, layers, kind, jacobian_norm_cap: cap, heterogeneity, seed } = *cfg;
    if dim == 0 || pairs == 0 || layers == 0 {
        return invalid("dim, pairs and layers must all be at least 1");
    }
    if !(cap > 0.0) || !cap.is_finite() {
        return invalid(format!("jacobian_norm_cap must be positive, got {cap}"));
    }
    if !(heterogeneity >= 0.0) || !heterogeneity.is_finite() {
        return invalid(format!("heterogeneity must be non-negative, got {heterogeneity}"));
    }
    if kind == LayerKind::TanhResidual && cap < 1.0 {
        return invalid("tanh-residual plants need jacobian_norm_cap >= 1");
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let base = randn_vec(&mut rng, dim);
    let initial_plus: Vec<Vector> = (0..pairs).map(|_| &base + randn_vec(&mut rng, dim) * heterogeneity).collect();
    let initial_minus: Vec<Vector> = initial_plus.iter().map(|x| x + randn_vec(&mut rng, dim)).collect();

    let inv_sqrt = 1.0 / (dim as f64).sqrt();
    let mut plus = initial_plus.clone();
    let mut all_layers = Vec::with_capacity(layers);
    for _ in 0..layers {
        let mut weight = randn_mat(&mut rng, dim, dim) * inv_sqrt;
        let bias = randn_vec(&mut rng, dim) * 0.1;
        if kind == LayerKind::Linear {
            let target = cap * rng.random_range(0.5..=1.0);
            let n = spectral_norm(&weight)?;
            if n > 0.0 {
                weight *= target / n;
            }
        }
        let size = heterogeneity * spectral_norm(&weight)?;
        let deltas = centered_perturbations(&mut rng, dim, pairs, size)?;
        let build = |scale: f64| -> Result<Vec<LayerMap>> {
            deltas.iter().map(|d| LayerMap::new(kind, &weight + d, bias.clone(), scale)).collect()
        };
        let layer = match kind {
            LayerKind::Linear => build(1.0)?,
            LayerKind::TanhResidual => {
                let mut scale = 0.5;
                let mut chosen = None;
                for _ in 0..60 {
                    let maps = build(scale)?;
                    let mean = maps.iter().zip(&plus).fold(Mat::zeros(dim, dim), |acc, (f, x)| acc + f.jacobian(x))
                        / pairs as f64;
                    if spectral_norm(&mean)? <= cap {
                        chosen = Some(maps);
                        break;
                    }
                    scale *= 0.5;
                }
                match chosen {
                    Some(maps) => maps,
                    None => build(0.0)?,
                }
            }
        };
        plus = layer.iter().zip(&plus).map(|(f, x)| f.apply(x)).collect();
        all_layers.push(layer);
    }
    ContrastivePlant::new(all_layers, initial_plus, initial_minus, Some(seed))
}

/// One step of a linear(ized) error model: Ā(k) and w(k).
#[derive(Debug, Clone, PartialEq)]
pub struct ModelStep {
    pub a_bar: Mat,
    pub w: Vector,
}

/// `steps` copies of the same (Ā, w).
pub fn constant_trajectory(a_bar: &Mat, w: &Vector, steps: usize) -> Vec<ModelStep> {
    vec![ModelStep { a_bar: a_bar.clone(), w: w.clone() }; steps]
}

/// (Ā(k), w(k)) recorded along a closed-loop trace.
pub fn trajectory_from_trace(trace: &Trace) -> Vec<ModelStep> {
    trace.jacobians.iter().zip(&trace.disturbances).map(|(a, w)| ModelStep { a_bar: a.clone(), w: w.clone() }).collect()
}

/// (Ā(k), w(k)) along the unsteered rollout of a plant.
pub fn trajectory_from_rollout(plant: &ContrastivePlant) -> Result<Vec<ModelStep>> {
    let (plus, minus) = plant.rollout_unsteered()?;
    (0..plant.layer_count())
        .map(|k| {
            let s = plant.local_model(&plus[k], &minus[k], k)?;
            Ok(ModelStep { a_bar: s.mean_jacobian, w: s.disturbance })
        })
        .collect()
}

/// Iterates `ē(k+1) = Ā(k)ē(k) − Ā(k)u(k) + w(k)` with `u(k)` from the
/// controller, one step per trajectory entry.
pub fn simulate_linearized(traj: &[ModelStep], controller: ControllerState, e0: &Vector) -> Result<Trace> {
    ensure_finite_vec(e0, "simulate_linearized")?;
    if e0.len() != controller.dim() {
        return invalid("initial error and controller dimensions differ");
    }
    let mut ctrl = controller;
    let mut trace = Trace::start(ctrl.gains, e0.clone());
    trace.integrators[0] = ctrl.integrator.clone();
    trace.increments[0] = e0 - &ctrl.prev_error;
    let mut e = e0.clone();
    for (k, step) in traj.iter().enumerate() {
        if step.a_bar.nrows() != e.len() || step.a_bar.ncols() != e.len() || step.w.len() != e.len() {
            return invalid(format!("trajectory step {k} has mismatched dimensions"));
        }
        let u = ctrl.step(&e)?;
        let next = &step.a_bar * (&e - &u) + &step.w;
        if !next.iter().all(|x| x.is_finite()) {
            return Err(Error::Divergence { step: k + 1 });
        }
        trace.push(u, step.a_bar.clone(), step.w.clone(), next.clone(), ctrl.integrator.clone());
        e = next;
    }
    Ok(trace)
}
