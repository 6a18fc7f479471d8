// SPDX-License-Identifier: MIT OR Apache-2.0

mod common;

use common::{gaussian_vec, rng};
use pidsteer::controllers::{
    apply_steer, controls_from_history, discretized_p_rollout, steering_vectors_nonsequential,
    steering_vectors_sequential, Gains, SteerFn,
};
use pidsteer::linalg::Vector;
use pidsteer::plant::{make_random_plant, ContrastivePlant, LayerKind, LayerMap, RandomPlantConfig};
use pidsteer::scenarios::random_symmetric;
use proptest::prelude::*;

fn plant(seed: u64, kind: LayerKind, heterogeneity: f64, pairs: usize) -> ContrastivePlant {
    make_random_plant(&RandomPlantConfig {
        dim: 4,
        pairs,
        layers: 30,
        kind,
        jacobian_norm_cap: if kind == LayerKind::Linear { 0.9 } else { 1.2 },
        heterogeneity,
        seed,
    })
    .unwrap()
}

/// Every pair and layer shares one symmetric PSD linear map, so w ≡ 0.
fn symmetric_plant(seed: u64, pairs: usize, layers: usize) -> ContrastivePlant {
    let mut r = rng(seed);
    let a = random_symmetric(&mut r, 4, 0.05, 0.9);
    let b = gaussian_vec(&mut r, 4);
    let map = LayerMap::linear(a, b).unwrap();
    let plus = (0..pairs).map(|_| gaussian_vec(&mut r, 4)).collect();
    let minus = (0..pairs).map(|_| gaussian_vec(&mut r, 4)).collect();
    ContrastivePlant::new(vec![vec![map; pairs]; layers], plus, minus, None).unwrap()
}

fn gains() -> impl Strategy<Value = Gains> {
    (0.0f64..1.5, 0.0f64..0.5, 0.0f64..0.5).prop_map(|(kp, ki, kd)| Gains { kp, ki, kd })
}

fn mean(xs: &[Vector]) -> Vector {
    let mut acc = Vector::zeros(xs[0].len());
    for x in xs {
        acc += x;
    }
    acc / xs.len() as f64
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn integrator_replays_prefix_sum(seed in any::<u64>(), g in gains()) {
        let (_, trace) = steering_vectors_sequential(&plant(seed, LayerKind::TanhResidual, 0.3, 3), g, &SteerFn::add(1.0)).unwrap();
        let mut prefix = Vector::zeros(trace.dim());
        for k in 0..=trace.steps() {
            prop_assert_eq!(&trace.integrators[k], &prefix);
            prefix += &trace.errors[k];
        }
    }

    #[test]
    fn control_is_linear_in_proportional_gain(seed in any::<u64>(), g in gains(), extra in 0.0f64..2.0, len in 1usize..20) {
        let mut r = rng(seed);
        let history: Vec<Vector> = (0..len).map(|_| gaussian_vec(&mut r, 3)).collect();
        let base = controls_from_history(g, &history).unwrap();
        let bumped = controls_from_history(Gains { kp: g.kp + extra, ..g }, &history).unwrap();
        for k in 0..len {
            let expected = &base[k] + &history[k] * extra;
            prop_assert!((&bumped[k] - expected).amax() <= 1e-12 * (1.0 + bumped[k].amax()));
        }
    }

    #[test]
    fn ablation_is_idempotent_and_orthogonal(seed in any::<u64>(), n in 1usize..8) {
        let mut r = rng(seed);
        let x = gaussian_vec(&mut r, n);
        let u = gaussian_vec(&mut r, n);
        let once = apply_steer(&SteerFn::ablation(), &x, &u).unwrap();
        let twice = apply_steer(&SteerFn::ablation(), &once, &u).unwrap();
        prop_assert!((&twice - &once).amax() <= 1e-12 * (1.0 + x.amax()));
        prop_assert!(once.dot(&u).abs() <= 1e-10 * (1.0 + x.norm() * u.norm()));
    }

    #[test]
    fn nonsequential_matches_per_layer_mean_difference(seed in any::<u64>()) {
        let p = plant(seed, LayerKind::TanhResidual, 0.4, 3);
        let (plus, minus) = p.rollout_unsteered().unwrap();
        let r = steering_vectors_nonsequential(&plus, &minus).unwrap();
        prop_assert_eq!(r.len(), p.layer_count() + 1);
        for k in 0..r.len() {
            let mut naive = vec![0.0; p.dim()];
            for i in 0..3 {
                for j in 0..p.dim() {
                    naive[j] += plus[k][i][j] - minus[k][i][j];
                }
            }
            for j in 0..p.dim() {
                prop_assert!((r[k][j] - naive[j] / 3.0).abs() <= 1e-12 * (1.0 + naive[j].abs()));
            }
        }
    }

    #[test]
    fn zero_gains_reproduce_unsteered_rollout(seed in any::<u64>()) {
        let p = plant(seed, LayerKind::TanhResidual, 0.3, 2);
        let (history, _) = steering_vectors_sequential(&p, Gains::zero(), &SteerFn::add(1.0)).unwrap();
        let (plus, minus) = p.rollout_unsteered().unwrap();
        let unsteered = steering_vectors_nonsequential(&plus, &minus).unwrap();
        for (a, b) in history.iter().zip(&unsteered) {
            prop_assert!((a - b).amax() <= 1e-12);
        }
    }

    #[test]
    fn unit_proportional_gain_is_mean_activation_transport(seed in any::<u64>()) {
        let p = plant(seed, LayerKind::Linear, 0.5, 3);
        let (history, _) = steering_vectors_sequential(&p, Gains::p(1.0).unwrap(), &SteerFn::add(1.0)).unwrap();
        let mut plus = p.initial_plus().to_vec();
        let mut minus = p.initial_minus().to_vec();
        for (r, layer) in history.iter().zip(p.layers()) {
            let shift = mean(&plus) - mean(&minus);
            prop_assert!((r - &shift).amax() <= 1e-12 * (1.0 + shift.amax()));
            plus = plus.iter().zip(layer).map(|(x, f)| &f.weight * x + &f.bias).collect();
            minus = minus.iter().zip(layer).map(|(x, f)| &f.weight * (x + &shift) + &f.bias).collect();
        }
    }

    #[test]
    fn proportional_steering_is_discretized_p_control(seed in any::<u64>(), kp in 0.0f64..1.5) {
        let p = plant(seed, LayerKind::TanhResidual, 0.3, 3);
        let (_, seq) = steering_vectors_sequential(&p, Gains::p(kp).unwrap(), &SteerFn::add(1.0)).unwrap();
        let disc = discretized_p_rollout(&p, kp).unwrap();
        prop_assert!(seq.max_diff(&disc) <= 1e-12);
    }

    #[test]
    fn homogeneous_pi_shrinks_error(seed in any::<u64>(), kp in 0.1f64..1.0, frac in 0.1f64..0.9) {
        let p = symmetric_plant(seed, 3, 30);
        let m = p.jacobian_bound().unwrap();
        let q = (1.0 - kp) * m;
        let ki = frac * (1.0 - q) / m;
        let (history, _) = steering_vectors_sequential(&p, Gains::pi(kp, ki).unwrap(), &SteerFn::add(1.0)).unwrap();
        prop_assert!(history.last().unwrap().norm() < history[0].norm());
    }
}
