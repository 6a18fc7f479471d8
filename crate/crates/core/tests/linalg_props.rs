// SPDX-License-Identifier: MIT OR Apache-2.0

mod common;

use common::{gaussian_mat, gaussian_vec, rng};
use pidsteer::linalg::{
    gelfand_constant, matrix_power, min_symmetric_eigenvalue, orthogonal_decompose, pinv, solve_discrete_lyapunov,
    spectral_norm, spectral_radius, Mat,
};
use pidsteer::scenarios::random_with_norm;
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn spectral_norm_is_submultiplicative(seed in any::<u64>(), n in 1usize..6) {
        let mut r = rng(seed);
        let a = gaussian_mat(&mut r, n, n);
        let b = gaussian_mat(&mut r, n, n);
        let ab = spectral_norm(&(&a * &b)).unwrap();
        prop_assert!(ab <= spectral_norm(&a).unwrap() * spectral_norm(&b).unwrap() * (1.0 + 1e-12));
    }

    #[test]
    fn spectral_radius_at_most_norm(seed in any::<u64>(), n in 1usize..7) {
        let a = gaussian_mat(&mut rng(seed), n, n);
        prop_assert!(spectral_radius(&a).unwrap() <= spectral_norm(&a).unwrap() * (1.0 + 1e-10));
    }

    #[test]
    fn gelfand_envelope_holds(seed in any::<u64>(), n in 1usize..5, target in 0.2f64..0.95) {
        let mut r = rng(seed);
        let a = random_with_norm(&mut r, n, 1.0).unwrap();
        let rad = spectral_radius(&a).unwrap();
        let m = a * (target / rad);
        let rho = (target + 1.0) / 2.0;
        let c = gelfand_constant(&m, rho, 200).unwrap();
        prop_assert!(c >= 1.0);
        for k in 0..=200 {
            let pk = spectral_norm(&matrix_power(&m, k)).unwrap();
            prop_assert!(pk <= c * rho.powi(k as i32) * (1.0 + 1e-9));
        }
    }

    #[test]
    fn lyapunov_solution_is_symmetric_positive_definite(seed in any::<u64>(), n in 1usize..6, radius in 0.1f64..0.95) {
        let mut r = rng(seed);
        let a = gaussian_mat(&mut r, n, n);
        let m = &a * (radius / spectral_radius(&a).unwrap());
        let b = gaussian_mat(&mut r, n, n);
        let q = &b * b.transpose() + Mat::identity(n, n) * 0.1;
        let p = solve_discrete_lyapunov(&m, &q).unwrap();
        let scale = spectral_norm(&p).unwrap();
        prop_assert!((&p - p.transpose()).amax() <= 1e-10 * scale);
        prop_assert!(min_symmetric_eigenvalue(&p).unwrap() > 0.0);
        let resid = m.transpose() * &p * &m - &p + &q;
        prop_assert!(resid.amax() <= 1e-9 * scale.max(1.0));
    }

    #[test]
    fn pinv_satisfies_normal_equations(seed in any::<u64>(), rows in 1usize..6, cols in 1usize..6) {
        let mut r = rng(seed);
        let a = gaussian_mat(&mut r, rows, cols);
        let b = gaussian_vec(&mut r, rows);
        let x = pinv(&a).unwrap() * &b;
        let normal = a.transpose() * (&a * &x - &b);
        prop_assert!(normal.amax() <= 1e-9 * (1.0 + b.amax()) * (1.0 + a.amax()).powi(2));
    }

    #[test]
    fn pinv_reproduces_rank_deficient_matrices(seed in any::<u64>(), n in 2usize..8, m in 2usize..8, rank in 1usize..4) {
        let mut r = rng(seed);
        let rank = rank.min(n).min(m);
        let mut a = Mat::zeros(n, m);
        for _ in 0..rank {
            a += gaussian_vec(&mut r, n) * gaussian_vec(&mut r, m).transpose();
        }
        let back = &a * pinv(&a).unwrap() * &a;
        prop_assert!((back - &a).amax() <= 1e-10 * (1.0 + a.amax()));
    }

    #[test]
    fn orthogonal_decomposition_on_rank_one(seed in any::<u64>()) {
        let mut r = rng(seed);
        let u = gaussian_vec(&mut r, 4);
        let v = gaussian_vec(&mut r, 4);
        let a = &u * v.transpose();
        let w = gaussian_vec(&mut r, 4);
        let (par, perp) = orthogonal_decompose(&w, &a).unwrap();
        prop_assert!((&par + &perp - &w).amax() <= 1e-12);
        prop_assert!(par.dot(&perp).abs() <= 1e-10 * w.norm_squared());
        prop_assert!((a.transpose() * &perp).amax() <= 1e-10 * a.amax() * w.norm());
        let expected = &u * (u.dot(&w) / u.norm_squared());
        prop_assert!((par - expected).amax() <= 1e-10 * w.norm());
    }
}
