// SPDX-License-Identifier: MIT OR Apache-2.0

//! Dense real linear algebra used throughout the crate.
//!
//! Matrices and vectors are plain `nalgebra` dynamic types. Every routine here
//! is a pure function of its arguments; finiteness is checked at the public
//! boundaries of the other modules via [`ensure_finite`] and
//! [`ensure_finite_vec`].

use nalgebra::{DMatrix, DVector, Schur, SymmetricEigen, SVD};

use crate::error::{invalid, Error, Result};

/// Dense real matrix.
pub type Mat = DMatrix<f64>;
/// Dense real column vector.
pub type Vector = DVector<f64>;

/// Convergence threshold handed to the iterative eigen/singular solvers.
pub const SOLVER_EPS: f64 = 1e-12;
/// Iteration cap for the iterative eigen/singular solvers.
pub const SOLVER_MAX_ITER: usize = 10_000;
/// Relative singular-value cutoff used by [`pinv`].
pub const PINV_RCOND: f64 = 1e-10;
/// A Lyapunov series term below this norm ends the summation.
pub const LYAPUNOV_TERM_TOL: f64 = 1e-14;
/// Maximum number of series terms summed by [`solve_discrete_lyapunov`].
pub const LYAPUNOV_MAX_TERMS: usize = 100_000;

pub fn ensure_finite(m: &Mat, what: &str) -> Result<()> {
    if m.nrows() == 0 || m.ncols() == 0 {
        return invalid(format!("{what}: matrix has a zero dimension"));
    }
    if m.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        invalid(format!("{what}: matrix has non-finite entries"))
    }
}

pub fn ensure_finite_vec(v: &Vector, what: &str) -> Result<()> {
    if v.is_empty() {
        return invalid(format!("{what}: vector is empty"));
    }
    if v.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        invalid(format!("{what}: vector has non-finite entries"))
    }
}

fn ensure_square(m: &Mat, what: &str) -> Result<()> {
    if m.is_square() {
        Ok(())
    } else {
        invalid(format!("{what}: expected a square matrix, got {}x{}", m.nrows(), m.ncols()))
    }
}

fn svd(m: &Mat, vectors: bool) -> Result<SVD<f64, nalgebra::Dyn, nalgebra::Dyn>> {
    SVD::try_new(m.clone(), vectors, vectors, SOLVER_EPS, SOLVER_MAX_ITER)
        .ok_or_else(|| Error::NoConvergence("singular value decomposition".into()))
}

/// Singular values in non-increasing order.
pub fn singular_values(m: &Mat) -> Result<Vec<f64>> {
    ensure_finite(m, "singular_values")?;
    let mut s: Vec<f64> = svd(m, false)?.singular_values.iter().copied().collect();
    s.sort_by(|a, b| b.total_cmp(a));
    Ok(s)
}

/// Operator norm induced by the Euclidean norm (largest singular value).
pub fn spectral_norm(m: &Mat) -> Result<f64> {
    Ok(singular_values(m)?.first().copied().unwrap_or(0.0))
}

/// Euclidean norm of a vector.
pub fn norm(v: &Vector) -> f64 {
    v.norm()
}

/// Eigenvalues as `(re, im)` pairs.
pub fn eigenvalues(m: &Mat) -> Result<Vec<(f64, f64)>> {
    ensure_finite(m, "eigenvalues")?;
    ensure_square(m, "eigenvalues")?;
    let schur = Schur::try_new(m.clone(), SOLVER_EPS, SOLVER_MAX_ITER)
        .ok_or_else(|| Error::NoConvergence("Schur decomposition".into()))?;
    Ok(schur.complex_eigenvalues().iter().map(|z| (z.re, z.im)).collect())
}

/// Largest eigenvalue modulus.
pub fn spectral_radius(m: &Mat) -> Result<f64> {
    Ok(eigenvalues(m)?.into_iter().map(|(re, im)| re.hypot(im)).fold(0.0, f64::max))
}

/// Eigenvalues of the symmetric part of `m`, ascending.
pub fn symmetric_eigenvalues(m: &Mat) -> Result<Vec<f64>> {
    ensure_finite(m, "symmetric_eigenvalues")?;
    ensure_square(m, "symmetric_eigenvalues")?;
    let sym = (m + m.transpose()) * 0.5;
    let eig = SymmetricEigen::try_new(sym, SOLVER_EPS, SOLVER_MAX_ITER)
        .ok_or_else(|| Error::NoConvergence("symmetric eigendecomposition".into()))?;
    let mut vals: Vec<f64> = eig.eigenvalues.iter().copied().collect();
    vals.sort_by(|a, b| a.total_cmp(b));
    Ok(vals)
}

pub fn min_symmetric_eigenvalue(m: &Mat) -> Result<f64> {
    Ok(symmetric_eigenvalues(m)?[0])
}

/// Moore–Penrose pseudoinverse with relative cutoff [`PINV_RCOND`].
pub fn pinv(m: &Mat) -> Result<Mat> {
    ensure_finite(m, "pinv")?;
    let dec = svd(m, true)?;
    let smax = dec.singular_values.iter().copied().fold(0.0, f64::max);
    let cutoff = PINV_RCOND * smax;
    let u = dec.u.as_ref().expect("u requested");
    let v_t = dec.v_t.as_ref().expect("v_t requested");
    let mut out = Mat::zeros(m.ncols(), m.nrows());
    for (i, &s) in dec.singular_values.iter().enumerate() {
        if s > cutoff && s > 0.0 {
            // V Σ⁺ Uᵀ as a sum of rank-one terms.
            out += (v_t.row(i).transpose() * u.column(i).transpose()) / s;
        }
    }
    Ok(out)
}

/// Splits `w` into its component in the column space of `a` and the
/// orthogonal remainder, `w = w_par + w_perp`.
pub fn orthogonal_decompose(w: &Vector, a: &Mat) -> Result<(Vector, Vector)> {
    ensure_finite_vec(w, "orthogonal_decompose")?;
    ensure_finite(a, "orthogonal_decompose")?;
    if a.nrows() != w.len() {
        return invalid(format!("orthogonal_decompose: matrix has {} rows but vector has dim {}", a.nrows(), w.len()));
    }
    let w_par = a * (pinv(a)? * w);
    let w_perp = w - &w_par;
    Ok((w_par, w_perp))
}

/// Solves `Mᵀ P M − P = −Q` for symmetric `P`.
///
/// Sums the series `Σ (Mᵀ)ᵏ Q Mᵏ` by doubling: after `j` passes the partial
/// sum covers `2ʲ` terms. Summation stops once the newly added block has norm
/// below [`LYAPUNOV_TERM_TOL`].
pub fn solve_discrete_lyapunov(m: &Mat, q: &Mat) -> Result<Mat> {
    ensure_finite(m, "solve_discrete_lyapunov")?;
    ensure_finite(q, "solve_discrete_lyapunov")?;
    ensure_square(m, "solve_discrete_lyapunov")?;
    if q.shape() != m.shape() {
        return invalid("solve_discrete_lyapunov: M and Q must have the same shape");
    }
    let asym = (q - q.transpose()).amax();
    if asym > 1e-12 {
        return invalid(format!("solve_discrete_lyapunov: Q is not symmetric (asymmetry {asym:e})"));
    }
    let qmin = min_symmetric_eigenvalue(q)?;
    if qmin < -1e-12 {
        return invalid(format!("solve_discrete_lyapunov: Q is not positive semidefinite (min eigenvalue {qmin:e})"));
    }
    let radius = spectral_radius(m)?;
    if radius >= 1.0 {
        return Err(Error::Unstable { radius });
    }

    let mut p = q.clone();
    let mut a = m.clone();
    let mut terms = 1usize;
    loop {
        let added = a.transpose() * &p * &a;
        p += &added;
        terms *= 2;
        if added.amax() < LYAPUNOV_TERM_TOL || !added.iter().all(|x| x.is_finite()) {
            break;
        }
        if terms >= LYAPUNOV_MAX_TERMS {
            return Err(Error::NoConvergence(format!("Lyapunov series still above tolerance after {terms} terms")));
        }
        a = &a * &a;
    }
    if !p.iter().all(|x| x.is_finite()) {
        return Err(Error::NoConvergence("Lyapunov series overflowed".into()));
    }
    Ok((&p + p.transpose()) * 0.5)
}

/// `m^k` by repeated squaring.
pub fn matrix_power(m: &Mat, k: usize) -> Mat {
    let mut result = Mat::identity(m.nrows(), m.ncols());
    let mut base = m.clone();
    let mut e = k;
    while e > 0 {
        if e & 1 == 1 {
            result = &result * &base;
        }
        e >>= 1;
        if e > 0 {
            base = &base * &base;
        }
    }
    result
}

/// Envelope constant `C = max{1, max_{0≤k≤horizon} ‖Mᵏ‖ ρ⁻ᵏ}` so that
/// `‖Mᵏ‖ ≤ C ρᵏ` for every `k ≤ horizon`.
pub fn gelfand_constant(m: &Mat, rho: f64, horizon: usize) -> Result<f64> {
    ensure_finite(m, "gelfand_constant")?;
    ensure_square(m, "gelfand_constant")?;
    if !(rho > 0.0) || !rho.is_finite() {
        return invalid(format!("gelfand_constant: rho must be positive, got {rho}"));
    }
    // Powers of M/ρ avoid overflowing ρ⁻ᵏ.
    let scaled = m / rho;
    let mut power = Mat::identity(m.nrows(), m.ncols());
    let mut c = 1.0f64;
    for _ in 1..=horizon {
        power = &power * &scaled;
        c = c.max(spectral_norm(&power)?);
    }
    Ok(c)
}

/// Solves `a x = b` by LU, rejecting singular or badly conditioned systems.
pub fn solve(a: &Mat, b: &Vector) -> Result<Vector> {
    ensure_finite(a, "solve")?;
    ensure_square(a, "solve")?;
    let s = singular_values(a)?;
    let (smax, smin) = (s[0], *s.last().unwrap());
    if smax == 0.0 || smin <= 1e-12 * smax {
        return Err(Error::NearSingular);
    }
    a.clone().lu().solve(b).ok_or(Error::NearSingular)
}

/// Builds a matrix from row slices.
pub fn mat_from_rows(rows: &[Vec<f64>]) -> Result<Mat> {
    let nrows = rows.len();
    let ncols = rows.first().map_or(0, Vec::len);
    if nrows == 0 || ncols == 0 {
        return invalid("matrix must have at least one row and column");
    }
    if rows.iter().any(|r| r.len() != ncols) {
        return invalid("matrix rows have unequal lengths");
    }
    let m = Mat::from_fn(nrows, ncols, |i, j| rows[i][j]);
    ensure_finite(&m, "matrix")?;
    Ok(m)
}

pub fn mat_to_rows(m: &Mat) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

/// Stacks vectors into one column vector.
pub fn stack(parts: &[&Vector]) -> Vector {
    let total = parts.iter().map(|p| p.len()).sum();
    let mut out = Vector::zeros(total);
    let mut at = 0;
    for p in parts {
        out.rows_mut(at, p.len()).copy_from(p);
        at += p.len();
    }
    out
}
