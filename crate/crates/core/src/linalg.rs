//! Small dense complex matrix helpers built on `nalgebra`.
//!
//! Everything here works on `DMatrix<Complex64>` of dimension 2 or 4. The
//! unitary helpers rely on the complex Schur form: for a normal matrix the
//! triangular factor is diagonal, so its diagonal holds the eigenvalues and the
//! unitary factor holds an orthonormal eigenbasis, including inside degenerate
//! eigenspaces.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;
use std::f64::consts::PI;

use crate::error::{Error, Result};

pub type C64 = Complex64;
pub type CMatrix = DMatrix<C64>;
pub type CVector = DVector<C64>;

pub const I: C64 = C64::new(0.0, 1.0);
pub const ONE: C64 = C64::new(1.0, 0.0);
pub const ZERO: C64 = C64::new(0.0, 0.0);

/// Eigenphases within this distance of pi make the logarithm ambiguous.
pub const BRANCH_TOLERANCE: f64 = 1e-9;

pub fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

/// Builds a matrix from rows.
pub fn cmat<const R: usize, const K: usize>(rows: [[C64; K]; R]) -> CMatrix {
    DMatrix::from_fn(R, K, |i, j| rows[i][j])
}

pub fn identity(dim: usize) -> CMatrix {
    DMatrix::identity(dim, dim)
}

/// The Pauli matrices `(sigma_x, sigma_y, sigma_z)`.
pub fn pauli() -> [CMatrix; 3] {
    [
        cmat([[ZERO, ONE], [ONE, ZERO]]),
        cmat([[ZERO, -I], [I, ZERO]]),
        cmat([[ONE, ZERO], [ZERO, -ONE]]),
    ]
}

/// `v . sigma` for an arbitrary Pauli triple.
pub fn dot_pauli(v: [f64; 3], set: &[CMatrix; 3]) -> CMatrix {
    &set[0] * c(v[0], 0.0) + &set[1] * c(v[1], 0.0) + &set[2] * c(v[2], 0.0)
}

/// Block matrix `[[a, b], [c, d]]` from equally sized square blocks.
pub fn block2(a: &CMatrix, b: &CMatrix, cc: &CMatrix, d: &CMatrix) -> CMatrix {
    let n = a.nrows();
    let mut out = DMatrix::zeros(2 * n, 2 * n);
    out.view_mut((0, 0), (n, n)).copy_from(a);
    out.view_mut((0, n), (n, n)).copy_from(b);
    out.view_mut((n, 0), (n, n)).copy_from(cc);
    out.view_mut((n, n), (n, n)).copy_from(d);
    out
}

/// Largest singular value.
pub fn op_norm(m: &CMatrix) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.clone()
        .svd(false, false)
        .singular_values
        .iter()
        .fold(0.0_f64, |acc, &s| acc.max(s))
}

/// Distance of `m` from the unitary group, measured as `max(|M^dag M - 1|, |M M^dag - 1|)`.
pub fn unitarity_defect(m: &CMatrix) -> f64 {
    let id = identity(m.nrows());
    let a = op_norm(&(m.adjoint() * m - &id));
    let b = op_norm(&(m * m.adjoint() - id));
    a.max(b)
}

/// Eigen-decomposition of a unitary (or any normal) matrix.
///
/// Returns eigenvalues and a unitary matrix whose columns are the matching
/// eigenvectors.
pub fn normal_eigen(m: &CMatrix) -> Result<(Vec<C64>, CMatrix)> {
    let schur = m
        .clone()
        .try_schur(1e-15, 10_000)
        .ok_or(Error::NoConvergence)?;
    let (q, t) = schur.unpack();
    let values = (0..t.nrows()).map(|i| t[(i, i)]).collect();
    Ok((values, q))
}

/// `exp(-i H t)` for Hermitian `H`.
pub fn expm_hermitian(h: &CMatrix, t: f64) -> CMatrix {
    let herm = (h + h.adjoint()) * c(0.5, 0.0);
    let eig = SymmetricEigen::new(herm);
    let phases = CVector::from_iterator(
        eig.eigenvalues.len(),
        eig.eigenvalues.iter().map(|&e| C64::from_polar(1.0, -e * t)),
    );
    let v = &eig.eigenvectors;
    v * CMatrix::from_diagonal(&phases) * v.adjoint()
}

/// Hermitian `H` with `exp(-i H) = u`, principal branch.
///
/// Eigenphases are taken in `(-pi, pi)`; a phase within [`BRANCH_TOLERANCE`]
/// of `pi` is rejected.
pub fn log_unitary(u: &CMatrix) -> Result<CMatrix> {
    let (values, q) = normal_eigen(u)?;
    let mut thetas = Vec::with_capacity(values.len());
    for z in values {
        let phase = z.arg();
        if PI - phase.abs() < BRANCH_TOLERANCE {
            return Err(Error::BranchAmbiguity(phase));
        }
        // u = exp(-i theta) on this eigenvector
        thetas.push(c(-phase, 0.0));
    }
    let d = CMatrix::from_diagonal(&CVector::from_vec(thetas));
    let h = &q * d * q.adjoint();
    Ok((&h + h.adjoint()) * c(0.5, 0.0))
}

/// `u^t` for unitary `u` and real `t`, taking the principal eigenphase.
pub fn unitary_power(u: &CMatrix, t: f64) -> Result<CMatrix> {
    let (values, q) = normal_eigen(u)?;
    let d = CVector::from_iterator(
        values.len(),
        values.iter().map(|z| C64::from_polar(1.0, z.arg() * t)),
    );
    Ok(&q * CMatrix::from_diagonal(&d) * q.adjoint())
}

/// Rank with a relative singular-value cutoff.
pub fn rank(m: &CMatrix, tol: f64) -> usize {
    let sv = m.clone().svd(false, false).singular_values;
    let top = sv.iter().fold(0.0_f64, |a, &s| a.max(s));
    sv.iter().filter(|&&s| s > tol * top.max(1e-300)).count()
}

/// Fixes the global phase of `v` so its largest-magnitude entry is real and
/// positive. Ties go to the first index.
pub fn fix_gauge(v: &mut CVector) {
    let mut best = 0;
    let mut best_mag = -1.0;
    for (i, z) in v.iter().enumerate() {
        // strict comparison keeps the first index on ties
        if z.norm() > best_mag + 1e-12 {
            best = i;
            best_mag = z.norm();
        }
    }
    if best_mag > 0.0 {
        let phase = v[best] / v[best].norm();
        let conj = phase.conj();
        for z in v.iter_mut() {
            *z *= conj;
        }
        v[best] = c(v[best].re, 0.0);
    }
}

pub fn norm3(v: [f64; 3]) -> f64 {
    (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt()
}

pub fn dot3(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

pub fn cross3(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

pub fn sub3(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

pub fn add3(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

pub fn scale3(s: f64, a: [f64; 3]) -> [f64; 3] {
    [s * a[0], s * a[1], s * a[2]]
}
