//! Radial DCT-II basis, Fourier angular basis and their tensor product.
//!
//! `Phi_n(k) = lambda_n cos(n pi (k + 1/2) / N_r)` with `lambda_0 = sqrt(1/N_r)`
//! and `lambda_n = sqrt(2/N_r)` otherwise, so `{Phi_n}` is orthonormal over
//! `k = 0..N_r`. `Psi_m(j) = exp(i m theta_j) / sqrt(N_theta)`.
//! The kernel `K_{n,m}(k, j) = Phi_n(k) Psi_m(j)` is orthonormal over the
//! full lattice.

use std::collections::HashSet;
use std::f64::consts::PI;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::polar_grid::PolarGrid;

/// Largest lattice for which kernel matrices may be materialized.
pub const MAX_KERNEL_MATRIX_SIZE: usize = 4096;

/// Radial order `n` and signed angular order `m`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct KernelIndex {
    pub n: usize,
    pub m: i64,
}

impl KernelIndex {
    pub fn new(n: usize, m: i64) -> Self {
        KernelIndex { n, m }
    }

    pub fn is_valid_for(&self, grid: &PolarGrid) -> bool {
        self.n < grid.n_r() && self.m >= grid.m_min() && self.m <= grid.m_max()
    }
}

/// Every valid index of `grid`, ascending `n` then ascending `m`.
pub fn all_indices(grid: &PolarGrid) -> Vec<KernelIndex> {
    let mut out = Vec::with_capacity(grid.len());
    for n in 0..grid.n_r() {
        for m in grid.m_min()..=grid.m_max() {
            out.push(KernelIndex::new(n, m));
        }
    }
    out
}

/// DCT-II normalization `lambda_n`.
#[inline]
pub fn radial_scale(n: usize, n_r: usize) -> f64 {
    if n == 0 {
        (1.0 / n_r as f64).sqrt()
    } else {
        (2.0 / n_r as f64).sqrt()
    }
}

/// `Phi_n(k)`; depends on the integer index `k`, not on the radius `r_k`.
pub fn radial_basis(n: usize, k: usize, n_r: usize) -> Result<f64> {
    if n >= n_r || k >= n_r {
        return Err(Error::IndexOutOfRange(format!(
            "radial basis n={n}, k={k} with N_r={n_r}"
        )));
    }
    Ok(radial_unchecked(n, k, n_r))
}

#[inline]
pub(crate) fn radial_unchecked(n: usize, k: usize, n_r: usize) -> f64 {
    radial_scale(n, n_r) * (n as f64 * PI * (k as f64 + 0.5) / n_r as f64).cos()
}

/// `Psi_m(theta_j)` with `theta_j = -pi + 2 pi j / N_theta`.
pub fn angular_basis(m: i64, j: usize, n_theta: usize) -> Result<Complex64> {
    let half = n_theta as i64 / 2;
    if !n_theta.is_multiple_of(2) || j >= n_theta || m < -half || m > half - 1 {
        return Err(Error::IndexOutOfRange(format!(
            "angular basis m={m}, j={j} with N_theta={n_theta}"
        )));
    }
    Ok(angular_unchecked(m, j, n_theta))
}

#[inline]
pub(crate) fn angular_unchecked(m: i64, j: usize, n_theta: usize) -> Complex64 {
    let theta = -PI + 2.0 * PI * j as f64 / n_theta as f64;
    Complex64::from_polar(1.0 / (n_theta as f64).sqrt(), m as f64 * theta)
}

/// `K_{n,m}(k, j) = Phi_n(k) * Psi_m(j)`.
pub fn kernel(idx: KernelIndex, k: usize, j: usize, grid: &PolarGrid) -> Result<Complex64> {
    if !idx.is_valid_for(grid) {
        return Err(Error::IndexOutOfRange(format!(
            "kernel (n={}, m={}) on a {}x{} grid",
            idx.n,
            idx.m,
            grid.n_r(),
            grid.n_theta()
        )));
    }
    let phi = radial_basis(idx.n, k, grid.n_r())?;
    let psi = angular_basis(idx.m, j, grid.n_theta())?;
    Ok(psi * phi)
}

/// Explicit kernel matrix: row `i` is `K_{orders[i]}` flattened with `j`
/// outer and `k` inner, matching the storage order of a polar image.
/// Only for validation-scale lattices.
pub fn build_kernel_matrix(grid: &PolarGrid, orders: &[KernelIndex]) -> Result<DMatrix<Complex64>> {
    if orders.is_empty() {
        return Err(Error::InvalidArgument("no kernel orders given".into()));
    }
    if grid.len() > MAX_KERNEL_MATRIX_SIZE {
        return Err(Error::InvalidArgument(format!(
            "lattice of {} points exceeds the validation limit {MAX_KERNEL_MATRIX_SIZE}",
            grid.len()
        )));
    }
    let mut seen = HashSet::with_capacity(orders.len());
    for idx in orders {
        if !idx.is_valid_for(grid) {
            return Err(Error::IndexOutOfRange(format!(
                "kernel (n={}, m={}) on a {}x{} grid",
                idx.n,
                idx.m,
                grid.n_r(),
                grid.n_theta()
            )));
        }
        if !seen.insert(*idx) {
            return Err(Error::DuplicateIndex { n: idx.n, m: idx.m });
        }
    }
    let n_r = grid.n_r();
    let n_theta = grid.n_theta();
    Ok(DMatrix::from_fn(orders.len(), grid.len(), |row, col| {
        let idx = orders[row];
        let (j, k) = (col / n_r, col % n_r);
        angular_unchecked(idx.m, j, n_theta) * radial_unchecked(idx.n, k, n_r)
    }))
}
