//! Two-stage forward and inverse polar separable transform.
//!
//! Forward: an orthonormal DCT-II along every angular slice, then a unitary
//! DFT along every radial mode, with the `theta_0 = -pi` phase origin folded
//! in. The result is exactly `C_{n,m} = sum_{j,k} g[j,k] conj(K_{n,m}(k,j))`.
//! Inverse runs the adjoint stages in the opposite order: angular first,
//! then radial.

use std::f64::consts::PI;
use std::fmt;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;
use std::sync::Arc;

use num_complex::Complex64;
use rayon::prelude::*;
use rustdct::{DctPlanner, TransformType2And3};
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::bases::{angular_unchecked, radial_scale, radial_unchecked, KernelIndex};
use crate::error::{Error, Result};
use crate::polar_grid::{build_grid, PolarGrid, PolarImage};

/// Coefficient normalization.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Convention {
    /// Unweighted projection onto the orthonormal kernels; exactly invertible.
    #[default]
    Orthonormal,
    /// `1/(N_r N_theta) sum g conj(K) w_k` with Jacobian weights `w_k = r_k`.
    /// Analysis only.
    PaperLiteral,
}

impl Convention {
    pub fn as_str(self) -> &'static str {
        match self {
            Convention::Orthonormal => "orthonormal",
            Convention::PaperLiteral => "paper-literal",
        }
    }
}

impl fmt::Display for Convention {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Convention {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "orthonormal" => Ok(Convention::Orthonormal),
            "paper-literal" => Ok(Convention::PaperLiteral),
            other => Err(Error::InvalidArgument(format!("unknown convention {other:?}"))),
        }
    }
}

/// Full `N_r x N_theta` table of coefficients `C_{n,m}`, stored n-major
/// with `m` ascending from `-N_theta/2`.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientTable {
    grid: PolarGrid,
    values: Vec<Complex64>,
    convention: Convention,
}

impl CoefficientTable {
    pub fn zeros(grid: &PolarGrid, convention: Convention) -> Self {
        CoefficientTable {
            grid: grid.clone(),
            values: vec![Complex64::new(0.0, 0.0); grid.len()],
            convention,
        }
    }

    pub fn from_values(
        grid: &PolarGrid,
        values: Vec<Complex64>,
        convention: Convention,
    ) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} coefficients for a {}x{} grid",
                values.len(),
                grid.n_r(),
                grid.n_theta()
            )));
        }
        Ok(CoefficientTable {
            grid: grid.clone(),
            values,
            convention,
        })
    }

    pub fn grid(&self) -> &PolarGrid {
        &self.grid
    }

    pub fn convention(&self) -> Convention {
        self.convention
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    #[inline]
    fn offset(&self, n: usize, m: i64) -> usize {
        debug_assert!(KernelIndex::new(n, m).is_valid_for(&self.grid));
        n * self.grid.n_theta() + (m - self.grid.m_min()) as usize
    }

    /// Coefficient `C_{n,m}`. Panics when the index is outside the grid.
    pub fn get(&self, n: usize, m: i64) -> Complex64 {
        assert!(
            KernelIndex::new(n, m).is_valid_for(&self.grid),
            "coefficient ({n}, {m}) outside the table"
        );
        self.values[self.offset(n, m)]
    }

    pub fn set(&mut self, n: usize, m: i64, value: Complex64) {
        assert!(
            KernelIndex::new(n, m).is_valid_for(&self.grid),
            "coefficient ({n}, {m}) outside the table"
        );
        let off = self.offset(n, m);
        self.values[off] = value;
    }

    /// Coefficients of radial mode `n`, `m` ascending.
    pub fn row(&self, n: usize) -> &[Complex64] {
        let w = self.grid.n_theta();
        &self.values[n * w..(n + 1) * w]
    }

    /// All entries in storage order.
    pub fn iter(&self) -> impl Iterator<Item = (KernelIndex, Complex64)> + '_ {
        let w = self.grid.n_theta();
        let m_min = self.grid.m_min();
        self.values
            .iter()
            .enumerate()
            .map(move |(i, &c)| (KernelIndex::new(i / w, m_min + (i % w) as i64), c))
    }

    /// Little-endian container: magic `PSEPT1`, `N_r` and `N_theta` as u32,
    /// `R_max` and the convention tag as length-prefixed (u32) UTF-8
    /// strings, then `(re, im)` f64 pairs in storage order.
    pub fn to_bytes(&self) -> Vec<u8> {
        let r_max = self.grid.r_max().to_string();
        let tag = self.convention.as_str();
        let mut out = Vec::with_capacity(32 + r_max.len() + tag.len() + 16 * self.values.len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(self.grid.n_r() as u32).to_le_bytes());
        out.extend_from_slice(&(self.grid.n_theta() as u32).to_le_bytes());
        for s in [r_max.as_str(), tag] {
            out.extend_from_slice(&(s.len() as u32).to_le_bytes());
            out.extend_from_slice(s.as_bytes());
        }
        for c in &self.values {
            out.extend_from_slice(&c.re.to_le_bytes());
            out.extend_from_slice(&c.im.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut rd = ByteReader { bytes, pos: 0 };
        if rd.take(MAGIC.len())? != MAGIC {
            return Err(Error::Header("missing PSEPT1 magic".into()));
        }
        let n_r = rd.u32()? as usize;
        let n_theta = rd.u32()? as usize;
        let r_max_str = rd.string()?;
        let r_max: f64 = r_max_str
            .parse()
            .map_err(|_| Error::Header(format!("bad R_max {r_max_str:?}")))?;
        let convention: Convention = rd.string()?.parse()?;
        let grid = build_grid(n_r, n_theta, r_max)?;
        let expected = grid.len() * 16;
        let rest = &bytes[rd.pos..];
        if rest.len() < expected {
            return Err(Error::Truncated {
                expected,
                found: rest.len(),
            });
        }
        let values = rest[..expected]
            .chunks_exact(16)
            .map(|c| {
                let re = f64::from_le_bytes(c[..8].try_into().unwrap());
                let im = f64::from_le_bytes(c[8..].try_into().unwrap());
                Complex64::new(re, im)
            })
            .collect();
        CoefficientTable::from_values(&grid, values, convention)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()).map_err(|source| Error::Unwritable {
            path: path.to_path_buf(),
            source,
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|source| Error::Unreadable {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_bytes(&bytes)
    }

    /// `n,m,re,im` rows in storage order, with a header line.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "n,m,re,im")?;
        for (idx, c) in self.iter() {
            writeln!(out, "{},{},{},{}", idx.n, idx.m, c.re, c.im)?;
        }
        Ok(())
    }
}

const MAGIC: &[u8; 6] = b"PSEPT1";

struct ByteReader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> ByteReader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos + n;
        if end > self.bytes.len() {
            return Err(Error::Truncated {
                expected: end,
                found: self.bytes.len(),
            });
        }
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn string(&mut self) -> Result<String> {
        let len = self.u32()? as usize;
        let raw = self.take(len)?;
        String::from_utf8(raw.to_vec()).map_err(|_| Error::Header("non-UTF-8 header string".into()))
    }
}

/// Precomputed DCT/FFT plans for one grid. Cheap to clone and shareable
/// across threads.
#[derive(Clone)]
pub struct Transform {
    grid: PolarGrid,
    dct: Arc<dyn TransformType2And3<f64>>,
    fft: Arc<dyn Fft<f64>>,
    ifft: Arc<dyn Fft<f64>>,
}

impl fmt::Debug for Transform {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Transform")
            .field("n_r", &self.grid.n_r())
            .field("n_theta", &self.grid.n_theta())
            .finish()
    }
}

impl Transform {
    pub fn new(grid: &PolarGrid) -> Self {
        let dct = DctPlanner::new().plan_dct2(grid.n_r());
        let mut planner = FftPlanner::new();
        let fft = planner.plan_fft_forward(grid.n_theta());
        let ifft = planner.plan_fft_inverse(grid.n_theta());
        Transform {
            grid: grid.clone(),
            dct,
            fft,
            ifft,
        }
    }

    pub fn grid(&self) -> &PolarGrid {
        &self.grid
    }

    fn check_grid(&self, grid: &PolarGrid) -> Result<()> {
        if self.grid.same_shape(grid) {
            Ok(())
        } else {
            Err(Error::DimensionMismatch(format!(
                "transform planned for {}x{}, input is {}x{}",
                self.grid.n_r(),
                self.grid.n_theta(),
                grid.n_r(),
                grid.n_theta()
            )))
        }
    }

    pub fn forward(&self, polar: &PolarImage, convention: Convention) -> Result<CoefficientTable> {
        self.forward_complex(&polar.to_complex(), convention)
    }

    pub fn forward_complex(
        &self,
        polar: &PolarImage<Complex64>,
        convention: Convention,
    ) -> Result<CoefficientTable> {
        self.check_grid(polar.grid())?;
        let n_r = self.grid.n_r();
        let n_theta = self.grid.n_theta();
        if let Some(pos) = polar
            .samples()
            .iter()
            .position(|c| !c.re.is_finite() || !c.im.is_finite())
        {
            return Err(Error::NonFinite(format!("j={}, k={}", pos / n_r, pos % n_r)));
        }
        let weights = self.grid.weights();

        // Stage 1: radial DCT-II of every angular slice. Real and imaginary
        // parts are transformed separately.
        let mut stage1 = polar.samples().to_vec();
        stage1.par_chunks_mut(n_r).for_each(|slice| {
            if convention == Convention::PaperLiteral {
                for (v, &w) in slice.iter_mut().zip(weights) {
                    *v *= w;
                }
            }
            self.radial_analysis(slice);
        });

        // Stage 2: angular DFT of every radial mode.
        let scale = match convention {
            Convention::Orthonormal => 1.0 / (n_theta as f64).sqrt(),
            Convention::PaperLiteral => {
                1.0 / ((n_theta as f64).sqrt() * (n_r * n_theta) as f64)
            }
        };
        let half = n_theta / 2;
        let rows: Vec<Vec<Complex64>> = (0..n_r)
            .into_par_iter()
            .map(|n| {
                let mut column: Vec<Complex64> =
                    (0..n_theta).map(|j| stage1[j * n_r + n]).collect();
                self.fft.process(&mut column);
                // theta_j = -pi + 2 pi j / N, so exp(-i m theta_j) = (-1)^m exp(-2 pi i m j / N).
                (0..n_theta)
                    .map(|col| {
                        let m = col as i64 - half as i64;
                        let bin = m.rem_euclid(n_theta as i64) as usize;
                        let sign = if m % 2 == 0 { 1.0 } else { -1.0 };
                        column[bin] * (sign * scale)
                    })
                    .collect()
            })
            .collect();
        CoefficientTable::from_values(&self.grid, rows.concat(), convention)
    }

    pub fn inverse(&self, coeffs: &CoefficientTable) -> Result<PolarImage<Complex64>> {
        if coeffs.convention() != Convention::Orthonormal {
            return Err(Error::Convention(coeffs.convention().as_str()));
        }
        self.check_grid(coeffs.grid())?;
        let n_r = self.grid.n_r();
        let n_theta = self.grid.n_theta();
        let half = n_theta as i64 / 2;
        let scale = 1.0 / (n_theta as f64).sqrt();

        // Stage 1: angular synthesis of every radial mode.
        let columns: Vec<Vec<Complex64>> = (0..n_r)
            .into_par_iter()
            .map(|n| {
                let mut buf = vec![Complex64::new(0.0, 0.0); n_theta];
                for (col, &c) in coeffs.row(n).iter().enumerate() {
                    let m = col as i64 - half;
                    let bin = m.rem_euclid(n_theta as i64) as usize;
                    let sign = if m % 2 == 0 { 1.0 } else { -1.0 };
                    buf[bin] = c * sign;
                }
                self.ifft.process(&mut buf);
                for v in &mut buf {
                    *v *= scale;
                }
                buf
            })
            .collect();

        // Stage 2: radial synthesis of every angular slice.
        let mut samples = vec![Complex64::new(0.0, 0.0); self.grid.len()];
        samples
            .par_chunks_mut(n_r)
            .enumerate()
            .for_each(|(j, slice)| {
                for (n, v) in slice.iter_mut().enumerate() {
                    *v = columns[n][j];
                }
                self.radial_synthesis(slice);
            });
        PolarImage::new(self.grid.clone(), samples)
    }

    /// In-place orthonormal DCT-II of a complex slice.
    fn radial_analysis(&self, slice: &mut [Complex64]) {
        let n_r = slice.len();
        let mut re: Vec<f64> = slice.iter().map(|c| c.re).collect();
        let mut im: Vec<f64> = slice.iter().map(|c| c.im).collect();
        self.dct.process_dct2(&mut re);
        self.dct.process_dct2(&mut im);
        for (n, v) in slice.iter_mut().enumerate() {
            let lambda = radial_scale(n, n_r);
            *v = Complex64::new(re[n] * lambda, im[n] * lambda);
        }
    }

    /// In-place inverse of [`Transform::radial_analysis`] via DCT-III.
    fn radial_synthesis(&self, slice: &mut [Complex64]) {
        let n_r = slice.len();
        // rustdct's DCT-III halves the zeroth input.
        let prescale = |n: usize| {
            let lambda = radial_scale(n, n_r);
            if n == 0 {
                2.0 * lambda
            } else {
                lambda
            }
        };
        let mut re: Vec<f64> = slice.iter().enumerate().map(|(n, c)| c.re * prescale(n)).collect();
        let mut im: Vec<f64> = slice.iter().enumerate().map(|(n, c)| c.im * prescale(n)).collect();
        self.dct.process_dct3(&mut re);
        self.dct.process_dct3(&mut im);
        for (k, v) in slice.iter_mut().enumerate() {
            *v = Complex64::new(re[k], im[k]);
        }
    }
}

/// Forward transform of a real polar image.
pub fn forward(polar: &PolarImage, convention: Convention) -> Result<CoefficientTable> {
    Transform::new(polar.grid()).forward(polar, convention)
}

/// Inverse transform. Defined only for the orthonormal convention.
pub fn inverse(coeffs: &CoefficientTable) -> Result<PolarImage<Complex64>> {
    Transform::new(coeffs.grid()).inverse(coeffs)
}

/// Direct `O(N^2)`-per-coefficient summation of the forward transform.
/// Slow; kept as a reference for the fast path.
pub fn forward_direct(polar: &PolarImage, convention: Convention) -> Result<CoefficientTable> {
    let grid = polar.grid();
    let (n_r, n_theta) = (grid.n_r(), grid.n_theta());
    let mut table = CoefficientTable::zeros(grid, convention);
    let norm = match convention {
        Convention::Orthonormal => 1.0,
        Convention::PaperLiteral => 1.0 / (n_r * n_theta) as f64,
    };
    for n in 0..n_r {
        for m in grid.m_min()..=grid.m_max() {
            let mut acc = Complex64::new(0.0, 0.0);
            for j in 0..n_theta {
                let psi = angular_unchecked(m, j, n_theta).conj();
                for k in 0..n_r {
                    let w = match convention {
                        Convention::Orthonormal => 1.0,
                        Convention::PaperLiteral => grid.weights()[k],
                    };
                    acc += psi * (polar.get(j, k) * radial_unchecked(n, k, n_r) * w);
                }
            }
            table.set(n, m, acc * norm);
        }
    }
    Ok(table)
}

/// Direct summation of the inverse transform.
pub fn inverse_direct(coeffs: &CoefficientTable) -> Result<PolarImage<Complex64>> {
    if coeffs.convention() != Convention::Orthonormal {
        return Err(Error::Convention(coeffs.convention().as_str()));
    }
    let grid = coeffs.grid();
    let (n_r, n_theta) = (grid.n_r(), grid.n_theta());
    Ok(PolarImage::from_index_fn(grid, |j, k| {
        let mut acc = Complex64::new(0.0, 0.0);
        for (idx, c) in coeffs.iter() {
            acc += c * angular_unchecked(idx.m, j, n_theta) * radial_unchecked(idx.n, k, n_r);
        }
        acc
    }))
}

/// Zeroes every entry with `n > n_r_star` or `|m| > m_star`. The Nyquist
/// column `m = -N_theta/2` is always zeroed since `m_star <= N_theta/2 - 1`.
pub fn truncate(coeffs: &CoefficientTable, n_r_star: usize, m_star: usize) -> Result<CoefficientTable> {
    let grid = coeffs.grid();
    if n_r_star >= grid.n_r() {
        return Err(Error::InvalidArgument(format!(
            "radial cap {n_r_star} must be < N_r = {}",
            grid.n_r()
        )));
    }
    if m_star as i64 > grid.m_max() {
        return Err(Error::InvalidArgument(format!(
            "angular cap {m_star} must be <= N_theta/2 - 1 = {}",
            grid.m_max()
        )));
    }
    let zero = Complex64::new(0.0, 0.0);
    let values = coeffs
        .iter()
        .map(|(idx, c)| {
            if idx.n > n_r_star || idx.m.unsigned_abs() as usize > m_star {
                zero
            } else {
                c
            }
        })
        .collect();
    CoefficientTable::from_values(grid, values, coeffs.convention())
}

/// Applies the rotation phase `C_{n,m} exp(-i m alpha)`.
pub fn rotate_coefficients(coeffs: &CoefficientTable, alpha: f64) -> CoefficientTable {
    let values = coeffs
        .iter()
        .map(|(idx, c)| {
            if idx.m == 0 {
                c
            } else {
                c * Complex64::from_polar(1.0, -(idx.m as f64) * alpha)
            }
        })
        .collect();
    CoefficientTable {
        grid: coeffs.grid.clone(),
        values,
        convention: coeffs.convention,
    }
}

/// Rotation angle corresponding to a shift of `delta` angular rows.
pub fn lattice_angle(grid: &PolarGrid, delta: i64) -> f64 {
    2.0 * PI * delta as f64 / grid.n_theta() as f64
}

/// `sum |g[j,k]|^2`, unweighted.
pub fn energy_spatial(polar: &PolarImage) -> f64 {
    polar.samples().iter().map(|v| v * v).sum()
}

/// `sum |C_{n,m}|^2`.
pub fn energy_spectral(coeffs: &CoefficientTable) -> f64 {
    coeffs.values().iter().map(|c| c.norm_sqr()).sum()
}
