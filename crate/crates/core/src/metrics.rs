//! Reconstruction quality, feature distances and conditioning.

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::FeatureVector;
use crate::image_io::GrayImage;
use crate::polar_grid::PolarImage;

/// Which pixels enter an image comparison.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mask {
    #[default]
    Full,
    /// Only pixels whose centers lie in the inscribed disk.
    Disk,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QualityReport {
    pub rmse: f64,
    /// `+inf` when the images are identical; serialized as the string `"inf"`.
    #[serde(rename = "psnr_db", with = "psnr_serde")]
    pub psnr: f64,
    pub max_abs: f64,
    pub n_pixels: usize,
}

mod psnr_serde {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    #[derive(Serialize, Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Num(f64),
        Text(String),
    }

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            Repr::Num(*v).serialize(s)
        } else {
            Repr::Text(super::format_psnr(*v)).serialize(s)
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        match Repr::deserialize(d)? {
            Repr::Num(v) => Ok(v),
            Repr::Text(t) => t.parse().map_err(serde::de::Error::custom),
        }
    }
}

/// PSNR as text; `inf` for the identical-image sentinel.
pub fn format_psnr(v: f64) -> String {
    if v == f64::INFINITY {
        "inf".into()
    } else {
        v.to_string()
    }
}

impl QualityReport {
    pub const CSV_HEADER: &'static str = "rmse,psnr_db,max_abs,n_pixels";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{}",
            self.rmse,
            format_psnr(self.psnr),
            self.max_abs,
            self.n_pixels
        )
    }
}

fn paired_errors(a: &GrayImage, b: &GrayImage, mask: Mask) -> Result<Vec<f64>> {
    if a.width() != b.width() || a.height() != b.height() {
        return Err(Error::DimensionMismatch(format!(
            "{}x{} vs {}x{}",
            a.width(),
            a.height(),
            b.width(),
            b.height()
        )));
    }
    let mut out = Vec::with_capacity(a.pixels().len());
    for y in 0..a.height() {
        for x in 0..a.width() {
            if mask == Mask::Disk && !a.in_disk(x, y) {
                continue;
            }
            out.push(a.get(x, y) - b.get(x, y));
        }
    }
    Ok(out)
}

fn mse(diffs: &[f64]) -> f64 {
    if diffs.is_empty() {
        return 0.0;
    }
    diffs.iter().map(|d| d * d).sum::<f64>() / diffs.len() as f64
}

pub fn rmse(a: &GrayImage, b: &GrayImage, mask: Mask) -> Result<f64> {
    Ok(mse(&paired_errors(a, b, mask)?).sqrt())
}

/// `10 log10(peak^2 / MSE)`; `+inf` when the MSE is zero.
pub fn psnr(a: &GrayImage, b: &GrayImage, peak: f64, mask: Mask) -> Result<f64> {
    Ok(psnr_from_mse(mse(&paired_errors(a, b, mask)?), peak))
}

pub fn psnr_from_mse(mse: f64, peak: f64) -> f64 {
    if mse == 0.0 {
        f64::INFINITY
    } else {
        10.0 * (peak * peak / mse).log10()
    }
}

pub fn quality(a: &GrayImage, b: &GrayImage, peak: f64, mask: Mask) -> Result<QualityReport> {
    let diffs = paired_errors(a, b, mask)?;
    let m = mse(&diffs);
    Ok(QualityReport {
        rmse: m.sqrt(),
        psnr: psnr_from_mse(m, peak),
        max_abs: diffs.iter().map(|d| d.abs()).fold(0.0, f64::max),
        n_pixels: diffs.len(),
    })
}

/// `||v1 - v2||_2`, optionally after scaling each to unit norm (zero
/// vectors are left unscaled).
pub fn euclidean_distance(v1: &FeatureVector, v2: &FeatureVector, normalize: bool) -> Result<f64> {
    euclidean_distance_slices(&v1.values, &v2.values, normalize)
}

pub fn euclidean_distance_slices(a: &[f64], b: &[f64], normalize: bool) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch(format!(
            "feature lengths {} and {}",
            a.len(),
            b.len()
        )));
    }
    let scale = |v: &[f64]| {
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if normalize && n > 0.0 {
            1.0 / n
        } else {
            1.0
        }
    };
    let (sa, sb) = (scale(a), scale(b));
    Ok(a.iter()
        .zip(b)
        .map(|(x, y)| (x * sa - y * sb).powi(2))
        .sum::<f64>()
        .sqrt())
}

/// Largest matrix side accepted by [`condition_number`].
pub const MAX_SVD_SIDE: usize = 4096;

/// Singular values of `matrix`, descending.
pub fn singular_values(matrix: &DMatrix<Complex64>) -> Result<Vec<f64>> {
    if matrix.nrows() == 0 || matrix.ncols() == 0 {
        return Err(Error::InvalidArgument("empty matrix".into()));
    }
    if matrix.nrows() > MAX_SVD_SIDE || matrix.ncols() > MAX_SVD_SIDE {
        return Err(Error::InvalidArgument(format!(
            "{}x{} matrix exceeds the {MAX_SVD_SIDE} validation limit",
            matrix.nrows(),
            matrix.ncols()
        )));
    }
    let mut sv: Vec<f64> = matrix.clone().singular_values().iter().copied().collect();
    sv.sort_by(|a, b| b.total_cmp(a));
    Ok(sv)
}

/// `sigma_max / sigma_min`; `+inf` when `sigma_min < 1e-300`.
pub fn condition_number(matrix: &DMatrix<Complex64>) -> Result<f64> {
    let sv = singular_values(matrix)?;
    let max = sv[0];
    let min = *sv.last().unwrap();
    if min < 1e-300 {
        Ok(f64::INFINITY)
    } else {
        Ok(max / min)
    }
}

/// Max entrywise `|gram - I|`.
pub fn orthogonality_error(gram: &DMatrix<Complex64>) -> Result<f64> {
    if gram.nrows() != gram.ncols() {
        return Err(Error::DimensionMismatch(format!(
            "Gram matrix must be square, got {}x{}",
            gram.nrows(),
            gram.ncols()
        )));
    }
    let mut worst: f64 = 0.0;
    for i in 0..gram.nrows() {
        for j in 0..gram.ncols() {
            let target = if i == j { 1.0 } else { 0.0 };
            worst = worst.max((gram[(i, j)] - target).norm());
        }
    }
    Ok(worst)
}

/// `sum |g[j,k]|^2 r_k`, the Jacobian-weighted (disk-measure) energy.
pub fn weighted_energy(polar: &PolarImage) -> f64 {
    let weights = polar.grid().weights();
    let n_r = polar.grid().n_r();
    polar
        .samples()
        .iter()
        .enumerate()
        .map(|(i, v)| v * v * weights[i % n_r])
        .sum()
}
