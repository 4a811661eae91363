//! Image-level convenience: resample, transform, select, reconstruct.

use num_complex::Complex64;

use crate::error::Result;
use crate::features::{
    complex_parts, magnitude_invariants, select, FeatureVector, RuleKind, SelectOptions,
    SelectionRule,
};
use crate::image_io::GrayImage;
use crate::polar_grid::{build_grid, cart_to_polar, default_dims, polar_to_cart, PolarGrid};
use crate::transform::{CoefficientTable, Convention, Transform};

/// Zeroes every coefficient not admitted by `rule`.
pub fn keep_selected(coeffs: &CoefficientTable, rule: SelectionRule, options: SelectOptions) -> CoefficientTable {
    let nyquist = coeffs.grid().m_min();
    let zero = Complex64::new(0.0, 0.0);
    let values = coeffs
        .iter()
        .map(|(idx, c)| {
            let keep = rule.admits(idx.n as i64, idx.m) && (options.include_nyquist || idx.m != nyquist);
            if keep {
                c
            } else {
                zero
            }
        })
        .collect();
    CoefficientTable::from_values(coeffs.grid(), values, coeffs.convention())
        .expect("same shape as the input table")
}

/// A planned transform for images of one size.
#[derive(Debug, Clone)]
pub struct ImagePipeline {
    transform: Transform,
}

impl ImagePipeline {
    pub fn new(grid: &PolarGrid) -> Self {
        ImagePipeline {
            transform: Transform::new(grid),
        }
    }

    /// Pipeline on the default grid for an `n x n` image.
    pub fn for_size(n: usize, r_max: f64) -> Result<Self> {
        let (n_r, n_theta) = default_dims(n);
        Ok(Self::new(&build_grid(n_r, n_theta, r_max)?))
    }

    pub fn grid(&self) -> &PolarGrid {
        self.transform.grid()
    }

    pub fn transform(&self) -> &Transform {
        &self.transform
    }

    pub fn coefficients(&self, img: &GrayImage, convention: Convention) -> Result<CoefficientTable> {
        let polar = cart_to_polar(img, self.grid())?;
        self.transform.forward(&polar, convention)
    }

    pub fn magnitude_features(&self, img: &GrayImage, n_max: usize, k_max: u32) -> Result<FeatureVector> {
        magnitude_invariants(&self.coefficients(img, Convention::Orthonormal)?, n_max, k_max)
    }

    pub fn complex_features(
        &self,
        img: &GrayImage,
        rule: SelectionRule,
        options: SelectOptions,
    ) -> Result<FeatureVector> {
        let coeffs = self.coefficients(img, Convention::Orthonormal)?;
        Ok(complex_parts(&select(&coeffs, rule, options), Some(rule)))
    }

    /// Reconstruction from the pyramidal selection `n + |m| <= c`, rendered
    /// back onto a raster of the input size (exterior 0).
    pub fn reconstruct(&self, img: &GrayImage, c: u32) -> Result<GrayImage> {
        let coeffs = self.coefficients(img, Convention::Orthonormal)?;
        let kept = keep_selected(
            &coeffs,
            SelectionRule::new(RuleKind::Pyramidal, c),
            SelectOptions::default(),
        );
        let polar = self.transform.inverse(&kept)?.re();
        Ok(polar_to_cart(&polar, img.width(), img.height(), 0.0))
    }
}
