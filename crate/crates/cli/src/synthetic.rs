//! Smooth generated test images, used when a run has no input files.

use std::f64::consts::PI;

use psept::{GrayImage, ValueRange};

/// A smooth, non-symmetric image in `[0, 1]`. Different `variant`s move the
/// features around deterministically.
pub fn smooth_image(size: usize, variant: u64) -> GrayImage {
    // Low-discrepancy parameters: consecutive variants stay well apart.
    let t = variant as f64 * 0.618_033_988_749_895;
    let frac = |x: f64| x - x.floor();
    let a = 1.1 + frac(7.0 * t);
    let b = 0.7 + frac(3.0 * t);
    let phase = 2.0 * PI * frac(5.0 * t);
    let bx = 0.6 * frac(11.0 * t) - 0.3;
    let by = 0.6 * frac(13.0 * t) - 0.3;
    let c = (size as f64 - 1.0) / 2.0;
    GrayImage::from_fn(size, size, ValueRange::UNIT, |x, y| {
        let u = (x as f64 - c) / c;
        let v = (y as f64 - c) / c;
        let blob = (-((u - bx).powi(2) + (v - by).powi(2)) / 0.18).exp();
        0.5 + 0.2 * (a * u + phase).sin() * (b * v).cos() + 0.15 * blob + 0.05 * u * v
    })
}
