//! The discrete polar lattice and Cartesian <-> polar resampling.
//!
//! Radii are `r_k = k/(N_r-1) * R_max` and angles `theta_j = -pi + 2*pi*j/N_theta`.
//! The radial basis in [`crate::bases`] depends only on the integer index `k`,
//! not on `r_k`; the lattice positions matter only when resampling.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image_io::{BitDepth, GrayImage, PgmRaster, ValueRange};

/// Default outer radius, as a fraction of the inscribed disk.
pub const DEFAULT_R_MAX: f64 = 0.999;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolarGrid {
    n_r: usize,
    n_theta: usize,
    r_max: f64,
    radii: Vec<f64>,
    thetas: Vec<f64>,
}

impl PolarGrid {
    pub fn n_r(&self) -> usize {
        self.n_r
    }

    pub fn n_theta(&self) -> usize {
        self.n_theta
    }

    pub fn r_max(&self) -> f64 {
        self.r_max
    }

    pub fn radii(&self) -> &[f64] {
        &self.radii
    }

    pub fn thetas(&self) -> &[f64] {
        &self.thetas
    }

    /// Jacobian weights `w_k = r_k`.
    pub fn weights(&self) -> &[f64] {
        &self.radii
    }

    /// Number of lattice points, `N_r * N_theta`.
    pub fn len(&self) -> usize {
        self.n_r * self.n_theta
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Smallest signed angular order, `-N_theta/2` (the Nyquist mode).
    pub fn m_min(&self) -> i64 {
        -(self.n_theta as i64 / 2)
    }

    /// Largest signed angular order, `N_theta/2 - 1`.
    pub fn m_max(&self) -> i64 {
        self.n_theta as i64 / 2 - 1
    }

    /// Same dimensions and radius.
    pub fn same_shape(&self, other: &PolarGrid) -> bool {
        self.n_r == other.n_r && self.n_theta == other.n_theta && self.r_max == other.r_max
    }
}

/// Builds the lattice. `n_theta` must be even so that signed angular orders
/// `-N_theta/2 ..= N_theta/2 - 1` pair up.
pub fn build_grid(n_r: usize, n_theta: usize, r_max: f64) -> Result<PolarGrid> {
    if n_r < 2 {
        return Err(Error::InvalidArgument(format!("N_r must be >= 2, got {n_r}")));
    }
    if n_theta < 2 || !n_theta.is_multiple_of(2) {
        return Err(Error::InvalidArgument(format!(
            "N_theta must be even and >= 2, got {n_theta}"
        )));
    }
    if !(r_max > 0.0 && r_max <= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "R_max must lie in (0, 1], got {r_max}"
        )));
    }
    let last = (n_r - 1) as f64;
    let radii = (0..n_r)
        .map(|k| {
            if k == n_r - 1 {
                r_max
            } else {
                k as f64 / last * r_max
            }
        })
        .collect();
    let thetas = (0..n_theta)
        .map(|j| -PI + 2.0 * PI * j as f64 / n_theta as f64)
        .collect();
    Ok(PolarGrid {
        n_r,
        n_theta,
        r_max,
        radii,
        thetas,
    })
}

/// Grid dimensions used when none are configured for an `n x n` image:
/// `N_r = n` and `N_theta` the smallest multiple of four `>= ceil(pi * n)`.
///
/// The multiple of four makes quarter turns of the image exact cyclic
/// shifts of the angular rows.
pub fn default_dims(n: usize) -> (usize, usize) {
    let perimeter = (PI * n as f64).ceil() as usize;
    let n_theta = perimeter.div_ceil(4).max(1) * 4;
    (n.max(2), n_theta)
}

/// Samples on a polar lattice, stored with angular rows: entry `[j, k]` is
/// `g(theta_j, r_k)` at offset `j * N_r + k`.
#[derive(Debug, Clone, PartialEq)]
pub struct PolarImage<T = f64> {
    grid: PolarGrid,
    samples: Vec<T>,
}

impl<T: Copy> PolarImage<T> {
    pub fn new(grid: PolarGrid, samples: Vec<T>) -> Result<Self> {
        if samples.len() != grid.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} samples for a {}x{} polar grid",
                samples.len(),
                grid.n_theta(),
                grid.n_r()
            )));
        }
        Ok(PolarImage { grid, samples })
    }

    /// Evaluates `f(theta_j, r_k)` on every lattice point.
    pub fn from_fn(grid: &PolarGrid, mut f: impl FnMut(f64, f64) -> T) -> Self {
        let mut samples = Vec::with_capacity(grid.len());
        for &theta in grid.thetas() {
            for &r in grid.radii() {
                samples.push(f(theta, r));
            }
        }
        PolarImage {
            grid: grid.clone(),
            samples,
        }
    }

    /// Builds from integer lattice indices: `f(j, k)`.
    pub fn from_index_fn(grid: &PolarGrid, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut samples = Vec::with_capacity(grid.len());
        for j in 0..grid.n_theta() {
            for k in 0..grid.n_r() {
                samples.push(f(j, k));
            }
        }
        PolarImage {
            grid: grid.clone(),
            samples,
        }
    }

    pub fn grid(&self) -> &PolarGrid {
        &self.grid
    }

    pub fn samples(&self) -> &[T] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<T> {
        self.samples
    }

    #[inline]
    pub fn get(&self, j: usize, k: usize) -> T {
        self.samples[j * self.grid.n_r() + k]
    }

    /// Angular slice `j` (all radii).
    pub fn row(&self, j: usize) -> &[T] {
        let n_r = self.grid.n_r();
        &self.samples[j * n_r..(j + 1) * n_r]
    }

    /// Cyclic shift of the angular rows: `out[j] = self[(j - delta) mod N_theta]`.
    /// On the lattice this is an exact rotation by `2*pi*delta/N_theta`.
    pub fn shift_rows(&self, delta: i64) -> Self {
        let n_theta = self.grid.n_theta() as i64;
        let n_r = self.grid.n_r();
        let mut samples = Vec::with_capacity(self.samples.len());
        for j in 0..n_theta {
            let src = (j - delta).rem_euclid(n_theta) as usize;
            samples.extend_from_slice(&self.samples[src * n_r..(src + 1) * n_r]);
        }
        PolarImage {
            grid: self.grid.clone(),
            samples,
        }
    }

    pub fn map<U: Copy>(&self, f: impl Fn(T) -> U) -> PolarImage<U> {
        PolarImage {
            grid: self.grid.clone(),
            samples: self.samples.iter().map(|&v| f(v)).collect(),
        }
    }
}

impl PolarImage<Complex64> {
    pub fn re(&self) -> PolarImage<f64> {
        self.map(|c| c.re)
    }

    pub fn im(&self) -> PolarImage<f64> {
        self.map(|c| c.im)
    }

    pub fn max_abs_imag(&self) -> f64 {
        self.samples.iter().map(|c| c.im.abs()).fold(0.0, f64::max)
    }
}

impl PolarImage<f64> {
    pub fn to_complex(&self) -> PolarImage<Complex64> {
        self.map(|v| Complex64::new(v, 0.0))
    }

    /// Writes the samples as a PGM raster (width `N_r`, height `N_theta`),
    /// quantized from `range`. Grid parameters and the range go into header
    /// comments as exact decimal strings.
    pub fn to_pgm(&self, range: ValueRange, depth: BitDepth) -> PgmRaster {
        let img = GrayImage::new(
            self.grid.n_r(),
            self.grid.n_theta(),
            self.samples.clone(),
            range,
        )
        .expect("polar image shape is consistent");
        let comments = vec![
            "psept-polar".to_string(),
            format!("N_r={}", self.grid.n_r()),
            format!("N_theta={}", self.grid.n_theta()),
            format!("R_max={}", self.grid.r_max()),
            format!("range_lo={}", range.lo),
            format!("range_hi={}", range.hi),
        ];
        PgmRaster::quantize(&img, depth, comments)
    }

    /// Inverse of [`PolarImage::to_pgm`] up to quantization.
    pub fn from_pgm(raster: &PgmRaster) -> Result<Self> {
        let field = |name: &str| -> Result<String> {
            let prefix = format!("{name}=");
            raster
                .comments
                .iter()
                .find_map(|c| c.strip_prefix(&prefix).map(str::to_string))
                .ok_or_else(|| Error::Header(format!("polar PGM lacks {name} comment")))
        };
        let parse_usize = |name: &str| -> Result<usize> {
            let v = field(name)?;
            v.parse()
                .map_err(|_| Error::Header(format!("{name} is not an integer: {v:?}")))
        };
        let parse_f64 = |name: &str| -> Result<f64> {
            let v = field(name)?;
            v.parse()
                .map_err(|_| Error::Header(format!("{name} is not a number: {v:?}")))
        };
        let n_r = parse_usize("N_r")?;
        let n_theta = parse_usize("N_theta")?;
        if raster.width != n_r || raster.height != n_theta {
            return Err(Error::DimensionMismatch(format!(
                "raster {}x{} does not match N_r={n_r}, N_theta={n_theta}",
                raster.width, raster.height
            )));
        }
        let grid = build_grid(n_r, n_theta, parse_f64("R_max")?)?;
        let lo = parse_f64("range_lo")?;
        let hi = parse_f64("range_hi")?;
        let scale = (hi - lo) / raster.maxval as f64;
        let samples = raster
            .samples
            .iter()
            .map(|&s| lo + s as f64 * scale)
            .collect();
        PolarImage::new(grid, samples)
    }
}

/// Resamples `img` onto `grid` by bilinear interpolation.
///
/// Lattice point `(r_k, theta_j)` maps to the pixel position
/// `(c_x + r_k s cos theta_j, c_y + r_k s sin theta_j)` where `s` is the
/// half-pixel-inset inscribed radius, so nothing outside the disk is read.
pub fn cart_to_polar(img: &GrayImage, grid: &PolarGrid) -> Result<PolarImage> {
    if img.width() < 2 || img.height() < 2 {
        return Err(Error::InvalidArgument(format!(
            "cannot resample a {}x{} image",
            img.width(),
            img.height()
        )));
    }
    let (cx, cy) = img.center();
    let s = img.disk_radius();
    let trig: Vec<(f64, f64)> = grid.thetas().iter().map(|t| t.sin_cos()).collect();
    let mut samples = Vec::with_capacity(grid.len());
    for &(sin, cos) in &trig {
        for &r in grid.radii() {
            let x = cx + r * s * cos;
            let y = cy + r * s * sin;
            let v = img
                .sample_bilinear(x, y)
                .expect("disk points lie inside the raster");
            samples.push(v);
        }
    }
    PolarImage::new(grid.clone(), samples)
}

/// Renders a polar image back onto a `width x height` raster. Pixels
/// outside the inscribed disk take `fill`. Angular interpolation wraps;
/// radial interpolation clamps at the outermost ring.
pub fn polar_to_cart(polar: &PolarImage, width: usize, height: usize, fill: f64) -> GrayImage {
    let grid = polar.grid();
    let n_r = grid.n_r();
    let n_theta = grid.n_theta();
    let cx = (width as f64 - 1.0) * 0.5;
    let cy = (height as f64 - 1.0) * 0.5;
    let s = width.min(height) as f64 * 0.5 - 0.5;
    let radial_scale = (n_r - 1) as f64 / grid.r_max();
    let angular_scale = n_theta as f64 / (2.0 * PI);
    GrayImage::from_fn(width, height, ValueRange::UNIT, |x, y| {
        let dx = x as f64 - cx;
        let dy = y as f64 - cy;
        let d2 = dx * dx + dy * dy;
        if d2 > s * s || s <= 0.0 {
            return fill;
        }
        let rho = d2.sqrt() / s;
        let fk = (rho * radial_scale).min((n_r - 1) as f64);
        let k0 = (fk.floor() as usize).min(n_r - 2);
        let tk = fk - k0 as f64;
        let theta = dy.atan2(dx);
        let fj = ((theta + PI) * angular_scale).rem_euclid(n_theta as f64);
        let j0 = (fj.floor() as usize) % n_theta;
        let j1 = (j0 + 1) % n_theta;
        let tj = fj - fj.floor();
        let lerp_row = |j: usize| polar.get(j, k0) * (1.0 - tk) + polar.get(j, k0 + 1) * tk;
        lerp_row(j0) * (1.0 - tj) + lerp_row(j1) * tj
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::image_io::{rotate_image, PgmEncoding};

    #[test]
    fn small_grid_endpoints() {
        let g = build_grid(2, 4, 1.0).unwrap();
        assert_eq!(g.radii(), &[0.0, 1.0]);
        assert_eq!(g.thetas(), &[-PI, -PI / 2.0, 0.0, PI / 2.0]);
        assert_eq!(g.weights(), g.radii());
    }

    #[test]
    fn default_outer_radius() {
        let g = build_grid(32, 64, DEFAULT_R_MAX).unwrap();
        assert_eq!(g.radii()[31], 0.999);
        let g = build_grid(3, 4, DEFAULT_R_MAX).unwrap();
        assert!((g.radii()[1] - 0.4995).abs() < 1e-15);
    }

    #[test]
    fn rejects_bad_dimensions() {
        assert!(build_grid(4, 7, 1.0).is_err());
        assert!(build_grid(1, 8, 1.0).is_err());
        assert!(build_grid(4, 0, 1.0).is_err());
        assert!(build_grid(4, 8, 0.0).is_err());
        assert!(build_grid(4, 8, 1.5).is_err());
    }

    #[test]
    fn radii_increase_and_thetas_are_uniform() {
        let g = build_grid(17, 40, 0.9).unwrap();
        assert_eq!(g.radii()[0], 0.0);
        assert_eq!(*g.radii().last().unwrap(), 0.9);
        assert!(g.radii().windows(2).all(|w| w[1] > w[0]));
        assert_eq!(g.thetas()[0], -PI);
        let step = 2.0 * PI / 40.0;
        for w in g.thetas().windows(2) {
            assert!((w[1] - w[0] - step).abs() < 1e-14);
        }
        assert!(*g.thetas().last().unwrap() < PI);
    }

    #[test]
    fn default_dims_heuristic() {
        assert_eq!(default_dims(64), (64, 204));
        assert_eq!(default_dims(28), (28, 88));
        assert_eq!(default_dims(128).1 % 4, 0);
        assert!(default_dims(128).1 as f64 >= PI * 128.0);
    }

    #[test]
    fn separable_functions_factor_on_the_lattice() {
        let g = build_grid(9, 12, DEFAULT_R_MAX).unwrap();
        let radial = |r: f64| (3.0 * r).cos() + r;
        let angular = |t: f64| (2.0 * t).sin() - 0.5;
        let img = PolarImage::from_fn(&g, |t, r| radial(r) * angular(t));
        for j in 0..12 {
            for k in 0..9 {
                assert_eq!(img.get(j, k), radial(g.radii()[k]) * angular(g.thetas()[j]));
            }
        }
    }

    #[test]
    fn constant_image_resamples_to_constant() {
        let img = GrayImage::constant(20, 14, 0.3, ValueRange::UNIT);
        let g = build_grid(10, 16, DEFAULT_R_MAX).unwrap();
        let p = cart_to_polar(&img, &g).unwrap();
        assert!(p.samples().iter().all(|&v| (v - 0.3).abs() < 1e-15));
    }

    #[test]
    fn center_row_is_constant() {
        let mut px = vec![0.0; 15 * 15];
        px[7 * 15 + 7] = 1.0;
        let img = GrayImage::new(15, 15, px, ValueRange::UNIT).unwrap();
        let g = build_grid(8, 24, DEFAULT_R_MAX).unwrap();
        let p = cart_to_polar(&img, &g).unwrap();
        for j in 0..24 {
            assert_eq!(p.get(j, 0), 1.0);
        }
    }

    #[test]
    fn radially_symmetric_blob_has_equal_slices() {
        let n = 64;
        let c = (n as f64 - 1.0) / 2.0;
        let sigma = 10.0;
        let blob = |r2: f64| (-r2 / (2.0 * sigma * sigma)).exp();
        let img = GrayImage::from_fn(n, n, ValueRange::UNIT, |x, y| {
            blob((x as f64 - c).powi(2) + (y as f64 - c).powi(2))
        });
        let g = build_grid(32, 64, DEFAULT_R_MAX).unwrap();
        let p = cart_to_polar(&img, &g).unwrap();
        // Bilinear interpolation of the blob is off by at most ~h^2/(2 sigma^2)
        // near the center, where the four nearest pixels sit half a diagonal away.
        let s = img.disk_radius();
        for k in 0..32 {
            let exact = blob((g.radii()[k] * s).powi(2));
            for j in 0..64 {
                assert!((p.get(j, k) - exact).abs() < 3e-3, "j={j} k={k} {} vs {exact}", p.get(j, k));
            }
        }
        // Slices related by lattice symmetries of the square are identical.
        for k in 0..32 {
            for j in 0..64 {
                let mirrored = (64 - j) % 64;
                assert!((p.get(j, k) - p.get(mirrored, k)).abs() < 1e-6);
                let quarter = (j + 16) % 64;
                assert!((p.get(j, k) - p.get(quarter, k)).abs() < 1e-6);
            }
        }
    }

    fn smooth(n: usize) -> GrayImage {
        let c = (n as f64 - 1.0) / 2.0;
        GrayImage::from_fn(n, n, ValueRange::UNIT, |x, y| {
            let u = (x as f64 - c) / c;
            let v = (y as f64 - c) / c;
            0.5 + 0.3 * (1.3 * u + 0.4).sin() * (0.9 * v).cos() + 0.1 * u * v
        })
    }

    #[test]
    fn polar_round_trip_interior() {
        let n = 32;
        let img = smooth(n);
        let g = build_grid(4 * n, 4 * n, DEFAULT_R_MAX).unwrap();
        let back = polar_to_cart(&cart_to_polar(&img, &g).unwrap(), n, n, 0.0);
        let mut worst: f64 = 0.0;
        for y in 0..n {
            for x in 0..n {
                if img.in_disk(x, y) {
                    worst = worst.max((img.get(x, y) - back.get(x, y)).abs());
                }
            }
        }
        assert!(worst <= 0.05, "{worst}");
    }

    #[test]
    fn constant_polar_fills_disk_and_exterior() {
        let g = build_grid(6, 8, DEFAULT_R_MAX).unwrap();
        let p = PolarImage::from_fn(&g, |_, _| 0.7);
        let out = polar_to_cart(&p, 21, 21, -1.0);
        let s = out.disk_radius();
        let (cx, cy) = out.center();
        for y in 0..21 {
            for x in 0..21 {
                let d2 = (x as f64 - cx).powi(2) + (y as f64 - cy).powi(2);
                if d2 > s * s {
                    assert_eq!(out.get(x, y), -1.0);
                } else {
                    assert!((out.get(x, y) - 0.7).abs() < 1e-15);
                }
            }
        }
    }

    #[test]
    fn lattice_rotation_is_a_row_shift() {
        let n = 48;
        let img = smooth(n);
        let n_theta = 96;
        let g = build_grid(24, n_theta, DEFAULT_R_MAX).unwrap();
        let p = cart_to_polar(&img, &g).unwrap();
        // Counterclockwise on screen is clockwise in the y-down polar frame.
        let step = 360.0 / n_theta as f64;
        let rotated = cart_to_polar(&rotate_image(&img, step, 0.0), &g).unwrap();
        let shifted = p.shift_rows(-1);
        // Near the rim, bilinear lookups in the rotated raster touch corner
        // pixels that were filled rather than rotated.
        let s = img.disk_radius();
        let mut err: f64 = 0.0;
        for k in (0..g.n_r()).filter(|&k| g.radii()[k] * s <= s - 1.5) {
            for j in 0..n_theta {
                err = err.max((rotated.get(j, k) - shifted.get(j, k)).abs());
            }
        }
        assert!(err <= 1e-3, "{err}");
    }

    #[test]
    fn shift_rows_wraps() {
        let g = build_grid(2, 4, 1.0).unwrap();
        let p = PolarImage::from_index_fn(&g, |j, k| (10 * j + k) as f64);
        let s = p.shift_rows(1);
        assert_eq!(s.row(0), p.row(3));
        assert_eq!(s.row(1), p.row(0));
        assert_eq!(p.shift_rows(-3), s);
        assert_eq!(p.shift_rows(4), p);
    }

    #[test]
    fn polar_pgm_round_trip() {
        let g = build_grid(5, 6, DEFAULT_R_MAX).unwrap();
        let p = PolarImage::from_fn(&g, |t, r| r * t.cos());
        let range = ValueRange::SIGNED_UNIT;
        let raster = p.to_pgm(range, BitDepth::Sixteen);
        let decoded = PgmRaster::decode(&raster.encode(PgmEncoding::Binary)).unwrap();
        let back = PolarImage::from_pgm(&decoded).unwrap();
        assert_eq!(back.grid(), p.grid());
        let step = range.width() / 65535.0;
        for (a, b) in back.samples().iter().zip(p.samples()) {
            assert!((a - b).abs() <= step);
        }
    }
}
