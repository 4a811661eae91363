//! Classical disk moments computed by direct projection over the pixels of
//! the inscribed disk: Zernike, pseudo-Zernike and the polar harmonic
//! transforms PCT, PST and PCET.
//!
//! Every family has basis `V_{n,m}(r, theta) = R_n(r) exp(i m theta)` and
//! moments `A_{n,m} = norm_n * sum_{pixels} f * conj(V_{n,m}) * dA`, where `dA`
//! is the pixel area in unit-disk units. Pixel centers map to the unit disk
//! with the same half-pixel inset as [`crate::polar_grid::cart_to_polar`].
//!
//! Zernike and pseudo-Zernike radial polynomials are evaluated from their
//! explicit factorial sums, with the factorials in log space. This is the
//! textbook evaluation and it loses all precision at high orders through
//! cancellation; that loss is observable, not corrected.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{RuleKind, SelectionRule};
use crate::image_io::{GrayImage, ValueRange};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MomentFamily {
    Zernike,
    PseudoZernike,
    Pct,
    Pst,
    Pcet,
}

impl MomentFamily {
    pub const ALL: [MomentFamily; 5] = [
        MomentFamily::Zernike,
        MomentFamily::PseudoZernike,
        MomentFamily::Pct,
        MomentFamily::Pst,
        MomentFamily::Pcet,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            MomentFamily::Zernike => "zernike",
            MomentFamily::PseudoZernike => "pseudo_zernike",
            MomentFamily::Pct => "pct",
            MomentFamily::Pst => "pst",
            MomentFamily::Pcet => "pcet",
        }
    }

    /// Selection rule used for this family.
    pub fn rule_kind(self) -> RuleKind {
        match self {
            MomentFamily::Zernike => RuleKind::RadialWithParity,
            MomentFamily::PseudoZernike => RuleKind::Radial,
            MomentFamily::Pct | MomentFamily::Pst => RuleKind::Pyramidal,
            MomentFamily::Pcet => RuleKind::PcetWeighted,
        }
    }

    /// Indices admitted at complexity `c`, ascending `n` then `m`.
    pub fn indices(self, c: u32) -> Vec<MomentIndex> {
        SelectionRule::new(self.rule_kind(), c)
            .enumerate()
            .into_iter()
            // sin(0) vanishes identically.
            .filter(|&(n, _)| !(self == MomentFamily::Pst && n == 0))
            .map(|(n, m)| MomentIndex { n, m })
            .collect()
    }

    /// Number of moments at complexity `c`.
    pub fn count(self, c: u32) -> usize {
        let base = SelectionRule::new(self.rule_kind(), c).closed_form_count();
        if self == MomentFamily::Pst {
            // drop n = 0, |m| <= C
            base - (2 * c as usize + 1)
        } else {
            base
        }
    }

    /// Largest `c` whose moment count does not exceed `target`.
    pub fn largest_c_for_target(self, target: usize) -> Option<u32> {
        if self.count(0) > target && self != MomentFamily::Pst {
            return None;
        }
        let mut c = 0u32;
        while self.count(c + 1) <= target {
            c += 1;
        }
        (self.count(c) > 0 || target == 0).then_some(c)
    }

    /// `norm_n` such that `A_{n,m}` is the orthogonal projection coefficient.
    pub fn normalization(self, n: i64) -> f64 {
        match self {
            MomentFamily::Zernike | MomentFamily::PseudoZernike => (n + 1) as f64 / PI,
            MomentFamily::Pct => {
                if n == 0 {
                    1.0 / PI
                } else {
                    2.0 / PI
                }
            }
            MomentFamily::Pst => 2.0 / PI,
            MomentFamily::Pcet => 1.0 / PI,
        }
    }
}

impl fmt::Display for MomentFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for MomentFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "zernike" | "zm" => Ok(MomentFamily::Zernike),
            "pseudo_zernike" | "pzernike" | "pzm" => Ok(MomentFamily::PseudoZernike),
            "pct" => Ok(MomentFamily::Pct),
            "pst" => Ok(MomentFamily::Pst),
            "pcet" => Ok(MomentFamily::Pcet),
            other => Err(Error::InvalidArgument(format!("unknown moment family {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct MomentIndex {
    pub n: i64,
    pub m: i64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Moment {
    pub index: MomentIndex,
    pub value: Complex64,
}

/// `ln(k!)` for `k = 0..len`.
fn log_factorials(len: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(len);
    let mut acc = 0.0;
    out.push(0.0);
    for k in 1..len {
        acc += (k as f64).ln();
        out.push(acc);
    }
    out
}

/// Expanded polynomial `sum_i coeff_i r^power_i`.
#[derive(Debug, Clone)]
struct RadialPolynomial {
    terms: Vec<(f64, i32)>,
}

impl RadialPolynomial {
    fn eval(&self, r: f64) -> f64 {
        self.terms.iter().map(|&(c, p)| c * r.powi(p)).sum()
    }
}

fn zernike_polynomial(n: usize, m_abs: usize, lf: &[f64]) -> Result<RadialPolynomial> {
    if m_abs > n || !(n - m_abs).is_multiple_of(2) {
        return Err(Error::InvalidArgument(format!(
            "Zernike radial order requires |m| <= n and n - |m| even, got n={n}, |m|={m_abs}"
        )));
    }
    let half_sum = (n + m_abs) / 2;
    let half_diff = (n - m_abs) / 2;
    let mut terms = Vec::with_capacity(half_diff + 1);
    for s in 0..=half_diff {
        let log_mag = lf[n - s] - lf[s] - lf[half_sum - s] - lf[half_diff - s];
        let sign = if s % 2 == 0 { 1.0 } else { -1.0 };
        let c = sign * log_mag.exp();
        if !c.is_finite() {
            return Err(Error::PrecisionLoss {
                family: "zernike",
                order: n as i64,
            });
        }
        terms.push((c, (n - 2 * s) as i32));
    }
    Ok(RadialPolynomial { terms })
}

fn pseudo_zernike_polynomial(n: usize, m_abs: usize, lf: &[f64]) -> Result<RadialPolynomial> {
    if m_abs > n {
        return Err(Error::InvalidArgument(format!(
            "pseudo-Zernike radial order requires |m| <= n, got n={n}, |m|={m_abs}"
        )));
    }
    let mut terms = Vec::with_capacity(n - m_abs + 1);
    for s in 0..=(n - m_abs) {
        let log_mag = lf[2 * n + 1 - s] - lf[s] - lf[n + m_abs + 1 - s] - lf[n - m_abs - s];
        let sign = if s % 2 == 0 { 1.0 } else { -1.0 };
        let c = sign * log_mag.exp();
        if !c.is_finite() {
            return Err(Error::PrecisionLoss {
                family: "pseudo_zernike",
                order: n as i64,
            });
        }
        terms.push((c, (n - s) as i32));
    }
    Ok(RadialPolynomial { terms })
}

/// Zernike radial polynomial `R_n^{|m|}(r)`.
pub fn zernike_radial(n: usize, m_abs: usize, r: f64) -> Result<f64> {
    let lf = log_factorials(n + 2);
    Ok(zernike_polynomial(n, m_abs, &lf)?.eval(r))
}

/// Pseudo-Zernike radial polynomial.
pub fn pseudo_zernike_radial(n: usize, m_abs: usize, r: f64) -> Result<f64> {
    let lf = log_factorials(2 * n + 2);
    Ok(pseudo_zernike_polynomial(n, m_abs, &lf)?.eval(r))
}

/// Radial factor of `V_{n,m}` for a family, at radius `r` in `[0, 1]`.
/// Zernike and pseudo-Zernike factors depend on `|m|` as well.
pub fn radial_factor(family: MomentFamily, n: i64, m: i64, r: f64) -> Result<Complex64> {
    let value = match family {
        MomentFamily::Zernike => Complex64::new(zernike_radial(n as usize, m.unsigned_abs() as usize, r)?, 0.0),
        MomentFamily::PseudoZernike => {
            Complex64::new(pseudo_zernike_radial(n as usize, m.unsigned_abs() as usize, r)?, 0.0)
        }
        MomentFamily::Pct => Complex64::new((PI * n as f64 * r * r).cos(), 0.0),
        MomentFamily::Pst => Complex64::new((PI * n as f64 * r * r).sin(), 0.0),
        MomentFamily::Pcet => Complex64::from_polar(1.0, 2.0 * PI * n as f64 * r * r),
    };
    Ok(value)
}

/// Angular factor `exp(i m theta)`. The angle is undefined at the origin,
/// where the factor takes its angular mean: 1 for `m = 0`, else 0.
pub fn angular_factor(m: i64, r: f64, theta: f64) -> Complex64 {
    if r == 0.0 && m != 0 {
        Complex64::new(0.0, 0.0)
    } else {
        Complex64::from_polar(1.0, m as f64 * theta)
    }
}

/// Full basis value `V_{n,m}(r, theta)`.
pub fn basis_value(family: MomentFamily, n: i64, m: i64, r: f64, theta: f64) -> Result<Complex64> {
    Ok(radial_factor(family, n, m, r)? * angular_factor(m, r, theta))
}

/// Pixels of the inscribed disk grouped into rings of equal radius.
#[derive(Debug, Clone)]
pub struct DiskSampling {
    width: usize,
    height: usize,
    /// Unit-disk radius in pixels.
    radius: f64,
    /// Pixel area in unit-disk units.
    pixel_area: f64,
    /// Ring radii in the unit disk, ascending.
    ring_radii: Vec<f64>,
    /// Per disk pixel: raster offset, ring number and polar angle.
    pixels: Vec<DiskPixel>,
}

#[derive(Debug, Clone, Copy)]
struct DiskPixel {
    offset: usize,
    ring: usize,
    theta: f64,
}

impl DiskSampling {
    pub fn new(width: usize, height: usize) -> Result<Self> {
        if width < 2 || height < 2 {
            return Err(Error::InvalidArgument(format!(
                "disk sampling needs at least 2x2 pixels, got {width}x{height}"
            )));
        }
        let cx = (width as f64 - 1.0) * 0.5;
        let cy = (height as f64 - 1.0) * 0.5;
        let s = width.min(height) as f64 * 0.5 - 0.5;
        // (2 dx)^2 + (2 dy)^2 is an exact integer: a collision-free ring key.
        let mut rings: BTreeMap<u64, usize> = BTreeMap::new();
        let mut raw = Vec::new();
        for y in 0..height {
            for x in 0..width {
                let dx = x as f64 - cx;
                let dy = y as f64 - cy;
                if dx * dx + dy * dy > s * s {
                    continue;
                }
                let key = ((2.0 * dx).powi(2) + (2.0 * dy).powi(2)).round() as u64;
                rings.entry(key).or_insert(0);
                raw.push((y * width + x, key, dy.atan2(dx)));
            }
        }
        let mut ring_radii = Vec::with_capacity(rings.len());
        for (i, (key, slot)) in rings.iter_mut().enumerate() {
            *slot = i;
            ring_radii.push((*key as f64).sqrt() * 0.5 / s);
        }
        let pixels = raw
            .into_iter()
            .map(|(offset, key, theta)| DiskPixel {
                offset,
                ring: rings[&key],
                theta,
            })
            .collect();
        Ok(DiskSampling {
            width,
            height,
            radius: s,
            pixel_area: 1.0 / (s * s),
            ring_radii,
            pixels,
        })
    }

    pub fn pixel_count(&self) -> usize {
        self.pixels.len()
    }

    pub fn ring_count(&self) -> usize {
        self.ring_radii.len()
    }

    pub fn pixel_area(&self) -> f64 {
        self.pixel_area
    }

    /// Whether pixel `(x, y)` takes part in the moment sums.
    pub fn contains(&self, x: usize, y: usize) -> bool {
        let dx = x as f64 - (self.width as f64 - 1.0) * 0.5;
        let dy = y as f64 - (self.height as f64 - 1.0) * 0.5;
        dx * dx + dy * dy <= self.radius * self.radius
    }

    /// Unit-disk polar coordinates `(r, theta)` of every disk pixel, in
    /// raster order.
    pub fn coordinates(&self) -> Vec<(f64, f64)> {
        self.pixels
            .iter()
            .map(|p| (self.ring_radii[p.ring], p.theta))
            .collect()
    }

    /// Radial factor table: `table[i][ring]` for the `i`-th distinct radial
    /// key in `keys`.
    fn radial_table(&self, family: MomentFamily, keys: &[(i64, i64)]) -> Result<Vec<Vec<Complex64>>> {
        let max_n = keys.iter().map(|&(n, _)| n.unsigned_abs() as usize).max().unwrap_or(0);
        let lf = log_factorials(2 * max_n + 2);
        keys.par_iter()
            .map(|&(n, m_abs)| {
                let values: Vec<Complex64> = match family {
                    MomentFamily::Zernike => {
                        let poly = zernike_polynomial(n as usize, m_abs as usize, &lf)?;
                        self.ring_radii.iter().map(|&r| Complex64::new(poly.eval(r), 0.0)).collect()
                    }
                    MomentFamily::PseudoZernike => {
                        let poly = pseudo_zernike_polynomial(n as usize, m_abs as usize, &lf)?;
                        self.ring_radii.iter().map(|&r| Complex64::new(poly.eval(r), 0.0)).collect()
                    }
                    _ => self
                        .ring_radii
                        .iter()
                        .map(|&r| radial_factor(family, n, 0, r))
                        .collect::<Result<_>>()?,
                };
                Ok(values)
            })
            .collect()
    }
}

/// Radial key of an index: `(n, |m|)` for the Zernike families, `(n, 0)`
/// for the harmonic families whose radial factor ignores `m`.
fn radial_key(family: MomentFamily, idx: MomentIndex) -> (i64, i64) {
    match family {
        MomentFamily::Zernike | MomentFamily::PseudoZernike => (idx.n, idx.m.abs()),
        _ => (idx.n, 0),
    }
}

/// Row of each radial key in the radial table.
type RadialKeys = BTreeMap<(i64, i64), usize>;

fn radial_tables(
    sampling: &DiskSampling,
    family: MomentFamily,
    indices: &[MomentIndex],
) -> Result<(RadialKeys, Vec<Vec<Complex64>>)> {
    let mut keys = RadialKeys::new();
    for &idx in indices {
        keys.entry(radial_key(family, idx)).or_insert(0);
    }
    let list: Vec<(i64, i64)> = keys.keys().copied().collect();
    for (i, slot) in keys.values_mut().enumerate() {
        *slot = i;
    }
    let table = sampling.radial_table(family, &list)?;
    Ok((keys, table))
}

/// Moments of `img` for every index admitted at complexity `c`.
pub fn compute_moments(img: &GrayImage, family: MomentFamily, c: u32) -> Result<Vec<Moment>> {
    let sampling = DiskSampling::new(img.width(), img.height())?;
    compute_moments_with(&sampling, img, family, &family.indices(c))
}

/// As [`compute_moments`] with a reusable sampling and explicit indices.
pub fn compute_moments_with(
    sampling: &DiskSampling,
    img: &GrayImage,
    family: MomentFamily,
    indices: &[MomentIndex],
) -> Result<Vec<Moment>> {
    if img.width() != sampling.width || img.height() != sampling.height {
        return Err(Error::DimensionMismatch(format!(
            "image {}x{} vs sampling {}x{}",
            img.width(),
            img.height(),
            sampling.width,
            sampling.height
        )));
    }
    let (keys, radial) = radial_tables(sampling, family, indices)?;
    let m_max = indices.iter().map(|i| i.m.unsigned_abs()).max().unwrap_or(0) as usize;

    // Angular projections per ring: h[m][ring] = sum f exp(-i m theta), m >= 0.
    let pixels = img.pixels();
    let angular: Vec<Vec<Complex64>> = (0..=m_max)
        .into_par_iter()
        .map(|m| {
            let mut h = vec![Complex64::new(0.0, 0.0); sampling.ring_count()];
            for p in &sampling.pixels {
                h[p.ring] += pixels[p.offset] * angular_factor(-(m as i64), sampling.ring_radii[p.ring], p.theta);
            }
            h
        })
        .collect();

    let moments: Vec<Moment> = indices
        .par_iter()
        .map(|&idx| {
            let row = &radial[keys[&radial_key(family, idx)]];
            let h = &angular[idx.m.unsigned_abs() as usize];
            let mut acc = Complex64::new(0.0, 0.0);
            for (r, hv) in row.iter().zip(h) {
                // f real: sum f exp(+i|m| theta) = conj(sum f exp(-i|m| theta)).
                let hv = if idx.m < 0 { hv.conj() } else { *hv };
                acc += r.conj() * hv;
            }
            Moment {
                index: idx,
                value: acc * (family.normalization(idx.n) * sampling.pixel_area),
            }
        })
        .collect();
    if let Some(bad) = moments.iter().find(|m| !(m.value.re.is_finite() && m.value.im.is_finite())) {
        return Err(Error::PrecisionLoss {
            family: family.as_str(),
            order: bad.index.n,
        });
    }
    Ok(moments)
}

/// `sum A_{n,m} V_{n,m}` over the inscribed disk of a `size x size` raster,
/// real part; exterior pixels are 0. Non-finite values are kept.
pub fn reconstruct_from_moments(moments: &[Moment], family: MomentFamily, size: usize) -> Result<GrayImage> {
    let sampling = DiskSampling::new(size, size)?;
    reconstruct_with(&sampling, moments, family)
}

pub fn reconstruct_with(sampling: &DiskSampling, moments: &[Moment], family: MomentFamily) -> Result<GrayImage> {
    let indices: Vec<MomentIndex> = moments.iter().map(|m| m.index).collect();
    let (keys, radial) = radial_tables(sampling, family, &indices)?;
    let m_max = indices.iter().map(|i| i.m.abs()).max().unwrap_or(0);
    let width = (2 * m_max + 1) as usize;

    // a[ring][m + m_max] = sum_n A_{n,m} R_n(ring)
    let mut by_m: BTreeMap<i64, Vec<&Moment>> = BTreeMap::new();
    for mo in moments {
        by_m.entry(mo.index.m).or_default().push(mo);
    }
    let ring_sums: Vec<Vec<Complex64>> = (0..sampling.ring_count())
        .into_par_iter()
        .map(|ring| {
            let mut a = vec![Complex64::new(0.0, 0.0); width];
            for (&m, list) in &by_m {
                let slot = &mut a[(m + m_max) as usize];
                for mo in list {
                    *slot += mo.value * radial[keys[&radial_key(family, mo.index)]][ring];
                }
            }
            a
        })
        .collect();

    let mut pixels = vec![0.0; sampling.width * sampling.height];
    let values: Vec<(usize, f64)> = sampling
        .pixels
        .par_iter()
        .map(|p| {
            let a = &ring_sums[p.ring];
            let mut acc = Complex64::new(0.0, 0.0);
            for &m in by_m.keys() {
                acc += a[(m + m_max) as usize] * angular_factor(m, sampling.ring_radii[p.ring], p.theta);
            }
            (p.offset, acc.re)
        })
        .collect();
    for (offset, v) in values {
        pixels[offset] = v;
    }
    GrayImage::new(sampling.width, sampling.height, pixels, ValueRange::UNIT)
}

/// Analysis matrix mapping disk pixels (raster order) to moments:
/// row `i` holds `norm_n conj(V_i) dA`, so `moments = A f`.
pub fn design_matrix(family: MomentFamily, c: u32, size: usize) -> Result<DMatrix<Complex64>> {
    let sampling = DiskSampling::new(size, size)?;
    let indices = family.indices(c);
    let (keys, radial) = radial_tables(&sampling, family, &indices)?;
    let cols = sampling.pixel_count();
    Ok(DMatrix::from_fn(indices.len(), cols, |row, col| {
        let idx = indices[row];
        let p = sampling.pixels[col];
        let v = radial[keys[&radial_key(family, idx)]][p.ring]
            * angular_factor(idx.m, sampling.ring_radii[p.ring], p.theta);
        v.conj() * (family.normalization(idx.n) * sampling.pixel_area)
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::image_io::rotate_image;

    #[test]
    fn zernike_radial_examples() {
        for r in [0.0, 0.3, 1.0] {
            assert_eq!(zernike_radial(0, 0, r).unwrap(), 1.0);
        }
        for n in 0..12 {
            assert!((zernike_radial(n, n, 0.7).unwrap() - 0.7f64.powi(n as i32)).abs() < 1e-12);
        }
        assert!((zernike_radial(2, 0, 0.5).unwrap() + 0.5).abs() < 1e-15);
        assert!(zernike_radial(3, 0, 0.5).is_err());
        assert!(zernike_radial(2, 4, 0.5).is_err());
    }

    fn simpson(f: impl Fn(f64) -> f64, intervals: usize) -> f64 {
        let h = 1.0 / intervals as f64;
        let mut acc = f(0.0) + f(1.0);
        for i in 1..intervals {
            let w = if i % 2 == 1 { 4.0 } else { 2.0 };
            acc += w * f(i as f64 * h);
        }
        acc * h / 3.0
    }

    #[test]
    fn zernike_radial_orthogonality() {
        for m in 0..=10usize {
            for n in (m..=10).step_by(2) {
                for n2 in (m..=10).step_by(2) {
                    let v = simpson(
                        |r| zernike_radial(n, m, r).unwrap() * zernike_radial(n2, m, r).unwrap() * r,
                        4000,
                    );
                    let expected = if n == n2 { 1.0 / (2.0 * (n as f64 + 1.0)) } else { 0.0 };
                    assert!((v - expected).abs() < 1e-6, "n={n} n'={n2} m={m}: {v}");
                }
            }
        }
    }

    #[test]
    fn pseudo_zernike_orthogonality() {
        for m in 0..=4usize {
            for n in m..=6 {
                for n2 in m..=6 {
                    let v = simpson(
                        |r| {
                            pseudo_zernike_radial(n, m, r).unwrap()
                                * pseudo_zernike_radial(n2, m, r).unwrap()
                                * r
                        },
                        4000,
                    );
                    let expected = if n == n2 { 1.0 / (2.0 * (n as f64 + 1.0)) } else { 0.0 };
                    assert!((v - expected).abs() < 1e-6, "n={n} n'={n2} m={m}: {v}");
                }
            }
        }
    }

    #[test]
    fn counts() {
        assert_eq!(MomentFamily::Zernike.indices(12).len(), 91);
        assert_eq!(MomentFamily::Zernike.count(12), 91);
        for fam in MomentFamily::ALL {
            for c in 0..15 {
                assert_eq!(fam.indices(c).len(), fam.count(c), "{fam} C={c}");
            }
        }
        assert_eq!(MomentFamily::Pst.count(0), 0);
        assert_eq!(MomentFamily::Zernike.largest_c_for_target(91), Some(12));
        assert_eq!(MomentFamily::PseudoZernike.largest_c_for_target(6000), Some(76));
    }

    #[test]
    fn angular_factor_vanishes_at_origin() {
        assert_eq!(angular_factor(0, 0.0, 0.0), Complex64::new(1.0, 0.0));
        assert_eq!(angular_factor(3, 0.0, 0.0), Complex64::new(0.0, 0.0));
        assert_eq!(basis_value(MomentFamily::Pcet, 1, -2, 0.0, 0.0).unwrap(), Complex64::new(0.0, 0.0));
    }

    #[test]
    fn pcet_basis_has_unit_magnitude() {
        for i in 1..50 {
            let r = i as f64 / 49.0;
            for n in -3..=3 {
                let v = basis_value(MomentFamily::Pcet, n, 2, r, 0.3 * i as f64).unwrap();
                assert!((v.norm() - 1.0).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn constant_image_has_single_zernike_moment() {
        // The staircase boundary of the pixel disk leaks into low orders at
        // roughly 1/N; at 1024 pixels it stays below 1e-3 through order 6.
        let big = GrayImage::constant(1024, 1024, 1.0, ValueRange::UNIT);
        let moments = compute_moments(&big, MomentFamily::Zernike, 6).unwrap();
        for mo in &moments {
            if mo.index == (MomentIndex { n: 0, m: 0 }) {
                assert!((mo.value.re - 1.0).abs() < 1e-3);
            } else {
                assert!(mo.value.norm() < 1e-3, "{:?} {}", mo.index, mo.value);
            }
        }
        let img = GrayImage::constant(256, 256, 1.0, ValueRange::UNIT);
        let recon = reconstruct_from_moments(
            &compute_moments(&img, MomentFamily::Zernike, 0).unwrap(),
            MomentFamily::Zernike,
            256,
        )
        .unwrap();
        let sampling = DiskSampling::new(256, 256).unwrap();
        let expected = sampling.pixel_count() as f64 * sampling.pixel_area() / PI;
        for y in 0..256 {
            for x in 0..256 {
                if sampling.contains(x, y) {
                    assert!((recon.get(x, y) - expected).abs() < 1e-12);
                    assert!((recon.get(x, y) - 1.0).abs() < 1e-3);
                } else {
                    assert_eq!(recon.get(x, y), 0.0);
                }
            }
        }
    }

    fn pattern(size: usize) -> GrayImage {
        let c = (size as f64 - 1.0) / 2.0;
        GrayImage::from_fn(size, size, ValueRange::UNIT, |x, y| {
            let u = (x as f64 - c) / c;
            let v = (y as f64 - c) / c;
            0.5 + 0.25 * (2.0 * u + 0.3).sin() * (1.5 * v - 0.2).cos() + 0.1 * u
        })
    }

    #[test]
    fn magnitudes_survive_quarter_turn() {
        let img = pattern(40);
        let rotated = rotate_image(&img, 90.0, 0.0);
        for fam in [MomentFamily::Zernike, MomentFamily::PseudoZernike, MomentFamily::Pcet] {
            let a = compute_moments(&img, fam, 8).unwrap();
            let b = compute_moments(&rotated, fam, 8).unwrap();
            for (x, y) in a.iter().zip(&b) {
                assert_eq!(x.index, y.index);
                assert!((x.value.norm() - y.value.norm()).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn ring_grouping_matches_direct_projection() {
        let img = pattern(17);
        let sampling = DiskSampling::new(17, 17).unwrap();
        for fam in MomentFamily::ALL {
            let moments = compute_moments(&img, fam, 5).unwrap();
            for mo in &moments {
                let mut acc = Complex64::new(0.0, 0.0);
                for y in 0..17 {
                    for x in 0..17 {
                        if !sampling.contains(x, y) {
                            continue;
                        }
                        let dx = (x as f64 - 8.0) / 8.0;
                        let dy = (y as f64 - 8.0) / 8.0;
                        let r = dx.hypot(dy);
                        let v = basis_value(fam, mo.index.n, mo.index.m, r, dy.atan2(dx)).unwrap();
                        acc += v.conj() * img.get(x, y);
                    }
                }
                acc *= fam.normalization(mo.index.n) * sampling.pixel_area();
                assert!((acc - mo.value).norm() < 1e-10, "{fam} {:?}", mo.index);
            }
            // Design matrix applies the same projection.
            let a = design_matrix(fam, 5, 17).unwrap();
            let f: Vec<Complex64> = (0..17 * 17)
                .filter(|&i| sampling.contains(i % 17, i / 17))
                .map(|i| Complex64::new(img.pixels()[i], 0.0))
                .collect();
            let via_matrix = a * nalgebra::DVector::from_vec(f);
            for (mo, v) in moments.iter().zip(via_matrix.iter()) {
                assert!((mo.value - v).norm() < 1e-10);
            }
        }
    }

    #[test]
    fn low_order_reconstruction_is_reasonable() {
        let img = pattern(64);
        for fam in MomentFamily::ALL {
            let moments = compute_moments(&img, fam, 10).unwrap();
            let recon = reconstruct_from_moments(&moments, fam, 64).unwrap();
            let mut se = 0.0;
            let mut count = 0;
            for y in 0..64 {
                for x in 0..64 {
                    if img.in_disk(x, y) {
                        se += (img.get(x, y) - recon.get(x, y)).powi(2);
                        count += 1;
                    }
                }
            }
            let rmse = (se / count as f64).sqrt();
            // PST has no constant mode, so the image mean converges slowly.
            let bound = if fam == MomentFamily::Pst { 0.15 } else { 0.1 };
            assert!(rmse < bound, "{fam}: {rmse}");
        }
    }

    #[test]
    fn overflowing_factorials_are_reported() {
        let lf = log_factorials(4000);
        assert!(matches!(
            zernike_polynomial(1800, 0, &lf),
            Err(Error::PrecisionLoss { family: "zernike", .. })
        ));
    }
}
