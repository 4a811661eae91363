//! Grayscale rasters: loading, saving, intensity normalization, noise
//! injection and rotation.
//!
//! PGM (P2 and P5, 8 or 16 bit) is the lossless interchange format and is
//! both read and written. PNG is read-only.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::sync::atomic::{AtomicU64, Ordering};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Declared closed value interval of an image.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ValueRange {
    pub lo: f64,
    pub hi: f64,
}

impl ValueRange {
    pub const UNIT: ValueRange = ValueRange { lo: 0.0, hi: 1.0 };
    pub const SIGNED_UNIT: ValueRange = ValueRange { lo: -1.0, hi: 1.0 };

    pub fn new(lo: f64, hi: f64) -> Self {
        ValueRange { lo, hi }
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn midpoint(&self) -> f64 {
        0.5 * (self.lo + self.hi)
    }

    pub fn is_degenerate(&self) -> bool {
        !(self.hi > self.lo)
    }

    pub fn clamp(&self, v: f64) -> f64 {
        v.clamp(self.lo, self.hi)
    }
}

/// Row-major real raster with a declared value range.
#[derive(Debug, Clone, PartialEq)]
pub struct GrayImage {
    width: usize,
    height: usize,
    pixels: Vec<f64>,
    range: ValueRange,
}

impl GrayImage {
    pub fn new(width: usize, height: usize, pixels: Vec<f64>, range: ValueRange) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidArgument(format!(
                "image dimensions must be positive, got {width}x{height}"
            )));
        }
        if pixels.len() != width * height {
            return Err(Error::DimensionMismatch(format!(
                "{} pixels for a {width}x{height} image",
                pixels.len()
            )));
        }
        Ok(GrayImage {
            width,
            height,
            pixels,
            range,
        })
    }

    /// Builds an image by evaluating `f(x, y)` at every pixel.
    pub fn from_fn(
        width: usize,
        height: usize,
        range: ValueRange,
        mut f: impl FnMut(usize, usize) -> f64,
    ) -> Self {
        assert!(width > 0 && height > 0, "image dimensions must be positive");
        let mut pixels = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                pixels.push(f(x, y));
            }
        }
        GrayImage {
            width,
            height,
            pixels,
            range,
        }
    }

    pub fn constant(width: usize, height: usize, value: f64, range: ValueRange) -> Self {
        Self::from_fn(width, height, range, |_, _| value)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[f64] {
        &self.pixels
    }

    pub fn into_pixels(self) -> Vec<f64> {
        self.pixels
    }

    pub fn range(&self) -> ValueRange {
        self.range
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.pixels[y * self.width + x]
    }

    /// Image center in pixel coordinates.
    pub fn center(&self) -> (f64, f64) {
        (
            (self.width as f64 - 1.0) * 0.5,
            (self.height as f64 - 1.0) * 0.5,
        )
    }

    /// Radius in pixels of the inscribed disk, inset by half a pixel.
    pub fn disk_radius(&self) -> f64 {
        self.width.min(self.height) as f64 * 0.5 - 0.5
    }

    /// Whether the pixel center `(x, y)` lies inside the inscribed disk.
    pub fn in_disk(&self, x: usize, y: usize) -> bool {
        let (cx, cy) = self.center();
        let s = self.disk_radius();
        let dx = x as f64 - cx;
        let dy = y as f64 - cy;
        dx * dx + dy * dy <= s * s
    }

    /// Bilinear interpolation at a fractional pixel position. Returns `None`
    /// when the point falls outside the raster.
    pub fn sample_bilinear(&self, x: f64, y: f64) -> Option<f64> {
        const SLACK: f64 = 1e-9;
        let xmax = (self.width - 1) as f64;
        let ymax = (self.height - 1) as f64;
        if !(x >= -SLACK && x <= xmax + SLACK && y >= -SLACK && y <= ymax + SLACK) {
            return None;
        }
        let x = x.clamp(0.0, xmax);
        let y = y.clamp(0.0, ymax);
        let x0 = (x.floor() as usize).min(self.width.saturating_sub(2));
        let y0 = (y.floor() as usize).min(self.height.saturating_sub(2));
        let x1 = (x0 + 1).min(self.width - 1);
        let y1 = (y0 + 1).min(self.height - 1);
        let fx = x - x0 as f64;
        let fy = y - y0 as f64;
        let top = self.get(x0, y0) * (1.0 - fx) + self.get(x1, y0) * fx;
        let bottom = self.get(x0, y1) * (1.0 - fx) + self.get(x1, y1) * fx;
        Some(top * (1.0 - fy) + bottom * fy)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> GrayImage {
        GrayImage {
            width: self.width,
            height: self.height,
            pixels: self.pixels.iter().map(|&v| f(v)).collect(),
            range: self.range,
        }
    }

    pub fn with_range(mut self, range: ValueRange) -> GrayImage {
        self.range = range;
        self
    }
}

/// Input file formats accepted by [`load_image`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ImageFormat {
    Pgm,
    Png,
}

impl ImageFormat {
    /// Guesses the format from a file extension.
    pub fn from_path(path: &Path) -> Option<Self> {
        let ext = path.extension()?.to_str()?.to_ascii_lowercase();
        match ext.as_str() {
            "pgm" | "pnm" => Some(ImageFormat::Pgm),
            "png" => Some(ImageFormat::Png),
            _ => None,
        }
    }
}

/// Loads an 8/16-bit grayscale (or RGB) raster and scales it to `[0, 1]`.
pub fn load_image(path: &Path, format: ImageFormat) -> Result<GrayImage> {
    let bytes = fs::read(path).map_err(|source| Error::Unreadable {
        path: path.to_path_buf(),
        source,
    })?;
    match format {
        ImageFormat::Pgm => {
            let raster = PgmRaster::decode(&bytes)?;
            Ok(raster.to_unit_image())
        }
        ImageFormat::Png => decode_png(&bytes),
    }
}

fn decode_png(bytes: &[u8]) -> Result<GrayImage> {
    use image::DynamicImage;

    let decoded = image::load_from_memory_with_format(bytes, image::ImageFormat::Png)
        .map_err(|e| Error::Decode(e.to_string()))?;
    let (w, h) = (decoded.width() as usize, decoded.height() as usize);
    let pixels: Vec<f64> = match &decoded {
        DynamicImage::ImageLuma8(buf) => buf.as_raw().iter().map(|&v| v as f64 / 255.0).collect(),
        DynamicImage::ImageLumaA8(_) => decoded
            .to_luma8()
            .as_raw()
            .iter()
            .map(|&v| v as f64 / 255.0)
            .collect(),
        DynamicImage::ImageLuma16(buf) => {
            buf.as_raw().iter().map(|&v| v as f64 / 65535.0).collect()
        }
        DynamicImage::ImageLumaA16(_) => decoded
            .to_luma16()
            .as_raw()
            .iter()
            .map(|&v| v as f64 / 65535.0)
            .collect(),
        DynamicImage::ImageRgb8(_) | DynamicImage::ImageRgba8(_) => decoded
            .to_rgb8()
            .pixels()
            .map(|p| {
                luminance_grayscale(
                    p[0] as f64 / 255.0,
                    p[1] as f64 / 255.0,
                    p[2] as f64 / 255.0,
                )
            })
            .collect(),
        DynamicImage::ImageRgb16(_) | DynamicImage::ImageRgba16(_) => decoded
            .to_rgb16()
            .pixels()
            .map(|p| {
                luminance_grayscale(
                    p[0] as f64 / 65535.0,
                    p[1] as f64 / 65535.0,
                    p[2] as f64 / 65535.0,
                )
            })
            .collect(),
        other => {
            return Err(Error::BitDepth(format!(
                "PNG color type {:?} is not 8/16-bit gray or RGB",
                other.color()
            )))
        }
    };
    GrayImage::new(w, h, pixels, ValueRange::UNIT)
}

/// Sample depth used when writing PGM files.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum BitDepth {
    #[default]
    Eight,
    Sixteen,
}

impl BitDepth {
    pub fn maxval(self) -> u16 {
        match self {
            BitDepth::Eight => 255,
            BitDepth::Sixteen => 65535,
        }
    }
}

/// Writes `img` as a binary (P5) PGM, mapping its declared range onto
/// `[0, maxval]`. Values outside the declared range are clamped.
pub fn save_pgm(img: &GrayImage, path: &Path, depth: BitDepth) -> Result<()> {
    let raster = PgmRaster::quantize(img, depth, Vec::new());
    fs::write(path, raster.encode(PgmEncoding::Binary)).map_err(|source| Error::Unwritable {
        path: path.to_path_buf(),
        source,
    })
}

/// PGM sample encoding: P2 (ASCII) or P5 (binary).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PgmEncoding {
    Ascii,
    Binary,
}

/// Integer PGM raster together with its header comments.
#[derive(Debug, Clone, PartialEq)]
pub struct PgmRaster {
    pub width: usize,
    pub height: usize,
    pub maxval: u16,
    pub samples: Vec<u16>,
    /// Comment lines without the leading `#` and surrounding whitespace.
    pub comments: Vec<String>,
}

impl PgmRaster {
    /// Quantizes `img` from its declared range onto `[0, maxval]`.
    pub fn quantize(img: &GrayImage, depth: BitDepth, comments: Vec<String>) -> Self {
        let maxval = depth.maxval();
        let range = img.range();
        let scale = if range.is_degenerate() {
            0.0
        } else {
            maxval as f64 / range.width()
        };
        let samples = img
            .pixels()
            .iter()
            .map(|&v| {
                let q = ((v - range.lo) * scale).round();
                q.clamp(0.0, maxval as f64) as u16
            })
            .collect();
        PgmRaster {
            width: img.width(),
            height: img.height(),
            maxval,
            samples,
            comments,
        }
    }

    /// Scales samples by `1/maxval` into a `[0, 1]` image.
    pub fn to_unit_image(&self) -> GrayImage {
        let inv = 1.0 / self.maxval as f64;
        GrayImage {
            width: self.width,
            height: self.height,
            pixels: self.samples.iter().map(|&s| s as f64 * inv).collect(),
            range: ValueRange::UNIT,
        }
    }

    pub fn encode(&self, encoding: PgmEncoding) -> Vec<u8> {
        let mut header = String::new();
        header.push_str(match encoding {
            PgmEncoding::Ascii => "P2\n",
            PgmEncoding::Binary => "P5\n",
        });
        for c in &self.comments {
            let _ = writeln!(header, "# {c}");
        }
        let _ = write!(header, "{} {}\n{}\n", self.width, self.height, self.maxval);
        let mut out = header.into_bytes();
        match encoding {
            PgmEncoding::Ascii => {
                let mut body = String::new();
                for row in self.samples.chunks(self.width) {
                    let line: Vec<String> = row.iter().map(|s| s.to_string()).collect();
                    body.push_str(&line.join(" "));
                    body.push('\n');
                }
                out.extend_from_slice(body.as_bytes());
            }
            PgmEncoding::Binary => {
                if self.maxval < 256 {
                    out.extend(self.samples.iter().map(|&s| s as u8));
                } else {
                    for &s in &self.samples {
                        out.extend_from_slice(&s.to_be_bytes());
                    }
                }
            }
        }
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let mut cur = HeaderCursor {
            bytes,
            pos: 0,
            comments: Vec::new(),
        };
        let magic = cur.token()?;
        let encoding = match magic.as_str() {
            "P2" => PgmEncoding::Ascii,
            "P5" => PgmEncoding::Binary,
            other => return Err(Error::Header(format!("unknown magic number {other:?}"))),
        };
        let width = cur.number("width")?;
        let height = cur.number("height")?;
        let maxval = cur.number("maxval")?;
        if width == 0 || height == 0 {
            return Err(Error::Header(format!("zero dimension {width}x{height}")));
        }
        if maxval == 0 || maxval > 65535 {
            return Err(Error::BitDepth(format!("maxval {maxval} outside 1..=65535")));
        }
        let maxval = maxval as u16;
        let count = width * height;
        let samples = match encoding {
            PgmEncoding::Binary => {
                // Exactly one whitespace byte separates the header from the raster.
                match bytes.get(cur.pos) {
                    Some(b) if b.is_ascii_whitespace() => cur.pos += 1,
                    _ => return Err(Error::Header("missing separator after maxval".into())),
                }
                let data = &bytes[cur.pos..];
                let width_bytes = if maxval < 256 { 1 } else { 2 };
                let expected = count * width_bytes;
                if data.len() < expected {
                    return Err(Error::Truncated {
                        expected,
                        found: data.len(),
                    });
                }
                if width_bytes == 1 {
                    data[..count].iter().map(|&b| b as u16).collect()
                } else {
                    data[..expected]
                        .chunks_exact(2)
                        .map(|c| u16::from_be_bytes([c[0], c[1]]))
                        .collect()
                }
            }
            PgmEncoding::Ascii => {
                let mut samples = Vec::with_capacity(count);
                for i in 0..count {
                    match cur.try_token() {
                        Some(tok) => {
                            let v: u32 = tok.parse().map_err(|_| {
                                Error::Decode(format!("bad ASCII sample {tok:?} at index {i}"))
                            })?;
                            if v > maxval as u32 {
                                return Err(Error::Decode(format!(
                                    "sample {v} exceeds maxval {maxval}"
                                )));
                            }
                            samples.push(v as u16);
                        }
                        None => {
                            return Err(Error::Truncated {
                                expected: count,
                                found: i,
                            })
                        }
                    }
                }
                samples
            }
        };
        for &s in &samples {
            if s > maxval {
                return Err(Error::Decode(format!("sample {s} exceeds maxval {maxval}")));
            }
        }
        Ok(PgmRaster {
            width,
            height,
            maxval,
            samples,
            comments: cur.comments,
        })
    }
}

struct HeaderCursor<'a> {
    bytes: &'a [u8],
    pos: usize,
    comments: Vec<String>,
}

impl HeaderCursor<'_> {
    fn skip_space_and_comments(&mut self) {
        while let Some(&b) = self.bytes.get(self.pos) {
            if b == b'#' {
                let start = self.pos + 1;
                while self.pos < self.bytes.len() && self.bytes[self.pos] != b'\n' {
                    self.pos += 1;
                }
                let text = String::from_utf8_lossy(&self.bytes[start..self.pos]);
                self.comments.push(text.trim().to_string());
            } else if b.is_ascii_whitespace() {
                self.pos += 1;
            } else {
                break;
            }
        }
    }

    fn try_token(&mut self) -> Option<String> {
        self.skip_space_and_comments();
        let start = self.pos;
        while let Some(&b) = self.bytes.get(self.pos) {
            if b.is_ascii_whitespace() || b == b'#' {
                break;
            }
            self.pos += 1;
        }
        (self.pos > start).then(|| String::from_utf8_lossy(&self.bytes[start..self.pos]).into())
    }

    fn token(&mut self) -> Result<String> {
        self.try_token()
            .ok_or_else(|| Error::Header("unexpected end of header".into()))
    }

    fn number(&mut self, what: &str) -> Result<usize> {
        let tok = self.token()?;
        tok.parse()
            .map_err(|_| Error::Header(format!("{what} is not a number: {tok:?}")))
    }
}

static LUMINANCE_CLAMPS: AtomicU64 = AtomicU64::new(0);

/// Number of out-of-range channel values clamped by [`luminance_grayscale`]
/// since process start.
pub fn luminance_clamp_count() -> u64 {
    LUMINANCE_CLAMPS.load(Ordering::Relaxed)
}

/// `Y = 0.299 R + 0.587 G + 0.114 B`. Channels are clamped to `[0, 1]`.
pub fn luminance_grayscale(r: f64, g: f64, b: f64) -> f64 {
    let clamp = |v: f64| {
        if (0.0..=1.0).contains(&v) {
            v
        } else {
            LUMINANCE_CLAMPS.fetch_add(1, Ordering::Relaxed);
            if v.is_nan() {
                0.0
            } else {
                v.clamp(0.0, 1.0)
            }
        }
    };
    let (r, g, b) = (clamp(r), clamp(g), clamp(b));
    0.299 * r + 0.587 * g + 0.114 * b
}

/// Result of [`normalize`].
#[derive(Debug, Clone, PartialEq)]
pub struct Normalized {
    pub image: GrayImage,
    /// Set when the source range was degenerate and the image was replaced
    /// by the target midpoint.
    pub degenerate: bool,
}

/// Affinely maps the declared source range onto `target`, clamping to it.
pub fn normalize(img: &GrayImage, target: ValueRange) -> Normalized {
    let src = img.range();
    if src.is_degenerate() {
        let mid = target.midpoint();
        return Normalized {
            image: GrayImage {
                width: img.width,
                height: img.height,
                pixels: vec![mid; img.pixels.len()],
                range: target,
            },
            degenerate: true,
        };
    }
    let scale = target.width() / src.width();
    let pixels = img
        .pixels
        .iter()
        .map(|&v| target.clamp(target.lo + (v - src.lo) * scale))
        .collect();
    Normalized {
        image: GrayImage {
            width: img.width,
            height: img.height,
            pixels,
            range: target,
        },
        degenerate: false,
    }
}

/// Adds i.i.d. `N(0, sigma^2)` noise and clamps to `[0, 1]`.
///
/// The stream comes from ChaCha8 seeded with `seed` (via
/// `SeedableRng::seed_from_u64`) and normals are drawn with the ziggurat
/// sampler of `rand_distr`, so outputs are identical across platforms.
pub fn add_gaussian_noise(img: &GrayImage, sigma: f64, seed: u64) -> Result<GrayImage> {
    if !(sigma >= 0.0) || !sigma.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "noise sigma must be a non-negative finite number, got {sigma}"
        )));
    }
    if sigma > 0.5 {
        return Err(Error::InvalidArgument(format!(
            "noise sigma {sigma} exceeds 0.5"
        )));
    }
    if sigma == 0.0 {
        return Ok(img.clone());
    }
    let normal = Normal::new(0.0, sigma).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pixels = img
        .pixels
        .iter()
        .map(|&v| (v + normal.sample(&mut rng)).clamp(0.0, 1.0))
        .collect();
    Ok(GrayImage {
        width: img.width,
        height: img.height,
        pixels,
        range: ValueRange::UNIT,
    })
}

/// Rotates counterclockwise (as displayed, y axis pointing down) by
/// `angle_deg` about the image center with bilinear interpolation.
/// Samples that fall outside the raster take `fill`.
pub fn rotate_image(img: &GrayImage, angle_deg: f64, fill: f64) -> GrayImage {
    let (cx, cy) = img.center();
    let alpha = angle_deg.to_radians();
    let (sin, cos) = alpha.sin_cos();
    let mut pixels = Vec::with_capacity(img.pixels.len());
    for y in 0..img.height {
        for x in 0..img.width {
            // Work in a y-up frame so positive angles turn counterclockwise on screen.
            let u = x as f64 - cx;
            let v = cy - y as f64;
            let su = cos * u + sin * v;
            let sv = -sin * u + cos * v;
            let value = img.sample_bilinear(cx + su, cy - sv).unwrap_or(fill);
            pixels.push(value);
        }
    }
    GrayImage {
        width: img.width,
        height: img.height,
        pixels,
        range: img.range,
    }
}
