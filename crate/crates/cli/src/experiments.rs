//! Per-image computations behind the benchmark commands. Nothing here
//! touches the filesystem except [`load_inputs`].

use std::collections::HashMap;
use std::path::Path;
use std::sync::{Arc, Mutex};

use anyhow::Context;
use num_complex::Complex64;
use psept::baselines::{self, DiskSampling, MomentFamily};
use psept::bases::{build_kernel_matrix, KernelIndex};
use psept::features::{complex_parts, magnitude_invariants, select, SelectOptions};
use psept::image_io::{load_image, rotate_image, ImageFormat};
use psept::metrics::{condition_number, quality, Mask, QualityReport};
use psept::pipeline::{keep_selected, ImagePipeline};
use psept::polar_grid::{build_grid, polar_to_cart, PolarGrid};
use psept::{Convention, Error, GrayImage, SelectionRule};

use crate::config::{Method, RunConfig};
use crate::synthetic::smooth_image;

/// An input image with the name used in result rows.
#[derive(Debug, Clone)]
pub struct NamedImage {
    pub name: String,
    /// Class label: the parent directory of a file, `synthetic` otherwise.
    pub label: String,
    pub image: GrayImage,
}

/// Loads `cfg.inputs`, or generates `cfg.synthetic` smooth images of side
/// `cfg.size` when there are none.
pub fn load_inputs(cfg: &RunConfig) -> anyhow::Result<Vec<NamedImage>> {
    if cfg.inputs.is_empty() {
        return Ok((0..cfg.synthetic.max(1))
            .map(|i| NamedImage {
                name: format!("synthetic_{i:03}"),
                label: "synthetic".into(),
                image: smooth_image(cfg.size, i as u64),
            })
            .collect());
    }
    cfg.inputs
        .iter()
        .map(|path| {
            let format = ImageFormat::from_path(path)
                .with_context(|| format!("unknown image format: {}", path.display()))?;
            let image = load_image(path, format)?;
            Ok(NamedImage {
                name: path.display().to_string(),
                label: parent_name(path),
                image,
            })
        })
        .collect()
}

fn parent_name(path: &Path) -> String {
    path.parent()
        .and_then(|p| p.file_name())
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default()
}

/// Planned transforms and disk samplings, shared across work items of the
/// same image size.
pub struct Engine {
    cfg: RunConfig,
    pipelines: Mutex<HashMap<(usize, usize), Arc<ImagePipeline>>>,
    samplings: Mutex<HashMap<(usize, usize), Arc<DiskSampling>>>,
}

impl Engine {
    pub fn new(cfg: &RunConfig) -> Self {
        Engine {
            cfg: cfg.clone(),
            pipelines: Mutex::new(HashMap::new()),
            samplings: Mutex::new(HashMap::new()),
        }
    }

    pub fn config(&self) -> &RunConfig {
        &self.cfg
    }

    pub fn pipeline(&self, img: &GrayImage) -> anyhow::Result<Arc<ImagePipeline>> {
        let key = (img.width(), img.height());
        if let Some(p) = self.pipelines.lock().unwrap().get(&key) {
            return Ok(p.clone());
        }
        let grid = self.cfg.grid_for(key.0, key.1)?;
        let p = Arc::new(ImagePipeline::new(&grid));
        Ok(self.pipelines.lock().unwrap().entry(key).or_insert(p).clone())
    }

    pub fn sampling(&self, img: &GrayImage) -> anyhow::Result<Arc<DiskSampling>> {
        let key = (img.width(), img.height());
        if let Some(s) = self.samplings.lock().unwrap().get(&key) {
            return Ok(s.clone());
        }
        let s = Arc::new(DiskSampling::new(key.0, key.1)?);
        Ok(self.samplings.lock().unwrap().entry(key).or_insert(s).clone())
    }

    /// Reconstruction of `img` from the features of `method` at complexity
    /// `c`. PSepT keeps the pyramidal selection.
    pub fn reconstruct(&self, method: Method, img: &GrayImage, c: u32) -> anyhow::Result<GrayImage> {
        match method.family() {
            None => {
                let rule = SelectionRule::new(psept::features::RuleKind::Pyramidal, c);
                self.reconstruct_psept(img, rule)
            }
            Some(family) => self.reconstruct_moments(family, img, c),
        }
    }

    pub fn reconstruct_psept(&self, img: &GrayImage, rule: SelectionRule) -> anyhow::Result<GrayImage> {
        let pipeline = self.pipeline(img)?;
        let coeffs = pipeline.coefficients(img, Convention::Orthonormal)?;
        let kept = keep_selected(&coeffs, rule, SelectOptions::default());
        let polar = pipeline.transform().inverse(&kept)?.re();
        Ok(polar_to_cart(&polar, img.width(), img.height(), 0.0))
    }

    fn reconstruct_moments(&self, family: MomentFamily, img: &GrayImage, c: u32) -> anyhow::Result<GrayImage> {
        let sampling = self.sampling(img)?;
        let moments = baselines::compute_moments_with(&sampling, img, family, &family.indices(c))?;
        Ok(baselines::reconstruct_with(&sampling, &moments, family)?)
    }

    /// Quality of the reconstruction at complexity `c` over the inscribed disk.
    pub fn evaluate_reconstruction(&self, method: Method, img: &GrayImage, c: u32) -> ReconOutcome {
        match self.reconstruct(method, img, c) {
            Ok(recon) => match quality(img, &recon, 1.0, Mask::Disk) {
                Ok(q) if q.rmse.is_finite() => ReconOutcome::Ok(q),
                Ok(q) => ReconOutcome::NonFinite(q),
                Err(e) => ReconOutcome::Failed(e.to_string()),
            },
            Err(e) => match e.downcast_ref::<Error>() {
                Some(Error::PrecisionLoss { .. }) => ReconOutcome::Overflow,
                _ => ReconOutcome::Failed(e.to_string()),
            },
        }
    }

    /// Rotation-invariant features: PSepT magnitude invariants, or moment
    /// magnitudes at `cfg.c` for a baseline.
    pub fn magnitude_features(&self, method: Method, img: &GrayImage) -> anyhow::Result<Vec<f64>> {
        match method.family() {
            None => {
                let coeffs = self.pipeline(img)?.coefficients(img, self.cfg.convention)?;
                Ok(magnitude_invariants(&coeffs, self.cfg.n_max, self.cfg.k_max)?.values)
            }
            Some(family) => Ok(self
                .moments(family, img)?
                .iter()
                .map(|m| m.value.norm())
                .collect()),
        }
    }

    /// Real and imaginary parts of the selected coefficients or moments.
    pub fn complex_features(&self, method: Method, img: &GrayImage) -> anyhow::Result<Vec<f64>> {
        match method.family() {
            None => {
                let coeffs = self.pipeline(img)?.coefficients(img, self.cfg.convention)?;
                let rule = SelectionRule::new(self.cfg.rule, self.cfg.c);
                Ok(complex_parts(&select(&coeffs, rule, SelectOptions::default()), Some(rule)).values)
            }
            Some(family) => Ok(self
                .moments(family, img)?
                .iter()
                .flat_map(|m| [m.value.re, m.value.im])
                .collect()),
        }
    }

    fn moments(&self, family: MomentFamily, img: &GrayImage) -> anyhow::Result<Vec<baselines::Moment>> {
        let sampling = self.sampling(img)?;
        Ok(baselines::compute_moments_with(&sampling, img, family, &family.indices(self.cfg.c))?)
    }

    /// Short description of a method's feature layout for CSV headers.
    pub fn feature_descriptor(&self, method: Method, complex: bool) -> String {
        match (method.family(), complex) {
            (None, false) => format!(
                "method=psept kind=magnitude_invariant n_max={} k_max={} order=k-major",
                self.cfg.n_max, self.cfg.k_max
            ),
            (None, true) => format!(
                "method=psept kind=complex_parts rule={} C={} order=n,m ascending re/im pairs",
                self.cfg.rule, self.cfg.c
            ),
            (Some(f), false) => format!("method={method} kind=moment_magnitude family={f} C={}", self.cfg.c),
            (Some(f), true) => format!(
                "method={method} kind=complex_parts family={f} C={} order=n,m ascending re/im pairs",
                self.cfg.c
            ),
        }
    }
}

/// Result of one reconstruction work item.
#[derive(Debug, Clone, PartialEq)]
pub enum ReconOutcome {
    Ok(QualityReport),
    /// The reconstruction contains inf or NaN.
    NonFinite(QualityReport),
    /// Factorial terms left the floating-point range.
    Overflow,
    Failed(String),
}

impl ReconOutcome {
    pub fn status(&self) -> &'static str {
        match self {
            ReconOutcome::Ok(_) => "ok",
            ReconOutcome::NonFinite(_) => "non_finite",
            ReconOutcome::Overflow => "overflow",
            ReconOutcome::Failed(_) => "error",
        }
    }

    /// RMSE, with an unusable reconstruction counted as infinitely bad.
    pub fn rmse_or_inf(&self) -> f64 {
        match self {
            ReconOutcome::Ok(q) => q.rmse,
            _ => f64::INFINITY,
        }
    }

    pub fn report(&self) -> Option<&QualityReport> {
        match self {
            ReconOutcome::Ok(q) | ReconOutcome::NonFinite(q) => Some(q),
            _ => None,
        }
    }
}

/// Rotates `img` by `angle_deg` counterclockwise, filling the uncovered
/// corners with the image's own disk-rim mean so the fill does not look
/// like structure to the outermost polar samples.
pub fn rotate_for_bench(img: &GrayImage, angle_deg: f64) -> GrayImage {
    let wrapped = angle_deg.rem_euclid(360.0);
    if wrapped == 0.0 {
        return img.clone();
    }
    rotate_image(img, angle_deg, rim_mean(img))
}

fn rim_mean(img: &GrayImage) -> f64 {
    let (cx, cy) = img.center();
    let s = img.disk_radius();
    let (mut sum, mut count) = (0.0, 0usize);
    for y in 0..img.height() {
        for x in 0..img.width() {
            let d = (x as f64 - cx).hypot(y as f64 - cy);
            if d > s - 1.0 && d <= s {
                sum += img.get(x, y);
                count += 1;
            }
        }
    }
    if count == 0 {
        0.0
    } else {
        sum / count as f64
    }
}

/// Condition number of the analysis matrix a method uses at complexity `c`:
/// the moment design matrix on a `size x size` disk, or for PSepT the
/// selected columns of the kernel matrix on `grid`.
pub fn design_condition(method: Method, c: u32, size: usize, grid: &PolarGrid) -> anyhow::Result<f64> {
    match method.family() {
        Some(family) => Ok(condition_number(&baselines::design_matrix(family, c, size)?)?),
        None => {
            let rule = SelectionRule::new(psept::features::RuleKind::Pyramidal, c);
            let orders: Vec<KernelIndex> = psept::bases::all_indices(grid)
                .into_iter()
                .filter(|idx| idx.m != grid.m_min() && rule.admits(idx.n as i64, idx.m))
                .collect();
            anyhow::ensure!(
                orders.len() == rule.closed_form_count(),
                "grid {}x{} is too small for C={c}",
                grid.n_r(),
                grid.n_theta()
            );
            Ok(condition_number(&build_kernel_matrix(grid, &orders)?)?)
        }
    }
}

/// Default grid for kernel-matrix comparisons in `compare`.
pub fn comparison_grid(cfg: &RunConfig) -> anyhow::Result<PolarGrid> {
    Ok(build_grid(cfg.n_r.unwrap_or(32), cfg.n_theta.unwrap_or(64), cfg.r_max)?)
}

/// Kernel `K_{n,m}` sampled on `grid`.
pub fn kernel_samples(grid: &PolarGrid, idx: KernelIndex) -> anyhow::Result<psept::PolarImage<Complex64>> {
    let mut samples = Vec::with_capacity(grid.len());
    for j in 0..grid.n_theta() {
        for k in 0..grid.n_r() {
            samples.push(psept::bases::kernel(idx, k, j, grid)?);
        }
    }
    Ok(psept::PolarImage::new(grid.clone(), samples)?)
}
