//! Subcommand implementations. Each writes into the run directory
//! (`config.json`, `results.csv`, `timings.csv`, plus command-specific
//! artifacts) and rows are sorted by a canonical key before writing, so the
//! thread count never changes output bytes.

use std::collections::BTreeMap;

use anyhow::{bail, Context};
use psept::bases::KernelIndex;
use psept::image_io::{add_gaussian_noise, save_pgm, BitDepth};
use psept::metrics::{euclidean_distance_slices, format_psnr, quality, Mask};
use psept::polar_grid::polar_to_cart;
use psept::transform::{energy_spatial, energy_spectral};
use psept::{Convention, GrayImage, SelectionRule, ValueRange};
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{FeatureChoice, Method, RunConfig};
use crate::experiments::{
    comparison_grid, design_condition, kernel_samples, load_inputs, rotate_for_bench, Engine,
    NamedImage, ReconOutcome,
};
use crate::output::{num, RunDir};
use crate::validate::run_validation;

/// Names accepted by [`run`].
pub const COMMANDS: [&str; 9] = [
    "validate",
    "transform",
    "reconstruct",
    "kernels",
    "features",
    "bench-reconstruction",
    "bench-rotation",
    "bench-noise",
    "compare",
];

/// What a finished command reports back to the caller.
#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    /// False when a validation check failed.
    pub passed: bool,
    /// Text for standard output.
    pub summary: String,
}

impl Outcome {
    fn ok(summary: impl Into<String>) -> Self {
        Outcome {
            passed: true,
            summary: summary.into(),
        }
    }
}

/// Runs `cfg.command`.
pub fn run(cfg: &RunConfig) -> anyhow::Result<Outcome> {
    cfg.check()?;
    match cfg.command.as_str() {
        "validate" => cmd_validate(cfg),
        "transform" => cmd_transform(cfg),
        "reconstruct" => cmd_reconstruct(cfg),
        "kernels" => cmd_kernels(cfg),
        "features" => cmd_features(cfg),
        "bench-reconstruction" => cmd_bench_reconstruction(cfg),
        "bench-rotation" => cmd_bench_rotation(cfg),
        "bench-noise" => cmd_bench_noise(cfg),
        "compare" => cmd_compare(cfg),
        other => bail!("unknown command {other:?}; expected one of {}", COMMANDS.join(", ")),
    }
}

fn json<T: Serialize>(value: &T) -> String {
    serde_json::to_string_pretty(value).expect("serializable") + "\n"
}

/// File-name-safe tag for the `i`-th input.
fn image_tag(i: usize, img: &NamedImage) -> String {
    let stem = std::path::Path::new(&img.name)
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    let clean: String = stem
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
        .collect();
    format!("{i:03}_{clean}")
}

fn cmd_validate(cfg: &RunConfig) -> anyhow::Result<Outcome> {
    // Grid errors are configuration errors: fail before creating outputs.
    cfg.validation_grid()?;
    let dir = RunDir::create(cfg)?;
    let report = dir.timed("validate", || run_validation(cfg))?;
    let text = json(&report);
    dir.write_text("report.json", &text)?;
    dir.finish()?;
    Ok(Outcome {
        passed: report.passed,
        summary: text,
    })
}

fn cmd_transform(cfg: &RunConfig) -> anyhow::Result<Outcome> {
    let images = load_inputs(cfg)?;
    let dir = RunDir::create(cfg)?;
    let engine = Engine::new(cfg);
    let mut rows = Vec::new();
    for (i, img) in images.iter().enumerate() {
        let tag = image_tag(i, img);
        let pipeline = engine.pipeline(&img.image)?;
        let polar = psept::polar_grid::cart_to_polar(&img.image, pipeline.grid())?;
        let coeffs = dir.timed(format!("transform/{tag}"), || {
            pipeline.transform().forward(&polar, cfg.convention)
        })?;
        let bin = format!("coefficients/{tag}.psept");
        coeffs.save(&dir.path(&bin)?)?;
        let mut csv = Vec::new();
        coeffs.write_csv(&mut csv)?;
        dir.write_text(&format!("coefficients/{tag}.csv"), &String::from_utf8(csv)?)?;
        let grid = coeffs.grid();
        rows.push(vec![
            img.name.clone(),
            grid.n_r().to_string(),
            grid.n_theta().to_string(),
            cfg.convention.to_string(),
            num(energy_spatial(&polar)),
            num(energy_spectral(&coeffs)),
            bin,
        ]);
    }
    let header = ["image", "n_r", "n_theta", "convention", "energy_spatial", "energy_spectral", "coefficients"];
    dir.write_csv("results.csv", None, &header, &rows)?;
    dir.finish()?;
    Ok(Outcome::ok(format!("transformed {} image(s) into {}", rows.len(), cfg.out.display())))
}

fn write_reconstruction(dir: &RunDir, rel: &str, img: &GrayImage) -> anyhow::Result<()> {
    let clamped = img.map(|v| if v.is_finite() { v } else { 0.0 }).with_range(ValueRange::UNIT);
    save_pgm(&clamped, &dir.path(rel)?, BitDepth::Sixteen)?;
    Ok(())
}

fn cmd_reconstruct(cfg: &RunConfig) -> anyhow::Result<Outcome> {
    if cfg.convention == Convention::PaperLiteral {
        bail!("the paper-literal convention has no inverse; use orthonormal to reconstruct");
    }
    let images = load_inputs(cfg)?;
    let dir = RunDir::create(cfg)?;
    let engine = Engine::new(cfg);
    let mut rows = Vec::new();
    for (i, img) in images.iter().enumerate() {
        let tag = image_tag(i, img);
        for &method in &cfg.methods {
            let label = format!("{tag}_{method}_C{}", cfg.c);
            let (recon, count) = dir.timed(format!("reconstruct/{label}"), || match method {
                Method::Psept => {
                    let rule = SelectionRule::new(cfg.rule, cfg.c);
                    (engine.reconstruct_psept(&img.image, rule), rule.closed_form_count())
                }
                _ => (engine.reconstruct(method, &img.image, cfg.c), method.count(cfg.c)),
            });
            let mut row = vec![img.name.clone(), method.to_string(), cfg.c.to_string(), count.to_string()];
            match recon {
                Ok(recon) => {
                    let q = quality(&img.image, &recon, 1.0, Mask::Disk)?;
                    write_reconstruction(&dir, &format!("images/{label}.pgm"), &recon)?;
                    let status = if q.rmse.is_finite() { "ok" } else { "non_finite" };
                    row.extend([num(q.rmse), format_psnr(q.psnr), num(q.max_abs), status.into()]);
                }
                Err(e) => {
                    let status = match e.downcast_ref::<psept::Error>() {
                        Some(psept::Error::PrecisionLoss { .. }) => "overflow",
                        _ => return Err(e),
                    };
                    row.extend([String::new(), String::new(), String::new(), status.into()]);
                }
            }
            rows.push(row);
        }
    }
    let header = ["image", "method", "C", "feature_count", "rmse", "psnr_db", "max_abs", "status"];
    dir.write_csv("results.csv", None, &header, &rows)?;
    dir.finish()?;
    Ok(Outcome::ok(format!("wrote {} reconstruction(s) to {}", rows.len(), cfg.out.display())))
}

#[derive(Serialize)]
struct KernelEntry {
    file: String,
    n: usize,
    m: i64,
    part: &'static str,
    /// Sample value mapped to the brightest gray level; zero maps to mid gray.
    scale: f64,
}

#[derive(Serialize)]
struct KernelIndexFile {
    n_r: usize,
    n_theta: usize,
    r_max: f64,
    size: usize,
    kernels: Vec<KernelEntry>,
}

fn cmd_kernels(cfg: &RunConfig) -> anyhow::Result<Outcome> {
    let grid = cfg.grid_for(cfg.size, cfg.size)?;
    let dir = RunDir::create(cfg)?;
    let n_top = (cfg.c as usize).min(grid.n_r() - 1);
    let m_top = (cfg.c as i64).min(grid.m_max());
    let mut entries = Vec::new();
    for n in 0..=n_top {
        for m in -m_top..=m_top {
            let samples = kernel_samples(&grid, KernelIndex { n, m })?;
            for (part, polar) in [("re", samples.re()), ("im", samples.im())] {
                let peak = polar.samples().iter().fold(0.0f64, |a, v| a.max(v.abs()));
                let scale = if peak > 0.0 { peak } else { 1.0 };
                let unit = polar.map(|v| v / scale);
                let img = polar_to_cart(&unit, cfg.size, cfg.size, 0.0).with_range(ValueRange::SIGNED_UNIT);
                let file = format!("K_{n}_{m}_{part}.pgm");
                save_pgm(&img, &dir.path(&format!("kernels/{file}"))?, BitDepth::Eight)?;
                entries.push(KernelEntry { file, n, m, part, scale });
            }
        }
    }
    let index = KernelIndexFile {
        n_r: grid.n_r(),
        n_theta: grid.n_theta(),
        r_max: grid.r_max(),
        size: cfg.size,
        kernels: entries,
    };
    dir.write_text("kernels/index.json", &json(&index))?;
    dir.finish()?;
    Ok(Outcome::ok(format!("rendered {} kernel image(s)", index.kernels.len())))
}

fn feature_rows(engine: &Engine, method: Method, images: &[NamedImage], complex: bool) -> anyhow::Result<Vec<Vec<f64>>> {
    images
        .par_iter()
        .map(|img| {
            if complex {
                engine.complex_features(method, &img.image)
            } else {
                engine.magnitude_features(method, &img.image)
            }
        })
        .collect()
}

fn feature_csv(
    dir: &RunDir,
    rel: &str,
    meta: &str,
    images: &[NamedImage],
    features: &[Vec<f64>],
) -> anyhow::Result<()> {
    let dim = features.first().map_or(0, Vec::len);
    let mut header = vec!["path".to_string(), "label".to_string()];
    header.extend((0..dim).map(|i| format!("f_{i}")));
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    let rows: Vec<Vec<String>> = images
        .iter()
        .zip(features)
        .map(|(img, f)| {
            let mut row = vec![img.name.clone(), img.label.clone()];
            row.extend(f.iter().map(|&v| num(v)));
            row
        })
        .collect();
    dir.write_csv(rel, Some(&format!("meta: {meta}")), &header, &rows)?;
    Ok(())
}

fn cmd_features(cfg: &RunConfig) -> anyhow::Result<Outcome> {
    let images = load_inputs(cfg)?;
    let dir = RunDir::create(cfg)?;
    let engine = Engine::new(cfg);
    let complex = cfg.features == FeatureChoice::Complex;
    let mut rows = Vec::new();
    for &method in &cfg.methods {
        let feats = dir.timed(format!("features/{method}"), || feature_rows(&engine, method, &images, complex))?;
        let rel = format!("features/{method}.csv");
        feature_csv(&dir, &rel, &engine.feature_descriptor(method, complex), &images, &feats)?;
        let dim = feats.first().map_or(0, Vec::len);
        rows.push(vec![method.to_string(), images.len().to_string(), dim.to_string(), rel]);
    }
    dir.write_csv("results.csv", None, &["method", "images", "dimension", "features"], &rows)?;
    dir.finish()?;
    Ok(Outcome::ok(format!("wrote features for {} method(s)", rows.len())))
}

/// One row of the reconstruction sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub image: String,
    pub method: Method,
    pub target: usize,
    /// `None` when even the smallest selection exceeds the target.
    pub c: Option<u32>,
    pub outcome: Option<ReconOutcome>,
}

impl SweepRow {
    pub fn feature_count(&self) -> Option<usize> {
        self.c.map(|c| self.method.count(c))
    }

    fn csv(&self) -> Vec<String> {
        let (rmse, psnr) = match self.outcome.as_ref().and_then(ReconOutcome::report) {
            Some(q) => (num(q.rmse), format_psnr(q.psnr)),
            None => (String::new(), String::new()),
        };
        let status = match &self.outcome {
            Some(o) => o.status(),
            None => "below_minimum",
        };
        vec![
            self.image.clone(),
            self.method.to_string(),
            self.target.to_string(),
            self.c.map(|c| c.to_string()).unwrap_or_default(),
            self.feature_count().map(|n| n.to_string()).unwrap_or_default(),
            rmse,
            psnr,
            status.to_string(),
        ]
    }
}

pub const SWEEP_HEADER: [&str; 8] = ["image", "method", "target", "C", "feature_count", "rmse", "psnr_db", "status"];

/// Reconstruction quality of every method at every feature target. Targets
/// map to the largest complexity whose selection fits; each distinct
/// (image, method, C) is evaluated once.
pub fn reconstruction_sweep(
    engine: &Engine,
    images: &[NamedImage],
    dir: Option<&RunDir>,
) -> anyhow::Result<Vec<SweepRow>> {
    let cfg = engine.config();
    let mut items = Vec::new();
    for (i, _) in images.iter().enumerate() {
        for &method in &cfg.methods {
            let mut cs: Vec<u32> = cfg.targets.iter().filter_map(|&t| method.c_for_target(t)).collect();
            cs.sort_unstable();
            cs.dedup();
            items.extend(cs.into_iter().map(|c| (i, method, c)));
        }
    }
    let results: Vec<((usize, Method, u32), ReconOutcome)> = items
        .par_iter()
        .map(|&(i, method, c)| {
            let img = &images[i];
            let label = format!("sweep/{}_{method}_C{c:03}", image_tag(i, img));
            let outcome = match dir {
                Some(d) => d.timed(label, || engine.evaluate_reconstruction(method, &img.image, c)),
                None => engine.evaluate_reconstruction(method, &img.image, c),
            };
            ((i, method, c), outcome)
        })
        .collect();
    let outcomes: BTreeMap<(usize, Method, u32), ReconOutcome> = results.into_iter().collect();
    let mut rows = Vec::new();
    for (i, img) in images.iter().enumerate() {
        for &method in &cfg.methods {
            for &target in &cfg.targets {
                let c = method.c_for_target(target);
                let outcome = c.map(|c| outcomes[&(i, method, c)].clone());
                rows.push(SweepRow {
                    image: img.name.clone(),
                    method,
                    target,
                    c,
                    outcome,
                });
            }
        }
    }
    rows.sort_by(|a, b| {
        (&a.image, a.method, a.target).cmp(&(&b.image, b.method, b.target))
    });
    Ok(rows)
}

fn cmd_bench_reconstruction(cfg: &RunConfig) -> anyhow::Result<Outcome> {
    if cfg.targets.is_empty() {
        bail!("no feature targets configured");
    }
    let images = load_inputs(cfg)?;
    let dir = RunDir::create(cfg)?;
    let engine = Engine::new(cfg);
    let rows = reconstruction_sweep(&engine, &images, Some(&dir))?;
    if cfg.write_images {
        for (i, img) in images.iter().enumerate() {
            for &method in &cfg.methods {
                let mut cs: Vec<u32> = cfg.targets.iter().filter_map(|&t| method.c_for_target(t)).collect();
                cs.dedup();
                for c in cs {
                    if let Ok(recon) = engine.reconstruct(method, &img.image, c) {
                        let rel = format!("images/{}_{method}_C{c:03}.pgm", image_tag(i, img));
                        write_reconstruction(&dir, &rel, &recon)?;
                    }
                }
            }
        }
    }
    let body: Vec<Vec<String>> = rows.iter().map(SweepRow::csv).collect();
    dir.write_csv("results.csv", None, &SWEEP_HEADER, &body)?;
    dir.finish()?;
    Ok(Outcome::ok(format!("reconstruction sweep: {} row(s)", body.len())))
}

/// Mean and max unit-normalized feature distance per (method, angle).
#[derive(Debug, Clone, PartialEq)]
pub struct RotationRow {
    pub method: Method,
    pub angle_deg: f64,
    pub mean_distance: f64,
    pub max_distance: f64,
}

pub const ROTATION_HEADER: [&str; 4] = ["method", "angle_deg", "mean_distance", "max_distance"];

pub fn rotation_bench(engine: &Engine, images: &[NamedImage]) -> anyhow::Result<Vec<RotationRow>> {
    let cfg = engine.config();
    let mut rows = Vec::new();
    for &method in &cfg.methods {
        let base: Vec<Vec<f64>> = images
            .par_iter()
            .map(|img| engine.magnitude_features(method, &img.image))
            .collect::<anyhow::Result<_>>()?;
        let per_angle: Vec<RotationRow> = cfg
            .angles
            .par_iter()
            .map(|&angle| {
                let mut dists = Vec::with_capacity(images.len());
                for (img, f0) in images.iter().zip(&base) {
                    let f = engine.magnitude_features(method, &rotate_for_bench(&img.image, angle))?;
                    dists.push(euclidean_distance_slices(f0, &f, true)?);
                }
                Ok(RotationRow {
                    method,
                    angle_deg: angle,
                    mean_distance: dists.iter().sum::<f64>() / dists.len() as f64,
                    max_distance: dists.iter().copied().fold(0.0, f64::max),
                })
            })
            .collect::<anyhow::Result<_>>()?;
        rows.extend(per_angle);
    }
    rows.sort_by(|a, b| a.method.cmp(&b.method).then(a.angle_deg.total_cmp(&b.angle_deg)));
    Ok(rows)
}

fn cmd_bench_rotation(cfg: &RunConfig) -> anyhow::Result<Outcome> {
    if cfg.angles.is_empty() {
        bail!("no angles configured");
    }
    let images = load_inputs(cfg)?;
    let dir = RunDir::create(cfg)?;
    let engine = Engine::new(cfg);
    let rows = dir.timed("bench-rotation", || rotation_bench(&engine, &images))?;
    let body: Vec<Vec<String>> = rows
        .iter()
        .map(|r| vec![r.method.to_string(), num(r.angle_deg), num(r.mean_distance), num(r.max_distance)])
        .collect();
    dir.write_csv("results.csv", None, &ROTATION_HEADER, &body)?;
    dir.finish()?;
    Ok(Outcome::ok(format!("rotation bench: {} row(s)", body.len())))
}

/// Seed of the noise added to image `index` under run seed `seed`.
pub fn noise_seed(seed: u64, index: usize) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(index as u64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct NoiseRow {
    pub method: Method,
    pub sigma: f64,
    pub seed: u64,
    /// Feature file, relative to the run directory.
    pub features: String,
    /// Mean unit-normalized distance to the noise-free features.
    pub mean_distance: f64,
}

pub const NOISE_HEADER: [&str; 5] = ["method", "sigma", "seed", "features", "mean_distance"];

/// Complex-part features of every image under each noise level and seed.
/// Feature tables are written when `dir` is given.
pub fn noise_bench(engine: &Engine, images: &[NamedImage], dir: Option<&RunDir>) -> anyhow::Result<Vec<NoiseRow>> {
    let cfg = engine.config();
    let mut rows = Vec::new();
    for &method in &cfg.methods {
        let clean = feature_rows(engine, method, images, true)?;
        for &sigma in &cfg.sigmas {
            for &seed in &cfg.seeds {
                let noisy: Vec<Vec<f64>> = images
                    .par_iter()
                    .enumerate()
                    .map(|(i, img)| {
                        let noisy = add_gaussian_noise(&img.image, sigma, noise_seed(seed, i))?;
                        engine.complex_features(method, &noisy)
                    })
                    .collect::<anyhow::Result<_>>()?;
                let mut total = 0.0;
                for (a, b) in clean.iter().zip(&noisy) {
                    total += euclidean_distance_slices(a, b, true)?;
                }
                let rel = format!("noise/{method}_sigma{}_seed{seed}.csv", num(sigma));
                if let Some(d) = dir {
                    let meta = format!("{} sigma={} seed={seed}", engine.feature_descriptor(method, true), num(sigma));
                    feature_csv(d, &rel, &meta, images, &noisy)?;
                }
                rows.push(NoiseRow {
                    method,
                    sigma,
                    seed,
                    features: rel,
                    mean_distance: total / images.len() as f64,
                });
            }
        }
    }
    rows.sort_by(|a, b| {
        a.method
            .cmp(&b.method)
            .then(a.sigma.total_cmp(&b.sigma))
            .then(a.seed.cmp(&b.seed))
    });
    Ok(rows)
}

fn cmd_bench_noise(cfg: &RunConfig) -> anyhow::Result<Outcome> {
    if cfg.sigmas.is_empty() {
        bail!("no noise levels configured");
    }
    let images = load_inputs(cfg)?;
    let dir = RunDir::create(cfg)?;
    let engine = Engine::new(cfg);
    let rows = dir.timed("bench-noise", || noise_bench(&engine, &images, Some(&dir)))?;
    let body: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            vec![
                r.method.to_string(),
                num(r.sigma),
                r.seed.to_string(),
                r.features.clone(),
                num(r.mean_distance),
            ]
        })
        .collect();
    dir.write_csv("results.csv", None, &NOISE_HEADER, &body)?;
    dir.finish()?;
    Ok(Outcome::ok(format!("noise bench: {} row(s)", body.len())))
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompareRow {
    pub method: Method,
    pub c: u32,
    pub feature_count: usize,
    pub condition_number: Result<f64, String>,
}

pub const COMPARE_HEADER: [&str; 5] = ["method", "C", "feature_count", "condition_number", "status"];

/// Feature counts and analysis-matrix conditioning of every method at
/// each complexity in `cfg.c_values`.
pub fn compare(cfg: &RunConfig) -> anyhow::Result<Vec<CompareRow>> {
    let grid = comparison_grid(cfg)?;
    let mut items = Vec::new();
    for &method in &cfg.methods {
        for &c in &cfg.c_values {
            items.push((method, c));
        }
    }
    let mut rows: Vec<CompareRow> = items
        .par_iter()
        .map(|&(method, c)| CompareRow {
            method,
            c,
            feature_count: method.count(c),
            condition_number: design_condition(method, c, cfg.size, &grid).map_err(|e| e.to_string()),
        })
        .collect();
    rows.sort_by_key(|r| (r.method, r.c));
    Ok(rows)
}

fn cmd_compare(cfg: &RunConfig) -> anyhow::Result<Outcome> {
    let dir = RunDir::create(cfg)?;
    let rows = dir.timed("compare", || compare(cfg)).context("comparing methods")?;
    let body: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            let (kappa, status) = match &r.condition_number {
                Ok(k) => (num(*k), "ok".to_string()),
                Err(e) => (String::new(), e.clone()),
            };
            vec![r.method.to_string(), r.c.to_string(), r.feature_count.to_string(), kappa, status]
        })
        .collect();
    dir.write_csv("results.csv", None, &COMPARE_HEADER, &body)?;
    dir.finish()?;
    Ok(Outcome::ok(format!("compare: {} row(s)", body.len())))
}
