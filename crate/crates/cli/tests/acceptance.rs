//! Acceptance suite. Runs every criterion at its stated tolerance, prints
//! one PASS/FAIL line per criterion and exits nonzero if any fails.

use std::fs;
use std::path::Path;
use std::time::Instant;

use nalgebra::DVector;
use num_complex::Complex64;
use psept::bases::{all_indices, build_kernel_matrix};
use psept::features::{complex_parts, magnitude_invariants, select, RuleKind, SelectOptions};
use psept::metrics::{condition_number, orthogonality_error};
use psept::polar_grid::{build_grid, PolarGrid, PolarImage, DEFAULT_R_MAX};
use psept::transform::{
    energy_spatial, energy_spectral, lattice_angle, rotate_coefficients, truncate, Transform,
};
use psept::{Convention, SelectionRule};
use psept_cli::commands::{reconstruction_sweep, rotation_bench};
use psept_cli::config::{log_spaced_targets, Method, RunConfig};
use psept_cli::experiments::{design_condition, Engine, NamedImage};
use psept_cli::synthetic::smooth_image;
use psept_cli::validate::random_polar_images;

struct Verdict {
    passed: bool,
    detail: String,
}

fn verdict(passed: bool, detail: String) -> Verdict {
    Verdict { passed, detail }
}

const VALIDATION_SIZES: [(usize, usize); 3] = [(4, 8), (8, 16), (16, 32)];

fn grid(n_r: usize, n_theta: usize) -> PolarGrid {
    build_grid(n_r, n_theta, DEFAULT_R_MAX).unwrap()
}

fn max_diff(a: &[Complex64], b: &[Complex64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
}

fn orthonormality() -> Verdict {
    let start = Instant::now();
    let mut worst: f64 = 0.0;
    for (n_r, n_theta) in VALIDATION_SIZES {
        let g = grid(n_r, n_theta);
        let k = build_kernel_matrix(&g, &all_indices(&g)).unwrap();
        worst = worst.max(orthogonality_error(&(&k * k.adjoint())).unwrap());
    }
    let secs = start.elapsed().as_secs_f64();
    verdict(
        worst <= 1e-12 && secs < 5.0,
        format!("max |G - I| = {worst:.3e} (<= 1e-12), {secs:.2} s (< 5 s)"),
    )
}

fn round_trip() -> Verdict {
    let g = grid(16, 32);
    let images = random_polar_images(&g, 100, 1);
    let start = Instant::now();
    let t = Transform::new(&g);
    let mut worst: f64 = 0.0;
    for img in &images {
        let back = t.inverse(&t.forward(img, Convention::Orthonormal).unwrap()).unwrap();
        for (a, b) in back.samples().iter().zip(img.samples()) {
            worst = worst.max((a - b).norm());
        }
    }
    let secs = start.elapsed().as_secs_f64();
    verdict(
        worst <= 1e-12 && secs < 2.0,
        format!("max abs error {worst:.3e} (<= 1e-12) over 100 images, {secs:.3} s (< 2 s)"),
    )
}

fn parseval() -> Verdict {
    let g = grid(16, 32);
    let t = Transform::new(&g);
    let mut worst: f64 = 0.0;
    for img in &random_polar_images(&g, 100, 1) {
        let c = t.forward(img, Convention::Orthonormal).unwrap();
        let es = energy_spatial(img);
        worst = worst.max((es - energy_spectral(&c)).abs() / es);
    }
    verdict(worst <= 1e-10, format!("max relative energy mismatch {worst:.3e} (<= 1e-10)"))
}

fn rotation_covariance() -> Verdict {
    let g = grid(16, 32);
    let t = Transform::new(&g);
    let (mut phase_err, mut feat_err): (f64, f64) = (0.0, 0.0);
    for img in &random_polar_images(&g, 100, 2) {
        let c = t.forward(img, Convention::Orthonormal).unwrap();
        let f0 = magnitude_invariants(&c, 15, 3).unwrap();
        for delta in 0..g.n_theta() as i64 {
            let shifted = t.forward(&img.shift_rows(delta), Convention::Orthonormal).unwrap();
            let predicted = rotate_coefficients(&c, lattice_angle(&g, delta));
            phase_err = phase_err.max(max_diff(shifted.values(), predicted.values()));
            let f = magnitude_invariants(&shifted, 15, 3).unwrap();
            for (a, b) in f.values.iter().zip(&f0.values) {
                feat_err = feat_err.max((a - b).abs());
            }
        }
    }
    verdict(
        phase_err <= 1e-12 && feat_err <= 1e-12,
        format!("phase error {phase_err:.3e}, magnitude drift {feat_err:.3e} (both <= 1e-12), all 32 shifts"),
    )
}

fn cartesian_rotation() -> Verdict {
    let cfg = RunConfig {
        methods: vec![Method::Psept],
        angles: (0..360).map(f64::from).collect(),
        ..RunConfig::default()
    };
    let images = vec![NamedImage {
        name: "smooth".into(),
        label: String::new(),
        image: smooth_image(64, 0),
    }];
    let rows = rotation_bench(&Engine::new(&cfg), &images).unwrap();
    let worst = rows.iter().map(|r| r.max_distance).fold(0.0, f64::max);
    let cardinal = rows
        .iter()
        .filter(|r| r.angle_deg % 90.0 == 0.0)
        .map(|r| r.max_distance)
        .fold(0.0, f64::max);
    let at = |a: f64| rows.iter().find(|r| r.angle_deg == a).unwrap().max_distance;
    verdict(
        rows.len() == 360 && worst < 0.05 && cardinal < 1e-6,
        format!(
            "max distance {worst:.4e} (< 0.05), cardinal max {cardinal:.3e} (< 1e-6), 45deg {:.3e} vs 90deg {:.3e}",
            at(45.0),
            at(90.0)
        ),
    )
}

fn oracle_equivalence() -> Verdict {
    let mut worst: f64 = 0.0;
    for (n_r, n_theta) in VALIDATION_SIZES {
        let g = grid(n_r, n_theta);
        assert!(g.len() <= 512);
        let analysis = build_kernel_matrix(&g, &all_indices(&g)).unwrap().conjugate();
        let t = Transform::new(&g);
        for img in &random_polar_images(&g, 20, 3) {
            let fast = t.forward(img, Convention::Orthonormal).unwrap();
            let v = DVector::from_iterator(g.len(), img.samples().iter().map(|&x| Complex64::new(x, 0.0)));
            worst = worst.max(max_diff(fast.values(), (&analysis * v).as_slice()));
        }
    }
    verdict(worst <= 1e-12, format!("max deviation from conj(K) g: {worst:.3e} (<= 1e-12), 20 images per grid"))
}

fn conditioning() -> Verdict {
    let mut psept_worst: f64 = 0.0;
    for (n_r, n_theta) in VALIDATION_SIZES {
        let g = grid(n_r, n_theta);
        let kappa = condition_number(&build_kernel_matrix(&g, &all_indices(&g)).unwrap()).unwrap();
        psept_worst = psept_worst.max((kappa - 1.0).abs());
    }
    let g = grid(32, 64);
    let zernike: Vec<f64> = [5, 10, 15, 20]
        .iter()
        .map(|&c| design_condition(Method::Zernike, c, 64, &g).unwrap())
        .collect();
    let psept20 = design_condition(Method::Psept, 20, 64, &g).unwrap();
    let ratio = zernike[3] / psept20;
    let monotone = zernike.windows(2).all(|w| w[1] >= w[0]);
    verdict(
        psept_worst <= 1e-10 && ratio >= 10.0 && monotone,
        format!(
            "|kappa_psept - 1| = {psept_worst:.3e}; zernike kappa C=5..20 {:?}; ratio at C=20 {ratio:.2} (>= 10)",
            zernike.iter().map(|k| format!("{k:.3}")).collect::<Vec<_>>()
        ),
    )
}

fn reconstruction_stability() -> Verdict {
    let start = Instant::now();
    let cfg = RunConfig {
        methods: vec![Method::Psept, Method::Zernike, Method::Pzernike],
        targets: log_spaced_targets(50, 6000, 15),
        ..RunConfig::default()
    };
    let image = smooth_image(128, 0);
    let images = vec![NamedImage {
        name: "smooth".into(),
        label: String::new(),
        image: image.clone(),
    }];
    let engine = Engine::new(&cfg);
    let rows = reconstruction_sweep(&engine, &images, None).unwrap();
    let rmse = |m: Method| -> Vec<f64> {
        rows.iter()
            .filter(|r| r.method == m)
            .map(|r| r.outcome.as_ref().map_or(f64::INFINITY, |o| o.rmse_or_inf()))
            .collect()
    };
    let psept = rmse(Method::Psept);
    let psept_ok = psept.len() == 15 && psept.windows(2).all(|w| w[1] <= w[0]);
    let mut notes = vec![format!("psept rmse {:.3e} -> {:.3e}", psept[0], psept[14])];
    let mut blowups = true;
    for m in [Method::Zernike, Method::Pzernike] {
        let at20 = engine.evaluate_reconstruction(m, &image, 20).rmse_or_inf();
        let worst = rmse(m).into_iter().fold(0.0, f64::max);
        blowups &= worst > at20;
        notes.push(format!("{m} C=20 {at20:.3e}, worst {worst:.3e}"));
    }
    let secs = start.elapsed().as_secs_f64();
    notes.push(format!("{secs:.1} s (< 600 s)"));
    verdict(psept_ok && blowups && secs < 600.0, notes.join("; "))
}

fn selection_counts() -> Verdict {
    let parity = SelectionRule::new(RuleKind::RadialWithParity, 12);
    let pyr8 = SelectionRule::new(RuleKind::Pyramidal, 8);
    let pyr0 = SelectionRule::new(RuleKind::Pyramidal, 0);
    let g = grid(16, 32);
    let coeffs = Transform::new(&g)
        .forward(&random_polar_images(&g, 1, 4)[0], Convention::Orthonormal)
        .unwrap();
    let parts = complex_parts(&select(&coeffs, pyr8, SelectOptions::default()), Some(pyr8)).len();
    let single = select(&coeffs, pyr0, SelectOptions::default()).len();
    let counts = (parity.closed_form_count(), parity.enumerate().len(), parts, single);
    verdict(
        counts == (91, 91, 162, 1),
        format!(
            "radial_with_parity C=12: {} (enumerated {}), pyramidal C=8 complex parts: {}, pyramidal C=0: {}",
            counts.0, counts.1, counts.2, counts.3
        ),
    )
}

fn truncation_convergence() -> Verdict {
    let g = grid(64, 64);
    let f = PolarImage::from_fn(&g, |theta, r| (r * theta.cos() + 0.5 * r * theta.sin()).exp());
    let t = Transform::new(&g);
    let c = t.forward(&f, Convention::Orthonormal).unwrap();
    let err = |n_star: usize, m_star: usize| -> f64 {
        let back = t.inverse(&truncate(&c, n_star, m_star).unwrap()).unwrap();
        back.samples()
            .iter()
            .zip(f.samples())
            .map(|(a, b)| (a - b).norm_sqr())
            .sum::<f64>()
            .sqrt()
    };
    let m_full = g.m_max() as usize;
    let radial: Vec<f64> = [4, 8, 16].iter().map(|&n| err(n, m_full)).collect();
    let angular: Vec<f64> = [2, 4, 8].iter().map(|&m| err(g.n_r() - 1, m)).collect();
    let halves = |e: &[f64]| e.windows(2).all(|w| w[0] >= 2.0 * w[1]);
    verdict(
        halves(&radial) && halves(&angular),
        format!(
            "radial N_r*=4,8,16: {:.3e} {:.3e} {:.3e}; angular M*=2,4,8: {:.3e} {:.3e} {:.3e}",
            radial[0], radial[1], radial[2], angular[0], angular[1], angular[2]
        ),
    )
}

/// Every file except the timing sidecar, relative path -> bytes.
fn artifacts(root: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in fs::read_dir(&dir).unwrap() {
            let p = entry.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else if p.file_name().unwrap() != "timings.csv" {
                let rel = p.strip_prefix(root).unwrap().to_string_lossy().into_owned();
                out.push((rel, fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}

fn determinism() -> Verdict {
    let tmp = tempfile::tempdir().unwrap();
    let base = RunConfig {
        size: 32,
        synthetic: 3,
        seeds: vec![1, 2],
        sigmas: vec![0.0, 0.05, 0.1],
        targets: vec![10, 40, 120],
        c: 6,
        c_values: vec![2, 4],
        ..RunConfig::default()
    };
    let commands = ["bench-reconstruction", "bench-rotation", "bench-noise", "compare", "features"];
    let mut mismatched = Vec::new();
    let mut files = 0;
    for command in commands {
        let runs: Vec<_> = ["a", "b"]
            .iter()
            .map(|run| {
                let cfg = RunConfig {
                    command: command.into(),
                    out: tmp.path().join(run).join(command),
                    ..base.clone()
                };
                psept_cli::run(&cfg).unwrap();
                // The echoed config names the output directory, which
                // differs between the two runs by construction.
                artifacts(&cfg.out)
                    .into_iter()
                    .filter(|(rel, _)| rel != "config.json")
                    .collect::<Vec<_>>()
            })
            .collect();
        files += runs[0].len();
        if runs[0] != runs[1] || runs[0].is_empty() {
            mismatched.push(command);
        }
    }
    verdict(
        mismatched.is_empty(),
        format!("{} commands, {files} artifact files compared byte for byte; mismatches: {mismatched:?}", commands.len()),
    )
}

fn main() {
    let criteria: [(&str, fn() -> Verdict); 11] = [
        ("orthonormality", orthonormality),
        ("exact reconstruction", round_trip),
        ("parseval", parseval),
        ("rotation covariance", rotation_covariance),
        ("cartesian rotation invariance", cartesian_rotation),
        ("oracle equivalence", oracle_equivalence),
        ("conditioning contrast", conditioning),
        ("reconstruction stability ordering", reconstruction_stability),
        ("selection-count fixtures", selection_counts),
        ("truncation convergence", truncation_convergence),
        ("determinism", determinism),
    ];
    let mut failures = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let v = check();
        if !v.passed {
            failures += 1;
        }
        println!(
            "criterion {:>2} {:<34} {}  {}",
            i + 1,
            name,
            if v.passed { "PASS" } else { "FAIL" },
            v.detail
        );
    }
    println!("acceptance: {} passed, {failures} failed", criteria.len() - failures);
    if failures > 0 {
        std::process::exit(1);
    }
}
