//! Self-check of the transform on one grid: kernel orthonormality,
//! agreement with explicit kernel-matrix projection, exact inversion,
//! energy preservation and lattice-rotation covariance.

use nalgebra::DVector;
use num_complex::Complex64;
use psept::bases::{all_indices, build_kernel_matrix};
use psept::features::magnitude_invariants;
use psept::metrics::{condition_number, orthogonality_error};
use psept::polar_grid::{PolarGrid, PolarImage};
use psept::transform::{energy_spatial, energy_spectral, lattice_angle, rotate_coefficients, Transform};
use psept::{CoefficientTable, Convention};
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;

pub const ORTHOGONALITY_TOL: f64 = 1e-12;
pub const CONDITION_TOL: f64 = 1e-10;
pub const PROJECTION_TOL: f64 = 1e-12;
pub const ROUND_TRIP_TOL: f64 = 1e-12;
pub const PARSEVAL_TOL: f64 = 1e-10;
pub const ROTATION_TOL: f64 = 1e-12;

/// Number of random polar images per data-dependent check.
pub const TRIALS: usize = 100;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    /// `pass`, `fail`, or `skipped: <reason>`.
    pub status: String,
    pub measured: Option<f64>,
    pub tolerance: Option<f64>,
}

impl Check {
    fn measured(name: &str, measured: f64, tolerance: f64) -> Self {
        Check {
            name: name.into(),
            status: if measured <= tolerance { "pass" } else { "fail" }.into(),
            measured: Some(measured),
            tolerance: Some(tolerance),
        }
    }

    fn skipped(name: &str, reason: &str) -> Self {
        Check {
            name: name.into(),
            status: format!("skipped: {reason}"),
            measured: None,
            tolerance: None,
        }
    }

    pub fn failed(&self) -> bool {
        self.status == "fail"
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub n_r: usize,
    pub n_theta: usize,
    pub r_max: f64,
    pub convention: Convention,
    pub trials: usize,
    pub seed: u64,
    pub checks: Vec<Check>,
    pub passed: bool,
}

impl ValidationReport {
    pub fn check(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }
}

/// Random polar images with samples uniform in `[0, 1)`.
pub fn random_polar_images(grid: &PolarGrid, count: usize, seed: u64) -> Vec<PolarImage> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| PolarImage::from_index_fn(grid, |_, _| rng.random::<f64>()))
        .collect()
}

fn max_abs_diff(a: &CoefficientTable, b: &CoefficientTable) -> f64 {
    a.values()
        .iter()
        .zip(b.values())
        .map(|(x, y)| (x - y).norm())
        .fold(0.0, f64::max)
}

pub fn run_validation(cfg: &RunConfig) -> anyhow::Result<ValidationReport> {
    cfg.check()?;
    let grid = cfg.validation_grid()?;
    let seed = cfg.seeds[0];
    let convention = cfg.convention;
    let transform = Transform::new(&grid);
    let images = random_polar_images(&grid, TRIALS, seed);
    let mut checks = Vec::new();

    let orders = all_indices(&grid);
    let kernels = build_kernel_matrix(&grid, &orders)?;
    // Rows are kernels, so their inner products are K K^H.
    let gram = &kernels * kernels.adjoint();
    checks.push(Check::measured("orthogonality", orthogonality_error(&gram)?, ORTHOGONALITY_TOL));
    let kappa = condition_number(&kernels)?;
    checks.push(Check::measured("condition_number", (kappa - 1.0).abs(), CONDITION_TOL));

    // Explicit projection: conj(K) applied to the flattened samples, with
    // the Jacobian weights and 1/(N_r N_theta) for the literal convention.
    let (n_r, n_theta) = (grid.n_r(), grid.n_theta());
    let analysis = kernels.conjugate();
    let mut projection_err: f64 = 0.0;
    for img in &images {
        let fast = transform.forward(img, convention)?;
        let weighted: Vec<Complex64> = img
            .samples()
            .iter()
            .enumerate()
            .map(|(i, &v)| match convention {
                Convention::Orthonormal => Complex64::new(v, 0.0),
                Convention::PaperLiteral => {
                    Complex64::new(v * grid.weights()[i % n_r] / (n_r * n_theta) as f64, 0.0)
                }
            })
            .collect();
        let reference = &analysis * DVector::from_vec(weighted);
        for (pos, (idx, c)) in fast.iter().enumerate() {
            debug_assert_eq!(orders[pos], idx);
            projection_err = projection_err.max((c - reference[pos]).norm());
        }
    }
    checks.push(Check::measured("kernel_projection", projection_err, PROJECTION_TOL));

    match convention {
        Convention::PaperLiteral => {
            checks.push(Check::skipped("round_trip", "no inverse"));
            checks.push(Check::skipped("parseval", "not energy preserving"));
        }
        Convention::Orthonormal => {
            let mut round_trip: f64 = 0.0;
            let mut parseval: f64 = 0.0;
            for img in &images {
                let coeffs = transform.forward(img, convention)?;
                let back = transform.inverse(&coeffs)?;
                for (a, b) in back.samples().iter().zip(img.samples()) {
                    round_trip = round_trip.max((a - b).norm());
                }
                let es = energy_spatial(img);
                parseval = parseval.max((es - energy_spectral(&coeffs)).abs() / es);
            }
            checks.push(Check::measured("round_trip", round_trip, ROUND_TRIP_TOL));
            checks.push(Check::measured("parseval", parseval, PARSEVAL_TOL));
        }
    }

    let n_max = cfg.n_max.min(n_r - 1);
    let (mut covariance, mut magnitudes): (f64, f64) = (0.0, 0.0);
    for img in &images {
        let coeffs = transform.forward(img, convention)?;
        let base = magnitude_invariants(&coeffs, n_max, cfg.k_max)?;
        for delta in 0..n_theta as i64 {
            let shifted = transform.forward(&img.shift_rows(delta), convention)?;
            let predicted = rotate_coefficients(&coeffs, lattice_angle(&grid, delta));
            covariance = covariance.max(max_abs_diff(&shifted, &predicted));
            let feats = magnitude_invariants(&shifted, n_max, cfg.k_max)?;
            for (a, b) in feats.values.iter().zip(&base.values) {
                magnitudes = magnitudes.max((a - b).abs());
            }
        }
    }
    checks.push(Check::measured("rotation_covariance", covariance, ROTATION_TOL));
    checks.push(Check::measured("magnitude_stability", magnitudes, ROTATION_TOL));

    let passed = !checks.iter().any(Check::failed);
    Ok(ValidationReport {
        n_r,
        n_theta,
        r_max: grid.r_max(),
        convention,
        trials: TRIALS,
        seed,
        checks,
        passed,
    })
}
