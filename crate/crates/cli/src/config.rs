use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{bail, Context};
use psept::baselines::MomentFamily;
use psept::bases::MAX_KERNEL_MATRIX_SIZE;
use psept::features::RuleKind;
use psept::polar_grid::{build_grid, default_dims, PolarGrid, DEFAULT_R_MAX};
use psept::Convention;
use serde::{Deserialize, Serialize};

/// A feature extractor under comparison.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Psept,
    Zernike,
    Pzernike,
    Pct,
    Pst,
    Pcet,
}

impl Method {
    pub const ALL: [Method; 6] = [
        Method::Psept,
        Method::Zernike,
        Method::Pzernike,
        Method::Pct,
        Method::Pst,
        Method::Pcet,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::Psept => "psept",
            Method::Zernike => "zernike",
            Method::Pzernike => "pzernike",
            Method::Pct => "pct",
            Method::Pst => "pst",
            Method::Pcet => "pcet",
        }
    }

    /// The moment family behind a baseline, `None` for PSepT.
    pub fn family(self) -> Option<MomentFamily> {
        match self {
            Method::Psept => None,
            Method::Zernike => Some(MomentFamily::Zernike),
            Method::Pzernike => Some(MomentFamily::PseudoZernike),
            Method::Pct => Some(MomentFamily::Pct),
            Method::Pst => Some(MomentFamily::Pst),
            Method::Pcet => Some(MomentFamily::Pcet),
        }
    }

    /// Number of features selected at complexity `c`.
    pub fn count(self, c: u32) -> usize {
        match self.family() {
            None => psept::SelectionRule::new(RuleKind::Pyramidal, c).closed_form_count(),
            Some(f) => f.count(c),
        }
    }

    /// Largest `c` whose feature count does not exceed `target`.
    pub fn c_for_target(self, target: usize) -> Option<u32> {
        match self.family() {
            None => psept::features::largest_c_for_target(RuleKind::Pyramidal, target),
            Some(f) => f.largest_c_for_target(target),
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = anyhow::Error;

    fn from_str(s: &str) -> anyhow::Result<Self> {
        Ok(match s.to_ascii_lowercase().as_str() {
            "psept" => Method::Psept,
            "zernike" | "zm" => Method::Zernike,
            "pzernike" | "pzm" | "pseudo_zernike" | "pseudo-zernike" => Method::Pzernike,
            "pct" => Method::Pct,
            "pst" => Method::Pst,
            "pcet" => Method::Pcet,
            other => bail!("unknown method {other:?}"),
        })
    }
}

/// Which feature vector `features` and `bench-noise` emit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureChoice {
    /// Rotation-invariant magnitudes.
    #[default]
    Magnitude,
    /// Real and imaginary parts of the selected coefficients.
    Complex,
}

/// Everything a run depends on. Written back as `config.json` next to the
/// results so a run can be repeated exactly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub command: String,
    pub inputs: Vec<PathBuf>,
    /// Polar grid size; when unset it follows the image size.
    pub n_r: Option<usize>,
    pub n_theta: Option<usize>,
    pub r_max: f64,
    pub convention: Convention,
    pub rule: RuleKind,
    #[serde(rename = "C")]
    pub c: u32,
    /// Magnitude-invariant shape: radial modes `0..=n_max`, powers `1..=k_max`.
    pub n_max: usize,
    pub k_max: u32,
    pub features: FeatureChoice,
    pub methods: Vec<Method>,
    pub angles: Vec<f64>,
    pub sigmas: Vec<f64>,
    /// Feature-count targets of the reconstruction sweep.
    pub targets: Vec<usize>,
    /// Complexities for `compare`.
    pub c_values: Vec<u32>,
    pub seeds: Vec<u64>,
    /// Number of generated test images used when `inputs` is empty.
    pub synthetic: usize,
    /// Side of generated images and kernel renderings.
    pub size: usize,
    pub write_images: bool,
    pub workers: Option<usize>,
    pub out: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            command: String::new(),
            inputs: Vec::new(),
            n_r: None,
            n_theta: None,
            r_max: DEFAULT_R_MAX,
            convention: Convention::Orthonormal,
            rule: RuleKind::Pyramidal,
            c: 8,
            n_max: 10,
            k_max: 3,
            features: FeatureChoice::Magnitude,
            methods: Method::ALL.to_vec(),
            angles: vec![0.0, 15.0, 30.0, 45.0, 60.0, 90.0],
            sigmas: vec![0.0, 0.02, 0.04, 0.06, 0.08, 0.1],
            targets: log_spaced_targets(50, 6000, 15),
            c_values: vec![5, 10, 15, 20],
            seeds: vec![0],
            synthetic: 1,
            size: 64,
            write_images: false,
            workers: None,
            out: PathBuf::from("out"),
        }
    }
}

/// `count` integers spaced evenly in log scale from `lo` to `hi` inclusive.
pub fn log_spaced_targets(lo: usize, hi: usize, count: usize) -> Vec<usize> {
    if count < 2 {
        return vec![lo];
    }
    let (a, b) = ((lo as f64).ln(), (hi as f64).ln());
    (0..count)
        .map(|i| (a + (b - a) * i as f64 / (count - 1) as f64).exp().round() as usize)
        .collect()
}

impl RunConfig {
    pub fn from_json_file(path: &Path) -> anyhow::Result<Self> {
        let text = fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config is always serializable")
    }

    /// Rejects inconsistent settings before any work starts.
    pub fn check(&self) -> anyhow::Result<()> {
        if let Some(n) = self.n_theta {
            if n == 0 || n % 2 != 0 {
                bail!("N_theta must be a positive even number, got {n}");
            }
        }
        if let Some(n) = self.n_r {
            if n < 2 {
                bail!("N_r must be at least 2, got {n}");
            }
        }
        if !(self.r_max > 0.0 && self.r_max <= 1.0) {
            bail!("R_max must lie in (0, 1], got {}", self.r_max);
        }
        if self.k_max == 0 {
            bail!("k_max must be at least 1");
        }
        if self.size < 2 {
            bail!("size must be at least 2, got {}", self.size);
        }
        if self.methods.is_empty() {
            bail!("no methods selected");
        }
        if self.seeds.is_empty() {
            bail!("no seeds given");
        }
        if let Some(s) = self.sigmas.iter().find(|s| !(**s >= 0.0 && **s <= 0.5)) {
            bail!("noise sigma {s} outside [0, 0.5]");
        }
        if self.angles.iter().any(|a| !a.is_finite()) {
            bail!("angles must be finite");
        }
        Ok(())
    }

    /// Grid for a `width x height` image: explicit dims win, otherwise the
    /// default for the inscribed disk.
    pub fn grid_for(&self, width: usize, height: usize) -> anyhow::Result<PolarGrid> {
        let (dr, dt) = default_dims(width.min(height));
        let grid = build_grid(self.n_r.unwrap_or(dr), self.n_theta.unwrap_or(dt), self.r_max)?;
        Ok(grid)
    }

    /// Grid used by `validate`; defaults to 8 x 16.
    pub fn validation_grid(&self) -> anyhow::Result<PolarGrid> {
        let n_r = self.n_r.unwrap_or(8);
        let n_theta = self.n_theta.unwrap_or(16);
        if n_r * n_theta > MAX_KERNEL_MATRIX_SIZE {
            bail!(
                "validation grid {n_r}x{n_theta} exceeds {MAX_KERNEL_MATRIX_SIZE} samples; \
                 the kernel-matrix checks are dense"
            );
        }
        Ok(build_grid(n_r, n_theta, self.r_max)?)
    }
}
