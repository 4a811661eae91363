use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use psept::features::RuleKind;
use psept::Convention;
use psept_cli::config::{FeatureChoice, Method, RunConfig};

#[derive(Parser)]
#[command(name = "psept", version, about = "Polar separable transform toolkit and benchmark harness")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    flags: Flags,
}

#[derive(Subcommand)]
enum Command {
    /// Check orthonormality, inversion, energy and rotation properties on one grid.
    Validate,
    /// Write coefficient tables (binary and CSV) for each input.
    Transform { inputs: Vec<PathBuf> },
    /// Reconstruct each input from a truncated selection.
    Reconstruct { inputs: Vec<PathBuf> },
    /// Render the kernel gallery as PGM files.
    Kernels,
    /// Write feature tables for each method.
    Features { inputs: Vec<PathBuf> },
    /// Reconstruction error over a sweep of feature-count targets.
    BenchReconstruction { inputs: Vec<PathBuf> },
    /// Feature distance between inputs and rotated copies.
    BenchRotation { inputs: Vec<PathBuf> },
    /// Feature tables of noisy copies for each noise level and seed.
    BenchNoise { inputs: Vec<PathBuf> },
    /// Feature counts and analysis-matrix conditioning per method.
    Compare,
}

impl Command {
    fn split(self) -> (&'static str, Vec<PathBuf>) {
        match self {
            Command::Validate => ("validate", Vec::new()),
            Command::Transform { inputs } => ("transform", inputs),
            Command::Reconstruct { inputs } => ("reconstruct", inputs),
            Command::Kernels => ("kernels", Vec::new()),
            Command::Features { inputs } => ("features", inputs),
            Command::BenchReconstruction { inputs } => ("bench-reconstruction", inputs),
            Command::BenchRotation { inputs } => ("bench-rotation", inputs),
            Command::BenchNoise { inputs } => ("bench-noise", inputs),
            Command::Compare => ("compare", Vec::new()),
        }
    }
}

/// Flags override values from `--config`.
#[derive(Args)]
struct Flags {
    /// JSON run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Radial samples N_r.
    #[arg(long, global = true)]
    nr: Option<usize>,
    /// Angular samples N_theta (even).
    #[arg(long, global = true)]
    ntheta: Option<usize>,
    /// Outer sampling radius as a fraction of the disk radius.
    #[arg(long, global = true)]
    rmax: Option<f64>,
    /// orthonormal or paper-literal.
    #[arg(long, global = true)]
    convention: Option<Convention>,
    /// pyramidal, zm, pzm or pcet.
    #[arg(long, global = true)]
    rule: Option<RuleKind>,
    /// Selection complexity.
    #[arg(long = "C", global = true)]
    c: Option<u32>,
    /// Comma-separated seeds.
    #[arg(long, global = true, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Comma-separated methods: psept, zernike, pzernike, pct, pst, pcet.
    #[arg(long, global = true, value_delimiter = ',')]
    methods: Option<Vec<Method>>,
    /// Comma-separated rotation angles in degrees.
    #[arg(long, global = true, value_delimiter = ',', allow_hyphen_values = true)]
    angles: Option<Vec<f64>>,
    /// Comma-separated noise standard deviations.
    #[arg(long, global = true, value_delimiter = ',')]
    sigmas: Option<Vec<f64>>,
    /// Comma-separated feature-count targets.
    #[arg(long, global = true, value_delimiter = ',')]
    targets: Option<Vec<usize>>,
    /// Comma-separated complexities for `compare`.
    #[arg(long = "c-values", global = true, value_delimiter = ',')]
    c_values: Option<Vec<u32>>,
    /// Highest radial mode of the magnitude invariants.
    #[arg(long = "n-max", global = true)]
    n_max: Option<usize>,
    /// Highest power index of the magnitude invariants.
    #[arg(long = "k-max", global = true)]
    k_max: Option<u32>,
    /// magnitude or complex.
    #[arg(long, global = true, value_parser = parse_features)]
    features: Option<FeatureChoice>,
    /// Side of generated images and kernel renderings.
    #[arg(long, global = true)]
    size: Option<usize>,
    /// Number of generated images when no inputs are given.
    #[arg(long, global = true)]
    synthetic: Option<usize>,
    /// Also write reconstructed images.
    #[arg(long = "write-images", global = true)]
    write_images: bool,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    workers: Option<usize>,
}

fn parse_features(s: &str) -> Result<FeatureChoice, String> {
    match s {
        "magnitude" => Ok(FeatureChoice::Magnitude),
        "complex" => Ok(FeatureChoice::Complex),
        _ => Err(format!("expected magnitude or complex, got {s:?}")),
    }
}

fn effective_config(cli: Cli) -> anyhow::Result<RunConfig> {
    let f = cli.flags;
    let mut cfg = match &f.config {
        Some(path) => RunConfig::from_json_file(path)?,
        None => RunConfig::default(),
    };
    let (command, inputs) = cli.command.split();
    cfg.command = command.to_string();
    if !inputs.is_empty() {
        cfg.inputs = inputs;
    }
    macro_rules! set {
        ($($flag:ident => $field:ident),*) => {
            $(if let Some(v) = f.$flag { cfg.$field = v; })*
        };
    }
    set!(rmax => r_max, convention => convention, rule => rule, c => c, seeds => seeds,
         out => out, methods => methods, angles => angles, sigmas => sigmas, targets => targets,
         c_values => c_values, n_max => n_max, k_max => k_max, features => features,
         size => size, synthetic => synthetic);
    if f.nr.is_some() {
        cfg.n_r = f.nr;
    }
    if f.ntheta.is_some() {
        cfg.n_theta = f.ntheta;
    }
    if f.workers.is_some() {
        cfg.workers = f.workers;
    }
    if f.write_images {
        cfg.write_images = true;
    }
    Ok(cfg)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cfg = match effective_config(Cli::parse()) {
        Ok(cfg) => cfg,
        Err(e) => {
            eprintln!("error: {e:#}");
            return ExitCode::from(2);
        }
    };
    if let Some(n) = cfg.workers {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            log::warn!("could not size the worker pool: {e}");
        }
    }
    match psept_cli::run(&cfg) {
        Ok(outcome) => {
            print!("{}", outcome.summary);
            if !outcome.summary.ends_with('\n') {
                println!();
            }
            if outcome.passed {
                ExitCode::SUCCESS
            } else {
                ExitCode::FAILURE
            }
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
