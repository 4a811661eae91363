//! Run directory layout and CSV writing.
//!
//! Result CSVs hold only values that are a pure function of the
//! configuration; wall-clock times go to `timings.csv` instead.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::time::Instant;

use anyhow::Context;

use crate::config::RunConfig;

/// Formats a float with the shortest representation that round-trips,
/// switching to exponent notation for very large or small magnitudes.
pub fn num(v: f64) -> String {
    if v.is_nan() {
        "nan".into()
    } else if v.is_infinite() {
        if v > 0.0 { "inf".into() } else { "-inf".into() }
    } else {
        format!("{v:?}")
    }
}

/// Output directory of one run.
pub struct RunDir {
    root: PathBuf,
    timings: Mutex<Vec<(String, f64)>>,
}

impl RunDir {
    /// Creates the directory and writes the effective configuration.
    pub fn create(cfg: &RunConfig) -> anyhow::Result<Self> {
        fs::create_dir_all(&cfg.out)
            .with_context(|| format!("creating output directory {}", cfg.out.display()))?;
        let dir = RunDir {
            root: cfg.out.clone(),
            timings: Mutex::new(Vec::new()),
        };
        dir.write_text("config.json", &(cfg.to_json() + "\n"))?;
        Ok(dir)
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    /// Path of `rel` inside the run, creating parent directories.
    pub fn path(&self, rel: &str) -> anyhow::Result<PathBuf> {
        let p = self.root.join(rel);
        if let Some(parent) = p.parent() {
            fs::create_dir_all(parent)
                .with_context(|| format!("creating {}", parent.display()))?;
        }
        Ok(p)
    }

    pub fn write_text(&self, rel: &str, text: &str) -> anyhow::Result<PathBuf> {
        let p = self.path(rel)?;
        fs::write(&p, text).with_context(|| format!("writing {}", p.display()))?;
        Ok(p)
    }

    /// Writes a CSV with LF line endings.
    pub fn write_csv(
        &self,
        rel: &str,
        comment: Option<&str>,
        header: &[&str],
        rows: &[Vec<String>],
    ) -> anyhow::Result<PathBuf> {
        let p = self.path(rel)?;
        fs::write(&p, csv_bytes(comment, header, rows)?)
            .with_context(|| format!("writing {}", p.display()))?;
        Ok(p)
    }

    /// Runs `f` and records its wall time under `label`.
    pub fn timed<T>(&self, label: impl Into<String>, f: impl FnOnce() -> T) -> T {
        let start = Instant::now();
        let out = f();
        let ms = start.elapsed().as_secs_f64() * 1e3;
        self.timings.lock().unwrap().push((label.into(), ms));
        out
    }

    /// Writes the timing sidecar. Labels are sorted, times are not stable.
    pub fn finish(self) -> anyhow::Result<()> {
        let mut timings = self.timings.into_inner().unwrap();
        timings.sort_by(|a, b| a.0.cmp(&b.0));
        let rows: Vec<Vec<String>> = timings
            .into_iter()
            .map(|(label, ms)| vec![label, format!("{ms:.3}")])
            .collect();
        let p = self.root.join("timings.csv");
        fs::write(&p, csv_bytes(None, &["item", "wall_ms"], &rows)?)
            .with_context(|| format!("writing {}", p.display()))?;
        Ok(())
    }
}

pub fn csv_bytes(comment: Option<&str>, header: &[&str], rows: &[Vec<String>]) -> anyhow::Result<Vec<u8>> {
    let mut buf = Vec::new();
    if let Some(c) = comment {
        buf.extend_from_slice(format!("# {c}\n").as_bytes());
    }
    {
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(&mut buf);
        w.write_record(header)?;
        for row in rows {
            w.write_record(row)?;
        }
        w.flush()?;
    }
    Ok(buf)
}
