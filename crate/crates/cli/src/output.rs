//! Artifact writing: CSV tables, JSON reports and their metadata sidecars.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;
use serde_json::json;

use crate::config::RunConfig;

/// Version string recorded in every sidecar.
pub fn version() -> String {
    match option_env!("HESTON_GALERKIN_DESCRIBE") {
        Some(d) if !d.is_empty() => d.to_string(),
        _ => format!("v{}", env!("CARGO_PKG_VERSION")),
    }
}

/// Writes artifacts into one output directory for one subcommand.
pub struct Artifacts<'a> {
    dir: PathBuf,
    subcommand: &'a str,
    config: &'a RunConfig,
    written: Vec<PathBuf>,
}

impl<'a> Artifacts<'a> {
    /// Creates the output directory if needed.
    pub fn new(subcommand: &'a str, config: &'a RunConfig) -> Result<Self> {
        let dir = config.output_dir.clone();
        std::fs::create_dir_all(&dir).with_context(|| format!("cannot create output directory {}", dir.display()))?;
        Ok(Self {
            dir,
            subcommand,
            config,
            written: Vec::new(),
        })
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    /// Writes a CSV through `fill` and a `<name>.meta.json` sidecar carrying the header.
    pub fn csv(&mut self, name: &str, fill: impl FnOnce(&mut dyn Write) -> Result<()>) -> Result<PathBuf> {
        let p = self.path(name);
        {
            let f = File::create(&p).with_context(|| format!("cannot create {}", p.display()))?;
            let mut w = BufWriter::new(f);
            fill(&mut w)?;
            w.flush()?;
        }
        let text = std::fs::read_to_string(&p)?;
        let header = text.lines().next().unwrap_or_default();
        let rows = text.lines().count().saturating_sub(1);
        let meta = json!({
            "file": name,
            "subcommand": self.subcommand,
            "version": version(),
            "columns": header.split(',').collect::<Vec<_>>(),
            "rows": rows,
            "config": self.config,
        });
        let mp = self.path(&format!("{name}.meta.json"));
        write_json_file(&mp, &meta)?;
        self.written.push(p.clone());
        Ok(p)
    }

    /// Writes a pretty-printed JSON report.
    pub fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<PathBuf> {
        let p = self.path(name);
        write_json_file(&p, value)?;
        self.written.push(p.clone());
        Ok(p)
    }

    /// Paths written so far.
    pub fn written(&self) -> &[PathBuf] {
        &self.written
    }
}

fn write_json_file<T: Serialize + ?Sized>(p: &Path, value: &T) -> Result<()> {
    let f = File::create(p).with_context(|| format!("cannot create {}", p.display()))?;
    let mut w = BufWriter::new(f);
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

/// Shortest round-trip rendering of a float.
pub fn num(v: f64) -> String {
    format!("{v:e}")
}
