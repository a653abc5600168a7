use std::fs::{self, File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use serde::Serialize;

use crate::error::{CliError, Result};

pub const MANIFEST_FILE: &str = "manifest.jsonl";

/// An output directory that refuses to overwrite files without `--force`.
pub struct OutDir {
    root: PathBuf,
    written: Vec<String>,
}

impl OutDir {
    /// Creates `root` if needed and checks that none of `files` exist yet
    /// unless `force` is set.
    pub fn prepare(root: &Path, force: bool, files: &[&str]) -> Result<Self> {
        fs::create_dir_all(root).map_err(CliError::io(root))?;
        if !force {
            if let Some(existing) = files.iter().map(|f| root.join(f)).find(|p| p.exists()) {
                return Err(CliError::Config(format!(
                    "{} already exists (pass --force to overwrite)",
                    existing.display()
                )));
            }
        }
        Ok(Self {
            root: root.to_owned(),
            written: Vec::new(),
        })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    /// Opens `name` for writing, runs `body` and flushes.
    pub fn write<F>(&mut self, name: &str, body: F) -> Result<()>
    where
        F: FnOnce(&mut BufWriter<File>) -> std::result::Result<(), Box<dyn std::error::Error>>,
    {
        let path = self.path(name);
        let file = File::create(&path).map_err(CliError::io(&path))?;
        let mut w = BufWriter::new(file);
        body(&mut w).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
        w.flush().map_err(CliError::io(&path))?;
        self.written.push(name.to_owned());
        Ok(())
    }

    pub fn written(&self) -> &[String] {
        &self.written
    }
}

#[derive(Serialize)]
struct ManifestEntry<'a> {
    command: &'a str,
    config: serde_json::Value,
    inputs: Vec<String>,
    outputs: &'a [String],
    seed: Option<u64>,
    version: &'static str,
    started_unix: f64,
    duration_s: f64,
}

/// Timing and provenance of one command run.
pub struct Run {
    command: &'static str,
    wall: SystemTime,
    clock: Instant,
}

impl Run {
    pub fn start(command: &'static str) -> Self {
        Self {
            command,
            wall: SystemTime::now(),
            clock: Instant::now(),
        }
    }

    /// Appends one line to the directory's manifest.
    pub fn record(
        &self,
        out: &OutDir,
        config: serde_json::Value,
        inputs: &[&Path],
        seed: Option<u64>,
    ) -> Result<()> {
        let entry = ManifestEntry {
            command: self.command,
            config,
            inputs: inputs.iter().map(|p| p.display().to_string()).collect(),
            outputs: out.written(),
            seed,
            version: env!("CARGO_PKG_VERSION"),
            started_unix: self.wall.duration_since(UNIX_EPOCH).map(|d| d.as_secs_f64()).unwrap_or(0.0),
            duration_s: self.clock.elapsed().as_secs_f64(),
        };
        let path = out.path(MANIFEST_FILE);
        let mut file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&path)
            .map_err(CliError::io(&path))?;
        let line = serde_json::to_string(&entry).map_err(CliError::data)?;
        writeln!(file, "{line}").map_err(CliError::io(&path))?;
        Ok(())
    }
}
