use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::ValueEnum;
use serde::Serialize;
use serde_json::json;

use crate::config::LoadedConfig;
use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

impl Format {
    pub fn ext(self) -> &'static str {
        match self {
            Format::Csv => "csv",
            Format::Json => "json",
        }
    }
}

/// Where and how a command writes its artifacts.
pub struct Output<'a> {
    pub dir: PathBuf,
    pub format: Format,
    pub seed: u64,
    pub command: &'static str,
    pub config: &'a LoadedConfig,
}

impl Output<'_> {
    pub fn create(&self, name: &str) -> Result<(PathBuf, BufWriter<File>), CliError> {
        std::fs::create_dir_all(&self.dir)?;
        let path = self.dir.join(name);
        let file = File::create(&path)?;
        Ok((path, BufWriter::new(file)))
    }

    /// Writes `value` as `<stem>.json` (JSON format) or through `csv` (CSV format).
    pub fn table<T: Serialize>(
        &self,
        stem: &str,
        value: &T,
        csv: impl FnOnce(&mut BufWriter<File>) -> Result<(), CliError>,
    ) -> Result<PathBuf, CliError> {
        let (path, mut w) = self.create(&format!("{stem}.{}", self.format.ext()))?;
        match self.format {
            Format::Csv => csv(&mut w)?,
            Format::Json => {
                serde_json::to_writer_pretty(&mut w, value).map_err(bipgps_core::Error::from)?
            }
        }
        w.flush()?;
        Ok(path)
    }

    /// JSON sidecar with the provenance of `artifact`.
    pub fn sidecar(&self, artifact: &Path, extra: serde_json::Value) -> Result<PathBuf, CliError> {
        let name = artifact
            .file_name()
            .and_then(|n| n.to_str())
            .unwrap_or("output");
        let (path, mut w) = self.create(&format!("{name}.meta.json"))?;
        let meta = json!({
            "artifact": name,
            "command": self.command,
            "seed": self.seed,
            "config_sha256": self.config.sha256(),
            "preset": self.config.preset,
            "version": env!("CARGO_PKG_VERSION"),
            "details": extra,
        });
        serde_json::to_writer_pretty(&mut w, &meta).map_err(bipgps_core::Error::from)?;
        w.flush()?;
        Ok(path)
    }
}
