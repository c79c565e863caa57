//! Output directory with atomic file writes and a manifest.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::RunConfig;
use crate::CliError;

pub const MANIFEST: &str = "manifest.json";
const PARTIAL: &str = ".partial";

#[derive(Debug, Clone, Serialize)]
pub struct OutputFile {
    pub file: String,
    pub sha256: String,
}

#[derive(Debug, Serialize)]
pub struct Manifest<'a> {
    pub manifest_version: u32,
    pub tool: &'static str,
    pub version: &'static str,
    pub command: &'a str,
    pub status: &'a str,
    pub seed: u64,
    pub config: &'a RunConfig,
    pub outputs: &'a [OutputFile],
    pub summary: serde_json::Value,
    pub warnings: &'a [String],
}

pub struct OutputDir {
    dir: PathBuf,
    files: Vec<OutputFile>,
    /// Write everything under a `.partial` suffix and never rename.
    partial: bool,
}

fn io(path: &Path, e: std::io::Error) -> CliError {
    CliError::Io(format!("{}: {e}", path.display()))
}

impl OutputDir {
    pub fn create(dir: &Path) -> Result<Self, CliError> {
        fs::create_dir_all(dir).map_err(|e| io(dir, e))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            files: Vec::new(),
            partial: false,
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    /// From here on artifacts keep their `.partial` suffix.
    pub fn mark_partial(&mut self) {
        self.partial = true;
    }

    /// Writes `name.partial`, syncs it, then renames it into place.
    pub fn write(&mut self, name: &str, bytes: &[u8]) -> Result<(), CliError> {
        let tmp = self.dir.join(format!("{name}{PARTIAL}"));
        let mut f = fs::File::create(&tmp).map_err(|e| io(&tmp, e))?;
        f.write_all(bytes).map_err(|e| io(&tmp, e))?;
        f.sync_all().map_err(|e| io(&tmp, e))?;
        drop(f);
        let file = if self.partial {
            format!("{name}{PARTIAL}")
        } else {
            let dest = self.dir.join(name);
            fs::rename(&tmp, &dest).map_err(|e| io(&dest, e))?;
            name.to_string()
        };
        if name != MANIFEST {
            self.files.push(OutputFile {
                file,
                sha256: hex::encode(Sha256::digest(bytes)),
            });
        }
        Ok(())
    }

    /// Renders with `f` into memory, then writes atomically.
    pub fn emit(
        &mut self,
        name: &str,
        f: impl FnOnce(&mut Vec<u8>) -> std::io::Result<()>,
    ) -> Result<(), CliError> {
        let mut buf = Vec::new();
        f(&mut buf).map_err(|e| io(&self.dir.join(name), e))?;
        self.write(name, &buf)
    }

    pub fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<(), CliError> {
        let mut text = serde_json::to_string_pretty(value)
            .map_err(|e| CliError::Io(format!("serializing {name}: {e}")))?;
        text.push('\n');
        self.write(name, text.as_bytes())
    }

    pub fn finish(
        mut self,
        command: &str,
        config: &RunConfig,
        summary: serde_json::Value,
        warnings: &[String],
    ) -> Result<(), CliError> {
        let status = if self.partial { "partial" } else { "complete" };
        // the output location is not part of what is reproduced
        let echoed = RunConfig {
            out: None,
            ..config.clone()
        };
        let files = std::mem::take(&mut self.files);
        let manifest = Manifest {
            manifest_version: 1,
            tool: "edqnm-lab",
            version: env!("CARGO_PKG_VERSION"),
            command,
            status,
            seed: config.seed,
            config: &echoed,
            outputs: &files,
            summary,
            warnings,
        };
        self.json(MANIFEST, &manifest)
    }
}
