//! Output directories whose contents are listed, with checksums, in a
//! manifest written after everything else.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub const MANIFEST_NAME: &str = "manifest.json";
pub const TOOL_NAME: &str = "cavity-rc";
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileEntry {
    /// Relative to the output directory.
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub tool_version: String,
    pub command: String,
    pub config_hash: String,
    pub started_unix_s: u64,
    pub finished_unix_s: u64,
    pub elapsed_s: f64,
    pub files: Vec<FileEntry>,
}

impl RunManifest {
    pub fn load(dir: &Path) -> Result<Self> {
        let path = dir.join(MANIFEST_NAME);
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Format(format!("{}: {e}", path.display())))
    }

    /// Recomputes every checksum and compares against the listing.
    pub fn verify(&self, dir: &Path) -> Result<()> {
        for f in &self.files {
            let path = dir.join(&f.path);
            let bytes = std::fs::read(&path).map_err(|e| Error::io(&path, e))?;
            if sha256_hex(&bytes) != f.sha256 {
                return Err(Error::Format(format!("checksum mismatch for {}", f.path)));
            }
        }
        Ok(())
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn unix_now() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0)
}

/// Files allowed to sit next to run artifacts without being listed.
pub fn is_log_file(name: &str) -> bool {
    name.ends_with(".log")
}

/// The single writer of a run's output directory.
#[derive(Debug)]
pub struct ArtifactWriter {
    dir: PathBuf,
    command: String,
    config_hash: String,
    started_unix_s: u64,
    clock: Instant,
    /// Left by the previous run; removed just before the first write.
    stale: Vec<PathBuf>,
    files: Vec<FileEntry>,
}

impl ArtifactWriter {
    /// Prepares `dir`. Files left by an earlier completed run (as listed in
    /// its manifest) are removed once writing starts; any other file makes
    /// this fail rather than mix unrelated outputs into the listing. Call
    /// it before the work so that elapsed time covers the whole run.
    pub fn create(dir: &Path, command: &str, config_hash: &str) -> Result<Self> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let previous: BTreeSet<String> = match RunManifest::load(dir) {
            Ok(m) => m.files.into_iter().map(|f| f.path).collect(),
            Err(_) => BTreeSet::new(),
        };
        let mut stray = Vec::new();
        for entry in std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
            let entry = entry.map_err(|e| Error::io(dir, e))?;
            let name = entry.file_name().to_string_lossy().into_owned();
            if name == MANIFEST_NAME || previous.contains(&name) || is_log_file(&name) {
                continue;
            }
            stray.push(name);
        }
        if !stray.is_empty() {
            stray.sort();
            return Err(Error::Config(format!(
                "output directory {} holds files not written by an earlier run: {}",
                dir.display(),
                stray.join(", ")
            )));
        }
        // Manifest first, so a half-rewritten directory never looks complete.
        let mut stale = vec![dir.join(MANIFEST_NAME)];
        stale.extend(previous.into_iter().map(|n| dir.join(n)));
        Ok(Self {
            dir: dir.to_path_buf(),
            command: command.to_owned(),
            config_hash: config_hash.to_owned(),
            started_unix_s: unix_now(),
            clock: Instant::now(),
            stale,
            files: Vec::new(),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn clear_stale(&mut self) -> Result<()> {
        for path in self.stale.drain(..) {
            if path.exists() {
                std::fs::remove_file(&path).map_err(|e| Error::io(&path, e))?;
            }
        }
        Ok(())
    }

    /// Writes one artifact. Names are flat file names inside the directory.
    pub fn write(&mut self, name: &str, bytes: &[u8]) -> Result<()> {
        self.clear_stale()?;
        if name.is_empty() || name.contains(['/', '\\']) || name == MANIFEST_NAME || name.starts_with('.') {
            return Err(Error::InvalidParameter(format!("bad artifact name '{name}'")));
        }
        if self.files.iter().any(|f| f.path == name) {
            return Err(Error::InvalidParameter(format!("artifact '{name}' written twice")));
        }
        let path = self.dir.join(name);
        std::fs::write(&path, bytes).map_err(|e| Error::io(&path, e))?;
        self.files.push(FileEntry { path: name.to_owned(), sha256: sha256_hex(bytes), bytes: bytes.len() as u64 });
        Ok(())
    }

    /// Names written so far.
    pub fn names(&self) -> Vec<String> {
        self.files.iter().map(|f| f.path.clone()).collect()
    }

    /// Writes the manifest and returns it.
    pub fn finish(mut self) -> Result<RunManifest> {
        self.clear_stale()?;
        let manifest = RunManifest {
            tool: TOOL_NAME.to_owned(),
            tool_version: TOOL_VERSION.to_owned(),
            command: self.command,
            config_hash: self.config_hash,
            started_unix_s: self.started_unix_s,
            finished_unix_s: unix_now(),
            elapsed_s: self.clock.elapsed().as_secs_f64(),
            files: self.files,
        };
        let text = serde_json::to_string_pretty(&manifest).expect("manifest serialises");
        let path = self.dir.join(MANIFEST_NAME);
        std::fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
        Ok(manifest)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn manifest_lists_files_with_checksums() {
        let dir = tempfile::tempdir().unwrap();
        let mut w = ArtifactWriter::create(dir.path(), "simulate", "abc").unwrap();
        w.write("a.csv", b"x,y\n").unwrap();
        assert!(w.write("a.csv", b"again").is_err());
        assert!(w.write("../escape", b"").is_err());
        assert!(!dir.path().join(MANIFEST_NAME).exists());
        let m = w.finish().unwrap();
        assert_eq!(m.files.len(), 1);
        assert_eq!(m.files[0].sha256, sha256_hex(b"x,y\n"));
        let loaded = RunManifest::load(dir.path()).unwrap();
        assert_eq!(loaded, m);
        loaded.verify(dir.path()).unwrap();
        std::fs::write(dir.path().join("a.csv"), b"tampered").unwrap();
        assert!(loaded.verify(dir.path()).is_err());
    }

    #[test]
    fn rerun_replaces_previous_outputs_but_refuses_strays() {
        let dir = tempfile::tempdir().unwrap();
        let mut w = ArtifactWriter::create(dir.path(), "simulate", "abc").unwrap();
        w.write("old.csv", b"1").unwrap();
        w.finish().unwrap();
        std::fs::write(dir.path().join("run.log"), b"log").unwrap();
        let mut w = ArtifactWriter::create(dir.path(), "simulate", "abc").unwrap();
        assert!(dir.path().join("old.csv").exists());
        w.write("new.csv", b"2").unwrap();
        assert!(!dir.path().join("old.csv").exists());
        w.finish().unwrap();
        std::fs::write(dir.path().join("notes.txt"), b"mine").unwrap();
        let err = ArtifactWriter::create(dir.path(), "simulate", "abc").unwrap_err().to_string();
        assert!(err.contains("notes.txt"), "{err}");
        assert!(dir.path().join("new.csv").exists());
    }
}
