//! Staged output directories: work lands in a temporary sibling and is
//! renamed into place only on success, so failures leave the requested
//! output path untouched.

use std::fs;
use std::path::{Path, PathBuf};

use crate::errors::{CliError, Result};

pub struct StagedDir {
    staging: PathBuf,
    target: PathBuf,
    committed: bool,
}

impl StagedDir {
    /// Prepares a staging directory next to `target`. The target must not
    /// already exist (an empty directory is tolerated and replaced).
    pub fn new(target: &Path) -> Result<Self> {
        if target.exists() {
            let occupied = target
                .read_dir()
                .map(|mut it| it.next().is_some())
                .unwrap_or(true);
            if occupied {
                return Err(CliError::data(format!(
                    "output directory {} already exists and is not empty",
                    target.display()
                )));
            }
        }
        if let Some(parent) = target.parent() {
            if !parent.as_os_str().is_empty() {
                fs::create_dir_all(parent)?;
            }
        }
        let staging = target.with_file_name(format!(
            ".{}.staging-{}",
            target.file_name().map(|n| n.to_string_lossy()).unwrap_or_default(),
            std::process::id()
        ));
        if staging.exists() {
            fs::remove_dir_all(&staging)?;
        }
        fs::create_dir_all(&staging)?;
        Ok(Self { staging, target: target.to_path_buf(), committed: false })
    }

    pub fn path(&self) -> &Path {
        &self.staging
    }

    /// Creates a subdirectory inside the staging area.
    pub fn subdir(&self, name: &str) -> Result<PathBuf> {
        let dir = self.staging.join(name);
        fs::create_dir_all(&dir)?;
        Ok(dir)
    }

    pub fn commit(mut self) -> Result<PathBuf> {
        if self.target.exists() {
            fs::remove_dir(&self.target)?;
        }
        fs::rename(&self.staging, &self.target)?;
        self.committed = true;
        Ok(self.target.clone())
    }
}

impl Drop for StagedDir {
    fn drop(&mut self) {
        if !self.committed {
            let _ = fs::remove_dir_all(&self.staging);
        }
    }
}

/// Writes a single file through a temporary sibling and a rename.
pub fn write_file_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent)?;
        }
    }
    let tmp = path.with_file_name(format!(
        ".{}.tmp-{}",
        path.file_name().map(|n| n.to_string_lossy()).unwrap_or_default(),
        std::process::id()
    ));
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path)?;
    Ok(())
}
