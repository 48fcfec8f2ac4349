//! One-at-a-time execution per output directory via a lock file.

use std::fs::OpenOptions;
use std::path::{Path, PathBuf};

use seaplume::error::{Error, Result};

pub struct OutputLock {
    path: PathBuf,
}

impl OutputLock {
    /// Creates `<dir>/.seaplume.lock`, failing if it already exists.
    pub fn acquire(dir: &Path) -> Result<OutputLock> {
        std::fs::create_dir_all(dir)?;
        let path = dir.join(".seaplume.lock");
        match OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(_) => Ok(OutputLock { path }),
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => {
                Err(Error::validation(format!(
                    "output directory '{}' is locked by another run; remove '{}' if stale",
                    dir.display(),
                    path.display()
                )))
            }
            Err(e) => Err(e.into()),
        }
    }
}

impl Drop for OutputLock {
    fn drop(&mut self) {
        let _ = std::fs::remove_file(&self.path);
    }
}
