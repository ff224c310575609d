//! Output directory handling. Files land via a temp file and a rename, so a
//! reader never sees a half-written result.

use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};

use crate::CliError;

pub struct OutDir {
    root: PathBuf,
}

impl OutDir {
    /// Create the directory (and parents) up front, before any work starts.
    pub fn prepare(path: &Path) -> Result<Self> {
        std::fs::create_dir_all(path)
            .map_err(|e| CliError::Path(format!("cannot create output directory {}: {e}", path.display())))?;
        if !path.is_dir() {
            return Err(CliError::Path(format!("{} is not a directory", path.display())).into());
        }
        Ok(Self {
            root: path.to_path_buf(),
        })
    }

    pub fn write(&self, name: &str, contents: &str) -> Result<PathBuf> {
        let target = self.root.join(name);
        let dir = target.parent().unwrap_or(&self.root);
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        let mut tmp =
            tempfile::NamedTempFile::new_in(dir).with_context(|| format!("temp file in {}", dir.display()))?;
        tmp.write_all(contents.as_bytes())?;
        tmp.as_file().sync_all()?;
        tmp.persist(&target)
            .map_err(|e| e.error)
            .with_context(|| format!("writing {}", target.display()))?;
        Ok(target)
    }
}

/// An input file that must exist before any work starts.
pub fn require_file(path: Option<&Path>, flag: &str) -> Result<PathBuf> {
    let path = path.ok_or_else(|| CliError::Usage(format!("--{flag} is required")))?;
    if !path.is_file() {
        return Err(CliError::Path(format!("--{flag}: no such file {}", path.display())).into());
    }
    Ok(path.to_path_buf())
}

pub fn require_dir(path: Option<&Path>) -> Result<OutDir> {
    let path = path.ok_or_else(|| CliError::Usage("--out-dir is required".into()))?;
    OutDir::prepare(path)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn writes_replace_whole_files() {
        let dir = tempfile::tempdir().unwrap();
        let out = OutDir::prepare(&dir.path().join("a/b")).unwrap();
        out.write("x.csv", "first\n").unwrap();
        out.write("x.csv", "second\n").unwrap();
        out.write("curves/g.csv", "g\n").unwrap();
        let root = dir.path().join("a/b");
        assert_eq!(std::fs::read_to_string(root.join("x.csv")).unwrap(), "second\n");
        assert!(root.join("curves/g.csv").is_file());
        // only the final files remain
        assert_eq!(std::fs::read_dir(dir.path().join("a/b")).unwrap().count(), 2);
    }
}
