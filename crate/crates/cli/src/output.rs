//! Output-file plumbing: every artifact is written to a temporary file
//! in the target directory and renamed into place, so a rerun either
//! fully replaces a file or leaves the previous one intact.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};

pub struct OutputDir {
    dir: PathBuf,
}

impl OutputDir {
    pub fn create(dir: &Path) -> Result<OutputDir> {
        fs::create_dir_all(dir)
            .with_context(|| format!("creating output directory {}", dir.display()))?;
        Ok(OutputDir {
            dir: dir.to_path_buf(),
        })
    }

    /// Atomic write-then-rename.
    pub fn write(&self, name: &str, contents: &[u8]) -> Result<()> {
        let target = self.dir.join(name);
        let tmp = self.dir.join(format!(".{}.tmp", name));
        fs::write(&tmp, contents)
            .with_context(|| format!("writing {}", tmp.display()))?;
        fs::rename(&tmp, &target)
            .with_context(|| format!("renaming into {}", target.display()))?;
        Ok(())
    }

    pub fn write_string(&self, name: &str, contents: &str) -> Result<()> {
        self.write(name, contents.as_bytes())
    }
}
