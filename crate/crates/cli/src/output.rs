//! Output files are written to a temporary file in the target directory and
//! renamed into place, so readers never see a partial file.

use std::fs;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use tempfile::NamedTempFile;

pub struct OutputDir {
    root: PathBuf,
}

impl OutputDir {
    pub fn create(root: &Path) -> Result<Self> {
        fs::create_dir_all(root)
            .with_context(|| format!("creating output directory {}", root.display()))?;
        Ok(Self {
            root: root.to_path_buf(),
        })
    }

    /// Runs `fill` against a buffered temporary file, then moves it to
    /// `name` inside the directory.
    pub fn write<F>(&self, name: &str, fill: F) -> Result<PathBuf>
    where
        F: FnOnce(&mut dyn Write) -> Result<()>,
    {
        let target = self.root.join(name);
        let tmp = NamedTempFile::new_in(&self.root)
            .with_context(|| format!("creating temporary file for {name}"))?;
        let mut w = BufWriter::new(tmp);
        fill(&mut w).with_context(|| format!("writing {name}"))?;
        let tmp = w.into_inner().map_err(io::IntoInnerError::into_error)?;
        tmp.as_file().sync_all()?;
        tmp.persist(&target)
            .with_context(|| format!("moving output into {}", target.display()))?;
        log::info!("wrote {}", target.display());
        Ok(target)
    }
}
