//! Output paths and crash-safe file writes.

use std::fs::File;
use std::io::Write;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};

/// Environment variable naming the directory for relative output paths.
pub const OUT_DIR_VAR: &str = "DPMMDP_OUT_DIR";

/// Resolve a relative output path against `DPMMDP_OUT_DIR` when it is set.
pub fn resolve(path: &Path) -> PathBuf {
    match std::env::var_os(OUT_DIR_VAR) {
        Some(dir) if path.is_relative() && !dir.is_empty() => Path::new(&dir).join(path),
        _ => path.to_path_buf(),
    }
}

/// `path` with `.partial` appended to its file name.
pub fn partial_path(path: &Path) -> PathBuf {
    let mut name = path.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(".partial");
    path.with_file_name(name)
}

/// `dir/stem_aggregate.csv` for `dir/stem.csv`.
pub fn aggregate_path(path: &Path) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    path.with_file_name(format!("{stem}_aggregate.csv"))
}

/// A file written under its `.partial` name and renamed on [`finish`].
/// Dropping it unfinished leaves only the `.partial` file behind.
///
/// [`finish`]: PartialFile::finish
pub struct PartialFile {
    file: File,
    partial: PathBuf,
    target: PathBuf,
}

impl PartialFile {
    pub fn create(target: &Path) -> Result<Self> {
        if let Some(dir) = target.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        let partial = partial_path(target);
        let file = File::create(&partial).map_err(|e| Error::io(&partial, e))?;
        Ok(Self {
            file,
            partial,
            target: target.to_path_buf(),
        })
    }

    pub fn finish(mut self) -> Result<PathBuf> {
        self.file.flush().map_err(|e| Error::io(&self.partial, e))?;
        self.file.sync_all().map_err(|e| Error::io(&self.partial, e))?;
        std::fs::rename(&self.partial, &self.target).map_err(|e| Error::io(&self.target, e))?;
        Ok(self.target)
    }
}

impl Write for PartialFile {
    fn write(&mut self, buf: &[u8]) -> std::io::Result<usize> {
        self.file.write(buf)
    }

    fn flush(&mut self) -> std::io::Result<()> {
        self.file.flush()
    }
}

/// Write `contents` to `target` through a `.partial` file.
pub fn write_file(target: &Path, contents: &[u8]) -> Result<PathBuf> {
    let mut out = PartialFile::create(target)?;
    out.write_all(contents).map_err(|e| Error::io(target, e))?;
    out.finish()
}
