use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::error::{Category, CliError, CliResult};

/// Output directory of one command, guarded against clobbering earlier runs.
pub struct OutDir {
    pub root: PathBuf,
}

impl OutDir {
    /// Creates `root` if needed. Existing `artifacts` (relative names) are an
    /// error unless `overwrite` is set, in which case they are removed.
    pub fn prepare(root: &Path, artifacts: &[&str], overwrite: bool) -> CliResult<Self> {
        let present: Vec<PathBuf> = artifacts.iter().map(|a| root.join(a)).filter(|p| p.exists()).collect();
        if !present.is_empty() {
            if !overwrite {
                return Err(CliError::new(
                    Category::Refused,
                    format!(
                        "{} already holds output ({}); pass --overwrite to replace it",
                        root.display(),
                        present[0].display()
                    ),
                ));
            }
            for p in &present {
                let r = if p.is_dir() { fs::remove_dir_all(p) } else { fs::remove_file(p) };
                r.map_err(|e| CliError::io(p, e))?;
            }
        }
        fs::create_dir_all(root).map_err(|e| CliError::io(root, e))?;
        Ok(Self {
            root: root.to_path_buf(),
        })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    pub fn write_text(&self, name: &str, text: &str) -> CliResult<PathBuf> {
        let p = self.path(name);
        fs::write(&p, text).map_err(|e| CliError::io(&p, e))?;
        Ok(p)
    }

    pub fn write_json<T: Serialize>(&self, name: &str, value: &T) -> CliResult<PathBuf> {
        let text = serde_json::to_string_pretty(value).map_err(|e| CliError::data(e.to_string()))?;
        self.write_text(name, &text)
    }
}
