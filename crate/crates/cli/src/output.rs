use std::io::Write;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use crate::error::{CliError, CliResult, ExitCode};

/// Files produced by a command, written together once everything succeeded.
#[derive(Debug, Default)]
pub struct Outputs {
    files: Vec<(String, String)>,
}

impl Outputs {
    pub fn add(&mut self, name: impl Into<String>, contents: String) {
        self.files.push((name.into(), contents));
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.files.iter().map(|(n, _)| n.as_str())
    }

    pub fn get(&self, name: &str) -> Option<&str> {
        self.files.iter().find(|(n, _)| n == name).map(|(_, c)| c.as_str())
    }

    /// Stage every file as a temporary in `dir`, then rename all into place.
    /// Nothing is renamed unless every file was staged.
    pub fn commit(self, dir: &Path) -> CliResult<Vec<PathBuf>> {
        let io =
            |p: &Path, e: &dyn std::fmt::Display| CliError::new(ExitCode::Io, "io", format!("{}: {e}", p.display()));
        std::fs::create_dir_all(dir).map_err(|e| io(dir, &e))?;
        let mut staged = Vec::new();
        for (name, contents) in self.files {
            let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| io(dir, &e))?;
            tmp.write_all(contents.as_bytes()).map_err(|e| io(tmp.path(), &e))?;
            tmp.as_file().sync_all().map_err(|e| io(tmp.path(), &e))?;
            staged.push((tmp, dir.join(name)));
        }
        let mut written = Vec::new();
        for (tmp, target) in staged {
            tmp.persist(&target).map_err(|e| io(&target, &e.error))?;
            written.push(target);
        }
        Ok(written)
    }
}

/// Hex SHA-256 over the given parts, each length-prefixed.
pub fn config_hash<'a>(parts: impl IntoIterator<Item = &'a [u8]>) -> String {
    let mut h = Sha256::new();
    for p in parts {
        h.update((p.len() as u64).to_le_bytes());
        h.update(p);
    }
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}
