//! Outputs are built in memory and written only once a command has
//! succeeded, so a failed run leaves nothing behind.

use std::path::{Path, PathBuf};

use crate::error::{CliError, CliResult};

#[derive(Debug, Default)]
pub struct Outputs {
    files: Vec<(String, Vec<u8>)>,
}

impl Outputs {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, bytes: impl Into<Vec<u8>>) {
        self.files.push((name.into(), bytes.into()));
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.files.iter().map(|(n, _)| n.as_str())
    }

    /// Writes every file into `dir` (created if needed). Each file goes
    /// through a temporary name; on any failure the files written so far
    /// are removed again.
    pub fn commit(self, dir: &Path) -> CliResult<Vec<PathBuf>> {
        let created_dir = !dir.exists();
        std::fs::create_dir_all(dir).map_err(|e| CliError::Input(format!("cannot create {}: {e}", dir.display())))?;
        let mut done: Vec<PathBuf> = Vec::new();
        let result = (|| -> std::io::Result<()> {
            for (name, bytes) in &self.files {
                let target = dir.join(name);
                let tmp = dir.join(format!(".{name}.partial"));
                std::fs::write(&tmp, bytes)?;
                done.push(tmp.clone());
                std::fs::rename(&tmp, &target)?;
                *done.last_mut().unwrap() = target;
            }
            Ok(())
        })();
        match result {
            Ok(()) => Ok(done),
            Err(e) => {
                for p in &done {
                    let _ = std::fs::remove_file(p);
                }
                if created_dir {
                    let _ = std::fs::remove_dir(dir);
                }
                Err(CliError::Input(format!("cannot write outputs to {}: {e}", dir.display())))
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn commit_writes_all_files() {
        let dir = tempfile::tempdir().unwrap();
        let target = dir.path().join("run");
        let mut out = Outputs::new();
        out.add("a.txt", "alpha");
        out.add("b.bin", vec![1u8, 2, 3]);
        let paths = out.commit(&target).unwrap();
        assert_eq!(paths.len(), 2);
        assert_eq!(std::fs::read(target.join("a.txt")).unwrap(), b"alpha");
        assert_eq!(std::fs::read_dir(&target).unwrap().count(), 2);
    }

    #[test]
    fn failed_commit_leaves_nothing() {
        let dir = tempfile::tempdir().unwrap();
        let target = dir.path().join("run");
        let mut out = Outputs::new();
        out.add("a.txt", "alpha");
        out.add("missing/b.txt", "beta");
        assert!(out.commit(&target).is_err());
        assert!(!target.exists());
    }
}
