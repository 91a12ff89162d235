//! All-or-nothing output directory writes.
//!
//! Files are written under a hidden temporary name in the destination
//! directory and renamed into place only when [`Staging::commit`] runs.
//! Dropping an uncommitted staging area deletes everything it wrote.

use std::fs;
use std::path::{Path, PathBuf};

use atriumgeo::io::{write_mask, write_scalar, NiftiHeader};
use atriumgeo::{BinaryMask, ScalarVolume};

use crate::CliError;

pub struct Staging {
    dir: PathBuf,
    staged: Vec<(PathBuf, PathBuf)>,
    created_dir: bool,
    committed: bool,
}

impl Staging {
    pub fn new(dir: &Path) -> Result<Self, CliError> {
        let created_dir = !dir.exists();
        fs::create_dir_all(dir)?;
        Ok(Staging {
            dir: dir.to_path_buf(),
            staged: Vec::new(),
            created_dir,
            committed: false,
        })
    }

    /// Temporary path for `name`. The extension is kept so the writers pick
    /// the right encoding.
    fn reserve(&mut self, name: &str) -> PathBuf {
        let tmp = self.dir.join(format!(".partial.{name}"));
        self.staged.push((tmp.clone(), self.dir.join(name)));
        tmp
    }

    pub fn scalar(
        &mut self,
        name: &str,
        vol: &ScalarVolume,
        template: Option<&NiftiHeader>,
    ) -> Result<(), CliError> {
        let tmp = self.reserve(name);
        Ok(write_scalar(tmp, vol, template)?)
    }

    pub fn mask(
        &mut self,
        name: &str,
        mask: &BinaryMask,
        template: Option<&NiftiHeader>,
    ) -> Result<(), CliError> {
        let tmp = self.reserve(name);
        Ok(write_mask(tmp, mask, template)?)
    }

    pub fn text(&mut self, name: &str, body: &str) -> Result<(), CliError> {
        let tmp = self.reserve(name);
        fs::write(tmp, body)?;
        Ok(())
    }

    pub fn commit(mut self) -> Result<(), CliError> {
        for (tmp, dest) in &self.staged {
            fs::rename(tmp, dest)?;
        }
        self.committed = true;
        Ok(())
    }
}

impl Drop for Staging {
    fn drop(&mut self) {
        if self.committed {
            return;
        }
        for (tmp, _) in &self.staged {
            let _ = fs::remove_file(tmp);
        }
        if self.created_dir {
            // Only succeeds when nothing else ended up in there.
            let _ = fs::remove_dir(&self.dir);
        }
    }
}
