use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use tempfile::NamedTempFile;

/// Output files staged next to their destinations and renamed into place
/// together by [`commit`](Self::commit). Dropping the set removes the staged
/// files, so a failed run leaves nothing behind.
#[derive(Default)]
pub struct StagedOutputs {
    staged: Vec<(NamedTempFile, PathBuf)>,
}

impl StagedOutputs {
    pub fn stage(&mut self, dest: &Path, write: impl FnOnce(&mut dyn Write) -> Result<()>) -> Result<()> {
        let dir = match dest.parent() {
            Some(p) if !p.as_os_str().is_empty() => p,
            _ => Path::new("."),
        };
        let mut tmp = NamedTempFile::new_in(dir).with_context(|| format!("cannot write into {}", dir.display()))?;
        {
            let mut buf = std::io::BufWriter::new(tmp.as_file_mut());
            write(&mut buf)?;
            buf.flush()?;
        }
        tmp.as_file().sync_all()?;
        self.staged.push((tmp, dest.to_path_buf()));
        Ok(())
    }

    pub fn commit(self) -> Result<()> {
        for (tmp, dest) in self.staged {
            tmp.persist(&dest)
                .with_context(|| format!("cannot move output into {}", dest.display()))?;
        }
        Ok(())
    }
}

/// Where an optional output goes: a staged file, or stdout when no path is set.
pub fn emit(outputs: &mut StagedOutputs, dest: Option<&Path>, body: &str) -> Result<()> {
    match dest {
        Some(path) => outputs.stage(path, |w| Ok(w.write_all(body.as_bytes())?)),
        None => {
            print!("{body}");
            Ok(())
        }
    }
}
