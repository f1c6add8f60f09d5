use std::path::{Path, PathBuf};
use std::process::Command;

use crate::error::{Error, Result};
use crate::signal::{write_wav, Waveform};

/// Runs a user-supplied PESQ executable as `<exe> <ref.wav> <deg.wav>` and
/// reads one decimal score from its standard output.
#[derive(Debug, Clone)]
pub struct PesqAdapter {
    exe: PathBuf,
    scratch: PathBuf,
}

impl PesqAdapter {
    /// `None` when `exe` does not exist, so callers can drop PESQ columns.
    pub fn locate(exe: impl Into<PathBuf>, scratch: impl Into<PathBuf>) -> Option<Self> {
        let exe = exe.into();
        if !exe.is_file() {
            log::warn!("PESQ executable {} not found; PESQ columns omitted", exe.display());
            return None;
        }
        Some(Self {
            exe,
            scratch: scratch.into(),
        })
    }

    pub fn score_files(&self, reference: &Path, degraded: &Path) -> Result<f64> {
        let out = Command::new(&self.exe)
            .arg(reference)
            .arg(degraded)
            .output()
            .map_err(|e| Error::io(&self.exe, e))?;
        if !out.status.success() {
            return Err(Error::invalid(format!("{} exited with {}", self.exe.display(), out.status)));
        }
        parse_score(&String::from_utf8_lossy(&out.stdout))
    }

    /// Writes both signals under the scratch directory and scores them.
    pub fn score(&self, reference: &Waveform<f64>, degraded: &Waveform<f64>, tag: &str) -> Result<f64> {
        std::fs::create_dir_all(&self.scratch).map_err(|e| Error::io(&self.scratch, e))?;
        let r = self.scratch.join(format!("{tag}.ref.wav"));
        let d = self.scratch.join(format!("{tag}.deg.wav"));
        write_wav(&r, reference)?;
        write_wav(&d, degraded)?;
        let s = self.score_files(&r, &d);
        let _ = std::fs::remove_file(&r);
        let _ = std::fs::remove_file(&d);
        s
    }
}

fn parse_score(stdout: &str) -> Result<f64> {
    stdout
        .lines()
        .map(str::trim)
        .find(|l| !l.is_empty())
        .and_then(|l| l.parse::<f64>().ok())
        .filter(|v| v.is_finite())
        .ok_or_else(|| Error::invalid(format!("PESQ output is not a score: `{}`", stdout.trim())))
}
