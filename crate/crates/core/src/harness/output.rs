use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::Command;

use serde::Serialize;

use super::sweep::PointTiming;
use crate::error::{Error, Result};

fn output_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Output {
        path: path.to_path_buf(),
        source,
    }
}

/// Create `dir` if needed and prove it is writable.
pub fn prepare_out_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(output_err(dir))?;
    let probe = dir.join(".tdba-write-probe");
    fs::write(&probe, b"").map_err(output_err(&probe))?;
    fs::remove_file(&probe).map_err(output_err(&probe))?;
    Ok(())
}

/// RFC 4180 CSV (CRLF records, minimal quoting) preceded by one comment
/// line carrying the config hash.
pub fn write_csv<T: Serialize>(path: &Path, config_hash: &str, rows: &[T]) -> Result<()> {
    let mut buf = format!("# config_sha256={config_hash}\r\n").into_bytes();
    {
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::CRLF)
            .from_writer(&mut buf);
        for r in rows {
            w.serialize(r)?;
        }
        w.flush()?;
    }
    fs::write(path, buf).map_err(output_err(path))
}

/// CSV contents after the hash comment line.
pub fn csv_body(text: &str) -> &str {
    match text.strip_prefix('#') {
        Some(rest) => rest.split_once("\r\n").map_or("", |(_, body)| body),
        None => text,
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub experiment: String,
    pub config_sha256: String,
    pub seed: u64,
    pub git_revision: Option<String>,
    pub wall_time_s: f64,
    pub workers: usize,
    pub trials: usize,
    pub outputs: Vec<PathBuf>,
    pub points: Vec<PointTiming>,
}

impl RunManifest {
    pub fn write(&self, path: &Path) -> Result<()> {
        let mut f = fs::File::create(path).map_err(output_err(path))?;
        serde_json::to_writer_pretty(&mut f, self)?;
        f.write_all(b"\n").map_err(output_err(path))
    }
}

/// `git rev-parse HEAD` of the working directory, if it is a repository.
pub fn git_revision() -> Option<String> {
    let out = Command::new("git").args(["rev-parse", "HEAD"]).output().ok()?;
    if !out.status.success() {
        return None;
    }
    let rev = String::from_utf8(out.stdout).ok()?.trim().to_string();
    (!rev.is_empty()).then_some(rev)
}
