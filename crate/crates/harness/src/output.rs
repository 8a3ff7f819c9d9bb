//! Run directory layout: a manifest written before any work, data files,
//! and a closing record with checksums.

use std::fs::{self, File};
use std::io::{BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::RunConfig;
use crate::error::{HarnessError, HarnessResult};

pub const MANIFEST: &str = "manifest.json";
pub const RECORD: &str = "record.json";
pub const REPORT: &str = "report.csv";
pub const SAMPLES: &str = "samples.jsonl";

pub const TOOL: &str = "mgibbs";
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
pub const GIT_DESCRIBE: &str = env!("MGIBBS_GIT_DESCRIBE");

#[derive(Debug, Serialize)]
pub struct Manifest<'a> {
    pub tool: &'static str,
    pub version: &'static str,
    pub git_describe: &'static str,
    pub stage: &'static str,
    pub seed: u64,
    pub config: &'a RunConfig,
}

#[derive(Clone, Debug, Serialize)]
pub struct FileDigest {
    pub name: String,
    pub sha256: String,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Completed,
    Failed,
}

#[derive(Clone, Debug, Serialize)]
pub struct RunRecord {
    pub manifest_sha256: String,
    pub status: RunStatus,
    /// Failure message, when the run failed.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub files: Vec<FileDigest>,
    pub wall_clock_seconds: f64,
}

/// One row of `report.csv`.
#[derive(Clone, Debug, Serialize)]
pub struct ReportRow {
    pub quantity: String,
    pub estimate: f64,
    pub stderr: f64,
    pub n: usize,
    pub model_id: String,
    pub seed: u64,
}

pub fn sha256_file(path: &Path) -> HarnessResult<String> {
    let mut f = File::open(path).map_err(|e| HarnessError::io(path, e))?;
    let mut hasher = Sha256::new();
    let mut buf = [0u8; 1 << 16];
    loop {
        let n = f.read(&mut buf).map_err(|e| HarnessError::io(path, e))?;
        if n == 0 {
            break;
        }
        hasher.update(&buf[..n]);
    }
    Ok(format!("{:x}", hasher.finalize()))
}

/// Output errors are never "missing input".
fn out_err(path: &Path, source: std::io::Error) -> HarnessError {
    HarnessError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Debug)]
pub struct RunDir {
    root: PathBuf,
    files: Vec<String>,
}

impl RunDir {
    pub fn create(root: PathBuf) -> HarnessResult<Self> {
        fs::create_dir_all(&root).map_err(|e| out_err(&root, e))?;
        Ok(Self { root, files: Vec::new() })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    fn register(&mut self, name: &str) {
        if !self.files.iter().any(|f| f == name) {
            self.files.push(name.to_string());
        }
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> HarnessResult<()> {
        let path = self.path(name);
        let mut text = serde_json::to_string_pretty(value).map_err(|e| out_err(&path, e.into()))?;
        text.push('\n');
        fs::write(&path, text).map_err(|e| out_err(&path, e))?;
        if name != MANIFEST && name != RECORD {
            self.register(name);
        }
        Ok(())
    }

    pub fn write_manifest(&mut self, config: &RunConfig) -> HarnessResult<()> {
        let manifest = Manifest {
            tool: TOOL,
            version: VERSION,
            git_describe: GIT_DESCRIBE,
            stage: config.stage().name(),
            seed: config.seed,
            config,
        };
        self.write_json(MANIFEST, &manifest)
    }

    /// Hands a buffered writer for `name` to `fill`.
    pub fn write_with<F>(&mut self, name: &str, fill: F) -> HarnessResult<()>
    where
        F: FnOnce(&mut BufWriter<File>) -> HarnessResult<()>,
    {
        let path = self.path(name);
        let file = File::create(&path).map_err(|e| out_err(&path, e))?;
        let mut w = BufWriter::new(file);
        fill(&mut w)?;
        w.flush().map_err(|e| out_err(&path, e))?;
        self.register(name);
        Ok(())
    }

    pub fn write_csv<T: Serialize>(&mut self, name: &str, headers: &[&str], rows: &[T]) -> HarnessResult<()> {
        let path = self.path(name);
        self.write_with(name, |w| {
            let mut csv = csv::WriterBuilder::new().has_headers(false).from_writer(w);
            let err = |e: csv::Error| out_err(&path, e.into());
            csv.write_record(headers).map_err(err)?;
            for row in rows {
                csv.serialize(row).map_err(err)?;
            }
            csv.flush().map_err(|e| out_err(&path, e))
        })
    }

    pub fn write_report(&mut self, rows: &[ReportRow]) -> HarnessResult<()> {
        self.write_csv(REPORT, &["quantity", "estimate", "stderr", "n", "model_id", "seed"], rows)
    }

    /// Writes `record.json`, hashing the manifest and every data file.
    pub fn finish(&self, status: RunStatus, error: Option<String>, wall_clock_seconds: f64) -> HarnessResult<RunRecord> {
        let manifest_sha256 = sha256_file(&self.path(MANIFEST))?;
        let files = self
            .files
            .iter()
            .map(|name| {
                Ok(FileDigest {
                    name: name.clone(),
                    sha256: sha256_file(&self.path(name))?,
                })
            })
            .collect::<HarnessResult<Vec<_>>>()?;
        let record = RunRecord {
            manifest_sha256,
            status,
            error,
            files,
            wall_clock_seconds,
        };
        let path = self.path(RECORD);
        let mut text = serde_json::to_string_pretty(&record).map_err(|e| out_err(&path, e.into()))?;
        text.push('\n');
        fs::write(&path, text).map_err(|e| out_err(&path, e))?;
        Ok(record)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sha256_of_known_content() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("abc");
        fs::write(&p, "abc").unwrap();
        assert_eq!(
            sha256_file(&p).unwrap(),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }

    #[test]
    fn report_has_header_and_rows() {
        let dir = tempfile::tempdir().unwrap();
        let mut run = RunDir::create(dir.path().join("r")).unwrap();
        run.write_report(&[ReportRow {
            quantity: "mean_count".into(),
            estimate: 1.5,
            stderr: 0.1,
            n: 10,
            model_id: "poisson".into(),
            seed: 7,
        }])
        .unwrap();
        let text = fs::read_to_string(run.path(REPORT)).unwrap();
        assert_eq!(text, "quantity,estimate,stderr,n,model_id,seed\nmean_count,1.5,0.1,10,poisson,7\n");
        run.write_report(&[]).unwrap();
        let text = fs::read_to_string(run.path(REPORT)).unwrap();
        assert_eq!(text.lines().count(), 1);
    }
}
