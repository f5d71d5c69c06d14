//! Result files. Commands build every artifact in memory first; files are
//! written only after the computation succeeded, each through a temporary
//! file that is renamed into place.

use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};
use signvar::confidence_sets::Interval;
use signvar::restrictions::TargetKind;

use crate::{CliError, CliResult};

#[derive(Debug, Clone)]
pub struct Artifact {
    pub name: String,
    pub bytes: Vec<u8>,
}

impl Artifact {
    pub fn json<T: Serialize>(name: &str, value: &T) -> Self {
        let mut bytes = serde_json::to_vec_pretty(value).expect("result serializes");
        bytes.push(b'\n');
        Self { name: name.into(), bytes }
    }

    pub fn csv(name: &str, header: &[&str], rows: &[Vec<String>]) -> Self {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(header).expect("in-memory write");
        for r in rows {
            w.write_record(r).expect("in-memory write");
        }
        Self { name: name.into(), bytes: w.into_inner().expect("in-memory flush") }
    }

    pub fn sha256(&self) -> String {
        format!("{:x}", Sha256::digest(&self.bytes))
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct FileEntry {
    pub name: String,
    pub sha256: String,
}

/// Everything needed to rerun a command and check its outputs.
#[derive(Debug, Clone, Serialize)]
pub struct Manifest {
    pub command: String,
    pub version: String,
    pub config_sha256: String,
    pub data_sha256: Option<String>,
    pub seed: u64,
    pub derived_seeds: Vec<(String, u64)>,
    pub config: serde_json::Value,
    pub files: Vec<FileEntry>,
}

pub fn sha256_file(path: &Path) -> CliResult<String> {
    let bytes = std::fs::read(path).map_err(|source| CliError::Io { path: path.display().to_string(), source })?;
    Ok(format!("{:x}", Sha256::digest(bytes)))
}

fn io_err(path: &Path) -> impl Fn(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io { path: path.display().to_string(), source }
}

/// Writes the artifacts and the manifest into `dir`; returns the paths.
pub fn write_all(dir: &Path, artifacts: &[Artifact], mut manifest: Manifest) -> CliResult<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    manifest.files = artifacts.iter().map(|a| FileEntry { name: a.name.clone(), sha256: a.sha256() }).collect();
    let all: Vec<Artifact> = artifacts.iter().cloned().chain([Artifact::json("manifest.json", &manifest)]).collect();
    let mut paths = Vec::new();
    for a in &all {
        let path = dir.join(&a.name);
        let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(io_err(dir))?;
        tmp.write_all(&a.bytes).map_err(io_err(&path))?;
        tmp.persist(&path).map_err(|e| CliError::Io { path: path.display().to_string(), source: e.error })?;
        paths.push(path);
    }
    Ok(paths)
}

pub fn fmt(x: f64) -> String {
    if x.is_finite() {
        format!("{x}")
    } else if x.is_nan() {
        String::new()
    } else if x > 0.0 {
        "inf".into()
    } else {
        "-inf".into()
    }
}

fn ends(iv: Option<Interval>) -> [String; 2] {
    match iv {
        Some(iv) => [fmt(iv.lo), fmt(iv.hi)],
        None => [String::new(), String::new()],
    }
}

pub fn kind_label(kind: TargetKind) -> &'static str {
    match kind {
        TargetKind::Irf => "irf",
        TargetKind::CumulativeIrf => "cumulative-irf",
        TargetKind::VarianceShare => "variance-share",
    }
}

pub const BAND_HEADER: [&str; 9] =
    ["target", "variable", "horizon", "fhat_lo", "fhat_hi", "cs_lo", "cs_hi", "bayes_lo", "bayes_hi"];

/// One row of the band file.
#[derive(Debug, Clone)]
pub struct BandRow {
    pub kind: TargetKind,
    pub variable: String,
    pub horizon: usize,
    pub fhat: Option<Interval>,
    pub cs: Option<Interval>,
    pub bayes: Option<Interval>,
}

impl BandRow {
    pub fn record(&self) -> Vec<String> {
        let mut r = vec![kind_label(self.kind).to_string(), self.variable.clone(), self.horizon.to_string()];
        r.extend(ends(self.fhat));
        r.extend(ends(self.cs));
        r.extend(ends(self.bayes));
        r
    }
}

pub fn band_file(rows: &[BandRow]) -> Artifact {
    let records: Vec<Vec<String>> = rows.iter().map(BandRow::record).collect();
    Artifact::csv("bands.csv", &BAND_HEADER, &records)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn writes_files_and_manifest() {
        let dir = tempfile::tempdir().unwrap();
        let a = Artifact::csv("x.csv", &["a", "b"], &[vec!["1".into(), fmt(f64::INFINITY)]]);
        let m = Manifest {
            command: "test".into(),
            version: "0".into(),
            config_sha256: "abc".into(),
            data_sha256: None,
            seed: 1,
            derived_seeds: vec![],
            config: serde_json::Value::Null,
            files: vec![],
        };
        let paths = write_all(dir.path(), std::slice::from_ref(&a), m).unwrap();
        assert_eq!(paths.len(), 2);
        assert_eq!(std::fs::read_to_string(&paths[0]).unwrap(), "a,b\n1,inf\n");
        let manifest: serde_json::Value = serde_json::from_slice(&std::fs::read(&paths[1]).unwrap()).unwrap();
        assert_eq!(manifest["files"][0]["sha256"], a.sha256());
        assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 2);
    }
}
