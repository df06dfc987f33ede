//! Artifact staging, atomic writes and the run manifest.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use chrono::NaiveDate;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::RunConfig;
use crate::plot;

pub const MANIFEST_FILE: &str = "manifest.json";

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Writes through a temporary file in the destination directory, then renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).with_context(|| format!("staging {}", path.display()))?;
    tmp.write_all(bytes)?;
    #[cfg(unix)]
    {
        use std::os::unix::fs::PermissionsExt;
        tmp.as_file().set_permissions(std::fs::Permissions::from_mode(0o644))?;
    }
    tmp.as_file().sync_all()?;
    tmp.persist(path).with_context(|| format!("renaming into {}", path.display()))?;
    Ok(())
}

/// Daily columns sharing one date axis.
pub struct DatedTable {
    pub title: String,
    pub dates: Vec<NaiveDate>,
    pub columns: Vec<(String, Vec<f64>)>,
}

impl DatedTable {
    pub fn new(title: impl Into<String>, start: NaiveDate, len: usize) -> Self {
        Self {
            title: title.into(),
            dates: (0..len).map(|i| start + chrono::Duration::days(i as i64)).collect(),
            columns: Vec::new(),
        }
    }

    pub fn column(mut self, name: &str, values: Vec<f64>) -> Self {
        assert_eq!(values.len(), self.dates.len(), "column {name} does not match the date axis");
        self.columns.push((name.to_string(), values));
        self
    }

    fn to_csv(&self) -> Vec<u8> {
        let mut header = vec!["date".to_string()];
        header.extend(self.columns.iter().map(|c| c.0.clone()));
        let rows = self.dates.iter().enumerate().map(|(i, d)| {
            let mut row = vec![d.to_string()];
            row.extend(self.columns.iter().map(|c| c.1[i].to_string()));
            row
        });
        csv_bytes(&header, rows)
    }
}

pub fn csv_bytes<I: IntoIterator<Item = Vec<String>>>(header: &[String], rows: I) -> Vec<u8> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).expect("in-memory write");
    for r in rows {
        w.write_record(&r).expect("in-memory write");
    }
    w.into_inner().expect("in-memory flush")
}

#[derive(Serialize)]
struct FileHash {
    path: String,
    sha256: String,
}

#[derive(Serialize)]
struct Manifest<'a> {
    command: &'a str,
    config_sha256: String,
    config: &'a RunConfig,
    seeds: &'a BTreeMap<String, u64>,
    inputs: Vec<FileHash>,
    outputs: Vec<FileHash>,
}

/// Collects one command's outputs; nothing touches the disk until [`Run::finish`].
pub struct Run<'a> {
    command: &'a str,
    config: &'a RunConfig,
    out_dir: PathBuf,
    plots: bool,
    inputs: BTreeMap<String, String>,
    outputs: BTreeMap<String, Vec<u8>>,
    pub seeds: BTreeMap<String, u64>,
}

impl<'a> Run<'a> {
    pub fn new(command: &'a str, config: &'a RunConfig, out_dir: &Path, plots: bool) -> Self {
        Self {
            command,
            config,
            out_dir: out_dir.to_path_buf(),
            plots,
            inputs: BTreeMap::new(),
            outputs: BTreeMap::new(),
            seeds: BTreeMap::new(),
        }
    }

    /// Records the hash of an input file, keyed by its path relative to `base`.
    pub fn input(&mut self, base: &Path, rel: &Path) -> Result<()> {
        let bytes = std::fs::read(base.join(rel)).with_context(|| format!("reading {}", base.join(rel).display()))?;
        self.inputs.insert(rel.to_string_lossy().replace('\\', "/"), sha256_hex(&bytes));
        Ok(())
    }

    pub fn put(&mut self, rel: impl Into<String>, bytes: Vec<u8>) {
        self.outputs.insert(rel.into(), bytes);
    }

    pub fn csv<I: IntoIterator<Item = Vec<String>>>(&mut self, rel: &str, header: &[&str], rows: I) {
        let header: Vec<String> = header.iter().map(|s| s.to_string()).collect();
        self.put(rel, csv_bytes(&header, rows));
    }

    pub fn json<T: Serialize>(&mut self, rel: &str, value: &T) -> Result<()> {
        let mut bytes = serde_json::to_vec_pretty(value)?;
        bytes.push(b'\n');
        self.put(rel, bytes);
        Ok(())
    }

    /// Emits `rel` as CSV plus, with `--plots`, an SVG of the same name.
    pub fn table(&mut self, rel: &str, table: &DatedTable) -> Result<()> {
        self.put(rel, table.to_csv());
        if self.plots {
            let svg = plot::line_plot(&table.title, &table.dates, &table.columns)?;
            self.put(Path::new(rel).with_extension("svg").to_string_lossy().into_owned(), svg.into_bytes());
        }
        Ok(())
    }

    pub fn finish(self) -> Result<()> {
        let mut outputs = Vec::new();
        for (rel, bytes) in &self.outputs {
            write_atomic(&self.out_dir.join(rel), bytes)?;
            outputs.push(FileHash { path: rel.clone(), sha256: sha256_hex(bytes) });
        }
        let manifest = Manifest {
            command: self.command,
            config_sha256: sha256_hex(self.config.canonical().as_bytes()),
            config: self.config,
            seeds: &self.seeds,
            inputs: self.inputs.into_iter().map(|(path, sha256)| FileHash { path, sha256 }).collect(),
            outputs,
        };
        let mut bytes = serde_json::to_vec_pretty(&manifest)?;
        bytes.push(b'\n');
        write_atomic(&self.out_dir.join(MANIFEST_FILE), &bytes)
    }
}
