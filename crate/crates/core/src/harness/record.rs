use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{LabError, Result};
use crate::harness::ExperimentSpec;

/// Name of the manifest every run directory carries.
pub const MANIFEST: &str = "run.json";
/// Wall-clock timings, kept apart from the deterministic manifest.
pub const TIMING: &str = "timing.json";
/// Environment variable naming the default output root.
pub const OUT_ENV: &str = "ILAB_OUT";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub name: String,
    pub sha256: String,
    pub bytes: u64,
}

/// Manifest of one run. Everything here is a function of the spec.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub run_id: String,
    pub spec_hash: String,
    pub spec: ExperimentSpec,
    pub files: Vec<ManifestEntry>,
    pub summary: serde_json::Value,
}

impl RunRecord {
    pub fn load(dir: &Path) -> Result<Self> {
        let path = dir.join(MANIFEST);
        let text = std::fs::read_to_string(&path)
            .map_err(|e| LabError::Report(format!("no run manifest at {}: {e}", path.display())))?;
        if text.trim().is_empty() {
            return Err(LabError::Report(format!("empty run manifest at {}", path.display())));
        }
        serde_json::from_str(&text).map_err(|e| LabError::Report(format!("unreadable manifest {}: {e}", path.display())))
    }
}

/// Run id: SHA-256 over the spec hash and the stimulus seed.
pub fn run_id(spec: &ExperimentSpec) -> Result<String> {
    let mut h = Sha256::new();
    h.update(spec.hash()?.as_bytes());
    h.update(spec.stimulus_seed.to_le_bytes());
    Ok(hex::encode(h.finalize()))
}

/// Output root: the spec's, else `$ILAB_OUT`, else `./runs`.
pub fn output_root(spec: &ExperimentSpec) -> PathBuf {
    spec.out
        .clone()
        .or_else(|| std::env::var_os(OUT_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("runs"))
}

/// Sole writer into a run directory. Tracks every file for the manifest.
pub struct RunWriter {
    dir: PathBuf,
    spec_hash: String,
    files: Vec<ManifestEntry>,
}

impl RunWriter {
    pub fn create(dir: PathBuf, spec_hash: String) -> Result<Self> {
        std::fs::create_dir_all(&dir).map_err(|e| LabError::io(&dir, e))?;
        Ok(RunWriter { dir, spec_hash, files: Vec::new() })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn write(&mut self, name: &str, bytes: &[u8]) -> Result<()> {
        let path = self.dir.join(name);
        std::fs::write(&path, bytes).map_err(|e| LabError::io(&path, e))?;
        self.files.retain(|f| f.name != name);
        self.files.push(ManifestEntry {
            name: name.to_string(),
            sha256: hex::encode(Sha256::digest(bytes)),
            bytes: bytes.len() as u64,
        });
        Ok(())
    }

    /// CSV with a leading `# spec_hash=` comment and a header row.
    pub fn csv(&mut self, name: &str, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
        let mut out = format!("# spec_hash={}\n", self.spec_hash).into_bytes();
        {
            let mut w = csv::Writer::from_writer(&mut out);
            w.write_record(header)?;
            for r in rows {
                if r.len() != header.len() {
                    return Err(LabError::Dimension(format!("{name}: row of {} fields under a {}-column header", r.len(), header.len())));
                }
                w.write_record(r)?;
            }
            w.flush().map_err(|e| LabError::io(self.dir.join(name), e))?;
        }
        self.write(name, &out)
    }

    pub fn json<V: Serialize>(&mut self, name: &str, value: &V) -> Result<()> {
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        self.write(name, text.as_bytes())
    }

    /// Writes the manifest and timings and returns the record.
    pub fn finish(mut self, spec: &ExperimentSpec, summary: serde_json::Value, seconds: f64) -> Result<RunRecord> {
        self.json("summary.json", &summary)?;
        let record = RunRecord { run_id: run_id(spec)?, spec_hash: self.spec_hash.clone(), spec: spec.clone(), files: self.files.clone(), summary };
        let text = serde_json::to_string_pretty(&record)? + "\n";
        let path = self.dir.join(MANIFEST);
        std::fs::write(&path, text).map_err(|e| LabError::io(&path, e))?;
        let timing = serde_json::json!({ "seconds": seconds });
        let path = self.dir.join(TIMING);
        std::fs::write(&path, serde_json::to_string_pretty(&timing)? + "\n").map_err(|e| LabError::io(&path, e))?;
        Ok(record)
    }
}

/// Rows of a result CSV, skipping the spec-hash comment.
pub fn read_csv(path: &Path) -> Result<(Vec<String>, Vec<Vec<String>>)> {
    let mut r = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_path(path)
        .map_err(|e| LabError::Report(format!("{}: {e}", path.display())))?;
    let header = r.headers()?.iter().map(String::from).collect();
    let mut rows = Vec::new();
    for rec in r.records() {
        rows.push(rec?.iter().map(String::from).collect());
    }
    Ok((header, rows))
}

/// Shortest round-trip decimal, so reruns print identical bytes.
pub fn num(x: f64) -> String {
    format!("{x}")
}
