//! Run manifests and output writers.
//!
//! The manifest hash covers everything that determines the results (command,
//! config, seed, versions, parameters) and nothing else, so reruns reproduce
//! it. Timing and output paths live only in the sidecar files.

use std::cell::RefCell;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use serde::Serialize;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::error::{CliError, CliResult, EXIT_CHECK};

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[derive(Debug, Clone, Serialize)]
pub struct Versions {
    pub dhlab: &'static str,
    pub dhlab_core: &'static str,
}

#[derive(Debug, Clone, Serialize)]
pub struct Timing {
    pub started_unix_ms: u128,
    pub elapsed_ms: u128,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub config_hash: Option<String>,
    pub seed: Option<u64>,
    pub versions: Versions,
    pub parameters: Value,
    pub outputs: Vec<String>,
    pub timing: Timing,
    pub manifest_hash: String,
}

pub struct Run {
    command: &'static str,
    config_hash: Option<String>,
    seed: Option<u64>,
    parameters: Value,
    hash: String,
    started: Instant,
    started_unix_ms: u128,
    outputs: RefCell<Vec<PathBuf>>,
}

fn versions() -> Versions {
    Versions {
        dhlab: env!("CARGO_PKG_VERSION"),
        dhlab_core: dhlab_core::VERSION,
    }
}

fn create(path: &Path) -> CliResult<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e, EXIT_CHECK))?;
    }
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| CliError::io(path, e, EXIT_CHECK))
}

fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".manifest.json");
    PathBuf::from(s)
}

impl Run {
    pub fn new(command: &'static str, config_hash: Option<String>, seed: Option<u64>, parameters: Value) -> Self {
        let key = json!({
            "command": command,
            "config_hash": config_hash,
            "seed": seed,
            "versions": versions(),
            "parameters": parameters,
        });
        // serde_json maps are ordered, so this encoding is canonical
        let hash = sha256_hex(&serde_json::to_vec(&key).expect("json value"));
        Run {
            command,
            config_hash,
            seed,
            parameters,
            hash,
            started: Instant::now(),
            started_unix_ms: SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map(|d| d.as_millis())
                .unwrap_or(0),
            outputs: RefCell::new(Vec::new()),
        }
    }

    pub fn hash(&self) -> &str {
        &self.hash
    }

    /// Adds `manifest_hash` to a JSON object; other values pass through.
    pub fn stamp(&self, mut value: Value) -> Value {
        if let Value::Object(map) = &mut value {
            map.insert("manifest_hash".into(), Value::String(self.hash.clone()));
        }
        value
    }

    pub fn print(&self, value: Value) {
        let text = serde_json::to_string_pretty(&self.stamp(value)).expect("json value");
        println!("{text}");
    }

    pub fn write_json(&self, path: &Path, value: Value) -> CliResult<()> {
        let mut w = create(path)?;
        serde_json::to_writer_pretty(&mut w, &self.stamp(value)).map_err(|e| CliError::io(path, e, EXIT_CHECK))?;
        writeln!(w).and_then(|_| w.flush()).map_err(|e| CliError::io(path, e, EXIT_CHECK))?;
        self.outputs.borrow_mut().push(path.to_path_buf());
        Ok(())
    }

    pub fn write_jsonl<R: Serialize>(&self, path: &Path, rows: impl IntoIterator<Item = R>) -> CliResult<()> {
        let mut w = create(path)?;
        for row in rows {
            serde_json::to_writer(&mut w, &row).map_err(|e| CliError::io(path, e, EXIT_CHECK))?;
            writeln!(w).map_err(|e| CliError::io(path, e, EXIT_CHECK))?;
        }
        w.flush().map_err(|e| CliError::io(path, e, EXIT_CHECK))?;
        self.outputs.borrow_mut().push(path.to_path_buf());
        Ok(())
    }

    /// RFC-4180 CSV with a header row taken from the record field names.
    pub fn write_csv<R: Serialize>(&self, path: &Path, rows: impl IntoIterator<Item = R>) -> CliResult<()> {
        let file = create(path)?;
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::CRLF)
            .from_writer(file);
        for row in rows {
            w.serialize(row).map_err(|e| CliError::io(path, e, EXIT_CHECK))?;
        }
        w.flush().map_err(|e| CliError::io(path, e, EXIT_CHECK))?;
        self.outputs.borrow_mut().push(path.to_path_buf());
        Ok(())
    }

    pub fn manifest(&self) -> RunManifest {
        RunManifest {
            command: self.command.into(),
            config_hash: self.config_hash.clone(),
            seed: self.seed,
            versions: versions(),
            parameters: self.parameters.clone(),
            outputs: self.outputs.borrow().iter().map(|p| p.display().to_string()).collect(),
            timing: Timing {
                started_unix_ms: self.started_unix_ms,
                elapsed_ms: self.started.elapsed().as_millis(),
            },
            manifest_hash: self.hash.clone(),
        }
    }

    /// Writes `<output>.manifest.json` next to every output file.
    pub fn finish(self) -> CliResult<()> {
        let manifest = self.manifest();
        for out in self.outputs.borrow().iter() {
            let path = sidecar_path(out);
            let mut w = create(&path)?;
            serde_json::to_writer_pretty(&mut w, &manifest).map_err(|e| CliError::io(&path, e, EXIT_CHECK))?;
            writeln!(w).and_then(|_| w.flush()).map_err(|e| CliError::io(&path, e, EXIT_CHECK))?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hash_ignores_timing_and_tracks_parameters() {
        let a = Run::new("search", Some("abc".into()), None, json!({"x": 1e4}));
        std::thread::sleep(std::time::Duration::from_millis(2));
        let b = Run::new("search", Some("abc".into()), None, json!({"x": 1e4}));
        assert_eq!(a.hash(), b.hash());
        let c = Run::new("search", Some("abc".into()), None, json!({"x": 1e5}));
        assert_ne!(a.hash(), c.hash());
        let d = Run::new("search", Some("abc".into()), Some(1), json!({"x": 1e4}));
        assert_ne!(a.hash(), d.hash());
    }

    #[test]
    fn stamp_only_touches_objects() {
        let r = Run::new("cf", None, None, json!({}));
        assert_eq!(r.stamp(json!([1, 2])), json!([1, 2]));
        assert_eq!(r.stamp(json!({"a": 1}))["manifest_hash"], json!(r.hash()));
    }

    #[test]
    fn sidecar_name_appends_suffix() {
        assert_eq!(sidecar_path(Path::new("out/a.csv")), PathBuf::from("out/a.csv.manifest.json"));
    }
}
