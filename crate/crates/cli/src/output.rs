//! Run directory layout: `manifest.json`, `result.json`, CSV tables and,
//! on failure, `error.json`.

use std::fs::{self, File};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{Context, Result};
use serde::Serialize;
use serde_json::{json, Value};

pub struct RunDir {
    root: PathBuf,
    command: String,
    /// Everything that can change a result; echoed into every artifact.
    config: Value,
    seed: u64,
    model_path: Option<String>,
    model_hash: Option<String>,
    outputs: Vec<String>,
    started: Instant,
}

impl RunDir {
    pub fn create(root: &Path, command: &str, config: Value, seed: u64) -> Result<Self> {
        fs::create_dir_all(root).with_context(|| format!("creating output directory {}", root.display()))?;
        Ok(Self {
            root: root.to_path_buf(),
            command: command.to_string(),
            config,
            seed,
            model_path: None,
            model_hash: None,
            outputs: Vec::new(),
            started: Instant::now(),
        })
    }

    pub fn set_model(&mut self, path: Option<&Path>, hash: &str) {
        self.model_path = path.map(|p| p.display().to_string());
        self.model_hash = Some(hash.to_string());
    }

    fn header(&self) -> Value {
        json!({
            "command": self.command,
            "model_hash": self.model_hash,
            "seed": self.seed,
            "config": self.config,
        })
    }

    /// Pretty JSON document with the run header under `run`.
    pub fn write_json<T: Serialize>(&mut self, name: &str, body: &T) -> Result<()> {
        let doc = json!({ "run": self.header(), "result": body });
        let mut text = serde_json::to_string_pretty(&doc)?;
        text.push('\n');
        self.write_raw(name, text.as_bytes())
    }

    /// Bare serialization, for artifacts read back by other commands.
    pub fn write_artifact<T: Serialize>(&mut self, name: &str, body: &T) -> Result<()> {
        let text = serde_json::to_string(body)?;
        self.write_raw(name, text.as_bytes())
    }

    pub fn write_csv(&mut self, name: &str, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
        let mut buf = Vec::new();
        writeln!(buf, "# command={}", self.command)?;
        writeln!(buf, "# model_hash={}", self.model_hash.as_deref().unwrap_or("none"))?;
        writeln!(buf, "# seed={}", self.seed)?;
        writeln!(buf, "# config={}", serde_json::to_string(&self.config)?)?;
        {
            let mut w = csv::Writer::from_writer(&mut buf);
            w.write_record(header)?;
            for r in rows {
                w.write_record(r)?;
            }
            w.flush()?;
        }
        self.write_raw(name, &buf)
    }

    fn write_raw(&mut self, name: &str, bytes: &[u8]) -> Result<()> {
        let path = self.root.join(name);
        let mut f = File::create(&path).with_context(|| format!("writing {}", path.display()))?;
        f.write_all(bytes)?;
        self.outputs.push(name.to_string());
        Ok(())
    }

    pub fn finish(mut self, threads: Option<usize>) -> Result<()> {
        let manifest = json!({
            "command": self.command,
            "version": env!("CARGO_PKG_VERSION"),
            "model_path": self.model_path,
            "model_hash": self.model_hash,
            "seed": self.seed,
            "config": self.config,
            "threads": threads.unwrap_or_else(rayon::current_num_threads),
            "outputs": self.outputs,
            "wall_time_secs": self.started.elapsed().as_secs_f64(),
        });
        let text = serde_json::to_string_pretty(&manifest)? + "\n";
        let path = self.root.join("manifest.json");
        fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
        self.outputs.clear();
        Ok(())
    }
}

/// Best effort: the error document must not mask the original failure.
pub fn write_error(root: &Path, command: &str, code: i32, kind: &str, message: &str, path: Option<&str>) {
    let doc = json!({
        "command": command,
        "status": code,
        "kind": kind,
        "message": message,
        "path": path,
        "version": env!("CARGO_PKG_VERSION"),
    });
    if fs::create_dir_all(root).is_ok() {
        if let Ok(text) = serde_json::to_string_pretty(&doc) {
            let _ = fs::write(root.join("error.json"), text + "\n");
        }
    }
}

pub fn fmt_f(v: f64) -> String {
    format!("{v}")
}

pub fn fmt_counts(c: &[u32]) -> String {
    c.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(" ")
}

pub fn fmt_vec(v: &[f64]) -> String {
    v.iter().map(|x| fmt_f(*x)).collect::<Vec<_>>().join(" ")
}
