//! Artifact writing: CSV files with a provenance header line, a JSON sidecar
//! per file and a run summary per command.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::{json, Value};

use crate::error::CliError;

pub const TOOL: &str = "asl";
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

pub struct Artifacts {
    dir: PathBuf,
    command: String,
    hash: String,
    seed: u64,
    files: Vec<String>,
}

fn io_err(path: &Path, e: std::io::Error) -> CliError {
    CliError::Io(format!("{}: {e}", path.display()))
}

impl Artifacts {
    pub fn create(dir: &Path, command: &str, hash: &str, seed: u64) -> Result<Self, CliError> {
        fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
        Ok(Artifacts { dir: dir.to_path_buf(), command: command.into(), hash: hash.into(), seed, files: Vec::new() })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn header_line(&self) -> String {
        format!("# {TOOL} {VERSION} config_hash={} seed={}\n", self.hash, self.seed)
    }

    fn write(&self, name: &str, contents: &str) -> Result<(), CliError> {
        let path = self.dir.join(name);
        fs::write(&path, contents).map_err(|e| io_err(&path, e))
    }

    fn metadata(&self) -> Value {
        json!({
            "tool": TOOL,
            "version": VERSION,
            "command": self.command,
            "config_hash": self.hash,
            "seed": self.seed,
        })
    }

    /// Write `<stem>.csv` (header line, column row, body) and `<stem>.json`.
    /// `body` starts with the column row.
    pub fn csv(&mut self, stem: &str, body: &str, description: &str) -> Result<(), CliError> {
        let file = format!("{stem}.csv");
        self.write(&file, &format!("{}{body}", self.header_line()))?;
        let columns: Vec<&str> = body.lines().next().unwrap_or("").split(',').collect();
        let mut meta = self.metadata();
        meta["file"] = json!(file);
        meta["description"] = json!(description);
        meta["columns"] = json!(columns);
        meta["rows"] = json!(body.lines().count().saturating_sub(1));
        self.write(&format!("{stem}.json"), &pretty(&meta)?)?;
        self.files.push(file);
        Ok(())
    }

    /// Write the command summary `<command>_summary.json` and the effective config.
    pub fn finish<S: Serialize>(self, config_toml: &str, summary: &S) -> Result<PathBuf, CliError> {
        self.write("config.toml", &format!("{}{config_toml}", self.header_line()))?;
        let mut meta = self.metadata();
        meta["files"] = json!(self.files);
        meta["summary"] = serde_json::to_value(summary).map_err(|e| CliError::Io(e.to_string()))?;
        let name = format!("{}_summary.json", self.command);
        self.write(&name, &pretty(&meta)?)?;
        Ok(self.dir.join(name))
    }
}

fn pretty(v: &Value) -> Result<String, CliError> {
    serde_json::to_string_pretty(v).map(|s| s + "\n").map_err(|e| CliError::Io(e.to_string()))
}

/// Fixed-format float for CSV cells.
pub fn f(v: f64) -> String {
    format!("{v:.10e}")
}

/// CSV body builder that keeps the column row and every data row.
pub struct Table {
    text: String,
}

impl Table {
    pub fn new(columns: &[&str]) -> Self {
        Table { text: format!("{}\n", columns.join(",")) }
    }

    pub fn row<I: IntoIterator<Item = String>>(&mut self, cells: I) {
        let cells: Vec<String> = cells.into_iter().collect();
        self.text.push_str(&cells.join(","));
        self.text.push('\n');
    }

    pub fn body(&self) -> &str {
        &self.text
    }
}
