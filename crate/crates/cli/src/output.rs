use std::fmt;
use std::fs::File;
use std::path::Path;

use mabnet_core::Error as CoreError;
use serde::Serialize;

use crate::config::ConfigError;

#[derive(Debug)]
pub enum CliError {
    /// Unreadable, malformed or invalid configuration. Exit status 2.
    Config(ConfigError),
    /// Numerical failure while evaluating. Exit status 3.
    Numerical(CoreError),
    /// Anything else (I/O). Exit status 1.
    Other(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Numerical(_) => 3,
            CliError::Other(_) => 1,
        }
    }

    pub fn io(path: &Path) -> impl Fn(std::io::Error) -> CliError + '_ {
        move |e| CliError::Other(format!("{}: {e}", path.display()))
    }

    pub fn csv(path: &Path) -> impl Fn(csv::Error) -> CliError + '_ {
        move |e| CliError::Other(format!("{}: {e}", path.display()))
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(e) => write!(f, "{e}"),
            CliError::Numerical(e) => write!(f, "numerical failure: {e}"),
            CliError::Other(e) => write!(f, "{e}"),
        }
    }
}

pub fn csv_writer(path: &Path) -> Result<csv::Writer<File>, CliError> {
    let file = File::create(path).map_err(CliError::io(path))?;
    Ok(csv::Writer::from_writer(file))
}

/// Write all records of one CSV file.
pub fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<(), CliError> {
    let mut w = csv_writer(path)?;
    for r in rows {
        w.serialize(r).map_err(CliError::csv(path))?;
    }
    w.flush().map_err(CliError::io(path))
}

#[derive(Debug, Clone, Serialize)]
pub struct Column {
    pub name: &'static str,
    pub description: &'static str,
}

impl Column {
    pub fn new(name: &'static str, description: &'static str) -> Column {
        Column { name, description }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct FileEntry {
    pub name: String,
    pub description: Option<&'static str>,
    pub rows: Option<usize>,
    pub columns: Vec<Column>,
}

impl FileEntry {
    pub fn csv(name: &str, rows: usize, columns: Vec<Column>) -> FileEntry {
        FileEntry {
            name: name.to_string(),
            description: None,
            rows: Some(rows),
            columns,
        }
    }

    pub fn plain(name: &str, description: &'static str) -> FileEntry {
        FileEntry {
            name: name.to_string(),
            description: Some(description),
            rows: None,
            columns: Vec::new(),
        }
    }
}

/// manifest.json: what was run and what each output file holds.
#[derive(Debug, Clone, Serialize)]
pub struct Manifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: String,
    pub config: Option<String>,
    pub seed: Option<u64>,
    pub status: String,
    pub files: Vec<FileEntry>,
}

impl Manifest {
    pub fn new() -> Manifest {
        Manifest {
            tool: "mabnet",
            version: env!("CARGO_PKG_VERSION"),
            command: String::new(),
            config: None,
            seed: None,
            status: "ok".to_string(),
            files: Vec::new(),
        }
    }

    pub fn write(&self, dir: &Path) -> Result<(), CliError> {
        let path = dir.join("manifest.json");
        let mut text = serde_json::to_string_pretty(self).map_err(|e| CliError::Other(e.to_string()))?;
        text.push('\n');
        std::fs::write(&path, text).map_err(CliError::io(&path))
    }
}
