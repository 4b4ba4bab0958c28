//! Run directories: config echo, tables, traces, logs and error records.

use std::fs::{self, File};
use std::path::{Path, PathBuf};

use serde::Serialize;

use oprg::Error;

pub struct RunDir {
    pub path: PathBuf,
}

impl RunDir {
    pub fn create(path: &Path) -> std::io::Result<Self> {
        fs::create_dir_all(path)?;
        Ok(RunDir { path: path.to_path_buf() })
    }

    pub fn file(&self, name: &str) -> PathBuf {
        self.path.join(name)
    }

    pub fn write_text(&self, name: &str, text: &str) -> std::io::Result<()> {
        fs::write(self.file(name), text)
    }

    pub fn write_json<T: Serialize>(&self, name: &str, value: &T) -> std::io::Result<()> {
        let text = serde_json::to_string_pretty(value).map_err(std::io::Error::other)?;
        self.write_text(name, &(text + "\n"))
    }

    /// Serializes `rows` in order, with a header from the field names.
    pub fn write_csv<R: Serialize>(&self, name: &str, rows: &[R]) -> std::io::Result<()> {
        let mut w = csv::Writer::from_path(self.file(name))?;
        for r in rows {
            w.serialize(r)?;
        }
        w.flush()
    }

    pub fn log_file(&self) -> std::io::Result<File> {
        File::create(self.file("run.log"))
    }

    pub fn write_error(&self, command: &str, err: &Error) -> std::io::Result<()> {
        self.write_json("error.json", &ErrorRecord::new(command, err))
    }
}

/// Machine-readable failure record.
#[derive(Debug, Serialize)]
pub struct ErrorRecord {
    pub command: String,
    pub class: &'static str,
    pub root_class: &'static str,
    pub message: String,
    pub exit_code: u8,
}

impl ErrorRecord {
    pub fn new(command: &str, err: &Error) -> Self {
        ErrorRecord {
            command: command.to_string(),
            class: err.class(),
            root_class: err.root().class(),
            message: err.to_string(),
            exit_code: exit_code(err),
        }
    }
}

/// 2 when the Neumann condition fails anywhere in the chain, 1 otherwise.
pub fn exit_code(err: &Error) -> u8 {
    match err.root() {
        Error::NeumannConditionFailed { .. } => 2,
        _ => 1,
    }
}
