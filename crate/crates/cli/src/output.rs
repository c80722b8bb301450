//! Deterministic serialization and atomic file output.

use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::Value;
use tempfile::NamedTempFile;
use vclass_core::units::round_sig;

use crate::error::CliError;

/// Round every number in a JSON tree to the serialized precision.
pub fn round_json(v: Value) -> Value {
    match v {
        Value::Number(n) if n.is_f64() => {
            let x = round_sig(n.as_f64().expect("f64 number"));
            serde_json::Number::from_f64(x).map_or(Value::Null, Value::Number)
        }
        Value::Array(a) => Value::Array(a.into_iter().map(round_json).collect()),
        Value::Object(o) => Value::Object(o.into_iter().map(|(k, v)| (k, round_json(v))).collect()),
        other => other,
    }
}

/// Pretty JSON with rounded numbers and a trailing newline.
pub fn to_json<T: Serialize>(value: &T) -> Result<String, CliError> {
    let v = serde_json::to_value(value).map_err(vclass_core::Error::from)?;
    let mut s = serde_json::to_string_pretty(&round_json(v)).map_err(vclass_core::Error::from)?;
    s.push('\n');
    Ok(s)
}

/// Files staged in their target directories and renamed into place together,
/// so a failed run leaves none of them behind.
#[derive(Default)]
pub struct Staged {
    files: Vec<(NamedTempFile, PathBuf)>,
}

impl Staged {
    pub fn new() -> Self {
        Self::default()
    }

    /// Stage `path`, filling it through `fill`.
    pub fn file(
        &mut self,
        path: &Path,
        fill: impl FnOnce(&mut dyn Write) -> Result<(), CliError>,
    ) -> Result<(), CliError> {
        let dir = match path.parent() {
            Some(p) if !p.as_os_str().is_empty() => p,
            _ => Path::new("."),
        };
        let mut tmp = NamedTempFile::new_in(dir).map_err(|e| CliError::io(path, e))?;
        {
            let mut w = std::io::BufWriter::new(tmp.as_file_mut());
            fill(&mut w)?;
            w.flush().map_err(|e| CliError::io(path, e))?;
        }
        self.files.push((tmp, path.to_path_buf()));
        Ok(())
    }

    pub fn text(&mut self, path: &Path, text: &str) -> Result<(), CliError> {
        self.file(path, |w| {
            w.write_all(text.as_bytes())
                .map_err(|e| CliError::io(path, e))
        })
    }

    pub fn commit(self) -> Result<(), CliError> {
        for (tmp, path) in self.files {
            tmp.persist(&path)
                .map_err(|e| CliError::io(&path, e.error))?;
        }
        Ok(())
    }
}

/// Write `text` to `path` atomically, or to stdout when no path is given.
pub fn emit(path: Option<&Path>, text: &str) -> Result<(), CliError> {
    match path {
        Some(p) => {
            let mut s = Staged::new();
            s.text(p, text)?;
            s.commit()
        }
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(text.as_bytes())
                .and_then(|_| out.flush())
                .map_err(|e| CliError::io(Path::new("<stdout>"), e))
        }
    }
}
