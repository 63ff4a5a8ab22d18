//! CSV and JSON artifacts. Every file carries its schema string and the
//! configuration text it was produced from: CSV files as leading `#` lines,
//! JSON files as the `schema` and `config` members.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::error::{CliError, Result};

/// Bumped whenever a column or member changes meaning.
pub const SCHEMA_VERSION: u32 = 1;

pub fn schema(kind: &str) -> String {
    format!("levelcg.{kind}.v{SCHEMA_VERSION}")
}

#[derive(Serialize)]
struct Document<'a, D> {
    schema: String,
    config: &'a str,
    data: &'a D,
}

pub struct OutputDir {
    dir: PathBuf,
    config_source: String,
    written: Vec<PathBuf>,
}

impl OutputDir {
    pub fn create(dir: &Path, config_source: &str) -> Result<Self> {
        fs::create_dir_all(dir).map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))?;
        Ok(Self { dir: dir.to_path_buf(), config_source: config_source.to_string(), written: Vec::new() })
    }

    pub fn path(&self) -> &Path {
        &self.dir
    }

    pub fn written(&self) -> &[PathBuf] {
        &self.written
    }

    fn header(&self, kind: &str) -> String {
        let mut h = format!("# schema: {}\n# config:\n", schema(kind));
        for line in self.config_source.lines() {
            h.push_str("#   ");
            h.push_str(line);
            h.push('\n');
        }
        h
    }

    /// Writes `rows` under `columns` and reads the file back to check that
    /// every row arrived with the right width.
    pub fn write_csv<R: Serialize>(&mut self, name: &str, kind: &str, columns: &[&str], rows: impl IntoIterator<Item = R>) -> Result<PathBuf> {
        let mut buf = self.header(kind).into_bytes();
        let mut count = 0usize;
        {
            let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(&mut buf);
            w.write_record(columns).map_err(csv_err)?;
            for r in rows {
                w.serialize(r).map_err(csv_err)?;
                count += 1;
            }
            w.flush()?;
        }
        let path = self.dir.join(name);
        fs::write(&path, &buf).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        check_csv(&path, columns.len(), count)?;
        self.written.push(path.clone());
        Ok(path)
    }

    pub fn write_json<D: Serialize>(&mut self, name: &str, kind: &str, data: &D) -> Result<PathBuf> {
        let doc = Document { schema: schema(kind), config: &self.config_source, data };
        let mut text = serde_json::to_string_pretty(&doc).map_err(|e| CliError::Validation(e.to_string()))?;
        text.push('\n');
        let path = self.dir.join(name);
        fs::write(&path, &text).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        let back: serde_json::Value = serde_json::from_str(&fs::read_to_string(&path)?)
            .map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))?;
        if back.get("schema").and_then(|s| s.as_str()) != Some(schema(kind).as_str()) {
            return Err(CliError::Validation(format!("{}: schema member missing", path.display())));
        }
        self.written.push(path.clone());
        Ok(path)
    }
}

fn csv_err(e: csv::Error) -> CliError {
    CliError::Io(e.to_string())
}

fn check_csv(path: &Path, width: usize, rows: usize) -> Result<()> {
    let text = fs::read_to_string(path)?;
    let mut r = csv::ReaderBuilder::new().comment(Some(b'#')).has_headers(true).from_reader(text.as_bytes());
    let mut seen = 0usize;
    for rec in r.records() {
        let rec = rec.map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))?;
        if rec.len() != width {
            return Err(CliError::Validation(format!("{}: row {} has {} fields, expected {width}", path.display(), seen + 1, rec.len())));
        }
        seen += 1;
    }
    if seen != rows {
        return Err(CliError::Validation(format!("{}: read back {seen} rows, wrote {rows}", path.display())));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_carries_schema_and_config() {
        let dir = tempfile::tempdir().unwrap();
        let mut out = OutputDir::create(dir.path(), "[sde]\nn = 3").unwrap();
        let p = out.write_csv("x.csv", "demo", &["a", "b"], [(1.0, 2usize), (0.5, 3)]).unwrap();
        let text = fs::read_to_string(p).unwrap();
        assert!(text.starts_with("# schema: levelcg.demo.v1\n# config:\n#   [sde]\n#   n = 3\na,b\n1.0,2\n"), "{text}");
    }

    #[test]
    fn json_wraps_data() {
        let dir = tempfile::tempdir().unwrap();
        let mut out = OutputDir::create(dir.path(), "").unwrap();
        let p = out.write_json("x.json", "demo", &vec![1, 2]).unwrap();
        let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(p).unwrap()).unwrap();
        assert_eq!(v["data"][1], 2);
        assert_eq!(v["schema"], "levelcg.demo.v1");
    }
}
