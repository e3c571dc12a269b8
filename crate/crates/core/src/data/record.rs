use std::collections::BTreeMap;
use std::io::{BufRead, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One dataset line: a knowledge graph and its target text.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetRecord {
    pub entities: Vec<String>,
    /// Entity name to type label.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub types: Option<BTreeMap<String, String>>,
    /// `(subject index, relation, object index)`
    #[serde(default)]
    pub facts: Vec<(usize, String, usize)>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub title: Option<String>,
    #[serde(default)]
    pub text: String,
}

/// Parses JSON lines; blank lines are skipped. Errors name the line.
pub fn parse_jsonl(reader: impl BufRead) -> Result<Vec<DatasetRecord>> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec = serde_json::from_str(&line).map_err(|e| Error::Format(format!("line {}: {e}", i + 1)))?;
        out.push(rec);
    }
    Ok(out)
}

pub fn read_jsonl(path: &Path) -> Result<Vec<DatasetRecord>> {
    let f = std::fs::File::open(path)?;
    parse_jsonl(std::io::BufReader::new(f))
}

pub fn write_jsonl(mut writer: impl Write, records: &[DatasetRecord]) -> Result<()> {
    for r in records {
        serde_json::to_writer(&mut writer, r)?;
        writer.write_all(b"\n")?;
    }
    Ok(())
}
