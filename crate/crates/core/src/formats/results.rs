//! JSON-lines result records. Floats are written in shortest round-trip form,
//! so reading a record back gives bit-identical values.

use std::fs::OpenOptions;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use super::FormatError;
use crate::harness::ResultRecord;

pub fn write_results(records: &[ResultRecord], mut sink: impl Write) -> Result<(), FormatError> {
    for r in records {
        let line = serde_json::to_string(r).expect("records serialize");
        writeln!(sink, "{line}").map_err(|e| FormatError::io("<sink>", e))?;
    }
    Ok(())
}

pub fn append_result(path: impl AsRef<Path>, record: &ResultRecord) -> Result<(), FormatError> {
    let path = path.as_ref();
    let mut f = OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(|e| FormatError::io(path, e))?;
    write_results(std::slice::from_ref(record), &mut f).map_err(|e| match e {
        FormatError::Io { source, .. } => FormatError::io(path, source),
        e => e,
    })
}

/// Blank lines are skipped; line numbers in errors are 1-based.
pub fn read_results_from(source: impl Read) -> Result<Vec<ResultRecord>, FormatError> {
    let mut out = Vec::new();
    for (i, line) in BufReader::new(source).lines().enumerate() {
        let line = line.map_err(|e| FormatError::ResultLine {
            line: i + 1,
            msg: e.to_string(),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let rec = serde_json::from_str(&line).map_err(|e| FormatError::ResultLine {
            line: i + 1,
            msg: e.to_string(),
        })?;
        out.push(rec);
    }
    Ok(out)
}

pub fn read_results(path: impl AsRef<Path>) -> Result<Vec<ResultRecord>, FormatError> {
    let path = path.as_ref();
    let f = std::fs::File::open(path).map_err(|e| FormatError::io(path, e))?;
    read_results_from(f)
}
