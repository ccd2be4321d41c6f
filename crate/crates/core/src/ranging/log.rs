use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{ModuleId, RangingError, RangingMeasurement};

/// One line of a measurement log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogRecord {
    pub t: f64,
    /// Initiator.
    pub i: ModuleId,
    /// Responder.
    pub j: ModuleId,
    pub raw: f64,
    pub corrected: f64,
    pub accepted: bool,
    /// Module that computed the distance.
    pub direction: ModuleId,
}

impl From<&RangingMeasurement> for LogRecord {
    fn from(m: &RangingMeasurement) -> Self {
        Self {
            t: m.time,
            i: m.initiator,
            j: m.responder,
            raw: m.raw,
            corrected: m.corrected,
            accepted: m.accepted,
            direction: m.computed_by(),
        }
    }
}

fn log_error(path: &Path, message: impl ToString) -> RangingError {
    RangingError::Log { path: path.display().to_string(), message: message.to_string() }
}

/// Writes one JSON object per line.
pub fn write_log<'a>(
    path: &Path,
    records: impl IntoIterator<Item = &'a LogRecord>,
) -> Result<(), RangingError> {
    let file = File::create(path).map_err(|e| log_error(path, e))?;
    let mut w = BufWriter::new(file);
    for r in records {
        serde_json::to_writer(&mut w, r).map_err(|e| log_error(path, e))?;
        w.write_all(b"\n").map_err(|e| log_error(path, e))?;
    }
    w.flush().map_err(|e| log_error(path, e))
}

/// Reads a log written by [`write_log`]; blank lines are skipped.
pub fn read_log(path: &Path) -> Result<Vec<LogRecord>, RangingError> {
    let file = File::open(path).map_err(|e| log_error(path, e))?;
    let mut out = Vec::new();
    for (n, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| log_error(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec = serde_json::from_str(&line).map_err(|e| log_error(path, format!("line {}: {e}", n + 1)))?;
        out.push(rec);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ranges.jsonl");
        let recs = vec![
            LogRecord { t: 0.1, i: 0, j: 9, raw: 3.2, corrected: 3.0, accepted: true, direction: 9 },
            LogRecord { t: 0.1, i: 9, j: 10, raw: 1.1, corrected: 1.05, accepted: false, direction: 10 },
        ];
        write_log(&path, &recs).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text.lines().count(), 2);
        assert!(text.lines().next().unwrap().contains("\"direction\":9"));
        assert_eq!(read_log(&path).unwrap(), recs);
    }

    #[test]
    fn bad_line_reports_path_and_line() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.jsonl");
        std::fs::write(&path, "{\"t\":0}\n").unwrap();
        let err = read_log(&path).unwrap_err().to_string();
        assert!(err.contains("bad.jsonl") && err.contains("line 1"), "{err}");
    }
}
