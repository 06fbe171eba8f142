//! Line-delimited JSON event log, the persistence primitive shared by
//! the catalog and the PID registry.
//!
//! One JSON object per line, `\n` terminated, append-only. A torn final
//! line without its newline (interrupted write) is dropped on replay;
//! malformed lines elsewhere are corruption errors.

use std::fs::{File, OpenOptions};
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;

#[derive(Debug, thiserror::Error)]
pub enum LogError {
    #[error("record log i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("record log corrupt at line {line}: {detail}")]
    Corrupt { line: usize, detail: String },
}

pub(crate) struct JsonLog {
    writer: BufWriter<File>,
}

impl JsonLog {
    pub fn open_append(path: &Path) -> Result<JsonLog, LogError> {
        let file = OpenOptions::new().create(true).append(true).open(path)?;
        Ok(JsonLog {
            writer: BufWriter::new(file),
        })
    }

    pub fn append<T: Serialize>(&mut self, event: &T) -> Result<(), LogError> {
        let line = serde_json::to_string(event).expect("log events serialize");
        self.writer.write_all(line.as_bytes())?;
        self.writer.write_all(b"\n")?;
        self.writer.flush()?;
        Ok(())
    }

    pub fn replay<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, LogError> {
        let mut text = String::new();
        match File::open(path) {
            Ok(mut f) => {
                f.read_to_string(&mut text)?;
            }
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
            Err(e) => return Err(e.into()),
        }
        let ends_with_newline = text.ends_with('\n');
        let lines: Vec<&str> = text.lines().collect();
        let mut events = Vec::with_capacity(lines.len());
        for (idx, line) in lines.iter().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            match serde_json::from_str::<T>(line) {
                Ok(event) => events.push(event),
                Err(e) => {
                    let is_last = idx + 1 == lines.len();
                    if is_last && !ends_with_newline {
                        break;
                    }
                    return Err(LogError::Corrupt {
                        line: idx + 1,
                        detail: e.to_string(),
                    });
                }
            }
        }
        Ok(events)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde::Deserialize;

    #[derive(Serialize, Deserialize, PartialEq, Debug)]
    struct Ev {
        n: u32,
    }

    #[test]
    fn append_replay_and_torn_tail() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.log");
        let mut log = JsonLog::open_append(&path).unwrap();
        log.append(&Ev { n: 1 }).unwrap();
        log.append(&Ev { n: 2 }).unwrap();
        drop(log);
        let mut raw = std::fs::read(&path).unwrap();
        raw.extend_from_slice(b"{\"n\":3");
        std::fs::write(&path, raw).unwrap();
        let events: Vec<Ev> = JsonLog::replay(&path).unwrap();
        assert_eq!(events, vec![Ev { n: 1 }, Ev { n: 2 }]);
    }

    #[test]
    fn corrupt_interior_line_errors() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.log");
        std::fs::write(&path, "garbage\n{\"n\":1}\n").unwrap();
        let err = JsonLog::replay::<Ev>(&path).unwrap_err();
        assert!(matches!(err, LogError::Corrupt { line: 1, .. }));
    }
}
