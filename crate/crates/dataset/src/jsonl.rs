//! JSON Lines I/O. Conversation files start with a schema header line;
//! sample files are plain JSONL. Blank lines are skipped on read.

use std::io::{BufRead, Write};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::record::{AnnotatedSample, ConversationRecord};
use crate::DatasetError;

pub const SCHEMA: &str = "tokroute.conversation";
pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Header {
    pub schema: String,
    pub version: u32,
}

impl Header {
    pub fn current() -> Self {
        Self {
            schema: SCHEMA.to_string(),
            version: SCHEMA_VERSION,
        }
    }
}

type HeaderCheck<'a> = &'a mut dyn FnMut(usize, &str) -> Result<(), DatasetError>;

fn read_lines<T: DeserializeOwned, R: BufRead>(
    reader: R,
    mut header: Option<HeaderCheck>,
) -> Result<Vec<T>, DatasetError> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let lineno = i + 1;
        if let Some(check) = header.take() {
            check(lineno, &line)?;
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        let value = serde_json::from_str(&line).map_err(|e| DatasetError::Json {
            line: lineno,
            message: e.to_string(),
        })?;
        out.push(value);
    }
    if header.is_some() {
        return Err(DatasetError::Header("empty file".into()));
    }
    Ok(out)
}

pub fn read_samples<R: BufRead>(reader: R) -> Result<Vec<AnnotatedSample>, DatasetError> {
    read_lines(reader, None)
}

pub fn write_samples<W: Write>(mut w: W, samples: &[AnnotatedSample]) -> Result<(), DatasetError> {
    for s in samples {
        serde_json::to_writer(&mut w, s).map_err(std::io::Error::from)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_records<R: BufRead>(reader: R) -> Result<Vec<ConversationRecord>, DatasetError> {
    let mut check = |_: usize, line: &str| {
        let h: Header = serde_json::from_str(line).map_err(|e| DatasetError::Header(e.to_string()))?;
        if h != Header::current() {
            return Err(DatasetError::Header(format!(
                "expected {SCHEMA} v{SCHEMA_VERSION}, found {} v{}",
                h.schema, h.version
            )));
        }
        Ok(())
    };
    read_lines(reader, Some(&mut check))
}

pub fn write_records<W: Write>(mut w: W, records: &[ConversationRecord]) -> Result<(), DatasetError> {
    serde_json::to_writer(&mut w, &Header::current()).map_err(std::io::Error::from)?;
    w.write_all(b"\n")?;
    for r in records {
        serde_json::to_writer(&mut w, r).map_err(std::io::Error::from)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}
