//! Newline-delimited dataset files.
//!
//! The first line is a header object with the dataset extents, the task and
//! the number of records per split. Every following line is one record with
//! keys `split`, `M`, `E`, `p`, `n` and `label`. Floats are written with
//! shortest round-trip formatting, so `load(save(x)) == x` bit-exactly.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::record::{DatasetSplit, Dims, PatientRecord, TaskKind};
use crate::error::{io_err, CoreError, Result};

pub const DATASET_FORMAT: &str = "mmnas-dataset/1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitName {
    Train,
    Validation,
    Test,
}

#[derive(Debug, Serialize, Deserialize)]
struct Counts {
    train: usize,
    validation: usize,
    test: usize,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    format: String,
    dims: Dims,
    task: TaskKind,
    counts: Counts,
}

#[derive(Serialize)]
struct LineOut<'a> {
    split: SplitName,
    #[serde(flatten)]
    record: &'a PatientRecord,
}

#[derive(Deserialize)]
struct LineIn {
    split: SplitName,
    #[serde(flatten)]
    record: PatientRecord,
}

/// Writes `split` to `path`, replacing any existing file.
pub fn save_dataset(split: &DatasetSplit, path: &Path) -> Result<()> {
    split.validate()?;
    let file = File::create(path).map_err(io_err(path))?;
    let mut out = BufWriter::new(file);
    let header = Header {
        format: DATASET_FORMAT.to_string(),
        dims: split.dims,
        task: split.task,
        counts: Counts {
            train: split.train.len(),
            validation: split.validation.len(),
            test: split.test.len(),
        },
    };
    serde_json::to_writer(&mut out, &header)?;
    out.write_all(b"\n").map_err(io_err(path))?;
    let parts = [
        (SplitName::Train, &split.train),
        (SplitName::Validation, &split.validation),
        (SplitName::Test, &split.test),
    ];
    for (name, records) in parts {
        for record in records {
            serde_json::to_writer(&mut out, &LineOut { split: name, record })?;
            out.write_all(b"\n").map_err(io_err(path))?;
        }
    }
    out.flush().map_err(io_err(path))
}

/// Reads a dataset written by [`save_dataset`]. Malformed lines produce
/// [`CoreError::Parse`] with the 1-based line number; records violating the
/// dataset invariants produce [`CoreError::InvalidRecord`] with the 0-based
/// record index.
pub fn load_dataset(path: &Path) -> Result<DatasetSplit> {
    let file = File::open(path).map_err(io_err(path))?;
    read_dataset(BufReader::new(file), path)
}

fn read_dataset(reader: impl BufRead, path: &Path) -> Result<DatasetSplit> {
    let mut lines = reader.lines();
    let first = lines
        .next()
        .ok_or(CoreError::Parse {
            line: 1,
            reason: "empty file, missing header".into(),
        })?
        .map_err(io_err(path))?;
    let header: Header = serde_json::from_str(&first).map_err(|e| CoreError::Parse {
        line: 1,
        reason: format!("bad header: {e}"),
    })?;
    if header.format != DATASET_FORMAT {
        return Err(CoreError::Parse {
            line: 1,
            reason: format!("unsupported format `{}`", header.format),
        });
    }
    header.dims.validate()?;

    let mut split = DatasetSplit {
        dims: header.dims,
        task: header.task,
        train: Vec::with_capacity(header.counts.train),
        validation: Vec::with_capacity(header.counts.validation),
        test: Vec::with_capacity(header.counts.test),
    };
    let mut record_index = 0;
    let mut last_line = 1;
    for (i, line) in lines.enumerate() {
        let line_no = i + 2;
        let line = line.map_err(io_err(path))?;
        if line.trim().is_empty() {
            continue;
        }
        last_line = line_no;
        let parsed: LineIn = serde_json::from_str(&line).map_err(|e| CoreError::Parse {
            line: line_no,
            reason: format!("record {record_index}: {e}"),
        })?;
        parsed
            .record
            .validate(&split.dims, split.task)
            .map_err(|reason| CoreError::InvalidRecord {
                record: record_index,
                reason: format!("line {line_no}: {reason}"),
            })?;
        match parsed.split {
            SplitName::Train => split.train.push(parsed.record),
            SplitName::Validation => split.validation.push(parsed.record),
            SplitName::Test => split.test.push(parsed.record),
        }
        record_index += 1;
    }
    let found = [split.train.len(), split.validation.len(), split.test.len()];
    let expected = [header.counts.train, header.counts.validation, header.counts.test];
    if found != expected {
        return Err(CoreError::Parse {
            line: last_line + 1,
            reason: format!(
                "record counts {found:?} do not match header {expected:?} (truncated file?)"
            ),
        });
    }
    Ok(split)
}
