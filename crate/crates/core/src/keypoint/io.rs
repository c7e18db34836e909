//! Keypoint CSV files: header `x,y,scale,orientation,d0,...,d127`, one keypoint per row.

use std::fs::File;
use std::io::{self, Read, Write};
use std::path::{Path, PathBuf};

use thiserror::Error;

use super::{Keypoint, DESCRIPTOR_LEN};

const FIXED_COLUMNS: [&str; 4] = ["x", "y", "scale", "orientation"];
const COLUMN_COUNT: usize = FIXED_COLUMNS.len() + DESCRIPTOR_LEN;

#[derive(Debug, Error)]
pub enum KeypointFileError {
    #[error("failed to access keypoint file {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("line {line}: expected {COLUMN_COUNT} fields, found {found}")]
    ColumnCount { line: u64, found: usize },
    #[error("line {line}: field {column} is not a number: {value:?}")]
    NonNumeric { line: u64, column: String, value: String },
    #[error("line {line}: invalid keypoint: {reason}")]
    Invalid { line: u64, reason: String },
    #[error("bad header: expected x,y,scale,orientation,d0,...,d127")]
    Header,
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

fn header() -> Vec<String> {
    FIXED_COLUMNS
        .iter()
        .map(|s| s.to_string())
        .chain((0..DESCRIPTOR_LEN).map(|i| format!("d{i}")))
        .collect()
}

pub fn write_keypoints<W: Write>(points: &[Keypoint], out: W) -> Result<(), KeypointFileError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(header())?;
    let mut row: Vec<String> = Vec::with_capacity(COLUMN_COUNT);
    for kp in points {
        row.clear();
        // `{}` on f64 is the shortest representation that parses back exactly
        row.extend([kp.x, kp.y, kp.scale, kp.orientation].iter().map(|v| v.to_string()));
        row.extend(kp.descriptor.iter().map(|v| v.to_string()));
        w.write_record(&row)?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

pub fn read_keypoints<R: Read>(input: R) -> Result<Vec<Keypoint>, KeypointFileError> {
    let mut r = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(input);
    let mut records = r.records();
    match records.next() {
        Some(rec) => {
            let rec = rec?;
            if rec.len() != COLUMN_COUNT || rec.iter().zip(header()).any(|(a, b)| a.trim() != b) {
                return Err(KeypointFileError::Header);
            }
        }
        None => return Err(KeypointFileError::Header),
    }
    let names = header();
    let mut points = Vec::new();
    for rec in records {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line());
        if rec.len() != COLUMN_COUNT {
            return Err(KeypointFileError::ColumnCount { line, found: rec.len() });
        }
        let mut values = Vec::with_capacity(COLUMN_COUNT);
        for (field, name) in rec.iter().zip(&names) {
            let v: f64 = field.trim().parse().map_err(|_| KeypointFileError::NonNumeric {
                line,
                column: name.clone(),
                value: field.to_string(),
            })?;
            values.push(v);
        }
        let descriptor = values.split_off(FIXED_COLUMNS.len());
        let kp = Keypoint::new(values[0], values[1], values[2], values[3], descriptor).map_err(|e| {
            KeypointFileError::Invalid {
                line,
                reason: e.to_string(),
            }
        })?;
        points.push(kp);
    }
    Ok(points)
}

pub fn save_keypoints(points: &[Keypoint], path: impl AsRef<Path>) -> Result<(), KeypointFileError> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|source| KeypointFileError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    write_keypoints(points, io::BufWriter::new(file))
}

pub fn load_keypoints(path: impl AsRef<Path>) -> Result<Vec<Keypoint>, KeypointFileError> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|source| KeypointFileError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    read_keypoints(io::BufReader::new(file))
}
