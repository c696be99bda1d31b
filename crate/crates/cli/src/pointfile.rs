//! Point files: a small little-endian binary container and headerless CSV.
//!
//! Binary layout: the magic `BKNN1`, `n: u32`, `d: u32`, a dtype byte (1 =
//! float64), then `n * d` float64 values row-major. Loaders sniff the magic,
//! so either format can be passed wherever a point file is expected.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use bregman_kd::PointSet;

use crate::error::{CliError, Result};

pub const MAGIC: &[u8; 5] = b"BKNN1";
pub const DTYPE_F64: u8 = 1;
pub const HEADER_LEN: usize = 14;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Binary,
    Csv,
}

impl Format {
    /// `.csv` files are written as CSV, anything else as binary.
    pub fn for_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("csv") => Format::Csv,
            _ => Format::Binary,
        }
    }
}

pub fn encode_binary(points: &PointSet) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + 8 * points.as_slice().len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(points.len() as u32).to_le_bytes());
    out.extend_from_slice(&(points.dim() as u32).to_le_bytes());
    out.push(DTYPE_F64);
    for v in points.as_slice() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode_binary(bytes: &[u8]) -> std::result::Result<PointSet, String> {
    if bytes.len() < HEADER_LEN || &bytes[..5] != MAGIC {
        return Err("missing BKNN1 header".into());
    }
    let n = u32::from_le_bytes(bytes[5..9].try_into().unwrap()) as usize;
    let d = u32::from_le_bytes(bytes[9..13].try_into().unwrap()) as usize;
    if bytes[13] != DTYPE_F64 {
        return Err(format!("unsupported dtype byte {}", bytes[13]));
    }
    let expected = n
        .checked_mul(d)
        .and_then(|v| v.checked_mul(8))
        .and_then(|v| v.checked_add(HEADER_LEN))
        .ok_or("header dimensions overflow")?;
    if bytes.len() != expected {
        return Err(format!(
            "expected {expected} bytes for {n} x {d} points, found {}",
            bytes.len()
        ));
    }
    if n == 0 {
        return Err("file holds no points".into());
    }
    let data = bytes[HEADER_LEN..]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    PointSet::new(data, d).map_err(|e| e.to_string())
}

/// Values are printed in Rust's shortest round-trip form, so parsing them back
/// reproduces every bit.
pub fn encode_csv(points: &PointSet) -> Vec<u8> {
    let mut wtr = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
    for row in points.rows() {
        wtr.write_record(row.iter().map(|v| v.to_string()))
            .expect("writing to memory");
    }
    wtr.into_inner().expect("writing to memory")
}

pub fn decode_csv(bytes: &[u8]) -> std::result::Result<PointSet, String> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_reader(bytes);
    let mut data = Vec::new();
    let mut dim = None;
    for (line, record) in rdr.records().enumerate() {
        let record = record.map_err(|e| e.to_string())?;
        match dim {
            None => dim = Some(record.len()),
            Some(d) if d != record.len() => {
                return Err(format!(
                    "row {line} has {} columns, expected {d}",
                    record.len()
                ))
            }
            _ => {}
        }
        for field in record.iter() {
            let v: f64 = field
                .parse()
                .map_err(|_| format!("row {line}: cannot parse '{field}' as a number"))?;
            data.push(v);
        }
    }
    let dim = dim.ok_or("file holds no points")?;
    PointSet::new(data, dim).map_err(|e| e.to_string())
}

pub fn load(path: &Path) -> Result<PointSet> {
    let bytes = fs::read(path).map_err(|e| CliError::io(path, e))?;
    let decoded = if bytes.starts_with(MAGIC) {
        decode_binary(&bytes)
    } else {
        decode_csv(&bytes)
    };
    decoded.map_err(|msg| CliError::format(path, msg))
}

pub fn save(path: &Path, points: &PointSet) -> Result<()> {
    let bytes = match Format::for_path(path) {
        Format::Binary => encode_binary(points),
        Format::Csv => encode_csv(points),
    };
    let file = fs::File::create(path).map_err(|e| CliError::io(path, e))?;
    let mut out = BufWriter::new(file);
    out.write_all(&bytes)
        .and_then(|_| out.flush())
        .map_err(|e| CliError::io(path, e))
}
