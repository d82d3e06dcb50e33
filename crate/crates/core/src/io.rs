//! File formats.
//!
//! * `amap`: magic `AMAP1\n`, `rows: u32 LE`, `cols: u32 LE`, then
//!   `rows * cols` IEEE-754 `f64 LE` values, row-major, no padding.
//! * matrix CSV: one row per line, comma-separated, LF endings, no header.
//!   Values use the shortest decimal form that round-trips an `f64`. An
//!   optional sidecar `<file>.dims.json` holding `{"rows": R, "cols": C}`
//!   declares the expected shape.
//! * boxes CSV: header `slice_id,x0,y0,x1,y1`.
//! * detections JSON: array of `{slice_id, x, y, score}`.
//!
//! Writers go through a temporary file in the destination directory that is
//! renamed into place, so a failed write never leaves a partial file.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{BoundingBox, Detection, Matrix};

pub const AMAP_MAGIC: &[u8; 6] = b"AMAP1\n";
const AMAP_HEADER_LEN: usize = 6 + 4 + 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MatrixFormat {
    Csv,
    Amap,
}

impl MatrixFormat {
    /// Guesses the format from the file extension (`.csv` or `.amap`).
    pub fn from_path(path: &Path) -> Option<Self> {
        match path.extension()?.to_str()?.to_ascii_lowercase().as_str() {
            "csv" => Some(MatrixFormat::Csv),
            "amap" => Some(MatrixFormat::Amap),
            _ => None,
        }
    }
}

pub fn read_matrix(path: impl AsRef<Path>, format: MatrixFormat) -> Result<Matrix> {
    let path = path.as_ref();
    match format {
        MatrixFormat::Amap => {
            let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
            decode_amap(&bytes).map_err(|(offset, msg)| Error::format(path, format!("byte offset {offset}"), msg))
        }
        MatrixFormat::Csv => {
            let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            let declared = read_dims_sidecar(path)?;
            parse_matrix_csv(&text, declared)
                .map_err(|(line, msg)| Error::format(path, format!("line {line}"), msg))
        }
    }
}

pub fn write_matrix(m: &Matrix, path: impl AsRef<Path>, format: MatrixFormat) -> Result<()> {
    let bytes = match format {
        MatrixFormat::Amap => encode_amap(m),
        MatrixFormat::Csv => format_matrix_csv(m).into_bytes(),
    };
    write_atomic(path.as_ref(), &bytes)
}

/// Reads a matrix, picking the format from the extension.
pub fn read_matrix_auto(path: impl AsRef<Path>) -> Result<Matrix> {
    let path = path.as_ref();
    let format = MatrixFormat::from_path(path).ok_or_else(|| {
        Error::format(path, "file name", "expected a .amap or .csv extension")
    })?;
    read_matrix(path, format)
}

pub fn encode_amap(m: &Matrix) -> Vec<u8> {
    let mut out = Vec::with_capacity(AMAP_HEADER_LEN + 8 * m.len());
    out.extend_from_slice(AMAP_MAGIC);
    out.extend_from_slice(&(m.rows() as u32).to_le_bytes());
    out.extend_from_slice(&(m.cols() as u32).to_le_bytes());
    for v in m.as_slice() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

/// Decodes an amap buffer. Errors carry the byte offset of the problem.
pub fn decode_amap(bytes: &[u8]) -> std::result::Result<Matrix, (usize, String)> {
    if bytes.len() < AMAP_HEADER_LEN {
        return Err((0, format!("truncated header: {} bytes", bytes.len())));
    }
    if &bytes[..6] != AMAP_MAGIC {
        return Err((0, "bad magic, expected \"AMAP1\\n\"".into()));
    }
    let rows = u32::from_le_bytes(bytes[6..10].try_into().unwrap()) as usize;
    let cols = u32::from_le_bytes(bytes[10..14].try_into().unwrap()) as usize;
    if rows == 0 || cols == 0 {
        return Err((6, format!("dimensions must be positive, got {rows}x{cols}")));
    }
    let expected = rows
        .checked_mul(cols)
        .and_then(|n| n.checked_mul(8))
        .ok_or((6, "dimensions overflow".to_string()))?;
    let payload = &bytes[AMAP_HEADER_LEN..];
    if payload.len() != expected {
        return Err((
            AMAP_HEADER_LEN,
            format!(
                "payload is {} bytes, {rows}x{cols} needs {expected}",
                payload.len()
            ),
        ));
    }
    let mut data = Vec::with_capacity(rows * cols);
    for (i, chunk) in payload.chunks_exact(8).enumerate() {
        let v = f64::from_le_bytes(chunk.try_into().unwrap());
        if !v.is_finite() {
            return Err((AMAP_HEADER_LEN + 8 * i, format!("non-finite value {v}")));
        }
        data.push(v);
    }
    Ok(Matrix::from_parts_unchecked(rows, cols, data))
}

pub fn format_matrix_csv(m: &Matrix) -> String {
    let mut out = String::new();
    for r in 0..m.rows() {
        for (c, v) in m.row(r).iter().enumerate() {
            if c > 0 {
                out.push(',');
            }
            // `Display` for f64 is the shortest representation that round-trips.
            out.push_str(&v.to_string());
        }
        out.push('\n');
    }
    out
}

/// Parses matrix CSV text. Errors carry the 1-based line number.
pub fn parse_matrix_csv(
    text: &str,
    declared: Option<(usize, usize)>,
) -> std::result::Result<Matrix, (usize, String)> {
    let mut data = Vec::new();
    let mut cols = declared.map(|(_, c)| c);
    let mut rows = 0usize;
    for (i, line) in text.split('\n').enumerate() {
        let lineno = i + 1;
        let line = line.strip_suffix('\r').unwrap_or(line);
        if line.trim().is_empty() {
            continue;
        }
        let mut n = 0usize;
        for field in line.split(',') {
            let v: f64 = field
                .trim()
                .parse()
                .map_err(|_| (lineno, format!("cannot parse {:?} as a number", field.trim())))?;
            if !v.is_finite() {
                return Err((lineno, format!("non-finite value {v}")));
            }
            data.push(v);
            n += 1;
        }
        match cols {
            None => cols = Some(n),
            Some(c) if c != n => {
                return Err((lineno, format!("dimension mismatch: expected {c} columns, found {n}")))
            }
            _ => {}
        }
        rows += 1;
    }
    let cols = cols.unwrap_or(0);
    if rows == 0 {
        return Err((1, "empty matrix".into()));
    }
    if let Some((r, _)) = declared {
        if r != rows {
            return Err((rows, format!("dimension mismatch: expected {r} rows, found {rows}")));
        }
    }
    Ok(Matrix::from_parts_unchecked(rows, cols, data))
}

#[derive(Debug, Serialize, Deserialize)]
struct DimsSidecar {
    rows: usize,
    cols: usize,
}

fn dims_sidecar_path(path: &Path) -> PathBuf {
    let mut name = path.as_os_str().to_owned();
    name.push(".dims.json");
    PathBuf::from(name)
}

fn read_dims_sidecar(path: &Path) -> Result<Option<(usize, usize)>> {
    let sidecar = dims_sidecar_path(path);
    if !sidecar.exists() {
        return Ok(None);
    }
    let dims: DimsSidecar = read_json(&sidecar)?;
    Ok(Some((dims.rows, dims.cols)))
}

/// Writes the `<file>.dims.json` sidecar declaring the CSV matrix shape.
pub fn write_dims_sidecar(path: impl AsRef<Path>, rows: usize, cols: usize) -> Result<()> {
    write_json(&dims_sidecar_path(path.as_ref()), &DimsSidecar { rows, cols })
}

#[derive(Debug, Deserialize)]
struct BoxRow {
    slice_id: String,
    x0: u32,
    y0: u32,
    x1: u32,
    y1: u32,
}

pub fn read_boxes(path: impl AsRef<Path>) -> Result<Vec<BoundingBox>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_boxes(&text).map_err(|(row, msg)| Error::format(path, format!("row {row}"), msg))
}

/// Parses boxes CSV. Row numbers count data rows from 1 (header excluded).
pub fn parse_boxes(text: &str) -> std::result::Result<Vec<BoundingBox>, (usize, String)> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let headers = reader.headers().map_err(|e| (0, e.to_string()))?.clone();
    let expected = ["slice_id", "x0", "y0", "x1", "y1"];
    if headers.iter().collect::<Vec<_>>() != expected {
        return Err((0, format!("header must be {}", expected.join(","))));
    }
    let mut out = Vec::new();
    for (i, rec) in reader.deserialize::<BoxRow>().enumerate() {
        let row = i + 1;
        let r = rec.map_err(|e| (row, e.to_string()))?;
        let b = BoundingBox::new(r.slice_id, r.x0, r.y0, r.x1, r.y1).map_err(|e| (row, e.to_string()))?;
        out.push(b);
    }
    Ok(out)
}

pub fn format_boxes(boxes: &[BoundingBox]) -> String {
    let mut out = String::from("slice_id,x0,y0,x1,y1\n");
    for b in boxes {
        out.push_str(&format!("{},{},{},{},{}\n", b.slice_id, b.x0, b.y0, b.x1, b.y1));
    }
    out
}

pub fn write_boxes(boxes: &[BoundingBox], path: impl AsRef<Path>) -> Result<()> {
    write_atomic(path.as_ref(), format_boxes(boxes).as_bytes())
}

pub fn read_detections(path: impl AsRef<Path>) -> Result<Vec<Detection>> {
    let dets: Vec<Detection> = read_json(path.as_ref())?;
    for (i, d) in dets.iter().enumerate() {
        if !d.score.is_finite() {
            return Err(Error::format(path.as_ref(), format!("element {i}"), "non-finite score"));
        }
    }
    Ok(dets)
}

pub fn write_detections(dets: &[Detection], path: impl AsRef<Path>) -> Result<()> {
    write_json(path.as_ref(), &dets)
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| {
        Error::format(path, format!("line {}, column {}", e.line(), e.column()), e.to_string())
    })
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|e| Error::Numerical(format!("JSON serialization failed: {e}")))?;
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

/// Writes `bytes` to `path` via a sibling temporary file and a rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| Error::io(path, e))?;
    tmp.write_all(bytes).map_err(|e| Error::io(path, e))?;
    tmp.flush().map_err(|e| Error::io(path, e))?;
    tmp.persist(path).map_err(|e| Error::io(path, e.error))?;
    Ok(())
}
