//! File formats.
//!
//! CDMX: the 4-byte magic `CDMX`, then three little-endian `u64` values
//! (rows, cols, element size in bytes), then the elements in row-major order.
//! Element size 8 means IEEE-754 `f64`; element size 4 means signed `i32`
//! (used for label volumes). All values are little-endian.
//!
//! 3-D volumes (nz, ny, nx) are stored as `(nz·ny) × nx` matrices, so the
//! element order is x fastest, then y, then z.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use ndarray::{Array2, ArrayView2};

use crate::error::{Error, Result};

pub const CDMX_MAGIC: &[u8; 4] = b"CDMX";

fn write_header<W: Write>(w: &mut W, rows: usize, cols: usize, elem: u64) -> Result<()> {
    w.write_all(CDMX_MAGIC)?;
    w.write_all(&(rows as u64).to_le_bytes())?;
    w.write_all(&(cols as u64).to_le_bytes())?;
    w.write_all(&elem.to_le_bytes())?;
    Ok(())
}

fn read_u64<R: Read>(r: &mut R) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

fn read_header<R: Read>(r: &mut R) -> Result<(usize, usize, u64)> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)
        .map_err(|_| Error::Format("file too short for CDMX header".into()))?;
    if &magic != CDMX_MAGIC {
        return Err(Error::Format(format!("bad magic {magic:?}, expected CDMX")));
    }
    let rows = read_u64(r)? as usize;
    let cols = read_u64(r)? as usize;
    let elem = read_u64(r)?;
    Ok((rows, cols, elem))
}

pub fn encode_matrix<W: Write>(w: &mut W, m: ArrayView2<f64>) -> Result<()> {
    write_header(w, m.nrows(), m.ncols(), 8)?;
    for row in m.rows() {
        for v in row {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    Ok(())
}

pub fn decode_matrix<R: Read>(r: &mut R) -> Result<Array2<f64>> {
    let (rows, cols, elem) = read_header(r)?;
    if elem != 8 {
        return Err(Error::Format(format!(
            "expected f64 elements (size 8), found size {elem}"
        )));
    }
    let count = rows
        .checked_mul(cols)
        .ok_or_else(|| Error::Format("matrix size overflows".into()))?;
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    if bytes.len() != count * 8 {
        return Err(Error::Format(format!(
            "expected {} payload bytes, found {}",
            count * 8,
            bytes.len()
        )));
    }
    let data: Vec<f64> = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
        .collect();
    Array2::from_shape_vec((rows, cols), data).map_err(|e| Error::Format(e.to_string()))
}

pub fn write_matrix(path: impl AsRef<Path>, m: ArrayView2<f64>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    encode_matrix(&mut w, m)?;
    w.flush()?;
    Ok(())
}

pub fn read_matrix(path: impl AsRef<Path>) -> Result<Array2<f64>> {
    decode_matrix(&mut BufReader::new(File::open(path)?))
}

/// Integer labels stored as a `rows × cols` CDMX matrix with 4-byte elements.
pub fn encode_labels<W: Write>(w: &mut W, rows: usize, cols: usize, labels: &[i32]) -> Result<()> {
    if labels.len() != rows * cols {
        return Err(Error::Format(format!(
            "{} labels do not fill a {rows}x{cols} matrix",
            labels.len()
        )));
    }
    write_header(w, rows, cols, 4)?;
    for v in labels {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

pub fn decode_labels<R: Read>(r: &mut R) -> Result<(usize, usize, Vec<i32>)> {
    let (rows, cols, elem) = read_header(r)?;
    if elem != 4 {
        return Err(Error::Format(format!(
            "expected i32 elements (size 4), found size {elem}"
        )));
    }
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    if bytes.len() != rows * cols * 4 {
        return Err(Error::Format(format!(
            "expected {} payload bytes, found {}",
            rows * cols * 4,
            bytes.len()
        )));
    }
    let labels = bytes
        .chunks_exact(4)
        .map(|c| i32::from_le_bytes(c.try_into().expect("chunk of 4")))
        .collect();
    Ok((rows, cols, labels))
}

pub fn write_labels(
    path: impl AsRef<Path>,
    rows: usize,
    cols: usize,
    labels: &[i32],
) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    encode_labels(&mut w, rows, cols, labels)?;
    w.flush()?;
    Ok(())
}

pub fn read_labels(path: impl AsRef<Path>) -> Result<(usize, usize, Vec<i32>)> {
    decode_labels(&mut BufReader::new(File::open(path)?))
}

/// Comma-separated values, one matrix row per line, no header.
pub fn write_csv_matrix(path: impl AsRef<Path>, m: ArrayView2<f64>) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_path(path)?;
    for row in m.rows() {
        w.write_record(row.iter().map(|v| v.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_csv_matrix(path: impl AsRef<Path>) -> Result<Array2<f64>> {
    let mut r = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_path(path)?;
    let mut data = Vec::new();
    let mut cols = None;
    let mut rows = 0;
    for rec in r.records() {
        let rec = rec?;
        match cols {
            None => cols = Some(rec.len()),
            Some(c) if c != rec.len() => {
                return Err(Error::Format(format!(
                    "row {} has {} fields, expected {c}",
                    rows + 1,
                    rec.len()
                )))
            }
            _ => {}
        }
        for field in rec.iter() {
            data.push(
                field
                    .parse::<f64>()
                    .map_err(|e| Error::Format(format!("row {}: {field:?}: {e}", rows + 1)))?,
            );
        }
        rows += 1;
    }
    Array2::from_shape_vec((rows, cols.unwrap_or(0)), data)
        .map_err(|e| Error::Format(e.to_string()))
}

/// Reads a matrix choosing the format from the extension (`.csv` or CDMX).
pub fn read_any_matrix(path: impl AsRef<Path>) -> Result<Array2<f64>> {
    let p = path.as_ref();
    if p.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv")) {
        read_csv_matrix(p)
    } else {
        read_matrix(p)
    }
}

/// Binary (P5) grayscale image, 8-bit.
pub fn write_pgm(path: impl AsRef<Path>, width: usize, height: usize, pixels: &[u8]) -> Result<()> {
    if pixels.len() != width * height {
        return Err(Error::Format(format!(
            "{} pixels do not fill a {width}x{height} image",
            pixels.len()
        )));
    }
    let mut w = BufWriter::new(File::create(path)?);
    write!(w, "P5\n{width} {height}\n255\n")?;
    w.write_all(pixels)?;
    w.flush()?;
    Ok(())
}
