//! IDX files (the MNIST / Fashion-MNIST container).
//!
//! Images: magic `0x00000803`, then big-endian `u32` count, rows, cols, then
//! `count·rows·cols` unsigned bytes. Labels: magic `0x00000801`, count, then
//! `count` bytes. Pixels are scaled by `1/255`.

use std::path::Path;

use crate::data::{Dataset, Targets};
use crate::error::{Error, Result};
use crate::numerics::Tensor;

pub const IMAGE_MAGIC: u32 = 0x0000_0803;
pub const LABEL_MAGIC: u32 = 0x0000_0801;

fn read_u32(buf: &[u8], at: usize, what: &str) -> Result<u32> {
    buf.get(at..at + 4)
        .map(|b| u32::from_be_bytes(b.try_into().expect("4 bytes")))
        .ok_or_else(|| Error::Data(format!("short read: {what} header truncated at byte {at}")))
}

fn check_magic(buf: &[u8], expected: u32) -> Result<()> {
    let magic = read_u32(buf, 0, "magic")?;
    if magic != expected {
        return Err(Error::Data(format!(
            "wrong IDX magic 0x{magic:08x}, expected 0x{expected:08x}"
        )));
    }
    Ok(())
}

/// Decoded image file: `N × (rows·cols)` tensor plus the image geometry.
pub fn parse_idx_images(buf: &[u8]) -> Result<(Tensor, usize, usize)> {
    check_magic(buf, IMAGE_MAGIC)?;
    let n = read_u32(buf, 4, "image count")? as usize;
    let rows = read_u32(buf, 8, "row count")? as usize;
    let cols = read_u32(buf, 12, "column count")? as usize;
    let pixels = n
        .checked_mul(rows)
        .and_then(|v| v.checked_mul(cols))
        .ok_or_else(|| Error::Data(format!("dimension overflow: {n} × {rows} × {cols}")))?;
    let payload = &buf[16..];
    if payload.len() < pixels {
        return Err(Error::Data(format!(
            "short read: expected {pixels} pixel bytes, found {}",
            payload.len()
        )));
    }
    let data = payload[..pixels].iter().map(|&b| f64::from(b) / 255.0).collect();
    Ok((Tensor::matrix(n, rows * cols, data)?, rows, cols))
}

pub fn parse_idx_labels(buf: &[u8]) -> Result<Vec<usize>> {
    check_magic(buf, LABEL_MAGIC)?;
    let n = read_u32(buf, 4, "label count")? as usize;
    let payload = &buf[8..];
    if payload.len() < n {
        return Err(Error::Data(format!(
            "short read: expected {n} label bytes, found {}",
            payload.len()
        )));
    }
    Ok(payload[..n].iter().map(|&b| b as usize).collect())
}

fn read_file(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| Error::io(path, e))
}

/// Images flattened to rows of `rows·cols` values in `[0, 1]`.
pub fn load_idx_images(path: impl AsRef<Path>) -> Result<Tensor> {
    Ok(parse_idx_images(&read_file(path.as_ref())?)?.0)
}

pub fn load_idx_labels(path: impl AsRef<Path>) -> Result<Vec<usize>> {
    parse_idx_labels(&read_file(path.as_ref())?)
}

/// Pair an image file with its label file.
pub fn load_idx_dataset(
    name: &str,
    images: impl AsRef<Path>,
    labels: impl AsRef<Path>,
    classes: Option<usize>,
) -> Result<Dataset> {
    let x = load_idx_images(images)?;
    let y = load_idx_labels(labels)?;
    if x.rows() != y.len() {
        return Err(Error::Data(format!(
            "{} images but {} labels",
            x.rows(),
            y.len()
        )));
    }
    let classes = classes.unwrap_or_else(|| y.iter().max().map_or(1, |m| m + 1));
    Dataset::new(name, x, Targets::Classes { labels: y, classes })
}

/// Re-quantize `[0, 1]` pixel rows to bytes and write an image file.
pub fn write_idx_images(path: impl AsRef<Path>, images: &Tensor, rows: usize, cols: usize) -> Result<()> {
    if images.cols() != rows * cols {
        return Err(Error::Shape(format!(
            "rows of {} values cannot be {rows}×{cols} images",
            images.cols()
        )));
    }
    let mut out = Vec::with_capacity(16 + images.len());
    for v in [IMAGE_MAGIC, images.rows() as u32, rows as u32, cols as u32] {
        out.extend_from_slice(&v.to_be_bytes());
    }
    out.extend(images.data().iter().map(|&p| (p * 255.0).round().clamp(0.0, 255.0) as u8));
    let path = path.as_ref();
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn write_idx_labels(path: impl AsRef<Path>, labels: &[usize]) -> Result<()> {
    let mut out = Vec::with_capacity(8 + labels.len());
    out.extend_from_slice(&LABEL_MAGIC.to_be_bytes());
    out.extend_from_slice(&(labels.len() as u32).to_be_bytes());
    for &l in labels {
        out.push(u8::try_from(l).map_err(|_| Error::Data(format!("label {l} does not fit a byte")))?);
    }
    let path = path.as_ref();
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}
