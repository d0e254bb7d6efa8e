//! Readers for the IDX (MNIST / Fashion-MNIST) and CIFAR binary formats.
//!
//! Readers load the whole file and validate every size against the header
//! before building a dataset, so a bad file never yields a partial result.

use std::fs;
use std::path::Path;

use byteorder::{BigEndian, ByteOrder};
use serde::{Deserialize, Serialize};

use super::{DataError, ImageShape, RawDataset, Split};

pub const IDX_LABELS_MAGIC: u32 = 0x0000_0801;
pub const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
const CIFAR_PIXELS: usize = 3 * 32 * 32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ImageFormat {
    Idx,
    Cifar10,
    Cifar100,
}

fn read_u32_at(bytes: &[u8], offset: usize, what: &str) -> Result<u32, DataError> {
    bytes
        .get(offset..offset + 4)
        .map(BigEndian::read_u32)
        .ok_or_else(|| DataError::format(offset as u64, format!("file ends inside the {what} field")))
}

/// Parses an IDX image file body: `(count, rows, cols, pixels)`.
pub fn parse_idx_images(bytes: &[u8]) -> Result<(usize, usize, usize, Vec<u8>), DataError> {
    let magic = read_u32_at(bytes, 0, "magic")?;
    if magic != IDX_IMAGES_MAGIC {
        return Err(DataError::format(
            0,
            format!("expected image magic 0x{IDX_IMAGES_MAGIC:08x}, found 0x{magic:08x}"),
        ));
    }
    let count = read_u32_at(bytes, 4, "item count")? as usize;
    let rows = read_u32_at(bytes, 8, "row count")? as usize;
    let cols = read_u32_at(bytes, 12, "column count")? as usize;
    let expected = count * rows * cols;
    let body = &bytes[16..];
    if body.len() != expected {
        let offset = 16 + body.len().min(expected);
        return Err(DataError::format(
            offset as u64,
            format!(
                "header declares {count} images of {rows}x{cols} ({expected} bytes), body has {} bytes",
                body.len()
            ),
        ));
    }
    Ok((count, rows, cols, body.to_vec()))
}

pub fn parse_idx_labels(bytes: &[u8]) -> Result<Vec<u16>, DataError> {
    let magic = read_u32_at(bytes, 0, "magic")?;
    if magic != IDX_LABELS_MAGIC {
        return Err(DataError::format(
            0,
            format!("expected label magic 0x{IDX_LABELS_MAGIC:08x}, found 0x{magic:08x}"),
        ));
    }
    let count = read_u32_at(bytes, 4, "item count")? as usize;
    let body = &bytes[8..];
    if body.len() != count {
        let offset = 8 + body.len().min(count);
        return Err(DataError::format(
            offset as u64,
            format!("header declares {count} labels, body has {} bytes", body.len()),
        ));
    }
    Ok(body.iter().map(|&b| u16::from(b)).collect())
}

pub fn read_idx_images(path: &Path) -> Result<(usize, usize, usize, Vec<u8>), DataError> {
    parse_idx_images(&fs::read(path)?)
}

pub fn read_idx_labels(path: &Path) -> Result<Vec<u16>, DataError> {
    parse_idx_labels(&fs::read(path)?)
}

/// Pairs an IDX image file with its label file. The class count is taken
/// as the largest label plus one.
pub fn ingest_idx(images: &Path, labels: &Path, split: Split) -> Result<RawDataset, DataError> {
    let (count, rows, cols, pixels) = read_idx_images(images)?;
    let labels = read_idx_labels(labels)?;
    if labels.len() != count {
        return Err(DataError::Shape(format!("{count} images but {} labels", labels.len())));
    }
    let class_count = labels.iter().max().map_or(0, |&m| u32::from(m) + 1);
    Ok(RawDataset { split, shape: ImageShape { channels: 1, height: rows, width: cols }, class_count, pixels, labels })
}

/// Decodes concatenated CIFAR records. CIFAR-10 records are one label byte
/// plus 3072 pixels; CIFAR-100 records carry (coarse, fine) label bytes and
/// the fine label is kept. `base_offset` is only used in error messages.
pub fn parse_cifar(bytes: &[u8], format: ImageFormat, base_offset: u64) -> Result<(Vec<u8>, Vec<u16>), DataError> {
    let (label_bytes, class_count) = match format {
        ImageFormat::Cifar10 => (1, 10u16),
        ImageFormat::Cifar100 => (2, 100u16),
        ImageFormat::Idx => return Err(DataError::config("format", "idx is not a CIFAR format")),
    };
    let record = label_bytes + CIFAR_PIXELS;
    if !bytes.len().is_multiple_of(record) {
        let whole = bytes.len() / record * record;
        return Err(DataError::format(
            base_offset + whole as u64,
            format!("trailing {} bytes do not form a {record}-byte record", bytes.len() - whole),
        ));
    }
    let n = bytes.len() / record;
    let mut pixels = Vec::with_capacity(n * CIFAR_PIXELS);
    let mut labels = Vec::with_capacity(n);
    for (i, rec) in bytes.chunks_exact(record).enumerate() {
        let label = u16::from(rec[label_bytes - 1]);
        if label >= class_count {
            return Err(DataError::format(
                base_offset + (i * record + label_bytes - 1) as u64,
                format!("label {label} out of range for {class_count} classes"),
            ));
        }
        labels.push(label);
        pixels.extend_from_slice(&rec[label_bytes..]);
    }
    Ok((pixels, labels))
}

/// Reads and concatenates CIFAR batch files (e.g. the five training batches).
pub fn ingest_cifar<P: AsRef<Path>>(files: &[P], format: ImageFormat, split: Split) -> Result<RawDataset, DataError> {
    let mut pixels = Vec::new();
    let mut labels = Vec::new();
    for f in files {
        let bytes = fs::read(f)?;
        let (p, l) = parse_cifar(&bytes, format, 0)?;
        pixels.extend(p);
        labels.extend(l);
    }
    let class_count = if format == ImageFormat::Cifar10 { 10 } else { 100 };
    Ok(RawDataset { split, shape: ImageShape { channels: 3, height: 32, width: 32 }, class_count, pixels, labels })
}

/// Single entry point: for IDX, `paths` is `[images, labels]`; for CIFAR,
/// one or more batch files.
pub fn ingest<P: AsRef<Path>>(paths: &[P], format: ImageFormat, split: Split) -> Result<RawDataset, DataError> {
    match format {
        ImageFormat::Idx => match paths {
            [images, labels] => ingest_idx(images.as_ref(), labels.as_ref(), split),
            _ => Err(DataError::config("paths", "idx ingestion needs exactly [images, labels]")),
        },
        _ => {
            if paths.is_empty() {
                return Err(DataError::config("paths", "no CIFAR batch files given"));
            }
            ingest_cifar(paths, format, split)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn idx_images(count: u32, rows: u32, cols: u32, body: &[u8]) -> Vec<u8> {
        let mut out = Vec::new();
        for v in [IDX_IMAGES_MAGIC, count, rows, cols] {
            out.extend_from_slice(&v.to_be_bytes());
        }
        out.extend_from_slice(body);
        out
    }

    #[test]
    fn idx_header_counts() {
        let bytes = idx_images(3, 2, 2, &[1; 12]);
        let (n, r, c, px) = parse_idx_images(&bytes).unwrap();
        assert_eq!((n, r, c, px.len()), (3, 2, 2, 12));
    }

    #[test]
    fn idx_truncated_names_offset() {
        let bytes = idx_images(3, 2, 2, &[1; 10]);
        match parse_idx_images(&bytes) {
            Err(DataError::Format { offset, .. }) => assert_eq!(offset, 26),
            other => panic!("expected format error, got {other:?}"),
        }
        match parse_idx_images(&bytes[..6]) {
            Err(DataError::Format { offset, .. }) => assert_eq!(offset, 4),
            other => panic!("expected format error, got {other:?}"),
        }
    }

    #[test]
    fn idx_wrong_magic() {
        let mut bytes = idx_images(1, 1, 1, &[0]);
        bytes[3] = 0x01;
        assert!(matches!(parse_idx_images(&bytes), Err(DataError::Format { offset: 0, .. })));
    }

    #[test]
    fn cifar100_uses_fine_label() {
        let mut rec = vec![3u8, 42];
        rec.extend(std::iter::repeat_n(7u8, CIFAR_PIXELS));
        let (px, labels) = parse_cifar(&rec, ImageFormat::Cifar100, 0).unwrap();
        assert_eq!(labels, vec![42]);
        assert_eq!(px.len(), CIFAR_PIXELS);
        assert!(parse_cifar(&rec, ImageFormat::Cifar10, 0).is_err());
    }

    #[test]
    fn cifar_label_range_checked() {
        let mut rec = vec![10u8];
        rec.extend(std::iter::repeat_n(0u8, CIFAR_PIXELS));
        assert!(matches!(parse_cifar(&rec, ImageFormat::Cifar10, 0), Err(DataError::Format { offset: 0, .. })));
    }
}
