//! Versioned binary dataset container.
//!
//! All integers and floats are little-endian. Fixed 32-byte header:
//!
//! | offset | size | field                                             |
//! |--------|------|---------------------------------------------------|
//! | 0      | 4    | magic `BAMP`                                      |
//! | 4      | 2    | version (`1`)                                     |
//! | 6      | 1    | kind: `1` raw u8 images, `2` labelled examples    |
//! | 7      | 1    | split: `0` train, `1` test                        |
//! | 8      | 4    | channels                                          |
//! | 12     | 4    | height                                            |
//! | 16     | 4    | width                                             |
//! | 20     | 8    | example count                                     |
//! | 28     | 4    | kind-specific word (see below)                    |
//!
//! Raw images: the word is the original class count; the body is
//! `count * c*h*w` pixel bytes followed by `count` u16 labels.
//!
//! Labelled examples: the word's low byte is the layout (`0` vector,
//! `1` image, `2` image with Fashion-MNIST augmentation, `3` image with CIFAR
//! augmentation) and bit 8 flags normalization stats. The body is the
//! optional stats (`c` means then `c` stds, f64), then `count * c*h*w` f64
//! features, then `count` class bytes (i8, -1/1) and `count` group bytes
//! (`0` = a, `1` = b). Vector data is stored with `c = h = 1`, `w = d`.

use std::fs;
use std::path::Path;

use byteorder::{ByteOrder, LittleEndian};

use super::{
    AugmentKind, Class, DataError, Dataset, Example, Group, ImageShape, Layout, NormalizationStats, RawDataset, Split,
};

pub const CACHE_MAGIC: [u8; 4] = *b"BAMP";
pub const CACHE_VERSION: u16 = 1;
const HEADER_LEN: usize = 32;
const KIND_RAW: u8 = 1;
const KIND_EXAMPLES: u8 = 2;

struct Header {
    kind: u8,
    split: Split,
    shape: ImageShape,
    count: usize,
    word: u32,
}

fn encode_header(h: &Header) -> Vec<u8> {
    let mut out = vec![0u8; HEADER_LEN];
    out[..4].copy_from_slice(&CACHE_MAGIC);
    LittleEndian::write_u16(&mut out[4..6], CACHE_VERSION);
    out[6] = h.kind;
    out[7] = match h.split {
        Split::Train => 0,
        Split::Test => 1,
    };
    LittleEndian::write_u32(&mut out[8..12], h.shape.channels as u32);
    LittleEndian::write_u32(&mut out[12..16], h.shape.height as u32);
    LittleEndian::write_u32(&mut out[16..20], h.shape.width as u32);
    LittleEndian::write_u64(&mut out[20..28], h.count as u64);
    LittleEndian::write_u32(&mut out[28..32], h.word);
    out
}

fn decode_header(bytes: &[u8], kind: u8) -> Result<Header, DataError> {
    if bytes.len() < HEADER_LEN {
        return Err(DataError::format(bytes.len() as u64, "file shorter than the 32-byte header"));
    }
    if bytes[..4] != CACHE_MAGIC {
        return Err(DataError::format(0, "bad magic, not a dataset cache file"));
    }
    let version = LittleEndian::read_u16(&bytes[4..6]);
    if version != CACHE_VERSION {
        return Err(DataError::format(4, format!("unsupported cache version {version}")));
    }
    if bytes[6] != kind {
        return Err(DataError::format(6, format!("cache kind {} where {kind} was expected", bytes[6])));
    }
    let split = match bytes[7] {
        0 => Split::Train,
        1 => Split::Test,
        other => return Err(DataError::format(7, format!("unknown split tag {other}"))),
    };
    Ok(Header {
        kind,
        split,
        shape: ImageShape {
            channels: LittleEndian::read_u32(&bytes[8..12]) as usize,
            height: LittleEndian::read_u32(&bytes[12..16]) as usize,
            width: LittleEndian::read_u32(&bytes[16..20]) as usize,
        },
        count: LittleEndian::read_u64(&bytes[20..28]) as usize,
        word: LittleEndian::read_u32(&bytes[28..32]),
    })
}

fn expect_len(bytes: &[u8], expected: usize) -> Result<(), DataError> {
    if bytes.len() != expected {
        return Err(DataError::format(
            bytes.len().min(expected) as u64,
            format!("header implies {expected} bytes, file has {}", bytes.len()),
        ));
    }
    Ok(())
}

pub fn encode_raw(raw: &RawDataset) -> Vec<u8> {
    let mut out = encode_header(&Header {
        kind: KIND_RAW,
        split: raw.split,
        shape: raw.shape,
        count: raw.len(),
        word: raw.class_count,
    });
    out.extend_from_slice(&raw.pixels);
    for &l in &raw.labels {
        out.extend_from_slice(&l.to_le_bytes());
    }
    out
}

pub fn decode_raw(bytes: &[u8]) -> Result<RawDataset, DataError> {
    let h = decode_header(bytes, KIND_RAW)?;
    let px = h.count * h.shape.len();
    expect_len(bytes, HEADER_LEN + px + 2 * h.count)?;
    let pixels = bytes[HEADER_LEN..HEADER_LEN + px].to_vec();
    let labels = bytes[HEADER_LEN + px..].chunks_exact(2).map(LittleEndian::read_u16).collect();
    Ok(RawDataset { split: h.split, shape: h.shape, class_count: h.word, pixels, labels })
}

fn layout_tag(layout: &Layout) -> (ImageShape, u32) {
    match layout {
        Layout::Vector { dimension } => (ImageShape { channels: 1, height: 1, width: *dimension }, 0),
        Layout::Image { shape, augment } => {
            let tag = match augment {
                None => 1,
                Some(AugmentKind::FashionMnist) => 2,
                Some(AugmentKind::Cifar) => 3,
            };
            (*shape, tag)
        }
    }
}

pub fn encode_dataset(ds: &Dataset) -> Vec<u8> {
    let (shape, tag) = layout_tag(&ds.layout);
    let word = tag | if ds.normalization.is_some() { 1 << 8 } else { 0 };
    let mut out = encode_header(&Header { kind: KIND_EXAMPLES, split: ds.split, shape, count: ds.len(), word });
    let put = |v: f64, out: &mut Vec<u8>| out.extend_from_slice(&v.to_le_bytes());
    if let Some(stats) = &ds.normalization {
        for &m in &stats.mean {
            put(m, &mut out);
        }
        for &s in &stats.std {
            put(s, &mut out);
        }
    }
    for e in &ds.examples {
        for &v in &e.features {
            put(v, &mut out);
        }
    }
    out.extend(ds.examples.iter().map(|e| i8::from(e.class) as u8));
    out.extend(ds.examples.iter().map(|e| e.group.index() as u8));
    out
}

pub fn decode_dataset(bytes: &[u8]) -> Result<Dataset, DataError> {
    let h = decode_header(bytes, KIND_EXAMPLES)?;
    let layout = match h.word & 0xff {
        0 => Layout::Vector { dimension: h.shape.width },
        1 => Layout::Image { shape: h.shape, augment: None },
        2 => Layout::Image { shape: h.shape, augment: Some(AugmentKind::FashionMnist) },
        3 => Layout::Image { shape: h.shape, augment: Some(AugmentKind::Cifar) },
        other => return Err(DataError::format(28, format!("unknown layout tag {other}"))),
    };
    let has_norm = h.word & (1 << 8) != 0;
    let c = h.shape.channels;
    let dim = h.shape.len();
    let norm_len = if has_norm { 2 * c * 8 } else { 0 };
    expect_len(bytes, HEADER_LEN + norm_len + h.count * dim * 8 + 2 * h.count)?;
    let mut floats =
        bytes[HEADER_LEN..HEADER_LEN + norm_len + h.count * dim * 8].chunks_exact(8).map(LittleEndian::read_f64);
    let normalization = has_norm.then(|| {
        let mean = floats.by_ref().take(c).collect();
        let std = floats.by_ref().take(c).collect();
        NormalizationStats { mean, std }
    });
    let labels_at = HEADER_LEN + norm_len + h.count * dim * 8;
    let mut examples = Vec::with_capacity(h.count);
    for i in 0..h.count {
        let features: Vec<f64> = floats.by_ref().take(dim).collect();
        let class_off = labels_at + i;
        let class = Class::try_from(bytes[class_off] as i8).map_err(|m| DataError::format(class_off as u64, m))?;
        let group_off = labels_at + h.count + i;
        let group = match bytes[group_off] {
            0 => Group::A,
            1 => Group::B,
            other => return Err(DataError::format(group_off as u64, format!("group byte {other}"))),
        };
        examples.push(Example { features, class, group });
    }
    Ok(Dataset { split: h.split, layout, examples, normalization })
}

pub fn write_raw(path: &Path, raw: &RawDataset) -> Result<(), DataError> {
    Ok(fs::write(path, encode_raw(raw))?)
}

pub fn read_raw(path: &Path) -> Result<RawDataset, DataError> {
    decode_raw(&fs::read(path)?)
}

pub fn write_dataset(path: &Path, ds: &Dataset) -> Result<(), DataError> {
    Ok(fs::write(path, encode_dataset(ds))?)
}

pub fn read_dataset(path: &Path) -> Result<Dataset, DataError> {
    decode_dataset(&fs::read(path)?)
}
