//! Model checkpoint container (little-endian):
//!
//! | offset | size | field                              |
//! |--------|------|------------------------------------|
//! | 0      | 4    | magic `BACK`                       |
//! | 4      | 2    | version (`1`)                      |
//! | 6      | 1    | family: `0` linear, `1` mlp        |
//! | 7      | 1    | reserved (0)                       |
//! | 8      | 4    | depth                              |
//! | 12     | 4    | width                              |
//! | 16     | 4    | input dimension                    |
//! | 20     | 8    | completed epochs                   |
//! | 28     | ..   | parameters, then velocities (f64)  |
//!
//! Tensors are laid out layer by layer, weights (row-major) before biases.

use std::fs;
use std::path::Path;

use byteorder::{ByteOrder, LittleEndian};

use super::{ArchConfig, Family, ModelError, ModelState, Parameters};

pub const CHECKPOINT_MAGIC: [u8; 4] = *b"BACK";
pub const CHECKPOINT_VERSION: u16 = 1;
const HEADER_LEN: usize = 28;

fn format_err(offset: usize, message: impl Into<String>) -> ModelError {
    ModelError::Format { offset: offset as u64, message: message.into() }
}

pub fn encode_checkpoint(state: &ModelState) -> Vec<u8> {
    let mut out = vec![0u8; HEADER_LEN];
    out[..4].copy_from_slice(&CHECKPOINT_MAGIC);
    LittleEndian::write_u16(&mut out[4..6], CHECKPOINT_VERSION);
    out[6] = match state.arch.family {
        Family::Linear => 0,
        Family::Mlp => 1,
    };
    LittleEndian::write_u32(&mut out[8..12], state.arch.depth as u32);
    LittleEndian::write_u32(&mut out[12..16], state.arch.width as u32);
    LittleEndian::write_u32(&mut out[16..20], state.arch.input_dimension as u32);
    LittleEndian::write_u64(&mut out[20..28], state.epoch as u64);
    for v in state.params.flatten().into_iter().chain(state.velocity.flatten()) {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

fn fill(target: &mut Parameters, values: &mut impl Iterator<Item = f64>) {
    for v in target.values_mut() {
        *v = values.next().expect("length checked against the header");
    }
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<ModelState, ModelError> {
    if bytes.len() < HEADER_LEN {
        return Err(format_err(bytes.len(), "file shorter than the checkpoint header"));
    }
    if bytes[..4] != CHECKPOINT_MAGIC {
        return Err(format_err(0, "bad magic, not a checkpoint"));
    }
    let version = LittleEndian::read_u16(&bytes[4..6]);
    if version != CHECKPOINT_VERSION {
        return Err(format_err(4, format!("unsupported checkpoint version {version}")));
    }
    let family = match bytes[6] {
        0 => Family::Linear,
        1 => Family::Mlp,
        other => return Err(format_err(6, format!("unknown model family {other}"))),
    };
    let arch = ArchConfig {
        family,
        depth: LittleEndian::read_u32(&bytes[8..12]) as usize,
        width: LittleEndian::read_u32(&bytes[12..16]) as usize,
        input_dimension: LittleEndian::read_u32(&bytes[16..20]) as usize,
    };
    arch.validate().map_err(|e| format_err(8, e.to_string()))?;
    let epoch = LittleEndian::read_u64(&bytes[20..28]) as usize;
    let count = arch.parameter_count();
    let expected = HEADER_LEN + 2 * count * 8;
    if bytes.len() != expected {
        return Err(format_err(
            bytes.len().min(expected),
            format!("architecture implies {expected} bytes, file has {}", bytes.len()),
        ));
    }
    let mut values = bytes[HEADER_LEN..].chunks_exact(8).map(LittleEndian::read_f64);
    let mut params = Parameters::zeros(&arch);
    let mut velocity = Parameters::zeros(&arch);
    fill(&mut params, &mut values);
    fill(&mut velocity, &mut values);
    Ok(ModelState { arch, params, velocity, epoch })
}

pub fn write_checkpoint(path: &Path, state: &ModelState) -> Result<(), ModelError> {
    Ok(fs::write(path, encode_checkpoint(state))?)
}

pub fn read_checkpoint(path: &Path) -> Result<ModelState, ModelError> {
    decode_checkpoint(&fs::read(path)?)
}
