//! Weight file: `SPDNET1\0`, five u32 config sizes (h1, h2, h3, input
//! channels, window length), u64 init seed, u64 parameter count, the
//! parameters as f64 in declaration order, then a CRC-32 of every preceding
//! byte. All integers and floats little-endian.

use super::config::ModelConfig;
use super::model::SpeedModel;
use super::NetError;
use std::path::Path;

pub const WEIGHTS_MAGIC: &[u8; 8] = b"SPDNET1\0";
const HEADER_LEN: usize = 8 + 5 * 4 + 8 + 8;

pub fn weights_to_bytes(model: &SpeedModel) -> Vec<u8> {
    let c = model.config();
    let mut out = Vec::with_capacity(HEADER_LEN + 8 * model.param_count() + 4);
    out.extend_from_slice(WEIGHTS_MAGIC);
    for v in [c.h1, c.h2, c.h3, c.input_channels, c.window_len] {
        out.extend_from_slice(&(v as u32).to_le_bytes());
    }
    out.extend_from_slice(&c.seed.to_le_bytes());
    out.extend_from_slice(&(model.param_count() as u64).to_le_bytes());
    for p in model.params() {
        out.extend_from_slice(&p.to_le_bytes());
    }
    let crc = crc32fast::hash(&out);
    out.extend_from_slice(&crc.to_le_bytes());
    out
}

pub fn weights_from_bytes(bytes: &[u8]) -> Result<SpeedModel, NetError> {
    if bytes.len() < 4 {
        return Err(NetError::ChecksumMismatch);
    }
    let (body, tail) = bytes.split_at(bytes.len() - 4);
    let stored = u32::from_le_bytes(tail.try_into().unwrap());
    if crc32fast::hash(body) != stored {
        return Err(NetError::ChecksumMismatch);
    }
    if body.len() < HEADER_LEN || &body[..8] != WEIGHTS_MAGIC {
        return Err(NetError::InvalidFormat("missing SPDNET1 header".into()));
    }
    let u32_at = |i: usize| u32::from_le_bytes(body[i..i + 4].try_into().unwrap()) as usize;
    let u64_at = |i: usize| u64::from_le_bytes(body[i..i + 8].try_into().unwrap());
    let config = ModelConfig {
        h1: u32_at(8),
        h2: u32_at(12),
        h3: u32_at(16),
        input_channels: u32_at(20),
        window_len: u32_at(24),
        seed: u64_at(28),
    };
    let count = u64_at(36) as usize;
    config.validate()?;
    if count != config.param_count() || body.len() != HEADER_LEN + 8 * count {
        return Err(NetError::InvalidFormat(format!(
            "parameter count {count} inconsistent with config and file size"
        )));
    }
    let params = body[HEADER_LEN..]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    SpeedModel::from_params(config, params)
}

pub fn save_weights(model: &SpeedModel, path: impl AsRef<Path>) -> Result<(), NetError> {
    std::fs::write(path, weights_to_bytes(model))?;
    Ok(())
}

pub fn load_weights(path: impl AsRef<Path>) -> Result<SpeedModel, NetError> {
    weights_from_bytes(&std::fs::read(path)?)
}

/// Loads weights and checks the layer sizes against `expected`.
pub fn load_weights_expecting(
    path: impl AsRef<Path>,
    expected: &ModelConfig,
) -> Result<SpeedModel, NetError> {
    let model = load_weights(path)?;
    let c = model.config();
    let sizes = |c: &ModelConfig| (c.h1, c.h2, c.h3, c.input_channels, c.window_len);
    if sizes(c) != sizes(expected) {
        let show = |c: &ModelConfig| {
            format!(
                "h1={} h2={} h3={} in={} window={}",
                c.h1, c.h2, c.h3, c.input_channels, c.window_len
            )
        };
        return Err(NetError::ConfigMismatch {
            expected: show(expected),
            found: show(c),
        });
    }
    Ok(model)
}
