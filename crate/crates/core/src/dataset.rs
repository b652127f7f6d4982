//! Binary dataset of labeled windows.
//!
//! Layout, all integers and floats little-endian:
//!
//! ```text
//! magic        8 bytes   "SPDSET1\0"
//! header_len   u32       length of the header text
//! header       UTF-8     key=value lines: counts, window shape, units
//! records      repeated  one per window, see below
//! ```
//!
//! Record: `split u8` (0 train, 1 validation), `lane u32`, `id_len u16`,
//! `drive_id` (UTF-8), `index u64`, `valid u8`, then `steps × channels`
//! f64 inputs step-major and `steps` f64 labels. Inputs are gravity-removed
//! specific force in m/s² and angular rate in rad/s; labels are m/s.
//!
//! Records are stored lane by lane in chronological order, so the split
//! is reconstructed exactly.

use crate::labels::{DatasetSplit, LabeledWindow, CHANNELS, WINDOW_LEN};
use std::fs;
use std::path::Path;
use std::sync::Arc;
use thiserror::Error;

pub const DATASET_MAGIC: &[u8; 8] = b"SPDSET1\0";

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("dataset I/O: {0}")]
    Io(#[from] std::io::Error),
    #[error("dataset malformed: {0}")]
    Format(String),
}

fn fmt_err(msg: impl Into<String>) -> DatasetError {
    DatasetError::Format(msg.into())
}

pub fn to_bytes(split: &DatasetSplit) -> Vec<u8> {
    let header = format!(
        "train_lanes={}\nval_lanes={}\ntrain_windows={}\nval_windows={}\nratio={}\nsteps={WINDOW_LEN}\nchannels={CHANNELS}\n\
         channel_units=fx:m/s^2,fy:m/s^2,fz:m/s^2,wx:rad/s,wy:rad/s,wz:rad/s\nlabel_units=m/s\n",
        split.train.len(),
        split.val.len(),
        split.train_windows(),
        split.val_windows(),
        split.ratio,
    );
    let mut out = Vec::new();
    out.extend_from_slice(DATASET_MAGIC);
    out.extend_from_slice(&(header.len() as u32).to_le_bytes());
    out.extend_from_slice(header.as_bytes());
    for (tag, lanes) in [(0u8, &split.train), (1u8, &split.val)] {
        for (lane, windows) in lanes.iter().enumerate() {
            for w in windows {
                out.push(tag);
                out.extend_from_slice(&(lane as u32).to_le_bytes());
                out.extend_from_slice(&(w.drive_id.len() as u16).to_le_bytes());
                out.extend_from_slice(w.drive_id.as_bytes());
                out.extend_from_slice(&(w.index as u64).to_le_bytes());
                out.push(w.valid as u8);
                for v in w.x.iter().chain(&w.y) {
                    out.extend_from_slice(&v.to_le_bytes());
                }
            }
        }
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], DatasetError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| fmt_err(format!("truncated at byte {}", self.pos)))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn array<const N: usize>(&mut self) -> Result<[u8; N], DatasetError> {
        Ok(self.take(N)?.try_into().expect("length checked"))
    }

    fn done(&self) -> bool {
        self.pos == self.bytes.len()
    }
}

fn header_value(header: &str, key: &str) -> Result<String, DatasetError> {
    header
        .lines()
        .find_map(|l| l.strip_prefix(key).and_then(|r| r.strip_prefix('=')))
        .map(str::to_string)
        .ok_or_else(|| fmt_err(format!("header lacks {key}")))
}

fn header_usize(header: &str, key: &str) -> Result<usize, DatasetError> {
    header_value(header, key)?
        .parse()
        .map_err(|_| fmt_err(format!("header {key} is not a count")))
}

pub fn from_bytes(bytes: &[u8]) -> Result<DatasetSplit, DatasetError> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(8).ok() != Some(&DATASET_MAGIC[..]) {
        return Err(fmt_err("bad magic"));
    }
    let header_len = u32::from_le_bytes(r.array()?) as usize;
    let header =
        std::str::from_utf8(r.take(header_len)?).map_err(|_| fmt_err("header is not UTF-8"))?;
    let steps = header_usize(header, "steps")?;
    let channels = header_usize(header, "channels")?;
    if steps != WINDOW_LEN || channels != CHANNELS {
        return Err(fmt_err(format!(
            "window shape {steps}×{channels} unsupported"
        )));
    }
    let ratio: f64 = header_value(header, "ratio")?
        .parse()
        .map_err(|_| fmt_err("header ratio is not a number"))?;
    let mut lanes = [
        vec![Vec::new(); header_usize(header, "train_lanes")?],
        vec![Vec::new(); header_usize(header, "val_lanes")?],
    ];
    while !r.done() {
        let tag = r.array::<1>()?[0] as usize;
        let lane = u32::from_le_bytes(r.array()?) as usize;
        let id_len = u16::from_le_bytes(r.array()?) as usize;
        let id =
            std::str::from_utf8(r.take(id_len)?).map_err(|_| fmt_err("drive id is not UTF-8"))?;
        let index = u64::from_le_bytes(r.array()?) as usize;
        let valid = r.array::<1>()?[0] != 0;
        let mut read_f64s = |n: usize| -> Result<Vec<f64>, DatasetError> {
            (0..n).map(|_| Ok(f64::from_le_bytes(r.array()?))).collect()
        };
        let x = read_f64s(steps * channels)?;
        let y = read_f64s(steps)?;
        let side = lanes
            .get_mut(tag)
            .ok_or_else(|| fmt_err(format!("bad split tag {tag}")))?;
        let dest = side
            .get_mut(lane)
            .ok_or_else(|| fmt_err(format!("lane {lane} out of range")))?;
        dest.push(LabeledWindow {
            x,
            y,
            valid,
            drive_id: Arc::from(id),
            index,
        });
    }
    let [train, val] = lanes;
    let split = DatasetSplit { train, val, ratio };
    if split.train_windows() != header_usize(header, "train_windows")?
        || split.val_windows() != header_usize(header, "val_windows")?
    {
        return Err(fmt_err("record count disagrees with header"));
    }
    Ok(split)
}

pub fn save(split: &DatasetSplit, path: impl AsRef<Path>) -> Result<(), DatasetError> {
    Ok(fs::write(path, to_bytes(split))?)
}

pub fn load(path: impl AsRef<Path>) -> Result<DatasetSplit, DatasetError> {
    from_bytes(&fs::read(path)?)
}
