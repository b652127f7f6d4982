//! Plain-text sensor logs.
//!
//! Each drive is up to three comma-separated files sharing a stem:
//!
//! | file              | columns                     | units                      |
//! |-------------------|-----------------------------|----------------------------|
//! | `<id>.imu.csv`    | `t,fx,fy,fz,wx,wy,wz`       | s, m/s², rad/s             |
//! | `<id>.fix.csv`    | `t,px,py`                   | s, m (East, North)         |
//! | `<id>.truth.csv`  | `t,px,py,psi,speed`         | s, m, rad, m/s             |
//!
//! The first line of every file is a header naming columns with units.
//! Floats are written in shortest round-trip form.

use crate::types::{align_streams, AlignError, Drive, GnssFix, ImuSample, Pose2D, TruthSample};
use nalgebra::Vector3;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use thiserror::Error;

pub const IMU_HEADER: &str = "t[s],fx[m/s^2],fy[m/s^2],fz[m/s^2],wx[rad/s],wy[rad/s],wz[rad/s]";
pub const FIX_HEADER: &str = "t[s],px[m],py[m]";
pub const TRUTH_HEADER: &str = "t[s],px[m],py[m],psi[rad],speed[m/s]";

pub const IMU_SUFFIX: &str = ".imu.csv";
pub const FIX_SUFFIX: &str = ".fix.csv";
pub const TRUTH_SUFFIX: &str = ".truth.csv";

#[derive(Debug, Error)]
pub enum LogError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {msg}")]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },
    #[error("{path}: not a drive log (expected a name ending in {IMU_SUFFIX})")]
    BadName { path: PathBuf },
    #[error(transparent)]
    Align(#[from] AlignError),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> LogError + '_ {
    move |source| LogError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn write_table(
    path: &Path,
    header: &str,
    rows: impl Iterator<Item = Vec<f64>>,
) -> Result<(), LogError> {
    let mut out = String::with_capacity(1 << 16);
    out.push_str(header);
    out.push('\n');
    for row in rows {
        for (i, v) in row.iter().enumerate() {
            if i > 0 {
                out.push(',');
            }
            write!(out, "{v}").expect("write to String");
        }
        out.push('\n');
    }
    fs::write(path, out).map_err(io_err(path))
}

fn read_table(path: &Path, columns: usize) -> Result<Vec<Vec<f64>>, LogError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    let parse_err = |line: usize, msg: String| LogError::Parse {
        path: path.to_path_buf(),
        line,
        msg,
    };
    let mut rows = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') || (i == 0 && line.starts_with('t')) {
            continue;
        }
        let row = line
            .split(',')
            .map(|f| {
                f.trim()
                    .parse::<f64>()
                    .map_err(|e| parse_err(i + 1, format!("{f:?}: {e}")))
            })
            .collect::<Result<Vec<f64>, _>>()?;
        if row.len() != columns {
            return Err(parse_err(
                i + 1,
                format!("expected {columns} fields, got {}", row.len()),
            ));
        }
        rows.push(row);
    }
    Ok(rows)
}

pub fn write_imu(path: &Path, imu: &[ImuSample]) -> Result<(), LogError> {
    write_table(
        path,
        IMU_HEADER,
        imu.iter().map(|m| {
            let (f, w) = (m.f_body, m.omega_body);
            vec![m.t, f.x, f.y, f.z, w.x, w.y, w.z]
        }),
    )
}

pub fn read_imu(path: &Path) -> Result<Vec<ImuSample>, LogError> {
    Ok(read_table(path, 7)?
        .into_iter()
        .map(|r| {
            ImuSample::new(
                r[0],
                Vector3::new(r[1], r[2], r[3]),
                Vector3::new(r[4], r[5], r[6]),
            )
        })
        .collect())
}

pub fn write_fixes(path: &Path, fixes: &[GnssFix]) -> Result<(), LogError> {
    write_table(
        path,
        FIX_HEADER,
        fixes.iter().map(|f| vec![f.t, f.p_nav.x, f.p_nav.y]),
    )
}

pub fn read_fixes(path: &Path) -> Result<Vec<GnssFix>, LogError> {
    Ok(read_table(path, 3)?
        .into_iter()
        .map(|r| GnssFix::new(r[0], r[1], r[2]))
        .collect())
}

pub fn write_truth(path: &Path, truth: &[TruthSample]) -> Result<(), LogError> {
    write_table(
        path,
        TRUTH_HEADER,
        truth
            .iter()
            .map(|s| vec![s.t, s.pose.p_nav.x, s.pose.p_nav.y, s.pose.psi, s.speed]),
    )
}

pub fn read_truth(path: &Path) -> Result<Vec<TruthSample>, LogError> {
    Ok(read_table(path, 5)?
        .into_iter()
        .map(|r| TruthSample {
            t: r[0],
            pose: Pose2D::new(r[1], r[2], r[3]),
            speed: r[4],
        })
        .collect())
}

/// Paths of the files making up drive `id` under `dir`.
pub fn drive_paths(dir: &Path, id: &str) -> (PathBuf, PathBuf, PathBuf) {
    (
        dir.join(format!("{id}{IMU_SUFFIX}")),
        dir.join(format!("{id}{FIX_SUFFIX}")),
        dir.join(format!("{id}{TRUTH_SUFFIX}")),
    )
}

/// Writes the IMU, fix and (when present) truth files of `drive`.
pub fn write_drive(dir: &Path, drive: &Drive) -> Result<Vec<PathBuf>, LogError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let (imu, fix, truth) = drive_paths(dir, &drive.id);
    write_imu(&imu, &drive.imu)?;
    write_fixes(&fix, &drive.fixes)?;
    let mut written = vec![imu, fix];
    if let Some(t) = &drive.truth {
        write_truth(&truth, t)?;
        written.push(truth);
    }
    Ok(written)
}

/// Reads a drive from its IMU log path; the fix log must sit next to it and
/// a truth log is picked up if present.
pub fn read_drive(imu_path: &Path) -> Result<Drive, LogError> {
    let name = imu_path
        .file_name()
        .and_then(|n| n.to_str())
        .and_then(|n| n.strip_suffix(IMU_SUFFIX))
        .ok_or_else(|| LogError::BadName {
            path: imu_path.to_path_buf(),
        })?;
    let dir = imu_path.parent().unwrap_or(Path::new("."));
    let (_, fix_path, truth_path) = drive_paths(dir, name);
    let imu = read_imu(imu_path)?;
    let fixes = read_fixes(&fix_path)?;
    let mut drive = align_streams(imu, fixes)?.with_id(name);
    if truth_path.exists() {
        drive = drive.with_truth(read_truth(&truth_path)?);
    }
    Ok(drive)
}

/// Every `*.imu.csv` under `dir`, sorted by name.
pub fn find_drives(dir: &Path) -> Result<Vec<PathBuf>, LogError> {
    let mut out: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(io_err(dir))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.to_str().is_some_and(|s| s.ends_with(IMU_SUFFIX)))
        .collect();
    out.sort();
    Ok(out)
}
