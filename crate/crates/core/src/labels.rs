//! Turns a drive into supervised training material.
//!
//! Fix positions are differentiated per axis and normed into a 50 Hz speed
//! signal, upsampled onto the IMU grid, and paired with gravity-free IMU
//! windows of [`WINDOW_LEN`] samples. Windows never overlap: the stream is
//! consumed statefully, so every sample is seen exactly once per epoch.

use crate::types::{
    AttitudeState, Drive, GnssFix, ImuSample, SpeedSeries, FIX_DT, GRAVITY, IMU_DT,
};
use nalgebra::Vector3;
use std::sync::Arc;
use thiserror::Error;

pub const WINDOW_LEN: usize = 20;
pub const CHANNELS: usize = 6;
pub const DEFAULT_TRAIN_RATIO: f64 = 0.85;

#[derive(Debug, Error, PartialEq)]
pub enum LabelError {
    #[error("need at least 3 fixes, got {0}")]
    TooFewFixes(usize),
    #[error("fix spacing {dt:.4} s at index {index} is not within 10% of 0.02 s")]
    NonUniformRate { index: usize, dt: f64 },
    #[error("speed series is empty")]
    EmptySeries,
    #[error("length mismatch: {what} has {got}, expected {expected}")]
    LengthMismatch {
        what: &'static str,
        got: usize,
        expected: usize,
    },
    #[error("IMU stream is empty")]
    EmptyImu,
    #[error("no lanes to batch")]
    NoLanes,
    #[error("need at least 2 drives to split, got {0}")]
    TooFewDrives(usize),
    #[error("drive {0} has no ground truth attitude source")]
    MissingTruth(String),
}

/// Twenty IMU samples and their speed labels.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledWindow {
    /// Step-major: `x[step * CHANNELS + channel]`, channels are
    /// `(fx, fy, fz, wx, wy, wz)` with gravity removed from `f`.
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    /// False for zero padding.
    pub valid: bool,
    pub drive_id: Arc<str>,
    pub index: usize,
}

impl LabeledWindow {
    pub fn padding(index: usize) -> Self {
        Self {
            x: vec![0.0; WINDOW_LEN * CHANNELS],
            y: vec![0.0; WINDOW_LEN],
            valid: false,
            drive_id: Arc::from(""),
            index,
        }
    }

    pub fn input(&self, step: usize) -> &[f64] {
        &self.x[step * CHANNELS..(step + 1) * CHANNELS]
    }

    pub fn steps(&self) -> usize {
        self.y.len()
    }
}

/// One window per parallel lane, all at the same position in time.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowBatch {
    pub windows: Vec<LabeledWindow>,
    pub step: usize,
}

impl WindowBatch {
    pub fn lanes(&self) -> usize {
        self.windows.len()
    }

    pub fn valid(&self) -> Vec<bool> {
        self.windows.iter().map(|w| w.valid).collect()
    }
}

/// Train and validation lanes; each lane is a chronological window list.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetSplit {
    pub train: Vec<Vec<LabeledWindow>>,
    pub val: Vec<Vec<LabeledWindow>>,
    pub ratio: f64,
}

impl DatasetSplit {
    pub fn train_windows(&self) -> usize {
        self.train.iter().map(Vec::len).sum()
    }

    pub fn val_windows(&self) -> usize {
        self.val.iter().map(Vec::len).sum()
    }

    pub fn train_fraction(&self) -> f64 {
        let t = self.train_windows() as f64;
        t / (t + self.val_windows() as f64)
    }
}

/// Speed from fix positions: central differences inside, one-sided at the
/// ends, Euclidean norm of the velocity.
pub fn positions_to_speed(fixes: &[GnssFix]) -> Result<SpeedSeries, LabelError> {
    let n = fixes.len();
    if n < 3 {
        return Err(LabelError::TooFewFixes(n));
    }
    for (i, w) in fixes.windows(2).enumerate() {
        let dt = w[1].t - w[0].t;
        if !(0.9 * FIX_DT..=1.1 * FIX_DT).contains(&dt) {
            return Err(LabelError::NonUniformRate { index: i + 1, dt });
        }
    }
    let speed = |a: &GnssFix, b: &GnssFix| ((b.p_nav - a.p_nav) / (b.t - a.t)).norm();
    let mut s = Vec::with_capacity(n);
    s.push(speed(&fixes[0], &fixes[1]));
    for i in 1..n - 1 {
        s.push(speed(&fixes[i - 1], &fixes[i + 1]));
    }
    s.push(speed(&fixes[n - 2], &fixes[n - 1]));
    Ok(SpeedSeries::new(fixes.iter().map(|f| f.t).collect(), s))
}

/// Linear interpolation of a 50 Hz series onto the 100 Hz grid `t₀ + 0.01k`.
///
/// `N` inputs give `2N − 1` outputs; even outputs are the inputs verbatim.
pub fn upsample_speed(s50: &SpeedSeries) -> Result<SpeedSeries, LabelError> {
    let n = s50.len();
    if n == 0 {
        return Err(LabelError::EmptySeries);
    }
    let t0 = s50.t[0];
    let mut t = Vec::with_capacity(2 * n - 1);
    let mut s = Vec::with_capacity(2 * n - 1);
    for k in 0..2 * n - 1 {
        let tk = t0 + k as f64 * IMU_DT;
        let i = k / 2;
        let v = if k % 2 == 0 {
            s50.s[i]
        } else {
            let (ta, tb) = (s50.t[i], s50.t[i + 1]);
            let w = ((tk - ta) / (tb - ta)).clamp(0.0, 1.0);
            s50.s[i] + w * (s50.s[i + 1] - s50.s[i])
        };
        t.push(tk);
        s.push(v.max(0.0));
    }
    Ok(SpeedSeries::new(t, s))
}

/// Resamples 100 Hz labels onto IMU timestamps by grid index, holding the
/// edge values outside the label span.
pub fn labels_on_imu(labels: &SpeedSeries, imu: &[ImuSample]) -> Result<SpeedSeries, LabelError> {
    if labels.is_empty() {
        return Err(LabelError::EmptySeries);
    }
    let t0 = labels.t[0];
    let last = labels.len() - 1;
    let s = imu
        .iter()
        .map(|m| {
            let k = ((m.t - t0) / IMU_DT).round();
            let k = if k < 0.0 { 0 } else { (k as usize).min(last) };
            labels.s[k].max(0.0)
        })
        .collect();
    Ok(SpeedSeries::new(imu.iter().map(|m| m.t).collect(), s))
}

/// `f_out = Rᵀ(R·f − (0, 0, g))` per tick. Angular rates pass through.
pub fn remove_gravity(
    imu: &[ImuSample],
    att: &[AttitudeState],
) -> Result<Vec<ImuSample>, LabelError> {
    if imu.len() != att.len() {
        return Err(LabelError::LengthMismatch {
            what: "attitude",
            got: att.len(),
            expected: imu.len(),
        });
    }
    let g = Vector3::new(0.0, 0.0, GRAVITY);
    Ok(imu
        .iter()
        .zip(att)
        .map(|(m, a)| {
            let r = a.body_to_nav();
            let f = r.inverse() * (r * m.f_body - g);
            ImuSample::new(m.t, f, m.omega_body)
        })
        .collect())
}

/// Cuts a gravity-compensated drive into consecutive non-overlapping windows.
/// A trailing remainder shorter than a window is dropped.
pub fn make_windows(drive: &Drive, labels: &SpeedSeries) -> Result<Vec<LabeledWindow>, LabelError> {
    if labels.len() != drive.imu.len() {
        return Err(LabelError::LengthMismatch {
            what: "labels",
            got: labels.len(),
            expected: drive.imu.len(),
        });
    }
    let id: Arc<str> = Arc::from(drive.id.as_str());
    Ok(drive
        .imu
        .chunks_exact(WINDOW_LEN)
        .zip(labels.s.chunks_exact(WINDOW_LEN))
        .enumerate()
        .map(|(index, (samples, y))| {
            let mut x = Vec::with_capacity(WINDOW_LEN * CHANNELS);
            for m in samples {
                x.extend(m.f_body.iter());
                x.extend(m.omega_body.iter());
            }
            LabeledWindow {
                x,
                y: y.to_vec(),
                valid: true,
                drive_id: id.clone(),
                index,
            }
        })
        .collect())
}

/// Batch `k` holds window `k` of every lane; short lanes are zero padded.
pub fn make_batches(lanes: &[Vec<LabeledWindow>]) -> Result<Vec<WindowBatch>, LabelError> {
    if lanes.is_empty() {
        return Err(LabelError::NoLanes);
    }
    let longest = lanes.iter().map(Vec::len).max().unwrap_or(0);
    Ok((0..longest)
        .map(|k| WindowBatch {
            windows: lanes
                .iter()
                .map(|lane| {
                    lane.get(k)
                        .cloned()
                        .unwrap_or_else(|| LabeledWindow::padding(k))
                })
                .collect(),
            step: k,
        })
        .collect())
}

/// Assigns contiguous time spans to train and validation.
///
/// Whole drives are used when a prefix of the drive list lands the train
/// share inside [0.80, 0.90]. Otherwise the drive straddling the target is
/// cut in two at a window boundary, its head training and its tail
/// validating.
pub fn split_train_val(
    drives: Vec<Vec<LabeledWindow>>,
    ratio: f64,
) -> Result<DatasetSplit, LabelError> {
    if drives.len() < 2 {
        return Err(LabelError::TooFewDrives(drives.len()));
    }
    let total: usize = drives.iter().map(Vec::len).sum();
    let mut best = (f64::INFINITY, 1);
    let mut cum = 0;
    for (k, d) in drives.iter().enumerate().take(drives.len() - 1) {
        cum += d.len();
        let frac = cum as f64 / total.max(1) as f64;
        if (frac - ratio).abs() < best.0 {
            best = ((frac - ratio).abs(), k + 1);
        }
    }
    let k = best.1;
    let frac = drives[..k].iter().map(Vec::len).sum::<usize>() as f64 / total.max(1) as f64;
    if (0.80..=0.90).contains(&frac) || total == 0 {
        let mut drives = drives;
        let val = drives.split_off(k);
        return Ok(DatasetSplit {
            train: drives,
            val,
            ratio,
        });
    }

    let target = (ratio * total as f64).round() as usize;
    let mut train = Vec::new();
    let mut val = Vec::new();
    let mut cum = 0;
    for mut d in drives {
        let len = d.len();
        if cum >= target {
            val.push(d);
        } else if cum + len <= target {
            train.push(d);
        } else {
            let tail = d.split_off(target - cum);
            train.push(d);
            val.push(tail);
        }
        cum += len;
    }
    // A cut drive that lands entirely on one side must not leave val empty.
    if val.is_empty() {
        let mut last = train.pop().unwrap_or_default();
        let keep = last.len() - last.len().min(total - target).max(1);
        val.push(last.split_off(keep));
        train.push(last);
    }
    Ok(DatasetSplit { train, val, ratio })
}

/// Where roll and pitch for gravity removal come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TiltSource {
    /// Simulator truth when the drive carries it (flat road: level), else
    /// the complementary filter.
    #[default]
    Auto,
    Estimated,
    Truth,
}

/// Attitude per IMU tick used for gravity removal.
pub fn tilt_for(drive: &Drive, source: TiltSource) -> Result<Vec<AttitudeState>, LabelError> {
    let estimated =
        || crate::nav::estimate_attitude(&drive.imu, 0.0).map_err(|_| LabelError::EmptyImu);
    match (source, &drive.truth) {
        (TiltSource::Truth, Some(truth)) | (TiltSource::Auto, Some(truth)) => {
            if truth.len() != drive.imu.len() {
                return Err(LabelError::LengthMismatch {
                    what: "truth",
                    got: truth.len(),
                    expected: drive.imu.len(),
                });
            }
            Ok(truth
                .iter()
                .map(|s| AttitudeState::level(s.pose.psi))
                .collect())
        }
        (TiltSource::Truth, None) => Err(LabelError::MissingTruth(drive.id.clone())),
        (TiltSource::Estimated, _) | (TiltSource::Auto, None) => estimated(),
    }
}

/// Labels and windows for one drive: speed from fixes, upsampled onto the
/// IMU ticks, gravity removed from the IMU.
pub fn prepare_drive(drive: &Drive, tilt: TiltSource) -> Result<Vec<LabeledWindow>, LabelError> {
    let s50 = positions_to_speed(&drive.fixes)?;
    let s100 = upsample_speed(&s50)?;
    let labels = labels_on_imu(&s100, &drive.imu)?;
    let att = tilt_for(drive, tilt)?;
    let compensated = Drive {
        imu: remove_gravity(&drive.imu, &att)?,
        ..drive.clone()
    };
    make_windows(&compensated, &labels)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::Pose2D;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};

    fn fixes_from(f: impl Fn(f64) -> (f64, f64), n: usize) -> Vec<GnssFix> {
        (0..n)
            .map(|k| {
                let t = k as f64 * FIX_DT;
                let (x, y) = f(t);
                GnssFix::new(t, x, y)
            })
            .collect()
    }

    #[test]
    fn speed_from_stationary_and_linear() {
        let s = positions_to_speed(&fixes_from(|_| (3.0, -2.0), 50)).unwrap();
        assert!(s.s.iter().all(|&v| v == 0.0));
        let s = positions_to_speed(&fixes_from(|t| (10.0 * t, 0.0), 50)).unwrap();
        for v in s.s {
            assert_abs_diff_eq!(v, 10.0, epsilon = 1e-9);
        }
    }

    #[test]
    fn speed_on_circle() {
        let (r, w) = (20.0, 0.5);
        let s = positions_to_speed(&fixes_from(
            |t| (r * (w * t).cos(), r * (w * t).sin()),
            1000,
        ))
        .unwrap();
        for v in &s.s[1..s.len() - 1] {
            assert!((v - 10.0).abs() < 1e-3, "{v}");
        }
    }

    #[test]
    fn speed_errors() {
        assert_eq!(
            positions_to_speed(&fixes_from(|_| (0.0, 0.0), 2)).unwrap_err(),
            LabelError::TooFewFixes(2)
        );
        let mut f = fixes_from(|_| (0.0, 0.0), 10);
        f[5].t += 0.005;
        assert!(matches!(
            positions_to_speed(&f).unwrap_err(),
            LabelError::NonUniformRate { index: 5, .. }
        ));
    }

    #[test]
    fn upsample_examples() {
        let c = SpeedSeries::new(vec![0.0, 0.02, 0.04], vec![5.0; 3]);
        let u = upsample_speed(&c).unwrap();
        assert_eq!(u.s, vec![5.0; 5]);

        let u = upsample_speed(&SpeedSeries::new(vec![0.0, 0.02], vec![0.0, 1.0])).unwrap();
        assert_eq!(u.len(), 3);
        assert_abs_diff_eq!(u.s[1], 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(u.t[1], 0.01, epsilon = 1e-15);

        assert_eq!(
            upsample_speed(&SpeedSeries::default()).unwrap_err(),
            LabelError::EmptySeries
        );
    }

    proptest! {
        #[test]
        fn upsample_keeps_originals(vals in prop::collection::vec(0.0f64..30.0, 1..200)) {
            let t: Vec<f64> = (0..vals.len()).map(|k| k as f64 * FIX_DT).collect();
            let s = SpeedSeries::new(t, vals.clone());
            let u = upsample_speed(&s).unwrap();
            prop_assert_eq!(u.len(), 2 * vals.len() - 1);
            for (i, v) in vals.iter().enumerate() {
                prop_assert_eq!(u.s[2 * i], *v);
            }
        }
    }

    #[test]
    fn gravity_removal_examples() {
        let level = ImuSample::new(
            0.0,
            Vector3::new(0.0, 0.0, GRAVITY),
            Vector3::new(0.1, 0.2, 0.3),
        );
        let out = remove_gravity(&[level], &[AttitudeState::default()]).unwrap();
        assert!(out[0].f_body.norm() < 1e-12);
        assert_eq!(out[0].omega_body, level.omega_body);

        let nose_up = ImuSample::new(0.0, Vector3::new(GRAVITY, 0.0, 0.0), Vector3::zeros());
        let att = AttitudeState::new(0.0, std::f64::consts::FRAC_PI_2, 0.0);
        let out = remove_gravity(&[nose_up], &[att]).unwrap();
        assert!(out[0].f_body.norm() < 1e-12, "{:?}", out[0].f_body);

        assert!(matches!(
            remove_gravity(&[level, level], &[att]).unwrap_err(),
            LabelError::LengthMismatch { .. }
        ));
    }

    #[test]
    fn gravity_removal_round_trip() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let g = Vector3::new(0.0, 0.0, GRAVITY);
        for _ in 0..1000 {
            let att = AttitudeState::new(
                rng.random_range(-3.1..3.1),
                rng.random_range(-1.5..1.5),
                rng.random_range(-3.1..3.1),
            );
            let a_nav = Vector3::new(
                rng.random_range(-5.0..5.0),
                rng.random_range(-5.0..5.0),
                rng.random_range(-5.0..5.0),
            );
            let r = att.body_to_nav();
            let f = r.inverse() * (a_nav + g);
            let out = remove_gravity(&[ImuSample::new(0.0, f, Vector3::zeros())], &[att]).unwrap();
            let expected = r.inverse() * a_nav;
            assert!((out[0].f_body - expected).norm() < 1e-12);
        }
    }

    fn drive_with(n: usize) -> Drive {
        Drive {
            id: "d".into(),
            imu: (0..n)
                .map(|k| {
                    ImuSample::new(
                        k as f64 * IMU_DT,
                        Vector3::repeat(k as f64),
                        Vector3::zeros(),
                    )
                })
                .collect(),
            fixes: vec![],
            truth: None,
            duration: n as f64 * IMU_DT,
            partial_fix_coverage: false,
        }
    }

    fn labels_for(n: usize) -> SpeedSeries {
        SpeedSeries::new(
            (0..n).map(|k| k as f64 * IMU_DT).collect(),
            (0..n).map(|k| k as f64).collect(),
        )
    }

    #[test]
    fn window_counts() {
        for (n, expect) in [(19, 0), (20, 1), (45, 2), (240_000, 12_000)] {
            let w = make_windows(&drive_with(n), &labels_for(n)).unwrap();
            assert_eq!(w.len(), expect, "{n} ticks");
        }
        let w = make_windows(&drive_with(45), &labels_for(45)).unwrap();
        assert_eq!(w[1].index, 1);
        assert_eq!(w[1].y[0], 20.0);
        assert_eq!(w[1].input(0), &[20.0, 20.0, 20.0, 0.0, 0.0, 0.0]);
        assert!(make_windows(&drive_with(45), &labels_for(44)).is_err());
    }

    fn lane(id: &str, n: usize) -> Vec<LabeledWindow> {
        (0..n)
            .map(|index| LabeledWindow {
                x: vec![1.0; WINDOW_LEN * CHANNELS],
                y: vec![1.0; WINDOW_LEN],
                valid: true,
                drive_id: Arc::from(id),
                index,
            })
            .collect()
    }

    #[test]
    fn batches_and_padding() {
        let lanes = vec![lane("a", 10), lane("b", 7), lane("c", 7), lane("d", 7)];
        let batches = make_batches(&lanes).unwrap();
        assert_eq!(batches.len(), 10);
        let padded: usize = batches
            .iter()
            .flat_map(|b| &b.windows)
            .filter(|w| !w.valid)
            .count();
        assert_eq!(padded, 9);
        for b in &batches[7..] {
            for w in &b.windows[1..] {
                assert!(!w.valid);
                assert!(w.x.iter().chain(&w.y).all(|&v| v == 0.0));
            }
        }
        let one = make_batches(&[lane("a", 5)]).unwrap();
        assert_eq!(one.len(), 5);
        assert!(one.iter().all(|b| b.lanes() == 1 && b.windows[0].valid));
        assert_eq!(make_batches(&[]).unwrap_err(), LabelError::NoLanes);
    }

    #[test]
    fn equal_lanes_no_padding() {
        let lanes: Vec<_> = (0..4).map(|i| lane(&i.to_string(), 12_000)).collect();
        let batches = make_batches(&lanes).unwrap();
        assert_eq!(batches.len(), 12_000);
        assert!(batches.iter().all(|b| b.windows.iter().all(|w| w.valid)));
    }

    #[test]
    fn split_examples() {
        let drives: Vec<_> = (0..20).map(|i| lane(&i.to_string(), 100)).collect();
        let split = split_train_val(drives, 0.85).unwrap();
        assert_eq!((split.train.len(), split.val.len()), (17, 3));

        let split = split_train_val(vec![lane("a", 85), lane("b", 15)], 0.85).unwrap();
        assert_eq!((split.train.len(), split.val.len()), (1, 1));

        let drives: Vec<_> = (0..4).map(|i| lane(&i.to_string(), 3000)).collect();
        let split = split_train_val(drives, 0.85).unwrap();
        assert_eq!(split.train_windows(), 10_200);
        assert_eq!(split.val_windows(), 1_800);
        assert_eq!(split.val[0][0].index, 1200);

        assert_eq!(
            split_train_val(vec![lane("a", 3)], 0.85).unwrap_err(),
            LabelError::TooFewDrives(1)
        );
    }

    proptest! {
        #[test]
        fn split_is_disjoint_and_in_range(lens in prop::collection::vec(1usize..400, 2..12)) {
            let drives: Vec<_> = lens.iter().enumerate().map(|(i, &n)| lane(&i.to_string(), n)).collect();
            let split = split_train_val(drives, 0.85).unwrap();
            let key = |w: &LabeledWindow| (w.drive_id.to_string(), w.index);
            let train: std::collections::HashSet<_> = split.train.iter().flatten().map(key).collect();
            for w in split.val.iter().flatten() {
                prop_assert!(!train.contains(&key(w)));
            }
            prop_assert_eq!(split.train_windows() + split.val_windows(), lens.iter().sum::<usize>());
            prop_assert!(!split.val.is_empty() && !split.train.is_empty());
            let total: usize = lens.iter().sum();
            if total >= 20 {
                let f = split.train_fraction();
                prop_assert!((0.80..=0.90).contains(&f), "fraction {}", f);
            }
            for l in split.train.iter().chain(&split.val) {
                for w in l.windows(2) {
                    prop_assert_eq!(w[1].index, w[0].index + 1);
                }
            }
        }
    }

    #[test]
    fn tilt_sources() {
        let mut d = drive_with(40);
        assert_eq!(
            tilt_for(&d, TiltSource::Truth).unwrap_err(),
            LabelError::MissingTruth("d".into())
        );
        d.truth = Some(
            d.imu
                .iter()
                .map(|m| crate::types::TruthSample {
                    t: m.t,
                    pose: Pose2D::new(0.0, 0.0, 0.3),
                    speed: 0.0,
                })
                .collect(),
        );
        let att = tilt_for(&d, TiltSource::Auto).unwrap();
        assert!(att.iter().all(|a| a.roll == 0.0 && a.pitch == 0.0));
    }
}
