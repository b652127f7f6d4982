//! Planar dead reckoning with a pluggable speed source.
//!
//! Position advances as `p[k] = p[k−1] + Δt · s[k] · (cos ψ[k], sin ψ[k])`.
//! Heading comes from integrating the yaw-axis gyro; roll and pitch from a
//! complementary filter are only needed to take gravity out of the
//! accelerometer.

use crate::labels::{remove_gravity, tilt_for, LabelError, TiltSource};
use crate::net::{predict_stream, NetError, SpeedModel};
use crate::types::{
    wrap, AttitudeState, Drive, ImuSample, Pose2D, SpeedSeries, TruthSample, IMU_DT,
};
use nalgebra::Vector2;
use thiserror::Error;

/// Per-step weight on the gyro-propagated tilt.
pub const GYRO_WEIGHT: f64 = 0.98;

#[derive(Debug, Error)]
pub enum NavError {
    #[error("IMU stream is empty")]
    EmptyStream,
    #[error("speed must be non-negative, got {0}")]
    NegativeSpeed(f64),
    #[error("time step must be positive, got {0}")]
    NonPositiveDt(f64),
    #[error("length mismatch: {what} has {got}, expected {expected}")]
    LengthMismatch {
        what: &'static str,
        got: usize,
        expected: usize,
    },
    #[error("drive {0} has no ground truth")]
    MissingTruth(String),
    #[error("stream of {0} samples is shorter than one model window")]
    StreamTooShort(usize),
    #[error("series spans do not match: {0}")]
    SpanMismatch(String),
    #[error(transparent)]
    Labels(#[from] LabelError),
    #[error(transparent)]
    Model(#[from] NetError),
}

fn accel_tilt(s: &ImuSample) -> (f64, f64) {
    let f = s.f_body;
    let roll = f.y.atan2(f.z);
    let pitch = f.x.atan2((f.y * f.y + f.z * f.z).sqrt());
    (roll, pitch)
}

/// Complementary filter for roll and pitch, trapezoidal gyro integration
/// for heading starting at `psi0`.
pub fn estimate_attitude(imu: &[ImuSample], psi0: f64) -> Result<Vec<AttitudeState>, NavError> {
    let first = imu.first().ok_or(NavError::EmptyStream)?;
    let (mut roll, mut pitch) = accel_tilt(first);
    let mut psi = psi0;
    let mut out = Vec::with_capacity(imu.len());
    out.push(AttitudeState::new(wrap(roll), wrap(pitch), wrap(psi)));
    for w in imu.windows(2) {
        let (prev, cur) = (&w[0], &w[1]);
        let dt = cur.t - prev.t;
        let (acc_roll, acc_pitch) = accel_tilt(cur);
        // Nose-up pitch is a negative rotation about body y.
        roll = GYRO_WEIGHT * (roll + cur.omega_body.x * dt) + (1.0 - GYRO_WEIGHT) * acc_roll;
        pitch = GYRO_WEIGHT * (pitch - cur.omega_body.y * dt) + (1.0 - GYRO_WEIGHT) * acc_pitch;
        psi += 0.5 * dt * (prev.omega_body.z + cur.omega_body.z);
        out.push(AttitudeState::new(wrap(roll), wrap(pitch), wrap(psi)));
    }
    Ok(out)
}

/// One dead-reckoning step; the returned pose takes heading `psi`.
pub fn dr_step(pose: &Pose2D, s: f64, psi: f64, dt: f64) -> Result<Pose2D, NavError> {
    if !(dt > 0.0) {
        return Err(NavError::NonPositiveDt(dt));
    }
    if !(s >= 0.0) {
        return Err(NavError::NegativeSpeed(s));
    }
    Ok(Pose2D {
        p_nav: pose.p_nav + dt * s * Vector2::new(psi.cos(), psi.sin()),
        psi: wrap(psi),
    })
}

/// Speed from integrating the horizontal navigation-frame acceleration
/// (trapezoidal, starting at rest). Expects gravity already removed.
pub fn integrate_acceleration_speed(
    imu: &[ImuSample],
    att: &[AttitudeState],
) -> Result<SpeedSeries, NavError> {
    if imu.len() != att.len() {
        return Err(NavError::LengthMismatch {
            what: "attitude",
            got: att.len(),
            expected: imu.len(),
        });
    }
    let mut v = Vector2::zeros();
    let mut prev: Option<(f64, Vector2<f64>)> = None;
    let mut s = Vec::with_capacity(imu.len());
    for (m, a) in imu.iter().zip(att) {
        let a_nav = a.body_to_nav() * m.f_body;
        let a_h = Vector2::new(a_nav.x, a_nav.y);
        if let Some((t0, a0)) = prev {
            v += 0.5 * (m.t - t0) * (a0 + a_h);
        }
        prev = Some((m.t, a_h));
        s.push(v.norm());
    }
    Ok(SpeedSeries::new(imu.iter().map(|m| m.t).collect(), s))
}

#[derive(Debug, Clone)]
pub enum SpeedSource {
    Model(SpeedModel),
    IntegratedAcceleration,
    GroundTruth,
    /// Precomputed speeds, one per IMU tick.
    Series(SpeedSeries),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum HeadingSource {
    #[default]
    Gyro,
    Truth,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct DrOptions {
    pub tilt: TiltSource,
    pub heading: HeadingSource,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NavSolution {
    pub t: Vec<f64>,
    pub poses: Vec<Pose2D>,
    /// Speed used at each tick.
    pub speed: Vec<f64>,
}

impl NavSolution {
    pub fn path_length(&self) -> f64 {
        self.poses
            .windows(2)
            .map(|w| (w[1].p_nav - w[0].p_nav).norm())
            .sum()
    }
}

/// Model speeds as consumed by the navigator: each window's last
/// prediction is held over the following window, so a tick only uses
/// output that exists at its time. Zero until the first window completes.
pub fn held_model_speed(model: &SpeedModel, imu: &[ImuSample]) -> Result<Vec<f64>, NavError> {
    let window = model.config().window_len;
    if imu.len() < window {
        return Err(NavError::StreamTooShort(imu.len()));
    }
    let pred = predict_stream(model, imu)?;
    Ok((0..imu.len())
        .map(|k| {
            let w = k / window;
            if w == 0 {
                0.0
            } else {
                let last = (w * window - 1).min(pred.len() - 1);
                pred.s[last]
            }
        })
        .collect())
}

pub fn run_dr(
    drive: &Drive,
    source: &SpeedSource,
    psi0: f64,
    p0: Vector2<f64>,
) -> Result<NavSolution, NavError> {
    run_dr_with(drive, source, psi0, p0, DrOptions::default())
}

pub fn run_dr_with(
    drive: &Drive,
    source: &SpeedSource,
    psi0: f64,
    p0: Vector2<f64>,
    opts: DrOptions,
) -> Result<NavSolution, NavError> {
    if drive.imu.is_empty() {
        return Err(NavError::EmptyStream);
    }
    let n = drive.imu.len();
    let truth = || {
        drive
            .truth
            .as_ref()
            .filter(|t| t.len() == n)
            .ok_or_else(|| NavError::MissingTruth(drive.id.clone()))
    };

    let est = estimate_attitude(&drive.imu, psi0)?;
    let heading: Vec<f64> = match opts.heading {
        HeadingSource::Gyro => est.iter().map(|a| a.psi).collect(),
        HeadingSource::Truth => truth()?.iter().map(|s| s.pose.psi).collect(),
    };

    let speed: Vec<f64> = match source {
        SpeedSource::GroundTruth => truth()?.iter().map(|s| s.speed).collect(),
        SpeedSource::Series(series) => {
            if series.len() != n {
                return Err(NavError::LengthMismatch {
                    what: "speed series",
                    got: series.len(),
                    expected: n,
                });
            }
            series.s.clone()
        }
        SpeedSource::Model(model) => {
            let tilt = tilt_for(drive, opts.tilt)?;
            held_model_speed(model, &remove_gravity(&drive.imu, &tilt)?)?
        }
        SpeedSource::IntegratedAcceleration => {
            let tilt = tilt_for(drive, opts.tilt)?;
            let compensated = remove_gravity(&drive.imu, &tilt)?;
            let att: Vec<AttitudeState> = tilt
                .iter()
                .zip(&heading)
                .map(|(a, &psi)| AttitudeState::new(a.roll, a.pitch, psi))
                .collect();
            integrate_acceleration_speed(&compensated, &att)?.s
        }
    };

    // Displacement is integrated from the origin so that the path does not
    // depend on where it starts.
    let mut rel = Pose2D {
        p_nav: Vector2::zeros(),
        psi: wrap(psi0),
    };
    let mut poses = Vec::with_capacity(n);
    poses.push(Pose2D { p_nav: p0, ..rel });
    for k in 1..n {
        let dt = drive.imu[k].t - drive.imu[k - 1].t;
        rel = dr_step(&rel, speed[k].max(0.0), heading[k], dt)?;
        poses.push(Pose2D {
            p_nav: p0 + rel.p_nav,
            psi: rel.psi,
        });
    }
    Ok(NavSolution {
        t: drive.imu_times(),
        poses,
        speed,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ErrorSeries {
    pub t: Vec<f64>,
    pub err: Vec<f64>,
    pub max: f64,
    pub end: f64,
}

impl ErrorSeries {
    /// Error at the tick nearest `t_rel` seconds after the start, if the
    /// series reaches that far.
    pub fn at(&self, t_rel: f64) -> Option<f64> {
        let t0 = *self.t.first()?;
        let target = t0 + t_rel;
        if target > self.t[self.t.len() - 1] + 0.5 * IMU_DT {
            return None;
        }
        let k = self.t.partition_point(|&t| t < target - 0.5 * IMU_DT);
        self.err.get(k).copied()
    }
}

pub fn position_error(sol: &NavSolution, truth: &[TruthSample]) -> Result<ErrorSeries, NavError> {
    if sol.poses.len() != truth.len() {
        return Err(NavError::SpanMismatch(format!(
            "{} solution ticks vs {} truth ticks",
            sol.poses.len(),
            truth.len()
        )));
    }
    if let Some((a, b)) = sol
        .t
        .iter()
        .zip(truth)
        .map(|(a, b)| (*a, b.t))
        .find(|(a, b)| (a - b).abs() > 1e-9)
    {
        return Err(NavError::SpanMismatch(format!(
            "solution t = {a} vs truth t = {b}"
        )));
    }
    let err: Vec<f64> = sol
        .poses
        .iter()
        .zip(truth)
        .map(|(p, g)| (p.p_nav - g.pose.p_nav).norm())
        .collect();
    Ok(ErrorSeries {
        t: sol.t.clone(),
        max: err.iter().copied().fold(0.0, f64::max),
        end: err.last().copied().unwrap_or(0.0),
        err,
    })
}

/// RMSE per interval `[b_i, b_{i+1})`; the last interval includes its end.
pub fn segment_rmse(
    pred: &SpeedSeries,
    truth: &SpeedSeries,
    boundaries: &[f64],
) -> Result<Vec<f64>, NavError> {
    if pred.len() != truth.len()
        || pred
            .t
            .iter()
            .zip(&truth.t)
            .any(|(a, b)| (a - b).abs() > 1e-9)
    {
        return Err(NavError::SpanMismatch(
            "prediction and truth are not aligned".into(),
        ));
    }
    if boundaries.len() < 2 || boundaries.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(NavError::SpanMismatch(
            "boundaries must be increasing, at least two".into(),
        ));
    }
    let (t_first, t_last) = match (pred.t.first(), pred.t.last()) {
        (Some(a), Some(b)) => (*a, *b),
        _ => return Err(NavError::SpanMismatch("empty series".into())),
    };
    if boundaries[0] < t_first - 1e-9 || boundaries[boundaries.len() - 1] > t_last + 1e-9 {
        return Err(NavError::SpanMismatch(format!(
            "boundaries [{}, {}] outside series span [{t_first}, {t_last}]",
            boundaries[0],
            boundaries[boundaries.len() - 1]
        )));
    }
    let last = boundaries.len() - 2;
    boundaries
        .windows(2)
        .enumerate()
        .map(|(i, w)| {
            let (mut sum, mut n) = (0.0, 0usize);
            for ((t, p), g) in pred.t.iter().zip(&pred.s).zip(&truth.s) {
                let inside = *t >= w[0] && (*t < w[1] || (i == last && *t <= w[1] + 1e-9));
                if inside {
                    sum += (p - g) * (p - g);
                    n += 1;
                }
            }
            if n == 0 {
                Err(NavError::SpanMismatch(format!(
                    "no samples in [{}, {})",
                    w[0], w[1]
                )))
            } else {
                Ok((sum / n as f64).sqrt())
            }
        })
        .collect()
}
