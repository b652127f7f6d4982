//! Domain types shared across the crate and clock alignment of the IMU and
//! fix streams.
//!
//! Frames: the navigation frame is local planar East-North (x east, y north)
//! with the origin at the first fix of a drive. The body frame is x forward,
//! y left, z up. Accelerometers report specific force, so a level stationary
//! sensor reads `(0, 0, +GRAVITY)`.

use nalgebra::{Rotation3, Vector2, Vector3};
use std::f64::consts::{PI, TAU};
use thiserror::Error;

/// Standard gravity, m/s².
pub const GRAVITY: f64 = 9.80665;
/// Nominal IMU sample period (100 Hz).
pub const IMU_DT: f64 = 0.01;
/// Nominal fix sample period (50 Hz).
pub const FIX_DT: f64 = 0.02;
/// Largest tolerated gap between consecutive samples, in nominal periods.
pub const MAX_GAP_PERIODS: f64 = 5.0;

#[derive(Debug, Error, PartialEq)]
pub enum AlignError {
    #[error("{0} stream is empty")]
    EmptyStream(&'static str),
    #[error("{stream} timestamps not strictly increasing at index {index}")]
    NonMonotonicTime { stream: &'static str, index: usize },
    #[error("{stream} gap of {gap:.3} s at t = {t:.3} s exceeds {limit:.3} s")]
    GapTooLarge {
        stream: &'static str,
        t: f64,
        gap: f64,
        limit: f64,
    },
}

#[derive(Debug, Error, PartialEq)]
#[error("angle is not finite: {0}")]
pub struct NonFinite(pub f64);

/// One 100 Hz IMU reading.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImuSample {
    pub t: f64,
    /// Specific force, body frame, m/s².
    pub f_body: Vector3<f64>,
    /// Angular rate, body frame, rad/s.
    pub omega_body: Vector3<f64>,
}

impl ImuSample {
    pub fn new(t: f64, f_body: Vector3<f64>, omega_body: Vector3<f64>) -> Self {
        Self {
            t,
            f_body,
            omega_body,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.t.is_finite()
            && self.f_body.iter().all(|v| v.is_finite())
            && self.omega_body.iter().all(|v| v.is_finite())
    }
}

/// One 50 Hz planar position fix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GnssFix {
    pub t: f64,
    pub p_nav: Vector2<f64>,
}

impl GnssFix {
    pub fn new(t: f64, x: f64, y: f64) -> Self {
        Self {
            t,
            p_nav: Vector2::new(x, y),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose2D {
    pub p_nav: Vector2<f64>,
    /// Heading of the body x axis from navigation x, wrapped to (-π, π].
    pub psi: f64,
}

impl Pose2D {
    pub fn new(x: f64, y: f64, psi: f64) -> Self {
        Self {
            p_nav: Vector2::new(x, y),
            psi,
        }
    }
}

impl Default for Pose2D {
    fn default() -> Self {
        Self::new(0.0, 0.0, 0.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct AttitudeState {
    pub roll: f64,
    pub pitch: f64,
    pub psi: f64,
}

impl AttitudeState {
    pub fn new(roll: f64, pitch: f64, psi: f64) -> Self {
        Self { roll, pitch, psi }
    }

    pub fn level(psi: f64) -> Self {
        Self::new(0.0, 0.0, psi)
    }

    /// Body-to-navigation rotation. Positive pitch is nose-up, positive roll
    /// lifts the left side, positive heading turns x toward y.
    pub fn body_to_nav(&self) -> Rotation3<f64> {
        Rotation3::from_axis_angle(&Vector3::z_axis(), self.psi)
            * Rotation3::from_axis_angle(&Vector3::y_axis(), -self.pitch)
            * Rotation3::from_axis_angle(&Vector3::x_axis(), self.roll)
    }
}

/// Ground truth at one IMU tick.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TruthSample {
    pub t: f64,
    pub pose: Pose2D,
    pub speed: f64,
}

/// A speed signal with its own time base.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SpeedSeries {
    pub t: Vec<f64>,
    pub s: Vec<f64>,
}

impl SpeedSeries {
    pub fn new(t: Vec<f64>, s: Vec<f64>) -> Self {
        assert_eq!(t.len(), s.len(), "time and speed vectors differ in length");
        Self { t, s }
    }

    pub fn len(&self) -> usize {
        self.s.len()
    }

    pub fn is_empty(&self) -> bool {
        self.s.is_empty()
    }
}

/// A time-aligned recording.
#[derive(Debug, Clone, PartialEq)]
pub struct Drive {
    pub id: String,
    pub imu: Vec<ImuSample>,
    pub fixes: Vec<GnssFix>,
    pub truth: Option<Vec<TruthSample>>,
    /// IMU span, s.
    pub duration: f64,
    /// Set when the fixes cover only part of the IMU span.
    pub partial_fix_coverage: bool,
}

impl Drive {
    pub fn with_id(mut self, id: impl Into<String>) -> Self {
        self.id = id.into();
        self
    }

    pub fn with_truth(mut self, truth: Vec<TruthSample>) -> Self {
        self.truth = Some(truth);
        self
    }

    pub fn imu_times(&self) -> Vec<f64> {
        self.imu.iter().map(|s| s.t).collect()
    }
}

fn check_stream(
    stream: &'static str,
    times: impl Iterator<Item = f64>,
    nominal: f64,
) -> Result<(), AlignError> {
    let limit = MAX_GAP_PERIODS * nominal;
    let mut prev: Option<f64> = None;
    for (index, t) in times.enumerate() {
        if let Some(p) = prev {
            if !(t > p) {
                return Err(AlignError::NonMonotonicTime { stream, index });
            }
            let gap = t - p;
            // Tolerance absorbs timestamp rounding at the threshold itself.
            if gap > limit + 1e-9 {
                return Err(AlignError::GapTooLarge {
                    stream,
                    t: p,
                    gap,
                    limit,
                });
            }
        } else if !t.is_finite() {
            return Err(AlignError::NonMonotonicTime { stream, index });
        }
        prev = Some(t);
    }
    Ok(())
}

/// Builds a [`Drive`] from an IMU stream and a fix stream on the same clock.
///
/// Fixes outside the IMU span are dropped. When the fixes cover less than
/// the IMU span the drive is still returned, with `partial_fix_coverage` set.
pub fn align_streams(imu: Vec<ImuSample>, fixes: Vec<GnssFix>) -> Result<Drive, AlignError> {
    if imu.is_empty() {
        return Err(AlignError::EmptyStream("imu"));
    }
    if fixes.is_empty() {
        return Err(AlignError::EmptyStream("fixes"));
    }
    check_stream("imu", imu.iter().map(|s| s.t), IMU_DT)?;
    check_stream("fixes", fixes.iter().map(|f| f.t), FIX_DT)?;

    let t0 = imu[0].t;
    let t1 = imu[imu.len() - 1].t;
    let fixes: Vec<GnssFix> = fixes
        .into_iter()
        .filter(|f| f.t >= t0 && f.t <= t1)
        .collect();
    if fixes.is_empty() {
        return Err(AlignError::EmptyStream("fixes"));
    }
    let half = 0.5 * FIX_DT;
    let partial = fixes[0].t - t0 > half || t1 - fixes[fixes.len() - 1].t > half;
    if partial {
        log::warn!(
            "fixes cover [{:.2}, {:.2}] s of IMU span [{:.2}, {:.2}] s",
            fixes[0].t,
            fixes[fixes.len() - 1].t,
            t0,
            t1
        );
    }
    Ok(Drive {
        id: String::from("drive"),
        duration: t1 - t0,
        imu,
        fixes,
        truth: None,
        partial_fix_coverage: partial,
    })
}

/// Wraps an angle to (-π, π].
pub fn wrap_angle(theta: f64) -> Result<f64, NonFinite> {
    if !theta.is_finite() {
        return Err(NonFinite(theta));
    }
    Ok(wrap(theta))
}

/// Infallible variant of [`wrap_angle`] for values already known finite.
pub(crate) fn wrap(theta: f64) -> f64 {
    if theta > -PI && theta <= PI {
        return theta;
    }
    let mut r = theta.rem_euclid(TAU);
    if r > PI {
        r -= TAU;
    }
    if r <= -PI {
        r += TAU;
    }
    r
}
