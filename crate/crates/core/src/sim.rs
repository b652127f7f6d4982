//! Synthetic urban drives: ground-truth trajectory, noisy 100 Hz IMU and
//! RTK-grade 50 Hz fixes.
//!
//! The road is flat, so roll and pitch are identically zero and the ideal
//! body-frame specific force is `(ṡ, s·ψ̇, g)` with angular rate `(0, 0, ψ̇)`.
//!
//! Speed changes use a raised-cosine acceleration pulse that starts at the
//! beginning of a segment. Speed is therefore C¹ and the peak acceleration is
//! exactly [`MAX_ACCEL`]. Within a segment the travelled distance is closed
//! form, and since heading on an arc is `ψ₀ + d/r`, so is the pose.

use crate::types::{
    align_streams, wrap, Drive, GnssFix, ImuSample, Pose2D, TruthSample, GRAVITY, IMU_DT,
};
use nalgebra::{Vector2, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use std::f64::consts::{PI, TAU};
use thiserror::Error;

/// Peak longitudinal acceleration of a speed ramp, m/s².
pub const MAX_ACCEL: f64 = 3.0;
/// Upper bound for city driving, m/s.
pub const MAX_SPEED: f64 = 25.0;

#[derive(Debug, Error, PartialEq)]
pub enum SimError {
    #[error("segment {index}: {reason}")]
    InvalidProfile { index: usize, reason: String },
    #[error("segment {index}: speed change {from:.2} -> {to:.2} m/s needs {needed:.2} s, segment lasts {duration:.2} s")]
    InfeasibleProfile {
        index: usize,
        from: f64,
        to: f64,
        needed: f64,
        duration: f64,
    },
    #[error("noise model: {0}")]
    InvalidNoise(String),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SegmentKind {
    Straight,
    /// Signed radius in metres; positive turns left.
    Arc {
        radius: f64,
    },
    Stop,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Segment {
    pub kind: SegmentKind,
    pub duration: f64,
    /// Speed reached at the end of the initial ramp. Ignored for stops.
    pub target_speed: f64,
}

impl Segment {
    pub fn straight(duration: f64, target_speed: f64) -> Self {
        Self {
            kind: SegmentKind::Straight,
            duration,
            target_speed,
        }
    }

    pub fn arc(duration: f64, target_speed: f64, radius: f64) -> Self {
        Self {
            kind: SegmentKind::Arc { radius },
            duration,
            target_speed,
        }
    }

    pub fn stop(duration: f64) -> Self {
        Self {
            kind: SegmentKind::Stop,
            duration,
            target_speed: 0.0,
        }
    }

    fn target(&self) -> f64 {
        match self.kind {
            SegmentKind::Stop => 0.0,
            _ => self.target_speed,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DriveProfile {
    pub segments: Vec<Segment>,
    pub seed: u64,
    pub dt: f64,
    pub initial_pose: Pose2D,
    pub initial_speed: f64,
}

impl DriveProfile {
    pub fn new(segments: Vec<Segment>) -> Self {
        Self {
            segments,
            seed: 0,
            dt: IMU_DT,
            initial_pose: Pose2D::default(),
            initial_speed: 0.0,
        }
    }

    pub fn duration(&self) -> f64 {
        self.segments.iter().map(|s| s.duration).sum()
    }

    pub fn max_speed(&self) -> f64 {
        self.segments
            .iter()
            .map(Segment::target)
            .fold(self.initial_speed, f64::max)
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |index: usize, reason: &str| SimError::InvalidProfile {
            index,
            reason: reason.to_string(),
        };
        if self.segments.is_empty() {
            return Err(bad(0, "profile has no segments"));
        }
        if !(self.dt > 0.0) {
            return Err(bad(0, "dt must be positive"));
        }
        if !(0.0..=MAX_SPEED).contains(&self.initial_speed) {
            return Err(bad(0, "initial speed outside [0, 25] m/s"));
        }
        for (i, seg) in self.segments.iter().enumerate() {
            if !(seg.duration > 0.0) || !seg.duration.is_finite() {
                return Err(bad(i, "duration must be positive"));
            }
            if !(0.0..=MAX_SPEED).contains(&seg.target_speed) {
                return Err(bad(i, "target speed outside [0, 25] m/s"));
            }
            if let SegmentKind::Arc { radius } = seg.kind {
                if radius == 0.0 || !radius.is_finite() {
                    return Err(bad(i, "arc radius must be non-zero"));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VibrationWindow {
    pub t_start: f64,
    pub t_end: f64,
    /// Extra white accelerometer noise inside the window, m/s².
    pub extra_std: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ImuNoiseModel {
    pub accel_bias: Vector3<f64>,
    pub gyro_bias: Vector3<f64>,
    pub accel_noise_std: f64,
    pub gyro_noise_std: f64,
    pub vibration_windows: Vec<VibrationWindow>,
    pub seed: u64,
}

impl ImuNoiseModel {
    pub fn noiseless() -> Self {
        Self {
            accel_bias: Vector3::zeros(),
            gyro_bias: Vector3::zeros(),
            accel_noise_std: 0.0,
            gyro_noise_std: 0.0,
            vibration_windows: Vec::new(),
            seed: 0,
        }
    }

    pub fn validate(&self, duration: f64) -> Result<(), SimError> {
        if !(self.accel_noise_std >= 0.0) || !(self.gyro_noise_std >= 0.0) {
            return Err(SimError::InvalidNoise("noise std must be >= 0".into()));
        }
        for w in &self.vibration_windows {
            if !(w.extra_std >= 0.0) || w.t_start < 0.0 || w.t_end < w.t_start || w.t_end > duration
            {
                return Err(SimError::InvalidNoise(format!(
                    "vibration window [{}, {}] invalid for a {duration} s drive",
                    w.t_start, w.t_end
                )));
            }
        }
        Ok(())
    }
}

/// Low-cost MEMS figures. The bias values are of the order left after a
/// turn-on calibration.
impl Default for ImuNoiseModel {
    fn default() -> Self {
        Self {
            accel_bias: Vector3::new(0.03, -0.02, 0.04),
            gyro_bias: Vector3::new(0.0005, -0.0005, 0.0003),
            accel_noise_std: 0.05,
            gyro_noise_std: 0.003,
            vibration_windows: Vec::new(),
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RtkNoiseModel {
    pub position_std: f64,
    pub seed: u64,
}

impl Default for RtkNoiseModel {
    fn default() -> Self {
        Self {
            position_std: 0.02,
            seed: 0,
        }
    }
}

/// Ground truth at one tick, with the derivatives the IMU model needs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrajectoryPoint {
    pub t: f64,
    pub pose: Pose2D,
    pub speed: f64,
    /// Longitudinal acceleration ṡ, m/s².
    pub accel: f64,
    pub yaw_rate: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub points: Vec<TrajectoryPoint>,
    /// Exact state at the end of the last segment, which need not fall on a tick.
    pub end_pose: Pose2D,
    pub end_speed: f64,
}

impl Trajectory {
    pub fn truth(&self) -> Vec<TruthSample> {
        self.points
            .iter()
            .map(|p| TruthSample {
                t: p.t,
                pose: p.pose,
                speed: p.speed,
            })
            .collect()
    }

    pub fn distance(&self) -> f64 {
        self.points
            .windows(2)
            .map(|w| (w[1].pose.p_nav - w[0].pose.p_nav).norm())
            .sum()
    }

    pub fn max_speed(&self) -> f64 {
        self.points.iter().map(|p| p.speed).fold(0.0, f64::max)
    }
}

/// Kinematic state of a segment at local time `tau`.
struct SegmentMotion {
    s0: f64,
    ds: f64,
    ramp: f64,
}

impl SegmentMotion {
    fn new(s0: f64, target: f64) -> Self {
        let ds = target - s0;
        Self {
            s0,
            ds,
            ramp: 2.0 * ds.abs() / MAX_ACCEL,
        }
    }

    /// (distance, speed, acceleration) at `tau` seconds into the segment.
    fn at(&self, tau: f64) -> (f64, f64, f64) {
        let Self { s0, ds, ramp } = *self;
        if ramp == 0.0 {
            return (s0 * tau, s0, 0.0);
        }
        if tau >= ramp {
            let d_ramp = s0 * ramp + 0.5 * ds * ramp;
            let s1 = s0 + ds;
            return (d_ramp + s1 * (tau - ramp), s1, 0.0);
        }
        let w = TAU / ramp;
        let u = w * tau;
        let d = s0 * tau + ds * (tau * tau / (2.0 * ramp) + (u.cos() - 1.0) / (w * w * ramp));
        let s = s0 + ds * (tau / ramp - u.sin() / TAU);
        let a = ds / ramp * (1.0 - u.cos());
        (d, s.max(0.0), a)
    }
}

fn pose_along(kind: SegmentKind, start: &Pose2D, d: f64) -> (Pose2D, f64) {
    match kind {
        SegmentKind::Straight | SegmentKind::Stop => {
            let p = start.p_nav + d * Vector2::new(start.psi.cos(), start.psi.sin());
            (
                Pose2D {
                    p_nav: p,
                    psi: start.psi,
                },
                0.0,
            )
        }
        SegmentKind::Arc { radius } => {
            let psi = start.psi + d / radius;
            let p = start.p_nav
                + radius * Vector2::new(psi.sin() - start.psi.sin(), start.psi.cos() - psi.cos());
            (
                Pose2D {
                    p_nav: p,
                    psi: wrap(psi),
                },
                1.0 / radius,
            )
        }
    }
}

/// Evaluates a profile on the uniform tick grid `t = k·dt`.
pub fn gen_trajectory(profile: &DriveProfile) -> Result<Trajectory, SimError> {
    profile.validate()?;

    // Segment start states, computed exactly at segment boundaries.
    let mut starts = Vec::with_capacity(profile.segments.len());
    let mut t0 = 0.0;
    let mut pose = profile.initial_pose;
    pose.psi = wrap(pose.psi);
    let mut speed = profile.initial_speed;
    for (index, seg) in profile.segments.iter().enumerate() {
        let motion = SegmentMotion::new(speed, seg.target());
        if motion.ramp > seg.duration + 1e-12 {
            return Err(SimError::InfeasibleProfile {
                index,
                from: speed,
                to: seg.target(),
                needed: motion.ramp,
                duration: seg.duration,
            });
        }
        starts.push((t0, pose, motion));
        let (d, s_end, _) = starts.last().unwrap().2.at(seg.duration);
        pose = pose_along(seg.kind, &pose, d).0;
        speed = s_end;
        t0 += seg.duration;
    }
    let total = t0;

    let n_ticks = (total / profile.dt + 1e-9).floor() as usize + 1;
    let mut points = Vec::with_capacity(n_ticks);
    let mut seg_idx = 0;
    for k in 0..n_ticks {
        let t = k as f64 * profile.dt;
        while seg_idx + 1 < starts.len() && t >= starts[seg_idx + 1].0 {
            seg_idx += 1;
        }
        let (ts, ref start, ref motion) = starts[seg_idx];
        let (d, s, a) = motion.at(t - ts);
        let (pose, curvature) = pose_along(profile.segments[seg_idx].kind, start, d);
        points.push(TrajectoryPoint {
            t,
            pose,
            speed: s,
            accel: a,
            yaw_rate: s * curvature,
        });
    }
    Ok(Trajectory {
        points,
        end_pose: pose,
        end_speed: speed,
    })
}

fn normal(rng: &mut ChaCha8Rng, std: f64) -> f64 {
    if std > 0.0 {
        let z: f64 = StandardNormal.sample(rng);
        std * z
    } else {
        0.0
    }
}

/// Ideal flat-road body-frame signals plus bias and white noise.
pub fn trajectory_to_imu(truth: &Trajectory, noise: &ImuNoiseModel) -> Vec<ImuSample> {
    let mut rng = ChaCha8Rng::seed_from_u64(noise.seed);
    truth
        .points
        .iter()
        .map(|p| {
            let mut f = Vector3::new(p.accel, p.speed * p.yaw_rate, GRAVITY) + noise.accel_bias;
            let mut w = Vector3::new(0.0, 0.0, p.yaw_rate) + noise.gyro_bias;
            for i in 0..3 {
                f[i] += normal(&mut rng, noise.accel_noise_std);
            }
            for i in 0..3 {
                w[i] += normal(&mut rng, noise.gyro_noise_std);
            }
            for v in &noise.vibration_windows {
                if p.t >= v.t_start && p.t <= v.t_end {
                    for i in 0..3 {
                        f[i] += normal(&mut rng, v.extra_std);
                    }
                }
            }
            ImuSample::new(p.t, f, w)
        })
        .collect()
}

/// Every second truth position (50 Hz) with i.i.d. Gaussian noise per axis.
pub fn trajectory_to_fixes(truth: &Trajectory, noise: &RtkNoiseModel) -> Vec<GnssFix> {
    let mut rng = ChaCha8Rng::seed_from_u64(noise.seed);
    truth
        .points
        .iter()
        .step_by(2)
        .map(|p| {
            let dx = normal(&mut rng, noise.position_std);
            let dy = normal(&mut rng, noise.position_std);
            GnssFix::new(p.t, p.pose.p_nav.x + dx, p.pose.p_nav.y + dy)
        })
        .collect()
}

/// Truth, IMU and fixes for one profile as an aligned drive. Noise draws
/// come from the seeds inside `imu` and `rtk`.
pub fn simulate_drive(
    id: &str,
    profile: &DriveProfile,
    imu: &ImuNoiseModel,
    rtk: &RtkNoiseModel,
) -> Result<Drive, SimError> {
    let traj = gen_trajectory(profile)?;
    imu.validate(traj.points.last().map_or(0.0, |p| p.t))?;
    let samples = trajectory_to_imu(&traj, imu);
    let fixes = trajectory_to_fixes(&traj, rtk);
    let drive = align_streams(samples, fixes).expect("simulated streams are on a uniform grid");
    Ok(drive.with_id(id).with_truth(traj.truth()))
}

/// Random city drive of exactly `duration` seconds: straights, turns,
/// roundabouts and stops, starting and ending stationary when time allows.
pub fn urban_profile(seed: u64, duration: f64) -> DriveProfile {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut segments = Vec::new();
    let mut speed = 0.0_f64;
    let mut total = 0.0;
    let ramp = |from: f64, to: f64| 2.0 * (to - from).abs() / MAX_ACCEL;

    let first = duration.min(3.0);
    segments.push(Segment::stop(first));
    total += first;

    loop {
        let remaining = duration - total;
        if remaining <= 1e-9 {
            break;
        }
        // Close out: stop when there is time to brake, otherwise cruise.
        if remaining < 25.0 {
            if ramp(speed, 0.0) + 2.0 <= remaining {
                segments.push(Segment::stop(remaining));
            } else {
                segments.push(Segment::straight(remaining, speed));
            }
            break;
        }
        let roll: f64 = rng.random();
        let seg = if roll < 0.45 {
            let target = rng.random_range(6.0..16.0);
            let cruise = rng.random_range(3.0..15.0);
            Segment::straight(ramp(speed, target) + cruise, target)
        } else if roll < 0.75 {
            let target = rng.random_range(4.0..9.0);
            let radius: f64 =
                rng.random_range(12.0..40.0) * if rng.random::<bool>() { 1.0 } else { -1.0 };
            let angle = rng.random_range(PI / 4.0..PI / 2.0);
            let r = ramp(speed, target);
            // Distance covered during the ramp plus the rest of the turn.
            let d_ramp = 0.5 * (speed + target) * r;
            let rest = (angle * radius.abs() - d_ramp).max(0.0) / target;
            Segment::arc(r + rest.max(1.0), target, radius)
        } else if roll < 0.9 {
            let target = rng.random_range(4.5..7.5);
            let radius: f64 =
                rng.random_range(12.0..22.0) * if rng.random::<bool>() { 1.0 } else { -1.0 };
            let angle = rng.random_range(PI..1.75 * PI);
            let r = ramp(speed, target);
            let d_ramp = 0.5 * (speed + target) * r;
            let rest = (angle * radius.abs() - d_ramp).max(0.0) / target;
            Segment::arc(r + rest.max(1.0), target, radius)
        } else {
            let hold = rng.random_range(2.0..8.0);
            Segment::stop(ramp(speed, 0.0) + hold)
        };
        if seg.duration > remaining {
            segments.push(Segment::straight(remaining, speed));
            break;
        }
        speed = seg.target();
        total += seg.duration;
        segments.push(seg);
    }

    DriveProfile {
        segments,
        seed,
        dt: IMU_DT,
        initial_pose: Pose2D::default(),
        initial_speed: 0.0,
    }
}
