mod common;

use common::*;
use imuspeed_core::labels::{remove_gravity, tilt_for, TiltSource};
use imuspeed_core::nav::{
    estimate_attitude, integrate_acceleration_speed, position_error, run_dr, run_dr_with,
    segment_rmse, DrOptions, HeadingSource, NavSolution, SpeedSource,
};
use imuspeed_core::sim::{urban_profile, DriveProfile, ImuNoiseModel, Segment};
use imuspeed_core::{Drive, SpeedSeries};
use nalgebra::{Rotation2, Vector2, Vector3};
use std::f64::consts::TAU;

fn noiseless_urban(seed: u64, duration: f64) -> Drive {
    sim_drive(
        "u",
        &urban_profile(seed, duration),
        ImuNoiseModel::noiseless(),
    )
}

fn truth_speed(drive: &Drive) -> SpeedSeries {
    let t = drive.truth.as_ref().unwrap();
    SpeedSeries::new(
        t.iter().map(|s| s.t).collect(),
        t.iter().map(|s| s.speed).collect(),
    )
}

fn biased_rest(bias: f64, duration: f64) -> Drive {
    let imu = ImuNoiseModel {
        accel_bias: Vector3::new(bias, 0.0, 0.0),
        ..ImuNoiseModel::noiseless()
    };
    sim_drive(
        "rest",
        &DriveProfile::new(vec![Segment::stop(duration)]),
        imu,
    )
}

fn plain(drive: &Drive) -> NavSolution {
    let (psi0, p0) = start_of(drive);
    run_dr(drive, &SpeedSource::IntegratedAcceleration, psi0, p0).unwrap()
}

#[test]
fn truth_speed_and_heading_stay_on_track() {
    let drive = noiseless_urban(5, 240.0);
    let (psi0, p0) = start_of(&drive);
    let opts = DrOptions {
        heading: HeadingSource::Truth,
        ..DrOptions::default()
    };
    let sol = run_dr_with(&drive, &SpeedSource::GroundTruth, psi0, p0, opts).unwrap();
    let err = position_error(&sol, drive.truth.as_ref().unwrap()).unwrap();
    assert!(err.end < 0.5, "end error {}", err.end);
    assert!(sol.path_length() > 500.0);
}

#[test]
fn full_circle_closes() {
    let profile = DriveProfile {
        initial_speed: 10.0,
        ..DriveProfile::new(vec![Segment::arc(TAU * 2.0, 10.0, 20.0)])
    };
    let drive = sim_drive("circle", &profile, ImuNoiseModel::noiseless());
    let (psi0, p0) = start_of(&drive);
    let sol = run_dr(&drive, &SpeedSource::GroundTruth, psi0, p0).unwrap();
    let end = sol.poses.last().unwrap().p_nav;
    assert!((end - p0).norm() < 0.2, "gap {}", (end - p0).norm());
}

#[test]
fn constant_bias_diverges_quadratically() {
    let drive = biased_rest(0.05, 60.0);
    let sol = plain(&drive);
    assert!((sol.speed[6000] - 3.0).abs() < 0.01);
    let err = position_error(&sol, drive.truth.as_ref().unwrap()).unwrap();
    let at60 = err.at(60.0).unwrap();
    assert!((at60 - 90.0).abs() < 1.0, "{at60}");
    for t in [10.0, 15.0, 20.0, 30.0] {
        let (a, b) = (err.at(t).unwrap(), err.at(2.0 * t).unwrap());
        assert!(b >= 3.0 * a, "t = {t}: {a} -> {b}");
    }
}

#[test]
fn integrated_speed_tracks_noiseless_drive() {
    let drive = noiseless_urban(8, 60.0);
    let tilt = tilt_for(&drive, TiltSource::Truth).unwrap();
    let comp = remove_gravity(&drive.imu, &tilt).unwrap();
    let att: Vec<_> = tilt
        .iter()
        .zip(drive.truth.as_ref().unwrap())
        .map(|(a, t)| imuspeed_core::AttitudeState::new(a.roll, a.pitch, t.pose.psi))
        .collect();
    let s = integrate_acceleration_speed(&comp, &att).unwrap();
    let worst =
        s.s.iter()
            .zip(&truth_speed(&drive).s)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
    assert!(worst < 0.05, "{worst}");
}

#[test]
fn zero_speed_stays_put() {
    let drive = noiseless_urban(2, 30.0);
    let zeros = SpeedSeries::new(drive.imu_times(), vec![0.0; drive.imu.len()]);
    let p0 = Vector2::new(3.0, -4.0);
    let sol = run_dr(&drive, &SpeedSource::Series(zeros), 0.7, p0).unwrap();
    assert!(sol.poses.iter().all(|p| p.p_nav == p0));
}

#[test]
fn path_is_independent_of_start_point() {
    let drive = noiseless_urban(3, 120.0);
    let (psi0, _) = start_of(&drive);
    let a = run_dr(&drive, &SpeedSource::GroundTruth, psi0, Vector2::zeros()).unwrap();
    let d = Vector2::new(1234.5, -678.25);
    let b = run_dr(&drive, &SpeedSource::GroundTruth, psi0, d).unwrap();
    for (pa, pb) in a.poses.iter().zip(&b.poses) {
        // `pa` is the integrated displacement itself; `pb` adds `d` once.
        assert_eq!(pb.p_nav, d + pa.p_nav);
        assert_eq!(pa.psi, pb.psi);
    }
}

#[test]
fn rotating_initial_heading_rotates_path() {
    let drive = noiseless_urban(4, 120.0);
    let (psi0, p0) = start_of(&drive);
    let theta = 0.9;
    let a = run_dr(&drive, &SpeedSource::GroundTruth, psi0, p0).unwrap();
    let b = run_dr(&drive, &SpeedSource::GroundTruth, psi0 + theta, p0).unwrap();
    let rot = Rotation2::new(theta);
    let km = a.path_length() / 1000.0;
    let worst = a
        .poses
        .iter()
        .zip(&b.poses)
        .map(|(pa, pb)| (p0 + rot * (pa.p_nav - p0) - pb.p_nav).norm())
        .fold(0.0, f64::max);
    assert!(worst <= 1e-9 * km.max(1.0), "{worst} m over {km} km");
}

#[test]
fn heading_bias_bends_but_keeps_length() {
    let imu = ImuNoiseModel {
        gyro_bias: Vector3::new(0.0, 0.0, 0.01),
        ..ImuNoiseModel::noiseless()
    };
    let drive = sim_drive("h", &urban_profile(6, 180.0), imu);
    let (psi0, p0) = start_of(&drive);
    let sol = run_dr(&drive, &SpeedSource::GroundTruth, psi0, p0).unwrap();
    let truth = drive.truth.as_ref().unwrap();
    let truth_len: f64 = truth
        .windows(2)
        .map(|w| (w[1].pose.p_nav - w[0].pose.p_nav).norm())
        .sum();
    assert!((sol.path_length() - truth_len).abs() / truth_len < 1e-3);
    assert!(position_error(&sol, truth).unwrap().end > 10.0);
}

#[test]
fn attitude_of_level_drive_is_level() {
    let drive = noiseless_urban(1, 20.0);
    let att = estimate_attitude(&drive.imu, 0.0).unwrap();
    assert_eq!(att.len(), drive.imu.len());
    // Stationary start: accelerometer tilt is exactly zero.
    assert!(att[..200]
        .iter()
        .all(|a| a.roll.abs() < 1e-6 && a.pitch.abs() < 1e-6));
}

#[test]
fn segment_rmse_on_a_drive() {
    let drive = noiseless_urban(7, 60.0);
    let truth = truth_speed(&drive);
    let off = SpeedSeries::new(truth.t.clone(), truth.s.iter().map(|v| v + 2.0).collect());
    let r = segment_rmse(&off, &truth, &[0.0, 20.0, 45.0, 60.0]).unwrap();
    assert!(r.iter().all(|v| (v - 2.0).abs() < 1e-12));
}
