mod common;

use common::*;
use imuspeed_core::dataset;
use imuspeed_core::labels::{
    labels_on_imu, make_batches, positions_to_speed, prepare_drive, split_train_val,
    upsample_speed, TiltSource, CHANNELS, WINDOW_LEN,
};
use imuspeed_core::logs::{read_drive, write_drive};
use imuspeed_core::net::{load_weights, save_weights, weights_to_bytes, ModelConfig, SpeedModel};
use imuspeed_core::sim::{
    gen_trajectory, simulate_drive, trajectory_to_fixes, urban_profile, ImuNoiseModel,
    RtkNoiseModel,
};
use imuspeed_core::{GnssFix, SpeedSeries};

fn circle_fixes(r: f64, omega: f64, n: usize) -> Vec<GnssFix> {
    (0..n)
        .map(|k| {
            let t = k as f64 * 0.02;
            GnssFix::new(t, r * (omega * t).cos(), r * (omega * t).sin())
        })
        .collect()
}

#[test]
fn circle_speed_is_recovered() {
    let s = positions_to_speed(&circle_fixes(20.0, 0.5, 1000)).unwrap();
    for v in &s.s[1..s.len() - 1] {
        assert!((v - 10.0).abs() < 1e-3, "{v}");
    }
}

#[test]
fn upsampling_keeps_original_samples() {
    let s50 = positions_to_speed(&circle_fixes(35.0, 0.3, 301)).unwrap();
    let mut s50 = s50;
    for (k, v) in s50.s.iter_mut().enumerate() {
        *v += (k as f64 * 0.37).sin();
    }
    let s100 = upsample_speed(&s50).unwrap();
    assert_eq!(s100.len(), 2 * s50.len() - 1);
    for (k, v) in s50.s.iter().enumerate() {
        assert_eq!(s100.s[2 * k], *v);
    }
    for k in 0..s50.len() - 1 {
        let mid = 0.5 * (s50.s[k] + s50.s[k + 1]);
        assert!((s100.s[2 * k + 1] - mid).abs() < 1e-12);
    }
}

#[test]
fn noiseless_fixes_give_back_truth_speed() {
    let traj = gen_trajectory(&urban_profile(21, 300.0)).unwrap();
    let rtk = RtkNoiseModel {
        position_std: 0.0,
        seed: 1,
    };
    let fixes = trajectory_to_fixes(&traj, &rtk);
    let s = positions_to_speed(&fixes).unwrap();
    let truth: Vec<f64> = traj.points.iter().step_by(2).map(|p| p.speed).collect();
    assert_eq!(truth.len(), s.len());
    let worst = s.s[1..s.len() - 1]
        .iter()
        .zip(&truth[1..truth.len() - 1])
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    assert!(worst < 1e-2, "{worst}");
}

#[test]
fn labels_line_up_with_imu_ticks() {
    let drive = sim_drive("l", &urban_profile(3, 60.0), ImuNoiseModel::noiseless());
    let s100 = upsample_speed(&positions_to_speed(&drive.fixes).unwrap()).unwrap();
    let on_imu = labels_on_imu(&s100, &drive.imu).unwrap();
    assert_eq!(on_imu.len(), drive.imu.len());
    let truth = drive.truth.as_ref().unwrap();
    let worst = on_imu.s[2..on_imu.len() - 2]
        .iter()
        .zip(&truth[2..truth.len() - 2])
        .map(|(a, b)| (a - b.speed).abs())
        .fold(0.0, f64::max);
    assert!(worst < 2e-2, "{worst}");
}

fn four_drives(seed: u64) -> Vec<imuspeed_core::Drive> {
    (0..4)
        .map(|i| {
            let imu = ImuNoiseModel {
                seed: seed + i,
                ..ImuNoiseModel::default()
            };
            let rtk = RtkNoiseModel {
                seed: seed + 100 + i,
                ..RtkNoiseModel::default()
            };
            simulate_drive(&format!("d{i}"), &urban_profile(seed + i, 60.0), &imu, &rtk).unwrap()
        })
        .collect()
}

#[test]
fn prepared_windows_have_the_right_shape() {
    let drives = four_drives(40);
    let windows: Vec<_> = drives
        .iter()
        .map(|d| prepare_drive(d, TiltSource::Auto).unwrap())
        .collect();
    for (d, w) in drives.iter().zip(&windows) {
        assert_eq!(w.len(), d.imu.len() / WINDOW_LEN);
        assert!(w
            .iter()
            .all(|w| w.x.len() == WINDOW_LEN * CHANNELS && w.y.iter().all(|&y| y >= 0.0)));
    }
    let split = split_train_val(windows, 0.85).unwrap();
    assert!((0.80..=0.90).contains(&split.train_fraction()));
    let batches = make_batches(&split.train).unwrap();
    let longest = split.train.iter().map(Vec::len).max().unwrap();
    assert_eq!(batches.len(), longest);
    assert!(batches.iter().all(|b| b.lanes() == split.train.len()));
}

#[test]
fn sensor_logs_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let drive = four_drives(7).remove(2);
    let files = write_drive(dir.path(), &drive).unwrap();
    assert_eq!(read_drive(&files[0]).unwrap(), drive);
}

#[test]
fn dataset_file_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let windows = four_drives(9)
        .iter()
        .map(|d| prepare_drive(d, TiltSource::Auto).unwrap())
        .collect();
    let split = split_train_val(windows, 0.85).unwrap();
    let path = dir.path().join("set.bin");
    dataset::save(&split, &path).unwrap();
    assert_eq!(dataset::load(&path).unwrap(), split);
}

#[test]
fn weight_file_round_trips_and_detects_damage() {
    let dir = tempfile::tempdir().unwrap();
    let model = SpeedModel::init(ModelConfig::default()).unwrap();
    let path = dir.path().join("w.bin");
    save_weights(&model, &path).unwrap();
    let back = load_weights(&path).unwrap();
    assert_eq!(weights_to_bytes(&back), weights_to_bytes(&model));
    let mut bytes = std::fs::read(&path).unwrap();
    let mid = bytes.len() / 2;
    bytes[mid] ^= 0x10;
    std::fs::write(&path, &bytes).unwrap();
    assert!(load_weights(&path).is_err());
}

#[test]
fn pipeline_is_deterministic() {
    let run = || {
        let windows = four_drives(77)
            .iter()
            .map(|d| prepare_drive(d, TiltSource::Auto).unwrap())
            .collect();
        dataset::to_bytes(&split_train_val(windows, 0.85).unwrap())
    };
    assert_eq!(run(), run());
}

#[test]
fn speed_series_of_circle_is_flat_after_upsampling() {
    let s = upsample_speed(&positions_to_speed(&circle_fixes(20.0, 0.5, 200)).unwrap()).unwrap();
    let interior: &[f64] = &s.s[2..s.len() - 2];
    assert!(interior.iter().all(|v| (v - 10.0).abs() < 1e-3));
    let _: &SpeedSeries = &s;
}
