//! Fixtures shared by the benchmarks.

use imuspeed_core::labels::{make_batches, prepare_drive, TiltSource};
use imuspeed_core::sim::{simulate_drive, urban_profile, ImuNoiseModel, RtkNoiseModel};
use imuspeed_core::{Drive, WindowBatch};

/// A default-noise city drive of `duration` seconds.
pub fn drive(seed: u64, duration: f64) -> Drive {
    let imu = ImuNoiseModel {
        seed,
        ..ImuNoiseModel::default()
    };
    let rtk = RtkNoiseModel {
        seed: seed + 1,
        ..RtkNoiseModel::default()
    };
    simulate_drive("bench", &urban_profile(seed, duration), &imu, &rtk).expect("valid profile")
}

/// First batch of `lanes` parallel drives.
pub fn batch(lanes: usize) -> WindowBatch {
    let windows: Vec<_> = (0..lanes as u64)
        .map(|i| prepare_drive(&drive(i, 10.0), TiltSource::Auto).expect("prepared"))
        .collect();
    make_batches(&windows).expect("lanes").swap_remove(20)
}
