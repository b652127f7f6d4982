//! Learned vehicle speed from 6-axis IMU windows, and speed-aided 2-D dead
//! reckoning.
//!
//! The crate is organised as the pipeline runs:
//!
//! * [`types`]: shared domain types and stream alignment
//! * [`sim`]: synthetic drives (truth, IMU, RTK fixes)
//! * [`labels`]: speed labels, gravity removal, windows, batches, split
//! * [`net`]: the recurrent speed regressor and its training loop
//! * [`nav`]: attitude, dead reckoning and error evaluation
//! * [`logs`] and [`dataset`]: on-disk formats

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod dataset;
pub mod labels;
pub mod logs;
pub mod nav;
pub mod net;
pub mod sim;
pub mod types;

pub use labels::{DatasetSplit, LabeledWindow, WindowBatch};
pub use net::{ModelConfig, RecurrentState, SpeedModel, TrainConfig};
pub use types::{
    align_streams, wrap_angle, AttitudeState, Drive, GnssFix, ImuSample, Pose2D, SpeedSeries,
    TruthSample, FIX_DT, GRAVITY, IMU_DT,
};
