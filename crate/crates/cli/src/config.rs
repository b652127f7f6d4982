use crate::error::CliError;
use imuspeed_core::labels::TiltSource;
use imuspeed_core::nav::{DrOptions, HeadingSource};
use imuspeed_core::sim::{DriveProfile, ImuNoiseModel, RtkNoiseModel, Segment, VibrationWindow};
use imuspeed_core::{ModelConfig, Pose2D, TrainConfig, IMU_DT};
use nalgebra::Vector3;
use serde::{Deserialize, Serialize};
use std::path::Path;

/// Every key, its default and its unit. Printed by `--help`.
pub const CONFIG_HELP: &str = "\
CONFIG FILE (TOML, --config PATH; unknown keys are rejected)
  [sim]
    drives = 4                  number of drives to simulate
    duration = 600.0            seconds per drive (random city route)
    seed = 0                    base seed; drive i derives its own streams
    dt = 0.01                   IMU tick in s (fixed at 0.01)
    initial_speed = 0.0         m/s at t = 0
    initial_pose = [0, 0, 0]    x m, y m, heading rad
    segments = []               explicit route used for every drive instead of a
                                random one, e.g. [[sim.segments]] kind = \"arc\"
                                duration = 12.6 speed = 10.0 radius = 20.0
                                (kind: straight | arc | stop; speed m/s;
                                radius m, signed, positive turns left)
    accel_bias = [0.03, -0.02, 0.04]      m/s^2, body x y z
    gyro_bias = [0.0005, -0.0005, 0.0003] rad/s, body x y z
    accel_noise_std = 0.05      m/s^2 per sample
    gyro_noise_std = 0.003      rad/s per sample
    vibration = []              extra accelerometer noise windows, e.g.
                                [[sim.vibration]] start = 60.0 end = 90.0 std = 0.5
                                (start, end in s; std in m/s^2)
    rtk_std = 0.02              fix noise in m per axis
  [pipe]
    train_ratio = 0.85          share of windows used for training
    tilt = \"auto\"               auto | estimated | truth; roll and pitch used for
                                gravity removal (auto: truth when logged)
  [model]
    h1 = 19                     units of the first LSTM
    h2 = 16                     units per direction, first bidirectional LSTM
    h3 = 16                     units per direction, second bidirectional LSTM
    input_channels = 6          fixed: fx fy fz wx wy wz
    window_len = 20             fixed: samples per window
    seed = 0                    weight initialisation seed
  [train]
    epochs = 200
    batch_lanes = 4             parallel drive lanes per batch
    learning_rate = 0.001
    beta1 = 0.9
    beta2 = 0.999
    epsilon = 1e-8
    clip_norm = 5.0             global gradient norm limit
    seed = 0                    lane grouping seed
    patience = 0                early stop after this many epochs without
                                improvement; 0 disables
    min_delta = 0.0             m/s, smallest counted improvement
  [nav]
    mode = \"plain\"              plain | aided | truth (speed source)
    heading = \"gyro\"            gyro | truth
    tilt = \"auto\"               auto | estimated | truth

--seed N overrides sim.seed, model.seed and train.seed.
Log verbosity: IMUSPEED_LOG=error|warn|info|debug|trace (default info).
Exit codes: 0 ok, 2 config error, 3 I/O or data error, 4 numeric divergence.";

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub sim: SimSection,
    pub pipe: PipeSection,
    pub model: ModelSection,
    pub train: TrainSection,
    pub nav: NavSection,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SegmentKindSpec {
    Straight,
    Arc,
    Stop,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SegmentSpec {
    pub kind: SegmentKindSpec,
    pub duration: f64,
    #[serde(default)]
    pub speed: f64,
    #[serde(default)]
    pub radius: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VibrationSpec {
    pub start: f64,
    pub end: f64,
    pub std: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimSection {
    pub drives: usize,
    pub duration: f64,
    pub seed: u64,
    pub dt: f64,
    pub initial_speed: f64,
    pub initial_pose: [f64; 3],
    pub accel_bias: [f64; 3],
    pub gyro_bias: [f64; 3],
    pub accel_noise_std: f64,
    pub gyro_noise_std: f64,
    pub rtk_std: f64,
    pub segments: Vec<SegmentSpec>,
    pub vibration: Vec<VibrationSpec>,
}

impl Default for SimSection {
    fn default() -> Self {
        let imu = ImuNoiseModel::default();
        Self {
            drives: 4,
            duration: 600.0,
            seed: 0,
            dt: IMU_DT,
            initial_speed: 0.0,
            initial_pose: [0.0; 3],
            accel_bias: imu.accel_bias.into(),
            gyro_bias: imu.gyro_bias.into(),
            accel_noise_std: imu.accel_noise_std,
            gyro_noise_std: imu.gyro_noise_std,
            rtk_std: RtkNoiseModel::default().position_std,
            segments: Vec::new(),
            vibration: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TiltSpec {
    #[default]
    Auto,
    Estimated,
    Truth,
}

impl From<TiltSpec> for TiltSource {
    fn from(t: TiltSpec) -> Self {
        match t {
            TiltSpec::Auto => TiltSource::Auto,
            TiltSpec::Estimated => TiltSource::Estimated,
            TiltSpec::Truth => TiltSource::Truth,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipeSection {
    pub train_ratio: f64,
    pub tilt: TiltSpec,
}

impl Default for PipeSection {
    fn default() -> Self {
        Self {
            train_ratio: imuspeed_core::labels::DEFAULT_TRAIN_RATIO,
            tilt: TiltSpec::Auto,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    pub h1: usize,
    pub h2: usize,
    pub h3: usize,
    pub input_channels: usize,
    pub window_len: usize,
    pub seed: u64,
}

impl Default for ModelSection {
    fn default() -> Self {
        let m = ModelConfig::default();
        Self {
            h1: m.h1,
            h2: m.h2,
            h3: m.h3,
            input_channels: m.input_channels,
            window_len: m.window_len,
            seed: m.seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub epochs: usize,
    pub batch_lanes: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub clip_norm: f64,
    pub seed: u64,
    pub patience: usize,
    pub min_delta: f64,
}

impl Default for TrainSection {
    fn default() -> Self {
        let t = TrainConfig::default();
        Self {
            epochs: t.epochs,
            batch_lanes: t.batch_lanes,
            learning_rate: t.learning_rate,
            beta1: t.beta1,
            beta2: t.beta2,
            epsilon: t.epsilon,
            clip_norm: t.clip_norm,
            seed: t.seed,
            patience: t.patience.unwrap_or(0),
            min_delta: t.min_delta,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum NavMode {
    #[default]
    Plain,
    Aided,
    Truth,
}

impl NavMode {
    pub fn name(self) -> &'static str {
        match self {
            NavMode::Plain => "plain",
            NavMode::Aided => "aided",
            NavMode::Truth => "truth",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HeadingSpec {
    #[default]
    Gyro,
    Truth,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NavSection {
    pub mode: NavMode,
    pub heading: HeadingSpec,
    pub tilt: TiltSpec,
}

impl Default for NavSection {
    fn default() -> Self {
        Self {
            mode: NavMode::Plain,
            heading: HeadingSpec::Gyro,
            tilt: TiltSpec::Auto,
        }
    }
}

fn config_err(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

/// Independent stream seeds per drive and purpose.
fn derive_seed(base: u64, drive: usize, stream: u64) -> u64 {
    let mut z = base
        .wrapping_add((drive as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15))
        .wrapping_add(stream.wrapping_mul(0xD1B5_4A32_D192_ED03));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| config_err(format!("{}: {e}", path.display())))
    }

    pub fn with_seed(mut self, seed: Option<u64>) -> Self {
        if let Some(s) = seed {
            self.sim.seed = s;
            self.model.seed = s;
            self.train.seed = s;
        }
        self
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Checks every section so no command starts on a bad config.
    pub fn validate(&self) -> Result<(), CliError> {
        let s = &self.sim;
        if s.drives == 0 {
            return Err(config_err("sim.drives must be >= 1"));
        }
        if s.dt != IMU_DT {
            return Err(config_err(format!("sim.dt must be {IMU_DT}")));
        }
        if s.segments.is_empty() && !(s.duration > 0.0 && s.duration.is_finite()) {
            return Err(config_err(format!(
                "sim.duration must be positive, got {}",
                s.duration
            )));
        }
        if s.rtk_std.is_nan() || s.rtk_std < 0.0 {
            return Err(config_err("sim.rtk_std must be >= 0"));
        }
        if s.accel_bias
            .iter()
            .chain(&s.gyro_bias)
            .chain(&s.initial_pose)
            .any(|v| !v.is_finite())
        {
            return Err(config_err("sim biases and initial_pose must be finite"));
        }
        let profile = self.profile(0);
        profile
            .validate()
            .map_err(|e| config_err(format!("sim: {e}")))?;
        self.imu_noise(0)
            .validate(profile.duration())
            .map_err(|e| config_err(format!("sim: {e}")))?;

        let ratio = self.pipe.train_ratio;
        if !(ratio > 0.0 && ratio < 1.0) {
            return Err(config_err("pipe.train_ratio must lie in (0, 1)"));
        }

        let m = self.model_config();
        m.validate()
            .map_err(|e| config_err(format!("model: {e}")))?;
        if m.input_channels != 6 || m.window_len != 20 {
            return Err(config_err(
                "model.input_channels must be 6 and model.window_len 20",
            ));
        }
        self.train_config()
            .validate()
            .map_err(|e| config_err(format!("train: {e}")))?;
        Ok(())
    }

    pub fn profile(&self, drive: usize) -> DriveProfile {
        let s = &self.sim;
        let mut profile = if s.segments.is_empty() {
            imuspeed_core::sim::urban_profile(derive_seed(s.seed, drive, 0), s.duration)
        } else {
            DriveProfile::new(
                s.segments
                    .iter()
                    .map(|g| match g.kind {
                        SegmentKindSpec::Straight => Segment::straight(g.duration, g.speed),
                        SegmentKindSpec::Arc => Segment::arc(g.duration, g.speed, g.radius),
                        SegmentKindSpec::Stop => Segment::stop(g.duration),
                    })
                    .collect(),
            )
        };
        profile.seed = derive_seed(s.seed, drive, 0);
        profile.dt = s.dt;
        profile.initial_speed = s.initial_speed;
        let [x, y, psi] = s.initial_pose;
        profile.initial_pose = Pose2D::new(x, y, psi);
        profile
    }

    pub fn imu_noise(&self, drive: usize) -> ImuNoiseModel {
        let s = &self.sim;
        ImuNoiseModel {
            accel_bias: Vector3::from(s.accel_bias),
            gyro_bias: Vector3::from(s.gyro_bias),
            accel_noise_std: s.accel_noise_std,
            gyro_noise_std: s.gyro_noise_std,
            vibration_windows: s
                .vibration
                .iter()
                .map(|v| VibrationWindow {
                    t_start: v.start,
                    t_end: v.end,
                    extra_std: v.std,
                })
                .collect(),
            seed: derive_seed(self.sim.seed, drive, 1),
        }
    }

    pub fn rtk_noise(&self, drive: usize) -> RtkNoiseModel {
        RtkNoiseModel {
            position_std: self.sim.rtk_std,
            seed: derive_seed(self.sim.seed, drive, 2),
        }
    }

    pub fn model_config(&self) -> ModelConfig {
        let m = &self.model;
        ModelConfig {
            h1: m.h1,
            h2: m.h2,
            h3: m.h3,
            input_channels: m.input_channels,
            window_len: m.window_len,
            seed: m.seed,
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        let t = &self.train;
        TrainConfig {
            epochs: t.epochs,
            batch_lanes: t.batch_lanes,
            learning_rate: t.learning_rate,
            beta1: t.beta1,
            beta2: t.beta2,
            epsilon: t.epsilon,
            clip_norm: t.clip_norm,
            seed: t.seed,
            patience: (t.patience > 0).then_some(t.patience),
            min_delta: t.min_delta,
        }
    }

    pub fn dr_options(&self) -> DrOptions {
        DrOptions {
            tilt: self.nav.tilt.into(),
            heading: match self.nav.heading {
                HeadingSpec::Gyro => HeadingSource::Gyro,
                HeadingSpec::Truth => HeadingSource::Truth,
            },
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn keys(prefix: &str, v: &toml::Value, out: &mut Vec<String>) {
        if let toml::Value::Table(t) = v {
            for (k, v) in t {
                if v.is_table() {
                    keys(k, v, out);
                } else {
                    out.push(format!("{prefix}.{k}"));
                }
            }
        }
    }

    #[test]
    fn help_lists_every_key() {
        let v: toml::Value = toml::from_str(&RunConfig::default().to_toml()).unwrap();
        let mut all = Vec::new();
        keys("", &v, &mut all);
        assert!(all.len() > 30);
        for key in all {
            let name = key.rsplit('.').next().unwrap();
            assert!(
                CONFIG_HELP.contains(&format!("    {name} ")),
                "{key} undocumented"
            );
        }
    }

    #[test]
    fn resolved_copy_reads_back() {
        let mut cfg = RunConfig::default();
        cfg.sim.segments.push(SegmentSpec {
            kind: SegmentKindSpec::Arc,
            duration: 12.0,
            speed: 10.0,
            radius: -20.0,
        });
        cfg.sim.vibration.push(VibrationSpec {
            start: 1.0,
            end: 2.0,
            std: 0.3,
        });
        let back: RunConfig = toml::from_str(&cfg.to_toml()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(toml::from_str::<RunConfig>("[sim]\ndrivez = 3\n").is_err());
        assert!(toml::from_str::<RunConfig>("[bogus]\n").is_err());
        assert!(toml::from_str::<RunConfig>("[train]\nepochs = 3\n").is_ok());
    }

    #[test]
    fn validation_catches_bad_values() {
        let mut cfg = RunConfig::default();
        cfg.validate().unwrap();
        cfg.sim.duration = 0.0;
        assert!(cfg.validate().is_err());
        let mut cfg = RunConfig::default();
        cfg.sim.vibration.push(VibrationSpec {
            start: 10.0,
            end: 5000.0,
            std: 0.1,
        });
        assert!(cfg.validate().is_err());
        let mut cfg = RunConfig::default();
        cfg.model.window_len = 10;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn drives_get_distinct_streams() {
        let cfg = RunConfig::default();
        assert_ne!(cfg.imu_noise(0).seed, cfg.imu_noise(1).seed);
        assert_ne!(cfg.imu_noise(0).seed, cfg.rtk_noise(0).seed);
        assert_ne!(cfg.profile(0), cfg.profile(1));
    }
}
