#![allow(dead_code)]

use imuspeed_core::labels::{LabeledWindow, WindowBatch};
use imuspeed_core::net::{masked_mse, LaneState, ModelConfig, RecurrentState, SpeedModel};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::sync::Arc;

pub const FD_EPS: f64 = 1e-6;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn uniform(rng: &mut ChaCha8Rng, n: usize, k: f64) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-k..=k)).collect()
}

pub fn random_config(rng: &mut ChaCha8Rng, max_hidden: usize) -> ModelConfig {
    ModelConfig {
        h1: rng.random_range(1..=max_hidden),
        h2: rng.random_range(1..=max_hidden),
        h3: rng.random_range(1..=max_hidden),
        input_channels: 6,
        window_len: 20,
        seed: rng.random(),
    }
}

pub fn random_model(cfg: ModelConfig, rng: &mut ChaCha8Rng) -> SpeedModel {
    let n = cfg.param_count();
    SpeedModel::from_params(cfg, uniform(rng, n, 0.6)).unwrap()
}

pub fn random_window(rng: &mut ChaCha8Rng, cfg: &ModelConfig, valid: bool) -> LabeledWindow {
    if !valid {
        let mut w = LabeledWindow::padding(0);
        w.x = vec![0.0; cfg.window_len * cfg.input_channels];
        w.y = vec![0.0; cfg.window_len];
        return w;
    }
    LabeledWindow {
        x: uniform(rng, cfg.window_len * cfg.input_channels, 1.5),
        y: (0..cfg.window_len)
            .map(|_| rng.random_range(0.0..3.0))
            .collect(),
        valid: true,
        drive_id: Arc::from("g"),
        index: 0,
    }
}

pub fn random_batch(rng: &mut ChaCha8Rng, cfg: &ModelConfig, valid: &[bool]) -> WindowBatch {
    WindowBatch {
        windows: valid.iter().map(|&v| random_window(rng, cfg, v)).collect(),
        step: 0,
    }
}

pub fn random_state(rng: &mut ChaCha8Rng, cfg: &ModelConfig, lanes: usize) -> RecurrentState {
    RecurrentState {
        lanes: (0..lanes)
            .map(|_| LaneState {
                h1: uniform(rng, cfg.h1, 0.5),
                c1: uniform(rng, cfg.h1, 1.0),
                h2: uniform(rng, cfg.h2, 0.5),
                c2: uniform(rng, cfg.h2, 1.0),
                h3: uniform(rng, cfg.h3, 0.5),
                c3: uniform(rng, cfg.h3, 1.0),
            })
            .collect(),
    }
}

/// Loss through the plain forward pass, independent of the backward code.
pub fn forward_loss(model: &SpeedModel, batch: &WindowBatch, state: &RecurrentState) -> f64 {
    let (pred, _) = model.forward(batch, state).unwrap();
    let labels: Vec<&[f64]> = batch.windows.iter().map(|w| w.y.as_slice()).collect();
    masked_mse(&pred, &labels, &batch.valid()).unwrap()
}

/// Central differences of the loss for every parameter.
pub fn numeric_gradient(
    model: &SpeedModel,
    batch: &WindowBatch,
    state: &RecurrentState,
) -> Vec<f64> {
    let mut m = model.clone();
    (0..m.param_count())
        .map(|i| {
            let p0 = m.params()[i];
            m.params_mut()[i] = p0 + FD_EPS;
            let up = forward_loss(&m, batch, state);
            m.params_mut()[i] = p0 - FD_EPS;
            let down = forward_loss(&m, batch, state);
            m.params_mut()[i] = p0;
            (up - down) / (2.0 * FD_EPS)
        })
        .collect()
}

#[derive(Debug, Clone, Copy)]
pub struct GradCheck {
    pub max_rel: f64,
    pub max_abs: f64,
    pub params: usize,
}

/// `|a − n| / max(|a|, |n|, floor)` over all components.
pub fn compare_gradients(analytic: &[f64], numeric: &[f64], floor: f64) -> GradCheck {
    let mut out = GradCheck {
        max_rel: 0.0,
        max_abs: 0.0,
        params: analytic.len(),
    };
    for (a, n) in analytic.iter().zip(numeric) {
        let abs = (a - n).abs();
        out.max_abs = out.max_abs.max(abs);
        out.max_rel = out.max_rel.max(abs / a.abs().max(n.abs()).max(floor));
    }
    out
}

pub fn sim_drive(
    id: &str,
    profile: &imuspeed_core::sim::DriveProfile,
    imu: imuspeed_core::sim::ImuNoiseModel,
) -> imuspeed_core::Drive {
    let rtk = imuspeed_core::sim::RtkNoiseModel {
        position_std: 0.0,
        seed: 0,
    };
    imuspeed_core::sim::simulate_drive(id, profile, &imu, &rtk).unwrap()
}

pub fn start_of(drive: &imuspeed_core::Drive) -> (f64, nalgebra::Vector2<f64>) {
    let t = &drive.truth.as_ref().unwrap()[0];
    (t.pose.psi, t.pose.p_nav)
}
