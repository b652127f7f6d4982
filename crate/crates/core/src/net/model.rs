use super::config::{Layout, ModelConfig};
use super::loss::masked_mse;
use super::lstm::{DirTrace, LstmDir};
use super::NetError;
use crate::labels::WindowBatch;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// All trainable values of the regressor in one flat vector; see
/// [`ModelConfig`] for the block order.
#[derive(Debug, Clone, PartialEq)]
pub struct SpeedModel {
    config: ModelConfig,
    layout: Layout,
    params: Vec<f64>,
}

/// Carried state of one lane: `(h, c)` of the LSTM layer and of the forward
/// direction of each bidirectional layer.
#[derive(Debug, Clone, PartialEq)]
pub struct LaneState {
    pub h1: Vec<f64>,
    pub c1: Vec<f64>,
    pub h2: Vec<f64>,
    pub c2: Vec<f64>,
    pub h3: Vec<f64>,
    pub c3: Vec<f64>,
}

impl LaneState {
    pub fn zeros(config: &ModelConfig) -> Self {
        Self {
            h1: vec![0.0; config.h1],
            c1: vec![0.0; config.h1],
            h2: vec![0.0; config.h2],
            c2: vec![0.0; config.h2],
            h3: vec![0.0; config.h3],
            c3: vec![0.0; config.h3],
        }
    }

    fn matches(&self, config: &ModelConfig) -> bool {
        self.h1.len() == config.h1
            && self.c1.len() == config.h1
            && self.h2.len() == config.h2
            && self.c2.len() == config.h2
            && self.h3.len() == config.h3
            && self.c3.len() == config.h3
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RecurrentState {
    pub lanes: Vec<LaneState>,
}

impl RecurrentState {
    pub fn zeros(config: &ModelConfig, lanes: usize) -> Self {
        Self {
            lanes: vec![LaneState::zeros(config); lanes],
        }
    }
}

/// Gradient of the loss, laid out like [`SpeedModel::params`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub values: Vec<f64>,
}

impl Gradients {
    pub fn norm(&self) -> f64 {
        self.values.iter().map(|g| g * g).sum::<f64>().sqrt()
    }

    pub fn scale(&mut self, k: f64) {
        self.values.iter_mut().for_each(|g| *g *= k);
    }
}

/// Result of one training step's forward and backward pass.
#[derive(Debug, Clone)]
pub struct StepOutput {
    pub predictions: Vec<Vec<f64>>,
    pub state: RecurrentState,
    pub loss: f64,
    /// Σ (label − prediction)² over valid entries.
    pub sq_error: f64,
    pub valid_entries: usize,
    pub grads: Gradients,
}

struct LaneTrace {
    x: Vec<f64>,
    l1: DirTrace,
    l2: [DirTrace; 2],
    out2: Vec<f64>,
    l3: [DirTrace; 2],
    out3: Vec<f64>,
    pred: Vec<f64>,
}

fn concat(fwd: &[f64], bwd: &[f64], hid: usize, steps: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(2 * hid * steps);
    for t in 0..steps {
        out.extend_from_slice(&fwd[t * hid..(t + 1) * hid]);
        out.extend_from_slice(&bwd[t * hid..(t + 1) * hid]);
    }
    out
}

fn split_concat(d: &[f64], hid: usize, steps: usize) -> (Vec<f64>, Vec<f64>) {
    let mut f = Vec::with_capacity(hid * steps);
    let mut b = Vec::with_capacity(hid * steps);
    for t in 0..steps {
        f.extend_from_slice(&d[2 * hid * t..2 * hid * t + hid]);
        b.extend_from_slice(&d[2 * hid * t + hid..2 * hid * (t + 1)]);
    }
    (f, b)
}

impl SpeedModel {
    /// Uniform initialisation in `[−k, k]`, `k = 1/√fan_in` per matrix.
    /// LSTM biases share the recurrent matrix's bound.
    pub fn init(config: ModelConfig) -> Result<Self, NetError> {
        config.validate()?;
        let layout = config.layout();
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut params = Vec::with_capacity(layout.total);
        let mut fill = |n: usize, fan_in: usize, params: &mut Vec<f64>| {
            let k = 1.0 / (fan_in as f64).sqrt();
            params.extend((0..n).map(|_| rng.random_range(-k..=k)));
        };
        for dir in [
            layout.l1,
            layout.l2[0],
            layout.l2[1],
            layout.l3[0],
            layout.l3[1],
        ] {
            let g = 4 * dir.hidden;
            fill(g * dir.input, dir.input, &mut params);
            fill(g * dir.hidden, dir.hidden, &mut params);
            fill(g, dir.hidden, &mut params);
        }
        fill(2 * config.h3, 2 * config.h3, &mut params);
        fill(1, 2 * config.h3, &mut params);
        debug_assert_eq!(params.len(), layout.total);
        Ok(Self {
            config,
            layout,
            params,
        })
    }

    pub fn zeros(config: ModelConfig) -> Result<Self, NetError> {
        config.validate()?;
        let layout = config.layout();
        Ok(Self {
            config,
            layout,
            params: vec![0.0; layout.total],
        })
    }

    pub fn from_params(config: ModelConfig, params: Vec<f64>) -> Result<Self, NetError> {
        config.validate()?;
        let layout = config.layout();
        if params.len() != layout.total {
            return Err(NetError::ShapeMismatch(format!(
                "{} parameters for a config needing {}",
                params.len(),
                layout.total
            )));
        }
        Ok(Self {
            config,
            layout,
            params,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    pub fn first_layer(&self) -> LstmDir {
        self.layout.l1
    }

    pub fn dense_bias(&self) -> f64 {
        self.params[self.layout.dense_b]
    }

    pub fn set_dense_bias(&mut self, b: f64) {
        self.params[self.layout.dense_b] = b;
    }

    pub fn zero_state(&self, lanes: usize) -> RecurrentState {
        RecurrentState::zeros(&self.config, lanes)
    }

    fn forward_lane(&self, x: &[f64], st: &LaneState) -> LaneTrace {
        let p = &self.params;
        let cfg = &self.config;
        let steps = x.len() / cfg.input_channels;
        let l1 = self.layout.l1.forward(p, x, &st.h1, &st.c1, false);

        let z2 = vec![0.0; cfg.h2];
        let l2f = self.layout.l2[0].forward(p, &l1.h, &st.h2, &st.c2, false);
        let l2b = self.layout.l2[1].forward(p, &l1.h, &z2, &z2, true);
        let out2 = concat(&l2f.h, &l2b.h, cfg.h2, steps);

        let z3 = vec![0.0; cfg.h3];
        let l3f = self.layout.l3[0].forward(p, &out2, &st.h3, &st.c3, false);
        let l3b = self.layout.l3[1].forward(p, &out2, &z3, &z3, true);
        let out3 = concat(&l3f.h, &l3b.h, cfg.h3, steps);

        let w = &p[self.layout.dense_w..self.layout.dense_b];
        let b = p[self.layout.dense_b];
        let pred = out3
            .chunks_exact(2 * cfg.h3)
            .map(|f| b + f.iter().zip(w).map(|(a, c)| a * c).sum::<f64>())
            .collect();
        LaneTrace {
            x: x.to_vec(),
            l1,
            l2: [l2f, l2b],
            out2,
            l3: [l3f, l3b],
            out3,
            pred,
        }
    }

    fn carried(tr: &LaneTrace) -> LaneState {
        let (h1, c1) = tr.l1.final_state();
        let (h2, c2) = tr.l2[0].final_state();
        let (h3, c3) = tr.l3[0].final_state();
        LaneState {
            h1: h1.to_vec(),
            c1: c1.to_vec(),
            h2: h2.to_vec(),
            c2: c2.to_vec(),
            h3: h3.to_vec(),
            c3: c3.to_vec(),
        }
    }

    /// `dpred[t]` is ∂L/∂ŷ_t for this lane.
    fn backward_lane(&self, tr: &LaneTrace, dpred: &[f64], grads: &mut [f64]) {
        let p = &self.params;
        let cfg = &self.config;
        let steps = dpred.len();
        let (dw0, db) = (self.layout.dense_w, self.layout.dense_b);
        let f3 = 2 * cfg.h3;
        let mut d_out3 = vec![0.0; steps * f3];
        for (t, &d) in dpred.iter().enumerate() {
            if d == 0.0 {
                continue;
            }
            grads[db] += d;
            let feat = &tr.out3[t * f3..(t + 1) * f3];
            for j in 0..f3 {
                grads[dw0 + j] += d * feat[j];
                d_out3[t * f3 + j] = d * p[dw0 + j];
            }
        }

        let (dh3f, dh3b) = split_concat(&d_out3, cfg.h3, steps);
        let mut d_out2 = vec![0.0; steps * 2 * cfg.h2];
        self.layout.l3[0].backward(p, &tr.out2, &tr.l3[0], &dh3f, grads, Some(&mut d_out2));
        self.layout.l3[1].backward(p, &tr.out2, &tr.l3[1], &dh3b, grads, Some(&mut d_out2));

        let (dh2f, dh2b) = split_concat(&d_out2, cfg.h2, steps);
        let mut d_out1 = vec![0.0; steps * cfg.h1];
        self.layout.l2[0].backward(p, &tr.l1.h, &tr.l2[0], &dh2f, grads, Some(&mut d_out1));
        self.layout.l2[1].backward(p, &tr.l1.h, &tr.l2[1], &dh2b, grads, Some(&mut d_out1));

        self.layout
            .l1
            .backward(p, &tr.x, &tr.l1, &d_out1, grads, None);
    }

    fn check_batch(&self, batch: &WindowBatch, state: &RecurrentState) -> Result<(), NetError> {
        if batch.lanes() != state.lanes.len() {
            return Err(NetError::ShapeMismatch(format!(
                "batch has {} lanes, state has {}",
                batch.lanes(),
                state.lanes.len()
            )));
        }
        let ch = self.config.input_channels;
        for (w, s) in batch.windows.iter().zip(&state.lanes) {
            if w.x.len() != w.y.len() * ch || w.y.is_empty() {
                return Err(NetError::ShapeMismatch(format!(
                    "window with {} inputs and {} labels for {ch} channels",
                    w.x.len(),
                    w.y.len()
                )));
            }
            if !s.matches(&self.config) {
                return Err(NetError::ShapeMismatch(
                    "lane state does not match config".into(),
                ));
            }
        }
        Ok(())
    }

    /// Runs one window through the network from `state`, returning the
    /// per-step predictions and the state to carry into the next window.
    pub fn forward_window(
        &self,
        x: &[f64],
        state: &LaneState,
    ) -> Result<(Vec<f64>, LaneState), NetError> {
        let ch = self.config.input_channels;
        if x.is_empty() || x.len().rem_euclid(ch) != 0 || !state.matches(&self.config) {
            return Err(NetError::ShapeMismatch(format!(
                "input of length {} for {ch} channels",
                x.len()
            )));
        }
        let tr = self.forward_lane(x, state);
        let next = Self::carried(&tr);
        Ok((tr.pred, next))
    }

    /// Batched forward pass. Padded lanes predict zeros and keep their state.
    pub fn forward(
        &self,
        batch: &WindowBatch,
        state: &RecurrentState,
    ) -> Result<(Vec<Vec<f64>>, RecurrentState), NetError> {
        self.check_batch(batch, state)?;
        let mut preds = Vec::with_capacity(batch.lanes());
        let mut lanes = Vec::with_capacity(batch.lanes());
        for (w, s) in batch.windows.iter().zip(&state.lanes) {
            if w.valid {
                let tr = self.forward_lane(&w.x, s);
                lanes.push(Self::carried(&tr));
                preds.push(tr.pred);
            } else {
                lanes.push(s.clone());
                preds.push(vec![0.0; w.y.len()]);
            }
        }
        Ok((preds, RecurrentState { lanes }))
    }

    /// Forward pass, masked loss and its exact gradient by backpropagation
    /// through the window. Carried-in states are treated as constants.
    pub fn loss_and_gradients(
        &self,
        batch: &WindowBatch,
        state: &RecurrentState,
    ) -> Result<StepOutput, NetError> {
        self.check_batch(batch, state)?;
        let n_valid: usize = batch
            .windows
            .iter()
            .filter(|w| w.valid)
            .map(|w| w.y.len())
            .sum();
        let mut grads = vec![0.0; self.params.len()];
        let mut preds = Vec::with_capacity(batch.lanes());
        let mut lanes = Vec::with_capacity(batch.lanes());
        let mut sq_error = 0.0;
        for (w, s) in batch.windows.iter().zip(&state.lanes) {
            if !w.valid {
                lanes.push(s.clone());
                preds.push(vec![0.0; w.y.len()]);
                continue;
            }
            let tr = self.forward_lane(&w.x, s);
            let dpred: Vec<f64> = tr
                .pred
                .iter()
                .zip(&w.y)
                .map(|(p, y)| (p - y) / n_valid as f64)
                .collect();
            sq_error += tr
                .pred
                .iter()
                .zip(&w.y)
                .map(|(p, y)| (p - y) * (p - y))
                .sum::<f64>();
            self.backward_lane(&tr, &dpred, &mut grads);
            lanes.push(Self::carried(&tr));
            preds.push(tr.pred);
        }
        let labels: Vec<&[f64]> = batch.windows.iter().map(|w| w.y.as_slice()).collect();
        let loss = masked_mse(&preds, &labels, &batch.valid())?;
        Ok(StepOutput {
            predictions: preds,
            state: RecurrentState { lanes },
            loss,
            sq_error,
            valid_entries: n_valid,
            grads: Gradients { values: grads },
        })
    }

    pub fn backward(
        &self,
        batch: &WindowBatch,
        state: &RecurrentState,
    ) -> Result<Gradients, NetError> {
        Ok(self.loss_and_gradients(batch, state)?.grads)
    }
}
