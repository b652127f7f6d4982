use super::model::{LaneState, SpeedModel};
use super::NetError;
use crate::types::{ImuSample, SpeedSeries};

/// Sample-by-sample predictor. A window's speeds become available once its
/// last sample arrives; recurrent state flows from window to window.
#[derive(Debug, Clone)]
pub struct SpeedStream<'m> {
    model: &'m SpeedModel,
    state: LaneState,
    buf: Vec<f64>,
    filled: usize,
}

impl<'m> SpeedStream<'m> {
    pub fn new(model: &'m SpeedModel) -> Self {
        Self::with_state(model, LaneState::zeros(model.config()))
    }

    pub fn with_state(model: &'m SpeedModel, state: LaneState) -> Self {
        let cfg = model.config();
        Self {
            model,
            state,
            buf: Vec::with_capacity(cfg.window_len * cfg.input_channels),
            filled: 0,
        }
    }

    pub fn state(&self) -> &LaneState {
        &self.state
    }

    /// Samples waiting for their window to complete.
    pub fn pending(&self) -> usize {
        self.filled
    }

    /// Feeds one gravity-compensated sample; returns the window's speeds,
    /// clamped at zero, when this sample completes it.
    pub fn push(&mut self, sample: &ImuSample) -> Option<Vec<f64>> {
        let cfg = self.model.config();
        self.buf.extend(sample.f_body.iter());
        self.buf.extend(sample.omega_body.iter());
        self.filled += 1;
        if self.filled < cfg.window_len {
            return None;
        }
        let (pred, next) = self
            .model
            .forward_window(&self.buf, &self.state)
            .expect("stream buffer matches model config");
        self.state = next;
        self.buf.clear();
        self.filled = 0;
        Some(pred.into_iter().map(|s| s.max(0.0)).collect())
    }
}

/// Speeds for every sample of the complete windows in `imu`. A trailing
/// partial window produces nothing.
pub fn predict_stream(model: &SpeedModel, imu: &[ImuSample]) -> Result<SpeedSeries, NetError> {
    let cfg = model.config();
    if cfg.input_channels != 6 {
        return Err(NetError::ShapeMismatch(format!(
            "IMU streams have 6 channels, model expects {}",
            cfg.input_channels
        )));
    }
    if imu.len() < cfg.window_len {
        return Err(NetError::StreamTooShort(imu.len()));
    }
    let mut stream = SpeedStream::new(model);
    let mut s = Vec::with_capacity(imu.len());
    for sample in imu {
        if let Some(w) = stream.push(sample) {
            s.extend(w);
        }
    }
    let t = imu[..s.len()].iter().map(|m| m.t).collect();
    Ok(SpeedSeries::new(t, s))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::ModelConfig;
    use nalgebra::Vector3;

    fn imu(n: usize) -> Vec<ImuSample> {
        (0..n)
            .map(|k| {
                let t = k as f64 * 0.01;
                ImuSample::new(
                    t,
                    Vector3::new(t.sin(), 0.1, -0.2),
                    Vector3::new(0.0, 0.0, t.cos()),
                )
            })
            .collect()
    }

    #[test]
    fn output_counts() {
        let m = SpeedModel::init(ModelConfig::small(3, 2, 2)).unwrap();
        assert_eq!(predict_stream(&m, &imu(200)).unwrap().len(), 200);
        let s = predict_stream(&m, &imu(215)).unwrap();
        assert_eq!(s.len(), 200);
        assert!(matches!(
            predict_stream(&m, &imu(19)),
            Err(NetError::StreamTooShort(19))
        ));

        let mut st = SpeedStream::new(&m);
        for x in &imu(215) {
            st.push(x);
        }
        assert_eq!(st.pending(), 15);
    }

    #[test]
    fn outputs_are_non_negative() {
        let mut m = SpeedModel::init(ModelConfig::small(3, 2, 2)).unwrap();
        m.set_dense_bias(-5.0);
        let s = predict_stream(&m, &imu(100)).unwrap();
        assert!(s.s.iter().all(|&v| v == 0.0));
    }
}
