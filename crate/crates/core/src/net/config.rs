use super::lstm::LstmDir;
use super::NetError;

/// Layer widths of the regressor: one LSTM of width `h1`, two
/// bidirectional LSTMs of `h2` and `h3` units per direction, and a dense
/// head mapping the final `2·h3` features to one speed per step.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ModelConfig {
    pub h1: usize,
    pub h2: usize,
    pub h3: usize,
    pub input_channels: usize,
    pub window_len: usize,
    pub seed: u64,
}

impl Default for ModelConfig {
    /// 12,889 parameters with single-bias cells.
    fn default() -> Self {
        Self {
            h1: 19,
            h2: 16,
            h3: 16,
            input_channels: 6,
            window_len: 20,
            seed: 0,
        }
    }
}

/// Trainable values in one LSTM direction: four gates, each with input
/// weights, recurrent weights and a bias.
pub const fn lstm_param_count(input: usize, hidden: usize) -> usize {
    4 * hidden * (input + hidden + 1)
}

impl ModelConfig {
    pub fn small(h1: usize, h2: usize, h3: usize) -> Self {
        Self {
            h1,
            h2,
            h3,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), NetError> {
        let sizes = [
            ("h1", self.h1),
            ("h2", self.h2),
            ("h3", self.h3),
            ("input_channels", self.input_channels),
            ("window_len", self.window_len),
        ];
        for (name, v) in sizes {
            if v == 0 {
                return Err(NetError::InvalidConfig(format!("{name} must be >= 1")));
            }
        }
        Ok(())
    }

    pub fn param_count(&self) -> usize {
        lstm_param_count(self.input_channels, self.h1)
            + 2 * lstm_param_count(self.h1, self.h2)
            + 2 * lstm_param_count(2 * self.h2, self.h3)
            + 2 * self.h3
            + 1
    }

    pub(crate) fn layout(&self) -> Layout {
        let mut offset = 0;
        let mut dir = |input, hidden| {
            let d = LstmDir {
                input,
                hidden,
                offset,
            };
            offset += d.n_params();
            d
        };
        let l1 = dir(self.input_channels, self.h1);
        let l2f = dir(self.h1, self.h2);
        let l2b = dir(self.h1, self.h2);
        let l3f = dir(2 * self.h2, self.h3);
        let l3b = dir(2 * self.h2, self.h3);
        let dense_w = offset;
        let dense_b = dense_w + 2 * self.h3;
        Layout {
            l1,
            l2: [l2f, l2b],
            l3: [l3f, l3b],
            dense_w,
            dense_b,
            total: dense_b + 1,
        }
    }
}

/// Offsets of every block in the flat parameter vector, in declaration
/// order: L1, L2 forward, L2 backward, L3 forward, L3 backward, dense
/// weights, dense bias.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct Layout {
    pub l1: LstmDir,
    pub l2: [LstmDir; 2],
    pub l3: [LstmDir; 2],
    pub dense_w: usize,
    pub dense_b: usize,
    pub total: usize,
}
