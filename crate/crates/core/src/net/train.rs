use super::loss::masked_mse;
use super::model::SpeedModel;
use super::optim::Adam;
use super::NetError;
use crate::labels::{make_batches, DatasetSplit, LabeledWindow, WindowBatch};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// An epoch whose mean loss exceeds this multiple of the all-zero
/// predictor's loss counts as diverged even while still finite.
pub const DIVERGENCE_FACTOR: f64 = 100.0;

/// Loss of predicting zero everywhere: half the mean squared label,
/// floored at 1 so near-zero labels do not make the bound hair-trigger.
fn zero_predictor_loss(lanes: &[Vec<LabeledWindow>]) -> f64 {
    let (sum, n) = lanes
        .iter()
        .flatten()
        .filter(|w| w.valid)
        .flat_map(|w| &w.y)
        .fold((0.0, 0usize), |(s, n), y| (s + y * y, n + 1));
    (0.5 * sum / n.max(1) as f64).max(1.0)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    /// Parallel drive lanes per batch.
    pub batch_lanes: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    /// Global L2 norm above which gradients are rescaled.
    pub clip_norm: f64,
    /// Shuffles which drives share a lane group when there are more drives
    /// than lanes.
    pub seed: u64,
    /// Stop after this many epochs without a validation improvement larger
    /// than `min_delta`, keeping the best weights.
    pub patience: Option<usize>,
    pub min_delta: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 200,
            batch_lanes: 4,
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            clip_norm: 5.0,
            seed: 0,
            patience: None,
            min_delta: 0.0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), NetError> {
        let bad = |m: &str| Err(NetError::InvalidTrainConfig(m.to_string()));
        if self.epochs == 0 {
            return bad("epochs must be >= 1");
        }
        if self.batch_lanes == 0 {
            return bad("batch_lanes must be >= 1");
        }
        if !(self.learning_rate > 0.0) || !(self.epsilon > 0.0) || !(self.clip_norm > 0.0) {
            return bad("learning_rate, epsilon and clip_norm must be positive");
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return bad("beta1 and beta2 must lie in [0, 1)");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean of the per-batch halved-MSE losses.
    pub train_loss: f64,
    /// Root-mean-square error of the predictions made while training.
    pub train_rmse: f64,
    /// Root-mean-square error on the validation lanes after the epoch.
    pub val_rmse: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct History {
    pub records: Vec<EpochRecord>,
    /// Epoch whose weights were returned.
    pub best_epoch: usize,
    pub stopped_early: bool,
}

impl History {
    pub fn last(&self) -> Option<&EpochRecord> {
        self.records.last()
    }

    pub fn best(&self) -> Option<&EpochRecord> {
        self.records.iter().find(|r| r.epoch == self.best_epoch)
    }
}

/// Splits lanes into groups of at most `batch_lanes` and batches each group.
fn grouped_batches(
    lanes: &[Vec<LabeledWindow>],
    batch_lanes: usize,
    order: &[usize],
) -> Result<Vec<Vec<WindowBatch>>, NetError> {
    order
        .chunks(batch_lanes)
        .map(|group| {
            let lanes: Vec<Vec<LabeledWindow>> = group.iter().map(|&i| lanes[i].clone()).collect();
            make_batches(&lanes).map_err(|e| NetError::ShapeMismatch(e.to_string()))
        })
        .collect()
}

fn lane_order(n: usize, batch_lanes: usize, seed: u64, epoch: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    if n > batch_lanes {
        let mut rng =
            ChaCha8Rng::seed_from_u64(seed ^ (epoch as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
        order.shuffle(&mut rng);
    }
    order
}

/// Per-batch losses of a frozen model, states reset at the start.
pub fn batch_losses(
    model: &SpeedModel,
    lanes: &[Vec<LabeledWindow>],
    batch_lanes: usize,
) -> Result<Vec<f64>, NetError> {
    let order: Vec<usize> = (0..lanes.len()).collect();
    let mut losses = Vec::new();
    for group in grouped_batches(lanes, batch_lanes.max(1), &order)? {
        let mut state = model.zero_state(group[0].lanes());
        for batch in &group {
            let (pred, next) = model.forward(batch, &state)?;
            let labels: Vec<&[f64]> = batch.windows.iter().map(|w| w.y.as_slice()).collect();
            losses.push(masked_mse(&pred, &labels, &batch.valid())?);
            state = next;
        }
    }
    Ok(losses)
}

/// Streams every lane from a zero state and returns the RMSE of the
/// non-negative predictions over valid entries.
pub fn evaluate(
    model: &SpeedModel,
    lanes: &[Vec<LabeledWindow>],
    batch_lanes: usize,
) -> Result<f64, NetError> {
    let order: Vec<usize> = (0..lanes.len()).collect();
    let (mut sum, mut n) = (0.0, 0usize);
    for group in grouped_batches(lanes, batch_lanes.max(1), &order)? {
        let mut state = model.zero_state(group[0].lanes());
        for batch in &group {
            let (pred, next) = model.forward(batch, &state)?;
            for (p, w) in pred.iter().zip(&batch.windows) {
                if w.valid {
                    sum += p
                        .iter()
                        .zip(&w.y)
                        .map(|(a, b)| (a.max(0.0) - b).powi(2))
                        .sum::<f64>();
                    n += p.len();
                }
            }
            state = next;
        }
    }
    Ok(if n == 0 {
        f64::NAN
    } else {
        (sum / n as f64).sqrt()
    })
}

pub fn train(
    model: SpeedModel,
    split: &DatasetSplit,
    cfg: &TrainConfig,
) -> Result<(SpeedModel, History), NetError> {
    train_with(model, split, cfg, |_| {})
}

/// Stateful chronological training. Every epoch starts all lanes from zero
/// state and walks the batches in time order, carrying state lane-wise.
pub fn train_with(
    mut model: SpeedModel,
    split: &DatasetSplit,
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochRecord),
) -> Result<(SpeedModel, History), NetError> {
    cfg.validate()?;
    if split.train.iter().all(Vec::is_empty) {
        return Err(NetError::EmptyDataset);
    }
    let train_lanes: Vec<Vec<LabeledWindow>> = split
        .train
        .iter()
        .filter(|l| !l.is_empty())
        .cloned()
        .collect();
    let val_lanes: Vec<Vec<LabeledWindow>> = split
        .val
        .iter()
        .filter(|l| !l.is_empty())
        .cloned()
        .collect();

    let loss_bound = DIVERGENCE_FACTOR * zero_predictor_loss(&train_lanes);
    let mut adam = Adam::new(
        model.param_count(),
        cfg.learning_rate,
        cfg.beta1,
        cfg.beta2,
        cfg.epsilon,
    );
    let fixed_groups = if train_lanes.len() <= cfg.batch_lanes {
        let order: Vec<usize> = (0..train_lanes.len()).collect();
        Some(grouped_batches(&train_lanes, cfg.batch_lanes, &order)?)
    } else {
        None
    };

    let mut history = History::default();
    let mut best: Option<(f64, SpeedModel)> = None;
    let mut since_best = 0;
    for epoch in 1..=cfg.epochs {
        let shuffled;
        let groups = match &fixed_groups {
            Some(g) => g,
            None => {
                let order = lane_order(train_lanes.len(), cfg.batch_lanes, cfg.seed, epoch);
                shuffled = grouped_batches(&train_lanes, cfg.batch_lanes, &order)?;
                &shuffled
            }
        };

        let (mut loss_sum, mut batches, mut sq, mut n) = (0.0, 0usize, 0.0, 0usize);
        for group in groups {
            let mut state = model.zero_state(group[0].lanes());
            for batch in group {
                let mut out = model.loss_and_gradients(batch, &state)?;
                let norm = out.grads.norm();
                if !out.loss.is_finite() || !norm.is_finite() {
                    return Err(NetError::Diverged { epoch });
                }
                if norm > cfg.clip_norm {
                    out.grads.scale(cfg.clip_norm / norm);
                }
                adam.step(model.params_mut(), &out.grads);
                loss_sum += out.loss;
                batches += 1;
                sq += out.sq_error;
                n += out.valid_entries;
                state = out.state;
            }
        }
        if model.params().iter().any(|p| !p.is_finite()) {
            return Err(NetError::Diverged { epoch });
        }
        let train_rmse = (sq / n.max(1) as f64).sqrt();
        let val_rmse = if val_lanes.is_empty() {
            f64::NAN
        } else {
            evaluate(&model, &val_lanes, cfg.batch_lanes)?
        };
        if !train_rmse.is_finite() || val_rmse.is_infinite() {
            return Err(NetError::Diverged { epoch });
        }
        let train_loss = loss_sum / batches.max(1) as f64;
        if train_loss > loss_bound {
            return Err(NetError::Diverged { epoch });
        }
        let record = EpochRecord {
            epoch,
            train_loss,
            train_rmse,
            val_rmse,
        };
        log::info!(
            "epoch {epoch}: loss {:.4} train rmse {:.3} val rmse {:.3}",
            record.train_loss,
            train_rmse,
            val_rmse
        );
        on_epoch(&record);
        history.records.push(record);

        let score = if val_rmse.is_nan() {
            train_rmse
        } else {
            val_rmse
        };
        match &best {
            Some((b, _)) if score >= b - cfg.min_delta => since_best += 1,
            _ => {
                best = Some((score, model.clone()));
                history.best_epoch = epoch;
                since_best = 0;
            }
        }
        if let Some(p) = cfg.patience {
            if since_best >= p {
                history.stopped_early = epoch < cfg.epochs;
                break;
            }
        }
    }
    if cfg.patience.is_some() {
        if let Some((_, m)) = best {
            model = m;
        }
    } else {
        history.best_epoch = history.records.len();
    }
    Ok((model, history))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::ModelConfig;
    use std::sync::Arc;

    fn lane(n: usize, label: impl Fn(usize, usize) -> f64, seed: u64) -> Vec<LabeledWindow> {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|index| LabeledWindow {
                x: (0..120).map(|_| rng.random_range(-1.0..1.0)).collect(),
                y: (0..20).map(|t| label(index, t)).collect(),
                valid: true,
                drive_id: Arc::from("x"),
                index,
            })
            .collect()
    }

    #[test]
    fn rejects_empty_and_bad_config() {
        let m = SpeedModel::init(ModelConfig::small(2, 2, 2)).unwrap();
        let split = DatasetSplit {
            train: vec![],
            val: vec![],
            ratio: 0.85,
        };
        assert!(matches!(
            train(m.clone(), &split, &TrainConfig::default()),
            Err(NetError::EmptyDataset)
        ));
        let split = DatasetSplit {
            train: vec![lane(2, |_, _| 0.0, 0)],
            val: vec![],
            ratio: 0.85,
        };
        let cfg = TrainConfig {
            epochs: 0,
            ..TrainConfig::default()
        };
        assert!(matches!(
            train(m, &split, &cfg),
            Err(NetError::InvalidTrainConfig(_))
        ));
    }

    #[test]
    fn zero_labels_zero_head_is_exact() {
        let mut m = SpeedModel::init(ModelConfig::small(3, 3, 3)).unwrap();
        let n = m.param_count();
        m.params_mut()[n - 7..].iter_mut().for_each(|p| *p = 0.0);
        let split = DatasetSplit {
            train: vec![lane(5, |_, _| 0.0, 1), lane(3, |_, _| 0.0, 2)],
            val: vec![lane(4, |_, _| 0.0, 3)],
            ratio: 0.85,
        };
        let cfg = TrainConfig {
            epochs: 1,
            ..TrainConfig::default()
        };
        let (_, h) = train(m, &split, &cfg).unwrap();
        assert_eq!(h.records.len(), 1);
        assert_eq!(h.records[0].val_rmse, 0.0);
    }

    #[test]
    fn frozen_model_epochs_are_identical() {
        let m = SpeedModel::init(ModelConfig::small(3, 2, 2)).unwrap();
        let lanes = vec![
            lane(6, |i, t| (i + t) as f64 * 0.1, 4),
            lane(4, |_, _| 1.0, 5),
        ];
        let a = batch_losses(&m, &lanes, 4).unwrap();
        let b = batch_losses(&m, &lanes, 4).unwrap();
        assert_eq!(a.len(), 6);
        assert_eq!(a, b);
    }

    #[test]
    fn more_lanes_than_batch_width() {
        let m = SpeedModel::init(ModelConfig::small(2, 2, 2)).unwrap();
        let split = DatasetSplit {
            train: (0..5).map(|s| lane(3, |_, _| 1.0, s)).collect(),
            val: vec![lane(2, |_, _| 1.0, 9)],
            ratio: 0.85,
        };
        let cfg = TrainConfig {
            epochs: 2,
            batch_lanes: 2,
            ..TrainConfig::default()
        };
        let (_, h1) = train(m.clone(), &split, &cfg).unwrap();
        let (_, h2) = train(m, &split, &cfg).unwrap();
        assert_eq!(h1, h2);
    }

    #[test]
    fn early_stop_keeps_best() {
        let m = SpeedModel::init(ModelConfig::small(2, 2, 2)).unwrap();
        let split = DatasetSplit {
            train: vec![lane(4, |_, _| 1.0, 1)],
            val: vec![lane(2, |_, _| 5.0, 2)],
            ratio: 0.85,
        };
        let cfg = TrainConfig {
            epochs: 300,
            learning_rate: 0.05,
            patience: Some(3),
            ..TrainConfig::default()
        };
        let (model, h) = train(m, &split, &cfg).unwrap();
        assert!(h.stopped_early);
        let best = h.best().unwrap().val_rmse;
        assert!(h.records.iter().all(|r| r.val_rmse >= best));
        let again = evaluate(&model, &split.val, 4).unwrap();
        assert_eq!(again, best);
    }

    #[test]
    fn huge_step_is_reported_as_divergence() {
        let m = SpeedModel::init(ModelConfig::small(3, 3, 3)).unwrap();
        let split = DatasetSplit {
            train: vec![
                lane(30, |i, _| 5.0 + (i % 7) as f64, 3),
                lane(30, |_, t| t as f64 * 0.5, 4),
            ],
            val: vec![],
            ratio: 1.0,
        };
        let cfg = TrainConfig {
            epochs: 5,
            learning_rate: 1e3,
            ..TrainConfig::default()
        };
        assert!(matches!(
            train(m, &split, &cfg),
            Err(NetError::Diverged { .. })
        ));
    }

    #[test]
    fn zero_predictor_loss_is_half_mean_square() {
        let l = vec![lane(2, |_, _| 4.0, 5)];
        assert_eq!(zero_predictor_loss(&l), 8.0);
        assert_eq!(zero_predictor_loss(&[lane(2, |_, _| 0.0, 6)]), 1.0);
    }
}
