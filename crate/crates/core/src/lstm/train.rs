use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{backward_into, forward, HeadKind, Network, DEFAULT_HIDDEN, NUM_CLASSES};
use crate::dataset::{Scaler, Target, WindowConfig, WindowedDataset};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    /// Global gradient-norm cap; `None` disables clipping.
    pub clip_norm: Option<f64>,
    pub hidden_size: usize,
}

impl TrainConfig {
    pub fn with_seed(seed: u64) -> Self {
        Self {
            learning_rate: 0.01,
            epochs: 50,
            batch_size: 32,
            seed,
            clip_norm: Some(5.0),
            hidden_size: DEFAULT_HIDDEN,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate.is_finite() && self.learning_rate >= 0.0) {
            return Err(Error::invalid(format!("learning rate {} is invalid", self.learning_rate)));
        }
        if self.epochs == 0 || self.batch_size == 0 || self.hidden_size == 0 {
            return Err(Error::invalid("epochs, batch size and hidden size must be positive"));
        }
        if let Some(c) = self.clip_norm {
            if !(c.is_finite() && c > 0.0) {
                return Err(Error::invalid(format!("clip norm {c} must be positive")));
            }
        }
        Ok(())
    }
}

/// Trained network together with what is needed to feed it raw bins.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmModel {
    pub network: Network,
    pub scaler: Scaler,
    pub window: WindowConfig,
}

impl LstmModel {
    pub fn kind(&self) -> HeadKind {
        self.network.kind()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub model: LstmModel,
    /// Mean per-window loss of each epoch, in scaled target units.
    pub loss_history: Vec<f64>,
}

/// Squared error for regression, cross-entropy for classification. The
/// gradient is taken with respect to the head's raw output.
pub fn loss_and_grad(kind: HeadKind, output: &[f64], target: Target) -> Result<(f64, Vec<f64>)> {
    match (kind, target) {
        (HeadKind::Regression, Target::Value(t)) => {
            let r = output[0] - t;
            Ok((r * r, vec![2.0 * r]))
        }
        (HeadKind::Softmax4, Target::Class(c)) if c < NUM_CLASSES => {
            let loss = -output[c].max(f64::MIN_POSITIVE).ln();
            let mut grad = output.to_vec();
            grad[c] -= 1.0;
            Ok((loss, grad))
        }
        (kind, target) => Err(Error::invalid(format!(
            "target {target:?} does not match a {kind} head"
        ))),
    }
}

/// Mini-batch gradient descent with a seeded shuffle per epoch.
pub fn train(ds: &WindowedDataset, cfg: &TrainConfig, kind: HeadKind) -> Result<TrainOutcome> {
    cfg.validate()?;
    if ds.is_empty() {
        return Err(Error::Empty("training set"));
    }
    for w in &ds.windows {
        loss_and_grad(kind, &vec![0.25; kind.output_dim()], w.target)?;
    }

    let scaler = Scaler::fit(ds)?;
    let scaled = scaler.apply(ds)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut net = Network::init_uniform(ds.input_size(), cfg.hidden_size, kind, &mut rng);
    let mut grads = Network::zeros(ds.input_size(), cfg.hidden_size, kind);

    let mut order: Vec<usize> = (0..scaled.len()).collect();
    let mut loss_history = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for (batch, idx) in order.chunks(cfg.batch_size).enumerate() {
            grads.fill(0.0);
            let mut batch_loss = 0.0;
            for &i in idx {
                let w = &scaled.windows[i];
                let (out, cache) = forward(&w.history, &net)?;
                let (loss, d_raw) = loss_and_grad(kind, &out, w.target)?;
                batch_loss += loss;
                backward_into(&cache, &net, &d_raw, &mut grads)?;
            }
            if !batch_loss.is_finite() {
                return Err(Error::Diverged { epoch, batch });
            }
            epoch_loss += batch_loss;

            grads.scale(1.0 / idx.len() as f64);
            if let Some(max_norm) = cfg.clip_norm {
                let norm = grads.l2_norm();
                if norm > max_norm {
                    grads.scale(max_norm / norm);
                }
            }
            net.add_scaled(&grads, -cfg.learning_rate);
        }
        loss_history.push(epoch_loss / scaled.len() as f64);
    }

    Ok(TrainOutcome {
        model: LstmModel {
            network: net,
            scaler,
            window: ds.config.clone(),
        },
        loss_history,
    })
}

fn check_dims(ds: &WindowedDataset, model: &LstmModel) -> Result<()> {
    for w in &ds.windows {
        if w.history.cols() != model.network.input_size() {
            return Err(Error::FeatureDimension {
                model: model.network.input_size(),
                data: w.history.cols(),
            });
        }
    }
    Ok(())
}

/// One prediction per window in original target units. Regression outputs
/// are clamped at zero; classification yields the most probable class index.
pub fn predict(ds: &WindowedDataset, model: &LstmModel) -> Result<Vec<f64>> {
    check_dims(ds, model)?;
    ds.windows
        .iter()
        .map(|w| {
            let x = model.scaler.apply_history(&w.history)?;
            let (out, _) = forward(&x, &model.network)?;
            match model.kind() {
                HeadKind::Regression => Ok(model.scaler.invert_target(out[0])?.max(0.0)),
                HeadKind::Softmax4 => Ok(argmax(&out) as f64),
            }
        })
        .collect()
}

/// Class probabilities per window for a softmax model.
pub fn predict_proba(ds: &WindowedDataset, model: &LstmModel) -> Result<Vec<Vec<f64>>> {
    if model.kind() != HeadKind::Softmax4 {
        return Err(Error::invalid("class probabilities need a softmax head"));
    }
    check_dims(ds, model)?;
    ds.windows
        .iter()
        .map(|w| {
            let x = model.scaler.apply_history(&w.history)?;
            Ok(forward(&x, &model.network)?.0)
        })
        .collect()
}

pub(crate) fn argmax(v: &[f64]) -> usize {
    v.iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |best, (i, &x)| if x > best.1 { (i, x) } else { best })
        .0
}
