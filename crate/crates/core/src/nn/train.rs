use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::arch::NetworkArch;
use super::model::{init_params, NetworkModel};
use crate::dataset::{StandardizedSample, VariantTag};
use crate::error::{Error, Result};
use crate::seed::stage_seed;

pub const DEFAULT_MAX_EPOCHS: usize = 100;
pub const DEFAULT_PATIENCE: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Epochs without strict validation improvement before stopping.
    pub patience: usize,
    pub seed: u64,
}

impl TrainConfig {
    pub fn new(learning_rate: f64, batch_size: usize, seed: u64) -> Self {
        Self {
            learning_rate,
            batch_size,
            max_epochs: DEFAULT_MAX_EPOCHS,
            patience: DEFAULT_PATIENCE,
            seed,
        }
    }

    /// Learning rate and batch size tuned for each dataset variant.
    pub fn for_variant(tag: VariantTag, seed: u64) -> Self {
        match tag {
            VariantTag::Dataset1 => Self::new(0.1, 64, seed),
            VariantTag::Dataset2 => Self::new(0.01, 32, seed),
            VariantTag::Dataset3 => Self::new(0.01, 16, seed),
            VariantTag::Dataset4 => Self::new(0.01, 256, seed),
        }
    }

    pub fn validate(&self) -> Result<()> {
        // lr = 0 is allowed: it is a useful frozen-parameter control.
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::invalid("learning rate", format!("must be >= 0, got {}", self.learning_rate)));
        }
        if self.batch_size == 0 {
            return Err(Error::invalid("batch size", "must be >= 1"));
        }
        if self.max_epochs == 0 {
            return Err(Error::invalid("max epochs", "must be >= 1"));
        }
        if self.patience == 0 {
            return Err(Error::invalid("patience", "must be >= 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochRecord {
    /// 1-based epoch number.
    pub epoch: usize,
    /// Mean of the minibatch losses seen during the epoch.
    pub train_mae: f64,
    pub val_mae: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainHistory {
    /// Validation MAE of the freshly initialised network.
    pub initial_val_mae: f64,
    pub epochs: Vec<EpochRecord>,
    /// Epoch whose parameters were returned.
    pub best_epoch: usize,
    pub stopped_early: bool,
}

impl TrainHistory {
    pub fn best_val_mae(&self) -> f64 {
        self.epochs[self.best_epoch - 1].val_mae
    }

    pub fn write_csv<W: std::io::Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "epoch,train_mae,val_mae")?;
        writeln!(w, "0,,{}", self.initial_val_mae)?;
        for e in &self.epochs {
            writeln!(w, "{},{},{}", e.epoch, e.train_mae, e.val_mae)?;
        }
        Ok(())
    }
}

/// Minibatch SGD on the MAE loss with per-epoch validation and early stopping.
///
/// Training data is reshuffled every epoch from a seeded stream. The model
/// with the lowest validation MAE is returned; ties keep the earlier epoch.
pub fn train(
    train_set: &[StandardizedSample],
    val_set: &[StandardizedSample],
    arch: &NetworkArch,
    cfg: &TrainConfig,
) -> Result<(NetworkModel, TrainHistory)> {
    cfg.validate()?;
    if train_set.is_empty() {
        return Err(Error::Empty("training set"));
    }
    if val_set.is_empty() {
        return Err(Error::Empty("validation set"));
    }
    let mut model = init_params(arch, cfg.seed);
    train_from(&mut model, train_set, val_set, cfg)
}

/// Continues training `model` in place; see [`train`].
pub fn train_from(
    model: &mut NetworkModel,
    train_set: &[StandardizedSample],
    val_set: &[StandardizedSample],
    cfg: &TrainConfig,
) -> Result<(NetworkModel, TrainHistory)> {
    cfg.validate()?;
    let initial_val_mae = model.mae(val_set)?;
    let mut rng = ChaCha8Rng::seed_from_u64(stage_seed(cfg.seed, "shuffle"));
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut batch = Vec::with_capacity(cfg.batch_size);
    let mut grad = model.zero_gradient();
    let mut ws = model.workspace_handle();

    let mut epochs = vec![];
    let mut best: Option<(usize, f64, NetworkModel)> = None;
    let mut stopped_early = false;
    for epoch in 1..=cfg.max_epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        let mut n_batches = 0;
        for chunk in order.chunks(cfg.batch_size) {
            batch.clear();
            batch.extend(chunk.iter().map(|&i| train_set[i]));
            let loss = model
                .batch_gradient(&batch, &mut grad, &mut ws)
                .map_err(|_| Error::Divergence { epoch })?;
            model.sgd_step(&grad, cfg.learning_rate);
            loss_sum += loss;
            n_batches += 1;
        }
        if !model.params_finite() {
            return Err(Error::Divergence { epoch });
        }
        let val_mae = model.mae(val_set)?;
        let train_mae = loss_sum / n_batches as f64;
        if !(val_mae.is_finite() && train_mae.is_finite()) {
            return Err(Error::Divergence { epoch });
        }
        epochs.push(EpochRecord {
            epoch,
            train_mae,
            val_mae,
        });
        match &best {
            Some((_, b, _)) if val_mae >= *b => {}
            _ => best = Some((epoch, val_mae, model.clone())),
        }
        let best_epoch = best.as_ref().map(|b| b.0).unwrap_or(0);
        if epoch - best_epoch >= cfg.patience && epoch < cfg.max_epochs {
            stopped_early = true;
            break;
        }
    }

    let (best_epoch, best_val, mut best_model) = best.expect("max_epochs >= 1");
    best_model.meta.epochs_run = epochs.len();
    best_model.meta.val_mae = Some(best_val);
    best_model.meta.seed = cfg.seed;
    let history = TrainHistory {
        initial_val_mae,
        epochs,
        best_epoch,
        stopped_early,
    };
    Ok((best_model, history))
}
