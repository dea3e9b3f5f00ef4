use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use log::info;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{adam_step, l1_loss, AdamState, NetConfig, QENetwork, Tensor};

use super::dataset::SampleStore;
use super::sampler::{batch_tensors, check_store, crop_sample, sample_batch, SamplerConfig, TrainingSample};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSchedule {
    pub initial_lr: f64,
    pub decay_factor: f64,
    /// Epochs between learning-rate decays.
    pub decay_every: usize,
    pub epochs: usize,
    pub batch: usize,
    pub patch: usize,
    /// Batches per epoch. `None` derives it from the store: enough patches
    /// to tile every training frame once.
    pub steps_per_epoch: Option<usize>,
    pub augment: bool,
    /// Validation crops (at most one per held-out frame).
    pub val_crops: usize,
    pub val_crop_size: usize,
    pub seed: u64,
    /// Start the intra and inter models from the trained
    /// prediction-unaware model instead of a fresh initialization.
    pub warm_start_aware: bool,
}

impl Default for TrainSchedule {
    fn default() -> Self {
        Self::paper()
    }
}

impl TrainSchedule {
    /// 500 epochs from 1e-5, halved every 100, batches of 16 64×64 patches.
    pub fn paper() -> Self {
        TrainSchedule {
            initial_lr: 1e-5,
            decay_factor: 0.5,
            decay_every: 100,
            epochs: 500,
            batch: 16,
            patch: 64,
            steps_per_epoch: None,
            augment: true,
            val_crops: 50,
            val_crop_size: 128,
            seed: 0,
            warm_start_aware: false,
        }
    }

    /// Short CPU schedule: 50 epochs, halved every 10.
    pub fn desk() -> Self {
        TrainSchedule {
            initial_lr: 1e-3,
            decay_factor: 0.5,
            decay_every: 10,
            epochs: 50,
            batch: 16,
            patch: 32,
            steps_per_epoch: Some(20),
            augment: true,
            val_crops: 50,
            val_crop_size: 128,
            seed: 0,
            warm_start_aware: true,
        }
    }

    /// Learning rate used throughout epoch `epoch` (0-based).
    pub fn lr_at(&self, epoch: usize) -> f64 {
        let decays = if self.decay_every == 0 { 0 } else { epoch / self.decay_every };
        self.initial_lr * self.decay_factor.powi(decays as i32)
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch < 2 {
            return Err(Error::Config(format!(
                "batch size must be at least 2 (batch norm statistics), got {}",
                self.batch
            )));
        }
        if self.epochs == 0 || self.patch == 0 || self.val_crop_size == 0 {
            return Err(Error::Config("epochs, patch and val_crop_size must be positive".into()));
        }
        if !(self.initial_lr > 0.0 && self.initial_lr.is_finite()) {
            return Err(Error::Config("initial_lr must be positive".into()));
        }
        if !(self.decay_factor > 0.0 && self.decay_factor <= 1.0) {
            return Err(Error::Config("decay_factor must lie in (0, 1]".into()));
        }
        if self.steps_per_epoch == Some(0) {
            return Err(Error::Config("steps_per_epoch must be positive".into()));
        }
        Ok(())
    }

    fn steps_for(&self, store: &SampleStore) -> usize {
        self.steps_per_epoch.unwrap_or_else(|| {
            let patches: usize = store
                .entries
                .iter()
                .map(|e| (e.width() / self.patch).max(1) * (e.height() / self.patch).max(1))
                .sum();
            patches.div_ceil(self.batch).max(1)
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpochLog {
    pub epoch: usize,
    pub train_l1: f64,
    pub val_l1: f64,
    pub lr: f64,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    /// Parameters from the epoch with the lowest validation loss.
    pub net: QENetwork,
    pub best_epoch: usize,
    pub curve: Vec<EpochLog>,
}

impl TrainOutcome {
    pub fn best_val(&self) -> f64 {
        self.curve[self.best_epoch].val_l1
    }
}

/// A network with its optimizer state.
pub struct Trainer {
    pub net: QENetwork,
    adam: AdamState,
}

impl Trainer {
    pub fn new(net: QENetwork) -> Self {
        let adam = AdamState::new(&net.param_sizes());
        Trainer { net, adam }
    }

    /// One Adam step on a batch; returns the batch L1 loss before the update.
    pub fn step(&mut self, input: &Tensor, target: &Tensor, lr: f64) -> Result<f32> {
        let out = self.net.forward_train(input)?;
        let (loss, grad) = l1_loss(&out, target)?;
        let grads = self.net.backward(&grad)?;
        adam_step(&mut self.net.params_mut(), &grads, &mut self.adam, lr);
        Ok(loss)
    }
}

/// Centered square crops of up to `count` frames spread evenly over `store`.
pub fn validation_crops(store: &SampleStore, count: usize, size: usize) -> Vec<TrainingSample> {
    let n = store.len();
    let take = count.min(n);
    (0..take)
        .map(|k| {
            let idx = k * n / take;
            let e = &store.entries[idx];
            let s = size.min(e.width()).min(e.height());
            crop_sample(store, idx, (e.width() - s) / 2, (e.height() - s) / 2, s)
        })
        .collect()
}

/// Mean L1 of the network (inference mode) over the crops.
pub fn evaluate(net: &QENetwork, crops: &[TrainingSample], with_pred: bool) -> Result<f64> {
    if crops.is_empty() {
        return Err(Error::Contract("no validation crops".into()));
    }
    let mut sum = 0.0;
    for c in crops {
        let (x, y) = batch_tensors(std::slice::from_ref(c), with_pred)?;
        let (l, _) = l1_loss(&net.forward(&x)?, &y)?;
        sum += l as f64;
    }
    Ok(sum / crops.len() as f64)
}

/// Trains a fresh network and returns the best-validation checkpoint.
///
/// Batches mix all qps of the store; `max_skip_fraction` filters
/// skip-dominated patches (used for the inter model).
pub fn train_model(
    train: &SampleStore,
    val: &SampleStore,
    net_cfg: NetConfig,
    schedule: &TrainSchedule,
    max_skip_fraction: Option<f64>,
) -> Result<TrainOutcome> {
    schedule.validate()?;
    let init = QENetwork::new(net_cfg, schedule.seed)?;
    train_from(init, train, val, schedule, max_skip_fraction)
}

/// Like [`train_model`], starting from the given parameters.
pub fn train_from(
    init: QENetwork,
    train: &SampleStore,
    val: &SampleStore,
    schedule: &TrainSchedule,
    max_skip_fraction: Option<f64>,
) -> Result<TrainOutcome> {
    schedule.validate()?;
    let net_cfg = init.config();
    check_store(train, schedule.patch)?;
    if val.is_empty() {
        return Err(Error::Contract("validation store is empty".into()));
    }
    let with_pred = net_cfg.in_channels == 3;
    let crops = validation_crops(val, schedule.val_crops, schedule.val_crop_size);
    let mut trainer = Trainer::new(init);
    // sampling stream is independent from the initialization stream
    let mut rng = ChaCha8Rng::seed_from_u64(schedule.seed ^ 0x5eed_5a3b_1e5d_0001);
    let sampler = SamplerConfig {
        patch: schedule.patch,
        augment: schedule.augment,
        max_skip_fraction,
    };
    let steps = schedule.steps_for(train);
    let mut curve = Vec::with_capacity(schedule.epochs);
    let mut best: Option<(usize, f64, QENetwork)> = None;
    for epoch in 0..schedule.epochs {
        let lr = schedule.lr_at(epoch);
        let mut total = 0.0;
        for _ in 0..steps {
            let batch = sample_batch(train, schedule.batch, &sampler, &mut rng)?;
            let (x, y) = batch_tensors(&batch, with_pred)?;
            total += trainer.step(&x, &y, lr)? as f64;
        }
        let val_l1 = evaluate(&trainer.net, &crops, with_pred)?;
        let log = EpochLog {
            epoch,
            train_l1: total / steps as f64,
            val_l1,
            lr,
        };
        info!(
            "epoch {epoch}: train L1 {:.6} val L1 {:.6} lr {lr:e}",
            log.train_l1, log.val_l1
        );
        curve.push(log);
        if best.as_ref().is_none_or(|b| val_l1 < b.1) {
            best = Some((epoch, val_l1, trainer.net.clone()));
        }
    }
    let (best_epoch, _, net) = best.expect("at least one epoch");
    Ok(TrainOutcome { net, best_epoch, curve })
}

pub fn loss_curve_csv(curve: &[EpochLog]) -> String {
    let mut s = String::from("epoch,train_l1,val_l1,lr\n");
    for e in curve {
        let _ = writeln!(s, "{},{},{},{}", e.epoch, e.train_l1, e.val_l1, e.lr);
    }
    s
}

pub fn write_loss_curve(curve: &[EpochLog], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, loss_curve_csv(curve)).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schedule_arithmetic() {
        let s = TrainSchedule::paper();
        assert_eq!(s.lr_at(0), 1e-5);
        assert_eq!(s.lr_at(99), 1e-5);
        assert_eq!(s.lr_at(100), 5e-6);
        assert!((s.lr_at(250) - 2.5e-6).abs() < 1e-18);
        assert_eq!((s.epochs, s.batch, s.patch), (500, 16, 64));
        let d = TrainSchedule::desk();
        assert_eq!((d.epochs, d.decay_every), (50, 10));
    }

    #[test]
    fn batch_of_one_rejected() {
        let s = TrainSchedule {
            batch: 1,
            ..TrainSchedule::desk()
        };
        assert!(matches!(s.validate(), Err(Error::Config(_))));
    }

    #[test]
    fn csv_layout() {
        let csv = loss_curve_csv(&[EpochLog {
            epoch: 0,
            train_l1: 0.5,
            val_l1: 0.25,
            lr: 0.001,
        }]);
        assert_eq!(csv, "epoch,train_l1,val_l1,lr\n0,0.5,0.25,0.001\n");
    }
}
