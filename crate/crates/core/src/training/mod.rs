//! Dataset assembly, patch sampling and the training loop that produces the
//! intra, inter and prediction-unaware models.

pub mod dataset;
pub mod sampler;
pub mod trainer;

use serde::{Deserialize, Serialize};

pub use dataset::{
    generate_dataset, load_dataset, save_dataset, CodingType, Dataset, DatasetConfig, FrameEntry, SampleStore,
    DATASET_MANIFEST,
};
pub use sampler::{batch_tensors, sample_batch, Augment, SamplerConfig, TrainingSample};
pub use trainer::{
    evaluate, loss_curve_csv, train_from, train_model, validation_crops, write_loss_curve, EpochLog, TrainOutcome, TrainSchedule,
    Trainer,
};

use crate::enhance::ModelTriple;
use crate::error::Result;
use crate::nn::{NetConfig, QENetwork};

/// Patches of inter frames with more skip pixels than this are redrawn when
/// training the inter model.
pub const INTER_SKIP_LIMIT: f64 = 0.5;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Profile {
    Paper,
    Desk,
}

impl Profile {
    pub fn net(self, in_channels: usize) -> NetConfig {
        match self {
            Profile::Paper => NetConfig::paper(in_channels),
            Profile::Desk => NetConfig::desk(in_channels),
        }
    }

    pub fn schedule(self) -> TrainSchedule {
        match self {
            Profile::Paper => TrainSchedule::paper(),
            Profile::Desk => TrainSchedule::desk(),
        }
    }
}

pub struct TripleOutcome {
    pub models: ModelTriple,
    pub intra: Vec<EpochLog>,
    pub inter: Vec<EpochLog>,
    pub unaware: Vec<EpochLog>,
}

/// Trains the prediction-unaware model on all frames, the intra model on
/// I-frames and the inter model on B-frames (skip-dominated patches
/// redrawn). Each model gets its own seed derived from `schedule.seed`.
/// With `warm_start_aware`, the intra and inter models start from the
/// unaware model with a zero-weighted prediction input.
pub fn train_triple(train: &Dataset, val: &Dataset, profile: Profile, schedule: &TrainSchedule) -> Result<TripleOutcome> {
    let seeded = |k: u64| TrainSchedule {
        seed: schedule.seed.wrapping_add(k),
        ..schedule.clone()
    };
    let unaware = train_model(&train.all(), &val.all(), profile.net(2), &seeded(2), None)?;
    let init = |k: u64| -> Result<QENetwork> {
        if schedule.warm_start_aware {
            unaware.net.with_prediction_input()
        } else {
            QENetwork::new(profile.net(3), schedule.seed.wrapping_add(k))
        }
    };
    let intra = train_from(init(0)?, &train.intra, &val.intra, &seeded(0), None)?;
    let inter = train_from(init(1)?, &train.inter, &val.inter, &seeded(1), Some(INTER_SKIP_LIMIT))?;
    Ok(TripleOutcome {
        models: ModelTriple::new(intra.net, inter.net, unaware.net)?,
        intra: intra.curve,
        inter: inter.curve,
        unaware: unaware.curve,
    })
}
