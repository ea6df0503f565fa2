//! Intermediate-supervision L1 loss, excerpt sampling, Adam and the
//! training loop.

mod adam;
mod batch;
mod train;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tape, Tensor, Var};

pub use adam::{adam_step, AdamConfig, AdamState};
pub use batch::{sample_batch, stack_batch, Excerpt};
pub use train::{train, CsvLossLog, StepRecord, TrainObserver};

/// Optimization hyperparameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub lr0: f64,
    pub lr_late: f64,
    /// Fraction of `iterations` after which `lr_late` applies.
    pub decay_point: f64,
    pub batch_size: usize,
    pub iterations: u64,
    pub seed: u64,
    pub checkpoint_every: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr0: 1e-4,
            lr_late: 2e-5,
            decay_point: 0.8,
            batch_size: 4,
            iterations: 15_000,
            seed: 0,
            checkpoint_every: 1000,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.decay_point > 0.0 && self.decay_point < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "decay point must lie in (0, 1), got {}",
                self.decay_point
            )));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidArgument("batch size must be at least 1".into()));
        }
        if !(self.lr0 >= 0.0 && self.lr_late >= 0.0) {
            return Err(Error::InvalidArgument("learning rates must be non-negative".into()));
        }
        Ok(())
    }

    /// First step that uses the late learning rate.
    pub fn decay_step(&self) -> u64 {
        let b = self.decay_point * self.iterations as f64;
        // tolerate representation error in products such as 0.8 * 15000
        if (b - b.round()).abs() < 1e-9 {
            b.round() as u64
        } else {
            b.ceil() as u64
        }
    }
}

/// Step schedule: `lr0` before the decay point, `lr_late` from it on.
pub fn lr_at(step: u64, config: &TrainConfig) -> f64 {
    if step < config.decay_step() {
        config.lr0
    } else {
        config.lr_late
    }
}

/// The loss of one forward pass, kept on the tape.
pub struct LossTerms<T: Scalar> {
    pub total: Var<T>,
    /// One term per module, first to last.
    pub per_module: Vec<Var<T>>,
}

/// `sum_j sum_i || Y_i - X * M_ij ||_1` over all modules `j`, sources `i` and
/// batch items.
///
/// `mask_sets` are `[B, C, H, W]`, `mixture` is `[B, 1, H, W]` and `targets`
/// `[B, C, H, W]`. The mixture is data: it receives no gradient.
pub fn loss<T: Scalar>(
    tape: &mut Tape<T>,
    mask_sets: &[Var<T>],
    mixture: &Tensor<T>,
    targets: &Tensor<T>,
) -> Result<LossTerms<T>> {
    let [b, c, h, w] = targets.dims4()?;
    if mixture.dims4()? != [b, 1, h, w] {
        return Err(Error::shape(
            "loss",
            format!("mixture {:?} vs targets {:?}", mixture.shape(), targets.shape()),
        ));
    }
    if mask_sets.is_empty() {
        return Err(Error::InvalidArgument("no mask sets".into()));
    }
    let plane = h * w;
    let md = mixture.data();
    let tiled = Tensor::from_fn([b, c, h, w], |i| {
        let item = i / (c * plane);
        md[item * plane + i % plane]
    });
    let x = tape.constant(tiled);
    let y = tape.constant(targets.clone());
    let mut per_module = Vec::with_capacity(mask_sets.len());
    for m in mask_sets {
        let est = tape.mul(&x, m)?;
        per_module.push(tape.l1_sum(&est, &y)?);
    }
    let mut total = per_module[0].clone();
    for term in &per_module[1..] {
        total = tape.add(&total, term)?;
    }
    Ok(LossTerms { total, per_module })
}
