use std::fs::{File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{adam_step, loss, lr_at, sample_batch, stack_batch, AdamConfig, AdamState, TrainConfig};
use crate::datasets::PreparedClip;
use crate::error::{Error, Result};
use crate::model::{forward, Checkpoint};
use crate::tensor::{Tape, Tensor};

/// Losses of one completed optimization step.
#[derive(Clone, Debug, PartialEq)]
pub struct StepRecord {
    /// 1-based index of the completed step.
    pub step: u64,
    pub lr: f64,
    pub total: f64,
    /// Loss term of each module, first to last.
    pub per_module: Vec<f64>,
}

/// Receives progress from [`train`]. Returning an error stops training.
pub trait TrainObserver {
    fn on_step(&mut self, _record: &StepRecord) -> Result<()> {
        Ok(())
    }

    /// Called at the checkpoint cadence, at completion, and with the last
    /// good state before a numeric failure is reported.
    fn on_checkpoint(&mut self, _checkpoint: &Checkpoint) -> Result<()> {
        Ok(())
    }
}

impl TrainObserver for () {}

impl TrainObserver for Vec<StepRecord> {
    fn on_step(&mut self, record: &StepRecord) -> Result<()> {
        self.push(record.clone());
        Ok(())
    }
}

fn check_clips(clips: &[PreparedClip], ckpt: &Checkpoint) -> Result<()> {
    if clips.is_empty() {
        return Err(Error::Dataset("training set is empty".into()));
    }
    let net = &ckpt.network;
    for c in clips {
        if c.bins() != net.input_height || c.num_sources() != net.num_sources {
            return Err(Error::Dataset(format!(
                "clip `{}` has {} bins and {} sources; the network expects {} and {}",
                c.id,
                c.bins(),
                c.num_sources(),
                net.input_height,
                net.num_sources
            )));
        }
    }
    Ok(())
}

/// Runs optimization from `start.step` up to `config.iterations`.
///
/// Each step draws its batch from a generator keyed by `(seed, step)`, so a
/// resumed run replays exactly the batches an uninterrupted run would see.
pub fn train(
    clips: &[PreparedClip],
    start: Checkpoint,
    config: &TrainConfig,
    observer: &mut dyn TrainObserver,
) -> Result<Checkpoint> {
    config.validate()?;
    start.validate()?;
    check_clips(clips, &start)?;
    let mut ckpt = start;
    if ckpt.optimizer.is_none() {
        ckpt.optimizer = Some(AdamState::new(&ckpt.params));
    }
    let adam = AdamConfig::default();
    let width = ckpt.network.input_width;

    while ckpt.step < config.iterations {
        let step = ckpt.step;
        let lr = lr_at(step, config);
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        rng.set_stream(step);
        let batch = sample_batch(clips, config.batch_size, width, &mut rng)?;
        let (x, y) = stack_batch(&batch)?;

        let (record, grads) = {
            let mut tape = Tape::new();
            let bound = ckpt.params.bind(&mut tape);
            let input = tape.constant(x.clone());
            let masks = forward(&mut tape, &ckpt.network, &bound, &input)?;
            let terms = loss(&mut tape, &masks, &x, &y)?;
            let record = StepRecord {
                step: step + 1,
                lr,
                total: terms.total.value().item()? as f64,
                per_module: terms
                    .per_module
                    .iter()
                    .map(|v| v.value().item().map(f64::from))
                    .collect::<Result<_>>()?,
            };
            if !record.total.is_finite() {
                observer.on_checkpoint(&ckpt)?;
                return Err(Error::NonFiniteLoss { step: step + 1 });
            }
            let g = tape.backward(&terms.total)?;
            let grads: Vec<Tensor<f32>> = bound.vars().iter().map(|v| g.wrt(v)).collect();
            (record, grads)
        };

        let state = ckpt.optimizer.as_mut().expect("initialized above");
        if let Err(e) = adam_step(&mut ckpt.params, &grads, state, lr, &adam) {
            observer.on_checkpoint(&ckpt)?;
            return Err(e);
        }
        ckpt.step = step + 1;
        observer.on_step(&record)?;
        let due = config.checkpoint_every > 0 && ckpt.step % config.checkpoint_every == 0;
        if due || ckpt.step == config.iterations {
            observer.on_checkpoint(&ckpt)?;
        }
    }
    Ok(ckpt)
}

/// Append-only CSV of `step,lr,total_loss,loss_module_1..D`.
pub struct CsvLossLog {
    path: PathBuf,
    out: BufWriter<File>,
}

impl CsvLossLog {
    /// Opens `path` for appending, writing the header if the file is new or
    /// empty.
    pub fn open(path: impl AsRef<Path>, num_modules: usize) -> Result<Self> {
        let path = path.as_ref().to_path_buf();
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&path)
            .map_err(|e| Error::io(&path, e))?;
        let empty = file.metadata().map_err(|e| Error::io(&path, e))?.len() == 0;
        let mut log = CsvLossLog {
            out: BufWriter::new(file),
            path,
        };
        if empty {
            let mut header = String::from("step,lr,total_loss");
            for j in 1..=num_modules {
                header.push_str(&format!(",loss_module_{j}"));
            }
            log.line(&header)?;
        }
        Ok(log)
    }

    fn line(&mut self, text: &str) -> Result<()> {
        writeln!(self.out, "{text}")
            .and_then(|_| self.out.flush())
            .map_err(|e| Error::io(&self.path, e))
    }

    pub fn record(&mut self, r: &StepRecord) -> Result<()> {
        let mut text = format!("{},{},{}", r.step, r.lr, r.total);
        for v in &r.per_module {
            text.push_str(&format!(",{v}"));
        }
        self.line(&text)
    }
}

impl TrainObserver for CsvLossLog {
    fn on_step(&mut self, record: &StepRecord) -> Result<()> {
        self.record(record)
    }
}
