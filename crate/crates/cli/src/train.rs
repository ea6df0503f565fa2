//! `hgsep train`.

use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{Context, Result};
use hgsep_core::datasets::{load_dsd100, load_mir1k, prepare_clip, ClipRecord, Split};
use hgsep_core::training::{train, CsvLossLog, StepRecord, TrainObserver};
use hgsep_core::{Checkpoint, Params, PreparedClip};
use log::info;
use rayon::prelude::*;

use crate::config::{Dataset, RunConfig};

/// Loads one split of the configured corpus.
pub fn load_split(cfg: &RunConfig, split: Split) -> Result<Vec<ClipRecord>> {
    let root = cfg.data_root()?;
    let records = match cfg.dataset {
        Dataset::Mir1k => load_mir1k(root, split, cfg.mir1k_voice_channel)?,
        Dataset::Dsd100 => load_dsd100(root, split, cfg.task)?,
    };
    let names = cfg.task.source_names();
    if let Some(r) = records.iter().find(|r| r.source_names != names) {
        return Err(crate::config::usage(format!(
            "clip `{}` has sources {:?} but task `{}` needs {:?}",
            r.id, r.source_names, cfg.task, names
        )));
    }
    Ok(records)
}

/// Writes the `step-XXXXXXXX.ckpt` / `latest.ckpt` pair and the loss log.
struct RunObserver {
    out_dir: PathBuf,
    log: CsvLossLog,
    total: u64,
    started: Instant,
    steps_run: u64,
}

impl TrainObserver for RunObserver {
    fn on_step(&mut self, r: &StepRecord) -> hgsep_core::Result<()> {
        self.log.record(r)?;
        self.steps_run += 1;
        if r.step % 100 == 0 || r.step == self.total {
            let per_step = self.started.elapsed().as_secs_f64() / self.steps_run as f64;
            info!("step {}/{}  loss {:.5}  lr {:e}  ({per_step:.3} s/step)", r.step, self.total, r.total, r.lr);
        }
        Ok(())
    }

    fn on_checkpoint(&mut self, ckpt: &Checkpoint) -> hgsep_core::Result<()> {
        let path = self.out_dir.join(format!("step-{:08}.ckpt", ckpt.step));
        ckpt.save(&path)?;
        ckpt.save(self.out_dir.join("latest.ckpt"))?;
        info!("saved {}", path.display());
        Ok(())
    }
}

fn start_checkpoint(cfg: &RunConfig, resume: Option<&Path>) -> Result<Checkpoint> {
    if let Some(path) = resume {
        let ckpt = Checkpoint::load(path).with_context(|| format!("loading {}", path.display()))?;
        info!("resuming {} at step {}", path.display(), ckpt.step);
        return Ok(ckpt);
    }
    let network = cfg.network();
    let params = Params::init(&network, cfg.seed)?;
    info!("new network: {} stacks, {} parameters", network.num_stacks, params.num_scalars());
    Ok(Checkpoint {
        stft: cfg.stft(),
        sample_rate: cfg.sample_rate,
        source_names: cfg.task.source_names(),
        step: 0,
        params,
        optimizer: None,
        run_config: cfg.to_table(),
        network,
    })
}

pub fn run(cfg: &RunConfig, resume: Option<&Path>) -> Result<()> {
    let ckpt = start_checkpoint(cfg, resume)?;
    let records = load_split(cfg, Split::Train)?;
    info!("{} training clips", records.len());
    let cache = cfg.cache_dir.as_deref();
    if let Some(dir) = cache {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    let clips: Vec<PreparedClip> = records
        .par_iter()
        .map(|r| prepare_clip(r, ckpt.stft, ckpt.sample_rate, cache))
        .collect::<hgsep_core::Result<_>>()?;

    std::fs::create_dir_all(&cfg.out_dir).with_context(|| format!("creating {}", cfg.out_dir.display()))?;
    let archived = toml::to_string(cfg).context("serializing the run configuration")?;
    std::fs::write(cfg.out_dir.join("run.toml"), archived).context("writing run.toml")?;
    let mut observer = RunObserver {
        log: CsvLossLog::open(cfg.out_dir.join("loss.csv"), ckpt.network.num_stacks)?,
        out_dir: cfg.out_dir.clone(),
        total: cfg.iterations,
        started: Instant::now(),
        steps_run: 0,
    };
    let done = train(&clips, ckpt, &cfg.train(), &mut observer)?;
    info!("finished at step {}", done.step);
    Ok(())
}
