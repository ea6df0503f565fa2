//! Run configuration: built-in defaults, overridden by a flat TOML file,
//! overridden by command-line flags. File keys and flag names are identical.

use std::fmt;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::{Args, ValueEnum};
use hgsep_core::datasets::{Channel, Task};
use hgsep_core::inference::SeparationConfig;
use hgsep_core::{NetworkConfig, StftConfig, TrainConfig};
use serde::{Deserialize, Serialize};

/// Environment variable naming the spectrogram cache directory.
pub const CACHE_DIR_ENV: &str = "HGSEP_CACHE_DIR";

/// A problem with how the program was invoked (exit code 1).
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

pub fn usage(message: impl Into<String>) -> anyhow::Error {
    UsageError(message.into()).into()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Dataset {
    /// Stereo clips, one channel voice and one accompaniment.
    Mir1k,
    /// `Sources/{Dev,Test}/<song>/<stem>.wav`.
    Dsd100,
}

/// Every configurable setting. Each field is both a `--flag` and a key of
/// the `--config` file.
#[derive(Clone, Debug, Default, Args, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct Overrides {
    /// Separation task: `voice` or `4source` [default: voice]
    #[arg(long)]
    pub task: Option<Task>,
    /// Corpus layout [default: mir1k]
    #[arg(long, value_enum)]
    pub dataset: Option<Dataset>,
    /// Corpus root directory
    #[arg(long)]
    pub data_root: Option<PathBuf>,
    /// MIR-1K channel holding the voice: `left` or `right` [default: right]
    #[arg(long)]
    pub mir1k_voice_channel: Option<Channel>,
    /// Number of stacked hourglass modules [default: 4]
    #[arg(long)]
    pub stacks: Option<usize>,
    /// Trunk width; the stem scales with it [default: 256]
    #[arg(long)]
    pub channels: Option<usize>,
    /// STFT window length in samples [default: 1024]
    #[arg(long)]
    pub window_size: Option<usize>,
    /// STFT hop in samples [default: 256]
    #[arg(long)]
    pub hop: Option<usize>,
    /// Processing sample rate in Hz [default: 8000]
    #[arg(long)]
    pub sample_rate: Option<u32>,
    /// Network input width in frames [default: 64]
    #[arg(long)]
    pub width: Option<usize>,
    /// Initial learning rate [default: 0.0001]
    #[arg(long)]
    pub lr: Option<f64>,
    /// Learning rate after the decay point [default: 0.00002]
    #[arg(long)]
    pub lr_late: Option<f64>,
    /// Fraction of the iterations after which `lr-late` applies [default: 0.8]
    #[arg(long)]
    pub decay_point: Option<f64>,
    /// Excerpts per optimization step [default: 4]
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// Total optimization steps [default: 15000]
    #[arg(long)]
    pub iterations: Option<u64>,
    /// Seed of initialization and batch sampling [default: 0]
    #[arg(long)]
    pub seed: Option<u64>,
    /// Steps between checkpoints [default: 1000]
    #[arg(long)]
    pub checkpoint_every: Option<u64>,
    /// Output directory [default: hgsep-run]
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
    /// Spectrogram cache directory [default: $HGSEP_CACHE_DIR, else none]
    #[arg(long)]
    pub cache_dir: Option<PathBuf>,
    /// Worker threads, 0 for all cores [default: 0]
    #[arg(long)]
    pub threads: Option<usize>,
    /// Distortion filter taps of the evaluation metrics [default: 512]
    #[arg(long)]
    pub filter_len: Option<usize>,
}

macro_rules! overlay {
    ($dst:expr, $src:expr, $($field:ident),+) => {
        $( if let Some(v) = $src.$field.clone() { $dst.$field = v.into(); } )+
    };
}

/// The effective configuration of a run.
#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub struct RunConfig {
    pub task: Task,
    pub dataset: Dataset,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub data_root: Option<PathBuf>,
    pub mir1k_voice_channel: Channel,
    pub stacks: usize,
    pub channels: usize,
    pub window_size: usize,
    pub hop: usize,
    pub sample_rate: u32,
    pub width: usize,
    pub lr: f64,
    pub lr_late: f64,
    pub decay_point: f64,
    pub batch_size: usize,
    pub iterations: u64,
    pub seed: u64,
    pub checkpoint_every: u64,
    pub out_dir: PathBuf,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cache_dir: Option<PathBuf>,
    pub threads: usize,
    pub filter_len: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        let train = TrainConfig::default();
        let stft = StftConfig::default();
        let net = NetworkConfig::default();
        RunConfig {
            task: Task::Voice,
            dataset: Dataset::Mir1k,
            data_root: None,
            mir1k_voice_channel: Channel::Right,
            stacks: net.num_stacks,
            channels: net.trunk_channels,
            window_size: stft.window_size,
            hop: stft.hop,
            sample_rate: hgsep_core::dsp::PROCESSING_RATE,
            width: net.input_width,
            lr: train.lr0,
            lr_late: train.lr_late,
            decay_point: train.decay_point,
            batch_size: train.batch_size,
            iterations: train.iterations,
            seed: train.seed,
            checkpoint_every: train.checkpoint_every,
            out_dir: PathBuf::from("hgsep-run"),
            cache_dir: None,
            threads: 0,
            filter_len: 512,
        }
    }
}

impl RunConfig {
    /// Defaults, then the optional config file, then `flags`; the cache
    /// directory finally falls back to the environment.
    pub fn resolve(file: Option<&Path>, flags: &Overrides) -> Result<Self> {
        let mut cfg = RunConfig::default();
        if let Some(path) = file {
            let text = std::fs::read_to_string(path)
                .with_context(|| format!("reading config {}", path.display()))?;
            let from_file: Overrides = toml::from_str(&text)
                .map_err(|e| usage(format!("invalid config {}: {e}", path.display())))?;
            cfg.apply(&from_file);
        }
        cfg.apply(flags);
        if cfg.cache_dir.is_none() {
            cfg.cache_dir = std::env::var_os(CACHE_DIR_ENV).filter(|v| !v.is_empty()).map(PathBuf::from);
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn apply(&mut self, o: &Overrides) {
        overlay!(
            self, o, task, dataset, mir1k_voice_channel, stacks, channels, window_size, hop, sample_rate,
            width, lr, lr_late, decay_point, batch_size, iterations, seed, checkpoint_every, out_dir, threads,
            filter_len
        );
        if o.data_root.is_some() {
            self.data_root = o.data_root.clone();
        }
        if o.cache_dir.is_some() {
            self.cache_dir = o.cache_dir.clone();
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.stft().validate().map_err(|e| usage(e.to_string()))?;
        self.network().validate().map_err(|e| usage(e.to_string()))?;
        self.train().validate().map_err(|e| usage(e.to_string()))?;
        if self.sample_rate == 0 {
            return Err(usage("sample-rate must be positive"));
        }
        if self.filter_len == 0 {
            return Err(usage("filter-len must be at least 1"));
        }
        Ok(())
    }

    pub fn data_root(&self) -> Result<&Path> {
        self.data_root
            .as_deref()
            .ok_or_else(|| usage("no dataset given: pass --data-root or set `data-root` in the config"))
    }

    pub fn stft(&self) -> StftConfig {
        StftConfig {
            window_size: self.window_size,
            hop: self.hop,
        }
    }

    pub fn network(&self) -> NetworkConfig {
        NetworkConfig {
            input_height: self.window_size / 2,
            input_width: self.width,
            ..NetworkConfig::with_width(self.stacks, self.task.num_sources(), self.channels)
        }
    }

    pub fn train(&self) -> TrainConfig {
        TrainConfig {
            lr0: self.lr,
            lr_late: self.lr_late,
            decay_point: self.decay_point,
            batch_size: self.batch_size,
            iterations: self.iterations,
            seed: self.seed,
            checkpoint_every: self.checkpoint_every,
        }
    }

    pub fn separation(&self) -> SeparationConfig {
        SeparationConfig {
            stft: self.stft(),
            processing_rate: self.sample_rate,
            chunk_width: self.width,
        }
    }

    pub fn to_table(&self) -> toml::Table {
        toml::Table::try_from(self).expect("run config serializes to a table")
    }
}
