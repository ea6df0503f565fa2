//! Audio I/O, rate conversion, STFT/iSTFT and spectrogram normalization.

mod image;
mod magspec;
mod resample;
mod stft;
mod wav;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use image::write_log_magnitude_png;
pub use magspec::{to_magspec, MagSpec};
pub use resample::{resample, ResamplerDesign};
pub use stft::{istft, stft, ComplexSpectrogram};
pub use wav::{read_wav, write_wav, write_wav_channels, write_wav_with, WavData, WavEncoding};

/// Sample rate the network operates at.
pub const PROCESSING_RATE: u32 = 8000;

/// A mono signal.
#[derive(Clone, Debug, PartialEq)]
pub struct AudioClip {
    pub samples: Vec<f32>,
    pub sample_rate: u32,
}

impl AudioClip {
    pub fn new(samples: Vec<f32>, sample_rate: u32) -> Result<Self> {
        if sample_rate == 0 {
            return Err(Error::InvalidArgument("sample rate must be positive".into()));
        }
        if samples.is_empty() {
            return Err(Error::InvalidArgument("audio clip has no samples".into()));
        }
        if let Some(i) = samples.iter().position(|s| !s.is_finite()) {
            return Err(Error::InvalidArgument(format!("non-finite sample at index {i}")));
        }
        Ok(AudioClip {
            samples,
            sample_rate,
        })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_secs(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }

    pub fn scaled(&self, gain: f32) -> AudioClip {
        AudioClip {
            samples: self.samples.iter().map(|s| s * gain).collect(),
            sample_rate: self.sample_rate,
        }
    }

    /// Truncates or zero-pads to exactly `len` samples.
    pub fn fit_to_len(mut self, len: usize) -> AudioClip {
        self.samples.resize(len, 0.0);
        self
    }

    pub fn to_f64(&self) -> Vec<f64> {
        self.samples.iter().map(|&s| s as f64).collect()
    }
}

/// STFT framing parameters. Network height is `window_size / 2`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StftConfig {
    pub window_size: usize,
    pub hop: usize,
}

impl Default for StftConfig {
    fn default() -> Self {
        StftConfig {
            window_size: 1024,
            hop: 256,
        }
    }
}

impl StftConfig {
    pub fn validate(&self) -> Result<()> {
        if self.window_size < 4 || self.window_size % 2 != 0 {
            return Err(Error::InvalidArgument(format!(
                "window size must be even and at least 4, got {}",
                self.window_size
            )));
        }
        if self.hop == 0 || self.hop > self.window_size / 2 {
            return Err(Error::InvalidArgument(format!(
                "hop must be in 1..={}, got {}",
                self.window_size / 2,
                self.hop
            )));
        }
        Ok(())
    }

    /// Analysis bins, including the Nyquist bin.
    pub fn bins(&self) -> usize {
        self.window_size / 2 + 1
    }

    /// Bins seen by the network (Nyquist excluded).
    pub fn network_bins(&self) -> usize {
        self.window_size / 2
    }

    /// Frame count for a signal of `len` samples.
    pub fn frames_for(&self, len: usize) -> usize {
        1 + len.max(self.window_size) / self.hop
    }
}
