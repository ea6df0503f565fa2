use num_complex::Complex;
use rustfft::FftPlanner;

use super::{AudioClip, StftConfig};
use crate::error::{Error, Result};

/// STFT coefficients stored bin-major: `data[bin * frames + frame]`.
#[derive(Clone, Debug, PartialEq)]
pub struct ComplexSpectrogram {
    pub config: StftConfig,
    pub sample_rate: u32,
    /// Number of samples of the analysed signal.
    pub length: usize,
    pub bins: usize,
    pub frames: usize,
    pub data: Vec<Complex<f32>>,
}

impl ComplexSpectrogram {
    pub fn zeros(config: StftConfig, sample_rate: u32, length: usize) -> Self {
        let bins = config.bins();
        let frames = config.frames_for(length);
        ComplexSpectrogram {
            config,
            sample_rate,
            length,
            bins,
            frames,
            data: vec![Complex::new(0.0, 0.0); bins * frames],
        }
    }

    pub fn at(&self, bin: usize, frame: usize) -> Complex<f32> {
        self.data[bin * self.frames + frame]
    }

    pub fn magnitudes(&self) -> Vec<f32> {
        self.data.iter().map(|c| c.norm()).collect()
    }

    pub fn same_grid(&self, other: &ComplexSpectrogram) -> bool {
        self.bins == other.bins && self.frames == other.frames && self.config == other.config
    }
}

/// Periodic Hann window.
pub(crate) fn hann(n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / n as f64).cos())
        .collect()
}

/// Short-time Fourier transform with a periodic Hann window.
///
/// The signal is zero-padded by half a window on both sides (and to at least
/// one window), giving `1 + max(len, window) / hop` frames.
pub fn stft(clip: &AudioClip, config: StftConfig) -> Result<ComplexSpectrogram> {
    config.validate()?;
    let n = config.window_size;
    let half = n / 2;
    let len = clip.len();
    let body = len.max(n);
    let mut padded = vec![0.0f64; body + n];
    for (dst, &s) in padded[half..half + len].iter_mut().zip(&clip.samples) {
        *dst = s as f64;
    }
    let window = hann(n);
    let mut spec = ComplexSpectrogram::zeros(config, clip.sample_rate, len);
    let frames = spec.frames;
    let fft = FftPlanner::<f64>::new().plan_fft_forward(n);
    let mut buf = vec![Complex::new(0.0, 0.0); n];
    let mut scratch = vec![Complex::new(0.0, 0.0); fft.get_inplace_scratch_len()];
    for t in 0..frames {
        let start = t * config.hop;
        for (i, b) in buf.iter_mut().enumerate() {
            *b = Complex::new(padded[start + i] * window[i], 0.0);
        }
        fft.process_with_scratch(&mut buf, &mut scratch);
        for (k, c) in buf.iter().take(spec.bins).enumerate() {
            spec.data[k * frames + t] = Complex::new(c.re as f32, c.im as f32);
        }
    }
    Ok(spec)
}

/// Weighted overlap-add inverse of [`stft`], normalized by the summed squared
/// synthesis window so that `istft(stft(x)) == x`.
pub fn istft(spec: &ComplexSpectrogram) -> Result<AudioClip> {
    let config = spec.config;
    config.validate()?;
    let n = config.window_size;
    if spec.bins != config.bins() || spec.data.len() != spec.bins * spec.frames {
        return Err(Error::shape(
            "istft",
            format!(
                "{} bins x {} frames with {} coefficients for window {n}",
                spec.bins,
                spec.frames,
                spec.data.len()
            ),
        ));
    }
    let half = n / 2;
    let total = (spec.frames - 1) * config.hop + n;
    let mut acc = vec![0.0f64; total];
    let mut norm = vec![0.0f64; total];
    let window = hann(n);
    let ifft = FftPlanner::<f64>::new().plan_fft_inverse(n);
    let mut buf = vec![Complex::new(0.0, 0.0); n];
    let mut scratch = vec![Complex::new(0.0, 0.0); ifft.get_inplace_scratch_len()];
    for t in 0..spec.frames {
        for k in 0..spec.bins {
            let c = spec.at(k, t);
            buf[k] = Complex::new(c.re as f64, c.im as f64);
        }
        // DC and Nyquist must be real for a real signal
        buf[0].im = 0.0;
        buf[half].im = 0.0;
        for k in 1..half {
            buf[n - k] = buf[k].conj();
        }
        ifft.process_with_scratch(&mut buf, &mut scratch);
        let start = t * config.hop;
        for i in 0..n {
            acc[start + i] += buf[i].re / n as f64 * window[i];
            norm[start + i] += window[i] * window[i];
        }
    }
    let samples = (half..half + spec.length)
        .map(|i| {
            let (a, w) = (acc.get(i).copied().unwrap_or(0.0), norm.get(i).copied().unwrap_or(0.0));
            if w > 1e-10 {
                (a / w) as f32
            } else {
                0.0
            }
        })
        .collect();
    AudioClip::new(samples, spec.sample_rate)
}
