//! Deterministic synthetic material for smoke tests, benchmarks and
//! fixtures: a harmonic "voice" over band-limited noise "accompaniment".

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use num_complex::Complex;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rustfft::FftPlanner;

use super::{ClipRecord, Task};
use crate::dsp::{write_wav_channels, AudioClip, WavEncoding};
use crate::error::{Error, Result};

/// Gaussian noise restricted to `lo_hz..hi_hz` (brick-wall in the DFT
/// domain), scaled to the given RMS.
pub fn band_limited_noise(len: usize, rate: u32, lo_hz: f64, hi_hz: f64, rms: f64, seed: u64) -> Result<AudioClip> {
    let nyquist = rate as f64 / 2.0;
    if len == 0 || !(0.0 <= lo_hz && lo_hz < hi_hz && hi_hz <= nyquist) {
        return Err(Error::InvalidArgument(format!(
            "noise band {lo_hz}..{hi_hz} Hz of {len} samples at {rate} Hz"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut buf: Vec<Complex<f64>> = (0..len)
        .map(|_| Complex::new(rng.sample::<f64, _>(StandardNormal), 0.0))
        .collect();
    let mut planner = FftPlanner::new();
    planner.plan_fft_forward(len).process(&mut buf);
    for (k, c) in buf.iter_mut().enumerate() {
        let f = k.min(len - k) as f64 * rate as f64 / len as f64;
        if f < lo_hz || f > hi_hz {
            *c = Complex::new(0.0, 0.0);
        }
    }
    planner.plan_fft_inverse(len).process(&mut buf);
    let energy = buf.iter().map(|c| c.re * c.re).sum::<f64>() / len as f64;
    let gain = if energy > 0.0 { rms / energy.sqrt() } else { 0.0 };
    AudioClip::new(buf.iter().map(|c| (c.re * gain) as f32).collect(), rate)
}

/// Harmonic tone on `f0` with `1/k` partial amplitudes (partials above
/// Nyquist dropped), a slow tremolo and the given peak amplitude.
pub fn harmonic_tone(len: usize, rate: u32, f0: f64, partials: usize, peak: f64) -> Result<AudioClip> {
    if len == 0 || f0 <= 0.0 || partials == 0 {
        return Err(Error::InvalidArgument(format!(
            "tone of {len} samples at f0 {f0} Hz with {partials} partials"
        )));
    }
    let fs = rate as f64;
    let raw: Vec<f64> = (0..len)
        .map(|n| {
            let t = n as f64 / fs;
            let tremolo = 0.75 + 0.25 * (2.0 * PI * 2.0 * t).sin();
            let sum: f64 = (1..=partials)
                .map(|k| k as f64 * f0)
                .take_while(|&f| f < fs / 2.0)
                .enumerate()
                .map(|(i, f)| (2.0 * PI * f * t).sin() / (i + 1) as f64)
                .sum();
            tremolo * sum
        })
        .collect();
    let max = raw.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let gain = if max > 0.0 { peak / max } else { 0.0 };
    AudioClip::new(raw.iter().map(|v| (v * gain) as f32).collect(), rate)
}

/// A two-source clip: a harmonic voice (pitch varied by `seed`) over noise
/// in 1.5–3.5 kHz (or the upper band available at low rates).
pub fn voice_over_noise(id: &str, len: usize, rate: u32, seed: u64) -> Result<ClipRecord> {
    let f0 = 180.0 + 40.0 * (seed % 5) as f64;
    let voice = harmonic_tone(len, rate, f0, 6, 0.4)?;
    let nyquist = rate as f64 / 2.0;
    let (lo, hi) = (1500.0f64.min(0.35 * nyquist), 3500.0f64.min(0.9 * nyquist));
    let noise = band_limited_noise(len, rate, lo, hi, 0.1, seed)?;
    ClipRecord::from_sources(id, Vec::new(), Task::Voice.source_names(), vec![voice, noise])
}

/// Writes `count` MIR-1K-style stereo clips (accompaniment left, voice
/// right) of `len` samples. The first clip belongs to the training singer
/// `abjones`, the rest to `annar`. Returns the written paths.
pub fn write_mir1k_fixture(dir: impl AsRef<Path>, count: usize, train: usize, len: usize, rate: u32) -> Result<Vec<PathBuf>> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    (0..count)
        .map(|i| {
            let singer = if i < train { "abjones" } else { "annar" };
            let id = format!("{singer}_{}_{:02}", 1 + i / 10, 1 + i % 10);
            let rec = voice_over_noise(&id, len, rate, i as u64)?;
            let path = dir.join(format!("{id}.wav"));
            let (voice, accomp) = (&rec.sources[0].samples, &rec.sources[1].samples);
            write_wav_channels(&path, &[accomp, voice], rate, WavEncoding::Float32)?;
            Ok(path)
        })
        .collect()
}
