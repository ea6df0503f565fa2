//! Chunked separation of whole tracks.
//!
//! The mixture is resampled to the processing rate, transformed, normalized
//! and cut into consecutive, non-overlapping windows of the network width
//! (the last one zero-padded). Masks from the final module are clamped at
//! zero, applied to the mixture magnitude, and the estimates are rebuilt
//! with the mixture phase before returning to the original rate. The
//! Nyquist bin, which the network does not see, is scaled by the clamped
//! mask of the highest network bin.

use crate::dsp::{istft, resample, stft, to_magspec, AudioClip, MagSpec, StftConfig, PROCESSING_RATE};
use crate::error::{Error, Result};
use crate::model::{Checkpoint, Network};
use crate::tensor::Tensor;

/// Anything that turns a normalized mixture window into source masks.
pub trait MaskEstimator {
    fn num_sources(&self) -> usize;

    /// `chunk` is `[1, 1, bins, width]`; `start_frame` is its offset within
    /// the track. Returns `[1, sources, bins, width]`.
    fn estimate(&self, chunk: &Tensor<f32>, start_frame: usize) -> Result<Tensor<f32>>;
}

impl MaskEstimator for Network {
    fn num_sources(&self) -> usize {
        self.config.num_sources
    }

    fn estimate(&self, chunk: &Tensor<f32>, _start_frame: usize) -> Result<Tensor<f32>> {
        let mut sets = self.predict(chunk)?;
        Ok(sets.pop().expect("at least one module"))
    }
}

/// Returns the same value for every mask cell.
#[derive(Clone, Copy, Debug)]
pub struct ConstantMasks {
    pub sources: usize,
    pub value: f32,
}

impl MaskEstimator for ConstantMasks {
    fn num_sources(&self) -> usize {
        self.sources
    }

    fn estimate(&self, chunk: &Tensor<f32>, _start_frame: usize) -> Result<Tensor<f32>> {
        let [b, _, h, w] = chunk.dims4()?;
        Ok(Tensor::full([b, self.sources, h, w], self.value))
    }
}

/// Ideal ratio masks `|Y_i| / |X|` computed from known sources; cells where
/// the mixture is silent get mask 0.
#[derive(Clone, Debug)]
pub struct RatioMaskOracle {
    /// `[sources, bins, frames]`.
    masks: Tensor<f32>,
}

impl RatioMaskOracle {
    pub fn new(mixture: &AudioClip, sources: &[AudioClip], config: &SeparationConfig) -> Result<Self> {
        let spec = |c: &AudioClip| -> Result<_> { stft(&resample(c, config.processing_rate)?, config.stft) };
        let (mix, srcs) = to_magspec(
            &spec(mixture)?,
            &sources.iter().map(spec).collect::<Result<Vec<_>>>()?,
        )?;
        let (bins, frames) = (mix.bins(), mix.frames());
        let x = mix.magnitude.data();
        let mut data = Vec::with_capacity(srcs.len() * bins * frames);
        for s in &srcs {
            data.extend(
                s.magnitude
                    .data()
                    .iter()
                    .zip(x)
                    .map(|(&y, &x)| if x > 0.0 { y / x } else { 0.0 }),
            );
        }
        Ok(RatioMaskOracle {
            masks: Tensor::new(vec![srcs.len(), bins, frames], data)?,
        })
    }
}

impl MaskEstimator for RatioMaskOracle {
    fn num_sources(&self) -> usize {
        self.masks.shape()[0]
    }

    fn estimate(&self, chunk: &Tensor<f32>, start_frame: usize) -> Result<Tensor<f32>> {
        let [_, _, h, w] = chunk.dims4()?;
        let [c, bins, frames] = [self.masks.shape()[0], self.masks.shape()[1], self.masks.shape()[2]];
        if h != bins {
            return Err(Error::shape("RatioMaskOracle", format!("chunk height {h} vs {bins} bins")));
        }
        let md = self.masks.data();
        Ok(Tensor::from_fn([1, c, h, w], |i| {
            let (plane, col) = (i / w, i % w);
            let t = start_frame + col;
            if t < frames {
                md[plane * frames + t]
            } else {
                0.0
            }
        }))
    }
}

/// Signal-processing settings of the separation pipeline.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SeparationConfig {
    pub stft: StftConfig,
    pub processing_rate: u32,
    /// Frames per network window.
    pub chunk_width: usize,
}

impl Default for SeparationConfig {
    fn default() -> Self {
        SeparationConfig {
            stft: StftConfig::default(),
            processing_rate: PROCESSING_RATE,
            chunk_width: 64,
        }
    }
}

impl SeparationConfig {
    pub fn for_checkpoint(ckpt: &Checkpoint) -> Self {
        SeparationConfig {
            stft: ckpt.stft,
            processing_rate: ckpt.sample_rate,
            chunk_width: ckpt.network.input_width,
        }
    }
}

/// Separated sources of one track.
#[derive(Clone, Debug)]
pub struct SeparationResult {
    /// At the input sample rate and length.
    pub sources: Vec<AudioClip>,
    /// Unnormalized estimated magnitudes `[bins, frames]` at the processing
    /// rate.
    pub magnitudes: Vec<Tensor<f32>>,
    /// Unnormalized mixture magnitude `[bins, frames]`.
    pub mixture_magnitude: Tensor<f32>,
}

/// Runs `estimator` over consecutive `width`-frame windows of the normalized
/// mixture and returns masks `[sources, bins, frames]`.
pub fn estimate_masks(estimator: &dyn MaskEstimator, mix: &MagSpec, width: usize) -> Result<Tensor<f32>> {
    if width == 0 {
        return Err(Error::InvalidArgument("chunk width must be positive".into()));
    }
    let (bins, frames) = (mix.bins(), mix.frames());
    let c = estimator.num_sources();
    let x = mix.magnitude.data();
    let mut masks = vec![0.0f32; c * bins * frames];
    for start in (0..frames).step_by(width) {
        let take = width.min(frames - start);
        let chunk = Tensor::from_fn([1, 1, bins, width], |i| {
            let (r, col) = (i / width, i % width);
            if col < take {
                x[r * frames + start + col]
            } else {
                0.0
            }
        });
        let out = estimator.estimate(&chunk, start)?;
        if out.shape() != [1, c, bins, width] {
            return Err(Error::shape(
                "estimate_masks",
                format!("estimator returned {:?}, expected [1, {c}, {bins}, {width}]", out.shape()),
            ));
        }
        for (row, src) in out.data().chunks_exact(width).enumerate() {
            let dst = row * frames + start;
            masks[dst..dst + take].copy_from_slice(&src[..take]);
        }
    }
    Tensor::new(vec![c, bins, frames], masks)
}

/// `max(mask_i, 0) * X_normalized * norm_factor` for each source.
pub fn apply_mask(masks: &Tensor<f32>, mix: &MagSpec) -> Result<Vec<Tensor<f32>>> {
    let (bins, frames) = (mix.bins(), mix.frames());
    let s = masks.shape();
    if s.len() != 3 || s[1] != bins || s[2] != frames {
        return Err(Error::shape(
            "apply_mask",
            format!("masks {s:?} vs mixture {bins}x{frames}"),
        ));
    }
    let g = mix.norm_factor;
    Ok(masks
        .data()
        .chunks_exact(bins * frames)
        .map(|m| {
            let data = m
                .iter()
                .zip(mix.magnitude.data())
                .map(|(&m, &x)| m.max(0.0) * x * g)
                .collect();
            Tensor::new(vec![bins, frames], data).expect("mask plane shape")
        })
        .collect())
}

/// Separates `clip` into one signal per estimator source.
pub fn separate(clip: &AudioClip, estimator: &dyn MaskEstimator, config: &SeparationConfig) -> Result<SeparationResult> {
    let low = resample(clip, config.processing_rate)?;
    if low.len() < config.stft.window_size {
        return Err(Error::InvalidArgument(format!(
            "input is {} samples at {} Hz, shorter than one {}-sample analysis window",
            low.len(),
            config.processing_rate,
            config.stft.window_size
        )));
    }
    let spec = stft(&low, config.stft)?;
    let (mix, _) = to_magspec(&spec, &[])?;
    if mix.bins() != config.stft.network_bins() {
        return Err(Error::shape("separate", format!("{} bins", mix.bins())));
    }
    let masks = estimate_masks(estimator, &mix, config.chunk_width)?;
    let magnitudes = apply_mask(&masks, &mix)?;
    let (bins, frames) = (mix.bins(), mix.frames());
    let sources = magnitudes
        .iter()
        .zip(masks.data().chunks_exact(bins * frames))
        .map(|(m, mask)| {
            let mut spec = mix.reconstruct(m)?;
            // the Nyquist row follows the clamped mask of the top network bin
            let top = &mask[(bins - 1) * frames..];
            for (c, &g) in spec.data[bins * frames..].iter_mut().zip(top) {
                *c *= g.max(0.0);
            }
            let rebuilt = istft(&spec)?;
            Ok(resample(&rebuilt, clip.sample_rate)?.fit_to_len(clip.len()))
        })
        .collect::<Result<_>>()?;
    Ok(SeparationResult {
        sources,
        magnitudes,
        mixture_magnitude: mix.unnormalized(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn noise(n: usize, rate: u32) -> AudioClip {
        let mut s = 12345u32;
        let samples = (0..n)
            .map(|_| {
                s = s.wrapping_mul(1664525).wrapping_add(1013904223);
                (s >> 8) as f32 / (1u32 << 24) as f32 - 0.5
            })
            .collect();
        AudioClip::new(samples, rate).unwrap()
    }

    #[test]
    fn zero_masks_give_silence() {
        let clip = noise(8000, 8000);
        let r = separate(&clip, &ConstantMasks { sources: 2, value: 0.0 }, &SeparationConfig::default()).unwrap();
        assert_eq!(r.sources.len(), 2);
        for s in &r.sources {
            assert_eq!(s.len(), clip.len());
            assert!(s.samples.iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn negative_masks_are_clamped() {
        let clip = noise(4000, 8000);
        let r = separate(&clip, &ConstantMasks { sources: 1, value: -3.0 }, &SeparationConfig::default()).unwrap();
        assert!(r.magnitudes[0].data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn too_short_input_is_rejected() {
        let clip = noise(500, 8000);
        let err = separate(&clip, &ConstantMasks { sources: 1, value: 1.0 }, &SeparationConfig::default());
        assert!(matches!(err, Err(Error::InvalidArgument(_))));
    }
}
