use num_complex::Complex;

use super::{ComplexSpectrogram, StftConfig};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Normalized magnitude spectrogram as seen by the network, plus what is
/// needed to turn a masked magnitude back into a complex spectrogram.
///
/// `magnitude` holds the lowest `window/2` bins divided by `norm_factor`; the
/// Nyquist bin is kept aside unnormalized in `nyquist`.
#[derive(Clone, Debug, PartialEq)]
pub struct MagSpec {
    pub magnitude: Tensor<f32>,
    /// Phase of every analysis bin (including Nyquist), bin-major.
    pub phase: Vec<f32>,
    pub norm_factor: f32,
    pub nyquist: Vec<Complex<f32>>,
    pub config: StftConfig,
    pub sample_rate: u32,
    pub length: usize,
}

impl MagSpec {
    fn from_spectrogram(spec: &ComplexSpectrogram, norm_factor: f32) -> Result<Self> {
        let rows = spec.bins - 1;
        let t = spec.frames;
        let magnitude = Tensor::new(
            vec![rows, t],
            spec.data[..rows * t].iter().map(|c| c.norm() / norm_factor).collect(),
        )?;
        Ok(MagSpec {
            magnitude,
            phase: spec.data.iter().map(|c| c.arg()).collect(),
            norm_factor,
            nyquist: spec.data[rows * t..].to_vec(),
            config: spec.config,
            sample_rate: spec.sample_rate,
            length: spec.length,
        })
    }

    pub fn bins(&self) -> usize {
        self.magnitude.shape()[0]
    }

    pub fn frames(&self) -> usize {
        self.magnitude.shape()[1]
    }

    /// Magnitude in the original (unnormalized) scale.
    pub fn unnormalized(&self) -> Tensor<f32> {
        let g = self.norm_factor;
        self.magnitude.map(|v| v * g)
    }

    /// Combines an unnormalized magnitude `[bins, frames]` with this
    /// spectrogram's phase and Nyquist row.
    pub fn reconstruct(&self, magnitude: &Tensor<f32>) -> Result<ComplexSpectrogram> {
        if magnitude.shape() != self.magnitude.shape() {
            return Err(Error::shape(
                "reconstruct",
                format!(
                    "magnitude {:?} vs spectrogram {:?}",
                    magnitude.shape(),
                    self.magnitude.shape()
                ),
            ));
        }
        let mut data: Vec<Complex<f32>> = magnitude
            .data()
            .iter()
            .zip(&self.phase)
            .map(|(&m, &p)| Complex::from_polar(m, p))
            .collect();
        data.extend_from_slice(&self.nyquist);
        Ok(ComplexSpectrogram {
            config: self.config,
            sample_rate: self.sample_rate,
            length: self.length,
            bins: self.bins() + 1,
            frames: self.frames(),
            data,
        })
    }
}

/// Splits mixture and source spectrograms into normalized magnitudes sharing
/// the mixture's scale: `norm_factor` is the mixture's largest network-bin
/// magnitude (1 for a silent mixture).
pub fn to_magspec(
    mixture: &ComplexSpectrogram,
    sources: &[ComplexSpectrogram],
) -> Result<(MagSpec, Vec<MagSpec>)> {
    for (i, s) in sources.iter().enumerate() {
        if !s.same_grid(mixture) {
            return Err(Error::shape(
                "to_magspec",
                format!(
                    "source {i} is {}x{}, mixture is {}x{}",
                    s.bins, s.frames, mixture.bins, mixture.frames
                ),
            ));
        }
    }
    let rows = mixture.bins - 1;
    let peak = mixture.data[..rows * mixture.frames]
        .iter()
        .map(|c| c.norm())
        .fold(0.0f32, f32::max);
    let norm_factor = if peak > 0.0 { peak } else { 1.0 };
    let mix = MagSpec::from_spectrogram(mixture, norm_factor)?;
    let srcs = sources
        .iter()
        .map(|s| MagSpec::from_spectrogram(s, norm_factor))
        .collect::<Result<_>>()?;
    Ok((mix, srcs))
}
