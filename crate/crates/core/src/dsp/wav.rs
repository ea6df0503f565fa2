use std::path::Path;

use hound::{SampleFormat, WavReader, WavSpec, WavWriter};

use super::AudioClip;
use crate::error::{Error, Result};

/// Decoded WAV contents, one sample vector per channel.
#[derive(Clone, Debug, PartialEq)]
pub struct WavData {
    pub sample_rate: u32,
    pub channels: Vec<Vec<f32>>,
}

impl WavData {
    pub fn num_channels(&self) -> usize {
        self.channels.len()
    }

    pub fn len(&self) -> usize {
        self.channels.first().map_or(0, Vec::len)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn channel(&self, index: usize) -> Result<AudioClip> {
        let samples = self.channels.get(index).ok_or_else(|| {
            Error::InvalidArgument(format!(
                "channel {index} requested from a {}-channel file",
                self.channels.len()
            ))
        })?;
        AudioClip::new(samples.clone(), self.sample_rate)
    }

    /// Channel average.
    pub fn to_mono(&self) -> Result<AudioClip> {
        let n = self.channels.len() as f32;
        let samples = (0..self.len())
            .map(|i| self.channels.iter().map(|c| c[i]).sum::<f32>() / n)
            .collect();
        AudioClip::new(samples, self.sample_rate)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum WavEncoding {
    #[default]
    Pcm16,
    Float32,
}

fn wav_err(path: &Path, message: impl Into<String>) -> Error {
    Error::Wav {
        path: path.to_path_buf(),
        message: message.into(),
    }
}

/// Reads a RIFF/WAVE file (integer PCM or 32-bit float, mono or stereo),
/// scaling integer samples to [-1, 1].
pub fn read_wav(path: impl AsRef<Path>) -> Result<WavData> {
    let path = path.as_ref();
    let reader = WavReader::open(path).map_err(|e| wav_err(path, e.to_string()))?;
    let spec = reader.spec();
    let nch = spec.channels as usize;
    if !(1..=2).contains(&nch) {
        return Err(wav_err(path, format!("unsupported channel count {nch}")));
    }
    let interleaved: Vec<f32> = match (spec.sample_format, spec.bits_per_sample) {
        (SampleFormat::Float, 32) => reader
            .into_samples::<f32>()
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| wav_err(path, e.to_string()))?,
        (SampleFormat::Int, bits @ (8 | 16 | 24 | 32)) => {
            let scale = 1.0 / (1u64 << (bits - 1)) as f64;
            reader
                .into_samples::<i32>()
                .map(|s| s.map(|v| (v as f64 * scale) as f32))
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| wav_err(path, e.to_string()))?
        }
        (fmt, bits) => {
            return Err(wav_err(
                path,
                format!("unsupported sample format {fmt:?} with {bits} bits"),
            ))
        }
    };
    if interleaved.is_empty() {
        return Err(wav_err(path, "data chunk is empty"));
    }
    let mut channels = vec![Vec::with_capacity(interleaved.len() / nch); nch];
    for frame in interleaved.chunks_exact(nch) {
        for (c, &s) in channels.iter_mut().zip(frame) {
            c.push(s);
        }
    }
    Ok(WavData {
        sample_rate: spec.sample_rate,
        channels,
    })
}

/// Writes a mono clip as 16-bit PCM.
pub fn write_wav(path: impl AsRef<Path>, clip: &AudioClip) -> Result<()> {
    write_wav_with(path, clip, WavEncoding::Pcm16)
}

pub fn write_wav_with(path: impl AsRef<Path>, clip: &AudioClip, encoding: WavEncoding) -> Result<()> {
    write_wav_channels(path, &[&clip.samples], clip.sample_rate, encoding)
}

/// Writes equally long channels (one or two) as an interleaved WAV.
pub fn write_wav_channels(
    path: impl AsRef<Path>,
    channels: &[&[f32]],
    sample_rate: u32,
    encoding: WavEncoding,
) -> Result<()> {
    let path = path.as_ref();
    if channels.is_empty() || channels.iter().any(|c| c.len() != channels[0].len()) {
        return Err(wav_err(path, "channels must be non-empty and equally long"));
    }
    let (sample_format, bits_per_sample) = match encoding {
        WavEncoding::Pcm16 => (SampleFormat::Int, 16),
        WavEncoding::Float32 => (SampleFormat::Float, 32),
    };
    let spec = WavSpec {
        channels: channels.len() as u16,
        sample_rate,
        bits_per_sample,
        sample_format,
    };
    let to_err = |e: hound::Error| wav_err(path, e.to_string());
    let mut writer = WavWriter::create(path, spec).map_err(to_err)?;
    let len = channels.first().map_or(0, |c| c.len());
    for i in 0..len {
        for ch in channels {
            match encoding {
                WavEncoding::Pcm16 => {
                    let v = (ch[i].clamp(-1.0, 1.0) * 32768.0).round().clamp(-32768.0, 32767.0);
                    writer.write_sample(v as i16).map_err(to_err)?;
                }
                WavEncoding::Float32 => writer.write_sample(ch[i]).map_err(to_err)?,
            }
        }
    }
    writer.finalize().map_err(to_err)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sine(freq: f32, rate: u32, secs: f32) -> AudioClip {
        let n = (rate as f32 * secs) as usize;
        let samples = (0..n)
            .map(|i| 0.5 * (2.0 * std::f32::consts::PI * freq * i as f32 / rate as f32).sin())
            .collect();
        AudioClip::new(samples, rate).unwrap()
    }

    #[test]
    fn pcm16_round_trip_within_quantization() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("sine.wav");
        let clip = sine(440.0, 16000, 1.0);
        write_wav(&path, &clip).unwrap();
        let back = read_wav(&path).unwrap();
        assert_eq!(back.sample_rate, 16000);
        assert_eq!(back.num_channels(), 1);
        let mono = back.to_mono().unwrap();
        assert_eq!(mono.len(), clip.len());
        for (a, b) in mono.samples.iter().zip(&clip.samples) {
            assert!((a - b).abs() <= 1.0 / 32768.0);
        }
    }

    #[test]
    fn float_round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("f.wav");
        let clip = sine(100.0, 8000, 0.1);
        write_wav_with(&path, &clip, WavEncoding::Float32).unwrap();
        assert_eq!(read_wav(&path).unwrap().channel(0).unwrap(), clip);
    }

    #[test]
    fn stereo_is_returned_per_channel() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("st.wav");
        let left = vec![0.25f32; 100];
        let right = vec![-0.5f32; 100];
        write_wav_channels(&path, &[&left, &right], 16000, WavEncoding::Pcm16).unwrap();
        let data = read_wav(&path).unwrap();
        assert_eq!(data.num_channels(), 2);
        assert_eq!(data.channels[0].len(), data.channels[1].len());
        assert_eq!(data.channels[0][0], 0.25);
        assert_eq!(data.channels[1][0], -0.5);
        assert_eq!(data.to_mono().unwrap().samples[0], -0.125);
    }

    #[test]
    fn empty_data_chunk_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("empty.wav");
        write_wav_channels(&path, &[&[]], 8000, WavEncoding::Pcm16).unwrap();
        let err = read_wav(&path).unwrap_err();
        assert!(err.to_string().contains("empty"), "{err}");
    }

    #[test]
    fn garbage_header_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.wav");
        std::fs::write(&path, b"RIFX not a wave file").unwrap();
        assert!(matches!(read_wav(&path), Err(Error::Wav { .. })));
    }
}
