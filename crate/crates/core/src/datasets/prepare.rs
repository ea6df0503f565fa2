use std::path::Path;

use log::{debug, warn};

use super::ClipRecord;
use crate::archive::{hex_digest, Archive};
use crate::dsp::{resample, stft, to_magspec, StftConfig};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

const CACHE_VERSION: i64 = 1;

/// Normalized training magnitudes of one clip.
///
/// The mixture and all sources are divided by the same `norm_factor`, the
/// peak of the whole-clip mixture magnitude.
#[derive(Clone, Debug, PartialEq)]
pub struct PreparedClip {
    pub id: String,
    pub source_names: Vec<String>,
    pub norm_factor: f32,
    /// `[bins, frames]`.
    pub mixture: Tensor<f32>,
    /// `[sources, bins, frames]`.
    pub sources: Tensor<f32>,
}

impl PreparedClip {
    pub fn bins(&self) -> usize {
        self.mixture.shape()[0]
    }

    pub fn frames(&self) -> usize {
        self.mixture.shape()[1]
    }

    pub fn num_sources(&self) -> usize {
        self.sources.shape()[0]
    }

    fn compute(record: &ClipRecord, stft_config: StftConfig, rate: u32) -> Result<Self> {
        let spec = |clip| -> Result<_> { stft(&resample(clip, rate)?, stft_config) };
        let mix = spec(&record.mixture)?;
        let srcs = record.sources.iter().map(spec).collect::<Result<Vec<_>>>()?;
        let (mix, srcs) = to_magspec(&mix, &srcs)?;
        let (bins, frames) = (mix.bins(), mix.frames());
        let mut data = Vec::with_capacity(srcs.len() * bins * frames);
        for s in &srcs {
            data.extend_from_slice(s.magnitude.data());
        }
        Ok(PreparedClip {
            id: record.id.clone(),
            source_names: record.source_names.clone(),
            norm_factor: mix.norm_factor,
            sources: Tensor::new(vec![srcs.len(), bins, frames], data)?,
            mixture: mix.magnitude,
        })
    }

    fn to_archive(&self, key: &str) -> Archive {
        let mut meta = toml::Table::new();
        meta.insert("version".into(), CACHE_VERSION.into());
        meta.insert("key".into(), key.into());
        meta.insert("id".into(), self.id.clone().into());
        meta.insert(
            "source_names".into(),
            toml::Value::Array(self.source_names.iter().map(|s| s.clone().into()).collect()),
        );
        meta.insert("norm_factor".into(), f64::from(self.norm_factor).into());
        Archive {
            meta,
            tensors: vec![
                ("mixture".into(), self.mixture.clone()),
                ("sources".into(), self.sources.clone()),
            ],
        }
    }

    fn from_archive(mut a: Archive, key: &str) -> Result<Self> {
        let bad = |what: &str| Error::Archive(format!("cache entry has bad `{what}`"));
        if a.meta.get("version").and_then(|v| v.as_integer()) != Some(CACHE_VERSION) {
            return Err(bad("version"));
        }
        if a.meta.get("key").and_then(|v| v.as_str()) != Some(key) {
            return Err(bad("key"));
        }
        let id = a.meta.get("id").and_then(|v| v.as_str()).ok_or_else(|| bad("id"))?.to_string();
        let source_names = a
            .meta
            .get("source_names")
            .and_then(|v| v.as_array())
            .and_then(|v| v.iter().map(|s| s.as_str().map(str::to_string)).collect::<Option<Vec<_>>>())
            .ok_or_else(|| bad("source_names"))?;
        // f32 -> f64 -> f32 is exact
        let norm_factor = a
            .meta
            .get("norm_factor")
            .and_then(|v| v.as_float())
            .ok_or_else(|| bad("norm_factor"))? as f32;
        let clip = PreparedClip {
            id,
            source_names,
            norm_factor,
            mixture: a.take("mixture")?,
            sources: a.take("sources")?,
        };
        let (m, s) = (clip.mixture.shape(), clip.sources.shape());
        if m.len() != 2 || s.len() != 3 || s[1..] != m[..] || s[0] != clip.source_names.len() {
            return Err(Error::Archive(format!("cache entry shapes {m:?} / {s:?} disagree")));
        }
        Ok(clip)
    }
}

/// Content hash of the record's audio together with the DSP settings.
fn cache_key(record: &ClipRecord, stft_config: StftConfig, rate: u32) -> String {
    let mut bytes = Vec::new();
    bytes.extend_from_slice(format!("v{CACHE_VERSION};{stft_config:?};{rate};{:?};", record.source_names).as_bytes());
    for clip in std::iter::once(&record.mixture).chain(&record.sources) {
        bytes.extend_from_slice(&clip.sample_rate.to_le_bytes());
        bytes.extend_from_slice(&(clip.samples.len() as u64).to_le_bytes());
        for s in &clip.samples {
            bytes.extend_from_slice(&s.to_le_bytes());
        }
    }
    hex_digest(&bytes)
}

/// Resamples to `rate`, transforms and normalizes a record. With a cache
/// directory, results are stored under a content hash and reused; an
/// unreadable cache entry is recomputed and replaced.
pub fn prepare_clip(
    record: &ClipRecord,
    stft_config: StftConfig,
    rate: u32,
    cache_dir: Option<&Path>,
) -> Result<PreparedClip> {
    let Some(dir) = cache_dir else {
        return PreparedClip::compute(record, stft_config, rate);
    };
    let key = cache_key(record, stft_config, rate);
    let path = dir.join(format!("{key}.clip"));
    if path.exists() {
        match Archive::load(&path).and_then(|a| PreparedClip::from_archive(a, &key)) {
            Ok(clip) => {
                debug!("cache hit for {} ({})", record.id, path.display());
                return Ok(clip);
            }
            Err(e) => warn!("recomputing {}: unusable cache entry: {e}", record.id),
        }
    }
    let clip = PreparedClip::compute(record, stft_config, rate)?;
    clip.to_archive(&key).save(&path)?;
    Ok(clip)
}
