use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{NetworkConfig, Params};
use crate::archive::Archive;
use crate::dsp::StftConfig;
use crate::error::{Error, Result};
use crate::training::AdamState;

const FORMAT: &str = "hgsep-checkpoint-1";

/// Everything needed to run or resume a trained network.
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub network: NetworkConfig,
    pub stft: StftConfig,
    /// Rate the network operates at.
    pub sample_rate: u32,
    pub source_names: Vec<String>,
    /// Number of completed optimization steps.
    pub step: u64,
    pub params: Params<f32>,
    pub optimizer: Option<AdamState>,
    /// Free-form settings of the run that produced this checkpoint.
    pub run_config: toml::Table,
}

#[derive(Serialize, Deserialize)]
struct Meta {
    format: String,
    network: NetworkConfig,
    stft: StftConfig,
    sample_rate: u32,
    source_names: Vec<String>,
    step: u64,
    optimizer_step: Option<u64>,
    run_config: toml::Table,
}

fn invalid(e: impl std::fmt::Display) -> Error {
    Error::Archive(e.to_string())
}

impl Checkpoint {
    pub fn validate(&self) -> Result<()> {
        self.network.validate()?;
        self.stft.validate()?;
        self.params.check_matches(&self.network)?;
        if self.source_names.len() != self.network.num_sources {
            return Err(Error::InvalidArgument(format!(
                "{} source names for {} sources",
                self.source_names.len(),
                self.network.num_sources
            )));
        }
        if self.stft.network_bins() != self.network.input_height {
            return Err(Error::InvalidArgument(format!(
                "window {} gives {} bins but the network expects height {}",
                self.stft.window_size,
                self.stft.network_bins(),
                self.network.input_height
            )));
        }
        Ok(())
    }

    pub fn to_archive(&self) -> Result<Archive> {
        let meta = Meta {
            format: FORMAT.into(),
            network: self.network.clone(),
            stft: self.stft,
            sample_rate: self.sample_rate,
            source_names: self.source_names.clone(),
            step: self.step,
            optimizer_step: self.optimizer.as_ref().map(|o| o.t),
            run_config: self.run_config.clone(),
        };
        let meta = toml::Table::try_from(meta).map_err(invalid)?;
        let mut tensors: Vec<_> = self
            .params
            .iter()
            .map(|(n, t)| (n.to_string(), t.clone()))
            .collect();
        if let Some(opt) = &self.optimizer {
            for ((name, _), m) in self.params.iter().zip(&opt.m) {
                tensors.push((format!("adam.m.{name}"), m.clone()));
            }
            for ((name, _), v) in self.params.iter().zip(&opt.v) {
                tensors.push((format!("adam.v.{name}"), v.clone()));
            }
        }
        Ok(Archive { meta, tensors })
    }

    pub fn from_archive(mut archive: Archive) -> Result<Self> {
        let meta: Meta = archive.meta.clone().try_into().map_err(invalid)?;
        if meta.format != FORMAT {
            return Err(Error::Archive(format!("unsupported format `{}`", meta.format)));
        }
        let mut params = Params::new();
        for layer in meta.network.layers() {
            for suffix in ["weight", "bias"] {
                let name = format!("{}.{suffix}", layer.name);
                params.push(name.clone(), archive.take(&name)?)?;
            }
        }
        let optimizer = match meta.optimizer_step {
            Some(t) => {
                let names: Vec<String> = params.names().map(str::to_string).collect();
                let m = names
                    .iter()
                    .map(|n| archive.take(&format!("adam.m.{n}")))
                    .collect::<Result<_>>()?;
                let v = names
                    .iter()
                    .map(|n| archive.take(&format!("adam.v.{n}")))
                    .collect::<Result<_>>()?;
                Some(AdamState { t, m, v })
            }
            None => None,
        };
        if let Some((name, _)) = archive.tensors.first() {
            return Err(Error::Archive(format!("unexpected tensor `{name}`")));
        }
        let ckpt = Checkpoint {
            network: meta.network,
            stft: meta.stft,
            sample_rate: meta.sample_rate,
            source_names: meta.source_names,
            step: meta.step,
            params,
            optimizer,
            run_config: meta.run_config,
        };
        ckpt.validate()?;
        Ok(ckpt)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        self.to_archive()?.save(path)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_archive(Archive::load(path)?)
    }
}
