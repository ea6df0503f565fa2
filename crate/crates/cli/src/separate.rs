//! `hgsep separate`.

use std::path::Path;

use anyhow::{Context, Result};
use hgsep_core::dsp::{read_wav, write_log_magnitude_png, write_wav_with, WavEncoding};
use hgsep_core::inference::separate;
use hgsep_core::{Checkpoint, Network, SeparationConfig};
use log::info;

pub fn run(checkpoint: &Path, input: &Path, out_dir: &Path, dump_spectrograms: bool) -> Result<()> {
    let ckpt = Checkpoint::load(checkpoint).with_context(|| format!("loading {}", checkpoint.display()))?;
    let config = SeparationConfig::for_checkpoint(&ckpt);
    let names = ckpt.source_names.clone();
    let net = Network::new(ckpt.network, ckpt.params)?;

    let wav = read_wav(input)?;
    let clip = wav.to_mono()?;
    info!(
        "separating {} ({:.2} s at {} Hz)",
        input.display(),
        clip.duration_secs(),
        clip.sample_rate
    );
    let result = separate(&clip, &net, &config)?;

    std::fs::create_dir_all(out_dir).with_context(|| format!("creating {}", out_dir.display()))?;
    let stem = input
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "input".into());
    for (name, source) in names.iter().zip(&result.sources) {
        let path = out_dir.join(format!("{stem}.{name}.wav"));
        write_wav_with(&path, source, WavEncoding::Float32)?;
        info!("wrote {}", path.display());
    }
    if dump_spectrograms {
        write_log_magnitude_png(out_dir.join(format!("{stem}.mixture.png")), &result.mixture_magnitude)?;
        for (name, mag) in names.iter().zip(&result.magnitudes) {
            write_log_magnitude_png(out_dir.join(format!("{stem}.{name}.png")), mag)?;
        }
    }
    Ok(())
}
