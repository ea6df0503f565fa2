//! `hgsep inspect-checkpoint`.

use std::path::Path;

use anyhow::{Context, Result};
use hgsep_core::Checkpoint;

pub fn run(path: &Path, tensors: bool) -> Result<()> {
    let ckpt = Checkpoint::load(path).with_context(|| format!("loading {}", path.display()))?;
    let net = &ckpt.network;
    println!("step: {}", ckpt.step);
    println!("sources: {}", ckpt.source_names.join(", "));
    println!("sample rate: {} Hz", ckpt.sample_rate);
    println!("stft: window {}, hop {}", ckpt.stft.window_size, ckpt.stft.hop);
    println!(
        "network: {} stacks, {} trunk channels, input {}x{}",
        net.num_stacks, net.trunk_channels, net.input_height, net.input_width
    );
    println!("parameters: {} in {} tensors", ckpt.params.num_scalars(), ckpt.params.len());
    println!("optimizer state: {}", if ckpt.optimizer.is_some() { "present" } else { "absent" });
    if !ckpt.run_config.is_empty() {
        println!("run config:");
        for line in toml::to_string(&ckpt.run_config)?.lines() {
            println!("  {line}");
        }
    }
    if tensors {
        for (name, t) in ckpt.params.iter() {
            let (lo, hi) = t
                .data()
                .iter()
                .fold((f32::INFINITY, f32::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
            println!("{name:<28} {:<20} [{lo:.4e}, {hi:.4e}]", format!("{:?}", t.shape()));
        }
    }
    Ok(())
}
