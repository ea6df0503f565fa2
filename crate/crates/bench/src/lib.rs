//! Deterministic inputs shared by the benchmarks.

use hgsep_core::{AudioClip, Tensor};

/// Uniform noise in `[-0.5, 0.5)` from a fixed xorshift sequence.
pub fn noise(len: usize, seed: u32) -> Vec<f32> {
    let mut state = seed.max(1);
    (0..len)
        .map(|_| {
            state ^= state << 13;
            state ^= state >> 17;
            state ^= state << 5;
            state as f32 / u32::MAX as f32 - 0.5
        })
        .collect()
}

pub fn noise_clip(secs: f64, rate: u32, seed: u32) -> AudioClip {
    AudioClip::new(noise((secs * rate as f64) as usize, seed), rate).expect("non-empty clip")
}

pub fn noise_tensor(shape: &[usize], seed: u32) -> Tensor<f32> {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), noise(n, seed)).expect("shape matches data")
}
