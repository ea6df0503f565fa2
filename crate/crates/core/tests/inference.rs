//! Chunked separation pipeline.

mod common;

use common::{rng, uniform};
use hgsep_core::bsseval::{nsdr, DecompositionConfig};
use hgsep_core::datasets::synthetic::voice_over_noise;
use hgsep_core::dsp::{stft, to_magspec};
use hgsep_core::inference::{apply_mask, estimate_masks, separate, ConstantMasks, RatioMaskOracle};
use hgsep_core::model::{NetworkConfig, Params};
use hgsep_core::{AudioClip, Network, SeparationConfig, StftConfig, Tensor};

fn noise_clip(len: usize, rate: u32, seed: u64) -> AudioClip {
    let t = uniform(&mut rng(seed), &[len], -0.5, 0.5);
    AudioClip::new(t.data().iter().map(|&v| v as f32).collect(), rate).unwrap()
}

fn error_db(reference: &[f32], estimate: &[f32]) -> f64 {
    let num: f64 = reference.iter().zip(estimate).map(|(&a, &b)| ((a - b) as f64).powi(2)).sum();
    let den: f64 = reference.iter().map(|&a| (a as f64).powi(2)).sum();
    10.0 * (num / den).log10()
}

fn small_config() -> SeparationConfig {
    SeparationConfig {
        stft: StftConfig { window_size: 128, hop: 32 },
        processing_rate: 8000,
        chunk_width: 64,
    }
}

fn small_network(seed: u64) -> Network {
    let cfg = NetworkConfig {
        input_height: 64,
        input_width: 64,
        ..NetworkConfig::with_width(2, 2, 8)
    };
    Network::new(cfg.clone(), Params::init(&cfg, seed).unwrap()).unwrap()
}

#[test]
fn identity_masks_reproduce_the_mixture() {
    let clip = noise_clip(3 * 8000 + 123, 8000, 1);
    let out = separate(&clip, &ConstantMasks { sources: 2, value: 1.0 }, &SeparationConfig::default()).unwrap();
    for s in &out.sources {
        assert_eq!(s.len(), clip.len());
        assert!(error_db(&clip.samples, &s.samples) < -60.0);
    }
}

#[test]
fn outputs_keep_the_input_rate_and_length() {
    for (rate, len) in [(44_100, 44_100 + 17), (16_000, 20_001), (22_050, 9_999)] {
        let clip = noise_clip(len, rate, 2);
        let out = separate(&clip, &ConstantMasks { sources: 3, value: 0.5 }, &SeparationConfig::default()).unwrap();
        assert_eq!(out.sources.len(), 3);
        for s in &out.sources {
            assert_eq!((s.sample_rate, s.len()), (rate, len));
        }
    }
}

#[test]
fn chunks_are_independent() {
    let cfg = small_config();
    let clip = noise_clip(127 * 32, 8000, 3);
    let (mix, _) = to_magspec(&stft(&clip, cfg.stft).unwrap(), &[]).unwrap();
    assert_eq!(mix.frames(), 128);
    let net = small_network(4);
    let masks = estimate_masks(&net, &mix, 64).unwrap();

    let x = mix.magnitude.data();
    for (k, start) in [0usize, 64].into_iter().enumerate() {
        let chunk = Tensor::from_fn(vec![1, 1, 64, 64], |i| x[(i / 64) * 128 + start + i % 64]);
        let alone = net.predict(&chunk).unwrap().pop().unwrap();
        for (plane, rows) in alone.data().chunks(64 * 64).enumerate() {
            for (r, row) in rows.chunks(64).enumerate() {
                let got = &masks.data()[(plane * 64 + r) * 128 + start..][..64];
                assert_eq!(got, row, "chunk {k}, source {plane}, bin {r}");
            }
        }
    }
}

#[test]
fn partial_last_chunk_is_zero_padded() {
    let cfg = small_config();
    let clip = noise_clip(99 * 32, 8000, 5);
    let (mix, _) = to_magspec(&stft(&clip, cfg.stft).unwrap(), &[]).unwrap();
    assert_eq!(mix.frames(), 100);
    let net = small_network(6);
    let masks = estimate_masks(&net, &mix, 64).unwrap();
    assert_eq!(masks.shape(), &[2, 64, 100]);
    let x = mix.magnitude.data();
    let chunk = Tensor::from_fn(vec![1, 1, 64, 64], |i| {
        let col = i % 64;
        if col < 36 {
            x[(i / 64) * 100 + 64 + col]
        } else {
            0.0
        }
    });
    let alone = net.predict(&chunk).unwrap().pop().unwrap();
    for plane in 0..2 {
        for r in 0..64 {
            let got = &masks.data()[(plane * 64 + r) * 100 + 64..][..36];
            assert_eq!(got, &alone.data()[(plane * 64 + r) * 64..][..36]);
        }
    }
}

#[test]
fn apply_mask_matches_scalar_loop() {
    let clip = noise_clip(8000, 8000, 7);
    let (mix, _) = to_magspec(&stft(&clip, StftConfig::default()).unwrap(), &[]).unwrap();
    let (bins, frames) = (mix.bins(), mix.frames());
    let masks: Tensor<f32> = uniform(&mut rng(8), &[3, bins, frames], -1.0, 2.0).cast();
    let est = apply_mask(&masks, &mix).unwrap();
    assert_eq!(est.len(), 3);
    for (i, e) in est.iter().enumerate() {
        for b in 0..bins {
            for t in 0..frames {
                let m = masks.data()[(i * bins + b) * frames + t] as f64;
                let x = mix.magnitude.data()[b * frames + t] as f64;
                let expected = if m > 0.0 { m * x * mix.norm_factor as f64 } else { 0.0 };
                let got = e.data()[b * frames + t] as f64;
                assert!((got - expected).abs() <= 1e-6 * expected.abs().max(1e-3));
                assert!(got >= 0.0);
            }
        }
    }
    let ones = Tensor::full(vec![1, bins, frames], 1.0f32);
    assert_eq!(apply_mask(&ones, &mix).unwrap()[0], mix.unnormalized());
    assert!(apply_mask(&Tensor::zeros([1, bins, frames + 1]), &mix).is_err());
}

#[test]
fn output_scales_with_input_gain() {
    let net = small_network(9);
    let cfg = small_config();
    let clip = noise_clip(5000, 8000, 10);
    let base = separate(&clip, &net, &cfg).unwrap();
    // a power-of-two gain commutes exactly with every step
    let quarter = separate(&clip.scaled(0.25), &net, &cfg).unwrap();
    for (a, b) in base.sources.iter().zip(&quarter.sources) {
        let scaled: Vec<f32> = a.samples.iter().map(|v| v * 0.25).collect();
        assert_eq!(scaled, b.samples);
    }
    let odd = separate(&clip.scaled(0.3), &net, &cfg).unwrap();
    for (a, b) in base.sources.iter().zip(&odd.sources) {
        let scaled: Vec<f32> = a.samples.iter().map(|v| v * 0.3).collect();
        assert!(error_db(&scaled, &b.samples) < -100.0);
    }
}

#[test]
fn ratio_mask_oracle_separates_the_synthetic_clip() {
    let rate = 16_000;
    let rec = voice_over_noise("oracle", 3 * rate as usize, rate, 4).unwrap();
    let cfg = SeparationConfig::default();
    let oracle = RatioMaskOracle::new(&rec.mixture, &rec.sources, &cfg).unwrap();
    let out = separate(&rec.mixture, &oracle, &cfg).unwrap();
    let refs: Vec<Vec<f64>> = rec.sources.iter().map(AudioClip::to_f64).collect();
    let mix = rec.mixture.to_f64();
    for (i, est) in out.sources.iter().enumerate() {
        let gain = nsdr(&est.to_f64(), &mix, &refs, i, &DecompositionConfig::default()).unwrap();
        assert!(gain >= 10.0, "source {i}: NSDR {gain:.2} dB");
    }
}
