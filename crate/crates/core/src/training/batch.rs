use rand::Rng;

use crate::datasets::PreparedClip;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// A fixed-width window of one clip.
#[derive(Clone, Debug, PartialEq)]
pub struct Excerpt {
    /// `[1, bins, width]`.
    pub mixture: Tensor<f32>,
    /// `[sources, bins, width]`.
    pub targets: Tensor<f32>,
    pub clip_id: String,
    pub start_frame: usize,
}

/// Copies frames `start..start + width` of every `[.., bins, frames]` plane,
/// zero-filling past the end.
fn window(t: &Tensor<f32>, planes: usize, start: usize, width: usize) -> Tensor<f32> {
    let frames = *t.shape().last().expect("non-scalar");
    let rows = t.numel() / frames;
    let bins = rows / planes;
    let mut out = vec![0.0f32; rows * width];
    let take = frames.saturating_sub(start).min(width);
    for (r, dst) in out.chunks_exact_mut(width).enumerate() {
        let src = &t.data()[r * frames + start..r * frames + start + take];
        dst[..take].copy_from_slice(src);
    }
    Tensor::new(vec![planes, bins, width], out).expect("consistent window shape")
}

impl Excerpt {
    pub fn from_clip(clip: &PreparedClip, start_frame: usize, width: usize) -> Self {
        Excerpt {
            mixture: window(&clip.mixture, 1, start_frame, width),
            targets: window(&clip.sources, clip.num_sources(), start_frame, width),
            clip_id: clip.id.clone(),
            start_frame,
        }
    }
}

/// Draws `batch_size` excerpts: a clip uniformly at random, then a start
/// frame uniform over every position where the window fits (0 for clips
/// shorter than `width`, which are zero-padded on the right).
pub fn sample_batch<R: Rng>(
    clips: &[PreparedClip],
    batch_size: usize,
    width: usize,
    rng: &mut R,
) -> Result<Vec<Excerpt>> {
    if clips.is_empty() {
        return Err(Error::Dataset("cannot sample from an empty dataset".into()));
    }
    if width == 0 {
        return Err(Error::InvalidArgument("excerpt width must be positive".into()));
    }
    Ok((0..batch_size)
        .map(|_| {
            let clip = &clips[rng.gen_range(0..clips.len())];
            let last = clip.frames().saturating_sub(width);
            let start = rng.gen_range(0..=last);
            Excerpt::from_clip(clip, start, width)
        })
        .collect())
}

/// Stacks excerpts into `[B, 1, H, W]` mixtures and `[B, C, H, W]` targets.
pub fn stack_batch(batch: &[Excerpt]) -> Result<(Tensor<f32>, Tensor<f32>)> {
    let first = batch
        .first()
        .ok_or_else(|| Error::InvalidArgument("empty batch".into()))?;
    let (ms, ts) = (first.mixture.shape().to_vec(), first.targets.shape().to_vec());
    let mut mix = Vec::with_capacity(batch.len() * first.mixture.numel());
    let mut tgt = Vec::with_capacity(batch.len() * first.targets.numel());
    for e in batch {
        if e.mixture.shape() != ms || e.targets.shape() != ts {
            return Err(Error::shape(
                "stack_batch",
                format!("excerpt {:?}/{:?} vs {ms:?}/{ts:?}", e.mixture.shape(), e.targets.shape()),
            ));
        }
        mix.extend_from_slice(e.mixture.data());
        tgt.extend_from_slice(e.targets.data());
    }
    let b = batch.len();
    Ok((
        Tensor::new(vec![b, 1, ms[1], ms[2]], mix)?,
        Tensor::new(vec![b, ts[0], ts[1], ts[2]], tgt)?,
    ))
}
