//! Stacked hourglass network producing per-source spectrogram masks.
//!
//! A stem of five convolutions (7x7 then four 3x3, no pooling) lifts the
//! one-channel magnitude image to the trunk width. Each of the `num_stacks`
//! hourglass modules then runs an encoder/decoder with skip branches, emits
//! `num_sources` mask planes through a 3x3 + 1x1 + 1x1 head, and passes
//! `input + merge_mask(masks) + merge_feat(features)` to the next module.
//! Every convolution is followed by a relu except the mask conv and the two
//! merge convs, so masks are unbounded.

mod checkpoint;
mod params;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tape, Tensor, Var};

pub use checkpoint::Checkpoint;
pub use params::{BoundParams, Params};

/// Architecture hyperparameters.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetworkConfig {
    pub num_stacks: usize,
    pub num_sources: usize,
    pub trunk_channels: usize,
    pub stem_channels: Vec<usize>,
    /// Number of pooling (and upsampling) steps per hourglass.
    pub depth: usize,
    pub input_height: usize,
    pub input_width: usize,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        NetworkConfig {
            num_stacks: 4,
            num_sources: 2,
            trunk_channels: 256,
            stem_channels: vec![64, 128, 128, 128, 256],
            depth: 4,
            input_height: 512,
            input_width: 64,
        }
    }
}

/// One convolution layer of the network.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LayerSpec {
    pub name: String,
    pub out_channels: usize,
    pub in_channels: usize,
    pub kernel: usize,
}

impl LayerSpec {
    fn new(name: String, out_channels: usize, in_channels: usize, kernel: usize) -> Self {
        LayerSpec {
            name,
            out_channels,
            in_channels,
            kernel,
        }
    }

    pub fn weight_shape(&self) -> [usize; 4] {
        [self.out_channels, self.in_channels, self.kernel, self.kernel]
    }

    pub fn fan_in(&self) -> usize {
        self.in_channels * self.kernel * self.kernel
    }

    pub fn num_params(&self) -> usize {
        self.out_channels * self.fan_in() + self.out_channels
    }
}

impl NetworkConfig {
    /// A scaled-down network with trunk width `channels`; the stem keeps the
    /// full-size proportions (1/4, 1/2, 1/2, 1/2, 1).
    pub fn with_width(num_stacks: usize, num_sources: usize, channels: usize) -> Self {
        let quarter = (channels / 4).max(1);
        let half = (channels / 2).max(1);
        NetworkConfig {
            num_stacks,
            num_sources,
            trunk_channels: channels,
            stem_channels: vec![quarter, half, half, half, channels],
            ..NetworkConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if self.num_stacks == 0 || self.num_sources == 0 || self.trunk_channels == 0 {
            return bad(format!(
                "stacks, sources and channels must be positive: {self:?}"
            ));
        }
        if self.stem_channels.is_empty() || self.stem_channels.contains(&0) {
            return bad(format!("invalid stem widths {:?}", self.stem_channels));
        }
        if self.stem_channels.last() != Some(&self.trunk_channels) {
            return bad(format!(
                "stem must end at the trunk width {}, got {:?}",
                self.trunk_channels, self.stem_channels
            ));
        }
        let step = 1usize << self.depth;
        if self.input_height % step != 0 || self.input_width % step != 0 {
            return bad(format!(
                "input {}x{} is not divisible by {step}",
                self.input_height, self.input_width
            ));
        }
        Ok(())
    }

    /// All convolution layers in parameter order.
    pub fn layers(&self) -> Vec<LayerSpec> {
        let mut out = Vec::new();
        let mut prev = 1;
        for (i, &c) in self.stem_channels.iter().enumerate() {
            out.push(LayerSpec::new(format!("stem.{i}"), c, prev, if i == 0 { 7 } else { 3 }));
            prev = c;
        }
        for j in 0..self.num_stacks {
            out.extend(self.stack_layers(j));
        }
        out
    }

    /// Convolution layers of hourglass module `j`.
    pub fn stack_layers(&self, j: usize) -> Vec<LayerSpec> {
        let c = self.trunk_channels;
        let s = self.num_sources;
        let p = format!("stack{j}");
        let mut out = Vec::new();
        for k in 0..self.depth {
            out.push(LayerSpec::new(format!("{p}.enc{k}"), c, c, 3));
        }
        out.push(LayerSpec::new(format!("{p}.bottleneck"), c, c, 3));
        for k in 0..self.depth {
            out.push(LayerSpec::new(format!("{p}.dec{k}"), c, c, 3));
            out.push(LayerSpec::new(format!("{p}.skip{k}"), c, c, 3));
        }
        out.push(LayerSpec::new(format!("{p}.head_conv"), c, c, 3));
        out.push(LayerSpec::new(format!("{p}.head_feat"), c, c, 1));
        out.push(LayerSpec::new(format!("{p}.mask"), s, c, 1));
        out.push(LayerSpec::new(format!("{p}.merge_mask"), c, s, 1));
        out.push(LayerSpec::new(format!("{p}.merge_feat"), c, c, 1));
        out
    }

    /// Total number of learnable scalars.
    pub fn num_params(&self) -> usize {
        self.layers().iter().map(LayerSpec::num_params).sum()
    }
}

/// Output of one hourglass module.
pub struct HourglassOutput<T: Scalar> {
    pub masks: Var<T>,
    pub merged: Var<T>,
    /// Spatial size after each pooling step, shallowest first.
    pub encoder_shapes: Vec<(usize, usize)>,
}

fn conv<T: Scalar>(tape: &mut Tape<T>, p: &BoundParams<T>, name: &str, x: &Var<T>) -> Result<Var<T>> {
    let (w, b) = p.layer(name)?;
    tape.conv2d(x, w, b)
}

fn conv_relu<T: Scalar>(tape: &mut Tape<T>, p: &BoundParams<T>, name: &str, x: &Var<T>) -> Result<Var<T>> {
    let y = conv(tape, p, name, x)?;
    Ok(tape.relu(&y))
}

/// Runs the stem on a `[B, 1, H, W]` magnitude image.
pub fn stem_forward<T: Scalar>(
    tape: &mut Tape<T>,
    config: &NetworkConfig,
    params: &BoundParams<T>,
    x: &Var<T>,
) -> Result<Var<T>> {
    let [_, c, _, _] = x.value().dims4()?;
    if c != 1 {
        return Err(Error::shape(
            "stem_forward",
            format!("expected a one-channel input, got {:?}", x.shape()),
        ));
    }
    let mut h = x.clone();
    for i in 0..config.stem_channels.len() {
        h = conv_relu(tape, params, &format!("stem.{i}"), &h)?;
    }
    Ok(h)
}

/// Runs hourglass module `stack` on `[B, trunk, H, W]` features.
pub fn hourglass_forward<T: Scalar>(
    tape: &mut Tape<T>,
    config: &NetworkConfig,
    params: &BoundParams<T>,
    stack: usize,
    features: &Var<T>,
) -> Result<HourglassOutput<T>> {
    let [_, c, h, w] = features.value().dims4()?;
    let step = 1usize << config.depth;
    if c != config.trunk_channels || h % step != 0 || w % step != 0 {
        return Err(Error::shape(
            "hourglass_forward",
            format!(
                "features {:?} need {} channels and spatial dims divisible by {step}",
                features.shape(),
                config.trunk_channels
            ),
        ));
    }
    let p = format!("stack{stack}");

    let mut skips = Vec::with_capacity(config.depth);
    let mut encoder_shapes = Vec::with_capacity(config.depth);
    let mut x = features.clone();
    for k in 0..config.depth {
        let a = conv_relu(tape, params, &format!("{p}.enc{k}"), &x)?;
        x = tape.maxpool2x2(&a)?;
        encoder_shapes.push((x.shape()[2], x.shape()[3]));
        skips.push(a);
    }
    let mut y = conv_relu(tape, params, &format!("{p}.bottleneck"), &x)?;
    for k in (0..config.depth).rev() {
        let d = conv_relu(tape, params, &format!("{p}.dec{k}"), &y)?;
        let up = tape.upsample_nearest2x(&d)?;
        let skip = conv_relu(tape, params, &format!("{p}.skip{k}"), &skips[k])?;
        y = tape.add(&up, &skip)?;
    }
    drop(skips);

    let head = conv_relu(tape, params, &format!("{p}.head_conv"), &y)?;
    let feat = conv_relu(tape, params, &format!("{p}.head_feat"), &head)?;
    let masks = conv(tape, params, &format!("{p}.mask"), &feat)?;

    let from_masks = conv(tape, params, &format!("{p}.merge_mask"), &masks)?;
    let from_feat = conv(tape, params, &format!("{p}.merge_feat"), &feat)?;
    let merged = tape.add(&from_masks, &from_feat)?;
    let merged = tape.add(&merged, features)?;
    Ok(HourglassOutput {
        masks,
        merged,
        encoder_shapes,
    })
}

/// Full network: returns the mask set of every module, first to last.
pub fn forward<T: Scalar>(
    tape: &mut Tape<T>,
    config: &NetworkConfig,
    params: &BoundParams<T>,
    x: &Var<T>,
) -> Result<Vec<Var<T>>> {
    let mut features = stem_forward(tape, config, params, x)?;
    let mut masks = Vec::with_capacity(config.num_stacks);
    for j in 0..config.num_stacks {
        let out = hourglass_forward(tape, config, params, j, &features)?;
        masks.push(out.masks);
        features = out.merged;
    }
    Ok(masks)
}

/// A configured network with its weights, for inference.
#[derive(Clone, Debug, PartialEq)]
pub struct Network {
    pub config: NetworkConfig,
    pub params: Params<f32>,
}

impl Network {
    pub fn new(config: NetworkConfig, params: Params<f32>) -> Result<Self> {
        config.validate()?;
        params.check_matches(&config)?;
        Ok(Network { config, params })
    }

    /// Mask sets of every module for a `[B, 1, H, W]` input, without
    /// recording gradients.
    pub fn predict(&self, x: &Tensor<f32>) -> Result<Vec<Tensor<f32>>> {
        let mut tape = Tape::no_grad();
        let bound = self.params.bind(&mut tape);
        let input = tape.constant(x.clone());
        let masks = forward(&mut tape, &self.config, &bound, &input)?;
        Ok(masks.into_iter().map(|m| m.value().clone()).collect())
    }
}
