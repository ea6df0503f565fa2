use std::collections::HashMap;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::NetworkConfig;
use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tape, Tensor, Var};

/// Named parameter tensors in a stable order.
///
/// Tensors are shared (`Arc`), so cloning `Params` and binding them to a
/// tape is cheap; mutation copies on write.
#[derive(Clone, Debug, PartialEq)]
pub struct Params<T: Scalar = f32> {
    entries: Vec<(String, Arc<Tensor<T>>)>,
    index: HashMap<String, usize>,
}

impl<T: Scalar> Default for Params<T> {
    fn default() -> Self {
        Params {
            entries: Vec::new(),
            index: HashMap::new(),
        }
    }
}

impl<T: Scalar> Params<T> {
    pub fn new() -> Self {
        Self::default()
    }

    /// He-normal weights (variance `2 / fan_in`) and zero biases, drawn in
    /// layer order from a generator seeded with `seed`.
    pub fn init(config: &NetworkConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = Params::new();
        for layer in config.layers() {
            let std = (2.0 / layer.fan_in() as f64).sqrt();
            let normal = Normal::new(0.0, std).expect("positive standard deviation");
            let weight = Tensor::from_fn(layer.weight_shape(), |_| T::from_f64_lossy(normal.sample(&mut rng)));
            params.push(format!("{}.weight", layer.name), weight)?;
            params.push(format!("{}.bias", layer.name), Tensor::zeros([layer.out_channels]))?;
        }
        Ok(params)
    }

    /// All-zero weights with every mask bias set to `value`: each module then
    /// emits constant masks regardless of its input.
    pub fn constant_masks(config: &NetworkConfig, value: T) -> Result<Self> {
        config.validate()?;
        let mut params = Params::new();
        for layer in config.layers() {
            params.push(format!("{}.weight", layer.name), Tensor::zeros(layer.weight_shape()))?;
            let bias = if layer.name.ends_with(".mask") {
                Tensor::full([layer.out_channels], value)
            } else {
                Tensor::zeros([layer.out_channels])
            };
            params.push(format!("{}.bias", layer.name), bias)?;
        }
        Ok(params)
    }

    pub fn push(&mut self, name: impl Into<String>, value: Tensor<T>) -> Result<()> {
        let name = name.into();
        if self.index.contains_key(&name) {
            return Err(Error::InvalidArgument(format!("duplicate parameter `{name}`")));
        }
        self.index.insert(name.clone(), self.entries.len());
        self.entries.push((name, Arc::new(value)));
        Ok(())
    }

    pub fn get(&self, name: &str) -> Result<&Tensor<T>> {
        self.index
            .get(name)
            .map(|&i| &*self.entries[i].1)
            .ok_or_else(|| Error::UnknownParameter(name.to_string()))
    }

    /// Copy-on-write mutable access.
    pub fn get_mut(&mut self, name: &str) -> Result<&mut Tensor<T>> {
        let i = *self
            .index
            .get(name)
            .ok_or_else(|| Error::UnknownParameter(name.to_string()))?;
        Ok(Arc::make_mut(&mut self.entries[i].1))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor<T>)> {
        self.entries.iter().map(|(n, t)| (n.as_str(), &**t))
    }

    /// Copy-on-write mutable iteration in parameter order.
    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&str, &mut Tensor<T>)> {
        self.entries
            .iter_mut()
            .map(|(n, t)| (n.as_str(), Arc::make_mut(t)))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|(n, _)| n.as_str())
    }

    /// Number of tensors.
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Number of scalars across all tensors.
    pub fn num_scalars(&self) -> usize {
        self.entries.iter().map(|(_, t)| t.numel()).sum()
    }

    pub fn cast<U: Scalar>(&self) -> Params<U> {
        Params {
            entries: self
                .entries
                .iter()
                .map(|(n, t)| (n.clone(), Arc::new(t.cast())))
                .collect(),
            index: self.index.clone(),
        }
    }

    /// Verifies names and shapes against the layers of `config`.
    pub fn check_matches(&self, config: &NetworkConfig) -> Result<()> {
        let layers = config.layers();
        if self.len() != 2 * layers.len() {
            return Err(Error::InvalidArgument(format!(
                "expected {} parameter tensors, found {}",
                2 * layers.len(),
                self.len()
            )));
        }
        for layer in layers {
            let w = self.get(&format!("{}.weight", layer.name))?;
            let b = self.get(&format!("{}.bias", layer.name))?;
            if w.shape() != layer.weight_shape() || b.shape() != [layer.out_channels] {
                return Err(Error::shape(
                    "check_matches",
                    format!(
                        "layer {} has weight {:?} and bias {:?}, expected {:?} and [{}]",
                        layer.name,
                        w.shape(),
                        b.shape(),
                        layer.weight_shape(),
                        layer.out_channels
                    ),
                ));
            }
        }
        Ok(())
    }

    /// Registers every tensor as a tape input.
    pub fn bind(&self, tape: &mut Tape<T>) -> BoundParams<T> {
        BoundParams {
            vars: self
                .entries
                .iter()
                .map(|(_, t)| tape.leaf_shared(Arc::clone(t)))
                .collect(),
            index: self.index.clone(),
        }
    }
}

/// Parameters registered on a tape, addressable by name.
pub struct BoundParams<T: Scalar> {
    vars: Vec<Var<T>>,
    index: HashMap<String, usize>,
}

impl<T: Scalar> BoundParams<T> {
    pub fn get(&self, name: &str) -> Result<&Var<T>> {
        self.index
            .get(name)
            .map(|&i| &self.vars[i])
            .ok_or_else(|| Error::UnknownParameter(name.to_string()))
    }

    /// Weight and bias of a convolution layer.
    pub fn layer(&self, name: &str) -> Result<(&Var<T>, &Var<T>)> {
        Ok((self.get(&format!("{name}.weight"))?, self.get(&format!("{name}.bias"))?))
    }

    /// Vars in parameter order.
    pub fn vars(&self) -> &[Var<T>] {
        &self.vars
    }
}
