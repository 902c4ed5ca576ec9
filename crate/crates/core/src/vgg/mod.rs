//! The frozen VGG-19 prefix used as a feature extractor.
//!
//! Only the layers up to `relu5_1` exist. Any layer name can be requested as
//! a tap; the forward pass stops at the deepest requested tap and keeps just
//! what the input-gradient pass needs (conv outputs before ReLU and pooling
//! routings).

mod preprocess;
mod weights;

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

pub use preprocess::{PreprocessConfig, DEFAULT_CHANNEL_MEANS};
pub use weights::{load_weights, ConvWeights, NetworkWeights, MAGIC, VERSION};

use crate::error::{Error, Result};
use crate::tensor::{
    conv2d_backward_input, conv2d_forward, pool2d_backward, pool2d_forward, relu_backward,
    relu_forward, PoolMode, PoolRouting, Tensor,
};

pub const CONTENT_TAP: &str = "conv4_2";
pub const STYLE_TAPS: [&str; 5] = ["relu1_1", "relu2_1", "relu3_1", "relu4_1", "relu5_1"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LayerKind {
    Conv,
    Relu,
    Pool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub name: String,
    pub kind: LayerKind,
    /// Output channels; `Some` for conv layers only.
    pub channels_out: Option<usize>,
}

/// Blocks of the VGG-19 prefix: (block number, conv count, channels).
const BLOCKS: [(usize, usize, usize); 5] = [
    (1, 2, 64),
    (2, 2, 128),
    (3, 4, 256),
    (4, 4, 512),
    (5, 1, 512),
];

/// The standard VGG-19 layer list through `relu5_1`.
pub fn vgg19_layers() -> Vec<LayerSpec> {
    build_layers(1)
}

/// Same topology and names as [`vgg19_layers`] with every channel count
/// divided by `divisor`. Used for small random-weight test networks.
pub fn vgg19_layers_scaled(divisor: usize) -> Result<Vec<LayerSpec>> {
    if divisor == 0 || 64 % divisor != 0 {
        return Err(Error::invalid(format!(
            "width divisor {divisor} must divide 64"
        )));
    }
    Ok(build_layers(divisor))
}

fn build_layers(divisor: usize) -> Vec<LayerSpec> {
    let mut layers = Vec::new();
    for (block, convs, channels) in BLOCKS {
        for i in 1..=convs {
            layers.push(LayerSpec {
                name: format!("conv{block}_{i}"),
                kind: LayerKind::Conv,
                channels_out: Some(channels / divisor),
            });
            layers.push(LayerSpec {
                name: format!("relu{block}_{i}"),
                kind: LayerKind::Relu,
                channels_out: None,
            });
        }
        if block < 5 {
            layers.push(LayerSpec {
                name: format!("pool{block}"),
                kind: LayerKind::Pool,
                channels_out: None,
            });
        }
    }
    layers
}

/// What one layer left behind for the backward pass.
#[derive(Debug, Clone)]
enum Saved {
    /// Conv output (ReLU input) and the conv's input shape.
    Conv {
        output: Tensor,
        input_shape: (usize, usize, usize),
    },
    Relu,
    Pool(PoolRouting),
}

/// Per-call forward state. Owned by one caller; tied to the weights and
/// pooling mode that produced it.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    weights_id: u64,
    pooling: PoolMode,
    input_shape: (usize, usize, usize),
    taps: BTreeSet<String>,
    saved: Vec<Saved>,
}

impl ForwardCache {
    pub fn taps(&self) -> &BTreeSet<String> {
        &self.taps
    }
}

#[derive(Debug, Clone)]
pub struct ForwardOutput {
    pub taps: BTreeMap<String, Tensor>,
    pub cache: ForwardCache,
}

/// A view of frozen weights with a pooling mode.
#[derive(Debug, Clone, Copy)]
pub struct VggNetwork<'w> {
    weights: &'w NetworkWeights,
    pooling: PoolMode,
}

impl<'w> VggNetwork<'w> {
    pub fn new(weights: &'w NetworkWeights, pooling: PoolMode) -> Self {
        Self { weights, pooling }
    }

    pub fn weights(&self) -> &'w NetworkWeights {
        self.weights
    }

    pub fn pooling(&self) -> PoolMode {
        self.pooling
    }

    fn layer_index(&self, name: &str) -> Result<usize> {
        self.weights
            .spec()
            .iter()
            .position(|l| l.name == name)
            .ok_or_else(|| Error::invalid(format!("unknown tap {name:?}")))
    }

    /// Runs the network on a preprocessed `(3, H, W)` input and returns the
    /// feature map at each requested tap.
    pub fn forward_with_taps<S: AsRef<str>>(
        &self,
        input: &Tensor,
        taps: &[S],
    ) -> Result<ForwardOutput> {
        let (c, h, w) = input.chw()?;
        if c != 3 {
            return Err(Error::invalid(format!(
                "network input must have 3 channels, got {c}"
            )));
        }
        if h == 0 || w == 0 {
            return Err(Error::invalid("network input must be non-empty"));
        }
        let mut wanted = BTreeSet::new();
        let mut last = None;
        for tap in taps {
            let idx = self.layer_index(tap.as_ref())?;
            wanted.insert(tap.as_ref().to_string());
            last = last.max(Some(idx));
        }

        let spec = self.weights.spec();
        let mut saved = Vec::new();
        let mut outputs = BTreeMap::new();
        if let Some(last) = last {
            let mut x = input.clone();
            let mut convs = self.weights.convs().iter();
            for layer in &spec[..=last] {
                match layer.kind {
                    LayerKind::Conv => {
                        let conv = convs.next().expect("weights validated against spec");
                        let input_shape = x.chw()?;
                        let y = conv2d_forward(&x, &conv.kernel, &conv.bias, 1, 1)?;
                        saved.push(Saved::Conv {
                            output: y.clone(),
                            input_shape,
                        });
                        x = y;
                    }
                    LayerKind::Relu => {
                        x = relu_forward(&x);
                        saved.push(Saved::Relu);
                    }
                    LayerKind::Pool => {
                        let (y, routing) = pool2d_forward(&x, self.pooling)?;
                        saved.push(Saved::Pool(routing));
                        x = y;
                    }
                }
                if wanted.contains(&layer.name) {
                    outputs.insert(layer.name.clone(), x.clone());
                }
            }
        }

        Ok(ForwardOutput {
            taps: outputs,
            cache: ForwardCache {
                weights_id: self.weights.id(),
                pooling: self.pooling,
                input_shape: (c, h, w),
                taps: wanted,
                saved,
            },
        })
    }

    /// Gradient with respect to the preprocessed input of
    /// `Σ_tap ⟨tap_gradients[tap], tap output⟩`.
    pub fn backward_from_taps(
        &self,
        tap_gradients: &BTreeMap<String, Tensor>,
        cache: &ForwardCache,
    ) -> Result<Tensor> {
        if cache.weights_id != self.weights.id() || cache.pooling != self.pooling {
            return Err(Error::invalid(
                "forward cache was produced by a different network",
            ));
        }
        for tap in tap_gradients.keys() {
            if !cache.taps.contains(tap) {
                return Err(Error::invalid(format!(
                    "tap {tap:?} was not requested during the forward pass"
                )));
            }
        }

        let spec = self.weights.spec();
        let convs = self.weights.convs();
        let mut conv_idx = spec[..cache.saved.len()]
            .iter()
            .filter(|l| l.kind == LayerKind::Conv)
            .count();
        let mut grad: Option<Tensor> = None;

        for (i, saved) in cache.saved.iter().enumerate().rev() {
            let layer = &spec[i];
            if let Some(g) = tap_gradients.get(&layer.name) {
                match grad.as_mut() {
                    Some(acc) => acc.add_assign(g).map_err(|_| shape_error(&layer.name, g))?,
                    None => {
                        grad = Some(g.clone());
                    }
                }
            }
            match saved {
                Saved::Relu => {
                    // The conv that feeds this ReLU is the previous saved entry.
                    let Some(Saved::Conv { output, .. }) =
                        i.checked_sub(1).map(|j| &cache.saved[j])
                    else {
                        return Err(Error::invalid("corrupt forward cache"));
                    };
                    if let Some(g) = grad.take() {
                        grad = Some(
                            relu_backward(&g, output).map_err(|_| shape_error(&layer.name, &g))?,
                        );
                    }
                }
                Saved::Conv {
                    input_shape,
                    output,
                } => {
                    conv_idx -= 1;
                    if let Some(g) = grad.take() {
                        if g.dims() != output.dims() {
                            return Err(shape_error(&layer.name, &g));
                        }
                        grad = Some(conv2d_backward_input(
                            &g,
                            &convs[conv_idx].kernel,
                            *input_shape,
                            1,
                            1,
                        )?);
                    }
                }
                Saved::Pool(routing) => {
                    if let Some(g) = grad.take() {
                        grad = Some(
                            pool2d_backward(&g, routing)
                                .map_err(|_| shape_error(&layer.name, &g))?,
                        );
                    }
                }
            }
        }

        let (c, h, w) = cache.input_shape;
        Ok(grad.unwrap_or_else(|| Tensor::zeros([c, h, w])))
    }
}

fn shape_error(layer: &str, g: &Tensor) -> Error {
    Error::invalid(format!(
        "gradient for {layer} has shape {:?}, which does not match the layer output",
        g.dims()
    ))
}
