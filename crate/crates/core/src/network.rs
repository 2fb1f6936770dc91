//! Layer stacks with a declared label space, the cached forward pass, and
//! back-propagation seeded at the logits.

use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::layers::{Affine, Conv2d, Layer, LayerCache, MaxPool2d};
use crate::tensor::Tensor;

/// What the output nodes of a network mean.
///
/// For `Dual(n)`, node `i < n` is the original class `i` and node `n + i` is
/// the masked version of class `i`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", content = "classes", rename_all = "lowercase")]
pub enum LabelSpace {
    Plain(usize),
    Masked(usize),
    Dual(usize),
}

impl LabelSpace {
    pub fn classes(&self) -> usize {
        match *self {
            LabelSpace::Plain(n) | LabelSpace::Masked(n) | LabelSpace::Dual(n) => n,
        }
    }

    pub fn outputs(&self) -> usize {
        match *self {
            LabelSpace::Plain(n) | LabelSpace::Masked(n) => n,
            LabelSpace::Dual(n) => 2 * n,
        }
    }

    /// Node of the masked counterpart of `label` in a dual network.
    pub fn masked_node(&self, label: usize) -> usize {
        match *self {
            LabelSpace::Dual(n) => n + label,
            _ => label,
        }
    }

    pub(crate) fn tag(&self) -> u8 {
        match self {
            LabelSpace::Plain(_) => 1,
            LabelSpace::Masked(_) => 2,
            LabelSpace::Dual(_) => 3,
        }
    }

    pub(crate) fn from_tag(tag: u8, classes: usize) -> Option<Self> {
        match tag {
            1 => Some(LabelSpace::Plain(classes)),
            2 => Some(LabelSpace::Masked(classes)),
            3 => Some(LabelSpace::Dual(classes)),
            _ => None,
        }
    }
}

impl fmt::Display for LabelSpace {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LabelSpace::Plain(n) => write!(f, "plain({n})"),
            LabelSpace::Masked(n) => write!(f, "masked({n})"),
            LabelSpace::Dual(n) => write!(f, "dual({})", 2 * n),
        }
    }
}

/// Conv/pool blocks followed by affine layers.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Architecture {
    /// Output channels of each 3x3 same-padded conv + ReLU + 2x2 max-pool block.
    pub conv_channels: Vec<usize>,
    /// Widths of hidden affine + ReLU layers before the output layer.
    pub hidden: Vec<usize>,
    /// Multiplier applied to the initial output-layer weights, keeping the
    /// initial softmax close to uniform.
    pub output_init_scale: f64,
    /// Max-pool the last conv block down to 1x1 before the affine layers.
    pub global_pool: bool,
}

impl Default for Architecture {
    fn default() -> Self {
        Architecture {
            conv_channels: vec![8, 12, 16, 16],
            hidden: vec![32],
            output_init_scale: 0.1,
            global_pool: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Network {
    input_shape: Vec<usize>,
    layers: Vec<Layer>,
    label_space: LabelSpace,
    class_names: Vec<String>,
}

/// Per-layer caches from one forward pass, plus the logits and probabilities.
#[derive(Clone, Debug)]
pub struct ForwardPass {
    caches: Vec<LayerCache>,
    pub logits: Tensor,
    pub probs: Tensor,
}

impl Network {
    pub fn new(
        input_shape: &[usize],
        layers: Vec<Layer>,
        label_space: LabelSpace,
        class_names: Vec<String>,
    ) -> Result<Self> {
        if !matches!(layers.last(), Some(Layer::Softmax)) {
            return Err(Error::Config("network must end in a softmax layer".into()));
        }
        if class_names.len() != label_space.classes() {
            return Err(Error::Config(format!(
                "{} class names for label space {label_space}",
                class_names.len()
            )));
        }
        let mut shape = input_shape.to_vec();
        for layer in &layers {
            shape = layer.output_shape(&shape)?;
        }
        if shape != [label_space.outputs()] {
            return Err(Error::ShapeMismatch {
                layer: "output".into(),
                expected: vec![label_space.outputs()],
                actual: shape,
            });
        }
        Ok(Network {
            input_shape: input_shape.to_vec(),
            layers,
            label_space,
            class_names,
        })
    }

    /// Randomly initialized network for `(channels, height, width)` inputs.
    pub fn build<R: Rng + ?Sized>(
        rng: &mut R,
        input_shape: [usize; 3],
        arch: &Architecture,
        label_space: LabelSpace,
        class_names: Vec<String>,
    ) -> Result<Self> {
        let [mut c, mut h, mut w] = input_shape;
        let mut layers = Vec::new();
        for &out in &arch.conv_channels {
            if h < 2 || w < 2 {
                return Err(Error::Config(format!(
                    "input {input_shape:?} too small for {} pooling blocks",
                    arch.conv_channels.len()
                )));
            }
            layers.push(Layer::Conv2d(Conv2d::new(rng, c, out, 3, 1, 1)));
            layers.push(Layer::Relu);
            layers.push(Layer::MaxPool2d(MaxPool2d { size: 2, stride: 2 }));
            c = out;
            h /= 2;
            w /= 2;
        }
        if arch.global_pool && (h > 1 || w > 1) {
            if h != w {
                return Err(Error::Config(format!("global pooling needs a square map, got {h}x{w}")));
            }
            layers.push(Layer::MaxPool2d(MaxPool2d { size: h, stride: h }));
            h = 1;
            w = 1;
        }
        layers.push(Layer::Flatten);
        let mut fan_in = c * h * w;
        for &width in &arch.hidden {
            layers.push(Layer::Affine(Affine::new(rng, fan_in, width)));
            layers.push(Layer::Relu);
            fan_in = width;
        }
        let mut out = Affine::new(rng, fan_in, label_space.outputs());
        out.weight
            .data_mut()
            .iter_mut()
            .for_each(|v| *v *= arch.output_init_scale);
        layers.push(Layer::Affine(out));
        layers.push(Layer::Softmax);
        Network::new(&input_shape, layers, label_space, class_names)
    }

    pub fn input_shape(&self) -> &[usize] {
        &self.input_shape
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    pub fn label_space(&self) -> LabelSpace {
        self.label_space
    }

    pub fn class_names(&self) -> &[String] {
        &self.class_names
    }

    pub fn forward(&self, input: &Tensor) -> Result<ForwardPass> {
        if input.shape() != self.input_shape.as_slice() {
            return Err(Error::ShapeMismatch {
                layer: "input".into(),
                expected: self.input_shape.clone(),
                actual: input.shape().to_vec(),
            });
        }
        let mut caches = Vec::with_capacity(self.layers.len());
        let mut x = input.clone();
        let mut logits = None;
        for layer in &self.layers {
            if matches!(layer, Layer::Softmax) {
                logits = Some(x.clone());
            }
            let (out, cache) = layer.forward(&x)?;
            if !out.is_finite() {
                return Err(Error::NonFinite(layer.name().into()));
            }
            caches.push(cache);
            x = out;
        }
        Ok(ForwardPass {
            caches,
            logits: logits.expect("network ends in softmax"),
            probs: x,
        })
    }

    /// Probability vector only.
    pub fn predict(&self, input: &Tensor) -> Result<Vec<f64>> {
        Ok(self.forward(input)?.probs.into_data())
    }

    fn check_seed(&self, pass: &ForwardPass, logit_grad: &Tensor) -> Result<()> {
        if pass.caches.len() != self.layers.len() {
            return Err(Error::NoForwardPass);
        }
        if logit_grad.shape() != pass.logits.shape() {
            return Err(Error::ShapeMismatch {
                layer: "output".into(),
                expected: pass.logits.shape().to_vec(),
                actual: logit_grad.shape().to_vec(),
            });
        }
        Ok(())
    }

    /// Back-propagates a gradient given at the logits (the softmax input)
    /// down to the input image. Parameters are not touched.
    pub fn input_gradient(&self, pass: &ForwardPass, logit_grad: &Tensor) -> Result<Tensor> {
        self.check_seed(pass, logit_grad)?;
        let n = self.layers.len() - 1;
        let mut g = logit_grad.clone();
        for (layer, cache) in self.layers[..n].iter().zip(&pass.caches[..n]).rev() {
            g = layer.backward_input(cache, &g)?;
        }
        Ok(g)
    }

    /// Like [`Network::input_gradient`], but accumulates parameter gradients
    /// into the parameters' grad slots.
    pub fn backward(&mut self, pass: &ForwardPass, logit_grad: &Tensor) -> Result<Tensor> {
        self.check_seed(pass, logit_grad)?;
        let n = self.layers.len() - 1;
        let mut g = logit_grad.clone();
        for (layer, cache) in self.layers[..n].iter_mut().zip(&pass.caches[..n]).rev() {
            g = layer.backward(cache, &g)?;
        }
        Ok(g)
    }

    pub fn zero_grad(&mut self) {
        for layer in &mut self.layers {
            for p in layer.params_mut() {
                p.zero_grad();
            }
        }
    }

    pub fn param_count(&self) -> usize {
        self.layers
            .iter()
            .flat_map(|l| l.params())
            .map(|p| p.len())
            .sum()
    }
}

/// Softmax cross-entropy of `probs` against `label`, with its gradient at the
/// logits (`y - onehot`).
pub fn cross_entropy(probs: &[f64], label: usize) -> Result<(f64, Tensor)> {
    if label >= probs.len() {
        return Err(Error::LabelOutOfRange {
            label,
            classes: probs.len(),
        });
    }
    let loss = -probs[label].max(f64::MIN_POSITIVE).ln();
    let mut grad = probs.to_vec();
    grad[label] -= 1.0;
    Ok((loss, Tensor::vector(&grad)))
}

/// One cache context over a shared, read-only network. Each thread doing
/// inference holds its own.
pub struct InferenceContext<'a> {
    net: &'a Network,
    pass: Option<ForwardPass>,
}

impl<'a> InferenceContext<'a> {
    pub fn new(net: &'a Network) -> Self {
        InferenceContext { net, pass: None }
    }

    pub fn network(&self) -> &'a Network {
        self.net
    }

    /// Runs and caches a forward pass; returns the output probabilities.
    pub fn forward(&mut self, input: &Tensor) -> Result<&Tensor> {
        self.pass = Some(self.net.forward(input)?);
        Ok(&self.pass.as_ref().unwrap().probs)
    }

    pub fn pass(&self) -> Option<&ForwardPass> {
        self.pass.as_ref()
    }

    /// Seeds back-propagation with `error_signal` at the output layer and
    /// returns the resulting gradient at the input image.
    pub fn inject_output_error(&self, error_signal: &Tensor) -> Result<Tensor> {
        let pass = self.pass.as_ref().ok_or(Error::NoForwardPass)?;
        self.net.input_gradient(pass, error_signal)
    }
}
