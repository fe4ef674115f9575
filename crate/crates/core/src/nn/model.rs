use rand::Rng;
use rand_distr::{Distribution, Uniform};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::{stack, Image};
use crate::nn::loss::{Prediction, SoftLabel};
use crate::nn::tape::{Tape, Var};
use crate::nn::tensor::Tensor;
use crate::scalar::Scalar;

/// One entry of a sequential architecture.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Layer {
    /// Fully connected, weight `[inputs, outputs]` plus bias.
    Dense {
        inputs: usize,
        outputs: usize,
    },
    /// Same-padding stride-1 convolution, weight `[out, in, k, k]` plus bias.
    Conv2d {
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
    },
    Relu,
    MaxPool2,
    Flatten,
}

impl Layer {
    fn param_shapes(&self) -> Vec<Vec<usize>> {
        match *self {
            Layer::Dense { inputs, outputs } => vec![vec![inputs, outputs], vec![outputs]],
            Layer::Conv2d {
                in_channels,
                out_channels,
                kernel,
            } => vec![
                vec![out_channels, in_channels, kernel, kernel],
                vec![out_channels],
            ],
            _ => vec![],
        }
    }

    fn fan_in(&self) -> usize {
        match *self {
            Layer::Dense { inputs, .. } => inputs,
            Layer::Conv2d {
                in_channels,
                kernel,
                ..
            } => in_channels * kernel * kernel,
            _ => 0,
        }
    }

    /// Output shape (without batch) or `None` when the input does not fit.
    fn output_shape(&self, input: &[usize]) -> Option<Vec<usize>> {
        match (*self, input) {
            (Layer::Dense { inputs, outputs }, [n]) if *n == inputs => Some(vec![outputs]),
            (
                Layer::Conv2d {
                    in_channels,
                    out_channels,
                    kernel,
                },
                [c, h, w],
            ) if *c == in_channels && kernel % 2 == 1 => Some(vec![out_channels, *h, *w]),
            (Layer::Relu, s) => Some(s.to_vec()),
            (Layer::MaxPool2, [c, h, w]) if *h >= 2 && *w >= 2 => Some(vec![*c, h / 2, w / 2]),
            (Layer::Flatten, s) if !s.is_empty() => Some(vec![s.iter().product()]),
            _ => None,
        }
    }
}

/// Parameter gradients of the mean batch loss, plus the input adjoint when requested.
#[derive(Debug, Clone)]
pub struct GradientSet<T> {
    pub params: Vec<Tensor<T>>,
    pub input: Option<Tensor<T>>,
    pub loss: f64,
    pub predictions: Vec<Prediction>,
}

/// Sequential classifier over `C×H×W` inputs.
#[derive(Debug, Clone, PartialEq)]
pub struct Model<T> {
    input_shape: [usize; 3],
    layers: Vec<Layer>,
    params: Vec<Tensor<T>>,
}

impl<T: Scalar> Model<T> {
    /// Builds a model with He-uniform weights and zero biases.
    pub fn new<R: Rng + ?Sized>(
        input_shape: [usize; 3],
        layers: Vec<Layer>,
        rng: &mut R,
    ) -> Result<Self> {
        let mut model = Self::zeroed(input_shape, layers)?;
        let mut k = 0;
        for layer in model.layers.clone() {
            let shapes = layer.param_shapes();
            if shapes.is_empty() {
                continue;
            }
            let bound = (6.0 / layer.fan_in() as f64).sqrt();
            let dist = Uniform::new_inclusive(-bound, bound).expect("finite bound");
            for v in model.params[k].data_mut() {
                *v = T::of(dist.sample(rng));
            }
            k += shapes.len();
        }
        Ok(model)
    }

    /// All parameters zero; validates that layer shapes chain.
    pub fn zeroed(input_shape: [usize; 3], layers: Vec<Layer>) -> Result<Self> {
        let mut shape = input_shape.to_vec();
        let mut params = Vec::new();
        for (i, layer) in layers.iter().enumerate() {
            shape = layer.output_shape(&shape).ok_or_else(|| {
                Error::InvalidConfig(format!("layer {i} ({layer:?}) cannot take shape {shape:?}"))
            })?;
            params.extend(layer.param_shapes().into_iter().map(Tensor::zeros));
        }
        if shape.len() != 1 || shape[0] < 2 {
            return Err(Error::InvalidConfig(format!(
                "model must end in a K-way vector with K >= 2, got {shape:?}"
            )));
        }
        Ok(Self {
            input_shape,
            layers,
            params,
        })
    }

    /// `input → [Dense, ReLU]* → Dense(K)`.
    pub fn mlp<R: Rng + ?Sized>(
        input_shape: [usize; 3],
        hidden: &[usize],
        classes: usize,
        rng: &mut R,
    ) -> Result<Self> {
        Self::new(input_shape, mlp_layers(input_shape, hidden, classes), rng)
    }

    /// `[Conv3×3, ReLU, MaxPool2]* → Flatten → Dense, ReLU → Dense(K)`.
    pub fn conv_net<R: Rng + ?Sized>(
        input_shape: [usize; 3],
        channels: &[usize],
        dense: usize,
        classes: usize,
        rng: &mut R,
    ) -> Result<Self> {
        Self::new(
            input_shape,
            conv_layers(input_shape, channels, dense, classes),
            rng,
        )
    }

    pub fn input_shape(&self) -> [usize; 3] {
        self.input_shape
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn params(&self) -> &[Tensor<T>] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Tensor<T>] {
        &mut self.params
    }

    /// Names in `"{layer}.weight"` / `"{layer}.bias"` form, aligned with [`Self::params`].
    pub fn param_names(&self) -> Vec<String> {
        let mut names = Vec::new();
        for (i, layer) in self.layers.iter().enumerate() {
            if !layer.param_shapes().is_empty() {
                names.push(format!("{i}.weight"));
                names.push(format!("{i}.bias"));
            }
        }
        names
    }

    pub fn param_count(&self) -> usize {
        self.params.iter().map(Tensor::len).sum()
    }

    pub fn num_classes(&self) -> usize {
        *self
            .params
            .last()
            .expect("model has a final dense layer")
            .shape()
            .last()
            .unwrap()
    }

    pub(crate) fn replace_params(&mut self, params: Vec<Tensor<T>>) -> Result<()> {
        if params.len() != self.params.len()
            || params
                .iter()
                .zip(&self.params)
                .any(|(a, b)| a.shape() != b.shape())
        {
            return Err(Error::RejectedInput("parameter shapes do not match".into()));
        }
        self.params = params;
        Ok(())
    }

    fn check_batch(&self, batch: &Tensor<T>) -> Result<()> {
        let s = batch.shape();
        if s.len() != 4 || s[1..] != self.input_shape || s[0] == 0 {
            return Err(Error::RejectedInput(format!(
                "batch shape {:?} does not match model input {:?}",
                s, self.input_shape
            )));
        }
        Ok(())
    }

    /// Records the forward pass; returns parameter handles and the logits node.
    pub fn record(
        &self,
        tape: &mut Tape<T>,
        input: Var,
        params_require_grad: bool,
    ) -> Result<(Vec<Var>, Var)> {
        let batch = tape.value(input).shape()[0];
        let handles: Vec<Var> = self
            .params
            .iter()
            .map(|p| {
                if params_require_grad {
                    tape.leaf(p.clone())
                } else {
                    tape.constant(p.clone())
                }
            })
            .collect();
        let mut h = input;
        let mut k = 0;
        for layer in &self.layers {
            h = match layer {
                Layer::Dense { .. } => {
                    let z = tape.matmul(h, handles[k])?;
                    let z = tape.add_bias(z, handles[k + 1])?;
                    k += 2;
                    z
                }
                Layer::Conv2d { .. } => {
                    let z = tape.conv2d(h, handles[k], handles[k + 1])?;
                    k += 2;
                    z
                }
                Layer::Relu => tape.relu(h),
                Layer::MaxPool2 => tape.max_pool2(h)?,
                Layer::Flatten => {
                    let n = tape.value(h).len() / batch;
                    tape.reshape(h, vec![batch, n])?
                }
            };
        }
        Ok((handles, h))
    }

    /// Logits `[b, K]` for an input batch `[b, c, h, w]`.
    pub fn logits(&self, batch: &Tensor<T>) -> Result<Tensor<T>> {
        self.check_batch(batch)?;
        let mut tape = Tape::new();
        let x = tape.constant(batch.clone());
        let (_, z) = self.record(&mut tape, x, false)?;
        Ok(tape.value(z).clone())
    }

    pub fn predict_batch(&self, batch: &Tensor<T>) -> Result<Vec<Prediction>> {
        let z = self.logits(batch)?;
        let k = self.num_classes();
        Ok(z.data().chunks(k).map(Prediction::from_logits).collect())
    }

    /// One prediction per image.
    pub fn forward(&self, images: &[Image<T>]) -> Result<Vec<Prediction>> {
        let refs: Vec<&Image<T>> = images.iter().collect();
        self.predict_batch(&stack(&refs)?)
    }

    /// Exact gradients of the mean soft cross-entropy over the batch.
    pub fn gradients(
        &self,
        batch: &Tensor<T>,
        targets: &[SoftLabel],
        want_input: bool,
    ) -> Result<GradientSet<T>> {
        self.differentiate(batch, targets, true, want_input)
    }

    /// Gradient with respect to the input only; `params` comes back empty.
    pub fn input_gradients(
        &self,
        batch: &Tensor<T>,
        targets: &[SoftLabel],
    ) -> Result<GradientSet<T>> {
        self.differentiate(batch, targets, false, true)
    }

    fn differentiate(
        &self,
        batch: &Tensor<T>,
        targets: &[SoftLabel],
        want_params: bool,
        want_input: bool,
    ) -> Result<GradientSet<T>> {
        self.check_batch(batch)?;
        let k = self.num_classes();
        if targets.len() != batch.shape()[0] {
            return Err(Error::RejectedInput(format!(
                "{} targets for a batch of {}",
                targets.len(),
                batch.shape()[0]
            )));
        }
        let mut flat = Vec::with_capacity(targets.len() * k);
        for t in targets {
            if t.num_classes() != k {
                return Err(Error::InvalidLabel(format!(
                    "{}-class target for a {k}-class model",
                    t.num_classes()
                )));
            }
            flat.extend(t.probs().iter().map(|&p| T::of(p)));
        }
        let mut tape = Tape::new();
        let x = if want_input {
            tape.leaf(batch.clone())
        } else {
            tape.constant(batch.clone())
        };
        let (handles, z) = self.record(&mut tape, x, want_params)?;
        let loss = tape.soft_cross_entropy(z, &flat)?;
        let mut grads = tape.backward(loss);
        let predictions = tape
            .value(z)
            .data()
            .chunks(k)
            .map(Prediction::from_logits)
            .collect();
        let params = if !want_params {
            Vec::new()
        } else {
            handles
                .iter()
                .zip(&self.params)
                .map(|(&h, p)| {
                    grads
                        .take(h)
                        .unwrap_or_else(|| Tensor::zeros(p.shape().to_vec()))
                })
                .collect()
        };
        let input = if want_input { grads.take(x) } else { None };
        Ok(GradientSet {
            params,
            input,
            loss: tape.value(loss).data()[0].f64(),
            predictions,
        })
    }

    /// Linear-region identifier of the forward pass (see [`Tape::piecewise_signature`]).
    pub fn piecewise_signature(&self, batch: &Tensor<T>) -> Result<Vec<u32>> {
        self.check_batch(batch)?;
        let mut tape = Tape::new();
        let x = tape.constant(batch.clone());
        self.record(&mut tape, x, false)?;
        Ok(tape.piecewise_signature())
    }

    pub fn cast<U: Scalar>(&self) -> Model<U> {
        Model {
            input_shape: self.input_shape,
            layers: self.layers.clone(),
            params: self.params.iter().map(Tensor::cast).collect(),
        }
    }
}

pub fn mlp_layers(input_shape: [usize; 3], hidden: &[usize], classes: usize) -> Vec<Layer> {
    let mut layers = vec![Layer::Flatten];
    let mut width = input_shape.iter().product();
    for &h in hidden {
        layers.push(Layer::Dense {
            inputs: width,
            outputs: h,
        });
        layers.push(Layer::Relu);
        width = h;
    }
    layers.push(Layer::Dense {
        inputs: width,
        outputs: classes,
    });
    layers
}

pub fn conv_layers(
    input_shape: [usize; 3],
    channels: &[usize],
    dense: usize,
    classes: usize,
) -> Vec<Layer> {
    let [mut c, mut h, mut w] = input_shape;
    let mut layers = Vec::new();
    for &out in channels {
        layers.push(Layer::Conv2d {
            in_channels: c,
            out_channels: out,
            kernel: 3,
        });
        layers.push(Layer::Relu);
        layers.push(Layer::MaxPool2);
        c = out;
        h /= 2;
        w /= 2;
    }
    layers.push(Layer::Flatten);
    let mut width = c * h * w;
    if dense > 0 {
        layers.push(Layer::Dense {
            inputs: width,
            outputs: dense,
        });
        layers.push(Layer::Relu);
        width = dense;
    }
    layers.push(Layer::Dense {
        inputs: width,
        outputs: classes,
    });
    layers
}
