//! The three-class CNN: configuration, assembly, inference, and persistence.

mod format;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use crate::error::{Error, Result};
use crate::nn::adam::AdamState;
use crate::nn::layers::{
    conv2d_backward, conv2d_forward, dense_backward, dense_forward, maxpool2_backward,
    maxpool2_forward, param_count, relu_backward, relu_forward, softmax, DenseActivation,
    LayerSpec,
};
use crate::nn::tensor::{Scalar, Tensor};

pub use format::{load_model, save_model, MAGIC};

/// Architecture configuration. The defaults reproduce the reference stack:
/// three 1x1 convolutions (64, 128, 128 channels) with pooling after the
/// first two, a 128-wide dense layer, and a 3-way softmax head.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ModelConfig {
    pub input_side: usize,
    pub channels: usize,
    pub num_classes: usize,
    pub kernel_size: usize,
    pub conv_channels: [usize; 3],
    pub dense_width: usize,
    pub seed: u32,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            input_side: 64,
            channels: 1,
            num_classes: 3,
            kernel_size: 1,
            conv_channels: [64, 128, 128],
            dense_width: 128,
            seed: 0,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.input_side == 0 || self.input_side % 4 != 0 {
            return Err(Error::Config(format!(
                "input side {} must be a positive multiple of 4 (two pooling stages)",
                self.input_side
            )));
        }
        if self.num_classes < 2 {
            return Err(Error::Config("need at least 2 classes".into()));
        }
        if self.channels == 0 || self.kernel_size == 0 || self.dense_width == 0 {
            return Err(Error::Config("zero-sized dimension in config".into()));
        }
        if self.kernel_size % 2 == 0 {
            return Err(Error::Config(
                "kernel size must be odd for same padding".into(),
            ));
        }
        Ok(())
    }

    /// Flatten width after two 2x pooling stages.
    pub fn flatten_len(&self) -> usize {
        let side = self.input_side / 4;
        side * side * self.conv_channels[2]
    }

    /// Layer specs in stack order.
    pub fn layer_specs(&self) -> Vec<LayerSpec> {
        let k = self.kernel_size;
        vec![
            LayerSpec::Conv2d {
                in_channels: self.channels,
                out_channels: self.conv_channels[0],
                kernel_size: k,
                relu: true,
            },
            LayerSpec::MaxPool2,
            LayerSpec::Conv2d {
                in_channels: self.conv_channels[0],
                out_channels: self.conv_channels[1],
                kernel_size: k,
                relu: true,
            },
            LayerSpec::MaxPool2,
            LayerSpec::Conv2d {
                in_channels: self.conv_channels[1],
                out_channels: self.conv_channels[2],
                kernel_size: k,
                relu: true,
            },
            LayerSpec::Flatten,
            LayerSpec::Dense {
                in_features: self.flatten_len(),
                out_features: self.dense_width,
                activation: DenseActivation::Relu,
            },
            LayerSpec::Dense {
                in_features: self.dense_width,
                out_features: self.num_classes,
                activation: DenseActivation::Softmax,
            },
        ]
    }
}

/// A layer with its parameters.
#[derive(Debug, Clone)]
pub enum Layer<F> {
    Conv2d {
        weights: Tensor<F>,
        bias: Tensor<F>,
        relu: bool,
    },
    MaxPool2,
    Flatten,
    Dense {
        weights: Tensor<F>,
        bias: Tensor<F>,
        activation: DenseActivation,
    },
}

/// Per-layer forward cache consumed by the backward pass.
pub enum LayerCache<F> {
    Conv {
        input: Tensor<F>,
        relu_mask: Option<Vec<bool>>,
    },
    Pool {
        winners: Vec<usize>,
        in_shape: Vec<usize>,
    },
    Flatten {
        in_shape: Vec<usize>,
    },
    Dense {
        input: Tensor<F>,
        relu_mask: Option<Vec<bool>>,
    },
}

/// Ordered layer stack with parameters, optimizer state, and epoch counter.
#[derive(Debug, Clone)]
pub struct Model<F> {
    pub config: ModelConfig,
    layers: Vec<Layer<F>>,
    pub optimizer: Option<AdamState<F>>,
    pub epochs_trained: u32,
}

/// Build a model from a config, parameters initialized Glorot-uniform from
/// the config seed, biases zero.
pub fn build_model<F: Scalar>(config: &ModelConfig) -> Result<Model<F>> {
    config.validate()?;
    let mut rng = ChaCha20Rng::seed_from_u64(config.seed as u64);
    let mut layers = Vec::new();
    for spec in config.layer_specs() {
        layers.push(match spec {
            LayerSpec::Conv2d {
                in_channels,
                out_channels,
                kernel_size,
                relu,
            } => {
                let k2 = kernel_size * kernel_size;
                let limit = (6.0 / (k2 * in_channels + k2 * out_channels) as f64).sqrt();
                let weights = init_uniform(
                    &mut rng,
                    &[kernel_size, kernel_size, in_channels, out_channels],
                    limit,
                );
                Layer::Conv2d {
                    weights,
                    bias: Tensor::zeros(&[out_channels]),
                    relu,
                }
            }
            LayerSpec::MaxPool2 => Layer::MaxPool2,
            LayerSpec::Flatten => Layer::Flatten,
            LayerSpec::Dense {
                in_features,
                out_features,
                activation,
            } => {
                let limit = (6.0 / (in_features + out_features) as f64).sqrt();
                let weights = init_uniform(&mut rng, &[in_features, out_features], limit);
                Layer::Dense {
                    weights,
                    bias: Tensor::zeros(&[out_features]),
                    activation,
                }
            }
        });
    }
    Ok(Model {
        config: config.clone(),
        layers,
        optimizer: None,
        epochs_trained: 0,
    })
}

fn init_uniform<F: Scalar>(rng: &mut ChaCha20Rng, shape: &[usize], limit: f64) -> Tensor<F> {
    let n = shape.iter().product();
    let data = (0..n)
        .map(|_| F::from(rng.gen_range(-limit..limit)).unwrap())
        .collect();
    Tensor::from_vec(shape, data).unwrap()
}

impl<F: Scalar> Model<F> {
    pub fn layers(&self) -> &[Layer<F>] {
        &self.layers
    }

    pub(crate) fn from_parts(config: ModelConfig, layers: Vec<Layer<F>>) -> Self {
        Model {
            config,
            layers,
            optimizer: None,
            epochs_trained: 0,
        }
    }

    /// Parameter tensors in stack order (weights then bias per layer).
    pub fn params(&self) -> Vec<&Tensor<F>> {
        let mut out = Vec::new();
        for layer in &self.layers {
            match layer {
                Layer::Conv2d { weights, bias, .. } | Layer::Dense { weights, bias, .. } => {
                    out.push(weights);
                    out.push(bias);
                }
                _ => {}
            }
        }
        out
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor<F>> {
        let mut out = Vec::new();
        for layer in &mut self.layers {
            match layer {
                Layer::Conv2d { weights, bias, .. } | Layer::Dense { weights, bias, .. } => {
                    out.push(weights);
                    out.push(bias);
                }
                _ => {}
            }
        }
        out
    }

    pub fn total_params(&self) -> usize {
        self.params().iter().map(|t| t.len()).sum()
    }

    /// Per-layer parameter counts, one entry per layer in stack order.
    pub fn per_layer_params(&self) -> Vec<usize> {
        self.config.layer_specs().iter().map(param_count).collect()
    }

    /// Forward pass to the logits, with caches for backpropagation.
    pub fn forward(&self, input: &Tensor<F>) -> Result<(Tensor<F>, Vec<LayerCache<F>>)> {
        self.check_input_shape(input)?;
        let mut caches = Vec::with_capacity(self.layers.len());
        let mut cur = input.clone();
        for layer in &self.layers {
            cur = match layer {
                Layer::Conv2d {
                    weights,
                    bias,
                    relu,
                } => {
                    let pre = conv2d_forward(&cur, weights, bias)?;
                    let (out, mask) = if *relu {
                        let (o, m) = relu_forward(&pre);
                        (o, Some(m))
                    } else {
                        (pre, None)
                    };
                    caches.push(LayerCache::Conv {
                        input: cur,
                        relu_mask: mask,
                    });
                    out
                }
                Layer::MaxPool2 => {
                    let in_shape = cur.shape().to_vec();
                    let (out, winners) = maxpool2_forward(&cur)?;
                    caches.push(LayerCache::Pool { winners, in_shape });
                    out
                }
                Layer::Flatten => {
                    let in_shape = cur.shape().to_vec();
                    let n = cur.len();
                    caches.push(LayerCache::Flatten { in_shape });
                    cur.reshaped(&[n])?
                }
                Layer::Dense {
                    weights,
                    bias,
                    activation,
                } => {
                    let pre = dense_forward(&cur, weights, bias)?;
                    let (out, mask) = match activation {
                        DenseActivation::Relu => {
                            let (o, m) = relu_forward(&pre);
                            (o, Some(m))
                        }
                        // Softmax is applied by predict / the loss, not here.
                        DenseActivation::None | DenseActivation::Softmax => (pre, None),
                    };
                    caches.push(LayerCache::Dense {
                        input: cur,
                        relu_mask: mask,
                    });
                    out
                }
            };
        }
        Ok((cur, caches))
    }

    /// Backward pass from a gradient with respect to the logits; returns
    /// parameter gradients aligned with [`Model::params`].
    pub fn backward(
        &self,
        caches: &[LayerCache<F>],
        grad_logits: &Tensor<F>,
    ) -> Result<Vec<Tensor<F>>> {
        if caches.len() != self.layers.len() {
            return Err(Error::Usage(
                "backward called without a matching forward cache".into(),
            ));
        }
        let mut param_grads_rev: Vec<Tensor<F>> = Vec::new();
        let mut grad = grad_logits.clone();
        for (layer, cache) in self.layers.iter().zip(caches).rev() {
            grad = match (layer, cache) {
                (
                    Layer::Conv2d { weights, .. },
                    LayerCache::Conv { input, relu_mask },
                ) => {
                    let g = match relu_mask {
                        Some(mask) => relu_backward(&grad, mask)?,
                        None => grad,
                    };
                    let (gi, gw, gb) = conv2d_backward(&g, input, weights)?;
                    param_grads_rev.push(gb);
                    param_grads_rev.push(gw);
                    gi
                }
                (Layer::MaxPool2, LayerCache::Pool { winners, in_shape }) => {
                    maxpool2_backward(&grad, winners, in_shape)?
                }
                (Layer::Flatten, LayerCache::Flatten { in_shape }) => {
                    grad.reshaped(in_shape)?
                }
                (
                    Layer::Dense { weights, .. },
                    LayerCache::Dense { input, relu_mask },
                ) => {
                    let g = match relu_mask {
                        Some(mask) => relu_backward(&grad, mask)?,
                        None => grad,
                    };
                    let (gi, gw, gb) = dense_backward(&g, input, weights)?;
                    param_grads_rev.push(gb);
                    param_grads_rev.push(gw);
                    gi
                }
                _ => return Err(Error::Usage("cache does not match layer stack".into())),
            };
        }
        param_grads_rev.reverse();
        Ok(param_grads_rev)
    }

    /// Apply one Adam step with the given parameter gradients.
    pub fn apply_gradients(&mut self, grads: &[Tensor<F>]) -> Result<()> {
        let mut state = match self.optimizer.take() {
            Some(s) => s,
            None => {
                let shapes: Vec<Vec<usize>> =
                    self.params().iter().map(|t| t.shape().to_vec()).collect();
                AdamState::new(&shapes)
            }
        };
        let result = {
            let mut params = self.params_mut();
            crate::nn::adam::adam_step(&mut params, grads, &mut state)
        };
        self.optimizer = Some(state);
        result
    }

    /// Class probabilities for one input image tensor (values already in
    /// [0, 1], shape `[side, side, channels]`).
    pub fn predict(&self, input: &Tensor<F>) -> Result<Vec<F>> {
        let (logits, _) = self.forward(input)?;
        Ok(softmax(logits.data()))
    }

    fn check_input_shape(&self, input: &Tensor<F>) -> Result<()> {
        let expect = [
            self.config.input_side,
            self.config.input_side,
            self.config.channels,
        ];
        if input.shape() != expect {
            return Err(Error::Shape(format!(
                "input {:?}, model expects {:?}",
                input.shape(),
                expect
            )));
        }
        Ok(())
    }

    /// Text summary: one row per layer with output shape and parameter
    /// count, plus total/trainable lines.
    pub fn summary(&self) -> String {
        let specs = self.config.layer_specs();
        let side = self.config.input_side;
        let mut rows = Vec::new();
        let mut cur_side = side;
        let mut conv_idx = 0usize;
        let mut pool_idx = 0usize;
        let mut dense_idx = 0usize;
        for spec in &specs {
            let (name, shape) = match spec {
                LayerSpec::Conv2d { out_channels, .. } => {
                    let name = if conv_idx == 0 {
                        "conv2d (Conv2D)".to_string()
                    } else {
                        format!("conv2d_{conv_idx} (Conv2D)")
                    };
                    conv_idx += 1;
                    (name, format!("(None, {cur_side}, {cur_side}, {out_channels})"))
                }
                LayerSpec::MaxPool2 => {
                    cur_side /= 2;
                    let name = if pool_idx == 0 {
                        "max_pooling2d (MaxPooling2D)".to_string()
                    } else {
                        format!("max_pooling2d_{pool_idx} (MaxPooling2D)")
                    };
                    pool_idx += 1;
                    let ch = self.config.conv_channels[conv_idx - 1];
                    (name, format!("(None, {cur_side}, {cur_side}, {ch})"))
                }
                LayerSpec::Flatten => (
                    "flatten (Flatten)".to_string(),
                    format!("(None, {})", self.config.flatten_len()),
                ),
                LayerSpec::Dense { out_features, .. } => {
                    let name = if dense_idx == 0 {
                        "dense (Dense)".to_string()
                    } else {
                        format!("dense_{dense_idx} (Dense)")
                    };
                    dense_idx += 1;
                    (name, format!("(None, {out_features})"))
                }
            };
            rows.push((name, shape, param_count(spec)));
        }
        let total: usize = rows.iter().map(|r| r.2).sum();
        let mut out = String::new();
        out.push_str(&format!(
            "{:<30}{:<26}{}\n",
            "Layer (type)", "Output Shape", "Param #"
        ));
        out.push_str(&"=".repeat(65));
        out.push('\n');
        for (name, shape, count) in &rows {
            out.push_str(&format!("{name:<30}{shape:<26}{count}\n"));
        }
        out.push_str(&"=".repeat(65));
        out.push('\n');
        out.push_str(&format!("Total params: {}\n", thousands(total)));
        out.push_str(&format!("Trainable params: {}\n", thousands(total)));
        out.push_str("Non-trainable params: 0\n");
        out
    }
}

fn thousands(n: usize) -> String {
    let digits = n.to_string();
    let mut out = String::new();
    for (i, c) in digits.chars().enumerate() {
        if i > 0 && (digits.len() - i) % 3 == 0 {
            out.push(',');
        }
        out.push(c);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_model_parameter_counts() {
        let model = build_model::<f32>(&ModelConfig::default()).unwrap();
        assert_eq!(
            model.per_layer_params(),
            vec![128, 0, 8320, 0, 16512, 0, 4_194_432, 387]
        );
        assert_eq!(model.total_params(), 4_219_779);
    }

    #[test]
    fn entropy_input_changes_only_first_conv() {
        let config = ModelConfig {
            channels: 3,
            ..ModelConfig::default()
        };
        let model = build_model::<f32>(&config).unwrap();
        assert_eq!(
            model.per_layer_params(),
            vec![256, 0, 8320, 0, 16512, 0, 4_194_432, 387]
        );
    }

    #[test]
    fn kernel3_parameter_counts() {
        let config = ModelConfig {
            kernel_size: 3,
            ..ModelConfig::default()
        };
        let model = build_model::<f32>(&config).unwrap();
        let per = model.per_layer_params();
        assert_eq!(per[0], 640);
        assert_eq!(per[2], 73_856);
        assert_eq!(per[4], 147_584);
        assert_eq!(model.total_params(), 4_416_899);
    }

    #[test]
    fn forward_shapes_match_summary_column() {
        let model = build_model::<f64>(&ModelConfig::default()).unwrap();
        let input = Tensor::zeros(&[64, 64, 1]);
        let (logits, caches) = model.forward(&input).unwrap();
        assert_eq!(logits.shape(), &[3]);
        // Walk the caches to recover intermediate input shapes.
        let shapes: Vec<Vec<usize>> = caches
            .iter()
            .map(|c| match c {
                LayerCache::Conv { input, .. } => input.shape().to_vec(),
                LayerCache::Pool { in_shape, .. } => in_shape.clone(),
                LayerCache::Flatten { in_shape } => in_shape.clone(),
                LayerCache::Dense { input, .. } => input.shape().to_vec(),
            })
            .collect();
        assert_eq!(
            shapes,
            vec![
                vec![64, 64, 1],
                vec![64, 64, 64],
                vec![32, 32, 64],
                vec![32, 32, 128],
                vec![16, 16, 128],
                vec![16, 16, 128],
                vec![32768],
                vec![128],
            ]
        );
    }

    #[test]
    fn summary_matches_reference_rows() {
        let model = build_model::<f32>(&ModelConfig::default()).unwrap();
        let s = model.summary();
        assert!(s.contains("conv2d (Conv2D)"));
        assert!(s.contains("(None, 64, 64, 64)"));
        assert!(s.contains("128"));
        assert!(s.contains("conv2d_1 (Conv2D)"));
        assert!(s.contains("8320"));
        assert!(s.contains("conv2d_2 (Conv2D)"));
        assert!(s.contains("16512"));
        assert!(s.contains("(None, 32768)"));
        assert!(s.contains("4194432"));
        assert!(s.contains("(None, 3)"));
        assert!(s.contains("387"));
        assert!(s.contains("Total params: 4,219,779"));
        assert!(s.contains("Trainable params: 4,219,779"));
        assert!(s.contains("Non-trainable params: 0"));
    }

    #[test]
    fn predict_probabilities_sum_to_one() {
        let model = build_model::<f32>(&ModelConfig::default()).unwrap();
        let data: Vec<f32> = (0..64 * 64).map(|i| (i % 256) as f32 / 255.0).collect();
        let input = Tensor::from_vec(&[64, 64, 1], data).unwrap();
        let p = model.predict(&input).unwrap();
        let sum: f32 = p.iter().sum();
        assert!((sum - 1.0).abs() < 1e-6);
        // Determinism on identical inputs.
        let p2 = model.predict(&input).unwrap();
        assert_eq!(p, p2);
    }

    #[test]
    fn seed_determines_parameters() {
        let a = build_model::<f32>(&ModelConfig::default()).unwrap();
        let b = build_model::<f32>(&ModelConfig::default()).unwrap();
        let c = build_model::<f32>(&ModelConfig {
            seed: 1,
            ..ModelConfig::default()
        })
        .unwrap();
        for (x, y) in a.params().iter().zip(b.params()) {
            assert_eq!(x.data(), y.data());
        }
        assert!(a
            .params()
            .iter()
            .zip(c.params())
            .any(|(x, y)| x.data() != y.data()));
    }

    #[test]
    fn bad_input_side_rejected() {
        let config = ModelConfig {
            input_side: 66,
            ..ModelConfig::default()
        };
        assert!(matches!(build_model::<f32>(&config), Err(Error::Config(_))));
    }

    #[test]
    fn wrong_input_shape_rejected() {
        let model = build_model::<f32>(&ModelConfig::default()).unwrap();
        let input = Tensor::zeros(&[32, 32, 1]);
        assert!(matches!(model.predict(&input), Err(Error::Shape(_))));
    }

    #[test]
    fn thousands_grouping() {
        assert_eq!(thousands(4_219_779), "4,219,779");
        assert_eq!(thousands(128), "128");
        assert_eq!(thousands(0), "0");
    }
}
