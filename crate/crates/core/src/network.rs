//! Executable network assembled from a [`NetSpec`].

use thiserror::Error;

use crate::init::EngineRng;
use crate::layers::{self, LayerError, ParamBlock};
use crate::loss::{self, CombinedLoss, LossError, LossKind, LossSpec};
use crate::netspec::{latent_index, Activation, LayerKind, NetSpec, NetSpecError};
use crate::tensor::{Shape, Tensor, TensorError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NetworkError {
    #[error(transparent)]
    Spec(#[from] NetSpecError),
    #[error("layer `{layer}`: {source}")]
    Layer { layer: String, source: LayerError },
    #[error(transparent)]
    Loss(#[from] LossError),
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error("configuration error: {0}")]
    Config(String),
}

/// Trainable block of one layer, tagged with the layer it belongs to.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerParams {
    pub layer: usize,
    pub name: String,
    pub block: ParamBlock,
}

/// One recorded intermediate value: a layer's own output, or the output
/// of the sigmoid attached to it.
#[derive(Debug, Clone, PartialEq)]
pub struct Stage {
    pub layer: usize,
    pub name: String,
    pub post_activation: bool,
    pub output: Tensor,
}

/// Everything the backward pass needs from a forward pass.
#[derive(Debug, Clone)]
pub struct Activations {
    pub input: Tensor,
    /// Raw output of each evaluated layer.
    main: Vec<Tensor>,
    /// Sigmoid output for layers with an attached activation.
    post: Vec<Option<Tensor>>,
}

impl Activations {
    /// Final output of layer `i` (post-activation when one is attached).
    pub fn output(&self, i: usize) -> &Tensor {
        self.post[i].as_ref().unwrap_or(&self.main[i])
    }

    pub fn layer_count(&self) -> usize {
        self.main.len()
    }
}

/// Sample-averaged reconstruction losses.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossPair {
    pub sce: f64,
    pub euclidean: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    spec: NetSpec,
    params: Vec<LayerParams>,
    output_layer: usize,
}

impl Network {
    /// Builds a network with all parameters zero. Shapes are inferred if the
    /// spec has not been annotated yet.
    pub fn new(spec: NetSpec) -> Result<Self, NetworkError> {
        let spec = if spec.is_inferred() { spec } else { spec.infer_shapes()? };
        if spec.losses.is_empty() {
            return Err(NetworkError::Config(format!("net `{}` declares no loss", spec.name)));
        }
        let pred = &spec.losses[0].pred_layer;
        if spec.losses.iter().any(|l| &l.pred_layer != pred) {
            return Err(NetworkError::Config(
                "all losses must be attached to the same reconstruction layer".into(),
            ));
        }
        let output_layer = spec
            .layer_index(pred)
            .ok_or_else(|| NetworkError::Config(format!("loss references unknown layer `{pred}`")))?;
        let out_shape = spec.inferred_shapes[output_layer];
        if out_shape.per_sample() != spec.input_shape.per_sample() {
            return Err(NetworkError::Config(format!(
                "reconstruction `{pred}` has {} elements per sample, input has {}",
                out_shape.per_sample(),
                spec.input_shape.per_sample()
            )));
        }

        let mut params = Vec::new();
        for (i, layer) in spec.layers.iter().enumerate() {
            let input = if i == 0 { spec.input_shape } else { spec.inferred_shapes[i - 1] };
            let weight_shape = match layer.kind {
                LayerKind::Conv { kernel, num_output } => Shape::new(num_output, input.c(), kernel, kernel),
                LayerKind::Deconv { kernel, num_output } => Shape::new(input.c(), num_output, kernel, kernel),
                LayerKind::Fc { num_output } => Shape::new(num_output, input.per_sample(), 1, 1),
                LayerKind::Reshape { .. } | LayerKind::Sigmoid => continue,
            };
            let bias_len = layer.kind.num_output().unwrap_or(0);
            params.push(LayerParams {
                layer: i,
                name: layer.name.clone(),
                block: ParamBlock::zeros(weight_shape, bias_len)?,
            });
        }
        Ok(Network {
            spec,
            params,
            output_layer,
        })
    }

    /// Builds and fills every block from its layer's fillers, in layer
    /// order, weights before biases.
    pub fn initialized(spec: NetSpec, rng: &mut EngineRng) -> Result<Self, NetworkError> {
        let mut net = Self::new(spec)?;
        net.initialize(rng);
        Ok(net)
    }

    pub fn initialize(&mut self, rng: &mut EngineRng) {
        for p in &mut self.params {
            let layer = &self.spec.layers[p.layer];
            let fan_in = p.block.weights.len() / layer.kind.num_output().unwrap_or(1).max(1);
            layer.weight_filler.fill(p.block.weights.data_mut(), fan_in, rng);
            layer.bias_filler.fill(&mut p.block.biases, fan_in, rng);
            p.block.weight_momentum.fill(0.0);
            p.block.bias_momentum.fill(0.0);
            p.block.zero_grad();
        }
    }

    pub fn spec(&self) -> &NetSpec {
        &self.spec
    }

    pub fn name(&self) -> &str {
        &self.spec.name
    }

    pub fn params(&self) -> &[LayerParams] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [LayerParams] {
        &mut self.params
    }

    pub fn block(&self, name: &str) -> Option<&ParamBlock> {
        self.params.iter().find(|p| p.name == name).map(|p| &p.block)
    }

    pub fn block_mut(&mut self, name: &str) -> Option<&mut ParamBlock> {
        self.params.iter_mut().find(|p| p.name == name).map(|p| &mut p.block)
    }

    pub fn output_layer(&self) -> usize {
        self.output_layer
    }

    pub fn latent_layer(&self) -> Result<usize, NetworkError> {
        Ok(latent_index(&self.spec)?)
    }

    pub fn zero_grad(&mut self) {
        for p in &mut self.params {
            p.block.zero_grad();
        }
    }

    fn param_index(&self, layer: usize) -> Option<usize> {
        self.params.iter().position(|p| p.layer == layer)
    }

    fn layer_err(&self, i: usize) -> impl Fn(LayerError) -> NetworkError + '_ {
        move |source| NetworkError::Layer {
            layer: self.spec.layers[i].name.clone(),
            source,
        }
    }

    /// Runs layers `0..=last` on `x`.
    pub fn forward_to(&self, x: &Tensor, last: usize) -> Result<Activations, NetworkError> {
        let expected = self.spec.input_shape.with_batch(x.shape().n());
        x.expect_shape(expected)?;
        let mut main: Vec<Tensor> = Vec::with_capacity(last + 1);
        let mut post: Vec<Option<Tensor>> = Vec::with_capacity(last + 1);
        for (i, layer) in self.spec.layers.iter().enumerate().take(last + 1) {
            let input = if i == 0 {
                x
            } else {
                post[i - 1].as_ref().unwrap_or(&main[i - 1])
            };
            let err = self.layer_err(i);
            let block = self.param_index(i).map(|pi| &self.params[pi].block);
            let y = match &layer.kind {
                LayerKind::Conv { .. } => layers::conv_forward(input, block.expect("conv params")).map_err(err)?,
                LayerKind::Deconv { .. } => {
                    layers::deconv_forward(input, block.expect("deconv params")).map_err(err)?
                }
                LayerKind::Fc { .. } => layers::fc_forward(input, block.expect("fc params")).map_err(err)?,
                LayerKind::Reshape { dims } => layers::reshape_forward(input.clone(), *dims).map_err(err)?,
                LayerKind::Sigmoid => layers::sigmoid_forward(input),
            };
            let activated = match layer.activation {
                Activation::Sigmoid => Some(layers::sigmoid_forward(&y)),
                Activation::None => None,
            };
            main.push(y);
            post.push(activated);
        }
        Ok(Activations {
            input: x.clone(),
            main,
            post,
        })
    }

    /// Forward pass up to and including the reconstruction layer.
    pub fn forward(&self, x: &Tensor) -> Result<Activations, NetworkError> {
        self.forward_to(x, self.output_layer)
    }

    /// Every intermediate value of a forward pass over all layers, in order.
    pub fn stages(&self, x: &Tensor) -> Result<Vec<Stage>, NetworkError> {
        let acts = self.forward_to(x, self.spec.layers.len() - 1)?;
        let mut stages = Vec::new();
        for (i, layer) in self.spec.layers.iter().enumerate() {
            stages.push(Stage {
                layer: i,
                name: layer.name.clone(),
                post_activation: matches!(layer.kind, LayerKind::Sigmoid),
                output: acts.main[i].clone(),
            });
            if let Some(y) = &acts.post[i] {
                stages.push(Stage {
                    layer: i,
                    name: format!("{}sig", layer.name),
                    post_activation: true,
                    output: y.clone(),
                });
            }
        }
        Ok(stages)
    }

    /// Back-propagates `grad_out` (∂L/∂ output of the reconstruction layer),
    /// accumulating into every block's gradient buffers.
    pub fn backward(&mut self, acts: &Activations, grad_out: Tensor) -> Result<(), NetworkError> {
        let mut grad = grad_out;
        let last = acts.layer_count() - 1;
        for i in (0..=last).rev() {
            if let Some(y) = &acts.post[i] {
                grad = layers::sigmoid_backward(y, &grad).map_err(self.layer_err(i))?;
            }
            let input = if i == 0 { &acts.input } else { acts.output(i - 1) };
            let pi = self.param_index(i);
            let name = self.spec.layers[i].name.clone();
            let err = |source| NetworkError::Layer {
                layer: name.clone(),
                source,
            };
            let kind = self.spec.layers[i].kind.clone();
            let first = i == 0;
            grad = match kind {
                LayerKind::Conv { .. } => {
                    let block = &mut self.params[pi.expect("conv params")].block;
                    if first {
                        layers::conv_backward_params(input, block, &grad).map_err(err)?;
                        break;
                    }
                    layers::conv_backward(input, block, &grad).map_err(err)?
                }
                LayerKind::Deconv { .. } => {
                    let block = &mut self.params[pi.expect("deconv params")].block;
                    if first {
                        layers::deconv_backward_params(input, block, &grad).map_err(err)?;
                        break;
                    }
                    layers::deconv_backward(input, block, &grad).map_err(err)?
                }
                LayerKind::Fc { .. } => {
                    let block = &mut self.params[pi.expect("fc params")].block;
                    if first {
                        layers::fc_backward_params(input, block, &grad).map_err(err)?;
                        break;
                    }
                    layers::fc_backward(input, block, &grad).map_err(err)?
                }
                LayerKind::Reshape { .. } => layers::reshape_backward(grad, input.shape()).map_err(err)?,
                LayerKind::Sigmoid => layers::sigmoid_backward(&acts.main[i], &grad).map_err(err)?,
            };
        }
        Ok(())
    }

    /// Reconstruction objective of the current parameters on `x`, with `x`
    /// itself as target. Does not touch gradients.
    pub fn loss(&self, x: &Tensor) -> Result<CombinedLoss, NetworkError> {
        let acts = self.forward(x)?;
        Ok(loss::combined_loss(acts.output(self.output_layer), x, &self.spec.losses)?)
    }

    /// Forward, dual loss and backward on one batch. Gradients are
    /// accumulated, not cleared.
    pub fn loss_and_backward(&mut self, x: &Tensor) -> Result<CombinedLoss, NetworkError> {
        let acts = self.forward(x)?;
        let combined = loss::combined_loss(acts.output(self.output_layer), x, &self.spec.losses)?;
        self.backward(&acts, combined.grad.clone())?;
        Ok(combined)
    }

    /// Both reconstruction losses on `x`. Cross-entropy is measured on the
    /// raw output; Euclidean follows the net's Euclidean loss spec
    /// (through a sigmoid when no such spec exists).
    pub fn loss_pair(&self, x: &Tensor) -> Result<LossPair, NetworkError> {
        let acts = self.forward(x)?;
        let logits = acts.output(self.output_layer);
        Ok(measure_pair(&self.spec.losses, logits, x)?)
    }

    pub fn set_params(&mut self, params: Vec<LayerParams>) -> Result<(), NetworkError> {
        if params.len() != self.params.len() {
            return Err(NetworkError::Config(format!(
                "expected {} parameter blocks, got {}",
                self.params.len(),
                params.len()
            )));
        }
        for (mine, theirs) in self.params.iter().zip(&params) {
            if mine.name != theirs.name
                || mine.block.weights.shape() != theirs.block.weights.shape()
                || mine.block.biases.len() != theirs.block.biases.len()
            {
                return Err(NetworkError::Config(format!(
                    "parameter block `{}` does not match `{}` {}",
                    theirs.name,
                    mine.name,
                    mine.block.weights.shape()
                )));
            }
        }
        self.params = params;
        Ok(())
    }
}

pub fn measure_pair(specs: &[LossSpec], logits: &Tensor, target: &Tensor) -> Result<LossPair, LossError> {
    let (sce, _) = loss::sce_loss(logits, target)?;
    let squash = specs
        .iter()
        .find(|s| s.kind == LossKind::Euclidean)
        .is_none_or(|s| s.apply_sigmoid_to_pred);
    let pred = if squash { logits.map(layers::sigmoid) } else { logits.clone() };
    let (euclidean, _) = loss::euclidean_loss(&pred, target)?;
    Ok(LossPair { sce, euclidean })
}
