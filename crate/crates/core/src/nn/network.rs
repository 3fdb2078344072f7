use super::ops::{self, ConvGeom};
use super::{Layer, LayerParams, ModelArch, ModelWeights, NeuronId, Tensor};
use crate::{Error, Result};

/// Everything recorded during one forward pass.
///
/// Holds the output of every layer so the reverse pass can be replayed
/// without recomputation. Per parametric layer `j` it exposes the layer's
/// input `z̄`, its pre-activation `w·z̄ + b` and its post-activation (after the
/// ReLU that immediately follows it, identity otherwise).
#[derive(Debug, Clone, PartialEq)]
pub struct ActivationTrace {
    values: Vec<Tensor>,
    params: Vec<(usize, bool)>,
}

impl ActivationTrace {
    pub fn num_param_layers(&self) -> usize {
        self.params.len()
    }

    pub fn layer_input(&self, layer: usize) -> &Tensor {
        &self.values[self.params[layer].0]
    }

    pub fn pre_activation(&self, layer: usize) -> &Tensor {
        &self.values[self.params[layer].0 + 1]
    }

    pub fn post_activation(&self, layer: usize) -> &Tensor {
        let (op, relu) = self.params[layer];
        if relu {
            &self.values[op + 2]
        } else {
            &self.values[op + 1]
        }
    }

    pub fn input(&self) -> &Tensor {
        &self.values[0]
    }

    pub fn logits(&self) -> &Tensor {
        self.values.last().expect("trace always holds the input")
    }

    pub fn total_neurons(&self) -> usize {
        (0..self.params.len()).map(|j| self.pre_activation(j).len()).sum()
    }

    pub fn predicted_class(&self) -> usize {
        argmax(self.logits().data())
    }
}

/// Gradients of one selected output with respect to every neuron.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerGradients {
    /// `∂y/∂pre_activation`, one vector per parametric layer.
    pub pre: Vec<Vec<f64>>,
    /// `∂y/∂post_activation`, one vector per parametric layer.
    pub post: Vec<Vec<f64>>,
}

impl LayerGradients {
    pub fn get(&self, id: NeuronId) -> f64 {
        self.pre[id.layer][id.index]
    }
}

/// Index of the largest value; ties go to the lowest index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

fn param_geom(arch: &ModelArch, op: usize) -> ConvGeom {
    match arch.layers()[op] {
        Layer::Conv2d { kernel, stride, .. } => {
            let input = if op == 0 {
                arch.input_shape()
            } else {
                arch.layer_output_shape(op - 1)
            };
            ConvGeom::from_shapes(input, arch.layer_output_shape(op), kernel, stride)
        }
        _ => unreachable!("only conv layers have a geometry"),
    }
}

/// Applies one parametric layer's parameters to `input`.
pub(crate) fn apply_param_layer(arch: &ModelArch, op: usize, p: &LayerParams, input: &[f64]) -> Vec<f64> {
    match arch.layers()[op] {
        Layer::Dense { .. } => ops::dense_forward(p.weight.data(), p.bias.data(), input),
        Layer::Conv2d { .. } => ops::conv_forward(p.weight.data(), p.bias.data(), input, param_geom(arch, op)),
        _ => unreachable!(),
    }
}

impl ModelArch {
    fn op_input_shape(&self, op: usize) -> &[usize] {
        if op == 0 {
            self.input_shape()
        } else {
            self.layer_output_shape(op - 1)
        }
    }

    /// Runs every layer, optionally adding `delta` to one neuron's
    /// pre-activation before its nonlinearity.
    pub(crate) fn run(
        &self,
        weights: &ModelWeights,
        input: &[f64],
        inject: Option<(NeuronId, f64)>,
    ) -> Result<Vec<Tensor>> {
        if input.len() != self.input_len() {
            return Err(Error::Shape(format!(
                "input has {} values, architecture expects {:?}",
                input.len(),
                self.input_shape()
            )));
        }
        if weights.params.len() != self.param_layers().len() {
            weights.check(self)?;
        }
        let mut values = Vec::with_capacity(self.layers().len() + 1);
        values.push(Tensor::from_parts(self.input_shape().to_vec(), input.to_vec()));
        let mut param = 0;
        for (op, layer) in self.layers().iter().enumerate() {
            let x = values[op].data();
            let mut out = match *layer {
                Layer::Dense { .. } | Layer::Conv2d { .. } => {
                    let mut out = apply_param_layer(self, op, &weights.params[param], x);
                    if let Some((id, delta)) = inject {
                        if id.layer == param {
                            out[id.index] += delta;
                        }
                    }
                    param += 1;
                    out
                }
                Layer::MaxPool { window } => ops::maxpool_forward(x, self.op_input_shape(op), window),
                Layer::Relu => x.iter().map(|&v| v.max(0.0)).collect(),
                Layer::Flatten => x.to_vec(),
            };
            if layer.is_parametric() && out.iter().any(|v| !v.is_finite()) {
                return Err(Error::Numeric(format!("layer {op} ({layer:?}) produced a non-finite value")));
            }
            // ReLU of -0.0 stays -0.0 under f64::max; normalize for stable traces.
            if matches!(layer, Layer::Relu) {
                for v in &mut out {
                    if *v == 0.0 {
                        *v = 0.0;
                    }
                }
            }
            values.push(Tensor::from_parts(self.layer_output_shape(op).to_vec(), out));
        }
        Ok(values)
    }

    pub fn forward(&self, weights: &ModelWeights, input: &Tensor) -> Result<(Tensor, ActivationTrace)> {
        if input.shape() != self.input_shape() {
            return Err(Error::Shape(format!(
                "input shape {:?} does not match architecture input {:?}",
                input.shape(),
                self.input_shape()
            )));
        }
        let trace = self.trace(weights, input.data())?;
        Ok((trace.logits().clone(), trace))
    }

    /// Forward pass on a flat input of the architecture's input length.
    pub fn trace(&self, weights: &ModelWeights, input: &[f64]) -> Result<ActivationTrace> {
        let values = self.run(weights, input, None)?;
        Ok(ActivationTrace {
            values,
            params: self.param_layers().iter().map(|p| (p.op_index, p.relu)).collect(),
        })
    }

    pub fn logits(&self, weights: &ModelWeights, input: &[f64]) -> Result<Tensor> {
        let mut values = self.run(weights, input, None)?;
        Ok(values.pop().expect("non-empty"))
    }

    pub fn predict(&self, weights: &ModelWeights, input: &[f64]) -> Result<usize> {
        Ok(argmax(self.logits(weights, input)?.data()))
    }

    /// Forward pass with `delta` added to `neuron`'s pre-activation.
    pub fn override_activation(
        &self,
        weights: &ModelWeights,
        input: &[f64],
        neuron: NeuronId,
        delta: f64,
    ) -> Result<Tensor> {
        self.check_neuron(neuron)?;
        let mut values = self.run(weights, input, Some((neuron, delta)))?;
        Ok(values.pop().expect("non-empty"))
    }

    /// Gradient of logit `class_index` with respect to every neuron.
    ///
    /// The trace must come from [`ModelArch::trace`] with these same weights;
    /// this is not checked.
    pub fn backward_influence(
        &self,
        weights: &ModelWeights,
        trace: &ActivationTrace,
        class_index: usize,
    ) -> Result<LayerGradients> {
        if class_index >= self.num_classes() {
            return Err(Error::Contract(format!(
                "class {class_index} out of range for {} classes",
                self.num_classes()
            )));
        }
        let mut seed = vec![0.0; self.num_classes()];
        seed[class_index] = 1.0;
        let mut grads = LayerGradients {
            pre: Vec::new(),
            post: Vec::new(),
        };
        self.backprop(weights, &trace.values, seed, None, Some(&mut grads));
        Ok(grads)
    }

    /// Reverse pass from `grad_out` (gradient w.r.t. the logits).
    ///
    /// Accumulates parameter gradients into `param_grads` and/or records
    /// per-neuron gradients into `neurons` when given.
    pub(crate) fn backprop(
        &self,
        weights: &ModelWeights,
        values: &[Tensor],
        grad_out: Vec<f64>,
        mut param_grads: Option<&mut [LayerParams]>,
        mut neurons: Option<&mut LayerGradients>,
    ) {
        let n_params = self.param_layers().len();
        if let Some(n) = neurons.as_deref_mut() {
            n.pre = vec![Vec::new(); n_params];
            n.post = vec![Vec::new(); n_params];
        }
        let mut g = grad_out;
        let mut param = n_params;
        for (op, layer) in self.layers().iter().enumerate().rev() {
            let x = values[op].data();
            let need_input_grad = op > 0;
            g = match *layer {
                Layer::Dense { .. } | Layer::Conv2d { .. } => {
                    param -= 1;
                    if let Some(n) = neurons.as_deref_mut() {
                        if n.post[param].is_empty() {
                            n.post[param] = g.clone();
                        }
                        n.pre[param] = g.clone();
                    }
                    let p = &weights.params[param];
                    let grads = param_grads
                        .as_deref_mut()
                        .map(|pg| {
                            let LayerParams { weight, bias } = &mut pg[param];
                            (weight.data_mut(), bias.data_mut())
                        });
                    let mut gx = vec![0.0; if need_input_grad { x.len() } else { 0 }];
                    let gx_opt = need_input_grad.then_some(gx.as_mut_slice());
                    match *layer {
                        Layer::Dense { .. } => ops::dense_backward(p.weight.data(), x, &g, gx_opt, grads),
                        _ => ops::conv_backward(p.weight.data(), x, &g, param_geom(self, op), gx_opt, grads),
                    }
                    gx
                }
                Layer::Relu => {
                    // gradient w.r.t. the post-activation of the layer feeding this ReLU
                    if op > 0 && self.layers()[op - 1].is_parametric() {
                        if let Some(n) = neurons.as_deref_mut() {
                            n.post[param - 1] = g.clone();
                        }
                    }
                    g.iter().zip(x).map(|(&gi, &xi)| if xi > 0.0 { gi } else { 0.0 }).collect()
                }
                Layer::MaxPool { window } => ops::maxpool_backward(x, self.op_input_shape(op), window, &g),
                Layer::Flatten => g,
            };
            if !need_input_grad {
                break;
            }
        }
    }
}
