use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Layer {
    Dense {
        inputs: usize,
        outputs: usize,
    },
    Conv2d {
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
    },
    MaxPool {
        window: usize,
    },
    Relu,
    Flatten,
}

impl Layer {
    pub fn is_parametric(&self) -> bool {
        matches!(self, Layer::Dense { .. } | Layer::Conv2d { .. })
    }

    fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>> {
        let bad = |why: &str| Err(Error::Shape(format!("{self:?} on input {input:?}: {why}")));
        match *self {
            Layer::Dense { inputs, outputs } => {
                if inputs == 0 || outputs == 0 {
                    return bad("zero width");
                }
                if input != [inputs] {
                    return bad("dense layers take a flat vector of `inputs` values");
                }
                Ok(vec![outputs])
            }
            Layer::Conv2d {
                in_channels,
                out_channels,
                kernel,
                stride,
            } => {
                if in_channels == 0 || out_channels == 0 || kernel == 0 || stride == 0 {
                    return bad("zero-sized conv parameter");
                }
                let &[c, h, w] = input else {
                    return bad("conv layers take [channels, height, width]");
                };
                if c != in_channels {
                    return bad("channel count mismatch");
                }
                if h < kernel || w < kernel {
                    return bad("kernel larger than input");
                }
                Ok(vec![
                    out_channels,
                    (h - kernel) / stride + 1,
                    (w - kernel) / stride + 1,
                ])
            }
            Layer::MaxPool { window } => {
                let &[c, h, w] = input else {
                    return bad("pooling takes [channels, height, width]");
                };
                if window == 0 || h < window || w < window {
                    return bad("pool window does not fit");
                }
                Ok(vec![c, h / window, w / window])
            }
            Layer::Relu => Ok(input.to_vec()),
            Layer::Flatten => Ok(vec![input.iter().product()]),
        }
    }
}

/// A parametric layer as seen by the trace and the provenance engine.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParamLayer {
    /// Position of the layer in [`ModelArch::layers`].
    pub op_index: usize,
    pub input_shape: Vec<usize>,
    pub output_shape: Vec<usize>,
    /// Whether a ReLU immediately follows; otherwise post-activation == pre-activation.
    pub relu: bool,
}

impl ParamLayer {
    pub fn neurons(&self) -> usize {
        self.output_shape.iter().product()
    }
}

/// Identifies one output scalar of a parametric layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct NeuronId {
    /// Index among the parametric layers (not among all layers).
    pub layer: usize,
    /// Row-major index into that layer's output tensor.
    pub index: usize,
}

impl NeuronId {
    pub fn new(layer: usize, index: usize) -> Self {
        NeuronId { layer, index }
    }
}

#[derive(Serialize, Deserialize)]
struct ArchSpec {
    input_shape: Vec<usize>,
    layers: Vec<Layer>,
    num_classes: usize,
}

/// A validated layer stack.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ArchSpec", into = "ArchSpec")]
pub struct ModelArch {
    input_shape: Vec<usize>,
    layers: Vec<Layer>,
    num_classes: usize,
    /// Output shape of every layer.
    shapes: Vec<Vec<usize>>,
    params: Vec<ParamLayer>,
}

impl TryFrom<ArchSpec> for ModelArch {
    type Error = Error;

    fn try_from(s: ArchSpec) -> Result<Self> {
        ModelArch::new(s.input_shape, s.layers, s.num_classes)
    }
}

impl From<ModelArch> for ArchSpec {
    fn from(a: ModelArch) -> Self {
        ArchSpec {
            input_shape: a.input_shape,
            layers: a.layers,
            num_classes: a.num_classes,
        }
    }
}

impl ModelArch {
    pub fn new(input_shape: Vec<usize>, layers: Vec<Layer>, num_classes: usize) -> Result<Self> {
        if input_shape.is_empty() || input_shape.iter().any(|&d| d == 0) {
            return Err(Error::Shape(format!("invalid input shape {input_shape:?}")));
        }
        if num_classes == 0 {
            return Err(Error::config_field("num_classes", "must be positive"));
        }
        match layers.last() {
            Some(Layer::Dense { outputs, .. }) if *outputs == num_classes => {}
            _ => {
                return Err(Error::Shape(format!(
                    "final layer must be Dense with {num_classes} outputs"
                )))
            }
        }
        let mut shapes = Vec::with_capacity(layers.len());
        let mut params = Vec::new();
        let mut current = input_shape.clone();
        for (i, layer) in layers.iter().enumerate() {
            let out = layer.output_shape(&current)?;
            if layer.is_parametric() {
                params.push(ParamLayer {
                    op_index: i,
                    input_shape: current.clone(),
                    output_shape: out.clone(),
                    relu: matches!(layers.get(i + 1), Some(Layer::Relu)),
                });
            }
            shapes.push(out.clone());
            current = out;
        }
        Ok(ModelArch {
            input_shape,
            layers,
            num_classes,
            shapes,
            params,
        })
    }

    /// Plain MLP: optional flatten, `Dense -> ReLU` per hidden width, final dense.
    pub fn mlp(input_shape: Vec<usize>, hidden: &[usize], num_classes: usize) -> Result<Self> {
        let mut layers = Vec::new();
        let mut width: usize = input_shape.iter().product();
        if input_shape.len() > 1 {
            layers.push(Layer::Flatten);
        }
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
            outputs: num_classes,
        });
        ModelArch::new(input_shape, layers, num_classes)
    }

    /// LeNet-style stack: `(Conv -> ReLU -> MaxPool(2))` per channel count,
    /// flatten, hidden dense layers with ReLU, final dense.
    pub fn lenet(
        input_shape: Vec<usize>,
        channels: &[usize],
        kernel: usize,
        hidden: &[usize],
        num_classes: usize,
    ) -> Result<Self> {
        let mut layers = Vec::new();
        let mut shape = input_shape.clone();
        if shape.len() == 2 {
            return Err(Error::Shape(
                "conv models need [channels, height, width] input".into(),
            ));
        }
        for &c in channels {
            let conv = Layer::Conv2d {
                in_channels: shape[0],
                out_channels: c,
                kernel,
                stride: 1,
            };
            shape = conv.output_shape(&shape)?;
            let pool = Layer::MaxPool { window: 2 };
            shape = pool.output_shape(&shape)?;
            layers.extend([conv, Layer::Relu, pool]);
        }
        layers.push(Layer::Flatten);
        let mut width: usize = shape.iter().product();
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
            outputs: num_classes,
        });
        ModelArch::new(input_shape, layers, num_classes)
    }

    pub fn input_shape(&self) -> &[usize] {
        &self.input_shape
    }

    pub fn input_len(&self) -> usize {
        self.input_shape.iter().product()
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub(crate) fn layer_output_shape(&self, op: usize) -> &[usize] {
        &self.shapes[op]
    }

    pub fn param_layers(&self) -> &[ParamLayer] {
        &self.params
    }

    pub fn total_neurons(&self) -> usize {
        self.params.iter().map(ParamLayer::neurons).sum()
    }

    pub fn check_neuron(&self, id: NeuronId) -> Result<()> {
        match self.params.get(id.layer) {
            Some(p) if id.index < p.neurons() => Ok(()),
            _ => Err(Error::Contract(format!(
                "neuron {id:?} does not exist in this architecture"
            ))),
        }
    }

    /// FNV-1a hash of the canonical layer description; stored in checkpoints.
    pub fn fingerprint(&self) -> u64 {
        let desc = format!(
            "{:?}|{:?}|{}",
            self.input_shape, self.layers, self.num_classes
        );
        desc.bytes().fold(0xcbf2_9ce4_8422_2325u64, |h, b| {
            (h ^ u64::from(b)).wrapping_mul(0x0000_0100_0000_01b3)
        })
    }
}
