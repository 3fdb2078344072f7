//! Minimal feed-forward network engine.
//!
//! Supports dense, 2-D convolution (no padding), max-pooling, ReLU and
//! flatten layers in 64-bit floats. The reverse pass yields gradients with
//! respect to both parameters (for training) and every neuron's
//! pre-activation (for influence analysis). A *neuron* is one output scalar of
//! a parametric layer, so a conv channel contributes one neuron per spatial
//! position.

mod arch;
mod network;
mod ops;
mod tensor;
mod train;
mod weights;

pub use arch::{Layer, ModelArch, NeuronId, ParamLayer};
pub use network::{argmax, ActivationTrace, LayerGradients};
pub use tensor::Tensor;
pub use train::{train_local, LabeledSource, Proximal, TrainHyper};
pub use weights::{LayerParams, ModelWeights};

pub(crate) use network::apply_param_layer;
