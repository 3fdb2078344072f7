use rand::Rng;

use super::{Layer, ModelArch, Tensor};
use crate::{Error, Result};

/// Weight and bias of one parametric layer.
///
/// Dense weights are `[outputs, inputs]`; conv weights are
/// `[out_channels, in_channels, kernel, kernel]`. Biases are `[outputs]` /
/// `[out_channels]`.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerParams {
    pub weight: Tensor,
    pub bias: Tensor,
}

/// Ordered parameters of one network instance.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelWeights {
    pub params: Vec<LayerParams>,
}

fn param_shapes(arch: &ModelArch) -> Vec<(Vec<usize>, Vec<usize>)> {
    arch.param_layers()
        .iter()
        .map(|p| match arch.layers()[p.op_index] {
            Layer::Dense { inputs, outputs } => (vec![outputs, inputs], vec![outputs]),
            Layer::Conv2d {
                in_channels,
                out_channels,
                kernel,
                ..
            } => (
                vec![out_channels, in_channels, kernel, kernel],
                vec![out_channels],
            ),
            _ => unreachable!("param_layers only lists parametric layers"),
        })
        .collect()
}

impl ModelWeights {
    pub fn zeros(arch: &ModelArch) -> Self {
        ModelWeights {
            params: param_shapes(arch)
                .into_iter()
                .map(|(w, b)| LayerParams {
                    weight: Tensor::zeros(&w),
                    bias: Tensor::zeros(&b),
                })
                .collect(),
        }
    }

    /// Every weight and bias drawn independently from `U[-scale, scale]`.
    pub fn uniform<R: Rng>(arch: &ModelArch, scale: f64, rng: &mut R) -> Self {
        let mut w = ModelWeights::zeros(arch);
        for t in w.tensors_mut() {
            for v in t.data_mut() {
                *v = rng.random_range(-scale..=scale);
            }
        }
        w
    }

    pub fn check(&self, arch: &ModelArch) -> Result<()> {
        let shapes = param_shapes(arch);
        if shapes.len() != self.params.len() {
            return Err(Error::Shape(format!(
                "architecture has {} parametric layers, weights have {}",
                shapes.len(),
                self.params.len()
            )));
        }
        for (j, ((ws, bs), p)) in shapes.iter().zip(&self.params).enumerate() {
            if p.weight.shape() != ws.as_slice() || p.bias.shape() != bs.as_slice() {
                return Err(Error::Shape(format!(
                    "layer {j}: expected weight {ws:?} bias {bs:?}, got {:?} {:?}",
                    p.weight.shape(),
                    p.bias.shape()
                )));
            }
        }
        Ok(())
    }

    /// Tensors in checkpoint order: weight then bias per layer.
    pub fn tensors(&self) -> impl Iterator<Item = &Tensor> {
        self.params.iter().flat_map(|p| [&p.weight, &p.bias])
    }

    pub fn tensors_mut(&mut self) -> impl Iterator<Item = &mut Tensor> {
        self.params
            .iter_mut()
            .flat_map(|p| [&mut p.weight, &mut p.bias])
    }

    pub fn num_parameters(&self) -> usize {
        self.tensors().map(Tensor::len).sum()
    }

    pub fn same_shape(&self, other: &ModelWeights) -> bool {
        self.params.len() == other.params.len()
            && self.tensors().zip(other.tensors()).all(|(a, b)| a.shape() == b.shape())
    }

    pub fn l2_distance(&self, other: &ModelWeights) -> f64 {
        self.tensors()
            .zip(other.tensors())
            .flat_map(|(a, b)| a.data().iter().zip(b.data()))
            .map(|(x, y)| (x - y) * (x - y))
            .sum::<f64>()
            .sqrt()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed;

    #[test]
    fn uniform_init_within_scale_and_seeded() {
        let arch = ModelArch::lenet(vec![1, 12, 12], &[2], 3, &[], 4).unwrap();
        let a = ModelWeights::uniform(&arch, 0.05, &mut seed::rng(3));
        let b = ModelWeights::uniform(&arch, 0.05, &mut seed::rng(3));
        assert_eq!(a, b);
        assert!(a.tensors().flat_map(|t| t.data()).all(|v| v.abs() <= 0.05));
        a.check(&arch).unwrap();
        assert_eq!(a.num_parameters(), 2 * 9 + 2 + 4 * 2 * 5 * 5 + 4);
    }

    #[test]
    fn check_catches_foreign_weights() {
        let a = ModelArch::mlp(vec![4], &[3], 2).unwrap();
        let b = ModelArch::mlp(vec![4], &[5], 2).unwrap();
        assert!(ModelWeights::zeros(&b).check(&a).is_err());
    }
}
