use ndarray::{Array2, ArrayView2, Axis};
use rand::Rng;

use super::param::ParamBlock;
use crate::error::{Error, Result};

/// Affine layer `y = x·W + b` with `W: in × out`, `b: 1 × out`.
#[derive(Clone, Debug, PartialEq)]
pub struct Linear {
    pub weight: ParamBlock,
    pub bias: ParamBlock,
}

impl Linear {
    pub fn new<R: Rng + ?Sized>(name: &str, input: usize, output: usize, rng: &mut R) -> Self {
        Linear {
            weight: ParamBlock::glorot(format!("{name}.weight"), input, output, rng),
            bias: ParamBlock::zeros(format!("{name}.bias"), 1, output),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.weight.shape().0
    }

    pub fn output_dim(&self) -> usize {
        self.weight.shape().1
    }

    pub fn apply(&self, x: ArrayView2<f64>) -> Array2<f64> {
        let mut y = x.dot(&self.weight.values);
        y += &self.bias.values;
        y
    }
}

/// ReLU-activated stack of affine layers; the last layer is linear.
#[derive(Clone, Debug, PartialEq)]
pub struct Mlp {
    layers: Vec<Linear>,
}

/// Activations recorded by [`Mlp::forward`]: the input of every layer.
#[derive(Clone, Debug, Default)]
pub struct MlpCache {
    inputs: Vec<Array2<f64>>,
}

impl Mlp {
    /// `widths = [input, hidden.., output]`.
    pub fn new<R: Rng + ?Sized>(prefix: &str, widths: &[usize], rng: &mut R) -> Result<Self> {
        if widths.len() < 2 || widths.contains(&0) {
            return Err(Error::shape(format!("{prefix} widths"), "≥ 2 positive widths", format!("{widths:?}")));
        }
        let layers = widths
            .windows(2)
            .enumerate()
            .map(|(i, w)| Linear::new(&format!("{prefix}.{i}"), w[0], w[1], rng))
            .collect();
        Self::from_layers(layers)
    }

    /// Validates that consecutive layer shapes chain.
    pub fn from_layers(layers: Vec<Linear>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::shape("mlp", "at least one layer", "none"));
        }
        for (i, l) in layers.iter().enumerate() {
            if l.bias.shape() != (1, l.output_dim()) {
                return Err(Error::shape(
                    format!("{} bias", l.weight.name),
                    format!("(1, {})", l.output_dim()),
                    format!("{:?}", l.bias.shape()),
                ));
            }
            if i > 0 && layers[i - 1].output_dim() != l.input_dim() {
                return Err(Error::shape(
                    format!("layer {i} input"),
                    layers[i - 1].output_dim(),
                    l.input_dim(),
                ));
            }
        }
        Ok(Mlp { layers })
    }

    pub fn layers(&self) -> &[Linear] {
        &self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].input_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().unwrap().output_dim()
    }

    pub fn final_layer(&self) -> &Linear {
        self.layers.last().unwrap()
    }

    pub fn final_layer_mut(&mut self) -> &mut Linear {
        self.layers.last_mut().unwrap()
    }

    pub fn blocks(&self) -> Vec<&ParamBlock> {
        self.layers.iter().flat_map(|l| [&l.weight, &l.bias]).collect()
    }

    pub fn blocks_mut(&mut self) -> Vec<&mut ParamBlock> {
        self.layers.iter_mut().flat_map(|l| [&mut l.weight, &mut l.bias]).collect()
    }

    fn check_input(&self, x: &ArrayView2<f64>) -> Result<()> {
        if x.ncols() != self.input_dim() {
            return Err(Error::shape("mlp input", self.input_dim(), x.ncols()));
        }
        Ok(())
    }

    /// Forward pass without recording activations.
    pub fn infer(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        self.check_input(&x)?;
        let mut a = self.layers[0].apply(x);
        for l in &self.layers[1..] {
            a.mapv_inplace(relu);
            a = l.apply(a.view());
        }
        Ok(a)
    }

    pub fn forward(&self, x: ArrayView2<f64>) -> Result<(Array2<f64>, MlpCache)> {
        self.check_input(&x)?;
        let mut cache = MlpCache {
            inputs: Vec::with_capacity(self.layers.len()),
        };
        let mut a = x.to_owned();
        for (i, l) in self.layers.iter().enumerate() {
            let mut z = l.apply(a.view());
            cache.inputs.push(a);
            if i + 1 < self.layers.len() {
                z.mapv_inplace(relu);
            }
            a = z;
        }
        Ok((a, cache))
    }

    /// Accumulates parameter gradients for `grad_out = ∂L/∂output` and
    /// returns `∂L/∂input`.
    pub fn backward(&mut self, cache: &MlpCache, grad_out: ArrayView2<f64>) -> Result<Array2<f64>> {
        if cache.inputs.len() != self.layers.len() {
            return Err(Error::MissingForwardCache(format!(
                "cache holds {} layer inputs, network has {} layers",
                cache.inputs.len(),
                self.layers.len()
            )));
        }
        let rows = cache.inputs[0].nrows();
        if grad_out.dim() != (rows, self.output_dim()) {
            return Err(Error::shape("mlp grad_out", format!("({rows}, {})", self.output_dim()), format!("{:?}", grad_out.dim())));
        }
        let mut g = grad_out.to_owned();
        for (i, l) in self.layers.iter_mut().enumerate().rev() {
            let input = &cache.inputs[i];
            l.weight.grad += &input.t().dot(&g);
            l.bias.grad += &g.sum_axis(Axis(0)).insert_axis(Axis(0));
            let mut g_in = g.dot(&l.weight.values.t());
            if i > 0 {
                // input of layer i is relu(z_{i-1}); it is positive exactly where z_{i-1} is
                ndarray::Zip::from(&mut g_in).and(input).for_each(|gi, &a| {
                    if a <= 0.0 {
                        *gi = 0.0;
                    }
                });
            }
            g = g_in;
        }
        Ok(g)
    }
}

#[inline]
fn relu(x: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        0.0
    }
}
