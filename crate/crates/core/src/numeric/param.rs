use ndarray::Array2;
use rand::Rng;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// A named dense parameter tensor together with its gradient accumulator.
///
/// Vectors (biases) are stored as `1 × n`.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamBlock {
    pub name: String,
    pub values: Array2<f64>,
    pub grad: Array2<f64>,
}

impl ParamBlock {
    pub fn zeros(name: impl Into<String>, rows: usize, cols: usize) -> Self {
        ParamBlock {
            name: name.into(),
            values: Array2::zeros((rows, cols)),
            grad: Array2::zeros((rows, cols)),
        }
    }

    pub fn from_values(name: impl Into<String>, values: Array2<f64>) -> Self {
        let grad = Array2::zeros(values.raw_dim());
        ParamBlock {
            name: name.into(),
            values,
            grad,
        }
    }

    /// Uniform in ±√(6 / (fan_in + fan_out)) with `fan_in = rows`,
    /// `fan_out = cols`.
    pub fn glorot<R: Rng + ?Sized>(name: impl Into<String>, rows: usize, cols: usize, rng: &mut R) -> Self {
        let limit = (6.0 / (rows + cols) as f64).sqrt();
        let values = Array2::from_shape_fn((rows, cols), |_| rng.gen_range(-limit..=limit));
        Self::from_values(name, values)
    }

    pub fn shape(&self) -> (usize, usize) {
        self.values.dim()
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn zero_grad(&mut self) {
        self.grad.fill(0.0);
    }

    pub fn check_finite(&self) -> Result<()> {
        if self.values.iter().all(|v| v.is_finite()) {
            Ok(())
        } else {
            Err(Error::Data(format!("parameter block `{}` holds non-finite values", self.name)))
        }
    }
}

/// Anything that owns an ordered list of parameter blocks.
pub trait Params {
    fn blocks(&self) -> Vec<&ParamBlock>;
    fn blocks_mut(&mut self) -> Vec<&mut ParamBlock>;

    fn zero_grad(&mut self) {
        for b in self.blocks_mut() {
            b.zero_grad();
        }
    }

    fn num_params(&self) -> usize {
        self.blocks().iter().map(|b| b.len()).sum()
    }

    fn grad_norm(&self) -> f64 {
        self.blocks()
            .iter()
            .flat_map(|b| b.grad.iter())
            .map(|g| g * g)
            .sum::<f64>()
            .sqrt()
    }

    /// SHA-256 over block names, shapes and the exact bit patterns of the
    /// values.
    fn fingerprint(&self) -> [u8; 32] {
        let mut h = Sha256::new();
        for b in self.blocks() {
            h.update(b.name.as_bytes());
            let (r, c) = b.shape();
            h.update((r as u64).to_le_bytes());
            h.update((c as u64).to_le_bytes());
            for v in b.values.iter() {
                h.update(v.to_bits().to_le_bytes());
            }
        }
        h.finalize().into()
    }
}

/// Rescales all gradients so that their global L2 norm is at most
/// `max_norm`. Returns the norm before clipping.
pub fn clip_grad_norm(blocks: &mut [&mut ParamBlock], max_norm: f64) -> f64 {
    let norm = blocks
        .iter()
        .flat_map(|b| b.grad.iter())
        .map(|g| g * g)
        .sum::<f64>()
        .sqrt();
    if norm > max_norm && norm.is_finite() {
        let scale = max_norm / norm;
        for b in blocks.iter_mut() {
            b.grad.mapv_inplace(|g| g * scale);
        }
    }
    norm
}
