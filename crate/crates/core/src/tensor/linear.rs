use rand::{Rng, RngExt};

use super::graph::{Graph, Result, TensorId};
use super::matrix::Matrix;
use super::params::{ParamId, ParamStore};

/// Affine layer `x W + b` with `W: in x out` and `b: 1 x out`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Linear {
    pub weight: ParamId,
    pub bias: ParamId,
    pub inputs: usize,
    pub outputs: usize,
}

impl Linear {
    /// He-uniform weights scaled by `gain`, zero bias.
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        inputs: usize,
        outputs: usize,
        gain: f64,
        rng: &mut impl Rng,
    ) -> Self {
        let bound = gain * (6.0 / inputs.max(1) as f64).sqrt();
        let data = (0..inputs * outputs).map(|_| rng.random_range(-bound..bound)).collect();
        let weight = store.add(format!("{name}.weight"), Matrix::from_vec(inputs, outputs, data));
        let bias = store.add(format!("{name}.bias"), Matrix::zeros(1, outputs));
        Self { weight, bias, inputs, outputs }
    }

    pub fn forward(&self, g: &mut Graph, store: &ParamStore, x: TensorId) -> Result<TensorId> {
        let w = g.param(store, self.weight);
        let b = g.param(store, self.bias);
        let y = g.matmul(x, w)?;
        g.add(y, b)
    }

    /// Same as [`Linear::forward`] but multiplies by `|W|`, making the map
    /// non-decreasing in every input.
    pub fn forward_positive(&self, g: &mut Graph, store: &ParamStore, x: TensorId) -> Result<TensorId> {
        let w = g.param(store, self.weight);
        let w = g.abs(w);
        let b = g.param(store, self.bias);
        let y = g.matmul(x, w)?;
        g.add(y, b)
    }

    pub fn forward_relu(&self, g: &mut Graph, store: &ParamStore, x: TensorId) -> Result<TensorId> {
        let y = self.forward(g, store, x)?;
        Ok(g.relu(y))
    }
}
