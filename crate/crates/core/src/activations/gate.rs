//! The adaptive simplex map `y = proj_simplex(gamma * G(z))` and its monotone
//! gating network `G_i(z) = psi(phi1(z_i), sum_j phi2(z_j)) + eps * z_i`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::simplex::{project_simplex, MaskedNormalize, Normalizer, SimplexVector};
use super::{ActivationError, Result};
use crate::tensor::{Axis, Graph, Linear, Matrix, ParamId, ParamStore, TensorId};

/// Slope of the linear bypass added to every gate output. Makes the
/// order preservation strict even where all ReLU units are inactive.
pub const STRICTNESS_SLOPE: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GateWidths {
    pub phi1: usize,
    pub phi2: usize,
    pub psi: usize,
}

impl Default for GateWidths {
    fn default() -> Self {
        Self { phi1: 16, phi2: 16, psi: 64 }
    }
}

/// A map applied to the logits before projection.
pub trait GateFn {
    fn gate(&self, z: &[f64]) -> Result<Vec<f64>>;
}

/// `G(z) = z`; the adaptive map reduces to sparsemax.
#[derive(Debug, Clone, Copy, Default)]
pub struct IdentityGate;

impl GateFn for IdentityGate {
    fn gate(&self, z: &[f64]) -> Result<Vec<f64>> {
        Ok(z.to_vec())
    }
}

/// `G(z) = softmax(z)`; its output already lies on the simplex, so the
/// adaptive map with `gamma = 1` reduces to softmax.
#[derive(Debug, Clone, Copy, Default)]
pub struct SoftmaxGate;

impl GateFn for SoftmaxGate {
    fn gate(&self, z: &[f64]) -> Result<Vec<f64>> {
        super::simplex::softmax(z).map(SimplexVector::into_weights)
    }
}

/// Component-wise monotone gate. `psi` and `phi1` are applied through the
/// absolute value of their stored weights; `phi2` is unconstrained.
#[derive(Debug, Clone, PartialEq)]
pub struct MonotoneGate {
    phi1: [Linear; 2],
    phi2: [Linear; 2],
    psi: [Linear; 2],
}

impl MonotoneGate {
    pub fn new(store: &mut ParamStore, prefix: &str, widths: GateWidths, rng: &mut impl Rng) -> Self {
        let pair = |store: &mut ParamStore, name: &str, inputs: usize, hidden: usize, rng: &mut _| {
            [
                Linear::new(store, &format!("{prefix}.{name}.0"), inputs, hidden, 1.0, rng),
                Linear::new(store, &format!("{prefix}.{name}.1"), hidden, 1, 1.0, rng),
            ]
        };
        Self {
            phi1: pair(store, "phi1", 1, widths.phi1, rng),
            phi2: pair(store, "phi2", 1, widths.phi2, rng),
            psi: pair(store, "psi", 2, widths.psi, rng),
        }
    }

    pub fn param_ids(&self) -> Vec<ParamId> {
        self.phi1
            .iter()
            .chain(&self.phi2)
            .chain(&self.psi)
            .flat_map(|l| [l.weight, l.bias])
            .collect()
    }

    /// Applies the gate to each row of `x` (`rows x n`), where the sum over
    /// `phi2` runs only over the entries of that row with mask 1.
    pub fn apply_rows(
        &self,
        g: &mut Graph,
        store: &ParamStore,
        x: TensorId,
        mask: &Matrix,
    ) -> crate::tensor::Result<TensorId> {
        let (rows, n) = g.shape(x);
        let col = g.reshape(x, rows * n, 1)?;

        let h = self.phi1[0].forward_positive(g, store, col)?;
        let h = g.relu(h);
        let own = self.phi1[1].forward_positive(g, store, h)?;

        let h = self.phi2[0].forward_relu(g, store, col)?;
        let pooled = self.phi2[1].forward(g, store, h)?;
        let pooled = g.reshape(pooled, rows, n)?;
        let mask_t = g.constant(mask.clone());
        let pooled = g.mul(pooled, mask_t)?;
        let pooled = g.sum(pooled, Some(Axis::Cols));
        let ones = g.constant(Matrix::filled(1, n, 1.0));
        let pooled = g.matmul(pooled, ones)?;
        let pooled = g.reshape(pooled, rows * n, 1)?;

        let joint = g.concat(&[own, pooled], Axis::Cols)?;
        let h = self.psi[0].forward_positive(g, store, joint)?;
        let h = g.relu(h);
        let out = self.psi[1].forward_positive(g, store, h)?;
        let bypass = g.scale(col, STRICTNESS_SLOPE);
        let out = g.add(out, bypass)?;
        g.reshape(out, rows, n)
    }

    /// Evaluates `G(z)` for a single logit vector.
    pub fn eval(&self, store: &ParamStore, z: &[f64]) -> Result<Vec<f64>> {
        if z.is_empty() {
            return Err(ActivationError::Empty);
        }
        let mut g = Graph::new();
        let x = g.constant(Matrix::row_vector(z));
        let out = self.apply_rows(&mut g, store, x, &Matrix::filled(1, z.len(), 1.0))?;
        let values = g.value(out).as_slice().to_vec();
        if let Some(index) = values.iter().position(|v| !v.is_finite()) {
            return Err(ActivationError::NonFinite { index, value: values[index] });
        }
        Ok(values)
    }

    pub fn bind<'a>(&'a self, store: &'a ParamStore) -> BoundGate<'a> {
        BoundGate { gate: self, store }
    }
}

/// A [`MonotoneGate`] paired with the store holding its weights.
#[derive(Debug, Clone, Copy)]
pub struct BoundGate<'a> {
    gate: &'a MonotoneGate,
    store: &'a ParamStore,
}

impl GateFn for BoundGate<'_> {
    fn gate(&self, z: &[f64]) -> Result<Vec<f64>> {
        self.gate.eval(self.store, z)
    }
}

/// Learnable positive scale `gamma = exp(raw)`, initialized to 1.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SparsityScale {
    pub raw: ParamId,
}

impl SparsityScale {
    pub fn new(store: &mut ParamStore, name: &str) -> Self {
        Self { raw: store.add(name, Matrix::scalar(0.0)) }
    }

    pub fn gamma(&self, store: &ParamStore) -> f64 {
        store.value(self.raw).item().exp()
    }

    pub fn tensor(&self, g: &mut Graph, store: &ParamStore) -> TensorId {
        let raw = g.param(store, self.raw);
        g.exp(raw)
    }
}

/// `proj_simplex(gamma * G(z))`.
pub fn adaptive_sparse(z: &[f64], gate: &dyn GateFn, gamma: f64) -> Result<SimplexVector> {
    let mut gz = gate.gate(z)?;
    for v in &mut gz {
        *v *= gamma;
    }
    project_simplex(&gz)
}

/// Differentiable adaptive map over the masked rows of `logits`.
pub fn adaptive_sparse_rows(
    g: &mut Graph,
    store: &ParamStore,
    gate: &MonotoneGate,
    scale: &SparsityScale,
    logits: TensorId,
    mask: &Matrix,
) -> crate::tensor::Result<TensorId> {
    let gated = gate.apply_rows(g, store, logits, mask)?;
    let gamma = scale.tensor(g, store);
    let scaled = g.scale_by(gated, gamma)?;
    g.custom(Box::new(MaskedNormalize::new(Normalizer::Sparsemax, mask.clone())), &[scaled])
}

/// Elementwise absolute value; the map used to keep monotone-network weights
/// non-negative.
pub fn positive_reparam(g: &mut Graph, w: TensorId) -> TensorId {
    g.abs(w)
}
