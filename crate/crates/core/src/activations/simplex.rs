//! Normalizers onto the probability simplex: softmax and sparsemax.

use std::collections::hash_map::DefaultHasher;
use std::hash::Hash;

use serde::{Deserialize, Serialize};

use super::{ActivationError, Result};
use crate::tensor::{CustomOp, Matrix, TensorError};

/// A probability vector with its support (indices of strictly positive
/// entries) recorded alongside.
#[derive(Debug, Clone, PartialEq)]
pub struct SimplexVector {
    weights: Vec<f64>,
    support: Vec<usize>,
}

impl SimplexVector {
    fn from_weights(weights: Vec<f64>) -> Self {
        let support = weights
            .iter()
            .enumerate()
            .filter(|(_, &w)| w > 0.0)
            .map(|(i, _)| i)
            .collect();
        Self { weights, support }
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn into_weights(self) -> Vec<f64> {
        self.weights
    }

    pub fn support(&self) -> &[usize] {
        &self.support
    }

    pub fn support_size(&self) -> usize {
        self.support.len()
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }
}

fn check_finite(z: &[f64]) -> Result<()> {
    if z.is_empty() {
        return Err(ActivationError::Empty);
    }
    match z.iter().position(|x| !x.is_finite()) {
        Some(index) => Err(ActivationError::NonFinite { index, value: z[index] }),
        None => Ok(()),
    }
}

/// Euclidean projection onto the probability simplex by sorting and
/// threshold search.
///
/// An entry exactly at the threshold is left out of the support.
pub fn project_simplex(z: &[f64]) -> Result<SimplexVector> {
    check_finite(z)?;
    let mut out = vec![0.0; z.len()];
    project_into(z, &mut out);
    Ok(SimplexVector::from_weights(out))
}

/// Same as [`project_simplex`].
pub fn sparsemax(z: &[f64]) -> Result<SimplexVector> {
    project_simplex(z)
}

/// Writes the projection of `z` into `out`. Inputs must be finite and
/// non-empty.
pub(crate) fn project_into(z: &[f64], out: &mut [f64]) {
    let mut order: Vec<usize> = (0..z.len()).collect();
    order.sort_by(|&a, &b| z[b].total_cmp(&z[a]).then(a.cmp(&b)));
    let mut cumsum = 0.0;
    let mut k = 0;
    let mut support_sum = 0.0;
    for (rank, &i) in order.iter().enumerate() {
        cumsum += z[i];
        let size = (rank + 1) as f64;
        if 1.0 + size * z[i] > cumsum {
            k = rank + 1;
            support_sum = cumsum;
        } else {
            break;
        }
    }
    // k >= 1 always: the largest entry satisfies 1 + z > z.
    let tau = (support_sum - 1.0) / k as f64;
    out.iter_mut().for_each(|y| *y = 0.0);
    for &i in &order[..k] {
        out[i] = (z[i] - tau).max(0.0);
    }
}

/// Softmax with max subtraction.
pub fn softmax(z: &[f64]) -> Result<SimplexVector> {
    check_finite(z)?;
    let mut out = vec![0.0; z.len()];
    softmax_into(z, &mut out);
    Ok(SimplexVector::from_weights(out))
}

pub(crate) fn softmax_into(z: &[f64], out: &mut [f64]) {
    let max = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for (o, &x) in out.iter_mut().zip(z) {
        *o = (x - max).exp();
        total += *o;
    }
    for o in out.iter_mut() {
        *o /= total;
    }
}

/// Vector-Jacobian product of the simplex projection at output `y`:
/// on the support, the upstream gradient minus its support mean; zero off
/// the support.
pub fn sparsemax_backward(y: &SimplexVector, upstream: &[f64]) -> Result<Vec<f64>> {
    if upstream.len() != y.len() {
        return Err(ActivationError::Length { expected: y.len(), found: upstream.len() });
    }
    if y.support.is_empty() {
        return Err(ActivationError::EmptySupport);
    }
    let mut out = vec![0.0; y.len()];
    sparsemax_vjp_into(y.weights(), upstream, &mut out);
    Ok(out)
}

pub(crate) fn sparsemax_vjp_into(y: &[f64], upstream: &[f64], out: &mut [f64]) {
    let mut count = 0usize;
    let mut total = 0.0;
    for (&w, &g) in y.iter().zip(upstream) {
        if w > 0.0 {
            count += 1;
            total += g;
        }
    }
    let mean = if count > 0 { total / count as f64 } else { 0.0 };
    for ((o, &w), &g) in out.iter_mut().zip(y).zip(upstream) {
        *o = if w > 0.0 { g - mean } else { 0.0 };
    }
}

fn softmax_vjp_into(y: &[f64], upstream: &[f64], out: &mut [f64]) {
    let inner: f64 = y.iter().zip(upstream).map(|(w, g)| w * g).sum();
    for ((o, &w), &g) in out.iter_mut().zip(y).zip(upstream) {
        *o = w * (g - inner);
    }
}

/// Which simplex map a [`MaskedNormalize`] applies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Normalizer {
    Softmax,
    Sparsemax,
}

/// Row-wise simplex normalization restricted to a 0/1 mask.
///
/// For each row, the entries with mask 1 are normalized with the chosen map
/// and every other entry is exactly zero. A row whose mask is empty becomes
/// all zeros.
#[derive(Debug, Clone)]
pub struct MaskedNormalize {
    pub normalizer: Normalizer,
    pub mask: Matrix,
}

impl MaskedNormalize {
    pub fn new(normalizer: Normalizer, mask: Matrix) -> Self {
        Self { normalizer, mask }
    }

    fn active(&self, r: usize) -> Vec<usize> {
        self.mask
            .row(r)
            .iter()
            .enumerate()
            .filter(|(_, &m)| m != 0.0)
            .map(|(j, _)| j)
            .collect()
    }
}

impl CustomOp for MaskedNormalize {
    fn name(&self) -> &'static str {
        "masked_normalize"
    }

    fn forward(&self, inputs: &[&Matrix]) -> crate::tensor::Result<Matrix> {
        let x = inputs[0];
        if x.shape() != self.mask.shape() {
            return Err(TensorError::Shape { op: "masked_normalize", left: x.shape(), right: self.mask.shape() });
        }
        let mut out = Matrix::zeros(x.rows(), x.cols());
        let mut z = Vec::new();
        let mut y = Vec::new();
        for r in 0..x.rows() {
            let active = self.active(r);
            if active.is_empty() {
                continue;
            }
            z.clear();
            z.extend(active.iter().map(|&j| x[(r, j)]));
            if z.iter().any(|v| !v.is_finite()) {
                return Err(TensorError::NonFinite { op: "masked_normalize" });
            }
            y.resize(z.len(), 0.0);
            match self.normalizer {
                Normalizer::Softmax => softmax_into(&z, &mut y),
                Normalizer::Sparsemax => project_into(&z, &mut y),
            }
            for (&j, &w) in active.iter().zip(&y) {
                out[(r, j)] = w;
            }
        }
        Ok(out)
    }

    fn backward(&self, inputs: &[&Matrix], output: &Matrix, grad: &Matrix) -> Vec<Option<Matrix>> {
        let x = inputs[0];
        let mut gx = Matrix::zeros(x.rows(), x.cols());
        let (mut y, mut up, mut dz) = (Vec::new(), Vec::new(), Vec::new());
        for r in 0..x.rows() {
            let active = self.active(r);
            if active.is_empty() {
                continue;
            }
            y.clear();
            up.clear();
            y.extend(active.iter().map(|&j| output[(r, j)]));
            up.extend(active.iter().map(|&j| grad[(r, j)]));
            dz.resize(y.len(), 0.0);
            match self.normalizer {
                Normalizer::Softmax => softmax_vjp_into(&y, &up, &mut dz),
                Normalizer::Sparsemax => sparsemax_vjp_into(&y, &up, &mut dz),
            }
            for (&j, &d) in active.iter().zip(&dz) {
                gx[(r, j)] = d;
            }
        }
        vec![Some(gx)]
    }

    fn hash_branches(&self, _inputs: &[&Matrix], output: &Matrix, state: &mut DefaultHasher) {
        if self.normalizer == Normalizer::Sparsemax {
            for &w in output.as_slice() {
                (w > 0.0).hash(state);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
        a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
    }

    #[test]
    fn projection_examples() {
        let y = project_simplex(&[0.2, 0.3, 0.5]).unwrap();
        assert!(close(y.weights(), &[0.2, 0.3, 0.5], 1e-15));
        assert_eq!(project_simplex(&[0.0, 0.0]).unwrap().weights(), &[0.5, 0.5]);
        let y = project_simplex(&[0.5, 1.5]).unwrap();
        assert_eq!(y.weights(), &[0.0, 1.0]);
        assert_eq!(y.support(), &[1]);
    }

    #[test]
    fn sparsemax_examples() {
        let a = sparsemax(&[100.0, 101.0]).unwrap();
        let b = sparsemax(&[0.0, 1.0]).unwrap();
        assert!(close(a.weights(), b.weights(), 1e-12));
        assert_eq!(sparsemax(&[1.0, 0.0]).unwrap().weights(), &[1.0, 0.0]);
        assert_eq!(sparsemax(&[0.3, 0.3]).unwrap().weights(), &[0.5, 0.5]);
    }

    #[test]
    fn softmax_examples() {
        let y = softmax(&[0.0, 0.0, 0.0]).unwrap();
        assert!(close(y.weights(), &[1.0 / 3.0; 3], 1e-15));
        let y = softmax(&[0.0, 3f64.ln()]).unwrap();
        assert!(close(y.weights(), &[0.25, 0.75], 1e-15));
        let t = softmax(&[57.0, 58.5]).unwrap();
        let u = softmax(&[0.0, 1.5]).unwrap();
        assert!(close(t.weights(), u.weights(), 1e-15));
        assert_eq!(y.support_size(), 2);
    }

    #[test]
    fn rejects_non_finite_and_empty() {
        assert!(matches!(project_simplex(&[0.0, f64::NAN]), Err(ActivationError::NonFinite { index: 1, .. })));
        assert!(matches!(project_simplex(&[f64::INFINITY]), Err(ActivationError::NonFinite { index: 0, .. })));
        assert!(matches!(softmax(&[]), Err(ActivationError::Empty)));
    }

    #[test]
    fn backward_examples() {
        let y = project_simplex(&[0.2, 0.3, 0.5]).unwrap();
        assert_eq!(sparsemax_backward(&y, &[1.0, 1.0, 1.0]).unwrap(), vec![0.0, 0.0, 0.0]);
        let y = project_simplex(&[0.0, 5.0]).unwrap();
        assert_eq!(y.support(), &[1]);
        assert_eq!(sparsemax_backward(&y, &[5.0, 7.0]).unwrap(), vec![0.0, 0.0]);
        assert!(matches!(
            sparsemax_backward(&y, &[1.0]),
            Err(ActivationError::Length { expected: 2, found: 1 })
        ));
    }

    #[test]
    fn masked_rows() {
        let mask = Matrix::from_rows(&[vec![0.0, 1.0, 1.0], vec![0.0, 0.0, 0.0], vec![1.0, 0.0, 1.0]]);
        let x = Matrix::from_rows(&[vec![9.0, 0.5, 1.5], vec![1.0, 2.0, 3.0], vec![0.0, 7.0, 0.0]]);
        let op = MaskedNormalize::new(Normalizer::Sparsemax, mask.clone());
        let y = op.forward(&[&x]).unwrap();
        assert_eq!(y.row(0), &[0.0, 0.0, 1.0]);
        assert_eq!(y.row(1), &[0.0, 0.0, 0.0]);
        assert_eq!(y.row(2), &[0.5, 0.0, 0.5]);
        let op = MaskedNormalize::new(Normalizer::Softmax, mask);
        let y = op.forward(&[&x]).unwrap();
        assert_eq!(y[(0, 0)], 0.0);
        assert!(y[(0, 1)] > 0.0 && y[(0, 2)] > y[(0, 1)]);
        assert_eq!(y.row(1), &[0.0, 0.0, 0.0]);
    }
}
