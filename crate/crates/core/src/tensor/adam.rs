use super::graph::{Result, TensorError};
use super::matrix::Matrix;
use super::params::{ParamId, ParamStore};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { learning_rate: 1e-3, beta1: 0.9, beta2: 0.999, epsilon: 1e-8 }
    }
}

/// Adam with bias correction. Moments are zero-initialized and sized to the
/// store on construction.
#[derive(Debug, Clone)]
pub struct Adam {
    pub config: AdamConfig,
    step_count: u64,
    first_moment: Vec<Matrix>,
    second_moment: Vec<Matrix>,
}

impl Adam {
    pub fn new(store: &ParamStore, config: AdamConfig) -> Self {
        let zeros: Vec<Matrix> = store
            .iter()
            .map(|(_, p)| Matrix::zeros(p.value.rows(), p.value.cols()))
            .collect();
        Self { config, step_count: 0, first_moment: zeros.clone(), second_moment: zeros }
    }

    pub fn step_count(&self) -> u64 {
        self.step_count
    }

    /// Applies one update. `grads[i]` is the gradient of parameter `i`;
    /// `None` is treated as zero. Every gradient is checked before any
    /// parameter moves, so a non-finite gradient leaves the store untouched.
    pub fn step(&mut self, store: &mut ParamStore, grads: &[Option<Matrix>]) -> Result<()> {
        assert_eq!(grads.len(), store.len(), "gradient count does not match parameter count");
        for (i, g) in grads.iter().enumerate() {
            if let Some(g) = g {
                let id = ParamId(i);
                if g.shape() != store.value(id).shape() {
                    return Err(TensorError::Shape {
                        op: "adam_step",
                        left: store.value(id).shape(),
                        right: g.shape(),
                    });
                }
                if !g.is_finite() {
                    return Err(TensorError::NonFiniteGradient(store.name(id).to_string()));
                }
            }
        }
        self.step_count += 1;
        let AdamConfig { learning_rate, beta1, beta2, epsilon } = self.config;
        let t = self.step_count as i32;
        let bias1 = 1.0 - beta1.powi(t);
        let bias2 = 1.0 - beta2.powi(t);
        for (i, g) in grads.iter().enumerate() {
            let m = self.first_moment[i].as_mut_slice();
            let v = self.second_moment[i].as_mut_slice();
            let p = store.value_mut(ParamId(i)).as_mut_slice();
            match g {
                Some(g) => {
                    for (((p, m), v), &g) in p.iter_mut().zip(m.iter_mut()).zip(v.iter_mut()).zip(g.as_slice()) {
                        *m = beta1 * *m + (1.0 - beta1) * g;
                        *v = beta2 * *v + (1.0 - beta2) * g * g;
                        *p -= learning_rate * (*m / bias1) / ((*v / bias2).sqrt() + epsilon);
                    }
                }
                None => {
                    for ((p, m), v) in p.iter_mut().zip(m.iter_mut()).zip(v.iter_mut()) {
                        *m *= beta1;
                        *v *= beta2;
                        *p -= learning_rate * (*m / bias1) / ((*v / bias2).sqrt() + epsilon);
                    }
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn store_with(values: &[f64]) -> ParamStore {
        let mut s = ParamStore::new();
        s.add("w", Matrix::row_vector(values));
        s
    }

    #[test]
    fn zero_gradient_is_identity() {
        let mut s = store_with(&[0.3, -1.2, 4.0]);
        let before = s.clone();
        let mut adam = Adam::new(&s, AdamConfig::default());
        for _ in 0..5 {
            adam.step(&mut s, &[Some(Matrix::zeros(1, 3))]).unwrap();
        }
        assert_eq!(s, before);
        assert_eq!(adam.step_count(), 5);
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        // m_hat = 1, v_hat = 1, so the step is lr / (1 + eps).
        let mut s = store_with(&[0.0]);
        let mut adam = Adam::new(&s, AdamConfig::default());
        adam.step(&mut s, &[Some(Matrix::scalar(1.0))]).unwrap();
        let moved = s.value(ParamId(0)).item();
        assert!((moved + 0.001 / (1.0 + 1e-8)).abs() < 1e-15, "moved {moved}");
    }

    #[test]
    fn constant_gradient_moves_monotonically() {
        let mut s = store_with(&[1.0]);
        let mut adam = Adam::new(&s, AdamConfig::default());
        let mut prev = 1.0;
        for _ in 0..2 {
            adam.step(&mut s, &[Some(Matrix::scalar(-2.5))]).unwrap();
            let now = s.value(ParamId(0)).item();
            assert!(now > prev);
            prev = now;
        }
    }

    #[test]
    fn non_finite_gradient_names_parameter() {
        let mut s = store_with(&[1.0, 2.0]);
        let before = s.clone();
        let mut adam = Adam::new(&s, AdamConfig::default());
        let err = adam.step(&mut s, &[Some(Matrix::row_vector(&[0.0, f64::NAN]))]).unwrap_err();
        assert_eq!(err, TensorError::NonFiniteGradient("w".into()));
        assert_eq!(s, before);
        assert_eq!(adam.step_count(), 0);
    }
}
