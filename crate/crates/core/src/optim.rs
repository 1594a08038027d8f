//! Adam optimizer over flat parameter vectors.

/// Bias-corrected Adam with per-parameter moment buffers.
pub struct Adam {
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    step: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new(lr: f64, beta1: f64, beta2: f64, eps: f64, param_sizes: &[usize]) -> Self {
        Self {
            lr,
            beta1,
            beta2,
            eps,
            step: 0,
            m: param_sizes.iter().map(|&n| vec![0.0; n]).collect(),
            v: param_sizes.iter().map(|&n| vec![0.0; n]).collect(),
        }
    }

    pub fn with_defaults(lr: f64, param_sizes: &[usize]) -> Self {
        Self::new(lr, 0.9, 0.999, 1e-8, param_sizes)
    }

    /// Apply one update in place. `params` and `grads` are parallel slices
    /// matching the sizes given at construction.
    pub fn step(&mut self, params: &mut [Vec<f64>], grads: &[Vec<f64>]) {
        self.step += 1;
        let t = self.step as f64;
        let bc1 = 1.0 - self.beta1.powf(t);
        let bc2 = 1.0 - self.beta2.powf(t);
        for (i, (p, g)) in params.iter_mut().zip(grads).enumerate() {
            let m = &mut self.m[i];
            let v = &mut self.v[i];
            for j in 0..p.len() {
                m[j] = self.beta1 * m[j] + (1.0 - self.beta1) * g[j];
                v[j] = self.beta2 * v[j] + (1.0 - self.beta2) * g[j] * g[j];
                let m_hat = m[j] / bc1;
                let v_hat = v[j] / bc2;
                p[j] -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimizes_quadratic() {
        // f(x) = (x - 3)^2, gradient 2(x - 3).
        let mut params = vec![vec![0.0f64]];
        let mut adam = Adam::with_defaults(0.1, &[1]);
        for _ in 0..500 {
            let g = 2.0 * (params[0][0] - 3.0);
            adam.step(&mut params, &[vec![g]]);
        }
        assert!((params[0][0] - 3.0).abs() < 1e-3);
    }

    #[test]
    fn first_step_moves_by_lr() {
        // Bias correction makes the first step equal to lr in magnitude.
        let mut params = vec![vec![1.0f64]];
        let mut adam = Adam::with_defaults(0.05, &[1]);
        adam.step(&mut params, &[vec![123.0]]);
        assert!((params[0][0] - (1.0 - 0.05)).abs() < 1e-9);
    }
}
