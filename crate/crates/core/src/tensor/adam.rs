//! Adam with bias correction over named parameter leaves.

use super::Tensor;

/// First/second-moment optimizer. Holds handles to the parameter leaves it
/// updates plus one pair of moment buffers per parameter; a single step
/// counter drives the bias correction for all of them.
pub struct Adam {
    lr: f32,
    beta1: f32,
    beta2: f32,
    eps: f32,
    steps: u64,
    params: Vec<(String, Tensor)>,
    m: Vec<Vec<f32>>,
    v: Vec<Vec<f32>>,
}

impl Adam {
    /// Defaults: `beta1 = 0.9`, `beta2 = 0.999`, `eps = 1e-8`.
    pub fn new(params: Vec<(String, Tensor)>, lr: f32) -> Adam {
        Adam::with_hyperparams(params, lr, 0.9, 0.999, 1e-8)
    }

    pub fn with_hyperparams(
        params: Vec<(String, Tensor)>,
        lr: f32,
        beta1: f32,
        beta2: f32,
        eps: f32,
    ) -> Adam {
        assert!(lr > 0.0 && lr.is_finite(), "adam: learning rate {lr} must be positive");
        let m = params.iter().map(|(_, p)| vec![0.0; p.numel()]).collect();
        let v = params.iter().map(|(_, p)| vec![0.0; p.numel()]).collect();
        Adam { lr, beta1, beta2, eps, steps: 0, params, m, v }
    }

    /// Number of completed steps.
    pub fn steps(&self) -> u64 {
        self.steps
    }

    /// Clears the gradient buffers of every registered parameter. Call once
    /// per iteration before `backward`; gradients are accumulated, never
    /// implicitly reset.
    pub fn zero_grads(&self) {
        for (_, p) in &self.params {
            p.zero_grad();
        }
    }

    /// Applies one update in place:
    ///
    /// ```text
    /// m <- b1 m + (1-b1) g        v <- b2 v + (1-b2) g^2
    /// p <- p - lr * (m / (1-b1^t)) / (sqrt(v / (1-b2^t)) + eps)
    /// ```
    ///
    /// Panics if any registered parameter has no gradient, naming it.
    pub fn step(&mut self) {
        self.steps += 1;
        let t = self.steps as i32;
        let corr1 = 1.0 - self.beta1.powi(t);
        let corr2 = 1.0 - self.beta2.powi(t);
        for (i, (name, p)) in self.params.iter().enumerate() {
            let grad = p
                .grad()
                .unwrap_or_else(|| panic!("adam step: parameter `{name}` has no gradient"));
            let m = &mut self.m[i];
            let v = &mut self.v[i];
            let mut values = p.to_vec();
            for j in 0..values.len() {
                let g = grad[j];
                m[j] = self.beta1 * m[j] + (1.0 - self.beta1) * g;
                v[j] = self.beta2 * v[j] + (1.0 - self.beta2) * g * g;
                let mhat = m[j] / corr1;
                let vhat = v[j] / corr2;
                values[j] -= self.lr * mhat / (vhat.sqrt() + self.eps);
            }
            p.set_data(&values);
        }
    }
}
