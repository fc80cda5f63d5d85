use std::f64::consts::PI;

use super::Scalar;

/// `lr_min + ½ (lr_max − lr_min)(1 + cos(π step / total))`.
pub fn cosine_lr(step: usize, total: usize, lr_max: f64, lr_min: f64) -> f64 {
    if total == 0 {
        return lr_max;
    }
    let progress = step as f64 / total as f64;
    lr_min + 0.5 * (lr_max - lr_min) * (1.0 + (PI * progress).cos())
}

/// Rescales gradients in place so their global L2 norm is at most `max_norm`.
/// Returns the norm before clipping.
pub fn clip_grad_norm<T: Scalar>(grads: &mut [&mut [T]], max_norm: f64) -> f64 {
    let norm = grads
        .iter()
        .flat_map(|g| g.iter())
        .map(|&v| v.as_f64() * v.as_f64())
        .sum::<f64>()
        .sqrt();
    if norm > max_norm && norm > 0.0 {
        let s = T::lit(max_norm / norm);
        for g in grads.iter_mut() {
            for v in g.iter_mut() {
                *v *= s;
            }
        }
    }
    norm
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct AdamWParams {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamWParams {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.95,
            eps: 1e-8,
            weight_decay: 0.0,
        }
    }
}

/// AdamW with decoupled weight decay and bias correction.
#[derive(Debug, Clone)]
pub struct AdamW<T> {
    pub params: AdamWParams,
    m: Vec<Vec<T>>,
    v: Vec<Vec<T>>,
    step: i32,
}

impl<T: Scalar> AdamW<T> {
    pub fn new(params: AdamWParams) -> Self {
        Self {
            params,
            m: Vec::new(),
            v: Vec::new(),
            step: 0,
        }
    }

    pub fn steps_taken(&self) -> i32 {
        self.step
    }

    pub fn update(&mut self, weights: Vec<&mut [T]>, grads: Vec<&[T]>, lr: f64) {
        assert_eq!(weights.len(), grads.len(), "weights/grads tensor count");
        if self.m.is_empty() {
            self.m = grads.iter().map(|g| vec![T::zero(); g.len()]).collect();
            self.v = self.m.clone();
        }
        self.step += 1;
        let AdamWParams {
            beta1,
            beta2,
            eps,
            weight_decay,
        } = self.params;
        let bc1 = T::lit(1.0 - beta1.powi(self.step));
        let bc2 = T::lit(1.0 - beta2.powi(self.step));
        let (b1, b2) = (T::lit(beta1), T::lit(beta2));
        let (one_b1, one_b2) = (T::lit(1.0 - beta1), T::lit(1.0 - beta2));
        let (lr_t, eps_t, decay) = (T::lit(lr), T::lit(eps), T::lit(lr * weight_decay));
        for (((w, g), m), v) in weights.into_iter().zip(grads).zip(&mut self.m).zip(&mut self.v) {
            for i in 0..w.len() {
                m[i] = b1 * m[i] + one_b1 * g[i];
                v[i] = b2 * v[i] + one_b2 * g[i] * g[i];
                let mhat = m[i] / bc1;
                let vhat = v[i] / bc2;
                w[i] -= lr_t * mhat / (vhat.sqrt() + eps_t) + decay * w[i];
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cosine_endpoints_and_oracle() {
        assert_eq!(cosine_lr(0, 10, 4e-4, 4e-5), 4e-4);
        assert!((cosine_lr(10, 10, 4e-4, 4e-5) - 4e-5).abs() < 1e-18);
        for s in 0..=37 {
            let oracle = 4e-5 + 0.5 * (4e-4 - 4e-5) * (1.0 + (std::f64::consts::PI * s as f64 / 37.0).cos());
            assert!((cosine_lr(s, 37, 4e-4, 4e-5) - oracle).abs() < 1e-12);
        }
    }

    #[test]
    fn first_adam_step_moves_by_lr() {
        let mut w = [1.0f64, -1.0];
        let g = [0.5f64, -2.0];
        let mut opt = AdamW::new(AdamWParams::default());
        opt.update(vec![&mut w[..]], vec![&g[..]], 0.1);
        // Bias-corrected first step is lr * sign(g) up to eps.
        assert!((w[0] - 0.9).abs() < 1e-6);
        assert!((w[1] + 0.9).abs() < 1e-6);
    }

    #[test]
    fn weight_decay_is_decoupled() {
        let mut w = [2.0f64];
        let g = [0.0f64];
        let mut opt = AdamW::new(AdamWParams {
            weight_decay: 0.5,
            ..Default::default()
        });
        opt.update(vec![&mut w[..]], vec![&g[..]], 0.1);
        assert!((w[0] - (2.0 - 0.1 * 0.5 * 2.0)).abs() < 1e-12);
    }

    #[test]
    fn clip_scales_to_max_norm() {
        let mut a = [3.0f64];
        let mut b = [4.0f64];
        let norm = clip_grad_norm(&mut [&mut a[..], &mut b[..]], 1.0);
        assert_eq!(norm, 5.0);
        assert!((a[0] - 0.6).abs() < 1e-12 && (b[0] - 0.8).abs() < 1e-12);
    }
}
