use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Moment decay rates and denominator floor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdamHyper {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamHyper {
    fn default() -> Self {
        Self { beta1: 0.9, beta2: 0.999, eps: 1e-15 }
    }
}

/// First and second moments of one parameter group plus its step count.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState<T: Real> {
    pub m: Vec<T>,
    pub v: Vec<T>,
    pub step: u64,
}

impl<T: Real> AdamState<T> {
    pub fn new(len: usize) -> Self {
        Self { m: vec![T::zero(); len], v: vec![T::zero(); len], step: 0 }
    }

    pub fn len(&self) -> usize {
        self.m.len()
    }

    pub fn is_empty(&self) -> bool {
        self.m.is_empty()
    }

    /// One bias-corrected update of `params` in place.
    pub fn update(&mut self, params: &mut [T], grads: &[T], lr: T, hp: &AdamHyper) {
        self.update_with(params, grads, |_| lr, hp);
    }

    /// Like [`AdamState::update`] with a learning rate per element index.
    pub fn update_with(&mut self, params: &mut [T], grads: &[T], lr: impl Fn(usize) -> T, hp: &AdamHyper) {
        assert_eq!(params.len(), self.m.len(), "parameter and state sizes differ");
        assert_eq!(grads.len(), self.m.len(), "gradient and state sizes differ");
        self.step += 1;
        let (b1, b2) = (T::lit(hp.beta1), T::lit(hp.beta2));
        let eps = T::lit(hp.eps);
        let bc1 = T::one() - T::lit(hp.beta1.powi(self.step.min(i32::MAX as u64) as i32));
        let bc2 = T::one() - T::lit(hp.beta2.powi(self.step.min(i32::MAX as u64) as i32));
        let bc2_sqrt = bc2.sqrt();
        for i in 0..params.len() {
            let g = grads[i];
            let m = b1 * self.m[i] + (T::one() - b1) * g;
            let v = b2 * self.v[i] + (T::one() - b2) * g * g;
            self.m[i] = m;
            self.v[i] = v;
            params[i] -= lr(i) / bc1 * m / (v.sqrt() / bc2_sqrt + eps);
        }
    }

    /// Rebuilds the state for a reindexed group: row `r` of the new group
    /// copies row `src` of the old one when `Some(src)`, otherwise starts
    /// from zero. `width` is the number of scalars per row.
    pub fn remap(&self, rows: &[Option<usize>], width: usize) -> Self {
        let mut out = Self::new(rows.len() * width);
        out.step = self.step;
        for (r, src) in rows.iter().enumerate() {
            if let Some(s) = src {
                out.m[r * width..(r + 1) * width].copy_from_slice(&self.m[s * width..(s + 1) * width]);
                out.v[r * width..(r + 1) * width].copy_from_slice(&self.v[s * width..(s + 1) * width]);
            }
        }
        out
    }

    /// Zeroes both moments, keeping the step count.
    pub fn reset_moments(&mut self) {
        self.m.iter_mut().for_each(|v| *v = T::zero());
        self.v.iter_mut().for_each(|v| *v = T::zero());
    }
}

/// Fails with the group name and element index of the first non-finite
/// gradient.
pub fn check_finite<T: Real>(group: &str, grads: &[T]) -> Result<()> {
    match grads.iter().position(|g| !g.is_finite_val()) {
        Some(index) => Err(Error::NonFiniteGradient { group: group.to_string(), index }),
        None => Ok(()),
    }
}

/// Exponential interpolation from `lr_init` to `lr_final` over `max_steps`.
pub fn exp_decay(lr_init: f64, lr_final: f64, step: usize, max_steps: usize) -> f64 {
    if max_steps == 0 || lr_init <= 0.0 || lr_final <= 0.0 {
        return lr_init;
    }
    let t = (step as f64 / max_steps as f64).clamp(0.0, 1.0);
    (lr_init.ln() * (1.0 - t) + lr_final.ln() * t).exp()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_on_fresh_state_keeps_params() {
        let mut s = AdamState::<f64>::new(3);
        let mut p = vec![1.0, -2.0, 0.5];
        s.update(&mut p, &[0.0; 3], 0.1, &AdamHyper::default());
        assert_eq!(p, vec![1.0, -2.0, 0.5]);
        assert_eq!(s.m, vec![0.0; 3]);
    }

    #[test]
    fn zero_gradient_decays_moments() {
        let mut s = AdamState::<f64> { m: vec![1.0], v: vec![4.0], step: 3 };
        let mut p = vec![0.0];
        s.update(&mut p, &[0.0], 0.1, &AdamHyper::default());
        assert!((s.m[0] - 0.9).abs() < 1e-15);
        assert!((s.v[0] - 4.0 * 0.999).abs() < 1e-15);
    }

    #[test]
    fn constant_gradient_steps_by_lr() {
        let hp = AdamHyper::default();
        let mut s = AdamState::<f64>::new(1);
        let mut p = vec![0.0];
        let lr = 0.01;
        for _ in 0..200 {
            let before = p[0];
            s.update(&mut p, &[3.7], lr, &hp);
            // bias correction makes every step exactly lr for a constant gradient
            assert!(((before - p[0]) - lr).abs() < 1e-9);
        }
    }

    #[test]
    fn non_finite_gradient_names_the_group() {
        let err = check_finite("static.means", &[0.0f32, f32::NAN]).unwrap_err();
        assert!(matches!(err, Error::NonFiniteGradient { ref group, index: 1 } if group == "static.means"));
    }

    #[test]
    fn decay_endpoints() {
        assert!((exp_decay(1.6e-4, 1.6e-6, 0, 100) - 1.6e-4).abs() < 1e-18);
        assert!((exp_decay(1.6e-4, 1.6e-6, 100, 100) - 1.6e-6).abs() < 1e-18);
        assert!((exp_decay(1.6e-4, 1.6e-6, 50, 100) - 1.6e-5).abs() < 1e-15);
    }
}
