use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use super::quat::{normalize_quat, unit_quat_to_rotation};
use crate::error::{Error, Result};
use crate::scalar::Real;

/// How per-Gaussian color is stored.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "mode")]
pub enum ColorMode {
    /// Spherical harmonics of the given degree (at most 3), stored
    /// coefficient-major: coefficient `k`, channel `c` at `3k + c`.
    Sh { degree: usize },
    /// Direct RGB kept in [0, 1] by the optimizer.
    Rgb,
}

impl ColorMode {
    /// Scalars per Gaussian.
    pub fn dim(&self) -> usize {
        match *self {
            ColorMode::Sh { degree } => 3 * (degree + 1) * (degree + 1),
            ColorMode::Rgb => 3,
        }
    }
}

/// Structure-of-arrays parameter store for a set of 3D Gaussians.
///
/// Parameters are kept unconstrained: scales as logarithms and opacities as
/// logits. Quaternions are `(w, x, y, z)` and normalized on use.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianSet<T: Real> {
    pub color_mode: ColorMode,
    pub means: Vec<[T; 3]>,
    pub log_scales: Vec<[T; 3]>,
    pub quats: Vec<[T; 4]>,
    pub opacity_logits: Vec<T>,
    pub colors: Vec<T>,
}

/// Borrowed view of the Gaussian at one index.
#[derive(Debug, Clone, Copy)]
pub struct Gaussian3D<'a, T: Real> {
    pub mean: &'a [T; 3],
    pub log_scale: &'a [T; 3],
    pub quat: &'a [T; 4],
    pub opacity_logit: T,
    pub color: &'a [T],
    pub color_mode: ColorMode,
}

impl<T: Real> Gaussian3D<'_, T> {
    pub fn position(&self) -> Vector3<T> {
        Vector3::new(self.mean[0], self.mean[1], self.mean[2])
    }

    pub fn scale(&self) -> Vector3<T> {
        Vector3::new(self.log_scale[0].exp(), self.log_scale[1].exp(), self.log_scale[2].exp())
    }

    pub fn opacity(&self) -> T {
        self.opacity_logit.sigmoid()
    }
}

impl<T: Real> GaussianSet<T> {
    pub fn new(color_mode: ColorMode) -> Self {
        Self {
            color_mode,
            means: Vec::new(),
            log_scales: Vec::new(),
            quats: Vec::new(),
            opacity_logits: Vec::new(),
            colors: Vec::new(),
        }
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.means.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.means.is_empty()
    }

    #[inline]
    pub fn color_dim(&self) -> usize {
        self.color_mode.dim()
    }

    pub fn push(&mut self, mean: [T; 3], log_scale: [T; 3], quat: [T; 4], opacity_logit: T, color: &[T]) {
        assert_eq!(color.len(), self.color_dim(), "color block size");
        self.means.push(mean);
        self.log_scales.push(log_scale);
        self.quats.push(quat);
        self.opacity_logits.push(opacity_logit);
        self.colors.extend_from_slice(color);
    }

    pub fn gaussian(&self, i: usize) -> Gaussian3D<'_, T> {
        Gaussian3D {
            mean: &self.means[i],
            log_scale: &self.log_scales[i],
            quat: &self.quats[i],
            opacity_logit: self.opacity_logits[i],
            color: self.color(i),
            color_mode: self.color_mode,
        }
    }

    #[inline]
    pub fn color(&self, i: usize) -> &[T] {
        let d = self.color_dim();
        &self.colors[i * d..(i + 1) * d]
    }

    #[inline]
    pub fn color_mut(&mut self, i: usize) -> &mut [T] {
        let d = self.color_dim();
        &mut self.colors[i * d..(i + 1) * d]
    }

    #[inline]
    pub fn opacity(&self, i: usize) -> T {
        self.opacity_logits[i].sigmoid()
    }

    pub fn max_scale(&self, i: usize) -> T {
        let l = self.log_scales[i];
        l[0].max(l[1]).max(l[2]).exp()
    }

    /// New set holding the Gaussians at `indices`, in that order.
    pub fn gather(&self, indices: &[usize]) -> Self {
        let mut out = Self::new(self.color_mode);
        for &i in indices {
            out.push(self.means[i], self.log_scales[i], self.quats[i], self.opacity_logits[i], self.color(i));
        }
        out
    }

    pub fn append(&mut self, other: &Self) {
        assert_eq!(self.color_mode, other.color_mode);
        self.means.extend_from_slice(&other.means);
        self.log_scales.extend_from_slice(&other.log_scales);
        self.quats.extend_from_slice(&other.quats);
        self.opacity_logits.extend_from_slice(&other.opacity_logits);
        self.colors.extend_from_slice(&other.colors);
    }

    /// Clamps direct-RGB colors into [0, 1]; no-op for SH sets.
    pub fn clamp_rgb(&mut self) {
        if self.color_mode == ColorMode::Rgb {
            for c in &mut self.colors {
                *c = c.clamp_to(T::zero(), T::one());
            }
        }
    }

    /// World-space covariance of Gaussian `i`.
    pub fn covariance(&self, i: usize) -> Matrix3<T> {
        super::projection::build_covariance(&self.log_scales[i], &self.quats[i])
    }

    /// Verifies the stored parameters describe valid Gaussians: finite values,
    /// non-degenerate quaternions and consistent array lengths. RGB sets must
    /// also hold colors in [0, 1].
    pub fn check_invariants(&self) -> Result<()> {
        let n = self.len();
        if self.log_scales.len() != n
            || self.quats.len() != n
            || self.opacity_logits.len() != n
            || self.colors.len() != n * self.color_dim()
        {
            return Err(Error::shape("GaussianSet arrays have inconsistent lengths"));
        }
        let bad = |what: &str, i: usize| Err(Error::InvalidConfig(format!("Gaussian {i}: {what}")));
        for i in 0..n {
            if !self.means[i].iter().all(|v| v.is_finite_val()) {
                return bad("non-finite mean", i);
            }
            let s = self.log_scales[i];
            if !s.iter().all(|v| v.is_finite_val() && v.exp() > T::zero()) {
                return bad("non-positive or non-finite scale", i);
            }
            match normalize_quat(&self.quats[i]) {
                Some((q, _)) => {
                    let n2 = q.iter().fold(T::zero(), |a, &v| a + v * v);
                    if (n2 - T::one()).abs() > T::lit(1e-6) {
                        return bad("quaternion does not normalize", i);
                    }
                }
                None => return bad("degenerate quaternion", i),
            }
            let o = self.opacity(i);
            if !(o >= T::zero() && o <= T::one()) {
                return bad("opacity outside [0, 1]", i);
            }
            let c = self.color(i);
            if !c.iter().all(|v| v.is_finite_val()) {
                return bad("non-finite color", i);
            }
            if self.color_mode == ColorMode::Rgb && !c.iter().all(|&v| v >= T::zero() && v <= T::one()) {
                return bad("RGB color outside [0, 1]", i);
            }
        }
        Ok(())
    }

    pub fn rotation(&self, i: usize) -> Option<Matrix3<T>> {
        normalize_quat(&self.quats[i]).map(|(q, _)| unit_quat_to_rotation(&q))
    }

    pub fn cast<U: Real>(&self) -> GaussianSet<U> {
        let c = |v: &T| U::lit(v.as_f64());
        GaussianSet {
            color_mode: self.color_mode,
            means: self.means.iter().map(|m| m.map(|v| c(&v))).collect(),
            log_scales: self.log_scales.iter().map(|m| m.map(|v| c(&v))).collect(),
            quats: self.quats.iter().map(|m| m.map(|v| c(&v))).collect(),
            opacity_logits: self.opacity_logits.iter().map(c).collect(),
            colors: self.colors.iter().map(c).collect(),
        }
    }
}

/// Gradient buffers with the same layout as a [`GaussianSet`].
#[derive(Debug, Clone, PartialEq)]
pub struct SetGradients<T: Real> {
    pub means: Vec<[T; 3]>,
    pub log_scales: Vec<[T; 3]>,
    pub quats: Vec<[T; 4]>,
    pub opacity_logits: Vec<T>,
    pub colors: Vec<T>,
}

impl<T: Real> SetGradients<T> {
    pub fn zeros_like(set: &GaussianSet<T>) -> Self {
        let n = set.len();
        Self {
            means: vec![[T::zero(); 3]; n],
            log_scales: vec![[T::zero(); 3]; n],
            quats: vec![[T::zero(); 4]; n],
            opacity_logits: vec![T::zero(); n],
            colors: vec![T::zero(); set.colors.len()],
        }
    }

    pub fn len(&self) -> usize {
        self.means.len()
    }

    pub fn is_empty(&self) -> bool {
        self.means.is_empty()
    }

    pub fn is_all_zero(&self) -> bool {
        let z = T::zero();
        self.means.as_flattened().iter().all(|&v| v == z)
            && self.log_scales.as_flattened().iter().all(|&v| v == z)
            && self.quats.as_flattened().iter().all(|&v| v == z)
            && self.opacity_logits.iter().all(|&v| v == z)
            && self.colors.iter().all(|&v| v == z)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> GaussianSet<f64> {
        let mut s = GaussianSet::new(ColorMode::Rgb);
        s.push([0.0, 0.0, 1.0], [0.0; 3], [1.0, 0.0, 0.0, 0.0], 0.0, &[0.2, 0.4, 0.6]);
        s.push([1.0, 0.0, 1.0], [-1.0; 3], [0.0, 1.0, 0.0, 0.0], 1.0, &[0.9, 0.1, 0.0]);
        s
    }

    #[test]
    fn gather_and_append() {
        let s = tiny();
        let g = s.gather(&[1, 1, 0]);
        assert_eq!(g.len(), 3);
        assert_eq!(g.color(2), s.color(0));
        let mut a = s.clone();
        a.append(&g);
        assert_eq!(a.len(), 5);
        a.check_invariants().unwrap();
    }

    #[test]
    fn invariants_catch_bad_rgb() {
        let mut s = tiny();
        s.colors[0] = 1.5;
        assert!(s.check_invariants().is_err());
        s.clamp_rgb();
        s.check_invariants().unwrap();
    }

    #[test]
    fn sh_color_dim() {
        assert_eq!(ColorMode::Sh { degree: 3 }.dim(), 48);
        assert_eq!(ColorMode::Sh { degree: 0 }.dim(), 3);
        assert_eq!(ColorMode::Rgb.dim(), 3);
    }
}
