//! Training objectives with gradients with respect to their image inputs.

pub mod ssim;

use serde::{Deserialize, Serialize};

pub use ssim::{dssim_loss, ssim, ssim_with_grad};

use crate::error::Result;
use crate::image::Image;
use crate::scalar::Real;

/// Weights and thresholds of the total objective.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LossWeights {
    /// Share of D-SSIM in the photometric term.
    pub lambda_ssim: f64,
    /// Weight of `mean |1 − α_s|`.
    pub lambda_s: f64,
    /// Weight of `mean |α_d|`.
    pub lambda_d: f64,
    /// Weight of the background opacity term (used only with a background
    /// model).
    pub lambda_bg: f64,
    /// Per-pixel background error below which a pixel counts as background.
    pub t_eps: f64,
    /// Threshold on the smoothed background indicator.
    pub mask_cut: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self { lambda_ssim: 0.2, lambda_s: 0.01, lambda_d: 0.01, lambda_bg: 0.15, t_eps: 0.003, mask_cut: 0.6 }
    }
}

impl LossWeights {
    /// Weights for scenes trained with the background model, where the
    /// static accumulation term is replaced by the background opacity term.
    pub fn with_background() -> Self {
        Self { lambda_s: 0.0, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        let vals = [self.lambda_ssim, self.lambda_s, self.lambda_d, self.lambda_bg, self.t_eps, self.mask_cut];
        if vals.iter().any(|v| !(v.is_finite() && *v >= 0.0)) || self.lambda_ssim > 1.0 {
            return Err(crate::error::Error::InvalidConfig("loss weights must be finite and non-negative".into()));
        }
        Ok(())
    }
}

/// Mean absolute error and its gradient.
pub fn l1_loss<T: Real>(pred: &Image<T>, gt: &Image<T>) -> Result<(T, Image<T>)> {
    pred.check_same_shape(gt, "L1 inputs")?;
    let inv = T::one() / T::lit(pred.data.len().max(1) as f64);
    let mut sum = T::zero();
    let mut grad = Image::zeros(pred.width, pred.height, pred.channels);
    for ((g, &p), &q) in grad.data.iter_mut().zip(&pred.data).zip(&gt.data) {
        let d = p - q;
        sum += d.abs();
        *g = if d > T::zero() {
            inv
        } else if d < T::zero() {
            -inv
        } else {
            T::zero()
        };
    }
    Ok((sum * inv, grad))
}

/// Output of [`alpha_regularizers`].
#[derive(Debug, Clone)]
pub struct AlphaReg<T: Real> {
    pub value: T,
    pub d_alpha_s: Image<T>,
    pub d_alpha_d: Image<T>,
}

/// `λ_s·mean|1 − α_s| + λ_d·mean|α_d|`. For accumulations in [0, 1] the
/// gradients are the constants `−λ_s/n` and `+λ_d/n`.
pub fn alpha_regularizers<T: Real>(
    alpha_s: &Image<T>,
    alpha_d: &Image<T>,
    lambda_s: T,
    lambda_d: T,
) -> Result<AlphaReg<T>> {
    alpha_s.check_same_shape(alpha_d, "alpha maps")?;
    let n = T::lit(alpha_s.data.len().max(1) as f64);
    let s: T = alpha_s.data.iter().fold(T::zero(), |acc, &a| acc + (T::one() - a).abs());
    let d: T = alpha_d.data.iter().fold(T::zero(), |acc, &a| acc + a.abs());
    Ok(AlphaReg {
        value: lambda_s * s / n + lambda_d * d / n,
        d_alpha_s: Image::filled(alpha_s.width, alpha_s.height, 1, -lambda_s / n),
        d_alpha_d: Image::filled(alpha_d.width, alpha_d.height, 1, lambda_d / n),
    })
}

/// Smoothed background indicator `M` and the thresholded set `P = {M > cut}`.
#[derive(Debug, Clone)]
pub struct BackgroundMask<T: Real> {
    pub smooth: Image<T>,
    pub selected: Vec<bool>,
}

impl<T: Real> BackgroundMask<T> {
    pub fn count(&self) -> usize {
        self.selected.iter().filter(|&&b| b).count()
    }
}

/// Marks pixels whose mean absolute RGB error between the background
/// prediction and the target is at most `t_eps`, smooths the indicator with a
/// normalized 3×3 box (replicated border) and keeps pixels above `mask_cut`.
pub fn background_mask<T: Real>(bg: &Image<T>, gt: &Image<T>, t_eps: T, mask_cut: T) -> Result<BackgroundMask<T>> {
    bg.check_same_shape(gt, "background mask inputs")?;
    let (w, h, nc) = (bg.width, bg.height, bg.channels);
    let inv_c = T::one() / T::lit(nc as f64);
    let hit: Vec<T> = (0..w * h)
        .map(|p| {
            let mut e = T::zero();
            for c in 0..nc {
                e += (bg.data[p * nc + c] - gt.data[p * nc + c]).abs();
            }
            if e * inv_c <= t_eps {
                T::one()
            } else {
                T::zero()
            }
        })
        .collect();
    let ninth = T::one() / T::lit(9.0);
    let mut smooth = Image::zeros(w, h, 1);
    for y in 0..h {
        for x in 0..w {
            let mut acc = T::zero();
            for dy in -1i64..=1 {
                for dx in -1i64..=1 {
                    let xx = (x as i64 + dx).clamp(0, w as i64 - 1) as usize;
                    let yy = (y as i64 + dy).clamp(0, h as i64 - 1) as usize;
                    acc += hit[yy * w + xx];
                }
            }
            smooth.data[y * w + x] = acc * ninth;
        }
    }
    let selected = smooth.data.iter().map(|&m| m > mask_cut).collect();
    Ok(BackgroundMask { smooth, selected })
}

/// `λ_bg` times the mean over `P` of the layered accumulation
/// `α_d + (1 − α_d)·α_s`, with gradients for both maps.
pub fn bg_opacity_loss<T: Real>(
    alpha_d: &Image<T>,
    alpha_s: &Image<T>,
    selected: &[bool],
    lambda_bg: T,
) -> Result<AlphaReg<T>> {
    alpha_s.check_same_shape(alpha_d, "alpha maps")?;
    if selected.len() != alpha_s.data.len() {
        return Err(crate::error::Error::shape("background set does not match the alpha maps"));
    }
    let (w, h) = (alpha_s.width, alpha_s.height);
    let mut d_alpha_s = Image::zeros(w, h, 1);
    let mut d_alpha_d = Image::zeros(w, h, 1);
    let count = selected.iter().filter(|&&b| b).count();
    if count == 0 {
        return Ok(AlphaReg { value: T::zero(), d_alpha_s, d_alpha_d });
    }
    let scale = lambda_bg / T::lit(count as f64);
    let mut sum = T::zero();
    for p in 0..selected.len() {
        if !selected[p] {
            continue;
        }
        let (ad, as_) = (alpha_d.data[p], alpha_s.data[p]);
        let acc = ad + (T::one() - ad) * as_;
        sum += acc.abs();
        let sign = if acc < T::zero() { -T::one() } else { T::one() };
        d_alpha_d.data[p] = scale * sign * (T::one() - as_);
        d_alpha_s.data[p] = scale * sign * (T::one() - ad);
    }
    Ok(AlphaReg { value: sum * scale, d_alpha_s, d_alpha_d })
}

/// Every term of the objective and the gradients it sends back into the
/// composite color and the two accumulation maps.
#[derive(Debug, Clone)]
pub struct LossOutput<T: Real> {
    pub total: T,
    pub l1: T,
    pub dssim: T,
    pub alpha_reg: T,
    pub bg_reg: T,
    pub d_color: Image<T>,
    pub d_alpha_s: Image<T>,
    pub d_alpha_d: Image<T>,
}

/// Photometric term on the composite plus the accumulation regularizers.
/// `background` enables the background opacity term; its mask is treated as
/// a constant.
pub fn total_loss<T: Real>(
    color: &Image<T>,
    alpha_s: &Image<T>,
    alpha_d: &Image<T>,
    background: Option<&Image<T>>,
    gt: &Image<T>,
    w: &LossWeights,
) -> Result<LossOutput<T>> {
    let lam = T::lit(w.lambda_ssim);
    let (l1, g_l1) = l1_loss(color, gt)?;
    let (dssim, g_ssim) = if w.lambda_ssim > 0.0 {
        let (v, g) = dssim_loss(color, gt)?;
        (v, Some(g))
    } else {
        (T::zero(), None)
    };
    let mut d_color = g_l1.map(|g| g * (T::one() - lam));
    if let Some(g) = g_ssim {
        for (d, s) in d_color.data.iter_mut().zip(&g.data) {
            *d += lam * *s;
        }
    }
    let reg = alpha_regularizers(alpha_s, alpha_d, T::lit(w.lambda_s), T::lit(w.lambda_d))?;
    let (mut d_alpha_s, mut d_alpha_d) = (reg.d_alpha_s, reg.d_alpha_d);
    let mut bg_reg = T::zero();
    if let Some(bg) = background.filter(|_| w.lambda_bg > 0.0) {
        let mask = background_mask(bg, gt, T::lit(w.t_eps), T::lit(w.mask_cut))?;
        let b = bg_opacity_loss(alpha_d, alpha_s, &mask.selected, T::lit(w.lambda_bg))?;
        bg_reg = b.value;
        for (d, s) in d_alpha_s.data.iter_mut().zip(&b.d_alpha_s.data) {
            *d += *s;
        }
        for (d, s) in d_alpha_d.data.iter_mut().zip(&b.d_alpha_d.data) {
            *d += *s;
        }
    }
    let photometric = (T::one() - lam) * l1 + lam * dssim;
    Ok(LossOutput {
        total: photometric + reg.value + bg_reg,
        l1,
        dssim,
        alpha_reg: reg.value,
        bg_reg,
        d_color,
        d_alpha_s,
        d_alpha_d,
    })
}
