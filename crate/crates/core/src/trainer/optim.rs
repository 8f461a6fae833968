//! Optimizer state for every parameter group of a model.

use super::adam::{check_finite, AdamHyper, AdamState};
use crate::appearance::{AppearanceModel, IMAGE_EMBED_DIM, GAUSSIAN_EMBED_DIM};
use crate::compositor::AppearanceGrads;
use crate::error::Result;
use crate::scalar::Real;
use crate::splat::{GaussianSet, SetGradients};

/// Learning rates of one Gaussian-set update.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SetLrs {
    pub means: f64,
    pub log_scales: f64,
    pub quats: f64,
    pub opacity: f64,
    /// First three color scalars (RGB, or the SH DC term).
    pub color_dc: f64,
    pub color_rest: f64,
}

/// One Adam state per parameter group of a Gaussian set.
#[derive(Debug, Clone, PartialEq)]
pub struct SetOptimizer<T: Real> {
    pub means: AdamState<T>,
    pub log_scales: AdamState<T>,
    pub quats: AdamState<T>,
    pub opacity: AdamState<T>,
    pub colors: AdamState<T>,
}

impl<T: Real> SetOptimizer<T> {
    pub fn new(set: &GaussianSet<T>) -> Self {
        let n = set.len();
        Self {
            means: AdamState::new(3 * n),
            log_scales: AdamState::new(3 * n),
            quats: AdamState::new(4 * n),
            opacity: AdamState::new(n),
            colors: AdamState::new(n * set.color_dim()),
        }
    }

    /// Rejects non-finite gradients, naming the group as `{prefix}.{group}`.
    pub fn check(prefix: &str, g: &SetGradients<T>) -> Result<()> {
        check_finite(&format!("{prefix}.means"), g.means.as_flattened())?;
        check_finite(&format!("{prefix}.log_scales"), g.log_scales.as_flattened())?;
        check_finite(&format!("{prefix}.quats"), g.quats.as_flattened())?;
        check_finite(&format!("{prefix}.opacity"), &g.opacity_logits)?;
        check_finite(&format!("{prefix}.colors"), &g.colors)
    }

    pub fn step(&mut self, set: &mut GaussianSet<T>, g: &SetGradients<T>, lr: &SetLrs, hp: &AdamHyper) {
        self.means.update(set.means.as_flattened_mut(), g.means.as_flattened(), T::lit(lr.means), hp);
        self.log_scales.update(set.log_scales.as_flattened_mut(), g.log_scales.as_flattened(), T::lit(lr.log_scales), hp);
        self.quats.update(set.quats.as_flattened_mut(), g.quats.as_flattened(), T::lit(lr.quats), hp);
        self.opacity.update(&mut set.opacity_logits, &g.opacity_logits, T::lit(lr.opacity), hp);
        let dim = set.color_dim();
        let (dc, rest) = (T::lit(lr.color_dc), T::lit(lr.color_rest));
        self.colors.update_with(&mut set.colors, &g.colors, |i| if i % dim < 3 { dc } else { rest }, hp);
    }

    /// State for a set reindexed by density control.
    pub fn remap(&self, rows: &[Option<usize>], color_dim: usize) -> Self {
        Self {
            means: self.means.remap(rows, 3),
            log_scales: self.log_scales.remap(rows, 3),
            quats: self.quats.remap(rows, 4),
            opacity: self.opacity.remap(rows, 1),
            colors: self.colors.remap(rows, color_dim),
        }
    }
}

/// Learning rates of one appearance update.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AppearanceLrs {
    pub mlp: f64,
    pub image_embedding: f64,
    pub gaussian_embedding: f64,
    pub background_encoder: f64,
    pub background_dc: f64,
    pub background_rest: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BackgroundOptimizer<T: Real> {
    pub encoder: AdamState<T>,
    pub dc_head: AdamState<T>,
    pub rest_head: AdamState<T>,
}

/// Appearance optimizer. Each image embedding has its own state so that
/// rows of images not in the current step stay untouched.
#[derive(Debug, Clone, PartialEq)]
pub struct AppearanceOptimizer<T: Real> {
    pub toning: AdamState<T>,
    pub image_embeddings: Vec<AdamState<T>>,
    pub gaussian_embeddings: AdamState<T>,
    pub background: Option<BackgroundOptimizer<T>>,
}

impl<T: Real> AppearanceOptimizer<T> {
    pub fn new(app: &AppearanceModel<T>) -> Self {
        Self {
            toning: AdamState::new(app.toning.num_params()),
            image_embeddings: (0..app.num_images()).map(|_| AdamState::new(IMAGE_EMBED_DIM)).collect(),
            gaussian_embeddings: AdamState::new(app.gaussian_embeddings.len()),
            background: app.background.as_ref().map(|b| BackgroundOptimizer {
                encoder: AdamState::new(b.encoder.num_params()),
                dc_head: AdamState::new(b.dc_head.num_params()),
                rest_head: AdamState::new(b.rest_head.num_params()),
            }),
        }
    }

    pub fn check(g: &AppearanceGrads<T>) -> Result<()> {
        check_finite("appearance.toning", &g.toning)?;
        check_finite("appearance.image_embedding", &g.embedding)?;
        check_finite("appearance.gaussian_embeddings", &g.gaussian_embeddings)?;
        if let Some(b) = &g.background {
            check_finite("appearance.background_encoder", &b.d_encoder)?;
            check_finite("appearance.background_dc", &b.d_dc_head)?;
            check_finite("appearance.background_rest", &b.d_rest_head)?;
        }
        Ok(())
    }

    /// Updates everything the render of image `view` touched.
    pub fn step(&mut self, app: &mut AppearanceModel<T>, view: usize, g: &AppearanceGrads<T>, lr: &AppearanceLrs, hp: &AdamHyper) {
        self.toning.update(&mut app.toning.params, &g.toning, T::lit(lr.mlp), hp);
        let row = &mut app.image_embeddings[view * IMAGE_EMBED_DIM..(view + 1) * IMAGE_EMBED_DIM];
        self.image_embeddings[view].update(row, &g.embedding, T::lit(lr.image_embedding), hp);
        self.gaussian_embeddings.update(&mut app.gaussian_embeddings, &g.gaussian_embeddings, T::lit(lr.gaussian_embedding), hp);
        if let (Some(o), Some(b), Some(gb)) = (self.background.as_mut(), app.background.as_mut(), g.background.as_ref()) {
            o.encoder.update(&mut b.encoder.params, &gb.d_encoder, T::lit(lr.background_encoder), hp);
            o.dc_head.update(&mut b.dc_head.params, &gb.d_dc_head, T::lit(lr.background_dc), hp);
            o.rest_head.update(&mut b.rest_head.params, &gb.d_rest_head, T::lit(lr.background_rest), hp);
        }
    }

    /// Follows a reindexing of the static set.
    pub fn remap_gaussians(&mut self, rows: &[Option<usize>]) {
        self.gaussian_embeddings = self.gaussian_embeddings.remap(rows, GAUSSIAN_EMBED_DIM);
    }
}
