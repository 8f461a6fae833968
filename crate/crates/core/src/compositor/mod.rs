//! Static and per-view distractor layers, their composite over an optional
//! background, and the backward pass through the composite.

pub mod adc;
pub mod checkpoint;
pub mod distractors;

pub use adc::{adc_step, reset_opacity, AdcOutcome, AdcPass, AdcReport, AdcSchedule, AdcStats, AdcThresholds, DistractorAdc};
pub use distractors::{init_distractors, init_distractors_at, plane_extent, plane_point};

use crate::appearance::{AppearanceModel, BackgroundCache, ToningCache};
use crate::error::{Error, Result};
use crate::image::Image;
use crate::losses::LossOutput;
use crate::raster::{
    accumulate_color_grads, render_backward, render_backward_geometry, render_forward, render_forward_with_colors,
    BackwardResult, RenderOutput,
};
use crate::scalar::Real;
use crate::splat::projection::gaussian_color;
use crate::splat::{Camera, ColorMode, GaussianSet};

/// The static set, one distractor set per training view and optional
/// appearance parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneModel<T: Real> {
    pub static_set: GaussianSet<T>,
    /// Indexed by training view.
    pub distractor_sets: Vec<GaussianSet<T>>,
    pub appearance: Option<AppearanceModel<T>>,
}

impl<T: Real> SceneModel<T> {
    pub fn new(static_set: GaussianSet<T>, distractor_sets: Vec<GaussianSet<T>>) -> Self {
        Self { static_set, distractor_sets, appearance: None }
    }

    pub fn num_views(&self) -> usize {
        self.distractor_sets.len()
    }

    pub fn distractors(&self, view: usize) -> Result<&GaussianSet<T>> {
        self.distractor_sets.get(view).ok_or(Error::UnknownView(view))
    }

    pub fn cast<U: Real>(&self) -> SceneModel<U> {
        SceneModel {
            static_set: self.static_set.cast(),
            distractor_sets: self.distractor_sets.iter().map(GaussianSet::cast).collect(),
            appearance: self.appearance.as_ref().map(AppearanceModel::cast),
        }
    }
}

/// Layers of a decomposed render and their composite.
#[derive(Debug, Clone)]
pub struct CompositeOutput<T: Real> {
    /// `c_d + (1 − α_d)·c_s (+ (1 − α_d)(1 − α_s)·c_BG)`.
    pub color: Image<T>,
    pub static_layer: RenderOutput<T>,
    /// All-zero when no distractor set was rendered.
    pub distractor_layer: RenderOutput<T>,
    pub background: Option<Image<T>>,
    /// Which distractor set was rendered.
    pub view: Option<usize>,
    toning: Option<ToningCache<T>>,
    background_cache: Option<BackgroundCache<T>>,
}

impl<T: Real> CompositeOutput<T> {
    pub fn alpha_s(&self) -> &Image<T> {
        &self.static_layer.alpha
    }

    pub fn alpha_d(&self) -> &Image<T> {
        &self.distractor_layer.alpha
    }
}

/// Distractor layer over static layer over background, per pixel.
pub fn composite<T: Real>(
    c_d: &Image<T>,
    a_d: &Image<T>,
    c_s: &Image<T>,
    a_s: &Image<T>,
    bg: Option<&Image<T>>,
) -> Image<T> {
    let mut out = Image::zeros(c_s.width, c_s.height, 3);
    for p in 0..c_s.num_pixels() {
        let td = T::one() - a_d.data[p];
        let ts = T::one() - a_s.data[p];
        for c in 0..3 {
            let mut v = c_d.data[3 * p + c] + td * c_s.data[3 * p + c];
            if let Some(bg) = bg {
                v += td * ts * bg.data[3 * p + c];
            }
            out.data[3 * p + c] = v;
        }
    }
    out
}

fn render_static<T: Real>(
    model: &SceneModel<T>,
    cam: &Camera<T>,
    embedding: Option<&[T]>,
) -> (RenderOutput<T>, Option<ToningCache<T>>, Option<Image<T>>, Option<BackgroundCache<T>>) {
    let set = &model.static_set;
    match (model.appearance.as_ref(), embedding) {
        (Some(app), Some(e)) => {
            let base: Vec<[T; 3]> = (0..set.len()).map(|i| gaussian_color(&set.gaussian(i), cam)).collect();
            let (toned, cache) = app.tone(e, set, &base);
            let out = render_forward_with_colors(set, cam, &toned);
            let (bg, bg_cache) = match app.background.as_ref() {
                Some(b) => {
                    let (img, c) = b.render(e, cam);
                    (Some(img), Some(c))
                }
                None => (None, None),
            };
            (out, Some(cache), bg, bg_cache)
        }
        _ => (render_forward(set, cam), None, None, None),
    }
}

/// Renders the static layer, the distractor layer of `view` (none for
/// `None`) and composites them. With an appearance model and an image
/// embedding, static colors are toned and the background is added.
pub fn render_decomposed<T: Real>(
    model: &SceneModel<T>,
    cam: &Camera<T>,
    view: Option<usize>,
    embedding: Option<&[T]>,
) -> Result<CompositeOutput<T>> {
    let distractor_layer = match view {
        Some(n) => render_forward(model.distractors(n)?, cam),
        None => render_forward(&GaussianSet::new(ColorMode::Rgb), cam),
    };
    let (static_layer, toning, background, background_cache) = render_static(model, cam, embedding);
    let color = composite(
        &distractor_layer.color,
        &distractor_layer.alpha,
        &static_layer.color,
        &static_layer.alpha,
        background.as_ref(),
    );
    Ok(CompositeOutput { color, static_layer, distractor_layer, background, view, toning, background_cache })
}

/// Static layer alone, as used for evaluation.
pub fn render_static_only<T: Real>(model: &SceneModel<T>, cam: &Camera<T>, embedding: Option<&[T]>) -> RenderOutput<T> {
    render_static(model, cam, embedding).0
}

/// Static layer composited over the background when one exists; equal to
/// the static layer's premultiplied color otherwise.
pub fn render_static_image<T: Real>(model: &SceneModel<T>, cam: &Camera<T>, embedding: Option<&[T]>) -> Image<T> {
    let (out, _, bg, _) = render_static(model, cam, embedding);
    match bg {
        Some(bg) => {
            let zero = Image::zeros(cam.width, cam.height, 3);
            let zero_a = Image::zeros(cam.width, cam.height, 1);
            composite(&zero, &zero_a, &out.color, &out.alpha, Some(&bg))
        }
        None => out.color,
    }
}

/// `α_d > threshold`, strictly.
pub fn distractor_mask<T: Real>(out: &CompositeOutput<T>, threshold: T) -> Vec<bool> {
    mask_from_alpha(out.alpha_d(), threshold)
}

/// Pixels of an accumulation map strictly above `threshold`.
pub fn mask_from_alpha<T: Real>(alpha: &Image<T>, threshold: T) -> Vec<bool> {
    alpha.data.iter().map(|&a| a > threshold).collect()
}

/// Pixel gradients for each layer given gradients on the composite color
/// and the two accumulation maps.
#[derive(Debug, Clone)]
pub struct LayerGrads<T: Real> {
    pub d_color_s: Image<T>,
    pub d_alpha_s: Image<T>,
    pub d_color_d: Image<T>,
    pub d_alpha_d: Image<T>,
    pub d_background: Option<Image<T>>,
}

/// Chain rule through [`composite`]. `d_alpha_s` and `d_alpha_d` are direct
/// loss gradients on the accumulation maps and are added in.
pub fn composite_backward<T: Real>(
    out: &CompositeOutput<T>,
    d_color: &Image<T>,
    d_alpha_s: &Image<T>,
    d_alpha_d: &Image<T>,
) -> LayerGrads<T> {
    let (w, h) = (out.color.width, out.color.height);
    let a_s = out.alpha_s();
    let a_d = out.alpha_d();
    let c_s = &out.static_layer.color;
    let mut g = LayerGrads {
        d_color_s: Image::zeros(w, h, 3),
        d_alpha_s: d_alpha_s.clone(),
        d_color_d: d_color.clone(),
        d_alpha_d: d_alpha_d.clone(),
        d_background: out.background.as_ref().map(|_| Image::zeros(w, h, 3)),
    };
    for p in 0..w * h {
        let td = T::one() - a_d.data[p];
        let ts = T::one() - a_s.data[p];
        let mut da_d = T::zero();
        let mut da_s = T::zero();
        for c in 0..3 {
            let gc = d_color.data[3 * p + c];
            g.d_color_s.data[3 * p + c] = td * gc;
            da_d -= gc * c_s.data[3 * p + c];
            if let (Some(bg), Some(dbg)) = (out.background.as_ref(), g.d_background.as_mut()) {
                let b = bg.data[3 * p + c];
                da_d -= gc * ts * b;
                da_s -= td * gc * b;
                dbg.data[3 * p + c] = td * ts * gc;
            }
        }
        g.d_alpha_d.data[p] += da_d;
        g.d_alpha_s.data[p] += da_s;
    }
    g
}

/// Gradients of every parameter touched by one decomposed render.
#[derive(Debug, Clone)]
pub struct ModelGrads<T: Real> {
    pub static_grads: BackwardResult<T>,
    pub distractor_grads: Option<BackwardResult<T>>,
    pub appearance: Option<AppearanceGrads<T>>,
}

/// Gradients of the appearance parameters for one image embedding.
#[derive(Debug, Clone)]
pub struct AppearanceGrads<T: Real> {
    pub toning: Vec<T>,
    pub embedding: Vec<T>,
    pub gaussian_embeddings: Vec<T>,
    pub background: Option<crate::appearance::BackgroundGrads<T>>,
}

/// Full backward from loss gradients to the static set, the rendered
/// distractor set and the appearance model.
pub fn model_backward<T: Real>(
    model: &SceneModel<T>,
    cam: &Camera<T>,
    out: &CompositeOutput<T>,
    loss: &LossOutput<T>,
) -> Result<ModelGrads<T>> {
    let lg = composite_backward(out, &loss.d_color, &loss.d_alpha_s, &loss.d_alpha_d);
    let set = &model.static_set;
    let (static_grads, appearance) = match (model.appearance.as_ref(), out.toning.as_ref()) {
        (Some(app), Some(tc)) => {
            let mut res = render_backward_geometry(set, cam, &out.static_layer, &lg.d_color_s, &lg.d_alpha_s)?;
            let tg = app.tone_backward(tc, &res.d_colors);
            accumulate_color_grads(set, cam, &tg.d_base, &mut res.grads);
            let dim = set.color_dim();
            for (i, d) in tg.d_dc.iter().enumerate() {
                for c in 0..3 {
                    res.grads.colors[i * dim + c] += d[c];
                }
            }
            let mut embedding = tg.d_embedding;
            let background = match (app.background.as_ref(), out.background_cache.as_ref(), lg.d_background.as_ref()) {
                (Some(b), Some(bc), Some(dbg)) => {
                    let bg = b.backward(bc, dbg);
                    for (e, d) in embedding.iter_mut().zip(&bg.d_embedding) {
                        *e += *d;
                    }
                    Some(bg)
                }
                _ => None,
            };
            let ag = AppearanceGrads {
                toning: tg.d_mlp,
                embedding,
                gaussian_embeddings: tg.d_gaussian_embeddings,
                background,
            };
            (res, Some(ag))
        }
        _ => (render_backward(set, cam, &out.static_layer, &lg.d_color_s, &lg.d_alpha_s)?, None),
    };
    let distractor_grads = match out.view {
        Some(n) => Some(render_backward(
            model.distractors(n)?,
            cam,
            &out.distractor_layer,
            &lg.d_color_d,
            &lg.d_alpha_d,
        )?),
        None => None,
    };
    Ok(ModelGrads { static_grads, distractor_grads, appearance })
}
