//! Held-out evaluation.

use serde::{Deserialize, Serialize};

use super::adam::{AdamHyper, AdamState};
use crate::appearance::IMAGE_EMBED_DIM;
use crate::compositor::{model_backward, render_decomposed, render_static_image, SceneModel};
use crate::error::{Error, Result};
use crate::image::Image;
use crate::io::{psnr, ssim, Dataset};
use crate::losses::{total_loss, LossWeights};
use crate::scalar::Real;
use crate::splat::Camera;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Protocol {
    /// Static layer against the clean image, full frame.
    Static,
    /// Fit the image embedding on the left half, score the right half.
    LeftRight,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRow {
    pub frame: String,
    pub psnr: f64,
    pub ssim: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub rows: Vec<EvalRow>,
}

impl EvalReport {
    pub fn mean_psnr(&self) -> f64 {
        self.rows.iter().map(|r| r.psnr).sum::<f64>() / self.rows.len().max(1) as f64
    }

    pub fn mean_ssim(&self) -> f64 {
        self.rows.iter().map(|r| r.ssim).sum::<f64>() / self.rows.len().max(1) as f64
    }
}

/// Settings of embedding fitting on held-out images.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TestTimeOptions {
    pub steps: usize,
    pub lr: f64,
    pub adam: AdamHyper,
    /// Only the photometric weights are used.
    pub loss: LossWeights,
}

impl Default for TestTimeOptions {
    fn default() -> Self {
        Self { steps: 128, lr: 1e-2, adam: AdamHyper::default(), loss: LossWeights::default() }
    }
}

/// The camera restricted to the left `width / 2` columns; pixel rays are
/// unchanged.
pub fn left_half_camera<T: Real>(cam: &Camera<T>) -> Camera<T> {
    Camera { width: cam.width / 2, ..cam.clone() }
}

/// Fits an image embedding (starting from zero) to the left half of `gt`
/// with every other parameter frozen. The right half of `gt` is never read.
pub fn test_time_optimize<T: Real>(
    model: &SceneModel<T>,
    cam: &Camera<T>,
    gt: &Image<T>,
    opts: &TestTimeOptions,
) -> Result<Vec<T>> {
    if model.appearance.is_none() {
        return Err(Error::AppearanceDisabled);
    }
    let left_cam = left_half_camera(cam);
    let target = gt.crop_columns(0, left_cam.width);
    let weights = LossWeights { lambda_s: 0.0, lambda_d: 0.0, lambda_bg: 0.0, ..opts.loss };
    let mut e = vec![T::zero(); IMAGE_EMBED_DIM];
    let mut adam = AdamState::new(IMAGE_EMBED_DIM);
    for _ in 0..opts.steps {
        let out = render_decomposed(model, &left_cam, None, Some(&e))?;
        let loss = total_loss(&out.color, out.alpha_s(), out.alpha_d(), out.background.as_ref(), &target, &weights)?;
        let grads = model_backward(model, &left_cam, &out, &loss)?;
        let g = grads.appearance.expect("appearance gradients").embedding;
        adam.update(&mut e, &g, T::lit(opts.lr), &opts.adam);
    }
    Ok(e)
}

/// Mean of the training image embeddings, used for views without their own.
pub fn mean_embedding<T: Real>(model: &SceneModel<T>) -> Option<Vec<T>> {
    let app = model.appearance.as_ref()?;
    let n = app.num_images().max(1);
    let mut e = vec![T::zero(); IMAGE_EMBED_DIM];
    for j in 0..app.num_images() {
        for (a, b) in e.iter_mut().zip(app.image_embedding(j)) {
            *a += *b;
        }
    }
    Some(e.into_iter().map(|v| v / T::lit(n as f64)).collect())
}

/// Frames used for evaluation: the test split, or every frame if there is
/// none.
pub fn eval_frames(data: &Dataset) -> Vec<usize> {
    let test = data.test_indices();
    if test.is_empty() {
        (0..data.frames.len()).collect()
    } else {
        test
    }
}

/// Scores 8-bit quantized static renders against the clean images of
/// `frames`.
pub fn evaluate<T: Real>(
    model: &SceneModel<T>,
    data: &Dataset,
    frames: &[usize],
    protocol: Protocol,
    opts: &TestTimeOptions,
) -> Result<EvalReport> {
    let fallback = mean_embedding(model);
    let mut rows = Vec::with_capacity(frames.len());
    for &i in frames {
        let f = &data.frames[i];
        let clean: Image<T> = f.clean.as_ref().ok_or_else(|| Error::MissingCleanImage(f.name.clone()))?.cast();
        let cam: Camera<T> = f.camera.cast();
        let (pred, gt) = match protocol {
            Protocol::Static => (render_static_image(model, &cam, fallback.as_deref()).quantize_u8(), clean),
            Protocol::LeftRight => {
                let e = test_time_optimize(model, &cam, &clean, opts)?;
                let full = render_static_image(model, &cam, Some(&e)).quantize_u8();
                let x0 = cam.width / 2;
                (full.crop_columns(x0, cam.width), clean.crop_columns(x0, cam.width))
            }
        };
        rows.push(EvalRow { frame: f.name.clone(), psnr: psnr(&pred, &gt)?, ssim: ssim(&pred, &gt)?.as_f64() });
    }
    Ok(EvalReport { rows })
}
