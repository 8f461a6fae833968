//! Shared fixtures and oracles for the integration tests.
#![allow(dead_code)]

use decomp_splat::image::Image;
use decomp_splat::splat::{eval_alpha, project_gaussian, Camera, ColorMode, GaussianSet, SetGradients};
use nalgebra::{Vector2, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Camera on the -z axis looking at the origin.
pub fn front_camera(width: usize, height: usize) -> Camera<f64> {
    Camera::look_at(
        Vector3::new(0.0, 0.0, -4.0),
        Vector3::zeros(),
        Vector3::new(0.0, -1.0, 0.0),
        width as f64 * 1.4,
        width,
        height,
    )
}

pub fn random_quat(r: &mut impl Rng) -> [f64; 4] {
    loop {
        let q = [0; 4].map(|_| r.random_range(-1.0..1.0));
        if q.iter().map(|v| v * v).sum::<f64>() > 0.05 {
            return q;
        }
    }
}

pub struct SceneRanges {
    pub extent: f64,
    pub z: (f64, f64),
    pub log_scale: (f64, f64),
    pub opacity: (f64, f64),
}

impl Default for SceneRanges {
    fn default() -> Self {
        Self { extent: 1.0, z: (-1.0, 1.0), log_scale: (0.05f64.ln(), 0.35f64.ln()), opacity: (0.05, 0.95) }
    }
}

/// Random Gaussians in front of [`front_camera`]. SH colors get a DC term
/// that keeps them comfortably positive and small higher-order terms.
pub fn random_set(r: &mut impl Rng, n: usize, mode: ColorMode, ranges: &SceneRanges) -> GaussianSet<f64> {
    let mut set = GaussianSet::new(mode);
    for _ in 0..n {
        let e = ranges.extent;
        let mean = [r.random_range(-e..e), r.random_range(-e..e), r.random_range(ranges.z.0..ranges.z.1)];
        let ls = [0; 3].map(|_| r.random_range(ranges.log_scale.0..ranges.log_scale.1));
        let o: f64 = r.random_range(ranges.opacity.0..ranges.opacity.1);
        let logit = (o / (1.0 - o)).ln();
        let color: Vec<f64> = match mode {
            ColorMode::Rgb => (0..3).map(|_| r.random_range(0.0..1.0)).collect(),
            ColorMode::Sh { .. } => (0..mode.dim())
                .map(|k| if k < 3 { r.random_range(0.2..1.2) } else { r.random_range(-0.08..0.08) })
                .collect(),
        };
        set.push(mean, ls, random_quat(r), logit, &color);
    }
    set
}

/// Evaluates every visible Gaussian at every pixel in depth order with no
/// tiling at all.
pub fn brute_force_render(set: &GaussianSet<f64>, cam: &Camera<f64>) -> (Image<f64>, Image<f64>) {
    let mut splats: Vec<(usize, _)> =
        (0..set.len()).filter_map(|i| project_gaussian(&set.gaussian(i), cam).map(|s| (i, s))).collect();
    splats.sort_by(|a, b| a.1.depth.partial_cmp(&b.1.depth).unwrap().then(a.0.cmp(&b.0)));
    let mut color = Image::zeros(cam.width, cam.height, 3);
    let mut alpha = Image::zeros(cam.width, cam.height, 1);
    for y in 0..cam.height {
        for x in 0..cam.width {
            let px = Vector2::new(x as f64 + 0.5, y as f64 + 0.5);
            let mut t = 1.0;
            let mut c = [0.0; 3];
            for (_, s) in &splats {
                let a = eval_alpha(s.opacity, &s.cov, &(px - s.mean));
                if a <= 0.0 {
                    continue;
                }
                for ch in 0..3 {
                    c[ch] += s.color[ch] * a * t;
                }
                t *= 1.0 - a;
                if t < 1e-4 {
                    break;
                }
            }
            for ch in 0..3 {
                color.set(x, y, ch, c[ch]);
            }
            alpha.set(x, y, 0, 1.0 - t);
        }
    }
    (color, alpha)
}

/// Relative error with an absolute floor so coordinates whose true gradient
/// is (numerically) zero are judged on absolute agreement.
pub fn rel_err(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

pub struct GradCheck {
    pub label: String,
    pub analytic: f64,
    pub numeric: f64,
}

impl GradCheck {
    pub fn err(&self) -> f64 {
        rel_err(self.analytic, self.numeric, 1e-6)
    }
}

/// Central-difference derivative of `f` at the value behind `slot`.
pub fn central_diff(h: f64, mut f: impl FnMut(f64) -> f64, x0: f64) -> f64 {
    (f(x0 + h) - f(x0 - h)) / (2.0 * h)
}

/// Finite-difference checks of every parameter of `set` against `grads`.
pub fn check_set(
    tag: &str,
    set: &GaussianSet<f64>,
    grads: &SetGradients<f64>,
    h: f64,
    loss: &dyn Fn(&GaussianSet<f64>) -> f64,
) -> Vec<GradCheck> {
    let mut out = Vec::new();
    let mut probe = |label: String, analytic: f64, get: &dyn Fn(&mut GaussianSet<f64>) -> &mut f64| {
        let mut s = set.clone();
        let x0 = *get(&mut s);
        let numeric = central_diff(
            h,
            |x| {
                *get(&mut s) = x;
                loss(&s)
            },
            x0,
        );
        out.push(GradCheck { label, analytic, numeric });
    };
    for i in 0..set.len() {
        for k in 0..3 {
            probe(format!("{tag}.mean[{i}][{k}]"), grads.means[i][k], &|s| &mut s.means[i][k]);
            probe(format!("{tag}.log_scale[{i}][{k}]"), grads.log_scales[i][k], &|s| &mut s.log_scales[i][k]);
        }
        for k in 0..4 {
            probe(format!("{tag}.quat[{i}][{k}]"), grads.quats[i][k], &|s| &mut s.quats[i][k]);
        }
        probe(format!("{tag}.opacity_logit[{i}]"), grads.opacity_logits[i], &|s| &mut s.opacity_logits[i]);
    }
    for j in 0..set.colors.len() {
        probe(format!("{tag}.color[{j}]"), grads.colors[j], &|s| &mut s.colors[j]);
    }
    out
}

pub fn summarize(checks: &[GradCheck]) -> (f64, f64) {
    let worst = checks.iter().map(GradCheck::err).fold(0.0, f64::max);
    let good = checks.iter().filter(|c| c.err() < 1e-3).count() as f64 / checks.len().max(1) as f64;
    (good, worst)
}

pub fn assert_grads(checks: &[GradCheck], tol: f64) {
    for c in checks {
        assert!(c.err() < tol, "{}: analytic {} numeric {} (rel {})", c.label, c.analytic, c.numeric, c.err());
    }
}

/// One randomized configuration of the full decomposed render and loss: a
/// static set of varying SH degree, the view's distractor set and, on odd
/// seeds, an appearance model (with a background on every other of those).
pub struct EndToEnd {
    pub model: decomp_splat::compositor::SceneModel<f64>,
    pub cam: Camera<f64>,
    pub gt: Image<f64>,
    pub weights: decomp_splat::losses::LossWeights,
}

impl EndToEnd {
    pub fn new(seed: u64) -> Self {
        use decomp_splat::appearance::AppearanceModel;
        use decomp_splat::compositor::SceneModel;
        let mut r = rng(seed);
        let cam = front_camera(16, 16);
        let degree = (seed % 4) as usize;
        let ranges = SceneRanges { opacity: (0.15, 0.8), ..Default::default() };
        let static_set = random_set(&mut r, 6, ColorMode::Sh { degree }, &ranges);
        let near = SceneRanges { z: (-3.0, -2.2), extent: 0.4, opacity: (0.1, 0.6), log_scale: (0.04f64.ln(), 0.15f64.ln()) };
        let distractors = random_set(&mut r, 4, ColorMode::Rgb, &near);
        let mut model = SceneModel::new(static_set, vec![GaussianSet::new(ColorMode::Rgb), distractors]);
        let with_appearance = seed % 2 == 1;
        let with_background = seed % 4 == 1;
        if with_appearance {
            let bounds = [[-1.5; 3], [1.5; 3]];
            let mut app = AppearanceModel::new(2, &model.static_set, bounds, with_background, &mut r);
            for p in app.toning.params.iter_mut() {
                *p = r.random_range(-0.15..0.15);
            }
            for e in app.image_embeddings.iter_mut() {
                *e = r.random_range(-0.5..0.5);
            }
            model.appearance = Some(app);
        }
        let gt = Image::from_vec(16, 16, 3, (0..768).map(|_| r.random_range(0.0..1.0)).collect()).unwrap();
        let weights = decomp_splat::losses::LossWeights {
            lambda_ssim: 0.2,
            lambda_s: 0.05,
            lambda_d: 0.01,
            lambda_bg: if with_background { 0.15 } else { 0.0 },
            // loose enough that some pixels count as background
            t_eps: 0.3,
            ..Default::default()
        };
        Self { model, cam, gt, weights }
    }

    fn embedding(model: &decomp_splat::compositor::SceneModel<f64>) -> Option<Vec<f64>> {
        model.appearance.as_ref().map(|a| a.image_embedding(1).to_vec())
    }

    pub fn loss(&self, model: &decomp_splat::compositor::SceneModel<f64>) -> f64 {
        use decomp_splat::compositor::render_decomposed;
        let e = Self::embedding(model);
        let out = render_decomposed(model, &self.cam, Some(1), e.as_deref()).unwrap();
        decomp_splat::losses::total_loss(&out.color, out.alpha_s(), out.alpha_d(), out.background.as_ref(), &self.gt, &self.weights)
            .unwrap()
            .total
    }

    /// Analytic gradients of every parameter class against central
    /// differences. MLP weights are sampled; everything else is exhaustive.
    pub fn checks(&self, h: f64) -> Vec<GradCheck> {
        use decomp_splat::compositor::{model_backward, render_decomposed, SceneModel};
        let m = &self.model;
        let e = Self::embedding(m);
        let out = render_decomposed(m, &self.cam, Some(1), e.as_deref()).unwrap();
        let loss = decomp_splat::losses::total_loss(&out.color, out.alpha_s(), out.alpha_d(), out.background.as_ref(), &self.gt, &self.weights)
            .unwrap();
        let g = model_backward(m, &self.cam, &out, &loss).unwrap();
        let mut checks = check_set("static", &m.static_set, &g.static_grads.grads, h, &|s| {
            self.loss(&SceneModel { static_set: s.clone(), ..m.clone() })
        });
        let dg = g.distractor_grads.as_ref().unwrap();
        checks.extend(check_set("distractor", &m.distractor_sets[1], &dg.grads, h, &|s| {
            let mut mm = m.clone();
            mm.distractor_sets[1] = s.clone();
            self.loss(&mm)
        }));
        if let (Some(app), Some(ag)) = (m.appearance.as_ref(), g.appearance.as_ref()) {
            let mut probe = |label: String, analytic: f64, get: &dyn Fn(&mut SceneModel<f64>) -> &mut f64| {
                let mut mm = m.clone();
                let x0 = *get(&mut mm);
                let numeric = central_diff(h, |x| { *get(&mut mm) = x; self.loss(&mm) }, x0);
                checks.push(GradCheck { label, analytic, numeric });
            };
            let mut r = rng(7);
            let dim = decomp_splat::appearance::IMAGE_EMBED_DIM;
            for k in 0..dim {
                probe(format!("image_embedding[{k}]"), ag.embedding[k], &|mm| &mut mm.appearance.as_mut().unwrap().image_embeddings[dim + k]);
            }
            for k in 0..app.gaussian_embeddings.len() {
                probe(format!("gaussian_embedding[{k}]"), ag.gaussian_embeddings[k], &|mm| {
                    &mut mm.appearance.as_mut().unwrap().gaussian_embeddings[k]
                });
            }
            for _ in 0..60 {
                let k = r.random_range(0..app.toning.num_params());
                probe(format!("toning[{k}]"), ag.toning[k], &|mm| &mut mm.appearance.as_mut().unwrap().toning.params[k]);
            }
            if let (Some(b), Some(bg)) = (app.background.as_ref(), ag.background.as_ref()) {
                for _ in 0..30 {
                    let k = r.random_range(0..b.encoder.num_params());
                    probe(format!("bg.encoder[{k}]"), bg.d_encoder[k], &|mm| {
                        &mut mm.appearance.as_mut().unwrap().background.as_mut().unwrap().encoder.params[k]
                    });
                    let k = r.random_range(0..b.rest_head.num_params());
                    probe(format!("bg.rest[{k}]"), bg.d_rest_head[k], &|mm| {
                        &mut mm.appearance.as_mut().unwrap().background.as_mut().unwrap().rest_head.params[k]
                    });
                }
                for k in 0..b.dc_head.num_params().min(60) {
                    probe(format!("bg.dc[{k}]"), bg.d_dc_head[k], &|mm| {
                        &mut mm.appearance.as_mut().unwrap().background.as_mut().unwrap().dc_head.params[k]
                    });
                }
            }
        }
        checks
    }
}
