//! The training loop.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::adam::exp_decay;
use super::config::{PositionScale, TrainConfig};
use super::optim::{AppearanceLrs, AppearanceOptimizer, SetLrs, SetOptimizer};
use crate::appearance::AppearanceModel;
use crate::compositor::{
    adc_step, init_distractors, model_backward, plane_extent, render_decomposed, reset_opacity, AdcPass, AdcReport,
    AdcStats, DistractorAdc, SceneModel,
};
use crate::error::{Error, Result};
use crate::image::Image;
use crate::io::Dataset;
use crate::knn::knn_rms_distance;
use crate::losses::total_loss;
use crate::scalar::Real;
use crate::splat::sh::rgb_to_sh_dc;
use crate::splat::{Camera, ColorMode, GaussianSet};

/// Initial opacity of static Gaussians.
pub const STATIC_INIT_OPACITY: f64 = 0.1;

/// Everything that evolves during training.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainState<T: Real> {
    pub model: SceneModel<T>,
    pub static_opt: SetOptimizer<T>,
    /// One per training view; empty when distractors are disabled.
    pub distractor_opts: Vec<SetOptimizer<T>>,
    pub appearance_opt: Option<AppearanceOptimizer<T>>,
    pub static_stats: AdcStats<T>,
    pub distractor_stats: Vec<AdcStats<T>>,
    /// How often each training view has been trained.
    pub visits: Vec<u32>,
    /// Completed steps.
    pub step: usize,
    /// Spatial extent of the static scene.
    pub static_extent: T,
    /// Spatial extent of each distractor set.
    pub distractor_extents: Vec<T>,
}

/// One line of the metrics log.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub step: usize,
    /// Training-view index.
    pub view: usize,
    pub l1: f64,
    pub dssim: f64,
    pub alpha_reg: f64,
    pub bg_reg: f64,
    pub total: f64,
    pub num_static: usize,
    pub num_distractors_view: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ResetPhase {
    Before,
    After,
}

/// Notifications from the loop; observers see the state at that moment.
#[derive(Debug, Clone, PartialEq)]
pub enum TrainEvent {
    StaticAdc { step: usize, pass: AdcPass, report: AdcReport },
    DistractorAdc { step: usize, view: usize, visits: u32, action: DistractorAdc, report: AdcReport },
    OpacityReset { step: usize, phase: ResetPhase, changed: usize },
    /// A checkpoint is due (every `checkpoint_interval` steps).
    Checkpoint { step: usize },
    /// Last event of every step.
    StepDone(MetricsRow),
}

pub trait TrainObserver<T: Real> {
    fn on_event(&mut self, state: &TrainState<T>, event: &TrainEvent) -> Result<()>;
}

impl<T: Real, F: FnMut(&TrainState<T>, &TrainEvent) -> Result<()>> TrainObserver<T> for F {
    fn on_event(&mut self, state: &TrainState<T>, event: &TrainEvent) -> Result<()> {
        self(state, event)
    }
}

/// Observer that ignores everything.
pub struct NoObserver;

impl<T: Real> TrainObserver<T> for NoObserver {
    fn on_event(&mut self, _: &TrainState<T>, _: &TrainEvent) -> Result<()> {
        Ok(())
    }
}

struct View<T: Real> {
    camera: Camera<T>,
    image: Image<T>,
    warm_camera: Camera<T>,
    warm_image: Image<T>,
}

/// Stepwise trainer; [`train`] runs it to completion.
pub struct Trainer<T: Real> {
    pub config: TrainConfig,
    pub state: TrainState<T>,
    views: Vec<View<T>>,
    rng: ChaCha8Rng,
    order: Vec<usize>,
    cursor: usize,
}

fn init_static<T: Real>(data: &Dataset, cfg: &TrainConfig, rng: &mut impl Rng) -> Result<GaussianSet<T>> {
    let mode = ColorMode::Sh { degree: cfg.sh_degree };
    let (xyz, rgb): (Vec<[f64; 3]>, Vec<[f64; 3]>) = match &data.init_points {
        Some(p) if !p.is_empty() => p.iter().map(|p| (p.xyz, p.rgb)).unzip(),
        _ => {
            if cfg.random_init_points == 0 {
                return Err(Error::InvalidConfig("no initial points and random_init_points = 0".into()));
            }
            let [lo, hi] = data.bounds;
            (0..cfg.random_init_points)
                .map(|_| {
                    let p = [0, 1, 2].map(|k| if hi[k] > lo[k] { rng.random_range(lo[k]..hi[k]) } else { lo[k] });
                    (p, [0; 3].map(|_| rng.random_range(0.0..1.0)))
                })
                .unzip()
        }
    };
    let means: Vec<[T; 3]> = xyz.iter().map(|p| p.map(T::lit)).collect();
    let dist = knn_rms_distance(&means, 3);
    let fallback = T::lit(0.01 * data.camera_extent());
    let logit = T::lit(STATIC_INIT_OPACITY).logit();
    let mut set = GaussianSet::new(mode);
    let mut color = vec![T::zero(); mode.dim()];
    for (i, m) in means.iter().enumerate() {
        for c in 0..3 {
            color[c] = T::lit(rgb_to_sh_dc(rgb[i][c]));
        }
        let s = if means.len() > 1 && dist[i] > T::zero() { dist[i] } else { fallback };
        set.push(*m, [s.ln(); 3], [T::one(), T::zero(), T::zero(), T::zero()], logit, &color);
    }
    Ok(set)
}

impl<T: Real> Trainer<T> {
    /// Validates the inputs and builds the initial model.
    pub fn new(data: &Dataset, config: &TrainConfig) -> Result<Self> {
        config.validate()?;
        let train = data.train_indices();
        if train.is_empty() {
            return Err(Error::InvalidConfig("dataset has no training frames".into()));
        }
        let f = config.warmup_downscale;
        let views: Vec<View<T>> = train
            .iter()
            .map(|&i| {
                let fr = &data.frames[i];
                let camera: Camera<T> = fr.camera.cast();
                let image: Image<T> = fr.image.cast();
                View { warm_camera: camera.downscaled(f), warm_image: image.downscale(f), camera, image }
            })
            .collect();
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let static_set = init_static::<T>(data, config, &mut rng)?;
        let appearance = config.appearance.enabled.then(|| {
            let bounds = data.bounds.map(|r| r.map(T::lit));
            AppearanceModel::new(views.len(), &static_set, bounds, config.appearance.background, &mut rng)
        });
        let d = &config.distractors;
        let (distractor_sets, distractor_extents): (Vec<_>, Vec<_>) = if d.enabled {
            let rho = T::lit(d.rho);
            views.iter().map(|v| (init_distractors(&v.camera, d.count, rho, &mut rng), plane_extent(&v.camera, rho))).unzip()
        } else {
            (Vec::new(), Vec::new())
        };
        let model = SceneModel { static_set, distractor_sets, appearance };
        let state = TrainState {
            static_opt: SetOptimizer::new(&model.static_set),
            distractor_opts: model.distractor_sets.iter().map(SetOptimizer::new).collect(),
            appearance_opt: model.appearance.as_ref().map(AppearanceOptimizer::new),
            static_stats: AdcStats::new(model.static_set.len()),
            distractor_stats: model.distractor_sets.iter().map(|s| AdcStats::new(s.len())).collect(),
            visits: vec![0; views.len()],
            step: 0,
            static_extent: T::lit(data.camera_extent()),
            distractor_extents,
            model,
        };
        Ok(Self { config: config.clone(), state, views, rng, order: Vec::new(), cursor: 0 })
    }

    pub fn num_views(&self) -> usize {
        self.views.len()
    }

    pub fn is_done(&self) -> bool {
        self.state.step >= self.config.iterations
    }

    fn next_view(&mut self) -> usize {
        if self.cursor >= self.order.len() {
            self.order = (0..self.views.len()).collect();
            self.order.shuffle(&mut self.rng);
            self.cursor = 0;
        }
        self.cursor += 1;
        self.order[self.cursor - 1]
    }

    fn static_lrs(&self, step: usize) -> SetLrs {
        let l = &self.config.lr;
        SetLrs {
            means: exp_decay(l.means_init, l.means_final, step, l.means_decay_steps) * self.state.static_extent.as_f64(),
            log_scales: l.log_scales,
            quats: l.quats,
            opacity: l.opacity,
            color_dc: l.sh_dc,
            color_rest: l.sh_rest,
        }
    }

    fn distractor_lrs(&self, step: usize, view: usize) -> SetLrs {
        let l = &self.config.lr;
        let scale = match l.distractor_position_scale {
            PositionScale::Scene => self.state.static_extent,
            PositionScale::Plane => self.state.distractor_extents[view],
        };
        SetLrs {
            means: exp_decay(l.means_init, l.means_final, step, l.means_decay_steps) * scale.as_f64(),
            log_scales: l.distractor_log_scales,
            quats: l.distractor_quats,
            opacity: l.opacity,
            color_dc: l.distractor_rgb,
            color_rest: l.distractor_rgb,
        }
    }

    fn appearance_lrs(&self, step: usize) -> AppearanceLrs {
        let a = &self.config.appearance;
        let n = self.config.iterations;
        AppearanceLrs {
            mlp: a.mlp_lr,
            image_embedding: a.image_embedding_lr,
            gaussian_embedding: a.gaussian_embedding_lr,
            background_encoder: exp_decay(a.background_encoder_lr, a.background_encoder_lr_final, step, n),
            background_dc: exp_decay(a.background_dc_lr, a.background_dc_lr_final, step, n),
            background_rest: exp_decay(a.background_rest_lr, a.background_rest_lr_final, step, n),
        }
    }

    /// Runs one optimization step on the next view of the shuffled order.
    pub fn step(&mut self, observer: &mut dyn TrainObserver<T>) -> Result<MetricsRow> {
        let step = self.state.step + 1;
        let view = self.next_view();
        let cfg = &self.config;
        let use_d = cfg.distractors.enabled && step > cfg.distractors.delay_steps;
        let v = &self.views[view];
        let (cam, gt) = if step <= cfg.warmup_steps { (&v.warm_camera, &v.warm_image) } else { (&v.camera, &v.image) };

        let st = &mut self.state;
        let embedding = st.model.appearance.as_ref().map(|a| a.image_embedding(view).to_vec());
        let out = render_decomposed(&st.model, cam, use_d.then_some(view), embedding.as_deref())?;
        let loss = total_loss(&out.color, out.alpha_s(), out.alpha_d(), out.background.as_ref(), gt, &cfg.loss)?;
        if !loss.total.is_finite_val() {
            return Err(Error::NonFiniteLoss {
                step,
                view,
                detail: format!(
                    "l1 {} dssim {} alpha_reg {} bg_reg {}",
                    loss.l1, loss.dssim, loss.alpha_reg, loss.bg_reg
                ),
            });
        }
        let grads = model_backward(&st.model, cam, &out, &loss)?;
        SetOptimizer::check("static", &grads.static_grads.grads)?;
        if let Some(g) = &grads.distractor_grads {
            SetOptimizer::check(&format!("distractor[{view}]"), &g.grads)?;
        }
        if let Some(g) = &grads.appearance {
            AppearanceOptimizer::check(g)?;
        }

        let static_lrs = self.static_lrs(step);
        let distractor_lrs = use_d.then(|| self.distractor_lrs(step, view));
        let app_lrs = self.appearance_lrs(step);
        let cfg = &self.config;
        let st = &mut self.state;
        st.static_opt.step(&mut st.model.static_set, &grads.static_grads.grads, &static_lrs, &cfg.adam);
        st.static_stats.accumulate(&grads.static_grads.screen_grad_norm, &out.static_layer.stats.radius);
        if let (Some(g), Some(lr)) = (&grads.distractor_grads, &distractor_lrs) {
            let set = &mut st.model.distractor_sets[view];
            st.distractor_opts[view].step(set, &g.grads, lr, &cfg.adam);
            set.clamp_rgb();
            st.distractor_stats[view].accumulate(&g.screen_grad_norm, &out.distractor_layer.stats.radius);
        }
        if let (Some(opt), Some(app), Some(g)) =
            (st.appearance_opt.as_mut(), st.model.appearance.as_mut(), grads.appearance.as_ref())
        {
            opt.step(app, view, g, &app_lrs, &cfg.adam);
        }
        st.visits[view] += 1;
        st.step = step;

        let row = MetricsRow {
            step,
            view,
            l1: loss.l1.as_f64(),
            dssim: loss.dssim.as_f64(),
            alpha_reg: loss.alpha_reg.as_f64(),
            bg_reg: loss.bg_reg.as_f64(),
            total: loss.total.as_f64(),
            num_static: 0,
            num_distractors_view: 0,
        };
        drop(out);
        self.density_control(step, view, use_d, observer)?;
        let st = &self.state;
        let row = MetricsRow {
            num_static: st.model.static_set.len(),
            num_distractors_view: st.model.distractor_sets.get(view).map_or(0, GaussianSet::len),
            ..row
        };
        if self.config.checkpoint_interval > 0 && step.is_multiple_of(self.config.checkpoint_interval) {
            observer.on_event(&self.state, &TrainEvent::Checkpoint { step })?;
        }
        observer.on_event(&self.state, &TrainEvent::StepDone(row))?;
        Ok(row)
    }

    fn density_control(&mut self, step: usize, view: usize, use_d: bool, observer: &mut dyn TrainObserver<T>) -> Result<()> {
        let sched = self.config.schedule;
        let th = self.config.adc;
        if sched.static_pass(step) {
            let pass = AdcPass { densify: true, cap_radius: sched.cap_radius(step) };
            let st = &mut self.state;
            let outcome = adc_step(&mut st.model.static_set, &st.static_stats, &th, st.static_extent, pass, &mut self.rng);
            st.static_opt = st.static_opt.remap(&outcome.rows, st.model.static_set.color_dim());
            st.static_stats = AdcStats::new(st.model.static_set.len());
            if let Some(app) = st.model.appearance.as_mut() {
                app.remap_gaussians(&outcome.rows, &st.model.static_set);
            }
            if let Some(opt) = st.appearance_opt.as_mut() {
                opt.remap_gaussians(&outcome.rows);
            }
            observer.on_event(&self.state, &TrainEvent::StaticAdc { step, pass, report: outcome.report })?;
        }

        if use_d {
            let visits = self.state.visits[view];
            let action = sched.distractor_pass(visits, step);
            if action != DistractorAdc::Skip {
                let pass = AdcPass { densify: action == DistractorAdc::Full, cap_radius: false };
                let st = &mut self.state;
                let set = &mut st.model.distractor_sets[view];
                let outcome =
                    adc_step(set, &st.distractor_stats[view], &th, st.distractor_extents[view], pass, &mut self.rng);
                st.distractor_opts[view] = st.distractor_opts[view].remap(&outcome.rows, set.color_dim());
                st.distractor_stats[view] = AdcStats::new(set.len());
                observer.on_event(
                    &self.state,
                    &TrainEvent::DistractorAdc { step, view, visits, action, report: outcome.report },
                )?;
            }
        }

        if sched.opacity_reset(step) {
            observer.on_event(&self.state, &TrainEvent::OpacityReset { step, phase: ResetPhase::Before, changed: 0 })?;
            let st = &mut self.state;
            let changed = reset_opacity(&mut st.model.static_set, sched.reset_value);
            st.static_opt.opacity.reset_moments();
            observer.on_event(&self.state, &TrainEvent::OpacityReset { step, phase: ResetPhase::After, changed })?;
        }
        Ok(())
    }

    pub fn into_state(self) -> TrainState<T> {
        self.state
    }
}

/// Result of a full run.
#[derive(Debug, Clone)]
pub struct TrainOutput<T: Real> {
    pub state: TrainState<T>,
    pub metrics: Vec<MetricsRow>,
}

/// Trains for `config.iterations` steps.
pub fn train<T: Real>(data: &Dataset, config: &TrainConfig, observer: &mut dyn TrainObserver<T>) -> Result<TrainOutput<T>> {
    let mut trainer = Trainer::new(data, config)?;
    let mut metrics = Vec::with_capacity(config.iterations);
    while !trainer.is_done() {
        metrics.push(trainer.step(observer)?);
    }
    Ok(TrainOutput { state: trainer.into_state(), metrics })
}
