use serde::{Deserialize, Serialize};

use super::adam::AdamHyper;
use crate::compositor::distractors::{DEFAULT_COUNT, DEFAULT_RHO};
use crate::compositor::{AdcSchedule, AdcThresholds};
use crate::error::{Error, Result};
use crate::losses::LossWeights;

/// Everything that controls a training run. Serialized as TOML; every
/// field is optional and falls back to [`TrainConfig::default`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub iterations: usize,
    /// Steps rendered at reduced resolution.
    pub warmup_steps: usize,
    /// Resolution divisor during warm-up.
    pub warmup_downscale: usize,
    pub seed: u64,
    /// SH degree of the static set.
    pub sh_degree: usize,
    /// Random static points when the dataset has no point cloud.
    pub random_init_points: usize,
    /// Save a checkpoint every this many steps (0: never).
    pub checkpoint_interval: usize,
    pub distractors: DistractorConfig,
    pub schedule: AdcSchedule,
    pub adc: AdcThresholds,
    pub lr: LearningRates,
    pub loss: LossWeights,
    pub appearance: AppearanceConfig,
    pub adam: AdamHyper,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            iterations: 30_000,
            warmup_steps: 500,
            warmup_downscale: 2,
            seed: 0,
            sh_degree: 3,
            random_init_points: 10_000,
            checkpoint_interval: 0,
            distractors: DistractorConfig::default(),
            schedule: AdcSchedule::default(),
            adc: AdcThresholds::default(),
            lr: LearningRates::default(),
            loss: LossWeights::default(),
            appearance: AppearanceConfig::default(),
            adam: AdamHyper::default(),
        }
    }
}

/// Per-view distractor sets.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DistractorConfig {
    /// When false only the static set is trained.
    pub enabled: bool,
    /// Gaussians initialized per training view.
    pub count: usize,
    /// Camera-space depth of the initialization plane.
    pub rho: f64,
    /// Distractor sets are neither rendered nor updated before this step.
    pub delay_steps: usize,
}

impl Default for DistractorConfig {
    fn default() -> Self {
        Self { enabled: true, count: DEFAULT_COUNT, rho: DEFAULT_RHO, delay_steps: 0 }
    }
}

/// Length scale applied to the distractor position learning rate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PositionScale {
    /// The scene extent, as for static Gaussians.
    Scene,
    /// The width of the view's initialization plane.
    Plane,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LearningRates {
    /// Position rate at step 0, multiplied by the spatial extent.
    pub means_init: f64,
    pub means_final: f64,
    /// Steps over which the position rate decays exponentially.
    pub means_decay_steps: usize,
    pub log_scales: f64,
    pub quats: f64,
    pub opacity: f64,
    /// Zeroth-order SH coefficients.
    pub sh_dc: f64,
    /// Higher-order SH coefficients.
    pub sh_rest: f64,
    pub distractor_log_scales: f64,
    pub distractor_quats: f64,
    pub distractor_rgb: f64,
    pub distractor_position_scale: PositionScale,
}

impl Default for LearningRates {
    fn default() -> Self {
        Self {
            means_init: 1.6e-4,
            means_final: 1.6e-6,
            means_decay_steps: 30_000,
            log_scales: 5e-3,
            quats: 1e-3,
            opacity: 5e-2,
            sh_dc: 2.5e-3,
            sh_rest: 2.5e-3 / 20.0,
            distractor_log_scales: 5e-2,
            distractor_quats: 1e-2,
            distractor_rgb: 2.5e-2,
            distractor_position_scale: PositionScale::Scene,
        }
    }
}

/// Per-image appearance embeddings, toning network and background model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AppearanceConfig {
    pub enabled: bool,
    /// Also learn a background behind both Gaussian layers.
    pub background: bool,
    pub mlp_lr: f64,
    pub image_embedding_lr: f64,
    pub gaussian_embedding_lr: f64,
    pub background_encoder_lr: f64,
    pub background_dc_lr: f64,
    pub background_rest_lr: f64,
    pub background_encoder_lr_final: f64,
    pub background_dc_lr_final: f64,
    pub background_rest_lr_final: f64,
    /// Embedding fitting for held-out images.
    pub test_time_steps: usize,
    pub test_time_lr: f64,
}

impl Default for AppearanceConfig {
    fn default() -> Self {
        Self {
            enabled: false,
            background: false,
            mlp_lr: 5e-4,
            image_embedding_lr: 1e-3,
            gaussian_embedding_lr: 5e-3,
            background_encoder_lr: 2e-3,
            background_dc_lr: 2e-3,
            background_rest_lr: 1e-4,
            background_encoder_lr_final: 1e-4,
            background_dc_lr_final: 2e-4,
            background_rest_lr_final: 1e-5,
            test_time_steps: 128,
            test_time_lr: 1e-2,
        }
    }
}

impl TrainConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::InvalidConfig(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.warmup_downscale == 0 {
            return bad("warmup_downscale must be at least 1".into());
        }
        if self.sh_degree > 3 {
            return bad(format!("sh_degree {} exceeds 3", self.sh_degree));
        }
        if self.distractors.enabled && !(self.distractors.rho > 0.0 && self.distractors.rho.is_finite()) {
            return bad("distractors.rho must be positive".into());
        }
        let l = &self.lr;
        let a = &self.appearance;
        let rates = [
            ("lr.means_init", l.means_init),
            ("lr.means_final", l.means_final),
            ("lr.log_scales", l.log_scales),
            ("lr.quats", l.quats),
            ("lr.opacity", l.opacity),
            ("lr.sh_dc", l.sh_dc),
            ("lr.sh_rest", l.sh_rest),
            ("lr.distractor_log_scales", l.distractor_log_scales),
            ("lr.distractor_quats", l.distractor_quats),
            ("lr.distractor_rgb", l.distractor_rgb),
            ("appearance.mlp_lr", a.mlp_lr),
            ("appearance.image_embedding_lr", a.image_embedding_lr),
            ("appearance.gaussian_embedding_lr", a.gaussian_embedding_lr),
            ("appearance.background_encoder_lr", a.background_encoder_lr),
            ("appearance.background_dc_lr", a.background_dc_lr),
            ("appearance.background_rest_lr", a.background_rest_lr),
            ("appearance.background_encoder_lr_final", a.background_encoder_lr_final),
            ("appearance.background_dc_lr_final", a.background_dc_lr_final),
            ("appearance.background_rest_lr_final", a.background_rest_lr_final),
            ("appearance.test_time_lr", a.test_time_lr),
        ];
        if let Some((name, v)) = rates.iter().find(|(_, v)| !(v.is_finite() && *v > 0.0)) {
            return bad(format!("{name} must be positive, got {v}"));
        }
        if a.background && !a.enabled {
            return bad("appearance.background requires appearance.enabled".into());
        }
        let h = &self.adam;
        if !(0.0..1.0).contains(&h.beta1) || !(0.0..1.0).contains(&h.beta2) || !(h.eps > 0.0) {
            return bad("adam betas must lie in [0, 1) and eps be positive".into());
        }
        let t = &self.adc;
        if !(t.grad > 0.0 && t.size_fraction > 0.0 && t.split_factor > 1.0 && t.max_screen_radius > 0.0)
            || !(0.0..1.0).contains(&t.min_opacity)
        {
            return bad("adc thresholds out of range".into());
        }
        if !(self.schedule.reset_value > 0.0 && self.schedule.reset_value < 1.0) {
            return bad("schedule.reset_value must lie in (0, 1)".into());
        }
        self.loss.validate()
    }
}
