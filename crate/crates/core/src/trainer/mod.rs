//! Optimization: Adam, configuration, the training loop, checkpoints and
//! evaluation.

pub mod adam;
pub mod checkpoint;
pub mod config;
pub mod eval;
pub mod optim;
pub mod run;
pub mod sweep;

pub use adam::{check_finite, exp_decay, AdamHyper, AdamState};
pub use checkpoint::{decode_checkpoint, encode_checkpoint, load_checkpoint, save_checkpoint, Checkpoint};
pub use config::{AppearanceConfig, DistractorConfig, LearningRates, PositionScale, TrainConfig};
pub use eval::{evaluate, eval_frames, left_half_camera, mean_embedding, test_time_optimize, EvalReport, EvalRow, Protocol, TestTimeOptions};
pub use optim::{AppearanceLrs, AppearanceOptimizer, SetLrs, SetOptimizer};
pub use run::{train, MetricsRow, NoObserver, ResetPhase, TrainEvent, TrainObserver, TrainOutput, TrainState, Trainer};
pub use sweep::{baseline_config, dedup_keep_order, static_psnr, with_distractor_count};

impl TestTimeOptions {
    pub fn from_config(cfg: &TrainConfig) -> Self {
        Self { steps: cfg.appearance.test_time_steps, lr: cfg.appearance.test_time_lr, adam: cfg.adam, loss: cfg.loss }
    }
}
