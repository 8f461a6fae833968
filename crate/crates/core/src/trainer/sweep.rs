//! Building blocks of the clutter-ratio and distractor-count sweeps.

use super::config::TrainConfig;
use super::eval::{eval_frames, evaluate, Protocol, TestTimeOptions};
use crate::compositor::SceneModel;
use crate::error::Result;
use crate::io::Dataset;
use crate::scalar::Real;

/// The same configuration with distractor sets switched off.
pub fn baseline_config(cfg: &TrainConfig) -> TrainConfig {
    let mut out = cfg.clone();
    out.distractors.enabled = false;
    out
}

/// The same configuration with `count` distractors per view.
pub fn with_distractor_count(cfg: &TrainConfig, count: usize) -> TrainConfig {
    let mut out = cfg.clone();
    out.distractors.count = count;
    out
}

/// Mean static-protocol PSNR over the evaluation frames.
pub fn static_psnr<T: Real>(model: &SceneModel<T>, data: &Dataset, cfg: &TrainConfig) -> Result<f64> {
    let frames = eval_frames(data);
    Ok(evaluate(model, data, &frames, Protocol::Static, &TestTimeOptions::from_config(cfg))?.mean_psnr())
}

/// Drops repeated entries, keeping first occurrences in order.
pub fn dedup_keep_order<T: PartialEq + Copy>(values: &[T]) -> Vec<T> {
    let mut out: Vec<T> = Vec::with_capacity(values.len());
    for &v in values {
        if !out.contains(&v) {
            out.push(v);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dedup_keeps_first_occurrences() {
        assert_eq!(dedup_keep_order(&[1000, 100, 1000, 2000, 100]), vec![1000, 100, 2000]);
        assert_eq!(dedup_keep_order::<usize>(&[]), Vec::<usize>::new());
    }

    #[test]
    fn baseline_only_disables_distractors() {
        let cfg = TrainConfig::default();
        let b = baseline_config(&cfg);
        assert!(!b.distractors.enabled);
        assert_eq!(TrainConfig { distractors: cfg.distractors, ..b }, cfg);
        assert_eq!(with_distractor_count(&cfg, 7).distractors.count, 7);
    }
}
