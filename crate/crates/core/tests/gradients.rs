mod common;

use common::*;

#[test]
fn end_to_end_gradients_match_finite_differences() {
    let mut all = Vec::new();
    for seed in 0..20 {
        let checks = EndToEnd::new(seed).checks(1e-5);
        let (good, worst) = summarize(&checks);
        assert!(good >= 0.95 && worst < 1e-2, "seed {seed}: {:.3} within 1e-3, worst {worst:.2e}", good);
        all.extend(checks);
    }
    let labels = ["static.mean", "static.log_scale", "static.quat", "static.opacity", "static.color", "distractor.mean",
        "distractor.color", "image_embedding", "gaussian_embedding", "toning", "bg.encoder", "bg.rest", "bg.dc"];
    for l in labels {
        assert!(all.iter().any(|c| c.label.starts_with(l)), "no checks for {l}");
    }
}
