use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use decomp_splat::compositor::{distractor_mask, render_decomposed};
use decomp_splat::io::{generate_synthetic, load_dataset, write_dataset, write_mask_png, write_sprite_masks, SyntheticSpec};
use decomp_splat::trainer::{
    encode_checkpoint, eval_frames, evaluate, load_checkpoint, mean_embedding, train as run_training, MetricsRow,
    TestTimeOptions, TrainConfig, TrainEvent, TrainState,
};
use decomp_splat::Error;

use crate::args::{ConfigOverrides, EvalArgs, Layer, RenderArgs, SynthArgs, TrainArgs};
use crate::output::{csv_buffer, finish_csv, read_views, view_records, with_alpha, write_image, Staged, VIEWS_FILE};

pub const CHECKPOINT_FILE: &str = "checkpoint.bin";
pub const METRICS_FILE: &str = "metrics.csv";
pub const CONFIG_FILE: &str = "config.toml";

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

/// The configuration file (or the defaults) with command-line overrides.
pub fn load_config(path: Option<&Path>, overrides: &ConfigOverrides) -> Result<TrainConfig> {
    let mut cfg = match path {
        Some(p) => TrainConfig::from_toml(&read_text(p)?).with_context(|| format!("in {}", p.display()))?,
        None => TrainConfig::default(),
    };
    overrides.apply(&mut cfg);
    cfg.validate()?;
    Ok(cfg)
}

pub fn synth(a: &SynthArgs) -> Result<()> {
    let mut spec = match &a.spec {
        Some(p) => toml::from_str::<SyntheticSpec>(&read_text(p)?)
            .map_err(|e| Error::InvalidConfig(format!("{}: {e}", p.display())))?,
        None => SyntheticSpec::default(),
    };
    if let Some(s) = a.seed {
        spec.seed = s;
    }
    if let Some(r) = a.clutter_ratio {
        spec.clutter_ratio = r;
    }
    let scene = generate_synthetic(&spec)?;
    let staged = Staged::new(&a.out)?;
    write_dataset(staged.path(), &scene.dataset)?;
    write_sprite_masks(staged.path(), &scene)?;
    let spec_text = toml::to_string(&spec).context("serializing the spec")?;
    fs::write(staged.path().join("spec.toml"), spec_text)?;
    staged.commit()?;
    log::info!("wrote {} frames to {}", scene.dataset.frames.len(), a.out.display());
    Ok(())
}

/// Logs progress and writes periodic checkpoints into `dir`.
fn progress_observer<'a>(
    cfg: &'a TrainConfig,
    dir: Option<&'a Path>,
) -> impl FnMut(&TrainState<f32>, &TrainEvent) -> decomp_splat::Result<()> + 'a {
    move |st, ev| {
        match ev {
            TrainEvent::StepDone(r) if r.step % 500 == 0 || r.step == cfg.iterations => {
                log::info!(
                    "step {}/{}: loss {:.4}, {} static, {} distractor Gaussians in view {}",
                    r.step,
                    cfg.iterations,
                    r.total,
                    r.num_static,
                    r.num_distractors_view,
                    r.view
                );
            }
            TrainEvent::Checkpoint { step } => {
                if let Some(dir) = dir {
                    let path = dir.join(format!("checkpoint_{step:06}.bin"));
                    fs::write(&path, encode_checkpoint(cfg, st)).map_err(|e| Error::Io { path, source: e })?;
                }
            }
            _ => {}
        }
        Ok(())
    }
}

pub fn metrics_csv(rows: &[MetricsRow]) -> Result<Vec<u8>> {
    let mut w = csv_buffer();
    for r in rows {
        w.serialize(r)?;
    }
    w.into_inner().map_err(|e| anyhow::anyhow!("{e}"))
}

pub fn train(a: &TrainArgs) -> Result<()> {
    let cfg = load_config(a.config.as_deref(), &a.overrides)?;
    let data = load_dataset(&a.data)?;
    let staged = Staged::new(&a.out)?;
    let out = run_training::<f32>(&data, &cfg, &mut progress_observer(&cfg, Some(staged.path())))?;
    let dir = staged.path();
    fs::write(dir.join(CHECKPOINT_FILE), encode_checkpoint(&cfg, &out.state))?;
    fs::write(dir.join(METRICS_FILE), metrics_csv(&out.metrics)?)?;
    fs::write(dir.join(CONFIG_FILE), cfg.to_toml())?;
    fs::write(dir.join(VIEWS_FILE), serde_json::to_string_pretty(&view_records(&data))?)?;
    staged.commit()?;
    log::info!("wrote {}", a.out.display());
    Ok(())
}

fn views_path(a: &RenderArgs) -> PathBuf {
    a.checkpoint.parent().unwrap_or(Path::new(".")).join(VIEWS_FILE)
}

pub fn render(a: &RenderArgs) -> Result<()> {
    let ckpt = load_checkpoint::<f32>(&a.checkpoint)?;
    let model = &ckpt.state.model;
    let views = match &a.data {
        Some(d) => view_records(&load_dataset(d)?),
        None => read_views(&views_path(a))?,
    };
    let record = match (a.view, &a.frame) {
        (Some(v), _) => views
            .iter()
            .find(|r| r.view == Some(v))
            .ok_or_else(|| Error::InvalidConfig(format!("no training view {v}")))?,
        (None, Some(name)) => views
            .iter()
            .find(|r| &r.name == name)
            .ok_or_else(|| Error::InvalidConfig(format!("no frame named `{name}`")))?,
        (None, None) => bail!(Error::InvalidConfig("either --view or --frame is required".into())),
    };
    let cam = record.camera()?.cast::<f32>();
    let layer_view = record.view.filter(|&v| v < model.num_views());
    let embedding = match (&model.appearance, record.view) {
        (Some(app), Some(v)) if v < app.num_images() => Some(app.image_embedding(v).to_vec()),
        _ => mean_embedding(model),
    };
    let out = render_decomposed(model, &cam, layer_view, embedding.as_deref())?;
    match a.layer {
        Layer::Composite => write_image(&a.out, &out.color)?,
        Layer::Static => write_image(&a.out, &with_alpha(&out.static_layer.color, &out.static_layer.alpha))?,
        Layer::Distractor => {
            write_image(&a.out, &with_alpha(&out.distractor_layer.color, &out.distractor_layer.alpha))?
        }
        Layer::Mask => {
            if a.out.extension().and_then(|e| e.to_str()) != Some("png") {
                bail!(Error::InvalidConfig("masks are written as .png".into()));
            }
            write_mask_png(&a.out, cam.width, cam.height, &distractor_mask(&out, a.threshold as f32))?
        }
    }
    Ok(())
}

pub fn eval(a: &EvalArgs) -> Result<()> {
    let ckpt = load_checkpoint::<f32>(&a.checkpoint)?;
    let data = load_dataset(&a.data)?;
    let opts = TestTimeOptions::from_config(&ckpt.config);
    let report = evaluate(&ckpt.state.model, &data, &eval_frames(&data), a.protocol.into(), &opts)?;
    let mut w = csv_buffer();
    w.write_record(["frame", "psnr", "ssim"])?;
    for r in &report.rows {
        w.write_record([r.frame.clone(), r.psnr.to_string(), r.ssim.to_string()])?;
    }
    w.write_record(["mean".to_string(), report.mean_psnr().to_string(), report.mean_ssim().to_string()])?;
    finish_csv(&a.out, w)?;
    log::info!("mean PSNR {:.3} dB over {} frames", report.mean_psnr(), report.rows.len());
    Ok(())
}
