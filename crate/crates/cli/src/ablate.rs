//! Parameter sweeps. Each trained model is cached under `<out>.cache/`,
//! keyed by a hash of the dataset files, the configuration and the variant,
//! so rerunning a sweep only trains what changed.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use decomp_splat::compositor::SceneModel;
use decomp_splat::io::{load_dataset, mix_clutter, Dataset};
use decomp_splat::trainer::{
    baseline_config, dedup_keep_order, encode_checkpoint, load_checkpoint, static_psnr, train, with_distractor_count,
    NoObserver, TrainConfig,
};
use sha2::{Digest, Sha256};

use crate::args::{AblateInitArgs, AblateRatioArgs, SweepArgs};
use crate::commands::load_config;
use crate::output::{csv_buffer, finish_csv, write_atomic};

/// Hash of every file under `dir`, visited in path order.
pub fn hash_dir(dir: &Path) -> Result<Vec<u8>> {
    fn walk(dir: &Path, files: &mut Vec<PathBuf>) -> Result<()> {
        for e in fs::read_dir(dir).with_context(|| format!("reading {}", dir.display()))? {
            let p = e?.path();
            if p.is_dir() {
                walk(&p, files)?;
            } else {
                files.push(p);
            }
        }
        Ok(())
    }
    let mut files = Vec::new();
    walk(dir, &mut files)?;
    files.sort();
    let mut h = Sha256::new();
    for f in files {
        let rel = f.strip_prefix(dir).unwrap_or(&f);
        h.update(rel.to_string_lossy().as_bytes());
        h.update([0]);
        let bytes = fs::read(&f).with_context(|| format!("reading {}", f.display()))?;
        h.update((bytes.len() as u64).to_le_bytes());
        h.update(&bytes);
    }
    Ok(h.finalize().to_vec())
}

struct Sweep {
    data_hash: Vec<u8>,
    cache: PathBuf,
    use_cache: bool,
}

impl Sweep {
    fn new(a: &SweepArgs) -> Result<Self> {
        let mut cache = a.out.clone().into_os_string();
        cache.push(".cache");
        Ok(Self { data_hash: hash_dir(&a.data)?, cache: cache.into(), use_cache: !a.no_cache })
    }

    /// `data_tag` names how the training set was derived from the files.
    fn key(&self, cfg: &TrainConfig, data_tag: &str) -> String {
        let mut h = Sha256::new();
        h.update(&self.data_hash);
        h.update(data_tag.as_bytes());
        h.update([0]);
        h.update(cfg.to_toml().as_bytes());
        h.update(env!("CARGO_PKG_VERSION").as_bytes());
        hex::encode(h.finalize())
    }

    /// Trains `cfg` on `data` or loads the cached result of the same run.
    fn model(&self, data: &Dataset, data_tag: &str, cfg: &TrainConfig, variant: &str) -> Result<SceneModel<f32>> {
        let path = self.cache.join(format!("{}.bin", self.key(cfg, data_tag)));
        if self.use_cache && path.is_file() {
            match load_checkpoint::<f32>(&path) {
                Ok(c) if &c.config == cfg => {
                    log::info!("{variant}: cached");
                    return Ok(c.state.model);
                }
                _ => log::warn!("{variant}: ignoring unusable cache entry {}", path.display()),
            }
        }
        log::info!("{variant}: training {} steps", cfg.iterations);
        let out = train::<f32>(data, cfg, &mut NoObserver)?;
        write_atomic(&path, &encode_checkpoint(cfg, &out.state))?;
        Ok(out.state.model)
    }
}

pub fn ratio(a: &AblateRatioArgs) -> Result<()> {
    let s = &a.sweep;
    let cfg = load_config(s.config.as_deref(), &s.overrides)?;
    let data = load_dataset(&s.data)?;
    let sweep = Sweep::new(s)?;
    let base = baseline_config(&cfg);
    let mut w = csv_buffer();
    w.write_record(["ratio", "psnr_desplat", "psnr_baseline"])?;
    for &r in &a.ratios {
        let mixed = mix_clutter(&data, r, a.mix_seed)?;
        let tag = format!("ratio={r} mix_seed={}", a.mix_seed);
        let layered = sweep.model(&mixed, &tag, &cfg, &format!("layered, {tag}"))?;
        let baseline = sweep.model(&mixed, &tag, &base, &format!("baseline, {tag}"))?;
        let (p1, p2) = (static_psnr(&layered, &mixed, &cfg)?, static_psnr(&baseline, &mixed, &base)?);
        log::info!("ratio {r}: {p1:.3} dB layered, {p2:.3} dB baseline");
        w.write_record([r.to_string(), p1.to_string(), p2.to_string()])?;
    }
    finish_csv(&s.out, w)
}

pub fn init(a: &AblateInitArgs) -> Result<()> {
    let s = &a.sweep;
    let cfg = load_config(s.config.as_deref(), &s.overrides)?;
    let data = load_dataset(&s.data)?;
    let sweep = Sweep::new(s)?;
    let mut w = csv_buffer();
    w.write_record(["K", "psnr"])?;
    for k in dedup_keep_order(&a.counts) {
        let c = with_distractor_count(&cfg, k);
        let model = sweep.model(&data, "", &c, &format!("K = {k}"))?;
        let p = static_psnr(&model, &data, &c)?;
        log::info!("K = {k}: {p:.3} dB");
        w.write_record([k.to_string(), p.to_string()])?;
    }
    finish_csv(&s.out, w)
}
