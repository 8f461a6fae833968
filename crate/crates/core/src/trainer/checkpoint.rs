//! Training checkpoints.
//!
//! Layout (see [`crate::compositor::checkpoint`] for the primitive
//! encodings):
//!
//! 1. magic `GSPLATCK` (8 bytes), format version `u32`
//! 2. the run configuration as TOML text (`u64` length, UTF-8 bytes)
//! 3. completed steps `u64`, static extent `f32` array of 1, distractor
//!    extents array
//! 4. the model
//! 5. static optimizer, `u64` view count and one optimizer per view, `u8`
//!    appearance-optimizer flag and, if set, the toning state, `u64` image
//!    count with one state per image, the Gaussian-embedding state, a `u8`
//!    background flag and the three background states
//! 6. static density statistics, `u64` view count and per-view statistics
//! 7. per-view visit counters (`u64` count, then `u32` each)
//!
//! An optimizer of a Gaussian set is five Adam states (means, log-scales,
//! quaternions, opacities, colors). An Adam state is its step `u64`, then
//! the first and second moment arrays. Density statistics are the gradient
//! sums array, visibility counts (`u64` count, then `u32` each) and the
//! maximum radii array.

use std::path::Path;

use super::adam::AdamState;
use super::config::TrainConfig;
use super::optim::{AppearanceOptimizer, BackgroundOptimizer, SetOptimizer};
use super::run::TrainState;
use crate::compositor::checkpoint::{Reader, Writer};
use crate::compositor::{AdcStats, SceneModel};
use crate::error::{Error, Result};
use crate::scalar::Real;

pub const MAGIC: &[u8; 8] = b"GSPLATCK";
pub const VERSION: u32 = 1;

/// A decoded checkpoint.
#[derive(Debug, Clone)]
pub struct Checkpoint<T: Real> {
    pub config: TrainConfig,
    pub state: TrainState<T>,
}

fn put_adam<T: Real>(w: &mut Writer, s: &AdamState<T>) {
    w.u64(s.step);
    w.slice(&s.m);
    w.slice(&s.v);
}

fn get_adam<T: Real>(r: &mut Reader) -> Result<AdamState<T>> {
    let step = r.u64()?;
    let m = r.floats()?;
    let v = r.floats()?;
    if m.len() != v.len() {
        return Err(Error::Checkpoint("optimizer moments differ in length".into()));
    }
    Ok(AdamState { m, v, step })
}

fn put_set_opt<T: Real>(w: &mut Writer, o: &SetOptimizer<T>) {
    for s in [&o.means, &o.log_scales, &o.quats, &o.opacity, &o.colors] {
        put_adam(w, s);
    }
}

fn get_set_opt<T: Real>(r: &mut Reader) -> Result<SetOptimizer<T>> {
    Ok(SetOptimizer {
        means: get_adam(r)?,
        log_scales: get_adam(r)?,
        quats: get_adam(r)?,
        opacity: get_adam(r)?,
        colors: get_adam(r)?,
    })
}

fn put_u32s(w: &mut Writer, v: &[u32]) {
    w.u64(v.len() as u64);
    for &x in v {
        w.u32(x);
    }
}

fn get_u32s(r: &mut Reader) -> Result<Vec<u32>> {
    let n = r.u64()? as usize;
    if n > 1 << 32 {
        return Err(Error::Checkpoint("counter array too long".into()));
    }
    (0..n).map(|_| r.u32()).collect()
}

fn put_stats<T: Real>(w: &mut Writer, s: &AdcStats<T>) {
    w.slice(&s.grad_sum);
    put_u32s(w, &s.visible);
    w.slice(&s.max_radius);
}

fn get_stats<T: Real>(r: &mut Reader) -> Result<AdcStats<T>> {
    Ok(AdcStats { grad_sum: r.floats()?, visible: get_u32s(r)?, max_radius: r.floats()? })
}

/// Serializes a training state and its configuration.
pub fn encode_checkpoint<T: Real>(config: &TrainConfig, st: &TrainState<T>) -> Vec<u8> {
    let mut w = Writer::new();
    w.bytes(MAGIC);
    w.u32(VERSION);
    w.str(&config.to_toml());
    w.u64(st.step as u64);
    w.slice(&[st.static_extent]);
    w.slice(&st.distractor_extents);
    w.model(&st.model);
    put_set_opt(&mut w, &st.static_opt);
    w.u64(st.distractor_opts.len() as u64);
    for o in &st.distractor_opts {
        put_set_opt(&mut w, o);
    }
    match &st.appearance_opt {
        None => w.u8(0),
        Some(a) => {
            w.u8(1);
            put_adam(&mut w, &a.toning);
            w.u64(a.image_embeddings.len() as u64);
            for s in &a.image_embeddings {
                put_adam(&mut w, s);
            }
            put_adam(&mut w, &a.gaussian_embeddings);
            match &a.background {
                None => w.u8(0),
                Some(b) => {
                    w.u8(1);
                    put_adam(&mut w, &b.encoder);
                    put_adam(&mut w, &b.dc_head);
                    put_adam(&mut w, &b.rest_head);
                }
            }
        }
    }
    put_stats(&mut w, &st.static_stats);
    w.u64(st.distractor_stats.len() as u64);
    for s in &st.distractor_stats {
        put_stats(&mut w, s);
    }
    put_u32s(&mut w, &st.visits);
    w.finish()
}

fn count(r: &mut Reader) -> Result<usize> {
    let n = r.u64()?;
    usize::try_from(n).ok().filter(|&n| n < 1 << 32).ok_or_else(|| Error::Checkpoint("count out of range".into()))
}

pub fn decode_checkpoint<T: Real>(bytes: &[u8]) -> Result<Checkpoint<T>> {
    let mut r = Reader::new(bytes);
    if r.bytes(8).map_err(|_| Error::Checkpoint("not a checkpoint".into()))? != MAGIC {
        return Err(Error::Checkpoint("not a checkpoint (bad magic)".into()));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(Error::Checkpoint(format!("unsupported version {version}")));
    }
    let config = TrainConfig::from_toml(&r.str()?)?;
    let step = r.u64()? as usize;
    let static_extent = *r.floats::<T>()?.first().ok_or_else(|| Error::Checkpoint("missing extent".into()))?;
    let distractor_extents = r.floats()?;
    let model: SceneModel<T> = r.model()?;
    let static_opt = get_set_opt(&mut r)?;
    let n = count(&mut r)?;
    let distractor_opts = (0..n).map(|_| get_set_opt(&mut r)).collect::<Result<Vec<_>>>()?;
    let appearance_opt = match r.u8()? {
        0 => None,
        _ => {
            let toning = get_adam(&mut r)?;
            let n = count(&mut r)?;
            let image_embeddings = (0..n).map(|_| get_adam(&mut r)).collect::<Result<Vec<_>>>()?;
            let gaussian_embeddings = get_adam(&mut r)?;
            let background = match r.u8()? {
                0 => None,
                _ => Some(BackgroundOptimizer { encoder: get_adam(&mut r)?, dc_head: get_adam(&mut r)?, rest_head: get_adam(&mut r)? }),
            };
            Some(AppearanceOptimizer { toning, image_embeddings, gaussian_embeddings, background })
        }
    };
    let static_stats = get_stats(&mut r)?;
    let n = count(&mut r)?;
    let distractor_stats = (0..n).map(|_| get_stats(&mut r)).collect::<Result<Vec<_>>>()?;
    let visits = get_u32s(&mut r)?;
    r.finish()?;
    if distractor_opts.len() != model.distractor_sets.len() || distractor_stats.len() != model.distractor_sets.len() {
        return Err(Error::Checkpoint("per-view records disagree in count".into()));
    }
    model.static_set.check_invariants().map_err(|e| Error::Checkpoint(format!("static set: {e}")))?;
    let state = TrainState {
        model,
        static_opt,
        distractor_opts,
        appearance_opt,
        static_stats,
        distractor_stats,
        visits,
        step,
        static_extent,
        distractor_extents,
    };
    Ok(Checkpoint { config, state })
}

/// Writes the checkpoint through a temporary file so that a failed write
/// leaves no partial file at `path`.
pub fn save_checkpoint<T: Real>(path: &Path, config: &TrainConfig, st: &TrainState<T>) -> Result<()> {
    let bytes = encode_checkpoint(config, st);
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint<T: Real>(path: &Path) -> Result<Checkpoint<T>> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_checkpoint(&bytes)
}
