//! Synthetic clean/cluttered scenes with a known static model.

use std::path::{Path, PathBuf};

use nalgebra::Vector3;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::dataset::{Dataset, Frame, Split};
use super::ply::InitPoint;
use super::png::write_mask_png;
use crate::compositor::{render_static_image, SceneModel};
use crate::error::{Error, Result};
use crate::image::Image;
use crate::splat::sh::rgb_to_sh_dc;
use crate::splat::{Camera, ColorMode, GaussianSet};

/// Parameters of a generated scene.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticSpec {
    /// Static Gaussians in the generating model.
    pub num_gaussians: usize,
    /// Share of them placed on an enclosing backdrop shell.
    pub backdrop_fraction: f64,
    pub num_train_views: usize,
    pub num_test_views: usize,
    /// Square image side in pixels.
    pub image_size: usize,
    /// Focal length as a multiple of the image size.
    pub focal_factor: f64,
    pub orbit_radius: f64,
    /// Camera elevations in degrees; training views alternate between them.
    pub elevations_deg: Vec<f64>,
    /// Fraction of training views carrying sprites.
    pub clutter_ratio: f64,
    pub sprites_min: usize,
    pub sprites_max: usize,
    /// Sprite semi-axis range as a fraction of the image size.
    pub sprite_radius: [f64; 2],
    /// Standard deviation of the noise on the emitted initial points.
    pub init_noise: f64,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            num_gaussians: 400,
            backdrop_fraction: 0.4,
            num_train_views: 40,
            num_test_views: 8,
            image_size: 64,
            focal_factor: 1.0,
            orbit_radius: 3.5,
            elevations_deg: vec![15.0, 35.0],
            clutter_ratio: 1.0,
            sprites_min: 1,
            sprites_max: 3,
            sprite_radius: [0.08, 0.2],
            init_noise: 0.02,
            seed: 0,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(format!("synthetic spec: {m}")));
        if !(0.0..=1.0).contains(&self.clutter_ratio) {
            return bad("clutter_ratio must lie in [0, 1]");
        }
        if !(0.0..1.0).contains(&self.backdrop_fraction) {
            return bad("backdrop_fraction must lie in [0, 1)");
        }
        if self.num_gaussians == 0 || self.num_train_views == 0 || self.image_size == 0 {
            return bad("counts and image size must be positive");
        }
        if self.sprites_min == 0 || self.sprites_max < self.sprites_min {
            return bad("need 1 <= sprites_min <= sprites_max");
        }
        let [r0, r1] = self.sprite_radius;
        if !(r0 > 0.0 && r1 >= r0) {
            return bad("sprite_radius must be a positive range");
        }
        if !(self.focal_factor > 0.0 && self.orbit_radius > 0.0 && self.init_noise >= 0.0) {
            return bad("focal_factor and orbit_radius must be positive, init_noise non-negative");
        }
        if self.elevations_deg.is_empty() || self.elevations_deg.iter().any(|e| e.abs() >= 89.0) {
            return bad("elevations must be non-empty and within (-89, 89) degrees");
        }
        Ok(())
    }
}

/// A generated dataset, its generating model and the sprite footprints of
/// each frame (`None` for frames without sprites).
#[derive(Debug, Clone)]
pub struct SyntheticScene {
    pub dataset: Dataset,
    pub model: SceneModel<f32>,
    pub sprite_masks: Vec<Option<Vec<bool>>>,
}

fn smooth_color(p: &Vector3<f64>, phase: &[f64; 3], freq: f64) -> [f64; 3] {
    [0, 1, 2].map(|c| (0.5 + 0.4 * (freq * p[c] + freq * 0.7 * p[(c + 1) % 3] + phase[c]).sin()).clamp(0.02, 0.98))
}

fn random_unit(rng: &mut impl Rng) -> Vector3<f64> {
    loop {
        let v = Vector3::from_fn(|_, _| rng.sample::<f64, _>(StandardNormal));
        let n = v.norm();
        if n > 1e-9 {
            return v / n;
        }
    }
}

fn random_quat(rng: &mut impl Rng) -> [f64; 4] {
    let v = loop {
        let v: [f64; 4] = [0; 4].map(|_| rng.sample(StandardNormal));
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 1e-9 {
            break v.map(|x| x / n);
        }
    };
    v
}

fn build_model(spec: &SyntheticSpec, rng: &mut impl Rng) -> GaussianSet<f64> {
    let mut set = GaussianSet::new(ColorMode::Sh { degree: 0 });
    let n_backdrop = (spec.num_gaussians as f64 * spec.backdrop_fraction).round() as usize;
    let n_object = spec.num_gaussians - n_backdrop;
    let phase: [f64; 3] = [0; 3].map(|_| rng.random_range(0.0..std::f64::consts::TAU));
    for _ in 0..n_object {
        let p = random_unit(rng) * rng.random_range(0.0f64..1.0).cbrt();
        let ls = [0; 3].map(|_| rng.random_range(0.08f64..0.22).ln());
        let o: f64 = rng.random_range(0.6..0.98);
        let rgb = smooth_color(&p, &phase, 2.5);
        set.push(p.into(), ls, random_quat(rng), (o / (1.0 - o)).ln(), &rgb.map(rgb_to_sh_dc));
    }
    let shell = spec.orbit_radius * 2.0;
    for _ in 0..n_backdrop {
        let p = random_unit(rng) * shell;
        let ls = [0; 3].map(|_| (shell * rng.random_range(0.15f64..0.24)).ln());
        let rgb = smooth_color(&(p / shell), &phase, 3.0).map(|c| 0.3 + 0.6 * c);
        set.push(p.into(), ls, random_quat(rng), 3.0, &rgb.map(rgb_to_sh_dc));
    }
    set
}

fn orbit_camera(spec: &SyntheticSpec, azimuth: f64, elevation_deg: f64) -> Camera<f64> {
    let el = elevation_deg.to_radians();
    let r = spec.orbit_radius;
    let eye = Vector3::new(r * el.cos() * azimuth.cos(), r * el.cos() * azimuth.sin(), r * el.sin());
    let s = spec.image_size;
    Camera::look_at(eye, Vector3::zeros(), Vector3::z(), spec.focal_factor * s as f64, s, s)
}

/// Paints 1 to `sprites_max` opaque ellipses of uniform random color onto
/// `img`; returns their union footprint.
fn paint_sprites(spec: &SyntheticSpec, img: &mut Image<f32>, rng: &mut impl Rng) -> Vec<bool> {
    let (w, h) = (img.width, img.height);
    let size = w.min(h) as f64;
    let mut mask = vec![false; w * h];
    let count = rng.random_range(spec.sprites_min..=spec.sprites_max);
    for _ in 0..count {
        let cx = rng.random_range(0.0..w as f64);
        let cy = rng.random_range(0.0..h as f64);
        let a = size * rng.random_range(spec.sprite_radius[0]..=spec.sprite_radius[1]);
        let b = size * rng.random_range(spec.sprite_radius[0]..=spec.sprite_radius[1]);
        let th: f64 = rng.random_range(0.0..std::f64::consts::PI);
        let color: [f32; 3] = [0; 3].map(|_| (rng.random_range(0u8..=255) as f32) / 255.0);
        let (s, c) = th.sin_cos();
        for y in 0..h {
            for x in 0..w {
                let (dx, dy) = (x as f64 + 0.5 - cx, y as f64 + 0.5 - cy);
                let (u, v) = (c * dx + s * dy, -s * dx + c * dy);
                if (u / a).powi(2) + (v / b).powi(2) <= 1.0 {
                    let p = y * w + x;
                    mask[p] = true;
                    img.data[3 * p..3 * p + 3].copy_from_slice(&color);
                }
            }
        }
    }
    mask
}

/// Builds the generating model, renders clean 8-bit images from orbit
/// cameras and paints sprites on a `clutter_ratio` share of the training
/// views. Test views are never cluttered.
pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<SyntheticScene> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let gt = build_model(spec, &mut rng);
    let model = SceneModel::new(gt.cast::<f32>(), Vec::new());

    let n = spec.num_train_views;
    let mut cluttered: Vec<bool> = (0..n).map(|i| (i as f64) < (spec.clutter_ratio * n as f64).round()).collect();
    cluttered.shuffle(&mut rng);

    let mut frames = Vec::new();
    let mut masks = Vec::new();
    let step = std::f64::consts::TAU / n as f64;
    let views = (0..n)
        .map(|i| (Split::Train, i, i as f64 * step, spec.elevations_deg[i % spec.elevations_deg.len()]))
        .chain((0..spec.num_test_views).map(|i| {
            let az = (i as f64 + 0.5) * std::f64::consts::TAU / spec.num_test_views as f64;
            let mid = spec.elevations_deg.iter().sum::<f64>() / spec.elevations_deg.len() as f64;
            (Split::Test, i, az, mid)
        }));
    for (split, i, az, el) in views {
        let cam = orbit_camera(spec, az, el);
        let clean = render_static_image(&model, &cam.cast::<f32>(), None).quantize_u8();
        let mut image = clean.clone();
        let mask = (split == Split::Train && cluttered[i]).then(|| paint_sprites(spec, &mut image, &mut rng));
        let name = match split {
            Split::Train => format!("train_{i:03}"),
            Split::Test => format!("test_{i:03}"),
        };
        frames.push(Frame {
            image_path: PathBuf::from(format!("images/{name}.png")),
            clean_path: Some(PathBuf::from(format!("clean/{name}.png"))),
            name,
            camera: cam,
            split,
            image,
            clean: Some(clean),
        });
        masks.push(mask);
    }

    let points = (0..gt.len())
        .map(|i| {
            let g = gt.gaussian(i);
            let noise: [f64; 3] = [0; 3].map(|_| rng.sample::<f64, _>(StandardNormal) * spec.init_noise);
            let rgb = [0, 1, 2].map(|c| (g.color[c] * crate::splat::sh::SH_C0 + 0.5).clamp(0.0, 1.0));
            InitPoint { xyz: [0, 1, 2].map(|k| g.mean[k] + noise[k]), rgb }
        })
        .collect();

    // Dataset::new sorts by name; carry the masks along.
    let mut order: Vec<usize> = (0..frames.len()).collect();
    order.sort_by(|&a, &b| frames[a].name.cmp(&frames[b].name));
    let sprite_masks = order.iter().map(|&i| masks[i].clone()).collect();
    Ok(SyntheticScene { dataset: Dataset::new(frames, Some(points)), model, sprite_masks })
}

/// Writes the sprite footprints as `masks/<frame>.png` for cluttered frames.
pub fn write_sprite_masks(dir: &Path, scene: &SyntheticScene) -> Result<()> {
    let mdir = dir.join("masks");
    std::fs::create_dir_all(&mdir).map_err(|e| Error::io(&mdir, e))?;
    for (f, m) in scene.dataset.frames.iter().zip(&scene.sprite_masks) {
        if let Some(m) = m {
            write_mask_png(&mdir.join(format!("{}.png", f.name)), f.camera.width, f.camera.height, m)?;
        }
    }
    Ok(())
}

/// Replaces the training images of all but a `ratio` share of training
/// frames (chosen by `seed`) with their clean versions.
pub fn mix_clutter(data: &Dataset, ratio: f64, seed: u64) -> Result<Dataset> {
    if !(0.0..=1.0).contains(&ratio) {
        return Err(Error::InvalidConfig(format!("clutter ratio {ratio} outside [0, 1]")));
    }
    let train = data.train_indices();
    let mut picks = train.clone();
    picks.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let keep = (ratio * train.len() as f64).round() as usize;
    let mut out = data.clone();
    for &i in &picks[keep..] {
        let f = &mut out.frames[i];
        let clean = f.clean.clone().ok_or_else(|| Error::MissingCleanImage(f.name.clone()))?;
        f.image = clean;
        f.image_path = f.clean_path.clone().unwrap_or_else(|| f.image_path.clone());
    }
    Ok(out)
}
