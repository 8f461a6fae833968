//! Camera manifest loading and writing.
//!
//! `manifest.json` layout:
//!
//! ```json
//! {
//!   "frames": [
//!     {
//!       "name": "000",
//!       "transform": [[r00, r01, r02, tx], [r10, r11, r12, ty], [r20, r21, r22, tz], [0, 0, 0, 1]],
//!       "fx": 64.0, "fy": 64.0, "cx": 32.0, "cy": 32.0, "w": 64, "h": 64,
//!       "image": "images/000.png",
//!       "clean_image": "clean/000.png",
//!       "split": "train"
//!     }
//!   ],
//!   "points": "points.ply"
//! }
//! ```
//!
//! `transform` is the row-major camera-to-world matrix in the x-right,
//! y-down, z-forward camera convention. `name` defaults to the image file
//! stem, `clean_image` and `points` are optional, `split` defaults to
//! `train`. Frames are ordered by name.

use std::path::{Path, PathBuf};

use nalgebra::{Matrix3, Vector3};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::ply::{read_ply, write_ply, InitPoint};
use super::png::{read_png_rgb, write_png};
use crate::error::{Error, Result};
use crate::image::Image;
use crate::splat::camera::check_rotation;
use crate::splat::Camera;

pub const MANIFEST_FILE: &str = "manifest.json";

/// Tolerance on `RᵀR = I` and `det R = 1` for manifest poses.
pub const ROTATION_TOL: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    #[default]
    Train,
    Test,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub name: String,
    pub camera: Camera<f64>,
    pub split: Split,
    /// Relative to the dataset root.
    pub image_path: PathBuf,
    pub clean_path: Option<PathBuf>,
    /// The (possibly cluttered) training image, RGB in [0, 1].
    pub image: Image<f32>,
    pub clean: Option<Image<f32>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub frames: Vec<Frame>,
    pub init_points: Option<Vec<InitPoint>>,
    /// Axis-aligned box `[min, max]` around the initial points, or around
    /// the camera centers when there are none.
    pub bounds: [[f64; 3]; 2],
}

impl Dataset {
    /// Sorts frames by name and computes the bounding box.
    pub fn new(mut frames: Vec<Frame>, init_points: Option<Vec<InitPoint>>) -> Self {
        frames.sort_by(|a, b| a.name.cmp(&b.name));
        let pts: Vec<[f64; 3]> = match &init_points {
            Some(p) if !p.is_empty() => p.iter().map(|p| p.xyz).collect(),
            _ => frames.iter().map(|f| f.camera.translation.into()).collect(),
        };
        let mut bounds = [[f64::INFINITY; 3], [f64::NEG_INFINITY; 3]];
        for p in &pts {
            for k in 0..3 {
                bounds[0][k] = bounds[0][k].min(p[k]);
                bounds[1][k] = bounds[1][k].max(p[k]);
            }
        }
        if pts.is_empty() {
            bounds = [[-1.0; 3], [1.0; 3]];
        }
        Self { frames, init_points, bounds }
    }

    pub fn indices(&self, split: Split) -> Vec<usize> {
        (0..self.frames.len()).filter(|&i| self.frames[i].split == split).collect()
    }

    pub fn train_indices(&self) -> Vec<usize> {
        self.indices(Split::Train)
    }

    pub fn test_indices(&self) -> Vec<usize> {
        self.indices(Split::Test)
    }

    /// 1.1 times the largest distance of a training camera center from
    /// their centroid; the spatial scale used for density control and the
    /// position learning rate.
    pub fn camera_extent(&self) -> f64 {
        let centers: Vec<Vector3<f64>> =
            self.train_indices().iter().map(|&i| self.frames[i].camera.translation).collect();
        if centers.is_empty() {
            return 1.0;
        }
        let mean = centers.iter().sum::<Vector3<f64>>() / centers.len() as f64;
        let r = centers.iter().map(|c| (c - mean).norm()).fold(0.0, f64::max);
        if r > 0.0 {
            1.1 * r
        } else {
            1.0
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ManifestFrame {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    name: Option<String>,
    transform: [[f64; 4]; 4],
    fx: f64,
    fy: f64,
    cx: f64,
    cy: f64,
    w: usize,
    h: usize,
    image: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    clean_image: Option<PathBuf>,
    #[serde(default)]
    split: Split,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Manifest {
    frames: Vec<ManifestFrame>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    points: Option<PathBuf>,
}

fn frame_camera(f: &ManifestFrame, name: &str) -> Result<Camera<f64>> {
    let bad = |detail: String| Error::MalformedMatrix { frame: name.to_string(), detail };
    let t = &f.transform;
    if t.iter().flatten().any(|v| !v.is_finite()) {
        return Err(bad("non-finite entry".into()));
    }
    let last = t[3];
    if (last[0].abs() + last[1].abs() + last[2].abs() + (last[3] - 1.0).abs()) > 1e-6 {
        return Err(bad(format!("last row is {last:?}, expected [0, 0, 0, 1]")));
    }
    let rot = Matrix3::from_fn(|i, j| t[i][j]);
    check_rotation(&rot, ROTATION_TOL).map_err(bad)?;
    Camera::new(f.fx, f.fy, f.cx, f.cy, f.w, f.h, rot, Vector3::new(t[0][3], t[1][3], t[2][3]), ROTATION_TOL).map_err(
        |e| Error::MalformedManifest { path: PathBuf::from(MANIFEST_FILE), detail: format!("frame `{name}`: {e}") },
    )
}

fn load_image(root: &Path, rel: &Path, w: usize, h: usize) -> Result<Image<f32>> {
    let path = root.join(rel);
    let img = read_png_rgb(&path)?;
    if (img.width, img.height) != (w, h) {
        return Err(Error::UnreadableImage {
            path,
            detail: format!("image is {}x{}, manifest says {w}x{h}", img.width, img.height),
        });
    }
    Ok(img)
}

/// Loads `dir/manifest.json`, every referenced image and the optional point
/// file.
pub fn load_dataset(dir: &Path) -> Result<Dataset> {
    let manifest_path = dir.join(MANIFEST_FILE);
    if !manifest_path.is_file() {
        return Err(Error::MissingManifest(manifest_path));
    }
    let malformed = |detail: String| Error::MalformedManifest { path: manifest_path.clone(), detail };
    let text = std::fs::read_to_string(&manifest_path).map_err(|e| malformed(e.to_string()))?;
    let manifest: Manifest = serde_json::from_str(&text).map_err(|e| malformed(e.to_string()))?;
    if manifest.frames.is_empty() {
        return Err(malformed("no frames".into()));
    }
    let mut names = std::collections::BTreeSet::new();
    for f in &manifest.frames {
        let name = frame_name(f);
        if !names.insert(name.clone()) {
            return Err(malformed(format!("duplicate frame name `{name}`")));
        }
    }
    let (w0, h0) = (manifest.frames[0].w, manifest.frames[0].h);
    if let Some(f) = manifest.frames.iter().find(|f| (f.w, f.h) != (w0, h0)) {
        return Err(malformed(format!("frame `{}` is {}x{}, others are {w0}x{h0}", frame_name(f), f.w, f.h)));
    }
    let frames: Vec<Frame> = manifest
        .frames
        .par_iter()
        .map(|f| {
            let name = frame_name(f);
            let camera = frame_camera(f, &name)?;
            let image = load_image(dir, &f.image, f.w, f.h)?;
            let clean = f.clean_image.as_ref().map(|p| load_image(dir, p, f.w, f.h)).transpose()?;
            Ok(Frame {
                name,
                camera,
                split: f.split,
                image_path: f.image.clone(),
                clean_path: f.clean_image.clone(),
                image,
                clean,
            })
        })
        .collect::<Result<_>>()?;
    let init_points = manifest.points.as_ref().map(|p| read_ply(&dir.join(p))).transpose()?;
    Ok(Dataset::new(frames, init_points))
}

fn frame_name(f: &ManifestFrame) -> String {
    f.name.clone().unwrap_or_else(|| f.image.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default())
}

/// Writes the manifest, the images at their relative paths and the point
/// file (as `points.ply`) under `dir`.
pub fn write_dataset(dir: &Path, data: &Dataset) -> Result<()> {
    let mkdir = |p: &Path| std::fs::create_dir_all(p).map_err(|e| Error::io(p, e));
    mkdir(dir)?;
    let mut frames = Vec::with_capacity(data.frames.len());
    for f in &data.frames {
        for (rel, img) in std::iter::once((&f.image_path, &f.image))
            .chain(f.clean_path.as_ref().zip(f.clean.as_ref()))
        {
            let path = dir.join(rel);
            if let Some(parent) = path.parent() {
                mkdir(parent)?;
            }
            write_png(&path, img)?;
        }
        let c = &f.camera;
        let mut transform = [[0.0; 4]; 4];
        for (i, row) in transform.iter_mut().take(3).enumerate() {
            for j in 0..3 {
                row[j] = c.rotation[(i, j)];
            }
            row[3] = c.translation[i];
        }
        transform[3][3] = 1.0;
        frames.push(ManifestFrame {
            name: Some(f.name.clone()),
            transform,
            fx: c.fx,
            fy: c.fy,
            cx: c.cx,
            cy: c.cy,
            w: c.width,
            h: c.height,
            image: f.image_path.clone(),
            clean_image: f.clean_path.clone(),
            split: f.split,
        });
    }
    let points = match &data.init_points {
        Some(p) => {
            write_ply(&dir.join("points.ply"), p)?;
            Some(PathBuf::from("points.ply"))
        }
        None => None,
    };
    let manifest = Manifest { frames, points };
    let path = dir.join(MANIFEST_FILE);
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    std::fs::write(&path, text).map_err(|e| Error::io(&path, e))
}
