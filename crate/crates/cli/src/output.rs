//! Output files: staged directories, camera lists, images and CSV tables.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use decomp_splat::image::Image;
use decomp_splat::io::{write_png, Dataset, Split};
use decomp_splat::nalgebra::{Matrix3, Vector3};
use decomp_splat::splat::Camera;
use image::{ImageBuffer, Rgb, Rgba};
use serde::{Deserialize, Serialize};

pub const VIEWS_FILE: &str = "views.json";

/// A directory filled under a temporary name and moved into place only on
/// [`Staged::commit`]; dropped uncommitted, it is removed.
pub struct Staged {
    tmp: PathBuf,
    dst: PathBuf,
    done: bool,
}

impl Staged {
    pub fn new(dst: &Path) -> Result<Self> {
        let name = dst.file_name().with_context(|| format!("output path {} has no file name", dst.display()))?;
        let parent = dst.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
        fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
        let tmp = parent.join(format!(".{}.tmp-{}", name.to_string_lossy(), std::process::id()));
        if tmp.exists() {
            fs::remove_dir_all(&tmp)?;
        }
        fs::create_dir(&tmp).with_context(|| format!("creating {}", tmp.display()))?;
        Ok(Self { tmp, dst: dst.to_path_buf(), done: false })
    }

    pub fn path(&self) -> &Path {
        &self.tmp
    }

    pub fn commit(mut self) -> Result<()> {
        if self.dst.exists() {
            fs::remove_dir_all(&self.dst).with_context(|| format!("replacing {}", self.dst.display()))?;
        }
        fs::rename(&self.tmp, &self.dst).with_context(|| format!("moving output to {}", self.dst.display()))?;
        self.done = true;
        Ok(())
    }
}

impl Drop for Staged {
    fn drop(&mut self) {
        if !self.done {
            let _ = fs::remove_dir_all(&self.tmp);
        }
    }
}

/// Writes `bytes` to a sibling temporary file and renames it over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(p) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(p).with_context(|| format!("creating {}", p.display()))?;
    }
    let tmp = path.with_extension(format!("tmp-{}", std::process::id()));
    fs::write(&tmp, bytes).with_context(|| format!("writing {}", tmp.display()))?;
    fs::rename(&tmp, path).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

/// Camera of one frame as stored in `views.json`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ViewRecord {
    pub name: String,
    pub split: Split,
    /// Training-view index, for frames that have a distractor set.
    pub view: Option<usize>,
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: usize,
    pub height: usize,
    /// Camera-to-world, row-major.
    pub transform: [[f64; 4]; 4],
}

impl ViewRecord {
    pub fn camera(&self) -> Result<Camera<f64>> {
        let t = &self.transform;
        let rot = Matrix3::from_fn(|i, j| t[i][j]);
        Ok(Camera::new(
            self.fx,
            self.fy,
            self.cx,
            self.cy,
            self.width,
            self.height,
            rot,
            Vector3::new(t[0][3], t[1][3], t[2][3]),
            1e-3,
        )?)
    }
}

/// Every frame of `data`, with training frames numbered in training order.
pub fn view_records(data: &Dataset) -> Vec<ViewRecord> {
    let train = data.train_indices();
    data.frames
        .iter()
        .enumerate()
        .map(|(i, f)| {
            let c = &f.camera;
            let mut transform = [[0.0; 4]; 4];
            for r in 0..3 {
                for k in 0..3 {
                    transform[r][k] = c.rotation[(r, k)];
                }
                transform[r][3] = c.translation[r];
            }
            transform[3][3] = 1.0;
            ViewRecord {
                name: f.name.clone(),
                split: f.split,
                view: train.iter().position(|&j| j == i),
                fx: c.fx,
                fy: c.fy,
                cx: c.cx,
                cy: c.cy,
                width: c.width,
                height: c.height,
                transform,
            }
        })
        .collect()
}

pub fn read_views(path: &Path) -> Result<Vec<ViewRecord>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

/// Saves an RGB or RGBA image as 8-bit PNG or 32-bit float EXR, by
/// extension.
pub fn write_image(path: &Path, img: &Image<f32>) -> Result<()> {
    let ext = path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase);
    match ext.as_deref() {
        Some("png") => Ok(write_png(path, img)?),
        Some("exr") => {
            let (w, h) = (img.width as u32, img.height as u32);
            let data = img.data.clone();
            let res = match img.channels {
                3 => ImageBuffer::<Rgb<f32>, _>::from_raw(w, h, data).context("image size")?.save(path),
                4 => ImageBuffer::<Rgba<f32>, _>::from_raw(w, h, data).context("image size")?.save(path),
                c => bail!("cannot write a {c}-channel EXR"),
            };
            res.with_context(|| format!("writing {}", path.display()))
        }
        _ => bail!(decomp_splat::Error::InvalidConfig(format!(
            "output {} must end in .png or .exr",
            path.display()
        ))),
    }
}

/// Appends a color image and an accumulation map into one RGBA image.
pub fn with_alpha(color: &Image<f32>, alpha: &Image<f32>) -> Image<f32> {
    let mut out = Image::zeros(color.width, color.height, 4);
    for p in 0..color.num_pixels() {
        out.data[4 * p..4 * p + 3].copy_from_slice(&color.data[3 * p..3 * p + 3]);
        out.data[4 * p + 3] = alpha.data[p];
    }
    out
}

pub fn csv_buffer() -> csv::Writer<Vec<u8>> {
    csv::Writer::from_writer(Vec::new())
}

pub fn finish_csv(path: &Path, w: csv::Writer<Vec<u8>>) -> Result<()> {
    let bytes = w.into_inner().map_err(|e| anyhow::anyhow!("{e}"))?;
    write_atomic(path, &bytes)
}
