use std::path::Path;

use image::{DynamicImage, ImageBuffer, Luma, Rgb, Rgba};

use crate::error::{Error, Result};
use crate::image::Image;
use crate::scalar::Real;

fn unreadable(path: &Path, e: impl std::fmt::Display) -> Error {
    Error::UnreadableImage { path: path.to_path_buf(), detail: e.to_string() }
}

/// Reads an 8-bit PNG into `[0, 1]` values, keeping gray, RGB or RGBA
/// channel layouts; other layouts are converted to RGBA.
pub fn read_png<T: Real>(path: &Path) -> Result<Image<T>> {
    let img = image::open(path).map_err(|e| unreadable(path, e))?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    let (channels, bytes) = match img {
        DynamicImage::ImageLuma8(b) => (1, b.into_raw()),
        DynamicImage::ImageRgb8(b) => (3, b.into_raw()),
        DynamicImage::ImageRgba8(b) => (4, b.into_raw()),
        other => (4, other.to_rgba8().into_raw()),
    };
    Image::from_vec(w, h, channels, bytes.into_iter().map(|b| T::lit(b as f64 / 255.0)).collect())
}

/// Reads a PNG as RGB, dropping any alpha channel.
pub fn read_png_rgb<T: Real>(path: &Path) -> Result<Image<T>> {
    let img = image::open(path).map_err(|e| unreadable(path, e))?.to_rgb8();
    let (w, h) = (img.width() as usize, img.height() as usize);
    Image::from_vec(w, h, 3, img.into_raw().into_iter().map(|b| T::lit(b as f64 / 255.0)).collect())
}

/// Nearest 8-bit level of a value clamped to `[0, 1]`.
pub fn to_u8<T: Real>(v: T) -> u8 {
    (v.clamp_to(T::zero(), T::one()).as_f64() * 255.0).round() as u8
}

/// Writes a 1-, 3- or 4-channel image as an 8-bit PNG.
pub fn write_png<T: Real>(path: &Path, img: &Image<T>) -> Result<()> {
    let (w, h) = (img.width as u32, img.height as u32);
    let bytes: Vec<u8> = img.data.iter().map(|&v| to_u8(v)).collect();
    let io = |e: image::ImageError| Error::io(path, std::io::Error::other(e.to_string()));
    match img.channels {
        1 => ImageBuffer::<Luma<u8>, _>::from_raw(w, h, bytes).expect("size").save(path).map_err(io),
        3 => ImageBuffer::<Rgb<u8>, _>::from_raw(w, h, bytes).expect("size").save(path).map_err(io),
        4 => ImageBuffer::<Rgba<u8>, _>::from_raw(w, h, bytes).expect("size").save(path).map_err(io),
        c => Err(Error::shape(format!("cannot write a {c}-channel PNG"))),
    }
}

/// Writes a boolean map as an 8-bit grayscale PNG (255 where set).
pub fn write_mask_png(path: &Path, width: usize, height: usize, mask: &[bool]) -> Result<()> {
    let img = Image::from_vec(width, height, 1, mask.iter().map(|&b| if b { 1.0f32 } else { 0.0 }).collect())?;
    write_png(path, &img)
}

/// Reads a grayscale mask PNG; pixels at or above half intensity are set.
pub fn read_mask_png(path: &Path) -> Result<(usize, usize, Vec<bool>)> {
    let img = image::open(path).map_err(|e| unreadable(path, e))?.to_luma8();
    let (w, h) = (img.width() as usize, img.height() as usize);
    Ok((w, h, img.into_raw().into_iter().map(|b| b >= 128).collect()))
}
