use crate::error::Result;
use crate::image::Image;
use crate::scalar::Real;

pub use crate::losses::ssim::ssim;

/// Reported when two images are identical (or closer than this).
pub const PSNR_CAP: f64 = 99.0;

/// `10·log10(1 / MSE)` in dB for images in [0, 1], capped at [`PSNR_CAP`].
pub fn psnr<T: Real>(a: &Image<T>, b: &Image<T>) -> Result<f64> {
    a.check_same_shape(b, "PSNR inputs")?;
    let n = a.data.len().max(1) as f64;
    let mse = a.data.iter().zip(&b.data).map(|(x, y)| (x.as_f64() - y.as_f64()).powi(2)).sum::<f64>() / n;
    if mse <= 0.0 {
        return Ok(PSNR_CAP);
    }
    Ok((10.0 * (1.0 / mse).log10()).min(PSNR_CAP))
}
