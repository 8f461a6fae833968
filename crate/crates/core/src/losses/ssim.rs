//! Windowed SSIM with its analytic gradient.

use crate::error::{Error, Result};
use crate::image::Image;
use crate::scalar::Real;

pub const WINDOW: usize = 11;
pub const WINDOW_SIGMA: f64 = 1.5;
pub const C1: f64 = 0.01 * 0.01;
pub const C2: f64 = 0.03 * 0.03;

/// Normalized 1D Gaussian taps; the 2D window is their outer product.
pub fn gaussian_taps() -> [f64; WINDOW] {
    let r = (WINDOW / 2) as f64;
    let mut taps = [0.0; WINDOW];
    for (k, t) in taps.iter_mut().enumerate() {
        let d = k as f64 - r;
        *t = (-(d * d) / (2.0 * WINDOW_SIGMA * WINDOW_SIGMA)).exp();
    }
    let sum: f64 = taps.iter().sum();
    taps.map(|t| t / sum)
}

/// Separable "same" filtering of one `w x h` plane with zero padding. The
/// window is symmetric, so this operator is its own adjoint.
fn blur<T: Real>(src: &[T], w: usize, h: usize, taps: &[T; WINDOW], tmp: &mut [T], dst: &mut [T]) {
    let r = WINDOW / 2;
    for y in 0..h {
        let row = &src[y * w..(y + 1) * w];
        for x in 0..w {
            let lo = x.saturating_sub(r);
            let hi = (x + r + 1).min(w);
            let mut acc = T::zero();
            for xx in lo..hi {
                acc += taps[xx + r - x] * row[xx];
            }
            tmp[y * w + x] = acc;
        }
    }
    for y in 0..h {
        let lo = y.saturating_sub(r);
        let hi = (y + r + 1).min(h);
        for x in 0..w {
            let mut acc = T::zero();
            for yy in lo..hi {
                acc += taps[yy + r - y] * tmp[yy * w + x];
            }
            dst[y * w + x] = acc;
        }
    }
}

fn check_inputs<T: Real>(a: &Image<T>, b: &Image<T>) -> Result<()> {
    a.check_same_shape(b, "SSIM inputs")?;
    if a.width < WINDOW || a.height < WINDOW {
        return Err(Error::ImageTooSmall { width: a.width, height: a.height, window: WINDOW });
    }
    Ok(())
}

fn plane<T: Real>(img: &Image<T>, c: usize) -> Vec<T> {
    img.data.iter().skip(c).step_by(img.channels).copied().collect()
}

/// Mean SSIM over all pixels and channels, optionally with its gradient with
/// respect to `x`.
pub fn ssim_with_grad<T: Real>(x: &Image<T>, y: &Image<T>, want_grad: bool) -> Result<(T, Option<Image<T>>)> {
    check_inputs(x, y)?;
    let (w, h, nc) = (x.width, x.height, x.channels);
    let n = w * h;
    let taps = gaussian_taps().map(T::lit);
    let (c1, c2) = (T::lit(C1), T::lit(C2));
    let two = T::lit(2.0);
    let inv_count = T::one() / T::lit((n * nc) as f64);
    let mut total = T::zero();
    let mut grad = want_grad.then(|| Image::zeros(w, h, nc));
    let mut tmp = vec![T::zero(); n];
    let buf = |src: &[T], tmp: &mut Vec<T>| {
        let mut out = vec![T::zero(); n];
        blur(src, w, h, &taps, tmp, &mut out);
        out
    };
    for c in 0..nc {
        let xp = plane(x, c);
        let yp = plane(y, c);
        let xx: Vec<T> = xp.iter().map(|&v| v * v).collect();
        let yy: Vec<T> = yp.iter().map(|&v| v * v).collect();
        let xy: Vec<T> = xp.iter().zip(&yp).map(|(&a, &b)| a * b).collect();
        let mu_x = buf(&xp, &mut tmp);
        let mu_y = buf(&yp, &mut tmp);
        let e_xx = buf(&xx, &mut tmp);
        let e_yy = buf(&yy, &mut tmp);
        let e_xy = buf(&xy, &mut tmp);
        let mut d_mu = vec![T::zero(); n];
        let mut d_var = vec![T::zero(); n];
        let mut d_cov = vec![T::zero(); n];
        for p in 0..n {
            let (mx, my) = (mu_x[p], mu_y[p]);
            let vx = e_xx[p] - mx * mx;
            let vy = e_yy[p] - my * my;
            let cxy = e_xy[p] - mx * my;
            let n1 = two * mx * my + c1;
            let n2 = two * cxy + c2;
            let d1 = mx * mx + my * my + c1;
            let d2 = vx + vy + c2;
            let map = n1 * n2 / (d1 * d2);
            total += map;
            if want_grad {
                let a = (two * my * n2 / (d1 * d2) - map * two * mx / d1) * inv_count;
                let b = -map / d2 * inv_count;
                let cm = two * n1 / (d1 * d2) * inv_count;
                // σx² = E[x²] − μx² and σxy = E[xy] − μxμy also depend on μx
                d_mu[p] = a - two * mx * b - my * cm;
                d_var[p] = b;
                d_cov[p] = cm;
            }
        }
        if let Some(g) = grad.as_mut() {
            let g_mu = buf(&d_mu, &mut tmp);
            let g_var = buf(&d_var, &mut tmp);
            let g_cov = buf(&d_cov, &mut tmp);
            for p in 0..n {
                g.data[p * nc + c] = g_mu[p] + two * xp[p] * g_var[p] + yp[p] * g_cov[p];
            }
        }
    }
    Ok((total * inv_count, grad))
}

/// Mean SSIM of two images.
pub fn ssim<T: Real>(x: &Image<T>, y: &Image<T>) -> Result<T> {
    Ok(ssim_with_grad(x, y, false)?.0)
}

/// `(1 − SSIM) / 2` and its gradient with respect to `pred`.
pub fn dssim_loss<T: Real>(pred: &Image<T>, gt: &Image<T>) -> Result<(T, Image<T>)> {
    let (s, g) = ssim_with_grad(pred, gt, true)?;
    let half = T::lit(0.5);
    let g = g.expect("gradient requested").map(|v| -half * v);
    Ok(((T::one() - s) * half, g))
}
