use rayon::prelude::*;

use super::forward::{RenderOutput, TRANSMITTANCE_EPS};
use super::tiles::{pack_list, TileBinning};
use crate::error::{Error, Result};
use crate::image::Image;
use crate::scalar::Real;
use crate::splat::projection::{conic_power, kernel, project_geometry_backward, view_direction, view_direction_backward};
use crate::splat::sh::eval_sh_color_backward;
use crate::splat::{Camera, ColorMode, GaussianSet, SetGradients, Splat2D, ALPHA_MAX};

/// Gradients with respect to the projected splat quantities.
#[derive(Debug, Clone, PartialEq)]
pub struct SplatGrads<T: Real> {
    pub d_mean2d: Vec<[T; 2]>,
    /// With respect to the packed conic `(a, b, c)`.
    pub d_conic: Vec<[T; 3]>,
    /// With respect to the activated opacity.
    pub d_opacity: Vec<T>,
    pub d_color: Vec<[T; 3]>,
}

/// Parameter gradients of one rendered set.
#[derive(Debug, Clone)]
pub struct BackwardResult<T: Real> {
    pub grads: SetGradients<T>,
    /// Gradient with respect to the color each splat was rasterized with.
    pub d_colors: Vec<[T; 3]>,
    /// Screen-space positional gradient norm per Gaussian, in half-image
    /// units, for density control.
    pub screen_grad_norm: Vec<T>,
}

const SLOTS: usize = 9;

struct Hit<T> {
    k: usize,
    alpha: T,
    trans: T,
    g: T,
    dg: T,
    dx: T,
    dy: T,
    clamped: bool,
}

/// Pulls pixel gradients back to splat-space quantities.
pub fn rasterize_backward<T: Real>(
    out: &RenderOutput<T>,
    dl_dcolor: &Image<T>,
    dl_dalpha: &Image<T>,
) -> Result<SplatGrads<T>> {
    let (w, h) = (out.width(), out.height());
    if (dl_dcolor.width, dl_dcolor.height, dl_dcolor.channels) != (w, h, 3) {
        return Err(Error::shape(format!(
            "color gradient is {}x{}x{}, render is {w}x{h}x3",
            dl_dcolor.width, dl_dcolor.height, dl_dcolor.channels
        )));
    }
    if (dl_dalpha.width, dl_dalpha.height, dl_dalpha.channels) != (w, h, 1) {
        return Err(Error::shape(format!(
            "alpha gradient is {}x{}x{}, render is {w}x{h}x1",
            dl_dalpha.width, dl_dalpha.height, dl_dalpha.channels
        )));
    }
    let cache = &out.cache;
    let binning = &cache.binning;
    let buffers: Vec<Vec<[T; SLOTS]>> = (0..binning.num_tiles())
        .into_par_iter()
        .map(|t| backward_tile(&cache.splats, binning, &cache.n_walked, t, dl_dcolor, dl_dalpha))
        .collect();

    let n = cache.splats.len();
    let mut g = SplatGrads {
        d_mean2d: vec![[T::zero(); 2]; n],
        d_conic: vec![[T::zero(); 3]; n],
        d_opacity: vec![T::zero(); n],
        d_color: vec![[T::zero(); 3]; n],
    };
    for (t, buf) in buffers.iter().enumerate() {
        for (k, &gi) in binning.lists[t].iter().enumerate() {
            let b = &buf[k];
            let i = gi as usize;
            g.d_mean2d[i][0] += b[0];
            g.d_mean2d[i][1] += b[1];
            g.d_conic[i][0] += b[2];
            g.d_conic[i][1] += b[3];
            g.d_conic[i][2] += b[4];
            g.d_opacity[i] += b[5];
            g.d_color[i][0] += b[6];
            g.d_color[i][1] += b[7];
            g.d_color[i][2] += b[8];
        }
    }
    Ok(g)
}

fn backward_tile<T: Real>(
    splats: &[Option<Splat2D<T>>],
    binning: &TileBinning,
    n_walked: &[u32],
    t: usize,
    dl_dcolor: &Image<T>,
    dl_dalpha: &Image<T>,
) -> Vec<[T; SLOTS]> {
    let (x0, x1, y0, y1) = binning.tile_bounds(t);
    let mut buf = vec![[T::zero(); SLOTS]; binning.lists[t].len()];
    if buf.is_empty() {
        return buf;
    }
    let list = pack_list(splats, &binning.lists[t]);
    let width = binning.width;
    let half = T::lit(0.5);
    let alpha_max = T::lit(ALPHA_MAX);
    let eps = T::lit(TRANSMITTANCE_EPS);
    let mut hits: Vec<Hit<T>> = Vec::with_capacity(list.len());
    for y in y0..y1 {
        let py = T::lit(y as f64) + half;
        for x in x0..x1 {
            let p = y * width + x;
            let gc = [dl_dcolor.data[3 * p], dl_dcolor.data[3 * p + 1], dl_dcolor.data[3 * p + 2]];
            let ga = dl_dalpha.data[p];
            if gc.iter().all(|&v| v == T::zero()) && ga == T::zero() {
                continue;
            }
            let px = T::lit(x as f64) + half;

            // replay the forward walk
            hits.clear();
            let mut trans = T::one();
            for (k, s) in list.iter().enumerate().take(n_walked[p] as usize) {
                let (dx, dy) = (px - s.mean[0], py - s.mean[1]);
                let (g, dg) = kernel(conic_power(&s.conic, dx, dy));
                if g <= T::zero() {
                    continue;
                }
                let raw = s.opacity * g;
                let clamped = raw > alpha_max;
                let alpha = if clamped { alpha_max } else { raw };
                if alpha <= T::zero() {
                    continue;
                }
                hits.push(Hit { k, alpha, trans, g, dg, dx, dy, clamped });
                trans *= T::one() - alpha;
                if trans < eps {
                    break;
                }
            }

            // reverse sweep: `rest` is the color blended behind the current
            // splat, `after` the transmittance product behind it
            let mut rest = [T::zero(); 3];
            let mut after = T::one();
            for hit in hits.iter().rev() {
                let s = &list[hit.k];
                let b = &mut buf[hit.k];
                let wt = hit.alpha * hit.trans;
                b[6] += gc[0] * wt;
                b[7] += gc[1] * wt;
                b[8] += gc[2] * wt;
                let mut d_alpha = ga * after;
                for ch in 0..3 {
                    d_alpha += gc[ch] * (s.color[ch] - rest[ch]);
                }
                d_alpha *= hit.trans;
                for ch in 0..3 {
                    rest[ch] = s.color[ch] * hit.alpha + (T::one() - hit.alpha) * rest[ch];
                }
                after *= T::one() - hit.alpha;
                if hit.clamped {
                    continue;
                }
                b[5] += d_alpha * hit.g;
                let d_power = d_alpha * s.opacity * hit.dg;
                let [a, bb, c] = s.conic;
                b[0] += -d_power * (a * hit.dx + bb * hit.dy);
                b[1] += -d_power * (bb * hit.dx + c * hit.dy);
                b[2] += d_power * half * hit.dx * hit.dx;
                b[3] += d_power * hit.dx * hit.dy;
                b[4] += d_power * half * hit.dy * hit.dy;
            }
        }
    }
    buf
}

/// Backward of a render that used the set's own colors.
pub fn render_backward<T: Real>(
    set: &GaussianSet<T>,
    cam: &Camera<T>,
    out: &RenderOutput<T>,
    dl_dcolor: &Image<T>,
    dl_dalpha: &Image<T>,
) -> Result<BackwardResult<T>> {
    let mut res = render_backward_geometry(set, cam, out, dl_dcolor, dl_dalpha)?;
    accumulate_color_grads(set, cam, &res.d_colors, &mut res.grads);
    Ok(res)
}

/// Backward through rasterization and projection, leaving the per-splat
/// color gradients in [`BackwardResult::d_colors`] for the caller to chain
/// (used when colors were supplied externally).
pub fn render_backward_geometry<T: Real>(
    set: &GaussianSet<T>,
    cam: &Camera<T>,
    out: &RenderOutput<T>,
    dl_dcolor: &Image<T>,
    dl_dalpha: &Image<T>,
) -> Result<BackwardResult<T>> {
    if out.cache.splats.len() != set.len() {
        return Err(Error::shape(format!(
            "render holds {} splats, set has {} Gaussians",
            out.cache.splats.len(),
            set.len()
        )));
    }
    if (out.width(), out.height()) != (cam.width, cam.height) {
        return Err(Error::shape("render and camera resolution differ"));
    }
    let sg = rasterize_backward(out, dl_dcolor, dl_dalpha)?;
    let n = set.len();
    let hw = T::lit(cam.width as f64 * 0.5);
    let hh = T::lit(cam.height as f64 * 0.5);
    let per: Vec<_> = (0..n)
        .into_par_iter()
        .map(|i| {
            let d2 = sg.d_mean2d[i];
            let dc = sg.d_conic[i];
            let geo = if out.cache.splats[i].is_some()
                && (d2.iter().chain(dc.iter()).any(|&v| v != T::zero()))
            {
                Some(project_geometry_backward(&set.means[i], &set.log_scales[i], &set.quats[i], cam, d2, dc))
            } else {
                None
            };
            let o = set.opacity(i);
            let d_logit = sg.d_opacity[i] * o * (T::one() - o);
            let norm = (d2[0] * hw * d2[0] * hw + d2[1] * hh * d2[1] * hh).sqrt();
            (geo, d_logit, norm)
        })
        .collect();

    let mut grads = SetGradients::zeros_like(set);
    let mut screen_grad_norm = vec![T::zero(); n];
    for (i, (geo, d_logit, norm)) in per.into_iter().enumerate() {
        if let Some(geo) = geo {
            grads.means[i] = geo.mean;
            grads.log_scales[i] = geo.log_scale;
            grads.quats[i] = geo.quat;
        }
        grads.opacity_logits[i] = d_logit;
        screen_grad_norm[i] = norm;
    }
    Ok(BackwardResult { grads, d_colors: sg.d_color, screen_grad_norm })
}

/// Chains gradients on each Gaussian's evaluated color into its color
/// parameters and, for view-dependent colors, into its mean.
pub fn accumulate_color_grads<T: Real>(
    set: &GaussianSet<T>,
    cam: &Camera<T>,
    d_colors: &[[T; 3]],
    grads: &mut SetGradients<T>,
) {
    let dim = set.color_dim();
    match set.color_mode {
        ColorMode::Rgb => {
            for (i, d) in d_colors.iter().enumerate() {
                for ch in 0..3 {
                    grads.colors[3 * i + ch] += d[ch];
                }
            }
        }
        ColorMode::Sh { degree } => {
            for (i, d) in d_colors.iter().enumerate() {
                if d.iter().all(|&v| v == T::zero()) {
                    continue;
                }
                let dir = view_direction(&set.means[i], cam);
                let d_dir =
                    eval_sh_color_backward(set.color(i), degree, dir, *d, &mut grads.colors[i * dim..(i + 1) * dim]);
                let dm = view_direction_backward(&set.means[i], cam, d_dir);
                for k in 0..3 {
                    grads.means[i][k] += dm[k];
                }
            }
        }
    }
}
