use rayon::prelude::*;

use super::tiles::{bin_tiles, pack_list, TileBinning};
use crate::image::Image;
use crate::scalar::Real;
use crate::splat::projection::{conic_power, gaussian_color, kernel, project_geometry};
use crate::splat::{Camera, GaussianSet, Splat2D, ALPHA_MAX};

/// Blending stops once transmittance falls below this.
pub const TRANSMITTANCE_EPS: f64 = 1e-4;

/// Per-Gaussian statistics gathered by a forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianStats<T: Real> {
    /// Screen radius in pixels; zero when culled or off-screen.
    pub radius: Vec<T>,
    /// Number of pixels the Gaussian was blended into.
    pub contributions: Vec<u32>,
}

/// Intermediates needed by the backward pass.
#[derive(Debug, Clone)]
pub struct RenderCache<T: Real> {
    pub splats: Vec<Option<Splat2D<T>>>,
    pub binning: TileBinning,
    /// Number of tile-list entries each pixel walked before stopping.
    pub n_walked: Vec<u32>,
}

/// Premultiplied color and accumulated alpha of one Gaussian set, no
/// background.
#[derive(Debug, Clone)]
pub struct RenderOutput<T: Real> {
    pub color: Image<T>,
    pub alpha: Image<T>,
    pub stats: GaussianStats<T>,
    pub cache: RenderCache<T>,
}

impl<T: Real> RenderOutput<T> {
    pub fn width(&self) -> usize {
        self.color.width
    }

    pub fn height(&self) -> usize {
        self.color.height
    }
}

/// Projects every Gaussian, taking colors from `colors` when given (toned
/// colors) and from the set's own color model otherwise.
pub fn project_set<T: Real>(
    set: &GaussianSet<T>,
    cam: &Camera<T>,
    colors: Option<&[[T; 3]]>,
) -> Vec<Option<Splat2D<T>>> {
    (0..set.len())
        .into_par_iter()
        .map(|i| {
            let g = set.gaussian(i);
            let geo = project_geometry(g.mean, g.log_scale, g.quat, cam)?;
            let color = match colors {
                Some(c) => c[i],
                None => gaussian_color(&g, cam),
            };
            Some(Splat2D {
                mean: geo.mean,
                cov: geo.cov,
                conic: geo.conic,
                depth: geo.depth,
                radius: geo.radius,
                opacity: g.opacity(),
                color,
            })
        })
        .collect()
}

/// Renders a Gaussian set with its own colors.
pub fn render_forward<T: Real>(set: &GaussianSet<T>, cam: &Camera<T>) -> RenderOutput<T> {
    rasterize(project_set(set, cam, None), cam.width, cam.height)
}

/// Renders with externally supplied per-Gaussian colors.
pub fn render_forward_with_colors<T: Real>(
    set: &GaussianSet<T>,
    cam: &Camera<T>,
    colors: &[[T; 3]],
) -> RenderOutput<T> {
    assert_eq!(colors.len(), set.len(), "one color per Gaussian");
    rasterize(project_set(set, cam, Some(colors)), cam.width, cam.height)
}

struct TileForward<T> {
    color: Vec<T>,
    alpha: Vec<T>,
    walked: Vec<u32>,
    contributions: Vec<u32>,
}

/// Front-to-back blending of already projected splats.
pub fn rasterize<T: Real>(splats: Vec<Option<Splat2D<T>>>, width: usize, height: usize) -> RenderOutput<T> {
    let binning = bin_tiles(&splats, width, height);
    let tiles: Vec<TileForward<T>> =
        (0..binning.num_tiles()).into_par_iter().map(|t| forward_tile(&splats, &binning, t)).collect();

    let n = splats.len();
    let mut color = Image::zeros(width, height, 3);
    let mut alpha = Image::zeros(width, height, 1);
    let mut n_walked = vec![0u32; width * height];
    let mut contributions = vec![0u32; n];
    let mut touched = vec![false; n];
    for (t, tile) in tiles.iter().enumerate() {
        let (x0, x1, y0, y1) = binning.tile_bounds(t);
        let tw = x1 - x0;
        for y in y0..y1 {
            for x in x0..x1 {
                let local = (y - y0) * tw + (x - x0);
                let p = y * width + x;
                color.data[3 * p..3 * p + 3].copy_from_slice(&tile.color[3 * local..3 * local + 3]);
                alpha.data[p] = tile.alpha[local];
                n_walked[p] = tile.walked[local];
            }
        }
        for (k, &gi) in binning.lists[t].iter().enumerate() {
            contributions[gi as usize] += tile.contributions[k];
            touched[gi as usize] = true;
        }
    }
    let radius = splats
        .iter()
        .enumerate()
        .map(|(i, s)| match s {
            Some(s) if touched[i] => s.radius,
            _ => T::zero(),
        })
        .collect();
    RenderOutput {
        color,
        alpha,
        stats: GaussianStats { radius, contributions },
        cache: RenderCache { splats, binning, n_walked },
    }
}

fn forward_tile<T: Real>(splats: &[Option<Splat2D<T>>], binning: &TileBinning, t: usize) -> TileForward<T> {
    let (x0, x1, y0, y1) = binning.tile_bounds(t);
    let list = pack_list(splats, &binning.lists[t]);
    let npx = (x1 - x0) * (y1 - y0);
    let mut out = TileForward {
        color: vec![T::zero(); 3 * npx],
        alpha: vec![T::zero(); npx],
        walked: vec![0; npx],
        contributions: vec![0; list.len()],
    };
    let half = T::lit(0.5);
    let alpha_max = T::lit(ALPHA_MAX);
    let eps = T::lit(TRANSMITTANCE_EPS);
    let mut local = 0;
    for y in y0..y1 {
        let py = T::lit(y as f64) + half;
        for x in x0..x1 {
            let px = T::lit(x as f64) + half;
            let mut trans = T::one();
            let mut c = [T::zero(); 3];
            let mut walked = 0u32;
            for (k, s) in list.iter().enumerate() {
                walked = k as u32 + 1;
                let (g, _) = kernel(conic_power(&s.conic, px - s.mean[0], py - s.mean[1]));
                if g <= T::zero() {
                    continue;
                }
                let a = (s.opacity * g).min(alpha_max);
                if a <= T::zero() {
                    continue;
                }
                let w = a * trans;
                c[0] += s.color[0] * w;
                c[1] += s.color[1] * w;
                c[2] += s.color[2] * w;
                trans *= T::one() - a;
                out.contributions[k] += 1;
                if trans < eps {
                    break;
                }
            }
            out.color[3 * local..3 * local + 3].copy_from_slice(&c);
            out.alpha[local] = T::one() - trans;
            out.walked[local] = walked;
            local += 1;
        }
    }
    out
}
