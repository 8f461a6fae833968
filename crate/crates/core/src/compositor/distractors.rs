use nalgebra::Vector3;
use rand::Rng;

use crate::knn::knn_rms_distance;
use crate::scalar::Real;
use crate::splat::{Camera, ColorMode, GaussianSet};

/// Depth of the initialization plane in camera space.
pub const DEFAULT_RHO: f64 = 0.02;
pub const DEFAULT_COUNT: usize = 1000;
/// Initial opacity of distractor Gaussians.
pub const INIT_OPACITY: f64 = 0.1;

/// World position of the point at normalized image coordinates `(u, v)` on
/// the plane at camera-space depth `rho`: `t + R·ρ·((uW − cx)/fx, (vH − cy)/fy, 1)`.
pub fn plane_point<T: Real>(cam: &Camera<T>, u: T, v: T, rho: T) -> [T; 3] {
    let pc = Vector3::new(
        (u * T::lit(cam.width as f64) - cam.cx) / cam.fx,
        (v * T::lit(cam.height as f64) - cam.cy) / cam.fy,
        T::one(),
    ) * rho;
    let w = cam.camera_to_world(&pc);
    [w.x, w.y, w.z]
}

/// Width of the initialization plane in world units, used as the spatial
/// extent of a distractor set.
pub fn plane_extent<T: Real>(cam: &Camera<T>, rho: T) -> T {
    let w = rho * T::lit(cam.width as f64) / cam.fx;
    let h = rho * T::lit(cam.height as f64) / cam.fy;
    w.max(h)
}

/// Distractor Gaussians at the given normalized image coordinates.
pub fn init_distractors_at<T: Real>(cam: &Camera<T>, uv: &[(T, T)], rho: T, rng: &mut impl Rng) -> GaussianSet<T> {
    let means: Vec<[T; 3]> = uv.iter().map(|&(u, v)| plane_point(cam, u, v, rho)).collect();
    let dist = knn_rms_distance(&means, 3);
    let fallback = plane_extent(cam, rho) * T::lit(0.5);
    let logit = T::lit(INIT_OPACITY).logit();
    let mut set = GaussianSet::new(ColorMode::Rgb);
    for (m, d) in means.iter().zip(dist) {
        let s = if uv.len() > 1 { d.max(T::lit(1e-7)) } else { fallback };
        let rgb: [T; 3] = [0; 3].map(|_| T::lit(rng.random_range(0.0..1.0)));
        set.push(*m, [s.ln(); 3], [T::one(), T::zero(), T::zero(), T::zero()], logit, &rgb);
    }
    set
}

/// `count` distractor Gaussians on the plane at depth `rho` in front of
/// `cam`, with `(u, v)` uniform over the image.
pub fn init_distractors<T: Real>(cam: &Camera<T>, count: usize, rho: T, rng: &mut impl Rng) -> GaussianSet<T> {
    let uv: Vec<(T, T)> =
        (0..count).map(|_| (T::lit(rng.random_range(0.0..1.0)), T::lit(rng.random_range(0.0..1.0)))).collect();
    init_distractors_at(cam, &uv, rho, rng)
}
