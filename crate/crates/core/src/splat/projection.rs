//! Covariance construction, perspective projection and the screen-space
//! Gaussian kernel, with the analytic backward of the projection.

use nalgebra::{Matrix2, Matrix2x3, Matrix3, Vector2, Vector3};

use super::camera::Camera;
use super::gaussian::{ColorMode, Gaussian3D};
use super::quat::{normalize_quat, quat_to_rotation_backward, unit_quat_to_rotation};
use super::sh::eval_sh_color;
use crate::scalar::Real;

/// Added to both diagonal entries of every screen-space covariance (px²).
pub const LOW_PASS: f64 = 0.3;
/// Gaussians with camera-space depth at or below this are culled.
pub const NEAR_PLANE: f64 = 0.01;
/// Per-splat alpha ceiling before blending.
pub const ALPHA_MAX: f64 = 0.999;
/// Mahalanobis "power" `½ΔᵀΣ⁻¹Δ` at 2σ, where the kernel starts tapering.
pub const KERNEL_TAPER_START: f64 = 2.0;
/// Power at 3σ; the kernel is exactly zero beyond it.
pub const KERNEL_CUTOFF: f64 = 4.5;
/// Splat radius in standard deviations, used for tile binning.
pub const RADIUS_SIGMAS: f64 = 3.0;
/// Gaussians whose center lies outside the frustum widened by this factor
/// (about the principal point) are culled.
pub const FRUSTUM_MARGIN: f64 = 1.3;

/// A Gaussian projected to the image plane.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Splat2D<T: Real> {
    /// Pixel-space mean.
    pub mean: Vector2<T>,
    /// Screen covariance including the low-pass floor.
    pub cov: Matrix2<T>,
    /// Inverse covariance packed as `(a, b, c)` for `[[a, b], [b, c]]`.
    pub conic: [T; 3],
    /// Camera-space z.
    pub depth: T,
    pub radius: T,
    pub opacity: T,
    pub color: [T; 3],
}

/// Geometry-only part of a projection.
#[derive(Debug, Clone, Copy)]
pub struct ProjectedGeometry<T: Real> {
    pub mean: Vector2<T>,
    pub cov: Matrix2<T>,
    pub conic: [T; 3],
    pub depth: T,
    pub radius: T,
}

/// `Σ = R diag(s²) Rᵀ` with `s = exp(log_scale)` and `R` the rotation of `q`.
/// A degenerate quaternion falls back to the identity rotation.
pub fn build_covariance<T: Real>(log_scale: &[T; 3], q: &[T; 4]) -> Matrix3<T> {
    let r = normalize_quat(q).map(|(qn, _)| unit_quat_to_rotation(&qn)).unwrap_or_else(Matrix3::identity);
    let s2 = Vector3::new(
        (log_scale[0] + log_scale[0]).exp(),
        (log_scale[1] + log_scale[1]).exp(),
        (log_scale[2] + log_scale[2]).exp(),
    );
    r * Matrix3::from_diagonal(&s2) * r.transpose()
}

/// Whether camera-space point `p` (with `z > 0`) lies inside the widened
/// frustum.
#[inline]
pub fn in_frustum<T: Real>(cam: &Camera<T>, p: &Vector3<T>) -> bool {
    let margin = T::lit(FRUSTUM_MARGIN);
    let w = T::lit(cam.width as f64);
    let h = T::lit(cam.height as f64);
    let lim_x = margin * cam.cx.max(w - cam.cx) / cam.fx;
    let lim_y = margin * cam.cy.max(h - cam.cy) / cam.fy;
    (p.x / p.z).abs() <= lim_x && (p.y / p.z).abs() <= lim_y
}

/// Perspective Jacobian at camera-space point `p`.
#[inline]
fn projection_jacobian<T: Real>(cam: &Camera<T>, p: &Vector3<T>) -> Matrix2x3<T> {
    let iz = T::one() / p.z;
    let iz2 = iz * iz;
    Matrix2x3::new(cam.fx * iz, T::zero(), -cam.fx * p.x * iz2, T::zero(), cam.fy * iz, -cam.fy * p.y * iz2)
}

/// Inverse of a symmetric 2×2 matrix packed as `(a, b, c)`; `None` when not
/// positive definite.
#[inline]
pub fn conic_of<T: Real>(cov: &Matrix2<T>) -> Option<[T; 3]> {
    let det = cov[(0, 0)] * cov[(1, 1)] - cov[(0, 1)] * cov[(1, 0)];
    if !(det > T::zero()) || !(cov[(0, 0)] > T::zero()) {
        return None;
    }
    let inv = T::one() / det;
    Some([cov[(1, 1)] * inv, -cov[(0, 1)] * inv, cov[(0, 0)] * inv])
}

/// Projects mean and covariance; `None` when culled by the near plane or the
/// widened frustum, or when the quaternion is degenerate.
pub fn project_geometry<T: Real>(
    mean: &[T; 3],
    log_scale: &[T; 3],
    quat: &[T; 4],
    cam: &Camera<T>,
) -> Option<ProjectedGeometry<T>> {
    normalize_quat(quat)?;
    let p = cam.world_to_camera(&Vector3::new(mean[0], mean[1], mean[2]));
    if !(p.z > T::lit(NEAR_PLANE)) || !in_frustum(cam, &p) {
        return None;
    }
    let j = projection_jacobian(cam, &p);
    let v = cam.view_rotation();
    let sigma_cam = v * build_covariance(log_scale, quat) * v.transpose();
    let mut cov = j * sigma_cam * j.transpose();
    // exact symmetry before the floor
    let off = (cov[(0, 1)] + cov[(1, 0)]) * T::lit(0.5);
    cov[(0, 1)] = off;
    cov[(1, 0)] = off;
    cov[(0, 0)] += T::lit(LOW_PASS);
    cov[(1, 1)] += T::lit(LOW_PASS);
    let conic = conic_of(&cov)?;
    let mid = (cov[(0, 0)] + cov[(1, 1)]) * T::lit(0.5);
    let det = cov[(0, 0)] * cov[(1, 1)] - off * off;
    let lambda_max = mid + (mid * mid - det).max(T::zero()).sqrt();
    Some(ProjectedGeometry {
        mean: cam.project_camera_point(&p),
        cov,
        conic,
        depth: p.z,
        radius: T::lit(RADIUS_SIGMAS) * lambda_max.sqrt(),
    })
}

/// Unit direction from the camera center to the Gaussian mean.
#[inline]
pub fn view_direction<T: Real>(mean: &[T; 3], cam: &Camera<T>) -> [T; 3] {
    let d = Vector3::new(mean[0], mean[1], mean[2]) - cam.translation;
    let n = d.norm();
    if n > T::zero() {
        [d.x / n, d.y / n, d.z / n]
    } else {
        [T::zero(), T::zero(), T::one()]
    }
}

/// Color of a Gaussian seen from `cam` before any toning.
pub fn gaussian_color<T: Real>(g: &Gaussian3D<'_, T>, cam: &Camera<T>) -> [T; 3] {
    match g.color_mode {
        ColorMode::Rgb => [g.color[0], g.color[1], g.color[2]],
        ColorMode::Sh { degree } => eval_sh_color(g.color, degree, view_direction(g.mean, cam)),
    }
}

/// Full projection of one Gaussian, carrying its opacity and view color.
pub fn project_gaussian<T: Real>(g: &Gaussian3D<'_, T>, cam: &Camera<T>) -> Option<Splat2D<T>> {
    let geo = project_geometry(g.mean, g.log_scale, g.quat, cam)?;
    Some(Splat2D {
        mean: geo.mean,
        cov: geo.cov,
        conic: geo.conic,
        depth: geo.depth,
        radius: geo.radius,
        opacity: g.opacity(),
        color: gaussian_color(g, cam),
    })
}

/// Screen-space kernel as a function of `power = ½ΔᵀΣ⁻¹Δ`, returning the
/// value and its derivative with respect to `power`.
///
/// Equal to `exp(-power)` inside 2σ, multiplied by a quintic smootherstep
/// falloff between 2σ and 3σ, and zero beyond 3σ. The compact support is what
/// makes tile binning by the 3σ radius exact.
#[inline]
pub fn kernel<T: Real>(power: T) -> (T, T) {
    let start = T::lit(KERNEL_TAPER_START);
    let cutoff = T::lit(KERNEL_CUTOFF);
    if power >= cutoff || !power.is_finite_val() {
        return (T::zero(), T::zero());
    }
    let e = (-power).exp();
    if power <= start {
        return (e, -e);
    }
    let width = cutoff - start;
    let t = (power - start) / width;
    let t2 = t * t;
    let t3 = t2 * t;
    let smooth = t3 * (T::lit(10.0) - T::lit(15.0) * t + T::lit(6.0) * t2);
    let dsmooth = T::lit(30.0) * t2 * (T::one() - t) * (T::one() - t) / width;
    let w = T::one() - smooth;
    (e * w, -e * w - e * dsmooth)
}

#[inline]
pub fn conic_power<T: Real>(conic: &[T; 3], dx: T, dy: T) -> T {
    T::lit(0.5) * (conic[0] * dx * dx + conic[2] * dy * dy) + conic[1] * dx * dy
}

/// `α = o·K(½ΔᵀΣ′⁻¹Δ)` clamped to [`ALPHA_MAX`]; zero for a singular `Σ′`.
pub fn eval_alpha<T: Real>(opacity: T, cov: &Matrix2<T>, delta: &Vector2<T>) -> T {
    let Some(conic) = conic_of(cov) else {
        return T::zero();
    };
    let (k, _) = kernel(conic_power(&conic, delta.x, delta.y));
    (opacity * k).min(T::lit(ALPHA_MAX))
}

/// Gradient of the projection with respect to the 3D parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GeometryGrad<T: Real> {
    pub mean: [T; 3],
    pub log_scale: [T; 3],
    pub quat: [T; 4],
}

/// Pulls gradients on the screen mean and the packed conic back to the
/// Gaussian's mean, log-scale and quaternion. The conic gradient is with
/// respect to `(a, b, c)` where `b` stands for both off-diagonal entries.
pub fn project_geometry_backward<T: Real>(
    mean: &[T; 3],
    log_scale: &[T; 3],
    quat: &[T; 4],
    cam: &Camera<T>,
    d_mean2d: [T; 2],
    d_conic: [T; 3],
) -> GeometryGrad<T> {
    let zero = GeometryGrad { mean: [T::zero(); 3], log_scale: [T::zero(); 3], quat: [T::zero(); 4] };
    let Some((qn, _)) = normalize_quat(quat) else {
        return zero;
    };
    let p = cam.world_to_camera(&Vector3::new(mean[0], mean[1], mean[2]));
    if !(p.z > T::lit(NEAR_PLANE)) || !in_frustum(cam, &p) {
        return zero;
    }
    let half = T::lit(0.5);
    let two = T::lit(2.0);
    let v = cam.view_rotation();
    let rq = unit_quat_to_rotation(&qn);
    let s = Vector3::new(log_scale[0].exp(), log_scale[1].exp(), log_scale[2].exp());
    let m = rq * Matrix3::from_diagonal(&s);
    let sigma = m * m.transpose();
    let sigma_cam = v * sigma * v.transpose();
    let j = projection_jacobian(cam, &p);
    let mut cov = j * sigma_cam * j.transpose();
    let off = (cov[(0, 1)] + cov[(1, 0)]) * half;
    cov[(0, 1)] = off;
    cov[(1, 0)] = off;
    cov[(0, 0)] += T::lit(LOW_PASS);
    cov[(1, 1)] += T::lit(LOW_PASS);
    let Some(c) = conic_of(&cov) else {
        return zero;
    };
    let q = Matrix2::new(c[0], c[1], c[1], c[2]);

    // conic -> covariance: dΣ' = -Q G_Q Q
    let g_q = Matrix2::new(d_conic[0], d_conic[1] * half, d_conic[1] * half, d_conic[2]);
    let g_cov = -(q * g_q * q);
    // Σ' = J Σc Jᵀ
    let g_sigma_cam = j.transpose() * g_cov * j;
    let g_j = (g_cov * j * sigma_cam) * two;
    // Σc = V Σ Vᵀ
    let g_sigma = v.transpose() * g_sigma_cam * v;
    // Σ = M Mᵀ, M = R S
    let g_m = (g_sigma * m) * two;
    let mut d_log_scale = [T::zero(); 3];
    let mut g_r = Matrix3::zeros();
    for k in 0..3 {
        let mut ds = T::zero();
        for r in 0..3 {
            ds += rq[(r, k)] * g_m[(r, k)];
            g_r[(r, k)] = g_m[(r, k)] * s[k];
        }
        d_log_scale[k] = ds * s[k];
    }
    let d_quat = quat_to_rotation_backward(quat, &g_r);

    // mean: through the projected center and through J
    let iz = T::one() / p.z;
    let iz2 = iz * iz;
    let iz3 = iz2 * iz;
    let (fx, fy) = (cam.fx, cam.fy);
    let mut dp = Vector3::new(
        d_mean2d[0] * fx * iz,
        d_mean2d[1] * fy * iz,
        -d_mean2d[0] * fx * p.x * iz2 - d_mean2d[1] * fy * p.y * iz2,
    );
    dp.x += g_j[(0, 2)] * (-fx * iz2);
    dp.y += g_j[(1, 2)] * (-fy * iz2);
    dp.z += g_j[(0, 0)] * (-fx * iz2)
        + g_j[(0, 2)] * (two * fx * p.x * iz3)
        + g_j[(1, 1)] * (-fy * iz2)
        + g_j[(1, 2)] * (two * fy * p.y * iz3);
    let dmu = cam.rotation * dp;
    GeometryGrad { mean: [dmu.x, dmu.y, dmu.z], log_scale: d_log_scale, quat: d_quat }
}

/// Pulls a gradient on the unit view direction back to the Gaussian mean.
pub fn view_direction_backward<T: Real>(mean: &[T; 3], cam: &Camera<T>, d_dir: [T; 3]) -> [T; 3] {
    let d = Vector3::new(mean[0], mean[1], mean[2]) - cam.translation;
    let n = d.norm();
    if !(n > T::zero()) {
        return [T::zero(); 3];
    }
    let u = d / n;
    let g = Vector3::new(d_dir[0], d_dir[1], d_dir[2]);
    let r = (g - u * u.dot(&g)) / n;
    [r.x, r.y, r.z]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::splat::gaussian::GaussianSet;
    use proptest::prelude::*;

    fn axis_cam(f: f64) -> Camera<f64> {
        Camera {
            fx: f,
            fy: f,
            cx: 16.0,
            cy: 12.0,
            width: 32,
            height: 24,
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
        }
    }

    #[test]
    fn covariance_examples() {
        let id = build_covariance(&[0.0f64; 3], &[1.0, 0.0, 0.0, 0.0]);
        assert!((id - Matrix3::identity()).abs().max() < 1e-15);
        let d = build_covariance(&[2f64.ln(), 0.0, 0.0], &[1.0, 0.0, 0.0, 0.0]);
        assert!((d - Matrix3::from_diagonal(&Vector3::new(4.0, 1.0, 1.0))).abs().max() < 1e-12);
    }

    #[test]
    fn on_axis_projection() {
        let cam = axis_cam(20.0);
        let sigma = 0.1f64;
        let z = 2.0;
        let g = project_geometry(&[0.0, 0.0, z], &[sigma.ln(); 3], &[1.0, 0.0, 0.0, 0.0], &cam).unwrap();
        assert!((g.mean - Vector2::new(16.0, 12.0)).norm() < 1e-12);
        let expect = (20.0 * sigma / z).powi(2) + LOW_PASS;
        assert!((g.cov[(0, 0)] - expect).abs() < 1e-12);
        assert!((g.cov[(1, 1)] - expect).abs() < 1e-12);
        assert!(g.cov[(0, 1)].abs() < 1e-15);
        assert!((g.depth - z).abs() < 1e-15);
    }

    #[test]
    fn behind_camera_is_culled() {
        let cam = axis_cam(20.0);
        assert!(project_geometry(&[0.0, 0.0, -1.0], &[0.0; 3], &[1.0, 0.0, 0.0, 0.0], &cam).is_none());
        assert!(project_geometry(&[0.0, 0.0, 0.005], &[0.0; 3], &[1.0, 0.0, 0.0, 0.0], &cam).is_none());
    }

    #[test]
    fn alpha_examples() {
        let id = Matrix2::identity();
        assert_eq!(eval_alpha(0.7f64, &id, &Vector2::zeros()), 0.7);
        assert_eq!(eval_alpha(0.0f64, &id, &Vector2::new(0.3, -0.2)), 0.0);
        let a = eval_alpha(1.0f64, &id, &Vector2::new(1.0, 0.0));
        assert!((a - (-0.5f64).exp()).abs() < 1e-15);
        assert!((a - 0.6065).abs() < 1e-4);
        // clamp and compact support
        assert_eq!(eval_alpha(1.0f64, &id, &Vector2::zeros()), ALPHA_MAX);
        assert_eq!(eval_alpha(1.0f64, &id, &Vector2::new(3.0, 0.01)), 0.0);
        assert_eq!(eval_alpha(1.0f64, &Matrix2::zeros(), &Vector2::zeros()), 0.0);
    }

    #[test]
    fn kernel_is_continuous_and_matches_derivative() {
        for &p in &[0.1f64, 1.9999, 2.0, 2.0001, 3.0, 4.0, 4.4999] {
            let h = 1e-7;
            let fd = (kernel(p + h).0 - kernel(p - h).0) / (2.0 * h);
            assert!((fd - kernel(p).1).abs() < 1e-6, "p={p}");
        }
        assert!(kernel(4.5f64 - 1e-9).0 < 1e-12);
    }

    #[test]
    fn peak_alpha_equals_opacity() {
        let mut set = GaussianSet::<f64>::new(ColorMode::Rgb);
        set.push([0.1, -0.2, 3.0], [-1.5, -1.0, -2.0], [0.9, 0.1, 0.3, -0.2], 0.4f64.logit(), &[0.5; 3]);
        let s = project_gaussian(&set.gaussian(0), &axis_cam(30.0)).unwrap();
        assert_eq!(eval_alpha(s.opacity, &s.cov, &Vector2::zeros()), s.opacity.min(ALPHA_MAX));
    }

    fn rand_rotation(a: f64, b: f64, c: f64, d: f64) -> Matrix3<f64> {
        let (qn, _) = normalize_quat(&[a, b, c, d]).unwrap();
        unit_quat_to_rotation(&qn)
    }

    proptest! {
        #[test]
        fn covariance_is_psd_with_scale_eigenvalues(
            l0 in -3.0f64..1.0, l1 in -3.0f64..1.0, l2 in -3.0f64..1.0,
            w in -1.0f64..1.0, x in -1.0f64..1.0, y in -1.0f64..1.0, z in -1.0f64..1.0,
        ) {
            prop_assume!(w * w + x * x + y * y + z * z > 1e-2);
            let sigma = build_covariance(&[l0, l1, l2], &[w, x, y, z]);
            prop_assert!((sigma - sigma.transpose()).abs().max() < 1e-12);
            let mut eig: Vec<f64> = sigma.symmetric_eigen().eigenvalues.iter().copied().collect();
            let mut want: Vec<f64> = [l0, l1, l2].iter().map(|l| (2.0 * l).exp()).collect();
            eig.sort_by(|a, b| a.partial_cmp(b).unwrap());
            want.sort_by(|a, b| a.partial_cmp(b).unwrap());
            for (e, w) in eig.iter().zip(&want) {
                prop_assert!(*e >= -1e-12);
                prop_assert!((e - w).abs() < 1e-9 * w.max(1.0));
            }
        }

        #[test]
        fn projection_is_rigid_equivariant(
            a in -1.0f64..1.0, b in -1.0f64..1.0, c in -1.0f64..1.0, d in -1.0f64..1.0,
            tx in -5.0f64..5.0, ty in -5.0f64..5.0, tz in -5.0f64..5.0,
            qa in -1.0f64..1.0, qb in -1.0f64..1.0, qc in -1.0f64..1.0, qd in -1.0f64..1.0,
        ) {
            prop_assume!(a * a + b * b + c * c + d * d > 1e-2);
            prop_assume!(qa * qa + qb * qb + qc * qc + qd * qd > 1e-2);
            let cam = axis_cam(25.0);
            let mean = [0.3, -0.2, 2.5];
            let ls = [-1.2, -2.0, -1.6];
            let q = [qa, qb, qc, qd];
            let g0 = project_geometry(&mean, &ls, &q, &cam).unwrap();
            // apply world rigid transform x -> Qx + t to both scene and camera
            let (qw, _) = normalize_quat(&[a, b, c, d]).unwrap();
            let rot = rand_rotation(a, b, c, d);
            let shift = Vector3::new(tx, ty, tz);
            let m2 = rot * Vector3::new(mean[0], mean[1], mean[2]) + shift;
            let q2 = crate::splat::quat::quat_mul(&qw, &q);
            let mut cam2 = cam.clone();
            cam2.rotation = rot * cam.rotation;
            cam2.translation = rot * cam.translation + shift;
            let g1 = project_geometry(&[m2.x, m2.y, m2.z], &ls, &q2, &cam2).unwrap();
            prop_assert!((g0.mean - g1.mean).abs().max() < 1e-9);
            prop_assert!((g0.cov - g1.cov).abs().max() < 1e-9);
            prop_assert!((g0.depth - g1.depth).abs() < 1e-9);
        }
    }
}
