use nalgebra::{Matrix3, Vector2, Vector3};

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Pinhole camera with a camera-to-world pose.
///
/// Camera space follows the x-right, y-down, z-forward convention. The pixel
/// `(i, j)` has its center at `(i + 0.5, j + 0.5)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Camera<T: Real> {
    pub fx: T,
    pub fy: T,
    pub cx: T,
    pub cy: T,
    pub width: usize,
    pub height: usize,
    /// Camera-to-world rotation.
    pub rotation: Matrix3<T>,
    /// Camera center in world coordinates.
    pub translation: Vector3<T>,
}

impl<T: Real> Camera<T> {
    /// Builds a camera, rejecting non-positive focal lengths and rotations that
    /// are not proper (orthonormal with determinant +1) within `tol`.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        fx: T,
        fy: T,
        cx: T,
        cy: T,
        width: usize,
        height: usize,
        rotation: Matrix3<T>,
        translation: Vector3<T>,
        tol: T,
    ) -> Result<Self> {
        if !(fx > T::zero() && fy > T::zero()) {
            return Err(Error::InvalidConfig("focal length must be positive".into()));
        }
        if width == 0 || height == 0 {
            return Err(Error::InvalidConfig("image size must be positive".into()));
        }
        check_rotation(&rotation, tol).map_err(Error::InvalidConfig)?;
        Ok(Self { fx, fy, cx, cy, width, height, rotation, translation })
    }

    /// Camera at `eye` looking at `target`; `up` is the world direction that
    /// should appear upward in the image.
    pub fn look_at(
        eye: Vector3<T>,
        target: Vector3<T>,
        up: Vector3<T>,
        focal: T,
        width: usize,
        height: usize,
    ) -> Self {
        let forward = (target - eye).normalize();
        let right = forward.cross(&up).normalize();
        let down = forward.cross(&right);
        let rotation = Matrix3::from_columns(&[right, down, forward]);
        Self {
            fx: focal,
            fy: focal,
            cx: T::lit(width as f64 * 0.5),
            cy: T::lit(height as f64 * 0.5),
            width,
            height,
            rotation,
            translation: eye,
        }
    }

    /// World-to-camera rotation (the rotational part of the view transform).
    #[inline]
    pub fn view_rotation(&self) -> Matrix3<T> {
        self.rotation.transpose()
    }

    #[inline]
    pub fn world_to_camera(&self, p: &Vector3<T>) -> Vector3<T> {
        self.rotation.tr_mul(&(p - self.translation))
    }

    #[inline]
    pub fn camera_to_world(&self, p: &Vector3<T>) -> Vector3<T> {
        self.rotation * p + self.translation
    }

    /// Pinhole projection of a camera-space point.
    #[inline]
    pub fn project_camera_point(&self, p: &Vector3<T>) -> Vector2<T> {
        Vector2::new(self.fx * p.x / p.z + self.cx, self.fy * p.y / p.z + self.cy)
    }

    /// Unit world-space direction through the center of pixel `(x, y)`.
    pub fn pixel_ray(&self, x: usize, y: usize) -> Vector3<T> {
        let half = T::lit(0.5);
        let dir_cam = Vector3::new(
            (T::lit(x as f64) + half - self.cx) / self.fx,
            (T::lit(y as f64) + half - self.cy) / self.fy,
            T::one(),
        );
        (self.rotation * dir_cam).normalize()
    }

    /// Same pose with intrinsics and resolution divided by `factor`.
    pub fn downscaled(&self, factor: usize) -> Self {
        if factor <= 1 {
            return self.clone();
        }
        let f = T::lit(factor as f64);
        Self {
            fx: self.fx / f,
            fy: self.fy / f,
            cx: self.cx / f,
            cy: self.cy / f,
            width: self.width / factor,
            height: self.height / factor,
            rotation: self.rotation,
            translation: self.translation,
        }
    }

    pub fn cast<U: Real>(&self) -> Camera<U> {
        let c = |v: T| U::lit(v.as_f64());
        Camera {
            fx: c(self.fx),
            fy: c(self.fy),
            cx: c(self.cx),
            cy: c(self.cy),
            width: self.width,
            height: self.height,
            rotation: self.rotation.map(c),
            translation: self.translation.map(c),
        }
    }
}

/// Checks `R Rᵀ = I` and `det R = +1` within `tol`.
pub fn check_rotation<T: Real>(r: &Matrix3<T>, tol: T) -> std::result::Result<(), String> {
    let err = (r * r.transpose() - Matrix3::identity()).abs().max();
    if !(err <= tol) {
        return Err(format!("rotation is not orthonormal (max |RRᵀ - I| = {err})"));
    }
    let det = r.determinant();
    if !((det - T::one()).abs() <= tol) {
        return Err(format!("rotation determinant is {det}, expected +1"));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn look_at_points_forward() {
        let cam = Camera::<f64>::look_at(
            Vector3::new(0.0, -3.0, 0.0),
            Vector3::zeros(),
            Vector3::new(0.0, 0.0, 1.0),
            50.0,
            64,
            48,
        );
        check_rotation(&cam.rotation, 1e-12).unwrap();
        let p = cam.world_to_camera(&Vector3::zeros());
        assert!((p - Vector3::new(0.0, 0.0, 3.0)).norm() < 1e-12);
        // world up projects above the principal point
        let up = cam.world_to_camera(&Vector3::new(0.0, 0.0, 1.0));
        assert!(cam.project_camera_point(&up).y < cam.cy);
    }

    #[test]
    fn rejects_reflection() {
        let r = Matrix3::new(1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, -1.0);
        let res = Camera::<f64>::new(10.0, 10.0, 5.0, 5.0, 10, 10, r, Vector3::zeros(), 1e-6);
        assert!(res.is_err());
    }
}
