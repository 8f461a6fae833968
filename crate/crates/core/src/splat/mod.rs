//! Geometry of anisotropic 3D Gaussians: quaternions, covariances, pinhole
//! projection, spherical-harmonic color and the screen-space kernel.

pub mod camera;
pub mod gaussian;
pub mod projection;
pub mod quat;
pub mod sh;

pub use camera::Camera;
pub use gaussian::{ColorMode, Gaussian3D, GaussianSet, SetGradients};
pub use projection::{
    build_covariance, eval_alpha, kernel, project_gaussian, project_geometry, project_geometry_backward, Splat2D,
    ALPHA_MAX, LOW_PASS, NEAR_PLANE,
};
pub use quat::quat_to_rotation;
pub use sh::eval_sh_color;
