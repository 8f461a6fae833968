pub mod appearance;
pub mod compositor;
pub mod error;
pub mod image;
pub mod io;
pub mod knn;
pub mod losses;
pub mod raster;
pub mod scalar;
pub mod splat;
pub mod trainer;

pub use error::{Error, Result};
pub use nalgebra;
pub use scalar::Real;

pub type GaussianSet32 = splat::GaussianSet<f32>;
pub type GaussianSet64 = splat::GaussianSet<f64>;
pub type Camera32 = splat::Camera<f32>;
pub type Camera64 = splat::Camera<f64>;
pub type Image32 = image::Image<f32>;
pub type Image64 = image::Image<f64>;
pub type SceneModel32 = compositor::SceneModel<f32>;
pub type SceneModel64 = compositor::SceneModel<f64>;
pub type Trainer32 = trainer::Trainer<f32>;
pub type Trainer64 = trainer::Trainer<f64>;
