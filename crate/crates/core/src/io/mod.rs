//! Datasets, image and point-cloud files, synthetic scenes and image
//! quality metrics.

pub mod dataset;
pub mod metrics;
pub mod ply;
pub mod png;
pub mod synthetic;

pub use dataset::{load_dataset, write_dataset, Dataset, Frame, Split, MANIFEST_FILE};
pub use metrics::{psnr, ssim, PSNR_CAP};
pub use ply::{read_ply, write_ply, InitPoint};
pub use png::{read_mask_png, read_png, read_png_rgb, write_mask_png, write_png};
pub use synthetic::{generate_synthetic, mix_clutter, write_sprite_masks, SyntheticScene, SyntheticSpec};
