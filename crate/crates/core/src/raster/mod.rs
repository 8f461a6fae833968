//! Tile-based forward rasterization of a Gaussian set and its analytic
//! backward pass.

pub mod backward;
pub mod forward;
pub mod tiles;

pub use backward::{
    accumulate_color_grads, rasterize_backward, render_backward, render_backward_geometry, BackwardResult, SplatGrads,
};
pub use forward::{
    project_set, rasterize, render_forward, render_forward_with_colors, GaussianStats, RenderCache, RenderOutput,
    TRANSMITTANCE_EPS,
};
pub use tiles::{bin_tiles, TileBinning, TILE_SIZE};
