use crate::scalar::Real;
use crate::splat::Splat2D;

pub const TILE_SIZE: usize = 8;

/// Per-tile lists of splat indices, each in global depth order.
#[derive(Debug, Clone, PartialEq)]
pub struct TileBinning {
    pub tile_size: usize,
    pub tiles_x: usize,
    pub tiles_y: usize,
    pub width: usize,
    pub height: usize,
    pub lists: Vec<Vec<u32>>,
}

impl TileBinning {
    pub fn num_tiles(&self) -> usize {
        self.tiles_x * self.tiles_y
    }

    /// Pixel bounds `[x0, x1) x [y0, y1)` of tile `t`.
    pub fn tile_bounds(&self, t: usize) -> (usize, usize, usize, usize) {
        let tx = t % self.tiles_x;
        let ty = t / self.tiles_x;
        let x0 = tx * self.tile_size;
        let y0 = ty * self.tile_size;
        (x0, (x0 + self.tile_size).min(self.width), y0, (y0 + self.tile_size).min(self.height))
    }
}

/// The fields of a splat the per-pixel loops read, stored contiguously in
/// tile-list order.
#[derive(Debug, Clone, Copy)]
pub(crate) struct PackedSplat<T> {
    pub mean: [T; 2],
    pub conic: [T; 3],
    pub opacity: T,
    pub color: [T; 3],
}

pub(crate) fn pack_list<T: Real>(splats: &[Option<Splat2D<T>>], list: &[u32]) -> Vec<PackedSplat<T>> {
    list.iter()
        .map(|&gi| {
            let s = splats[gi as usize].as_ref().expect("binned splats are visible");
            PackedSplat { mean: [s.mean.x, s.mean.y], conic: s.conic, opacity: s.opacity, color: s.color }
        })
        .collect()
}

/// Indices of visible splats sorted by depth, ties broken by index.
pub fn depth_order<T: Real>(splats: &[Option<Splat2D<T>>]) -> Vec<u32> {
    let mut order: Vec<u32> = (0..splats.len() as u32).filter(|&i| splats[i as usize].is_some()).collect();
    order.sort_by(|&a, &b| {
        let da = splats[a as usize].as_ref().unwrap().depth;
        let db = splats[b as usize].as_ref().unwrap().depth;
        da.partial_cmp(&db).unwrap_or(std::cmp::Ordering::Equal).then(a.cmp(&b))
    });
    order
}

/// Assigns every splat to each tile its radius-`r` disc can touch.
///
/// The pixel-center footprint test is conservative: a tile is included when
/// the disc's bounding box overlaps the tile's pixel area.
pub fn bin_tiles<T: Real>(splats: &[Option<Splat2D<T>>], width: usize, height: usize) -> TileBinning {
    bin_tiles_sized(splats, width, height, TILE_SIZE)
}

pub fn bin_tiles_sized<T: Real>(
    splats: &[Option<Splat2D<T>>],
    width: usize,
    height: usize,
    tile_size: usize,
) -> TileBinning {
    let tiles_x = width.div_ceil(tile_size);
    let tiles_y = height.div_ceil(tile_size);
    let mut lists = vec![Vec::new(); tiles_x * tiles_y];
    for idx in depth_order(splats) {
        let s = splats[idx as usize].as_ref().unwrap();
        if let Some((tx0, tx1, ty0, ty1)) = tile_range(s, width, height, tile_size) {
            for ty in ty0..ty1 {
                for tx in tx0..tx1 {
                    lists[ty * tiles_x + tx].push(idx);
                }
            }
        }
    }
    TileBinning { tile_size, tiles_x, tiles_y, width, height, lists }
}

/// Half-open tile index range covered by the splat, or `None` if the splat
/// misses the image entirely.
fn tile_range<T: Real>(s: &Splat2D<T>, width: usize, height: usize, tile: usize) -> Option<(usize, usize, usize, usize)> {
    let r = s.radius.as_f64();
    let (mx, my) = (s.mean.x.as_f64(), s.mean.y.as_f64());
    if !(r > 0.0) || !mx.is_finite() || !my.is_finite() {
        return None;
    }
    let (x_lo, x_hi) = (mx - r, mx + r);
    let (y_lo, y_hi) = (my - r, my + r);
    if x_hi < 0.0 || y_hi < 0.0 || x_lo >= width as f64 || y_lo >= height as f64 {
        return None;
    }
    let ts = tile as f64;
    let tx0 = (x_lo.max(0.0) / ts).floor() as usize;
    let ty0 = (y_lo.max(0.0) / ts).floor() as usize;
    let tx1 = ((x_hi / ts).floor() as usize + 1).min(width.div_ceil(tile));
    let ty1 = ((y_hi / ts).floor() as usize + 1).min(height.div_ceil(tile));
    (tx0 < tx1 && ty0 < ty1).then_some((tx0, tx1, ty0, ty1))
}
