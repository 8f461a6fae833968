//! Per-image and per-Gaussian appearance embeddings, the color toning
//! network and the spherical-harmonic background model.

pub mod mlp;

use nalgebra::DMatrix;
use rand::Rng;

pub use mlp::{Mlp, MlpCache};

use crate::image::Image;
use crate::scalar::Real;
use crate::splat::sh::{num_coeffs, sh_basis};
use crate::splat::{Camera, GaussianSet};

pub const IMAGE_EMBED_DIM: usize = 32;
pub const GAUSSIAN_EMBED_DIM: usize = 24;
pub const FOURIER_COMPONENTS: usize = 4;
pub const HIDDEN: usize = 128;
pub const BG_SH_DEGREE: usize = 4;
const BG_COEFFS: usize = num_coeffs(BG_SH_DEGREE);
const TONING_INPUT: usize = IMAGE_EMBED_DIM + GAUSSIAN_EMBED_DIM + 3;

/// `[sin(2^k π x), cos(2^k π x)]` for each coordinate normalized to the
/// bounding box, ordered by coordinate, then frequency.
pub fn fourier_features<T: Real>(p: &[T; 3], bounds: &[[T; 3]; 2]) -> [T; GAUSSIAN_EMBED_DIM] {
    let mut out = [T::zero(); GAUSSIAN_EMBED_DIM];
    for c in 0..3 {
        let span = bounds[1][c] - bounds[0][c];
        let x = if span > T::zero() { (p[c] - bounds[0][c]) / span } else { T::zero() };
        for k in 0..FOURIER_COMPONENTS {
            let a = T::lit((1u32 << k) as f64) * T::pi() * x;
            out[c * 2 * FOURIER_COMPONENTS + 2 * k] = a.sin();
            out[c * 2 * FOURIER_COMPONENTS + 2 * k + 1] = a.cos();
        }
    }
    out
}

/// Fourier features for every row of `positions`.
pub fn fourier_init<T: Real>(positions: &[[T; 3]], bounds: &[[T; 3]; 2]) -> Vec<T> {
    positions.iter().flat_map(|p| fourier_features(p, bounds)).collect()
}

/// Environment color predicted from the image embedding as degree-4 SH.
#[derive(Debug, Clone, PartialEq)]
pub struct BackgroundModel<T: Real> {
    /// `32 -> 128 -> 128 -> 128`, ReLU throughout.
    pub encoder: Mlp<T>,
    /// Zeroth-order coefficients (3).
    pub dc_head: Mlp<T>,
    /// Remaining coefficients (72), coefficient-major.
    pub rest_head: Mlp<T>,
}

/// Appearance parameters attached to the static set.
#[derive(Debug, Clone, PartialEq)]
pub struct AppearanceModel<T: Real> {
    /// `(e_j, z_i, c̄_i) -> (β, γ_raw)`.
    pub toning: Mlp<T>,
    /// One row of [`IMAGE_EMBED_DIM`] per training image.
    pub image_embeddings: Vec<T>,
    /// One row of [`GAUSSIAN_EMBED_DIM`] per static Gaussian.
    pub gaussian_embeddings: Vec<T>,
    pub background: Option<BackgroundModel<T>>,
    /// Box used to normalize positions for the Fourier features.
    pub bounds: [[T; 3]; 2],
}

impl<T: Real> AppearanceModel<T> {
    /// Image embeddings start at zero and the toning network's last layer is
    /// zero, so the initial toning is the identity.
    pub fn new(
        num_images: usize,
        static_set: &GaussianSet<T>,
        bounds: [[T; 3]; 2],
        background: bool,
        rng: &mut impl Rng,
    ) -> Self {
        let toning = Mlp::new(&[TONING_INPUT, HIDDEN, HIDDEN, 6], false, true, rng);
        let background = background.then(|| BackgroundModel {
            encoder: Mlp::new(&[IMAGE_EMBED_DIM, HIDDEN, HIDDEN, HIDDEN], true, false, rng),
            dc_head: Mlp::new(&[HIDDEN, 3], false, false, rng),
            rest_head: Mlp::new(&[HIDDEN, 3 * (BG_COEFFS - 1)], false, false, rng),
        });
        Self {
            toning,
            image_embeddings: vec![T::zero(); num_images * IMAGE_EMBED_DIM],
            gaussian_embeddings: fourier_init(&static_set.means, &bounds),
            background,
            bounds,
        }
    }

    pub fn num_images(&self) -> usize {
        self.image_embeddings.len() / IMAGE_EMBED_DIM
    }

    pub fn image_embedding(&self, j: usize) -> &[T] {
        &self.image_embeddings[j * IMAGE_EMBED_DIM..(j + 1) * IMAGE_EMBED_DIM]
    }

    /// Toned colors `γ ⊙ c + β` with `γ = exp(γ_raw)`, given the
    /// view-evaluated base colors of the static set.
    pub fn tone(&self, embedding: &[T], set: &GaussianSet<T>, base: &[[T; 3]]) -> (Vec<[T; 3]>, ToningCache<T>) {
        let n = set.len();
        assert_eq!(base.len(), n);
        assert_eq!(self.gaussian_embeddings.len(), n * GAUSSIAN_EMBED_DIM, "one embedding per Gaussian");
        let input = DMatrix::from_fn(n, TONING_INPUT, |i, k| {
            if k < IMAGE_EMBED_DIM {
                embedding[k]
            } else if k < IMAGE_EMBED_DIM + GAUSSIAN_EMBED_DIM {
                self.gaussian_embeddings[i * GAUSSIAN_EMBED_DIM + k - IMAGE_EMBED_DIM]
            } else {
                set.color(i)[k - IMAGE_EMBED_DIM - GAUSSIAN_EMBED_DIM]
            }
        });
        let mlp = self.toning.forward(input);
        let out = mlp.output();
        let mut gamma = Vec::with_capacity(n);
        let toned = (0..n)
            .map(|i| {
                let g = [0, 1, 2].map(|c| out[(i, 3 + c)].exp());
                gamma.push(g);
                [0, 1, 2].map(|c| g[c] * base[i][c] + out[(i, c)])
            })
            .collect();
        (toned, ToningCache { mlp, gamma, base: base.to_vec() })
    }

    /// Backward of [`AppearanceModel::tone`].
    pub fn tone_backward(&self, cache: &ToningCache<T>, d_toned: &[[T; 3]]) -> ToningGrads<T> {
        let n = d_toned.len();
        let d_out = DMatrix::from_fn(n, 6, |i, k| {
            if k < 3 {
                d_toned[i][k]
            } else {
                d_toned[i][k - 3] * cache.base[i][k - 3] * cache.gamma[i][k - 3]
            }
        });
        let mut d_mlp = vec![T::zero(); self.toning.num_params()];
        let d_in = self.toning.backward(&cache.mlp, &d_out, &mut d_mlp);
        let mut d_embedding = vec![T::zero(); IMAGE_EMBED_DIM];
        let mut d_gaussian_embeddings = vec![T::zero(); n * GAUSSIAN_EMBED_DIM];
        let mut d_dc = Vec::with_capacity(n);
        for i in 0..n {
            for (k, d) in d_embedding.iter_mut().enumerate() {
                *d += d_in[(i, k)];
            }
            for k in 0..GAUSSIAN_EMBED_DIM {
                d_gaussian_embeddings[i * GAUSSIAN_EMBED_DIM + k] = d_in[(i, IMAGE_EMBED_DIM + k)];
            }
            d_dc.push([0, 1, 2].map(|c| d_in[(i, IMAGE_EMBED_DIM + GAUSSIAN_EMBED_DIM + c)]));
        }
        let d_base = (0..n).map(|i| [0, 1, 2].map(|c| d_toned[i][c] * cache.gamma[i][c])).collect();
        ToningGrads { d_mlp, d_embedding, d_gaussian_embeddings, d_base, d_dc }
    }

    /// Rebuilds the per-Gaussian embeddings after the static set was
    /// reindexed: kept rows are copied, new rows get Fourier features of
    /// their own position.
    pub fn remap_gaussians(&mut self, rows: &[Option<usize>], set: &GaussianSet<T>) {
        let mut z = Vec::with_capacity(rows.len() * GAUSSIAN_EMBED_DIM);
        for (r, src) in rows.iter().enumerate() {
            match src {
                Some(s) => z.extend_from_slice(
                    &self.gaussian_embeddings[s * GAUSSIAN_EMBED_DIM..(s + 1) * GAUSSIAN_EMBED_DIM],
                ),
                None => z.extend_from_slice(&fourier_features(&set.means[r], &self.bounds)),
            }
        }
        self.gaussian_embeddings = z;
    }

    pub fn cast<U: Real>(&self) -> AppearanceModel<U> {
        let c = |v: &T| U::lit(v.as_f64());
        AppearanceModel {
            toning: self.toning.cast(),
            image_embeddings: self.image_embeddings.iter().map(c).collect(),
            gaussian_embeddings: self.gaussian_embeddings.iter().map(c).collect(),
            background: self.background.as_ref().map(|b| BackgroundModel {
                encoder: b.encoder.cast(),
                dc_head: b.dc_head.cast(),
                rest_head: b.rest_head.cast(),
            }),
            bounds: self.bounds.map(|r| r.map(|v| U::lit(v.as_f64()))),
        }
    }
}

/// Intermediates of a toning pass.
#[derive(Debug, Clone)]
pub struct ToningCache<T: Real> {
    mlp: MlpCache<T>,
    gamma: Vec<[T; 3]>,
    base: Vec<[T; 3]>,
}

/// Gradients produced by [`AppearanceModel::tone_backward`].
#[derive(Debug, Clone)]
pub struct ToningGrads<T: Real> {
    pub d_mlp: Vec<T>,
    pub d_embedding: Vec<T>,
    pub d_gaussian_embeddings: Vec<T>,
    /// With respect to the untoned view-evaluated colors.
    pub d_base: Vec<[T; 3]>,
    /// With respect to the zeroth-order color coefficients fed to the MLP.
    pub d_dc: Vec<[T; 3]>,
}

/// Intermediates of a background evaluation.
#[derive(Debug, Clone)]
pub struct BackgroundCache<T: Real> {
    enc: MlpCache<T>,
    dc: MlpCache<T>,
    rest: MlpCache<T>,
    basis: Vec<T>,
    color: Image<T>,
}

/// Gradients of the background model.
#[derive(Debug, Clone)]
pub struct BackgroundGrads<T: Real> {
    pub d_encoder: Vec<T>,
    pub d_dc_head: Vec<T>,
    pub d_rest_head: Vec<T>,
    pub d_embedding: Vec<T>,
}

impl<T: Real> BackgroundModel<T> {
    /// SH coefficients in coefficient-major layout.
    pub fn coefficients(&self, embedding: &[T]) -> Vec<T> {
        let enc = self.encoder.forward(DMatrix::from_row_slice(1, IMAGE_EMBED_DIM, embedding));
        let dc = self.dc_head.forward(enc.output().clone());
        let rest = self.rest_head.forward(enc.output().clone());
        dc.output().iter().chain(rest.output().iter()).copied().collect()
    }

    /// Per-pixel `sigmoid(SH(b, ray))` along each pixel's world ray.
    pub fn render(&self, embedding: &[T], cam: &Camera<T>) -> (Image<T>, BackgroundCache<T>) {
        let enc = self.encoder.forward(DMatrix::from_row_slice(1, IMAGE_EMBED_DIM, embedding));
        let dc = self.dc_head.forward(enc.output().clone());
        let rest = self.rest_head.forward(enc.output().clone());
        let coeffs: Vec<T> = dc.output().iter().chain(rest.output().iter()).copied().collect();
        let (w, h) = (cam.width, cam.height);
        let mut basis = vec![T::zero(); w * h * BG_COEFFS];
        let mut color = Image::zeros(w, h, 3);
        for y in 0..h {
            for x in 0..w {
                let p = y * w + x;
                let d = cam.pixel_ray(x, y);
                let b = &mut basis[p * BG_COEFFS..(p + 1) * BG_COEFFS];
                sh_basis(BG_SH_DEGREE, [d.x, d.y, d.z], b);
                for c in 0..3 {
                    let mut raw = T::zero();
                    for k in 0..BG_COEFFS {
                        raw += coeffs[3 * k + c] * b[k];
                    }
                    color.data[3 * p + c] = raw.sigmoid();
                }
            }
        }
        (color.clone(), BackgroundCache { enc, dc, rest, basis, color })
    }

    pub fn backward(&self, cache: &BackgroundCache<T>, d_color: &Image<T>) -> BackgroundGrads<T> {
        let mut d_coeffs = vec![T::zero(); 3 * BG_COEFFS];
        for p in 0..cache.color.num_pixels() {
            let b = &cache.basis[p * BG_COEFFS..(p + 1) * BG_COEFFS];
            for c in 0..3 {
                let s = cache.color.data[3 * p + c];
                let d_raw = d_color.data[3 * p + c] * s * (T::one() - s);
                if d_raw == T::zero() {
                    continue;
                }
                for k in 0..BG_COEFFS {
                    d_coeffs[3 * k + c] += d_raw * b[k];
                }
            }
        }
        let mut d_dc_head = vec![T::zero(); self.dc_head.num_params()];
        let mut d_rest_head = vec![T::zero(); self.rest_head.num_params()];
        let d_enc_a = self.dc_head.backward(&cache.dc, &DMatrix::from_row_slice(1, 3, &d_coeffs[..3]), &mut d_dc_head);
        let d_enc_b = self.rest_head.backward(
            &cache.rest,
            &DMatrix::from_row_slice(1, 3 * (BG_COEFFS - 1), &d_coeffs[3..]),
            &mut d_rest_head,
        );
        let mut d_encoder = vec![T::zero(); self.encoder.num_params()];
        let d_emb = self.encoder.backward(&cache.enc, &(d_enc_a + d_enc_b), &mut d_encoder);
        BackgroundGrads { d_encoder, d_dc_head, d_rest_head, d_embedding: d_emb.iter().copied().collect() }
    }
}
