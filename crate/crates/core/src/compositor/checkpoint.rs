//! Little-endian binary encoding of models.
//!
//! Integers are little-endian, every floating-point value is an IEEE 754
//! `f32`. A float array is a `u64` length followed by its elements. A
//! Gaussian set is written as
//!
//! | field          | encoding                                   |
//! |----------------|--------------------------------------------|
//! | color mode     | `u8` (0 = RGB, 1 = SH) then `u8` SH degree |
//! | count `n`      | `u64`                                      |
//! | means          | array of `3n`                              |
//! | log-scales     | array of `3n`                              |
//! | quaternions    | array of `4n` (w, x, y, z)                 |
//! | opacity logits | array of `n`                               |
//! | colors         | array of `n · color_dim`                   |
//!
//! A model is the static set, a `u64` view count and one set per view,
//! then a `u8` appearance flag. When set, it is followed by the toning
//! network, the image embeddings, the Gaussian embeddings, the bounds
//! (6 floats, min then max), a `u8` background flag and, if set, the
//! background encoder, DC head and rest head. A network is a `u64` layer
//! count, the layer sizes as `u64`s, a `u8` output-ReLU flag and its
//! parameter array.

use crate::appearance::{AppearanceModel, BackgroundModel, Mlp};
use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::splat::{ColorMode, GaussianSet};

use super::SceneModel;

#[derive(Debug, Default)]
pub struct Writer {
    buf: Vec<u8>,
}

impl Writer {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn finish(self) -> Vec<u8> {
        self.buf
    }

    pub fn bytes(&mut self, b: &[u8]) {
        self.buf.extend_from_slice(b);
    }

    pub fn u8(&mut self, v: u8) {
        self.buf.push(v);
    }

    pub fn u32(&mut self, v: u32) {
        self.bytes(&v.to_le_bytes());
    }

    pub fn u64(&mut self, v: u64) {
        self.bytes(&v.to_le_bytes());
    }

    pub fn str(&mut self, s: &str) {
        self.u64(s.len() as u64);
        self.bytes(s.as_bytes());
    }

    pub fn floats<T: Real>(&mut self, vals: impl ExactSizeIterator<Item = T>) {
        self.u64(vals.len() as u64);
        for v in vals {
            self.bytes(&v.as_f32().to_le_bytes());
        }
    }

    pub fn slice<T: Real>(&mut self, vals: &[T]) {
        self.floats(vals.iter().copied());
    }

    pub fn set<T: Real>(&mut self, s: &GaussianSet<T>) {
        match s.color_mode {
            ColorMode::Rgb => {
                self.u8(0);
                self.u8(0);
            }
            ColorMode::Sh { degree } => {
                self.u8(1);
                self.u8(degree as u8);
            }
        }
        self.u64(s.len() as u64);
        self.slice(s.means.as_flattened());
        self.slice(s.log_scales.as_flattened());
        self.slice(s.quats.as_flattened());
        self.slice(&s.opacity_logits);
        self.slice(&s.colors);
    }

    pub fn mlp<T: Real>(&mut self, m: &Mlp<T>) {
        self.u64(m.sizes.len() as u64);
        for &s in &m.sizes {
            self.u64(s as u64);
        }
        self.u8(m.relu_output as u8);
        self.slice(&m.params);
    }

    pub fn model<T: Real>(&mut self, m: &SceneModel<T>) {
        self.set(&m.static_set);
        self.u64(m.distractor_sets.len() as u64);
        for s in &m.distractor_sets {
            self.set(s);
        }
        match &m.appearance {
            None => self.u8(0),
            Some(a) => {
                self.u8(1);
                self.mlp(&a.toning);
                self.slice(&a.image_embeddings);
                self.slice(&a.gaussian_embeddings);
                self.slice(a.bounds.as_flattened());
                match &a.background {
                    None => self.u8(0),
                    Some(b) => {
                        self.u8(1);
                        self.mlp(&b.encoder);
                        self.mlp(&b.dc_head);
                        self.mlp(&b.rest_head);
                    }
                }
            }
        }
    }
}

pub struct Reader<'a> {
    data: &'a [u8],
    pos: usize,
}

fn corrupt(what: impl Into<String>) -> Error {
    Error::Checkpoint(what.into())
}

impl<'a> Reader<'a> {
    pub fn new(data: &'a [u8]) -> Self {
        Self { data, pos: 0 }
    }

    /// Fails unless every byte was consumed.
    pub fn finish(self) -> Result<()> {
        if self.pos == self.data.len() {
            Ok(())
        } else {
            Err(corrupt(format!("{} trailing bytes", self.data.len() - self.pos)))
        }
    }

    pub fn bytes(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.data.len()).ok_or_else(|| corrupt("truncated"))?;
        let s = &self.data[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    pub fn u8(&mut self) -> Result<u8> {
        Ok(self.bytes(1)?[0])
    }

    pub fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.bytes(4)?.try_into().unwrap()))
    }

    pub fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.bytes(8)?.try_into().unwrap()))
    }

    fn len(&mut self) -> Result<usize> {
        let n = self.u64()?;
        usize::try_from(n).ok().filter(|&n| n <= self.data.len()).ok_or_else(|| corrupt("length out of range"))
    }

    pub fn str(&mut self) -> Result<String> {
        let n = self.len()?;
        String::from_utf8(self.bytes(n)?.to_vec()).map_err(|_| corrupt("invalid UTF-8"))
    }

    pub fn floats<T: Real>(&mut self) -> Result<Vec<T>> {
        let n = self.len()?;
        let raw = self.bytes(n.checked_mul(4).ok_or_else(|| corrupt("length out of range"))?)?;
        Ok(raw.chunks_exact(4).map(|c| T::lit(f32::from_le_bytes(c.try_into().unwrap()) as f64)).collect())
    }

    fn floats_exact<T: Real>(&mut self, n: usize, what: &str) -> Result<Vec<T>> {
        let v = self.floats()?;
        if v.len() != n {
            return Err(corrupt(format!("{what}: expected {n} values, found {}", v.len())));
        }
        Ok(v)
    }

    pub fn set<T: Real>(&mut self) -> Result<GaussianSet<T>> {
        let mode = match (self.u8()?, self.u8()?) {
            (0, _) => ColorMode::Rgb,
            (1, d) if d <= 3 => ColorMode::Sh { degree: d as usize },
            (t, d) => return Err(corrupt(format!("unknown color mode {t}/{d}"))),
        };
        let n = self.len()?;
        let means = self.floats_exact::<T>(3 * n, "means")?;
        let scales = self.floats_exact::<T>(3 * n, "log-scales")?;
        let quats = self.floats_exact::<T>(4 * n, "quaternions")?;
        let opacity_logits = self.floats_exact(n, "opacities")?;
        let colors = self.floats_exact(n * mode.dim(), "colors")?;
        Ok(GaussianSet {
            color_mode: mode,
            means: means.chunks_exact(3).map(|c| [c[0], c[1], c[2]]).collect(),
            log_scales: scales.chunks_exact(3).map(|c| [c[0], c[1], c[2]]).collect(),
            quats: quats.chunks_exact(4).map(|c| [c[0], c[1], c[2], c[3]]).collect(),
            opacity_logits,
            colors,
        })
    }

    pub fn mlp<T: Real>(&mut self) -> Result<Mlp<T>> {
        let layers = self.len()?;
        let sizes = (0..layers).map(|_| self.len()).collect::<Result<Vec<_>>>()?;
        if sizes.len() < 2 {
            return Err(corrupt("network needs at least two layer sizes"));
        }
        let relu_output = self.u8()? != 0;
        let expected: usize = sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum();
        let params = self.floats_exact(expected, "network parameters")?;
        Ok(Mlp { sizes, relu_output, params })
    }

    pub fn model<T: Real>(&mut self) -> Result<SceneModel<T>> {
        let static_set = self.set()?;
        let views = self.len()?;
        let distractor_sets = (0..views).map(|_| self.set()).collect::<Result<Vec<_>>>()?;
        let appearance = match self.u8()? {
            0 => None,
            1 => {
                let toning = self.mlp()?;
                let image_embeddings = self.floats()?;
                let gaussian_embeddings = self.floats()?;
                let b = self.floats_exact::<T>(6, "bounds")?;
                let background = match self.u8()? {
                    0 => None,
                    1 => Some(BackgroundModel { encoder: self.mlp()?, dc_head: self.mlp()?, rest_head: self.mlp()? }),
                    f => return Err(corrupt(format!("bad background flag {f}"))),
                };
                Some(AppearanceModel {
                    toning,
                    image_embeddings,
                    gaussian_embeddings,
                    background,
                    bounds: [[b[0], b[1], b[2]], [b[3], b[4], b[5]]],
                })
            }
            f => return Err(corrupt(format!("bad appearance flag {f}"))),
        };
        Ok(SceneModel { static_set, distractor_sets, appearance })
    }
}
