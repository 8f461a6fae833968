//! Dense row-major image buffers.

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Interleaved `height x width x channels` buffer.
#[derive(Debug, Clone, PartialEq)]
pub struct Image<T> {
    pub width: usize,
    pub height: usize,
    pub channels: usize,
    pub data: Vec<T>,
}

impl<T: Real> Image<T> {
    pub fn zeros(width: usize, height: usize, channels: usize) -> Self {
        Self::filled(width, height, channels, T::zero())
    }

    pub fn filled(width: usize, height: usize, channels: usize, value: T) -> Self {
        Self { width, height, channels, data: vec![value; width * height * channels] }
    }

    pub fn from_vec(width: usize, height: usize, channels: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != width * height * channels {
            return Err(Error::shape(format!(
                "buffer of {} values for a {width}x{height}x{channels} image",
                data.len()
            )));
        }
        Ok(Self { width, height, channels, data })
    }

    #[inline]
    pub fn num_pixels(&self) -> usize {
        self.width * self.height
    }

    #[inline]
    pub fn index(&self, x: usize, y: usize, c: usize) -> usize {
        (y * self.width + x) * self.channels + c
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, c: usize) -> T {
        self.data[self.index(x, y, c)]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, c: usize, v: T) {
        let i = self.index(x, y, c);
        self.data[i] = v;
    }

    pub fn pixel(&self, x: usize, y: usize) -> &[T] {
        let i = self.index(x, y, 0);
        &self.data[i..i + self.channels]
    }

    pub fn same_shape(&self, other: &Self) -> bool {
        self.width == other.width && self.height == other.height && self.channels == other.channels
    }

    pub fn check_same_shape(&self, other: &Self, what: &str) -> Result<()> {
        if self.same_shape(other) {
            Ok(())
        } else {
            Err(Error::shape(format!(
                "{what}: {}x{}x{} vs {}x{}x{}",
                self.width, self.height, self.channels, other.width, other.height, other.channels
            )))
        }
    }

    /// Columns `[x0, x1)` of every row.
    pub fn crop_columns(&self, x0: usize, x1: usize) -> Self {
        let w = x1 - x0;
        let mut data = Vec::with_capacity(w * self.height * self.channels);
        for y in 0..self.height {
            let a = self.index(x0, y, 0);
            let b = self.index(x1 - 1, y, self.channels - 1) + 1;
            data.extend_from_slice(&self.data[a..b]);
        }
        Self { width: w, height: self.height, channels: self.channels, data }
    }

    /// Box-filter downscale by an integer factor; trailing rows/columns that
    /// do not fill a whole block are dropped.
    pub fn downscale(&self, factor: usize) -> Self {
        if factor <= 1 {
            return self.clone();
        }
        let w = self.width / factor;
        let h = self.height / factor;
        let norm = T::one() / T::lit((factor * factor) as f64);
        let mut out = Self::zeros(w, h, self.channels);
        for y in 0..h {
            for x in 0..w {
                for c in 0..self.channels {
                    let mut acc = T::zero();
                    for dy in 0..factor {
                        for dx in 0..factor {
                            acc += self.get(x * factor + dx, y * factor + dy, c);
                        }
                    }
                    out.set(x, y, c, acc * norm);
                }
            }
        }
        out
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Self {
            width: self.width,
            height: self.height,
            channels: self.channels,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn cast<U: Real>(&self) -> Image<U> {
        Image {
            width: self.width,
            height: self.height,
            channels: self.channels,
            data: self.data.iter().map(|v| U::lit(v.as_f64())).collect(),
        }
    }

    /// Rounds every value to the nearest 8-bit level after clamping to [0, 1].
    pub fn quantize_u8(&self) -> Self {
        self.map(|v| T::lit((v.clamp_to(T::zero(), T::one()).as_f64() * 255.0).round() / 255.0))
    }

    pub fn max_abs_diff(&self, other: &Self) -> T {
        self.data
            .iter()
            .zip(&other.data)
            .fold(T::zero(), |m, (&a, &b)| m.max((a - b).abs()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn crop_and_downscale() {
        let data: Vec<f64> = (0..16).map(|v| v as f64).collect();
        let img = Image::from_vec(4, 4, 1, data).unwrap();
        let left = img.crop_columns(0, 2);
        assert_eq!(left.data, vec![0.0, 1.0, 4.0, 5.0, 8.0, 9.0, 12.0, 13.0]);
        let half = img.downscale(2);
        assert_eq!(half.data, vec![2.5, 4.5, 10.5, 12.5]);
    }

    #[test]
    fn from_vec_rejects_bad_length() {
        assert!(Image::<f32>::from_vec(2, 2, 3, vec![0.0; 5]).is_err());
    }
}
